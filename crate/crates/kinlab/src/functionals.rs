//! Single- and two-particle phase-space functionals, blind-cone geometry, and
//! the O(N^2) pair-reduction engine with an unbiased subsampled estimator.
//!
//! Pair sums run over ordered pairs. Every term here is symmetric under
//! swapping the pair, so the exact engine evaluates the strict upper triangle
//! once, doubles it (exact in floating point), and adds the diagonal
//! contribution the selector calls for. Ordered pairs closer than [`EPS_X`]
//! contribute zero to the terms whose integrand needs a pair direction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{Ensemble, PhaseSnapshot};
use crate::reduce::{fold_indices, fold_pairs, DEFAULT_CHUNK};
use crate::rng;

/// Pairs closer than this (in length units) have no usable direction; terms
/// that divide by |dx| treat them as zero contributions.
pub const EPS_X: f64 = 1e-12;

/// Parameters of a punctured blind cone and its separation radius.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ConeSpec {
    /// Apex half-angle c, radians, in (0, pi/2).
    pub apex_angle: f64,
    /// Puncture speed v > 0: relative speeds below v always count as blind.
    pub puncture_speed: f64,
    /// Separation radius R > 0 used by the far-pair analysis.
    pub separation_radius: f64,
}

impl ConeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.apex_angle > 0.0 && self.apex_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::config("cone apex_angle must lie in (0, pi/2)"));
        }
        if !(self.puncture_speed > 0.0) {
            return Err(Error::config("cone puncture_speed must be > 0"));
        }
        if !(self.separation_radius > 0.0) {
            return Err(Error::config("cone separation_radius must be > 0"));
        }
        Ok(())
    }

    /// Lower bound R * v * (1 - cos c) for the pair gap on far non-blind
    /// pairs; must stay away from underflow for the concentration check.
    pub fn gap_floor(&self) -> f64 {
        self.separation_radius * self.puncture_speed * (1.0 - self.apex_angle.cos())
    }
}

/// How pair reductions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Exact,
    Subsample,
}

/// Pair-reduction strategy: exact deterministic tiles or an unbiased
/// uniformly-subsampled estimate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairReduceStrategy {
    #[serde(default)]
    pub kind: StrategyKind,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
    /// Ordered pairs drawn per evaluation in subsample mode.
    #[serde(default = "default_pairs_per_eval")]
    pub pairs_per_eval: u64,
    /// Label of the random stream the subsampler draws from.
    #[serde(default = "default_stream_label")]
    pub stream_label: String,
}

fn default_chunk() -> usize {
    DEFAULT_CHUNK
}

fn default_pairs_per_eval() -> u64 {
    65_536
}

fn default_stream_label() -> String {
    "pairs".to_string()
}

impl Default for PairReduceStrategy {
    fn default() -> Self {
        PairReduceStrategy {
            kind: StrategyKind::Exact,
            chunk_size: default_chunk(),
            pairs_per_eval: default_pairs_per_eval(),
            stream_label: default_stream_label(),
        }
    }
}

impl PairReduceStrategy {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs_per_eval < 1 {
            return Err(Error::config("strategy.pairs_per_eval must be >= 1"));
        }
        if self.chunk_size < 1 {
            return Err(Error::config("strategy.chunk_size must be >= 1"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// geometry
// ---------------------------------------------------------------------------

/// Angle between two vectors via atan2(|u x v|, u.v), stable near 0 and pi.
pub fn angle_between(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let cross2 = cross_norm_sq(u, v);
    cross2.sqrt().atan2(dot)
}

fn cross_norm_sq(u: &[f64], v: &[f64]) -> f64 {
    match u.len() {
        2 => {
            let c = u[0] * v[1] - u[1] * v[0];
            c * c
        }
        3 => {
            let c0 = u[1] * v[2] - u[2] * v[1];
            let c1 = u[2] * v[0] - u[0] * v[2];
            let c2 = u[0] * v[1] - u[1] * v[0];
            c0 * c0 + c1 * c1 + c2 * c2
        }
        _ => unreachable!("dimension is 2 or 3"),
    }
}

/// Double-sided cone test: theta(dx, dxi) outside [c, pi-c], i.e.
/// |cos theta| > cos c, evaluated as dot^2 > cos^2(c) |dx|^2 |dxi|^2 so the
/// O(N^2) path never computes an angle. `dxi = 0` counts as theta = 0.
#[inline(always)]
fn outside_band(dot: f64, nx2: f64, nv2: f64, cos2_c: f64) -> bool {
    dot * dot > cos2_c * nx2 * nv2 || nv2 == 0.0
}

/// Is `xi` in the blind cone at `x` for an observer at `x0` moving with
/// `xi0`? The cone is double-sided: directions within the apex angle of the
/// line through `x - x0`. `xi == xi0` counts as inside; `x == x0` has no
/// defined direction and is an error.
pub fn in_blind_cone(x0: &[f64], xi0: &[f64], x: &[f64], xi: &[f64], c: f64) -> Result<bool> {
    if !(c > 0.0 && c < std::f64::consts::FRAC_PI_2) {
        return Err(Error::domain("apex angle must lie in (0, pi/2)"));
    }
    let n = x0.len();
    if n != xi0.len() || n != x.len() || n != xi.len() || !(2..=3).contains(&n) {
        return Err(Error::domain("mismatched vector dimensions"));
    }
    let mut nx2 = 0.0;
    let mut nv2 = 0.0;
    let mut dot = 0.0;
    for k in 0..n {
        let dx = x[k] - x0[k];
        let dv = xi[k] - xi0[k];
        nx2 += dx * dx;
        nv2 += dv * dv;
        dot += dx * dv;
    }
    if nx2 == 0.0 {
        return Err(Error::domain("blind cone undefined for x == x0"));
    }
    let cos_c = c.cos();
    Ok(outside_band(dot, nx2, nv2, cos_c * cos_c))
}

/// Punctured blind cone: the blind cone united with the open relative-speed
/// ball |xi - xi0| < v. Handles `x == x0` (membership decided by the ball
/// alone).
pub fn in_punctured_cone(
    x0: &[f64],
    xi0: &[f64],
    x: &[f64],
    xi: &[f64],
    cone: &ConeSpec,
) -> Result<bool> {
    cone.validate()?;
    let n = x0.len();
    if n != xi0.len() || n != x.len() || n != xi.len() || !(2..=3).contains(&n) {
        return Err(Error::domain("mismatched vector dimensions"));
    }
    let mut nx2 = 0.0;
    let mut nv2 = 0.0;
    let mut dot = 0.0;
    for k in 0..n {
        let dx = x[k] - x0[k];
        let dv = xi[k] - xi0[k];
        nx2 += dx * dx;
        nv2 += dv * dv;
        dot += dx * dv;
    }
    if nv2 < cone.puncture_speed * cone.puncture_speed {
        return Ok(true);
    }
    if nx2 == 0.0 {
        return Ok(false);
    }
    let cos_c = cone.apex_angle.cos();
    Ok(outside_band(dot, nx2, nv2, cos_c * cos_c))
}

// ---------------------------------------------------------------------------
// single-particle functionals
// ---------------------------------------------------------------------------

fn require_nonempty(ens: &Ensemble) -> Result<()> {
    if ens.is_empty() {
        Err(Error::domain("functional of an empty ensemble"))
    } else {
        Ok(())
    }
}

/// A(t) = sum_i w_i x_i . xi_i.
pub fn angular_momentum(ens: &Ensemble) -> Result<f64> {
    require_nonempty(ens)?;
    let snap = ens.snapshot();
    let n = snap.n;
    Ok(fold_indices(ens.len(), DEFAULT_CHUNK, || 0.0, |acc, i| {
        let mut dot = 0.0;
        for k in 0..n {
            dot += snap.x[i * n + k] * snap.xi[i * n + k];
        }
        *acc += snap.w[i] * dot;
    }))
}

/// U(t) = sum_i w_i |x_i| |xi_i| >= A(t) pointwise.
pub fn uncertainty(ens: &Ensemble) -> Result<f64> {
    require_nonempty(ens)?;
    let snap = ens.snapshot();
    let n = snap.n;
    Ok(fold_indices(ens.len(), DEFAULT_CHUNK, || 0.0, |acc, i| {
        let mut nx2 = 0.0;
        let mut nv2 = 0.0;
        for k in 0..n {
            nx2 += snap.x[i * n + k] * snap.x[i * n + k];
            nv2 += snap.xi[i * n + k] * snap.xi[i * n + k];
        }
        *acc += snap.w[i] * (nx2 * nv2).sqrt();
    }))
}

/// One slice of the bounded-set energy integrand: sum of w |xi|^2 over
/// particles inside the centered ball of radius `d_radius`.
pub fn morawetz_increment(ens: &Ensemble, d_radius: f64) -> Result<f64> {
    require_nonempty(ens)?;
    if !(d_radius > 0.0) {
        return Err(Error::domain("morawetz_increment requires d_radius > 0"));
    }
    let snap = ens.snapshot();
    let n = snap.n;
    let r2 = d_radius * d_radius;
    Ok(fold_indices(ens.len(), DEFAULT_CHUNK, || 0.0, |acc, i| {
        let mut nx2 = 0.0;
        let mut nv2 = 0.0;
        for k in 0..n {
            nx2 += snap.x[i * n + k] * snap.x[i * n + k];
            nv2 += snap.xi[i * n + k] * snap.xi[i * n + k];
        }
        if nx2 <= r2 {
            *acc += snap.w[i] * nv2;
        }
    }))
}

// ---------------------------------------------------------------------------
// pair terms
// ---------------------------------------------------------------------------

/// Selector for one pair functional. Self-pair conventions: the localized
/// angular momentum and the angular-flux integrand exclude the diagonal (the
/// EPS_X rule makes those terms vanish there anyway); the gamma mass counts
/// self-pairs at w_i^2 (a particle always sits in its own puncture ball); all
/// remaining selectors include diagonal terms, which are identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairTerm {
    /// w_i w_j (dx/|dx|) . dxi
    LocalizedAngularMomentum,
    /// w_i w_j dx . dxi
    RelativeDot,
    /// w_i w_j |dxi|^2
    RelativeEnergy,
    /// w_i w_j |dx| |dxi|
    InteractionUncertainty,
    /// w_i w_j (|dx||dxi| - dx . dxi), clamped at zero per pair
    Gap,
    /// w_i w_j (|dx|^2 + |dxi|^2 - dx . dxi)
    GapInitialBound,
    /// w_i w_j [xi_i in punctured cone of (x_j, xi_j)]
    GammaMass(ConeSpec),
    /// (1/R) w_i w_j |dxi|^2 on pairs with |dx| <= R
    InteractionMorawetz { radius: f64 },
    /// w_i w_j |dxi|^2 sin^2(theta(dx, dxi)) / |dx|
    AlDerivative,
}

/// Pair term with its constants precomputed for the hot loop.
#[derive(Debug, Clone, Copy)]
enum Op {
    LocalizedAngularMomentum,
    RelativeDot,
    RelativeEnergy,
    InteractionUncertainty,
    Gap,
    GapInitialBound,
    GammaMass { v2: f64, cos2: f64 },
    InteractionMorawetz { r2: f64, inv_r: f64 },
    AlDerivative,
}

impl Op {
    fn compile(term: &PairTerm) -> Result<Op> {
        Ok(match term {
            PairTerm::LocalizedAngularMomentum => Op::LocalizedAngularMomentum,
            PairTerm::RelativeDot => Op::RelativeDot,
            PairTerm::RelativeEnergy => Op::RelativeEnergy,
            PairTerm::InteractionUncertainty => Op::InteractionUncertainty,
            PairTerm::Gap => Op::Gap,
            PairTerm::GapInitialBound => Op::GapInitialBound,
            PairTerm::GammaMass(cone) => {
                cone.validate()?;
                let cos_c = cone.apex_angle.cos();
                Op::GammaMass {
                    v2: cone.puncture_speed * cone.puncture_speed,
                    cos2: cos_c * cos_c,
                }
            }
            PairTerm::InteractionMorawetz { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::domain("interaction Morawetz radius must be > 0"));
                }
                Op::InteractionMorawetz {
                    r2: radius * radius,
                    inv_r: 1.0 / radius,
                }
            }
            PairTerm::AlDerivative => Op::AlDerivative,
        })
    }

    #[inline(always)]
    fn eval(&self, g: &PairGeom, wprod: f64) -> f64 {
        const EPS2: f64 = EPS_X * EPS_X;
        match *self {
            Op::LocalizedAngularMomentum => {
                if g.nx2 < EPS2 {
                    0.0
                } else {
                    wprod * g.dot / g.nx2.sqrt()
                }
            }
            Op::RelativeDot => wprod * g.dot,
            Op::RelativeEnergy => wprod * g.nv2,
            Op::InteractionUncertainty => wprod * (g.nx2 * g.nv2).sqrt(),
            Op::Gap => wprod * ((g.nx2 * g.nv2).sqrt() - g.dot).max(0.0),
            Op::GapInitialBound => wprod * (g.nx2 + g.nv2 - g.dot),
            Op::GammaMass { v2, cos2 } => {
                let inside = if g.nv2 < v2 {
                    true
                } else if g.nx2 < EPS2 {
                    false
                } else {
                    outside_band(g.dot, g.nx2, g.nv2, cos2)
                };
                if inside {
                    wprod
                } else {
                    0.0
                }
            }
            Op::InteractionMorawetz { r2, inv_r } => {
                if g.nx2 <= r2 {
                    wprod * g.nv2 * inv_r
                } else {
                    0.0
                }
            }
            Op::AlDerivative => {
                if g.nx2 < EPS2 {
                    0.0
                } else {
                    wprod * g.cross2 / (g.nx2 * g.nx2.sqrt())
                }
            }
        }
    }

    /// Diagonal contribution of the full ordered-pair sum.
    fn diagonal(&self, w: &[f64]) -> f64 {
        match self {
            Op::GammaMass { .. } => w.iter().map(|wi| wi * wi).sum(),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PairGeom {
    nx2: f64,
    nv2: f64,
    dot: f64,
    cross2: f64,
}

#[inline(always)]
fn pair_geom<const D: usize>(x: &[f64], xi: &[f64], i: usize, j: usize) -> PairGeom {
    let mut dx = [0.0f64; D];
    let mut dv = [0.0f64; D];
    for k in 0..D {
        dx[k] = x[i * D + k] - x[j * D + k];
        dv[k] = xi[i * D + k] - xi[j * D + k];
    }
    let mut nx2 = 0.0;
    let mut nv2 = 0.0;
    let mut dot = 0.0;
    for k in 0..D {
        nx2 += dx[k] * dx[k];
        nv2 += dv[k] * dv[k];
        dot += dx[k] * dv[k];
    }
    let cross2 = if D == 2 {
        let c = dx[0] * dv[1] - dx[1] * dv[0];
        c * c
    } else {
        let c0 = dx[1 % D] * dv[2 % D] - dx[2 % D] * dv[1 % D];
        let c1 = dx[2 % D] * dv[0] - dx[0] * dv[2 % D];
        let c2 = dx[0] * dv[1 % D] - dx[1 % D] * dv[0];
        c0 * c0 + c1 * c1 + c2 * c2
    };
    PairGeom {
        nx2,
        nv2,
        dot,
        cross2,
    }
}

fn reduce_exact_d<const D: usize>(snap: &PhaseSnapshot<'_>, ops: &[Op], chunk: usize) -> Vec<f64> {
    let count = snap.w.len();
    let x: &[f64] = &snap.x;
    let xi = snap.xi;
    let w = snap.w;
    let width = ops.len();
    let mut sums: Vec<f64> = fold_pairs(
        count,
        chunk,
        || vec![0.0; width],
        |acc, i, j| {
            let g = pair_geom::<D>(x, xi, i, j);
            let wprod = w[i] * w[j];
            for (slot, op) in acc.iter_mut().zip(ops) {
                *slot += op.eval(&g, wprod);
            }
        },
    );
    // Ordered-pair total: double the strict triangle, add the diagonal.
    for (slot, op) in sums.iter_mut().zip(ops) {
        *slot = 2.0 * *slot + op.diagonal(w);
    }
    sums
}

fn reduce_exact(snap: &PhaseSnapshot<'_>, ops: &[Op], chunk: usize) -> Vec<f64> {
    match snap.n {
        2 => reduce_exact_d::<2>(snap, ops, chunk),
        3 => reduce_exact_d::<3>(snap, ops, chunk),
        _ => unreachable!("dimension is validated at construction"),
    }
}

/// Uniform ordered-pair subsample (diagonal included; the term formulas
/// already encode each selector's diagonal convention). Returns per-op
/// estimates and standard errors.
fn reduce_subsample(
    snap: &PhaseSnapshot<'_>,
    ops: &[Op],
    pairs: u64,
    stream: &mut rng::Stream,
) -> (Vec<f64>, Vec<f64>) {
    let count = snap.w.len();
    let domain = (count as f64) * (count as f64);
    let width = ops.len();
    let mut s1 = vec![0.0f64; width];
    let mut s2 = vec![0.0f64; width];
    for _ in 0..pairs {
        let i = stream.random_range(0..count);
        let j = stream.random_range(0..count);
        let g = match snap.n {
            2 => pair_geom::<2>(&snap.x, snap.xi, i, j),
            _ => pair_geom::<3>(&snap.x, snap.xi, i, j),
        };
        let wprod = snap.w[i] * snap.w[j];
        for (k, op) in ops.iter().enumerate() {
            let t = op.eval(&g, wprod);
            s1[k] += t;
            s2[k] += t * t;
        }
    }
    let k = pairs as f64;
    let mut est = vec![0.0f64; width];
    let mut se = vec![f64::NAN; width];
    for idx in 0..width {
        let mean = s1[idx] / k;
        est[idx] = domain * mean;
        if pairs >= 2 {
            let var = ((s2[idx] - s1[idx] * s1[idx] / k) / (k - 1.0)).max(0.0);
            se[idx] = domain * (var / k).sqrt();
        }
    }
    (est, se)
}

fn subsample_stream(ens: &Ensemble, label: &str, tag: u64) -> rng::Stream {
    rng::stream(
        ens.seed_lineage.master_seed,
        &format!("subsample/{label}"),
        &[ens.time().to_bits(), tag],
    )
}

/// Shared engine behind all pair functionals: deterministic chunked O(N^2)
/// reduction, or an unbiased subsampled estimate with its standard error.
/// Subsampling with `pairs_per_eval` at or above the ordered-pair count falls
/// back to the exact path.
pub fn pair_reduce(
    ens: &Ensemble,
    term: PairTerm,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    require_nonempty(ens)?;
    strategy.validate()?;
    let op = Op::compile(&term)?;
    let snap = ens.snapshot();
    match strategy.kind {
        StrategyKind::Exact => {
            let sums = reduce_exact(&snap, &[op], strategy.chunk_size);
            Ok((sums[0], None))
        }
        StrategyKind::Subsample => {
            let count = ens.len() as u64;
            if strategy.pairs_per_eval >= count.saturating_mul(count) {
                log::info!(
                    "pairs_per_eval {} covers all {} ordered pairs; using exact reduction",
                    strategy.pairs_per_eval,
                    count * count
                );
                let sums = reduce_exact(&snap, &[op], strategy.chunk_size);
                return Ok((sums[0], None));
            }
            let mut stream = subsample_stream(ens, &strategy.stream_label, term_tag(&term));
            let (est, se) = reduce_subsample(&snap, &[op], strategy.pairs_per_eval, &mut stream);
            let se = if se[0].is_nan() { None } else { Some(se[0]) };
            Ok((est[0], se))
        }
    }
}

fn term_tag(term: &PairTerm) -> u64 {
    match term {
        PairTerm::LocalizedAngularMomentum => 1,
        PairTerm::RelativeDot => 2,
        PairTerm::RelativeEnergy => 3,
        PairTerm::InteractionUncertainty => 4,
        PairTerm::Gap => 5,
        PairTerm::GapInitialBound => 6,
        PairTerm::GammaMass(_) => 7,
        PairTerm::InteractionMorawetz { .. } => 8,
        PairTerm::AlDerivative => 9,
    }
}

/// A_L: sum over ordered pairs of w_i w_j (dx/|dx|) . dxi.
pub fn pair_localized_angular_momentum(
    ens: &Ensemble,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::LocalizedAngularMomentum, strategy)
}

/// D: sum over ordered pairs of w_i w_j dx . dxi.
pub fn pair_dot(ens: &Ensemble, strategy: &PairReduceStrategy) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::RelativeDot, strategy)
}

/// E_rel: sum over ordered pairs of w_i w_j |dxi|^2; equals 2ME - 2|V|^2.
pub fn pair_rel_energy(
    ens: &Ensemble,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::RelativeEnergy, strategy)
}

/// U_I: sum over ordered pairs of w_i w_j |dx| |dxi| >= D.
pub fn interaction_uncertainty(
    ens: &Ensemble,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::InteractionUncertainty, strategy)
}

/// IG = U_I - D >= 0, accumulated per pair (each pair's gap is clamped at
/// zero, so rounding on exactly-parallel pairs cannot push the sum negative).
pub fn interaction_gap(
    ens: &Ensemble,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::Gap, strategy)
}

/// Gamma(c, v): pair mass whose relative velocity lies in the punctured blind
/// cone of its partner. Always in [0, M^2]; equals M^2 when all velocities
/// coincide.
pub fn gamma_pair_mass(
    ens: &Ensemble,
    cone: &ConeSpec,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::GammaMass(*cone), strategy)
}

/// (1/R) sum over ordered pairs with |dx| <= R of w_i w_j |dxi|^2.
pub fn interaction_morawetz_increment(
    ens: &Ensemble,
    radius: f64,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::InteractionMorawetz { radius }, strategy)
}

/// Nonnegative integrand of dA_L/dt under free transport:
/// sum of w_i w_j |dxi|^2 sin^2(theta(dx, dxi)) / |dx|.
pub fn al_derivative_integrand(
    ens: &Ensemble,
    strategy: &PairReduceStrategy,
) -> Result<(f64, Option<f64>)> {
    pair_reduce(ens, PairTerm::AlDerivative, strategy)
}

/// All pair functionals needed by one diagnostics checkpoint, evaluated in a
/// single sweep so the O(N^2) pass is paid once.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFunctionals {
    pub localized_angular_momentum: f64,
    pub dot: f64,
    pub rel_energy: f64,
    pub uncertainty: f64,
    pub gap_bound: f64,
    pub morawetz_increment: f64,
    pub al_derivative: f64,
    pub gamma_mass: Vec<f64>,
}

pub fn pair_functionals(
    ens: &Ensemble,
    cones: &[ConeSpec],
    imorawetz_radius: f64,
    strategy: &PairReduceStrategy,
) -> Result<PairFunctionals> {
    require_nonempty(ens)?;
    strategy.validate()?;
    let mut ops = vec![
        Op::compile(&PairTerm::LocalizedAngularMomentum)?,
        Op::compile(&PairTerm::RelativeDot)?,
        Op::compile(&PairTerm::RelativeEnergy)?,
        Op::compile(&PairTerm::InteractionUncertainty)?,
        Op::compile(&PairTerm::GapInitialBound)?,
        Op::compile(&PairTerm::InteractionMorawetz {
            radius: imorawetz_radius,
        })?,
        Op::compile(&PairTerm::AlDerivative)?,
    ];
    for cone in cones {
        ops.push(Op::compile(&PairTerm::GammaMass(*cone))?);
    }
    let snap = ens.snapshot();
    let count = ens.len() as u64;
    let sums = match strategy.kind {
        StrategyKind::Exact => reduce_exact(&snap, &ops, strategy.chunk_size),
        StrategyKind::Subsample if strategy.pairs_per_eval >= count.saturating_mul(count) => {
            reduce_exact(&snap, &ops, strategy.chunk_size)
        }
        StrategyKind::Subsample => {
            let mut stream = subsample_stream(ens, &strategy.stream_label, 0);
            reduce_subsample(&snap, &ops, strategy.pairs_per_eval, &mut stream).0
        }
    };
    Ok(PairFunctionals {
        localized_angular_momentum: sums[0],
        dot: sums[1],
        rel_energy: sums[2],
        uncertainty: sums[3],
        gap_bound: sums[4],
        morawetz_increment: sums[5],
        al_derivative: sums[6],
        gamma_mass: sums[7..].to_vec(),
    })
}

// ---------------------------------------------------------------------------
// three-observer cover check
// ---------------------------------------------------------------------------

/// Result of sampling for a point seen by all three observer blind cones.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverReport {
    pub dim: usize,
    pub radius: f64,
    pub apex_angle: f64,
    pub samples: u64,
    pub triple_hits: u64,
    /// Samples with xi == xi0 (inside every cone by the theta = 0 convention).
    pub degenerate_hits: u64,
    pub empty_intersection: bool,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

/// Three maximally separated observers on the boundary sphere: the vertices
/// of an equilateral triangle, placed on the z = 0 great circle for n = 3.
pub fn observer_positions(radius: f64) -> [[f64; 3]; 3] {
    let mut obs = [[0.0; 3]; 3];
    for (k, o) in obs.iter_mut().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        o[0] = radius * angle.cos();
        o[1] = radius * angle.sin();
    }
    obs
}

/// Sample points in B(0, R) and relative velocities at several speeds, and
/// look for a sample inside all three observer blind cones at apex angle `c`.
/// For small `c` the intersection is empty; near pi/2 the cones are almost
/// half-spaces and a witness appears quickly.
pub fn verify_three_observer_cover(
    radius: f64,
    c: f64,
    xi0: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<CoverReport> {
    let scale = 1.0 + xi0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let speeds = [0.5 * scale, scale, 2.0 * scale];
    verify_three_observer_cover_with_speeds(radius, c, xi0, &speeds, n_samples, seed)
}

/// Cover check with explicit relative-speed magnitudes (cycled per sample).
pub fn verify_three_observer_cover_with_speeds(
    radius: f64,
    c: f64,
    xi0: &[f64],
    speeds: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<CoverReport> {
    let dim = xi0.len();
    if !(2..=3).contains(&dim) {
        return Err(Error::domain("observer velocity must have dimension 2 or 3"));
    }
    if !(radius > 0.0) {
        return Err(Error::domain("cover radius must be > 0"));
    }
    if !(c > 0.0 && c < std::f64::consts::FRAC_PI_2) {
        return Err(Error::domain("cover apex angle must lie in (0, pi/2)"));
    }
    if speeds.is_empty() || speeds.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::domain("speeds must be nonnegative"));
    }
    let observers = observer_positions(radius);
    let cos_c = c.cos();
    let cos2 = cos_c * cos_c;
    let mut stream = rng::stream(seed, "cover", &[]);

    let mut report = CoverReport {
        dim,
        radius,
        apex_angle: c,
        samples: n_samples,
        triple_hits: 0,
        degenerate_hits: 0,
        empty_intersection: true,
        witness: None,
    };

    for sample in 0..n_samples {
        // Uniform point in the ball.
        let u: f64 = stream.random_range(0.0..1.0);
        let r = radius * if dim == 2 { u.sqrt() } else { u.cbrt() };
        let dir = crate::phase::unit_vector(dim, &mut stream);
        let mut x = [0.0f64; 3];
        for k in 0..dim {
            x[k] = r * dir[k];
        }
        let speed = speeds[(sample % speeds.len() as u64) as usize];
        let vdir = crate::phase::unit_vector(dim, &mut stream);
        let mut dxi = [0.0f64; 3];
        let mut nv2 = 0.0;
        for k in 0..dim {
            dxi[k] = speed * vdir[k];
            nv2 += dxi[k] * dxi[k];
        }
        let degenerate = nv2 == 0.0;

        let mut in_all = true;
        for obs in &observers {
            let mut nx2 = 0.0;
            let mut dot = 0.0;
            for k in 0..dim {
                let dx = x[k] - obs[k];
                nx2 += dx * dx;
                dot += dx * dxi[k];
            }
            // |x| < R = |obs| keeps nx2 > 0.
            if !outside_band(dot, nx2, nv2, cos2) {
                in_all = false;
                break;
            }
        }
        if in_all {
            report.triple_hits += 1;
            if degenerate {
                report.degenerate_hits += 1;
            }
            if report.witness.is_none() {
                let xi: Vec<f64> = (0..dim).map(|k| xi0[k] + dxi[k]).collect();
                report.witness = Some((x[..dim].to_vec(), xi));
            }
        }
    }
    report.empty_intersection = report.triple_hits == 0;
    Ok(report)
}

// ---------------------------------------------------------------------------
// far-pair pointwise inequality
// ---------------------------------------------------------------------------

/// Outcome of sampling the pointwise gap bound on far non-blind pairs:
/// for |dx| > R, |dxi| >= v, and theta(dx, dxi) in [c, pi-c],
/// |dx||dxi| - dx.dxi >= R v (1 - cos c).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NrInequalityReport {
    pub samples_accepted: u64,
    pub violations: u64,
    pub min_margin: f64,
}

/// Draw random pair offsets, keep the ones lying in the far non-blind set,
/// and check the gap bound on each. `n_accepted` counts kept draws.
pub fn check_nr_inequality(
    dim: usize,
    cone: &ConeSpec,
    n_accepted: u64,
    seed: u64,
) -> Result<NrInequalityReport> {
    cone.validate()?;
    if !(2..=3).contains(&dim) {
        return Err(Error::domain("dimension must be 2 or 3"));
    }
    let mut stream = rng::stream(seed, "nr-inequality", &[]);
    let floor = cone.gap_floor();
    let v2 = cone.puncture_speed * cone.puncture_speed;
    let cos_c = cone.apex_angle.cos();
    let cos2 = cos_c * cos_c;

    let mut report = NrInequalityReport {
        samples_accepted: 0,
        violations: 0,
        min_margin: f64::INFINITY,
    };
    while report.samples_accepted < n_accepted {
        // Separations above R and speeds straddling v, with broad tails.
        let su: f64 = stream.random_range(0.0..1.0);
        let sep = cone.separation_radius * (1.0 + 3.0 * su * su);
        let xdir = crate::phase::unit_vector(dim, &mut stream);
        let vu: f64 = stream.random_range(0.0..1.0);
        let speed = cone.puncture_speed * 4.0 * vu;
        let vdir = crate::phase::unit_vector(dim, &mut stream);

        let mut nx2 = 0.0;
        let mut nv2 = 0.0;
        let mut dot = 0.0;
        for k in 0..dim {
            let dx = sep * xdir[k];
            let dv = speed * vdir[k];
            nx2 += dx * dx;
            nv2 += dv * dv;
            dot += dx * dv;
        }
        // Membership in the far non-blind set.
        if nx2 <= cone.separation_radius * cone.separation_radius {
            continue;
        }
        if nv2 < v2 || outside_band(dot, nx2, nv2, cos2) {
            continue;
        }
        report.samples_accepted += 1;
        let gap = (nx2 * nv2).sqrt() - dot;
        let margin = gap - floor;
        report.min_margin = report.min_margin.min(margin);
        if margin < 0.0 {
            report.violations += 1;
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// diagnostics record
// ---------------------------------------------------------------------------

/// One time-stamped row of every functional plus the running accumulators.
/// `pair_fresh` marks rows where the O(N^2) functionals were evaluated at
/// this checkpoint; stale rows carry the previous values forward.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub m: f64,
    pub v: Vec<f64>,
    pub e: f64,
    pub localization: f64,
    pub a: f64,
    pub u: f64,
    pub g_gap: f64,
    pub a_l: f64,
    pub d_pair: f64,
    pub e_rel: f64,
    pub u_i: f64,
    pub ig_gap: f64,
    pub ig_init_bound: f64,
    pub morawetz_partial: f64,
    pub imorawetz_partial: f64,
    pub al_flux_partial: f64,
    pub gamma_mass: Vec<f64>,
    pub gamma_time_avg: Vec<f64>,
    pub pair_fresh: bool,
    pub coll_candidates: u64,
    pub coll_accepted: u64,
    pub coll_clamps: u64,
    pub coll_sum_rel_speed: f64,
    pub coll_max_pair_distance: f64,
    pub cell_drift_mass: f64,
    pub cell_drift_momentum: f64,
    pub cell_drift_energy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::free_stream;
    use crate::phase::{make_ensemble, moments, Ensemble, InitSpec, SeedLineage};

    fn lineage() -> SeedLineage {
        SeedLineage {
            master_seed: 0,
            init_label: "test".into(),
            collision_steps: 0,
        }
    }

    fn exact() -> PairReduceStrategy {
        PairReduceStrategy::exact()
    }

    /// p1 at the origin moving up, p2 at (1, 0) at rest; unit weights.
    fn two_particle_fixture() -> Ensemble {
        Ensemble::from_parts(
            2,
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0],
            lineage(),
        )
        .unwrap()
    }

    fn gaussian(count: usize, seed: u64) -> Ensemble {
        make_ensemble(
            &InitSpec::GaussianCloud {
                center_x: vec![0.0, 0.0],
                center_xi: vec![0.0, 0.0],
                sigma_x: 1.0,
                sigma_xi: 1.0,
                count,
                total_mass: 1.0,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn angular_momentum_values() {
        let ens = Ensemble::from_parts(2, vec![1.0, 0.0], vec![2.0, 0.0], vec![1.0], lineage())
            .unwrap();
        assert_eq!(angular_momentum(&ens).unwrap(), 2.0);

        // After streaming: A(t) = A(0) + t E, forced analytically.
        let mut moved = ens.clone();
        free_stream(&mut moved, 0.5).unwrap();
        assert_eq!(angular_momentum(&moved).unwrap(), 4.0);

        // Perpendicular position and velocity.
        let perp = Ensemble::from_parts(2, vec![0.0, 1.0], vec![2.0, 0.0], vec![1.0], lineage())
            .unwrap();
        assert_eq!(angular_momentum(&perp).unwrap(), 0.0);
        assert_eq!(uncertainty(&perp).unwrap(), 2.0);
    }

    #[test]
    fn uncertainty_dominates_angular_momentum() {
        let ens = Ensemble::from_parts(2, vec![1.0, 0.0], vec![2.0, 0.0], vec![1.0], lineage())
            .unwrap();
        assert_eq!(uncertainty(&ens).unwrap(), 2.0);
        for seed in 0..5 {
            let ens = gaussian(200, seed);
            assert!(uncertainty(&ens).unwrap() >= angular_momentum(&ens).unwrap());
        }
    }

    #[test]
    fn fixture_localized_angular_momentum_closed_form() {
        let ens = two_particle_fixture();
        let (al0, _) = pair_localized_angular_momentum(&ens, &exact()).unwrap();
        assert_eq!(al0, 0.0);

        for t in [0.25, 1.0, 3.0] {
            let mut moved = ens.clone();
            free_stream(&mut moved, t).unwrap();
            let (al, _) = pair_localized_angular_momentum(&moved, &exact()).unwrap();
            let want = 2.0 * t / (1.0 + t * t).sqrt();
            assert!(
                (al - want).abs() <= 1e-14 * want.abs().max(1.0),
                "t={t}: {al} vs {want}"
            );
        }
        let mut at_one = ens.clone();
        free_stream(&mut at_one, 1.0).unwrap();
        let (al, _) = pair_localized_angular_momentum(&at_one, &exact()).unwrap();
        assert!((al - 2.0f64.sqrt()).abs() <= 1e-15);
    }

    #[test]
    fn identical_velocities_zero_out_pair_terms() {
        let ens = Ensemble::from_parts(
            2,
            vec![0.0, 0.0, 2.0, 1.0, -1.0, 3.0],
            vec![0.5, -0.25, 0.5, -0.25, 0.5, -0.25],
            vec![1.0, 2.0, 0.5],
            lineage(),
        )
        .unwrap();
        assert_eq!(
            pair_localized_angular_momentum(&ens, &exact()).unwrap().0,
            0.0
        );
        assert_eq!(interaction_gap(&ens, &exact()).unwrap().0, 0.0);
        assert_eq!(al_derivative_integrand(&ens, &exact()).unwrap().0, 0.0);
        let m = moments(&ens).unwrap();
        let cone = ConeSpec {
            apex_angle: 0.3,
            puncture_speed: 0.1,
            separation_radius: 5.0,
        };
        let (gamma, _) = gamma_pair_mass(&ens, &cone, &exact()).unwrap();
        assert!((gamma - m.mass * m.mass).abs() <= 1e-15 * m.mass * m.mass);
    }

    #[test]
    fn fixture_dot_and_rel_energy_linear_in_time() {
        let ens = two_particle_fixture();
        assert_eq!(pair_dot(&ens, &exact()).unwrap().0, 0.0);
        assert_eq!(pair_rel_energy(&ens, &exact()).unwrap().0, 2.0);
        for t in [0.5, 2.0] {
            let mut moved = ens.clone();
            free_stream(&mut moved, t).unwrap();
            let (d, _) = pair_dot(&moved, &exact()).unwrap();
            assert!((d - 2.0 * t).abs() <= 1e-14 * (1.0 + 2.0 * t));
            assert_eq!(pair_rel_energy(&moved, &exact()).unwrap().0, 2.0);
        }
        let single =
            Ensemble::from_parts(2, vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0], lineage()).unwrap();
        assert_eq!(pair_dot(&single, &exact()).unwrap().0, 0.0);
        assert_eq!(pair_rel_energy(&single, &exact()).unwrap().0, 0.0);
    }

    #[test]
    fn rel_energy_matches_moment_identity() {
        let ens = gaussian(300, 3);
        let (erel, _) = pair_rel_energy(&ens, &exact()).unwrap();
        let m = moments(&ens).unwrap();
        let v2: f64 = m.momentum.iter().map(|v| v * v).sum();
        let identity = 2.0 * m.mass * m.energy - 2.0 * v2;
        assert!((erel - identity).abs() <= 1e-12 * identity.abs().max(1.0));
    }

    #[test]
    fn fixture_interaction_uncertainty_and_gap() {
        let ens = two_particle_fixture();
        assert_eq!(interaction_uncertainty(&ens, &exact()).unwrap().0, 2.0);
        assert_eq!(interaction_gap(&ens, &exact()).unwrap().0, 2.0);
        let (bound, _) = pair_reduce(&ens, PairTerm::GapInitialBound, &exact()).unwrap();
        assert_eq!(bound, 4.0);

        // IG(t) = 2 (sqrt(1 + t^2) - t), decreasing.
        let mut prev = f64::INFINITY;
        for t in [0.5, 1.0, 2.0, 4.0] {
            let mut moved = ens.clone();
            free_stream(&mut moved, t).unwrap();
            let (ig, _) = interaction_gap(&moved, &exact()).unwrap();
            let want = 2.0 * ((1.0 + t * t).sqrt() - t);
            assert!((ig - want).abs() <= 1e-13, "t={t}");
            assert!(ig < prev);
            prev = ig;
        }
    }

    #[test]
    fn colocated_pairs_contribute_zero_uncertainty() {
        let ens = Ensemble::from_parts(
            2,
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0.0, 1.0, 2.0, 0.0],
            vec![1.0, 1.0],
            lineage(),
        )
        .unwrap();
        assert_eq!(interaction_uncertainty(&ens, &exact()).unwrap().0, 0.0);
    }

    #[test]
    fn blind_cone_examples() {
        let x0 = [0.0, 0.0];
        let xi0 = [0.0, 0.0];
        let x = [1.0, 0.0];
        let c = std::f64::consts::FRAC_PI_4;
        assert!(in_blind_cone(&x0, &xi0, &x, &[1.0, 0.0], c).unwrap());
        assert!(!in_blind_cone(&x0, &xi0, &x, &[0.0, 1.0], c).unwrap());
        // Double-sided: anti-radial motion is also blind.
        assert!(in_blind_cone(&x0, &xi0, &x, &[-1.0, 0.0], c).unwrap());
        // xi == xi0 counts as theta = 0.
        assert!(in_blind_cone(&x0, &xi0, &x, &[0.0, 0.0], c).unwrap());
        // Undefined direction.
        assert!(in_blind_cone(&x0, &xi0, &x0, &[1.0, 0.0], c).is_err());
    }

    #[test]
    fn punctured_cone_examples() {
        let cone = ConeSpec {
            apex_angle: 0.3,
            puncture_speed: 0.1,
            separation_radius: 1.0,
        };
        let x0 = [0.0, 0.0];
        let xi0 = [0.0, 0.0];
        assert!(in_punctured_cone(&x0, &xi0, &[1.0, 0.0], &[0.0, 0.0], &cone).unwrap());
        assert!(!in_punctured_cone(&x0, &xi0, &[1.0, 0.0], &[0.0, 1.0], &cone).unwrap());
        // Same position: ball alone decides.
        assert!(!in_punctured_cone(&x0, &xi0, &x0, &[0.0, 1.0], &cone).unwrap());
        assert!(in_punctured_cone(&x0, &xi0, &x0, &[0.05, 0.0], &cone).unwrap());
        // Open ball: |dxi| exactly v is outside.
        assert!(!in_punctured_cone(&x0, &xi0, &x0, &[0.1, 0.0], &cone).unwrap());
    }

    #[test]
    fn cone_membership_matches_angle_oracle() {
        let mut stream = rng::stream(5, "test/cone-oracle", &[]);
        let c: f64 = 0.7;
        let cos_c = c.cos();
        for _ in 0..2000 {
            let u: Vec<f64> = (0..3).map(|_| stream.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..3).map(|_| stream.random_range(-1.0..1.0)).collect();
            let nx2: f64 = u.iter().map(|a| a * a).sum();
            let nv2: f64 = v.iter().map(|a| a * a).sum();
            if nx2 == 0.0 {
                continue;
            }
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            let theta = angle_between(&u, &v);
            // Skip samples within rounding distance of the decision boundary.
            if (theta - c).abs() < 1e-9 || (theta - (std::f64::consts::PI - c)).abs() < 1e-9 {
                continue;
            }
            let via_angle = theta < c || theta > std::f64::consts::PI - c;
            let via_band = outside_band(dot, nx2, nv2, cos_c * cos_c);
            assert_eq!(via_angle, via_band);
        }
    }

    #[test]
    fn gamma_examples() {
        let single =
            Ensemble::from_parts(2, vec![5.0, 5.0], vec![1.0, 1.0], vec![1.0], lineage()).unwrap();
        let cone = ConeSpec {
            apex_angle: 0.3,
            puncture_speed: 0.1,
            separation_radius: 5.0,
        };
        assert_eq!(gamma_pair_mass(&single, &cone, &exact()).unwrap().0, 1.0);

        let same_vel = Ensemble::from_parts(
            2,
            vec![0.0, 0.0, 9.0, -4.0],
            vec![1.0, 2.0, 1.0, 2.0],
            vec![1.0, 1.0],
            lineage(),
        )
        .unwrap();
        assert_eq!(gamma_pair_mass(&same_vel, &cone, &exact()).unwrap().0, 4.0);

        // Perpendicular fixture: only the two self-pairs count.
        let ens = two_particle_fixture();
        assert_eq!(gamma_pair_mass(&ens, &cone, &exact()).unwrap().0, 2.0);
    }

    #[test]
    fn fixture_gamma_fraction_jumps_at_cot_c() {
        let ens = two_particle_fixture();
        let cone = ConeSpec {
            apex_angle: 0.3,
            puncture_speed: 0.1,
            separation_radius: 5.0,
        };
        let t_jump = 1.0 / 0.3f64.tan();
        for (t, want) in [
            (0.5 * t_jump, 2.0),
            (0.99 * t_jump, 2.0),
            (1.01 * t_jump, 4.0),
            (2.0 * t_jump, 4.0),
        ] {
            let mut moved = ens.clone();
            free_stream(&mut moved, t).unwrap();
            let (gamma, _) = gamma_pair_mass(&moved, &cone, &exact()).unwrap();
            assert_eq!(gamma, want, "t = {t}");
        }
    }

    #[test]
    fn morawetz_increment_examples() {
        let outside =
            Ensemble::from_parts(2, vec![3.0, 0.0], vec![1.0, 0.0], vec![1.0], lineage()).unwrap();
        assert_eq!(morawetz_increment(&outside, 1.0).unwrap(), 0.0);
        let inside =
            Ensemble::from_parts(2, vec![0.0, 0.0], vec![3.0, 4.0], vec![2.0], lineage()).unwrap();
        assert_eq!(morawetz_increment(&inside, 1.0).unwrap(), 50.0);
        let cloud = gaussian(500, 4);
        let e = moments(&cloud).unwrap().energy;
        assert!(morawetz_increment(&cloud, 1.5).unwrap() <= e);
    }

    #[test]
    fn interaction_morawetz_examples() {
        let pair = two_particle_fixture();
        let (p, _) = interaction_morawetz_increment(&pair, 2.0, &exact()).unwrap();
        assert_eq!(p, 1.0);
        let (p, _) = interaction_morawetz_increment(&pair, 0.5, &exact()).unwrap();
        assert_eq!(p, 0.0);
        let same_vel = Ensemble::from_parts(
            2,
            vec![0.0, 0.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0],
            lineage(),
        )
        .unwrap();
        assert_eq!(
            interaction_morawetz_increment(&same_vel, 2.0, &exact())
                .unwrap()
                .0,
            0.0
        );
    }

    #[test]
    fn al_derivative_examples() {
        let ens = two_particle_fixture();
        let (flux, _) = al_derivative_integrand(&ens, &exact()).unwrap();
        assert_eq!(flux, 2.0);

        // Cross-check against the finite difference of A_L.
        let delta = 1e-6;
        let mut moved = ens.clone();
        free_stream(&mut moved, delta).unwrap();
        let (al1, _) = pair_localized_angular_momentum(&moved, &exact()).unwrap();
        let (al0, _) = pair_localized_angular_momentum(&ens, &exact()).unwrap();
        let fd = (al1 - al0) / delta;
        assert!((fd - flux).abs() <= 1e-5, "fd {fd} vs flux {flux}");

        // Collinear pair offsets: sin(theta) = 0.
        let collinear = Ensemble::from_parts(
            2,
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.5, 0.0, -0.5, 0.0],
            vec![1.0, 1.0],
            lineage(),
        )
        .unwrap();
        assert_eq!(
            al_derivative_integrand(&collinear, &exact()).unwrap().0,
            0.0
        );
    }

    #[test]
    fn pair_reduce_subsample_full_enumeration_falls_back() {
        let ens = gaussian(40, 6);
        let exact_val = pair_rel_energy(&ens, &exact()).unwrap().0;
        let full = PairReduceStrategy {
            kind: StrategyKind::Subsample,
            pairs_per_eval: 40 * 40,
            ..PairReduceStrategy::default()
        };
        let (est, se) = pair_rel_energy(&ens, &full).unwrap();
        assert_eq!(est, exact_val);
        assert!(se.is_none());
    }

    #[test]
    fn pair_reduce_subsample_estimates_within_errors() {
        let ens = gaussian(400, 7);
        let exact_val = pair_rel_energy(&ens, &exact()).unwrap().0;
        let sub = PairReduceStrategy {
            kind: StrategyKind::Subsample,
            pairs_per_eval: 20_000,
            ..PairReduceStrategy::default()
        };
        let (est, se) = pair_rel_energy(&ens, &sub).unwrap();
        let se = se.expect("standard error expected");
        assert!(se > 0.0);
        assert!(
            (est - exact_val).abs() <= 4.0 * se,
            "estimate {est} too far from {exact_val} (se {se})"
        );
    }

    #[test]
    fn single_particle_pair_sums_vanish() {
        let single =
            Ensemble::from_parts(2, vec![1.0, 2.0], vec![0.5, 0.5], vec![1.0], lineage()).unwrap();
        assert_eq!(
            pair_localized_angular_momentum(&single, &exact()).unwrap().0,
            0.0
        );
        assert_eq!(al_derivative_integrand(&single, &exact()).unwrap().0, 0.0);
    }

    #[test]
    fn fused_pass_matches_individual_ops() {
        let ens = gaussian(250, 8);
        let cone = ConeSpec {
            apex_angle: 0.3,
            puncture_speed: 0.2,
            separation_radius: 5.0,
        };
        let fused = pair_functionals(&ens, &[cone], 5.0, &exact()).unwrap();
        assert_eq!(
            fused.localized_angular_momentum,
            pair_localized_angular_momentum(&ens, &exact()).unwrap().0
        );
        assert_eq!(fused.dot, pair_dot(&ens, &exact()).unwrap().0);
        assert_eq!(fused.rel_energy, pair_rel_energy(&ens, &exact()).unwrap().0);
        assert_eq!(
            fused.uncertainty,
            interaction_uncertainty(&ens, &exact()).unwrap().0
        );
        assert_eq!(
            fused.gamma_mass[0],
            gamma_pair_mass(&ens, &cone, &exact()).unwrap().0
        );
        let im = interaction_morawetz_increment(&ens, 5.0, &exact())
            .unwrap()
            .0;
        assert!((fused.morawetz_increment - im).abs() <= 1e-12 * im.abs().max(1.0));
        assert_eq!(
            fused.al_derivative,
            al_derivative_integrand(&ens, &exact()).unwrap().0
        );
    }

    #[test]
    fn cover_smoke_small_vs_wide_apex() {
        let closed = verify_three_observer_cover(1.0, 0.1, &[0.0, 0.0], 20_000, 13).unwrap();
        assert!(closed.empty_intersection, "unexpected witness: {closed:?}");

        let open = verify_three_observer_cover(1.0, 1.5, &[0.0, 0.0], 20_000, 13).unwrap();
        assert!(!open.empty_intersection);
        assert!(open.witness.is_some());
    }

    #[test]
    fn cover_flags_degenerate_relative_velocity() {
        let report =
            verify_three_observer_cover_with_speeds(1.0, 0.2, &[0.3, -0.1], &[0.0], 100, 3)
                .unwrap();
        assert_eq!(report.triple_hits, 100);
        assert_eq!(report.degenerate_hits, 100);
        assert!(!report.empty_intersection);
    }

    #[test]
    fn nr_inequality_smoke() {
        let cone = ConeSpec {
            apex_angle: 0.3,
            puncture_speed: 0.2,
            separation_radius: 5.0,
        };
        let report = check_nr_inequality(2, &cone, 20_000, 17).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.min_margin >= 0.0);
    }

    #[test]
    fn gamma_bounds_and_al_bound_on_random_ensembles() {
        let cone = ConeSpec {
            apex_angle: 0.4,
            puncture_speed: 0.3,
            separation_radius: 2.0,
        };
        for seed in 0..8 {
            let ens = gaussian(120, 100 + seed);
            let m = moments(&ens).unwrap();
            let m2 = m.mass * m.mass;
            let (gamma, _) = gamma_pair_mass(&ens, &cone, &exact()).unwrap();
            assert!(gamma >= 0.0 && gamma <= m2 * (1.0 + 1e-12));
            let (al, _) = pair_localized_angular_momentum(&ens, &exact()).unwrap();
            let bound = (m.mass + m.energy) * (m.mass + m.energy);
            assert!(al.abs() <= bound);
            let (flux, _) = al_derivative_integrand(&ens, &exact()).unwrap();
            assert!(flux >= 0.0);
            let (ui, _) = interaction_uncertainty(&ens, &exact()).unwrap();
            let (d, _) = pair_dot(&ens, &exact()).unwrap();
            assert!(ui >= d);
        }
    }

    #[test]
    fn exact_reduce_permutation_stable() {
        let ens = gaussian(300, 30);
        let n = ens.dim();
        let len = ens.len();
        let snap = ens.snapshot();
        let mut x = Vec::new();
        let mut xi = Vec::new();
        let mut w = Vec::new();
        for i in (0..len).rev() {
            x.extend_from_slice(&snap.x[i * n..(i + 1) * n]);
            xi.extend_from_slice(&snap.xi[i * n..(i + 1) * n]);
            w.push(snap.w[i]);
        }
        let rev = Ensemble::from_parts(n, x, xi, w, lineage()).unwrap();
        for term in [
            PairTerm::RelativeDot,
            PairTerm::RelativeEnergy,
            PairTerm::InteractionUncertainty,
            PairTerm::AlDerivative,
        ] {
            let (a, _) = pair_reduce(&ens, term, &exact()).unwrap();
            let (b, _) = pair_reduce(&rev, term, &exact()).unwrap();
            assert!(
                (a - b).abs() <= 1e-13 * a.abs().max(1.0),
                "{term:?}: {a} vs {b}"
            );
        }
    }
}
