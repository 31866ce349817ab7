//! Time evolution: exact free streaming along characteristics plus collision
//! kernels that conserve mass, momentum, and energy cell by cell.
//!
//! Collisions pair particles within a spatial hash cell without moving them,
//! so two-particle functionals pick up O(cell_size) jumps per collision; the
//! harness budgets for that with a first-order-in-h allowance.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{moments, unit_vector, Ensemble};
use crate::rng;

/// What to do when a sampled projected relative speed exceeds the majorant.
/// Clamping biases the kernel toward grazing collisions, so aborting is the
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MajorantPolicy {
    #[default]
    Abort,
    ClampAndLog,
}

/// Collision kernel selection.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelConfig {
    /// Free transport only.
    Null,
    /// Stochastic binary hard-sphere collisions with no-time-counter candidate
    /// counts per cell and acceptance probability |n.(xi_i - xi_j)| / g_max.
    HardSphereDsmc {
        cell_size: f64,
        rate_scale: f64,
        majorant_rel_speed: f64,
        #[serde(default)]
        majorant_policy: MajorantPolicy,
    },
    /// Per-cell velocity resampling at rate `rate`, affinely corrected so cell
    /// mass, momentum, and energy are preserved.
    Thermalize { cell_size: f64, rate: f64 },
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelConfig::Null => Ok(()),
            KernelConfig::HardSphereDsmc {
                cell_size,
                rate_scale,
                majorant_rel_speed,
                ..
            } => {
                if !(*cell_size > 0.0) {
                    return Err(Error::config("kernel.cell_size must be > 0"));
                }
                if !(*rate_scale >= 0.0) {
                    return Err(Error::config("kernel.rate_scale must be >= 0"));
                }
                if !(*majorant_rel_speed > 0.0) {
                    return Err(Error::config("kernel.majorant_rel_speed must be > 0"));
                }
                Ok(())
            }
            KernelConfig::Thermalize { cell_size, rate } => {
                if !(*cell_size > 0.0) {
                    return Err(Error::config("kernel.cell_size must be > 0"));
                }
                if !(*rate >= 0.0) {
                    return Err(Error::config("kernel.rate must be >= 0"));
                }
                Ok(())
            }
        }
    }

    pub fn cell_size(&self) -> Option<f64> {
        match self {
            KernelConfig::Null => None,
            KernelConfig::HardSphereDsmc { cell_size, .. }
            | KernelConfig::Thermalize { cell_size, .. } => Some(*cell_size),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, KernelConfig::Null)
    }
}

/// Spatial hash: integer cell coordinates (floor(x/h) per axis) to the list of
/// particle indices in that cell. Cells are kept sorted by coordinate so any
/// traversal is deterministic. Rebuilt after every streaming substep.
pub struct CellIndex {
    pub cell_size: f64,
    cells: Vec<([i64; 3], Vec<u32>)>,
}

impl CellIndex {
    pub fn build(dim: usize, positions: &[f64], cell_size: f64) -> Self {
        let count = positions.len() / dim;
        let mut map: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for i in 0..count {
            let mut key = [0i64; 3];
            for k in 0..dim {
                key[k] = (positions[i * dim + k] / cell_size).floor() as i64;
            }
            map.entry(key).or_default().push(i as u32);
        }
        let mut cells: Vec<_> = map.into_iter().collect();
        cells.sort_unstable_by_key(|(key, _)| *key);
        CellIndex { cell_size, cells }
    }

    pub fn cells(&self) -> &[([i64; 3], Vec<u32>)] {
        &self.cells
    }

    pub fn occupancy(&self) -> usize {
        self.cells.iter().map(|(_, v)| v.len()).sum()
    }
}

/// Relative drift of the three conserved moments. Momentum drift is the
/// largest component change scaled by sqrt(M*E).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentDrift {
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
}

impl MomentDrift {
    pub fn max_component(&self) -> f64 {
        self.mass.max(self.momentum).max(self.energy)
    }

    pub fn take_max(&mut self, other: &MomentDrift) {
        self.mass = self.mass.max(other.mass);
        self.momentum = self.momentum.max(other.momentum);
        self.energy = self.energy.max(other.energy);
    }
}

/// Evidence gathered during one collision substep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub candidates: u64,
    pub accepted: u64,
    pub majorant_clamps: u64,
    /// Largest |x_i - x_j| over accepted pairs; bounded by the cell diameter.
    pub max_pair_distance: f64,
    /// Sum of |xi_i - xi_j| over accepted pairs (for mean relative speed).
    pub sum_rel_speed: f64,
    /// Maxima over cells of the per-cell relative moment drift.
    pub cell_drift: MomentDrift,
}

impl CollisionStats {
    pub fn absorb(&mut self, other: &CollisionStats) {
        self.candidates += other.candidates;
        self.accepted += other.accepted;
        self.majorant_clamps += other.majorant_clamps;
        self.max_pair_distance = self.max_pair_distance.max(other.max_pair_distance);
        self.sum_rel_speed += other.sum_rel_speed;
        self.cell_drift.take_max(&other.cell_drift);
    }

    pub fn mean_rel_speed(&self) -> f64 {
        if self.accepted == 0 {
            0.0
        } else {
            self.sum_rel_speed / self.accepted as f64
        }
    }
}

/// Identifies the random stream family of one collision substep. Per-cell
/// streams depend only on (master seed, step index, cell coordinates), so the
/// schedule of cells cannot change any result.
#[derive(Debug, Clone, Copy)]
pub struct StreamKey {
    pub master_seed: u64,
    pub step_index: u64,
}

impl StreamKey {
    pub fn for_cell(&self, label: &str, cell: [i64; 3]) -> rng::Stream {
        rng::stream(
            self.master_seed,
            label,
            &rng::cell_context(self.step_index, cell),
        )
    }
}

/// Advance every particle along its characteristic: x <- x + dt * xi.
/// Velocities and weights are untouched and the clock moves by `dt`.
pub fn free_stream(ens: &mut Ensemble, dt: f64) -> Result<()> {
    if !(dt >= 0.0) {
        return Err(Error::domain("free_stream requires dt >= 0"));
    }
    ens.advance_time(dt);
    Ok(())
}

/// Stream to an exact target time. Equivalent to `free_stream` with
/// `dt = t - time()`, but the final clock is exactly `t`.
pub fn free_stream_to(ens: &mut Ensemble, t: f64) -> Result<()> {
    ens.set_time(t)
}

/// Post-collision velocities of a hard-sphere pair for a given unit normal:
/// both momentum and kinetic energy of the pair are invariant.
pub fn hard_sphere_deflection(
    xi: &[f64],
    xi_star: &[f64],
    normal: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let proj: f64 = normal
        .iter()
        .zip(xi.iter().zip(xi_star))
        .map(|(n, (a, b))| n * (a - b))
        .sum();
    let out: Vec<f64> = xi.iter().zip(normal).map(|(a, n)| a - proj * n).collect();
    let out_star: Vec<f64> = xi_star.iter().zip(normal).map(|(b, n)| b + proj * n).collect();
    (out, out_star)
}

fn cell_moments(idx: &[u32], dim: usize, xi: &[f64], w: &[f64]) -> (f64, [f64; 3], f64) {
    let mut m = 0.0;
    let mut v = [0.0f64; 3];
    let mut e = 0.0;
    for &i in idx {
        let i = i as usize;
        let wi = w[i];
        m += wi;
        let mut sq = 0.0;
        for k in 0..dim {
            let c = xi[i * dim + k];
            v[k] += wi * c;
            sq += c * c;
        }
        e += wi * sq;
    }
    (m, v, e)
}

fn rel_cell_drift(before: (f64, [f64; 3], f64), after: (f64, [f64; 3], f64)) -> MomentDrift {
    let (m0, v0, e0) = before;
    let (m1, v1, e1) = after;
    let vscale = (m0 * e0).sqrt().max(f64::MIN_POSITIVE);
    let dv = v0
        .iter()
        .zip(&v1)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    MomentDrift {
        mass: (m1 - m0).abs() / m0.max(f64::MIN_POSITIVE),
        momentum: dv / vscale,
        energy: (e1 - e0).abs() / e0.max(f64::MIN_POSITIVE),
    }
}

/// One hard-sphere DSMC collision substep of length `dt`.
///
/// Within each cell, `ceil(0.5 * Nc * (Nc - 1) * w * sigma0 * g_max * dt /
/// vol_cell)` candidate pairs are drawn; a candidate with sampled unit normal
/// `n` is accepted with probability `|n.(xi_i - xi_j)| / g_max` and updated by
/// the elastic deflection rule. Positions and weights are unchanged. Only
/// equal-weight pairs collide; unequal-weight binary collisions cannot
/// conserve both momentum and energy under this rule.
pub fn collide_hard_sphere(
    ens: &mut Ensemble,
    cfg: &KernelConfig,
    dt: f64,
    key: StreamKey,
) -> Result<CollisionStats> {
    let KernelConfig::HardSphereDsmc {
        cell_size,
        rate_scale,
        majorant_rel_speed,
        majorant_policy,
    } = *cfg
    else {
        return Err(Error::domain("collide_hard_sphere requires a hard_sphere_dsmc kernel"));
    };
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(Error::domain("collision substep requires dt > 0"));
    }

    let dim = ens.dim();
    let (x, xi, w) = ens.collision_view();
    let index = CellIndex::build(dim, x, cell_size);
    let vol = cell_size.powi(dim as i32);

    let mut stats = CollisionStats::default();
    for (cell, idx) in index.cells() {
        let nc = idx.len();
        if nc < 2 {
            continue;
        }
        let before = cell_moments(idx, dim, xi, w);
        let mut stream = key.for_cell("collide/hard_sphere", *cell);
        let w_ref = idx.iter().map(|&i| w[i as usize]).fold(0.0f64, f64::max);
        let expected =
            0.5 * nc as f64 * (nc as f64 - 1.0) * w_ref * rate_scale * majorant_rel_speed * dt
                / vol;
        let candidates = expected.ceil() as u64;

        for _ in 0..candidates {
            stats.candidates += 1;
            let a = stream.random_range(0..nc);
            let mut b = stream.random_range(0..nc - 1);
            if b >= a {
                b += 1;
            }
            let (i, j) = (idx[a] as usize, idx[b] as usize);
            // Bitwise equality on purpose: generators emit uniform weights.
            if w[i] != w[j] {
                continue;
            }
            let normal = unit_vector(dim, &mut stream);
            let mut proj = 0.0;
            let mut rel_sq = 0.0;
            for k in 0..dim {
                let d = xi[i * dim + k] - xi[j * dim + k];
                proj += normal[k] * d;
                rel_sq += d * d;
            }
            if proj.abs() > majorant_rel_speed {
                match majorant_policy {
                    MajorantPolicy::Abort => {
                        return Err(Error::MajorantViolation {
                            sampled: proj.abs(),
                            g_max: majorant_rel_speed,
                            cell: *cell,
                        });
                    }
                    MajorantPolicy::ClampAndLog => {
                        stats.majorant_clamps += 1;
                        log::warn!(
                            "majorant clamp: |n.rel| = {} > g_max = {} in cell {:?}",
                            proj.abs(),
                            majorant_rel_speed,
                            cell
                        );
                    }
                }
            }
            let u: f64 = stream.random_range(0.0..1.0);
            if u * majorant_rel_speed < proj.abs() {
                for k in 0..dim {
                    xi[i * dim + k] -= proj * normal[k];
                    xi[j * dim + k] += proj * normal[k];
                }
                stats.accepted += 1;
                stats.sum_rel_speed += rel_sq.sqrt();
                let mut dist_sq = 0.0;
                for k in 0..dim {
                    let d = x[i * dim + k] - x[j * dim + k];
                    dist_sq += d * d;
                }
                stats.max_pair_distance = stats.max_pair_distance.max(dist_sq.sqrt());
            }
        }

        let after = cell_moments(idx, dim, xi, w);
        stats.cell_drift.take_max(&rel_cell_drift(before, after));
    }
    Ok(stats)
}

const THERMALIZE_RETRIES: usize = 8;

/// One thermalization substep: each cell with at least three particles is,
/// with probability `rate * dt`, given fresh normal velocities that are then
/// affinely corrected to reproduce the cell's mass, momentum, and energy.
pub fn collide_thermalize(
    ens: &mut Ensemble,
    cfg: &KernelConfig,
    dt: f64,
    key: StreamKey,
) -> Result<CollisionStats> {
    let KernelConfig::Thermalize { cell_size, rate } = *cfg else {
        return Err(Error::domain("collide_thermalize requires a thermalize kernel"));
    };
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(Error::domain("collision substep requires dt > 0"));
    }
    if rate * dt > 1.0 {
        return Err(Error::domain("thermalize requires rate * dt <= 1"));
    }

    let dim = ens.dim();
    let (x, xi, w) = ens.collision_view();
    let index = CellIndex::build(dim, x, cell_size);

    let mut stats = CollisionStats::default();
    for (cell, idx) in index.cells() {
        if idx.len() < 3 {
            continue;
        }
        let mut stream = key.for_cell("collide/thermalize", *cell);
        let u: f64 = stream.random_range(0.0..1.0);
        if u >= rate * dt {
            continue;
        }
        stats.candidates += 1;

        let before = cell_moments(idx, dim, xi, w);
        let (m, v, _) = before;
        if m <= 0.0 {
            continue;
        }
        let mut mean = [0.0f64; 3];
        for k in 0..dim {
            mean[k] = v[k] / m;
        }
        // Centered energy, summed directly so it is nonnegative.
        let mut e_centered = 0.0;
        for &i in idx {
            let i = i as usize;
            let mut sq = 0.0;
            for k in 0..dim {
                let c = xi[i * dim + k] - mean[k];
                sq += c * c;
            }
            e_centered += w[i] * sq;
        }

        let mut draws = vec![0.0f64; idx.len() * dim];
        let mut applied = false;
        for attempt in 0..THERMALIZE_RETRIES {
            for d in draws.iter_mut() {
                *d = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut stream);
            }
            let mut gbar = [0.0f64; 3];
            for (p, &i) in idx.iter().enumerate() {
                for k in 0..dim {
                    gbar[k] += w[i as usize] * draws[p * dim + k];
                }
            }
            for k in 0..dim {
                gbar[k] /= m;
            }
            let mut spread = 0.0;
            for (p, &i) in idx.iter().enumerate() {
                let mut sq = 0.0;
                for k in 0..dim {
                    let c = draws[p * dim + k] - gbar[k];
                    sq += c * c;
                }
                spread += w[i as usize] * sq;
            }
            if spread > 0.0 {
                let alpha = (e_centered / spread).sqrt();
                for (p, &i) in idx.iter().enumerate() {
                    let i = i as usize;
                    let mut change_sq = 0.0;
                    for k in 0..dim {
                        let new = mean[k] + alpha * (draws[p * dim + k] - gbar[k]);
                        let d = new - xi[i * dim + k];
                        change_sq += d * d;
                        xi[i * dim + k] = new;
                    }
                    stats.sum_rel_speed += change_sq.sqrt();
                }
                applied = true;
                break;
            }
            if attempt + 1 == THERMALIZE_RETRIES {
                log::warn!("thermalize: degenerate draws in cell {cell:?}, cell skipped");
            }
        }
        if applied {
            stats.accepted += 1;
            let after = cell_moments(idx, dim, xi, w);
            stats.cell_drift.take_max(&rel_cell_drift(before, after));
        }
    }
    Ok(stats)
}

fn collide(
    ens: &mut Ensemble,
    kernel: &KernelConfig,
    dt: f64,
    key: StreamKey,
) -> Result<CollisionStats> {
    match kernel {
        KernelConfig::Null => Ok(CollisionStats::default()),
        KernelConfig::HardSphereDsmc { .. } => collide_hard_sphere(ens, kernel, dt, key),
        KernelConfig::Thermalize { .. } => collide_thermalize(ens, kernel, dt, key),
    }
}

/// First-order operator splitting: stream by `dt`, then run one collision
/// substep. The per-cell streams for the substep derive from the ensemble's
/// master seed and its running collision-step counter.
pub fn step(ens: &mut Ensemble, kernel: &KernelConfig, dt: f64) -> Result<CollisionStats> {
    if !(dt > 0.0) {
        return Err(Error::domain("step requires dt > 0"));
    }
    free_stream(ens, dt)?;
    step_collision_substep(ens, kernel, dt)
}

/// Splitting step that lands the clock exactly on `t_target` (the run loop
/// computes record times as `step_index * dt`, immune to accumulation drift).
pub fn step_to(ens: &mut Ensemble, kernel: &KernelConfig, t_target: f64, dt: f64) -> Result<CollisionStats> {
    free_stream_to(ens, t_target)?;
    step_collision_substep(ens, kernel, dt)
}

fn step_collision_substep(
    ens: &mut Ensemble,
    kernel: &KernelConfig,
    dt: f64,
) -> Result<CollisionStats> {
    if kernel.is_null() {
        return Ok(CollisionStats::default());
    }
    let master_seed = ens.seed_lineage.master_seed;
    let step_index = ens.bump_collision_steps();
    collide(
        ens,
        kernel,
        dt,
        StreamKey {
            master_seed,
            step_index,
        },
    )
}

/// Report from the local-conservation verifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MesoscopicReport {
    pub trials: u32,
    pub tol_rel: f64,
    /// Maximum over trials of the whole-ensemble relative drift.
    pub global_drift: MomentDrift,
    /// Maximum over trials of the per-cell relative drift maxima.
    pub cell_drift: MomentDrift,
    pub pass: bool,
}

/// Run `trials` independent collision substeps from the same state and report
/// the worst global and per-cell moment drifts. The kernel contract is that
/// both stay below 1e-12 relative.
pub fn verify_mesoscopic(
    ens: &Ensemble,
    kernel: &KernelConfig,
    dt: f64,
    trials: u32,
    seed: u64,
) -> Result<MesoscopicReport> {
    if trials < 1 {
        return Err(Error::domain("verify_mesoscopic requires trials >= 1"));
    }
    let tol_rel = 1e-12;
    let before = moments(ens)?;
    let vscale = (before.mass * before.energy).sqrt().max(f64::MIN_POSITIVE);

    let mut report = MesoscopicReport {
        trials,
        tol_rel,
        global_drift: MomentDrift::default(),
        cell_drift: MomentDrift::default(),
        pass: true,
    };
    for trial in 0..trials {
        let mut work = ens.clone();
        let key = StreamKey {
            master_seed: seed,
            step_index: trial as u64,
        };
        let stats = collide(&mut work, kernel, dt, key)?;
        let after = moments(&work)?;
        let dv = before
            .momentum
            .iter()
            .zip(&after.momentum)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let global = MomentDrift {
            mass: (after.mass - before.mass).abs() / before.mass.max(f64::MIN_POSITIVE),
            momentum: dv / vscale,
            energy: (after.energy - before.energy).abs() / before.energy.max(f64::MIN_POSITIVE),
        };
        report.global_drift.take_max(&global);
        report.cell_drift.take_max(&stats.cell_drift);
    }
    report.pass = report.global_drift.max_component() <= tol_rel
        && report.cell_drift.max_component() <= tol_rel;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{make_ensemble, InitSpec, SeedLineage};

    fn lineage(seed: u64) -> SeedLineage {
        SeedLineage {
            master_seed: seed,
            init_label: "test".into(),
            collision_steps: 0,
        }
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
    fn free_stream_moves_along_characteristics() {
        let mut ens = Ensemble::from_parts(
            2,
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![1.0],
            lineage(0),
        )
        .unwrap();
        free_stream(&mut ens, 0.5).unwrap();
        let mut pos = [0.0; 3];
        ens.position(0, &mut pos);
        assert_eq!(&pos[..2], &[2.0, 0.0]);
        assert!(free_stream(&mut ens, -0.1).is_err());
    }

    #[test]
    fn free_stream_zero_is_identity_and_moments_bit_exact() {
        let ens0 = gaussian(200, 4);
        let mut ens = ens0.clone();
        free_stream(&mut ens, 0.0).unwrap();
        assert_eq!(ens, ens0);
        free_stream(&mut ens, 0.7).unwrap();
        let m0 = moments(&ens0).unwrap();
        let m1 = moments(&ens).unwrap();
        assert_eq!(m0, m1);
    }

    #[test]
    fn streaming_composition_bit_exact() {
        let ens0 = gaussian(100, 5);
        let dt = 0.01;

        let mut once = ens0.clone();
        free_stream(&mut once, dt).unwrap();

        let mut twice = ens0.clone();
        free_stream(&mut twice, dt / 2.0).unwrap();
        free_stream(&mut twice, dt / 2.0).unwrap();

        let sa = once.snapshot();
        let sb = twice.snapshot();
        for (a, b) in sa.x.iter().zip(sb.x.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn head_on_deflection_swaps_velocities() {
        let (a, b) = hard_sphere_deflection(&[1.0, 0.0], &[-1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(a, vec![-1.0, 0.0]);
        assert_eq!(b, vec![1.0, 0.0]);
        // momentum and energy invariants
        assert_eq!(a[0] + b[0], 0.0);
        assert_eq!(a[0] * a[0] + b[0] * b[0], 2.0);
    }

    #[test]
    fn grazing_normal_leaves_pair_unchanged() {
        let (a, b) = hard_sphere_deflection(&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(a, vec![1.0, 0.0]);
        assert_eq!(b, vec![-1.0, 0.0]);
    }

    #[test]
    fn deflection_conserves_pair_invariants_randomly() {
        let mut stream = rng::stream(3, "test/deflection", &[]);
        for _ in 0..200 {
            let xi: Vec<f64> = (0..3).map(|_| stream.random_range(-2.0..2.0)).collect();
            let xj: Vec<f64> = (0..3).map(|_| stream.random_range(-2.0..2.0)).collect();
            let nrm = unit_vector(3, &mut stream);
            let (a, b) = hard_sphere_deflection(&xi, &xj, &nrm[..3]);
            let p0: f64 = xi.iter().zip(&xj).map(|(u, v)| u + v).map(f64::abs).sum();
            for k in 0..3 {
                let dp = (a[k] + b[k]) - (xi[k] + xj[k]);
                assert!(dp.abs() <= 1e-12 * (1.0 + p0));
            }
            let e0: f64 = xi.iter().chain(&xj).map(|c| c * c).sum();
            let e1: f64 = a.iter().chain(&b).map(|c| c * c).sum();
            assert!((e1 - e0).abs() <= 1e-12 * e0.max(1.0));
        }
    }

    #[test]
    fn dsmc_substep_preserves_cell_moments() {
        // One dense cell of 50 particles.
        let mut ens = make_ensemble(
            &InitSpec::GaussianCloud {
                center_x: vec![0.05, 0.05],
                center_xi: vec![0.0, 0.0],
                sigma_x: 0.01,
                sigma_xi: 1.0,
                count: 50,
                total_mass: 1.0,
            },
            8,
        )
        .unwrap();
        let cfg = KernelConfig::HardSphereDsmc {
            cell_size: 0.5,
            rate_scale: 50.0,
            majorant_rel_speed: 12.0,
            majorant_policy: MajorantPolicy::Abort,
        };
        let before = moments(&ens).unwrap();
        let stats = collide_hard_sphere(
            &mut ens,
            &cfg,
            0.1,
            StreamKey {
                master_seed: 8,
                step_index: 0,
            },
        )
        .unwrap();
        assert!(stats.accepted > 0, "expected collisions, got none");
        assert!(stats.accepted <= stats.candidates);
        // Oracle: recompute global moments by direct summation.
        let after = moments(&ens).unwrap();
        assert!((after.mass - before.mass).abs() <= 1e-12 * before.mass);
        for (a, b) in after.momentum.iter().zip(&before.momentum) {
            assert!((a - b).abs() <= 1e-12 * (before.mass * before.energy).sqrt());
        }
        assert!((after.energy - before.energy).abs() <= 1e-12 * before.energy);
        assert!(stats.cell_drift.max_component() <= 1e-12);
        assert!(stats.max_pair_distance <= 0.5 * 2.0f64.sqrt() + 1e-12);
    }

    #[test]
    fn dsmc_positions_and_weights_untouched() {
        let mut ens = gaussian(300, 12);
        let x_before = ens.snapshot().x.to_vec();
        let w_before = ens.weights().to_vec();
        let cfg = KernelConfig::HardSphereDsmc {
            cell_size: 0.4,
            rate_scale: 10.0,
            majorant_rel_speed: 12.0,
            majorant_policy: MajorantPolicy::Abort,
        };
        collide_hard_sphere(
            &mut ens,
            &cfg,
            0.1,
            StreamKey {
                master_seed: 12,
                step_index: 0,
            },
        )
        .unwrap();
        assert_eq!(ens.snapshot().x.to_vec(), x_before);
        assert_eq!(ens.weights(), w_before.as_slice());
    }

    #[test]
    fn majorant_abort_policy_fires() {
        // Two extremely fast opposing particles in one cell with a tiny majorant.
        let mut ens = Ensemble::from_parts(
            2,
            vec![0.1, 0.1, 0.2, 0.1],
            vec![50.0, 0.0, -50.0, 0.0],
            vec![1.0, 1.0],
            lineage(1),
        )
        .unwrap();
        let cfg = KernelConfig::HardSphereDsmc {
            cell_size: 1.0,
            rate_scale: 100.0,
            majorant_rel_speed: 0.5,
            majorant_policy: MajorantPolicy::Abort,
        };
        let got = collide_hard_sphere(
            &mut ens,
            &cfg,
            1.0,
            StreamKey {
                master_seed: 1,
                step_index: 0,
            },
        );
        assert!(matches!(got, Err(Error::MajorantViolation { .. })));
    }

    #[test]
    fn thermalize_preserves_cell_moments() {
        // Three equal-weight particles, V_cell = 0, E_cell = 6.
        let mut ens = Ensemble::from_parts(
            2,
            vec![0.1, 0.1, 0.15, 0.1, 0.1, 0.15],
            vec![2.0, 0.0, -1.0, 1.0, -1.0, -1.0],
            vec![1.0, 1.0, 1.0],
            lineage(2),
        )
        .unwrap();
        let before = moments(&ens).unwrap();
        assert_eq!(before.momentum, vec![0.0, 0.0]);
        assert_eq!(before.energy, 8.0);
        let cfg = KernelConfig::Thermalize {
            cell_size: 1.0,
            rate: 1.0,
        };
        let stats = collide_thermalize(
            &mut ens,
            &cfg,
            1.0,
            StreamKey {
                master_seed: 2,
                step_index: 0,
            },
        )
        .unwrap();
        assert_eq!(stats.accepted, 1);
        let after = moments(&ens).unwrap();
        assert!((after.energy - before.energy).abs() <= 1e-12 * before.energy);
        for (a, b) in after.momentum.iter().zip(&before.momentum) {
            assert!((a - b).abs() <= 1e-12 * (before.mass * before.energy).sqrt());
        }
    }

    #[test]
    fn thermalize_rate_zero_is_identity_and_small_cells_untouched() {
        let mut ens = gaussian(100, 6);
        let xi_before = ens.velocities().to_vec();
        let cfg = KernelConfig::Thermalize {
            cell_size: 0.4,
            rate: 0.0,
        };
        let stats = collide_thermalize(
            &mut ens,
            &cfg,
            0.5,
            StreamKey {
                master_seed: 6,
                step_index: 0,
            },
        )
        .unwrap();
        assert_eq!(stats.accepted, 0);
        assert_eq!(ens.velocities(), xi_before.as_slice());

        // A 2-particle cell stays untouched even at rate*dt = 1.
        let mut pair = Ensemble::from_parts(
            2,
            vec![0.1, 0.1, 0.2, 0.2],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 1.0],
            lineage(3),
        )
        .unwrap();
        let before = pair.velocities().to_vec();
        let cfg = KernelConfig::Thermalize {
            cell_size: 1.0,
            rate: 1.0,
        };
        collide_thermalize(
            &mut pair,
            &cfg,
            1.0,
            StreamKey {
                master_seed: 3,
                step_index: 0,
            },
        )
        .unwrap();
        assert_eq!(pair.velocities(), before.as_slice());
    }

    #[test]
    fn step_with_null_kernel_is_free_stream() {
        let mut a = gaussian(50, 9);
        let mut b = a.clone();
        step(&mut a, &KernelConfig::Null, 0.25).unwrap();
        free_stream(&mut b, 0.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verify_mesoscopic_null_kernel_is_exact() {
        let ens = gaussian(200, 10);
        let report = verify_mesoscopic(&ens, &KernelConfig::Null, 0.01, 5, 0).unwrap();
        assert_eq!(report.global_drift, MomentDrift::default());
        assert!(report.pass);
    }

    #[test]
    fn verify_mesoscopic_both_kernels_within_tolerance() {
        let ens = gaussian(1000, 11);
        let dsmc = KernelConfig::HardSphereDsmc {
            cell_size: 0.2,
            rate_scale: 5.0,
            majorant_rel_speed: 12.0,
            majorant_policy: MajorantPolicy::Abort,
        };
        let report = verify_mesoscopic(&ens, &dsmc, 0.01, 20, 1).unwrap();
        assert!(report.pass, "dsmc drift too large: {report:?}");

        let therm = KernelConfig::Thermalize {
            cell_size: 0.2,
            rate: 50.0,
        };
        let report = verify_mesoscopic(&ens, &therm, 0.01, 20, 2).unwrap();
        assert!(report.pass, "thermalize drift too large: {report:?}");
        assert!(report.cell_drift.max_component() <= 1e-12);
    }

    #[test]
    fn dsmc_step_deterministic_for_fixed_seed() {
        let cfg = KernelConfig::HardSphereDsmc {
            cell_size: 0.3,
            rate_scale: 10.0,
            majorant_rel_speed: 12.0,
            majorant_policy: MajorantPolicy::Abort,
        };
        let mut a = gaussian(400, 21);
        let mut b = gaussian(400, 21);
        for _ in 0..5 {
            step(&mut a, &cfg, 0.01).unwrap();
            step(&mut b, &cfg, 0.01).unwrap();
        }
        assert_eq!(a, b);
    }
}
