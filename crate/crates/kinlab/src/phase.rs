//! Phase-space representation: weighted particle ensembles, initial-condition
//! generators, and single-integral moments.
//!
//! An [`Ensemble`] stores positions at a base time and evaluates them lazily
//! as `x(t) = x_base + (t - base_t) * xi`. Free transport therefore advances a
//! single clock instead of touching every coordinate, which keeps streaming
//! exact: composing two streaming steps gives bit-identical positions to one
//! combined step whenever the time increments add exactly (dt/2 + dt/2 always
//! does). Collision kernels rebase positions before mutating velocities.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce::{fold_indices, DEFAULT_CHUNK};
use crate::rng;

/// One weighted sample of the phase-space density.
///
/// Coordinates are padded to three components; an ensemble's dimension says
/// how many are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: [f64; 3],
    pub xi: [f64; 3],
    pub w: f64,
}

impl Particle {
    pub fn new(n: usize, x: &[f64], xi: &[f64], w: f64) -> Result<Self> {
        if !(2..=3).contains(&n) || x.len() != n || xi.len() != n {
            return Err(Error::domain("particle coordinates must match dimension 2 or 3"));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::domain("particle weight must be finite and nonnegative"));
        }
        if x.iter().chain(xi.iter()).any(|c| !c.is_finite()) {
            return Err(Error::domain("particle coordinates must be finite"));
        }
        let mut p = Particle {
            x: [0.0; 3],
            xi: [0.0; 3],
            w,
        };
        p.x[..n].copy_from_slice(x);
        p.xi[..n].copy_from_slice(xi);
        Ok(p)
    }
}

/// Provenance of every random draw that shaped an ensemble.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeedLineage {
    pub master_seed: u64,
    /// Label of the stream that generated the initial condition.
    pub init_label: String,
    /// Number of collision substeps applied so far; used as the step index
    /// when deriving per-cell collision streams.
    pub collision_steps: u64,
}

/// Initial-condition generators.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// Isotropic Gaussian cloud in position and velocity.
    GaussianCloud {
        center_x: Vec<f64>,
        center_xi: Vec<f64>,
        sigma_x: f64,
        sigma_xi: f64,
        count: usize,
        total_mass: f64,
    },
    /// Two Gaussian clouds separated along the first axis with exactly
    /// opposing velocities: the cloud at -separation/2 moves at +beam_speed
    /// along axis 1, the other at -beam_speed. Positive beam_speed means the
    /// beams approach.
    TwoBeam {
        dim: usize,
        separation: f64,
        beam_speed: f64,
        sigma: f64,
        count_per_beam: usize,
        total_mass: f64,
    },
    /// Particles on a centered sphere with radially outward velocities, so
    /// position and velocity are parallel for every particle.
    Ring {
        dim: usize,
        radius: f64,
        speed: f64,
        count: usize,
        total_mass: f64,
    },
    /// CSV file with header `x1,..,xn,xi1,..,xin,w`.
    FromFile { path: PathBuf },
}

impl InitSpec {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(msg.to_string()));
        match self {
            InitSpec::GaussianCloud {
                center_x,
                center_xi,
                sigma_x,
                sigma_xi,
                count,
                total_mass,
            } => {
                let n = center_x.len();
                if !(2..=3).contains(&n) {
                    return bad("gaussian_cloud: center_x must have 2 or 3 components");
                }
                if center_xi.len() != n {
                    return bad("gaussian_cloud: center_xi length must match center_x");
                }
                if *count < 1 {
                    return bad("gaussian_cloud: count must be >= 1");
                }
                if !(*total_mass > 0.0) {
                    return bad("gaussian_cloud: total_mass must be > 0");
                }
                if !(*sigma_x > 0.0) || !(*sigma_xi > 0.0) {
                    return bad("gaussian_cloud: sigmas must be > 0");
                }
            }
            InitSpec::TwoBeam {
                dim,
                separation,
                beam_speed,
                sigma,
                count_per_beam,
                total_mass,
            } => {
                if !(2..=3).contains(dim) {
                    return bad("two_beam: dim must be 2 or 3");
                }
                if *count_per_beam < 1 {
                    return bad("two_beam: count_per_beam must be >= 1");
                }
                if !(*total_mass > 0.0) {
                    return bad("two_beam: total_mass must be > 0");
                }
                if !(*sigma > 0.0) {
                    return bad("two_beam: sigma must be > 0");
                }
                if !separation.is_finite() || !beam_speed.is_finite() {
                    return bad("two_beam: separation and beam_speed must be finite");
                }
            }
            InitSpec::Ring {
                dim,
                radius,
                speed,
                count,
                total_mass,
            } => {
                if !(2..=3).contains(dim) {
                    return bad("ring: dim must be 2 or 3");
                }
                if *count < 1 {
                    return bad("ring: count must be >= 1");
                }
                if !(*total_mass > 0.0) {
                    return bad("ring: total_mass must be > 0");
                }
                if !(*radius > 0.0) {
                    return bad("ring: radius must be > 0");
                }
                if !(*speed >= 0.0) || !speed.is_finite() {
                    return bad("ring: speed must be finite and >= 0");
                }
            }
            InitSpec::FromFile { .. } => {}
        }
        Ok(())
    }

    fn label(&self) -> &'static str {
        match self {
            InitSpec::GaussianCloud { .. } => "init/gaussian_cloud",
            InitSpec::TwoBeam { .. } => "init/two_beam",
            InitSpec::Ring { .. } => "init/ring",
            InitSpec::FromFile { .. } => "init/from_file",
        }
    }
}

/// Empirical stand-in for the phase-space density: an ordered list of
/// weighted particles plus the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    n: usize,
    t: f64,
    base_t: f64,
    /// Positions at `base_t`, stride `n`.
    x0: Vec<f64>,
    /// Velocities, stride `n`.
    xi: Vec<f64>,
    w: Vec<f64>,
    pub seed_lineage: SeedLineage,
}

/// Read-only snapshot with positions materialized at the ensemble's time.
pub struct PhaseSnapshot<'a> {
    pub n: usize,
    pub x: Cow<'a, [f64]>,
    pub xi: &'a [f64],
    pub w: &'a [f64],
}

impl Ensemble {
    pub fn from_particles(n: usize, particles: &[Particle], lineage: SeedLineage) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::domain("ensemble must contain at least one particle"));
        }
        let mut x0 = Vec::with_capacity(particles.len() * n);
        let mut xi = Vec::with_capacity(particles.len() * n);
        let mut w = Vec::with_capacity(particles.len());
        for p in particles {
            x0.extend_from_slice(&p.x[..n]);
            xi.extend_from_slice(&p.xi[..n]);
            w.push(p.w);
        }
        Self::from_parts(n, x0, xi, w, lineage)
    }

    pub fn from_parts(
        n: usize,
        x0: Vec<f64>,
        xi: Vec<f64>,
        w: Vec<f64>,
        seed_lineage: SeedLineage,
    ) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::domain("dimension must be 2 or 3"));
        }
        if w.is_empty() || x0.len() != w.len() * n || xi.len() != w.len() * n {
            return Err(Error::domain("coordinate arrays must match particle count"));
        }
        if x0.iter().chain(xi.iter()).any(|c| !c.is_finite()) {
            return Err(Error::domain("coordinates must be finite"));
        }
        if w.iter().any(|wi| !wi.is_finite() || *wi < 0.0) {
            return Err(Error::domain("weights must be finite and nonnegative"));
        }
        if !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::domain("total mass must be positive"));
        }
        Ok(Ensemble {
            n,
            t: 0.0,
            base_t: 0.0,
            x0,
            xi,
            w,
            seed_lineage,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    #[inline]
    pub fn velocities(&self) -> &[f64] {
        &self.xi
    }

    /// Advance the clock; positions follow lazily.
    pub(crate) fn advance_time(&mut self, dt: f64) {
        self.t += dt;
    }

    /// Jump the clock to an exact target time (used by the run loop so record
    /// times are `step_index * dt` with no accumulation drift).
    pub(crate) fn set_time(&mut self, t: f64) -> Result<()> {
        if t < self.t {
            return Err(Error::domain("time must be nondecreasing"));
        }
        self.t = t;
        Ok(())
    }

    /// Position of particle `i` at the current time, written into `out[..n]`.
    #[inline]
    pub fn position(&self, i: usize, out: &mut [f64; 3]) {
        let dt = self.t - self.base_t;
        let s = i * self.n;
        for k in 0..self.n {
            out[k] = self.x0[s + k] + dt * self.xi[s + k];
        }
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.xi[i * self.n..(i + 1) * self.n]
    }

    /// Materialize all positions at the current time.
    pub fn snapshot(&self) -> PhaseSnapshot<'_> {
        let dt = self.t - self.base_t;
        let x = if dt == 0.0 {
            Cow::Borrowed(self.x0.as_slice())
        } else {
            Cow::Owned(
                self.x0
                    .iter()
                    .zip(self.xi.iter())
                    .map(|(x, xi)| x + dt * xi)
                    .collect(),
            )
        };
        PhaseSnapshot {
            n: self.n,
            x,
            xi: &self.xi,
            w: &self.w,
        }
    }

    /// Materialize positions at the current time and expose velocities for
    /// mutation. Rebasing first keeps lazily evaluated positions unchanged
    /// when velocities are rewritten by a collision kernel.
    pub(crate) fn collision_view(&mut self) -> (&[f64], &mut [f64], &[f64]) {
        let dt = self.t - self.base_t;
        if dt != 0.0 {
            for (x, xi) in self.x0.iter_mut().zip(self.xi.iter()) {
                *x += dt * xi;
            }
            self.base_t = self.t;
        }
        (&self.x0, &mut self.xi, &self.w)
    }

    pub(crate) fn bump_collision_steps(&mut self) -> u64 {
        let step = self.seed_lineage.collision_steps;
        self.seed_lineage.collision_steps += 1;
        step
    }
}

/// Total mass, momentum, and energy of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
}

impl Moments {
    /// |V|^2 <= M * E on any nonnegative empirical measure.
    pub fn cauchy_schwarz_ok(&self) -> bool {
        let v2: f64 = self.momentum.iter().map(|v| v * v).sum();
        v2 <= self.mass * self.energy * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

/// Build an ensemble from a generator spec and a master seed. Deterministic
/// for fixed `(spec, master_seed)`; weights sum to the configured total mass
/// exactly (any rounding remainder is folded into the last particle).
pub fn make_ensemble(spec: &InitSpec, master_seed: u64) -> Result<Ensemble> {
    spec.validate()?;
    let lineage = SeedLineage {
        master_seed,
        init_label: spec.label().to_string(),
        collision_steps: 0,
    };
    let mut stream = rng::stream(master_seed, spec.label(), &[]);
    let normal = StandardNormal;

    let (n, count, total_mass) = match spec {
        InitSpec::GaussianCloud {
            center_x, count, total_mass, ..
        } => (center_x.len(), *count, *total_mass),
        InitSpec::TwoBeam {
            dim,
            count_per_beam,
            total_mass,
            ..
        } => (*dim, 2 * count_per_beam, *total_mass),
        InitSpec::Ring {
            dim, count, total_mass, ..
        } => (*dim, *count, *total_mass),
        InitSpec::FromFile { path } => return ensemble_from_csv(path, lineage),
    };

    let mut x = Vec::with_capacity(count * n);
    let mut xi = Vec::with_capacity(count * n);
    match spec {
        InitSpec::GaussianCloud {
            center_x,
            center_xi,
            sigma_x,
            sigma_xi,
            ..
        } => {
            for _ in 0..count {
                for k in 0..n {
                    let z: f64 = normal.sample(&mut stream);
                    x.push(center_x[k] + sigma_x * z);
                }
                for k in 0..n {
                    let z: f64 = normal.sample(&mut stream);
                    xi.push(center_xi[k] + sigma_xi * z);
                }
            }
        }
        InitSpec::TwoBeam {
            separation,
            beam_speed,
            sigma,
            count_per_beam,
            ..
        } => {
            for beam in 0..2usize {
                let sign = if beam == 0 { -1.0 } else { 1.0 };
                let cx = sign * separation / 2.0;
                for _ in 0..*count_per_beam {
                    for k in 0..n {
                        let z: f64 = normal.sample(&mut stream);
                        let center = if k == 0 { cx } else { 0.0 };
                        x.push(center + sigma * z);
                    }
                    xi.push(-sign * beam_speed);
                    xi.extend(std::iter::repeat_n(0.0, n - 1));
                }
            }
        }
        InitSpec::Ring { radius, speed, .. } => {
            for _ in 0..count {
                let u = unit_vector(n, &mut stream);
                for k in 0..n {
                    x.push(radius * u[k]);
                }
                for k in 0..n {
                    xi.push(speed * u[k]);
                }
            }
        }
        InitSpec::FromFile { .. } => unreachable!(),
    }

    let w = exact_mass_weights(count, total_mass);
    Ensemble::from_parts(n, x, xi, w, lineage)
}

/// Uniform weights whose sequential sum reproduces `total` exactly.
fn exact_mass_weights(count: usize, total: f64) -> Vec<f64> {
    let base = total / count as f64;
    let mut w = vec![base; count];
    let partial: f64 = w[..count - 1].iter().sum();
    w[count - 1] = total - partial;
    w
}

/// Uniform direction on the unit circle (n=2) or sphere (n=3).
pub(crate) fn unit_vector(n: usize, stream: &mut rng::Stream) -> [f64; 3] {
    use rand::Rng;
    let mut u = [0.0; 3];
    if n == 2 {
        let theta: f64 = stream.random_range(0.0..std::f64::consts::TAU);
        u[0] = theta.cos();
        u[1] = theta.sin();
    } else {
        let z: f64 = stream.random_range(-1.0..1.0);
        let phi: f64 = stream.random_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).max(0.0).sqrt();
        u[0] = r * phi.cos();
        u[1] = r * phi.sin();
        u[2] = z;
    }
    u
}

fn ensemble_from_csv(path: &Path, lineage: SeedLineage) -> Result<Ensemble> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::input(format!("bad CSV header: {e}")))?
        .clone();
    let cols = headers.len();
    if cols != 5 && cols != 7 {
        return Err(Error::input(format!(
            "expected header x1,..,xn,xi1,..,xin,w with n in {{2,3}}, found {cols} columns"
        )));
    }
    let n = (cols - 1) / 2;
    let mut expected: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    expected.extend((1..=n).map(|k| format!("xi{k}")));
    expected.push("w".to_string());
    for (got, want) in headers.iter().zip(&expected) {
        if got != want {
            return Err(Error::input(format!(
                "unexpected CSV column `{got}`, expected `{want}`"
            )));
        }
    }

    let mut particles = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::input(format!("CSV row {}: {e}", line + 2)))?;
        let vals: Vec<f64> = record
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::input(format!("CSV row {}: {e}", line + 2)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != cols {
            return Err(Error::input(format!("CSV row {}: wrong arity", line + 2)));
        }
        particles.push(Particle::new(n, &vals[..n], &vals[n..2 * n], vals[2 * n])?);
    }
    if particles.is_empty() {
        return Err(Error::input("CSV contains no particles"));
    }
    Ensemble::from_particles(n, &particles, lineage)
}

/// Total mass, momentum, and energy, reduced in deterministic chunked order.
pub fn moments(ens: &Ensemble) -> Result<Moments> {
    moments_chunked(ens, DEFAULT_CHUNK)
}

pub fn moments_chunked(ens: &Ensemble, chunk: usize) -> Result<Moments> {
    if ens.is_empty() {
        return Err(Error::domain("moments of an empty ensemble"));
    }
    let n = ens.dim();
    let xi = ens.velocities();
    let w = ens.weights();
    let sums: [f64; 5] = fold_indices(ens.len(), chunk, || [0.0; 5], |acc, i| {
        let wi = w[i];
        let v = &xi[i * n..(i + 1) * n];
        acc[0] += wi;
        let mut sq = 0.0;
        for k in 0..n {
            acc[1 + k] += wi * v[k];
            sq += v[k] * v[k];
        }
        acc[4] += wi * sq;
    });
    Ok(Moments {
        mass: sums[0],
        momentum: sums[1..1 + n].to_vec(),
        energy: sums[4],
    })
}

/// Second spatial moment `sum_i w_i |x_i|^2` at the ensemble's current time.
pub fn localization(ens: &Ensemble) -> Result<f64> {
    localization_chunked(ens, DEFAULT_CHUNK)
}

pub fn localization_chunked(ens: &Ensemble, chunk: usize) -> Result<f64> {
    if ens.is_empty() {
        return Err(Error::domain("localization of an empty ensemble"));
    }
    let snap = ens.snapshot();
    let n = snap.n;
    Ok(fold_indices(ens.len(), chunk, || 0.0, |acc, i| {
        let x = &snap.x[i * n..(i + 1) * n];
        let mut sq = 0.0;
        for c in x {
            sq += c * c;
        }
        *acc += snap.w[i] * sq;
    }))
}
