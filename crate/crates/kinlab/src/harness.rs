//! Scripted experiments and per-claim certification.
//!
//! `run_experiment` evolves an ensemble and emits a [`DiagnosticsRecord`]
//! stream; the `check_*` functions are pure functions of that series (plus
//! the run configuration) that certify each transport identity or bound and
//! report the measured margin.
//!
//! Time integrals accumulate by left-endpoint Riemann sums: single-particle
//! accumulators at the diagnostics cadence, pair accumulators at the pair
//! cadence (`pair_every`, a multiple of `diag_every`, because exact pair
//! reductions cost O(N^2)). Limits "as T goes to infinity" are certified as
//! monotone accumulator + tail-decay saturation + an explicit finite-T lower
//! bound with declared slack; each report notes the finite-T surrogate used.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dynamics::{step_to, CollisionStats, KernelConfig};
use crate::error::{Error, Result};
use crate::functionals::{
    morawetz_increment, pair_functionals, ConeSpec, DiagnosticsRecord, PairReduceStrategy,
};
use crate::phase::{localization, make_ensemble, moments, InitSpec};

/// Tolerances and allowance constants shared by the checks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckSettings {
    /// O(h) allowance constant: collisional drift budgets are
    /// kappa * h * (total collisional velocity change).
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Relative drift budget for mass, momentum, and energy.
    #[serde(default = "default_conservation_tol")]
    pub conservation_tol: f64,
    /// Relative tolerance for the uncertainty-growth bound.
    #[serde(default = "default_eq16_tol")]
    pub eq16_tol: f64,
    /// Tail-decay threshold: P(T) - P(T/2) <= ratio * P(T/2).
    #[serde(default = "default_saturation_ratio")]
    pub saturation_ratio: f64,
    /// Relative tolerance of the flux-telescoping identity.
    #[serde(default = "default_telescope_tol")]
    pub telescope_tol: f64,
    /// Finite-T slack absorbed by the concentration lower bound.
    #[serde(default = "default_thm43_slack")]
    pub thm43_slack: f64,
    /// Allowed relative deviation of U_I(T)/T from E_rel(0).
    #[serde(default = "default_growth_band")]
    pub growth_band: f64,
}

fn default_kappa() -> f64 {
    1e-3
}
fn default_conservation_tol() -> f64 {
    1e-10
}
fn default_eq16_tol() -> f64 {
    1e-6
}
fn default_saturation_ratio() -> f64 {
    0.1
}
fn default_telescope_tol() -> f64 {
    0.01
}
fn default_thm43_slack() -> f64 {
    0.02
}
fn default_growth_band() -> f64 {
    0.05
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            kappa: default_kappa(),
            conservation_tol: default_conservation_tol(),
            eq16_tol: default_eq16_tol(),
            saturation_ratio: default_saturation_ratio(),
            telescope_tol: default_telescope_tol(),
            thm43_slack: default_thm43_slack(),
            growth_band: default_growth_band(),
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub dt: f64,
    pub t_end: f64,
    /// Emit a record every this many steps.
    pub diag_every: u64,
    /// Evaluate O(N^2) pair functionals every this many steps; must be a
    /// multiple of `diag_every`. Defaults to `diag_every`.
    #[serde(default)]
    pub pair_every: Option<u64>,
    /// Radius of the centered ball for the single-particle energy integral.
    pub d_radius: f64,
    /// Pair-separation radius for the interaction energy integral.
    #[serde(default = "default_imorawetz_radius")]
    pub imorawetz_radius: f64,
    pub init: InitSpec,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub cones: Vec<ConeSpec>,
    #[serde(default)]
    pub strategy: PairReduceStrategy,
    #[serde(default)]
    pub checks: CheckSettings,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_imorawetz_radius() -> f64 {
    5.0
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config("dt must be > 0"));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::config("t_end must be >= dt"));
        }
        if self.diag_every < 1 {
            return Err(Error::config("diag_every must be >= 1"));
        }
        let pair_every = self.pair_every();
        if pair_every % self.diag_every != 0 {
            return Err(Error::config("pair_every must be a multiple of diag_every"));
        }
        if !(self.d_radius > 0.0) {
            return Err(Error::config("d_radius must be > 0"));
        }
        if !(self.imorawetz_radius > 0.0) {
            return Err(Error::config("imorawetz_radius must be > 0"));
        }
        let steps = self.n_steps();
        if steps < 1 {
            return Err(Error::config("t_end must cover at least one step of dt"));
        }
        if ((steps as f64) * self.dt - self.t_end).abs() > 1e-9 * self.dt {
            return Err(Error::config("t_end must be an integer multiple of dt"));
        }
        self.kernel.validate()?;
        self.strategy.validate()?;
        for cone in &self.cones {
            cone.validate()?;
        }
        Ok(())
    }

    pub fn pair_every(&self) -> u64 {
        self.pair_every.unwrap_or(self.diag_every)
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    fn h_allowance(&self) -> Option<HAllowance> {
        self.kernel.cell_size().map(|h| HAllowance {
            cell_size: h,
            kappa: self.checks.kappa,
        })
    }
}

/// First-order-in-h drift budget for collisional kernels.
#[derive(Debug, Clone, Copy)]
pub struct HAllowance {
    pub cell_size: f64,
    pub kappa: f64,
}

impl HAllowance {
    /// kappa * h * (sum of collisional velocity-change magnitudes).
    fn budget(&self, sum_rel_speed: f64) -> f64 {
        self.kappa * self.cell_size * sum_rel_speed
    }
}

fn allowance(h: Option<HAllowance>, sum_rel_speed: f64) -> f64 {
    h.map(|a| a.budget(sum_rel_speed)).unwrap_or(0.0)
}

/// Run the configured experiment, handing each record to `sink` as soon as
/// it is complete (so partial series reach disk before an abort).
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, mut sink: F) -> Result<()>
where
    F: FnMut(&DiagnosticsRecord) -> Result<()>,
{
    cfg.validate()?;
    let mut ens = make_ensemble(&cfg.init, cfg.master_seed)?;
    let pair_every = cfg.pair_every();
    let n_steps = cfg.n_steps();

    let mut cum = CollisionStats::default();
    let mut morawetz_partial = 0.0;
    let mut imorawetz_partial = 0.0;
    let mut al_flux_partial = 0.0;
    let mut gamma_time_sum = vec![0.0; cfg.cones.len()];

    // Left-endpoint state.
    let mut last_diag_t = 0.0;
    let mut last_morawetz_inc = morawetz_increment(&ens, cfg.d_radius)?;
    let mut last_pair_t = 0.0;
    let mut pair =
        pair_functionals(&ens, &cfg.cones, cfg.imorawetz_radius, &cfg.strategy)?;
    let ig_init_bound = pair.gap_bound;

    let emit = |ens: &crate::phase::Ensemble,
                pair: &crate::functionals::PairFunctionals,
                fresh: bool,
                cum: &CollisionStats,
                morawetz_partial: f64,
                imorawetz_partial: f64,
                al_flux_partial: f64,
                gamma_time_sum: &[f64]|
     -> Result<DiagnosticsRecord> {
        let m = moments(ens)?;
        let a = crate::functionals::angular_momentum(ens)?;
        let u = crate::functionals::uncertainty(ens)?;
        let loc = localization(ens)?;
        let t = ens.time();
        let m2 = m.mass * m.mass;
        let gamma_frac: Vec<f64> = pair.gamma_mass.iter().map(|g| g / m2).collect();
        let gamma_time_avg: Vec<f64> = if t > 0.0 {
            gamma_time_sum.iter().map(|s| s / t).collect()
        } else {
            gamma_frac.clone()
        };
        Ok(DiagnosticsRecord {
            t,
            m: m.mass,
            v: m.momentum.clone(),
            e: m.energy,
            localization: loc,
            a,
            u,
            g_gap: u - a,
            a_l: pair.localized_angular_momentum,
            d_pair: pair.dot,
            e_rel: pair.rel_energy,
            u_i: pair.uncertainty,
            ig_gap: pair.uncertainty - pair.dot,
            ig_init_bound,
            morawetz_partial,
            imorawetz_partial,
            al_flux_partial,
            gamma_mass: pair.gamma_mass.clone(),
            gamma_time_avg,
            pair_fresh: fresh,
            coll_candidates: cum.candidates,
            coll_accepted: cum.accepted,
            coll_clamps: cum.majorant_clamps,
            coll_sum_rel_speed: cum.sum_rel_speed,
            coll_max_pair_distance: cum.max_pair_distance,
            cell_drift_mass: cum.cell_drift.mass,
            cell_drift_momentum: cum.cell_drift.momentum,
            cell_drift_energy: cum.cell_drift.energy,
        })
    };

    sink(&emit(
        &ens,
        &pair,
        true,
        &cum,
        morawetz_partial,
        imorawetz_partial,
        al_flux_partial,
        &gamma_time_sum,
    )?)?;

    let m2 = {
        let m = moments(&ens)?;
        m.mass * m.mass
    };

    for k in 1..=n_steps {
        let t_target = k as f64 * cfg.dt;
        let stats = step_to(&mut ens, &cfg.kernel, t_target, cfg.dt)?;
        cum.absorb(&stats);

        let at_diag = k % cfg.diag_every == 0 || k == n_steps;
        if !at_diag {
            continue;
        }
        let t_now = ens.time();

        // Left-endpoint slice for the single-particle accumulator.
        morawetz_partial += (t_now - last_diag_t) * last_morawetz_inc;
        last_morawetz_inc = morawetz_increment(&ens, cfg.d_radius)?;
        last_diag_t = t_now;

        let at_pair = k % pair_every == 0 || k == n_steps;
        if at_pair {
            let dt_pair = t_now - last_pair_t;
            imorawetz_partial += dt_pair * pair.morawetz_increment;
            al_flux_partial += dt_pair * pair.al_derivative;
            for (sum, g) in gamma_time_sum.iter_mut().zip(&pair.gamma_mass) {
                *sum += dt_pair * (g / m2);
            }
            pair = pair_functionals(&ens, &cfg.cones, cfg.imorawetz_radius, &cfg.strategy)?;
            last_pair_t = t_now;
        }

        sink(&emit(
            &ens,
            &pair,
            at_pair,
            &cum,
            morawetz_partial,
            imorawetz_partial,
            al_flux_partial,
            &gamma_time_sum,
        )?)?;
    }
    Ok(())
}

/// Run the experiment and collect the full series.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<DiagnosticsRecord>> {
    let mut series = Vec::new();
    run_experiment_with(cfg, |rec| {
        series.push(rec.clone());
        Ok(())
    })?;
    Ok(series)
}

/// Measured quantity vs. bound for one claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub claim: String,
    pub measured: serde_json::Value,
    pub bound: serde_json::Value,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default)]
    pub inconclusive: bool,
    pub notes: String,
}

impl TheoremReport {
    pub fn verdict(&self) -> &'static str {
        if self.inconclusive {
            "inconclusive"
        } else if self.pass {
            "pass"
        } else {
            "fail"
        }
    }
}

fn need_records(series: &[DiagnosticsRecord]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::input("series must contain at least 2 records"));
    }
    Ok(())
}

fn fresh_rows<'a>(series: &'a [DiagnosticsRecord]) -> Vec<&'a DiagnosticsRecord> {
    series.iter().filter(|r| r.pair_fresh).collect()
}

/// Relative drift of M, V (scaled by sqrt(ME)), and E across the series.
pub fn check_conservation(series: &[DiagnosticsRecord], tol_rel: f64) -> Result<TheoremReport> {
    need_records(series)?;
    let first = &series[0];
    let vscale = (first.m * first.e).sqrt().max(f64::MIN_POSITIVE);
    let escale = if first.e > 0.0 { first.e } else { 1.0 };
    let mut max_m = 0.0f64;
    let mut max_v = 0.0f64;
    let mut max_e = 0.0f64;
    for r in &series[1..] {
        max_m = max_m.max((r.m - first.m).abs() / first.m);
        for (a, b) in r.v.iter().zip(&first.v) {
            max_v = max_v.max((a - b).abs() / vscale);
        }
        max_e = max_e.max((r.e - first.e).abs() / escale);
    }
    let worst = max_m.max(max_v).max(max_e);
    Ok(TheoremReport {
        claim: "conservation".to_string(),
        measured: json!({"mass": max_m, "momentum": max_v, "energy": max_e}),
        bound: json!(tol_rel),
        tolerance: tol_rel,
        pass: worst <= tol_rel,
        inconclusive: false,
        notes: format!("max relative drift {worst:.3e} over {} records", series.len()),
    })
}

/// A(t) = A(0) + t E: exact (1e-12 of scale) for free transport, first order
/// in the cell size for collisional kernels.
pub fn check_a_linear(series: &[DiagnosticsRecord], h: Option<HAllowance>) -> Result<TheoremReport> {
    need_records(series)?;
    let first = &series[0];
    let t_end = series.last().unwrap().t;
    let scale = 1.0 + first.a.abs() + t_end * first.e;
    let base_tol = 1e-12 * scale;
    let mut max_resid = 0.0f64;
    let mut max_tol = base_tol;
    let mut ok = true;
    for r in &series[1..] {
        let resid = (r.a - first.a - r.t * first.e).abs();
        let tol = base_tol + allowance(h, r.coll_sum_rel_speed);
        max_resid = max_resid.max(resid);
        max_tol = max_tol.max(tol);
        if resid > tol {
            ok = false;
        }
    }
    Ok(TheoremReport {
        claim: "A-linear".to_string(),
        measured: json!(max_resid),
        bound: json!(max_tol),
        tolerance: max_tol,
        pass: ok,
        inconclusive: false,
        notes: format!(
            "max |A(t) - A(0) - tE| = {max_resid:.3e}; collisional allowance {}",
            if h.is_some() { "applied" } else { "none (free transport)" }
        ),
    })
}

/// sup_t (U - A) <= localization(0) + E - A(0).
pub fn check_eq16(
    series: &[DiagnosticsRecord],
    init_localization: f64,
    eq16_tol: f64,
    h: Option<HAllowance>,
) -> Result<TheoremReport> {
    need_records(series)?;
    let first = &series[0];
    let bound = init_localization + first.e - first.a;
    let scale = bound.abs().max(1.0);
    let mut max_gap = f64::NEG_INFINITY;
    let mut ok = true;
    let mut max_tol = 0.0f64;
    for r in series {
        let tol = eq16_tol * scale + allowance(h, r.coll_sum_rel_speed);
        max_gap = max_gap.max(r.g_gap);
        max_tol = max_tol.max(tol);
        if r.g_gap > bound + tol {
            ok = false;
        }
    }
    Ok(TheoremReport {
        claim: "eq1.6".to_string(),
        measured: json!(max_gap),
        bound: json!(bound),
        tolerance: max_tol,
        pass: ok,
        inconclusive: false,
        notes: format!("margin {:.3e}", bound + max_tol - max_gap),
    })
}

/// Localized angular momentum: bounded by (M+E)^2, nondecreasing up to the
/// collisional allowance, upward total variation at most 2 (M+E)^2.
pub fn check_al(series: &[DiagnosticsRecord], h: Option<HAllowance>) -> Result<TheoremReport> {
    need_records(series)?;
    let fresh = fresh_rows(series);
    if fresh.len() < 2 {
        return Err(Error::input("series carries fewer than 2 pair checkpoints"));
    }
    let first = &series[0];
    let al_bound = (first.m + first.e) * (first.m + first.e);

    let mut bounded = true;
    for r in &fresh {
        if r.a_l.abs() > al_bound {
            bounded = false;
        }
    }
    let mut monotone = true;
    let mut min_diff = f64::INFINITY;
    let mut tv_up = 0.0;
    for w in fresh.windows(2) {
        let d = w[1].a_l - w[0].a_l;
        let window_speed = w[1].coll_sum_rel_speed - w[0].coll_sum_rel_speed;
        let tol = 1e-12 * al_bound + allowance(h, window_speed);
        if d < -tol {
            monotone = false;
        }
        min_diff = min_diff.min(d);
        tv_up += d.max(0.0);
    }
    let tv_ok = tv_up <= 2.0 * al_bound;
    let pass = bounded && monotone && tv_ok;
    Ok(TheoremReport {
        claim: "AL-monotone".to_string(),
        measured: json!({
            "max_abs": fresh.iter().map(|r| r.a_l.abs()).fold(0.0, f64::max),
            "min_increment": min_diff,
            "tv_up": tv_up,
        }),
        bound: json!({"abs": al_bound, "tv_up": 2.0 * al_bound}),
        tolerance: 1e-12 * al_bound,
        pass,
        inconclusive: false,
        notes: format!(
            "bounded={bounded} monotone={monotone} tv_ok={tv_ok} over {} pair checkpoints",
            fresh.len()
        ),
    })
}

/// D(t) = D(0) + t E_rel(0): exact for free transport, first order in h for
/// collisional kernels.
pub fn check_lemma31(series: &[DiagnosticsRecord], h: Option<HAllowance>) -> Result<TheoremReport> {
    need_records(series)?;
    let fresh = fresh_rows(series);
    if fresh.len() < 2 {
        return Err(Error::input("series carries fewer than 2 pair checkpoints"));
    }
    let first = fresh[0];
    let t_end = fresh.last().unwrap().t;
    let scale = 1.0 + first.d_pair.abs() + t_end * first.e_rel;
    let base_tol = 1e-12 * scale;
    let mut max_resid = 0.0f64;
    let mut max_tol = base_tol;
    let mut ok = true;
    for r in &fresh[1..] {
        let resid = (r.d_pair - first.d_pair - r.t * first.e_rel).abs();
        let tol = base_tol + allowance(h, r.coll_sum_rel_speed);
        max_resid = max_resid.max(resid);
        max_tol = max_tol.max(tol);
        if resid > tol {
            ok = false;
        }
    }
    Ok(TheoremReport {
        claim: "lemma3.1".to_string(),
        measured: json!(max_resid),
        bound: json!(max_tol),
        tolerance: max_tol,
        pass: ok,
        inconclusive: false,
        notes: format!("max |D(t) - D(0) - t E_rel(0)| = {max_resid:.3e}"),
    })
}

/// sup_t IG(t) below the initial-data pair bound, and U_I(T)/T near E_rel(0)
/// once T is long enough for the bounded gap to be negligible.
pub fn check_thm35(series: &[DiagnosticsRecord], growth_band: f64) -> Result<TheoremReport> {
    need_records(series)?;
    let fresh = fresh_rows(series);
    if fresh.is_empty() {
        return Err(Error::input("series carries no pair checkpoints"));
    }
    let bound = series[0].ig_init_bound;
    let sup_ig = fresh.iter().map(|r| r.ig_gap).fold(f64::NEG_INFINITY, f64::max);
    // Strictness at machine precision is not asserted; the margin is reported.
    let part_a = sup_ig <= bound * (1.0 + 1e-12) + f64::MIN_POSITIVE;

    let last = fresh.last().unwrap();
    let e_rel0 = fresh[0].e_rel;
    let t_end = last.t;
    let (growth_ok, growth_conclusive, ratio) = if e_rel0 == 0.0 {
        // Zero relative energy: U_I is constant zero and so is its growth.
        (last.u_i.abs() <= 1e-12 * bound.max(1.0), true, 0.0)
    } else {
        let conclusive = t_end >= 20.0 * bound / e_rel0;
        let ratio = last.u_i / t_end / e_rel0;
        (
            (ratio - 1.0).abs() <= growth_band,
            conclusive,
            ratio,
        )
    };

    // The sup-IG bound is decided either way; if it fails the claim fails,
    // otherwise a closed growth window leaves the claim inconclusive.
    let (pass, inconclusive, growth_note) = if !part_a {
        (false, false, "sup IG bound violated".to_string())
    } else if growth_conclusive {
        (growth_ok, false, format!("growth ratio {ratio:.4}"))
    } else {
        (
            false,
            true,
            format!(
                "sup IG bound holds; growth check inconclusive: T = {t_end} < 20 * bound / E_rel(0) = {:.3}",
                20.0 * bound / e_rel0
            ),
        )
    };
    Ok(TheoremReport {
        claim: "thm3.5".to_string(),
        measured: json!({"sup_ig": sup_ig, "ui_over_t": last.u_i / t_end.max(f64::MIN_POSITIVE)}),
        bound: json!({"sup_ig": bound, "growth": e_rel0}),
        tolerance: growth_band,
        pass,
        inconclusive,
        notes: format!("sup IG margin {:.3e}; {growth_note}", bound - sup_ig),
    })
}

fn nearest_row<'a>(rows: &[&'a DiagnosticsRecord], t: f64) -> &'a DiagnosticsRecord {
    rows.iter()
        .min_by(|a, b| {
            (a.t - t)
                .abs()
                .partial_cmp(&(b.t - t).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap()
}

/// Interaction energy integral: monotone, saturating, and telescoping
/// against the flux accumulator.
pub fn check_thm22(
    series: &[DiagnosticsRecord],
    saturation_ratio: f64,
    telescope_tol: f64,
    h: Option<HAllowance>,
) -> Result<TheoremReport> {
    need_records(series)?;
    let fresh = fresh_rows(series);
    if fresh.len() < 2 {
        return Err(Error::input("series carries fewer than 2 pair checkpoints"));
    }
    let mut monotone = true;
    for w in fresh.windows(2) {
        if w[1].imorawetz_partial < w[0].imorawetz_partial {
            monotone = false;
        }
    }
    let last = fresh.last().unwrap();
    let t_end = last.t;
    let half = nearest_row(&fresh, t_end / 2.0);
    let p_half = half.imorawetz_partial;
    let p_end = last.imorawetz_partial;
    let (saturated, sat_note) = if p_half == 0.0 {
        (true, "saturation skipped: P(T/2) = 0".to_string())
    } else {
        let ok = p_end - p_half <= saturation_ratio * p_half;
        (
            ok,
            format!(
                "tail growth {:.3e} vs budget {:.3e}",
                p_end - p_half,
                saturation_ratio * p_half
            ),
        )
    };

    let first = &series[0];
    let al_bound = (first.m + first.e) * (first.m + first.e);
    let delta_al = last.a_l - fresh[0].a_l;
    let flux = last.al_flux_partial;
    let tele_scale = delta_al.abs().max(1e-9 * al_bound);
    let tele_tol = telescope_tol * tele_scale + allowance(h, last.coll_sum_rel_speed);
    let telescoped = (flux - delta_al).abs() <= tele_tol;

    let pass = monotone && saturated && telescoped;
    Ok(TheoremReport {
        claim: "thm2.2".to_string(),
        measured: json!({"p_end": p_end, "p_half": p_half, "flux": flux, "delta_al": delta_al}),
        bound: json!({"saturation_ratio": saturation_ratio, "telescope_tol": tele_tol}),
        tolerance: tele_tol,
        pass,
        inconclusive: false,
        notes: format!(
            "monotone={monotone}; {sat_note}; |flux - dAL| = {:.3e}",
            (flux - delta_al).abs()
        ),
    })
}

/// Bounded-set energy integral: monotone and saturating.
pub fn check_eq17(series: &[DiagnosticsRecord], saturation_ratio: f64) -> Result<TheoremReport> {
    need_records(series)?;
    let mut monotone = true;
    for w in series.windows(2) {
        if w[1].morawetz_partial < w[0].morawetz_partial {
            monotone = false;
        }
    }
    let rows: Vec<&DiagnosticsRecord> = series.iter().collect();
    let last = rows.last().unwrap();
    let half = nearest_row(&rows, last.t / 2.0);
    let p_half = half.morawetz_partial;
    let p_end = last.morawetz_partial;
    let (saturated, sat_note) = if p_half == 0.0 {
        (true, "saturation skipped: P(T/2) = 0".to_string())
    } else {
        let ok = p_end - p_half <= saturation_ratio * p_half;
        (
            ok,
            format!(
                "tail growth {:.3e} vs budget {:.3e}",
                p_end - p_half,
                saturation_ratio * p_half
            ),
        )
    };
    Ok(TheoremReport {
        claim: "eq1.7".to_string(),
        measured: json!({"p_end": p_end, "p_half": p_half}),
        bound: json!({"saturation_ratio": saturation_ratio}),
        tolerance: saturation_ratio,
        pass: monotone && saturated,
        inconclusive: false,
        notes: format!("monotone={monotone}; {sat_note}"),
    })
}

/// Concentration of pair mass in the punctured blind cones: the running time
/// average of Gamma/M^2 must clear the bound driven by sup IG, and its
/// distance from 1 must not grow over the last quarter of the run.
pub fn check_thm43(
    series: &[DiagnosticsRecord],
    cone: &ConeSpec,
    cone_index: usize,
    slack: f64,
) -> Result<TheoremReport> {
    need_records(series)?;
    let fresh = fresh_rows(series);
    if fresh.is_empty() {
        return Err(Error::input("series carries no pair checkpoints"));
    }
    if fresh
        .iter()
        .any(|r| r.gamma_time_avg.len() <= cone_index)
    {
        return Err(Error::input("series does not carry this cone index"));
    }
    let m2 = series[0].m * series[0].m;
    let denom = cone.gap_floor() * m2;
    if !(denom > 1e-300) {
        return Err(Error::config(
            "R * v * (1 - cos c) * M^2 underflows; enlarge the cone parameters",
        ));
    }
    let sup_ig = fresh
        .iter()
        .map(|r| r.ig_gap.max(0.0))
        .fold(0.0f64, f64::max);
    let lower = 1.0 - sup_ig / denom - slack;
    let last = fresh.last().unwrap();
    let avg = last.gamma_time_avg[cone_index];
    let bound_ok = avg >= lower;

    // Last-quarter trend of the distance from full concentration.
    let t_end = last.t;
    let tail: Vec<&DiagnosticsRecord> = fresh
        .iter()
        .copied()
        .filter(|r| r.t >= 0.75 * t_end)
        .collect();
    let (trend_ok, slope) = if tail.len() < 2 {
        (true, 0.0)
    } else {
        let xs: Vec<f64> = tail.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = tail
            .iter()
            .map(|r| (1.0 - r.gamma_time_avg[cone_index]).max(0.0))
            .collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let span = xs.last().unwrap() - xs[0];
        // Allow a rise that is negligible next to the distance itself.
        let budget = 1e-3 * (my + 1e-12);
        (slope * span <= budget, slope)
    };

    let claim = if cone_index == 0 {
        "thm4.3".to_string()
    } else {
        format!("thm4.3#{cone_index}")
    };
    Ok(TheoremReport {
        claim,
        measured: json!({"gamma_time_avg": avg, "sup_ig": sup_ig, "trend_slope": slope}),
        bound: json!(lower),
        tolerance: slack,
        pass: bound_ok && trend_ok,
        inconclusive: false,
        notes: format!(
            "avg {avg:.6} vs lower bound {lower:.6} (c={}, v={}, R={}); trend_ok={trend_ok}",
            cone.apex_angle, cone.puncture_speed, cone.separation_radius
        ),
    })
}

/// Run every check that applies to this configuration.
pub fn run_all_checks(
    series: &[DiagnosticsRecord],
    cfg: &ExperimentConfig,
) -> Result<Vec<TheoremReport>> {
    need_records(series)?;
    let h = cfg.h_allowance();
    let mut reports = vec![
        check_conservation(series, cfg.checks.conservation_tol)?,
        check_a_linear(series, h)?,
        check_eq16(series, series[0].localization, cfg.checks.eq16_tol, h)?,
        check_al(series, h)?,
        check_lemma31(series, h)?,
        check_thm35(series, cfg.checks.growth_band)?,
        check_thm22(
            series,
            cfg.checks.saturation_ratio,
            cfg.checks.telescope_tol,
            h,
        )?,
        check_eq17(series, cfg.checks.saturation_ratio)?,
    ];
    for (idx, cone) in cfg.cones.iter().enumerate() {
        reports.push(check_thm43(series, cone, idx, cfg.checks.thm43_slack)?);
    }
    let provenance = format!(
        " [h={:?} dt={} T={} seed={}]",
        cfg.kernel.cell_size(),
        cfg.dt,
        cfg.t_end,
        cfg.master_seed
    );
    for r in &mut reports {
        r.notes.push_str(&provenance);
    }
    Ok(reports)
}
