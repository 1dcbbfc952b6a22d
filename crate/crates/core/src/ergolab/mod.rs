//! Named ergodicity experiments. Each one maps a verifiable qualitative
//! claim about the dynamics onto a reproducible run with declared
//! pass/fail rules; every experiment is a deterministic function of its
//! spec and seed, and verdict rules are pure functions of the recorded
//! statistics.

use crate::dynamics::{
    simulate, simulate_coupled, simulate_observed, DynError, Integrator, SimConfig,
};
use crate::field::{l1_norm_with, SpectralField, TrigTransform};
use crate::kvec::{BasisIndex, KVec};
use crate::lattice::{a_perp_contains, reachable_set};
use crate::malliavin::{control_residual_run, malliavin_gram, min_quadratic_on_cap, MalliavinError};
use crate::rng::StreamKey;
use crate::stats::{
    batch_means, clopper_pearson_lower, energy_permutation_test, linear_fit, BatchStats, LineFit,
};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Malliavin(#[from] MalliavinError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
}

pub const REGISTERED: &[&str] = &[
    "energy_identity",
    "l1_contraction",
    "perp_decay",
    "ou_law",
    "uniqueness_probe",
    "irreducibility",
    "eproperty",
    "density_proxy",
    "malliavin_spectrum",
    "residual_decay",
];

/// Input to one experiment run.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub name: String,
    pub config: SimConfig,
    pub u0: SpectralField,
    pub u0_secondary: Option<SpectralField>,
    /// Experiment-specific numeric knobs.
    pub params: BTreeMap<String, f64>,
    /// Wavevector-valued knobs (probe modes).
    pub mode_params: BTreeMap<String, KVec>,
    pub ensemble: usize,
    pub burn_in: f64,
}

impl ExperimentSpec {
    pub fn new(name: &str, config: SimConfig, u0: SpectralField) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            config,
            u0,
            u0_secondary: None,
            params: BTreeMap::new(),
            mode_params: BTreeMap::new(),
            ensemble: 1,
            burn_in: 0.0,
        }
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    /// Default burn-in from the slowest tracked heat rate.
    pub fn effective_burn_in(&self) -> f64 {
        if self.burn_in > 0.0 {
            self.burn_in
        } else {
            5.0 / self.config.nu
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExperimentVerdict {
    Pass,
    Fail,
    ReportOnly,
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservableStats {
    pub name: String,
    #[serde(flatten)]
    pub stats: BatchStats,
}

/// A recorded scalar time series, for optional CSV export.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesData {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub observables: Vec<ObservableStats>,
    pub details: BTreeMap<String, f64>,
    pub verdict: ExperimentVerdict,
    pub series: Vec<SeriesData>,
    /// Filled by the writer once the series lands in a file.
    pub series_ref: Option<String>,
}

impl ExperimentRecord {
    fn new(name: &str) -> Self {
        ExperimentRecord {
            name: name.to_string(),
            params: BTreeMap::new(),
            observables: Vec::new(),
            details: BTreeMap::new(),
            verdict: ExperimentVerdict::ReportOnly,
            series: Vec::new(),
            series_ref: None,
        }
    }

    fn echo_params(&mut self, spec: &ExperimentSpec) {
        self.params.insert("nu".into(), format!("{}", spec.config.nu));
        self.params.insert("dt".into(), format!("{}", spec.config.dt));
        self.params
            .insert("t_end".into(), format!("{}", spec.config.t_end));
        self.params
            .insert("cutoff".into(), format!("{}", spec.config.cutoff));
        self.params
            .insert("seed".into(), format!("{}", spec.config.seed));
        self.params
            .insert("ensemble".into(), format!("{}", spec.ensemble));
        for (k, v) in &spec.params {
            self.params.insert(k.clone(), format!("{v}"));
        }
        for (k, v) in &spec.mode_params {
            self.params.insert(k.clone(), format!("{v}"));
        }
    }
}

/// Dispatch on the registered experiment names.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    spec.config
        .validate()
        .map_err(ExperimentError::InvalidSpec)?;
    match spec.name.as_str() {
        "energy_identity" => exp_energy_identity(spec),
        "l1_contraction" => exp_l1_contraction(spec),
        "perp_decay" => exp_perp_decay(spec),
        "ou_law" => exp_ou_law(spec),
        "uniqueness_probe" => exp_uniqueness_probe(spec),
        "irreducibility" => exp_irreducibility(spec),
        "eproperty" => exp_eproperty(spec),
        "density_proxy" => exp_density_proxy(spec),
        "malliavin_spectrum" => exp_malliavin_spectrum(spec),
        "residual_decay" => exp_residual_decay(spec),
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

/// Deterministic pseudo-random field with spectrum `~ (1 + |k|^2)^-1`.
pub fn random_field(dim: usize, cutoff: usize, key: StreamKey, tag: u64) -> SpectralField {
    let mut f = SpectralField::zeros(dim, cutoff);
    let probe = f.clone();
    for (i, (k, _)) in probe.modes().enumerate() {
        let g = key.gaussian(tag, i as u64);
        f.set(&k, g / (1.0 + k.norm_sq() as f64));
    }
    f
}

/// Deterministic per-step energy identity for the noise-free dynamics:
/// the jump of the squared norm per step must match the viscous
/// dissipation, with the H1 term averaged over the step endpoints.
fn exp_energy_identity(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    if !spec.config.noise.is_empty() {
        return Err(ExperimentError::InvalidSpec(
            "energy identity requires zero noise".into(),
        ));
    }
    let cfg = &spec.config;
    let integ = Integrator::new(cfg)?;
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    let mut prev: Option<(f64, f64)> = None; // (norm^2, h1^2)
    let mut max_rel = 0.0f64;
    let mut defects = Vec::new();
    simulate_observed(cfg, &spec.u0, |_, t, u| {
        let e = u.inner(u);
        let h1 = integ.h1_norm_sq(u);
        if let Some((e0, h10)) = prev {
            let lhs = (e - e0) / cfg.dt;
            let rhs = -2.0 * cfg.nu * 0.5 * (h1 + h10);
            let rel = (lhs - rhs).abs() / rhs.abs().max(1e-300);
            max_rel = max_rel.max(rel);
            defects.push((t, rel));
        }
        prev = Some((e, h1));
    })?;
    let tol = 10.0 * cfg.dt;
    rec.details.insert("max_rel_defect".into(), max_rel);
    rec.details.insert("tolerance".into(), tol);
    rec.verdict = if max_rel <= tol {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    rec.series.push(SeriesData {
        name: "rel_defect".into(),
        points: defects,
    });
    Ok(rec)
}

/// Pathwise L1 contraction between coupled solutions: the discrete L1
/// distance may never exceed its running minimum beyond the stated
/// tolerances, across every checkpoint pair.
fn exp_l1_contraction(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let n_pairs = spec.ensemble.max(1);
    let results: Vec<Result<(f64, Vec<(f64, f64)>), DynError>> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.stream_id = cfg.stream().substream(i as u64).stream;
            let key = StreamKey::new(cfg.seed ^ 0xa5a5, c.stream_id);
            let trig = TrigTransform::new(cfg.flux.dim(), cfg.grid_size);
            let (u0, v0) = if i == 0 {
                (
                    spec.u0.clone(),
                    spec.u0_secondary.clone().unwrap_or_else(|| {
                        random_field(cfg.flux.dim(), cfg.cutoff, key, 1)
                    }),
                )
            } else {
                (
                    random_field(cfg.flux.dim(), cfg.cutoff, key, 0),
                    random_field(cfg.flux.dim(), cfg.cutoff, key, 1),
                )
            };
            let mut running_min = f64::INFINITY;
            let mut worst = 0.0f64;
            let mut series = Vec::new();
            simulate_coupled(&c, &[u0, v0], |step, t, states| {
                let d = l1_norm_with(&trig, &states[0].sub(&states[1]));
                if step % 50 == 0 {
                    series.push((t, d));
                }
                let bound = running_min * (1.0 + 1e-6) + 1e-8;
                if d > bound {
                    worst = worst.max(d - bound);
                }
                running_min = running_min.min(d);
            })?;
            Ok((worst, series))
        })
        .collect();
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    let mut max_violation = 0.0f64;
    for (i, r) in results.into_iter().enumerate() {
        let (worst, series) = r?;
        max_violation = max_violation.max(worst);
        if i == 0 {
            rec.series.push(SeriesData {
                name: "l1_distance_pair0".into(),
                points: series,
            });
        }
    }
    rec.details.insert("max_violation".into(), max_violation);
    rec.details.insert("pairs".into(), n_pairs as f64);
    rec.verdict = if max_violation == 0.0 {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    Ok(rec)
}

/// A mode pair orthogonal to the flux and outside the reachable set must
/// decay at exactly twice the heat rate, noise elsewhere notwithstanding.
fn exp_perp_decay(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let k_star = spec
        .mode_params
        .get("probe_mode")
        .cloned()
        .ok_or_else(|| ExperimentError::InvalidSpec("perp_decay needs probe_mode".into()))?;
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);

    // Lattice preconditions: probe orthogonal to the flux and unreachable.
    let in_perp = a_perp_contains(&cfg.flux, &k_star);
    let radius = (k_star.max_norm() + 2).max(cfg.noise.max_norm() + 2);
    let degree = cfg.flux.degree().map_or(1, |d| d) as i32;
    let (reached, _) = reachable_set(&cfg.flux, &cfg.noise, radius, 2 * degree)?;
    let reachable = reached.contains(&k_star);
    rec.details
        .insert("lattice_precondition_ok".into(), f64::from(in_perp && !reachable));

    let mut u0 = spec.u0.clone();
    u0.set(&k_star, 1.0);
    let mut series = Vec::new();
    let neg = k_star.neg();
    simulate_observed(cfg, &u0, |step, t, u| {
        if step % 10 == 0 {
            let e = u.get(&k_star).powi(2) + u.get(&neg).powi(2);
            series.push((t, e));
        }
    })?;
    let usable: Vec<(f64, f64)> = series.iter().filter(|(_, e)| *e > 1e-280).cloned().collect();
    let (ts, logs): (Vec<f64>, Vec<f64>) = usable.iter().map(|(t, e)| (*t, e.ln())).unzip();
    let fit = linear_fit(&ts, &logs);
    let want_rate = 2.0 * cfg.nu * k_star.norm_sq() as f64;
    let rate = -fit.slope;
    let rel_err = (rate - want_rate).abs() / want_rate;
    rec.details.insert("fitted_rate".into(), rate);
    rec.details.insert("expected_rate".into(), want_rate);
    rec.details.insert("rate_rel_err".into(), rel_err);
    rec.details.insert("r_squared".into(), fit.r_squared);
    rec.series.push(SeriesData {
        name: "pair_energy".into(),
        points: series,
    });
    rec.verdict = if in_perp && !reachable && rel_err <= 0.01 && fit.r_squared > 0.999 {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    Ok(rec)
}

/// Stationary 2x2 covariance of the coupled linear mode pair, solved in
/// closed form. For `dx = (-a x - s y) dt + b1 dW1, dy = (s x - a y) dt
/// + b2 dW2` the stationary covariance [[p, q], [q, r]] is returned.
pub fn pair_lyapunov_solution(a: f64, s: f64, b1: f64, b2: f64) -> (f64, f64, f64) {
    let total = (b1 * b1 + b2 * b2) / (2.0 * a);
    let diff = (b1 * b1 - b2 * b2) * a / (2.0 * (a * a + s * s));
    let q = s * diff / (2.0 * a);
    ((total + diff) / 2.0, q, (total - diff) / 2.0)
}

/// Monte Carlo stationary covariance of a forced mode pair under a linear
/// flux against the analytic solution.
fn exp_ou_law(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let degree = cfg.flux.degree().map_err(|e| ExperimentError::Lattice(e))?;
    if degree != 1 {
        return Err(ExperimentError::InvalidSpec(
            "ou_law requires a linear flux".into(),
        ));
    }
    let k = spec
        .mode_params
        .get("probe_mode")
        .cloned()
        .unwrap_or_else(|| KVec::unit(cfg.flux.dim(), 0));
    let neg = k.neg();
    let b_pos = cfg
        .noise
        .amplitude(&k)
        .ok_or_else(|| ExperimentError::InvalidSpec("probe mode must be forced".into()))?;
    let b_neg = cfg.noise.amplitude(&neg).unwrap();
    let conv = TrigTransform::basis_norm(cfg.flux.dim());
    let a_rate = cfg.nu * k.norm_sq() as f64;
    let table = cfg.flux.to_f64_table();
    let s_coupling: f64 = k
        .0
        .iter()
        .enumerate()
        .map(|(i, &ki)| table[i][1] * ki as f64)
        .sum();
    let (p_want, q_want, r_want) =
        pair_lyapunov_solution(a_rate, s_coupling, b_pos * conv, b_neg * conv);

    let burn = spec.effective_burn_in();
    let sample_every = spec.param("sample_every", 2.0);
    let stride = (sample_every / cfg.dt).round().max(1.0) as usize;
    let burn_steps = (burn / cfg.dt).round() as usize;
    let members = spec.ensemble.max(2);
    let est: Vec<Result<([f64; 3], Vec<f64>), DynError>> = (0..members)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.stream_id = cfg.stream().substream(i as u64).stream;
            let mut acc = [0.0f64; 3];
            let mut n = 0usize;
            let mut xx_series = Vec::new();
            simulate_observed(&c, &spec.u0, |step, _, u| {
                if step > burn_steps && step % stride == 0 {
                    let x = u.get(&k);
                    let y = u.get(&neg);
                    acc[0] += x * x;
                    acc[1] += x * y;
                    acc[2] += y * y;
                    xx_series.push(x * x);
                    n += 1;
                }
            })?;
            Ok((
                [acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64],
                xx_series,
            ))
        })
        .collect();
    let mut per_member = Vec::new();
    let mut pooled_xx = Vec::new();
    for r in est {
        let (m, series) = r?;
        per_member.push(m);
        pooled_xx.extend(series);
    }
    let total_samples = pooled_xx.len();
    let mean = |idx: usize| {
        per_member.iter().map(|m| m[idx]).sum::<f64>() / per_member.len() as f64
    };
    let se = |idx: usize, mu: f64| {
        let var = per_member
            .iter()
            .map(|m| (m[idx] - mu).powi(2))
            .sum::<f64>()
            / (per_member.len() - 1) as f64;
        (var / per_member.len() as f64).sqrt()
    };
    let got = [mean(0), mean(1), mean(2)];
    let want = [p_want, q_want, r_want];
    let ses = [se(0, got[0]), se(1, got[1]), se(2, got[2])];
    let mut ok = true;
    for i in 0..3 {
        let tol = (0.05 * want[i].abs()).max(3.0 * ses[i]);
        if (got[i] - want[i]).abs() > tol {
            ok = false;
        }
    }
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    rec.details.insert("cov_xx".into(), got[0]);
    rec.details.insert("cov_xy".into(), got[1]);
    rec.details.insert("cov_yy".into(), got[2]);
    rec.details.insert("want_xx".into(), want[0]);
    rec.details.insert("want_xy".into(), want[1]);
    rec.details.insert("want_yy".into(), want[2]);
    rec.details.insert("se_xx".into(), ses[0]);
    rec.details.insert("se_xy".into(), ses[1]);
    rec.details.insert("se_yy".into(), ses[2]);
    rec.details
        .insert("raw_samples".into(), total_samples as f64);
    rec.observables.push(ObservableStats {
        name: "pair_xx".into(),
        stats: batch_means(&pooled_xx, 20),
    });
    rec.verdict = if ok {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    Ok(rec)
}

/// Low-mode observable vector used by the law-comparison experiments.
fn low_mode_observable(u: &SpectralField, max_norm_sq: i64) -> Vec<f64> {
    let mut out = Vec::new();
    for (k, v) in u.modes() {
        if k.norm_sq() <= max_norm_sq {
            out.push(v);
        }
    }
    out
}

/// Empirical laws of the low-mode vector from two initial conditions,
/// compared by the energy distance with a permutation test. Report-only.
fn exp_uniqueness_probe(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let u0a = spec.u0.clone();
    let u0b = spec
        .u0_secondary
        .clone()
        .ok_or_else(|| ExperimentError::InvalidSpec("uniqueness_probe needs two initial fields".into()))?;
    let members = spec.ensemble.max(8);
    let horizons: Vec<f64> = vec![cfg.t_end / 4.0, cfg.t_end / 2.0, cfg.t_end];
    let horizon_steps: Vec<usize> = horizons
        .iter()
        .map(|t| (t / cfg.dt).round() as usize)
        .collect();
    let run = |u0: &SpectralField, salt: u64| -> Result<Vec<Vec<Vec<f64>>>, DynError> {
        let collected: Vec<Result<Vec<Vec<f64>>, DynError>> = (0..members)
            .into_par_iter()
            .map(|i| {
                let mut c = cfg.clone();
                c.stream_id = cfg.stream().substream(salt * 7919 + i as u64).stream;
                let mut snaps: Vec<Vec<f64>> = Vec::new();
                simulate_observed(&c, u0, |step, _, u| {
                    if horizon_steps.contains(&step) {
                        snaps.push(low_mode_observable(u, 4));
                    }
                })?;
                Ok(snaps)
            })
            .collect();
        let mut per_horizon = vec![Vec::new(); horizons.len()];
        for r in collected {
            for (h, v) in r?.into_iter().enumerate() {
                per_horizon[h].push(v);
            }
        }
        Ok(per_horizon)
    };
    let laws_a = run(&u0a, 1)?;
    let laws_b = run(&u0b, 2)?;
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    let mut dist_series = Vec::new();
    let mut final_p = 0.0;
    for (h, t) in horizons.iter().enumerate() {
        let (dist, p) = energy_permutation_test(
            &laws_a[h],
            &laws_b[h],
            499,
            StreamKey::new(cfg.seed ^ 0x7e57, h as u64),
        );
        dist_series.push((*t, dist));
        if h + 1 == horizons.len() {
            final_p = p;
        }
    }
    rec.details.insert("final_p_value".into(), final_p);
    rec.details
        .insert("final_distance".into(), dist_series.last().unwrap().1);
    rec.series.push(SeriesData {
        name: "energy_distance".into(),
        points: dist_series,
    });
    rec.verdict = ExperimentVerdict::ReportOnly;
    Ok(rec)
}

/// Monte Carlo probability of returning to a small ball from large data.
fn exp_irreducibility(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let gamma = spec.param("gamma", 0.5);
    let members = spec.ensemble.max(16);
    let hits: Vec<Result<bool, DynError>> = (0..members)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.stream_id = cfg.stream().substream(i as u64).stream;
            let integ = Integrator::new(&c)?;
            let mut last = 0.0;
            simulate_observed(&c, &spec.u0, |_, _, u| {
                last = integ.monitor_norm(u);
            })?;
            Ok(last <= gamma)
        })
        .collect();
    let mut successes = 0usize;
    for h in hits {
        if h? {
            successes += 1;
        }
    }
    let freq = successes as f64 / members as f64;
    let lb = clopper_pearson_lower(successes, members, 0.95);
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    rec.details.insert("frequency".into(), freq);
    rec.details.insert("cp_lower_95".into(), lb);
    rec.details.insert("successes".into(), successes as f64);
    rec.verdict = if successes > 0 && lb > 0.0 {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    Ok(rec)
}

/// Equicontinuity probe: common-noise coupling of a base trajectory with
/// shrinking initial perturbations; records the modulus-of-continuity
/// curve of a bounded Lipschitz observable. Report-only.
fn exp_eproperty(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let deltas = [0.1, 0.05, 0.025];
    let members = spec.ensemble.max(8);
    let eval_every = spec.param("eval_every", 5.0);
    let stride = (eval_every / cfg.dt).round().max(1.0) as usize;
    let xi = {
        let f = random_field(
            cfg.flux.dim(),
            cfg.cutoff,
            StreamKey::new(cfg.seed ^ 0xe19e, 0),
            0,
        );
        f.scale(1.0 / f.norm())
    };
    let obs = |u: &SpectralField| {
        (u.get(&KVec::unit(cfg.flux.dim(), 0))).tanh()
    };
    // diffs[delta][horizon] accumulates f(u^delta) - f(u0) over members.
    let per_member: Vec<Result<Vec<Vec<f64>>, DynError>> = (0..members)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.stream_id = cfg.stream().substream(i as u64).stream;
            let mut inits = vec![spec.u0.clone()];
            for d in deltas {
                let mut p = spec.u0.clone();
                p.axpy(d, &xi);
                inits.push(p);
            }
            let mut rows: Vec<Vec<f64>> = vec![Vec::new(); deltas.len()];
            simulate_coupled(&c, &inits, |step, _, states| {
                if step > 0 && step % stride == 0 {
                    let base = obs(&states[0]);
                    for (j, row) in rows.iter_mut().enumerate() {
                        row.push(obs(&states[j + 1]) - base);
                    }
                }
            })?;
            Ok(rows)
        })
        .collect();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut count = 0.0;
    for r in per_member {
        let rows = r?;
        if sums.is_empty() {
            sums = rows;
        } else {
            for (s, row) in sums.iter_mut().zip(rows) {
                for (a, b) in s.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        count += 1.0;
    }
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    let mut moduli = Vec::new();
    for (j, d) in deltas.iter().enumerate() {
        let curve: Vec<(f64, f64)> = sums[j]
            .iter()
            .enumerate()
            .map(|(i, s)| (((i + 1) * stride) as f64 * cfg.dt, (s / count).abs()))
            .collect();
        let modulus = curve.iter().map(|(_, v)| *v).fold(0.0f64, f64::max);
        let last = curve.last().map(|(_, v)| *v).unwrap_or(0.0);
        moduli.push(modulus);
        rec.details.insert(format!("modulus_delta_{d}"), modulus);
        rec.details.insert(format!("final_delta_{d}"), last);
        rec.series.push(SeriesData {
            name: format!("diff_delta_{d}"),
            points: curve,
        });
    }
    let nonincreasing = moduli[0] >= moduli[1] && moduli[1] >= moduli[2];
    let final_small = rec.details[&format!("final_delta_{}", deltas[2])]
        <= rec.details[&format!("final_delta_{}", deltas[0])];
    rec.details
        .insert("modulus_nonincreasing".into(), f64::from(nonincreasing));
    rec.details
        .insert("final_comparison_ok".into(), f64::from(final_small));
    rec.verdict = ExperimentVerdict::ReportOnly;
    Ok(rec)
}

/// Stationary histograms: a reachable mode must spread (no atom), while a
/// flux-orthogonal unreachable mode collapses to zero.
fn exp_density_proxy(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let k_cont = spec
        .mode_params
        .get("cont_mode")
        .cloned()
        .ok_or_else(|| ExperimentError::InvalidSpec("density_proxy needs cont_mode".into()))?;
    let k_atom = spec
        .mode_params
        .get("atom_mode")
        .cloned()
        .ok_or_else(|| ExperimentError::InvalidSpec("density_proxy needs atom_mode".into()))?;
    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);

    // Lattice preconditions.
    let radius = (k_cont.max_norm().max(k_atom.max_norm()) + 2).max(cfg.noise.max_norm() + 2);
    let degree = cfg.flux.degree().map_or(1, |d| d) as i32;
    let (reached, _) = reachable_set(&cfg.flux, &cfg.noise, radius, 2 * degree)?;
    let pre_ok = reached.contains(&k_cont)
        && !reached.contains(&k_atom)
        && a_perp_contains(&cfg.flux, &k_atom);
    rec.details
        .insert("lattice_precondition_ok".into(), f64::from(pre_ok));

    let burn = {
        let min_burn = 5.0 / (cfg.nu * k_atom.norm_sq() as f64);
        spec.effective_burn_in().max(min_burn)
    };
    let burn_steps = (burn / cfg.dt).round() as usize;
    let stride = (spec.param("sample_every", 0.05) / cfg.dt).round().max(1.0) as usize;
    let members = spec.ensemble.max(4);
    // Seed the atom mode so its collapse is demonstrated, not vacuous.
    let mut u0 = spec.u0.clone();
    u0.set(&k_atom, 1.0);
    let samples: Vec<Result<(Vec<f64>, Vec<f64>), DynError>> = (0..members)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.stream_id = cfg.stream().substream(i as u64).stream;
            let mut cont = Vec::new();
            let mut atom = Vec::new();
            simulate_observed(&c, &u0, |step, _, u| {
                if step > burn_steps && step % stride == 0 {
                    cont.push(u.get(&k_cont));
                    atom.push(u.get(&k_atom));
                }
            })?;
            Ok((cont, atom))
        })
        .collect();
    let mut cont_all = Vec::new();
    let mut atom_all = Vec::new();
    for s in samples {
        let (c, a) = s?;
        cont_all.extend(c);
        atom_all.extend(a);
    }
    // No-atom test: bin width std/10, no bin holding more than half.
    let n = cont_all.len() as f64;
    let mean = cont_all.iter().sum::<f64>() / n;
    let std = (cont_all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let width = std / 10.0;
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for x in &cont_all {
        *bins.entry(((x - mean) / width).floor() as i64).or_insert(0) += 1;
    }
    let max_bin_frac = bins.values().map(|&c| c as f64 / n).fold(0.0f64, f64::max);
    let collapse_frac = atom_all.iter().filter(|x| x.abs() <= 1e-6).count() as f64
        / atom_all.len() as f64;
    rec.details.insert("max_bin_fraction".into(), max_bin_frac);
    rec.details.insert("collapse_fraction".into(), collapse_frac);
    rec.details.insert("cont_samples".into(), n);
    rec.details.insert("cont_std".into(), std);
    rec.observables.push(ObservableStats {
        name: "cont_mode".into(),
        stats: batch_means(&cont_all, 20),
    });
    rec.verdict = if pre_ok && max_bin_frac <= 0.5 && collapse_frac >= 0.99 {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    Ok(rec)
}

/// Distribution of the cap-constrained Gram minimum across independent
/// paths, plus the degenerate zero-flux control along an unforced mode.
fn exp_malliavin_spectrum(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let n_paths = spec.param("paths", 20.0) as usize;
    let alpha = spec.param("alpha", 0.5);
    let n_low = spec.param("n_low", 2.0);
    let basis_cut = spec.param("basis_max_norm", 4.0);
    let dim = cfg.flux.dim();
    let probe = SpectralField::zeros(dim, cfg.cutoff);
    let basis: Vec<BasisIndex> = probe
        .modes()
        .filter(|(k, _)| (k.norm_sq() as f64) <= basis_cut * basis_cut)
        .map(|(k, _)| BasisIndex::new(k))
        .collect();

    let minima: Vec<Result<f64, ExperimentError>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.stream_id = cfg.stream().substream(i as u64).stream;
            let integ = Integrator::new(&c)?;
            let traj = simulate(&c, &spec.u0)?;
            let gram = malliavin_gram(&traj, &integ, 0.0, c.t_end, &basis)?;
            Ok(min_quadratic_on_cap(&gram, alpha, n_low).value)
        })
        .collect();
    let mut vals = Vec::new();
    for m in minima {
        vals.push(m?);
    }
    let min_over_paths = vals.iter().cloned().fold(f64::INFINITY, f64::min);

    // Degenerate control: same noise, zero flux, one path; any unforced
    // basis direction must be exactly invisible.
    let mut zero_cfg = cfg.clone();
    zero_cfg.flux = crate::lattice::FluxPoly::new(
        dim,
        vec![vec![crate::exact::ExactScalar::zero()]; dim],
    );
    zero_cfg.grid_size = crate::dynamics::default_grid_size(cfg.cutoff, 1);
    let integ = Integrator::new(&zero_cfg)?;
    let traj = simulate(&zero_cfg, &SpectralField::zeros(dim, cfg.cutoff))?;
    let gram0 = malliavin_gram(&traj, &integ, 0.0, zero_cfg.t_end, &basis)?;
    let mut degenerate_zero = f64::INFINITY;
    for (i, b) in basis.iter().enumerate() {
        if cfg.noise.amplitude(&b.k).is_none() {
            degenerate_zero = degenerate_zero.min(gram0.matrix[(i, i)].abs());
        }
    }

    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    rec.details.insert("min_over_paths".into(), min_over_paths);
    rec.details
        .insert("degenerate_zero_direction".into(), degenerate_zero);
    rec.details.insert("paths".into(), vals.len() as f64);
    rec.series.push(SeriesData {
        name: "cap_minimum_per_path".into(),
        points: vals.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect(),
    });
    rec.verdict = if min_over_paths > 1e-8 && degenerate_zero <= 1e-12 {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    Ok(rec)
}

/// Geometric decay of the control residual over alternating windows, for
/// a sweep of regularization strengths, with the free-flow limit check.
fn exp_residual_decay(spec: &ExperimentSpec) -> Result<ExperimentRecord, ExperimentError> {
    let cfg = &spec.config;
    let n_windows = spec.param("windows", 6.0) as usize;
    let xi = {
        let f = random_field(
            cfg.flux.dim(),
            cfg.cutoff,
            StreamKey::new(cfg.seed ^ 0xd0c4, 1),
            0,
        );
        f.scale(1.0 / f.norm())
    };
    // Pilot window to scale the sweep.
    let pilot = control_residual_run(cfg, &spec.u0, &xi, 1.0, 1)?;
    let scale = pilot.windows[0].gram_trace
        / (SpectralField::zeros(cfg.flux.dim(), cfg.cutoff).len() as f64 - 1.0);
    let sweep: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|f| f * scale).collect();

    let mut rec = ExperimentRecord::new(&spec.name);
    rec.echo_params(spec);
    let mut best: Option<(f64, LineFit)> = None;
    for (bi, &beta) in sweep.iter().enumerate() {
        let run = control_residual_run(cfg, &spec.u0, &xi, beta, n_windows)?;
        let xs: Vec<f64> = (1..run.rho_norms.len()).map(|i| i as f64).collect();
        let ys: Vec<f64> = run.rho_norms[1..]
            .iter()
            .map(|r| r.max(1e-300).ln())
            .collect();
        let fit = linear_fit(&xs, &ys);
        rec.details.insert(format!("beta_{bi}"), beta);
        rec.details.insert(format!("slope_beta_{bi}"), fit.slope);
        rec.details
            .insert(format!("r2_beta_{bi}"), fit.r_squared);
        let max_identity_err = run
            .windows
            .iter()
            .map(|w| w.residual_identity_rel_err)
            .fold(0.0f64, f64::max);
        rec.details
            .insert(format!("identity_err_beta_{bi}"), max_identity_err);
        rec.series.push(SeriesData {
            name: format!("rho_norm_beta_{bi}"),
            points: run
                .rho_norms
                .iter()
                .enumerate()
                .map(|(i, r)| (i as f64, *r))
                .collect(),
        });
        if best.as_ref().map_or(true, |(_, b)| fit.slope < b.slope) {
            best = Some((beta, fit));
        }
    }
    // Free-flow limit: enormous beta must reproduce the plain tangent
    // norms recorded by the run itself.
    let huge = control_residual_run(cfg, &spec.u0, &xi, 1e14 * scale.max(1.0), n_windows)?;
    let mut free_err = 0.0f64;
    for (got, want) in huge.rho_norms.iter().zip(&huge.plain_tangent_norms) {
        free_err = free_err.max((got - want).abs() / want.max(1e-300));
    }
    rec.details.insert("free_flow_rel_err".into(), free_err);
    let (_, best_fit) = best.unwrap();
    rec.details.insert("best_slope".into(), best_fit.slope);
    rec.details.insert("best_r2".into(), best_fit.r_squared);
    rec.verdict = if best_fit.slope < 0.0 && best_fit.r_squared > 0.9 && free_err <= 1e-8 {
        ExperimentVerdict::Pass
    } else {
        ExperimentVerdict::Fail
    };
    Ok(rec)
}
