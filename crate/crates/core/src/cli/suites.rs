//! Check suites run by `check`. Each returns a machine-readable verdict.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::nodal::{extract_nodal_set, Containment, ExtractParams, Region};
use crate::oracle::{covariance_mc_check, kac_rice_tangency_density, random_lags, DEFAULT_DRAWS};
use crate::seed::{mix, SeedRecord};
use crate::stats::{ergodic_check, sandwich_check, tangency_sum_check};
use crate::tangency::{count_via_intersections, is_counted, stability_check, VfKind};

use super::config::{DomainConfig, RunConfig};
use super::run::{run_ensemble, run_trials, sample_trial, Ensemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Sandwich,
    Parity,
    Identity,
    Stability,
    Ergodic,
    Covariance,
    Kacrice,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Sandwich,
        Suite::Parity,
        Suite::Identity,
        Suite::Stability,
        Suite::Ergodic,
        Suite::Covariance,
        Suite::Kacrice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sandwich => "sandwich",
            Suite::Parity => "parity",
            Suite::Identity => "identity",
            Suite::Stability => "stability",
            Suite::Ergodic => "ergodic",
            Suite::Covariance => "covariance",
            Suite::Kacrice => "kacrice",
        }
    }
}

/// Knobs that are not part of the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    /// Small ball radius for the sandwich; `R / 5` if absent.
    pub sandwich_r: Option<f64>,
    /// Radius of the single large sample; `max(2R, 100)` if absent.
    pub big_radius: Option<f64>,
    pub realizations: usize,
    pub lags: usize,
    pub draws: usize,
    /// Largest admissible mass on `{0}` and odd `k`.
    pub parity_tolerance: f64,
    /// Largest relative gap for the ergodic and Kac-Rice comparisons.
    pub ergodic_tolerance: f64,
    pub kacrice_tolerance: f64,
    pub covariance_z: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            sandwich_r: None,
            big_radius: None,
            realizations: 500,
            lags: 20,
            draws: DEFAULT_DRAWS,
            parity_tolerance: 0.005,
            ergodic_tolerance: 0.10,
            kacrice_tolerance: 0.05,
            covariance_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteVerdict {
    pub suite: Suite,
    pub passed: bool,
    pub metrics: Value,
    /// Per-sample details; failing samples carry enough to reproduce them.
    pub diagnostics: Vec<Value>,
}

pub fn run_suite(suite: Suite, cfg: &RunConfig, p: &SuiteParams, workers: usize) -> Result<SuiteVerdict> {
    match suite {
        Suite::Sandwich => sandwich(cfg, p, workers),
        Suite::Parity => Ok(parity(&run_ensemble(cfg, workers)?, p.parity_tolerance)),
        Suite::Identity => Ok(identity(&run_ensemble(cfg, workers)?)),
        Suite::Stability => stability(cfg, workers),
        Suite::Ergodic => ergodic(cfg, p, workers),
        Suite::Covariance => covariance(cfg, p),
        Suite::Kacrice => {
            let e = run_ensemble(cfg, workers)?;
            kacrice(cfg, &e, p)
        }
    }
}

fn plane_radius(cfg: &RunConfig, suite: &str) -> Result<f64> {
    match cfg.domain {
        DomainConfig::Plane { radius } => Ok(radius),
        DomainConfig::Torus => Err(Error::Config(format!("{suite} runs on a plane domain"))),
    }
}

/// Sandwich bounds for the total count and for `k = 2` on every trial.
pub fn sandwich(cfg: &RunConfig, p: &SuiteParams, workers: usize) -> Result<SuiteVerdict> {
    let big_r = plane_radius(cfg, "sandwich")?;
    let r = p.sandwich_r.unwrap_or(big_r / 5.0);
    let region = Region::Disc { radius: big_r + 2.0 * r };
    let vf = cfg.vector_field()?;
    let reports = run_trials(cfg.trials, workers, |t| {
        let f = sample_trial(cfg, SeedRecord::new(cfg.master_seed, t))?;
        let res = count_via_intersections(&f, &vf, region, cfg.params(), cfg.beta)?;
        let ks: Vec<Option<usize>> = res
            .set
            .components
            .iter()
            .zip(&res.counts)
            .map(|(c, n)| is_counted(c, n).then_some(n.k))
            .collect();
        let all = sandwich_check(&res.set, &ks, None, r, big_r, None)?;
        let two = sandwich_check(&res.set, &ks, Some(2), r, big_r, None)?;
        Ok((t, all, two))
    })?;
    let mut diagnostics = Vec::new();
    let (mut holds, mut strict) = (0usize, 0usize);
    for (t, all, two) in &reports {
        let ok = all.holds && two.holds;
        holds += ok as usize;
        strict += (all.holds_strict && two.holds_strict) as usize;
        diagnostics.push(json!({ "trial": t, "holds": ok, "total": all, "k2": two }));
    }
    Ok(SuiteVerdict {
        suite: Suite::Sandwich,
        passed: holds == reports.len(),
        metrics: json!({ "r": r, "R": big_r, "samples": reports.len(), "holds": holds, "holds_strict": strict }),
        diagnostics,
    })
}

/// Mass on `{0}` and odd `k` among certified components, plus the hard
/// at-least-two check for constant fields.
pub fn parity(e: &Ensemble, tolerance: f64) -> SuiteVerdict {
    let total = e.certified.total();
    let bad: u64 = e
        .certified
        .counts
        .iter()
        .filter(|(&k, _)| k == 0 || k % 2 == 1)
        .map(|(_, &n)| n)
        .sum();
    let mass = if total == 0 { 0.0 } else { bad as f64 / total as f64 };
    let low_k: Vec<Value> = e
        .trials
        .iter()
        .flat_map(|t| t.low_k.iter().map(|row| json!(row)))
        .collect();
    SuiteVerdict {
        suite: Suite::Parity,
        passed: total > 0 && mass < tolerance && low_k.is_empty(),
        metrics: json!({
            "certified_components": total,
            "odd_or_zero": bad,
            "odd_or_zero_mass": mass,
            "tolerance": tolerance,
            "below_two": low_k.len(),
            "certified_counts": e.certified.counts,
        }),
        diagnostics: low_k,
    }
}

/// `Σ k ≤ joint zeros` per trial, with equality when nothing was dropped.
pub fn identity(e: &Ensemble) -> SuiteVerdict {
    let mut diagnostics = Vec::new();
    let mut failures = 0;
    let mut equal_expected = 0;
    for t in &e.trials {
        let report = tangency_sum_check([t.counted_k_sum as usize], t.joint_zeros as usize, t.ledger_empty());
        failures += (!report.holds) as usize;
        equal_expected += report.equality_expected as usize;
        diagnostics.push(json!({ "trial": t.trial, "report": report }));
    }
    SuiteVerdict {
        suite: Suite::Identity,
        passed: failures == 0,
        metrics: json!({ "samples": e.trials.len(), "failures": failures, "equality_expected": equal_expected }),
        diagnostics,
    }
}

/// Every certified component keeps its count under a perturbation of size
/// `stability_b`.
pub fn stability(cfg: &RunConfig, workers: usize) -> Result<SuiteVerdict> {
    let vf = cfg.vector_field()?;
    let b = cfg.stability_b();
    let reports = run_trials(cfg.trials, workers, |t| {
        let f = sample_trial(cfg, SeedRecord::new(cfg.master_seed, t))?;
        stability_check(&f, &vf, cfg.beta, b, cfg.region(), cfg.params())
    })?;
    let certified: usize = reports.iter().map(|r| r.certified).sum();
    let preserved: usize = reports.iter().map(|r| r.preserved).sum();
    let diagnostics = reports
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let bad: Vec<_> = r.verdicts.iter().filter(|v| v.verdict != crate::tangency::Verdict::Preserved).collect();
            json!({
                "trial": t,
                "certified": r.certified,
                "preserved": r.preserved,
                "changed": r.changed,
                "ambiguous": r.ambiguous,
                "unmatched": r.unmatched,
                "psi_scale": r.psi_scale,
                "certified_bound": r.certified_bound,
                "not_preserved": bad,
            })
        })
        .collect();
    Ok(SuiteVerdict {
        suite: Suite::Stability,
        passed: certified > 0 && preserved == certified,
        metrics: json!({ "beta": cfg.beta, "b": b, "certified": certified, "preserved": preserved }),
        diagnostics,
    })
}

/// Contained-component density of one large sample against the ensemble
/// of small samples.
pub fn ergodic(cfg: &RunConfig, p: &SuiteParams, workers: usize) -> Result<SuiteVerdict> {
    let small_r = plane_radius(cfg, "ergodic")?;
    let big_r = p.big_radius.unwrap_or((2.0 * small_r).max(100.0));
    let params = ExtractParams { grid_h: cfg.grid_h, tol_f: cfg.tol_f };
    let count = |seed: SeedRecord, radius: f64| -> Result<u64> {
        let f = sample_trial(cfg, seed)?;
        let set = extract_nodal_set(&f, Region::Disc { radius }, params)?;
        Ok(set.count(Containment::Contained) as u64)
    };
    let small = run_trials(cfg.trials, workers, |t| count(SeedRecord::new(cfg.master_seed, t), small_r))?;
    let big = count(SeedRecord::new(mix(cfg.master_seed, 0xB16), 0), big_r)?;
    let report = ergodic_check(big, big_r, &small, small_r)?;
    Ok(SuiteVerdict {
        suite: Suite::Ergodic,
        passed: report.relative_gap < p.ergodic_tolerance,
        metrics: json!({ "big_radius": big_r, "small_radius": small_r, "big_count": big, "report": report, "tolerance": p.ergodic_tolerance }),
        diagnostics: small.iter().enumerate().map(|(t, n)| json!({ "trial": t, "contained": n })).collect(),
    })
}

/// Empirical covariance at random lags against the model.
pub fn covariance(cfg: &RunConfig, p: &SuiteParams) -> Result<SuiteVerdict> {
    let model = cfg.spectral_model()?;
    let lags = random_lags(p.lags, 3.0, mix(cfg.master_seed, 0x1A65));
    let check = covariance_mc_check(&model, p.realizations, &lags, cfg.n_waves, cfg.master_seed)?;
    Ok(SuiteVerdict {
        suite: Suite::Covariance,
        passed: check.max_abs_z <= p.covariance_z,
        metrics: json!({ "model": check.model, "max_abs_z": check.max_abs_z, "max_abs_error": check.max_abs_error, "z_limit": p.covariance_z }),
        diagnostics: check.rows.iter().map(|r| json!(r)).collect(),
    })
}

/// Joint-zero density of `(f, Vf)` against the Kac-Rice oracle.
pub fn kacrice(cfg: &RunConfig, e: &Ensemble, p: &SuiteParams) -> Result<SuiteVerdict> {
    let zeta_v = match cfg.vector_field()?.kind {
        VfKind::Constant { zeta } => zeta,
        _ => return Err(Error::Config("kacrice needs a constant vector field".into())),
    };
    // the oracle differentiates along ζ⊥; ask for the ζ whose ⊥ is ζ_V
    let zeta = Vec2::new(zeta_v.y, -zeta_v.x);
    let oracle = kac_rice_tangency_density(&cfg.spectral_model()?, zeta, p.draws, mix(cfg.master_seed, 0x0AC1E))?;
    let emp = e.joint_zero_density();
    let gap = (emp.mean - oracle.density).abs() / oracle.density;
    let rel_stderr = oracle.stderr / oracle.density;
    Ok(SuiteVerdict {
        suite: Suite::Kacrice,
        passed: gap < p.kacrice_tolerance && rel_stderr < 0.01,
        metrics: json!({
            "empirical_density": emp,
            "oracle_density": oracle.density,
            "oracle_stderr": oracle.stderr,
            "oracle_relative_stderr": rel_stderr,
            "relative_gap": gap,
            "tolerance": p.kacrice_tolerance,
        }),
        diagnostics: e.trials.iter().map(|t| json!({ "trial": t.trial, "joint_zeros": t.joint_zeros, "area": t.area })).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::ModelConfig;

    fn small() -> RunConfig {
        let mut c = RunConfig::plane(ModelConfig::Circle, 8.0);
        c.n_waves = 128;
        c.trials = 2;
        c.master_seed = 3;
        c
    }

    #[test]
    fn small_sandwich_holds() {
        let v = sandwich(&small(), &SuiteParams { sandwich_r: Some(1.5), ..Default::default() }, 1).unwrap();
        assert!(v.passed, "{}", v.metrics);
    }

    #[test]
    fn identity_and_parity_on_small_ensemble() {
        let e = run_ensemble(&small(), 1).unwrap();
        assert!(identity(&e).passed);
        let v = parity(&e, 0.2);
        assert!(v.metrics["certified_components"].as_u64().unwrap() > 0);
    }

    #[test]
    fn covariance_suite_on_lattice() {
        let c = RunConfig::torus(5);
        let v = covariance(&c, &SuiteParams { realizations: 200, ..Default::default() }).unwrap();
        assert_eq!(v.diagnostics.len(), 20);
    }

    #[test]
    fn torus_rejected_where_plane_needed() {
        assert!(sandwich(&RunConfig::torus(5), &SuiteParams::default(), 1).is_err());
    }
}
