//! Per-trial pipeline and the seeded worker pool.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sample_field, FieldRealization};
use crate::geom::Vec2;
use crate::nodal::{classify_components, Containment, Region, SizeClass};
use crate::seed::SeedRecord;
use crate::stats::{ComponentTally, Histogram, TrialSummary};
use crate::tangency::{count_via_intersections, cross_check, excise_zeros, is_counted, IntersectionCount};

use super::config::RunConfig;

/// Runs `f(trial)` for every trial on a pool of `workers` threads (0 means
/// one per core) and returns the results in trial order.
pub fn run_trials<T, F>(trials: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| (0..trials).into_par_iter().map(&f).collect())
}

/// Method A against Method B on components whose Method B margins all
/// clear β.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub compared: u64,
    pub agreed: u64,
    pub disagreements: Vec<Disagreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub component: usize,
    pub anchor: Vec2,
    pub k_a: usize,
    pub k_b: usize,
    pub min_margin: f64,
}

impl Agreement {
    pub fn merge(&mut self, o: &Agreement) {
        self.compared += o.compared;
        self.agreed += o.agreed;
        self.disagreements.extend(o.disagreements.iter().cloned());
    }

    pub fn rate(&self) -> f64 {
        if self.compared == 0 {
            1.0
        } else {
            self.agreed as f64 / self.compared as f64
        }
    }
}

/// One component as written to the JSONL export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub trial: u64,
    pub index: usize,
    pub closed: bool,
    pub containment: Containment,
    pub size_class: SizeClass,
    pub k: usize,
    pub min_margin: Option<f64>,
    pub counted: bool,
    pub tally: ComponentTally,
    pub enclosed_area: Option<f64>,
    pub diameter: f64,
    pub tangencies: Vec<Vec2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec2>>,
}

/// Everything the aggregate statistics need from one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub seed: SeedRecord,
    /// The measure as configured.
    pub histogram: Histogram,
    /// Counted components whose tangencies all clear β.
    pub certified: Histogram,
    pub components: u64,
    pub contained: u64,
    pub area: f64,
    /// Joint zeros of `(f, Vf)` in the window, orphans included.
    pub joint_zeros: u64,
    /// `Σ k` over counted components.
    pub counted_k_sum: u64,
    pub orphans: u64,
    pub excised: u64,
    pub nudged: usize,
    /// Certified components with fewer than two tangencies under a constant
    /// field. Each carries its polyline.
    pub low_k: Vec<ComponentRow>,
    pub agreement: Option<Agreement>,
    #[serde(skip)]
    pub rows: Vec<ComponentRow>,
}

impl TrialOutcome {
    pub fn summary(&self) -> TrialSummary {
        TrialSummary::from_histogram(&self.histogram, self.contained, self.area)
    }

    /// Joint zeros minus `Σ k` is nonnegative, and zero when nothing was
    /// dropped from the window.
    pub fn ledger_empty(&self) -> bool {
        self.histogram.ledger.is_empty() && self.orphans == 0
    }
}

pub fn sample_trial(cfg: &RunConfig, seed: SeedRecord) -> Result<FieldRealization> {
    sample_field(&cfg.spectral_model()?, cfg.n_waves, seed)
}

/// Window area: the disc, or the torus fundamental domain.
pub fn window_area(cfg: &RunConfig) -> Result<f64> {
    Ok(match cfg.region() {
        Region::Disc { radius } => PI * radius * radius,
        Region::Torus => {
            let s = cfg.spectral_model()?.torus_side().unwrap_or(1.0);
            s * s
        }
    })
}

/// Sample, extract, excise, count with Method B, and tally one trial.
pub fn run_trial(cfg: &RunConfig, trial: u64, keep_rows: bool) -> Result<TrialOutcome> {
    let seed = SeedRecord::new(cfg.master_seed, trial);
    let f = sample_trial(cfg, seed)?;
    let vf = cfg.vector_field()?;
    let mut result = count_via_intersections(&f, &vf, cfg.region(), cfg.params(), cfg.beta)?;
    let excised = excise_zeros(&vf, &mut result.set.components, cfg.rho) as u64;
    classify_components(&mut result.set.components, cfg.classification.d, cfg.classification.xi);
    let agreement = cfg.flags.cross_check.then(|| agreement(&mut result, &f, &vf, cfg.beta));
    tally(cfg, trial, seed, &result, excised, agreement, keep_rows)
}

fn agreement(
    result: &mut IntersectionCount,
    f: &FieldRealization,
    vf: &crate::tangency::VectorFieldSpec,
    beta: f64,
) -> Agreement {
    let a_counts = cross_check(result, f, vf, beta);
    let mut out = Agreement::default();
    for (i, ((c, b), a)) in result.set.components.iter().zip(&result.counts).zip(&a_counts).enumerate() {
        if !is_counted(c, b) || b.min_margin() < beta {
            continue;
        }
        out.compared += 1;
        if a.k == b.k && !a.unresolved {
            out.agreed += 1;
        } else {
            out.disagreements.push(Disagreement {
                component: i,
                anchor: c.vertices[0],
                k_a: a.k,
                k_b: b.k,
                min_margin: b.min_margin(),
            });
        }
    }
    out
}

fn tally(
    cfg: &RunConfig,
    trial: u64,
    seed: SeedRecord,
    result: &IntersectionCount,
    excised: u64,
    agreement: Option<Agreement>,
    keep_rows: bool,
) -> Result<TrialOutcome> {
    let constant_v = matches!(cfg.vf, super::config::VfConfig::Constant { .. });
    let mut histogram = Histogram::new(cfg.flags.include_sub_beta);
    let mut certified = Histogram::new(false);
    let mut low_k = Vec::new();
    let mut rows = Vec::new();
    let mut counted_k_sum = 0u64;
    let mut contained = 0u64;
    for (i, (c, count)) in result.set.components.iter().zip(&result.counts).enumerate() {
        let t = ComponentTally::from_count(c, count);
        histogram.add(&t);
        certified.add(&t);
        let counted = is_counted(c, count);
        if counted {
            counted_k_sum += count.k as u64;
        }
        if c.containment != Containment::BoundaryIntersecting {
            contained += 1;
        }
        let make_row = |with_vertices: bool| ComponentRow {
            trial,
            index: i,
            closed: c.closed,
            containment: c.containment,
            size_class: c.size_class,
            k: count.k,
            min_margin: (!count.records.is_empty()).then(|| count.min_margin()),
            counted,
            tally: t,
            enclosed_area: c.enclosed_area,
            diameter: c.diameter,
            tangencies: count.records.iter().map(|r| r.location).collect(),
            vertices: with_vertices.then(|| c.vertices.clone()),
        };
        if constant_v && counted && c.closed && !t.flags.sub_beta && count.k < 2 {
            low_k.push(make_row(true));
        }
        if keep_rows {
            rows.push(make_row(cfg.flags.emit_vertices));
        }
    }
    let joint_zeros = match cfg.region() {
        Region::Disc { radius } => result.joint_zeros_in_disc(radius),
        Region::Torus => result.joint_zeros().count() + result.orphans.len(),
    } as u64;
    Ok(TrialOutcome {
        trial,
        seed,
        histogram,
        certified,
        components: result.set.components.len() as u64,
        contained,
        area: window_area(cfg)?,
        joint_zeros,
        counted_k_sum,
        orphans: result.orphans.len() as u64,
        excised,
        nudged: result.set.nudged,
        low_k,
        agreement,
        rows,
    })
}

/// Trial outcomes merged in trial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trials: Vec<TrialOutcome>,
    pub histogram: Histogram,
    pub certified: Histogram,
    pub agreement: Option<Agreement>,
}

impl Ensemble {
    pub fn from_trials(trials: Vec<TrialOutcome>, include_sub_beta: bool) -> Self {
        let mut histogram = Histogram::new(include_sub_beta);
        let mut certified = Histogram::new(false);
        let mut agreement: Option<Agreement> = None;
        for t in &trials {
            histogram.merge(&t.histogram);
            certified.merge(&t.certified);
            if let Some(a) = &t.agreement {
                agreement.get_or_insert_with(Agreement::default).merge(a);
            }
        }
        Ensemble { trials, histogram, certified, agreement }
    }

    pub fn summaries(&self) -> Vec<TrialSummary> {
        self.trials.iter().map(TrialOutcome::summary).collect()
    }

    /// Mean joint-zero count per unit area.
    pub fn joint_zero_density(&self) -> crate::stats::Estimate {
        let xs: Vec<f64> = self.trials.iter().map(|t| t.joint_zeros as f64 / t.area).collect();
        crate::stats::Estimate::from_samples(&xs)
    }

    pub fn counts_by_k(&self) -> &BTreeMap<usize, u64> {
        &self.histogram.counts
    }
}

/// Runs every configured trial and merges them.
pub fn run_ensemble(cfg: &RunConfig, workers: usize) -> Result<Ensemble> {
    let trials = run_trials(cfg.trials, workers, |t| run_trial(cfg, t, false))?;
    Ok(Ensemble::from_trials(trials, cfg.flags.include_sub_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::ModelConfig;

    fn small() -> RunConfig {
        let mut c = RunConfig::plane(ModelConfig::Circle, 6.0);
        c.n_waves = 128;
        c.trials = 3;
        c.master_seed = 11;
        c.flags.cross_check = true;
        c
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = small();
        let a = run_ensemble(&cfg, 1).unwrap();
        let b = run_ensemble(&cfg, 3).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.histogram.total() > 0);
    }

    #[test]
    fn identity_holds_per_trial() {
        let e = run_ensemble(&small(), 1).unwrap();
        for t in &e.trials {
            assert!(t.counted_k_sum <= t.joint_zeros, "{} > {}", t.counted_k_sum, t.joint_zeros);
            assert!(t.low_k.is_empty());
        }
        let a = e.agreement.unwrap();
        assert!(a.compared > 0 && a.rate() > 0.95);
    }

    #[test]
    fn torus_window_is_the_fundamental_domain() {
        let mut cfg = RunConfig::torus(5);
        cfg.trials = 2;
        cfg.grid_h = 0.02;
        let e = run_ensemble(&cfg, 1).unwrap();
        for t in &e.trials {
            assert!((t.area - 5.0).abs() < 1e-12);
            assert_eq!(t.histogram.ledger.boundary, 0);
        }
    }
}
