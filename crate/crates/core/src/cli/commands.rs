//! Command-line front end: `sample | extract | estimate | check | sweep | oracle`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::nodal::{classify_components, extract_nodal_set, ComponentLine};
use crate::oracle::{covariance_mc_check, kac_rice_critical_density, kac_rice_tangency_density, random_lags, DEFAULT_DRAWS};
use crate::seed::{mix, SeedRecord};
use crate::stats::{estimate_Ck, Provenance};
use crate::tangency::excise_zeros;

use super::config::{DomainConfig, ModelConfig, RunConfig, VfConfig};
use super::output::{histogram_svg, Header, OutDir};
use super::run::{run_ensemble, run_trials, sample_trial, Ensemble};
use super::suites::{run_suite, Suite, SuiteParams};

#[derive(Debug, Parser)]
#[command(name = "nodal-tangency", version, about = "Tangency counts of nodal components of Gaussian random waves")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags mirroring the run configuration. They override `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// circle | annulus:ALPHA | lattice:N | cilleruelo | cilleruelo-tilted
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Plane domain B(R).
    #[arg(long, global = true, conflicts_with = "torus")]
    pub radius: Option<f64>,
    /// Torus domain of a lattice model.
    #[arg(long, global = true)]
    pub torus: bool,
    #[arg(long, global = true)]
    pub grid_h: Option<f64>,
    #[arg(long, global = true)]
    pub tol_f: Option<f64>,
    #[arg(long, global = true)]
    pub n_waves: Option<usize>,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Constant vector field at this angle in degrees.
    #[arg(long, global = true)]
    pub zeta: Option<f64>,
    /// sin-sin | morse-gradient (torus only).
    #[arg(long, global = true, conflicts_with = "zeta")]
    pub vf: Option<String>,
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub stability_b: Option<f64>,
    #[arg(long = "class-d", global = true)]
    pub class_d: Option<f64>,
    #[arg(long = "class-xi", global = true)]
    pub class_xi: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub svg: bool,
    #[arg(long, global = true)]
    pub include_sub_beta: Option<bool>,
    #[arg(long, global = true)]
    pub emit_vertices: bool,
    #[arg(long, global = true)]
    pub cross_check: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one realization per trial.
    Sample,
    /// Extract nodal components per trial as JSONL.
    Extract,
    /// Full pipeline: C_k table, direction distribution, histogram.
    Estimate,
    /// Run a check suite and write its verdict.
    Check {
        #[arg(value_enum)]
        which: Suite,
        #[arg(long)]
        sandwich_r: Option<f64>,
        #[arg(long)]
        big_radius: Option<f64>,
        #[arg(long, default_value_t = 500)]
        realizations: usize,
        #[arg(long, default_value_t = DEFAULT_DRAWS)]
        draws: usize,
    },
    /// Repeat `estimate` along one axis.
    Sweep {
        #[arg(value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Kac-Rice densities or the covariance cross-check.
    Oracle {
        #[arg(value_enum, default_value_t = OracleKind::Tangency)]
        kind: OracleKind,
        #[arg(long, default_value_t = DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 500)]
        realizations: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Alpha,
    ZetaAngle,
    Rho,
    #[value(name = "R")]
    #[serde(rename = "R")]
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Tangency,
    Critical,
    Covariance,
}

impl RunArgs {
    /// The configuration file (or the default plane circle run on B(25))
    /// with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::plane(ModelConfig::Circle, 25.0),
        };
        if let Some(m) = &self.model {
            c.model = ModelConfig::parse_short(m)?;
        }
        if let Some(r) = self.radius {
            c.domain = DomainConfig::Plane { radius: r };
        }
        if self.torus {
            c.domain = DomainConfig::Torus;
        }
        macro_rules! set {
            ($($field:ident => $target:expr),*) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set!(grid_h => c.grid_h, tol_f => c.tol_f, n_waves => c.n_waves, trials => c.trials,
             seed => c.master_seed, rho => c.rho, beta => c.beta,
             class_d => c.classification.d, class_xi => c.classification.xi,
             include_sub_beta => c.flags.include_sub_beta);
        if let Some(b) = self.stability_b {
            c.stability_b = Some(b);
        }
        if let Some(a) = self.zeta {
            c.vf = VfConfig::Constant { angle_deg: a };
        }
        if let Some(v) = &self.vf {
            c.vf = match v.as_str() {
                "sin-sin" => VfConfig::SinSin,
                "morse-gradient" => VfConfig::MorseGradient,
                _ => return Err(Error::Config(format!("unknown vector field {v:?}"))),
            };
        }
        if let Some(o) = &self.out {
            c.output.dir = o.clone();
        }
        c.output.svg |= self.svg;
        c.flags.emit_vertices |= self.emit_vertices;
        c.flags.cross_check |= self.cross_check;
        c.validate()?;
        Ok(c)
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code:
/// 0 success, 1 suite failure or runtime error, 2 usage or configuration error.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) | Error::NotSumOfTwoSquares(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Runs one command; `Ok(false)` means a check suite failed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let cfg = cli.run.resolve()?;
    let workers = cli.run.workers;
    let out = OutDir::create(&cfg.output.dir)?;
    match &cli.command {
        Command::Sample => sample(&cfg, workers, &out).map(|_| true),
        Command::Extract => extract(&cfg, workers, &out).map(|_| true),
        Command::Estimate => estimate(&cfg, workers, &out).map(|_| true),
        Command::Check { which, sandwich_r, big_radius, realizations, draws } => {
            let p = SuiteParams {
                sandwich_r: *sandwich_r,
                big_radius: *big_radius,
                realizations: *realizations,
                draws: *draws,
                ..SuiteParams::default()
            };
            let verdict = run_suite(*which, &cfg, &p, workers)?;
            let path = out.write_json(&format!("check_{}.json", which.name()), &Header::new("check", &cfg), &verdict)?;
            println!("{} {} ({})", which.name(), if verdict.passed { "PASS" } else { "FAIL" }, path.display());
            Ok(verdict.passed)
        }
        Command::Sweep { axis, values } => sweep(&cfg, *axis, values, workers, &out).map(|_| true),
        Command::Oracle { kind, draws, realizations } => oracle(&cfg, *kind, *draws, *realizations, &out).map(|_| true),
    }
}

#[derive(Serialize)]
struct RealizationFile<'a> {
    seed: SeedRecord,
    realization: &'a crate::field::FieldRealization,
}

/// `realization_NNNNN.json` per trial.
pub fn sample(cfg: &RunConfig, workers: usize, out: &OutDir) -> Result<Vec<PathBuf>> {
    let header = Header::new("sample", cfg);
    run_trials(cfg.trials, workers, |t| {
        let seed = SeedRecord::new(cfg.master_seed, t);
        let f = sample_trial(cfg, seed)?;
        out.write_json(&format!("realization_{t:05}.json"), &header, &RealizationFile { seed, realization: &f })
    })
}

#[derive(Serialize)]
struct ExtractRow {
    trial: u64,
    #[serde(flatten)]
    line: ComponentLine,
}

/// `components.jsonl`: every component of every trial.
pub fn extract(cfg: &RunConfig, workers: usize, out: &OutDir) -> Result<PathBuf> {
    let vf = cfg.vector_field()?;
    let per_trial = run_trials(cfg.trials, workers, |t| {
        let f = sample_trial(cfg, SeedRecord::new(cfg.master_seed, t))?;
        let mut set = extract_nodal_set(&f, cfg.region(), cfg.params())?;
        excise_zeros(&vf, &mut set.components, cfg.rho);
        classify_components(&mut set.components, cfg.classification.d, cfg.classification.xi);
        let text = crate::nodal::components_to_jsonl(&set.components, cfg.flags.emit_vertices)?;
        text.lines()
            .map(|l| Ok(ExtractRow { trial: t, line: serde_json::from_str(l)? }))
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<ExtractRow> = per_trial.into_iter().flatten().collect();
    out.write_jsonl("components.jsonl", &Header::new("extract", cfg), &rows)
}

#[derive(Debug, Serialize)]
pub struct EstimateBody {
    pub config: RunConfig,
    pub table: crate::stats::EstimateTable,
    pub distribution: crate::stats::DirectionDistribution,
    /// Counted components whose tangencies all clear β.
    pub certified_distribution: Option<crate::stats::DirectionDistribution>,
    pub joint_zero_density: crate::stats::Estimate,
    pub agreement_rate: Option<f64>,
}

pub fn estimate_body(cfg: &RunConfig, e: &Ensemble) -> Result<EstimateBody> {
    if cfg.trials < 2 {
        return Err(Error::Config("estimate needs trials >= 2".into()));
    }
    let provenance = Provenance { master_seed: cfg.master_seed, config_hash: cfg.hash(), trials: cfg.trials };
    Ok(EstimateBody {
        config: cfg.clone(),
        table: estimate_Ck(&e.summaries())?,
        distribution: e.histogram.finish()?.with_provenance(provenance.clone()),
        certified_distribution: e.certified.finish().ok().map(|d| d.with_provenance(provenance)),
        joint_zero_density: e.joint_zero_density(),
        agreement_rate: e.agreement.as_ref().map(|a| a.rate()),
    })
}

/// `estimate.json`, `histogram.csv`, `ck.csv`, `trials.jsonl` and, when
/// asked, `histogram.svg`.
pub fn estimate(cfg: &RunConfig, workers: usize, out: &OutDir) -> Result<EstimateBody> {
    let e = run_ensemble(cfg, workers)?;
    let body = estimate_body(cfg, &e)?;
    let header = Header::new("estimate", cfg);
    out.write_json("estimate.json", &header, &body)?;
    out.write("histogram.csv", &format!("{}{}", header.csv_comment(), body.distribution.to_csv()))?;
    out.write("ck.csv", &format!("{}{}", header.csv_comment(), body.table.to_csv()))?;
    out.write_jsonl("trials.jsonl", &header, &e.trials)?;
    if cfg.output.svg {
        out.write("histogram.svg", &histogram_svg(&body.distribution, &header))?;
    }
    Ok(body)
}

/// Header line of `sweep.csv`.
pub const SWEEP_COLUMNS: &str = "axis,value,k,count,probability,ck_mean,ck_stderr,n_trials,total,boundary,excised,unresolved,sub_beta_included_flagged,sub_beta_excluded,tv_to_first";

/// `sweep.csv` in long form, one row per axis value and `k`. Every value
/// reuses the same trial seeds.
pub fn sweep(cfg: &RunConfig, axis: Axis, values: &[f64], workers: usize, out: &OutDir) -> Result<PathBuf> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let header = Header::new("sweep", cfg);
    let mut csv = format!("{}{SWEEP_COLUMNS}\n", header.csv_comment());
    let axis_name = match axis {
        Axis::Alpha => "alpha",
        Axis::ZetaAngle => "zeta_angle",
        Axis::Rho => "rho",
        Axis::R => "R",
    };
    let mut first: Option<crate::stats::DirectionDistribution> = None;
    for &v in values {
        let c = sweep_point(cfg, axis, v)?;
        let e = run_ensemble(&c, workers)?;
        let body = estimate_body(&c, &e)?;
        let d = &body.distribution;
        let tv = first.as_ref().map_or(0.0, |f| f.tv_distance(d));
        first.get_or_insert_with(|| d.clone());
        let l = d.exclusion_ledger;
        for (k, n) in &d.counts {
            let est = body.table.per_k.get(k);
            csv.push_str(&format!(
                "{axis_name},{v},{k},{n},{},{},{},{},{},{},{},{},{},{},{tv}\n",
                d.probabilities[k],
                est.map_or(0.0, |e| e.mean),
                est.map_or(0.0, |e| e.stderr),
                est.map_or(0, |e| e.n_trials),
                d.total,
                l.boundary,
                l.excised,
                l.unresolved,
                l.sub_beta_included_flagged,
                l.sub_beta_excluded,
            ));
        }
    }
    out.write("sweep.csv", &csv)
}

/// The configuration at one point of a sweep.
pub fn sweep_point(cfg: &RunConfig, axis: Axis, v: f64) -> Result<RunConfig> {
    let mut c = cfg.clone();
    match axis {
        // α = 1 is the limit of thin annuli, the circle
        Axis::Alpha if v == 1.0 => c.model = ModelConfig::Circle,
        Axis::Alpha => c.model = ModelConfig::Annulus { alpha: v },
        Axis::ZetaAngle => c.vf = VfConfig::Constant { angle_deg: v },
        Axis::Rho => c.rho = v,
        Axis::R => c.domain = DomainConfig::Plane { radius: v },
    }
    c.validate()?;
    Ok(c)
}

/// `oracle_<kind>.json`.
pub fn oracle(cfg: &RunConfig, kind: OracleKind, draws: usize, realizations: usize, out: &OutDir) -> Result<PathBuf> {
    let model = cfg.spectral_model()?;
    let header = Header::new("oracle", cfg);
    let seed = mix(cfg.master_seed, 0x0AC1E);
    match kind {
        OracleKind::Tangency => {
            let angle = match cfg.vf {
                VfConfig::Constant { angle_deg } => angle_deg,
                _ => return Err(Error::Config("tangency oracle needs a constant vector field".into())),
            };
            let est = kac_rice_tangency_density(&model, crate::geom::Vec2::from_angle_deg(angle), draws, seed)?;
            out.write_json("oracle_tangency.json", &header, &json!({ "zeta_deg": angle, "estimate": est }))
        }
        OracleKind::Critical => {
            let est = kac_rice_critical_density(&model, draws, seed)?;
            out.write_json("oracle_critical.json", &header, &json!({ "estimate": est }))
        }
        OracleKind::Covariance => {
            let lags = random_lags(20, 3.0, mix(cfg.master_seed, 0x1A65));
            let check = covariance_mc_check(&model, realizations, &lags, cfg.n_waves, cfg.master_seed)?;
            out.write_json("oracle_covariance.json", &header, &check)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("nodal-tangency").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config() {
        let cli = parse(&["--model", "annulus:0.5", "--radius", "10", "--trials", "3", "--zeta", "30", "estimate"]);
        let c = cli.run.resolve().unwrap();
        assert_eq!(c.model, ModelConfig::Annulus { alpha: 0.5 });
        assert_eq!(c.domain, DomainConfig::Plane { radius: 10.0 });
        assert_eq!(c.vf, VfConfig::Constant { angle_deg: 30.0 });
        assert_eq!(c.trials, 3);
    }

    #[test]
    fn bad_model_is_a_config_error() {
        let cli = parse(&["--model", "annulus:2", "sample"]);
        assert!(matches!(cli.run.resolve(), Err(Error::Config(_))));
        let cli = parse(&["--model", "lattice:3", "--torus", "sample"]);
        assert!(matches!(cli.run.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn sample_is_byte_identical_on_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::plane(ModelConfig::Circle, 5.0);
        cfg.trials = 2;
        cfg.n_waves = 32;
        let a = sample(&cfg, 1, &OutDir::create(&dir.path().join("a")).unwrap()).unwrap();
        let b = sample(&cfg, 2, &OutDir::create(&dir.path().join("b")).unwrap()).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }

    #[test]
    fn sweep_values_map_to_configs() {
        let cfg = RunConfig::plane(ModelConfig::Circle, 5.0);
        assert_eq!(sweep_point(&cfg, Axis::Alpha, 1.0).unwrap().model, ModelConfig::Circle);
        assert_eq!(sweep_point(&cfg, Axis::Alpha, 0.5).unwrap().model, ModelConfig::Annulus { alpha: 0.5 });
        assert!(sweep_point(&cfg, Axis::Alpha, 1.5).is_err());
        assert_eq!(sweep_point(&cfg, Axis::R, 9.0).unwrap().domain, DomainConfig::Plane { radius: 9.0 });
    }

    #[test]
    fn estimate_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::plane(ModelConfig::Circle, 5.0);
        cfg.trials = 2;
        cfg.n_waves = 64;
        cfg.output.svg = true;
        let out = OutDir::create(dir.path()).unwrap();
        let body = estimate(&cfg, 1, &out).unwrap();
        assert!((body.table.sum_ck() - 1.0).abs() < 1e-12);
        for f in ["estimate.json", "histogram.csv", "ck.csv", "trials.jsonl", "histogram.svg"] {
            let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
            assert!(text.contains(&cfg.hash()), "{f}");
        }
    }
}
