//! Run configuration: a TOML document with a fixed schema.
//!
//! Unknown keys are rejected at every level. Every output carries
//! [`RunConfig::hash`], the SHA-256 of the canonical JSON form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nodal::{ExtractParams, Region, DEFAULT_GRID_H, DEFAULT_TOL_F};
use crate::spectral::SpectralModel;
use crate::tangency::{TrigCoeff, VectorFieldSpec, DEFAULT_BETA, DEFAULT_RHO};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Circle,
    Annulus { alpha: f64 },
    AtomicLattice { n: u64 },
    AtomicGeneral { angles_deg: Vec<f64>, weights: Vec<f64> },
    Cilleruelo,
    CillerueloTilted,
}

impl ModelConfig {
    pub fn build(&self) -> Result<SpectralModel> {
        match self {
            ModelConfig::Circle => Ok(SpectralModel::circle()),
            ModelConfig::Annulus { alpha } => SpectralModel::annulus(*alpha),
            ModelConfig::AtomicLattice { n } => SpectralModel::arithmetic(*n),
            ModelConfig::AtomicGeneral { angles_deg, weights } => SpectralModel::atomic(angles_deg, weights),
            ModelConfig::Cilleruelo => Ok(SpectralModel::cilleruelo()),
            ModelConfig::CillerueloTilted => Ok(SpectralModel::cilleruelo_tilted()),
        }
    }

    /// Parses the short command-line form: `circle`, `annulus:0.5`,
    /// `lattice:5`, `cilleruelo`, `cilleruelo-tilted`.
    pub fn parse_short(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("model {name} needs {what}, e.g. {name}:0.5")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("model {s}: {e}")))
        };
        Ok(match name {
            "circle" => ModelConfig::Circle,
            "annulus" => ModelConfig::Annulus { alpha: num("alpha")? },
            "lattice" | "arithmetic" => {
                let n = arg
                    .ok_or_else(|| Error::Config("model lattice needs n, e.g. lattice:5".into()))?
                    .parse::<u64>()
                    .map_err(|e| Error::Config(format!("model {s}: {e}")))?;
                ModelConfig::AtomicLattice { n }
            }
            "cilleruelo" => ModelConfig::Cilleruelo,
            "cilleruelo-tilted" => ModelConfig::CillerueloTilted,
            _ => return Err(Error::Config(format!("unknown model {s:?}"))),
        })
    }

    fn is_lattice(&self) -> bool {
        matches!(self, ModelConfig::AtomicLattice { .. } | ModelConfig::Cilleruelo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Plane { radius: f64 },
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum VfConfig {
    Constant { angle_deg: f64 },
    SinSin,
    MorseGradient,
    TorusTrig { a1: Vec<TrigCoeff>, a2: Vec<TrigCoeff> },
}

impl Default for VfConfig {
    fn default() -> Self {
        VfConfig::Constant { angle_deg: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classification {
    /// Diameter above which a component is D-long.
    pub d: f64,
    /// Enclosed area below which a closed component is ξ-small.
    pub xi: f64,
}

impl Default for Classification {
    fn default() -> Self {
        Classification { d: 6.0, xi: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default)]
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), svg: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// Keep components with a sub-β tangency in the measure (flagged).
    #[serde(default = "yes")]
    pub include_sub_beta: bool,
    #[serde(default)]
    pub emit_vertices: bool,
    /// Also run Method A on every component and tally agreement.
    #[serde(default)]
    pub cross_check: bool,
}

fn yes() -> bool {
    true
}

impl Default for Flags {
    fn default() -> Self {
        Flags { include_sub_beta: true, emit_vertices: false, cross_check: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub domain: DomainConfig,
    #[serde(default = "default_grid_h")]
    pub grid_h: f64,
    #[serde(default = "default_tol_f")]
    pub tol_f: f64,
    #[serde(default = "default_waves")]
    pub n_waves: usize,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default, serialize_with = "ser_seed", deserialize_with = "de_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub vf: VfConfig,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Perturbation size for the stability certificate; `beta / 4` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_b: Option<f64>,
    #[serde(default)]
    pub classification: Classification,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub flags: Flags,
}

fn default_grid_h() -> f64 {
    DEFAULT_GRID_H
}
fn default_tol_f() -> f64 {
    DEFAULT_TOL_F
}
fn default_waves() -> usize {
    crate::field::DEFAULT_WAVES
}
fn default_trials() -> u64 {
    20
}
fn default_rho() -> f64 {
    DEFAULT_RHO
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}

// TOML integers are signed 64-bit, so seeds above i64::MAX travel as strings.
fn ser_seed<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if *v <= i64::MAX as u64 {
        s.serialize_u64(*v)
    } else {
        s.serialize_str(&format!("{v:#018x}"))
    }
}

fn de_seed<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => Ok(v),
        Raw::Str(s) => {
            let t = s.trim();
            let parsed = match t.strip_prefix("0x") {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => t.parse::<u64>(),
            };
            parsed.map_err(|e| serde::de::Error::custom(format!("master_seed {s:?}: {e}")))
        }
    }
}

impl RunConfig {
    /// `model` on `B(radius)` with defaults everywhere else.
    pub fn plane(model: ModelConfig, radius: f64) -> Self {
        RunConfig {
            model,
            domain: DomainConfig::Plane { radius },
            grid_h: default_grid_h(),
            tol_f: default_tol_f(),
            n_waves: default_waves(),
            trials: default_trials(),
            master_seed: 0,
            vf: VfConfig::default(),
            rho: default_rho(),
            beta: default_beta(),
            stability_b: None,
            classification: Classification::default(),
            output: OutputConfig::default(),
            flags: Flags::default(),
        }
    }

    /// A lattice model on its torus.
    pub fn torus(n: u64) -> Self {
        RunConfig {
            domain: DomainConfig::Torus,
            ..RunConfig::plane(ModelConfig::AtomicLattice { n }, 1.0)
        }
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let model = self.model.build().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.grid_h > 0.0 && self.grid_h <= 0.5) {
            return bad(format!("grid_h must lie in (0, 0.5], got {}", self.grid_h));
        }
        if !(self.tol_f > 0.0 && self.tol_f <= 1e-3) {
            return bad(format!("tol_f must lie in (0, 1e-3], got {}", self.tol_f));
        }
        if model.atoms().is_none() && self.n_waves < crate::field::MIN_WAVES {
            return bad(format!("n_waves must be >= {} for continuous models, got {}", crate::field::MIN_WAVES, self.n_waves));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if let Some(b) = self.stability_b {
            if !(b >= 0.0 && b <= self.beta / 4.0) {
                return bad(format!("stability_b must lie in [0, beta/4], got {b}"));
            }
        }
        if !(self.rho >= 0.0) {
            return bad(format!("rho must be nonnegative, got {}", self.rho));
        }
        let c = self.classification;
        if !(c.d > 0.0 && c.xi > 0.0) {
            return bad(format!("classification d and xi must be positive, got {} and {}", c.d, c.xi));
        }
        match self.domain {
            DomainConfig::Plane { radius } if !(radius > 0.0 && radius.is_finite()) => {
                return bad(format!("plane radius must be positive, got {radius}"));
            }
            DomainConfig::Torus if !self.model.is_lattice() => {
                return bad("torus domain needs a lattice model".into());
            }
            _ => {}
        }
        if !matches!(self.vf, VfConfig::Constant { .. }) && self.domain != DomainConfig::Torus {
            return bad("non-constant vector fields live on the torus".into());
        }
        if let VfConfig::Constant { angle_deg } = self.vf {
            if !angle_deg.is_finite() {
                return bad("vf angle must be finite".into());
            }
        }
        Ok(())
    }

    pub fn spectral_model(&self) -> Result<SpectralModel> {
        self.model.build()
    }

    pub fn region(&self) -> Region {
        match self.domain {
            DomainConfig::Plane { radius } => Region::Disc { radius },
            DomainConfig::Torus => Region::Torus,
        }
    }

    pub fn params(&self) -> ExtractParams {
        ExtractParams { grid_h: self.grid_h, tol_f: self.tol_f }
    }

    pub fn stability_b(&self) -> f64 {
        self.stability_b.unwrap_or(self.beta / 4.0)
    }

    pub fn vector_field(&self) -> Result<VectorFieldSpec> {
        let side = || {
            self.spectral_model()?
                .torus_side()
                .ok_or_else(|| Error::Config("vector field needs a torus model".into()))
        };
        Ok(match &self.vf {
            VfConfig::Constant { angle_deg } => VectorFieldSpec::constant(*angle_deg),
            VfConfig::SinSin => VectorFieldSpec::sin_sin(side()?, self.rho)?,
            VfConfig::MorseGradient => VectorFieldSpec::morse_gradient(side()?, self.rho)?,
            VfConfig::TorusTrig { a1, a2 } => VectorFieldSpec::torus_trig(side()?, a1.clone(), a2.clone(), self.rho)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
grid_h = 0.04
trials = 4
master_seed = 7
rho = 0.02

[model]
variant = "annulus"
alpha = 0.5

[domain]
kind = "plane"
radius = 12.5

[vf]
variant = "constant"
angle_deg = 30.0

[flags]
include_sub_beta = false
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.model, ModelConfig::Annulus { alpha: 0.5 });
        assert_eq!(cfg.trials, 4);
        assert!(!cfg.flags.include_sub_beta);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn rejects_unknown_keys() {
        for bad in [
            format!("{SAMPLE}\ntypo = 1\n"),
            SAMPLE.replace("alpha = 0.5", "alpha = 0.5\nbeta = 2"),
            SAMPLE.replace("include_sub_beta", "include_subbeta"),
        ] {
            assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(RunConfig::from_toml(&SAMPLE.replace("alpha = 0.5", "alpha = 1.5")).is_err());
        assert!(RunConfig::from_toml(&SAMPLE.replace("grid_h = 0.04", "grid_h = -1")).is_err());
        let mut c = RunConfig::torus(5);
        assert!(c.validate().is_ok());
        c.model = ModelConfig::Circle;
        assert!(c.validate().is_err());
    }

    #[test]
    fn large_seeds_survive_toml() {
        let mut c = RunConfig::torus(5);
        c.master_seed = u64::MAX - 3;
        let s = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&s).unwrap().master_seed, u64::MAX - 3);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::torus(5);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn short_model_names() {
        assert_eq!(ModelConfig::parse_short("lattice:5").unwrap(), ModelConfig::AtomicLattice { n: 5 });
        assert_eq!(ModelConfig::parse_short("annulus:0.25").unwrap(), ModelConfig::Annulus { alpha: 0.25 });
        assert!(ModelConfig::parse_short("annulus").is_err());
        assert!(ModelConfig::parse_short("sphere").is_err());
    }
}
