//! Finite trigonometric-sum realizations of stationary Gaussian fields.
//!
//! A realization is `f(x) = norm · Σ_j (c_j cos 2π⟨k_j,x⟩ + s_j sin 2π⟨k_j,x⟩)`
//! and is evaluated exactly, together with its gradient and Hessian. Each
//! term also carries the variance of its amplitudes so that the conditional
//! variance `norm² Σ_j variance_j` is available without Monte Carlo.

pub(crate) mod kernel;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::seed::SeedRecord;
use crate::spectral::SpectralModel;

pub use kernel::{sincos_turns, Jet};
pub(crate) use kernel::Packed;

/// Smallest number of plane waves accepted for continuous spectral models.
pub const MIN_WAVES: usize = 16;
pub const DEFAULT_WAVES: usize = 1024;

/// One plane-wave term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub frequency: Vec2,
    pub cos_amp: f64,
    pub sin_amp: f64,
    /// Variance of each of the two amplitudes under the sampling law (0 for
    /// deterministic terms).
    #[serde(default)]
    pub variance: f64,
}

impl Term {
    pub fn new(frequency: Vec2, cos_amp: f64, sin_amp: f64) -> Self {
        Term {
            frequency,
            cos_amp,
            sin_amp,
            variance: 0.0,
        }
    }
}

/// Where a realization lives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Plane,
    /// Square torus `ℝ² / (side ℤ)²`; every frequency times `side` is an integer vector.
    Torus { side: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RealizationDoc {
    terms: Vec<Term>,
    norm: f64,
    domain: Domain,
    model: Option<SpectralModel>,
    seed: Option<SeedRecord>,
}

/// An exactly evaluable field realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RealizationDoc", into = "RealizationDoc")]
pub struct FieldRealization {
    terms: Vec<Term>,
    norm: f64,
    domain: Domain,
    model: Option<SpectralModel>,
    seed: Option<SeedRecord>,
    packed: Packed,
}

impl TryFrom<RealizationDoc> for FieldRealization {
    type Error = Error;
    fn try_from(d: RealizationDoc) -> Result<Self> {
        FieldRealization::build(d.terms, d.norm, d.domain, d.model, d.seed)
    }
}

impl From<FieldRealization> for RealizationDoc {
    fn from(f: FieldRealization) -> Self {
        RealizationDoc {
            terms: f.terms,
            norm: f.norm,
            domain: f.domain,
            model: f.model,
            seed: f.seed,
        }
    }
}

/// Draws a realization of the field with spectral measure `model`.
///
/// Continuous models use `n_waves` i.i.d. frequencies from the measure;
/// atomic models use one term per antipodal pair of atoms and ignore `n_waves`.
pub fn sample_field(model: &SpectralModel, n_waves: usize, seed: SeedRecord) -> Result<FieldRealization> {
    let mut rng = seed.rng();
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };
    let (terms, norm, domain) = match model {
        SpectralModel::Circle | SpectralModel::Annulus { .. } => {
            if n_waves < MIN_WAVES {
                return Err(Error::arg(format!(
                    "continuous models need n_waves >= {MIN_WAVES}, got {n_waves}"
                )));
            }
            // frequencies and amplitudes come from separate streams so that
            // changing n_waves only appends waves
            let mut frng = seed.substream(1).rng();
            let mut terms = Vec::with_capacity(n_waves);
            for _ in 0..n_waves {
                let k = model.sample_frequency(&mut frng).expect("continuous model");
                terms.push(Term {
                    frequency: k,
                    cos_amp: gauss(),
                    sin_amp: gauss(),
                    variance: 1.0,
                });
            }
            (terms, 1.0 / (n_waves as f64).sqrt(), Domain::Plane)
        }
        SpectralModel::AtomicLattice { n, points } => {
            if points.is_empty() {
                return Err(Error::NotSumOfTwoSquares(*n));
            }
            let s = (*n as f64).sqrt();
            // one representative per ± pair: the lexicographically larger point
            let terms: Vec<Term> = points
                .iter()
                .filter(|&&(a, b)| (a, b) > (-a, -b))
                .map(|&(a, b)| Term {
                    frequency: Vec2::new(a as f64 / s, b as f64 / s),
                    cos_amp: gauss(),
                    sin_amp: gauss(),
                    variance: 1.0,
                })
                .collect();
            let norm = (2.0 / points.len() as f64).sqrt();
            (terms, norm, Domain::Torus { side: s })
        }
        SpectralModel::AtomicGeneral { points, weights } => {
            let mut terms = Vec::new();
            for (p, w) in points.iter().zip(weights) {
                let rep = p.y > 0.0 || (p.y == 0.0 && p.x > 0.0);
                if rep && *w > 0.0 {
                    let sd = (2.0 * w).sqrt();
                    terms.push(Term {
                        frequency: *p,
                        cos_amp: sd * gauss(),
                        sin_amp: sd * gauss(),
                        variance: 2.0 * w,
                    });
                }
            }
            (terms, 1.0, Domain::Plane)
        }
    };
    FieldRealization::build(terms, norm, domain, Some(model.clone()), Some(seed))
}

/// A realization with explicitly given coefficients (test fixtures, barrier functions).
///
/// Frequency `(0, 0)` with a cosine amplitude acts as a constant offset.
pub fn inject_deterministic(terms: Vec<Term>, domain: Domain) -> Result<FieldRealization> {
    if terms.is_empty() {
        return Err(Error::arg("inject_deterministic needs at least one term"));
    }
    FieldRealization::build(terms, 1.0, domain, None, None)
}

impl FieldRealization {
    fn build(
        terms: Vec<Term>,
        norm: f64,
        domain: Domain,
        model: Option<SpectralModel>,
        seed: Option<SeedRecord>,
    ) -> Result<Self> {
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::arg(format!("norm must be positive, got {norm}")));
        }
        for t in &terms {
            if !(t.frequency.is_finite() && t.cos_amp.is_finite() && t.sin_amp.is_finite()) {
                return Err(Error::arg("non-finite term coefficient"));
            }
        }
        if let Domain::Torus { side } = domain {
            if !(side > 0.0) {
                return Err(Error::arg("torus side must be positive"));
            }
            for t in &terms {
                let m = t.frequency * side;
                if (m.x - m.x.round()).abs() > 1e-9 || (m.y - m.y.round()).abs() > 1e-9 {
                    return Err(Error::arg(format!(
                        "frequency ({}, {}) is not periodic on a torus of side {side}",
                        t.frequency.x, t.frequency.y
                    )));
                }
            }
        }
        let packed = Packed::new(
            terms
                .iter()
                .map(|t| (t.frequency, norm * t.cos_amp, norm * t.sin_amp)),
        );
        Ok(FieldRealization {
            terms,
            norm,
            domain,
            model,
            seed,
            packed,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn model(&self) -> Option<&SpectralModel> {
        self.model.as_ref()
    }

    pub fn seed(&self) -> Option<SeedRecord> {
        self.seed
    }

    pub(crate) fn packed(&self) -> &Packed {
        &self.packed
    }

    /// `norm² Σ variance_j`: the variance of `f(x)` given the frequencies.
    pub fn conditional_variance(&self) -> f64 {
        self.norm * self.norm * self.terms.iter().map(|t| t.variance).sum::<f64>()
    }

    /// Largest frequency magnitude.
    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.frequency.norm()).fold(0.0, f64::max)
    }

    #[inline]
    pub fn value(&self, x: Vec2) -> f64 {
        self.packed.value(x)
    }

    #[inline]
    pub fn value_grad(&self, x: Vec2) -> (f64, Vec2) {
        self.packed.value_grad(x)
    }

    /// Value, gradient and Hessian at `x`.
    #[inline]
    pub fn eval(&self, x: Vec2) -> Jet {
        self.packed.jet(x)
    }

    /// The realization of `x ↦ f(x − u)`.
    pub fn shift(&self, u: Vec2) -> FieldRealization {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let (s, c) = sincos_turns(t.frequency.dot(u));
                Term {
                    cos_amp: t.cos_amp * c - t.sin_amp * s,
                    sin_amp: t.cos_amp * s + t.sin_amp * c,
                    ..*t
                }
            })
            .collect();
        FieldRealization::build(terms, self.norm, self.domain, self.model.clone(), self.seed)
            .expect("shift preserves validity")
    }

    /// `f + c·g` as one realization (terms concatenated). Domains must agree.
    pub fn add_scaled(&self, other: &FieldRealization, c: f64) -> Result<FieldRealization> {
        if self.domain != other.domain {
            return Err(Error::arg("cannot add realizations on different domains"));
        }
        let r = c * other.norm / self.norm;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|t| Term {
            frequency: t.frequency,
            cos_amp: r * t.cos_amp,
            sin_amp: r * t.sin_amp,
            variance: r * r * t.variance,
        }));
        FieldRealization::build(terms, self.norm, self.domain, self.model.clone(), self.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
