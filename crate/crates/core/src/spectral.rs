//! Spectral measures on the plane and the stationary covariances they define.
//!
//! All models are normalized so that the support of the measure lies in the
//! closed unit disc: frequencies are in cycles per unit length and the field
//! has the form `Σ a cos(2π⟨λ,x⟩) + b sin(2π⟨λ,x⟩)`. Lattice frequencies of
//! arithmetic waves are stored as integer pairs and used as `λ/√n`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// A centrally symmetric probability measure on the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SpectralModel {
    /// Normalized area measure of `{α < |λ| < 1}`.
    Annulus { alpha: f64 },
    /// Normalized arc length on the unit circle (Berry's random wave).
    Circle,
    /// Uniform measure on `Λ_n / √n`, `Λ_n = {(a, b) : a² + b² = n}`.
    AtomicLattice { n: u64, points: Vec<(i64, i64)> },
    /// Weighted atoms on the unit circle.
    AtomicGeneral { points: Vec<Vec2>, weights: Vec<f64> },
}

/// Enumerates `Λ_n` in lexicographic order. An empty result means `n` is
/// not a sum of two squares.
pub fn lattice_points(n: i64) -> Result<Vec<(i64, i64)>> {
    if n < 1 {
        return Err(Error::arg(format!("lattice_points needs n >= 1, got {n}")));
    }
    let m = (n as f64).sqrt().ceil() as i64 + 1;
    let mut pts = Vec::new();
    for a in -m..=m {
        let rest = n - a * a;
        if rest < 0 {
            continue;
        }
        let b = (rest as f64).sqrt().round() as i64;
        for b in [b - 1, b, b + 1] {
            if b >= 0 && b * b == rest {
                if b == 0 {
                    pts.push((a, 0));
                } else {
                    pts.push((a, -b));
                    pts.push((a, b));
                }
            }
        }
    }
    pts.sort_unstable();
    pts.dedup();
    Ok(pts)
}

impl SpectralModel {
    pub fn circle() -> Self {
        SpectralModel::Circle
    }

    pub fn annulus(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::arg(format!("annulus alpha must lie in [0, 1), got {alpha}")));
        }
        Ok(SpectralModel::Annulus { alpha })
    }

    /// Arithmetic random wave measure for `n`.
    pub fn arithmetic(n: u64) -> Result<Self> {
        let points = lattice_points(n as i64)?;
        if points.is_empty() {
            return Err(Error::NotSumOfTwoSquares(n));
        }
        Ok(SpectralModel::AtomicLattice { n, points })
    }

    /// Atoms at the given angles (degrees) on the unit circle.
    ///
    /// Weights must be nonnegative and sum to one within 1e-12, and the atom
    /// set must be closed under `λ -> -λ` with matching weights.
    pub fn atomic(angles_deg: &[f64], weights: &[f64]) -> Result<Self> {
        if angles_deg.is_empty() || angles_deg.len() != weights.len() {
            return Err(Error::arg("atomic model needs equally many angles and weights"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::arg("atomic weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("atomic weights sum to {total}, expected 1")));
        }
        let points: Vec<Vec2> = angles_deg.iter().map(|&a| Vec2::from_angle_deg(a)).collect();
        for (p, w) in points.iter().zip(weights) {
            let mirrored = points
                .iter()
                .zip(weights)
                .any(|(q, wq)| q.dist(-*p) < 1e-9 && (wq - w).abs() < 1e-12);
            if !mirrored {
                return Err(Error::arg(format!(
                    "atomic model is not centrally symmetric at ({:.6}, {:.6})",
                    p.x, p.y
                )));
            }
        }
        Ok(SpectralModel::AtomicGeneral {
            points,
            weights: weights.to_vec(),
        })
    }

    /// The four-point Cilleruelo measure on `{±1, ±i}`.
    pub fn cilleruelo() -> Self {
        SpectralModel::arithmetic(1).expect("1 = 1² + 0²")
    }

    /// The Cilleruelo measure rotated by 45 degrees.
    pub fn cilleruelo_tilted() -> Self {
        SpectralModel::atomic(&[45.0, 135.0, 225.0, 315.0], &[0.25; 4]).expect("symmetric")
    }

    pub fn name(&self) -> String {
        match self {
            SpectralModel::Annulus { alpha } => format!("annulus(alpha={alpha})"),
            SpectralModel::Circle => "circle".into(),
            SpectralModel::AtomicLattice { n, .. } => format!("arithmetic(n={n})"),
            SpectralModel::AtomicGeneral { points, .. } => format!("atomic({} atoms)", points.len()),
        }
    }

    /// Isotropic models, whose covariance depends on `|u|` only.
    pub fn is_radial(&self) -> bool {
        matches!(self, SpectralModel::Annulus { .. } | SpectralModel::Circle)
    }

    /// Atoms as `(normalized frequency, weight)` pairs; `None` for continuous models.
    pub fn atoms(&self) -> Option<Vec<(Vec2, f64)>> {
        match self {
            SpectralModel::AtomicLattice { n, points } => {
                let s = (*n as f64).sqrt();
                let w = 1.0 / points.len() as f64;
                Some(
                    points
                        .iter()
                        .map(|&(a, b)| (Vec2::new(a as f64 / s, b as f64 / s), w))
                        .collect(),
                )
            }
            SpectralModel::AtomicGeneral { points, weights } => {
                Some(points.iter().copied().zip(weights.iter().copied()).collect())
            }
            _ => None,
        }
    }

    /// Side length of the square torus on which the model's fields are periodic.
    pub fn torus_side(&self) -> Option<f64> {
        match self {
            SpectralModel::AtomicLattice { n, .. } => Some((*n as f64).sqrt()),
            _ => None,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self.atoms() {
            Some(a) => a.iter().map(|(_, w)| w).sum(),
            None => 1.0,
        }
    }

    /// The measure has no atoms.
    pub fn has_no_atoms(&self) -> bool {
        self.is_radial()
    }

    /// The support is not contained in a line through the origin.
    pub fn spans_plane(&self) -> bool {
        match self.atoms() {
            None => true,
            Some(atoms) => {
                let support: Vec<Vec2> =
                    atoms.iter().filter(|(_, w)| *w > 0.0).map(|(p, _)| *p).collect();
                support
                    .iter()
                    .any(|p| support.iter().any(|q| p.cross(*q).abs() > 1e-12))
            }
        }
    }

    /// The support has non-empty interior.
    pub fn has_interior(&self) -> bool {
        matches!(self, SpectralModel::Annulus { .. })
    }

    /// Radial covariance `B(r)` of an isotropic model.
    pub fn covariance(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::arg(format!("covariance needs r >= 0, got {r}")));
        }
        match *self {
            SpectralModel::Circle => Ok(libm::j0(TAU * r)),
            SpectralModel::Annulus { alpha } => {
                let a2 = alpha * alpha;
                let outer = jinc(TAU * r);
                let inner = if alpha > 0.0 { a2 * jinc(TAU * alpha * r) } else { 0.0 };
                Ok(2.0 / (1.0 - a2) * (outer - inner))
            }
            _ => Err(Error::AnisotropicModel),
        }
    }

    /// Covariance `r(u) = ∫ cos(2π⟨λ,u⟩) dρ(λ)` at lag `u`.
    pub fn covariance_lag(&self, u: Vec2) -> f64 {
        match self.atoms() {
            Some(atoms) => atoms
                .iter()
                .map(|(p, w)| w * (TAU * p.dot(u)).cos())
                .sum(),
            None => self.covariance(u.norm()).expect("radial model"),
        }
    }

    /// `∫ λ₁ᵖ λ₂ᵠ dρ(λ)`.
    pub fn moment(&self, p: u32, q: u32) -> f64 {
        match self {
            SpectralModel::Circle => circle_moment(p, q),
            SpectralModel::Annulus { alpha } => {
                let d = (p + q + 2) as i32;
                let a2 = alpha * alpha;
                let radial = 2.0 * (1.0 - alpha.powi(d)) / (d as f64 * (1.0 - a2));
                radial * circle_moment(p, q)
            }
            _ => {
                let atoms = self.atoms().unwrap();
                atoms
                    .iter()
                    .map(|(l, w)| w * l.x.powi(p as i32) * l.y.powi(q as i32))
                    .sum()
            }
        }
    }

    /// All moments of total degree up to `max_degree` (at least 4).
    pub fn moments(&self, max_degree: u32) -> Result<SpectralMoments> {
        if max_degree < 4 {
            return Err(Error::arg("moments need max_degree >= 4"));
        }
        let mut values = BTreeMap::new();
        for d in 0..=max_degree {
            for p in 0..=d {
                values.insert((p, d - p), self.moment(p, d - p));
            }
        }
        Ok(SpectralMoments { max_degree, values })
    }

    /// Draws one frequency from a continuous model.
    pub fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec2> {
        let theta = rng.random::<f64>() * TAU;
        let dir = Vec2::new(theta.cos(), theta.sin());
        match *self {
            SpectralModel::Circle => Some(dir),
            SpectralModel::Annulus { alpha } => {
                let a2 = alpha * alpha;
                let r = (a2 + rng.random::<f64>() * (1.0 - a2)).sqrt();
                Some(dir * r)
            }
            _ => None,
        }
    }
}

/// `2 J₁(x)/x`-style kernel without the factor 2: `J₁(x)/x`, equal to 1/2 at 0.
fn jinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        0.5 - x * x / 16.0
    } else {
        libm::j1(x) / x
    }
}

/// `E[cosᵖθ sinᵠθ]` for θ uniform.
fn circle_moment(p: u32, q: u32) -> f64 {
    if p % 2 == 1 || q % 2 == 1 {
        return 0.0;
    }
    double_factorial(p as i64 - 1) * double_factorial(q as i64 - 1) / double_factorial((p + q) as i64)
}

fn double_factorial(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Mixed moments `∫ λ₁ᵖ λ₂ᵠ dρ` for all `p + q <= max_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMoments {
    pub max_degree: u32,
    pub values: BTreeMap<(u32, u32), f64>,
}

impl SpectralMoments {
    pub fn get(&self, p: u32, q: u32) -> f64 {
        self.values[&(p, q)]
    }
}

impl Serialize for SpectralMoments {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, f64> = self
            .values
            .iter()
            .map(|((p, q), v)| (format!("mu_{p}{q}"), *v))
            .collect();
        map.serialize(s)
    }
}

/// Polynomial in `(λ₁, λ₂)` as a monomial table, used to integrate products
/// of linear forms against a spectral measure.
#[derive(Debug, Clone, Default)]
pub(crate) struct Poly(pub BTreeMap<(u32, u32), f64>);

impl Poly {
    pub fn one() -> Self {
        Poly(BTreeMap::from([((0, 0), 1.0)]))
    }

    /// Multiply by `⟨λ, d⟩`.
    pub fn times_linear(&self, d: Vec2) -> Self {
        let mut out = BTreeMap::new();
        for (&(p, q), &c) in &self.0 {
            if d.x != 0.0 {
                *out.entry((p + 1, q)).or_insert(0.0) += c * d.x;
            }
            if d.y != 0.0 {
                *out.entry((p, q + 1)).or_insert(0.0) += c * d.y;
            }
        }
        Poly(out)
    }

    pub fn integrate(&self, model: &SpectralModel) -> f64 {
        self.0.iter().map(|(&(p, q), c)| c * model.moment(p, q)).sum()
    }
}

/// `Cov(D_A f(0), D_B f(0))` where `D_A`, `D_B` are products of directional
/// derivatives along the listed unit vectors.
pub(crate) fn derivative_covariance(model: &SpectralModel, a: &[Vec2], b: &[Vec2]) -> f64 {
    let m = a.len() + b.len();
    if m % 2 == 1 {
        return 0.0;
    }
    let mut poly = Poly::one();
    for &d in a.iter().chain(b) {
        poly = poly.times_linear(d);
    }
    let sign = if ((a.len() as i64 - b.len() as i64) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign * TAU.powi(m as i32) * poly.integrate(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lattice_points_examples() {
        let p5 = lattice_points(5).unwrap();
        assert_eq!(p5.len(), 8);
        assert!(p5.contains(&(1, 2)) && p5.contains(&(-2, -1)));
        assert!(lattice_points(3).unwrap().is_empty());
        let p25 = lattice_points(25).unwrap();
        let mut brute = Vec::new();
        for a in -5i64..=5 {
            for b in -5i64..=5 {
                if a * a + b * b == 25 {
                    brute.push((a, b));
                }
            }
        }
        assert_eq!(p25, brute);
        assert_eq!(p25.len(), 12);
        assert!(lattice_points(0).is_err());
        assert!(lattice_points(-4).is_err());
    }

    #[test]
    fn lattice_symmetry_closure() {
        for n in 1..200 {
            let pts = lattice_points(n).unwrap();
            for &(a, b) in &pts {
                for img in [(-a, b), (a, -b), (-a, -b), (b, a), (-b, a), (b, -a), (-b, -a)] {
                    assert!(pts.contains(&img), "n={n} missing {img:?}");
                }
            }
        }
    }

    #[test]
    fn covariance_lag_atomic_examples() {
        let m = SpectralModel::arithmetic(1).unwrap();
        assert_eq!(m.covariance_lag(Vec2::ZERO), 1.0);
        assert!(m.covariance_lag(Vec2::new(0.5, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn circle_isotropy_and_errors() {
        let c = SpectralModel::circle();
        assert_eq!(c.covariance(0.0).unwrap(), 1.0);
        for r in [0.1, 0.7] {
            assert_eq!(c.covariance_lag(Vec2::new(r, 0.0)), c.covariance(r).unwrap());
        }
        let a = SpectralModel::arithmetic(5).unwrap();
        assert!(matches!(a.covariance(0.3), Err(Error::AnisotropicModel)));
        assert_eq!(
            Error::AnisotropicModel.to_string(),
            "anisotropic model requires covariance_lag"
        );
    }

    #[test]
    fn moment_examples() {
        assert!((SpectralModel::circle().moment(2, 0) - 0.5).abs() < 1e-15);
        let a5 = SpectralModel::arithmetic(5).unwrap();
        assert!((a5.moment(2, 0) - (4.0 * 0.2 + 4.0 * 0.8) / 8.0).abs() < 1e-15);
        for m in [
            SpectralModel::circle(),
            SpectralModel::annulus(0.3).unwrap(),
            a5,
            SpectralModel::cilleruelo_tilted(),
        ] {
            let mom = m.moments(4).unwrap();
            assert!((mom.get(0, 0) - 1.0).abs() < 1e-12);
            assert!(mom.get(1, 0).abs() < 1e-15);
            for ((p, q), v) in &mom.values {
                if (p + q) % 2 == 1 {
                    assert!(v.abs() < 1e-15, "{} mu_{p}{q} = {v}", m.name());
                }
            }
            if m.is_radial() {
                assert!((mom.get(2, 0) - mom.get(0, 2)).abs() < 1e-15);
            }
        }
        assert!(SpectralModel::circle().moments(3).is_err());
    }

    #[test]
    fn axioms() {
        assert!(SpectralModel::circle().has_no_atoms());
        assert!(!SpectralModel::circle().has_interior());
        assert!(SpectralModel::annulus(0.5).unwrap().has_interior());
        assert!(SpectralModel::arithmetic(5).unwrap().spans_plane());
        let line = SpectralModel::atomic(&[0.0, 180.0], &[0.5, 0.5]).unwrap();
        assert!(!line.spans_plane());
        assert!(SpectralModel::atomic(&[0.0, 90.0], &[0.5, 0.5]).is_err());
        assert!(SpectralModel::atomic(&[0.0, 180.0], &[0.5, 0.6]).is_err());
        assert!(SpectralModel::annulus(1.0).is_err());
        assert!(matches!(
            SpectralModel::arithmetic(3),
            Err(Error::NotSumOfTwoSquares(3))
        ));
    }

    #[test]
    fn derivative_covariance_signs() {
        let c = SpectralModel::circle();
        let e1 = Vec2::new(1.0, 0.0);
        // Var ∂₁f = (2π)² mu_20, Cov(f, ∂₁₁f) = -(2π)² mu_20, Var ∂₁₁f = (2π)⁴ mu_40
        let t2 = TAU * TAU;
        assert!((derivative_covariance(&c, &[e1], &[e1]) - t2 * 0.5).abs() < 1e-12);
        assert!((derivative_covariance(&c, &[], &[e1, e1]) + t2 * 0.5).abs() < 1e-12);
        assert!((derivative_covariance(&c, &[e1, e1], &[e1, e1]) - t2 * t2 * 0.375).abs() < 1e-9);
    }

    /// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
    }

    /// `∫ cos(2π⟨λ, (r, 0)⟩) dρ(λ)` by nested quadrature in polar coordinates.
    fn quad_covariance(alpha: Option<f64>, r: f64) -> f64 {
        let angular = |rho: f64| simpson(&|t: f64| (TAU * rho * r * t.cos()).cos(), 0.0, PI, 1e-13) / PI;
        match alpha {
            None => angular(1.0),
            Some(a) => simpson(&|rho: f64| angular(rho) * rho, a, 1.0, 1e-12) * 2.0 / (1.0 - a * a),
        }
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(lo) > 0.0) == (f(mid) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let ann = SpectralModel::annulus(0.5).unwrap();
        let q = quad_covariance(Some(0.5), 1.0);
        assert!((ann.covariance(1.0).unwrap() - q).abs() < 1e-10, "{q}");
        assert!((ann.covariance(1.0).unwrap() - -0.150_535_196_963_851_2).abs() < 1e-12);
        for r in [0.05, 0.3, 1.7] {
            assert!((SpectralModel::circle().covariance(r).unwrap() - quad_covariance(None, r)).abs() < 1e-10);
            let a0 = SpectralModel::annulus(0.0).unwrap();
            assert!((a0.covariance(r).unwrap() - quad_covariance(Some(0.0), r)).abs() < 1e-10);
        }
    }

    #[test]
    fn first_circle_zero() {
        let c = SpectralModel::circle();
        let closed = bisect(|r| c.covariance(r).unwrap(), 0.2, 0.5);
        let quad = bisect(|r| quad_covariance(None, r), 0.2, 0.5);
        assert!((closed - quad).abs() < 1e-9);
        assert!((closed - 0.382_739_874_781_006_2).abs() < 1e-12, "{closed}");
    }

    fn any_model() -> impl Strategy<Value = SpectralModel> {
        prop_oneof![
            Just(SpectralModel::circle()),
            (0.0..0.95f64).prop_map(|a| SpectralModel::annulus(a).unwrap()),
            prop::sample::select(vec![1u64, 2, 5, 13, 25, 65]).prop_map(|n| SpectralModel::arithmetic(n).unwrap()),
            Just(SpectralModel::cilleruelo_tilted()),
        ]
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn covariance_is_even_and_bounded(m in any_model(), x in -4.0..4.0f64, y in -4.0..4.0f64) {
            let u = Vec2::new(x, y);
            let r = m.covariance_lag(u);
            prop_assert!((r - m.covariance_lag(-u)).abs() < 1e-12);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn radial_models_are_rotation_invariant(alpha in prop::option::of(0.0..0.95f64), r in 0.0..5.0f64, t in 0.0..TAU) {
            let m = match alpha {
                Some(a) => SpectralModel::annulus(a).unwrap(),
                None => SpectralModel::circle(),
            };
            let u = Vec2::new(r * t.cos(), r * t.sin());
            let base = m.covariance_lag(u);
            for j in 0..8 {
                let v = u.rotate(j as f64 * TAU / 8.0);
                prop_assert!((m.covariance_lag(v) - base).abs() < 1e-9);
            }
        }

        #[test]
        fn second_moment_from_finite_differences(m in any_model()) {
            let h = 1e-4;
            let e = Vec2::new(h, 0.0);
            let fd = -(m.covariance_lag(e) - 2.0 * m.covariance_lag(Vec2::ZERO) + m.covariance_lag(-e)) / (h * h);
            let exact = TAU * TAU * m.moment(2, 0);
            prop_assert!((fd - exact).abs() <= 1e-4 * exact, "{} vs {}", fd, exact);
        }
    }
}
