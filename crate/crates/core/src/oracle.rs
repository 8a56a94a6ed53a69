//! Kac-Rice densities and covariance cross-checks.
//!
//! Densities are `p_G(0) · E[|det DG| | G = 0]` for a Gaussian map `G`. The
//! joint law of `G` and its Jacobian comes from spectral moments; the
//! conditional expectation is a Monte Carlo average over the conditional
//! Gaussian.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::sample_field;
use crate::geom::Vec2;
use crate::seed::{mix, SeedRecord, TrialRng};
use crate::spectral::{derivative_covariance, SpectralModel, SpectralMoments};

/// Default number of conditional draws.
pub const DEFAULT_DRAWS: usize = 1 << 20;
const CHUNK: usize = 1 << 16;
/// Relative size below which a variance counts as zero.
const DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct KacRiceEstimate {
    /// Expected number of points per unit area.
    pub density: f64,
    pub stderr: f64,
    pub draws: usize,
    pub moments_used: SpectralMoments,
    /// Names of the jointly Gaussian quantities, in matrix order.
    pub labels: Vec<String>,
    pub conditioning_record: Vec<Vec<f64>>,
}

impl KacRiceEstimate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Density of points where the nodal line has normal `zeta`, i.e. of joint
/// zeros of `(f, ∂_ξ f)` with `ξ = ζ^⊥`.
///
/// The recorded covariance is that of
/// `(f, ∂_ξ f, ∂₁f, ∂₂f, ∂₁∂_ξ f, ∂₂∂_ξ f)`. It is always singular, since
/// `∂_ξ f` is a combination of `∂₁f` and `∂₂f`.
pub fn kac_rice_tangency_density(model: &SpectralModel, zeta: Vec2, draws: usize, seed: u64) -> Result<KacRiceEstimate> {
    let zeta = zeta.normalized();
    if !zeta.is_finite() {
        return Err(Error::arg("zeta must be a nonzero vector"));
    }
    let xi = zeta.perp();
    let (e1, e2) = (Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
    let ops: [&[Vec2]; 6] = [&[], &[xi], &[e1], &[e2], &[e1, xi], &[e2, xi]];
    let cov = covariance_matrix(model, &ops);

    // G = (f, ∂_ξ f), J = (∂₁f, ∂₂f, ∂₁∂_ξ f, ∂₂∂_ξ f)
    let gg = [[cov[0][0], cov[0][1]], [cov[1][0], cov[1][1]]];
    let det_g = gg[0][0] * gg[1][1] - gg[0][1] * gg[1][0];
    if !(det_g > DEGENERATE * gg[0][0] * gg[1][1]) {
        return Err(Error::KacRiceDegenerate(format!(
            "covariance of (f, d_xi f) is singular (det = {det_g:e})"
        )));
    }
    // det J = ∂_ζ f · ∂_ξ∂_ξ f on {∂_ξ f = 0}; both factors must stay random
    for (name, op) in [("d_zeta f", &[zeta][..]), ("d_xi d_xi f", &[xi, xi][..])] {
        let (v, c) = conditional_variance(model, op, &[&[], &[xi]]);
        if !(c > DEGENERATE * v) {
            return Err(Error::KacRiceDegenerate(format!(
                "{name} is deterministic given (f, d_xi f) = 0 at zeta = ({}, {})",
                zeta.x, zeta.y
            )));
        }
    }
    let cond = condition(&cov, &[0, 1], &[2, 3, 4, 5]);
    let l = psd_factor(&cond)?;
    let p0 = 1.0 / (TAU * det_g.sqrt());
    let (mean, se) = mc_mean(draws, seed, |z: &[f64; 4]| {
        let j = mat_vec(&l, z);
        (j[0] * j[3] - j[1] * j[2]).abs()
    })?;
    Ok(KacRiceEstimate {
        density: p0 * mean,
        stderr: p0 * se,
        draws,
        moments_used: model.moments(4)?,
        labels: ["f", "d_xi f", "d_1 f", "d_2 f", "d_1 d_xi f", "d_2 d_xi f"].map(String::from).to_vec(),
        conditioning_record: cov.iter().map(|r| r.to_vec()).collect(),
    })
}

/// Density of critical points of `f`.
pub fn kac_rice_critical_density(model: &SpectralModel, draws: usize, seed: u64) -> Result<KacRiceEstimate> {
    let (e1, e2) = (Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
    let ops: [&[Vec2]; 5] = [&[e1], &[e2], &[e1, e1], &[e1, e2], &[e2, e2]];
    let cov = covariance_matrix(model, &ops);
    let det_g = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    if !(det_g > DEGENERATE * cov[0][0] * cov[1][1]) {
        return Err(Error::KacRiceDegenerate(format!("gradient covariance is singular (det = {det_g:e})")));
    }
    // gradient and Hessian at one point are uncorrelated
    let h = condition(&cov, &[0, 1], &[2, 3, 4]);
    let l = psd_factor(&h)?;
    let p0 = 1.0 / (TAU * det_g.sqrt());
    let (mean, se) = mc_mean(draws, seed, |z: &[f64; 3]| {
        let v = mat_vec(&l, z);
        (v[0] * v[2] - v[1] * v[1]).abs()
    })?;
    Ok(KacRiceEstimate {
        density: p0 * mean,
        stderr: p0 * se,
        draws,
        moments_used: model.moments(4)?,
        labels: ["d_1 f", "d_2 f", "d_11 f", "d_12 f", "d_22 f"].map(String::from).to_vec(),
        conditioning_record: cov.iter().map(|r| r.to_vec()).collect(),
    })
}

fn covariance_matrix<const N: usize>(model: &SpectralModel, ops: &[&[Vec2]; N]) -> [[f64; N]; N] {
    let mut c = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            c[i][j] = derivative_covariance(model, ops[i], ops[j]);
        }
    }
    c
}

/// Unconditional and conditional variance of `op f` given the listed
/// quantities (assumed nondegenerate, two of them).
fn conditional_variance(model: &SpectralModel, op: &[Vec2], given: &[&[Vec2]; 2]) -> (f64, f64) {
    let ops: [&[Vec2]; 3] = [given[0], given[1], op];
    let c = covariance_matrix(model, &ops);
    let cond = condition(&c, &[0, 1], &[2]);
    (c[2][2], cond[0][0])
}

/// Covariance of the `keep` block given the (2×2, invertible) `given` block.
fn condition<const N: usize, const M: usize>(c: &[[f64; N]; N], given: &[usize; 2], keep: &[usize; M]) -> [[f64; M]; M] {
    let (a, b, d) = (c[given[0]][given[0]], c[given[0]][given[1]], c[given[1]][given[1]]);
    let det = a * d - b * b;
    let inv = [[d / det, -b / det], [-b / det, a / det]];
    let mut out = [[0.0; M]; M];
    for (i, &ki) in keep.iter().enumerate() {
        for (j, &kj) in keep.iter().enumerate() {
            let mut s = c[ki][kj];
            for p in 0..2 {
                for q in 0..2 {
                    s -= c[ki][given[p]] * inv[p][q] * c[given[q]][kj];
                }
            }
            out[i][j] = s;
        }
    }
    out
}

/// Lower-triangular `L` with `L Lᵀ = c` for a positive semidefinite `c`.
fn psd_factor<const N: usize>(c: &[[f64; N]; N]) -> Result<[[f64; N]; N]> {
    let scale = (0..N).map(|i| c[i][i].abs()).fold(0.0, f64::max);
    let tol = 1e-10 * scale;
    let mut l = [[0.0; N]; N];
    for j in 0..N {
        let d = c[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -tol {
            return Err(Error::ContractViolation(format!("covariance not positive semidefinite (pivot {d:e})")));
        }
        if d <= tol {
            continue;
        }
        l[j][j] = d.sqrt();
        for i in j + 1..N {
            let s = c[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = s / l[j][j];
        }
    }
    Ok(l)
}

fn mat_vec<const N: usize>(l: &[[f64; N]; N], z: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        for k in 0..=i {
            out[i] += l[i][k] * z[k];
        }
    }
    out
}

/// Mean and standard error of `g(Z)` over `draws` standard normal vectors.
/// Chunks use independent generators and are summed in order.
fn mc_mean<const N: usize>(draws: usize, seed: u64, g: impl Fn(&[f64; N]) -> f64 + Sync) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::arg("Monte Carlo needs at least 2 draws"));
    }
    let chunks = draws.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = SeedRecord::new(mix(seed, 0x0_4AC), c as u64).rng();
            let n = CHUNK.min(draws - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let z: [f64; N] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
                let v = g(&z);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = draws as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, Serialize)]
pub struct LagRow {
    pub lag: Vec2,
    pub expected: f64,
    pub empirical: f64,
    pub stderr: f64,
    /// `(empirical - expected) / stderr`.
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceCheck {
    pub model: String,
    pub n_realizations: usize,
    pub n_waves: usize,
    pub max_abs_error: f64,
    pub max_abs_z: f64,
    pub rows: Vec<LagRow>,
}

/// Empirical `E[f(0) f(u)]` over independent realizations against the
/// model covariance.
pub fn covariance_mc_check(
    model: &SpectralModel,
    n_realizations: usize,
    lags: &[Vec2],
    n_waves: usize,
    master_seed: u64,
) -> Result<CovarianceCheck> {
    if n_realizations < 100 {
        return Err(Error::arg(format!("covariance check needs >= 100 realizations, got {n_realizations}")));
    }
    let products: Vec<Vec<f64>> = (0..n_realizations as u64)
        .into_par_iter()
        .map(|t| {
            let f = sample_field(model, n_waves, SeedRecord::new(master_seed, t))?;
            let f0 = f.value(Vec2::ZERO);
            Ok(lags.iter().map(|&u| f0 * f.value(u)).collect())
        })
        .collect::<Result<_>>()?;
    let n = n_realizations as f64;
    let rows: Vec<LagRow> = lags
        .iter()
        .enumerate()
        .map(|(i, &lag)| {
            let mean = products.iter().map(|p| p[i]).sum::<f64>() / n;
            let var = products.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let stderr = (var / n).sqrt();
            let expected = model.covariance_lag(lag);
            LagRow { lag, expected, empirical: mean, stderr, z: (mean - expected) / stderr }
        })
        .collect();
    Ok(CovarianceCheck {
        model: model.name(),
        n_realizations,
        n_waves,
        max_abs_error: rows.iter().map(|r| (r.empirical - r.expected).abs()).fold(0.0, f64::max),
        max_abs_z: rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max),
        rows,
    })
}

/// Density of tangencies for an isotropic model in closed form,
/// `4 √(μ₄₀ − μ₂₀²)`.
pub fn isotropic_tangency_density(model: &SpectralModel) -> Result<f64> {
    if !model.is_radial() {
        return Err(Error::AnisotropicModel);
    }
    let (m20, m40) = (model.moment(2, 0), model.moment(4, 0));
    Ok(4.0 * (m40 - m20 * m20).sqrt())
}

/// Density of critical points for an isotropic model in closed form,
/// `(8π / √3) · μ₂₂ / μ₂₀`.
pub fn isotropic_critical_density(model: &SpectralModel) -> Result<f64> {
    if !model.is_radial() {
        return Err(Error::AnisotropicModel);
    }
    Ok(8.0 * PI / 3f64.sqrt() * model.moment(2, 2) / model.moment(2, 0))
}

/// Uniform random lags in the disc of radius `r_max`, seeded.
pub fn random_lags(count: usize, r_max: f64, seed: u64) -> Vec<Vec2> {
    let mut rng: TrialRng = SeedRecord::new(seed, 0).rng();
    (0..count)
        .map(|_| {
            let r = r_max * rng.random::<f64>().sqrt();
            let t = TAU * rng.random::<f64>();
            Vec2::new(r * t.cos(), r * t.sin())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `∂₁ᵖ∂₂ᵠ r(0)` by central differences with two Richardson steps.
    fn fd_derivative(model: &SpectralModel, p: usize, q: usize) -> f64 {
        const STENCILS: [&[f64]; 5] = [
            &[1.0],
            &[-0.5, 0.0, 0.5],
            &[1.0, -2.0, 1.0],
            &[-0.5, 1.0, 0.0, -1.0, 0.5],
            &[1.0, -4.0, 6.0, -4.0, 1.0],
        ];
        let d = |h: f64| {
            let (sp, sq) = (STENCILS[p], STENCILS[q]);
            let (op, oq) = ((sp.len() / 2) as f64, (sq.len() / 2) as f64);
            let mut acc = 0.0;
            for (i, wp) in sp.iter().enumerate() {
                for (j, wq) in sq.iter().enumerate() {
                    if *wp * *wq != 0.0 {
                        acc += wp * wq * model.covariance_lag(Vec2::new((i as f64 - op) * h, (j as f64 - oq) * h));
                    }
                }
            }
            acc / h.powi((p + q) as i32)
        };
        let h = 0.02;
        let (a, b, c) = (d(h), d(h / 2.0), d(h / 4.0));
        let (ab, bc) = ((4.0 * b - a) / 3.0, (4.0 * c - b) / 3.0);
        (16.0 * bc - ab) / 15.0
    }

    #[test]
    fn covariance_entries_match_finite_differences() {
        let axes = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let models = [
            SpectralModel::circle(),
            SpectralModel::annulus(0.5).unwrap(),
            SpectralModel::arithmetic(5).unwrap(),
            SpectralModel::atomic(&[10.0, 190.0, 75.0, 255.0, 130.0, 310.0], &[0.1, 0.1, 0.25, 0.25, 0.15, 0.15]).unwrap(),
        ];
        // all derivative multi-indices of order <= 2 on each side
        let mut ops: Vec<Vec<usize>> = vec![vec![]];
        for a in 0..2 {
            ops.push(vec![a]);
            for b in a..2 {
                ops.push(vec![a, b]);
            }
        }
        for m in &models {
            for a in &ops {
                for b in &ops {
                    let da: Vec<Vec2> = a.iter().map(|&i| axes[i]).collect();
                    let db: Vec<Vec2> = b.iter().map(|&i| axes[i]).collect();
                    let got = derivative_covariance(m, &da, &db);
                    let p = a.iter().chain(b).filter(|&&i| i == 0).count();
                    let q = a.len() + b.len() - p;
                    // Cov(D_a f(x), D_b f(y)) = (-1)^|b| D_{a+b} r at 0
                    let sign = if b.len() % 2 == 0 { 1.0 } else { -1.0 };
                    let want = sign * fd_derivative(m, p, q);
                    assert!(
                        (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                        "{} a={a:?} b={b:?}: {got} vs {want}",
                        m.name()
                    );
                }
            }
        }
    }

    #[test]
    fn circle_tangency_density_matches_closed_form() {
        let c = SpectralModel::circle();
        let exact = isotropic_tangency_density(&c).unwrap();
        assert!((exact - 2f64.sqrt()).abs() < 1e-14);
        let e = kac_rice_tangency_density(&c, Vec2::new(1.0, 0.0), DEFAULT_DRAWS, 1).unwrap();
        assert!(e.stderr / e.density < 0.01);
        assert!((e.density - exact).abs() < 4.0 * e.stderr, "{} vs {exact} ± {}", e.density, e.stderr);
        let r = kac_rice_tangency_density(&c, Vec2::from_angle_deg(37.0), DEFAULT_DRAWS, 2).unwrap();
        assert!((e.density - r.density).abs() < 3.0 * (e.stderr.hypot(r.stderr)));
    }

    #[test]
    fn annulus_densities_match_closed_forms() {
        let a = SpectralModel::annulus(0.5).unwrap();
        let t = kac_rice_tangency_density(&a, Vec2::from_angle_deg(20.0), DEFAULT_DRAWS, 3).unwrap();
        let exact = isotropic_tangency_density(&a).unwrap();
        assert!((t.density - exact).abs() < 4.0 * t.stderr);
        let c = kac_rice_critical_density(&a, DEFAULT_DRAWS, 4).unwrap();
        let exact = isotropic_critical_density(&a).unwrap();
        assert!((c.density - exact).abs() < 4.0 * c.stderr, "{} vs {exact}", c.density);
    }

    #[test]
    fn circle_critical_density() {
        let e = kac_rice_critical_density(&SpectralModel::circle(), DEFAULT_DRAWS, 5).unwrap();
        let exact = 2.0 * PI / 3f64.sqrt();
        assert!((isotropic_critical_density(&SpectralModel::circle()).unwrap() - exact).abs() < 1e-12);
        assert!((e.density - exact).abs() < 4.0 * e.stderr);
    }

    #[test]
    fn lattice_critical_density_reproducible() {
        let m = SpectralModel::arithmetic(5).unwrap();
        let a = kac_rice_critical_density(&m, DEFAULT_DRAWS, 10).unwrap();
        let b = kac_rice_critical_density(&m, DEFAULT_DRAWS, 11).unwrap();
        assert!((a.density - b.density).abs() < 3.0 * a.stderr.hypot(b.stderr));
        let again = kac_rice_critical_density(&m, DEFAULT_DRAWS, 10).unwrap();
        assert_eq!(a.density, again.density);
    }

    #[test]
    fn stderr_scales_like_inverse_root() {
        let c = SpectralModel::circle();
        let a = kac_rice_tangency_density(&c, Vec2::new(1.0, 0.0), 1 << 16, 7).unwrap();
        let b = kac_rice_tangency_density(&c, Vec2::new(1.0, 0.0), 1 << 18, 8).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn cilleruelo_degenerates_on_the_diagonal() {
        let m = SpectralModel::arithmetic(1).unwrap();
        assert!(matches!(
            kac_rice_tangency_density(&m, Vec2::from_angle_deg(45.0), 1 << 12, 1),
            Err(Error::KacRiceDegenerate(_))
        ));
        assert!(kac_rice_tangency_density(&m, Vec2::new(1.0, 0.0), 1 << 12, 1).is_ok());
    }

    #[test]
    fn record_is_symmetric_psd_and_singular() {
        let e = kac_rice_tangency_density(&SpectralModel::circle(), Vec2::from_angle_deg(30.0), 1 << 12, 1).unwrap();
        let c = &e.conditioning_record;
        for i in 0..6 {
            for j in 0..6 {
                assert!((c[i][j] - c[j][i]).abs() < 1e-9 * c[i][i].abs().max(1.0));
            }
        }
        let arr: [[f64; 6]; 6] = std::array::from_fn(|i| std::array::from_fn(|j| c[i][j]));
        let l = psd_factor(&arr).unwrap();
        assert_eq!((0..6).filter(|&i| l[i][i] == 0.0).count(), 1);
        let json = e.to_json().unwrap();
        assert!(json.contains("mu_40"));
    }

    #[test]
    fn covariance_check_small() {
        let lags = [Vec2::ZERO, Vec2::new(0.5, 0.0)];
        let r = covariance_mc_check(&SpectralModel::arithmetic(1).unwrap(), 200, &lags, 0, 3).unwrap();
        assert!(r.rows[0].z.abs() < 4.0);
        assert!(r.rows[1].expected.abs() < 1e-15);
        assert!(covariance_mc_check(&SpectralModel::circle(), 50, &lags, 64, 3).is_err());
    }
}
