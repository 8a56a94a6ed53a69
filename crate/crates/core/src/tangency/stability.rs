//! Perturbation certificate for tangency counts.
//!
//! A component is certified when every tangency on it is `β`-transverse and
//! the gradient of `f` along it stays above `β`. The field is then perturbed
//! by an independent realization `ψ` scaled so that twice its sampled
//! C²-norm stays below `b`, and every certified component must keep its count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::kernel::{sweep, Channel};
use crate::field::{sample_field, FieldRealization, DEFAULT_WAVES};
use crate::geom::{self, Vec2};
use crate::nodal::{ExtractParams, Lattice, NodalComponent, Region};

use super::{count_via_intersections, is_counted, VectorFieldSpec};

/// Grid step used to estimate the C²-norm of the perturbation.
const NORM_GRID_H: f64 = 0.05;
/// Safety factor applied to the grid estimate of the C²-norm.
const NORM_SAFETY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Preserved,
    Changed,
    MatchAmbiguous,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentVerdict {
    pub component: usize,
    pub anchor: Vec2,
    pub k_before: usize,
    pub k_after: Option<usize>,
    pub hausdorff: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub beta: f64,
    pub b: f64,
    /// Multiplier applied to the unit-variance perturbation.
    pub psi_scale: f64,
    /// `2 · max(|ψ|, ‖∇ψ‖, |∂²ψ|)` over the estimation grid, after scaling.
    pub certified_bound: f64,
    pub matching_radius: f64,
    pub components: usize,
    pub certified: usize,
    pub preserved: usize,
    pub changed: usize,
    pub ambiguous: usize,
    pub unmatched: usize,
    pub verdicts: Vec<ComponentVerdict>,
}

impl StabilityReport {
    /// Preserved fraction among certified components that could be matched.
    pub fn preservation_rate(&self) -> f64 {
        let judged = self.preserved + self.changed + self.unmatched;
        if judged == 0 {
            1.0
        } else {
            self.preserved as f64 / judged as f64
        }
    }
}

/// Runs the certificate with `ψ` drawn from the realization's own model on
/// an independent seed stream.
pub fn stability_check(
    f: &FieldRealization,
    vf: &VectorFieldSpec,
    beta: f64,
    b: f64,
    region: Region,
    params: ExtractParams,
) -> Result<StabilityReport> {
    let psi = match (f.model(), f.seed()) {
        (Some(model), Some(seed)) => {
            let n = if model.atoms().is_some() { 0 } else { f.terms().len().max(16) };
            let n = if n == 0 { DEFAULT_WAVES } else { n };
            sample_field(model, n, seed.substream(0x57AB))?
        }
        _ => return Err(Error::arg("stability_check needs a sampled realization; use stability_check_with")),
    };
    stability_check_with(f, &psi, vf, beta, b, region, params)
}

/// Runs the certificate with an explicit perturbation direction `psi`.
pub fn stability_check_with(
    f: &FieldRealization,
    psi: &FieldRealization,
    vf: &VectorFieldSpec,
    beta: f64,
    b: f64,
    region: Region,
    params: ExtractParams,
) -> Result<StabilityReport> {
    if !(b >= 0.0) || b > beta / 4.0 * (1.0 + 1e-12) {
        return Err(Error::arg(format!("stability needs 0 <= b <= beta/4, got b = {b}, beta = {beta}")));
    }
    let c2 = c2_grid_norm(psi, region)?;
    let psi_scale = if b == 0.0 || c2 == 0.0 {
        0.0
    } else {
        0.999 * b / (NORM_SAFETY * c2)
    };
    let g = f.add_scaled(psi, psi_scale)?;

    let before = count_via_intersections(f, vf, region, params, beta)?;
    let after = count_via_intersections(&g, vf, region, params, beta)?;
    let radius = 0.5 * params.grid_h;

    let mut report = StabilityReport {
        beta,
        b,
        psi_scale,
        certified_bound: NORM_SAFETY * c2 * psi_scale,
        matching_radius: radius,
        components: before.set.components.len(),
        certified: 0,
        preserved: 0,
        changed: 0,
        ambiguous: 0,
        unmatched: 0,
        verdicts: Vec::new(),
    };
    let boxes: Vec<(Vec2, Vec2)> = after.set.components.iter().map(|c| geom::bbox(&c.vertices)).collect();
    for (i, (comp, count)) in before.set.components.iter().zip(&before.counts).enumerate() {
        if !is_counted(comp, count) || !certified(comp, count.records.iter().map(|r| r.margin), beta) {
            continue;
        }
        report.certified += 1;
        let (lo, hi) = geom::bbox(&comp.vertices);
        let mut matches = Vec::new();
        for (j, other) in after.set.components.iter().enumerate() {
            let (olo, ohi) = boxes[j];
            if olo.x > hi.x + radius || ohi.x < lo.x - radius || olo.y > hi.y + radius || ohi.y < lo.y - radius {
                continue;
            }
            let d = hausdorff(comp, other);
            if d <= radius {
                matches.push((j, d));
            }
        }
        let (k_after, hd, verdict) = match matches.as_slice() {
            [] => (None, None, Verdict::Unmatched),
            [(j, d)] => {
                let k = after.counts[*j].k;
                let v = if k == count.k && !after.counts[*j].unresolved {
                    Verdict::Preserved
                } else {
                    Verdict::Changed
                };
                (Some(k), Some(*d), v)
            }
            _ => (None, None, Verdict::MatchAmbiguous),
        };
        match verdict {
            Verdict::Preserved => report.preserved += 1,
            Verdict::Changed => report.changed += 1,
            Verdict::MatchAmbiguous => report.ambiguous += 1,
            Verdict::Unmatched => report.unmatched += 1,
        }
        report.verdicts.push(ComponentVerdict {
            component: i,
            anchor: comp.vertices[0],
            k_before: count.k,
            k_after,
            hausdorff: hd,
            verdict,
        });
    }
    Ok(report)
}

/// All margins above `beta` and `max(|f|, ‖∇f‖) > beta` at every vertex.
pub(crate) fn certified(c: &NodalComponent, margins: impl Iterator<Item = f64>, beta: f64) -> bool {
    let mut ok = true;
    for m in margins {
        ok &= m > beta;
    }
    ok && c
        .jets()
        .iter()
        .all(|j| j.value.abs().max(j.gradient.norm()) > beta)
}

/// `max(|ψ|, ‖∇ψ‖, |∂ᵢ∂ⱼψ|)` over a lattice covering the region.
fn c2_grid_norm(psi: &FieldRealization, region: Region) -> Result<f64> {
    let lat = Lattice::for_region(psi, region, NORM_GRID_H)?;
    let p = psi.packed();
    let e1 = Vec2::new(1.0, 0.0);
    let e2 = Vec2::new(0.0, 1.0);
    let channels = [
        Channel::value(p),
        Channel::directional(p, e1),
        Channel::directional(p, e2),
        Channel::second(p, e1, e1),
        Channel::second(p, e1, e2),
        Channel::second(p, e2, e2),
    ];
    let out = sweep(p, &lat.grid_sweep(), &channels);
    let mut m = 0.0f64;
    for idx in 0..out[0].len() {
        if out[0][idx].is_nan() {
            continue;
        }
        m = m
            .max(out[0][idx].abs())
            .max(out[1][idx].hypot(out[2][idx]))
            .max(out[3][idx].abs())
            .max(out[4][idx].abs())
            .max(out[5][idx].abs());
    }
    Ok(m)
}

/// Symmetric Hausdorff distance between two polylines, measured from the
/// vertices of each to the segments of the other.
fn hausdorff(a: &NodalComponent, b: &NodalComponent) -> f64 {
    directed(&a.vertices, &b.vertices).max(directed(&b.vertices, &a.vertices))
}

fn directed(from: &[Vec2], to: &[Vec2]) -> f64 {
    let mut worst = 0.0f64;
    for &p in from {
        let mut best = f64::INFINITY;
        if to.len() == 1 {
            best = p.dist(to[0]);
        }
        for w in to.windows(2) {
            best = best.min(geom::point_segment_distance(p, w[0], w[1]));
            if best <= worst {
                break;
            }
        }
        worst = worst.max(best);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inject_deterministic, Domain, Term};
    use crate::seed::SeedRecord;
    use crate::spectral::SpectralModel;
    use crate::tangency::DEFAULT_BETA;

    #[test]
    fn zero_perturbation_preserves_everything() {
        let f = sample_field(&SpectralModel::circle(), 128, SeedRecord::new(21, 0)).unwrap();
        let vf = VectorFieldSpec::constant(0.0);
        let r = stability_check(&f, &vf, DEFAULT_BETA, 0.0, Region::Disc { radius: 6.0 }, ExtractParams::default()).unwrap();
        assert!(r.certified > 0);
        assert_eq!(r.preserved, r.certified);
        assert_eq!(r.psi_scale, 0.0);
    }

    #[test]
    fn fixture_loop_survives_small_perturbation() {
        let f = inject_deterministic(
            vec![
                Term::new(Vec2::new(1.0, 0.0), 1.0, 0.0),
                Term::new(Vec2::new(0.0, 1.0), 1.0, 0.0),
                Term::new(Vec2::ZERO, -1.0, 0.0),
            ],
            Domain::Torus { side: 1.0 },
        )
        .unwrap();
        let psi = inject_deterministic(
            vec![
                Term::new(Vec2::new(1.0, 1.0), 0.3, -0.8),
                Term::new(Vec2::new(2.0, -1.0), -0.5, 0.2),
            ],
            Domain::Torus { side: 1.0 },
        )
        .unwrap();
        let vf = VectorFieldSpec::constant(90.0);
        let r = stability_check_with(&f, &psi, &vf, 0.3, 1e-3, Region::Torus, ExtractParams { grid_h: 0.02, tol_f: 1e-10 }).unwrap();
        assert_eq!(r.certified, 1);
        assert_eq!(r.preserved, 1);
        assert!(r.certified_bound < 1e-3);
        assert_eq!(r.verdicts[0].k_before, 2);
    }

    #[test]
    fn rejects_large_b() {
        let f = sample_field(&SpectralModel::circle(), 16, SeedRecord::new(1, 0)).unwrap();
        let vf = VectorFieldSpec::constant(0.0);
        assert!(stability_check(&f, &vf, 1e-3, 1e-3, Region::Disc { radius: 2.0 }, ExtractParams::default()).is_err());
    }
}
