//! Direction-distribution measures and the statistical checks built on them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::nodal::{Containment, NodalComponent, NodalSet, Region};
use crate::tangency::{BetaClass, CurveCount};

/// Why a component did or did not enter the measure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentFlags {
    pub boundary: bool,
    pub excised: bool,
    pub unresolved: bool,
    pub sub_beta: bool,
    pub non_contractible: bool,
}

/// Tangency count of one component with its flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentTally {
    pub k: usize,
    pub flags: ComponentFlags,
}

impl ComponentTally {
    pub fn ok(k: usize) -> Self {
        ComponentTally { k, flags: ComponentFlags::default() }
    }

    pub fn from_count(c: &NodalComponent, count: &CurveCount) -> Self {
        ComponentTally {
            k: count.k,
            flags: ComponentFlags {
                boundary: c.containment == Containment::BoundaryIntersecting,
                excised: c.excision_flag,
                unresolved: count.unresolved,
                sub_beta: count.records.iter().any(|r| r.beta_class == BetaClass::SubBeta),
                non_contractible: c.containment == Containment::NonContractible,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionLedger {
    pub boundary: u64,
    pub excised: u64,
    pub unresolved: u64,
    /// Components with a sub-β tangency that were kept in the measure.
    pub sub_beta_included_flagged: u64,
    /// Components with a sub-β tangency dropped because the caller asked to.
    pub sub_beta_excluded: u64,
    /// Torus components winding around a cycle; kept in the measure.
    pub non_contractible_included: u64,
}

impl ExclusionLedger {
    fn merge(&mut self, o: &ExclusionLedger) {
        self.boundary += o.boundary;
        self.excised += o.excised;
        self.unresolved += o.unresolved;
        self.sub_beta_included_flagged += o.sub_beta_included_flagged;
        self.sub_beta_excluded += o.sub_beta_excluded;
        self.non_contractible_included += o.non_contractible_included;
    }

    /// No component was dropped for any reason.
    pub fn is_empty(&self) -> bool {
        self.boundary == 0 && self.excised == 0 && self.unresolved == 0 && self.sub_beta_excluded == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub config_hash: String,
    pub trials: u64,
}

/// Unnormalized histogram. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<usize, u64>,
    pub ledger: ExclusionLedger,
    pub include_sub_beta: bool,
}

impl Histogram {
    pub fn new(include_sub_beta: bool) -> Self {
        Histogram { include_sub_beta, ..Default::default() }
    }

    pub fn add(&mut self, t: &ComponentTally) {
        let f = t.flags;
        let l = &mut self.ledger;
        if f.boundary {
            l.boundary += 1;
        } else if f.excised {
            l.excised += 1;
        } else if f.unresolved {
            l.unresolved += 1;
        } else if f.sub_beta && !self.include_sub_beta {
            l.sub_beta_excluded += 1;
        } else {
            if f.sub_beta {
                l.sub_beta_included_flagged += 1;
            }
            if f.non_contractible {
                l.non_contractible_included += 1;
            }
            *self.counts.entry(t.k).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&k, &n) in &other.counts {
            *self.counts.entry(k).or_default() += n;
        }
        self.ledger.merge(&other.ledger);
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn finish(&self) -> Result<DirectionDistribution> {
        let total = self.total();
        if total == 0 {
            let l = &self.ledger;
            return Err(Error::EmptyMeasure {
                ledger: format!(
                    "boundary={}, excised={}, unresolved={}, sub_beta_excluded={}",
                    l.boundary, l.excised, l.unresolved, l.sub_beta_excluded
                ),
            });
        }
        let probabilities = self
            .counts
            .iter()
            .map(|(&k, &n)| (k, n as f64 / total as f64))
            .collect();
        Ok(DirectionDistribution {
            counts: self.counts.clone(),
            total,
            probabilities,
            exclusion_ledger: self.ledger,
            provenance: None,
        })
    }
}

/// Empirical law of per-component tangency counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionDistribution {
    pub counts: BTreeMap<usize, u64>,
    pub total: u64,
    pub probabilities: BTreeMap<usize, f64>,
    pub exclusion_ledger: ExclusionLedger,
    pub provenance: Option<Provenance>,
}

pub fn direction_distribution(tallies: &[ComponentTally]) -> Result<DirectionDistribution> {
    let mut h = Histogram::new(true);
    for t in tallies {
        h.add(t);
    }
    h.finish()
}

impl DirectionDistribution {
    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn mean_k(&self) -> f64 {
        self.probabilities.iter().map(|(&k, &p)| k as f64 * p).sum()
    }

    /// Mass on `{0}` and the odd integers.
    pub fn odd_or_zero_mass(&self) -> f64 {
        self.probabilities
            .iter()
            .filter(|(&k, _)| k == 0 || k % 2 == 1)
            .map(|(_, &p)| p)
            .sum()
    }

    pub fn tv_distance(&self, other: &DirectionDistribution) -> f64 {
        tv_distance(&self.probabilities, &other.probabilities)
    }

    /// `k,count,probability` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,count,probability\n");
        for (k, n) in &self.counts {
            s.push_str(&format!("{k},{n},{}\n", self.probabilities[k]));
        }
        s
    }
}

/// Total variation distance: half the l1 distance of the probability vectors.
pub fn tv_distance(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
    let mut s = 0.0;
    for (k, &p) in a {
        s += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &q) in b {
        if !a.contains_key(k) {
            s += q;
        }
    }
    (0.5 * s).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, n_trials: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Estimate { mean, stderr, n_trials: n }
    }
}

/// What one trial contributes to the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    /// Components entering the measure, by tangency count.
    pub counts: BTreeMap<usize, u64>,
    /// All components contained in the observation window.
    pub contained: u64,
    pub area: f64,
}

impl TrialSummary {
    pub fn from_histogram(h: &Histogram, contained: u64, area: f64) -> Self {
        TrialSummary { counts: h.counts.clone(), contained, area }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    /// `C_k` as the mean over trials of the per-trial fraction with `k`
    /// tangencies. Trials with an empty measure are skipped.
    pub per_k: BTreeMap<usize, Estimate>,
    /// Components entering the measure per unit area.
    pub density_per_area: Estimate,
    /// Contained components per unit area.
    pub ns_constant_estimate: Estimate,
}

impl EstimateTable {
    pub fn sum_ck(&self) -> f64 {
        self.per_k.values().map(|e| e.mean).sum()
    }

    /// `k,mean,stderr,n_trials` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,mean,stderr,n_trials\n");
        for (k, e) in &self.per_k {
            s.push_str(&format!("{k},{},{},{}\n", e.mean, e.stderr, e.n_trials));
        }
        s
    }
}

#[allow(non_snake_case)]
pub fn estimate_Ck(trials: &[TrialSummary]) -> Result<EstimateTable> {
    if trials.len() < 2 {
        return Err(Error::arg(format!("estimate_Ck needs at least 2 trials, got {}", trials.len())));
    }
    let ks: std::collections::BTreeSet<usize> = trials.iter().flat_map(|t| t.counts.keys().copied()).collect();
    let usable: Vec<&TrialSummary> = trials.iter().filter(|t| t.counts.values().sum::<u64>() > 0).collect();
    let per_k = ks
        .into_iter()
        .map(|k| {
            let xs: Vec<f64> = usable
                .iter()
                .map(|t| t.counts.get(&k).copied().unwrap_or(0) as f64 / t.counts.values().sum::<u64>() as f64)
                .collect();
            (k, Estimate::from_samples(&xs))
        })
        .collect();
    let dens: Vec<f64> = trials.iter().map(|t| t.counts.values().sum::<u64>() as f64 / t.area).collect();
    let ns: Vec<f64> = trials.iter().map(|t| t.contained as f64 / t.area).collect();
    Ok(EstimateTable {
        per_k,
        density_per_area: Estimate::from_samples(&dens),
        ns_constant_estimate: Estimate::from_samples(&ns),
    })
}

/// Translation-average bounds on a count in `B(R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub k: Option<usize>,
    pub r: f64,
    pub big_r: f64,
    pub step: f64,
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
    /// Half-width of the interval known to contain the continuum lower integral.
    pub slack_lower: f64,
    pub slack_upper: f64,
    /// `lower <= mid <= upper` with the discretized values.
    pub holds_strict: bool,
    /// `lower - slack <= mid <= upper + slack`.
    pub holds: bool,
}

/// Compares the count of components inside `B(R)` against the averaged
/// counts over balls `B(u, r)`.
///
/// `ks[i]` is the tangency count of component `i`, or `None` when unknown
/// (boundary, unresolved). Unknown components are left out of the lower
/// bound and the middle count and match every `k` in the upper bound. When
/// `k` is `None` all components are counted regardless of tangencies.
///
/// The upper integrand counts components whose convex hull meets `B(u, r)`,
/// a superset of those whose curve does. Each center stands for a square of
/// side `step`; squares where the indicator may change inside are tallied into
/// the slack.
pub fn sandwich_check(
    set: &NodalSet,
    ks: &[Option<usize>],
    k: Option<usize>,
    r: f64,
    big_r: f64,
    step: Option<f64>,
) -> Result<SandwichReport> {
    if !(r > 0.0 && r < big_r) {
        return Err(Error::arg(format!("sandwich needs 0 < r < R, got r = {r}, R = {big_r}")));
    }
    if ks.len() != set.components.len() {
        return Err(Error::arg("one tangency count per component required"));
    }
    match set.region {
        Region::Disc { radius } if radius >= big_r + 2.0 * r - 1e-9 => {}
        _ => return Err(Error::arg(format!("sandwich needs components extracted on a disc of radius >= R + 2r = {}", big_r + 2.0 * r))),
    }
    let delta = step.unwrap_or(r / 10.0);
    if !(delta > 0.0 && delta <= r / 10.0 * (1.0 + 1e-12)) {
        return Err(Error::arg(format!("center grid step must be in (0, r/10], got {delta}")));
    }
    // a cell's indicator is decided at its center up to this distance, plus
    // the chord-to-curve error of the polyline
    let fuzz = delta * std::f64::consts::FRAC_1_SQRT_2 + set.params.grid_h;
    let ball = PI * r * r;
    let cell = delta * delta;

    let (mut lo_in, mut lo_amb, mut up_in, mut up_amb) = (0u64, 0u64, 0u64, 0u64);
    let mut mid = 0u64;
    for (c, kc) in set.components.iter().zip(ks) {
        let hull = geom::convex_hull(&c.vertices);
        if hull.is_empty() {
            continue;
        }
        let (blo, bhi) = geom::bbox(&hull);
        let matches = match (k, kc) {
            (None, _) => true,
            (Some(k), Some(kc)) => k == *kc,
            (Some(_), None) => false,
        };
        let known = kc.is_some() || (k.is_none() && c.containment == Containment::Contained);
        if matches && known {
            if hull.iter().all(|v| v.norm() <= big_r) {
                mid += 1;
            }
            // u with every hull vertex inside B(u, r)
            for u in centers(bhi - Vec2::new(r, r), blo + Vec2::new(r, r), delta) {
                let far = hull.iter().map(|v| v.dist(u)).fold(0.0, f64::max);
                let n = u.norm();
                if far > r + fuzz || n > big_r - r + fuzz {
                    continue;
                }
                if far <= r - fuzz && n <= big_r - r - fuzz {
                    lo_in += 1;
                } else {
                    lo_amb += 1;
                }
            }
        }
        if matches || kc.is_none() {
            // u with B(u, r) meeting the hull
            for u in centers(blo - Vec2::new(r, r), bhi + Vec2::new(r, r), delta) {
                let d = polygon_distance(u, &hull);
                let n = u.norm();
                if d > r + fuzz || n > big_r + r + fuzz {
                    continue;
                }
                if d <= r - fuzz && n <= big_r + r - fuzz {
                    up_in += 1;
                } else {
                    up_amb += 1;
                }
            }
        }
    }
    let lower = cell * (lo_in as f64 + 0.5 * lo_amb as f64) / ball;
    let upper = cell * (up_in as f64 + 0.5 * up_amb as f64) / ball;
    let slack_lower = 0.5 * cell * lo_amb as f64 / ball;
    let slack_upper = 0.5 * cell * up_amb as f64 / ball;
    let mid = mid as f64;
    Ok(SandwichReport {
        k,
        r,
        big_r,
        step: delta,
        lower,
        mid,
        upper,
        slack_lower,
        slack_upper,
        holds_strict: lower <= mid && mid <= upper,
        holds: lower - slack_lower <= mid && mid <= upper + slack_upper,
    })
}

/// Grid points `δ·(i, j)` in the box `[lo, hi]`.
fn centers(lo: Vec2, hi: Vec2, delta: f64) -> impl Iterator<Item = Vec2> {
    let (i0, i1) = ((lo.x / delta).ceil() as i64, (hi.x / delta).floor() as i64);
    let (j0, j1) = ((lo.y / delta).ceil() as i64, (hi.y / delta).floor() as i64);
    (j0..=j1).flat_map(move |j| (i0..=i1).map(move |i| Vec2::new(i as f64 * delta, j as f64 * delta)))
}

/// Distance from `p` to a convex polygon given counter-clockwise (0 inside).
fn polygon_distance(p: Vec2, hull: &[Vec2]) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => p.dist(hull[0]),
        2 => geom::point_segment_distance(p, hull[0], hull[1]),
        n => {
            let mut inside = true;
            let mut d = f64::INFINITY;
            for i in 0..n {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                if (b - a).cross(p - a) < 0.0 {
                    inside = false;
                }
                d = d.min(geom::point_segment_distance(p, a, b));
            }
            if inside {
                0.0
            } else {
                d
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TangencySumReport {
    /// `Σ k · N(k)` over contained components.
    pub lhs: usize,
    /// All joint zeros of `(f, Vf)` in the window.
    pub rhs: usize,
    pub holds: bool,
    /// Whether no root in the window lies off the contained components, so
    /// that equality is expected.
    pub equality_expected: bool,
    pub equal: bool,
}

pub fn tangency_sum_check(contained_ks: impl IntoIterator<Item = usize>, joint_zeros: usize, equality_expected: bool) -> TangencySumReport {
    let lhs: usize = contained_ks.into_iter().sum();
    TangencySumReport {
        lhs,
        rhs: joint_zeros,
        holds: lhs <= joint_zeros && (!equality_expected || lhs == joint_zeros),
        equality_expected,
        equal: lhs == joint_zeros,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub spatial_density: f64,
    pub ensemble_density: Estimate,
    pub relative_gap: f64,
}

/// Spatial average of a count over one large disc against the ensemble
/// average over small discs, both per unit area.
pub fn ergodic_check(big_count: u64, big_radius: f64, small_counts: &[u64], small_radius: f64) -> Result<ErgodicReport> {
    if !(big_radius >= 2.0 * small_radius && small_radius > 0.0) {
        return Err(Error::arg(format!(
            "ergodic check needs R_big >= 2 R_small, got {big_radius} and {small_radius}"
        )));
    }
    if small_counts.is_empty() {
        return Err(Error::arg("ergodic check needs at least one small sample"));
    }
    let spatial = big_count as f64 / (PI * big_radius * big_radius);
    let dens: Vec<f64> = small_counts.iter().map(|&n| n as f64 / (PI * small_radius * small_radius)).collect();
    let ens = Estimate::from_samples(&dens);
    let gap = if spatial == 0.0 && ens.mean == 0.0 {
        0.0
    } else {
        (spatial - ens.mean).abs() / spatial.max(ens.mean)
    };
    Ok(ErgodicReport { spatial_density: spatial, ensemble_density: ens, relative_gap: gap })
}

/// `|b - a| / a`, the change of a mean tangency count across two radii.
pub fn relative_change(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inject_deterministic, Domain, Term};
    use crate::nodal::{extract_nodal_set, ExtractParams};
    use proptest::prelude::*;

    fn flagged(k: usize, f: impl FnOnce(&mut ComponentFlags)) -> ComponentTally {
        let mut t = ComponentTally::ok(k);
        f(&mut t.flags);
        t
    }

    #[test]
    fn histogram_examples() {
        let d = direction_distribution(&[ComponentTally::ok(2), ComponentTally::ok(2), ComponentTally::ok(4)]).unwrap();
        assert!((d.probabilities[&2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probabilities[&4] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.total, 3);

        let d = direction_distribution(&[ComponentTally::ok(2), flagged(3, |f| f.excised = true)]).unwrap();
        assert_eq!(d.probabilities.len(), 1);
        assert_eq!(d.probabilities[&2], 1.0);
        assert_eq!(d.exclusion_ledger.excised, 1);

        assert!(matches!(direction_distribution(&[]), Err(Error::EmptyMeasure { .. })));
        assert!(direction_distribution(&[flagged(2, |f| f.boundary = true)]).is_err());
    }

    #[test]
    fn sub_beta_policy() {
        let ts = [ComponentTally::ok(2), flagged(4, |f| f.sub_beta = true)];
        let mut keep = Histogram::new(true);
        let mut drop = Histogram::new(false);
        for t in &ts {
            keep.add(t);
            drop.add(t);
        }
        assert_eq!(keep.total(), 2);
        assert_eq!(keep.ledger.sub_beta_included_flagged, 1);
        assert_eq!(drop.total(), 1);
        assert_eq!(drop.ledger.sub_beta_excluded, 1);
    }

    #[test]
    fn tv_examples() {
        let m = |v: &[(usize, f64)]| v.iter().copied().collect::<BTreeMap<_, _>>();
        assert_eq!(tv_distance(&m(&[(2, 0.5), (4, 0.5)]), &m(&[(2, 0.5), (4, 0.5)])), 0.0);
        assert_eq!(tv_distance(&m(&[(2, 1.0)]), &m(&[(4, 1.0)])), 1.0);
        assert_eq!(tv_distance(&m(&[(2, 0.5), (4, 0.5)]), &m(&[(2, 1.0)])), 0.5);
    }

    #[test]
    fn estimate_examples() {
        let t = TrialSummary { counts: [(2, 10)].into_iter().collect(), contained: 10, area: 4.0 };
        let e = estimate_Ck(&[t.clone(), t.clone()]).unwrap();
        assert_eq!(e.per_k[&2].mean, 1.0);
        assert_eq!(e.per_k[&2].stderr, 0.0);
        assert_eq!(e.ns_constant_estimate.mean, 2.5);
        assert!(estimate_Ck(&[t]).is_err());

        let a = TrialSummary { counts: [(2, 3), (4, 1)].into_iter().collect(), contained: 5, area: 1.0 };
        let b = TrialSummary { counts: [(2, 1), (6, 1)].into_iter().collect(), contained: 2, area: 1.0 };
        let e = estimate_Ck(&[a, b]).unwrap();
        assert!((e.sum_ck() - 1.0).abs() < 1e-15);
        assert!((e.per_k[&2].mean - 0.625).abs() < 1e-15);
    }

    #[test]
    fn sum_check_examples() {
        let r = tangency_sum_check([], 0, true);
        assert!(r.holds && r.equal);
        let r = tangency_sum_check([2], 2, true);
        assert!(r.holds && r.equal);
        let r = tangency_sum_check([2, 4], 9, false);
        assert!(r.holds && !r.equal);
        assert!(!tangency_sum_check([2, 4], 5, false).holds);
    }

    #[test]
    fn ergodic_on_periodic_fixture() {
        // a count that is exactly proportional to area
        let big = 4.0f64;
        let density = 0.25;
        let bc = (density * PI * big * big).round() as u64;
        let r = ergodic_check(bc, big, &[(density * PI * 4.0) as u64], 2.0).unwrap();
        assert!(r.spatial_density > 0.0);
        assert!(ergodic_check(0, 10.0, &[0, 0], 3.0).unwrap().relative_gap == 0.0);
        assert!(ergodic_check(1, 5.0, &[1], 3.0).is_err());
    }

    fn small_loop() -> crate::field::FieldRealization {
        // a near-circular loop of radius ~0.3 around the origin; the next
        // copies sit at distance 10
        inject_deterministic(
            vec![
                Term::new(Vec2::new(0.1, 0.0), 1.0, 0.0),
                Term::new(Vec2::new(0.0, 0.1), 1.0, 0.0),
                Term::new(Vec2::ZERO, -1.9822, 0.0),
            ],
            Domain::Plane,
        )
        .unwrap()
    }

    #[test]
    fn sandwich_single_loop_and_empty() {
        let f = small_loop();
        let (r, big_r) = (1.0, 3.0);
        let set = extract_nodal_set(&f, Region::Disc { radius: big_r + 2.0 * r }, ExtractParams { grid_h: 0.02, tol_f: 1e-10 }).unwrap();
        assert_eq!(set.components.len(), 1);
        let c = &set.components[0];
        let a = c.vertices.iter().map(|v| v.norm()).sum::<f64>() / c.len() as f64;
        assert!(c.vertices.iter().all(|v| (v.norm() - a).abs() < 1e-3 * a));
        let ks: Vec<Option<usize>> = set
            .components
            .iter()
            .map(|c| (c.containment == Containment::Contained).then_some(2))
            .collect();
        let s = sandwich_check(&set, &ks, Some(2), r, big_r, None).unwrap();
        assert_eq!(s.mid, 1.0);
        assert!(s.holds, "{s:?}");
        // centers u with the circle inside B(u, r), resp. meeting it, form
        // discs of radius r - a and r + a
        assert!((s.lower - (r - a).powi(2) / (r * r)).abs() <= s.slack_lower + 1e-2, "{s:?}");
        assert!((s.upper - (r + a).powi(2) / (r * r)).abs() <= s.slack_upper + 1e-2, "{s:?}");

        let s = sandwich_check(&set, &ks, Some(4), r, big_r, None).unwrap();
        assert_eq!((s.lower, s.mid), (0.0, 0.0));
        assert!(s.holds);
        assert!(sandwich_check(&set, &ks, None, 3.0, 3.0, None).is_err());
        assert!(sandwich_check(&set, &ks, None, r, big_r, Some(0.2)).is_err());
    }

    fn measure() -> impl Strategy<Value = BTreeMap<usize, f64>> {
        prop::collection::vec(0.0f64..1.0, 1..8).prop_map(|w| {
            let s: f64 = w.iter().sum::<f64>() + 1e-9;
            w.iter().enumerate().map(|(k, x)| (k, x / s)).collect()
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(a in measure(), b in measure(), c in measure()) {
            let (ab, ba) = (tv_distance(&a, &b), tv_distance(&b, &a));
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 0.0 && ab <= 1.0);
            prop_assert!(tv_distance(&a, &a) == 0.0);
            prop_assert!(tv_distance(&a, &c) <= ab + tv_distance(&b, &c) + 1e-12);
        }

        #[test]
        fn merge_is_order_free(ks in prop::collection::vec((0usize..12, 0u8..8), 1..200)) {
            let tallies: Vec<ComponentTally> = ks.iter().map(|&(k, bits)| flagged(k, |f| {
                f.boundary = bits & 1 != 0 && bits & 4 == 0;
                f.sub_beta = bits & 2 != 0;
            })).collect();
            let mut whole = Histogram::new(true);
            tallies.iter().for_each(|t| whole.add(t));
            let mid = tallies.len() / 2;
            let (mut a, mut b) = (Histogram::new(true), Histogram::new(true));
            tallies[..mid].iter().for_each(|t| a.add(t));
            tallies[mid..].iter().for_each(|t| b.add(t));
            let mut ba = b.clone();
            ba.merge(&a);
            a.merge(&b);
            prop_assert_eq!(&a, &whole);
            prop_assert_eq!(&ba, &whole);
            if let Ok(d) = whole.finish() {
                let s: f64 = d.probabilities.values().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert_eq!(d.total, d.counts.values().sum::<u64>());
            }
        }
    }
}
