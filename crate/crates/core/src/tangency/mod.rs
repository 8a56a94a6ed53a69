//! Tangencies of nodal curves to vector fields.
//!
//! A tangency of a nodal component to `V` is a joint zero of `f` and
//! `Vf = a₁∂₁f + a₂∂₂f`. Two independent counters are provided: tracing the
//! sign of `Vf` along each component (Method A) and intersecting the nodal
//! set with the zero set of `Vf` (Method B).

mod owner;
mod stability;

pub use stability::{stability_check, ComponentVerdict, StabilityReport, Verdict};

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::kernel::{sweep, Channel, GridSweep};
use crate::field::{FieldRealization, Jet};
use crate::geom::{self, Vec2};
use crate::nodal::{self, cell_segments, Containment, ExtractParams, NodalComponent, NodalSet, Region};

pub const DEFAULT_BETA: f64 = 1e-3;
pub const DEFAULT_RHO: f64 = 0.05;
const MAX_ITERS: usize = 60;
/// Cells crossed by both `{f = 0}` and `{Vf = 0}` are resampled on a
/// `SUBDIVISION × SUBDIVISION` grid before the polylines are intersected.
const SUBDIVISION: usize = 4;
/// Extra rim of sub-cells around a resampled cell, catching short excursions
/// of either curve into the neighbouring cells.
const WINDOW_MARGIN: usize = 1;
/// Finest resampling tried before a window with an unexplained sign change
/// of `Vf` is declared unresolved.
const MAX_SUBDIVISION: usize = 64;
/// Largest distance, in grid steps, between a root and its owner's polyline.
const OWNER_GAP: f64 = 0.25;

/// `c·cos(2π(p x + q y)/side) + s·sin(2π(p x + q y)/side)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigCoeff {
    pub p: i32,
    pub q: i32,
    pub c: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum VfKind {
    Constant { zeta: Vec2 },
    TorusTrig { side: f64, a1: Vec<TrigCoeff>, a2: Vec<TrigCoeff> },
}

/// A vector field together with its zeros and the excision radius around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldSpec {
    pub kind: VfKind,
    pub zeros: Vec<Vec2>,
    pub rho: f64,
}

/// Index audit of the zeros of a torus field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroAudit {
    pub indices: Vec<i64>,
    pub index_sum: i64,
}

/// `Vf`, its gradient, and `V` itself at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VfEval {
    pub vf: f64,
    pub grad: Vec2,
    pub v: Vec2,
}

impl VectorFieldSpec {
    /// Constant field `ζ` at `angle_deg` from the x-axis.
    pub fn constant(angle_deg: f64) -> Self {
        VectorFieldSpec {
            kind: VfKind::Constant {
                zeta: Vec2::from_angle_deg(angle_deg),
            },
            zeros: Vec::new(),
            rho: 0.0,
        }
    }

    pub fn constant_vec(zeta: Vec2) -> Result<Self> {
        if (zeta.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::arg("constant vector field must have unit length"));
        }
        Ok(VectorFieldSpec {
            kind: VfKind::Constant { zeta },
            zeros: Vec::new(),
            rho: 0.0,
        })
    }

    /// A trigonometric vector field on the torus of the given side; zeros are
    /// located by Newton from a grid scan and audited by their indices.
    pub fn torus_trig(side: f64, a1: Vec<TrigCoeff>, a2: Vec<TrigCoeff>, rho: f64) -> Result<Self> {
        if !(side > 0.0) || !(rho >= 0.0) {
            return Err(Error::arg("torus field needs side > 0 and rho >= 0"));
        }
        let mut vf = VectorFieldSpec {
            kind: VfKind::TorusTrig { side, a1, a2 },
            zeros: Vec::new(),
            rho,
        };
        vf.zeros = vf.find_zeros()?;
        let audit = vf.audit_zeros();
        if audit.index_sum != 0 || audit.indices.contains(&0) {
            return Err(Error::ContractViolation(format!(
                "zero audit failed: indices {:?}",
                audit.indices
            )));
        }
        Ok(vf)
    }

    /// `(sin 2πx/s, sin 2πy/s)`, zeros at `{0, s/2}²`.
    pub fn sin_sin(side: f64, rho: f64) -> Result<Self> {
        VectorFieldSpec::torus_trig(
            side,
            vec![TrigCoeff { p: 1, q: 0, c: 0.0, s: 1.0 }],
            vec![TrigCoeff { p: 0, q: 1, c: 0.0, s: 1.0 }],
            rho,
        )
    }

    /// Gradient of the Morse function `cos 2πx/s + ½ cos 2πy/s + ¼ sin 2π(x+y)/s`.
    pub fn morse_gradient(side: f64, rho: f64) -> Result<Self> {
        let k = TAU / side;
        // ∂x: -k sin(2πx/s) + ¼ k cos(2π(x+y)/s); ∂y: -½ k sin(2πy/s) + ¼ k cos(2π(x+y)/s)
        VectorFieldSpec::torus_trig(
            side,
            vec![
                TrigCoeff { p: 1, q: 0, c: 0.0, s: -k },
                TrigCoeff { p: 1, q: 1, c: 0.25 * k, s: 0.0 },
            ],
            vec![
                TrigCoeff { p: 0, q: 1, c: 0.0, s: -0.5 * k },
                TrigCoeff { p: 1, q: 1, c: 0.25 * k, s: 0.0 },
            ],
            rho,
        )
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, VfKind::Constant { .. })
    }

    /// Period of the field, if any.
    pub fn side(&self) -> Option<f64> {
        match self.kind {
            VfKind::TorusTrig { side, .. } => Some(side),
            VfKind::Constant { .. } => None,
        }
    }

    /// `V(x)` and its Jacobian `J[k] = ∇a_k`.
    pub fn value_jac(&self, x: Vec2) -> (Vec2, [Vec2; 2]) {
        match &self.kind {
            VfKind::Constant { zeta } => (*zeta, [Vec2::ZERO; 2]),
            VfKind::TorusTrig { side, a1, a2 } => {
                let e1 = trig_eval(a1, *side, x);
                let e2 = trig_eval(a2, *side, x);
                (Vec2::new(e1.0, e2.0), [e1.1, e2.1])
            }
        }
    }

    pub fn value(&self, x: Vec2) -> Vec2 {
        self.value_jac(x).0
    }

    /// `Vf` and `∇(Vf) = Σ_k (∇a_k) ∂_k f + Hess f · V` from a jet of `f`.
    #[inline]
    pub fn apply(&self, x: Vec2, jet: &Jet) -> VfEval {
        let (v, jac) = self.value_jac(x);
        let g = jet.gradient;
        let hv = jet.hessian.apply(v);
        VfEval {
            vf: v.dot(g),
            grad: jac[0] * g.x + jac[1] * g.y + hv,
            v,
        }
    }

    /// Upper bound of `|V|` over the plane.
    pub fn sup_norm(&self) -> f64 {
        match &self.kind {
            VfKind::Constant { .. } => 1.0,
            VfKind::TorusTrig { a1, a2, .. } => {
                let b = |t: &[TrigCoeff]| t.iter().map(|c| c.c.abs() + c.s.abs()).sum::<f64>();
                b(a1).hypot(b(a2))
            }
        }
    }

    fn find_zeros(&self) -> Result<Vec<Vec2>> {
        let side = self.side().expect("torus field");
        let n = ((side / 0.02).ceil() as usize).max(64);
        let h = side / n as f64;
        let mag: Vec<f64> = (0..n * n)
            .map(|k| self.value(Vec2::new((k % n) as f64 * h, (k / n) as f64 * h)).norm_sq())
            .collect();
        let scale = mag.iter().cloned().fold(0.0, f64::max).sqrt().max(1e-300);
        let mut zeros: Vec<Vec2> = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let m = mag[j * n + i];
                let mut is_min = true;
                'nb: for dj in [n - 1, 0, 1] {
                    for di in [n - 1, 0, 1] {
                        if (di, dj) != (0, 0) && mag[((j + dj) % n) * n + (i + di) % n] < m {
                            is_min = false;
                            break 'nb;
                        }
                    }
                }
                if !is_min {
                    continue;
                }
                let mut x = Vec2::new(i as f64 * h, j as f64 * h);
                let mut converged = false;
                for _ in 0..MAX_ITERS {
                    let (v, jac) = self.value_jac(x);
                    if v.norm() <= 1e-13 * scale {
                        converged = true;
                        break;
                    }
                    let det = jac[0].x * jac[1].y - jac[0].y * jac[1].x;
                    if det.abs() < 1e-300 {
                        break;
                    }
                    let dx = (jac[1].y * v.x - jac[0].y * v.y) / det;
                    let dy = (-jac[1].x * v.x + jac[0].x * v.y) / det;
                    x = x - Vec2::new(dx, dy);
                }
                if !converged {
                    continue;
                }
                let z = Vec2::new(x.x.rem_euclid(side), x.y.rem_euclid(side));
                let z = Vec2::new(
                    if side - z.x < 1e-9 { 0.0 } else { z.x },
                    if side - z.y < 1e-9 { 0.0 } else { z.y },
                );
                if !zeros.iter().any(|w| torus_dist(*w, z, side) < 1e-7) {
                    zeros.push(z);
                }
            }
        }
        zeros.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        Ok(zeros)
    }

    /// Index of every zero from the winding of `V` on a small circle; the
    /// indices of a field on the torus must sum to zero.
    pub fn audit_zeros(&self) -> ZeroAudit {
        let side = self.side().unwrap_or(1.0);
        let mut sep = side;
        for (i, a) in self.zeros.iter().enumerate() {
            for b in &self.zeros[i + 1..] {
                sep = sep.min(torus_dist(*a, *b, side));
            }
        }
        let r = 0.1 * sep;
        let indices: Vec<i64> = self
            .zeros
            .iter()
            .map(|&z| {
                let m = 256;
                let mut total = 0.0;
                let mut prev = self.value(z + Vec2::new(r, 0.0));
                for k in 1..=m {
                    let p = z + Vec2::from_angle_deg(360.0 * k as f64 / m as f64) * r;
                    let v = self.value(p);
                    total += prev.cross(v).atan2(prev.dot(v));
                    prev = v;
                }
                (total / TAU).round() as i64
            })
            .collect();
        ZeroAudit {
            index_sum: indices.iter().sum(),
            indices,
        }
    }
}

fn trig_eval(t: &[TrigCoeff], side: f64, x: Vec2) -> (f64, Vec2) {
    let mut v = 0.0;
    let mut g = Vec2::ZERO;
    for c in t {
        let k = Vec2::new(c.p as f64 / side, c.q as f64 / side);
        let (s, co) = crate::field::sincos_turns(k.dot(x));
        v += c.c * co + c.s * s;
        g += k * (TAU * (-c.c * s + c.s * co));
    }
    (v, g)
}

fn torus_dist(a: Vec2, b: Vec2, side: f64) -> f64 {
    let d = a - b;
    let w = |t: f64| t - side * (t / side).round();
    Vec2::new(w(d.x), w(d.y)).norm()
}

/// `Vf`, `∇(Vf)` and `V` for a realization at `x`.
pub fn eval_vf(vf: &VectorFieldSpec, f: &FieldRealization, x: Vec2) -> VfEval {
    vf.apply(x, &f.eval(x))
}

/// `|det[∇f, ∇Vf]| / (‖∇f‖ ‖∇Vf‖)`, or `None` when either gradient vanishes.
pub fn margin(grad_f: Vec2, grad_vf: Vec2) -> Option<f64> {
    let n = grad_f.norm() * grad_vf.norm();
    if !(n > 0.0) || !n.is_finite() {
        return None;
    }
    Some((grad_f.cross(grad_vf).abs() / n).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaClass {
    Transverse,
    SubBeta,
}

/// One joint zero of `(f, Vf)` on a component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyRecord {
    pub location: Vec2,
    pub margin: f64,
    pub beta_class: BetaClass,
    pub method_agreement: bool,
}

impl TangencyRecord {
    fn new(location: Vec2, margin: f64, beta: f64) -> Self {
        TangencyRecord {
            location,
            margin,
            beta_class: if margin > beta { BetaClass::Transverse } else { BetaClass::SubBeta },
            method_agreement: true,
        }
    }
}

/// Absolute residual tolerances for `f` and `Vf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub f_abs: f64,
    pub vf_abs: f64,
}

impl Tolerances {
    /// `tol_f` relative to the grid scale of `f`, and to the bound
    /// `scale · 2π · max|k| · sup|V|` for `Vf`.
    pub fn new(set: &NodalSet, f: &FieldRealization, vf: &VectorFieldSpec) -> Self {
        let f_abs = set.abs_tol();
        let vf_scale = set.field_scale * TAU * f.max_frequency().max(1e-300) * vf.sup_norm();
        Tolerances {
            f_abs,
            vf_abs: set.params.tol_f * vf_scale,
        }
    }
}

/// Tangency count of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCount {
    pub k: usize,
    pub records: Vec<TangencyRecord>,
    /// Root finding did not converge, or a root had a vanishing gradient.
    pub unresolved: bool,
}

impl CurveCount {
    pub fn min_margin(&self) -> f64 {
        self.records.iter().map(|r| r.margin).fold(1.0, f64::min)
    }

    pub fn all_transverse(&self) -> bool {
        self.records.iter().all(|r| r.beta_class == BetaClass::Transverse)
    }

    fn from_roots(roots: Vec<(Vec2, Option<f64>)>, unresolved: bool, beta: f64) -> Self {
        let mut degenerate = false;
        let records: Vec<TangencyRecord> = roots
            .into_iter()
            .filter_map(|(x, m)| match m {
                Some(m) => Some(TangencyRecord::new(x, m, beta)),
                None => {
                    degenerate = true;
                    None
                }
            })
            .collect();
        CurveCount {
            k: records.len(),
            records,
            unresolved: unresolved || degenerate,
        }
    }
}

/// Projects `x` onto `{f = 0}` along the gradient.
fn project(f: &FieldRealization, mut x: Vec2, tol: f64) -> Option<Vec2> {
    for _ in 0..20 {
        let (v, g) = f.value_grad(x);
        if v.abs() <= tol {
            return Some(x);
        }
        let n2 = g.norm_sq();
        if n2 == 0.0 {
            return None;
        }
        x = x - g * (v / n2);
    }
    None
}

/// Method A: sign changes of `Vf` along the component, each located by
/// regula falsi over points projected back onto the nodal line.
///
/// Pairs of roots hidden inside one segment are detected from a cubic Hermite
/// model of `Vf` built from its values and slopes at the two vertices.
pub fn count_tangencies_on_curve(
    c: &NodalComponent,
    vf: &VectorFieldSpec,
    f: &FieldRealization,
    beta: f64,
    tol: Tolerances,
) -> CurveCount {
    let jets: Vec<Jet> = if c.jets().len() == c.len() {
        c.jets().to_vec()
    } else {
        c.vertices.iter().map(|&x| f.eval(x)).collect()
    };
    let evals: Vec<VfEval> = c
        .vertices
        .iter()
        .zip(&jets)
        .map(|(&x, j)| vf.apply(x, j))
        .collect();
    let mut roots = Vec::new();
    let mut unresolved = false;
    let g_at = |x: Vec2| -> Option<(Vec2, Jet, VfEval)> {
        let p = project(f, x, tol.f_abs)?;
        let j = f.eval(p);
        Some((p, j, vf.apply(p, &j)))
    };
    for i in 0..c.len().saturating_sub(1) {
        let (p0, p1) = (c.vertices[i], c.vertices[i + 1]);
        let chord = p1 - p0;
        let (g0, g1) = (evals[i].vf, evals[i + 1].vf);
        let mut brackets: Vec<(f64, f64, f64, f64)> = Vec::new();
        if (g0 >= 0.0) != (g1 >= 0.0) {
            brackets.push((0.0, 1.0, g0, g1));
        } else {
            let d0 = evals[i].grad.dot(chord);
            let d1 = evals[i + 1].grad.dot(chord);
            for t in hermite_critical_points(g0, g1, d0, d1) {
                if (hermite(g0, g1, d0, d1, t) >= 0.0) == (g0 >= 0.0) {
                    continue;
                }
                match g_at(p0 + chord * t) {
                    Some((_, _, e)) if (e.vf >= 0.0) != (g0 >= 0.0) => {
                        brackets.push((0.0, t, g0, e.vf));
                        brackets.push((t, 1.0, e.vf, g1));
                        break;
                    }
                    Some(_) => {}
                    None => unresolved = true,
                }
            }
        }
        for (ta, tb, ga, gb) in brackets {
            match locate(&g_at, p0, chord, ta, tb, ga, gb, tol.vf_abs) {
                Some((x, j, e)) => roots.push((x, margin(j.gradient, e.grad))),
                None => unresolved = true,
            }
        }
    }
    CurveCount::from_roots(roots, unresolved, beta)
}

fn hermite(g0: f64, g1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * g0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * g1 + (t3 - t2) * d1
}

fn hermite_critical_points(g0: f64, g1: f64, d0: f64, d1: f64) -> Vec<f64> {
    // H'(t) = a t² + b t + c
    let a = 6.0 * g0 + 3.0 * d0 - 6.0 * g1 + 3.0 * d1;
    let b = -6.0 * g0 - 4.0 * d0 + 6.0 * g1 - 2.0 * d1;
    let c = d0;
    let mut out = Vec::new();
    if a.abs() < 1e-300 {
        if b != 0.0 {
            out.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            out.push((-b - s) / (2.0 * a));
            out.push((-b + s) / (2.0 * a));
        }
    }
    out.retain(|t| *t > 0.0 && *t < 1.0);
    out
}

#[allow(clippy::too_many_arguments)]
fn locate(
    g_at: &impl Fn(Vec2) -> Option<(Vec2, Jet, VfEval)>,
    p0: Vec2,
    chord: Vec2,
    mut ta: f64,
    mut tb: f64,
    mut ga: f64,
    mut gb: f64,
    tol: f64,
) -> Option<(Vec2, Jet, VfEval)> {
    let neg_a = ga < 0.0;
    let mut side = 0i8;
    let mut best = None;
    for _ in 0..MAX_ITERS {
        let mut t = (ta * gb - tb * ga) / (gb - ga);
        if !(t > ta && t < tb) {
            t = 0.5 * (ta + tb);
        }
        let (x, j, e) = g_at(p0 + chord * t)?;
        if e.vf.abs() <= tol {
            return Some((x, j, e));
        }
        best = Some((x, j, e));
        if (e.vf < 0.0) == neg_a {
            ta = t;
            ga = e.vf;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            tb = t;
            gb = e.vf;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if tb - ta <= 1e-15 {
            // bracket exhausted at machine precision: accept if the pair polish agrees
            return best.and_then(|(x, _, _)| polish(g_at, x, tol));
        }
    }
    let _ = best;
    None
}

fn polish(
    g_at: &impl Fn(Vec2) -> Option<(Vec2, Jet, VfEval)>,
    x: Vec2,
    tol: f64,
) -> Option<(Vec2, Jet, VfEval)> {
    let r = g_at(x)?;
    (r.2.vf.abs() <= 8.0 * tol).then_some(r)
}

/// Newton on the pair `(f, Vf)`.
fn newton_pair(f: &FieldRealization, vf: &VectorFieldSpec, mut x: Vec2, tol: Tolerances) -> Option<(Vec2, Jet, VfEval)> {
    for _ in 0..MAX_ITERS {
        let j = f.eval(x);
        let e = vf.apply(x, &j);
        if j.value.abs() <= tol.f_abs && e.vf.abs() <= tol.vf_abs {
            return Some((x, j, e));
        }
        let (a, b) = (j.gradient, e.grad);
        let det = a.cross(b);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dx = (j.value * b.y - e.vf * a.y) / det;
        let dy = (a.x * e.vf - b.x * j.value) / det;
        let step = Vec2::new(dx, dy);
        if !step.is_finite() {
            return None;
        }
        x = x - step;
    }
    None
}

/// Linear-interpolation crossing on local edge `e` of a cell with corners `p`.
fn edge_point(p: &[Vec2; 4], v: &[f64; 4], e: u8) -> Vec2 {
    let (a, b) = match e {
        0 => (0, 1),
        1 => (1, 2),
        2 => (3, 2),
        _ => (0, 3),
    };
    let t = v[a] / (v[a] - v[b]);
    p[a] + (p[b] - p[a]) * t
}

struct Window {
    roots: Vec<(Vec2, Option<f64>)>,
    /// Projections onto `{f = 0}` of crossings where Newton failed.
    failed: Vec<Vec2>,
}

/// Intersects the piecewise-linear curves `{f = 0}` and `{Vf = 0}` on a
/// window of `sub × sub` sub-cells around `cell`, plus a rim.
#[allow(clippy::too_many_arguments)]
fn scan_window(
    f: &FieldRealization,
    vf: &VectorFieldSpec,
    lat: &nodal::Lattice,
    packed: &crate::field::Packed,
    channels: &[Channel],
    cell: usize,
    sub: usize,
    tol: Tolerances,
) -> Window {
    let rim = WINDOW_MARGIN * sub / SUBDIVISION;
    let n = sub + 2 * rim + 1;
    let hs = lat.h / sub as f64;
    let (ci0, cj0) = lat.cell_ij(cell);
    let base = lat.point(ci0, cj0) - Vec2::new(rim as f64 * hs, rim as f64 * hs);
    let out = sweep(packed, &GridSweep { origin: base, h: hs, nx: n, ny: n, rows: None }, channels);
    let at = |a: usize, b: usize| base + Vec2::new(a as f64 * hs, b as f64 * hs);
    let fv = &out[0];
    let vv: Vec<f64> = match &vf.kind {
        VfKind::Constant { .. } => out[1].clone(),
        VfKind::TorusTrig { .. } => (0..n * n)
            .map(|idx| {
                let v = vf.value(at(idx % n, idx / n));
                v.x * out[1][idx] + v.y * out[2][idx]
            })
            .collect(),
    };
    let mut w = Window { roots: Vec::new(), failed: Vec::new() };
    for b in 0..n - 1 {
        for a in 0..n - 1 {
            let p = [at(a, b), at(a + 1, b), at(a + 1, b + 1), at(a, b + 1)];
            let ids = [b * n + a, b * n + a + 1, (b + 1) * n + a + 1, (b + 1) * n + a];
            let sub_center = base + Vec2::new((a as f64 + 0.5) * hs, (b as f64 + 0.5) * hs);
            let fq = ids.map(|i| fv[i]);
            let (fp, fnum) = cell_segments(fq, || nodal::saddle_value(f, p[0], hs));
            if fnum == 0 {
                continue;
            }
            let vq = ids.map(|i| vv[i]);
            let (vp, vnum) = cell_segments(vq, || eval_vf(vf, f, sub_center).vf);
            if vnum == 0 {
                continue;
            }
            for &(fa, fb) in &fp[..fnum] {
                let (a0, a1) = (edge_point(&p, &fq, fa), edge_point(&p, &fq, fb));
                for &(va, vb) in &vp[..vnum] {
                    let (b0, b1) = (edge_point(&p, &vq, va), edge_point(&p, &vq, vb));
                    let Some((s, _)) = geom::segment_intersection(a0, a1, b0, b1) else { continue };
                    let start = a0 + (a1 - a0) * s;
                    match newton_pair(f, vf, start, tol) {
                        Some((x, j, e)) if x.dist(start) < lat.h => w.roots.push((x, margin(j.gradient, e.grad))),
                        _ => w.failed.extend(project(f, start, tol.f_abs)),
                    }
                }
            }
        }
    }
    w
}

/// Method B output for one realization.
#[derive(Debug, Clone)]
pub struct IntersectionCount {
    pub set: NodalSet,
    pub counts: Vec<CurveCount>,
    pub tol: Tolerances,
    /// Cells crossed by both curves, which were resampled for intersection.
    pub subdivided_cells: usize,
    /// Joint zeros lying on nodal loops too small for the extraction grid.
    pub orphans: Vec<TangencyRecord>,
}

impl IntersectionCount {
    /// All joint zeros found, with the index of their component.
    pub fn joint_zeros(&self) -> impl Iterator<Item = (usize, &TangencyRecord)> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.records.iter().map(move |r| (i, r)))
    }

    /// Joint zeros strictly inside the disc of the given radius, orphans
    /// included.
    pub fn joint_zeros_in_disc(&self, radius: f64) -> usize {
        self.joint_zeros()
            .map(|(_, r)| r)
            .chain(&self.orphans)
            .filter(|r| r.location.norm() < radius)
            .count()
    }
}

/// Method B: intersects the nodal polylines with the polylines of `{Vf = 0}`
/// cell by cell, then polishes each crossing by Newton on `(f, Vf)`.
pub fn count_via_intersections(
    f: &FieldRealization,
    vf: &VectorFieldSpec,
    region: Region,
    params: ExtractParams,
    beta: f64,
) -> Result<IntersectionCount> {
    let channels = |p: &crate::field::Packed| match &vf.kind {
        VfKind::Constant { zeta } => vec![Channel::directional(p, *zeta)],
        VfKind::TorusTrig { .. } => vec![
            Channel::directional(p, Vec2::new(1.0, 0.0)),
            Channel::directional(p, Vec2::new(0.0, 1.0)),
        ],
    };
    let (set, sampled) = nodal::extract_with_channels(f, region, params, channels)?;
    let lat = &set.lattice;
    let mut vf_grid: Vec<f64> = match &vf.kind {
        VfKind::Constant { .. } => sampled.extra.into_iter().next().unwrap(),
        VfKind::TorusTrig { .. } => {
            let (c1, c2) = (&sampled.extra[0], &sampled.extra[1]);
            (0..c1.len())
                .map(|idx| {
                    if c1[idx].is_nan() {
                        return f64::NAN;
                    }
                    let v = vf.value(lat.point(idx % lat.nx, idx / lat.nx));
                    v.x * c1[idx] + v.y * c2[idx]
                })
                .collect()
        }
    };
    let tol = Tolerances::new(&set, f, vf);
    let nudge = nodal::nudge_offset(lat.h);
    for (idx, v) in vf_grid.iter_mut().enumerate() {
        if v.abs() < tol.vf_abs {
            *v = eval_vf(vf, f, lat.point(idx % lat.nx, idx / lat.nx) + nudge).vf;
        }
    }

    let mut by_cell: HashMap<usize, Vec<(u32, u32)>> = HashMap::new();
    for (ci, c) in set.components.iter().enumerate() {
        for (si, &cell) in c.cells.iter().enumerate() {
            by_cell.entry(cell).or_default().push((ci as u32, si as u32));
        }
    }
    let mut cells: Vec<usize> = by_cell.keys().copied().collect();
    cells.sort_unstable();

    let index = owner::VertexIndex::new(&set);
    let packed = f.packed();
    let mut window_channels = vec![Channel::value(packed)];
    window_channels.extend(channels(packed));
    // candidate roots: (position, margin)
    let mut found: Vec<(Vec2, Option<f64>)> = Vec::new();
    let mut unresolved = vec![false; set.components.len()];
    let mut subdivided = 0;
    for &cell in &cells {
        let Some((corners, _)) = lat.cell_topology(cell) else { continue };
        let v = corners.map(|c| vf_grid[c]);
        if v.iter().any(|x| x.is_nan()) {
            continue;
        }
        // look wherever Vf changes sign among the corners and the nodal
        // crossings on the cell boundary
        let positive = v[0] >= 0.0;
        let mut flips = Vec::new();
        let mut mixed = v.iter().any(|&x| (x >= 0.0) != positive);
        for &(ci, si) in &by_cell[&cell] {
            let comp = &set.components[ci as usize];
            let s = [si as usize, si as usize + 1].map(|k| vf.apply(comp.vertices[k], &comp.jets()[k]).vf >= 0.0);
            mixed |= s.iter().any(|&x| x != positive);
            if s[0] != s[1] {
                flips.push((ci as usize, si as usize));
            }
        }
        if !mixed {
            continue;
        }
        // both curves meet near this cell: resample a window around it, more
        // finely while a segment with a sign change of Vf has no root beside it
        subdivided += 1;
        let mut sub = SUBDIVISION;
        loop {
            let w = scan_window(f, vf, lat, packed, &window_channels, cell, sub, tol);
            let missing: Vec<usize> = flips
                .iter()
                .filter(|&&(ci, si)| {
                    let v = &set.components[ci].vertices;
                    !w.roots.iter().any(|r| {
                        let x = lat.lift_near(r.0, v[si]);
                        geom::point_segment_distance(x, v[si], v[si + 1]) < lat.h
                    })
                })
                .map(|&(ci, _)| ci)
                .collect();
            if !missing.is_empty() && sub < MAX_SUBDIVISION {
                sub *= 4;
                continue;
            }
            for ci in missing {
                unresolved[ci] = true;
            }
            for x in w.failed {
                for ci in index.owners(f, x, tol.f_abs).into_iter().flatten() {
                    unresolved[ci] = true;
                }
            }
            found.extend(w.roots);
            break;
        }
    }

    // the same root is found from several overlapping windows
    let radius = 1e-7 * lat.h.max(1.0);
    let key = |x: Vec2| -> Vec2 {
        if lat.periodic {
            Vec2::new(x.x.rem_euclid(lat.side), x.y.rem_euclid(lat.side))
        } else {
            x
        }
    };
    found.sort_by(|a, b| {
        let (ka, kb) = (key(a.0), key(b.0));
        ka.x.total_cmp(&kb.x).then(ka.y.total_cmp(&kb.y))
    });
    let mut kept: Vec<(Vec2, Option<f64>)> = Vec::with_capacity(found.len());
    for r in found {
        let kx = key(r.0);
        let dup = kept
            .iter()
            .rev()
            .take_while(|k| kx.x - key(k.0).x < radius)
            .any(|k| lat.periodic_dist(k.0, r.0) < radius);
        if !dup {
            kept.push(r);
        }
    }
    let mut roots: Vec<Vec<(Vec2, Option<f64>)>> = vec![Vec::new(); set.components.len()];
    let mut orphans = Vec::new();
    for (x, m) in kept {
        let ci = match index.owners(f, x, tol.f_abs) {
            [None, None] => {
                orphans.extend(m.map(|m| TangencyRecord::new(x, m, beta)));
                continue;
            }
            [Some(a), Some(b)] if a != b => {
                unresolved[a] = true;
                unresolved[b] = true;
                a
            }
            [Some(a), _] | [None, Some(a)] => a,
        };
        // the polyline must follow the curve through the root; near saddles
        // the lattice can join the branches differently
        let nearest = lat
            .cell_of(x)
            .into_iter()
            .flat_map(|cell| lat.neighbor_cells(cell))
            .filter_map(|cell| by_cell.get(&cell))
            .flatten()
            .filter(|q| q.0 as usize == ci)
            .map(|&(_, si)| {
                let v = &set.components[ci].vertices;
                let a = lat.lift_near(v[si as usize], x);
                (geom::point_segment_distance(x, a, v[si as usize + 1] + (a - v[si as usize])), v[si as usize])
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match nearest {
            Some((gap, anchor)) => {
                if gap > OWNER_GAP * lat.h {
                    unresolved[ci] = true;
                }
                // express the root in the lift of its component
                roots[ci].push((lat.lift_near(x, anchor), m));
            }
            None => {
                unresolved[ci] = true;
                roots[ci].push((x, m));
            }
        }
    }
    // roots along a polyline and sign changes of Vf between its vertices agree
    // in parity unless the lattice joined the curve wrongly somewhere
    for (ci, c) in set.components.iter().enumerate() {
        let signs: Vec<bool> = c.vertices.iter().zip(c.jets()).map(|(&x, j)| vf.apply(x, j).vf >= 0.0).collect();
        let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
        if flips % 2 != roots[ci].len() % 2 {
            unresolved[ci] = true;
        }
    }
    let counts = roots
        .into_iter()
        .zip(unresolved)
        .map(|(r, unres)| CurveCount::from_roots(r, unres, beta))
        .collect();
    Ok(IntersectionCount {
        subdivided_cells: subdivided,
        orphans,
        set,
        counts,
        tol,
    })
}

/// Runs Method A on every component and marks records whose component count
/// agrees with Method B. Returns the Method A counts.
pub fn cross_check(result: &mut IntersectionCount, f: &FieldRealization, vf: &VectorFieldSpec, beta: f64) -> Vec<CurveCount> {
    let mut a_counts = Vec::with_capacity(result.counts.len());
    for (comp, b) in result.set.components.iter().zip(result.counts.iter_mut()) {
        let a = count_tangencies_on_curve(comp, vf, f, beta, result.tol);
        let agree = a.k == b.k && !a.unresolved && !b.unresolved;
        for r in &mut b.records {
            r.method_agreement = agree;
        }
        a_counts.push(a);
    }
    a_counts
}

/// Flags every component whose polyline enters a ball of radius `rho`
/// around a zero of `V`. Returns the number of flagged components.
pub fn excise_zeros(vf: &VectorFieldSpec, components: &mut [NodalComponent], rho: f64) -> usize {
    if rho <= 0.0 || vf.zeros.is_empty() {
        return 0;
    }
    let side = vf.side();
    let mut flagged = 0;
    for c in components.iter_mut() {
        let hit = c.vertices.windows(2).any(|w| {
            vf.zeros.iter().any(|&z| {
                let z = match side {
                    Some(s) => Vec2::new(
                        z.x + s * ((w[0].x - z.x) / s).round(),
                        z.y + s * ((w[0].y - z.y) / s).round(),
                    ),
                    None => z,
                };
                geom::point_segment_distance(z, w[0], w[1]) < rho
            })
        }) || (c.vertices.len() == 1 && vf.zeros.iter().any(|z| z.dist(c.vertices[0]) < rho));
        if hit {
            c.excision_flag = true;
            flagged += 1;
        }
    }
    flagged
}

/// Whether a component enters the statistics: contained (or any closed
/// component on the torus), not excised, and resolved.
pub fn is_counted(c: &NodalComponent, count: &CurveCount) -> bool {
    let domain_ok = matches!(c.containment, Containment::Contained | Containment::NonContractible);
    domain_ok && !c.excision_flag && !count.unresolved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inject_deterministic, sample_field, Domain, Term};
    use crate::seed::SeedRecord;
    use crate::spectral::SpectralModel;
    use std::f64::consts::PI;

    fn loop_fixture(domain: Domain) -> FieldRealization {
        inject_deterministic(
            vec![
                Term::new(Vec2::new(1.0, 0.0), 1.0, 0.0),
                Term::new(Vec2::new(0.0, 1.0), 1.0, 0.0),
                Term::new(Vec2::ZERO, -1.0, 0.0),
            ],
            domain,
        )
        .unwrap()
    }

    fn torus_counts(vf: &VectorFieldSpec) -> (IntersectionCount, Vec<CurveCount>) {
        let f = loop_fixture(Domain::Torus { side: 1.0 });
        let mut b = count_via_intersections(&f, vf, Region::Torus, ExtractParams { grid_h: 0.02, tol_f: 1e-10 }, DEFAULT_BETA).unwrap();
        let a = cross_check(&mut b, &f, vf, DEFAULT_BETA);
        (b, a)
    }

    /// Independent oracle: parametrize the fixture loop in polar form around
    /// the origin and count sign changes of ζ·∇f at many points.
    fn dense_oracle(angle_deg: f64) -> usize {
        let f = loop_fixture(Domain::Plane);
        let zeta = Vec2::from_angle_deg(angle_deg);
        let m = 100_000;
        let mut signs = Vec::with_capacity(m);
        for k in 0..m {
            let th = TAU * (k as f64 + 0.5) / m as f64;
            let dir = Vec2::new(th.cos(), th.sin());
            // f along the ray decreases from 1 at the origin; bisect for the crossing
            let (mut lo, mut hi) = (0.0, 0.5);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if f.value(dir * mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let g = f.value_grad(dir * lo).1;
            signs.push(zeta.dot(g) >= 0.0);
        }
        (0..m).filter(|&k| signs[k] != signs[(k + 1) % m]).count()
    }

    #[test]
    fn fixture_axis_counts() {
        for angle in [90.0, 0.0] {
            let (b, a) = torus_counts(&VectorFieldSpec::constant(angle));
            assert_eq!(b.counts.len(), 1);
            assert_eq!(b.counts[0].k, 2, "method B at {angle}");
            assert_eq!(a[0].k, 2, "method A at {angle}");
            for r in &b.counts[0].records {
                assert!(r.method_agreement);
                assert!(r.margin > 0.3);
            }
        }
    }

    #[test]
    fn fixture_diagonal_matches_dense_oracle() {
        let expected = dense_oracle(45.0);
        assert_eq!(expected % 2, 0);
        let (b, a) = torus_counts(&VectorFieldSpec::constant(45.0));
        assert_eq!(b.counts[0].k, expected);
        assert_eq!(a[0].k, expected);
        assert_eq!(dense_oracle(90.0), 2);
    }

    #[test]
    fn plane_wave_has_no_tangencies() {
        let f = inject_deterministic(vec![Term::new(Vec2::new(1.0, 0.0), 1.0, 0.0)], Domain::Plane).unwrap();
        let vf = VectorFieldSpec::constant(0.0);
        let e = eval_vf(&vf, &f, Vec2::new(0.25, 0.0));
        assert!((e.vf + TAU).abs() < 1e-12);
        let b = count_via_intersections(&f, &vf, Region::Disc { radius: 5.0 }, ExtractParams { grid_h: 0.02, tol_f: 1e-10 }, DEFAULT_BETA).unwrap();
        assert!(!b.counts.is_empty());
        assert!(b.counts.iter().all(|c| c.k == 0));
    }

    #[test]
    fn grad_vf_matches_finite_differences() {
        let f = sample_field(&SpectralModel::circle(), 64, SeedRecord::new(2, 0)).unwrap();
        for vf in [VectorFieldSpec::constant(23.0), VectorFieldSpec::morse_gradient(1.0, 0.05).unwrap()] {
            for i in 0..100 {
                let x = Vec2::new((i as f64 * 0.6180339).fract() * 7.0, (i as f64 * 0.4142135).fract() * 7.0);
                let e = eval_vf(&vf, &f, x);
                let h = 1e-5;
                let fd = Vec2::new(
                    (eval_vf(&vf, &f, x + Vec2::new(h, 0.0)).vf - eval_vf(&vf, &f, x - Vec2::new(h, 0.0)).vf) / (2.0 * h),
                    (eval_vf(&vf, &f, x + Vec2::new(0.0, h)).vf - eval_vf(&vf, &f, x - Vec2::new(0.0, h)).vf) / (2.0 * h),
                );
                assert!((fd - e.grad).norm() <= 1e-5 * e.grad.norm().max(1.0), "{fd:?} vs {:?}", e.grad);
            }
        }
    }

    #[test]
    fn sin_sin_zeros_and_excision() {
        let vf = VectorFieldSpec::sin_sin(1.0, 0.05).unwrap();
        assert_eq!(vf.zeros.len(), 4);
        for z in &vf.zeros {
            assert!(vf.value(*z).norm() < 1e-12);
            assert!([0.0, 0.5].iter().any(|a| (z.x - a).abs() < 1e-10));
        }
        assert_eq!(vf.audit_zeros().index_sum, 0);
        assert!(vf.value(Vec2::ZERO).norm() < 1e-15);
        let morse = VectorFieldSpec::morse_gradient(1.0, 0.05).unwrap();
        assert!(morse.zeros.len() >= 4);
        let mut comps = vec![
            NodalComponent::from_polyline(vec![Vec2::new(0.01, -0.2), Vec2::new(0.01, 0.2)], false),
            NodalComponent::from_polyline(vec![Vec2::new(0.25, -0.2), Vec2::new(0.25, 0.2)], false),
        ];
        assert_eq!(excise_zeros(&vf, &mut comps.clone(), 0.0), 0);
        assert_eq!(excise_zeros(&VectorFieldSpec::constant(0.0), &mut comps.clone(), 0.5), 0);
        assert_eq!(excise_zeros(&vf, &mut comps, 0.05), 1);
        assert!(comps[0].excision_flag && !comps[1].excision_flag);
    }

    #[test]
    fn margin_scale_invariance() {
        let g = Vec2::new(0.3, -1.2);
        let h = Vec2::new(2.0, 0.7);
        let m = margin(g, h).unwrap();
        for c in [0.5, 3.0] {
            for c2 in [0.5, 3.0] {
                assert!((margin(g * c, h * (c * c2)).unwrap() - m).abs() < 1e-15);
            }
        }
        assert!(margin(Vec2::ZERO, h).is_none());
        let _ = PI;
    }

    #[test]
    fn methods_agree_on_random_field() {
        let f = sample_field(&SpectralModel::circle(), 256, SeedRecord::new(8, 0)).unwrap();
        let vf = VectorFieldSpec::constant(0.0);
        let mut b = count_via_intersections(&f, &vf, Region::Disc { radius: 10.0 }, ExtractParams::default(), DEFAULT_BETA).unwrap();
        let a = cross_check(&mut b, &f, &vf, DEFAULT_BETA);
        let mut checked = 0;
        for ((c, cb), ca) in b.set.components.iter().zip(&b.counts).zip(&a) {
            if cb.unresolved || ca.unresolved {
                continue;
            }
            assert_eq!(ca.k, cb.k, "component at {:?}", c.vertices[0]);
            if c.containment == Containment::Contained && cb.all_transverse() {
                assert!(cb.k >= 2 && cb.k % 2 == 0);
                checked += 1;
            }
            for r in &cb.records {
                assert!(f.value(r.location).abs() <= b.tol.f_abs);
                assert!(eval_vf(&vf, &f, r.location).vf.abs() <= b.tol.vf_abs);
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn torus_trig_counts_on_arithmetic_field() {
        let m = SpectralModel::arithmetic(13).unwrap();
        let f = sample_field(&m, 0, SeedRecord::new(6, 0)).unwrap();
        let side = m.torus_side().unwrap();
        let vf = VectorFieldSpec::sin_sin(side, 0.05).unwrap();
        let mut b = count_via_intersections(&f, &vf, Region::Torus, ExtractParams::default(), DEFAULT_BETA).unwrap();
        let a = cross_check(&mut b, &f, &vf, DEFAULT_BETA);
        for (ca, cb) in a.iter().zip(&b.counts) {
            if cb.min_margin() > DEFAULT_BETA && !ca.unresolved && !cb.unresolved {
                assert_eq!(ca.k, cb.k);
            }
        }
    }
}
