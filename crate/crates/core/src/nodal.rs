//! Nodal set extraction by marching squares with exact-field refinement.
//!
//! The field is sampled on a square lattice. Every edge with a sign change
//! gets one crossing point, refined on the exact field by safeguarded Newton
//! along the edge. Saddle cells are resolved by the sign of the exact field at
//! the cell center. Crossings are stitched into polylines through shared edge
//! ids, which also handles the periodic wrap on the torus.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::kernel::{sweep, Channel, GridSweep};
use crate::field::{Domain, FieldRealization, Jet};
use crate::geom::{self, Vec2};

pub const DEFAULT_GRID_H: f64 = 0.05;
pub const DEFAULT_TOL_F: f64 = 1e-10;
/// Fraction of grid vertices that may be nudged before extraction gives up.
pub const MAX_NUDGE_FRACTION: f64 = 1e-3;
const MAX_REFINE_ITERS: usize = 60;
/// Lattice origin offset in units of `h`, keeping sample rows off the
/// symmetry lines of deterministic fixtures.
const LATTICE_OFFSET: Vec2 = Vec2::new(0.2371, 0.1593);

/// Where components are extracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// The disc `B(radius)` of the plane.
    Disc { radius: f64 },
    /// The whole fundamental domain of a torus realization.
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractParams {
    pub grid_h: f64,
    pub tol_f: f64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            grid_h: DEFAULT_GRID_H,
            tol_f: DEFAULT_TOL_F,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Containment {
    Contained,
    BoundaryIntersecting,
    /// Closed loop on the torus whose lift does not close up.
    NonContractible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Normal,
    XiSmall,
    DLong,
}

/// One connected component of the nodal set.
///
/// On the torus the vertices are a lift to the plane: the path is continuous,
/// starts inside the fundamental domain, and a non-contractible loop ends at
/// its start translated by `winding · side`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodalComponent {
    pub vertices: Vec<Vec2>,
    pub closed: bool,
    pub containment: Containment,
    pub enclosed_area: Option<f64>,
    pub diameter: f64,
    pub size_class: SizeClass,
    pub excision_flag: bool,
    #[serde(default)]
    pub winding: (i64, i64),
    /// Exact jets of `f` at the vertices.
    #[serde(skip)]
    pub(crate) jets: Vec<Jet>,
    /// Lattice cell holding segment `i` (from vertex `i` to `i + 1`).
    #[serde(skip)]
    pub(crate) cells: Vec<usize>,
}

impl NodalComponent {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Exact gradient of the field at each vertex.
    pub fn gradients(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.jets.iter().map(|j| j.gradient)
    }

    pub fn jets(&self) -> &[Jet] {
        &self.jets
    }

    /// Closed and free of self-intersections.
    pub fn is_simple(&self) -> bool {
        self.closed && !geom::closed_polyline_self_intersects(&self.vertices)
    }

    /// Length of the polyline.
    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Builds a component from an explicit closed or open polyline, for
    /// fixtures that do not come from a field.
    pub fn from_polyline(vertices: Vec<Vec2>, closed: bool) -> Self {
        let mut c = NodalComponent {
            closed,
            containment: Containment::Contained,
            enclosed_area: None,
            diameter: geom::diameter(&vertices),
            size_class: SizeClass::Normal,
            excision_flag: false,
            winding: (0, 0),
            jets: Vec::new(),
            cells: Vec::new(),
            vertices,
        };
        if closed {
            c.enclosed_area = enclosed_area(&c).ok();
        }
        c
    }
}

/// Shoelace area enclosed by a closed, contractible component.
pub fn enclosed_area(c: &NodalComponent) -> Result<f64> {
    if !c.closed || c.containment == Containment::NonContractible {
        return Err(Error::ContractViolation(
            "enclosed_area needs a closed contractible component".into(),
        ));
    }
    Ok(geom::signed_area(&c.vertices).abs())
}

/// Sets `size_class`: XiSmall if closed with area below `xi`, else DLong if
/// the diameter exceeds `d`, else Normal.
pub fn classify_components(components: &mut [NodalComponent], d: f64, xi: f64) {
    for c in components {
        let small = c.closed && c.enclosed_area.is_some_and(|a| a < xi);
        c.size_class = if small {
            SizeClass::XiSmall
        } else if c.diameter > d {
            SizeClass::DLong
        } else {
            SizeClass::Normal
        };
    }
}

/// Result of one extraction.
#[derive(Debug, Clone)]
pub struct NodalSet {
    pub components: Vec<NodalComponent>,
    pub region: Region,
    pub params: ExtractParams,
    /// `max |f|` over the sampling grid.
    pub field_scale: f64,
    pub nudged: usize,
    pub grid_vertices: usize,
    pub(crate) lattice: Lattice,
}

impl NodalSet {
    pub fn count(&self, containment: Containment) -> usize {
        self.components
            .iter()
            .filter(|c| c.containment == containment)
            .count()
    }

    /// Absolute residual tolerance used for vertices.
    pub fn abs_tol(&self) -> f64 {
        self.params.tol_f * self.field_scale
    }
}

/// Extracts the nodal components of `f` in `region`.
pub fn extract_nodal_set(f: &FieldRealization, region: Region, params: ExtractParams) -> Result<NodalSet> {
    Ok(extract_with_channels(f, region, params, |_| Vec::new())?.0)
}

/// Sampling lattice: points `origin + (i, j) h`. On the torus indices wrap.
#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    pub origin: Vec2,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub periodic: bool,
    pub side: f64,
    /// Evaluated column range per row (plane only).
    pub rows: Vec<(usize, usize)>,
}

impl Lattice {
    pub(crate) fn for_region(f: &FieldRealization, region: Region, h: f64) -> Result<Lattice> {
        match (region, f.domain()) {
            (Region::Torus, Domain::Torus { side }) => {
                let n = (side / h).ceil() as usize;
                let h = side / n as f64;
                Ok(Lattice {
                    origin: LATTICE_OFFSET * h,
                    h,
                    nx: n,
                    ny: n,
                    periodic: true,
                    side,
                    rows: vec![(0, n); n],
                })
            }
            (Region::Torus, Domain::Plane) => Err(Error::arg("torus region needs a torus realization")),
            (Region::Disc { radius }, _) => {
                if !(radius > 0.0) {
                    return Err(Error::arg(format!("disc radius must be positive, got {radius}")));
                }
                let reach = radius + 2.0 * h;
                let half = (reach / h).ceil() as usize + 1;
                let n = 2 * half + 1;
                let origin = Vec2::new(-(half as f64) * h, -(half as f64) * h) + LATTICE_OFFSET * h;
                let cover = reach + 1.5 * h;
                let rows = (0..n)
                    .map(|j| {
                        let y = origin.y + j as f64 * h;
                        let w2 = cover * cover - y * y;
                        if w2 <= 0.0 {
                            return (0, 0);
                        }
                        let w = w2.sqrt();
                        let lo = ((-w - origin.x) / h).floor().max(0.0) as usize;
                        let hi = (((w - origin.x) / h).ceil() as usize + 1).min(n);
                        (lo, hi)
                    })
                    .collect();
                Ok(Lattice {
                    origin,
                    h,
                    nx: n,
                    ny: n,
                    periodic: false,
                    side: 0.0,
                    rows,
                })
            }
        }
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 * self.h, j as f64 * self.h)
    }

    #[inline]
    fn vid(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    fn wrap(&self, i: usize, n: usize) -> usize {
        if self.periodic && i >= n {
            i - n
        } else {
            i
        }
    }

    /// Corners `c0 = (i, j)`, `c1 = (i+1, j)`, `c2 = (i+1, j+1)`, `c3 = (i, j+1)`.
    #[inline]
    fn corners(&self, i: usize, j: usize) -> Option<[usize; 4]> {
        let i1 = self.wrap(i + 1, self.nx);
        let j1 = self.wrap(j + 1, self.ny);
        if i1 >= self.nx || j1 >= self.ny {
            return None;
        }
        Some([self.vid(i, j), self.vid(i1, j), self.vid(i1, j1), self.vid(i, j1)])
    }

    /// Edge ids of a cell: bottom, right, top, left.
    #[inline]
    fn cell_edges(&self, c: &[usize; 4]) -> [usize; 4] {
        [2 * c[0], 2 * c[1] + 1, 2 * c[3], 2 * c[0] + 1]
    }

    /// Corner vertex ids and edge ids of a cell, if all corners exist.
    pub fn cell_topology(&self, cell: usize) -> Option<([usize; 4], [usize; 4])> {
        let (i, j) = self.cell_ij(cell);
        let c = self.corners(i, j)?;
        Some((c, self.cell_edges(&c)))
    }

    /// Cell containing `p`, if inside the lattice.
    pub fn cell_of(&self, p: Vec2) -> Option<usize> {
        let (mut i, mut j) = (
            ((p.x - self.origin.x) / self.h).floor() as i64,
            ((p.y - self.origin.y) / self.h).floor() as i64,
        );
        if self.periodic {
            i = i.rem_euclid(self.nx as i64);
            j = j.rem_euclid(self.ny as i64);
        }
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            return None;
        }
        Some(j as usize * self.nx + i as usize)
    }

    /// The cell and its (up to eight) existing neighbours.
    pub fn neighbor_cells(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.cell_ij(cell);
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let periodic = self.periodic;
        (-1i64..=1).flat_map(move |dj| (-1i64..=1).map(move |di| (i as i64 + di, j as i64 + dj))).filter_map(
            move |(a, b)| {
                if periodic {
                    Some((b.rem_euclid(ny) * nx + a.rem_euclid(nx)) as usize)
                } else if a >= 0 && b >= 0 && a < nx && b < ny {
                    Some((b * nx + a) as usize)
                } else {
                    None
                }
            },
        )
    }

    /// Distance between two points, modulo the period on the torus.
    pub fn periodic_dist(&self, a: Vec2, b: Vec2) -> f64 {
        self.lift_near(a, b).dist(b)
    }

    /// Endpoints of an edge as unwrapped positions and vertex ids.
    #[inline]
    pub fn edge_endpoints(&self, e: usize) -> (Vec2, Vec2, usize, usize) {
        let v = e / 2;
        let (i, j) = (v % self.nx, v / self.nx);
        let p0 = self.point(i, j);
        if e % 2 == 0 {
            (p0, p0 + Vec2::new(self.h, 0.0), v, self.vid(self.wrap(i + 1, self.nx), j))
        } else {
            (p0, p0 + Vec2::new(0.0, self.h), v, self.vid(i, self.wrap(j + 1, self.ny)))
        }
    }

    #[inline]
    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// Unwrapped translate of `p` closest to `anchor`.
    #[inline]
    pub fn lift_near(&self, p: Vec2, anchor: Vec2) -> Vec2 {
        if !self.periodic {
            return p;
        }
        let s = self.side;
        Vec2::new(
            p.x - s * ((p.x - anchor.x) / s).round(),
            p.y - s * ((p.y - anchor.y) / s).round(),
        )
    }

    pub fn grid_sweep(&self) -> GridSweep<'_> {
        GridSweep {
            origin: self.origin,
            h: self.h,
            nx: self.nx,
            ny: self.ny,
            rows: Some(&self.rows),
        }
    }
}

/// Local edge pairs crossed inside a cell, given corner values and a lazily
/// evaluated center value for saddles. Edges: 0 bottom, 1 right, 2 top, 3 left.
#[inline]
pub(crate) fn cell_segments(v: [f64; 4], center: impl FnOnce() -> f64) -> ([(u8, u8); 2], usize) {
    let s = [v[0] >= 0.0, v[1] >= 0.0, v[2] >= 0.0, v[3] >= 0.0];
    let cut = [s[0] != s[1], s[1] != s[2], s[3] != s[2], s[0] != s[3]];
    let n = cut.iter().filter(|&&c| c).count();
    match n {
        2 => {
            let mut it = (0u8..4).filter(|&k| cut[k as usize]);
            ([(it.next().unwrap(), it.next().unwrap()), (0, 0)], 1)
        }
        4 => {
            if (center() >= 0.0) == s[0] {
                ([(0, 1), (2, 3)], 2)
            } else {
                ([(3, 0), (1, 2)], 2)
            }
        }
        _ => ([(0, 0); 2], 0),
    }
}

/// Value of `f` at its saddle point inside the square `[lo, lo + h]²`, which
/// decides how an ambiguous cell is joined. Falls back to the value at the
/// center when Newton on `∇f` does not settle on a saddle inside the square.
pub(crate) fn saddle_value(f: &FieldRealization, lo: Vec2, h: f64) -> f64 {
    let center = lo + Vec2::new(0.5 * h, 0.5 * h);
    let mut x = center;
    for _ in 0..12 {
        let j = f.eval(x);
        let d = j.hessian.det();
        if !(d < 0.0) {
            break;
        }
        let (g, m) = (j.gradient, j.hessian);
        let step = Vec2::new((m.yy * g.x - m.xy * g.y) / d, (m.xx * g.y - m.xy * g.x) / d);
        x = x - step;
        let inside = x.x >= lo.x && x.y >= lo.y && x.x <= lo.x + h && x.y <= lo.y + h;
        if !inside || !step.is_finite() {
            break;
        }
        if step.norm() <= 1e-9 * h {
            return f.value(x);
        }
    }
    f.value(center)
}

/// Safeguarded Newton for a root of `probe` on the segment `[p0, p1]`, whose
/// endpoint values `f0`, `f1` have opposite signs (after nudging). `probe`
/// returns value, gradient and a payload kept from the final evaluation.
pub(crate) fn refine_edge<T>(
    p0: Vec2,
    p1: Vec2,
    f0: f64,
    f1: f64,
    tol: f64,
    mut probe: impl FnMut(Vec2) -> (f64, Vec2, T),
) -> (Vec2, T, bool) {
    let d = p1 - p0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let neg0 = f0 < 0.0;
    let mut t = if f0 != f1 { (f0 / (f0 - f1)).clamp(0.0, 1.0) } else { 0.5 };
    let mut last = None;
    for _ in 0..MAX_REFINE_ITERS {
        let x = p0 + d * t;
        let (v, g, payload) = probe(x);
        if v.abs() <= tol {
            return (x, payload, true);
        }
        if (v < 0.0) == neg0 {
            a = t;
        } else {
            b = t;
        }
        let slope = g.dot(d);
        let mut next = t - v / slope;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if b - a <= 4.0 * f64::EPSILON || next == t {
            return (x, payload, false);
        }
        t = next;
        last = Some((x, payload));
    }
    let (x, payload) = last.expect("at least one iteration");
    (x, payload, false)
}

/// Fixed displacement used to re-evaluate a grid vertex where the sampled
/// function is numerically zero.
pub(crate) fn nudge_offset(h: f64) -> Vec2 {
    Vec2::new(0.6, 0.8) * (h * 1e-3)
}

/// Grid samples of the extra channels.
pub(crate) struct Sampled {
    pub extra: Vec<Vec<f64>>,
}

/// Extraction that also returns extra linear channels of `f` sampled on
/// the same lattice (for tangency counting).
pub(crate) fn extract_with_channels(
    f: &FieldRealization,
    region: Region,
    params: ExtractParams,
    extra: impl FnOnce(&crate::field::Packed) -> Vec<Channel>,
) -> Result<(NodalSet, Sampled)> {
    if !(params.grid_h > 0.0 && params.grid_h <= 0.1) {
        return Err(Error::arg(format!("grid_h must lie in (0, 0.1], got {}", params.grid_h)));
    }
    if !(params.tol_f > 0.0) {
        return Err(Error::arg("tol_f must be positive"));
    }
    let lat = Lattice::for_region(f, region, params.grid_h)?;
    let packed = f.packed();
    let mut channels = vec![Channel::value(packed)];
    channels.extend(extra(packed));
    let mut out = sweep(packed, &lat.grid_sweep(), &channels);
    let mut values = out.remove(0);

    let evaluated = values.iter().filter(|v| !v.is_nan()).count();
    let scale = values
        .iter()
        .filter(|v| !v.is_nan())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = params.tol_f * scale.max(f64::MIN_POSITIVE);

    let nudge = nudge_offset(lat.h);
    let mut nudged = 0usize;
    for (idx, v) in values.iter_mut().enumerate() {
        if v.abs() < tol {
            let p = lat.point(idx % lat.nx, idx / lat.nx);
            *v = f.value(p + nudge);
            nudged += 1;
        }
    }
    if nudged > 0 {
        log::debug!("nudged {nudged} of {evaluated} grid vertices");
    }
    if nudged as f64 > MAX_NUDGE_FRACTION * evaluated as f64 {
        return Err(Error::DegenerateField {
            nudged,
            total: evaluated,
        });
    }

    let components = trace(f, &lat, region, &values, tol);
    let set = NodalSet {
        components,
        region,
        params,
        field_scale: scale,
        nudged,
        grid_vertices: evaluated,
        lattice: lat,
    };
    Ok((set, Sampled { extra: out }))
}

struct Crossing {
    pos: Vec2,
    jet: Jet,
}

fn trace(f: &FieldRealization, lat: &Lattice, region: Region, values: &[f64], tol: f64) -> Vec<NodalComponent> {
    // crossings indexed by edge id
    let mut edge_crossing: HashMap<usize, u32> = HashMap::new();
    let mut crossings: Vec<Crossing> = Vec::new();
    // segments: (crossing a, crossing b, cell)
    let mut segs: Vec<(u32, u32, usize)> = Vec::new();

    let mut crossing_at = |e: usize, crossings: &mut Vec<Crossing>| -> u32 {
        *edge_crossing.entry(e).or_insert_with(|| {
            let (p0, p1, v0, v1) = lat.edge_endpoints(e);
            let (pos, jet, ok) = refine_edge(p0, p1, values[v0], values[v1], tol, |x| {
                let j = f.eval(x);
                (j.value, j.gradient, j)
            });
            if !ok {
                log::debug!("edge refinement stalled at ({:.6}, {:.6}), |f| = {:.3e}", pos.x, pos.y, jet.value.abs());
            }
            crossings.push(Crossing { pos, jet });
            (crossings.len() - 1) as u32
        })
    };

    let cell_rows = if lat.periodic { lat.ny } else { lat.ny - 1 };
    let cell_cols = if lat.periodic { lat.nx } else { lat.nx - 1 };
    for j in 0..cell_rows {
        for i in 0..cell_cols {
            let Some(c) = lat.corners(i, j) else { continue };
            let v = [values[c[0]], values[c[1]], values[c[2]], values[c[3]]];
            if v.iter().any(|x| x.is_nan()) {
                continue;
            }
            let cell = lat.vid(i, j);
            let (pairs, n) = cell_segments(v, || saddle_value(f, lat.point(i, j), lat.h));
            if n == 0 {
                continue;
            }
            let edges = lat.cell_edges(&c);
            for &(a, b) in &pairs[..n] {
                let ca = crossing_at(edges[a as usize], &mut crossings);
                let cb = crossing_at(edges[b as usize], &mut crossings);
                segs.push((ca, cb, cell));
            }
        }
    }

    // adjacency: each crossing has at most two segments
    let mut adj: Vec<[u32; 2]> = vec![[u32::MAX; 2]; crossings.len()];
    for (s, &(a, b, _)) in segs.iter().enumerate() {
        for x in [a, b] {
            let slot = &mut adj[x as usize];
            if slot[0] == u32::MAX {
                slot[0] = s as u32;
            } else {
                slot[1] = s as u32;
            }
        }
    }

    let mut used = vec![false; segs.len()];
    let mut chains: Vec<(Vec<u32>, Vec<usize>, bool)> = Vec::new();
    let walk = |start: u32, used: &mut Vec<bool>| -> Option<(Vec<u32>, Vec<usize>, bool)> {
        let mut nodes = vec![start];
        let mut cells = Vec::new();
        let mut cur = start;
        loop {
            let next_seg = adj[cur as usize]
                .iter()
                .copied()
                .find(|&s| s != u32::MAX && !used[s as usize]);
            let Some(s) = next_seg else { break };
            used[s as usize] = true;
            let (a, b, cell) = segs[s as usize];
            cur = if a == cur { b } else { a };
            cells.push(cell);
            nodes.push(cur);
            if cur == start {
                return Some((nodes, cells, true));
            }
        }
        if cells.is_empty() {
            None
        } else {
            Some((nodes, cells, false))
        }
    };
    for x in 0..crossings.len() {
        let degree = adj[x].iter().filter(|&&s| s != u32::MAX).count();
        if degree == 1 && !used[adj[x][0] as usize] {
            if let Some(ch) = walk(x as u32, &mut used) {
                chains.push(ch);
            }
        }
    }
    for x in 0..crossings.len() {
        if adj[x].iter().any(|&s| s != u32::MAX && !used[s as usize]) {
            if let Some(ch) = walk(x as u32, &mut used) {
                chains.push(ch);
            }
        }
    }

    let mut components = Vec::new();
    for (nodes, cells, closed) in chains {
        let mut vertices = Vec::with_capacity(nodes.len());
        let mut jets = Vec::with_capacity(nodes.len());
        for &n in &nodes {
            let c = &crossings[n as usize];
            let p = match vertices.last() {
                Some(&prev) => lat.lift_near(c.pos, prev),
                None => c.pos,
            };
            vertices.push(p);
            jets.push(c.jet);
        }
        let comp = NodalComponent {
            vertices,
            closed,
            containment: Containment::Contained,
            enclosed_area: None,
            diameter: 0.0,
            size_class: SizeClass::Normal,
            excision_flag: false,
            winding: (0, 0),
            jets,
            cells,
        };
        if let Some(c) = finish_component(comp, lat, region) {
            components.push(c);
        }
    }
    components.sort_by(|a, b| {
        let (pa, pb) = (a.vertices[0], b.vertices[0]);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y))
    });
    components
}

/// Containment, winding, canonical orientation, area and diameter.
fn finish_component(mut c: NodalComponent, lat: &Lattice, region: Region) -> Option<NodalComponent> {
    if c.closed && lat.periodic {
        let d = *c.vertices.last().unwrap() - c.vertices[0];
        c.winding = ((d.x / lat.side).round() as i64, (d.y / lat.side).round() as i64);
    }
    canonicalize(&mut c, lat);
    match region {
        Region::Disc { radius } => {
            let r2 = radius * radius;
            let inside = c.vertices.iter().filter(|v| v.norm_sq() < r2).count();
            if inside == 0 {
                return None;
            }
            c.containment = if c.closed && inside == c.vertices.len() {
                Containment::Contained
            } else {
                Containment::BoundaryIntersecting
            };
        }
        Region::Torus => {
            c.containment = if c.closed && c.winding == (0, 0) {
                Containment::Contained
            } else if c.closed {
                Containment::NonContractible
            } else {
                // open chains cannot occur on a fully periodic lattice
                Containment::BoundaryIntersecting
            };
        }
    }
    c.diameter = geom::diameter(&c.vertices);
    if c.closed && c.containment != Containment::NonContractible {
        c.enclosed_area = Some(geom::signed_area(&c.vertices[..c.vertices.len() - 1]).abs());
    }
    Some(c)
}

/// Closed loops start at their leftmost-lowest vertex and run counter-clockwise;
/// open chains start at the lexicographically smaller end.
fn canonicalize(c: &mut NodalComponent, lat: &Lattice) {
    let lex = |a: &Vec2, b: &Vec2| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y));
    if !c.closed {
        if lex(c.vertices.last().unwrap(), &c.vertices[0]).is_lt() {
            c.vertices.reverse();
            c.jets.reverse();
            c.cells.reverse();
        }
        return;
    }
    let m = c.vertices.len() - 1;
    if m == 0 {
        return;
    }
    let shift = *c.vertices.last().unwrap() - c.vertices[0];
    let mut verts: Vec<Vec2> = c.vertices[..m].to_vec();
    let mut jets: Vec<Jet> = c.jets[..m].to_vec();
    let mut cells = c.cells.clone();
    if !lat.periodic || shift == Vec2::ZERO {
        let area = geom::signed_area(&verts);
        if area < 0.0 {
            // reverse the cycle keeping vertex 0 first
            verts[1..].reverse();
            jets[1..].reverse();
            cells.reverse();
        }
    }
    // base representatives for choosing the start vertex
    let base = |p: Vec2| -> Vec2 {
        if lat.periodic {
            Vec2::new(p.x.rem_euclid(lat.side), p.y.rem_euclid(lat.side))
        } else {
            p
        }
    };
    let r = (0..m)
        .min_by(|&a, &b| lex(&base(verts[a]), &base(verts[b])))
        .unwrap();
    let mut nv = Vec::with_capacity(m + 1);
    for k in 0..m {
        let idx = (r + k) % m;
        let p = if r + k >= m { verts[idx] + shift } else { verts[idx] };
        nv.push(p);
    }
    let offset = nv[0] - base(nv[0]);
    for p in &mut nv {
        *p = *p - offset;
    }
    nv.push(nv[0] + shift);
    let mut nj: Vec<Jet> = (0..m).map(|k| jets[(r + k) % m]).collect();
    nj.push(nj[0]);
    let nc: Vec<usize> = (0..m).map(|k| cells[(r + k) % m]).collect();
    c.vertices = nv;
    c.jets = nj;
    c.cells = nc;
}

/// One line of the component JSONL export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentLine {
    pub index: usize,
    pub closed: bool,
    pub containment: Containment,
    pub size_class: SizeClass,
    pub excised: bool,
    pub vertex_count: usize,
    pub enclosed_area: Option<f64>,
    pub diameter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec2>>,
}

/// Components as JSON lines; vertices included only when asked.
pub fn components_to_jsonl(components: &[NodalComponent], emit_vertices: bool) -> Result<String> {
    let mut s = String::new();
    for (index, c) in components.iter().enumerate() {
        let line = ComponentLine {
            index,
            closed: c.closed,
            containment: c.containment,
            size_class: c.size_class,
            excised: c.excision_flag,
            vertex_count: c.vertices.len(),
            enclosed_area: c.enclosed_area,
            diameter: c.diameter,
            vertices: emit_vertices.then(|| c.vertices.clone()),
        };
        s.push_str(&serde_json::to_string(&line)?);
        s.push('\n');
    }
    Ok(s)
}
