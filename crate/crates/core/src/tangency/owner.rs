//! Attribution of points on `{f = 0}` to extracted components.
//!
//! A point is traced along the exact curve until the trace crosses a lattice
//! line at a refined vertex of some component. Points on loops the lattice
//! never saw have no owner.

use std::collections::HashMap;

use crate::field::FieldRealization;
use crate::geom::Vec2;
use crate::nodal::{Lattice, NodalSet};

/// Arc length walked in each direction before giving up, in grid steps.
const MAX_TRAVEL: f64 = 4.0;
/// Vertex match radius, in grid steps.
const MATCH_RADIUS: f64 = 1e-4;

pub(crate) struct VertexIndex<'a> {
    lat: &'a Lattice,
    buckets: HashMap<(i64, i64), Vec<(u32, Vec2)>>,
}

impl<'a> VertexIndex<'a> {
    pub(crate) fn new(set: &'a NodalSet) -> Self {
        let lat = &set.lattice;
        let mut buckets: HashMap<(i64, i64), Vec<(u32, Vec2)>> = HashMap::new();
        for (ci, c) in set.components.iter().enumerate() {
            for &v in &c.vertices {
                let w = wrap(lat, v);
                buckets.entry(key(lat, w)).or_default().push((ci as u32, w));
            }
        }
        VertexIndex { lat, buckets }
    }

    fn lookup(&self, p: Vec2) -> Option<usize> {
        let w = wrap(self.lat, p);
        let (i, j) = key(self.lat, w);
        let r = MATCH_RADIUS * self.lat.h;
        let mut best: Option<(f64, u32)> = None;
        for dj in -1..=1 {
            for di in -1..=1 {
                for &(ci, v) in self.buckets.get(&(i + di, j + dj)).into_iter().flatten() {
                    let d = self.lat.periodic_dist(v, w);
                    if d < r && best.is_none_or(|b| d < b.0) {
                        best = Some((d, ci));
                    }
                }
            }
        }
        best.map(|b| b.1 as usize)
    }

    /// Components reached from `x` (on `{f = 0}`) walking forwards and
    /// backwards along the curve. They differ when the lattice joined the
    /// branches of a near-saddle differently from the true curve.
    pub(crate) fn owners(&self, f: &FieldRealization, x: Vec2, tol: f64) -> [Option<usize>; 2] {
        [self.walk(f, x, tol, 1.0), self.walk(f, x, tol, -1.0)]
    }

    fn walk(&self, f: &FieldRealization, x: Vec2, tol: f64, dir: f64) -> Option<usize> {
        let h = self.lat.h;
        {
            let mut p = x;
            let mut t_prev: Option<Vec2> = None;
            let mut s = 0.25 * h;
            let mut travelled = 0.0;
            while travelled < MAX_TRAVEL * h && s > 1e-6 * h {
                let g = f.value_grad(p).1;
                if g.norm_sq() == 0.0 {
                    break;
                }
                let mut t = g.perp().normalized();
                match t_prev {
                    None => t = t * dir,
                    Some(tp) if t.dot(tp) < 0.0 => t = t * -1.0,
                    _ => {}
                }
                let guess = p + t * s;
                let q = match super::project(f, guess, tol) {
                    Some(q) if q.dist(guess) < 0.25 * s => q,
                    _ => {
                        s *= 0.5;
                        continue;
                    }
                };
                if let Some(c) = self.crossings(f, p, q, tol) {
                    return Some(c);
                }
                travelled += s;
                t_prev = Some(t);
                p = q;
                s = (2.0 * s).min(0.25 * h);
            }
        }
        None
    }

    /// First registered vertex on a lattice line crossed by the chord `p → q`.
    fn crossings(&self, f: &FieldRealization, p: Vec2, q: Vec2, tol: f64) -> Option<usize> {
        let (o, h) = (self.lat.origin, self.lat.h);
        for axis in 0..2 {
            let (a, b, oa) = if axis == 0 { (p.x, q.x, o.x) } else { (p.y, q.y, o.y) };
            let (lo, hi) = (a.min(b), a.max(b));
            let first = ((lo - oa) / h).ceil() as i64;
            let last = ((hi - oa) / h).floor() as i64;
            for line in first..=last {
                let c = oa + line as f64 * h;
                if b == a {
                    continue;
                }
                let u = (c - a) / (b - a);
                let start = p + (q - p) * u;
                if let Some(z) = solve_on_line(f, start, axis, c, tol, h) {
                    if let Some(ci) = self.lookup(z) {
                        return Some(ci);
                    }
                }
            }
        }
        None
    }
}

/// Newton on `f` restricted to the line `coord[axis] = c`.
fn solve_on_line(f: &FieldRealization, start: Vec2, axis: usize, c: f64, tol: f64, h: f64) -> Option<Vec2> {
    let mut z = start;
    for _ in 0..30 {
        let (v, g) = f.value_grad(z);
        if v.abs() <= tol {
            return Some(z);
        }
        let d = if axis == 0 { g.y } else { g.x };
        if d == 0.0 {
            return None;
        }
        let step = v / d;
        z = if axis == 0 { Vec2::new(c, z.y - step) } else { Vec2::new(z.x - step, c) };
        if z.dist(start) > h {
            return None;
        }
    }
    None
}

fn wrap(lat: &Lattice, p: Vec2) -> Vec2 {
    if !lat.periodic {
        return p;
    }
    let o = lat.origin;
    Vec2::new(
        o.x + (p.x - o.x).rem_euclid(lat.side),
        o.y + (p.y - o.y).rem_euclid(lat.side),
    )
}

fn key(lat: &Lattice, p: Vec2) -> (i64, i64) {
    (
        ((p.x - lat.origin.x) / lat.h).floor() as i64,
        ((p.y - lat.origin.y) / lat.h).floor() as i64,
    )
}
