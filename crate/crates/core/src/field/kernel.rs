//! Packed evaluation of trigonometric sums.
//!
//! Terms are stored structure-of-arrays and padded to a multiple of
//! [`LANES`] with zero amplitudes, so the inner loops run over fixed-width
//! chunks with lane-wise accumulators. The final horizontal sums happen in a
//! fixed order, which keeps results bit-identical between the AVX2 and the
//! baseline code paths (no floating-point contraction is enabled).

use std::f64::consts::TAU;

use crate::geom::{Sym2, Vec2};

pub(crate) const LANES: usize = 8;

const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52

// Taylor coefficients on |x| <= pi/4; truncation error below 1e-16.
const S3: f64 = -1.0 / 6.0;
const S5: f64 = 1.0 / 120.0;
const S7: f64 = -1.0 / 5040.0;
const S9: f64 = 1.0 / 362_880.0;
const S11: f64 = -1.0 / 39_916_800.0;
const S13: f64 = 1.0 / 6_227_020_800.0;
const S15: f64 = -1.0 / 1_307_674_368_000.0;
const S17: f64 = 1.0 / 355_687_428_096_000.0;
const C2: f64 = -0.5;
const C4: f64 = 1.0 / 24.0;
const C6: f64 = -1.0 / 720.0;
const C8: f64 = 1.0 / 40_320.0;
const C10: f64 = -1.0 / 3_628_800.0;
const C12: f64 = 1.0 / 479_001_600.0;
const C14: f64 = -1.0 / 87_178_291_200.0;
const C16: f64 = 1.0 / 20_922_789_888_000.0;

/// `(sin 2πt, cos 2πt)`, branch-free so that loops over it vectorize.
///
/// Valid for `|t| < 2^49`.
#[inline(always)]
pub fn sincos_turns(t: f64) -> (f64, f64) {
    let qm = t * 4.0 + ROUND_MAGIC;
    let q = qm - ROUND_MAGIC;
    let quadrant = qm.to_bits() & 3;
    let x = (t - q * 0.25) * TAU;
    let x2 = x * x;
    let s = x
        * (1.0
            + x2 * (S3
                + x2 * (S5
                    + x2 * (S7 + x2 * (S9 + x2 * (S11 + x2 * (S13 + x2 * (S15 + x2 * S17))))))));
    let c = 1.0
        + x2 * (C2
            + x2 * (C4
                + x2 * (C6 + x2 * (C8 + x2 * (C10 + x2 * (C12 + x2 * (C14 + x2 * C16)))))));
    // quadrant 0: (s, c), 1: (c, -s), 2: (-s, -c), 3: (-c, s)
    let swap = 0u64.wrapping_sub(quadrant & 1);
    let sb = s.to_bits();
    let cb = c.to_bits();
    let sin_bits = (sb & !swap) | (cb & swap);
    let cos_bits = (cb & !swap) | (sb & swap);
    let sin_sign = (quadrant & 2) << 62;
    let cos_sign = ((quadrant + 1) & 2) << 62;
    (
        f64::from_bits(sin_bits ^ sin_sign),
        f64::from_bits(cos_bits ^ cos_sign),
    )
}

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub gradient: Vec2,
    pub hessian: Sym2,
}

/// Structure-of-arrays copy of the terms of a realization, amplitudes
/// already multiplied by the realization's norm.
#[derive(Debug, Clone, Default)]
pub(crate) struct Packed {
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    pub ca: Vec<f64>,
    pub sa: Vec<f64>,
    pub len: usize,
}

impl Packed {
    pub fn new(terms: impl Iterator<Item = (Vec2, f64, f64)>) -> Self {
        let mut p = Packed::default();
        for (k, c, s) in terms {
            p.kx.push(k.x);
            p.ky.push(k.y);
            p.ca.push(c);
            p.sa.push(s);
        }
        p.len = p.kx.len();
        let padded = p.len.div_ceil(LANES).max(1) * LANES;
        for v in [&mut p.kx, &mut p.ky, &mut p.ca, &mut p.sa] {
            v.resize(padded, 0.0);
        }
        p
    }

    pub fn padded_len(&self) -> usize {
        self.kx.len()
    }

    #[inline]
    pub fn value(&self, x: Vec2) -> f64 {
        dispatch_accumulate::<0>(self, x)[0]
    }

    #[inline]
    pub fn value_grad(&self, x: Vec2) -> (f64, Vec2) {
        let a = dispatch_accumulate::<1>(self, x);
        (a[0], Vec2::new(TAU * a[1], TAU * a[2]))
    }

    #[inline]
    pub fn jet(&self, x: Vec2) -> Jet {
        let a = dispatch_accumulate::<2>(self, x);
        let t2 = TAU * TAU;
        Jet {
            value: a[0],
            gradient: Vec2::new(TAU * a[1], TAU * a[2]),
            hessian: Sym2 {
                xx: -t2 * a[3],
                xy: -t2 * a[4],
                yy: -t2 * a[5],
            },
        }
    }
}

#[inline(always)]
fn hsum(v: &[f64; LANES]) -> f64 {
    ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]))
}

/// Sums over terms; `ORDER` 0 = value, 1 = + gradient, 2 = + Hessian.
/// Returns `[Σv, Σk₁g, Σk₂g, Σk₁²v, Σk₁k₂v, Σk₂²v]` (without 2π factors).
#[inline(always)]
fn accumulate<const ORDER: u8>(p: &Packed, x: Vec2) -> [f64; 6] {
    let mut av = [0.0; LANES];
    let mut agx = [0.0; LANES];
    let mut agy = [0.0; LANES];
    let mut hxx = [0.0; LANES];
    let mut hxy = [0.0; LANES];
    let mut hyy = [0.0; LANES];
    let chunks = p.kx.len() / LANES;
    for ch in 0..chunks {
        let o = ch * LANES;
        let kx: &[f64; LANES] = p.kx[o..o + LANES].try_into().unwrap();
        let ky: &[f64; LANES] = p.ky[o..o + LANES].try_into().unwrap();
        let ca: &[f64; LANES] = p.ca[o..o + LANES].try_into().unwrap();
        let sa: &[f64; LANES] = p.sa[o..o + LANES].try_into().unwrap();
        for l in 0..LANES {
            let (s, c) = sincos_turns(kx[l] * x.x + ky[l] * x.y);
            let v = ca[l] * c + sa[l] * s;
            av[l] += v;
            if ORDER >= 1 {
                let g = sa[l] * c - ca[l] * s;
                agx[l] += kx[l] * g;
                agy[l] += ky[l] * g;
            }
            if ORDER >= 2 {
                hxx[l] += kx[l] * kx[l] * v;
                hxy[l] += kx[l] * ky[l] * v;
                hyy[l] += ky[l] * ky[l] * v;
            }
        }
    }
    [
        hsum(&av),
        hsum(&agx),
        hsum(&agy),
        hsum(&hxx),
        hsum(&hxy),
        hsum(&hyy),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Simd {
    Baseline,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn simd_level() -> Simd {
    static LEVEL: std::sync::OnceLock<Simd> = std::sync::OnceLock::new();
    *LEVEL.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            use std::arch::is_x86_feature_detected as has;
            if has!("avx512f") && has!("avx512dq") && has!("avx2") && has!("fma") {
                return Simd::Avx512;
            }
            if has!("avx2") && has!("fma") {
                return Simd::Avx2;
            }
        }
        Simd::Baseline
    })
}

/// Instantiates `$body` under each instruction-set tier and picks one at runtime.
macro_rules! simd_dispatch {
    ($name:ident $(<$g:ident : $gt:ty>)? ($($arg:ident : $ty:ty),*) -> $ret:ty => $body:ident) => {
        fn $name $(<const $g: $gt>)? ($($arg: $ty),*) -> $ret {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2,fma")]
                unsafe fn avx2 $(<const $g: $gt>)? ($($arg: $ty),*) -> $ret {
                    $body $(::<$g>)? ($($arg),*)
                }
                #[target_feature(enable = "avx2,fma,avx512f,avx512dq")]
                unsafe fn avx512 $(<const $g: $gt>)? ($($arg: $ty),*) -> $ret {
                    $body $(::<$g>)? ($($arg),*)
                }
                match simd_level() {
                    // SAFETY: the required CPU features were detected at runtime.
                    Simd::Avx512 => return unsafe { avx512 $(::<$g>)? ($($arg),*) },
                    // SAFETY: as above.
                    Simd::Avx2 => return unsafe { avx2 $(::<$g>)? ($($arg),*) },
                    Simd::Baseline => {}
                }
            }
            $body $(::<$g>)? ($($arg),*)
        }
    };
}

simd_dispatch!(dispatch_accumulate<ORDER: u8>(p: &Packed, x: Vec2) -> [f64; 6] => accumulate);

/// Which part of the running phasor `q = C e^{iθ}` a grid channel sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Part {
    Re,
    Im,
}

/// A linear functional of the terms evaluated on a grid: `Σ_t w_t · part(q_t)`.
#[derive(Debug, Clone)]
pub(crate) struct Channel {
    pub part: Part,
    pub weights: Vec<f64>,
}

impl Channel {
    /// The field value itself.
    pub fn value(p: &Packed) -> Self {
        let mut w = vec![0.0; p.padded_len()];
        w[..p.len].fill(1.0);
        Channel {
            part: Part::Re,
            weights: w,
        }
    }

    /// Directional derivative `d·∇f`.
    pub fn directional(p: &Packed, d: Vec2) -> Self {
        let weights = p
            .kx
            .iter()
            .zip(&p.ky)
            .map(|(&kx, &ky)| -TAU * (d.x * kx + d.y * ky))
            .collect();
        Channel {
            part: Part::Im,
            weights,
        }
    }

    /// Second derivative `∂_a ∂_b f`.
    pub fn second(p: &Packed, a: Vec2, b: Vec2) -> Self {
        let weights = p
            .kx
            .iter()
            .zip(&p.ky)
            .map(|(&kx, &ky)| -TAU * TAU * (a.x * kx + a.y * ky) * (b.x * kx + b.y * ky))
            .collect();
        Channel {
            part: Part::Re,
            weights,
        }
    }
}

/// Regular grid `origin + (i h, j h)`, `i < nx`, `j < ny`, with an optional
/// evaluated column range per row (points outside are left as NaN).
#[derive(Debug, Clone)]
pub(crate) struct GridSweep<'a> {
    pub origin: Vec2,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub rows: Option<&'a [(usize, usize)]>,
}

const RESYNC: usize = 256;

#[inline(always)]
fn sweep_impl(p: &Packed, g: &GridSweep<'_>, channels: &[Channel], out: &mut [Vec<f64>]) {
    let n = p.padded_len();
    let mut qr = vec![0.0; n];
    let mut qi = vec![0.0; n];
    let mut zr = vec![0.0; n];
    let mut zi = vec![0.0; n];
    for t in 0..n {
        let (s, c) = sincos_turns(p.kx[t] * g.h);
        zr[t] = c;
        zi[t] = s;
    }
    for j in 0..g.ny {
        let (lo, hi) = match g.rows {
            Some(r) => r[j],
            None => (0, g.nx),
        };
        let y = g.origin.y + j as f64 * g.h;
        for i in lo..hi {
            if (i - lo) % RESYNC == 0 {
                let x = g.origin.x + i as f64 * g.h;
                for t in 0..n {
                    let (s, c) = sincos_turns(p.kx[t] * x + p.ky[t] * y);
                    qr[t] = p.ca[t] * c + p.sa[t] * s;
                    qi[t] = p.ca[t] * s - p.sa[t] * c;
                }
            } else {
                for t in 0..n {
                    let r = qr[t] * zr[t] - qi[t] * zi[t];
                    let im = qr[t] * zi[t] + qi[t] * zr[t];
                    qr[t] = r;
                    qi[t] = im;
                }
            }
            let idx = j * g.nx + i;
            for (ch, o) in channels.iter().zip(out.iter_mut()) {
                let src = match ch.part {
                    Part::Re => &qr,
                    Part::Im => &qi,
                };
                let mut acc = [0.0; LANES];
                for (w, q) in ch.weights.chunks_exact(LANES).zip(src.chunks_exact(LANES)) {
                    for l in 0..LANES {
                        acc[l] += w[l] * q[l];
                    }
                }
                o[idx] = hsum(&acc);
            }
        }
    }
}

simd_dispatch!(dispatch_sweep(p: &Packed, g: &GridSweep<'_>, channels: &[Channel], out: &mut [Vec<f64>]) -> () => sweep_impl);

/// Evaluates every channel on the grid. Returns one row-major buffer per channel.
pub(crate) fn sweep(p: &Packed, g: &GridSweep<'_>, channels: &[Channel]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![f64::NAN; g.nx * g.ny]; channels.len()];
    dispatch_sweep(p, g, channels, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sincos_matches_libm() {
        let mut worst = 0.0f64;
        let mut t = -40.0;
        while t < 40.0 {
            let (s, c) = sincos_turns(t);
            let (es, ec) = (TAU * t).sin_cos();
            worst = worst.max((s - es).abs()).max((c - ec).abs());
            t += 0.000_731_3;
        }
        // reference itself carries the rounding of TAU * t
        assert!(worst < 1e-13, "worst {worst}");
        for q in -8..8 {
            let (s, c) = sincos_turns(q as f64 * 0.25);
            let (es, ec) = (TAU * q as f64 * 0.25).sin_cos();
            assert!((s - es).abs() < 1e-15 && (c - ec).abs() < 1e-15);
        }
    }

    #[test]
    fn sweep_matches_pointwise() {
        let p = Packed::new(
            [
                (Vec2::new(0.3, -0.9), 0.7, -0.2),
                (Vec2::new(-0.8, 0.1), 0.1, 0.5),
                (Vec2::new(0.05, 0.99), -0.4, 0.3),
            ]
            .into_iter(),
        );
        let g = GridSweep {
            origin: Vec2::new(-3.0, -2.0),
            h: 0.05,
            nx: 700,
            ny: 3,
            rows: None,
        };
        let d = Vec2::new(0.6, 0.8);
        let out = sweep(&p, &g, &[Channel::value(&p), Channel::directional(&p, d)]);
        for j in 0..g.ny {
            for i in (0..g.nx).step_by(37) {
                let x = g.origin + Vec2::new(i as f64 * g.h, j as f64 * g.h);
                let (v, gr) = p.value_grad(x);
                assert!((out[0][j * g.nx + i] - v).abs() < 1e-12);
                assert!((out[1][j * g.nx + i] - d.dot(gr)).abs() < 1e-11);
            }
        }
    }
}
