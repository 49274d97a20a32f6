//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Integrands are vector valued so that several related integrals sharing
//! expensive work (e.g. an error cascade `f_1..f_K` at one SNR) are refined
//! together. The error of a segment is the max-norm of `|K15 - G7|`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Stopping rule: stop once the summed error estimate is below
/// `max(abs, rel * max_i |I_i|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Tolerance {
    pub const fn absolute(abs: f64) -> Self {
        Self {
            abs,
            rel: 0.0,
            max_segments: 4000,
        }
    }

    pub const fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_segments: 4000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-10)
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F>(f: &mut F, dim: usize, a: f64, b: f64, buf: &mut [f64]) -> Segment
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut k15 = vec![0.0; dim];
    let mut g7 = vec![0.0; dim];

    f(center, buf);
    for i in 0..dim {
        k15[i] += WGK[7] * buf[i];
        g7[i] += WG[3] * buf[i];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        f(center - dx, buf);
        let left = buf.to_vec();
        f(center + dx, buf);
        for i in 0..dim {
            let pair = left[i] + buf[i];
            k15[i] += WGK[j] * pair;
            if j % 2 == 1 {
                g7[i] += WG[j / 2] * pair;
            }
        }
    }
    let mut error = 0.0f64;
    for i in 0..dim {
        k15[i] *= half;
        g7[i] *= half;
        error = error.max((k15[i] - g7[i]).abs());
    }
    Segment {
        a,
        b,
        value: k15,
        error,
    }
}

/// Integrates a vector-valued function over the union of consecutive
/// `breakpoints` pieces. Breakpoints must be non-decreasing; empty pieces
/// are skipped.
pub fn integrate_pieces<F>(mut f: F, dim: usize, breakpoints: &[f64], tol: Tolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(&mut f, dim, w[0], w[1], &mut buf));
        }
    }
    if heap.is_empty() {
        return Ok(vec![0.0; dim]);
    }

    loop {
        let mut total = vec![0.0; dim];
        let mut error = 0.0;
        for seg in heap.iter() {
            error += seg.error;
            for (t, v) in total.iter_mut().zip(&seg.value) {
                *t += v;
            }
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = tol.abs.max(tol.rel * scale);
        if error <= target {
            return Ok(total);
        }

        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        let too_narrow = !(mid > worst.a && mid < worst.b)
            || (worst.b - worst.a) <= 64.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs());
        if too_narrow || heap.len() + 2 > tol.max_segments {
            // Accept a small residual caused by rounding, refuse anything else.
            if error <= 100.0 * target.max(1e-15 * scale) {
                heap.push(worst);
                let mut total = vec![0.0; dim];
                for seg in heap.iter() {
                    for (t, v) in total.iter_mut().zip(&seg.value) {
                        *t += v;
                    }
                }
                return Ok(total);
            }
            return Err(Error::QuadratureNonConvergence {
                a: worst.a,
                b: worst.b,
                estimate: error,
            });
        }
        heap.push(kronrod(&mut f, dim, worst.a, mid, &mut buf));
        heap.push(kronrod(&mut f, dim, mid, worst.b, &mut buf));
    }
}

/// Scalar convenience wrapper around [`integrate_pieces`].
pub fn integrate<F>(mut f: F, breakpoints: &[f64], tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let v = integrate_pieces(|x, out: &mut [f64]| out[0] = f(x), 1, breakpoints, tol)?;
    Ok(v[0])
}

/// Sorts, deduplicates and clips candidate breakpoints to `[lo, hi]`,
/// always including both ends.
pub(crate) fn breakpoints_within(lo: f64, hi: f64, candidates: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = candidates
        .into_iter()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}
