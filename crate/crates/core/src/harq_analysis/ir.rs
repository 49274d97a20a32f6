//! Distribution of accumulated mutual information under fast fading.
//!
//! With `V = log2(1 + Gamma)` and `Gamma` exponential, the density of one
//! round's MI is `ln2 2^v exp(-(2^v - 1)/avg) / avg`. Sums of `m` rounds are
//! built by repeated trapezoidal self-convolution on a uniform MI grid.

use std::f64::consts::LN_2;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::amc::TAIL_U;
use crate::coding::{mi, Decay, McsTable};
use crate::error::{Error, Result};

/// Default number of grid cells over `[0, I(TAIL_U * avg)]`.
pub const DEFAULT_GRID_CELLS: usize = 1 << 14;

/// Largest CDF change tolerated when the grid is halved.
pub const GRID_TOLERANCE: f64 = 1e-5;

/// PER values below this are treated as zero when summing tails.
const PER_FLOOR: f64 = 1e-18;

#[derive(Debug, Clone)]
pub struct IrConvolution {
    dv: f64,
    cells: usize,
    /// `weighted[m-1][j] = w_j p_m(j dv)` with trapezoid weights `w_j`.
    weighted: Vec<Vec<f64>>,
    /// `density[m-1][j] = p_m(j dv)`.
    density: Vec<Vec<f64>>,
    /// `prefix[m-1][j] = sum_{i<j} weighted[m-1][i]`.
    prefix: Vec<Vec<f64>>,
    /// Trapezoid CDF at the nodes.
    cdf: Vec<Vec<f64>>,
}

fn single_density(v: f64, avg_snr: f64) -> f64 {
    let e = (v * LN_2).exp_m1();
    (v * LN_2 - e / avg_snr).exp() * LN_2 / avg_snr
}

fn fft_convolve(planner: &mut FftPlanner<f64>, a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    let mut fa: Vec<Complex<f64>> = a.iter().map(|x| Complex::new(*x, 0.0)).collect();
    fa.resize(size, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|x| Complex::new(*x, 0.0)).collect();
    fb.resize(size, Complex::new(0.0, 0.0));
    let fwd = planner.plan_fft_forward(size);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    planner.plan_fft_inverse(size).process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.into_iter().take(out_len).map(|c| c.re * scale).collect()
}

fn trapezoid_weights(values: &[f64], dv: f64) -> Vec<f64> {
    let n = values.len();
    values
        .iter()
        .enumerate()
        .map(|(j, p)| if j == 0 || j + 1 == n { 0.5 * dv * p } else { dv * p })
        .collect()
}

impl IrConvolution {
    /// Builds densities of sums of `1..=max_terms` rounds and checks that
    /// halving the grid moves no CDF value by more than [`GRID_TOLERANCE`].
    pub fn build(avg_snr: f64, max_terms: usize, cells: usize) -> Result<Self> {
        let fine = Self::build_unchecked(avg_snr, max_terms, cells)?;
        if cells >= 4 {
            let coarse = Self::build_unchecked(avg_snr, max_terms, cells / 2)?;
            let mut change = 0.0f64;
            for (cf, cc) in fine.cdf.iter().zip(&coarse.cdf) {
                for (j, c) in cc.iter().enumerate() {
                    if let Some(f) = cf.get(2 * j) {
                        change = change.max((f - c).abs());
                    }
                }
            }
            if !(change <= GRID_TOLERANCE) {
                return Err(Error::GridResolution { change });
            }
        }
        Ok(fine)
    }

    fn build_unchecked(avg_snr: f64, max_terms: usize, cells: usize) -> Result<Self> {
        if !(avg_snr > 0.0) || cells < 2 {
            return Err(Error::Domain("invalid convolution grid".into()));
        }
        let v_max = mi(TAIL_U * avg_snr);
        let dv = v_max / cells as f64;
        let base: Vec<f64> = (0..=cells).map(|j| single_density(j as f64 * dv, avg_snr)).collect();
        let mut planner = FftPlanner::new();
        let mut density = vec![base.clone()];
        for _ in 1..max_terms.max(1) {
            let prev = density.last().expect("at least one density");
            let raw = fft_convolve(&mut planner, prev, &base);
            let next: Vec<f64> = raw
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let mut v = s - 0.5 * prev[0] * base.get(j).copied().unwrap_or(0.0);
                    v -= 0.5 * prev.get(j).copied().unwrap_or(0.0) * base[0];
                    (v * dv).max(0.0)
                })
                .collect();
            density.push(next);
        }
        let weighted: Vec<Vec<f64>> = density.iter().map(|d| trapezoid_weights(d, dv)).collect();
        let prefix = weighted
            .iter()
            .map(|w| {
                let mut acc = 0.0;
                let mut p = Vec::with_capacity(w.len() + 1);
                p.push(0.0);
                for x in w {
                    acc += x;
                    p.push(acc);
                }
                p
            })
            .collect();
        let cdf = density
            .iter()
            .map(|d| {
                let mut acc = 0.0;
                let mut c = Vec::with_capacity(d.len());
                c.push(0.0);
                for w in d.windows(2) {
                    acc += 0.5 * dv * (w[0] + w[1]);
                    c.push(acc);
                }
                c
            })
            .collect();
        Ok(Self {
            dv,
            cells,
            weighted,
            density,
            prefix,
            cdf,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.dv
    }

    /// Upper end of the single-round grid, `I(TAIL_U * avg)`.
    pub fn v_max(&self) -> f64 {
        self.dv * self.cells as f64
    }

    pub fn max_terms(&self) -> usize {
        self.density.len()
    }

    /// `P(V_1 + ... + V_m <= s)` with the density linear between nodes.
    pub fn cdf(&self, m: usize, s: f64) -> f64 {
        let d = &self.density[m - 1];
        let c = &self.cdf[m - 1];
        if s <= 0.0 {
            return 0.0;
        }
        let pos = s / self.dv;
        if pos >= (d.len() - 1) as f64 {
            return c[c.len() - 1].min(1.0);
        }
        let j = pos.floor() as usize;
        let t = s - j as f64 * self.dv;
        let v = c[j] + d[j] * t + (d[j + 1] - d[j]) * t * t / (2.0 * self.dv);
        v.min(1.0)
    }

    /// `E[PER_l(I^-1(y + S_m))]` for accumulated MI `y` of the first round.
    pub fn expected_per(&self, table: &McsTable, l: usize, m: usize, y: f64) -> f64 {
        let gap = table.rate(l) - y;
        if let Decay::Step = table.decay() {
            return self.cdf(m, gap);
        }
        let w = &self.weighted[m - 1];
        let start = if gap <= 0.0 {
            0
        } else {
            ((gap / self.dv).ceil() as usize).min(w.len())
        };
        let mut acc = self.prefix[m - 1][start];
        for (j, wj) in w.iter().enumerate().skip(start) {
            let per = table.per_at_mi(l, y + j as f64 * self.dv);
            if per < PER_FLOOR {
                break;
            }
            acc += wj * per;
        }
        acc.min(1.0)
    }

    /// `expected_per` at every grid node `y_i = i dv`, `i = 0..=cells`,
    /// computed as one FFT cross-correlation.
    pub fn expected_per_table(&self, table: &McsTable, l: usize, m: usize) -> Vec<f64> {
        let n = self.cells + 1;
        if let Decay::Step = table.decay() {
            return (0..n)
                .map(|i| self.cdf(m, table.rate(l) - i as f64 * self.dv))
                .collect();
        }
        let w = &self.weighted[m - 1];
        let per: Vec<f64> = (0..n + w.len() - 1)
            .map(|t| table.per_at_mi(l, t as f64 * self.dv))
            .collect();
        let reversed: Vec<f64> = w.iter().rev().copied().collect();
        let mut planner = FftPlanner::new();
        let corr = fft_convolve(&mut planner, &reversed, &per);
        let offset = w.len() - 1;
        (0..n).map(|i| corr[offset + i].clamp(0.0, 1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SnrStream;
    use crate::coding::inverse_mi;

    #[test]
    fn single_density_integrates_to_one() {
        for avg in [1e-3, 0.3, 10.0, 1e4] {
            let c = IrConvolution::build(avg, 3, DEFAULT_GRID_CELLS).unwrap();
            for m in 1..=3 {
                let total = c.cdf(m, f64::INFINITY);
                assert!((total - 1.0).abs() < 1e-5, "avg={avg} m={m} total={total}");
            }
        }
    }

    #[test]
    fn cdf_matches_closed_form_single_round() {
        let avg = 2.5;
        let c = IrConvolution::build(avg, 1, DEFAULT_GRID_CELLS).unwrap();
        for s in [0.1, 0.7, 1.5, 3.0] {
            let exact = -(-inverse_mi(s) / avg).exp_m1();
            assert!((c.cdf(1, s) - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn two_round_cdf_matches_monte_carlo() {
        let avg = 4.0;
        let c = IrConvolution::build(avg, 2, DEFAULT_GRID_CELLS).unwrap();
        let mut s = SnrStream::new(avg, 3, 0);
        let n = 400_000;
        let mut below = 0usize;
        let q = 4.0;
        for _ in 0..n {
            if mi(s.next_snr()) + mi(s.next_snr()) <= q {
                below += 1;
            }
        }
        let p = below as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((c.cdf(2, q) - p).abs() < 4.0 * sd);
    }

    #[test]
    fn table_agrees_with_direct_sum() {
        let table = McsTable::uniform(5, 0.75, Decay::Finite(4.0)).unwrap();
        let c = IrConvolution::build(3.0, 3, 4096).unwrap();
        for l in [0, 2, 4] {
            for m in 1..=3 {
                let tab = c.expected_per_table(&table, l, m);
                for i in (0..tab.len()).step_by(97) {
                    let direct = c.expected_per(&table, l, m, i as f64 * c.spacing());
                    assert!((tab[i] - direct).abs() < 1e-10, "l={l} m={m} i={i}");
                }
            }
        }
    }

    #[test]
    fn grid_halving_check_rejects_coarse_grids() {
        assert!(matches!(
            IrConvolution::build(1.0, 3, 8),
            Err(Error::GridResolution { .. })
        ));
    }
}
