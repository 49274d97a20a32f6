//! Cumulative integrals of the fast-fading per-MCS integrands on a log grid.
//!
//! For MCS `l`, `A_l(x) = int_0^x pdf R_l (1 - f_{K,l})` and
//! `B_l(x) = int_0^x pdf (1 + sum_{k<K} f_{k,l})`. A threshold vector then
//! gives `F = sum_l [A_l - lambda B_l]` between its thresholds, evaluated by
//! cubic Hermite interpolation with the integrand as the derivative.

use crate::amc::TAIL_U;
use crate::error::Result;
use crate::harq_analysis::FastCascade;

const POINTS_PER_DECADE: f64 = 200.0;

/// Five-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

#[derive(Debug, Clone)]
pub(crate) struct Cumulative {
    /// `c[i]` at node `i`.
    c: Vec<f64>,
    /// Integrand at the left and right end of cell `i`, taken inside the cell.
    d0: Vec<f64>,
    d1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct CumulativeTables {
    nodes: Vec<f64>,
    /// `reward[l]`, `rounds[l]`.
    reward: Vec<Cumulative>,
    rounds: Vec<Cumulative>,
}

impl CumulativeTables {
    pub(crate) fn build(cascade: &FastCascade) -> Result<Self> {
        let table = cascade.table();
        let avg = cascade.avg_snr();
        let k = cascade.max_rounds();
        let x_max = TAIL_U * avg;
        let x_min = 1e-4 * table.threshold(0).min(avg);
        let decades = (x_max / x_min).log10();
        let n = (decades * POINTS_PER_DECADE).ceil() as usize;
        let mut nodes: Vec<f64> = (0..=n)
            .map(|i| x_min * (x_max / x_min).powf(i as f64 / n as f64))
            .collect();
        nodes.push(0.0);
        nodes.extend(table.thresholds().iter().copied().filter(|t| *t < x_max));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let kinks = table.thresholds();

        let mut reward = Vec::with_capacity(table.len());
        let mut rounds = Vec::with_capacity(table.len());
        let mut buf = vec![0.0; k];
        for l in 0..table.len() {
            let rate = table.rate(l);
            let mut eval = |x: f64| -> Result<(f64, f64)> {
                cascade.fill(l, x, &mut buf)?;
                let w = (-x / avg).exp() / avg;
                let t = 1.0 + buf[..k - 1].iter().sum::<f64>();
                Ok((w * rate * (1.0 - buf[k - 1]), w * t))
            };
            let cells = nodes.len() - 1;
            let mut ra = Cumulative::with_capacity(cells);
            let mut rb = Cumulative::with_capacity(cells);
            let mut left = eval(nodes[0])?;
            for i in 0..cells {
                let (a, b) = (nodes[i], nodes[i + 1]);
                let right_node = if kinks.contains(&b) { b * (1.0 - 1e-15) } else { b };
                let right = eval(right_node)?;
                let (mut sa, mut sb) = (0.0, 0.0);
                let half = 0.5 * (b - a);
                for (gx, gw) in GL_X.iter().zip(GL_W) {
                    let (va, vb) = eval(a + half * (1.0 + gx))?;
                    sa += gw * va;
                    sb += gw * vb;
                }
                ra.push(half * sa, left.0, right.0);
                rb.push(half * sb, left.1, right.1);
                left = if kinks.contains(&b) { eval(b)? } else { right };
            }
            reward.push(ra);
            rounds.push(rb);
        }
        Ok(Self { nodes, reward, rounds })
    }

    pub(crate) fn x_max(&self) -> f64 {
        *self.nodes.last().expect("non-empty grid")
    }

    pub(crate) fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub(crate) fn len(&self) -> usize {
        self.reward.len()
    }

    /// `(A_l(x), B_l(x))`.
    #[inline]
    pub(crate) fn at(&self, l: usize, x: f64) -> (f64, f64) {
        let n = self.nodes.len();
        if x >= self.nodes[n - 1] {
            return (self.reward[l].c[n - 1], self.rounds[l].c[n - 1]);
        }
        if x <= 0.0 {
            return (0.0, 0.0);
        }
        let i = self.nodes.partition_point(|v| *v <= x) - 1;
        let h = self.nodes[i + 1] - self.nodes[i];
        let t = (x - self.nodes[i]) / h;
        (self.reward[l].eval(i, t, h), self.rounds[l].eval(i, t, h))
    }

    /// Exact cell increments `(A, B)` of cell `i`.
    pub(crate) fn cell(&self, l: usize, i: usize) -> (f64, f64) {
        let r = &self.reward[l].c;
        let b = &self.rounds[l].c;
        (r[i + 1] - r[i], b[i + 1] - b[i])
    }

    /// `F(gamma, lambda)` with `gamma[0] = 0` and the last region open.
    pub(crate) fn f_value(&self, gamma: &[f64], lambda: f64) -> f64 {
        let mut total = 0.0;
        for l in 0..gamma.len() {
            let hi = gamma.get(l + 1).copied().unwrap_or(f64::INFINITY);
            if hi <= gamma[l] {
                continue;
            }
            let (a1, b1) = self.at(l, hi);
            let (a0, b0) = self.at(l, gamma[l]);
            total += (a1 - a0) - lambda * (b1 - b0);
        }
        total
    }

    /// The part of `F` that depends on threshold `l >= 1` placed at `x`.
    #[inline]
    pub(crate) fn coordinate_value(&self, l: usize, x: f64, lambda: f64) -> f64 {
        let (a_lo, b_lo) = self.at(l - 1, x);
        let (a_hi, b_hi) = self.at(l, x);
        (a_lo - a_hi) - lambda * (b_lo - b_hi)
    }
}

impl Cumulative {
    fn with_capacity(cells: usize) -> Self {
        let mut c = Vec::with_capacity(cells + 1);
        c.push(0.0);
        Self {
            c,
            d0: Vec::with_capacity(cells),
            d1: Vec::with_capacity(cells),
        }
    }

    fn push(&mut self, increment: f64, d0: f64, d1: f64) {
        let last = *self.c.last().expect("starts at zero");
        self.c.push(last + increment);
        self.d0.push(d0);
        self.d1.push(d1);
    }

    #[inline]
    fn eval(&self, i: usize, t: f64, h: f64) -> f64 {
        // Hermite interpolation of the primitive; the cell integral is
        // matched exactly, the end slopes are the integrand values.
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.c[i] + h10 * h * self.d0[i] + h01 * self.c[i + 1] + h11 * h * self.d1[i]
    }
}
