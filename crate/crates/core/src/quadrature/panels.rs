//! Piecewise Chebyshev–Lobatto representation on `s = ln(y/K)`.
//!
//! Each panel stores a function at `NODES` Lobatto points. Indefinite
//! integrals are taken exactly for the panel interpolant through a
//! precomputed spectral integration matrix, which gives cumulative integrals
//! at every node. That is what the nested recursion needs: the inner tail
//! integral at every outer node and the previous level at every inner node,
//! without interpolating between levels.

use std::sync::OnceLock;

pub(crate) const NODES: usize = 17;

struct Basis {
    /// Lobatto nodes on [-1, 1], ascending.
    x: [f64; NODES],
    bary: [f64; NODES],
    /// integ[i][j] = ∫_{-1}^{x_i} ℓ_j
    integ: [[f64; NODES]; NODES],
    /// Values → Chebyshev coefficients.
    to_coeffs: [[f64; NODES]; NODES],
}

fn basis() -> &'static Basis {
    static BASIS: OnceLock<Basis> = OnceLock::new();
    BASIS.get_or_init(build_basis)
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn build_basis() -> Basis {
    let m = NODES - 1;
    let mut x = [0.0; NODES];
    let mut bary = [0.0; NODES];
    for j in 0..NODES {
        x[j] = -(std::f64::consts::PI * j as f64 / m as f64).cos();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        bary[j] = if j == 0 || j == m { 0.5 * sign } else { sign };
    }
    x[0] = -1.0;
    x[m] = 1.0;

    let (gx, gw) = gauss_legendre(NODES);
    let mut integ = [[0.0; NODES]; NODES];
    for i in 1..NODES {
        let half = 0.5 * (x[i] + 1.0);
        for (t, w) in gx.iter().zip(&gw) {
            let u = -1.0 + half * (t + 1.0);
            let l = lagrange_all(&x, &bary, u);
            for j in 0..NODES {
                integ[i][j] += half * w * l[j];
            }
        }
    }

    // T_k(x_j) with x_j = -cos(jπ/m): T_k(x_j) = (-1)^k cos(kjπ/m)
    let mut to_coeffs = [[0.0; NODES]; NODES];
    for k in 0..NODES {
        for j in 0..NODES {
            let end = if j == 0 || j == m { 0.5 } else { 1.0 };
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let t = sign * (std::f64::consts::PI * (k * j) as f64 / m as f64).cos();
            let scale = if k == 0 || k == m { 1.0 / m as f64 } else { 2.0 / m as f64 };
            to_coeffs[k][j] = scale * end * t;
        }
    }
    Basis {
        x,
        bary,
        integ,
        to_coeffs,
    }
}

fn lagrange_all(x: &[f64; NODES], bary: &[f64; NODES], u: f64) -> [f64; NODES] {
    let mut out = [0.0; NODES];
    for j in 0..NODES {
        if u == x[j] {
            out[j] = 1.0;
            return out;
        }
    }
    let mut denom = 0.0;
    for j in 0..NODES {
        out[j] = bary[j] / (u - x[j]);
        denom += out[j];
    }
    for v in out.iter_mut() {
        *v /= denom;
    }
    out
}

/// Partition of `[0, S]` in `s` into panels.
#[derive(Debug, Clone)]
pub(crate) struct PanelGrid {
    pub ln_k: f64,
    pub breaks: Vec<f64>,
}

impl PanelGrid {
    pub fn uniform(ln_k: f64, top: f64, width: f64, extra_breaks: &[f64]) -> Self {
        let n = ((top / width).ceil() as usize).max(1);
        let mut breaks: Vec<f64> = (0..=n).map(|i| top * i as f64 / n as f64).collect();
        breaks.extend(extra_breaks.iter().copied().filter(|b| *b > 0.0 && *b < top));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        Self { ln_k, breaks }
    }

    pub fn panels(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn top(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn node_s(&self, p: usize, j: usize) -> f64 {
        let (a, b) = (self.breaks[p], self.breaks[p + 1]);
        if j == 0 {
            a
        } else if j == NODES - 1 {
            b
        } else {
            0.5 * (a + b) + 0.5 * (b - a) * basis().x[j]
        }
    }

    /// Evaluate `f(s)` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> PanelValues {
        let values = (0..self.panels())
            .map(|p| {
                let mut v = [0.0; NODES];
                for (j, slot) in v.iter_mut().enumerate() {
                    *slot = f(self.node_s(p, j));
                }
                v
            })
            .collect();
        PanelValues { values }
    }

    /// Bisect every panel where any probe is not resolved to `tol` relative
    /// to its panel maximum, up to `max_depth` rounds. Probes return the
    /// logarithm of the function so that huge dynamic ranges stay finite.
    pub fn refine(mut self, log_probes: &[&dyn Fn(f64) -> f64], tol: f64, max_depth: u32) -> Self {
        for _ in 0..max_depth {
            let mut next = vec![self.breaks[0]];
            let mut changed = false;
            for p in 0..self.panels() {
                let (a, b) = (self.breaks[p], self.breaks[p + 1]);
                let unresolved = log_probes.iter().any(|f| {
                    let mut v = [0.0; NODES];
                    for (j, slot) in v.iter_mut().enumerate() {
                        *slot = f(self.node_s(p, j));
                    }
                    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if top == f64::NEG_INFINITY {
                        return false;
                    }
                    for slot in v.iter_mut() {
                        *slot = (*slot - top).exp();
                    }
                    tail_ratio(&v) > tol
                });
                if unresolved && b - a > 1e-6 {
                    next.push(0.5 * (a + b));
                    changed = true;
                }
                next.push(b);
            }
            self.breaks = next;
            if !changed {
                break;
            }
        }
        self
    }

    pub fn bisected(&self) -> Self {
        let mut breaks = Vec::with_capacity(2 * self.breaks.len());
        breaks.push(self.breaks[0]);
        for w in self.breaks.windows(2) {
            breaks.push(0.5 * (w[0] + w[1]));
            breaks.push(w[1]);
        }
        Self {
            ln_k: self.ln_k,
            breaks,
        }
    }

    /// Panel index and local coordinate in [-1, 1] for `s`, clamped.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.top());
        let p = match self.breaks.binary_search_by(|b| b.total_cmp(&s)) {
            Ok(i) => i.min(self.panels() - 1),
            Err(i) => (i - 1).min(self.panels() - 1),
        };
        let (a, b) = (self.breaks[p], self.breaks[p + 1]);
        let u = ((2.0 * s - a - b) / (b - a)).clamp(-1.0, 1.0);
        (p, u)
    }
}

/// Ratio of the two highest Chebyshev coefficients to the largest one.
fn tail_ratio(v: &[f64; NODES]) -> f64 {
    let c = coefficients(v);
    let top = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 || !top.is_finite() {
        return if top == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (c[NODES - 1].abs() + c[NODES - 2].abs()) / top
}

fn coefficients(v: &[f64; NODES]) -> [f64; NODES] {
    let b = basis();
    let mut c = [0.0; NODES];
    for k in 0..NODES {
        c[k] = (0..NODES).map(|j| b.to_coeffs[k][j] * v[j]).sum();
    }
    c
}

#[derive(Debug, Clone)]
pub(crate) struct PanelValues {
    pub values: Vec<[f64; NODES]>,
}

impl PanelValues {
    /// `∫_0^s f` at every node.
    pub fn cumulative_forward(&self, grid: &PanelGrid) -> PanelValues {
        let b = basis();
        let mut acc = 0.0;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(p, f)| {
                let half = 0.5 * (grid.breaks[p + 1] - grid.breaks[p]);
                let mut out = [0.0; NODES];
                for i in 0..NODES {
                    let s: f64 = (0..NODES).map(|j| b.integ[i][j] * f[j]).sum();
                    out[i] = acc + half * s;
                }
                acc = out[NODES - 1];
                out
            })
            .collect();
        PanelValues { values }
    }

    /// `∫_s^S f + tail` at every node.
    pub fn cumulative_backward(&self, grid: &PanelGrid, tail: f64) -> PanelValues {
        let b = basis();
        let mut acc = tail;
        let mut values = vec![[0.0; NODES]; self.values.len()];
        for p in (0..self.values.len()).rev() {
            let f = &self.values[p];
            let half = 0.5 * (grid.breaks[p + 1] - grid.breaks[p]);
            let partial: Vec<f64> = (0..NODES)
                .map(|i| half * (0..NODES).map(|j| b.integ[i][j] * f[j]).sum::<f64>())
                .collect();
            let total = partial[NODES - 1];
            for i in 0..NODES {
                values[p][i] = acc + (total - partial[i]);
            }
            acc = values[p][0];
        }
        PanelValues { values }
    }

    pub fn map(&self, grid: &PanelGrid, f: impl Fn(f64, f64) -> f64) -> PanelValues {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(p, v)| {
                let mut out = [0.0; NODES];
                for j in 0..NODES {
                    out[j] = f(grid.node_s(p, j), v[j]);
                }
                out
            })
            .collect();
        PanelValues { values }
    }

    pub fn first(&self) -> f64 {
        self.values[0][0]
    }

    pub fn last(&self) -> f64 {
        self.values.last().unwrap()[NODES - 1]
    }

    pub fn eval(&self, grid: &PanelGrid, s: f64) -> f64 {
        let (p, u) = grid.locate(s);
        let b = basis();
        let l = lagrange_all(&b.x, &b.bary, u);
        (0..NODES).map(|j| l[j] * self.values[p][j]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(9);
        let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(16)).sum();
        assert!((approx - 2.0 / 17.0).abs() < 1e-14);
    }

    #[test]
    fn forward_and_backward_integrals_of_exponential() {
        let grid = PanelGrid::uniform(0.0, 10.0, 0.5, &[]);
        let f = grid.sample(|s| (-1.5 * s).exp());
        let fwd = f.cumulative_forward(&grid);
        let bwd = f.cumulative_backward(&grid, 0.0);
        for s in [0.0f64, 0.37, 2.0, 7.91, 10.0] {
            let exact = (1.0 - (-1.5 * s).exp()) / 1.5;
            assert!((fwd.eval(&grid, s) - exact).abs() < 1e-14);
            let rest = ((-1.5 * s).exp() - (-15.0f64).exp()) / 1.5;
            assert!((bwd.eval(&grid, s) - rest).abs() < 1e-14);
        }
    }

    #[test]
    fn refinement_splits_unresolved_panels() {
        let grid = PanelGrid::uniform(0.0, 4.0, 4.0, &[]);
        let sharp = |s: f64| (-(s - 1.0).powi(2) * 400.0).exp();
        let log_sharp = |s: f64| -(s - 1.0).powi(2) * 400.0;
        let refined = grid.refine(&[&log_sharp], 1e-10, 12);
        assert!(refined.panels() > 4);
        let f = refined.sample(sharp);
        let total = f.cumulative_forward(&refined).last();
        let exact = (std::f64::consts::PI / 400.0).sqrt();
        assert!((total - exact).abs() < 1e-10);
    }
}
