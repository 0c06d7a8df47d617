//! Deterministic quadrature for the reflected radial process on `[K, ∞)`.
//!
//! Two quantities are computed here:
//!
//! - the invariant density `C(K) exp(-2 V̄(y))` and its moments, with
//!   `C(K)⁻¹ = ∫_K^∞ exp(-2 V̄)`;
//! - the hitting-time moments `v^q(ξ) = E_ξ γ^q`, `γ = inf{t : y_t ≤ K}`,
//!   through the recursion
//!
//!   ```text
//!   v^q(ξ) = 2q ∫_K^ξ exp(2V̄(y₁)) ∫_{y₁}^∞ v^{q-1}(y₂) exp(-2V̄(y₂)) dy₂ dy₁,   v^0 ≡ 1.
//!   ```
//!
//! All integrals run in `s = ln(y/K)`, where the power-law integrands become
//! exponentials. Improper integrals are truncated at `N = K e^S`, with `N`
//! picked from the growth envelope `v^{q-1}(y) ≤ C y^{2(q-1)(1+p1-p2)}` and
//! the decay `exp(-2V̄(y)) ≤ y^{-2 p2}` so that the dropped tail is at most
//! `tail_eps` of the retained integral. The local power-law estimate of the
//! dropped tail is added back.

mod gauss_kronrod;
mod panels;

use std::sync::Arc;

use thiserror::Error;

use crate::potential::{FamilyParams, PotentialError, PotentialSpec};
pub use gauss_kronrod::{integrate, Integral};
use panels::{PanelGrid, PanelValues};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("{what} diverges: integrand tail exponent {exponent} >= -1")]
    Divergent { what: String, exponent: f64 },
    #[error("invalid quadrature config: {0}")]
    Config(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Relative tail mass that truncation may drop.
    pub tail_eps: f64,
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            tail_eps: 1e-10,
            max_depth: 50,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), QuadError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(positive(self.rel_tol) && positive(self.abs_tol) && positive(self.tail_eps)) {
            return Err(QuadError::Config("tolerances must be positive".into()));
        }
        if self.max_depth < 10 {
            return Err(QuadError::Config(format!(
                "max_depth must be at least 10, got {}",
                self.max_depth
            )));
        }
        Ok(())
    }
}

/// Integer moments `E γ^q` are finite exactly for `q < q₀`.
pub fn critical_exponent(p1: f64, p2: f64) -> Result<f64, QuadError> {
    if !(p2 > 0.5 && p2 <= p1 && p1.is_finite()) {
        return Err(PotentialError::GrowthOrder { p1, p2 }.into());
    }
    Ok(1.0 + (2.0 * p2 - 1.0) / (2.0 * (1.0 + p1 - p2)))
}

/// Exponent of the inner integrand `v^{q-1}(y) exp(-2V̄(y))` at infinity
/// under the worst-case envelope. Level `q` converges iff this is `< -1`.
pub fn inner_tail_exponent(p1: f64, p2: f64, q: u32) -> f64 {
    2.0 * (q as f64 - 1.0) * (1.0 + p1 - p2) - 2.0 * p2
}

/// Growth exponent of the envelope `v^q(ξ) ≤ C_q ξ^{2q(1+p1-p2)}`.
pub fn growth_exponent(p1: f64, p2: f64, q: u32) -> f64 {
    2.0 * q as f64 * (1.0 + p1 - p2)
}

// ln y and V̄ at s = ln(y/K)
fn log_weight(spec: &PotentialSpec, ln_k: f64, s: f64) -> (f64, f64) {
    let l = ln_k + s;
    (l, spec.vbar_log(l))
}

/// Start of the region where the sandwich bounds are asserted, in `s`.
fn sandwich_start(spec: &PotentialSpec) -> f64 {
    (spec.xi0().max(1.0) / spec.anchor()).ln().max(0.0)
}

fn table_breaks(spec: &PotentialSpec) -> Vec<f64> {
    match spec.params() {
        FamilyParams::Tabulated { table } => {
            let ln_k = spec.anchor().ln();
            table
                .interpolant()
                .nodes()
                .map(|(x, _)| x.ln() - ln_k)
                .filter(|s| *s > 0.0)
                .collect()
        }
        _ => Vec::new(),
    }
}

/// `∫_K^∞ y^m exp(-2V̄(y)) dy` by adaptive Gauss–Kronrod with tail
/// truncation.
pub fn weighted_tail_integral(
    spec: &PotentialSpec,
    m: f64,
    cfg: &QuadratureConfig,
) -> Result<Integral, QuadError> {
    cfg.validate()?;
    let p2 = spec.p2();
    let exponent = m - 2.0 * p2;
    if exponent >= -1.0 {
        return Err(QuadError::Divergent {
            what: format!("integral of y^{m} exp(-2 V̄)"),
            exponent,
        });
    }
    let gap = -1.0 - exponent;
    let ln_k = spec.anchor().ln();
    let f = |s: f64| {
        let (l, vb) = log_weight(spec, ln_k, s);
        ((m + 1.0) * l - 2.0 * vb).exp()
    };
    // ∫_N^∞ y^{m - 2p2} dy in log form
    let log_tail = |s: f64| (m + 1.0 - 2.0 * p2) * (ln_k + s) - gap.ln();

    let mut top = sandwich_start(spec) + 4.0;
    let first = integrate(f, 0.0, top, cfg.rel_tol, cfg.abs_tol, cfg.max_depth);
    let (mut value, mut error, mut converged) = (first.value, first.error, first.converged);
    const S_LIMIT: f64 = 1e5;
    loop {
        let lt = log_tail(top);
        let target = (cfg.tail_eps * value).ln();
        if lt <= target {
            break;
        }
        if top >= S_LIMIT {
            // dropped mass cannot be made small enough; add the envelope tail
            let tail = lt.exp();
            value += tail;
            error += tail;
            break;
        }
        // solve log_tail(S') = target, at least one unit further out
        let next = ((target + gap.ln()) / (m + 1.0 - 2.0 * p2) - ln_k)
            .max(top + 1.0)
            .min(S_LIMIT);
        let piece = integrate(f, top, next, cfg.rel_tol, cfg.abs_tol, cfg.max_depth);
        value += piece.value;
        error += piece.error;
        converged &= piece.converged;
        top = next;
    }
    Ok(Integral {
        value,
        error,
        converged,
    })
}

/// `C(K) = (∫_K^∞ exp(-2V̄))⁻¹`.
pub fn normalizing_constant(spec: &PotentialSpec, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
    Ok(1.0 / weighted_tail_integral(spec, 0.0, cfg)?.value)
}

/// `m`-th moment of the invariant density; divergent for `m ≥ 2 p2 - 1`.
pub fn stationary_moment(spec: &PotentialSpec, m: f64, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
    if !(m >= 0.0) {
        return Err(QuadError::Domain(format!("moment order must be >= 0, got {m}")));
    }
    if m == 0.0 {
        return Ok(1.0);
    }
    let num = weighted_tail_integral(spec, m, cfg)?.value;
    let den = weighted_tail_integral(spec, 0.0, cfg)?.value;
    Ok(num / den)
}

/// Invariant law of the reflected radial process on `[K, ∞)`.
#[derive(Debug, Clone)]
pub struct InvariantDensity {
    spec: PotentialSpec,
    normalizer: f64,
    grid: Arc<PanelGrid>,
    /// `∫_s^∞ exp(-2V̄) y ds` at every node.
    survival: PanelValues,
    decay_gap: f64,
}

impl InvariantDensity {
    pub fn new(spec: &PotentialSpec, cfg: &QuadratureConfig) -> Result<Self, QuadError> {
        let normalizer = normalizing_constant(spec, cfg)?;
        let ln_k = spec.anchor().ln();
        let gap = 2.0 * spec.p2() - 1.0;
        let log_w = |s: f64| {
            let (l, vb) = log_weight(spec, ln_k, s);
            l - 2.0 * vb
        };
        let mut top = sandwich_start(spec) + (1.0 / cfg.tail_eps).ln() / gap + 2.0;
        // keep exp(-2V̄) y representable
        let cap = 600.0 / (2.0 * spec.p1() + 1.0) - ln_k;
        top = top.min(cap.max(sandwich_start(spec) + 2.0));
        let grid = PanelGrid::uniform(ln_k, top, 0.5, &table_breaks(spec)).refine(
            &[&log_w],
            cfg.rel_tol * 1e-2,
            cfg.max_depth,
        );
        let integrand = grid.sample(|s| log_w(s).exp());
        let tail = log_w(grid.top()).exp() / gap;
        let survival = integrand.cumulative_backward(&grid, tail);
        Ok(Self {
            spec: spec.clone(),
            normalizer,
            grid: Arc::new(grid),
            survival,
            decay_gap: gap,
        })
    }

    pub fn anchor(&self) -> f64 {
        self.spec.anchor()
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn density(&self, y: f64) -> f64 {
        if y < self.anchor() {
            return 0.0;
        }
        self.normalizer * (-2.0 * self.spec.vbar_log(y.ln())).exp()
    }

    /// `P(Y > y)`.
    pub fn survival(&self, y: f64) -> f64 {
        if y <= self.anchor() {
            return 1.0;
        }
        let s = (y / self.anchor()).ln();
        let raw = if s <= self.grid.top() {
            self.survival.eval(&self.grid, s)
        } else {
            let l = y.ln();
            (l - 2.0 * self.spec.vbar_log(l)).exp() / self.decay_gap
        };
        (self.normalizer * raw).clamp(0.0, 1.0)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        1.0 - self.survival(y)
    }

    /// Probability of `[a, b)`; `b = ∞` allowed.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        (self.survival(a) - self.survival(b)).max(0.0)
    }

    /// Integral of the density over `[K, ∞)` through the panel route,
    /// independent of the Gauss–Kronrod normalizer.
    pub fn total_mass(&self) -> f64 {
        self.normalizer * self.survival.first()
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let target = 1.0 - u.clamp(0.0, 1.0);
        if target >= 1.0 {
            return self.anchor();
        }
        if target <= 0.0 {
            return f64::INFINITY;
        }
        // survival is decreasing in s; bracket then bisect
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let at = |s: f64| self.survival(self.anchor() * s.exp());
        while at(hi) > target && hi < 1e4 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * hi.max(1.0) {
                break;
            }
        }
        self.anchor() * (0.5 * (lo + hi)).exp()
    }

    /// `(2 p2 - 1) K^{2 p2 - 1}`, valid once `K` is inside the sandwich
    /// region.
    pub fn normalizer_bound(&self) -> Option<f64> {
        let k = self.anchor();
        (k >= self.spec.xi0().max(1.0)).then(|| {
            let e = 2.0 * self.spec.p2() - 1.0;
            e * k.powf(e)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VqStatus {
    Converged,
    Divergent,
}

impl VqStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VqStatus::Converged => "Converged",
            VqStatus::Divergent => "Divergent",
        }
    }
}

#[derive(Debug)]
struct LevelCurve {
    grid: Arc<PanelGrid>,
    values: PanelValues,
    anchor: f64,
}

impl LevelCurve {
    fn eval(&self, y: f64) -> Option<f64> {
        let s = (y / self.anchor).ln();
        (s >= -1e-12 && s <= self.grid.top() + 1e-12).then(|| self.values.eval(&self.grid, s.max(0.0)))
    }
}

/// One level `v^q` of the hitting-time moment recursion.
#[derive(Debug, Clone)]
pub struct VqTable {
    pub q: u32,
    pub xi_grid: Vec<f64>,
    /// Empty when the level is divergent.
    pub values: Vec<f64>,
    pub error_estimate: Vec<f64>,
    pub status: VqStatus,
    pub q0: f64,
    /// Envelope exponent of the inner integrand at infinity.
    pub tail_exponent: f64,
    curve: Option<Arc<LevelCurve>>,
}

impl VqTable {
    /// `v^0 ≡ 1`.
    pub fn level_zero(xi_grid: &[f64], q0: f64) -> Self {
        Self {
            q: 0,
            xi_grid: xi_grid.to_vec(),
            values: vec![1.0; xi_grid.len()],
            error_estimate: vec![0.0; xi_grid.len()],
            status: VqStatus::Converged,
            q0,
            tail_exponent: f64::NEG_INFINITY,
            curve: None,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status == VqStatus::Converged
    }

    /// `v^q(y)` anywhere on the internal quadrature range, not just the grid.
    pub fn eval(&self, y: f64) -> Option<f64> {
        if self.q == 0 {
            return Some(1.0);
        }
        self.curve.as_ref()?.eval(y)
    }

    /// Upper end of the range where [`VqTable::eval`] is defined.
    pub fn eval_limit(&self) -> Option<f64> {
        let c = self.curve.as_ref()?;
        Some(c.anchor * c.grid.top().exp())
    }
}

fn check_grid(spec: &PotentialSpec, xi_grid: &[f64]) -> Result<(), QuadError> {
    if xi_grid.is_empty() {
        return Err(QuadError::Grid("empty grid".into()));
    }
    if let Some(i) = (1..xi_grid.len()).find(|&i| !(xi_grid[i] > xi_grid[i - 1])) {
        return Err(QuadError::Grid(format!("not strictly increasing at index {i}")));
    }
    if !(xi_grid[0] >= spec.anchor()) || !xi_grid.last().unwrap().is_finite() {
        return Err(QuadError::Grid(format!(
            "grid must lie in [K = {}, inf)",
            spec.anchor()
        )));
    }
    Ok(())
}

/// Tables for `v^1 … v^{q_max}`. Levels with `q ≥ q₀` come back with
/// status `Divergent` and no values; higher levels are not attempted.
pub fn vq_levels(
    spec: &PotentialSpec,
    q_max: u32,
    xi_grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<VqTable>, QuadError> {
    cfg.validate()?;
    if q_max == 0 {
        return Err(QuadError::Domain("q must be at least 1".into()));
    }
    check_grid(spec, xi_grid)?;
    let (p1, p2) = (spec.p1(), spec.p2());
    let q0 = critical_exponent(p1, p2)?;
    let converged = (1..=q_max)
        .take_while(|&q| inner_tail_exponent(p1, p2, q) < -1.0)
        .count() as u32;

    let mut tables = Vec::with_capacity(q_max as usize);
    if converged > 0 {
        let (fine, coarse, rel_tails, grid) = solve_levels(spec, converged, xi_grid, cfg)?;
        let grid = Arc::new(grid);
        let mut rel_tail_sum = 0.0;
        for q in 1..=converged {
            let i = (q - 1) as usize;
            rel_tail_sum += rel_tails[i];
            let k = spec.anchor();
            let mut values = Vec::with_capacity(xi_grid.len());
            let mut errors = Vec::with_capacity(xi_grid.len());
            let mut running = 0.0f64;
            for &xi in xi_grid {
                let s = (xi / k).ln();
                let v_f = fine[i].eval(&grid.fine, s);
                let v_c = coarse[i].eval(&grid.coarse, s);
                // rounding-level dips below the running maximum are clipped
                running = running.max(v_f).max(0.0);
                values.push(running);
                errors.push((v_f - v_c).abs() + running * rel_tail_sum + 4.0 * f64::EPSILON * running);
            }
            tables.push(VqTable {
                q,
                xi_grid: xi_grid.to_vec(),
                values,
                error_estimate: errors,
                status: VqStatus::Converged,
                q0,
                tail_exponent: inner_tail_exponent(p1, p2, q),
                curve: Some(Arc::new(LevelCurve {
                    grid: Arc::new(grid.fine.clone()),
                    values: fine[i].clone(),
                    anchor: k,
                })),
            });
        }
    }
    for q in converged + 1..=q_max {
        tables.push(VqTable {
            q,
            xi_grid: xi_grid.to_vec(),
            values: Vec::new(),
            error_estimate: Vec::new(),
            status: VqStatus::Divergent,
            q0,
            tail_exponent: inner_tail_exponent(p1, p2, q),
            curve: None,
        });
    }
    Ok(tables)
}

/// Level `v^q`; see [`vq_levels`].
pub fn v_q(
    spec: &PotentialSpec,
    q: u32,
    xi_grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<VqTable, QuadError> {
    Ok(vq_levels(spec, q, xi_grid, cfg)?.pop().expect("q >= 1"))
}

struct GridPair {
    fine: PanelGrid,
    coarse: PanelGrid,
}

type Levels = (Vec<PanelValues>, Vec<PanelValues>, Vec<f64>, GridPair);

fn solve_levels(
    spec: &PotentialSpec,
    levels: u32,
    xi_grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Levels, QuadError> {
    let (p1, p2) = (spec.p1(), spec.p2());
    let k = spec.anchor();
    let ln_k = k.ln();
    let s_out = (xi_grid.last().unwrap() / k).ln().max(sandwich_start(spec)).max(1.0);
    let min_gap = -1.0 - inner_tail_exponent(p1, p2, levels);
    let mut top = s_out + (1.0 / cfg.tail_eps).ln() / min_gap + 1.0;
    // keep v^q ~ y^{2q(1+p1-p2)} and exp(∓2V̄) y representable
    let widest = growth_exponent(p1, p2, levels).max(2.0 * p1) + 2.0;
    let cap = 600.0 / widest - ln_k;
    if cap < s_out + 1.0 {
        return Err(QuadError::Grid(format!(
            "xi_max = {} is beyond the representable range for these exponents",
            xi_grid.last().unwrap()
        )));
    }
    top = top.min(cap);

    let log_w = |s: f64| {
        let (l, vb) = log_weight(spec, ln_k, s);
        l - 2.0 * vb
    };
    let log_w_inv = |s: f64| {
        let (l, vb) = log_weight(spec, ln_k, s);
        l + 2.0 * vb
    };
    let coarse = PanelGrid::uniform(ln_k, top, 0.5, &table_breaks(spec)).refine(
        &[&log_w, &log_w_inv],
        cfg.rel_tol * 1e-2,
        cfg.max_depth,
    );
    let fine = coarse.bisected();

    let (fine_levels, rel_tails) = recursion(spec, &fine, levels, s_out);
    let (coarse_levels, _) = recursion(spec, &coarse, levels, s_out);
    Ok((fine_levels, coarse_levels, rel_tails, GridPair { fine, coarse }))
}

/// Runs the nested recursion on one panel grid. Returns every level and the
/// tail correction of each level relative to its inner integral at `s_out`.
fn recursion(spec: &PotentialSpec, grid: &PanelGrid, levels: u32, s_out: f64) -> (Vec<PanelValues>, Vec<f64>) {
    let (p1, p2) = (spec.p1(), spec.p2());
    let ln_k = grid.ln_k;
    let mut prev = grid.sample(|_| 1.0);
    let mut out = Vec::with_capacity(levels as usize);
    let mut rel_tails = Vec::with_capacity(levels as usize);
    for q in 1..=levels {
        // inner integrand v^{q-1} exp(-2V̄) y in s-coordinates
        let inner = prev.map(grid, |s, v| {
            if v <= 0.0 {
                return 0.0;
            }
            let (l, vb) = log_weight(spec, ln_k, s);
            (v.ln() + l - 2.0 * vb).exp()
        });
        let gap = -1.0 - inner_tail_exponent(p1, p2, q);
        let tail = inner.last() / gap;
        let tails = inner.cumulative_backward(grid, tail);
        rel_tails.push(tail / tails.eval(grid, s_out));
        let qf = q as f64;
        let outer = tails.map(grid, |s, b| {
            if b <= 0.0 {
                return 0.0;
            }
            let (l, vb) = log_weight(spec, ln_k, s);
            2.0 * qf * (b.ln() + l + 2.0 * vb).exp()
        });
        let level = outer.cumulative_forward(grid);
        out.push(level.clone());
        prev = level;
    }
    (out, rel_tails)
}

/// Finite-difference residual of `L v^q = -q v^{q-1}` at `y` with step `h`,
/// `L = ½ d²/dy² - V̄'(y) d/dy`.
pub fn generator_residual(
    spec: &PotentialSpec,
    upper: &VqTable,
    lower: &VqTable,
    y: f64,
    h: f64,
) -> Result<f64, QuadError> {
    if upper.q == 0 {
        return Err(QuadError::Domain("residual needs q >= 1".into()));
    }
    if lower.q + 1 != upper.q {
        return Err(QuadError::Domain(format!(
            "levels {} and {} are not consecutive",
            lower.q, upper.q
        )));
    }
    if !upper.is_converged() || !lower.is_converged() {
        return Err(QuadError::Domain("divergent level".into()));
    }
    if !(h > 0.0) || !(y - h > spec.anchor()) {
        return Err(QuadError::Domain(format!(
            "y - h = {} must lie strictly above K = {}",
            y - h,
            spec.anchor()
        )));
    }
    let at = |t: f64| {
        upper
            .eval(t)
            .ok_or_else(|| QuadError::Domain(format!("{t} is outside the table range")))
    };
    let (vm, v0, vp) = (at(y - h)?, at(y)?, at(y + h)?);
    let below = lower
        .eval(y)
        .ok_or_else(|| QuadError::Domain(format!("{y} is outside the table range")))?;
    let d1 = (vp - vm) / (2.0 * h);
    let d2 = (vp - 2.0 * v0 + vm) / (h * h);
    let drift = spec.vbar_prime(y)?;
    Ok((0.5 * d2 - drift * d1 + upper.q as f64 * below).abs())
}
