//! Radial potentials `U(x) = V(|x|) + U²(x)` and their reduced profiles.
//!
//! Every family carries two views of the same potential:
//!
//! - a *global* radial profile `V` on `[0, ∞)`, smooth with `V(0) = 0` and
//!   `V ≥ 0`, used to drive the d-dimensional simulator;
//! - a *tail* profile `V̄(y) = V(y) - d ln y` on `[K, ∞)`, used by the
//!   reflected radial process and by the quadrature engine. For the analytic
//!   families the tail is stated in closed form, e.g. `V̄(y) = p ln y` for the
//!   exact power tail.
//!
//! The growth condition is the sandwich `p2 ln ξ ≤ V̄(ξ) ≤ p1 ln ξ` for
//! `ξ ≥ xi0`, with `1/2 < p2 ≤ p1`.

use std::path::Path;

use thiserror::Error;

use crate::interp::{InterpError, MonotoneCubic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("p out of range: need p > 1/2, got {0}")]
    ExponentOutOfRange(f64),
    #[error("growth exponents out of range: need 1/2 < p2 <= p1, got p1 = {p1}, p2 = {p2}")]
    GrowthOrder { p1: f64, p2: f64 },
    #[error("amplitude must be non-negative, got {0}")]
    NegativeAmplitude(f64),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("anchor radius K must be positive and finite, got {0}")]
    BadAnchor(f64),
    #[error("threshold xi0 = {xi0} must satisfy xi0 >= K = {k}")]
    BadThreshold { xi0: f64, k: f64 },
    #[error("y = {y} is outside the tail domain [K = {k}, inf)")]
    Domain { y: f64, k: f64 },
    #[error("grid too short: need at least 2 points, got {0}")]
    GridTooShort(usize),
    #[error("grid must be strictly increasing (violated at index {0})")]
    GridNotIncreasing(usize),
    #[error("grid must reach 10 * xi0 = {need}, but ends at {got}")]
    GridTooNarrow { need: f64, got: f64 },
    #[error("angular perturbation needs dimension >= 2, got {0}")]
    PerturbationDimension(usize),
    #[error("angular perturbation: mode must be >= 1 and cutoff > 0")]
    PerturbationParams,
    #[error("potential table: {0}")]
    Table(#[from] InterpError),
    #[error("potential table: {0}")]
    TableFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    PowerTail,
    TwoExponent,
    Tabulated,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::PowerTail => "power_tail",
            Family::TwoExponent => "two_exponent",
            Family::Tabulated => "tabulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyParams {
    PowerTail { p: f64 },
    TwoExponent { center: f64, amplitude: f64 },
    Tabulated { table: TabulatedProfile },
}

/// A tabulated radial profile with a cubic core below the first node and a
/// logarithmic extrapolation past the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    interp: MonotoneCubic,
    // V(y) = a y² + b y³ on [0, x_min)
    core_a: f64,
    core_b: f64,
}

impl TabulatedProfile {
    pub fn new(interp: MonotoneCubic) -> Self {
        let x0 = interp.x_min();
        let (v0, s0) = interp.start_value_slope();
        let (core_a, core_b) = if x0 > 0.0 {
            (
                (3.0 * v0 - s0 * x0) / (x0 * x0),
                (s0 * x0 - 2.0 * v0) / (x0 * x0 * x0),
            )
        } else {
            (0.0, 0.0)
        };
        Self {
            interp,
            core_a,
            core_b,
        }
    }

    pub fn interpolant(&self) -> &MonotoneCubic {
        &self.interp
    }

    fn eval(&self, y: f64) -> (f64, f64) {
        let (lo, hi) = (self.interp.x_min(), self.interp.x_max());
        if y < lo {
            let (a, b) = (self.core_a, self.core_b);
            (a * y * y + b * y * y * y, 2.0 * a * y + 3.0 * b * y * y)
        } else if y > hi {
            let (v, s) = self.interp.end_value_slope();
            (v + s * hi * (y / hi).ln(), s * hi / y)
        } else {
            self.interp.eval_with_derivative(y)
        }
    }

    /// `V` as a function of `l = ln y`; stays finite for huge `y`.
    fn eval_log(&self, l: f64) -> f64 {
        let hi = self.interp.x_max();
        if l > hi.ln() {
            let (v, s) = self.interp.end_value_slope();
            v + s * hi * (l - hi.ln())
        } else {
            self.eval(l.exp()).0
        }
    }
}

/// Parse a two-column `(ξ, V(ξ))` CSV table. A header row is optional.
pub fn parse_table_csv(text: &str) -> Result<MonotoneCubic, PotentialError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| PotentialError::TableFormat(e.to_string()))?;
        if record.len() != 2 {
            return Err(PotentialError::TableFormat(format!(
                "row {} has {} columns, expected 2",
                row + 1,
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ if row == 0 => continue,
            _ => {
                return Err(PotentialError::TableFormat(format!(
                    "row {} is not numeric",
                    row + 1
                )))
            }
        }
    }
    Ok(MonotoneCubic::new(xs, ys)?)
}

pub fn load_table_csv(path: &Path) -> Result<MonotoneCubic, PotentialError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PotentialError::TableFormat(format!("{}: {e}", path.display())))?;
    parse_table_csv(&text)
}

/// Radial potential together with the data that the growth condition and
/// the comparison process need.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    d: usize,
    k: f64,
    p1: f64,
    p2: f64,
    xi0: f64,
    params: FamilyParams,
}

fn check_common(d: usize, k: f64) -> Result<(), PotentialError> {
    if d == 0 {
        return Err(PotentialError::ZeroDimension);
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(PotentialError::BadAnchor(k));
    }
    Ok(())
}

fn check_growth(p1: f64, p2: f64) -> Result<(), PotentialError> {
    if !(p2 > 0.5 && p2 <= p1 && p1.is_finite()) {
        return Err(PotentialError::GrowthOrder { p1, p2 });
    }
    Ok(())
}

impl PotentialSpec {
    /// Exact power tail: `exp(2 V̄(y)) = y^{2p}` on `[K, ∞)`, with the global
    /// profile `V(y) = ((p + d)/2) ln(1 + y²)`.
    pub fn power_tail(p: f64, d: usize, k: f64) -> Result<Self, PotentialError> {
        if !(p > 0.5 && p.is_finite()) {
            return Err(PotentialError::ExponentOutOfRange(p));
        }
        check_common(d, k)?;
        Ok(Self {
            d,
            k,
            p1: p,
            p2: p,
            xi0: k,
            params: FamilyParams::PowerTail { p },
        })
    }

    /// Oscillating tail `V̄(ξ) = (c + a sin ln ξ) ln ξ`, so that
    /// `V(ξ)/ln ξ - d` sweeps `[c - a, c + a]` forever.
    pub fn two_exponent(
        center: f64,
        amplitude: f64,
        d: usize,
        k: f64,
    ) -> Result<Self, PotentialError> {
        if !(amplitude >= 0.0) {
            return Err(PotentialError::NegativeAmplitude(amplitude));
        }
        let (p1, p2) = (center + amplitude, center - amplitude);
        check_growth(p1, p2)?;
        check_common(d, k)?;
        Ok(Self {
            d,
            k,
            p1,
            p2,
            // below ξ = 1 the sandwich flips sign with ln ξ
            xi0: k.max(1.0),
            params: FamilyParams::TwoExponent { center, amplitude },
        })
    }

    pub fn tabulated(
        table: MonotoneCubic,
        d: usize,
        k: f64,
        p1: f64,
        p2: f64,
    ) -> Result<Self, PotentialError> {
        check_growth(p1, p2)?;
        check_common(d, k)?;
        Ok(Self {
            d,
            k,
            p1,
            p2,
            xi0: k,
            params: FamilyParams::Tabulated {
                table: TabulatedProfile::new(table),
            },
        })
    }

    pub fn with_xi0(mut self, xi0: f64) -> Result<Self, PotentialError> {
        if !(xi0 >= self.k && xi0.is_finite()) {
            return Err(PotentialError::BadThreshold { xi0, k: self.k });
        }
        self.xi0 = xi0;
        Ok(self)
    }

    pub fn family(&self) -> Family {
        match self.params {
            FamilyParams::PowerTail { .. } => Family::PowerTail,
            FamilyParams::TwoExponent { .. } => Family::TwoExponent,
            FamilyParams::Tabulated { .. } => Family::Tabulated,
        }
    }

    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn anchor(&self) -> f64 {
        self.k
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn xi0(&self) -> f64 {
        self.xi0
    }

    /// Same potential with a different anchor radius.
    pub fn with_anchor(&self, k: f64) -> Result<Self, PotentialError> {
        check_common(self.d, k)?;
        let mut out = self.clone();
        out.k = k;
        out.xi0 = match self.params {
            FamilyParams::TwoExponent { .. } => self.xi0.max(k).max(1.0),
            _ => self.xi0.max(k),
        };
        Ok(out)
    }

    /// Global radial profile `V(y)` for `y ≥ 0`.
    pub fn v(&self, y: f64) -> f64 {
        self.v_and_derivative(y).0
    }

    pub fn v_prime(&self, y: f64) -> f64 {
        self.v_and_derivative(y).1
    }

    pub fn v_and_derivative(&self, y: f64) -> (f64, f64) {
        let d = self.d as f64;
        match &self.params {
            FamilyParams::PowerTail { p } => {
                let s = 1.0 + y * y;
                (0.5 * (p + d) * s.ln(), (p + d) * y / s)
            }
            FamilyParams::TwoExponent { center, amplitude } => {
                let s = 1.0 + y * y;
                let l = 0.5 * s.ln();
                let (sin, cos) = l.sin_cos();
                let value = (center + d + amplitude * sin) * l;
                let dv_dl = center + d + amplitude * sin + amplitude * l * cos;
                (value, dv_dl * y / s)
            }
            FamilyParams::Tabulated { table } => table.eval(y),
        }
    }

    fn check_tail(&self, y: f64) -> Result<(), PotentialError> {
        // NaN falls through to the error branch
        if y >= self.k {
            Ok(())
        } else {
            Err(PotentialError::Domain { y, k: self.k })
        }
    }

    /// Reduced profile `V̄(y) = V(y) - d ln y` on the tail `y ≥ K`.
    pub fn vbar(&self, y: f64) -> Result<f64, PotentialError> {
        self.check_tail(y)?;
        Ok(self.vbar_log(y.ln()))
    }

    /// `V̄'(y) = V'(y) - d/y` on the tail `y ≥ K`.
    pub fn vbar_prime(&self, y: f64) -> Result<f64, PotentialError> {
        self.check_tail(y)?;
        Ok(self.vbar_prime_unchecked(y))
    }

    /// `V̄` as a function of `l = ln y`.
    pub(crate) fn vbar_log(&self, l: f64) -> f64 {
        match &self.params {
            FamilyParams::PowerTail { p } => p * l,
            FamilyParams::TwoExponent { center, amplitude } => (center + amplitude * l.sin()) * l,
            FamilyParams::Tabulated { table } => table.eval_log(l) - self.d as f64 * l,
        }
    }

    #[inline]
    pub(crate) fn vbar_prime_unchecked(&self, y: f64) -> f64 {
        match &self.params {
            FamilyParams::PowerTail { p } => p / y,
            FamilyParams::TwoExponent { center, amplitude } => {
                let l = y.ln();
                let (sin, cos) = l.sin_cos();
                (center + amplitude * sin + amplitude * l * cos) / y
            }
            FamilyParams::Tabulated { table } => table.eval(y).1 - self.d as f64 / y,
        }
    }
}

/// Smooth purely angular perturbation `U²(x) = A · W(x/|x|) · c(|x|)`.
///
/// `W(u) = Re((u₁ + i u₂)^mode)`, a spherical harmonic in the first
/// coordinate plane, and `c` rises smoothly from 0 at `cutoff/2` to 1 at
/// `cutoff`. Past the cutoff `∇U²(x) · x = 0`.
///
/// The structural condition is written in the source as `⟨U²(x), x⟩ ≡ 0`
/// with scalar `U²`; this type implements the gradient reading
/// `∇U²(x) · x ≡ 0`. The alternative reading (a vector field `U²`
/// orthogonal to `x`) gives the same drift when the field is `∇U²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularPerturbation {
    amplitude: f64,
    mode: u32,
    cutoff: f64,
}

impl AngularPerturbation {
    pub fn new(amplitude: f64, mode: u32, cutoff: f64) -> Result<Self, PotentialError> {
        if mode == 0 || !(cutoff > 0.0) || !amplitude.is_finite() {
            return Err(PotentialError::PerturbationParams);
        }
        Ok(Self {
            amplitude,
            mode,
            cutoff,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn mode(&self) -> u32 {
        self.mode
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn check_dimension(&self, d: usize) -> Result<(), PotentialError> {
        if d < 2 {
            Err(PotentialError::PerturbationDimension(d))
        } else {
            Ok(())
        }
    }

    fn ramp(&self, r: f64) -> (f64, f64) {
        let (r0, r1) = (0.5 * self.cutoff, self.cutoff);
        if r <= r0 {
            (0.0, 0.0)
        } else if r >= r1 {
            (1.0, 0.0)
        } else {
            let w = r1 - r0;
            let t = (r - r0) / w;
            let c = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
            let dc = 30.0 * t * t * (1.0 - t) * (1.0 - t) / w;
            (c, dc)
        }
    }

    // (Re z^n, Im z^n) for z = x₁ + i x₂
    fn power(x1: f64, x2: f64, n: u32) -> (f64, f64) {
        let (mut re, mut im) = (1.0, 0.0);
        for _ in 0..n {
            let next = re * x1 - im * x2;
            im = re * x2 + im * x1;
            re = next;
        }
        (re, im)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        let (c, _) = self.ramp(r);
        if c == 0.0 {
            return 0.0;
        }
        let (h, _) = Self::power(x[0], x[1], self.mode);
        self.amplitude * c * h / r.powi(self.mode as i32)
    }

    /// Adds `∇U²(x)` into `out`.
    pub fn add_gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        let (c, dc) = self.ramp(r);
        if c == 0.0 && dc == 0.0 {
            return;
        }
        let m = self.mode as i32;
        let (h, _) = Self::power(x[0], x[1], self.mode);
        let (re1, im1) = Self::power(x[0], x[1], self.mode - 1);
        let rm = r.powi(m);
        let g = h / rm;
        let a = self.amplitude;
        let radial = a * (g * dc / r - c * m as f64 * h / (rm * r * r));
        for (o, xi) in out.iter_mut().zip(x) {
            *o += radial * xi;
        }
        out[0] += a * c * m as f64 * re1 / rm;
        out[1] -= a * c * m as f64 * im1 / rm;
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Grid point where the check is tightest (or most violated).
    pub witness: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn overall(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Cap on `|V(ξ + 1) - V(ξ)|`.
    pub oscillation_cap: f64,
    /// Absolute slack on the log-sandwich, scaled by `max(1, |V̄|)`.
    pub sandwich_slack: f64,
    pub core_points: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            oscillation_cap: 10.0,
            sandwich_slack: 1e-9,
            core_points: 201,
        }
    }
}

pub fn validate_spec(spec: &PotentialSpec, grid: &[f64]) -> Result<ValidationReport, PotentialError> {
    validate_spec_with(spec, grid, &ValidationOptions::default())
}

pub fn validate_spec_with(
    spec: &PotentialSpec,
    grid: &[f64],
    opts: &ValidationOptions,
) -> Result<ValidationReport, PotentialError> {
    if grid.len() < 2 {
        return Err(PotentialError::GridTooShort(grid.len()));
    }
    if let Some(i) = (1..grid.len()).find(|&i| !(grid[i] > grid[i - 1])) {
        return Err(PotentialError::GridNotIncreasing(i));
    }
    let last = *grid.last().unwrap();
    if last < 10.0 * spec.xi0 {
        return Err(PotentialError::GridTooNarrow {
            need: 10.0 * spec.xi0,
            got: last,
        });
    }

    let mut checks = Vec::with_capacity(5);
    let tail: Vec<f64> = grid.iter().copied().filter(|&x| x >= spec.xi0).collect();
    checks.push(sandwich_check(spec, &tail, opts, true));
    checks.push(sandwich_check(spec, &tail, opts, false));

    let (mut worst, mut witness) = (f64::NEG_INFINITY, grid[0]);
    for &x in grid {
        let jump = (spec.v(x + 1.0) - spec.v(x)).abs();
        if jump > worst {
            worst = jump;
            witness = x;
        }
    }
    checks.push(Check {
        name: "local_oscillation".into(),
        passed: worst <= opts.oscillation_cap,
        witness,
        measured: worst,
    });

    let v0 = spec.v(0.0);
    checks.push(Check {
        name: "origin_zero".into(),
        passed: v0.abs() <= 1e-12,
        witness: 0.0,
        measured: v0,
    });

    let reach = 2.0 * spec.xi0;
    let n = opts.core_points.max(2);
    let core = (0..n)
        .map(|i| reach * i as f64 / (n - 1) as f64)
        .chain(grid.iter().copied());
    let (mut lowest, mut at) = (f64::INFINITY, 0.0);
    for x in core {
        let v = spec.v(x);
        if v < lowest {
            lowest = v;
            at = x;
        }
    }
    checks.push(Check {
        name: "nonnegative".into(),
        passed: lowest >= -1e-12,
        witness: at,
        measured: lowest,
    });

    Ok(ValidationReport { checks })
}

/// Lower (`p2`) or upper (`p1`) half of the sandwich. The measured value is
/// `V(ξ)/ln ξ - d` at the tightest point; at `ξ = 1` only the zero margin
/// can be checked.
fn sandwich_check(spec: &PotentialSpec, tail: &[f64], opts: &ValidationOptions, lower: bool) -> Check {
    let bound = if lower { spec.p2 } else { spec.p1 };
    let mut passed = true;
    let mut worst = f64::INFINITY;
    let mut witness = tail.first().copied().unwrap_or(spec.xi0);
    let mut measured = f64::NAN;
    for &x in tail {
        let l = x.ln();
        let vb = spec.vbar_log(l);
        let margin = if lower { vb - bound * l } else { bound * l - vb };
        let slack = opts.sandwich_slack * vb.abs().max(1.0);
        if margin < -slack {
            passed = false;
        }
        // rank points by the margin per unit of ln ξ; ξ = 1 only when it fails
        let score = if l.abs() > 1e-12 {
            margin / l.abs()
        } else if margin < -slack {
            margin
        } else {
            continue;
        };
        if score < worst {
            worst = score;
            witness = x;
            measured = if l.abs() > 1e-12 { vb / l } else { f64::NAN };
        }
    }
    Check {
        name: if lower { "growth_lower" } else { "growth_upper" }.into(),
        passed,
        witness,
        measured,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_space;
    use proptest::prelude::*;

    fn central_diff(f: impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
        (f(y + h) - f(y - h)) / (2.0 * h)
    }

    #[test]
    fn power_tail_closed_form() {
        let s = PotentialSpec::power_tail(1.5, 1, 1.0).unwrap();
        assert_eq!(s.p1(), 1.5);
        assert_eq!(s.p2(), 1.5);
        assert_eq!(s.xi0(), 1.0);
        assert!((s.vbar(std::f64::consts::E).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(s.vbar(1.0).unwrap(), 0.0);
        // exp(2 V̄(y)) = y³
        for y in [1.0, 2.0, 7.5, 100.0] {
            let e = (2.0 * s.vbar(y).unwrap()).exp();
            assert!((e / y.powi(3) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn power_tail_rejects_low_exponent() {
        assert_eq!(
            PotentialSpec::power_tail(0.5, 2, 1.0),
            Err(PotentialError::ExponentOutOfRange(0.5))
        );
        assert!(PotentialSpec::power_tail(2.0, 0, 1.0).is_err());
        assert!(PotentialSpec::power_tail(2.0, 1, 0.0).is_err());
    }

    #[test]
    fn power_tail_p2_d3_drift() {
        // V̄ = 2 ln y on the tail, so d/y - V'(y) = -V̄'(y) = -2/y
        let s = PotentialSpec::power_tail(2.0, 3, 1.0).unwrap();
        for y in [1.01, 2.0, 10.0, 300.0] {
            assert!((s.vbar_prime(y).unwrap() - 2.0 / y).abs() < 1e-15);
            let fd = central_diff(|t| s.vbar(t).unwrap(), y, 1e-5 * y);
            assert!((fd - 2.0 / y).abs() <= 1e-8 / y);
        }
        // the global profile approaches the same drift at large radius
        let y = 1e3;
        let fd = central_diff(|t| s.v(t), y, 1e-4 * y);
        assert!((fd - s.v_prime(y)).abs() < 1e-8);
        assert!((3.0 / y - s.v_prime(y) + 2.0 / y).abs() < 1e-8);
    }

    #[test]
    fn two_exponent_parameters() {
        let s = PotentialSpec::two_exponent(2.0, 0.25, 1, 1.0).unwrap();
        assert_eq!((s.p1(), s.p2()), (2.25, 1.75));
        assert!(matches!(
            PotentialSpec::two_exponent(1.0, 0.6, 1, 1.0),
            Err(PotentialError::GrowthOrder { .. })
        ));
        assert!(PotentialSpec::two_exponent(2.0, -0.1, 1, 1.0).is_err());
    }

    #[test]
    fn two_exponent_without_amplitude_matches_power_tail() {
        let a = PotentialSpec::two_exponent(2.0, 0.0, 1, 1.0).unwrap();
        let b = PotentialSpec::power_tail(2.0, 1, 1.0).unwrap();
        for y in log_space(1.0, 1e6, 50) {
            assert!((a.vbar(y).unwrap() - b.vbar(y).unwrap()).abs() <= 1e-12);
            assert!((a.vbar_prime(y).unwrap() - b.vbar_prime(y).unwrap()).abs() <= 1e-12);
            assert!((a.v(y) - b.v(y)).abs() <= 1e-12 * b.v(y).max(1.0));
        }
    }

    #[test]
    fn vbar_rejects_points_below_anchor() {
        let s = PotentialSpec::power_tail(1.5, 1, 2.0).unwrap();
        assert!(matches!(s.vbar(1.0), Err(PotentialError::Domain { .. })));
        assert!(s.vbar_prime(1.0).is_err());
        assert!(s.vbar(f64::NAN).is_err());
    }

    #[test]
    fn validate_power_tail_passes() {
        let s = PotentialSpec::power_tail(1.5, 1, 1.0).unwrap();
        let report = validate_spec(&s, &log_space(1.0, 1e4, 200)).unwrap();
        assert!(report.overall(), "{report:?}");
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn validate_two_exponent_passes() {
        let s = PotentialSpec::two_exponent(2.0, 0.25, 2, 1.0).unwrap();
        let report = validate_spec(&s, &log_space(1.0, 1e6, 400)).unwrap();
        assert!(report.overall(), "{report:?}");
    }

    #[test]
    fn validate_linear_table_fails_upper_at_far_end() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let table = MonotoneCubic::new(xs.clone(), xs.clone()).unwrap();
        let s = PotentialSpec::tabulated(table, 1, 1.0, 3.0, 1.0).unwrap();
        let report = validate_spec(&s, &xs).unwrap();
        assert!(!report.overall());
        let upper = report.checks.iter().find(|c| c.name == "growth_upper").unwrap();
        assert!(!upper.passed);
        assert_eq!(upper.witness, 100.0);
        assert!((upper.measured - (100.0 / 100f64.ln() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn validate_rejects_degenerate_grids() {
        let s = PotentialSpec::power_tail(1.5, 1, 1.0).unwrap();
        assert_eq!(validate_spec(&s, &[1.0]), Err(PotentialError::GridTooShort(1)));
        assert_eq!(
            validate_spec(&s, &[1.0, 20.0, 5.0]),
            Err(PotentialError::GridNotIncreasing(2))
        );
        assert!(matches!(
            validate_spec(&s, &[1.0, 5.0]),
            Err(PotentialError::GridTooNarrow { .. })
        ));
    }

    #[test]
    fn validate_reports_large_jumps() {
        let s = PotentialSpec::power_tail(1.5, 1, 1.0).unwrap();
        let opts = ValidationOptions {
            oscillation_cap: 0.5,
            ..Default::default()
        };
        let report = validate_spec_with(&s, &log_space(1.0, 1e3, 50), &opts).unwrap();
        let c = report.checks.iter().find(|c| c.name == "local_oscillation").unwrap();
        assert!(!c.passed);
        assert!(c.measured > 0.5);
    }

    #[test]
    fn parse_table_with_and_without_header() {
        let a = parse_table_csv("xi,V\n1,0.5\n2,1.5\n4,3\n").unwrap();
        let b = parse_table_csv("1,0.5\n2,1.5\n4,3\n").unwrap();
        assert_eq!(a, b);
        assert!(parse_table_csv("1,0.5\n1,2\n").is_err());
        assert!(parse_table_csv("1,0.5\nx,2\n").is_err());
    }

    #[test]
    fn tabulated_core_and_tail_are_c1() {
        let xs = vec![0.5, 1.0, 2.0, 4.0];
        let ys = vec![0.3, 1.0, 2.5, 4.5];
        let s = PotentialSpec::tabulated(MonotoneCubic::new(xs, ys).unwrap(), 1, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(s.v(0.0), 0.0);
        for y in [0.5, 4.0] {
            let (l, r) = (s.v_and_derivative(y - 1e-9), s.v_and_derivative(y + 1e-9));
            assert!((l.0 - r.0).abs() < 1e-7);
            assert!((l.1 - r.1).abs() < 1e-6);
        }
        // log form agrees with direct evaluation past the table
        let y: f64 = 50.0;
        assert!((s.vbar_log(y.ln()) - s.vbar(y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn perturbation_needs_two_dimensions() {
        let p = AngularPerturbation::new(0.3, 2, 1.0).unwrap();
        assert!(p.check_dimension(1).is_err());
        assert!(p.check_dimension(2).is_ok());
        assert!(AngularPerturbation::new(0.3, 0, 1.0).is_err());
    }

    #[test]
    fn perturbation_gradient_matches_finite_differences() {
        let p = AngularPerturbation::new(0.7, 3, 2.0).unwrap();
        for x in [[1.3, 0.4, -0.2], [0.2, -1.7, 0.9], [3.0, 2.0, 1.0]] {
            let mut g = [0.0; 3];
            p.add_gradient(&x, &mut g);
            for i in 0..3 {
                let h = 1e-6;
                let mut a = x;
                let mut b = x;
                a[i] += h;
                b[i] -= h;
                let fd = (p.value(&a) - p.value(&b)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6, "component {i}: {fd} vs {}", g[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn vbar_prime_matches_finite_difference(
            which in 0usize..3, y_frac in 0.0f64..1.0,
        ) {
            let k = 1.0;
            let spec = match which {
                0 => PotentialSpec::power_tail(1.7, 2, k).unwrap(),
                1 => PotentialSpec::two_exponent(2.0, 0.25, 1, k).unwrap(),
                _ => PotentialSpec::two_exponent(1.5, 0.7, 3, k).unwrap(),
            };
            let y = 2.0 * k * (500.0f64).powf(y_frac);
            let h = 1e-5 * y;
            let fd = central_diff(|t| spec.vbar(t).unwrap(), y, h);
            let exact = spec.vbar_prime(y).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0 / y));
        }

        #[test]
        fn sandwich_holds_on_tail(which in 0usize..3, l in 0.0f64..30.0) {
            let spec = match which {
                0 => PotentialSpec::power_tail(0.8, 1, 1.0).unwrap(),
                1 => PotentialSpec::two_exponent(2.0, 0.25, 1, 1.0).unwrap(),
                _ => PotentialSpec::two_exponent(3.0, 2.0, 2, 1.0).unwrap(),
            };
            let vb = spec.vbar_log(l);
            prop_assert!(vb >= spec.p2() * l - 1e-12 * l.max(1.0));
            prop_assert!(vb <= spec.p1() * l + 1e-12 * l.max(1.0));
        }

        #[test]
        fn perturbation_is_angular_past_cutoff(
            amp in -2.0f64..2.0, mode in 1u32..5,
            dir in prop::collection::vec(-1.0f64..1.0, 3), r in 1.0f64..20.0,
        ) {
            let n = norm(&dir);
            prop_assume!(n > 1e-3 && amp.abs() > 1e-3);
            let p = AngularPerturbation::new(amp, mode, 1.0).unwrap();
            let x: Vec<f64> = dir.iter().map(|v| v * r / n).collect();
            let mut g = vec![0.0; 3];
            p.add_gradient(&x, &mut g);
            let gnorm = norm(&g);
            prop_assume!(gnorm > 1e-9);
            // directional derivative along x by finite differences
            let h = 1e-6;
            let up: Vec<f64> = x.iter().map(|v| v * (1.0 + h)).collect();
            let dn: Vec<f64> = x.iter().map(|v| v * (1.0 - h)).collect();
            let radial = (p.value(&up) - p.value(&dn)) / (2.0 * h);
            prop_assert!(radial.abs() <= 1e-6 * gnorm * r);
        }
    }
}
