//! Verdicts from simulated and quadrature output: power-law fits, polynomial
//! bound checks, total-variation decay and stochastic domination.
//!
//! Total variation is measured for the 1-D radial process only, where the
//! invariant density is known exactly. It is a surrogate for the
//! d-dimensional statement and reports say so.

use thiserror::Error;

use crate::quadrature::{InvariantDensity, VqTable};
use crate::simulate::{sample_at_times, EmpiricalCdf, MomentEstimate, SimConfig, SimError, Start};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("nonpositive or non-finite coordinate ({x}, {y})")]
    NonPositive { x: f64, y: f64 },
    #[error("unusable estimate at x = {0}")]
    Unusable(f64),
    #[error("grid spans {decades:.3} decades, need at least {need}")]
    Span { decades: f64, need: f64 },
    #[error("sample starvation: {got} samples, need at least {need}")]
    Starvation { got: usize, need: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fit refused: {0}")]
    FitRefused(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Slope in log-log coordinates. For [`fit_decay`] the sign is flipped so
    /// that a decaying curve has a positive rate.
    pub exponent: f64,
    /// Log-scale intercept, `ln y ≈ intercept + slope · ln x`.
    pub intercept: f64,
    pub r_squared: f64,
    /// Largest absolute residual in log space.
    pub residual_max: f64,
    pub n_points: usize,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<DecayFit, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(AnalysisError::NonPositive { x, y });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::Domain("all x coordinates coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_max = logs
        .iter()
        .map(|(lx, ly)| (ly - intercept - slope * lx).abs())
        .fold(0.0, f64::max);
    // a perfectly flat response is fit exactly
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        exponent: slope,
        intercept,
        r_squared,
        residual_max,
        n_points: logs.len(),
    })
}

/// Log-log slope of a converged `v^q` table over `[lo, hi]`.
pub fn fit_vq_envelope(table: &VqTable, lo: f64, hi: f64) -> Result<DecayFit, AnalysisError> {
    if !table.is_converged() {
        return Err(AnalysisError::Domain(format!("level q = {} is divergent", table.q)));
    }
    let pts: Vec<(f64, f64)> = table
        .xi_grid
        .iter()
        .zip(&table.values)
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(x, v)| (*x, *v))
        .collect();
    fit_power_law(&pts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub claim: String,
    pub holds: bool,
    /// False when the claim does not apply to the parameters, e.g. a moment
    /// beyond the critical exponent. `holds` is then false as well.
    pub applicable: bool,
    /// Smallest constant making the inequality hold on the grid.
    pub fitted_constant: f64,
    /// Grid point (or threshold) attaining the worst ratio.
    pub witness: f64,
    pub tolerance_used: f64,
    pub note: String,
}

/// A value with its standard error at grid point `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub x: f64,
    pub value: f64,
    pub std_error: f64,
}

/// Number of standard errors added to each estimate before bounding it.
pub const BOUND_SIGMAS: f64 = 3.0;
/// Minimum spread of the grid, in decades.
pub const MIN_DECADES: f64 = 1.0;

/// Smallest `C` with `value + 3·SE ≤ C (1 + x^m)` at every point; holds when
/// `C ≤ cap`.
pub fn check_polynomial_bound(
    claim: &str,
    points: &[BoundPoint],
    m: f64,
    cap: f64,
) -> Result<BoundReport, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| !(p.x > 0.0) || !p.value.is_finite() || !p.std_error.is_finite()) {
        return Err(AnalysisError::Unusable(p.x));
    }
    let lo = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.x).fold(0.0, f64::max);
    let decades = (hi / lo).log10();
    if decades < MIN_DECADES {
        return Err(AnalysisError::Span {
            decades,
            need: MIN_DECADES,
        });
    }
    let (mut c, mut witness) = (f64::NEG_INFINITY, points[0].x);
    for p in points {
        let ratio = (p.value + BOUND_SIGMAS * p.std_error) / (1.0 + p.x.powf(m));
        if ratio > c {
            c = ratio;
            witness = p.x;
        }
    }
    let c = c.max(0.0);
    Ok(BoundReport {
        claim: claim.to_string(),
        holds: c <= cap,
        applicable: true,
        fitted_constant: c,
        witness,
        tolerance_used: BOUND_SIGMAS,
        note: format!("C = {c:.6e} against cap {cap:e}"),
    })
}

/// Checks `E_y γ^k ≤ C (1 + y^m)` over a grid of starts. `q0` is the critical
/// exponent; `k ≥ q0` is reported as not applicable.
pub fn check_hitting_bound(
    estimates: &[(f64, MomentEstimate)],
    k: u32,
    m: f64,
    q0: f64,
    cap: f64,
) -> Result<BoundReport, AnalysisError> {
    if estimates.len() < 2 {
        return Err(AnalysisError::TooFewPoints {
            need: 3,
            got: estimates.len(),
        });
    }
    if k as f64 >= q0 {
        return Ok(BoundReport {
            claim: "eq3".into(),
            holds: false,
            applicable: false,
            fitted_constant: f64::INFINITY,
            witness: f64::NAN,
            tolerance_used: BOUND_SIGMAS,
            note: format!("not applicable: divergent regime (k = {k} >= q0 = {q0})"),
        });
    }
    let mut points = Vec::with_capacity(estimates.len());
    let mut censored = 0;
    for (y0, e) in estimates {
        if !e.usable {
            return Err(AnalysisError::Unusable(*y0));
        }
        censored += e.n_censored;
        points.push(BoundPoint {
            x: *y0,
            value: e.value,
            std_error: e.std_error,
        });
    }
    let mut report = check_polynomial_bound("eq3", &points, m, cap)?;
    if censored > 0 {
        report.note.push_str(&format!("; {censored} censored paths, estimates are lower bounds"));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinPolicy {
    /// Bins of equal invariant mass over `[K, Q(0.999)]`, plus one overflow bin.
    EqualMass(usize),
}

impl Default for BinPolicy {
    fn default() -> Self {
        BinPolicy::EqualMass(64)
    }
}

/// Upper end of the binned range, as a quantile level.
pub const TV_COVERAGE: f64 = 0.999;
pub const MIN_TV_SAMPLES: usize = 1000;

/// Bin edges and exact invariant masses. The last bin is `[edges[B], ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Bins {
    pub fn new(density: &InvariantDensity, policy: BinPolicy) -> Result<Self, AnalysisError> {
        let BinPolicy::EqualMass(b) = policy;
        if b == 0 {
            return Err(AnalysisError::Domain("need at least one bin".into()));
        }
        let mut edges = Vec::with_capacity(b + 1);
        edges.push(density.anchor());
        for i in 1..=b {
            edges.push(density.quantile(TV_COVERAGE * i as f64 / b as f64));
        }
        let mut cdfs: Vec<f64> = edges.iter().map(|&e| density.cdf(e)).collect();
        cdfs[0] = 0.0;
        let mut masses: Vec<f64> = cdfs.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        masses.push(density.survival(*edges.last().unwrap()).max(0.0));
        Ok(Self { edges, masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Empirical bin fractions. Values below the first edge fall in bin 0.
    pub fn fractions(&self, sample: &EmpiricalCdf) -> Vec<f64> {
        let n = sample.len() as f64;
        let mut counts = Vec::with_capacity(self.len());
        let mut prev = 0usize;
        for &e in &self.edges[1..] {
            let c = sample.count_below(e);
            counts.push((c - prev) as f64 / n);
            prev = c;
        }
        counts.push((sample.len() - prev) as f64 / n);
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub value: f64,
    /// `√(B / 2n)` with `B` the number of occupied bins.
    pub floor: f64,
    pub n_samples: usize,
}

fn check_tv_sample(sample: &EmpiricalCdf, density: &InvariantDensity) -> Result<(), AnalysisError> {
    if sample.is_empty() {
        return Err(SimError::EmptySample.into());
    }
    if sample.len() < MIN_TV_SAMPLES {
        return Err(AnalysisError::Starvation {
            got: sample.len(),
            need: MIN_TV_SAMPLES,
        });
    }
    let k = density.anchor();
    let lowest = sample.values()[0];
    if lowest < k * (1.0 - 1e-12) {
        return Err(AnalysisError::Domain(format!(
            "sample value {lowest} lies below the density's support [{k}, ∞)"
        )));
    }
    Ok(())
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    (0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()).clamp(0.0, 1.0)
}

fn floor_for(fractions: &[f64], n: usize) -> f64 {
    let occupied = fractions.iter().filter(|&&f| f > 0.0).count().max(1);
    (occupied as f64 / (2.0 * n as f64)).sqrt()
}

/// Binned total variation between an empirical law and the invariant law.
pub fn tv_distance(
    sample: &EmpiricalCdf,
    density: &InvariantDensity,
    policy: BinPolicy,
) -> Result<TvEstimate, AnalysisError> {
    check_tv_sample(sample, density)?;
    let bins = Bins::new(density, policy)?;
    let fr = bins.fractions(sample);
    Ok(TvEstimate {
        value: half_l1(&fr, &bins.masses),
        floor: floor_for(&fr, sample.len()),
        n_samples: sample.len(),
    })
}

/// Binned total variation between two empirical laws on the bins of `density`.
pub fn tv_between_binned(
    a: &EmpiricalCdf,
    b: &EmpiricalCdf,
    density: &InvariantDensity,
    policy: BinPolicy,
) -> Result<TvEstimate, AnalysisError> {
    check_tv_sample(a, density)?;
    check_tv_sample(b, density)?;
    let bins = Bins::new(density, policy)?;
    let (fa, fb) = (bins.fractions(a), bins.fractions(b));
    let n = a.len().min(b.len());
    Ok(TvEstimate {
        value: half_l1(&fa, &fb),
        floor: floor_for(&fa, n).max(floor_for(&fb, n)) * 2f64.sqrt(),
        n_samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvPoint {
    pub t: f64,
    pub tv: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvCurve {
    pub points: Vec<TvPoint>,
    pub n_paths: usize,
}

impl TvCurve {
    pub fn max_floor(&self) -> f64 {
        self.points.iter().map(|p| p.floor).fold(0.0, f64::max)
    }

    /// Times where the curve rises above its earlier running minimum by more
    /// than `factor` statistical floors.
    pub fn envelope_violations(&self, factor: f64) -> Vec<f64> {
        let mut run_min = f64::INFINITY;
        let mut bad = Vec::new();
        for p in &self.points {
            if p.tv > run_min + factor * p.floor {
                bad.push(p.t);
            }
            run_min = run_min.min(p.tv);
        }
        bad
    }
}

/// TV between the radial law at each of `times` and the invariant law. All
/// times are observed along the same paths.
pub fn tv_decay_curve(
    density: &InvariantDensity,
    start: Start<'_>,
    times: &[f64],
    cfg: &SimConfig,
    policy: BinPolicy,
) -> Result<TvCurve, AnalysisError> {
    if matches!(start, Start::Full { .. }) {
        return Err(AnalysisError::Domain("TV curves are defined for the radial process only".into()));
    }
    let samples = sample_at_times(density.spec(), start, times, cfg)?;
    let mut points = Vec::with_capacity(times.len());
    for (t, s) in times.iter().zip(samples) {
        let cdf = EmpiricalCdf::new(s)?.at_time(*t);
        let est = tv_distance(&cdf, density, policy)?;
        points.push(TvPoint {
            t: *t,
            tv: est.value,
            floor: est.floor,
        });
    }
    Ok(TvCurve {
        points,
        n_paths: cfg.n_paths,
    })
}

/// Default burn-in: the first time the curve drops below 0.5.
pub fn default_burn_in(curve: &TvCurve) -> Option<f64> {
    curve.points.iter().find(|p| p.tv < 0.5).map(|p| p.t)
}

/// Fits `TV ≈ P (1+t)^{-k'}` past the burn-in over points above three
/// statistical floors. `exponent` is `k'`, `intercept` is `ln P`.
pub fn fit_decay(curve: &TvCurve, burn_in: Option<f64>) -> Result<DecayFit, AnalysisError> {
    let Some(b) = burn_in.or_else(|| default_burn_in(curve)) else {
        return Err(AnalysisError::FitRefused("curve never drops below 0.5".into()));
    };
    let window: Vec<&TvPoint> = curve.points.iter().filter(|p| p.t >= b).collect();
    if let (Some(first), Some(last)) = (window.first(), window.last()) {
        let decades = ((1.0 + last.t) / (1.0 + first.t)).log10();
        if decades < MIN_DECADES {
            return Err(AnalysisError::FitRefused(format!(
                "times past burn-in {b} span {decades:.2} decades in 1+t, need {MIN_DECADES}"
            )));
        }
    }
    let usable: Vec<(f64, f64)> = window
        .iter()
        .filter(|p| p.tv > 3.0 * p.floor)
        .map(|p| (1.0 + p.t, p.tv))
        .collect();
    if usable.len() < 3 {
        return Err(AnalysisError::FitRefused(format!(
            "{} of {} points past burn-in {b} lie above 3x the statistical floor (max floor {:.3e}); need 3",
            usable.len(),
            window.len(),
            curve.max_floor()
        )));
    }
    let mut fit = fit_power_law(&usable)?;
    fit.exponent = -fit.exponent;
    Ok(fit)
}

/// One-sided two-sample test of `P(|X_t| > a) ≤ P(y_t > a)` for all `a`.
/// `fitted_constant` is the largest excess `D`, `tolerance_used` the critical
/// value `√(-ln α / 2) · √((n+m)/(nm))`.
pub fn check_domination(
    full: &EmpiricalCdf,
    radial: &EmpiricalCdf,
    alpha: f64,
) -> Result<BoundReport, AnalysisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::Domain(format!("significance {alpha} outside (0, 1)")));
    }
    for s in [full, radial] {
        if s.len() < MIN_TV_SAMPLES {
            return Err(AnalysisError::Starvation {
                got: s.len(),
                need: MIN_TV_SAMPLES,
            });
        }
    }
    if full.time() != radial.time() {
        return Err(AnalysisError::Domain(format!(
            "samples observed at different times: {:?} vs {:?}",
            full.time(),
            radial.time()
        )));
    }
    let (n, m) = (full.len() as f64, radial.len() as f64);
    let mut d = f64::NEG_INFINITY;
    let mut witness = f64::NAN;
    // survival functions only change at sample points
    for &a in full.values().iter().chain(radial.values()) {
        let excess = full.survival(a) - radial.survival(a);
        if excess > d {
            d = excess;
            witness = a;
        }
    }
    let crit = (-alpha.ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt();
    Ok(BoundReport {
        claim: "domination".into(),
        holds: d <= crit,
        applicable: true,
        fitted_constant: d,
        witness,
        tolerance_used: crit,
        note: format!("max excess {d:.4e}, critical value {crit:.4e} at level {alpha}"),
    })
}
