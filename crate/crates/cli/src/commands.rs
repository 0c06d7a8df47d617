//! Subcommand bodies. Each writes its files into the output directory and
//! returns an exit status.

use std::sync::Mutex;
use std::fmt::Write as _;
use std::io;

use polyergo::analysis::{
    check_hitting_bound, check_polynomial_bound, fit_decay, fit_vq_envelope, tv_decay_curve, AnalysisError,
    BinPolicy, BoundPoint, BoundReport, TvCurve, MIN_DECADES,
};
use polyergo::potential::validate_spec;
use polyergo::quadrature::{growth_exponent, stationary_moment, vq_levels, InvariantDensity, QuadError, VqTable};
use polyergo::simulate::{derive_seed, mc_hitting_moments, sample_at_times, MomentEstimate, SimError, Start};
use polyergo::{log_space, PotentialSpec};
use thiserror::Error;

use crate::config::{Process, RunConfig, VqSection};
use crate::output::{num, opt_num, OutDir};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Success,
    BoundFailed,
    Unusable,
    Usage,
}

impl Exit {
    pub fn code(self) -> u8 {
        match self {
            Exit::Success => 0,
            Exit::BoundFailed => 1,
            Exit::Usage => 2,
            Exit::Unusable => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Exit::Success => "pass",
            Exit::BoundFailed => "bound-failed",
            Exit::Usage => "usage-error",
            Exit::Unusable => "unusable",
        }
    }
}

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Unusable(String),
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
}

impl CmdError {
    pub fn exit(&self) -> Exit {
        match self {
            CmdError::Usage(_) | CmdError::Io(_) => Exit::Usage,
            CmdError::Unusable(_) => Exit::Unusable,
        }
    }
}

impl From<QuadError> for CmdError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::Divergent { .. } => CmdError::Unusable(e.to_string()),
            _ => CmdError::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for CmdError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BlowUp { .. } | SimError::EmptySample => CmdError::Unusable(e.to_string()),
            _ => CmdError::Usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CmdError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::FitRefused(_) | AnalysisError::Unusable(_) | AnalysisError::Starvation { .. } => {
                CmdError::Unusable(e.to_string())
            }
            AnalysisError::Sim(s) => s.into(),
            _ => CmdError::Usage(e.to_string()),
        }
    }
}

pub type CmdResult = Result<Exit, CmdError>;

/// Shared state for one invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: OutDir,
    pub quiet: bool,
    pub q_max: Option<u32>,
    pub xi: Option<Vec<f64>>,
    /// Per-stage detail picked up by `verify-all`.
    pub notes: Mutex<Vec<(&'static str, String)>>,
}

impl Ctx {
    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }

    fn spec(&self) -> &PotentialSpec {
        &self.cfg.potential.spec
    }
}

fn header(ctx: &Ctx, title: &str) -> String {
    let spec = ctx.spec();
    format!(
        "{title}\nfamily = {}, d = {}, K = {}, p1 = {}, p2 = {}, seed = {}\n",
        spec.family().as_str(),
        spec.dim(),
        num(spec.anchor()),
        num(spec.p1()),
        num(spec.p2()),
        ctx.cfg.seed
    )
}

fn finish(ctx: &Ctx, name: &str, body: &str, exit: Exit) -> CmdResult {
    let body = format!("{body}verdict: {}\n", exit.label());
    ctx.out.text(name, &body)?;
    ctx.say(&body);
    Ok(exit)
}

fn bound_row(r: &BoundReport, k: String, m: f64) -> Vec<String> {
    vec![
        r.claim.clone(),
        k,
        num(m),
        r.holds.to_string(),
        r.applicable.to_string(),
        num(r.fitted_constant),
        num(r.witness),
        num(r.tolerance_used),
        r.note.clone(),
    ]
}

const BOUND_HEADER: &[&str] = &[
    "claim",
    "order",
    "exponent",
    "holds",
    "applicable",
    "fitted_constant",
    "witness",
    "tolerance_used",
    "note",
];

fn spans_decade(xs: &[f64]) -> bool {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(0.0, f64::max);
    xs.len() >= 3 && lo > 0.0 && (hi / lo).log10() >= MIN_DECADES
}

pub fn cmd_validate(ctx: &Ctx) -> CmdResult {
    let spec = ctx.spec();
    let grid = match &ctx.cfg.validate_grid {
        Some(g) => g.clone(),
        None => {
            let lo = spec.xi0().max(spec.anchor());
            log_space(lo, 1e3 * lo, 400)
        }
    };
    let report = validate_spec(spec, &grid).map_err(|e| CmdError::Usage(e.to_string()))?;
    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| vec![c.name.clone(), c.passed.to_string(), num(c.witness), num(c.measured)])
        .collect();
    ctx.out.csv("validate.csv", &["check", "passed", "witness", "measured"], &rows)?;
    let mut body = header(ctx, "potential validation");
    for c in &report.checks {
        let _ = writeln!(
            body,
            "  {:<18} {}  witness = {}  measured = {}",
            c.name,
            if c.passed { "ok  " } else { "FAIL" },
            num(c.witness),
            num(c.measured)
        );
    }
    let exit = if report.overall() { Exit::Success } else { Exit::BoundFailed };
    finish(ctx, "validate.txt", &body, exit)
}

fn vq_settings(ctx: &Ctx) -> Result<VqSection, CmdError> {
    let k = ctx.spec().anchor();
    let mut s = ctx.cfg.vq.clone().unwrap_or(VqSection {
        q_max: 2,
        xi: log_space(k, 1e4 * k, 41),
        fit_lo: None,
        fit_hi: None,
    });
    if let Some(q) = ctx.q_max {
        s.q_max = q;
    }
    if let Some(xi) = &ctx.xi {
        s.xi = xi.clone();
    }
    if s.q_max == 0 {
        return Err(CmdError::Usage("q_max must be at least 1".into()));
    }
    Ok(s)
}

pub fn cmd_vq(ctx: &Ctx) -> CmdResult {
    let s = vq_settings(ctx)?;
    let spec = ctx.spec();
    let tables = vq_levels(spec, s.q_max, &s.xi, &ctx.cfg.quad)?;
    let k = spec.anchor();
    let (lo, hi) = (s.fit_lo.unwrap_or(1e2 * k), s.fit_hi.unwrap_or(1e4 * k));
    let mut summary = Vec::new();
    let mut body = header(ctx, "hitting-time moments v^q by quadrature");
    let q0 = tables[0].q0;
    let _ = writeln!(body, "critical exponent q0 = {}", num(q0));
    let mut series = Vec::new();
    for t in &tables {
        let rows: Vec<Vec<String>> = if t.is_converged() {
            (0..t.xi_grid.len())
                .map(|i| {
                    vec![
                        num(t.xi_grid[i]),
                        num(t.values[i]),
                        num(t.error_estimate[i]),
                        t.status.as_str().into(),
                    ]
                })
                .collect()
        } else {
            t.xi_grid
                .iter()
                .map(|x| vec![num(*x), String::new(), String::new(), t.status.as_str().into()])
                .collect()
        };
        let name = format!("vq_q{}.csv", t.q);
        ctx.out.csv(&name, &["xi", "value", "error_estimate", "status"], &rows)?;
        let slope = fit_vq_envelope(t, lo, hi).ok().map(|f| f.exponent);
        let envelope = growth_exponent(spec.p1(), spec.p2(), t.q);
        summary.push(vec![
            t.q.to_string(),
            t.status.as_str().into(),
            num(q0),
            num(t.tail_exponent),
            num(envelope),
            opt_num(slope),
        ]);
        let _ = writeln!(
            body,
            "  q = {}: {}  envelope exponent {}  fitted slope on [{}, {}] {}",
            t.q,
            t.status.as_str(),
            num(envelope),
            num(lo),
            num(hi),
            slope.map(num).unwrap_or_else(|| "n/a".into())
        );
        if t.is_converged() {
            let dat = format!("vq_q{}.dat", t.q);
            let pts: Vec<(f64, f64)> = t
                .xi_grid
                .iter()
                .zip(&t.values)
                .filter(|(_, v)| **v > 0.0)
                .map(|(x, v)| (*x, *v))
                .collect();
            ctx.out.dat(&dat, &format!("xi v^{}(xi)", t.q), &pts)?;
            series.push((dat, format!("q = {}", t.q)));
        }
    }
    let statuses: Vec<String> = tables.iter().map(|t| format!("q={} {}", t.q, t.status.as_str())).collect();
    ctx.notes.lock().unwrap().push(("vq", statuses.join("; ")));
    ctx.out.csv(
        "vq_summary.csv",
        &["q", "status", "q0", "tail_exponent", "envelope_exponent", "fitted_slope"],
        &summary,
    )?;
    if !series.is_empty() {
        let refs: Vec<(&str, &str)> = series.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        ctx.out.gnuplot("vq.gp", "hitting-time moments", "xi", "v^q(xi)", &refs)?;
    }
    finish(ctx, "vq.txt", &body, Exit::Success)
}

pub fn cmd_hitting(ctx: &Ctx) -> CmdResult {
    let h = ctx
        .cfg
        .hitting
        .clone()
        .ok_or_else(|| CmdError::Usage("config has no [hitting] section".into()))?;
    let q_max = ctx.q_max.unwrap_or(h.q_max);
    if q_max == 0 {
        return Err(CmdError::Usage("q_max must be at least 1".into()));
    }
    let spec = ctx.spec();
    let mut y0 = h.y0.clone();
    y0.sort_by(f64::total_cmp);
    y0.dedup();
    let oracle = vq_levels(spec, q_max, &y0, &ctx.cfg.quad)?;
    let q0 = oracle[0].q0;
    let budget_scale = 5.0 * h.sim.dt.sqrt();

    let mut estimates: Vec<Vec<MomentEstimate>> = Vec::with_capacity(y0.len());
    for (i, &y) in y0.iter().enumerate() {
        let mut cfg = h.sim;
        cfg.seed = derive_seed(ctx.cfg.seed, &format!("hitting/{i}"));
        estimates.push(mc_hitting_moments(spec, y, q_max, &cfg)?);
    }

    let mut rows = Vec::new();
    let mut exit = Exit::Success;
    let mut body = header(ctx, "hitting-time moments by Monte Carlo");
    let _ = writeln!(
        body,
        "dt = {}, paths = {}, t_max = {}, q0 = {}; budget = 3 SE + 5 sqrt(dt) * oracle",
        num(h.sim.dt),
        h.sim.n_paths,
        num(h.sim.t_max),
        num(q0)
    );
    for (i, &y) in y0.iter().enumerate() {
        for e in &estimates[i] {
            let q = e.order as u32;
            let table: &VqTable = &oracle[(q - 1) as usize];
            let quad = table.is_converged().then(|| table.values[i]);
            let budget = quad.map(|v| 3.0 * e.std_error + budget_scale * v);
            let within = match (quad, budget) {
                (Some(v), Some(b)) if e.usable => Some((e.value - v).abs() <= b),
                _ => None,
            };
            if !e.usable {
                exit = exit.max(Exit::Unusable);
            } else if within == Some(false) {
                exit = exit.max(Exit::BoundFailed);
            }
            rows.push(vec![
                num(y),
                q.to_string(),
                num(e.value),
                num(e.std_error),
                e.n_effective.to_string(),
                e.n_censored.to_string(),
                e.lower_bound.to_string(),
                e.usable.to_string(),
                table.is_converged().to_string(),
                opt_num(quad),
                table.status.as_str().into(),
                opt_num(budget),
                within.map(|w| w.to_string()).unwrap_or_default(),
            ]);
            let _ = writeln!(
                body,
                "  y0 = {} q = {}: MC {} +- {} (censored {})  quadrature {}  {}",
                num(y),
                q,
                num(e.value),
                num(e.std_error),
                e.n_censored,
                quad.map(num).unwrap_or_else(|| "divergent".into()),
                match within {
                    Some(true) => "within budget",
                    Some(false) => "OUTSIDE budget",
                    None if table.is_converged() => "unusable",
                    None => "non-convergent target",
                }
            );
        }
    }
    ctx.out.csv(
        "hitting.csv",
        &[
            "y0",
            "q",
            "mc_value",
            "std_error",
            "n_effective",
            "n_censored",
            "lower_bound",
            "usable",
            "convergent_target",
            "quad_value",
            "quad_status",
            "budget",
            "within_budget",
        ],
        &rows,
    )?;

    let mut bound_rows = Vec::new();
    if exit < Exit::Unusable {
        if spans_decade(&y0) {
            for k in 1..=q_max {
                let m = growth_exponent(spec.p1(), spec.p2(), k);
                let pts: Vec<(f64, MomentEstimate)> = y0
                    .iter()
                    .zip(&estimates)
                    .map(|(y, e)| (*y, e[(k - 1) as usize].clone()))
                    .collect();
                let r = check_hitting_bound(&pts, k, m, q0, h.bound_cap)?;
                if r.applicable && !r.holds {
                    exit = exit.max(Exit::BoundFailed);
                }
                let _ = writeln!(body, "  bound E y0^k <= C (1 + y0^m), k = {k}, m = {}: {}", num(m), r.note);
                bound_rows.push(bound_row(&r, k.to_string(), m));
            }
        } else {
            let _ = writeln!(body, "  bound check skipped: start grid needs >= 3 points over >= 1 decade");
        }
    }
    ctx.out.csv("hitting_bound.csv", BOUND_HEADER, &bound_rows)?;

    let mut series = Vec::new();
    for q in 1..=q_max {
        let pts: Vec<(f64, f64)> = y0
            .iter()
            .zip(&estimates)
            .filter_map(|(y, e)| {
                let e = &e[(q - 1) as usize];
                (e.usable && e.value > 0.0).then_some((*y, e.value))
            })
            .collect();
        let name = format!("hitting_q{q}.dat");
        ctx.out.dat(&name, &format!("y0 MC E[gamma^{q}]"), &pts)?;
        series.push((name, format!("q = {q}")));
    }
    let refs: Vec<(&str, &str)> = series.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    ctx.out.gnuplot("hitting.gp", "Monte-Carlo hitting-time moments", "y0", "E gamma^q", &refs)?;
    finish(ctx, "hitting.txt", &body, exit)
}

pub fn cmd_moments(ctx: &Ctx) -> CmdResult {
    let mo = ctx
        .cfg
        .moments
        .clone()
        .ok_or_else(|| CmdError::Usage("config has no [moments] section".into()))?;
    let spec = ctx.spec();
    if mo.times.is_empty() || mo.starts.is_empty() {
        return Err(CmdError::Usage("moments needs at least one start and one time".into()));
    }
    let mut cfg = mo.sim;
    let t_last = mo.times.iter().copied().fold(0.0, f64::max);
    cfg.t_max = t_last.max(cfg.dt);
    let convergent = mo.m < 2.0 * spec.p2() - 1.0;
    let d = spec.dim();

    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut body = header(ctx, "state moments by Monte Carlo");
    let _ = writeln!(
        body,
        "process = {}, m = {}, m' = {}, dt = {}, paths = {}",
        match mo.process {
            Process::Full => "full",
            Process::Radial => "radial",
        },
        num(mo.m),
        num(mo.m_prime),
        num(cfg.dt),
        cfg.n_paths
    );
    if !convergent {
        let _ = writeln!(
            body,
            "  non-convergent target: m = {} >= 2 p2 - 1 = {}, the stationary moment is infinite",
            num(mo.m),
            num(2.0 * spec.p2() - 1.0)
        );
    } else {
        let sm = stationary_moment(spec, mo.m, &ctx.cfg.quad)?;
        let _ = writeln!(body, "  stationary radial moment E y^m = {}", num(sm));
    }
    for (i, &r) in mo.starts.iter().enumerate() {
        cfg.seed = derive_seed(ctx.cfg.seed, &format!("moments/{i}"));
        let mut x0 = vec![0.0; d];
        x0[0] = r;
        let start = match mo.process {
            Process::Full => Start::Full {
                x0: &x0,
                perturbation: ctx.cfg.potential.perturbation.as_ref(),
            },
            Process::Radial => Start::Radial(r),
        };
        let samples = sample_at_times(spec, start, &mo.times, &cfg)?;
        let mut sup = BoundPoint {
            x: r,
            value: f64::NEG_INFINITY,
            std_error: 0.0,
        };
        for (t, s) in mo.times.iter().zip(&samples) {
            let pw: Vec<f64> = s.iter().map(|v| v.powf(mo.m)).collect();
            let n = pw.len() as f64;
            let mean = pw.iter().sum::<f64>() / n;
            let se = if pw.len() > 1 {
                (pw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            if mean > sup.value {
                sup.value = mean;
                sup.std_error = se;
            }
            rows.push(vec![num(r), num(*t), num(mo.m), num(mean), num(se), convergent.to_string()]);
        }
        let _ = writeln!(
            body,
            "  start {}: sup_t E|X_t|^m = {} +- {}",
            num(r),
            num(sup.value),
            num(sup.std_error)
        );
        points.push(sup);
    }
    ctx.out.csv(
        "moments.csv",
        &["start", "t", "m", "value", "std_error", "convergent_target"],
        &rows,
    )?;

    let mut exit = Exit::Success;
    let mut bound_rows = Vec::new();
    let starts: Vec<f64> = points.iter().map(|p| p.x).collect();
    if spans_decade(&starts) {
        let mut r = check_polynomial_bound("eq4", &points, mo.m_prime, mo.bound_cap)?;
        if !convergent {
            r.applicable = false;
            r.note.push_str("; non-convergent target, not scored");
        } else if !r.holds {
            exit = Exit::BoundFailed;
        }
        let _ = writeln!(body, "  bound sup_t E|X_t|^m <= C (1 + |x|^m'): {}", r.note);
        bound_rows.push(bound_row(&r, num(mo.m), mo.m_prime));
    } else {
        let _ = writeln!(body, "  bound check skipped: starts need >= 3 points over >= 1 decade");
    }
    ctx.out.csv("moments_bound.csv", BOUND_HEADER, &bound_rows)?;
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.value > 0.0).map(|p| (p.x, p.value)).collect();
    ctx.out.dat("moments.dat", "start sup_t E|X_t|^m", &pts)?;
    ctx.out
        .gnuplot("moments.gp", "supremum of state moments", "|x0|", "sup_t E|X_t|^m", &[("moments.dat", "MC")])?;
    finish(ctx, "moments.txt", &body, exit)
}

pub fn cmd_tvdecay(ctx: &Ctx) -> CmdResult {
    let tv = ctx
        .cfg
        .tvdecay
        .clone()
        .ok_or_else(|| CmdError::Usage("config has no [tvdecay] section".into()))?;
    let times = &tv.times;
    if times.len() < 3 || times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 {
        return Err(CmdError::Usage(
            "tvdecay needs at least 3 strictly increasing nonnegative times".into(),
        ));
    }
    let (first, last) = (times[0], *times.last().unwrap());
    if ((1.0 + last) / (1.0 + first)).log10() < MIN_DECADES {
        return Err(CmdError::Usage(format!(
            "insufficient time span: 1+t covers {:.2} decades, need {MIN_DECADES}",
            ((1.0 + last) / (1.0 + first)).log10()
        )));
    }
    let spec = ctx.spec();
    let density = InvariantDensity::new(spec, &ctx.cfg.quad)?;
    let policy = BinPolicy::EqualMass(tv.bins);
    let mut cfg = tv.sim;
    cfg.t_max = last.max(cfg.dt);
    cfg.seed = derive_seed(ctx.cfg.seed, "tvdecay");
    let curve = tv_decay_curve(&density, Start::Radial(tv.y0), times, &cfg, policy)?;
    let control = if tv.stationary_control {
        cfg.seed = derive_seed(ctx.cfg.seed, "tvdecay/stationary");
        Some(tv_decay_curve(&density, Start::Stationary(&density), times, &cfg, policy)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    let push = |rows: &mut Vec<Vec<String>>, label: &str, c: &TvCurve| {
        for p in &c.points {
            rows.push(vec![label.to_string(), num(p.t), num(p.tv), num(p.floor)]);
        }
    };
    push(&mut rows, "point", &curve);
    if let Some(c) = &control {
        push(&mut rows, "stationary", c);
    }
    ctx.out.csv("tvdecay.csv", &["start", "t", "tv", "floor"], &rows)?;
    let dat = |c: &TvCurve| -> Vec<(f64, f64)> {
        c.points.iter().filter(|p| p.tv > 0.0).map(|p| (1.0 + p.t, p.tv)).collect()
    };
    ctx.out.dat("tvdecay.dat", "1+t TV(point start)", &dat(&curve))?;
    let mut series = vec![("tvdecay.dat", "start y0")];
    if let Some(c) = &control {
        ctx.out.dat("tvdecay_stationary.dat", "1+t TV(stationary start)", &dat(c))?;
        series.push(("tvdecay_stationary.dat", "stationary start"));
    }
    ctx.out
        .gnuplot("tvdecay.gp", "radial TV distance to the invariant law", "1+t", "TV", &series)?;

    let mut body = header(ctx, "total-variation decay (1-D radial surrogate)");
    let _ = writeln!(
        body,
        "y0 = {}, dt = {}, paths = {}, bins = {} + overflow, floor = sqrt(B / 2n)",
        num(tv.y0),
        num(cfg.dt),
        cfg.n_paths,
        tv.bins
    );
    for p in &curve.points {
        let _ = writeln!(body, "  t = {:<12} TV = {:<22} floor = {}", num(p.t), num(p.tv), num(p.floor));
    }
    let mut exit = Exit::Success;
    let violations = curve.envelope_violations(2.0);
    if violations.is_empty() {
        let _ = writeln!(body, "  envelope: monotone within 2x floor");
    } else {
        exit = Exit::BoundFailed;
        let _ = writeln!(body, "  envelope: rises above running minimum + 2x floor at t = {violations:?}");
    }
    if let Some(c) = &control {
        let worst = c
            .points
            .iter()
            .map(|p| p.tv / p.floor)
            .fold(0.0, f64::max);
        let ok = worst <= 2.0;
        if !ok {
            exit = exit.max(Exit::BoundFailed);
        }
        let _ = writeln!(
            body,
            "  stationary control: max TV/floor = {} ({})",
            num(worst),
            if ok { "at floor" } else { "ABOVE floor" }
        );
    }
    let mut fit_rows = Vec::new();
    match fit_decay(&curve, None) {
        Ok(f) => {
            let ok = f.exponent >= tv.min_exponent;
            if !ok {
                exit = exit.max(Exit::BoundFailed);
            }
            let _ = writeln!(
                body,
                "  fitted decay exponent k' = {} over {} points (r^2 = {}), required >= {}: {}",
                num(f.exponent),
                f.n_points,
                num(f.r_squared),
                num(tv.min_exponent),
                if ok { "consistent" } else { "TOO SLOW" }
            );
            fit_rows.push(vec![
                num(f.exponent),
                num(f.intercept),
                num(f.r_squared),
                num(f.residual_max),
                f.n_points.to_string(),
                num(tv.min_exponent),
                ok.to_string(),
            ]);
        }
        Err(e) => {
            let _ = writeln!(body, "  decay fit refused: {e}");
            exit = exit.max(CmdError::from(e).exit());
        }
    }
    ctx.out.csv(
        "tvdecay_fit.csv",
        &["exponent", "log_intercept", "r_squared", "residual_max", "n_points", "min_exponent", "passed"],
        &fit_rows,
    )?;
    finish(ctx, "tvdecay.txt", &body, exit)
}

pub type Stage = (&'static str, fn(&Ctx) -> CmdResult);

pub const STAGES: &[Stage] = &[
    ("validate", cmd_validate),
    ("vq", cmd_vq),
    ("hitting", cmd_hitting),
    ("moments", cmd_moments),
    ("tvdecay", cmd_tvdecay),
];

/// Runs every stage whose config section is present and writes a pass/fail
/// matrix. The worst stage status is returned.
pub fn cmd_verify_all(ctx: &Ctx) -> CmdResult {
    let mut rows = Vec::new();
    let mut body = header(ctx, "verify-all");
    let mut worst = Exit::Success;
    for (name, run) in STAGES {
        let present = match *name {
            "hitting" => ctx.cfg.hitting.is_some(),
            "moments" => ctx.cfg.moments.is_some(),
            "tvdecay" => ctx.cfg.tvdecay.is_some(),
            _ => true,
        };
        if !present {
            rows.push(vec![name.to_string(), String::new(), "skipped".into(), "no config section".into()]);
            let _ = writeln!(body, "  {name:<9} skipped (no config section)");
            continue;
        }
        let (exit, detail) = match run(ctx) {
            Ok(e) => {
                let notes = ctx.notes.lock().unwrap();
                let detail = notes.iter().filter(|(s, _)| s == name).map(|(_, d)| d.as_str()).collect::<Vec<_>>();
                (e, detail.join("; "))
            }
            Err(e) => (e.exit(), e.to_string()),
        };
        worst = worst.max(exit);
        let _ = writeln!(body, "  {name:<9} {} {detail}", exit.label());
        rows.push(vec![name.to_string(), exit.code().to_string(), exit.label().into(), detail]);
    }
    ctx.out.csv("verify_all.csv", &["stage", "exit_code", "verdict", "detail"], &rows)?;
    finish(ctx, "verify_all.txt", &body, worst)
}
