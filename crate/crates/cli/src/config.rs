//! INI run configuration.
//!
//! Flat `key = value` sections; every section and key is checked against a
//! fixed schema and anything unknown is rejected. Lists are comma separated
//! or written as `log:lo:hi:n` / `lin:lo:hi:n`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use polyergo::potential::{load_table_csv, AngularPerturbation, PotentialSpec};
use polyergo::quadrature::QuadratureConfig;
use polyergo::simulate::SimConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("duplicate key `{key}` in [{section}]")]
    DuplicateKey { section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("missing key `{key}` in [{section}]")]
    MissingKey { section: &'static str, key: &'static str },
    #[error("bad value for `{key}` in [{section}]: {msg}")]
    Value {
        section: &'static str,
        key: &'static str,
        msg: String,
    },
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["seed", "out"]),
    (
        "potential",
        &[
            "family",
            "p",
            "center",
            "amplitude",
            "table",
            "p1",
            "p2",
            "d",
            "k",
            "xi0",
            "perturbation_amplitude",
            "perturbation_mode",
            "perturbation_cutoff",
        ],
    ),
    ("sim", &["dt", "t_max", "n_paths", "record_stride", "blowup_factor"]),
    ("quad", &["rel_tol", "abs_tol", "tail_eps", "max_depth"]),
    ("validate", &["grid"]),
    ("vq", &["q_max", "xi", "fit_lo", "fit_hi"]),
    ("hitting", &["y0", "q_max", "n_paths", "dt", "t_max", "bound_cap"]),
    ("moments", &["process", "starts", "times", "m", "m_prime", "n_paths", "dt", "bound_cap"]),
    ("tvdecay", &["y0", "times", "bins", "n_paths", "dt", "min_exponent", "stationary_control"]),
];

type Raw = BTreeMap<String, BTreeMap<String, String>>;

fn load_raw(text: &str) -> Result<Raw, ConfigError> {
    let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut raw = Raw::new();
    for (section, props) in ini.iter() {
        let Some(section) = section else {
            if let Some((key, _)) = props.iter().next() {
                return Err(ConfigError::Parse(format!("key `{key}` outside any section")));
            }
            continue;
        };
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| *s == section) else {
            return Err(ConfigError::UnknownSection(section.to_string()));
        };
        let entry = raw.entry(section.to_string()).or_default();
        for (key, value) in props.iter() {
            if !keys.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    section: section.into(),
                    key: key.into(),
                });
            }
            if entry.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::DuplicateKey {
                    section: section.into(),
                    key: key.into(),
                });
            }
        }
    }
    Ok(raw)
}

/// Typed view over one section.
struct Section<'a> {
    name: &'static str,
    map: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    fn new(raw: &'a Raw, name: &'static str) -> Self {
        Self {
            name,
            map: raw.get(name),
        }
    }

    fn present(&self) -> bool {
        self.map.is_some()
    }

    fn raw(&self, key: &'static str) -> Option<&'a str> {
        self.map.and_then(|m| m.get(key)).map(String::as_str)
    }

    fn err(&self, key: &'static str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: self.name,
            key,
            msg: msg.into(),
        }
    }

    fn opt<T: std::str::FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| self.err(key, format!("`{v}`: {e}"))))
            .transpose()
    }

    fn req<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?.ok_or(ConfigError::MissingKey {
            section: self.name,
            key,
        })
    }

    fn or<T: std::str::FromStr>(&self, key: &'static str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn list(&self, key: &'static str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key).map(|v| parse_list(v).map_err(|m| self.err(key, m))).transpose()
    }

    fn req_list(&self, key: &'static str) -> Result<Vec<f64>, ConfigError> {
        self.list(key)?.ok_or(ConfigError::MissingKey {
            section: self.name,
            key,
        })
    }
}

/// `1, 2.5, 10`, `log:lo:hi:n` or `lin:lo:hi:n`.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    let spaced = |parts: &[&str]| -> Result<(f64, f64, usize), String> {
        if parts.len() != 3 {
            return Err(format!("expected lo:hi:n, got `{}`", parts.join(":")));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
        let n: usize = parts[2].trim().parse().map_err(|e| format!("{e}"))?;
        if n < 2 || !(hi > lo) {
            return Err("need lo < hi and n >= 2".into());
        }
        Ok((lo, hi, n))
    };
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("log:") {
        let (lo, hi, n) = spaced(&rest.split(':').collect::<Vec<_>>())?;
        if !(lo > 0.0) {
            return Err("log spacing needs lo > 0".into());
        }
        return Ok(polyergo::log_space(lo, hi, n));
    }
    if let Some(rest) = t.strip_prefix("lin:") {
        let (lo, hi, n) = spaced(&rest.split(':').collect::<Vec<_>>())?;
        let step = (hi - lo) / (n - 1) as f64;
        return Ok((0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect());
    }
    let values: Vec<f64> = t
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", s.trim())))
        .collect::<Result<_, _>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite entry".into());
    }
    Ok(values)
}

#[derive(Debug, Clone)]
pub struct PotentialSection {
    pub spec: PotentialSpec,
    pub perturbation: Option<AngularPerturbation>,
}

#[derive(Debug, Clone)]
pub struct VqSection {
    pub q_max: u32,
    pub xi: Vec<f64>,
    pub fit_lo: Option<f64>,
    pub fit_hi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HittingSection {
    pub y0: Vec<f64>,
    pub q_max: u32,
    pub sim: SimConfig,
    pub bound_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Full,
    Radial,
}

#[derive(Debug, Clone)]
pub struct MomentsSection {
    pub process: Process,
    pub starts: Vec<f64>,
    pub times: Vec<f64>,
    pub m: f64,
    pub m_prime: f64,
    pub sim: SimConfig,
    pub bound_cap: f64,
}

#[derive(Debug, Clone)]
pub struct TvSection {
    pub y0: f64,
    pub times: Vec<f64>,
    pub bins: usize,
    pub sim: SimConfig,
    pub min_exponent: f64,
    pub stationary_control: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub potential: PotentialSection,
    pub sim: SimConfig,
    pub quad: QuadratureConfig,
    pub validate_grid: Option<Vec<f64>>,
    pub vq: Option<VqSection>,
    pub hitting: Option<HittingSection>,
    pub moments: Option<MomentsSection>,
    pub tvdecay: Option<TvSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Relative paths (table files, output directory) resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw = load_raw(text)?;
        let run = Section::new(&raw, "run");
        let seed = run.or("seed", 0u64)?;
        let out = base.join(run.or("out", "out".to_string())?);
        let potential = parse_potential(&Section::new(&raw, "potential"), base)?;
        let sim = parse_sim(&Section::new(&raw, "sim"))?;
        let quad = parse_quad(&Section::new(&raw, "quad"))?;
        let validate_grid = Section::new(&raw, "validate").list("grid")?;

        let s = Section::new(&raw, "vq");
        let vq = if s.present() {
            Some(VqSection {
                q_max: s.or("q_max", 2u32)?,
                xi: s.req_list("xi")?,
                fit_lo: s.opt("fit_lo")?,
                fit_hi: s.opt("fit_hi")?,
            })
        } else {
            None
        };

        let s = Section::new(&raw, "hitting");
        let hitting = if s.present() {
            Some(HittingSection {
                y0: s.req_list("y0")?,
                q_max: s.or("q_max", 1u32)?,
                sim: override_sim(&s, sim)?,
                bound_cap: s.or("bound_cap", 1e3)?,
            })
        } else {
            None
        };

        let s = Section::new(&raw, "moments");
        let moments = if s.present() {
            let process = match s.or("process", "radial".to_string())?.as_str() {
                "full" => Process::Full,
                "radial" => Process::Radial,
                other => return Err(s.err("process", format!("expected full or radial, got `{other}`"))),
            };
            let m: f64 = s.req("m")?;
            Some(MomentsSection {
                process,
                starts: s.req_list("starts")?,
                times: s.req_list("times")?,
                m,
                m_prime: s.or("m_prime", m)?,
                sim: override_sim(&s, sim)?,
                bound_cap: s.or("bound_cap", 1e3)?,
            })
        } else {
            None
        };

        let s = Section::new(&raw, "tvdecay");
        let tvdecay = if s.present() {
            Some(TvSection {
                y0: s.req("y0")?,
                times: s.req_list("times")?,
                bins: s.or("bins", 64usize)?,
                sim: override_sim(&s, sim)?,
                min_exponent: s.or("min_exponent", 0.8)?,
                stationary_control: s.or("stationary_control", true)?,
            })
        } else {
            None
        };

        Ok(Self {
            seed,
            out,
            potential,
            sim,
            quad,
            validate_grid,
            vq,
            hitting,
            moments,
            tvdecay,
        })
    }
}

fn parse_potential(s: &Section<'_>, base: &Path) -> Result<PotentialSection, ConfigError> {
    if !s.present() {
        return Err(ConfigError::MissingSection("potential"));
    }
    let d: usize = s.or("d", 1)?;
    let k: f64 = s.or("k", 1.0)?;
    let family: String = s.req("family")?;
    let built = match family.as_str() {
        "power_tail" => PotentialSpec::power_tail(s.req("p")?, d, k),
        "two_exponent" => PotentialSpec::two_exponent(s.req("center")?, s.req("amplitude")?, d, k),
        "tabulated" => {
            let path: String = s.req("table")?;
            let table = load_table_csv(&base.join(path)).map_err(|e| s.err("table", e.to_string()))?;
            PotentialSpec::tabulated(table, d, k, s.req("p1")?, s.req("p2")?)
        }
        other => return Err(s.err("family", format!("unknown family `{other}`"))),
    };
    let mut spec = built.map_err(|e| s.err("family", e.to_string()))?;
    if let Some(xi0) = s.opt::<f64>("xi0")? {
        spec = spec.with_xi0(xi0).map_err(|e| s.err("xi0", e.to_string()))?;
    }
    let perturbation = match s.opt::<f64>("perturbation_amplitude")? {
        None => None,
        Some(a) => {
            let p = AngularPerturbation::new(a, s.or("perturbation_mode", 2u32)?, s.or("perturbation_cutoff", 2.0)?)
                .map_err(|e| s.err("perturbation_amplitude", e.to_string()))?;
            p.check_dimension(d)
                .map_err(|e| s.err("perturbation_amplitude", e.to_string()))?;
            Some(p)
        }
    };
    Ok(PotentialSection { spec, perturbation })
}

fn parse_sim(s: &Section<'_>) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::new(s.or("dt", 1e-3)?, s.or("t_max", 100.0)?, s.or("n_paths", 10_000)?, 0);
    cfg.record_stride = s.or("record_stride", 1)?;
    cfg.blowup_factor = s.or("blowup_factor", 1e6)?;
    cfg.validate().map_err(|e| s.err("dt", e.to_string()))?;
    Ok(cfg)
}

fn override_sim(s: &Section<'_>, base: SimConfig) -> Result<SimConfig, ConfigError> {
    let mut cfg = base;
    cfg.dt = s.or("dt", cfg.dt)?;
    cfg.n_paths = s.or("n_paths", cfg.n_paths)?;
    if let Some(t) = s.opt("t_max")? {
        cfg.t_max = t;
    }
    cfg.validate().map_err(|e| s.err("dt", e.to_string()))?;
    Ok(cfg)
}

fn parse_quad(s: &Section<'_>) -> Result<QuadratureConfig, ConfigError> {
    let d = QuadratureConfig::default();
    let cfg = QuadratureConfig {
        rel_tol: s.or("rel_tol", d.rel_tol)?,
        abs_tol: s.or("abs_tol", d.abs_tol)?,
        tail_eps: s.or("tail_eps", d.tail_eps)?,
        max_depth: s.or("max_depth", d.max_depth)?,
    };
    cfg.validate().map_err(|e| s.err("rel_tol", e.to_string()))?;
    Ok(cfg)
}
