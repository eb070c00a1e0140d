//! Flat `key = value` case configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//!
//! | key          | values                              | default            |
//! |--------------|-------------------------------------|--------------------|
//! | `case`       | registry name                       | required           |
//! | `degree`     | 1..=6                               | per case           |
//! | `refine`     | 0..=6, dyadic refinement levels     | 0                  |
//! | `overlap`    | > 0, physical units                 | per case           |
//! | `trace`      | `exact` \| `interp`                 | `exact`            |
//! | `lift`       | `ls` \| `qi`                        | `ls`               |
//! | `lattice`    | ≥ 1, trace cells per donor element  | 4                  |
//! | `epsilon`    | > 0                                 | 1e-6               |
//! | `max_iters`  | ≥ 1                                 | 100                |
//! | `workers`    | ≥ 1                                 | 1                  |
//! | `error`      | `exact` \| `successive`             | `exact`            |
//! | `patches`    | ≥ 2 (`cubes_chain` only)            | 5                  |
//! | `source`     | `constant` \| `sine` (`poisson1d`)  | `constant`         |
//! | `study`      | refinement levels in the h-study    | 0                  |
//! | `out`        | output directory                    | `out`              |

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::boundary::LiftKind;
use crate::error::{Error, Result};
use crate::schwarz::{ErrorMode, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Source {
    #[default]
    Constant,
    Sine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub case: String,
    pub degree: Option<usize>,
    pub refine: usize,
    pub overlap: Option<f64>,
    pub trace: TraceKind,
    pub lift: LiftKind,
    pub lattice: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub workers: usize,
    pub error_mode: ErrorMode,
    pub patches: usize,
    pub source: Source,
    pub study: usize,
    pub out: PathBuf,
}

impl CaseConfig {
    pub fn new(case: &str) -> Self {
        Self {
            case: case.to_string(),
            degree: None,
            refine: 0,
            overlap: None,
            trace: TraceKind::Exact,
            lift: LiftKind::LeastSquares,
            lattice: 4,
            epsilon: 1e-6,
            max_iters: 100,
            workers: 1,
            error_mode: ErrorMode::Exact,
            patches: 5,
            source: Source::Constant,
            study: 0,
            out: PathBuf::from("out"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config: Option<Self> = None;
        let mut pending: Vec<(usize, String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `key = value`, found `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key == "case" {
                if config.is_some() {
                    return Err(Error::Parse {
                        line,
                        msg: "duplicate `case`".into(),
                    });
                }
                config = Some(Self::new(value));
            } else {
                pending.push((line, key.to_string(), value.to_string()));
            }
        }
        let mut config = config.ok_or_else(|| Error::Config("missing `case` key".into()))?;
        for (line, key, value) in pending {
            config.set(&key, &value).map_err(|e| match e {
                Error::Config(msg) => Error::Parse { line, msg },
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "case" => self.case = value.to_string(),
            "degree" => self.degree = Some(num(key, value)?),
            "refine" => self.refine = num(key, value)?,
            "overlap" => self.overlap = Some(num(key, value)?),
            "trace" => {
                self.trace = match value {
                    "exact" => TraceKind::Exact,
                    "interp" => TraceKind::Interpolated,
                    _ => return Err(bad(key, value)),
                }
            }
            "lift" => {
                self.lift = match value {
                    "ls" => LiftKind::LeastSquares,
                    "qi" => LiftKind::QuasiInterpolation,
                    _ => return Err(bad(key, value)),
                }
            }
            "lattice" => self.lattice = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "error" => {
                self.error_mode = match value {
                    "exact" => ErrorMode::Exact,
                    "successive" => ErrorMode::Successive,
                    _ => return Err(bad(key, value)),
                }
            }
            "patches" => self.patches = num(key, value)?,
            "source" => {
                self.source = match value {
                    "constant" => Source::Constant,
                    "sine" => Source::Sine,
                    _ => return Err(bad(key, value)),
                }
            }
            "study" => self.study = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.into())) };
        check(
            crate::cases::CASES.contains(&self.case.as_str()),
            &format!("unknown case `{}`", self.case),
        )?;
        check(
            self.degree.is_none_or(|p| (1..=6).contains(&p)),
            "degree must be in 1..=6",
        )?;
        check(self.refine <= 6, "refine must be at most 6")?;
        check(
            self.overlap.is_none_or(|d| d > 0.0 && d.is_finite()),
            "overlap must be positive",
        )?;
        check(self.lattice >= 1, "lattice must be at least 1")?;
        check(
            self.epsilon > 0.0 && self.epsilon.is_finite(),
            "epsilon must be positive",
        )?;
        check(self.max_iters >= 1, "max_iters must be at least 1")?;
        check(self.workers >= 1, "workers must be at least 1")?;
        check(self.patches >= 2 && self.patches <= 64, "patches must be in 2..=64")?;
        check(self.study <= 6, "study must be at most 6")?;
        Ok(())
    }

    /// Serializes every key; `parse(to_text())` returns an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "case = {}", self.case);
        if let Some(p) = self.degree {
            let _ = writeln!(s, "degree = {p}");
        }
        let _ = writeln!(s, "refine = {}", self.refine);
        if let Some(d) = self.overlap {
            let _ = writeln!(s, "overlap = {d:?}");
        }
        let trace = match self.trace {
            TraceKind::Exact => "exact",
            TraceKind::Interpolated => "interp",
        };
        let lift = match self.lift {
            LiftKind::LeastSquares => "ls",
            LiftKind::QuasiInterpolation => "qi",
        };
        let error = match self.error_mode {
            ErrorMode::Exact => "exact",
            ErrorMode::Successive => "successive",
        };
        let source = match self.source {
            Source::Constant => "constant",
            Source::Sine => "sine",
        };
        let _ = writeln!(s, "trace = {trace}");
        let _ = writeln!(s, "lift = {lift}");
        let _ = writeln!(s, "lattice = {}", self.lattice);
        let _ = writeln!(s, "epsilon = {:?}", self.epsilon);
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "error = {error}");
        let _ = writeln!(s, "patches = {}", self.patches);
        let _ = writeln!(s, "source = {source}");
        let _ = writeln!(s, "study = {}", self.study);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value `{value}` for `{key}`"))
}
