//! Experiment configuration documents.
//!
//! A document is a flat list of `key = value` lines grouped under the
//! sections `[problem]`, `[attack]`, `[aggregator]` and `[engine]`. Values
//! are bare tokens or double-quoted strings; `#` starts a comment. Unknown
//! keys and repeated keys are errors, reported with line numbers.
//!
//! ```text
//! [problem]
//! kind = "quadratic"
//! dim = 20
//! smoothness = 10
//! strong_convexity = 1
//! noise = 0.5
//! workers = 10
//!
//! [attack]
//! kind = "random-gradient"
//! fraction = 60
//!
//! [aggregator]
//! kind = "bant"
//!
//! [engine]
//! rounds = 2000
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::aggregation::{MirrorOptions, SimilarityKind};
use crate::attacks::{AttackKind, AttackSpec, SchedulePolicy};
use crate::engine::{AggregatorSpec, AttackConfig, ExperimentConfig, PreconditionerConfig, PreconditionerKind};
use crate::problems::{ProblemFamily, ProblemKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// One or more problems found in a configuration document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub diagnostics: Vec<Diagnostic>,
}

impl ConfigError {
    fn single(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            diagnostics: vec![Diagnostic {
                line,
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

const SECTIONS: [&str; 4] = ["problem", "attack", "aggregator", "engine"];

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "problem" => &[
            "kind",
            "dim",
            "smoothness",
            "strong_convexity",
            "noise",
            "delta1",
            "delta2",
            "workers",
            "samples_per_worker",
            "optimum_scale",
        ],
        "attack" => &["kind", "fraction", "policy", "kappa", "scale", "z"],
        "aggregator" => &[
            "kind",
            "step",
            "momentum",
            "mirror_step",
            "mirror_iters",
            "similarity",
            "temperature",
            "rho",
            "trim",
            "clip_radius",
            "clip_iters",
            "trial_size",
        ],
        "engine" => &[
            "rounds",
            "local_steps",
            "participation",
            "preconditioner",
            "precond_beta",
            "precond_floor",
            "seed",
            "threads",
            "record_wall_time",
            "verbose",
        ],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// A parsed but not yet interpreted document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigDocument {
    entries: BTreeMap<(String, String), Entry>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_value(raw: &str) -> std::result::Result<String, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err("missing value".into());
    }
    if let Some(rest) = raw.strip_prefix('"') {
        return match rest.strip_suffix('"') {
            Some(inner) if !inner.contains('"') => Ok(inner.to_string()),
            _ => Err(format!("malformed quoted value `{raw}`")),
        };
    }
    if raw.contains(char::is_whitespace) || raw.contains('"') {
        return Err(format!("value `{raw}` must be a single token or a quoted string"));
    }
    Ok(raw.to_string())
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = ConfigDocument::default();
        let mut diags = Vec::new();
        let mut section: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if SECTIONS.contains(&name) => section = Some(name.to_string()),
                    Some(name) => {
                        diags.push(Diagnostic {
                            line: Some(line_no),
                            message: format!(
                                "unknown section `[{name}]` (expected one of problem, attack, aggregator, engine)"
                            ),
                        });
                        section = None;
                    }
                    None => diags.push(Diagnostic {
                        line: Some(line_no),
                        message: "malformed section header".into(),
                    }),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                diags.push(Diagnostic {
                    line: Some(line_no),
                    message: format!("expected `key = value`, found `{line}`"),
                });
                continue;
            };
            let key = key.trim();
            let Some(sec) = section.clone() else {
                diags.push(Diagnostic {
                    line: Some(line_no),
                    message: format!("key `{key}` appears outside a known section"),
                });
                continue;
            };
            if !known_keys(&sec).contains(&key) {
                diags.push(Diagnostic {
                    line: Some(line_no),
                    message: format!("unknown key `{key}` in [{sec}]"),
                });
                continue;
            }
            let value = match parse_value(value) {
                Ok(v) => v,
                Err(msg) => {
                    diags.push(Diagnostic {
                        line: Some(line_no),
                        message: format!("`{key}`: {msg}"),
                    });
                    continue;
                }
            };
            let slot = (sec.clone(), key.to_string());
            if let Some(prev) = doc.entries.get(&slot) {
                diags.push(Diagnostic {
                    line: Some(line_no),
                    message: format!(
                        "duplicate key `{key}` in [{sec}] (first set on line {}, again on line {line_no})",
                        prev.line
                    ),
                });
                continue;
            }
            doc.entries.insert(slot, Entry { value, line: line_no });
        }
        if diags.is_empty() {
            Ok(doc)
        } else {
            Err(ConfigError { diagnostics: diags })
        }
    }

    /// Overrides (or adds) a value. Used by sweeps and CLI flags.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        if !known_keys(section).contains(&key) {
            return Err(ConfigError::single(None, format!("unknown key `{key}` in [{section}]")));
        }
        self.entries.insert(
            (section.to_string(), key.to_string()),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn remove(&mut self, section: &str, key: &str) {
        self.entries.remove(&(section.to_string(), key.to_string()));
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(|e| e.value.as_str())
    }

    pub fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut r = Reader { doc: self, diags: Vec::new() };
        let cfg = r.build();
        match (cfg, r.diags.is_empty()) {
            (Some(cfg), true) => Ok(cfg),
            _ => Err(ConfigError { diagnostics: r.diags }),
        }
    }
}

struct Reader<'a> {
    doc: &'a ConfigDocument,
    diags: Vec<Diagnostic>,
}

impl Reader<'_> {
    fn entry(&self, sec: &str, key: &str) -> Option<&Entry> {
        self.doc.entries.get(&(sec.to_string(), key.to_string()))
    }

    fn err(&mut self, sec: &str, key: &str, message: String) {
        let line = self.entry(sec, key).map(|e| e.line).filter(|l| *l > 0);
        self.diags.push(Diagnostic {
            line,
            message: format!("[{sec}] `{key}`: {message}"),
        });
    }

    fn typed<T: std::str::FromStr>(&mut self, sec: &str, key: &str, what: &str) -> Option<T> {
        let raw = self.entry(sec, key)?.value.clone();
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err(sec, key, format!("expected {what}, found `{raw}`"));
                None
            }
        }
    }

    fn real(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        self.typed::<f64>(sec, key, "a number").unwrap_or(default)
    }

    fn opt_real(&mut self, sec: &str, key: &str) -> Option<f64> {
        self.typed::<f64>(sec, key, "a number")
    }

    fn count(&mut self, sec: &str, key: &str, default: u64) -> u64 {
        self.typed::<u64>(sec, key, "a nonnegative integer").unwrap_or(default)
    }

    fn flag(&mut self, sec: &str, key: &str, default: bool) -> bool {
        self.typed::<bool>(sec, key, "true or false").unwrap_or(default)
    }

    fn required_real(&mut self, sec: &str, key: &str, reason: &str) -> f64 {
        if self.entry(sec, key).is_none() {
            self.diags.push(Diagnostic {
                line: None,
                message: format!("[{sec}] `{key}` is required {reason}"),
            });
            return f64::NAN;
        }
        self.real(sec, key, f64::NAN)
    }

    fn text(&self, sec: &str, key: &str) -> Option<String> {
        self.entry(sec, key).map(|e| e.value.clone())
    }

    fn choice<T: Copy>(&mut self, sec: &str, key: &str, options: &[(&str, T)]) -> Option<T> {
        let raw = self.text(sec, key)?;
        match options.iter().find(|(name, _)| *name == raw) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(sec, key, format!("`{raw}` is not one of {}", names.join(", ")));
                None
            }
        }
    }

    fn range(&mut self, sec: &str, key: &str, v: f64, ok: bool, expect: &str) {
        if !ok && !v.is_nan() {
            self.err(sec, key, format!("{v} is out of range ({expect})"));
        }
    }

    fn build(&mut self) -> Option<ExperimentConfig> {
        let kind = self.choice(
            "problem",
            "kind",
            &[
                ("quadratic", ProblemKind::Quadratic),
                ("logistic", ProblemKind::Logistic),
                ("nonconvex-sine", ProblemKind::NonconvexSine),
            ],
        );
        if self.entry("problem", "kind").is_none() {
            self.diags.push(Diagnostic {
                line: None,
                message: "[problem] `kind` is required".into(),
            });
        }
        let dim = self.count("problem", "dim", 0) as usize;
        if self.entry("problem", "dim").is_none() {
            self.diags.push(Diagnostic {
                line: None,
                message: "[problem] `dim` is required".into(),
            });
        }
        let smoothness = self.required_real("problem", "smoothness", "");
        let mu = self.real("problem", "strong_convexity", 0.0);
        let noise = self.real("problem", "noise", 0.0);
        let delta1 = self.real("problem", "delta1", 0.0);
        let delta2 = self.real("problem", "delta2", 0.0);
        let workers = self.count("problem", "workers", 10) as usize;
        let samples = self.count("problem", "samples_per_worker", 64) as usize;
        let optimum_scale = self.real("problem", "optimum_scale", 1.0);
        self.range("problem", "smoothness", smoothness, smoothness > 0.0, "L > 0");
        self.range("problem", "strong_convexity", mu, mu >= 0.0 && mu <= smoothness, "0 <= mu <= L");
        self.range("problem", "noise", noise, noise >= 0.0, "sigma >= 0");
        self.range("problem", "delta1", delta1, delta1 >= 0.0, ">= 0");
        self.range("problem", "delta2", delta2, (0.0..1.0 / 12.0).contains(&delta2), "0 <= delta2 < 1/12");
        if workers < 2 {
            self.err("problem", "workers", format!("{workers} is out of range (at least 2)"));
        }
        if dim == 0 && self.entry("problem", "dim").is_some() {
            self.err("problem", "dim", "must be at least 1".into());
        }

        let attack_kind = self.choice(
            "attack",
            "kind",
            &[
                ("none", None),
                ("label-flip", Some(AttackKind::LabelFlip)),
                ("sign-flip", Some(AttackKind::SignFlip)),
                ("random-gradient", Some(AttackKind::RandomGradient)),
                ("ipm", Some(AttackKind::Ipm)),
                ("alie", Some(AttackKind::Alie)),
            ],
        );
        let fraction = self.real("attack", "fraction", 0.0);
        self.range("attack", "fraction", fraction, (0.0..100.0).contains(&fraction), "0 <= fraction < 100 percent");
        let policy = self
            .choice(
                "attack",
                "policy",
                &[("static", SchedulePolicy::Static), ("resample", SchedulePolicy::ResamplePerRound)],
            )
            .unwrap_or(SchedulePolicy::Static);
        let kappa = self.real("attack", "kappa", 0.5);
        self.range("attack", "kappa", kappa, kappa > 0.0, "kappa > 0");
        let z = self.real("attack", "z", 1.0);
        let scale = match self.opt_real("attack", "scale") {
            Some(s) => {
                self.range("attack", "scale", s, s > 0.0, "scale > 0");
                s
            }
            None => 10.0 * noise,
        };
        let attack_spec = attack_kind.flatten().map(|kind| AttackSpec { kind, kappa, scale, z });
        if let Some(spec) = &attack_spec {
            if spec.kind == AttackKind::RandomGradient && !(spec.scale > 0.0) && !noise.is_nan() {
                self.diags.push(Diagnostic {
                    line: None,
                    message: "[attack] `scale` is required for random-gradient when noise is 0".into(),
                });
            }
        }
        if attack_spec.is_none() && fraction > 0.0 {
            self.err("attack", "fraction", "a Byzantine fraction needs an attack kind".into());
        }

        let agg_kind = self.choice(
            "aggregator",
            "kind",
            &[
                ("mean", "mean"),
                ("median", "median"),
                ("bant", "bant"),
                ("autobant", "autobant"),
                ("simbant", "simbant"),
                ("zeno", "zeno"),
                ("centered-clip", "centered-clip"),
            ],
        );
        if self.entry("aggregator", "kind").is_none() {
            self.diags.push(Diagnostic {
                line: None,
                message: "[aggregator] `kind` is required".into(),
            });
        }
        let momentum = self.real("aggregator", "momentum", 0.5);
        let needs_momentum = matches!(agg_kind, Some("bant") | Some("simbant"));
        if needs_momentum {
            self.range("aggregator", "momentum", momentum, momentum > 0.0 && momentum <= 1.0, "0 < beta <= 1");
        }
        let default_step = 1.0 / (13.0 * smoothness);
        let step = self.real("aggregator", "step", default_step);
        self.range("aggregator", "step", step, step > 0.0 && step.is_finite(), "gamma > 0");
        let trial_size = self.count("aggregator", "trial_size", 500) as usize;
        if trial_size == 0 {
            self.err("aggregator", "trial_size", "must be at least 1".into());
        }
        let aggregator = match agg_kind {
            Some("mean") => Some(AggregatorSpec::Mean),
            Some("median") => Some(AggregatorSpec::Median),
            Some("bant") => Some(AggregatorSpec::Bant { momentum }),
            Some("autobant") => {
                let mirror_step = self.real("aggregator", "mirror_step", 1.0);
                let iters = self.count("aggregator", "mirror_iters", 60) as usize;
                self.range("aggregator", "mirror_step", mirror_step, mirror_step > 0.0, "eta > 0");
                if iters == 0 {
                    self.err("aggregator", "mirror_iters", "must be at least 1".into());
                }
                Some(AggregatorSpec::AutoBant {
                    mirror: MirrorOptions {
                        step: mirror_step,
                        iters,
                    },
                })
            }
            Some("simbant") => {
                let similarity = self
                    .choice(
                        "aggregator",
                        "similarity",
                        &[("abs-diff", SimilarityKind::AbsDiff), ("cosine", SimilarityKind::Cosine)],
                    )
                    .unwrap_or(SimilarityKind::AbsDiff);
                let temperature = self.real("aggregator", "temperature", 0.05);
                self.range("aggregator", "temperature", temperature, temperature > 0.0, "T > 0");
                Some(AggregatorSpec::SimBant {
                    momentum,
                    similarity,
                    temperature,
                })
            }
            Some("zeno") => {
                let rho = self.required_real("aggregator", "rho", "for zeno (no default is endorsed)");
                self.range("aggregator", "rho", rho, rho >= 0.0, "rho >= 0");
                if self.entry("aggregator", "trim").is_none() {
                    self.diags.push(Diagnostic {
                        line: None,
                        message: "[aggregator] `trim` is required for zeno".into(),
                    });
                }
                let trim = self.count("aggregator", "trim", 0) as usize;
                Some(AggregatorSpec::Zeno { rho, trim })
            }
            Some("centered-clip") => {
                let radius = self.required_real("aggregator", "clip_radius", "for centered-clip");
                self.range("aggregator", "clip_radius", radius, radius > 0.0, "tau > 0");
                let iters = self.count("aggregator", "clip_iters", 1) as usize;
                if iters == 0 {
                    self.err("aggregator", "clip_iters", "must be at least 1".into());
                }
                Some(AggregatorSpec::CenteredClip { radius, iters })
            }
            _ => None,
        };

        let rounds = self.count("engine", "rounds", 1000);
        let local_steps = self.count("engine", "local_steps", 1);
        if local_steps == 0 {
            self.err("engine", "local_steps", "must be at least 1".into());
        }
        let participation = self.real("engine", "participation", 1.0);
        self.range(
            "engine",
            "participation",
            participation,
            participation > 0.0 && participation <= 1.0,
            "0 < rate <= 1",
        );
        let pkind = self
            .choice(
                "engine",
                "preconditioner",
                &[
                    ("identity", PreconditionerKind::Identity),
                    ("adam-like", PreconditionerKind::AdamLike),
                    ("rmsprop-like", PreconditionerKind::RmspropLike),
                ],
            )
            .unwrap_or(PreconditionerKind::Identity);
        let pbeta = self.real("engine", "precond_beta", pkind.default_beta());
        self.range("engine", "precond_beta", pbeta, (0.0..1.0).contains(&pbeta), "0 <= beta < 1");
        let pfloor = self.real("engine", "precond_floor", 1e-8);
        self.range("engine", "precond_floor", pfloor, pfloor > 0.0, "e > 0");
        let seed = self.count("engine", "seed", 0);
        let threads = self.count("engine", "threads", 0) as usize;
        let record_wall_time = self.flag("engine", "record_wall_time", false);
        let verbose = self.flag("engine", "verbose", false);

        let kind = kind?;
        let aggregator = aggregator?;
        if !self.diags.is_empty() {
            return None;
        }
        Some(ExperimentConfig {
            problem: ProblemFamily {
                kind,
                dim,
                smoothness,
                strong_convexity: mu,
                noise,
                delta1,
                delta2,
                samples_per_worker: samples,
                optimum_scale,
            },
            workers,
            attack: AttackConfig {
                spec: attack_spec,
                fraction,
                policy,
            },
            aggregator,
            step,
            trial_size,
            rounds,
            local_steps,
            participation,
            preconditioner: PreconditionerConfig {
                kind: pkind,
                beta: pbeta,
                floor: pfloor,
            },
            seed,
            threads,
            record_wall_time,
            verbose,
        })
    }
}

/// Parses and interprets a configuration document. Engine-level checks
/// (for example Zeno's trim against the active worker count) run when the
/// experiment is built.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    ConfigDocument::parse(text)?.build()
}
