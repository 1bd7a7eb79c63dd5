//! Run configuration shared by the pipeline and the check runner.

use crate::{CliError, CliResult};
use snbody_core::ModelSpec;
use std::fmt;
use std::path::{Path, PathBuf};

/// Where a model comes from: a named built-in or a JSON file on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelSource {
    Builtin(String),
    File(PathBuf),
}

impl ModelSource {
    /// Anything naming an existing file, carrying a path separator, or
    /// ending in `.json` is treated as a file; the rest as built-ins.
    pub fn parse(s: &str) -> ModelSource {
        let p = Path::new(s);
        if p.exists() || s.contains('/') || s.ends_with(".json") {
            ModelSource::File(p.to_path_buf())
        } else {
            ModelSource::Builtin(s.to_string())
        }
    }

    /// Loads the model together with its canonical serialized form, the
    /// bytes that archive metadata hashes. `lambda` overrides the pair
    /// coupling of the harmonic-harmonic built-in and is rejected
    /// elsewhere, where it would silently do nothing.
    pub fn load(&self, lambda: Option<f64>) -> CliResult<(ModelSpec, String)> {
        let spec = match self {
            ModelSource::Builtin(name) => match (name.as_str(), lambda) {
                ("harmonic-harmonic", Some(l)) => ModelSpec::harmonic_harmonic(1.0, l),
                (_, Some(_)) => {
                    return Err(CliError::Input(format!(
                        "--lambda only configures the harmonic-harmonic built-in, not {name}"
                    )))
                }
                _ => ModelSpec::builtin(name).ok_or_else(|| {
                    CliError::Input(format!(
                        "unknown built-in model {name}; available: harmonic-harmonic, synthetic"
                    ))
                })?,
            },
            ModelSource::File(path) => {
                if lambda.is_some() {
                    return Err(CliError::Input(
                        "--lambda only configures the harmonic-harmonic built-in".into(),
                    ));
                }
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Input(format!("cannot read model file {}: {e}", path.display()))
                })?;
                ModelSpec::from_json(&text)?
            }
        };
        let canonical = serde_json::to_string(&spec)?;
        Ok((spec, canonical))
    }
}

impl fmt::Display for ModelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSource::Builtin(name) => write!(f, "{name}"),
            ModelSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

/// Parses a dimension-parameter argument, accepting decimals and `p/q`
/// fractions (`1/3` is the physical three-dimensional value).
pub fn parse_delta(s: &str) -> CliResult<f64> {
    let bad = |what: &str| CliError::Input(format!("cannot parse delta {s:?}: {what}"));
    let v = if let Some((p, q)) = s.split_once('/') {
        let num: f64 = p.trim().parse().map_err(|_| bad("bad numerator"))?;
        let den: f64 = q.trim().parse().map_err(|_| bad("bad denominator"))?;
        num / den
    } else {
        s.trim().parse().map_err(|_| bad("not a number"))?
    };
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(CliError::Input(format!("delta must lie in (0, 1], got {s}")))
    }
}

/// One named verification from the built-in suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Catalog,
    WOrthogonality,
    CgInvariance,
    BetaTables,
    Reconstruction,
    FgOracle,
    FirstOrderEnergy,
    Commutator,
    Model,
    Determinism,
}

impl CheckKind {
    pub const ALL: [CheckKind; 10] = [
        CheckKind::Catalog,
        CheckKind::WOrthogonality,
        CheckKind::CgInvariance,
        CheckKind::BetaTables,
        CheckKind::Reconstruction,
        CheckKind::FgOracle,
        CheckKind::FirstOrderEnergy,
        CheckKind::Commutator,
        CheckKind::Model,
        CheckKind::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Catalog => "catalog",
            CheckKind::WOrthogonality => "w-orthogonality",
            CheckKind::CgInvariance => "cg-invariance",
            CheckKind::BetaTables => "beta-tables",
            CheckKind::Reconstruction => "reconstruction",
            CheckKind::FgOracle => "fg-oracle",
            CheckKind::FirstOrderEnergy => "e1",
            CheckKind::Commutator => "commutator",
            CheckKind::Model => "model",
            CheckKind::Determinism => "determinism",
        }
    }

    pub fn parse(s: &str) -> CliResult<Vec<CheckKind>> {
        if s == "all" {
            return Ok(CheckKind::ALL.to_vec());
        }
        CheckKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .map(|k| vec![*k])
            .ok_or_else(|| {
                let names: Vec<&str> = CheckKind::ALL.iter().map(|k| k.name()).collect();
                CliError::Input(format!(
                    "unknown check {s:?}; available: all, {}",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything one invocation needs: the particle count, the model and its
/// knobs, the dimension parameter, output location, and the check
/// selection with its seed and tolerance override.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub n: u32,
    pub model: ModelSource,
    /// Pair-coupling override for the harmonic-harmonic built-in.
    pub lambda: Option<f64>,
    pub delta: f64,
    /// Archive directory; in-memory only when absent.
    pub out: Option<PathBuf>,
    /// Seed for the randomized checks.
    pub seed: u64,
    /// Residual bound overriding each check's default.
    pub tolerance: Option<f64>,
    pub checks: Vec<CheckKind>,
}

impl RunConfig {
    /// A configuration with the documented defaults: physical delta 1/3,
    /// seed 7, per-check default tolerances, no archive directory.
    pub fn new(n: u32, model: ModelSource) -> RunConfig {
        RunConfig {
            n,
            model,
            lambda: None,
            delta: 1.0 / 3.0,
            out: None,
            seed: 7,
            tolerance: None,
            checks: Vec::new(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(CliError::Input(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Reads the `SNBODY_THREADS` cap; unset, unparsable, or zero values mean
/// "let the runtime decide".
pub fn thread_cap() -> Option<usize> {
    std::env::var("SNBODY_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&t| t >= 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_accepts_fractions_and_rejects_out_of_range() {
        assert!((parse_delta("1/3").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(parse_delta("0.25").unwrap(), 0.25);
        assert_eq!(parse_delta("1").unwrap(), 1.0);
        assert!(parse_delta("0").is_err());
        assert!(parse_delta("1.5").is_err());
        assert!(parse_delta("-1/3").is_err());
        assert!(parse_delta("x").is_err());
    }

    #[test]
    fn model_source_distinguishes_files_from_builtins() {
        assert_eq!(
            ModelSource::parse("harmonic-harmonic"),
            ModelSource::Builtin("harmonic-harmonic".into())
        );
        assert!(matches!(ModelSource::parse("models/foo.json"), ModelSource::File(_)));
        assert!(matches!(ModelSource::parse("foo.json"), ModelSource::File(_)));
    }

    #[test]
    fn check_names_round_trip() {
        for kind in CheckKind::ALL {
            assert_eq!(CheckKind::parse(kind.name()).unwrap(), vec![kind]);
        }
        assert_eq!(CheckKind::parse("all").unwrap().len(), CheckKind::ALL.len());
        assert!(CheckKind::parse("nope").is_err());
    }

    #[test]
    fn lambda_only_applies_to_the_interacting_builtin() {
        let src = ModelSource::Builtin("synthetic".into());
        assert!(src.load(Some(0.1)).is_err());
        let src = ModelSource::Builtin("harmonic-harmonic".into());
        let (spec, canonical) = src.load(Some(0.25)).unwrap();
        assert!(canonical.contains("0.25"));
        let (default_spec, _) = src.load(None).unwrap();
        assert_ne!(
            serde_json::to_string(&spec).unwrap(),
            serde_json::to_string(&default_spec).unwrap()
        );
    }
}
