//! Experiment description: a flat key/value file plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mta_core::simgen::DEFAULT_CALIBRATION_DRAWS;
use mta_core::{LambdaRule, Method, Setting, SigmaRule, SnrScale};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A validated experiment grid.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub settings: Vec<Setting>,
    /// Empty when rows come from a design file.
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
    pub q: Vec<f64>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub n_slices: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub sparsity: usize,
    pub coef_sd: Option<f64>,
    pub n_perm: usize,
    pub lambda_rule: LambdaRule,
    pub fdp_offset: f64,
    pub sigma1: f64,
    pub sigma: Option<f64>,
    pub snr_scale: SnrScale,
    pub calibration_draws: usize,
    pub design_file: Option<PathBuf>,
    pub out: PathBuf,
    pub format: Format,
}

/// Keys accepted in a spec file; each is also a command-line flag.
pub const KEYS: &[&str] = &[
    "setting",
    "rho",
    "psi",
    "q",
    "reps",
    "methods",
    "H",
    "seed",
    "n",
    "p",
    "sparsity",
    "coef_sd",
    "n_perm",
    "lambda_rule",
    "kappa",
    "lambda",
    "fdp_offset",
    "sigma1",
    "sigma",
    "snr_scale",
    "calibration_draws",
    "design_file",
    "out",
    "format",
];

fn canonical_key(key: &str) -> Option<&'static str> {
    let k = key.replace('-', "_");
    let k = match k.as_str() {
        "settings" => "setting",
        "n_reps" => "reps",
        "method" => "methods",
        "h" | "n_slices" => "H",
        other => return KEYS.iter().copied().find(|&c| c == other),
    };
    Some(k)
}

/// Raw key/value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default)]
pub struct RawSpec {
    values: BTreeMap<&'static str, Value>,
}

impl RawSpec {
    /// Parse JSON, falling back to TOML.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(json_err) => toml::from_str(text).map_err(|toml_err| {
                CliError::Invalid(format!(
                    "spec is neither JSON ({json_err}) nor TOML ({})",
                    toml_err.message()
                ))
            })?,
        };
        let Value::Object(map) = value else {
            return Err(CliError::Invalid("spec must be a key/value table".into()));
        };
        let mut raw = RawSpec::default();
        for (k, v) in map {
            raw.set(&k, v)?;
        }
        Ok(raw)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read spec {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<(), CliError> {
        let k = canonical_key(key).ok_or_else(|| CliError::Invalid(format!("unknown field `{key}`")))?;
        self.values.insert(k, value);
        Ok(())
    }

    /// Override `key` with a flag value such as `0,0.4`.
    pub fn set_flag(&mut self, key: &str, text: &str) -> Result<(), CliError> {
        self.set(key, Value::String(text.to_owned()))
    }

    fn get(&self, key: &'static str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn build(&self) -> Result<ExperimentSpec, CliError> {
        let f64s = |key| self.get(key).map(|v| f64_list(key, v)).transpose();
        let f64_one = |key| self.get(key).map(|v| scalar(key, v, parse_f64)).transpose();
        let usize_one = |key| self.get(key).map(|v| scalar(key, v, parse_usize)).transpose();
        let string = |key| self.get(key).map(|v| scalar(key, v, |s| Ok(s.to_owned()))).transpose();

        let settings = match self.get("setting") {
            None => vec![Setting::One],
            Some(v) => f64_list("setting", v)?
                .into_iter()
                .map(|s| {
                    if s.fract() != 0.0 || !(1.0..=4.0).contains(&s) {
                        return Err(invalid("setting", s, "must be 1, 2, 3 or 4"));
                    }
                    Ok(Setting::try_from(s as u8).expect("checked range"))
                })
                .collect::<Result<_, _>>()?,
        };
        let design_file = string("design_file")?.map(PathBuf::from);
        let rho = match (f64s("rho")?, &design_file) {
            (Some(_), Some(_)) => {
                return Err(CliError::Invalid(
                    "field `rho` cannot be combined with `design_file`".into(),
                ))
            }
            (Some(r), None) => r,
            (None, None) => vec![0.0],
            (None, Some(_)) => Vec::new(),
        };
        for &r in &rho {
            if !(0.0..1.0).contains(&r) {
                return Err(invalid("rho", r, "must be in [0, 1)"));
            }
        }
        let psi = f64s("psi")?.unwrap_or_default();
        for &v in &psi {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("psi", v, "must be positive"));
            }
        }
        let q = f64s("q")?.unwrap_or_else(|| vec![0.1]);
        for &v in &q {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid("q", v, "must be in (0, 1)"));
            }
        }
        let non_empty = |key: &str, len: usize| {
            if len == 0 {
                Err(CliError::Invalid(format!("field `{key}` is an empty list")))
            } else {
                Ok(())
            }
        };
        non_empty("setting", settings.len())?;
        non_empty("q", q.len())?;
        if design_file.is_none() {
            non_empty("rho", rho.len())?;
        }
        if self.get("psi").is_some() {
            non_empty("psi", psi.len())?;
        }

        let reps = usize_one("reps")?.unwrap_or(50);
        if reps == 0 {
            return Err(invalid("reps", 0, "must be at least 1"));
        }
        let methods = match self.get("methods") {
            None => vec![Method::Mta],
            Some(v) => string_list("methods", v)?
                .iter()
                .map(|m| m.parse::<Method>().map_err(|e| CliError::Invalid(format!("field `methods`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?,
        };
        non_empty("methods", methods.len())?;
        let n_slices = usize_one("H")?.unwrap_or(mta_core::sir::DEFAULT_SLICES);
        if n_slices < 2 {
            return Err(invalid("H", n_slices, "must be at least 2"));
        }
        let seed = match self.get("seed") {
            None => 1,
            Some(v) => scalar("seed", v, |s| s.parse::<u64>().map_err(|e| e.to_string()))?,
        };
        let n = usize_one("n")?.unwrap_or(1000);
        let p = usize_one("p")?.unwrap_or(200);
        if n < 4 {
            return Err(invalid("n", n, "must be at least 4"));
        }
        if p == 0 {
            return Err(invalid("p", p, "must be at least 1"));
        }
        let sparsity = usize_one("sparsity")?.unwrap_or(20.min(p));
        if sparsity == 0 || sparsity > p {
            return Err(invalid("sparsity", sparsity, "must be in 1..=p"));
        }
        let coef_sd = f64_one("coef_sd")?;
        if let Some(sd) = coef_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(invalid("coef_sd", sd, "must be positive"));
            }
        }
        let n_perm = usize_one("n_perm")?.unwrap_or(mta_core::baselines::DEFAULT_PERMUTATIONS);
        if n_perm < 99 {
            return Err(invalid("n_perm", n_perm, "must be at least 99"));
        }
        let lambda_rule = self.lambda_rule()?;
        let fdp_offset = f64_one("fdp_offset")?.unwrap_or(0.0);
        if !(fdp_offset >= 0.0 && fdp_offset.is_finite()) {
            return Err(invalid("fdp_offset", fdp_offset, "must be non-negative"));
        }
        let sigma1 = f64_one("sigma1")?.unwrap_or(0.5);
        if !(sigma1 > 0.0 && sigma1.is_finite()) {
            return Err(invalid("sigma1", sigma1, "must be positive"));
        }
        let sigma = f64_one("sigma")?;
        if let Some(s) = sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("sigma", s, "must be non-negative"));
            }
            if !psi.is_empty() {
                return Err(CliError::Invalid("field `sigma` cannot be combined with `psi`".into()));
            }
        }
        let snr_scale = match string("snr_scale")?.as_deref() {
            None | Some("linear") => SnrScale::Linear,
            Some("squared") => SnrScale::Squared,
            Some(other) => return Err(invalid("snr_scale", other, "expected `linear` or `squared`")),
        };
        let calibration_draws = usize_one("calibration_draws")?.unwrap_or(DEFAULT_CALIBRATION_DRAWS);
        if calibration_draws < 100 {
            return Err(invalid("calibration_draws", calibration_draws, "must be at least 100"));
        }
        let out = string("out")?.map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"));
        let format = match string("format")?.as_deref() {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => return Err(invalid("format", other, "expected `csv` or `json`")),
        };
        Ok(ExperimentSpec {
            settings,
            rho,
            psi,
            q,
            reps,
            methods,
            n_slices,
            seed,
            n,
            p,
            sparsity,
            coef_sd,
            n_perm,
            lambda_rule,
            fdp_offset,
            sigma1,
            sigma,
            snr_scale,
            calibration_draws,
            design_file,
            out,
            format,
        })
    }

    fn lambda_rule(&self) -> Result<LambdaRule, CliError> {
        let name = match self.get("lambda_rule") {
            None => "scaled".to_owned(),
            Some(v) => scalar("lambda_rule", v, |s| Ok(s.to_owned()))?,
        };
        let kappa = self.get("kappa").map(|v| scalar("kappa", v, parse_f64)).transpose()?;
        let lambda = self.get("lambda").map(|v| scalar("lambda", v, parse_f64)).transpose()?;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(invalid(key, v, "must be positive"))
            }
        };
        match name.replace('-', "_").as_str() {
            "scaled" => Ok(LambdaRule::Scaled {
                kappa: positive("kappa", kappa.unwrap_or(0.5))?,
            }),
            "fixed" => {
                let lambda = lambda.ok_or_else(|| {
                    CliError::Invalid("field `lambda` is required when `lambda_rule` is `fixed`".into())
                })?;
                Ok(LambdaRule::Fixed {
                    lambda: positive("lambda", lambda)?,
                })
            }
            "exact_inverse" => Ok(LambdaRule::ExactInverse),
            other => Err(invalid(
                "lambda_rule",
                other,
                "expected `scaled`, `fixed` or `exact_inverse`",
            )),
        }
    }
}

impl ExperimentSpec {
    pub fn sigma_rule(&self, psi: Option<f64>) -> SigmaRule {
        match (psi, self.sigma) {
            (Some(psi), _) => SigmaRule::Psi { psi },
            (None, Some(sigma)) => SigmaRule::Fixed { sigma },
            (None, None) => SigmaRule::SnrMatched {
                sigma1: self.sigma1,
                draws: self.calibration_draws,
                scale: self.snr_scale,
            },
        }
    }
}

fn invalid(key: &str, value: impl std::fmt::Display, why: &str) -> CliError {
    CliError::Invalid(format!("invalid value for field `{key}`: {value} ({why})"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| e.to_string())
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.trim().parse::<usize>().map_err(|e| e.to_string())
}

/// A single value given as a JSON scalar or as text.
fn scalar<T>(key: &str, v: &Value, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, CliError> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        _ => return Err(CliError::Invalid(format!("field `{key}` must be a single value"))),
    };
    parse(&text).map_err(|e| CliError::Invalid(format!("invalid value for field `{key}`: {text} ({e})")))
}

fn string_list(key: &str, v: &Value) -> Result<Vec<String>, CliError> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|item| scalar(key, item, |s| Ok(s.to_owned())))
            .collect(),
        Value::String(s) => Ok(s
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect()),
        other => Ok(vec![scalar(key, other, |s| Ok(s.to_owned()))?]),
    }
}

fn f64_list(key: &str, v: &Value) -> Result<Vec<f64>, CliError> {
    string_list(key, v)?
        .iter()
        .map(|s| {
            parse_f64(s).map_err(|e| CliError::Invalid(format!("invalid value for field `{key}`: {s} ({e})")))
        })
        .collect()
}
