//! Flat `key = value` experiment configuration: strict parsing, per-key
//! validation, flag merging, and the canonical digest that stamps every
//! artifact a run emits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use riesz_lab::moments::{PhiSpec, PsiSpec};
use riesz_lab::rational::{fmt_rat, parse_rat, rat, Rat};
use sha2::{Digest, Sha256};

/// A configuration or argument problem; the process exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Every key a configuration file may contain.
const KNOWN_KEYS: &[&str] = &[
    "structure",
    "q",
    "weights",
    "ends",
    "psi",
    "phi",
    "t",
    "radius",
    "levels",
    "extra_depth",
    "function",
    "battery",
    "theorem",
    "seed",
    "replicas",
    "paths",
    "samples",
    "out",
];

const STRUCTURES: &[&str] = &["tree", "weighted", "disk"];
const FUNCTIONS: &[&str] = &["green-pole", "exp-growth", "majorant-example"];
const THEOREMS: &[&str] = &["green", "majorant", "divergence", "upsilon"];
const BATTERIES: &[&str] = &[
    "all",
    "cylinder",
    "visits",
    "truncated",
    "weighted",
    "wos-measure",
    "wos-green",
    "formulas",
    "arc-mass",
    "blaschke",
    "boundary-integral",
];

/// Validates one value and returns its canonical spelling (rationals are
/// reduced, integers re-printed), so that equivalent configurations hash
/// identically.
fn canonical_value(key: &str, value: &str) -> Result<String, ConfigError> {
    let bad = |what: &str| ConfigError(format!("key `{key}`: {what} (got `{value}`)"));
    match key {
        "structure" => token(value, STRUCTURES).map_err(|_| bad("expected tree, weighted or disk")),
        "function" => token(value, FUNCTIONS)
            .map_err(|_| bad("expected green-pole, exp-growth or majorant-example")),
        "theorem" => token(value, THEOREMS)
            .map_err(|_| bad("expected green, majorant, divergence or upsilon")),
        "battery" => token(value, BATTERIES).map_err(|_| bad("unknown battery name")),
        "weights" | "out" => {
            if value.is_empty() {
                Err(bad("expected a path"))
            } else {
                Ok(value.to_string())
            }
        }
        "ends" => {
            if value.split(',').any(|e| e.trim().is_empty()) {
                Err(bad("expected a comma-separated list of end literals"))
            } else {
                Ok(value
                    .split(',')
                    .map(|e| e.trim().to_string())
                    .collect::<Vec<_>>()
                    .join(", "))
            }
        }
        "psi" => parse_psi(value).map(|_| value.to_string()),
        "phi" => parse_phi(value).map(|_| value.to_string()),
        "t" => {
            let mut parts = Vec::new();
            for item in value.split(',') {
                let r = parse_rat(item.trim()).map_err(|e| bad(&e))?;
                if r <= rat(0) || r >= rat(1) {
                    return Err(bad("each threshold must lie strictly between 0 and 1"));
                }
                parts.push(fmt_rat(&r));
            }
            Ok(parts.join(", "))
        }
        "q" => int_in(value, 2, 64).map_err(|w| bad(&w)),
        "radius" => int_in(value, 0, 16).map_err(|w| bad(&w)),
        "levels" => int_in(value, 1, 64).map_err(|w| bad(&w)),
        "extra_depth" => int_in(value, 0, 8).map_err(|w| bad(&w)),
        "seed" => value
            .parse::<u64>()
            .map(|s| s.to_string())
            .map_err(|_| bad("expected an unsigned integer")),
        "replicas" => int_in(value, 1, 64).map_err(|w| bad(&w)),
        "paths" => int_in(value, 1, 10_000_000).map_err(|w| bad(&w)),
        "samples" => int_in(value, 1, 100_000).map_err(|w| bad(&w)),
        _ => Err(ConfigError(format!("unknown configuration key `{key}`"))),
    }
}

fn token(value: &str, allowed: &[&str]) -> Result<String, ()> {
    if allowed.contains(&value) {
        Ok(value.to_string())
    } else {
        Err(())
    }
}

fn int_in(value: &str, lo: u64, hi: u64) -> Result<String, String> {
    match value.parse::<u64>() {
        Ok(n) if (lo..=hi).contains(&n) => Ok(n.to_string()),
        Ok(_) => Err(format!("expected an integer in {lo}..={hi}")),
        Err(_) => Err("expected an unsigned integer".into()),
    }
}

/// Decay-cap literal: `power:SCALE:EXPONENT[:DIAM]` or
/// `logpow:SCALE:EXPONENT:LOGPOWER[:DIAM]`, all fields rational.
pub fn parse_psi(spec: &str) -> Result<PsiSpec, ConfigError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let r = |s: &str| parse_rat(s).map_err(|e| ConfigError(format!("psi `{spec}`: {e}")));
    let built = match parts.as_slice() {
        ["power", scale, exp] => PsiSpec::power_law(r(scale)?, r(exp)?, rat(1)),
        ["power", scale, exp, diam] => PsiSpec::power_law(r(scale)?, r(exp)?, r(diam)?),
        ["logpow", scale, exp, lp] => PsiSpec::log_power(r(scale)?, r(exp)?, r(lp)?, rat(1)),
        ["logpow", scale, exp, lp, diam] => {
            PsiSpec::log_power(r(scale)?, r(exp)?, r(lp)?, r(diam)?)
        }
        _ => {
            return fail(format!(
                "psi `{spec}`: expected power:SCALE:EXP[:DIAM] or logpow:SCALE:EXP:LOGPOW[:DIAM]"
            ))
        }
    };
    built.map_err(|e| ConfigError(format!("psi `{spec}`: {e}")))
}

/// Grade literal: `power:SCALE:EXPONENT`, fields rational.
pub fn parse_phi(spec: &str) -> Result<PhiSpec, ConfigError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let r = |s: &str| parse_rat(s).map_err(|e| ConfigError(format!("phi `{spec}`: {e}")));
    match parts.as_slice() {
        ["power", scale, exp] => {
            PhiSpec::power_law(r(scale)?, r(exp)?).map_err(|e| ConfigError(format!("phi `{spec}`: {e}")))
        }
        _ => fail(format!("phi `{spec}`: expected power:SCALE:EXP")),
    }
}

/// The parsed, validated contents of a configuration file.
#[derive(Debug, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig::default()
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return fail(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    idx + 1
                ));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return fail(format!(
                    "{}:{}: unknown configuration key `{key}`",
                    path.display(),
                    idx + 1
                ));
            }
            let value = canonical_value(&key, value.trim())
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            if entries.insert(key.clone(), value).is_some() {
                return fail(format!(
                    "{}:{}: key `{key}` appears more than once",
                    path.display(),
                    idx + 1
                ));
            }
        }
        if entries.is_empty() {
            return fail(format!("{}: configuration is empty", path.display()));
        }
        Ok(FileConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

/// The merged, effective settings of one run: command-line flags override
/// file entries, which override defaults. Every consulted setting is
/// recorded in canonical form, and the record is what gets hashed.
pub struct Eff<'a> {
    file: &'a FileConfig,
    pub settings: BTreeMap<String, String>,
}

impl<'a> Eff<'a> {
    pub fn new(file: &'a FileConfig) -> Self {
        Eff { file, settings: BTreeMap::new() }
    }

    /// Resolve `key` from flag, file, then default; validate; record.
    pub fn value(
        &mut self,
        key: &str,
        flag: Option<&str>,
        default: &str,
    ) -> Result<String, ConfigError> {
        let raw = flag.or_else(|| self.file.get(key)).unwrap_or(default);
        let canon = canonical_value(key, raw)?;
        self.settings.insert(key.to_string(), canon.clone());
        Ok(canon)
    }

    /// Resolve a setting that may be absent altogether.
    pub fn optional(&mut self, key: &str, flag: Option<&str>) -> Result<Option<String>, ConfigError> {
        match flag.or_else(|| self.file.get(key)) {
            None => Ok(None),
            Some(raw) => {
                let canon = canonical_value(key, raw)?;
                self.settings.insert(key.to_string(), canon.clone());
                Ok(Some(canon))
            }
        }
    }

    /// Resolve a setting that has no sensible default.
    pub fn required(&mut self, key: &str, flag: Option<&str>) -> Result<String, ConfigError> {
        self.optional(key, flag)?
            .ok_or_else(|| ConfigError(format!("missing required setting `{key}`")))
    }

    /// Record a positional query argument; it shapes the output, so it
    /// takes part in the configuration hash like any setting.
    pub fn record_arg(&mut self, name: &str, value: String) {
        self.settings.insert(format!("arg.{name}"), value);
    }

    pub fn u32_value(&mut self, key: &str, flag: Option<&str>, default: &str) -> Result<u32, ConfigError> {
        Ok(self.value(key, flag, default)?.parse().expect("validated integer"))
    }

    pub fn u64_value(&mut self, key: &str, flag: Option<&str>, default: &str) -> Result<u64, ConfigError> {
        Ok(self.value(key, flag, default)?.parse().expect("validated integer"))
    }

    pub fn usize_value(
        &mut self,
        key: &str,
        flag: Option<&str>,
        default: &str,
    ) -> Result<usize, ConfigError> {
        Ok(self.value(key, flag, default)?.parse().expect("validated integer"))
    }

    pub fn rat_list(&mut self, key: &str, flag: Option<&str>, default: &str) -> Result<Vec<Rat>, ConfigError> {
        let canon = self.value(key, flag, default)?;
        Ok(canon
            .split(',')
            .map(|item| parse_rat(item.trim()).expect("validated rational"))
            .collect())
    }

    pub fn str_list(&mut self, key: &str, flag: Option<&str>, default: &str) -> Result<Vec<String>, ConfigError> {
        let canon = self.value(key, flag, default)?;
        Ok(canon.split(',').map(|item| item.trim().to_string()).collect())
    }
}

/// SHA-256 of the canonical `key = value` rendering of the effective
/// settings, subcommand included; hex encoded.
pub fn digest(subcommand: &str, settings: &BTreeMap<String, String>) -> String {
    let mut canon = format!("subcommand = {subcommand}\n");
    for (key, value) in settings {
        canon.push_str(key);
        canon.push_str(" = ");
        canon.push_str(value);
        canon.push('\n');
    }
    let hash = Sha256::digest(canon.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}
