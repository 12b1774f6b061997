//! Config loading, exact-number arguments and prime tables.

use std::path::{Path, PathBuf};

use dhlab_core::dd::Dd;
use dhlab_core::exact::ExactNumber;
use dhlab_core::model::{derive_window, validate_instance, window_at_scale, ProblemInstance, RawConfig, WindowParams};
use dhlab_core::prime_tables::{build_tables, load_or_build, PrimeTables};

use crate::args::{ConfigArg, WindowSelect};
use crate::error::{CliError, CliResult, EXIT_USAGE};
use crate::manifest::sha256_hex;

pub const CACHE_ENV: &str = "DHLAB_CACHE";
pub const CACHE_FILE: &str = "primes.dhlt";
const SPF_LIMIT: u64 = 1 << 16;

pub struct Env {
    pub cache_dir: Option<PathBuf>,
}

impl Env {
    /// The flag wins over the environment variable.
    pub fn new(flag: Option<PathBuf>) -> Self {
        let cache_dir = flag.or_else(|| {
            std::env::var_os(CACHE_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        });
        Env { cache_dir }
    }

    /// Primes up to `limit` (with a little headroom), through the cache if one is set.
    pub fn tables(&self, limit: f64) -> CliResult<PrimeTables> {
        let limit = (limit.max(0.0).ceil() as u64).max(1000) + 2;
        match &self.cache_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e, EXIT_USAGE))?;
                Ok(load_or_build(&dir.join(CACHE_FILE), limit, SPF_LIMIT)?)
            }
            None => Ok(build_tables(limit, SPF_LIMIT)?),
        }
    }
}

/// Largest prime any sum or search at scale `x` touches.
pub fn prime_limit(x: f64, k: f64) -> f64 {
    x.powf(1.0 / k).max(x.sqrt()) * (1.0 + 1e-9)
}

pub fn exact(name: &str, s: &str) -> CliResult<ExactNumber> {
    s.parse::<ExactNumber>()
        .map_err(|e| CliError::from(e).with("argument", name))
}

pub fn number(name: &str, s: &str) -> CliResult<f64> {
    let v = exact(name, s)?.to_f64();
    if !v.is_finite() {
        return Err(CliError::usage(format!("{name} = {s} is not finite")).with("argument", name));
    }
    Ok(v)
}

pub fn number_dd(name: &str, s: &str) -> CliResult<Dd> {
    Ok(exact(name, s)?.to_dd())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e, EXIT_USAGE))
}

pub struct LoadedConfig {
    pub raw: RawConfig,
    pub hash: String,
}

pub fn load_config(arg: &ConfigArg) -> CliResult<LoadedConfig> {
    let raw = match &arg.config {
        Some(path) => {
            RawConfig::from_json(&read_text(path)?).map_err(|e| CliError::from(e).with("path", path.display().to_string()))?
        }
        None => RawConfig::default_instance(),
    };
    let hash = sha256_hex(&serde_json::to_vec(&raw).expect("config serializes"));
    Ok(LoadedConfig { raw, hash })
}

pub fn instance(arg: &ConfigArg) -> CliResult<(LoadedConfig, ProblemInstance)> {
    let cfg = load_config(arg)?;
    let inst = validate_instance(&cfg.raw)?;
    Ok((cfg, inst))
}

pub fn window(inst: &ProblemInstance, sel: &WindowSelect) -> CliResult<WindowParams> {
    match (&sel.q, &sel.x) {
        (Some(q), _) => Ok(derive_window(inst, *q, inst.u)?),
        (None, Some(x)) => Ok(window_at_scale(inst, number("x", x)?, inst.u)?),
        (None, None) => Err(CliError::usage("one of --q or --x is required")),
    }
}

/// Integers that do not fit JSON's safe range are written as strings.
pub fn int_value(v: i128) -> serde_json::Value {
    match i64::try_from(v) {
        Ok(i) => i.into(),
        Err(_) => v.to_string().into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_accept_exact_forms() {
        assert_eq!(number("x", "1e6").unwrap(), 1e6);
        assert_eq!(number("k", "21/20").unwrap(), 1.05);
        assert!((number("l", "sqrt(2)").unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let e = number("x", "abc").unwrap_err();
        assert_eq!(e.code, "parse");
        assert_eq!(e.exit, EXIT_USAGE);
    }

    #[test]
    fn default_config_hash_is_stable() {
        let a = load_config(&ConfigArg { config: None }).unwrap();
        let b = load_config(&ConfigArg { config: None }).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn prime_limit_covers_both_sums() {
        assert!(prime_limit(1e6, 1.05) >= 1e6f64.powf(1.0 / 1.05));
        assert!(prime_limit(1e6, 3.0) >= 1e3);
    }

    #[test]
    fn big_integers_become_strings() {
        assert_eq!(int_value(5), serde_json::json!(5));
        assert_eq!(int_value(i128::MAX), serde_json::json!(i128::MAX.to_string()));
    }
}
