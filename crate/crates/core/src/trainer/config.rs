//! Flat `key = value` training configuration with strict validation:
//! unknown keys, duplicate keys, and out-of-range values are hard errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Training method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lapo,
    Bc,
    Awac,
    AwacGmm,
    Plas,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "lapo" => Method::Lapo,
            "bc" => Method::Bc,
            "awac" => Method::Awac,
            "awac-gmm" => Method::AwacGmm,
            "plas" => Method::Plas,
            other => {
                return Err(Error::Config(format!("unknown method \"{other}\"")));
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lapo => "lapo",
            Method::Bc => "bc",
            Method::Awac => "awac",
            Method::AwacGmm => "awac-gmm",
            Method::Plas => "plas",
        }
    }
}

/// Fully validated training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub dataset: PathBuf,
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub lr_critic: f64,
    pub lr_cvae: f64,
    pub lr_latent: f64,
    pub lr_policy: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub tau: f64,
    pub z_max: f64,
    pub omega_max: f64,
    pub n_samples: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub normalize: bool,
    pub no_latent_policy: bool,
    pub unbounded_z: bool,
    pub gmm_k: usize,
}

/// Hidden layer sizes used for every network.
pub const HIDDEN: [usize; 2] = [64, 64];

impl TrainConfig {
    /// Defaults for everything except `method` and `dataset`.
    pub fn defaults(method: Method, dataset: PathBuf) -> Self {
        Self {
            method,
            dataset,
            seed: 0,
            steps: 50_000,
            batch_size: 256,
            lr_critic: 3e-4,
            lr_cvae: 3e-4,
            lr_latent: 1e-4,
            lr_policy: 3e-4,
            gamma: 0.99,
            lambda: 0.3,
            beta: 0.5,
            tau: 0.005,
            z_max: 2.0,
            omega_max: 100.0,
            n_samples: 1,
            eval_interval: 5_000,
            eval_episodes: 10,
            normalize: true,
            no_latent_policy: false,
            unbounded_z: false,
            gmm_k: 5,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut method: Option<Method> = None;
        let mut dataset: Option<PathBuf> = None;
        let mut seen: Vec<String> = Vec::new();
        let mut pairs: Vec<(String, String)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if seen.contains(&key) {
                return Err(Error::Config(format!("duplicate key \"{key}\"")));
            }
            seen.push(key.clone());
            pairs.push((key, value));
        }

        for (key, value) in &pairs {
            match key.as_str() {
                "method" => method = Some(Method::parse(value)?),
                "dataset" => dataset = Some(PathBuf::from(value)),
                _ => {}
            }
        }
        let method = method.ok_or_else(|| Error::Config("missing key \"method\"".into()))?;
        let dataset = dataset.ok_or_else(|| Error::Config("missing key \"dataset\"".into()))?;
        let mut cfg = Self::defaults(method, dataset);

        for (key, value) in &pairs {
            let v = value.as_str();
            match key.as_str() {
                "method" | "dataset" => {}
                "seed" => cfg.seed = parse_u64(key, v)?,
                "steps" => cfg.steps = parse_u64(key, v)?,
                "batch_size" => cfg.batch_size = parse_u64(key, v)? as usize,
                "lr_critic" => cfg.lr_critic = parse_f64(key, v)?,
                "lr_cvae" => cfg.lr_cvae = parse_f64(key, v)?,
                "lr_latent" => cfg.lr_latent = parse_f64(key, v)?,
                "lr_policy" => cfg.lr_policy = parse_f64(key, v)?,
                "gamma" => cfg.gamma = parse_f64(key, v)?,
                "lambda" => cfg.lambda = parse_f64(key, v)?,
                "beta" => cfg.beta = parse_f64(key, v)?,
                "tau" => cfg.tau = parse_f64(key, v)?,
                "z_max" => cfg.z_max = parse_f64(key, v)?,
                "omega_max" => cfg.omega_max = parse_f64(key, v)?,
                "n_samples" => cfg.n_samples = parse_u64(key, v)? as usize,
                "eval_interval" => cfg.eval_interval = parse_u64(key, v)?,
                "eval_episodes" => cfg.eval_episodes = parse_u64(key, v)? as usize,
                "normalize" => cfg.normalize = parse_bool(key, v)?,
                "no_latent_policy" => cfg.no_latent_policy = parse_bool(key, v)?,
                "unbounded_z" => cfg.unbounded_z = parse_bool(key, v)?,
                "gmm_k" => cfg.gmm_k = parse_u64(key, v)? as usize,
                other => {
                    return Err(Error::Config(format!("unknown key \"{other}\"")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("lr_critic", self.lr_critic),
            ("lr_cvae", self.lr_cvae),
            ("lr_latent", self.lr_latent),
            ("lr_policy", self.lr_policy),
            ("z_max", self.z_max),
            ("omega_max", self.omega_max),
            ("n_samples", self.n_samples as f64),
            ("eval_interval", self.eval_interval as f64),
            ("eval_episodes", self.eval_episodes as f64),
            ("gmm_k", self.gmm_k as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!(
                "lambda must be positive (inf allowed), got {}",
                self.lambda
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::Config(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if self.no_latent_policy && self.unbounded_z {
            return Err(Error::Config(
                "at most one ablation flag may be set".into(),
            ));
        }
        if (self.no_latent_policy || self.unbounded_z)
            && !matches!(self.method, Method::Lapo)
        {
            return Err(Error::Config(
                "ablation flags apply to the lapo method only".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text form: every field, fixed order. The config hash is the
    /// SHA-256 of this string.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.method.as_str());
        let _ = writeln!(s, "dataset = {}", self.dataset.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "lr_critic = {}", self.lr_critic);
        let _ = writeln!(s, "lr_cvae = {}", self.lr_cvae);
        let _ = writeln!(s, "lr_latent = {}", self.lr_latent);
        let _ = writeln!(s, "lr_policy = {}", self.lr_policy);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "z_max = {}", self.z_max);
        let _ = writeln!(s, "omega_max = {}", self.omega_max);
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "eval_interval = {}", self.eval_interval);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "normalize = {}", self.normalize);
        let _ = writeln!(s, "no_latent_policy = {}", self.no_latent_policy);
        let _ = writeln!(s, "unbounded_z = {}", self.unbounded_z);
        let _ = writeln!(s, "gmm_k = {}", self.gmm_k);
        s
    }

    pub fn config_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        hasher.finalize().into()
    }
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("key \"{key}\": expected an integer, got \"{v}\"")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    if v == "inf" {
        return Ok(f64::INFINITY);
    }
    v.parse()
        .map_err(|_| Error::Config(format!("key \"{key}\": expected a number, got \"{v}\"")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "key \"{key}\": expected true or false, got \"{v}\""
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# a comment
method = lapo
dataset = data/obstacle.lapd
seed = 3
steps = 1000
batch_size = 64
lambda = 0.3
beta = 0.1
";

    #[test]
    fn parses_a_valid_config_with_defaults() {
        let cfg = TrainConfig::parse(GOOD).unwrap();
        assert_eq!(cfg.method, Method::Lapo);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.steps, 1000);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.gamma, 0.99, "default");
        assert_eq!(cfg.z_max, 2.0, "default");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{GOOD}\nlearning_rate = 0.1\n");
        let err = TrainConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = format!("{GOOD}\nseed = 4\n");
        assert!(matches!(
            TrainConfig::parse(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_method_or_dataset_is_rejected() {
        assert!(TrainConfig::parse("dataset = x.lapd\n").is_err());
        assert!(TrainConfig::parse("method = bc\n").is_err());
    }

    #[test]
    fn lambda_inf_is_accepted() {
        let text = format!("{GOOD}\nomega_max = 1\n").replace("lambda = 0.3", "lambda = inf");
        let cfg = TrainConfig::parse(&text).unwrap();
        assert!(cfg.lambda.is_infinite());
        assert_eq!(cfg.omega_max, 1.0);
    }

    #[test]
    fn both_ablation_flags_are_rejected() {
        let text = format!("{GOOD}\nno_latent_policy = true\nunbounded_z = true\n");
        let err = TrainConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("ablation"), "{err}");
    }

    #[test]
    fn ablations_require_lapo() {
        let text = GOOD.replace("method = lapo", "method = bc")
            + "no_latent_policy = true\n";
        assert!(TrainConfig::parse(&text).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for bad in [
            "gamma = 1.5",
            "tau = 0",
            "lambda = -1",
            "batch_size = 0",
            "beta = -0.1",
        ] {
            let text = format!("{GOOD}\n{bad}\n");
            assert!(TrainConfig::parse(&text).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = TrainConfig::parse(GOOD).unwrap();
        let b = TrainConfig::parse(GOOD).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let c = TrainConfig::parse(&GOOD.replace("seed = 3", "seed = 4")).unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }
}
