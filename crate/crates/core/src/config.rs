//! Flat `key = value` run configuration.
//!
//! One file fully determines a run. Blank lines and `#` comments are ignored;
//! every key is typed and validated, and unknown keys are rejected. Command-line
//! overrides go through the same [`RunConfig::set`] path as file entries.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::model::{GradientMethod, ModelFamily};
use crate::training::{RewardMode, TrainConfig};

/// Scheduler whose sum-rate a sweep point reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPolicy {
    /// Train the configured model family and report its deterministic validation reward.
    Trained,
    Oracle,
    Greedy,
    Random,
}

impl FromStr for SweepPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trained" => Ok(SweepPolicy::Trained),
            "oracle" | "exhaustive" => Ok(SweepPolicy::Oracle),
            "greedy" => Ok(SweepPolicy::Greedy),
            "random" => Ok(SweepPolicy::Random),
            other => Err(Error::config(format!(
                "unknown sweep policy '{other}' (trained | oracle | greedy | random)"
            ))),
        }
    }
}

impl fmt::Display for SweepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepPolicy::Trained => "trained",
            SweepPolicy::Oracle => "oracle",
            SweepPolicy::Greedy => "greedy",
            SweepPolicy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub model: ModelFamily,
    pub qubits: usize,
    pub layers: usize,
    pub gradient: GradientMethod,
    pub train: TrainConfig,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Seeds `seed, seed + 1, ..` used by sweeps and comparisons.
    pub repeats: usize,
    pub sweep_policy: SweepPolicy,
    pub compare_snr: Vec<f64>,
    pub compare_qubits: usize,
    pub out_dir: PathBuf,
    /// Dataset to read instead of generating one from the system settings.
    pub dataset: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: SystemConfig::default(),
            model: ModelFamily::Hybrid,
            qubits: 8,
            layers: 2,
            gradient: GradientMethod::default(),
            train: TrainConfig::default(),
            train_samples: 200,
            val_samples: 50,
            repeats: 3,
            sweep_policy: SweepPolicy::Trained,
            compare_snr: vec![15.0, 20.0, 25.0],
            compare_qubits: 10,
            out_dir: PathBuf::from("out"),
            dataset: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "adam_eps",
    "alpha_max",
    "alpha_min",
    "antennas",
    "aod_range_deg",
    "batch_size",
    "beta1",
    "beta2",
    "budget",
    "clip_norm",
    "compare_qubits",
    "compare_snr",
    "dataset",
    "epochs",
    "eps_decay",
    "eps_floor",
    "eps_init",
    "gradient",
    "layers",
    "learning_rate",
    "model",
    "out_dir",
    "per_user_k",
    "pf_alpha",
    "pf_epsilon",
    "qubits",
    "repeats",
    "reward_mode",
    "rho",
    "rician_k",
    "seed",
    "snr_db",
    "sweep_policy",
    "train_samples",
    "users",
    "val_samples",
    "wall_clock",
];

/// Keys that name files rather than experiment settings; excluded from the hash.
const PATH_KEYS: &[&str] = &["dataset", "out_dir"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("key '{key}': cannot parse '{value}' as {}", std::any::type_name::<T>())))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|s| parse::<f64>(key, s.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("key '{key}': expected true or false, got '{value}'"))),
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parse a config file body on top of the defaults.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value', got '{raw}'", n + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.system;
        let t = &mut self.train;
        match key {
            "antennas" => s.antennas = parse(key, value)?,
            "users" => s.users = parse(key, value)?,
            "budget" => s.budget = parse(key, value)?,
            "snr_db" => s.snr_db = parse(key, value)?,
            "rician_k" => s.rician_k = parse(key, value)?,
            "per_user_k" => s.per_user_k = if value.is_empty() { None } else { Some(parse_list(key, value)?) },
            "rho" => s.rho = parse(key, value)?,
            "aod_range_deg" => match parse_list(key, value)?.as_slice() {
                [lo, hi] => s.aod_range_deg = (*lo, *hi),
                _ => return Err(Error::config("key 'aod_range_deg': expected 'lo,hi'")),
            },
            "seed" => s.seed = parse(key, value)?,
            "model" => self.model = value.parse()?,
            "qubits" => self.qubits = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "gradient" => self.gradient = value.parse()?,
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "clip_norm" => t.clip_norm = parse(key, value)?,
            "eps_init" => t.eps_init = parse(key, value)?,
            "eps_floor" => t.eps_floor = parse(key, value)?,
            "eps_decay" => t.eps_decay = parse(key, value)?,
            "alpha_max" => t.alpha_max = parse(key, value)?,
            "alpha_min" => t.alpha_min = parse(key, value)?,
            "reward_mode" => t.reward_mode = value.parse::<RewardMode>()?,
            "pf_alpha" => t.pf_alpha = parse(key, value)?,
            "pf_epsilon" => t.pf_epsilon = parse(key, value)?,
            "beta1" => t.beta1 = parse(key, value)?,
            "beta2" => t.beta2 = parse(key, value)?,
            "adam_eps" => t.adam_eps = parse(key, value)?,
            "wall_clock" => t.wall_clock = parse_bool(key, value)?,
            "train_samples" => self.train_samples = parse(key, value)?,
            "val_samples" => self.val_samples = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "sweep_policy" => self.sweep_policy = value.parse()?,
            "compare_snr" => self.compare_snr = parse_list(key, value)?,
            "compare_qubits" => self.compare_qubits = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "dataset" => self.dataset = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            other => return Err(Error::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override '{assignment}' is not 'key=value'")))?;
        self.set(k.trim(), v.trim())
    }

    /// Training settings with the shared seed and budget filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.system.seed, budget: self.system.budget, ..self.train.clone() }
    }

    /// Sweep and comparison seeds.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|i| self.system.seed.wrapping_add(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate().map_err(|e| Error::config(e.to_string()))?;
        self.train_config().validate()?;
        if self.qubits == 0 || self.qubits > crate::quantum::MAX_QUBITS {
            return Err(Error::config(format!("qubits must lie in 1..={}", crate::quantum::MAX_QUBITS)));
        }
        if self.compare_qubits == 0 || self.compare_qubits > crate::quantum::MAX_QUBITS {
            return Err(Error::config(format!("compare_qubits must lie in 1..={}", crate::quantum::MAX_QUBITS)));
        }
        if self.train_samples + self.val_samples == 0 {
            return Err(Error::config("train_samples + val_samples must be positive"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be positive"));
        }
        if self.compare_snr.is_empty() || self.compare_snr.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("compare_snr must be a nonempty list of finite values"));
        }
        Ok(())
    }

    /// Value of `key` in canonical text form.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.system;
        let t = &self.train;
        Some(match key {
            "antennas" => s.antennas.to_string(),
            "users" => s.users.to_string(),
            "budget" => s.budget.to_string(),
            "snr_db" => s.snr_db.to_string(),
            "rician_k" => s.rician_k.to_string(),
            "per_user_k" => s.per_user_k.as_deref().map(join).unwrap_or_default(),
            "rho" => s.rho.to_string(),
            "aod_range_deg" => format!("{},{}", s.aod_range_deg.0, s.aod_range_deg.1),
            "seed" => s.seed.to_string(),
            "model" => self.model.to_string(),
            "qubits" => self.qubits.to_string(),
            "layers" => self.layers.to_string(),
            "gradient" => self.gradient.to_string(),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "clip_norm" => t.clip_norm.to_string(),
            "eps_init" => t.eps_init.to_string(),
            "eps_floor" => t.eps_floor.to_string(),
            "eps_decay" => t.eps_decay.to_string(),
            "alpha_max" => t.alpha_max.to_string(),
            "alpha_min" => t.alpha_min.to_string(),
            "reward_mode" => t.reward_mode.to_string(),
            "pf_alpha" => t.pf_alpha.to_string(),
            "pf_epsilon" => t.pf_epsilon.to_string(),
            "beta1" => t.beta1.to_string(),
            "beta2" => t.beta2.to_string(),
            "adam_eps" => t.adam_eps.to_string(),
            "wall_clock" => t.wall_clock.to_string(),
            "train_samples" => self.train_samples.to_string(),
            "val_samples" => self.val_samples.to_string(),
            "repeats" => self.repeats.to_string(),
            "sweep_policy" => self.sweep_policy.to_string(),
            "compare_snr" => join(&self.compare_snr),
            "compare_qubits" => self.compare_qubits.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "dataset" => self.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            _ => return None,
        })
    }

    /// Every key in sorted order; parsing this text reproduces `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default())).collect()
    }

    /// SHA-256 over the canonical settings, ignoring file locations.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| !PATH_KEYS.contains(k)) {
            h.update(format!("{k}={}\n", self.get(k).unwrap_or_default()).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_roundtrips() {
        let mut cfg = RunConfig::default();
        cfg.set("per_user_k", "1,2,3,4").unwrap();
        cfg.set("learning_rate", "0.003").unwrap();
        cfg.set("dataset", "data/x.bin").unwrap();
        let back = RunConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn every_key_has_a_getter() {
        let cfg = RunConfig::default();
        for k in KEYS {
            assert!(cfg.get(k).is_some(), "{k}");
        }
        assert!(KEYS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let cfg = RunConfig::parse_text("# run\n\nusers = 6 # six\nbudget=3\n").unwrap();
        assert_eq!(cfg.system.users, 6);
        assert_eq!(cfg.system.budget, 3);
    }

    #[test]
    fn unknown_and_malformed_keys_fail_as_config_errors() {
        for text in ["userz = 4", "users = four", "users 4", "model = rnn", "aod_range_deg = 1", "wall_clock = maybe"] {
            let err = RunConfig::parse_text(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn validation_catches_inconsistent_values() {
        let mut cfg = RunConfig::default();
        cfg.set("budget", "9").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.set("eps_floor", "0.9").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("out_dir", "elsewhere").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "7").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn train_config_follows_system() {
        let mut cfg = RunConfig::default();
        cfg.set("seed", "9").unwrap();
        cfg.set("budget", "3").unwrap();
        let t = cfg.train_config();
        assert_eq!((t.seed, t.budget), (9, 3));
    }
}
