//! On-disk checkpoints.
//!
//! A checkpoint directory holds three files:
//!
//! * `checkpoint.txt`: `key=value` manifest with shapes, normalizer, epoch,
//!   metrics, optimizer scalars and the full metrics history;
//! * `params.bin`: every trainable parameter as little-endian `f64`, in the
//!   model's flat order (hybrid: `pre_w` row-major, `pre_b`, `theta`
//!   layer-major, `post_w` row-major, `post_b`; CNN: `conv_w`, `conv_b`,
//!   `head_w`, `head_b`);
//! * `optimizer.bin`: Adam first moments followed by second moments, same
//!   order and encoding.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AnyModel, CnnModel, HybridModel, ModelFamily, Normalizer, PolicyModel};
use crate::training::{AdamState, Checkpoint, EpochMetrics};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "checkpoint.txt";
pub const PARAMS_FILE: &str = "params.bin";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";

/// A checkpoint together with the hash of the config that produced it.
#[derive(Debug, Clone)]
pub struct StoredCheckpoint {
    pub checkpoint: Checkpoint<AnyModel>,
    pub config_hash: String,
    pub budget: usize,
}

fn f64_bytes(xs: &[f64]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn bytes_f64(bytes: &[u8], what: &str) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::data(format!("{what}: length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn metrics_text(m: &EpochMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        m.epoch, m.mean_loss, m.mean_reward, m.val_det, m.val_sto, m.epsilon, m.alpha, m.seconds
    )
}

fn parse_metrics(text: &str) -> Result<EpochMetrics> {
    let bad = || Error::data(format!("malformed metrics entry '{text}'"));
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 8 {
        return Err(bad());
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
    Ok(EpochMetrics {
        epoch: parts[0].parse().map_err(|_| bad())?,
        mean_loss: f(1)?,
        mean_reward: f(2)?,
        val_det: f(3)?,
        val_sto: f(4)?,
        epsilon: f(5)?,
        alpha: f(6)?,
        seconds: f(7)?,
    })
}

/// Resolve a `--checkpoint` argument: either the directory or its manifest.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn save(dir: &Path, stored: &StoredCheckpoint) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ck = &stored.checkpoint;
    let params = f64_bytes(&ck.model.flat_params());
    let mut opt = f64_bytes(&ck.optimizer.m);
    opt.extend(f64_bytes(&ck.optimizer.v));

    let mut m = String::new();
    let mut kv = |k: &str, v: String| writeln!(m, "{k}={v}").expect("writing to a String");
    kv("format_version", CHECKPOINT_VERSION.to_string());
    kv("config_sha256", stored.config_hash.clone());
    kv("family", ck.model.family().to_string());
    kv("users", ck.model.users().to_string());
    kv("budget", stored.budget.to_string());
    match &ck.model {
        AnyModel::Hybrid(h) => {
            kv("qubits", h.qubits().to_string());
            kv("layers", h.layers().to_string());
            kv("gradient", h.grad_method.to_string());
            kv("param_order", "pre_w,pre_b,theta,post_w,post_b".into());
        }
        AnyModel::Cnn(_) => {
            kv("filters", crate::model::CNN_FILTERS.to_string());
            kv("param_order", "conv_w,conv_b,head_w,head_b".into());
        }
    }
    let norm = ck.model.normalizer();
    kv("normalizer_mu", norm.mu.to_string());
    kv("normalizer_sigma", norm.sigma.to_string());
    kv("epoch", ck.epoch.to_string());
    kv("param_count", ck.model.param_count().to_string());
    kv("params_file", PARAMS_FILE.into());
    kv("params_sha256", sha256_hex(&params));
    kv("optimizer_file", OPTIMIZER_FILE.into());
    kv("optimizer_sha256", sha256_hex(&opt));
    kv("adam_t", ck.optimizer.t.to_string());
    kv("adam_beta1", ck.optimizer.beta1.to_string());
    kv("adam_beta2", ck.optimizer.beta2.to_string());
    kv("adam_eps", ck.optimizer.eps.to_string());
    kv("metrics_columns", "epoch,mean_loss,mean_reward,val_det,val_sto,epsilon,alpha,seconds".into());
    if let Some(metrics) = &ck.metrics {
        kv("metrics", metrics_text(metrics));
    }
    kv("history_len", ck.history.len().to_string());
    for (i, h) in ck.history.iter().enumerate() {
        kv(&format!("history.{i:05}"), metrics_text(h));
    }

    fs::write(dir.join(PARAMS_FILE), params)?;
    fs::write(dir.join(OPTIMIZER_FILE), opt)?;
    fs::write(dir.join(MANIFEST_FILE), m)?;
    Ok(())
}

struct Manifest(BTreeMap<String, String>);

impl Manifest {
    fn raw(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(String::as_str).ok_or_else(|| Error::data(format!("checkpoint manifest lacks '{key}'")))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| Error::data(format!("checkpoint field '{key}' has bad value '{raw}'")))
    }
}

pub fn load(path: &Path) -> Result<StoredCheckpoint> {
    let manifest_file = manifest_path(path);
    let dir = manifest_file.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&manifest_file)
        .map_err(|e| Error::data(format!("cannot read checkpoint {}: {e}", manifest_file.display())))?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::data(format!("malformed manifest line '{line}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let m = Manifest(map);
    let version: u32 = m.get("format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::data(format!("unsupported checkpoint version {version}")));
    }

    let users: usize = m.get("users")?;
    let family: ModelFamily = m.raw("family")?.parse().map_err(|e: Error| Error::data(e.to_string()))?;
    let mut model: AnyModel = match family {
        ModelFamily::Hybrid => {
            let mut h = HybridModel::zeros(users, m.get("qubits")?, m.get("layers")?);
            h.grad_method = m.raw("gradient")?.parse().map_err(|e: Error| Error::data(e.to_string()))?;
            h.into()
        }
        ModelFamily::Cnn => CnnModel::zeros(users).into(),
    };
    model.set_normalizer(Normalizer::new(m.get("normalizer_mu")?, m.get("normalizer_sigma")?));

    let read_blob = |key: &str| -> Result<Vec<u8>> {
        let file = dir.join(m.raw(&format!("{key}_file"))?);
        let bytes = fs::read(&file).map_err(|e| Error::data(format!("cannot read {}: {e}", file.display())))?;
        if sha256_hex(&bytes) != m.raw(&format!("{key}_sha256"))? {
            return Err(Error::data(format!("{} does not match its recorded checksum", file.display())));
        }
        Ok(bytes)
    };
    let params = bytes_f64(&read_blob("params")?, PARAMS_FILE)?;
    let expected: usize = m.get("param_count")?;
    if params.len() != expected || expected != model.param_count() {
        return Err(Error::data(format!(
            "checkpoint holds {} parameters; manifest says {expected}, shapes imply {}",
            params.len(),
            model.param_count()
        )));
    }
    model.set_flat_params(&params).map_err(|e| Error::data(e.to_string()))?;

    let moments = bytes_f64(&read_blob("optimizer")?, OPTIMIZER_FILE)?;
    if moments.len() != 2 * expected {
        return Err(Error::data("optimizer state does not match the parameter count"));
    }
    let (mm, vv) = moments.split_at(expected);
    let optimizer = AdamState {
        m: mm.to_vec(),
        v: vv.to_vec(),
        t: m.get("adam_t")?,
        beta1: m.get("adam_beta1")?,
        beta2: m.get("adam_beta2")?,
        eps: m.get("adam_eps")?,
    };

    let metrics = m.0.get("metrics").map(|t| parse_metrics(t)).transpose()?;
    let history_len: usize = m.get("history_len")?;
    let history = (0..history_len)
        .map(|i| parse_metrics(m.raw(&format!("history.{i:05}"))?))
        .collect::<Result<Vec<_>>>()?;

    Ok(StoredCheckpoint {
        checkpoint: Checkpoint { model, epoch: m.get("epoch")?, metrics, optimizer, history },
        config_hash: m.raw("config_sha256")?.to_string(),
        budget: m.get("budget")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn stored(model: AnyModel) -> StoredCheckpoint {
        let n = model.param_count();
        let mut optimizer = AdamState::new(n, 0.9, 0.999, 1e-8);
        optimizer.m.iter_mut().enumerate().for_each(|(i, x)| *x = i as f64 * 1e-3);
        optimizer.v.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64).sqrt());
        optimizer.t = 17;
        let metrics = EpochMetrics {
            epoch: 3,
            mean_loss: -0.1234567890123,
            mean_reward: 11.5,
            val_det: 12.25,
            val_sto: 10.0 / 3.0,
            epsilon: 0.5,
            alpha: 0.6,
            seconds: 0.0,
        };
        StoredCheckpoint {
            checkpoint: Checkpoint { model, epoch: 3, metrics: Some(metrics.clone()), optimizer, history: vec![metrics; 3] },
            config_hash: "abc".into(),
            budget: 2,
        }
    }

    fn assert_roundtrip(s: StoredCheckpoint) {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &s).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(back.checkpoint.model.flat_params(), s.checkpoint.model.flat_params());
        assert_eq!(back.checkpoint.model.normalizer(), s.checkpoint.model.normalizer());
        assert_eq!(back.checkpoint.optimizer, s.checkpoint.optimizer);
        assert_eq!(back.checkpoint.metrics, s.checkpoint.metrics);
        assert_eq!(back.checkpoint.history, s.checkpoint.history);
        assert_eq!((back.config_hash.as_str(), back.budget), ("abc", 2));
    }

    #[test]
    fn hybrid_roundtrip_is_exact() {
        let mut m = HybridModel::init(4, 3, 2, &mut rng::substream(1, "init", 0));
        m.normalizer = Normalizer::new(1.0 / 3.0, 2.0_f64.sqrt());
        assert_roundtrip(stored(m.into()));
    }

    #[test]
    fn cnn_roundtrip_is_exact() {
        let m = CnnModel::init(3, &mut rng::substream(1, "init", 0));
        assert_roundtrip(stored(m.into()));
    }

    #[test]
    fn tampered_blob_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &stored(CnnModel::zeros(2).into())).unwrap();
        let p = dir.path().join(PARAMS_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] ^= 1;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Data(_))));
    }

    #[test]
    fn missing_checkpoint_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load(&dir.path().join("nope")).unwrap_err().exit_code(), 3);
    }
}
