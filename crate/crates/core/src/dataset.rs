//! Generated gain-matrix datasets and their binary container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "QSCHEDDS"
//! version      u32      DATASET_VERSION
//! header_len   u32
//! header       header_len bytes of UTF-8 "key=value" lines (config echo)
//! n_samples    u64
//! users        u32
//! records      n_samples x {
//!                sample_seed  u64
//!                aod_rad      users x f64
//!                gains        users*users x f64, row-major
//!              }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::channel::{ChannelModel, GainMatrix, SystemConfig};
use crate::error::{Error, Result};
use crate::rng;

pub const DATASET_MAGIC: &[u8; 8] = b"QSCHEDDS";
pub const DATASET_VERSION: u32 = 1;

/// Stream tag for dataset samples.
pub const SAMPLE_TAG: &str = "sample";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub sample_seed: u64,
    pub aods: Vec<f64>,
    pub gains: GainMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: SystemConfig,
    /// Leading records reserved for training; the rest validate.
    pub train_samples: usize,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    /// Generate `train + val` samples; record `i` depends only on `(seed, i)`.
    pub fn generate(system: &SystemConfig, train: usize, val: usize) -> Result<Self> {
        let model = ChannelModel::new(system)?;
        let records = (0..(train + val) as u64)
            .into_par_iter()
            .map(|i| {
                let s = model.sample(SAMPLE_TAG, i)?;
                Ok(DatasetRecord {
                    sample_seed: rng::substream_seed(system.seed, SAMPLE_TAG, i),
                    aods: s.aods,
                    gains: s.gains,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { system: system.clone(), train_samples: train, records })
    }

    pub fn train(&self) -> Vec<GainMatrix> {
        self.records[..self.train_samples].iter().map(|r| r.gains.clone()).collect()
    }

    pub fn val(&self) -> Vec<GainMatrix> {
        self.records[self.train_samples..].iter().map(|r| r.gains.clone()).collect()
    }

    pub fn gains(&self) -> Vec<GainMatrix> {
        self.records.iter().map(|r| r.gains.clone()).collect()
    }

    fn header(&self) -> String {
        let s = &self.system;
        let mut h = BTreeMap::new();
        h.insert("antennas", s.antennas.to_string());
        h.insert("users", s.users.to_string());
        h.insert("budget", s.budget.to_string());
        h.insert("snr_db", s.snr_db.to_string());
        h.insert("rician_k", s.rician_k.to_string());
        if let Some(ks) = &s.per_user_k {
            h.insert("per_user_k", join(ks));
        }
        h.insert("rho", s.rho.to_string());
        h.insert("aod_range_deg", format!("{},{}", s.aod_range_deg.0, s.aod_range_deg.1));
        h.insert("seed", s.seed.to_string());
        h.insert("train_samples", self.train_samples.to_string());
        h.insert("val_samples", (self.records.len() - self.train_samples).to_string());
        h.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let k = self.system.users;
        let mut out = Vec::with_capacity(32 + header.len() + self.records.len() * 8 * (1 + k + k * k));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        out.extend_from_slice(&(k as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.sample_seed.to_le_bytes());
            for a in &r.aods {
                out.extend_from_slice(&a.to_le_bytes());
            }
            for g in r.gains.entries() {
                out.extend_from_slice(&g.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut cur, &mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::data("not a dataset file (bad magic)"));
        }
        let version = read_u32(&mut cur)?;
        if version != DATASET_VERSION {
            return Err(Error::data(format!("unsupported dataset version {version}")));
        }
        let header_len = read_u32(&mut cur)? as usize;
        if cur.len() < header_len {
            return Err(Error::data("truncated dataset header"));
        }
        let (header, rest) = cur.split_at(header_len);
        cur = rest;
        let header = std::str::from_utf8(header).map_err(|_| Error::data("dataset header is not UTF-8"))?;
        let fields = parse_header(header)?;
        let system = system_from_header(&fields)?;
        let train_samples: usize = field(&fields, "train_samples")?;

        let n = read_u64(&mut cur)? as usize;
        let k = read_u32(&mut cur)? as usize;
        if k != system.users {
            return Err(Error::data(format!("record width {k} disagrees with header users {}", system.users)));
        }
        if train_samples > n {
            return Err(Error::data("train_samples exceeds the record count"));
        }
        let record_bytes = 8 * (1 + k + k * k);
        if cur.len() != n * record_bytes {
            return Err(Error::data(format!(
                "expected {} record bytes, found {}",
                n * record_bytes,
                cur.len()
            )));
        }
        let beta = system.beta();
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let sample_seed = read_u64(&mut cur)?;
            let aods = (0..k).map(|_| read_f64(&mut cur)).collect::<Result<Vec<_>>>()?;
            let g = (0..k * k).map(|_| read_f64(&mut cur)).collect::<Result<Vec<_>>>()?;
            let gains = GainMatrix::with_uniform_beta(k, g, beta).map_err(|e| Error::data(e.to_string()))?;
            records.push(DatasetRecord { sample_seed, aods, gains });
        }
        Ok(Dataset { system, train_samples, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::data(format!("cannot read dataset {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn read_exact(cur: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    cur.read_exact(buf).map_err(|_| Error::data("truncated dataset file"))
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(cur, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(cur: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(cur, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn parse_header(text: &str) -> Result<BTreeMap<String, String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::data(format!("malformed header line '{l}'")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(fields: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = fields.get(key).ok_or_else(|| Error::data(format!("dataset header lacks '{key}'")))?;
    raw.parse().map_err(|_| Error::data(format!("dataset header field '{key}' has bad value '{raw}'")))
}

fn system_from_header(fields: &BTreeMap<String, String>) -> Result<SystemConfig> {
    let aod: String = field(fields, "aod_range_deg")?;
    let (lo, hi) = aod.split_once(',').ok_or_else(|| Error::data("aod_range_deg must be 'lo,hi'"))?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::data("bad aod_range_deg"));
    let per_user_k = match fields.get("per_user_k") {
        Some(raw) => Some(
            raw.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::data("bad per_user_k")))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let system = SystemConfig {
        antennas: field(fields, "antennas")?,
        users: field(fields, "users")?,
        budget: field(fields, "budget")?,
        snr_db: field(fields, "snr_db")?,
        rician_k: field(fields, "rician_k")?,
        per_user_k,
        rho: field(fields, "rho")?,
        aod_range_deg: (parse(lo)?, parse(hi)?),
        seed: field(fields, "seed")?,
    };
    system.validate().map_err(|e| Error::data(format!("dataset header: {e}")))?;
    Ok(system)
}
