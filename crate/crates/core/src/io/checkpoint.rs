//! Self-describing binary checkpoint container.
//!
//! Layout: 8-byte magic, header length as little-endian u64, a JSON header,
//! then every array listed in the header as raw little-endian f64 values in
//! header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, Architecture};
use crate::envs::{EnvFamily, RunningNormalizer};
use crate::error::{Error, Result};
use crate::math::DenseNet;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PPDCKPT\0";

/// An agent plus provenance: the unit exchanged between teacher training,
/// corruption, distillation and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCheckpoint {
    pub agent: Agent,
    /// Seed of the run that produced the parameters.
    pub seed: Option<u64>,
    /// Free-form labels such as `role`, `method`, `lambda` or `corrupted`.
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct NormalizerMeta {
    count: f64,
    clip_range: f64,
    epsilon: f64,
    frozen: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    env_family: EnvFamily,
    architecture: Architecture,
    seed: Option<u64>,
    tags: BTreeMap<String, String>,
    obs_norm: Option<NormalizerMeta>,
    reward_norm: Option<NormalizerMeta>,
    arrays: Vec<ArrayEntry>,
}

fn push_normalizer<'a>(
    arrays: &mut Vec<(String, &'a [f64])>,
    prefix: &str,
    n: &'a RunningNormalizer,
) -> NormalizerMeta {
    arrays.push((format!("{prefix}.mean"), &n.mean));
    arrays.push((format!("{prefix}.variance"), &n.variance));
    arrays.push((format!("{prefix}.m2"), &n.m2));
    NormalizerMeta { count: n.count, clip_range: n.clip_range, epsilon: n.epsilon, frozen: n.is_frozen() }
}

impl AgentCheckpoint {
    pub fn new(agent: Agent) -> Self {
        Self { agent, seed: None, tags: BTreeMap::new() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_tag(mut self, key: &str, value: impl ToString) -> Self {
        self.tags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let a = &self.agent;
        let mut arrays: Vec<(String, &[f64])> = vec![
            ("policy".into(), a.policy.params()),
            ("log_std".into(), &a.log_std),
            ("value".into(), a.value.params()),
        ];
        let obs_norm = a.obs_norm.as_ref().map(|n| push_normalizer(&mut arrays, "obs_norm", n));
        let reward_norm = a.reward_norm.as_ref().map(|n| push_normalizer(&mut arrays, "reward_norm", n));
        let header = Header {
            format_version: FORMAT_VERSION,
            env_family: a.env_family,
            architecture: a.architecture(),
            seed: self.seed,
            tags: self.tags.clone(),
            obs_norm,
            reward_norm,
            arrays: arrays.iter().map(|(name, v)| ArrayEntry { name: name.clone(), len: v.len() }).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = arrays.iter().map(|(_, v)| v.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, v) in arrays {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if header_len > body.len() {
            return Err(Error::Format("truncated header".into()));
        }
        let version: serde_json::Value = serde_json::from_slice(&body[..header_len])?;
        let found = version.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(Error::Version { found, expected: FORMAT_VERSION });
        }
        let header: Header = serde_json::from_value(version)?;

        let mut payload = &body[header_len..];
        let mut arrays: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for entry in &header.arrays {
            let n = entry.len * 8;
            if payload.len() < n {
                return Err(Error::Format(format!("truncated array {}", entry.name)));
            }
            let values =
                payload[..n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            payload = &payload[n..];
            arrays.insert(entry.name.clone(), values);
        }
        if !payload.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", payload.len())));
        }
        let mut take = |name: &str| arrays.remove(name).ok_or_else(|| Error::Format(format!("missing array {name}")));

        let arch = header.architecture;
        let policy = DenseNet::from_params(&arch.policy_layers, take("policy")?)?;
        let value = DenseNet::from_params(&arch.value_layers, take("value")?)?;
        let log_std = take("log_std")?;
        if log_std.len() != arch.head.log_std_len() {
            return Err(Error::Format("log_std length does not match the policy head".into()));
        }
        let mut normalizer = |prefix: &str, meta: Option<NormalizerMeta>| -> Result<Option<RunningNormalizer>> {
            let Some(meta) = meta else { return Ok(None) };
            let mut n = RunningNormalizer::from_stats(
                meta.count,
                take(&format!("{prefix}.mean"))?,
                take(&format!("{prefix}.variance"))?,
                meta.clip_range,
                meta.epsilon,
                meta.frozen,
            );
            n.m2 = take(&format!("{prefix}.m2"))?;
            if n.m2.len() != n.mean.len() || n.variance.len() != n.mean.len() {
                return Err(Error::Format(format!("{prefix} arrays differ in length")));
            }
            Ok(Some(n))
        };
        let obs_norm = normalizer("obs_norm", header.obs_norm)?;
        let reward_norm = normalizer("reward_norm", header.reward_norm)?;

        let agent =
            Agent { env_family: header.env_family, head: arch.head, policy, log_std, value, obs_norm, reward_norm };
        if Architecture::for_env(header.env_family, arch.hidden()) != arch {
            return Err(Error::Architecture(format!(
                "stored layers {:?} do not fit {}",
                arch.policy_layers, header.env_family
            )));
        }
        Ok(Self { agent, seed: header.seed, tags: header.tags })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads a checkpoint and checks that it was trained on `family`.
    pub fn load_for(path: &Path, family: EnvFamily) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.agent.env_family != family {
            return Err(Error::Config(format!(
                "checkpoint {} is for {}, expected {family}",
                path.display(),
                ckpt.agent.env_family
            )));
        }
        Ok(ckpt)
    }
}
