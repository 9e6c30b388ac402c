use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use crate::bandit::{ArmId, Environment};
use crate::error::Result;
use crate::stream::Stream;

/// Monte Carlo arm means from `samples` draws per arm.
pub fn pilot_means(env: &dyn Environment, samples: usize, stream: Stream) -> Vec<f64> {
    (0..env.arm_count())
        .into_par_iter()
        .map(|a| {
            let mut rng = stream.child(a as u64).rng();
            let total: f64 = (0..samples).map(|_| env.sample(ArmId(a), &mut rng)).sum();
            total / samples as f64
        })
        .collect()
}

/// SHA-256 over the serialized environment parameters, sample count and seed.
pub fn pilot_cache_key<P: Serialize>(params: &P, samples: usize, seed: u64) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(params)?);
    h.update((samples as u64).to_le_bytes());
    h.update(seed.to_le_bytes());
    Ok(hex::encode(h.finalize()))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    means: Vec<f64>,
}

/// Pilot means keyed by [`pilot_cache_key`], kept in memory and optionally
/// in a directory as `pilot-<key>.json`.
#[derive(Debug, Default)]
pub struct PilotCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Vec<f64>>>,
}

impl PilotCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        PilotCache {
            dir,
            memory: Mutex::new(HashMap::new()),
        }
    }

    fn file(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("pilot-{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        if let Some(m) = self.memory.lock().expect("cache lock").get(key) {
            return Some(m.clone());
        }
        let text = std::fs::read_to_string(self.file(key)?).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.key == key => {
                self.memory.lock().expect("cache lock").insert(key.to_string(), entry.means.clone());
                Some(entry.means)
            }
            _ => {
                log::warn!("ignoring unreadable pilot cache entry {key}");
                None
            }
        }
    }

    pub fn insert(&self, key: &str, means: &[f64]) -> Result<()> {
        self.memory.lock().expect("cache lock").insert(key.to_string(), means.to_vec());
        if let Some(path) = self.file(key) {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let entry = CacheEntry {
                key: key.to_string(),
                means: means.to_vec(),
            };
            std::fs::write(path, serde_json::to_string(&entry)?)?;
        }
        Ok(())
    }

    pub fn get_or_compute(&self, key: &str, compute: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>> {
        if let Some(m) = self.get(key) {
            log::debug!("pilot cache hit {key}");
            return Ok(m);
        }
        log::info!("running pilot for true means ({key})");
        let means = compute();
        self.insert(key, &means)?;
        Ok(means)
    }
}
