use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, ModelConfig, Network, NnError, ParamLayout};
use crate::features::{FeatureNormStats, FeatureOptions};

const MAGIC: &[u8; 4] = b"MGCK";
const VERSION: u32 = 1;

/// Position of a ChaCha8 stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Model, normalization, optimizer and RNG state of a training run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub feature_options: FeatureOptions,
    pub norm_stats: FeatureNormStats,
    pub optimizer: Adam,
    pub rng: RngState,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    feature_options: FeatureOptions,
    norm_stats: FeatureNormStats,
    layout: ParamLayout,
    running_len: usize,
    optimizer: Adam,
    rng: RngState,
    epoch: usize,
}

/// Writes `MGCK`, a format version, a JSON header and then the parameters,
/// running statistics and Adam moments as little-endian f64.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), NnError> {
    let header = Header {
        config: ck.network.config.clone(),
        feature_options: ck.feature_options,
        norm_stats: ck.norm_stats.clone(),
        layout: ck.network.layout.clone(),
        running_len: ck.network.running.len(),
        optimizer: ck.optimizer.clone(),
        rng: ck.rng,
        epoch: ck.epoch,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * 4 * ck.network.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for block in [
        &ck.network.params,
        &ck.network.running,
        &ck.optimizer.m,
        &ck.optimizer.v,
    ] {
        for v in block.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn read_f64s(bytes: &[u8], n: usize, at: &mut usize) -> Result<Vec<f64>, NnError> {
    let end = *at + 8 * n;
    if end > bytes.len() {
        return Err(NnError::Checkpoint("truncated tensor data".into()));
    }
    let out = bytes[*at..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    *at = end;
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(NnError::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let hend = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| NnError::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..hend])?;
    header.config.validate()?;
    if header.layout != ParamLayout::new(&header.config) {
        return Err(NnError::Checkpoint("parameter layout does not match the config".into()));
    }
    if header.running_len != Network::initial_running(&header.config).len() {
        return Err(NnError::Checkpoint("running statistics have the wrong size".into()));
    }
    let n = header.layout.total;
    let mut at = hend;
    let params = read_f64s(&bytes, n, &mut at)?;
    let running = read_f64s(&bytes, header.running_len, &mut at)?;
    let m = read_f64s(&bytes, n, &mut at)?;
    let v = read_f64s(&bytes, n, &mut at)?;
    if at != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    let mut optimizer = header.optimizer;
    optimizer.m = m;
    optimizer.v = v;
    Ok(Checkpoint {
        network: Network {
            config: header.config,
            layout: header.layout,
            params,
            running,
        },
        feature_options: header.feature_options,
        norm_stats: header.norm_stats,
        optimizer,
        rng: header.rng,
        epoch: header.epoch,
    })
}
