//! Edge-convolution classifier with mesh pooling, trained by exact
//! reverse-mode gradients.
//!
//! Each block is `conv -> ReLU -> batch norm -> pool` (or pool before the
//! norm with [`ModelConfig::pool_before_norm`]). Four blocks feed a global
//! average pool and a two-layer head producing two logits: index 0 is
//! "stable", index 1 is "growing".

mod adam;
mod checkpoint;
mod conv;
pub mod gradcheck;
mod head;
mod network;
mod norm;
mod params;
mod pool;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{build_edge_adjacency, EdgeAdjacency, Mesh, MeshError};

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState};
pub use conv::{edge_conv_backward, edge_conv_forward, gather_neighborhoods};
pub use head::{softmax, weighted_cross_entropy};
pub use network::{Branches, Mode, Network, Tape};
pub use norm::{batch_norm_backward, batch_norm_forward, BatchNormCache};
pub use params::{ParamEntry, ParamLayout};
pub use pool::{mesh_pool, CollapseRecord, PoolTrace};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("pooling cannot reach {target} edges, stuck at {reached}")]
    PoolUnreachable { target: usize, reached: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Largest edge count a closed triangle mesh can have without exceeding
/// `target`. Every closed mesh has a multiple of three edges.
pub fn reachable_edges(target: usize) -> usize {
    target - target % 3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_channels: usize,
    #[serde(default = "default_conv_channels")]
    pub conv_channels: Vec<usize>,
    pub pool_targets: Vec<usize>,
    #[serde(default = "default_fc_hidden")]
    pub fc_hidden: usize,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    pub input_edges: usize,
    #[serde(default)]
    pub pool_before_norm: bool,
}

fn default_conv_channels() -> Vec<usize> {
    vec![32, 64, 128, 256]
}

fn default_fc_hidden() -> usize {
    100
}

fn default_n_classes() -> usize {
    2
}

impl ModelConfig {
    pub fn uia(input_channels: usize) -> Self {
        Self {
            input_channels,
            conv_channels: default_conv_channels(),
            pool_targets: vec![750, 600, 500, 400],
            fc_hidden: 100,
            n_classes: 2,
            input_edges: 1000,
            pool_before_norm: false,
        }
    }

    pub fn roi(input_channels: usize) -> Self {
        Self {
            pool_targets: vec![1500, 1200, 1000, 800],
            input_edges: 2000,
            ..Self::uia(input_channels)
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |m: &str| Err(NnError::Config(m.to_string()));
        if self.input_channels == 0 || self.fc_hidden == 0 {
            return fail("channel counts must be positive");
        }
        if self.n_classes != 2 {
            return fail("n_classes must be 2");
        }
        if self.conv_channels.is_empty() || self.conv_channels.len() != self.pool_targets.len() {
            return fail("conv_channels and pool_targets must be non-empty and of equal length");
        }
        if self.conv_channels.contains(&0) {
            return fail("conv_channels must be positive");
        }
        let mut prev = self.input_edges;
        for &t in &self.pool_targets {
            if t >= prev {
                return fail("pool_targets must be strictly decreasing and below input_edges");
            }
            if t < 6 {
                return fail("pool targets must be at least 6 edges");
            }
            prev = t;
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.conv_channels.len()
    }

    /// Input channel count of conv layer `l`.
    pub fn conv_in(&self, l: usize) -> usize {
        if l == 0 {
            self.input_channels
        } else {
            self.conv_channels[l - 1]
        }
    }
}

/// A mesh together with its edge neighborhoods.
#[derive(Debug, Clone)]
pub struct EdgeMesh {
    pub mesh: Mesh,
    pub adjacency: EdgeAdjacency,
}

impl EdgeMesh {
    pub fn new(mesh: Mesh) -> Result<Self, NnError> {
        let adjacency = build_edge_adjacency(&mesh)?;
        Ok(Self { mesh, adjacency })
    }

    pub fn edge_count(&self) -> usize {
        self.mesh.edge_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configs_validate() {
        ModelConfig::uia(7).validate().unwrap();
        ModelConfig::roi(10).validate().unwrap();
    }

    #[test]
    fn rejects_bad_targets() {
        let mut c = ModelConfig::uia(7);
        c.pool_targets = vec![750, 800, 500, 400];
        assert!(c.validate().is_err());
        c.pool_targets = vec![1000, 600, 500, 400];
        assert!(c.validate().is_err());
        c.pool_targets = vec![750, 600, 500];
        assert!(c.validate().is_err());
    }

    #[test]
    fn reachable() {
        assert_eq!(reachable_edges(1000), 999);
        assert_eq!(reachable_edges(2000), 1998);
        assert_eq!(reachable_edges(750), 750);
        assert_eq!(reachable_edges(400), 399);
    }
}
