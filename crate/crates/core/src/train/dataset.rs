use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::features::{assemble_features_with, FeatureOptions};
use crate::mesh::{load_mesh, validate_manifold};
use crate::nn::EdgeMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Stable,
    Growing,
}

impl Label {
    /// Logit index: 0 stable, 1 growing.
    pub fn index(self) -> usize {
        match self {
            Label::Stable => 0,
            Label::Growing => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Label::Growing
        } else {
            Label::Stable
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Stable => "stable",
            Label::Growing => "growing",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "growing" | "1" => Ok(Label::Growing),
            "stable" | "0" => Ok(Label::Stable),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// One line of `manifest.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub mesh_path: String,
    pub label: Label,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub group_id: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|s| !s.trim().is_empty()))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, TrainError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<ManifestRow>, _>>()?;
    if rows.is_empty() {
        return Err(TrainError::Data(format!("{} lists no samples", path.display())));
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A loaded sample with its raw (unnormalized) edge features.
#[derive(Debug, Clone)]
pub struct Sample {
    pub mesh_path: PathBuf,
    pub label: Label,
    pub group_id: Option<String>,
    pub mesh: EdgeMesh,
    pub features: Array2<f64>,
}

/// Loads and validates every mesh in a manifest, resolving paths relative to
/// the manifest's directory, and computes features.
pub fn load_dataset(manifest: &Path, opts: &FeatureOptions) -> Result<Vec<Sample>, TrainError> {
    let rows = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    rows.par_iter()
        .map(|row| {
            let path = base.join(&row.mesh_path);
            let fail = |m: String| TrainError::Data(format!("{}: {m}", path.display()));
            let mesh = load_mesh(&path).map_err(|e| fail(e.to_string()))?;
            let report = validate_manifold(&mesh);
            if !report.is_closed_manifold {
                return Err(fail("not a closed manifold".into()));
            }
            let features = assemble_features_with(&mesh, opts).map_err(|e| fail(e.to_string()))?;
            Ok(Sample {
                mesh_path: path.clone(),
                label: row.label,
                group_id: row.group_id.clone(),
                mesh: EdgeMesh::new(mesh).map_err(|e| fail(e.to_string()))?,
                features,
            })
        })
        .collect()
}
