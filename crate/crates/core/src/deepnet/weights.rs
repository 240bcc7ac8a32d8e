//! Model persistence: a JSON manifest plus a little-endian f32 blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

use super::model::{ModelParams, NetConfig};
use super::train::EpochLog;
use super::windows::NormStats;

pub const MANIFEST_FILE: &str = "weights.json";
pub const BLOB_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsManifest {
    pub format_version: String,
    pub config: NetConfig,
    pub norm_stats: NormStats,
    pub zero_fill: bool,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
    pub tensors: Vec<TensorEntry>,
}

/// A trained extractor with everything needed to featurise new recordings.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub model: ModelParams,
    pub stats: NormStats,
    pub zero_fill: bool,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

impl SavedModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tensors = Vec::new();
        let mut blob = Vec::with_capacity(4 * (self.model.params.len() + self.model.buffers.len()));
        let groups = [
            (&self.model.param_specs, &self.model.params),
            (&self.model.buffer_specs, &self.model.buffers),
        ];
        for (specs, values) in groups {
            for s in specs.iter() {
                tensors.push(TensorEntry {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                    dtype: "f32le".into(),
                    offset: blob.len(),
                });
                for v in &values[s.range()] {
                    blob.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
        let manifest = WeightsManifest {
            format_version: FORMAT_VERSION.into(),
            config: self.model.config().clone(),
            norm_stats: self.stats,
            zero_fill: self.zero_fill,
            best_epoch: self.best_epoch,
            history: self.history.clone(),
            tensors,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;
        let bpath = dir.join(BLOB_FILE);
        fs::write(&bpath, blob).map_err(|e| Error::io(&bpath, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: WeightsManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&mpath, e.line(), e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                &mpath,
                1,
                format!("format_version {} is not supported (expected {FORMAT_VERSION})", m.format_version),
            ));
        }
        let bpath = dir.join(BLOB_FILE);
        let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let template = ModelParams::init(&m.config, 0)?;
        let specs: Vec<_> = template.param_specs.iter().chain(&template.buffer_specs).collect();
        if specs.len() != m.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "manifest lists {} tensors, configuration needs {}",
                m.tensors.len(),
                specs.len()
            )));
        }
        let mut values = Vec::with_capacity(template.params.len() + template.buffers.len());
        for (spec, entry) in specs.iter().zip(&m.tensors) {
            if spec.name != entry.name || spec.shape != entry.shape || entry.dtype != "f32le" {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {} {:?} ({}) does not match expected {} {:?}",
                    entry.name, entry.shape, entry.dtype, spec.name, spec.shape
                )));
            }
            let end = entry.offset + 4 * spec.len();
            if end > blob.len() {
                return Err(Error::ShapeMismatch(format!("tensor {} runs past the end of {BLOB_FILE}", entry.name)));
            }
            values.extend(
                blob[entry.offset..end]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64),
            );
        }
        let buffers = values.split_off(template.params.len());
        Ok(SavedModel {
            model: ModelParams::from_parts(&m.config, values, buffers)?,
            stats: m.norm_stats,
            zero_fill: m.zero_fill,
            best_epoch: m.best_epoch,
            history: m.history,
        })
    }
}
