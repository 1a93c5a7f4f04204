//! Flat binary checkpoint: magic "ACVC", version, then named f32 tensors.
//!
//! Layout (all little-endian):
//!   magic [4 bytes] | version u32 | entry_count u32
//!   per entry: name_len u32 | name bytes | rank u32 | dims u32 x rank |
//!              dtype u8 (0 = f32) | data f32 x numel
//!
//! Round trips are bit-exact; loading into a model validates shapes by
//! name and reports the first offending tensor.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{Scalar, Tensor};
use crate::models::{ModelBundle, Stage};
use crate::nn::{Module, Preset};

use super::PersistError;

pub const CKPT_MAGIC: &[u8; 4] = b"ACVC";
pub const CKPT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn entry(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn tensor_f64(&self, name: &str) -> Option<Vec<f64>> {
        self.entry(name)
            .map(|e| e.data.iter().map(|&v| v as f64).collect())
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(self.entry(&name).is_none(), "duplicate entry {name}");
        self.entries.push(CheckpointEntry { name, shape, data });
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), PersistError> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ckpt.entries.len() as u32).to_le_bytes());
    for e in &ckpt.entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(DTYPE_F32);
        for &v in &e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, PersistError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8], PersistError> {
        if *pos + n > bytes.len() {
            return Err(PersistError::Truncated(what.to_string()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let magic = take(&mut pos, 4, "magic")?;
    if magic != CKPT_MAGIC {
        return Err(PersistError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4, "entry count")?.try_into().unwrap());
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut pos, 4, "name length")?.try_into().unwrap());
        let name = String::from_utf8(take(&mut pos, name_len as usize, "name")?.to_vec())
            .map_err(|_| PersistError::Truncated("non-utf8 name".into()))?;
        let rank = u32::from_le_bytes(take(&mut pos, 4, "rank")?.try_into().unwrap());
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut pos, 4, "dim")?.try_into().unwrap()) as usize);
        }
        let dtype = take(&mut pos, 1, "dtype")?[0];
        if dtype != DTYPE_F32 {
            return Err(PersistError::Truncated(format!("unknown dtype {dtype}")));
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut pos, numel * 4, &format!("data of {name}"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(CheckpointEntry { name, shape, data });
    }
    Ok(Checkpoint { entries })
}

/// Serialize a bundle: configuration under `meta.*`, then every parameter
/// and buffer of every model.
pub fn bundle_to_checkpoint<T: Scalar>(bundle: &ModelBundle<T>) -> Checkpoint {
    let mut ckpt = Checkpoint::default();
    let preset_flag = match bundle.preset.tag() {
        "paper" => 1.0f32,
        _ => 0.0,
    };
    ckpt.push("meta.preset", vec![1], vec![preset_flag]);
    ckpt.push("meta.accent_classes", vec![1], vec![bundle.accent_classes as f32]);
    ckpt.push("meta.ablation", vec![1], vec![if bundle.ablation { 1.0 } else { 0.0 }]);
    ckpt.push(
        "meta.mel_normalized",
        vec![1],
        vec![if bundle.mel_normalized { 1.0 } else { 0.0 }],
    );
    let stages = [Stage::Aege, Stage::Se, Stage::Stp, Stage::Sts, Stage::Ablation];
    let flags: Vec<f32> = stages
        .iter()
        .map(|s| if bundle.trained_stages.contains(s) { 1.0 } else { 0.0 })
        .collect();
    ckpt.push("meta.trained", vec![stages.len()], flags);
    ckpt.push(
        "meta.vocoder_iterations",
        vec![1],
        vec![bundle.vocoder.iterations as f32],
    );

    bundle.visit(&mut |name, tensor, _| {
        ckpt.push(name, tensor.shape().to_vec(), tensor.to_f32_vec());
    });
    ckpt
}

pub fn save_bundle<T: Scalar>(bundle: &ModelBundle<T>, path: &Path) -> Result<(), PersistError> {
    write_checkpoint(&bundle_to_checkpoint(bundle), path)
}

/// Copy checkpoint tensors into an existing bundle. Shapes are validated
/// name by name; the first mismatch aborts the load.
pub fn load_into_bundle<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    ckpt: &Checkpoint,
) -> Result<(), PersistError> {
    // validate pass first so the bundle is untouched on error
    let mut missing: Option<String> = None;
    let mut mismatch: Option<(String, Vec<usize>, Vec<usize>)> = None;
    bundle.visit(&mut |name, tensor, _| {
        if missing.is_some() || mismatch.is_some() {
            return;
        }
        match ckpt.entry(name) {
            None => missing = Some(name.to_string()),
            Some(e) => {
                if e.shape != tensor.shape() {
                    mismatch = Some((name.to_string(), tensor.shape().to_vec(), e.shape.clone()));
                }
            }
        }
    });
    if let Some(name) = missing {
        return Err(PersistError::MissingTensor(name));
    }
    if let Some((name, expected, got)) = mismatch {
        return Err(PersistError::ShapeMismatch { name, expected, got });
    }
    bundle.visit_mut(&mut |name, tensor, _| {
        let e = ckpt.entry(name).expect("validated above");
        *tensor = Tensor::new(e.shape.clone(), e.data.iter().map(|&v| T::from_f32(v)).collect());
    });
    if let Some(flags) = ckpt.tensor_f64("meta.trained") {
        let stages = [Stage::Aege, Stage::Se, Stage::Stp, Stage::Sts, Stage::Ablation];
        bundle.trained_stages = stages
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f != 0.0)
            .map(|(s, _)| *s)
            .collect::<BTreeSet<_>>();
    }
    if let Some(iters) = ckpt.tensor_f64("meta.vocoder_iterations") {
        bundle.vocoder.iterations = iters[0] as usize;
    }
    Ok(())
}

/// Reconstruct a bundle entirely from a checkpoint file.
pub fn load_bundle<T: Scalar>(path: &Path) -> Result<ModelBundle<T>, PersistError> {
    let ckpt = read_checkpoint(path)?;
    let preset_flag = ckpt
        .tensor_f64("meta.preset")
        .ok_or_else(|| PersistError::MissingTensor("meta.preset".into()))?[0];
    let preset = if preset_flag == 1.0 {
        Preset::paper()
    } else {
        Preset::toy()
    };
    let accent_classes = ckpt
        .tensor_f64("meta.accent_classes")
        .ok_or_else(|| PersistError::MissingTensor("meta.accent_classes".into()))?[0]
        as usize;
    let ablation = ckpt
        .tensor_f64("meta.ablation")
        .ok_or_else(|| PersistError::MissingTensor("meta.ablation".into()))?[0]
        != 0.0;
    let mut bundle = ModelBundle::new(preset, accent_classes, ablation, 0);
    load_into_bundle(&mut bundle, &ckpt)?;
    Ok(bundle)
}
