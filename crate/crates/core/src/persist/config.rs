//! Key/value text configuration for presets, class labels and DSP
//! parameters. Lines are `key = value`; `#` starts a comment.

use std::path::Path;

use crate::dsp::DspConfig;

use super::PersistError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preset: String,
    pub seed: u64,
    pub accent_labels: Vec<String>,
    pub gender_labels: Vec<String>,
    pub dsp: DspConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preset: "toy".into(),
            seed: 42,
            // paper-scale default: 40 accent classes
            accent_labels: (0..40).map(|i| format!("accent{i:02}")).collect(),
            gender_labels: vec!["f".into(), "m".into()],
            dsp: DspConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn accent_classes(&self) -> usize {
        self.accent_labels.len()
    }

    pub fn accent_id(&self, label: &str) -> Option<usize> {
        self.accent_labels.iter().position(|l| l == label)
    }

    pub fn gender_id(&self, label: &str) -> Option<usize> {
        self.gender_labels.iter().position(|l| l == label)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<PipelineConfig, PersistError> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut cfg = PipelineConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| PersistError::ConfigLine {
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_num = |v: &str| -> Result<f64, PersistError> {
            v.parse::<f64>().map_err(|_| err(format!("invalid number `{v}`")))
        };
        match key {
            "preset" => cfg.preset = value.to_string(),
            "seed" => cfg.seed = parse_num(value)? as u64,
            "accent_labels" => {
                cfg.accent_labels = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            "gender_labels" => {
                cfg.gender_labels = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            "sample_rate" => cfg.dsp.sample_rate = parse_num(value)? as u32,
            "win_size" => cfg.dsp.win_size = parse_num(value)? as usize,
            "hop_size" => cfg.dsp.hop_size = parse_num(value)? as usize,
            "n_mels" => cfg.dsp.n_mels = parse_num(value)? as usize,
            "f_min" => cfg.dsp.f_min = parse_num(value)?,
            "f_max" => cfg.dsp.f_max = parse_num(value)?,
            "log_floor" => cfg.dsp.log_floor = parse_num(value)?,
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    cfg.dsp.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_forty_accent_classes() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.accent_classes(), 40);
        assert_eq!(cfg.gender_labels.len(), 2);
    }

    #[test]
    fn parses_keys_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(
            &path,
            "# corpus setup\npreset = toy\naccent_labels = us, ru\nseed = 7\nhop_size = 256\n",
        )
        .unwrap();
        let cfg = parse_config(&path).unwrap();
        assert_eq!(cfg.preset, "toy");
        assert_eq!(cfg.accent_labels, vec!["us".to_string(), "ru".to_string()]);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.accent_id("ru"), Some(1));
        assert_eq!(cfg.accent_id("xx"), None);
    }

    #[test]
    fn unknown_key_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "preset = toy\nwhatever = 3\n").unwrap();
        assert!(matches!(
            parse_config(&path),
            Err(PersistError::ConfigLine { line: 2, .. })
        ));
    }
}
