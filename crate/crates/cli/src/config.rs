//! Run configuration: one TOML document binding the network, training,
//! scene generator and gradient-check settings plus default paths and the
//! run seed. Every key is optional; `radarseg show-config` prints the
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};

use radar_xconv::net::NetworkSpec;
use radar_xconv::pointcloud::InputLayout;
use radar_xconv::synth::SceneConfig;
use radar_xconv::train::{GradSuiteConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Network selection: a named preset, optionally with a replacement input
/// layout, or a complete spec.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// One of `pp_msg` (default), `vanilla`, `pp`, `msg`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_layout: Option<InputLayout>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<NetworkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds scene generation, initialization, shuffling and evaluation.
    pub seed: u64,
    pub paths: Paths,
    pub network: NetworkSection,
    /// `seed` here is ignored in favour of the top-level seed.
    pub train: TrainConfig,
    pub scenes: SceneConfig,
    pub gradcheck: GradSuiteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            network: NetworkSection::default(),
            train: TrainConfig::default(),
            scenes: SceneConfig::default(),
            gradcheck: GradSuiteConfig::default(),
        }
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Dotted key at `offset`: the enclosing `[table]` header plus the key on the
/// line, when there is one.
fn key_at(text: &str, offset: usize) -> String {
    let offset = offset.min(text.len());
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[offset..].find('\n').map_or(text.len(), |i| offset + i);
    let line = text[line_start..line_end].trim();
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    if line.starts_with('[') {
        return line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
    }
    let key = line.split('=').next().unwrap_or("").trim().trim_matches('"');
    match (table, key.is_empty()) {
        (Some(t), false) => format!("{t}.{key}"),
        (Some(t), true) => t,
        (None, false) => key.to_string(),
        (None, true) => "<document>".into(),
    }
}

/// Line of the `[table]` header for `section`, if present.
fn section_line(text: &str, section: &str) -> Option<usize> {
    text.lines().position(|l| l.trim() == format!("[{section}]")).map(|i| i + 1)
}

fn located(path: &Path, text: &str, section: &str, msg: impl std::fmt::Display) -> CliError {
    match section_line(text, section) {
        Some(line) => CliError::usage(format!("{}:{line}: {section}: {msg}", path.display())),
        None => CliError::usage(format!("{}: {section}: {msg}", path.display())),
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| {
            let at = e.span().map_or(0, |s| s.start);
            CliError::usage(format!("{}:{}: {}: {}", path.display(), line_of(text, at), key_at(text, at), e.message()))
        })?;
        if raw.get("train").and_then(|t| t.get("seed")).is_some() {
            let line = text
                .lines()
                .enumerate()
                .skip(section_line(text, "train").unwrap_or(0))
                .find(|(_, l)| l.trim_start().starts_with("seed"))
                .map_or(0, |(i, _)| i + 1);
            return Err(CliError::usage(format!(
                "{}:{line}: train.seed: set the top-level `seed` instead",
                path.display()
            )));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map_or(0, |s| s.start);
            CliError::usage(format!("{}:{}: {}: {}", path.display(), line_of(text, at), key_at(text, at), e.message()))
        })?;
        cfg.validate(text, path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// The file's config, or the defaults.
    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn validate(&self, text: &str, path: &Path) -> CliResult<()> {
        if self.seed > i64::MAX as u64 {
            return Err(located(path, text, "seed", "must not exceed 2^63 - 1"));
        }
        self.network_spec().map_err(|e| located(path, text, "network", e))?;
        self.train.validate().map_err(|e| located(path, text, "train", e))?;
        self.scenes.sample(0).map_err(|e| located(path, text, "scenes", e))?;
        let g = &self.gradcheck;
        if !(g.h > 0.0 && g.network_h > 0.0 && g.tolerance > 0.0 && g.points >= 4) {
            return Err(located(path, text, "gradcheck", "h, network_h and tolerance must be positive and points >= 4"));
        }
        Ok(())
    }

    /// The network this config selects.
    pub fn network_spec(&self) -> Result<NetworkSpec, String> {
        let n = &self.network;
        let mut spec = match (&n.preset, &n.spec) {
            (Some(_), Some(_)) => return Err("give either `preset` or `spec`, not both".into()),
            (_, Some(spec)) => spec.clone(),
            (preset, None) => {
                let name = preset.as_deref().unwrap_or("pp_msg");
                NetworkSpec::preset(name).ok_or_else(|| format!("unknown preset `{name}` (pp_msg, vanilla, pp, msg)"))?
            }
        };
        if let Some(layout) = &n.input_layout {
            spec.input_layout = layout.clone();
        }
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Fully expanded copy: the network section holds the complete spec and
    /// the training seed mirrors the run seed.
    pub fn resolved(&self) -> CliResult<RunConfig> {
        let spec = self.network_spec().map_err(CliError::usage)?;
        Ok(RunConfig {
            network: NetworkSection {
                preset: None,
                input_layout: None,
                spec: Some(spec),
            },
            ..self.clone()
        })
    }

    /// TOML of [`RunConfig::resolved`] without the redundant training seed.
    pub fn resolved_toml(&self) -> CliResult<String> {
        let mut value = toml::Table::try_from(self.resolved()?).map_err(|e| CliError::usage(e.to_string()))?;
        if let Some(toml::Value::Table(train)) = value.get_mut("train") {
            train.remove("seed");
        }
        toml::to_string(&value).map_err(|e| CliError::usage(e.to_string()))
    }

    /// Writes the resolved config as `config.toml` into `dir`.
    pub fn write_into(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("config.toml");
        fs::write(&path, self.resolved_toml()?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<RunConfig> {
        RunConfig::parse(text, Path::new("run.toml"))
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_reports_file_line_and_key() {
        let err = parse("seed = 3\n\n[train]\nepochs = 2\nlearning_rate = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CliError::Usage(_)));
        assert!(msg.contains("run.toml:5: train.learning_rate"), "{msg}");
    }

    #[test]
    fn type_error_is_located() {
        let msg = parse("[scenes]\ninflation = \"big\"\n").unwrap_err().to_string();
        assert!(msg.contains("run.toml:2: scenes.inflation"), "{msg}");
    }

    #[test]
    fn train_seed_is_rejected() {
        let msg = parse("[train]\nepochs = 2\nseed = 4\n").unwrap_err().to_string();
        assert!(msg.contains("run.toml:3: train.seed"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_section() {
        let msg = parse("[network]\npreset = \"resnet\"\n").unwrap_err().to_string();
        assert!(msg.contains("run.toml:1: network"), "{msg}");
        let msg = parse("[train]\nepochs = 0\n").unwrap_err().to_string();
        assert!(msg.contains("run.toml:1: train"), "{msg}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = parse("seed = 9\n[network]\npreset = \"vanilla\"\n[train]\nepochs = 3\n").unwrap();
        let text = cfg.resolved_toml().unwrap();
        let back = parse(&text).unwrap();
        assert_eq!(back.network_spec().unwrap(), NetworkSpec::vanilla());
        assert_eq!(back.train_config(), cfg.train_config());
        assert_eq!(back.resolved_toml().unwrap(), text);
    }
}
