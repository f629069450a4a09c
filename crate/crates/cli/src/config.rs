//! The JSON run configuration. Every section falls back to the library
//! defaults, unknown keys are rejected, and command-line flags win.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evhop::corpus::IngestOptions;
use evhop::eval::EvalConfig;
use evhop::hybrid::HybridParams;
use evhop::learning::encoder::{DEFAULT_EMBED_DIM, DEFAULT_FEATURE_DIM};
use evhop::learning::{EpochRatio, TrainConfig};
use evhop::negatives::NegativeSamplingConfig;
use evhop::pipeline::HopConfig;
use evhop::rerank::{PairTrainConfig, RerankConfig, RerankerDataConfig};
use evhop::sparse::Bm25Params;
use evhop::synthetic::SyntheticConfig;
use evhop::tuning::DEFAULT_GRID;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Required by every command that trains or samples.
    pub seed: Option<u64>,
    /// Input and output paths keyed by flag name (`corpus`, `out`, ...).
    pub paths: BTreeMap<String, PathBuf>,
    pub ingest: IngestOptions,
    pub bm25: Bm25Params,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub schedule: ScheduleConfig,
    pub negatives: NegativeSamplingConfig,
    pub similarity: SimilarityKind,
    pub rerank: RerankConfig,
    pub reranker_data: RerankerDataConfig,
    pub pair_train: PairTrainConfig,
    pub scorer: ScorerKind,
    pub oracle: OracleConfig,
    pub hop: HopConfig,
    pub hybrid: HybridConfig,
    pub fusion: FusionConfig,
    pub grid: GridConfig,
    pub eval: EvalConfig,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

/// Multitask-to-contrastive epoch ratio, written `"2"`, `"1/3"` or `"inf"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub ratio: String,
    pub cycles: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            ratio: "1".into(),
            cycles: 1,
        }
    }
}

pub fn parse_ratio(s: &str) -> Result<EpochRatio> {
    let bad = || UsageError(format!("--ratio: expected N, N/M or inf, got {s:?}"));
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") {
        return Ok(EpochRatio::Infinite);
    }
    let (m, c) = s.split_once('/').unwrap_or((s, "1"));
    let multitask: u32 = m.trim().parse().map_err(|_| bad())?;
    let contrastive: u32 = c.trim().parse().map_err(|_| bad())?;
    if multitask == 0 || contrastive == 0 {
        return Err(bad().into());
    }
    Ok(EpochRatio::Finite {
        multitask,
        contrastive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// Jaccard overlap of token sets.
    #[default]
    Overlap,
    /// Relevance from a trained pair scorer (`--scorer-model`).
    Reranker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Trained linear pair scorer, M3PS file.
    #[default]
    Linear,
    /// Precomputed logits JSONL.
    Logits,
    /// Gold-aware oracle built from the claims file.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub floor: f64,
    pub span: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            floor: 0.05,
            span: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridConfig {
    pub mth: f64,
    pub gamma: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            mth: 0.01,
            gamma: 1.0,
        }
    }
}

impl HybridConfig {
    pub fn params(&self) -> Result<HybridParams> {
        Ok(HybridParams::new(self.mth, self.gamma)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Hybrid,
    Threshold,
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub strategy: StrategyKind,
    pub threshold: f64,
    pub factor: f64,
    /// Evidence kept per claim.
    pub k: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Hybrid,
            threshold: 0.0,
            factor: 1.0,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub mths: Vec<f64>,
    pub gammas: Vec<f64>,
    pub k: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            mths: DEFAULT_GRID.to_vec(),
            gammas: DEFAULT_GRID.to_vec(),
            k: 5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("--config {}: {e}", path.display())).into())
    }

    pub fn set_path(&mut self, name: &str, value: Option<&PathBuf>) {
        if let Some(v) = value {
            self.paths.insert(name.to_owned(), v.clone());
        }
    }

    pub fn path(&self, name: &str) -> Result<&Path> {
        self.paths.get(name).map(PathBuf::as_path).ok_or_else(|| {
            UsageError(format!(
                "missing --{} (or paths.{name} in the config)",
                name.replace('_', "-")
            ))
            .into()
        })
    }

    pub fn opt_path(&self, name: &str) -> Option<&Path> {
        self.paths.get(name).map(PathBuf::as_path)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            UsageError(
                "missing --seed (or seed in the config); this command does not pick one".into(),
            )
            .into()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"hop": {"beam": 3}}"#).is_ok());
        assert!(serde_json::from_str::<RunConfig>(r#"{"hop": {"beams": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"colour": 1}"#).is_err());
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.hop.beam, 10);
        assert_eq!(cfg.negatives.threshold, 0.999);
        assert_eq!(cfg.bm25.k1, 0.9);
    }

    #[test]
    fn ratios() {
        assert_eq!(
            parse_ratio("2").unwrap(),
            EpochRatio::Finite {
                multitask: 2,
                contrastive: 1
            }
        );
        assert_eq!(
            parse_ratio("1/3").unwrap(),
            EpochRatio::Finite {
                multitask: 1,
                contrastive: 3
            }
        );
        assert_eq!(parse_ratio("INF").unwrap(), EpochRatio::Infinite);
        assert!(parse_ratio("0").is_err());
        assert!(parse_ratio("x/2").is_err());
    }
}
