//! Experiment configuration: one TOML file, overridable from the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fedlab::analysis::HitProtocol;
use fedlab::attacks::{AttackConfig, AttackKind};
use fedlab::data::ColumnMapping;
use fedlab::exec::Execution;
use fedlab::federation::{ArchivePolicy, LdpConfig, Seeds, TrainHyper};
use fedlab::models::{Defense, ModelConfig};

use crate::error::CliError;

/// Pipeline stages in their only valid order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Train,
    Attack,
    Sweep,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Train, Stage::Attack, Stage::Sweep, Stage::Analyze];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Attack => "attack",
            Stage::Sweep => "sweep",
            Stage::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Tab-separated `user item rating timestamp`.
    #[serde(rename = "movielens_100k")]
    Movielens100k,
    /// `user,item,rating,timestamp` with a header row.
    Csv,
    /// Layout given by `dataset.columns`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub format: DatasetFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<ColumnMapping>,
    /// Keep only the first `n` users by id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_users: Option<usize>,
}

impl DatasetConfig {
    pub fn mapping(&self) -> Result<ColumnMapping, CliError> {
        match (self.format, &self.columns) {
            (DatasetFormat::Movielens100k, None) => Ok(ColumnMapping::movielens_100k()),
            (DatasetFormat::Csv, None) => Ok(ColumnMapping::csv(true, true)),
            (DatasetFormat::Custom, Some(c)) => Ok(c.clone()),
            (DatasetFormat::Custom, None) => Err(CliError::config("dataset.columns", "required when format = \"custom\"")),
            (_, Some(_)) => Err(CliError::config("dataset.columns", "only allowed when format = \"custom\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kinds: Vec<AttackKind>,
    pub imia: AttackConfig,
    /// Use the catalog's popularity counts as the IMIA prior when
    /// `imia.popularity` is set.
    pub popularity_from_catalog: bool,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kinds: AttackKind::ALL.to_vec(),
            imia: AttackConfig::default(),
            popularity_from_catalog: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSet {
    Sampled,
    AllItems,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
    pub protocol: CandidateSet,
    /// Sampled negatives per user; ignored for `all_items`.
    pub negatives: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: 10,
            protocol: CandidateSet::Sampled,
            negatives: 99,
        }
    }
}

impl EvalSection {
    pub fn hit_protocol(&self) -> HitProtocol {
        match self.protocol {
            CandidateSet::Sampled => HitProtocol::Sampled {
                negatives: self.negatives,
            },
            CandidateSet::AllItems => HitProtocol::AllItems,
        }
    }
}

/// Grids for the defense and γ comparisons. Empty grids are skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub buckets: usize,
    /// A defense "reaches random level" when IMIA F1 is at most the random
    /// baseline plus this margin.
    pub random_margin: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            buckets: 20,
            random_margin: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainHyper,
    #[serde(default = "ldp_off")]
    pub ldp: LdpConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<Defense>,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub archive: ArchivePolicy,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub execution: Execution,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}
fn ldp_off() -> LdpConfig {
    LdpConfig::OFF
}
fn default_out() -> PathBuf {
    PathBuf::from("runs/experiment")
}

impl ExperimentConfig {
    /// Reads `path`, applies `key=value` overrides in order, resolves the
    /// dataset path and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, overrides)?;
        if cfg.dataset.path.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.dataset.path = base.join(&cfg.dataset.path);
        }
        cfg.validate()?;
        cfg.dataset.path = std::fs::canonicalize(&cfg.dataset.path)?;
        Ok(cfg)
    }

    /// Parses TOML text with overrides but does not resolve paths or validate.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::config("config", e))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::config("config", e.message()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(CliError::config("name", "must not be empty"));
        }
        if self.stages.is_empty() {
            return Err(CliError::config("stages", "at least one stage is required"));
        }
        if self.stages.windows(2).any(|w| w[0] >= w[1]) {
            let order: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
            return Err(CliError::config(
                "stages",
                format!("must be distinct and ordered as {}", order.join(" < ")),
            ));
        }
        if !self.dataset.path.is_file() {
            return Err(CliError::config("dataset.path", format!("{} does not exist", self.dataset.path.display())));
        }
        self.dataset.mapping()?;
        if self.dataset.first_users == Some(0) {
            return Err(CliError::config("dataset.first_users", "must be positive"));
        }
        self.model.validate().map_err(|e| CliError::config("model", e))?;
        self.train.validate().map_err(|e| CliError::config("train", e))?;
        self.ldp.validate().map_err(|e| CliError::config("ldp", e))?;
        if let Some(d) = self.defense {
            if !(d.mu >= 0.0 && d.mu.is_finite()) {
                return Err(CliError::config("defense.mu", format!("must be non-negative, got {}", d.mu)));
            }
        }
        self.attack.imia.validate().map_err(|e| CliError::config("attack.imia", e))?;
        if self.attack.kinds.is_empty() {
            return Err(CliError::config("attack.kinds", "at least one attack is required"));
        }
        if self.eval.k == 0 {
            return Err(CliError::config("eval.k", "must be positive"));
        }
        if self.eval.protocol == CandidateSet::Sampled && self.eval.negatives == 0 {
            return Err(CliError::config("eval.negatives", "must be positive"));
        }
        for (field, grid) in [("sweep.lambda", &self.sweep.lambda), ("sweep.mu", &self.sweep.mu)] {
            if let Some(v) = grid.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(CliError::config(field, format!("values must be non-negative, got {v}")));
            }
        }
        if let Some(g) = self.sweep.gamma.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(CliError::config("sweep.gamma", format!("values must be in (0, 1], got {g}")));
        }
        if self.analysis.buckets == 0 {
            return Err(CliError::config("analysis.buckets", "must be positive"));
        }
        Ok(())
    }

    /// The defense actually applied; `μ = 0` is the undefended protocol.
    pub fn effective_defense(&self) -> Option<Defense> {
        self.defense.filter(|d| d.mu > 0.0)
    }

    /// The snapshot written next to the artifacts.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }
}

/// Sets a dotted key, parsing the value as TOML and falling back to a string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config("--set", format!("expected key=value, got {spec:?}")))?;
    let key = key.trim();
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config("--set", format!("bad key {key:?}")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(key, format!("{part} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "toy"
        [dataset]
        path = "u.data"
        format = "movielens_100k"
        [model]
        kind = "ncf"
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::parse(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.stages, Stage::ALL.to_vec());
        assert_eq!(cfg.train, TrainHyper::default());
        assert_eq!(cfg.ldp, LdpConfig::OFF);
        assert_eq!(cfg.eval.k, 10);
        assert!(cfg.defense.is_none());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let sets = [
            "train.global_rounds=7".to_string(),
            "ldp.lambda=0.1".to_string(),
            "defense.mu=0.4".to_string(),
            "attack.imia.gamma=0.5".to_string(),
            "stages=[\"ingest\", \"train\"]".to_string(),
            "name=other".to_string(),
        ];
        let cfg = ExperimentConfig::parse(MINIMAL, &sets).unwrap();
        assert_eq!(cfg.train.global_rounds, 7);
        assert_eq!(cfg.ldp.lambda, 0.1);
        assert_eq!(cfg.defense.unwrap().mu, 0.4);
        assert_eq!(cfg.attack.imia.gamma, 0.5);
        assert_eq!(cfg.stages, vec![Stage::Ingest, Stage::Train]);
        assert_eq!(cfg.name, "other");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentConfig::parse(MINIMAL, &["train.epochs=3".to_string()]).unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
        assert!(ExperimentConfig::parse(MINIMAL, &["novalue".to_string()]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ExperimentConfig::parse(MINIMAL, &["train.patience=0".to_string()]).unwrap();
        cfg.sweep.mu = vec![0.0, 0.4];
        cfg.archive = ArchivePolicy::Rounds(vec![1, 3]);
        let back = ExperimentConfig::parse(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.train.patience, None);
    }

    #[test]
    fn stage_order_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("u.data"), "1\t1\t5\t1\n").unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        ExperimentConfig::load(&path, &[]).unwrap();
        let bad = ExperimentConfig::load(&path, &["stages=[\"attack\", \"train\"]".to_string()]).unwrap_err();
        assert!(bad.to_string().contains("stages"));
        let missing = ExperimentConfig::load(&path, &["dataset.path=\"nope\"".to_string()]).unwrap_err();
        assert!(missing.to_string().contains("dataset.path"));
    }
}
