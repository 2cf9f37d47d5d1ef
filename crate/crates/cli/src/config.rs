//! Pipeline configuration document.

use std::path::{Path, PathBuf};

use ordscore_core::data::{validate_ratios, Schema, SplitName};
use ordscore_core::eval::BootstrapConfig;
use ordscore_core::pipeline::{ModelConfig, TransformConfig};
use ordscore_core::ranking::ForestParams;
use ordscore_core::scorecard::LookupOptions;
use ordscore_core::{Result, ScoreError};
use serde::{Deserialize, Serialize};

fn default_ratios() -> [f64; 3] {
    [0.7, 0.1, 0.2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: default_ratios(),
            seed: 0,
        }
    }
}

fn default_reference() -> SplitName {
    SplitName::Train
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    /// Split whose medians fill missing cells.
    #[serde(default = "default_reference")]
    pub reference: SplitName,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            reference: default_reference(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsimonyConfig {
    /// Largest model size on the curve; all ranked variables when absent.
    #[serde(default)]
    pub max_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub imputation: ImputationConfig,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub parsimony: ParsimonyConfig,
    /// Variables for the final model, in any order the user prefers.
    #[serde(default)]
    pub selected_variables: Option<Vec<String>>,
    /// Used when `selected_variables` is absent: the top ranked variables.
    #[serde(default)]
    pub top_k: Option<usize>,
    /// JSON map from variable to replacement cut-offs, used by `finetune`.
    #[serde(default)]
    pub overrides: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub lookup: LookupOptions,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A parsed config with paths resolved against the config's directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub schema: Schema,
    /// Raw bytes of the config file, for hashing.
    pub raw: Vec<u8>,
    pub path: PathBuf,
}

impl LoadedConfig {
    /// Reads, resolves and validates a config. `out_dir` and `seed` take
    /// precedence over the document; the seed replaces every seed in it.
    pub fn load(path: &Path, out_dir: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| ScoreError::io(path, e))?;
        let mut config: PipelineConfig = serde_json::from_slice(&raw)
            .map_err(|e| ScoreError::validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.data = base.join(&config.data);
        config.schema = base.join(&config.schema);
        config.overrides = config.overrides.map(|o| base.join(o));
        config.out_dir = match out_dir {
            Some(dir) => dir.to_path_buf(),
            None => base.join(&config.out_dir),
        };
        if let Some(seed) = seed {
            config.split.seed = seed;
            config.forest.seed = seed;
            config.bootstrap.seed = seed;
        }
        let schema = Schema::from_json_file(&config.schema)?;
        let loaded = LoadedConfig {
            config,
            schema,
            raw,
            path: path.to_path_buf(),
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        validate_ratios(&c.split.ratios)?;
        c.bootstrap.validate()?;
        if !c.data.is_file() {
            return Err(ScoreError::validation(format!("data file {} not found", c.data.display())));
        }
        if let Some(o) = &c.overrides {
            if !o.is_file() {
                return Err(ScoreError::validation(format!("overrides file {} not found", o.display())));
            }
        }
        if let Some(vars) = &c.selected_variables {
            if vars.is_empty() {
                return Err(ScoreError::validation("selected_variables is empty"));
            }
            for v in vars {
                if self.schema.column_index(v).is_none() {
                    return Err(ScoreError::validation(format!("selected variable '{v}' is not in the schema")));
                }
            }
            let mut sorted = vars.clone();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(ScoreError::validation("selected_variables lists a variable twice"));
            }
        }
        if c.top_k == Some(0) {
            return Err(ScoreError::validation("top_k must be at least 1"));
        }
        if c.forest.n_trees == 0 {
            return Err(ScoreError::validation("forest n_trees must be at least 1"));
        }
        if c.lookup.bin_width < 1 || c.lookup.min_bin_count < 1 {
            return Err(ScoreError::validation("lookup bin_width and min_bin_count must be at least 1"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, config: &str) -> PathBuf {
        std::fs::write(
            dir.join("schema.json"),
            r#"{"columns":[{"name":"x","kind":"continuous"}],"outcome":{"name":"y","labels":["a","b"]}}"#,
        )
        .unwrap();
        std::fs::write(dir.join("data.csv"), "x,y\n1,a\n").unwrap();
        let path = dir.join("config.json");
        std::fs::write(&path, config).unwrap();
        path
    }

    #[test]
    fn minimal_config_gets_defaults_and_resolved_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), r#"{"data":"data.csv","schema":"schema.json"}"#);
        let c = LoadedConfig::load(&path, None, Some(9)).unwrap();
        assert_eq!(c.config.split.ratios, [0.7, 0.1, 0.2]);
        assert_eq!(c.config.forest.n_trees, 100);
        assert_eq!(c.config.bootstrap.b, 100);
        assert_eq!((c.config.split.seed, c.config.forest.seed, c.config.bootstrap.seed), (9, 9, 9));
        assert_eq!(c.config.out_dir, dir.path().join("out"));
        assert_eq!(c.config.imputation.reference, SplitName::Train);
    }

    #[test]
    fn invalid_configs_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        for body in [
            r#"{"data":"data.csv","schema":"schema.json","split":{"ratios":[0.5,0.5,0.2]}}"#,
            r#"{"data":"data.csv","schema":"schema.json","bootstrap":{"b":0}}"#,
            r#"{"data":"data.csv","schema":"schema.json","selected_variables":["zz"]}"#,
            r#"{"data":"missing.csv","schema":"schema.json"}"#,
            r#"{"data":"data.csv","schema":"schema.json","unknown":1}"#,
        ] {
            let path = write_fixture(dir.path(), body);
            let err = LoadedConfig::load(&path, None, None).unwrap_err();
            assert!(err.is_validation(), "{body}: {err}");
        }
    }
}
