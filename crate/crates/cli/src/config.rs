use std::path::{Path, PathBuf};

use facedesc::descriptor::DescriptorVariant;
use facedesc::evaluation::DEFAULT_CUTOFFS;
use facedesc::similarity::DistanceKind;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Experiment settings as read from `--config`. Every field is optional;
/// command-line flags take precedence. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<PathBuf>,
    pub descriptors: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub variants: Vec<String>,
    pub distances: Vec<DistanceKind>,
    pub cutoffs: Vec<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub threads: Option<usize>,
    pub anmrr_window: bool,
    pub pivot: bool,
    pub skip_errors: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.model, &mut config.descriptors, &mut config.manifest, &mut config.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Applies `flags` on top of `self`.
    pub fn overlay(mut self, flags: ExperimentConfig) -> Self {
        fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
            flag.or(file)
        }
        fn pick_vec<T>(flag: Vec<T>, file: Vec<T>) -> Vec<T> {
            if flag.is_empty() {
                file
            } else {
                flag
            }
        }
        self.model = pick(flags.model, self.model);
        self.descriptors = pick(flags.descriptors, self.descriptors);
        self.manifest = pick(flags.manifest, self.manifest);
        self.output = pick(flags.output, self.output);
        self.format = pick(flags.format, self.format);
        self.threads = pick(flags.threads, self.threads);
        self.variants = pick_vec(flags.variants, self.variants);
        self.distances = pick_vec(flags.distances, self.distances);
        self.cutoffs = pick_vec(flags.cutoffs, self.cutoffs);
        self.anmrr_window |= flags.anmrr_window;
        self.pivot |= flags.pivot;
        self.skip_errors |= flags.skip_errors;
        self
    }

    pub fn parsed_variants(&self) -> Result<Vec<DescriptorVariant>, CliError> {
        if self.variants.is_empty() {
            return Err(CliError::Usage("at least one --variant is required".into()));
        }
        let mut out: Vec<DescriptorVariant> = Vec::with_capacity(self.variants.len());
        for name in &self.variants {
            let v = DescriptorVariant::parse(name)?;
            if !out.iter().any(|o| o.name == v.name) {
                out.push(v);
            }
        }
        Ok(out)
    }

    pub fn distance_kinds(&self) -> Vec<DistanceKind> {
        let mut out = Vec::new();
        for &d in &self.distances {
            if !out.contains(&d) {
                out.push(d);
            }
        }
        if out.is_empty() {
            out.push(DistanceKind::default());
        }
        out
    }

    pub fn cutoff_list(&self) -> Result<Vec<usize>, CliError> {
        if self.cutoffs.contains(&0) {
            return Err(CliError::Usage("cutoffs must be positive".into()));
        }
        Ok(if self.cutoffs.is_empty() { DEFAULT_CUTOFFS.to_vec() } else { self.cutoffs.clone() })
    }

    pub fn manifest_path(&self) -> Result<&Path, CliError> {
        self.manifest
            .as_deref()
            .ok_or_else(|| CliError::Usage("--manifest is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: ExperimentConfig = serde_json::from_str(
            r#"{"variants": ["35R", "33AR"], "distances": ["l1"], "cutoffs": [5], "threads": 2, "pivot": true}"#,
        )
        .unwrap();
        let flags = ExperimentConfig {
            variants: vec!["30AR".into()],
            threads: Some(1),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.variants, vec!["30AR"]);
        assert_eq!(merged.distances, vec![DistanceKind::L1]);
        assert_eq!(merged.cutoffs, vec![5]);
        assert_eq!(merged.threads, Some(1));
        assert!(merged.pivot);
    }

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.distance_kinds(), vec![DistanceKind::ChiSquare]);
        assert_eq!(c.cutoff_list().unwrap(), vec![1, 5, 10]);
        assert!(matches!(c.parsed_variants(), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"varients": []}"#).is_err());
    }

    #[test]
    fn bad_variant_is_a_usage_error() {
        let c = ExperimentConfig {
            variants: vec!["35Q".into()],
            ..Default::default()
        };
        let err = c.parsed_variants().unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
