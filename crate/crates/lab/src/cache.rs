//! A result cache keyed by the canonical config hash.

use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::report::Report;
use crate::LabError;

fn cache_path(out_dir: &Path, config: &ExperimentConfig) -> PathBuf {
    out_dir.join("cache").join(format!("{}.json", config.canonical_hash()))
}

pub fn cache_lookup(out_dir: &Path, config: &ExperimentConfig) -> Option<Report> {
    let path = cache_path(out_dir, config);
    let body = std::fs::read_to_string(path).ok()?;
    let rows = serde_json::from_str(&body).ok()?;
    Some(Report { rows })
}

pub fn cache_store(out_dir: &Path, config: &ExperimentConfig, report: &Report) -> Result<(), LabError> {
    let path = cache_path(out_dir, config);
    std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| LabError::Io(e.to_string()))?;
    std::fs::write(&path, serde_json::to_string_pretty(&report.rows).unwrap())
        .map_err(|e| LabError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(seed: u64) -> ExperimentConfig {
        let mut cfg: ExperimentConfig = serde_json::from_str(
            r#"{"kind": "property_suite", "p": 2.0}"#,
        )
        .unwrap();
        cfg.seed = seed;
        cfg
    }

    #[test]
    fn hit_after_store_miss_for_other_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(0);
        assert!(cache_lookup(dir.path(), &cfg).is_none());
        let mut report = Report::default();
        report.push_verdict(&cfg.experiment_id(), "ok", true);
        cache_store(dir.path(), &cfg, &report).unwrap();
        let hit = cache_lookup(dir.path(), &cfg).unwrap();
        assert_eq!(hit.rows.len(), 1);
        assert_eq!(
            serde_json::to_string(&hit.rows).unwrap(),
            serde_json::to_string(&report.rows).unwrap()
        );
        assert!(cache_lookup(dir.path(), &config(1)).is_none());
    }
}
