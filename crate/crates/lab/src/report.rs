//! Report rows and their CSV/JSON emission.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Martingale,
    Bellman,
    Fft,
    Analytic,
}

impl Method {
    fn as_str(&self) -> &'static str {
        match self {
            Method::Martingale => "martingale",
            Method::Bellman => "bellman",
            Method::Fft => "fft",
            Method::Analytic => "analytic",
        }
    }
}

/// One measured or derived quantity. Verdict rows use a `verdict:` prefix
/// on the quantity name and encode PASS as 1 and FAIL as 0 in the value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_id: String,
    pub quantity: String,
    pub method: Method,
    pub value: f64,
    pub params_json: String,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(
        &mut self,
        experiment_id: &str,
        quantity: &str,
        method: Method,
        value: f64,
        params: &serde_json::Value,
        wall_ms: u64,
    ) {
        self.rows.push(ReportRow {
            experiment_id: experiment_id.to_string(),
            quantity: quantity.to_string(),
            method,
            value,
            params_json: serde_json::to_string(params).unwrap(),
            wall_ms,
        });
    }

    pub fn push_verdict(&mut self, experiment_id: &str, name: &str, pass: bool) {
        self.push(
            experiment_id,
            &format!("verdict:{name}"),
            Method::Analytic,
            if pass { 1.0 } else { 0.0 },
            &serde_json::Value::Null,
            0,
        );
    }

    pub fn verdicts(&self) -> impl Iterator<Item = (&str, bool)> {
        self.rows.iter().filter_map(|r| {
            r.quantity
                .strip_prefix("verdict:")
                .map(|name| (name, r.value == 1.0))
        })
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().all(|(_, pass)| pass)
    }

    pub fn failed_verdicts(&self) -> Vec<String> {
        self.verdicts()
            .filter(|(_, pass)| !pass)
            .map(|(name, _)| name.to_string())
            .collect()
    }

    /// First value of a quantity, if present.
    pub fn value_of(&self, quantity: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.quantity == quantity).map(|r| r.value)
    }

    pub fn values_of(&self, quantity: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == quantity).map(|r| r.value).collect()
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["experiment_id", "quantity", "method", "value", "params_json", "wall_ms"])
            .unwrap();
        for r in &self.rows {
            w.write_record([
                r.experiment_id.as_str(),
                r.quantity.as_str(),
                r.method.as_str(),
                &format!("{}", r.value),
                r.params_json.as_str(),
                &format!("{}", r.wall_ms),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.rows).unwrap()
    }

    /// Write `<name>.csv` or `<name>.json` under `dir`.
    pub fn emit(&self, dir: &Path, name: &str, format: EmitFormat) -> Result<std::path::PathBuf, LabError> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::Io(e.to_string()))?;
        let (path, body) = match format {
            EmitFormat::Csv => (dir.join(format!("{name}.csv")), self.to_csv_string()),
            EmitFormat::Json => (dir.join(format!("{name}.json")), self.to_json_string()),
        };
        std::fs::write(&path, body).map_err(|e| LabError::Io(e.to_string()))?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
}

impl std::str::FromStr for EmitFormat {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            other => Err(LabError::BadConfig(format!("unknown format {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only_csv() {
        let report = Report::default();
        let csv = report.to_csv_string();
        assert_eq!(csv.trim(), "experiment_id,quantity,method,value,params_json,wall_ms");
    }

    #[test]
    fn params_json_is_quoted_safely() {
        let mut report = Report::default();
        report.push(
            "x",
            "q",
            Method::Fft,
            1.5,
            &serde_json::json!({"a": [1, 2], "s": "v,w"}),
            3,
        );
        let csv = report.to_csv_string();
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        let rec = rdr.records().next().unwrap().unwrap();
        assert_eq!(&rec[1], "q");
        let parsed: serde_json::Value = serde_json::from_str(&rec[4]).unwrap();
        assert_eq!(parsed["s"], "v,w");
    }

    #[test]
    fn verdict_accounting() {
        let mut report = Report::default();
        report.push_verdict("x", "good", true);
        assert!(report.all_pass());
        report.push_verdict("x", "bad", false);
        assert!(!report.all_pass());
        assert_eq!(report.failed_verdicts(), vec!["bad".to_string()]);
    }
}
