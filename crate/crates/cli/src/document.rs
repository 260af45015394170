use std::collections::BTreeMap;
use std::io::Write;

use crt_logit::inference::VariableResult;
use crt_logit::multiple_testing::{SelectionReport, SelectionScore};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRecord {
    pub index: usize,
    pub statistic: Option<f64>,
    pub fisher_info: Option<f64>,
    pub p_value: f64,
    pub screened_in: bool,
    pub selected: bool,
    pub lambda_dx: Option<f64>,
    /// Why the statistic could not be formed, when it could not.
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub procedure: String,
    pub alpha: f64,
    pub k_hat: usize,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthScore {
    pub fdp: f64,
    /// Absent when the true support is empty.
    pub power: Option<f64>,
}

/// Output of `crt-logit infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: String,
    pub method: String,
    pub config: BTreeMap<String, String>,
    pub n: usize,
    pub p: usize,
    /// Penalty of the full logistic fit.
    pub lambda: f64,
    pub records: Vec<VariableRecord>,
    pub selection: SelectionSummary,
    pub truth: Option<TruthScore>,
}

impl ResultDocument {
    pub fn new(
        method: String,
        config: BTreeMap<String, String>,
        n: usize,
        lambda: f64,
        results: &[VariableResult],
        report: &SelectionReport,
        score: Option<SelectionScore>,
    ) -> Self {
        let records = results
            .iter()
            .map(|r| VariableRecord {
                index: r.index,
                statistic: r.statistic,
                fisher_info: r.fisher_info,
                p_value: r.p_value,
                screened_in: r.screened_in,
                selected: report.selected.binary_search(&r.index).is_ok(),
                lambda_dx: r.lambda_dx,
                degenerate: r.degenerate.clone(),
            })
            .collect();
        ResultDocument {
            schema_version: SCHEMA_VERSION.into(),
            method,
            config,
            n,
            p: results.len(),
            lambda,
            records,
            selection: SelectionSummary {
                procedure: report.procedure.name().into(),
                alpha: report.alpha,
                k_hat: report.k_hat,
                selected: report.selected.clone(),
            },
            truth: score.map(|s| TruthScore {
                fdp: s.fdp,
                power: s.power,
            }),
        }
    }

    /// One row per variable.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "index",
            "statistic",
            "fisher_info",
            "p_value",
            "screened_in",
            "selected",
            "lambda_dx",
            "degenerate",
        ])?;
        for r in &self.records {
            w.write_record([
                r.index.to_string(),
                opt(r.statistic),
                opt(r.fisher_info),
                fmt_f64(r.p_value),
                r.screened_in.to_string(),
                r.selected.to_string(),
                opt(r.lambda_dx),
                r.degenerate.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crt_logit::multiple_testing::Procedure;

    fn doc() -> ResultDocument {
        let results = vec![
            VariableResult {
                index: 0,
                screened_in: true,
                statistic: Some(2.5),
                fisher_info: Some(0.1 + 0.2),
                p_value: 0.0124,
                lambda_dx: Some(1.0 / 3.0),
                degenerate: None,
            },
            VariableResult::screened_out(1),
        ];
        let report = SelectionReport {
            selected: vec![0],
            alpha: 0.1,
            procedure: Procedure::BenjaminiHochberg,
            k_hat: 1,
        };
        ResultDocument::new("crt-logit".into(), BTreeMap::new(), 10, 0.05, &results, &report, None)
    }

    #[test]
    fn json_round_trips() {
        let d = doc();
        let text = serde_json::to_string_pretty(&d).unwrap();
        let back: ResultDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn csv_has_one_row_per_variable() {
        let mut buf = Vec::new();
        doc().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text
            .lines()
            .nth(2)
            .unwrap()
            .starts_with("1,,,1.0000000000000000e0,false,false"));
    }
}
