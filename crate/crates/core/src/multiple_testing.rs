//! Step-up FDR procedures and scoring of a selection against a known support.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Procedure {
    #[serde(rename = "BH")]
    BenjaminiHochberg,
    #[serde(rename = "BY")]
    BenjaminiYekutieli,
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::BenjaminiHochberg => "BH",
            Procedure::BenjaminiYekutieli => "BY",
        }
    }
}

impl std::str::FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bh" => Ok(Procedure::BenjaminiHochberg),
            "by" => Ok(Procedure::BenjaminiYekutieli),
            other => Err(Error::invalid(format!("unknown FDR procedure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Selected indices, ascending.
    pub selected: Vec<usize>,
    pub alpha: f64,
    pub procedure: Procedure,
    pub k_hat: usize,
}

/// True support of the generating coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    support: BTreeSet<usize>,
}

impl GroundTruth {
    pub fn new(support: impl IntoIterator<Item = usize>, p: usize) -> Result<Self> {
        let support: BTreeSet<usize> = support.into_iter().collect();
        if let Some(&bad) = support.iter().find(|&&j| j >= p) {
            return Err(Error::IndexOutOfRange { index: bad, len: p });
        }
        Ok(GroundTruth { support })
    }

    pub fn support(&self) -> &BTreeSet<usize> {
        &self.support
    }

    pub fn contains(&self, j: usize) -> bool {
        self.support.contains(&j)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

fn check_inputs(pvalues: &[f64], alpha: f64) -> Result<()> {
    if let Some((j, v)) = pvalues.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::invalid(format!("p-value {j} is {v}, outside [0, 1]")));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(())
}

/// `k_hat = max{k : p_(k) <= k * alpha / (p * c)}` and selection of every
/// index whose p-value is at most `p_(k_hat)`.
fn step_up(pvalues: &[f64], alpha: f64, correction: f64, procedure: Procedure) -> Result<SelectionReport> {
    check_inputs(pvalues, alpha)?;
    let m = pvalues.len();
    let empty = SelectionReport {
        selected: Vec::new(),
        alpha,
        procedure,
        k_hat: 0,
    };
    // a zero level rejects nothing, even p-values that underflowed to 0
    if m == 0 || alpha == 0.0 {
        return Ok(empty);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut k_hat = 0;
    for (rank, &j) in order.iter().enumerate() {
        let k = rank + 1;
        if pvalues[j] <= k as f64 * alpha / (m as f64 * correction) {
            k_hat = k;
        }
    }
    if k_hat == 0 {
        return Ok(empty);
    }
    let cutoff = pvalues[order[k_hat - 1]];
    let selected: Vec<usize> = (0..m).filter(|&j| pvalues[j] <= cutoff).collect();
    Ok(SelectionReport {
        k_hat: selected.len(),
        selected,
        alpha,
        procedure,
    })
}

/// Benjamini-Hochberg step-up selection at level `alpha`.
pub fn bh_select(pvalues: &[f64], alpha: f64) -> Result<SelectionReport> {
    step_up(pvalues, alpha, 1.0, Procedure::BenjaminiHochberg)
}

/// Benjamini-Yekutieli selection: BH with the level divided by the harmonic
/// number `sum_{i<=p} 1/i`, valid under arbitrary dependence.
pub fn by_select(pvalues: &[f64], alpha: f64) -> Result<SelectionReport> {
    let harmonic: f64 = (1..=pvalues.len()).map(|i| 1.0 / i as f64).sum();
    step_up(pvalues, alpha, harmonic.max(1.0), Procedure::BenjaminiYekutieli)
}

pub fn select(pvalues: &[f64], alpha: f64, procedure: Procedure) -> Result<SelectionReport> {
    match procedure {
        Procedure::BenjaminiHochberg => bh_select(pvalues, alpha),
        Procedure::BenjaminiYekutieli => by_select(pvalues, alpha),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub fdp: f64,
    /// Absent when the true support is empty.
    pub power: Option<f64>,
}

/// False discovery proportion `|S_hat \ S| / max(|S_hat|, 1)` and power
/// `|S_hat & S| / |S|`.
pub fn score_selection(report: &SelectionReport, truth: &GroundTruth) -> SelectionScore {
    let true_hits = report.selected.iter().filter(|&&j| truth.contains(j)).count();
    let false_hits = report.selected.len() - true_hits;
    let fdp = false_hits as f64 / report.selected.len().max(1) as f64;
    let power = if truth.is_empty() {
        None
    } else {
        Some(true_hits as f64 / truth.len() as f64)
    };
    SelectionScore { fdp, power }
}
