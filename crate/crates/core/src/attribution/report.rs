use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AttributionMode, WeightMatrix};
use crate::data::Preprocessing;
use crate::error::{Error, Result};
use crate::learner::TrainConfig;
use crate::shapley::{BackgroundSource, ShapleyConfig};

pub const REPORT_SCHEMA: &str = "shapchain-report/1";

/// One instance's attributions, indexed `[output][feature]` by original
/// output index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAttribution {
    pub direct: Vec<Vec<f64>>,
    pub indirect: Vec<Vec<f64>>,
    pub total: Vec<Vec<f64>>,
    /// `outputs[o][p]`: direct contribution of output `p` to link `o`, when
    /// `p` precedes `o` in the chain.
    pub outputs: Vec<Vec<Option<f64>>>,
}

impl LocalAttribution {
    pub fn zeros(m: usize, n: usize) -> Self {
        LocalAttribution {
            direct: vec![vec![0.0; n]; m],
            indirect: vec![vec![0.0; n]; m],
            total: vec![vec![0.0; n]; m],
            outputs: vec![vec![None; m]; m],
        }
    }
}

/// What the global masses are divided by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalScope {
    /// One normalizer for the whole report, across all outputs.
    #[default]
    Report,
    /// Each output's row sums to one on its own.
    PerOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTable {
    pub scope: GlobalScope,
    /// Normalized mean absolute direct attribution, `[output][feature]`.
    pub direct: Vec<Vec<f64>>,
    pub indirect: Vec<Vec<f64>>,
    /// Mean absolute values before normalization.
    pub raw_direct: Vec<Vec<f64>>,
    pub raw_indirect: Vec<Vec<f64>>,
}

impl GlobalTable {
    /// Stacked bar height: normalized direct plus indirect.
    pub fn total(&self, output: usize, feature: usize) -> f64 {
        self.direct[output][feature] + self.indirect[output][feature]
    }

    /// Index of the feature with the largest total for `output` (first wins
    /// on ties).
    pub fn argmax_feature(&self, output: usize) -> usize {
        let n = self.direct[output].len();
        (0..n).fold(0, |best, i| {
            if self.total(output, i) > self.total(output, best) {
                i
            } else {
                best
            }
        })
    }
}

/// Mean of absolute local values per (output, feature, kind), normalized so
/// the direct and indirect masses sum to one over `scope`. A scope whose
/// mass is zero stays all zero.
pub fn aggregate_global(local: &[LocalAttribution], scope: GlobalScope) -> Result<GlobalTable> {
    let first = local.first().ok_or(Error::Empty("local attributions"))?;
    let m = first.direct.len();
    let n = first.direct.first().map_or(0, Vec::len);
    let q = local.len() as f64;
    let mut raw_direct = vec![vec![0.0; n]; m];
    let mut raw_indirect = vec![vec![0.0; n]; m];
    for l in local {
        for o in 0..m {
            for i in 0..n {
                raw_direct[o][i] += l.direct[o][i].abs() / q;
                raw_indirect[o][i] += l.indirect[o][i].abs() / q;
            }
        }
    }
    let row_mass = |o: usize| -> f64 {
        raw_direct[o].iter().sum::<f64>() + raw_indirect[o].iter().sum::<f64>()
    };
    let report_mass: f64 = (0..m).map(row_mass).sum();
    let scale = |o: usize| -> f64 {
        let mass = match scope {
            GlobalScope::Report => report_mass,
            GlobalScope::PerOutput => row_mass(o),
        };
        if mass > 0.0 {
            1.0 / mass
        } else {
            0.0
        }
    };
    let norm = |raw: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        raw.iter()
            .enumerate()
            .map(|(o, row)| {
                let s = scale(o);
                row.iter().map(|v| v * s).collect()
            })
            .collect()
    };
    Ok(GlobalTable {
        scope,
        direct: norm(&raw_direct),
        indirect: norm(&raw_indirect),
        raw_direct,
        raw_indirect,
    })
}

/// Worst-case deviations of the structural identities, over every instance
/// and position seen.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    /// Max `|sum_i Z_k(x_i) - 1|` over positions with a nonzero normalizer.
    pub z_sum_max_dev: f64,
    /// Max deviation between total indirect mass and redistributed output
    /// mass.
    pub conservation_max_dev: f64,
    /// Max `|indirect|` at the first chain position.
    pub first_position_max_abs: f64,
    /// Number of (instance, position) pairs checked.
    pub checked: usize,
}

impl InvariantSummary {
    pub const TOLERANCE: f64 = 1e-9;

    pub(crate) fn observe(
        &mut self,
        direct: &[Vec<f64>],
        w: &WeightMatrix,
        indirect: &[Vec<f64>],
        signed: bool,
    ) {
        let n = w.n_features;
        for k in 0..w.positions() {
            self.checked += 1;
            if w.nonzero[k] {
                let s: f64 = w.z[k].iter().sum();
                self.z_sum_max_dev = self.z_sum_max_dev.max((s - 1.0).abs());
            }
            let lhs: f64 = indirect[k].iter().sum();
            let rhs: f64 = if signed {
                (0..k)
                    .map(|p| direct[k][n + p] * w.z[p].iter().sum::<f64>())
                    .sum()
            } else {
                direct[k][n..].iter().map(|v| v.abs()).sum()
            };
            self.conservation_max_dev = self.conservation_max_dev.max((lhs - rhs).abs());
        }
        if let Some(first) = indirect.first() {
            let worst = first.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            self.first_position_max_abs = self.first_position_max_abs.max(worst);
        }
    }

    pub fn merge(&mut self, other: &InvariantSummary) {
        self.z_sum_max_dev = self.z_sum_max_dev.max(other.z_sum_max_dev);
        self.conservation_max_dev = self.conservation_max_dev.max(other.conservation_max_dev);
        self.first_position_max_abs = self.first_position_max_abs.max(other.first_position_max_abs);
        self.checked += other.checked;
    }

    pub fn passed(&self) -> bool {
        self.z_sum_max_dev <= Self::TOLERANCE
            && self.conservation_max_dev <= Self::TOLERANCE
            && self.first_position_max_abs == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// One chain order.
    Chain,
    /// Average over several chain orders.
    Marginalized,
    /// Independent per-output classifiers, direct attributions only.
    Baseline,
}

/// A complete attribution run as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub schema: String,
    pub kind: ReportKind,
    pub label: String,
    pub mode: AttributionMode,
    pub value_function: String,
    pub aggregation: String,
    pub feature_names: Vec<String>,
    pub output_names: Vec<String>,
    /// Chain orders as output names; empty for the baseline.
    pub orders: Vec<Vec<String>>,
    pub train: TrainConfig,
    pub shapley: ShapleyConfig,
    pub background: BackgroundSource,
    pub preprocessing: Preprocessing,
    pub metrics: BTreeMap<String, f64>,
    pub invariants: Option<InvariantSummary>,
    pub global: GlobalTable,
    /// Row indices of the explained instances within the test split.
    pub instances: Vec<usize>,
    pub local: Vec<LocalAttribution>,
}

impl AttributionReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: AttributionReport =
            serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    /// Shape and schema checks applied on load.
    pub fn validate(&self) -> Result<()> {
        if self.schema != REPORT_SCHEMA {
            return Err(Error::Report(format!(
                "unsupported schema '{}', expected '{REPORT_SCHEMA}'",
                self.schema
            )));
        }
        let m = self.output_names.len();
        let n = self.feature_names.len();
        let table_ok = |t: &Vec<Vec<f64>>| t.len() == m && t.iter().all(|r| r.len() == n);
        let g = &self.global;
        if !(table_ok(&g.direct) && table_ok(&g.indirect) && table_ok(&g.raw_direct) && table_ok(&g.raw_indirect)) {
            return Err(Error::Report(format!(
                "global table is not {m} outputs x {n} features"
            )));
        }
        if self.instances.len() != self.local.len() {
            return Err(Error::Report("instance index list and local rows differ in length".into()));
        }
        for l in &self.local {
            if !(table_ok(&l.direct) && table_ok(&l.indirect) && table_ok(&l.total)) {
                return Err(Error::Report("local attribution has the wrong shape".into()));
            }
        }
        for order in &self.orders {
            if order.len() != m || !order.iter().all(|o| self.output_names.contains(o)) {
                return Err(Error::Report(format!("order {order:?} does not match outputs")));
            }
        }
        let finite = g.direct.iter().chain(&g.indirect).flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Report("global table has non-finite entries".into()));
        }
        Ok(())
    }

    /// Global table as CSV: `output,feature,direct,indirect,total`.
    pub fn global_csv(&self) -> String {
        let mut s = String::from("output,feature,direct,indirect,total\n");
        for (o, out) in self.output_names.iter().enumerate() {
            for (i, feat) in self.feature_names.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{out},{feat},{:?},{:?},{:?}",
                    self.global.direct[o][i],
                    self.global.indirect[o][i],
                    self.global.total(o, i)
                );
            }
        }
        s
    }

    /// Local attributions as CSV, one row per (instance, output, feature).
    pub fn local_csv(&self) -> String {
        let mut s = String::from("instance,output,feature,direct,indirect,total\n");
        for (row, l) in self.instances.iter().zip(&self.local) {
            for (o, out) in self.output_names.iter().enumerate() {
                for (i, feat) in self.feature_names.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{row},{out},{feat},{:?},{:?},{:?}",
                        l.direct[o][i], l.indirect[o][i], l.total[o][i]
                    );
                }
            }
        }
        s
    }
}
