//! Direct and indirect feature attributions for classifier chains.
//!
//! Every chain link is explained with Shapley values over its own input:
//! the original features plus the plug-in predictions of preceding outputs.
//! The share of a link's attribution that lands on a preceding output is
//! then pushed down onto the features through the path weights `Z`
//! (see [`weights`]), giving each feature an indirect contribution to every
//! later output.

mod report;
pub mod weights;

use serde::{Deserialize, Serialize};

use crate::chain::{fit_chain, ChainOrder, ClassifierChain};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learner::{Predictor, TrainConfig};
use crate::shapley::{shapley_values, BackgroundSet, ShapleyConfig};

pub use report::{
    aggregate_global, AttributionReport, GlobalScope, GlobalTable, InvariantSummary,
    LocalAttribution, ReportKind, REPORT_SCHEMA,
};
pub use weights::{
    indirect_contributions, indirect_path_count, path_oracle, propagation_weights, z_weights,
    WeightMatrix,
};

/// How a link's attribution to a preceding output enters the indirect sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMode {
    #[default]
    Absolute,
    Signed,
}

/// Direct Shapley values of one instance for every chain position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDirect {
    /// `positions[j]`: `n` feature values then `j` preceding-output values.
    pub positions: Vec<Vec<f64>>,
    pub base_values: Vec<f64>,
    pub full_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectContributions {
    pub order: ChainOrder,
    pub n_features: usize,
    pub instances: Vec<InstanceDirect>,
}

/// Explains every link of `chain` for each instance. Link `j` sees the
/// instance augmented with its plug-in predictions, against a background
/// whose rows are augmented the same way from their own predictions.
pub fn direct_contributions<P: Predictor>(
    chain: &ClassifierChain<P>,
    instances: &[Vec<f64>],
    bg_source: &Dataset,
    cfg: &ShapleyConfig,
) -> Result<DirectContributions> {
    let bg = BackgroundSet::sample(bg_source, cfg.background_size, cfg.seed)?;
    direct_contributions_with(chain, instances, &bg, cfg)
}

pub fn direct_contributions_with<P: Predictor>(
    chain: &ClassifierChain<P>,
    instances: &[Vec<f64>],
    bg: &BackgroundSet,
    cfg: &ShapleyConfig,
) -> Result<DirectContributions> {
    cfg.validate()?;
    let n = chain.n_features();
    if bg.width() != n {
        return Err(Error::DimensionMismatch {
            context: "background width",
            expected: n,
            found: bg.width(),
        });
    }
    let bg_fed = bg
        .rows()
        .iter()
        .map(|r| chain.forward(r))
        .collect::<Result<Vec<_>>>()?;
    let link_backgrounds = (0..chain.n_outputs())
        .map(|j| {
            let rows = bg
                .rows()
                .iter()
                .zip(&bg_fed)
                .map(|(r, fed)| crate::chain::augment_features(r, &fed[..j]))
                .collect();
            bg.with_rows(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(instances.len());
    for x in instances {
        let fed = chain.forward(x)?;
        let mut positions = Vec::with_capacity(chain.n_outputs());
        let mut base_values = Vec::with_capacity(chain.n_outputs());
        let mut full_values = Vec::with_capacity(chain.n_outputs());
        for (j, link) in chain.links().iter().enumerate() {
            let input = crate::chain::augment_features(x, &fed[..j]);
            let sv = shapley_values(link, &input, &link_backgrounds[j], cfg)?;
            if sv.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite Shapley value at chain position {j}"
                )));
            }
            positions.push(sv.values);
            base_values.push(sv.base_value);
            full_values.push(sv.full_value);
        }
        out.push(InstanceDirect {
            positions,
            base_values,
            full_values,
        });
    }
    Ok(DirectContributions {
        order: chain.order().clone(),
        n_features: n,
        instances: out,
    })
}

/// Per-instance propagation for one chain, indexed by ORIGINAL output.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainAttribution {
    pub order: ChainOrder,
    pub local: Vec<LocalAttribution>,
    pub weights: Vec<WeightMatrix>,
    pub invariants: InvariantSummary,
}

/// Runs propagation weights, path weights and indirect contributions for
/// each instance, then re-indexes from chain positions to output indices.
pub fn propagate(direct: &DirectContributions, mode: AttributionMode) -> ChainAttribution {
    let n = direct.n_features;
    let order = direct.order.as_slice();
    let m = order.len();
    let signed = mode == AttributionMode::Signed;
    let mut local = Vec::with_capacity(direct.instances.len());
    let mut all_weights = Vec::with_capacity(direct.instances.len());
    let mut inv = InvariantSummary::default();
    for inst in &direct.instances {
        let w = z_weights(propagation_weights(&inst.positions, n));
        let indirect = indirect_contributions(&inst.positions, &w, signed);
        inv.observe(&inst.positions, &w, &indirect, signed);

        let mut l = LocalAttribution::zeros(m, n);
        for (j, &o) in order.iter().enumerate() {
            l.direct[o] = inst.positions[j][..n].to_vec();
            l.indirect[o] = indirect[j].clone();
            l.total[o] = l.direct[o]
                .iter()
                .zip(&l.indirect[o])
                .map(|(d, i)| d + i)
                .collect();
            for (k, &prior) in order[..j].iter().enumerate() {
                l.outputs[o][prior] = Some(inst.positions[j][n + k]);
            }
        }
        local.push(l);
        all_weights.push(w);
    }
    ChainAttribution {
        order: direct.order.clone(),
        local,
        weights: all_weights,
        invariants: inv,
    }
}

/// Exact Shapley values of one independent classifier per output, each
/// reading the original features only. Indirect parts are zero.
pub fn independent_attribution<P: Predictor>(
    models: &[P],
    instances: &[Vec<f64>],
    bg: &BackgroundSet,
    cfg: &ShapleyConfig,
) -> Result<Vec<LocalAttribution>> {
    let m = models.len();
    let n = bg.width();
    instances
        .iter()
        .map(|x| {
            let mut l = LocalAttribution::zeros(m, n);
            for (o, model) in models.iter().enumerate() {
                let sv = shapley_values(model, x, bg, cfg)?;
                l.total[o] = sv.values.clone();
                l.direct[o] = sv.values;
            }
            Ok(l)
        })
        .collect()
}

/// Everything needed to run the chain pipeline for one or more orders.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub shapley: ShapleyConfig,
    pub mode: AttributionMode,
    pub scope: GlobalScope,
}

/// Result of [`marginalize_orders`].
#[derive(Debug, Clone)]
pub struct Marginalized {
    pub chains: Vec<ClassifierChain>,
    pub per_order: Vec<ChainAttribution>,
    /// Local attributions averaged uniformly over the orders.
    pub averaged: Vec<LocalAttribution>,
}

/// Fits one chain per order on `train`, attributes `instances` under each,
/// and averages every (instance, output, feature) entry over the orders.
pub fn marginalize_orders(
    train: &Dataset,
    instances: &[Vec<f64>],
    orders: &[ChainOrder],
    cfg: &PipelineConfig,
) -> Result<Marginalized> {
    if orders.is_empty() {
        return Err(Error::InvalidOrder("at least one chain order is required".into()));
    }
    let bg = BackgroundSet::sample(train, cfg.shapley.background_size, cfg.shapley.seed)?;
    let mut chains = Vec::with_capacity(orders.len());
    let mut per_order = Vec::with_capacity(orders.len());
    for order in orders {
        let chain = fit_chain(train, order, &cfg.train)?;
        let direct = direct_contributions_with(&chain, instances, &bg, &cfg.shapley)?;
        per_order.push(propagate(&direct, cfg.mode));
        chains.push(chain);
    }
    let averaged = average_orders(&per_order);
    Ok(Marginalized {
        chains,
        per_order,
        averaged,
    })
}

/// Uniform `1/|C|` average of local attributions across orders. Output-on-
/// output entries are dropped since their meaning depends on the order.
pub fn average_orders(per_order: &[ChainAttribution]) -> Vec<LocalAttribution> {
    let c = per_order.len() as f64;
    let first = &per_order[0].local;
    (0..first.len())
        .map(|q| {
            let mut acc = LocalAttribution::zeros(first[q].direct.len(), first[q].direct[0].len());
            for run in per_order {
                let l = &run.local[q];
                for o in 0..acc.direct.len() {
                    for i in 0..acc.direct[o].len() {
                        acc.direct[o][i] += l.direct[o][i] / c;
                        acc.indirect[o][i] += l.indirect[o][i] / c;
                        acc.total[o][i] += l.total[o][i] / c;
                    }
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::fit_chain;
    use crate::data::{generate_xor_dataset, train_test_split, SplitSpec};

    fn xor_setup() -> (Dataset, Dataset) {
        let d = generate_xor_dataset(400, 2).unwrap();
        train_test_split(&d, SplitSpec { train_fraction: 0.8, seed: 1 }).unwrap()
    }

    fn small_cfg() -> ShapleyConfig {
        ShapleyConfig { background_size: 40, ..Default::default() }
    }

    #[test]
    fn direct_vector_lengths() {
        let (train, test) = xor_setup();
        let order = ChainOrder::from_names(&["and", "or", "xor"], train.output_names()).unwrap();
        let chain = fit_chain(&train, &order, &TrainConfig::default()).unwrap();
        let direct = direct_contributions(&chain, &test.features()[..5], &train, &small_cfg()).unwrap();
        for inst in &direct.instances {
            let lens: Vec<usize> = inst.positions.iter().map(Vec::len).collect();
            assert_eq!(lens, vec![2, 3, 4]);
        }
    }

    #[test]
    fn first_position_matches_plain_shapley() {
        let (train, test) = xor_setup();
        let order = ChainOrder::identity(3);
        let chain = fit_chain(&train, &order, &TrainConfig::default()).unwrap();
        let cfg = small_cfg();
        let bg = BackgroundSet::sample(&train, cfg.background_size, cfg.seed).unwrap();
        let x = &test.features()[0];
        let direct = direct_contributions_with(&chain, std::slice::from_ref(x), &bg, &cfg).unwrap();
        let plain = crate::shapley::exact_shapley(&chain.links()[0], x, &bg).unwrap();
        assert_eq!(direct.instances[0].positions[0], plain.values);
    }

    #[test]
    fn ignored_output_column_gets_zero() {
        use crate::learner::LogisticModel;
        let (train, _) = xor_setup();
        let cfg = TrainConfig::default();
        let mut chain = fit_chain(&train, &ChainOrder::identity(3), &cfg).unwrap();
        // make link 1 ignore the appended `and` column
        let mut links: Vec<LogisticModel> = chain.links().to_vec();
        links[1].weights[2] = 0.0;
        chain = ClassifierChain::from_parts(
            chain.order().clone(),
            links,
            chain.feature_names().to_vec(),
            chain.output_names().to_vec(),
        )
        .unwrap();
        let direct = direct_contributions(&chain, &[vec![1.0, 0.0], vec![1.0, 1.0]], &train, &small_cfg()).unwrap();
        for inst in &direct.instances {
            assert_eq!(inst.positions[1][2], 0.0);
        }
    }

    #[test]
    fn propagate_indexes_by_output() {
        let (train, test) = xor_setup();
        let order = ChainOrder::from_names(&["xor", "or", "and"], train.output_names()).unwrap();
        let chain = fit_chain(&train, &order, &TrainConfig::default()).unwrap();
        let direct = direct_contributions(&chain, &test.features()[..8], &train, &small_cfg()).unwrap();
        let att = propagate(&direct, AttributionMode::Absolute);
        let xor = 2;
        for l in &att.local {
            assert!(l.indirect[xor].iter().all(|&v| v == 0.0));
            assert!(l.outputs[xor].iter().all(Option::is_none));
            // `and` is last: it sees both xor and or
            assert!(l.outputs[0][2].is_some() && l.outputs[0][1].is_some());
        }
        assert!(att.invariants.passed(), "{:?}", att.invariants);
    }

    #[test]
    fn single_order_marginalization_is_identity() {
        let (train, test) = xor_setup();
        let cfg = PipelineConfig {
            train: TrainConfig::default(),
            shapley: small_cfg(),
            mode: AttributionMode::Absolute,
            scope: GlobalScope::Report,
        };
        let orders = [ChainOrder::identity(3)];
        let res = marginalize_orders(&train, &test.features()[..6], &orders, &cfg).unwrap();
        for (avg, one) in res.averaged.iter().zip(&res.per_order[0].local) {
            assert_eq!(avg.direct, one.direct);
            assert_eq!(avg.indirect, one.indirect);
            assert_eq!(avg.total, one.total);
        }
        assert!(marginalize_orders(&train, &test.features()[..1], &[], &cfg).is_err());
    }
}
