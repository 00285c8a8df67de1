//! Classifier chains: one base classifier per output, each reading the
//! original features followed by the outputs earlier in the chain order.

use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learner::{fit_logistic, LogisticModel, Predictor, TrainConfig};

/// A permutation of output indices `0..m`. Position `j` of the chain
/// predicts output `order[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ChainOrder(Vec<usize>);

impl ChainOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &o in &order {
            if o >= order.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::InvalidOrder(format!(
                    "{order:?} is not a permutation of 0..{}",
                    order.len()
                )));
            }
        }
        Ok(ChainOrder(order))
    }

    pub fn identity(m: usize) -> Self {
        ChainOrder((0..m).collect())
    }

    /// Resolves output names against `names`.
    pub fn from_names<S: AsRef<str>>(order: &[S], names: &[String]) -> Result<Self> {
        if order.len() != names.len() {
            return Err(Error::InvalidOrder(format!(
                "order lists {} outputs, dataset has {}",
                order.len(),
                names.len()
            )));
        }
        let idx = order
            .iter()
            .map(|o| {
                names
                    .iter()
                    .position(|n| n == o.as_ref())
                    .ok_or_else(|| Error::InvalidOrder(format!("unknown output '{}'", o.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        ChainOrder::new(idx)
    }

    /// Every permutation of `0..m`, in lexicographic order.
    pub fn all(m: usize) -> Vec<ChainOrder> {
        (0..m).permutations(m).map(ChainOrder).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Chain position of output `output`.
    pub fn position_of(&self, output: usize) -> usize {
        self.0.iter().position(|&o| o == output).expect("output in order")
    }

    pub fn names<'a>(&self, names: &'a [String]) -> Vec<&'a str> {
        self.0.iter().map(|&o| names[o].as_str()).collect()
    }
}

impl TryFrom<Vec<usize>> for ChainOrder {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        ChainOrder::new(v)
    }
}

impl From<ChainOrder> for Vec<usize> {
    fn from(o: ChainOrder) -> Self {
        o.0
    }
}

impl fmt::Display for ChainOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.iter().join(","))
    }
}

/// What gets appended for preceding outputs at prediction time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    /// Predicted hard labels (plug-in inference).
    #[default]
    HardLabels,
    /// Predicted probabilities. Experimental.
    Probabilities,
}

/// `[instance ++ prior_predictions]`. Every place that builds a chain link's
/// input goes through here.
pub fn augment_features(instance: &[f64], prior_predictions: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(instance.len() + prior_predictions.len());
    out.extend_from_slice(instance);
    out.extend_from_slice(prior_predictions);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierChain<P = LogisticModel> {
    order: ChainOrder,
    links: Vec<P>,
    feature_names: Vec<String>,
    output_names: Vec<String>,
    augmentation: Augmentation,
}

/// Fits one logistic link per chain position. Link `j` trains on the
/// original features plus the TRUE labels of the outputs at positions `< j`.
pub fn fit_chain(train: &Dataset, order: &ChainOrder, cfg: &TrainConfig) -> Result<ClassifierChain> {
    fit_chain_with(train, order, |x, y| fit_logistic(x, y, cfg))
}

pub fn fit_chain_with<P, F>(train: &Dataset, order: &ChainOrder, mut fit: F) -> Result<ClassifierChain<P>>
where
    P: Predictor,
    F: FnMut(&[Vec<f64>], &[u8]) -> Result<P>,
{
    if train.rows() == 0 {
        return Err(Error::Empty("chain training data"));
    }
    if order.len() != train.n_outputs() {
        return Err(Error::InvalidOrder(format!(
            "order has {} entries, dataset has {} outputs",
            order.len(),
            train.n_outputs()
        )));
    }
    let mut inputs: Vec<Vec<f64>> = train.features().to_vec();
    let mut links = Vec::with_capacity(order.len());
    for &output in order.as_slice() {
        let labels = train.output_column(output);
        links.push(fit(&inputs, &labels)?);
        for (row, &y) in inputs.iter_mut().zip(&labels) {
            *row = augment_features(row, &[f64::from(y)]);
        }
    }
    Ok(ClassifierChain {
        order: order.clone(),
        links,
        feature_names: train.feature_names().to_vec(),
        output_names: train.output_names().to_vec(),
        augmentation: Augmentation::HardLabels,
    })
}

impl<P: Predictor> ClassifierChain<P> {
    pub fn from_parts(
        order: ChainOrder,
        links: Vec<P>,
        feature_names: Vec<String>,
        output_names: Vec<String>,
    ) -> Result<Self> {
        let n = feature_names.len();
        if links.len() != order.len() || output_names.len() != order.len() {
            return Err(Error::InvalidOrder(format!(
                "{} links / {} outputs for an order of length {}",
                links.len(),
                output_names.len(),
                order.len()
            )));
        }
        for (j, link) in links.iter().enumerate() {
            if link.input_width() != n + j {
                return Err(Error::DimensionMismatch {
                    context: "chain link width",
                    expected: n + j,
                    found: link.input_width(),
                });
            }
        }
        Ok(ClassifierChain {
            order,
            links,
            feature_names,
            output_names,
            augmentation: Augmentation::HardLabels,
        })
    }

    pub fn with_augmentation(mut self, augmentation: Augmentation) -> Self {
        self.augmentation = augmentation;
        self
    }

    pub fn order(&self) -> &ChainOrder {
        &self.order
    }

    pub fn links(&self) -> &[P] {
        &self.links
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.links.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn augmentation(&self) -> Augmentation {
        self.augmentation
    }

    /// Values fed forward for every chain position, in chain order: hard
    /// labels by default, probabilities in the experimental mode.
    pub fn forward(&self, instance: &[f64]) -> Result<Vec<f64>> {
        if instance.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                context: "chain instance width",
                expected: self.n_features(),
                found: instance.len(),
            });
        }
        let mut input = instance.to_vec();
        let mut fed = Vec::with_capacity(self.links.len());
        for link in &self.links {
            let v = match self.augmentation {
                Augmentation::HardLabels => f64::from(link.predict_label(&input)),
                Augmentation::Probabilities => link.predict_proba(&input),
            };
            fed.push(v);
            input.push(v);
        }
        Ok(fed)
    }

    /// Input of link `position` for `instance` under plug-in inference.
    pub fn link_input(&self, instance: &[f64], position: usize) -> Result<Vec<f64>> {
        let fed = self.forward(instance)?;
        Ok(augment_features(instance, &fed[..position]))
    }

    /// Greedy forward pass; predictions returned in original output order.
    pub fn predict_chain(&self, instance: &[f64]) -> Result<Vec<u8>> {
        if instance.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                context: "chain instance width",
                expected: self.n_features(),
                found: instance.len(),
            });
        }
        let mut input = instance.to_vec();
        let mut out = vec![0u8; self.links.len()];
        for (link, &output) in self.links.iter().zip(self.order.as_slice()) {
            let label = link.predict_label(&input);
            out[output] = label;
            input.push(match self.augmentation {
                Augmentation::HardLabels => f64::from(label),
                Augmentation::Probabilities => link.predict_proba(&input),
            });
        }
        Ok(out)
    }

    pub fn predict_all(&self, instances: &[Vec<f64>]) -> Result<Vec<Vec<u8>>> {
        instances.iter().map(|x| self.predict_chain(x)).collect()
    }
}

impl ClassifierChain<LogisticModel> {
    /// Order, names and every link's model record, as plain text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("chain\n");
        s.push_str(&format!("features {}\n", self.feature_names.join(" ")));
        s.push_str(&format!("outputs {}\n", self.output_names.join(" ")));
        s.push_str(&format!("order {}\n", self.order.as_slice().iter().join(" ")));
        for (j, link) in self.links.iter().enumerate() {
            s.push_str(&format!("link {j}\n"));
            s.push_str(&link.to_text());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("chain") {
            return Err(bad("missing 'chain' header"));
        }
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing '{key}'")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected '{key}'")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let feature_names = field("features")?;
        let output_names = field("outputs")?;
        let order = field("order")?
            .iter()
            .map(|v| v.parse::<usize>().map_err(|_| bad("order entries must be integers")))
            .collect::<Result<Vec<_>>>()?;
        let order = ChainOrder::new(order)?;
        let rest: Vec<&str> = lines.collect();
        let mut links = Vec::new();
        let mut i = 0;
        while i < rest.len() {
            if rest[i].trim().is_empty() {
                i += 1;
                continue;
            }
            if rest[i].trim() != format!("link {}", links.len()) {
                return Err(bad(&format!("expected 'link {}'", links.len())));
            }
            let end = rest[i + 1..]
                .iter()
                .position(|l| l.starts_with("link "))
                .map_or(rest.len(), |p| i + 1 + p);
            links.push(LogisticModel::from_text(&rest[i + 1..end].join("\n"))?);
            i = end;
        }
        ClassifierChain::from_parts(order, links, feature_names, output_names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_xor_dataset;

    fn xor_chain(order: &[&str]) -> (Dataset, ClassifierChain) {
        let d = generate_xor_dataset(400, 1).unwrap();
        let order = ChainOrder::from_names(order, d.output_names()).unwrap();
        let chain = fit_chain(&d, &order, &TrainConfig::default()).unwrap();
        (d, chain)
    }

    #[test]
    fn order_validation() {
        assert!(ChainOrder::new(vec![2, 0, 1]).is_ok());
        assert!(ChainOrder::new(vec![0, 0, 1]).is_err());
        assert!(ChainOrder::new(vec![0, 3, 1]).is_err());
        assert_eq!(ChainOrder::all(3).len(), 6);
        assert_eq!(ChainOrder::all(3)[0], ChainOrder::identity(3));
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        assert!(ChainOrder::from_names(&["a", "c"], &names).is_err());
        assert!(ChainOrder::from_names(&["a"], &names).is_err());
    }

    #[test]
    fn augment_examples() {
        assert_eq!(augment_features(&[0.2, 0.8], &[1.0]), vec![0.2, 0.8, 1.0]);
        assert_eq!(augment_features(&[3.0], &[]), vec![3.0]);
        assert_eq!(augment_features(&[1.0, 1.0], &[1.0, 0.0]), vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn link_widths_grow_along_chain() {
        let (_, chain) = xor_chain(&["and", "or", "xor"]);
        let widths: Vec<usize> = chain.links().iter().map(|l| l.input_width()).collect();
        assert_eq!(widths, vec![2, 3, 4]);
    }

    #[test]
    fn xor_first_link_uses_features_only() {
        let (d, chain) = xor_chain(&["xor", "and", "or"]);
        let direct = fit_logistic(d.features(), &d.output_column(2), &TrainConfig::default()).unwrap();
        assert_eq!(chain.links()[0], direct);
    }

    #[test]
    fn single_output_chain_matches_base_classifier() {
        let xor = generate_xor_dataset(200, 3).unwrap();
        let d = Dataset::new(
            xor.features().to_vec(),
            xor.outputs().iter().map(|r| vec![r[1]]).collect(),
            vec!["x1".into(), "x2".into()],
            vec!["or".into()],
            xor.column_kinds().to_vec(),
        )
        .unwrap();
        let cfg = TrainConfig::default();
        let chain = fit_chain(&d, &ChainOrder::identity(1), &cfg).unwrap();
        let base = fit_logistic(d.features(), &d.output_column(0), &cfg).unwrap();
        assert_eq!(chain.links()[0], base);
        for x in d.features() {
            assert_eq!(chain.predict_chain(x).unwrap(), vec![base.predict_label(x)]);
        }
    }

    #[test]
    fn reproduces_truth_table() {
        let (_, chain) = xor_chain(&["and", "or", "xor"]);
        for (a, b) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let x = [f64::from(a), f64::from(b)];
            assert_eq!(chain.predict_chain(&x).unwrap(), vec![a & b, a | b, a ^ b], "{x:?}");
        }
        assert_eq!(chain.predict_chain(&[1.0, 0.0]).unwrap(), vec![0, 1, 1]);
    }

    #[test]
    fn predictions_come_back_in_output_order() {
        let (_, chain) = xor_chain(&["or", "xor", "and"]);
        let fed = chain.forward(&[1.0, 1.0]).unwrap();
        let pred = chain.predict_chain(&[1.0, 1.0]).unwrap();
        for (pos, &out) in chain.order().as_slice().iter().enumerate() {
            assert_eq!(fed[pos], f64::from(pred[out]));
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        let (_, chain) = xor_chain(&["and", "or", "xor"]);
        assert!(matches!(
            chain.predict_chain(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn text_roundtrip() {
        let (_, chain) = xor_chain(&["or", "and", "xor"]);
        let back = ClassifierChain::from_text(&chain.to_text()).unwrap();
        assert_eq!(back, chain);
    }
}
