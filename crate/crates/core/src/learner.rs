//! Base-classifier contract and a full-batch logistic regression.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-output probabilistic classifier over fixed-width real inputs.
pub trait Predictor: Send + Sync {
    fn input_width(&self) -> usize;

    /// Probability of the positive class. Must be deterministic.
    fn predict_proba(&self, instance: &[f64]) -> f64;

    /// Label 1 iff the probability is at least 0.5 (ties go to 1).
    fn predict_label(&self, instance: &[f64]) -> u8 {
        u8::from(self.predict_proba(instance) >= 0.5)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn input_width(&self) -> usize {
        (**self).input_width()
    }
    fn predict_proba(&self, instance: &[f64]) -> f64 {
        (**self).predict_proba(instance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::TrainConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::TrainConfig("epochs must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::TrainConfig(format!("l2 must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
}

impl LogisticModel {
    /// All-zero parameters: predicts 0.5 everywhere.
    pub fn zeros(width: usize, config: TrainConfig) -> Self {
        LogisticModel {
            weights: vec![0.0; width],
            bias: 0.0,
            config,
        }
    }

    pub fn logit(&self, instance: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(instance)
            .fold(self.bias, |acc, (w, x)| acc + w * x)
    }

    /// Plain-text record. Floats use the shortest form that parses back to
    /// the identical bit pattern.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let ws: Vec<String> = self.weights.iter().map(|w| format!("{w:?}")).collect();
        let _ = writeln!(s, "model logistic");
        let _ = writeln!(s, "input_width {}", self.weights.len());
        let _ = writeln!(s, "bias {:?}", self.bias);
        let _ = writeln!(s, "weights {}", ws.join(" "));
        let _ = writeln!(s, "learning_rate {:?}", self.config.learning_rate);
        let _ = writeln!(s, "epochs {}", self.config.epochs);
        let _ = writeln!(s, "l2 {:?}", self.config.l2);
        let _ = writeln!(s, "seed {}", self.config.seed);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("missing '{key}' line")))?;
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err(Error::ModelFormat(format!("expected '{key}', found '{k}'")));
            }
            Ok(v.trim().to_string())
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::ModelFormat(format!("bad value for {key}: '{v}'")))
        }
        if next("model")? != "logistic" {
            return Err(Error::ModelFormat("unknown model kind".into()));
        }
        let width: usize = num("input_width", &next("input_width")?)?;
        let bias = num("bias", &next("bias")?)?;
        let weights = next("weights")?
            .split_whitespace()
            .map(|w| num("weights", w))
            .collect::<Result<Vec<f64>>>()?;
        if weights.len() != width {
            return Err(Error::ModelFormat(format!(
                "input_width {width} but {} weights",
                weights.len()
            )));
        }
        let config = TrainConfig {
            learning_rate: num("learning_rate", &next("learning_rate")?)?,
            epochs: num("epochs", &next("epochs")?)?,
            l2: num("l2", &next("l2")?)?,
            seed: num("seed", &next("seed")?)?,
        };
        Ok(LogisticModel {
            weights,
            bias,
            config,
        })
    }
}

impl Predictor for LogisticModel {
    fn input_width(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, instance: &[f64]) -> f64 {
        sigmoid(self.logit(instance))
    }
}

/// Mean log-loss plus `l2 / 2 * ||w||^2` (bias unpenalized).
pub fn regularized_log_loss(
    weights: &[f64],
    bias: f64,
    features: &[Vec<f64>],
    labels: &[u8],
    l2: f64,
) -> f64 {
    let n = features.len() as f64;
    let data: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = weights.iter().zip(x).fold(bias, |a, (w, v)| a + w * v);
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - f64::from(y) * z
        })
        .sum::<f64>()
        / n;
    data + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`regularized_log_loss`]: `(dw, db)`.
pub fn log_loss_gradient(
    weights: &[f64],
    bias: f64,
    features: &[Vec<f64>],
    labels: &[u8],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = features.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = weights.iter().zip(x).fold(bias, |a, (w, v)| a + w * v);
        let err = sigmoid(z) - f64::from(y);
        for (g, v) in gw.iter_mut().zip(x) {
            *g += err * v;
        }
        gb += err;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Full-batch gradient descent from zero on the L2-regularized log-loss.
pub fn fit_logistic(features: &[Vec<f64>], labels: &[u8], cfg: &TrainConfig) -> Result<LogisticModel> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "fit_logistic labels",
            expected: features.len(),
            found: labels.len(),
        });
    }
    let width = features[0].len();
    if let Some(bad) = features.iter().find(|r| r.len() != width) {
        return Err(Error::DimensionMismatch {
            context: "fit_logistic feature rows",
            expected: width,
            found: bad.len(),
        });
    }
    let mut model = LogisticModel::zeros(width, *cfg);
    for _ in 0..cfg.epochs {
        let (gw, gb) = log_loss_gradient(&model.weights, model.bias, features, labels, cfg.l2);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        model.bias -= cfg.learning_rate * gb;
    }
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("logistic regression diverged".into()));
    }
    Ok(model)
}

/// Fraction of cells where `predicted` and `actual` disagree.
pub fn hamming_loss(predicted: &[Vec<u8>], actual: &[Vec<u8>]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            context: "hamming_loss rows",
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    let mut cells = 0usize;
    let mut wrong = 0usize;
    for (p, a) in predicted.iter().zip(actual) {
        if p.len() != a.len() {
            return Err(Error::DimensionMismatch {
                context: "hamming_loss columns",
                expected: a.len(),
                found: p.len(),
            });
        }
        cells += a.len();
        wrong += p.iter().zip(a).filter(|(x, y)| x != y).count();
    }
    if cells == 0 {
        return Err(Error::Empty("hamming_loss input"));
    }
    Ok(wrong as f64 / cells as f64)
}
