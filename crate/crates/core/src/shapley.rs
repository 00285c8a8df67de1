//! Shapley values of a [`Predictor`]'s positive-class probability.
//!
//! The coalition payoff is interventional: columns outside the coalition
//! take their values from each background row in turn, and the payoff is
//! the mean predicted probability over the background.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learner::Predictor;

pub const DEFAULT_EXACT_THRESHOLD: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSource {
    pub origin: String,
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
    source: BackgroundSource,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>, source: BackgroundSource) -> Result<Self> {
        let width = rows.first().ok_or(Error::Empty("background set"))?.len();
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                context: "background row width",
                expected: width,
                found: r.len(),
            });
        }
        Ok(BackgroundSet { rows, source })
    }

    /// Seeded uniform subsample of a dataset's feature rows.
    pub fn sample(d: &Dataset, size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Empty("background set"));
        }
        let sub = d.subsample(size, seed);
        BackgroundSet::new(
            sub.features().to_vec(),
            BackgroundSource {
                origin: "train-split subsample".into(),
                size: sub.rows(),
                seed,
            },
        )
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn source(&self) -> &BackgroundSource {
        &self.source
    }

    /// Same source, different rows (used for chain-augmented backgrounds).
    pub fn with_rows(&self, rows: Vec<Vec<f64>>) -> Result<Self> {
        BackgroundSet::new(rows, self.source.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapleyConfig {
    pub mode: ShapleyMode,
    pub exact_threshold: usize,
    pub permutations: usize,
    pub seed: u64,
    pub background_size: usize,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            mode: ShapleyMode::Exact,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            permutations: 2048,
            seed: 0,
            background_size: 100,
        }
    }
}

impl ShapleyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exact_threshold == 0 || self.exact_threshold > 30 {
            return Err(Error::config(
                "shapley.exact_threshold",
                "must lie in 1..=30",
            ));
        }
        if self.mode == ShapleyMode::Sampled && self.permutations == 0 {
            return Err(Error::config("shapley.permutations", "must be at least 1"));
        }
        if self.background_size == 0 {
            return Err(Error::config("shapley.background_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyVector {
    pub values: Vec<f64>,
    /// Payoff of the empty coalition.
    pub base_value: f64,
    /// Payoff of the full coalition.
    pub full_value: f64,
}

fn check_widths<P: Predictor + ?Sized>(model: &P, instance: &[f64], bg: &BackgroundSet) -> Result<()> {
    let w = model.input_width();
    if instance.len() != w {
        return Err(Error::DimensionMismatch {
            context: "explained instance width",
            expected: w,
            found: instance.len(),
        });
    }
    if bg.width() != w {
        return Err(Error::DimensionMismatch {
            context: "background width",
            expected: w,
            found: bg.width(),
        });
    }
    Ok(())
}

fn mean_proba<P: Predictor + ?Sized>(model: &P, rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| model.predict_proba(r)).sum::<f64>() / rows.len() as f64
}

/// Mean over background rows `b` of `model(h)`, where `h` copies the
/// instance on `present` columns and `b` elsewhere.
pub fn value_function<P: Predictor + ?Sized>(
    model: &P,
    instance: &[f64],
    present: &[bool],
    bg: &BackgroundSet,
) -> Result<f64> {
    check_widths(model, instance, bg)?;
    if present.len() != instance.len() {
        return Err(Error::DimensionMismatch {
            context: "coalition mask width",
            expected: instance.len(),
            found: present.len(),
        });
    }
    let mut h = vec![0.0; instance.len()];
    let mut total = 0.0;
    for b in bg.rows() {
        for (c, slot) in h.iter_mut().enumerate() {
            *slot = if present[c] { instance[c] } else { b[c] };
        }
        total += model.predict_proba(&h);
    }
    Ok(total / bg.len() as f64)
}

/// `|S|! (w - |S| - 1)! / w!` for every coalition size `|S|` in `0..w`.
fn coalition_weights(w: usize) -> Vec<f64> {
    // 1 / (w * C(w-1, s))
    let mut binom = 1.0f64;
    (0..w)
        .map(|s| {
            if s > 0 {
                binom = binom * (w - s) as f64 / s as f64;
            }
            1.0 / (w as f64 * binom)
        })
        .collect()
}

/// Exact Shapley values by full coalition enumeration, using the default
/// width threshold.
pub fn exact_shapley<P: Predictor + ?Sized>(
    model: &P,
    instance: &[f64],
    bg: &BackgroundSet,
) -> Result<ShapleyVector> {
    exact_shapley_bounded(model, instance, bg, DEFAULT_EXACT_THRESHOLD)
}

/// Every coalition payoff is computed once (indexed by bitmask), then each
/// column's value is the weighted sum of its marginal contributions.
pub fn exact_shapley_bounded<P: Predictor + ?Sized>(
    model: &P,
    instance: &[f64],
    bg: &BackgroundSet,
    threshold: usize,
) -> Result<ShapleyVector> {
    check_widths(model, instance, bg)?;
    let w = instance.len();
    if w > threshold {
        return Err(Error::WidthAboveThreshold {
            width: w,
            threshold,
        });
    }
    if w == 0 {
        let v = mean_proba(model, bg.rows());
        return Ok(ShapleyVector {
            values: vec![],
            base_value: v,
            full_value: v,
        });
    }

    let n_coalitions = 1usize << w;
    let mut payoff = vec![0.0; n_coalitions];
    let mut h = vec![0.0; w];
    for (mask, slot) in payoff.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in bg.rows() {
            for c in 0..w {
                h[c] = if mask >> c & 1 == 1 { instance[c] } else { b[c] };
            }
            total += model.predict_proba(&h);
        }
        *slot = total / bg.len() as f64;
    }

    let weights = coalition_weights(w);
    let mut values = vec![0.0; w];
    for (c, value) in values.iter_mut().enumerate() {
        let bit = 1usize << c;
        let mut acc = 0.0;
        for mask in 0..n_coalitions {
            if mask & bit == 0 {
                let size = mask.count_ones() as usize;
                acc += weights[size] * (payoff[mask | bit] - payoff[mask]);
            }
        }
        *value = acc;
    }
    Ok(ShapleyVector {
        values,
        base_value: payoff[0],
        full_value: payoff[n_coalitions - 1],
    })
}

/// Monte Carlo estimate: mean marginal contribution of each column when
/// columns are switched from background to instance values in a seeded
/// random order. Permutations are drawn and accumulated strictly in index
/// order, so results depend only on the seed.
pub fn sampled_shapley<P: Predictor + ?Sized>(
    model: &P,
    instance: &[f64],
    bg: &BackgroundSet,
    cfg: &ShapleyConfig,
) -> Result<ShapleyVector> {
    check_widths(model, instance, bg)?;
    if cfg.permutations == 0 {
        return Err(Error::config("shapley.permutations", "must be at least 1"));
    }
    let w = instance.len();
    let base_value = mean_proba(model, bg.rows());
    let full_value = model.predict_proba(instance);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..w).collect();
    let mut sums = vec![0.0; w];
    let mut hybrid: Vec<Vec<f64>> = bg.rows().to_vec();
    for _ in 0..cfg.permutations {
        order.shuffle(&mut rng);
        for (h, b) in hybrid.iter_mut().zip(bg.rows()) {
            h.copy_from_slice(b);
        }
        let mut prev = base_value;
        for &c in &order {
            for h in hybrid.iter_mut() {
                h[c] = instance[c];
            }
            let cur = mean_proba(model, &hybrid);
            sums[c] += cur - prev;
            prev = cur;
        }
    }
    let p = cfg.permutations as f64;
    Ok(ShapleyVector {
        values: sums.into_iter().map(|s| s / p).collect(),
        base_value,
        full_value,
    })
}

/// Dispatches on `cfg.mode`.
pub fn shapley_values<P: Predictor + ?Sized>(
    model: &P,
    instance: &[f64],
    bg: &BackgroundSet,
    cfg: &ShapleyConfig,
) -> Result<ShapleyVector> {
    match cfg.mode {
        ShapleyMode::Exact => exact_shapley_bounded(model, instance, bg, cfg.exact_threshold),
        ShapleyMode::Sampled => sampled_shapley(model, instance, bg, cfg),
    }
}
