//! Propagation weights and path weights for one instance.
//!
//! Positions are 0-based chain positions. `W(y_k, .)` is the absolute direct
//! contribution of a feature or preceding output to link `k`, divided by the
//! total absolute direct contribution to link `k`. `Z_k(x_i)` is the total
//! weight of every path from position `k` down to feature `i`:
//!
//! ```text
//! Z_k(x_i) = W(y_k, x_i) + sum_{p < k} W(y_k, y_p) * Z_p(x_i)
//! ```

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub n_features: usize,
    /// `features[k][i] = W(y_k, x_i)`
    pub features: Vec<Vec<f64>>,
    /// `outputs[k][p] = W(y_k, y_p)` for `p < k`
    pub outputs: Vec<Vec<f64>>,
    /// `z[k][i] = Z_k(x_i)`; empty until [`z_weights`] runs.
    pub z: Vec<Vec<f64>>,
    /// Whether position `k` had a nonzero normalizer.
    pub nonzero: Vec<bool>,
}

impl WeightMatrix {
    pub fn positions(&self) -> usize {
        self.features.len()
    }
}

/// Normalized absolute direct contributions. `direct[k]` holds link `k`'s
/// values over the `n_features` features followed by the `k` preceding
/// outputs. A link whose contributions are all zero forwards zero weight.
pub fn propagation_weights(direct: &[Vec<f64>], n_features: usize) -> WeightMatrix {
    let mut features = Vec::with_capacity(direct.len());
    let mut outputs = Vec::with_capacity(direct.len());
    let mut nonzero = Vec::with_capacity(direct.len());
    for (k, phi) in direct.iter().enumerate() {
        debug_assert_eq!(phi.len(), n_features + k);
        let denom: f64 = phi.iter().map(|v| v.abs()).sum();
        let scale = |v: &f64| if denom > 0.0 { v.abs() / denom } else { 0.0 };
        features.push(phi[..n_features].iter().map(scale).collect());
        outputs.push(phi[n_features..].iter().map(scale).collect());
        nonzero.push(denom > 0.0);
    }
    WeightMatrix {
        n_features,
        features,
        outputs,
        z: Vec::new(),
        nonzero,
    }
}

/// Fills `Z` by dynamic programming over increasing positions.
pub fn z_weights(mut w: WeightMatrix) -> WeightMatrix {
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(w.positions());
    for k in 0..w.positions() {
        let mut row = w.features[k].clone();
        for (p, &wkp) in w.outputs[k].iter().enumerate() {
            for (r, zp) in row.iter_mut().zip(&z[p]) {
                *r += wkp * zp;
            }
        }
        z.push(row);
    }
    w.z = z;
    w
}

/// Indirect contribution of every feature to link `j`:
/// `sum_{k < j} phi_j(y_k) * Z_k(x_i)`, where `phi_j(y_k)` enters as an
/// absolute value unless `signed` is set. Position 0 gets zeros.
pub fn indirect_contributions(direct: &[Vec<f64>], w: &WeightMatrix, signed: bool) -> Vec<Vec<f64>> {
    let n = w.n_features;
    direct
        .iter()
        .enumerate()
        .map(|(j, phi)| {
            let mut out = vec![0.0; n];
            for k in 0..j {
                let share = if signed { phi[n + k] } else { phi[n + k].abs() };
                for (o, zk) in out.iter_mut().zip(&w.z[k]) {
                    *o += share * zk;
                }
            }
            out
        })
        .collect()
}

/// Reference enumeration for testing the `Z` recursion: sums, over every
/// strictly descending sequence of positions `j > k_1 > ... > k_r` with
/// `r >= 1`, the product `W(y_j, y_k1) W(y_k1, y_k2) ... W(y_kr, x_i)`.
///
/// Equals `sum_{k < j} W(y_j, y_k) * Z_k(x_i)`.
pub fn path_oracle(w: &WeightMatrix, j: usize, i: usize) -> f64 {
    let mut total = 0.0;
    for mask in 1u64..(1u64 << j) {
        // set bits are the visited positions, walked from high to low
        let mut from = j;
        let mut product = 1.0;
        for k in (0..j).rev() {
            if mask >> k & 1 == 1 {
                product *= w.outputs[from][k];
                from = k;
            }
        }
        total += product * w.features[from][i];
    }
    total
}

/// Number of indirect paths from position `j` to any single feature, found
/// by enumeration: one per nonempty subset of the `j` preceding positions.
pub fn indirect_path_count(j: usize) -> u64 {
    (1u64..(1u64 << j)).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn weights_from_direct_values() {
        let w = propagation_weights(&[vec![0.3, 0.1]], 2);
        assert!(approx(w.features[0][0], 0.75));
        assert!(approx(w.features[0][1], 0.25));
    }

    #[test]
    fn zero_link_forwards_nothing() {
        let w = propagation_weights(&[vec![0.0, 0.0], vec![0.0, 0.0, 0.0]], 2);
        assert!(w.features.iter().flatten().all(|&v| v == 0.0));
        assert!(w.outputs.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(w.nonzero, vec![false, false]);
    }

    #[test]
    fn negative_values_count_by_magnitude() {
        let w = propagation_weights(&[vec![-0.2, 0.2]], 2);
        assert!(approx(w.features[0][0], 0.5));
        assert!(approx(w.features[0][1], 0.5));
    }

    #[test]
    fn z_two_positions() {
        let w = WeightMatrix {
            n_features: 2,
            features: vec![vec![0.6, 0.4], vec![0.2, 0.2]],
            outputs: vec![vec![], vec![0.6]],
            z: vec![],
            nonzero: vec![true, true],
        };
        let w = z_weights(w);
        assert!(approx(w.z[1][0], 0.56));
        assert!(approx(w.z[1][1], 0.44));
        assert_eq!(w.z[0], w.features[0]);
    }

    #[test]
    fn z_without_output_mass_is_feature_weight() {
        let w = z_weights(WeightMatrix {
            n_features: 2,
            features: vec![vec![0.5, 0.5], vec![0.3, 0.7], vec![1.0, 0.0]],
            outputs: vec![vec![], vec![0.0], vec![0.0, 0.0]],
            z: vec![],
            nonzero: vec![true; 3],
        });
        assert_eq!(w.z, w.features);
    }

    #[test]
    fn indirect_examples() {
        // phi_y2(y1) = 0.4, Z_1 = (0.75, 0.25)
        let direct = vec![vec![0.3, 0.1], vec![0.0, 0.0, 0.4]];
        let w = z_weights(propagation_weights(&direct, 2));
        let ind = indirect_contributions(&direct, &w, false);
        assert_eq!(ind[0], vec![0.0, 0.0]);
        assert!(approx(ind[1][0], 0.3));
        assert!(approx(ind[1][1], 0.1));
    }

    #[test]
    fn indirect_three_positions() {
        // Z_1(x1) = 0.6, Z_2(x1) = 0.56, phi_y3(y1) = 0.25, phi_y3(y2) = 0.5
        let w = z_weights(WeightMatrix {
            n_features: 2,
            features: vec![vec![0.6, 0.4], vec![0.2, 0.2], vec![0.1, 0.15]],
            outputs: vec![vec![], vec![0.6], vec![0.25, 0.5]],
            z: vec![],
            nonzero: vec![true; 3],
        });
        let direct = vec![vec![0.6, 0.4], vec![0.2, 0.2, 0.6], vec![0.1, 0.15, 0.25, 0.5]];
        let ind = indirect_contributions(&direct, &w, false);
        assert!(approx(ind[2][0], 0.43));
    }

    #[test]
    fn signed_mode_keeps_sign_of_output_contribution() {
        let direct = vec![vec![0.3, 0.1], vec![0.0, 0.0, -0.4]];
        let w = z_weights(propagation_weights(&direct, 2));
        assert!(approx(indirect_contributions(&direct, &w, true)[1][0], -0.3));
        assert!(approx(indirect_contributions(&direct, &w, false)[1][0], 0.3));
    }

    #[test]
    fn oracle_single_path() {
        let w = z_weights(WeightMatrix {
            n_features: 2,
            features: vec![vec![0.6, 0.4], vec![0.2, 0.2]],
            outputs: vec![vec![], vec![0.6]],
            z: vec![],
            nonzero: vec![true, true],
        });
        assert!(approx(path_oracle(&w, 1, 0), 0.6 * 0.6));
        assert!(approx(path_oracle(&w, 1, 0), w.outputs[1][0] * w.z[0][0]));
    }

    #[test]
    fn oracle_zero_edge_annihilates() {
        let w = WeightMatrix {
            n_features: 1,
            features: vec![vec![1.0], vec![0.5], vec![0.2]],
            outputs: vec![vec![], vec![0.5], vec![0.0, 0.8]],
            z: vec![],
            nonzero: vec![true; 3],
        };
        // only y3 -> y2 -> x and y3 -> y2 -> y1 -> x survive
        let expected = 0.8 * 0.5 + 0.8 * 0.5 * 1.0;
        assert!(approx(path_oracle(&w, 2, 0), expected));
    }

    #[test]
    fn path_counts() {
        assert_eq!(indirect_path_count(0), 0);
        assert_eq!(indirect_path_count(1), 1);
        // fourth output of a chain: 7 indirect paths per feature
        assert_eq!(indirect_path_count(3), 7);
    }
}
