use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Two uniform boolean features `x1`, `x2` and the outputs `and`, `or`,
/// `xor` computed from them.
pub fn generate_xor_dataset(rows: usize, seed: u64) -> Result<Dataset> {
    if rows < 4 {
        return Err(Error::InvalidData(format!(
            "xor dataset needs at least 4 rows, got {rows}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(rows);
    let mut outputs = Vec::with_capacity(rows);
    for _ in 0..rows {
        let a: bool = rng.gen();
        let b: bool = rng.gen();
        features.push(vec![f64::from(u8::from(a)), f64::from(u8::from(b))]);
        outputs.push(vec![u8::from(a & b), u8::from(a | b), u8::from(a ^ b)]);
    }
    Dataset::new(
        features,
        outputs,
        vec!["x1".into(), "x2".into()],
        vec!["and".into(), "or".into(), "xor".into()],
        vec![ColumnKind::Numeric; 2],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_table_holds_on_every_row() {
        let d = generate_xor_dataset(1000, 7).unwrap();
        for (x, y) in d.features().iter().zip(d.outputs()) {
            let (a, b) = (x[0] == 1.0, x[1] == 1.0);
            assert!(x.iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(y, &vec![u8::from(a && b), u8::from(a || b), u8::from(a != b)]);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(
            generate_xor_dataset(1000, 7).unwrap(),
            generate_xor_dataset(1000, 7).unwrap()
        );
        assert_ne!(
            generate_xor_dataset(1000, 7).unwrap(),
            generate_xor_dataset(1000, 8).unwrap()
        );
    }

    #[test]
    fn all_four_cells_present() {
        let d = generate_xor_dataset(1000, 7).unwrap();
        for cell in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
            assert!(d.features().iter().any(|r| r[..] == cell));
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(generate_xor_dataset(3, 0).is_err());
    }
}
