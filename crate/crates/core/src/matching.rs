//! Partition-and-match: unit-cube scaling, lattice cells of side `h`, and one
//! random treated/control pair per cell holding both arms.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("covariate {dim} is constant; cannot scale it to the unit cube")]
    DegenerateDimension { dim: usize },
    #[error("matching dimension {dim} out of range for {p} covariates")]
    DimensionOutOfRange { dim: usize, p: usize },
    #[error("no matching dimensions selected")]
    NoDimensions,
    #[error("side length {0} not in (0, 1]")]
    InvalidSideLength(f64),
    #[error("scaled coordinate {value} at row {row} lies outside [0, 1]")]
    OutOfCube { row: usize, value: f64 },
    #[error("dimension mismatch: {rows} rows but {flags} treatment flags")]
    LengthMismatch { rows: usize, flags: usize },
    #[error("no cell contains both a treated and a control observation")]
    NoPairs,
    #[error("minimum pair count must be at least 1")]
    InvalidMinPairs,
}

/// Per-dimension affine map of the observed range onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeTransform {
    dims: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl CubeTransform {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn bounds(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lower.iter().copied().zip(self.upper.iter().copied())
    }

    /// Scales the selected columns of `x`; returns an `n × dims` matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.dims.len(), |i, d| {
            (x[(i, self.dims[d])] - self.lower[d]) / (self.upper[d] - self.lower[d])
        })
    }

    /// Maps scaled coordinates back to the raw units of the selected columns.
    pub fn invert(&self, scaled: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(scaled.nrows(), self.dims.len(), |i, d| {
            self.lower[d] + scaled[(i, d)] * (self.upper[d] - self.lower[d])
        })
    }
}

pub fn fit_cube_transform(x: &DMatrix<f64>, dims: &[usize]) -> Result<CubeTransform, MatchError> {
    if dims.is_empty() {
        return Err(MatchError::NoDimensions);
    }
    let mut lower = Vec::with_capacity(dims.len());
    let mut upper = Vec::with_capacity(dims.len());
    for &dim in dims {
        if dim >= x.ncols() {
            return Err(MatchError::DimensionOutOfRange { dim, p: x.ncols() });
        }
        let col = x.column(dim);
        let (lo, hi) = (col.min(), col.max());
        if !(hi > lo) {
            return Err(MatchError::DegenerateDimension { dim });
        }
        lower.push(lo);
        upper.push(hi);
    }
    Ok(CubeTransform {
        dims: dims.to_vec(),
        lower,
        upper,
    })
}

/// `h = (ln n / n)^(1/p_match)`, clamped to `(0, 1]`.
pub fn default_side_length(n: usize, p_match: usize) -> f64 {
    side_length_rule(n.max(2) as f64, p_match)
}

/// The side-length rule for a real-valued sample size `n ≥ 2`.
pub fn side_length_rule(n: f64, p_match: usize) -> f64 {
    let p = p_match.max(1) as f64;
    (n.ln() / n).powf(1.0 / p).clamp(f64::MIN_POSITIVE, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedPair {
    pub treated: usize,
    pub control: usize,
    /// Lattice coordinates `⌊u_d / h⌋` of the shared cell.
    pub cell: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPairSet {
    pub pairs: Vec<MatchedPair>,
    pub side_length: f64,
    /// Nonempty cells lacking one of the arms.
    pub skipped_cells: usize,
    pub occupied_cells: usize,
}

impl MatchedPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Number of cells per axis; the upper face `u = 1` folds into the last one.
fn cells_per_axis(h: f64) -> usize {
    ((1.0 / h) - 1e-9).ceil().max(1.0) as usize
}

fn cell_of(u: f64, h: f64, per_axis: usize) -> usize {
    ((u / h).floor() as usize).min(per_axis - 1)
}

#[derive(Default)]
struct Cell {
    treated: Vec<usize>,
    control: Vec<usize>,
}

pub fn partition_and_match<R: Rng + ?Sized>(
    x_scaled: &DMatrix<f64>,
    treated: &[bool],
    h: f64,
    rng: &mut R,
) -> Result<MatchedPairSet, MatchError> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(MatchError::InvalidSideLength(h));
    }
    if x_scaled.nrows() != treated.len() {
        return Err(MatchError::LengthMismatch {
            rows: x_scaled.nrows(),
            flags: treated.len(),
        });
    }
    let per_axis = cells_per_axis(h);

    // BTreeMap keeps the cell visiting order, hence the rng draws, deterministic.
    let mut cells: BTreeMap<Vec<usize>, Cell> = BTreeMap::new();
    for (i, &is_treated) in treated.iter().enumerate() {
        let mut key = Vec::with_capacity(x_scaled.ncols());
        for d in 0..x_scaled.ncols() {
            let value = x_scaled[(i, d)];
            if !(0.0..=1.0).contains(&value) {
                return Err(MatchError::OutOfCube { row: i, value });
            }
            key.push(cell_of(value, h, per_axis));
        }
        let cell = cells.entry(key).or_default();
        if is_treated {
            cell.treated.push(i);
        } else {
            cell.control.push(i);
        }
    }

    let occupied_cells = cells.len();
    let mut pairs = Vec::new();
    let mut skipped_cells = 0;
    for (key, cell) in cells {
        if cell.treated.is_empty() || cell.control.is_empty() {
            skipped_cells += 1;
            continue;
        }
        let t = cell.treated[rng.random_range(0..cell.treated.len())];
        let c = cell.control[rng.random_range(0..cell.control.len())];
        pairs.push(MatchedPair {
            treated: t,
            control: c,
            cell: key,
        });
    }
    if pairs.is_empty() {
        return Err(MatchError::NoPairs);
    }
    Ok(MatchedPairSet {
        pairs,
        side_length: h,
        skipped_cells,
        occupied_cells,
    })
}

/// Matches at `h0`, doubling `h` (capped at 1) until at least `min_pairs`
/// pairs exist. Falls back to the `h = 1` matching when none suffices.
pub fn adaptive_match<R: Rng + ?Sized>(
    x_scaled: &DMatrix<f64>,
    treated: &[bool],
    h0: f64,
    min_pairs: usize,
    rng: &mut R,
) -> Result<MatchedPairSet, MatchError> {
    if min_pairs == 0 {
        return Err(MatchError::InvalidMinPairs);
    }
    if !(h0 > 0.0 && h0 <= 1.0) {
        return Err(MatchError::InvalidSideLength(h0));
    }
    let mut h = h0;
    loop {
        match partition_and_match(x_scaled, treated, h, rng) {
            Ok(set) if set.len() >= min_pairs || h >= 1.0 => return Ok(set),
            Err(MatchError::NoPairs) if h < 1.0 => {}
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        h = (2.0 * h).min(1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn unit_column_is_identity() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 0.25, 1.0, 0.6]);
        let t = fit_cube_transform(&x, &[0]).unwrap();
        assert_eq!(t.apply(&x), x);
    }

    #[test]
    fn symmetric_range_maps_zero_to_half() {
        let x = DMatrix::from_column_slice(3, 1, &[-3.0, 0.0, 3.0]);
        let t = fit_cube_transform(&x, &[0]).unwrap();
        assert_relative_eq!(t.apply(&x)[(1, 0)], 0.5);
    }

    #[test]
    fn constant_dimension_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        assert_eq!(
            fit_cube_transform(&x, &[0, 1]).unwrap_err(),
            MatchError::DegenerateDimension { dim: 0 }
        );
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-10.0..10.0));
        let t = fit_cube_transform(&x, &[0, 2]).unwrap();
        let back = t.invert(&t.apply(&x));
        for i in 0..50 {
            assert!((back[(i, 0)] - x[(i, 0)]).abs() < 1e-12);
            assert!((back[(i, 1)] - x[(i, 2)]).abs() < 1e-12);
        }
    }

    #[test]
    fn default_side_length_values() {
        assert_relative_eq!(side_length_rule(std::f64::consts::E, 1), 0.36787944, epsilon = 1e-8);
        assert_relative_eq!(default_side_length(200, 2), 0.162757, epsilon = 1e-5);
        assert_relative_eq!(default_side_length(800, 2), 0.091410, epsilon = 1e-5);
        assert_eq!(default_side_length(2, 1), (2f64.ln() / 2.0));
        assert!(default_side_length(3, 20) <= 1.0);
    }

    #[test]
    fn single_cell_single_pair() {
        let x = DMatrix::from_column_slice(2, 1, &[0.2, 0.9]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = partition_and_match(&x, &[true, false], 1.0, &mut rng).unwrap();
        assert_eq!(set.pairs.len(), 1);
        assert_eq!((set.pairs[0].treated, set.pairs[0].control), (0, 1));
    }

    #[test]
    fn all_treated_has_no_pairs() {
        let x = DMatrix::from_column_slice(3, 1, &[0.1, 0.5, 0.9]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            partition_and_match(&x, &[true; 3], 0.5, &mut rng).unwrap_err(),
            MatchError::NoPairs
        );
        assert_eq!(
            adaptive_match(&x, &[true; 3], 0.25, 1, &mut rng).unwrap_err(),
            MatchError::NoPairs
        );
    }

    #[test]
    fn upper_face_folds_into_last_cell() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 0.8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = partition_and_match(&x, &[true, false], 0.25, &mut rng).unwrap();
        assert_eq!(set.pairs[0].cell, vec![3]);
    }

    #[test]
    fn adaptive_coarsens_sparse_data() {
        // Treated units sit in [0, 0.2), controls in [0.3, 0.5): no pair at
        // h = 0.25, one pair per 0.5-cell after doubling.
        let coords = [0.05, 0.1, 0.15, 0.35, 0.4, 0.45];
        let flags = [true, true, true, false, false, false];
        let x = DMatrix::from_column_slice(6, 1, &coords);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            partition_and_match(&x, &flags, 0.25, &mut rng).unwrap_err(),
            MatchError::NoPairs
        );
        let set = adaptive_match(&x, &flags, 0.25, 1, &mut rng).unwrap();
        assert_eq!(set.side_length, 0.5);
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn adaptive_at_full_side_is_plain_match() {
        let x = DMatrix::from_column_slice(4, 1, &[0.1, 0.3, 0.6, 0.9]);
        let flags = [true, false, true, false];
        let a = adaptive_match(&x, &flags, 1.0, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = partition_and_match(&x, &flags, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lipschitz_bias_bound() {
        // f_c(u) = 2 u_1 − u_2 has Lipschitz constant √5 on the cube.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(400, 2, |_, _| rng.random_range(0.0..=1.0));
        let flags: Vec<bool> = (0..400).map(|_| rng.random_bool(0.5)).collect();
        let h = 0.2;
        let set = partition_and_match(&x, &flags, h, &mut rng).unwrap();
        let f = |i: usize| 2.0 * x[(i, 0)] - x[(i, 1)];
        for pair in &set.pairs {
            let bias = (f(pair.treated) - f(pair.control)).abs();
            assert!(bias <= 5f64.sqrt() * h * 2f64.sqrt() + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pairs_are_valid_and_deterministic(seed in any::<u64>(), n in 2usize..200, p in 1usize..4, h in 0.05f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(0.0..=1.0));
            let flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let first = partition_and_match(&x, &flags, h, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
            let again = partition_and_match(&x, &flags, h, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
            prop_assert_eq!(&first, &again);
            let Ok(set) = first else { return Ok(()); };
            let mut seen = HashSet::new();
            let per_axis = cells_per_axis(h);
            for pair in &set.pairs {
                prop_assert!(flags[pair.treated] && !flags[pair.control]);
                for d in 0..p {
                    let a = cell_of(x[(pair.treated, d)], h, per_axis);
                    let b = cell_of(x[(pair.control, d)], h, per_axis);
                    prop_assert_eq!(a, b);
                    prop_assert_eq!(a, pair.cell[d]);
                }
                prop_assert!(seen.insert(pair.treated));
                prop_assert!(seen.insert(pair.control));
            }
            prop_assert!(set.len() + set.skipped_cells == set.occupied_cells);
        }
    }
}
