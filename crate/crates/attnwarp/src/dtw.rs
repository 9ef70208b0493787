//! Classic dynamic time warping: local cost matrix, optimal alignment under
//! the monotonicity, continuity, and boundary conditions, path extraction,
//! and conversion to the softmaxed target matrix used by pre-training.

use ndarray::Array2;

use crate::core::{validate_pair, TimeSeries, WarpingMatrix};
use crate::error::{Error, Result};
use crate::warpnet::row_softmax;

/// Result of an optimal alignment: total cost, one optimal path, and the
/// path as a binary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    /// Sum of local costs over the path cells.
    pub distance: f64,
    /// Index pairs from (0,0) to (W-1,W-1); consecutive steps are one of
    /// (+1,0), (0,+1), (+1,+1).
    pub path: Vec<(usize, usize)>,
    /// Binary matrix with 1 at each path cell.
    pub path_matrix: Array2<f64>,
}

/// Entry (i,j) is the squared Euclidean distance between `a`'s point i and
/// `b`'s point j.
pub fn local_cost_matrix(a: &TimeSeries, b: &TimeSeries) -> Result<Array2<f64>> {
    validate_pair(a, b)?;
    let w = a.w();
    let mut cost = Array2::zeros((w, w));
    for i in 0..w {
        let ai = a.row(i);
        for j in 0..w {
            let d2: f64 = ai
                .iter()
                .zip(b.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            cost[[i, j]] = d2;
        }
    }
    Ok(cost)
}

/// Minimum-cost monotone path through a cost matrix, by dynamic programming
/// with backtracking. Ties in the backtrace prefer the diagonal step, then
/// the vertical (i-1) step, then the horizontal (j-1) step, so the output is
/// deterministic.
pub fn dtw_align(cost: &Array2<f64>) -> Result<DtwResult> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Err(Error::InconsistentShapes("empty cost matrix".into()));
    }
    if !cost.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let mut acc = Array2::from_elem((n, m), f64::INFINITY);
    acc[[0, 0]] = cost[[0, 0]];
    for i in 1..n {
        acc[[i, 0]] = acc[[i - 1, 0]] + cost[[i, 0]];
    }
    for j in 1..m {
        acc[[0, j]] = acc[[0, j - 1]] + cost[[0, j]];
    }
    for i in 1..n {
        for j in 1..m {
            let best = acc[[i - 1, j - 1]].min(acc[[i - 1, j]]).min(acc[[i, j - 1]]);
            acc[[i, j]] = cost[[i, j]] + best;
        }
    }

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = acc[[i - 1, j - 1]];
            let vert = acc[[i - 1, j]];
            let horiz = acc[[i, j - 1]];
            if diag <= vert && diag <= horiz {
                i -= 1;
                j -= 1;
            } else if vert <= horiz {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        path.push((i, j));
    }
    path.reverse();

    let mut path_matrix = Array2::zeros((n, m));
    for &(i, j) in &path {
        path_matrix[[i, j]] = 1.0;
    }
    Ok(DtwResult {
        distance: acc[[n - 1, m - 1]],
        path,
        path_matrix,
    })
}

/// Binary W x W matrix with 1 at each path cell. The path must satisfy the
/// boundary, monotonicity, and continuity conditions.
pub fn path_to_matrix(path: &[(usize, usize)], w: usize) -> Result<Array2<f64>> {
    if w == 0 {
        return Err(Error::InvalidPath("width must be >= 1".into()));
    }
    match (path.first(), path.last()) {
        (Some(&(0, 0)), Some(&(i, j))) if i == w - 1 && j == w - 1 => {}
        _ => {
            return Err(Error::InvalidPath(format!(
                "path must run from (0,0) to ({},{})",
                w - 1,
                w - 1
            )))
        }
    }
    for win in path.windows(2) {
        let (i0, j0) = win[0];
        let (i1, j1) = win[1];
        let step = (i1 as isize - i0 as isize, j1 as isize - j0 as isize);
        if !matches!(step, (1, 0) | (0, 1) | (1, 1)) {
            return Err(Error::InvalidPath(format!(
                "illegal step from ({},{}) to ({},{})",
                i0, j0, i1, j1
            )));
        }
    }
    let mut m = Array2::zeros((w, w));
    for &(i, j) in path {
        if i >= w || j >= w {
            return Err(Error::InvalidPath(format!("cell ({},{}) out of range", i, j)));
        }
        m[[i, j]] = 1.0;
    }
    Ok(m)
}

/// The pre-training target: row-wise softmax of the binary DTW path matrix.
pub fn dtw_target(a: &TimeSeries, b: &TimeSeries) -> Result<WarpingMatrix> {
    let cost = local_cost_matrix(a, b)?;
    let aligned = dtw_align(&cost)?;
    let bin = path_to_matrix(&aligned.path, a.w())?;
    row_softmax(&bin)
}

/// DTW distance between two series under the squared-Euclidean local cost.
pub fn dtw_distance(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    Ok(dtw_align(&local_cost_matrix(a, b)?)?.distance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::TimeSeries;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Minimum path cost by exhaustive enumeration of all admissible paths.
    /// Independent of the dynamic-programming implementation.
    fn enumerate_min_cost(cost: &Array2<f64>) -> f64 {
        fn go(cost: &Array2<f64>, i: usize, j: usize) -> f64 {
            let (n, m) = cost.dim();
            if i == n - 1 && j == m - 1 {
                return cost[[i, j]];
            }
            let mut best = f64::INFINITY;
            if i + 1 < n {
                best = best.min(go(cost, i + 1, j));
            }
            if j + 1 < m {
                best = best.min(go(cost, i, j + 1));
            }
            if i + 1 < n && j + 1 < m {
                best = best.min(go(cost, i + 1, j + 1));
            }
            cost[[i, j]] + best
        }
        go(cost, 0, 0)
    }

    fn k1(values: &[f64]) -> TimeSeries {
        TimeSeries::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
    }

    fn random_series(rng: &mut ChaCha8Rng, w: usize, k: usize) -> TimeSeries {
        TimeSeries::from_rows(
            &(0..w)
                .map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn local_cost_of_equal_zero_series_is_zero() {
        let a = TimeSeries::new(Array2::zeros((3, 2))).unwrap();
        let cost = local_cost_matrix(&a, &a).unwrap();
        assert_eq!(cost, Array2::<f64>::zeros((3, 3)));
    }

    #[test]
    fn local_cost_matches_elementwise_squared_differences() {
        let a = k1(&[0.0, 1.0, 2.0]);
        let b = k1(&[0.0, 2.0, 2.0]);
        let cost = local_cost_matrix(&a, &b).unwrap();
        // Brute-force oracle: entry (i,j) = (a_i - b_j)^2.
        let expect = array![[0.0, 4.0, 4.0], [1.0, 1.0, 1.0], [4.0, 0.0, 0.0]];
        assert_eq!(cost, expect);
    }

    #[test]
    fn local_cost_is_transpose_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_series(&mut rng, 5, 2);
            let b = random_series(&mut rng, 5, 2);
            let ab = local_cost_matrix(&a, &b).unwrap();
            let ba = local_cost_matrix(&b, &a).unwrap();
            assert_eq!(ab, ba.t().to_owned());
        }
    }

    #[test]
    fn identical_sequences_align_on_the_diagonal_with_zero_distance() {
        let a = k1(&[0.3, -1.0, 2.5, 0.0]);
        let res = dtw_align(&local_cost_matrix(&a, &a).unwrap()).unwrap();
        assert_eq!(res.distance, 0.0);
        assert_eq!(res.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn repeated_values_can_absorb_each_other() {
        // a's two 1s both match b's single 1; b's repeated 3 absorbs a's 3.
        let a = k1(&[0.0, 1.0, 1.0, 3.0]);
        let b = k1(&[0.0, 1.0, 3.0, 3.0]);
        let cost = local_cost_matrix(&a, &b).unwrap();
        let res = dtw_align(&cost).unwrap();
        assert_eq!(res.distance, 0.0);
        assert_eq!(res.distance, enumerate_min_cost(&cost));
    }

    #[test]
    fn warped_ramp_distance_matches_enumeration() {
        // Value frozen from the enumeration oracle above.
        let a = k1(&[0.0, 1.0, 2.0, 3.0]);
        let b = k1(&[0.0, 1.0, 1.0, 3.0]);
        let cost = local_cost_matrix(&a, &b).unwrap();
        let res = dtw_align(&cost).unwrap();
        assert_eq!(enumerate_min_cost(&cost), 1.0);
        assert!((res.distance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_cost_matrices_match_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let w = rng.random_range(2..=5);
            let cost = Array2::from_shape_fn((w, w), |_| rng.random_range(0.0..4.0));
            let res = dtw_align(&cost).unwrap();
            assert!((res.distance - enumerate_min_cost(&cost)).abs() < 1e-9);
        }
    }

    #[test]
    fn align_rejects_non_finite_costs() {
        let cost = array![[0.0, f64::INFINITY], [1.0, 0.0]];
        assert!(matches!(dtw_align(&cost), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn path_invariants_hold_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = rng.random_range(2..=6);
            let a = random_series(&mut rng, w, 2);
            let b = random_series(&mut rng, w, 2);
            let cost = local_cost_matrix(&a, &b).unwrap();
            let res = dtw_align(&cost).unwrap();
            assert_eq!(res.path[0], (0, 0));
            assert_eq!(*res.path.last().unwrap(), (w - 1, w - 1));
            for win in res.path.windows(2) {
                let di = win[1].0 - win[0].0;
                let dj = win[1].1 - win[0].1;
                assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
            }
            // Distance equals the sum of local costs over path cells.
            let sum: f64 = res.path.iter().map(|&(i, j)| cost[[i, j]]).sum();
            assert!((res.distance - sum).abs() < 1e-9);
            // Every row and column of the rebuilt matrix is covered.
            let m = path_to_matrix(&res.path, w).unwrap();
            for i in 0..w {
                assert!(m.row(i).sum() >= 1.0);
                assert!(m.column(i).sum() >= 1.0);
            }
        }
    }

    #[test]
    fn distance_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let w = rng.random_range(2..=6);
            let a = random_series(&mut rng, w, 2);
            let b = random_series(&mut rng, w, 2);
            let dab = dtw_distance(&a, &b).unwrap();
            let dba = dtw_distance(&b, &a).unwrap();
            assert!((dab - dba).abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_path_gives_identity_matrix() {
        let m = path_to_matrix(&[(0, 0), (1, 1), (2, 2)], 3).unwrap();
        assert_eq!(m, Array2::<f64>::eye(3));
    }

    #[test]
    fn vertical_then_diagonal_path_matrix() {
        let m = path_to_matrix(&[(0, 0), (1, 0), (1, 1)], 2).unwrap();
        assert_eq!(m, array![[1.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn path_to_matrix_rejects_bad_paths() {
        assert!(matches!(
            path_to_matrix(&[(0, 0), (2, 2)], 3),
            Err(Error::InvalidPath(_))
        ));
        assert!(matches!(
            path_to_matrix(&[(0, 0), (1, 1)], 3),
            Err(Error::InvalidPath(_))
        ));
    }

    #[test]
    fn dtw_target_of_identical_pair_softmaxes_the_identity() {
        let a = k1(&[1.0, 2.0]);
        let p = dtw_target(&a, &a).unwrap();
        let e = std::f64::consts::E;
        let hi = e / (e + 1.0);
        let lo = 1.0 / (e + 1.0);
        assert!((p.entries()[[0, 0]] - hi).abs() < 1e-12);
        assert!((p.entries()[[0, 1]] - lo).abs() < 1e-12);
        assert!((p.entries()[[1, 0]] - lo).abs() < 1e-12);
        assert!((p.entries()[[1, 1]] - hi).abs() < 1e-12);
        // Spec-anchored rounding of the same values.
        assert!((hi - 0.7311).abs() < 1e-4);
        assert!((lo - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn dtw_target_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let w = rng.random_range(2..=8);
            let a = random_series(&mut rng, w, 2);
            let b = random_series(&mut rng, w, 2);
            let p = dtw_target(&a, &b).unwrap();
            assert!(p.is_normalized());
            for row in p.entries().rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }
}
