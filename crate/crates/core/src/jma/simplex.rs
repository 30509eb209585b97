//! Least squares over the probability simplex.
//!
//! Minimizes `‖A w − y‖²` subject to `w ≥ 0, Σ w = 1` by accelerated projected
//! gradient (FISTA with gradient-based restarts) on the Gram form
//! `wᵀHw − 2bᵀw`, `H = AᵀA`, `b = Aᵀy`. Every few iterations the current
//! support is polished by solving the equality-constrained problem on it
//! exactly; the polished point is kept only if it is feasible and improves the
//! KKT residual.

use nalgebra::{DMatrix, DVector};

use super::{JackknifeSystem, JmaError};

/// Tolerance for the simplex invariants of a [`WeightVector`].
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Coordinates above this count as active in the KKT certificate.
pub const ACTIVE_THRESHOLD: f64 = 1e-8;

/// A point of the probability simplex `{w ∈ [0,1]^K : Σ w = 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self, JmaError> {
        if w.is_empty() {
            return Err(JmaError::NotOnSimplex("empty weight vector".into()));
        }
        if let Some(bad) = w.iter().find(|v| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(*v)) {
            return Err(JmaError::NotOnSimplex(format!("weight {bad} outside [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(JmaError::NotOnSimplex(format!("weights sum to {sum}")));
        }
        Ok(Self(w.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()))
    }

    pub fn vertex(k: usize, len: usize) -> Self {
        assert!(k < len, "vertex {k} out of range for {len} candidates");
        let mut w = vec![0.0; len];
        w[k] = 1.0;
        Self(w)
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Self(vec![1.0 / len as f64; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Renormalize away rounding so the sum is 1 to machine precision.
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative KKT residual at which the solver stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub weights: WeightVector,
    /// `‖A ŵ − y‖²`, evaluated directly.
    pub objective: f64,
    /// Relative KKT residual at `ŵ`.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out; `weights` is then the best iterate.
    pub converged: bool,
}

/// The quadratic `‖A w − y‖²` in Gram form.
#[derive(Debug, Clone)]
pub struct SimplexLeastSquares {
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    yty: f64,
}

impl SimplexLeastSquares {
    pub fn new(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self, JmaError> {
        if a.nrows() != y.len() {
            return Err(JmaError::DimensionMismatch {
                expected: a.nrows(),
                got: y.len(),
            });
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(JmaError::EmptySystem {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(JmaError::NonFinite("least-squares data"));
        }
        Ok(Self {
            gram: a.transpose() * a,
            cross: a.transpose() * y,
            yty: y.norm_squared(),
        })
    }

    fn dim(&self) -> usize {
        self.cross.len()
    }

    /// `∇ = 2(Hw − b)`.
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.gram * w - &self.cross) * 2.0
    }

    /// `wᵀHw − 2bᵀw` (objective minus the constant `yᵀy`).
    fn reduced_objective(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.gram * w)) - 2.0 * self.cross.dot(w)
    }

    /// Gradient magnitude scale over the simplex, for relative residuals.
    fn scale(&self) -> f64 {
        let s = 2.0 * self.gram.amax().max(self.cross.amax());
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// `max_{k: w_k > 1e-8} (g_k − min_j g_j)`, divided by [`Self::scale`].
    pub fn kkt_residual(&self, w: &DVector<f64>) -> f64 {
        let g = self.gradient(w);
        let g_min = g.min();
        let worst = w
            .iter()
            .zip(g.iter())
            .filter(|(wk, _)| **wk > ACTIVE_THRESHOLD)
            .map(|(_, gk)| gk - g_min)
            .fold(0.0, f64::max);
        worst / self.scale()
    }

    /// Largest eigenvalue of `H` by power iteration.
    fn lipschitz(&self) -> f64 {
        let k = self.dim();
        let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let hv = &self.gram * &v;
            let norm = hv.norm();
            if norm == 0.0 {
                break;
            }
            let next = v.dot(&hv);
            v = hv / norm;
            if (next - lambda).abs() <= 1e-12 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        // The Rayleigh quotient approaches λ_max from below; never beat the
        // trace bound, never go below the largest diagonal entry.
        let diag_max = self.gram.diagonal().max();
        let trace = self.gram.trace();
        2.0 * lambda.max(diag_max).min(trace)
    }

    /// Exact minimizer on the affine hull of `support`, if it is feasible.
    fn polish(&self, support: &[usize]) -> Option<DVector<f64>> {
        let s = support.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * self.gram[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = 2.0 * self.cross[i];
        }
        rhs[s] = 1.0;
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut w = DVector::zeros(self.dim());
        for (a, &i) in support.iter().enumerate() {
            if sol[a] < -1e-12 {
                return None;
            }
            w[i] = sol[a].max(0.0);
        }
        let total = w.sum();
        if total <= 0.0 {
            return None;
        }
        Some(w / total)
    }

    pub fn solve(&self, opts: &SolverOptions) -> WeightSolution {
        let k = self.dim();
        if k == 1 {
            let w = DVector::from_element(1, 1.0);
            return self.finish(w, 0, true);
        }
        let lip = self.lipschitz();
        let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };

        let mut x = DVector::from_element(k, 1.0 / k as f64);
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut best = x.clone();
        let mut best_obj = self.reduced_objective(&x);

        for iter in 1..=opts.max_iter {
            let g = self.gradient(&y);
            let proposal: Vec<f64> = y.iter().zip(g.iter()).map(|(yi, gi)| yi - step * gi).collect();
            let x_next = DVector::from_vec(project_onto_simplex(&proposal));

            // Gradient restart: drop momentum when it points uphill.
            if (&y - &x_next).dot(&(&x_next - &x)) > 0.0 {
                t = 1.0;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
            x = x_next;
            t = t_next;

            let obj = self.reduced_objective(&x);
            if obj < best_obj {
                best_obj = obj;
                best = x.clone();
            }

            if iter % 20 == 0 {
                let support: Vec<usize> = (0..k).filter(|&i| x[i] > 0.0).collect();
                if let Some(p) = self.polish(&support) {
                    if self.kkt_residual(&p) < self.kkt_residual(&x)
                        && self.reduced_objective(&p) <= best_obj + 1e-14 * best_obj.abs()
                    {
                        x = p.clone();
                        y = p;
                        t = 1.0;
                        best_obj = self.reduced_objective(&x);
                        best = x.clone();
                    }
                }
            }
            if self.kkt_residual(&x) <= opts.tol {
                return self.finish(x, iter, true);
            }
        }
        self.finish(best, opts.max_iter, false)
    }

    fn finish(&self, w: DVector<f64>, iterations: usize, converged: bool) -> WeightSolution {
        let kkt_residual = self.kkt_residual(&w);
        let objective = (self.reduced_objective(&w) + self.yty).max(0.0);
        let weights = WeightVector::new(w.iter().copied().collect()).expect("iterate on the simplex");
        WeightSolution {
            weights,
            objective,
            kkt_residual,
            iterations,
            converged,
        }
    }
}

/// Simplex least squares on raw data `A`, `y`. Unlike the Gram-form value of
/// [`SimplexLeastSquares::solve`], the reported objective is `‖A ŵ − y‖²`
/// evaluated directly, free of cancellation.
pub fn solve_simplex_least_squares(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<WeightSolution, JmaError> {
    let qp = SimplexLeastSquares::new(a, y)?;
    let mut sol = qp.solve(opts);
    let w = DVector::from_column_slice(sol.weights.as_slice());
    sol.objective = (a * w - y).norm_squared();
    Ok(sol)
}

/// `ŵ = argmin_{w ∈ simplex} CV(w)`.
pub fn solve_weights(sys: &JackknifeSystem, opts: &SolverOptions) -> Result<WeightSolution, JmaError> {
    solve_simplex_least_squares(&sys.delta_tilde, &sys.y_tilde, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force minimum of ‖Aw − y‖² over the 0.01-step simplex grid (K = 3).
    fn grid_min(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=100 {
            for j in 0..=(100 - i) {
                let w = DVector::from_vec(vec![
                    i as f64 / 100.0,
                    j as f64 / 100.0,
                    (100 - i - j) as f64 / 100.0,
                ]);
                best = best.min((a * w - y).norm_squared());
            }
        }
        best
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_onto_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_onto_simplex(&[5.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let p = project_onto_simplex(&[0.0, 0.0]);
        assert_relative_eq!(p[0], 0.5);
        let p = project_onto_simplex(&[1.0, 1.0, -3.0]);
        assert_relative_eq!(p.as_slice(), [0.5, 0.5, 0.0].as_slice());
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        assert_eq!(WeightVector::uniform(4).as_slice(), &[0.25; 4]);
    }

    #[test]
    fn single_candidate() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let sol = solve_simplex_least_squares(&a, &y, &SolverOptions::default()).unwrap();
        assert_eq!(sol.weights.as_slice(), &[1.0]);
        assert!(sol.converged);
        assert_relative_eq!(sol.objective, 1.0 + 1.0 + 9.0);
    }

    #[test]
    fn perfect_column_wins() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, -1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let sol = solve_simplex_least_squares(&a, &y, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.weights.as_slice()[0], 1.0, epsilon = 1e-12);
        assert!(sol.objective < 1e-20);
    }

    #[test]
    fn collinear_columns_still_converge() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 1.0, 3.0, 3.0, 0.5]);
        let y = DVector::from_vec(vec![1.2, 2.1, 2.9]);
        let sol = solve_simplex_least_squares(&a, &y, &SolverOptions::default()).unwrap();
        assert!(sol.converged, "kkt {}", sol.kkt_residual);
        assert!(sol.objective <= grid_min(&a, &y) + 1e-9);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(30, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let sol = solve_simplex_least_squares(&a, &y, &SolverOptions { tol: 0.0, max_iter: 5 }).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 5);
        let s: f64 = sol.weights.as_slice().iter().sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn beats_grid_and_vertices(seed in any::<u64>(), m in 3usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(m, 3, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
            let sol = solve_simplex_least_squares(&a, &y, &SolverOptions::default()).unwrap();
            prop_assert!(sol.converged && sol.kkt_residual <= SolverOptions::default().tol, "kkt {}", sol.kkt_residual);
            prop_assert!(sol.objective <= grid_min(&a, &y) + 1e-6);
            for k in 0..3 {
                let v = (a.column(k) - &y).norm_squared();
                prop_assert!(sol.objective <= v + 1e-9 * v.max(1.0));
            }
            let w = sol.weights.as_slice();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn projection_is_nearest_point(v in proptest::collection::vec(-3.0f64..3.0, 1..8)) {
            let p = project_onto_simplex(&v);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Variational inequality: (v − p)·(q − p) ≤ 0 at every vertex q.
            for k in 0..v.len() {
                let mut inner = 0.0;
                for i in 0..v.len() {
                    let q = if i == k { 1.0 } else { 0.0 };
                    inner += (v[i] - p[i]) * (q - p[i]);
                }
                prop_assert!(inner <= 1e-10);
            }
        }
    }
}
