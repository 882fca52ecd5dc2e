//! Alternating ridge least squares on L = U Vᵀ:
//! min Σ (y − ⟨A, U Vᵀ⟩)² + λ(‖U‖_F² + ‖V‖_F²).

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::numeric;
use crate::rng;

use super::{EstimatorConfig, ObservationSet, Observations};

#[derive(Clone, Debug)]
pub struct AlsResult {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Some normal system was singular and solved by pseudo-inverse.
    pub degenerate: bool,
    /// Objective after each full sweep (index 0 is the initialization).
    pub objective: Vec<f64>,
}

pub fn als_complete(obs: &ObservationSet, cfg: &EstimatorConfig) -> Result<AlsResult> {
    if cfg.k < 1 {
        return Err(invalid("ALS needs k ≥ 1"));
    }
    if cfg.max_iters < 1 || !(cfg.conv_tol > 0.0) || !(cfg.lambda >= 0.0) {
        return Err(invalid("ALS needs max_iters ≥ 1, conv_tol > 0, lambda ≥ 0"));
    }
    if matches!(obs.data(), Observations::Replicate(_)) {
        return Err(invalid("ALS is defined for entrywise or linear observations"));
    }
    let (p1, p2) = obs.dims();
    let k = cfg.k;
    let mut g = rng::seeded(cfg.seed);
    let sd = 1.0 / (k as f64).sqrt();
    let mut u = rng::gaussian_matrix(&mut g, p1, k) * sd;
    let mut v = rng::gaussian_matrix(&mut g, p2, k) * sd;

    let mut state = Solver::new(obs, cfg.lambda);
    let mut f_prev = state.objective(&u, &v);
    let mut objective = vec![f_prev];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        u = state.solve_left(&v)?;
        v = state.solve_right(&u)?;
        let f = state.objective(&u, &v);
        objective.push(f);
        let change = (f_prev - f).abs();
        f_prev = f;
        if change <= cfg.conv_tol * f.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("ALS stopped at max_iters = {} before converging", cfg.max_iters);
    }
    Ok(AlsResult {
        u,
        v,
        iterations,
        converged,
        degenerate: state.degenerate,
        objective,
    })
}

struct Solver<'a> {
    obs: &'a ObservationSet,
    lambda: f64,
    by_row: Vec<Vec<(usize, f64)>>,
    by_col: Vec<Vec<(usize, f64)>>,
    degenerate: bool,
}

impl<'a> Solver<'a> {
    fn new(obs: &'a ObservationSet, lambda: f64) -> Self {
        let (p1, p2) = obs.dims();
        let mut by_row = vec![Vec::new(); p1];
        let mut by_col = vec![Vec::new(); p2];
        if let Some(entries) = obs.entries() {
            for e in entries {
                by_row[e.i].push((e.j, e.y));
                by_col[e.j].push((e.i, e.y));
            }
        }
        Self {
            obs,
            lambda,
            by_row,
            by_col,
            degenerate: false,
        }
    }

    fn objective(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
        let loss = match self.obs.data() {
            Observations::Entrywise(entries) => crate::numeric::compensated_sum(entries.iter().map(|e| {
                let d = u.row(e.i).dot(&v.row(e.j)) - e.y;
                d * d
            })),
            Observations::Linear(fs) => {
                let l = u * v.transpose();
                crate::numeric::compensated_sum(fs.iter().map(|f| {
                    let d = f.a.dot(&l) - f.y;
                    d * d
                }))
            }
            Observations::Replicate(_) => unreachable!("rejected on entry"),
        };
        loss + self.lambda * (u.norm_squared() + v.norm_squared())
    }

    /// Minimizes over U with V fixed.
    fn solve_left(&mut self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.obs.data() {
            Observations::Entrywise(_) => {
                let rows = std::mem::take(&mut self.by_row);
                let out = self.rowwise(&rows, v);
                self.by_row = rows;
                out
            }
            Observations::Linear(fs) => {
                // ⟨A, U Vᵀ⟩ = ⟨A V, U⟩
                let (p1, _) = self.obs.dims();
                let feats: Vec<(DMatrix<f64>, f64)> = fs.iter().map(|f| (f.a.as_ref() * v, f.y)).collect();
                self.stacked(&feats, p1, v.ncols())
            }
            Observations::Replicate(_) => unreachable!(),
        }
    }

    /// Minimizes over V with U fixed.
    fn solve_right(&mut self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.obs.data() {
            Observations::Entrywise(_) => {
                let cols = std::mem::take(&mut self.by_col);
                let out = self.rowwise(&cols, u);
                self.by_col = cols;
                out
            }
            Observations::Linear(fs) => {
                let (_, p2) = self.obs.dims();
                let feats: Vec<(DMatrix<f64>, f64)> = fs.iter().map(|f| (f.a.tr_mul(u), f.y)).collect();
                self.stacked(&feats, p2, u.ncols())
            }
            Observations::Replicate(_) => unreachable!(),
        }
    }

    /// Independent k×k ridge systems, one per row of the unknown factor.
    fn rowwise(&mut self, groups: &[Vec<(usize, f64)>], other: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = other.ncols();
        let mut out = DMatrix::zeros(groups.len(), k);
        for (i, group) in groups.iter().enumerate() {
            let mut a = DMatrix::<f64>::identity(k, k) * self.lambda;
            let mut b = DVector::<f64>::zeros(k);
            for &(j, y) in group {
                let x = other.row(j).transpose();
                a.syger(1.0, &x, &x, 1.0);
                b.axpy(y, &x, 1.0);
            }
            let sol = self.solve_spd(a, &b)?;
            out.row_mut(i).copy_from(&sol.transpose());
        }
        Ok(out)
    }

    /// One joint system for all of vec(X) when y ≈ ⟨F, X⟩ with F n×k.
    fn stacked(&mut self, feats: &[(DMatrix<f64>, f64)], n: usize, k: usize) -> Result<DMatrix<f64>> {
        let d = n * k;
        let mut a = DMatrix::<f64>::identity(d, d) * self.lambda;
        let mut b = DVector::<f64>::zeros(d);
        for (f, y) in feats {
            let x = DVector::from_column_slice(f.as_slice());
            a.syger(1.0, &x, &x, 1.0);
            b.axpy(*y, &x, 1.0);
        }
        let sol = self.solve_spd(a, &b)?;
        Ok(DMatrix::from_column_slice(n, k, sol.as_slice()))
    }

    fn solve_spd(&mut self, mut a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        a.fill_upper_triangle_with_lower_triangle();
        if let Some(ch) = a.clone().cholesky() {
            let x = ch.solve(b);
            if x.iter().all(|z| z.is_finite()) {
                return Ok(x);
            }
        }
        self.degenerate = true;
        Ok(numeric::pinv_sym(&a, 1e-12) * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Entry;
    use std::sync::Arc;

    fn full_obs(y: &DMatrix<f64>) -> ObservationSet {
        let mut entries = Vec::new();
        for i in 0..y.nrows() {
            for j in 0..y.ncols() {
                entries.push(Entry { i, j, y: y[(i, j)] });
            }
        }
        ObservationSet::entrywise(y.nrows(), y.ncols(), entries).unwrap()
    }

    #[test]
    fn exact_rank_one_factorization() {
        let mut g = rng::seeded(1);
        let y = rng::gaussian_matrix(&mut g, 6, 1) * rng::gaussian_matrix(&mut g, 1, 5);
        let cfg = EstimatorConfig {
            conv_tol: 1e-14,
            max_iters: 500,
            ..EstimatorConfig::als(1, 0.0)
        };
        let res = als_complete(&full_obs(&y), &cfg).unwrap();
        let l = &res.u * res.v.transpose();
        assert!((l - &y).norm() / y.norm() < 1e-6);
    }

    #[test]
    fn heavy_ridge_shrinks_to_zero() {
        let y = rng::gaussian_matrix(&mut rng::seeded(2), 5, 5);
        let res = als_complete(&full_obs(&y), &EstimatorConfig::als(2, 1e12)).unwrap();
        assert!(res.u.amax() < 1e-6 && res.v.amax() < 1e-6);
    }

    #[test]
    fn objective_monotone_entrywise_and_linear() {
        let mut g = rng::seeded(3);
        let truth = rng::gaussian_matrix(&mut g, 8, 2) * rng::gaussian_matrix(&mut g, 2, 7);
        let mut entries = Vec::new();
        for i in 0..8 {
            for j in 0..7 {
                if (i + 2 * j) % 3 != 1 {
                    entries.push(Entry { i, j, y: truth[(i, j)] + 0.1 * rng::gaussian(&mut g) });
                }
            }
        }
        let obs = ObservationSet::entrywise(8, 7, entries).unwrap();
        let res = als_complete(&obs, &EstimatorConfig::als(3, 0.1)).unwrap();
        for w in res.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }

        let lin: Vec<_> = (0..60)
            .map(|_| {
                let a = rng::gaussian_matrix(&mut g, 8, 7);
                let y = a.dot(&truth) + 0.05 * rng::gaussian(&mut g);
                crate::estimators::LinearObservation { a: Arc::new(a), y }
            })
            .collect();
        let obs = ObservationSet::linear(8, 7, lin).unwrap();
        let res = als_complete(&obs, &EstimatorConfig::als(2, 0.1)).unwrap();
        for w in res.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn singular_system_flagged() {
        // Row 2 is never observed, so its normal matrix is zero when λ = 0.
        let entries = vec![Entry { i: 0, j: 0, y: 1.0 }, Entry { i: 1, j: 1, y: 2.0 }];
        let obs = ObservationSet::entrywise(3, 2, entries).unwrap();
        let res = als_complete(&obs, &EstimatorConfig::als(1, 0.0)).unwrap();
        assert!(res.degenerate);
        assert!(res.u.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn deterministic_given_seed() {
        let y = rng::gaussian_matrix(&mut rng::seeded(4), 5, 4);
        let a = als_complete(&full_obs(&y), &EstimatorConfig::als(2, 0.3)).unwrap();
        let b = als_complete(&full_obs(&y), &EstimatorConfig::als(2, 0.3)).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.v, b.v);
    }
}
