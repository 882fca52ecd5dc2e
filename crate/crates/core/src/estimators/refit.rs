use nalgebra::{DMatrix, DVector};

use crate::error::{mismatch, Result};
use crate::linalg::TangentSpace;
use crate::numeric;

use super::{ObservationSet, Observations};

const RIDGE: f64 = 1e-10;

/// Least-squares fit of L = U_C M U_Rᵀ over the k×k core M.
pub fn refit(t: &TangentSpace, obs: &ObservationSet) -> Result<DMatrix<f64>> {
    if t.dims() != obs.dims() {
        return Err(mismatch(format!(
            "tangent space on {:?} but observations of {:?}",
            t.dims(),
            obs.dims()
        )));
    }
    let (p1, p2) = obs.dims();
    let k = t.rank();
    if k == 0 {
        return Ok(DMatrix::zeros(p1, p2));
    }
    let uc = t.col().basis();
    let ur = t.row().basis();
    let core = match obs.data() {
        Observations::Replicate(_) => {
            let mean = obs.replicate_mean().expect("replicate model");
            uc.tr_mul(&mean) * ur
        }
        Observations::Entrywise(entries) => {
            let rows = entries.iter().map(|e| {
                // L_ij = Σ_ab U_C[i,a] M_ab U_R[j,b]; vec(M) column-major.
                let mut phi = DVector::zeros(k * k);
                for b in 0..k {
                    let rb = ur[(e.j, b)];
                    for a in 0..k {
                        phi[a + k * b] = uc[(e.i, a)] * rb;
                    }
                }
                (phi, e.y)
            });
            least_squares(rows, k)?
        }
        Observations::Linear(fs) => {
            let rows = fs.iter().map(|f| {
                let reduced = uc.tr_mul(f.a.as_ref()) * ur;
                (DVector::from_column_slice(reduced.as_slice()), f.y)
            });
            least_squares(rows, k)?
        }
    };
    Ok(uc * core * ur.transpose())
}

fn least_squares<I: Iterator<Item = (DVector<f64>, f64)>>(rows: I, k: usize) -> Result<DMatrix<f64>> {
    let d = k * k;
    let mut a = DMatrix::<f64>::identity(d, d) * RIDGE;
    let mut b = DVector::<f64>::zeros(d);
    for (phi, y) in rows {
        a.syger(1.0, &phi, &phi, 1.0);
        b.axpy(y, &phi, 1.0);
    }
    a.fill_upper_triangle_with_lower_triangle();
    let x = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => numeric::pinv_sym(&a, 1e-14) * b,
    };
    Ok(DMatrix::from_column_slice(k, k, x.as_slice()))
}
