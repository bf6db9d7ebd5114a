//! Rank-revealing least squares on top of column-pivoted QR.

use nalgebra::{DMatrix, DVector};

/// Relative tolerance for rank decisions: a pivot counts as nonzero when its
/// magnitude exceeds `RANK_RTOL` times the largest pivot.
pub const RANK_RTOL: f64 = 1e-10;

/// Rank deficiency detected while solving a least-squares problem.
#[derive(Debug, Clone, Copy)]
pub struct RankDeficiency {
    /// Numerical rank found.
    pub rank: usize,
    /// Zero-based index (in the original column order) of the first column
    /// that the pivoted factorization could not treat as independent.
    pub dependent_column: usize,
}

/// Solves `min ||a x - b||` column by column, requiring `a` to have full
/// column rank at tolerance [`RANK_RTOL`].
pub fn ls_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, RankDeficiency> {
    let (n, k) = a.shape();
    assert_eq!(n, b.nrows(), "ls_solve: row counts differ");
    if k == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    if n < k {
        // Fewer equations than unknowns can never pin down all coefficients.
        return Err(RankDeficiency {
            rank: n,
            dependent_column: pivoted_column_at(&a.clone().col_piv_qr(), n.min(k), k),
        });
    }

    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let tol = RANK_RTOL * max_diag;
    let rank = (0..k).take_while(|&i| r[(i, i)].abs() > tol).count();
    if rank < k {
        return Err(RankDeficiency {
            rank,
            dependent_column: pivoted_column_at(&qr, rank, k),
        });
    }

    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let mut x = qtb.rows(0, k).into_owned();
    // Back-substitution on R x = Q'b.
    for col in 0..x.ncols() {
        for i in (0..k).rev() {
            let mut v = x[(i, col)];
            for j in (i + 1)..k {
                v -= r[(i, j)] * x[(j, col)];
            }
            x[(i, col)] = v / r[(i, i)];
        }
    }
    qr.p().inv_permute_rows(&mut x);
    Ok(x)
}

/// ω-weighted least squares: scales rows of `a` and `b` by `sqrt(ω_i)`.
pub fn ls_solve_weighted(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    weights: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>, RankDeficiency> {
    match weights {
        None => ls_solve(a, b),
        Some(w) => {
            let sw = w.map(f64::sqrt);
            let mut aw = a.clone();
            let mut bw = b.clone();
            for i in 0..aw.nrows() {
                aw.row_mut(i).scale_mut(sw[i]);
                bw.row_mut(i).scale_mut(sw[i]);
            }
            ls_solve(&aw, &bw)
        }
    }
}

/// Original column index sitting at pivoted position `pos`.
fn pivoted_column_at(
    qr: &nalgebra::linalg::ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pos: usize,
    k: usize,
) -> usize {
    // inv_permute_rows maps pivoted order back to the original order, so after
    // applying it to [0, 1, ..] the entry at original index j holds j's
    // pivoted position.
    let mut idx = DMatrix::from_fn(k, 1, |i, _| i as f64);
    qr.p().inv_permute_rows(&mut idx);
    (0..k)
        .find(|&j| idx[(j, 0)] as usize == pos)
        .unwrap_or(k - 1)
}

/// Weighted dot product `Σ_i ω_i x_i y_i` (ω ≡ 1 when absent).
pub fn wdot(x: &DVector<f64>, y: &DVector<f64>, weights: Option<&DVector<f64>>) -> f64 {
    match weights {
        None => x.dot(y),
        Some(w) => x.iter().zip(y.iter()).zip(w.iter()).map(|((a, b), c)| a * b * c).sum(),
    }
}

/// Element-wise ω·x (a copy of `x` when ω is absent).
pub fn wscale(x: &DVector<f64>, weights: Option<&DVector<f64>>) -> DVector<f64> {
    match weights {
        None => x.clone(),
        Some(w) => x.component_mul(w),
    }
}
