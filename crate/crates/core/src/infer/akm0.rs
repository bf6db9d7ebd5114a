//! Null-imposed (AKM0) confidence sets by closed-form test inversion.
//!
//! For a hypothesized coefficient θ the residuals are recomputed with the
//! null imposed, which makes the per-sector sums affine in θ:
//! `R̂_{θ,s} = r1_s − θ·gv_s` with `r1 = W'Ω(M_Z y)` and `gv = W'Ω(M_Z v)`
//! (`v` is the regressor for OLS and the treatment for IV — the
//! Anderson–Rubin generalization). Acceptance of θ is then the scalar
//! quadratic inequality
//!
//! ```text
//! (T1 − θ·T2)² ≤ z² · Σ_c (P_c − θ·Q_c)²
//! ```
//!
//! whose solution set is an interval, a union of two rays, or the whole
//! line depending on the sign of the leading coefficient and of the
//! discriminant.

use super::{confset::ConfidenceSet, z_critical, SectorProjection};
use crate::data::{Design, SharesMatrix, Shifters};
use crate::error::{Error, Result};
use crate::estimate::{build_shift_share, partial_out_vec, FitResult};
use crate::linalg;

const DEGENERATE_RTOL: f64 = 1e-12;

/// AKM0 confidence set for the coefficient of an existing fit. With
/// `sector_cluster` present the clustered meat is used.
pub fn ci_akm0(
    fit: &FitResult,
    shares: &SharesMatrix,
    projection: &SectorProjection,
    level: f64,
    sector_cluster: Option<&[String]>,
) -> Result<ConfidenceSet> {
    let t1 = linalg::wdot(&fit.x_dotdot, &fit.r_base, fit.obs_weight());
    invert(
        shares,
        projection,
        &fit.r_base,
        &fit.v,
        fit.obs_weight(),
        t1,
        fit.denom,
        level,
        sector_cluster,
    )
}

/// AKM0 confidence set for an IV design whose instrument may be orthogonal
/// to the treatment. The point estimate need not exist; the inverted test is
/// well defined regardless, and stays valid when the instrument is weak.
pub fn ci_akm0_weak_iv(
    design: &Design,
    shares: &SharesMatrix,
    shifters: &Shifters,
    level: f64,
    sector_cluster: Option<&[String]>,
) -> Result<ConfidenceSet> {
    let y2 = design
        .y2()
        .ok_or_else(|| Error::Dimension("IV confidence set requires a treatment variable".into()))?;
    let w = design.obs_weight();
    let z = design.controls();
    let x = build_shift_share(shares, shifters)?;
    let x_dd = partial_out_vec(z, &x, w)?;
    let y2_dd = partial_out_vec(z, y2, w)?;
    let y1_dd = partial_out_vec(z, design.y1(), w)?;
    let projection = super::sector_project(shares, &x_dd, w)?;
    let t1 = linalg::wdot(&x_dd, &y1_dd, w);
    let t2 = linalg::wdot(&x_dd, &y2_dd, w);
    invert(shares, &projection, &y1_dd, &y2_dd, w, t1, t2, level, sector_cluster)
}

#[allow(clippy::too_many_arguments)]
fn invert(
    shares: &SharesMatrix,
    projection: &SectorProjection,
    r_base: &nalgebra::DVector<f64>,
    v: &nalgebra::DVector<f64>,
    obs_weight: Option<&nalgebra::DVector<f64>>,
    t1: f64,
    t2: f64,
    level: f64,
    sector_cluster: Option<&[String]>,
) -> Result<ConfidenceSet> {
    let s = shares.n_sectors();
    if projection.x_hat_sector.len() != s {
        return Err(Error::Dimension("sector projection length differs from S".into()));
    }
    if let Some(labels) = sector_cluster {
        if labels.len() != s {
            return Err(Error::Dimension("sector cluster labels length differs from S".into()));
        }
    }
    let z = z_critical(level)?;

    let r1 = super::sector_sums(shares, r_base, obs_weight);
    let gv = super::sector_sums(shares, v, obs_weight);
    let groups = super::cluster_groups(sector_cluster, s);

    let mut sum_q2 = 0.0;
    let mut sum_pq = 0.0;
    let mut sum_p2 = 0.0;
    for g in &groups {
        let mut p = 0.0;
        let mut q = 0.0;
        for &j in g {
            p += projection.x_hat_sector[j] * r1[j];
            q += projection.x_hat_sector[j] * gv[j];
        }
        sum_q2 += q * q;
        sum_pq += p * q;
        sum_p2 += p * p;
    }

    let z2 = z * z;
    let a = t2 * t2 - z2 * sum_q2;
    let b = -2.0 * (t1 * t2 - z2 * sum_pq);
    let c = t1 * t1 - z2 * sum_p2;
    let a_scale = t2 * t2 + z2 * sum_q2;
    let b_scale = 2.0 * (t1 * t2).abs() + 2.0 * z2 * sum_pq.abs();
    let c_scale = t1 * t1 + z2 * sum_p2;

    solve_quadratic_set(a, b, c, a_scale, b_scale, c_scale, level, z)
}

/// Solves `{θ : aθ² + bθ + c ≤ 0}` with degenerate cases resolved relative
/// to the given magnitude scales.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_quadratic_set(
    a: f64,
    b: f64,
    c: f64,
    a_scale: f64,
    b_scale: f64,
    c_scale: f64,
    level: f64,
    z: f64,
) -> Result<ConfidenceSet> {
    if a.abs() <= DEGENERATE_RTOL * a_scale {
        // Linear inequality b·θ + c ≤ 0.
        if b.abs() <= DEGENERATE_RTOL * b_scale.max(1e-300) {
            return if c <= DEGENERATE_RTOL * c_scale {
                Ok(ConfidenceSet::full_line(level))
            } else {
                Err(Error::Data(
                    "empty confidence set: the test rejects every null".into(),
                ))
            };
        }
        let bound = -c / b;
        return Ok(if b > 0.0 {
            ConfidenceSet::interval(f64::NEG_INFINITY, bound, level, z)
        } else {
            ConfidenceSet::interval(bound, f64::INFINITY, level, z)
        });
    }

    // A discriminant at rounding level is a tangency: the boundary case
    // where the estimate itself sits on the edge of the set.
    let mut disc = b * b - 4.0 * a * c;
    let disc_scale = b * b + 4.0 * (a * c).abs();
    if disc.abs() <= DEGENERATE_RTOL * disc_scale {
        disc = 0.0;
    }

    if a > 0.0 {
        if disc < 0.0 {
            return Err(Error::Data(
                "empty confidence set: the test rejects every null".into(),
            ));
        }
        let (lo, hi) = quadratic_roots(a, b, disc);
        Ok(ConfidenceSet::interval(lo, hi, level, z))
    } else if disc <= 0.0 {
        Ok(ConfidenceSet::full_line(level))
    } else {
        let (lo, hi) = quadratic_roots(a, b, disc);
        Ok(ConfidenceSet::union_of_two_rays(lo, hi, level))
    }
}

/// Numerically stable sorted roots of `aθ² + bθ + c = 0` given the
/// discriminant.
fn quadratic_roots(a: f64, b: f64, disc: f64) -> (f64, f64) {
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    // c = q·(q/a)/... — recover the second root from the product a·r1·r2 = c
    // via c/q to avoid cancellation; q can be zero when b = disc = 0.
    let (r1, r2) = if q == 0.0 {
        let r = -b / (2.0 * a);
        (r, r)
    } else {
        let c = (b * b - disc) / (4.0 * a);
        (q / a, c / q)
    };
    if r1 <= r2 { (r1, r2) } else { (r2, r1) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Design, SharesMatrix, Shifters};
    use crate::estimate::ols_fit;
    use crate::infer::{sector_project, ConfidenceSetShape};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn shares_from(w: DMatrix<f64>) -> SharesMatrix {
        let regions = (0..w.nrows()).map(|i| format!("r{}", i + 1)).collect();
        let sectors = (0..w.ncols()).map(|j| format!("s{}", j + 1)).collect();
        SharesMatrix::new(regions, sectors, w).unwrap()
    }

    #[test]
    fn two_sector_identity_design_is_not_an_interval() {
        // With S = 2 the normalization (Σx̋²)²/z² − Σ𝒳̂²(Σw x̋)² is negative,
        // so the inverted test cannot bound the coefficient.
        let shares = shares_from(DMatrix::identity(2, 2));
        let shifters = Shifters::new(vec![1.0, -1.0]).unwrap();
        let design = Design::new(vec![0.3, -0.9]);
        let fit = ols_fit(&design, &shares, &shifters).unwrap();
        let proj = sector_project(&shares, &fit.x_dotdot, None).unwrap();
        let set = ci_akm0(&fit, &shares, &proj, 0.95, None).unwrap();
        assert_ne!(set.shape, ConfidenceSetShape::Interval);
        assert!(set.contains(fit.beta_hat));
        assert!(set.effective_se.is_infinite());
    }

    #[test]
    fn zero_residuals_with_positive_normalization_collapse_to_the_estimate() {
        // Many sectors, exact fit: the set degenerates to {β̂}. The sector
        // count must be large enough that the normalization term stays
        // positive; with very few sectors the same exact fit yields the
        // whole line instead.
        let w = DMatrix::from_fn(24, 8, |i, j| if i % 8 == j { 0.86 } else { 0.02 });
        let shares = shares_from(w);
        let shifters =
            Shifters::new(vec![1.0, -0.5, 0.25, 0.8, -1.2, 0.4, -0.3, 0.6]).unwrap();
        let x = crate::estimate::build_shift_share(&shares, &shifters).unwrap();
        let design = Design::new(x.iter().map(|v| 2.0 * v).collect());
        let fit = ols_fit(&design, &shares, &shifters).unwrap();
        assert!(fit.residuals.amax() < 1e-12);
        let proj = sector_project(&shares, &fit.x_dotdot, None).unwrap();
        let set = ci_akm0(&fit, &shares, &proj, 0.95, None).unwrap();
        assert_eq!(set.shape, ConfidenceSetShape::Interval);
        assert_relative_eq!(set.lo, 2.0, epsilon = 1e-6);
        assert_relative_eq!(set.hi, 2.0, epsilon = 1e-6);
    }

    /// Independent evaluation of the AKM0 test at one null: recompute
    /// restricted residuals from scratch and compare the t-statistic to the
    /// critical value.
    fn oracle_accepts(
        theta: f64,
        shares: &SharesMatrix,
        design: &Design,
        shifters: &Shifters,
        level: f64,
        sector_cluster: Option<&[String]>,
    ) -> bool {
        let w = shares.weights();
        let x = w * shifters.values();
        let z = design.controls();
        let n = design.n();

        // Restricted residuals via explicit normal equations.
        let target = design.y1() - &x * theta;
        let eps = if z.ncols() > 0 {
            let ztz = z.transpose() * z;
            let coef = ztz.clone().lu().solve(&(z.transpose() * &target)).unwrap();
            &target - z * coef
        } else {
            target.clone()
        };
        let x_dd = if z.ncols() > 0 {
            let ztz = z.transpose() * z;
            let coef = ztz.lu().solve(&(z.transpose() * &x)).unwrap();
            &x - z * coef
        } else {
            x.clone()
        };
        // Sector projection via normal equations.
        let wtw = w.transpose() * w;
        let x_hat = wtw.lu().solve(&(w.transpose() * &x_dd)).unwrap();
        let r_theta = w.transpose() * &eps;

        let groups = super::super::cluster_groups(sector_cluster, shares.n_sectors());
        let meat: f64 = groups
            .iter()
            .map(|g| {
                let t: f64 = g.iter().map(|&j| x_hat[j] * r_theta[j]).sum();
                t * t
            })
            .sum();
        let denom: f64 = (0..n).map(|i| x_dd[i] * x_dd[i]).sum();
        let beta_hat = x_dd.dot(design.y1()) / denom;
        let se_theta = meat.sqrt() / denom;
        if se_theta == 0.0 {
            return (beta_hat - theta).abs() == 0.0;
        }
        ((beta_hat - theta) / se_theta).abs() <= z_critical(level).unwrap()
    }

    #[test]
    fn closed_form_matches_grid_oracle_on_a_fixed_instance() {
        use rand::prelude::*;
        use rand::rngs::StdRng;
        let mut rng = StdRng::seed_from_u64(314);
        let n = 40;
        let s = 8;
        // Concentrated-ish rows so the inverted test actually bounds the
        // coefficient; evenly spread shares with few sectors give unbounded
        // sets by construction.
        let mut w = DMatrix::zeros(n, s);
        for i in 0..n {
            let dominant = 0.6 + 0.3 * rng.random::<f64>();
            let raw: Vec<f64> = (0..s).map(|_| rng.random::<f64>()).collect();
            let tot: f64 = raw.iter().sum();
            for j in 0..s {
                w[(i, j)] = raw[j] / tot * (1.0 - dominant);
            }
            w[(i, i % s)] += dominant;
        }
        let shares = shares_from(w);
        let shifters =
            Shifters::new((0..s).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).unwrap();
        let x = crate::estimate::build_shift_share(&shares, &shifters).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.5 * x[i] + rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let design = Design::new(y).with_intercept();
        let fit = ols_fit(&design, &shares, &shifters).unwrap();
        let proj = sector_project(&shares, &fit.x_dotdot, None).unwrap();
        let set = ci_akm0(&fit, &shares, &proj, 0.95, None).unwrap();
        assert_eq!(set.shape, ConfidenceSetShape::Interval, "set: {set:?}");

        let span = 6.0 * (set.hi - set.lo).abs().max(1.0);
        let grid: Vec<f64> = (0..20_000)
            .map(|k| fit.beta_hat - span / 2.0 + span * k as f64 / 19_999.0)
            .collect();
        let step = span / 19_999.0;
        let mut flips = Vec::new();
        let mut prev = None;
        for &theta in &grid {
            let oracle = oracle_accepts(theta, &shares, &design, &shifters, 0.95, None);
            assert_eq!(
                set.contains(theta),
                oracle,
                "membership mismatch at theta = {theta}"
            );
            if let Some(p) = prev {
                if p != oracle {
                    flips.push(theta);
                }
            }
            prev = Some(oracle);
        }
        assert_eq!(flips.len(), 2);
        assert!((flips[0] - set.lo).abs() <= step);
        assert!((flips[1] - set.hi).abs() <= step);
    }

    #[test]
    fn estimate_is_always_a_member() {
        use rand::prelude::*;
        use rand::rngs::StdRng;
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..40 {
            let n = rng.random_range(6..=25);
            let s = rng.random_range(2..=5);
            if n < s {
                continue;
            }
            let mut w = DMatrix::zeros(n, s);
            for i in 0..n {
                let raw: Vec<f64> = (0..s).map(|_| rng.random::<f64>() + 1e-3).collect();
                let tot: f64 = raw.iter().sum();
                for j in 0..s {
                    w[(i, j)] = raw[j] / tot;
                }
            }
            let shares = shares_from(w);
            let shifters =
                Shifters::new((0..s).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap();
            let x = crate::estimate::build_shift_share(&shares, &shifters).unwrap();
            let y: Vec<f64> = (0..n)
                .map(|i| 0.7 * x[i] + rng.random::<f64>() - 0.5)
                .collect();
            let design = Design::new(y).with_intercept();
            let Ok(fit) = ols_fit(&design, &shares, &shifters) else { continue };
            let Ok(proj) = sector_project(&shares, &fit.x_dotdot, None) else { continue };
            let set = ci_akm0(&fit, &shares, &proj, 0.95, None).unwrap();
            assert!(set.contains(fit.beta_hat));
        }
    }

    #[test]
    fn rescaling_shifters_rescales_the_set() {
        let w = DMatrix::from_fn(10, 3, |i, j| if i % 3 == j { 0.7 } else { 0.1 });
        let shares = shares_from(w);
        let vals = vec![1.0, -0.4, 0.2];
        let shifters = Shifters::new(vals.clone()).unwrap();
        let scaled = Shifters::new(vals.iter().map(|v| 2.0 * v).collect()).unwrap();
        let y = vec![0.4, -0.2, 0.9, 0.1, -0.6, 0.3, 0.8, -0.1, 0.2, 0.5];
        let design = Design::new(y).with_intercept();

        let f1 = ols_fit(&design, &shares, &shifters).unwrap();
        let p1 = sector_project(&shares, &f1.x_dotdot, None).unwrap();
        let s1 = ci_akm0(&f1, &shares, &p1, 0.95, None).unwrap();

        let f2 = ols_fit(&design, &shares, &scaled).unwrap();
        let p2 = sector_project(&shares, &f2.x_dotdot, None).unwrap();
        let s2 = ci_akm0(&f2, &shares, &p2, 0.95, None).unwrap();

        // β rescales by 1/c, and so do the set endpoints; t-statistics and
        // membership decisions are invariant.
        assert_eq!(s1.shape, s2.shape);
        assert_relative_eq!(s1.lo, 2.0 * s2.lo, max_relative = 1e-9);
        assert_relative_eq!(s1.hi, 2.0 * s2.hi, max_relative = 1e-9);
    }

    #[test]
    fn degenerate_quadratics_resolve_as_documented() {
        let z = z_critical(0.95).unwrap();
        // Leading coefficient zero, positive slope: left half-line.
        let set = solve_quadratic_set(0.0, 2.0, -4.0, 1.0, 2.0, 4.0, 0.95, z).unwrap();
        assert_eq!(set.shape, ConfidenceSetShape::Interval);
        assert!(set.lo.is_infinite() && set.lo < 0.0);
        assert_relative_eq!(set.hi, 2.0, epsilon = 1e-12);
        assert!(set.effective_se.is_infinite());

        // Negative slope: right half-line.
        let set = solve_quadratic_set(0.0, -2.0, -4.0, 1.0, 2.0, 4.0, 0.95, z).unwrap();
        assert_relative_eq!(set.lo, -2.0, epsilon = 1e-12);
        assert!(set.hi.is_infinite());

        // Constant ≤ 0: full line. Constant > 0: empty (error).
        let set = solve_quadratic_set(0.0, 0.0, -1.0, 1.0, 1.0, 1.0, 0.95, z).unwrap();
        assert_eq!(set.shape, ConfidenceSetShape::FullLine);
        assert!(solve_quadratic_set(0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.95, z).is_err());

        // Downward parabola, negative discriminant: full line.
        let set = solve_quadratic_set(-1.0, 0.0, -1.0, 1.0, 1.0, 1.0, 0.95, z).unwrap();
        assert_eq!(set.shape, ConfidenceSetShape::FullLine);

        // Downward parabola with real roots: two rays.
        let set = solve_quadratic_set(-1.0, 0.0, 4.0, 1.0, 1.0, 4.0, 0.95, z).unwrap();
        assert_eq!(set.shape, ConfidenceSetShape::UnionOfTwoRays);
        assert_relative_eq!(set.lo, -2.0, epsilon = 1e-12);
        assert_relative_eq!(set.hi, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn weak_instrument_set_is_computable_without_an_estimate() {
        // y2 exactly orthogonal to the instrument: iv_fit refuses, but the
        // inverted test still produces a set.
        let shares = shares_from(DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        ));
        let shifters = Shifters::new(vec![1.0, -1.0]).unwrap();
        let design = Design::new(vec![1.0, 2.0, 3.0, 4.0])
            .with_treatment(vec![1.0, -1.0, 1.0, -1.0]);
        assert!(crate::estimate::iv_fit(&design, &shares, &shifters).is_err());
        let set = ci_akm0_weak_iv(&design, &shares, &shifters, 0.95, None).unwrap();
        // With no identifying variation the set must be unbounded.
        assert!(!set.is_bounded());
        let _ = DVector::<f64>::zeros(1);
    }
}
