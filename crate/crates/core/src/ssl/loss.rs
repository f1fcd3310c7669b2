//! Cross-view objectives with analytic gradients, computed in `f64`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Variance floor used when standardizing Barlow Twins columns.
pub const BT_EPS: f64 = 1e-6;
/// Added inside the square root of the VICReg standard deviation.
pub const VICREG_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_a: Array2<f64>,
    pub grad_b: Array2<f64>,
    /// Columns whose batch variance fell below the standardization floor.
    pub degenerate_dims: usize,
}

fn check_pair(za: &ArrayView2<f64>, zb: &ArrayView2<f64>) -> Result<()> {
    if za.dim() != zb.dim() {
        return Err(Error::Argument(format!(
            "view embeddings differ in shape: {:?} vs {:?}",
            za.dim(),
            zb.dim()
        )));
    }
    if za.nrows() < 2 {
        return Err(Error::Argument("batch statistics need at least 2 rows".into()));
    }
    Ok(())
}

struct Standardized {
    z: Array2<f64>,
    sigma: Array1<f64>,
    clamped: Vec<bool>,
}

/// Column standardization with biased variance and `σ = sqrt(max(var, ε))`.
fn standardize(z: &ArrayView2<f64>) -> Standardized {
    let n = z.nrows() as f64;
    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = z - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let clamped: Vec<bool> = var.iter().map(|&v| v < BT_EPS).collect();
    let sigma = var.mapv(|v| v.max(BT_EPS).sqrt());
    Standardized {
        z: centered / &sigma,
        sigma,
        clamped,
    }
}

/// Backpropagates through [`standardize`].
fn standardize_backward(s: &Standardized, grad: &Array2<f64>) -> Array2<f64> {
    let mean_g = grad.mean_axis(Axis(0)).expect("non-empty batch");
    let mean_gz = (grad * &s.z).mean_axis(Axis(0)).expect("non-empty batch");
    let mut out = grad - &mean_g;
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        if !s.clamped[j] {
            col.scaled_add(-mean_gz[j], &s.z.column(j));
        }
        col /= s.sigma[j];
    }
    out
}

/// `Σ_i (1 − C_ii)² + λ Σ_{i≠j} C_ij²` with `C` the cross-correlation of
/// the column-standardized views.
pub fn barlow_twins_loss(za: ArrayView2<f64>, zb: ArrayView2<f64>, lambda: f64) -> Result<LossOutput> {
    check_pair(&za, &zb)?;
    let n = za.nrows() as f64;
    let sa = standardize(&za);
    let sb = standardize(&zb);
    let c = sa.z.t().dot(&sb.z) / n;
    let d = c.nrows();
    let mut loss = 0.0;
    let mut g = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let v = c[[i, j]];
            if i == j {
                loss += (1.0 - v) * (1.0 - v);
                g[[i, j]] = -2.0 * (1.0 - v);
            } else {
                loss += lambda * v * v;
                g[[i, j]] = 2.0 * lambda * v;
            }
        }
    }
    let grad_za_hat = sb.z.dot(&g.t()) / n;
    let grad_zb_hat = sa.z.dot(&g) / n;
    let degenerate_dims = sa.clamped.iter().chain(&sb.clamped).filter(|&&c| c).count();
    Ok(LossOutput {
        loss,
        grad_a: standardize_backward(&sa, &grad_za_hat),
        grad_b: standardize_backward(&sb, &grad_zb_hat),
        degenerate_dims,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VicregCoeffs {
    pub lambda_inv: f64,
    pub mu_var: f64,
    pub nu_cov: f64,
    pub gamma: f64,
}

impl Default for VicregCoeffs {
    fn default() -> Self {
        Self {
            lambda_inv: 25.0,
            mu_var: 25.0,
            nu_cov: 1.0,
            gamma: 1.0,
        }
    }
}

/// Unweighted VICReg terms; `variance` and `covariance` sum both views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VicregTerms {
    pub invariance: f64,
    pub variance: f64,
    pub covariance: f64,
}

/// Returns `(v(Z), c(Z), ∂v/∂Z, ∂c/∂Z)` using the unbiased batch covariance.
fn vicreg_regularizers(z: &ArrayView2<f64>, gamma: f64) -> (f64, f64, Array2<f64>, Array2<f64>) {
    let (n, d) = z.dim();
    let nm1 = (n - 1) as f64;
    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
    let xc = z - &mean;
    let cov = xc.t().dot(&xc) / nm1;
    let mut v = 0.0;
    let mut gv = Array2::<f64>::zeros((n, d));
    for j in 0..d {
        let std = (cov[[j, j]] + VICREG_EPS).sqrt();
        if std < gamma {
            v += gamma - std;
            let scale = -1.0 / (d as f64 * std * nm1);
            gv.column_mut(j).assign(&(&xc.column(j) * scale));
        }
    }
    v /= d as f64;
    let mut off = cov;
    off.diag_mut().fill(0.0);
    let c = off.mapv(|x| x * x).sum() / d as f64;
    let gc = xc.dot(&off) * (4.0 / (d as f64 * nm1));
    let gc_mean = gc.mean_axis(Axis(0)).expect("non-empty batch");
    (v, c, gv, gc - &gc_mean)
}

pub fn vicreg_terms(za: ArrayView2<f64>, zb: ArrayView2<f64>, coeffs: &VicregCoeffs) -> Result<VicregTerms> {
    check_pair(&za, &zb)?;
    let invariance = (&za - &zb).mapv(|x| x * x).mean().expect("non-empty batch");
    let (va, ca, _, _) = vicreg_regularizers(&za, coeffs.gamma);
    let (vb, cb, _, _) = vicreg_regularizers(&zb, coeffs.gamma);
    Ok(VicregTerms {
        invariance,
        variance: va + vb,
        covariance: ca + cb,
    })
}

/// `λ·MSE(Za, Zb) + μ·[v(Za) + v(Zb)] + ν·[c(Za) + c(Zb)]`.
pub fn vicreg_loss(za: ArrayView2<f64>, zb: ArrayView2<f64>, coeffs: &VicregCoeffs) -> Result<LossOutput> {
    check_pair(&za, &zb)?;
    let (n, d) = za.dim();
    let diff = &za - &zb;
    let inv = diff.mapv(|x| x * x).sum() / (n * d) as f64;
    let g_inv = &diff * (2.0 * coeffs.lambda_inv / (n * d) as f64);
    let (va, ca, gva, gca) = vicreg_regularizers(&za, coeffs.gamma);
    let (vb, cb, gvb, gcb) = vicreg_regularizers(&zb, coeffs.gamma);
    let loss = coeffs.lambda_inv * inv + coeffs.mu_var * (va + vb) + coeffs.nu_cov * (ca + cb);
    let grad_a = &g_inv + &(gva * coeffs.mu_var) + &(gca * coeffs.nu_cov);
    let grad_b = -&g_inv + &(gvb * coeffs.mu_var) + &(gcb * coeffs.nu_cov);
    let low_variance = |z: &ArrayView2<f64>| z.var_axis(Axis(0), 1.0).iter().filter(|&&v| v < BT_EPS).count();
    let degenerate_dims = low_variance(&za) + low_variance(&zb);
    Ok(LossOutput {
        loss,
        grad_a,
        grad_b,
        degenerate_dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::ssl::max_relative_error as max_rel_error;
    use ndarray::{array, s};
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut r))
    }

    /// Rows of ±1 sign patterns: zero-mean, unit-variance, uncorrelated columns.
    fn hadamard_batch() -> Array2<f64> {
        array![
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0],
            [-1.0, -1.0, 1.0]
        ]
    }

    #[test]
    fn bt_identity_correlation_is_zero() {
        let z = hadamard_batch();
        let out = barlow_twins_loss(z.view(), z.view(), 5e-3).unwrap();
        assert!(out.loss.abs() < 1e-24, "{}", out.loss);
        assert!(out.grad_a.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn bt_affine_invariance_and_permutation() {
        let za = random(16, 5, 1);
        let zb = random(16, 5, 2);
        let base = barlow_twins_loss(za.view(), zb.view(), 5e-3).unwrap().loss;
        let scaled = za.clone() * 3.0 + 7.0;
        let b2 = barlow_twins_loss(scaled.view(), zb.view(), 5e-3).unwrap().loss;
        assert!((base - b2).abs() < 1e-9);
        let rev_a = za.slice(s![..;-1, ..]).to_owned();
        let rev_b = zb.slice(s![..;-1, ..]).to_owned();
        let b3 = barlow_twins_loss(rev_a.view(), rev_b.view(), 5e-3).unwrap().loss;
        assert!((base - b3).abs() < 1e-9);
    }

    #[test]
    fn bt_independent_views_score_about_d() {
        let d = 8;
        let za = random(20_000, d, 3);
        let zb = random(20_000, d, 4);
        let loss = barlow_twins_loss(za.view(), zb.view(), 5e-3).unwrap().loss;
        assert!((loss - d as f64).abs() <= 0.05 * d as f64, "{loss}");
    }

    #[test]
    fn bt_constant_column_is_flagged() {
        let mut za = random(6, 3, 5);
        za.column_mut(1).fill(2.0);
        let out = barlow_twins_loss(za.view(), random(6, 3, 6).view(), 5e-3).unwrap();
        assert_eq!(out.degenerate_dims, 1);
        assert!(out.loss.is_finite());
    }

    #[test]
    fn vicreg_trivial_cases() {
        let c = VicregCoeffs::default();
        let z = hadamard_batch() * 2.0;
        let t = vicreg_terms(z.view(), z.view(), &c).unwrap();
        assert_eq!(t.invariance, 0.0);
        assert_eq!(t.variance, 0.0);
        assert!(t.covariance.abs() < 1e-24);

        let constant = Array2::from_elem((5, 4), 0.3);
        let t = vicreg_terms(constant.view(), constant.view(), &c).unwrap();
        assert_eq!(t.invariance, 0.0);
        // std = sqrt(0 + ε) per dimension in both views.
        let expected = 2.0 * (c.gamma - VICREG_EPS.sqrt());
        assert!((t.variance - expected).abs() < 1e-12);
        let loss = vicreg_loss(constant.view(), constant.view(), &c).unwrap().loss;
        assert!((loss - c.mu_var * expected).abs() < 1e-9);
    }

    #[test]
    fn shape_errors() {
        let a = random(4, 3, 1);
        let b = random(4, 2, 1);
        assert!(barlow_twins_loss(a.view(), b.view(), 5e-3).is_err());
        let one = random(1, 3, 1);
        assert!(vicreg_loss(one.view(), one.view(), &VicregCoeffs::default()).is_err());
    }

    fn finite_diff(f: &dyn Fn(&Array2<f64>, &Array2<f64>) -> f64, za: &Array2<f64>, zb: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = 1e-4;
        let mut ga = Array2::zeros(za.dim());
        let mut gb = Array2::zeros(zb.dim());
        for idx in ndarray::indices(za.dim()) {
            let (mut p, mut m) = (za.clone(), za.clone());
            p[idx] += h;
            m[idx] -= h;
            ga[idx] = (f(&p, zb) - f(&m, zb)) / (2.0 * h);
            let (mut p, mut m) = (zb.clone(), zb.clone());
            p[idx] += h;
            m[idx] -= h;
            gb[idx] = (f(za, &p) - f(za, &m)) / (2.0 * h);
        }
        (ga, gb)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let coeffs = VicregCoeffs::default();
        for seed in 0..3 {
            let za = random(8, 6, 100 + seed);
            let zb = &za * 0.5 + random(8, 6, 200 + seed) * 0.5;
            let bt = |a: &Array2<f64>, b: &Array2<f64>| barlow_twins_loss(a.view(), b.view(), 5e-3).unwrap().loss;
            let out = barlow_twins_loss(za.view(), zb.view(), 5e-3).unwrap();
            let (na, nb) = finite_diff(&bt, &za, &zb);
            assert!(max_rel_error(&out.grad_a, &na) <= 1e-4);
            assert!(max_rel_error(&out.grad_b, &nb) <= 1e-4);

            let vic = |a: &Array2<f64>, b: &Array2<f64>| vicreg_loss(a.view(), b.view(), &coeffs).unwrap().loss;
            let out = vicreg_loss(za.view(), zb.view(), &coeffs).unwrap();
            let (na, nb) = finite_diff(&vic, &za, &zb);
            assert!(max_rel_error(&out.grad_a, &na) <= 1e-4);
            assert!(max_rel_error(&out.grad_b, &nb) <= 1e-4);
        }
    }
}
