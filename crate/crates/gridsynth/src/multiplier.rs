//! Quadratic multipliers bounding every system consistent with the data.
//!
//! Both bases live on the stacked space `(z, w)` with `z = (x, u)` and
//! `w` the successor residual. A system matrix `Ψ = [A B]` consistent with
//! the dataset satisfies `[Ψ I] · base · [Ψ I]ᵀ ⪰ 0` for the learned base
//! whenever the disturbance energy during collection was at most `d̄`, and
//! for the prior base whenever `ΨΨᵀ ⪯ ψ̄·I`. Nonnegative combinations stay
//! valid, which is what the synthesis LMIs exploit.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::data::DataSet;

#[derive(Error, Debug)]
pub enum MultiplierError {
    #[error("prior norm bound must be positive, got {0}")]
    NonPositivePriorBound(f64),
    #[error("nonnegative combination weights required, got τ_d = {tau_d}, τ_pr = {tau_pr}")]
    NegativeWeight { tau_d: f64, tau_pr: f64 },
}

/// Fixed multiplier bases; the scalar weights `τ_d`, `τ_pr` stay decision
/// variables inside the SDP.
#[derive(Clone, Debug)]
pub struct MultiplierTemplate {
    pub learned: Option<DMatrix<f64>>,
    pub prior: Option<DMatrix<f64>>,
    /// State dimension of the underlying system.
    pub n: usize,
    /// Input dimension of the underlying system.
    pub m: usize,
}

impl MultiplierTemplate {
    pub fn learned_only(dataset: &DataSet) -> Self {
        MultiplierTemplate {
            learned: Some(build_learned(dataset)),
            prior: None,
            n: dataset.n(),
            m: dataset.m(),
        }
    }

    pub fn with_prior(dataset: &DataSet, psi_bar: f64) -> Result<Self, MultiplierError> {
        Ok(MultiplierTemplate {
            learned: Some(build_learned(dataset)),
            prior: Some(build_prior(dataset.n(), dataset.m(), psi_bar)?),
            n: dataset.n(),
            m: dataset.m(),
        })
    }

    /// Side length of the multiplier bases: `(n + m) + n`.
    pub fn dim(&self) -> usize {
        2 * self.n + self.m
    }
}

/// Data-driven base
/// `[[-ZZᵀ, ZWᵀ], [WZᵀ, d̄·I - WWᵀ]]` with `W = X⁺`
/// (dynamics treated as totally unknown, disturbance input identity).
pub fn build_learned(dataset: &DataSet) -> DMatrix<f64> {
    let n = dataset.n();
    let m = dataset.m();
    let z = dataset.z();
    let w = dataset.w(None, None);
    let dim = n + m + n;
    let mut base = DMatrix::zeros(dim, dim);
    let zzt = &z * z.transpose();
    let zwt = &z * w.transpose();
    let wwt = &w * w.transpose();
    base.view_mut((0, 0), (n + m, n + m)).copy_from(&(-&zzt));
    base.view_mut((0, n + m), (n + m, n)).copy_from(&zwt);
    base.view_mut((n + m, 0), (n, n + m)).copy_from(&zwt.transpose());
    base.view_mut((n + m, n + m), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * dataset.d_bar - &wwt));
    0.5 * (&base + base.transpose())
}

/// Prior-knowledge base `blockdiag(-I_{n+m}, ψ̄·I_n)` encoding the norm
/// bound `ΨΨᵀ ⪯ ψ̄·I`.
pub fn build_prior(n: usize, m: usize, psi_bar: f64) -> Result<DMatrix<f64>, MultiplierError> {
    if psi_bar <= 0.0 {
        return Err(MultiplierError::NonPositivePriorBound(psi_bar));
    }
    let dim = n + m + n;
    let mut base = DMatrix::zeros(dim, dim);
    for i in 0..n + m {
        base[(i, i)] = -1.0;
    }
    for i in n + m..dim {
        base[(i, i)] = psi_bar;
    }
    Ok(base)
}

/// Numeric combination `τ_d·learned + τ_pr·prior` for fixed weights.
/// Inside the SDP the weights remain variables multiplying the bases.
pub fn combine(
    learned: &DMatrix<f64>,
    prior: &DMatrix<f64>,
    tau_d: f64,
    tau_pr: f64,
) -> Result<DMatrix<f64>, MultiplierError> {
    if tau_d < 0.0 || tau_pr < 0.0 {
        return Err(MultiplierError::NegativeWeight { tau_d, tau_pr });
    }
    Ok(learned * tau_d + prior * tau_pr)
}

/// Evaluates `[Ψ I] · base · [Ψ I]ᵀ` for a candidate system matrix; the
/// result is PSD exactly when Ψ satisfies the multiplier's quadratic
/// constraint.
pub fn quadratic_form(base: &DMatrix<f64>, psi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = psi.nrows();
    let nm = psi.ncols();
    assert_eq!(base.nrows(), nm + n, "base dimension mismatch");
    let mut stack = DMatrix::zeros(nm + n, n);
    stack.view_mut((0, 0), (nm, n)).copy_from(&psi.transpose());
    stack.view_mut((nm, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    stack.transpose() * base * stack
}

/// Permutes a base from `(z, w)` ordering to `(w, z)` ordering, the layout
/// the stability LMI consumes.
pub fn permute_to_residual_first(base: &DMatrix<f64>, n: usize, m: usize) -> DMatrix<f64> {
    let nm = n + m;
    assert_eq!(base.nrows(), nm + n);
    let mut out = DMatrix::zeros(nm + n, nm + n);
    out.view_mut((0, 0), (n, n)).copy_from(&base.view((nm, nm), (n, n)).into_owned());
    out.view_mut((0, n), (n, nm)).copy_from(&base.view((nm, 0), (n, nm)).into_owned());
    out.view_mut((n, 0), (nm, n)).copy_from(&base.view((0, nm), (nm, n)).into_owned());
    out.view_mut((n, n), (nm, nm)).copy_from(&base.view((0, 0), (nm, nm)).into_owned());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::min_eigenvalue;

    fn scalar_dataset() -> DataSet {
        // x⁺ = 0.5x + u, three noise-free samples.
        let u = DMatrix::from_row_slice(1, 3, &[1.0, -0.5, 0.25]);
        let mut x = DMatrix::zeros(1, 3);
        let mut x_plus = DMatrix::zeros(1, 3);
        let mut xv = 0.0;
        for k in 0..3 {
            x[(0, k)] = xv;
            xv = 0.5 * xv + u[(0, k)];
            x_plus[(0, k)] = xv;
        }
        DataSet { u, x, x_plus, d_bar: 0.0, ts: 1.0, seed: 0 }
    }

    #[test]
    fn empty_dataset_with_zero_bound_gives_zero_base() {
        let ds = DataSet {
            u: DMatrix::zeros(2, 0),
            x: DMatrix::zeros(3, 0),
            x_plus: DMatrix::zeros(3, 0),
            d_bar: 0.0,
            ts: 1.0,
            seed: 0,
        };
        let base = build_learned(&ds);
        assert_eq!(base.nrows(), 8);
        assert!(base.amax() == 0.0);
    }

    #[test]
    fn true_system_satisfies_learned_constraint() {
        let ds = scalar_dataset();
        let base = build_learned(&ds);
        let psi = DMatrix::from_row_slice(1, 2, &[0.5, 1.0]);
        let q = quadratic_form(&base, &psi);
        assert!(min_eigenvalue(&q) >= -1e-10, "true system violates its own data");
        // A wrong system violates it once the data pins the dynamics down.
        let wrong = DMatrix::from_row_slice(1, 2, &[0.9, 1.0]);
        let qw = quadratic_form(&base, &wrong);
        assert!(min_eigenvalue(&qw) < -1e-6);
    }

    #[test]
    fn inflating_energy_bound_shifts_residual_block() {
        let ds = scalar_dataset();
        let mut inflated = ds.clone();
        inflated.d_bar += 1.0;
        let delta = build_learned(&inflated) - build_learned(&ds);
        let mut expect = DMatrix::zeros(3, 3);
        expect[(2, 2)] = 1.0;
        assert!((delta - expect).amax() < 1e-14);
    }

    #[test]
    fn prior_base_structure_and_membership() {
        let (n, m) = (2usize, 1usize);
        let base = build_prior(n, m, 300.2).unwrap();
        for i in 0..n + m {
            assert_eq!(base[(i, i)], -1.0);
        }
        for i in n + m..2 * n + m {
            assert_eq!(base[(i, i)], 300.2);
        }
        assert!(build_prior(n, m, 0.0).is_err());

        // Any Ψ with ‖Ψ‖² ≤ ψ̄ satisfies the constraint.
        let psi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -0.3, 0.1, 4.0]);
        let svd = psi.clone().svd(false, false);
        let norm_sq: f64 =
            svd.singular_values.iter().copied().fold(0.0f64, f64::max).powi(2);
        let q = quadratic_form(&build_prior(n, m, norm_sq * 1.01).unwrap(), &psi);
        assert!(min_eigenvalue(&q) >= -1e-10);

        // With ψ̄ exactly ‖Ψ‖²₂ the worst direction touches equality.
        let q_tight = quadratic_form(&build_prior(n, m, norm_sq).unwrap(), &psi);
        let me = min_eigenvalue(&q_tight);
        assert!(me.abs() < 1e-10, "worst-direction eigenvalue {me}");
    }

    #[test]
    fn combination_is_conic() {
        let ds = scalar_dataset();
        let learned = build_learned(&ds);
        let prior = build_prior(ds.n(), ds.m(), 2.0).unwrap();
        let zero = combine(&learned, &prior, 0.0, 0.0).unwrap();
        assert!(zero.amax() == 0.0);
        let pure = combine(&learned, &prior, 1.5, 0.0).unwrap();
        assert!((pure - &learned * 1.5).amax() < 1e-14);
        let a = combine(&learned, &prior, 0.7, 0.3).unwrap();
        let b = combine(&learned, &prior, 0.2, 0.5).unwrap();
        let ab = combine(&learned, &prior, 0.9, 0.8).unwrap();
        assert!((a + b - ab).amax() < 1e-12);
        assert!(combine(&learned, &prior, -0.1, 0.0).is_err());
    }

    #[test]
    fn dataset_scaling_scales_base_quadratically() {
        let ds = scalar_dataset();
        let alpha = 3.0;
        let scaled = DataSet {
            u: &ds.u * alpha,
            x: &ds.x * alpha,
            x_plus: &ds.x_plus * alpha,
            d_bar: ds.d_bar * alpha * alpha,
            ts: ds.ts,
            seed: ds.seed,
        };
        let b1 = build_learned(&ds) * alpha * alpha;
        let b2 = build_learned(&scaled);
        assert!((b1 - b2).amax() < 1e-12);
    }

    #[test]
    fn permutation_swaps_blocks_consistently() {
        let ds = scalar_dataset();
        let base = build_learned(&ds);
        let (n, m) = (ds.n(), ds.m());
        let p = permute_to_residual_first(&base, n, m);
        assert_eq!(p[(0, 0)], base[(n + m, n + m)]);
        assert_eq!(p[(n, n)], base[(0, 0)]);
        assert_eq!(p[(0, n)], base[(n + m, 0)]);
        assert!((permute_inverse(&p, n, m) - base).amax() < 1e-14);
    }

    fn permute_inverse(p: &DMatrix<f64>, n: usize, m: usize) -> DMatrix<f64> {
        let nm = n + m;
        let mut out = DMatrix::zeros(nm + n, nm + n);
        out.view_mut((0, 0), (nm, nm)).copy_from(&p.view((n, n), (nm, nm)).into_owned());
        out.view_mut((0, nm), (nm, n)).copy_from(&p.view((n, 0), (nm, n)).into_owned());
        out.view_mut((nm, 0), (n, nm)).copy_from(&p.view((0, n), (n, nm)).into_owned());
        out.view_mut((nm, nm), (n, n)).copy_from(&p.view((0, 0), (n, n)).into_owned());
        out
    }
}
