//! Elimination of load buses from the susceptance matrix via the Schur
//! complement, producing the effective coupling seen by the inertia buses.

use nalgebra::DMatrix;

use super::{GridCase, GridError};

/// Network quantities after eliminating load buses.
#[derive(Clone, Debug)]
pub struct ReducedNetwork {
    /// Effective inertia-bus susceptance (Schur complement), symmetric.
    pub j: DMatrix<f64>,
    /// Maps load-bus injections onto inertia buses.
    pub l: DMatrix<f64>,
    /// Maps inertia-bus angles to load-bus angles.
    pub f: DMatrix<f64>,
    /// Effective damping including load damping reflected through the network.
    pub d_tilde: DMatrix<f64>,
}

const MIN_INTERIOR_SV: f64 = 1e-9;

pub fn kron_reduce(case: &GridCase) -> Result<ReducedNetwork, GridError> {
    let ni = case.n_inertia;
    let nl = case.n_load;
    let b = &case.susceptance;
    let d = case.damping_matrix();

    if nl == 0 {
        return Ok(ReducedNetwork {
            j: b.clone(),
            l: DMatrix::zeros(ni, 0),
            f: DMatrix::zeros(0, ni),
            d_tilde: d,
        });
    }

    let b_nn = b.view((0, 0), (ni, ni)).into_owned();
    let b_nl = b.view((0, ni), (ni, nl)).into_owned();
    let b_ln = b.view((ni, 0), (nl, ni)).into_owned();
    let b_ll = b.view((ni, ni), (nl, nl)).into_owned();

    let svd = b_ll.clone().svd(false, false);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if min_sv <= MIN_INTERIOR_SV {
        return Err(GridError::SingularLoadBlock { min_sv, max_sv });
    }

    let lu = b_ll.clone().lu();
    let inv_b_ll_b_ln = lu
        .solve(&b_ln)
        .ok_or(GridError::SingularLoadBlock { min_sv, max_sv })?;
    // LU of the transpose solves the right-division B_NL · B_LL⁻¹.
    let l = b_ll
        .transpose()
        .lu()
        .solve(&b_nl.transpose())
        .ok_or(GridError::SingularLoadBlock { min_sv, max_sv })?
        .transpose();

    let mut j = b_nn - &b_nl * &inv_b_ll_b_ln;
    let asym = (&j - j.transpose()).amax();
    debug_assert!(asym <= 1e-10 * j.amax().max(1.0), "Schur complement asymmetry {asym}");
    j = 0.5 * (&j + j.transpose());

    let f = -inv_b_ll_b_ln;
    let d_tilde = &d - &l * DMatrix::from_diagonal(&case.load_damping) * &f;

    Ok(ReducedNetwork { j, l, f, d_tilde })
}
