//! Link-benefit estimation from open-loop coupling strength.
//!
//! A least-squares fit of the one-step dynamics measures how strongly agent
//! `j`'s state and input move agent `i`'s state; the benefit of link `j → i`
//! is the Frobenius norm of that coupling block normalized by the agent's
//! own diagonal block.

use nalgebra::DMatrix;

use super::{CommTopology, TopoError};
use crate::data::{check_persistency, DataSet};

/// Least-squares estimate `[Â B̂] = X⁺ Zᵀ (Z Zᵀ)⁻¹`.
pub fn least_squares_model(dataset: &DataSet) -> Result<DMatrix<f64>, TopoError> {
    let report = check_persistency(dataset);
    if !report.pass {
        return Err(TopoError::RankDeficient { rank: report.rank, required: report.required });
    }
    let z = dataset.z();
    let zzt = &z * z.transpose();
    let rhs = &z * dataset.x_plus.transpose();
    let sol = zzt
        .lu()
        .solve(&rhs)
        .ok_or(TopoError::RankDeficient { rank: report.rank, required: report.required })?;
    Ok(sol.transpose())
}

/// Benefit matrix `η` over agent pairs; diagonal entries are zero (unused).
pub fn estimate_link_benefits(
    dataset: &DataSet,
    agent_states: &[Vec<usize>],
    agent_inputs: &[Vec<usize>],
) -> Result<DMatrix<f64>, TopoError> {
    let model = least_squares_model(dataset)?;
    let n = dataset.n();
    let m_agents = agent_states.len();
    if agent_inputs.len() != m_agents {
        return Err(TopoError::Dimension("agent state/input partitions differ".into()));
    }

    let block_norm = |i: usize, j: usize| -> f64 {
        let mut sum = 0.0;
        for &row in &agent_states[i] {
            for &col in &agent_states[j] {
                sum += model[(row, col)].powi(2);
            }
            for &col in &agent_inputs[j] {
                sum += model[(row, n + col)].powi(2);
            }
        }
        sum.sqrt()
    };

    let mut eta = DMatrix::zeros(m_agents, m_agents);
    for i in 0..m_agents {
        let own = block_norm(i, i);
        if own <= 0.0 {
            return Err(TopoError::Dimension(format!(
                "agent {i} has a zero diagonal block; benefits undefined"
            )));
        }
        for j in 0..m_agents {
            if i != j {
                eta[(i, j)] = block_norm(i, j) / own;
            }
        }
    }
    Ok(eta)
}

/// Convenience: benefits for the per-bus agent partition of a topology.
pub fn benefits_for_topology(
    dataset: &DataSet,
    topology: &CommTopology,
) -> Result<DMatrix<f64>, TopoError> {
    estimate_link_benefits(dataset, &topology.agent_states, &topology.agent_inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Noise-free data from known dynamics, rich enough for an exact fit.
    fn dataset_from(a: &DMatrix<f64>, b: &DMatrix<f64>, len: usize, seed: u64) -> DataSet {
        let n = a.nrows();
        let m = b.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(n, len);
        let mut x_plus = DMatrix::zeros(n, len);
        let u = DMatrix::from_fn(m, len, |_, _| rng.gen_range(-1.0..1.0));
        let mut xv = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        for k in 0..len {
            x.set_column(k, &xv);
            xv = a * &xv + b * u.column(k);
            x_plus.set_column(k, &xv);
        }
        DataSet { u, x, x_plus, d_bar: 0.0, ts: 1.0, seed }
    }

    #[test]
    fn decoupled_agents_have_zero_cross_benefit() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.7]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let ds = dataset_from(&a, &b, 30, 1);
        let eta =
            estimate_link_benefits(&ds, &[vec![0], vec![1]], &[vec![0], vec![1]]).unwrap();
        assert!(eta[(0, 1)].abs() < 1e-10);
        assert!(eta[(1, 0)].abs() < 1e-10);
    }

    #[test]
    fn known_coupling_matches_hand_computed_ratio() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.6]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 0.8]);
        let ds = dataset_from(&a, &b, 40, 2);
        let eta =
            estimate_link_benefits(&ds, &[vec![0], vec![1]], &[vec![0], vec![1]]).unwrap();
        // Noise-free least squares recovers (A, B) exactly, so the ratio is
        // computable by hand from the true entries.
        let num01 = (a[(0, 1)].powi(2) + b[(0, 1)].powi(2)).sqrt();
        let den0 = (a[(0, 0)].powi(2) + b[(0, 0)].powi(2)).sqrt();
        assert!((eta[(0, 1)] - num01 / den0).abs() < 1e-8);
        let num10 = (a[(1, 0)].powi(2) + b[(1, 0)].powi(2)).sqrt();
        let den1 = (a[(1, 1)].powi(2) + b[(1, 1)].powi(2)).sqrt();
        assert!((eta[(1, 0)] - num10 / den1).abs() < 1e-8);
    }

    #[test]
    fn benefits_invariant_to_uniform_data_scaling() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.6]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 0.8]);
        let ds = dataset_from(&a, &b, 40, 3);
        let scaled = DataSet {
            u: &ds.u * 7.5,
            x: &ds.x * 7.5,
            x_plus: &ds.x_plus * 7.5,
            d_bar: ds.d_bar,
            ts: ds.ts,
            seed: ds.seed,
        };
        let parts = (vec![vec![0], vec![1]], vec![vec![0], vec![1]]);
        let e1 = estimate_link_benefits(&ds, &parts.0, &parts.1).unwrap();
        let e2 = estimate_link_benefits(&scaled, &parts.0, &parts.1).unwrap();
        assert!((e1 - e2).amax() < 1e-9);
    }

    #[test]
    fn rank_deficient_data_is_rejected() {
        let ds = DataSet {
            u: DMatrix::zeros(1, 5),
            x: DMatrix::zeros(2, 5),
            x_plus: DMatrix::zeros(2, 5),
            d_bar: 0.0,
            ts: 1.0,
            seed: 0,
        };
        assert!(matches!(
            estimate_link_benefits(&ds, &[vec![0], vec![1]], &[vec![0], vec![]]),
            Err(TopoError::RankDeficient { .. })
        ));
    }
}
