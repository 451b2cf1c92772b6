//! Cost-weight construction: reserve-based input penalties, tie-line angle
//! penalties, frequency and frequency-integral penalties, and their
//! factorization into the performance-output matrices.

use nalgebra::DMatrix;

use super::SynthError;
use crate::grid::{GridCase, ReducedNetwork, StateMap};

/// Performance-output matrices together with the underlying quadratic
/// weights they factor.
#[derive(Clone, Debug)]
pub struct WeightSet {
    /// State weight rows stacked over zero input rows: `p_e × n`.
    pub c_e: DMatrix<f64>,
    /// Input weight rows stacked under zero state rows: `p_e × m`.
    pub d_eu: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl WeightSet {
    pub fn p_e(&self) -> usize {
        self.c_e.nrows()
    }

    /// Builds `C_e`, `D_eu` from already-factored weight roots.
    pub fn from_roots(q_root: DMatrix<f64>, r_root: DMatrix<f64>) -> Self {
        let n = q_root.ncols();
        let m = r_root.ncols();
        let p_e = q_root.nrows() + r_root.nrows();
        let mut c_e = DMatrix::zeros(p_e, n);
        c_e.view_mut((0, 0), (q_root.nrows(), n)).copy_from(&q_root);
        let mut d_eu = DMatrix::zeros(p_e, m);
        d_eu.view_mut((q_root.nrows(), 0), (r_root.nrows(), m)).copy_from(&r_root);
        let q = q_root.transpose() * &q_root;
        let r = r_root.transpose() * &r_root;
        WeightSet { c_e, d_eu, q, r }
    }
}

/// Scales shaping the state weight.
#[derive(Clone, Copy, Debug)]
pub struct WeightScales {
    /// Frequency-integral (angle) penalty scale.
    pub q_ia: f64,
    /// Frequency penalty scale.
    pub q2: f64,
    /// Cap on per-device input weights.
    pub r_bar: f64,
    /// Diagonal jitter making the state weight strictly positive definite
    /// before factorization.
    pub jitter: f64,
}

impl Default for WeightScales {
    fn default() -> Self {
        WeightScales { q_ia: 0.2, q2: 0.8, r_bar: 1e3, jitter: 1e-9 }
    }
}

/// Builds LQR-style weights for the frequency-regulation objective.
///
/// Participation factors come from the reserves (`α_i` proportional to the
/// device reserve), giving input weights `r_i = min(1/α_i, r̄)`. The angle
/// block carries the tie-line flow penalty for the selected lines plus the
/// frequency-integral penalty; device power states are not penalized beyond
/// the jitter.
pub fn build_weights(
    reserves: &[f64],
    tie_line_selection: &[usize],
    case: &GridCase,
    reduced: &ReducedNetwork,
    state_map: &StateMap,
    scales: &WeightScales,
) -> Result<WeightSet, SynthError> {
    let ni = case.n_inertia;
    if reserves.len() != ni {
        return Err(SynthError::Weights(format!(
            "{} reserves for {} devices",
            reserves.len(),
            ni
        )));
    }
    let total: f64 = reserves.iter().sum();
    if total <= 0.0 || reserves.iter().any(|&r| r <= 0.0) {
        return Err(SynthError::Weights("reserves must be positive".into()));
    }

    // r_i = min(1/α_i, r̄) with α_i the reserve share.
    let r_diag: Vec<f64> =
        reserves.iter().map(|&res| (total / res).min(scales.r_bar)).collect();
    let r_root = DMatrix::from_fn(ni, ni, |i, j| if i == j { r_diag[i].sqrt() } else { 0.0 });

    // Tie-line penalty on the angle block: rows select line flows
    // b_ℓ·(θ_from − θ_to), with load-bus angles eliminated through the
    // reduction map.
    let n = state_map.n();
    let q1 = if tie_line_selection.is_empty() {
        DMatrix::zeros(ni, ni)
    } else {
        let nb = case.n_buses();
        let nl = case.lines.len();
        let mut selector = DMatrix::zeros(tie_line_selection.len(), nl);
        for (row, &line_idx) in tie_line_selection.iter().enumerate() {
            if line_idx >= nl {
                return Err(SynthError::Weights(format!(
                    "tie-line index {line_idx} out of range ({nl} lines)"
                )));
            }
            selector[(row, line_idx)] = 1.0;
        }
        let mut b_diag = DMatrix::zeros(nl, nl);
        let mut incidence = DMatrix::zeros(nl, nb);
        for (l, line) in case.lines.iter().enumerate() {
            b_diag[(l, l)] = line.susceptance;
            incidence[(l, line.from)] = 1.0;
            incidence[(l, line.to)] = -1.0;
        }
        // Full angle vector in terms of inertia-bus angles: [I; F].
        let mut angle_map = DMatrix::zeros(nb, ni);
        angle_map.view_mut((0, 0), (ni, ni)).copy_from(&DMatrix::identity(ni, ni));
        if case.n_load > 0 {
            angle_map.view_mut((ni, 0), (case.n_load, ni)).copy_from(&reduced.f);
        }
        let q1_root = -(&selector * &b_diag * &incidence * &angle_map);
        q1_root.transpose() * q1_root
    };

    let mut q = DMatrix::zeros(n, n);
    let th = state_map.theta();
    q.view_mut((th.start, th.start), (ni, ni))
        .copy_from(&(&q1 + DMatrix::<f64>::identity(ni, ni) * scales.q_ia));
    let om = state_map.omega();
    q.view_mut((om.start, om.start), (ni, ni))
        .copy_from(&(DMatrix::<f64>::identity(ni, ni) * scales.q2));
    // Device power states stay unpenalized; the jitter keeps Q ≻ 0 so the
    // factorization exists.
    for i in 0..n {
        q[(i, i)] += scales.jitter;
    }

    let chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| SynthError::Weights("state weight is not positive definite".into()))?;
    let q_root = chol.l().transpose();

    Ok(WeightSet::from_roots(q_root, r_root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::case::{BusDevice, BusRecord, CaseFile, LineRecord, OMEGA0_60HZ};
    use crate::grid::{build_continuous, kron_reduce, GridCase};

    fn case_with_lines() -> (GridCase, ReducedNetwork, StateMap) {
        let file = CaseFile {
            omega0: OMEGA0_60HZ,
            buses: vec![
                BusRecord {
                    index: 1,
                    device: BusDevice::IbrVsg { m: 3.0, d: 1.0, nu_ibr: 0.2 },
                    shunt_susceptance: 0.2,
                },
                BusRecord {
                    index: 2,
                    device: BusDevice::IbrVsg { m: 4.0, d: 1.2, nu_ibr: 0.3 },
                    shunt_susceptance: 0.0,
                },
                BusRecord { index: 3, device: BusDevice::Load { mu: 0.0 }, shunt_susceptance: 0.0 },
            ],
            lines: vec![
                LineRecord { from: 1, to: 2, susceptance: 5.0 },
                LineRecord { from: 2, to: 3, susceptance: 4.0 },
                LineRecord { from: 1, to: 3, susceptance: 3.0 },
            ],
        };
        let case = GridCase::from_file_repr(file).unwrap();
        let red = kron_reduce(&case).unwrap();
        let (_, _, _, map) = build_continuous(&case, &red).unwrap();
        (case, red, map)
    }

    #[test]
    fn equal_reserves_share_uniformly() {
        let (case, red, map) = case_with_lines();
        let ws = build_weights(
            &[1.0, 1.0],
            &[],
            &case,
            &red,
            &map,
            &WeightScales::default(),
        )
        .unwrap();
        // Two devices with equal reserves: α = 1/2 so r = 2.
        assert!((ws.r[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((ws.r[(1, 1)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_reserve_hits_cap() {
        let (case, red, map) = case_with_lines();
        let ws = build_weights(
            &[1e-6, 1.0],
            &[],
            &case,
            &red,
            &map,
            &WeightScales::default(),
        )
        .unwrap();
        assert!((ws.r[(0, 0)] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn weight_scales_land_in_state_blocks() {
        let (case, red, map) = case_with_lines();
        let scales = WeightScales { q_ia: 0.2, q2: 0.8, r_bar: 1e3, jitter: 1e-9 };
        let ws = build_weights(&[1.0, 1.0], &[], &case, &red, &map, &scales).unwrap();
        let th = map.theta();
        let om = map.omega();
        assert!((ws.q[(th.start, th.start)] - 0.2).abs() < 1e-8);
        assert!((ws.q[(om.start, om.start)] - 0.8).abs() < 1e-8);
        // Device states only carry the jitter.
        let ps = map.p_sec();
        assert!(ws.q[(ps.start, ps.start)] <= 1e-8);
        // Q = C_eᵀC_e restricted to state rows, R likewise.
        let q_back = ws.c_e.transpose() * &ws.c_e;
        assert!((q_back - &ws.q).amax() < 1e-12);
        let r_back = ws.d_eu.transpose() * &ws.d_eu;
        assert!((r_back - &ws.r).amax() < 1e-12);
    }

    #[test]
    fn tie_line_penalty_tracks_flow_on_selected_line() {
        let (case, red, map) = case_with_lines();
        let ws = build_weights(
            &[1.0, 1.0],
            &[0],
            &case,
            &red,
            &map,
            &WeightScales { q_ia: 0.0, q2: 0.0, r_bar: 1e3, jitter: 1e-12 },
        )
        .unwrap();
        // Line 0 joins the two inertia buses with susceptance 5: the angle
        // block must equal 25·(e1-e2)(e1-e2)ᵀ.
        let th = map.theta();
        let q_theta = ws.q.view((th.start, th.start), (2, 2)).into_owned();
        let expect = DMatrix::from_row_slice(2, 2, &[25.0, -25.0, -25.0, 25.0]);
        assert!((q_theta - expect).amax() < 1e-10);
    }

    #[test]
    fn zero_reserves_rejected() {
        let (case, red, map) = case_with_lines();
        assert!(build_weights(&[0.0, 1.0], &[], &case, &red, &map, &WeightScales::default())
            .is_err());
    }
}
