//! Big-M interval bounds coupling boolean link variables to entries of the
//! controller parameterization.
//!
//! Each row describes `|entry| ≤ bound(δ)` with the bound affine in the
//! link variables. Missing links collapse their entries to zero, selected
//! links leave a (large, inert) cap. The triple family mirrors the closure
//! rule of the structural equalities so the relaxation certifies the same
//! patterns the equality form would.

use serde::Serialize;

use super::CommTopology;
use crate::synth::StructuralTarget;

/// Affine bound attached to one entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BigMBound {
    /// `M̄ · δ_ij`
    Link { i: usize, j: usize },
    /// `M̄ · (δ_ij − δ_iz + 1)`
    Triple { i: usize, j: usize, z: usize },
}

/// `-bound ≤ entry ≤ bound` on one matrix entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BigMRow {
    pub target: StructuralTarget,
    pub row: usize,
    pub col: usize,
    pub bound: BigMBound,
}

impl BigMRow {
    /// Numeric bound for a fixed adjacency; self-links always count as
    /// selected.
    pub fn bound_value(&self, topology: &CommTopology, big_m: f64) -> f64 {
        let link = |i: usize, j: usize| -> f64 {
            if i == j || topology.link(i, j) {
                1.0
            } else {
                0.0
            }
        };
        match self.bound {
            BigMBound::Link { i, j } => big_m * link(i, j),
            BigMBound::Triple { i, j, z } => big_m * (link(i, j) - link(i, z) + 1.0),
        }
    }
}

/// Enumerates every Big-M row for the agent partition of `topology`.
///
/// Degenerate triples (any two of `i`, `j`, `z` equal) are dropped: with
/// self-links fixed on, their bounds either reduce to a pair row already
/// emitted or can never fall below the plain cap.
pub fn big_m_inequalities(topology: &CommTopology) -> Vec<BigMRow> {
    let m = topology.n_agents();
    let mut rows = Vec::new();
    for i in 0..m {
        for j in 0..m {
            for (row, col) in topology.gain_block(i, j) {
                rows.push(BigMRow {
                    target: StructuralTarget::Gain,
                    row,
                    col,
                    bound: BigMBound::Link { i, j },
                });
            }
            for (row, col) in topology.slack_block(i, j) {
                rows.push(BigMRow {
                    target: StructuralTarget::Slack,
                    row,
                    col,
                    bound: BigMBound::Link { i, j },
                });
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            for z in 0..m {
                if i == j || i == z || j == z {
                    continue;
                }
                for (row, col) in topology.slack_block(z, j) {
                    rows.push(BigMRow {
                        target: StructuralTarget::Slack,
                        row,
                        col,
                        bound: BigMBound::Triple { i, j, z },
                    });
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn topology(m: usize) -> CommTopology {
        let states: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        let inputs: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        CommTopology::new(states, inputs, DMatrix::zeros(m, m), DMatrix::zeros(m, m))
    }

    #[test]
    fn all_links_selected_leaves_plain_caps() {
        let mut t = topology(3);
        for i in 0..3 {
            for j in 0..3 {
                t.set_link(i, j, true);
            }
        }
        let big_m = 1e8;
        for row in big_m_inequalities(&t) {
            let b = row.bound_value(&t, big_m);
            assert!(b >= big_m, "selected links must leave caps ≥ M̄, got {b}");
        }
    }

    #[test]
    fn missing_link_forces_zero_interval() {
        let t = topology(2); // only self-links
        let rows = big_m_inequalities(&t);
        let cross: Vec<_> = rows
            .iter()
            .filter(|r| matches!(r.bound, BigMBound::Link { i, j } if i != j))
            .collect();
        assert!(!cross.is_empty());
        for row in cross {
            assert_eq!(row.bound_value(&t, 1e8), 0.0);
        }
    }

    #[test]
    fn triple_bound_arithmetic() {
        let mut t = topology(3);
        t.set_link(0, 1, true); // δ_01 = 1
        let row = BigMRow {
            target: StructuralTarget::Slack,
            row: 2,
            col: 1,
            bound: BigMBound::Triple { i: 0, j: 1, z: 2 },
        };
        // δ_01 = 1, δ_02 = 0 → bound 2M̄ (inactive).
        assert_eq!(row.bound_value(&t, 10.0), 20.0);
        t.set_link(0, 2, true);
        // δ_01 = 1, δ_02 = 1 → bound M̄.
        assert_eq!(row.bound_value(&t, 10.0), 10.0);
        t.set_link(0, 1, false);
        // δ_01 = 0, δ_02 = 1 → bound 0: the closure rule bites.
        assert_eq!(row.bound_value(&t, 10.0), 0.0);
    }

    #[test]
    fn degenerate_triples_are_dropped() {
        let t = topology(3);
        for row in big_m_inequalities(&t) {
            if let BigMBound::Triple { i, j, z } = row.bound {
                assert!(i != j && i != z && j != z);
            }
        }
    }
}
