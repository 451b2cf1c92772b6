//! Linear equality constraints forcing the recovered gain to respect a
//! communication topology.
//!
//! Zeroing the gain parameterization entry-wise is sufficient (not
//! necessary) for `K = Y·G⁻¹` to carry the topology's sparsity: missing
//! links zero the matching blocks of `Y` and `G`, and an extra family of
//! slack zeros closes the pattern under inversion — `G`'s column agent must
//! reach every agent its row agent reaches.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::topo::CommTopology;

/// Which parameterization matrix an equality acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum StructuralTarget {
    /// Gain parameterization `Y`.
    Gain,
    /// Slack matrix `G`.
    Slack,
}

/// A single forced zero entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct StructuralZero {
    pub target: StructuralTarget,
    pub row: usize,
    pub col: usize,
}

/// Enumerates the forced zeros for a fixed topology, deduplicated and in
/// a deterministic order.
pub fn structural_equalities(topology: &CommTopology) -> Vec<StructuralZero> {
    let m = topology.n_agents();
    let mut zeros: BTreeSet<StructuralZero> = BTreeSet::new();

    for i in 0..m {
        for j in 0..m {
            if i == j || topology.link(i, j) {
                continue;
            }
            // Missing link j→i removes the gain block u_i ← x_j …
            for (row, col) in topology.gain_block(i, j) {
                zeros.insert(StructuralZero { target: StructuralTarget::Gain, row, col });
            }
            // … and the slack block x_i ← x_j.
            for (row, col) in topology.slack_block(i, j) {
                zeros.insert(StructuralZero { target: StructuralTarget::Slack, row, col });
            }
            // Any agent z that i does hear from must not couple j into its
            // slack rows, otherwise the inverse reintroduces the link.
            for z in 0..m {
                if z == i || z == j || !topology.link(i, z) {
                    continue;
                }
                for (row, col) in topology.slack_block(z, j) {
                    zeros.insert(StructuralZero { target: StructuralTarget::Slack, row, col });
                }
            }
        }
    }
    zeros.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn topology(m: usize, links: &[(usize, usize)]) -> CommTopology {
        let states: Vec<Vec<usize>> = (0..m).map(|i| vec![2 * i, 2 * i + 1]).collect();
        let inputs: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        let mut t =
            CommTopology::new(states, inputs, DMatrix::zeros(m, m), DMatrix::zeros(m, m));
        for &(i, j) in links {
            t.set_link(i, j, true);
        }
        t
    }

    #[test]
    fn fully_connected_topology_is_unconstrained() {
        let t = topology(3, &[(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        assert!(structural_equalities(&t).is_empty());
    }

    #[test]
    fn decentralized_topology_blocks_all_cross_terms() {
        let t = topology(2, &[]);
        let zeros = structural_equalities(&t);
        // Y: both cross blocks (1 input × 2 states each); G: both cross
        // blocks (2×2 each). No diagonal entry may appear.
        let y_zeros: Vec<_> =
            zeros.iter().filter(|z| z.target == StructuralTarget::Gain).collect();
        let g_zeros: Vec<_> =
            zeros.iter().filter(|z| z.target == StructuralTarget::Slack).collect();
        assert_eq!(y_zeros.len(), 4);
        assert_eq!(g_zeros.len(), 8);
        for z in &zeros {
            let row_agent = match z.target {
                StructuralTarget::Gain => z.row,
                StructuralTarget::Slack => z.row / 2,
            };
            assert_ne!(row_agent, z.col / 2);
        }
    }

    /// Brute-force enumeration of the rule set for a 3-agent chain
    /// 1→2→3 (agent 0 feeds 1, agent 1 feeds 2).
    #[test]
    fn chain_topology_matches_brute_force_enumeration() {
        let t = topology(3, &[(1, 0), (2, 1)]);
        let zeros: BTreeSet<_> = structural_equalities(&t).into_iter().collect();

        let mut expect: BTreeSet<StructuralZero> = BTreeSet::new();
        let link = |i: usize, j: usize| i == j || (i == 1 && j == 0) || (i == 2 && j == 1);
        for i in 0..3 {
            for j in 0..3 {
                if link(i, j) {
                    continue;
                }
                for (row, col) in t.gain_block(i, j) {
                    expect.insert(StructuralZero { target: StructuralTarget::Gain, row, col });
                }
                for (row, col) in t.slack_block(i, j) {
                    expect.insert(StructuralZero { target: StructuralTarget::Slack, row, col });
                }
                for z in 0..3 {
                    if z != i && z != j && link(i, z) {
                        for (row, col) in t.slack_block(z, j) {
                            expect.insert(StructuralZero {
                                target: StructuralTarget::Slack,
                                row,
                                col,
                            });
                        }
                    }
                }
            }
        }
        assert_eq!(zeros, expect);

        // Agent 2 hears from 1 but not from 0, so the closure rule (triple
        // i=2, j=0, z=1) zeroes G's (1, 0) block even though the direct
        // link 0→1 exists; otherwise G⁻¹ would route 0 into 2.
        assert!(zeros.contains(&StructuralZero {
            target: StructuralTarget::Slack,
            row: 2,
            col: 0
        }));
    }
}
