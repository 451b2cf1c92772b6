//! Communication topology over control agents and the index maps tying
//! agent pairs to controller / slack matrix entries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::grid::StateMap;

/// Directed communication graph on `n_agents` agents with link costs and
/// benefits. `link(i, j)` means agent `i` receives the state of agent `j`;
/// self-links are always present (an agent always reads its own state).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommTopology {
    n_agents: usize,
    /// Row-major adjacency; entry `(i, j)` is the link `j → i`.
    delta: Vec<bool>,
    /// Link costs, diagonal ignored.
    pub costs: DMatrix<f64>,
    /// Link benefits, diagonal ignored.
    pub benefits: DMatrix<f64>,
    /// State indices owned by each agent.
    pub agent_states: Vec<Vec<usize>>,
    /// Input indices owned by each agent.
    pub agent_inputs: Vec<Vec<usize>>,
}

impl CommTopology {
    pub fn new(
        agent_states: Vec<Vec<usize>>,
        agent_inputs: Vec<Vec<usize>>,
        costs: DMatrix<f64>,
        benefits: DMatrix<f64>,
    ) -> Self {
        let n_agents = agent_states.len();
        assert_eq!(agent_inputs.len(), n_agents);
        assert_eq!(costs.nrows(), n_agents);
        assert_eq!(benefits.nrows(), n_agents);
        let mut t = CommTopology {
            n_agents,
            delta: vec![false; n_agents * n_agents],
            costs,
            benefits,
            agent_states,
            agent_inputs,
        };
        for i in 0..n_agents {
            t.delta[i * n_agents + i] = true;
        }
        t
    }

    /// Agent partition induced by the model's state map: one agent per
    /// inertia bus owning its angle, frequency and device state.
    pub fn agents_from_state_map(map: &StateMap) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let states = (0..map.n_inertia).map(|bus| map.agent_states(bus)).collect();
        let inputs = (0..map.n_inertia).map(|bus| vec![bus]).collect();
        (states, inputs)
    }

    pub fn dense(
        agent_states: Vec<Vec<usize>>,
        agent_inputs: Vec<Vec<usize>>,
        costs: DMatrix<f64>,
        benefits: DMatrix<f64>,
    ) -> Self {
        let mut t = Self::new(agent_states, agent_inputs, costs, benefits);
        t.delta.iter_mut().for_each(|d| *d = true);
        t
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn link(&self, i: usize, j: usize) -> bool {
        self.delta[i * self.n_agents + j]
    }

    /// Sets the off-diagonal link `j → i`; self-links cannot be removed.
    pub fn set_link(&mut self, i: usize, j: usize, on: bool) {
        if i == j {
            return;
        }
        self.delta[i * self.n_agents + j] = on;
    }

    /// Number of selected off-diagonal links.
    pub fn link_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n_agents {
            for j in 0..self.n_agents {
                if i != j && self.link(i, j) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Off-diagonal agent pairs `(i, j)` in row-major order.
    pub fn off_diagonal_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.n_agents;
        (0..m).flat_map(move |i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    /// Entries of the gain matrix mapping agent `j`'s states to agent `i`'s
    /// inputs.
    pub fn gain_block(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &row in &self.agent_inputs[i] {
            for &col in &self.agent_states[j] {
                out.push((row, col));
            }
        }
        out
    }

    /// Entries of the slack matrix mapping agent `j`'s states to agent
    /// `i`'s states.
    pub fn slack_block(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &row in &self.agent_states[i] {
            for &col in &self.agent_states[j] {
                out.push((row, col));
            }
        }
        out
    }

    /// Objective value `Σ (c_ij − η_ij)·δ_ij` over off-diagonal links.
    pub fn objective(&self) -> f64 {
        let mut obj = 0.0;
        for (i, j) in self.off_diagonal_pairs() {
            if self.link(i, j) {
                obj += self.costs[(i, j)] - self.benefits[(i, j)];
            }
        }
        obj
    }

    /// True when every off-diagonal link of `self` is also in `other`.
    pub fn is_subgraph_of(&self, other: &CommTopology) -> bool {
        self.off_diagonal_pairs().all(|(i, j)| !self.link(i, j) || other.link(i, j))
    }

    /// Adjacency list of selected links as `(from=j, to=i)` pairs, for
    /// serialization.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, j) in self.off_diagonal_pairs() {
            if self.link(i, j) {
                edges.push((j, i));
            }
        }
        edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_agents() -> CommTopology {
        let states = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let inputs = vec![vec![0], vec![1], vec![2]];
        CommTopology::new(states, inputs, DMatrix::zeros(3, 3), DMatrix::zeros(3, 3))
    }

    #[test]
    fn self_links_are_fixed() {
        let mut t = three_agents();
        assert!(t.link(0, 0));
        t.set_link(0, 0, false);
        assert!(t.link(0, 0));
        assert_eq!(t.link_count(), 0);
        t.set_link(0, 1, true);
        assert_eq!(t.link_count(), 1);
    }

    #[test]
    fn block_maps_cover_expected_entries() {
        let t = three_agents();
        assert_eq!(t.gain_block(1, 2), vec![(1, 4), (1, 5)]);
        assert_eq!(t.slack_block(0, 1), vec![(0, 2), (0, 3), (1, 2), (1, 3)]);
    }

    #[test]
    fn objective_sums_selected_links() {
        let mut t = three_agents();
        t.costs[(0, 1)] = 2.0;
        t.benefits[(0, 1)] = 0.5;
        t.costs[(2, 0)] = 1.0;
        t.benefits[(2, 0)] = 3.0;
        t.set_link(0, 1, true);
        t.set_link(2, 0, true);
        assert!((t.objective() - (1.5 - 2.0)).abs() < 1e-15);
        let edges = t.edge_list();
        assert!(edges.contains(&(1, 0)) && edges.contains(&(0, 2)));
    }
}
