use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;

/// Semantic label of a directed agent pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// Homogeneous systems: every observable pair.
    All,
    Teammate,
    Enemy,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::All => "all",
            Relation::Teammate => "teammate",
            Relation::Enemy => "enemy",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Relation::All),
            "teammate" => Ok(Relation::Teammate),
            "enemy" => Ok(Relation::Enemy),
            other => Err(format!("unknown relation `{other}`")),
        }
    }
}

/// One recorded attention matrix: row `i` holds agent `i`'s weights over
/// the other agents for one (hop, relation, head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMatrix {
    pub hop: usize,
    pub relation: Relation,
    pub head: usize,
    pub weights: Matrix,
}

impl AttentionMatrix {
    /// Support sizes of the rows with a non-empty neighborhood.
    pub fn row_supports(&self, graph: &AgentGraph) -> Vec<usize> {
        (0..self.weights.rows())
            .filter(|&i| !graph.neighborhood(i, self.relation).is_empty())
            .map(|i| self.weights.row(i).iter().filter(|&&w| w > 0.0).count())
            .collect()
    }
}

/// Communication structure of one scene: which ordered pairs may exchange
/// messages and, for two-team systems, whether each pair is friend or foe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGraph {
    n: usize,
    edges: Vec<bool>,
    teams: Option<Vec<usize>>,
    /// Attention weights recorded by the last forward pass over this scene.
    pub learned_weights: Vec<AttentionMatrix>,
}

impl AgentGraph {
    /// Homogeneous graph with every ordered pair `i != j` observable.
    pub fn fully_connected(n: usize) -> Self {
        let edges = (0..n * n).map(|k| k / n != k % n).collect();
        Self { n, edges, teams: None, learned_weights: Vec::new() }
    }

    /// Two-team graph with every ordered pair `i != j` observable.
    pub fn with_teams(teams: Vec<usize>) -> Self {
        let mut g = Self::fully_connected(teams.len());
        g.teams = Some(teams);
        g
    }

    /// Replaces the observability mask. `edges[i][j]` is whether `i` can
    /// receive from `j`; self-pairs are always dropped.
    pub fn with_edges(mut self, edges: &[Vec<bool>]) -> Self {
        assert_eq!(edges.len(), self.n);
        for (i, row) in edges.iter().enumerate() {
            assert_eq!(row.len(), self.n);
            for (j, &e) in row.iter().enumerate() {
                self.edges[i * self.n + j] = e && i != j;
            }
        }
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_relational(&self) -> bool {
        self.teams.is_some()
    }

    pub fn teams(&self) -> Option<&[usize]> {
        self.teams.as_deref()
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.n + j]
    }

    /// Relations this graph distinguishes, in the order attention heads
    /// are laid out.
    pub fn relations(&self) -> &'static [Relation] {
        if self.is_relational() {
            &[Relation::Teammate, Relation::Enemy]
        } else {
            &[Relation::All]
        }
    }

    pub fn relation(&self, i: usize, j: usize) -> Relation {
        match &self.teams {
            None => Relation::All,
            Some(t) if t[i] == t[j] => Relation::Teammate,
            Some(_) => Relation::Enemy,
        }
    }

    pub fn neighborhood(&self, i: usize, relation: Relation) -> Vec<usize> {
        (0..self.n)
            .filter(|&j| self.edge(i, j) && (relation == Relation::All || self.relation(i, j) == relation))
            .collect()
    }

    /// 0/1 matrix of the pairs attended to under `relation`.
    pub fn mask(&self, relation: Relation) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.neighborhood(i, relation) {
                m[(i, j)] = 1.0;
            }
        }
        m
    }

    /// The same graph with agents relabeled so that new agent `k` is old
    /// agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut edges = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                edges[i * n + j] = self.edge(perm[i], perm[j]);
            }
        }
        Self {
            n,
            edges,
            teams: self.teams.as_ref().map(|t| perm.iter().map(|&p| t[p]).collect()),
            learned_weights: Vec::new(),
        }
    }
}
