//! Three-phase radial network model.

mod admittance;
pub mod benchmark;
mod extend;
mod file;

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use admittance::norton as admittance_norton;
pub use admittance::{AdmittanceMatrix, AdmittanceScope};
pub use extend::FakeNodeRegistry;
pub use file::{parse_grid, read_grid, write_grid};

/// 3×3 complex phase matrix (impedance or admittance).
pub type PhaseMatrix = Matrix3<Complex64>;
/// Three-phase phasor triplet `[a, b, c]`.
pub type Triplet = Vector3<Complex64>;

/// Symmetry tolerance, relative to the largest entry.
const SYMMETRY_TOL: f64 = 1e-9;

/// 1-based node identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(index: usize) -> Self {
        NodeId(index + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// 1-based branch identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub usize);

impl BranchId {
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(index: usize) -> Self {
        BranchId(index + 1)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Real,
    Fake,
    Virtual,
}

/// Neutral grounding path of a node.
///
/// Grounded nodes carry a zig-zag grounding transformer with zero-sequence
/// impedance `transformer` in series with the neutral impedance (zero for
/// solid grounding, `resistance + jωL` for a Petersen coil).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Grounding {
    #[default]
    None,
    Solid {
        transformer: Complex64,
    },
    Petersen {
        inductance: f64,
        resistance: f64,
        transformer: Complex64,
    },
}

impl Grounding {
    /// Zero-sequence impedance of the whole path, `Z_gt + 3 Z_n`.
    pub fn zero_sequence_impedance(&self, omega: f64) -> Option<Complex64> {
        match *self {
            Grounding::None => None,
            Grounding::Solid { transformer } => Some(transformer),
            Grounding::Petersen {
                inductance,
                resistance,
                transformer,
            } => Some(transformer + 3.0 * Complex64::new(resistance, omega * inductance)),
        }
    }

    pub fn is_grounded(&self) -> bool {
        !matches!(self, Grounding::None)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub monitored: bool,
    pub kind: NodeKind,
    pub grounding: Grounding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Line,
    Transformer,
}

/// Pi-model branch. Shunts are stored per end so that split segments can keep
/// the shunt of their surviving real end only.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub id: BranchId,
    pub from: NodeId,
    pub to: NodeId,
    pub series_impedance: PhaseMatrix,
    pub shunt_from: PhaseMatrix,
    pub shunt_to: PhaseMatrix,
    pub kind: BranchKind,
    pub fault_hypothesis_eligible: bool,
    /// Branch of the unsplit grid this segment belongs to.
    pub origin: BranchId,
}

impl Branch {
    pub fn other_end(&self, node: NodeId) -> Option<NodeId> {
        if node == self.from {
            Some(self.to)
        } else if node == self.to {
            Some(self.from)
        } else {
            None
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.from == node || self.to == node
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neutral {
    #[default]
    Isolated,
    Grounded,
}

/// EMF behind a 3×3 internal impedance.
#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub node: NodeId,
    pub emf: Triplet,
    pub impedance: PhaseMatrix,
    pub neutral: Neutral,
}

/// Delta-connected constant-impedance load, legs ordered AB, BC, CA.
#[derive(Clone, Debug, PartialEq)]
pub struct Load {
    pub node: NodeId,
    pub delta: [Complex64; 3],
}

/// Immutable three-phase radial network.
#[derive(Clone, Debug, PartialEq)]
pub struct GridModel {
    nodes: Vec<Node>,
    branches: Vec<Branch>,
    sources: Vec<Source>,
    loads: Vec<Load>,
    frequency: f64,
    adjacency: Vec<Vec<(NodeId, BranchId)>>,
}

impl GridModel {
    /// Validates and builds a grid. Nodes and branches must be listed with
    /// contiguous ids starting at 1 (in any order).
    pub fn new(
        mut nodes: Vec<Node>,
        mut branches: Vec<Branch>,
        sources: Vec<Source>,
        loads: Vec<Load>,
        frequency: f64,
    ) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        branches.sort_by_key(|b| b.id);
        let invalid = |msg: String| Err(Error::InvalidGrid(msg));

        if nodes.is_empty() {
            return invalid("grid has no nodes".into());
        }
        if !(frequency > 0.0) {
            return invalid(format!("frequency must be positive, got {frequency}"));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != NodeId::from_index(i) {
                return invalid(format!(
                    "node ids must be contiguous from 1, found {}",
                    node.id
                ));
            }
            if node.kind != NodeKind::Real && node.monitored {
                return invalid(format!(
                    "{:?} node {} cannot be monitored",
                    node.kind, node.id
                ));
            }
        }
        if nodes.iter().filter(|n| n.kind == NodeKind::Virtual).count() > 1 {
            return invalid("at most one virtual node per grid".into());
        }

        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut pairs = BTreeSet::new();
        for (i, br) in branches.iter().enumerate() {
            if br.id != BranchId::from_index(i) {
                return invalid(format!(
                    "branch ids must be contiguous from 1, found {}",
                    br.id
                ));
            }
            for end in [br.from, br.to] {
                if end.0 == 0 || end.0 > n {
                    return invalid(format!("branch {} references unknown node {end}", br.id));
                }
            }
            if br.from == br.to {
                return invalid(format!("branch {} is a self loop", br.id));
            }
            let key = (br.from.min(br.to), br.from.max(br.to));
            if !pairs.insert(key) {
                return invalid(format!(
                    "parallel branch {} between {} and {}",
                    br.id, key.0, key.1
                ));
            }
            for (what, m) in [
                ("series impedance", &br.series_impedance),
                ("from-end shunt", &br.shunt_from),
                ("to-end shunt", &br.shunt_to),
            ] {
                if !is_symmetric(m) {
                    return invalid(format!("branch {} {what} is not symmetric", br.id));
                }
            }
            adjacency[br.from.index()].push((br.to, br.id));
            adjacency[br.to.index()].push((br.from, br.id));
        }
        if branches.len() + 1 != n {
            return invalid(format!(
                "radial grid needs m = n - 1 branches, got n = {n}, m = {}",
                branches.len()
            ));
        }
        if !is_connected(&adjacency) {
            return invalid("branch graph is not connected".into());
        }

        for src in &sources {
            if src.node.0 == 0 || src.node.0 > n {
                return invalid(format!("source at unknown node {}", src.node));
            }
            if !is_symmetric(&src.impedance) {
                return invalid(format!(
                    "source impedance at node {} is not symmetric",
                    src.node
                ));
            }
        }
        for load in &loads {
            if load.node.0 == 0 || load.node.0 > n {
                return invalid(format!("load at unknown node {}", load.node));
            }
        }

        Ok(Self {
            nodes,
            branches,
            sources,
            loads,
            frequency,
            adjacency,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn loads(&self) -> &[Load] {
        &self.loads
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        id.0.checked_sub(1)
            .and_then(|i| self.nodes.get(i))
            .ok_or(Error::UnknownNode(id))
    }

    pub fn branch(&self, id: BranchId) -> Result<&Branch> {
        id.0.checked_sub(1)
            .and_then(|i| self.branches.get(i))
            .ok_or(Error::UnknownBranch(id))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    /// Degree ρ(b) = number of incident branches.
    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    /// `(neighbour, connecting branch)` pairs.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, BranchId)] {
        &self.adjacency[node.index()]
    }

    pub fn find_branch(&self, a: NodeId, b: NodeId) -> Option<BranchId> {
        self.adjacency
            .get(a.index())?
            .iter()
            .find(|(nb, _)| *nb == b)
            .map(|(_, id)| *id)
    }

    /// Nodes flagged as monitored in the grid description.
    pub fn monitoring(&self) -> crate::observability::Monitoring {
        crate::observability::Monitoring::from_ids(
            self.nodes.iter().filter(|n| n.monitored).map(|n| n.id),
        )
    }

    /// Copy of the grid with the monitored flags replaced.
    pub fn with_monitoring(&self, monitoring: &crate::observability::Monitoring) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        for node in &mut nodes {
            node.monitored = monitoring.contains(node.id);
        }
        for id in monitoring.iter() {
            self.node(id)?;
        }
        Self::new(
            nodes,
            self.branches.clone(),
            self.sources.clone(),
            self.loads.clone(),
            self.frequency,
        )
    }

    /// Copy of the grid with every grounded node switched to `grounding`.
    pub fn with_grounding(&self, grounding: impl Fn(&Node) -> Grounding) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        for node in &mut nodes {
            if node.grounding.is_grounded() {
                node.grounding = grounding(node);
            }
        }
        Self::new(
            nodes,
            self.branches.clone(),
            self.sources.clone(),
            self.loads.clone(),
            self.frequency,
        )
    }

    /// Total zero-sequence shunt capacitance of the network (farad per phase).
    pub fn zero_sequence_capacitance(&self) -> f64 {
        let ones = Triplet::from_element(Complex64::new(1.0, 0.0));
        let omega = self.omega();
        self.branches
            .iter()
            .map(|b| {
                let y0 = (ones.transpose() * (b.shunt_from + b.shunt_to) * ones)[(0, 0)] / 3.0;
                y0.im / omega
            })
            .sum()
    }

    /// Replaces every grounded neutral by a Petersen coil tuned to the total
    /// zero-sequence capacitance, `L = 1 / (3 ω² C₀)`, shared evenly among the
    /// grounded nodes. `quality` sets the series loss resistance `ωL / quality`.
    pub fn with_tuned_petersen(&self, quality: f64) -> Result<Self> {
        let grounded = self
            .nodes
            .iter()
            .filter(|n| n.grounding.is_grounded())
            .count();
        if grounded == 0 {
            return Err(Error::InvalidGrid("no grounded neutral to retune".into()));
        }
        let omega = self.omega();
        let total = 1.0 / (3.0 * omega * omega * self.zero_sequence_capacitance());
        let each = total * grounded as f64;
        self.with_grounding(|node| {
            let transformer = match node.grounding {
                Grounding::Solid { transformer } | Grounding::Petersen { transformer, .. } => {
                    transformer
                }
                Grounding::None => Complex64::default(),
            };
            Grounding::Petersen {
                inductance: each,
                resistance: omega * each / quality,
                transformer,
            }
        })
    }

    /// Replaces every grounded neutral by a solid connection.
    pub fn with_solid_grounding(&self) -> Result<Self> {
        self.with_grounding(|node| match node.grounding {
            Grounding::Solid { transformer } | Grounding::Petersen { transformer, .. } => {
                Grounding::Solid { transformer }
            }
            Grounding::None => Grounding::None,
        })
    }

    pub fn has_petersen(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n.grounding, Grounding::Petersen { .. }))
    }

    /// Builds a topology-only grid with identical diagonal line impedances.
    /// Handy for observability experiments on arbitrary trees.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], monitored: &[usize]) -> Result<Self> {
        let z = PhaseMatrix::from_diagonal_element(Complex64::new(0.1, 0.3));
        let nodes = (1..=n)
            .map(|i| Node {
                id: NodeId(i),
                name: format!("n{i}"),
                monitored: monitored.contains(&i),
                kind: NodeKind::Real,
                grounding: Grounding::None,
            })
            .collect();
        let branches = edges
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| Branch {
                id: BranchId(k + 1),
                from: NodeId(a),
                to: NodeId(b),
                series_impedance: z,
                shunt_from: PhaseMatrix::zeros(),
                shunt_to: PhaseMatrix::zeros(),
                kind: BranchKind::Line,
                fault_hypothesis_eligible: true,
                origin: BranchId(k + 1),
            })
            .collect();
        Self::new(nodes, branches, Vec::new(), Vec::new(), 50.0)
    }
}

pub(crate) fn is_symmetric(m: &PhaseMatrix) -> bool {
    let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return true;
    }
    (m - m.transpose())
        .iter()
        .all(|c| c.norm() <= SYMMETRY_TOL * scale)
}

fn is_connected(adjacency: &[Vec<(NodeId, BranchId)>]) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for (nb, _) in &adjacency[i] {
            if !seen[nb.index()] {
                seen[nb.index()] = true;
                stack.push(nb.index());
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Symmetric phase matrix `z_self` on the diagonal and `z_mutual` elsewhere.
pub fn symmetric_phase_matrix(z_self: Complex64, z_mutual: Complex64) -> PhaseMatrix {
    PhaseMatrix::from_fn(|i, j| if i == j { z_self } else { z_mutual })
}

/// Balanced positive-sequence triplet of magnitude `mag` and phase-a angle `angle`.
pub fn balanced_triplet(mag: f64, angle: f64) -> Triplet {
    let shift = 2.0 * std::f64::consts::PI / 3.0;
    Triplet::new(
        Complex64::from_polar(mag, angle),
        Complex64::from_polar(mag, angle - shift),
        Complex64::from_polar(mag, angle + shift),
    )
}
