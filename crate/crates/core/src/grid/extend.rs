use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{Branch, BranchId, GridModel, Grounding, Node, NodeId, NodeKind, PhaseMatrix};
use crate::error::{Error, Result};
use crate::observability::Monitoring;

/// Fake node ↔ original branch mapping of a fake-node extended grid (FEG).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FakeNodeRegistry {
    by_node: BTreeMap<NodeId, BranchId>,
    by_branch: BTreeMap<BranchId, NodeId>,
}

impl FakeNodeRegistry {
    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }

    pub fn branch_of(&self, node: NodeId) -> Option<BranchId> {
        self.by_node.get(&node).copied()
    }

    pub fn node_on(&self, branch: BranchId) -> Option<NodeId> {
        self.by_branch.get(&branch).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, BranchId)> + '_ {
        self.by_node.iter().map(|(n, b)| (*n, *b))
    }
}

impl GridModel {
    /// Splits `branch` at `position` (measured from its `from` end) with a new
    /// node of the given kind. The `from`-side segment keeps the branch id,
    /// the other segment gets id `m + 1`. Per-end shunts stay on their real
    /// ends; the new node gets none.
    pub(crate) fn split_branch(
        &self,
        branch: BranchId,
        position: f64,
        kind: NodeKind,
    ) -> Result<(GridModel, NodeId)> {
        if !(position > 0.0 && position < 1.0) {
            return Err(Error::InvalidPosition(position));
        }
        let original = self.branch(branch)?.clone();
        let new_node = NodeId(self.node_count() + 1);
        let new_branch = BranchId(self.branch_count() + 1);

        let mut nodes = self.nodes.clone();
        nodes.push(Node {
            id: new_node,
            name: format!("{kind:?} on {}", original.origin).to_lowercase(),
            monitored: false,
            kind,
            grounding: Grounding::None,
        });

        let near = Branch {
            to: new_node,
            series_impedance: original.series_impedance * Complex64::new(position, 0.0),
            shunt_to: PhaseMatrix::zeros(),
            ..original.clone()
        };
        let far = Branch {
            id: new_branch,
            from: new_node,
            series_impedance: original.series_impedance * Complex64::new(1.0 - position, 0.0),
            shunt_from: PhaseMatrix::zeros(),
            ..original
        };
        let mut branches = self.branches.clone();
        branches[branch.index()] = near;
        branches.push(far);

        let grid = GridModel::new(
            nodes,
            branches,
            self.sources.clone(),
            self.loads.clone(),
            self.frequency,
        )?;
        Ok((grid, new_node))
    }

    /// Places the (single) virtual node on an eligible branch.
    pub fn extend_with_virtual_node(&self, branch: BranchId, position: f64) -> Result<GridModel> {
        if !self.branch(branch)?.fault_hypothesis_eligible {
            return Err(Error::IneligibleBranch(branch));
        }
        if !(position > 0.0 && position < 1.0) {
            return Err(Error::InvalidPosition(position));
        }
        if self.virtual_node().is_some() {
            return Err(Error::InvalidGrid("grid already has a virtual node".into()));
        }
        Ok(self.split_branch(branch, position, NodeKind::Virtual)?.0)
    }

    /// The virtual node, if this is a hypothesis grid.
    pub fn virtual_node(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Virtual)
            .map(|n| n.id)
    }

    /// Builds the fake-node extended grid: a midpoint fake node on each listed
    /// single-line UFC (a branch joining two monitored nodes).
    pub fn add_fake_nodes(
        &self,
        monitoring: &Monitoring,
        single_line_ufcs: &[BranchId],
    ) -> Result<(GridModel, FakeNodeRegistry)> {
        for &id in single_line_ufcs {
            let br = self.branch(id)?;
            if !(monitoring.contains(br.from) && monitoring.contains(br.to)) {
                return Err(Error::NotSingleLineUfc(id));
            }
        }
        let mut ids = single_line_ufcs.to_vec();
        ids.sort();
        ids.dedup();

        let mut grid = self.clone();
        let mut registry = FakeNodeRegistry::default();
        for id in ids {
            let (next, fake) = grid.split_branch(id, 0.5, NodeKind::Fake)?;
            registry.by_node.insert(fake, id);
            registry.by_branch.insert(id, fake);
            grid = next;
        }
        Ok((grid, registry))
    }
}
