//! Observability conditions and unlocalizable fault clusters.

mod oracle;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::MeasurementModel;
use crate::grid::{BranchId, GridModel, NodeId};

pub use oracle::{empirical_cluster_oracle, OracleReport, ORACLE_TOLERANCE};

/// Relative singular-value tolerance of the rank oracle.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Set of monitored (PMU-equipped) nodes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Monitoring(BTreeSet<NodeId>);

impl Monitoring {
    pub fn from_ids(ids: impl IntoIterator<Item = NodeId>) -> Self {
        Self(ids.into_iter().collect())
    }

    /// From a binary placement vector, `gamma[i]` for node `i + 1`.
    pub fn from_gamma(gamma: &[bool]) -> Self {
        Self::from_ids(
            gamma
                .iter()
                .enumerate()
                .filter(|(_, on)| **on)
                .map(|(i, _)| NodeId::from_index(i)),
        )
    }

    pub fn all(grid: &GridModel) -> Self {
        Self::from_ids(grid.node_ids())
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.contains(&node)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn gamma(&self, node_count: usize) -> Vec<bool> {
        (0..node_count)
            .map(|i| self.contains(NodeId::from_index(i)))
            .collect()
    }
}

/// Outcome of a condition check with the offending nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionCheck {
    pub holds: bool,
    pub violations: Vec<NodeId>,
}

impl ConditionCheck {
    fn from_violations(violations: BTreeSet<NodeId>) -> Self {
        Self {
            holds: violations.is_empty(),
            violations: violations.into_iter().collect(),
        }
    }
}

/// Sufficient observability condition for the unextended grid.
///
/// (a) a node of degree > 1 sees at most one non-monitored node among itself
/// and its neighbours; (b) a non-monitored leaf hangs off a monitored node.
pub fn check_lemma1(grid: &GridModel, monitoring: &Monitoring) -> ConditionCheck {
    let mut violations = BTreeSet::new();
    for node in grid.node_ids() {
        let unmonitored_neighbors = grid
            .neighbors(node)
            .iter()
            .filter(|(nb, _)| !monitoring.contains(*nb))
            .count();
        let own = usize::from(!monitoring.contains(node));
        if grid.degree(node) > 1 {
            if unmonitored_neighbors + own > 1 {
                violations.insert(node);
            }
        } else if own == 1 && unmonitored_neighbors > 0 {
            violations.insert(node);
        }
    }
    ConditionCheck::from_violations(violations)
}

/// Necessary and sufficient condition for every single-virtual-node
/// extension to be observable: no two adjacent non-monitored nodes and every
/// leaf monitored.
pub fn check_theorem1(grid: &GridModel, monitoring: &Monitoring) -> ConditionCheck {
    let mut violations = BTreeSet::new();
    for br in grid.branches() {
        if !monitoring.contains(br.from) && !monitoring.contains(br.to) {
            violations.insert(br.from);
            violations.insert(br.to);
        }
    }
    for node in grid.node_ids() {
        if grid.degree(node) == 1 && !monitoring.contains(node) {
            violations.insert(node);
        }
    }
    ConditionCheck::from_violations(violations)
}

/// Numerical rank of `matrix` with singular values below
/// `RANK_TOLERANCE · σ_max` treated as zero.
pub fn numerical_rank(matrix: &DMatrix<f64>) -> usize {
    if matrix.is_empty() {
        return 0;
    }
    let sv = matrix.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOLERANCE * max).count()
}

/// Observability by full column rank of `H` (rank `6n`).
pub fn rank_observability_oracle(grid: &GridModel, monitoring: &Monitoring) -> bool {
    if monitoring.is_empty() {
        return false;
    }
    let Ok(h) = MeasurementModel::measurement_matrix(grid, monitoring) else {
        return false;
    };
    h.nrows() >= h.ncols() && numerical_rank(&h) == h.ncols()
}

/// Eligible branches joining two monitored nodes.
pub fn compute_single_line_ufcs(grid: &GridModel, monitoring: &Monitoring) -> Vec<BranchId> {
    grid.branches()
        .iter()
        .filter(|b| {
            b.fault_hypothesis_eligible && monitoring.contains(b.from) && monitoring.contains(b.to)
        })
        .map(|b| b.id)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cluster {
    /// 1-based, clusters ordered by lowest branch id.
    pub id: usize,
    pub branches: Vec<BranchId>,
    /// Lowest eligible branch id (lowest branch id if none is eligible).
    pub representative: BranchId,
    /// Whether the cluster holds an eligible branch and so gets an estimator.
    pub hypothesis: bool,
}

/// Unlocalizable fault clusters of a monitored grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClusterPartition {
    pub clusters: Vec<Cluster>,
    pub single_line_ufcs: Vec<BranchId>,
    pub separator_nodes: Vec<NodeId>,
}

impl ClusterPartition {
    /// Number of clusters `r`, counting clusters without eligible branches.
    pub fn r(&self) -> usize {
        self.clusters.len()
    }

    pub fn hypothesis_clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.hypothesis)
    }

    pub fn cluster_of(&self, branch: BranchId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.branches.contains(&branch))
    }

    pub fn cluster(&self, id: usize) -> Option<&Cluster> {
        self.clusters.get(id.checked_sub(1)?)
    }

    /// Cluster index per branch (0-based colour index), ordered by branch id.
    pub fn color_index(&self, branch_count: usize) -> Vec<usize> {
        let mut colors = vec![0; branch_count];
        for c in &self.clusters {
            for b in &c.branches {
                colors[b.index()] = c.id - 1;
            }
        }
        colors
    }

    /// Eligible-branch restriction: one sorted set per hypothesis cluster.
    pub fn eligible_sets(&self, grid: &GridModel) -> Vec<Vec<BranchId>> {
        self.clusters
            .iter()
            .map(|c| {
                c.branches
                    .iter()
                    .copied()
                    .filter(|b| grid.branch(*b).is_ok_and(|br| br.fault_hypothesis_eligible))
                    .collect::<Vec<_>>()
            })
            .filter(|s| !s.is_empty())
            .collect()
    }

    /// Checks the partition invariants; returns a description of the first
    /// violation.
    pub fn validate(
        &self,
        grid: &GridModel,
        monitoring: &Monitoring,
    ) -> std::result::Result<(), String> {
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            for b in &c.branches {
                if !seen.insert(*b) {
                    return Err(format!("branch {b} in two clusters"));
                }
            }
            // connectivity of the branch set through shared endpoints
            let mut reached = BTreeSet::from([c.branches[0]]);
            let mut frontier = vec![c.branches[0]];
            while let Some(b) = frontier.pop() {
                let br = grid.branch(b).map_err(|e| e.to_string())?;
                for other in &c.branches {
                    let ob = grid.branch(*other).map_err(|e| e.to_string())?;
                    let shares = ob.touches(br.from) || ob.touches(br.to);
                    if shares && reached.insert(*other) {
                        frontier.push(*other);
                    }
                }
            }
            if reached.len() != c.branches.len() {
                return Err(format!("cluster {} is not connected", c.id));
            }
        }
        for b in grid.branches() {
            if b.fault_hypothesis_eligible && !seen.contains(&b.id) {
                return Err(format!("eligible branch {} not covered", b.id));
            }
        }
        for s in &self.separator_nodes {
            if monitoring.contains(*s) || grid.degree(*s) <= 2 {
                return Err(format!("separator {s} is monitored or not a fork"));
            }
        }
        Ok(())
    }
}

/// Cluster partition: branches are merged through every node that is not a
/// non-monitored fork.
pub fn compute_clusters(grid: &GridModel, monitoring: &Monitoring) -> Result<ClusterPartition> {
    let check = check_theorem1(grid, monitoring);
    if !check.holds {
        return Err(Error::ObservabilityViolated {
            nodes: check.violations,
        });
    }
    let separators: Vec<NodeId> = grid
        .node_ids()
        .filter(|n| !monitoring.contains(*n) && grid.degree(*n) > 2)
        .collect();

    let m = grid.branch_count();
    let mut uf = UnionFind::new(m);
    for node in grid.node_ids() {
        if separators.contains(&node) {
            continue;
        }
        let incident = grid.neighbors(node);
        for pair in incident.windows(2) {
            uf.union(pair[0].1.index(), pair[1].1.index());
        }
    }

    let mut groups: Vec<Vec<BranchId>> = Vec::new();
    let mut slot = vec![usize::MAX; m];
    for i in 0..m {
        let root = uf.find(i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(BranchId::from_index(i));
    }

    let clusters = groups
        .into_iter()
        .enumerate()
        .map(|(k, branches)| {
            let eligible = branches
                .iter()
                .copied()
                .find(|b| grid.branches()[b.index()].fault_hypothesis_eligible);
            Cluster {
                id: k + 1,
                representative: eligible.unwrap_or(branches[0]),
                hypothesis: eligible.is_some(),
                branches,
            }
        })
        .collect();

    Ok(ClusterPartition {
        clusters,
        single_line_ufcs: compute_single_line_ufcs(grid, monitoring),
        separator_nodes: separators,
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the lowest index as root so cluster order follows branch ids
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[usize]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn lemma1_examples() {
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[1, 3]).unwrap();
        assert!(check_lemma1(&g, &g.monitoring()).holds);

        let g = GridModel::from_edges(4, &[(1, 2), (2, 3), (3, 4)], &[1, 4]).unwrap();
        let c = check_lemma1(&g, &g.monitoring());
        assert!(!c.holds);
        assert_eq!(c.violations, ids(&[2, 3]));

        let g = GridModel::from_edges(4, &[(1, 2), (1, 3), (1, 4)], &[2, 3, 4]).unwrap();
        assert!(check_lemma1(&g, &g.monitoring()).holds);
    }

    #[test]
    fn theorem1_examples() {
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[1, 2, 3]).unwrap();
        assert!(check_theorem1(&g, &g.monitoring()).holds);
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[1, 3]).unwrap();
        assert!(check_theorem1(&g, &g.monitoring()).holds);
        let g = GridModel::from_edges(4, &[(1, 2), (2, 3), (3, 4)], &[1, 4]).unwrap();
        let c = check_theorem1(&g, &g.monitoring());
        assert!(!c.holds);
        assert_eq!(c.violations, ids(&[2, 3]));
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[2]).unwrap();
        assert_eq!(check_theorem1(&g, &g.monitoring()).violations, ids(&[1, 3]));
    }

    #[test]
    fn rank_oracle_examples() {
        let g = GridModel::from_edges(4, &[(1, 2), (2, 3), (2, 4)], &[]).unwrap();
        assert!(rank_observability_oracle(&g, &Monitoring::all(&g)));
        assert!(!rank_observability_oracle(&g, &Monitoring::default()));
        let g = GridModel::from_edges(4, &[(1, 2), (2, 3), (3, 4)], &[]).unwrap();
        // chain m-u-u-m is observable although the extension on 2-3 is not
        let m = Monitoring::from_ids(ids(&[1, 4]));
        assert!(rank_observability_oracle(&g, &m));
        let e = g.extend_with_virtual_node(BranchId(2), 0.5).unwrap();
        assert!(!rank_observability_oracle(&e, &m));
    }

    #[test]
    fn single_line_ufcs() {
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[1, 2, 3]).unwrap();
        assert_eq!(
            compute_single_line_ufcs(&g, &g.monitoring()),
            vec![BranchId(1), BranchId(2)]
        );
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[1, 3]).unwrap();
        assert!(compute_single_line_ufcs(&g, &g.monitoring()).is_empty());
    }

    #[test]
    fn cluster_examples() {
        let g = GridModel::from_edges(3, &[(1, 2), (2, 3)], &[1, 3]).unwrap();
        let p = compute_clusters(&g, &g.monitoring()).unwrap();
        assert_eq!(p.r(), 1);
        assert_eq!(p.clusters[0].branches, vec![BranchId(1), BranchId(2)]);
        assert_eq!(p.clusters[0].representative, BranchId(1));

        let g = GridModel::from_edges(4, &[(1, 2), (1, 3), (1, 4)], &[2, 3, 4]).unwrap();
        let p = compute_clusters(&g, &g.monitoring()).unwrap();
        assert_eq!(p.r(), 3);
        assert_eq!(p.separator_nodes, ids(&[1]));
        p.validate(&g, &g.monitoring()).unwrap();

        let g = GridModel::from_edges(4, &[(1, 2), (2, 3), (3, 4)], &[1, 4]).unwrap();
        assert!(matches!(
            compute_clusters(&g, &g.monitoring()),
            Err(Error::ObservabilityViolated { .. })
        ));
    }

    #[test]
    fn color_index_follows_clusters() {
        let g = GridModel::from_edges(4, &[(1, 2), (1, 3), (1, 4)], &[2, 3, 4]).unwrap();
        let p = compute_clusters(&g, &g.monitoring()).unwrap();
        assert_eq!(p.color_index(3), vec![0, 1, 2]);
    }
}
