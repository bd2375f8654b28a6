//! Optimal PMU placement as a binary program, solved exactly.
//!
//! `min cᵀγ` subject to `Aγ ≥ f`, `γ_i = 1` on leaves, with `A_ii = ρ_i`,
//! `A_ik = 1` for neighbours and `f_i = ρ_i`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridModel, NodeId};
use crate::observability::{compute_clusters, Monitoring};

/// Largest instance accepted by the exhaustive oracle.
pub const EXHAUSTIVE_LIMIT: usize = 20;

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostOption {
    /// Every node costs 1: minimizes the number of PMUs.
    Uniform,
    /// Forks cost `n·ρ`, favouring non-monitored forks and so more clusters.
    Resolution,
}

impl std::str::FromStr for CostOption {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "resolution" => Ok(Self::Resolution),
            other => Err(format!(
                "unknown cost option `{other}` (uniform|resolution)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlacementProblem {
    pub a: Vec<Vec<i64>>,
    pub f: Vec<i64>,
    pub c: Vec<f64>,
    pub forced_ones: BTreeSet<NodeId>,
    pub forced_split_nodes: BTreeSet<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlacementSolution {
    pub gamma: Vec<bool>,
    pub d: usize,
    pub cost: f64,
    /// Cluster count of the placement, attached by `with_clusters`.
    pub r: Option<usize>,
    pub optimal: bool,
}

impl PlacementSolution {
    pub fn monitoring(&self) -> Monitoring {
        Monitoring::from_gamma(&self.gamma)
    }

    /// Attaches the cluster count of the induced monitored set.
    pub fn with_clusters(mut self, grid: &GridModel) -> Result<Self> {
        self.r = Some(compute_clusters(grid, &self.monitoring())?.r());
        Ok(self)
    }
}

impl PlacementProblem {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// Checks `Aγ ≥ f` and the forced ones.
    pub fn is_feasible(&self, gamma: &[bool]) -> bool {
        if self.forced_ones.iter().any(|id| !gamma[id.index()]) {
            return false;
        }
        self.a.iter().zip(&self.f).all(|(row, &fi)| {
            let lhs: i64 = row
                .iter()
                .zip(gamma)
                .filter(|(_, g)| **g)
                .map(|(a, _)| *a)
                .sum();
            lhs >= fi
        })
    }

    pub fn cost(&self, gamma: &[bool]) -> f64 {
        self.c
            .iter()
            .zip(gamma)
            .filter(|(_, g)| **g)
            .map(|(c, _)| *c)
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.a.len() != n || self.a.iter().any(|r| r.len() != n) || self.c.len() != n {
            return Err(Error::Placement("A, f and c dimensions disagree".into()));
        }
        if self.c.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Placement("costs must be positive".into()));
        }
        if self.forced_ones.iter().any(|id| id.0 == 0 || id.0 > n) {
            return Err(Error::Placement("forced node out of range".into()));
        }
        Ok(())
    }

    fn solution(&self, gamma: Vec<bool>, optimal: bool) -> PlacementSolution {
        PlacementSolution {
            d: gamma.iter().filter(|g| **g).count(),
            cost: self.cost(&gamma),
            gamma,
            r: None,
            optimal,
        }
    }
}

/// Assembles `A`, `f`, `c` and the forced sets for `grid`.
pub fn build_problem(
    grid: &GridModel,
    option: CostOption,
    forced_split: &[NodeId],
) -> Result<PlacementProblem> {
    let n = grid.node_count();
    let mut a = vec![vec![0i64; n]; n];
    let mut f = vec![0i64; n];
    for id in grid.node_ids() {
        let i = id.index();
        let rho = grid.degree(id) as i64;
        a[i][i] = rho;
        f[i] = rho;
        for (nb, _) in grid.neighbors(id) {
            a[i][nb.index()] = 1;
        }
    }
    let is_fork = |id: NodeId| grid.degree(id) > 2;
    let mut c: Vec<f64> = grid
        .node_ids()
        .map(|id| match option {
            CostOption::Resolution if is_fork(id) => (n * grid.degree(id)) as f64,
            _ => 1.0,
        })
        .collect();
    let mut forced_split_nodes = BTreeSet::new();
    for &k in forced_split {
        grid.node(k)?;
        if !is_fork(k) {
            return Err(Error::Placement(format!(
                "forced split node {k} is not a fork"
            )));
        }
        forced_split_nodes.insert(k);
        for (nb, _) in grid.neighbors(k) {
            if is_fork(*nb) && !forced_split.contains(nb) {
                c[nb.index()] = 1.0;
            }
        }
    }
    let forced_ones = grid.node_ids().filter(|id| grid.degree(*id) == 1).collect();
    Ok(PlacementProblem {
        a,
        f,
        c,
        forced_ones,
        forced_split_nodes,
    })
}

/// Exact branch and bound over nodes in ascending id, trying `γ_i = 0`
/// first, so the first optimum found is the lexicographically smallest.
pub fn solve_placement(problem: &PlacementProblem) -> Result<PlacementSolution> {
    problem.validate()?;
    let mut search = Search::new(problem);
    search.dfs(0);
    match search.best {
        Some(gamma) => Ok(problem.solution(gamma, true)),
        None => Err(Error::Infeasible),
    }
}

/// Enumerates every assignment of the free variables in lexicographic order.
pub fn exhaustive_oracle(problem: &PlacementProblem) -> Result<PlacementSolution> {
    problem.validate()?;
    let n = problem.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::Placement(format!(
            "exhaustive oracle limited to {EXHAUSTIVE_LIMIT} nodes, got {n}"
        )));
    }
    let free: Vec<usize> = (0..n)
        .filter(|i| !problem.forced_ones.contains(&NodeId::from_index(*i)))
        .collect();
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut gamma = vec![false; n];
    for id in &problem.forced_ones {
        gamma[id.index()] = true;
    }
    for mask in 0u64..(1u64 << free.len()) {
        // first free node is the most significant bit
        for (k, &i) in free.iter().enumerate() {
            gamma[i] = mask >> (free.len() - 1 - k) & 1 == 1;
        }
        if !problem.is_feasible(&gamma) {
            continue;
        }
        let cost = problem.cost(&gamma);
        if best.as_ref().is_none_or(|(b, _)| cost < b - EPS) {
            best = Some((cost, gamma.clone()));
        }
    }
    best.map(|(_, g)| problem.solution(g, true))
        .ok_or(Error::Infeasible)
}

struct Search<'a> {
    p: &'a PlacementProblem,
    /// Current assignment; `None` is free.
    value: Vec<Option<bool>>,
    /// Σ_k A_ik over variables fixed to 1.
    covered: Vec<i64>,
    /// Σ_k A_ik over free variables.
    open: Vec<i64>,
    cost: f64,
    best: Option<Vec<bool>>,
    best_cost: f64,
    /// Variables appearing in each row.
    support: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(p: &'a PlacementProblem) -> Self {
        let n = p.len();
        let support: Vec<Vec<usize>> =
            p.a.iter()
                .map(|row| (0..n).filter(|k| row[*k] > 0).collect())
                .collect();
        let open =
            p.a.iter()
                .map(|row| row.iter().filter(|a| **a > 0).sum())
                .collect();
        let mut s = Self {
            p,
            value: vec![None; n],
            covered: vec![0; n],
            open,
            cost: 0.0,
            best: None,
            best_cost: f64::INFINITY,
            support,
        };
        for id in &p.forced_ones {
            s.assign(id.index(), true);
        }
        s
    }

    fn assign(&mut self, k: usize, on: bool) {
        self.value[k] = Some(on);
        for i in 0..self.p.len() {
            let a = self.p.a[i][k];
            if a > 0 {
                self.open[i] -= a;
                if on {
                    self.covered[i] += a;
                }
            }
        }
        if on {
            self.cost += self.p.c[k];
        }
    }

    fn unassign(&mut self, k: usize) {
        let on = self.value[k].take().expect("variable was assigned");
        for i in 0..self.p.len() {
            let a = self.p.a[i][k];
            if a > 0 {
                self.open[i] += a;
                if on {
                    self.covered[i] -= a;
                }
            }
        }
        if on {
            self.cost -= self.p.c[k];
        }
    }

    /// Lower bound on the cost still to pay, or `None` when some row can no
    /// longer be satisfied.
    fn remaining_bound(&self) -> Option<f64> {
        let n = self.p.len();
        let mut used = vec![false; n];
        let mut bound = 0.0;
        for i in 0..n {
            let deficit = self.p.f[i] - self.covered[i];
            if deficit <= 0 {
                continue;
            }
            if self.open[i] < deficit {
                return None;
            }
            let free: Vec<usize> = self.support[i]
                .iter()
                .copied()
                .filter(|k| self.value[*k].is_none())
                .collect();
            // rows with disjoint free supports add up
            if free.iter().any(|k| used[*k]) {
                continue;
            }
            bound += cover_cost(&free, |k| self.p.a[i][k], |k| self.p.c[k], deficit);
            for k in free {
                used[k] = true;
            }
        }
        Some(bound)
    }

    fn dfs(&mut self, k: usize) {
        let Some(rest) = self.remaining_bound() else {
            return;
        };
        if self.cost + rest >= self.best_cost - EPS {
            return;
        }
        let n = self.p.len();
        let mut k = k;
        while k < n && self.value[k].is_some() {
            k += 1;
        }
        if k == n {
            // all rows satisfied, otherwise the bound would have failed
            let gamma: Vec<bool> = self.value.iter().map(|v| v == &Some(true)).collect();
            self.best_cost = self.cost;
            self.best = Some(gamma);
            return;
        }
        for on in [false, true] {
            self.assign(k, on);
            self.dfs(k + 1);
            self.unassign(k);
        }
    }
}

/// Minimum cost of a subset of `vars` whose weights reach `deficit`.
fn cover_cost(
    vars: &[usize],
    weight: impl Fn(usize) -> i64,
    cost: impl Fn(usize) -> f64,
    deficit: i64,
) -> f64 {
    if vars.len() <= 16 {
        let mut best = f64::INFINITY;
        for mask in 1u32..(1u32 << vars.len()) {
            let (mut w, mut c) = (0, 0.0);
            for (j, &k) in vars.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    w += weight(k);
                    c += cost(k);
                }
            }
            if w >= deficit && c < best {
                best = c;
            }
        }
        best
    } else {
        // fractional cover by best cost per unit of weight
        let mut items: Vec<(f64, i64)> = vars.iter().map(|&k| (cost(k), weight(k))).collect();
        items.sort_by(|a, b| (a.0 / a.1 as f64).total_cmp(&(b.0 / b.1 as f64)));
        let mut need = deficit as f64;
        let mut total = 0.0;
        for (c, w) in items {
            if need <= 0.0 {
                break;
            }
            let take = (need / w as f64).min(1.0);
            total += take * c;
            need -= take * w as f64;
        }
        total
    }
}
