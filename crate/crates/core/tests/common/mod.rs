#![allow(dead_code)]

use std::collections::BTreeSet;

use num_complex::Complex64;
use pmu_fdl::grid::{
    symmetric_phase_matrix, Branch, BranchKind, Grounding, Node, NodeKind, PhaseMatrix,
};
use pmu_fdl::{BranchId, GridModel, NodeId};
use rand::Rng;

/// Edges (1-based) of the labelled tree with Prüfer sequence `seq`.
pub fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
        edges.push((leaf + 1, s + 1));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0] + 1, rest[1] + 1));
    edges
}

/// Uniformly random labelled tree on `n ≥ 2` nodes.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(1, 2)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    prufer_edges(&seq, n)
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a - 1].push(b - 1);
        adj[b - 1].push(a - 1);
    }
    adj
}

fn rooted_code(adj: &[Vec<usize>], v: usize, parent: Option<usize>) -> String {
    let mut kids: Vec<String> = adj[v]
        .iter()
        .filter(|&&w| Some(w) != parent)
        .map(|&w| rooted_code(adj, w, Some(v)))
        .collect();
    kids.sort();
    format!("({})", kids.concat())
}

/// Isomorphism-invariant code of a tree (minimum over its centres).
pub fn canonical_code(n: usize, edges: &[(usize, usize)]) -> String {
    let adj = adjacency(n, edges);
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut layer: Vec<usize> = (0..n).filter(|&i| degree[i] <= 1).collect();
    let mut left = n;
    while left > 2 {
        left -= layer.len();
        let mut next = Vec::new();
        for &v in &layer {
            for &w in &adj[v] {
                degree[w] -= 1;
                if degree[w] == 1 {
                    next.push(w);
                }
            }
        }
        layer = next;
    }
    layer
        .iter()
        .map(|&c| rooted_code(&adj, c, None))
        .min()
        .unwrap()
}

/// One representative of every unlabelled tree on `n` nodes.
pub fn all_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 2 {
        return vec![vec![(1, 2)]];
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut seq = vec![0usize; n - 2];
    loop {
        let edges = prufer_edges(&seq, n);
        if seen.insert(canonical_code(n, &edges)) {
            out.push(edges);
        }
        let mut k = 0;
        while k < seq.len() {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k == seq.len() {
            return out;
        }
    }
}

/// Tree grid with random mutually coupled lines and line charging.
pub fn random_line_grid<R: Rng>(
    rng: &mut R,
    n: usize,
    edges: &[(usize, usize)],
    monitored: &[usize],
) -> GridModel {
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
        .map(|(k, &(a, b))| {
            let len = rng.random_range(0.2..3.0);
            let z_self = Complex64::new(0.3 * len, 0.5 * len);
            let z_mut = Complex64::new(0.05 * len, 0.15 * len);
            let shunt = PhaseMatrix::from_diagonal_element(Complex64::new(0.0, 1e-5 * len));
            Branch {
                id: BranchId(k + 1),
                from: NodeId(a),
                to: NodeId(b),
                series_impedance: symmetric_phase_matrix(z_self, z_mut),
                shunt_from: shunt,
                shunt_to: shunt,
                kind: BranchKind::Line,
                fault_hypothesis_eligible: true,
                origin: BranchId(k + 1),
            }
        })
        .collect();
    GridModel::new(nodes, branches, Vec::new(), Vec::new(), 50.0).unwrap()
}
