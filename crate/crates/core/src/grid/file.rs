//! Grid description file (TOML).
//!
//! ```toml
//! FREQUENCY = 50.0
//!
//! [[NODES]]
//! id = 1
//! name = "bus 1"
//! monitored = true
//! grounding = { kind = "solid", transformer = [0.5, 5.0] }
//!
//! [[BRANCHES]]
//! id = 1
//! from = 1
//! to = 2
//! kind = "line"          # or "transformer"
//! eligible = true        # defaults: lines true, transformers false
//! impedance = [[[r, x], [r, x], [r, x]], ...]   # 3x3, ohm, re+im pairs
//! shunt = [[[g, b], ...], ...]                  # 3x3 per end, siemens
//!
//! [[SOURCES]]
//! node = 15
//! emf = [[re, im], [re, im], [re, im]]          # volt
//! impedance = [[[r, x], ...], ...]
//! neutral = "isolated"   # or "grounded"
//!
//! [[LOADS]]
//! node = 2
//! delta = [[r, x], [r, x], [r, x]]              # legs AB, BC, CA, ohm
//! ```
//!
//! Petersen grounding takes `inductance` (henry) and `resistance` (ohm, series
//! loss) in addition to `transformer`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    Branch, BranchId, BranchKind, GridModel, Grounding, Load, Neutral, Node, NodeId, NodeKind,
    PhaseMatrix, Source, Triplet,
};
use crate::error::{Error, Result};

type Pair = [f64; 2];
type Matrix = [[Pair; 3]; 3];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(rename = "FREQUENCY")]
    frequency: f64,
    #[serde(rename = "NODES")]
    nodes: Vec<NodeRecord>,
    #[serde(rename = "BRANCHES", default)]
    branches: Vec<BranchRecord>,
    #[serde(rename = "SOURCES", default)]
    sources: Vec<SourceRecord>,
    #[serde(rename = "LOADS", default)]
    loads: Vec<LoadRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: usize,
    #[serde(default)]
    name: String,
    #[serde(default)]
    monitored: bool,
    #[serde(default, skip_serializing_if = "is_real")]
    kind: Option<NodeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grounding: Option<GroundingRecord>,
}

fn is_real(kind: &Option<NodeKind>) -> bool {
    matches!(kind, None | Some(NodeKind::Real))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundingRecord {
    kind: GroundingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inductance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resistance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transformer: Option<Pair>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GroundingKind {
    Solid,
    Petersen,
    None,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchRecord {
    id: usize,
    from: usize,
    to: usize,
    kind: BranchKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eligible: Option<bool>,
    impedance: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shunt: Option<Matrix>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceRecord {
    node: usize,
    emf: [Pair; 3],
    impedance: Matrix,
    #[serde(default)]
    neutral: Neutral,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadRecord {
    node: usize,
    delta: [Pair; 3],
}

fn c(p: Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

fn to_matrix(m: &Matrix) -> PhaseMatrix {
    PhaseMatrix::from_fn(|i, j| c(m[i][j]))
}

fn from_matrix(m: &PhaseMatrix) -> Matrix {
    let mut out = [[[0.0; 2]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = pair(m[(i, j)]);
        }
    }
    out
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a grid description from TOML text.
pub fn parse_grid(text: &str) -> Result<GridModel> {
    let file: GridFile = toml::from_str(text).map_err(|e| Error::GridFile {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let semantic = |message: String| Error::GridFile {
        line: None,
        message,
    };

    let mut nodes = Vec::with_capacity(file.nodes.len());
    for rec in file.nodes {
        let transformer = rec.grounding.as_ref().and_then(|g| g.transformer).map(c);
        let grounding = match rec.grounding {
            None => Grounding::None,
            Some(g) => match g.kind {
                GroundingKind::None => Grounding::None,
                GroundingKind::Solid => Grounding::Solid {
                    transformer: transformer.unwrap_or_default(),
                },
                GroundingKind::Petersen => Grounding::Petersen {
                    inductance: g.inductance.ok_or_else(|| {
                        semantic(format!(
                            "node {}: petersen grounding needs inductance",
                            rec.id
                        ))
                    })?,
                    resistance: g.resistance.unwrap_or(0.0),
                    transformer: transformer.unwrap_or_default(),
                },
            },
        };
        if let Grounding::Solid { transformer } = grounding {
            if transformer.norm() == 0.0 {
                return Err(semantic(format!(
                    "node {}: solid grounding needs a nonzero transformer impedance",
                    rec.id
                )));
            }
        }
        nodes.push(Node {
            id: NodeId(rec.id),
            name: if rec.name.is_empty() {
                format!("bus {}", rec.id)
            } else {
                rec.name
            },
            monitored: rec.monitored,
            kind: rec.kind.unwrap_or(NodeKind::Real),
            grounding,
        });
    }

    let branches = file
        .branches
        .into_iter()
        .map(|rec| {
            let shunt = rec
                .shunt
                .as_ref()
                .map(to_matrix)
                .unwrap_or_else(PhaseMatrix::zeros);
            Branch {
                id: BranchId(rec.id),
                from: NodeId(rec.from),
                to: NodeId(rec.to),
                series_impedance: to_matrix(&rec.impedance),
                shunt_from: shunt,
                shunt_to: shunt,
                kind: rec.kind,
                fault_hypothesis_eligible: rec.eligible.unwrap_or(rec.kind == BranchKind::Line),
                origin: BranchId(rec.id),
            }
        })
        .collect();

    let sources = file
        .sources
        .into_iter()
        .map(|rec| Source {
            node: NodeId(rec.node),
            emf: Triplet::new(c(rec.emf[0]), c(rec.emf[1]), c(rec.emf[2])),
            impedance: to_matrix(&rec.impedance),
            neutral: rec.neutral,
        })
        .collect();

    let loads = file
        .loads
        .into_iter()
        .map(|rec| Load {
            node: NodeId(rec.node),
            delta: [c(rec.delta[0]), c(rec.delta[1]), c(rec.delta[2])],
        })
        .collect();

    GridModel::new(nodes, branches, sources, loads, file.frequency).map_err(|e| match e {
        Error::InvalidGrid(message) => semantic(message),
        other => other,
    })
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridModel> {
    parse_grid(&std::fs::read_to_string(path)?)
}

/// Serializes a grid. Only grids whose branches have equal end shunts (as
/// produced by the file format) round-trip exactly.
pub fn write_grid(grid: &GridModel) -> Result<String> {
    let file = GridFile {
        frequency: grid.frequency(),
        nodes: grid
            .nodes()
            .iter()
            .map(|n| NodeRecord {
                id: n.id.0,
                name: n.name.clone(),
                monitored: n.monitored,
                kind: Some(n.kind),
                grounding: match n.grounding {
                    Grounding::None => None,
                    Grounding::Solid { transformer } => Some(GroundingRecord {
                        kind: GroundingKind::Solid,
                        inductance: None,
                        resistance: None,
                        transformer: Some(pair(transformer)),
                    }),
                    Grounding::Petersen {
                        inductance,
                        resistance,
                        transformer,
                    } => Some(GroundingRecord {
                        kind: GroundingKind::Petersen,
                        inductance: Some(inductance),
                        resistance: Some(resistance),
                        transformer: Some(pair(transformer)),
                    }),
                },
            })
            .collect(),
        branches: grid
            .branches()
            .iter()
            .map(|b| BranchRecord {
                id: b.id.0,
                from: b.from.0,
                to: b.to.0,
                kind: b.kind,
                eligible: Some(b.fault_hypothesis_eligible),
                impedance: from_matrix(&b.series_impedance),
                shunt: (b.shunt_from != PhaseMatrix::zeros()).then(|| from_matrix(&b.shunt_from)),
            })
            .collect(),
        sources: grid
            .sources()
            .iter()
            .map(|s| SourceRecord {
                node: s.node.0,
                emf: [pair(s.emf[0]), pair(s.emf[1]), pair(s.emf[2])],
                impedance: from_matrix(&s.impedance),
                neutral: s.neutral,
            })
            .collect(),
        loads: grid
            .loads()
            .iter()
            .map(|l| LoadRecord {
                node: l.node.0,
                delta: [pair(l.delta[0]), pair(l.delta[1]), pair(l.delta[2])],
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::GridFile {
        line: None,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"
FREQUENCY = 50.0

[[NODES]]
id = 1
monitored = true
grounding = { kind = "solid", transformer = [0.5, 5.0] }

[[NODES]]
id = 2

[[NODES]]
id = 3
monitored = true

[[BRANCHES]]
id = 1
from = 1
to = 2
kind = "line"
impedance = [[[0.5, 0.7], [0.1, 0.3], [0.1, 0.3]],
             [[0.1, 0.3], [0.5, 0.7], [0.1, 0.3]],
             [[0.1, 0.3], [0.1, 0.3], [0.5, 0.7]]]

[[BRANCHES]]
id = 2
from = 2
to = 3
kind = "transformer"
impedance = [[[0.0, 2.0], [0.0, 0.0], [0.0, 0.0]],
             [[0.0, 0.0], [0.0, 2.0], [0.0, 0.0]],
             [[0.0, 0.0], [0.0, 0.0], [0.0, 2.0]]]

[[LOADS]]
node = 3
delta = [[1200.0, 400.0], [1200.0, 400.0], [1200.0, 400.0]]
"#;

    #[test]
    fn parses_minimal_chain() {
        let g = parse_grid(CHAIN).unwrap();
        assert_eq!(g.node_count(), 3);
        assert!(g.branches()[0].fault_hypothesis_eligible);
        assert!(!g.branches()[1].fault_hypothesis_eligible);
        assert_eq!(g.monitoring().len(), 2);
        assert!(matches!(g.nodes()[0].grounding, Grounding::Solid { .. }));
        assert_eq!(g.loads().len(), 1);
    }

    #[test]
    fn round_trip() {
        let g = parse_grid(CHAIN).unwrap();
        let text = write_grid(&g).unwrap();
        assert_eq!(parse_grid(&text).unwrap(), g);
    }

    #[test]
    fn syntax_error_reports_line() {
        let broken = CHAIN.replace("id = 2\nfrom = 2", "id = 2\nfrom = = 2");
        match parse_grid(&broken) {
            Err(Error::GridFile { line: Some(l), .. }) => {
                let expected = broken.lines().position(|l| l.contains("= =")).unwrap() + 1;
                assert_eq!(l, expected);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_error_is_grid_file_error() {
        let broken = CHAIN.replace("from = 2\nto = 3", "from = 2\nto = 1");
        assert!(matches!(parse_grid(&broken), Err(Error::GridFile { .. })));
    }
}
