//! Ground-truth phasors of faulted and healthy grids, PMU noise synthesis and
//! Monte Carlo campaigns.

mod campaign;
mod scenario;
mod synth;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimation::MeasurementVector;
use crate::grid::{AdmittanceMatrix, BranchId, GridModel, NodeId, NodeKind, PhaseMatrix, Triplet};
use crate::observability::Monitoring;

pub use campaign::{
    run_campaign, run_seed, CampaignConfig, CampaignResult, Outcome, OutcomeCounts, RunRecord,
    ScenarioResult,
};
pub use scenario::{
    benchmark_scenarios, grid_for_fault, parse_scenarios, write_scenarios, FaultScenario,
    FaultType, DEFAULT_FAULT_RESISTANCE, DEFAULT_FAULT_TIME, DEFAULT_POST_FAULT_DURATION,
};
pub use synth::{synthesize_measurements, synthesize_stream, Timeline};

/// Solved linear circuit.
#[derive(Clone, Debug)]
pub struct SteadyState {
    /// Grid the circuit was solved on (split at the fault when faulted).
    pub grid: GridModel,
    /// Nodal voltages, node-major, length `3n`.
    pub voltages: DVector<Complex64>,
    pub fault_node: Option<NodeId>,
    /// Phase currents flowing from the fault node into the fault.
    pub fault_current: Option<Triplet>,
    /// Largest relative KCL residual over all nodal equations.
    pub kcl_residual: f64,
}

impl SteadyState {
    pub fn voltage(&self, node: NodeId) -> Triplet {
        let i = 3 * node.index();
        Triplet::new(self.voltages[i], self.voltages[i + 1], self.voltages[i + 2])
    }

    /// Current injected into the network at `node`: the sum of branch
    /// currents leaving it, shunts included. This is what a PMU reports.
    pub fn network_injection(&self, node: NodeId) -> Result<Triplet> {
        let y = AdmittanceMatrix::network(&self.grid)?;
        Ok(y.injection(node, &self.voltages))
    }

    /// Noise-free measurement vector at the monitored nodes.
    pub fn measurements(&self, monitoring: &Monitoring) -> Result<MeasurementVector> {
        let y = AdmittanceMatrix::network(&self.grid)?;
        let mut v = Vec::with_capacity(monitoring.len());
        let mut i = Vec::with_capacity(monitoring.len());
        for node in monitoring.iter() {
            if self.grid.node(node)?.kind != NodeKind::Real {
                return Err(Error::InvalidGrid(format!(
                    "node {node} is not a real node"
                )));
            }
            v.push(self.voltage(node));
            i.push(y.injection(node, &self.voltages));
        }
        Ok(MeasurementVector::from_phasors(&v, &i))
    }

    /// Largest phase magnitude of the fault current, zero when unfaulted.
    pub fn fault_current_magnitude(&self) -> f64 {
        self.fault_current
            .map(|i| i.iter().map(|c| c.norm()).fold(0.0, f64::max))
            .unwrap_or(0.0)
    }
}

/// Fault admittance matrix attached at the fault node.
fn fault_admittance(kind: FaultType, resistance: f64) -> PhaseMatrix {
    let g = Complex64::new(1.0 / resistance, 0.0);
    let mut y = PhaseMatrix::zeros();
    match kind {
        FaultType::ThreePhase => {
            for p in 0..3 {
                y[(p, p)] = g;
            }
        }
        FaultType::TwoPhase => {
            y[(0, 0)] = g;
            y[(1, 1)] = g;
            y[(0, 1)] = -g;
            y[(1, 0)] = -g;
        }
        FaultType::OnePhaseGround | FaultType::OnePhasePetersen => y[(0, 0)] = g,
    }
    y
}

/// Solves the linear circuit of `grid`: constant-impedance loads, sources as
/// EMF behind their internal impedance, neutral grounding paths, plus the
/// fault when given.
pub fn solve_steady_state(grid: &GridModel, fault: Option<&FaultScenario>) -> Result<SteadyState> {
    if grid.sources().is_empty() {
        return Err(Error::InvalidGrid("circuit has no source".into()));
    }
    let (circuit, fault_node, y_fault) = match fault {
        Some(f) => {
            f.validate(grid)?;
            let (split, node) = grid.split_branch(f.branch, f.position, NodeKind::Virtual)?;
            (
                split,
                Some(node),
                Some(fault_admittance(f.fault_type, f.resistance)),
            )
        }
        None => (grid.clone(), None, None),
    };
    let n = circuit.node_count();
    let mut y = AdmittanceMatrix::build(&circuit)?.into_matrix();
    if let (Some(node), Some(yf)) = (fault_node, y_fault) {
        let r = 3 * node.index();
        for i in 0..3 {
            for j in 0..3 {
                y[(r + i, r + j)] += yf[(i, j)];
            }
        }
    }
    let mut rhs = DVector::zeros(3 * n);
    for src in circuit.sources() {
        let (_, injection) = crate::grid::admittance_norton(src)?;
        let r = 3 * src.node.index();
        for p in 0..3 {
            rhs[r + p] += injection[p];
        }
    }
    let voltages = y
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|c| c.is_finite()))
        .ok_or(Error::SingularCircuit)?;
    let kcl_residual = kcl_residual(&y, &voltages, &rhs);
    if !(kcl_residual < 1e-6) {
        return Err(Error::SingularCircuit);
    }
    let fault_current = match (fault_node, y_fault) {
        (Some(node), Some(yf)) => {
            let r = 3 * node.index();
            let v = Triplet::new(voltages[r], voltages[r + 1], voltages[r + 2]);
            Some(yf * v)
        }
        _ => None,
    };
    Ok(SteadyState {
        grid: circuit,
        voltages,
        fault_node,
        fault_current,
        kcl_residual,
    })
}

fn kcl_residual(y: &DMatrix<Complex64>, v: &DVector<Complex64>, rhs: &DVector<Complex64>) -> f64 {
    let r = y * v - rhs;
    (0..r.len())
        .map(|i| {
            let scale: f64 =
                (0..v.len()).map(|k| (y[(i, k)] * v[k]).norm()).sum::<f64>() + rhs[i].norm();
            if scale == 0.0 {
                0.0
            } else {
                r[i].norm() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Branch id of the line between two nodes, for scenario definitions.
pub fn line(grid: &GridModel, a: usize, b: usize) -> Result<BranchId> {
    grid.find_branch(NodeId(a), NodeId(b))
        .ok_or_else(|| Error::InvalidScenario(format!("no branch between nodes {a} and {b}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::benchmark::{benchmark_grid, benchmark_grid_petersen};
    use crate::grid::{Branch, BranchKind, Grounding, Load, Neutral, Node, Source};

    fn two_node() -> GridModel {
        let z = PhaseMatrix::from_diagonal_element(Complex64::new(1.0, 2.0));
        let nodes = (1..=2)
            .map(|i| Node {
                id: NodeId(i),
                name: format!("n{i}"),
                monitored: true,
                kind: NodeKind::Real,
                grounding: Grounding::None,
            })
            .collect();
        let branch = Branch {
            id: BranchId(1),
            from: NodeId(1),
            to: NodeId(2),
            series_impedance: z,
            shunt_from: PhaseMatrix::zeros(),
            shunt_to: PhaseMatrix::zeros(),
            kind: BranchKind::Line,
            fault_hypothesis_eligible: true,
            origin: BranchId(1),
        };
        let source = Source {
            node: NodeId(1),
            emf: crate::grid::balanced_triplet(100.0, 0.0),
            impedance: PhaseMatrix::from_diagonal_element(Complex64::new(0.0, 1.0)),
            neutral: Neutral::Grounded,
        };
        let load = Load {
            node: NodeId(2),
            delta: [Complex64::new(30.0, 0.0); 3],
        };
        GridModel::new(nodes, vec![branch], vec![source], vec![load], 50.0).unwrap()
    }

    #[test]
    fn two_node_matches_thevenin() {
        let g = two_node();
        let s = solve_steady_state(&g, None).unwrap();
        // balanced delta 30 Ω is a wye of 10 Ω per phase
        let e = Complex64::new(100.0, 0.0);
        let zs = Complex64::new(0.0, 1.0);
        let zl = Complex64::new(1.0, 2.0);
        let zy = Complex64::new(10.0, 0.0);
        let i = e / (zs + zl + zy);
        let expected = i * zy;
        assert!((s.voltage(NodeId(2))[0] - expected).norm() < 1e-9 * expected.norm());
        assert!(s.kcl_residual < 1e-9);
    }

    #[test]
    fn bolted_three_phase_collapses_voltage() {
        let g = benchmark_grid();
        let f = FaultScenario::new(line(&g, 4, 5).unwrap(), 0.5, FaultType::ThreePhase)
            .with_resistance(1e-6);
        let s = solve_steady_state(&g, Some(&f)).unwrap();
        let v = s.voltage(s.fault_node.unwrap());
        let nominal = 11547.0;
        assert!(v.iter().all(|c| c.norm() < 1e-3 * nominal));
    }

    #[test]
    fn benchmark_kcl_and_transparency() {
        let g = benchmark_grid();
        let s = solve_steady_state(&g, None).unwrap();
        assert!(s.kcl_residual < 1e-9);
        let m = g.monitoring();
        let (feg, _) = g
            .add_fake_nodes(&m, &crate::observability::compute_single_line_ufcs(&g, &m))
            .unwrap();
        let sf = solve_steady_state(&feg, None).unwrap();
        for node in g.node_ids() {
            let (a, b) = (s.voltage(node), sf.voltage(node));
            assert!((a - b).norm() <= 1e-9 * a.norm());
        }
    }

    #[test]
    fn petersen_limits_single_phase_current() {
        let solid = benchmark_grid();
        let pet = benchmark_grid_petersen();
        let br = line(&solid, 9, 10).unwrap();
        let g = FaultScenario::new(br, 0.5, FaultType::OnePhaseGround);
        let p = FaultScenario::new(br, 0.5, FaultType::OnePhasePetersen);
        let ig = solve_steady_state(&solid, Some(&g))
            .unwrap()
            .fault_current_magnitude();
        let ip = solve_steady_state(&pet, Some(&p))
            .unwrap()
            .fault_current_magnitude();
        assert!(ip < ig, "petersen {ip} vs solid {ig}");
        assert!(matches!(
            solve_steady_state(&solid, Some(&p)),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn fault_current_ordering() {
        // with R_f between A and B a resistive 2ph fault sees the line voltage,
        // so the ordering is a low-impedance property
        let pet = benchmark_grid_petersen();
        let br = line(&pet, 4, 5).unwrap();
        let i = |t| {
            solve_steady_state(
                &pet,
                Some(&FaultScenario::new(br, 0.5, t).with_resistance(1.0)),
            )
            .unwrap()
            .fault_current_magnitude()
        };
        let (i3, i2, i1) = (
            i(FaultType::ThreePhase),
            i(FaultType::TwoPhase),
            i(FaultType::OnePhasePetersen),
        );
        assert!(i3 > i2 && i2 > i1, "{i3} {i2} {i1}");
    }

    #[test]
    fn phase_to_phase_current_is_balanced() {
        let g = benchmark_grid();
        let f = FaultScenario::new(line(&g, 1, 17).unwrap(), 0.5, FaultType::TwoPhase);
        let i = solve_steady_state(&g, Some(&f))
            .unwrap()
            .fault_current
            .unwrap();
        assert!((i[0] + i[1]).norm() < 1e-9 * i[0].norm());
        assert_eq!(i[2].norm(), 0.0);
    }
}
