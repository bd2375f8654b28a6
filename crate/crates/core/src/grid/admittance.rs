use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{GridModel, Neutral, NodeId, PhaseMatrix, Source, Triplet};
use crate::error::{Error, Result};

/// Which elements enter the nodal admittance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdmittanceScope {
    /// Branch series and shunt terms only. This is the `Y` the estimator
    /// sees: loads, generators and grounding paths are node injections
    /// measured by the PMUs.
    Network,
    /// Network plus load impedances, source internal admittances and
    /// neutral grounding paths: the full linear circuit.
    Circuit,
}

/// 3n × 3n complex nodal admittance indexed by `(node, phase)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    /// Full circuit admittance of `grid`.
    pub fn build(grid: &GridModel) -> Result<Self> {
        Self::with_scope(grid, AdmittanceScope::Circuit)
    }

    /// Branch-only admittance used by the measurement model.
    pub fn network(grid: &GridModel) -> Result<Self> {
        Self::with_scope(grid, AdmittanceScope::Network)
    }

    pub fn with_scope(grid: &GridModel, scope: AdmittanceScope) -> Result<Self> {
        let n = grid.node_count();
        let mut y = DMatrix::zeros(3 * n, 3 * n);

        for br in grid.branches() {
            let ys = br
                .series_impedance
                .try_inverse()
                .filter(|m| m.iter().all(|c| c.is_finite()))
                .ok_or(Error::SingularImpedance(br.id))?;
            let (f, t) = (br.from.index(), br.to.index());
            add_block(&mut y, f, f, &(ys + br.shunt_from));
            add_block(&mut y, t, t, &(ys + br.shunt_to));
            add_block(&mut y, f, t, &(-ys));
            add_block(&mut y, t, f, &(-ys));
        }

        if scope == AdmittanceScope::Circuit {
            for load in grid.loads() {
                let i = load.node.index();
                add_block(&mut y, i, i, &delta_admittance(&load.delta));
            }
            for src in grid.sources() {
                let (p, _) = norton(src)?;
                let i = src.node.index();
                add_block(&mut y, i, i, &p);
            }
            let omega = grid.omega();
            for node in grid.nodes() {
                if let Some(z0) = node.grounding.zero_sequence_impedance(omega) {
                    let i = node.id.index();
                    let yg = PhaseMatrix::from_element(Complex64::new(1.0, 0.0) / (3.0 * z0));
                    add_block(&mut y, i, i, &yg);
                }
            }
        }
        Ok(Self { y })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.y
    }

    pub fn node_count(&self) -> usize {
        self.y.nrows() / 3
    }

    pub fn block(&self, row: NodeId, col: NodeId) -> PhaseMatrix {
        let (r, c) = (3 * row.index(), 3 * col.index());
        PhaseMatrix::from_fn(|i, j| self.y[(r + i, c + j)])
    }

    /// Three phase injections `Σ_k Y[node, k] V_k` for nodal voltages `v`
    /// (length 3n, node-major).
    pub fn injection(&self, node: NodeId, v: &nalgebra::DVector<Complex64>) -> Triplet {
        let r = 3 * node.index();
        let rows = self.y.rows(r, 3);
        let out = rows * v;
        Triplet::new(out[0], out[1], out[2])
    }
}

fn add_block(y: &mut DMatrix<Complex64>, r: usize, c: usize, m: &PhaseMatrix) {
    for i in 0..3 {
        for j in 0..3 {
            y[(3 * r + i, 3 * c + j)] += m[(i, j)];
        }
    }
}

/// Nodal admittance of delta legs `[AB, BC, CA]`.
pub(crate) fn delta_admittance(legs: &[Complex64; 3]) -> PhaseMatrix {
    let mut m = PhaseMatrix::zeros();
    for (k, z) in legs.iter().enumerate() {
        if z.norm() == 0.0 || !z.is_finite() {
            continue;
        }
        let yl = Complex64::new(1.0, 0.0) / z;
        let (a, b) = (k, (k + 1) % 3);
        m[(a, a)] += yl;
        m[(b, b)] += yl;
        m[(a, b)] -= yl;
        m[(b, a)] -= yl;
    }
    m
}

/// Norton equivalent `(P, P·E)` of a source. An isolated neutral is
/// eliminated, leaving a singular `P` that carries no zero-sequence current.
pub(crate) fn norton(src: &Source) -> Result<(PhaseMatrix, Triplet)> {
    let ys = src.impedance.try_inverse().ok_or_else(|| {
        Error::InvalidGrid(format!("singular source impedance at node {}", src.node))
    })?;
    let p = match src.neutral {
        Neutral::Grounded => ys,
        Neutral::Isolated => {
            let ones = Triplet::from_element(Complex64::new(1.0, 0.0));
            let col = ys * ones;
            let total = (ones.transpose() * col)[(0, 0)];
            ys - col * col.transpose() / total
        }
    };
    Ok((p, p * src.emf))
}
