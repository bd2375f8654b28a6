//! Browser bindings over the benchmark grid. Every call returns a JSON
//! string; errors surface as JS exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pmu_fdl::fdla::{prepare_bank, run_fdla, FdlaConfig};
use pmu_fdl::grid::benchmark::benchmark_grid;
use pmu_fdl::noise::NoiseParams;
use pmu_fdl::observability::{check_theorem1, compute_clusters, ClusterPartition};
use pmu_fdl::placement::{build_problem, solve_placement, CostOption};
use pmu_fdl::simulation::{
    grid_for_fault, line, solve_steady_state, synthesize_stream, FaultScenario, FaultType, Timeline,
};
use pmu_fdl::{GridModel, Monitoring, NodeId};

#[derive(Serialize)]
struct Branch {
    id: usize,
    from: usize,
    to: usize,
}

#[derive(Serialize)]
struct ClusterView {
    monitored: Vec<usize>,
    branches: Vec<Branch>,
    /// Cluster id per entry of `branches`.
    cluster_of: Vec<Option<usize>>,
    r: usize,
    violations: Vec<usize>,
    d: usize,
    cost: Option<f64>,
}

fn cluster_view(
    grid: &GridModel,
    mon: &Monitoring,
    cost: Option<f64>,
) -> Result<ClusterView, String> {
    let t1 = check_theorem1(grid, mon);
    let partition = if t1.holds {
        Some(compute_clusters(grid, mon).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let branches: Vec<Branch> = grid
        .branches()
        .iter()
        .map(|b| Branch {
            id: b.id.0,
            from: b.from.0,
            to: b.to.0,
        })
        .collect();
    let cluster_of = branches
        .iter()
        .map(|b| {
            partition
                .as_ref()
                .and_then(|p: &ClusterPartition| p.cluster_of(pmu_fdl::BranchId(b.id)))
                .map(|c| c.id)
        })
        .collect();
    Ok(ClusterView {
        monitored: mon.iter().map(|n| n.0).collect(),
        branches,
        cluster_of,
        r: partition.as_ref().map_or(0, |p| p.r()),
        violations: t1.violations.iter().map(|n| n.0).collect(),
        d: mon.len(),
        cost,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Optimal placement on the benchmark with `cost` = `uniform` or `resolution`.
pub fn place_json(cost: &str) -> Result<String, String> {
    let grid = benchmark_grid();
    let option: CostOption = cost.parse()?;
    let problem = build_problem(&grid, option, &[]).map_err(|e| e.to_string())?;
    let sol = solve_placement(&problem).map_err(|e| e.to_string())?;
    let mon = sol.monitoring();
    to_json(&cluster_view(&grid, &mon, Some(sol.cost))?)
}

/// Clusters for a hand-picked monitored set.
pub fn clusters_json(monitored: &[usize]) -> Result<String, String> {
    let grid = benchmark_grid();
    let mon = Monitoring::from_ids(monitored.iter().map(|&n| NodeId(n)));
    to_json(&cluster_view(&grid, &mon, None)?)
}

#[derive(Serialize)]
struct SimulationView {
    scenario: String,
    fault_current: f64,
    detected: bool,
    detection_time: Option<f64>,
    cluster: Option<usize>,
    cluster_branches: Vec<usize>,
    true_cluster: Option<usize>,
    fault_type: Option<String>,
    threshold: f64,
    times: Vec<f64>,
    w0: Vec<f64>,
    clusters: Vec<usize>,
    wl: Vec<Vec<f64>>,
    /// Phase A, B, C injection magnitudes of the selected hypothesis.
    injection: Vec<[f64; 3]>,
}

/// Simulates a fault on the line `from`-`to` of the benchmark with its
/// shipped placement and runs the detector on the synthesized stream.
pub fn simulate_json(
    from: usize,
    to: usize,
    position: f64,
    fault_type: &str,
    resistance: f64,
    noisy: bool,
    seed: u64,
) -> Result<String, String> {
    let base = benchmark_grid();
    let mon = base.monitoring();
    let ft: FaultType = fault_type.parse()?;
    let scenario = FaultScenario::new(
        line(&base, from, to).map_err(|e| e.to_string())?,
        position,
        ft,
    )
    .with_resistance(resistance);
    let err = |e: pmu_fdl::Error| e.to_string();
    let grid = grid_for_fault(&base, ft).map_err(err)?;
    scenario.validate(&grid).map_err(err)?;
    let partition = compute_clusters(&grid, &mon).map_err(err)?;
    let healthy = solve_steady_state(&grid, None).map_err(err)?;
    let faulted = solve_steady_state(&grid, Some(&scenario)).map_err(err)?;
    let noise = if noisy {
        NoiseParams::default()
    } else {
        NoiseParams::noise_free()
    };
    let config = FdlaConfig::default().matched_to(&noise);
    let timeline = Timeline::with_calibration(
        config.calibration_window,
        scenario.fault_time,
        scenario.duration,
        noise.sample_period,
    );
    let stream = synthesize_stream(
        mon.iter().collect(),
        &healthy.measurements(&mon).map_err(err)?,
        Some((
            &faulted.measurements(&mon).map_err(err)?,
            scenario.fault_time,
        )),
        &timeline,
        &noise,
        seed,
    );
    let bank = prepare_bank(&grid, &mon, &partition, &stream, &config).map_err(err)?;
    let report = run_fdla(&bank, &stream, &config).map_err(err)?;
    let cluster_branches = report
        .cluster
        .and_then(|c| partition.cluster(c))
        .map(|c| c.branches.iter().map(|b| b.0).collect())
        .unwrap_or_default();
    let injection = report
        .injection_trace()
        .iter()
        .map(|i| [i[0].norm(), i[1].norm(), i[2].norm()])
        .collect();
    to_json(&SimulationView {
        scenario: scenario.describe(&grid),
        fault_current: faulted.fault_current_magnitude(),
        detected: report.detected,
        detection_time: report.detection_time,
        cluster: report.cluster,
        cluster_branches,
        true_cluster: partition.cluster_of(scenario.branch).map(|c| c.id),
        fault_type: report.fault_type.map(|f| f.label()),
        threshold: report.threshold,
        times: report.times,
        w0: report.w0,
        clusters: report.clusters,
        wl: report.wl,
        injection,
    })
}

#[wasm_bindgen]
pub fn place(cost: &str) -> Result<String, JsError> {
    place_json(cost).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn clusters(monitored: Vec<usize>) -> Result<String, JsError> {
    clusters_json(&monitored).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(
    from: usize,
    to: usize,
    position: f64,
    fault_type: &str,
    resistance: f64,
    noisy: bool,
    seed: u32,
) -> Result<String, JsError> {
    simulate_json(
        from,
        to,
        position,
        fault_type,
        resistance,
        noisy,
        seed as u64,
    )
    .map_err(|e| JsError::new(&e))
}
