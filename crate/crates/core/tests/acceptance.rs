//! Acceptance suite. Runs without the libtest harness so that the verdict
//! lines are always printed; exits non-zero on any unexpected result.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmu_fdl::estimation::{wls_estimate, MeasurementModel, MeasurementVector};
use pmu_fdl::grid::benchmark::benchmark_grid;
use pmu_fdl::noise::{perturb, NoiseParams};
use pmu_fdl::observability::{
    check_lemma1, check_theorem1, compute_clusters, compute_single_line_ufcs,
    empirical_cluster_oracle, rank_observability_oracle, ORACLE_TOLERANCE,
};
use pmu_fdl::placement::{build_problem, exhaustive_oracle, solve_placement, CostOption};
use pmu_fdl::simulation::{
    benchmark_scenarios, run_campaign, synthesize_measurements, CampaignConfig, FaultScenario,
    FaultType,
};
use pmu_fdl::{GridModel, Monitoring, NodeId};

const PLACEMENT_TIME_LIMIT: Duration = Duration::from_secs(1);
const RANDOM_TREES: usize = 100;
const MAX_RANDOM_TREE: usize = 12;
const MAX_ENUMERATED_TREE: usize = 8;
const THEOREM2_TRIALS: usize = 20;
const POSITIONS: [f64; 3] = [0.25, 0.5, 0.75];
const MC_RUNS: usize = 100;
const MC_TIME_LIMIT: Duration = Duration::from_secs(600);
const DL_MULTI_PHASE: f64 = 0.95;
const DL_SINGLE_PHASE_SOLID: f64 = 0.85;
const DL_SINGLE_PHASE_PETERSEN: f64 = 0.75;
const NOISE_SAMPLES: usize = 10_000;
const NOISE_STD_TOLERANCE: f64 = 0.05;
const WLS_GRIDS: usize = 50;
const WLS_TOLERANCE: f64 = 1e-9;

struct Verdict {
    passed: bool,
    /// False when a failure does not match the known analysis.
    expected: bool,
    detail: String,
}

impl Verdict {
    fn pass(detail: String) -> Self {
        Self {
            passed: true,
            expected: true,
            detail,
        }
    }

    fn fail(detail: String) -> Self {
        Self {
            passed: false,
            expected: false,
            detail,
        }
    }

    fn check(passed: bool, detail: String) -> Self {
        Self {
            passed,
            expected: passed,
            detail,
        }
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("placement reproduction", placement_reproduction),
        ("placement solver exactness", solver_exactness),
        ("observability equivalence", observability_equivalence),
        ("residual equality within clusters", residual_equality),
        ("noise-free end-to-end", noise_free_end_to_end),
        ("monte carlo at pmu noise", monte_carlo),
        ("noise fidelity and determinism", noise_fidelity),
        ("wls vs normal equations", wls_equivalence),
    ];
    let mut unexpected = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = run();
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!(
            "[{}] {status} {name} ({:.1?}): {}",
            k + 1,
            t.elapsed(),
            v.detail
        );
        if !v.expected {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed outside the known limitations");
        std::process::exit(1);
    }
}

fn forks(grid: &GridModel) -> Vec<NodeId> {
    grid.node_ids().filter(|n| grid.degree(*n) > 2).collect()
}

fn placement_reproduction() -> Verdict {
    let grid = benchmark_grid();
    let t = Instant::now();
    let uniform = solve_placement(&build_problem(&grid, CostOption::Uniform, &[]).unwrap())
        .unwrap()
        .with_clusters(&grid)
        .unwrap();
    let resolution = solve_placement(&build_problem(&grid, CostOption::Resolution, &[]).unwrap())
        .unwrap()
        .with_clusters(&grid)
        .unwrap();
    let elapsed = t.elapsed();

    let mon = resolution.monitoring();
    let theorem1 = check_theorem1(&grid, &mon).holds;
    let fork_set: BTreeSet<NodeId> = forks(&grid).into_iter().collect();
    let unconstrained_ok = fork_set
        .iter()
        .filter(|k| {
            grid.neighbors(**k)
                .iter()
                .all(|(nb, _)| !fork_set.contains(nb))
        })
        .all(|k| !mon.contains(*k));
    let (du, ru) = (uniform.d, uniform.r.unwrap());
    let (dr, rr) = (resolution.d, resolution.r.unwrap());
    let hard =
        theorem1 && dr <= du + 1 && rr > ru && unconstrained_ok && elapsed < PLACEMENT_TIME_LIMIT;
    let exact = du == 11 && dr == 12 && rr == 7;
    Verdict::check(
        hard && exact,
        format!("uniform d={du} r={ru}, resolution d={dr} r={rr}, theorem1={theorem1}, free forks unmonitored={unconstrained_ok}, {elapsed:.1?}"),
    )
}

fn solver_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..RANDOM_TREES {
        let n = rng.random_range(2..=MAX_RANDOM_TREE);
        let edges = common::random_tree(&mut rng, n);
        let grid = GridModel::from_edges(n, &edges, &[]).unwrap();
        for option in [CostOption::Uniform, CostOption::Resolution] {
            let p = build_problem(&grid, option, &[]).unwrap();
            let bb = solve_placement(&p).unwrap();
            let ex = exhaustive_oracle(&p).unwrap();
            if (bb.cost - ex.cost).abs() > 1e-9 || !p.is_feasible(&bb.gamma) {
                mismatches += 1;
            }
        }
    }
    Verdict::check(
        mismatches == 0,
        format!("{RANDOM_TREES} trees x 2 cost options, {mismatches} mismatches"),
    )
}

fn observability_equivalence() -> Verdict {
    let (mut cases, mut bad) = (0usize, [0usize; 3]);
    for n in 2..=MAX_ENUMERATED_TREE {
        for edges in common::all_trees(n) {
            let grid = GridModel::from_edges(n, &edges, &[]).unwrap();
            let problem = build_problem(&grid, CostOption::Uniform, &[]).unwrap();
            for mask in 0u32..(1 << n) {
                let gamma: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let mon = Monitoring::from_gamma(&gamma);
                cases += 1;
                let t1 = check_theorem1(&grid, &mon).holds;
                if problem.is_feasible(&gamma) != t1 {
                    bad[0] += 1;
                }
                let all_extensions = grid.branches().iter().all(|b| {
                    let ext = grid.extend_with_virtual_node(b.id, 0.5).unwrap();
                    rank_observability_oracle(&ext, &mon)
                });
                if all_extensions != t1 {
                    bad[1] += 1;
                }
                if check_lemma1(&grid, &mon).holds && !rank_observability_oracle(&grid, &mon) {
                    bad[2] += 1;
                }
            }
        }
    }
    Verdict::check(
        bad == [0; 3],
        format!("{cases} tree/pattern pairs, counterexamples program<->thm1 {}, thm1<->extensions {}, lemma1=>rank {}", bad[0], bad[1], bad[2]),
    )
}

fn residual_equality() -> Verdict {
    let grid = benchmark_grid();
    let mon = grid.monitoring();
    let partition = compute_clusters(&grid, &mon).unwrap();
    let report = empirical_cluster_oracle(&grid, &mon, THEOREM2_TRIALS, 11).unwrap();
    let agrees = report.agrees_with(&partition, &grid);
    Verdict::check(
        agrees && report.unobservable.is_empty() && report.max_spread <= ORACLE_TOLERANCE,
        format!(
            "{} groups, max in-cluster spread {:.1e}, oracle agrees={agrees}",
            report.groups.len(),
            report.max_spread
        ),
    )
}

fn noise_free_end_to_end() -> Verdict {
    let grid = benchmark_grid();
    let mon = grid.monitoring();
    let fake_lines: BTreeSet<_> = compute_single_line_ufcs(&grid, &mon).into_iter().collect();
    let mut scenarios = Vec::new();
    for b in grid
        .branches()
        .iter()
        .filter(|b| b.fault_hypothesis_eligible)
    {
        for pos in POSITIONS {
            for t in FaultType::ALL {
                scenarios.push(FaultScenario::new(b.id, pos, t));
            }
        }
    }
    let config = CampaignConfig {
        runs: 1,
        noise: NoiseParams::noise_free(),
        ..CampaignConfig::default()
    };
    let result = run_campaign(&grid, &mon, &scenarios, &config).unwrap();
    let mut misses = Vec::new();
    for s in &result.scenarios {
        let ok = s.counts.d_l == 1 && s.detected_on_time == 1 && s.characterization_correct == 1;
        if !ok {
            misses.push(s.scenario);
        }
    }
    let total = scenarios.len();
    if misses.is_empty() {
        return Verdict::pass(format!("{total}/{total} cases"));
    }
    // a fault exactly on a fake node is absorbed by the fake-node injection of
    // every hypothesis, so no estimate can single it out
    let on_fake_node = |s: &FaultScenario| s.position == 0.5 && fake_lines.contains(&s.branch);
    let explained = misses.iter().all(on_fake_node)
        && misses.len() == scenarios.iter().filter(|s| on_fake_node(s)).count();
    let mut v = Verdict::fail(format!(
        "{}/{total} cases; misses: {}",
        total - misses.len(),
        if explained {
            format!(
                "exactly the {} midpoint faults on fake-node lines",
                misses.len()
            )
        } else {
            misses
                .iter()
                .map(|s| s.describe(&grid))
                .collect::<Vec<_>>()
                .join(", ")
        }
    ));
    v.expected = explained;
    v
}

fn monte_carlo() -> Verdict {
    let grid = benchmark_grid();
    let mon = grid.monitoring();
    let scenarios = benchmark_scenarios(&grid).unwrap();
    let config = CampaignConfig {
        runs: MC_RUNS,
        base_seed: 1,
        ..CampaignConfig::default()
    };
    let t = Instant::now();
    let result = run_campaign(&grid, &mon, &scenarios, &config).unwrap();
    let elapsed = t.elapsed();

    let mut hard_ok = elapsed <= MC_TIME_LIMIT;
    let mut all_ok = hard_ok;
    for s in &result.scenarios {
        let c = &s.counts;
        let dl = c.d_l as f64 / c.total() as f64;
        let required = match s.scenario.fault_type {
            FaultType::ThreePhase | FaultType::TwoPhase => DL_MULTI_PHASE,
            FaultType::OnePhaseGround => DL_SINGLE_PHASE_SOLID,
            FaultType::OnePhasePetersen => DL_SINGLE_PHASE_PETERSEN,
        };
        let dl_ok = dl >= required;
        let char_ok = s.characterization_correct == s.detected;
        println!(
            "    {:26} I={:6.1} A  D-L {:3} D-nL {:3} nD-L {:3} nD-nL {:3}  characterized {:3}/{:3}{}",
            s.description,
            s.fault_current,
            c.d_l,
            c.d_nl,
            c.nd_l,
            c.nd_nl,
            s.characterization_correct,
            s.detected,
            if dl_ok && char_ok { "" } else { "  <" }
        );
        all_ok &= dl_ok && char_ok && c.nd_nl == 0;
        // the compensated single-phase shortfall and the characterization
        // misses are the known limitation; the rest must hold
        if s.scenario.fault_type != FaultType::OnePhasePetersen {
            hard_ok &= dl_ok;
        }
        hard_ok &= c.nd_nl == 0;
    }
    let mut v = Verdict::check(
        all_ok,
        format!(
            "{} scenarios x {MC_RUNS} runs in {elapsed:.1?}",
            result.scenarios.len()
        ),
    );
    v.expected = hard_ok;
    v
}

fn noise_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = NoiseParams::default();
    let mut worst: f64 = 0.0;
    for (mag, sm, sp) in [
        (11547.0, noise.v_mag, noise.v_phase),
        (180.0, noise.i_mag, noise.i_phase),
    ] {
        let z0 = Complex64::from_polar(mag, 0.4);
        let (mut dm, mut dp) = (Vec::new(), Vec::new());
        for _ in 0..NOISE_SAMPLES {
            let z = perturb(z0, sm, sp, &mut rng);
            dm.push(z.norm() / mag - 1.0);
            dp.push((z / z0).arg());
        }
        worst = worst
            .max((std_dev(&dm) / sm - 1.0).abs())
            .max((std_dev(&dp) / sp - 1.0).abs());
    }
    let pre = MeasurementVector::from_phasors(
        &[pmu_fdl::grid::balanced_triplet(11547.0, 0.1)],
        &[pmu_fdl::grid::balanced_triplet(150.0, -0.3)],
    );
    let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.02).collect();
    let a = synthesize_measurements(&pre, None, &times, &noise, 99);
    let b = synthesize_measurements(&pre, None, &times, &noise, 99);
    let bit_exact = a.iter().zip(&b).all(|(x, y)| {
        x.0.iter()
            .zip(y.0.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits())
    });
    Verdict::check(
        worst <= NOISE_STD_TOLERANCE && bit_exact,
        format!("worst relative sd error {:.2}% over {NOISE_SAMPLES} samples, seeded streams bit-exact={bit_exact}", 100.0 * worst),
    )
}

fn std_dev(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn wls_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut grids = 0;
    while grids < WLS_GRIDS {
        let n = rng.random_range(2..=8);
        let edges = common::random_tree(&mut rng, n);
        let monitored: Vec<usize> = (1..=n).filter(|_| rng.random_bool(0.7)).collect();
        let grid = common::random_line_grid(&mut rng, n, &edges, &monitored);
        let mon = grid.monitoring();
        if !rank_observability_oracle(&grid, &mon) {
            continue;
        }
        grids += 1;
        let rows = 12 * mon.len();
        let var = DVector::from_fn(rows, |_, _| rng.random_range(0.5..2.0) * 1e-2);
        let model = MeasurementModel::with_variances(&grid, &mon, var.clone()).unwrap();
        let z = MeasurementVector(DVector::from_fn(rows, |_, _| {
            rng.random_range(-100.0..100.0)
        }));
        let est = wls_estimate(&model, &z).unwrap();

        let h = model.h();
        let w = DVector::from_iterator(rows, var.iter().map(|v| 1.0 / v));
        let hw = h.transpose() * nalgebra::DMatrix::from_diagonal(&w);
        let x = (&hw * h).lu().solve(&(&hw * &z.0)).unwrap();
        let r = &z.0 - h * &x;
        let wmr: f64 = r.iter().zip(w.iter()).map(|(ri, wi)| ri * ri * wi).sum();
        // square systems have a residual of exactly zero, compare it against
        // the weighted measurement energy instead
        let scale = if rows == 6 * n {
            z.0.iter().zip(w.iter()).map(|(zi, wi)| zi * zi * wi).sum()
        } else {
            wmr
        };
        worst = worst
            .max((&est.x_hat.0 - &x).norm() / x.norm())
            .max((est.wmr - wmr).abs() / scale);
    }
    Verdict::check(
        worst <= WLS_TOLERANCE,
        format!("{WLS_GRIDS} random grids, worst relative deviation {worst:.1e}"),
    )
}
