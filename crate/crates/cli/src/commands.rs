use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use pmu_fdl::fdla::{prepare_bank, run_fdla, FdlaConfig, FdlaReport};
use pmu_fdl::grid::benchmark::benchmark_grid;
use pmu_fdl::grid::{read_grid, write_grid};
use pmu_fdl::noise::NoiseParams;
use pmu_fdl::observability::{
    check_lemma1, check_theorem1, compute_clusters, empirical_cluster_oracle,
    rank_observability_oracle, ClusterPartition, ConditionCheck, OracleReport,
};
use pmu_fdl::placement::{build_problem, solve_placement, CostOption, PlacementSolution};
use pmu_fdl::simulation::{
    benchmark_scenarios, grid_for_fault, line, parse_scenarios, run_campaign, solve_steady_state,
    synthesize_stream, CampaignConfig, CampaignResult, FaultScenario, Timeline,
};
use pmu_fdl::stream::{write_injection_trace, write_wmr_trace, MeasurementStream};
use pmu_fdl::{BranchId, GridModel, Monitoring, NodeId};

use crate::{Cli, Command, Failure, PlacementSource, ScenarioArgs};

const ORACLE_TRIALS: usize = 20;

struct Context {
    grid_path: Option<PathBuf>,
    seed: u64,
    out: Option<PathBuf>,
    placement: PlacementSource,
    splits: Vec<NodeId>,
    verify: bool,
    noise: NoiseParams,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let noise = cli.noise.params();
    if !noise.is_valid() {
        return Err(Failure::Input(
            "noise standard deviations must be finite and non-negative".into(),
        ));
    }
    let ctx = Context {
        grid_path: cli.grid,
        seed: cli.seed,
        out: cli.out,
        placement: cli.placement,
        splits: cli.splits.into_iter().map(NodeId).collect(),
        verify: cli.verify,
        noise,
    };
    match cli.command {
        Command::Place { cost } => place(&ctx, cost),
        Command::Clusters => clusters(&ctx),
        Command::CheckObservability => check_observability(&ctx),
        Command::Simulate(args) => simulate(&ctx, &args),
        Command::RunFdla { stream } => fdla_on_stream(&ctx, &stream),
        Command::Campaign { scenarios, runs } => campaign(&ctx, scenarios.as_deref(), runs),
    }
}

impl Context {
    fn base_grid(&self) -> Result<GridModel, Failure> {
        match &self.grid_path {
            Some(p) => read_grid(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
            None => Ok(benchmark_grid()),
        }
    }

    /// Grid with the monitored flags of the selected placement source.
    fn monitored_grid(&self) -> Result<(GridModel, Monitoring), Failure> {
        let grid = self.base_grid()?;
        let option = match self.placement {
            PlacementSource::File => {
                let mon = grid.monitoring();
                if mon.is_empty() {
                    return Err(Failure::Input("grid file monitors no node".into()));
                }
                return Ok((grid, mon));
            }
            PlacementSource::Uniform => CostOption::Uniform,
            PlacementSource::Resolution => CostOption::Resolution,
        };
        let sol = solve_placement(&build_problem(&grid, option, &self.splits)?)?;
        let mon = sol.monitoring();
        Ok((grid.with_monitoring(&mon)?, mon))
    }

    fn output(&self, name: &str) -> Result<Option<PathBuf>, Failure> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Ok(Some(dir.join(name)))
            }
            None => Ok(None),
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        if let Some(path) = self.output(name)? {
            let mut w = BufWriter::new(File::create(&path)?);
            serde_json::to_writer_pretty(&mut w, value)
                .map_err(|e| Failure::Input(e.to_string()))?;
            writeln!(w)?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn node_list(mon: &Monitoring) -> String {
    mon.iter()
        .map(|n| n.0.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn branch_label(grid: &GridModel, id: BranchId) -> String {
    match grid.branch(id) {
        Ok(b) => format!("{id} ({}-{})", b.from, b.to),
        Err(_) => id.to_string(),
    }
}

fn print_partition(grid: &GridModel, partition: &ClusterPartition) {
    println!("clusters (r = {}):", partition.r());
    for c in &partition.clusters {
        let branches: Vec<String> = c.branches.iter().map(|b| branch_label(grid, *b)).collect();
        let tag = if c.hypothesis {
            ""
        } else {
            "  [no hypothesis]"
        };
        println!("  C{:<3} {}{tag}", c.id, branches.join(", "));
    }
    if !partition.single_line_ufcs.is_empty() {
        let lines: Vec<String> = partition
            .single_line_ufcs
            .iter()
            .map(|b| branch_label(grid, *b))
            .collect();
        println!("fake nodes on: {}", lines.join(", "));
    }
}

#[derive(Serialize)]
struct PlacementReport<'a> {
    cost_option: CostOption,
    forced_split_nodes: &'a [NodeId],
    monitored: Vec<NodeId>,
    #[serde(flatten)]
    solution: &'a PlacementSolution,
    partition: &'a ClusterPartition,
}

fn place(ctx: &Context, cost: CostOption) -> Result<(), Failure> {
    let grid = ctx.base_grid()?;
    let problem = build_problem(&grid, cost, &ctx.splits)?;
    let sol = solve_placement(&problem)?.with_clusters(&grid)?;
    let mon = sol.monitoring();
    let placed = grid.with_monitoring(&mon)?;
    let partition = compute_clusters(&placed, &mon)?;
    println!("cost option: {cost:?}");
    let gamma: Vec<&str> = sol
        .gamma
        .iter()
        .map(|g| if *g { "1" } else { "0" })
        .collect();
    println!("gamma: {}", gamma.join(" "));
    println!("monitored nodes (d = {}): {}", sol.d, node_list(&mon));
    println!("cost: {}", sol.cost);
    print_partition(&placed, &partition);
    ctx.write_json(
        "placement.json",
        &PlacementReport {
            cost_option: cost,
            forced_split_nodes: &ctx.splits,
            monitored: mon.iter().collect(),
            solution: &sol,
            partition: &partition,
        },
    )?;
    if let Some(path) = ctx.output("placed_grid.toml")? {
        std::fs::write(&path, write_grid(&placed)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn theorem1_or_fail(grid: &GridModel, mon: &Monitoring) -> Result<ConditionCheck, Failure> {
    let t1 = check_theorem1(grid, mon);
    if !t1.holds {
        let nodes: Vec<String> = t1.violations.iter().map(|n| n.0.to_string()).collect();
        return Err(Failure::Check(format!(
            "observability condition for fault hypotheses violated at nodes {}",
            nodes.join(", ")
        )));
    }
    Ok(t1)
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    monitored: Vec<NodeId>,
    partition: &'a ClusterPartition,
    oracle: Option<&'a OracleReport>,
    oracle_agrees: Option<bool>,
}

fn clusters(ctx: &Context) -> Result<(), Failure> {
    let (grid, mon) = ctx.monitored_grid()?;
    theorem1_or_fail(&grid, &mon)?;
    let partition = compute_clusters(&grid, &mon)?;
    println!("monitored nodes (d = {}): {}", mon.len(), node_list(&mon));
    print_partition(&grid, &partition);
    let oracle = if ctx.verify {
        Some(empirical_cluster_oracle(
            &grid,
            &mon,
            ORACLE_TRIALS,
            ctx.seed,
        )?)
    } else {
        None
    };
    let agrees = oracle.as_ref().map(|o| o.agrees_with(&partition, &grid));
    if let Some(o) = &oracle {
        println!(
            "oracle: {} groups over {} trials, max in-group spread {:.2e}",
            o.groups.len(),
            o.trials,
            o.max_spread
        );
        for (b, why) in &o.unobservable {
            println!("  {} unobservable: {why}", branch_label(&grid, *b));
        }
        println!("oracle agrees: {}", agrees.unwrap_or(false));
    }
    ctx.write_json(
        "clusters.json",
        &ClusterReport {
            monitored: mon.iter().collect(),
            partition: &partition,
            oracle: oracle.as_ref(),
            oracle_agrees: agrees,
        },
    )?;
    if agrees == Some(false) {
        return Err(Failure::Check(
            "cluster partition differs from the residual oracle".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct ObservabilityReport {
    monitored: Vec<NodeId>,
    sufficient_condition: ConditionCheck,
    hypothesis_condition: ConditionCheck,
    rank_observable: bool,
}

fn check_observability(ctx: &Context) -> Result<(), Failure> {
    let (grid, mon) = ctx.monitored_grid()?;
    let report = ObservabilityReport {
        monitored: mon.iter().collect(),
        sufficient_condition: check_lemma1(&grid, &mon),
        hypothesis_condition: check_theorem1(&grid, &mon),
        rank_observable: rank_observability_oracle(&grid, &mon),
    };
    let show = |c: &ConditionCheck| {
        if c.holds {
            "holds".to_string()
        } else {
            let nodes: Vec<String> = c.violations.iter().map(|n| n.0.to_string()).collect();
            format!("violated at nodes {}", nodes.join(", "))
        }
    };
    println!("monitored nodes (d = {}): {}", mon.len(), node_list(&mon));
    println!(
        "sufficient condition (grid): {}",
        show(&report.sufficient_condition)
    );
    println!(
        "condition for fault hypotheses: {}",
        show(&report.hypothesis_condition)
    );
    println!(
        "rank test (grid): {}",
        if report.rank_observable {
            "observable"
        } else {
            "unobservable"
        }
    );
    ctx.write_json("observability.json", &report)?;
    theorem1_or_fail(&grid, &mon)?;
    Ok(())
}

fn scenario_from_args(grid: &GridModel, args: &ScenarioArgs) -> Result<FaultScenario, Failure> {
    if let Some(path) = &args.scenarios {
        let list = read_scenarios(path, grid)?;
        return list
            .get(args.index.wrapping_sub(1))
            .copied()
            .ok_or_else(|| {
                Failure::Input(format!(
                    "{} holds {} scenarios, no index {}",
                    path.display(),
                    list.len(),
                    args.index
                ))
            });
    }
    let branch = match (&args.line, args.branch) {
        (Some(l), None) => {
            let ends: Vec<usize> = l
                .split('-')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| Failure::Input(format!("line `{l}` must look like 4-5")))?;
            if ends.len() != 2 {
                return Err(Failure::Input(format!("line `{l}` must look like 4-5")));
            }
            line(grid, ends[0], ends[1])?
        }
        (None, Some(b)) => BranchId(b),
        _ => {
            return Err(Failure::Input(
                "give a faulted --line, --branch or --scenarios file".into(),
            ))
        }
    };
    Ok(FaultScenario {
        branch,
        position: args.position,
        fault_type: args.fault_type,
        resistance: args.resistance,
        fault_time: args.fault_time,
        duration: args.duration,
    })
}

fn read_scenarios(path: &Path, grid: &GridModel) -> Result<Vec<FaultScenario>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_scenarios(&text, grid).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn print_report(grid: &GridModel, partition: &ClusterPartition, report: &FdlaReport) {
    println!("threshold: {:.6e}", report.threshold);
    if !report.skipped.is_empty() {
        println!(
            "skipped samples (missing channels): {}",
            report.skipped.len()
        );
    }
    if !report.detected {
        println!("no fault detected");
        return;
    }
    let cluster = report.cluster.and_then(|c| partition.cluster(c));
    println!(
        "fault detected at t = {} s (sample {})",
        report.detection_time.unwrap_or(f64::NAN),
        report.detection_index.unwrap_or(0)
    );
    if let Some(c) = cluster {
        let branches: Vec<String> = c.branches.iter().map(|b| branch_label(grid, *b)).collect();
        println!("faulted cluster: C{} [{}]", c.id, branches.join(", "));
    }
    if let Some(ft) = &report.fault_type {
        println!("fault type: {}", ft.label());
    }
}

fn write_traces(ctx: &Context, report: &FdlaReport) -> Result<(), Failure> {
    ctx.write_json("fdla_report.json", report)?;
    if let Some(path) = ctx.output("wmr.csv")? {
        write_wmr_trace(
            File::create(&path)?,
            &report.times,
            &report.w0,
            &report.clusters,
            &report.wl,
        )?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = ctx.output("injection.csv")? {
        write_injection_trace(
            File::create(&path)?,
            &report.times,
            &report.injection_trace(),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn simulate(ctx: &Context, args: &ScenarioArgs) -> Result<(), Failure> {
    let (grid, mon) = ctx.monitored_grid()?;
    let scenario = scenario_from_args(&grid, args)?;
    let circuit = grid_for_fault(&grid, scenario.fault_type)?;
    scenario.validate(&circuit)?;
    theorem1_or_fail(&circuit, &mon)?;
    let partition = compute_clusters(&circuit, &mon)?;
    let healthy = solve_steady_state(&circuit, None)?;
    let faulted = solve_steady_state(&circuit, Some(&scenario))?;
    let config = FdlaConfig::default().matched_to(&ctx.noise);
    let timeline = Timeline::with_calibration(
        config.calibration_window,
        scenario.fault_time,
        scenario.duration,
        ctx.noise.sample_period,
    );
    let stream = synthesize_stream(
        mon.iter().collect(),
        &healthy.measurements(&mon)?,
        Some((&faulted.measurements(&mon)?, scenario.fault_time)),
        &timeline,
        &ctx.noise,
        ctx.seed,
    );
    println!("scenario: {}", scenario.describe(&grid));
    println!("fault current: {:.2} A", faulted.fault_current_magnitude());
    if let Some(c) = partition.cluster_of(scenario.branch) {
        println!("cluster holding the faulted branch: C{}", c.id);
    }
    println!(
        "samples: {} from t = {} s",
        stream.len(),
        stream.times.first().copied().unwrap_or(0.0)
    );
    let bank = prepare_bank(&circuit, &mon, &partition, &stream, &config)?;
    let report = run_fdla(&bank, &stream, &config)?;
    print_report(&circuit, &partition, &report);
    if let Some(path) = ctx.output("stream.csv")? {
        stream.write_csv(File::create(&path)?)?;
        println!("wrote {}", path.display());
    }
    write_traces(ctx, &report)
}

fn fdla_on_stream(ctx: &Context, path: &Path) -> Result<(), Failure> {
    let (grid, mon) = ctx.monitored_grid()?;
    let file = File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let stream = MeasurementStream::read_csv(file)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    theorem1_or_fail(&grid, &mon)?;
    let partition = compute_clusters(&grid, &mon)?;
    let config = FdlaConfig::default().matched_to(&ctx.noise);
    let bank = prepare_bank(&grid, &mon, &partition, &stream, &config)?;
    let report = run_fdla(&bank, &stream, &config)?;
    println!("samples: {}", stream.len());
    print_report(&grid, &partition, &report);
    write_traces(ctx, &report)
}

fn campaign(ctx: &Context, scenarios: Option<&Path>, runs: usize) -> Result<(), Failure> {
    let (grid, mon) = ctx.monitored_grid()?;
    let list = match scenarios {
        Some(p) => read_scenarios(p, &grid)?,
        None => benchmark_scenarios(&grid)?,
    };
    theorem1_or_fail(&grid, &mon)?;
    let config = CampaignConfig {
        runs,
        base_seed: ctx.seed,
        noise: ctx.noise,
        fdla: FdlaConfig::default(),
    };
    let result = run_campaign(&grid, &mon, &list, &config)?;
    print_campaign(&result);
    ctx.write_json("campaign.json", &result)?;
    if let Some(path) = ctx.output("campaign.csv")? {
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(
            w,
            "scenario,fault_current,D-L,D-nL,nD-L,nD-nL,detected,characterized"
        )?;
        for s in &result.scenarios {
            let c = &s.counts;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.description,
                s.fault_current,
                c.d_l,
                c.d_nl,
                c.nd_l,
                c.nd_nl,
                s.detected,
                s.characterization_correct
            )?;
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_campaign(result: &CampaignResult) {
    println!(
        "{:<28} {:>9} {:>5} {:>5} {:>5} {:>5} {:>13}",
        "scenario", "I_f [A]", "D-L", "D-nL", "nD-L", "nD-nL", "characterized"
    );
    for s in &result.scenarios {
        let c = &s.counts;
        println!(
            "{:<28} {:>9.1} {:>5} {:>5} {:>5} {:>5} {:>9}/{:<3}",
            s.description,
            s.fault_current,
            c.d_l,
            c.d_nl,
            c.nd_l,
            c.nd_nl,
            s.characterization_correct,
            s.detected
        );
    }
}
