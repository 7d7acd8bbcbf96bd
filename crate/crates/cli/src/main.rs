//! `mpoc` command-line front end.

mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpoc::dt::{self, PartitionOptions, Strategy};
use mpoc::explore::export;
use mpoc::{Error, ExploreOptions, Problem, SearchOptions};
use nalgebra::DVector;
use serde_json::json;

use output::Output;

#[derive(Parser)]
#[command(
    name = "mpoc",
    version,
    about = "Explicit solutions of constrained linear-quadratic optimal control problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem file.
    problem: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the continuous-time problem at one initial state.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Initial state, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x0: Vec<f64>,
        /// Sampling step of the time-series output (default T/500).
        #[arg(long)]
        dt: Option<f64>,
        /// Shooting residual tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Compute the continuous-time critical regions over the parameter box.
    Explore {
        #[command(flatten)]
        common: Common,
        /// Grid points per axis (default 401 in one dimension, 41 in two).
        #[arg(long)]
        grid: Option<usize>,
        /// Total degree of the switching-time fits.
        #[arg(long, default_value_t = 3)]
        fit_degree: usize,
    },
    /// Compute the discrete-time critical-region partition.
    Dt {
        #[command(flatten)]
        common: Common,
        /// Number of discretization steps.
        #[arg(long = "N")]
        steps: usize,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        /// Grid points per axis for `grid_seeded`.
        #[arg(long)]
        grid: Option<usize>,
        /// Candidate cap for `combinatorial`.
        #[arg(long, default_value_t = 200_000)]
        budget: usize,
    },
    /// Compare continuous- and discrete-time solutions over several step counts.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long = "N-list", value_delimiter = ',', default_value = "5,10,15,30")]
        steps: Vec<usize>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        /// Grid points per axis for `grid_seeded`.
        #[arg(long)]
        grid: Option<usize>,
        /// Parameter for cost and trajectory comparison, comma separated; repeatable.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        theta: Vec<f64>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::InvalidProblem(_) => 2,
        Error::Infeasible { .. } => 3,
        Error::NoConvergence { .. } | Error::NoStructure { .. } => 4,
        Error::Budget { .. } => 5,
        _ => 1,
    }
}

fn default_strategy(problem: &Problem) -> Strategy {
    if problem.n() == 1 {
        Strategy::Sweep1d
    } else {
        Strategy::GridSeeded
    }
}

fn load(common: &Common) -> Result<(Problem, Output), Error> {
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidProblem(e.to_string()))?;
    }
    let problem = mpoc::load_problem::<f64>(&common.problem)?;
    Ok((problem, Output::new(&common.out)?))
}

fn solve(common: &Common, x0: &[f64], dt: Option<f64>, tol: f64) -> Result<(), Error> {
    let (problem, out) = load(common)?;
    if x0.len() != problem.n() {
        return Err(Error::InvalidProblem(format!(
            "x0 has {} entries, expected {}",
            x0.len(),
            problem.n()
        )));
    }
    let mut opts = SearchOptions::default();
    opts.shooting.tol = tol;
    let x0 = DVector::from_column_slice(x0);
    let (structure, traj) = mpoc::detect_structure_with(&problem, &x0, &opts, None)?;
    let report = mpoc::validate_solution(&problem, &traj);

    let step = dt.unwrap_or(problem.horizon / 500.0);
    if !(step > 0.0) {
        return Err(Error::InvalidProblem("--dt must be positive".into()));
    }
    let samples = (problem.horizon / step).ceil() as usize;
    let (n, m, c) = (problem.n(), problem.m(), problem.rows());
    let mut header = vec!["t".to_string()];
    for (prefix, count) in [("x", n), ("u", m), ("lambda", n), ("mu", c), ("g", c)] {
        header.extend((1..=count).map(|i| format!("{prefix}{i}")));
    }
    header.push("H".into());
    let mut csv = header.join(",") + "\n";
    for i in 0..=samples {
        let t = (i as f64 * step).min(problem.horizon);
        let s = traj.state_at(&problem, t)?;
        let mut row = vec![t];
        for v in [&s.x, &s.u, &s.lambda, &s.mu, &s.g] {
            row.extend(v.iter().copied());
        }
        row.push(s.hamiltonian);
        csv += &row
            .iter()
            .map(|v| format!("{v:.10e}"))
            .collect::<Vec<_>>()
            .join(",");
        csv.push('\n');
    }
    out.write("trajectory.csv", &csv)?;

    let summary = json!({
        "x0": x0.as_slice(),
        "structure": structure.to_string(),
        "arcs": structure.label(&problem),
        "t_switch": traj.t_switch,
        "lambda0": traj.lambda0.as_slice(),
        "cost": traj.cost,
        "validation": {
            "pass": report.pass,
            "mu_min": report.mu_min,
            "g_max": report.g_max,
            "hamiltonian_jump": report.hamiltonian_jump,
        },
    });
    out.write(
        "summary.json",
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    println!("structure: {}", structure.label(&problem));
    println!("switching times: {:?}", traj.t_switch);
    println!("cost: {:.10}", traj.cost);
    println!("wrote {}", out.dir().display());
    Ok(())
}

fn explore(common: &Common, grid: Option<usize>, fit_degree: usize) -> Result<(), Error> {
    let (problem, out) = load(common)?;
    let opts = ExploreOptions {
        grid,
        fit_degree,
        ..ExploreOptions::default()
    };
    let ex = mpoc::explore_regions(&problem, &opts)?;
    if ex.regions.is_empty() {
        return Err(Error::Infeasible { row: None });
    }
    out.write("regions.json", &export::to_json(&ex)?)?;
    out.write("regions.csv", &export::regions_csv(&ex))?;
    out.write("fits.csv", &export::fits_csv(&ex))?;
    let labels: Vec<String> = ex
        .regions
        .iter()
        .map(|r| format!("{} {}", r.label, r.description))
        .collect();
    let map = match problem.n() {
        1 => {
            let (lo, hi) = problem.theta_box[0];
            let intervals: Vec<_> = ex
                .regions
                .iter()
                .filter_map(|r| r.interval.map(|(a, b)| (r.label.clone(), a, b)))
                .collect();
            Some(svg::strip(
                "Continuous-time critical regions",
                lo,
                hi,
                &intervals,
            ))
        }
        2 => Some(svg::map2d(
            "Continuous-time critical regions",
            [problem.theta_box[0], problem.theta_box[1]],
            160,
            &labels,
            |p| ex.locate(p, 1e-9),
        )),
        _ => None,
    };
    if let Some(map) = map {
        out.write("regions.svg", &map)?;
    }
    for (r, label) in ex.regions.iter().zip(&labels) {
        match r.interval {
            Some((a, b)) => println!("{label}: [{a:.6}, {b:.6}]"),
            None => println!(
                "{label}: {} borders, {} grid points",
                r.inequalities.len(),
                r.grid_points
            ),
        }
    }
    println!(
        "{} regions; wrote {}",
        ex.regions.len(),
        out.dir().display()
    );
    Ok(())
}

fn partition_options(
    problem: &Problem,
    strategy: Option<Strategy>,
    grid: Option<usize>,
    budget: usize,
) -> PartitionOptions {
    let mut opts = PartitionOptions::new(strategy.unwrap_or_else(|| default_strategy(problem)));
    opts.grid = grid;
    opts.budget = budget;
    opts
}

fn run_dt(
    common: &Common,
    steps: usize,
    strategy: Option<Strategy>,
    grid: Option<usize>,
    budget: usize,
) -> Result<(), Error> {
    let (problem, out) = load(common)?;
    let dtp = dt::discretize_zoh(&problem, steps)?;
    let part = dt::enumerate_partition(&dtp, &partition_options(&problem, strategy, grid, budget))?;
    out.write(
        &format!("dt_regions_N{steps}.csv"),
        &dt::partition_csv(&part),
    )?;
    out.write(
        &format!("dt_partition_N{steps}.json"),
        &serde_json::to_string_pretty(&part).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    let labels: Vec<String> = part
        .regions
        .iter()
        .map(|r| format!("{} {}", r.label, r.active))
        .collect();
    let map = match problem.n() {
        1 => {
            let (lo, hi) = problem.theta_box[0];
            let intervals: Vec<_> = part
                .regions
                .iter()
                .filter_map(|r| r.interval.map(|(a, b)| (r.label.clone(), a, b)))
                .collect();
            Some(svg::strip(
                &format!("Discrete-time critical regions, N = {steps}"),
                lo,
                hi,
                &intervals,
            ))
        }
        2 => Some(svg::map2d(
            &format!("Discrete-time critical regions, N = {steps}"),
            [problem.theta_box[0], problem.theta_box[1]],
            160,
            &labels,
            |p| part.locate(p, 1e-9),
        )),
        _ => None,
    };
    if let Some(map) = map {
        out.write(&format!("dt_regions_N{steps}.svg"), &map)?;
    }
    println!(
        "N = {steps}, h = {:.6}: {} regions ({})",
        part.h,
        part.len(),
        part.strategy
    );
    for (j, (lo, hi)) in part.feasible.iter().enumerate() {
        println!("feasible x{}: [{lo:.6}, {hi:.6}]", j + 1);
    }
    println!("wrote {}", out.dir().display());
    Ok(())
}

fn compare(
    common: &Common,
    steps: &[usize],
    strategy: Option<Strategy>,
    grid: Option<usize>,
    theta: &[f64],
) -> Result<(), Error> {
    let (problem, out) = load(common)?;
    let n = problem.n();
    if !theta.len().is_multiple_of(n) {
        return Err(Error::InvalidProblem(format!(
            "--theta values must come in groups of {n}"
        )));
    }
    let thetas: Vec<Vec<f64>> = if theta.is_empty() {
        vec![problem
            .theta_box
            .iter()
            .map(|&(lo, hi)| lo + 0.575 * (hi - lo))
            .collect()]
    } else {
        theta.chunks(n).map(<[f64]>::to_vec).collect()
    };
    let ct = mpoc::explore_regions(&problem, &ExploreOptions::default())?;
    let opts = partition_options(&problem, strategy, grid, 200_000);
    let report = dt::compare_ct_dt(&problem, &ct, steps, &thetas, &opts)?;

    let mut counts = String::from("N,h,dt_regions,ct_regions,dt_feasible,seconds\n");
    for r in &report.counts {
        let feas: Vec<String> = r
            .dt_feasible
            .iter()
            .map(|(a, b)| format!("[{a:.6} {b:.6}]"))
            .collect();
        counts += &format!(
            "{},{:.6},{},{},{},{:.3}\n",
            r.steps,
            r.h,
            r.dt_regions,
            r.ct_regions,
            feas.join(" "),
            r.seconds
        );
    }
    out.write("counts.csv", &counts)?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.10}"));
    let mut costs = String::from("N,theta,J_dt,J_ct,gap\n");
    for r in &report.costs {
        let th: Vec<String> = r.theta.iter().map(|v| format!("{v}")).collect();
        costs += &format!(
            "{},{},{},{},{}\n",
            r.steps,
            th.join(" "),
            fmt(r.j_dt),
            fmt(r.j_ct),
            fmt(r.gap())
        );
    }
    out.write("costs.csv", &costs)?;

    for &s in steps {
        let dtp = dt::discretize_zoh(&problem, s)?;
        match dt::overlay_series(&problem, &dtp, &thetas[0], 400) {
            Ok(rows) => {
                let mut header = vec!["t".to_string()];
                for (p, k) in [
                    ("ct_x", n),
                    ("ct_u", problem.m()),
                    ("dt_x", n),
                    ("dt_u", problem.m()),
                ] {
                    header.extend((1..=k).map(|i| format!("{p}{i}")));
                }
                let mut csv = header.join(",") + "\n";
                for r in rows {
                    let mut v = vec![r.t];
                    v.extend(r.ct_x.iter().chain(&r.ct_u).chain(&r.dt_x).chain(&r.dt_u));
                    csv += &v
                        .iter()
                        .map(|x| format!("{x:.10e}"))
                        .collect::<Vec<_>>()
                        .join(",");
                    csv.push('\n');
                }
                out.write(&format!("overlay_N{s}.csv"), &csv)?;
            }
            Err(Error::Infeasible { .. }) => {
                eprintln!("theta {:?} is infeasible at N = {s}; no overlay", thetas[0])
            }
            Err(e) => return Err(e),
        }
    }

    println!("continuous-time regions: {}", ct.regions.len());
    for (j, (lo, hi)) in report.ct_feasible.iter().enumerate() {
        println!("continuous-time feasible x{}: [{lo:.6}, {hi:.6}]", j + 1);
    }
    for r in &report.counts {
        let feas: Vec<String> = r
            .dt_feasible
            .iter()
            .map(|(a, b)| format!("[{a:.6}, {b:.6}]"))
            .collect();
        println!(
            "N = {:3}: {:3} regions, feasible {}",
            r.steps,
            r.dt_regions,
            feas.join(" x ")
        );
    }
    println!("wrote {}", out.dir().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve {
            common,
            x0,
            dt,
            tol,
        } => solve(common, x0, *dt, *tol),
        Command::Explore {
            common,
            grid,
            fit_degree,
        } => explore(common, *grid, *fit_degree),
        Command::Dt {
            common,
            steps,
            strategy,
            grid,
            budget,
        } => run_dt(common, *steps, *strategy, *grid, *budget),
        Command::Compare {
            common,
            steps,
            strategy,
            grid,
            theta,
        } => compare(common, steps, *strategy, *grid, theta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
