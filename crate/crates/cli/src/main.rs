//! Command line front end: scenario batches with CSV emission, randomized
//! sweeps for the termination certificate, world-file generation, and a
//! quick compute-savings table.

use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use travgate_core::harness::{RouterSource, ScenarioSpec, WorldSource};
use travgate_core::{
    generate_world, load_scenarios, run_scenarios, verify_propositions, DomainTag, GridDims,
    PlannerMode, RunReport, VerifyConfig,
};

#[derive(Parser)]
#[command(
    name = "travgate",
    version,
    about = "Gated mixture-of-experts traversability estimation at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario batch and write metrics.csv and trace.csv.
    Run {
        /// Scenario spec file.
        #[arg(long)]
        spec: PathBuf,
        /// Directory that receives the CSV files (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the termination budget for every scenario ("inf" allowed).
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: Option<f64>,
        /// Override the planner backend for every scenario.
        #[arg(long, value_parser = parse_planner)]
        planner: Option<PlannerMode>,
    },
    /// Sweep randomized worlds and count certificate violations.
    Verify {
        /// Number of randomized trials.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Base seed for the sweep.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generate a world and store it as a text file.
    Gen {
        /// World seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// indoor, structured_outdoor, or unstructured_outdoor.
        #[arg(long, value_parser = parse_domain, default_value = "indoor")]
        domain: DomainTag,
        /// Grid rows.
        #[arg(long, default_value_t = 16)]
        height: usize,
        /// Grid columns.
        #[arg(long, default_value_t = 16)]
        width: usize,
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a savings table: routing styles across the three domains.
    Bench {
        /// Worlds per table cell.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Base world seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Planner backend for every cell.
        #[arg(long, value_parser = parse_planner, default_value = "primitive")]
        planner: PlannerMode,
    },
}

fn parse_domain(s: &str) -> Result<DomainTag, String> {
    DomainTag::from_name(s).ok_or_else(|| {
        format!("unknown domain '{s}' (expected indoor, structured_outdoor, or unstructured_outdoor)")
    })
}

fn parse_planner(s: &str) -> Result<PlannerMode, String> {
    PlannerMode::from_name(s).ok_or_else(|| format!("unknown planner '{s}' (expected primitive or graph)"))
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    let v: f64 = if s == "inf" {
        f64::INFINITY
    } else {
        s.parse().map_err(|e| format!("bad epsilon '{s}': {e}"))?
    };
    if v < 0.0 || v.is_nan() {
        return Err(format!("epsilon must be non-negative, got {s}"));
    }
    Ok(v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            spec,
            out,
            epsilon,
            planner,
        } => cmd_run(&spec, &out, epsilon, planner),
        Command::Verify { trials, seed } => cmd_verify(trials, seed),
        Command::Gen {
            seed,
            domain,
            height,
            width,
            out,
        } => cmd_gen(seed, domain, height, width, &out),
        Command::Bench {
            trials,
            seed,
            planner,
        } => cmd_bench(trials, seed, planner),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(
    spec: &PathBuf,
    out: &PathBuf,
    epsilon: Option<f64>,
    planner: Option<PlannerMode>,
) -> Result<ExitCode, Box<dyn Error>> {
    let mut specs = load_scenarios(spec)?;
    if let Some(eps) = epsilon {
        for s in &mut specs {
            s.epsilon = eps;
        }
    }
    if let Some(backend) = planner {
        for s in &mut specs {
            s.planner = backend;
        }
    }
    let report = run_scenarios(&specs)?;
    std::fs::create_dir_all(out)?;
    report.write_csv(out)?;
    print_run_summary(&report);
    println!(
        "wrote {} and {}",
        out.join("metrics.csv").display(),
        out.join("trace.csv").display()
    );
    let clean = report.propositions.violations() == 0 && report.failures.is_empty();
    Ok(if clean {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn print_run_summary(report: &RunReport) {
    println!(
        "ran {} scenario runs ({} failed)",
        report.rows.len() + report.failures.len(),
        report.failures.len()
    );
    for failure in &report.failures {
        println!("  failed {}: {}", failure.scenario_id, failure.message);
    }
    let agg = &report.aggregates;
    if agg.scenarios > 0 {
        println!(
            "  mean e_p {:.6}  mean e_m {:.6}  mean q_p {:.4}  mean savings {:.2}%",
            agg.mean_e_p,
            agg.mean_e_m,
            agg.mean_q_p,
            100.0 * agg.mean_savings
        );
    }
    let props = &report.propositions;
    println!(
        "  certificate checks {} (violations {}), bracket checks {} (violations {}), \
         batch equivalence checks {} (violations {})",
        props.bound_checks,
        props.bound_violations,
        props.monotonic_checks,
        props.monotonic_violations,
        props.batch_equivalence_checks,
        props.batch_equivalence_violations
    );
}

fn cmd_verify(trials: usize, seed: u64) -> Result<ExitCode, Box<dyn Error>> {
    let report = verify_propositions(&VerifyConfig {
        trials,
        base_seed: seed,
    })?;
    println!("{report}");
    let violations = report.violations();
    if violations == 0 {
        println!("certificate held on every trial");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("certificate violated {violations} times");
        Ok(ExitCode::from(violations.min(255) as u8))
    }
}

fn cmd_gen(
    seed: u64,
    domain: DomainTag,
    height: usize,
    width: usize,
    out: &PathBuf,
) -> Result<ExitCode, Box<dyn Error>> {
    let dims = GridDims::new(height, width)?;
    let world = generate_world(seed, domain, dims)?;
    world.save(out)?;
    let (sr, sc) = world.start_cell();
    let (gr, gc) = world.goal_cell();
    println!(
        "wrote {} ({domain}, {height}x{width}, seed {seed}, start ({sr},{sc}), goal ({gr},{gc}))",
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(trials: usize, seed: u64, planner: PlannerMode) -> Result<ExitCode, Box<dyn Error>> {
    println!(
        "{:<22} {:>10} {:>14} {:>13} {:>9}",
        "domain", "router", "mean savings", "mean experts", "mean q_p"
    );
    for domain in DomainTag::ALL {
        let extent = if domain == DomainTag::Indoor { 16 } else { 20 };
        for (label, router) in [
            ("uniform", RouterSource::Uniform),
            ("informed", RouterSource::GtTable { confidence: 0.97 }),
        ] {
            let spec = ScenarioSpec {
                name: format!("{domain}/{label}"),
                world: WorldSource::Seeded {
                    seed,
                    domain,
                    height: extent,
                    width: extent,
                },
                router,
                epsilon: 0.05,
                planner,
                reps: trials,
            };
            let report = run_scenarios(std::slice::from_ref(&spec))?;
            if report.rows.is_empty() {
                println!(
                    "{:<22} {:>10} {:>14} {:>13} {:>9}",
                    domain.to_string(),
                    label,
                    "-",
                    "-",
                    "-"
                );
                continue;
            }
            let mean_experts = report
                .rows
                .iter()
                .map(|r| r.experts_activated as f64)
                .sum::<f64>()
                / report.rows.len() as f64;
            println!(
                "{:<22} {:>10} {:>13.2}% {:>13.1} {:>9.4}",
                domain.to_string(),
                label,
                100.0 * report.aggregates.mean_savings,
                mean_experts,
                report.aggregates.mean_q_p
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
