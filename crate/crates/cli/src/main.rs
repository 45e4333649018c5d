mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::warn;

use eh_sched::bcd::{run_multistart, BcdReport};
use eh_sched::experiments::{self, ScenarioOutcome};
use eh_sched::metrics::{improvement_metrics, sg_tdma_schedule, MetricsReport};
use eh_sched::oracle::{grid_global_optimum, refine_optimum, DEFAULT_SEED};
use eh_sched::scenario::{builtin, builtin_names, Scenario};
use eh_sched::{run_bcd, Instance};

use output::{metrics_csv, schedule_csv, sig6, trace_csv, write_atomic};

#[derive(Parser)]
#[command(name = "eh-sched", version, about = "Fair power and time scheduling on a harvesting downlink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario (a JSON file or a built-in name) and write CSVs.
    Run {
        scenario: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Extra random starts; the best run is reported.
        #[arg(long, default_value_t = 0)]
        multistart: usize,
    },
    /// Regenerate an experiment as a CSV bundle.
    Reproduce {
        #[arg(value_enum)]
        which: Experiment,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Exhaustive power grid on a tiny scenario, compared with BCD.
    Oracle {
        scenario: String,
        /// Grid step in watts (default: 1/100 of the largest feasible power).
        #[arg(long)]
        step: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Table1,
    Table2,
    SweepUsers,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EH_SCHED_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            multistart,
        } => cmd_run(&scenario, &out, seed, multistart),
        Command::Reproduce { which, out } => cmd_reproduce(which, &out),
        Command::Oracle { scenario, step } => cmd_oracle(&scenario, step),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = builtin(arg) {
            return Ok(s);
        }
        return Err(anyhow!(
            "{arg}: no such file or built-in scenario (built-ins: {})",
            builtin_names().join(", ")
        ));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
    Scenario::from_json(&text).map_err(|e| anyhow!("{arg}:{}: {}", e.line, e.message))
}

fn baseline_metrics(report: &BcdReport, instance: &Instance) -> Option<MetricsReport> {
    let metrics = sg_tdma_schedule(instance).and_then(|b| improvement_metrics(&report.schedule, &b, instance));
    match metrics {
        Ok(m) => Some(m),
        Err(e) => {
            warn!("no SG+TDMA comparison: {e}");
            None
        }
    }
}

fn write_bundle(dir: &Path, report: &BcdReport, metrics: Option<&MetricsReport>) -> Result<()> {
    for (name, body) in [
        ("schedule.csv", schedule_csv(report)),
        ("trace.csv", trace_csv(report)),
        ("metrics.csv", metrics_csv(report, metrics)),
    ] {
        let path = dir.join(name);
        write_atomic(&path, &body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_run(arg: &str, out: &Path, seed: u64, multistart: usize) -> Result<ExitCode> {
    let scenario = load_scenario(arg)?;
    let instance = scenario.instance().map_err(|e| anyhow!("{arg}: {e}"))?;
    let report = if multistart > 0 {
        let mut ms = run_multistart(&instance, &scenario.solver, multistart, seed)?;
        let spread = ms
            .runs
            .iter()
            .map(|r| r.utility())
            .fold(f64::NEG_INFINITY, f64::max)
            - ms.runs.iter().map(|r| r.utility()).fold(f64::INFINITY, f64::min);
        log::info!("{} starts, utility spread {spread:.3e}", ms.runs.len());
        ms.runs.swap_remove(ms.best)
    } else {
        run_bcd(&instance, &scenario.solver)?
    };
    let metrics = baseline_metrics(&report, &instance);
    write_bundle(out, &report, metrics.as_ref())?;
    println!("utility {}", sig6(report.utility()));
    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: stopped after {} iterations without converging", report.iterations);
        Ok(ExitCode::from(2))
    }
}

fn cmd_reproduce(which: Experiment, out: &Path) -> Result<ExitCode> {
    let (file, body) = match which {
        Experiment::Table1 => {
            let rows = experiments::table1()?;
            write_scenarios(out, &rows)?;
            let mut s = String::from("scenario,utility,baseline_utility,improvement_pct,iterations,jain_bcd,jain_sg_tdma\n");
            for o in &rows {
                let m = &o.metrics;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    o.name,
                    sig6(m.candidate_utility),
                    sig6(m.baseline_utility),
                    sig6(m.utility_improvement_pct),
                    o.report.iterations,
                    sig6(m.jain_index),
                    sig6(m.baseline_jain_index)
                );
            }
            ("table1.csv", s)
        }
        Experiment::Table2 => {
            let rows = experiments::table2()?;
            write_scenarios(out, &rows)?;
            let mut s = String::from("scenario,slots,harvests,utility,baseline_utility,improvement_pct\n");
            for o in &rows {
                let h: Vec<String> = o.instance.profile.harvests().iter().map(|v| sig6(*v)).collect();
                let m = &o.metrics;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    o.name,
                    o.instance.num_slots(),
                    h.join(" "),
                    sig6(m.candidate_utility),
                    sig6(m.baseline_utility),
                    sig6(m.utility_improvement_pct)
                );
            }
            ("table2.csv", s)
        }
        Experiment::SweepUsers => {
            let rows = experiments::sweep_users()?;
            let outcomes: Vec<ScenarioOutcome> = rows.iter().map(|r| r.outcome.clone()).collect();
            write_scenarios(out, &outcomes)?;
            let mut s = String::from(
                "strongest_db,users,utility_bcd,utility_sg_tdma,improvement_pct,jain_bcd,jain_sg_tdma,mean_path_loss_db\n",
            );
            for r in &rows {
                let m = &r.outcome.metrics;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    sig6(r.strongest_db),
                    r.users,
                    sig6(m.candidate_utility),
                    sig6(m.baseline_utility),
                    sig6(m.utility_improvement_pct),
                    sig6(m.jain_index),
                    sig6(m.baseline_jain_index),
                    sig6(m.mean_path_loss_db)
                );
            }
            ("sweep_users.csv", s)
        }
    };
    let path = out.join(file);
    write_atomic(&path, &body).with_context(|| format!("writing {}", path.display()))?;
    print!("{body}");
    Ok(ExitCode::SUCCESS)
}

fn write_scenarios(out: &Path, outcomes: &[ScenarioOutcome]) -> Result<()> {
    for o in outcomes {
        write_bundle(&out.join(&o.name), &o.report, Some(&o.metrics))?;
    }
    Ok(())
}

fn cmd_oracle(arg: &str, step: Option<f64>) -> Result<ExitCode> {
    let scenario = load_scenario(arg)?;
    let instance = scenario.instance().map_err(|e| anyhow!("{arg}: {e}"))?;
    let profile = &instance.profile;
    let step = step.unwrap_or_else(|| {
        let top = profile
            .cumulative_energy()
            .iter()
            .zip(profile.slot_lengths())
            .map(|(c, l)| c / l)
            .fold(0.0, f64::max);
        top / 100.0
    });
    let coarse = grid_global_optimum(&instance, step).map_err(|e| anyhow!("{arg}: {e}"))?;
    let refined = refine_optimum(&instance, &coarse, step / 64.0)?;
    let bcd = run_bcd(&instance, &scenario.solver)?;
    println!("grid_points {}", coarse.evaluated);
    println!("grid_utility {}", sig6(coarse.utility));
    println!("resolution_bound {}", sig6(coarse.resolution_bound));
    println!("refined_utility {}", sig6(refined.utility));
    println!("bcd_utility {}", sig6(bcd.utility()));
    println!("gap_to_refined {}", sig6(refined.utility - bcd.utility()));
    Ok(ExitCode::SUCCESS)
}
