use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use regflow::error::Error;
use regflow::fixset::DykstraOverrides;
use regflow::flow::Trajectory;
use regflow::rates::{fit_decay, select_model, FitOutcome, Metric, Model};
use regflow::regularity::RegularityMode;
use regflow::scenario::{self, CheckResult, RegularityConfig, RunOptions, RunStatus};
use regflow::verify::{verify_all, VerifyOptions};

#[derive(Parser)]
#[command(name = "regflow", version, about = "Relaxed fixed-point flows and their convergence rates")]
struct Cli {
    /// Tolerance of Dykstra's algorithm in intersection oracles.
    #[arg(long, global = true)]
    fix_tol: Option<f64>,
    /// Iteration cap of Dykstra's algorithm in intersection oracles.
    #[arg(long, global = true)]
    fix_max_iter: Option<usize>,
    /// Artifacts go to `<out-dir>/<scenario name>/`.
    #[arg(long, global = true, env = "REGFLOW_OUT_DIR", default_value = "regflow-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a bundled scenario by name.
    Run { config: String },
    /// Run the verification suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add a deliberately expansive operator, which must fail.
        #[arg(long)]
        with_negative_control: bool,
    },
    /// Fit a decay model to a trajectory CSV.
    Rate {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Auto)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = MetricArg::Residual)]
        metric: MetricArg,
        /// Fit window `t_min t_max`.
        #[arg(long, num_args = 2)]
        window: Option<Vec<f64>>,
    },
    /// Estimate the regularity constant of a scenario's operator.
    Reg {
        config: String,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the bundled scenarios.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Exp,
    Pow,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MetricArg {
    Residual,
    DistFix,
    DistToLimit,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linear,
    Hoelder,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dykstra = DykstraOverrides {
        tol: cli.fix_tol,
        max_iter: cli.fix_max_iter,
    };
    let code = match &cli.command {
        Command::Run { config } => run(config, &cli.out_dir, dykstra),
        Command::Verify {
            seed,
            with_negative_control,
        } => verify(*seed, *with_negative_control, dykstra),
        Command::Rate {
            csv,
            model,
            metric,
            window,
        } => rate(csv, *model, *metric, window.as_deref()),
        Command::Reg {
            config,
            mode,
            samples,
            seed,
        } => reg(config, &cli.out_dir, dykstra, *mode, *samples, *seed),
        Command::List => {
            for n in scenario::bundled_names() {
                println!("{n}");
            }
            0
        }
    };
    ExitCode::from(code)
}

fn fail(e: &Error) -> u8 {
    eprintln!("error: {e}");
    scenario::error_exit_code(e) as u8
}

fn verdict(c: &CheckResult) {
    println!(
        "{} {}: worst margin {:.3e} (tolerance {:.1e}, {} points){}",
        if c.passed { "PASS" } else { "FAIL" },
        c.name,
        c.worst_margin,
        c.tolerance,
        c.n_points,
        c.detail.as_deref().map(|d| format!(" [{d}]")).unwrap_or_default()
    );
}

fn run(config: &str, out_dir: &Path, dykstra: DykstraOverrides) -> u8 {
    let opts = RunOptions {
        out_dir: Some(out_dir.to_path_buf()),
        dykstra,
    };
    let prepared = match scenario::load(config).and_then(|c| c.prepare(&opts)) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let result = prepared.run(out_dir);
    let code = scenario::exit_code(&result) as u8;
    match &result {
        Ok(run) => {
            let r = &run.report;
            println!("scenario {} ({} samples)", r.name, r.n_samples);
            if let Some(reg) = &r.regularity {
                println!(
                    "regularity: kappa {:.6e}, gamma {:.6}, {} samples",
                    reg.kappa, reg.gamma, reg.n_samples
                );
            }
            if let Some(scenario::FitSummary::Selection(sel)) = &r.fit {
                let f = sel.chosen_fit();
                println!("fit: {:?} with rate {:.6e}, M {:.6e}", sel.chosen, f.rate, f.m);
            }
            for c in &r.checks {
                verdict(c);
            }
            if let Some(e) = &r.error {
                eprintln!("error: {e}");
            }
            if r.status == RunStatus::NumericError {
                eprintln!("artifacts are partial");
            }
            for p in &run.written {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
        }
    }
    code
}

fn verify(seed: u64, negative_control: bool, dykstra: DykstraOverrides) -> u8 {
    let opts = VerifyOptions {
        seed,
        negative_control,
        dykstra,
    };
    let report = match verify_all(&opts) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    for c in &report.checks {
        println!(
            "{} {}/{}: worst margin {:.3e} (tolerance {:.1e}, {} points)",
            if c.passed { "PASS" } else { "FAIL" },
            c.group,
            c.name,
            c.worst_margin,
            c.tolerance,
            c.n_points
        );
    }
    let failures: Vec<_> = report.failures().collect();
    if failures.is_empty() {
        println!("all {} checks passed", report.checks.len());
        0
    } else {
        eprintln!("{} of {} checks failed:", failures.len(), report.checks.len());
        for c in failures {
            eprintln!("  {}: worst margin {:.3e}", c.name, c.worst_margin);
        }
        1
    }
}

fn rate(csv: &Path, model: ModelArg, metric: MetricArg, window: Option<&[f64]>) -> u8 {
    let file = match std::fs::File::open(csv) {
        Ok(f) => f,
        Err(e) => return fail(&Error::config("<file>", format!("{}: {e}", csv.display()))),
    };
    let traj = match Trajectory::read_csv(std::io::BufReader::new(file)) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let metric = match metric {
        MetricArg::Residual => Metric::Residual,
        MetricArg::DistFix => Metric::DistFix,
        MetricArg::DistToLimit => Metric::DistToLimit,
    };
    let window = window.map(|w| [w[0], w[1]]);
    let json = match model {
        ModelArg::Auto => select_model(&traj, metric, window).and_then(|s| Ok(serde_json::to_string_pretty(&s)?)),
        ModelArg::Exp | ModelArg::Pow => {
            let m = if matches!(model, ModelArg::Exp) {
                Model::Exponential
            } else {
                Model::Powerlaw
            };
            fit_decay(&traj, metric, m, window).and_then(|f| {
                if f == FitOutcome::Converged {
                    eprintln!("metric reached zero; nothing to fit");
                }
                Ok(serde_json::to_string_pretty(&f)?)
            })
        }
    };
    match json {
        Ok(s) => {
            println!("{s}");
            0
        }
        Err(e) => fail(&e),
    }
}

fn reg(config: &str, out_dir: &Path, dykstra: DykstraOverrides, mode: ModeArg, samples: usize, seed: u64) -> u8 {
    let opts = RunOptions {
        out_dir: Some(out_dir.to_path_buf()),
        dykstra,
    };
    let mode = match mode {
        ModeArg::Linear => RegularityMode::Linear,
        ModeArg::Hoelder => RegularityMode::Hoelder,
    };
    let result = scenario::load(config).and_then(|mut c| {
        let region = c.analysis.regularity.as_ref().and_then(|r| r.region.clone());
        c.analysis.regularity = Some(RegularityConfig {
            mode,
            samples,
            seed,
            region,
        });
        // the checks are irrelevant to an estimate and may not suit the new mode
        c.analysis.checks.clear();
        c.analysis.fit = None;
        let p = c.prepare(&opts)?;
        let est = p.regularity()?.expect("regularity requested");
        let dir = out_dir.join(&c.name);
        std::fs::create_dir_all(&dir)?;
        let mut text = serde_json::to_string_pretty(&est)?;
        text.push('\n');
        let path = dir.join("regularity.json");
        std::fs::write(&path, &text)?;
        Ok((text, path))
    });
    match result {
        Ok((text, path)) => {
            print!("{text}");
            eprintln!("wrote {}", path.display());
            0
        }
        Err(e) => fail(&e),
    }
}
