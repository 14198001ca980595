//! `uiobank` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 synthesis failure, 4 divergence,
//! 5 reproduction property violated, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use uiobank::sim::{self, Scenario, Trace};
use uiobank::uio::{self, BankIndices, InfeasibleMembers, Priority};
use uiobank::{control, presets, Error, PlantModel, Tolerances};

#[derive(Parser)]
#[command(name = "uiobank", version, about = "Unknown input multi-observer toolkit")]
struct Cli {
    /// Print progress details to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Redundancy indices, bank sizes and the applicable scheme for a plant.
    Analyze {
        #[arg(long, env = "UIOBANK_PLANT")]
        plant: PathBuf,
        #[arg(long, env = "UIOBANK_PRIORITY", value_enum, default_value_t = PriorityArg::Q1)]
        priority: PriorityArg,
        /// Also write `analysis.json` here.
        #[arg(long, env = "UIOBANK_OUT")]
        out: Option<PathBuf>,
    },
    /// Synthesize the observer bank and controller gains and export them as JSON.
    Design {
        #[arg(long, env = "UIOBANK_PLANT")]
        plant: PathBuf,
        #[arg(long, env = "UIOBANK_OUT")]
        out: PathBuf,
        #[arg(long, env = "UIOBANK_PRIORITY", value_enum, default_value_t = PriorityArg::Q1)]
        priority: PriorityArg,
        #[arg(long, env = "UIOBANK_BANK_CAP", default_value_t = uio::DEFAULT_BANK_CAP)]
        bank_cap: usize,
        /// Drop bank members whose observer cannot be designed instead of failing.
        #[arg(long)]
        omit_infeasible: bool,
    },
    /// Run a scenario document and write `trace.csv` and `summary.json`.
    Simulate {
        #[arg(long, env = "UIOBANK_SCENARIO")]
        scenario: PathBuf,
        #[arg(long, env = "UIOBANK_OUT")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Also write two-column `(k, value)` series under `plot/`.
        #[arg(long)]
        plot_data: bool,
    },
    /// Run built-in example 1-6 and check its expected properties.
    Reproduce {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=6))]
        id: u8,
        #[arg(long, env = "UIOBANK_OUT")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        plot_data: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorityArg {
    Q1,
    Q2,
}

impl From<PriorityArg> for Priority {
    fn from(p: PriorityArg) -> Self {
        match p {
            PriorityArg::Q1 => Priority::Q1,
            PriorityArg::Q2 => Priority::Q2,
        }
    }
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, env = "UIOBANK_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "UIOBANK_HORIZON")]
    horizon: Option<usize>,
    /// Isolation threshold.
    #[arg(long, env = "UIOBANK_EPS")]
    eps: Option<f64>,
    #[arg(long, env = "UIOBANK_WARMUP")]
    warmup: Option<usize>,
    #[arg(long, env = "UIOBANK_WINDOW")]
    window: Option<usize>,
    #[arg(long, env = "UIOBANK_PRIORITY", value_enum)]
    priority: Option<PriorityArg>,
    #[arg(long, env = "UIOBANK_BANK_CAP")]
    bank_cap: Option<usize>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.horizon {
            s.horizon = v;
        }
        if let Some(v) = self.eps {
            s.isolation.threshold = v;
        }
        if let Some(v) = self.warmup {
            s.isolation.warmup = v;
        }
        if let Some(v) = self.window {
            s.isolation.window = v;
        }
        if let Some(v) = self.priority {
            s.priority = v.into();
        }
        if let Some(v) = self.bank_cap {
            s.bank_cap = v;
        }
    }
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::NotReady { .. } => 2,
            Error::DesignInfeasible(_) | Error::NoConvergence { .. } | Error::UnstabilizableConfiguration(_) => 3,
            Error::Diverged { .. } => 4,
            Error::InternalInconsistency(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: String) -> Failure {
    Failure { code: 2, message }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| invalid(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

fn to_json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("documents serialize") + "\n"
}

fn load_plant(path: &Path) -> Result<PlantModel, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn analyze(plant: &PlantModel, priority: Priority) -> serde_json::Value {
    let tol = Tolerances::default();
    let (n_u, n_y) = (plant.n_u(), plant.n_y());
    let q = uio::max_q(plant, &tol);
    let (q1, q2) = uio::max_q1_q2(plant, &tol, priority);
    let qstar = control::max_qstar(plant, &tol);
    let scheme = if q >= 1 {
        "complete"
    } else if q2 >= 1 {
        "partial"
    } else {
        "none"
    };
    let mut warnings = Vec::new();
    if n_y == 1 {
        warnings.push("no sensor redundancy".to_string());
    } else if scheme == "none" {
        warnings.push("no observer bank tolerates a sensor attack on this plant".to_string());
    }
    let complete_size = (q >= 1).then(|| uio::bank_size(n_u, n_y, BankIndices::Complete { q }));
    let partial_size = (q2 >= 1).then(|| uio::bank_size(n_u, n_y, BankIndices::Partial { q1, q2 }));
    json!({
        "n": plant.n(),
        "n_u": n_u,
        "n_y": n_y,
        "q": q,
        "q1": q1,
        "q2": q2,
        "qstar": qstar,
        "priority": priority,
        "complete_bank_size": complete_size,
        "partial_bank_size": partial_size,
        "scheme": scheme,
        "warnings": warnings,
    })
}

fn design(
    plant: &PlantModel,
    priority: Priority,
    bank_cap: usize,
    policy: InfeasibleMembers,
) -> Result<serde_json::Value, Failure> {
    let tol = Tolerances::default();
    let q = uio::max_q(plant, &tol);
    let (q1, q2) = uio::max_q1_q2(plant, &tol, priority);
    let indices = if q >= 1 {
        BankIndices::Complete { q }
    } else if q2 >= 1 {
        BankIndices::Partial { q1, q2 }
    } else {
        return Err(
            Error::DesignInfeasible("the plant admits neither a complete nor a partial observer bank".into()).into(),
        );
    };
    let bank = uio::enumerate_bank_with(plant, indices, &tol, bank_cap, policy)?;
    let static_gain = control::design_static(plant, &tol)?;
    let bound = match indices {
        BankIndices::Partial { q1, .. } => q1,
        BankIndices::Complete { .. } => control::max_qstar(plant, &tol),
    };
    let gains = control::design_switching_gains(plant, bound, &tol)?;
    let certificate = control::search_certificate(&gains, &tol);
    Ok(json!({
        "bank": bank,
        "static_gain": uiobank::serde_mat::to_rows(&static_gain),
        "switching": {
            "gains": gains,
            "certificate": certificate,
        },
    }))
}

fn write_run(out: &Path, trace: &Trace, summary: &impl serde::Serialize, plot_data: bool) -> Result<(), Failure> {
    write(&out.join("trace.csv"), &trace.to_csv_string()?)?;
    write(&out.join("summary.json"), &to_json(summary))?;
    if plot_data {
        for (name, points) in trace.series() {
            let body: String = points.iter().map(|(k, v)| format!("{k} {v}\n")).collect();
            write(&out.join("plot").join(format!("{name}.dat")), &body)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Analyze { plant, priority, out } => {
            let report = analyze(&load_plant(&plant)?, priority.into());
            let text = to_json(&report);
            print!("{text}");
            if let Some(dir) = out {
                write(&dir.join("analysis.json"), &text)?;
            }
        }
        Command::Design {
            plant,
            out,
            priority,
            bank_cap,
            omit_infeasible,
        } => {
            let policy = if omit_infeasible {
                InfeasibleMembers::Omit
            } else {
                InfeasibleMembers::Reject
            };
            let doc = design(&load_plant(&plant)?, priority.into(), bank_cap, policy)?;
            write(&out.join("design.json"), &to_json(&doc))?;
            if verbose {
                eprintln!("wrote {}", out.join("design.json").display());
            }
        }
        Command::Simulate {
            scenario,
            out,
            overrides,
            plot_data,
        } => {
            let mut s = Scenario::from_json(&read(&scenario)?)?;
            overrides.apply(&mut s);
            let trace = sim::simulate(&s)?;
            let summary = sim::metrics(&trace);
            write_run(&out, &trace, &summary, plot_data)?;
            for w in &summary.info.warnings {
                eprintln!("warning: {w}");
            }
            if verbose {
                eprintln!("{} steps written to {}", trace.records.len(), out.display());
            }
        }
        Command::Reproduce {
            id,
            out,
            overrides,
            plot_data,
        } => {
            let id = usize::from(id);
            let mut s = presets::scenario(id, presets::DEFAULT_SEED)?;
            overrides.apply(&mut s);
            let trace = sim::simulate(&s)?;
            let checks = presets::check(id, &s, &trace)?;
            let report = presets::Reproduction {
                id,
                seed: s.seed,
                checks,
                summary: sim::metrics(&trace),
            };
            write_run(&out, &trace, &report.summary, plot_data)?;
            write(&out.join("scenario.json"), &to_json(&s))?;
            write(&out.join("report.json"), &to_json(&report))?;
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.property,
                    c.detail
                );
            }
            if !report.passed() {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.property.as_str())
                    .collect();
                return Err(Failure {
                    code: 5,
                    message: format!("example {id} violated: {}", failed.join(", ")),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
