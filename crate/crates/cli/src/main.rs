//! `sigcorr` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sigcorr::config::ScenarioConfig;
use sigcorr::engine::{run_scenario, PerturbTarget};
use sigcorr::freq::{
    describing_function, linearize_corrector, linearize_observer, validate_corrector_params,
    validate_observer_params, LinearizedSystem, ParamValidationReport,
};
use sigcorr::metrics::metrics;
use sigcorr::plant::{AXES, AXIS_NAMES};
use sigcorr::study::{compare_ekf, decoupling_check, sweep, SweepParam};
use sigcorr::Error;

#[derive(Parser)]
#[command(name = "sigcorr", version, about = "Signal corrector / uncertainty observer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulated duration (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Worker threads for sweeps and tuning.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes trace.csv and metrics.json.
    Run(Common),
    /// One run per parameter value; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        /// Shrink dt with eps_c / eps_o so every run has the same discrete stiffness.
        #[arg(long)]
        resolve_stiffness: bool,
    },
    /// Describing-function analysis of every estimator; writes analysis.json.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Error amplitude the quasi-linear models are evaluated at.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        amplitude: f64,
    },
    /// Stability and oscillation report for all estimator parameter sets.
    Validate(Common),
    /// Corrector versus EKF baseline; writes comparison.json.
    CompareEkf {
        #[command(flatten)]
        common: Common,
        /// Use the EKF settings in the config instead of grid-tuning them.
        #[arg(long)]
        no_tune: bool,
    },
    /// Perturb one estimator mid-run and check the other is untouched.
    DecoupleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Target::Observer)]
        target: Target,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        magnitude: f64,
        /// Feed control from live estimates instead of replaying recorded commands.
        #[arg(long)]
        closed_loop: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Observer,
    Corrector,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Raised when a check ran to completion and failed.
#[derive(Debug)]
struct ValidationFailure(String);

impl std::fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ValidationFailure>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Diverged { .. } | Error::NonFinite(_) | Error::NotPositiveDefinite | Error::SingularInnovation) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Run(c) => cmd_run(&c),
        Command::Sweep { common, param, values, resolve_stiffness } => {
            cmd_sweep(&common, &param, &values, resolve_stiffness)
        }
        Command::Analyze { common, amplitude } => cmd_analyze(&common, amplitude),
        Command::Validate(c) => cmd_validate(&c),
        Command::CompareEkf { common, no_tune } => cmd_compare_ekf(&common, !no_tune),
        Command::DecoupleCheck { common, target, magnitude, closed_loop } => {
            let target = match target {
                Target::Observer => PerturbTarget::Observer,
                Target::Corrector => PerturbTarget::Corrector,
            };
            cmd_decouple_check(&common, target, magnitude, !closed_loop)
        }
    }
}

fn apply_overrides(mut cfg: ScenarioConfig, c: &Common) -> ScenarioConfig {
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(d) = c.duration {
        cfg.duration = d;
    }
    cfg
}

fn load(c: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = apply_overrides(ScenarioConfig::parse_path(&c.config)?, c);
    cfg.validate()?;
    // Short runs (e.g. a duration override) can end before the settle time.
    if cfg.output.settle >= cfg.duration {
        eprintln!("warning: settle {} s is not inside the run; using 0", cfg.output.settle);
        cfg.output.settle = 0.0;
    }
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(c: &Common) -> anyhow::Result<()> {
    let cfg = load(c)?;
    let trace = run_scenario(&cfg)?;
    write_out(&c.out, "trace.csv", &trace.to_csv())?;
    let summary = metrics(&trace, cfg.output.settle)?;
    write_out(&c.out, "metrics.json", &(summary.to_json() + "\n"))?;
    println!("samples {}", trace.records.len());
    for (name, errs) in [("corrector", &summary.corrector), ("ekf", &summary.ekf), ("measurement", &summary.measurement)] {
        let cells: Vec<String> = errs[..3].iter().map(|e| format!("{} {:.4}", e.axis, e.max)).collect();
        println!("{name:<12} max |e|  {}", cells.join("  "));
    }
    Ok(())
}

fn cmd_sweep(c: &Common, param: &str, values: &[f64], resolve_stiffness: bool) -> anyhow::Result<()> {
    let param: SweepParam = param.parse()?;
    let cfg = load(c)?;
    let result = sweep(&cfg, param, values, resolve_stiffness, c.jobs)?;
    write_out(&c.out, "sweep.csv", &result.to_csv())?;
    Ok(())
}

fn complex_pairs(sys: &LinearizedSystem) -> Value {
    json!(sys.eigenvalues().iter().map(|l| [l.re, l.im]).collect::<Vec<_>>())
}

fn linear_json(sys: &LinearizedSystem) -> Value {
    json!({
        "stiffness": sys.stiffness(),
        "damping": sys.damping(),
        "natural_frequency": sys.natural_frequency,
        "eigenvalues": complex_pairs(sys),
        "hurwitz": sys.is_hurwitz(),
    })
}

fn cmd_analyze(c: &Common, amplitude: f64) -> anyhow::Result<()> {
    // Parameter ranges are checked by the analysis itself, which also
    // accepts the linear limits alpha = 1 and eps = 1.
    let cfg = apply_overrides(ScenarioConfig::parse_path(&c.config)?, c);
    let mut axes = Vec::with_capacity(AXES);
    for i in 0..AXES {
        let (cp, op) = (cfg.correctors[i], cfg.observers[i]);
        let alpha_pos = cp.position_exponent();
        let lc = linearize_corrector(&cp, amplitude, amplitude)?;
        let lo = linearize_observer(&op, amplitude)?;
        axes.push(json!({
            "axis": AXIS_NAMES[i],
            "corrector": {
                "params": cp,
                "omega_position": describing_function(alpha_pos, amplitude)?.omega_coeff,
                "omega_velocity": describing_function(cp.alpha_c, amplitude)?.omega_coeff,
                "linearized": linear_json(&lc),
            },
            "observer": {
                "params": op,
                "omega_uncertainty": describing_function(op.alpha_o, amplitude)?.omega_coeff,
                "omega_velocity": describing_function(0.5 * (1.0 + op.alpha_o), amplitude)?.omega_coeff,
                "linearized": linear_json(&lo),
            },
        }));
        println!(
            "{:<6} omega_c {:.6}  omega_o {:.6}",
            AXIS_NAMES[i], lc.natural_frequency, lo.natural_frequency
        );
    }
    let doc = json!({ "amplitude": amplitude, "axes": axes });
    write_out(&c.out, "analysis.json", &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn print_report(label: &str, r: &ParamValidationReport) {
    let verdict = match (r.stable, r.oscillation_free) {
        (false, _) => "UNSTABLE",
        (true, true) => "stable",
        (true, false) => "stable (oscillatory)",
    };
    println!("{label:<16} {verdict}");
    for m in &r.messages {
        println!("    {m}");
    }
}

fn cmd_validate(c: &Common) -> anyhow::Result<()> {
    let cfg = apply_overrides(ScenarioConfig::parse_path(&c.config)?, c);
    let mut unstable = Vec::new();
    for i in 0..AXES {
        let name = AXIS_NAMES[i];
        let rc = validate_corrector_params(&cfg.correctors[i]);
        print_report(&format!("corrector[{name}]"), &rc);
        let ro = validate_observer_params(&cfg.observers[i]);
        print_report(&format!("observer[{name}]"), &ro);
        if !rc.stable {
            unstable.push(format!("correctors[{i}]"));
        }
        if !ro.stable {
            unstable.push(format!("observers[{i}]"));
        }
    }
    if !unstable.is_empty() {
        bail!(ValidationFailure(format!("unstable parameter sets: {}", unstable.join(", "))));
    }
    cfg.validate()?;
    Ok(())
}

fn cmd_compare_ekf(c: &Common, tune: bool) -> anyhow::Result<()> {
    let cfg = load(c)?;
    let cmp = compare_ekf(&cfg, tune, c.jobs)?;
    write_out(&c.out, "comparison.json", &(cmp.to_json() + "\n"))?;
    if tune {
        let tuned = ScenarioConfig { ekf: cmp.ekf, ..cfg };
        write_out(&c.out, "ekf_tuned.cfg", &(tuned.to_json_pretty() + "\n"))?;
    }
    for a in &cmp.axes[..3] {
        println!("{:<3} corrector rms {:.4}  ekf rms {:.4}  ratio {:.2}", a.axis, a.corrector_rms, a.ekf_rms, a.ratio);
    }
    Ok(())
}

fn cmd_decouple_check(c: &Common, target: PerturbTarget, magnitude: f64, open_loop: bool) -> anyhow::Result<()> {
    let cfg = load(c)?;
    let verdict = decoupling_check(&cfg, target, magnitude, open_loop)?;
    write_out(&c.out, "decoupling.json", &(serde_json::to_string_pretty(&verdict)? + "\n"))?;
    match &verdict.first_divergence {
        None => println!("{} traces identical after perturbing the {}", verdict.compared, verdict.perturbed),
        Some(d) => println!("{} traces differ from t = {} s in column {}", verdict.compared, d.time, d.column),
    }
    if open_loop && !verdict.identical {
        bail!(ValidationFailure("open-loop decoupling violated".into()));
    }
    Ok(())
}
