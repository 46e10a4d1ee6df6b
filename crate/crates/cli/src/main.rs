use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use microgrid_koopman::harness::config::PiGains;
use microgrid_koopman::harness::run::{execute, write_outputs, RunOptions};
use microgrid_koopman::harness::{bundled_scenario, load_scenario, ControllerKind, ScenarioSpec};
use microgrid_koopman::stability::compute_disc_margins;
use microgrid_koopman::MgError;

#[derive(Parser)]
#[command(
    name = "mg",
    version,
    about = "Microgrid secondary-control scenario runner"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv and summary.json.
    Run {
        /// Scenario JSON file, or `mg4` / `mg13` for the bundled ones.
        #[arg(long)]
        scenario: String,
        /// proposed | okid | edmdc | pi | none (defaults to the scenario's choice)
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Print the disc-margin report of the proposed controller at mid-run.
    Margins {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Coarse grid search of PI gains on a scenario; integral gains are `ki_frac` times the proportional ones.
    TunePi {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(scenario: &str) -> Result<ScenarioSpec, MgError> {
    match scenario {
        "mg4" | "mg13" => bundled_scenario(scenario),
        path => load_scenario(path),
    }
}

fn exit_code(e: &MgError) -> u8 {
    match e {
        MgError::Divergence { .. } => 2,
        _ => 1,
    }
}

fn fmt_time(t: f64) -> String {
    if t.is_finite() {
        format!("{t:.3} s")
    } else {
        "not settled".into()
    }
}

fn cmd_run(
    scenario: &str,
    controller: Option<&str>,
    out: &Path,
    seed: Option<u64>,
    t_end: Option<f64>,
) -> Result<(), MgError> {
    let mut spec = load(scenario)?;
    if let Some(c) = controller {
        spec = spec.with_controller(ControllerKind::parse(c)?);
    }
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    if let Some(t) = t_end {
        spec = spec.with_t_end(t)?;
    }
    let mut outcome = execute(&spec, &RunOptions::default())?;
    write_outputs(&outcome, out)?;
    let m = &outcome.metrics;
    println!(
        "{} / {} seed {}: {}\n  voltage settling {}, sse {:.2e} pu, max dev {:.4} pu\n  frequency settling {}, sse {:.2e} Hz, max dev {:.4} Hz",
        m.scenario,
        m.controller,
        m.seed,
        m.status,
        fmt_time(m.restoration.settling_time_v),
        m.restoration.sse_v,
        m.restoration.max_dev_v,
        fmt_time(m.restoration.settling_time_f),
        m.restoration.sse_f,
        m.restoration.max_dev_f,
    );
    println!("  outputs in {}", out.display());
    match outcome.divergence.take() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_margins(scenario: &str, seed: Option<u64>) -> Result<(), MgError> {
    let mut spec = load(scenario)?.with_controller(ControllerKind::Proposed);
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    let mid = 0.5 * (spec.secondary_start() + spec.t_end);
    let outcome = execute(
        &spec,
        &RunOptions {
            snapshot_at: Some(mid),
        },
    )?;
    let Some((t, snap)) = outcome.snapshot else {
        return Err(MgError::InvalidArgument(
            "no converged controller available at mid-run".into(),
        ));
    };
    let margins = compute_disc_margins(&snap.cost.q, &snap.cost.r, &snap.k, &snap.model.b, &snap.s);
    println!("disc margins at t = {t:.3} s ({} channels)", margins.len());
    println!("channel  center      radius      gain_lo     gain_hi     phase(deg)");
    for d in &margins {
        match d.radius {
            Some(r) => println!(
                "{:>7}  {:<10.4e}  {:<10.4e}  {:<10.4e}  {:<10.4e}  ±{:.3}",
                d.channel,
                d.center,
                r,
                d.gain_lo,
                d.gain_hi,
                d.phase_hi.to_degrees()
            ),
            None => println!(
                "{:>7}  {:<10.4e}  undefined (no disc guarantee)",
                d.channel, d.center
            ),
        }
    }
    if let Some(e) = outcome.divergence {
        return Err(e);
    }
    Ok(())
}

fn cmd_tune_pi(scenario: &str, seed: Option<u64>) -> Result<(), MgError> {
    let mut base = load(scenario)?.with_controller(ControllerKind::Pi);
    if let Some(s) = seed {
        base = base.with_seed(s);
    }
    let kp_v_grid = [0.5, 1.0, 2.0];
    let kp_f_grid = [0.01, 0.02, 0.03, 0.05];
    let ki_grid = [2.0, 5.0, 10.0, 20.0];
    let mut best: Option<(f64, PiGains)> = None;
    println!("kp_v     kp_f     ki_frac  settle_v   settle_f   score");
    for &kp_v in &kp_v_grid {
        for &kp_f in &kp_f_grid {
            for &ki in &ki_grid {
                let mut spec = base.clone();
                spec.pi = PiGains {
                    kp_v,
                    ki_v: ki * kp_v,
                    kp_f,
                    ki_f: ki * kp_f,
                    output_limit_va: base.pi.output_limit_va,
                };
                let o = execute(&spec, &RunOptions::default())?;
                let r = o.metrics.restoration;
                let score = if o.divergence.is_some() {
                    f64::INFINITY
                } else {
                    r.settling_time_v.max(r.settling_time_f)
                };
                println!(
                    "{kp_v:<8} {kp_f:<8} {ki:<8} {:<10} {:<10} {:.3}",
                    fmt_time(r.settling_time_v),
                    fmt_time(r.settling_time_f),
                    score
                );
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, spec.pi));
                }
            }
        }
    }
    match best {
        Some((s, g)) => println!(
            "best: kp_v={} ki_v={} kp_f={} ki_f={} (score {})",
            g.kp_v,
            g.ki_v,
            g.kp_f,
            g.ki_f,
            fmt_time(s)
        ),
        None => println!("no candidate evaluated"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Command::Run {
            scenario,
            controller,
            out,
            seed,
            t_end,
        } => cmd_run(scenario, controller.as_deref(), out, *seed, *t_end),
        Command::Margins { scenario, seed } => cmd_margins(scenario, *seed),
        Command::TunePi { scenario, seed } => cmd_tune_pi(scenario, *seed),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
