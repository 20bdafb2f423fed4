use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use pointsim::control::{run_mpc, SystemState, TrialLog};
use pointsim::error::{Error, Result};
use pointsim::harness::{rest_state, synthesize_references, trial_events, turnpike_diagnostic, SynthSpec, TURNPIKE_EPSILON};
use pointsim::identify::{cfat_run_all, cmaes_fit, extract_torque_ranges, torque_report, CfatOptions};
use pointsim::io::{
    ensure_output_dir, read_dataset, read_reference_csv, write_dataset, write_fit_history, write_trial_csv, write_turnpike,
    RunConfig,
};
use pointsim::optim::cmaes::CmaesOptions;

use crate::Common;

const DEFAULT_TECHNIQUE: &str = "virtual-cursor-identity";

/// Resolves the effective configuration and prints it together with the seed.
fn setup(c: &Common) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    if let Some(t) = &c.technique {
        overrides.push(format!("technique.preset={t:?}"));
    }
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &c.out {
        overrides.push(format!("output_dir={:?}", o.display().to_string()));
    }
    overrides.extend(c.overrides.iter().cloned());
    let cfg = RunConfig::from_sources(c.config.as_deref(), DEFAULT_TECHNIQUE, &overrides)?;
    print!("{}", cfg.dump());
    println!("seed: {}", cfg.seed());
    ensure_output_dir(&cfg.file.output_dir)?;
    Ok(cfg)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.file.output_dir.join(name)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn check_index(i: usize, n: usize, what: &str) -> Result<()> {
    if i >= n {
        return Err(Error::InvalidArgument(format!("{what} index {i} is outside the {n} targets")));
    }
    Ok(())
}

/// Start and target of a single movement; the target defaults to the one following `from` in the
/// ISO sequence.
fn movement(cfg: &RunConfig, from: usize, to: Option<usize>) -> Result<(usize, usize)> {
    let n = cfg.task.target_count;
    check_index(from, n, "start")?;
    let order = cfg.task.order()?;
    let to = match to {
        Some(t) => t,
        None => {
            let j = order.iter().position(|&i| i == from).expect("every target appears in the order");
            order[(j + 1) % n]
        }
    };
    check_index(to, n, "target")?;
    Ok((from, to))
}

fn report(name: &str, log: &TrialLog, cfg: &RunConfig) -> Result<()> {
    let ev = trial_events(log, &log.target, &cfg.task)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    println!(
        "{name}: final distance {:.4} m, hit {}, movement time {} s{}",
        log.final_distance(),
        log.hit_index.is_some(),
        fmt(ev.movement_duration),
        log.aborted.as_ref().map_or(String::new(), |a| format!(", aborted: {a}"))
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Start target index.
    #[arg(long, default_value_t = 0)]
    pub from: usize,
    /// Goal target index; defaults to the next target of the ISO sequence.
    #[arg(long)]
    pub to: Option<usize>,
    /// Simulate every ISO transition, each from rest at its start target.
    #[arg(long, conflicts_with_all = ["from", "to"])]
    pub session: bool,
}

pub fn simulate(c: &Common, a: &SimulateArgs) -> Result<()> {
    let cfg = setup(c)?;
    let pairs = if a.session { cfg.task.transitions()? } else { vec![movement(&cfg, a.from, a.to)?] };
    let positions = cfg.task.positions()?;
    for (from, to) in pairs {
        let x0 = rest_state(&cfg.model, &cfg.technique, &positions[from])?;
        let log = run_mpc(&x0, &cfg.model, &cfg.cost(positions[to]), &cfg.technique, &cfg.mpc)?;
        let name = format!("trial_{from:02}_{to:02}.csv");
        write_trial_csv(&log, out_path(&cfg, &name), &cfg.hash())?;
        report(&name, &log, &cfg)?;
    }
    Ok(())
}

pub fn iso_run(c: &Common) -> Result<()> {
    let cfg = setup(c)?;
    let positions = cfg.task.positions()?;
    let order = cfg.task.order()?;
    let mut x: SystemState = rest_state(&cfg.model, &cfg.technique, &positions[order[0]])?;
    let mut summary = String::from("movement,start,target,hit,final_distance_m,movement_time_s\n");
    for (j, w) in order.windows(2).enumerate() {
        let (from, to) = (w[0], w[1]);
        let mut mpc = cfg.mpc.clone();
        mpc.noise.seed = cfg.seed().wrapping_add(j as u64);
        let log = run_mpc(&x, &cfg.model, &cfg.cost(positions[to]), &cfg.technique, &mpc)?;
        let name = format!("iso_{j:02}_{from:02}_{to:02}.csv");
        write_trial_csv(&log, out_path(&cfg, &name), &cfg.hash())?;
        report(&name, &log, &cfg)?;
        let ev = trial_events(&log, &log.target, &cfg.task)?;
        summary += &format!(
            "{j},{from},{to},{},{:?},{}\n",
            log.hit_index.is_some(),
            log.final_distance(),
            ev.movement_duration.map_or("nan".into(), |d| format!("{d:?}"))
        );
        if let Some(reason) = log.aborted {
            return Err(Error::SolverFailure { message: reason, diagnostic: Some(format!("ISO movement {j}: {from} -> {to}")) });
        }
        let last = log.rows.last().expect("trial logs are never empty");
        x = SystemState::from_body(last.body(), &cfg.model, &cfg.technique);
    }
    let path = out_path(&cfg, "iso_summary.csv");
    fs::write(&path, summary).map_err(|source| Error::Io { path, source })
}

#[derive(Debug, Args)]
pub struct CfatArgs {
    /// Reference trajectory CSVs.
    #[arg(required = true)]
    pub references: Vec<PathBuf>,
    /// Weight of the joint-angle error.
    #[arg(long, default_value_t = CfatOptions::default().alpha)]
    pub alpha: f64,
    /// Weight of the joint-velocity error.
    #[arg(long, default_value_t = CfatOptions::default().beta)]
    pub beta: f64,
    /// Weight of the joint-acceleration error.
    #[arg(long, default_value_t = CfatOptions::default().gamma)]
    pub gamma: f64,
}

pub fn cfat(c: &Common, a: &CfatArgs) -> Result<()> {
    let cfg = setup(c)?;
    let refs = a.references.iter().map(read_reference_csv).collect::<Result<Vec<_>>>()?;
    let opts = CfatOptions { alpha: a.alpha, beta: a.beta, gamma: a.gamma, ..CfatOptions::default() };
    let results = cfat_run_all(&cfg.model, &refs, &opts).into_iter().collect::<Result<Vec<_>>>()?;
    let flagged: usize = results.iter().map(|r| r.flagged.len()).sum();
    let (ranges, warnings) = extract_torque_ranges(&results)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let names: Vec<String> = cfg.model.joints.iter().map(|j| j.name.clone()).collect();
    let text = torque_report(&ranges, &names);
    print!("{text}");
    println!("flagged steps: {flagged}");
    let path = out_path(&cfg, "torque_report.txt");
    fs::write(&path, &text).map_err(|source| Error::Io { path: path.clone(), source })?;
    write_json(&out_path(&cfg, "torque_ranges.json"), &ranges)
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory holding `manifest.json`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Evaluation budget.
    #[arg(long, default_value_t = 300)]
    pub max_evals: usize,
    /// Initial step size in log10 units.
    #[arg(long, default_value_t = 0.5)]
    pub sigma0: f64,
}

pub fn fit_weights(c: &Common, a: &FitArgs) -> Result<()> {
    let cfg = setup(c)?;
    let data = read_dataset(&a.dataset)?;
    let opts = CmaesOptions { sigma0: a.sigma0, max_evals: a.max_evals, seed: cfg.seed(), ..CmaesOptions::default() };
    let fit = cmaes_fit(&data.trials, &cfg.model, cfg.file.cost.family, &cfg.technique, &cfg.mpc, &opts)?;
    println!("r1 = {:e}, r2 = {:e}, loss = {:.6} rad over {} evaluations", fit.r1, fit.r2, fit.loss, fit.history.len());
    write_fit_history(&fit.history, out_path(&cfg, "fit_history.csv"), &cfg.hash())?;
    write_json(&out_path(&cfg, "fit_result.json"), &serde_json::json!({ "r1": fit.r1, "r2": fit.r2, "loss": fit.loss }))
}

/// Comma-separated integers.
#[derive(Debug, Clone)]
pub struct List(pub Vec<u64>);

fn parse_list(s: &str) -> std::result::Result<List, String> {
    s.split(',').map(|p| p.trim().parse::<u64>().map_err(|e| format!("`{p}`: {e}"))).collect::<std::result::Result<_, _>>().map(List)
}

#[derive(Debug, Args)]
pub struct TurnpikeArgs {
    #[arg(long, default_value_t = 0)]
    pub from: usize,
    #[arg(long)]
    pub to: Option<usize>,
    /// Horizons to compare, comma separated.
    #[arg(long, value_parser = parse_list, default_value = "4,6,8,12")]
    pub n_list: List,
    /// Reference horizon.
    #[arg(long, default_value_t = 16)]
    pub n_ref: usize,
    /// Deviation threshold in metres.
    #[arg(long, default_value_t = TURNPIKE_EPSILON)]
    pub epsilon: f64,
}

pub fn turnpike(c: &Common, a: &TurnpikeArgs) -> Result<()> {
    let cfg = setup(c)?;
    let (from, to) = movement(&cfg, a.from, a.to)?;
    let positions = cfg.task.positions()?;
    let x0 = rest_state(&cfg.model, &cfg.technique, &positions[from])?;
    let n_list: Vec<usize> = a.n_list.0.iter().map(|&n| n as usize).collect();
    let res = turnpike_diagnostic(&x0, &cfg.model, &cfg.cost(positions[to]), &cfg.technique, &n_list, a.n_ref, &cfg.mpc)?;
    for (n, curve) in &res.curves {
        match curve {
            Ok(c) => match c.time_to_exceed(a.epsilon) {
                Some(t) => println!("N = {n}: deviation exceeds {} m after {t:.3} s", a.epsilon),
                None => println!("N = {n}: deviation stays below {} m", a.epsilon),
            },
            Err(e) => println!("N = {n}: failed ({e})"),
        }
    }
    for p in write_turnpike(&res, &cfg.file.output_dir, a.epsilon, &cfg.hash())? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Control-cost weight; defaults to the configured cost.
    #[arg(long)]
    pub r1: Option<f64>,
    /// Second cost weight; defaults to the configured cost.
    #[arg(long)]
    pub r2: Option<f64>,
    /// Number of ISO transitions to synthesize, taken in sequence order.
    #[arg(long, default_value_t = 5)]
    pub transitions: usize,
    /// Noise seeds, comma separated; each transition is run once per seed. Defaults to the run seed.
    #[arg(long, value_parser = parse_list)]
    pub seeds: Option<List>,
}

pub fn synth_dataset(c: &Common, a: &SynthArgs) -> Result<()> {
    let cfg = setup(c)?;
    let all = cfg.task.transitions()?;
    if a.transitions == 0 || a.transitions > all.len() {
        return Err(Error::InvalidArgument(format!("--transitions must lie in 1..={}", all.len())));
    }
    let seeds = match &a.seeds {
        Some(s) => s.0.clone(),
        None => vec![cfg.seed()],
    };
    let spec = SynthSpec {
        technique: cfg.file.technique.label(),
        family: cfg.file.cost.family,
        r1: a.r1.unwrap_or(cfg.file.cost.r1),
        r2: a.r2.unwrap_or(cfg.file.cost.r2),
        task: cfg.task.clone(),
        transitions: all[..a.transitions].to_vec(),
        seeds,
    };
    let data = synthesize_references(&cfg.model, &cfg.technique, &spec, &cfg.mpc)?;
    let manifest = write_dataset(&data, &cfg.file.output_dir, &cfg.hash())?;
    println!("wrote {} trials and {}", data.trials.len(), manifest.display());
    Ok(())
}
