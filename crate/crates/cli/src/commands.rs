//! The `train`, `evaluate`, `oracle`, `fd-oracle` and `report` verbs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dhg::eval::{
    actor_metrics, bounded_inverse_report, critic_metrics, derivative_error_norms, hjb_reference,
    kolmogorov_reference, residual_l2_estimate, BoundedInverseReport, DerivativeErrors, Estimate, MetricReport,
};
use dhg::oracle::{fd_burgers_value, grid_from_fn, lq_solve, noise_on_grid, FdConfig, FdScheme, QuadraticCritic};
use dhg::spectral::TWO_PI;
use dhg::train::{TrainState, Trainer};
use dhg::{ActorNet, Critic, CriticNet, GaussianMeasure, HVec, Network, NoiseId, NoiseModel, ProblemKind, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, IoContext};
use crate::probes::Probe;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub name: String,
    pub model: f64,
    pub oracle: Option<f64>,
    pub oracle_std_error: Option<f64>,
}

/// Everything `evaluate` reports for one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub problem: String,
    pub gradient_kind: String,
    pub seed: u64,
    pub checkpoint: String,
    pub critic: Option<MetricReport>,
    pub actor: Option<MetricReport>,
    pub residual_l2: Estimate,
    pub bounded_inverse: Option<BoundedInverseReport>,
    pub derivatives: Option<DerivativeErrors>,
    pub probes: Vec<ProbeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub problem: String,
    pub gradient_kind: String,
    pub seed: u64,
    pub eval_seed: u64,
    pub iterations: u64,
    pub files: Vec<String>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).at(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

/// Closed-form reference critic for the heat problems.
fn heat_reference(spec: &ProblemSpec) -> CliResult<QuadraticCritic> {
    Ok(match spec.kind() {
        ProblemKind::HeatKolmogorov => kolmogorov_reference(spec)?,
        ProblemKind::HeatHjb => hjb_reference(spec)?.critic(),
        _ => return Err(CliError::config("problem", "no closed-form reference for the Burgers problems")),
    })
}

fn fd_noise(noise: NoiseId, modes: usize, points: usize) -> Vec<Vec<f64>> {
    match noise {
        NoiseId::None => Vec::new(),
        // the exact constant rather than its truncated sine series
        NoiseId::OneDimensional => vec![grid_from_fn(|_| 1.0 / TWO_PI.sqrt(), points)],
        NoiseId::TraceClass => noise_on_grid(&NoiseModel::trace_class(modes), points),
    }
}

fn probe_rows<C: Critic>(cfg: &RunConfig, spec: &ProblemSpec, critic: &C) -> CliResult<Vec<ProbeRow>> {
    let reference = if cfg.problem.is_burgers() {
        None
    } else {
        Some(heat_reference(spec)?)
    };
    let mut rows = Vec::new();
    for probe in cfg.probes()? {
        let x = probe.coefficients(cfg.modes)?;
        let model = critic.value(&x)?;
        let (oracle, se) = match &reference {
            Some(r) => (Some(r.eval(&x)), Some(0.0)),
            None => {
                let fd = FdConfig {
                    mc_count: cfg.eval.fd_paths,
                    seed: cfg.eval.seed,
                    gamma: cfg.gamma,
                    ..FdConfig::default()
                };
                let noise = fd_noise(cfg.problem.noise(), cfg.modes, fd.grid_points);
                let est = fd_burgers_value(&probe.grid(fd.grid_points), &noise, &fd)?;
                (Some(est.estimate), Some(est.std_error))
            }
        };
        rows.push(ProbeRow {
            name: probe.name().to_string(),
            model,
            oracle,
            oracle_std_error: se,
        });
    }
    Ok(rows)
}

/// Metrics, residual norm, certificate and derivative errors for one critic (and actor).
pub fn evaluate<C: Critic>(cfg: &RunConfig, critic: &C, actor: Option<&ActorNet>, checkpoint: &str) -> CliResult<Evaluation> {
    let tc = cfg.train_config();
    let spec = tc.spec()?;
    let mu: GaussianMeasure = tc.measure()?;
    let (k, seed) = (cfg.eval.k, cfg.eval.seed);
    let mut out = Evaluation {
        problem: cfg.problem.name().to_string(),
        gradient_kind: serde_json::to_value(cfg.gradient_kind)?.as_str().unwrap_or_default().to_string(),
        seed: cfg.seed,
        checkpoint: checkpoint.to_string(),
        critic: None,
        actor: None,
        residual_l2: residual_l2_estimate(critic, actor, &spec, &mu, k, seed)?,
        bounded_inverse: None,
        derivatives: None,
        probes: probe_rows(cfg, &spec, critic)?,
    };
    if !cfg.problem.is_burgers() {
        let reference = heat_reference(&spec)?;
        out.critic = Some(critic_metrics(critic, &reference, &mu, k, seed)?);
        out.derivatives = Some(derivative_error_norms(
            critic,
            &reference,
            &mu,
            &mu,
            cfg.eval.derivative_k.max(1),
            seed,
        )?);
        if spec.kind() == ProblemKind::HeatKolmogorov {
            out.bounded_inverse = Some(bounded_inverse_report(critic, &spec, &mu, k.max(2), seed)?);
        }
        if let Some(actor) = actor {
            out.actor = Some(actor_metrics(actor, &hjb_reference(&spec)?, &mu, k, seed)?);
        }
    }
    Ok(out)
}

fn manifest(cfg: &RunConfig, command: &str, dir: &Path) -> CliResult<Manifest> {
    let mut files: Vec<String> = Vec::new();
    for entry in walk(dir)? {
        let rel = entry.strip_prefix(dir).unwrap_or(&entry).to_string_lossy().replace('\\', "/");
        if rel != "manifest.json" {
            files.push(rel);
        }
    }
    files.sort();
    Ok(Manifest {
        tool: "dhg".into(),
        version: VERSION.into(),
        command: command.into(),
        config_sha256: cfg.hash(),
        problem: cfg.problem.name().into(),
        gradient_kind: serde_json::to_value(cfg.gradient_kind)?.as_str().unwrap_or_default().to_string(),
        seed: cfg.seed,
        eval_seed: cfg.eval.seed,
        iterations: cfg.iterations,
        files,
    })
}

fn walk(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        if path.is_dir() {
            out.extend(walk(&path)?);
        } else {
            out.push(path);
        }
    }
    Ok(out)
}

pub struct TrainOutcome {
    pub dir: PathBuf,
    pub evaluation: Evaluation,
}

/// Trains per the config and writes `final.hgno`, `log.csv`, `metrics.json`, `manifest.json`.
pub fn cmd_train(config: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<TrainOutcome> {
    let (mut cfg, _) = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = cfg.output_dir(out);
    fs::create_dir_all(&dir).at(&dir)?;
    let tc = cfg.train_config();
    let mut trainer = if cfg.hjb {
        Trainer::actor_critic(tc)?
    } else {
        Trainer::critic(tc)?
    };
    let probes = cfg
        .probes()?
        .iter()
        .map(|p| Ok((p.name().to_string(), p.coefficients(cfg.modes)?)))
        .collect::<CliResult<Vec<(String, HVec)>>>()?;
    trainer.set_probes(probes);
    let ckpt_dir = dir.join("checkpoints");
    trainer.run(|state: &TrainState| state.save(&ckpt_dir, &format!("iter_{:09}", state.iteration)))?;

    let (state, log) = trainer.into_parts();
    state.save(&dir, "final")?;
    write(&dir.join("log.csv"), log.to_csv())?;
    write(&dir.join("config.json"), to_json(&cfg))?;
    let evaluation = evaluate(&cfg, &state.critic, state.actor.as_ref(), "final.hgno")?;
    write(&dir.join("metrics.json"), to_json(&evaluation))?;
    write_probe_table(&dir.join("probes.csv"), &evaluation)?;
    let m = manifest(&cfg, "train", &dir)?;
    write(&dir.join("manifest.json"), to_json(&m))?;
    Ok(TrainOutcome { dir, evaluation })
}

fn write_probe_table(path: &Path, evaluation: &Evaluation) -> CliResult<()> {
    let mut s = String::from("point,model,oracle,oracle_std_error\n");
    for r in &evaluation.probes {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:.6},{},{}", r.name, r.model, fmt(r.oracle), fmt(r.oracle_std_error));
    }
    write(path, s)
}

fn metrics_row(e: &Evaluation) -> String {
    let f = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_else(|| "undefined".into());
    let c = e.critic.as_ref();
    format!(
        "{},{},{},{},{},{},{},{},{:e}\n",
        e.problem,
        e.gradient_kind,
        e.seed,
        e.checkpoint,
        f(c.map(|c| c.me)),
        f(c.map(|c| c.rmse)),
        f(c.and_then(|c| c.re1)),
        f(c.and_then(|c| c.re2)),
        e.residual_l2.value
    )
}

const METRICS_HEADER: &str = "problem,gradient_kind,seed,checkpoint,me,rmse,re1,re2,residual_l2\n";

/// Loads a critic (and its actor sidecar, if any) from a `.hgno` path.
fn load_checkpoint(path: &Path) -> CliResult<(CriticNet, Option<ActorNet>)> {
    let bytes = fs::read(path).at(path)?;
    let critic = match Network::from_bytes(&bytes)? {
        Network::Critic(c) => c,
        Network::Actor(_) => return Err(CliError::config("checkpoint", "expected a critic checkpoint, found an actor")),
    };
    let actor_path = path.with_extension("actor.hgno");
    let actor = if actor_path.exists() {
        Some(ActorNet::from_bytes(&fs::read(&actor_path).at(&actor_path)?)?)
    } else {
        None
    };
    Ok((critic, actor))
}

/// Evaluates a checkpoint (or `oracle` for the closed-form reference) and
/// writes `evaluation.json`, a `metrics.csv` row and `probes.csv`.
pub fn cmd_evaluate(checkpoint: &str, config: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<Evaluation> {
    let (mut cfg, _) = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.eval.seed = s;
    }
    let evaluation = if checkpoint == "oracle" {
        let spec = cfg.train_config().spec()?;
        let reference = heat_reference(&spec)?;
        evaluate(&cfg, &reference, None, checkpoint)?
    } else {
        let (critic, actor) = load_checkpoint(Path::new(checkpoint))?;
        if critic.d() != cfg.d || critic.width() != cfg.width {
            return Err(CliError::config(
                "d",
                format!(
                    "checkpoint has d = {}, W = {} but the config asks for d = {}, W = {}",
                    critic.d(),
                    critic.width(),
                    cfg.d,
                    cfg.width
                ),
            ));
        }
        if let Some(a) = &actor {
            if a.d() != cfg.d || a.p() != cfg.p.unwrap_or(cfg.d) {
                return Err(CliError::config("p", "actor checkpoint does not match the config"));
            }
        }
        evaluate(&cfg, &critic, actor.as_ref(), checkpoint)?
    };
    let dir = cfg.output_dir(out);
    fs::create_dir_all(&dir).at(&dir)?;
    write(&dir.join("evaluation.json"), to_json(&evaluation))?;
    write_probe_table(&dir.join("probes.csv"), &evaluation)?;
    let csv = dir.join("metrics.csv");
    let mut text = if csv.exists() {
        fs::read_to_string(&csv).at(&csv)?
    } else {
        METRICS_HEADER.to_string()
    };
    text.push_str(&metrics_row(&evaluation));
    write(&csv, text)?;
    Ok(evaluation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleForm {
    Hjb,
    Kolmogorov,
}

/// Per-mode table of the closed-form solution.
pub fn cmd_oracle(gamma: f64, lambda: f64, noise: NoiseId, modes: usize, form: OracleForm) -> CliResult<String> {
    if modes == 0 {
        return Err(CliError::config("modes", "must be positive"));
    }
    let sigma2 = NoiseModel::from_id(noise, modes).mode_variances();
    let zero = HVec::zeros(modes);
    let mut s = String::from("n,lambda_n,sigma2_n,M_n,Q_n,R_n\n");
    match form {
        OracleForm::Hjb => {
            let sol = lq_solve(gamma, lambda, &zero, &sigma2, modes)?;
            for i in 0..modes {
                let _ = writeln!(
                    s,
                    "{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                    i + 1,
                    dhg::spectral::eigenvalue(i + 1),
                    sigma2[i],
                    sol.m[i],
                    sol.q[i],
                    sol.r[i]
                );
            }
        }
        OracleForm::Kolmogorov => {
            let q = QuadraticCritic::kolmogorov(&zero, gamma, lambda, &zero, &sigma2, modes)?;
            for i in 0..modes {
                let ln = dhg::spectral::eigenvalue(i + 1);
                let r = sigma2[i] / (gamma * (gamma + 2.0 * ln));
                let _ = writeln!(s, "{},{},{:.12e},{:.12e},{:.12e},{:.12e}", i + 1, ln, sigma2[i], q.m[i], q.q[i], r);
            }
        }
    }
    Ok(s)
}

pub struct FdArgs {
    pub x0: String,
    pub noise: NoiseId,
    pub modes: usize,
    pub config: FdConfig,
}

/// Monte Carlo finite-difference value of the Burgers cost from `x0`.
pub fn cmd_fd_oracle(args: &FdArgs) -> CliResult<String> {
    let probe = match Probe::named(&args.x0) {
        Ok(p) => p,
        Err(_) => Probe::Coefficients {
            name: "custom".to_string(),
            coeffs: HVec::parse_sparse_csv(&args.x0, args.modes)
                .map_err(|e| CliError::config("x0", format!("neither a probe name nor a sparse vector: {e}")))?,
        },
    };
    let cfg = &args.config;
    let noise = fd_noise(args.noise, args.modes, cfg.grid_points);
    let est = fd_burgers_value(&probe.grid(cfg.grid_points), &noise, cfg)?;
    let mut s = String::from("x0,noise,estimate,std_error,paths,cfl\n");
    let _ = writeln!(
        s,
        "{},{},{:.4},{:.4},{},{:.3}",
        probe.name(),
        noise_name(args.noise),
        est.estimate,
        est.std_error,
        est.paths,
        est.cfl_number
    );
    if est.cfl_warning {
        eprintln!(
            "warning: explicit scheme with dt·2/h² = {:.3} > 1 is unstable; use the semi-implicit scheme",
            est.cfl_number
        );
    }
    Ok(s)
}

fn noise_name(n: NoiseId) -> &'static str {
    match n {
        NoiseId::None => "none",
        NoiseId::TraceClass => "tcc",
        NoiseId::OneDimensional => "1d",
    }
}

pub fn parse_scheme(s: &str) -> CliResult<FdScheme> {
    match s {
        "explicit" => Ok(FdScheme::Explicit),
        "semi-implicit" => Ok(FdScheme::SemiImplicit),
        other => Err(CliError::config("scheme", format!("unknown scheme `{other}`"))),
    }
}

/// Summary tables over every run directory below `root`, from artifacts alone.
pub fn cmd_report(root: &Path) -> CliResult<String> {
    let mut runs: Vec<PathBuf> = walk(root)?
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n == "manifest.json"))
        .filter_map(|p| p.parent().map(Path::to_path_buf))
        .collect();
    runs.sort();
    let mut csv = String::from("run,problem,gradient_kind,seed,config_sha256,me,rmse,re1,re2,residual_l2,certified\n");
    let mut md = String::from("| run | problem | gradient | seed | RMSE | RE2 | residual | certified |\n|---|---|---|---|---|---|---|---|\n");
    for run in &runs {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).at(run.join("manifest.json"))?)?;
        let metrics_path = run.join("metrics.json");
        let e: Evaluation = serde_json::from_str(&fs::read_to_string(&metrics_path).at(&metrics_path)?)?;
        let name = run.strip_prefix(root).unwrap_or(run).to_string_lossy().replace('\\', "/");
        let name = if name.is_empty() { ".".to_string() } else { name };
        let c = e.critic.as_ref();
        let f = |v: Option<f64>| v.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
        let certified = e
            .bounded_inverse
            .as_ref()
            .map(|b| if b.pass && b.applicable { "yes" } else { "no" })
            .unwrap_or("-");
        let _ = writeln!(
            csv,
            "{name},{},{},{},{},{},{},{},{},{:.4e},{certified}",
            m.problem,
            m.gradient_kind,
            m.seed,
            m.config_sha256,
            f(c.map(|c| c.me)),
            f(c.map(|c| c.rmse)),
            f(c.and_then(|c| c.re1)),
            f(c.and_then(|c| c.re2)),
            e.residual_l2.value
        );
        let _ = writeln!(
            md,
            "| {name} | {} | {} | {} | {} | {} | {:.4e} | {certified} |",
            m.problem,
            m.gradient_kind,
            m.seed,
            f(c.map(|c| c.rmse)),
            f(c.and_then(|c| c.re2)),
            e.residual_l2.value
        );
    }
    write(&root.join("summary.csv"), &csv)?;
    write(&root.join("summary.md"), &md)?;
    Ok(csv)
}
