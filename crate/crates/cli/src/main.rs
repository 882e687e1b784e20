use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use downgrade::fluid::{default_step, integrate, stability_report};
use downgrade::loss::{open_grid, sweep, three_class_sweep_params, two_class_sweep_params, SweepRow};
use downgrade::provisioning::{
    default_lambda2_grid, downgrade_curve, loss_probability, max_threshold, ProvisionQuery,
    FINITE_SIZE_NOTE,
};
use downgrade::report::{fmt_real, write_csv, write_curve, write_distribution, write_fluid, write_sweep, write_trace};
use downgrade::sim::{empirical_offset_distribution, fluid_trace, merge, simulate, SimConfig, SimOutcome, PRNG_ID};
use downgrade::{ErrorKind, FluidState, InvariantDistribution, ModelParams};

const FIGURE1: &str = include_str!("../fixtures/figure1.json");
const FIGURE2A: &str = include_str!("../fixtures/figure2a.json");
const FIGURE2B: &str = include_str!("../fixtures/figure2b.json");
const FIGURE3_4: &str = include_str!("../fixtures/figure3_4.json");

/// Offsets written for the Figure 1 histogram.
const FIGURE1_RANGE: (i64, i64) = (-400, 1500);

#[derive(Parser)]
#[command(name = "downgrade", version, about = "Multi-class link with bit-rate downgrading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Io {
    /// JSON input file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check a parameter set and report which load conditions hold.
    Validate(Io),
    /// Fluid fixed point and non-downgrade probability.
    FixedPoint(Io),
    /// Limiting law of the offset over an integer range.
    Invariant {
        #[command(flatten)]
        io: Io,
        /// Integer range `a:b` of offsets to evaluate.
        #[arg(long, default_value = "-50:150", allow_hyphen_values = true, value_parser = parse_range)]
        range: (i64, i64),
        /// Also write the located zeros to roots.json.
        #[arg(long)]
        dump_roots: bool,
    },
    /// Closed-form moments of the offset at the fixed point.
    Moments(Io),
    /// Integrate the fluid dynamics and linearise at the fixed point.
    Fluid(Io),
    /// Simulate the finite link.
    Simulate {
        #[command(flatten)]
        io: Io,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Independent replicas with consecutive seeds, merged.
        #[arg(long, default_value_t = 1)]
        replicas: u64,
    },
    /// Loss-system benchmark against the downgrading policy.
    CompareLoss(Io),
    /// Largest threshold meeting a loss target, and the downgrade curve.
    Threshold(Io),
    /// Regenerate the data behind all figures.
    Figures(Io),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::FixedPoint(_) => "fixed-point",
            Command::Invariant { .. } => "invariant",
            Command::Moments(_) => "moments",
            Command::Fluid(_) => "fluid",
            Command::Simulate { .. } => "simulate",
            Command::CompareLoss(_) => "compare-loss",
            Command::Threshold(_) => "threshold",
            Command::Figures(_) => "figures",
        }
    }

    fn io(&self) -> &Io {
        match self {
            Command::Validate(io)
            | Command::FixedPoint(io)
            | Command::Moments(io)
            | Command::Fluid(io)
            | Command::CompareLoss(io)
            | Command::Threshold(io)
            | Command::Figures(io) => io,
            Command::Invariant { io, .. } | Command::Simulate { io, .. } => io,
        }
    }
}

fn parse_range(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected a:b, got {s}"))?;
    let a: i64 = a.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let b: i64 = b.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if a > b {
        return Err(format!("empty range {a}:{b}"));
    }
    Ok((a, b))
}

/// Input rejected by the front end itself; exits like a validation error.
#[derive(Debug)]
struct Rejected(String);

impl fmt::Display for Rejected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Rejected {}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<downgrade::Error>().map(|e| e.kind()) {
        Some(ErrorKind::Validation) | None => 2,
        Some(ErrorKind::Regime) => 3,
        Some(ErrorKind::Numerical) => 4,
    }
}

#[derive(Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Prng {
    id: &'static str,
    seeds: Vec<u64>,
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    config: Value,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prng: Option<Prng>,
    outputs: Vec<OutputFile>,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Collects the files of one run and their digests.
struct Run {
    dir: PathBuf,
    config: Value,
    prng: Option<Prng>,
    outputs: Vec<OutputFile>,
}

impl Run {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            config: Value::Null,
            prng: None,
            outputs: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(name, text.as_bytes())
    }

    fn csv<F>(&mut self, name: &str, write: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> downgrade::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.emit(name, &buf)
    }

    fn finish(self, command: &'static str, failure: Option<&anyhow::Error>) -> anyhow::Result<()> {
        let manifest = RunManifest {
            command,
            config: self.config,
            version: env!("CARGO_PKG_VERSION"),
            prng: self.prng,
            outputs: self.outputs,
            status: if failure.is_some() { "error" } else { "ok" },
            error: failure.map(|e| format!("{e:#}")),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

/// Parses the config and stores its canonical form in the manifest.
fn load<T: Serialize + DeserializeOwned>(run: &mut Run, io: &Io) -> anyhow::Result<T> {
    let path = io
        .config
        .as_ref()
        .ok_or_else(|| Rejected("--config is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Rejected(format!("cannot read {}: {e}", path.display())))?;
    parse_into(run, &text)
}

fn parse_into<T: Serialize + DeserializeOwned>(run: &mut Run, text: &str) -> anyhow::Result<T> {
    let value: T = serde_json::from_str(text).map_err(|e| downgrade::Error::Load(e.to_string()))?;
    run.config = serde_json::to_value(&value)?;
    Ok(value)
}

/// Parameters, optionally with a fluid state in `Delta0`; the fixed point is used otherwise.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ModelInput {
    AtState {
        params: ModelParams,
        ell: Vec<f64>,
    },
    Plain(ModelParams),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FluidConfig {
    params: ModelParams,
    /// Starting point; an empty link when absent.
    #[serde(default)]
    initial: Option<Vec<f64>>,
    horizon: f64,
    #[serde(default)]
    step: Option<f64>,
    /// Keep every k-th integration step in the CSV.
    #[serde(default = "one")]
    every: usize,
}

fn one() -> usize {
    1
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum SweepConfig {
    /// `A = (1, 3)` as a function of `lambda_2`.
    TwoClass { lo: f64, hi: f64, points: usize },
    /// `A = (1, 2, 3)` as a function of `lambda_3`.
    ThreeClass { lo: f64, hi: f64, points: usize },
    /// A fixed parameter set as a function of `c0`.
    Threshold { params: ModelParams, c0: Vec<f64> },
}

impl SweepConfig {
    fn run(&self) -> downgrade::Result<Vec<SweepRow>> {
        match self {
            SweepConfig::TwoClass { lo, hi, points } => {
                sweep(&open_grid(*lo, *hi, *points), two_class_sweep_params)
            }
            SweepConfig::ThreeClass { lo, hi, points } => {
                sweep(&open_grid(*lo, *hi, *points), three_class_sweep_params)
            }
            SweepConfig::Threshold { params, c0 } => sweep(c0, |x| params.with_c0(x)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveConfig {
    query: ProvisionQuery,
    epsilons: Vec<f64>,
    #[serde(default = "default_lambda2_grid")]
    lambda2: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let mut run = match Run::new(&cli.command.io().out) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("downgrade {name}: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = dispatch(&cli.command, &mut run);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("downgrade {name}: {e:#}");
            exit_code(e)
        }
    };
    if let Err(e) = run.finish(name, result.as_ref().err()) {
        eprintln!("downgrade {name}: {e:#}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}

fn dispatch(command: &Command, run: &mut Run) -> anyhow::Result<()> {
    match command {
        Command::Validate(io) => validate(run, io),
        Command::FixedPoint(io) => {
            let params: ModelParams = load(run, io)?;
            let fp = params.fixed_point()?;
            run.json("fixed_point.json", &fp)
        }
        Command::Invariant { io, range, dump_roots } => invariant(run, io, *range, *dump_roots),
        Command::Moments(io) => {
            let params: ModelParams = load(run, io)?;
            let dist = InvariantDistribution::at_fixed_point(&params)?;
            let moments = dist.moments(&params)?;
            run.json("moments.json", &json!({ "closed_form": moments, "summed": dist.summed_moments() }))
        }
        Command::Fluid(io) => fluid(run, io),
        Command::Simulate { io, seed, replicas } => simulate_cmd(run, io, *seed, *replicas),
        Command::CompareLoss(io) => {
            let cfg: SweepConfig = load(run, io)?;
            let rows = cfg.run()?;
            run.csv("compare_loss.csv", |w| write_sweep(w, &rows))
        }
        Command::Threshold(io) => threshold(run, io),
        Command::Figures(io) => figures(run, io),
    }
}

fn validate(run: &mut Run, io: &Io) -> anyhow::Result<()> {
    let params: ModelParams = load(run, io)?;
    let report = params.validate()?;
    run.json("validate.json", &report)?;
    if !report.feasible {
        return Err(Rejected(report.notes.join("; ")).into());
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn invariant(run: &mut Run, io: &Io, (a, b): (i64, i64), dump_roots: bool) -> anyhow::Result<()> {
    let input: ModelInput = load(run, io)?;
    let (params, state) = match input {
        ModelInput::AtState { params, ell } => {
            let state = FluidState::new(&params, ell)?;
            (params, state)
        }
        ModelInput::Plain(params) => {
            let fp = params.fixed_point()?;
            (params, fp.state)
        }
    };
    let dist = InvariantDistribution::build(&params, &state)?;
    write_law(run, "invariant.csv", &dist, a, b)?;

    let moments = params
        .fixed_point()
        .ok()
        .filter(|fp| fp.state.distance(&state) < 1e-9)
        .map(|_| dist.moments(&params))
        .transpose()?;
    let summed = dist.summed_moments();
    let sidecar = json!({
        "kappa": dist.kappa,
        "z1": dist.z1,
        "mean": moments.as_ref().map_or(summed.mean, |m| m.mean),
        "variance": moments.as_ref().map_or(summed.variance, |m| m.variance),
        "third_central": moments.as_ref().map_or(summed.third_central, |m| m.third_central),
        "standardized_skew": moments.as_ref().map_or(
            summed.third_central / summed.variance.powf(1.5),
            |m| m.standardized_skew,
        ),
        "pi_neg": dist.negative_mass(),
        "range": [a, b],
    });
    run.json("invariant.json", &sidecar)?;
    if dump_roots {
        run.json("roots.json", &dist.roots)?;
    }
    Ok(())
}

fn write_law(run: &mut Run, name: &str, dist: &InvariantDistribution, a: i64, b: i64) -> anyhow::Result<()> {
    run.csv(name, |w| {
        write_csv(
            w,
            &["n", "pi_n"],
            (a..=b).map(|n| vec![n.to_string(), fmt_real(dist.evaluate(n))]),
        )
    })
}

fn fluid(run: &mut Run, io: &Io) -> anyhow::Result<()> {
    let cfg: FluidConfig = load(run, io)?;
    let start = cfg
        .initial
        .clone()
        .unwrap_or_else(|| vec![0.0; cfg.params.classes()]);
    let start = FluidState::new(&cfg.params, start)?;
    let report = stability_report(&cfg.params)?;
    let step = cfg.step.unwrap_or_else(|| default_step(&cfg.params));
    let traj = integrate(&cfg.params, &start, cfg.horizon, step)?.decimate(cfg.every.max(1));
    run.csv("fluid.csv", |w| write_fluid(w, &traj))?;
    run.json("stability.json", &report)
}

fn simulate_cmd(run: &mut Run, io: &Io, seed: Option<u64>, replicas: u64) -> anyhow::Result<()> {
    let mut cfg: SimConfig = load(run, io)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
        run.config = serde_json::to_value(&cfg)?;
    }
    if replicas == 0 {
        return Err(Rejected("--replicas must be at least 1".into()).into());
    }
    let configs: Vec<SimConfig> = (0..replicas)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(k);
            c
        })
        .collect();
    let outcomes: Vec<SimOutcome> = thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || simulate(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| anyhow!("simulation worker panicked"))?.map_err(Into::into))
            .collect::<anyhow::Result<_>>()
    })?;
    run.prng = Some(Prng {
        id: PRNG_ID,
        seeds: configs.iter().map(|c| c.seed).collect(),
    });

    for o in &outcomes {
        if o.path_sample.is_some() {
            let trace = fluid_trace(o, 1)?;
            let name = if replicas == 1 {
                "trace.csv".to_string()
            } else {
                format!("trace_seed{}.csv", o.seeds[0])
            };
            run.csv(&name, |w| write_trace(w, &trace))?;
        }
    }
    let merged = if replicas == 1 {
        outcomes.into_iter().next().expect("one replica")
    } else {
        merge(&outcomes)?
    };
    if let Ok(hist) = empirical_offset_distribution(&merged) {
        run.csv("histogram.csv", |w| write_distribution(w, &hist))?;
    }
    run.json("outcome.json", &merged)
}

fn threshold(run: &mut Run, io: &Io) -> anyhow::Result<()> {
    let query: ProvisionQuery = load(run, io)?;
    let alpha = max_threshold(&query)?;
    let params = query.params.with_c0(alpha);
    let summary = json!({
        "alpha_eps": alpha,
        "pi_minus_eps": params.pi_minus()?,
        "loss_probability": loss_probability(&query, alpha)?,
        "headroom_units": query.headroom(alpha),
        "note": FINITE_SIZE_NOTE,
    });
    let rows = downgrade_curve(&query, &default_lambda2_grid())?;
    run.csv("threshold.csv", |w| write_curve(w, &rows))?;
    run.json("threshold.json", &summary)
}

fn figures(run: &mut Run, io: &Io) -> anyhow::Result<()> {
    let fig1: ModelParams = match &io.config {
        Some(_) => load(run, io)?,
        None => parse_into(run, FIGURE1)?,
    };
    let dist = InvariantDistribution::at_fixed_point(&fig1)?;
    let moments = dist.moments(&fig1)?;
    let (a, b) = FIGURE1_RANGE;
    write_law(run, "figure1_invariant.csv", &dist, a, b)?;
    run.json("figure1_moments.json", &moments)?;

    let fig2a: SweepConfig = serde_json::from_str(FIGURE2A)?;
    let fig2b: SweepConfig = serde_json::from_str(FIGURE2B)?;
    let rows_a = fig2a.run()?;
    let rows_b = fig2b.run()?;
    run.csv("figure2a.csv", |w| write_sweep(w, &rows_a))?;
    run.csv("figure2b.csv", |w| write_sweep(w, &rows_b))?;

    let fig34: CurveConfig = serde_json::from_str(FIGURE3_4)?;
    let mut rows = Vec::new();
    for eps in &fig34.epsilons {
        let mut q = fig34.query.clone();
        q.epsilon = *eps;
        rows.extend(downgrade_curve(&q, &fig34.lambda2)?);
    }
    run.csv("figure3_4.csv", |w| write_curve(w, &rows))?;

    let violations = |rows: &[SweepRow]| rows.iter().filter(|r| r.regime_ok && r.w_d > r.w_l).count();
    run.json(
        "figures.json",
        &json!({
            "figure1": { "params": fig1, "range": [a, b] },
            "figure2a": fig2a,
            "figure2b": fig2b,
            "figure2_violations": violations(&rows_a) + violations(&rows_b),
            "figure3_4": fig34,
            "note": FINITE_SIZE_NOTE,
        }),
    )
}
