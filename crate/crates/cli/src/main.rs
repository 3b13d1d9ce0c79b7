//! Command-line harness for the `atomic-regen` library.
//!
//! Every stochastic subcommand takes a mandatory `--seed` and writes a header
//! record holding the configuration hash, the seed and the crate version, so
//! that the same arguments reproduce the same bytes. Wall-clock timings are
//! only written with `--timing`.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use atomic_regen::atomext::{extend_model, perfect_sample_path_ext, tune_psi, PathSamplerConfig, TuningConfig};
use atomic_regen::diagnostics::{
    default_budget, estimate_p_lower_detailed, pilot_states, run_beta_diagnostic, Verdict,
};
use atomic_regen::experiments::{run_experiment, Scale, EXPERIMENTS};
use atomic_regen::factory::{
    flip_eps_over_p_coin, flip_one_minus_p_coin, BernoulliCoin, CoinSource, FactoryConfig,
};
use atomic_regen::models::config::{Model, ModelConfig};
use atomic_regen::models::pmmh::AtomizedPmmhKernel;
use atomic_regen::regen::{Algorithm, AtomicKernel, PerfectSampler};
use atomic_regen::smc::{estimate_log_nc, run_smc, FeynmanKacModel};
use atomic_regen::stream::substream;
use atomic_regen::tours::{max_tour_stats, run_parallel_tours};
use atomic_regen::Error;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser, Debug)]
#[command(name = "atomic-regen", version, about = "Perfect simulation through atomic regeneration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Perfect samples from the invariant law of an atomic kernel (finite_chain or pmmh config).
    Sample(SampleArgs),
    /// Perfect samples of Feynman-Kac paths (linear_gaussian, absorbing or sensor config).
    SamplePath(SamplePathArgs),
    /// Tune the extended-model constants psi by a large particle filter.
    Tune(TuneArgs),
    /// Normalizing-constant estimates from independent particle filters.
    Smc(SmcArgs),
    /// Check beta against p(x), for a model or for a plain p-coin.
    Diagnose(DiagnoseArgs),
    /// Simulate regeneration tours in parallel.
    Tours(ToursArgs),
    /// Cost of the linear Bernoulli factory, as one CSV row.
    BenchFactory(BenchArgs),
    /// Run a named acceptance experiment and print its checks.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Output file (default: standard output).
    #[arg(long, short)]
    #[serde(skip)]
    output: Option<PathBuf>,
    /// Add wall-clock timings to the output (breaks byte-reproducibility).
    #[arg(long)]
    #[serde(skip)]
    timing: bool,
}

#[derive(Args, Debug, Serialize)]
struct FactoryArgs {
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// Defaults to beta / 2.
    #[arg(long)]
    eps: Option<f64>,
}

impl FactoryArgs {
    fn config(&self) -> Result<FactoryConfig, Error> {
        FactoryConfig::new(self.beta, self.eps.unwrap_or(self.beta / 2.0))
    }
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// JSON model configuration.
    #[arg(long)]
    #[serde(skip)]
    config: PathBuf,
    #[command(flatten)]
    factory: FactoryArgs,
    #[arg(long, default_value = "imputation", value_parser = parse_algorithm)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Run the beta diagnostic at every visited state.
    #[arg(long)]
    diagnose: bool,
}

#[derive(Args, Debug, Serialize)]
struct SamplePathArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip)]
    config: PathBuf,
    #[command(flatten)]
    factory: FactoryArgs,
    #[arg(long, default_value = "imputation", value_parser = parse_algorithm)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Particles of the i-cSMC kernel.
    #[arg(long, default_value_t = 128)]
    particles: usize,
    /// Prior weight of the atom in the extended model.
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    #[arg(long, default_value_t = 10_000)]
    n_prime: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Use Kalman-exact increments for psi (linear_gaussian only).
    #[arg(long)]
    exact_psi: bool,
    #[arg(long, default_value_t = 10_000)]
    max_attempts: u64,
    #[arg(long)]
    diagnose: bool,
}

#[derive(Args, Debug, Serialize)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip)]
    config: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n_prime: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
}

#[derive(Args, Debug, Serialize)]
struct SmcArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip)]
    config: PathBuf,
    #[arg(long, default_value_t = 256)]
    particles: usize,
    #[arg(long, default_value_t = 1)]
    runs: usize,
}

#[derive(Args, Debug, Serialize)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: Common,
    /// Atomic-kernel configuration (finite_chain or pmmh). Without it, a
    /// Bernoulli(p) coin is tested.
    #[arg(long, conflicts_with = "p")]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// Flip budget of the coin diagnostic (default 50 (1 - beta) / beta).
    #[arg(long)]
    budget: Option<u64>,
    /// Pilot-run length used to collect probe states.
    #[arg(long, default_value_t = 200)]
    pilot_steps: usize,
    #[arg(long, default_value_t = 2_000)]
    flips_per_state: u64,
}

#[derive(Args, Debug, Serialize)]
struct ToursArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip)]
    config: PathBuf,
    #[arg(long, default_value_t = 1_000)]
    count: usize,
    /// Worker threads. Does not change the output.
    #[arg(long, env = "ATOMIC_REGEN_WORKERS", default_value_t = 1)]
    #[serde(skip)]
    workers: usize,
    /// Kernel draws allowed per tour.
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
    /// Also write the visited states of every tour.
    #[arg(long)]
    states: bool,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    factory: FactoryArgs,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
}

#[derive(Args, Debug, Serialize)]
struct ReproduceArgs {
    #[command(flatten)]
    common: Common,
    /// Experiment id, or "all".
    #[arg(long)]
    experiment: String,
    #[arg(long, default_value = "desk", value_parser = parse_scale)]
    scale: Scale,
    /// Write the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a subcommand, mapped onto the documented exit codes.
#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(io::Error),
    /// A run that completed but whose checks did not pass.
    Checks(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Config(_)) => 2,
            Failure::Lib(Error::ParticleDeath { .. }) => 3,
            Failure::Lib(Error::BudgetExceeded { .. }) => 4,
            Failure::Lib(Error::DiagnosticFailed(_)) => 5,
            Failure::Lib(Error::ContractViolation(_)) | Failure::Io(_) | Failure::Checks(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Io(e) => format!("i/o error: {e}"),
            Failure::Checks(m) => m.clone(),
        }
    }
}

type CliResult = Result<(), Failure>;

/// Output sink with the reproducibility header.
struct Sink {
    out: Box<dyn Write>,
    timing: bool,
    start: Instant,
}

impl Sink {
    fn open(common: &Common) -> io::Result<Self> {
        let out: Box<dyn Write> = match &common.output {
            Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
            None => Box::new(io::BufWriter::new(io::stdout().lock())),
        };
        Ok(Self {
            out,
            timing: common.timing,
            start: Instant::now(),
        })
    }

    fn line(&mut self, v: &Value) -> io::Result<()> {
        writeln!(self.out, "{v}")
    }

    fn raw(&mut self, s: &str) -> io::Result<()> {
        writeln!(self.out, "{s}")
    }

    /// Closing record for JSON Lines outputs: only written with `--timing`.
    fn finish(mut self) -> io::Result<()> {
        if self.timing {
            let secs = self.start.elapsed().as_secs_f64();
            self.line(&json!({ "timing": { "wall_seconds": secs } }))?;
        }
        self.out.flush()
    }
}

/// Header fields: a SHA-256 over the subcommand name, its arguments and the
/// normalized model configuration.
fn header<A: Serialize>(subcommand: &str, args: &A, seed: u64, config: Option<&ModelConfig>) -> Value {
    let args_json = serde_json::to_value(args).expect("arguments serialize");
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update(args_json.to_string().as_bytes());
    if let Some(c) = config {
        h.update(c.to_json().as_bytes());
    }
    let digest: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    json!({
        "header": {
            "tool": "atomic-regen",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "seed": seed,
            "config_hash": digest,
            "args": args_json,
            "model": config.map(|c| serde_json::to_value(c).expect("config serializes")),
        }
    })
}

fn load_config(path: &PathBuf) -> Result<ModelConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(ModelConfig::from_json(&text)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::SamplePath(a) => cmd_sample_path(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Smc(a) => cmd_smc(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Tours(a) => cmd_tours(a),
        Command::BenchFactory(a) => cmd_bench(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

// ---------------------------------------------------------------------------
// sample

fn cmd_sample(a: &SampleArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let factory = a.factory.config()?;
    let mut sink = Sink::open(&a.common)?;
    sink.line(&header("sample", a, a.common.seed, Some(&cfg)))?;
    match cfg.resolve()? {
        Model::FiniteChain(chain) => sample_kernel(&chain, factory, a, &mut sink)?,
        Model::Pmmh {
            observations,
            settings,
            atom_particles,
        } => {
            let mut rng = substream(a.common.seed, u64::MAX);
            let kernel = AtomizedPmmhKernel::build(observations, settings, atom_particles, &mut rng)?;
            sample_kernel(&kernel, factory, a, &mut sink)?
        }
        other => {
            return Err(Error::Config(format!(
                "sample needs an atomic kernel (finite_chain or pmmh), got {}; use sample-path",
                other.name()
            ))
            .into())
        }
    }
    Ok(sink.finish()?)
}

fn sample_kernel<K>(kernel: &K, factory: FactoryConfig, a: &SampleArgs, sink: &mut Sink) -> CliResult
where
    K: AtomicKernel,
    K::State: Serialize,
{
    let mut sampler = PerfectSampler::new(kernel, factory);
    if a.diagnose {
        sampler.diagnose = Some(default_budget(factory.beta));
    }
    for i in 0..a.count {
        let mut rng = substream(a.common.seed, i as u64);
        let r = sampler.sample(a.algorithm, &mut rng)?;
        sink.line(&json!({ "index": i, "record": r }))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sample-path, tune, smc

fn with_fk_model<F>(model: Model, f: F) -> CliResult
where
    F: FkVisitor,
{
    match model {
        Model::LinearGaussian(m) => f.visit(&m, Some(&m)),
        Model::Absorbing(m) => f.visit(&m, None),
        Model::Sensor(m) => f.visit(&m, None),
        other => Err(Error::Config(format!(
            "this subcommand needs a Feynman-Kac model (linear_gaussian, absorbing or sensor), got {}",
            other.name()
        ))
        .into()),
    }
}

/// Generic body run on whichever Feynman-Kac model the config names.
trait FkVisitor {
    fn visit<M>(self, model: &M, lg: Option<&atomic_regen::models::LinearGaussianModel>) -> CliResult
    where
        M: FeynmanKacModel,
        M::Point: Serialize;
}

struct SamplePathRun<'a> {
    args: &'a SamplePathArgs,
    sink: &'a mut Sink,
}

impl FkVisitor for SamplePathRun<'_> {
    fn visit<M>(self, model: &M, lg: Option<&atomic_regen::models::LinearGaussianModel>) -> CliResult
    where
        M: FeynmanKacModel,
        M::Point: Serialize,
    {
        let a = self.args;
        let psi = if a.exact_psi {
            let lg = lg.ok_or_else(|| Error::Config("--exact-psi needs a linear_gaussian model".into()))?;
            lg.exact_increments()
        } else {
            let mut rng = substream(a.common.seed, u64::MAX);
            let tuning = tune_psi(
                model,
                &TuningConfig {
                    n_prime: a.n_prime,
                    reps: a.reps,
                    b: a.b,
                    ..Default::default()
                },
                &mut rng,
            )?;
            self.sink.line(&json!({ "tuning": tuning }))?;
            tuning.psi
        };
        let cfg = PathSamplerConfig {
            n_particles: a.particles,
            b: a.b,
            factory: a.factory.config()?,
            algorithm: a.algorithm,
            max_attempts: a.max_attempts,
            diagnose: a.diagnose.then(|| default_budget(a.factory.beta)),
        };
        let ext = extend_model(model, a.b, &psi)?;
        for i in 0..a.count {
            let mut rng = substream(a.common.seed, i as u64);
            let r = perfect_sample_path_ext(&ext, &cfg, &mut rng)?;
            self.sink.line(&json!({ "index": i, "record": r }))?;
        }
        Ok(())
    }
}

fn cmd_sample_path(a: &SamplePathArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let model = cfg.resolve()?;
    let mut sink = Sink::open(&a.common)?;
    sink.line(&header("sample-path", a, a.common.seed, Some(&cfg)))?;
    with_fk_model(model, SamplePathRun { args: a, sink: &mut sink })?;
    Ok(sink.finish()?)
}

struct TuneRun<'a> {
    args: &'a TuneArgs,
    sink: &'a mut Sink,
}

impl FkVisitor for TuneRun<'_> {
    fn visit<M>(self, model: &M, lg: Option<&atomic_regen::models::LinearGaussianModel>) -> CliResult
    where
        M: FeynmanKacModel,
        M::Point: Serialize,
    {
        let a = self.args;
        let mut rng = substream(a.common.seed, 0);
        let report = tune_psi(
            model,
            &TuningConfig {
                n_prime: a.n_prime,
                reps: a.reps,
                b: a.b,
                ..Default::default()
            },
            &mut rng,
        )?;
        let mut out = json!({ "tuning": report });
        if let Some(lg) = lg {
            let exact = lg.exact_increments();
            let worst = report
                .psi
                .iter()
                .zip(&exact)
                .map(|(p, e)| (p / e - 1.0).abs())
                .fold(0.0, f64::max);
            out["kalman"] = json!({
                "exact_increments": exact,
                "max_relative_error": worst,
                "prod_psi_over_gamma": (report.log_psi.iter().sum::<f64>() - lg.log_evidence()).exp(),
            });
        }
        self.sink.line(&out)?;
        Ok(())
    }
}

fn cmd_tune(a: &TuneArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let model = cfg.resolve()?;
    let mut sink = Sink::open(&a.common)?;
    sink.line(&header("tune", a, a.common.seed, Some(&cfg)))?;
    with_fk_model(model, TuneRun { args: a, sink: &mut sink })?;
    Ok(sink.finish()?)
}

struct SmcRun<'a> {
    args: &'a SmcArgs,
    sink: &'a mut Sink,
}

impl FkVisitor for SmcRun<'_> {
    fn visit<M>(self, model: &M, lg: Option<&atomic_regen::models::LinearGaussianModel>) -> CliResult
    where
        M: FeynmanKacModel,
        M::Point: Serialize,
    {
        let a = self.args;
        if let Some(lg) = lg {
            self.sink.line(&json!({ "kalman_log_evidence": lg.log_evidence() }))?;
        }
        for i in 0..a.runs {
            let mut rng = substream(a.common.seed, i as u64);
            // Particle death is reported as a record, not an abort: the
            // estimate is then exactly zero.
            let rec = match run_smc(model, a.particles, &mut rng).and_then(|v| estimate_log_nc(&v)) {
                Ok(l) => json!({ "index": i, "log_nc": l }),
                Err(Error::ParticleDeath { step }) => json!({ "index": i, "log_nc": null, "death_step": step }),
                Err(e) => return Err(e.into()),
            };
            self.sink.line(&rec)?;
        }
        Ok(())
    }
}

fn cmd_smc(a: &SmcArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let model = cfg.resolve()?;
    let mut sink = Sink::open(&a.common)?;
    sink.line(&header("smc", a, a.common.seed, Some(&cfg)))?;
    with_fk_model(model, SmcRun { args: a, sink: &mut sink })?;
    Ok(sink.finish()?)
}

// ---------------------------------------------------------------------------
// diagnose

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult {
    let cfg = a.config.as_ref().map(load_config).transpose()?;
    let mut sink = Sink::open(&a.common)?;
    sink.line(&header("diagnose", a, a.common.seed, cfg.as_ref()))?;
    let verdict = match (&cfg, a.p) {
        (None, Some(p)) => {
            let mut coin = BernoulliCoin::new(p)?;
            let mut rng = substream(a.common.seed, 0);
            let budget = a.budget.unwrap_or_else(|| default_budget(a.beta));
            let out = run_beta_diagnostic(&mut coin, a.beta, budget, &mut rng)?;
            sink.line(&json!({ "coin_diagnostic": out }))?;
            out.verdict == Verdict::Passed
        }
        (Some(cfg), None) => match cfg.resolve()? {
            Model::FiniteChain(chain) => diagnose_kernel(&chain, a, &mut sink)?,
            Model::Pmmh {
                observations,
                settings,
                atom_particles,
            } => {
                let mut rng = substream(a.common.seed, u64::MAX);
                let kernel = AtomizedPmmhKernel::build(observations, settings, atom_particles, &mut rng)?;
                diagnose_kernel(&kernel, a, &mut sink)?
            }
            other => {
                return Err(Error::Config(format!(
                    "diagnose needs an atomic kernel (finite_chain or pmmh), got {}",
                    other.name()
                ))
                .into())
            }
        },
        _ => return Err(Error::Config("diagnose needs exactly one of --config or --p".into()).into()),
    };
    sink.finish()?;
    if verdict {
        Ok(())
    } else {
        Err(Error::DiagnosticFailed(format!("beta = {} is not supported by the evidence", a.beta)).into())
    }
}

fn diagnose_kernel<K>(kernel: &K, a: &DiagnoseArgs, sink: &mut Sink) -> Result<bool, Failure>
where
    K: AtomicKernel,
    K::State: Serialize,
{
    let mut rng = substream(a.common.seed, 0);
    let states = pilot_states(kernel, a.pilot_steps, &mut rng)?;
    let (lower, per_state) = estimate_p_lower_detailed(kernel, &states, a.flips_per_state, &mut rng)?;
    let probes: Vec<Value> = states
        .iter()
        .zip(&per_state)
        .map(|(s, e)| json!({ "state": s, "estimate": e }))
        .collect();
    sink.line(&json!({
        "p_lower_99": lower,
        "beta": a.beta,
        "passed": lower >= a.beta,
        "probes": probes,
    }))?;
    Ok(lower >= a.beta)
}

// ---------------------------------------------------------------------------
// tours

fn cmd_tours(a: &ToursArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let mut sink = Sink::open(&a.common)?;
    sink.line(&header("tours", a, a.common.seed, Some(&cfg)))?;
    match cfg.resolve()? {
        Model::FiniteChain(chain) => write_tours(&chain, a, &mut sink)?,
        Model::Pmmh {
            observations,
            settings,
            atom_particles,
        } => {
            let mut rng = substream(a.common.seed, u64::MAX);
            let kernel = AtomizedPmmhKernel::build(observations, settings, atom_particles, &mut rng)?;
            write_tours(&kernel, a, &mut sink)?
        }
        other => {
            return Err(Error::Config(format!(
                "tours needs an atomic kernel (finite_chain or pmmh), got {}",
                other.name()
            ))
            .into())
        }
    }
    Ok(sink.finish()?)
}

fn write_tours<K>(kernel: &K, a: &ToursArgs, sink: &mut Sink) -> CliResult
where
    K: AtomicKernel + Sync,
    K::State: Serialize + Send,
{
    let col = run_parallel_tours(kernel, a.count, a.workers, a.common.seed, a.budget)?;
    for (i, t) in col.tours.iter().enumerate() {
        let rec = match t {
            atomic_regen::tours::TourOutcome::Complete(t) if a.states => {
                json!({ "index": i, "length": t.length(), "cost": t.cost, "states": t.states })
            }
            atomic_regen::tours::TourOutcome::Complete(t) => json!({ "index": i, "length": t.length(), "cost": t.cost }),
            atomic_regen::tours::TourOutcome::Failed { error } => json!({ "index": i, "error": error }),
        };
        sink.line(&rec)?;
    }
    let stats = max_tour_stats(&col)?;
    sink.line(&json!({ "summary": stats, "failures": col.failures() }))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bench-factory

fn cmd_bench(a: &BenchArgs) -> CliResult {
    let cfg = a.factory.config()?;
    let mut sink = Sink::open(&a.common)?;
    let h = header("bench-factory", a, a.common.seed, None);
    sink.raw(&format!("# {h}"))?;
    let mut rng = substream(a.common.seed, 0);
    let (mut eps_heads, mut subcoins) = (0u64, 0u64);
    let (mut one_minus_heads, mut raw) = (0u64, 0u64);
    let start = Instant::now();
    for _ in 0..a.reps {
        let mut coin = BernoulliCoin::new(a.p)?;
        let out = flip_eps_over_p_coin(&mut coin, &cfg, &mut rng)?;
        eps_heads += out.bit as u64;
        subcoins += out.subcoin_flips;
        let mut coin = BernoulliCoin::new(a.p)?;
        one_minus_heads += flip_one_minus_p_coin(&mut coin, &cfg, &mut rng)? as u64;
        raw += coin.flips_used();
    }
    let n = a.reps as f64;
    let timing_col = if a.common.timing { ",wall_seconds" } else { "" };
    sink.raw(&format!(
        "beta,eps,p,reps,eps_over_p_freq,eps_over_p_exact,mean_subcoins,mean_subcoins_exact,one_minus_freq,one_minus_exact,mean_raw_flips{timing_col}"
    ))?;
    let timing_val = if a.common.timing {
        format!(",{:.3}", start.elapsed().as_secs_f64())
    } else {
        String::new()
    };
    sink.raw(&format!(
        "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}{timing_val}",
        cfg.beta,
        cfg.eps,
        a.p,
        a.reps,
        eps_heads as f64 / n,
        cfg.eps / a.p,
        subcoins as f64 / n,
        (1.0 - cfg.eps) / a.p,
        one_minus_heads as f64 / n,
        (1.0 - a.p) / (1.0 - cfg.eps),
        raw as f64 / n,
    ))?;
    let mut sink = sink;
    sink.timing = false;
    Ok(sink.finish()?)
}

// ---------------------------------------------------------------------------
// reproduce

fn cmd_reproduce(a: &ReproduceArgs) -> CliResult {
    let ids: Vec<&str> = if a.experiment == "all" {
        EXPERIMENTS.to_vec()
    } else {
        vec![a.experiment.as_str()]
    };
    let mut sink = Sink::open(&a.common)?;
    let h = header("reproduce", a, a.common.seed, None);
    if a.json {
        sink.line(&h)?;
    } else {
        sink.raw(&format!("# {h}"))?;
    }
    let mut failed = Vec::new();
    for id in ids {
        let start = Instant::now();
        let rep = run_experiment(id, a.scale, a.common.seed)?;
        if !rep.passed() {
            failed.push(id.to_string());
        }
        if a.json {
            let mut v = serde_json::to_value(&rep).expect("report serializes");
            v["passed"] = json!(rep.passed());
            if a.common.timing {
                v["wall_seconds"] = json!(start.elapsed().as_secs_f64());
            }
            sink.line(&v)?;
        } else {
            sink.raw(rep.to_string().trim_end())?;
            if a.common.timing {
                sink.raw(&format!("  time: {:.2}s", start.elapsed().as_secs_f64()))?;
            }
        }
    }
    let mut sink = sink;
    sink.timing = false;
    sink.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Checks(format!("experiments with failing checks: {}", failed.join(", "))))
    }
}
