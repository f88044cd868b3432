//! `polaron`: command-line front end for the estimators and verification suites.

mod range;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polaron_core::estimator::{self, McmcConfig, UpperBoundOptions};
use polaron_core::pointprocess::{sample_gamma, sample_thinned_marked};
use polaron_core::verify;
use polaron_core::{MemoryDensity, ModelConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const DEFAULT_SEED: u64 = 20_240_611;

#[derive(Parser, Debug)]
#[command(name = "polaron", version, about = "Diffusion-constant estimators for polaron path measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; every artifact embeds it.
    #[arg(long, global = true, env = "POLARON_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads (default: available cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// JSON model file (`alpha`, `gamma`, `d`, `epsilon`, `T`, optional `g`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one interval configuration (CSV columns s,t,u).
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        /// Sample the thinned process with all marks equal to C instead of the plain process.
        #[arg(long = "C")]
        mark: Option<f64>,
    },
    /// Monte Carlo estimate of the upper bound on the thinned process.
    EstimateUpper {
        #[command(flatten)]
        model: ModelArgs,
        /// Mark level; defaults to alpha^(1/(2+d)).
        #[arg(long = "C")]
        mark: Option<f64>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Also evaluate the exact functional on the whole configuration.
        #[arg(long)]
        full: bool,
    },
    /// Birth-death chain estimate of the diffusion constant and dormant fraction.
    EstimateMcmc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200_000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        chains: usize,
    },
    /// Analytic bound at C = alpha^(1/(2+d)) (CSV columns alpha,C,bound).
    BoundTable {
        #[command(flatten)]
        model: ModelArgs,
        /// Value list such as `1e10:1e14:x10` or `1,10,100`; overrides --alpha.
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Bound (and optional Monte Carlo) over a range of couplings, with the log-log slope.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        alphas: String,
        #[arg(long, default_value_t = 0)]
        reps: usize,
    },
    /// Run the numerical acceptance suites; nonzero exit on any failure.
    Verify {
        /// Restrict to these suite ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Failed(String),
}

impl From<polaron_core::Error> for CliError {
    fn from(e: polaron_core::Error) -> Self {
        use polaron_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::Precondition(_) | E::UnsupportedSize { .. } | E::Json(_) => {
                CliError::Usage(e.to_string())
            }
            E::Io(_) | E::Csv(_) => CliError::Io(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

impl ModelArgs {
    fn resolve(&self, default_eps: f64) -> CliResult<(ModelParams, MemoryDensity)> {
        let (mut params, g) = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let cfg = ModelConfig::from_json(&text)?;
                (cfg.params, cfg.density())
            }
            None => {
                let alpha = self.alpha.ok_or_else(|| CliError::Usage("--alpha is required".into()))?;
                (ModelParams::new(alpha, 1.0, 3, default_eps, 100.0), MemoryDensity::exp1())
            }
        };
        if let Some(a) = self.alpha {
            params.alpha = a;
        }
        if let Some(v) = self.gamma {
            params.gamma = v;
        }
        if let Some(v) = self.d {
            params.d = v;
        }
        if let Some(v) = self.eps {
            params.epsilon = v;
        }
        if let Some(v) = self.horizon {
            params.horizon = v;
        }
        params.validate(&g).into_result()?;
        Ok((params, g))
    }
}

fn output(cli: &Cli) -> CliResult<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: &mut dyn Write, value: &serde_json::Value) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn params_json(params: &ModelParams) -> serde_json::Value {
    serde_json::to_value(params).unwrap_or(serde_json::Value::Null)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Sample { model, mark } => {
            let (params, g) = model.resolve(1.0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = output(cli)?;
            match mark {
                Some(c) => {
                    let zeta = sample_thinned_marked(&params, &g, *c, &mut rng)?;
                    match cli.format {
                        Format::Csv => zeta.to_csv(&mut out)?,
                        Format::Json => write_json(
                            &mut out,
                            &json!({ "seed": seed, "params": params_json(&params), "C": c, "intervals": zeta }),
                        )?,
                    }
                }
                None => {
                    let xi = sample_gamma(&params, &g, &mut rng)?;
                    match cli.format {
                        Format::Csv => xi.to_csv(&mut out)?,
                        Format::Json => {
                            write_json(&mut out, &json!({ "seed": seed, "params": params_json(&params), "intervals": xi }))?
                        }
                    }
                }
            }
            out.flush()?;
        }
        Command::EstimateUpper { model, mark, reps, full } => {
            let (params, g) = model.resolve(1.0)?;
            let c = mark.unwrap_or_else(|| estimator::optimal_c(&params));
            let bound = estimator::theoretical_bound(&params, &g, c)?;
            let est = estimator::upper_bound_mc(&params, &g, c, *reps, seed, UpperBoundOptions { full_config: *full })?;
            let mut out = output(cli)?;
            match cli.format {
                Format::Json => write_json(&mut out, &json!({ "seed": seed, "C": c, "bound": bound, "estimate": est }))?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut out);
                    w.write_record(["variant", "value", "stderr", "replicates", "seed", "C", "bound"])?;
                    let rows = [("skeleton", Some(&est.skeleton)), ("skeleton_dormant", Some(&est.skeleton_dormant)), ("full", est.full.as_ref())];
                    for (name, r) in rows {
                        if let Some(r) = r {
                            w.write_record([
                                name.to_owned(),
                                r.value.to_string(),
                                r.stderr.to_string(),
                                r.replicates.to_string(),
                                seed.to_string(),
                                c.to_string(),
                                bound.to_string(),
                            ])?;
                        }
                    }
                    w.flush()?;
                }
            }
            out.flush()?;
        }
        Command::EstimateMcmc { model, steps, chains } => {
            let (params, g) = model.resolve(0.0)?;
            let cfg = McmcConfig::with_steps(*steps);
            let summaries = estimator::run_chains(&params, &g, &cfg, seed, (*chains).max(1))?;
            let mut out = output(cli)?;
            match cli.format {
                Format::Json => write_json(
                    &mut out,
                    &json!({ "seed": seed, "params": params_json(&params), "mcmc": cfg, "chains": summaries }),
                )?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut out);
                    w.write_record(["chain", "diffusion", "diffusion_stderr", "dormant", "dormant_stderr", "mean_size", "seed"])?;
                    for (k, s) in summaries.iter().enumerate() {
                        w.write_record([
                            k.to_string(),
                            s.diffusion.value.to_string(),
                            s.diffusion.stderr.to_string(),
                            s.dormant_fraction.value.to_string(),
                            s.dormant_fraction.stderr.to_string(),
                            s.mean_size.to_string(),
                            seed.to_string(),
                        ])?;
                    }
                    w.flush()?;
                }
            }
            out.flush()?;
        }
        Command::BoundTable { model, alphas } => {
            let (params, g) = model.resolve(1.0)?;
            let list = match alphas {
                Some(text) => range::parse_values(text).map_err(CliError::Usage)?,
                None => vec![params.alpha],
            };
            let mut rows = Vec::with_capacity(list.len());
            for a in list {
                let p = params.with_alpha(a);
                let c = estimator::optimal_c(&p);
                rows.push((a, c, estimator::theoretical_bound(&p, &g, c)?));
            }
            let mut out = output(cli)?;
            match cli.format {
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut out);
                    w.write_record(["alpha", "C", "bound"])?;
                    for (a, c, b) in &rows {
                        w.write_record([a.to_string(), c.to_string(), b.to_string()])?;
                    }
                    w.flush()?;
                }
                Format::Json => {
                    let rows: Vec<_> = rows.iter().map(|(a, c, b)| json!({ "alpha": a, "C": c, "bound": b })).collect();
                    write_json(&mut out, &json!({ "seed": seed, "params": params_json(&params), "rows": rows }))?
                }
            }
            out.flush()?;
        }
        Command::Sweep { model, alphas, reps } => {
            let list = range::parse_values(alphas).map_err(CliError::Usage)?;
            let model = ModelArgs { alpha: model.alpha.or(list.first().copied()), ..model.clone() };
            let (params, g) = model.resolve(1.0)?;
            let table = estimator::alpha_sweep(&params, &g, &list, *reps, seed)?;
            let mut out = output(cli)?;
            match cli.format {
                Format::Json => write_json(&mut out, &json!({ "params": params_json(&params), "sweep": table, "slope": table.slope }))?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut out);
                    w.write_record(["alpha", "C", "bound", "mc", "stderr"])?;
                    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                    for r in &table.rows {
                        w.write_record([r.alpha.to_string(), r.c.to_string(), r.bound.to_string(), opt(r.mc), opt(r.stderr)])?;
                    }
                    w.flush()?;
                }
            }
            out.flush()?;
        }
        Command::Verify { only } => {
            let ids: Vec<u8> = verify::CRITERIA.iter().map(|c| c.0).filter(|id| only.is_empty() || only.contains(id)).collect();
            let reports: Vec<_> = ids.iter().map(|&id| verify::run_criterion(id, seed)).collect();
            let mut out = output(cli)?;
            match cli.format {
                Format::Json => write_json(&mut out, &json!({ "seed": seed, "criteria": reports }))?,
                Format::Csv => {
                    for r in &reports {
                        writeln!(out, "{}", r.summary_line())?;
                    }
                }
            }
            out.flush()?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::Failed(format!("{failed} verification suite(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) | Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
