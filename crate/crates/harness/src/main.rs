use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbm_sampling::{
    apply_design, exact_moments, recover_class, recover_mar, sample_sbm_network, BlockAssignment, Method,
    SamplingDesign, SbmParameters, StopRule,
};
use sbm_harness::commands::{fit_command, parse_design, select_command};
use sbm_harness::error::{HarnessError, Result, EXIT_DEGENERATE};
use sbm_harness::experiment::{run_experiment, write_rows, ExperimentConfig, Topology};
use sbm_harness::io::{load_network, save_network, NetworkFormat};
use serde_json::json;

#[derive(Parser)]
#[command(name = "sbm-sampling", version, about = "Stochastic block models for sampled networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Network file.
    #[arg(long)]
    network: PathBuf,
    /// ternary-csv, edge-list or weighted-csv.
    #[arg(long, default_value = "ternary-csv")]
    format: String,
    /// Confidence threshold for weighted input, in (0, 0.5).
    #[arg(long)]
    gamma: Option<f64>,
}

impl Input {
    fn load(&self) -> Result<sbm_sampling::ObservedNetwork> {
        load_network(&self.network, self.format.parse()?, self.gamma)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draws a complete network from a topology preset.
    Simulate {
        #[arg(long, default_value = "affiliation")]
        topology: String,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also writes the true block of each node, one per line.
        #[arg(long)]
        labels_out: Option<PathBuf>,
        #[arg(long, default_value = "ternary-csv")]
        format: String,
    },
    /// Applies a sampling design to a complete network.
    Sample {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        design: String,
        /// Comma-separated design parameters.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        psi: Vec<f64>,
        /// Block labels, one per line; required for class sampling.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fits one model and prints a JSON record.
    Fit {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value = "mar")]
        method: Method,
        #[arg(long, default_value_t = sbm_sampling::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ranks every (Q, method) pair by ICL.
    Select {
        #[command(flatten)]
        input: Input,
        /// Comma-separated Q grid.
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<usize>,
        /// Comma-separated methods; all four by default.
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        #[arg(long, default_value_t = sbm_sampling::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recovers parameters from their exact observation moments.
    Oracle {
        /// Comma-separated block proportions.
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
        /// Connectivity rows separated by ';', entries by ','.
        #[arg(long)]
        pi: String,
        /// random-dyad, star or class.
        #[arg(long)]
        design: String,
        #[arg(long, value_delimiter = ',', required = true)]
        psi: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a simulation study described by a JSON config and writes CSV rows.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output path; stdout if neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| HarnessError::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_topology(s: &str) -> Result<Topology> {
    serde_json::from_value(json!(s)).map_err(|_| HarnessError::input(format!("unknown topology '{s}'")))
}

fn parse_rows(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| HarnessError::input(format!("bad number '{x}' in --pi"))))
                .collect()
        })
        .collect()
}

fn read_labels(path: &Path) -> Result<BlockAssignment> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let labels: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| HarnessError::input(format!("bad label '{t}'"))))
        .collect::<Result<_>>()?;
    let q = labels.iter().max().map_or(1, |m| m + 1);
    Ok(BlockAssignment::new(labels, q)?)
}

/// Returns the process status of a successful command: 0, or 3 when the
/// fitted model is degenerate.
fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate {
            topology,
            epsilon,
            n,
            seed,
            out,
            labels_out,
            format,
        } => {
            let t = parse_topology(&topology)?;
            let params = SbmParameters::new(t.default_alpha(), t.pi(epsilon))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (net, z) = sample_sbm_network(&params, n, &mut rng)?;
            save_network(&out, &net, format.parse()?)?;
            if let Some(p) = labels_out {
                let text: String = z.labels().iter().map(|l| format!("{l}\n")).collect();
                fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))?;
            }
            Ok(0)
        }
        Command::Sample {
            input,
            design,
            psi,
            labels,
            seed,
            out,
        } => {
            let full = input.load()?;
            let design = parse_design(&design, &psi)?;
            let z = match (&design, labels) {
                (_, Some(p)) => read_labels(&p)?,
                (SamplingDesign::Class { .. }, None) => return Err(HarnessError::input("class sampling needs --labels")),
                (_, None) => BlockAssignment::new(vec![0; full.n()], 1)?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = apply_design(&full, &z, &design, &mut rng)?;
            let format: NetworkFormat = input.format.parse()?;
            save_network(&out, &net, format)?;
            Ok(0)
        }
        Command::Fit {
            input,
            q,
            method,
            restarts,
            seed,
            out,
        } => {
            let net = input.load()?;
            let (fit, record) = fit_command(&net, q, method, restarts, seed, StopRule::default())?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&record)?)?;
            Ok(if fit.is_degenerate() { EXIT_DEGENERATE } else { 0 })
        }
        Command::Select {
            input,
            q,
            method,
            restarts,
            seed,
            out,
        } => {
            let net = input.load()?;
            let methods = if method.is_empty() { Method::ALL.to_vec() } else { method };
            let table = select_command(&net, &q, &methods, restarts, seed, StopRule::default())?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&table)?)?;
            Ok(0)
        }
        Command::Oracle {
            alpha,
            pi,
            design,
            psi,
            out,
        } => {
            let params = SbmParameters::from_rows(alpha, &parse_rows(&pi)?)?;
            let design = parse_design(&design, &psi)?;
            let moments = exact_moments(&params, &design)?;
            let q = params.q();
            let (rec, rho) = match &design {
                SamplingDesign::Class { .. } => {
                    let (p, rho) = recover_class(&moments, q)?;
                    (p, rho)
                }
                SamplingDesign::RandomDyad { rho } | SamplingDesign::Star { rho } => {
                    (recover_mar(&moments, *rho, q)?, vec![*rho])
                }
                _ => return Err(HarnessError::input("the oracle handles random-dyad, star and class designs")),
            };
            let pi_rows: Vec<Vec<f64>> = (0..q).map(|a| (0..q).map(|b| rec.pi()[(a, b)]).collect()).collect();
            let record = json!({ "alpha": rec.alpha(), "pi": pi_rows, "rho": rho });
            emit(out.as_deref(), &serde_json::to_string_pretty(&record)?)?;
            Ok(0)
        }
        Command::Experiment { config, seed, out } => {
            let text = fs::read_to_string(&config).map_err(|e| HarnessError::io(&config, e))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if out.is_some() {
                cfg.output = out;
            }
            let rows = run_experiment(&cfg)?;
            match &cfg.output {
                Some(p) => {
                    let file = fs::File::create(p).map_err(|e| HarnessError::io(p, e))?;
                    write_rows(&rows, std::io::BufWriter::new(file))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    write_rows(&rows, &mut lock)?;
                    lock.flush().map_err(|e| HarnessError::io("<stdout>", e))?;
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
