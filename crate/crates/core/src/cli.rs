//! The `dpdecode` command line.
//!
//! Exit codes: 0 success, 1 privacy bound violated during `verify`,
//! 2 usage error, 3 I/O or model-file failure, 4 decode budget exhausted.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::accountant::{lambda_for_epsilon, privacy_loss, AccountError, PrivacyLoss};
use crate::corpus::{build_vocab_and_tokenize, Corpus, MaskedExample, DEFAULT_MASK_RATE, MASK_TOKEN};
use crate::eval::{format_significant, sweep, write_csv, Pooling, SweepConfig, DEFAULT_RESTARTS};
use crate::mlm::{train, NGramMlm, DEFAULT_ALPHA, DEFAULT_ORDER};
use crate::rng;
use crate::sampler::{DecodeError, DecodeSession};
use crate::simplex::PerturbationParams;
use crate::verifier::{verify_cell, VerifySummary};

pub const DEFAULT_SWEEP_GRID: &str = "0:1:0.1";
pub const DEFAULT_VERIFY_GRID: &str = "0:0.9:0.1,0.99";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0} verification cell(s) exceeded the privacy bound")]
    Violation(usize),
    #[error("{0}")]
    BudgetExhausted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Violation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::BudgetExhausted(_) => 4,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<NGramMlm, CliError> {
    NGramMlm::from_text(&read(path)?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parses a comma-separated list whose items are numbers or inclusive
/// `start:stop:step` ranges, e.g. `0:0.9:0.1,0.99`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("not a number: {s:?}"));
        match parts.as_slice() {
            [single] => values.push(num(single)?),
            [start, stop, step] => {
                let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
                if step.is_nan() || step <= 0.0 || stop < start {
                    return Err(format!("range {item:?} needs start <= stop and step > 0"));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                for i in 0..=count {
                    // Snap to 12 decimals so 0.1 * 3 prints as 0.3.
                    values.push(((start + i as f64 * step) * 1e12).round() / 1e12);
                }
            }
            _ => return Err(format!("cannot parse grid item {item:?}")),
        }
    }
    if values.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(values)
}

fn parse_lambda_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let grid = parse_grid(text).map_err(CliError::Usage)?;
    for &l in &grid {
        PerturbationParams::new(l).map_err(usage)?;
    }
    Ok(grid)
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("not a non-negative integer: {s:?}"))))
        .collect()
}

#[derive(Debug, Parser)]
#[command(name = "dpdecode", version, about = "Differentially-private decoding by interpolation toward uniform")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the window count model and write it to disk.
    Train(TrainArgs),
    /// Perplexity and average epsilon over a lambda grid, written as CSV.
    Sweep(SweepArgs),
    /// Fill `<mask>` tokens by perturbed sampling.
    Decode(DecodeArgs),
    /// Epsilon for (lambda, |V|, T), or lambda for a target epsilon.
    Account(AccountArgs),
    /// Exhaustively check the privacy bound on small instances.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolingArg {
    Token,
    Example,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated values and/or start:stop:step ranges.
    #[arg(long, default_value = DEFAULT_SWEEP_GRID)]
    pub lambdas: String,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MASK_RATE)]
    pub mask_rate: f64,
    #[arg(long, value_enum, default_value_t = PoolingArg::Token)]
    pub pooling: PoolingArg,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// One example per line, `<mask>` marking positions to fill.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Most tokens the session may sample; defaults to the input's mask count.
    #[arg(long)]
    pub cap: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub vocab: usize,
    /// Predicted tokens per input; may be a fractional corpus average.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "2,3,4,8")]
    pub vocab: String,
    #[arg(long, default_value = "1,2,3,4")]
    pub z: String,
    #[arg(long, default_value = DEFAULT_VERIFY_GRID)]
    pub lambdas: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<W: Write>(command: Command, out: &mut W) -> Result<(), CliError> {
    let report = |out: &mut W, line: String| -> Result<(), CliError> {
        writeln!(out, "{line}").map_err(|e| CliError::Io(e.to_string()))
    };
    match command {
        Command::Train(args) => {
            let corpus = build_vocab_and_tokenize(&read(&args.corpus)?).map_err(usage)?;
            let model = train(&corpus, args.order, args.alpha).map_err(usage)?;
            write(&args.output, model.to_text().as_bytes())?;
            report(
                out,
                format!(
                    "trained order={} alpha={} vocab={} contexts={}",
                    model.order(),
                    model.alpha(),
                    model.vocab().size(),
                    model.context_count()
                ),
            )
        }
        Command::Sweep(args) => {
            let lambdas = parse_lambda_grid(&args.lambdas)?;
            let model = load_model(&args.model)?;
            let corpus = Corpus::with_vocab(model.vocab().clone(), &read(&args.corpus)?);
            let config = SweepConfig {
                restarts: args.restarts,
                base_seed: args.seed,
                mask_rate: args.mask_rate,
                pooling: match args.pooling {
                    PoolingArg::Token => Pooling::Token,
                    PoolingArg::Example => Pooling::Example,
                },
            };
            let records = sweep(&corpus, &model, &lambdas, &config).map_err(usage)?;
            let mut csv = Vec::new();
            write_csv(&records, &mut csv).map_err(|e| CliError::Io(e.to_string()))?;
            write(&args.output, &csv)?;
            report(out, format!("wrote {} rows to {}", records.len(), args.output.display()))
        }
        Command::Decode(args) => decode(args, out),
        Command::Account(args) => {
            let line = match (args.lambda, args.epsilon) {
                (Some(lambda), _) => match privacy_loss(lambda, args.vocab, args.t).map_err(usage)? {
                    PrivacyLoss::Finite(eps) => format!("epsilon = {}", format_significant(eps, 4)),
                    PrivacyLoss::Unbounded => "epsilon = inf".to_string(),
                },
                (None, Some(eps)) => {
                    let lambda = lambda_for_epsilon(eps, args.vocab, args.t).map_err(usage)?;
                    format!("lambda = {}", format_significant(lambda, 4))
                }
                (None, None) => return Err(usage("pass either --lambda or --epsilon")),
            };
            report(out, line)
        }
        Command::Verify(args) => verify(args, out),
    }
}

fn decode<W: Write>(args: DecodeArgs, out: &mut W) -> Result<(), CliError> {
    let params = PerturbationParams::new(args.lambda).map_err(usage)?;
    let model = load_model(&args.model)?;
    let text = read(&args.input)?;
    let lines: Vec<&str> = text.lines().collect();
    let examples: Vec<MaskedExample> = lines.iter().map(|l| MaskedExample::parse(model.vocab(), l)).collect();
    let total_masks: u64 = examples.iter().map(|e| e.mask_count() as u64).sum();
    let cap = args.cap.unwrap_or(total_masks).max(1);

    let vocab = Arc::new(model.vocab().clone());
    let mut session = DecodeSession::new(vocab, params, cap, args.seed).map_err(usage)?;
    let mut filled = Vec::with_capacity(lines.len());
    let mut refusal = None;
    for (line, example) in lines.iter().zip(&examples) {
        let distributions = model.predict_masked(example).map_err(usage)?;
        let result = match session.decode(example, &distributions) {
            Ok(result) => result,
            Err(DecodeError::Account(e @ AccountError::BudgetExhausted { .. })) => {
                refusal = Some(e);
                break;
            }
            Err(e) => return Err(usage(e)),
        };
        let words: Vec<&str> = line
            .split_whitespace()
            .enumerate()
            .map(|(i, raw)| match result.filled_tokens.get(&i) {
                Some(&id) => session.vocab().token(id).unwrap_or(MASK_TOKEN),
                None => raw,
            })
            .collect();
        filled.push(format!("{}\t{}", words.join(" "), format_significant(result.epsilon_spent, 6)));
    }

    let mut body = filled.join("\n");
    if !filled.is_empty() {
        body.push('\n');
    }
    write(&args.output, body.as_bytes())?;
    let account = session.account();
    writeln!(
        out,
        "decoded {} of {} lines, {} predictions, epsilon spent = {}",
        filled.len(),
        lines.len(),
        account.predictions_made(),
        format_significant(account.cumulative_epsilon(), 4)
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    match refusal {
        Some(e) => Err(CliError::BudgetExhausted(format!("line {}: {e}", filled.len() + 1))),
        None => Ok(()),
    }
}

fn verify<W: Write>(args: VerifyArgs, out: &mut W) -> Result<(), CliError> {
    let vocab_sizes = parse_usize_list(&args.vocab)?;
    let positions = parse_usize_list(&args.z)?;
    let lambdas = parse_lambda_grid(&args.lambdas)?;
    let mut cells = Vec::new();
    for &v in &vocab_sizes {
        for &z in &positions {
            cells.extend(lambdas.iter().map(|&l| (v, z, l)));
        }
    }

    let summaries: Vec<VerifySummary> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(v, z, l))| verify_cell(v, z, l, args.trials, &mut rng::stream(args.seed, i as u64)))
        .collect::<Result<_, _>>()
        .map_err(usage)?;

    let mut w = BufWriter::new(out);
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(w, "vocab,z,lambda,bound,worst_log_ratio,violations,adversarial_tight").map_err(io)?;
    for s in &summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.vocab_size,
            s.positions,
            format_significant(s.lambda, 6),
            format_significant(s.theoretical_bound, 10),
            format_significant(s.worst_log_ratio, 10),
            s.violations,
            s.adversarial_tight
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    let failed = summaries.iter().filter(|s| !s.passed()).count();
    if failed > 0 {
        return Err(CliError::Violation(failed));
    }
    Ok(())
}
