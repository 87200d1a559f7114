//! `polydisc` command line: one subcommand per experiment kind.
//!
//! Exit status is 0 when every asserted invariant held, 1 on an invariant breach and 2 on a
//! usage error (bad flags, unreadable or invalid config, missing input files).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use polydisc::harness::experiments::natural_dim;
use polydisc::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use polydisc::{Error, ProfileKind};
use serde_json::Value;

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config; its fields override the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout if omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log2 grid sizes, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    resolutions: Option<Vec<u32>>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Points per shift parameter in the (lambda, t) lattice.
    #[arg(long, global = true)]
    lattice: Option<usize>,
    /// gaussian, compact or wavelet.
    #[arg(long, global = true)]
    profile: Option<ProfileKind>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split one adapted bump into dilated-support pieces.
    LemmaDecompose {
        /// `a,b`
        #[arg(long, allow_hyphen_values = true)]
        interval: Option<String>,
        /// Decay exponent M.
        #[arg(long)]
        decay: Option<u32>,
        /// Number of pieces N.
        #[arg(long)]
        terms: Option<u32>,
        #[arg(long)]
        mean_zero: Option<bool>,
    },
    /// Fit the constant in |Lambda| <= C int (hybrid products).
    VerifyDomination {
        #[arg(long)]
        dim: Option<usize>,
        /// e.g. `1,2`
        #[arg(long)]
        type_vector: Option<String>,
    },
    /// Empirical operator norms across resolutions.
    NormScan {
        /// Hybrid letters such as `SM`.
        #[arg(long, conflicts_with_all = ["type_vector", "symbol"])]
        pattern: Option<String>,
        /// Paraproduct type vector.
        #[arg(long, conflicts_with = "symbol")]
        type_vector: Option<String>,
        /// Built-in multiplier symbol.
        #[arg(long)]
        symbol: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
    },
    /// Exceptional sets, level partitions and the measure ledger.
    StoppingTrace {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        decay: Option<u32>,
        /// Largest dilation index per axis.
        #[arg(long)]
        k_max: Option<u32>,
    },
    /// Worst scaled derivatives of a multiplier symbol.
    SymbolCheck {
        #[arg(long)]
        symbol: String,
        #[arg(long)]
        alpha_max: Option<u32>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Evaluate a square/maximal hybrid on a grid function.
    HybridEval {
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        input: PathBuf,
        /// Rectangle list, one `k:n,k:n` per line (the standard collection if omitted).
        #[arg(long)]
        collection: Option<PathBuf>,
    },
    /// Apply a bilinear multiplier to two grid functions.
    ApplyTm {
        #[arg(long)]
        symbol: String,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
    },
}

#[derive(Parser, Debug)]
#[command(name = "polydisc", version, about = "Dyadic multi-parameter experiments on the periodic torus")]
struct Invocation {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn config_from_flags(common: &Common, command: &Command) -> ExperimentConfig {
    let kind = match command {
        Command::LemmaDecompose { .. } => ExperimentKind::LemmaDecompose,
        Command::VerifyDomination { .. } => ExperimentKind::VerifyDomination,
        Command::NormScan { .. } => ExperimentKind::NormScan,
        Command::StoppingTrace { .. } => ExperimentKind::StoppingTrace,
        Command::SymbolCheck { .. } => ExperimentKind::SymbolCheck,
        Command::HybridEval { .. } => ExperimentKind::HybridEval,
        Command::ApplyTm { .. } => ExperimentKind::ApplyTm,
    };
    let mut c = ExperimentConfig::new(kind);
    if let Some(v) = common.seed {
        c.seed = v;
    }
    if let Some(v) = &common.resolutions {
        c.resolutions = v.clone();
    }
    if let Some(v) = common.trials {
        c.trials = v;
    }
    if let Some(v) = common.lattice {
        c.lattice = v;
    }
    if let Some(v) = common.profile {
        c.profile = v;
    }
    c.output = common.out.clone();
    match command {
        Command::LemmaDecompose { interval, decay, terms, mean_zero } => {
            c.interval = interval.clone();
            c.decay = decay.unwrap_or(c.decay);
            c.terms = terms.unwrap_or(c.terms);
            c.mean_zero = *mean_zero;
        }
        Command::VerifyDomination { dim, type_vector } => {
            c.dim = dim.unwrap_or(c.dim);
            c.type_vector = type_vector.clone();
        }
        Command::NormScan { pattern, type_vector, symbol, dim, p, q, r } => {
            c.pattern = pattern.clone();
            c.type_vector = type_vector.clone();
            c.symbol = symbol.clone();
            c.dim = dim.unwrap_or_else(|| symbol.as_deref().map_or(c.dim, natural_dim));
            (c.p, c.q, c.r) = (*p, *q, *r);
        }
        Command::StoppingTrace { p, q, decay, k_max } => {
            (c.p, c.q) = (*p, *q);
            c.decay = decay.unwrap_or(c.decay);
            c.terms = k_max.unwrap_or(c.terms);
        }
        Command::SymbolCheck { symbol, alpha_max, samples, dim } => {
            c.symbol = Some(symbol.clone());
            c.alpha_max = alpha_max.unwrap_or(c.alpha_max);
            c.samples = samples.unwrap_or(c.samples);
            c.dim = dim.unwrap_or_else(|| natural_dim(symbol));
        }
        Command::HybridEval { pattern, input, collection } => {
            c.pattern = Some(pattern.clone());
            c.input = Some(input.clone());
            c.collection = collection.clone();
        }
        Command::ApplyTm { symbol, f, g } => {
            c.symbol = Some(symbol.clone());
            c.f = Some(f.clone());
            c.g = Some(g.clone());
        }
    }
    c
}

/// Overlay the fields of a JSON config file on the flag-derived config.
fn merge_file(base: ExperimentConfig, path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Value::Object(fields) = file else {
        bail!("{} must hold a JSON object", path.display());
    };
    let mut merged = serde_json::to_value(&base)?;
    let kind = merged["kind"].clone();
    for (k, v) in fields {
        if k == "kind" && v != kind {
            bail!("config kind {v} does not match the subcommand ({kind})");
        }
        merged[k] = v;
    }
    Ok(ExperimentConfig::from_json(&merged.to_string())?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn is_breach(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<Error>(),
        Some(Error::InvariantViolation(_) | Error::ConstantDiverged { .. })
    )
}

fn run(inv: Invocation) -> Result<bool> {
    let mut config = config_from_flags(&inv.common, &inv.command);
    if let Some(path) = &inv.common.config {
        config = merge_file(config, path)?;
    }
    config.validate()?;
    let output = run_experiment(&config)?;
    emit(&output.text, config.output.as_deref())?;
    Ok(output.invariants_ok)
}

fn main() -> ExitCode {
    let inv = match Invocation::try_parse() {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(inv) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("polydisc: invariant breach, see output");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("polydisc: {e:#}");
            ExitCode::from(if is_breach(&e) { 1 } else { 2 })
        }
    }
}
