//! Local (in-process) implementations of the subcommands, plus the
//! output formatting shared with the server-backed path.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use serde::Serialize;

use crate::common::{
    load_space, read_lines, require, require_path, write_json, write_lines, write_text, CliError,
    EXIT_CHECK_FAILED,
};
use crate::config::{FileConfig, SweepFormat};
use crate::{BuildIndexArgs, EmbeddingArgs, PrivatizeArgs, ServeArgs, SweepArgs, VerifyArgs};
use tem_api::{CorpusStats, MechanismKind, OovPolicy, SuiteReport, SweepRow};
use tem_core::candidate_index::{build_index as build_truncation_index, load_index, save_index};
use tem_core::corpus::{privatize_lines, sweep_lines};
use tem_core::dp_verifier::{builtin_spaces, run_verification_suite, VerifyConfig};
use tem_core::embedding_store::MetricSpace;
use tem_core::mechanisms::{build_mechanism, calibrate_gamma};
use tem_core::rng::RandomSource;
use tem_server::{AppState, MAX_VERIFY_VOCAB};

/// Resolved embeddings options after the config-file merge.
struct EmbeddingChoice {
    path: std::path::PathBuf,
    skip_header: bool,
    expected_dim: Option<usize>,
}

fn merge_embeddings(
    args: &EmbeddingArgs,
    config: &FileConfig,
) -> Result<EmbeddingChoice, CliError> {
    let path = require_path(
        args.embeddings
            .clone()
            .or_else(|| config.embeddings.clone()),
        "--embeddings",
    )?;
    Ok(EmbeddingChoice {
        path,
        skip_header: args.skip_header || config.skip_header.unwrap_or(false),
        expected_dim: args.expected_dim.or(config.expected_dim),
    })
}

fn load_merged_space(
    args: &EmbeddingArgs,
    config: &FileConfig,
) -> Result<Arc<MetricSpace>, CliError> {
    let choice = merge_embeddings(args, config)?;
    load_space(&choice.path, choice.skip_header, choice.expected_dim)
}

/// Radius from an exclusive gamma/beta pair; beta needs epsilon and the
/// vocabulary size to calibrate.
pub(crate) fn resolve_gamma(
    gamma: Option<f64>,
    beta: Option<f64>,
    epsilon: Option<f64>,
    vocab: usize,
) -> Result<f64, CliError> {
    match (gamma, beta) {
        (Some(gamma), None) => Ok(gamma),
        (None, Some(beta)) => {
            let epsilon = require(epsilon, "--epsilon (required to calibrate from --beta)")?;
            calibrate_gamma(epsilon, beta, vocab)
                .map_err(|e| CliError::from_err("calibrating gamma", e))
        }
        (None, None) => Err(CliError::usage("one of --gamma or --beta is required")),
        (Some(_), Some(_)) => Err(CliError::usage("--gamma and --beta are exclusive")),
    }
}

// --- build-index ---

pub(crate) fn print_index_summary(gamma: f64, histogram: &BTreeMap<usize, usize>) {
    println!("gamma: {gamma}");
    let entries: Vec<String> = histogram.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    println!("sizes: {{{}}}", entries.join(", "));
}

pub fn build_index(args: BuildIndexArgs, config: &FileConfig) -> Result<i32, CliError> {
    let space = load_merged_space(&args.embeddings, config)?;
    let gamma = resolve_gamma(
        args.gamma.or(config.gamma),
        args.beta.or(config.beta),
        args.epsilon.or(config.epsilon),
        space.len(),
    )?;
    let output = require_path(args.output.or_else(|| config.output.clone()), "--output")?;

    let index = build_truncation_index(&space, gamma)
        .map_err(|e| CliError::from_err("building index", e))?;
    let file = File::create(&output)
        .map_err(|e| CliError::from_err(&format!("creating {}", output.display()), e))?;
    save_index(&index, std::io::BufWriter::new(file))
        .map_err(|e| CliError::from_err("writing index", e))?;

    print_index_summary(gamma, &index.size_histogram());
    eprintln!("index written to {}", output.display());
    Ok(0)
}

// --- privatize ---

/// JSON run report written by `privatize --report`.
#[derive(Debug, Serialize)]
pub(crate) struct RunReport {
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub seed: u64,
    pub oov: OovPolicy,
    pub lowercase: bool,
    pub lines: usize,
    pub stats: CorpusStats,
}

pub(crate) fn apply_lowercase(lines: Vec<String>, lowercase: bool) -> Vec<String> {
    if lowercase {
        lines.iter().map(|l| l.to_lowercase()).collect()
    } else {
        lines
    }
}

pub fn privatize(args: PrivatizeArgs, config: &FileConfig) -> Result<i32, CliError> {
    let space = load_merged_space(&args.embeddings, config)?;
    let mechanism_kind = require(args.mechanism.or(config.mechanism), "--mechanism")?;
    let epsilon = require(args.epsilon.or(config.epsilon), "--epsilon")?;
    let gamma_opt = args.gamma.or(config.gamma);
    let beta_opt = args.beta.or(config.beta);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let oov = args.oov.or(config.oov).unwrap_or_default();
    let lowercase = args.lowercase || config.lowercase.unwrap_or(false);
    let input = require_path(args.input.or_else(|| config.input.clone()), "--input")?;
    let index_path = args.index.or_else(|| config.index.clone());

    let gamma = match mechanism_kind {
        MechanismKind::Tem => Some(resolve_gamma(
            gamma_opt,
            beta_opt,
            Some(epsilon),
            space.len(),
        )?),
        MechanismKind::Madlib => {
            if gamma_opt.is_some() || beta_opt.is_some() {
                return Err(CliError::usage(
                    "--gamma and --beta apply only to --mechanism tem",
                ));
            }
            None
        }
    };

    let index = match index_path {
        Some(path) => {
            if mechanism_kind != MechanismKind::Tem {
                return Err(CliError::usage("--index applies only to --mechanism tem"));
            }
            let file = File::open(&path)
                .map_err(|e| CliError::from_err(&format!("opening {}", path.display()), e))?;
            let index = load_index(BufReader::new(file), &space)
                .map_err(|e| CliError::from_err(&format!("loading {}", path.display()), e))?;
            Some(Arc::new(index))
        }
        None => None,
    };

    let mechanism = build_mechanism(mechanism_kind, epsilon, gamma, None, &space, index.as_ref())
        .map_err(|e| CliError::from_err("configuring mechanism", e))?;

    let lines = apply_lowercase(read_lines(&input)?, lowercase);
    let root = RandomSource::new(seed);
    let corpus = privatize_lines(&lines, &space, &mechanism, oov, &root)
        .map_err(|e| CliError::from_err("privatizing", e))?;

    write_lines(
        args.output.as_deref().or(config.output.as_deref()),
        &corpus.lines,
    )?;
    eprintln!(
        "privatized {} lines ({} tokens, {} in vocabulary, {} unchanged)",
        corpus.lines.len(),
        corpus.stats.tokens_total,
        corpus.stats.tokens_in_vocab,
        corpus.stats.tokens_unchanged,
    );
    if let Some(report_path) = args.report.or_else(|| config.report.clone()) {
        let report = RunReport {
            mechanism: mechanism_kind,
            epsilon,
            gamma,
            beta: beta_opt,
            seed,
            oov,
            lowercase,
            lines: corpus.lines.len(),
            stats: corpus.stats,
        };
        write_json(&report_path, &report)?;
    }
    Ok(0)
}

// --- verify ---

/// Prints one pass/fail line per check (null params pruned) plus a
/// summary; returns the process exit code.
pub(crate) fn print_suite(report: &SuiteReport) -> i32 {
    for check in &report.checks {
        let tag = if check.passed { "[PASS]" } else { "[FAIL]" };
        let params = match &check.params {
            serde_json::Value::Object(map) => {
                let pruned: serde_json::Map<String, serde_json::Value> = map
                    .iter()
                    .filter(|(_, v)| !v.is_null())
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                serde_json::Value::Object(pruned).to_string()
            }
            other => other.to_string(),
        };
        println!("{tag} {} {params}", check.check);
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!(
        "verification: {} checks, {} passed, {} failed",
        report.checks.len(),
        passed,
        report.checks.len() - passed
    );
    if report.passed {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}

pub(crate) fn merge_verify_config(args: &VerifyArgs, config: &FileConfig) -> VerifyConfig {
    let defaults = VerifyConfig::default();
    VerifyConfig {
        epsilon: args.epsilon.or(config.epsilon).unwrap_or(defaults.epsilon),
        beta: args.beta.or(config.beta).unwrap_or(defaults.beta),
        trials: args.trials.or(config.trials).unwrap_or(defaults.trials),
        alpha: args.alpha.or(config.alpha).unwrap_or(defaults.alpha),
        seed: args.seed.or(config.seed).unwrap_or(defaults.seed),
        mutation: args.break_check.or(config.break_check),
    }
}

pub fn verify(args: VerifyArgs, config: &FileConfig) -> Result<i32, CliError> {
    let verify_config = merge_verify_config(&args, config);
    let mut spaces = builtin_spaces();
    let embeddings = args
        .embeddings
        .embeddings
        .clone()
        .or_else(|| config.embeddings.clone());
    if let Some(path) = embeddings {
        let choice = EmbeddingChoice {
            path,
            skip_header: args.embeddings.skip_header || config.skip_header.unwrap_or(false),
            expected_dim: args.embeddings.expected_dim.or(config.expected_dim),
        };
        let space = load_space(&choice.path, choice.skip_header, choice.expected_dim)?;
        if space.len() > MAX_VERIFY_VOCAB {
            return Err(CliError::usage(format!(
                "the exhaustive checks support at most {MAX_VERIFY_VOCAB} words; \
                 {} has {}",
                choice.path.display(),
                space.len()
            )));
        }
        spaces.push(("loaded".to_string(), (*space).clone()));
    }

    let report = run_verification_suite(&spaces, &verify_config)
        .map_err(|e| CliError::from_err("running verification", e))?;
    if let Some(report_path) = args.report.or_else(|| config.report.clone()) {
        write_json(&report_path, &report)?;
    }
    Ok(print_suite(&report))
}

// --- sweep ---

pub(crate) fn format_rows(rows: &[SweepRow], format: SweepFormat) -> Result<String, CliError> {
    match format {
        SweepFormat::Csv => {
            let mut out = String::from(
                "mechanism,epsilon,gamma,tokens_total,tokens_in_vocab,\
                 tokens_unchanged,unchanged_rate,mean_output_distance\n",
            );
            for row in rows {
                let gamma = row.gamma.map(|g| g.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    row.mechanism,
                    row.epsilon,
                    gamma,
                    row.stats.tokens_total,
                    row.stats.tokens_in_vocab,
                    row.stats.tokens_unchanged,
                    row.stats.unchanged_rate(),
                    row.stats.mean_output_distance,
                ));
            }
            Ok(out)
        }
        SweepFormat::Json => {
            let mut body = serde_json::to_string_pretty(&serde_json::json!({ "rows": rows }))
                .map_err(|e| CliError::from_err("encoding JSON", e))?;
            body.push('\n');
            Ok(body)
        }
    }
}

pub fn sweep(args: SweepArgs, config: &FileConfig) -> Result<i32, CliError> {
    let space = load_merged_space(&args.embeddings, config)?;
    let mechanisms = if args.mechanism.is_empty() {
        config.mechanisms.clone().unwrap_or_default()
    } else {
        args.mechanism.clone()
    };
    if mechanisms.is_empty() {
        return Err(CliError::usage("--mechanism needs at least one value"));
    }
    let epsilons = if args.epsilon.is_empty() {
        config.epsilons.clone().unwrap_or_default()
    } else {
        args.epsilon.clone()
    };
    if epsilons.is_empty() {
        return Err(CliError::usage("--epsilon needs at least one value"));
    }
    let gamma = args.gamma.or(config.gamma);
    let beta = args.beta.or(config.beta);
    if mechanisms.contains(&MechanismKind::Tem) {
        match (gamma, beta) {
            (Some(_), None) | (None, Some(_)) => {}
            (None, None) => {
                return Err(CliError::usage(
                    "sweeping tem needs one of --gamma or --beta",
                ))
            }
            (Some(_), Some(_)) => return Err(CliError::usage("--gamma and --beta are exclusive")),
        }
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let oov = args.oov.or(config.oov).unwrap_or_default();
    let lowercase = args.lowercase || config.lowercase.unwrap_or(false);
    let input = require_path(args.input.or_else(|| config.input.clone()), "--input")?;
    let format = args.format.or(config.format).unwrap_or(SweepFormat::Csv);

    let lines = apply_lowercase(read_lines(&input)?, lowercase);
    let root = RandomSource::new(seed);
    let rows = sweep_lines(
        &lines,
        &space,
        &mechanisms,
        &epsilons,
        gamma,
        beta,
        oov,
        &root,
    )
    .map_err(|e| CliError::from_err("sweeping", e))?;

    let body = format_rows(&rows, format)?;
    write_text(args.output.as_deref().or(config.output.as_deref()), &body)?;
    Ok(0)
}

// --- serve ---

pub fn serve(args: ServeArgs, config: &FileConfig) -> Result<i32, CliError> {
    let space = load_merged_space(&args.embeddings, config)?;
    let index = match args.index.or_else(|| config.index.clone()) {
        Some(path) => {
            let file = File::open(&path)
                .map_err(|e| CliError::from_err(&format!("opening {}", path.display()), e))?;
            let index = load_index(BufReader::new(file), &space)
                .map_err(|e| CliError::from_err(&format!("loading {}", path.display()), e))?;
            Some(Arc::new(index))
        }
        None => None,
    };
    let addr = args
        .addr
        .or_else(|| config.addr.clone())
        .unwrap_or_else(|| "127.0.0.1:8615".to_string());
    let state =
        AppState::new(space, index).map_err(|e| CliError::from_err("configuring server", e))?;

    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::from_err("starting async runtime", e))?;
    runtime
        .block_on(tem_server::serve(&addr, state))
        .map_err(|e| CliError::from_err("serving", e))?;
    Ok(0)
}
