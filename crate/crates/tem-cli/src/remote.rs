//! Server-backed implementations: each subcommand becomes one or two
//! HTTP calls against a running tem server, then reuses the local
//! formatting so both paths print identically.

use crate::common::{read_lines, require_path, write_json, write_lines, write_text, CliError};
use crate::config::{FileConfig, SweepFormat};
use crate::ops::{
    apply_lowercase, format_rows, merge_verify_config, print_index_summary, print_suite, RunReport,
};
use crate::{BuildIndexArgs, PrivatizeArgs, SweepArgs, VerifyArgs};
use tem_api::{
    BuildIndexRequest, MechanismKind, MechanismSpec, PrivatizeRequest, SweepRequest, VerifyRequest,
};
use tem_client::{decode_index, Client, ClientError};

fn client_err(err: ClientError) -> CliError {
    CliError::usage(err.to_string())
}

pub fn build_index(url: &str, args: BuildIndexArgs, config: &FileConfig) -> Result<i32, CliError> {
    let output = require_path(args.output.or_else(|| config.output.clone()), "--output")?;
    let gamma = args.gamma.or(config.gamma);
    let beta = args.beta.or(config.beta);
    let epsilon = args.epsilon.or(config.epsilon);
    if gamma.is_none() && beta.is_none() {
        return Err(CliError::usage("one of --gamma or --beta is required"));
    }

    let client = Client::new(url);
    let response = client
        .build_index(&BuildIndexRequest {
            gamma,
            beta,
            epsilon,
        })
        .map_err(client_err)?;
    let bytes = decode_index(&response).map_err(client_err)?;
    std::fs::write(&output, bytes)
        .map_err(|e| CliError::from_err(&format!("writing {}", output.display()), e))?;

    print_index_summary(response.gamma, &response.size_histogram);
    eprintln!("index written to {}", output.display());
    Ok(0)
}

pub fn privatize(url: &str, args: PrivatizeArgs, config: &FileConfig) -> Result<i32, CliError> {
    let mechanism = crate::common::require(args.mechanism.or(config.mechanism), "--mechanism")?;
    let epsilon = crate::common::require(args.epsilon.or(config.epsilon), "--epsilon")?;
    let gamma = args.gamma.or(config.gamma);
    let beta = args.beta.or(config.beta);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let oov = args.oov.or(config.oov).unwrap_or_default();
    let lowercase = args.lowercase || config.lowercase.unwrap_or(false);
    let input = require_path(args.input.or_else(|| config.input.clone()), "--input")?;
    if args.index.is_some() {
        return Err(CliError::usage(
            "--index is a local option; the server decides its own index use",
        ));
    }

    // Lowercasing happens client-side so local and remote runs feed the
    // mechanism identical tokens (the request then disables it).
    let lines = apply_lowercase(read_lines(&input)?, lowercase);
    let client = Client::new(url);
    let response = client
        .privatize(&PrivatizeRequest {
            lines,
            spec: MechanismSpec {
                mechanism,
                epsilon,
                gamma,
                beta,
            },
            oov,
            lowercase: false,
            seed,
        })
        .map_err(client_err)?;

    write_lines(
        args.output.as_deref().or(config.output.as_deref()),
        &response.lines,
    )?;
    eprintln!(
        "privatized {} lines ({} tokens, {} in vocabulary, {} unchanged)",
        response.lines.len(),
        response.stats.tokens_total,
        response.stats.tokens_in_vocab,
        response.stats.tokens_unchanged,
    );
    if let Some(report_path) = args.report.or_else(|| config.report.clone()) {
        let report = RunReport {
            mechanism,
            epsilon,
            gamma: response.gamma,
            beta,
            seed,
            oov,
            lowercase,
            lines: response.lines.len(),
            stats: response.stats,
        };
        write_json(&report_path, &report)?;
    }
    Ok(0)
}

pub fn verify(url: &str, args: VerifyArgs, config: &FileConfig) -> Result<i32, CliError> {
    let merged = merge_verify_config(&args, config);
    let client = Client::new(url);
    let report = client
        .verify(&VerifyRequest {
            epsilon: Some(merged.epsilon),
            beta: Some(merged.beta),
            trials: Some(merged.trials),
            alpha: Some(merged.alpha),
            seed: Some(merged.seed),
            mutation: merged.mutation,
        })
        .map_err(client_err)?;
    if let Some(report_path) = args.report.or_else(|| config.report.clone()) {
        write_json(&report_path, &report)?;
    }
    Ok(print_suite(&report))
}

pub fn sweep(url: &str, args: SweepArgs, config: &FileConfig) -> Result<i32, CliError> {
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
    if mechanisms.contains(&MechanismKind::Tem) && gamma.is_none() && beta.is_none() {
        return Err(CliError::usage(
            "sweeping tem needs one of --gamma or --beta",
        ));
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let oov = args.oov.or(config.oov).unwrap_or_default();
    let lowercase = args.lowercase || config.lowercase.unwrap_or(false);
    let input = require_path(args.input.or_else(|| config.input.clone()), "--input")?;
    let format = args.format.or(config.format).unwrap_or(SweepFormat::Csv);

    let lines = apply_lowercase(read_lines(&input)?, lowercase);
    let client = Client::new(url);
    let response = client
        .sweep(&SweepRequest {
            lines,
            mechanisms,
            epsilons,
            gamma,
            beta,
            oov,
            lowercase: false,
            seed,
        })
        .map_err(client_err)?;

    let body = format_rows(&response.rows, format)?;
    write_text(args.output.as_deref().or(config.output.as_deref()), &body)?;
    Ok(0)
}
