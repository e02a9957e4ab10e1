//! `nppq`: solvers and diagnostics for the non-preemptive priority M/M/c queue.

mod commands;
mod manifest;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};

use manifest::Manifest;
use nppq::Error;
use settings::Settings;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

fn value(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).help(help)
}

fn switch(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .action(ArgAction::SetTrue)
        .help(help)
}

fn model_args() -> Vec<Arg> {
    vec![
        value(
            "lambda",
            "arrival rates per level, highest priority first (comma separated)",
        ),
        value("mu", "service rate per server [default: 1]"),
        value("c", "number of servers [default: 1]"),
        value("r", "total traffic intensity, used with --nu"),
        value(
            "nu",
            "relative level fractions, highest priority first (normalized)",
        ),
    ]
}

fn common_args() -> Vec<Arg> {
    vec![
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("flat key = value file; flags override it"),
        value("out", "output directory [default: out]"),
        value(
            "memory-limit",
            "allocation budget in bytes (k/M/G suffix); overrides NPPQ_MEMORY_LIMIT",
        ),
    ]
}

fn scheme_args() -> Vec<Arg> {
    vec![
        value("radii", "number of contour radii M [default: 4]"),
        value("spread", "radius spread s [default: 0.05]"),
        value("alpha", "aliasing target exponent [default: 12]"),
        value(
            "nfft",
            "transform size per axis [default: next power of two above N_max]",
        ),
        switch(
            "any-size",
            "allow a transform size that is not a power of two",
        ),
        value(
            "eps-fft",
            "transform round-off level used for chi [default: 1e-15]",
        ),
    ]
}

fn fpi_args() -> Vec<Arg> {
    vec![
        value(
            "tol",
            "stopping tolerance on the sup-norm update [default: 1e-9]",
        ),
        value("max-iters", "iteration cap [default: 1000000]"),
    ]
}

fn cli() -> Command {
    let nmax = || value("nmax", "largest queue length per axis [default: 100]");
    let format = || value("format", "array format: csv or bin [default: csv]");
    let seed = || value("seed", "random seed");
    Command::new("nppq")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Joint queue-length distribution of the non-preemptive priority M/M/c queue")
        .subcommand_required(true)
        .arg(Arg::new("verbose").short('v').long("verbose").action(ArgAction::Count).global(true))
        .subcommand(
            Command::new("solve-fft")
                .about("Joint PMF by multi-radius FFT inversion of the PGF")
                .args(model_args())
                .args(common_args())
                .args(scheme_args())
                .args([nmax(), format()]),
        )
        .subcommand(
            Command::new("solve-fpi")
                .about("Joint PMF by fixed-point iteration of the balance equations")
                .args(model_args())
                .args(common_args())
                .args(fpi_args())
                .args([nmax(), format()]),
        )
        .subcommand(
            Command::new("diagnose")
                .about("Accuracy tests on the FFT solution, over sampled or given level fractions")
                .args(model_args())
                .args(common_args())
                .args(scheme_args())
                .args(fpi_args())
                .args([
                    nmax(),
                    seed(),
                    value("levels", "number of levels K when sampling fractions").visible_alias("K"),
                    value("trials", "number of sampled fraction vectors [default: 30]"),
                    value("tests", "comma separated subset of agg,nn,xhi,xlo,fpi, or all [default: agg,nn,xhi,xlo]"),
                    value("nlim", "largest index included in the traces"),
                    value("pmin-agg", "admission threshold of the agg test"),
                    value("pmin-nn", "admission threshold of the nn test"),
                    value("pmin-xhi", "admission threshold of the xhi test"),
                    value("pmin-xlo", "admission threshold of the xlo test"),
                    value("pmin-fpi", "admission threshold of the fpi comparison"),
                ]),
        )
        .subcommand(
            Command::new("probe-fft")
                .about("Error budget of the inversion on the geometric single-level PMF")
                .args(common_args())
                .args(scheme_args())
                .args([
                    value("r", "traffic intensity [default: 0.9]"),
                    value("nmax", "largest n probed [default: last n with P(n) above --tail]"),
                    value("tail", "probability floor for the error summary [default: 1e-12]"),
                ]),
        )
        .subcommand(
            Command::new("simulate")
                .about("Event-driven simulation compared against the analytic marginals")
                .args(model_args())
                .args(common_args())
                .args(scheme_args())
                .args([
                    seed(),
                    value("events", "sampled events [default: 10000000]"),
                    value("warmup", "discarded events [default: events / 100]"),
                    value("sampling", "time or event [default: time]"),
                    switch("preemptive", "preemptive-priority discipline"),
                ]),
        )
        .subcommand(
            Command::new("replay")
                .about("Re-runs the command recorded in a manifest")
                .arg(Arg::new("manifest").required(true).value_name("MANIFEST"))
                .arg(value("out", "output directory [default: out]")),
        )
}

/// Config file values overlaid with every flag given on the command line.
fn collect_settings(matches: &ArgMatches) -> anyhow::Result<Settings> {
    let mut settings = match matches.get_one::<String>("config") {
        Some(path) => Settings::load(&PathBuf::from(path))?,
        None => Settings::default(),
    };
    let mut flags = BTreeMap::new();
    for id in matches.ids() {
        let id = id.as_str();
        if id == "config"
            || id == "verbose"
            || matches.value_source(id) != Some(ValueSource::CommandLine)
        {
            continue;
        }
        let raw = match matches.try_get_one::<bool>(id) {
            Ok(Some(b)) => b.to_string(),
            _ => match matches.get_one::<String>(id) {
                Some(v) => v.clone(),
                None => continue,
            },
        };
        flags.insert(id.to_string(), raw);
    }
    settings.extend(Settings::from_map(flags));
    Ok(settings)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::MemoryLimit { .. }) => EXIT_RESOURCE,
        Some(
            Error::NoConvergence { .. }
            | Error::PoleProximity { .. }
            | Error::AnalyticityViolation
            | Error::ImaginaryResidue { .. }
            | Error::NegativeProbability { .. }
            | Error::EmptyAdmissibleSet { .. },
        ) => EXIT_NUMERIC,
        Some(Error::Io(_)) => 1,
        Some(_) => EXIT_VALIDATION,
        None if err.downcast_ref::<std::io::Error>().is_some() => 1,
        None => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = if name == "replay" {
        Manifest::read(&PathBuf::from(
            sub.get_one::<String>("manifest").expect("required"),
        ))
        .and_then(|m| {
            let mut settings = Settings::from_map(m.settings);
            if let Some(out) = sub.get_one::<String>("out") {
                settings.set("out", out.clone());
            }
            commands::run(&m.command, &settings)
        })
    } else {
        collect_settings(sub).and_then(|s| commands::run(name, &s))
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
