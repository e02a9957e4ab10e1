use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::info;
use serde::Serialize;

use nppq::diagnostics::{self, DiagnosticsReport, TestKind};
use nppq::fpi::{run_fpi, FpiOptions};
use nppq::inversion::{error_budget, full_marginals, invert_joint, lowest_marginal, plan_scheme};
use nppq::io::{write_pmf, ArrayFormat, FpiMetadata, SchemeMetadata};
use nppq::simulator::{
    compare_marginals, histogram_csv, simulate, Discipline, SamplingMode, SimConfig,
};
use nppq::{full_pmf, Error, ModelParams, PgfEvaluator, SchemeOptions};

use crate::manifest::Manifest;
use crate::settings::Settings;

pub fn run(command: &str, settings: &Settings) -> anyhow::Result<()> {
    let out = PathBuf::from(settings.raw("out").unwrap_or("out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let files = match command {
        "solve-fft" => solve_fft(settings, &out)?,
        "solve-fpi" => solve_fpi(settings, &out)?,
        "diagnose" => diagnose(settings, &out)?,
        "probe-fft" => probe_fft(settings, &out)?,
        "simulate" => run_simulation(settings, &out)?,
        other => bail!(Error::InvalidParameter(format!(
            "unknown command {other:?}"
        ))),
    };
    let manifest = Manifest::write(command, settings, &out, &files)?;
    println!(
        "wrote {} artifacts, manifest {}",
        files.len(),
        manifest.display()
    );
    Ok(())
}

fn n_max(settings: &Settings) -> nppq::Result<usize> {
    let n = settings.get_or("nmax", 100usize)?;
    if n == 0 {
        return Err(Error::InvalidParameter("--nmax must be at least 1".into()));
    }
    Ok(n)
}

fn scheme_options(settings: &Settings) -> nppq::Result<SchemeOptions> {
    let d = SchemeOptions::default();
    Ok(SchemeOptions {
        radii: settings.get_or("radii", d.radii)?,
        spread: settings.get_or("spread", d.spread)?,
        alpha: settings.get_or("alpha", d.alpha)?,
        n_fft: settings.get("nfft")?,
        allow_any_size: settings.flag("any-size")?,
        eps_fft: settings.get_or("eps-fft", d.eps_fft)?,
    })
}

fn fpi_options(settings: &Settings) -> nppq::Result<FpiOptions> {
    let d = FpiOptions::default();
    Ok(FpiOptions {
        tolerance: settings.get_or("tol", d.tolerance)?,
        max_iterations: settings.get_or("max-iters", d.max_iterations)?,
        memory_limit: settings.memory_limit()?,
    })
}

fn format(settings: &Settings) -> nppq::Result<ArrayFormat> {
    settings.get_or("format", ArrayFormat::Csv)
}

fn write_text(path: PathBuf, text: &str) -> anyhow::Result<PathBuf> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_toml<T: Serialize>(path: PathBuf, value: &T) -> anyhow::Result<PathBuf> {
    write_text(path, &toml::to_string(value)?)
}

fn solve_fft(settings: &Settings, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let model = settings.model()?;
    if model.levels() == 1 {
        bail!(Error::InvalidParameter(
            "solve-fft needs K >= 2; the single-level PMF is geometric, (1 - r) r^n (use solve-fpi or probe-fft)".into()
        ));
    }
    let n_max = n_max(settings)?;
    let scheme = plan_scheme(&model, n_max, &scheme_options(settings)?)?;
    info!(
        "joint inversion: K = {}, N_fft = {}, radii = {}",
        model.levels(),
        scheme.n_fft,
        scheme.radii_count
    );
    let pmf = invert_joint(
        &PgfEvaluator::new(&model),
        &scheme,
        n_max,
        settings.memory_limit()?,
    )?;
    let full = full_pmf(&pmf, &model.erlang())?;
    let fmt = format(settings)?;
    let meta = SchemeMetadata::from(&scheme);
    let (a, b) = write_pmf(&pmf, out, "pmf_wait", fmt, "fft", None, Some(meta.clone()))?;
    let (c, d) = write_pmf(&full, out, "pmf_full", fmt, "fft", None, Some(meta))?;
    Ok(vec![a, b, c, d])
}

fn solve_fpi(settings: &Settings, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let model = settings.model()?;
    let n_max = n_max(settings)?;
    let options = fpi_options(settings)?;
    let run = run_fpi(&model, n_max, &options)?;
    info!(
        "fpi converged in {} iterations (delta {:e})",
        run.iterations, run.final_delta
    );
    let full = full_pmf(&run.pmf, &model.erlang())?;
    let meta = FpiMetadata {
        iterations: run.iterations,
        final_delta: run.final_delta,
        tolerance: options.tolerance,
    };
    let fmt = format(settings)?;
    let (a, b) = write_pmf(
        &run.pmf,
        out,
        "pmf_wait",
        fmt,
        "fpi",
        Some(meta.clone()),
        None,
    )?;
    let (c, d) = write_pmf(&full, out, "pmf_full", fmt, "fpi", Some(meta), None)?;
    let mut deltas = String::from("iteration,delta\n");
    for (i, v) in run.deltas.iter().enumerate() {
        deltas.push_str(&format!("{},{v:?}\n", i + 1));
    }
    Ok(vec![
        a,
        b,
        c,
        d,
        write_text(out.join("fpi_deltas.csv"), &deltas)?,
    ])
}

fn parse_tests(settings: &Settings) -> nppq::Result<Vec<TestKind>> {
    match settings.raw("tests").unwrap_or("agg,nn,xhi,xlo") {
        "all" => Ok(TestKind::ALL.to_vec()),
        list => list.split(',').map(|s| s.trim().parse()).collect(),
    }
}

#[derive(Serialize)]
struct TestSummary {
    test: String,
    p_min: f64,
    worst_xi: f64,
    trial_xi: Vec<f64>,
}

#[derive(Serialize)]
struct DiagnoseSummary {
    trials: usize,
    seed: u64,
    nu: Vec<Vec<f64>>,
    tests: Vec<TestSummary>,
}

/// Models to diagnose: `--nu` gives one, otherwise `--trials` draws from the simplex of `--levels`.
fn trial_models(settings: &Settings) -> anyhow::Result<(Vec<ModelParams>, u64)> {
    let seed = settings.get_or("seed", 2024u64)?;
    if settings.has("lambda") || settings.has("nu") {
        return Ok((vec![settings.model()?], seed));
    }
    let r: f64 = settings.get("r")?.ok_or_else(|| {
        Error::InvalidParameter("diagnose needs --r with --levels, or a full model".into())
    })?;
    let levels: usize = settings.get("levels")?.ok_or_else(|| {
        Error::InvalidParameter("diagnose needs --levels when --nu is not given".into())
    })?;
    let trials = settings.get_or("trials", 30usize)?;
    if trials == 0 || levels == 0 {
        bail!(Error::InvalidParameter(
            "--trials and --levels must be positive".into()
        ));
    }
    let models = diagnostics::sample_simplex(levels, trials, seed)
        .iter()
        .map(|nu| ModelParams::from_fractions(r, nu, settings.servers()?, settings.mu()?))
        .collect::<nppq::Result<Vec<_>>>()?;
    Ok((models, seed))
}

fn diagnose(settings: &Settings, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let tests = parse_tests(settings)?;
    let (models, seed) = trial_models(settings)?;
    let n_max = n_max(settings)?;
    let n_lim: Option<usize> = settings.get("nlim")?;
    let scheme_opts = scheme_options(settings)?;
    let fpi_opts = fpi_options(settings)?;
    let mut p_min = Vec::new();
    for t in &tests {
        p_min.push(settings.get_or(&format!("pmin-{}", t.name()), t.default_p_min())?);
    }

    let mut files = Vec::new();
    let mut trial_xi = vec![Vec::new(); tests.len()];
    let mut envelopes: Vec<std::collections::BTreeMap<usize, f64>> =
        vec![Default::default(); tests.len()];
    for (trial, model) in models.iter().enumerate() {
        info!("trial {trial}: rates {:?}", model.rates());
        let pmf = diagnostics::fft_reference(model, n_max, &scheme_opts, fpi_opts.memory_limit)?;
        let dir = out.join(format!("trial_{trial:03}"));
        fs::create_dir_all(&dir)?;
        for (i, test) in tests.iter().enumerate() {
            let report = match test {
                TestKind::Agg => diagnostics::agg_test(&pmf, p_min[i], n_lim)?,
                TestKind::Nn => diagnostics::nn_test(&pmf, p_min[i], n_lim)?,
                TestKind::Xhi => diagnostics::xhi_test(&pmf, p_min[i], n_lim)?,
                TestKind::Xlo => {
                    let pgf = PgfEvaluator::new(model);
                    let scheme = plan_scheme(model, n_max, &scheme_opts)?;
                    let lo = if model.levels() == 1 {
                        pmf.values().to_vec()
                    } else {
                        lowest_marginal(&pgf, &scheme, n_max)?
                    };
                    diagnostics::xlo_test(&pmf, &lo, p_min[i], n_lim)?
                }
                TestKind::Fpi => {
                    let run = run_fpi(model, n_max, &fpi_opts)?;
                    diagnostics::compare_pmfs(&pmf, &run.pmf, p_min[i], n_lim)?
                }
            }
            .with_seed(seed);
            println!("trial {trial:3} {:>3}: xi = {:.2}", test.name(), report.xi);
            trial_xi[i].push(report.xi);
            for p in &report.trace {
                let slot = envelopes[i].entry(p.index).or_insert(f64::INFINITY);
                *slot = slot.min(p.digits);
            }
            files.push(write_report(&dir, &report)?);
            files.push(write_text(
                dir.join(format!("{}_trace.csv", test.name())),
                &report.trace_csv(),
            )?);
        }
    }

    let mut envelope = String::from("test,index,digits\n");
    for (i, test) in tests.iter().enumerate() {
        for (index, d) in &envelopes[i] {
            envelope.push_str(&format!("{},{index},{d:?}\n", test.name()));
        }
    }
    files.push(write_text(out.join("envelope.csv"), &envelope)?);
    let summary = DiagnoseSummary {
        trials: models.len(),
        seed,
        nu: models
            .iter()
            .map(|m| m.rates().iter().map(|r| r / m.total()).collect())
            .collect(),
        tests: tests
            .iter()
            .enumerate()
            .map(|(i, t)| TestSummary {
                test: t.name().to_string(),
                p_min: p_min[i],
                worst_xi: trial_xi[i].iter().fold(f64::INFINITY, |a, &b| a.min(b)),
                trial_xi: trial_xi[i].clone(),
            })
            .collect(),
    };
    for t in &summary.tests {
        println!("worst {:>3}: xi = {:.2}", t.test, t.worst_xi);
    }
    files.push(write_toml(out.join("summary.toml"), &summary)?);
    Ok(files)
}

fn write_report(dir: &Path, report: &DiagnosticsReport) -> anyhow::Result<PathBuf> {
    write_text(
        dir.join(format!("{}.toml", report.test.name())),
        &report.to_toml()?,
    )
}

#[derive(Serialize)]
struct ProbeSummary {
    r: f64,
    n_max: usize,
    n_fft: usize,
    tail: f64,
    discretization: f64,
    worst_overall: f64,
    chi: f64,
}

fn probe_fft(settings: &Settings, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let r: f64 = settings.get_or("r", 0.9)?;
    let tail: f64 = settings.get_or("tail", 1e-12)?;
    if !(r > 0.0 && r < 1.0) {
        bail!(Error::InvalidParameter(format!(
            "--r = {r} must lie in (0, 1)"
        )));
    }
    let n_max = match settings.get::<usize>("nmax")? {
        Some(n) => n,
        // last n with (1 - r) r^n >= tail
        None => ((tail / (1.0 - r)).ln() / r.ln()).floor().max(0.0) as usize,
    };
    if n_max == 0 {
        bail!(Error::InvalidParameter(
            "probe range is empty: --nmax (or the tail-derived length) is zero".into()
        ));
    }
    let budget = error_budget(r, n_max, &scheme_options(settings)?)?;
    let mut csv = String::from("n,exact,overall,fft,discretization\n");
    for n in 0..=n_max {
        csv.push_str(&format!(
            "{n},{:?},{:?},{:?},{:?}\n",
            budget.exact[n], budget.overall[n], budget.fft[n], budget.discretization
        ));
    }
    let summary = ProbeSummary {
        r,
        n_max,
        n_fft: budget.scheme.n_fft,
        tail,
        discretization: budget.discretization,
        worst_overall: budget.worst_overall_above(tail),
        chi: budget.scheme.chi(),
    };
    println!(
        "N_fft = {}, worst overall error above {tail:e}: {:e}, discretization {:e}",
        summary.n_fft, summary.worst_overall, summary.discretization
    );
    Ok(vec![
        write_text(out.join("probe.csv"), &csv)?,
        write_toml(out.join("probe.toml"), &summary)?,
    ])
}

#[derive(Serialize)]
struct SimSummary {
    events: u64,
    total_time: f64,
    empty_fraction: f64,
    empty_std_error: f64,
    analytic_empty: f64,
    mean_queue: Vec<f64>,
    mean_queue_std_error: Vec<f64>,
    comparison: Vec<nppq::simulator::MarginalComparison>,
}

fn run_simulation(settings: &Settings, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let model = settings.model()?;
    let events = settings.get_or("events", 10_000_000u64)?;
    if events == 0 {
        bail!(Error::InvalidParameter("--events must be positive".into()));
    }
    let mut cfg = SimConfig::new(
        model.clone(),
        settings.get_or("warmup", events / 100)?,
        events,
        settings.get_or("seed", 1u64)?,
    );
    cfg.sampling = match settings.raw("sampling").unwrap_or("time") {
        "time" => SamplingMode::TimeAveraged,
        "event" => SamplingMode::EventAveraged,
        other => bail!(Error::InvalidParameter(format!(
            "--sampling expects time or event, got {other:?}"
        ))),
    };
    if settings.flag("preemptive")? {
        cfg.discipline = Discipline::Preemptive;
    }
    let res = simulate(&cfg)?;
    let longest = res.level_histograms.iter().map(Vec::len).max().unwrap_or(1);
    let n_max = longest.saturating_sub(1).max(1);
    let scheme = plan_scheme(&model, n_max, &scheme_options(settings)?)?;
    let analytic = full_marginals(&model, &scheme, n_max)?;
    let comparison = compare_marginals(&res, &analytic)?;
    for c in &comparison {
        println!(
            "level {}: TV = {:.2e}, max |z| = {:.2}",
            c.level, c.total_variation, c.max_z
        );
    }
    let summary = SimSummary {
        events: res.events,
        total_time: res.total_time,
        empty_fraction: res.empty_fraction,
        empty_std_error: res.empty_std_error,
        analytic_empty: model.erlang().p0,
        mean_queue: res.mean_queue.clone(),
        mean_queue_std_error: res.mean_queue_std_error.clone(),
        comparison,
    };
    Ok(vec![
        write_text(out.join("histograms.csv"), &histogram_csv(&res))?,
        write_toml(out.join("simulation.toml"), &summary)?,
    ])
}
