//! Accuracy tests on joint PMFs and their measures of performance.
//!
//! Each test admits a set of points, computes a log-domain error per point,
//! converts it to decimal digits `min(16, -log10 err)`, and reports the worst
//! value as `Xi`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpi::{nn_log_residual, run_fpi, FpiOptions};
use crate::inversion::{invert_joint, invert_marginal, plan_scheme, SchemeOptions};
use crate::memory::MemoryLimit;
use crate::model::ModelParams;
use crate::pgf::PgfEvaluator;
use crate::pmf::{JointPmf, PmfKind};

/// Digits of agreement are capped here.
pub const MAX_DIGITS: f64 = 16.0;

pub const DEFAULT_P_MIN_AGG: f64 = 2.4e-6;
pub const DEFAULT_P_MIN_NN: f64 = 1e-10;
pub const DEFAULT_P_MIN_XHI: f64 = 1e-20;
pub const DEFAULT_P_MIN_XLO: f64 = 1e-6;
pub const DEFAULT_P_MIN_FPI: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Agg,
    Nn,
    Xhi,
    Xlo,
    Fpi,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        TestKind::Agg,
        TestKind::Nn,
        TestKind::Xhi,
        TestKind::Xlo,
        TestKind::Fpi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Agg => "agg",
            TestKind::Nn => "nn",
            TestKind::Xhi => "xhi",
            TestKind::Xlo => "xlo",
            TestKind::Fpi => "fpi",
        }
    }

    pub fn default_p_min(self) -> f64 {
        match self {
            TestKind::Agg => DEFAULT_P_MIN_AGG,
            TestKind::Nn => DEFAULT_P_MIN_NN,
            TestKind::Xhi => DEFAULT_P_MIN_XHI,
            TestKind::Xlo => DEFAULT_P_MIN_XLO,
            TestKind::Fpi => DEFAULT_P_MIN_FPI,
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown test {s:?}")))
    }
}

/// Decimal digits of agreement for a non-negative error.
pub fn digits(error: f64) -> f64 {
    if error > 0.0 {
        (-error.log10()).min(MAX_DIGITS)
    } else {
        MAX_DIGITS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Shell index, queue length, or lowest-priority queue length, depending on the test.
    pub index: usize,
    pub digits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub r: f64,
    pub rates: Vec<f64>,
    pub n_max: usize,
    pub p_min: f64,
    pub n_lim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub test: TestKind,
    pub xi: f64,
    /// Points that passed the filter but had a non-positive probability on either side.
    pub excluded: usize,
    pub config: ReportConfig,
    pub trace: Vec<TracePoint>,
}

impl DiagnosticsReport {
    fn from_trace(
        test: TestKind,
        trace: Vec<TracePoint>,
        excluded: usize,
        config: ReportConfig,
    ) -> Result<Self> {
        if trace.is_empty() {
            return Err(Error::EmptyAdmissibleSet { test: test.name() });
        }
        let xi = trace.iter().fold(MAX_DIGITS, |a, p| a.min(p.digits));
        Ok(Self {
            test,
            xi,
            excluded,
            config,
            trace,
        })
    }

    /// `Xi` recomputed from the trace.
    pub fn recompute_xi(&self) -> f64 {
        self.trace.iter().fold(MAX_DIGITS, |a, p| a.min(p.digits))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = Some(seed);
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// `index,digits` rows with a header.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("index,digits\n");
        for p in &self.trace {
            let _ = writeln!(out, "{},{:?}", p.index, p.digits);
        }
        out
    }
}

fn config_for(pmf: &JointPmf, p_min: f64, n_lim: usize) -> ReportConfig {
    let model = pmf.model();
    ReportConfig {
        r: model.total(),
        rates: model.rates().to_vec(),
        n_max: pmf.n_max(),
        p_min,
        n_lim,
        seed: None,
    }
}

fn require_wait_conditional(pmf: &JointPmf) -> Result<()> {
    if pmf.kind() != PmfKind::WaitConditional {
        return Err(Error::WrongKind);
    }
    Ok(())
}

/// `count` points drawn uniformly from the probability simplex in `K` dimensions.
pub fn sample_simplex(levels: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            if levels == 1 {
                return vec![1.0];
            }
            let draws: Vec<f64> = (0..levels).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.iter().map(|d| d / total).collect()
        })
        .collect()
}

/// Shell sums against the geometric aggregate: `Delta ln P_agg(k)` vs `ln r`.
pub fn agg_test(pmf: &JointPmf, p_min: f64, n_lim: Option<usize>) -> Result<DiagnosticsReport> {
    require_wait_conditional(pmf)?;
    let n_lim = n_lim.unwrap_or(pmf.n_max()).min(pmf.n_max());
    let r = pmf.model().total();
    let log_r = r.ln();
    let shells = pmf.shell_sums();
    let mut trace = Vec::new();
    let mut excluded = 0;
    for k in 1..=n_lim {
        if (1.0 - r) * r.powi(k as i32) <= p_min {
            continue;
        }
        let (a, b) = (shells[k - 1], shells[k]);
        if a <= 0.0 || b <= 0.0 {
            excluded += 1;
            continue;
        }
        let err = (b.ln() - a.ln() - log_r).abs();
        trace.push(TracePoint {
            index: k,
            digits: digits(err),
        });
    }
    DiagnosticsReport::from_trace(
        TestKind::Agg,
        trace,
        excluded,
        config_for(pmf, p_min, n_lim),
    )
}

/// Folds per-cell digits into the worst value per lowest-priority queue length.
fn worst_by_lowest<F>(pmf: &JointPmf, n_lim: usize, cell: F) -> (Vec<Option<f64>>, usize)
where
    F: Fn(usize, &[usize]) -> Option<Option<f64>> + Sync,
{
    let extent = pmf.extent();
    let levels = pmf.levels();
    pmf.values()
        .par_chunks(extent)
        .enumerate()
        .map(|(row, _)| {
            let mut worst = vec![None; extent];
            let mut excluded = 0;
            let mut index = vec![0; levels];
            pmf.unflatten(row * extent, &mut index);
            if index[..levels - 1].iter().any(|&i| i > n_lim) {
                return (worst, excluded);
            }
            for last in 0..=n_lim.min(extent - 1) {
                index[levels - 1] = last;
                match cell(row * extent + last, &index) {
                    None => {}
                    Some(None) => excluded += 1,
                    Some(Some(d)) => {
                        let slot: &mut Option<f64> = &mut worst[last];
                        *slot = Some(slot.map_or(d, |w| w.min(d)));
                    }
                }
            }
            (worst, excluded)
        })
        .reduce(
            || (vec![None; extent], 0),
            |(mut a, ea), (b, eb)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = match (*x, y) {
                        (Some(p), Some(q)) => Some(p.min(q)),
                        (p, q) => p.or(q),
                    };
                }
                (a, ea + eb)
            },
        )
}

fn trace_from_worst(worst: Vec<Option<f64>>) -> Vec<TracePoint> {
    worst
        .into_iter()
        .enumerate()
        .filter_map(|(index, d)| d.map(|digits| TracePoint { index, digits }))
        .collect()
}

/// Interior balance residuals over `[1, n_lim]^K` with `P(n) > P_min`.
pub fn nn_test(pmf: &JointPmf, p_min: f64, n_lim: Option<usize>) -> Result<DiagnosticsReport> {
    require_wait_conditional(pmf)?;
    let n_lim = n_lim.unwrap_or(pmf.n_max()).min(pmf.n_max());
    let values = pmf.values();
    let (worst, excluded) = worst_by_lowest(pmf, n_lim, |flat, index| {
        if index.contains(&0) || index[0] + 1 > pmf.n_max() || values[flat] <= p_min {
            return None;
        }
        Some(nn_log_residual(pmf, flat).map(digits))
    });
    DiagnosticsReport::from_trace(
        TestKind::Nn,
        trace_from_worst(worst),
        excluded,
        config_for(pmf, p_min, n_lim),
    )
}

/// Log-differences along `P(ell, 0, ..., 0)` against `ln zeta_-(0)`.
pub fn xhi_test(pmf: &JointPmf, p_min: f64, n_lim: Option<usize>) -> Result<DiagnosticsReport> {
    require_wait_conditional(pmf)?;
    let n_lim = n_lim.unwrap_or(pmf.n_max()).min(pmf.n_max());
    let pgf = PgfEvaluator::new(pmf.model());
    let log_ratio = pgf.xhi_ratio().ln();
    let slice = pmf.exclusively_high();
    let mut trace = Vec::new();
    let mut excluded = 0;
    for ell in 1..=n_lim {
        if pgf.xhi_pmf(ell) <= p_min {
            continue;
        }
        let (a, b) = (slice[ell - 1], slice[ell]);
        if a <= 0.0 || b <= 0.0 {
            excluded += 1;
            continue;
        }
        trace.push(TracePoint {
            index: ell,
            digits: digits((b.ln() - a.ln() - log_ratio).abs()),
        });
    }
    DiagnosticsReport::from_trace(
        TestKind::Xhi,
        trace,
        excluded,
        config_for(pmf, p_min, n_lim),
    )
}

/// `P(0, ..., 0, n)` against `r_K P_lo(n - 1)` for a reference lowest-level marginal.
pub fn xlo_test(
    pmf: &JointPmf,
    marginal_lo: &[f64],
    p_min: f64,
    n_lim: Option<usize>,
) -> Result<DiagnosticsReport> {
    require_wait_conditional(pmf)?;
    let n_lim = n_lim.unwrap_or(pmf.n_max()).min(pmf.n_max());
    let pgf = PgfEvaluator::new(pmf.model());
    let slice = pmf.exclusively_low();
    let mut trace = Vec::new();
    let mut excluded = 0;
    for n in 1..=n_lim {
        let Some(&p_lo) = marginal_lo.get(n) else {
            break;
        };
        if p_lo <= p_min {
            continue;
        }
        let predicted = pgf.xlo_pmf(n, marginal_lo)?;
        let actual = slice[n];
        if predicted <= 0.0 || actual <= 0.0 {
            excluded += 1;
            continue;
        }
        trace.push(TracePoint {
            index: n,
            digits: digits((actual.ln() - predicted.ln()).abs()),
        });
    }
    DiagnosticsReport::from_trace(
        TestKind::Xlo,
        trace,
        excluded,
        config_for(pmf, p_min, n_lim),
    )
}

/// Compares two PMFs on `[1, n_lim]^K` where the reference exceeds `P_min`.
pub fn compare_pmfs(
    reference: &JointPmf,
    other: &JointPmf,
    p_min: f64,
    n_lim: Option<usize>,
) -> Result<DiagnosticsReport> {
    if reference.shape() != other.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            reference.shape(),
            other.shape()
        )));
    }
    let n_lim = n_lim.unwrap_or(reference.n_max()).min(reference.n_max());
    let a = reference.values();
    let b = other.values();
    let (worst, excluded) = worst_by_lowest(reference, n_lim, |flat, index| {
        if index.contains(&0) || a[flat] <= p_min {
            return None;
        }
        if b[flat] <= 0.0 {
            return Some(None);
        }
        Some(Some(digits((a[flat].ln() - b[flat].ln()).abs())))
    });
    DiagnosticsReport::from_trace(
        TestKind::Fpi,
        trace_from_worst(worst),
        excluded,
        config_for(reference, p_min, n_lim),
    )
}

/// Solves by both routes and compares them.
pub fn fpi_test(
    model: &ModelParams,
    n_max: usize,
    p_min: f64,
    scheme_options: &SchemeOptions,
    fpi_options: &FpiOptions,
) -> Result<DiagnosticsReport> {
    let fpi = run_fpi(model, n_max, fpi_options)?;
    let fft = fft_reference(model, n_max, scheme_options, fpi_options.memory_limit)?;
    compare_pmfs(&fft, &fpi.pmf, p_min, None)
}

/// Wait-conditional PMF by transform inversion; the single-level case inverts the geometric PGF.
pub fn fft_reference(
    model: &ModelParams,
    n_max: usize,
    scheme_options: &SchemeOptions,
    memory_limit: MemoryLimit,
) -> Result<JointPmf> {
    let pgf = PgfEvaluator::new(model);
    let scheme = plan_scheme(model, n_max, scheme_options)?;
    if model.levels() == 1 {
        let values = invert_marginal(|z| pgf.agg_pgf(1, z).expect("level 1"), &scheme, n_max)?;
        let mut pmf =
            JointPmf::from_values(model.clone(), n_max + 1, values, PmfKind::WaitConditional)?;
        pmf.clamp_in_place()?;
        Ok(pmf)
    } else {
        invert_joint(&pgf, &scheme, n_max, memory_limit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric(r: f64, extent: usize) -> JointPmf {
        let model = ModelParams::new(1, 1.0, vec![r]).unwrap();
        let values = (0..extent).map(|n| (1.0 - r) * r.powi(n as i32)).collect();
        JointPmf::from_values(model, extent, values, PmfKind::WaitConditional).unwrap()
    }

    #[test]
    fn simplex_samples() {
        assert_eq!(sample_simplex(1, 3, 7), vec![vec![1.0]; 3]);
        let samples = sample_simplex(4, 200, 11);
        for s in &samples {
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(s.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(samples, sample_simplex(4, 200, 11));
        assert_ne!(samples, sample_simplex(4, 200, 12));
    }

    #[test]
    fn geometric_hits_the_cap() {
        let pmf = geometric(0.5, 40);
        assert!(agg_test(&pmf, 1e-12, None).unwrap().xi > 14.0);
        assert!(nn_test(&pmf, 1e-12, None).unwrap().xi > 14.0);
        assert!(xhi_test(&pmf, 1e-12, None).unwrap().xi > 14.0);
    }

    #[test]
    fn xhi_closed_form_fed_back() {
        let model = ModelParams::new(1, 1.0, vec![0.3, 0.2]).unwrap();
        let pgf = PgfEvaluator::new(&model);
        let mut values = vec![0.0; 21 * 21];
        for ell in 0..21 {
            values[ell * 21] = pgf.xhi_pmf(ell);
        }
        let pmf = JointPmf::from_values(model, 21, values, PmfKind::WaitConditional).unwrap();
        let report = xhi_test(&pmf, 1e-20, None).unwrap();
        assert!(report.xi > 14.5);
    }

    #[test]
    fn perturbed_shell_lowers_agg() {
        let base = geometric(0.5, 30);
        let mut values = base.values().to_vec();
        let k = 10;
        values[k] += 1e-8;
        let pmf = JointPmf::from_values(base.model().clone(), 30, values, PmfKind::WaitConditional)
            .unwrap();
        let report = agg_test(&pmf, 1e-12, None).unwrap();
        let shell = 0.5 * 0.5f64.powi(k as i32);
        let expected = -(1e-8 / shell).log10();
        assert!(
            (report.xi - expected).abs() < 0.05,
            "{} vs {expected}",
            report.xi
        );
    }

    #[test]
    fn empty_set_is_an_error() {
        let pmf = geometric(0.5, 10);
        assert!(matches!(
            agg_test(&pmf, 1.0, None),
            Err(Error::EmptyAdmissibleSet { test: "agg" })
        ));
    }

    #[test]
    fn report_round_trip() {
        let pmf = geometric(0.7, 30);
        let report = nn_test(&pmf, 1e-12, None).unwrap().with_seed(5);
        let back = DiagnosticsReport::from_toml(&report.to_toml().unwrap()).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.recompute_xi(), report.xi);
    }

    #[test]
    fn single_level_fpi_test() {
        let model = ModelParams::new(1, 1.0, vec![0.5]).unwrap();
        let loose = fpi_test(
            &model,
            40,
            1e-10,
            &SchemeOptions::default(),
            &FpiOptions::default(),
        )
        .unwrap();
        let tight = FpiOptions {
            tolerance: 1e-12,
            ..Default::default()
        };
        let tight = fpi_test(&model, 40, 1e-10, &SchemeOptions::default(), &tight).unwrap();
        assert!(loose.xi > 2.0, "xi = {}", loose.xi);
        assert!(tight.xi > loose.xi);
    }
}
