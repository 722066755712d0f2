//! Monte Carlo estimation of error probabilities over a blocklength sweep.

use std::fmt::Write as _;
use std::time::Instant;

use fptrace_core::{Error, Result};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::stats::{exponent_fit, rule_of_three, wilson, ExponentFit, Z95};
use crate::trial::Experiment;

pub const REPORT_FORMAT: &str = "fptrace-estimate/1";

pub const CSV_HEADER: &str = "N,delta,rate,users,trials,\
fp_count,fp_rate,fp_lo,fp_hi,\
miss_one_count,miss_one_rate,miss_one_lo,miss_one_hi,\
miss_all_count,miss_all_rate,miss_all_lo,miss_all_hi,\
resamples,infeasible_kept,marking_violations";

/// Rounds to 9 significant digits, the precision of every emitted float.
pub fn sig9(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.8e}").parse().unwrap_or(x)
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStats {
    pub count: u64,
    pub rate: f64,
    /// Wilson 95% interval; with no events the upper end is `3/T`.
    pub lo: f64,
    pub hi: f64,
}

impl EventStats {
    fn new(count: u64, trials: u64) -> Self {
        let (lo, hi) = wilson(count, trials, Z95);
        let hi = if count == 0 { rule_of_three(trials) } else { hi };
        Self { count, rate: sig9(count as f64 / trials as f64), lo: sig9(lo), hi: sig9(hi) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub n: usize,
    pub delta: f64,
    pub rate: f64,
    pub users: usize,
    pub trials: u64,
    pub fp: EventStats,
    pub miss_one: EventStats,
    pub miss_all: EventStats,
    pub resamples: u64,
    pub infeasible_kept: u64,
    pub marking_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub delta: f64,
    pub event: String,
    pub fit: Option<ExponentFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub n: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub format: String,
    pub seed: u64,
    pub workers: usize,
    pub points: Vec<PointEstimate>,
    pub fits: Vec<FitRow>,
    pub timing: Vec<Timing>,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    fp: Vec<u64>,
    miss_one: Vec<u64>,
    miss_all: Vec<u64>,
    resamples: u64,
    infeasible_kept: u64,
    marking_violations: u64,
}

impl Tally {
    fn zero(deltas: usize) -> Self {
        Self { fp: vec![0; deltas], miss_one: vec![0; deltas], miss_all: vec![0; deltas], ..Self::default() }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in
            [(&mut self.fp, &other.fp), (&mut self.miss_one, &other.miss_one), (&mut self.miss_all, &other.miss_all)]
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.resamples += other.resamples;
        self.infeasible_kept += other.infeasible_kept;
        self.marking_violations += other.marking_violations;
        self
    }
}

/// Runs `cfg.trials` trials at every blocklength on a pool of `workers`
/// threads. Counts are summed, so the report does not depend on `workers`
/// apart from the timing entries.
pub fn estimate(cfg: &ExperimentConfig, workers: usize) -> Result<EstimateReport> {
    let exp = Experiment::new(cfg.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let deltas = &cfg.decoder.deltas;
    let mut points = Vec::new();
    let mut timing = Vec::new();
    for &n in &cfg.n_values {
        let start = Instant::now();
        let tally = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let r = exp.run_trial(n, t)?;
                    let mut tally = Tally::zero(deltas.len());
                    for (i, e) in r.events.iter().enumerate() {
                        tally.fp[i] += e.fp as u64;
                        tally.miss_one[i] += e.miss_one as u64;
                        tally.miss_all[i] += e.miss_all as u64;
                    }
                    tally.resamples = r.resamples as u64;
                    tally.infeasible_kept = r.infeasible_kept as u64;
                    tally.marking_violations = r.marking_violations as u64;
                    Ok::<_, Error>(tally)
                })
                .try_reduce(|| Tally::zero(deltas.len()), |a, b| Ok(a.merge(b)))
        })?;
        let seconds = start.elapsed().as_secs_f64();
        info!("N={n}: {} trials in {seconds:.2}s", cfg.trials);
        timing.push(Timing { n, seconds });
        let users = cfg.code.users();
        for (i, &delta) in deltas.iter().enumerate() {
            points.push(PointEstimate {
                n,
                delta,
                rate: sig9(cfg.decoder.rate.unwrap_or((users as f64).log2() / n as f64)),
                users,
                trials: cfg.trials,
                fp: EventStats::new(tally.fp[i], cfg.trials),
                miss_one: EventStats::new(tally.miss_one[i], cfg.trials),
                miss_all: EventStats::new(tally.miss_all[i], cfg.trials),
                resamples: tally.resamples,
                infeasible_kept: tally.infeasible_kept,
                marking_violations: tally.marking_violations,
            });
        }
    }

    let mut fits = Vec::new();
    for &delta in deltas {
        for event in ["fp", "miss_one", "miss_all"] {
            let series: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.delta == delta)
                .map(|p| {
                    let s = match event {
                        "fp" => &p.fp,
                        "miss_one" => &p.miss_one,
                        _ => &p.miss_all,
                    };
                    (p.n as f64, s.rate)
                })
                .collect();
            let fit = exponent_fit(&series).ok().map(|f| ExponentFit {
                slope: sig9(f.slope),
                stderr: sig9(f.stderr),
                intercept: sig9(f.intercept),
                ..f
            });
            fits.push(FitRow { delta, event: event.into(), fit });
        }
    }

    Ok(EstimateReport { format: REPORT_FORMAT.into(), seed: cfg.seed, workers: workers.max(1), points, fits, timing })
}

impl EstimateReport {
    /// Point estimates as CSV; contains nothing that varies between runs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = write!(out, "{},{:.8e},{:.8e},{},{}", p.n, p.delta, p.rate, p.users, p.trials);
            for s in [&p.fp, &p.miss_one, &p.miss_all] {
                let _ = write!(out, ",{},{:.8e},{:.8e},{:.8e}", s.count, s.rate, s.lo, s.hi);
            }
            let _ = writeln!(out, ",{},{},{}", p.resamples, p.infeasible_kept, p.marking_violations);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.123456789123), 0.123456789);
        assert_eq!(sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(format!("{:.8e}", 0.25), "2.50000000e-1");
    }
}
