//! One pass of the tracing pipeline: host, codebook, coalition, attack, decode.

use fptrace_core::codec::{apply_rm, apply_rp, build_codebook, draw_host, draw_timeshare, tardos_codebook, Codebook};
use fptrace_core::collusion::{build_attack, run_attack, CollusionAttack};
use fptrace_core::decoders::{mpmi_decode, threshold_scores};
use fptrace_core::rng::{derive_key, stream};
use fptrace_core::{Error, Result, Sequence};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::config::{CoalitionRule, CodeSpec, ExperimentConfig, InfeasiblePolicy};

/// Error events of one decode, given the true coalition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialEvents {
    /// An innocent user is accused.
    pub fp: bool,
    /// No colluder is accused.
    pub miss_one: bool,
    /// Some colluder escapes.
    pub miss_all: bool,
}

impl TrialEvents {
    pub fn classify(coalition: &[usize], accused: &[usize]) -> Self {
        Self {
            fp: accused.iter().any(|u| !coalition.contains(u)),
            miss_one: !accused.iter().any(|u| coalition.contains(u)),
            miss_all: !coalition.iter().all(|u| accused.contains(u)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: u64,
    pub coalition: Vec<usize>,
    /// Attack redraws forced by infeasible copies.
    pub resamples: usize,
    /// Infeasible copies kept under the accept policy.
    pub infeasible_kept: bool,
    pub marking_violations: usize,
    /// One entry per configured Δ.
    pub events: Vec<TrialEvents>,
}

/// Draws the codebook of trial `trial` at blocklength `n`.
pub fn draw_codebook(code: &CodeSpec, seed: u64, n: usize, trial: u64) -> Result<Codebook> {
    let parts = [n as u64, trial];
    match code {
        CodeSpec::ConstantComposition(design) => {
            let params = design.params(n);
            let s = draw_host(&params.p_s, n, &mut stream(seed, "host", &parts))?;
            let w = draw_timeshare(&params, &mut stream(seed, "timeshare", &parts))?;
            let mut cb = build_codebook(&params, &s, &w, derive_key(seed, "codebook", &parts))?;
            if design.permute_users {
                cb = apply_rp(&cb, &mut stream(seed, "permute-users", &parts));
            }
            if design.permute_letters {
                cb = apply_rm(&cb, &mut stream(seed, "permute-letters", &parts))?;
            }
            Ok(cb)
        }
        CodeSpec::Tardos { users, density, bins } => {
            let code = tardos_codebook(*users, n, *density, &mut stream(seed, "tardos", &parts))?;
            code.into_codebook(*bins, derive_key(seed, "codebook", &parts))
        }
    }
}

/// A validated configuration with its attack built once.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    attack: Box<dyn CollusionAttack>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let attack = build_attack(&cfg.attack)?;
        Ok(Self { cfg, attack })
    }

    fn coalition(&self, n: usize, trial: u64) -> Vec<usize> {
        match &self.cfg.coalition {
            CoalitionRule::Fixed { users } => {
                let mut u = users.clone();
                u.sort_unstable();
                u
            }
            CoalitionRule::Random { size } => {
                let mut rng = stream(self.cfg.seed, "coalition", &[n as u64, trial]);
                let mut u = sample(&mut rng, self.cfg.code.users(), *size).into_vec();
                u.sort_unstable();
                u
            }
        }
    }

    /// Runs trial `trial` at blocklength `n`; the result depends only on
    /// `(seed, n, trial)`.
    pub fn run_trial(&self, n: usize, trial: u64) -> Result<TrialRecord> {
        let cb = draw_codebook(&self.cfg.code, self.cfg.seed, n, trial)?;
        let coalition = self.coalition(n, trial);
        let x: Vec<&Sequence> = coalition.iter().map(|&u| &cb.rows[u]).collect();

        let mut resamples = 0;
        let mut infeasible_kept = false;
        let result = loop {
            let mut rng = stream(self.cfg.seed, "attack", &[n as u64, trial, resamples as u64]);
            let r = run_attack(self.attack.as_ref(), &x, &mut rng)?;
            let feasible = self.attack.class().is_none_or(|c| r.feasibility.feasible_for(c));
            if feasible {
                break r;
            }
            match self.cfg.infeasible {
                InfeasiblePolicy::Accept => {
                    infeasible_kept = true;
                    break r;
                }
                InfeasiblePolicy::Resample if resamples < self.cfg.max_resamples => resamples += 1,
                InfeasiblePolicy::Resample => {
                    return Err(Error::Infeasible(format!(
                        "attack `{}` stayed outside its class after {resamples} redraws",
                        self.attack.name()
                    )))
                }
            }
        };

        let users = cb.users();
        let k_nom = coalition.len();
        let rate = (users as f64).log2() / n as f64;
        let decoder = &self.cfg.decoder;
        let events = if decoder.name == "threshold" {
            let scores = threshold_scores(&cb, &result.y)?;
            decoder
                .deltas
                .iter()
                .map(|&d| {
                    let thr = decoder.config(rate, d, k_nom).threshold();
                    let accused: Vec<usize> = (0..users).filter(|&m| scores[m] > thr).collect();
                    TrialEvents::classify(&coalition, &accused)
                })
                .collect()
        } else {
            decoder
                .deltas
                .iter()
                .map(|&d| {
                    let out = mpmi_decode(&cb, &result.y, &decoder.config(rate, d, k_nom))?;
                    Ok(TrialEvents::classify(&coalition, &out.accused))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(TrialRecord {
            n,
            trial,
            coalition,
            resamples,
            infeasible_kept,
            marking_violations: result.feasibility.marking_violations,
            events,
        })
    }
}

/// Builds the experiment and runs a single trial.
pub fn run_trial(cfg: &ExperimentConfig, n: usize, trial: u64) -> Result<TrialRecord> {
    Experiment::new(cfg.clone())?.run_trial(n, trial)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_definitions() {
        assert_eq!(
            TrialEvents::classify(&[1, 2], &[1, 2]),
            TrialEvents { fp: false, miss_one: false, miss_all: false }
        );
        assert_eq!(TrialEvents::classify(&[1, 2], &[]), TrialEvents { fp: false, miss_one: true, miss_all: true });
        assert_eq!(TrialEvents::classify(&[1, 2], &[2, 3]), TrialEvents { fp: true, miss_one: false, miss_all: true });
    }
}
