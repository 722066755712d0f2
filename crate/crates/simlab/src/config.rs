//! Experiment configuration as read from JSON.

use fptrace_core::codec::{CodeParams, TardosDensity};
use fptrace_core::collusion::AttackConfig;
use fptrace_core::decoders::{decoder_registry, DecodeConfig, SearchMode, DEFAULT_BUDGET};
use fptrace_core::{Error, Result};
use serde::{Deserialize, Serialize};

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn point_mass() -> Vec<f64> {
    vec![1.0]
}
fn default_bins() -> usize {
    8
}
fn default_resamples() -> usize {
    100
}

/// Constant-composition code design; the blocklength comes from the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeDesign {
    pub users: usize,
    #[serde(default = "two")]
    pub x_alphabet: usize,
    #[serde(default = "one")]
    pub s_alphabet: usize,
    #[serde(default = "one")]
    pub w_alphabet: usize,
    #[serde(default = "point_mass")]
    pub p_s: Vec<f64>,
    #[serde(default = "point_mass")]
    pub target_w: Vec<f64>,
    /// Flat `[s][w][x]`; uniform over X when absent.
    #[serde(default)]
    pub target_x_given_sw: Option<Vec<f64>>,
    #[serde(default)]
    pub d1: Option<Vec<f64>>,
    #[serde(default)]
    pub d1_max: Option<f64>,
    /// Randomly permute users (RP code).
    #[serde(default)]
    pub permute_users: bool,
    /// Randomly permute letters (RM code).
    #[serde(default)]
    pub permute_letters: bool,
}

impl CodeDesign {
    pub fn binary(users: usize) -> Self {
        Self {
            users,
            x_alphabet: 2,
            s_alphabet: 1,
            w_alphabet: 1,
            p_s: point_mass(),
            target_w: point_mass(),
            target_x_given_sw: None,
            d1: None,
            d1_max: None,
            permute_users: false,
            permute_letters: false,
        }
    }

    pub fn params(&self, n: usize) -> CodeParams {
        let cells = self.s_alphabet * self.w_alphabet;
        let target = self
            .target_x_given_sw
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.x_alphabet as f64; cells * self.x_alphabet]);
        CodeParams {
            n,
            users: self.users,
            rate: (self.users as f64).log2() / n as f64,
            delta: 0.0,
            k_nom: 2,
            s_alphabet: self.s_alphabet,
            x_alphabet: self.x_alphabet,
            w_alphabet: self.w_alphabet,
            p_s: self.p_s.clone(),
            target_w: self.target_w.clone(),
            target_x_given_sw: target,
            d1: self.d1.clone(),
            d1_max: self.d1_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodeSpec {
    ConstantComposition(CodeDesign),
    /// Binary Tardos code; biases are quantized into `bins` time-sharing symbols.
    Tardos {
        users: usize,
        #[serde(default)]
        density: TardosDensity,
        #[serde(default = "default_bins")]
        bins: usize,
    },
}

impl CodeSpec {
    pub fn users(&self) -> usize {
        match self {
            CodeSpec::ConstantComposition(d) => d.users,
            CodeSpec::Tardos { users, .. } => *users,
        }
    }

    pub fn x_alphabet(&self) -> usize {
        match self {
            CodeSpec::ConstantComposition(d) => d.x_alphabet,
            CodeSpec::Tardos { .. } => 2,
        }
    }
}

/// How the true coalition is chosen in each trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoalitionRule {
    Fixed {
        users: Vec<usize>,
    },
    /// Uniform subset of the given size, drawn per trial.
    Random {
        size: usize,
    },
}

impl CoalitionRule {
    pub fn size(&self) -> usize {
        match self {
            CoalitionRule::Fixed { users } => users.len(),
            CoalitionRule::Random { size } => *size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    #[serde(default = "threshold_name")]
    pub name: String,
    /// Every trial is judged once per Δ.
    pub deltas: Vec<f64>,
    /// Decoder rate; `log2(M)/N` when absent.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub search_mode: SearchMode,
    #[serde(default = "default_budget")]
    pub budget: u128,
}

fn threshold_name() -> String {
    "threshold".into()
}
fn default_budget() -> u128 {
    DEFAULT_BUDGET
}

impl DecoderSpec {
    pub fn threshold(deltas: Vec<f64>) -> Self {
        Self {
            name: threshold_name(),
            deltas,
            rate: None,
            k_max: None,
            search_mode: SearchMode::Auto,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn config(&self, rate: f64, delta: f64, k_nom: usize) -> DecodeConfig {
        let mut c = DecodeConfig::new(self.rate.unwrap_or(rate), delta, k_nom);
        if let Some(k) = self.k_max {
            c.k_max = k;
        }
        c.search_mode = self.search_mode;
        c.budget = self.budget;
        c
    }
}

/// What to do with a pirate copy outside the attack's declared class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Redraw the attack, up to `max_resamples` times per trial.
    #[default]
    Resample,
    /// Keep the copy and count it.
    Accept,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub code: CodeSpec,
    pub attack: AttackConfig,
    pub decoder: DecoderSpec,
    pub coalition: CoalitionRule,
    pub trials: u64,
    pub n_values: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub infeasible: InfeasiblePolicy,
    #[serde(default = "default_resamples")]
    pub max_resamples: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        if cfg.attack.k == 0 {
            cfg.attack.k = cfg.coalition.size();
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::Config("blocklengths must be a nonempty list of positive integers".into()));
        }
        let users = self.code.users();
        let k = self.coalition.size();
        if k == 0 || k > users {
            return Err(Error::Config(format!("coalition size {k} must be in 1..={users}")));
        }
        if let CoalitionRule::Fixed { users: set } = &self.coalition {
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() || sorted.iter().any(|&u| u >= users) {
                return Err(Error::Config(format!("fixed coalition {set:?} is not a set of users below {users}")));
            }
        }
        if self.attack.k != k {
            return Err(Error::Config(format!("attack expects {} colluders, coalition has {k}", self.attack.k)));
        }
        if self.attack.x_alphabet != self.code.x_alphabet() {
            return Err(Error::Config("attack and code alphabets differ".into()));
        }
        if self.decoder.deltas.is_empty() || self.decoder.deltas.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Config("decoder needs a nonempty list of nonnegative Δ".into()));
        }
        if !decoder_registry().contains(&self.decoder.name) {
            return Err(Error::UnknownStrategy {
                kind: "decoder",
                name: self.decoder.name.clone(),
                known: decoder_registry().names().join(", "),
            });
        }
        match &self.code {
            CodeSpec::ConstantComposition(d) => {
                for &n in &self.n_values {
                    d.params(n).validate()?;
                }
            }
            CodeSpec::Tardos { bins, .. } => {
                if *bins == 0 || *bins > 256 {
                    return Err(Error::Config("Tardos bins must be in 1..=256".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "code": {"kind": "constant_composition", "users": 16},
                "attack": {"name": "interleave"},
                "decoder": {"deltas": [0.05]},
                "coalition": {"kind": "random", "size": 2},
                "trials": 10,
                "n_values": [50, 100]
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.attack.k, 2);
        assert_eq!(cfg.infeasible, InfeasiblePolicy::Resample);
        cfg.validate().unwrap();
        assert_eq!(cfg.code.users(), 16);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = ExperimentConfig {
            code: CodeSpec::ConstantComposition(CodeDesign::binary(4)),
            attack: AttackConfig::named("interleave", 2, 2),
            decoder: DecoderSpec::threshold(vec![0.1]),
            coalition: CoalitionRule::Fixed { users: vec![0, 4] },
            trials: 1,
            n_values: vec![10],
            seed: 0,
            infeasible: InfeasiblePolicy::Resample,
            max_resamples: 1,
        };
        assert!(cfg.validate().is_err());
        cfg.coalition = CoalitionRule::Fixed { users: vec![0, 3] };
        cfg.validate().unwrap();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        cfg.trials = 1;
        cfg.decoder.name = "oracle".into();
        assert!(matches!(cfg.validate(), Err(Error::UnknownStrategy { .. })));
    }
}
