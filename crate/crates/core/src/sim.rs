//! Randomized simulation under uniform scheduling.
//!
//! The scheduler is a ChaCha8 stream (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Each step draws one `u64` and maps it onto the
//! sorted list of enabled steps by rejection sampling: draws below
//! `2^64 mod k` are discarded, the rest are reduced modulo `k`. Any
//! implementation following these rules reproduces the same traces.
//!
//! The `Stabilized` verdict is a heuristic: it only means the run spent a
//! whole window in one consensus. `Terminal` is exact.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::protocol::{BroadcastProtocol, Configuration, InputVector, ProtocolError};
use crate::semantics::{Consensus, Semantics, TransitionRef};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimParams {
    pub max_steps: u64,
    /// Quiescence window; `None` picks `10 * |Q| * |C0|`.
    pub window: Option<u64>,
    pub record_trace: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, window: None, record_trace: false }
    }
}

pub fn default_window(protocol: &BroadcastProtocol, initial: &Configuration) -> u64 {
    10 * protocol.num_states() as u64 * initial.size()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum SimVerdict {
    /// Reached a configuration whose enabled steps are all self-loops.
    /// `value` is `None` when that configuration is not a consensus.
    Terminal {
        value: Option<u8>,
        step: u64,
    },
    /// Heuristic: every configuration from `step` on, for a full window, was
    /// a `value`-consensus.
    Stabilized {
        value: u8,
        step: u64,
    },
    BudgetExhausted {
        steps: u64,
    },
}

impl SimVerdict {
    pub fn value(&self) -> Option<bool> {
        match *self {
            SimVerdict::Terminal { value, .. } => value.map(|v| v == 1),
            SimVerdict::Stabilized { value, .. } => Some(value == 1),
            SimVerdict::BudgetExhausted { .. } => None,
        }
    }
}

impl fmt::Display for SimVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimVerdict::Terminal { value: Some(v), step } => write!(f, "terminal({v}) at step {step}"),
            SimVerdict::Terminal { value: None, step } => write!(f, "terminal(no consensus) at step {step}"),
            SimVerdict::Stabilized { value, step } => {
                write!(f, "stabilized({value}) at step {step} [heuristic]")
            }
            SimVerdict::BudgetExhausted { steps } => write!(f, "budget exhausted after {steps} steps"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimTrace {
    pub seed: u64,
    pub initial: Configuration,
    /// Empty unless `record_trace` was set.
    pub steps: Vec<(TransitionRef, Configuration)>,
    pub verdict: SimVerdict,
    pub steps_taken: u64,
}

impl SimTrace {
    /// Trace file body: `<step#> <transition-id> <configuration>` per line,
    /// starting with `0 init <C0>`.
    pub fn to_text(&self, protocol: &BroadcastProtocol) -> String {
        let mut out = format!("0 init {}\n", self.initial.display(protocol));
        for (i, (t, c)) in self.steps.iter().enumerate() {
            out.push_str(&format!("{} {t} {}\n", i + 1, c.display(protocol)));
        }
        out
    }
}

/// Draws a uniform index below `k` (`k > 0`).
pub fn uniform_index(rng: &mut impl RngCore, k: usize) -> usize {
    let k = k as u64;
    let reject_below = k.wrapping_neg() % k;
    loop {
        let x = rng.next_u64();
        if x >= reject_below {
            return (x % k) as usize;
        }
    }
}

pub fn simulate(
    protocol: &BroadcastProtocol,
    input: &InputVector,
    seed: u64,
    params: &SimParams,
) -> Result<SimTrace, ProtocolError> {
    let initial = protocol.initial_configuration(input)?;
    let sem = Semantics::new(protocol);
    let window = params.window.unwrap_or_else(|| default_window(protocol, &initial)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = initial.clone();
    let mut steps = Vec::new();
    let mut step = 0u64;
    // Current run of consecutive same-valued consensus configurations.
    let mut run: Option<(bool, u64, u64)> = None;

    let verdict = loop {
        let enabled = sem.enabled_steps(&current);
        let consensus = sem.classify(&current).expect("populations are non-empty");
        if enabled.iter().all(|s| s.target == current) {
            break SimVerdict::Terminal { value: consensus.value().map(u8::from), step };
        }
        run = match (consensus, run) {
            (Consensus::Split, _) => None,
            (c, Some((b, start, len))) if c.value() == Some(b) => Some((b, start, len + 1)),
            (c, _) => Some((c.value().unwrap(), step, 1)),
        };
        if let Some((b, start, len)) = run {
            if len >= window {
                break SimVerdict::Stabilized { value: u8::from(b), step: start };
            }
        }
        if step >= params.max_steps {
            break SimVerdict::BudgetExhausted { steps: step };
        }
        let pick = uniform_index(&mut rng, enabled.len());
        let chosen = enabled.into_iter().nth(pick).expect("index below length");
        step += 1;
        if params.record_trace {
            steps.push((chosen.transition, chosen.target.clone()));
        }
        current = chosen.target;
    };

    Ok(SimTrace { seed, initial, steps, verdict, steps_taken: step })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimSummary {
    pub input: InputVector,
    pub seed: u64,
    #[serde(flatten)]
    pub verdict: SimVerdict,
    pub steps_taken: u64,
}

/// Runs every (input, seed) pair, in parallel, returning results in
/// input-major order.
pub fn batch_simulate(
    protocol: &BroadcastProtocol,
    inputs: &[InputVector],
    seeds: &[u64],
    params: &SimParams,
) -> Vec<Result<SimSummary, ProtocolError>> {
    let params = SimParams { record_trace: false, ..*params };
    let jobs: Vec<(&InputVector, u64)> = inputs.iter().flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    jobs.par_iter()
        .map(|&(input, seed)| {
            simulate(protocol, input, seed, &params).map(|t| SimSummary {
                input: input.clone(),
                seed,
                verdict: t.verdict,
                steps_taken: t.steps_taken,
            })
        })
        .collect()
}
