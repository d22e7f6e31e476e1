//! Episodic cutting environment.
//!
//! The state is the vector of garments still to be cut. An action is one
//! [`Section`]; executing it removes the garments it yields from the remaining
//! demand. The episode ends when every size is fulfilled or the step cap is
//! reached.
//!
//! The per-step reward is
//!
//! ```text
//! r = (fulfilled / D) * (C / L) - λ_over * (overproduced / D)
//! ```
//!
//! where `D` is the total initial demand in garments, `fulfilled` counts the
//! produced garments that met outstanding demand, `C` is the section's layer
//! length and `L` the board length. An exactly fulfilling episode therefore
//! collects a total reward in `(0, 1]`, reaching 1 only when every garment is
//! cut from a full-board marker.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{layer_length, Order, Section};

/// Environment settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub max_steps: usize,
    /// Weight on the overproduction penalty.
    pub lambda_over: f64,
    /// Optional cap on plies per section (cutting-table height).
    pub max_plies: Option<u64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: 50,
            lambda_over: 1.0,
            max_plies: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, order: &Order) -> Result<()> {
        if self.max_steps < order.n_sizes() {
            return Err(Error::Config(format!(
                "env.max_steps ({}) must be at least the number of sizes ({})",
                self.max_steps,
                order.n_sizes()
            )));
        }
        if !(self.lambda_over.is_finite() && self.lambda_over >= 0.0) {
            return Err(Error::Config(format!(
                "env.lambda_over must be non-negative, got {}",
                self.lambda_over
            )));
        }
        if self.max_plies == Some(0) {
            return Err(Error::Config("env.max_plies must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub remaining: Vec<u64>,
    pub step_index: usize,
}

impl EnvState {
    pub fn fulfilled(&self) -> bool {
        self.remaining.iter().all(|&r| r == 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub executed: Section,
}

/// Initial state: nothing cut yet.
pub fn reset(order: &Order) -> EnvState {
    EnvState {
        remaining: order.demands().to_vec(),
        step_index: 0,
    }
}

/// Whether an episode in `state` is over.
pub fn is_done(state: &EnvState, cfg: &EnvConfig) -> bool {
    state.fulfilled() || state.step_index >= cfg.max_steps
}

/// Network input: fraction of each size's demand still outstanding.
pub fn state_features(state: &EnvState, order: &Order) -> Vec<f64> {
    state
        .remaining
        .iter()
        .zip(order.demands())
        .map(|(&r, &d)| if d > 0 { r as f64 / d as f64 } else { 0.0 })
        .collect()
}

/// Sizes that still have outstanding demand.
pub fn eligible(state: &EnvState) -> Vec<bool> {
    state.remaining.iter().map(|&r| r > 0).collect()
}

/// Turns a score per size into a section.
///
/// Sizes are visited in descending score order (ties go to the lower index).
/// Each outstanding size is placed once on the marker if it still fits on the
/// board. The ply count is the smallest remaining demand among the chosen
/// sizes, so at least one of them is fulfilled by the section.
pub fn decode_action(probs: &[f64], state: &EnvState, order: &Order) -> Result<Section> {
    decode_action_capped(probs, state, order, None)
}

/// [`decode_action`] with an optional ply cap.
pub fn decode_action_capped(
    probs: &[f64],
    state: &EnvState,
    order: &Order,
    max_plies: Option<u64>,
) -> Result<Section> {
    let n = order.n_sizes();
    order.check_len("action scores", probs.len())?;
    order.check_len("remaining demand", state.remaining.len())?;
    if state.fulfilled() {
        return Err(Error::NoAction);
    }
    let mut ranked: Vec<usize> = (0..n).collect();
    // Stable sort keeps lower indices first among equal scores.
    ranked.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));

    let mut counts = vec![0u32; n];
    let mut used = 0.0;
    let mut plies = u64::MAX;
    for i in ranked {
        let left = state.remaining[i];
        if left == 0 {
            continue;
        }
        let marker = order.sizes()[i].marker_len;
        if order.fits(used + marker) {
            used += marker;
            counts[i] = 1;
            plies = plies.min(left);
        }
    }
    if let Some(cap) = max_plies {
        plies = plies.min(cap);
    }
    // Every size fits an empty board, so at least one size was chosen.
    debug_assert!(counts.iter().any(|&c| c > 0));
    Ok(Section::new(plies, counts))
}

/// Executes `section` from `state`.
///
/// Remaining demand is clamped at zero; anything produced beyond it is
/// charged to the overproduction penalty instead.
pub fn step(
    state: &EnvState,
    section: &Section,
    order: &Order,
    cfg: &EnvConfig,
) -> Result<StepOutcome> {
    order.check_len("remaining demand", state.remaining.len())?;
    let layer = layer_length(section, order)?;
    if section.plies == 0 || section.counts.iter().all(|&c| c == 0) {
        return Err(Error::Constraint("section cuts no garments".into()));
    }
    if !order.fits(layer) {
        return Err(Error::Constraint(format!(
            "layer length {layer} exceeds board length {}",
            order.board_len()
        )));
    }
    if let Some(cap) = cfg.max_plies {
        if section.plies > cap {
            return Err(Error::Constraint(format!(
                "{} plies exceeds the cap of {cap}",
                section.plies
            )));
        }
    }
    if state.step_index >= cfg.max_steps {
        return Err(Error::Constraint("episode step cap already reached".into()));
    }

    let total = order.total_units().max(1) as f64;
    let mut fulfilled = 0u64;
    let mut over = 0u64;
    let mut remaining = state.remaining.clone();
    for (left, made) in remaining.iter_mut().zip(section.garments()) {
        let used = made.min(*left);
        fulfilled += used;
        over += made - used;
        *left -= used;
    }
    let utilization = layer / order.board_len();
    let reward =
        (fulfilled as f64 / total) * utilization - cfg.lambda_over * (over as f64 / total);
    let next_state = EnvState {
        remaining,
        step_index: state.step_index + 1,
    };
    let done = is_done(&next_state, cfg);
    Ok(StepOutcome {
        next_state,
        reward,
        done,
        executed: section.clone(),
    })
}
