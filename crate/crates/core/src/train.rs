//! Policy-gradient training of the recurrent policy on one order.
//!
//! Each episode rolls the network through the cutting environment, computes
//! discounted returns, standardizes them against a running window of past
//! returns, and takes one Adam step on the REINFORCE loss
//!
//! ```text
//! L = -Σ_t A_t · log π(a_t | s_t)
//! ```
//!
//! where the action log-probability treats every size that still has demand
//! as an independent Bernoulli draw with the network's output as its
//! probability: selected sizes contribute `log p_i`, unselected ones
//! `log(1 - p_i)`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{self, decode_action_capped, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::explore::{perturb_and_select, ExploreConfig, OuNoise, SampleMode};
use crate::neuro::{
    adam_step, episode_backward, finite_diff_check, policy_step, AdamConfig, AdamState,
    Checkpoint, GradCheckReport, NetDims, NetState, PolicyParams, StepCache,
};
use crate::plan::{validate_plan, waste, CutPlan, Order, Section};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: u32,
    pub gamma: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub env: EnvConfig,
    pub explore: ExploreConfig,
    /// Episodes of returns kept for the running mean and standard deviation.
    pub norm_window: usize,
    /// Whether steps taken in epsilon-explore mode contribute to the update.
    pub learn_from_explore: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 1000,
            gamma: 0.99,
            adam: AdamConfig::default(),
            seed: 7,
            env: EnvConfig::default(),
            explore: ExploreConfig::default(),
            norm_window: 10,
            learn_from_explore: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, order: &Order) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("train.episodes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "train.gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        if self.norm_window == 0 {
            return Err(Error::Config("train.norm_window must be at least 1".into()));
        }
        self.env.validate(order)?;
        self.explore.ou.validate()?;
        self.explore.epsilon.validate()
    }
}

/// How actions are chosen during a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutMode {
    pub epsilon: f64,
    pub noise: bool,
    pub amplitude: bool,
}

impl RolloutMode {
    /// Pure exploitation: no epsilon, no noise.
    pub fn greedy(amplitude: bool) -> Self {
        RolloutMode {
            epsilon: 0.0,
            noise: false,
            amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub features: Vec<f64>,
    /// Network output before any exploration.
    pub policy_probs: Vec<f64>,
    /// Scores handed to the decoder.
    pub final_probs: Vec<f64>,
    pub mode: SampleMode,
    pub section: Section,
    pub selected: Vec<bool>,
    pub eligible: Vec<bool>,
    pub reward: f64,
    pub cache: StepCache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    pub total_reward: f64,
    pub final_state: EnvState,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn plan(&self) -> CutPlan {
        self.steps.iter().map(|s| s.section.clone()).collect()
    }

    pub fn fulfilled(&self) -> bool {
        self.final_state.fulfilled()
    }
}

/// Rolls the policy through one episode from a fresh environment and a zero
/// recurrent state. `ou` is reset before the first step.
pub fn run_episode<R: Rng + ?Sized>(
    order: &Order,
    params: &PolicyParams,
    env_cfg: &EnvConfig,
    mode: RolloutMode,
    ou: &mut OuNoise,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let dims = params.dims();
    if dims.input != order.n_sizes() || dims.output != order.n_sizes() {
        return Err(Error::dim("network width", order.n_sizes(), dims.input));
    }
    ou.reset();
    let mut state = env::reset(order);
    let mut net = NetState::zeros(dims.hidden);
    let mut steps = Vec::new();
    let mut total_reward = 0.0;

    while !env::is_done(&state, env_cfg) {
        let features = env::state_features(&state, order);
        let (next_net, cache) = policy_step(&features, &net, params)?;
        net = next_net;
        let noise = if mode.noise {
            Some(ou.step(rng).to_vec())
        } else {
            None
        };
        let (final_probs, sample_mode) =
            perturb_and_select(&cache.probs, mode.epsilon, noise.as_deref(), mode.amplitude, rng);
        let section = decode_action_capped(&final_probs, &state, order, env_cfg.max_plies)?;
        let eligible = env::eligible(&state);
        let selected = section.counts.iter().map(|&c| c > 0).collect();
        let outcome = env::step(&state, &section, order, env_cfg)?;
        total_reward += outcome.reward;
        steps.push(StepRecord {
            features,
            policy_probs: cache.probs.clone(),
            final_probs,
            mode: sample_mode,
            section,
            selected,
            eligible,
            reward: outcome.reward,
            cache,
        });
        state = outcome.next_state;
    }
    Ok(EpisodeTrace {
        steps,
        total_reward,
        final_state: state,
    })
}

/// Discounted returns `G_t = r_t + γ G_{t+1}`.
pub fn returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// Running standardization of returns over the last `window` episodes.
///
/// The baseline is kept per step index: `b_t` is the mean of the stored
/// returns at position `t` (0 where none are stored yet). Advantages are
/// `(G_t - b_t) / max(s, 1e-8)` where `s` is the standard deviation of all
/// stored residuals `G - b`; with fewer than two stored episodes the scale
/// is 1. A single pooled baseline would credit early steps simply for
/// having more reward left to collect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnNormalizer {
    window: usize,
    history: VecDeque<Vec<f64>>,
}

impl ReturnNormalizer {
    pub fn new(window: usize) -> Self {
        ReturnNormalizer {
            window: window.max(1),
            history: VecDeque::new(),
        }
    }

    /// Baseline for step `t`.
    pub fn baseline(&self, t: usize) -> f64 {
        let (sum, n) = self
            .history
            .iter()
            .filter_map(|g| g.get(t))
            .fold((0.0, 0usize), |(s, n), g| (s + g, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Scale applied to baseline residuals.
    pub fn scale(&self) -> f64 {
        let longest = self.history.iter().map(Vec::len).max().unwrap_or(0);
        let b: Vec<f64> = (0..longest).map(|t| self.baseline(t)).collect();
        let resid: Vec<f64> = self
            .history
            .iter()
            .flat_map(|g| g.iter().zip(&b).map(|(g, b)| g - b))
            .collect();
        if self.history.len() < 2 || resid.len() < 2 {
            return 1.0;
        }
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resid.len() as f64;
        var.sqrt().max(1e-8)
    }

    pub fn advantages(&self, returns: &[f64]) -> Vec<f64> {
        let scale = self.scale();
        returns
            .iter()
            .enumerate()
            .map(|(t, g)| (g - self.baseline(t)) / scale)
            .collect()
    }

    pub fn push(&mut self, returns: Vec<f64>) {
        self.history.push_back(returns);
        while self.history.len() > self.window {
            self.history.pop_front();
        }
    }
}

/// Bernoulli log-likelihood loss over a sequence of steps and its gradient
/// with respect to each step's probabilities.
fn bernoulli_loss(
    probs: &[&[f64]],
    selected: &[&[bool]],
    eligible: &[&[bool]],
    advantages: &[f64],
) -> (f64, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(probs.len());
    for t in 0..probs.len() {
        let a = advantages[t];
        let mut dp = vec![0.0; probs[t].len()];
        let mut log_pi = 0.0;
        for (i, &raw) in probs[t].iter().enumerate() {
            if !eligible[t][i] {
                continue;
            }
            let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let inside = p == raw;
            if selected[t][i] {
                log_pi += p.ln();
                if inside {
                    dp[i] = -a / p;
                }
            } else {
                log_pi += (1.0 - p).ln();
                if inside {
                    dp[i] = a / (1.0 - p);
                }
            }
        }
        loss -= a * log_pi;
        grads.push(dp);
    }
    (loss, grads)
}

/// REINFORCE loss of a recorded episode for the given per-step advantages,
/// using the policy's own (pre-exploration) probabilities. Returns the loss
/// and `∂L/∂p_t` for every step.
pub fn policy_loss(trace: &EpisodeTrace, advantages: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    if advantages.len() != trace.steps.len() {
        return Err(Error::dim("advantages", trace.steps.len(), advantages.len()));
    }
    let probs: Vec<&[f64]> = trace.steps.iter().map(|s| s.policy_probs.as_slice()).collect();
    let selected: Vec<&[bool]> = trace.steps.iter().map(|s| s.selected.as_slice()).collect();
    let eligible: Vec<&[bool]> = trace.steps.iter().map(|s| s.eligible.as_slice()).collect();
    Ok(bernoulli_loss(&probs, &selected, &eligible, advantages))
}

/// A recorded episode with its actions and advantages fixed, so the loss is
/// a deterministic function of the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenEpisode {
    pub features: Vec<Vec<f64>>,
    pub selected: Vec<Vec<bool>>,
    pub eligible: Vec<Vec<bool>>,
    pub advantages: Vec<f64>,
}

impl FrozenEpisode {
    pub fn from_trace(trace: &EpisodeTrace, advantages: Vec<f64>) -> Self {
        FrozenEpisode {
            features: trace.steps.iter().map(|s| s.features.clone()).collect(),
            selected: trace.steps.iter().map(|s| s.selected.clone()).collect(),
            eligible: trace.steps.iter().map(|s| s.eligible.clone()).collect(),
            advantages,
        }
    }

    pub fn truncate(&mut self, steps: usize) {
        self.features.truncate(steps);
        self.selected.truncate(steps);
        self.eligible.truncate(steps);
        self.advantages.truncate(steps);
    }

    /// Replays the episode through the network; loss and exact gradient.
    pub fn loss_and_grad(&self, params: &PolicyParams) -> Result<(f64, PolicyParams)> {
        let mut net = NetState::zeros(params.dims().hidden);
        let mut caches = Vec::with_capacity(self.features.len());
        for x in &self.features {
            let (next, cache) = policy_step(x, &net, params)?;
            net = next;
            caches.push(cache);
        }
        let probs: Vec<&[f64]> = caches.iter().map(|c| c.probs.as_slice()).collect();
        let selected: Vec<&[bool]> = self.selected.iter().map(Vec::as_slice).collect();
        let eligible: Vec<&[bool]> = self.eligible.iter().map(Vec::as_slice).collect();
        let (loss, dprobs) = bernoulli_loss(&probs, &selected, &eligible, &self.advantages);
        let grad = episode_backward(&caches, &dprobs, params)?;
        Ok((loss, grad))
    }
}

/// Builds a seeded three-step episode on the reference order and checks the
/// backpropagated gradient against central differences on `probes` random
/// coordinates.
pub fn gradient_check(seed: u64, probes: usize) -> Result<GradCheckReport> {
    let order = Order::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = PolicyParams::init(NetDims::for_sizes(order.n_sizes()), &mut rng);
    let mut ou = OuNoise::new(order.n_sizes(), Default::default())?;
    let mode = RolloutMode {
        epsilon: 0.5,
        noise: true,
        amplitude: true,
    };
    let trace = run_episode(&order, &params, &EnvConfig::default(), mode, &mut ou, &mut rng)?;
    let advantages = (0..trace.steps.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut frozen = FrozenEpisode::from_trace(&trace, advantages);
    frozen.truncate(3);
    if frozen.features.len() < 3 {
        return Err(Error::Degenerate("episode shorter than three steps".into()));
    }

    let dims = params.dims();
    let report = finite_diff_check(
        params.as_slice(),
        |theta| {
            let p = PolicyParams::from_vec(dims, theta.to_vec()).expect("same length");
            let (loss, grad) = frozen.loss_and_grad(&p).expect("frozen replay");
            (loss, grad.into_vec())
        },
        probes,
        1e-5,
        &mut rng,
    );
    Ok(report)
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub total_reward: f64,
    pub loss: f64,
    pub epsilon: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub records: Vec<EpisodeRecord>,
}

pub const METRICS_HEADER: &str = "episode,total_reward,loss,epsilon,steps";

impl TrainMetrics {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with shortest round-trip float formatting and LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * (self.records.len() + 1));
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.episode, r.total_reward, r.loss, r.epsilon, r.steps
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: format!("metrics line {line}"),
            message: msg,
        };
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_HEADER) {
            return Err(parse_err(1, format!("header must be `{METRICS_HEADER}`")));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(parse_err(i + 2, format!("expected 5 columns, got {}", cols.len())));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 2, e.to_string()));
            records.push(EpisodeRecord {
                episode: cols[0].parse().map_err(|e| parse_err(i + 2, format!("{e}")))?,
                total_reward: f(cols[1])?,
                loss: f(cols[2])?,
                epsilon: f(cols[3])?,
                steps: cols[4].parse().map_err(|e| parse_err(i + 2, format!("{e}")))?,
            });
        }
        Ok(TrainMetrics { records })
    }

    /// Mean and population standard deviation of total reward over
    /// `range` of episodes.
    pub fn reward_stats(&self, range: std::ops::Range<usize>) -> (f64, f64) {
        let slice = &self.records[range.start.min(self.len())..range.end.min(self.len())];
        if slice.is_empty() {
            return (0.0, 0.0);
        }
        let n = slice.len() as f64;
        let mean = slice.iter().map(|r| r.total_reward).sum::<f64>() / n;
        let var = slice.iter().map(|r| (r.total_reward - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub metrics: TrainMetrics,
    /// Weights that produced the highest-reward episode.
    pub best: Checkpoint,
    pub last: Checkpoint,
}

/// Full training run.
pub fn train(order: &Order, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate(order)?;
    let n = order.n_sizes();
    let dims = NetDims::for_sizes(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = PolicyParams::init(dims, &mut rng);
    let mut adam = AdamState::new(params.len());
    let mut ou = OuNoise::new(n, config.explore.ou)?;
    let mut normalizer = ReturnNormalizer::new(config.norm_window);
    let mut metrics = TrainMetrics::default();
    let mut best: Option<Checkpoint> = None;

    for k in 0..config.episodes {
        let epsilon = if config.explore.epsilon_enabled {
            config.explore.epsilon.epsilon_at(k)
        } else {
            0.0
        };
        let mode = RolloutMode {
            epsilon,
            noise: config.explore.ou_enabled,
            amplitude: config.explore.amplitude_enabled,
        };
        let trace = run_episode(order, &params, &config.env, mode, &mut ou, &mut rng)?;
        let g = returns(&trace.rewards(), config.gamma);
        let mut advantages = normalizer.advantages(&g);
        if !config.learn_from_explore {
            for (a, s) in advantages.iter_mut().zip(&trace.steps) {
                if s.mode == SampleMode::Explore {
                    *a = 0.0;
                }
            }
        }
        normalizer.push(g);
        let (loss, dprobs) = policy_loss(&trace, &advantages)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} at episode {k} (seed {})",
                config.seed
            )));
        }

        if best
            .as_ref()
            .and_then(|b| b.total_reward)
            .is_none_or(|r| trace.total_reward > r)
        {
            let mut ck = Checkpoint::new(params.clone());
            ck.episode = k;
            ck.total_reward = Some(trace.total_reward);
            best = Some(ck);
        }

        let caches: Vec<StepCache> = trace.steps.iter().map(|s| s.cache.clone()).collect();
        let grad = episode_backward(&caches, &dprobs, &params)?;
        adam_step(params.as_mut_slice(), grad.as_slice(), &mut adam, &config.adam).map_err(
            |e| Error::Numeric(format!("episode {k} (seed {}): {e}", config.seed)),
        )?;

        metrics.records.push(EpisodeRecord {
            episode: k,
            total_reward: trace.total_reward,
            loss,
            epsilon,
            steps: trace.steps.len(),
        });
    }

    let last = Checkpoint {
        params: params.clone(),
        adam: Some(adam),
        rng: Some(rng),
        episode: config.episodes,
        total_reward: metrics.records.last().map(|r| r.total_reward),
    };
    Ok(TrainOutcome {
        params,
        metrics,
        best: best.expect("at least one episode"),
        last,
    })
}

/// Independent runs for several seeds on worker threads. Results come back
/// in `seeds` order.
pub fn train_seeds(order: &Order, config: &TrainConfig, seeds: &[u64]) -> Vec<Result<TrainOutcome>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = TrainConfig {
                    seed,
                    ..config.clone()
                };
                scope.spawn(move || train(order, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub plan: CutPlan,
    pub sections: usize,
    pub feasible_exact: bool,
    pub waste: f64,
    pub total_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub episodes: usize,
    pub feasible_exact_rate: f64,
    pub mean_sections: f64,
    pub min_sections: usize,
    pub max_sections: usize,
    pub mean_waste: f64,
    pub mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rollouts: Vec<RolloutSummary>,
    pub summary: EvaluationSummary,
}

/// Greedy rollouts of a fixed policy: no epsilon, no noise.
pub fn evaluate(
    params: &PolicyParams,
    order: &Order,
    env_cfg: &EnvConfig,
    episodes: usize,
    amplitude: bool,
    seed: u64,
) -> Result<EvaluationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ou = OuNoise::new(order.n_sizes(), Default::default())?;
    let mut rollouts = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let trace = run_episode(
            order,
            params,
            env_cfg,
            RolloutMode::greedy(amplitude),
            &mut ou,
            &mut rng,
        )?;
        let plan = trace.plan();
        rollouts.push(RolloutSummary {
            sections: plan.len(),
            feasible_exact: validate_plan(&plan, order).feasible_exact,
            waste: waste(&plan, order)?,
            total_reward: trace.total_reward,
            plan,
        });
    }
    let n = rollouts.len().max(1) as f64;
    let summary = EvaluationSummary {
        episodes: rollouts.len(),
        feasible_exact_rate: rollouts.iter().filter(|r| r.feasible_exact).count() as f64 / n,
        mean_sections: rollouts.iter().map(|r| r.sections as f64).sum::<f64>() / n,
        min_sections: rollouts.iter().map(|r| r.sections).min().unwrap_or(0),
        max_sections: rollouts.iter().map(|r| r.sections).max().unwrap_or(0),
        mean_waste: rollouts.iter().map(|r| r.waste).sum::<f64>() / n,
        mean_reward: rollouts.iter().map(|r| r.total_reward).sum::<f64>() / n,
    };
    Ok(EvaluationReport { rollouts, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::greedy_plan;

    fn quick_config(episodes: u32) -> TrainConfig {
        TrainConfig {
            episodes,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn returns_examples() {
        assert_eq!(returns(&[1.0, 1.0, 1.0], 0.0), vec![1.0, 1.0, 1.0]);
        assert_eq!(returns(&[0.0, 0.0, 1.0], 0.5), vec![0.25, 0.5, 1.0]);
        assert_eq!(returns(&[0.0; 4], 0.9), vec![0.0; 4]);
        assert!(returns(&[], 0.9).is_empty());
    }

    fn one_step_trace(p: f64, selected: [bool; 6], eligible: [bool; 6]) -> EpisodeTrace {
        let params = PolicyParams::zeros(NetDims::for_sizes(6));
        let (_, cache) = policy_step(&[1.0; 6], &NetState::zeros(64), &params).unwrap();
        EpisodeTrace {
            steps: vec![StepRecord {
                features: vec![1.0; 6],
                policy_probs: vec![p; 6],
                final_probs: vec![p; 6],
                mode: SampleMode::Exploit,
                section: Section::new(1, selected.iter().map(|&s| s as u32).collect()),
                selected: selected.to_vec(),
                eligible: eligible.to_vec(),
                reward: 0.0,
                cache,
            }],
            total_reward: 0.0,
            final_state: EnvState {
                remaining: vec![0; 6],
                step_index: 1,
            },
        }
    }

    #[test]
    fn loss_examples() {
        let sel = [true, true, true, false, false, false];
        let trace = one_step_trace(0.5, sel, [true; 6]);
        let (loss, grads) = policy_loss(&trace, &[1.0]).unwrap();
        assert!((loss - (-6.0 * 0.5f64.ln())).abs() < 1e-12);
        assert!((loss - 4.1589).abs() < 1e-4);
        assert_eq!(grads[0], vec![-2.0, -2.0, -2.0, 2.0, 2.0, 2.0]);

        let (zero, zgrads) = policy_loss(&trace, &[0.0]).unwrap();
        assert_eq!(zero, 0.0);
        assert!(zgrads[0].iter().all(|&g| g == 0.0));

        let (double, dgrads) = policy_loss(&trace, &[2.0]).unwrap();
        assert!((double - 2.0 * loss).abs() < 1e-12);
        for (a, b) in dgrads[0].iter().zip(&grads[0]) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn ineligible_sizes_do_not_contribute() {
        let trace = one_step_trace(
            0.5,
            [true, false, false, false, false, false],
            [true, true, false, false, false, false],
        );
        let (loss, grads) = policy_loss(&trace, &[1.0]).unwrap();
        assert!((loss - (-2.0 * 0.5f64.ln())).abs() < 1e-12);
        assert_eq!(&grads[0][2..], &[0.0; 4]);
    }

    #[test]
    fn saturated_probabilities_are_clamped() {
        let trace = one_step_trace(1.0, [true, false, true, true, true, true], [true; 6]);
        let (loss, grads) = policy_loss(&trace, &[1.0]).unwrap();
        assert!(loss.is_finite());
        assert!((loss - (-(PROB_CLAMP).ln())).abs() < 1e-6);
        assert!(grads[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn normalizer_standardizes() {
        let mut n = ReturnNormalizer::new(2);
        assert_eq!(n.advantages(&[0.5]), vec![0.5]);
        n.push(vec![1.0, 3.0]);
        // one stored episode: baseline only, unit scale
        assert_eq!(n.advantages(&[4.0, 3.0]), vec![3.0, 0.0]);
        n.push(vec![2.0]);
        // b = [1.5, 3], residuals [-0.5, 0, 0.5] → std √(1/6)
        assert_eq!(n.baseline(0), 1.5);
        assert!((n.scale() - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
        n.push(vec![2.0]);
        // window keeps only the last two episodes
        assert_eq!(n.baseline(0), 2.0);
        assert_eq!(n.baseline(1), 0.0);
        assert_eq!(n.scale(), 1e-8);
        assert_eq!(n.advantages(&[2.0]), vec![0.0]);
    }

    #[test]
    fn constant_rewards_give_zero_gradient() {
        // Every episode cuts the same single-size order in one step, so the
        // return is constant and the standardized advantage vanishes.
        let order = Order::uniform(vec![5], 3.0, 9.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = PolicyParams::init(NetDims::for_sizes(1), &mut rng);
        let mut ou = OuNoise::new(1, Default::default()).unwrap();
        let mut norm = ReturnNormalizer::new(10);
        let mode = RolloutMode {
            epsilon: 0.5,
            noise: true,
            amplitude: true,
        };
        for episode in 0..4 {
            let trace = run_episode(&order, &params, &EnvConfig::default(), mode, &mut ou, &mut rng)
                .unwrap();
            let g = returns(&trace.rewards(), 0.99);
            let adv = norm.advantages(&g);
            norm.push(g);
            if episode == 0 {
                continue;
            }
            let (loss, dprobs) = policy_loss(&trace, &adv).unwrap();
            assert_eq!(loss, 0.0);
            let caches: Vec<_> = trace.steps.iter().map(|s| s.cache.clone()).collect();
            let grad = episode_backward(&caches, &dprobs, &params).unwrap();
            assert!(grad.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn random_rollouts_finish_within_six_steps() {
        let order = Order::reference();
        let params = PolicyParams::zeros(NetDims::for_sizes(6));
        let mut ou = OuNoise::new(6, Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mode = RolloutMode {
            epsilon: 1.0,
            noise: true,
            amplitude: true,
        };
        for _ in 0..50 {
            let trace = run_episode(&order, &params, &EnvConfig::default(), mode, &mut ou, &mut rng)
                .unwrap();
            assert!(trace.steps.len() <= 6);
            assert!(trace.fulfilled());
            assert!(validate_plan(&trace.plan(), &order).feasible_exact);
            assert!(trace.steps.iter().all(|s| s.mode == SampleMode::Explore));
        }
    }

    #[test]
    fn zero_demand_episode_has_no_steps() {
        let order = Order::uniform(vec![0, 0, 0], 3.0, 9.0).unwrap();
        let params = PolicyParams::zeros(NetDims::for_sizes(3));
        let mut ou = OuNoise::new(3, Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace = run_episode(
            &order,
            &params,
            &EnvConfig::default(),
            RolloutMode::greedy(true),
            &mut ou,
            &mut rng,
        )
        .unwrap();
        assert!(trace.steps.is_empty());
        assert_eq!(trace.total_reward, 0.0);
    }

    #[test]
    fn rollouts_are_seeded() {
        let order = Order::reference();
        let params = PolicyParams::init(NetDims::for_sizes(6), &mut ChaCha8Rng::seed_from_u64(2));
        let mode = RolloutMode {
            epsilon: 0.5,
            noise: true,
            amplitude: true,
        };
        let run = |seed| {
            let mut ou = OuNoise::new(6, Default::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_episode(&order, &params, &EnvConfig::default(), mode, &mut ou, &mut rng).unwrap()
        };
        assert_eq!(run(4), run(4));
    }

    #[test]
    fn untrained_policy_reproduces_greedy() {
        let order = Order::reference();
        let params = PolicyParams::zeros(NetDims::for_sizes(6));
        let report = evaluate(&params, &order, &EnvConfig::default(), 3, true, 0).unwrap();
        for r in &report.rollouts {
            assert_eq!(r.plan, greedy_plan(&order));
            assert!(r.feasible_exact);
        }
        assert_eq!(report.summary.feasible_exact_rate, 1.0);
        assert_eq!(report.summary.max_sections, 6);
    }

    #[test]
    fn single_episode_run() {
        let out = train(&Order::reference(), &quick_config(1)).unwrap();
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics.records[0].epsilon, 1.0);
        assert_eq!(out.best.episode, 0);
        assert_eq!(out.last.episode, 1);
        assert_eq!(out.last.adam.as_ref().unwrap().t, 1);
    }

    #[test]
    fn training_is_reproducible() {
        let order = Order::reference();
        let a = train(&order, &quick_config(20)).unwrap();
        let b = train(&order, &quick_config(20)).unwrap();
        assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let out = train(&Order::reference(), &quick_config(5)).unwrap();
        let csv = out.metrics.to_csv();
        assert!(csv.starts_with("episode,total_reward,loss,epsilon,steps\n"));
        assert_eq!(TrainMetrics::from_csv(&csv).unwrap(), out.metrics);
        assert!(TrainMetrics::from_csv("bad\n").is_err());
    }

    #[test]
    fn config_validation() {
        let order = Order::reference();
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate(&order).is_ok());
        cfg.gamma = 1.5;
        assert!(cfg.validate(&order).is_err());
        let cfg = TrainConfig {
            episodes: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(&order).is_err());
        let cfg = TrainConfig {
            env: EnvConfig {
                max_steps: 3,
                ..EnvConfig::default()
            },
            ..TrainConfig::default()
        };
        assert!(cfg.validate(&order).is_err());
    }

    #[test]
    fn gradient_check_small() {
        let report = gradient_check(1, 60).unwrap();
        assert_eq!(report.probes, 60);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
