//! Exploration: Ornstein–Uhlenbeck noise on the action scores, a decaying
//! epsilon-greedy override, and amplitude normalization of the final scores.
//!
//! The stages compose in a fixed order:
//!
//! ```text
//! policy scores -> + OU noise, clamp to [0, 1] -> epsilon override -> amplitudes -> decode
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ornstein–Uhlenbeck noise, one independent lane per action dimension,
/// advanced with the Euler–Maruyama step
/// `x' = x + θ(μ - x)dt + σ√dt · z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    pub x: Vec<f64>,
    pub mu: f64,
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
}

/// OU constants without the state vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub mu: f64,
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        OuParams {
            mu: 0.001,
            theta: 0.15,
            sigma: 0.2,
            dt: 0.01,
        }
    }
}

impl OuParams {
    pub fn validate(&self) -> Result<()> {
        let rate = self.theta * self.dt;
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::Config(format!(
                "ou.theta * ou.dt must lie in (0, 1), got {rate}"
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("ou.sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) || !self.mu.is_finite() {
            return Err(Error::Config("ou.dt must be > 0 and ou.mu finite".into()));
        }
        Ok(())
    }

    /// Standard deviation of the continuous-time stationary law, `σ/√(2θ)`.
    pub fn stationary_std(&self) -> f64 {
        self.sigma / (2.0 * self.theta).sqrt()
    }

    /// One-step autocorrelation of the discretized process, `1 - θ·dt`.
    pub fn lag1_autocorrelation(&self) -> f64 {
        1.0 - self.theta * self.dt
    }
}

impl OuNoise {
    /// Fresh process of `lanes` dimensions sitting at the mean.
    pub fn new(lanes: usize, params: OuParams) -> Result<Self> {
        params.validate()?;
        Ok(OuNoise {
            x: vec![params.mu; lanes],
            mu: params.mu,
            theta: params.theta,
            sigma: params.sigma,
            dt: params.dt,
        })
    }

    pub fn params(&self) -> OuParams {
        OuParams {
            mu: self.mu,
            theta: self.theta,
            sigma: self.sigma,
            dt: self.dt,
        }
    }

    /// Advances every lane with a fresh standard normal draw.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for i in 0..self.x.len() {
            let z: f64 = rng.sample(StandardNormal);
            self.x[i] = self.next(self.x[i], z);
        }
        &self.x
    }

    /// Advances every lane with caller-supplied normal draws.
    pub fn step_with(&mut self, z: &[f64]) -> &[f64] {
        assert_eq!(z.len(), self.x.len(), "one draw per lane");
        for (i, &z) in z.iter().enumerate() {
            self.x[i] = self.next(self.x[i], z);
        }
        &self.x
    }

    fn next(&self, x: f64, z: f64) -> f64 {
        x + self.theta * (self.mu - x) * self.dt + self.sigma * self.dt.sqrt() * z
    }

    /// Puts every lane back at the mean.
    pub fn reset(&mut self) {
        let mu = self.mu;
        self.x.iter_mut().for_each(|x| *x = mu);
    }
}

/// Empirical moments of a simulated OU run next to their closed forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub steps: usize,
    pub lanes: usize,
    pub mean: f64,
    pub std: f64,
    pub lag1: f64,
    pub expected_mean: f64,
    pub expected_std: f64,
    pub expected_lag1: f64,
}

impl NoiseStats {
    pub fn mean_error(&self) -> f64 {
        (self.mean - self.expected_mean).abs()
    }

    pub fn std_rel_error(&self) -> f64 {
        (self.std - self.expected_std).abs() / self.expected_std
    }

    pub fn lag1_error(&self) -> f64 {
        (self.lag1 - self.expected_lag1).abs()
    }

    /// Mean within 0.01, std within 5 %, lag-1 autocorrelation within 0.01.
    pub fn within_tolerance(&self) -> bool {
        self.mean_error() <= 0.01 && self.std_rel_error() <= 0.05 && self.lag1_error() <= 0.01
    }
}

/// Runs `steps` updates of a `lanes`-wide process from the mean and pools the
/// per-lane sample moments.
pub fn noise_stats<R: Rng + ?Sized>(
    params: OuParams,
    lanes: usize,
    steps: usize,
    rng: &mut R,
) -> Result<NoiseStats> {
    if steps < 2 || lanes == 0 {
        return Err(Error::Degenerate("need at least two steps and one lane".into()));
    }
    let mut ou = OuNoise::new(lanes, params)?;
    let mut series = vec![Vec::with_capacity(steps); lanes];
    for _ in 0..steps {
        for (lane, &x) in series.iter_mut().zip(ou.step(rng)) {
            lane.push(x);
        }
    }
    let count = (lanes * steps) as f64;
    let mean = series.iter().flatten().sum::<f64>() / count;
    let var = series.iter().flatten().map(|x| (x - mean).powi(2)).sum::<f64>() / count;
    let mut cross = 0.0;
    for lane in &series {
        cross += lane
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>();
    }
    let lag1 = cross / (lanes * (steps - 1)) as f64 / var;
    Ok(NoiseStats {
        steps,
        lanes,
        mean,
        std: var.sqrt(),
        lag1,
        expected_mean: params.mu,
        expected_std: params.stationary_std(),
        expected_lag1: params.lag1_autocorrelation(),
    })
}

/// Exploration rate decaying geometrically per episode down to a floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            decay: 0.995,
            floor: 0.1,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.start)
            && (0.0..=self.start).contains(&self.floor)
            && self.decay > 0.0
            && self.decay < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "epsilon schedule needs 0 <= floor <= start <= 1 and 0 < decay < 1, got {self:?}"
            )))
        }
    }

    /// `max(floor, start · decay^k)`.
    pub fn epsilon_at(&self, episode: u32) -> f64 {
        let k = i32::try_from(episode).unwrap_or(i32::MAX);
        (self.start * self.decay.powi(k)).max(self.floor)
    }
}

/// Non-negative amplitudes with unit Euclidean norm; the sampling weight of
/// entry `i` is `alpha_i²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Amplitudes {
    alpha: Vec<f64>,
}

impl Amplitudes {
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a * a).collect()
    }
}

/// Scales `raw` onto the unit sphere.
pub fn to_amplitudes(raw: &[f64]) -> Result<Amplitudes> {
    if raw.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::Degenerate(
            "amplitude weights must be finite and non-negative".into(),
        ));
    }
    // Rescale by the largest entry first so squaring cannot overflow or
    // underflow to zero.
    let top = raw.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Err(Error::Degenerate("all amplitude weights are zero".into()));
    }
    let scaled: Vec<f64> = raw.iter().map(|r| r / top).collect();
    let norm = scaled.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(Amplitudes {
        alpha: scaled.iter().map(|s| s / norm).collect(),
    })
}

/// Which stages of the exploration pipeline are active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub ou: OuParams,
    pub ou_enabled: bool,
    pub epsilon: EpsilonSchedule,
    pub epsilon_enabled: bool,
    pub amplitude_enabled: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            ou: OuParams::default(),
            ou_enabled: true,
            epsilon: EpsilonSchedule::default(),
            epsilon_enabled: true,
            amplitude_enabled: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Exploit,
    Explore,
}

/// Applies OU noise, the epsilon override, and (optionally) amplitude
/// normalization to the policy's scores.
///
/// `noise` is the current OU state, or `None` when noise is disabled. The
/// epsilon coin is always drawn so that the random stream does not depend on
/// which branch is taken.
pub fn perturb_and_select<R: Rng + ?Sized>(
    probs: &[f64],
    eps: f64,
    noise: Option<&[f64]>,
    amplitude: bool,
    rng: &mut R,
) -> (Vec<f64>, SampleMode) {
    let mut out: Vec<f64> = match noise {
        Some(x) => probs
            .iter()
            .zip(x)
            .map(|(p, n)| (p + n).clamp(0.0, 1.0))
            .collect(),
        None => probs.to_vec(),
    };
    let coin: f64 = rng.random();
    let mode = if coin < eps {
        for v in out.iter_mut() {
            *v = open_unit(rng);
        }
        SampleMode::Explore
    } else {
        SampleMode::Exploit
    };
    if amplitude {
        if let Ok(amp) = to_amplitudes(&out) {
            out = amp.probabilities();
        }
    }
    (out, mode)
}

/// Uniform draw from the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ou_drift_only() {
        let mut ou = OuNoise::new(6, OuParams::default()).unwrap();
        ou.x = vec![0.0; 6];
        ou.step_with(&[0.0; 6]);
        for &x in &ou.x {
            assert!((x - 1.5e-6).abs() < 1e-18);
        }
    }

    #[test]
    fn ou_mean_is_fixed_point() {
        let mut ou = OuNoise::new(6, OuParams::default()).unwrap();
        ou.step_with(&[0.0; 6]);
        assert_eq!(ou.x, vec![0.001; 6]);
    }

    #[test]
    fn ou_reset_returns_to_mean() {
        let mut ou = OuNoise::new(6, OuParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            ou.step(&mut rng);
        }
        ou.reset();
        assert_eq!(ou.x, vec![0.001; 6]);
        let again = ou.clone();
        ou.reset();
        assert_eq!(ou, again);
        ou.step_with(&[0.0; 6]);
        assert_eq!(ou.x, vec![0.001; 6]);
    }

    #[test]
    fn ou_rejects_bad_params() {
        let bad = OuParams {
            theta: 200.0,
            ..OuParams::default()
        };
        assert!(OuNoise::new(1, bad).is_err());
        let neg = OuParams {
            sigma: -1.0,
            ..OuParams::default()
        };
        assert!(OuNoise::new(1, neg).is_err());
    }

    #[test]
    fn closed_form_moments() {
        let p = OuParams::default();
        assert!((p.stationary_std() - 0.3651).abs() < 1e-4);
        assert!((p.lag1_autocorrelation() - 0.9985).abs() < 1e-15);
    }

    #[test]
    fn epsilon_examples() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.epsilon_at(0), 1.0);
        assert_eq!(s.epsilon_at(1), 0.995);
        assert_eq!(s.epsilon_at(1000), 0.1);
        assert!(0.995f64.powi(1000) < 0.1);
        // First episode at the floor, from the closed form.
        let first = (0..2000).find(|&k| s.epsilon_at(k) == 0.1).unwrap();
        assert!(0.995f64.powi(first as i32) <= 0.1);
        assert!(0.995f64.powi(first as i32 - 1) > 0.1);
        assert_eq!(first, 460);
    }

    #[test]
    fn epsilon_schedule_validation() {
        assert!(EpsilonSchedule::default().validate().is_ok());
        let bad = EpsilonSchedule {
            floor: 0.5,
            start: 0.2,
            decay: 0.9,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn amplitude_examples() {
        let p = to_amplitudes(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap().probabilities();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p = to_amplitudes(&[3.0, 4.0]).unwrap().probabilities();
        assert!((p[0] - 0.36).abs() < 1e-15 && (p[1] - 0.64).abs() < 1e-15);
        let p = to_amplitudes(&[0.7; 6]).unwrap().probabilities();
        for q in p {
            assert!((q - 1.0 / 6.0).abs() < 1e-15);
        }
        assert!(matches!(to_amplitudes(&[0.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(to_amplitudes(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn amplitudes_survive_extreme_scales() {
        let p = to_amplitudes(&[1e-200, 2e-200]).unwrap().probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = to_amplitudes(&[1e200, 1e200]).unwrap().probabilities();
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perturb_identity_without_exploration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probs = [0.2, 0.9, 0.4];
        let (out, mode) = perturb_and_select(&probs, 0.0, Some(&[0.0; 3]), false, &mut rng);
        assert_eq!(out, probs.to_vec());
        assert_eq!(mode, SampleMode::Exploit);
    }

    #[test]
    fn perturb_full_exploration_ignores_policy() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let (x, mode) = perturb_and_select(&[0.9; 4], 1.0, None, false, &mut a);
        let (y, _) = perturb_and_select(&[0.1; 4], 1.0, None, false, &mut b);
        assert_eq!(mode, SampleMode::Explore);
        assert_eq!(x, y);
        assert!(x.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn perturb_clamps_to_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (out, _) = perturb_and_select(&[0.9, 0.05], 0.0, Some(&[0.2, -0.2]), false, &mut rng);
        assert_eq!(out, vec![1.0, 0.0]);
    }

    #[test]
    fn perturb_with_amplitudes_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (out, _) = perturb_and_select(&[0.3, 0.6, 0.9], 0.0, None, true, &mut rng);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out[2] > out[1] && out[1] > out[0]);
    }
}
