//! Per-player regret-tracking learner over the binary action set
//! {drop, forward}.
//!
//! A learner keeps exponentially discounted sums of the utilities it has
//! actually received, importance-weighted "proxy" sums standing in for the
//! utilities of the action it did not play, and (for the CSI-enhanced
//! variant) a model-based forwarding-cost sum indexed over drop stages.
//! Regrets are the positive part of estimated-minus-actual, and the next
//! strategy switches away from the last action with probability proportional
//! to that regret, floored by an exploration term.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegretError {
    #[error("invalid learner parameter: {0}")]
    InvalidParameter(String),
    #[error("stage index must start at 1")]
    ZeroStage,
    #[error("invalid probability vector {0:?}")]
    InvalidDistribution(Vec<f64>),
    #[error("action {0:?} has zero play probability")]
    ZeroPlayProbability(Action),
    #[error("CSI estimate requested without an expected forwarding cost")]
    MissingExpectedCost,
}

pub type Result<T> = std::result::Result<T, RegretError>;

/// The two actions of the forwarding game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Drop = 0,
    Forward = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Drop, Action::Forward];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Drop
        } else {
            Action::Forward
        }
    }

    pub fn other(self) -> Self {
        match self {
            Action::Drop => Action::Forward,
            Action::Forward => Action::Drop,
        }
    }
}

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// Constant discount `ε`, for tracking a drifting environment.
    Constant(f64),
    /// `ε_n = 1/n`: uniform averaging, classical regret matching.
    Decaying,
}

/// How the potential utility of the unplayed action is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Bandit feedback only (RTB).
    Proxy,
    /// Model-based forwarding cost from channel state (Enhanced-RTB).
    Csi,
}

/// How regrets are formed from observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegretForm {
    /// `Q(a, b) = [Û(b) - U(a)]^+` from the discounted averages.
    Averaged,
    /// Per-stage positive-part recursion on `Q` directly (zero-knowledge only).
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerParams {
    pub step: StepSize,
    pub delta_explore: f64,
    pub mu: f64,
    pub alpha: f64,
    pub estimator: Estimator,
    pub form: RegretForm,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        if let StepSize::Constant(eps) = self.step {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(RegretError::InvalidParameter(format!(
                    "epsilon must lie in (0, 1], got {eps}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.delta_explore) {
            return Err(RegretError::InvalidParameter(format!(
                "delta_explore must lie in [0, 1), got {}",
                self.delta_explore
            )));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(RegretError::InvalidParameter(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(RegretError::InvalidParameter(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if self.estimator == Estimator::Csi && self.form == RegretForm::Recursive {
            return Err(RegretError::InvalidParameter(
                "the recursive regret form is defined for the proxy estimator only".into(),
            ));
        }
        Ok(())
    }

    /// `2·(1 + α·attempt_cap)`: twice a bound on the utility magnitude when
    /// at most `attempt_cap` transmissions are made per stage.
    pub fn auto_mu(alpha: f64, attempt_cap: u32) -> f64 {
        2.0 * (1.0 + alpha * attempt_cap as f64)
    }
}

/// Step size in effect at stage `n` (1-based).
pub fn effective_step(n: u64, step: StepSize) -> Result<f64> {
    if n == 0 {
        return Err(RegretError::ZeroStage);
    }
    Ok(match step {
        StepSize::Constant(eps) => eps,
        StepSize::Decaying => 1.0 / n as f64,
    })
}

/// Next strategy given the regret for switching away from `current`.
///
/// `σ(switch) = (1-δ)·min(Q/μ, 1/2) + δ/2`, `σ(current) = 1 - σ(switch)`.
pub fn strategy_from_regret(regret: f64, current: Action, delta_explore: f64, mu: f64) -> Result<[f64; 2]> {
    if !(mu > 0.0) {
        return Err(RegretError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let switch = (1.0 - delta_explore) * (regret.max(0.0) / mu).min(0.5) + delta_explore / 2.0;
    let mut strategy = [0.0; 2];
    strategy[current.other().index()] = switch;
    strategy[current.index()] = 1.0 - switch;
    Ok(strategy)
}

/// Draws an action from a probability vector over {drop, forward}.
pub fn sample_action<R: Rng + ?Sized>(strategy: &[f64; 2], rng: &mut R) -> Result<Action> {
    let valid = strategy.iter().all(|p| (0.0..=1.0).contains(p))
        && ((strategy[0] + strategy[1]) - 1.0).abs() < 1e-9;
    if !valid {
        return Err(RegretError::InvalidDistribution(strategy.to_vec()));
    }
    let u: f64 = rng.random();
    Ok(if u < strategy[1] { Action::Forward } else { Action::Drop })
}

/// One step of the recursive regret update for the ordered pair `(a, b)`:
///
/// `Q ← Q + ε([σ(a)/σ(b)·u·1{played=b} - u·1{played=a}]^+ - Q)`.
pub fn regret_update_recursive(
    previous: f64,
    a: Action,
    b: Action,
    utility: f64,
    played: Action,
    strategy: &[f64; 2],
    eps: f64,
) -> Result<f64> {
    debug_assert!(a != b);
    let mut bracket = 0.0;
    if played == b {
        let pb = strategy[b.index()];
        if !(pb > 0.0) {
            return Err(RegretError::ZeroPlayProbability(b));
        }
        bracket += strategy[a.index()] / pb * utility;
    }
    if played == a {
        bracket -= utility;
    }
    Ok((previous + eps * (bracket.max(0.0) - previous)).max(0.0))
}

/// What a learner observes when its stage expires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageObservation {
    pub action: Action,
    /// Realized utility `u`.
    pub utility: f64,
    /// Reward component `|N̂|/|N|` (equal to `utility` for a drop).
    pub reward: f64,
    /// `α·C̄` at this stage, required by the CSI estimator on drop stages.
    pub scaled_expected_cost: Option<f64>,
}

/// Learner state of one player.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretState {
    params: LearnerParams,
    /// `regrets[a][b]`: regret for not having played `b` instead of `a`.
    regrets: [[f64; 2]; 2],
    strategy: [f64; 2],
    stage: u64,
    last_action: Option<Action>,
    /// Discounted actual utility per action, `U(a)`.
    actual_avg: [f64; 2],
    /// Discounted importance-weighted utility per action, used as `Û(a)`
    /// when the other action is current.
    potential_avg: [f64; 2],
    /// Proxy-weighted reward-only sum over forward stages (CSI estimator).
    forward_reward_avg: f64,
    /// Discounted `α·C̄` sum over drop stages (CSI estimator).
    drop_cost_avg: f64,
}

impl RegretState {
    pub fn new(params: LearnerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            regrets: [[0.0; 2]; 2],
            strategy: [0.5, 0.5],
            stage: 0,
            last_action: None,
            actual_avg: [0.0; 2],
            potential_avg: [0.0; 2],
            forward_reward_avg: 0.0,
            drop_cost_avg: 0.0,
        })
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    pub fn strategy(&self) -> [f64; 2] {
        self.strategy
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn last_action(&self) -> Option<Action> {
        self.last_action
    }

    pub fn regret(&self, a: Action, b: Action) -> f64 {
        self.regrets[a.index()][b.index()]
    }

    pub fn actual_average(&self, a: Action) -> f64 {
        self.actual_avg[a.index()]
    }

    /// Current estimate `Û(b)` of the discounted utility of `b`.
    pub fn potential_average(&self, b: Action) -> f64 {
        match (self.params.estimator, b) {
            (Estimator::Csi, Action::Forward) => self.forward_reward_avg - self.drop_cost_avg,
            _ => self.potential_avg[b.index()],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        sample_action(&self.strategy, rng).expect("learner strategy is always a distribution")
    }

    /// Folds one expired stage into the learner and computes the next
    /// strategy. `obs.action` must have been drawn from [`Self::strategy`].
    pub fn update(&mut self, obs: StageObservation) -> Result<()> {
        let played = obs.action;
        let sigma = self.strategy;
        let p_played = sigma[played.index()];
        if !(p_played > 0.0) {
            return Err(RegretError::ZeroPlayProbability(played));
        }
        if self.params.estimator == Estimator::Csi
            && played == Action::Drop
            && obs.scaled_expected_cost.is_none()
        {
            return Err(RegretError::MissingExpectedCost);
        }

        let stage = self.stage + 1;
        let eps = effective_step(stage, self.params.step)?;
        let keep = 1.0 - eps;
        let weight = sigma[played.other().index()] / p_played;

        for v in self.actual_avg.iter_mut().chain(self.potential_avg.iter_mut()) {
            *v *= keep;
        }
        self.forward_reward_avg *= keep;
        self.drop_cost_avg *= keep;

        self.actual_avg[played.index()] += eps * obs.utility;
        self.potential_avg[played.index()] += eps * weight * obs.utility;
        match played {
            Action::Forward => self.forward_reward_avg += eps * weight * obs.reward,
            Action::Drop => {
                if let Some(cost) = obs.scaled_expected_cost {
                    self.drop_cost_avg += eps * cost;
                }
            }
        }

        match self.params.form {
            RegretForm::Averaged => {
                for a in Action::ALL {
                    let b = a.other();
                    self.regrets[a.index()][b.index()] =
                        (self.potential_average(b) - self.actual_avg[a.index()]).max(0.0);
                }
            }
            RegretForm::Recursive => {
                for a in Action::ALL {
                    let b = a.other();
                    let q = &mut self.regrets[a.index()][b.index()];
                    *q = regret_update_recursive(*q, a, b, obs.utility, played, &sigma, eps)?;
                }
            }
        }

        self.strategy = strategy_from_regret(
            self.regret(played, played.other()),
            played,
            self.params.delta_explore,
            self.params.mu,
        )?;
        self.stage = stage;
        self.last_action = Some(played);
        Ok(())
    }
}

/// Explicit (non-recursive) discounted sums over a recorded history.
///
/// These evaluate the defining sums term by term and serve as the reference
/// the recursive accumulators are checked against.
pub mod history {
    use super::{Action, RegretError, Result};

    /// One recorded stage.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct StageRecord {
        pub action: Action,
        pub utility: f64,
        pub reward: f64,
        /// Strategy in effect when `action` was drawn.
        pub strategy: [f64; 2],
        /// `α·C̄` recorded at this stage.
        pub scaled_expected_cost: f64,
    }

    fn discount(eps: f64, n: usize, eta: usize) -> f64 {
        eps * (1.0 - eps).powi((n - eta) as i32)
    }

    /// `Σ_{η: a_η = a} ε(1-ε)^{n-η} u_η`.
    pub fn discounted_actual_average(records: &[StageRecord], a: Action, eps: f64) -> f64 {
        let n = records.len();
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.action == a)
            .map(|(i, r)| discount(eps, n, i + 1) * r.utility)
            .sum()
    }

    /// `Û(1-a) = Σ_{η: a_η = 1-a} ε(1-ε)^{n-η} σ^η(a)/σ^η(1-a) u_η`.
    pub fn proxy_potential_average(records: &[StageRecord], a: Action, eps: f64) -> Result<f64> {
        let n = records.len();
        let b = a.other();
        let mut total = 0.0;
        for (i, r) in records.iter().enumerate().filter(|(_, r)| r.action == b) {
            let pb = r.strategy[b.index()];
            if !(pb > 0.0) {
                return Err(RegretError::ZeroPlayProbability(b));
            }
            total += discount(eps, n, i + 1) * r.strategy[a.index()] / pb * r.utility;
        }
        Ok(total)
    }

    /// `Û(forward)` with the cost term replaced by the recorded `α·C̄` over
    /// drop stages.
    pub fn csi_potential_average(records: &[StageRecord], eps: f64) -> Result<f64> {
        let n = records.len();
        let mut reward = 0.0;
        let mut cost = 0.0;
        for (i, r) in records.iter().enumerate() {
            let d = discount(eps, n, i + 1);
            match r.action {
                Action::Forward => {
                    let pf = r.strategy[1];
                    if !(pf > 0.0) {
                        return Err(RegretError::ZeroPlayProbability(Action::Forward));
                    }
                    reward += d * r.strategy[0] / pf * r.reward;
                }
                Action::Drop => cost += d * r.scaled_expected_cost,
            }
        }
        Ok(reward - cost)
    }
}

#[cfg(test)]
mod tests {
    use super::history::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(estimator: Estimator, form: RegretForm) -> LearnerParams {
        LearnerParams {
            step: StepSize::Constant(0.1),
            delta_explore: 0.05,
            mu: 0.2,
            alpha: 0.1,
            estimator,
            form,
        }
    }

    fn rec(action: Action, utility: f64, strategy: [f64; 2]) -> StageRecord {
        StageRecord {
            action,
            utility,
            reward: utility,
            strategy,
            scaled_expected_cost: 0.0,
        }
    }

    #[test]
    fn actual_average_examples() {
        assert_eq!(discounted_actual_average(&[], Action::Forward, 0.1), 0.0);
        let h = [rec(Action::Drop, 5.0, [0.5, 0.5]), rec(Action::Forward, 0.7, [0.5, 0.5])];
        assert_eq!(discounted_actual_average(&h, Action::Forward, 1.0), 0.7);
        let h = [rec(Action::Forward, 1.0, [0.5, 0.5]), rec(Action::Forward, 1.0, [0.5, 0.5])];
        assert!((discounted_actual_average(&h, Action::Forward, 0.1) - 0.19).abs() < 1e-15);
    }

    #[test]
    fn proxy_average_examples() {
        let h = [rec(Action::Drop, 1.0, [0.5, 0.5])];
        assert_eq!(proxy_potential_average(&h, Action::Drop, 0.1).unwrap(), 0.0);
        let h = [rec(Action::Drop, 0.5, [0.5, 0.5])];
        assert_eq!(proxy_potential_average(&h, Action::Forward, 1.0).unwrap(), 0.5);
        // a = forward, alternate drop played with σ(forward)=0.75, σ(drop)=0.25
        let h = [rec(Action::Drop, 1.0, [0.25, 0.75])];
        assert!((proxy_potential_average(&h, Action::Forward, 0.1).unwrap() - 0.3).abs() < 1e-15);
        let h = [rec(Action::Drop, 1.0, [0.0, 1.0])];
        assert!(proxy_potential_average(&h, Action::Forward, 0.1).is_err());
    }

    #[test]
    fn csi_average_examples() {
        assert_eq!(csi_potential_average(&[], 0.1).unwrap(), 0.0);
        let drop = StageRecord {
            action: Action::Drop,
            utility: 0.0,
            reward: 0.0,
            strategy: [0.5, 0.5],
            scaled_expected_cost: 0.1 * 2.0,
        };
        assert!((csi_potential_average(&[drop], 1.0).unwrap() + 0.2).abs() < 1e-15);
        let fwd = rec(Action::Forward, 1.0, [0.5, 0.5]);
        assert!((csi_potential_average(&[drop, fwd], 0.1).unwrap() - 0.082).abs() < 1e-15);
    }

    #[test]
    fn recursive_update_examples() {
        let s = [0.5, 0.5];
        let q = regret_update_recursive(0.3, Action::Drop, Action::Forward, 1.0, Action::Forward, &s, 0.0).unwrap();
        assert_eq!(q, 0.3);
        let q = regret_update_recursive(0.0, Action::Drop, Action::Forward, 1.0, Action::Drop, &s, 0.1).unwrap();
        assert_eq!(q, 0.0);
        let q = regret_update_recursive(0.0, Action::Drop, Action::Forward, 1.0, Action::Forward, &s, 0.1).unwrap();
        assert!((q - 0.1).abs() < 1e-15);
    }

    #[test]
    fn strategy_examples() {
        let s = strategy_from_regret(0.0, Action::Forward, 0.05, 0.2).unwrap();
        assert!((s[0] - 0.025).abs() < 1e-15 && (s[1] - 0.975).abs() < 1e-15);
        let s = strategy_from_regret(0.02, Action::Drop, 0.05, 0.2).unwrap();
        assert!((s[1] - 0.12).abs() < 1e-15);
        let s = strategy_from_regret(0.5, Action::Drop, 0.05, 0.2).unwrap();
        assert!((s[1] - 0.5).abs() < 1e-15);
        assert!(strategy_from_regret(0.1, Action::Drop, 0.05, 0.0).is_err());
    }

    #[test]
    fn step_examples() {
        assert_eq!(effective_step(17, StepSize::Constant(0.1)).unwrap(), 0.1);
        assert_eq!(effective_step(1, StepSize::Decaying).unwrap(), 1.0);
        assert_eq!(effective_step(4, StepSize::Decaying).unwrap(), 0.25);
        assert_eq!(effective_step(0, StepSize::Decaying), Err(RegretError::ZeroStage));
    }

    #[test]
    fn sampling_degenerate_and_invalid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(sample_action(&[1.0, 0.0], &mut rng).unwrap(), Action::Drop);
        }
        assert!(sample_action(&[0.7, 0.7], &mut rng).is_err());
        assert!(sample_action(&[-0.1, 1.1], &mut rng).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        for strategy in [[0.5, 0.5], [0.12, 0.88]] {
            let forwards = (0..n)
                .filter(|_| sample_action(&strategy, &mut rng).unwrap() == Action::Forward)
                .count();
            let f = forwards as f64 / n as f64;
            let se = (strategy[1] * strategy[0] / n as f64).sqrt();
            assert!((f - strategy[1]).abs() < 3.0 * se, "{f} vs {}", strategy[1]);
        }
    }

    #[test]
    fn params_validation() {
        let mut p = params(Estimator::Proxy, RegretForm::Averaged);
        assert!(p.validate().is_ok());
        p.mu = 0.0;
        assert!(p.validate().is_err());
        let p = params(Estimator::Csi, RegretForm::Recursive);
        assert!(RegretState::new(p).is_err());
        let mut p = params(Estimator::Proxy, RegretForm::Averaged);
        p.step = StepSize::Constant(0.0);
        assert!(p.validate().is_err());
        assert!((LearnerParams::auto_mu(0.3, 24) - 16.4).abs() < 1e-12);
    }

    #[test]
    fn zero_regret_keeps_exploration_floor() {
        let mut s = RegretState::new(params(Estimator::Proxy, RegretForm::Averaged)).unwrap();
        // The first forward stage leaves no proxy evidence for drop.
        s.update(StageObservation {
            action: Action::Forward,
            utility: 0.9,
            reward: 1.0,
            scaled_expected_cost: None,
        })
        .unwrap();
        assert_eq!(s.regret(Action::Forward, Action::Drop), 0.0);
        assert!((s.strategy()[0] - 0.025).abs() < 1e-15);
    }

    #[test]
    fn csi_requires_cost_on_drop() {
        let mut s = RegretState::new(params(Estimator::Csi, RegretForm::Averaged)).unwrap();
        let err = s.update(StageObservation {
            action: Action::Drop,
            utility: 0.5,
            reward: 0.5,
            scaled_expected_cost: None,
        });
        assert_eq!(err, Err(RegretError::MissingExpectedCost));
    }

    #[test]
    fn csi_drop_stage_records_scaled_cost() {
        let mut s = RegretState::new(params(Estimator::Csi, RegretForm::Averaged)).unwrap();
        s.update(StageObservation {
            action: Action::Drop,
            utility: 0.0,
            reward: 0.0,
            scaled_expected_cost: Some(0.1 * 3.0),
        })
        .unwrap();
        assert!((s.potential_average(Action::Forward) + 0.1 * 0.3).abs() < 1e-15);
    }
}
