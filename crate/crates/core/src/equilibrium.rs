//! Discounted empirical joint play and correlated-equilibrium membership.
//!
//! Joint action profiles are encoded in mixed radix: player 0 is the least
//! significant digit. Checking membership enumerates every player, every
//! ordered pair of that player's actions, and every opponent profile.

use crate::regret::{Action, LearnerParams, RegretError, RegretState, StageObservation, StepSize};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest joint action space an [`EmpiricalPlay`] will materialize.
pub const MAX_SUPPORT: usize = 1 << 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("joint profile {0:?} is outside the support")]
    ProfileOutOfRange(Vec<usize>),
    #[error("joint action space of size {0} exceeds the limit of {MAX_SUPPORT}")]
    SupportTooLarge(usize),
    #[error("distribution is not normalized (sum = {0})")]
    NotNormalized(f64),
    #[error("distribution has {got} entries, game has {want} profiles")]
    SizeMismatch { got: usize, want: usize },
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("invalid step size: {0}")]
    InvalidStep(String),
    #[error(transparent)]
    Learner(#[from] RegretError),
}

pub type Result<T> = std::result::Result<T, EquilibriumError>;

/// Mixed-radix indexing of joint action profiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSpace {
    action_counts: Vec<usize>,
    size: usize,
}

impl JointSpace {
    pub fn new(action_counts: Vec<usize>) -> Result<Self> {
        if action_counts.is_empty() || action_counts.iter().any(|&c| c == 0) {
            return Err(EquilibriumError::InvalidGame(
                "every player needs at least one action".into(),
            ));
        }
        let size = action_counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .unwrap_or(usize::MAX);
        if size > MAX_SUPPORT {
            return Err(EquilibriumError::SupportTooLarge(size));
        }
        Ok(Self { action_counts, size })
    }

    pub fn binary(players: usize) -> Result<Self> {
        Self::new(vec![2; players])
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn index_of(&self, profile: &[usize]) -> Result<usize> {
        if profile.len() != self.action_counts.len()
            || profile.iter().zip(&self.action_counts).any(|(&a, &c)| a >= c)
        {
            return Err(EquilibriumError::ProfileOutOfRange(profile.to_vec()));
        }
        let mut index = 0;
        for (&a, &c) in profile.iter().zip(&self.action_counts).rev() {
            index = index * c + a;
        }
        Ok(index)
    }

    pub fn profile_of(&self, mut index: usize) -> Vec<usize> {
        self.action_counts
            .iter()
            .map(|&c| {
                let a = index % c;
                index /= c;
                a
            })
            .collect()
    }

    /// Index of `profile` with player `player`'s action replaced by `action`.
    pub fn with_action(&self, index: usize, player: usize, action: usize) -> usize {
        let stride: usize = self.action_counts[..player].iter().product();
        let current = (index / stride) % self.action_counts[player];
        index - current * stride + action * stride
    }

    pub fn action_at(&self, index: usize, player: usize) -> usize {
        let stride: usize = self.action_counts[..player].iter().product();
        (index / stride) % self.action_counts[player]
    }
}

/// A finite normal-form game given by its full utility tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGame {
    space: JointSpace,
    /// `utilities[profile_index][player]`.
    utilities: Vec<Vec<f64>>,
}

impl FiniteGame {
    pub fn new(action_counts: Vec<usize>, utilities: Vec<Vec<f64>>) -> Result<Self> {
        let space = JointSpace::new(action_counts)?;
        if utilities.len() != space.size() {
            return Err(EquilibriumError::SizeMismatch {
                got: utilities.len(),
                want: space.size(),
            });
        }
        if utilities
            .iter()
            .any(|u| u.len() != space.num_players() || u.iter().any(|x| !x.is_finite()))
        {
            return Err(EquilibriumError::InvalidGame(
                "utility tensor must be fully populated with finite values".into(),
            ));
        }
        Ok(Self { space, utilities })
    }

    /// Builds a game by evaluating `utility(profile)` on every profile.
    pub fn from_fn(action_counts: Vec<usize>, mut utility: impl FnMut(&[usize]) -> Vec<f64>) -> Result<Self> {
        let space = JointSpace::new(action_counts.clone())?;
        let utilities = (0..space.size()).map(|i| utility(&space.profile_of(i))).collect();
        Self::new(action_counts, utilities)
    }

    /// The game of chicken with actions (dare = 0, yield = 1).
    pub fn chicken() -> Self {
        Self::from_fn(vec![2, 2], |p| match (p[0], p[1]) {
            (0, 0) => vec![0.0, 0.0],
            (0, 1) => vec![7.0, 2.0],
            (1, 0) => vec![2.0, 7.0],
            _ => vec![6.0, 6.0],
        })
        .expect("chicken fixture is well formed")
    }

    pub fn space(&self) -> &JointSpace {
        &self.space
    }

    pub fn utility(&self, profile_index: usize, player: usize) -> f64 {
        self.utilities[profile_index][player]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeReport {
    pub is_ce: bool,
    /// Largest expected gain from any unilateral recommendation deviation.
    pub max_violation: f64,
}

/// Checks the correlated-equilibrium inequalities for `distribution`.
pub fn ce_check(distribution: &[f64], game: &FiniteGame, tol: f64) -> Result<CeReport> {
    let space = game.space();
    if distribution.len() != space.size() {
        return Err(EquilibriumError::SizeMismatch {
            got: distribution.len(),
            want: space.size(),
        });
    }
    let total: f64 = distribution.iter().sum();
    if (total - 1.0).abs() > 1e-9 || distribution.iter().any(|&m| !(m >= 0.0)) {
        return Err(EquilibriumError::NotNormalized(total));
    }
    let mut max_violation = f64::NEG_INFINITY;
    for player in 0..space.num_players() {
        let actions = space.action_counts()[player];
        // gains[a][b] = Σ π(a, a_-i)·[u(b, a_-i) - u(a, a_-i)]
        let mut gains = vec![vec![0.0; actions]; actions];
        for (index, &mass) in distribution.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let a = space.action_at(index, player);
            let base = game.utility(index, player);
            for (b, gain) in gains[a].iter_mut().enumerate() {
                if b != a {
                    let deviated = space.with_action(index, player, b);
                    *gain += mass * (game.utility(deviated, player) - base);
                }
            }
        }
        for (a, row) in gains.iter().enumerate() {
            for (b, &g) in row.iter().enumerate() {
                if a != b {
                    max_violation = max_violation.max(g);
                }
            }
        }
    }
    if max_violation == f64::NEG_INFINITY {
        // single-action players only: nothing to deviate to
        max_violation = 0.0;
    }
    Ok(CeReport {
        is_ce: max_violation <= tol,
        max_violation,
    })
}

/// Maximum violations sampled every `stride` entries of a trace
/// (entries `0, stride, 2·stride, ...`), paired with 1-based stage numbers.
pub fn ce_violation_series(trace: &[Vec<f64>], game: &FiniteGame, stride: usize) -> Result<Vec<(usize, f64)>> {
    let stride = stride.max(1);
    trace
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(i, z)| Ok((i + 1, ce_check(z, game, 0.0)?.max_violation)))
        .collect()
}

/// Discounted frequency of realized joint profiles for a fixed player set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPlay {
    space: JointSpace,
    players: Vec<usize>,
    step: StepSize,
    updates: u64,
    distribution: Vec<f64>,
}

impl EmpiricalPlay {
    /// Starts from the uniform distribution over the joint space.
    pub fn new(space: JointSpace, players: Vec<usize>, step: StepSize) -> Result<Self> {
        if players.len() != space.num_players() {
            return Err(EquilibriumError::InvalidGame(format!(
                "{} player ids for a {}-player space",
                players.len(),
                space.num_players()
            )));
        }
        if let StepSize::Constant(eps) = step {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(EquilibriumError::InvalidStep(format!("{eps}")));
            }
        }
        let size = space.size();
        Ok(Self {
            space,
            players,
            step,
            updates: 0,
            distribution: vec![1.0 / size as f64; size],
        })
    }

    pub fn with_distribution(mut self, distribution: Vec<f64>) -> Result<Self> {
        if distribution.len() != self.space.size() {
            return Err(EquilibriumError::SizeMismatch {
                got: distribution.len(),
                want: self.space.size(),
            });
        }
        let total: f64 = distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 || distribution.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
            return Err(EquilibriumError::NotNormalized(total));
        }
        self.distribution = distribution;
        Ok(self)
    }

    pub fn players(&self) -> &[usize] {
        &self.players
    }

    pub fn space(&self) -> &JointSpace {
        &self.space
    }

    pub fn distribution(&self) -> &[f64] {
        &self.distribution
    }

    pub fn update(&mut self, profile: &[usize]) -> Result<()> {
        let index = self.space.index_of(profile)?;
        self.update_index(index)
    }

    /// `z ← (1-ε)z + ε·1{played}`.
    pub fn update_index(&mut self, index: usize) -> Result<()> {
        if index >= self.space.size() {
            return Err(EquilibriumError::ProfileOutOfRange(self.space.profile_of(index)));
        }
        self.updates += 1;
        let eps = match self.step {
            StepSize::Constant(eps) => eps,
            StepSize::Decaying => 1.0 / self.updates as f64,
        };
        if eps == 1.0 {
            self.distribution.iter_mut().for_each(|m| *m = 0.0);
            self.distribution[index] = 1.0;
            return Ok(());
        }
        let keep = 1.0 - eps;
        for m in self.distribution.iter_mut() {
            *m *= keep;
        }
        self.distribution[index] += eps;
        // fold accumulated rounding back into the played cell
        let total: f64 = self.distribution.iter().sum();
        self.distribution[index] += 1.0 - total;
        Ok(())
    }
}

/// Result of repeated play of a matrix game by independent regret learners.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameOutcome {
    pub play: EmpiricalPlay,
    pub learners: Vec<RegretState>,
    pub max_violation: f64,
}

/// Repeats a game whose players all have the two actions {drop, forward}
/// (action index 0 and 1) for `stages` rounds. Every player runs its own
/// proxy-regret learner with `params`; the empirical joint play uses the
/// same step schedule. One generator seeded with `seed` draws the actions,
/// player 0 first.
pub fn learn_matrix_game(game: &FiniteGame, params: LearnerParams, stages: u64, seed: u64) -> Result<MatrixGameOutcome> {
    let space = game.space().clone();
    if space.action_counts().iter().any(|&c| c != 2) {
        return Err(EquilibriumError::InvalidGame("learners need exactly two actions per player".into()));
    }
    let players = space.num_players();
    let mut learners = (0..players)
        .map(|_| RegretState::new(params))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut play = EmpiricalPlay::new(space.clone(), (0..players).collect(), params.step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut profile = vec![0; players];
    for _ in 0..stages {
        for (slot, learner) in profile.iter_mut().zip(&learners) {
            *slot = learner.sample(&mut rng).index();
        }
        let index = space.index_of(&profile)?;
        for (player, learner) in learners.iter_mut().enumerate() {
            let utility = game.utility(index, player);
            learner.update(StageObservation {
                action: Action::from_index(profile[player]),
                utility,
                reward: utility,
                scaled_expected_cost: None,
            })?;
        }
        play.update_index(index)?;
    }
    let max_violation = ce_check(play.distribution(), game, 0.0)?.max_violation;
    Ok(MatrixGameOutcome {
        play,
        learners,
        max_violation,
    })
}
