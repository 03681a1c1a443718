//! Finite-state Markov model of a slow Rayleigh fading link.
//!
//! The SNR axis is cut into `K` bins `[Γ_k, Γ_{k+1})`. Each directed link
//! occupies one bin at a time and moves between circularly adjacent bins with
//! probability `sigma` per packet slot. Everything the learners and the
//! simulator need (bin masses, bin-conditional mean SNR, bin-averaged BPSK
//! bit-error rate, packet success probability) is derived here in closed form
//! for the exponential SNR density `g(γ) = e^{-γ/Γ̄} / Γ̄`.
//!
//! Bin indices are zero-based in this API; bin `k` here is state `s_{k+1}`.
//! SNR values are linear unless a name says `_db`.

use rand::Rng;
use thiserror::Error;

/// Numerator constant of the BPSK bit-error approximation `0.2·e^{-1.6γ}`.
pub const BER_SCALE: f64 = 0.2;
/// Exponent constant of the BPSK bit-error approximation `0.2·e^{-1.6γ}`.
pub const BER_EXPONENT: f64 = 1.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter: {0}")]
    InvalidParameter(String),
    #[error("bin index {index} out of range for {bins} bins")]
    IndexOutOfRange { index: usize, bins: usize },
    #[error("bin {0} has zero probability mass")]
    DegenerateBin(usize),
    #[error("neighbor {0} has zero success probability; expected transmissions diverge")]
    UnreachableNeighbor(usize),
    #[error("no finite quantile: delta = {0} cannot be reached with lossy links")]
    NoFiniteQuantile(f64),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Thresholds `Γ_1..Γ_{K+1}` giving every bin exponential mass exactly `1/K`.
///
/// `Γ_k = Γ̄·ln(K/(K-k+1))`, the inverse CDF of the exponential law evaluated
/// at `(k-1)/K`.
pub fn equal_probability_thresholds(num_bins: usize, mean_snr: f64) -> Result<Vec<f64>> {
    if num_bins == 0 {
        return Err(ChannelError::InvalidParameter("num_bins must be >= 1".into()));
    }
    if !(mean_snr > 0.0) || !mean_snr.is_finite() {
        return Err(ChannelError::InvalidParameter(format!(
            "mean_snr must be positive and finite, got {mean_snr}"
        )));
    }
    let k = num_bins as f64;
    let mut thresholds = Vec::with_capacity(num_bins + 1);
    thresholds.push(0.0);
    for i in 1..num_bins {
        // -ln(1 - i/K), written with ln_1p for accuracy on the low bins.
        thresholds.push(-mean_snr * (-(i as f64) / k).ln_1p());
    }
    thresholds.push(f64::INFINITY);
    Ok(thresholds)
}

/// Mass of the exponential density between `low` and `high`.
fn exp_mass(low: f64, high: f64, mean_snr: f64) -> f64 {
    let width = high - low;
    // e^{-low/Γ̄}·(1 - e^{-width/Γ̄}); the infinite upper edge gives e^{-low/Γ̄}.
    (-low / mean_snr).exp() * -(-width / mean_snr).exp_m1()
}

/// Static description of one fading regime: bin edges, transition speed and
/// the per-bin tables derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingProfile {
    mean_snr: f64,
    thresholds: Vec<f64>,
    sigma: f64,
    masses: Vec<f64>,
    quantized_snr: Vec<f64>,
    state_ber: Vec<f64>,
}

impl FadingProfile {
    /// Equal-probability binning around `mean_snr` (linear).
    pub fn equal_probability(num_bins: usize, mean_snr: f64, sigma: f64) -> Result<Self> {
        let thresholds = equal_probability_thresholds(num_bins, mean_snr)?;
        Self::from_thresholds(mean_snr, thresholds, sigma)
    }

    pub fn from_thresholds(mean_snr: f64, thresholds: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(mean_snr > 0.0) || !mean_snr.is_finite() {
            return Err(ChannelError::InvalidParameter(format!(
                "mean_snr must be positive and finite, got {mean_snr}"
            )));
        }
        validate_sigma(sigma)?;
        if thresholds.len() < 2 {
            return Err(ChannelError::InvalidParameter(
                "need at least two thresholds".into(),
            ));
        }
        if thresholds[0] != 0.0 || thresholds[thresholds.len() - 1] != f64::INFINITY {
            return Err(ChannelError::InvalidParameter(
                "thresholds must start at 0 and end at +inf".into(),
            ));
        }
        if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ChannelError::InvalidParameter(
                "thresholds must be strictly increasing".into(),
            ));
        }

        let bins = thresholds.len() - 1;
        let mut masses = Vec::with_capacity(bins);
        let mut quantized_snr = Vec::with_capacity(bins);
        let mut state_ber = Vec::with_capacity(bins);
        for k in 0..bins {
            let (low, high) = (thresholds[k], thresholds[k + 1]);
            masses.push(exp_mass(low, high, mean_snr));
            quantized_snr.push(bin_mean_snr(low, high, mean_snr).ok_or(ChannelError::DegenerateBin(k))?);
            state_ber.push(bin_ber(low, high, mean_snr).ok_or(ChannelError::DegenerateBin(k))?);
        }

        Ok(Self {
            mean_snr,
            thresholds,
            sigma,
            masses,
            quantized_snr,
            state_ber,
        })
    }

    /// Same bins, different transition speed.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        validate_sigma(sigma)?;
        Ok(Self {
            sigma,
            ..self.clone()
        })
    }

    pub fn num_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn mean_snr(&self) -> f64 {
        self.mean_snr
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.num_bins() {
            Err(ChannelError::IndexOutOfRange {
                index: k,
                bins: self.num_bins(),
            })
        } else {
            Ok(())
        }
    }

    /// Stationary probability `v_k` of bin `k`.
    pub fn steady_state_probability(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.masses[k])
    }

    /// Bin-conditional mean SNR `γ̄_k` (linear).
    pub fn quantized_snr(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.quantized_snr[k])
    }

    /// Bin-averaged BPSK bit-error rate.
    pub fn ber_for_state(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.state_ber[k])
    }

    /// Success probability of an `packet_bits`-bit packet sent while the link
    /// sits in bin `k`.
    pub fn success_probability(&self, k: usize, packet_bits: u32) -> Result<f64> {
        Ok(packet_success_probability(self.ber_for_state(k)?, packet_bits))
    }

    /// Per-bin success probabilities for a fixed packet length.
    pub fn success_table(&self, packet_bits: u32) -> Vec<f64> {
        self.state_ber
            .iter()
            .map(|&ber| packet_success_probability(ber, packet_bits))
            .collect()
    }

    /// Row `k` of the circulant transition matrix as `(successor, probability)`.
    ///
    /// Successors are listed lower neighbor, self, upper neighbor (with
    /// wrap-around). For `K <= 2` entries are merged so every successor
    /// appears once.
    pub fn transition_row(&self, k: usize) -> Result<Vec<(usize, f64)>> {
        self.check_index(k)?;
        let bins = self.num_bins();
        let stay = 1.0 - 2.0 * self.sigma;
        let mut row = vec![
            ((k + bins - 1) % bins, self.sigma),
            (k, stay),
            ((k + 1) % bins, self.sigma),
        ];
        row.sort_by_key(|&(s, _)| s);
        row.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        // Nudge the diagonal by single ulps so the row sums to exactly 1 when
        // added up in successor order.
        let diag = row.iter().position(|&(s, _)| s == k).expect("diagonal present");
        for _ in 0..8 {
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            if total == 1.0 {
                break;
            }
            let p = &mut row[diag].1;
            *p = if total > 1.0 { p.next_down() } else { p.next_up() };
        }
        Ok(row)
    }

    /// Dense `K×K` transition matrix.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let bins = self.num_bins();
        (0..bins)
            .map(|k| {
                let mut row = vec![0.0; bins];
                for (s, p) in self.transition_row(k).expect("index in range") {
                    row[s] += p;
                }
                row
            })
            .collect()
    }

    /// Draws a bin from the stationary distribution.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, &m) in self.masses.iter().enumerate() {
            acc += m;
            if u < acc {
                return k;
            }
        }
        self.num_bins() - 1
    }
}

fn validate_sigma(sigma: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&sigma) {
        return Err(ChannelError::InvalidParameter(format!(
            "sigma must lie in [0, 1/2], got {sigma}"
        )));
    }
    Ok(())
}

/// `(1/v_k)·∫ γ g(γ) dγ` over `[low, high)`; `None` for a massless bin.
fn bin_mean_snr(low: f64, high: f64, mean_snr: f64) -> Option<f64> {
    if exp_mass(low, high, mean_snr) <= 0.0 {
        return None;
    }
    if high.is_infinite() {
        return Some(low + mean_snr);
    }
    // low + Γ̄ - w·e^{-w/Γ̄}/(1 - e^{-w/Γ̄}), w = high - low
    let x = (high - low) / mean_snr;
    let tail = if x < 1e-8 {
        // x·e^{-x}/(1-e^{-x}) → 1 - x/2
        mean_snr * (1.0 - x / 2.0)
    } else {
        mean_snr * x * (-x).exp() / -(-x).exp_m1()
    };
    Some(low + mean_snr - tail)
}

/// `(1/v_k)·∫ 0.2·e^{-1.6γ} g(γ) dγ` over `[low, high)`; `None` for a massless bin.
fn bin_ber(low: f64, high: f64, mean_snr: f64) -> Option<f64> {
    if exp_mass(low, high, mean_snr) <= 0.0 {
        return None;
    }
    let inv_mean = 1.0 / mean_snr;
    let c = BER_EXPONENT + inv_mean;
    let width = high - low;
    // 0.2·(1/Γ̄c)·e^{-1.6·low}·(1 - e^{-c·w})/(1 - e^{-w/Γ̄})
    let ratio = if width.is_infinite() {
        1.0
    } else if width * c < 1e-12 {
        c / inv_mean
    } else {
        (-c * width).exp_m1() / (-inv_mean * width).exp_m1()
    };
    Some(BER_SCALE * inv_mean / c * (-BER_EXPONENT * low).exp() * ratio)
}

/// `(1 - ber)^bits`.
pub fn packet_success_probability(ber: f64, packet_bits: u32) -> f64 {
    debug_assert!((0.0..=1.0).contains(&ber));
    // exp(bits·ln(1-ber)) keeps precision for tiny BER.
    (packet_bits as f64 * (-ber).ln_1p()).exp()
}

/// Expected number of broadcast transmissions needed to reach every
/// neighbor: `1 + Σ (1-p)/p`.
pub fn expected_retransmissions(success_probs: &[f64]) -> Result<f64> {
    let mut total = 1.0;
    for (j, &p) in success_probs.iter().enumerate() {
        if !(p > 0.0) {
            return Err(ChannelError::UnreachableNeighbor(j));
        }
        if p > 1.0 {
            return Err(ChannelError::InvalidParameter(format!(
                "success probability {p} exceeds 1"
            )));
        }
        total += (1.0 - p) / p;
    }
    Ok(total)
}

/// Probability that every neighbor has been reached after `attempts`
/// independent broadcasts.
pub fn coverage_cdf(success_probs: &[f64], attempts: u64) -> f64 {
    success_probs
        .iter()
        .map(|&p| 1.0 - (1.0 - p).powf(attempts as f64))
        .product()
}

/// Smallest attempt count `c` with `coverage_cdf(c) >= delta`.
pub fn semi_reliable_quantile(success_probs: &[f64], delta: f64) -> Result<u64> {
    if !(delta > 0.0) || delta > 1.0 {
        return Err(ChannelError::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if let Some(j) = success_probs.iter().position(|&p| !(p > 0.0)) {
        return Err(ChannelError::UnreachableNeighbor(j));
    }
    if success_probs.iter().any(|&p| p > 1.0) {
        return Err(ChannelError::InvalidParameter(
            "success probability exceeds 1".into(),
        ));
    }
    let lossless = success_probs.iter().all(|&p| p == 1.0);
    if delta >= 1.0 && !lossless {
        return Err(ChannelError::NoFiniteQuantile(delta));
    }
    if coverage_cdf(success_probs, 1) >= delta {
        return Ok(1);
    }
    // Gallop to an upper bracket, then bisect; the CDF is nondecreasing in c.
    let mut low = 1u64;
    let mut high = 2u64;
    while coverage_cdf(success_probs, high) < delta {
        low = high;
        high = high
            .checked_mul(2)
            .ok_or(ChannelError::NoFiniteQuantile(delta))?;
        if high > 1 << 52 {
            return Err(ChannelError::NoFiniteQuantile(delta));
        }
    }
    // invariant: cdf(low) < delta <= cdf(high)
    while high - low > 1 {
        let mid = low + (high - low) / 2;
        if coverage_cdf(success_probs, mid) >= delta {
            high = mid;
        } else {
            low = mid;
        }
    }
    Ok(high)
}

/// The fading state of one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FsmcLink {
    state: usize,
}

impl FsmcLink {
    pub fn new(profile: &FadingProfile, state: usize) -> Result<Self> {
        profile.check_index(state)?;
        Ok(Self { state })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Advances one packet slot: stay with `1 - 2σ`, otherwise step to one of
    /// the two circularly adjacent bins with `σ` each. Consumes exactly one
    /// uniform draw.
    pub fn transition_step<R: Rng + ?Sized>(&mut self, profile: &FadingProfile, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.state = next_state(self.state, profile.num_bins(), profile.sigma(), u);
        self.state
    }
}

/// Successor of `state` for a uniform variate `u`.
#[inline]
pub(crate) fn next_state(state: usize, bins: usize, sigma: f64, u: f64) -> usize {
    if u < sigma {
        (state + bins - 1) % bins
    } else if u < 2.0 * sigma {
        (state + 1) % bins
    } else {
        state
    }
}
