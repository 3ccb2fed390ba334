//! Perceptron fusion over soft energies with the threshold folded into the
//! observations.
//!
//! The decision hyperplane is `sum_i w_i o_i = gamma_p`, where `gamma_p` is
//! the empirical `(1 - pfa)` quantile of the weighted sum of null energies.
//! Folding `gamma_p / (S w_i)` out of each observation turns it into a
//! homogeneous hyperplane, so only the weights are learned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::sample_chi_square;
use crate::error::{Error, Result};
use crate::hedge::SoftNullModel;
use crate::model::{AgtLabel, ChannelState, CombiningMode, DecisionVector, ObservationMatrix, WeightMatrix};

/// Smallest weight magnitude used as a divisor when folding the bias.
pub const DEFAULT_EPS_W: f64 = 1e-6;

/// Default Monte Carlo sample count for the null histogram.
pub const DEFAULT_THRESHOLD_SAMPLES: usize = 10_000;

/// Empirical upper `pfa` point of an ascending sample.
fn upper_quantile_sorted(sorted: &[f64], pfa: f64) -> f64 {
    let m = sorted.len();
    let rank = ((1.0 - pfa) * m as f64).ceil() as usize;
    sorted[rank.clamp(1, m) - 1]
}

fn check_weights(w_row: &[f64]) -> Result<()> {
    if w_row.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateThreshold);
    }
    Ok(())
}

/// Threshold from a fresh Monte Carlo sample of `sum_i w_i G_i`, with
/// `G_i ~ sigma^2 chi2_N` independent.
pub fn perceptron_threshold<R: Rng + ?Sized>(
    w_row: &[f64],
    sigma2: f64,
    num_samples: u32,
    pfa: f64,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    check_weights(w_row)?;
    if m < 1000 {
        return Err(Error::invalid("threshold needs at least 1000 Monte Carlo samples"));
    }
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::invalid(format!("pfa must lie in (0, 1), got {pfa}")));
    }
    let mut sums: Vec<f64> = (0..m)
        .map(|_| {
            w_row
                .iter()
                .map(|&w| w * sigma2 * sample_chi_square(num_samples, rng))
                .sum()
        })
        .collect();
    sums.sort_by(f64::total_cmp);
    Ok(upper_quantile_sorted(&sums, pfa))
}

/// Result of folding the bias into one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Folded {
    pub value: f64,
    /// Set when `|w|` was below the guard and the divisor was substituted.
    pub guarded: bool,
}

pub fn fold_bias(obs: f64, w: f64, gamma_p: f64, experts: usize, eps_w: f64) -> Folded {
    let (denom_w, guarded) = if w.abs() < eps_w {
        (if w < 0.0 { -eps_w } else { eps_w }, true)
    } else {
        (w, false)
    };
    Folded {
        value: obs - gamma_p / (experts as f64 * denom_w),
        guarded,
    }
}

/// Busy iff the folded weighted sum is nonnegative.
pub fn perceptron_decide(w_row: &[f64], folded: &[f64], active: &[bool]) -> ChannelState {
    let s: f64 = w_row
        .iter()
        .zip(folded)
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|((w, o), _)| w * o)
        .sum();
    ChannelState::from_bit(s >= 0.0)
}

/// Mistake-driven update. Missed detections add `rho * o'`, false alarms
/// subtract it; `discount` shrinks the old weight first.
pub fn perceptron_update(
    w: f64,
    o_prime: f64,
    truth: ChannelState,
    decision: ChannelState,
    rho: f64,
    discount: f64,
) -> Result<f64> {
    match (truth, decision) {
        (ChannelState::Busy, ChannelState::Idle) => Ok(discount * w + rho * o_prime),
        (ChannelState::Idle, ChannelState::Busy) => Ok(discount * w - rho * o_prime),
        _ => Err(Error::UpdateOnCorrectDecision),
    }
}

/// Null draws for one channel, reused across threshold recomputations.
#[derive(Debug, Clone)]
struct NullBank {
    /// `samples x experts`, row-major by sample.
    draws: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ChannelCache {
    weights: Vec<f64>,
    active: Vec<bool>,
    threshold: f64,
    /// Ascending weighted null sums; empty when the row is degenerate.
    sorted_sums: Vec<f64>,
}

/// Output of one decision round.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronDecision {
    pub vector: DecisionVector,
    pub p_values: Vec<f64>,
    pub observed: Vec<bool>,
    /// Folded observations per channel, kept for the update.
    pub folded: Vec<Vec<f64>>,
    /// Number of folds that hit the small-weight guard.
    pub guarded: usize,
}

#[derive(Debug, Clone)]
pub struct PerceptronState {
    pub weights: WeightMatrix,
    pub rho: f64,
    pub discount: f64,
    pub eps_w: f64,
    null: SoftNullModel,
    banks: Vec<NullBank>,
    cache: Vec<Option<ChannelCache>>,
    recomputations: usize,
}

impl PerceptronState {
    /// Weights start at `1/S` so the first round is an equal-weight soft vote.
    /// The null bank for channel `j` is drawn from stream `j` of `seed`.
    pub fn new(
        channels: usize,
        experts: usize,
        rho: f64,
        discount: f64,
        null: SoftNullModel,
        threshold_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if threshold_samples < 1000 {
            return Err(Error::config("threshold_samples must be at least 1000"));
        }
        if experts == 0 {
            return Err(Error::config("perceptron needs at least one expert"));
        }
        let banks = (0..channels)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                let draws = (0..threshold_samples * experts)
                    .map(|_| null.noise_variance * sample_chi_square(null.num_samples, &mut rng))
                    .collect();
                NullBank { draws }
            })
            .collect();
        Ok(Self {
            weights: WeightMatrix::filled(channels, experts, 1.0 / experts as f64),
            rho,
            discount,
            eps_w: DEFAULT_EPS_W,
            null,
            banks,
            cache: vec![None; channels],
            recomputations: 0,
        })
    }

    /// How many times a channel threshold has been rebuilt.
    pub fn recomputations(&self) -> usize {
        self.recomputations
    }

    fn refresh_threshold(&mut self, channel: usize, active: &[bool]) {
        let w_row = self.weights.row(channel);
        if let Some(c) = &self.cache[channel] {
            if c.weights == w_row && c.active == active {
                return;
            }
        }
        let experts = w_row.len();
        let degenerate = w_row.iter().zip(active).all(|(&w, &a)| !a || w == 0.0);
        let (threshold, sorted_sums) = if degenerate {
            (0.0, Vec::new())
        } else {
            let bank = &self.banks[channel].draws;
            let mut sums: Vec<f64> = bank
                .chunks_exact(experts)
                .map(|g| {
                    g.iter()
                        .zip(w_row)
                        .zip(active)
                        .filter(|(_, &a)| a)
                        .map(|((g, w), _)| g * w)
                        .sum()
                })
                .collect();
            sums.sort_by(f64::total_cmp);
            (upper_quantile_sorted(&sums, self.null.pfa), sums)
        };
        self.recomputations += 1;
        self.cache[channel] = Some(ChannelCache {
            weights: w_row.to_vec(),
            active: active.to_vec(),
            threshold,
            sorted_sums,
        });
    }

    /// Current threshold of channel `j`, rebuilding it if the weights moved.
    pub fn threshold(&mut self, channel: usize, active: &[bool]) -> f64 {
        self.refresh_threshold(channel, active);
        self.cache[channel].as_ref().map_or(0.0, |c| c.threshold)
    }

    pub fn decide(&mut self, obs: &ObservationMatrix) -> Result<PerceptronDecision> {
        let (channels, experts) = (self.weights.channels(), self.weights.experts());
        if obs.channels() != channels || obs.experts() != experts {
            return Err(Error::dims(
                format!("({channels}, {experts})"),
                format!("({}, {})", obs.channels(), obs.experts()),
            ));
        }
        if obs.mode() != CombiningMode::Soft {
            return Err(Error::invalid("perceptron fusion needs soft observations"));
        }
        let mut vector = DecisionVector::with_channels(channels);
        let mut p_values = vec![1.0; channels];
        let mut observed = vec![true; channels];
        let mut folded = vec![vec![0.0; experts]; channels];
        let mut guarded = 0;

        for j in 0..channels {
            let active = obs.active_row(j);
            let n_active = active.iter().filter(|&&a| a).count();
            if n_active == 0 {
                observed[j] = false;
                vector.soft[j] = f64::NAN;
                vector.thresholds[j] = f64::NAN;
                vector.decisions[j] = ChannelState::Busy;
                continue;
            }
            let gamma_p = self.threshold(j, active);
            let w_row = self.weights.row(j);
            let o_row = obs.row(j);
            for i in 0..experts {
                if active[i] {
                    let f = fold_bias(o_row[i], w_row[i], gamma_p, n_active, self.eps_w);
                    guarded += f.guarded as usize;
                    folded[j][i] = f.value;
                }
            }
            let raw: f64 = w_row
                .iter()
                .zip(o_row)
                .zip(active)
                .filter(|(_, &a)| a)
                .map(|((w, o), _)| w * o)
                .sum();
            vector.soft[j] = raw;
            vector.thresholds[j] = gamma_p;
            vector.decisions[j] = perceptron_decide(w_row, &folded[j], active);

            let sums = &self.cache[j].as_ref().expect("threshold refreshed").sorted_sums;
            if !sums.is_empty() {
                let below = sums.partition_point(|&s| s < raw);
                let at_or_above = sums.len() - below;
                p_values[j] = (1 + at_or_above) as f64 / (1 + sums.len()) as f64;
            }
        }
        Ok(PerceptronDecision {
            vector,
            p_values,
            observed,
            folded,
            guarded,
        })
    }

    /// Updates every active expert on channels where a probe revealed a state
    /// that contradicts the decision.
    pub fn update(
        &mut self,
        obs: &ObservationMatrix,
        decision: &PerceptronDecision,
        final_decisions: &[ChannelState],
        agt: &[AgtLabel],
    ) -> Result<()> {
        let channels = self.weights.channels();
        if final_decisions.len() != channels || agt.len() != channels {
            return Err(Error::dims(channels, final_decisions.len().min(agt.len())));
        }
        for j in 0..channels {
            let truth = agt[j].state();
            let made = final_decisions[j];
            if !agt[j].was_probed() || truth == made || !decision.observed[j] {
                continue;
            }
            let active = obs.active_row(j);
            let (rho, discount) = (self.rho, self.discount);
            let folded = &decision.folded[j];
            let row = self.weights.row_mut(j);
            for i in 0..row.len() {
                if active[i] {
                    row[i] = perceptron_update(row[i], folded[i], truth, made, rho, discount)?;
                }
            }
        }
        Ok(())
    }

    pub fn step<F>(&mut self, obs: &ObservationMatrix, observe: F) -> Result<PerceptronDecision>
    where
        F: FnOnce(&DecisionVector) -> Vec<AgtLabel>,
    {
        let d = self.decide(obs)?;
        let agt = observe(&d.vector);
        let finals = d.vector.decisions.clone();
        self.update(obs, &d, &finals, &agt)?;
        Ok(d)
    }
}
