//! Hedge fusion with hard or soft combining and the discounted dHedge update.
//!
//! Each channel keeps one weight per expert. The fusion center combines the
//! experts' reports with the normalized weights, compares the result to a
//! threshold (0.5 for one-bit reports, a moment-matched gamma quantile for
//! energies) and, once the channel's approximate ground truth is known,
//! multiplies every expert's weight by `beta^loss`.

use crate::detector::hard_decision;
use crate::error::{Error, Result};
use crate::gamma::{gamma_tail, gamma_tail_inverse};
use crate::model::{
    expert_loss, normalize_into, AgtLabel, ChannelState, CombiningMode, DecisionVector,
    ObservationMatrix, WeightMatrix,
};

/// Threshold on the combined vote in hard-combining mode.
pub const HARD_THRESHOLD: f64 = 0.5;

const HARD_TIE_SLACK: f64 = 16.0 * f64::EPSILON;

/// Raw weights below this are clamped; normalization makes the floor inert.
pub const WEIGHT_FLOOR: f64 = 1e-300;

// Powers of two, so rescaling a row is exact.
const RESCALE_BELOW: f64 = f64::from_bits((1023 - 600) << 52);
const RESCALE_FACTOR: f64 = f64::from_bits((1023 + 600) << 52);

/// Gamma law fitted by matching the first two moments of the H0 combined
/// statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentMatchedGamma {
    pub k: f64,
    pub theta: f64,
}

/// `sum_i p_i * o_i` over the active experts.
pub fn hedge_combine(p_row: &[f64], obs_row: &[f64], active: &[bool]) -> f64 {
    p_row
        .iter()
        .zip(obs_row)
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|((p, o), _)| p * o)
        .sum()
}

/// Votes within a few ulps of one half count as ties, which are busy.
pub fn hard_decide(f_tilde: f64) -> ChannelState {
    ChannelState::from_bit(f_tilde >= HARD_THRESHOLD - HARD_TIE_SLACK)
}

/// Gamma approximation of `sum_i p_i * sigma^2 * chi2_N`.
pub fn moment_match(p_row: &[f64], sigma2: f64, num_samples: u32) -> Result<MomentMatchedGamma> {
    let sum_sq: f64 = p_row.iter().map(|p| p * p).sum();
    if !(sum_sq > 0.0) {
        return Err(Error::EmptyWeightRow);
    }
    Ok(MomentMatchedGamma {
        k: num_samples as f64 / (2.0 * sum_sq),
        theta: 2.0 * sigma2 * sum_sq,
    })
}

/// Combined-statistic threshold giving false-alarm probability `pfa` under
/// the matched null distribution.
pub fn soft_threshold(g: MomentMatchedGamma, pfa: f64) -> Result<f64> {
    gamma_tail_inverse(g.k, g.theta, pfa)
}

pub fn hedge_update(w: f64, loss: u8, beta: f64) -> f64 {
    if loss == 0 {
        w
    } else {
        w * beta
    }
}

/// `w^discount * beta^loss`; `discount = 1` is plain Hedge.
pub fn dhedge_update(w: f64, loss: u8, beta: f64, discount: f64) -> f64 {
    let kept = if discount == 1.0 { w } else { w.powf(discount) };
    hedge_update(kept, loss, beta)
}

/// Local decisions implied by soft energies and the per-expert NP thresholds.
pub fn derive_expert_decisions(obs_row: &[f64], zeta: &[f64]) -> Vec<ChannelState> {
    obs_row
        .iter()
        .zip(zeta)
        .map(|(&e, &z)| hard_decision(e, z))
        .collect()
}

/// Noise model the fusion center needs for soft combining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftNullModel {
    pub noise_variance: f64,
    pub num_samples: u32,
    pub pfa: f64,
}

/// Output of one decision round.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeDecision {
    pub vector: DecisionVector,
    /// Upper-tail p-value of the combined statistic (soft mode only).
    pub p_values: Option<Vec<f64>>,
    /// False for channels with no active detector; those are declared busy.
    pub observed: Vec<bool>,
}

#[derive(Debug, Clone)]
struct ThresholdCache {
    sum_sq: f64,
    fit: MomentMatchedGamma,
    threshold: f64,
}

#[derive(Debug, Clone)]
pub struct HedgeState {
    pub weights: WeightMatrix,
    pub beta: f64,
    pub discount: f64,
    pub mode: CombiningMode,
    null: Option<SoftNullModel>,
    cache: Vec<Option<ThresholdCache>>,
}

impl HedgeState {
    pub fn new_hard(channels: usize, experts: usize, w0: f64, beta: f64, discount: f64) -> Self {
        Self {
            weights: WeightMatrix::filled(channels, experts, w0),
            beta,
            discount,
            mode: CombiningMode::Hard,
            null: None,
            cache: vec![None; channels],
        }
    }

    pub fn new_soft(
        channels: usize,
        experts: usize,
        w0: f64,
        beta: f64,
        discount: f64,
        null: SoftNullModel,
    ) -> Self {
        Self {
            weights: WeightMatrix::filled(channels, experts, w0),
            beta,
            discount,
            mode: CombiningMode::Soft,
            null: Some(null),
            cache: vec![None; channels],
        }
    }

    fn check_dims(&self, obs: &ObservationMatrix) -> Result<()> {
        let want = (self.weights.channels(), self.weights.experts());
        let got = (obs.channels(), obs.experts());
        if want != got {
            return Err(Error::dims(format!("{want:?}"), format!("{got:?}")));
        }
        if obs.mode() != self.mode {
            return Err(Error::invalid("observation mode does not match learner mode"));
        }
        Ok(())
    }

    /// Combines the current observations; does not touch the weights.
    pub fn decide(&mut self, obs: &ObservationMatrix) -> Result<HedgeDecision> {
        self.check_dims(obs)?;
        let channels = obs.channels();
        let mut vector = DecisionVector::with_channels(channels);
        let mut observed = vec![true; channels];
        let mut p_values = match self.mode {
            CombiningMode::Soft => Some(vec![1.0; channels]),
            CombiningMode::Hard => None,
        };

        for j in 0..channels {
            let active = obs.active_row(j);
            if !active.iter().any(|&a| a) {
                observed[j] = false;
                vector.soft[j] = f64::NAN;
                vector.thresholds[j] = f64::NAN;
                vector.decisions[j] = ChannelState::Busy;
                continue;
            }
            self.weights.refresh_normalized(j, active)?;
            let p_row = self.weights.normalized_row(j);
            let f = hedge_combine(p_row, obs.row(j), active);
            vector.soft[j] = f;
            match self.mode {
                CombiningMode::Hard => {
                    vector.thresholds[j] = HARD_THRESHOLD;
                    vector.decisions[j] = hard_decide(f);
                }
                CombiningMode::Soft => {
                    let null = self.null.expect("soft learner carries a null model");
                    let sum_sq: f64 = p_row.iter().map(|p| p * p).sum();
                    let cached = match &self.cache[j] {
                        Some(c) if c.sum_sq == sum_sq => c.clone(),
                        _ => {
                            let fit = moment_match(p_row, null.noise_variance, null.num_samples)?;
                            let threshold = soft_threshold(fit, null.pfa)?;
                            let c = ThresholdCache { sum_sq, fit, threshold };
                            self.cache[j] = Some(c.clone());
                            c
                        }
                    };
                    vector.thresholds[j] = cached.threshold;
                    vector.decisions[j] = ChannelState::from_bit(f >= cached.threshold);
                    if let Some(pv) = p_values.as_mut() {
                        pv[j] = gamma_tail(cached.fit.k, cached.fit.theta, f)?;
                    }
                }
            }
        }
        Ok(HedgeDecision {
            vector,
            p_values,
            observed,
        })
    }

    /// Applies the loss-driven update on channels where the final decision
    /// was idle and a probe revealed the channel state. `zeta` holds each
    /// expert's NP threshold and is only read in soft mode.
    pub fn update(
        &mut self,
        obs: &ObservationMatrix,
        decisions: &[ChannelState],
        agt: &[AgtLabel],
        zeta: &[f64],
    ) -> Result<()> {
        self.check_dims(obs)?;
        let (channels, experts) = (obs.channels(), obs.experts());
        if decisions.len() != channels || agt.len() != channels {
            return Err(Error::dims(channels, decisions.len().min(agt.len())));
        }
        if self.mode == CombiningMode::Soft && zeta.len() != experts {
            return Err(Error::dims(experts, zeta.len()));
        }
        for j in 0..channels {
            if decisions[j] != ChannelState::Idle || !agt[j].was_probed() {
                continue;
            }
            let truth = agt[j].state();
            let active = obs.active_row(j);
            let reports = obs.row(j);
            let (beta, discount, mode) = (self.beta, self.discount, self.mode);
            let row = self.weights.row_mut(j);
            for i in 0..experts {
                if !active[i] {
                    continue;
                }
                let local = match mode {
                    CombiningMode::Hard => ChannelState::from_bit(reports[i] == 1.0),
                    CombiningMode::Soft => hard_decision(reports[i], zeta[i]),
                };
                let loss = expert_loss(local, truth);
                row[i] = dhedge_update(row[i], loss, beta, discount).max(WEIGHT_FLOOR);
            }
            let max = row
                .iter()
                .zip(active)
                .filter(|(_, &a)| a)
                .map(|(&w, _)| w)
                .fold(0.0, f64::max);
            if max < RESCALE_BELOW {
                for w in row.iter_mut() {
                    *w = (*w * RESCALE_FACTOR).max(WEIGHT_FLOOR);
                }
            }
            self.weights.refresh_normalized(j, active)?;
        }
        Ok(())
    }

    /// One decide/observe/update round. `observe` turns the decision into the
    /// approximate ground truth.
    pub fn step<F>(&mut self, obs: &ObservationMatrix, zeta: &[f64], observe: F) -> Result<HedgeDecision>
    where
        F: FnOnce(&DecisionVector) -> Vec<AgtLabel>,
    {
        let decision = self.decide(obs)?;
        let agt = observe(&decision.vector);
        self.update(obs, &decision.vector.decisions, &agt, zeta)?;
        Ok(decision)
    }

    /// Normalized weights of channel `j` over `active`, without mutating state.
    pub fn normalized_over(&self, channel: usize, active: &[bool]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; active.len()];
        normalize_into(self.weights.row(channel), active, &mut out)?;
        Ok(out)
    }
}
