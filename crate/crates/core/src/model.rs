//! Domain types shared by the detectors, learners and the simulator.
//!
//! All matrices are dense and stored row-major by channel: entry `(j, i)`
//! belongs to channel `j` and expert (secondary user) `i`, at index
//! `j * experts + i`.

use crate::error::{Error, Result};

/// Occupancy of a primary-user channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelState {
    Idle,
    Busy,
}

impl ChannelState {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            ChannelState::Busy
        } else {
            ChannelState::Idle
        }
    }

    pub fn is_busy(self) -> bool {
        self == ChannelState::Busy
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// What the fusion center learns about a channel after acting on its decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgtLabel {
    /// A probe transmission took place and revealed this state.
    Observed(ChannelState),
    /// Nobody transmitted, so the channel is assumed busy.
    AssumedBusy,
}

impl AgtLabel {
    pub fn state(self) -> ChannelState {
        match self {
            AgtLabel::Observed(s) => s,
            AgtLabel::AssumedBusy => ChannelState::Busy,
        }
    }

    pub fn was_probed(self) -> bool {
        matches!(self, AgtLabel::Observed(_))
    }
}

/// Whether experts report one-bit decisions or raw detected energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombiningMode {
    Hard,
    Soft,
}

/// Per-step reports from every expert on every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    channels: usize,
    experts: usize,
    mode: CombiningMode,
    values: Vec<f64>,
    active: Vec<bool>,
}

impl ObservationMatrix {
    /// All entries inactive and zero.
    pub fn new(channels: usize, experts: usize, mode: CombiningMode) -> Self {
        Self {
            channels,
            experts,
            mode,
            values: vec![0.0; channels * experts],
            active: vec![false; channels * experts],
        }
    }

    /// Builds a fully active matrix from per-channel rows.
    pub fn from_rows(mode: CombiningMode, rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.len();
        let experts = rows.first().map_or(0, Vec::len);
        let mut m = Self::new(channels, experts, mode);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != experts {
                return Err(Error::dims(experts, row.len()));
            }
            for (i, &v) in row.iter().enumerate() {
                m.set(j, i, v)?;
            }
        }
        Ok(m)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn mode(&self) -> CombiningMode {
        self.mode
    }

    /// Records an active report. Hard reports must be 0 or 1, soft reports
    /// must be finite and nonnegative.
    pub fn set(&mut self, channel: usize, expert: usize, value: f64) -> Result<()> {
        let ok = match self.mode {
            CombiningMode::Hard => value == 0.0 || value == 1.0,
            CombiningMode::Soft => value.is_finite() && value >= 0.0,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{:?} observation out of range: {value}",
                self.mode
            )));
        }
        let idx = channel * self.experts + expert;
        self.values[idx] = value;
        self.active[idx] = true;
        Ok(())
    }

    /// Marks an entry as not sensed this step.
    pub fn clear(&mut self, channel: usize, expert: usize) {
        let idx = channel * self.experts + expert;
        self.values[idx] = 0.0;
        self.active[idx] = false;
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.values[channel * self.experts..(channel + 1) * self.experts]
    }

    pub fn active_row(&self, channel: usize) -> &[bool] {
        &self.active[channel * self.experts..(channel + 1) * self.experts]
    }

    pub fn get(&self, channel: usize, expert: usize) -> Option<f64> {
        let idx = channel * self.experts + expert;
        self.active[idx].then_some(self.values[idx])
    }

    pub fn active_count(&self, channel: usize) -> usize {
        self.active_row(channel).iter().filter(|&&a| a).count()
    }
}

/// Fusion weights `w_ji` and their per-channel normalization `p_ji`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    channels: usize,
    experts: usize,
    weights: Vec<f64>,
    normalized: Vec<f64>,
}

impl WeightMatrix {
    /// Every weight set to `w0`; normalized weights uniform over all experts.
    pub fn filled(channels: usize, experts: usize, w0: f64) -> Self {
        let p = if experts > 0 { 1.0 / experts as f64 } else { 0.0 };
        Self {
            channels,
            experts,
            weights: vec![w0; channels * experts],
            normalized: vec![p; channels * experts],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.weights[channel * self.experts..(channel + 1) * self.experts]
    }

    pub fn row_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.weights[channel * self.experts..(channel + 1) * self.experts]
    }

    pub fn normalized_row(&self, channel: usize) -> &[f64] {
        &self.normalized[channel * self.experts..(channel + 1) * self.experts]
    }

    pub fn get(&self, channel: usize, expert: usize) -> f64 {
        self.weights[channel * self.experts + expert]
    }

    pub fn normalized(&self, channel: usize, expert: usize) -> f64 {
        self.normalized[channel * self.experts + expert]
    }

    /// Recomputes `p_j` from `w_j` over the active experts of channel `j`.
    pub fn refresh_normalized(&mut self, channel: usize, active: &[bool]) -> Result<()> {
        let range = channel * self.experts..(channel + 1) * self.experts;
        normalize_into(&self.weights[range.clone()], active, &mut self.normalized[range])
    }
}

/// True occupancy of every channel together with the fusion center's
/// approximate view of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTruth {
    pub true_state: Vec<ChannelState>,
    pub agt: Vec<AgtLabel>,
}

impl ChannelTruth {
    /// Truth with nothing probed yet.
    pub fn new(true_state: Vec<ChannelState>) -> Self {
        let agt = vec![AgtLabel::AssumedBusy; true_state.len()];
        Self { true_state, agt }
    }
}

/// Combined statistic, final decision and threshold per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub soft: Vec<f64>,
    pub decisions: Vec<ChannelState>,
    pub thresholds: Vec<f64>,
}

impl DecisionVector {
    pub fn with_channels(channels: usize) -> Self {
        Self {
            soft: vec![0.0; channels],
            decisions: vec![ChannelState::Busy; channels],
            thresholds: vec![0.0; channels],
        }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

/// Hyper-parameters shared by the learners and decision policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerParams {
    /// Hedge learning parameter.
    pub beta: f64,
    /// Perceptron step size.
    pub rho: f64,
    /// Discount applied to past performance; 1 disables discounting.
    pub discount: f64,
    /// Initial Hedge weight.
    pub w0: f64,
    pub pfa_target: f64,
    pub alpha_fdr: f64,
    pub tau_switch: f64,
    pub mu_deactivate: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            beta: 0.88,
            rho: 0.80,
            discount: 1.0,
            w0: 1.0,
            pfa_target: 0.05,
            alpha_fdr: 0.05,
            tau_switch: 0.02,
            mu_deactivate: 0.0,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        let open01 = |x: f64| x > 0.0 && x < 1.0;
        let checks = [
            (self.beta > 0.0 && self.beta <= 1.0, "beta must lie in (0, 1]"),
            (self.rho > 0.0 && self.rho <= 1.0, "rho must lie in (0, 1]"),
            ((0.0..=1.0).contains(&self.discount), "discount must lie in [0, 1]"),
            (self.w0 > 0.0 && self.w0.is_finite(), "w0 must be positive"),
            (open01(self.pfa_target), "pfa must lie in (0, 1)"),
            (open01(self.alpha_fdr), "alpha must lie in (0, 1)"),
            (open01(self.tau_switch), "tau must lie in (0, 1)"),
            ((0.0..1.0).contains(&self.mu_deactivate), "mu must lie in [0, 1)"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(msg));
            }
        }
        Ok(())
    }
}

/// Normalizes a weight row over its active entries. Inactive entries map to 0.
pub fn normalize_weights(row: &[f64], active: &[bool]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; row.len()];
    normalize_into(row, active, &mut out)?;
    Ok(out)
}

pub(crate) fn normalize_into(row: &[f64], active: &[bool], out: &mut [f64]) -> Result<()> {
    if row.len() != active.len() || row.len() != out.len() {
        return Err(Error::dims(row.len(), active.len()));
    }
    // Dividing by the largest active weight first keeps tiny rows representable.
    let max = row
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&w, _)| w)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoActiveDetectors);
    }
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::invalid(format!("weights must be positive, max was {max}")));
    }
    let total: f64 = row
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&w, _)| w / max)
        .sum();
    for ((o, &w), &a) in out.iter_mut().zip(row).zip(active) {
        *o = if a { (w / max) / total } else { 0.0 };
    }
    Ok(())
}

/// Per-expert 0/1 loss `|decision - truth|`.
pub fn expert_loss(decision: ChannelState, truth: ChannelState) -> u8 {
    (decision != truth) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_row_normalizes_to_quarters() {
        let p = normalize_weights(&[1.0; 4], &[true; 4]).unwrap();
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn two_expert_row() {
        let p = normalize_weights(&[0.88, 1.0], &[true, true]).unwrap();
        assert_relative_eq!(p[0], 0.88 / 1.88, epsilon = 1e-15);
        assert_relative_eq!(p[1], 1.0 / 1.88, epsilon = 1e-15);
    }

    #[test]
    fn mask_excludes_inactive() {
        let p = normalize_weights(&[1.0; 4], &[true, true, false, false]).unwrap();
        assert_eq!(p, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn all_inactive_is_an_error() {
        let err = normalize_weights(&[1.0; 3], &[false; 3]).unwrap_err();
        assert!(matches!(err, Error::NoActiveDetectors));
        assert_eq!(err.to_string(), "no active detectors for channel");
    }

    #[test]
    fn tiny_weights_still_normalize() {
        let p = normalize_weights(&[1e-300, 3e-300], &[true, true]).unwrap();
        assert_relative_eq!(p[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn loss_table() {
        use ChannelState::*;
        assert_eq!(expert_loss(Busy, Busy), 0);
        assert_eq!(expert_loss(Idle, Busy), 1);
        assert_eq!(expert_loss(Busy, Idle), 1);
        assert_eq!(expert_loss(Idle, Idle), 0);
    }

    #[test]
    fn hard_observation_rejects_non_binary() {
        let mut o = ObservationMatrix::new(1, 2, CombiningMode::Hard);
        assert!(o.set(0, 0, 0.5).is_err());
        assert!(o.set(0, 0, 1.0).is_ok());
        let mut s = ObservationMatrix::new(1, 2, CombiningMode::Soft);
        assert!(s.set(0, 1, -1.0).is_err());
        assert!(s.set(0, 1, f64::NAN).is_err());
        assert_eq!(s.get(0, 0), None);
    }

    #[test]
    fn default_params_are_valid() {
        LearnerParams::default().validate().unwrap();
        let bad = LearnerParams {
            beta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn row_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1usize..16).prop_flat_map(|n| {
            (
                prop::collection::vec(1e-6f64..1e6, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn normalized_rows_sum_to_one((row, mut mask) in row_and_mask()) {
            mask[0] = true;
            let p = normalize_weights(&row, &mask).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for (pi, &a) in p.iter().zip(&mask) {
                if !a { prop_assert_eq!(*pi, 0.0); }
            }
        }

        #[test]
        fn normalization_is_scale_invariant((row, mut mask) in row_and_mask(), c in 1e-3f64..1e3) {
            mask[0] = true;
            let p = normalize_weights(&row, &mask).unwrap();
            let scaled: Vec<f64> = row.iter().map(|w| w * c).collect();
            let q = normalize_weights(&scaled, &mask).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn loss_is_symmetric(a in any::<bool>(), b in any::<bool>()) {
            let (a, b) = (ChannelState::from_bit(a), ChannelState::from_bit(b));
            prop_assert_eq!(expert_loss(a, b), expert_loss(b, a));
            prop_assert!(expert_loss(a, b) <= 1);
        }
    }
}
