//! False-discovery-rate control across channels.
//!
//! Each channel is one hypothesis test (`H0`: idle). [`bh_select`] runs the
//! Benjamini-Hochberg step-up rule on the per-channel p-values and
//! [`SwitchState`] decides, from the collisions observed so far, whether the
//! fusion center should use it or fall back to plain thresholding.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::gamma::gamma_tail;
use crate::hedge::MomentMatchedGamma;

/// p-value of a combined statistic under its matched null gamma law.
pub fn p_value(f_tilde: f64, g: MomentMatchedGamma) -> Result<f64> {
    gamma_tail(g.k, g.theta, f_tilde)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BhInput {
    pub p_values: Vec<f64>,
    pub alpha: f64,
}

impl BhInput {
    pub fn new(p_values: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("p-value out of [0, 1]: {p}")));
        }
        Ok(Self { p_values, alpha })
    }
}

/// Indices (ascending) of the hypotheses rejected by the step-up rule.
///
/// With `P(1) <= ... <= P(m)` the sorted p-values, `k` is the largest rank
/// with `P(k) <= k alpha / m`; every channel whose p-value is at most `P(k)`
/// is rejected, so ties at the cut-off go together.
pub fn bh_select(input: &BhInput) -> Vec<usize> {
    let m = input.p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| input.p_values[a].total_cmp(&input.p_values[b]));
    let cutoff = (1..=m)
        .rev()
        .find(|&rank| input.p_values[order[rank - 1]] <= rank as f64 * input.alpha / m as f64)
        .map(|rank| input.p_values[order[rank - 1]]);
    match cutoff {
        None => Vec::new(),
        Some(c) => (0..m).filter(|&j| input.p_values[j] <= c).collect(),
    }
}

/// Family-wise error rate of `tests` independent tests at level `pfa` each.
pub fn fwer(pfa: f64, tests: u32) -> f64 {
    1.0 - (1.0 - pfa).powi(tests as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchMode {
    Bh,
    Plain,
}

impl SwitchMode {
    pub fn label(self) -> &'static str {
        match self {
            SwitchMode::Bh => "bh",
            SwitchMode::Plain => "plain",
        }
    }
}

/// Collision-driven toggle between BH decisions and plain thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchState {
    pub mode: SwitchMode,
    pub collision_events: u64,
    pub transmission_attempts: u64,
    pub tau: f64,
    /// Once in plain mode, never return to BH.
    pub latch: bool,
    /// When set, the fraction is computed over the last `window` steps.
    window: Option<usize>,
    recent: VecDeque<(u64, u64)>,
}

impl SwitchState {
    pub fn new(tau: f64) -> Self {
        Self {
            mode: SwitchMode::Bh,
            collision_events: 0,
            transmission_attempts: 0,
            tau,
            latch: false,
            window: None,
            recent: VecDeque::new(),
        }
    }

    pub fn latched(mut self) -> Self {
        self.latch = true;
        self
    }

    pub fn windowed(mut self, steps: usize) -> Self {
        self.window = Some(steps.max(1));
        self
    }

    /// Collision fraction the rule compares against `tau`.
    pub fn collision_fraction(&self) -> f64 {
        let (c, a) = match self.window {
            None => (self.collision_events, self.transmission_attempts),
            Some(_) => self
                .recent
                .iter()
                .fold((0, 0), |(c, a), &(dc, da)| (c + dc, a + da)),
        };
        if a == 0 {
            0.0
        } else {
            c as f64 / a as f64
        }
    }

    /// Advances the counters by one step's collisions and attempts.
    pub fn record(&mut self, collisions: u64, attempts: u64) {
        self.collision_events += collisions;
        self.transmission_attempts += attempts;
        if let Some(w) = self.window {
            self.recent.push_back((collisions, attempts));
            while self.recent.len() > w {
                self.recent.pop_front();
            }
        }
        let over = self.collision_fraction() > self.tau;
        self.mode = match (self.mode, over) {
            (SwitchMode::Plain, _) if self.latch => SwitchMode::Plain,
            (_, true) => SwitchMode::Plain,
            (_, false) => SwitchMode::Bh,
        };
    }
}

/// Single-step form: one possible collision out of at most one attempt.
pub fn switch_update(mut state: SwitchState, step_collided: bool, step_attempted: bool) -> SwitchState {
    state.record(step_collided as u64, (step_attempted || step_collided) as u64);
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::hedge::soft_threshold;

    /// Exhaustive step-up oracle: the largest set of the form "the r smallest
    /// p-values" whose largest member passes its rank's BH bound.
    fn brute_force_bh(p: &[f64], alpha: f64) -> Vec<usize> {
        let m = p.len();
        let mut best: Vec<usize> = Vec::new();
        for mask in 0u32..(1 << m) {
            let set: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
            if set.is_empty() {
                continue;
            }
            let max_in = set.iter().map(|&j| p[j]).fold(f64::NEG_INFINITY, f64::max);
            // The set must contain every p-value not larger than its maximum.
            let closed = (0..m).all(|j| p[j] > max_in || set.contains(&j));
            // Rank of the set's maximum among all p-values.
            let rank = (0..m).filter(|&j| p[j] <= max_in).count();
            if closed && max_in <= rank as f64 * alpha / m as f64 && set.len() > best.len() {
                best = set;
            }
        }
        best
    }

    #[test]
    fn p_value_examples() {
        let g = MomentMatchedGamma { k: 1.0, theta: 2.0 };
        assert_eq!(p_value(0.0, g).unwrap(), 1.0);
        assert_relative_eq!(p_value(5.99146, g).unwrap(), 0.05, epsilon = 1e-6);
        let g = MomentMatchedGamma { k: 37.0, theta: 0.4 };
        let t = soft_threshold(g, 0.07).unwrap();
        assert_relative_eq!(p_value(t, g).unwrap(), 0.07, max_relative = 1e-9);
    }

    #[test]
    fn bh_textbook_example() {
        let input = BhInput::new(vec![0.001, 0.02, 0.3], 0.05).unwrap();
        assert_eq!(bh_select(&input), vec![0, 1]);
    }

    #[test]
    fn bh_nothing_rejected() {
        assert!(bh_select(&BhInput::new(vec![1.0; 5], 0.05).unwrap()).is_empty());
        assert!(bh_select(&BhInput::new(vec![0.04, 0.5], 0.05).unwrap()).is_empty());
    }

    #[test]
    fn bh_ties_rejected_together() {
        let input = BhInput::new(vec![0.01, 0.01, 0.9], 0.05).unwrap();
        assert_eq!(bh_select(&input), vec![0, 1]);
    }

    #[test]
    fn bh_input_validation() {
        assert!(BhInput::new(vec![0.1, 1.2], 0.05).is_err());
        assert!(BhInput::new(vec![0.1], 0.0).is_err());
        assert!(BhInput::new(vec![f64::NAN], 0.05).is_err());
    }

    #[test]
    fn bh_matches_brute_force_on_random_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..2000 {
            let m = rng.random_range(1..=6);
            let p: Vec<f64> = (0..m)
                .map(|_| {
                    // Mix continuous values with a coarse grid to exercise ties.
                    if rng.random_bool(0.3) {
                        (rng.random_range(0..20) as f64) / 200.0
                    } else {
                        rng.random::<f64>().powi(3)
                    }
                })
                .collect();
            let alpha = rng.random_range(0.01..0.5);
            let got = bh_select(&BhInput::new(p.clone(), alpha).unwrap());
            assert_eq!(got, brute_force_bh(&p, alpha), "p={p:?} alpha={alpha}");
        }
    }

    #[test]
    fn fwer_examples() {
        assert_relative_eq!(fwer(0.05, 10), 0.4013, epsilon = 1e-4);
        assert_relative_eq!(fwer(0.2, 1), 0.2, max_relative = 1e-15);
        for (pfa, p) in [(0.001, 10u32), (0.005, 10), (0.01, 5), (0.0001, 50)] {
            let approx = p as f64 * pfa;
            assert!((fwer(pfa, p) - approx).abs() / approx < 0.05);
        }
    }

    #[test]
    fn switch_examples() {
        let fresh = SwitchState::new(0.02);
        assert_eq!(fresh.mode, SwitchMode::Bh);

        let mut s = SwitchState::new(0.02);
        s.record(3, 100);
        assert_eq!(s.mode, SwitchMode::Plain);

        let mut s = SwitchState::new(0.02);
        s.record(3, 200);
        assert_eq!(s.mode, SwitchMode::Bh);
    }

    #[test]
    fn switch_reverts_unless_latched() {
        let mut s = SwitchState::new(0.02);
        s.record(3, 100);
        assert_eq!(s.mode, SwitchMode::Plain);
        s.record(0, 100);
        assert_eq!(s.mode, SwitchMode::Bh);

        let mut l = SwitchState::new(0.02).latched();
        l.record(3, 100);
        l.record(0, 1000);
        assert_eq!(l.mode, SwitchMode::Plain);
    }

    #[test]
    fn windowed_switch_forgets() {
        let mut s = SwitchState::new(0.02).windowed(2);
        s.record(5, 10);
        assert_eq!(s.mode, SwitchMode::Plain);
        s.record(0, 10);
        s.record(0, 10);
        assert_eq!(s.mode, SwitchMode::Bh);
        assert_eq!(s.collision_events, 5);
    }

    #[test]
    fn single_step_update_counts() {
        let s = switch_update(SwitchState::new(0.5), true, true);
        assert_eq!((s.collision_events, s.transmission_attempts), (1, 1));
        assert_eq!(s.mode, SwitchMode::Plain);
        let s = switch_update(s, false, true);
        assert_eq!(s.mode, SwitchMode::Bh);
        assert!(s.collision_events <= s.transmission_attempts);
    }

    #[test]
    fn fdr_controlled_under_global_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let trials = 10_000;
        let alpha = 0.05;
        let any_rejection = (0..trials)
            .filter(|_| {
                let p: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
                !bh_select(&BhInput::new(p, alpha).unwrap()).is_empty()
            })
            .count();
        let fdr = any_rejection as f64 / trials as f64;
        assert!(fdr <= alpha + 0.02, "fdr {fdr}");
    }

    proptest! {
        #[test]
        fn larger_alpha_never_shrinks(p in prop::collection::vec(0.0f64..=1.0, 1..12), a in 0.001f64..0.5, b in 0.001f64..0.5) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let small = bh_select(&BhInput::new(p.clone(), lo).unwrap());
            let large = bh_select(&BhInput::new(p, hi).unwrap());
            prop_assert!(small.iter().all(|j| large.contains(j)));
        }

        #[test]
        fn switch_counters_consistent(events in prop::collection::vec((any::<bool>(), any::<bool>()), 0..200)) {
            let mut s = SwitchState::new(0.02);
            for (c, a) in events {
                s = switch_update(s, c, a);
                prop_assert!(s.collision_events <= s.transmission_attempts);
            }
        }
    }
}
