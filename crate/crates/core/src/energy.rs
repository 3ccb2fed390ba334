//! Selective deactivation of weak detectors and per-SU energy accounting.

use crate::model::WeightMatrix;

/// Per-SU energy budget. A `None` budget never runs out.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub budget: Vec<Option<u64>>,
    pub cost_per_sense: u64,
    pub alive: Vec<bool>,
}

impl EnergyLedger {
    pub fn new(experts: usize, budget: Option<u64>, cost_per_sense: u64) -> Self {
        Self {
            budget: vec![budget; experts],
            cost_per_sense: cost_per_sense.max(1),
            alive: vec![budget.is_none_or(|b| b > 0); experts],
        }
    }

    pub fn unlimited(experts: usize) -> Self {
        Self::new(experts, None, 1)
    }
}

/// Pair-activity mask: entry `(j, i)` is true while expert `i` senses
/// channel `j`. Deactivation is permanent.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveMask {
    channels: usize,
    experts: usize,
    active: Vec<bool>,
}

impl ActiveMask {
    pub fn all(channels: usize, experts: usize) -> Self {
        Self {
            channels,
            experts,
            active: vec![true; channels * experts],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn row(&self, channel: usize) -> &[bool] {
        &self.active[channel * self.experts..(channel + 1) * self.experts]
    }

    pub fn get(&self, channel: usize, expert: usize) -> bool {
        self.active[channel * self.experts + expert]
    }

    pub fn set(&mut self, channel: usize, expert: usize, value: bool) {
        self.active[channel * self.experts + expert] = value;
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Deactivates every currently active pair whose normalized weight (over the
/// pairs that are active and alive) fell below `mu`. The best-weighted
/// survivor of a channel is never deactivated.
pub fn deactivation_mask(weights: &WeightMatrix, mu: f64, current: &ActiveMask, alive: &[bool]) -> ActiveMask {
    let mut next = current.clone();
    for j in 0..current.channels() {
        let row = weights.row(j);
        let eligible: Vec<bool> = (0..current.experts())
            .map(|i| current.get(j, i) && alive[i])
            .collect();
        let total: f64 = row.iter().zip(&eligible).filter(|(_, &e)| e).map(|(w, _)| w).sum();
        if !(total > 0.0) {
            continue;
        }
        let keeper = (0..row.len())
            .filter(|&i| eligible[i])
            .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)));
        for i in 0..row.len() {
            if eligible[i] && Some(i) != keeper && row[i] / total < mu {
                next.set(j, i, false);
            }
        }
    }
    next
}

/// Charges each SU for the channels it sensed this step.
pub fn energy_step(ledger: &EnergyLedger, sense_counts: &[u64]) -> EnergyLedger {
    let mut next = ledger.clone();
    for (i, &count) in sense_counts.iter().enumerate() {
        if let Some(b) = next.budget[i].as_mut() {
            *b = b.saturating_sub(count * ledger.cost_per_sense);
            next.alive[i] = *b > 0;
        }
    }
    next
}

pub fn alive_fraction(ledger: &EnergyLedger) -> f64 {
    if ledger.alive.is_empty() {
        return 0.0;
    }
    ledger.alive.iter().filter(|&&a| a).count() as f64 / ledger.alive.len() as f64
}

/// Reactivates the highest-weight alive expert on any channel left without
/// an active alive detector. Returns how many pairs were restored.
pub fn restore_coverage(weights: &WeightMatrix, mask: &mut ActiveMask, alive: &[bool]) -> usize {
    let mut restored = 0;
    for j in 0..mask.channels() {
        let covered = (0..mask.experts()).any(|i| mask.get(j, i) && alive[i]);
        if covered {
            continue;
        }
        let row = weights.row(j);
        if let Some(best) = (0..mask.experts())
            .filter(|&i| alive[i])
            .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
        {
            mask.set(j, best, true);
            restored += 1;
        }
    }
    restored
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn weights_from(rows: &[Vec<f64>]) -> WeightMatrix {
        let mut w = WeightMatrix::filled(rows.len(), rows[0].len(), 1.0);
        for (j, r) in rows.iter().enumerate() {
            w.row_mut(j).copy_from_slice(r);
        }
        w
    }

    #[test]
    fn uniform_row_keeps_everyone() {
        let s = 10;
        let w = weights_from(&[vec![1.0; s]]);
        let m = deactivation_mask(&w, 1.0 / (2.0 * s as f64), &ActiveMask::all(1, s), &[true; 10]);
        assert_eq!(m.count(), s);
    }

    #[test]
    fn low_weight_pair_is_dropped() {
        let mut row = vec![0.96 / 9.0; 10];
        row[3] = 0.04;
        let w = weights_from(&[row]);
        let m = deactivation_mask(&w, 0.05, &ActiveMask::all(1, 10), &[true; 10]);
        assert!(!m.get(0, 3));
        assert_eq!(m.count(), 9);
    }

    #[test]
    fn dominant_detector_survives() {
        let w = weights_from(&[vec![0.9, 0.02, 0.02, 0.02, 0.02, 0.02]]);
        let m = deactivation_mask(&w, 0.05, &ActiveMask::all(1, 6), &[true; 6]);
        assert_eq!(m.row(0), &[true, false, false, false, false, false]);
    }

    #[test]
    fn at_least_one_detector_remains() {
        // All weights below mu after normalization is impossible unless mu > 1/S,
        // so force it with a large mu.
        let w = weights_from(&[vec![1.0, 1.0, 1.0]]);
        let m = deactivation_mask(&w, 0.9, &ActiveMask::all(1, 3), &[true; 3]);
        assert_eq!(m.count(), 1);
    }

    #[test]
    fn deactivation_is_permanent() {
        let w = weights_from(&[vec![1.0, 1.0]]);
        let mut current = ActiveMask::all(1, 2);
        current.set(0, 1, false);
        let m = deactivation_mask(&w, 0.0, &current, &[true; 2]);
        assert!(!m.get(0, 1));
    }

    #[test]
    fn survive_exactly_one_thousand_steps() {
        let mut ledger = EnergyLedger::new(3, Some(10_000), 1);
        let counts = [10u64; 3];
        for step in 1..=1000 {
            assert_eq!(alive_fraction(&ledger), 1.0, "step {step}");
            ledger = energy_step(&ledger, &counts);
        }
        assert_eq!(alive_fraction(&ledger), 0.0);
    }

    #[test]
    fn zero_counts_leave_ledger() {
        let ledger = EnergyLedger::new(4, Some(7), 1);
        assert_eq!(energy_step(&ledger, &[0; 4]), ledger);
    }

    #[test]
    fn budget_floors_at_zero() {
        let ledger = EnergyLedger::new(1, Some(5), 1);
        let next = energy_step(&ledger, &[10]);
        assert_eq!(next.budget[0], Some(0));
        assert!(!next.alive[0]);
    }

    #[test]
    fn alive_fraction_examples() {
        let mut l = EnergyLedger::unlimited(50);
        assert_eq!(alive_fraction(&l), 1.0);
        for i in 0..25 {
            l.alive[i] = false;
        }
        assert_eq!(alive_fraction(&l), 0.5);
        l.alive.iter_mut().for_each(|a| *a = false);
        assert_eq!(alive_fraction(&l), 0.0);
    }

    #[test]
    fn coverage_restored_from_best_alive() {
        let w = weights_from(&[vec![5.0, 3.0, 4.0]]);
        let mut mask = ActiveMask::all(1, 3);
        mask.set(0, 1, false);
        mask.set(0, 2, false);
        let alive = [false, true, true];
        assert_eq!(restore_coverage(&w, &mut mask, &alive), 1);
        assert!(mask.get(0, 2));
    }

    proptest! {
        #[test]
        fn mask_only_shrinks_and_never_empties(
            rows in prop::collection::vec(prop::collection::vec(1e-6f64..1.0, 6), 1..5),
            mu in 0.0f64..0.6,
        ) {
            let w = weights_from(&rows);
            let start = ActiveMask::all(rows.len(), 6);
            let once = deactivation_mask(&w, mu, &start, &[true; 6]);
            let twice = deactivation_mask(&w, mu, &once, &[true; 6]);
            for j in 0..rows.len() {
                prop_assert!(once.row(j).iter().any(|&a| a));
                for i in 0..6 {
                    prop_assert!(!twice.get(j, i) || once.get(j, i));
                    prop_assert!(!once.get(j, i) || start.get(j, i));
                }
            }
        }
    }
}
