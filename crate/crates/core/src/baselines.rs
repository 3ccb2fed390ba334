//! Classical hard-combining fusion rules.

use crate::model::ChannelState;

fn active_bits<'a>(bits: &'a [f64], active: &'a [bool]) -> impl Iterator<Item = bool> + 'a {
    bits.iter().zip(active).filter(|(_, &a)| a).map(|(&b, _)| b == 1.0)
}

/// Busy if any active detector reports busy.
pub fn or_fuse(bits: &[f64], active: &[bool]) -> ChannelState {
    ChannelState::from_bit(active_bits(bits, active).any(|b| b))
}

/// Busy only if every active detector reports busy. An empty row is busy.
pub fn and_fuse(bits: &[f64], active: &[bool]) -> ChannelState {
    ChannelState::from_bit(active_bits(bits, active).all(|b| b))
}

/// Busy if at least half of the active detectors report busy.
pub fn majority_fuse(bits: &[f64], active: &[bool]) -> ChannelState {
    let (ones, n) = active_bits(bits, active).fold((0usize, 0usize), |(o, n), b| (o + b as usize, n + 1));
    ChannelState::from_bit(n == 0 || 2 * ones >= n)
}
