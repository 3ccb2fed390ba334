//! Network environment: node placement, Winner II path loss, hyper-exponential
//! ON/OFF traffic, mobility and the transmit probe that yields the
//! approximate ground truth.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::detector::LinkGain;
use crate::error::{Error, Result};
use crate::model::{AgtLabel, ChannelState};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub pu_positions: Vec<Point>,
    pub su_positions: Vec<Point>,
    pub area_side: f64,
    pub carrier_ghz: f64,
    pub pu_tx_power_db: f64,
    pub pu_headings: Vec<f64>,
    pub su_headings: Vec<f64>,
}

fn uniform_point<R: Rng + ?Sized>(side: f64, rng: &mut R) -> Point {
    [rng.random::<f64>() * side, rng.random::<f64>() * side]
}

/// Places `pus` primary and `sus` secondary users uniformly in the square.
pub fn generate_topology<R: Rng + ?Sized>(
    pus: usize,
    sus: usize,
    area_side: f64,
    carrier_ghz: f64,
    pu_tx_power_db: f64,
    rng: &mut R,
) -> Topology {
    let pu_positions = (0..pus).map(|_| uniform_point(area_side, rng)).collect();
    let su_positions = (0..sus).map(|_| uniform_point(area_side, rng)).collect();
    let pu_headings = (0..pus).map(|_| rng.random::<f64>() * TAU).collect();
    let su_headings = (0..sus).map(|_| rng.random::<f64>() * TAU).collect();
    Topology {
        pu_positions,
        su_positions,
        area_side,
        carrier_ghz,
        pu_tx_power_db,
        pu_headings,
        su_headings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub db: f64,
    /// The distance was not positive and was replaced by 1 m.
    pub clamped: bool,
}

/// Winner II path loss with `r` in meters and `fc` in GHz.
pub fn winner2_pathloss(r: f64, fc_ghz: f64) -> PathLoss {
    let clamped = !(r > 0.0);
    let r = if clamped { 1.0 } else { r };
    PathLoss {
        db: 20.0 * r.log10() + 46.4 + 20.0 * (fc_ghz / 5.0).log10(),
        clamped,
    }
}

/// Received signal variance in linear units.
pub fn link_gain(pt_db: f64, pl_db: f64) -> LinkGain {
    LinkGain::new(10f64.powf((pt_db - pl_db) / 10.0))
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Channel-by-SU signal variances, expressed relative to the detector noise.
/// Channel `j` is owned by PU `j`. The received power is referenced to
/// `noise_floor_db` and scaled by `noise_variance`.
pub fn link_gains(topology: &Topology, noise_floor_db: f64, noise_variance: f64) -> Vec<Vec<LinkGain>> {
    topology
        .pu_positions
        .iter()
        .map(|&pu| {
            topology
                .su_positions
                .iter()
                .map(|&su| {
                    let pl = winner2_pathloss(distance(pu, su), topology.carrier_ghz);
                    let g = link_gain(topology.pu_tx_power_db - noise_floor_db, pl.db);
                    LinkGain::new(g.signal_variance * noise_variance)
                })
                .collect()
        })
        .collect()
}

/// Hyper-exponential duration law: component `k` has weight `p_k` and rate
/// `lambda_k` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
}

impl TrafficModel {
    pub fn new(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != rates.len() {
            return Err(Error::config("traffic model needs matching, nonempty weights and rates"));
        }
        if weights.iter().any(|&p| !(p >= 0.0)) || rates.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::config("traffic weights must be nonnegative and rates positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("traffic weights sum to {total}, not 1")));
        }
        Ok(Self { weights, rates })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![rate])
    }

    /// Draws `components` weights by normalizing uniforms and rates uniformly
    /// from `(rate_min, rate_max]`.
    pub fn random<R: Rng + ?Sized>(components: usize, rate_min: f64, rate_max: f64, rng: &mut R) -> Result<Self> {
        if components == 0 || !(rate_min >= 0.0 && rate_max > rate_min) {
            return Err(Error::config("invalid traffic rate range"));
        }
        let raw: Vec<f64> = (0..components).map(|_| 1.0 - rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|r| r / total).collect();
        let rates = (0..components)
            .map(|_| rate_max - rng.random::<f64>() * (rate_max - rate_min))
            .collect();
        Ok(Self { weights, rates })
    }

    /// Mean of the continuous mixture, before rounding to whole steps.
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.rates).map(|(p, l)| p / l).sum()
    }
}

/// One duration in whole steps, at least 1.
pub fn sample_hed<R: Rng + ?Sized>(model: &TrafficModel, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = model.weights.len() - 1;
    for (idx, p) in model.weights.iter().enumerate() {
        acc += p;
        if u < acc {
            k = idx;
            break;
        }
    }
    let x = Exp::new(model.rates[k]).expect("positive rate").sample(rng);
    (x.ceil() as u64).max(1)
}

/// ON/OFF renewal process of one PU.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTraffic {
    pub on: TrafficModel,
    pub off: TrafficModel,
    pub busy: bool,
    pub remaining: u64,
}

impl ChannelTraffic {
    /// Starts in a random phase with a fresh duration.
    pub fn start<R: Rng + ?Sized>(on: TrafficModel, off: TrafficModel, rng: &mut R) -> Self {
        let busy = rng.random::<bool>();
        let remaining = sample_hed(if busy { &on } else { &off }, rng);
        Self {
            on,
            off,
            busy,
            remaining,
        }
    }

    pub fn state(&self) -> ChannelState {
        ChannelState::from_bit(self.busy)
    }
}

/// Advances every channel by one step and returns the occupancy for that step.
pub fn traffic_step<R: Rng + ?Sized>(channels: &mut [ChannelTraffic], rng: &mut R) -> Vec<ChannelState> {
    channels
        .iter_mut()
        .map(|c| {
            c.remaining = c.remaining.saturating_sub(1);
            if c.remaining == 0 {
                c.busy = !c.busy;
                c.remaining = sample_hed(if c.busy { &c.on } else { &c.off }, rng);
            }
            c.state()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    pub pus_mobile: bool,
    pub sus_mobile: bool,
    /// Meters per second.
    pub speed: f64,
    /// Seconds per simulation step.
    pub step_duration: f64,
}

impl Default for MobilityModel {
    fn default() -> Self {
        Self {
            pus_mobile: false,
            sus_mobile: false,
            speed: 5.0,
            step_duration: 1.0,
        }
    }
}

impl MobilityModel {
    pub fn enabled(&self) -> bool {
        (self.pus_mobile || self.sus_mobile) && self.speed > 0.0
    }
}

fn reflect(x: f64, side: f64) -> (f64, bool) {
    if x < 0.0 {
        ((-x).min(side), true)
    } else if x > side {
        ((2.0 * side - x).max(0.0), true)
    } else {
        (x, false)
    }
}

fn advance<R: Rng + ?Sized>(pos: &mut [Point], headings: &mut [f64], step: f64, side: f64, rng: &mut R) {
    for (p, h) in pos.iter_mut().zip(headings.iter_mut()) {
        let (x, bx) = reflect(p[0] + step * h.cos(), side);
        let (y, by) = reflect(p[1] + step * h.sin(), side);
        *p = [x, y];
        if bx || by {
            *h = rng.random::<f64>() * TAU;
        }
    }
}

/// Moves mobile nodes along their headings, reflecting off the area edges.
pub fn move_nodes<R: Rng + ?Sized>(topology: &mut Topology, mobility: &MobilityModel, rng: &mut R) {
    let step = mobility.speed * mobility.step_duration;
    if !(step > 0.0) {
        return;
    }
    let side = topology.area_side;
    if mobility.pus_mobile {
        advance(&mut topology.pu_positions, &mut topology.pu_headings, step, side, rng);
    }
    if mobility.sus_mobile {
        advance(&mut topology.su_positions, &mut topology.su_headings, step, side, rng);
    }
}

/// Cycles the transmitting SU over the alive population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    pub fn pick(&mut self, alive: &[bool]) -> Option<usize> {
        let n = alive.len();
        (0..n).map(|k| (self.next + k) % n).find(|&i| alive[i]).inspect(|&i| {
            self.next = (i + 1) % n;
        })
    }
}

/// Result of probing the channels the fusion center declared idle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub agt: Vec<AgtLabel>,
    pub transmitter: Vec<Option<usize>>,
    /// An SU transmitted while the PU was on.
    pub collided: Vec<bool>,
    /// The transmission failed on an idle channel.
    pub lost: Vec<bool>,
}

impl ProbeOutcome {
    pub fn attempts(&self) -> u64 {
        self.transmitter.iter().filter(|t| t.is_some()).count() as u64
    }

    pub fn collisions(&self) -> u64 {
        self.collided.iter().filter(|&&c| c).count() as u64
    }
}

/// Fills the approximate ground truth. Busy decisions are not probed; each
/// idle decision sends one packet from the next alive SU.
pub fn observe_agt<R: Rng + ?Sized>(
    decisions: &[ChannelState],
    truth: &[ChannelState],
    alive: &[bool],
    packet_loss: f64,
    scheduler: &mut RoundRobin,
    rng: &mut R,
) -> ProbeOutcome {
    let n = decisions.len();
    let mut out = ProbeOutcome {
        agt: vec![AgtLabel::AssumedBusy; n],
        transmitter: vec![None; n],
        collided: vec![false; n],
        lost: vec![false; n],
    };
    for j in 0..n {
        if decisions[j].is_busy() {
            continue;
        }
        let Some(tx) = scheduler.pick(alive) else {
            continue;
        };
        out.transmitter[j] = Some(tx);
        out.agt[j] = match truth[j] {
            ChannelState::Busy => {
                out.collided[j] = true;
                AgtLabel::Observed(ChannelState::Busy)
            }
            ChannelState::Idle => {
                if packet_loss > 0.0 && rng.random::<f64>() < packet_loss {
                    out.lost[j] = true;
                    AgtLabel::Observed(ChannelState::Busy)
                } else {
                    AgtLabel::Observed(ChannelState::Idle)
                }
            }
        };
    }
    out
}
