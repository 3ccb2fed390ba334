//! The simulation loop: traffic, mobility, sensing, fusion, probing,
//! learning, deactivation and energy accounting, one step at a time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{and_fuse, majority_fuse, or_fuse};
use crate::config::{Algorithm, DecisionPolicy, LearnerKind, ScenarioConfig};
use crate::detector::{hard_decision, np_threshold, sense_energy, EnergyDetectorConfig, LinkGain};
use crate::energy::{alive_fraction, deactivation_mask, energy_step, restore_coverage, ActiveMask, EnergyLedger};
use crate::error::Result;
use crate::fdr::{bh_select, BhInput, SwitchMode, SwitchState};
use crate::hedge::HedgeState;
use crate::metrics::{MetricsLog, StepRecord};
use crate::model::{ChannelState, CombiningMode, ObservationMatrix};
use crate::perceptron::PerceptronState;
use crate::simulator::{
    generate_topology, link_gains, move_nodes, observe_agt, traffic_step, ChannelTraffic, MobilityModel, ProbeOutcome,
    RoundRobin, Topology, TrafficModel,
};

const STREAM_TOPOLOGY: u64 = 0;
const STREAM_TRAFFIC_SETUP: u64 = 1;
const STREAM_TRAFFIC: u64 = 2;
const STREAM_SENSING: u64 = 3;
const STREAM_PROBE: u64 = 4;
const STREAM_MOBILITY: u64 = 5;
const STREAM_NULL_BANK: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

enum Learner {
    Hedge(HedgeState),
    Perceptron(PerceptronState),
    Baseline(Algorithm),
}

/// Everything that happened in one step, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub truth: Vec<ChannelState>,
    pub observations: ObservationMatrix,
    /// Decisions before any BH selection.
    pub threshold_decisions: Vec<ChannelState>,
    pub decisions: Vec<ChannelState>,
    pub probe: ProbeOutcome,
    pub mode: Option<SwitchMode>,
}

pub struct Scenario {
    cfg: ScenarioConfig,
    detector: EnergyDetectorConfig,
    zeta: Vec<f64>,
    topology: Topology,
    gains: Vec<Vec<LinkGain>>,
    fixed_gains: bool,
    mobility: MobilityModel,
    traffic: Vec<ChannelTraffic>,
    learner: Learner,
    switch: Option<SwitchState>,
    mask: ActiveMask,
    ledger: EnergyLedger,
    scheduler: RoundRobin,
    rng_traffic: ChaCha8Rng,
    rng_sensing: ChaCha8Rng,
    rng_probe: ChaCha8Rng,
    rng_mobility: ChaCha8Rng,
    log: MetricsLog,
    step: u64,
    last: Option<StepTrace>,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let (channels, experts) = (cfg.topology.pus, cfg.topology.sus);
        let detector = cfg.detector_config();
        let zeta = vec![np_threshold(&detector)?; experts];

        let mut rng_topo = stream(cfg.seed, STREAM_TOPOLOGY);
        let t = &cfg.topology;
        let topology = generate_topology(channels, experts, t.area_side, t.carrier_ghz, t.pu_tx_db, &mut rng_topo);
        let (gains, fixed_gains) = match &t.signal_variances {
            Some(rows) => (
                rows.iter()
                    .map(|r| r.iter().map(|&v| LinkGain::new(v)).collect())
                    .collect(),
                true,
            ),
            None => (link_gains(&topology, t.noise_floor_db, detector.noise_variance), false),
        };

        let mut rng_setup = stream(cfg.seed, STREAM_TRAFFIC_SETUP);
        let tc = &cfg.traffic;
        let traffic = (0..channels)
            .map(|_| {
                let on = TrafficModel::random(tc.components, tc.rate_min, tc.rate_max, &mut rng_setup)?;
                let off = TrafficModel::random(tc.components, tc.rate_min, tc.rate_max, &mut rng_setup)?;
                Ok(ChannelTraffic::start(on, off, &mut rng_setup))
            })
            .collect::<Result<Vec<_>>>()?;

        let lp = cfg.learner_params();
        let learner = match cfg.algorithm.learner() {
            LearnerKind::Hedge => Learner::Hedge(match cfg.algorithm.combining() {
                CombiningMode::Hard => HedgeState::new_hard(channels, experts, lp.w0, lp.beta, lp.discount),
                CombiningMode::Soft => {
                    HedgeState::new_soft(channels, experts, lp.w0, lp.beta, lp.discount, cfg.null_model())
                }
            }),
            LearnerKind::Perceptron => {
                let bank_seed = stream(cfg.seed, STREAM_NULL_BANK).random();
                Learner::Perceptron(PerceptronState::new(
                    channels,
                    experts,
                    lp.rho,
                    lp.discount,
                    cfg.null_model(),
                    cfg.learner.threshold_samples,
                    bank_seed,
                )?)
            }
            LearnerKind::Baseline => Learner::Baseline(cfg.algorithm),
        };
        let switch = (cfg.algorithm.policy() == DecisionPolicy::Switch).then(|| SwitchState::new(lp.tau_switch));

        Ok(Self {
            detector,
            zeta,
            topology,
            gains,
            fixed_gains,
            mobility: cfg.mobility_model(),
            traffic,
            learner,
            switch,
            mask: ActiveMask::all(channels, experts),
            ledger: EnergyLedger::new(experts, cfg.energy.budget, cfg.energy.cost_per_sense),
            scheduler: RoundRobin::default(),
            rng_traffic: stream(cfg.seed, STREAM_TRAFFIC),
            rng_sensing: stream(cfg.seed, STREAM_SENSING),
            rng_probe: stream(cfg.seed, STREAM_PROBE),
            rng_mobility: stream(cfg.seed, STREAM_MOBILITY),
            log: MetricsLog::new(experts),
            step: 0,
            last: None,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn gains(&self) -> &[Vec<LinkGain>] {
        &self.gains
    }

    pub fn mask(&self) -> &ActiveMask {
        &self.mask
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn into_log(self) -> MetricsLog {
        self.log
    }

    pub fn last_step(&self) -> Option<&StepTrace> {
        self.last.as_ref()
    }

    pub fn hedge(&self) -> Option<&HedgeState> {
        match &self.learner {
            Learner::Hedge(h) => Some(h),
            _ => None,
        }
    }

    pub fn perceptron(&self) -> Option<&PerceptronState> {
        match &self.learner {
            Learner::Perceptron(p) => Some(p),
            _ => None,
        }
    }

    /// Normalized Hedge weights of channel `j` over the detectors that are
    /// currently active and alive.
    pub fn normalized_weights(&self, channel: usize) -> Option<Vec<f64>> {
        let h = self.hedge()?;
        let active: Vec<bool> = (0..self.mask.experts())
            .map(|i| self.mask.get(channel, i) && self.ledger.alive[i])
            .collect();
        h.normalized_over(channel, &active).ok()
    }

    fn sense(&mut self, truth: &[ChannelState]) -> Result<(ObservationMatrix, Vec<u64>)> {
        let (channels, experts) = (self.mask.channels(), self.mask.experts());
        let mode = self.cfg.algorithm.combining();
        let mut obs = ObservationMatrix::new(channels, experts, mode);
        let mut counts = vec![0u64; experts];
        for j in 0..channels {
            for i in 0..experts {
                if !(self.mask.get(j, i) && self.ledger.alive[i]) {
                    continue;
                }
                let e = sense_energy(truth[j], self.gains[j][i], &self.detector, &mut self.rng_sensing);
                let value = match mode {
                    CombiningMode::Hard => hard_decision(e, self.zeta[i]).as_u8() as f64,
                    CombiningMode::Soft => e,
                };
                obs.set(j, i, value)?;
                counts[i] += 1;
            }
        }
        Ok((obs, counts))
    }

    /// Applies the BH rule to the observed channels.
    fn bh_decisions(&self, p_values: &[f64], observed: &[bool]) -> Result<Vec<ChannelState>> {
        let idx: Vec<usize> = (0..p_values.len()).filter(|&j| observed[j]).collect();
        let mut out: Vec<ChannelState> = observed
            .iter()
            .map(|&o| if o { ChannelState::Idle } else { ChannelState::Busy })
            .collect();
        if idx.is_empty() {
            return Ok(out);
        }
        let input = BhInput::new(idx.iter().map(|&j| p_values[j]).collect(), self.cfg.learner.alpha_fdr)?;
        for k in bh_select(&input) {
            out[idx[k]] = ChannelState::Busy;
        }
        Ok(out)
    }

    /// Runs one step and appends its cumulative record.
    pub fn step(&mut self) -> Result<&StepRecord> {
        self.step += 1;
        let alive_at_start = alive_fraction(&self.ledger);
        let truth = traffic_step(&mut self.traffic, &mut self.rng_traffic);
        if self.mobility.enabled() {
            move_nodes(&mut self.topology, &self.mobility, &mut self.rng_mobility);
            if !self.fixed_gains {
                self.gains = link_gains(&self.topology, self.cfg.topology.noise_floor_db, self.detector.noise_variance);
            }
        }
        let (obs, counts) = self.sense(&truth)?;

        let policy = self.cfg.algorithm.policy();
        let mode = self.switch.as_ref().map(|s| s.mode);
        let use_bh = match policy {
            DecisionPolicy::Bh => true,
            DecisionPolicy::Switch => mode == Some(SwitchMode::Bh),
            DecisionPolicy::Threshold => false,
        };

        let (threshold_decisions, p_values, observed) = match &mut self.learner {
            Learner::Hedge(h) => {
                let d = h.decide(&obs)?;
                (d.vector.decisions, d.p_values, d.observed)
            }
            Learner::Perceptron(p) => {
                let d = p.decide(&obs)?;
                (d.vector.decisions.clone(), Some(d.p_values.clone()), d.observed.clone())
            }
            Learner::Baseline(a) => {
                let fuse = match a {
                    Algorithm::Or => or_fuse,
                    Algorithm::And => and_fuse,
                    _ => majority_fuse,
                };
                let observed: Vec<bool> = (0..obs.channels()).map(|j| obs.active_count(j) > 0).collect();
                let decisions = (0..obs.channels())
                    .map(|j| {
                        if observed[j] {
                            fuse(obs.row(j), obs.active_row(j))
                        } else {
                            ChannelState::Busy
                        }
                    })
                    .collect();
                (decisions, None, observed)
            }
        };
        let decisions = match (&p_values, use_bh) {
            (Some(p), true) => self.bh_decisions(p, &observed)?,
            _ => threshold_decisions.clone(),
        };

        let probe = observe_agt(
            &decisions,
            &truth,
            &self.ledger.alive,
            self.cfg.packet_loss,
            &mut self.scheduler,
            &mut self.rng_probe,
        );

        match &mut self.learner {
            Learner::Hedge(h) => h.update(&obs, &decisions, &probe.agt, &self.zeta)?,
            Learner::Perceptron(p) => {
                // Recomputing the decision is cheap next to the bookkeeping of
                // carrying the folded matrix through the policy branch.
                let d = p.decide(&obs)?;
                p.update(&obs, &d, &decisions, &probe.agt)?;
            }
            Learner::Baseline(_) => {}
        }
        if let Some(s) = self.switch.as_mut() {
            s.record(probe.collisions(), probe.attempts());
        }

        if self.cfg.energy.deactivation {
            if let Learner::Hedge(h) = &self.learner {
                self.mask = deactivation_mask(&h.weights, self.cfg.mu(), &self.mask, &self.ledger.alive);
            }
        }
        self.ledger = energy_step(&self.ledger, &counts);
        if let Learner::Hedge(h) = &self.learner {
            restore_coverage(&h.weights, &mut self.mask, &self.ledger.alive);
        }

        for (total, c) in self.log.sensing_per_su.iter_mut().zip(&counts) {
            *total += c;
        }
        let prev = self.log.records.last();
        let mut rec = StepRecord {
            step: self.step,
            pu_collisions: prev.map_or(0, |r| r.pu_collisions),
            busy_steps: prev.map_or(0, |r| r.busy_steps),
            detections: prev.map_or(0, |r| r.detections),
            su_collisions: prev.map_or(0, |r| r.su_collisions),
            attempts: prev.map_or(0, |r| r.attempts),
            missed: prev.map_or(0, |r| r.missed),
            idle_steps: prev.map_or(0, |r| r.idle_steps),
            sensing: prev.map_or(0, |r| r.sensing) + counts.iter().sum::<u64>(),
            alive_frac: alive_at_start,
            mode: match policy {
                DecisionPolicy::Threshold => "plain",
                DecisionPolicy::Bh => "bh",
                DecisionPolicy::Switch => mode.map_or("plain", SwitchMode::label),
            }
            .to_string(),
        };
        for j in 0..truth.len() {
            match truth[j] {
                ChannelState::Busy => {
                    rec.busy_steps += 1;
                    rec.detections += decisions[j].is_busy() as u64;
                    rec.pu_collisions += probe.collided[j] as u64;
                }
                ChannelState::Idle => {
                    rec.idle_steps += 1;
                    rec.missed += decisions[j].is_busy() as u64;
                }
            }
        }
        rec.su_collisions += probe.collisions();
        rec.attempts += probe.attempts();
        self.log.records.push(rec);

        self.last = Some(StepTrace {
            truth,
            observations: obs,
            threshold_decisions,
            decisions,
            probe,
            mode,
        });
        Ok(self.log.records.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<MetricsLog> {
        while self.step < self.cfg.steps {
            self.step()?;
        }
        Ok(self.log)
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsLog> {
    Scenario::new(cfg.clone())?.run()
}

/// Empirical fusion-center operating point for one false-alarm target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub target: f64,
    pub pfa: f64,
    pub pd: f64,
}

/// Targets are clamped into the open unit interval.
pub const ROC_TARGET_MARGIN: f64 = 1e-12;

pub fn roc_point(cfg: &ScenarioConfig, target: f64) -> Result<RocPoint> {
    let mut c = cfg.clone();
    c.detector.pfa = target.clamp(ROC_TARGET_MARGIN, 1.0 - ROC_TARGET_MARGIN);
    let log = run_scenario(&c)?;
    let (pfa, pd) = log.last().map_or((0.0, 0.0), |r| r.fc_rates());
    Ok(RocPoint { target, pfa, pd })
}

pub fn roc_sweep(cfg: &ScenarioConfig, pfa_list: &[f64]) -> Result<Vec<RocPoint>> {
    pfa_list.iter().map(|&t| roc_point(cfg, t)).collect()
}
