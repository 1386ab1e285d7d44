use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{AttackConfig, AttackKind, FrameSchedule, NetworkConfig};
use super::timeline::{ActivityTimeline, TxInterval};
use super::SimError;
use crate::can::{arbitrate, serialize_frame, CanFrame, FrameRecord, MAX_DLC, MAX_STANDARD_ID};

/// Inter-frame space, in bit times.
const IFS_BITS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EcuNode {
    pub name: String,
    pub owned_ids: BTreeSet<u16>,
    pub schedule: Vec<FrameSchedule>,
}

/// An initialized network ready to run. Attacks are added with [`inject`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    bitrate_bps: f64,
    jitter: f64,
    nodes: Vec<EcuNode>,
    attacks: Vec<AttackConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedEmission {
    pub release: f64,
    pub id: u16,
    pub sender: String,
    pub spoofed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub duration_s: f64,
    pub seed: u64,
    pub emitted: usize,
    pub transmitted: usize,
    pub spoofed_transmitted: usize,
    pub dropped: Vec<DroppedEmission>,
    /// Arbitration rounds in which two senders drove the same id.
    pub id_collisions: usize,
    /// Worst release-to-SOF delay per id; large values flag starvation.
    pub max_latency_s: BTreeMap<u16, f64>,
    pub bus_utilization: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: Vec<FrameRecord>,
    pub timeline: ActivityTimeline,
    pub summary: SimSummary,
}

/// Validates a configuration and loads its schedules. `[[attack]]` sections
/// in the config are injected as well.
pub fn build_network(config: &NetworkConfig) -> Result<Simulation, SimError> {
    if config.ecu.is_empty() {
        return Err(SimError::EmptyNetwork);
    }
    let bitrate = config.network.bitrate_bps;
    if !(bitrate.is_finite() && bitrate > 0.0) {
        return Err(SimError::InvalidConfig(format!("bitrate {bitrate}")));
    }
    let jitter = config.network.jitter;
    if !(0.0..0.5).contains(&jitter) {
        return Err(SimError::InvalidConfig(format!("jitter {jitter}")));
    }
    let mut owners: BTreeMap<u16, &str> = BTreeMap::new();
    let mut names = BTreeSet::new();
    let mut nodes = Vec::with_capacity(config.ecu.len());
    for ecu in &config.ecu {
        if ecu.name.is_empty() || !names.insert(ecu.name.as_str()) {
            return Err(SimError::InvalidConfig(format!(
                "duplicate or empty ECU name {:?}",
                ecu.name
            )));
        }
        let mut owned_ids = BTreeSet::new();
        for f in &ecu.frames {
            if f.id > MAX_STANDARD_ID || f.dlc > MAX_DLC {
                return Err(SimError::InvalidConfig(format!(
                    "frame {:#x} dlc {} out of range",
                    f.id, f.dlc
                )));
            }
            if !(f.period_s.is_finite() && f.period_s > 0.0) || !(f.phase_s >= 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "frame {:#x}: period {} phase {}",
                    f.id, f.period_s, f.phase_s
                )));
            }
            if let Some(first) = owners.insert(f.id, &ecu.name) {
                return Err(SimError::OwnershipConflict {
                    id: f.id,
                    first: first.to_string(),
                    second: ecu.name.clone(),
                });
            }
            owned_ids.insert(f.id);
        }
        nodes.push(EcuNode {
            name: ecu.name.clone(),
            owned_ids,
            schedule: ecu.frames.clone(),
        });
    }
    let mut sim = Simulation {
        bitrate_bps: bitrate,
        jitter,
        nodes,
        attacks: Vec::new(),
    };
    for attack in &config.attack {
        sim = inject(sim, attack.clone())?;
    }
    Ok(sim)
}

/// Adds an attacker that sends `victim_id` frames at `rate_hz` from `start_s`.
pub fn inject(mut sim: Simulation, attack: AttackConfig) -> Result<Simulation, SimError> {
    let owner = sim
        .owner_of(attack.victim_id)
        .ok_or(SimError::UnknownVictimId(attack.victim_id))?;
    if owner == attack.attacker {
        return Err(SimError::InvalidAttack(format!(
            "{} already owns {:#05x}",
            attack.attacker, attack.victim_id
        )));
    }
    let exists = sim.nodes.iter().any(|n| n.name == attack.attacker);
    match attack.kind {
        AttackKind::Impersonation if !exists => {
            return Err(SimError::InvalidAttack(format!(
                "impersonation attacker {} is not a network member",
                attack.attacker
            )))
        }
        AttackKind::AddedDevice if exists => {
            return Err(SimError::InvalidAttack(format!(
                "added device {} collides with a network member",
                attack.attacker
            )))
        }
        _ => {}
    }
    if !(attack.start_s.is_finite() && attack.start_s >= 0.0) {
        return Err(SimError::InvalidAttack(format!("start {}", attack.start_s)));
    }
    if !(attack.rate_hz.is_finite() && attack.rate_hz > 0.0) {
        return Err(SimError::InvalidAttack(format!("rate {}", attack.rate_hz)));
    }
    if attack.stop_s.is_some_and(|s| !(s >= attack.start_s)) {
        return Err(SimError::InvalidAttack("stop before start".into()));
    }
    sim.attacks.push(attack);
    Ok(sim)
}

#[derive(Debug, Clone)]
struct Emission {
    release: f64,
    sender: usize,
    frame: CanFrame,
    spoofed: bool,
}

impl Simulation {
    pub fn bitrate_bps(&self) -> f64 {
        self.bitrate_bps
    }

    pub fn nodes(&self) -> &[EcuNode] {
        &self.nodes
    }

    pub fn attacks(&self) -> &[AttackConfig] {
        &self.attacks
    }

    /// Periodic schedule entries plus injected attack streams.
    pub fn pending_count(&self) -> usize {
        self.nodes.iter().map(|n| n.schedule.len()).sum::<usize>() + self.attacks.len()
    }

    pub fn owner_of(&self, id: u16) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.owned_ids.contains(&id))
            .map(|n| n.name.as_str())
    }

    pub fn ownership(&self) -> BTreeMap<u16, String> {
        self.nodes
            .iter()
            .flat_map(|n| n.owned_ids.iter().map(move |&id| (id, n.name.clone())))
            .collect()
    }

    /// Senders in index order: network members, then added devices.
    fn senders(&self) -> Vec<String> {
        let mut names: Vec<String> = self.nodes.iter().map(|n| n.name.clone()).collect();
        for a in &self.attacks {
            if !names.contains(&a.attacker) {
                names.push(a.attacker.clone());
            }
        }
        names
    }

    fn dlc_of(&self, id: u16) -> u8 {
        self.nodes
            .iter()
            .flat_map(|n| n.schedule.iter())
            .find(|f| f.id == id)
            .map_or(MAX_DLC, |f| f.dlc)
    }

    /// Draws every release over `[0, duration)` in a fixed order so that the
    /// result depends only on the seed.
    fn emissions(&self, duration: f64, rng: &mut ChaCha8Rng) -> Vec<Emission> {
        let senders = self.senders();
        let index_of = |name: &str| senders.iter().position(|s| s == name).unwrap();
        let mut out = Vec::new();
        let mut stream =
            |sender: usize, id: u16, dlc: u8, start: f64, period: f64, stop: f64, spoofed: bool| {
                let mut k = 0u64;
                loop {
                    let nominal = start + k as f64 * period;
                    if nominal >= stop {
                        break;
                    }
                    let offset = if self.jitter > 0.0 {
                        rng.random_range(-self.jitter..self.jitter) * period
                    } else {
                        0.0
                    };
                    let mut payload = vec![0u8; dlc as usize];
                    rng.fill(&mut payload[..]);
                    if let Some(first) = payload.first_mut() {
                        *first = (k % 256) as u8;
                    }
                    let release = (nominal + offset).max(start);
                    out.push(Emission {
                        release,
                        sender,
                        frame: CanFrame::new(id, payload, 0.0).expect("validated schedule"),
                        spoofed,
                    });
                    k += 1;
                }
            };
        for (i, node) in self.nodes.iter().enumerate() {
            for f in &node.schedule {
                stream(i, f.id, f.dlc, f.phase_s, f.period_s, duration, false);
            }
        }
        for a in &self.attacks {
            let stop = a.stop_s.unwrap_or(duration).min(duration);
            let dlc = self.dlc_of(a.victim_id);
            stream(
                index_of(&a.attacker),
                a.victim_id,
                dlc,
                a.start_s,
                1.0 / a.rate_hz,
                stop,
                true,
            );
        }
        out.sort_by(|a, b| {
            a.release
                .total_cmp(&b.release)
                .then(a.sender.cmp(&b.sender))
                .then(a.frame.id().cmp(&b.frame.id()))
        });
        out
    }

    /// Runs the bus for `duration` seconds. Frames that cannot complete
    /// before `duration` are reported as dropped.
    pub fn run(&self, duration: f64, seed: u64) -> Result<SimOutput, SimError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SimError::InvalidConfig(format!("duration {duration}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emissions = self.emissions(duration, &mut rng);
        let senders = self.senders();
        let bit_time = 1.0 / self.bitrate_bps;

        let mut log = Vec::new();
        let mut timeline = ActivityTimeline::new(senders.iter().cloned());
        let mut dropped = Vec::new();
        let mut max_latency: BTreeMap<u16, f64> = BTreeMap::new();
        let mut id_collisions = 0;
        let mut busy_time = 0.0;

        let mut pending: Vec<Emission> = Vec::new();
        let mut next = 0;
        let mut t = 0.0f64;
        loop {
            if pending.is_empty() {
                let Some(e) = emissions.get(next) else { break };
                t = t.max(e.release);
            }
            while let Some(e) = emissions.get(next).filter(|e| e.release <= t) {
                pending.push(e.clone());
                next += 1;
            }

            // One representative per id: the earliest-released emission.
            let mut reps: Vec<usize> = Vec::new();
            for (i, e) in pending.iter().enumerate() {
                match reps.iter().position(|&r| pending[r].frame.id() == e.frame.id()) {
                    Some(_) => {}
                    None => reps.push(i),
                }
            }
            let contenders: Vec<CanFrame> = reps.iter().map(|&r| pending[r].frame.clone()).collect();
            let winner_id = arbitrate(&contenders)?.id();
            if pending.iter().filter(|e| e.frame.id() == winner_id).count() > 1 {
                id_collisions += 1;
            }
            let winner_idx = reps
                .iter()
                .copied()
                .find(|&r| pending[r].frame.id() == winner_id)
                .expect("winner is a representative");
            let e = pending.remove(winner_idx);

            let bits = serialize_frame(&e.frame)?;
            let tx_time = bits.len() as f64 * bit_time;
            if t + tx_time > duration {
                dropped.push(DroppedEmission {
                    release: e.release,
                    id: e.frame.id(),
                    sender: senders[e.sender].clone(),
                    spoofed: e.spoofed,
                });
                continue;
            }
            let latency = max_latency.entry(e.frame.id()).or_insert(0.0);
            *latency = latency.max(t - e.release);

            let sender = senders[e.sender].clone();
            timeline.push(
                &sender,
                TxInterval {
                    t_start: t,
                    t_end: t + tx_time,
                    bits,
                    event: log.len(),
                },
            );
            log.push(FrameRecord {
                frame: e.frame.with_timestamp(t)?,
                sender,
                spoofed: e.spoofed,
            });
            busy_time += tx_time;
            t += tx_time + IFS_BITS * bit_time;
        }

        let summary = SimSummary {
            duration_s: duration,
            seed,
            emitted: emissions.len(),
            transmitted: log.len(),
            spoofed_transmitted: log.iter().filter(|r| r.spoofed).count(),
            dropped,
            id_collisions,
            max_latency_s: max_latency,
            bus_utilization: busy_time / duration,
        };
        Ok(SimOutput {
            log,
            timeline,
            summary,
        })
    }
}
