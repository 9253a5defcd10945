//! Ground-truth simulator: hidden state, stochastic switching, protection,
//! and observations filtered through sensor behavior modes.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{DeviceId, LineId};
use crate::scalar::Real;
use crate::topology::{
    apply_switch, settle_protection, NetworkTopology, Position, PositionAssignment, SwitchError,
    SwitchState,
};

/// Behavior mode of a fault detector or actuator. The abnormal modes are
/// permanent; a fault detector's mode never changes within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorMode {
    Correct,
    Liar,
    Broken,
}

/// Position detectors can be broken but never lie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdMode {
    Correct,
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FdReading {
    FaultDownstream,
    NoFault,
    NoInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PdReading {
    Open,
    Closed,
    NoInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Notification {
    Positive,
    Negative,
    None,
}

/// A switching operation on a remote device.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchOp {
    pub device: DeviceId,
    pub target: Position,
}

impl SwitchOp {
    pub fn open(device: impl Into<DeviceId>) -> Self {
        SwitchOp {
            device: device.into(),
            target: Position::Open,
        }
    }

    pub fn close(device: impl Into<DeviceId>) -> Self {
        SwitchOp {
            device: device.into(),
            target: Position::Closed,
        }
    }
}

/// Everything the operators can see after an operation (or on demand).
///
/// CB positions and trips are reliably observable; everything else is
/// filtered through the sensors' behavior modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub notification: Notification,
    pub operated: Option<DeviceId>,
    pub pd_reading: PdReading,
    pub cb_positions: BTreeMap<DeviceId, Position>,
    pub fd_readings: BTreeMap<DeviceId, FdReading>,
    /// CBs opened by protection during this transition.
    pub tripped: BTreeSet<DeviceId>,
}

/// Per-operation actuator mode transition probabilities plus the session
/// seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StochasticConfig<F> {
    pub p_ac_to_liar: F,
    pub p_ac_to_broken: F,
    pub seed: u64,
}

impl<F: Real> StochasticConfig<F> {
    pub fn deterministic(seed: u64) -> Self {
        StochasticConfig {
            p_ac_to_liar: F::zero(),
            p_ac_to_broken: F::zero(),
            seed,
        }
    }
}

/// The hidden ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    pub switch: SwitchState,
    pub fd_mode: BTreeMap<DeviceId, BehaviorMode>,
    pub pd_mode: BTreeMap<DeviceId, PdMode>,
    pub ac_mode: BTreeMap<DeviceId, BehaviorMode>,
}

impl WorldState {
    pub fn positions(&self) -> &PositionAssignment {
        &self.switch.positions
    }

    pub fn faulty_lines(&self) -> &BTreeSet<LineId> {
        &self.switch.faulty_lines
    }
}

/// One RNG stream per device id, so scenario outcomes are independent of the
/// interleaving of operations across devices.
#[derive(Debug, Clone)]
pub struct SessionRng {
    seed: u64,
    streams: BTreeMap<DeviceId, ChaCha8Rng>,
}

impl SessionRng {
    pub fn new(seed: u64) -> Self {
        SessionRng {
            seed,
            streams: BTreeMap::new(),
        }
    }

    fn draw(&mut self, device: &DeviceId) -> f64 {
        let seed = self.seed;
        let rng = self.streams.entry(device.clone()).or_insert_with(|| {
            ChaCha8Rng::seed_from_u64(seed ^ fnv1a(device.as_str()))
        });
        rng.gen::<f64>()
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Scenario injection: which faults exist and which sensors/actuators
/// misbehave, all unknown to the reasoner.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub faulty_lines: Vec<LineId>,
    #[serde(default)]
    pub fd_modes: BTreeMap<DeviceId, BehaviorMode>,
    #[serde(default)]
    pub pd_modes: BTreeMap<DeviceId, PdMode>,
    #[serde(default)]
    pub ac_modes: BTreeMap<DeviceId, BehaviorMode>,
    pub seed: u64,
    #[serde(default)]
    pub initial_positions: Option<BTreeMap<DeviceId, Position>>,
}

impl Scenario {
    pub fn load(document: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(document)?)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario references unknown line {0}")]
    UnknownLine(LineId),
    #[error("scenario references unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("device {0} carries no fault detector")]
    NoFaultDetector(DeviceId),
    #[error("device {0} is not remote controlled")]
    NotRemote(DeviceId),
}

/// Builds the initial world: protection is applied, so every CB feeding a
/// fault is already open and the fault detectors on its feeder are latched
/// before the session starts.
pub fn init_world<F: Real>(
    topology: &NetworkTopology<F>,
    scenario: &Scenario,
) -> Result<WorldState, ScenarioError> {
    for line in &scenario.faulty_lines {
        if !topology.lines.contains_key(line) {
            return Err(ScenarioError::UnknownLine(line.clone()));
        }
    }
    for (id, _) in &scenario.fd_modes {
        match topology.devices.get(id) {
            None => return Err(ScenarioError::UnknownDevice(id.clone())),
            Some(d) if !d.has_fault_detector() => {
                return Err(ScenarioError::NoFaultDetector(id.clone()))
            }
            Some(_) => {}
        }
    }
    for id in scenario.pd_modes.keys().chain(scenario.ac_modes.keys()) {
        match topology.devices.get(id) {
            None => return Err(ScenarioError::UnknownDevice(id.clone())),
            Some(d) if !d.is_remote() => return Err(ScenarioError::NotRemote(id.clone())),
            Some(_) => {}
        }
    }
    if let Some(init) = &scenario.initial_positions {
        for id in init.keys() {
            if !topology.devices.contains_key(id) {
                return Err(ScenarioError::UnknownDevice(id.clone()));
            }
        }
    }

    let mut positions = topology.normal_positions.clone();
    if let Some(init) = &scenario.initial_positions {
        for (id, pos) in init {
            positions.insert(id.clone(), *pos);
        }
    }
    let mut switch = SwitchState::new(
        topology,
        positions,
        scenario.faulty_lines.iter().cloned().collect(),
    );
    settle_protection(topology, &mut switch);

    let fd_mode = topology
        .remote_switches()
        .map(|(id, _)| {
            (
                id.clone(),
                scenario
                    .fd_modes
                    .get(id)
                    .copied()
                    .unwrap_or(BehaviorMode::Correct),
            )
        })
        .collect();
    let remote_ids: Vec<DeviceId> = topology
        .devices
        .iter()
        .filter(|(_, d)| d.is_remote())
        .map(|(id, _)| id.clone())
        .collect();
    let pd_mode = remote_ids
        .iter()
        .map(|id| {
            (
                id.clone(),
                scenario.pd_modes.get(id).copied().unwrap_or(PdMode::Correct),
            )
        })
        .collect();
    let ac_mode = remote_ids
        .iter()
        .map(|id| {
            (
                id.clone(),
                scenario
                    .ac_modes
                    .get(id)
                    .copied()
                    .unwrap_or(BehaviorMode::Correct),
            )
        })
        .collect();

    Ok(WorldState {
        switch,
        fd_mode,
        pd_mode,
        ac_mode,
    })
}

/// Sensing snapshot without an operation.
pub fn observe<F: Real>(topology: &NetworkTopology<F>, world: &WorldState) -> Observation {
    assemble_observation(
        topology,
        world,
        Notification::None,
        None,
        BTreeSet::new(),
    )
}

/// Executes a switching operation: samples the actuator mode transition,
/// applies the position change for a correct actuator, settles protection,
/// and assembles the filtered observation.
pub fn execute_switch<F: Real>(
    topology: &NetworkTopology<F>,
    world: &WorldState,
    op: &SwitchOp,
    cfg: &StochasticConfig<F>,
    rng: &mut SessionRng,
) -> Result<(WorldState, Observation), SwitchError> {
    let dev = topology
        .devices
        .get(&op.device)
        .ok_or_else(|| SwitchError::UnknownDevice(op.device.clone()))?;
    if !dev.is_remote() {
        return Err(SwitchError::ManualDevice(op.device.clone()));
    }

    let mut next = world.clone();
    let mode = next.ac_mode[&op.device];
    let mode = if mode == BehaviorMode::Correct {
        let u = rng.draw(&op.device);
        let p_liar = cfg.p_ac_to_liar.to_f64_lossy();
        let p_broken = cfg.p_ac_to_broken.to_f64_lossy();
        if u < p_liar {
            BehaviorMode::Liar
        } else if u < p_liar + p_broken {
            BehaviorMode::Broken
        } else {
            BehaviorMode::Correct
        }
    } else {
        mode
    };
    next.ac_mode.insert(op.device.clone(), mode);

    let (notification, tripped) = match mode {
        BehaviorMode::Correct => {
            let (switch, tripped) = apply_switch(topology, &next.switch, &op.device, op.target)?;
            next.switch = switch;
            (Notification::Positive, tripped.into_iter().collect())
        }
        BehaviorMode::Liar => (Notification::Positive, BTreeSet::new()),
        BehaviorMode::Broken => (Notification::Negative, BTreeSet::new()),
    };

    let obs = assemble_observation(topology, &next, notification, Some(&op.device), tripped);
    Ok((next, obs))
}

fn assemble_observation<F: Real>(
    topology: &NetworkTopology<F>,
    world: &WorldState,
    notification: Notification,
    operated: Option<&DeviceId>,
    tripped: BTreeSet<DeviceId>,
) -> Observation {
    let pd_reading = match operated {
        Some(dev) if world.pd_mode[dev] == PdMode::Correct => {
            match world.switch.positions[dev] {
                Position::Open => PdReading::Open,
                Position::Closed => PdReading::Closed,
            }
        }
        _ => PdReading::NoInfo,
    };
    let cb_positions = topology
        .circuit_breakers()
        .map(|(id, _)| (id.clone(), world.switch.positions[id]))
        .collect();
    let fd_readings = topology
        .remote_switches()
        .map(|(id, _)| {
            let latched = world.switch.fd_latched[id];
            let reading = match world.fd_mode[id] {
                BehaviorMode::Correct => fd_reading_of(latched),
                BehaviorMode::Liar => fd_reading_of(!latched),
                BehaviorMode::Broken => FdReading::NoInfo,
            };
            (id.clone(), reading)
        })
        .collect();
    Observation {
        notification,
        operated: operated.cloned(),
        pd_reading,
        cb_positions,
        fd_readings,
        tripped,
    }
}

pub fn fd_reading_of(latched: bool) -> FdReading {
    if latched {
        FdReading::FaultDownstream
    } else {
        FdReading::NoFault
    }
}
