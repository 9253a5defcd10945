//! Static network model and pure functions over device positions: feeder
//! forests, areas, power accounting, admissibility and protection.
//!
//! The power model is purely additive kW accounting. Sources are
//! infinite-capacity terminals behind circuit breakers; only CB and line
//! capacities constrain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AreaId, DeviceId, LineId};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Open,
    Closed,
}

impl Position {
    pub fn flipped(self) -> Self {
        match self {
            Position::Open => Position::Closed,
            Position::Closed => Position::Open,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// Remote controlled circuit breaker feeding from a source terminal.
    CircuitBreaker,
    /// Remote controlled switch. Carries a fault detector.
    RemoteSwitch,
    /// Manually controlled switch. Cannot be operated during a session.
    ManualSwitch,
}

/// Total map from device to position.
pub type PositionAssignment = BTreeMap<DeviceId, Position>;

#[derive(Debug, Clone, PartialEq)]
pub struct Line<F> {
    pub load_kw: F,
    pub capacity_kw: F,
    pub consumer_weight: F,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoints {
    /// Circuit breaker: one source terminal and one line.
    Source { source: String, line: LineId },
    /// Switch between two lines.
    Between(LineId, LineId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device<F> {
    pub kind: DeviceKind,
    pub endpoints: Endpoints,
    /// Only circuit breakers carry a capacity.
    pub capacity_kw: Option<F>,
}

impl<F> Device<F> {
    pub fn is_remote(&self) -> bool {
        self.kind != DeviceKind::ManualSwitch
    }

    /// Fault detectors sit on remote switches only.
    pub fn has_fault_detector(&self) -> bool {
        self.kind == DeviceKind::RemoteSwitch
    }

    pub fn lines(&self) -> Vec<&LineId> {
        match &self.endpoints {
            Endpoints::Source { line, .. } => vec![line],
            Endpoints::Between(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("device {device} references unknown line {line}")]
    UnknownLine { device: DeviceId, line: LineId },
    #[error("device {device} connects line {line} to itself")]
    SelfLoop { device: DeviceId, line: LineId },
    #[error("device {device}: {reason}")]
    BadDevice { device: DeviceId, reason: String },
    #[error("normal_positions: {0}")]
    BadNormalPositions(String),
    #[error("normal configuration is not a forest: {0}")]
    NotAForest(#[from] StructuralError),
    #[error("duplicate id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructuralError {
    #[error("line {line} is fed by multiple circuit breakers ({cbs:?})")]
    MultiFeed { line: LineId, cbs: Vec<DeviceId> },
    #[error("closed cycle on the feeder of {cb}")]
    Cycle { cb: DeviceId },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwitchError {
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("device {0} is manually controlled")]
    ManualDevice(DeviceId),
    #[error("device {device} is not adjacent to line {line}")]
    NotAdjacent { device: DeviceId, line: LineId },
}

#[derive(Debug, Clone)]
pub struct NetworkTopology<F> {
    pub lines: BTreeMap<LineId, Line<F>>,
    pub devices: BTreeMap<DeviceId, Device<F>>,
    pub normal_positions: PositionAssignment,
    /// Devices incident to each line, ascending by id.
    line_devices: BTreeMap<LineId, Vec<DeviceId>>,
    /// Areas, keyed by their smallest line id. Computed once at load.
    areas: BTreeMap<AreaId, Area>,
    area_of_line: BTreeMap<LineId, AreaId>,
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    lines: Vec<RawLine>,
    devices: Vec<RawDevice>,
    normal_positions: BTreeMap<DeviceId, Position>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    id: LineId,
    load_kw: f64,
    capacity_kw: f64,
    consumer_weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    id: DeviceId,
    kind: RawKind,
    endpoints: RawEndpoints,
    #[serde(default)]
    capacity_kw: Option<f64>,
}

#[derive(Deserialize, Clone, Copy)]
enum RawKind {
    #[serde(rename = "cb")]
    Cb,
    #[serde(rename = "rsd")]
    Rsd,
    #[serde(rename = "msd")]
    Msd,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, untagged)]
enum RawEndpoints {
    Source { source: String, line: LineId },
    Between { lines: [LineId; 2] },
}

impl<F: Real> NetworkTopology<F> {
    /// Parses and validates a network document.
    pub fn load(document: &str) -> Result<Self, TopologyError> {
        let raw: RawNetwork = serde_json::from_str(document)?;

        let mut lines = BTreeMap::new();
        for l in raw.lines {
            if l.load_kw < 0.0 {
                return Err(TopologyError::BadDevice {
                    device: DeviceId::new(l.id.as_str()),
                    reason: format!("line {} has negative load", l.id),
                });
            }
            let prev = lines.insert(
                l.id.clone(),
                Line {
                    load_kw: F::from_f64_lossy(l.load_kw),
                    capacity_kw: F::from_f64_lossy(l.capacity_kw),
                    consumer_weight: F::from_f64_lossy(l.consumer_weight),
                },
            );
            if prev.is_some() {
                return Err(TopologyError::DuplicateId(l.id.0));
            }
        }

        let mut devices = BTreeMap::new();
        for d in raw.devices {
            let kind = match d.kind {
                RawKind::Cb => DeviceKind::CircuitBreaker,
                RawKind::Rsd => DeviceKind::RemoteSwitch,
                RawKind::Msd => DeviceKind::ManualSwitch,
            };
            let endpoints = match d.endpoints {
                RawEndpoints::Source { source, line } => {
                    if kind != DeviceKind::CircuitBreaker {
                        return Err(TopologyError::BadDevice {
                            device: d.id,
                            reason: "only circuit breakers attach to a source".into(),
                        });
                    }
                    Endpoints::Source { source, line }
                }
                RawEndpoints::Between { lines: [a, b] } => {
                    if kind == DeviceKind::CircuitBreaker {
                        return Err(TopologyError::BadDevice {
                            device: d.id,
                            reason: "a circuit breaker needs a source endpoint".into(),
                        });
                    }
                    if a == b {
                        return Err(TopologyError::SelfLoop { device: d.id, line: a });
                    }
                    Endpoints::Between(a, b)
                }
            };
            match (kind, d.capacity_kw) {
                (DeviceKind::CircuitBreaker, None) => {
                    return Err(TopologyError::BadDevice {
                        device: d.id,
                        reason: "circuit breaker without capacity_kw".into(),
                    })
                }
                (DeviceKind::CircuitBreaker, Some(_)) => {}
                (_, Some(_)) => {
                    return Err(TopologyError::BadDevice {
                        device: d.id,
                        reason: "capacity_kw is only valid on circuit breakers".into(),
                    })
                }
                (_, None) => {}
            }
            let device = Device {
                kind,
                endpoints,
                capacity_kw: d.capacity_kw.map(F::from_f64_lossy),
            };
            for line in device.lines() {
                if !lines.contains_key(line) {
                    return Err(TopologyError::UnknownLine {
                        device: d.id.clone(),
                        line: line.clone(),
                    });
                }
            }
            if devices.insert(d.id.clone(), device).is_some() {
                return Err(TopologyError::DuplicateId(d.id.0));
            }
        }

        for id in raw.normal_positions.keys() {
            if !devices.contains_key(id) {
                return Err(TopologyError::BadNormalPositions(format!(
                    "unknown device {id}"
                )));
            }
        }
        for id in devices.keys() {
            if !raw.normal_positions.contains_key(id) {
                return Err(TopologyError::BadNormalPositions(format!(
                    "missing position for device {id}"
                )));
            }
        }

        let mut line_devices: BTreeMap<LineId, Vec<DeviceId>> =
            lines.keys().map(|l| (l.clone(), Vec::new())).collect();
        for (id, dev) in &devices {
            for line in dev.lines() {
                line_devices.get_mut(line).unwrap().push(id.clone());
            }
        }

        let mut topology = NetworkTopology {
            lines,
            devices,
            normal_positions: raw.normal_positions,
            line_devices,
            areas: BTreeMap::new(),
            area_of_line: BTreeMap::new(),
        };
        topology.areas = topology.compute_areas();
        for area in topology.areas.values() {
            for l in &area.lines {
                topology.area_of_line.insert(l.clone(), area.id.clone());
            }
        }
        // the normal configuration must be a forest of feeders
        topology.feeders(&topology.normal_positions)?;
        Ok(topology)
    }

    pub fn devices_on_line(&self, line: &LineId) -> &[DeviceId] {
        self.line_devices.get(line).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn circuit_breakers(&self) -> impl Iterator<Item = (&DeviceId, &Device<F>)> {
        self.devices
            .iter()
            .filter(|(_, d)| d.kind == DeviceKind::CircuitBreaker)
    }

    pub fn remote_switches(&self) -> impl Iterator<Item = (&DeviceId, &Device<F>)> {
        self.devices
            .iter()
            .filter(|(_, d)| d.kind == DeviceKind::RemoteSwitch)
    }

    /// Total lookup of a device position.
    pub fn position_of(
        positions: &PositionAssignment,
        device: &DeviceId,
    ) -> Result<Position, SwitchError> {
        positions
            .get(device)
            .copied()
            .ok_or_else(|| SwitchError::UnknownDevice(device.clone()))
    }

    /// Reachability from closed circuit breakers, tolerant of loops and
    /// multi-fed lines. The strict [`feeders`](Self::feeders) view rejects
    /// those; the simulator needs the tolerant one because reality is under
    /// no obligation to stay radial when actuators misbehave.
    pub fn energize(&self, positions: &PositionAssignment) -> Energization {
        let mut feeders = BTreeMap::new();
        let mut fed_by: BTreeMap<LineId, Vec<DeviceId>> = BTreeMap::new();

        for (cb_id, cb) in self.circuit_breakers() {
            if positions[cb_id] != Position::Closed {
                continue;
            }
            let root_line = match &cb.endpoints {
                Endpoints::Source { line, .. } => line.clone(),
                Endpoints::Between(..) => unreachable!("CB without source endpoint"),
            };
            let mut tree = FeederTree {
                root: cb_id.clone(),
                lines: Vec::new(),
                parent_device: BTreeMap::new(),
                parent_line: BTreeMap::new(),
                tree_devices: BTreeSet::new(),
                cycle: false,
            };
            tree.tree_devices.insert(cb_id.clone());
            tree.parent_device.insert(root_line.clone(), cb_id.clone());
            tree.parent_line.insert(root_line.clone(), None);
            tree.lines.push(root_line.clone());
            let mut queue = vec![root_line.clone()];
            let mut seen: BTreeSet<LineId> = [root_line].into_iter().collect();
            while let Some(line) = queue.pop() {
                for dev_id in self.devices_on_line(&line) {
                    let dev = &self.devices[dev_id];
                    if positions[dev_id] != Position::Closed {
                        continue;
                    }
                    if Some(dev_id) == tree.parent_device.get(&line) {
                        continue;
                    }
                    let next = match &dev.endpoints {
                        Endpoints::Between(a, b) => {
                            if a == &line {
                                b.clone()
                            } else {
                                a.clone()
                            }
                        }
                        // a closed CB incident to an already-fed line: its own
                        // BFS claims the root line, nothing to traverse here
                        Endpoints::Source { .. } => continue,
                    };
                    if seen.contains(&next) {
                        tree.cycle = true;
                        continue;
                    }
                    seen.insert(next.clone());
                    tree.parent_device.insert(next.clone(), dev_id.clone());
                    tree.parent_line.insert(next.clone(), Some(line.clone()));
                    tree.tree_devices.insert(dev_id.clone());
                    tree.lines.push(next.clone());
                    queue.push(next);
                }
            }
            for l in &tree.lines {
                fed_by.entry(l.clone()).or_default().push(cb_id.clone());
            }
            feeders.insert(cb_id.clone(), tree);
        }
        Energization { feeders, fed_by }
    }

    /// Strict feeder forest: every fed line reachable from exactly one closed
    /// CB and no closed cycle.
    pub fn feeders(&self, positions: &PositionAssignment) -> Result<FeederForest, StructuralError> {
        let en = self.energize(positions);
        for (line, cbs) in &en.fed_by {
            if cbs.len() > 1 {
                return Err(StructuralError::MultiFeed {
                    line: line.clone(),
                    cbs: cbs.clone(),
                });
            }
        }
        for (cb, tree) in &en.feeders {
            if tree.cycle {
                return Err(StructuralError::Cycle { cb: cb.clone() });
            }
        }
        let unfed = self
            .lines
            .keys()
            .filter(|l| !en.fed_by.contains_key(*l))
            .cloned()
            .collect();
        Ok(FeederForest {
            trees: en.feeders,
            unfed,
        })
    }

    /// Areas partition the line set; two lines share an area iff they are
    /// connected through manual devices only.
    pub fn areas(&self) -> &BTreeMap<AreaId, Area> {
        &self.areas
    }

    /// Area containing each line.
    pub fn area_of_line(&self) -> &BTreeMap<LineId, AreaId> {
        &self.area_of_line
    }

    /// All lines of a set of fault areas.
    pub fn lines_of_areas<'a>(
        &self,
        areas: impl IntoIterator<Item = &'a AreaId>,
    ) -> BTreeSet<LineId> {
        areas
            .into_iter()
            .flat_map(|a| self.areas[a].lines.iter().cloned())
            .collect()
    }

    fn compute_areas(&self) -> BTreeMap<AreaId, Area> {
        let line_ids: Vec<&LineId> = self.lines.keys().collect();
        let index: BTreeMap<&LineId, usize> =
            line_ids.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        let mut parent: Vec<usize> = (0..line_ids.len()).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for dev in self.devices.values() {
            if dev.kind == DeviceKind::ManualSwitch {
                if let Endpoints::Between(a, b) = &dev.endpoints {
                    let (ra, rb) = (find(&mut parent, index[a]), find(&mut parent, index[b]));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut groups: BTreeMap<usize, BTreeSet<LineId>> = BTreeMap::new();
        for (i, l) in line_ids.iter().enumerate() {
            groups
                .entry(find(&mut parent, i))
                .or_default()
                .insert((*l).clone());
        }
        let mut areas = BTreeMap::new();
        for lines in groups.into_values() {
            let id = AreaId::new(lines.iter().next().unwrap().as_str());
            let mut boundary = BTreeSet::new();
            for l in &lines {
                for d in self.devices_on_line(l) {
                    if self.devices[d].is_remote() {
                        boundary.insert(d.clone());
                    }
                }
            }
            areas.insert(id.clone(), Area { id, lines, boundary });
        }
        areas
    }

    /// The line on the far side of `device` when approached from
    /// `upstream_line` (`None` for a circuit breaker, approached from its
    /// source).
    pub fn far_line(
        &self,
        device: &DeviceId,
        upstream_line: Option<&LineId>,
    ) -> Result<LineId, SwitchError> {
        let dev = self
            .devices
            .get(device)
            .ok_or_else(|| SwitchError::UnknownDevice(device.clone()))?;
        match (&dev.endpoints, upstream_line) {
            (Endpoints::Source { line, .. }, None) => Ok(line.clone()),
            (Endpoints::Source { line, .. }, Some(up)) => Err(SwitchError::NotAdjacent {
                device: device.clone(),
                line: if up == line { up.clone() } else { up.clone() },
            }),
            (Endpoints::Between(a, b), Some(up)) => {
                if up == a {
                    Ok(b.clone())
                } else if up == b {
                    Ok(a.clone())
                } else {
                    Err(SwitchError::NotAdjacent {
                        device: device.clone(),
                        line: up.clone(),
                    })
                }
            }
            (Endpoints::Between(a, _), None) => Err(SwitchError::NotAdjacent {
                device: device.clone(),
                line: a.clone(),
            }),
        }
    }

    /// The devices immediately below the line fed by closing `device` in the
    /// direction away from the feeder root.
    pub fn downstream_children(
        &self,
        device: &DeviceId,
        upstream_line: Option<&LineId>,
    ) -> Result<Vec<(DeviceId, LineId)>, SwitchError> {
        let far = self.far_line(device, upstream_line)?;
        Ok(self
            .devices_on_line(&far)
            .iter()
            .filter(|d| *d != device)
            .map(|d| (d.clone(), far.clone()))
            .collect())
    }

    /// Additive power accounting over a strict feeder forest.
    pub fn power_report(
        &self,
        positions: &PositionAssignment,
    ) -> Result<PowerReport<F>, StructuralError> {
        let forest = self.feeders(positions)?;
        let mut line_throughput: BTreeMap<LineId, F> =
            self.lines.keys().map(|l| (l.clone(), F::zero())).collect();
        let mut cb_load = BTreeMap::new();
        let mut cb_margin = BTreeMap::new();
        let mut violations = Vec::new();

        for (cb_id, tree) in &forest.trees {
            // children sums accumulate bottom-up in reverse discovery order
            for line in tree.lines.iter().rev() {
                let total = line_throughput[line] + self.lines[line].load_kw;
                line_throughput.insert(line.clone(), total);
                if let Some(Some(parent)) = tree.parent_line.get(line) {
                    *line_throughput.get_mut(parent).unwrap() += total;
                }
            }
            let root = &tree.lines[0];
            let load = line_throughput[root];
            let capacity = self.devices[cb_id].capacity_kw.unwrap();
            cb_load.insert(cb_id.clone(), load);
            cb_margin.insert(cb_id.clone(), capacity - load);
            if load > capacity {
                violations.push(Violation::CircuitBreaker {
                    cb: cb_id.clone(),
                    load_kw: load,
                    capacity_kw: capacity,
                });
            }
            for line in &tree.lines {
                let t = line_throughput[line];
                if t > self.lines[line].capacity_kw {
                    violations.push(Violation::Line {
                        line: line.clone(),
                        throughput_kw: t,
                        capacity_kw: self.lines[line].capacity_kw,
                    });
                }
            }
        }
        Ok(PowerReport {
            line_throughput_kw: line_throughput,
            cb_load_kw: cb_load,
            cb_margin_kw: cb_margin,
            violations,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FeederTree {
    pub root: DeviceId,
    /// Fed lines in discovery order; the first entry is the root line.
    pub lines: Vec<LineId>,
    /// Closed device immediately upstream of each fed line.
    pub parent_device: BTreeMap<LineId, DeviceId>,
    pub parent_line: BTreeMap<LineId, Option<LineId>>,
    /// Devices used as tree edges, including the root CB.
    pub tree_devices: BTreeSet<DeviceId>,
    pub cycle: bool,
}

impl FeederTree {
    /// The child line fed through `device`, if `device` is a tree edge.
    pub fn child_line_of(&self, device: &DeviceId) -> Option<&LineId> {
        self.parent_device
            .iter()
            .find(|(_, d)| *d == device)
            .map(|(l, _)| l)
    }
}

#[derive(Debug, Clone)]
pub struct Energization {
    pub feeders: BTreeMap<DeviceId, FeederTree>,
    pub fed_by: BTreeMap<LineId, Vec<DeviceId>>,
}

impl Energization {
    pub fn is_fed(&self, line: &LineId) -> bool {
        self.fed_by.contains_key(line)
    }
}

#[derive(Debug, Clone)]
pub struct FeederForest {
    pub trees: BTreeMap<DeviceId, FeederTree>,
    pub unfed: BTreeSet<LineId>,
}

impl FeederForest {
    pub fn feeder_of(&self, line: &LineId) -> Option<&DeviceId> {
        self.trees
            .iter()
            .find(|(_, t)| t.parent_device.contains_key(line))
            .map(|(cb, _)| cb)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Area {
    pub id: AreaId,
    pub lines: BTreeSet<LineId>,
    /// Remote devices incident to the area.
    pub boundary: BTreeSet<DeviceId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation<F> {
    Line {
        line: LineId,
        throughput_kw: F,
        capacity_kw: F,
    },
    CircuitBreaker {
        cb: DeviceId,
        load_kw: F,
        capacity_kw: F,
    },
}

#[derive(Debug, Clone)]
pub struct PowerReport<F> {
    pub line_throughput_kw: BTreeMap<LineId, F>,
    pub cb_load_kw: BTreeMap<DeviceId, F>,
    pub cb_margin_kw: BTreeMap<DeviceId, F>,
    pub violations: Vec<Violation<F>>,
}

// ---------------------------------------------------------------------------
// Deterministic switching with protection

/// The part of a network state the deterministic simulator acts on. Both the
/// ground-truth world and hypothesized candidates go through this path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SwitchState {
    pub positions: PositionAssignment,
    pub faulty_lines: BTreeSet<LineId>,
    /// Ground-truth "fault passed downstream" value per remote switch.
    pub fd_latched: BTreeMap<DeviceId, bool>,
}

impl SwitchState {
    pub fn new<F: Real>(
        topology: &NetworkTopology<F>,
        positions: PositionAssignment,
        faulty_lines: BTreeSet<LineId>,
    ) -> Self {
        let fd_latched = topology
            .remote_switches()
            .map(|(id, _)| (id.clone(), false))
            .collect();
        SwitchState {
            positions,
            faulty_lines,
            fd_latched,
        }
    }
}

/// Opens every CB feeding a fault, latching the fault detectors on its feeder
/// at each trip. Protection is instantaneous in this model. Returns the CBs
/// tripped, in trip order.
pub fn settle_protection<F: Real>(
    topology: &NetworkTopology<F>,
    state: &mut SwitchState,
) -> Vec<DeviceId> {
    let mut tripped = Vec::new();
    loop {
        let en = topology.energize(&state.positions);
        let mut culprit = None;
        for (cb, tree) in &en.feeders {
            if tree.lines.iter().any(|l| state.faulty_lines.contains(l)) {
                culprit = Some((cb.clone(), tree.clone()));
                break;
            }
        }
        let Some((cb, tree)) = culprit else {
            return tripped;
        };
        latch_fault_detectors(topology, state, &tree);
        state.positions.insert(cb.clone(), Position::Open);
        tripped.push(cb);
    }
}

/// Recomputes the latched value of every fault detector incident to a fed
/// line of `tree`: true iff the detector's device is a tree edge with a
/// faulty line somewhere below it.
fn latch_fault_detectors<F: Real>(
    topology: &NetworkTopology<F>,
    state: &mut SwitchState,
    tree: &FeederTree,
) {
    // children precede parents in reverse discovery order
    let mut subtree_fault: BTreeMap<&LineId, bool> =
        tree.lines.iter().map(|l| (l, false)).collect();
    for line in tree.lines.iter().rev() {
        let fault = state.faulty_lines.contains(line) || subtree_fault[line];
        subtree_fault.insert(line, fault);
        if fault {
            if let Some(Some(parent)) = tree.parent_line.get(line) {
                subtree_fault.insert(parent, true);
            }
        }
    }

    let fed: BTreeSet<&LineId> = tree.lines.iter().collect();
    for (rsd, dev) in topology.remote_switches() {
        if !dev.lines().iter().any(|l| fed.contains(l)) {
            continue;
        }
        let saw_fault = tree.tree_devices.contains(rsd)
            && tree
                .child_line_of(rsd)
                .map(|child| subtree_fault.get(child).copied().unwrap_or(false))
                .unwrap_or(false);
        state.fd_latched.insert(rsd.clone(), saw_fault);
    }
}

/// Deterministic execution of a switching operation on a remote device,
/// followed by protection. Used by the world (for a correct actuator) and by
/// the belief/planner sides for hypothesis simulation.
pub fn apply_switch<F: Real>(
    topology: &NetworkTopology<F>,
    state: &SwitchState,
    device: &DeviceId,
    target: Position,
) -> Result<(SwitchState, Vec<DeviceId>), SwitchError> {
    let dev = topology
        .devices
        .get(device)
        .ok_or_else(|| SwitchError::UnknownDevice(device.clone()))?;
    if !dev.is_remote() {
        return Err(SwitchError::ManualDevice(device.clone()));
    }
    let mut next = state.clone();
    next.positions.insert(device.clone(), target);
    let tripped = settle_protection(topology, &mut next);
    Ok((next, tripped))
}
