//! Exhaustive generation of admissible restoration plans under a single
//! state hypothesis: depth-first exploration of the frontier of extension
//! points, pruning configurations that feed a fault twice, feed a line from
//! two breakers, or violate a capacity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::{DeviceId, LineId};
use crate::scalar::Real;
use crate::topology::{
    DeviceKind, Endpoints, NetworkTopology, Position, PositionAssignment,
};
use crate::world::SwitchOp;

/// A sequence of switching operations, canonically ordered: all opening
/// operations first (ascending device id, so the faulty region is isolated
/// before anything is re-energized), then closing operations grouped per
/// extended feeder — feeders by descending breaker id, root-to-leaf within
/// a feeder — so every close extends an already live tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Plan {
    pub ops: Vec<SwitchOp>,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Coefficients of the plan utility: restored consumer weight is rewarded,
/// operation count and the imbalance of breaker loading are penalized.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UtilityWeights<F> {
    pub w_supply: F,
    pub w_ops: F,
    pub w_balance: F,
}

impl<F: Real> Default for UtilityWeights<F> {
    fn default() -> Self {
        UtilityWeights {
            w_supply: F::from_f64_lossy(1000.0),
            w_ops: F::one(),
            w_balance: F::from_f64_lossy(10.0),
        }
    }
}

/// Everything the planner assumes about the current state: where the
/// switches are, which lines are faulty, and which devices cannot be
/// operated remotely (manual switches are always inoperable; the caller
/// adds devices whose actuators the hypothesis says misbehave).
#[derive(Debug, Clone)]
pub struct PlanningState {
    pub positions: PositionAssignment,
    pub faulty_lines: BTreeSet<LineId>,
    pub inoperable: BTreeSet<DeviceId>,
}

/// A plan together with the configuration it produces and its score parts.
#[derive(Debug, Clone)]
pub struct ScoredPlan<F> {
    pub plan: Plan,
    pub final_positions: PositionAssignment,
    /// Total consumer weight of the lines the plan newly feeds.
    pub restored_weight: F,
    pub utility: F,
}

/// A place where a dead region can be re-energized from: a device, the live
/// line it is approached from (`None` for an open circuit breaker), and the
/// breaker whose feeder would grow through it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionPoint {
    pub device: DeviceId,
    pub upstream_line: Option<LineId>,
    pub feeder: DeviceId,
}

/// The devices from which the unfed region can be entered under the given
/// configuration: open circuit breakers, and devices on live feeders with a
/// dead line on the far side.
pub fn extension_points<F: Real>(
    topology: &NetworkTopology<F>,
    positions: &PositionAssignment,
) -> Vec<ExtensionPoint> {
    let en = topology.energize(positions);
    let mut points = Vec::new();
    for (cb_id, cb) in topology.circuit_breakers() {
        if positions[cb_id] == Position::Open {
            let Endpoints::Source { line, .. } = &cb.endpoints else {
                continue;
            };
            if !en.is_fed(line) {
                points.push(ExtensionPoint {
                    device: cb_id.clone(),
                    upstream_line: None,
                    feeder: cb_id.clone(),
                });
            }
        }
    }
    for (dev_id, dev) in &topology.devices {
        let Endpoints::Between(a, b) = &dev.endpoints else {
            continue;
        };
        let (fed_side, dead_side) = match (en.is_fed(a), en.is_fed(b)) {
            (true, false) => (a, b),
            (false, true) => (b, a),
            _ => continue,
        };
        let _ = dead_side;
        let feeder = en.fed_by[fed_side][0].clone();
        points.push(ExtensionPoint {
            device: dev_id.clone(),
            upstream_line: Some(fed_side.clone()),
            feeder,
        });
    }
    points
}

struct FrontierItem {
    device: DeviceId,
    upstream_line: Option<LineId>,
    feeder: DeviceId,
    depth: usize,
}

struct Search<'a, F> {
    topology: &'a NetworkTopology<F>,
    state: &'a PlanningState,
    worklist: Vec<FrontierItem>,
    decided: BTreeMap<DeviceId, Position>,
    /// (feeder, depth) of every close decision, for canonical ordering.
    close_rank: BTreeMap<DeviceId, (DeviceId, usize)>,
    fed: BTreeSet<LineId>,
    plans: Vec<(Plan, PositionAssignment)>,
}

impl<F: Real> Search<'_, F> {
    /// Positions of the partial configuration: decided devices at their
    /// decided position, discovered-but-undecided devices open, everything
    /// else where it currently is.
    fn eval_positions(&self, next_idx: usize) -> PositionAssignment {
        let mut positions = self.state.positions.clone();
        for (d, p) in &self.decided {
            positions.insert(d.clone(), *p);
        }
        for item in &self.worklist[next_idx..] {
            if !self.decided.contains_key(&item.device) {
                positions.insert(item.device.clone(), Position::Open);
            }
        }
        positions
    }

    fn far_line_of(&self, item: &FrontierItem) -> Option<LineId> {
        self.topology
            .far_line(&item.device, item.upstream_line.as_ref())
            .ok()
    }

    fn dfs(&mut self, idx: usize) {
        let Some(item) = self.worklist.get(idx) else {
            self.emit();
            return;
        };
        let device = item.device.clone();
        if self.decided.contains_key(&device) {
            // reached again from another side; the earlier decision stands
            self.dfs(idx + 1);
            return;
        }
        let feeder = item.feeder.clone();
        let depth = item.depth;
        let current = self.state.positions[&device];
        let forced = self.topology.devices[&device].kind == DeviceKind::ManualSwitch
            || self.state.inoperable.contains(&device);
        // a breaker approached from its own line cannot close without
        // double-feeding that line
        let cb_from_line = item.upstream_line.is_some()
            && self.topology.devices[&device].kind == DeviceKind::CircuitBreaker;
        let far = self.far_line_of(&self.worklist[idx]);

        let try_option = |search: &mut Self, target: Position| match target {
            Position::Open => {
                search.decided.insert(device.clone(), Position::Open);
                search.dfs(idx + 1);
                search.decided.remove(&device);
            }
            Position::Closed => {
                let Some(far) = far.clone() else { return };
                if search.fed.contains(&far) || search.state.faulty_lines.contains(&far) {
                    return;
                }
                search.decided.insert(device.clone(), Position::Closed);
                let before = search.worklist.len();
                for child in search.topology.devices_on_line(&far) {
                    if *child != device {
                        search.worklist.push(FrontierItem {
                            device: child.clone(),
                            upstream_line: Some(far.clone()),
                            feeder: feeder.clone(),
                            depth: depth + 1,
                        });
                    }
                }
                // admissibility on the partial configuration, with newly
                // discovered (still undecided) devices treated as open;
                // loads only grow with later closes, so passing here is
                // necessary and the final close's check is sufficient
                let admissible = match search.topology.power_report(&search.eval_positions(idx + 1))
                {
                    Ok(report) => report.violations.is_empty(),
                    Err(_) => false,
                };
                if admissible {
                    search
                        .close_rank
                        .insert(device.clone(), (feeder.clone(), depth));
                    search.fed.insert(far.clone());
                    search.dfs(idx + 1);
                    search.fed.remove(&far);
                    search.close_rank.remove(&device);
                }
                search.worklist.truncate(before);
                search.decided.remove(&device);
            }
        };

        if forced {
            // an inoperable device stays put; if that feeds a fault or an
            // already-fed line the enclosing branch has no valid completion
            try_option(self, current);
        } else if cb_from_line {
            try_option(self, Position::Open);
        } else {
            try_option(self, Position::Open);
            try_option(self, Position::Closed);
        }
    }

    fn emit(&mut self) {
        let mut opens: Vec<SwitchOp> = Vec::new();
        let mut closes: Vec<(&DeviceId, &(DeviceId, usize))> = Vec::new();
        for (device, position) in &self.decided {
            if *position == self.state.positions[device] {
                continue;
            }
            match position {
                Position::Open => opens.push(SwitchOp::open(device.clone())),
                Position::Closed => closes.push((device, &self.close_rank[device])),
            }
        }
        opens.sort();
        closes.sort_by(|(da, (fa, deptha)), (db, (fb, depthb))| {
            fb.cmp(fa).then(deptha.cmp(depthb)).then(da.cmp(db))
        });
        let ops: Vec<SwitchOp> = opens
            .into_iter()
            .chain(closes.into_iter().map(|(d, _)| SwitchOp::close(d.clone())))
            .collect();
        let plan = Plan { ops };
        if self.plans.iter().any(|(p, _)| *p == plan) {
            return;
        }
        let final_positions = self.eval_positions(self.worklist.len());
        self.plans.push((plan, final_positions));
    }
}

/// Every admissible plan reachable by extending live feeders into the dead
/// region, deduplicated, together with the configuration each one produces.
/// Devices the extension never reaches keep their current position.
pub fn enumerate_plans<F: Real>(
    topology: &NetworkTopology<F>,
    state: &PlanningState,
) -> Vec<(Plan, PositionAssignment)> {
    let en = topology.energize(&state.positions);
    let fed: BTreeSet<LineId> = en.fed_by.keys().cloned().collect();
    let worklist: Vec<FrontierItem> = extension_points(topology, &state.positions)
        .into_iter()
        .map(|p| FrontierItem {
            device: p.device,
            upstream_line: p.upstream_line,
            feeder: p.feeder,
            depth: 0,
        })
        .collect();
    let mut search = Search {
        topology,
        state,
        worklist,
        decided: BTreeMap::new(),
        close_rank: BTreeMap::new(),
        fed,
        plans: Vec::new(),
    };
    search.dfs(0);
    search.plans
}

/// Utility of a plan from the configuration it produces:
/// `w_supply * restored consumer weight − w_ops * |ops| − w_balance *
/// Var(load/capacity over closed breakers)`.
pub fn plan_utility<F: Real>(
    topology: &NetworkTopology<F>,
    state: &PlanningState,
    plan: &Plan,
    final_positions: &PositionAssignment,
    weights: &UtilityWeights<F>,
) -> ScoredPlan<F> {
    let before = topology.energize(&state.positions);
    let after = topology.energize(final_positions);
    let restored_weight = after
        .fed_by
        .keys()
        .filter(|l| !before.is_fed(l))
        .fold(F::zero(), |acc, l| acc + topology.lines[l].consumer_weight);

    let report = topology
        .power_report(final_positions)
        .expect("scored configurations are radial");
    let ratios: Vec<F> = topology
        .circuit_breakers()
        .filter(|(cb, _)| final_positions[*cb] == Position::Closed)
        .map(|(cb, dev)| report.cb_load_kw[cb] / dev.capacity_kw.unwrap())
        .collect();
    let variance = if ratios.is_empty() {
        F::zero()
    } else {
        let n = F::from_f64_lossy(ratios.len() as f64);
        let mean = ratios.iter().fold(F::zero(), |a, r| a + *r) / n;
        ratios
            .iter()
            .fold(F::zero(), |a, r| a + (*r - mean) * (*r - mean))
            / n
    };

    let ops_count = F::from_f64_lossy(plan.ops.len() as f64);
    let utility =
        weights.w_supply * restored_weight - weights.w_ops * ops_count - weights.w_balance * variance;
    ScoredPlan {
        plan: plan.clone(),
        final_positions: final_positions.clone(),
        restored_weight,
        utility,
    }
}

/// The admissible plan with the highest utility; ties go to the plan with
/// fewer operations, then to the lexicographically smaller operation list.
pub fn best_plan<F: Real>(
    topology: &NetworkTopology<F>,
    state: &PlanningState,
    weights: &UtilityWeights<F>,
) -> Option<ScoredPlan<F>> {
    enumerate_plans(topology, state)
        .into_iter()
        .map(|(plan, positions)| plan_utility(topology, state, &plan, &positions, weights))
        .min_by(|a, b| {
            b.utility
                .partial_cmp(&a.utility)
                .unwrap()
                .then_with(|| a.plan.ops.len().cmp(&b.plan.ops.len()))
                .then_with(|| a.plan.ops.cmp(&b.plan.ops))
        })
}
