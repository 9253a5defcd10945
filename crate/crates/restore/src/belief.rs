//! Discrete Bayesian state estimation over complete network hypotheses:
//! initial distribution from fault-detector readings, prediction across
//! stochastic switching operations, conditioning on observations, pruning
//! and escalation-level bookkeeping.
//!
//! Probability mass is kept in log space; the documented 1e-9 tolerances
//! apply after exponentiation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AreaId, DeviceId, LineId};
use crate::scalar::Real;
use crate::topology::{
    apply_switch, settle_protection, NetworkTopology, Position, PositionAssignment, SwitchError,
    SwitchState,
};
use crate::world::{
    fd_reading_of, BehaviorMode, FdReading, Notification, Observation, PdReading, SwitchOp,
};

/// One complete state hypothesis. Position detectors are assumed correct in
/// all distributions, so they do not appear here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub positions: PositionAssignment,
    pub fault_areas: BTreeSet<AreaId>,
    pub fd_mode: BTreeMap<DeviceId, BehaviorMode>,
    pub ac_mode: BTreeMap<DeviceId, BehaviorMode>,
    pub fd_latched: BTreeMap<DeviceId, bool>,
}

impl Candidate {
    pub fn switch_state<F: Real>(&self, topology: &NetworkTopology<F>) -> SwitchState {
        SwitchState {
            positions: self.positions.clone(),
            faulty_lines: self.faulty_lines(topology),
            fd_latched: self.fd_latched.clone(),
        }
    }

    pub fn faulty_lines<F: Real>(&self, topology: &NetworkTopology<F>) -> BTreeSet<LineId> {
        topology.lines_of_areas(self.fault_areas.iter())
    }

    /// Deterministic ordering used for tie-breaking: fewest faults first,
    /// then ascending area ids, then the mode maps.
    fn order_key(
        &self,
    ) -> (
        usize,
        &BTreeSet<AreaId>,
        &BTreeMap<DeviceId, BehaviorMode>,
        &BTreeMap<DeviceId, BehaviorMode>,
        &PositionAssignment,
        &BTreeMap<DeviceId, bool>,
    ) {
        (
            self.fault_areas.len(),
            &self.fault_areas,
            &self.fd_mode,
            &self.ac_mode,
            &self.positions,
            &self.fd_latched,
        )
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

/// Fault-detector mode probabilities conditioned on the returned reading,
/// actuator transition probabilities, and optional per-area fault weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Priors<F> {
    pub p_liar_given_positive: F,
    pub p_liar_given_negative: F,
    pub p_ac_to_liar: F,
    pub p_ac_to_broken: F,
    /// Relative fault weight per area; unlisted areas weigh 1.
    pub fault_weights: BTreeMap<AreaId, F>,
}

impl<F: Real> Default for Priors<F> {
    fn default() -> Self {
        Priors {
            p_liar_given_positive: F::from_f64_lossy(0.10),
            p_liar_given_negative: F::from_f64_lossy(0.05),
            p_ac_to_liar: F::from_f64_lossy(0.05),
            p_ac_to_broken: F::from_f64_lossy(0.05),
            fault_weights: BTreeMap::new(),
        }
    }
}

impl<F: Real> Priors<F> {
    /// P(fd mode | returned reading), in log space. `None` for impossible
    /// pairs (a broken detector returning information, say).
    pub fn fd_mode_log_prob(&self, mode: BehaviorMode, reading: FdReading) -> Option<F> {
        let p = match (reading, mode) {
            (FdReading::NoInfo, BehaviorMode::Broken) => F::one(),
            (FdReading::NoInfo, _) => F::zero(),
            (_, BehaviorMode::Broken) => F::zero(),
            (FdReading::FaultDownstream, BehaviorMode::Liar) => self.p_liar_given_positive,
            (FdReading::FaultDownstream, BehaviorMode::Correct) => {
                F::one() - self.p_liar_given_positive
            }
            (FdReading::NoFault, BehaviorMode::Liar) => self.p_liar_given_negative,
            (FdReading::NoFault, BehaviorMode::Correct) => F::one() - self.p_liar_given_negative,
        };
        if p > F::zero() {
            Some(p.ln())
        } else {
            None
        }
    }

    pub fn fault_log_weight(&self, area: &AreaId) -> F {
        self.fault_weights
            .get(area)
            .copied()
            .unwrap_or_else(F::one)
            .ln()
    }
}

#[derive(Debug, Clone)]
pub struct BeliefEntry<F> {
    pub candidate: Candidate,
    pub log_prob: F,
}

/// A normalized distribution over candidates at escalation level `k`.
#[derive(Debug, Clone)]
pub struct Belief<F> {
    pub entries: Vec<BeliefEntry<F>>,
    /// Maximum number of faults per feeder currently considered.
    pub k: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BeliefError {
    #[error("every candidate is inconsistent with the observation")]
    AllPruned,
    #[error("empty belief")]
    Empty,
    #[error(transparent)]
    Switch(#[from] SwitchError),
}

impl<F: Real> Belief<F> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn probability_sum(&self) -> F {
        self.entries
            .iter()
            .fold(F::zero(), |acc, e| acc + e.log_prob.exp())
    }

    /// Argmax by probability with the deterministic candidate ordering as
    /// tie-break.
    pub fn most_probable(&self) -> Result<&Candidate, BeliefError> {
        let mut best: Option<&BeliefEntry<F>> = None;
        for e in &self.entries {
            best = Some(match best {
                None => e,
                Some(b) => {
                    if e.log_prob > b.log_prob
                        || (e.log_prob == b.log_prob && e.candidate < b.candidate)
                    {
                        e
                    } else {
                        b
                    }
                }
            });
        }
        best.map(|e| &e.candidate).ok_or(BeliefError::Empty)
    }

    /// Entries sorted by descending probability (candidate order as
    /// tie-break).
    pub fn sorted_entries(&self) -> Vec<&BeliefEntry<F>> {
        let mut v: Vec<&BeliefEntry<F>> = self.entries.iter().collect();
        v.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap()
                .then_with(|| a.candidate.cmp(&b.candidate))
        });
        v
    }

    fn normalized(mut entries: Vec<BeliefEntry<F>>, k: usize) -> Result<Self, BeliefError> {
        if entries.is_empty() {
            return Err(BeliefError::AllPruned);
        }
        let lse = log_sum_exp(entries.iter().map(|e| e.log_prob));
        for e in &mut entries {
            e.log_prob = e.log_prob - lse;
        }
        entries.sort_by(|a, b| a.candidate.cmp(&b.candidate));
        Ok(Belief { entries, k })
    }
}

/// JSON-friendly rendering of a belief, candidates sorted by descending
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefDump {
    pub k: usize,
    pub candidates: Vec<CandidateProbability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProbability {
    pub candidate: Candidate,
    pub probability: f64,
}

impl<F: Real> Belief<F> {
    pub fn dump(&self) -> BeliefDump {
        BeliefDump {
            k: self.k,
            candidates: self
                .sorted_entries()
                .into_iter()
                .map(|e| CandidateProbability {
                    candidate: e.candidate.clone(),
                    probability: e.log_prob.exp().to_f64_lossy(),
                })
                .collect(),
        }
    }
}

fn log_sum_exp<F: Real>(vals: impl IntoIterator<Item = F>) -> F {
    let vals: Vec<F> = vals.into_iter().collect();
    let max = vals
        .iter()
        .copied()
        .fold(F::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == F::neg_infinity() {
        return max;
    }
    let sum = vals
        .iter()
        .fold(F::zero(), |acc, v| acc + (*v - max).exp());
    max + sum.ln()
}

/// All combinations of between 1 and `k` faulty areas on each cut-off
/// feeder; for `k > 1` only combinations where at least one feeder carries
/// exactly `k` faults, so that levels stay disjoint.
pub fn enumerate_fault_combos(
    areas_per_feeder: &[Vec<AreaId>],
    k: usize,
) -> Vec<BTreeSet<AreaId>> {
    assert!(k >= 1, "escalation level starts at 1");
    let mut per_feeder_choices: Vec<Vec<(usize, BTreeSet<AreaId>)>> = Vec::new();
    for areas in areas_per_feeder {
        let mut choices = Vec::new();
        for size in 1..=k.min(areas.len()) {
            subsets(areas, size, &mut choices);
        }
        per_feeder_choices.push(choices);
    }
    let mut combos = Vec::new();
    let mut current: Vec<(usize, BTreeSet<AreaId>)> = Vec::new();
    fn rec(
        per_feeder: &[Vec<(usize, BTreeSet<AreaId>)>],
        current: &mut Vec<(usize, BTreeSet<AreaId>)>,
        k: usize,
        out: &mut Vec<BTreeSet<AreaId>>,
    ) {
        if current.len() == per_feeder.len() {
            if k == 1 || current.iter().any(|(size, _)| *size == k) {
                let union: BTreeSet<AreaId> = current
                    .iter()
                    .flat_map(|(_, s)| s.iter().cloned())
                    .collect();
                if !out.contains(&union) {
                    out.push(union);
                }
            }
            return;
        }
        for choice in &per_feeder[current.len()] {
            current.push(choice.clone());
            rec(per_feeder, current, k, out);
            current.pop();
        }
    }
    rec(&per_feeder_choices, &mut current, k, &mut combos);
    combos
}

fn subsets(items: &[AreaId], size: usize, out: &mut Vec<(usize, BTreeSet<AreaId>)>) {
    fn rec(
        items: &[AreaId],
        size: usize,
        start: usize,
        current: &mut Vec<AreaId>,
        out: &mut Vec<(usize, BTreeSet<AreaId>)>,
    ) {
        if current.len() == size {
            out.push((size, current.iter().cloned().collect()));
            return;
        }
        for i in start..items.len() {
            current.push(items[i].clone());
            rec(items, size, i + 1, current, out);
            current.pop();
        }
    }
    rec(items, size, 0, &mut Vec::new(), out);
}

/// Compares the readings a hypothesis says correct detectors would produce
/// with the actual ones: no information means broken, contradiction means
/// liar, agreement means correct.
pub fn deduce_fd_modes(
    expected_latched: &BTreeMap<DeviceId, bool>,
    actual_readings: &BTreeMap<DeviceId, FdReading>,
) -> BTreeMap<DeviceId, BehaviorMode> {
    expected_latched
        .iter()
        .map(|(fd, latched)| {
            let actual = actual_readings
                .get(fd)
                .copied()
                .unwrap_or(FdReading::NoInfo);
            let mode = match actual {
                FdReading::NoInfo => BehaviorMode::Broken,
                r if r == fd_reading_of(*latched) => BehaviorMode::Correct,
                _ => BehaviorMode::Liar,
            };
            (fd, mode)
        })
        .map(|(fd, m)| (fd.clone(), m))
        .collect()
}

/// Builds the level-`k` distribution from the pre-incident configuration and
/// the actual fault-detector readings: one candidate per fault combination,
/// weighted by the normalized product of its deduced FD mode probabilities
/// (times the optional per-area fault weights).
pub fn initial_distribution<F: Real>(
    topology: &NetworkTopology<F>,
    pre_incident_positions: &PositionAssignment,
    cutoff_feeders: &BTreeSet<DeviceId>,
    actual_readings: &BTreeMap<DeviceId, FdReading>,
    k: usize,
    priors: &Priors<F>,
) -> Result<Belief<F>, BeliefError> {
    assert!(
        !cutoff_feeders.is_empty(),
        "initial distribution needs at least one cut-off feeder"
    );
    let en = topology.energize(pre_incident_positions);
    let area_of_line = topology.area_of_line();

    // areas and fault detectors of the cut-off feeders, per feeder
    let mut areas_per_feeder: Vec<Vec<AreaId>> = Vec::new();
    let mut relevant_fds: BTreeSet<DeviceId> = BTreeSet::new();
    for cb in cutoff_feeders {
        let Some(tree) = en.feeders.get(cb) else {
            continue;
        };
        let mut areas: BTreeSet<AreaId> = BTreeSet::new();
        for line in &tree.lines {
            areas.insert(area_of_line[line].clone());
            for (rsd, dev) in topology.remote_switches() {
                if dev.lines().iter().any(|l| *l == line) {
                    relevant_fds.insert(rsd.clone());
                }
            }
        }
        areas_per_feeder.push(areas.into_iter().collect());
    }

    let all_correct: BTreeMap<DeviceId, BehaviorMode> = topology
        .remote_switches()
        .map(|(id, _)| (id.clone(), BehaviorMode::Correct))
        .collect();

    let mut entries = Vec::new();
    for combo in enumerate_fault_combos(&areas_per_feeder, k) {
        let mut switch = SwitchState::new(
            topology,
            pre_incident_positions.clone(),
            topology.lines_of_areas(combo.iter()),
        );
        let tripped: BTreeSet<DeviceId> =
            settle_protection(topology, &mut switch).into_iter().collect();
        if &tripped != cutoff_feeders {
            // the combination does not explain exactly the observed trips
            continue;
        }

        let expected: BTreeMap<DeviceId, bool> = relevant_fds
            .iter()
            .map(|fd| (fd.clone(), switch.fd_latched[fd]))
            .collect();
        let deduced = deduce_fd_modes(&expected, actual_readings);

        let mut log_w = F::zero();
        let mut possible = true;
        for (fd, mode) in &deduced {
            match priors.fd_mode_log_prob(*mode, actual_readings[fd]) {
                Some(lp) => log_w += lp,
                None => {
                    possible = false;
                    break;
                }
            }
        }
        if !possible {
            continue;
        }
        for area in &combo {
            log_w += priors.fault_log_weight(area);
        }

        let mut fd_mode = all_correct.clone();
        for (fd, mode) in deduced {
            fd_mode.insert(fd, mode);
        }
        entries.push(BeliefEntry {
            candidate: Candidate {
                positions: switch.positions.clone(),
                fault_areas: combo,
                fd_mode,
                ac_mode: topology
                    .devices
                    .iter()
                    .filter(|(_, d)| d.is_remote())
                    .map(|(id, _)| (id.clone(), BehaviorMode::Correct))
                    .collect(),
                fd_latched: switch.fd_latched,
            },
            log_prob: log_w,
        });
    }
    Belief::normalized(entries, k)
}

/// One predicted successor: the deterministic result of an operation under
/// one actuator-mode branch of one candidate, with the trips its hypothesis
/// implies.
#[derive(Debug, Clone)]
pub struct PredictedEntry<F> {
    pub candidate: Candidate,
    pub log_prob: F,
    pub tripped: BTreeSet<DeviceId>,
}

/// A belief pushed through a switching operation but not yet conditioned.
#[derive(Debug, Clone)]
pub struct Predicted<F> {
    pub entries: Vec<PredictedEntry<F>>,
    pub op: SwitchOp,
    pub k: usize,
}

/// Transfers probability mass across the operation: each candidate branches
/// over the reachable actuator-mode transitions of the operated device, the
/// deterministic successor is computed under the candidate's hypothesis
/// (including protection trips and FD re-latching), and identical successors
/// merge. Mass is conserved exactly.
pub fn predict<F: Real>(
    topology: &NetworkTopology<F>,
    belief: &Belief<F>,
    op: &SwitchOp,
    priors: &Priors<F>,
) -> Result<Predicted<F>, BeliefError> {
    let dev = topology
        .devices
        .get(&op.device)
        .ok_or_else(|| SwitchError::UnknownDevice(op.device.clone()))?;
    if !dev.is_remote() {
        return Err(SwitchError::ManualDevice(op.device.clone()).into());
    }

    let p_liar = priors.p_ac_to_liar;
    let p_broken = priors.p_ac_to_broken;
    let p_stay = F::one() - p_liar - p_broken;

    let mut merged: BTreeMap<(Candidate, BTreeSet<DeviceId>), F> = BTreeMap::new();
    for entry in &belief.entries {
        let current_mode = entry.candidate.ac_mode[&op.device];
        let branches: Vec<(BehaviorMode, F)> = match current_mode {
            BehaviorMode::Correct => [
                (BehaviorMode::Correct, p_stay),
                (BehaviorMode::Liar, p_liar),
                (BehaviorMode::Broken, p_broken),
            ]
            .into_iter()
            .filter(|(_, p)| *p > F::zero())
            .collect(),
            // abnormal modes are permanent and non-executing
            mode => vec![(mode, F::one())],
        };
        for (mode, p) in branches {
            let mut candidate = entry.candidate.clone();
            candidate.ac_mode.insert(op.device.clone(), mode);
            let tripped: BTreeSet<DeviceId> = if mode == BehaviorMode::Correct {
                let state = candidate.switch_state(topology);
                let (state, tripped) = apply_switch(topology, &state, &op.device, op.target)?;
                candidate.positions = state.positions;
                candidate.fd_latched = state.fd_latched;
                tripped.into_iter().collect()
            } else {
                BTreeSet::new()
            };
            let log_p = entry.log_prob + p.ln();
            merged
                .entry((candidate, tripped))
                .and_modify(|acc| *acc = log_sum_exp([*acc, log_p]))
                .or_insert(log_p);
        }
    }

    Ok(Predicted {
        entries: merged
            .into_iter()
            .map(|((candidate, tripped), log_prob)| PredictedEntry {
                candidate,
                log_prob,
                tripped,
            })
            .collect(),
        op: op.clone(),
        k: belief.k,
    })
}

/// Bayesian conditioning: a candidate survives iff its expected observation
/// matches the actual one componentwise, where `NoInfo` in the actual
/// observation matches anything. Survivors are renormalized.
pub fn condition<F: Real>(
    topology: &NetworkTopology<F>,
    predicted: &Predicted<F>,
    observation: &Observation,
) -> Result<Belief<F>, BeliefError> {
    let entries = predicted
        .entries
        .iter()
        .filter(|e| expected_observation_matches(topology, e, &predicted.op, observation))
        .map(|e| BeliefEntry {
            candidate: e.candidate.clone(),
            log_prob: e.log_prob,
        })
        .collect();
    Belief::normalized(entries, predicted.k)
}

fn expected_observation_matches<F: Real>(
    topology: &NetworkTopology<F>,
    entry: &PredictedEntry<F>,
    op: &SwitchOp,
    actual: &Observation,
) -> bool {
    let candidate = &entry.candidate;

    // notification: negative iff the post-transition actuator mode is broken
    let expected_notification = if candidate.ac_mode[&op.device] == BehaviorMode::Broken {
        Notification::Negative
    } else {
        Notification::Positive
    };
    if actual.notification != expected_notification {
        return false;
    }

    // position detector of the operated device (PDs assumed correct)
    match actual.pd_reading {
        PdReading::NoInfo => {}
        PdReading::Open => {
            if candidate.positions[&op.device] != Position::Open {
                return false;
            }
        }
        PdReading::Closed => {
            if candidate.positions[&op.device] != Position::Closed {
                return false;
            }
        }
    }

    // CB positions and trips are reliably observable
    for (cb, actual_pos) in &actual.cb_positions {
        if candidate.positions[cb] != *actual_pos {
            return false;
        }
    }
    if entry.tripped != actual.tripped {
        return false;
    }

    for (rsd, _) in topology.remote_switches() {
        let actual_reading = actual.fd_readings[rsd];
        if actual_reading == FdReading::NoInfo {
            continue; // broken sensors constrain nothing
        }
        let expected = match candidate.fd_mode[rsd] {
            BehaviorMode::Correct => fd_reading_of(candidate.fd_latched[rsd]),
            BehaviorMode::Liar => fd_reading_of(!candidate.fd_latched[rsd]),
            BehaviorMode::Broken => FdReading::NoInfo,
        };
        if expected != actual_reading {
            return false;
        }
    }
    true
}
