//! The closed loop: adopt the most probable hypothesis, plan for it,
//! execute the plan one operation at a time, condition the belief on every
//! observation, replan when the posterior disagrees with the expected
//! successor, and escalate the fault cardinality bound when every
//! hypothesis is refuted.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::belief::{
    condition, initial_distribution, predict, Belief, BeliefError, Candidate,
};
use crate::config::SessionConfig;
use crate::ids::{DeviceId, LineId};
use crate::planner::{best_plan, PlanningState};
use crate::scalar::Real;
use crate::topology::{
    apply_switch, NetworkTopology, Position, PositionAssignment, SwitchError,
};
use crate::trace::{Event, ReplanReason, Trace};
use crate::world::{
    execute_switch, init_world, observe, BehaviorMode, Observation, Scenario, ScenarioError,
    SessionRng, SwitchOp, WorldState,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Finished,
    Aborted(String),
}

#[derive(Debug)]
pub struct SessionOutcome<F> {
    pub trace: Trace,
    pub world: WorldState,
    pub belief: Belief<F>,
    /// Belief snapshots: index 0 is the initial distribution, index `i` the
    /// posterior after the `i`-th executed operation.
    pub steps: Vec<Belief<F>>,
    pub termination: Termination,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Switch(#[from] SwitchError),
}

/// Runs a full restoration session against the simulated world described by
/// `scenario`. Aborting (guard limits exhausted) is a session outcome, not
/// an error; errors are malformed inputs only.
pub fn run_session<F: Real>(
    topology: &NetworkTopology<F>,
    scenario: &Scenario,
    config: &SessionConfig<F>,
    seed_override: Option<u64>,
) -> Result<SessionOutcome<F>, SessionError> {
    let seed = seed_override.unwrap_or(scenario.seed);
    let stochastic = config.stochastic_config(seed);
    let mut rng = SessionRng::new(seed);
    let mut world = init_world(topology, scenario)?;
    let mut trace = Trace::default();

    // the configuration the network was in before the incident
    let mut pre_incident = topology.normal_positions.clone();
    if let Some(init) = &scenario.initial_positions {
        for (d, p) in init {
            pre_incident.insert(d.clone(), *p);
        }
    }

    let initial_obs = observe(topology, &world);
    trace.push(Event::InitialObservation {
        observation: initial_obs.clone(),
    });

    let cutoff: BTreeSet<DeviceId> = initial_obs
        .cb_positions
        .iter()
        .filter(|(cb, pos)| **pos == Position::Open && pre_incident[*cb] == Position::Closed)
        .map(|(cb, _)| cb.clone())
        .collect();
    if cutoff.is_empty() {
        // no breaker tripped: nothing to diagnose or restore
        push_finished(topology, &mut trace, &world);
        let belief = Belief {
            entries: Vec::new(),
            k: 0,
        };
        return Ok(SessionOutcome {
            trace,
            world,
            belief,
            steps: Vec::new(),
            termination: Termination::Finished,
        });
    }

    let mut history: Vec<(SwitchOp, Observation)> = Vec::new();
    let mut k = 1;

    // level-k belief consistent with the initial readings and the entire
    // operation history
    let rebuild = |k: usize, history: &[(SwitchOp, Observation)]| -> Result<Belief<F>, BeliefError> {
        let mut belief = initial_distribution(
            topology,
            &pre_incident,
            &cutoff,
            &initial_obs.fd_readings,
            k,
            &config.priors,
        )?;
        for (op, obs) in history {
            let predicted = predict(topology, &belief, op, &config.priors)?;
            belief = condition(topology, &predicted, obs)?;
        }
        Ok(belief)
    };

    let mut belief = loop {
        match rebuild(k, &history) {
            Ok(b) => break b,
            Err(BeliefError::AllPruned) if k < config.k_max => {
                k += 1;
                trace.push(Event::Escalation { k });
            }
            Err(BeliefError::AllPruned) => {
                return Ok(abort(
                    trace,
                    world,
                    Belief {
                        entries: Vec::new(),
                        k,
                    },
                    Vec::new(),
                    "no hypothesis explains the initial readings within the fault bound",
                ))
            }
            Err(e) => return Err(belief_input_error(e)),
        }
    };

    let mut steps = vec![belief.clone()];
    let mut replans = 0usize;
    let mut last_adopted: Option<Candidate> = None;

    'supervise: loop {
        let top = belief.most_probable().expect("belief never empty").clone();
        if last_adopted.as_ref() != Some(&top) {
            let log_p = belief
                .entries
                .iter()
                .find(|e| e.candidate == top)
                .unwrap()
                .log_prob;
            trace.push(Event::HypothesisAdopted {
                candidate: top.clone(),
                probability: log_p.exp().to_f64_lossy(),
                hypotheses: belief.len(),
                k: belief.k,
            });
            last_adopted = Some(top.clone());
        }

        let planning = PlanningState {
            positions: top.positions.clone(),
            faulty_lines: top.faulty_lines(topology),
            inoperable: top
                .ac_mode
                .iter()
                .filter(|(_, m)| **m != BehaviorMode::Correct)
                .map(|(d, _)| d.clone())
                .collect(),
        };
        let scored =
            best_plan(topology, &planning, &config.utility).expect("the empty plan always exists");
        if scored.plan.is_empty() {
            push_finished(topology, &mut trace, &world);
            return Ok(SessionOutcome {
                trace,
                world,
                belief,
                steps,
                termination: Termination::Finished,
            });
        }
        trace.push(Event::PlanAdopted {
            plan: scored.plan.clone(),
            utility: scored.utility.to_f64_lossy(),
            restored_weight: scored.restored_weight.to_f64_lossy(),
        });

        let mut expected = top;
        for op in &scored.plan.ops {
            let expected_next = expected_successor(topology, &expected, op)?;
            let (next_world, obs) = execute_switch(topology, &world, op, &stochastic, &mut rng)?;
            world = next_world;
            history.push((op.clone(), obs.clone()));
            trace.push(Event::OpExecuted {
                op: op.clone(),
                observation: obs.clone(),
            });

            let conditioned = predict(topology, &belief, op, &config.priors)
                .and_then(|p| condition(topology, &p, &obs));
            match conditioned {
                Ok(b) => {
                    belief = b;
                    steps.push(belief.clone());
                }
                Err(BeliefError::AllPruned) => {
                    // raise the fault bound until some hypothesis survives
                    // the replayed history
                    loop {
                        if k >= config.k_max {
                            return Ok(abort(
                                trace,
                                world,
                                belief,
                                steps,
                                "fault bound exhausted: no hypothesis survives the history",
                            ));
                        }
                        k += 1;
                        trace.push(Event::Escalation { k });
                        match rebuild(k, &history) {
                            Ok(b) => {
                                belief = b;
                                steps.push(belief.clone());
                                break;
                            }
                            Err(BeliefError::AllPruned) => continue,
                            Err(e) => return Err(belief_input_error(e)),
                        }
                    }
                    replans += 1;
                    if replans > config.replan_max {
                        return Ok(abort(trace, world, belief, steps, "replan limit exceeded"));
                    }
                    trace.push(Event::Replan {
                        reason: ReplanReason::Escalated,
                    });
                    continue 'supervise;
                }
                Err(e) => return Err(belief_input_error(e)),
            }

            let new_top = belief.most_probable().expect("belief never empty");
            if *new_top != expected_next {
                replans += 1;
                if replans > config.replan_max {
                    return Ok(abort(trace, world, belief, steps, "replan limit exceeded"));
                }
                trace.push(Event::Replan {
                    reason: ReplanReason::HypothesisChanged,
                });
                continue 'supervise;
            }
            expected = expected_next;
            last_adopted = Some(expected.clone());
        }
        // plan completed as expected; the next round either extends the
        // restoration further or finds nothing left to do
    }
}

/// The deterministic successor of a hypothesis under an operation, assuming
/// the actuator executes correctly. Plans never operate devices the
/// hypothesis considers misbehaving, so the correct-branch is the expected
/// one; anything else triggers a replan.
pub fn expected_successor<F: Real>(
    topology: &NetworkTopology<F>,
    candidate: &Candidate,
    op: &SwitchOp,
) -> Result<Candidate, SwitchError> {
    let mode = candidate
        .ac_mode
        .get(&op.device)
        .copied()
        .unwrap_or(BehaviorMode::Correct);
    if mode != BehaviorMode::Correct {
        return Ok(candidate.clone());
    }
    let state = candidate.switch_state(topology);
    let (state, _) = apply_switch(topology, &state, &op.device, op.target)?;
    let mut next = candidate.clone();
    next.positions = state.positions;
    next.fd_latched = state.fd_latched;
    Ok(next)
}

fn push_finished<F: Real>(topology: &NetworkTopology<F>, trace: &mut Trace, world: &WorldState) {
    let en = topology.energize(world.positions());
    let fed: BTreeSet<LineId> = en.fed_by.keys().cloned().collect();
    let unfed: BTreeSet<LineId> = topology
        .lines
        .keys()
        .filter(|l| !fed.contains(*l))
        .cloned()
        .collect();
    trace.push(Event::Finished {
        fed_lines: fed,
        unfed_lines: unfed,
    });
}

fn abort<F>(
    mut trace: Trace,
    world: WorldState,
    belief: Belief<F>,
    steps: Vec<Belief<F>>,
    reason: &str,
) -> SessionOutcome<F> {
    trace.push(Event::Aborted {
        reason: reason.to_string(),
    });
    SessionOutcome {
        trace,
        world,
        belief,
        steps,
        termination: Termination::Aborted(reason.to_string()),
    }
}

fn belief_input_error(e: BeliefError) -> SessionError {
    match e {
        BeliefError::Switch(s) => SessionError::Switch(s),
        other => unreachable!("non-input belief error escaped: {other}"),
    }
}

/// Final positions the engine would reach; convenience for tests.
pub fn final_positions(outcome: &SessionOutcome<impl Sized>) -> &PositionAssignment {
    outcome.world.positions()
}
