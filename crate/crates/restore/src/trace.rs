//! Session traces: a structured event log of everything the supervisor
//! believed, decided, and observed, renderable as JSON lines or as a
//! human-readable transcript.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::belief::Candidate;
use crate::ids::LineId;
use crate::planner::Plan;
use crate::topology::Position;
use crate::world::{FdReading, Notification, Observation, PdReading, SwitchOp};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// The sensing snapshot the session starts from.
    InitialObservation { observation: Observation },
    /// A new working hypothesis, with its posterior probability and the
    /// size of the distribution it was drawn from.
    HypothesisAdopted {
        candidate: Candidate,
        probability: f64,
        hypotheses: usize,
        k: usize,
    },
    PlanAdopted {
        plan: Plan,
        utility: f64,
        restored_weight: f64,
    },
    OpExecuted {
        op: SwitchOp,
        observation: Observation,
    },
    /// The posterior after an operation no longer matches the expected
    /// successor of the working hypothesis.
    Replan { reason: ReplanReason },
    /// Every hypothesis was refuted; the fault cardinality bound was raised
    /// and the whole history replayed.
    Escalation { k: usize },
    Aborted { reason: String },
    Finished {
        fed_lines: BTreeSet<LineId>,
        unfed_lines: BTreeSet<LineId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanReason {
    HypothesisChanged,
    Escalated,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<Event>,
}

impl Trace {
    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    /// One JSON object per line, one line per event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// Human-readable transcript, one prefixed line per event.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = writeln!(out, "{}", render_event(e));
        }
        out
    }
}

fn render_event(event: &Event) -> String {
    match event {
        Event::InitialObservation { observation } => {
            format!("OBS {}", render_observation(observation))
        }
        Event::HypothesisAdopted {
            candidate,
            probability,
            hypotheses,
            k,
        } => {
            let areas: Vec<&str> = candidate.fault_areas.iter().map(|a| a.as_str()).collect();
            format!(
                "HYP faults={{{}}} p={:.4} ({} hypotheses, k={})",
                areas.join(","),
                probability,
                hypotheses,
                k
            )
        }
        Event::PlanAdopted {
            plan,
            utility,
            restored_weight,
        } => format!(
            "PLAN {} (utility {:.3}, restores {:.1})",
            render_ops(&plan.ops),
            utility,
            restored_weight
        ),
        Event::OpExecuted { op, observation } => format!(
            "OP {} {} -> {}",
            verb(op.target),
            op.device.as_str(),
            render_observation(observation)
        ),
        Event::Replan { reason } => match reason {
            ReplanReason::HypothesisChanged => "REPLAN hypothesis changed".to_string(),
            ReplanReason::Escalated => "REPLAN after escalation".to_string(),
        },
        Event::Escalation { k } => format!("ESC k={k}"),
        Event::Aborted { reason } => format!("END aborted: {reason}"),
        Event::Finished {
            fed_lines,
            unfed_lines,
        } => {
            let fed: Vec<&str> = fed_lines.iter().map(|l| l.as_str()).collect();
            let unfed: Vec<&str> = unfed_lines.iter().map(|l| l.as_str()).collect();
            format!(
                "END finished; fed={{{}}} unfed={{{}}}",
                fed.join(","),
                unfed.join(",")
            )
        }
    }
}

fn verb(target: Position) -> &'static str {
    match target {
        Position::Open => "open",
        Position::Closed => "close",
    }
}

fn render_ops(ops: &[SwitchOp]) -> String {
    if ops.is_empty() {
        return "(no ops)".to_string();
    }
    ops.iter()
        .map(|op| format!("{} {}", verb(op.target), op.device.as_str()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn render_observation(obs: &Observation) -> String {
    let notif = match obs.notification {
        Notification::Positive => "ack",
        Notification::Negative => "nack",
        Notification::None => "-",
    };
    let pd = match obs.pd_reading {
        PdReading::Open => " pd=open",
        PdReading::Closed => " pd=closed",
        PdReading::NoInfo => "",
    };
    let tripped = if obs.tripped.is_empty() {
        String::new()
    } else {
        let cbs: Vec<&str> = obs.tripped.iter().map(|d| d.as_str()).collect();
        format!(" tripped={{{}}}", cbs.join(","))
    };
    let fds: Vec<String> = obs
        .fd_readings
        .iter()
        .map(|(d, r)| {
            let code = match r {
                FdReading::FaultDownstream => "F",
                FdReading::NoFault => "n",
                FdReading::NoInfo => "?",
            };
            format!("{}={}", d.as_str(), code)
        })
        .collect();
    format!("{notif}{pd}{tripped} fd[{}]", fds.join(" "))
}
