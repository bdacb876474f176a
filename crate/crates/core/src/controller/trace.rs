use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use super::{ControllerError, EpisodeTrace, PolicyId};
use crate::world::Action;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TraceViolation {
    #[error("record {0} has t = {1}")]
    BadIndex(usize, usize),
    #[error("subgoal index decreases at record {0}")]
    SubgoalDecreased(usize),
    #[error("path length {claimed} but {counted} executed records")]
    PathLength { claimed: usize, counted: usize },
    #[error("MANIPULATE at record {0} is not followed by an interaction policy")]
    DanglingManipulate(usize),
    #[error("control changes at record {0} without MANIPULATE or STOP")]
    UnmarkedTransfer(usize),
    #[error("interaction policy started from a non-zero state")]
    DirtyInteractionState,
    #[error("navigation state changed during an interaction")]
    NavStateMutated,
}

fn is_ip(p: PolicyId) -> bool {
    matches!(p, PolicyId::Interaction(_) | PolicyId::SharedInteraction)
}

/// Checks the control-flow invariants every trace must satisfy.
pub fn check_trace_invariants(trace: &EpisodeTrace) -> Result<(), TraceViolation> {
    let r = &trace.records;
    for (i, rec) in r.iter().enumerate() {
        if rec.t != i {
            return Err(TraceViolation::BadIndex(i, rec.t));
        }
    }
    let counted = r.iter().filter(|x| !x.action.is_token()).count();
    if counted != trace.path_length {
        return Err(TraceViolation::PathLength { claimed: trace.path_length, counted });
    }
    for i in 1..r.len() {
        let (prev, cur) = (&r[i - 1], &r[i]);
        if cur.subgoal < prev.subgoal {
            return Err(TraceViolation::SubgoalDecreased(i));
        }
        if prev.action == Action::Manipulate && !is_ip(cur.policy) {
            return Err(TraceViolation::DanglingManipulate(i - 1));
        }
        let switched = prev.policy != cur.policy || (is_ip(prev.policy) && prev.action == Action::Stop);
        if switched && !matches!(prev.action, Action::Manipulate | Action::Stop) {
            return Err(TraceViolation::UnmarkedTransfer(i));
        }
    }
    if !trace.audit.ip_started_from_zero {
        return Err(TraceViolation::DirtyInteractionState);
    }
    if !trace.audit.nav_state_preserved {
        return Err(TraceViolation::NavStateMutated);
    }
    Ok(())
}

/// Aligned text rendering: step, subgoal, policy, action, outcome.
pub fn render_trace(trace: &EpisodeTrace) -> String {
    let mut out = format!("episode {} ({:?}, P = {})\n", trace.episode_id, trace.termination, trace.path_length);
    out.push_str(&format!("{:>4} | {:<22} | {:<14} | {:<28} | outcome\n", "t", "subgoal", "policy", "action"));
    for rec in &trace.records {
        let sg = trace.subgoals.get(rec.subgoal).map(|k| format!("{}:{k:?}", rec.subgoal)).unwrap_or_default();
        let outcome = match (rec.action.is_token(), rec.success) {
            (true, _) => "-",
            (false, true) => "ok",
            (false, false) => "failed",
        };
        let lem = if rec.deadlock_fired { " (loop escape)" } else { "" };
        out.push_str(&format!(
            "{:>4} | {:<22} | {:<14} | {:<28} | {outcome}{lem}\n",
            rec.t,
            sg,
            rec.policy.to_string(),
            rec.action.label()
        ));
    }
    out
}

pub fn write_traces_jsonl(path: &Path, traces: &[EpisodeTrace]) -> Result<(), ControllerError> {
    let io = |e: std::io::Error| ControllerError::Io(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for t in traces {
        writeln!(f, "{}", serde_json::to_string(t).expect("traces serialize")).map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn read_traces_jsonl(path: &Path) -> Result<Vec<EpisodeTrace>, ControllerError> {
    let io = |e: std::io::Error| ControllerError::Io(format!("{}: {e}", path.display()));
    let f = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line.map_err(io)?;
        if !line.trim().is_empty() {
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| ControllerError::Io(format!("{}:{}: {e}", path.display(), n + 1)))?,
            );
        }
    }
    Ok(out)
}
