//! Plain small-step semantics over thread pools.
//!
//! Single-thread steps:
//! - `loop skip; κ` steps to itself.
//! - `fork { b }; κ` steps to `κ` and spawns `b; done`.
//! - a sequence in head position is unfolded: `(a; b); κ` steps to `a; b; κ`.
//!
//! Pool steps lift single-thread steps (a spawned thread gets id
//! `max(dom) + 1`), remove a thread whose continuation is `done`, and clear
//! the whole pool when the stepped thread's head is `exit`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{Command, Continuation, ThreadPool, Tid};
use crate::schedule::Scheduler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "ST-Loop")]
    Loop,
    #[serde(rename = "ST-Fork")]
    Fork,
    #[serde(rename = "ST-Seq-lift")]
    SeqLift,
    #[serde(rename = "TP-Exit")]
    Exit,
    #[serde(rename = "TP-ThreadTerm")]
    ThreadTerm,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Loop => "ST-Loop",
            Rule::Fork => "ST-Fork",
            Rule::SeqLift => "ST-Seq-lift",
            Rule::Exit => "TP-Exit",
            Rule::ThreadTerm => "TP-ThreadTerm",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StepLabel {
    pub tid: Tid,
    pub rule: Rule,
}

/// Result of a single-thread step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadStep {
    pub rule: Rule,
    pub next: Continuation,
    pub forked: Option<Continuation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no single-thread step applies")]
pub struct NoThreadStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("thread {0} is not in the pool")]
    UnknownThread(Tid),
}

pub fn step_thread(k: &Continuation) -> Result<ThreadStep, NoThreadStep> {
    match k.head() {
        None | Some(Command::Exit) => Err(NoThreadStep),
        Some(Command::LoopSkip) => Ok(ThreadStep {
            rule: Rule::Loop,
            next: k.clone(),
            forked: None,
        }),
        Some(Command::Fork(body)) => Ok(ThreadStep {
            rule: Rule::Fork,
            next: k.tail(),
            forked: Some(crate::lang::to_continuation(body)),
        }),
        Some(Command::Seq(a, b)) => Ok(ThreadStep {
            rule: Rule::SeqLift,
            next: k.replace_head([(**a).clone(), (**b).clone()]),
            forked: None,
        }),
    }
}

pub fn step_pool(tp: &ThreadPool, tid: Tid) -> Result<(ThreadPool, StepLabel), StepError> {
    let k = tp.get(tid).ok_or(StepError::UnknownThread(tid))?;
    let mut next = tp.clone();
    let rule = match k.head() {
        Some(Command::Exit) => {
            next.clear();
            Rule::Exit
        }
        None => {
            next.remove(tid);
            Rule::ThreadTerm
        }
        Some(_) => {
            let st = step_thread(k).expect("non-exit, non-done heads always step");
            next.set(tid, st.next);
            if let Some(child) = st.forked {
                next.extend(child);
            }
            st.rule
        }
    };
    Ok((next, StepLabel { tid, rule }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Terminated(usize),
    AbruptExit(usize),
    FuelExhausted(ThreadPool),
}

impl RunOutcome {
    pub fn terminates(&self) -> bool {
        !matches!(self, RunOutcome::FuelExhausted(_))
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunOutcome::Terminated(n) => write!(f, "Terminated({n})"),
            RunOutcome::AbruptExit(n) => write!(f, "AbruptExit({n})"),
            RunOutcome::FuelExhausted(_) => f.write_str("FuelExhausted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    /// Pool before the step.
    pub pool: ThreadPool,
    pub label: StepLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub final_pool: ThreadPool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Pool before step `i`; `i == len()` gives the final pool.
    pub fn pool_at(&self, i: usize) -> &ThreadPool {
        self.steps.get(i).map_or(&self.final_pool, |s| &s.pool)
    }

    /// One line per step: index, tid, rule, pool before the step.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{i}\t{}\t{}\t{}\n", s.label.tid, s.label.rule, s.pool));
        }
        out
    }
}

pub fn run(tp: &ThreadPool, scheduler: &mut dyn Scheduler, fuel: usize) -> (RunOutcome, Trace) {
    let mut pool = tp.clone();
    let mut steps = Vec::new();
    while !pool.is_empty() {
        if steps.len() == fuel {
            let outcome = RunOutcome::FuelExhausted(pool.clone());
            return (outcome, Trace { steps, final_pool: pool });
        }
        let tid = scheduler.pick(&pool);
        let (next, label) = step_pool(&pool, tid).expect("schedulers pick live threads");
        steps.push(TraceStep { pool, label });
        pool = next;
    }
    let n = steps.len();
    let outcome = match steps.last() {
        Some(s) if s.label.rule == Rule::Exit => RunOutcome::AbruptExit(n),
        _ => RunOutcome::Terminated(n),
    };
    (outcome, Trace { steps, final_pool: pool })
}

/// Finite-window fairness: every thread alive before step `k` is stepped at
/// some `j` in `[k, k + window)`, or is gone from the pool before then. A
/// window reaching past the end of the trace is only checked against the
/// final pool.
pub fn is_fair_prefix(trace: &Trace, window: usize) -> bool {
    assert!(window >= 1, "fairness window must be positive");
    let n = trace.len();
    for k in 0..n {
        for tid in trace.pool_at(k).tids() {
            let end = (k + window).min(n);
            let served = (k..end).any(|j| trace.steps[j].label.tid == tid || !trace.pool_at(j).contains(tid));
            if served {
                continue;
            }
            let gone = !trace.pool_at(end).contains(tid);
            if k + window <= n && !gone {
                return false;
            }
        }
    }
    true
}
