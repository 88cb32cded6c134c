//! Resource-annotated thread pools.
//!
//! Every thread carries one obligations chunk and a credit count. Ghost
//! steps add or cancel an obligation-credit pair on one thread; real steps
//! follow the plain semantics but get stuck when a looping thread lacks a
//! credit or holds obligations, or when a thread finishes holding
//! obligations. `exit` clears the pool whatever anyone holds.

mod annotate;

pub use annotate::{annotate, AnnotationFailure};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::assertions::ResourceBundle;
use crate::lang::{Command, Continuation, ThreadPool, Tid};
use crate::semantics::{step_thread, Rule};

/// A complete bundle: one obligations chunk plus credits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Holding {
    pub obligations: u64,
    pub credits: u64,
}

impl Holding {
    pub fn new(obligations: u64, credits: u64) -> Self {
        Holding { obligations, credits }
    }

    pub fn to_bundle(self) -> ResourceBundle {
        ResourceBundle::single(self.obligations, self.credits)
    }

    /// `self ⊕ other`: chunks and credits add up.
    pub fn plus(self, other: Holding) -> Holding {
        Holding::new(self.obligations + other.obligations, self.credits + other.credits)
    }
}

impl fmt::Display for Holding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(<{}>|{})", self.obligations, self.credits)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnnotatedThread {
    pub holding: Holding,
    pub cont: Continuation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AnnotatedPool {
    threads: BTreeMap<Tid, AnnotatedThread>,
}

impl AnnotatedPool {
    pub fn empty() -> Self {
        AnnotatedPool::default()
    }

    /// `{tid ↦ (holding, c; done)}`.
    pub fn initial(tid: Tid, holding: Holding, c: &Command) -> Self {
        let mut threads = BTreeMap::new();
        threads.insert(
            tid,
            AnnotatedThread {
                holding,
                cont: crate::lang::to_continuation(c),
            },
        );
        AnnotatedPool { threads }
    }

    pub fn from_threads(threads: impl IntoIterator<Item = (Tid, Holding, Continuation)>) -> Self {
        AnnotatedPool {
            threads: threads
                .into_iter()
                .map(|(t, holding, cont)| (t, AnnotatedThread { holding, cont }))
                .collect(),
        }
    }

    pub fn get(&self, tid: Tid) -> Option<&AnnotatedThread> {
        self.threads.get(&tid)
    }

    pub fn contains(&self, tid: Tid) -> bool {
        self.threads.contains_key(&tid)
    }

    pub fn len(&self) -> usize {
        self.threads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threads.is_empty()
    }

    pub fn tids(&self) -> impl Iterator<Item = Tid> + '_ {
        self.threads.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Tid, &AnnotatedThread)> + '_ {
        self.threads.iter().map(|(t, th)| (*t, th))
    }

    pub fn fresh_tid(&self) -> Tid {
        self.threads.keys().next_back().map_or(0, |m| m + 1)
    }

    /// Drops the annotations.
    pub fn erase(&self) -> ThreadPool {
        ThreadPool::from_threads(self.threads.iter().map(|(t, th)| (*t, th.cont.clone())))
    }

    fn thread_mut(&mut self, tid: Tid) -> Option<&mut AnnotatedThread> {
        self.threads.get_mut(&tid)
    }

    /// Renders the bundles as `{tid:(<o>|c), ...}`.
    pub fn bundles(&self) -> String {
        let parts: Vec<String> = self.threads.iter().map(|(t, th)| format!("{t}:{}", th.holding)).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GhostKind {
    Intro,
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnnotatedRule {
    GhostIntro,
    GhostCancel,
    Loop,
    Fork,
    SeqLift,
    Exit,
    ThreadTerm,
}

impl AnnotatedRule {
    pub fn name(self) -> &'static str {
        match self {
            AnnotatedRule::GhostIntro => "GS-Intro",
            AnnotatedRule::GhostCancel => "GS-Cancel",
            AnnotatedRule::Loop => "RA-Loop",
            AnnotatedRule::Fork => "RA-Fork",
            AnnotatedRule::SeqLift => "RA-Seq-lift",
            AnnotatedRule::Exit => "RA-Exit",
            AnnotatedRule::ThreadTerm => "RA-ThreadTerm",
        }
    }

    pub fn is_ghost(self) -> bool {
        matches!(self, AnnotatedRule::GhostIntro | AnnotatedRule::GhostCancel)
    }

    /// The plain rule a real step erases to.
    pub fn erased(self) -> Option<Rule> {
        match self {
            AnnotatedRule::GhostIntro | AnnotatedRule::GhostCancel => None,
            AnnotatedRule::Loop => Some(Rule::Loop),
            AnnotatedRule::Fork => Some(Rule::Fork),
            AnnotatedRule::SeqLift => Some(Rule::SeqLift),
            AnnotatedRule::Exit => Some(Rule::Exit),
            AnnotatedRule::ThreadTerm => Some(Rule::ThreadTerm),
        }
    }

    fn from_plain(rule: Rule) -> Self {
        match rule {
            Rule::Loop => AnnotatedRule::Loop,
            Rule::Fork => AnnotatedRule::Fork,
            Rule::SeqLift => AnnotatedRule::SeqLift,
            Rule::Exit => AnnotatedRule::Exit,
            Rule::ThreadTerm => AnnotatedRule::ThreadTerm,
        }
    }
}

impl fmt::Display for AnnotatedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AnnotatedStep {
    pub tid: Tid,
    pub rule: AnnotatedRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum StuckReason {
    #[error("loop step without a credit")]
    LoopNeedsCredit,
    #[error("loop step while holding obligations")]
    LoopHoldsObligation,
    #[error("thread finished while holding obligations")]
    TermHoldsObligation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GhostError {
    #[error("thread {0} is not in the pool")]
    UnknownThread(Tid),
    #[error("thread {0} has no obligation-credit pair to cancel")]
    CancelUnderflow(Tid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RealStepError {
    #[error("thread {0} is not in the pool")]
    UnknownThread(Tid),
    #[error("stuck: {0}")]
    Stuck(StuckReason),
    #[error("fork split {split} exceeds the forking thread's {held}")]
    SplitTooLarge { split: Holding, held: Holding },
}

pub fn ghost_step(pool: &AnnotatedPool, tid: Tid, kind: GhostKind) -> Result<AnnotatedPool, GhostError> {
    let mut next = pool.clone();
    let th = next.thread_mut(tid).ok_or(GhostError::UnknownThread(tid))?;
    match kind {
        GhostKind::Intro => {
            th.holding.obligations += 1;
            th.holding.credits += 1;
        }
        GhostKind::Cancel => {
            if th.holding.obligations == 0 || th.holding.credits == 0 {
                return Err(GhostError::CancelUnderflow(tid));
            }
            th.holding.obligations -= 1;
            th.holding.credits -= 1;
        }
    }
    Ok(next)
}

/// A non-ghost step of `tid`. At a fork, `split` is what the child receives
/// (nothing when `None`); the forking thread keeps the rest.
pub fn real_step(
    pool: &AnnotatedPool,
    tid: Tid,
    split: Option<Holding>,
) -> Result<(AnnotatedPool, AnnotatedStep), RealStepError> {
    let th = pool.get(tid).ok_or(RealStepError::UnknownThread(tid))?;
    let held = th.holding;
    let mut next = pool.clone();
    let rule = match th.cont.head() {
        Some(Command::Exit) => {
            next.threads.clear();
            AnnotatedRule::Exit
        }
        None => {
            if held.obligations != 0 {
                return Err(RealStepError::Stuck(StuckReason::TermHoldsObligation));
            }
            next.threads.remove(&tid);
            AnnotatedRule::ThreadTerm
        }
        Some(Command::LoopSkip) => {
            if held.credits == 0 {
                return Err(RealStepError::Stuck(StuckReason::LoopNeedsCredit));
            }
            if held.obligations != 0 {
                return Err(RealStepError::Stuck(StuckReason::LoopHoldsObligation));
            }
            AnnotatedRule::Loop
        }
        Some(_) => {
            let st = step_thread(&th.cont).expect("fork and sequence heads always step");
            let mut child_holding = Holding::default();
            if st.forked.is_some() {
                child_holding = split.unwrap_or_default();
                if child_holding.obligations > held.obligations || child_holding.credits > held.credits {
                    return Err(RealStepError::SplitTooLarge {
                        split: child_holding,
                        held,
                    });
                }
            }
            let fresh = next.fresh_tid();
            let me = next.thread_mut(tid).expect("checked above");
            me.cont = st.next;
            me.holding = Holding::new(held.obligations - child_holding.obligations, held.credits - child_holding.credits);
            if let Some(child) = st.forked {
                next.threads.insert(
                    fresh,
                    AnnotatedThread {
                        holding: child_holding,
                        cont: child,
                    },
                );
            }
            AnnotatedRule::from_plain(st.rule)
        }
    };
    Ok((next, AnnotatedStep { tid, rule }))
}

/// Total obligations equal total credits.
pub fn check_balance(pool: &AnnotatedPool) -> bool {
    let (o, c) = pool
        .threads
        .values()
        .fold((0u64, 0u64), |(o, c), th| (o + th.holding.obligations, c + th.holding.credits));
    o == c
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedTraceStep {
    /// Pool before the step.
    pub pool: AnnotatedPool,
    pub step: AnnotatedStep,
    /// What a fork handed to the child.
    pub split: Option<Holding>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedTrace {
    pub steps: Vec<AnnotatedTraceStep>,
    pub final_pool: AnnotatedPool,
}

impl AnnotatedTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn pool_at(&self, i: usize) -> &AnnotatedPool {
        self.steps.get(i).map_or(&self.final_pool, |s| &s.pool)
    }

    pub fn real_steps(&self) -> impl Iterator<Item = (usize, &AnnotatedTraceStep)> + '_ {
        self.steps.iter().enumerate().filter(|(_, s)| !s.step.rule.is_ghost())
    }

    /// One line per step: index, tid, rule, erased pool, bundles.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{i}\t{}\t{}\t{}\t{}\n",
                s.step.tid,
                s.step.rule,
                s.pool.erase(),
                s.pool.bundles()
            ));
        }
        out
    }
}

/// One entry of an explicit annotated schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRequest {
    Ghost(Tid, GhostKind),
    /// A real step; `split` is used when the thread forks.
    Real(Tid, Option<Holding>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnotatedOutcome {
    Terminated(usize),
    AbruptExit(usize),
    Stuck { step: usize, reason: StuckReason },
    /// Schedule or fuel ran out with threads left.
    FuelExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RunAnnotatedError {
    #[error("request {index}: thread {tid} is not in the pool")]
    UnknownThread { index: usize, tid: Tid },
    #[error("request {index}: thread {tid} has nothing to cancel")]
    CancelUnderflow { index: usize, tid: Tid },
    #[error("request {index}: fork split {split} exceeds {held}")]
    SplitTooLarge { index: usize, split: Holding, held: Holding },
}

/// Executes the requested steps in order, at most `fuel` of them.
pub fn run_annotated(
    start: &AnnotatedPool,
    schedule: &[StepRequest],
    fuel: usize,
) -> Result<(AnnotatedOutcome, AnnotatedTrace), RunAnnotatedError> {
    let mut pool = start.clone();
    let mut steps: Vec<AnnotatedTraceStep> = Vec::new();
    for (index, req) in schedule.iter().enumerate() {
        if pool.is_empty() || steps.len() == fuel {
            break;
        }
        match *req {
            StepRequest::Ghost(tid, kind) => {
                let next = ghost_step(&pool, tid, kind).map_err(|e| match e {
                    GhostError::UnknownThread(tid) => RunAnnotatedError::UnknownThread { index, tid },
                    GhostError::CancelUnderflow(tid) => RunAnnotatedError::CancelUnderflow { index, tid },
                })?;
                let rule = match kind {
                    GhostKind::Intro => AnnotatedRule::GhostIntro,
                    GhostKind::Cancel => AnnotatedRule::GhostCancel,
                };
                steps.push(AnnotatedTraceStep {
                    pool,
                    step: AnnotatedStep { tid, rule },
                    split: None,
                });
                pool = next;
            }
            StepRequest::Real(tid, split) => match real_step(&pool, tid, split) {
                Ok((next, step)) => {
                    let split = (step.rule == AnnotatedRule::Fork).then(|| split.unwrap_or_default());
                    steps.push(AnnotatedTraceStep { pool, step, split });
                    pool = next;
                }
                Err(RealStepError::Stuck(reason)) => {
                    let outcome = AnnotatedOutcome::Stuck {
                        step: steps.len(),
                        reason,
                    };
                    return Ok((outcome, AnnotatedTrace { steps, final_pool: pool }));
                }
                Err(RealStepError::UnknownThread(tid)) => {
                    return Err(RunAnnotatedError::UnknownThread { index, tid })
                }
                Err(RealStepError::SplitTooLarge { split, held }) => {
                    return Err(RunAnnotatedError::SplitTooLarge { index, split, held })
                }
            },
        }
    }
    let n = steps.len();
    let outcome = if !pool.is_empty() {
        AnnotatedOutcome::FuelExhausted
    } else if steps.last().is_some_and(|s| s.step.rule == AnnotatedRule::Exit) {
        AnnotatedOutcome::AbruptExit(n)
    } else {
        AnnotatedOutcome::Terminated(n)
    };
    Ok((outcome, AnnotatedTrace { steps, final_pool: pool }))
}
