//! Proof-guided annotation of plain traces.
//!
//! A thread's proof lists, for every atom the thread executes, the bundle
//! the atom's rule expects. Before a thread takes a real step, ghost steps
//! bring its obligations to that bundle's count; forks hand the child the
//! split recorded in the proof. Credits only ever exceed what the proof
//! asks for, since ghost steps preserve potential and the proof's view
//! shifts can only lower it.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    ghost_step, real_step, AnnotatedPool, AnnotatedRule, AnnotatedTrace, AnnotatedTraceStep, GhostError, GhostKind,
    Holding, RealStepError,
};
use crate::assertions::normalize;
use crate::lang::{to_continuation, Command, Tid};
use crate::proofs::{ProofTree, RuleData, RuleKind};
use crate::semantics::{Rule, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationFailure {
    #[error("the trace must start from a single thread running the proven command")]
    StartMismatch,
    #[error("precondition of the proof is not obs(n)")]
    BadPrecondition,
    #[error("step {step}: thread {tid} has no plan entry left")]
    PlanExhausted { step: usize, tid: Tid },
    #[error("step {step}: plan expects {expected:?}, trace took {found}")]
    PlanMismatch { step: usize, expected: Option<Command>, found: Rule },
    #[error("step {step}: {source}")]
    Ghost { step: usize, source: GhostError },
    #[error("step {step}: {source}")]
    Real { step: usize, source: RealStepError },
}

/// What one thread does next according to its proof.
#[derive(Debug, Clone)]
struct Entry {
    atom: Command,
    /// Obligations the rule expects; `None` when the proof gives no state.
    obligations: Option<u64>,
    /// For forks: the child's share and its own plan.
    child: Option<(Holding, Vec<Entry>)>,
}

fn plan(t: &ProofTree, out: &mut Vec<Entry>) {
    match t.rule {
        RuleKind::Seq | RuleKind::ViewShift | RuleKind::Frame => {
            for p in &t.premises {
                plan(p, out);
            }
        }
        RuleKind::Exit | RuleKind::Loop | RuleKind::Fork => {
            let obligations = normalize(&t.conclusion.pre).single_chunk().map(|(n, _)| n);
            let child = match (&t.data, t.premises.first()) {
                (RuleData::Fork { child_obligations, child_credits }, Some(p)) => {
                    Some((Holding::new(*child_obligations, *child_credits), thread_plan(p)))
                }
                (_, Some(p)) => {
                    let split = normalize(&p.conclusion.pre).single_chunk().unwrap_or_default();
                    Some((Holding::new(split.0, split.1), thread_plan(p)))
                }
                _ => None,
            };
            out.push(Entry {
                atom: t.conclusion.cmd.clone(),
                obligations,
                child,
            });
        }
    }
}

fn thread_plan(t: &ProofTree) -> Vec<Entry> {
    let mut out = Vec::new();
    plan(t, &mut out);
    out
}

struct ThreadState {
    plan: Vec<Entry>,
    cursor: usize,
}

/// Annotates a plain trace of `{0 ↦ c; done}`, where `proof` proves
/// `{obs(n)} c {obs(0)}`. The result's real steps erase to `trace`.
pub fn annotate(proof: &ProofTree, trace: &Trace) -> Result<AnnotatedTrace, AnnotationFailure> {
    let start = trace.pool_at(0);
    let cmd = &proof.conclusion.cmd;
    if start.len() != 1 || start.get(0) != Some(&to_continuation(cmd)) {
        return Err(AnnotationFailure::StartMismatch);
    }
    let (n, k) = normalize(&proof.conclusion.pre)
        .single_chunk()
        .ok_or(AnnotationFailure::BadPrecondition)?;
    let mut pool = AnnotatedPool::initial(0, Holding::new(n, k), cmd);
    let mut threads: BTreeMap<Tid, ThreadState> = BTreeMap::new();
    threads.insert(
        0,
        ThreadState {
            plan: thread_plan(proof),
            cursor: 0,
        },
    );
    let mut steps = Vec::new();

    for (i, ts) in trace.steps.iter().enumerate() {
        let tid = ts.label.tid;
        let state = threads.get(&tid).ok_or(AnnotationFailure::PlanExhausted { step: i, tid })?;
        let entry = state.plan.get(state.cursor);
        let (target, split, child_plan) = match ts.label.rule {
            Rule::SeqLift => (None, None, None),
            Rule::ThreadTerm => {
                if let Some(e) = entry {
                    return Err(AnnotationFailure::PlanMismatch {
                        step: i,
                        expected: Some(e.atom.clone()),
                        found: ts.label.rule,
                    });
                }
                (Some(0), None, None)
            }
            rule => {
                let e = entry.ok_or(AnnotationFailure::PlanExhausted { step: i, tid })?;
                let fits = matches!(
                    (rule, &e.atom),
                    (Rule::Loop, Command::LoopSkip) | (Rule::Exit, Command::Exit) | (Rule::Fork, Command::Fork(_))
                );
                if !fits {
                    return Err(AnnotationFailure::PlanMismatch {
                        step: i,
                        expected: Some(e.atom.clone()),
                        found: rule,
                    });
                }
                let (split, child_plan) = match &e.child {
                    Some((h, p)) => (Some(*h), Some(p.clone())),
                    None => (None, None),
                };
                (e.obligations, split, child_plan)
            }
        };

        if let Some(target) = target {
            let held = pool.get(tid).expect("tracked threads are in the pool").holding.obligations;
            let kind = if held < target { GhostKind::Intro } else { GhostKind::Cancel };
            for _ in 0..held.abs_diff(target) {
                let next = ghost_step(&pool, tid, kind).map_err(|source| AnnotationFailure::Ghost { step: i, source })?;
                let rule = match kind {
                    GhostKind::Intro => AnnotatedRule::GhostIntro,
                    GhostKind::Cancel => AnnotatedRule::GhostCancel,
                };
                steps.push(AnnotatedTraceStep {
                    pool,
                    step: super::AnnotatedStep { tid, rule },
                    split: None,
                });
                pool = next;
            }
        }

        let fresh = pool.fresh_tid();
        let (next, step) = real_step(&pool, tid, split).map_err(|source| AnnotationFailure::Real { step: i, source })?;
        match step.rule {
            AnnotatedRule::Fork => {
                threads.get_mut(&tid).expect("checked above").cursor += 1;
                threads.insert(
                    fresh,
                    ThreadState {
                        plan: child_plan.unwrap_or_default(),
                        cursor: 0,
                    },
                );
            }
            AnnotatedRule::Exit => threads.clear(),
            AnnotatedRule::ThreadTerm => {
                threads.remove(&tid);
            }
            _ => {}
        }
        steps.push(AnnotatedTraceStep {
            pool,
            step,
            split: (step.rule == AnnotatedRule::Fork).then(|| split.unwrap_or_default()),
        });
        pool = next;
    }
    Ok(AnnotatedTrace {
        steps,
        final_pool: pool,
    })
}
