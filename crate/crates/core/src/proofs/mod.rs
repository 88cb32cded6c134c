//! Hoare triples, proof trees over the six proof rules, a checker for them,
//! and proof search for `{obs(n)} c {obs(0)}`.
//!
//! Rule schemas:
//!
//! ```text
//! Exit       {obs(n)} exit {false}
//! Loop       {obs(0) * credit} loop skip {false}
//! Fork       {obs(nf) * credit^kf} b {obs(0)}
//!            ------------------------------------------------------------
//!            {obs(nf+nm) * credit^(kf+km)} fork { b } {obs(nm) * credit^km}
//! Seq        {P} c1 {R}    {R} c2 {Q}
//!            ------------------------
//!            {P} c1; c2 {Q}
//! ViewShift  P ⇛ P'    {P'} c {Q'}    Q' ⇛ Q
//!            ----------------------------------
//!            {P} c {Q}
//! Frame      {P} c {Q}      F has no obs atom
//!            ------------------------------
//!            {P * F} c {Q * F}
//! ```
//!
//! Assertions in schemas are compared up to normal form.

mod cert;
mod check;
mod search;

pub use cert::{CertError, Certificate};
pub use check::{check_proof, RuleViolation};
pub use search::{derive, requirement, verify, NotDerivable, Requirement, Verdict};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assertions::Assertion;
use crate::lang::Command;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoareTriple {
    pub pre: Assertion,
    pub cmd: Command,
    pub post: Assertion,
}

impl HoareTriple {
    pub fn new(pre: Assertion, cmd: Command, post: Assertion) -> Self {
        HoareTriple { pre, cmd, post }
    }
}

impl fmt::Display for HoareTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}} {} {{{}}}", self.pre, self.cmd, self.post)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    Frame,
    Exit,
    Loop,
    Fork,
    Seq,
    ViewShift,
}

impl RuleKind {
    pub fn premise_count(self) -> usize {
        match self {
            RuleKind::Exit | RuleKind::Loop => 0,
            RuleKind::Frame | RuleKind::Fork | RuleKind::ViewShift => 1,
            RuleKind::Seq => 2,
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Rule-specific payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleData {
    None,
    Frame { frame: Assertion },
    /// The intermediate triple's pre- and postcondition.
    ViewShift { inner_pre: Assertion, inner_post: Assertion },
    /// Resources handed to the forked thread.
    Fork { child_obligations: u64, child_credits: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofTree {
    pub conclusion: HoareTriple,
    pub rule: RuleKind,
    pub premises: Vec<ProofTree>,
    pub data: RuleData,
}

impl ProofTree {
    pub fn exit(obligations: u64) -> Self {
        ProofTree {
            conclusion: HoareTriple::new(Assertion::Obs(obligations), Command::Exit, Assertion::False),
            rule: RuleKind::Exit,
            premises: Vec::new(),
            data: RuleData::None,
        }
    }

    pub fn loop_skip() -> Self {
        ProofTree {
            conclusion: HoareTriple::new(Assertion::held(0, 1), Command::LoopSkip, Assertion::False),
            rule: RuleKind::Loop,
            premises: Vec::new(),
            data: RuleData::None,
        }
    }

    /// Fork handing `(child_obligations, child_credits)` to the child whose
    /// proof is `child`, the parent keeping `(kept_obligations, kept_credits)`.
    pub fn fork(child: ProofTree, child_split: (u64, u64), kept: (u64, u64)) -> Self {
        let (nf, kf) = child_split;
        let (nm, km) = kept;
        ProofTree {
            conclusion: HoareTriple::new(
                Assertion::held(nf + nm, kf + km),
                Command::fork(child.conclusion.cmd.clone()),
                Assertion::held(nm, km),
            ),
            rule: RuleKind::Fork,
            premises: vec![child],
            data: RuleData::Fork {
                child_obligations: nf,
                child_credits: kf,
            },
        }
    }

    pub fn seq(first: ProofTree, second: ProofTree) -> Self {
        ProofTree {
            conclusion: HoareTriple::new(
                first.conclusion.pre.clone(),
                Command::seq(first.conclusion.cmd.clone(), second.conclusion.cmd.clone()),
                second.conclusion.post.clone(),
            ),
            rule: RuleKind::Seq,
            premises: vec![first, second],
            data: RuleData::None,
        }
    }

    pub fn view_shift(pre: Assertion, inner: ProofTree, post: Assertion) -> Self {
        ProofTree {
            conclusion: HoareTriple::new(pre, inner.conclusion.cmd.clone(), post),
            rule: RuleKind::ViewShift,
            data: RuleData::ViewShift {
                inner_pre: inner.conclusion.pre.clone(),
                inner_post: inner.conclusion.post.clone(),
            },
            premises: vec![inner],
        }
    }

    pub fn frame(inner: ProofTree, frame: Assertion) -> Self {
        ProofTree {
            conclusion: HoareTriple::new(
                Assertion::star(inner.conclusion.pre.clone(), frame.clone()),
                inner.conclusion.cmd.clone(),
                Assertion::star(inner.conclusion.post.clone(), frame.clone()),
            ),
            rule: RuleKind::Frame,
            premises: vec![inner],
            data: RuleData::Frame { frame },
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(ProofTree::size).sum::<usize>()
    }

    /// Largest obs value or credit count appearing in any assertion.
    pub fn max_resource(&self) -> u64 {
        let of = |a: &Assertion| match a.normalize() {
            crate::assertions::NormalizedAssertion::Bottom => 0,
            crate::assertions::NormalizedAssertion::Flat { obs, credits } => {
                obs.into_iter().max().unwrap_or(0).max(credits)
            }
        };
        let here = of(&self.conclusion.pre).max(of(&self.conclusion.post));
        self.premises.iter().map(ProofTree::max_resource).fold(here, u64::max)
    }

    /// Rules in pre-order.
    pub fn rules_preorder(&self) -> Vec<RuleKind> {
        let mut out = vec![self.rule];
        for p in &self.premises {
            out.extend(p.rules_preorder());
        }
        out
    }
}
