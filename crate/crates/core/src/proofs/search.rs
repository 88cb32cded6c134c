//! Proof search for `{obs(n)} c {obs(0)}`.
//!
//! A thread's resources only matter through its potential, credits minus
//! obligations: view shifts can reach exactly the states whose potential is
//! no larger. So every command has a least potential it needs before it
//! runs, computed backwards:
//!
//! - `exit` needs nothing (its postcondition is `false`);
//! - `loop skip` needs 1 (`obs(0) * credit`);
//! - `fork { b }` needs what `b; done` needs plus what the rest needs;
//! - the end of a thread needs 0 (`obs(0)`).
//!
//! Search succeeds iff the starting potential covers the requirement, and the
//! tree is then built forwards, handing each forked child the split closest
//! to nothing that still works.

use std::fmt;

use thiserror::Error;

use super::ProofTree;
use crate::assertions::{normalize, Assertion, NormalizedAssertion};
use crate::lang::Command;

/// Least potential (credits minus obligations) a command needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    /// Any state will do; the command ends in `exit` on every path.
    Any,
    AtLeast(i64),
}

impl Requirement {
    fn plus(self, other: Requirement) -> Requirement {
        match (self, other) {
            (Requirement::AtLeast(a), Requirement::AtLeast(b)) => Requirement::AtLeast(a + b),
            _ => Requirement::Any,
        }
    }

    pub fn admits(self, potential: i64) -> bool {
        match self {
            Requirement::Any => true,
            Requirement::AtLeast(r) => potential >= r,
        }
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requirement::Any => f.write_str("any"),
            Requirement::AtLeast(r) => write!(f, ">= {r}"),
        }
    }
}

/// Requirement of `c` followed by something requiring `after`.
pub fn requirement(c: &Command, after: Requirement) -> Requirement {
    match c {
        Command::Exit => Requirement::Any,
        Command::LoopSkip => Requirement::AtLeast(1),
        Command::Fork(body) => requirement(body, Requirement::AtLeast(0)).plus(after),
        Command::Seq(a, b) => requirement(a, requirement(b, after)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no proof of {{obs({obligations})}} {program} {{obs(0)}}: needs potential {needed}, has {available}")]
pub struct NotDerivable {
    pub program: String,
    pub obligations: u64,
    pub needed: Requirement,
    pub available: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Verified(ProofTree),
    Rejected,
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified(_))
    }
}

/// `(obligations, credits)` of one thread.
type State = (u64, u64);

fn potential((n, k): State) -> i64 {
    k as i64 - n as i64
}

struct Built {
    tree: ProofTree,
    /// State the tree's precondition describes.
    entry: State,
    /// State after the command, `None` when the postcondition is `false`.
    exit: Option<State>,
}

fn build(c: &Command, state: State, after: Requirement) -> Built {
    match c {
        Command::Exit => Built {
            tree: ProofTree::exit(state.0),
            entry: (state.0, 0),
            exit: None,
        },
        Command::LoopSkip => Built {
            tree: ProofTree::loop_skip(),
            entry: (0, 1),
            exit: None,
        },
        Command::Fork(body) => {
            let p = potential(state);
            let child_needs = requirement(body, Requirement::AtLeast(0));
            let lo = match child_needs {
                Requirement::Any => i64::MIN,
                Requirement::AtLeast(r) => r,
            };
            let hi = match after {
                Requirement::Any => i64::MAX,
                Requirement::AtLeast(r) => p - r,
            };
            debug_assert!(lo <= hi, "caller checked the requirement");
            let child_potential = 0i64.clamp(lo, hi);
            let child: State = if child_potential >= 0 {
                (0, child_potential as u64)
            } else {
                (child_potential.unsigned_abs(), 0)
            };
            let n_entry = (child.0 as i64).max(child.1 as i64 - p).max(0);
            let entry: State = (n_entry as u64, (n_entry + p) as u64);
            let kept: State = (entry.0 - child.0, entry.1 - child.1);
            let child_tree = thread_proof(body, child);
            Built {
                tree: ProofTree::fork(child_tree, child, kept),
                entry,
                exit: Some(kept),
            }
        }
        Command::Seq(a, b) => {
            let first = build(a, state, requirement(b, after));
            let (from, pre) = match first.exit {
                Some(s) => (s, Assertion::held(s.0, s.1)),
                None => {
                    // Unreachable code: start from whatever the rest needs.
                    let need = match requirement(b, after) {
                        Requirement::Any => 0,
                        Requirement::AtLeast(r) => r.max(0) as u64,
                    };
                    ((0, need), Assertion::False)
                }
            };
            let second = build(b, from, after);
            let second_tree = if first.exit == Some(second.entry) {
                second.tree
            } else {
                let post = second.tree.conclusion.post.clone();
                ProofTree::view_shift(pre, second.tree, post)
            };
            Built {
                tree: ProofTree::seq(first.tree, second_tree),
                entry: first.entry,
                exit: second.exit,
            }
        }
    }
}

/// `{obs(n) * credit^k} c {obs(0)}` for a state known to be sufficient.
fn thread_proof(c: &Command, start: State) -> ProofTree {
    let built = build(c, start, Requirement::AtLeast(0));
    let pre = Assertion::held(start.0, start.1);
    let done = Assertion::Obs(0);
    let post_is_done = normalize(&built.tree.conclusion.post) == NormalizedAssertion::flat(vec![0], 0);
    if built.entry == start && post_is_done {
        built.tree
    } else {
        ProofTree::view_shift(pre, built.tree, done)
    }
}

/// Searches for a proof of `{obs(n)} c {obs(0)}`.
pub fn derive(c: &Command, n: u64) -> Result<ProofTree, NotDerivable> {
    let needed = requirement(c, Requirement::AtLeast(0));
    let available = -(n as i64);
    if !needed.admits(available) {
        return Err(NotDerivable {
            program: c.to_string(),
            obligations: n,
            needed,
            available,
        });
    }
    Ok(thread_proof(c, (n, 0)))
}

/// Programs start with an empty obligations chunk and no credits.
pub fn verify(c: &Command) -> Verdict {
    match derive(c, 0) {
        Ok(t) => Verdict::Verified(t),
        Err(_) => Verdict::Rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;
    use crate::proofs::{check_proof, RuleData, RuleKind};

    fn prog(src: &str) -> Command {
        parse(src).unwrap()
    }

    #[test]
    fn exit_and_wait_follows_the_sketch() {
        let t = derive(&prog("fork { exit }; loop skip"), 0).unwrap();
        assert_eq!(check_proof(&t), Ok(()));
        use RuleKind::*;
        assert_eq!(t.rules_preorder(), vec![ViewShift, Seq, Fork, ViewShift, Exit, Loop]);
        let shift = match &t.data {
            RuleData::ViewShift { inner_pre, inner_post } => (inner_pre.to_string(), inner_post.to_string()),
            other => panic!("{other:?}"),
        };
        assert_eq!(shift, ("obs(1) * credit".into(), "false".into()));
        let fork = &t.premises[0].premises[0];
        assert_eq!(
            fork.data,
            RuleData::Fork {
                child_obligations: 1,
                child_credits: 0
            }
        );
        assert_eq!(fork.conclusion.post.to_string(), "obs(0) * credit");
    }

    #[test]
    fn bare_loop_is_not_derivable() {
        let err = derive(&Command::LoopSkip, 0).unwrap_err();
        assert_eq!(err.needed, Requirement::AtLeast(1));
        assert!(!verify(&Command::LoopSkip).is_verified());
    }

    #[test]
    fn nested_fork_program_is_derivable() {
        let c = prog("fork { fork { loop skip }; exit }; loop skip");
        let t = derive(&c, 0).unwrap();
        assert_eq!(check_proof(&t), Ok(()));
        assert_eq!(t.conclusion.cmd, c);
    }

    #[test]
    fn waiting_child_gets_a_credit() {
        let c = prog("fork { loop skip }; exit");
        let t = match verify(&c) {
            Verdict::Verified(t) => t,
            Verdict::Rejected => panic!("rejected"),
        };
        assert_eq!(check_proof(&t), Ok(()));
        let fork = &t.premises[0].premises[0];
        assert_eq!(fork.conclusion.pre.to_string(), "obs(1) * credit");
        assert_eq!(fork.premises[0].conclusion.pre.to_string(), "obs(0) * credit");
        assert_eq!(fork.conclusion.post.to_string(), "obs(1)");
    }

    #[test]
    fn requirements() {
        let r = |s: &str| requirement(&prog(s), Requirement::AtLeast(0));
        assert_eq!(r("exit"), Requirement::Any);
        assert_eq!(r("loop skip"), Requirement::AtLeast(1));
        assert_eq!(r("fork { loop skip }; loop skip"), Requirement::AtLeast(2));
        assert_eq!(r("fork { exit }"), Requirement::Any);
        assert_eq!(r("fork { loop skip }"), Requirement::AtLeast(1));
        assert_eq!(r("fork { loop skip }; fork { loop skip }; exit"), Requirement::Any);
    }

    #[test]
    fn initial_obligations_need_discharging() {
        assert!(derive(&prog("fork { loop skip }"), 0).is_err());
        assert!(derive(&prog("exit"), 5).is_ok());
        let t = derive(&prog("fork { exit }"), 3).unwrap();
        assert_eq!(check_proof(&t), Ok(()));
    }

    #[test]
    fn unreachable_tail_still_gets_a_proof() {
        for src in ["exit; loop skip", "loop skip; fork { loop skip }", "exit; fork { loop skip; exit }; loop skip"] {
            let c = prog(src);
            if let Ok(t) = derive(&c, 0) {
                assert_eq!(check_proof(&t), Ok(()), "{src}");
            }
        }
        assert!(verify(&prog("exit; loop skip")).is_verified());
    }

    #[test]
    fn left_nested_sequences_keep_their_shape() {
        let c = Command::seq(Command::seq(Command::fork(Command::Exit), Command::LoopSkip), Command::Exit);
        let t = derive(&c, 0).unwrap();
        assert_eq!(t.conclusion.cmd, c);
        assert_eq!(check_proof(&t), Ok(()));
    }
}
