use std::fmt;

use thiserror::Error;

use super::{ProofTree, RuleData, RuleKind};
use crate::assertions::{normalize, view_shift, Assertion, NormalizedAssertion};
use crate::lang::Command;

/// The first node (pre-order) whose conclusion does not instantiate its rule.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{rule} at {}: {reason}", display_path(.path))]
pub struct RuleViolation {
    /// Premise indices from the root.
    pub path: Vec<usize>,
    pub rule: RuleKind,
    pub reason: String,
}

fn display_path(path: &[usize]) -> String {
    let mut s = String::from("root");
    for i in path {
        s.push('/');
        s.push_str(&i.to_string());
    }
    s
}

impl RuleViolation {
    pub fn path_string(&self) -> String {
        display_path(&self.path)
    }
}

pub fn check_proof(t: &ProofTree) -> Result<(), RuleViolation> {
    let mut path = Vec::new();
    check_node(t, &mut path)
}

fn check_node(t: &ProofTree, path: &mut Vec<usize>) -> Result<(), RuleViolation> {
    check_schema(t).map_err(|reason| RuleViolation {
        path: path.clone(),
        rule: t.rule,
        reason,
    })?;
    for (i, p) in t.premises.iter().enumerate() {
        path.push(i);
        check_node(p, path)?;
        path.pop();
    }
    Ok(())
}

struct Shown<'a>(&'a Assertion);

impl fmt::Display for Shown<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`", self.0)
    }
}

fn same(a: &Assertion, b: &Assertion) -> bool {
    normalize(a) == normalize(b)
}

fn check_schema(t: &ProofTree) -> Result<(), String> {
    let expected = t.rule.premise_count();
    if t.premises.len() != expected {
        return Err(format!("expects {expected} premises, found {}", t.premises.len()));
    }
    let c = &t.conclusion;
    let pre = normalize(&c.pre);
    let post = normalize(&c.post);
    match t.rule {
        RuleKind::Exit => {
            if c.cmd != Command::Exit {
                return Err("command is not `exit`".into());
            }
            match pre {
                NormalizedAssertion::Flat { ref obs, credits: 0 } if obs.len() == 1 => {}
                _ => return Err(format!("precondition {} is not obs(n)", Shown(&c.pre))),
            }
            if !post.is_bottom() {
                return Err(format!("postcondition {} is not false", Shown(&c.post)));
            }
        }
        RuleKind::Loop => {
            if c.cmd != Command::LoopSkip {
                return Err("command is not `loop skip`".into());
            }
            if pre != NormalizedAssertion::flat(vec![0], 1) {
                return Err(format!("precondition {} is not obs(0) * credit", Shown(&c.pre)));
            }
            if !post.is_bottom() {
                return Err(format!("postcondition {} is not false", Shown(&c.post)));
            }
        }
        RuleKind::Fork => {
            let body = match &c.cmd {
                Command::Fork(b) => b,
                _ => return Err("command is not a fork".into()),
            };
            let child = &t.premises[0].conclusion;
            if child.cmd != **body {
                return Err("premise command is not the forked body".into());
            }
            let (nf, kf) = normalize(&child.pre)
                .single_chunk()
                .ok_or_else(|| format!("child precondition {} is not obs(n) * credit^k", Shown(&child.pre)))?;
            if normalize(&child.post) != NormalizedAssertion::flat(vec![0], 0) {
                return Err(format!("child postcondition {} is not obs(0)", Shown(&child.post)));
            }
            let (nm, km) = post
                .single_chunk()
                .ok_or_else(|| format!("postcondition {} is not obs(n) * credit^k", Shown(&c.post)))?;
            if pre != NormalizedAssertion::flat(vec![nf + nm], kf + km) {
                return Err(format!(
                    "precondition {} is not the sum of child {} and kept {}",
                    Shown(&c.pre),
                    Shown(&child.pre),
                    Shown(&c.post)
                ));
            }
            match t.data {
                RuleData::Fork {
                    child_obligations,
                    child_credits,
                } if (child_obligations, child_credits) != (nf, kf) => {
                    return Err("resource split does not match the child precondition".into());
                }
                RuleData::Fork { .. } | RuleData::None => {}
                _ => return Err("unexpected rule data".into()),
            }
        }
        RuleKind::Seq => {
            let (first, second) = (&t.premises[0].conclusion, &t.premises[1].conclusion);
            if c.cmd != Command::seq(first.cmd.clone(), second.cmd.clone()) {
                return Err("command is not the sequence of the premise commands".into());
            }
            if !same(&c.pre, &first.pre) {
                return Err("precondition differs from the first premise's".into());
            }
            if !same(&first.post, &second.pre) {
                return Err(format!(
                    "intermediate assertions differ: {} vs {}",
                    Shown(&first.post),
                    Shown(&second.pre)
                ));
            }
            if !same(&c.post, &second.post) {
                return Err("postcondition differs from the second premise's".into());
            }
        }
        RuleKind::ViewShift => {
            let inner = &t.premises[0].conclusion;
            if inner.cmd != c.cmd {
                return Err("premise command differs".into());
            }
            if let RuleData::ViewShift { inner_pre, inner_post } = &t.data {
                if !same(inner_pre, &inner.pre) || !same(inner_post, &inner.post) {
                    return Err("recorded intermediate triple does not match the premise".into());
                }
            }
            if !view_shift(&c.pre, &inner.pre) {
                return Err(format!("no view shift from {} to {}", Shown(&c.pre), Shown(&inner.pre)));
            }
            if !view_shift(&inner.post, &c.post) {
                return Err(format!("no view shift from {} to {}", Shown(&inner.post), Shown(&c.post)));
            }
        }
        RuleKind::Frame => {
            let frame = match &t.data {
                RuleData::Frame { frame } => frame,
                _ => return Err("missing frame assertion".into()),
            };
            match normalize(frame) {
                NormalizedAssertion::Flat { ref obs, .. } if obs.is_empty() => {}
                _ => return Err(format!("frame {} must be an obs-free, satisfiable assertion", Shown(frame))),
            }
            let inner = &t.premises[0].conclusion;
            if inner.cmd != c.cmd {
                return Err("premise command differs".into());
            }
            if !same(&c.pre, &Assertion::star(inner.pre.clone(), frame.clone())) {
                return Err("precondition is not the premise's framed".into());
            }
            if !same(&c.post, &Assertion::star(inner.post.clone(), frame.clone())) {
                return Err("postcondition is not the premise's framed".into());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertions::Assertion::{Credit, False, Obs};
    use crate::proofs::HoareTriple;

    /// The proof of `fork { exit }; loop skip` written out by hand.
    pub(crate) fn exit_and_wait_proof() -> ProofTree {
        let child = ProofTree::view_shift(Obs(1), ProofTree::exit(1), Obs(0));
        let fork = ProofTree::fork(child, (1, 0), (0, 1));
        let body = ProofTree::seq(fork, ProofTree::loop_skip());
        ProofTree::view_shift(Obs(0), body, Obs(0))
    }

    #[test]
    fn hand_written_exit_and_wait_proof_checks() {
        let t = exit_and_wait_proof();
        assert_eq!(check_proof(&t), Ok(()));
        assert_eq!(t.conclusion.cmd.to_string(), "fork { exit }; loop skip");
    }

    #[test]
    fn loop_with_obligation_is_rejected() {
        let mut t = ProofTree::loop_skip();
        t.conclusion.pre = Assertion::held(1, 1);
        let err = check_proof(&t).unwrap_err();
        assert_eq!(err.path, Vec::<usize>::new());
        assert_eq!(err.rule, RuleKind::Loop);
    }

    #[test]
    fn exit_with_any_count_checks() {
        assert_eq!(check_proof(&ProofTree::exit(2)), Ok(()));
        let mut t = ProofTree::exit(2);
        t.conclusion.pre = Assertion::held(2, 1);
        assert!(check_proof(&t).is_err());
    }

    #[test]
    fn violation_reports_first_failing_path() {
        let mut t = exit_and_wait_proof();
        // Break the loop leaf: root / seq / loop.
        t.premises[0].premises[1].conclusion.pre = Obs(0);
        let err = check_proof(&t).unwrap_err();
        // The seq node notices first: its intermediate assertions now differ.
        assert_eq!(err.path, vec![0]);
        assert_eq!(err.rule, RuleKind::Seq);

        let mut t = exit_and_wait_proof();
        t.premises[0].premises[0].data = RuleData::Fork {
            child_obligations: 0,
            child_credits: 0,
        };
        let err = check_proof(&t).unwrap_err();
        assert_eq!(err.path, vec![0, 0]);
        assert_eq!(err.path_string(), "root/0/0");
    }

    #[test]
    fn view_shift_must_be_valid() {
        let t = ProofTree::view_shift(Obs(0), ProofTree::loop_skip(), False);
        assert!(check_proof(&t).is_err());
        let t = ProofTree::view_shift(Assertion::held(0, 2), ProofTree::loop_skip(), False);
        assert_eq!(check_proof(&t), Ok(()));
    }

    #[test]
    fn frame_must_be_obs_free() {
        assert_eq!(check_proof(&ProofTree::frame(ProofTree::exit(1), Credit)), Ok(()));
        assert!(check_proof(&ProofTree::frame(ProofTree::exit(1), Obs(0))).is_err());
        assert!(check_proof(&ProofTree::frame(ProofTree::exit(1), False)).is_err());
    }

    #[test]
    fn premise_count_is_enforced() {
        let mut t = ProofTree::exit(0);
        t.premises.push(ProofTree::exit(0));
        assert!(check_proof(&t).unwrap_err().reason.contains("premises"));
        let t = ProofTree {
            conclusion: HoareTriple::new(Obs(0), Command::Exit, False),
            rule: RuleKind::Seq,
            premises: vec![],
            data: RuleData::None,
        };
        assert!(check_proof(&t).is_err());
    }
}
