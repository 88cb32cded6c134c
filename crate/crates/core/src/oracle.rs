//! Exact divergence decision for the plain semantics.
//!
//! Loop bodies are `skip`, so forks never repeat and the set of reachable
//! pools (up to thread ids) is finite. A fair infinite run exists iff some
//! reachable non-empty pool has every thread sitting on `loop skip`: such a
//! pool self-loops forever under any schedule, and from any other non-empty
//! pool fairness eventually forces a step that shrinks the remaining work.

use std::collections::{HashSet, VecDeque};

use crate::lang::{Command, Continuation, ThreadPool};
use crate::semantics::step_pool;

/// Summary of the reachable state graph of `{0 ↦ c; done}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    /// Reachable pools, thread ids abstracted away (the empty pool included).
    pub states: usize,
    pub max_threads: usize,
    pub diverges: bool,
}

impl StateSpace {
    /// Fuel under which every fair run of a non-diverging program stops.
    pub fn fuel(&self) -> usize {
        self.states * self.max_threads.max(1) * 4
    }
}

fn canonical(pool: &ThreadPool) -> Vec<Continuation> {
    let mut ks: Vec<Continuation> = pool.iter().map(|(_, k)| k.clone()).collect();
    ks.sort_unstable();
    ks
}

fn all_looping(pool: &ThreadPool) -> bool {
    !pool.is_empty() && pool.iter().all(|(_, k)| k.head() == Some(&Command::LoopSkip))
}

pub fn explore(c: &Command) -> StateSpace {
    let start = ThreadPool::initial(0, c);
    let mut seen: HashSet<Vec<Continuation>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(canonical(&start));
    queue.push_back(start);
    let mut max_threads = 0;
    let mut diverges = false;
    while let Some(pool) = queue.pop_front() {
        max_threads = max_threads.max(pool.len());
        if all_looping(&pool) {
            diverges = true;
        }
        for tid in pool.tids() {
            let (next, _) = step_pool(&pool, tid).expect("tid comes from the pool");
            // Thread ids are irrelevant to future behaviour, so pools are
            // renumbered 0.. before being queued.
            let next = ThreadPool::from_threads((0..).zip(canonical(&next)));
            if seen.insert(canonical(&next)) {
                queue.push_back(next);
            }
        }
    }
    StateSpace {
        states: seen.len(),
        max_threads,
        diverges,
    }
}

/// Whether `{0 ↦ c; done}` admits a fair infinite reduction sequence.
pub fn oracle_diverges(c: &Command) -> bool {
    explore(c).diverges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn diverges(src: &str) -> bool {
        oracle_diverges(&parse(src).unwrap())
    }

    #[test]
    fn named_programs() {
        assert!(!diverges("fork { exit }; loop skip"));
        assert!(diverges("loop skip"));
        assert!(!diverges("fork { loop skip }; exit"));
        assert!(diverges("fork { loop skip }; loop skip"));
        assert!(!diverges("fork { fork { loop skip }; exit }; loop skip"));
        assert!(!diverges("exit; loop skip"));
        assert!(!diverges("fork { exit; loop skip }; loop skip; exit"));
    }

    #[test]
    fn state_space_of_exit_and_wait() {
        // {f;l}, {l, e}, {} : three pools, two threads at most.
        let s = explore(&parse("fork { exit }; loop skip").unwrap());
        assert_eq!(s, StateSpace { states: 3, max_threads: 2, diverges: false });
    }

    #[test]
    fn nested_forks() {
        assert!(!diverges("fork { fork { exit }; exit }; fork { exit }; loop skip"));
        assert!(!diverges("fork { fork { exit } }; loop skip"));
        // Every thread ends up waiting: nobody is left to exit.
        assert!(diverges("fork { fork { fork { loop skip } } }; loop skip"));
        assert!(diverges("fork { fork { loop skip } }; loop skip"));
    }
}
