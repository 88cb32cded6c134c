//! Schedulers driving plain runs.
//!
//! A scheduler is a deterministic function of what it has seen so far and the
//! current pool; randomness only enters through an explicit seed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lang::{ThreadPool, Tid};

pub trait Scheduler {
    /// Picks a live thread. `pool` is never empty.
    fn pick(&mut self, pool: &ThreadPool) -> Tid;

    /// Window within which every live thread is guaranteed a step, when the
    /// scheduler promises one.
    fn window(&self) -> Option<usize> {
        None
    }
}

/// Cycles through live threads in ascending id order. Threads forked during a
/// cycle have larger ids and are visited before the cycle wraps.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    offset: usize,
    last: Option<Tid>,
}

impl RoundRobin {
    pub fn new() -> Self {
        RoundRobin::default()
    }

    /// Round-robin whose first pick is the `offset`-th live thread.
    pub fn rotated(offset: usize) -> Self {
        RoundRobin { offset, last: None }
    }
}

impl Scheduler for RoundRobin {
    fn pick(&mut self, pool: &ThreadPool) -> Tid {
        let tid = match self.last {
            None => pool.tids().nth(self.offset % pool.len()).expect("pool is not empty"),
            Some(last) => pool
                .tids()
                .find(|&t| t > last)
                .or_else(|| pool.tids().next())
                .expect("pool is not empty"),
        };
        self.last = Some(tid);
        tid
    }
}

pub fn round_robin() -> RoundRobin {
    RoundRobin::new()
}

pub fn rotated_round_robin(offset: usize) -> RoundRobin {
    RoundRobin::rotated(offset)
}

/// Uniformly random choice, except that a thread is forced as soon as
/// waiting any longer could make some thread miss its deadline. A thread is
/// due within `window` steps of its last step (or of first being seen).
/// Guarantees are only given while the live-thread count stays `<= window`.
#[derive(Debug, Clone)]
pub struct RandomFair {
    rng: ChaCha8Rng,
    window: usize,
    step: usize,
    deadline: BTreeMap<Tid, usize>,
}

impl RandomFair {
    pub fn new(seed: u64, window: usize) -> Self {
        assert!(window >= 1, "fairness window must be positive");
        RandomFair {
            rng: ChaCha8Rng::seed_from_u64(seed),
            window,
            step: 0,
            deadline: BTreeMap::new(),
        }
    }
}

impl Scheduler for RandomFair {
    fn pick(&mut self, pool: &ThreadPool) -> Tid {
        let now = self.step;
        self.deadline.retain(|t, _| pool.contains(*t));
        for tid in pool.tids() {
            self.deadline.entry(tid).or_insert(now + self.window - 1);
        }
        let mut by_deadline: Vec<(usize, Tid)> = self.deadline.iter().map(|(t, d)| (*d, *t)).collect();
        by_deadline.sort_unstable();
        // The r earliest deadlines need r slots starting now.
        let tight = by_deadline.iter().enumerate().any(|(r, (d, _))| *d <= now + r);
        let tid = if tight {
            by_deadline[0].1
        } else {
            let i = self.rng.random_range(0..pool.len());
            pool.tids().nth(i).expect("index is in range")
        };
        self.deadline.insert(tid, now + self.window);
        self.step += 1;
        tid
    }

    fn window(&self) -> Option<usize> {
        Some(self.window)
    }
}

pub fn random_fair(seed: u64, window: usize) -> RandomFair {
    RandomFair::new(seed, window)
}

/// Follows an explicit list of thread ids, then continues round-robin. Ids
/// that are not live are skipped.
#[derive(Debug, Clone)]
pub struct Scripted {
    script: Vec<Tid>,
    pos: usize,
    fallback: RoundRobin,
}

impl Scripted {
    pub fn new(script: Vec<Tid>) -> Self {
        Scripted {
            script,
            pos: 0,
            fallback: RoundRobin::new(),
        }
    }
}

impl Scheduler for Scripted {
    fn pick(&mut self, pool: &ThreadPool) -> Tid {
        while let Some(&tid) = self.script.get(self.pos) {
            self.pos += 1;
            if pool.contains(tid) {
                self.fallback.last = Some(tid);
                return tid;
            }
        }
        self.fallback.pick(pool)
    }
}

/// A scheduler family plus its parameters, as named on the command line:
/// `round-robin`, `rotated:N`, `random:SEED:WINDOW`, `script:0,1,2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulerSpec {
    RoundRobin,
    Rotated(usize),
    RandomFair { seed: u64, window: usize },
    Script(Vec<Tid>),
}

impl SchedulerSpec {
    pub fn build(&self) -> Box<dyn Scheduler + Send> {
        match self {
            SchedulerSpec::RoundRobin => Box::new(RoundRobin::new()),
            SchedulerSpec::Rotated(n) => Box::new(RoundRobin::rotated(*n)),
            SchedulerSpec::RandomFair { seed, window } => Box::new(RandomFair::new(*seed, *window)),
            SchedulerSpec::Script(s) => Box::new(Scripted::new(s.clone())),
        }
    }
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerSpec::RoundRobin => f.write_str("round-robin"),
            SchedulerSpec::Rotated(n) => write!(f, "rotated:{n}"),
            SchedulerSpec::RandomFair { seed, window } => write!(f, "random:{seed}:{window}"),
            SchedulerSpec::Script(s) => {
                let ids: Vec<String> = s.iter().map(|t| t.to_string()).collect();
                write!(f, "script:{}", ids.join(","))
            }
        }
    }
}

impl FromStr for SchedulerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown scheduler `{s}` (round-robin, rotated:N, random:SEED:WINDOW, script:T,T,..)");
        let mut parts = s.split(':');
        let spec = match parts.next() {
            Some("round-robin") => SchedulerSpec::RoundRobin,
            Some("rotated") => SchedulerSpec::Rotated(parts.next().and_then(|n| n.parse().ok()).ok_or_else(bad)?),
            Some("random") => {
                let seed = parts.next().and_then(|n| n.parse().ok()).ok_or_else(bad)?;
                let window = parts.next().and_then(|n| n.parse().ok()).filter(|w| *w >= 1).ok_or_else(bad)?;
                SchedulerSpec::RandomFair { seed, window }
            }
            Some("script") => {
                let list = parts.next().ok_or_else(bad)?;
                let ids = list
                    .split(',')
                    .filter(|x| !x.is_empty())
                    .map(|x| x.trim().parse().map_err(|_| bad()))
                    .collect::<Result<Vec<Tid>, _>>()?;
                SchedulerSpec::Script(ids)
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(spec)
    }
}
