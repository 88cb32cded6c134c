//! Random and exhaustive program campaigns checking that verified programs
//! never diverge, plus the ghost-state properties along their traces.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ghost::{annotate, check_balance, AnnotatedTrace};
use crate::lang::{Command, ThreadPool};
use crate::oracle::explore;
use crate::pog::{build_pog, check_leaf_balance, loop_leaf_shape, random_sc_prefix};
use crate::proofs::{verify, ProofTree, Verdict};
use crate::schedule::{random_fair, round_robin};
use crate::semantics::{run, Trace};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GenConfig {
    pub max_atoms: usize,
    pub fork_weight: f64,
    pub loop_weight: f64,
    pub exit_weight: f64,
    pub seed: u64,
    pub count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_atoms: 12,
            fork_weight: 1.0,
            loop_weight: 1.0,
            exit_weight: 1.0,
            seed: 42,
            count: 500,
        }
    }
}

/// How a campaign spreads programs over cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Prefixes sampled per verified trace for the leaf-sum check.
pub const PREFIXES_PER_TRACE: usize = 3;

/// Fairness window of the random schedule each verified program also runs
/// under.
pub const RANDOM_WINDOW: usize = 4;

fn pick_atom<R: Rng>(cfg: &GenConfig, rng: &mut R, fork_allowed: bool) -> usize {
    let weights = [
        if fork_allowed { cfg.fork_weight } else { 0.0 },
        cfg.loop_weight,
        cfg.exit_weight,
    ];
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    2
}

/// A sequence of exactly `atoms` atoms, fork bodies included.
fn gen_exact<R: Rng>(cfg: &GenConfig, rng: &mut R, atoms: usize) -> Command {
    let mut items = Vec::new();
    let mut left = atoms;
    while left > 0 {
        let atom = match pick_atom(cfg, rng, left >= 2) {
            0 => {
                let body = rng.random_range(1..left);
                left -= body;
                Command::fork(gen_exact(cfg, rng, body))
            }
            1 => Command::LoopSkip,
            _ => Command::Exit,
        };
        left -= 1;
        items.push(atom);
    }
    Command::sequence(items)
}

/// `cfg.count` programs, each with a uniformly drawn atom count in
/// `1..=cfg.max_atoms`. Deterministic in the seed.
pub fn gen_program(cfg: &GenConfig) -> Vec<Command> {
    assert!(
        cfg.fork_weight >= 0.0 && cfg.loop_weight > 0.0 && cfg.exit_weight > 0.0,
        "generator weights must be positive"
    );
    if cfg.max_atoms == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|_| {
            let n = rng.random_range(1..=cfg.max_atoms);
            gen_exact(cfg, &mut rng, n)
        })
        .collect()
}

/// Every program with exactly `atoms` atoms.
fn sequences(atoms: usize, memo: &mut Vec<Option<Vec<Command>>>) -> Vec<Command> {
    if let Some(done) = &memo[atoms] {
        return done.clone();
    }
    let mut out = Vec::new();
    for first in 1..=atoms {
        let heads: Vec<Command> = if first == 1 {
            vec![Command::Exit, Command::LoopSkip]
        } else {
            sequences(first - 1, memo).into_iter().map(Command::fork).collect()
        };
        let rests = if first == atoms {
            vec![None]
        } else {
            sequences(atoms - first, memo).into_iter().map(Some).collect()
        };
        for h in &heads {
            for r in &rests {
                out.push(match r {
                    None => h.clone(),
                    Some(r) => Command::seq(h.clone(), r.clone()),
                });
            }
        }
    }
    memo[atoms] = Some(out.clone());
    out
}

/// All programs with between 1 and `max_atoms` atoms, in normal form.
pub fn enumerate_programs(max_atoms: usize) -> Vec<Command> {
    let mut memo = vec![None; max_atoms + 1];
    (1..=max_atoms).flat_map(|n| sequences(n, &mut memo)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum WitnessKind {
    /// Verified, yet the oracle finds a fair infinite run.
    Soundness,
    /// Verified and not diverging, yet round-robin ran out of fuel.
    Simulation,
    Annotation,
    Balance,
    LeafSums,
    LoopLeaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub kind: WitnessKind,
    pub program: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CampaignReport {
    pub total: usize,
    pub verified: usize,
    pub rejected: usize,
    pub oracle_diverges: usize,
    /// Rejected programs the oracle says terminate.
    pub rejected_terminating: usize,
    pub soundness_violations: usize,
    pub simulation_failures: usize,
    pub annotation_failures: usize,
    pub balance_checks: usize,
    pub balance_failures: usize,
    pub leaf_sum_checks: usize,
    pub leaf_sum_failures: usize,
    pub loop_leaf_checks: usize,
    pub loop_leaf_failures: usize,
    pub witnesses: Vec<Witness>,
    /// Seconds.
    pub wall_time: f64,
}

impl CampaignReport {
    /// Associative; wall times add up.
    pub fn merge(mut self, other: CampaignReport) -> CampaignReport {
        self.total += other.total;
        self.verified += other.verified;
        self.rejected += other.rejected;
        self.oracle_diverges += other.oracle_diverges;
        self.rejected_terminating += other.rejected_terminating;
        self.soundness_violations += other.soundness_violations;
        self.simulation_failures += other.simulation_failures;
        self.annotation_failures += other.annotation_failures;
        self.balance_checks += other.balance_checks;
        self.balance_failures += other.balance_failures;
        self.leaf_sum_checks += other.leaf_sum_checks;
        self.leaf_sum_failures += other.leaf_sum_failures;
        self.loop_leaf_checks += other.loop_leaf_checks;
        self.loop_leaf_failures += other.loop_leaf_failures;
        self.witnesses.extend(other.witnesses);
        self.wall_time += other.wall_time;
        self
    }

    pub fn violations(&self) -> usize {
        self.soundness_violations
            + self.simulation_failures
            + self.annotation_failures
            + self.balance_failures
            + self.leaf_sum_failures
            + self.loop_leaf_failures
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }

    /// Share of rejected programs that do not diverge.
    pub fn incompleteness(&self) -> f64 {
        if self.rejected == 0 {
            0.0
        } else {
            self.rejected_terminating as f64 / self.rejected as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    fn witness(&mut self, kind: WitnessKind, c: &Command, detail: impl Into<String>) {
        self.witnesses.push(Witness {
            kind,
            program: c.to_string(),
            detail: detail.into(),
        });
    }
}

impl fmt::Display for CampaignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 13] = [
            ("programs", self.total.to_string()),
            ("verified", self.verified.to_string()),
            ("rejected", self.rejected.to_string()),
            ("oracle: diverging", self.oracle_diverges.to_string()),
            (
                "rejected but terminating",
                format!("{} ({:.1}%)", self.rejected_terminating, 100.0 * self.incompleteness()),
            ),
            ("soundness violations", self.soundness_violations.to_string()),
            ("simulation failures", self.simulation_failures.to_string()),
            ("annotation failures", self.annotation_failures.to_string()),
            (
                "balance checks / failures",
                format!("{} / {}", self.balance_checks, self.balance_failures),
            ),
            (
                "leaf-sum checks / failures",
                format!("{} / {}", self.leaf_sum_checks, self.leaf_sum_failures),
            ),
            (
                "loop-leaf checks / failures",
                format!("{} / {}", self.loop_leaf_checks, self.loop_leaf_failures),
            ),
            ("witnesses", self.witnesses.len().to_string()),
            ("wall time", format!("{:.3}s", self.wall_time)),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<28}{v:>14}")?;
        }
        for w in &self.witnesses {
            writeln!(f, "{:?}: {} ({})", w.kind, w.program, w.detail)?;
        }
        Ok(())
    }
}

/// Balance at every pool, and a bounded number of ghost steps between two
/// real steps of a thread.
fn check_annotated(t: &AnnotatedTrace, proof: &ProofTree, report: &mut CampaignReport, c: &Command) {
    let pools = t.steps.iter().map(|s| &s.pool).chain(std::iter::once(&t.final_pool));
    for (i, pool) in pools.enumerate() {
        report.balance_checks += 1;
        if !check_balance(pool) {
            report.balance_failures += 1;
            report.witness(WitnessKind::Balance, c, format!("pool before step {i}: {}", pool.bundles()));
        }
    }
    let bound = proof.size();
    let mut run = 0usize;
    for s in &t.steps {
        if s.step.rule.is_ghost() {
            run += 1;
            if run > bound {
                report.annotation_failures += 1;
                report.witness(WitnessKind::Annotation, c, format!("more than {bound} ghost steps in a row"));
                return;
            }
        } else {
            run = 0;
        }
    }
}

/// Checks one program. Verified programs are annotated along a round-robin
/// run and a random fair run; `seed` drives the latter and prefix sampling.
pub fn check_program(c: &Command, seed: u64) -> CampaignReport {
    let mut report = CampaignReport {
        total: 1,
        ..CampaignReport::default()
    };
    let space = explore(c);
    if space.diverges {
        report.oracle_diverges = 1;
    }
    let proof = match verify(c) {
        Verdict::Rejected => {
            report.rejected = 1;
            if !space.diverges {
                report.rejected_terminating = 1;
            }
            return report;
        }
        Verdict::Verified(p) => p,
    };
    report.verified = 1;
    if space.diverges {
        report.soundness_violations = 1;
        report.witness(WitnessKind::Soundness, c, "oracle reaches a pool where every thread loops");
    }

    let (outcome, trace) = run(&ThreadPool::initial(0, c), &mut round_robin(), space.fuel());
    if !space.diverges && !outcome.terminates() {
        report.simulation_failures = 1;
        report.witness(WitnessKind::Simulation, c, format!("round-robin: {outcome} after {} steps", trace.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, shuffled) = run(
        &ThreadPool::initial(0, c),
        &mut random_fair(rng.random(), RANDOM_WINDOW),
        space.fuel(),
    );
    for trace in [&trace, &shuffled] {
        check_trace(c, &proof, trace, &mut rng, &mut report);
    }
    report
}

/// Annotates `trace` and checks balance, leaf sums and the loop-leaf shape.
fn check_trace(c: &Command, proof: &ProofTree, trace: &Trace, rng: &mut ChaCha8Rng, report: &mut CampaignReport) {
    let annotated = match annotate(proof, trace) {
        Ok(t) => t,
        Err(e) => {
            report.annotation_failures += 1;
            report.witness(WitnessKind::Annotation, c, e.to_string());
            return;
        }
    };
    check_annotated(&annotated, proof, report, c);

    let g = match build_pog(&annotated) {
        Ok(g) => g,
        Err(e) => {
            report.annotation_failures += 1;
            report.witness(WitnessKind::Annotation, c, e.to_string());
            return;
        }
    };
    for _ in 0..PREFIXES_PER_TRACE {
        let prefix = random_sc_prefix(&g, rng);
        report.leaf_sum_checks += 1;
        match check_leaf_balance(&g, &prefix) {
            Ok(a) if a.balanced() => {}
            Ok(a) => {
                report.leaf_sum_failures += 1;
                report.witness(
                    WitnessKind::LeafSums,
                    c,
                    format!("leaves {:?}: obligations {} vs credits {}", a.leaves, a.sums.0, a.sums.1),
                );
            }
            Err(e) => {
                report.leaf_sum_failures += 1;
                report.witness(WitnessKind::LeafSums, c, e.to_string());
            }
        }
    }
    report.loop_leaf_checks += 1;
    let shape = loop_leaf_shape(&g);
    if !shape.holds() {
        report.loop_leaf_failures += 1;
        report.witness(WitnessKind::LoopLeaf, c, format!("{shape:?}"));
    }
}

fn program_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.random()
}

/// Checks every program; the result does not depend on `exec`.
pub fn check_programs(programs: &[Command], seed: u64, exec: Execution) -> CampaignReport {
    let start = Instant::now();
    let one = |(i, c): (usize, &Command)| check_program(c, program_seed(seed, i));
    let mut report = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            programs
                .par_iter()
                .enumerate()
                .map(one)
                .reduce(CampaignReport::default, CampaignReport::merge)
        }
        _ => programs
            .iter()
            .enumerate()
            .map(one)
            .fold(CampaignReport::default(), CampaignReport::merge),
    };
    report.wall_time = start.elapsed().as_secs_f64();
    report
}

pub fn soundness_campaign(cfg: &GenConfig, exec: Execution) -> CampaignReport {
    check_programs(&gen_program(cfg), cfg.seed, exec)
}

pub fn exhaustive_campaign(max_atoms: usize, exec: Execution) -> CampaignReport {
    check_programs(&enumerate_programs(max_atoms), 0, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let cfg = GenConfig {
            count: 200,
            ..GenConfig::default()
        };
        let a = gen_program(&cfg);
        assert_eq!(a, gen_program(&cfg));
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|c| (1..=12).contains(&c.atom_count()) && c.is_normalized()));
        let b = gen_program(&GenConfig { seed: 43, ..cfg });
        assert_ne!(a, b);
    }

    #[test]
    fn single_atom_programs() {
        let cfg = GenConfig {
            max_atoms: 1,
            count: 100,
            ..GenConfig::default()
        };
        for c in gen_program(&cfg) {
            assert!(matches!(c, Command::Exit | Command::LoopSkip), "{c}");
        }
    }

    #[test]
    fn enumeration_counts() {
        let counts: Vec<usize> = (1..=6).map(|n| enumerate_programs(n).len()).collect();
        assert_eq!(counts, vec![2, 8, 30, 120, 514, 2320]);
        let all = enumerate_programs(4);
        let distinct: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), all.len());
    }

    #[test]
    fn named_programs() {
        let r = |s: &str| check_program(&parse(s).unwrap(), 1);
        let a = r("fork { exit }; loop skip");
        let b = r("fork { fork { loop skip }; exit }; loop skip");
        let c = r("loop skip");
        assert_eq!((a.verified, b.verified, c.rejected), (1, 1, 1));
        assert!(a.is_clean() && b.is_clean() && c.is_clean());
        assert_eq!(c.oracle_diverges, 1);
    }

    #[test]
    fn empty_campaign() {
        let r = soundness_campaign(
            &GenConfig {
                count: 0,
                ..GenConfig::default()
            },
            Execution::Sequential,
        );
        assert_eq!(r.total, 0);
        assert!(r.is_clean());
    }

    #[test]
    fn execution_modes_agree() {
        let cfg = GenConfig {
            count: 60,
            max_atoms: 8,
            ..GenConfig::default()
        };
        let mut a = soundness_campaign(&cfg, Execution::Sequential);
        let mut b = soundness_campaign(&cfg, Execution::Parallel);
        a.wall_time = 0.0;
        b.wall_time = 0.0;
        assert_eq!(a, b);
    }

    #[test]
    fn merge_is_associative() {
        let parts: Vec<CampaignReport> = ["exit", "loop skip", "fork { loop skip }; exit"]
            .iter()
            .map(|s| check_program(&parse(s).unwrap(), 0))
            .collect();
        let left = parts[0].clone().merge(parts[1].clone()).merge(parts[2].clone());
        let right = parts[0].clone().merge(parts[1].clone().merge(parts[2].clone()));
        assert_eq!(left, right);
        assert_eq!(left.total, 3);
    }
}
