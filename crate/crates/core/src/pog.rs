//! Program order graphs over finite annotated traces.
//!
//! Node `i` is step `i`. Step `i` has an edge to the next step of the same
//! thread and, when it forks, to the first step of the new thread. Edges
//! carry the rule applied at step `i`, so a loop edge leaves a loop step.
//!
//! A step whose successors the trace does not contain (it ends first, or an
//! `exit` kills the thread) is *incomplete*. Prefixes never grow past an
//! incomplete node: the missing successor's thread still holds resources,
//! and leaving it out would break the leaf sums.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::ghost::{AnnotatedRule, AnnotatedTrace, Holding};
use crate::lang::{Continuation, Tid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: usize,
    /// Thread of the target step.
    pub tid: Tid,
    pub rule: AnnotatedRule,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub tid: Tid,
    pub rule: AnnotatedRule,
    /// The stepping thread's bundle and continuation before the step.
    pub holding: Holding,
    pub cont: Continuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramOrderGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Option<usize>>,
    complete: Vec<bool>,
    initial: Option<Holding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PogError {
    #[error("step {step}: thread {tid} is not in the pool")]
    UnknownThread { step: usize, tid: Tid },
    #[error("step {step}: more than one thread appeared")]
    SeveralNewThreads { step: usize },
}

fn expected_successors(rule: AnnotatedRule) -> usize {
    match rule {
        AnnotatedRule::Exit | AnnotatedRule::ThreadTerm => 0,
        AnnotatedRule::Fork => 2,
        _ => 1,
    }
}

pub fn build_pog(trace: &AnnotatedTrace) -> Result<ProgramOrderGraph, PogError> {
    let n = trace.len();
    let mut nodes = Vec::with_capacity(n);
    for (i, s) in trace.steps.iter().enumerate() {
        let th = s.pool.get(s.step.tid).ok_or(PogError::UnknownThread {
            step: i,
            tid: s.step.tid,
        })?;
        nodes.push(Node {
            tid: s.step.tid,
            rule: s.step.rule,
            holding: th.holding,
            cont: th.cont.clone(),
        });
    }
    let next_of = |tid: Tid, after: usize| (after + 1..n).find(|&l| nodes[l].tid == tid);

    let mut edges = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let rule = node.rule;
        if expected_successors(rule) >= 1 {
            if let Some(j) = next_of(node.tid, i) {
                edges.push(Edge {
                    from: i,
                    tid: node.tid,
                    rule,
                    to: j,
                });
            }
        }
        let before: BTreeSet<Tid> = trace.pool_at(i).tids().collect();
        let new: Vec<Tid> = trace.pool_at(i + 1).tids().filter(|t| !before.contains(t)).collect();
        if new.len() > 1 {
            return Err(PogError::SeveralNewThreads { step: i });
        }
        if let Some(&child) = new.first() {
            if let Some(j) = next_of(child, i) {
                edges.push(Edge { from: i, tid: child, rule, to: j });
            }
        }
    }

    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![None; n];
    for e in &edges {
        succ[e.from].push(e.to);
        pred[e.to] = Some(e.from);
    }
    for s in &mut succ {
        s.sort_unstable();
    }
    let complete = (0..n).map(|i| succ[i].len() == expected_successors(nodes[i].rule)).collect();
    let start = trace.pool_at(0);
    let initial = if start.len() == 1 {
        start.iter().next().map(|(_, th)| th.holding)
    } else {
        None
    };
    Ok(ProgramOrderGraph {
        nodes,
        edges,
        succ,
        pred,
        complete,
        initial,
    })
}

impl ProgramOrderGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn predecessor(&self, i: usize) -> Option<usize> {
        self.pred[i]
    }

    /// Whether every successor the step's rule implies is in the graph.
    pub fn is_complete(&self, i: usize) -> bool {
        self.complete[i]
    }

    /// Edge count from the root along the unique path.
    pub fn depth(&self, mut i: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.pred[i] {
            i = p;
            d += 1;
        }
        d
    }

    /// Whether the nodes `prefix` may grow into: complete, not a loop step,
    /// with successors not yet included.
    fn expandable(&self, prefix: &BTreeSet<usize>, i: usize) -> bool {
        self.nodes[i].rule != AnnotatedRule::Loop
            && self.complete[i]
            && !self.succ[i].is_empty()
            && self.succ[i].iter().all(|j| !prefix.contains(j))
    }

    /// Same-thread edges skip no step of their thread.
    pub fn edges_are_minimal(&self) -> bool {
        self.edges.iter().all(|e| {
            let same_thread = self.nodes[e.from].tid == e.tid;
            let first = (e.from + 1..self.nodes.len()).find(|&l| self.nodes[l].tid == e.tid);
            !same_thread || first == Some(e.to)
        })
    }
}

/// Downward closed and, for every member, containing all its siblings.
pub fn sibling_closed(prefix: &BTreeSet<usize>, g: &ProgramOrderGraph) -> bool {
    if prefix.iter().any(|&i| i >= g.node_count()) {
        return false;
    }
    prefix.iter().all(|&n| match g.pred[n] {
        None => n == 0,
        Some(p) => prefix.contains(&p) && g.succ[p].iter().all(|s| prefix.contains(s)),
    })
}

/// Whether any edge inside `prefix` is a loop edge.
pub fn has_loop_edge(prefix: &BTreeSet<usize>, g: &ProgramOrderGraph) -> bool {
    g.edges
        .iter()
        .any(|e| e.rule == AnnotatedRule::Loop && prefix.contains(&e.from) && prefix.contains(&e.to))
}

/// The largest sibling-closed prefix without loop edges that never grows
/// past an incomplete node.
pub fn max_loopfree_sc_prefix(g: &ProgramOrderGraph) -> BTreeSet<usize> {
    let mut prefix = BTreeSet::new();
    if g.node_count() == 0 {
        return prefix;
    }
    prefix.insert(0);
    let mut work = VecDeque::from([0]);
    while let Some(i) = work.pop_front() {
        if g.expandable(&prefix, i) {
            for &j in &g.succ[i] {
                prefix.insert(j);
                work.push_back(j);
            }
        }
    }
    prefix
}

/// A random loop-free sibling-closed prefix: from the root, grow a random
/// expandable node's successor group, stopping with probability `1/(n+2)`
/// after `n` growths or when nothing can grow.
pub fn random_sc_prefix<R: Rng + ?Sized>(g: &ProgramOrderGraph, rng: &mut R) -> BTreeSet<usize> {
    let mut prefix = BTreeSet::new();
    if g.node_count() == 0 {
        return prefix;
    }
    prefix.insert(0);
    let mut grown = 0usize;
    loop {
        let open: Vec<usize> = prefix.iter().copied().filter(|&i| g.expandable(&prefix, i)).collect();
        if open.is_empty() || rng.random_range(0..=grown + 1) == 0 {
            return prefix;
        }
        let i = open[rng.random_range(0..open.len())];
        prefix.extend(g.succ[i].iter().copied());
        grown += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafData {
    pub node: usize,
    pub tid: Tid,
    pub holding: Holding,
    pub cont: Continuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixAnalysis {
    pub leaves: Vec<usize>,
    pub leaf_data: Vec<LeafData>,
    /// Leaf obligations and leaf credits.
    pub sums: (u64, u64),
}

impl PrefixAnalysis {
    pub fn balanced(&self) -> bool {
        self.sums.0 == self.sums.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrefixError {
    #[error("prefix is empty or misses the root")]
    NoRoot,
    #[error("prefix is not a sibling-closed prefix")]
    NotSiblingClosed,
    #[error("prefix grows past incomplete step {0}")]
    PastIncomplete(usize),
    #[error("initial pool is not one thread holding a balanced bundle")]
    UnbalancedStart,
}

pub fn leaves(prefix: &BTreeSet<usize>, g: &ProgramOrderGraph) -> Vec<usize> {
    prefix
        .iter()
        .copied()
        .filter(|&i| g.succ[i].iter().all(|j| !prefix.contains(j)))
        .collect()
}

/// Sums the leaf threads' obligations and credits.
pub fn check_leaf_balance(g: &ProgramOrderGraph, prefix: &BTreeSet<usize>) -> Result<PrefixAnalysis, PrefixError> {
    if !prefix.contains(&0) {
        return Err(PrefixError::NoRoot);
    }
    if !sibling_closed(prefix, g) {
        return Err(PrefixError::NotSiblingClosed);
    }
    if let Some(&i) = prefix
        .iter()
        .find(|&&i| !g.complete[i] && g.succ[i].iter().any(|j| prefix.contains(j)))
    {
        return Err(PrefixError::PastIncomplete(i));
    }
    match g.initial {
        Some(h) if h.obligations == h.credits => {}
        _ => return Err(PrefixError::UnbalancedStart),
    }
    let leaves = leaves(prefix, g);
    let leaf_data: Vec<LeafData> = leaves
        .iter()
        .map(|&i| LeafData {
            node: i,
            tid: g.nodes[i].tid,
            holding: g.nodes[i].holding,
            cont: g.nodes[i].cont.clone(),
        })
        .collect();
    let sums = leaf_data.iter().fold((0, 0), |(o, c), l| {
        (o + l.holding.obligations, c + l.holding.credits)
    });
    Ok(PrefixAnalysis {
        leaves,
        leaf_data,
        sums,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoopLeafShape {
    /// No leaf of the maximal loop-free prefix is a loop step.
    NoLoopLeaf,
    /// `witness` is another leaf whose thread holds an obligation.
    Witnessed { loop_leaf: usize, witness: usize },
    Violated { loop_leaf: usize },
}

impl LoopLeafShape {
    pub fn holds(&self) -> bool {
        !matches!(self, LoopLeafShape::Violated { .. })
    }
}

/// Takes the shallowest loop-step leaf of the maximal loop-free prefix and
/// looks for another leaf holding an obligation.
pub fn loop_leaf_shape(g: &ProgramOrderGraph) -> LoopLeafShape {
    let prefix = max_loopfree_sc_prefix(g);
    let leaves = leaves(&prefix, g);
    let loop_leaf = leaves
        .iter()
        .copied()
        .filter(|&i| g.nodes[i].rule == AnnotatedRule::Loop)
        .min_by_key(|&i| (g.depth(i), i));
    let Some(loop_leaf) = loop_leaf else {
        return LoopLeafShape::NoLoopLeaf;
    };
    match leaves
        .into_iter()
        .find(|&l| l != loop_leaf && g.nodes[l].holding.obligations >= 1)
    {
        Some(witness) => LoopLeafShape::Witnessed { loop_leaf, witness },
        None => LoopLeafShape::Violated { loop_leaf },
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering; `prefix` nodes go in a shaded cluster.
pub fn to_dot(g: &ProgramOrderGraph, prefix: Option<&BTreeSet<usize>>) -> String {
    let mut out = String::from("digraph pog {\n  node [shape=box, fontname=\"monospace\"];\n");
    let label = |i: usize| format!("{i}: {}/{}", g.nodes[i].tid, g.nodes[i].rule);
    let mut outside: Vec<usize> = (0..g.node_count()).collect();
    if let Some(p) = prefix {
        out.push_str("  subgraph cluster_prefix {\n    style=filled;\n    color=lightgrey;\n    label=\"prefix\";\n");
        for &i in p {
            let _ = writeln!(out, "    n{i} [label=\"{}\"];", escape(&label(i)));
        }
        out.push_str("  }\n");
        outside.retain(|i| !p.contains(i));
    }
    for i in outside {
        let _ = writeln!(out, "  n{i} [label=\"{}\"];", escape(&label(i)));
    }
    for e in &g.edges {
        let style = if e.rule == AnnotatedRule::Loop { ", style=dashed" } else { "" };
        let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"{style}];", e.from, e.to, e.rule);
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghost::{run_annotated, AnnotatedPool, GhostKind, StepRequest};
    use crate::lang::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The eight steps of the worked example: two intros, two forks, then
    /// loops.
    fn example() -> AnnotatedTrace {
        let c = parse("fork { fork { loop skip }; exit }; loop skip").unwrap();
        let start = AnnotatedPool::initial(0, Holding::default(), &c);
        let sched = [
            StepRequest::Ghost(0, GhostKind::Intro),
            StepRequest::Real(0, Some(Holding::new(1, 0))),
            StepRequest::Ghost(1, GhostKind::Intro),
            StepRequest::Real(1, Some(Holding::new(0, 1))),
            StepRequest::Real(2, None),
            StepRequest::Real(0, None),
            StepRequest::Real(0, None),
            StepRequest::Real(0, None),
        ];
        run_annotated(&start, &sched, 100).unwrap().1
    }

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn example_edges() {
        let g = build_pog(&example()).unwrap();
        let pairs: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.from, e.to)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 5), (1, 2), (2, 3), (3, 4), (5, 6), (6, 7)]);
        assert_eq!(g.edges()[2].tid, 1);
        assert_eq!(g.edges()[2].rule, AnnotatedRule::Fork);
        assert!(!g.is_complete(3));
        assert!(!g.is_complete(7));
        assert!(g.edges_are_minimal());
        assert_eq!(g.depth(7), 4);
    }

    #[test]
    fn example_prefixes() {
        let g = build_pog(&example()).unwrap();
        assert!(sibling_closed(&set(&[0, 1, 2, 5]), &g));
        assert!(!sibling_closed(&set(&[0, 1, 2]), &g));
        assert!(!sibling_closed(&set(&[0, 2, 5]), &g));
        assert!(sibling_closed(&set(&[0, 1, 2, 3, 4, 5]), &g));

        let lf = max_loopfree_sc_prefix(&g);
        assert_eq!(lf, set(&[0, 1, 2, 3, 5]));
        assert!(!has_loop_edge(&lf, &g));
        let a = check_leaf_balance(&g, &lf).unwrap();
        assert_eq!(a.leaves, vec![3, 5]);
        assert_eq!(a.sums, (2, 2));
        assert_eq!(
            loop_leaf_shape(&g),
            LoopLeafShape::Witnessed {
                loop_leaf: 5,
                witness: 3
            }
        );
    }

    #[test]
    fn leaf_balance_preconditions() {
        let g = build_pog(&example()).unwrap();
        assert_eq!(check_leaf_balance(&g, &set(&[0])).unwrap().sums, (0, 0));
        assert_eq!(check_leaf_balance(&g, &set(&[1])), Err(PrefixError::NoRoot));
        assert_eq!(check_leaf_balance(&g, &set(&[0, 1, 2])), Err(PrefixError::NotSiblingClosed));
        assert_eq!(
            check_leaf_balance(&g, &set(&[0, 1, 2, 3, 4, 5])),
            Err(PrefixError::PastIncomplete(3))
        );
    }

    #[test]
    fn random_prefixes_are_valid() {
        let g = build_pog(&example()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = random_sc_prefix(&g, &mut rng);
            assert!(sibling_closed(&p, &g));
            assert!(!has_loop_edge(&p, &g));
            assert!(p.is_subset(&max_loopfree_sc_prefix(&g)));
            assert!(check_leaf_balance(&g, &p).unwrap().balanced());
        }
    }

    #[test]
    fn trivial_graphs() {
        let start = AnnotatedPool::initial(0, Holding::default(), &parse("exit").unwrap());
        let (_, t) = run_annotated(&start, &[StepRequest::Real(0, None)], 10).unwrap();
        let g = build_pog(&t).unwrap();
        assert_eq!((g.node_count(), g.edges().len()), (1, 0));
        assert!(g.is_complete(0));

        let start = AnnotatedPool::initial(0, Holding::new(0, 1), &parse("loop skip").unwrap());
        let (_, t) = run_annotated(&start, &[StepRequest::Real(0, None), StepRequest::Real(0, None)], 10).unwrap();
        let g = build_pog(&t).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(max_loopfree_sc_prefix(&g), set(&[0]));
        assert_eq!(check_leaf_balance(&g, &set(&[0])), Err(PrefixError::UnbalancedStart));
        assert_eq!(loop_leaf_shape(&g), LoopLeafShape::Violated { loop_leaf: 0 });
    }

    #[test]
    fn dot_is_faithful() {
        let g = build_pog(&example()).unwrap();
        let lf = max_loopfree_sc_prefix(&g);
        let dot = to_dot(&g, Some(&lf));
        assert_eq!(dot.matches(" -> ").count(), g.edges().len());
        assert_eq!(dot.matches("[label=\"").count() - g.edges().len(), g.node_count());
        assert_eq!(dot.matches("style=dashed").count(), 2);
        assert!(dot.contains("n2 [label=\"2: 1/GS-Intro\"]"));
        assert!(dot.contains("cluster_prefix"));
        assert!(!to_dot(&g, None).contains("cluster"));
    }
}
