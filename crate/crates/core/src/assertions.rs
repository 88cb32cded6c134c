//! Resource bundles and the assertion logic over them.
//!
//! A bundle is a multiset of obligations chunks (each chunk is a count of
//! obligations) plus a number of credits. `obs(n)` holds when some chunk
//! holds exactly `n` obligations, `credit` when at least one credit is held,
//! and `A * B` when the bundle splits into parts satisfying `A` and `B`.
//!
//! View shifts are generated by three rules:
//! - pair introduction/cancellation on one chunk: `obs(n) ⇛ obs(n+1) * credit`
//!   and back, under any `*` context;
//! - semantic implication;
//! - transitivity.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ResourceBundle {
    chunks: Vec<u64>,
    credits: u64,
}

impl ResourceBundle {
    pub fn new(mut chunks: Vec<u64>, credits: u64) -> Self {
        chunks.sort_unstable();
        ResourceBundle { chunks, credits }
    }

    /// `((⟨o⟩), c)`.
    pub fn single(obligations: u64, credits: u64) -> Self {
        ResourceBundle {
            chunks: vec![obligations],
            credits,
        }
    }

    pub fn empty() -> Self {
        ResourceBundle::default()
    }

    pub fn chunks(&self) -> &[u64] {
        &self.chunks
    }

    pub fn credits(&self) -> u64 {
        self.credits
    }

    /// Exactly one obligations chunk.
    pub fn is_complete(&self) -> bool {
        self.chunks.len() == 1
    }

    pub fn union(&self, other: &ResourceBundle) -> ResourceBundle {
        let mut chunks = self.chunks.clone();
        chunks.extend_from_slice(&other.chunks);
        ResourceBundle::new(chunks, self.credits + other.credits)
    }

    /// Every way of writing `self` as `a ⊎ b`, up to equal chunk values.
    pub fn splits(&self) -> Vec<(ResourceBundle, ResourceBundle)> {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &c in &self.chunks {
            *counts.entry(c).or_default() += 1;
        }
        let groups: Vec<(u64, usize)> = counts.into_iter().collect();
        let mut chunk_splits: Vec<(Vec<u64>, Vec<u64>)> = vec![(Vec::new(), Vec::new())];
        for (value, n) in groups {
            let mut next = Vec::new();
            for (left, right) in &chunk_splits {
                for take in 0..=n {
                    let mut l = left.clone();
                    let mut r = right.clone();
                    l.extend(std::iter::repeat_n(value, take));
                    r.extend(std::iter::repeat_n(value, n - take));
                    next.push((l, r));
                }
            }
            chunk_splits = next;
        }
        let mut out = Vec::new();
        for (l, r) in chunk_splits {
            for c in 0..=self.credits {
                out.push((
                    ResourceBundle::new(l.clone(), c),
                    ResourceBundle::new(r.clone(), self.credits - c),
                ));
            }
        }
        out
    }
}

impl fmt::Display for ResourceBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chunks: Vec<String> = self.chunks.iter().map(|c| c.to_string()).collect();
        write!(f, "(<{}>, {})", chunks.join(","), self.credits)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Assertion {
    True,
    False,
    Star(Box<Assertion>, Box<Assertion>),
    Obs(u64),
    Credit,
}

impl Assertion {
    pub fn star(a: Assertion, b: Assertion) -> Self {
        Assertion::Star(Box::new(a), Box::new(b))
    }

    /// `obs(obligations) * credit * ... * credit` with `credits` credit atoms.
    pub fn held(obligations: u64, credits: u64) -> Self {
        (0..credits).fold(Assertion::Obs(obligations), |acc, _| Assertion::star(acc, Assertion::Credit))
    }

    /// `credit * ... * credit`, or `true` for zero credits.
    pub fn credits(n: u64) -> Self {
        match n {
            0 => Assertion::True,
            _ => (1..n).fold(Assertion::Credit, |acc, _| Assertion::star(acc, Assertion::Credit)),
        }
    }

    pub fn normalize(&self) -> NormalizedAssertion {
        normalize(self)
    }

    pub fn parse(text: &str) -> Result<Assertion, AssertionParseError> {
        parse_assertion(text)
    }

    /// Number of `obs` and `credit` atoms.
    pub fn atom_count(&self) -> usize {
        match self {
            Assertion::True | Assertion::False => 0,
            Assertion::Obs(_) | Assertion::Credit => 1,
            Assertion::Star(a, b) => a.atom_count() + b.atom_count(),
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::True => f.write_str("true"),
            Assertion::False => f.write_str("false"),
            Assertion::Obs(n) => write!(f, "obs({n})"),
            Assertion::Credit => f.write_str("credit"),
            Assertion::Star(a, b) => match **b {
                Assertion::Star(..) => write!(f, "{a} * ({b})"),
                _ => write!(f, "{a} * {b}"),
            },
        }
    }
}

/// Canonical form: either unsatisfiable, or a multiset of `obs` atoms plus a
/// count of `credit` atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NormalizedAssertion {
    Bottom,
    Flat { obs: Vec<u64>, credits: u64 },
}

impl NormalizedAssertion {
    pub fn flat(mut obs: Vec<u64>, credits: u64) -> Self {
        obs.sort_unstable();
        NormalizedAssertion::Flat { obs, credits }
    }

    /// Flat form with exactly one obs atom, as `(obligations, credits)`.
    pub fn single_chunk(&self) -> Option<(u64, u64)> {
        match self {
            NormalizedAssertion::Flat { obs, credits } if obs.len() == 1 => Some((obs[0], *credits)),
            _ => None,
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, NormalizedAssertion::Bottom)
    }

    pub fn satisfied_by(&self, b: &ResourceBundle) -> bool {
        match self {
            NormalizedAssertion::Bottom => false,
            NormalizedAssertion::Flat { obs, credits } => {
                b.credits >= *credits && multiset_includes(&b.chunks, obs)
            }
        }
    }

    pub fn to_assertion(&self) -> Assertion {
        match self {
            NormalizedAssertion::Bottom => Assertion::False,
            NormalizedAssertion::Flat { obs, credits } => {
                let atoms = obs
                    .iter()
                    .map(|n| Assertion::Obs(*n))
                    .chain((0..*credits).map(|_| Assertion::Credit));
                atoms.reduce(Assertion::star).unwrap_or(Assertion::True)
            }
        }
    }
}

/// `small ⊆ big` as multisets; both sorted.
fn multiset_includes(big: &[u64], small: &[u64]) -> bool {
    let mut i = 0;
    for &x in small {
        while i < big.len() && big[i] < x {
            i += 1;
        }
        if i == big.len() || big[i] != x {
            return false;
        }
        i += 1;
    }
    true
}

/// Direct reading of the satisfaction relation, splitting bundles for `*`.
pub fn satisfies(b: &ResourceBundle, a: &Assertion) -> bool {
    match a {
        Assertion::True => true,
        Assertion::False => false,
        Assertion::Obs(n) => b.chunks.contains(n),
        Assertion::Credit => b.credits >= 1,
        Assertion::Star(l, r) => b.splits().iter().any(|(b1, b2)| satisfies(b1, l) && satisfies(b2, r)),
    }
}

pub fn normalize(a: &Assertion) -> NormalizedAssertion {
    match a {
        Assertion::True => NormalizedAssertion::flat(Vec::new(), 0),
        Assertion::False => NormalizedAssertion::Bottom,
        Assertion::Obs(n) => NormalizedAssertion::flat(vec![*n], 0),
        Assertion::Credit => NormalizedAssertion::flat(Vec::new(), 1),
        Assertion::Star(l, r) => match (normalize(l), normalize(r)) {
            (
                NormalizedAssertion::Flat { obs: mut o1, credits: c1 },
                NormalizedAssertion::Flat { obs: o2, credits: c2 },
            ) => {
                o1.extend(o2);
                NormalizedAssertion::flat(o1, c1 + c2)
            }
            _ => NormalizedAssertion::Bottom,
        },
    }
}

pub fn entails_normalized(a: &NormalizedAssertion, b: &NormalizedAssertion) -> bool {
    match (a, b) {
        (NormalizedAssertion::Bottom, _) => true,
        (_, NormalizedAssertion::Bottom) => false,
        (
            NormalizedAssertion::Flat { obs: oa, credits: ka },
            NormalizedAssertion::Flat { obs: ob, credits: kb },
        ) => kb <= ka && multiset_includes(oa, ob),
    }
}

/// Every bundle satisfying `a` satisfies `b`.
pub fn entails(a: &Assertion, b: &Assertion) -> bool {
    entails_normalized(&normalize(a), &normalize(b))
}

/// Decides `a ⇛ b` on normal forms.
///
/// Pair moves keep `obligations - credits` fixed on a chunk, and dropping a
/// chunk or a credit is an entailment. So for `Flat(A, ka) ⇛ Flat(B, kb)`:
/// - with fewer obs atoms on the left than on the right it fails (nothing
///   creates a chunk);
/// - with more, it holds: a spare chunk can mint any number of credits by
///   pair introduction and then be dropped;
/// - with the same number it holds iff `ΣA - ka <= ΣB - kb` (introductions
///   first, so credits never run out on the way).
pub fn view_shift_normalized(a: &NormalizedAssertion, b: &NormalizedAssertion) -> bool {
    match (a, b) {
        (NormalizedAssertion::Bottom, _) => true,
        (_, NormalizedAssertion::Bottom) => false,
        (
            NormalizedAssertion::Flat { obs: oa, credits: ka },
            NormalizedAssertion::Flat { obs: ob, credits: kb },
        ) => {
            use std::cmp::Ordering;
            match oa.len().cmp(&ob.len()) {
                Ordering::Less => false,
                Ordering::Greater => true,
                Ordering::Equal => {
                    let lhs = oa.iter().sum::<u64>() as i128 - *ka as i128;
                    let rhs = ob.iter().sum::<u64>() as i128 - *kb as i128;
                    lhs <= rhs
                }
            }
        }
    }
}

pub fn view_shift(a: &Assertion, b: &Assertion) -> bool {
    view_shift_normalized(&normalize(a), &normalize(b))
}

/// Single-chunk closed form `n - k <= n' - k'` for
/// `obs(n) * credit^k ⇛ obs(n') * credit^k'`.
pub fn single_chunk_shift(n: u64, k: u64, n2: u64, k2: u64) -> bool {
    (n as i128) - (k as i128) <= (n2 as i128) - (k2 as i128)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Saturation {
    /// Target reached after this many rewrite steps.
    Reachable(usize),
    /// Every normal form within the value bounds was visited.
    Exhausted,
}

/// Slack added to the largest value in either side when bounding the search:
/// `2 × (number of atoms) + 4`.
pub fn saturation_budget(a: &Assertion, b: &Assertion) -> u64 {
    2 * (a.atom_count() + b.atom_count()) as u64 + 4
}

/// Breadth-first closure of `a` under the individual rewrite steps (one pair
/// introduction, one cancellation, dropping one credit, dropping one obs
/// atom), with obligation values and credit counts capped at the largest
/// value of either side plus `budget`. Independent of the closed form in
/// [`view_shift_normalized`]; used to cross-check it.
pub fn saturate(a: &Assertion, b: &Assertion, budget: u64) -> Saturation {
    let (na, nb) = (normalize(a), normalize(b));
    let (start_obs, start_credits) = match na {
        NormalizedAssertion::Bottom => return Saturation::Reachable(0),
        NormalizedAssertion::Flat { obs, credits } => (obs, credits),
    };
    if nb.is_bottom() {
        return Saturation::Exhausted;
    }
    let max_value = |n: &NormalizedAssertion| match n {
        NormalizedAssertion::Bottom => 0,
        NormalizedAssertion::Flat { obs, credits } => obs.iter().copied().max().unwrap_or(0).max(*credits),
    };
    let cap = max_value(&NormalizedAssertion::flat(start_obs.clone(), start_credits)).max(max_value(&nb)) + budget;

    type State = (Vec<u64>, u64);
    let reached = |s: &State| entails_normalized(&NormalizedAssertion::flat(s.0.clone(), s.1), &nb);
    let start: State = (start_obs, start_credits);
    let mut seen: HashSet<State> = HashSet::new();
    let mut queue: VecDeque<(State, usize)> = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back((start, 0));
    while let Some((state, depth)) = queue.pop_front() {
        if reached(&state) {
            return Saturation::Reachable(depth);
        }
        let (obs, credits) = &state;
        let mut next: Vec<State> = Vec::new();
        for i in 0..obs.len() {
            if obs[i] < cap && *credits < cap {
                let mut o = obs.clone();
                o[i] += 1;
                next.push((o, credits + 1));
            }
            if obs[i] >= 1 && *credits >= 1 {
                let mut o = obs.clone();
                o[i] -= 1;
                next.push((o, credits - 1));
            }
            let mut o = obs.clone();
            o.remove(i);
            next.push((o, *credits));
        }
        if *credits >= 1 {
            next.push((obs.clone(), credits - 1));
        }
        for (mut o, c) in next {
            o.sort_unstable();
            let s = (o, c);
            if seen.insert(s.clone()) {
                queue.push_back((s, depth + 1));
            }
        }
    }
    Saturation::Exhausted
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("assertion syntax error at column {column}: {message}")]
pub struct AssertionParseError {
    pub column: usize,
    pub message: String,
}

struct AssertionParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl AssertionParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, message: impl Into<String>) -> AssertionParseError {
        AssertionParseError {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Assertion, AssertionParseError> {
        let mut acc = self.primary()?;
        while self.eat("*") {
            let rhs = self.primary()?;
            acc = Assertion::star(acc, rhs);
        }
        Ok(acc)
    }

    fn primary(&mut self) -> Result<Assertion, AssertionParseError> {
        if self.eat("(") {
            let inner = self.expr()?;
            if !self.eat(")") {
                return Err(self.err("expected `)`"));
            }
            return Ok(inner);
        }
        if self.eat("true") {
            return Ok(Assertion::True);
        }
        if self.eat("false") {
            return Ok(Assertion::False);
        }
        if self.eat("credit") {
            return Ok(Assertion::Credit);
        }
        if self.eat("obs") {
            if !self.eat("(") {
                return Err(self.err("expected `(` after `obs`"));
            }
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
            let n = digits.parse().map_err(|_| self.err("expected a natural number"))?;
            if !self.eat(")") {
                return Err(self.err("expected `)`"));
            }
            return Ok(Assertion::Obs(n));
        }
        Err(self.err("expected `true`, `false`, `obs(N)`, `credit` or `(`"))
    }
}

/// Parses `true`, `false`, `obs(N)`, `credit`, `A * B` (left-associative)
/// with parentheses.
pub fn parse_assertion(text: &str) -> Result<Assertion, AssertionParseError> {
    let mut p = AssertionParser { src: text.as_bytes(), pos: 0 };
    let a = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(a)
}
