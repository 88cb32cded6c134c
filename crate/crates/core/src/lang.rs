//! Commands, continuations and thread pools of the toy language, together
//! with its concrete syntax.
//!
//! ```text
//! cmd  ::= atom (";" cmd)?
//! atom ::= "exit" | "loop" "skip" | "fork" "{" cmd "}"
//! ```
//!
//! Whitespace is insignificant and `#` starts a comment that runs to the end
//! of the line. Sequencing is right-associative.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Thread identifier.
pub type Tid = u64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Exit,
    LoopSkip,
    Fork(Box<Command>),
    Seq(Box<Command>, Box<Command>),
}

impl Command {
    pub fn fork(body: Command) -> Self {
        Command::Fork(Box::new(body))
    }

    pub fn seq(first: Command, second: Command) -> Self {
        Command::Seq(Box::new(first), Box::new(second))
    }

    /// Right-associated sequence of the given commands. Panics on an empty
    /// slice since the language has no empty command.
    pub fn sequence(items: Vec<Command>) -> Self {
        let mut iter = items.into_iter().rev();
        let last = iter.next().expect("a sequence needs at least one command");
        iter.fold(last, |acc, c| Command::seq(c, acc))
    }

    pub fn is_atomic(&self) -> bool {
        !matches!(self, Command::Seq(..))
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Command::Exit | Command::LoopSkip => 1,
            Command::Fork(b) => 1 + b.size(),
            Command::Seq(a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Number of `exit`, `loop skip` and `fork` nodes, fork bodies included.
    pub fn atom_count(&self) -> usize {
        match self {
            Command::Exit | Command::LoopSkip => 1,
            Command::Fork(b) => 1 + b.atom_count(),
            Command::Seq(a, b) => a.atom_count() + b.atom_count(),
        }
    }

    /// Top-level atoms in execution order (fork bodies are not descended).
    pub fn atoms(&self) -> Vec<&Command> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Command>) {
        match self {
            Command::Seq(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            atom => out.push(atom),
        }
    }

    /// Right-associates every sequence, fork bodies included.
    pub fn normalize(&self) -> Command {
        let atoms = self
            .atoms()
            .into_iter()
            .map(|a| match a {
                Command::Fork(b) => Command::fork(b.normalize()),
                other => other.clone(),
            })
            .collect();
        Command::sequence(atoms)
    }

    pub fn is_normalized(&self) -> bool {
        match self {
            Command::Exit | Command::LoopSkip => true,
            Command::Fork(b) => b.is_normalized(),
            Command::Seq(a, b) => a.is_atomic() && a.is_normalized() && b.is_normalized(),
        }
    }

    pub fn contains_loop(&self) -> bool {
        match self {
            Command::LoopSkip => true,
            Command::Exit => false,
            Command::Fork(b) => b.contains_loop(),
            Command::Seq(a, b) => a.contains_loop() || b.contains_loop(),
        }
    }

    pub fn contains_exit(&self) -> bool {
        match self {
            Command::Exit => true,
            Command::LoopSkip => false,
            Command::Fork(b) => b.contains_exit(),
            Command::Seq(a, b) => a.contains_exit() || b.contains_exit(),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atoms = self.atoms();
        for (i, atom) in atoms.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            match atom {
                Command::Exit => f.write_str("exit")?,
                Command::LoopSkip => f.write_str("loop skip")?,
                Command::Fork(body) => write!(f, "fork {{ {body} }}")?,
                Command::Seq(..) => unreachable!("atoms() never yields a sequence"),
            }
        }
        Ok(())
    }
}

/// Renders a command in concrete syntax. Nested sequences are printed flat,
/// so `parse(pretty(c)) == c.normalize()`.
pub fn pretty(c: &Command) -> String {
    c.to_string()
}

/// A thread body: a list of commands ending in `done`. The head is the next
/// command to run; an empty list is `done`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Continuation {
    items: Vec<Command>,
}

impl Continuation {
    pub fn done() -> Self {
        Continuation { items: Vec::new() }
    }

    /// `head; tail`.
    pub fn then(head: Command, tail: Continuation) -> Self {
        let mut items = Vec::with_capacity(tail.items.len() + 1);
        items.push(head);
        items.extend(tail.items);
        Continuation { items }
    }

    pub fn from_commands(items: Vec<Command>) -> Self {
        Continuation { items }
    }

    pub fn is_done(&self) -> bool {
        self.items.is_empty()
    }

    pub fn head(&self) -> Option<&Command> {
        self.items.first()
    }

    pub fn tail(&self) -> Continuation {
        Continuation {
            items: self.items.iter().skip(1).cloned().collect(),
        }
    }

    /// Number of `SeqCont` cells, i.e. commands before `done`.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn commands(&self) -> &[Command] {
        &self.items
    }

    pub(crate) fn replace_head(&self, replacement: impl IntoIterator<Item = Command>) -> Continuation {
        let mut items: Vec<Command> = replacement.into_iter().collect();
        items.extend(self.items.iter().skip(1).cloned());
        Continuation { items }
    }
}

impl fmt::Display for Continuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.items {
            write!(f, "{c}; ")?;
        }
        f.write_str("done")
    }
}

/// `c; done`, with nested sequences flattened so every head is atomic.
pub fn to_continuation(c: &Command) -> Continuation {
    let items = c
        .atoms()
        .into_iter()
        .map(|a| match a {
            Command::Fork(b) => Command::fork(b.normalize()),
            other => other.clone(),
        })
        .collect();
    Continuation { items }
}

/// Finite map from thread ids to continuations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ThreadPool {
    threads: BTreeMap<Tid, Continuation>,
}

impl ThreadPool {
    pub fn empty() -> Self {
        ThreadPool::default()
    }

    /// `{tid ↦ c; done}`.
    pub fn initial(tid: Tid, c: &Command) -> Self {
        let mut threads = BTreeMap::new();
        threads.insert(tid, to_continuation(c));
        ThreadPool { threads }
    }

    pub fn from_threads(threads: impl IntoIterator<Item = (Tid, Continuation)>) -> Self {
        ThreadPool {
            threads: threads.into_iter().collect(),
        }
    }

    pub fn get(&self, tid: Tid) -> Option<&Continuation> {
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

    pub fn iter(&self) -> impl Iterator<Item = (Tid, &Continuation)> + '_ {
        self.threads.iter().map(|(t, k)| (*t, k))
    }

    /// The id the next extension will use: `max(dom) + 1`, or 0 when empty.
    pub fn fresh_tid(&self) -> Tid {
        self.threads.keys().next_back().map_or(0, |m| m + 1)
    }

    /// Adds a thread under a fresh id and returns that id.
    pub fn extend(&mut self, cont: Continuation) -> Tid {
        let tid = self.fresh_tid();
        self.threads.insert(tid, cont);
        tid
    }

    pub fn set(&mut self, tid: Tid, cont: Continuation) {
        self.threads.insert(tid, cont);
    }

    pub fn remove(&mut self, tid: Tid) -> Option<Continuation> {
        self.threads.remove(&tid)
    }

    pub fn clear(&mut self) {
        self.threads.clear();
    }
}

impl fmt::Display for ThreadPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (tid, k)) in self.threads.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{tid}:{k}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Exit,
    Loop,
    Skip,
    Fork,
    LBrace,
    RBrace,
    Semi,
    Other(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Exit => f.write_str("`exit`"),
            Tok::Loop => f.write_str("`loop`"),
            Tok::Skip => f.write_str("`skip`"),
            Tok::Fork => f.write_str("`fork`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Other(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Vec<Spanned> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        if ch == '\n' {
            chars.next();
            line += 1;
            column = 1;
        } else if ch.is_whitespace() {
            chars.next();
            column += 1;
        } else if ch == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
        } else if ch.is_ascii_alphabetic() {
            let (l, c) = (line, column);
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if !(c.is_ascii_alphanumeric() || c == '_') {
                    break;
                }
                word.push(c);
                chars.next();
                column += 1;
            }
            let tok = match word.as_str() {
                "exit" => Tok::Exit,
                "loop" => Tok::Loop,
                "skip" => Tok::Skip,
                "fork" => Tok::Fork,
                _ => Tok::Other(word),
            };
            out.push(Spanned { tok, line: l, column: c });
        } else {
            let tok = match ch {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                ';' => Tok::Semi,
                other => Tok::Other(other.to_string()),
            };
            out.push(Spanned { tok, line, column });
            chars.next();
            column += 1;
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, column });
    out
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> &Spanned {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError {
            line: t.line,
            column: t.column,
            expected: expected.to_string(),
            found: t.tok.to_string(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn cmd(&mut self) -> Result<Command, ParseError> {
        let mut atoms = vec![self.atom()?];
        while self.peek().tok == Tok::Semi {
            self.bump();
            atoms.push(self.atom()?);
        }
        Ok(Command::sequence(atoms))
    }

    fn atom(&mut self) -> Result<Command, ParseError> {
        match self.peek().tok {
            Tok::Exit => {
                self.bump();
                Ok(Command::Exit)
            }
            Tok::Loop => {
                self.bump();
                self.expect(Tok::Skip, "`skip`")?;
                Ok(Command::LoopSkip)
            }
            Tok::Fork => {
                self.bump();
                self.expect(Tok::LBrace, "`{`")?;
                let body = self.cmd()?;
                self.expect(Tok::RBrace, "`;` or `}`")?;
                Ok(Command::fork(body))
            }
            _ => Err(self.error("`exit`, `loop skip` or `fork`")),
        }
    }
}

/// Parses a program. The result is always right-associated.
pub fn parse(text: &str) -> Result<Command, ParseError> {
    let mut p = Parser { toks: lex(text), pos: 0 };
    let c = p.cmd()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error("`;` or end of input"));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fork(c: Command) -> Command {
        Command::fork(c)
    }

    fn seq(a: Command, b: Command) -> Command {
        Command::seq(a, b)
    }

    use Command::{Exit, LoopSkip};

    #[test]
    fn parses_exiting_and_waiting_program() {
        assert_eq!(parse("fork { exit }; loop skip").unwrap(), seq(fork(Exit), LoopSkip));
        assert_eq!(parse("exit").unwrap(), Exit);
    }

    #[test]
    fn parses_nested_fork_program() {
        let c = parse("fork { fork { loop skip }; exit }; loop skip").unwrap();
        assert_eq!(c, seq(fork(seq(fork(LoopSkip), Exit)), LoopSkip));
    }

    #[test]
    fn sequences_are_right_associative() {
        let c = parse("exit; exit; loop skip").unwrap();
        assert_eq!(c, seq(Exit, seq(Exit, LoopSkip)));
        assert!(c.is_normalized());
    }

    #[test]
    fn whitespace_and_comments_are_ignored() {
        let src = "# spawn an exiter\nfork{exit}  ;\n\tloop   skip # and wait\n";
        assert_eq!(parse(src).unwrap(), seq(fork(Exit), LoopSkip));
    }

    #[test]
    fn reports_offending_token_with_position() {
        let err = parse("fork { exit };\n  loop").unwrap_err();
        assert_eq!((err.line, err.column), (2, 7));
        assert_eq!(err.found, "end of input");

        let err = parse("skip").unwrap_err();
        assert_eq!((err.line, err.column), (1, 1));
        assert_eq!(err.found, "`skip`");

        let err = parse("exit;").unwrap_err();
        assert_eq!(err.found, "end of input");

        let err = parse("fork { exit } loop skip").unwrap_err();
        assert_eq!(err.found, "`loop`");
        assert_eq!(err.column, 15);

        assert!(parse("").is_err());
        assert!(parse("fork { }").is_err());
        assert!(parse("exit $").is_err());
    }

    #[test]
    fn pretty_prints_concrete_syntax() {
        assert_eq!(pretty(&seq(fork(Exit), LoopSkip)), "fork { exit }; loop skip");
        assert_eq!(pretty(&LoopSkip), "loop skip");
        assert_eq!(pretty(&fork(LoopSkip)), "fork { loop skip }");
    }

    #[test]
    fn normalize_flattens_left_nested_sequences() {
        let c = seq(seq(Exit, LoopSkip), fork(seq(seq(Exit, Exit), Exit)));
        let n = c.normalize();
        assert!(n.is_normalized());
        assert_eq!(n, seq(Exit, seq(LoopSkip, fork(seq(Exit, seq(Exit, Exit))))));
        assert!(!c.is_normalized());
    }

    #[test]
    fn continuation_of_atoms() {
        assert_eq!(to_continuation(&Exit), Continuation::then(Exit, Continuation::done()));
        let k = to_continuation(&seq(fork(Exit), LoopSkip));
        assert_eq!(k.to_string(), "fork { exit }; loop skip; done");
        assert_eq!(Continuation::done().to_string(), "done");
    }

    #[test]
    fn pool_extension_uses_max_plus_one() {
        let mut tp = ThreadPool::from_threads([(3, Continuation::done()), (7, Continuation::done())]);
        assert_eq!(tp.extend(Continuation::done()), 8);
        tp.remove(8);
        tp.remove(7);
        assert_eq!(tp.fresh_tid(), 4);
        assert_eq!(ThreadPool::empty().fresh_tid(), 0);
    }
}
