//! LTL abstract syntax, concrete-syntax parsing, finite-domain grounding of
//! quantified norm templates, and an exact semantics oracle over ultimately
//! periodic words (lassos).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an interned atomic proposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AtomId(pub u32);

/// Interning table for atomic propositions. At most 64 atoms so that a
/// valuation fits in one machine word.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtomTable {
    names: Vec<String>,
}

pub const MAX_ATOMS: usize = 64;

fn valid_atom_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl AtomTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns `name`, returning its id. Names must match
    /// `[A-Za-z_][A-Za-z0-9_]*`.
    pub fn intern(&mut self, name: &str) -> Result<AtomId, LtlError> {
        if !valid_atom_name(name) {
            return Err(LtlError::BadAtomName(name.to_string()));
        }
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Ok(AtomId(i as u32));
        }
        if self.names.len() >= MAX_ATOMS {
            return Err(LtlError::TooManyAtoms);
        }
        self.names.push(name.to_string());
        Ok(AtomId((self.names.len() - 1) as u32))
    }

    pub fn lookup(&self, name: &str) -> Option<AtomId> {
        self.names.iter().position(|n| n == name).map(|i| AtomId(i as u32))
    }

    pub fn name(&self, id: AtomId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AtomId, &str)> {
        self.names.iter().enumerate().map(|(i, n)| (AtomId(i as u32), n.as_str()))
    }
}

/// A set of atomic propositions true at one time step, as a bitset over an
/// [`AtomTable`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Valuation(pub u64);

impl Valuation {
    pub const EMPTY: Valuation = Valuation(0);

    pub fn singleton(a: AtomId) -> Self {
        Valuation(1u64 << a.0)
    }

    pub fn contains(&self, a: AtomId) -> bool {
        self.0 >> a.0 & 1 == 1
    }

    pub fn insert(&mut self, a: AtomId) {
        self.0 |= 1u64 << a.0;
    }

    pub fn union(self, other: Valuation) -> Valuation {
        Valuation(self.0 | other.0)
    }

    pub fn from_atoms(atoms: &[AtomId]) -> Self {
        let mut v = Valuation::EMPTY;
        for &a in atoms {
            v.insert(a);
        }
        v
    }

    pub fn atom_names<'a>(&self, table: &'a AtomTable) -> Vec<&'a str> {
        table
            .iter()
            .filter(|(id, _)| self.contains(*id))
            .map(|(_, n)| n)
            .collect()
    }
}

/// LTL formula AST.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LtlFormula {
    True,
    False,
    Atom(AtomId),
    Not(Box<LtlFormula>),
    And(Box<LtlFormula>, Box<LtlFormula>),
    Or(Box<LtlFormula>, Box<LtlFormula>),
    Implies(Box<LtlFormula>, Box<LtlFormula>),
    Next(Box<LtlFormula>),
    Finally(Box<LtlFormula>),
    Globally(Box<LtlFormula>),
    Until(Box<LtlFormula>, Box<LtlFormula>),
}

impl LtlFormula {
    pub fn not(f: LtlFormula) -> Self {
        LtlFormula::Not(Box::new(f))
    }

    pub fn and(a: LtlFormula, b: LtlFormula) -> Self {
        LtlFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: LtlFormula, b: LtlFormula) -> Self {
        LtlFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: LtlFormula, b: LtlFormula) -> Self {
        LtlFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: LtlFormula) -> Self {
        LtlFormula::Next(Box::new(f))
    }

    pub fn finally(f: LtlFormula) -> Self {
        LtlFormula::Finally(Box::new(f))
    }

    pub fn globally(f: LtlFormula) -> Self {
        LtlFormula::Globally(Box::new(f))
    }

    pub fn until(a: LtlFormula, b: LtlFormula) -> Self {
        LtlFormula::Until(Box::new(a), Box::new(b))
    }

    /// Atoms occurring in the formula, as a bitmask over the owning table.
    pub fn atom_mask(&self) -> u64 {
        match self {
            LtlFormula::True | LtlFormula::False => 0,
            LtlFormula::Atom(a) => 1u64 << a.0,
            LtlFormula::Not(f)
            | LtlFormula::Next(f)
            | LtlFormula::Finally(f)
            | LtlFormula::Globally(f) => f.atom_mask(),
            LtlFormula::And(a, b)
            | LtlFormula::Or(a, b)
            | LtlFormula::Implies(a, b)
            | LtlFormula::Until(a, b) => a.atom_mask() | b.atom_mask(),
        }
    }

    pub fn display<'a>(&'a self, table: &'a AtomTable) -> DisplayFormula<'a> {
        DisplayFormula { f: self, table }
    }
}

pub struct DisplayFormula<'a> {
    f: &'a LtlFormula,
    table: &'a AtomTable,
}

impl fmt::Display for DisplayFormula<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(f: &LtlFormula, table: &AtomTable, out: &mut fmt::Formatter<'_>) -> fmt::Result {
            match f {
                LtlFormula::True => write!(out, "true"),
                LtlFormula::False => write!(out, "false"),
                LtlFormula::Atom(a) => write!(out, "{}", table.name(*a)),
                LtlFormula::Not(g) => {
                    write!(out, "!")?;
                    paren(g, table, out)
                }
                LtlFormula::Next(g) => {
                    write!(out, "X ")?;
                    paren(g, table, out)
                }
                LtlFormula::Finally(g) => {
                    write!(out, "F ")?;
                    paren(g, table, out)
                }
                LtlFormula::Globally(g) => {
                    write!(out, "G ")?;
                    paren(g, table, out)
                }
                LtlFormula::And(a, b) => {
                    paren(a, table, out)?;
                    write!(out, " & ")?;
                    paren(b, table, out)
                }
                LtlFormula::Or(a, b) => {
                    paren(a, table, out)?;
                    write!(out, " | ")?;
                    paren(b, table, out)
                }
                LtlFormula::Implies(a, b) => {
                    paren(a, table, out)?;
                    write!(out, " -> ")?;
                    paren(b, table, out)
                }
                LtlFormula::Until(a, b) => {
                    paren(a, table, out)?;
                    write!(out, " U ")?;
                    paren(b, table, out)
                }
            }
        }
        fn paren(f: &LtlFormula, table: &AtomTable, out: &mut fmt::Formatter<'_>) -> fmt::Result {
            match f {
                LtlFormula::True | LtlFormula::False | LtlFormula::Atom(_) => go(f, table, out),
                _ => {
                    write!(out, "(")?;
                    go(f, table, out)?;
                    write!(out, ")")
                }
            }
        }
        go(self.f, self.table, out)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LtlError {
    #[error("invalid atom name {0:?}")]
    BadAtomName(String),
    #[error("atom table full ({MAX_ATOMS} atoms max)")]
    TooManyAtoms,
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown character {ch:?} at byte {pos}")]
    UnknownChar { pos: usize, ch: char },
    #[error("negation of Until cannot be expressed in the closed operator set")]
    UnsupportedNegation,
    #[error("unknown sort {0:?}")]
    UnknownSort(String),
    #[error("empty domain for sort {0:?}")]
    EmptyDomain(String),
    #[error("unbound variable {0:?} in quantified body")]
    UnboundVariable(String),
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Not,
    And,
    Or,
    Implies,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn next_token(&mut self) -> Result<(usize, Token), LtlError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= bytes.len() {
            return Ok((start, Token::Eof));
        }
        let c = self.src[self.pos..].chars().next().unwrap();
        match c {
            '!' => {
                self.pos += 1;
                Ok((start, Token::Not))
            }
            '&' => {
                self.pos += 1;
                Ok((start, Token::And))
            }
            '|' => {
                self.pos += 1;
                Ok((start, Token::Or))
            }
            '(' => {
                self.pos += 1;
                Ok((start, Token::LParen))
            }
            ')' => {
                self.pos += 1;
                Ok((start, Token::RParen))
            }
            '-' => {
                if self.src[self.pos..].starts_with("->") {
                    self.pos += 2;
                    Ok((start, Token::Implies))
                } else {
                    Err(LtlError::UnknownChar { pos: start, ch: '-' })
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = self.pos;
                while end < bytes.len() {
                    let ch = bytes[end] as char;
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        end += 1;
                    } else {
                        break;
                    }
                }
                let ident = self.src[self.pos..end].to_string();
                self.pos = end;
                Ok((start, Token::Ident(ident)))
            }
            other => Err(LtlError::UnknownChar { pos: start, ch: other }),
        }
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    idx: usize,
    atoms: &'a mut AtomTable,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &(usize, Token) {
        &self.tokens[self.idx]
    }

    fn bump(&mut self) -> (usize, Token) {
        let t = self.tokens[self.idx].clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    // Precedence, tightest first: unary (!, X, F, G), U, &, |, ->.
    fn parse_implies(&mut self) -> Result<LtlFormula, LtlError> {
        let lhs = self.parse_or()?;
        if self.peek().1 == Token::Implies {
            self.bump();
            let rhs = self.parse_implies()?; // right-associative
            Ok(LtlFormula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_or(&mut self) -> Result<LtlFormula, LtlError> {
        let mut lhs = self.parse_and()?;
        while self.peek().1 == Token::Or {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = LtlFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<LtlFormula, LtlError> {
        let mut lhs = self.parse_until()?;
        while self.peek().1 == Token::And {
            self.bump();
            let rhs = self.parse_until()?;
            lhs = LtlFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_until(&mut self) -> Result<LtlFormula, LtlError> {
        let lhs = self.parse_unary()?;
        if matches!(&self.peek().1, Token::Ident(s) if s == "U") {
            self.bump();
            let rhs = self.parse_until()?; // right-associative
            Ok(LtlFormula::until(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_unary(&mut self) -> Result<LtlFormula, LtlError> {
        match self.peek().1.clone() {
            Token::Not => {
                self.bump();
                Ok(LtlFormula::not(self.parse_unary()?))
            }
            Token::Ident(s) if s == "X" => {
                self.bump();
                Ok(LtlFormula::next(self.parse_unary()?))
            }
            Token::Ident(s) if s == "F" => {
                self.bump();
                Ok(LtlFormula::finally(self.parse_unary()?))
            }
            Token::Ident(s) if s == "G" => {
                self.bump();
                Ok(LtlFormula::globally(self.parse_unary()?))
            }
            _ => self.parse_atom(),
        }
    }

    fn parse_atom(&mut self) -> Result<LtlFormula, LtlError> {
        match self.bump() {
            (_, Token::LParen) => {
                let f = self.parse_implies()?;
                match self.bump() {
                    (_, Token::RParen) => Ok(f),
                    (pos, _) => Err(LtlError::Syntax { pos, msg: "expected ')'".into() }),
                }
            }
            (_, Token::Ident(s)) if s == "true" => Ok(LtlFormula::True),
            (_, Token::Ident(s)) if s == "false" => Ok(LtlFormula::False),
            (pos, Token::Ident(s)) => {
                if s == "U" || s == "X" || s == "F" || s == "G" {
                    return Err(LtlError::Syntax {
                        pos,
                        msg: format!("operator {s:?} where a proposition was expected"),
                    });
                }
                Ok(LtlFormula::Atom(self.atoms.intern(&s)?))
            }
            (pos, tok) => {
                Err(LtlError::Syntax { pos, msg: format!("unexpected token {tok:?}") })
            }
        }
    }
}

/// Parses the concrete LTL syntax. `G`, `F`, `X` are prefix operators, `U` is
/// infix right-associative; `!`, `&`, `|`, `->` and parentheses as usual.
/// All atoms are interned into `atoms`.
pub fn parse_ltl(text: &str, atoms: &mut AtomTable) -> Result<LtlFormula, LtlError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let t = lexer.next_token()?;
        let eof = t.1 == Token::Eof;
        tokens.push(t);
        if eof {
            break;
        }
    }
    let mut parser = Parser { tokens, idx: 0, atoms };
    let f = parser.parse_implies()?;
    match parser.peek() {
        (_, Token::Eof) => Ok(f),
        (pos, tok) => Err(LtlError::Syntax { pos: *pos, msg: format!("trailing input {tok:?}") }),
    }
}

// ---------------------------------------------------------------------------
// Quantified templates and grounding
// ---------------------------------------------------------------------------

/// Body of a universally quantified norm template. Atoms may carry variable
/// arguments which grounding instantiates by name mangling (`atom_entity`).
#[derive(Debug, Clone, PartialEq)]
pub enum TemplateFormula {
    True,
    False,
    Atom { name: String, args: Vec<String> },
    Not(Box<TemplateFormula>),
    And(Box<TemplateFormula>, Box<TemplateFormula>),
    Or(Box<TemplateFormula>, Box<TemplateFormula>),
    Implies(Box<TemplateFormula>, Box<TemplateFormula>),
    Next(Box<TemplateFormula>),
    Finally(Box<TemplateFormula>),
    Globally(Box<TemplateFormula>),
    Until(Box<TemplateFormula>, Box<TemplateFormula>),
}

/// A universally quantified formula: `forall v1:sort1, v2:sort2. body`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantifiedFormula {
    /// (variable, sort) pairs of the quantifier prefix.
    pub vars: Vec<(String, String)>,
    pub body: TemplateFormula,
}

impl TemplateFormula {
    fn free_vars(&self, out: &mut Vec<String>) {
        match self {
            TemplateFormula::True | TemplateFormula::False => {}
            TemplateFormula::Atom { args, .. } => {
                for a in args {
                    if !out.contains(a) {
                        out.push(a.clone());
                    }
                }
            }
            TemplateFormula::Not(f)
            | TemplateFormula::Next(f)
            | TemplateFormula::Finally(f)
            | TemplateFormula::Globally(f) => f.free_vars(out),
            TemplateFormula::And(a, b)
            | TemplateFormula::Or(a, b)
            | TemplateFormula::Implies(a, b)
            | TemplateFormula::Until(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
        }
    }

    fn instantiate(
        &self,
        subst: &[(String, String)],
        atoms: &mut AtomTable,
    ) -> Result<LtlFormula, LtlError> {
        Ok(match self {
            TemplateFormula::True => LtlFormula::True,
            TemplateFormula::False => LtlFormula::False,
            TemplateFormula::Atom { name, args } => {
                let mut mangled = name.clone();
                for arg in args {
                    let entity = subst
                        .iter()
                        .find(|(v, _)| v == arg)
                        .map(|(_, e)| e.clone())
                        .ok_or_else(|| LtlError::UnboundVariable(arg.clone()))?;
                    mangled.push('_');
                    mangled.push_str(&entity);
                }
                LtlFormula::Atom(atoms.intern(&mangled)?)
            }
            TemplateFormula::Not(f) => LtlFormula::not(f.instantiate(subst, atoms)?),
            TemplateFormula::Next(f) => LtlFormula::next(f.instantiate(subst, atoms)?),
            TemplateFormula::Finally(f) => LtlFormula::finally(f.instantiate(subst, atoms)?),
            TemplateFormula::Globally(f) => LtlFormula::globally(f.instantiate(subst, atoms)?),
            TemplateFormula::And(a, b) => {
                LtlFormula::and(a.instantiate(subst, atoms)?, b.instantiate(subst, atoms)?)
            }
            TemplateFormula::Or(a, b) => {
                LtlFormula::or(a.instantiate(subst, atoms)?, b.instantiate(subst, atoms)?)
            }
            TemplateFormula::Implies(a, b) => {
                LtlFormula::implies(a.instantiate(subst, atoms)?, b.instantiate(subst, atoms)?)
            }
            TemplateFormula::Until(a, b) => {
                LtlFormula::until(a.instantiate(subst, atoms)?, b.instantiate(subst, atoms)?)
            }
        })
    }
}

/// Grounds a universally quantified template over the declared finite domain:
/// the conjunction over all substitutions of domain entities for the bound
/// variables. Parameterized atoms flatten to `atom_entity` propositions.
pub fn ground(
    qf: &QuantifiedFormula,
    domain: &[(String, Vec<String>)],
    atoms: &mut AtomTable,
) -> Result<LtlFormula, LtlError> {
    let mut free = Vec::new();
    qf.body.free_vars(&mut free);
    for v in &free {
        if !qf.vars.iter().any(|(var, _)| var == v) {
            return Err(LtlError::UnboundVariable(v.clone()));
        }
    }
    let mut entity_sets: Vec<&[String]> = Vec::new();
    for (_, sort) in &qf.vars {
        let set = domain
            .iter()
            .find(|(s, _)| s == sort)
            .map(|(_, es)| es.as_slice())
            .ok_or_else(|| LtlError::UnknownSort(sort.clone()))?;
        if set.is_empty() {
            return Err(LtlError::EmptyDomain(sort.clone()));
        }
        entity_sets.push(set);
    }

    // Enumerate all substitutions in lexicographic domain order.
    let mut conjuncts = Vec::new();
    let mut idx = vec![0usize; qf.vars.len()];
    loop {
        let subst: Vec<(String, String)> = qf
            .vars
            .iter()
            .enumerate()
            .map(|(k, (v, _))| (v.clone(), entity_sets[k][idx[k]].clone()))
            .collect();
        conjuncts.push(qf.body.instantiate(&subst, atoms)?);
        // advance the mixed-radix counter over substitutions
        let mut k = idx.len();
        let mut done = true;
        while k > 0 {
            k -= 1;
            idx[k] += 1;
            if idx[k] < entity_sets[k].len() {
                done = false;
                break;
            }
            idx[k] = 0;
        }
        if done {
            break;
        }
    }
    let mut it = conjuncts.into_iter();
    let first = it.next().expect("nonempty domains yield at least one substitution");
    Ok(it.fold(first, LtlFormula::and))
}

// ---------------------------------------------------------------------------
// Negation normal form
// ---------------------------------------------------------------------------

/// Rewrites into the closed operator set {Atom, !Atom, &, |, X, U, G, F}:
/// `Implies` is eliminated and negations pushed onto atoms using the usual
/// dualities. A negated `Until` would require Release and is rejected.
pub fn to_nnf(f: &LtlFormula) -> Result<LtlFormula, LtlError> {
    fn pos(f: &LtlFormula) -> Result<LtlFormula, LtlError> {
        Ok(match f {
            LtlFormula::True => LtlFormula::True,
            LtlFormula::False => LtlFormula::False,
            LtlFormula::Atom(a) => LtlFormula::Atom(*a),
            LtlFormula::Not(g) => neg(g)?,
            LtlFormula::And(a, b) => LtlFormula::and(pos(a)?, pos(b)?),
            LtlFormula::Or(a, b) => LtlFormula::or(pos(a)?, pos(b)?),
            LtlFormula::Implies(a, b) => LtlFormula::or(neg(a)?, pos(b)?),
            LtlFormula::Next(g) => LtlFormula::next(pos(g)?),
            LtlFormula::Finally(g) => LtlFormula::finally(pos(g)?),
            LtlFormula::Globally(g) => LtlFormula::globally(pos(g)?),
            LtlFormula::Until(a, b) => LtlFormula::until(pos(a)?, pos(b)?),
        })
    }
    fn neg(f: &LtlFormula) -> Result<LtlFormula, LtlError> {
        Ok(match f {
            LtlFormula::True => LtlFormula::False,
            LtlFormula::False => LtlFormula::True,
            LtlFormula::Atom(a) => LtlFormula::not(LtlFormula::Atom(*a)),
            LtlFormula::Not(g) => pos(g)?,
            LtlFormula::And(a, b) => LtlFormula::or(neg(a)?, neg(b)?),
            LtlFormula::Or(a, b) => LtlFormula::and(neg(a)?, neg(b)?),
            LtlFormula::Implies(a, b) => LtlFormula::and(pos(a)?, neg(b)?),
            LtlFormula::Next(g) => LtlFormula::next(neg(g)?),
            LtlFormula::Finally(g) => LtlFormula::globally(neg(g)?),
            LtlFormula::Globally(g) => LtlFormula::finally(neg(g)?),
            LtlFormula::Until(_, _) => return Err(LtlError::UnsupportedNegation),
        })
    }
    pos(f)
}

// ---------------------------------------------------------------------------
// Lasso semantics oracle
// ---------------------------------------------------------------------------

/// An ultimately periodic word `prefix . cycle^omega`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lasso {
    pub prefix: Vec<Valuation>,
    pub cycle: Vec<Valuation>,
}

impl Lasso {
    pub fn new(prefix: Vec<Valuation>, cycle: Vec<Valuation>) -> Self {
        assert!(!cycle.is_empty(), "lasso cycle must be nonempty");
        Lasso { prefix, cycle }
    }

    pub fn at(&self, i: usize) -> Valuation {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.cycle[(i - self.prefix.len()) % self.cycle.len()]
        }
    }

    /// Rotates the first cycle element onto the prefix, representing the same
    /// infinite word.
    pub fn rotate(&self) -> Lasso {
        let mut prefix = self.prefix.clone();
        prefix.push(self.cycle[0]);
        let mut cycle = self.cycle[1..].to_vec();
        cycle.push(self.cycle[0]);
        Lasso { prefix, cycle }
    }
}

/// Exact LTL satisfaction on an ultimately periodic word: positions on the
/// cycle are solved first (every suffix from a cycle position is itself
/// periodic, so `G`/`F` reduce to cycle-wide checks and `U` to a first-hit
/// scan), then values are propagated backwards through the prefix.
pub fn evaluate_on_lasso(f: &LtlFormula, w: &Lasso) -> bool {
    let m = w.prefix.len();
    let p = w.cycle.len();
    // vals[i] for i in 0..m are the prefix positions; m..m+p the cycle.
    fn eval(f: &LtlFormula, w: &Lasso, m: usize, p: usize) -> Vec<bool> {
        let n = m + p;
        let succ = |i: usize| if i + 1 < n { i + 1 } else { m };
        match f {
            LtlFormula::True => vec![true; n],
            LtlFormula::False => vec![false; n],
            LtlFormula::Atom(a) => (0..n).map(|i| w.at(i).contains(*a)).collect(),
            LtlFormula::Not(g) => eval(g, w, m, p).into_iter().map(|b| !b).collect(),
            LtlFormula::And(a, b) => {
                let (va, vb) = (eval(a, w, m, p), eval(b, w, m, p));
                va.into_iter().zip(vb).map(|(x, y)| x && y).collect()
            }
            LtlFormula::Or(a, b) => {
                let (va, vb) = (eval(a, w, m, p), eval(b, w, m, p));
                va.into_iter().zip(vb).map(|(x, y)| x || y).collect()
            }
            LtlFormula::Implies(a, b) => {
                let (va, vb) = (eval(a, w, m, p), eval(b, w, m, p));
                va.into_iter().zip(vb).map(|(x, y)| !x || y).collect()
            }
            LtlFormula::Next(g) => {
                let vg = eval(g, w, m, p);
                (0..n).map(|i| vg[succ(i)]).collect()
            }
            LtlFormula::Globally(g) => {
                let vg = eval(g, w, m, p);
                let mut v = vec![false; n];
                // From any cycle position every cycle position is in the future.
                let cycle_all = (m..n).all(|i| vg[i]);
                for i in m..n {
                    v[i] = cycle_all;
                }
                for i in (0..m).rev() {
                    let next = if i + 1 < m { v[i + 1] } else { v[m] };
                    v[i] = vg[i] && next;
                }
                v
            }
            LtlFormula::Finally(g) => {
                let vg = eval(g, w, m, p);
                let mut v = vec![false; n];
                let cycle_any = (m..n).any(|i| vg[i]);
                for i in m..n {
                    v[i] = cycle_any;
                }
                for i in (0..m).rev() {
                    let next = if i + 1 < m { v[i + 1] } else { v[m] };
                    v[i] = vg[i] || next;
                }
                v
            }
            LtlFormula::Until(a, b) => {
                let (va, vb) = (eval(a, w, m, p), eval(b, w, m, p));
                let mut v = vec![false; n];
                // Cycle positions: find the first b-position ahead (wrapping);
                // a must hold strictly before it.
                for i in m..n {
                    let mut val = false;
                    for d in 0..p {
                        let j = m + (i - m + d) % p;
                        if vb[j] {
                            val = (0..d).all(|e| va[m + (i - m + e) % p]);
                            break;
                        }
                    }
                    v[i] = val;
                }
                for i in (0..m).rev() {
                    let next = if i + 1 < m { v[i + 1] } else { v[m] };
                    v[i] = vb[i] || (va[i] && next);
                }
                v
            }
        }
    }
    let vals = eval(f, w, m, p);
    if m > 0 {
        vals[0]
    } else {
        vals[m]
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn table_pq() -> (AtomTable, AtomId, AtomId) {
        let mut t = AtomTable::new();
        let p = t.intern("p").unwrap();
        let q = t.intern("q").unwrap();
        (t, p, q)
    }

    #[test]
    fn parse_globally_atom() {
        let mut t = AtomTable::new();
        let f = parse_ltl("G roomsClean", &mut t).unwrap();
        let rc = t.lookup("roomsClean").unwrap();
        assert_eq!(f, LtlFormula::globally(LtlFormula::Atom(rc)));
    }

    #[test]
    fn parse_until_infix() {
        let mut t = AtomTable::new();
        let f = parse_ltl("p U q", &mut t).unwrap();
        let p = t.lookup("p").unwrap();
        let q = t.lookup("q").unwrap();
        assert_eq!(f, LtlFormula::until(LtlFormula::Atom(p), LtlFormula::Atom(q)));
    }

    #[test]
    fn parse_norm_n4_shape() {
        let mut t = AtomTable::new();
        let f = parse_ltl("G (a -> (!t U !s))", &mut t).unwrap();
        let a = t.lookup("a").unwrap();
        let tt = t.lookup("t").unwrap();
        let s = t.lookup("s").unwrap();
        let expected = LtlFormula::globally(LtlFormula::implies(
            LtlFormula::Atom(a),
            LtlFormula::until(
                LtlFormula::not(LtlFormula::Atom(tt)),
                LtlFormula::not(LtlFormula::Atom(s)),
            ),
        ));
        assert_eq!(f, expected);
    }

    #[test]
    fn precedence_unary_until_and_or_implies() {
        let mut t = AtomTable::new();
        // a U b & c | d -> e parses as (((a U b) & c) | d) -> e
        let f = parse_ltl("a U b & c | d -> e", &mut t).unwrap();
        let atom = |n: &str, t: &AtomTable| LtlFormula::Atom(t.lookup(n).unwrap());
        let expected = LtlFormula::implies(
            LtlFormula::or(
                LtlFormula::and(
                    LtlFormula::until(atom("a", &t), atom("b", &t)),
                    atom("c", &t),
                ),
                atom("d", &t),
            ),
            atom("e", &t),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn parse_errors_carry_position() {
        let mut t = AtomTable::new();
        match parse_ltl("G (p", &mut t) {
            Err(LtlError::Syntax { msg, .. }) => assert!(msg.contains("')'")),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_ltl("p @ q", &mut t) {
            Err(LtlError::UnknownChar { ch: '@', pos: 2 }) => {}
            other => panic!("expected unknown char, got {other:?}"),
        }
    }

    #[test]
    fn ground_single_entity() {
        // forall x:human. G(human(x) -> !injured(x)), domain {human: [h1]}
        let qf = QuantifiedFormula {
            vars: vec![("x".into(), "human".into())],
            body: TemplateFormula::Globally(Box::new(TemplateFormula::Implies(
                Box::new(TemplateFormula::Atom { name: "human".into(), args: vec!["x".into()] }),
                Box::new(TemplateFormula::Not(Box::new(TemplateFormula::Atom {
                    name: "injured".into(),
                    args: vec!["x".into()],
                }))),
            ))),
        };
        let mut t = AtomTable::new();
        let g = ground(&qf, &[("human".into(), vec!["h1".into()])], &mut t).unwrap();
        // grounding interns human_h1 then injured_h1, same order as a fresh parse
        let mut t2 = AtomTable::new();
        let expected = parse_ltl("G (human_h1 -> !injured_h1)", &mut t2).unwrap();
        assert_eq!(g, expected);
        assert_eq!(t, t2);
    }

    #[test]
    fn ground_two_entities_is_conjunction() {
        let qf = QuantifiedFormula {
            vars: vec![("x".into(), "human".into())],
            body: TemplateFormula::Globally(Box::new(TemplateFormula::Not(Box::new(
                TemplateFormula::Atom { name: "injured".into(), args: vec!["x".into()] },
            )))),
        };
        let mut t = AtomTable::new();
        let g =
            ground(&qf, &[("human".into(), vec!["h1".into(), "h2".into()])], &mut t).unwrap();
        match g {
            LtlFormula::And(a, b) => {
                assert!(matches!(*a, LtlFormula::Globally(_)));
                assert!(matches!(*b, LtlFormula::Globally(_)));
            }
            other => panic!("expected conjunction, got {other:?}"),
        }
        assert!(t.lookup("injured_h1").is_some());
        assert!(t.lookup("injured_h2").is_some());
    }

    #[test]
    fn ground_rejects_unknown_sort_and_empty_domain() {
        let qf = QuantifiedFormula {
            vars: vec![("x".into(), "human".into())],
            body: TemplateFormula::Atom { name: "a".into(), args: vec!["x".into()] },
        };
        let mut t = AtomTable::new();
        assert_eq!(ground(&qf, &[], &mut t), Err(LtlError::UnknownSort("human".into())));
        assert_eq!(
            ground(&qf, &[("human".into(), vec![])], &mut t),
            Err(LtlError::EmptyDomain("human".into()))
        );
    }

    #[test]
    fn nnf_dualities() {
        let (mut t, p, _) = table_pq();
        let f = parse_ltl("!G p", &mut t).unwrap();
        assert_eq!(
            to_nnf(&f).unwrap(),
            LtlFormula::finally(LtlFormula::not(LtlFormula::Atom(p)))
        );
        let f = parse_ltl("!!p", &mut t).unwrap();
        assert_eq!(to_nnf(&f).unwrap(), LtlFormula::Atom(p));
        let f = parse_ltl("!(p U q)", &mut t).unwrap();
        assert_eq!(to_nnf(&f), Err(LtlError::UnsupportedNegation));
    }

    #[test]
    fn lasso_globally() {
        let (_, p, _) = table_pq();
        let vp = Valuation::singleton(p);
        let f = LtlFormula::globally(LtlFormula::Atom(p));
        assert!(evaluate_on_lasso(&f, &Lasso::new(vec![], vec![vp])));
        assert!(!evaluate_on_lasso(&f, &Lasso::new(vec![vp], vec![Valuation::EMPTY])));
    }

    #[test]
    fn lasso_until_hand_unrolled() {
        let (_, p, q) = table_pq();
        let vp = Valuation::singleton(p);
        let vq = Valuation::singleton(q);
        let f = LtlFormula::until(LtlFormula::Atom(p), LtlFormula::Atom(q));
        // q first holds at position 2
        assert!(evaluate_on_lasso(&f, &Lasso::new(vec![vp, vp], vec![vq])));
        assert!(!evaluate_on_lasso(&f, &Lasso::new(vec![vp, Valuation::EMPTY], vec![vp])));
    }
}
