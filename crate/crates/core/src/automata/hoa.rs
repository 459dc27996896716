//! Import and export of deterministic Rabin automata in the HOA (Hanoi
//! Omega-Automata) exchange format, explicit-labels body, state-based
//! acceptance, with Rabin pairs encoded as `Fin(2i) & Inf(2i+1)`.

use std::fmt::Write as _;

use super::{AutomataError, Dra, RabinPair};

/// Serializes a DRA as an HOA v1 document.
pub fn export_hoa(d: &Dra) -> String {
    let mut out = String::new();
    let n = d.num_states();
    writeln!(out, "HOA: v1").unwrap();
    writeln!(out, "States: {n}").unwrap();
    writeln!(out, "Start: {}", d.initial).unwrap();
    write!(out, "AP: {}", d.atom_names.len()).unwrap();
    for name in &d.atom_names {
        write!(out, " \"{name}\"").unwrap();
    }
    out.push('\n');
    writeln!(out, "acc-name: Rabin {}", d.pairs.len()).unwrap();
    let acc: Vec<String> = d
        .pairs
        .iter()
        .enumerate()
        .map(|(i, _)| format!("(Fin({}) & Inf({}))", 2 * i, 2 * i + 1))
        .collect();
    writeln!(out, "Acceptance: {} {}", 2 * d.pairs.len(), acc.join(" | ")).unwrap();
    writeln!(out, "properties: trans-labels explicit-labels state-acc deterministic complete")
        .unwrap();
    writeln!(out, "--BODY--").unwrap();
    for q in 0..n as u32 {
        let mut sets = Vec::new();
        for (i, pair) in d.pairs.iter().enumerate() {
            if pair.fin_contains(q) {
                sets.push(2 * i);
            }
            if pair.inf_contains(q) {
                sets.push(2 * i + 1);
            }
        }
        if sets.is_empty() {
            writeln!(out, "State: {q}").unwrap();
        } else {
            let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
            writeln!(out, "State: {q} {{{}}}", sets.join(" ")).unwrap();
        }
        for letter in 0..d.num_letters() {
            writeln!(out, "[{}] {}", letter_label(letter, d.atom_names.len()), d.step_local(q, letter))
                .unwrap();
        }
    }
    writeln!(out, "--END--").unwrap();
    out
}

fn letter_label(letter: usize, num_aps: usize) -> String {
    if num_aps == 0 {
        return "t".to_string();
    }
    (0..num_aps)
        .map(|i| if letter >> i & 1 == 1 { format!("{i}") } else { format!("!{i}") })
        .collect::<Vec<_>>()
        .join("&")
}

// ---------------------------------------------------------------------------
// Import
// ---------------------------------------------------------------------------

/// Boolean label expression over AP indices.
#[derive(Debug, Clone)]
enum LabelExpr {
    True,
    False,
    Ap(usize),
    Not(Box<LabelExpr>),
    And(Box<LabelExpr>, Box<LabelExpr>),
    Or(Box<LabelExpr>, Box<LabelExpr>),
}

impl LabelExpr {
    fn matches(&self, letter: usize) -> bool {
        match self {
            LabelExpr::True => true,
            LabelExpr::False => false,
            LabelExpr::Ap(i) => letter >> i & 1 == 1,
            LabelExpr::Not(e) => !e.matches(letter),
            LabelExpr::And(a, b) => a.matches(letter) && b.matches(letter),
            LabelExpr::Or(a, b) => a.matches(letter) || b.matches(letter),
        }
    }
}

struct LabelParser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> LabelParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err<T>(&self, msg: &str) -> Result<T, AutomataError> {
        Err(AutomataError::HoaParse { line: self.line, msg: msg.to_string() })
    }

    fn parse_or(&mut self) -> Result<LabelExpr, AutomataError> {
        let mut lhs = self.parse_and()?;
        loop {
            self.skip_ws();
            if self.pos < self.src.len() && self.src[self.pos] == b'|' {
                self.pos += 1;
                let rhs = self.parse_and()?;
                lhs = LabelExpr::Or(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_and(&mut self) -> Result<LabelExpr, AutomataError> {
        let mut lhs = self.parse_unary()?;
        loop {
            self.skip_ws();
            if self.pos < self.src.len() && self.src[self.pos] == b'&' {
                self.pos += 1;
                let rhs = self.parse_unary()?;
                lhs = LabelExpr::And(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_unary(&mut self) -> Result<LabelExpr, AutomataError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return self.err("unexpected end of label");
        }
        match self.src[self.pos] {
            b'!' => {
                self.pos += 1;
                Ok(LabelExpr::Not(Box::new(self.parse_unary()?)))
            }
            b'(' => {
                self.pos += 1;
                let e = self.parse_or()?;
                self.skip_ws();
                if self.pos < self.src.len() && self.src[self.pos] == b')' {
                    self.pos += 1;
                    Ok(e)
                } else {
                    self.err("expected ')' in label")
                }
            }
            b't' => {
                self.pos += 1;
                Ok(LabelExpr::True)
            }
            b'f' => {
                self.pos += 1;
                Ok(LabelExpr::False)
            }
            c if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(LabelExpr::Ap(s.parse().unwrap()))
            }
            _ => self.err("bad character in label"),
        }
    }
}

fn parse_label(text: &str, line: usize) -> Result<LabelExpr, AutomataError> {
    let mut p = LabelParser { src: text.as_bytes(), pos: 0, line };
    let e = p.parse_or()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("trailing characters in label");
    }
    Ok(e)
}

/// Parses `Fin(2i) & Inf(2i+1)` disjuncts from an `Acceptance:` payload,
/// returning the number of Rabin pairs.
fn parse_acceptance(expr: &str, num_sets: usize, line: usize) -> Result<usize, AutomataError> {
    let cleaned: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let disjuncts: Vec<&str> = cleaned.split('|').collect();
    if num_sets != 2 * disjuncts.len() {
        return Err(AutomataError::UnsupportedAcceptance(format!(
            "{num_sets} sets for {} disjuncts",
            disjuncts.len()
        )));
    }
    for (i, d) in disjuncts.iter().enumerate() {
        let d = match d.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
            Some(inner) => inner,
            None => d,
        };
        let expected = format!("Fin({})&Inf({})", 2 * i, 2 * i + 1);
        if d != expected {
            return Err(AutomataError::UnsupportedAcceptance(format!(
                "expected Rabin disjunct {expected}, found {d}"
            )));
        }
    }
    let _ = line;
    Ok(disjuncts.len())
}

fn parse_quoted_names(rest: &str, line: usize) -> Result<Vec<String>, AutomataError> {
    let mut names = Vec::new();
    let mut chars = rest.chars().peekable();
    loop {
        while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None => break,
            Some('"') => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(c) => name.push(c),
                        None => {
                            return Err(AutomataError::HoaParse {
                                line,
                                msg: "unterminated string".into(),
                            })
                        }
                    }
                }
                names.push(name);
            }
            Some(_) => {
                return Err(AutomataError::HoaParse { line, msg: "expected quoted AP name".into() })
            }
        }
    }
    Ok(names)
}

/// Parses an HOA document with deterministic Rabin acceptance and explicit
/// labels. Incomplete transition structures are completed with a fresh
/// absorbing state outside every acceptance set.
pub fn import_hoa(text: &str) -> Result<Dra, AutomataError> {
    let mut num_states: Option<usize> = None;
    let mut start: Option<u32> = None;
    let mut aps: Option<Vec<String>> = None;
    let mut acc_line: Option<(String, usize, usize)> = None; // (expr, num_sets, line)

    let mut lines = text.lines().enumerate();
    let mut saw_hoa = false;
    let mut body_start = None;
    for (i, raw) in lines.by_ref() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("HOA:") {
            if rest.trim() != "v1" {
                return Err(AutomataError::HoaParse {
                    line: lineno,
                    msg: format!("unsupported version {}", rest.trim()),
                });
            }
            saw_hoa = true;
        } else if let Some(rest) = line.strip_prefix("States:") {
            num_states = Some(rest.trim().parse().map_err(|_| AutomataError::HoaParse {
                line: lineno,
                msg: "bad States: count".into(),
            })?);
        } else if let Some(rest) = line.strip_prefix("Start:") {
            let s = rest.trim();
            if s.split_whitespace().count() != 1 {
                return Err(AutomataError::HoaParse {
                    line: lineno,
                    msg: "exactly one start state required".into(),
                });
            }
            start = Some(s.parse().map_err(|_| AutomataError::HoaParse {
                line: lineno,
                msg: "bad Start: state".into(),
            })?);
        } else if let Some(rest) = line.strip_prefix("AP:") {
            let rest = rest.trim();
            let (count_str, names_str) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let count: usize = count_str.parse().map_err(|_| AutomataError::HoaParse {
                line: lineno,
                msg: "bad AP: count".into(),
            })?;
            let names = parse_quoted_names(names_str, lineno)?;
            if names.len() != count {
                return Err(AutomataError::HoaParse {
                    line: lineno,
                    msg: format!("AP count {count} does not match {} names", names.len()),
                });
            }
            aps = Some(names);
        } else if let Some(rest) = line.strip_prefix("acc-name:") {
            let mut parts = rest.trim().split_whitespace();
            match parts.next() {
                Some("Rabin") => {}
                Some(other) => {
                    return Err(AutomataError::UnsupportedAcceptance(other.to_string()))
                }
                None => {}
            }
        } else if let Some(rest) = line.strip_prefix("Acceptance:") {
            let rest = rest.trim();
            let (count_str, expr) = rest.split_once(char::is_whitespace).ok_or_else(|| {
                AutomataError::HoaParse { line: lineno, msg: "bad Acceptance: line".into() }
            })?;
            let num_sets: usize = count_str.parse().map_err(|_| AutomataError::HoaParse {
                line: lineno,
                msg: "bad Acceptance: set count".into(),
            })?;
            acc_line = Some((expr.to_string(), num_sets, lineno));
        } else if line.starts_with("properties:")
            || line.starts_with("name:")
            || line.starts_with("tool:")
        {
            // informational headers
        } else if line == "--BODY--" {
            body_start = Some(i + 1);
            break;
        } else {
            return Err(AutomataError::HoaParse {
                line: lineno,
                msg: format!("unrecognized header line {line:?}"),
            });
        }
    }
    if !saw_hoa {
        return Err(AutomataError::HoaParse { line: 1, msg: "missing HOA: v1 header".into() });
    }
    let body_start = body_start
        .ok_or(AutomataError::HoaParse { line: 0, msg: "missing --BODY--".into() })?;
    let n = num_states
        .ok_or(AutomataError::HoaParse { line: 0, msg: "missing States: header".into() })?;
    let start = start
        .ok_or(AutomataError::HoaParse { line: 0, msg: "missing Start: header".into() })?;
    let aps = aps.unwrap_or_default();
    if aps.len() > super::MAX_SUPPORT_ATOMS {
        return Err(AutomataError::TooManyAtoms(aps.len()));
    }
    let (acc_expr, num_sets, acc_lineno) = acc_line
        .ok_or(AutomataError::HoaParse { line: 0, msg: "missing Acceptance: header".into() })?;
    let num_pairs = parse_acceptance(&acc_expr, num_sets, acc_lineno)?;
    if num_pairs == 0 {
        return Err(AutomataError::UnsupportedAcceptance("no Rabin pairs".into()));
    }
    if n == 0 {
        return Err(AutomataError::HoaParse { line: 0, msg: "automaton has no states".into() });
    }
    if (start as usize) >= n {
        return Err(AutomataError::HoaParse { line: 0, msg: "start state out of range".into() });
    }

    let num_letters = 1usize << aps.len();
    // edges[state] = list of (label, target)
    let mut edges: Vec<Vec<(LabelExpr, u32)>> = vec![Vec::new(); n];
    let mut acc_sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut current: Option<usize> = None;
    for (i, raw) in text.lines().enumerate().skip(body_start) {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if line == "--END--" {
            break;
        }
        if let Some(rest) = line.strip_prefix("State:") {
            let rest = rest.trim();
            // State: <id> [ "name" ] [ {sets} ]
            let (id_part, tail) = match rest.split_once(char::is_whitespace) {
                Some((a, b)) => (a, b.trim()),
                None => (rest, ""),
            };
            let id: usize = id_part.parse().map_err(|_| AutomataError::HoaParse {
                line: lineno,
                msg: "bad state id".into(),
            })?;
            if id >= n {
                return Err(AutomataError::HoaParse {
                    line: lineno,
                    msg: format!("state id {id} out of range"),
                });
            }
            if !tail.is_empty() {
                let tail = tail.trim();
                let sets_str = tail
                    .strip_prefix('{')
                    .and_then(|s| s.strip_suffix('}'))
                    .ok_or_else(|| AutomataError::HoaParse {
                        line: lineno,
                        msg: "expected {acceptance sets} after state id".into(),
                    })?;
                for tok in sets_str.split_whitespace() {
                    let set: usize = tok.parse().map_err(|_| AutomataError::HoaParse {
                        line: lineno,
                        msg: "bad acceptance set index".into(),
                    })?;
                    if set >= 2 * num_pairs {
                        return Err(AutomataError::HoaParse {
                            line: lineno,
                            msg: format!("acceptance set {set} out of range"),
                        });
                    }
                    acc_sets[id].push(set);
                }
            }
            current = Some(id);
        } else if line.starts_with('[') {
            let state = current.ok_or(AutomataError::HoaParse {
                line: lineno,
                msg: "edge before any State:".into(),
            })?;
            let close = line.find(']').ok_or(AutomataError::HoaParse {
                line: lineno,
                msg: "unterminated label".into(),
            })?;
            let label = parse_label(&line[1..close], lineno)?;
            let rest = line[close + 1..].trim();
            if rest.contains('{') {
                return Err(AutomataError::UnsupportedAcceptance(
                    "transition-based acceptance".into(),
                ));
            }
            if rest.split_whitespace().count() != 1 {
                return Err(AutomataError::HoaParse {
                    line: lineno,
                    msg: "edge must have a single target state".into(),
                });
            }
            let target: u32 = rest.parse().map_err(|_| AutomataError::HoaParse {
                line: lineno,
                msg: "bad edge target".into(),
            })?;
            if (target as usize) >= n {
                return Err(AutomataError::HoaParse {
                    line: lineno,
                    msg: format!("edge target {target} out of range"),
                });
            }
            edges[state].push((label, target));
        } else {
            return Err(AutomataError::HoaParse {
                line: lineno,
                msg: format!("unrecognized body line {line:?}"),
            });
        }
    }

    // Resolve explicit labels into a dense transition table; reject
    // nondeterminism and complete with an absorbing sink if needed.
    let mut trans: Vec<Vec<u32>> = Vec::with_capacity(n + 1);
    let mut need_sink = false;
    let sink = n as u32;
    for (q, state_edges) in edges.iter().enumerate() {
        let mut row = Vec::with_capacity(num_letters);
        for letter in 0..num_letters {
            let mut target = None;
            for (label, t) in state_edges {
                if label.matches(letter) {
                    if target.is_some() {
                        return Err(AutomataError::NonDeterministic { state: q as u32 });
                    }
                    target = Some(*t);
                }
            }
            match target {
                Some(t) => row.push(t),
                None => {
                    need_sink = true;
                    row.push(sink);
                }
            }
        }
        trans.push(row);
    }
    if need_sink {
        trans.push(vec![sink; num_letters]);
    }

    let mut pairs: Vec<RabinPair> =
        (0..num_pairs).map(|_| RabinPair { fin: vec![], inf: vec![] }).collect();
    for (q, sets) in acc_sets.iter().enumerate() {
        for &s in sets {
            if s % 2 == 0 {
                pairs[s / 2].fin.push(q as u32);
            } else {
                pairs[s / 2].inf.push(q as u32);
            }
        }
    }

    Ok(Dra::new(aps, start, pairs, trans))
}
