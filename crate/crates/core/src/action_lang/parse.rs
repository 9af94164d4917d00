//! Concrete syntax for action descriptions.
//!
//! ```text
//! fluent at : cell(0..3, 0..3).
//! fluent light : {on, off}.
//! action up, toggle.
//! caused lit=yes if light=on.                 % static law
//! up causes at=(X,Y+1) if at=(X,Y).          % effect, precondition now
//! toggle causes light=off if at=(0,0) after light=on.
//! caused {at=(0,1); at=(1,0)} after at=(0,0), up.
//! never at=(2,2).
//! initially at=(0,0).
//! goal at=(3,3).
//! ```
//!
//! Upper-case identifiers are integer variables. A statement with variables
//! is grounded over every substitution whose values all fall inside the
//! domains of the fluents they are used with; each variable ranges over the
//! coordinates it is compared against.

use std::collections::BTreeMap;

use super::{
    ActionConstant, ActionDescription, DomainError, Effect, FluentAtom, FluentConstant,
    FluentDynamicLaw, Precondition, StaticLaw, Value,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Punct(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: [&str; 12] = ["..", ":", "{", "}", "(", ")", ",", ";", "=", "+", "-", "."];

fn tokenize(text: &str) -> Result<Vec<Token>, DomainError> {
    let mut tokens = Vec::new();
    for (line_idx, raw) in text.lines().enumerate() {
        let line = raw.split('%').next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (line, col) = (line_idx + 1, i + 1);
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = if c.is_ascii_uppercase() {
                    Tok::Var(word)
                } else {
                    Tok::Ident(word)
                };
                tokens.push(Token { tok, line, col });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                let n = digits.parse().map_err(|_| DomainError::Syntax {
                    line,
                    col,
                    msg: format!("integer '{digits}' out of range"),
                })?;
                tokens.push(Token {
                    tok: Tok::Int(n),
                    line,
                    col,
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match PUNCT.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    tokens.push(Token {
                        tok: Tok::Punct(p),
                        line,
                        col,
                    });
                    i += p.len();
                }
                None => {
                    return Err(DomainError::Syntax {
                        line,
                        col,
                        msg: format!("unexpected character '{c}'"),
                    })
                }
            }
        }
    }
    Ok(tokens)
}

/// `sign * (int | var)` summands.
#[derive(Debug, Clone, PartialEq)]
struct Expr(Vec<(i64, Operand)>);

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Int(i64),
    Var(String),
}

impl Expr {
    fn eval(&self, subst: &BTreeMap<String, i64>) -> i64 {
        self.0
            .iter()
            .map(|(sign, op)| {
                sign * match op {
                    Operand::Int(n) => *n,
                    Operand::Var(v) => subst[v],
                }
            })
            .sum()
    }

    /// `V + c` form: the variable and its offset.
    fn shifted_var(&self) -> Option<(&str, i64)> {
        let mut var = None;
        let mut offset = 0;
        for (sign, op) in &self.0 {
            match op {
                Operand::Int(n) => offset += sign * n,
                Operand::Var(v) if *sign == 1 && var.is_none() => var = Some(v.as_str()),
                Operand::Var(_) => return None,
            }
        }
        var.map(|v| (v, offset))
    }

    fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        for (_, op) in &self.0 {
            if let Operand::Var(v) = op {
                out.push(v);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ValueTerm {
    Sym(String),
    Expr(Expr),
    Tuple(Vec<Expr>),
}

#[derive(Debug, Clone)]
struct FluentTerm {
    fluent: String,
    value: ValueTerm,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
enum CondTerm {
    Fluent(FluentTerm),
    Action { name: String, line: usize, col: usize },
}

#[derive(Debug, Clone)]
enum HeadTerm {
    Single(FluentTerm),
    Choice(Vec<FluentTerm>),
}

#[derive(Debug, Clone)]
enum DomainSpec {
    Set(Vec<Value>),
    Cell(Vec<(i64, i64)>),
}

#[derive(Debug, Clone)]
enum Stmt {
    Fluent { name: String, domain: DomainSpec, line: usize, col: usize },
    Action { names: Vec<(String, usize, usize)> },
    Static { head: FluentTerm, cond: Vec<CondTerm> },
    Dynamic { head: HeadTerm, next: Vec<CondTerm>, now: Vec<CondTerm> },
    Initially(Vec<CondTerm>),
    Goal(Vec<CondTerm>),
    Never(Vec<CondTerm>),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.tokens.get(self.pos).or(self.tokens.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, DomainError> {
        let (line, col) = self.here();
        Err(DomainError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == kw)
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), DomainError> {
        if self.is_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected '{p}'"))
        }
    }

    fn ident(&mut self) -> Result<String, DomainError> {
        match self.peek() {
            Some(Tok::Ident(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.error("expected a name"),
        }
    }

    fn signed_int(&mut self) -> Result<i64, DomainError> {
        let neg = self.is_punct("-");
        if neg {
            self.pos += 1;
        }
        match self.next() {
            Some(Tok::Int(n)) => Ok(if neg { -n } else { n }),
            _ => {
                self.pos -= 1;
                self.error("expected an integer")
            }
        }
    }

    fn statement(&mut self) -> Result<Stmt, DomainError> {
        let (line, col) = self.here();
        let stmt = match self.peek() {
            Some(Tok::Ident(w)) if w == "fluent" => {
                self.pos += 1;
                let name = self.ident()?;
                self.expect_punct(":")?;
                let domain = self.domain()?;
                Stmt::Fluent {
                    name,
                    domain,
                    line,
                    col,
                }
            }
            Some(Tok::Ident(w)) if w == "action" => {
                self.pos += 1;
                let mut names = Vec::new();
                loop {
                    let (l, c) = self.here();
                    names.push((self.ident()?, l, c));
                    if !self.is_punct(",") {
                        break;
                    }
                    self.pos += 1;
                }
                Stmt::Action { names }
            }
            Some(Tok::Ident(w)) if w == "caused" => {
                self.pos += 1;
                let head = self.head()?;
                let cond = if self.is_keyword("if") {
                    self.pos += 1;
                    self.conjunction()?
                } else {
                    Vec::new()
                };
                if self.is_keyword("after") {
                    self.pos += 1;
                    let now = self.conjunction()?;
                    Stmt::Dynamic {
                        head,
                        next: cond,
                        now,
                    }
                } else {
                    match head {
                        HeadTerm::Single(head) => Stmt::Static { head, cond },
                        HeadTerm::Choice(_) => {
                            return self.error("choice heads need an 'after' clause")
                        }
                    }
                }
            }
            Some(Tok::Ident(w)) if w == "initially" => {
                self.pos += 1;
                Stmt::Initially(self.conjunction()?)
            }
            Some(Tok::Ident(w)) if w == "goal" => {
                self.pos += 1;
                Stmt::Goal(self.conjunction()?)
            }
            Some(Tok::Ident(w)) if w == "never" => {
                self.pos += 1;
                Stmt::Never(self.conjunction()?)
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                if !self.is_keyword("causes") {
                    return self.error("expected 'causes'");
                }
                self.pos += 1;
                let head = self.head()?;
                let first = if self.is_keyword("if") {
                    self.pos += 1;
                    self.conjunction()?
                } else {
                    Vec::new()
                };
                // `a causes F if H` reads H at the current step; with an
                // explicit `after`, the `if` part constrains the next step.
                let (next, mut now) = if self.is_keyword("after") {
                    self.pos += 1;
                    (first, self.conjunction()?)
                } else {
                    (Vec::new(), first)
                };
                now.push(CondTerm::Action { name, line, col });
                Stmt::Dynamic { head, next, now }
            }
            _ => return self.error("expected a statement"),
        };
        self.expect_punct(".")?;
        Ok(stmt)
    }

    fn domain(&mut self) -> Result<DomainSpec, DomainError> {
        if self.is_keyword("cell") {
            self.pos += 1;
            self.expect_punct("(")?;
            let mut ranges = Vec::new();
            loop {
                let lo = self.signed_int()?;
                self.expect_punct("..")?;
                let hi = self.signed_int()?;
                if hi < lo {
                    return self.error("empty range");
                }
                ranges.push((lo, hi));
                if self.is_punct(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            self.expect_punct(")")?;
            return Ok(DomainSpec::Cell(ranges));
        }
        self.expect_punct("{")?;
        let mut values = Vec::new();
        loop {
            let value = match self.peek() {
                Some(Tok::Ident(_)) => Value::Sym(self.ident()?),
                Some(Tok::Punct("(")) => {
                    self.pos += 1;
                    let mut parts = vec![self.signed_int()?];
                    while self.is_punct(",") {
                        self.pos += 1;
                        parts.push(self.signed_int()?);
                    }
                    self.expect_punct(")")?;
                    Value::Tuple(parts)
                }
                _ => Value::Int(self.signed_int()?),
            };
            values.push(value);
            if self.is_punct(",") {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.expect_punct("}")?;
        Ok(DomainSpec::Set(values))
    }

    fn head(&mut self) -> Result<HeadTerm, DomainError> {
        if self.is_punct("{") {
            self.pos += 1;
            let mut alternatives = vec![self.fluent_term()?];
            while self.is_punct(";") {
                self.pos += 1;
                alternatives.push(self.fluent_term()?);
            }
            self.expect_punct("}")?;
            if alternatives.len() < 2 {
                return self.error("a choice head needs at least two alternatives");
            }
            return Ok(HeadTerm::Choice(alternatives));
        }
        Ok(HeadTerm::Single(self.fluent_term()?))
    }

    fn fluent_term(&mut self) -> Result<FluentTerm, DomainError> {
        let (line, col) = self.here();
        let fluent = self.ident()?;
        self.expect_punct("=")?;
        let value = self.value_term()?;
        Ok(FluentTerm {
            fluent,
            value,
            line,
            col,
        })
    }

    fn conjunction(&mut self) -> Result<Vec<CondTerm>, DomainError> {
        let mut terms = Vec::new();
        loop {
            let (line, col) = self.here();
            let name = self.ident()?;
            if self.is_punct("=") {
                self.pos += 1;
                let value = self.value_term()?;
                terms.push(CondTerm::Fluent(FluentTerm {
                    fluent: name,
                    value,
                    line,
                    col,
                }));
            } else {
                terms.push(CondTerm::Action { name, line, col });
            }
            if !self.is_punct(",") {
                break;
            }
            self.pos += 1;
        }
        Ok(terms)
    }

    fn value_term(&mut self) -> Result<ValueTerm, DomainError> {
        match self.peek() {
            Some(Tok::Ident(_)) => Ok(ValueTerm::Sym(self.ident()?)),
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let mut parts = vec![self.expr()?];
                while self.is_punct(",") {
                    self.pos += 1;
                    parts.push(self.expr()?);
                }
                self.expect_punct(")")?;
                Ok(ValueTerm::Tuple(parts))
            }
            _ => Ok(ValueTerm::Expr(self.expr()?)),
        }
    }

    fn expr(&mut self) -> Result<Expr, DomainError> {
        let mut terms = Vec::new();
        let mut sign = 1;
        if self.is_punct("-") {
            self.pos += 1;
            sign = -1;
        }
        loop {
            let operand = match self.next() {
                Some(Tok::Int(n)) => Operand::Int(n),
                Some(Tok::Var(v)) => Operand::Var(v),
                _ => {
                    self.pos -= 1;
                    return self.error("expected an integer or a variable");
                }
            };
            terms.push((sign, operand));
            if self.is_punct("+") {
                sign = 1;
            } else if self.is_punct("-") {
                sign = -1;
            } else {
                break;
            }
            self.pos += 1;
        }
        Ok(Expr(terms))
    }
}

/// Name-resolution context built from the declarations.
struct Scope<'a> {
    fluents: &'a [FluentConstant],
    actions: &'a [ActionConstant],
    shapes: Vec<Option<Vec<(i64, i64)>>>,
}

impl Scope<'_> {
    fn fluent(&self, name: &str, line: usize, col: usize) -> Result<usize, DomainError> {
        self.fluents
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| DomainError::UndeclaredConstant {
                name: name.to_string(),
                line,
                col,
            })
    }

    fn action(&self, name: &str, line: usize, col: usize) -> Result<usize, DomainError> {
        self.actions
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| DomainError::UndeclaredConstant {
                name: name.to_string(),
                line,
                col,
            })
    }

    /// Integer range implied for each variable by the positions it occupies.
    fn var_ranges(
        &self,
        terms: &[&FluentTerm],
    ) -> Result<BTreeMap<String, (i64, i64)>, DomainError> {
        let mut ranges: BTreeMap<String, (i64, i64)> = BTreeMap::new();
        let mut seen: Vec<(String, usize, usize)> = Vec::new();
        let mut widen = |var: &str, lo: i64, hi: i64| {
            let entry = ranges.entry(var.to_string()).or_insert((lo, hi));
            entry.0 = entry.0.min(lo);
            entry.1 = entry.1.max(hi);
        };
        for term in terms {
            let f = self.fluent(&term.fluent, term.line, term.col)?;
            let mut vars = Vec::new();
            match &term.value {
                ValueTerm::Sym(_) => {}
                ValueTerm::Expr(e) => {
                    e.vars(&mut vars);
                    let ints: Vec<i64> = self.fluents[f]
                        .domain
                        .iter()
                        .filter_map(|v| match v {
                            Value::Int(n) => Some(*n),
                            _ => None,
                        })
                        .collect();
                    if let (Some((v, off)), Some(lo), Some(hi)) =
                        (e.shifted_var(), ints.iter().min(), ints.iter().max())
                    {
                        widen(v, lo - off, hi - off);
                    }
                }
                ValueTerm::Tuple(parts) => {
                    for (k, e) in parts.iter().enumerate() {
                        e.vars(&mut vars);
                        let bounds = match &self.shapes[f] {
                            Some(shape) => shape.get(k).copied(),
                            None => None,
                        };
                        if let (Some((v, off)), Some((lo, hi))) = (e.shifted_var(), bounds) {
                            widen(v, lo - off, hi - off);
                        }
                    }
                }
            }
            for v in vars {
                seen.push((v.to_string(), term.line, term.col));
            }
        }
        for (v, line, col) in seen {
            if !ranges.contains_key(&v) {
                return Err(DomainError::UnboundVariable { name: v, line, col });
            }
        }
        Ok(ranges)
    }

    fn ground_term(
        &self,
        term: &FluentTerm,
        subst: &BTreeMap<String, i64>,
        strict: bool,
    ) -> Result<Option<FluentAtom>, DomainError> {
        let f = self.fluent(&term.fluent, term.line, term.col)?;
        let value = match &term.value {
            ValueTerm::Sym(s) => Value::Sym(s.clone()),
            ValueTerm::Expr(e) => Value::Int(e.eval(subst)),
            ValueTerm::Tuple(parts) => Value::Tuple(parts.iter().map(|e| e.eval(subst)).collect()),
        };
        match self.fluents[f].domain.iter().position(|v| *v == value) {
            Some(idx) => Ok(Some(FluentAtom {
                fluent: f,
                value: idx,
            })),
            None if strict => Err(DomainError::ValueOutsideDomain {
                fluent: term.fluent.clone(),
                value: value.to_string(),
                line: term.line,
                col: term.col,
            }),
            None => Ok(None),
        }
    }
}

fn fluent_terms(conds: &[CondTerm]) -> impl Iterator<Item = &FluentTerm> {
    conds.iter().filter_map(|c| match c {
        CondTerm::Fluent(t) => Some(t),
        CondTerm::Action { .. } => None,
    })
}

fn substitutions(ranges: &BTreeMap<String, (i64, i64)>) -> Vec<BTreeMap<String, i64>> {
    let mut out = vec![BTreeMap::new()];
    for (var, &(lo, hi)) in ranges {
        out = out
            .into_iter()
            .flat_map(|s| {
                (lo..=hi).map(move |n| {
                    let mut s = s.clone();
                    s.insert(var.clone(), n);
                    s
                })
            })
            .collect();
    }
    out
}

pub fn parse(text: &str) -> Result<ActionDescription, DomainError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut stmts = Vec::new();
    while parser.peek().is_some() {
        stmts.push(parser.statement()?);
    }

    let mut fluents: Vec<FluentConstant> = Vec::new();
    let mut actions: Vec<ActionConstant> = Vec::new();
    let mut shapes = Vec::new();
    let mut declared: Vec<String> = Vec::new();
    let mut declare = |name: &str, line: usize, col: usize| {
        if declared.iter().any(|d| d == name) {
            return Err(DomainError::DuplicateConstant {
                name: name.to_string(),
                line,
                col,
            });
        }
        declared.push(name.to_string());
        Ok(())
    };
    for stmt in &stmts {
        match stmt {
            Stmt::Fluent {
                name,
                domain,
                line,
                col,
            } => {
                declare(name, *line, *col)?;
                let (values, shape) = match domain {
                    DomainSpec::Set(values) => (values.clone(), None),
                    DomainSpec::Cell(ranges) => {
                        let mut values = vec![Vec::new()];
                        for &(lo, hi) in ranges {
                            values = values
                                .into_iter()
                                .flat_map(|prefix: Vec<i64>| {
                                    (lo..=hi).map(move |n| {
                                        let mut p = prefix.clone();
                                        p.push(n);
                                        p
                                    })
                                })
                                .collect();
                        }
                        (
                            values.into_iter().map(Value::Tuple).collect(),
                            Some(ranges.clone()),
                        )
                    }
                };
                for (i, v) in values.iter().enumerate() {
                    if values[..i].contains(v) {
                        return Err(DomainError::Syntax {
                            line: *line,
                            col: *col,
                            msg: format!("duplicate value {v} in the domain of '{name}'"),
                        });
                    }
                }
                fluents.push(FluentConstant {
                    name: name.clone(),
                    domain: values,
                });
                shapes.push(shape);
            }
            Stmt::Action { names } => {
                for (name, line, col) in names {
                    declare(name, *line, *col)?;
                    actions.push(ActionConstant { name: name.clone() });
                }
            }
            _ => {}
        }
    }
    if fluents.is_empty() {
        let (line, col) = parser.tokens.first().map_or((1, 1), |t| (t.line, t.col));
        return Err(DomainError::Syntax {
            line,
            col,
            msg: "no fluents declared".into(),
        });
    }

    let scope = Scope {
        fluents: &fluents,
        actions: &actions,
        shapes,
    };
    let mut d = ActionDescription {
        fluents: fluents.clone(),
        actions: actions.clone(),
        static_laws: Vec::new(),
        dynamic_laws: Vec::new(),
        never: Vec::new(),
        initial: Vec::new(),
        goal: Vec::new(),
    };

    for stmt in &stmts {
        match stmt {
            Stmt::Fluent { .. } | Stmt::Action { .. } => {}
            Stmt::Static { head, cond } => {
                let mut terms: Vec<&FluentTerm> = vec![head];
                for c in cond {
                    match c {
                        CondTerm::Fluent(t) => terms.push(t),
                        CondTerm::Action { line, col, .. } => {
                            return Err(DomainError::Syntax {
                                line: *line,
                                col: *col,
                                msg: "static laws cannot mention actions".into(),
                            })
                        }
                    }
                }
                let ranges = scope.var_ranges(&terms)?;
                let strict = ranges.is_empty();
                'inst: for subst in substitutions(&ranges) {
                    let Some(h) = scope.ground_term(head, &subst, strict)? else {
                        continue;
                    };
                    let mut condition = Vec::new();
                    for t in fluent_terms(cond) {
                        match scope.ground_term(t, &subst, strict)? {
                            Some(a) => condition.push(a),
                            None => continue 'inst,
                        }
                    }
                    d.static_laws.push(StaticLaw { head: h, condition });
                }
            }
            Stmt::Dynamic { head, next, now } => {
                let head_terms: Vec<&FluentTerm> = match head {
                    HeadTerm::Single(t) => vec![t],
                    HeadTerm::Choice(ts) => ts.iter().collect(),
                };
                for c in next {
                    if let CondTerm::Action { line, col, .. } = c {
                        return Err(DomainError::Syntax {
                            line: *line,
                            col: *col,
                            msg: "actions belong in the 'after' part".into(),
                        });
                    }
                }
                let mut law_actions = Vec::new();
                for c in now {
                    if let CondTerm::Action { name, line, col } = c {
                        law_actions.push(scope.action(name, *line, *col)?);
                    }
                }
                let terms: Vec<&FluentTerm> = head_terms
                    .iter()
                    .copied()
                    .chain(fluent_terms(next))
                    .chain(fluent_terms(now))
                    .collect();
                let ranges = scope.var_ranges(&terms)?;
                let strict = ranges.is_empty();
                'inst: for subst in substitutions(&ranges) {
                    let mut heads = Vec::new();
                    for t in &head_terms {
                        match scope.ground_term(t, &subst, strict)? {
                            Some(a) => heads.push(a),
                            None => continue 'inst,
                        }
                    }
                    let mut condition = Vec::new();
                    for t in fluent_terms(next) {
                        match scope.ground_term(t, &subst, strict)? {
                            Some(a) => condition.push(a),
                            None => continue 'inst,
                        }
                    }
                    let mut fluents_now = Vec::new();
                    for t in fluent_terms(now) {
                        match scope.ground_term(t, &subst, strict)? {
                            Some(a) => fluents_now.push(a),
                            None => continue 'inst,
                        }
                    }
                    let head = match head {
                        HeadTerm::Single(_) => Effect::Single(heads[0]),
                        HeadTerm::Choice(_) => Effect::Choice(heads),
                    };
                    d.dynamic_laws.push(FluentDynamicLaw {
                        head,
                        condition,
                        precondition: Precondition {
                            fluents: fluents_now,
                            actions: law_actions.clone(),
                        },
                    });
                }
            }
            Stmt::Initially(conds) | Stmt::Goal(conds) | Stmt::Never(conds) => {
                let atoms_of = |subst: &BTreeMap<String, i64>, strict: bool| {
                    let mut out = Vec::new();
                    for c in conds {
                        match c {
                            CondTerm::Fluent(t) => match scope.ground_term(t, subst, strict)? {
                                Some(a) => out.push(a),
                                None => return Ok(None),
                            },
                            CondTerm::Action { line, col, .. } => {
                                return Err(DomainError::Syntax {
                                    line: *line,
                                    col: *col,
                                    msg: "only fluents are allowed here".into(),
                                })
                            }
                        }
                    }
                    Ok(Some(out))
                };
                let terms: Vec<&FluentTerm> = fluent_terms(conds).collect();
                let ranges = scope.var_ranges(&terms)?;
                match stmt {
                    Stmt::Never(_) => {
                        let strict = ranges.is_empty();
                        for subst in substitutions(&ranges) {
                            if let Some(atoms) = atoms_of(&subst, strict)? {
                                d.never.push(atoms);
                            }
                        }
                    }
                    _ if !ranges.is_empty() => {
                        let t = terms[0];
                        return Err(DomainError::Syntax {
                            line: t.line,
                            col: t.col,
                            msg: "variables are not allowed in initial or goal conditions".into(),
                        });
                    }
                    Stmt::Initially(_) => {
                        d.initial.extend(atoms_of(&BTreeMap::new(), true)?.unwrap_or_default())
                    }
                    _ => d.goal.extend(atoms_of(&BTreeMap::new(), true)?.unwrap_or_default()),
                }
            }
        }
    }
    Ok(d)
}
