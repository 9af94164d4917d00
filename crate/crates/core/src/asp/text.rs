//! A small textual rule format, used for tests and debugging.
//!
//! ```text
//! % comment
//! a.                      % fact
//! b :- a, not c.          % normal rule
//! :- b, c.                % constraint
//! 1 {x; y; z} 1 :- b.     % choice with bounds (defaults 0 and k)
//! -c :- not c.            % classical negation
//! ```

use super::{AspError, Atom, Literal, Program};

pub fn parse_program(text: &str) -> Result<Program, AspError> {
    let mut program = Program::new();
    for (line_no, stmt) in statements(text) {
        parse_statement(&mut program, stmt.trim()).map_err(|msg| AspError::Syntax {
            line: line_no,
            msg,
        })?;
    }
    Ok(program)
}

/// Splits on `.` outside parentheses, remembering the line each statement
/// starts on.
fn statements(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start_line = 1;
    let mut depth = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('%').next().unwrap_or("");
        for ch in line.chars() {
            if current.trim().is_empty() {
                start_line = idx + 1;
            }
            match ch {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                '.' if depth == 0 => {
                    out.push((start_line, std::mem::take(&mut current)));
                    continue;
                }
                _ => {}
            }
            current.push(ch);
        }
        current.push(' ');
    }
    if !current.trim().is_empty() {
        out.push((start_line, current));
    }
    out
}

fn parse_statement(program: &mut Program, stmt: &str) -> Result<(), String> {
    let (head, body) = match stmt.find(":-") {
        Some(pos) => (stmt[..pos].trim(), Some(stmt[pos + 2..].trim())),
        None => (stmt, None),
    };
    enum Parsed {
        Constraint,
        Atom(Atom),
        Choice(u32, Option<u32>, Vec<Atom>),
    }
    // Head atoms are interned before body atoms so ids follow reading order.
    let parsed = if head.is_empty() {
        Parsed::Constraint
    } else if let (Some(open), Some(close)) = (head.find('{'), head.rfind('}')) {
        let candidates: Vec<Atom> = split_top(&head[open + 1..close], ';')
            .into_iter()
            .map(|a| parse_atom(program, a.trim()))
            .collect::<Result<_, _>>()?;
        let lower = parse_bound(&head[..open])?.unwrap_or(0);
        let upper = parse_bound(&head[close + 1..])?;
        Parsed::Choice(lower, upper, candidates)
    } else {
        Parsed::Atom(parse_atom(program, head)?)
    };
    let body = match body {
        Some(b) if !b.is_empty() => split_top(b, ',')
            .into_iter()
            .map(|lit| parse_literal(program, lit.trim()))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err("empty body after ':-'".into()),
        None => Vec::new(),
    };
    match parsed {
        Parsed::Constraint if body.is_empty() => return Err("empty statement".into()),
        Parsed::Constraint => program.add_constraint(body),
        Parsed::Atom(head) => program.add_rule(head, body),
        Parsed::Choice(lower, upper, candidates) => {
            let upper = upper.unwrap_or(candidates.len() as u32);
            program.add_choice(lower, upper, candidates, body);
        }
    }
    Ok(())
}

fn parse_bound(text: &str) -> Result<Option<u32>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    text.parse()
        .map(Some)
        .map_err(|_| format!("invalid bound '{text}'"))
}

fn parse_literal(program: &mut Program, text: &str) -> Result<Literal, String> {
    match text.strip_prefix("not ") {
        Some(rest) => Ok(Literal::neg(parse_atom(program, rest.trim())?)),
        None => Ok(Literal::pos(parse_atom(program, text)?)),
    }
}

/// `-a` is classical negation: its own atom, kept apart from `a` by the
/// constraint `:- a, -a`.
fn parse_atom(program: &mut Program, text: &str) -> Result<Atom, String> {
    if let Some(positive) = text.strip_prefix('-') {
        let known = program.atoms.get(text).is_some();
        let pos = parse_atom(program, positive)?;
        let neg = program.atom(text);
        if !known {
            program.add_constraint(vec![Literal::pos(pos), Literal::pos(neg)]);
        }
        return Ok(neg);
    }
    let valid = text
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        && !text.contains(char::is_whitespace);
    if !valid {
        return Err(format!("invalid atom '{text}'"));
    }
    Ok(program.atom(text))
}

fn split_top(text: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            c if c == sep && depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}
