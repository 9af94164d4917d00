//! Stable-model search for normalized programs.
//!
//! The program is compiled to its Clark completion: one variable per atom,
//! one per distinct multi-literal body, and clauses stating that a rule
//! fires when its body holds and that every true atom has a true body. The
//! models of the completion are the supported models; the search enumerates
//! them with unit propagation over two watched literals, first-UIP clause
//! learning with non-chronological backjumping, and a blocking clause over
//! the decision literals after each model. Each total candidate is handed to
//! a callback which checks it against the reduct, so unfounded (positive
//! loop) candidates are rejected there and then blocked as well.

use std::collections::HashMap;

use super::{Head, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Lit(u32);

impl Lit {
    fn new(var: usize, positive: bool) -> Self {
        Lit(((var as u32) << 1) | (!positive) as u32)
    }

    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    fn positive(self) -> bool {
        self.0 & 1 == 0
    }

    fn negate(self) -> Self {
        Lit(self.0 ^ 1)
    }

    fn code(self) -> usize {
        self.0 as usize
    }
}

const TRUE: i8 = 1;
const FALSE: i8 = -1;
const UNDEF: i8 = 0;
const NO_REASON: u32 = u32::MAX;

#[inline]
fn value(assigns: &[i8], lit: Lit) -> i8 {
    let v = assigns[lit.var()];
    if lit.positive() {
        v
    } else {
        -v
    }
}

/// Indexed max-heap of variables keyed by activity.
#[derive(Debug, Default)]
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<usize>,
}

impl VarHeap {
    const ABSENT: usize = usize::MAX;

    fn with_vars(n: usize) -> Self {
        VarHeap {
            heap: (0..n as u32).collect(),
            pos: (0..n).collect(),
        }
    }

    fn contains(&self, v: usize) -> bool {
        self.pos[v] != Self::ABSENT
    }

    fn insert(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.pos[v] = self.heap.len();
        self.heap.push(v as u32);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap.swap_remove(0) as usize;
        self.pos[top] = Self::ABSENT;
        if !self.heap.is_empty() {
            self.pos[self.heap[0] as usize] = 0;
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn bumped(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            self.sift_up(self.pos[v], act);
        }
    }

    fn better(a: u32, b: u32, act: &[f64]) -> bool {
        let (x, y) = (act[a as usize], act[b as usize]);
        x > y || (x == y && a < b)
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !Self::better(v, self.heap[parent], act) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.pos[self.heap[i] as usize] = i;
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i;
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let left = 2 * i + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && Self::better(self.heap[right], self.heap[left], act) {
                right
            } else {
                left
            };
            if !Self::better(self.heap[child], v, act) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.pos[self.heap[i] as usize] = i;
            i = child;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i;
    }
}

fn luby(mut i: u64) -> u64 {
    // Luby sequence 1 1 2 1 1 2 4 ... (0-based index).
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != i {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size;
    }
    1 << seq
}

pub(super) struct Search {
    num_atoms: usize,
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<u32>>,
    assigns: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    heap: VarHeap,
    phase: Vec<bool>,
    seen: Vec<bool>,
    unsat: bool,
}

impl Search {
    pub(super) fn new(program: &Program) -> Self {
        let num_atoms = program.atoms.len();
        let mut bodies: HashMap<Vec<Lit>, usize> = HashMap::new();
        let mut body_clauses: Vec<Vec<Lit>> = Vec::new();
        let mut supports: Vec<Vec<Lit>> = vec![Vec::new(); num_atoms];
        let mut is_fact = vec![false; num_atoms];
        let mut rule_clauses: Vec<Vec<Lit>> = Vec::new();
        let mut num_vars = num_atoms;

        for rule in &program.rules {
            let mut lits: Vec<Lit> = rule
                .body
                .iter()
                .map(|l| Lit::new(l.atom.index(), !l.negated))
                .collect();
            lits.sort();
            lits.dedup();
            let contradictory = lits.windows(2).any(|w| w[0].var() == w[1].var());
            match &rule.head {
                Head::Constraint => {
                    if !contradictory {
                        rule_clauses.push(lits.iter().map(|l| l.negate()).collect());
                    }
                }
                Head::Atom(h) => {
                    let head = Lit::new(h.index(), true);
                    if contradictory {
                        continue;
                    }
                    match lits.len() {
                        0 => is_fact[h.index()] = true,
                        1 => {
                            rule_clauses.push(vec![lits[0].negate(), head]);
                            supports[h.index()].push(lits[0]);
                        }
                        _ => {
                            let var = *bodies.entry(lits.clone()).or_insert_with(|| {
                                let var = num_vars;
                                num_vars += 1;
                                let body = Lit::new(var, true);
                                for &l in &lits {
                                    body_clauses.push(vec![body.negate(), l]);
                                }
                                let mut all = vec![body];
                                all.extend(lits.iter().map(|l| l.negate()));
                                body_clauses.push(all);
                                var
                            });
                            let body = Lit::new(var, true);
                            rule_clauses.push(vec![body.negate(), head]);
                            supports[h.index()].push(body);
                        }
                    }
                }
                Head::Choice(_) => panic!("choice rules must be normalized before solving"),
            }
        }

        let mut search = Search {
            num_atoms,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            assigns: vec![UNDEF; num_vars],
            level: vec![0; num_vars],
            reason: vec![NO_REASON; num_vars],
            trail: Vec::with_capacity(num_vars),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; num_vars],
            var_inc: 1.0,
            heap: VarHeap::with_vars(num_vars),
            phase: vec![false; num_vars],
            seen: vec![false; num_vars],
            unsat: false,
        };

        for (atom, fact) in is_fact.iter().enumerate() {
            if *fact {
                search.add_clause(vec![Lit::new(atom, true)]);
            } else {
                let mut clause = vec![Lit::new(atom, false)];
                clause.extend(supports[atom].iter().copied());
                search.add_clause(clause);
            }
        }
        for clause in body_clauses.into_iter().chain(rule_clauses) {
            search.add_clause(clause);
        }
        search
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    /// Adds a clause before search starts (decision level 0).
    fn add_clause(&mut self, mut lits: Vec<Lit>) {
        if self.unsat {
            return;
        }
        lits.sort();
        lits.dedup();
        if lits.windows(2).any(|w| w[0].var() == w[1].var()) {
            return;
        }
        match lits.len() {
            0 => self.unsat = true,
            1 => match value(&self.assigns, lits[0]) {
                TRUE => {}
                FALSE => self.unsat = true,
                _ => self.enqueue(lits[0], NO_REASON),
            },
            _ => {
                self.attach(lits);
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[lits[0].code()].push(cref);
        self.watches[lits[1].code()].push(cref);
        self.clauses.push(lits);
        cref
    }

    fn enqueue(&mut self, lit: Lit, reason: u32) {
        let v = lit.var();
        self.assigns[v] = if lit.positive() { TRUE } else { FALSE };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(lit);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = p.negate();
            let mut ws = std::mem::take(&mut self.watches[false_lit.code()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let cref = ws[i];
                i += 1;
                let clause = &mut self.clauses[cref as usize];
                if clause[0] == false_lit {
                    clause.swap(0, 1);
                }
                if value(&self.assigns, clause[0]) == TRUE {
                    ws[j] = cref;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.len() {
                    if value(&self.assigns, clause[k]) != FALSE {
                        clause.swap(1, k);
                        let w = clause[1].code();
                        self.watches[w].push(cref);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = cref;
                j += 1;
                let first = clause[0];
                if value(&self.assigns, first) == FALSE {
                    conflict = Some(cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        i += 1;
                        j += 1;
                    }
                } else {
                    self.enqueue(first, cref);
                }
            }
            ws.truncate(j);
            self.watches[false_lit.code()] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn backtrack(&mut self, target: usize) {
        if self.decision_level() <= target {
            return;
        }
        let stop = self.trail_lim[target];
        for idx in (stop..self.trail.len()).rev() {
            let lit = self.trail[idx];
            let v = lit.var();
            self.phase[v] = lit.positive();
            self.assigns[v] = UNDEF;
            self.reason[v] = NO_REASON;
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(stop);
        self.trail_lim.truncate(target);
        self.qhead = stop;
    }

    fn bump(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v, &self.activity);
    }

    /// First-UIP conflict analysis; returns the learnt clause (asserting
    /// literal first) and the level to backjump to.
    fn analyze(&mut self, mut cref: u32) -> (Vec<Lit>, usize) {
        let current = self.decision_level() as u32;
        let mut learnt = vec![Lit(0)];
        let mut pending = 0usize;
        let mut skip_first = false;
        let mut idx = self.trail.len();
        loop {
            let lits = self.clauses[cref as usize].clone();
            for &q in &lits[skip_first as usize..] {
                let v = q.var();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump(v);
                    if self.level[v] >= current {
                        pending += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var()] {
                    break;
                }
            }
            let p = self.trail[idx];
            self.seen[p.var()] = false;
            pending -= 1;
            if pending == 0 {
                learnt[0] = p.negate();
                break;
            }
            cref = self.reason[p.var()];
            skip_first = true;
        }
        for l in &learnt[1..] {
            self.seen[l.var()] = false;
        }
        let mut back = 0;
        if learnt.len() > 1 {
            let mut best = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var()] > self.level[learnt[best].var()] {
                    best = k;
                }
            }
            learnt.swap(1, best);
            back = self.level[learnt[1].var()] as usize;
        }
        (learnt, back)
    }

    fn learn(&mut self, learnt: Vec<Lit>) {
        let assert = learnt[0];
        if learnt.len() == 1 {
            self.enqueue(assert, NO_REASON);
        } else {
            let cref = self.attach(learnt);
            self.enqueue(assert, cref);
        }
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v] == UNDEF {
                return Some(Lit::new(v, self.phase[v]));
            }
        }
        None
    }

    /// Blocks the current total assignment by negating its decisions and
    /// flips the deepest one. Returns false when no decision is left.
    fn block_current(&mut self) -> bool {
        let depth = self.decision_level();
        if depth == 0 {
            return false;
        }
        let clause: Vec<Lit> = (0..depth)
            .rev()
            .map(|lvl| self.trail[self.trail_lim[lvl]].negate())
            .collect();
        self.backtrack(depth - 1);
        self.learn(clause);
        true
    }

    /// Enumerates supported models; `on_model` receives the truth value of
    /// every atom and returns whether the candidate is accepted. Stops after
    /// `limit` accepted candidates.
    pub(super) fn enumerate(&mut self, limit: Option<usize>, mut on_model: impl FnMut(&[bool]) -> bool) {
        if self.unsat || limit == Some(0) {
            return;
        }
        let mut accepted = 0usize;
        let mut conflicts = 0u64;
        let mut restarts = 0u64;
        let mut budget = 100 * luby(0);
        loop {
            if let Some(confl) = self.propagate() {
                let top = self.clauses[confl as usize]
                    .iter()
                    .map(|l| self.level[l.var()] as usize)
                    .max()
                    .unwrap_or(0);
                if top == 0 {
                    return;
                }
                if top < self.decision_level() {
                    self.backtrack(top);
                }
                let (learnt, back) = self.analyze(confl);
                self.backtrack(back);
                self.learn(learnt);
                self.var_inc /= 0.95;
                conflicts += 1;
                continue;
            }
            if conflicts >= budget {
                conflicts = 0;
                restarts += 1;
                budget = 100 * luby(restarts);
                self.backtrack(0);
                continue;
            }
            match self.pick_branch() {
                Some(lit) => {
                    self.trail_lim.push(self.trail.len());
                    self.enqueue(lit, NO_REASON);
                }
                None => {
                    let assignment: Vec<bool> = self.assigns[..self.num_atoms]
                        .iter()
                        .map(|&v| v == TRUE)
                        .collect();
                    if on_model(&assignment) {
                        accepted += 1;
                        if limit.is_some_and(|l| accepted >= l) {
                            return;
                        }
                    }
                    if !self.block_current() {
                        return;
                    }
                }
            }
        }
    }
}

/// Checks a total assignment against the reduct: the least model of the
/// rules not blocked by a negative literal must reproduce the assignment.
/// Constraints are not consulted; the completion already enforces them.
pub(super) struct StabilityCheck {
    heads: Vec<u32>,
    positive: Vec<Vec<u32>>,
    negative: Vec<Vec<u32>>,
    occurs: Vec<Vec<u32>>,
}

impl StabilityCheck {
    pub(super) fn new(program: &Program) -> Self {
        let n = program.atoms.len();
        let mut check = StabilityCheck {
            heads: Vec::new(),
            positive: Vec::new(),
            negative: Vec::new(),
            occurs: vec![Vec::new(); n],
        };
        for rule in &program.rules {
            let Head::Atom(h) = rule.head else { continue };
            let idx = check.heads.len() as u32;
            let mut pos: Vec<u32> = rule
                .body
                .iter()
                .filter(|l| !l.negated)
                .map(|l| l.atom.0)
                .collect();
            pos.sort_unstable();
            pos.dedup();
            for &a in &pos {
                check.occurs[a as usize].push(idx);
            }
            check.heads.push(h.0);
            check.positive.push(pos);
            check.negative.push(
                rule.body
                    .iter()
                    .filter(|l| l.negated)
                    .map(|l| l.atom.0)
                    .collect(),
            );
        }
        check
    }

    pub(super) fn is_stable(&self, m: &[bool]) -> bool {
        let mut remaining: Vec<u32> = Vec::with_capacity(self.heads.len());
        let mut queue = Vec::new();
        for r in 0..self.heads.len() {
            let blocked = self.negative[r].iter().any(|&a| m[a as usize]);
            let count = if blocked {
                u32::MAX
            } else {
                self.positive[r].len() as u32
            };
            if count == 0 {
                queue.push(r as u32);
            }
            remaining.push(count);
        }
        let mut derived = vec![false; m.len()];
        let mut total = 0usize;
        while let Some(r) = queue.pop() {
            let h = self.heads[r as usize] as usize;
            if derived[h] {
                continue;
            }
            if !m[h] {
                return false;
            }
            derived[h] = true;
            total += 1;
            for &o in &self.occurs[h] {
                let c = &mut remaining[o as usize];
                if *c != u32::MAX {
                    *c -= 1;
                    if *c == 0 {
                        queue.push(o);
                    }
                }
            }
        }
        total == m.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luby_prefix() {
        let seq: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn heap_orders_by_activity() {
        let act = vec![0.5, 3.0, 1.0, 3.0];
        let mut heap = VarHeap::with_vars(0);
        heap.pos = vec![VarHeap::ABSENT; 4];
        for v in 0..4 {
            heap.insert(v, &act);
        }
        let order: Vec<usize> = std::iter::from_fn(|| heap.pop(&act)).collect();
        assert_eq!(order, vec![1, 3, 2, 0]);
    }
}
