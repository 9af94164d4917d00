//! Ground propositional logic programs and their stable models.
//!
//! A [`Program`] holds normal rules, choice rules with cardinality bounds and
//! integrity constraints over an interned [`AtomTable`]. Choice rules are
//! lowered to normal rules by [`normalize_choices`] so that the reduct is the
//! only place where stability is defined: [`is_stable`] checks that an
//! interpretation is the least model of its own reduct.
//!
//! [`solve`] enumerates stable models with a conflict-driven search over the
//! completion of the normalized program (see [`solver`]); every candidate the
//! search produces is re-checked against the reduct before being reported.

mod solver;
pub mod text;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use itertools::Itertools;
use thiserror::Error;

pub use text::parse_program;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AspError {
    #[error("choice rule {rule}: bounds {lower}..{upper} invalid for {candidates} candidates")]
    ChoiceBoundsInvalid {
        rule: usize,
        lower: u32,
        upper: u32,
        candidates: usize,
    },
    #[error("rule {0} still contains a default-negated literal")]
    NotPositive(usize),
    #[error("rule {0} is a choice rule; normalize the program first")]
    NotNormalized(usize),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Interned atom identifier. Equality is identity within one [`AtomTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(pub u32);

impl Atom {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Bijection between atom names and ids.
///
/// Atoms created by [`AtomTable::fresh_aux`] are auxiliary: they are hidden
/// from the models returned by [`solve`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AtomTable {
    names: Vec<String>,
    aux: Vec<bool>,
    index: HashMap<String, Atom>,
}

impl AtomTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> Atom {
        if let Some(&atom) = self.index.get(name) {
            return atom;
        }
        self.push(name.to_string(), false)
    }

    /// Creates a new auxiliary atom whose name does not collide with any
    /// existing one.
    pub fn fresh_aux(&mut self, base: &str) -> Atom {
        let mut name = format!("_{base}");
        let mut n = 0;
        while self.index.contains_key(&name) {
            n += 1;
            name = format!("_{base}#{n}");
        }
        self.push(name, true)
    }

    fn push(&mut self, name: String, aux: bool) -> Atom {
        let atom = Atom(self.names.len() as u32);
        self.index.insert(name.clone(), atom);
        self.names.push(name);
        self.aux.push(aux);
        atom
    }

    pub fn get(&self, name: &str) -> Option<Atom> {
        self.index.get(name).copied()
    }

    pub fn name(&self, atom: Atom) -> &str {
        &self.names[atom.index()]
    }

    pub fn is_aux(&self, atom: Atom) -> bool {
        self.aux[atom.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom> {
        (0..self.names.len() as u32).map(Atom)
    }
}

/// An atom or its default negation (`not a`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            atom,
            negated: false,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal {
            atom,
            negated: true,
        }
    }

    /// Truth of the literal under a two-valued interpretation.
    pub fn holds(&self, m: &Interpretation) -> bool {
        m.contains(self.atom) != self.negated
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceHead {
    pub lower: u32,
    pub upper: u32,
    pub candidates: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Atom(Atom),
    Choice(ChoiceHead),
    /// Empty head: the body must not hold.
    Constraint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn is_fact(&self) -> bool {
        matches!(self.head, Head::Atom(_)) && self.body.is_empty()
    }

    pub fn is_positive(&self) -> bool {
        self.body.iter().all(|l| !l.negated)
    }

    pub fn body_holds(&self, m: &Interpretation) -> bool {
        self.body.iter().all(|l| l.holds(m))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub atoms: AtomTable,
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn atom(&mut self, name: &str) -> Atom {
        self.atoms.intern(name)
    }

    pub fn add_rule(&mut self, head: Atom, body: Vec<Literal>) {
        self.rules.push(Rule {
            head: Head::Atom(head),
            body,
        });
    }

    pub fn add_fact(&mut self, head: Atom) {
        self.add_rule(head, Vec::new());
    }

    pub fn add_constraint(&mut self, body: Vec<Literal>) {
        self.rules.push(Rule {
            head: Head::Constraint,
            body,
        });
    }

    pub fn add_choice(&mut self, lower: u32, upper: u32, candidates: Vec<Atom>, body: Vec<Literal>) {
        self.rules.push(Rule {
            head: Head::Choice(ChoiceHead {
                lower,
                upper,
                candidates,
            }),
            body,
        });
    }

    /// Adds constraints rejecting every interpretation in which `body` holds
    /// and the number of true `atoms` lies outside `lower..=upper`.
    ///
    /// The bound is expanded into plain constraints: one per subset of
    /// `upper + 1` atoms that are all true, and one per subset of
    /// `k - lower + 1` atoms that are all false.
    pub fn add_cardinality_constraint(
        &mut self,
        lower: u32,
        upper: u32,
        atoms: &[Atom],
        body: &[Literal],
    ) {
        expand_cardinality(&mut self.rules, lower, upper, atoms, body);
    }

    pub fn has_choices(&self) -> bool {
        self.rules
            .iter()
            .any(|r| matches!(r.head, Head::Choice(_)))
    }

    pub fn is_positive(&self) -> bool {
        self.rules.iter().all(Rule::is_positive)
    }

    pub fn display_interpretation(&self, m: &Interpretation) -> String {
        let names: Vec<&str> = m.iter().map(|a| self.atoms.name(a)).collect();
        format!("{{{}}}", names.join(", "))
    }
}

fn expand_cardinality(
    rules: &mut Vec<Rule>,
    lower: u32,
    upper: u32,
    atoms: &[Atom],
    body: &[Literal],
) {
    let k = atoms.len();
    let upper = upper as usize;
    let lower = lower as usize;
    if upper < k {
        for subset in atoms.iter().combinations(upper + 1) {
            let mut lits = body.to_vec();
            lits.extend(subset.into_iter().map(|&a| Literal::pos(a)));
            rules.push(Rule {
                head: Head::Constraint,
                body: lits,
            });
        }
    }
    if lower > 0 {
        if lower > k {
            rules.push(Rule {
                head: Head::Constraint,
                body: body.to_vec(),
            });
            return;
        }
        for subset in atoms.iter().combinations(k - lower + 1) {
            let mut lits = body.to_vec();
            lits.extend(subset.into_iter().map(|&a| Literal::neg(a)));
            rules.push(Rule {
                head: Head::Constraint,
                body: lits,
            });
        }
    }
}

/// A set of atoms, ordered by id. The derived `Ord` is lexicographic over
/// the sorted ids, which is the order [`solve`] reports models in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interpretation(BTreeSet<Atom>);

impl Interpretation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, atom: Atom) -> bool {
        self.0.contains(&atom)
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        self.0.insert(atom)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Atom> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &Interpretation) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<Atom> for Interpretation {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        Interpretation(iter.into_iter().collect())
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().map(|a| a.0).join(", "))
    }
}

/// Lowers every choice rule to normal rules plus constraints.
///
/// `L {c1..ck} U :- B` becomes, for each candidate, `ci :- B, not ci'` and
/// `ci' :- B, not ci` with a fresh auxiliary complement `ci'`, followed by
/// the expanded cardinality constraints for `[L, U]` guarded by `B`.
pub fn normalize_choices(program: &Program) -> Result<Program, AspError> {
    if !program.has_choices() {
        return Ok(program.clone());
    }
    let mut atoms = program.atoms.clone();
    let mut rules = Vec::with_capacity(program.rules.len());
    for (idx, rule) in program.rules.iter().enumerate() {
        let Head::Choice(choice) = &rule.head else {
            rules.push(rule.clone());
            continue;
        };
        let k = choice.candidates.len();
        if k == 0 || choice.lower > choice.upper || choice.upper as usize > k {
            return Err(AspError::ChoiceBoundsInvalid {
                rule: idx,
                lower: choice.lower,
                upper: choice.upper,
                candidates: k,
            });
        }
        for &c in &choice.candidates {
            let base = format!("not_{}", atoms.name(c));
            let complement = atoms.fresh_aux(&base);
            let mut chosen = rule.body.clone();
            chosen.push(Literal::neg(complement));
            rules.push(Rule {
                head: Head::Atom(c),
                body: chosen,
            });
            let mut skipped = rule.body.clone();
            skipped.push(Literal::neg(c));
            rules.push(Rule {
                head: Head::Atom(complement),
                body: skipped,
            });
        }
        expand_cardinality(
            &mut rules,
            choice.lower,
            choice.upper,
            &choice.candidates,
            &rule.body,
        );
    }
    Ok(Program { atoms, rules })
}

/// The Gelfond-Lifschitz reduct of a normalized program with respect to `m`.
///
/// Rules with a body literal `not b` where `b` is in `m` are deleted; the
/// remaining default-negated literals are dropped. Choice rules, which have
/// no reduct of this form, are passed through untouched.
pub fn reduct(program: &Program, m: &Interpretation) -> Program {
    let rules = program
        .rules
        .iter()
        .filter(|r| {
            matches!(r.head, Head::Choice(_))
                || !r.body.iter().any(|l| l.negated && m.contains(l.atom))
        })
        .map(|r| match r.head {
            Head::Choice(_) => r.clone(),
            _ => Rule {
                head: r.head.clone(),
                body: r.body.iter().filter(|l| !l.negated).copied().collect(),
            },
        })
        .collect();
    Program {
        atoms: program.atoms.clone(),
        rules,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeastModel {
    pub model: Interpretation,
    /// Indices of constraints whose body holds in `model`.
    pub violated: Vec<usize>,
}

impl LeastModel {
    pub fn is_consistent(&self) -> bool {
        self.violated.is_empty()
    }
}

/// Least fixed point of the immediate-consequence operator of a
/// negation-free program. Constraints do not derive anything; they are
/// reported in [`LeastModel::violated`] when their body holds.
pub fn least_model(program: &Program) -> Result<LeastModel, AspError> {
    let n = program.atoms.len();
    let mut remaining = vec![0usize; program.rules.len()];
    let mut watchers: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut derived = vec![false; n];
    let mut queue = Vec::new();

    for (idx, rule) in program.rules.iter().enumerate() {
        if matches!(rule.head, Head::Choice(_)) {
            return Err(AspError::NotNormalized(idx));
        }
        if !rule.is_positive() {
            return Err(AspError::NotPositive(idx));
        }
        let Head::Atom(_) = rule.head else { continue };
        let body: BTreeSet<Atom> = rule.body.iter().map(|l| l.atom).collect();
        remaining[idx] = body.len();
        for a in body {
            watchers[a.index()].push(idx);
        }
        if remaining[idx] == 0 {
            queue.push(idx);
        }
    }

    while let Some(idx) = queue.pop() {
        let Head::Atom(head) = program.rules[idx].head else {
            unreachable!()
        };
        if derived[head.index()] {
            continue;
        }
        derived[head.index()] = true;
        for &r in &watchers[head.index()] {
            remaining[r] -= 1;
            if remaining[r] == 0 {
                queue.push(r);
            }
        }
    }

    let model: Interpretation = (0..n as u32)
        .map(Atom)
        .filter(|a| derived[a.index()])
        .collect();
    let violated = program
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.head == Head::Constraint && r.body_holds(&model))
        .map(|(i, _)| i)
        .collect();
    Ok(LeastModel { model, violated })
}

/// `m` is stable iff it is the least model of its reduct and it violates no
/// constraint of the program.
pub fn is_stable(program: &Program, m: &Interpretation) -> bool {
    let reduced = reduct(program, m);
    let Ok(lm) = least_model(&reduced) else {
        return false;
    };
    if lm.model != *m {
        return false;
    }
    !program
        .rules
        .iter()
        .any(|r| r.head == Head::Constraint && r.body_holds(m))
}

/// Enumerates stable models, projected onto non-auxiliary atoms, in
/// lexicographic order of their sorted atom ids.
///
/// With `max_models` set the search stops after that many models; the
/// returned subset is deterministic for a given program.
pub fn solve(program: &Program, max_models: Option<usize>) -> Result<Vec<Interpretation>, AspError> {
    let normalized = normalize_choices(program)?;
    let mut models = Vec::new();
    let mut search = solver::Search::new(&normalized);
    let checker = solver::StabilityCheck::new(&normalized);
    search.enumerate(max_models, |assignment| {
        if !checker.is_stable(assignment) {
            return false;
        }
        models.push(
            normalized
                .atoms
                .atoms()
                .filter(|&a| assignment[a.index()] && !normalized.atoms.is_aux(a))
                .collect::<Interpretation>(),
        );
        true
    });
    models.sort();
    models.dedup();
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interp(p: &Program, names: &[&str]) -> Interpretation {
        names.iter().map(|n| p.atoms.get(n).unwrap()).collect()
    }

    fn names(p: &Program, models: &[Interpretation]) -> Vec<Vec<String>> {
        models
            .iter()
            .map(|m| m.iter().map(|a| p.atoms.name(a).to_string()).collect())
            .collect()
    }

    /// Brute-force stable models over every subset of the atom table.
    fn brute_force(p: &Program) -> Vec<Interpretation> {
        let n = p.atoms.len();
        (0u64..1 << n)
            .map(|mask| {
                (0..n as u32)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(Atom)
                    .collect::<Interpretation>()
            })
            .filter(|m| is_stable(p, m))
            .collect()
    }

    #[test]
    fn choice_rule_picks_exactly_one_successor() {
        let p = parse_program("s0. a. 1 {s1; s2; s3} 1 :- s0, a.").unwrap();
        let models = solve(&p, None).unwrap();
        let mut got = names(&p, &models);
        got.iter_mut().for_each(|m| m.sort());
        got.sort();
        assert_eq!(
            got,
            vec![
                vec!["a", "s0", "s1"],
                vec!["a", "s0", "s2"],
                vec!["a", "s0", "s3"]
            ]
        );
    }

    #[test]
    fn normalize_without_choices_is_identity() {
        let p = parse_program("a :- not b. b :- not a. :- a, b.").unwrap();
        assert_eq!(normalize_choices(&p).unwrap(), p);
    }

    #[test]
    fn bodiless_optional_choice() {
        let p = parse_program("0 {c1} 1.").unwrap();
        let lowered = normalize_choices(&p).unwrap();
        assert_eq!(lowered.atoms.len(), 2);
        // Oracle: brute force over the 4 interpretations of the lowered program.
        let stable = brute_force(&lowered);
        let projected: Vec<Vec<String>> = stable
            .iter()
            .map(|m| {
                m.iter()
                    .filter(|&a| !lowered.atoms.is_aux(a))
                    .map(|a| lowered.atoms.name(a).to_string())
                    .collect()
            })
            .collect();
        assert_eq!(projected.len(), 2);
        assert!(projected.contains(&vec![]));
        assert!(projected.contains(&vec!["c1".to_string()]));
        let solved = solve(&p, None).unwrap();
        assert_eq!(names(&p, &solved), vec![Vec::<String>::new(), vec!["c1".into()]]);
    }

    #[test]
    fn invalid_choice_bounds() {
        let p = parse_program("2 {a; b} 1.").unwrap();
        assert!(matches!(
            normalize_choices(&p),
            Err(AspError::ChoiceBoundsInvalid { .. })
        ));
        let p = parse_program("1 {a; b} 3.").unwrap();
        assert!(matches!(
            solve(&p, None),
            Err(AspError::ChoiceBoundsInvalid { .. })
        ));
    }

    #[test]
    fn reduct_examples() {
        let p = parse_program("a :- not b.").unwrap();
        let m = interp(&p, &["a"]);
        let r = reduct(&p, &m);
        assert_eq!(r.rules.len(), 1);
        assert!(r.rules[0].is_fact());

        let p = parse_program("a :- not b. b :- not a.").unwrap();
        let m = interp(&p, &["a"]);
        let r = reduct(&p, &m);
        assert_eq!(r.rules.len(), 1);
        assert_eq!(r.rules[0].head, Head::Atom(p.atoms.get("a").unwrap()));
        assert!(r.rules[0].body.is_empty());

        let p = parse_program("a. b :- a. c :- a, b.").unwrap();
        let m = interp(&p, &["c"]);
        assert_eq!(reduct(&p, &m), p);
    }

    #[test]
    fn least_model_examples() {
        let p = parse_program("a. b :- a.").unwrap();
        let lm = least_model(&p).unwrap();
        assert_eq!(lm.model, interp(&p, &["a", "b"]));
        assert!(lm.is_consistent());

        let lm = least_model(&Program::new()).unwrap();
        assert!(lm.model.is_empty());

        let p = parse_program("a :- b. b :- a.").unwrap();
        assert!(least_model(&p).unwrap().model.is_empty());

        let p = parse_program("a :- not b.").unwrap();
        assert_eq!(least_model(&p), Err(AspError::NotPositive(0)));

        let p = parse_program("a. :- a.").unwrap();
        assert_eq!(least_model(&p).unwrap().violated, vec![1]);
    }

    #[test]
    fn stability_examples() {
        // Oracle values come from brute force over all interpretations.
        let p = parse_program("a :- not b. b :- not a.").unwrap();
        assert_eq!(brute_force(&p), vec![interp(&p, &["a"]), interp(&p, &["b"])]);
        assert!(is_stable(&p, &interp(&p, &["a"])));

        let p = parse_program("a :- not a.").unwrap();
        assert!(brute_force(&p).is_empty());
        assert!(!is_stable(&p, &interp(&p, &["a"])));

        let p = parse_program("a.").unwrap();
        assert!(!is_stable(&p, &Interpretation::new()));
    }

    #[test]
    fn solve_examples() {
        let p = parse_program("a.").unwrap();
        assert_eq!(solve(&p, None).unwrap(), vec![interp(&p, &["a"])]);

        let p = parse_program("a :- not b. b :- not a.").unwrap();
        assert_eq!(
            solve(&p, None).unwrap(),
            vec![interp(&p, &["a"]), interp(&p, &["b"])]
        );
        assert_eq!(solve(&p, Some(1)).unwrap().len(), 1);

        let p = parse_program("a :- not a.").unwrap();
        assert!(solve(&p, None).unwrap().is_empty());
    }

    #[test]
    fn positive_loops_are_not_self_supporting() {
        // Supported but unfounded: {a, b} satisfies the completion.
        let p = parse_program("a :- b. b :- a. c :- not a.").unwrap();
        assert_eq!(solve(&p, None).unwrap(), vec![interp(&p, &["c"])]);
        assert_eq!(brute_force(&p), vec![interp(&p, &["c"])]);
    }

    #[test]
    fn cardinality_constraint_expansion() {
        let mut p = Program::new();
        let atoms: Vec<Atom> = ["x", "y", "z"].iter().map(|n| p.atom(n)).collect();
        p.add_choice(0, 3, atoms.clone(), vec![]);
        p.add_cardinality_constraint(1, 2, &atoms, &[]);
        let models = solve(&p, None).unwrap();
        // 2^3 subsets minus the empty and the full one.
        assert_eq!(models.len(), 6);
        assert!(models.iter().all(|m| (1..=2).contains(&m.len())));
    }

    #[test]
    fn empty_constraint_is_unsatisfiable() {
        let mut p = Program::new();
        p.add_constraint(vec![]);
        assert!(solve(&p, None).unwrap().is_empty());
    }
}
