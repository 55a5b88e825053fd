//! Formula → NFA (syntactic unfolding) → DFA (subset construction) →
//! completion → minimization.
//!
//! An NFA state is a conjunction of pending obligations. Unfolding a formula
//! yields a disjunction of terms `(positive literals, negative literals,
//! next obligations)` via the expansion laws
//! `F φ ≡ φ ∨ X F φ` and `φ U ψ ≡ ψ ∨ (φ ∧ X(φ U ψ))`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::Formula;
use crate::error::Error;
use crate::mdp::{Letter, MAX_ATOMIC_PROPS};

/// Completed deterministic automaton over `2^AP`. Accepting states absorb.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dfa {
    props: Vec<String>,
    n_states: usize,
    initial: usize,
    /// `delta[s * n_letters + letter]`
    delta: Vec<usize>,
    accepting: Vec<bool>,
}

impl Dfa {
    /// Assembles a DFA from raw tables, checking totality and absorption.
    pub fn from_parts(
        props: Vec<String>,
        initial: usize,
        delta: Vec<usize>,
        accepting: Vec<bool>,
    ) -> Result<Self, Error> {
        if props.len() > MAX_ATOMIC_PROPS {
            return Err(Error::TooManyProps { count: props.len(), limit: MAX_ATOMIC_PROPS });
        }
        let n_states = accepting.len();
        let n_letters = 1usize << props.len();
        if n_states == 0 || initial >= n_states || delta.len() != n_states * n_letters {
            return Err(Error::Model("malformed automaton tables".into()));
        }
        if delta.iter().any(|&t| t >= n_states) {
            return Err(Error::Model("automaton transition target out of range".into()));
        }
        for s in (0..n_states).filter(|&s| accepting[s]) {
            if (0..n_letters).any(|a| delta[s * n_letters + a] != s) {
                return Err(Error::Model(format!("accepting state s{s} is not absorbing")));
            }
        }
        Ok(Self { props, n_states, initial, delta, accepting })
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_letters(&self) -> usize {
        1 << self.props.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, s: usize) -> bool {
        self.accepting[s]
    }

    pub fn accepting_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.accepting[s]).collect()
    }

    pub fn step(&self, s: usize, letter: Letter) -> usize {
        self.delta[s * self.n_letters() + letter.0 as usize]
    }

    /// Builds a letter from proposition names; unknown names are errors.
    pub fn letter<S: AsRef<str>>(&self, names: &[S]) -> Result<Letter, Error> {
        let mut l = Letter::EMPTY;
        for n in names {
            let i = self
                .props
                .iter()
                .position(|p| p == n.as_ref())
                .ok_or_else(|| Error::UnknownAtom(n.as_ref().to_string()))?;
            l = l.with(i);
        }
        Ok(l)
    }
}

/// True iff running `word` from the initial state visits an accepting state.
pub fn accepts_prefix(d: &Dfa, word: &[Letter]) -> bool {
    let mut s = d.initial;
    if d.accepting[s] {
        return true;
    }
    for &l in word {
        s = d.step(s, l);
        if d.accepting[s] {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Node {
    True,
    False,
    Atom(usize),
    NegAtom(usize),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Next(Box<Node>),
    Eventually(Box<Node>),
    Until(Box<Node>, Box<Node>),
}

impl Node {
    fn lower(f: &Formula, props: &[String]) -> Result<Node, Error> {
        let idx = |a: &String| {
            props.iter().position(|p| p == a).ok_or_else(|| Error::UnknownAtom(a.clone()))
        };
        let b = |f: &Formula| Node::lower(f, props).map(Box::new);
        Ok(match f {
            Formula::True => Node::True,
            Formula::False => Node::False,
            Formula::Atom(a) => Node::Atom(idx(a)?),
            Formula::NegAtom(a) => Node::NegAtom(idx(a)?),
            Formula::And(x, y) => Node::And(b(x)?, b(y)?),
            Formula::Or(x, y) => Node::Or(b(x)?, b(y)?),
            Formula::Next(x) => Node::Next(b(x)?),
            Formula::Eventually(x) => Node::Eventually(b(x)?),
            Formula::Until(x, y) => Node::Until(b(x)?, b(y)?),
        })
    }

    /// Holds on the empty word; such an obligation holds on every word.
    fn nullable(&self) -> bool {
        match self {
            Node::True => true,
            Node::And(a, b) => a.nullable() && b.nullable(),
            Node::Or(a, b) => a.nullable() || b.nullable(),
            _ => false,
        }
    }
}

type Obligations = BTreeSet<Node>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Term {
    pos: u32,
    neg: u32,
    next: Obligations,
}

impl Term {
    fn empty() -> Self {
        Term { pos: 0, neg: 0, next: Obligations::new() }
    }

    fn conjoin(&self, other: &Term) -> Option<Term> {
        let pos = self.pos | other.pos;
        let neg = self.neg | other.neg;
        if pos & neg != 0 {
            return None;
        }
        let mut next = self.next.clone();
        next.extend(other.next.iter().cloned());
        Some(Term { pos, neg, next })
    }

    fn matches(&self, letter: u32) -> bool {
        letter & self.pos == self.pos && letter & self.neg == 0
    }
}

fn cross(a: &[Term], b: &[Term]) -> Vec<Term> {
    let mut out: Vec<Term> = a.iter().flat_map(|x| b.iter().filter_map(move |y| x.conjoin(y))).collect();
    out.sort();
    out.dedup();
    out
}

fn expand(n: &Node) -> Vec<Term> {
    match n {
        Node::True => vec![Term::empty()],
        Node::False => vec![],
        Node::Atom(i) => vec![Term { pos: 1 << i, ..Term::empty() }],
        Node::NegAtom(i) => vec![Term { neg: 1 << i, ..Term::empty() }],
        Node::And(a, b) => cross(&expand(a), &expand(b)),
        Node::Or(a, b) => {
            let mut v = expand(a);
            v.extend(expand(b));
            v
        }
        Node::Next(a) => vec![Term { next: [(**a).clone()].into(), ..Term::empty() }],
        Node::Eventually(a) => {
            let mut v = expand(a);
            v.push(Term { next: [n.clone()].into(), ..Term::empty() });
            v
        }
        Node::Until(a, b) => {
            let mut v = expand(b);
            let stay = Term { next: [n.clone()].into(), ..Term::empty() };
            v.extend(cross(&expand(a), &[stay]));
            v
        }
    }
}

/// Nondeterministic automaton whose states are obligation sets.
struct Nfa {
    states: Vec<Obligations>,
    index: HashMap<Obligations, usize>,
    terms: Vec<Vec<Term>>,
}

impl Nfa {
    fn new() -> Self {
        Nfa { states: Vec::new(), index: HashMap::new(), terms: Vec::new() }
    }

    fn intern(&mut self, obligations: Obligations) -> usize {
        if let Some(&i) = self.index.get(&obligations) {
            return i;
        }
        let mut terms = vec![Term::empty()];
        for ob in &obligations {
            terms = cross(&terms, &expand(ob));
        }
        let i = self.states.len();
        self.index.insert(obligations.clone(), i);
        self.states.push(obligations);
        self.terms.push(terms);
        i
    }

    fn accepting(&self, i: usize) -> bool {
        self.states[i].iter().all(Node::nullable)
    }

    fn successors(&mut self, i: usize, letter: u32) -> BTreeSet<usize> {
        let targets: Vec<Obligations> = self.terms[i]
            .iter()
            .filter(|t| t.matches(letter))
            .map(|t| t.next.clone())
            .collect();
        targets.into_iter().map(|o| self.intern(o)).collect()
    }
}

/// Translates a co-safe formula into a completed, minimized DFA over `2^ap`.
///
/// States are numbered canonically: the initial state is `s0`, accepting
/// states follow, then the remaining states in breadth-first order.
pub fn to_dfa(f: &Formula, ap: &[String]) -> Result<Dfa, Error> {
    if ap.len() > MAX_ATOMIC_PROPS {
        return Err(Error::TooManyProps { count: ap.len(), limit: MAX_ATOMIC_PROPS });
    }
    let root = Node::lower(f, ap)?;
    let n_letters = 1usize << ap.len();

    let mut nfa = Nfa::new();
    let start = nfa.intern([root].into());

    // Subset construction; accepting subsets are not expanded since
    // completion makes them absorbing anyway.
    let mut subsets: Vec<BTreeSet<usize>> = vec![[start].into()];
    let mut index: BTreeMap<BTreeSet<usize>, usize> = BTreeMap::new();
    index.insert(subsets[0].clone(), 0);
    let mut accepting = Vec::new();
    let mut delta: Vec<usize> = Vec::new();
    let mut cursor = 0;
    while cursor < subsets.len() {
        let subset = subsets[cursor].clone();
        let acc = subset.iter().any(|&q| nfa.accepting(q));
        accepting.push(acc);
        for letter in 0..n_letters {
            let target = if acc {
                cursor
            } else {
                let mut next = BTreeSet::new();
                for &q in &subset {
                    next.extend(nfa.successors(q, letter as u32));
                }
                match index.get(&next) {
                    Some(&i) => i,
                    None => {
                        let i = subsets.len();
                        index.insert(next.clone(), i);
                        subsets.push(next);
                        i
                    }
                }
            };
            delta.push(target);
        }
        cursor += 1;
    }

    let (n_states, initial, delta, accepting) = minimize(subsets.len(), 0, &delta, &accepting, n_letters);
    Dfa::from_parts(ap.to_vec(), initial, delta, accepting).map(|d| {
        debug_assert_eq!(d.n_states, n_states);
        d
    })
}

/// Moore partition refinement followed by canonical renumbering.
fn minimize(
    n: usize,
    initial: usize,
    delta: &[usize],
    accepting: &[bool],
    n_letters: usize,
) -> (usize, usize, Vec<usize>, Vec<bool>) {
    let mut class: Vec<usize> = accepting.iter().map(|&a| a as usize).collect();
    let mut n_classes = class.iter().copied().collect::<BTreeSet<_>>().len();
    loop {
        let mut signatures: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut next = vec![0; n];
        for s in 0..n {
            let mut sig = Vec::with_capacity(n_letters + 1);
            sig.push(class[s]);
            sig.extend((0..n_letters).map(|a| class[delta[s * n_letters + a]]));
            let k = signatures.len();
            next[s] = *signatures.entry(sig).or_insert(k);
        }
        let refined = signatures.len();
        class = next;
        if refined == n_classes {
            break;
        }
        n_classes = refined;
    }

    // Breadth-first order over classes from the initial class.
    let mut order = Vec::with_capacity(n_classes);
    let mut seen = vec![false; n_classes];
    let mut rep = vec![usize::MAX; n_classes];
    for s in 0..n {
        if rep[class[s]] == usize::MAX {
            rep[class[s]] = s;
        }
    }
    let mut queue = VecDeque::from([class[initial]]);
    seen[class[initial]] = true;
    while let Some(c) = queue.pop_front() {
        order.push(c);
        for a in 0..n_letters {
            let t = class[delta[rep[c] * n_letters + a]];
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    let init_class = order[0];
    let mut ranked = vec![init_class];
    ranked.extend(order.iter().copied().filter(|&c| c != init_class && accepting[rep[c]]));
    ranked.extend(order.iter().copied().filter(|&c| c != init_class && !accepting[rep[c]]));
    let mut new_id = vec![usize::MAX; n_classes];
    for (i, &c) in ranked.iter().enumerate() {
        new_id[c] = i;
    }
    let m = ranked.len();
    let mut out_delta = vec![0; m * n_letters];
    let mut out_acc = vec![false; m];
    for (i, &c) in ranked.iter().enumerate() {
        out_acc[i] = accepting[rep[c]];
        for a in 0..n_letters {
            out_delta[i * n_letters + a] = new_id[class[delta[rep[c] * n_letters + a]]];
        }
    }
    (m, 0, out_delta, out_acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse, semantics};

    fn ap(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn words(n_letters: u32, max_len: usize) -> Vec<Vec<Letter>> {
        let mut all = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for w in &frontier {
                for l in 0..n_letters {
                    let mut v: Vec<Letter> = w.clone();
                    v.push(Letter(l));
                    next.push(v);
                }
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        all
    }

    #[test]
    fn crash_until_goal_has_three_states() {
        let props = ap(&["crash", "goal"]);
        let d = to_dfa(&parse("!crash U goal").unwrap(), &props).unwrap();
        assert_eq!(d.n_states(), 3);
        assert_eq!(d.initial(), 0);
        assert_eq!(d.accepting_states(), vec![1]);
        let none = d.letter::<&str>(&[]).unwrap();
        let crash = d.letter(&["crash"]).unwrap();
        let goal = d.letter(&["goal"]).unwrap();
        let both = d.letter(&["crash", "goal"]).unwrap();
        assert_eq!(d.step(0, none), 0);
        assert_eq!(d.step(0, goal), 1);
        assert_eq!(d.step(0, both), 1);
        assert_eq!(d.step(0, crash), 2);
        for l in [none, crash, goal, both] {
            assert_eq!(d.step(1, l), 1);
            assert_eq!(d.step(2, l), 2);
        }
        assert!(accepts_prefix(&d, &[none, goal]));
        assert!(!accepts_prefix(&d, &[crash, goal]));
    }

    #[test]
    fn true_is_a_single_accepting_state() {
        let d = to_dfa(&Formula::True, &ap(&["a"])).unwrap();
        assert_eq!(d.n_states(), 1);
        assert!(d.is_accepting(0));
        assert!(accepts_prefix(&d, &[]));
    }

    #[test]
    fn false_is_a_single_rejecting_state() {
        let d = to_dfa(&Formula::False, &ap(&["a"])).unwrap();
        assert_eq!(d.n_states(), 1);
        assert!(!d.is_accepting(0));
    }

    #[test]
    fn next_matches_language_oracle() {
        let props = ap(&["a"]);
        let f = parse("X a").unwrap();
        let d = to_dfa(&f, &props).unwrap();
        for w in words(2, 4) {
            let expected = w.len() >= 2 && w[1].contains(0);
            assert_eq!(accepts_prefix(&d, &w), expected, "{w:?}");
            assert_eq!(semantics::satisfies(&f, &props, &w).unwrap(), expected);
        }
    }

    #[test]
    fn unknown_atom_is_rejected() {
        assert!(matches!(
            to_dfa(&parse("F rock").unwrap(), &ap(&["goal"])),
            Err(Error::UnknownAtom(a)) if a == "rock"
        ));
    }

    #[test]
    fn too_many_props_is_rejected() {
        let props: Vec<String> = (0..17).map(|i| format!("p{i}")).collect();
        assert!(matches!(to_dfa(&Formula::True, &props), Err(Error::TooManyProps { count: 17, .. })));
    }

    #[test]
    fn from_parts_rejects_non_absorbing_acceptance() {
        assert!(Dfa::from_parts(ap(&["a"]), 0, vec![1, 1, 0, 1], vec![false, true]).is_err());
        assert!(Dfa::from_parts(ap(&["a"]), 0, vec![1, 1, 1, 1], vec![false, true]).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn formula(depth: u32) -> BoxedStrategy<Formula> {
            let leaf = prop_oneof![
                Just(Formula::True),
                Just(Formula::False),
                prop::sample::select(vec!["p", "q"]).prop_map(Formula::atom),
                prop::sample::select(vec!["p", "q"]).prop_map(Formula::neg_atom),
            ];
            if depth == 0 {
                return leaf.boxed();
            }
            let sub = formula(depth - 1);
            prop_oneof![
                leaf,
                (sub.clone(), sub.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (sub.clone(), sub.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                sub.clone().prop_map(Formula::next),
                sub.clone().prop_map(Formula::eventually),
                (sub.clone(), sub).prop_map(|(a, b)| Formula::until(a, b)),
            ]
            .boxed()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn language_agrees_with_semantics(f in formula(3)) {
                let props = ap(&["p", "q"]);
                let d = to_dfa(&f, &props).unwrap();
                for w in words(4, 4) {
                    prop_assert_eq!(
                        accepts_prefix(&d, &w),
                        semantics::satisfies(&f, &props, &w).unwrap(),
                        "formula {} word {:?}", f, w
                    );
                }
                for s in d.accepting_states() {
                    for l in 0..4 {
                        prop_assert_eq!(d.step(s, Letter(l)), s);
                    }
                }
            }
        }
    }
}
