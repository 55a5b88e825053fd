//! Direct evaluation of co-safe formulas on finite words.
//!
//! Strong finite-trace semantics: atoms need a letter to exist, `X φ` needs
//! a successor position, `F`/`U` need their witness inside the word. `true`
//! holds on every word, including the empty one. Under this semantics a
//! finite word satisfies a co-safe formula iff it is a good prefix, and
//! satisfaction is preserved by extension.
//!
//! This evaluator shares no code with the automaton construction and serves
//! as its test oracle.

use super::Formula;
use crate::error::Error;
use crate::mdp::Letter;

/// Does `word` (letters as bitsets over `props`) satisfy `f`?
pub fn satisfies(f: &Formula, props: &[String], word: &[Letter]) -> Result<bool, Error> {
    for a in f.atoms() {
        if !props.contains(&a) {
            return Err(Error::UnknownAtom(a));
        }
    }
    Ok(sat(f, props, word, 0))
}

fn holds(props: &[String], letter: Letter, atom: &str) -> bool {
    let idx = props.iter().position(|p| p == atom).expect("atom checked");
    letter.contains(idx)
}

fn sat(f: &Formula, props: &[String], w: &[Letter], i: usize) -> bool {
    let n = w.len();
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(a) => i < n && holds(props, w[i], a),
        Formula::NegAtom(a) => i < n && !holds(props, w[i], a),
        Formula::And(a, b) => sat(a, props, w, i) && sat(b, props, w, i),
        Formula::Or(a, b) => sat(a, props, w, i) || sat(b, props, w, i),
        Formula::Next(a) => i < n && sat(a, props, w, i + 1),
        Formula::Eventually(a) => (i..n).any(|j| sat(a, props, w, j)),
        Formula::Until(a, b) => {
            for j in i..n {
                if sat(b, props, w, j) {
                    return true;
                }
                if !sat(a, props, w, j) {
                    return false;
                }
            }
            false
        }
    }
}
