//! Recursive-descent parser for the concrete formula syntax.
//!
//! ```text
//! or     := and ('|' and)*
//! and    := until ('&' until)*
//! until  := unary ('U' until)?
//! unary  := '!' unary | 'X' unary | 'F' unary | primary
//! primary:= ident | 'true' | 'false' | '(' or ')'
//! ident  := [a-z][a-z0-9_]*
//! ```

use std::fmt;

use thiserror::Error;

use super::Formula;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    /// `!` applied to something other than an atom or literal.
    NegationNotOnAtom,
    /// A recognised LTL operator outside the co-safe fragment, such as `G`.
    UnsupportedOperator(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected `{t}`"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of formula"),
            ParseErrorKind::NegationNotOnAtom => {
                write!(f, "negation not on atom (formula must be in positive normal form)")
            }
            ParseErrorKind::UnsupportedOperator(op) => {
                write!(f, "unsupported operator `{op}` (only X, F and U are co-safe)")
            }
        }
    }
}

/// Parse failure; `position` is the 0-based byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("formula error at position {position}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Not,
    And,
    Or,
    Next,
    Eventually,
    Until,
    LParen,
    RParen,
    True,
    False,
    Ident(String),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Not => "!",
            Tok::And => "&",
            Tok::Or => "|",
            Tok::Next => "X",
            Tok::Eventually => "F",
            Tok::Until => "U",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Ident(s) => s,
        };
        f.write_str(s)
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |kind, position| Err(ParseError { kind, position });
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '!' => out.push((Tok::Not, start)),
            '&' => out.push((Tok::And, start)),
            '|' => out.push((Tok::Or, start)),
            '(' => out.push((Tok::LParen, start)),
            ')' => out.push((Tok::RParen, start)),
            'X' => out.push((Tok::Next, start)),
            'F' => out.push((Tok::Eventually, start)),
            'U' => out.push((Tok::Until, start)),
            'G' | 'R' | 'W' | 'M' => {
                return err(ParseErrorKind::UnsupportedOperator(c.to_string()), start)
            }
            '-' | '<' | '=' | '[' => {
                let rest = &text[start..];
                for op in ["<->", "->", "=>", "[]", "<>"] {
                    if rest.starts_with(op) {
                        return err(ParseErrorKind::UnsupportedOperator(op.to_string()), start);
                    }
                }
                return err(ParseErrorKind::UnexpectedChar(c), start);
            }
            'a'..='z' => {
                while i < bytes.len() && matches!(bytes[i], b'a'..=b'z' | b'0'..=b'9' | b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push((tok, start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or(c);
                return err(ParseErrorKind::UnexpectedChar(ch), start);
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn fail<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError { kind, position: self.offset() })
    }

    fn bump(&mut self) {
        self.pos += 1;
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            let rhs = self.until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.unary()?;
        if self.peek() == Some(&Tok::Until) {
            self.bump();
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Tok::Not) => {
                let at = self.offset();
                self.bump();
                match self.unary()? {
                    Formula::Atom(a) => Ok(Formula::NegAtom(a)),
                    Formula::True => Ok(Formula::False),
                    Formula::False => Ok(Formula::True),
                    _ => Err(ParseError { kind: ParseErrorKind::NegationNotOnAtom, position: at }),
                }
            }
            Some(Tok::Next) => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Some(Tok::Eventually) => {
                self.bump();
                Ok(Formula::eventually(self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.fail(ParseErrorKind::UnexpectedEnd);
        };
        match tok {
            Tok::Ident(a) => {
                self.bump();
                Ok(Formula::Atom(a))
            }
            Tok::True => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::False => {
                self.bump();
                Ok(Formula::False)
            }
            Tok::LParen => {
                self.bump();
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return match self.peek() {
                        None => self.fail(ParseErrorKind::UnexpectedEnd),
                        Some(t) => self.fail(ParseErrorKind::UnexpectedToken(t.to_string())),
                    };
                }
                self.bump();
                Ok(inner)
            }
            other => self.fail(ParseErrorKind::UnexpectedToken(other.to_string())),
        }
    }
}

/// Parses a co-safe formula, rejecting anything outside positive normal form.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let f = p.or()?;
    if let Some(t) = p.peek() {
        return p.fail(ParseErrorKind::UnexpectedToken(t.to_string()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Formula {
        Formula::atom(s)
    }

    #[test]
    fn until_with_negated_atom() {
        assert_eq!(parse("!crash U goal").unwrap(), Formula::until(Formula::neg_atom("crash"), a("goal")));
    }

    #[test]
    fn eventually_single() {
        assert_eq!(parse("F goal").unwrap(), Formula::eventually(a("goal")));
    }

    #[test]
    fn negated_until_is_rejected() {
        let e = parse("!(a U b)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NegationNotOnAtom);
        assert_eq!(e.position, 0);
    }

    #[test]
    fn globally_is_unsupported() {
        let e = parse("a & G b").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnsupportedOperator("G".into()));
        assert_eq!(e.position, 4);
        assert!(matches!(parse("a -> b").unwrap_err().kind, ParseErrorKind::UnsupportedOperator(_)));
    }

    #[test]
    fn precedence_and_associativity() {
        // | binds loosest, then &, then U (right assoc), then unary.
        assert_eq!(
            parse("a | b & c").unwrap(),
            Formula::or(a("a"), Formula::and(a("b"), a("c")))
        );
        assert_eq!(
            parse("a U b U c").unwrap(),
            Formula::until(a("a"), Formula::until(a("b"), a("c")))
        );
        assert_eq!(
            parse("a U b & c").unwrap(),
            Formula::and(Formula::until(a("a"), a("b")), a("c"))
        );
        assert_eq!(
            parse("X a U F b").unwrap(),
            Formula::until(Formula::next(a("a")), Formula::eventually(a("b")))
        );
        assert_eq!(
            parse("(a | b) & c").unwrap(),
            Formula::and(Formula::or(a("a"), a("b")), a("c"))
        );
    }

    #[test]
    fn negated_literals_fold() {
        assert_eq!(parse("!true").unwrap(), Formula::False);
        assert_eq!(parse("!!a").unwrap_err().kind, ParseErrorKind::NegationNotOnAtom);
        assert_eq!(parse("!X a").unwrap_err().kind, ParseErrorKind::NegationNotOnAtom);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse("a & ").unwrap_err();
        assert_eq!(e, ParseError { kind: ParseErrorKind::UnexpectedEnd, position: 4 });
        let e = parse("(a | b").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedEnd);
        let e = parse("a b").unwrap_err();
        assert_eq!(e, ParseError { kind: ParseErrorKind::UnexpectedToken("b".into()), position: 2 });
        let e = parse("a $ b").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedChar('$'));
        assert_eq!(e.position, 2);
    }

    #[test]
    fn display_reparses() {
        for text in ["!crash U goal", "X (a | F b) & c", "a U (b U !c)", "true | false"] {
            let f = parse(text).unwrap();
            assert_eq!(parse(&f.to_string()).unwrap(), f);
        }
    }
}
