//! Survival-regression formula DSL.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! formula := "Surv" "(" ident "," ident ")" "~" expr
//! expr    := factor ("+" factor)*
//! factor  := ident | ident "*" ident | ident "*" "(" ident ("+" ident)* ")"
//! ```
//!
//! `a*b` expands to `a + b + a:b`; `a*(b + c)` expands to `a + b + c + a:b + a:c`.
//! Only two-way interactions are supported.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("time and event variables must differ (both are `{0}`)")]
    DuplicateResponse(String),
    #[error("formula has an empty right-hand side")]
    EmptyRhs,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    MainEffect(String),
    Interaction(String, String),
}

impl Term {
    /// Column label: `x` for main effects, `a:b` for interactions.
    pub fn name(&self) -> String {
        match self {
            Term::MainEffect(v) => v.clone(),
            Term::Interaction(a, b) => format!("{a}:{b}"),
        }
    }

    pub fn involves(&self, var: &str) -> bool {
        match self {
            Term::MainEffect(v) => v == var,
            Term::Interaction(a, b) => a == var || b == var,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaSpec {
    pub time_var: String,
    pub event_var: String,
    pub terms: Vec<Term>,
}

impl FormulaSpec {
    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(Term::name).collect()
    }

    /// Variables that appear in any term, in term order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            let vars: Vec<&str> = match t {
                Term::MainEffect(v) => vec![v],
                Term::Interaction(a, b) => vec![a, b],
            };
            for v in vars {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

/// Pretty-prints in a form `parse_formula` maps back to the same spec.
impl fmt::Display for FormulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Surv({}, {}) ~ ", self.time_var, self.event_var)?;
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| match t {
                Term::MainEffect(v) => v.clone(),
                Term::Interaction(a, b) => format!("{a}*{b}"),
            })
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Tilde,
    Plus,
    Star,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '~' => Some(Tok::Tilde),
            '+' => Some(Tok::Plus),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((i, tok));
            it.next();
            continue;
        }
        if is_ident_start(c) {
            let mut s = String::new();
            while let Some(&(_, c)) = it.peek() {
                if is_ident_char(c) {
                    s.push(c);
                    it.next();
                } else {
                    break;
                }
            }
            out.push((i, Tok::Ident(s)));
            continue;
        }
        let message = if c.is_ascii_digit() {
            "identifiers must not start with a digit".to_string()
        } else {
            format!("unexpected character `{c}`")
        };
        return Err(FormulaError::Syntax { offset: i, message });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), FormulaError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String, FormulaError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }
}

/// Parses `Surv(time, event) ~ rhs` into an ordered, duplicate-free term list.
pub fn parse_formula(text: &str) -> Result<FormulaSpec, FormulaError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        end: text.len(),
    };

    match p.peek() {
        Some(Tok::Ident(s)) if s == "Surv" => p.pos += 1,
        _ => return p.err("expected `Surv(`"),
    }
    p.expect(Tok::LParen, "`(`")?;
    let time_var = p.ident()?;
    p.expect(Tok::Comma, "`,`")?;
    let event_var = p.ident()?;
    p.expect(Tok::RParen, "`)`")?;
    p.expect(Tok::Tilde, "`~`")?;
    if time_var == event_var {
        return Err(FormulaError::DuplicateResponse(time_var));
    }
    if p.peek().is_none() {
        return Err(FormulaError::EmptyRhs);
    }

    let mut mains: Vec<String> = Vec::new();
    let mut inters: Vec<(String, String)> = Vec::new();
    let push_main = |mains: &mut Vec<String>, v: &str| {
        if !mains.iter().any(|m| m == v) {
            mains.push(v.to_string());
        }
    };

    loop {
        let a = p.ident()?;
        push_main(&mut mains, &a);
        if p.peek() == Some(&Tok::Star) {
            p.pos += 1;
            let rhs: Vec<String> = if p.peek() == Some(&Tok::LParen) {
                p.pos += 1;
                let mut vs = vec![p.ident()?];
                while p.peek() == Some(&Tok::Plus) {
                    p.pos += 1;
                    vs.push(p.ident()?);
                }
                p.expect(Tok::RParen, "`)` or `+`")?;
                vs
            } else {
                vec![p.ident()?]
            };
            if p.peek() == Some(&Tok::Star) {
                return p.err("only two-way interactions are supported");
            }
            for b in rhs {
                if b == a {
                    return p.err(format!("`{a}` cannot interact with itself"));
                }
                push_main(&mut mains, &b);
                // a*b and b*a name the same column
                if !inters
                    .iter()
                    .any(|(x, y)| (x == &a && y == &b) || (x == &b && y == &a))
                {
                    inters.push((a.clone(), b));
                }
            }
        }
        match p.peek() {
            None => break,
            Some(Tok::Plus) => p.pos += 1,
            Some(_) => return p.err("expected `+` or end of formula"),
        }
    }

    let mut terms: Vec<Term> = mains.into_iter().map(Term::MainEffect).collect();
    terms.extend(inters.into_iter().map(|(a, b)| Term::Interaction(a, b)));
    Ok(FormulaSpec {
        time_var,
        event_var,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn main(v: &str) -> Term {
        Term::MainEffect(v.into())
    }
    fn inter(a: &str, b: &str) -> Term {
        Term::Interaction(a.into(), b.into())
    }

    #[test]
    fn single_term() {
        let f = parse_formula("Surv(y, delta) ~ A").unwrap();
        assert_eq!(f.time_var, "y");
        assert_eq!(f.event_var, "delta");
        assert_eq!(f.terms, vec![main("A")]);
    }

    #[test]
    fn star_expands_main_effects_first() {
        let f = parse_formula("Surv(y, delta) ~ A*age + karno").unwrap();
        assert_eq!(
            f.terms,
            vec![main("A"), main("age"), main("karno"), inter("A", "age")]
        );
    }

    #[test]
    fn distributed_star() {
        let f = parse_formula("Surv(y, delta) ~ A*(age + karno)").unwrap();
        assert_eq!(
            f.terms,
            vec![
                main("A"),
                main("age"),
                main("karno"),
                inter("A", "age"),
                inter("A", "karno")
            ]
        );
    }

    #[test]
    fn duplicates_merge() {
        let a = parse_formula("Surv(y,d)~A*b").unwrap();
        let b = parse_formula("Surv(y,d) ~ A + b + A*b").unwrap();
        assert_eq!(a, b);
        let c = parse_formula("Surv(y,d) ~ A + A + b*A + A*b").unwrap();
        assert_eq!(c.terms, vec![main("A"), main("b"), inter("b", "A")]);
    }

    #[test]
    fn whitespace_and_dotted_identifiers() {
        let f = parse_formula("  Surv ( t.1 ,ev_2 )~x.a*  _z ").unwrap();
        assert_eq!(f.time_var, "t.1");
        assert_eq!(f.terms, vec![main("x.a"), main("_z"), inter("x.a", "_z")]);
    }

    #[test]
    fn errors_carry_offsets() {
        match parse_formula("Surv(y, delta) ~ A*b*c") {
            Err(FormulaError::Syntax { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("unexpected {other:?}"),
        }
        match parse_formula("Surv(y, delta) ~ 1x") {
            Err(FormulaError::Syntax { offset, .. }) => assert_eq!(offset, 17),
            other => panic!("unexpected {other:?}"),
        }
        match parse_formula("Surv(y, delta) ~ A +") {
            Err(FormulaError::Syntax { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_formula("Cox(y, delta) ~ A"),
            Err(FormulaError::Syntax { offset: 0, .. })
        ));
    }

    #[test]
    fn response_errors() {
        assert_eq!(
            parse_formula("Surv(y, y) ~ A"),
            Err(FormulaError::DuplicateResponse("y".into()))
        );
        assert_eq!(parse_formula("Surv(y, d) ~ "), Err(FormulaError::EmptyRhs));
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "Surv(y, delta) ~ A",
            "Surv(y, delta) ~ A*(age + karno) + celltypeadeno",
            "Surv(y, delta) ~ karno + A*age",
        ] {
            let f = parse_formula(text).unwrap();
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn variables_in_term_order() {
        let f = parse_formula("Surv(y, d) ~ A*(x + z)").unwrap();
        assert_eq!(f.variables(), vec!["A", "x", "z"]);
        assert!(f.terms[3].involves("A"));
        assert!(!f.terms[2].involves("A"));
    }
}
