//! Text form of series: a small parser and the matching printer.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ['^' integer]
//! atom   := integer | 'i' | variable | '(' expr ')'
//! ```
//!
//! Division is only by nonzero constants. The printer emits
//! `coef*var^e*...` terms in graded order; its output parses back to the
//! same series.

use std::collections::HashMap;

use thiserror::Error;

use crate::series::{Gq, Rational, TruncatedSeries, VariableContext};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(String),
    Ident(String),
    Op(char),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() {
            let start = k;
            while k < chars.len() && chars[k].1.is_ascii_digit() {
                k += 1;
            }
            out.push((pos, Tok::Int(chars[start..k].iter().map(|x| x.1).collect())));
        } else if c.is_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].1.is_alphanumeric() || chars[k].1 == '_' || chars[k].1 == '\'') {
                k += 1;
            }
            out.push((pos, Tok::Ident(chars[start..k].iter().map(|x| x.1).collect())));
        } else if "+-*/^()".contains(c) {
            out.push((pos, Tok::Op(c)));
            k += 1;
        } else {
            return Err(ParseError { pos, msg: format!("unexpected character '{c}'") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    ctx: &'a VariableContext,
    order: i32,
    aliases: &'a HashMap<String, String>,
}

impl Parser<'_> {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos: self.pos(), msg: msg.into() })
    }

    fn peek_op(&self, c: char) -> bool {
        matches!(self.toks.get(self.at), Some((_, Tok::Op(x))) if *x == c)
    }

    fn expr(&mut self) -> Result<TruncatedSeries, ParseError> {
        let mut neg = false;
        if self.peek_op('+') || self.peek_op('-') {
            neg = self.peek_op('-');
            self.at += 1;
        }
        let mut acc = self.term()?;
        if neg {
            acc = -acc;
        }
        while self.peek_op('+') || self.peek_op('-') {
            let minus = self.peek_op('-');
            self.at += 1;
            let t = self.term()?;
            acc = if minus { &acc - &t } else { &acc + &t };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<TruncatedSeries, ParseError> {
        let mut acc = self.factor()?;
        while self.peek_op('*') || self.peek_op('/') {
            let div = self.peek_op('/');
            self.at += 1;
            let pos = self.pos();
            let f = self.factor()?;
            if div {
                let c = f.constant_term();
                if f.num_terms() > 1 || c.is_zero() {
                    return Err(ParseError { pos, msg: "division by a non-constant or zero".into() });
                }
                acc = acc.scale(&c.inv().unwrap());
            } else {
                acc = &acc * &f;
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<TruncatedSeries, ParseError> {
        let base = self.atom()?;
        if self.peek_op('^') {
            self.at += 1;
            let Some((pos, Tok::Int(e))) = self.toks.get(self.at).cloned() else {
                return self.err("expected integer exponent");
            };
            self.at += 1;
            let e: u32 = match e.parse() {
                Ok(e) if e <= 255 => e,
                _ => return Err(ParseError { pos, msg: format!("exponent {e} too large") }),
            };
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<TruncatedSeries, ParseError> {
        let Some((pos, tok)) = self.toks.get(self.at).cloned() else {
            return self.err("unexpected end of input");
        };
        self.at += 1;
        match tok {
            Tok::Int(s) => {
                let r: Rational = s.parse().map_err(|_| ParseError { pos, msg: format!("malformed number {s}") })?;
                Ok(TruncatedSeries::constant(self.ctx, self.order, Gq::real(r)))
            }
            Tok::Ident(name) if name == "i" => Ok(TruncatedSeries::constant(self.ctx, self.order, Gq::i())),
            Tok::Ident(name) => {
                let resolved = self.aliases.get(&name).unwrap_or(&name);
                match self.ctx.index_of(resolved) {
                    Some(v) => Ok(TruncatedSeries::var(self.ctx, self.order, v)),
                    None => Err(ParseError { pos, msg: format!("unknown variable {name}") }),
                }
            }
            Tok::Op('(') => {
                let inner = self.expr()?;
                if !self.peek_op(')') {
                    return self.err("expected ')'");
                }
                self.at += 1;
                Ok(inner)
            }
            Tok::Op(c) => Err(ParseError { pos, msg: format!("unexpected '{c}'") }),
        }
    }
}

/// Parses `text` as a series of the given order over `ctx`.
pub fn parse_expression(text: &str, ctx: &VariableContext, order: i32) -> Result<TruncatedSeries, ParseError> {
    parse_expression_with_aliases(text, ctx, order, &HashMap::new())
}

/// As [`parse_expression`], resolving `aliases` (alias → context name) first.
pub fn parse_expression_with_aliases(
    text: &str,
    ctx: &VariableContext,
    order: i32,
    aliases: &HashMap<String, String>,
) -> Result<TruncatedSeries, ParseError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(ParseError { pos: 0, msg: "empty expression".into() });
    }
    let mut p = Parser { toks, at: 0, end: text.len(), ctx, order, aliases };
    let s = p.expr()?;
    if p.at < p.toks.len() {
        return p.err("trailing input");
    }
    Ok(s)
}

/// Human-readable polynomial (the stored terms only).
pub fn print_series(s: &TruncatedSeries) -> String {
    let ctx = s.context();
    let mut out = String::new();
    for (md, c) in s.terms() {
        let mono: Vec<String> = md
            .exponents()
            .enumerate()
            .filter(|(_, e)| *e > 0)
            .map(|(v, e)| if e == 1 { ctx.name(v).to_string() } else { format!("{}^{}", ctx.name(v), e) })
            .collect();
        let mono = mono.join("*");
        let coef = c.to_string();
        let (neg, coef) = match coef.strip_prefix('-') {
            Some(rest) => (true, rest.to_string()),
            None => (false, coef),
        };
        let body = if mono.is_empty() {
            coef
        } else if coef == "1" {
            mono
        } else {
            format!("{coef}*{mono}")
        };
        match (out.is_empty(), neg) {
            (true, false) => out.push_str(&body),
            (true, true) => {
                out.push('-');
                out.push_str(&body);
            }
            (false, false) => {
                out.push_str(" + ");
                out.push_str(&body);
            }
            (false, true) => {
                out.push_str(" - ");
                out.push_str(&body);
            }
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Multidegree;

    fn ctx() -> VariableContext {
        VariableContext::new(&["z1", "w1", "zeta1", "xi1"]).unwrap()
    }

    #[test]
    fn heisenberg_defining_series() {
        let s = parse_expression("w1 - xi1 - i*z1*zeta1", &ctx(), 6).unwrap();
        assert_eq!(s.num_terms(), 3);
        assert_eq!(s.coeff(&Multidegree::from_slice(&[1, 0, 1, 0])), -Gq::i());
    }

    #[test]
    fn rational_imaginary_coefficient() {
        let s = parse_expression("3/2*i*z1^2", &ctx(), 6).unwrap();
        let c = s.coeff(&Multidegree::from_slice(&[2, 0, 0, 0]));
        assert_eq!(c, Gq::new(Rational::zero(), Rational::new(3, 2)));
        let s = parse_expression("(1/2+3/4*i)*w1", &ctx(), 6).unwrap();
        assert_eq!(s.coeff(&Multidegree::from_slice(&[0, 1, 0, 0])), Gq::new(Rational::new(1, 2), Rational::new(3, 4)));
    }

    #[test]
    fn malformed_input_reports_position() {
        let e = parse_expression("z1^^2", &ctx(), 6).unwrap_err();
        assert_eq!(e.pos, 3);
        assert!(parse_expression("q1", &ctx(), 6).is_err());
    }

    #[test]
    fn printer_round_trips() {
        for text in ["w1 - xi1 - i*z1*zeta1", "-(2-3*i)*z1^3 + 5/7", "-i*w1*xi1^2 + 1/3*i"] {
            let s = parse_expression(text, &ctx(), 8).unwrap();
            let again = parse_expression(&print_series(&s), &ctx(), 8).unwrap();
            assert_eq!(s, again);
        }
    }
}
