use std::sync::Arc;

use num_traits::FromPrimitive;

use crate::chart::Chart;
use crate::scalar::{Rat, Scalar};

use super::{AlgebraError, Poly};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    At,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: usize,
}

pub(crate) fn err(pos: usize, msg: impl Into<String>) -> AlgebraError {
    AlgebraError::Parse {
        pos,
        msg: msg.into(),
    }
}

pub(crate) fn lex(text: &str) -> Result<Vec<Token>, AlgebraError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let pos = i;
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
            }
            b'+' => {
                toks.push(Token { tok: Tok::Plus, pos });
                i += 1;
            }
            b'-' => {
                toks.push(Token { tok: Tok::Minus, pos });
                i += 1;
            }
            b'*' => {
                toks.push(Token { tok: Tok::Star, pos });
                i += 1;
            }
            b'/' => {
                toks.push(Token { tok: Tok::Slash, pos });
                i += 1;
            }
            b'^' => {
                toks.push(Token { tok: Tok::Caret, pos });
                i += 1;
            }
            b'@' => {
                toks.push(Token { tok: Tok::At, pos });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let lit = &text[start..i];
                let value: i64 = lit
                    .parse()
                    .map_err(|_| err(start, format!("integer literal `{lit}` too large")))?;
                toks.push(Token {
                    tok: Tok::Int(value),
                    pos,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'~' {
                    i += 1;
                }
                toks.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    pos,
                });
            }
            _ => {
                return Err(err(pos, format!("unexpected character `{}`", b as char)));
            }
        }
    }
    Ok(toks)
}

/// Parse a standalone rational literal such as `3/2` or `-1`.
pub fn parse_rational(text: &str) -> Result<Rat, AlgebraError> {
    let toks = lex(text)?;
    let mut p = Cursor { toks: &toks, at: 0 };
    let neg = p.eat(&Tok::Minus);
    let num = p.expect_int()?;
    let value = if p.eat(&Tok::Slash) {
        let den = p.expect_int()?;
        if den == 0 {
            return Err(err(0, "zero denominator"));
        }
        Rat::from_i64(num).unwrap() / Rat::from_i64(den).unwrap()
    } else {
        Rat::from_i64(num).unwrap()
    };
    if p.at != toks.len() {
        return Err(err(p.peek_pos(), "trailing input after rational"));
    }
    Ok(if neg { -value } else { value })
}

pub(crate) struct Cursor<'a> {
    pub toks: &'a [Token],
    pub at: usize,
}

impl<'a> Cursor<'a> {
    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.tok)
    }

    pub fn peek_pos(&self) -> usize {
        self.toks
            .get(self.at)
            .map(|t| t.pos)
            .unwrap_or_else(|| self.toks.last().map(|t| t.pos + 1).unwrap_or(0))
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_int(&mut self) -> Result<i64, AlgebraError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.at += 1;
                Ok(n)
            }
            _ => Err(err(self.peek_pos(), "expected an integer")),
        }
    }

    /// Signed exponent after `^`: an optional minus then an integer.
    pub fn expect_exponent(&mut self) -> Result<i32, AlgebraError> {
        let neg = self.eat(&Tok::Minus);
        let n = self.expect_int()?;
        let n = i32::try_from(n).map_err(|_| err(self.peek_pos(), "exponent too large"))?;
        Ok(if neg { -n } else { n })
    }
}

/// expr := ['-'] term (('+'|'-') term)*
/// term := factor ('*' factor)*
/// factor := INT ['/' INT] | IDENT ['^' ['-'] INT]
pub(super) fn parse_scalar<C: Scalar>(
    chart: &Arc<Chart>,
    text: &str,
) -> Result<Poly<C>, AlgebraError> {
    let toks = lex(text)?;
    let mut p = Cursor { toks: &toks, at: 0 };
    let poly = parse_expr(chart, &mut p)?;
    if p.at != toks.len() {
        return Err(err(p.peek_pos(), "trailing input"));
    }
    Ok(poly)
}

pub(crate) fn parse_expr<C: Scalar>(
    chart: &Arc<Chart>,
    p: &mut Cursor<'_>,
) -> Result<Poly<C>, AlgebraError> {
    let mut negate = p.eat(&Tok::Minus);
    let mut acc = Poly::zero(chart);
    loop {
        let term = parse_term(chart, p)?;
        acc = if negate { acc.sub(&term) } else { acc.add(&term) };
        match p.peek() {
            Some(Tok::Plus) => {
                p.at += 1;
                negate = false;
            }
            Some(Tok::Minus) => {
                p.at += 1;
                negate = true;
            }
            _ => break,
        }
    }
    Ok(acc)
}

fn parse_term<C: Scalar>(
    chart: &Arc<Chart>,
    p: &mut Cursor<'_>,
) -> Result<Poly<C>, AlgebraError> {
    let mut acc = parse_factor(chart, p)?;
    while p.eat(&Tok::Star) {
        let f = parse_factor(chart, p)?;
        acc = acc.mul(&f);
    }
    Ok(acc)
}

fn parse_factor<C: Scalar>(
    chart: &Arc<Chart>,
    p: &mut Cursor<'_>,
) -> Result<Poly<C>, AlgebraError> {
    let pos = p.peek_pos();
    match p.peek().cloned() {
        Some(Tok::Int(n)) => {
            p.at += 1;
            let num = C::from_i64(n).ok_or_else(|| err(pos, "integer out of range"))?;
            if p.eat(&Tok::Slash) {
                let dpos = p.peek_pos();
                let d = p.expect_int()?;
                if d == 0 {
                    return Err(err(dpos, "zero denominator"));
                }
                let den = C::from_i64(d).ok_or_else(|| err(dpos, "integer out of range"))?;
                Ok(Poly::constant(chart, num / den))
            } else {
                Ok(Poly::constant(chart, num))
            }
        }
        Some(Tok::Ident(name)) => {
            p.at += 1;
            let i = chart.index_of(&name).ok_or_else(|| {
                err(
                    pos,
                    format!("unknown coordinate `{name}` on chart `{}`", chart.name()),
                )
            })?;
            let e = if p.eat(&Tok::Caret) {
                p.expect_exponent()?
            } else {
                1
            };
            if e < 0 && !chart.is_unit(i) {
                return Err(err(
                    pos,
                    format!("negative exponent on non-unit coordinate `{name}`"),
                ));
            }
            Ok(Poly::var_pow(chart, i, e))
        }
        _ => Err(err(pos, "expected a factor")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn rational_literals() {
        assert_eq!(parse_rational("3/2").unwrap(), rat(3, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat(-7, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("2x").is_err());
    }

    #[test]
    fn lex_positions() {
        let toks = lex("x + 12*y~").unwrap();
        assert_eq!(toks[0].tok, Tok::Ident("x".into()));
        assert_eq!(toks[2].tok, Tok::Int(12));
        assert_eq!(toks[4].tok, Tok::Ident("y~".into()));
        assert_eq!(toks[4].pos, 7);
    }
}
