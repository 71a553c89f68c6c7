//! Parser for tensor expressions over a chart.
//!
//! Extends the scalar grammar with basis factors: `@x` is the coordinate
//! vector field for `x`, `dx` its differential. `^` between tensor factors
//! is the wedge product; on a scalar variable it remains integer
//! exponentiation. A single expression must stay within one variance:
//! mixing `@` and `d` factors is an error.

use std::sync::Arc;

use crate::chart::Chart;
use crate::poly::parse::{err, lex, Cursor, Tok};
use crate::poly::{AlgebraError, Poly};
use crate::scalar::Scalar;

use super::{DiffForm, MultiVector, VectorField};

#[derive(Debug, Clone, PartialEq)]
pub enum TensorValue<C: Scalar> {
    Scalar(Poly<C>),
    Multi(MultiVector<C>),
    Form(DiffForm<C>),
}

impl<C: Scalar> TensorValue<C> {
    pub fn kind_name(&self) -> String {
        match self {
            TensorValue::Scalar(_) => "scalar".into(),
            TensorValue::Multi(m) => match m.degree() {
                1 => "vector".into(),
                2 => "bivector".into(),
                d => format!("{d}-vector"),
            },
            TensorValue::Form(f) => match f.degree() {
                1 => "one-form".into(),
                2 => "two-form".into(),
                d => format!("{d}-form"),
            },
        }
    }

    pub fn into_scalar(self) -> Result<Poly<C>, AlgebraError> {
        match self {
            TensorValue::Scalar(p) => Ok(p),
            v => Err(err(0, format!("expected a scalar, found a {}", v.kind_name()))),
        }
    }

    pub fn into_vector_field(self) -> Result<VectorField<C>, AlgebraError> {
        match self {
            TensorValue::Multi(m) if m.degree() == 1 => Ok(m.to_vector_field()),
            v => Err(err(0, format!("expected a vector field, found a {}", v.kind_name()))),
        }
    }

    pub fn into_multivector(self, degree: usize) -> Result<MultiVector<C>, AlgebraError> {
        match self {
            TensorValue::Multi(m) if m.degree() == degree => Ok(m),
            v => Err(err(
                0,
                format!("expected a degree-{degree} multivector, found a {}", v.kind_name()),
            )),
        }
    }

    pub fn into_form(self, degree: usize) -> Result<DiffForm<C>, AlgebraError> {
        match self {
            TensorValue::Form(f) if f.degree() == degree => Ok(f),
            v => Err(err(
                0,
                format!("expected a degree-{degree} form, found a {}", v.kind_name()),
            )),
        }
    }
}

pub fn parse_tensor<C: Scalar>(
    chart: &Arc<Chart>,
    text: &str,
) -> Result<TensorValue<C>, AlgebraError> {
    let toks = lex(text)?;
    let mut p = Cursor { toks: &toks, at: 0 };
    let value = parse_expr(chart, &mut p)?;
    if p.at != toks.len() {
        return Err(err(p.peek_pos(), "trailing input"));
    }
    Ok(value)
}

fn parse_expr<C: Scalar>(
    chart: &Arc<Chart>,
    p: &mut Cursor<'_>,
) -> Result<TensorValue<C>, AlgebraError> {
    let mut negate = p.eat(&Tok::Minus);
    let mut acc: Option<TensorValue<C>> = None;
    loop {
        let pos = p.peek_pos();
        let mut term = parse_term(chart, p)?;
        if negate {
            term = negate_value(term);
        }
        acc = Some(match acc {
            None => term,
            Some(a) => add_values(a, term, pos)?,
        });
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
    Ok(acc.expect("at least one term"))
}

fn negate_value<C: Scalar>(v: TensorValue<C>) -> TensorValue<C> {
    match v {
        TensorValue::Scalar(p) => TensorValue::Scalar(p.neg()),
        TensorValue::Multi(m) => TensorValue::Multi(m.neg()),
        TensorValue::Form(f) => TensorValue::Form(f.neg()),
    }
}

fn add_values<C: Scalar>(
    a: TensorValue<C>,
    b: TensorValue<C>,
    pos: usize,
) -> Result<TensorValue<C>, AlgebraError> {
    match (a, b) {
        (TensorValue::Scalar(x), TensorValue::Scalar(y)) => Ok(TensorValue::Scalar(x.add(&y))),
        (TensorValue::Multi(x), TensorValue::Multi(y)) if x.degree() == y.degree() => {
            Ok(TensorValue::Multi(x.add(&y)))
        }
        (TensorValue::Form(x), TensorValue::Form(y)) if x.degree() == y.degree() => {
            Ok(TensorValue::Form(x.add(&y)))
        }
        (a, b) => Err(err(
            pos,
            format!(
                "cannot add a {} and a {}",
                a.kind_name(),
                b.kind_name()
            ),
        )),
    }
}

fn mul_values<C: Scalar>(
    a: TensorValue<C>,
    b: TensorValue<C>,
    pos: usize,
) -> Result<TensorValue<C>, AlgebraError> {
    match (a, b) {
        (TensorValue::Scalar(x), TensorValue::Scalar(y)) => Ok(TensorValue::Scalar(x.mul(&y))),
        (TensorValue::Scalar(x), TensorValue::Multi(m)) => Ok(TensorValue::Multi(m.scale(&x))),
        (TensorValue::Multi(m), TensorValue::Scalar(x)) => Ok(TensorValue::Multi(m.scale(&x))),
        (TensorValue::Scalar(x), TensorValue::Form(f)) => Ok(TensorValue::Form(f.scale(&x))),
        (TensorValue::Form(f), TensorValue::Scalar(x)) => Ok(TensorValue::Form(f.scale(&x))),
        (TensorValue::Multi(x), TensorValue::Multi(y)) => Ok(TensorValue::Multi(x.wedge(&y))),
        (TensorValue::Form(x), TensorValue::Form(y)) => Ok(TensorValue::Form(x.wedge(&y))),
        (a, b) => Err(err(
            pos,
            format!(
                "cannot combine a {} with a {}: pick one variance per expression",
                a.kind_name(),
                b.kind_name()
            ),
        )),
    }
}

fn parse_term<C: Scalar>(
    chart: &Arc<Chart>,
    p: &mut Cursor<'_>,
) -> Result<TensorValue<C>, AlgebraError> {
    let mut acc = parse_factor(chart, p)?;
    loop {
        let pos = p.peek_pos();
        if p.eat(&Tok::Star) || p.eat(&Tok::Caret) {
            let f = parse_factor(chart, p)?;
            acc = mul_values(acc, f, pos)?;
        } else {
            break;
        }
    }
    Ok(acc)
}

fn parse_factor<C: Scalar>(
    chart: &Arc<Chart>,
    p: &mut Cursor<'_>,
) -> Result<TensorValue<C>, AlgebraError> {
    let pos = p.peek_pos();
    match p.peek().cloned() {
        Some(Tok::Int(n)) => {
            p.at += 1;
            let num = C::from_i64(n).ok_or_else(|| err(pos, "integer out of range"))?;
            let value = if p.eat(&Tok::Slash) {
                let dpos = p.peek_pos();
                let d = p.expect_int()?;
                if d == 0 {
                    return Err(err(dpos, "zero denominator"));
                }
                let den = C::from_i64(d).ok_or_else(|| err(dpos, "integer out of range"))?;
                num / den
            } else {
                num
            };
            Ok(TensorValue::Scalar(Poly::constant(chart, value)))
        }
        Some(Tok::At) => {
            p.at += 1;
            let npos = p.peek_pos();
            match p.peek().cloned() {
                Some(Tok::Ident(name)) => {
                    p.at += 1;
                    let i = chart.index_of(&name).ok_or_else(|| {
                        err(
                            npos,
                            format!("unknown coordinate `{name}` on chart `{}`", chart.name()),
                        )
                    })?;
                    let mut mv = MultiVector::zero(chart, 1);
                    mv.add_comp(vec![i], Poly::one(chart));
                    Ok(TensorValue::Multi(mv))
                }
                _ => Err(err(npos, "expected a coordinate name after `@`")),
            }
        }
        Some(Tok::Ident(name)) => {
            p.at += 1;
            if let Some(i) = chart.index_of(&name) {
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
                return Ok(TensorValue::Scalar(Poly::var_pow(chart, i, e)));
            }
            if let Some(rest) = name.strip_prefix('d') {
                if let Some(i) = chart.index_of(rest) {
                    return Ok(TensorValue::Form(DiffForm::basis(chart, i)));
                }
            }
            Err(err(
                pos,
                format!("unknown coordinate `{name}` on chart `{}`", chart.name()),
            ))
        }
        _ => Err(err(pos, "expected a factor")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;
    use crate::Chart;

    fn r3() -> Arc<Chart> {
        Chart::new("m", &["x", "y", "z"]).unwrap()
    }

    #[test]
    fn vector_field_expression() {
        let c = r3();
        let v: TensorValue<Rat> = parse_tensor(&c, "y*@z - z*@y").unwrap();
        let vf = v.into_vector_field().unwrap();
        assert_eq!(vf.comp(1), &Poly::parse(&c, "-z").unwrap());
        assert_eq!(vf.comp(2), &Poly::parse(&c, "y").unwrap());
    }

    #[test]
    fn bivector_canonicalizes() {
        let c = r3();
        let v: TensorValue<Rat> =
            parse_tensor(&c, "z*@x^@y + x*@y^@z + y*@z^@x").unwrap();
        let mv = v.into_multivector(2).unwrap();
        // @z^@x is stored at (x, z) with a flipped sign
        assert_eq!(mv.comp(&[0, 2]), Poly::parse(&c, "-y").unwrap());
        assert_eq!(mv.comp(&[2, 0]), Poly::parse(&c, "y").unwrap());
    }

    #[test]
    fn forms_and_volume() {
        let c = r3();
        let v: TensorValue<Rat> = parse_tensor(&c, "dx^dy^dz").unwrap();
        let f = v.into_form(3).unwrap();
        assert_eq!(f.comp(&[0, 1, 2]), Poly::one(&c));
        let w: TensorValue<Rat> = parse_tensor(&c, "x^2*dy - 3/2*dz").unwrap();
        let wf = w.into_form(1).unwrap();
        assert_eq!(wf.comp(&[1]), Poly::parse(&c, "x^2").unwrap());
        assert_eq!(wf.comp(&[2]), Poly::parse(&c, "-3/2").unwrap());
    }

    #[test]
    fn variance_mixing_rejected() {
        let c = r3();
        let e = parse_tensor::<Rat>(&c, "@x^dy").unwrap_err();
        match e {
            AlgebraError::Parse { msg, .. } => assert!(msg.contains("variance"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_tensor::<Rat>(&c, "@x + dy").is_err());
        assert!(parse_tensor::<Rat>(&c, "@x + x").is_err());
    }

    #[test]
    fn duplicate_wedge_vanishes() {
        let c = r3();
        let v: TensorValue<Rat> = parse_tensor(&c, "dx^dx").unwrap();
        match v {
            TensorValue::Form(f) => assert!(f.is_zero()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_expression_stays_scalar() {
        let c = r3();
        let v: TensorValue<Rat> = parse_tensor(&c, "x*y - z^2").unwrap();
        let p = v.into_scalar().unwrap();
        assert_eq!(p, Poly::parse(&c, "x*y - z^2").unwrap());
    }
}
