use std::fmt;

use crate::chart::Chart;
use crate::scalar::Scalar;

use super::{Mono, Poly};

/// One term without a leading sign, e.g. `3/2*x^2*y`. The sign is handled by
/// the caller so terms can be joined with ` + ` / ` - `.
fn format_term_abs<C: Scalar>(chart: &Chart, m: &Mono, c: &C) -> String {
    let coeff = c.abs();
    let mut pieces: Vec<String> = Vec::new();
    let has_vars = m.0.iter().any(|&e| e != 0);
    if !has_vars || !coeff.is_one() {
        pieces.push(format!("{coeff}"));
    }
    for (i, &e) in m.0.iter().enumerate() {
        if e == 0 {
            continue;
        }
        if e == 1 {
            pieces.push(chart.coord(i).to_string());
        } else {
            pieces.push(format!("{}^{}", chart.coord(i), e));
        }
    }
    pieces.join("*")
}

pub(super) fn format_term<C: Scalar>(chart: &Chart, m: &Mono, c: &C) -> String {
    let body = format_term_abs(chart, m, c);
    if c.is_negative() {
        format!("-{body}")
    } else {
        body
    }
}

impl<C: Scalar> fmt::Display for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Descending graded-lex order.
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let body = format_term_abs(self.chart.as_ref(), m, c);
            if k == 0 {
                if c.is_negative() {
                    write!(f, "-{body}")?;
                } else {
                    write!(f, "{body}")?;
                }
            } else if c.is_negative() {
                write!(f, " - {body}")?;
            } else {
                write!(f, " + {body}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::poly::Poly;
    use crate::scalar::Rat;
    use crate::Chart;

    #[test]
    fn canonical_order_is_descending_graded_lex() {
        let c = Chart::new("m", &["x", "y"]).unwrap();
        let p = Poly::<Rat>::parse(&c, "y + x + y^2 + x*y + x^2").unwrap();
        assert_eq!(p.to_string(), "x^2 + x*y + y^2 + x + y");
    }

    #[test]
    fn signs_and_units() {
        let c = Chart::new("m", &["x", "y"]).unwrap();
        let p = Poly::<Rat>::parse(&c, "-x^2 + y - 1").unwrap();
        assert_eq!(p.to_string(), "-x^2 + y - 1");
        assert_eq!(Poly::<Rat>::zero(&c).to_string(), "0");
        let q = Poly::<Rat>::parse(&c, "-2/3").unwrap();
        assert_eq!(q.to_string(), "-2/3");
    }
}
