//! Affine parameter expressions such as `"1 - p12"` or `"0.5*mu + 1"`.

use serde::{Deserialize, Serialize};

use super::jet::Jet2;
use super::Interval;
use crate::error::{Error, Result};

/// An expression as written in a model file: a bare number or an affine formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprSpec {
    Number(f64),
    Text(String),
}

/// `constant + Σ_k coefs[k] · θ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub coefs: Vec<f64>,
}

impl AffineExpr {
    pub fn constant(c: f64, q: usize) -> Self {
        AffineExpr {
            constant: c,
            coefs: vec![0.0; q],
        }
    }

    pub fn from_spec(spec: &ExprSpec, names: &[String]) -> Result<Self> {
        match spec {
            ExprSpec::Number(c) => Ok(AffineExpr::constant(*c, names.len())),
            ExprSpec::Text(s) => parse(s, names),
        }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.constant
            + self
                .coefs
                .iter()
                .zip(theta)
                .map(|(a, t)| a * t)
                .sum::<f64>()
    }

    pub fn jet(&self, theta: &[f64]) -> Jet2 {
        Jet2::affine(self.constant, &self.coefs, theta)
    }

    pub fn is_constant(&self) -> bool {
        self.coefs.iter().all(|&a| a == 0.0)
    }

    /// Exact range of the expression over the closure of a box.
    pub fn range(&self, bounds: &[Interval]) -> (f64, f64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (a, b) in self.coefs.iter().zip(bounds) {
            if *a == 0.0 {
                continue;
            }
            let (x, y) = (a * b.lower, a * b.upper);
            lo += x.min(y);
            hi += x.max(y);
        }
        (lo, hi)
    }
}

impl std::ops::Add for &AffineExpr {
    type Output = AffineExpr;
    fn add(self, o: &AffineExpr) -> AffineExpr {
        AffineExpr {
            constant: self.constant + o.constant,
            coefs: self.coefs.iter().zip(&o.coefs).map(|(a, b)| a + b).collect(),
        }
    }
}

// `current` ends like "1.5e", so a following sign belongs to the number
fn in_exponent(current: &str) -> bool {
    let t = current.trim();
    match t.strip_suffix(['e', 'E']) {
        Some(mantissa) => mantissa.trim().parse::<f64>().is_ok(),
        None => false,
    }
}

fn parse(src: &str, names: &[String]) -> Result<AffineExpr> {
    let bad = |msg: &str| Error::InvalidSpec(format!("expression {src:?}: {msg}"));
    let mut expr = AffineExpr::constant(0.0, names.len());

    // split into signed terms
    let mut terms: Vec<(f64, String)> = Vec::new();
    let mut sign = 1.0;
    let mut current = String::new();
    let mut expect_term = true;
    for ch in src.chars() {
        if ch.is_whitespace() {
            current.push(ch);
            continue;
        }
        match ch {
            '+' | '-' if !current.trim().is_empty() && !in_exponent(&current) => {
                terms.push((sign, std::mem::take(&mut current)));
                sign = if ch == '-' { -1.0 } else { 1.0 };
                expect_term = true;
            }
            '+' | '-' if current.trim().is_empty() => {
                if ch == '-' {
                    sign = -sign;
                }
                if !expect_term {
                    return Err(bad("misplaced sign"));
                }
            }
            _ => {
                current.push(ch);
                expect_term = false;
            }
        }
    }
    if current.trim().is_empty() {
        return Err(bad("empty term"));
    }
    terms.push((sign, current));

    for (sign, term) in terms {
        let factors: Vec<&str> = term.split('*').map(str::trim).collect();
        let mut coef = sign;
        let mut param: Option<usize> = None;
        for f in factors {
            if f.is_empty() {
                return Err(bad("empty factor"));
            }
            if let Ok(v) = f.parse::<f64>() {
                coef *= v;
            } else if let Some(k) = names.iter().position(|n| n == f) {
                if param.is_some() {
                    return Err(bad("products of parameters are not affine"));
                }
                param = Some(k);
            } else {
                return Err(bad(&format!("unknown parameter {f:?}")));
            }
        }
        match param {
            Some(k) => expr.coefs[k] += coef,
            None => expr.constant += coef,
        }
    }
    if !expr.constant.is_finite() || expr.coefs.iter().any(|c| !c.is_finite()) {
        return Err(bad("non-finite coefficient"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["a".into(), "mu2".into()]
    }

    #[test]
    fn parses_affine_forms() {
        let e = parse("1 - a", &names()).unwrap();
        assert_eq!(e.constant, 1.0);
        assert_eq!(e.coefs, vec![-1.0, 0.0]);

        let e = parse("0.5*mu2 + 2 - 3*a", &names()).unwrap();
        assert_eq!(e.constant, 2.0);
        assert_eq!(e.coefs, vec![-3.0, 0.5]);

        let e = parse("-a", &names()).unwrap();
        assert_eq!(e.coefs, vec![-1.0, 0.0]);

        let e = parse("1e-3 + mu2*2", &names()).unwrap();
        assert_eq!(e.constant, 1e-3);
        assert_eq!(e.coefs, vec![0.0, 2.0]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("a*mu2", &names()).is_err());
        assert!(parse("b", &names()).is_err());
        assert!(parse("1 +", &names()).is_err());
        assert!(parse("", &names()).is_err());
    }

    #[test]
    fn range_over_box() {
        let e = parse("1 - a", &names()).unwrap();
        let b = vec![Interval::new(0.0, 0.4), Interval::new(-1.0, 1.0)];
        assert_eq!(e.range(&b), (0.6, 1.0));
    }
}
