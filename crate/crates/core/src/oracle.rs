//! Builtin reference predicates and input-range syntax.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::protocol::InputVector;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("unknown builtin predicate `{0}`")]
    UnknownBuiltin(String),
    #[error("predicate `{name}` takes {expected} inputs, got {found}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("bad input range `{0}`")]
    BadRange(String),
}

/// Predicates shipped with the tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    /// `x > 1` and `x` is a power of two.
    Power2,
    /// `x1 >= x0` over inputs `(x0, x1)`.
    Majority,
    Geq,
    Lt,
    Even,
    Odd,
    Div3,
    /// `2 * x1 >= x2`.
    DoubleGeq,
    /// `x >= k`.
    Threshold(u32),
}

impl Builtin {
    pub fn arity(self) -> usize {
        match self {
            Builtin::Power2 | Builtin::Even | Builtin::Odd | Builtin::Div3 | Builtin::Threshold(_) => 1,
            Builtin::Majority | Builtin::Geq | Builtin::Lt | Builtin::DoubleGeq => 2,
        }
    }

    pub fn eval(self, input: &InputVector) -> Result<bool, OracleError> {
        if input.0.len() != self.arity() {
            return Err(OracleError::Arity { name: self.to_string(), expected: self.arity(), found: input.0.len() });
        }
        let v = &input.0;
        Ok(match self {
            Builtin::Power2 => v[0] > 1 && v[0].is_power_of_two(),
            Builtin::Majority => v[1] >= v[0],
            Builtin::Geq => v[0] >= v[1],
            Builtin::Lt => v[0] < v[1],
            Builtin::Even => v[0].is_multiple_of(2),
            Builtin::Odd => v[0] % 2 == 1,
            Builtin::Div3 => v[0].is_multiple_of(3),
            Builtin::DoubleGeq => 2 * u64::from(v[0]) >= u64::from(v[1]),
            Builtin::Threshold(k) => v[0] >= k,
        })
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Power2 => f.write_str("power2"),
            Builtin::Majority => f.write_str("majority"),
            Builtin::Geq => f.write_str("geq"),
            Builtin::Lt => f.write_str("lt"),
            Builtin::Even => f.write_str("even"),
            Builtin::Odd => f.write_str("odd"),
            Builtin::Div3 => f.write_str("div3"),
            Builtin::DoubleGeq => f.write_str("double-geq"),
            Builtin::Threshold(k) => write!(f, "threshold:{k}"),
        }
    }
}

impl FromStr for Builtin {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "power2" => Builtin::Power2,
            "majority" => Builtin::Majority,
            "geq" => Builtin::Geq,
            "lt" => Builtin::Lt,
            "even" => Builtin::Even,
            "odd" => Builtin::Odd,
            "div3" => Builtin::Div3,
            "double-geq" => Builtin::DoubleGeq,
            _ => match s.strip_prefix("threshold:").map(str::parse::<u32>) {
                Some(Ok(k)) => Builtin::Threshold(k),
                _ => return Err(OracleError::UnknownBuiltin(s.to_string())),
            },
        })
    }
}

fn parse_vector(s: &str) -> Option<Vec<u32>> {
    let s = s.trim();
    let inner = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(s);
    inner.split(',').map(|p| p.trim().parse::<u32>().ok()).collect()
}

/// Parses a single input vector: `4`, `2,3` or `(2,3)`.
pub fn parse_input(s: &str) -> Result<InputVector, OracleError> {
    parse_vector(s).map(InputVector).ok_or_else(|| OracleError::BadRange(s.to_string()))
}

/// Parses `a..b` (inclusive, unary), `(a,b)..(c,d)` (inclusive rectangle,
/// lexicographic order) or a single vector.
pub fn parse_inputs(s: &str) -> Result<Vec<InputVector>, OracleError> {
    let bad = || OracleError::BadRange(s.to_string());
    let Some((lo, hi)) = s.split_once("..") else {
        return Ok(vec![parse_input(s)?]);
    };
    let lo = parse_vector(lo).ok_or_else(bad)?;
    let hi = parse_vector(hi).ok_or_else(bad)?;
    if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| a > b) {
        return Err(bad());
    }
    let mut out = Vec::new();
    let mut cur = lo.clone();
    loop {
        out.push(InputVector(cur.clone()));
        let mut i = cur.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if cur[i] < hi[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = lo[i];
        }
    }
}

/// All vectors of the given arity whose components sum to at most `max`,
/// in lexicographic order.
pub fn inputs_with_sum_at_most(arity: usize, max: u32) -> Vec<InputVector> {
    let hi = vec![max; arity];
    let mut out = Vec::new();
    let mut cur = vec![0; arity];
    loop {
        if cur.iter().sum::<u32>() <= max {
            out.push(InputVector(cur.clone()));
        }
        let mut i = arity;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < hi[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_evaluate() {
        let p2: Builtin = "power2".parse().unwrap();
        let ones: Vec<u32> = (0..=9).filter(|&x| p2.eval(&InputVector(vec![x])).unwrap()).collect();
        assert_eq!(ones, [2, 4, 8]);
        assert_eq!("threshold:3".parse::<Builtin>().unwrap(), Builtin::Threshold(3));
        assert!("threshold:x".parse::<Builtin>().is_err());
        assert!(Builtin::Majority.eval(&InputVector(vec![2, 2])).unwrap());
        assert!(Builtin::Geq.eval(&InputVector(vec![1])).is_err());
        for b in [Builtin::Power2, Builtin::DoubleGeq, Builtin::Threshold(4)] {
            assert_eq!(b.to_string().parse::<Builtin>().unwrap(), b);
        }
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_inputs("2..4").unwrap().len(), 3);
        let rect = parse_inputs("(0,1)..(1,2)").unwrap();
        let got: Vec<Vec<u32>> = rect.into_iter().map(|v| v.0).collect();
        assert_eq!(got, vec![vec![0, 1], vec![0, 2], vec![1, 1], vec![1, 2]]);
        assert_eq!(parse_inputs("2,3").unwrap(), vec![InputVector(vec![2, 3])]);
        assert!(parse_inputs("4..2").is_err());
        assert_eq!(inputs_with_sum_at_most(2, 2).len(), 6);
    }
}
