use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, sym_rep};
use crate::error::{Error, Result};

/// A symmetric, lazy generating set `A = {0} ∪ {±a_1, …, ±a_k}` of `Z/pZ`,
/// stored by its positive half `1 <= a_1 < … < a_k <= (p-1)/2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenSet {
    p: u64,
    half: Vec<u64>,
}

impl GenSet {
    /// Builds a set from its positive half. The half may be given in any
    /// order; every element must lie in `[1, (p-1)/2]` and appear once.
    pub fn new(p: u64, half: impl Into<Vec<u64>>) -> Result<Self> {
        if p < 3 || !is_prime(p) {
            return Err(Error::invalid(format!("modulus {p} must be an odd prime")));
        }
        let mut half = half.into();
        if half.is_empty() {
            return Err(Error::invalid("half must contain at least one element (k >= 1)"));
        }
        let max = (p - 1) / 2;
        for &a in &half {
            if a == 0 {
                return Err(Error::invalid(
                    "0 may not appear in half: the lazy element is implicit and a_i must be nonzero",
                ));
            }
            if a > max {
                return Err(Error::invalid(format!(
                    "element {a} lies outside [1, (p-1)/2] = [1, {max}]; use the representative {} of ±{a}",
                    p - a
                )));
            }
        }
        half.sort_unstable();
        if let Some(w) = half.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "element {} repeated: half must be strictly increasing",
                w[0]
            )));
        }
        Ok(GenSet { p, half })
    }

    /// Builds a set from arbitrary nonzero residues, folding each to its
    /// symmetric representative. Residues that coincide up to sign are an error.
    pub fn from_residues(p: u64, residues: &[u64]) -> Result<Self> {
        if p < 3 || !is_prime(p) {
            return Err(Error::invalid(format!("modulus {p} must be an odd prime")));
        }
        let mut half = Vec::with_capacity(residues.len());
        for &r in residues {
            let c = sym_rep(r, p);
            if c == 0 {
                return Err(Error::invalid(format!("residue {r} is 0 mod {p}")));
            }
            half.push(c);
        }
        GenSet::new(p, half)
    }

    /// Parses a comma separated half, e.g. `"1,10,35"`.
    pub fn parse(p: u64, half: &str) -> Result<Self> {
        let values = half
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<u64>()
                    .map_err(|_| Error::invalid(format!("cannot parse '{s}' as a nonnegative integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        GenSet::new(p, values)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn half(&self) -> &[u64] {
        &self.half
    }

    /// Number of symmetric pairs `k`; the set has `2k + 1` elements.
    pub fn k(&self) -> usize {
        self.half.len()
    }

    pub fn size(&self) -> usize {
        2 * self.half.len() + 1
    }

    /// All `2k + 1` elements as residues in `[0, p)`.
    pub fn elements(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.size());
        out.push(0);
        for &a in &self.half {
            out.push(a);
            out.push(self.p - a);
        }
        out
    }

    /// The dilated set `cA`, re-canonicalized.
    pub fn dilate(&self, c: u64) -> Result<Self> {
        let scaled: Vec<u64> = self
            .half
            .iter()
            .map(|&a| crate::arith::mul_mod(a, c % self.p, self.p))
            .collect();
        GenSet::from_residues(self.p, &scaled)
    }
}

impl fmt::Display for GenSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.half.iter().map(u64::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_invariants() {
        assert!(GenSet::new(5, vec![1]).is_ok());
        assert!(GenSet::new(5, vec![1, 2]).is_ok());
        assert!(GenSet::new(4, vec![1]).is_err());
        assert!(GenSet::new(2, vec![1]).is_err());
        assert!(GenSet::new(7, vec![]).is_err());
        assert!(GenSet::new(7, vec![4]).is_err());
        assert!(GenSet::new(7, vec![2, 2]).is_err());
        let err = GenSet::parse(7, "0,1").unwrap_err();
        assert!(err.to_string().contains("0 may not appear"));
    }

    #[test]
    fn sorts_and_folds() {
        let a = GenSet::new(11, vec![4, 1, 3]).unwrap();
        assert_eq!(a.half(), &[1, 3, 4]);
        assert_eq!(a.size(), 7);
        let b = GenSet::from_residues(7, &[1, 5]).unwrap();
        assert_eq!(b.half(), &[1, 2]);
        assert!(GenSet::from_residues(7, &[1, 6]).is_err());
        assert_eq!(b.elements(), vec![0, 1, 6, 2, 5]);
    }

    #[test]
    fn dilation_stays_in_family() {
        let a = GenSet::new(101, vec![1, 10]).unwrap();
        let d = a.dilate(3).unwrap();
        assert_eq!(d.half(), &[3, 30]);
        assert_eq!(a.to_string(), "1,10");
    }
}
