use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A product `β_{k_1} ··· β_{k_t}` stored as a sorted multiset of odd indices `≥ 3`.
///
/// The empty monomial is the constant `1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct BetaMonomial(Vec<u32>);

impl BetaMonomial {
    pub fn new(mut indices: Vec<u32>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&k| k < 3 || k % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "β-monomial index {bad} is not an odd integer ≥ 3"
            )));
        }
        indices.sort_unstable();
        Ok(BetaMonomial(indices))
    }

    pub fn one() -> Self {
        BetaMonomial(Vec::new())
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Groups equal indices: `{3,3,5}` becomes `[(3, 2), (5, 1)]`.
    pub fn powers(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = Vec::new();
        for &k in &self.0 {
            match out.last_mut() {
                Some((last, e)) if *last == k => *e += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }
}

impl TryFrom<Vec<u32>> for BetaMonomial {
    type Error = Error;
    fn try_from(value: Vec<u32>) -> Result<Self> {
        BetaMonomial::new(value)
    }
}

impl From<BetaMonomial> for Vec<u32> {
    fn from(value: BetaMonomial) -> Self {
        value.0
    }
}

/// Plain-text form, e.g. `β3^2β5`.
impl fmt::Display for BetaMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, e) in self.powers() {
            write!(f, "β{k}")?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_sorts_and_validates() {
        let m = BetaMonomial::new(vec![5, 3, 3]).unwrap();
        assert_eq!(m.indices(), &[3, 3, 5]);
        assert_eq!(m.weight(), 11);
        assert_eq!(m.powers(), vec![(3, 2), (5, 1)]);
        assert_eq!(m.to_string(), "β3^2β5");
        assert!(BetaMonomial::new(vec![4]).is_err());
        assert!(BetaMonomial::new(vec![1, 3]).is_err());
        assert_eq!(BetaMonomial::one().to_string(), "1");
    }
}
