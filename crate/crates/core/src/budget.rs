use crate::error::{Error, Result};

/// Operation-count limits checked before any evaluator starts looping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    /// Limit on `n * D^2` for power-series evaluation (`D = m * p^r`).
    pub convolution: u128,
    /// Limit on the number of compositions visited by brute-force enumeration.
    pub enumeration: u128,
    /// Limit on loop iterations for a single nested-sum evaluation.
    pub nested: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            convolution: 40_000_000_000,
            enumeration: 10_000_000,
            nested: 100_000_000,
        }
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget {
            convolution: u128::MAX,
            enumeration: u128::MAX,
            nested: u128::MAX,
        }
    }

    pub(crate) fn check(estimated: u128, budget: u128) -> Result<()> {
        if estimated > budget {
            Err(Error::WorkBudgetExceeded { estimated, budget })
        } else {
            Ok(())
        }
    }
}
