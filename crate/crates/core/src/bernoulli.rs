//! Bernoulli numbers modulo a prime and the β-values `β_k ≡ −B_{p−k}/k (mod p)`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modarith::{inv_mod, is_prime, PrimePowerModulus, Residue};
use crate::monomial::BetaMonomial;

const CACHE_VERSION: u32 = 1;

/// `B_0 .. B_{p−3}` reduced modulo `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BernoulliTable {
    modulus: PrimePowerModulus,
    values: Vec<u64>,
}

impl BernoulliTable {
    /// Runs the recurrence `Σ_{j≤m} C(m+1, j) B_j = 0` entirely in `Z/p`.
    ///
    /// Every divisor `m + 1 ≤ p − 2` is a unit, so the recurrence never leaves
    /// the residue ring.
    pub fn compute(p: u64) -> Result<Self> {
        if p < 5 || !is_prime(p) {
            return Err(Error::InvalidArgument(format!(
                "Bernoulli tables need a prime p ≥ 5, got {p}"
            )));
        }
        let modulus = PrimePowerModulus::prime(p)?;
        let len = (p - 2) as usize;

        let mut fact = vec![1u64; len + 1];
        for i in 1..=len {
            fact[i] = fact[i - 1] * i as u64 % p;
        }
        let mut inv_fact = vec![1u64; len + 1];
        inv_fact[len] = inv_mod(fact[len], p).expect("(p-2)! is a unit");
        for i in (1..=len).rev() {
            inv_fact[i - 1] = inv_fact[i] * i as u64 % p;
        }
        let binom = |n: usize, k: usize| fact[n] * inv_fact[k] % p * inv_fact[n - k] % p;

        let mut values = Vec::with_capacity(len);
        values.push(1u64);
        for m in 1..len {
            let mut acc = 0u64;
            for (j, &b) in values.iter().enumerate() {
                acc = (acc + binom(m + 1, j) * b) % p;
            }
            // B_m = −acc / (m + 1)
            let inv = fact[m] * inv_fact[m + 1] % p;
            values.push((p - acc * inv % p) % p);
        }
        Ok(BernoulliTable { modulus, values })
    }

    /// Wraps externally supplied values after checking the table invariants.
    pub fn from_values(p: u64, values: Vec<u64>) -> Result<Self> {
        if p < 5 || !is_prime(p) {
            return Err(Error::Cache(format!("{p} is not a prime ≥ 5")));
        }
        if values.len() as u64 != p - 2 {
            return Err(Error::Cache(format!(
                "table for p = {p} has {} entries, expected {}",
                values.len(),
                p - 2
            )));
        }
        if values[0] != 1 {
            return Err(Error::Cache("B_0 must be 1".into()));
        }
        if values.len() > 3 && values[3] != 0 {
            return Err(Error::Cache("B_3 must vanish".into()));
        }
        if values.iter().any(|&v| v >= p) {
            return Err(Error::Cache("entry not reduced modulo p".into()));
        }
        Ok(BernoulliTable {
            modulus: PrimePowerModulus::prime(p)?,
            values,
        })
    }

    pub fn p(&self) -> u64 {
        self.modulus.p()
    }

    pub fn modulus(&self) -> PrimePowerModulus {
        self.modulus
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// `B_k mod p`, for `0 ≤ k ≤ p − 3`.
    pub fn get(&self, k: usize) -> Option<Residue> {
        self.values.get(k).map(|&v| self.modulus.residue_u64(v))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&CacheFile {
            version: CACHE_VERSION,
            p: self.p(),
            values: self.values.clone(),
        })
        .expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CacheFile = serde_json::from_str(text).map_err(|e| Error::Cache(e.to_string()))?;
        if file.version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported version {}", file.version)));
        }
        Self::from_values(file.p, file.values)
    }
}

pub fn bernoulli_table(p: u64) -> Result<BernoulliTable> {
    BernoulliTable::compute(p)
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    p: u64,
    values: Vec<u64>,
}

/// The residue `β_k(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BetaValue {
    pub k: u32,
    pub value: Residue,
}

impl BetaValue {
    pub fn p(&self) -> u64 {
        self.value.modulus().p()
    }
}

/// `β_k ≡ −B_{p−k} / k (mod p)` for odd `3 ≤ k < p`.
///
/// Even `k` is rejected even though `β_k` would be zero, so that callers go
/// through monomials instead of silently multiplying by zero.
pub fn beta(k: u32, table: &BernoulliTable) -> Result<BetaValue> {
    let p = table.p();
    if k < 3 || k.is_multiple_of(2) || k as u64 >= p {
        return Err(Error::IndexOutOfTable { k, p });
    }
    let b = table.get((p - k as u64) as usize).expect("p - k ≤ p - 3");
    let inv_k = table.modulus().residue_u64(inv_mod(k as u64, p).expect("k < p"));
    Ok(BetaValue { k, value: -(b * inv_k) })
}

/// The product of `β_k` over the multiset of indices.
pub fn eval_monomial(mon: &BetaMonomial, table: &BernoulliTable) -> Result<Residue> {
    mon.indices()
        .iter()
        .try_fold(table.modulus().one(), |acc, &k| Ok(acc * beta(k, table)?.value))
}

/// On-disk cache of Bernoulli tables, one `bernoulli_<p>.json` per prime.
#[derive(Debug, Clone)]
pub struct BernoulliCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl BernoulliCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BernoulliCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, p: u64) -> PathBuf {
        self.dir.join(format!("bernoulli_{p}.json"))
    }

    /// `Ok(None)` when no file exists; an error when the file fails validation.
    pub fn load(&self, p: u64) -> Result<Option<BernoulliTable>> {
        let path = self.path_for(p);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let table = BernoulliTable::from_json(&text)?;
        if table.p() != p {
            return Err(Error::Cache(format!(
                "{} holds a table for p = {}",
                path.display(),
                table.p()
            )));
        }
        Ok(Some(table))
    }

    /// Writes to a temporary file in the cache directory, then renames it into place.
    pub fn store(&self, table: &BernoulliTable) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(
            ".bernoulli_{}.json.{}.{}.tmp",
            table.p(),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, table.to_json())?;
        fs::rename(&tmp, self.path_for(table.p())).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })?;
        Ok(())
    }

    /// Loads a validated table, recomputing (and rewriting) missing or corrupt entries.
    pub fn get_or_compute(&self, p: u64) -> Result<BernoulliTable> {
        if let Ok(Some(table)) = self.load(p) {
            return Ok(table);
        }
        let table = BernoulliTable::compute(p)?;
        self.store(&table)?;
        Ok(table)
    }
}
