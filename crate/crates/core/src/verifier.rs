//! Grid sweeps that compare direct evaluations against closed forms and
//! collect the outcomes into deterministic reports.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bernoulli::{beta, BernoulliCache, BernoulliTable};
use crate::budget::Budget;
use crate::closedforms::{binom, factorial, gamma_coeff, predict};
use crate::directsums::{eval_brute_exact, eval_conv, eval_conv_all, SumSpec, Variant};
use crate::error::{Error, Result};
use crate::modarith::{primes_in_range, reduce_rational, PrimePowerModulus, Rational, Residue};
use crate::nestedsums::{
    chain_sum_identity, compositions_exact, e_sum, f_sum, m_sum, mhs_mod, pgap_sum, t_sum, u_sum, v_sum, xi_sum,
    IndexVector, WindowSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    DenominatorNotInvertible,
    Precondition,
    Budget,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::DenominatorNotInvertible => "denominator-not-invertible",
            SkipReason::Precondition => "precondition",
            SkipReason::Budget => "budget",
        }
    }

    fn from_error(err: &Error) -> Self {
        match err {
            Error::WorkBudgetExceeded { .. } => SkipReason::Budget,
            Error::DenominatorNotInvertible { .. } => SkipReason::DenominatorNotInvertible,
            _ => SkipReason::Precondition,
        }
    }
}

impl FromStr for SkipReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "denominator-not-invertible" => Ok(SkipReason::DenominatorNotInvertible),
            "precondition" => Ok(SkipReason::Precondition),
            "budget" => Ok(SkipReason::Budget),
            other => Err(Error::InvalidArgument(format!("unknown skip reason {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Pass,
    Fail,
    Skipped(SkipReason),
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped(_) => "skipped",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Skipped(reason) => write!(f, "skipped({})", reason.as_str()),
            other => f.write_str(other.label()),
        }
    }
}

/// A grid coordinate: integers for the numeric parameters, text for index vectors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamValue {
    Int(u64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<u64> for ParamValue {
    fn from(v: u64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<u32> for ParamValue {
    fn from(v: u32) -> Self {
        ParamValue::Int(v as u64)
    }
}

const PARAM_ORDER: [&str; 12] = ["p", "n", "m", "r", "kappa", "alpha", "g", "i", "ell", "d", "w", "s"];

fn param_rank(key: &str) -> usize {
    PARAM_ORDER.iter().position(|&k| k == key).unwrap_or(PARAM_ORDER.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationRecord {
    pub check: String,
    pub params: BTreeMap<String, ParamValue>,
    pub lhs: Option<String>,
    pub rhs: Option<String>,
    /// Decimal modulus; `"0"` marks an exact comparison.
    pub modulus: String,
    pub status: Status,
}

impl VerificationRecord {
    /// Parameters in canonical order (`p, n, m, r, kappa, …`), unknown keys last.
    pub fn ordered_params(&self) -> Vec<(&str, &ParamValue)> {
        let mut out: Vec<(&str, &ParamValue)> = self.params.iter().map(|(k, v)| (k.as_str(), v)).collect();
        out.sort_by(|a, b| (param_rank(a.0), a.0).cmp(&(param_rank(b.0), b.0)));
        out
    }

    fn sort_key(&self) -> (&str, Vec<(usize, &str, &ParamValue)>) {
        let params = self
            .ordered_params()
            .into_iter()
            .map(|(k, v)| (param_rank(k), k, v))
            .collect();
        (self.check.as_str(), params)
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("{");
        out.push_str(&format!("\"check\":{}", json_string(&self.check)));
        for (k, v) in self.ordered_params() {
            let value = match v {
                ParamValue::Int(i) => i.to_string(),
                ParamValue::Text(s) => json_string(s),
            };
            out.push_str(&format!(",{}:{}", json_string(k), value));
        }
        if let Some(lhs) = &self.lhs {
            out.push_str(&format!(",\"lhs\":{}", json_string(lhs)));
        }
        if let Some(rhs) = &self.rhs {
            out.push_str(&format!(",\"rhs\":{}", json_string(rhs)));
        }
        out.push_str(&format!(",\"modulus\":{}", json_string(&self.modulus)));
        out.push_str(&format!(",\"status\":\"{}\"", self.status.label()));
        if let Status::Skipped(reason) = self.status {
            out.push_str(&format!(",\"reason\":\"{}\"", reason.as_str()));
        }
        out.push('}');
        out
    }

    fn from_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("record is not a JSON object".into()))?;
        let text = |key: &str| obj.get(key).and_then(Value::as_str).map(str::to_owned);
        let check = text("check").ok_or_else(|| Error::InvalidArgument("record without check".into()))?;
        let modulus = text("modulus").ok_or_else(|| Error::InvalidArgument("record without modulus".into()))?;
        let status = match text("status").as_deref() {
            Some("pass") => Status::Pass,
            Some("fail") => Status::Fail,
            Some("skipped") => Status::Skipped(
                text("reason")
                    .ok_or_else(|| Error::InvalidArgument("skipped record without reason".into()))?
                    .parse()?,
            ),
            other => return Err(Error::InvalidArgument(format!("bad status {other:?}"))),
        };
        let mut params = BTreeMap::new();
        for (k, v) in obj {
            if matches!(k.as_str(), "check" | "lhs" | "rhs" | "modulus" | "status" | "reason") {
                continue;
            }
            let pv = match v {
                Value::Number(num) => ParamValue::Int(
                    num.as_u64()
                        .ok_or_else(|| Error::InvalidArgument(format!("parameter {k} is not a natural number")))?,
                ),
                Value::String(s) => ParamValue::Text(s.clone()),
                _ => return Err(Error::InvalidArgument(format!("parameter {k} has an unsupported type"))),
            };
            params.insert(k.clone(), pv);
        }
        Ok(VerificationRecord {
            check,
            params,
            lhs: text("lhs"),
            rhs: text("rhs"),
            modulus,
            status,
        })
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
}

impl Summary {
    pub fn total(&self) -> usize {
        self.pass + self.fail + self.skipped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub config: Value,
    pub records: Vec<VerificationRecord>,
    pub summary: Summary,
}

impl SweepReport {
    /// Sorts the records and tallies them.
    pub fn new(config: Value, mut records: Vec<VerificationRecord>) -> Self {
        records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let mut summary = Summary::default();
        for r in &records {
            match r.status {
                Status::Pass => summary.pass += 1,
                Status::Fail => summary.fail += 1,
                Status::Skipped(_) => summary.skipped += 1,
            }
        }
        SweepReport {
            config,
            records,
            summary,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.fail == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerificationRecord> {
        self.records.iter().filter(|r| r.status == Status::Fail)
    }

    pub fn merge(reports: Vec<SweepReport>) -> SweepReport {
        let config = Value::Array(reports.iter().map(|r| r.config.clone()).collect());
        let records = reports.into_iter().flat_map(|r| r.records).collect();
        SweepReport::new(config, records)
    }

    pub fn to_json(&self) -> String {
        render_report(self, ReportFormat::Json)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("report JSON: {e}")))?;
        let config = value.get("config").cloned().unwrap_or(Value::Null);
        let records = value
            .get("records")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidArgument("report without records".into()))?
            .iter()
            .map(VerificationRecord::from_value)
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepReport::new(config, records))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

pub fn render_report(report: &SweepReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut out = String::from("{\"config\":");
            out.push_str(&serde_json::to_string(&report.config).expect("JSON values serialize"));
            out.push_str(",\"records\":[");
            for (i, r) in report.records.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ",\n" });
                out.push_str(&r.to_json());
            }
            if !report.records.is_empty() {
                out.push('\n');
            }
            let s = report.summary;
            out.push_str(&format!(
                "],\"summary\":{{\"pass\":{},\"fail\":{},\"skipped\":{}}}}}\n",
                s.pass, s.fail, s.skipped
            ));
            out
        }
        ReportFormat::Text => {
            let header = ["check", "params", "lhs", "rhs", "modulus", "status"];
            let rows: Vec<[String; 6]> = report
                .records
                .iter()
                .map(|r| {
                    let params = r
                        .ordered_params()
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(" ");
                    [
                        r.check.clone(),
                        params,
                        r.lhs.clone().unwrap_or_else(|| "-".into()),
                        r.rhs.clone().unwrap_or_else(|| "-".into()),
                        r.modulus.clone(),
                        r.status.to_string(),
                    ]
                })
                .collect();
            let mut out = String::new();
            if !rows.is_empty() {
                let mut widths = header.map(|h| h.chars().count());
                for row in &rows {
                    for (w, cell) in widths.iter_mut().zip(row) {
                        *w = (*w).max(cell.chars().count());
                    }
                }
                let line = |cells: &[String]| {
                    let padded: Vec<String> = cells
                        .iter()
                        .zip(widths)
                        .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                        .collect();
                    padded.join("  ").trim_end().to_string() + "\n"
                };
                out.push_str(&line(&header.map(String::from)));
                for row in &rows {
                    out.push_str(&line(row));
                }
            }
            let s = report.summary;
            out.push_str(&format!(
                "{} checks: pass={}, fail={}, skipped={}\n",
                s.total(),
                s.pass,
                s.fail,
                s.skipped
            ));
            out
        }
    }
}

/// Execution settings that do not affect the report contents.
#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub budget: Budget,
    /// Worker count; `None` uses one per core.
    pub threads: Option<usize>,
    pub cache: Option<BernoulliCache>,
}

impl VerifyOptions {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }

    fn tables(&self, primes: &[u64]) -> Result<BTreeMap<u64, BernoulliTable>> {
        primes
            .par_iter()
            .filter(|&&p| p >= 5)
            .map(|&p| {
                let table = match &self.cache {
                    Some(cache) => cache.get_or_compute(p)?,
                    None => BernoulliTable::compute(p)?,
                };
                Ok((p, table))
            })
            .collect()
    }
}

// Record construction.

type Params = Vec<(&'static str, ParamValue)>;

fn params_map(params: Params) -> BTreeMap<String, ParamValue> {
    params.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn skipped(check: &str, params: Params, modulus: String, reason: SkipReason) -> VerificationRecord {
    VerificationRecord {
        check: check.to_string(),
        params: params_map(params),
        lhs: None,
        rhs: None,
        modulus,
        status: Status::Skipped(reason),
    }
}

fn compare<T: PartialEq + fmt::Display>(
    check: &str,
    params: Params,
    modulus: String,
    lhs: Result<T>,
    rhs: Result<T>,
) -> VerificationRecord {
    let status = match (&lhs, &rhs) {
        (Ok(a), Ok(b)) if a == b => Status::Pass,
        (Ok(_), Ok(_)) => Status::Fail,
        (Err(e), _) | (_, Err(e)) => Status::Skipped(SkipReason::from_error(e)),
    };
    VerificationRecord {
        check: check.to_string(),
        params: params_map(params),
        lhs: lhs.ok().map(|v| v.to_string()),
        rhs: rhs.ok().map(|v| v.to_string()),
        modulus,
        status,
    }
}

fn power_label(p: u64, r: u32) -> String {
    num_traits::pow(BigInt::from(p), r as usize).to_string()
}

/// Multiplies a residue mod `p^r` by `p`, landing in `target = p^{r+1}` (or any larger power).
fn times_p(x: Residue, target: PrimePowerModulus) -> Residue {
    target.residue_u64(x.value() * x.modulus().p())
}

/// `p^e` as a residue.
fn p_power(target: PrimePowerModulus, e: u32) -> Residue {
    target.residue_u64(target.p()).pow(e as u64)
}

/// `B_k mod p` for `0 ≤ k ≤ p − 2`; `B_{p−2}` and other odd `k > 1` vanish.
fn bernoulli_mod_p(table: &BernoulliTable, k: u64) -> Result<Residue> {
    let p = table.p();
    if k > 1 && k % 2 == 1 {
        return Ok(table.modulus().zero());
    }
    table.get(k as usize).ok_or(Error::IndexOutOfTable { k: k as u32, p })
}

/// `p · c · B_k` mod `p²` for rational `c`.
fn p_times_bernoulli(table: &BernoulliTable, c: &Rational, k: u64) -> Result<Residue> {
    let mod_p = table.modulus();
    let value = reduce_rational(c, mod_p)? * bernoulli_mod_p(table, k)?;
    Ok(times_p(value, PrimePowerModulus::new(table.p(), 2)?))
}

fn int_q(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

fn big_q(v: BigInt) -> Rational {
    Rational::from_integer(v)
}

// Main congruence sweep.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainConfig {
    pub n_min: u32,
    pub n_max: u32,
    pub m_max: u64,
    pub p_min: u64,
    /// Exclusive upper bound on the prime.
    pub p_max: u64,
    pub r: u32,
    pub variants: Vec<Variant>,
}

impl MainConfig {
    pub fn new(n_max: u32, m_max: u64, p_min: u64, p_max: u64, r: u32) -> Self {
        MainConfig {
            n_min: 2,
            n_max,
            m_max,
            p_min,
            p_max,
            r,
            variants: vec![Variant::R, Variant::S],
        }
    }
}

/// Direct convolution against the closed-form prediction over the whole grid.
///
/// Every grid point yields exactly one record; points outside the
/// prediction's hypotheses (`p < n + 3`, `p | m`, `m ≥ n` when `r ≥ 2`)
/// are recorded as skipped.
pub fn verify_main(config: &MainConfig, options: &VerifyOptions) -> Result<SweepReport> {
    if config.r == 0 || config.m_max == 0 {
        return Err(Error::InvalidArgument("r and m_max must be positive".into()));
    }
    let primes = primes_in_range(config.p_min, config.p_max);
    let pool = options.pool()?;
    let records = pool.install(|| -> Result<Vec<VerificationRecord>> {
        let tables = options.tables(&primes)?;
        let mut groups = Vec::new();
        for &variant in &config.variants {
            for n in config.n_min..=config.n_max {
                for &p in &primes {
                    groups.push((variant, n, p));
                }
            }
        }
        Ok(groups
            .par_iter()
            .flat_map_iter(|&(variant, n, p)| main_group(config, variant, n, p, tables.get(&p), &options.budget))
            .collect())
    })?;
    let config_echo = serde_json::to_value(config).expect("config serializes");
    Ok(SweepReport::new(config_echo, records))
}

fn main_group(
    config: &MainConfig,
    variant: Variant,
    n: u32,
    p: u64,
    table: Option<&BernoulliTable>,
    budget: &Budget,
) -> Vec<VerificationRecord> {
    let r = config.r;
    let check = format!("main.{variant}");
    let label = power_label(p, r);
    let params = |m: u64| -> Params { vec![("p", p.into()), ("n", n.into()), ("m", m.into()), ("r", r.into())] };
    let modulus = PrimePowerModulus::new(p, r).ok();
    let admissible = |m: u64| {
        table.is_some() && modulus.is_some() && p >= n as u64 + 3 && !m.is_multiple_of(p) && (r == 1 || m < n as u64)
    };
    let top = (1..=config.m_max).filter(|&m| admissible(m)).max();
    let all = match (top, modulus) {
        (Some(top), Some(modulus)) => Some(eval_conv_all(n, top, modulus, variant, budget)),
        _ => None,
    };
    (1..=config.m_max)
        .map(|m| {
            if !admissible(m) {
                return skipped(&check, params(m), label.clone(), SkipReason::Precondition);
            }
            let modulus = modulus.expect("admissible implies a modulus");
            let lhs = match &all {
                Some(Ok(values)) => Ok(values[(m - 1) as usize]),
                _ => SumSpec::new(n, m, modulus, variant).and_then(|spec| eval_conv(&spec, budget)),
            };
            let rhs = predict(variant, n, m, p, r, table.expect("admissible implies a table"));
            compare(&check, params(m), label.clone(), lhs, rhs)
        })
        .collect()
}

// Lemma sweeps.

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lemma {
    Uab,
    Xi,
    Pgap,
    Vsum,
    Msum,
    Esum,
    Fsum,
    Tsum,
    Sym,
    Lift,
    Lift3,
    Rms1,
    Incexc,
    Ga,
    MzvOnes,
    Baseline,
    XiDecomp,
    Orbit,
    Pvm,
    Pshift,
}

impl Lemma {
    pub const ALL: [Lemma; 20] = [
        Lemma::Uab,
        Lemma::Xi,
        Lemma::Pgap,
        Lemma::Vsum,
        Lemma::Msum,
        Lemma::Esum,
        Lemma::Fsum,
        Lemma::Tsum,
        Lemma::Sym,
        Lemma::Lift,
        Lemma::Lift3,
        Lemma::Rms1,
        Lemma::Incexc,
        Lemma::Ga,
        Lemma::MzvOnes,
        Lemma::Baseline,
        Lemma::XiDecomp,
        Lemma::Orbit,
        Lemma::Pvm,
        Lemma::Pshift,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Lemma::Uab => "uab",
            Lemma::Xi => "xi",
            Lemma::Pgap => "pgap",
            Lemma::Vsum => "vsum",
            Lemma::Msum => "msum",
            Lemma::Esum => "esum",
            Lemma::Fsum => "fsum",
            Lemma::Tsum => "tsum",
            Lemma::Sym => "sym",
            Lemma::Lift => "lift",
            Lemma::Lift3 => "lift3",
            Lemma::Rms1 => "rms1",
            Lemma::Incexc => "incexc",
            Lemma::Ga => "ga",
            Lemma::MzvOnes => "mzv-ones",
            Lemma::Baseline => "baseline",
            Lemma::XiDecomp => "xidecomp",
            Lemma::Orbit => "orbit",
            Lemma::Pvm => "pvm",
            Lemma::Pshift => "pshift",
        }
    }

    pub fn check_id(&self) -> &'static str {
        match self {
            Lemma::Uab => "lemma.uab",
            Lemma::Xi => "cor.xi",
            Lemma::Pgap => "prop.pgap",
            Lemma::Vsum => "lemma.vsum",
            Lemma::Msum => "lemma.msum",
            Lemma::Esum => "lemma.esum",
            Lemma::Fsum => "lemma.fsum",
            Lemma::Tsum => "lemma.tsum",
            Lemma::Sym => "lemma.sym",
            Lemma::Lift => "lemma.lift",
            Lemma::Lift3 => "lemma.lift3",
            Lemma::Rms1 => "lemma.rms1",
            Lemma::Incexc => "lemma.incexc",
            Lemma::Ga => "lemma.ga",
            Lemma::MzvOnes => "mzv.ones",
            Lemma::Baseline => "baseline",
            Lemma::XiDecomp => "inv.xidecomp",
            Lemma::Orbit => "inv.orbit",
            Lemma::Pvm => "inv.pvm",
            Lemma::Pshift => "inv.pshift",
        }
    }
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lemma {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Lemma::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownLemmaName(s.to_string()))
    }
}

/// Cartesian grid for a lemma sweep. Each lemma reads only the fields it needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaGrid {
    pub p_min: u64,
    /// Exclusive upper bound on the prime.
    pub p_max: u64,
    pub n_max: u32,
    pub m_max: u64,
    pub kappa_max: u64,
    pub alpha_max: u64,
    pub g_max: Option<u32>,
    pub d_max: u32,
    pub w_max: u32,
    pub r_max: u32,
}

impl LemmaGrid {
    pub fn default_for(lemma: Lemma) -> Self {
        let base = LemmaGrid {
            p_min: 5,
            p_max: 32,
            n_max: 6,
            m_max: 4,
            kappa_max: 4,
            alpha_max: 2,
            g_max: None,
            d_max: 3,
            w_max: 5,
            r_max: 2,
        };
        match lemma {
            Lemma::Uab => LemmaGrid { kappa_max: 3, ..base },
            Lemma::Xi => LemmaGrid {
                n_max: 5,
                kappa_max: 3,
                ..base
            },
            Lemma::Tsum => LemmaGrid {
                p_max: 8,
                n_max: 5,
                m_max: 2,
                ..base
            },
            Lemma::Sym | Lemma::Lift | Lemma::Incexc => LemmaGrid { n_max: 8, ..base },
            Lemma::Lift3 => LemmaGrid {
                p_max: 14,
                r_max: 3,
                ..base
            },
            Lemma::Rms1 => LemmaGrid {
                p_max: 14,
                m_max: 3,
                r_max: 3,
                ..base
            },
            Lemma::Ga => LemmaGrid { kappa_max: 8, ..base },
            Lemma::MzvOnes => LemmaGrid { p_max: 40, ..base },
            Lemma::Baseline => LemmaGrid { p_max: 200, ..base },
            Lemma::XiDecomp => LemmaGrid {
                p_max: 14,
                n_max: 5,
                kappa_max: 3,
                ..base
            },
            Lemma::Orbit => LemmaGrid {
                p_max: 14,
                kappa_max: 2,
                ..base
            },
            _ => base,
        }
    }
}

/// Runs the named lemma check over `grid` (or its default grid).
pub fn verify_lemma(name: &str, grid: Option<&LemmaGrid>, options: &VerifyOptions) -> Result<SweepReport> {
    let lemma: Lemma = name.parse()?;
    let grid = grid.cloned().unwrap_or_else(|| LemmaGrid::default_for(lemma));
    let primes = primes_in_range(grid.p_min.max(5), grid.p_max);
    let pool = options.pool()?;
    let records = pool.install(|| -> Result<Vec<VerificationRecord>> {
        let tables = options.tables(&primes)?;
        let ctx = Ctx {
            lemma,
            grid: &grid,
            primes: &primes,
            tables: &tables,
            budget: &options.budget,
        };
        Ok(ctx.run())
    })?;
    let mut config = serde_json::to_value(&grid).expect("grid serializes");
    config["lemma"] = Value::String(lemma.name().to_string());
    Ok(SweepReport::new(config, records))
}

struct Ctx<'a> {
    lemma: Lemma,
    grid: &'a LemmaGrid,
    primes: &'a [u64],
    tables: &'a BTreeMap<u64, BernoulliTable>,
    budget: &'a Budget,
}

/// A unit of parallel work, expanded into one or more records.
#[derive(Debug, Clone)]
enum Job {
    Uab {
        p: u64,
        kappa: u64,
        alpha: u64,
        s: Vec<u32>,
    },
    Window {
        p: u64,
        n: u32,
        kappa: u64,
        alpha: u64,
        g: u32,
    },
    Gap {
        p: u64,
        n: u32,
        kappa: u64,
        g: u32,
    },
    Tsum {
        p: u64,
        n: u32,
        m: u64,
    },
    Conv {
        p: u64,
        n: u32,
        r: u32,
    },
    Ga {
        kappa: u64,
        g: u32,
        i: u32,
    },
    Ones {
        p: u64,
        n: u32,
    },
    Prime {
        p: u64,
    },
    XiDecomp {
        p: u64,
        n: u32,
        kappa: u64,
    },
    Orbit {
        p: u64,
        kappa: u64,
        d: u32,
        w: u32,
    },
}

impl Ctx<'_> {
    fn run(&self) -> Vec<VerificationRecord> {
        self.jobs().par_iter().flat_map_iter(|job| self.execute(job)).collect()
    }

    fn g_cap(&self, kappa: u64, n: u32) -> u32 {
        let cap = (kappa.saturating_sub(1)).min(n.saturating_sub(2) as u64) as u32;
        self.grid.g_max.map_or(cap, |g| g.min(cap))
    }

    fn jobs(&self) -> Vec<Job> {
        let g = self.grid;
        let mut jobs = Vec::new();
        match self.lemma {
            Lemma::Uab => {
                for &p in self.primes {
                    for kappa in 1..=g.kappa_max {
                        for alpha in 0..=g.alpha_max {
                            for d in 1..=g.d_max {
                                for w in d..=g.w_max {
                                    for s in compositions_exact(w, d as usize) {
                                        jobs.push(Job::Uab { p, kappa, alpha, s });
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Lemma::Xi => {
                for &p in self.primes {
                    for n in 2..=g.n_max {
                        for kappa in 1..=g.kappa_max {
                            for alpha in 0..=g.alpha_max {
                                jobs.push(Job::Window {
                                    p,
                                    n,
                                    kappa,
                                    alpha,
                                    g: 0,
                                });
                            }
                        }
                    }
                }
            }
            Lemma::Pgap | Lemma::Pshift => {
                let alpha_min = if self.lemma == Lemma::Pshift { 1 } else { 0 };
                for &p in self.primes {
                    for n in 3..=g.n_max {
                        for kappa in 2..=g.kappa_max {
                            for gap in 1..=self.g_cap(kappa, n) {
                                for alpha in alpha_min..=g.alpha_max {
                                    jobs.push(Job::Window {
                                        p,
                                        n,
                                        kappa,
                                        alpha,
                                        g: gap,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            Lemma::Vsum | Lemma::Msum | Lemma::Esum | Lemma::Fsum | Lemma::Pvm => {
                for &p in self.primes {
                    for n in 3..=g.n_max {
                        for kappa in 2..=g.kappa_max {
                            for gap in 1..=self.g_cap(kappa, n) {
                                jobs.push(Job::Gap { p, n, kappa, g: gap });
                            }
                        }
                    }
                }
            }
            Lemma::Tsum => {
                for &p in self.primes {
                    for n in 2..=g.n_max {
                        for m in 1..=g.m_max {
                            jobs.push(Job::Tsum { p, n, m });
                        }
                    }
                }
            }
            Lemma::Sym | Lemma::Lift | Lemma::Lift3 | Lemma::Rms1 | Lemma::Incexc => {
                let r_min = match self.lemma {
                    Lemma::Lift | Lemma::Rms1 => 2,
                    Lemma::Lift3 => 3,
                    _ => 1,
                };
                for &p in self.primes {
                    for n in 2..=g.n_max {
                        for r in r_min..=g.r_max {
                            jobs.push(Job::Conv { p, n, r });
                        }
                    }
                }
            }
            Lemma::Ga => {
                for kappa in 2..=g.kappa_max {
                    for gap in 1..kappa as u32 {
                        for i in 1..=gap {
                            jobs.push(Job::Ga { kappa, g: gap, i });
                        }
                    }
                }
            }
            Lemma::MzvOnes => {
                for &p in self.primes {
                    for n in 1..=g.n_max {
                        jobs.push(Job::Ones { p, n });
                    }
                }
            }
            Lemma::Baseline => jobs.extend(self.primes.iter().map(|&p| Job::Prime { p })),
            Lemma::XiDecomp => {
                for &p in self.primes {
                    for n in 2..=g.n_max {
                        for kappa in 1..=g.kappa_max {
                            jobs.push(Job::XiDecomp { p, n, kappa });
                        }
                    }
                }
            }
            Lemma::Orbit => {
                for &p in self.primes {
                    for kappa in 1..=g.kappa_max {
                        for d in 1..=g.d_max {
                            for w in d..=g.w_max {
                                jobs.push(Job::Orbit { p, kappa, d, w });
                            }
                        }
                    }
                }
            }
        }
        jobs
    }

    fn table(&self, p: u64) -> Result<&BernoulliTable> {
        self.tables
            .get(&p)
            .ok_or_else(|| Error::PreconditionViolated(format!("no Bernoulli table for p = {p}")))
    }

    fn execute(&self, job: &Job) -> Vec<VerificationRecord> {
        let check = self.lemma.check_id();
        let budget = self.budget;
        match *job {
            Job::Uab { p, kappa, alpha, ref s } => {
                let w: u32 = s.iter().sum();
                let d = s.len();
                let text = s.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
                let params: Params = vec![
                    ("p", p.into()),
                    ("kappa", kappa.into()),
                    ("alpha", alpha.into()),
                    ("s", ParamValue::Text(text)),
                ];
                let label = power_label(p, 2);
                if (w as u64) + 3 > p {
                    return vec![skipped(check, params, label, SkipReason::Precondition)];
                }
                let lhs =
                    WindowSpec::new(alpha, kappa, p).and_then(|win| u_sum(&win, &IndexVector::new(s.clone())?, budget));
                let rhs = self.table(p).and_then(|table| {
                    let sign = if d % 2 == 1 { 1 } else { -1 };
                    let c =
                        big_q(factorial(d as u64 - 1) * sign) * int_q(kappa as i64 * w as i64) / int_q(w as i64 + 1);
                    p_times_bernoulli(table, &c, p - w as u64 - 1)
                });
                vec![compare(check, params, label, lhs, rhs)]
            }
            Job::Window { p, n, kappa, alpha, g } => {
                let mut params: Params = vec![
                    ("p", p.into()),
                    ("n", n.into()),
                    ("kappa", kappa.into()),
                    ("alpha", alpha.into()),
                ];
                if g > 0 {
                    params.push(("g", g.into()));
                }
                let label = power_label(p, 2);
                if p < n as u64 + 2 {
                    return vec![skipped(check, params, label, SkipReason::Precondition)];
                }
                let (lhs, rhs) = match self.lemma {
                    Lemma::Xi => (
                        WindowSpec::new(alpha, kappa, p).and_then(|w| xi_sum(&w, n, budget)),
                        self.table(p).and_then(|t| {
                            let c =
                                big_q(binom(kappa, n as u64) - binom(kappa + n as u64 - 1, n as u64)) / int_q(n as i64);
                            p_times_bernoulli(t, &c, p - n as u64)
                        }),
                    ),
                    Lemma::Pgap => (
                        WindowSpec::new(alpha, kappa, p).and_then(|w| pgap_sum(&w, g, n, budget)),
                        self.table(p).and_then(|t| gap_closed_form(t, kappa, g, n)),
                    ),
                    Lemma::Pshift => {
                        let lhs = WindowSpec::new(0, kappa, p).and_then(|w0| {
                            let wa = WindowSpec::new(alpha, kappa, p)?;
                            Ok(pgap_sum(&w0, g, n, budget)? - pgap_sum(&wa, g, n, budget)?)
                        });
                        let rhs = (|| {
                            let e = e_sum(kappa, g, n, p, budget)?;
                            let f = f_sum(kappa, g, n, p, budget)?;
                            let mod_p2 = PrimePowerModulus::new(p, 2)?;
                            Ok(times_p(e + f, mod_p2) * mod_p2.residue_u64(alpha))
                        })();
                        (lhs, rhs)
                    }
                    _ => unreachable!("window jobs belong to xi, pgap and pshift"),
                };
                vec![compare(check, params, label, lhs, rhs)]
            }
            Job::Gap { p, n, kappa, g } => {
                let params: Params = vec![
                    ("p", p.into()),
                    ("n", n.into()),
                    ("kappa", kappa.into()),
                    ("g", g.into()),
                ];
                let (label, floor) = match self.lemma {
                    Lemma::Vsum | Lemma::Pvm => (power_label(p, 2), n as u64 + 2),
                    _ => (p.to_string(), n as u64 + 3),
                };
                if p < floor {
                    return vec![skipped(check, params, label, SkipReason::Precondition)];
                }
                let zero = |v: Result<Residue>| {
                    let rhs = v.as_ref().map(|x| x.modulus().zero()).map_err(Clone::clone);
                    (v, rhs)
                };
                let (lhs, rhs) = match self.lemma {
                    Lemma::Vsum => (
                        v_sum(kappa, g, n, p, budget),
                        self.table(p).and_then(|t| gap_closed_form(t, kappa, g, n)),
                    ),
                    Lemma::Msum => zero(m_sum(kappa, g, n, p, budget)),
                    Lemma::Esum => zero(e_sum(kappa, g, n, p, budget)),
                    Lemma::Fsum => zero(f_sum(kappa, g, n, p, budget)),
                    Lemma::Pvm => (
                        WindowSpec::new(0, kappa, p).and_then(|w| pgap_sum(&w, g, n, budget)),
                        (|| {
                            let v = v_sum(kappa, g, n, p, budget)?;
                            let m = m_sum(kappa, g, n, p, budget)?;
                            Ok(v - times_p(m, v.modulus()))
                        })(),
                    ),
                    _ => unreachable!("gap jobs belong to the V/M/E/F family"),
                };
                vec![compare(check, params, label, lhs, rhs)]
            }
            Job::Tsum { p, n, m } => {
                let params: Params = vec![("p", p.into()), ("n", n.into()), ("m", m.into())];
                if m % p == 0 {
                    return vec![skipped(check, params, "0".into(), SkipReason::Precondition)];
                }
                let lhs = (|| {
                    let mut total = Rational::zero();
                    for ell in 1..=n / 2 {
                        total += t_sum(n, ell, m, p, budget)?;
                    }
                    Ok(total * big_q(factorial(n as u64)) / int_q((m * p) as i64))
                })();
                let rhs = PrimePowerModulus::prime(p)
                    .and_then(|modulus| SumSpec::new(n, m, modulus, Variant::R))
                    .and_then(|spec| eval_brute_exact(&spec, budget));
                vec![compare(check, params, "0".into(), lhs.map(QDisplay), rhs.map(QDisplay))]
            }
            Job::Conv { p, n, r } => self.conv_job(p, n, r),
            Job::Ga { kappa, g, i } => {
                let params: Params = vec![("kappa", kappa.into()), ("g", g.into()), ("i", i.into())];
                let pair = chain_sum_identity(kappa, g, i);
                let lhs = pair.as_ref().map(|(a, _)| a.clone()).map_err(Clone::clone);
                let rhs = pair.map(|(_, b)| b);
                vec![compare(check, params, "0".into(), lhs, rhs)]
            }
            Job::Ones { p, n } => {
                let params: Params = vec![("p", p.into()), ("n", n.into())];
                let r = if n % 2 == 0 { 2 } else { 3 };
                let label = power_label(p, r);
                if p < n as u64 + 3 {
                    return vec![skipped(check, params, label, SkipReason::Precondition)];
                }
                let modulus = match PrimePowerModulus::new(p, r) {
                    Ok(m) => m,
                    Err(_) => return vec![skipped(check, params, label, SkipReason::Precondition)],
                };
                let lhs = IndexVector::ones(n as usize).and_then(|s| mhs_mod(p, &s, modulus, false));
                let rhs = self.table(p).and_then(|t| {
                    if n % 2 == 0 {
                        let b = beta(n + 1, t)?.value;
                        Ok(times_p(b, modulus))
                    } else {
                        let b = beta(n + 2, t)?.value;
                        let c = reduce_rational(&(int_q(n as i64 + 1) / int_q(2)), t.modulus())?;
                        let p2 = PrimePowerModulus::new(p, 2)?;
                        Ok(times_p(times_p(b * c, p2), modulus))
                    }
                });
                vec![compare(check, params, label, lhs, rhs)]
            }
            Job::Prime { p } => {
                let params: Params = vec![("p", p.into()), ("n", 3u32.into()), ("m", 1u64.into())];
                let lhs = PrimePowerModulus::prime(p)
                    .and_then(|modulus| SumSpec::new(3, 1, modulus, Variant::R))
                    .and_then(|spec| eval_conv(&spec, budget));
                let rhs = self
                    .table(p)
                    .and_then(|t| Ok(bernoulli_mod_p(t, p - 3)? * t.modulus().residue(-2)));
                vec![compare(check, params, p.to_string(), lhs, rhs)]
            }
            Job::XiDecomp { p, n, kappa } => {
                let params: Params = vec![("p", p.into()), ("n", n.into()), ("kappa", kappa.into())];
                let label = power_label(p, 2);
                if p < n as u64 {
                    return vec![skipped(check, params, label, SkipReason::Precondition)];
                }
                let lhs = WindowSpec::new(0, kappa, p).and_then(|w| xi_sum(&w, n, budget));
                let rhs = (|| {
                    let w = WindowSpec::new(0, kappa, p)?;
                    let mod_p2 = w.modulus();
                    let u = u_sum(&w, &IndexVector::ones(n as usize - 1)?, budget)?;
                    let inv = reduce_rational(&(Rational::one() / big_q(factorial(n as u64 - 1))), mod_p2)?;
                    let mut total = u * inv;
                    let cap = (kappa.saturating_sub(1)).min(n.saturating_sub(2) as u64) as u32;
                    for g in 1..=cap {
                        let term = pgap_sum(&w, g, n, budget)?;
                        total = if g % 2 == 0 { total + term } else { total - term };
                    }
                    Ok(total)
                })();
                vec![compare(check, params, label, lhs, rhs)]
            }
            Job::Orbit { p, kappa, d, w } => {
                let params: Params = vec![
                    ("p", p.into()),
                    ("kappa", kappa.into()),
                    ("d", d.into()),
                    ("w", w.into()),
                ];
                let label = power_label(p, 2);
                if p <= d as u64 {
                    return vec![skipped(check, params, label, SkipReason::Precondition)];
                }
                let result = (|| {
                    let win = WindowSpec::new(0, kappa, p)?;
                    let mod_p2 = win.modulus();
                    let mut chains = mod_p2.zero();
                    let mut unordered = mod_p2.zero();
                    for s in compositions_exact(w, d as usize) {
                        let s = IndexVector::new(s)?;
                        chains = chains + mhs_mod(kappa * p, &s, mod_p2, true)?;
                        unordered = unordered + u_sum(&win, &s, budget)?;
                    }
                    let inv = reduce_rational(&(Rational::one() / big_q(factorial(d as u64))), mod_p2)?;
                    Ok((chains, unordered * inv))
                })();
                let lhs = result.as_ref().map(|x| x.0).map_err(Clone::clone);
                let rhs = result.map(|x| x.1);
                vec![compare(check, params, label, lhs, rhs)]
            }
        }
    }

    /// The congruences among the sums themselves (symmetry, lifting,
    /// inclusion–exclusion), all evaluated by convolution.
    fn conv_job(&self, p: u64, n: u32, r: u32) -> Vec<VerificationRecord> {
        let check = self.lemma.check_id();
        let budget = self.budget;
        let label = power_label(p, r);
        let params = |m: u64| -> Params { vec![("p", p.into()), ("n", n.into()), ("m", m.into()), ("r", r.into())] };
        let ms: Vec<u64> = match self.lemma {
            Lemma::Rms1 | Lemma::Incexc => (1..=self.grid.m_max).collect(),
            _ => (1..n as u64).collect(),
        };
        let floor = match self.lemma {
            Lemma::Rms1 | Lemma::Incexc => 5,
            _ => n as u64 + 2,
        };
        let modulus = PrimePowerModulus::new(p, r);
        let admissible = |m: u64| modulus.is_ok() && p >= floor && !m.is_multiple_of(p);
        let conv = |variant: Variant, rr: u32, top: u64| -> Result<Vec<Residue>> {
            eval_conv_all(n, top, PrimePowerModulus::new(p, rr)?, variant, budget)
        };
        let top = ms.iter().copied().filter(|&m| admissible(m)).max().unwrap_or(0);
        let shared: Result<(Vec<Residue>, Vec<Residue>)> = if top == 0 {
            Ok((Vec::new(), Vec::new()))
        } else {
            match self.lemma {
                Lemma::Sym => conv(Variant::S, r, n as u64 - 1).map(|s| (s, Vec::new())),
                Lemma::Lift => conv(Variant::S, r, top).and_then(|hi| Ok((hi, conv(Variant::S, r - 1, n as u64 - 1)?))),
                Lemma::Lift3 => conv(Variant::S, r, top).and_then(|hi| Ok((hi, conv(Variant::S, 2, 1)?))),
                Lemma::Rms1 => conv(Variant::R, r, top).and_then(|rv| Ok((rv, conv(Variant::S, 2, 1)?))),
                Lemma::Incexc => conv(Variant::S, r, top).and_then(|s| Ok((s, conv(Variant::R, r, top)?))),
                _ => unreachable!("convolution jobs belong to the sum-level lemmas"),
            }
        };
        ms.into_iter()
            .map(|m| {
                if !admissible(m) {
                    return skipped(check, params(m), label.clone(), SkipReason::Precondition);
                }
                let modulus = *modulus.as_ref().expect("admissible implies a modulus");
                let (first, second) = match &shared {
                    Ok(v) => v,
                    Err(e) => {
                        return skipped(check, params(m), label.clone(), SkipReason::from_error(e));
                    }
                };
                let at = |v: &Vec<Residue>, k: u64| v[(k - 1) as usize];
                let lhs = Ok(at(first, m));
                let rhs: Result<Residue> = match self.lemma {
                    Lemma::Sym => {
                        let v = at(first, n as u64 - m);
                        Ok(if n.is_multiple_of(2) { v } else { -v })
                    }
                    Lemma::Lift => (1..n).try_fold(modulus.zero(), |acc, a| {
                        let g = gamma_coeff(n, m as u32, a)?;
                        let term = reduce_rational(&g, second[0].modulus())? * at(second, a as u64);
                        Ok(acc + times_p(term, modulus))
                    }),
                    Lemma::Lift3 => {
                        let sign = if m % 2 == 1 { 1 } else { -1 };
                        let c = modulus.residue_big(&(binom(n as u64 - 2, m - 1) * sign));
                        let base = modulus.residue_u64(second[0].value());
                        Ok(c * base * p_power(modulus, r - 2))
                    }
                    Lemma::Rms1 => {
                        let base = modulus.residue_u64(second[0].value());
                        Ok(modulus.residue_u64(m) * base * p_power(modulus, r - 2))
                    }
                    Lemma::Incexc => Ok((0..m).fold(modulus.zero(), |acc, k| {
                        let c = modulus.residue_big(&binom(n as u64, k));
                        let term = c * at(second, m - k);
                        if k % 2 == 0 {
                            acc + term
                        } else {
                            acc - term
                        }
                    })),
                    _ => unreachable!(),
                };
                compare(check, params(m), label.clone(), lhs, rhs)
            })
            .collect()
    }
}

/// `(−1)^{g+1} C(κ, g+1) C(n−1, g) · (B_{p−n}/n) · p` mod `p²`.
fn gap_closed_form(table: &BernoulliTable, kappa: u64, g: u32, n: u32) -> Result<Residue> {
    let sign = if g % 2 == 1 { 1 } else { -1 };
    let c = big_q(binom(kappa, g as u64 + 1) * binom(n as u64 - 1, g as u64) * sign) / int_q(n as i64);
    p_times_bernoulli(table, &c, table.p() - n as u64)
}

/// Rationals render as `a/b`, integers without a denominator.
#[derive(Debug, Clone, PartialEq)]
struct QDisplay(Rational);

impl fmt::Display for QDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}
