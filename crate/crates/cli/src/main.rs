use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use supercong_core::bernoulli::BernoulliCache;
use supercong_core::closedforms::{closed_form, conjecture_probe, interp_coefficients, ProbeOutcome};
use supercong_core::directsums::{eval_brute, eval_conv, SumSpec, Variant};
use supercong_core::verifier::{
    render_report, verify_lemma, verify_main, Lemma, LemmaGrid, MainConfig, ReportFormat, SweepReport, VerifyOptions,
};
use supercong_core::{Budget, Error, PrimePowerModulus};

/// Evaluate and verify congruences for restricted harmonic-type sums.
#[derive(Debug, Parser)]
#[command(name = "supercong", version)]
struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads for sweeps (default: one per core).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    /// Directory for cached Bernoulli tables.
    #[arg(long, global = true, env = "SUPERCONG_CACHE", default_value = "./.cache")]
    cache_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print B_0, …, B_{p−3} modulo p.
    Bernoulli {
        #[arg(long)]
        p: u64,
    },
    /// Evaluate R_n^(m)(p^r) or S_n^(m)(p^r) directly.
    Eval {
        variant: VariantArg,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        p: u64,
        #[arg(long, default_value_t = 1)]
        r: u32,
        #[arg(long, value_enum, default_value_t = Method::Conv)]
        method: Method,
    },
    /// Print the closed form as a combination of β-monomials.
    Formula {
        variant: VariantArg,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u64,
        #[arg(long, value_enum, default_value_t = FormulaFormat::Text)]
        format: FormulaFormat,
    },
    /// Sweep parameter grids and compare against predictions.
    Verify {
        #[command(subcommand)]
        target: VerifyTarget,
    },
    /// Interpolate closed-form coefficients as polynomials in m.
    Interp {
        #[arg(long)]
        n: u32,
        /// Degree bound for the interpolation (defaults to n).
        #[arg(long)]
        degree_bound: Option<u32>,
        /// Also run the sign-flip probe comparing S coefficients with R at negated parts.
        #[arg(long)]
        check_conjecture: bool,
        /// Largest m used by the probe.
        #[arg(long, default_value_t = 6, requires = "check_conjecture")]
        m_max: u64,
    },
}

#[derive(Debug, Subcommand)]
enum VerifyTarget {
    /// Convolution against the closed-form prediction.
    Main {
        #[arg(long, default_value_t = 2)]
        n_min: u32,
        #[arg(long)]
        n_max: u32,
        #[arg(long)]
        m_max: u64,
        #[arg(long, default_value_t = 5)]
        p_min: u64,
        /// Exclusive upper bound on p.
        #[arg(long)]
        p_max: u64,
        #[arg(long, default_value_t = 1)]
        r: u32,
        /// Restrict to one variant (default: both).
        #[arg(long)]
        variant: Option<VariantArg>,
    },
    /// One of the auxiliary identities, over its default grid unless overridden.
    Lemma {
        #[arg(long)]
        name: String,
        #[command(flatten)]
        grid: GridArgs,
    },
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    p_min: Option<u64>,
    /// Exclusive upper bound on p.
    #[arg(long)]
    p_max: Option<u64>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    m_max: Option<u64>,
    #[arg(long)]
    kappa_max: Option<u64>,
    #[arg(long)]
    alpha_max: Option<u64>,
    #[arg(long)]
    g_max: Option<u32>,
    #[arg(long)]
    d_max: Option<u32>,
    #[arg(long)]
    w_max: Option<u32>,
    #[arg(long)]
    r_max: Option<u32>,
}

impl GridArgs {
    fn apply(&self, mut grid: LemmaGrid) -> LemmaGrid {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    grid.$field = v;
                }
            )*};
        }
        set!(p_min, p_max, n_max, m_max, kappa_max, alpha_max, d_max, w_max, r_max);
        if self.g_max.is_some() {
            grid.g_max = self.g_max;
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    #[value(name = "R", alias = "r")]
    R,
    #[value(name = "S", alias = "s")]
    S,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::R => Variant::R,
            VariantArg::S => Variant::S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Conv,
    Brute,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormulaFormat {
    Text,
    Latex,
    Json,
}

/// Successful run; `false` means at least one check failed.
type Outcome = Result<bool, Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn options(cli: &Cli) -> VerifyOptions {
    VerifyOptions {
        budget: Budget::default(),
        threads: cli.threads.map(|t| t as usize),
        cache: Some(BernoulliCache::new(&cli.cache_dir)),
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Bernoulli { p } => {
            let table = BernoulliCache::new(&cli.cache_dir).get_or_compute(*p)?;
            if cli.json {
                println!("{}", table.to_json());
            } else {
                for (k, v) in table.values().iter().enumerate() {
                    println!("B_{k} ≡ {v} (mod {p})");
                }
            }
            Ok(true)
        }
        Command::Eval {
            variant,
            n,
            m,
            p,
            r,
            method,
        } => {
            let modulus = PrimePowerModulus::new(*p, *r)?;
            let spec = SumSpec::new(*n, *m, modulus, (*variant).into())?;
            let budget = Budget::default();
            let value = match method {
                Method::Conv => eval_conv(&spec, &budget)?,
                Method::Brute => eval_brute(&spec, &budget)?,
            };
            if cli.json {
                let out = json!({
                    "variant": Variant::from(*variant).to_string(),
                    "n": n, "m": m, "p": p, "r": r,
                    "value": value.value().to_string(),
                    "modulus": modulus.modulus().to_string(),
                });
                println!("{out}");
            } else {
                println!("{} (mod {})", value.value(), modulus.modulus());
            }
            Ok(true)
        }
        Command::Formula { variant, n, m, format } => {
            let combo = closed_form((*variant).into(), *n, *m)?;
            let text = match (cli.json, format) {
                (true, _) | (_, FormulaFormat::Json) => combo.to_json(),
                (_, FormulaFormat::Text) => combo.render_text(),
                (_, FormulaFormat::Latex) => combo.render_latex(),
            };
            println!("{text}");
            Ok(true)
        }
        Command::Verify { target } => {
            let report = match target {
                VerifyTarget::Main {
                    n_min,
                    n_max,
                    m_max,
                    p_min,
                    p_max,
                    r,
                    variant,
                } => {
                    let mut config = MainConfig::new(*n_max, *m_max, *p_min, *p_max, *r);
                    config.n_min = *n_min;
                    if let Some(v) = variant {
                        config.variants = vec![(*v).into()];
                    }
                    verify_main(&config, &options(cli))?
                }
                VerifyTarget::Lemma { name, grid } => {
                    let lemma: Lemma = name.parse()?;
                    let grid = grid.apply(LemmaGrid::default_for(lemma));
                    verify_lemma(name, Some(&grid), &options(cli))?
                }
            };
            print_report(cli, &report);
            Ok(report.all_passed())
        }
        Command::Interp {
            n,
            degree_bound,
            check_conjecture,
            m_max,
        } => {
            let polys = interp_coefficients(*n, degree_bound.unwrap_or(*n))?;
            let probe = if *check_conjecture {
                Some(conjecture_probe(*n, *m_max)?)
            } else {
                None
            };
            if cli.json {
                let mut out = json!({
                    "n": n,
                    "coefficients": polys.iter().map(|c| json!({
                        "monomial": c.monomial.indices(),
                        "poly": c.poly.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
                    })).collect::<Vec<_>>(),
                });
                if let Some(probe) = &probe {
                    out["probe"] = Value::Array(
                        probe
                            .entries
                            .iter()
                            .map(|e| {
                                json!({
                                    "m": e.m,
                                    "monomial": e.monomial.indices(),
                                    "s_coefficient": e.s_coefficient.to_string(),
                                    "continued": e.continued.to_string(),
                                    "outcome": e.outcome,
                                })
                            })
                            .collect(),
                    );
                }
                println!("{out}");
            } else {
                for c in &polys {
                    println!("{}: {}", c.monomial, c.render());
                }
                if let Some(probe) = &probe {
                    for e in &probe.entries {
                        let outcome = serde_json::to_value(e.outcome).expect("outcome serializes");
                        println!(
                            "m={} {}: S-side {} vs continued {} -> {}",
                            e.m,
                            e.monomial,
                            e.s_coefficient,
                            e.continued,
                            outcome.as_str().unwrap_or_default()
                        );
                    }
                    println!(
                        "probe: pass={}, fail={}, inconclusive={}",
                        probe.count(ProbeOutcome::Pass),
                        probe.count(ProbeOutcome::Fail),
                        probe.count(ProbeOutcome::Inconclusive)
                    );
                }
            }
            Ok(probe.is_none_or(|p| p.count(ProbeOutcome::Fail) == 0))
        }
    }
}

fn print_report(cli: &Cli, report: &SweepReport) {
    let format = if cli.json {
        ReportFormat::Json
    } else {
        ReportFormat::Text
    };
    print!("{}", render_report(report, format));
}
