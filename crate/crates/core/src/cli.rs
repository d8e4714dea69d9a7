//! Command-line entry points. Every command writes a JSON report (or a CSV
//! sweep) that echoes its configuration and seeds, so a run can be repeated
//! bit for bit.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::{full_constants, ConstantsConfig, ConstantsReport, PqGrid};
use crate::corona::{packing_ratio, CoronaInstance, CoronaSummary, KPolicy};
use crate::dyadic::{sample_shift_pair, ShiftPair};
use crate::explorer::{export, search, MutationRates, SearchConfig};
use crate::goodbad::{bad_probability_sweep, epsilon_sweep, sweep_csv};
use crate::harness::{
    frozen_bounds, full_report, paraproduct_summary, CheckResult, HarnessConfig, InstanceInfo, ParaproductSummary,
    VerificationReport, REPORT_VERSION,
};
use crate::measure::{load_measure, normalize_pair, DiscreteMeasure, WeightedFunction};
use crate::paraproduct::ParaproductConfig;
use crate::{Error, Result};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "CORONA_LAB_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "corona-lab", version, about = "Two-weight Hilbert transform toolkit for discrete measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Testing, A2, Poisson A2, pivotal constants and the operator norm.
    Analyze(AnalyzeArgs),
    /// Stopping tree and packing of the corona decomposition.
    Corona(CoronaArgs),
    /// Monte-Carlo sweeps of bad-interval probabilities.
    Goodbad(GoodbadArgs),
    /// Paraproduct sequences and their Carleson and embedding constants.
    Paraproducts(ParaproductArgs),
    /// Full verification harness on one instance.
    Verify(VerifyArgs),
    /// Evolutionary search for pairs with a large pivotal constant.
    Search(SearchArgs),
}

#[derive(Debug, Args, Serialize)]
struct PairArgs {
    /// Measure file for μ.
    #[arg(long)]
    mu: PathBuf,
    /// Measure file for ν.
    #[arg(long)]
    nu: PathBuf,
    /// Lattice depth below the root.
    #[arg(long, default_value_t = 6)]
    depth: u32,
    /// Seed of a random shift pair; the unshifted pair when absent.
    #[arg(long)]
    shift_seed: Option<u64>,
}

impl PairArgs {
    fn shifts(&self) -> ShiftPair {
        self.shift_seed.map_or(ShiftPair::rigid(0.0, 0.0), sample_shift_pair)
    }

    fn load(&self) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
        Ok((load_measure(&self.mu)?, load_measure(&self.nu)?))
    }

    fn constants_config(&self, pq_iterations: u32) -> ConstantsConfig {
        ConstantsConfig {
            depth: self.depth,
            pq_grid: PqGrid { iterations: pq_iterations },
            shifts: self.shifts(),
            ..ConstantsConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Golden-section refinements of the Poisson A2 grid.
    #[arg(long, default_value_t = PqGrid::default().iterations)]
    pq_iterations: u32,
    /// Report path; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CoronaArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Stopping threshold K = factor · pivotal constant.
    #[arg(long, default_value_t = 4.0)]
    k_factor: f64,
    /// Fixed stopping threshold, overriding --k-factor.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GoodbadArgs {
    /// Inclusive range `a..b` or a single value.
    #[arg(long, default_value = "2..10", value_parser = parse_range)]
    r: (u32, u32),
    #[arg(long, default_value_t = 20000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Largest scale ratio examined, as a power of two.
    #[arg(long, default_value_t = 40)]
    scale_cap: u32,
    /// Sweep ‖f_bad‖/‖f‖ for a random function on this measure instead of
    /// the probability that an interval is bad.
    #[arg(long)]
    epsilon: Option<PathBuf>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ParaproductArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Scale gap of the first paraproduct.
    #[arg(long, default_value_t = 2)]
    r: u32,
    #[arg(long, default_value_t = 6)]
    j_max: u32,
    #[arg(long, default_value_t = 4.0)]
    k_factor: f64,
    /// Seed of the random test function.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Samples per ensemble lemma check.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Rotations sampled by the circle check.
    #[arg(long, default_value_t = 32)]
    circle_samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SearchArgs {
    #[arg(long, default_value_t = 16)]
    population: usize,
    #[arg(long, default_value_t = 8)]
    generations: usize,
    #[arg(long, default_value_t = 4)]
    elite: usize,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 48)]
    max_atoms: usize,
    #[arg(long, default_value_t = 6)]
    depth: u32,
    #[arg(long, default_value_t = 8)]
    max_depth: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory receiving ranked measure files and `summary.csv`.
    #[arg(long)]
    #[serde(skip)]
    export_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> std::result::Result<(u32, u32), String> {
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("`{t}`: {e}"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if a == 0 || a > b {
        return Err(format!("range `{s}` must satisfy 1 <= a <= b"));
    }
    Ok((a, b))
}

/// Report envelope shared by the JSON-producing commands.
#[derive(Debug, Serialize)]
struct Report {
    version: u32,
    command: &'static str,
    config: serde_json::Value,
    instance: Option<InstanceInfo>,
    constants: Option<ConstantsReport>,
    corona: Option<CoronaSummary>,
    paraproducts: Option<ParaproductSummary>,
    checks: Vec<CheckResult>,
    seeds: BTreeMap<String, u64>,
    flags: Vec<String>,
}

impl Report {
    fn new(command: &'static str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            version: REPORT_VERSION,
            command,
            config: serde_json::to_value(config)?,
            instance: None,
            constants: None,
            corona: None,
            paraproducts: None,
            checks: Vec::new(),
            seeds: BTreeMap::new(),
            flags: Vec::new(),
        })
    }

    fn status(&self) -> i32 {
        if self.flags.is_empty() {
            EXIT_OK
        } else {
            EXIT_FLAGGED
        }
    }
}

#[derive(Debug, Serialize)]
struct VerifyOutput<'a> {
    command: &'static str,
    config: serde_json::Value,
    #[serde(flatten)]
    report: &'a VerificationReport,
}

fn instance_info(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<InstanceInfo> {
    Ok(InstanceInfo {
        mu_label: mu.label.clone(),
        nu_label: nu.label.clone(),
        mu_atoms: mu.len(),
        nu_atoms: nu.len(),
        normalization: normalize_pair(mu, nu)?.map,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            so.flush()?;
        }
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    emit(out, &s)
}

fn analyze(a: &AnalyzeArgs) -> Result<i32> {
    let (mu, nu) = a.pair.load()?;
    let cfg = a.pair.constants_config(a.pq_iterations);
    let mut rep = Report::new("analyze", a)?;
    rep.instance = Some(instance_info(&mu, &nu)?);
    rep.seeds.insert("shifts".into(), cfg.shifts.seed);
    let c = full_constants(&mu, &nu, &cfg)?;
    if !c.opnorm_converged {
        rep.flags.push("constants: operator norm iteration did not converge".into());
    }
    rep.constants = Some(c);
    emit_json(a.out.as_deref(), &rep)?;
    Ok(rep.status())
}

fn k_policy(k: Option<f64>, factor: f64) -> Result<KPolicy> {
    match k {
        Some(k) if k.is_finite() && k > 0.0 => Ok(KPolicy::Fixed { k }),
        Some(k) => Err(Error::ParameterOutOfRange(format!("k = {k}"))),
        None if factor.is_finite() && factor > 0.0 => Ok(KPolicy::PivotalMultiple { factor }),
        None => Err(Error::ParameterOutOfRange(format!("k-factor = {factor}"))),
    }
}

fn corona(a: &CoronaArgs) -> Result<i32> {
    let (mu, nu) = a.pair.load()?;
    let policy = k_policy(a.k, a.k_factor)?;
    let shifts = a.pair.shifts();
    let mut rep = Report::new("corona", a)?;
    rep.instance = Some(instance_info(&mu, &nu)?);
    rep.seeds.insert("shifts".into(), shifts.seed);
    let inst = CoronaInstance::build(&mu, &nu, &shifts, a.pair.depth, policy)?;
    rep.checks.push(CheckResult::new(
        "corona_packing",
        packing_ratio(&inst.tree),
        frozen_bounds().corona_packing,
        shifts.seed,
        inst.tree.len(),
        BTreeMap::new(),
    ));
    rep.corona = Some(inst.summary());
    emit_json(a.out.as_deref(), &rep)?;
    Ok(rep.status())
}

fn goodbad(a: &GoodbadArgs) -> Result<i32> {
    let rs: Vec<u32> = (a.r.0..=a.r.1).collect();
    if a.scale_cap < a.r.1 {
        return Err(Error::ParameterOutOfRange(format!("scale-cap {} below r = {}", a.scale_cap, a.r.1)));
    }
    let rows = match &a.epsilon {
        None => bad_probability_sweep(&rs, a.scale_cap, a.samples, a.seed)?,
        Some(path) => {
            let mu = std::sync::Arc::new(load_measure(path)?);
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let values = (0..mu.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = WeightedFunction::new(mu, values)?;
            epsilon_sweep(&f, &rs, a.scale_cap, a.samples, a.seed)?
        }
    };
    emit(a.out.as_deref(), &sweep_csv(&rows))?;
    Ok(EXIT_OK)
}

fn paraproducts(a: &ParaproductArgs) -> Result<i32> {
    let (mu, nu) = a.pair.load()?;
    let cfg = a.pair.constants_config(PqGrid::default().iterations);
    let policy = k_policy(None, a.k_factor)?;
    if a.r == 0 {
        return Err(Error::ParameterOutOfRange("r must be positive".into()));
    }
    let pcfg = ParaproductConfig { r: a.r, j_max: a.j_max, ..ParaproductConfig::default() };
    let mut rep = Report::new("paraproducts", a)?;
    rep.instance = Some(instance_info(&mu, &nu)?);
    rep.seeds.insert("shifts".into(), cfg.shifts.seed);
    rep.seeds.insert("paraproduct_f".into(), a.seed);
    let c = full_constants(&mu, &nu, &cfg)?;
    let inst = CoronaInstance::build(&mu, &nu, &cfg.shifts, a.pair.depth, policy)?;
    let p = paraproduct_summary(&inst, &pcfg, c.cchi_forward, a.seed)?;
    let fb = frozen_bounds();
    let n = inst.tree.len();
    rep.checks.push(CheckResult::new("b_testing", p.b_ratio_max, fb.b_testing, cfg.shifts.seed, n, BTreeMap::new()));
    rep.checks.push(CheckResult::new("pi_o_identity", p.pi_o_identity_error, fb.pi_o_identity, a.seed, 1, BTreeMap::new()));
    if !c.opnorm_converged {
        rep.flags.push("constants: operator norm iteration did not converge".into());
    }
    rep.constants = Some(c);
    rep.corona = Some(inst.summary());
    rep.paraproducts = Some(p);
    emit_json(a.out.as_deref(), &rep)?;
    Ok(rep.status())
}

fn verify(a: &VerifyArgs) -> Result<i32> {
    let (mu, nu) = a.pair.load()?;
    let cfg = HarnessConfig {
        constants: a.pair.constants_config(PqGrid::default().iterations),
        ensemble_samples: a.samples,
        circle_samples: a.circle_samples,
        seed: a.seed,
        ..HarnessConfig::default()
    };
    let report = full_report(&mu, &nu, &cfg)?;
    let out = VerifyOutput { command: "verify", config: serde_json::to_value(a)?, report: &report };
    emit_json(a.out.as_deref(), &out)?;
    Ok(if report.flags.is_empty() { EXIT_OK } else { EXIT_FLAGGED })
}

fn run_search(a: &SearchArgs) -> Result<i32> {
    let cfg = SearchConfig {
        population: a.population,
        generations: a.generations,
        elite: a.elite,
        top_k: a.top_k,
        max_atoms: a.max_atoms,
        max_depth: a.max_depth,
        rates: MutationRates::default(),
        constants: ConstantsConfig { depth: a.depth, ..ConstantsConfig::default() },
        seed: a.seed,
        ..SearchConfig::default()
    };
    let result = search(&cfg)?;
    if let Some(dir) = &a.export_dir {
        export(&result, dir)?;
    }
    emit_json(a.out.as_deref(), &result)?;
    let flagged = result.candidates.iter().any(|c| !c.constants.opnorm_converged);
    Ok(if flagged { EXIT_FLAGGED } else { EXIT_OK })
}

/// Worker count from `CORONA_LAB_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::ParameterOutOfRange(format!("{THREADS_ENV} = `{v}`"))),
        },
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Corona(a) => corona(a),
        Command::Goodbad(a) => goodbad(a),
        Command::Paraproducts(a) => paraproducts(a),
        Command::Verify(a) => verify(a),
        Command::Search(a) => run_search(a),
    }
}

/// Runs one command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..10"), Ok((2, 10)));
        assert_eq!(parse_range("2..=4"), Ok((2, 4)));
        assert_eq!(parse_range("5"), Ok((5, 5)));
        assert!(parse_range("4..2").is_err());
        assert!(parse_range("0..2").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["corona-lab", "nonsense"]), EXIT_INVALID);
        assert_eq!(run(["corona-lab", "analyze", "--bogus"]), EXIT_INVALID);
        assert_eq!(run(["corona-lab", "analyze", "--mu", "/nonexistent/a.json", "--nu", "/nonexistent/b.json"]), EXIT_INVALID);
    }
}
