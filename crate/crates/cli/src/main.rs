use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use schurmult::estimator::{cb_lower_bound, growth_csv, growth_experiment, Budget, GrowthBudget, GrowthRow};
use schurmult::marcinkiewicz::{
    check_1d, check_2d, check_continuous, check_dd, discretize_continuous, discretize_lazy, CellQuadrature,
    ConditionReport, ContinuousOptions, VariationRule, DEFAULT_DIM_CAP,
};
use schurmult::symbols::{catalog, dense_spec_json, load_symbol, CATALOG_NAMES, CONTINUOUS_CATALOG};
use schurmult::verify::{run_all, VerifyConfig, DEFAULT_THRESHOLD};
use schurmult::{DiscreteSymbol64, Exponent64, LatticeBox, Symbol};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "schurmult", version, about = "Schur multiplier conditions, identities and norm experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the Marcinkiewicz-type constants of a symbol.
    Check(CheckArgs),
    /// Run the exact-identity suites.
    Verify(VerifyArgs),
    /// Lower-bound the S_p multiplier norm on a window.
    Estimate(EstimateArgs),
    /// Estimates over a grid of exponents and window sizes.
    Growth(GrowthArgs),
    /// Average a continuous symbol over parallelogram cells.
    Discretize(DiscretizeArgs),
    /// List the built-in symbols.
    Catalog(CatalogArgs),
}

#[derive(Args, Clone)]
struct SymbolArgs {
    /// JSON symbol spec file.
    #[arg(long, conflicts_with = "catalog", required_unless_present = "catalog")]
    spec: Option<PathBuf>,
    /// Built-in symbol, e.g. `triangular` or `lacunary_toeplitz(7)`.
    #[arg(long)]
    catalog: Option<String>,
    /// Dimension for catalog symbols.
    #[arg(long, default_value_t = 1)]
    d: usize,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Rule {
    Block,
    Interior,
}

impl From<Rule> for VariationRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Block => VariationRule::Block,
            Rule::Interior => VariationRule::Interior,
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    symbol: SymbolArgs,
    /// Top block level for one-dimensional symbols.
    #[arg(long, default_value_t = 10)]
    nmax: u32,
    /// Top block level for symbols in dimension two and up.
    #[arg(long, default_value_t = 6)]
    kmax: u32,
    #[arg(long, default_value_t = -12, allow_hyphen_values = true)]
    jmin: i32,
    #[arg(long, default_value_t = 12, allow_hyphen_values = true)]
    jmax: i32,
    /// Base points `lo,hi`: the lattice box `[lo, hi)^d`, or the real interval for continuous symbols.
    #[arg(long, allow_hyphen_values = true)]
    base_range: Option<String>,
    #[arg(long, value_enum, default_value_t = Rule::Block)]
    rule: Rule,
    /// Fail (exit 1) when a constant exceeds this value.
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest window side (points) of the random matrices.
    #[arg(long, default_value_t = 16)]
    max_window: usize,
    #[arg(long, default_value_t = 2)]
    max_dim: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Corrupt one coefficient in the transference suite.
    #[arg(long)]
    inject_fault: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, default_value_t = Budget::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = Budget::default().iterations)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    symbol: SymbolArgs,
    /// Exponents, e.g. `4/3,2,4`.
    #[arg(long, required = true)]
    p: String,
    /// Window `[-N, N)^d`.
    #[arg(long, default_value_t = 16)]
    n: i64,
    /// Amplification `k` of `m ⊗ 1_k`.
    #[arg(long, default_value_t = 1)]
    amp: usize,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct GrowthArgs {
    #[command(flatten)]
    symbol: SymbolArgs,
    #[arg(long, required = true)]
    p: String,
    /// Window sizes `N`, e.g. `16,32,64`.
    #[arg(long, required = true)]
    n: String,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Ascent steps on each window after the first (defaults to `--iters`).
    #[arg(long)]
    chain_iters: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DiscretizeArgs {
    #[command(flatten)]
    symbol: SymbolArgs,
    /// Cell scale `2^-k`.
    #[arg(long, default_value_t = 3)]
    k: u32,
    /// Window `lo,hi` of the dense table, `[lo, hi)^d`.
    #[arg(long, default_value = "0,8", allow_hyphen_values = true)]
    window: String,
    /// Top block level of the discrete check.
    #[arg(long, default_value_t = 6)]
    nmax: u32,
    /// Base points `lo,hi` of the discrete check.
    #[arg(long, default_value = "-4,4", allow_hyphen_values = true)]
    base_range: String,
    #[arg(long, value_enum, default_value_t = Rule::Interior)]
    rule: Rule,
    /// Also write the transfer report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where the dense symbol spec goes (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

/// The resolved settings of a run, embedded in every output file.
#[derive(Debug, Clone, Default, Serialize)]
struct RunConfig {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    catalog: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    j_range: Option<(i32, i32)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rule: Option<Rule>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    p: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    n: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplification: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<Budget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chained_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<(i64, i64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify: Option<VerifyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<Format>,
}

enum Failure {
    /// Bad flags, unreadable or invalid specs, caps exceeded: exit 2.
    Input(String),
    /// A threshold or verification failed: exit 1.
    Breach(String),
}

type CliResult<T> = Result<T, Failure>;

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Growth(a) => cmd_growth(a),
        Command::Discretize(a) => cmd_discretize(a),
        Command::Catalog(a) => cmd_catalog(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Breach(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(args: &SymbolArgs) -> CliResult<Symbol<f64>> {
    match (&args.spec, &args.catalog) {
        (Some(path), _) => load_symbol(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        (None, Some(name)) => catalog(name, args.d).map_err(input),
        (None, None) => Err(Failure::Input("give --spec or --catalog".into())),
    }
}

fn discrete(args: &SymbolArgs) -> CliResult<DiscreteSymbol64> {
    load(args)?
        .discrete()
        .ok_or_else(|| Failure::Input("this command needs a discrete symbol".into()))
}

fn symbol_config(command: &'static str, args: &SymbolArgs, dim: usize) -> RunConfig {
    RunConfig {
        command,
        spec: args.spec.clone(),
        catalog: args.catalog.clone(),
        d: Some(dim),
        ..RunConfig::default()
    }
}

fn parse_pair(text: &str, what: &str) -> CliResult<(f64, f64)> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| Failure::Input(format!("{what} must be `lo,hi`, got `{text}`")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Failure::Input(format!("bad number `{s}` in {what}")))
    };
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if !(lo < hi) {
        return Err(Failure::Input(format!("{what} needs lo < hi, got `{text}`")));
    }
    Ok((lo, hi))
}

fn parse_int_pair(text: &str, what: &str) -> CliResult<(i64, i64)> {
    let (lo, hi) = parse_pair(text, what)?;
    if lo.fract() != 0.0 || hi.fract() != 0.0 {
        return Err(Failure::Input(format!("{what} must be integers, got `{text}`")));
    }
    Ok((lo as i64, hi as i64))
}

fn parse_exponents(text: &str) -> CliResult<Vec<(String, f64)>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            match Exponent64::parse(s) {
                Ok(Exponent64::Finite(p)) if p > 1.0 => Ok((s.to_string(), p)),
                Ok(_) => Err(Failure::Input(format!("p must lie in (1, ∞), got `{s}`"))),
                Err(e) => Err(Failure::Input(e)),
            }
        })
        .collect()
}

fn parse_sizes(text: &str) -> CliResult<Vec<i64>> {
    text.split(',')
        .map(|s| match s.trim().parse::<i64>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::Input(format!("window sizes must be positive integers, got `{s}`"))),
        })
        .collect()
}

fn config_json(config: &RunConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

/// `# config: {...}` followed by `body`.
fn with_csv_header(config: &RunConfig, body: &str) -> String {
    format!("# config: {}\n{body}", config_json(config))
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

fn check_discrete(
    m: &DiscreteSymbol64,
    n_max: u32,
    k_max: u32,
    base: &LatticeBox,
    rule: VariationRule,
) -> CliResult<ConditionReport<f64>> {
    match m.dim() {
        1 => check_1d(m, n_max, base, rule),
        2 => check_2d(m, k_max, base),
        _ => check_dd(m, k_max, base, DEFAULT_DIM_CAP),
    }
    .map_err(input)
}

fn threshold_breaches(report: &ConditionReport<f64>, threshold: Option<f64>) -> Vec<String> {
    report
        .constants()
        .into_iter()
        .filter(|&(_, v)| !v.is_finite() || threshold.is_some_and(|t| v > t))
        .map(|(name, v)| format!("{name} = {v}"))
        .collect()
}

fn summary(report: &ConditionReport<f64>) -> String {
    let mut s = format!("{} ({:?}, d={})", report.symbol, report.checker, report.dim);
    for (name, v) in report.constants() {
        let _ = write!(s, " {name}={v}");
    }
    if report.non_uniform {
        s.push_str(" [top level still growing]");
    }
    s
}

fn cmd_check(a: CheckArgs) -> CliResult<()> {
    let symbol = load(&a.symbol)?;
    let dim = symbol.dim();
    let mut config = symbol_config("check", &a.symbol, dim);
    config.threshold = a.threshold;
    config.out = a.output.out.clone();
    config.format = Some(a.output.format);
    let report = match symbol {
        Symbol::Discrete(m) => {
            let (lo, hi) = match &a.base_range {
                Some(text) => parse_int_pair(text, "--base-range")?,
                None => (-16, 16),
            };
            config.base_range = Some((lo as f64, hi as f64));
            if dim == 1 {
                config.n_max = Some(a.nmax);
                config.rule = Some(a.rule);
            } else {
                config.k_max = Some(a.kmax);
            }
            check_discrete(&m, a.nmax, a.kmax, &LatticeBox::cube(dim, lo, hi), a.rule.into())?
        }
        Symbol::Continuous(m) => {
            let mut opts = ContinuousOptions::for_dim(dim);
            opts.j_min = a.jmin;
            opts.j_max = a.jmax;
            if let Some(text) = &a.base_range {
                opts.base_range = parse_pair(text, "--base-range")?;
            }
            config.j_range = Some((opts.j_min, opts.j_max));
            config.base_range = Some(opts.base_range);
            check_continuous(&m, &opts).map_err(input)?
        }
    };
    let text = match a.output.format {
        Format::Json => pretty(&json!({ "config": config, "report": report })),
        Format::Csv => with_csv_header(&config, &report.to_csv().map_err(input)?),
    };
    emit(&a.output.out, &text)?;
    eprintln!("{}", summary(&report));
    let breaches = threshold_breaches(&report, a.threshold);
    if breaches.is_empty() {
        Ok(())
    } else {
        Err(Failure::Breach(format!("threshold breached: {}", breaches.join(", "))))
    }
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    if !(a.threshold > 0.0) {
        return Err(Failure::Input("--threshold must be positive".into()));
    }
    let vc = VerifyConfig {
        trials: a.trials,
        seed: a.seed,
        max_window: a.max_window,
        max_dim: a.max_dim,
        threshold: a.threshold,
        inject_fault: a.inject_fault,
    };
    let config = RunConfig {
        command: "verify",
        verify: Some(vc.clone()),
        out: a.output.out.clone(),
        format: Some(a.output.format),
        ..RunConfig::default()
    };
    let report = run_all(&vc);
    let text = match a.output.format {
        Format::Json => pretty(&json!({ "config": config, "report": report })),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for s in &report.suites {
                w.serialize(s).map_err(input)?;
            }
            let body = String::from_utf8(w.into_inner().map_err(input)?).expect("csv is utf-8");
            with_csv_header(&config, &body)
        }
    };
    emit(&a.output.out, &text)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for s in &report.suites {
        eprintln!(
            "{} {}: {} trials, max residual {:e}",
            if s.passed { "ok  " } else { "FAIL" },
            s.name,
            s.trials,
            s.max_residual
        );
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Breach("identity verification failed".into()))
    }
}

#[derive(Serialize)]
struct EstimateRow {
    symbol: String,
    d: usize,
    p: String,
    #[serde(rename = "N")]
    n: i64,
    k_amp: usize,
    estimate: f64,
    reference: f64,
    ratio: f64,
    restarts: usize,
    iterations: usize,
    seed: u64,
    max_abs: f64,
    zero_symbol: bool,
}

fn cmd_estimate(a: EstimateArgs) -> CliResult<()> {
    let m = discrete(&a.symbol)?;
    let dim = m.dim();
    let ps = parse_exponents(&a.p)?;
    if a.n <= 0 {
        return Err(Failure::Input("--n must be positive".into()));
    }
    if a.amp == 0 {
        return Err(Failure::Input("--amp must be at least 1".into()));
    }
    let budget = Budget {
        restarts: a.budget.restarts,
        iterations: a.budget.iters,
    };
    let mut config = symbol_config("estimate", &a.symbol, dim);
    config.p = ps.iter().map(|(s, _)| s.clone()).collect();
    config.n = vec![a.n];
    config.amplification = Some(a.amp);
    config.budget = Some(budget);
    config.seed = Some(a.budget.seed);
    config.threshold = a.threshold;
    config.out = a.output.out.clone();
    config.format = Some(a.output.format);
    let window = LatticeBox::cube(dim, -a.n, a.n);
    let max_abs = m.tabulate(&window, &window).map_err(input)?.max_abs();
    let mut rows = Vec::new();
    for (label, p) in &ps {
        let r = cb_lower_bound(&m, &window, *p, a.amp, budget, a.budget.seed).map_err(input)?;
        let reference = schurmult::bound_shape(*p, dim as u32 + 2);
        rows.push(EstimateRow {
            symbol: m.label().to_string(),
            d: dim,
            p: label.clone(),
            n: a.n,
            k_amp: r.amplification,
            estimate: r.value,
            reference,
            ratio: r.value / reference,
            restarts: r.restarts,
            iterations: r.iterations,
            seed: r.seed,
            max_abs,
            zero_symbol: r.zero_symbol,
        });
    }
    let text = match a.output.format {
        Format::Json => pretty(&json!({ "config": config, "results": rows })),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(input)?;
            }
            let body = String::from_utf8(w.into_inner().map_err(input)?).expect("csv is utf-8");
            with_csv_header(&config, &body)
        }
    };
    emit(&a.output.out, &text)?;
    for r in &rows {
        eprintln!("p={}: estimate {}", r.p, r.estimate);
    }
    match a.threshold {
        Some(t) if rows.iter().any(|r| r.estimate > t) => {
            Err(Failure::Breach(format!("an estimate exceeds the threshold {t}")))
        }
        _ => Ok(()),
    }
}

/// Gnuplot data: one block per exponent, separated by two blank lines.
fn gnuplot_data(config: &RunConfig, rows: &[GrowthRow]) -> String {
    let mut out = format!("# config: {}\n", config_json(config));
    let mut ps: Vec<f64> = Vec::new();
    for r in rows {
        if !ps.contains(&r.p) {
            ps.push(r.p);
        }
    }
    for (i, p) in ps.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# p = {p}\n# N estimate reference ratio");
        for r in rows.iter().filter(|r| r.p == *p) {
            let _ = writeln!(out, "{} {} {} {}", r.n, r.estimate, r.reference, r.ratio);
        }
    }
    out
}

fn cmd_growth(a: GrowthArgs) -> CliResult<()> {
    let m = discrete(&a.symbol)?;
    let dim = m.dim();
    let ps = parse_exponents(&a.p)?;
    let ns = parse_sizes(&a.n)?;
    let budget = GrowthBudget {
        first: Budget {
            restarts: a.budget.restarts,
            iterations: a.budget.iters,
        },
        chained_iterations: a.chain_iters.unwrap_or(a.budget.iters),
    };
    let mut config = symbol_config("growth", &a.symbol, dim);
    config.p = ps.iter().map(|(s, _)| s.clone()).collect();
    config.n = ns.clone();
    config.budget = Some(budget.first);
    config.chained_iterations = Some(budget.chained_iterations);
    config.seed = Some(a.budget.seed);
    config.out = a.output.out.clone();
    config.format = Some(a.output.format);
    let p_values: Vec<f64> = ps.iter().map(|&(_, p)| p).collect();
    let rows = growth_experiment(&m, &p_values, &ns, budget, a.budget.seed).map_err(input)?;
    let text = match a.output.format {
        Format::Csv => with_csv_header(&config, &growth_csv(&rows).map_err(input)?),
        Format::Json => pretty(&json!({ "config": config, "rows": rows })),
    };
    emit(&a.output.out, &text)?;
    if let Some(path) = &a.output.out {
        let dat = path.with_extension("dat");
        if dat != *path {
            std::fs::write(&dat, gnuplot_data(&config, &rows))
                .map_err(|e| Failure::Input(format!("{}: {e}", dat.display())))?;
        }
    }
    for r in &rows {
        eprintln!("p={:.4} N={}: estimate {:.6} ratio {:.3e}", r.p, r.n, r.estimate, r.ratio);
    }
    Ok(())
}

fn cmd_discretize(a: DiscretizeArgs) -> CliResult<()> {
    let symbol = load(&a.symbol)?;
    let dim = symbol.dim();
    let m = symbol
        .continuous()
        .ok_or_else(|| Failure::Input("discretize needs a continuous symbol".into()))?;
    let (lo, hi) = parse_int_pair(&a.window, "--window")?;
    let (base_lo, base_hi) = parse_int_pair(&a.base_range, "--base-range")?;
    let mut config = symbol_config("discretize", &a.symbol, dim);
    config.k = Some(a.k);
    config.window = Some((lo, hi));
    config.n_max = Some(a.nmax);
    config.base_range = Some((base_lo as f64, base_hi as f64));
    config.rule = Some(a.rule);
    config.out = a.out.clone();

    let quad = CellQuadrature::default();
    let window = LatticeBox::cube(dim, lo, hi);
    let dense = discretize_continuous(&m, a.k, &window, quad).map_err(input)?;
    let table = dense.tabulate(&window, &window).map_err(input)?;
    let mut spec = dense_spec_json(&table, dense.label());
    spec["config"] = serde_json::to_value(&config).expect("config serializes");
    emit(&a.out, &pretty(&spec))?;

    let base = LatticeBox::cube(dim, base_lo, base_hi);
    let lazy = discretize_lazy(&m, a.k, quad);
    let discrete_report = check_discrete(&lazy, a.nmax, a.nmax, &base, a.rule.into())?;
    let continuous_report = check_continuous(&m, &ContinuousOptions::for_dim(dim)).map_err(input)?;
    let a_const = continuous_report.continuous.unwrap_or(f64::NAN);
    let variation = discrete_report.single_direction.or(discrete_report.mixed).unwrap_or(0.0);
    let transfer = json!({
        "config": config,
        "continuous_A": a_const,
        "discrete_constants": discrete_report.constants().into_iter().collect::<std::collections::BTreeMap<_, _>>(),
        "discrete_variation": variation,
        "within_A": variation <= a_const + 1e-6,
    });
    if let Some(path) = &a.report {
        std::fs::write(path, pretty(&transfer)).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    eprintln!("continuous A = {a_const}; discrete {}", summary(&discrete_report));
    Ok(())
}

fn cmd_catalog(a: CatalogArgs) -> CliResult<()> {
    let kind = |name: &str| {
        let base = name.split('(').next().unwrap_or(name);
        if CONTINUOUS_CATALOG.contains(&base) {
            "continuous"
        } else {
            "discrete"
        }
    };
    let text = match a.format {
        Format::Json => pretty(&json!(CATALOG_NAMES
            .iter()
            .map(|n| json!({ "name": n, "kind": kind(n) }))
            .collect::<Vec<_>>())),
        Format::Csv => {
            let mut s = String::from("name,kind\n");
            for n in CATALOG_NAMES {
                let _ = writeln!(s, "\"{n}\",{}", kind(n));
            }
            s
        }
    };
    emit(&None, &text)
}
