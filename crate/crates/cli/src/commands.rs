//! Subcommands and the exit-code contract: 0 converged or feasible,
//! 1 input error, 2 non-convergence, 3 verification failure.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpo_core::{
    benchmark, generate, optimize_full, optimize_pair, verify_cof, BenchMode, BenchSettings,
    CofTolerances, Direction, FullResult, FullStatus, JacobianPath, Market, PairConfig, PairResult,
    PairStatus, RoutingSpec, ScenarioSpec, SolverConfig, TradeInstructionMatrix,
};

use crate::document::{CurveSetDocument, DocumentError};
use crate::instructions::InstructionsDocument;
use crate::table;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable holding the default `--abs-tol-usd`.
pub const ABS_TOL_ENV: &str = "MPO_ABS_TOL_USD";

#[derive(Debug, Parser)]
#[command(
    name = "mpo",
    version,
    about = "Marginal-price arbitrage and routing for AMM curve sets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the risk-free arbitrage of a curve set.
    Arb(SolveArgs),
    /// Route prescribed token flows through a curve set.
    Route(RouteArgs),
    /// Check trade instructions against a curve set.
    Verify(VerifyArgs),
    /// Generate a random curve set document.
    Gen(GenArgs),
    /// Time the solvers on generated markets and write CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pair,
    Full,
    /// Pair mode for single-pair inputs, full mode otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JacobianPathArg {
    JacobianFirst,
    SumFirst,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Convergence threshold on the mean residual, in USD.
    #[arg(long, env = ABS_TOL_ENV)]
    pub abs_tol_usd: Option<f64>,
    /// Fraction of each Newton step taken.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Newton iteration limit.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "jacobian-first")]
    pub jacobian_path: JacobianPathArg,
    /// Take every damped Newton step whole.
    #[arg(long)]
    pub no_line_search: bool,
}

impl SolverFlags {
    pub fn config(&self) -> Result<SolverConfig, CliError> {
        let mut c = SolverConfig::default();
        if let Some(t) = self.abs_tol_usd {
            if !(t > 0.0) {
                return Err(CliError::input(format!(
                    "--abs-tol-usd must be positive, got {t}"
                )));
            }
            c.abs_tol_usd = t;
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(CliError::input(format!(
                    "--eta must be in (0, 1], got {eta}"
                )));
            }
            c.eta = eta;
        }
        if let Some(n) = self.max_iter {
            c.max_iter = n;
        }
        c.jacobian_path = match self.jacobian_path {
            JacobianPathArg::JacobianFirst => JacobianPath::JacobianFirst,
            JacobianPathArg::SumFirst => JacobianPath::SumFirst,
        };
        c.line_search = !self.no_line_search;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Curve set document (JSON).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: Mode,
    /// Retry single-pair inputs in pair mode when full mode fails.
    #[arg(long)]
    pub escalate: bool,
    /// Token profits are taken in; defaults to the document's routing
    /// target, else its first token.
    #[arg(long)]
    pub target: Option<String>,
    /// Also write the instructions as JSON to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Net amount of a token to push into the curves, `TOKEN=AMOUNT`;
    /// negative to take it out. Replaces the document's flows.
    #[arg(long = "flow", value_parser = parse_flow)]
    pub flows: Vec<(String, f64)>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Curve set document the instructions were computed for.
    pub input: PathBuf,
    /// Instructions JSON as written by `--json`.
    pub instructions: PathBuf,
    /// Routing flows the instructions should deliver; defaults to the
    /// document's flows.
    #[arg(long = "flow", value_parser = parse_flow)]
    pub flows: Vec<(String, f64)>,
    /// Bound on the mean self-financing residual, in USD.
    #[arg(long, env = ABS_TOL_ENV)]
    pub abs_tol_usd: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScenarioFlags {
    #[arg(long, default_value_t = ScenarioSpec::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = ScenarioSpec::default().base_price_ratio)]
    pub base_price_ratio: f64,
    #[arg(long, default_value_t = ScenarioSpec::default().deviation_pct)]
    pub deviation_pct: f64,
    #[arg(long, default_value_t = ScenarioSpec::default().liquidity_usd)]
    pub liquidity_usd: f64,
    #[arg(long, default_value_t = ScenarioSpec::default().levered_fraction)]
    pub levered_fraction: f64,
}

impl ScenarioFlags {
    fn spec(&self, n_tokens: usize, n_curves: usize) -> ScenarioSpec {
        ScenarioSpec {
            n_tokens,
            n_curves,
            seed: self.seed,
            base_price_ratio: self.base_price_ratio,
            deviation_pct: self.deviation_pct,
            liquidity_usd: self.liquidity_usd,
            levered_fraction: self.levered_fraction,
            ..ScenarioSpec::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = ScenarioSpec::default().n_tokens)]
    pub tokens: usize,
    #[arg(long, default_value_t = ScenarioSpec::default().n_curves)]
    pub curves: usize,
    #[command(flatten)]
    pub scenario: ScenarioFlags,
    /// Write here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated: pair, full, full_sum_first, jacobian_first,
    /// jacobian_sum_first.
    #[arg(long, value_delimiter = ',', default_value = "full")]
    pub modes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "7")]
    pub tokens: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub curves: Vec<usize>,
    /// Timing samples per configuration.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[command(flatten)]
    pub scenario: ScenarioFlags,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_flow(s: &str) -> Result<(String, f64), String> {
    let (token, amount) = s
        .split_once('=')
        .ok_or_else(|| format!("expected TOKEN=AMOUNT, got `{s}`"))?;
    let amount: f64 = amount
        .trim()
        .parse()
        .map_err(|e| format!("bad amount in `{s}`: {e}"))?;
    if !amount.is_finite() {
        return Err(format!("amount in `{s}` must be finite"));
    }
    Ok((token.trim().to_string(), amount))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn not_converged(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NOT_CONVERGED,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

fn load_document(path: &Path) -> Result<CurveSetDocument, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    CurveSetDocument::parse(&text).map_err(|e| doc_error(path, e))
}

fn doc_error(path: &Path, e: DocumentError) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Outcome of one solve in either mode.
#[derive(Debug, Clone)]
pub struct Solve {
    pub tim: TradeInstructionMatrix,
    pub mode: &'static str,
    pub status: &'static str,
    pub iterations: usize,
    pub converged: bool,
    /// Why the solve failed, when it did.
    pub diagnostic: Option<String>,
}

fn full_status_name(s: FullStatus) -> &'static str {
    match s {
        FullStatus::Converged => "converged",
        FullStatus::MaxIterations => "max_iterations",
        FullStatus::ZeroJacobian => "zero_jacobian",
        FullStatus::EscapedDomain => "escaped_domain",
        FullStatus::InfeasibleRouting => "infeasible_routing",
    }
}

fn pair_status_name(s: PairStatus) -> &'static str {
    match s {
        PairStatus::Converged => "converged",
        PairStatus::RootLocationOnJump => "root_location_on_jump",
        PairStatus::NoBracket => "no_bracket",
    }
}

fn from_full(r: FullResult, market: &Market, routing: &RoutingSpec) -> Solve {
    let converged = r.status.is_converged();
    let diagnostic = (!converged).then(|| {
        let mut msg = format!(
            "full mode stopped with status {} after {} iterations",
            full_status_name(r.status),
            r.iterations
        );
        if let Some(res) = r.residual_trace.last() {
            msg.push_str(&format!(", mean residual {res:.6e} USD"));
        }
        if r.status == FullStatus::ZeroJacobian {
            msg.push_str("; singular Jacobian: every derivative vanished");
        } else if r.rank_deficient_steps > 0 {
            msg.push_str(&format!(
                "; singular Jacobian on {} of {} steps, imbalance left in its null space",
                r.rank_deficient_steps, r.iterations
            ));
        }
        if let Some(c) = capacity_diagnostic(market, routing) {
            msg.push_str("; ");
            msg.push_str(&c);
        }
        msg
    });
    Solve {
        tim: r.tim,
        mode: "full",
        status: full_status_name(r.status),
        iterations: r.iterations,
        converged,
        diagnostic,
    }
}

fn from_pair(r: PairResult, market: &Market, routing: &RoutingSpec) -> Solve {
    let converged = r.status == PairStatus::Converged;
    let diagnostic = (!converged).then(|| {
        let mut msg = format!(
            "pair mode stopped with status {} after {} iterations, residual {:.6e}",
            pair_status_name(r.status),
            r.iterations,
            r.residual
        );
        if let Some(c) = capacity_diagnostic(market, routing) {
            msg.push_str("; ");
            msg.push_str(&c);
        }
        msg
    });
    Solve {
        tim: r.tim,
        mode: "pair",
        status: pair_status_name(r.status),
        iterations: r.iterations,
        converged,
        diagnostic,
    }
}

/// Most of `token` the curves can take in and pay out, over their whole
/// ranges.
fn capacity(market: &Market, token: usize) -> (f64, f64) {
    let (mut take, mut give) = (0.0, 0.0);
    for (c, &(x, y)) in market.curves().iter().zip(market.pairs()) {
        let (xa, ya) = c.actual_balances();
        let sk = c.k().sqrt();
        if x == token {
            if c.direction() != Direction::SellXOnly {
                take += if c.p_min() > 0.0 {
                    sk / c.p_min().sqrt() - c.x_virtual()
                } else {
                    f64::INFINITY
                };
            }
            if c.direction() != Direction::SellYOnly {
                give += xa;
            }
        } else if y == token {
            if c.direction() != Direction::SellYOnly {
                take += if c.p_max().is_finite() {
                    sk * c.p_max().sqrt() - c.y_virtual()
                } else {
                    f64::INFINITY
                };
            }
            if c.direction() != Direction::SellXOnly {
                give += ya;
            }
        }
    }
    (take, give)
}

fn capacity_diagnostic(market: &Market, routing: &RoutingSpec) -> Option<String> {
    let tokens = market.tokens();
    let over: Vec<String> = tokens
        .non_target()
        .filter_map(|i| {
            let w = routing.w[i];
            let (take, give) = capacity(market, i);
            let sym = tokens.symbol(i);
            if w > take {
                Some(format!(
                    "routing pushes {w} {sym} but the curves can absorb at most {take:.6}"
                ))
            } else if -w > give {
                Some(format!(
                    "routing withdraws {} {sym} but the curves hold at most {give:.6}",
                    -w
                ))
            } else {
                None
            }
        })
        .collect();
    (!over.is_empty()).then(|| format!("capacity exceeded: {}", over.join("; ")))
}

/// Target is in the one traded pair.
fn pair_shaped(market: &Market) -> bool {
    let target = market.tokens().target_index();
    market
        .single_pair()
        .is_some_and(|(a, b)| a == target || b == target)
}

pub fn solve(
    market: &Market,
    routing: &RoutingSpec,
    mode: Mode,
    escalate: bool,
    config: &SolverConfig,
) -> Result<Solve, CliError> {
    let pair = |m: &Market| {
        optimize_pair(m, routing, &PairConfig::default())
            .map(|r| from_pair(r, m, routing))
            .map_err(|e| CliError::input(e.to_string()))
    };
    match mode {
        Mode::Pair => pair(market),
        Mode::Auto if pair_shaped(market) => pair(market),
        Mode::Auto | Mode::Full => {
            let full = from_full(optimize_full(market, routing, config), market, routing);
            if !full.converged && escalate && pair_shaped(market) {
                let escalated = pair(market)?;
                if escalated.converged {
                    return Ok(escalated);
                }
            }
            Ok(full)
        }
    }
}

fn run_solve(
    args: &SolveArgs,
    flows: Option<&[(String, f64)]>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let config = args.solver.config()?;
    let doc = load_document(&args.input)?;
    let target = doc
        .resolve_target(args.target.as_deref())
        .map_err(|e| doc_error(&args.input, e))?;
    let market = doc.market(target).map_err(|e| doc_error(&args.input, e))?;
    let routing = match flows {
        None => RoutingSpec::arbitrage(market.n_tokens()),
        Some(f) => doc
            .routing_spec(&market, f)
            .map_err(|e| doc_error(&args.input, e))?,
    };
    let result = solve(&market, &routing, args.mode, args.escalate, &config)?;

    write_out(out, &table::render(&result.tim))?;
    if let Some(path) = &args.json {
        let doc =
            InstructionsDocument::new(&result.tim, result.status, result.mode, result.iterations);
        write_file(path, &doc.to_json())?;
    }
    match result.diagnostic {
        Some(d) => Err(CliError::not_converged(d)),
        None => Ok(()),
    }
}

fn write_out(out: &mut dyn Write, s: &str) -> Result<(), CliError> {
    out.write_all(s.as_bytes())
        .map_err(|e| CliError::input(format!("writing output: {e}")))
}

fn run_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let doc = load_document(&args.input)?;
    let text =
        std::fs::read_to_string(&args.instructions).map_err(|e| io_error(&args.instructions, e))?;
    let ins: InstructionsDocument = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", args.instructions.display())))?;
    let target = doc
        .resolve_target(Some(&ins.target))
        .map_err(|e| doc_error(&args.input, e))?;
    let market = doc.market(target).map_err(|e| doc_error(&args.input, e))?;
    let routing = doc
        .routing_spec(&market, &args.flows)
        .map_err(|e| doc_error(&args.input, e))?;
    let tim = ins.to_tim(&market).map_err(CliError::input)?;
    let mut tol = CofTolerances::default();
    if let Some(t) = args.abs_tol_usd {
        tol.abs_tol_usd = t;
    }
    let cert =
        verify_cof(&tim, &market, &routing, &tol).map_err(|e| CliError::input(e.to_string()))?;

    let mut report = format!(
        "certificate: {}\nprofit: {} {}\nviolations: {}\n",
        if cert.feasible {
            "feasible"
        } else {
            "infeasible"
        },
        table::group_thousands(tim.profit(), 6),
        market.tokens().target(),
        cert.violations.len()
    );
    for v in &cert.violations {
        report.push_str(&format!(
            "  {} [{}]: {:.6e}\n",
            v.constraint, v.subject, v.magnitude
        ));
    }
    write_out(out, &report)?;
    if cert.feasible {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_VERIFY,
            message: format!(
                "instructions violate {} constraint(s)",
                cert.violations.len()
            ),
        })
    }
}

fn run_gen(args: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = args.scenario.spec(args.tokens, args.curves);
    let market = generate(&spec).map_err(|e| CliError::input(e.to_string()))?;
    let json = CurveSetDocument::from_market(&market).to_json();
    match &args.output {
        Some(path) => write_file(path, &json),
        None => write_out(out, &json),
    }
}

fn run_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let modes = args
        .modes
        .iter()
        .map(|m| m.parse::<BenchMode>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::input(e.to_string()))?;
    let template = args.scenario.spec(2, 1);
    template
        .validate()
        .map_err(|e| CliError::input(e.to_string()))?;
    let settings = BenchSettings {
        modes,
        n_tokens: args.tokens.clone(),
        n_curves: args.curves.clone(),
        repeats: args.repeats,
        scenario: template,
        solver: args.solver.config()?,
    };
    let report = benchmark(&settings).map_err(|e| CliError::input(e.to_string()))?;
    let csv = report.to_csv_string();
    match &args.csv {
        Some(path) => write_file(path, &csv),
        None => write_out(out, &csv),
    }
}

/// Runs one invocation; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Arb(a) => run_solve(a, None, out),
        Command::Route(r) => run_solve(&r.solve, Some(&r.flows), out),
        Command::Verify(v) => run_verify(v, out),
        Command::Gen(g) => run_gen(g, out),
        Command::Bench(b) => run_bench(b, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let label = match e.code {
                EXIT_NOT_CONVERGED => "not converged",
                EXIT_VERIFY => "verification failed",
                _ => "error",
            };
            let _ = writeln!(err, "{label}: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mpo_core::{Curve, TokenSet};

    #[test]
    fn flow_parsing() {
        assert_eq!(parse_flow("WETH=1.5"), Ok(("WETH".into(), 1.5)));
        assert_eq!(parse_flow("A = -2"), Ok(("A".into(), -2.0)));
        assert!(parse_flow("WETH").is_err());
        assert!(parse_flow("WETH=abc").is_err());
        assert!(parse_flow("WETH=inf").is_err());
    }

    #[test]
    fn levered_capacity() {
        let tokens = TokenSet::new([("B", 1.0), ("A", 1.0)]).unwrap();
        let c = Curve::levered("l", "A", "B", 1e6, 0.9, 1.1, 1.0).unwrap();
        let (xa, _) = c.actual_balances();
        let m = Market::new(tokens, vec![c]).unwrap();
        let (take, give) = capacity(&m, 1);
        assert!((give - xa).abs() < 1e-9);
        assert!((take - (1e3 / 0.9f64.sqrt() - 1e3)).abs() < 1e-9);
        let too_much = RoutingSpec::from_flows(m.tokens(), [("A", take * 1.5)]).unwrap();
        assert!(capacity_diagnostic(&m, &too_much)
            .unwrap()
            .contains("absorb"));
        let fine = RoutingSpec::from_flows(m.tokens(), [("A", take * 0.5)]).unwrap();
        assert!(capacity_diagnostic(&m, &fine).is_none());
    }

    #[test]
    fn bad_flags_are_input_errors() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["mpo", "arb"], &mut o, &mut e), EXIT_INPUT);
        assert_eq!(run(["mpo", "--help"], &mut o, &mut e), EXIT_OK);
        assert!(String::from_utf8(o).unwrap().contains("arb"));
    }
}
