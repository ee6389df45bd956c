//! Synthetic markets and a wall-clock benchmark harness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curves::{Curve, Direction};
use crate::error::{Error, Result};
use crate::full::{jacobian_first, jacobian_sum_first, optimize_full, JacobianPath, SolverConfig};
use crate::market::{Market, PriceVector, RoutingSpec, TokenSet};
use crate::pair::{optimize_pair, PairConfig, PairStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n_tokens: usize,
    pub n_curves: usize,
    /// USD price of token `i` is `base_price_ratio^i`.
    pub base_price_ratio: f64,
    /// Curve prices deviate from the base ratio by up to this many percent
    /// either way.
    pub deviation_pct: f64,
    /// USD value held by every curve at its current price.
    pub liquidity_usd: f64,
    /// Share of curves built with a bounded price range.
    pub levered_fraction: f64,
    /// Levered ranges extend `p (1 + w)` above and `p / (1 + w)` below the
    /// current price, with `w` drawn uniformly from this interval.
    pub range_width: (f64, f64),
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_tokens: 7,
            n_curves: 20,
            base_price_ratio: 2.0,
            deviation_pct: 2.5,
            liquidity_usd: 1_048_576.0,
            levered_fraction: 0.0,
            range_width: (0.05, 0.5),
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_tokens < 2 {
            return bad("scenario needs at least 2 tokens");
        }
        if self.n_curves < 1 {
            return bad("scenario needs at least 1 curve");
        }
        if !(self.base_price_ratio > 0.0) || !(self.liquidity_usd > 0.0) {
            return bad("base price ratio and liquidity must be positive");
        }
        if !(0.0..100.0).contains(&self.deviation_pct) {
            return bad("deviation must be in [0, 100) percent");
        }
        if !(0.0..=1.0).contains(&self.levered_fraction) {
            return bad("levered fraction must be in [0, 1]");
        }
        let (lo, hi) = self.range_width;
        if !(lo > 0.0 && hi >= lo) {
            return bad("range width interval must be positive and ordered");
        }
        Ok(())
    }

    pub fn token_set(&self) -> Result<TokenSet> {
        TokenSet::new(
            (0..self.n_tokens).map(|i| (format!("TKN{i}"), self.base_price_ratio.powi(i as i32))),
        )
    }
}

/// Unlevered curve `token_x/token_y` priced `(1 + deviation)` times the USD
/// ratio and holding `liquidity_usd` worth of tokens.
pub fn unlevered_curve_usd(
    id: impl Into<String>,
    tokens: &TokenSet,
    token_x: &str,
    token_y: &str,
    deviation: f64,
    liquidity_usd: f64,
) -> Result<Curve> {
    let usd_x = tokens.usd_prices()[tokens.index_of(token_x)?];
    let usd_y = tokens.usd_prices()[tokens.index_of(token_y)?];
    let price = usd_x / usd_y * (1.0 + deviation);
    // value 2 y usd_y at the current price
    let y = liquidity_usd / (2.0 * usd_y);
    Curve::unlevered(id, token_x, token_y, y * y / price, price)
}

/// Levered curve on `[p_min, p_max]` whose actual holdings at the current
/// price are worth `liquidity_usd`.
#[allow(clippy::too_many_arguments)]
pub fn levered_curve_usd(
    id: impl Into<String>,
    tokens: &TokenSet,
    token_x: &str,
    token_y: &str,
    price: f64,
    p_min: f64,
    p_max: f64,
    liquidity_usd: f64,
) -> Result<Curve> {
    let usd_x = tokens.usd_prices()[tokens.index_of(token_x)?];
    let usd_y = tokens.usd_prices()[tokens.index_of(token_y)?];
    let per_sqrt_k =
        usd_x * (1.0 / price.sqrt() - 1.0 / p_max.sqrt()) + usd_y * (price.sqrt() - p_min.sqrt());
    let sqrt_k = liquidity_usd / per_sqrt_k;
    Curve::levered(id, token_x, token_y, sqrt_k * sqrt_k, p_min, p_max, price)
}

/// Draws a market: tokens with geometric USD prices and curves on random
/// distinct pairs. Identical specs give bit-identical markets.
pub fn generate(spec: &ScenarioSpec) -> Result<Market> {
    spec.validate()?;
    let tokens = spec.token_set()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.deviation_pct / 100.0;
    let mut curves = Vec::with_capacity(spec.n_curves);
    for c in 0..spec.n_curves {
        let a = rng.random_range(0..spec.n_tokens);
        let mut b = rng.random_range(0..spec.n_tokens - 1);
        if b >= a {
            b += 1;
        }
        let deviation = if d > 0.0 {
            rng.random_range(-d..=d)
        } else {
            0.0
        };
        let levered = rng.random_bool(spec.levered_fraction);
        let (x, y) = (tokens.symbol(a).to_string(), tokens.symbol(b).to_string());
        let id = format!("C{c:02}");
        let curve = if levered {
            let (lo, hi) = spec.range_width;
            let w_up = rng.random_range(lo..=hi);
            let w_dn = rng.random_range(lo..=hi);
            let price = tokens.usd_prices()[a] / tokens.usd_prices()[b] * (1.0 + deviation);
            levered_curve_usd(
                id,
                &tokens,
                &x,
                &y,
                price,
                price / (1.0 + w_dn),
                price * (1.0 + w_up),
                spec.liquidity_usd,
            )?
        } else {
            unlevered_curve_usd(id, &tokens, &x, &y, deviation, spec.liquidity_usd)?
        };
        curves.push(curve);
    }
    Market::new(tokens, curves)
}

/// Small mixed market for cross-checks against brute force: two or three
/// tokens, one to `max_curves` curves of every kind except fee-charging.
/// The first curve always trades the target.
///
/// Token 0 is the target at 1 USD; the others are priced between 0.1 and
/// 1,000 USD. Curve prices deviate from the USD ratio by up to 5%, and
/// levered ranges always contain the USD ratio.
pub fn generate_desk(seed: u64, max_tokens: usize, max_curves: usize) -> Result<Market> {
    if !(2..=3).contains(&max_tokens) || max_curves < 1 {
        return Err(Error::InvalidParameter(
            "desk markets have 2-3 tokens and at least one curve".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tokens = rng.random_range(2..=max_tokens);
    let n_curves = rng.random_range(1..=max_curves);
    let tokens = TokenSet::new((0..n_tokens).map(|i| {
        let usd = if i == 0 {
            1.0
        } else {
            10f64.powf(rng.random_range(-1.0..3.0))
        };
        (format!("T{i}"), usd)
    }))?;
    let mut curves = Vec::with_capacity(n_curves);
    for c in 0..n_curves {
        // the first curve always trades the target
        let a = if c == 0 {
            0
        } else {
            rng.random_range(0..n_tokens)
        };
        let mut b = rng.random_range(0..n_tokens - 1);
        if b >= a {
            b += 1;
        }
        let (a, b) = if c == 0 && rng.random_bool(0.5) {
            (b, a)
        } else {
            (a, b)
        };
        let (x, y) = (tokens.symbol(a).to_string(), tokens.symbol(b).to_string());
        let fair = tokens.usd_prices()[a] / tokens.usd_prices()[b];
        let price = fair * (1.0 + rng.random_range(-0.05..=0.05));
        let liquidity = 10f64.powf(rng.random_range(4.0..6.0));
        let id = format!("D{c}");
        let kind = rng.random_range(0..10);
        let curve = if kind < 6 {
            let dev = price / fair - 1.0;
            unlevered_curve_usd(id, &tokens, &x, &y, dev, liquidity)?
        } else if kind < 8 {
            let lo = price.min(fair) / (1.0 + rng.random_range(0.02..0.3));
            let hi = price.max(fair) * (1.0 + rng.random_range(0.02..0.3));
            levered_curve_usd(id, &tokens, &x, &y, price, lo, hi, liquidity)?
        } else {
            let dev = price / fair - 1.0;
            let dir = if kind == 8 {
                Direction::SellXOnly
            } else {
                Direction::SellYOnly
            };
            unlevered_curve_usd(id, &tokens, &x, &y, dev, liquidity)?.with_direction(dir)
        };
        curves.push(curve);
    }
    Market::new(tokens, curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Pair,
    Full,
    FullSumFirst,
    /// One Jacobian assembly at the initial prices, analytic path.
    JacobianFirst,
    /// One Jacobian assembly at the initial prices, finite-difference path.
    JacobianSumFirst,
}

impl BenchMode {
    pub const ALL: [BenchMode; 5] = [
        BenchMode::Pair,
        BenchMode::Full,
        BenchMode::FullSumFirst,
        BenchMode::JacobianFirst,
        BenchMode::JacobianSumFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Pair => "pair",
            BenchMode::Full => "full",
            BenchMode::FullSumFirst => "full_sum_first",
            BenchMode::JacobianFirst => "jacobian_first",
            BenchMode::JacobianSumFirst => "jacobian_sum_first",
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown bench mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub n_tokens: usize,
    pub n_curves: usize,
    /// Median seconds per call.
    pub wall_time_s: f64,
    /// Seconds spent assembling Jacobians within one call.
    pub jacobian_time_s: f64,
    pub iterations: usize,
    pub status: String,
    pub profit_usd: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| Error::Configuration(format!("csv: {e}")))?;
        }
        w.flush()
            .map_err(|e| Error::Configuration(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn find(&self, mode: BenchMode, n_tokens: usize, n_curves: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.n_tokens == n_tokens && r.n_curves == n_curves)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub modes: Vec<BenchMode>,
    pub n_tokens: Vec<usize>,
    pub n_curves: Vec<usize>,
    /// Samples per configuration; raised to 10 for calls under 100 ms.
    pub repeats: usize,
    /// Template for the generated markets; sizes are overridden.
    pub scenario: ScenarioSpec,
    pub solver: SolverConfig,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            modes: vec![BenchMode::Full],
            n_tokens: vec![7],
            n_curves: vec![10],
            repeats: 1,
            scenario: ScenarioSpec::default(),
            solver: SolverConfig::default(),
        }
    }
}

const FAST_CALL: Duration = Duration::from_millis(100);
const MIN_FAST_REPEATS: usize = 10;
/// Fast calls are batched until a sample spans at least this long.
const MIN_SAMPLE: Duration = Duration::from_millis(2);

struct CallStats {
    jacobian_time: Duration,
    iterations: usize,
    status: String,
    profit_usd: f64,
}

fn run_once(mode: BenchMode, market: &Market, solver: &SolverConfig) -> CallStats {
    let tokens = market.tokens();
    let usd_target = tokens.usd_prices()[tokens.target_index()];
    let routing = RoutingSpec::arbitrage(tokens.len());
    match mode {
        BenchMode::Pair => match optimize_pair(market, &routing, &PairConfig::default()) {
            Ok(r) => CallStats {
                jacobian_time: Duration::ZERO,
                iterations: r.iterations,
                status: match r.status {
                    PairStatus::Converged => "converged",
                    PairStatus::RootLocationOnJump => "root_location_on_jump",
                    PairStatus::NoBracket => "no_bracket",
                }
                .into(),
                profit_usd: r.profit * usd_target,
            },
            Err(e) => CallStats {
                jacobian_time: Duration::ZERO,
                iterations: 0,
                status: format!("error: {e}"),
                profit_usd: 0.0,
            },
        },
        BenchMode::Full | BenchMode::FullSumFirst => {
            let config = SolverConfig {
                jacobian_path: if mode == BenchMode::Full {
                    JacobianPath::JacobianFirst
                } else {
                    JacobianPath::SumFirst
                },
                ..*solver
            };
            let r = optimize_full(market, &routing, &config);
            CallStats {
                jacobian_time: r.jacobian_time,
                iterations: r.iterations,
                status: format!("{:?}", r.status).to_lowercase(),
                profit_usd: r.profit * usd_target,
            }
        }
        BenchMode::JacobianFirst | BenchMode::JacobianSumFirst => {
            let pi = PriceVector::from_usd(tokens);
            let vars = market.solver_variables();
            let started = Instant::now();
            let j = if mode == BenchMode::JacobianFirst {
                jacobian_first(market, &pi, &vars)
            } else {
                jacobian_sum_first(market, &pi, &vars, solver.stencil)
            };
            let elapsed = started.elapsed();
            std::hint::black_box(j);
            CallStats {
                jacobian_time: elapsed,
                iterations: 0,
                status: "ok".into(),
                profit_usd: 0.0,
            }
        }
    }
}

/// Median wall time per call of `f`. Calls faster than 100 ms are sampled
/// at least ten times, each sample batching calls until it spans a couple
/// of milliseconds.
pub fn time_call(repeats: usize, mut f: impl FnMut()) -> Duration {
    let started = Instant::now();
    f();
    let first = started.elapsed();
    let samples = if first < FAST_CALL {
        repeats.max(MIN_FAST_REPEATS)
    } else {
        repeats.max(1)
    };
    let batch = if first >= MIN_SAMPLE {
        1
    } else {
        (MIN_SAMPLE.as_nanos() / first.as_nanos().max(1)) as u32 + 1
    };
    let mut times: Vec<Duration> = (0..samples)
        .map(|_| {
            let started = Instant::now();
            for _ in 0..batch {
                f();
            }
            started.elapsed() / batch
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

/// Times every mode on a generated market for each `(n_tokens, n_curves)`
/// combination. Solver failures land in the status column.
pub fn benchmark(settings: &BenchSettings) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for &k in &settings.n_tokens {
        for &n in &settings.n_curves {
            let spec = ScenarioSpec {
                n_tokens: k,
                n_curves: n,
                ..settings.scenario.clone()
            };
            let market = generate(&spec)?;
            for &mode in &settings.modes {
                let stats = run_once(mode, &market, &settings.solver);
                let wall = time_call(settings.repeats, || {
                    std::hint::black_box(run_once(mode, &market, &settings.solver));
                });
                let jacobian_time =
                    if matches!(mode, BenchMode::JacobianFirst | BenchMode::JacobianSumFirst) {
                        wall
                    } else {
                        stats.jacobian_time
                    };
                rows.push(BenchRow {
                    mode,
                    n_tokens: k,
                    n_curves: n,
                    wall_time_s: wall.as_secs_f64(),
                    jacobian_time_s: jacobian_time.as_secs_f64(),
                    iterations: stats.iterations,
                    status: stats.status,
                    profit_usd: stats.profit_usd,
                });
            }
        }
    }
    Ok(BenchReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_prices() {
        let t = ScenarioSpec::default().token_set().unwrap();
        assert_eq!(t.usd_prices(), &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]);
        assert_eq!(t.symbol(6), "TKN6");
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = ScenarioSpec {
            levered_fraction: 0.5,
            seed: 42,
            ..ScenarioSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.curves(), b.curves());
        let c = generate(&ScenarioSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.curves(), c.curves());
    }

    #[test]
    fn unlevered_sizing_matches_liquidity() {
        let t = ScenarioSpec::default().token_set().unwrap();
        // TKN6/TKN3 at the base ratio 8 holds 65,536 TKN3 and 8,192 TKN6
        let c = unlevered_curve_usd("c", &t, "TKN6", "TKN3", 0.0, 1_048_576.0).unwrap();
        assert!((c.marginal_price() - 8.0).abs() < 1e-12);
        assert!((c.y_virtual() - 65_536.0).abs() < 1e-9);
        assert!((c.x_virtual() - 8_192.0).abs() < 1e-9);
    }

    #[test]
    fn levered_sizing_matches_liquidity() {
        let t = ScenarioSpec::default().token_set().unwrap();
        let c = levered_curve_usd("c", &t, "TKN2", "TKN0", 4.0, 3.0, 5.0, 10_000.0).unwrap();
        let (x, y) = c.actual_balances();
        assert!((x * 4.0 + y - 10_000.0).abs() < 1e-8);
    }

    #[test]
    fn generated_curves_are_valid() {
        let spec = ScenarioSpec {
            n_curves: 200,
            levered_fraction: 0.3,
            seed: 7,
            ..ScenarioSpec::default()
        };
        let m = generate(&spec).unwrap();
        for c in m.curves() {
            assert!((c.x_virtual() * c.y_virtual() / c.k() - 1.0).abs() < 1e-12);
            let p = c.marginal_price();
            assert!(c.p_min() <= p && p <= c.p_max());
            assert_ne!(c.token_x(), c.token_y());
        }
    }

    #[test]
    fn bench_modes_parse() {
        for m in BenchMode::ALL {
            assert_eq!(m.name().parse::<BenchMode>().unwrap(), m);
        }
        assert!("nope".parse::<BenchMode>().is_err());
    }

    #[test]
    fn bench_csv_shape() {
        let settings = BenchSettings {
            n_curves: vec![10],
            ..BenchSettings::default()
        };
        let report = benchmark(&settings).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].wall_time_s > 0.0);
        let csv = report.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "mode,n_tokens,n_curves,wall_time_s,jacobian_time_s,iterations,status,profit_usd"
        );
        assert!(lines.next().unwrap().starts_with("full,7,10,"));
    }
}
