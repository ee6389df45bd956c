//! Pair mode: all curves trade the same two tokens, so the market has a
//! single free price and the self-financing condition is one monotone
//! equation solved by bisection.

use crate::error::{Error, Result};
use crate::market::{Market, PriceVector, RoutingSpec};
use crate::tim::TradeInstructionMatrix;

/// Interval `[p_lo, p_hi]` with the residual evaluated at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub p_lo: f64,
    pub p_hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    pub fn new(p_lo: f64, p_hi: f64, f: &mut impl FnMut(f64) -> f64) -> Self {
        Self {
            p_lo,
            p_hi,
            f_lo: f(p_lo),
            f_hi: f(p_hi),
        }
    }

    /// Residuals have opposite signs (or one is zero).
    pub fn is_valid(&self) -> bool {
        self.p_lo < self.p_hi && self.f_lo * self.f_hi <= 0.0
    }
}

/// Result of [`bisect`].
#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
    /// Interval width before the first step and after every step.
    pub widths: Vec<f64>,
    /// Residuals at the ends of the final interval.
    pub f_lo: f64,
    pub f_hi: f64,
    /// The residual never got small: the sign change is a jump.
    pub jump: bool,
}

/// Threshold, relative to the initial end residuals, below which the final
/// interval counts as containing a true root rather than a jump.
const JUMP_RTOL: f64 = 1e-6;

/// Bisects `f` on a valid bracket until the interval width drops below
/// `tol_x` relative to its midpoint or `max_iter` steps have run.
///
/// The interval is carried as `(lo, width)` and the width is halved
/// exactly, so after `n` steps it is `2^-n` of the original. For a
/// discontinuous `f` this returns the sign-change location.
pub fn bisect(
    mut f: impl FnMut(f64) -> f64,
    bracket: Bracket,
    tol_x: f64,
    max_iter: usize,
) -> Bisection {
    let scale = bracket.f_lo.abs().max(bracket.f_hi.abs());
    let mut lo = bracket.p_lo;
    let mut width = bracket.p_hi - bracket.p_lo;
    let (mut f_lo, mut f_hi) = (bracket.f_lo, bracket.f_hi);
    let mut widths = vec![width];
    let mut iterations = 0;

    if f_lo == 0.0 || f_hi == 0.0 {
        let root = if f_lo == 0.0 { lo } else { bracket.p_hi };
        return Bisection {
            root,
            iterations,
            widths,
            f_lo,
            f_hi,
            jump: false,
        };
    }

    while iterations < max_iter {
        let mid = lo + width / 2.0;
        if width <= tol_x * mid.abs() {
            break;
        }
        let f_mid = f(mid);
        iterations += 1;
        width /= 2.0;
        widths.push(width);
        if f_mid == 0.0 {
            return Bisection {
                root: mid,
                iterations,
                widths,
                f_lo: 0.0,
                f_hi: 0.0,
                jump: false,
            };
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            f_hi = f_mid;
        }
    }
    Bisection {
        root: lo + width / 2.0,
        iterations,
        widths,
        f_lo,
        f_hi,
        jump: f_lo.abs().min(f_hi.abs()) > JUMP_RTOL * scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairConfig {
    /// Relative width at which bisection stops.
    pub tol_x: f64,
    pub max_iter: usize,
    /// Decades above and below the current price used as bracket ends for
    /// unbounded curves.
    pub proxy_decades: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            tol_x: 1e-12,
            max_iter: 100,
            proxy_decades: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatus {
    Converged,
    RootLocationOnJump,
    NoBracket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    /// Price of the non-target token in target units.
    pub price: f64,
    pub tim: TradeInstructionMatrix,
    pub profit: f64,
    pub iterations: usize,
    pub status: PairStatus,
    /// Self-financing residual of the non-target token at `price`.
    pub residual: f64,
}

/// Outcome of the bracket search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BracketSearch {
    Interval(Bracket),
    /// An exact root was hit while probing.
    Root(f64),
    /// Both ends have the same nonzero sign.
    NoBracket(Bracket),
}

/// The pair view of a market: which token is the target and which one
/// carries the free price.
#[derive(Debug, Clone, Copy)]
struct PairView {
    target: usize,
    other: usize,
}

impl PairView {
    fn of(market: &Market) -> Result<Self> {
        let (a, b) = market
            .single_pair()
            .ok_or_else(|| Error::NotSinglePair(describe_pairs(market)))?;
        let target = market.tokens().target_index();
        let other = if target == a {
            b
        } else if target == b {
            a
        } else {
            return Err(Error::Configuration(format!(
                "target token `{}` is not traded by the pair",
                market.tokens().target()
            )));
        };
        Ok(Self { target, other })
    }

    fn prices(&self, market: &Market, price: f64) -> PriceVector {
        let mut log_prices = vec![0.0; market.n_tokens()];
        log_prices[self.other] = price.ln();
        PriceVector::from_log_prices(log_prices, self.target)
    }

    fn residual(&self, market: &Market, routing: &RoutingSpec, price: f64) -> f64 {
        market.aggregate_prf(&self.prices(market, price)).0[self.other] - routing.w[self.other]
    }
}

fn describe_pairs(market: &Market) -> String {
    let t = market.tokens();
    let mut pairs: Vec<String> = market
        .pairs()
        .iter()
        .map(|&(a, b)| format!("{}/{}", t.symbol(a), t.symbol(b)))
        .collect();
    pairs.sort();
    pairs.dedup();
    if pairs.is_empty() {
        "market has no curves".into()
    } else {
        format!("market trades {}", pairs.join(", "))
    }
}

/// Finds a price interval over which the non-target residual changes sign.
///
/// Each curve contributes its price range, expressed as the non-target
/// token's price in target units. Unbounded ends are replaced by the
/// current price shifted by `proxy_decades`, and the interval is widened
/// by the largest fee so fee bands are covered.
pub fn find_bracket(
    market: &Market,
    routing: &RoutingSpec,
    config: &PairConfig,
) -> Result<BracketSearch> {
    let view = PairView::of(market)?;
    let mut f = |p: f64| view.residual(market, routing, p);

    // a market already at rest shares one price; probing every curve would be O(N^2)
    if let (Some(curve), Some(&(a, _))) = (market.curves().first(), market.pairs().first()) {
        let p = curve.marginal_price();
        let price = if a == view.other { p } else { 1.0 / p };
        if f(price) == 0.0 {
            return Ok(BracketSearch::Root(price));
        }
    }

    let proxy = 10f64.powf(config.proxy_decades);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut max_fee = 0.0f64;
    for (curve, &(a, _)) in market.curves().iter().zip(market.pairs()) {
        let p_cur = curve.marginal_price();
        let p_min = if curve.p_min() > 0.0 {
            curve.p_min()
        } else {
            p_cur / proxy
        };
        let p_max = if curve.p_max().is_finite() {
            curve.p_max()
        } else {
            p_cur * proxy
        };
        let (c_lo, c_hi) = if a == view.other {
            (p_min, p_max)
        } else {
            (1.0 / p_max, 1.0 / p_min)
        };
        lo = lo.min(c_lo);
        hi = hi.max(c_hi);
        max_fee = max_fee.max(curve.fee());
    }
    let bracket = Bracket::new(lo / (1.0 + max_fee), hi * (1.0 + max_fee), &mut f);
    if bracket.f_lo == 0.0 && bracket.f_hi == 0.0 {
        return Ok(BracketSearch::NoBracket(bracket));
    }
    Ok(if bracket.is_valid() {
        BracketSearch::Interval(bracket)
    } else {
        BracketSearch::NoBracket(bracket)
    })
}

/// Solves a single-pair market by bisection on the non-target price.
pub fn optimize_pair(
    market: &Market,
    routing: &RoutingSpec,
    config: &PairConfig,
) -> Result<PairResult> {
    let view = PairView::of(market)?;
    if market
        .tokens()
        .non_target()
        .any(|i| i != view.other && routing.w[i] != 0.0)
    {
        return Ok(null_result(market, routing, view, PairStatus::NoBracket));
    }
    let f = |p: f64| view.residual(market, routing, p);

    let (price, iterations, status) = match find_bracket(market, routing, config)? {
        BracketSearch::Root(p) => (p, 0, PairStatus::Converged),
        BracketSearch::NoBracket(_) => {
            let status = if routing.is_arbitrage() {
                PairStatus::Converged
            } else {
                PairStatus::NoBracket
            };
            return Ok(null_result(market, routing, view, status));
        }
        BracketSearch::Interval(bracket) => {
            let b = bisect(f, bracket, config.tol_x, config.max_iter);
            let status = if b.jump {
                PairStatus::RootLocationOnJump
            } else {
                PairStatus::Converged
            };
            (b.root, b.iterations, status)
        }
    };
    let tim = market.build_trade_instructions(&view.prices(market, price));
    Ok(PairResult {
        price,
        profit: tim.profit(),
        tim,
        iterations,
        status,
        residual: f(price),
    })
}

fn null_result(
    market: &Market,
    routing: &RoutingSpec,
    view: PairView,
    status: PairStatus,
) -> PairResult {
    // report at the price of the first curve, where nothing trades
    let price = market
        .curves()
        .first()
        .zip(market.pairs().first())
        .map(|(c, &(a, _))| {
            let p = c.marginal_price();
            if a == view.other {
                p
            } else {
                1.0 / p
            }
        })
        .unwrap_or(1.0);
    let t = market.tokens();
    let pi = view.prices(market, price);
    let prices = (0..t.len()).map(|i| pi.ratio(i, view.target)).collect();
    let tim = TradeInstructionMatrix::null(
        t.symbols().to_vec(),
        t.target_index(),
        prices,
        market
            .curves()
            .iter()
            .zip(market.pairs())
            .map(|(c, &(a, b))| (c.id().to_string(), a, b)),
    );
    PairResult {
        price,
        tim,
        profit: 0.0,
        iterations: 0,
        status,
        residual: -routing.w[view.other],
    }
}
