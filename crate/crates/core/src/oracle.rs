//! Independent checks of solver output.
//!
//! [`verify_cof`] treats a trade instruction matrix as a candidate point of
//! the convex quantity-space problem and reports every violated
//! constraint. [`grid_profit_oracle`] bounds the achievable profit from
//! above by minimising the Lagrangian dual over a log-price grid. Neither
//! uses the solvers' price response code.

use std::fmt;

use crate::curves::{Curve, Direction};
use crate::error::{Error, Result};
use crate::market::{Market, PriceVector, RoutingSpec};
use crate::tim::TradeInstructionMatrix;

/// Token indicator matrix: rows are tokens, columns are the two balance
/// slots of every curve (`x` then `y`).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    n_tokens: usize,
    /// Token of every column.
    slots: Vec<usize>,
}

impl TokenMatrix {
    pub fn from_market(market: &Market) -> Self {
        Self {
            n_tokens: market.n_tokens(),
            slots: market.pairs().iter().flat_map(|&(a, b)| [a, b]).collect(),
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    /// Entry `T[token][slot]`, either 0 or 1.
    pub fn entry(&self, token: usize, slot: usize) -> u8 {
        u8::from(self.slots[slot] == token)
    }

    /// `T v`: sums slot values per token.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_tokens];
        for (&t, x) in self.slots.iter().zip(v) {
            out[t] += x;
        }
        out
    }

    /// Net token flow into the curves implied by a trade instruction matrix.
    pub fn flows(&self, tim: &TradeInstructionMatrix) -> Vec<f64> {
        let deltas: Vec<f64> = tim.rows.iter().flat_map(|r| [r.dx, r.dy]).collect();
        self.apply(&deltas)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Positivity,
    CurveInvariant,
    SelfFinancing,
    TargetFlow,
    Direction,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::Positivity => "positivity",
            Constraint::CurveInvariant => "curve invariant",
            Constraint::SelfFinancing => "self-financing",
            Constraint::TargetFlow => "target flow",
            Constraint::Direction => "direction",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    /// Curve id or token symbol the violation is attached to.
    pub subject: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub feasible: bool,
    pub violations: Vec<Violation>,
    /// Grid-oracle profit minus candidate profit, when computed.
    pub optimality_gap: Option<f64>,
}

impl Certificate {
    pub fn with_optimality_gap(mut self, oracle_profit: f64, candidate_profit: f64) -> Self {
        self.optimality_gap = Some(oracle_profit - candidate_profit);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CofTolerances {
    /// Bound on the mean absolute self-financing residual in USD.
    pub abs_tol_usd: f64,
    /// Relative tolerance on `x y = k` for curves that traded.
    pub invariant_rtol: f64,
    /// Actual balances may dip this far below zero, relative to `sqrt(k)`.
    pub balance_rtol: f64,
}

impl Default for CofTolerances {
    fn default() -> Self {
        Self {
            abs_tol_usd: 1.0,
            invariant_rtol: 1e-8,
            balance_rtol: 1e-9,
        }
    }
}

/// Checks a trade instruction matrix against the convex formulation's
/// constraints.
pub fn verify_cof(
    tim: &TradeInstructionMatrix,
    market: &Market,
    routing: &RoutingSpec,
    tol: &CofTolerances,
) -> Result<Certificate> {
    let tokens = market.tokens();
    if tim.rows.len() != market.curves().len() || tim.tokens.len() != tokens.len() {
        return Err(Error::Configuration(format!(
            "trade instructions have {} rows over {} tokens, market has {} curves over {} tokens",
            tim.rows.len(),
            tim.tokens.len(),
            market.curves().len(),
            tokens.len()
        )));
    }
    let mut violations = Vec::new();
    for ((row, curve), &(a, b)) in tim.rows.iter().zip(market.curves()).zip(market.pairs()) {
        if row.curve_id != curve.id() || row.token_x != a || row.token_y != b {
            return Err(Error::Configuration(format!(
                "row `{}` does not match curve `{}`",
                row.curve_id,
                curve.id()
            )));
        }
        let mut flag = |constraint, magnitude: f64| {
            violations.push(Violation {
                constraint,
                subject: curve.id().to_string(),
                magnitude,
            })
        };
        let x = curve.x_virtual() + row.dx;
        let y = curve.y_virtual() + row.dy;
        if !(x > 0.0 && y > 0.0) {
            flag(Constraint::Positivity, x.min(y));
            continue;
        }
        let sqrt_k = curve.k().sqrt();
        // actual balances: virtual minus the offsets implied by the range
        let x_off = if curve.p_max().is_finite() {
            sqrt_k / curve.p_max().sqrt()
        } else {
            0.0
        };
        let y_off = sqrt_k * curve.p_min().sqrt();
        let floor = -tol.balance_rtol * sqrt_k;
        for actual in [x - x_off, y - y_off] {
            if actual < floor {
                flag(Constraint::Positivity, actual);
            }
        }
        let product = x * y / curve.k() - 1.0;
        let traded = row.dx != 0.0 || row.dy != 0.0;
        if product > tol.invariant_rtol || (traded && product.abs() > tol.invariant_rtol) {
            flag(Constraint::CurveInvariant, product);
        }
        let wrong_way = match curve.direction() {
            Direction::Bidirectional => 0.0,
            Direction::SellXOnly => (-row.dy).max(0.0),
            Direction::SellYOnly => (-row.dx).max(0.0),
        };
        if wrong_way > 0.0 {
            flag(Constraint::Direction, wrong_way);
        }
    }

    let flows = TokenMatrix::from_market(market).flows(tim);
    let n = tokens.len() - 1;
    if n > 0 {
        let mean_usd: f64 = tokens
            .non_target()
            .map(|i| (flows[i] - routing.w[i]).abs() * tokens.usd_prices()[i])
            .sum::<f64>()
            / n as f64;
        if mean_usd >= tol.abs_tol_usd {
            violations.push(Violation {
                constraint: Constraint::SelfFinancing,
                subject: "mean".into(),
                magnitude: mean_usd,
            });
        }
    }
    let t = tokens.target_index();
    if routing.is_arbitrage() && flows[t] * tokens.usd_prices()[t] > tol.abs_tol_usd {
        violations.push(Violation {
            constraint: Constraint::TargetFlow,
            subject: tokens.target().to_string(),
            magnitude: flows[t],
        });
    }

    Ok(Certificate {
        feasible: violations.is_empty(),
        violations,
        optimality_gap: None,
    })
}

/// Price range a curve can reach: its range cut at the current price on
/// the side it does not trade.
fn reachable_prices(curve: &Curve) -> (f64, f64) {
    let p = curve.y_virtual() / curve.x_virtual();
    match curve.direction() {
        Direction::Bidirectional => (curve.p_min(), curve.p_max()),
        Direction::SellXOnly => (p.max(curve.p_min()), curve.p_max()),
        Direction::SellYOnly => (curve.p_min(), p.min(curve.p_max())),
    }
}

/// Most target-token value a fee-free curve can release at prices
/// `(pi_x, pi_y)`: `max over reachable states of pi_x (x0 - x) + pi_y (y0 - y)`.
///
/// The objective is concave in the state price with its peak at
/// `pi_x / pi_y`, so the maximiser is that ratio clipped to the reachable
/// range.
fn curve_value(curve: &Curve, pi_x: f64, pi_y: f64) -> f64 {
    let (lo, hi) = reachable_prices(curve);
    let p = (pi_x / pi_y).max(lo).min(hi);
    let sqrt_k = curve.k().sqrt();
    let x = sqrt_k / p.sqrt();
    let y = sqrt_k * p.sqrt();
    pi_x * (curve.x_virtual() - x) + pi_y * (curve.y_virtual() - y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per dimension on every pass.
    pub points: usize,
    /// Half-width of the first pass in decades around the initial guess.
    pub decades: f64,
    /// Number of refinement passes after the first.
    pub refinements: usize,
    /// Spacing reduction per refinement pass.
    pub refine_factor: f64,
    /// Largest number of price dimensions accepted.
    pub max_dims: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 400,
            decades: 2.0,
            refinements: 1,
            refine_factor: 10.0,
            max_dims: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOracleResult {
    /// Smallest dual value found: an upper bound on the achievable profit
    /// in target units, tight at the optimum.
    pub best_profit: f64,
    pub best_prices: PriceVector,
    /// Largest dual difference between the best point and its grid
    /// neighbours on the final pass, plus the rounding error of summing
    /// the dual terms.
    pub grid_bound: f64,
    pub evaluations: usize,
}

/// Dual of the profit problem at log prices `u` (target pinned to zero):
/// the value every curve could release plus the value of the demanded
/// flows. Never below the best achievable profit, equal to it at the
/// optimal prices.
fn dual_value(market: &Market, routing: &RoutingSpec, log_prices: &[f64]) -> f64 {
    let mut g = 0.0;
    for (curve, &(a, b)) in market.curves().iter().zip(market.pairs()) {
        g += curve_value(curve, log_prices[a].exp(), log_prices[b].exp());
    }
    for i in market.tokens().non_target() {
        if routing.w[i] != 0.0 {
            g += routing.w[i] * log_prices[i].exp();
        }
    }
    g
}

/// Sum of the absolute dual terms, the scale of its rounding error.
fn dual_magnitude(market: &Market, routing: &RoutingSpec, log_prices: &[f64]) -> f64 {
    let curves: f64 = market
        .curves()
        .iter()
        .zip(market.pairs())
        .map(|(c, &(a, b))| {
            log_prices[a].exp() * c.x_virtual() + log_prices[b].exp() * c.y_virtual()
        })
        .sum();
    let flows: f64 = market
        .tokens()
        .non_target()
        .map(|i| (routing.w[i] * log_prices[i].exp()).abs())
        .sum();
    curves + flows
}

/// Brute-force profit bound on small markets.
///
/// Minimises the dual over a log-price grid centred on `initial`, then
/// refines around the best point. A best point on the edge of the first
/// grid means the dual keeps falling outside the searched window, which
/// happens when the requested routing cannot be financed.
pub fn grid_profit_oracle(
    market: &Market,
    routing: &RoutingSpec,
    initial: &PriceVector,
    spec: &GridSpec,
) -> Result<GridOracleResult> {
    if let Some(c) = market.curves().iter().find(|c| c.fee() > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid oracle covers fee-free curves only, `{}` charges a fee",
            c.id()
        )));
    }
    let vars = market.solver_variables();
    let dims = vars.len();
    if dims > spec.max_dims {
        return Err(Error::InvalidParameter(format!(
            "grid oracle limited to {} price dimensions, market has {dims}",
            spec.max_dims
        )));
    }
    if spec.points < 3 {
        return Err(Error::InvalidParameter(
            "grid needs at least 3 points per dimension".into(),
        ));
    }
    let target = market.tokens().target_index();
    let mut base = initial.with_numeraire(target).log_prices().to_vec();
    let mut center: Vec<f64> = vars.iter().map(|&t| base[t]).collect();
    let mut half_width = spec.decades * std::f64::consts::LN_10;
    let mut evaluations = 0;
    let mut grid_bound = 0.0;
    let mut best_value = f64::INFINITY;

    for pass in 0..=spec.refinements {
        let spacing = 2.0 * half_width / (spec.points - 1) as f64;
        let axis = |d: usize, k: usize| center[d] - half_width + spacing * k as f64;
        let eval = |idx: &[usize], base: &mut Vec<f64>| {
            for (d, &t) in vars.iter().enumerate() {
                base[t] = axis(d, idx[d]);
            }
            dual_value(market, routing, base)
        };

        // Under routing the first pass keeps the window edge apart: an edge
        // that beats the interior means the dual keeps falling outside it.
        // The arbitrage dual is bounded below by the null trade, so an edge
        // minimum there is only a flat direction.
        let split_edge = pass == 0 && !routing.is_arbitrage();
        let mut idx = vec![0usize; dims];
        let mut best_idx = idx.clone();
        let mut edge_value = f64::INFINITY;
        best_value = f64::INFINITY;
        loop {
            let g = eval(&idx, &mut base);
            evaluations += 1;
            let on_edge = idx.iter().any(|&k| k == 0 || k == spec.points - 1);
            if split_edge && on_edge {
                edge_value = edge_value.min(g);
            } else if g < best_value {
                best_value = g;
                best_idx.clone_from(&idx);
            }
            // odometer increment
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] < spec.points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }

        let mut spread = 0.0f64;
        for d in 0..dims {
            for step in [-1isize, 1] {
                let k = best_idx[d] as isize + step;
                if k < 0 || k >= spec.points as isize {
                    continue;
                }
                let mut nb = best_idx.clone();
                nb[d] = k as usize;
                spread = spread.max((eval(&nb, &mut base) - best_value).abs());
                evaluations += 1;
            }
        }
        // still descending where the interior meets the edge
        let pressed = best_idx.iter().any(|&k| k == 1 || k == spec.points - 2);
        if split_edge && pressed && edge_value < best_value - 1e-12 * (1.0 + best_value.abs()) {
            return Err(Error::InfeasibleRouting(format!(
                "dual minimum on the edge of a {}-decade window; routing cannot be financed",
                spec.decades
            )));
        }
        for (d, &t) in vars.iter().enumerate() {
            base[t] = axis(d, best_idx[d]);
        }
        grid_bound = spread + 16.0 * f64::EPSILON * dual_magnitude(market, routing, &base);

        center = (0..dims).map(|d| axis(d, best_idx[d])).collect();
        half_width = spacing * (spec.points - 1) as f64 / (2.0 * spec.refine_factor);
    }

    for (d, &t) in vars.iter().enumerate() {
        base[t] = center[d];
    }
    Ok(GridOracleResult {
        best_profit: best_value,
        best_prices: PriceVector::from_log_prices(base, target),
        grid_bound,
        evaluations,
    })
}

/// Relative tolerance for [`verify_alignment`].
pub const ALIGNMENT_RTOL: f64 = 1e-6;

/// Checks that every curve ends at the price its counterparties would
/// push it to: the pairwise price `pi_x / pi_y` if reachable, otherwise
/// the nearest reachable price. Fee curves are aligned when they stay put
/// inside their band and otherwise sit at the target net of the fee.
pub fn verify_alignment(tim: &TradeInstructionMatrix, market: &Market, pi: &PriceVector) -> bool {
    if tim.rows.len() != market.curves().len() {
        return false;
    }
    tim.rows
        .iter()
        .zip(market.curves())
        .zip(market.pairs())
        .all(|((row, curve), &(a, b))| {
            let x = curve.x_virtual() + row.dx;
            let y = curve.y_virtual() + row.dy;
            if !(x > 0.0 && y > 0.0) {
                return false;
            }
            let post = y / x;
            let expected = aligned_price(curve, pi.ratio(a, b));
            (post - expected).abs() <= ALIGNMENT_RTOL * expected
        })
}

fn aligned_price(curve: &Curve, q: f64) -> f64 {
    let p = curve.y_virtual() / curve.x_virtual();
    let (lo, hi) = reachable_prices(curve);
    let ask = p * (1.0 + curve.fee());
    let wanted = if q < p {
        q
    } else if q > ask {
        q / (1.0 + curve.fee())
    } else {
        p
    };
    wanted.max(lo).min(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::TokenSet;

    fn two_curve() -> Market {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 1.0)]).unwrap();
        Market::new(
            tokens,
            vec![
                Curve::unlevered("c1", "X", "Y", 10_000.0, 1.0).unwrap(),
                Curve::unlevered("c2", "X", "Y", 10_000.0, 4.0).unwrap(),
            ],
        )
        .unwrap()
    }

    fn equilibrium(m: &Market) -> PriceVector {
        PriceVector::from_prices(&[1.0, 16.0 / 9.0], 0).with_numeraire(m.tokens().target_index())
    }

    #[test]
    fn token_matrix_columns() {
        let m = two_curve();
        let t = TokenMatrix::from_market(&m);
        assert_eq!(t.n_slots(), 4);
        for s in 0..t.n_slots() {
            assert_eq!((0..t.n_tokens()).map(|i| t.entry(i, s)).sum::<u8>(), 1);
        }
        let tim = m.build_trade_instructions(&equilibrium(&m));
        assert_eq!(t.flows(&tim), m.aggregate_prf(&equilibrium(&m)).0);
    }

    #[test]
    fn null_tim_is_feasible() {
        let m = two_curve();
        let null = TradeInstructionMatrix::null(
            vec!["Y".into(), "X".into()],
            0,
            vec![1.0, 1.0],
            [("c1".to_string(), 1, 0), ("c2".to_string(), 1, 0)],
        );
        let cert = verify_cof(
            &null,
            &m,
            &RoutingSpec::arbitrage(2),
            &CofTolerances::default(),
        )
        .unwrap();
        assert!(cert.feasible, "{:?}", cert.violations);
        assert_eq!(null.profit(), 0.0);
    }

    #[test]
    fn equilibrium_is_feasible_and_aligned() {
        let m = two_curve();
        let pi = equilibrium(&m);
        let tim = m.build_trade_instructions(&pi);
        let cert = verify_cof(
            &tim,
            &m,
            &RoutingSpec::arbitrage(2),
            &CofTolerances::default(),
        )
        .unwrap();
        assert!(cert.feasible, "{:?}", cert.violations);
        assert!(verify_alignment(&tim, &m, &pi));
    }

    #[test]
    fn perturbed_delta_breaks_invariant() {
        let m = two_curve();
        let tim = m.build_trade_instructions(&equilibrium(&m));
        let r = &tim.rows[0];
        let bad = tim.with_row_delta(0, r.dx * 1.01, r.dy);
        let cert = verify_cof(
            &bad,
            &m,
            &RoutingSpec::arbitrage(2),
            &CofTolerances::default(),
        )
        .unwrap();
        assert!(!cert.feasible);
        assert!(cert
            .violations
            .iter()
            .any(|v| v.constraint == Constraint::CurveInvariant && v.subject == "c1"));
        assert!(!verify_alignment(&bad, &m, &equilibrium(&m)));
    }

    #[test]
    fn mismatched_tim_rejected() {
        let m = two_curve();
        let tim = m
            .without_curve(1)
            .build_trade_instructions(&equilibrium(&m));
        assert!(verify_cof(
            &tim,
            &m,
            &RoutingSpec::arbitrage(2),
            &CofTolerances::default()
        )
        .is_err());
    }

    #[test]
    fn grid_oracle_pair_example() {
        // closed form: dx_total = 100 (2 / sqrt(p) - 3/2) = 0 at p = 16/9,
        // dy_total = 100 (2 sqrt(p) - 3) = -100/3
        let m = two_curve();
        let res = grid_profit_oracle(
            &m,
            &RoutingSpec::arbitrage(2),
            &PriceVector::from_usd(m.tokens()),
            &GridSpec::default(),
        )
        .unwrap();
        assert!((res.best_profit - 100.0 / 3.0).abs() <= 1e-3 + res.grid_bound);
        assert!(res.best_profit >= 100.0 / 3.0 - 1e-9);
        assert!((res.best_prices.price(1) / (16.0 / 9.0) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn grid_oracle_no_arbitrage() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 2.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![
                Curve::unlevered("a", "X", "Y", 900.0, 2.0).unwrap(),
                Curve::unlevered("b", "X", "Y", 50.0, 2.0).unwrap(),
            ],
        )
        .unwrap();
        let res = grid_profit_oracle(
            &m,
            &RoutingSpec::arbitrage(2),
            &PriceVector::from_usd(m.tokens()),
            &GridSpec::default(),
        )
        .unwrap();
        assert!(res.best_profit >= 0.0 && res.best_profit <= res.grid_bound);
        // within one spacing of the refined grid
        assert!((res.best_prices.price(1) / 2.0).ln().abs() < 2.5e-3);
    }

    #[test]
    fn grid_oracle_rejects_fee_curves_and_high_dims() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 1.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![Curve::unlevered("a", "X", "Y", 1.0, 1.0)
                .unwrap()
                .with_fee(0.01)
                .unwrap()],
        )
        .unwrap();
        let pi = PriceVector::from_usd(m.tokens());
        assert!(
            grid_profit_oracle(&m, &RoutingSpec::arbitrage(2), &pi, &GridSpec::default()).is_err()
        );
        let spec = GridSpec {
            max_dims: 0,
            ..GridSpec::default()
        };
        let m = two_curve();
        assert!(grid_profit_oracle(&m, &RoutingSpec::arbitrage(2), &pi, &spec).is_err());
    }

    #[test]
    fn grid_oracle_flags_unfinanceable_routing() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 1.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![Curve::levered("a", "X", "Y", 10_000.0, 1.0, 2.0, 2.0).unwrap()],
        )
        .unwrap();
        let routing = RoutingSpec::from_flows(m.tokens(), [("X", 100.0)]).unwrap();
        let pi = PriceVector::from_usd(m.tokens());
        let err = grid_profit_oracle(&m, &routing, &pi, &GridSpec::default());
        assert!(matches!(err, Err(Error::InfeasibleRouting(_))));
    }

    #[test]
    fn alignment_clamped_levered_curve() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 1.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![Curve::levered("l", "X", "Y", 100.0, 0.5, 2.0, 1.0).unwrap()],
        )
        .unwrap();
        let pi = PriceVector::from_prices(&[1.0, 7.0], 0);
        let tim = m.build_trade_instructions(&pi);
        assert!(verify_alignment(&tim, &m, &pi));
        let r = &tim.rows[0];
        assert!((r.dx + 10.0 * (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
    }
}
