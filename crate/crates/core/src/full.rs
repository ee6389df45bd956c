//! Full mode: Newton-Raphson on the log prices of every traded token.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::curves::prf_derivative;
use crate::market::{Market, PriceVector, RoutingSpec};
use crate::tim::TradeInstructionMatrix;

/// How the Jacobian of the self-financing residual is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianPath {
    /// Analytic per-curve derivatives scattered into 2x2 blocks.
    #[default]
    JacobianFirst,
    /// Central finite differences of the aggregated residual, one entry at
    /// a time.
    SumFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Fraction of the Newton step taken, in `(0, 1]`.
    pub eta: f64,
    pub max_iter: usize,
    /// Converged once the mean absolute residual, valued in USD, is below
    /// this.
    pub abs_tol_usd: f64,
    /// Log-price half step for finite differences.
    pub stencil: f64,
    pub jacobian_path: JacobianPath,
    /// Singular values below `rank_tol * sigma_max` are treated as zero.
    pub rank_tol: f64,
    /// Largest allowed move of any log price away from the initial guess.
    pub price_escape_bound: f64,
    /// Backtrack Newton steps that fail to lower the dual objective
    /// (the profit bound whose gradient is the residual). Off gives plain
    /// damped Newton.
    pub line_search: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iter: 50,
            abs_tol_usd: 1.0,
            stencil: 1e-6,
            jacobian_path: JacobianPath::JacobianFirst,
            rank_tol: 1e-10,
            price_escape_bound: 30.0,
            line_search: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullStatus {
    Converged,
    MaxIterations,
    ZeroJacobian,
    EscapedDomain,
    InfeasibleRouting,
}

impl FullStatus {
    pub fn is_converged(self) -> bool {
        self == FullStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullResult {
    pub prices: PriceVector,
    pub tim: TradeInstructionMatrix,
    pub profit: f64,
    pub status: FullStatus,
    pub iterations: usize,
    /// Mean absolute residual in USD at the start and after every step.
    pub residual_trace: Vec<f64>,
    pub rank_deficient_steps: usize,
    pub jacobian_time: Duration,
}

/// Jacobian of the self-financing residual with respect to log prices,
/// restricted to a set of token indices (rows and columns in that order).
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub tokens: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

fn positions(n_tokens: usize, vars: &[usize]) -> Vec<Option<usize>> {
    let mut pos = vec![None; n_tokens];
    for (k, &t) in vars.iter().enumerate() {
        pos[t] = Some(k);
    }
    pos
}

/// The 2x2 block one curve on `(a, b)` contributes, ordered
/// `[[d flow_a / d u_a, d flow_a / d u_b], [d flow_b / d u_a, d flow_b / d u_b]]`
/// with `u` the log prices.
///
/// The curve only sees `u_a - u_b`, so each row sums to zero and one
/// derivative per curve fills the whole block.
pub fn curve_block(market: &Market, curve: usize, pi: &PriceVector) -> [[f64; 2]; 2] {
    let (a, b) = market.pairs()[curve];
    let d = prf_derivative(&market.curves()[curve], pi.ratio(a, b));
    [[d.dx, -d.dx], [d.dy, -d.dy]]
}

/// Analytic assembly: one derivative evaluation per curve.
pub fn jacobian_first(market: &Market, pi: &PriceVector, vars: &[usize]) -> Jacobian {
    let n = vars.len();
    let pos = positions(market.n_tokens(), vars);
    let mut matrix = DMatrix::zeros(n, n);
    for (c, &(a, b)) in market.pairs().iter().enumerate() {
        let block = curve_block(market, c, pi);
        let idx = [pos[a], pos[b]];
        for (r, row) in idx.iter().enumerate() {
            let Some(row) = *row else { continue };
            for (s, col) in idx.iter().enumerate() {
                if let Some(col) = *col {
                    matrix[(row, col)] += block[r][s];
                }
            }
        }
    }
    Jacobian {
        tokens: vars.to_vec(),
        matrix,
    }
}

/// Finite-difference assembly: every entry re-evaluates the aggregate flow
/// of its token over all curves at two perturbed price vectors.
pub fn jacobian_sum_first(
    market: &Market,
    pi: &PriceVector,
    vars: &[usize],
    stencil: f64,
) -> Jacobian {
    let n = vars.len();
    let mut matrix = DMatrix::zeros(n, n);
    let base = pi.log_prices().to_vec();
    let numeraire = pi.numeraire();
    for (col, &j) in vars.iter().enumerate() {
        let mut up = base.clone();
        up[j] += stencil;
        let up = PriceVector::from_log_prices(up, numeraire);
        let mut dn = base.clone();
        dn[j] -= stencil;
        let dn = PriceVector::from_log_prices(dn, numeraire);
        for (row, &i) in vars.iter().enumerate() {
            let f_up = token_flow(market, &up, i);
            let f_dn = token_flow(market, &dn, i);
            matrix[(row, col)] = (f_up - f_dn) / (2.0 * stencil);
        }
    }
    Jacobian {
        tokens: vars.to_vec(),
        matrix,
    }
}

/// Aggregate flow of a single token: every curve is evaluated, only those
/// trading `token` add to the sum.
fn token_flow(market: &Market, pi: &PriceVector, token: usize) -> f64 {
    let mut total = 0.0;
    for (curve, &(a, b)) in market.curves().iter().zip(market.pairs()) {
        let d = crate::curves::prf(curve, pi.ratio(a, b));
        if a == token {
            total += d.dx;
        } else if b == token {
            total += d.dy;
        }
    }
    total
}

/// One damped Newton update.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub delta: DVector<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Computes `-eta * J^-1 r`. Rank-deficient Jacobians are inverted on their
/// range only (minimum-norm least squares), leaving null-space directions
/// untouched. Returns `None` for a numerically zero Jacobian.
pub fn newton_step(
    jacobian: &DMatrix<f64>,
    residual: &DVector<f64>,
    eta: f64,
    rank_tol: f64,
) -> Option<NewtonStep> {
    let n = residual.len();
    if n == 0 {
        return Some(NewtonStep {
            delta: DVector::zeros(0),
            rank: 0,
            rank_deficient: false,
        });
    }
    let svd = jacobian.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) || !sigma_max.is_finite() {
        return None;
    }
    let cutoff = rank_tol * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let rhs = -residual * eta;
    if rank == n {
        if let Some(delta) = jacobian.clone().lu().solve(&rhs) {
            return Some(NewtonStep {
                delta,
                rank,
                rank_deficient: false,
            });
        }
    }
    let delta = svd.solve(&rhs, cutoff).ok()?;
    Some(NewtonStep {
        delta,
        rank,
        rank_deficient: rank < n,
    })
}

/// A square system `f(x) = 0` for [`newton_solve`].
pub trait RootProblem {
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Convex objective whose gradient in `x` is the residual up to a
    /// positive scaling. Problems that have one get a backtracking line
    /// search.
    fn merit(&self, _x: &DVector<f64>) -> Option<Merit> {
        None
    }

    /// Scalar size of a residual for the convergence test.
    fn residual_norm(&self, residual: &DVector<f64>) -> f64 {
        if residual.is_empty() {
            0.0
        } else {
            residual.iter().map(|r| r.abs()).sum::<f64>() / residual.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub eta: f64,
    pub max_iter: usize,
    /// Converged when `residual_norm < tol`.
    pub tol: f64,
    pub rank_tol: f64,
    /// Largest allowed `|x - x0|` in any coordinate.
    pub escape_bound: f64,
    pub line_search: bool,
}

impl From<&SolverConfig> for NewtonOptions {
    fn from(c: &SolverConfig) -> Self {
        Self {
            eta: c.eta,
            max_iter: c.max_iter,
            tol: c.abs_tol_usd,
            rank_tol: c.rank_tol,
            escape_bound: c.price_escape_bound,
            line_search: c.line_search,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub status: FullStatus,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
    pub rank_deficient_steps: usize,
    pub jacobian_time: Duration,
}

/// Damped Newton-Raphson from `x0`.
///
/// `iterations` counts updates applied; the residual norm is recorded
/// before the first update and after each one.
pub fn newton_solve(
    problem: &impl RootProblem,
    x0: DVector<f64>,
    opts: &NewtonOptions,
) -> NewtonOutcome {
    let mut x = x0.clone();
    let mut trace = Vec::new();
    let mut rank_deficient_steps = 0;
    let mut jacobian_time = Duration::ZERO;
    let mut iterations = 0;
    let status = loop {
        let r = problem.residual(&x);
        let norm = problem.residual_norm(&r);
        trace.push(norm);
        if !norm.is_finite() {
            break FullStatus::EscapedDomain;
        }
        if norm < opts.tol {
            break FullStatus::Converged;
        }
        if iterations == opts.max_iter {
            break FullStatus::MaxIterations;
        }
        let started = Instant::now();
        let j = problem.jacobian(&x);
        jacobian_time += started.elapsed();
        let Some(step) = newton_step(&j, &r, opts.eta, opts.rank_tol) else {
            break FullStatus::ZeroJacobian;
        };
        if step.rank_deficient {
            rank_deficient_steps += 1;
        }
        let delta = if opts.line_search {
            backtrack(problem, &x, step.delta)
        } else {
            step.delta
        };
        x += delta;
        iterations += 1;
        if (&x - &x0).amax() > opts.escape_bound {
            break FullStatus::EscapedDomain;
        }
    };
    NewtonOutcome {
        x,
        status,
        iterations,
        residual_trace: trace,
        rank_deficient_steps,
        jacobian_time,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Merit {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Rounding error of `value`; differences below it carry no signal.
    pub noise: f64,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Halves `delta` until the merit falls by the Armijo margin. Steps that
/// are not descent directions, or whose predicted decrease drowns in
/// rounding, are taken whole.
fn backtrack(problem: &impl RootProblem, x: &DVector<f64>, delta: DVector<f64>) -> DVector<f64> {
    let Some(m0) = problem.merit(x) else {
        return delta;
    };
    let slope = m0.gradient.dot(&delta);
    if !(slope < 0.0) {
        return delta;
    }
    let mut alpha = 1.0;
    for _ in 0..MAX_BACKTRACKS {
        if -ARMIJO_C * alpha * slope <= m0.noise {
            break;
        }
        let trial = x + &delta * alpha;
        if let Some(m) = problem.merit(&trial) {
            if m.value <= m0.value + ARMIJO_C * alpha * slope {
                return delta * alpha;
            }
        }
        alpha *= 0.5;
    }
    delta
}

/// The market residual over the solver variables, in log prices.
struct MarketProblem<'a> {
    market: &'a Market,
    routing: &'a RoutingSpec,
    vars: Vec<usize>,
    /// Full log-price vector; entries outside `vars` stay fixed.
    base: Vec<f64>,
    usd: Vec<f64>,
    n_constraints: usize,
    config: &'a SolverConfig,
}

impl MarketProblem<'_> {
    fn prices(&self, x: &DVector<f64>) -> PriceVector {
        let mut log_prices = self.base.clone();
        for (k, &t) in self.vars.iter().enumerate() {
            log_prices[t] = x[k];
        }
        PriceVector::from_log_prices(log_prices, self.market.tokens().target_index())
    }
}

impl RootProblem for MarketProblem<'_> {
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let flow = self.market.aggregate_prf(&self.prices(x));
        DVector::from_iterator(
            self.vars.len(),
            self.vars.iter().map(|&t| flow.0[t] - self.routing.w[t]),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let pi = self.prices(x);
        match self.config.jacobian_path {
            JacobianPath::JacobianFirst => jacobian_first(self.market, &pi, &self.vars).matrix,
            JacobianPath::SumFirst => {
                jacobian_sum_first(self.market, &pi, &self.vars, self.config.stencil).matrix
            }
        }
    }

    /// Value the curves release at prices `pi` plus the value of the
    /// routed flows. By the envelope theorem its log-price gradient is
    /// `-pi_i * residual_i`.
    fn merit(&self, x: &DVector<f64>) -> Option<Merit> {
        let pi = self.prices(x);
        let mut value = 0.0;
        let mut gross = 0.0;
        let mut flow = vec![0.0; self.market.n_tokens()];
        for (d, &(a, b)) in self.market.curve_prfs(&pi).iter().zip(self.market.pairs()) {
            let (va, vb) = (pi.price(a) * d.dx, pi.price(b) * d.dy);
            value -= va + vb;
            gross += va.abs() + vb.abs();
            flow[a] += d.dx;
            flow[b] += d.dy;
        }
        for i in self.market.tokens().non_target() {
            let v = pi.price(i) * self.routing.w[i];
            value += v;
            gross += v.abs();
        }
        let grad = DVector::from_iterator(
            self.vars.len(),
            self.vars
                .iter()
                .map(|&t| -pi.price(t) * (flow[t] - self.routing.w[t])),
        );
        value.is_finite().then_some(Merit {
            value,
            gradient: grad,
            noise: 64.0 * f64::EPSILON * gross,
        })
    }

    /// Mean over all self-financing constraints; constraints on untouched
    /// tokens are identically zero.
    fn residual_norm(&self, residual: &DVector<f64>) -> f64 {
        if self.n_constraints == 0 {
            return 0.0;
        }
        let total: f64 = residual
            .iter()
            .zip(&self.usd)
            .map(|(r, usd)| r.abs() * usd)
            .sum();
        total / self.n_constraints as f64
    }
}

/// Solves the market starting from USD reference prices.
pub fn optimize_full(market: &Market, routing: &RoutingSpec, config: &SolverConfig) -> FullResult {
    optimize_full_from(
        market,
        routing,
        &PriceVector::from_usd(market.tokens()),
        config,
    )
}

/// Solves the market starting from `initial`.
pub fn optimize_full_from(
    market: &Market,
    routing: &RoutingSpec,
    initial: &PriceVector,
    config: &SolverConfig,
) -> FullResult {
    let tokens = market.tokens();
    let target = tokens.target_index();
    let initial = initial.with_numeraire(target);
    let vars = market.solver_variables();
    let problem = MarketProblem {
        market,
        routing,
        usd: vars.iter().map(|&t| tokens.usd_prices()[t]).collect(),
        vars,
        base: initial.log_prices().to_vec(),
        n_constraints: tokens.len() - 1,
        config,
    };

    let touched = market.touched();
    if tokens
        .non_target()
        .any(|i| !touched[i] && routing.w[i] != 0.0)
    {
        let tim = market.build_trade_instructions(&initial);
        return FullResult {
            prices: initial,
            profit: tim.profit(),
            tim,
            status: FullStatus::InfeasibleRouting,
            iterations: 0,
            residual_trace: Vec::new(),
            rank_deficient_steps: 0,
            jacobian_time: Duration::ZERO,
        };
    }

    let x0 = DVector::from_iterator(
        problem.vars.len(),
        problem.vars.iter().map(|&t| initial.log_price(t)),
    );
    let out = newton_solve(&problem, x0, &NewtonOptions::from(config));
    let prices = problem.prices(&out.x);
    let tim = market.build_trade_instructions(&prices);
    FullResult {
        prices,
        profit: tim.profit(),
        tim,
        status: out.status,
        iterations: out.iterations,
        residual_trace: out.residual_trace,
        rank_deficient_steps: out.rank_deficient_steps,
        jacobian_time: out.jacobian_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::Curve;
    use crate::market::TokenSet;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    struct Affine {
        m: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl RootProblem for Affine {
        fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.m * x + &self.b
        }
        fn jacobian(&self, _: &DVector<f64>) -> DMatrix<f64> {
            self.m.clone()
        }
    }

    fn opts(eta: f64, max_iter: usize, tol: f64) -> NewtonOptions {
        NewtonOptions {
            eta,
            max_iter,
            tol,
            rank_tol: 1e-10,
            escape_bound: f64::INFINITY,
            line_search: true,
        }
    }

    #[test]
    fn linear_one_step() {
        let p = Affine {
            m: DMatrix::from_element(1, 1, 3.0),
            b: DVector::from_element(1, -6.0),
        };
        let out = newton_solve(&p, DVector::from_element(1, 10.0), &opts(1.0, 10, 1e-12));
        assert_eq!(out.status, FullStatus::Converged);
        assert_eq!(out.iterations, 1);
        assert!((out.x[0] - 2.0).abs() < 1e-15);
    }

    /// `atan(x)`, the gradient of `x atan(x) - ln(1 + x^2) / 2`.
    struct Arctan;

    impl RootProblem for Arctan {
        fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
            x.map(f64::atan)
        }
        fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 1.0 / (1.0 + x[0] * x[0]))
        }
        fn merit(&self, x: &DVector<f64>) -> Option<Merit> {
            let v = x[0] * x[0].atan() - 0.5 * (1.0 + x[0] * x[0]).ln();
            Some(Merit {
                value: v,
                gradient: self.residual(x),
                noise: 1e-15,
            })
        }
    }

    #[test]
    fn line_search_tames_overshooting_newton() {
        let x0 = DVector::from_element(1, 1.5);
        let plain = NewtonOptions {
            escape_bound: 30.0,
            line_search: false,
            ..opts(1.0, 50, 1e-12)
        };
        let out = newton_solve(&Arctan, x0.clone(), &plain);
        assert_eq!(out.status, FullStatus::EscapedDomain);

        let out = newton_solve(
            &Arctan,
            x0,
            &NewtonOptions {
                line_search: true,
                ..plain
            },
        );
        assert_eq!(out.status, FullStatus::Converged);
        assert!(out.x[0].abs() < 1e-12);
    }

    #[test]
    fn learning_rate_halves_residual() {
        let p = Affine {
            m: DMatrix::from_element(1, 1, 3.0),
            b: DVector::from_element(1, -6.0),
        };
        let out = newton_solve(&p, DVector::from_element(1, 10.0), &opts(0.5, 8, 0.0));
        assert_eq!(out.status, FullStatus::MaxIterations);
        for (n, r) in out.residual_trace.iter().enumerate() {
            assert!(rel(*r, out.residual_trace[0] * 0.5f64.powi(n as i32)) < 1e-9);
        }
    }

    #[test]
    fn null_space_direction_untouched() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let r = DVector::from_vec(vec![1.0, 1.0]);
        let step = newton_step(&j, &r, 1.0, 1e-10).unwrap();
        assert!(step.rank_deficient);
        assert_eq!(step.rank, 1);
        assert!((step.delta[0] + 1.0).abs() < 1e-15);
        assert!(step.delta[1].abs() < 1e-15);
    }

    #[test]
    fn zero_jacobian_detected() {
        let j = DMatrix::zeros(2, 2);
        assert!(newton_step(&j, &DVector::from_vec(vec![1.0, 0.0]), 1.0, 1e-10).is_none());
    }

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

    #[test]
    fn single_block_pattern() {
        let tokens = TokenSet::new([("T", 1.0), ("A", 2.0), ("B", 1.0), ("C", 1.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![Curve::unlevered("ab", "A", "B", 100.0, 2.0).unwrap()],
        )
        .unwrap();
        let pi = PriceVector::from_prices(&[1.0, 2.5, 1.0, 1.0], 0);
        let vars = [1, 2, 3];
        let j = jacobian_first(&m, &pi, &vars).matrix;
        let fd = jacobian_sum_first(&m, &pi, &vars, 1e-6).matrix;
        for r in 0..3 {
            for c in 0..3 {
                let inside = r < 2 && c < 2;
                assert_eq!(j[(r, c)] != 0.0, inside);
                assert!((j[(r, c)] - fd[(r, c)]).abs() <= 1e-6 * j[(r, c)].abs().max(1e-9));
            }
        }
    }

    #[test]
    fn no_curves_zero_jacobian() {
        let tokens = TokenSet::new([("T", 1.0), ("A", 2.0)]).unwrap();
        let m = Market::new(tokens, vec![]).unwrap();
        let pi = PriceVector::from_usd(m.tokens());
        assert_eq!(jacobian_first(&m, &pi, &[1]).matrix, DMatrix::zeros(1, 1));
        assert_eq!(
            jacobian_sum_first(&m, &pi, &[1], 1e-6).matrix,
            DMatrix::zeros(1, 1)
        );
    }

    #[test]
    fn clamped_curve_zero_block() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 1.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![Curve::levered("l", "X", "Y", 100.0, 0.5, 2.0, 1.0).unwrap()],
        )
        .unwrap();
        let pi = PriceVector::from_prices(&[1.0, 5.0], 0);
        assert_eq!(curve_block(&m, 0, &pi), [[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn full_two_curve() {
        let config = SolverConfig {
            abs_tol_usd: 1e-9,
            ..SolverConfig::default()
        };
        let res = optimize_full(&two_curve(), &RoutingSpec::arbitrage(2), &config);
        assert_eq!(res.status, FullStatus::Converged);
        assert!(rel(res.prices.price(1), 16.0 / 9.0) < 1e-9);
        assert!(rel(res.profit, 100.0 / 3.0) < 1e-9);
        assert!(res.iterations < 10);
    }

    #[test]
    fn consistent_market_converges_immediately() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 3.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![
                Curve::unlevered("a", "X", "Y", 900.0, 3.0).unwrap(),
                Curve::unlevered("b", "Y", "X", 10.0, 1.0 / 3.0).unwrap(),
            ],
        )
        .unwrap();
        let res = optimize_full(&m, &RoutingSpec::arbitrage(2), &SolverConfig::default());
        assert_eq!(res.status, FullStatus::Converged);
        assert!(res.iterations <= 2);
        assert!(res.profit.abs() < 1e-9);
    }

    #[test]
    fn untouched_token_demand_is_infeasible() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 1.0), ("Z", 1.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![Curve::unlevered("a", "X", "Y", 900.0, 1.0).unwrap()],
        )
        .unwrap();
        let routing = RoutingSpec::from_flows(m.tokens(), [("Z", 5.0)]).unwrap();
        let res = optimize_full(&m, &routing, &SolverConfig::default());
        assert_eq!(res.status, FullStatus::InfeasibleRouting);
    }

    #[test]
    fn numeraire_shift_gives_identical_tim() {
        let m = two_curve();
        let pi = PriceVector::from_usd(m.tokens());
        let cfg = SolverConfig::default();
        let a = optimize_full_from(&m, &RoutingSpec::arbitrage(2), &pi, &cfg);
        let b = optimize_full_from(&m, &RoutingSpec::arbitrage(2), &pi.shifted(3.7), &cfg);
        assert_eq!(a.tim, b.tim);
    }
}
