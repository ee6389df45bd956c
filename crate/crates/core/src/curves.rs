//! Constant-product curves and their price response.
//!
//! Every curve is held in one canonical form: the invariant `k`, the
//! attainable marginal-price range `[p_min, p_max]` and the current
//! *virtual* balances `(x, y)` with `x * y = k`. Unlevered curves use
//! `p_min = 0` and `p_max = inf`; levered and limit-order curves are
//! converted into this form on construction.
//!
//! Prices are always quoted as `token_y` per `token_x`.
//!
//! The price response function ([`prf`]) answers "which trade would this
//! curve do if the market price moved to `p`?". It returns the signed
//! token changes of the pool (inflow to the pool positive).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum relative width `eps0` for limit orders: a regularized order
/// satisfies `A / B >= sqrt(eps0)`.
pub const LIMIT_ORDER_EPS0: f64 = 1e-6;

/// Which way a curve is allowed to trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Bidirectional,
    /// The pool only ever pays out `token_x` (its price can only rise).
    SellXOnly,
    /// The pool only ever pays out `token_y` (its price can only fall).
    SellYOnly,
}

/// Signed token changes of one curve; inflow to the pool is positive.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurveDelta {
    pub dx: f64,
    pub dy: f64,
}

impl CurveDelta {
    pub const ZERO: CurveDelta = CurveDelta { dx: 0.0, dy: 0.0 };

    pub fn is_zero(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0
    }
}

/// Carbon-style parametrization of a levered range:
/// `B = sqrt(p_min)`, `A = sqrt(p_max) - sqrt(p_min)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeveredParams {
    pub a: f64,
    pub b: f64,
    /// `token_y` held by the curve when it sits at `p_max`.
    pub y_capacity: f64,
}

impl LeveredParams {
    pub fn from_range(p_min: f64, p_max: f64, y_capacity: f64) -> Result<Self> {
        if !(p_min > 0.0 && p_max >= p_min && p_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "levered range needs 0 < p_min <= p_max < inf, got [{p_min}, {p_max}]"
            )));
        }
        let b = p_min.sqrt();
        Ok(Self {
            a: p_max.sqrt() - b,
            b,
            y_capacity,
        })
    }

    pub fn p_min(&self) -> f64 {
        self.b * self.b
    }

    pub fn p_max(&self) -> f64 {
        (self.a + self.b) * (self.a + self.b)
    }

    /// Average price (y per x) realised when the whole range executes.
    pub fn full_execution_price(&self) -> f64 {
        self.b * (self.a + self.b)
    }

    /// `token_x` exchanged against the full `y_capacity`.
    pub fn full_execution_x(&self) -> f64 {
        self.y_capacity / self.full_execution_price()
    }
}

/// Widens ranges narrower than `A / B = sqrt(eps0)`.
///
/// The widened order keeps both `y_capacity` and the full-execution price
/// `B (A + B)`, so fully executing it exchanges the same amounts as the
/// original.
pub fn regularize_limit_order(params: LeveredParams) -> Result<LeveredParams> {
    if !(params.b > 0.0) || !params.b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "limit order needs B > 0, got {}",
            params.b
        )));
    }
    if !(params.a >= 0.0) || !params.a.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "limit order needs A >= 0, got {}",
            params.a
        )));
    }
    let min_ratio = LIMIT_ORDER_EPS0.sqrt();
    if params.a / params.b >= min_ratio {
        return Ok(params);
    }
    // B'^2 (1 + s) = B (A + B), A' = s B'
    let b = (params.full_execution_price() / (1.0 + min_ratio)).sqrt();
    Ok(LeveredParams {
        a: min_ratio * b,
        b,
        y_capacity: params.y_capacity,
    })
}

/// One constant-product AMM curve. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    id: String,
    token_x: String,
    token_y: String,
    k: f64,
    x_virtual: f64,
    y_virtual: f64,
    p_min: f64,
    p_max: f64,
    direction: Direction,
    fee: f64,
}

impl Curve {
    /// Full-range `x * y = k` curve at marginal price `price`.
    pub fn unlevered(
        id: impl Into<String>,
        token_x: impl Into<String>,
        token_y: impl Into<String>,
        k: f64,
        price: f64,
    ) -> Result<Self> {
        Self::levered(id, token_x, token_y, k, 0.0, f64::INFINITY, price)
    }

    /// Curve restricted to `[p_min, p_max]`, currently at `price`.
    pub fn levered(
        id: impl Into<String>,
        token_x: impl Into<String>,
        token_y: impl Into<String>,
        k: f64,
        p_min: f64,
        p_max: f64,
        price: f64,
    ) -> Result<Self> {
        let id = id.into();
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::curve(&id, format!("k must be positive, got {k}")));
        }
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::curve(
                &id,
                format!("price must be positive, got {price}"),
            ));
        }
        let x = (k / price).sqrt();
        let y = (k * price).sqrt();
        Self::from_virtual_balances(id, token_x, token_y, x, y, p_min, p_max)
    }

    /// Curve from explicit virtual balances; `k` is their product.
    pub fn from_virtual_balances(
        id: impl Into<String>,
        token_x: impl Into<String>,
        token_y: impl Into<String>,
        x_virtual: f64,
        y_virtual: f64,
        p_min: f64,
        p_max: f64,
    ) -> Result<Self> {
        let curve = Curve {
            id: id.into(),
            token_x: token_x.into(),
            token_y: token_y.into(),
            k: x_virtual * y_virtual,
            x_virtual,
            y_virtual,
            p_min,
            p_max,
            direction: Direction::Bidirectional,
            fee: 0.0,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Curve from actual holdings on a levered range. Solves the levered
    /// invariant `(x_a + sqrt(k / p_max)) (y_a + sqrt(k p_min)) = k` for `k`.
    pub fn from_actual_balances(
        id: impl Into<String>,
        token_x: impl Into<String>,
        token_y: impl Into<String>,
        x_actual: f64,
        y_actual: f64,
        p_min: f64,
        p_max: f64,
    ) -> Result<Self> {
        let id = id.into();
        if !(x_actual >= 0.0 && y_actual >= 0.0) || x_actual + y_actual <= 0.0 {
            return Err(Error::curve(
                &id,
                "actual balances must be non-negative and not both zero",
            ));
        }
        // with s = sqrt(k): s^2 (1 - sqrt(p_min / p_max)) - s (x_a sqrt(p_min) + y_a / sqrt(p_max)) - x_a y_a = 0
        let inv_sqrt_max = if p_max.is_infinite() {
            0.0
        } else {
            1.0 / p_max.sqrt()
        };
        let sqrt_min = p_min.sqrt();
        let qa = 1.0 - sqrt_min * inv_sqrt_max;
        let qb = x_actual * sqrt_min + y_actual * inv_sqrt_max;
        let qc = x_actual * y_actual;
        if !(qa > 0.0) {
            return Err(Error::curve(&id, "range must have p_min < p_max"));
        }
        let s = (qb + (qb * qb + 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        let x_virtual = x_actual + s * inv_sqrt_max;
        let y_virtual = y_actual + s * sqrt_min;
        // keep x * y = k exact up to rounding by deriving k from the balances
        Self::from_virtual_balances(id, token_x, token_y, x_virtual, y_virtual, p_min, p_max)
    }

    /// Curve from `(A, B, y_capacity)`. Ranges narrower than the minimum
    /// width are regularized first.
    pub fn from_levered_params(
        id: impl Into<String>,
        token_x: impl Into<String>,
        token_y: impl Into<String>,
        params: LeveredParams,
        price: f64,
    ) -> Result<Self> {
        let id = id.into();
        let params = regularize_limit_order(params)?;
        if !(params.y_capacity > 0.0) {
            return Err(Error::curve(&id, "y_capacity must be positive"));
        }
        let sqrt_k = params.y_capacity / params.a;
        Self::levered(
            id,
            token_x,
            token_y,
            sqrt_k * sqrt_k,
            params.p_min(),
            params.p_max(),
            price,
        )
    }

    pub fn with_fee(mut self, fee: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fee) {
            return Err(Error::curve(
                &self.id,
                format!("fee must be in [0, 1), got {fee}"),
            ));
        }
        self.fee = fee;
        Ok(self)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// Same curve moved to `price` along its invariant (clamped into range).
    pub fn at_price(&self, price: f64) -> Curve {
        let (x, y) = state_from_price(self, price);
        Curve {
            x_virtual: x,
            y_virtual: y,
            ..self.clone()
        }
    }

    /// Same curve after applying `delta` to the virtual balances.
    pub fn after_trade(&self, delta: CurveDelta) -> Curve {
        Curve {
            x_virtual: self.x_virtual + delta.dx,
            y_virtual: self.y_virtual + delta.dy,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let id = &self.id;
        if self.token_x == self.token_y {
            return Err(Error::curve(id, "token_x and token_y must differ"));
        }
        if !(self.x_virtual > 0.0 && self.y_virtual > 0.0)
            || !self.x_virtual.is_finite()
            || !self.y_virtual.is_finite()
        {
            return Err(Error::curve(
                id,
                "virtual balances must be positive and finite",
            ));
        }
        if !(self.p_min >= 0.0 && self.p_max > self.p_min) {
            return Err(Error::curve(
                id,
                format!("price range [{}, {}] is empty", self.p_min, self.p_max),
            ));
        }
        let p = self.y_virtual / self.x_virtual;
        let slack = 1e-9;
        if p < self.p_min * (1.0 - slack) || p > self.p_max * (1.0 + slack) {
            return Err(Error::curve(
                id,
                format!("price {p} outside range [{}, {}]", self.p_min, self.p_max),
            ));
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn token_x(&self) -> &str {
        &self.token_x
    }

    pub fn token_y(&self) -> &str {
        &self.token_y
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn x_virtual(&self) -> f64 {
        self.x_virtual
    }

    pub fn y_virtual(&self) -> f64 {
        self.y_virtual
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn fee(&self) -> f64 {
        self.fee
    }

    pub fn is_levered(&self) -> bool {
        self.p_min > 0.0 || self.p_max.is_finite()
    }

    /// Constant offsets between virtual and actual balances.
    pub fn virtual_offsets(&self) -> (f64, f64) {
        let x_off = if self.p_max.is_finite() {
            (self.k / self.p_max).sqrt()
        } else {
            0.0
        };
        (x_off, (self.k * self.p_min).sqrt())
    }

    /// Tokens actually held by the pool.
    pub fn actual_balances(&self) -> (f64, f64) {
        let (x_off, y_off) = self.virtual_offsets();
        (self.x_virtual - x_off, self.y_virtual - y_off)
    }

    /// Attainable price interval from the current state, taking the
    /// direction flag into account.
    pub fn attainable_range(&self) -> (f64, f64) {
        let p = self.y_virtual / self.x_virtual;
        match self.direction {
            Direction::Bidirectional => (self.p_min, self.p_max),
            Direction::SellXOnly => (p.max(self.p_min), self.p_max),
            Direction::SellYOnly => (self.p_min, p.min(self.p_max)),
        }
    }

    pub fn marginal_price(&self) -> f64 {
        self.y_virtual / self.x_virtual
    }
}

/// Marginal price `y / x` of the curve's current virtual state.
pub fn marginal_price(curve: &Curve) -> Result<f64> {
    if !(curve.x_virtual > 0.0) {
        return Err(Error::curve(&curve.id, "degenerate curve with x <= 0"));
    }
    Ok(curve.y_virtual / curve.x_virtual)
}

/// Virtual balances on the invariant at `p` clamped into `[p_min, p_max]`.
pub fn state_from_price(curve: &Curve, p: f64) -> (f64, f64) {
    let pc = p.clamp(curve.p_min, curve.p_max);
    ((curve.k / pc).sqrt(), (curve.k * pc).sqrt())
}

/// Where the curve's own marginal price ends up when the market price is
/// `p_target`, or `None` when the curve does not trade.
///
/// Below the current price the pool buys `x` and follows the price down.
/// Above `p_cur (1 + fee)` it sells `x` until its ask `p (1 + fee)` meets the
/// target. Between the two it stays put.
fn target_state_price(curve: &Curve, p_target: f64) -> Option<f64> {
    let p_cur = curve.marginal_price();
    let ask = p_cur * (1.0 + curve.fee);
    let moved = if p_target < p_cur {
        if curve.direction == Direction::SellXOnly {
            return None;
        }
        p_target
    } else if p_target > ask {
        if curve.direction == Direction::SellYOnly {
            return None;
        }
        p_target / (1.0 + curve.fee)
    } else {
        return None;
    };
    let pc = moved.clamp(curve.p_min, curve.p_max);
    (pc != p_cur).then_some(pc)
}

/// Trade the curve performs when the market price moves to `p_target`.
///
/// `prf(curve, curve.marginal_price())` is exactly zero.
pub fn prf(curve: &Curve, p_target: f64) -> CurveDelta {
    match target_state_price(curve, p_target) {
        None => CurveDelta::ZERO,
        Some(pc) => {
            let ratio = (pc / curve.marginal_price()).sqrt();
            CurveDelta {
                dx: curve.x_virtual / ratio - curve.x_virtual,
                dy: curve.y_virtual * ratio - curve.y_virtual,
            }
        }
    }
}

/// Analytic derivative of [`prf`] with respect to `ln p_target`.
///
/// Inside the range this is `(-x/2, +y/2)` evaluated at the post-trade
/// state. It is zero where the response is flat: outside the range and
/// exactly on its boundary, strictly inside the fee band, and on the
/// blocked side of a directional curve. At the edges of the fee band and
/// at the current price of a directional curve the trading side is used.
pub fn prf_derivative(curve: &Curve, p_target: f64) -> CurveDelta {
    let p_cur = curve.marginal_price();
    let ask = p_cur * (1.0 + curve.fee);
    let moved = if p_target <= p_cur && curve.direction != Direction::SellXOnly {
        p_target
    } else if p_target >= ask && curve.direction != Direction::SellYOnly {
        p_target / (1.0 + curve.fee)
    } else {
        return CurveDelta::ZERO;
    };
    if moved <= curve.p_min || moved >= curve.p_max {
        return CurveDelta::ZERO;
    }
    let ratio = (moved / p_cur).sqrt();
    CurveDelta {
        dx: -0.5 * curve.x_virtual / ratio,
        dy: 0.5 * curve.y_virtual * ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn c10k(price: f64) -> Curve {
        Curve::unlevered("c", "X", "Y", 10_000.0, price).unwrap()
    }

    #[test]
    fn marginal_price_examples() {
        let c = Curve::unlevered("e", "WETH", "USDC", 500.0, 1500.0).unwrap();
        assert!(rel(marginal_price(&c).unwrap(), 1500.0) < 1e-12);
        let c = Curve::from_virtual_balances("s", "X", "Y", 1.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert_eq!(marginal_price(&c).unwrap(), 1.0);
        let c =
            Curve::from_virtual_balances("r", "X", "Y", 50.0, 200.0, 0.0, f64::INFINITY).unwrap();
        assert_eq!(marginal_price(&c).unwrap(), 4.0);
    }

    #[test]
    fn degenerate_balances_rejected() {
        let err = Curve::from_virtual_balances("d", "X", "Y", 0.0, 1.0, 0.0, f64::INFINITY);
        assert!(matches!(err, Err(Error::InvalidCurve { .. })));
        let err = Curve::unlevered("d", "X", "X", 1.0, 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn state_from_price_examples() {
        let c = Curve::unlevered("e", "WETH", "USDC", 500.0, 1000.0).unwrap();
        let (x, y) = state_from_price(&c, 1500.0);
        assert!((x - 0.57735).abs() < 1e-5);
        assert!((y - 866.0254).abs() < 1e-4);

        let (x, y) = state_from_price(&c10k(1.0), 4.0);
        assert_eq!((x, y), (50.0, 200.0));

        let lev = Curve::levered("l", "X", "Y", 10_000.0, 0.5, 2.0, 1.0).unwrap();
        let (x, y) = state_from_price(&lev, 4.0);
        assert!((x - 70.7107).abs() < 1e-4);
        assert!((y - 141.4214).abs() < 1e-4);
    }

    #[test]
    fn prf_moves_to_target_state() {
        let d = prf(&c10k(1.0), 4.0);
        assert!((d.dx + 50.0).abs() < 1e-12);
        assert!((d.dy - 100.0).abs() < 1e-12);
    }

    #[test]
    fn prf_zero_at_current_price() {
        for p in [1e-6, 0.3, 1.0, 7.5, 2.5e4] {
            let c = c10k(p);
            assert!(prf(&c, c.marginal_price()).is_zero());
        }
    }

    #[test]
    fn prf_clamps_to_range_boundary() {
        let lev = Curve::levered("l", "X", "Y", 10_000.0, 0.25, 2.0, 1.0).unwrap();
        assert_eq!(prf(&lev, 100.0), prf(&lev, 2.0));
        assert_eq!(prf(&lev, 1e-3), prf(&lev, 0.25));
    }

    #[test]
    fn fee_band_is_flat() {
        let c = Curve::unlevered("f", "X", "Y", 10_000.0, 100.0)
            .unwrap()
            .with_fee(0.01)
            .unwrap();
        assert!(prf(&c, 100.5).is_zero());
        assert!(prf(&c, 101.0).is_zero());
        assert!(prf(&c, 100.0).is_zero());
        assert!(!prf(&c, 101.01).is_zero());
        assert!(!prf(&c, 99.99).is_zero());
        assert_eq!(prf_derivative(&c, 100.5), CurveDelta::ZERO);
    }

    #[test]
    fn directional_curves_trade_one_way() {
        let sx = c10k(1.0).with_direction(Direction::SellXOnly);
        assert!(prf(&sx, 0.5).is_zero());
        assert!(prf(&sx, 2.0).dx < 0.0);
        let sy = c10k(1.0).with_direction(Direction::SellYOnly);
        assert!(prf(&sy, 2.0).is_zero());
        assert!(prf(&sy, 0.5).dy < 0.0);
        assert_eq!(sx.attainable_range(), (1.0, f64::INFINITY));
    }

    #[test]
    fn derivative_examples() {
        let d = prf_derivative(&c10k(1.0), 1.0);
        assert!((d.dx + 50.0).abs() < 1e-12 && (d.dy - 50.0).abs() < 1e-12);

        // finite-difference oracle in log price, h = 1e-6
        let c = c10k(1.0);
        let h: f64 = 1e-6;
        let up = prf(&c, 4.0 * h.exp());
        let dn = prf(&c, 4.0 * (-h).exp());
        let fd = ((up.dx - dn.dx) / (2.0 * h), (up.dy - dn.dy) / (2.0 * h));
        assert!(rel(fd.0, -25.0) < 1e-6 && rel(fd.1, 100.0) < 1e-6);
        let d = prf_derivative(&c, 4.0);
        assert!(rel(d.dx, -25.0) < 1e-12 && rel(d.dy, 100.0) < 1e-12);

        let lev = Curve::levered("l", "X", "Y", 10_000.0, 0.5, 2.0, 1.0).unwrap();
        assert_eq!(prf_derivative(&lev, 3.0), CurveDelta::ZERO);
        assert_eq!(prf_derivative(&lev, 2.0), CurveDelta::ZERO);
        assert_eq!(prf_derivative(&lev, 0.1), CurveDelta::ZERO);
    }

    #[test]
    fn regularization_widens_only_narrow_ranges() {
        let wide = LeveredParams {
            a: 5.0,
            b: 10.0,
            y_capacity: 1.0,
        };
        assert_eq!(regularize_limit_order(wide).unwrap(), wide);

        let limit = LeveredParams {
            a: 0.0,
            b: 10.0,
            y_capacity: 1000.0,
        };
        let r = regularize_limit_order(limit).unwrap();
        assert!(rel(r.a / r.b, 1e-3) < 1e-12);
        assert!(rel(r.full_execution_x(), limit.full_execution_x()) < 1e-12);
        assert_eq!(r.y_capacity, limit.y_capacity);

        assert!(regularize_limit_order(LeveredParams {
            a: 0.0,
            b: 0.0,
            y_capacity: 1.0
        })
        .is_err());
        assert!(regularize_limit_order(LeveredParams {
            a: -1.0,
            b: 1.0,
            y_capacity: 1.0
        })
        .is_err());
    }

    #[test]
    fn actual_balances_round_trip() {
        let c = Curve::from_actual_balances("a", "X", "Y", 3.0, 500.0, 100.0, 400.0).unwrap();
        let (xa, ya) = c.actual_balances();
        assert!(rel(xa, 3.0) < 1e-12 && rel(ya, 500.0) < 1e-12);
        assert!(rel(c.x_virtual() * c.y_virtual(), c.k()) < 1e-12);

        let lev = Curve::levered("l", "X", "Y", 10_000.0, 0.5, 2.0, 2.0).unwrap();
        let (xa, _) = lev.actual_balances();
        assert!(xa.abs() < 1e-12);
    }

    #[test]
    fn levered_params_build_matching_curve() {
        let p = LeveredParams::from_range(1500.0, 2000.0, 1000.0).unwrap();
        let c = Curve::from_levered_params("lp", "WETH", "USDC", p, 2000.0).unwrap();
        let (_, ya) = c.actual_balances();
        assert!(rel(ya, 1000.0) < 1e-9);
        assert!(rel(c.p_min(), 1500.0) < 1e-12 && rel(c.p_max(), 2000.0) < 1e-12);
    }

    #[test]
    fn invalid_fee_rejected() {
        assert!(c10k(1.0).with_fee(1.0).is_err());
        assert!(c10k(1.0).with_fee(-0.1).is_err());
    }
}
