//! Token registry, price vectors and market-level aggregation of curve
//! responses.

use std::collections::{HashMap, VecDeque};

use crate::curves::{prf, Curve, CurveDelta};
use crate::error::{Error, Result};
use crate::tim::{TimRow, TradeInstructionMatrix};

/// Ordered set of tokens with USD reference prices and a profit token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    symbols: Vec<String>,
    usd_price: Vec<f64>,
    target_index: usize,
    index: HashMap<String, usize>,
}

impl TokenSet {
    /// Builds a token set; the first token is the target.
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut usd_price = Vec::new();
        let mut index = HashMap::new();
        for (symbol, usd) in tokens {
            let symbol = symbol.into();
            if !(usd > 0.0 && usd.is_finite()) {
                return Err(Error::Configuration(format!(
                    "usd price of `{symbol}` must be positive, got {usd}"
                )));
            }
            if index.insert(symbol.clone(), symbols.len()).is_some() {
                return Err(Error::Configuration(format!("duplicate token `{symbol}`")));
            }
            symbols.push(symbol);
            usd_price.push(usd);
        }
        if symbols.is_empty() {
            return Err(Error::Configuration("token set is empty".into()));
        }
        Ok(Self {
            symbols,
            usd_price,
            target_index: 0,
            index,
        })
    }

    pub fn with_target(mut self, symbol: &str) -> Result<Self> {
        self.target_index = self.index_of(symbol)?;
        Ok(self)
    }

    pub fn with_target_index(mut self, target_index: usize) -> Result<Self> {
        if target_index >= self.symbols.len() {
            return Err(Error::Configuration(format!(
                "target index {target_index} out of range"
            )));
        }
        self.target_index = target_index;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    pub fn usd_prices(&self) -> &[f64] {
        &self.usd_price
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target(&self) -> &str {
        &self.symbols[self.target_index]
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize> {
        self.index
            .get(symbol)
            .copied()
            .ok_or_else(|| Error::UnknownToken(symbol.to_string()))
    }

    /// Token indices in order, skipping the target.
    pub fn non_target(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| i != self.target_index)
    }
}

/// Log prices of all tokens with one token pinned at `ln 1 = 0`.
///
/// Only ratios are observable; two vectors differing by a common factor
/// describe the same market prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector {
    log_prices: Vec<f64>,
    numeraire: usize,
}

impl PriceVector {
    /// Pins `raw[numeraire]` to zero by shifting every entry.
    pub fn from_log_prices(raw: Vec<f64>, numeraire: usize) -> Self {
        let pin = raw[numeraire];
        let log_prices = raw.into_iter().map(|l| l - pin).collect();
        Self {
            log_prices,
            numeraire,
        }
    }

    pub fn from_prices(prices: &[f64], numeraire: usize) -> Self {
        Self::from_log_prices(prices.iter().map(|p| p.ln()).collect(), numeraire)
    }

    /// Initial guess: USD reference prices expressed in the target token.
    pub fn from_usd(tokens: &TokenSet) -> Self {
        Self::from_prices(tokens.usd_prices(), tokens.target_index())
    }

    pub fn len(&self) -> usize {
        self.log_prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prices.is_empty()
    }

    pub fn numeraire(&self) -> usize {
        self.numeraire
    }

    pub fn log_prices(&self) -> &[f64] {
        &self.log_prices
    }

    pub fn log_price(&self, i: usize) -> f64 {
        self.log_prices[i]
    }

    /// Price of token `i` in numeraire units.
    pub fn price(&self, i: usize) -> f64 {
        self.log_prices[i].exp()
    }

    /// `pi_i / pi_j`: price of token `i` in units of token `j`.
    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        (self.log_prices[i] - self.log_prices[j]).exp()
    }

    /// Adds `c` to every log price and re-pins the numeraire.
    pub fn shifted(&self, c: f64) -> Self {
        Self::from_log_prices(
            self.log_prices.iter().map(|l| l + c).collect(),
            self.numeraire,
        )
    }

    pub fn with_numeraire(&self, numeraire: usize) -> Self {
        Self::from_log_prices(self.log_prices.clone(), numeraire)
    }
}

/// Net token flow into the set of curves, one entry per token.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector(pub Vec<f64>);

impl FlowVector {
    pub fn zeros(n: usize) -> Self {
        FlowVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Desired net flows for the routing problem. All zero is pure arbitrage.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingSpec {
    pub w: Vec<f64>,
}

impl RoutingSpec {
    pub fn arbitrage(n_tokens: usize) -> Self {
        Self {
            w: vec![0.0; n_tokens],
        }
    }

    /// Routing demand from `(symbol, amount)` pairs; positive amounts are
    /// pushed into the curves.
    pub fn from_flows<'a>(
        tokens: &TokenSet,
        flows: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let mut w = vec![0.0; tokens.len()];
        for (symbol, amount) in flows {
            let i = tokens.index_of(symbol)?;
            if i == tokens.target_index() {
                return Err(Error::Configuration(format!(
                    "routing flow given for target token `{symbol}`"
                )));
            }
            w[i] += amount;
        }
        Ok(Self { w })
    }

    pub fn is_arbitrage(&self) -> bool {
        self.w.iter().all(|&v| v == 0.0)
    }
}

/// Curves bound to a token set, with token indices resolved once.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    tokens: TokenSet,
    curves: Vec<Curve>,
    pairs: Vec<(usize, usize)>,
}

impl Market {
    pub fn new(tokens: TokenSet, curves: Vec<Curve>) -> Result<Self> {
        let pairs = curves
            .iter()
            .map(|c| Ok((tokens.index_of(c.token_x())?, tokens.index_of(c.token_y())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tokens,
            curves,
            pairs,
        })
    }

    pub fn tokens(&self) -> &TokenSet {
        &self.tokens
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    /// `(token_x, token_y)` indices of each curve.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Same market with a different target token.
    pub fn retarget(&self, symbol: &str) -> Result<Self> {
        Ok(Self {
            tokens: self.tokens.clone().with_target(symbol)?,
            ..self.clone()
        })
    }

    /// Same market without curve `i`.
    pub fn without_curve(&self, i: usize) -> Self {
        let mut m = self.clone();
        m.curves.remove(i);
        m.pairs.remove(i);
        m
    }

    /// Which tokens are traded by at least one curve.
    pub fn touched(&self) -> Vec<bool> {
        let mut touched = vec![false; self.n_tokens()];
        for &(a, b) in &self.pairs {
            touched[a] = true;
            touched[b] = true;
        }
        touched
    }

    /// Non-target tokens touched by at least one curve: the free variables
    /// of a full solve.
    pub fn solver_variables(&self) -> Vec<usize> {
        let touched = self.touched();
        self.tokens.non_target().filter(|&i| touched[i]).collect()
    }

    /// The single unordered token pair shared by every curve, if any.
    pub fn single_pair(&self) -> Option<(usize, usize)> {
        let mut pairs = self.pairs.iter().map(|&(a, b)| (a.min(b), a.max(b)));
        let first = pairs.next()?;
        pairs.all(|p| p == first).then_some(first)
    }

    /// Response of each curve at the pairwise prices implied by `pi`.
    pub fn curve_prfs(&self, pi: &PriceVector) -> Vec<CurveDelta> {
        self.curves
            .iter()
            .zip(&self.pairs)
            .map(|(c, &(a, b))| prf(c, pi.ratio(a, b)))
            .collect()
    }

    /// Sum of all curve responses, accumulated per token.
    pub fn aggregate_prf(&self, pi: &PriceVector) -> FlowVector {
        let mut flow = FlowVector::zeros(self.n_tokens());
        self.accumulate_prf(pi, &mut flow.0);
        flow
    }

    pub(crate) fn accumulate_prf(&self, pi: &PriceVector, flow: &mut [f64]) {
        for (c, &(a, b)) in self.curves.iter().zip(&self.pairs) {
            let d = prf(c, pi.ratio(a, b));
            flow[a] += d.dx;
            flow[b] += d.dy;
        }
    }

    /// Self-financing residual `flow_i - w_i` for every non-target token,
    /// in token order.
    pub fn sfc_residual(&self, pi: &PriceVector, routing: &RoutingSpec) -> Vec<f64> {
        let flow = self.aggregate_prf(pi);
        self.tokens
            .non_target()
            .map(|i| flow.0[i] - routing.w[i])
            .collect()
    }

    pub fn build_trade_instructions(&self, pi: &PriceVector) -> TradeInstructionMatrix {
        let rows = self
            .curves
            .iter()
            .zip(&self.pairs)
            .map(|(c, &(a, b))| {
                let d = prf(c, pi.ratio(a, b));
                TimRow {
                    curve_id: c.id().to_string(),
                    token_x: a,
                    token_y: b,
                    dx: d.dx,
                    dy: d.dy,
                }
            })
            .collect();
        let target = self.tokens.target_index();
        let prices = (0..self.n_tokens()).map(|i| pi.ratio(i, target)).collect();
        TradeInstructionMatrix::new(self.tokens.symbols().to_vec(), target, prices, rows)
    }
}

/// Always true: prices derived from one vector are circular by
/// construction. Checks every triangle numerically all the same.
pub fn verify_circularity(prices: &PriceVector) -> bool {
    let n = prices.len();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let loop_product = prices.ratio(i, j) * prices.ratio(j, k) * prices.ratio(k, i);
                if (loop_product - 1.0).abs() > 1e-9 {
                    return false;
                }
            }
        }
    }
    true
}

/// Pairwise price quotes `(i, j, p)` meaning one unit of `i` costs `p`
/// units of `j`.
#[derive(Debug, Clone, Default)]
pub struct PairwisePrices {
    quotes: Vec<(String, String, f64)>,
}

impl PairwisePrices {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn quote(mut self, i: impl Into<String>, j: impl Into<String>, p: f64) -> Self {
        self.quotes.push((i.into(), j.into(), p));
        self
    }

    /// True iff the quotes admit a price vector, i.e. every closed loop
    /// multiplies to one (relative tolerance `rtol`).
    ///
    /// Builds candidate prices along a spanning forest and then checks
    /// every quote against them, which covers all loops.
    pub fn is_circular(&self, rtol: f64) -> bool {
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, j, _) in &self.quotes {
            let n = index.len();
            index.entry(i.as_str()).or_insert(n);
            let n = index.len();
            index.entry(j.as_str()).or_insert(n);
        }
        let n = index.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, p) in &self.quotes {
            if !(*p > 0.0) {
                return false;
            }
            let (a, b) = (index[i.as_str()], index[j.as_str()]);
            adj[a].push((b, p.ln()));
            adj[b].push((a, -p.ln()));
        }
        // log p_a - log p_b = log quote(a, b)
        let mut logp: Vec<Option<f64>> = vec![None; n];
        for root in 0..n {
            if logp[root].is_some() {
                continue;
            }
            logp[root] = Some(0.0);
            let mut queue = VecDeque::from([root]);
            while let Some(a) = queue.pop_front() {
                let la = logp[a].unwrap();
                for &(b, lq) in &adj[a] {
                    if logp[b].is_none() {
                        logp[b] = Some(la - lq);
                        queue.push_back(b);
                    }
                }
            }
        }
        self.quotes.iter().all(|(i, j, p)| {
            let implied =
                (logp[index[i.as_str()]].unwrap() - logp[index[j.as_str()]].unwrap()).exp();
            (implied - p).abs() <= rtol * p
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_curve_market() -> Market {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 1.0)]).unwrap();
        let curves = vec![
            Curve::unlevered("c1", "X", "Y", 10_000.0, 1.0).unwrap(),
            Curve::unlevered("c2", "X", "Y", 10_000.0, 4.0).unwrap(),
        ];
        Market::new(tokens, curves).unwrap()
    }

    fn pi_x(market: &Market, p: f64) -> PriceVector {
        let mut prices = vec![1.0; market.n_tokens()];
        prices[market.tokens().index_of("X").unwrap()] = p;
        PriceVector::from_prices(&prices, market.tokens().target_index())
    }

    #[test]
    fn empty_market_has_zero_flow() {
        let tokens = TokenSet::new([("A", 1.0), ("B", 2.0)]).unwrap();
        let m = Market::new(tokens.clone(), vec![]).unwrap();
        let flow = m.aggregate_prf(&PriceVector::from_usd(&tokens));
        assert_eq!(flow.0, vec![0.0, 0.0]);
    }

    #[test]
    fn single_curve_at_own_price_is_null() {
        let tokens = TokenSet::new([("Y", 1.0), ("X", 3.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![Curve::unlevered("c", "X", "Y", 900.0, 3.0).unwrap()],
        )
        .unwrap();
        let pi = pi_x(&m, 3.0);
        assert_eq!(m.aggregate_prf(&pi).0, vec![0.0, 0.0]);
        let tim = m.build_trade_instructions(&pi);
        assert!(tim.rows.iter().all(|r| r.dx == 0.0 && r.dy == 0.0));
        assert_eq!(tim.profit(), 0.0);
    }

    #[test]
    fn two_curve_equilibrium_flows() {
        // closed form: dx = 100 (2 / sqrt(p) - 3/2), dy = 100 (2 sqrt(p) - 3)
        let m = two_curve_market();
        let pi = pi_x(&m, 16.0 / 9.0);
        let flow = m.aggregate_prf(&pi);
        assert!(flow.0[1].abs() < 1e-12);
        assert!((flow.0[0] + 100.0 / 3.0).abs() < 1e-12);
        let res = m.sfc_residual(&pi, &RoutingSpec::arbitrage(2));
        assert_eq!(res.len(), 1);
        assert!(res[0].abs() < 1e-12);
        let tim = m.build_trade_instructions(&pi);
        assert!((tim.total_net[0] + 100.0 / 3.0).abs() < 1e-12);
        assert!((tim.profit() - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn routing_shifts_residual() {
        let m = two_curve_market();
        let pi = pi_x(&m, 16.0 / 9.0);
        let routing = RoutingSpec::from_flows(m.tokens(), [("X", 100.0)]).unwrap();
        let res = m.sfc_residual(&pi, &routing);
        assert!((res[0] + 100.0).abs() < 1e-12);
        assert!(RoutingSpec::from_flows(m.tokens(), [("Y", 1.0)]).is_err());
        assert!(RoutingSpec::from_flows(m.tokens(), [("Z", 1.0)]).is_err());
    }

    #[test]
    fn unknown_token_is_configuration_error() {
        let tokens = TokenSet::new([("A", 1.0)]).unwrap();
        let err = Market::new(
            tokens,
            vec![Curve::unlevered("c", "A", "B", 1.0, 1.0).unwrap()],
        );
        assert!(matches!(err, Err(Error::UnknownToken(t)) if t == "B"));
    }

    #[test]
    fn token_set_validation() {
        assert!(TokenSet::new([("A", 1.0), ("A", 2.0)]).is_err());
        assert!(TokenSet::new([("A", 0.0)]).is_err());
        let t = TokenSet::new([("A", 1.0), ("B", 2.0)])
            .unwrap()
            .with_target("B")
            .unwrap();
        assert_eq!(t.target(), "B");
        assert_eq!(t.non_target().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn circularity_witness() {
        let pi = PriceVector::from_prices(&[1.0, 2.5, 0.3, 7.0], 0);
        assert!(verify_circularity(&pi));
        let ok = PairwisePrices::new()
            .quote("1", "2", 2.0)
            .quote("2", "3", 3.0)
            .quote("1", "3", 6.0);
        assert!(ok.is_circular(1e-12));
        let bad = PairwisePrices::new()
            .quote("1", "2", 2.0)
            .quote("2", "3", 3.0)
            .quote("1", "3", 5.0);
        assert!(!bad.is_circular(1e-12));
    }

    #[test]
    fn single_pair_detection() {
        let m = two_curve_market();
        assert_eq!(m.single_pair(), Some((0, 1)));
        let tokens = TokenSet::new([("A", 1.0), ("B", 1.0), ("C", 1.0)]).unwrap();
        let m = Market::new(
            tokens,
            vec![
                Curve::unlevered("1", "A", "B", 1.0, 1.0).unwrap(),
                Curve::unlevered("2", "B", "A", 1.0, 1.0).unwrap(),
                Curve::unlevered("3", "C", "A", 1.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(m.single_pair(), None);
        assert_eq!(m.without_curve(2).single_pair(), Some((0, 1)));
    }
}
