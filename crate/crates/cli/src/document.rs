//! JSON curve-set documents: tokens, curves and an optional routing block.

use std::collections::BTreeMap;

use mpo_core::{Curve, Direction, LeveredParams, Market, RoutingSpec, TokenSet};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSetDocument {
    pub schema_version: u32,
    pub tokens: Vec<TokenSpec>,
    pub curves: Vec<CurveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenSpec {
    pub symbol: String,
    pub usd_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveType {
    Unlevered,
    Levered,
    Limit,
    Directional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Balances {
    pub x: f64,
    pub y: f64,
}

/// Where a curve currently sits: a marginal price, or actual holdings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum State {
    Price(f64),
    Balances(Balances),
}

/// One curve. Which sizing fields are required depends on `type`:
///
/// - `unlevered`, `directional`: `k` or `liquidity_usd`;
/// - `levered`: `p_min`, `p_max` and `k` or `liquidity_usd`, unless the
///   state gives balances;
/// - `limit`: `a`, `b`, `y_capacity`; the state defaults to the top of the
///   range, where the order holds only `y`.
///
/// `directional` curves also need `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UncheckedCurveSpec")]
pub struct CurveSpec {
    pub id: String,
    /// `"X/Y"`; prices are quoted in `Y` per `X`.
    pub pair: String,
    #[serde(rename = "type")]
    pub kind: CurveType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liquidity_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<State>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fee: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Wire form of [`CurveSpec`] before the per-type field checks.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UncheckedCurveSpec {
    id: String,
    pair: String,
    #[serde(rename = "type")]
    kind: CurveType,
    #[serde(default)]
    k: Option<f64>,
    #[serde(default)]
    a: Option<f64>,
    #[serde(default)]
    b: Option<f64>,
    #[serde(default)]
    y_capacity: Option<f64>,
    #[serde(default)]
    p_min: Option<f64>,
    #[serde(default)]
    p_max: Option<f64>,
    #[serde(default)]
    liquidity_usd: Option<f64>,
    #[serde(default)]
    state: Option<State>,
    #[serde(default)]
    fee: f64,
    #[serde(default)]
    direction: Option<Direction>,
}

impl TryFrom<UncheckedCurveSpec> for CurveSpec {
    type Error = String;

    fn try_from(u: UncheckedCurveSpec) -> Result<Self, String> {
        let spec = CurveSpec {
            id: u.id,
            pair: u.pair,
            kind: u.kind,
            k: u.k,
            a: u.a,
            b: u.b,
            y_capacity: u.y_capacity,
            p_min: u.p_min,
            p_max: u.p_max,
            liquidity_usd: u.liquidity_usd,
            state: u.state,
            fee: u.fee,
            direction: u.direction,
        };
        spec.check()
            .map_err(|e| format!("curve `{}`: {e}", spec.id))?;
        Ok(spec)
    }
}

impl CurveSpec {
    pub fn tokens(&self) -> Result<(&str, &str), String> {
        match self.pair.split_once('/') {
            Some((x, y)) if !x.is_empty() && !y.is_empty() && !y.contains('/') => Ok((x, y)),
            _ => Err(format!("pair `{}` is not of the form X/Y", self.pair)),
        }
    }

    fn check(&self) -> Result<(), String> {
        self.tokens()?;
        let sized = self.k.is_some() || self.liquidity_usd.is_some();
        let has_balances = matches!(self.state, Some(State::Balances(_)));
        let no = |field: &str, v: Option<f64>| match v {
            Some(_) => Err(format!(
                "`{field}` does not apply to {:?} curves",
                self.kind
            )),
            None => Ok(()),
        };
        if self.k.is_some() && self.liquidity_usd.is_some() {
            return Err("give either `k` or `liquidity_usd`, not both".into());
        }
        match self.kind {
            CurveType::Unlevered | CurveType::Directional => {
                no("p_min", self.p_min)?;
                no("p_max", self.p_max)?;
                no("a", self.a)?;
                no("b", self.b)?;
                no("y_capacity", self.y_capacity)?;
                if !sized && !has_balances {
                    return Err("needs `k`, `liquidity_usd` or balances".into());
                }
                if self.state.is_none() {
                    return Err("needs a `state`".into());
                }
            }
            CurveType::Levered => {
                no("a", self.a)?;
                no("b", self.b)?;
                no("y_capacity", self.y_capacity)?;
                if self.p_min.is_none() || self.p_max.is_none() {
                    return Err("levered curves need `p_min` and `p_max`".into());
                }
                if !sized && !has_balances {
                    return Err("needs `k`, `liquidity_usd` or balances".into());
                }
                if self.state.is_none() {
                    return Err("needs a `state`".into());
                }
            }
            CurveType::Limit => {
                no("k", self.k)?;
                no("liquidity_usd", self.liquidity_usd)?;
                no("p_min", self.p_min)?;
                no("p_max", self.p_max)?;
                if self.a.is_none() || self.b.is_none() || self.y_capacity.is_none() {
                    return Err("limit orders need `a`, `b` and `y_capacity`".into());
                }
                if has_balances {
                    return Err("limit orders take a price state, not balances".into());
                }
            }
        }
        match (self.kind, self.direction) {
            (CurveType::Directional, None | Some(Direction::Bidirectional)) => {
                Err("directional curves need `direction` sell_x_only or sell_y_only".into())
            }
            _ => Ok(()),
        }
    }

    /// Builds the core curve; `usd` prices size `liquidity_usd` curves.
    pub fn build(&self, tokens: &TokenSet) -> Result<Curve, String> {
        let (x, y) = self.tokens()?;
        let usd = |s: &str| -> Result<f64, String> {
            tokens
                .index_of(s)
                .map(|i| tokens.usd_prices()[i])
                .map_err(|e| e.to_string())
        };
        let (usd_x, usd_y) = (usd(x)?, usd(y)?);
        let err = |e: mpo_core::Error| e.to_string();
        let curve = match self.kind {
            CurveType::Unlevered | CurveType::Directional => match &self.state {
                Some(State::Balances(b)) => {
                    Curve::from_virtual_balances(&self.id, x, y, b.x, b.y, 0.0, f64::INFINITY)
                        .map_err(err)?
                }
                Some(State::Price(p)) => {
                    let k = match (self.k, self.liquidity_usd) {
                        (Some(k), _) => k,
                        // half the value in each token
                        (None, Some(l)) => (l / (2.0 * usd_y)).powi(2) / p,
                        (None, None) => unreachable!("checked on parse"),
                    };
                    Curve::unlevered(&self.id, x, y, k, *p).map_err(err)?
                }
                None => unreachable!("checked on parse"),
            },
            CurveType::Levered => {
                let (p_min, p_max) = (self.p_min.unwrap(), self.p_max.unwrap());
                match &self.state {
                    Some(State::Balances(b)) => {
                        Curve::from_actual_balances(&self.id, x, y, b.x, b.y, p_min, p_max)
                            .map_err(err)?
                    }
                    Some(State::Price(p)) => match (self.k, self.liquidity_usd) {
                        (Some(k), _) => {
                            Curve::levered(&self.id, x, y, k, p_min, p_max, *p).map_err(err)?
                        }
                        (None, Some(l)) => {
                            let tokens = TokenSet::new([(x, usd_x), (y, usd_y)]).map_err(err)?;
                            mpo_core::levered_curve_usd(
                                &self.id, &tokens, x, y, *p, p_min, p_max, l,
                            )
                            .map_err(err)?
                        }
                        (None, None) => unreachable!("checked on parse"),
                    },
                    None => unreachable!("checked on parse"),
                }
            }
            CurveType::Limit => {
                let params = LeveredParams {
                    a: self.a.unwrap(),
                    b: self.b.unwrap(),
                    y_capacity: self.y_capacity.unwrap(),
                };
                let widened = mpo_core::regularize_limit_order(params).map_err(err)?;
                let price = match self.state {
                    Some(State::Price(p)) => p,
                    _ => widened.p_max(),
                };
                Curve::from_levered_params(&self.id, x, y, params, price).map_err(err)?
            }
        };
        let curve = curve.with_fee(self.fee).map_err(err)?;
        Ok(match self.direction {
            Some(d) => curve.with_direction(d),
            None => curve,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Net amount each token must flow into the curves.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flows: BTreeMap<String, f64>,
}

/// Input problem with the position of a parse failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DocumentError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

impl CurveSetDocument {
    pub fn parse(text: &str) -> Result<Self, DocumentError> {
        let doc: CurveSetDocument =
            serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
                line: e.line(),
                column: e.column(),
                message: strip_position(&e.to_string()),
            })?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(DocumentError::Invalid(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents always serialize");
        s.push('\n');
        s
    }

    /// Target from the argument, else the routing block, else the first
    /// token.
    pub fn resolve_target<'a>(&'a self, target: Option<&'a str>) -> Result<&'a str, DocumentError> {
        let target = target
            .or_else(|| self.routing.as_ref().and_then(|r| r.target.as_deref()))
            .or_else(|| self.tokens.first().map(|t| t.symbol.as_str()))
            .ok_or_else(|| DocumentError::Invalid("document lists no tokens".into()))?;
        if !self.tokens.iter().any(|t| t.symbol == target) {
            return Err(DocumentError::Invalid(format!(
                "target `{target}` is not a listed token"
            )));
        }
        Ok(target)
    }

    pub fn token_set(&self, target: &str) -> Result<TokenSet, DocumentError> {
        TokenSet::new(self.tokens.iter().map(|t| (t.symbol.clone(), t.usd_price)))
            .and_then(|t| t.with_target(target))
            .map_err(|e| DocumentError::Invalid(e.to_string()))
    }

    pub fn market(&self, target: &str) -> Result<Market, DocumentError> {
        let tokens = self.token_set(target)?;
        let curves = self
            .curves
            .iter()
            .map(|c| {
                c.build(&tokens)
                    .map_err(|e| format!("curve `{}`: {e}", c.id))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(DocumentError::Invalid)?;
        Market::new(tokens, curves).map_err(|e| DocumentError::Invalid(e.to_string()))
    }

    /// Routing from explicit flows, else the document's own flows.
    pub fn routing_spec(
        &self,
        market: &Market,
        flows: &[(String, f64)],
    ) -> Result<RoutingSpec, DocumentError> {
        let from_doc: Vec<(String, f64)>;
        let flows = if flows.is_empty() {
            from_doc = self
                .routing
                .as_ref()
                .map(|r| r.flows.iter().map(|(k, v)| (k.clone(), *v)).collect())
                .unwrap_or_default();
            &from_doc
        } else {
            flows
        };
        RoutingSpec::from_flows(market.tokens(), flows.iter().map(|(s, a)| (s.as_str(), *a)))
            .map_err(|e| DocumentError::Invalid(e.to_string()))
    }

    /// Document describing an existing market. Full-range curves are
    /// written with their balances and rebuild exactly; levered curves are
    /// written with `k` and price and rebuild to rounding.
    pub fn from_market(market: &Market) -> Self {
        let tokens = market.tokens();
        CurveSetDocument {
            schema_version: SCHEMA_VERSION,
            tokens: tokens
                .symbols()
                .iter()
                .zip(tokens.usd_prices())
                .map(|(s, &p)| TokenSpec {
                    symbol: s.clone(),
                    usd_price: p,
                })
                .collect(),
            curves: market
                .curves()
                .iter()
                .map(|c| {
                    let levered = c.is_levered();
                    CurveSpec {
                        id: c.id().to_string(),
                        pair: format!("{}/{}", c.token_x(), c.token_y()),
                        kind: match (levered, c.direction()) {
                            (true, _) => CurveType::Levered,
                            (false, Direction::Bidirectional) => CurveType::Unlevered,
                            (false, _) => CurveType::Directional,
                        },
                        // full-range curves keep their exact balances
                        k: levered.then(|| c.k()),
                        a: None,
                        b: None,
                        y_capacity: None,
                        p_min: levered.then(|| c.p_min()),
                        p_max: levered.then(|| c.p_max()),
                        liquidity_usd: None,
                        state: Some(if levered {
                            State::Price(c.marginal_price())
                        } else {
                            State::Balances(Balances {
                                x: c.x_virtual(),
                                y: c.y_virtual(),
                            })
                        }),
                        fee: c.fee(),
                        direction: (c.direction() != Direction::Bidirectional)
                            .then(|| c.direction()),
                    }
                })
                .collect(),
            routing: None,
        }
    }
}

/// serde_json appends " at line L column C"; positions are reported
/// separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
  "schema_version": 1,
  "tokens": [
    {"symbol": "WETH", "usd_price": 2000.0},
    {"symbol": "USDC", "usd_price": 1.0}
  ],
  "curves": [
    {"id": "u", "pair": "WETH/USDC", "type": "unlevered", "k": 500.0, "state": {"price": 1500.0}},
    {"id": "l", "pair": "WETH/USDC", "type": "levered", "p_min": 1800.0, "p_max": 2200.0,
     "liquidity_usd": 10000.0, "state": {"price": 2000.0}, "fee": 0.003},
    {"id": "o", "pair": "WETH/USDC", "type": "limit", "a": 0.0, "b": 44.0, "y_capacity": 1000.0},
    {"id": "d", "pair": "WETH/USDC", "type": "directional", "state": {"balances": {"x": 1.0, "y": 2100.0}},
     "direction": "sell_x_only"}
  ],
  "routing": {"target": "USDC", "flows": {"WETH": 0.5}}
}"#;

    #[test]
    fn parses_all_curve_types() {
        let doc = CurveSetDocument::parse(SAMPLE).unwrap();
        let target = doc.resolve_target(None).unwrap();
        assert_eq!(target, "USDC");
        let m = doc.market(target).unwrap();
        assert_eq!(m.curves().len(), 4);
        assert!((m.curves()[0].marginal_price() - 1500.0).abs() < 1e-9);
        assert_eq!(m.curves()[1].fee(), 0.003);
        // widened around 44^2 and parked at the top
        let o = &m.curves()[2];
        assert!(o.p_min() < 1936.0 && o.p_max() > 1936.0);
        assert!((o.marginal_price() - o.p_max()).abs() < 1e-9 * o.p_max());
        assert_eq!(m.curves()[3].direction(), Direction::SellXOnly);
        let r = doc.routing_spec(&m, &[]).unwrap();
        assert_eq!(r.w[m.tokens().index_of("WETH").unwrap()], 0.5);
    }

    #[test]
    fn round_trip_is_identity() {
        let doc = CurveSetDocument::parse(SAMPLE).unwrap();
        let again = CurveSetDocument::parse(&doc.to_json()).unwrap();
        assert_eq!(doc, again);
        assert_eq!(doc.to_json(), again.to_json());
    }

    #[test]
    fn unknown_field_reports_position() {
        let text = SAMPLE.replace("\"fee\": 0.003", "\"fees\": 0.003");
        match CurveSetDocument::parse(&text) {
            Err(DocumentError::Syntax { line, message, .. }) => {
                assert_eq!(line, 10);
                assert!(message.contains("unknown field `fees`"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_sizing_reports_position() {
        let text = SAMPLE.replace("\"k\": 500.0, ", "");
        match CurveSetDocument::parse(&text) {
            Err(DocumentError::Syntax { line, message, .. }) => {
                // reported just past the offending curve object
                assert_eq!(line, 9);
                assert!(message.contains("curve `u`"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn directional_needs_direction() {
        let text = SAMPLE.replace(",\n     \"direction\": \"sell_x_only\"", "");
        assert!(CurveSetDocument::parse(&text).is_err());
    }

    #[test]
    fn from_market_rebuilds_same_curves() {
        let doc = CurveSetDocument::parse(SAMPLE).unwrap();
        let m = doc.market("USDC").unwrap();
        let rebuilt = CurveSetDocument::from_market(&m).market("USDC").unwrap();
        for (a, b) in m.curves().iter().zip(rebuilt.curves()) {
            assert!((a.k() - b.k()).abs() <= 1e-12 * a.k());
            assert!((a.marginal_price() - b.marginal_price()).abs() <= 1e-12 * a.marginal_price());
            assert_eq!(
                (a.p_min(), a.p_max(), a.fee(), a.direction()),
                (b.p_min(), b.p_max(), b.fee(), b.direction())
            );
        }
    }

    #[test]
    fn generated_full_range_market_rebuilds_exactly() {
        let m = mpo_core::generate(&mpo_core::ScenarioSpec::default()).unwrap();
        let doc = CurveSetDocument::from_market(&m);
        let again = CurveSetDocument::parse(&doc.to_json()).unwrap();
        assert_eq!(again.market(m.tokens().target()).unwrap(), m);
    }

    #[test]
    fn unknown_target_rejected() {
        let doc = CurveSetDocument::parse(SAMPLE).unwrap();
        assert!(doc.resolve_target(Some("DAI")).is_err());
    }
}
