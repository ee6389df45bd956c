//! JSON form of a solve: trade instructions plus status, as written by
//! `--json` and read back by `verify`.

use mpo_core::{Market, TimRow, TradeInstructionMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionsDocument {
    pub target: String,
    pub tokens: Vec<String>,
    /// Token prices in target-token units.
    pub prices: Vec<f64>,
    pub rows: Vec<RowDoc>,
    pub profit: f64,
    #[serde(default)]
    pub status: String,
    #[serde(default)]
    pub mode: String,
    #[serde(default)]
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowDoc {
    pub curve: String,
    pub pair: String,
    pub dx: f64,
    pub dy: f64,
}

impl InstructionsDocument {
    pub fn new(tim: &TradeInstructionMatrix, status: &str, mode: &str, iterations: usize) -> Self {
        let sym = |i: usize| tim.tokens[i].as_str();
        InstructionsDocument {
            target: tim.tokens[tim.target_index].clone(),
            tokens: tim.tokens.clone(),
            prices: tim.prices.clone(),
            rows: tim
                .rows
                .iter()
                .map(|r| RowDoc {
                    curve: r.curve_id.clone(),
                    pair: format!("{}/{}", sym(r.token_x), sym(r.token_y)),
                    dx: r.dx,
                    dy: r.dy,
                })
                .collect(),
            profit: tim.profit(),
            status: status.into(),
            mode: mode.into(),
            iterations,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instructions always serialize");
        s.push('\n');
        s
    }

    /// Rebuilds the matrix against `market`, whose tokens and curves must
    /// line up one to one with this document.
    pub fn to_tim(&self, market: &Market) -> Result<TradeInstructionMatrix, String> {
        let tokens = market.tokens();
        if self.tokens != tokens.symbols() {
            return Err(format!(
                "instruction tokens {:?} do not match document tokens {:?}",
                self.tokens,
                tokens.symbols()
            ));
        }
        if self.target != tokens.target() {
            return Err(format!(
                "instruction target `{}` differs from `{}`",
                self.target,
                tokens.target()
            ));
        }
        if self.rows.len() != market.curves().len() {
            return Err(format!(
                "{} instruction rows for {} curves",
                self.rows.len(),
                market.curves().len()
            ));
        }
        if self.prices.len() != tokens.len() {
            return Err(format!(
                "{} prices for {} tokens",
                self.prices.len(),
                tokens.len()
            ));
        }
        let rows = self
            .rows
            .iter()
            .zip(market.curves())
            .zip(market.pairs())
            .map(|((row, curve), &(x, y))| {
                let pair = format!("{}/{}", curve.token_x(), curve.token_y());
                if row.curve != curve.id() || row.pair != pair {
                    return Err(format!(
                        "instruction row `{}` ({}) does not match curve `{}` ({pair})",
                        row.curve,
                        row.pair,
                        curve.id()
                    ));
                }
                Ok(TimRow {
                    curve_id: row.curve.clone(),
                    token_x: x,
                    token_y: y,
                    dx: row.dx,
                    dy: row.dy,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TradeInstructionMatrix::new(
            self.tokens.clone(),
            tokens.target_index(),
            self.prices.clone(),
            rows,
        ))
    }
}
