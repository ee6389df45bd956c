//! Trade instruction matrices: per-curve token flows plus aggregate rows.

/// One curve's row: the two token columns it touches and its deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct TimRow {
    pub curve_id: String,
    pub token_x: usize,
    pub token_y: usize,
    pub dx: f64,
    pub dy: f64,
}

impl TimRow {
    /// Delta in `token`, or `None` if the curve does not trade it.
    pub fn delta(&self, token: usize) -> Option<f64> {
        if token == self.token_x {
            Some(self.dx)
        } else if token == self.token_y {
            Some(self.dy)
        } else {
            None
        }
    }
}

/// Trade instructions as seen from the pools: inflows positive, outflows
/// negative. `prices` holds each token's price in target-token units.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeInstructionMatrix {
    pub tokens: Vec<String>,
    pub target_index: usize,
    pub prices: Vec<f64>,
    pub rows: Vec<TimRow>,
    /// Sum of positive entries per token.
    pub amm_in: Vec<f64>,
    /// Sum of negative entries per token.
    pub amm_out: Vec<f64>,
    /// Column sums of the curve rows.
    pub total_net: Vec<f64>,
}

impl TradeInstructionMatrix {
    pub fn new(
        tokens: Vec<String>,
        target_index: usize,
        prices: Vec<f64>,
        rows: Vec<TimRow>,
    ) -> Self {
        let n = tokens.len();
        let mut amm_in = vec![0.0; n];
        let mut amm_out = vec![0.0; n];
        for row in &rows {
            for (t, d) in [(row.token_x, row.dx), (row.token_y, row.dy)] {
                if d > 0.0 {
                    amm_in[t] += d;
                } else {
                    amm_out[t] += d;
                }
            }
        }
        let total_net = amm_in.iter().zip(&amm_out).map(|(i, o)| i + o).collect();
        Self {
            tokens,
            target_index,
            prices,
            rows,
            amm_in,
            amm_out,
            total_net,
        }
    }

    /// All-zero instructions for the given tokens and curve pairs.
    pub fn null(
        tokens: Vec<String>,
        target_index: usize,
        prices: Vec<f64>,
        curves: impl IntoIterator<Item = (String, usize, usize)>,
    ) -> Self {
        let rows = curves
            .into_iter()
            .map(|(curve_id, token_x, token_y)| TimRow {
                curve_id,
                token_x,
                token_y,
                dx: 0.0,
                dy: 0.0,
            })
            .collect();
        Self::new(tokens, target_index, prices, rows)
    }

    /// Target-token amount extracted: `-TOTAL NET[target]`.
    pub fn profit(&self) -> f64 {
        -self.total_net[self.target_index]
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Same matrix with the delta of one row replaced. Used to build
    /// perturbed instruction sets in verification tests.
    pub fn with_row_delta(&self, row: usize, dx: f64, dy: f64) -> Self {
        let mut rows = self.rows.clone();
        rows[row].dx = dx;
        rows[row].dy = dy;
        Self::new(
            self.tokens.clone(),
            self.target_index,
            self.prices.clone(),
            rows,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_rows() {
        let rows = vec![
            TimRow {
                curve_id: "a".into(),
                token_x: 1,
                token_y: 0,
                dx: -0.5,
                dy: 10.0,
            },
            TimRow {
                curve_id: "b".into(),
                token_x: 1,
                token_y: 0,
                dx: 0.5,
                dy: -12.0,
            },
            TimRow {
                curve_id: "c".into(),
                token_x: 2,
                token_y: 1,
                dx: 1.0,
                dy: -0.25,
            },
        ];
        let tim = TradeInstructionMatrix::new(
            vec!["T".into(), "A".into(), "B".into()],
            0,
            vec![1.0, 20.0, 5.0],
            rows,
        );
        assert_eq!(tim.amm_in, vec![10.0, 0.5, 1.0]);
        assert_eq!(tim.amm_out, vec![-12.0, -0.75, 0.0]);
        assert_eq!(tim.total_net, vec![-2.0, -0.25, 1.0]);
        assert_eq!(tim.profit(), 2.0);
        assert_eq!(tim.rows[2].delta(0), None);
        assert_eq!(tim.rows[2].delta(1), Some(-0.25));
    }
}
