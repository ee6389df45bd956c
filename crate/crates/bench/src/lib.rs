//! Market fixtures shared by the criterion benches.

use mpo_core::{generate, Market, PriceVector, RoutingSpec, ScenarioSpec};

/// A generated market with the inputs the solvers need.
pub struct Fixture {
    pub market: Market,
    pub routing: RoutingSpec,
    pub prices: PriceVector,
}

impl Fixture {
    pub fn generated(n_tokens: usize, n_curves: usize, seed: u64) -> Self {
        let spec = ScenarioSpec {
            n_tokens,
            n_curves,
            seed,
            ..Default::default()
        };
        let market = generate(&spec).expect("valid scenario");
        Self {
            routing: RoutingSpec::arbitrage(market.n_tokens()),
            prices: PriceVector::from_usd(market.tokens()),
            market,
        }
    }

    /// Single-pair market, solvable in pair mode.
    pub fn pair(n_curves: usize) -> Self {
        Self::generated(2, n_curves, 0)
    }
}
