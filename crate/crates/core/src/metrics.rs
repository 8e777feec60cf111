//! Market-level statistics shared by the session engine, feature capture and
//! the trading strategies.

use crate::exchange::{Price, TapeEvent};

/// Smith's alpha: 100 × RMS deviation of `prices` from `reference`, over
/// `reference`. `None` when there are no prices or the reference is not
/// positive.
pub fn smith_alpha(prices: &[Price], reference: f64) -> Option<f64> {
    if prices.is_empty() || reference <= 0.0 {
        return None;
    }
    let mean_sq = prices
        .iter()
        .map(|&p| {
            let d = p as f64 - reference;
            d * d
        })
        .sum::<f64>()
        / prices.len() as f64;
    Some(100.0 * mean_sq.sqrt() / reference)
}

/// Exponentially weighted average of trade prices, oldest first in
/// `prices`. The k-th most recent trade (k = 0 for the newest) carries weight
/// `rho^k`. Returns 0 when there are no trades.
pub fn p_star_from_prices(prices: &[Price], rho: f64) -> f64 {
    let Some(&newest) = prices.last() else { return 0.0 };
    // deviations from the newest price keep constant series exact
    let mut weight = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for &p in prices.iter().rev() {
        num += weight * (p - newest) as f64;
        den += weight;
        weight *= rho;
    }
    newest as f64 + num / den
}

/// Equilibrium-price estimate from the tape, using trades up to and
/// including `time`.
pub fn p_star_estimate(tape: &[TapeEvent], time: f64, rho: f64) -> f64 {
    let prices: Vec<Price> =
        tape.iter().filter_map(|e| e.as_trade()).filter(|t| t.time <= time).map(|t| t.price).collect();
    p_star_from_prices(&prices, rho)
}

/// Running record of executed trades visible to every participant.
#[derive(Debug, Clone, Default)]
pub struct MarketStats {
    trade_prices: Vec<Price>,
    last_trade_time: Option<f64>,
}

impl MarketStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_trade(&mut self, price: Price, time: f64) {
        self.trade_prices.push(price);
        self.last_trade_time = Some(time);
    }

    pub fn trade_prices(&self) -> &[Price] {
        &self.trade_prices
    }

    pub fn last_trade_time(&self) -> Option<f64> {
        self.last_trade_time
    }

    pub fn n_trades(&self) -> usize {
        self.trade_prices.len()
    }

    pub fn p_star(&self, rho: f64) -> Option<f64> {
        (!self.trade_prices.is_empty()).then(|| p_star_from_prices(&self.trade_prices, rho))
    }

    /// Smith's alpha of all trades so far, measured against the current
    /// equilibrium estimate.
    pub fn alpha(&self, rho: f64) -> Option<f64> {
        smith_alpha(&self.trade_prices, self.p_star(rho)?)
    }
}
