//! Zero-Intelligence-Plus: an adaptive profit margin trained by a
//! Widrow-Hoff rule with momentum toward perturbed market prices.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{round_for, CustomerOrder, MarketEvent, Stimulus, Strategy, StrategyTag};
use crate::exchange::{Price, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZipParams {
    /// Learning rate range, drawn once per trader.
    pub beta: (f64, f64),
    /// Momentum range, drawn once per trader.
    pub momentum: (f64, f64),
    pub initial_margin: (f64, f64),
    /// Upper bound on the absolute target perturbation, in ticks.
    pub abs_jitter: f64,
    /// Upper bound on the relative target perturbation.
    pub rel_jitter: f64,
    pub margin_max: f64,
}

impl Default for ZipParams {
    fn default() -> Self {
        Self {
            beta: (0.1, 0.5),
            momentum: (0.0, 0.1),
            initial_margin: (0.05, 0.35),
            abs_jitter: 5.0,
            rel_jitter: 0.05,
            margin_max: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Zip {
    side: Side,
    params: ZipParams,
    beta: f64,
    gamma: f64,
    margin: f64,
    /// Momentum-smoothed price change from the previous update.
    last_change: f64,
}

fn draw(rng: &mut dyn RngCore, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

impl Zip {
    pub fn new(side: Side, params: ZipParams, rng: &mut dyn RngCore) -> Self {
        let beta = draw(rng, params.beta);
        let gamma = draw(rng, params.momentum);
        let margin = draw(rng, params.initial_margin);
        Self { side, params, beta, gamma, margin, last_change: 0.0 }
    }

    /// Builds a trader with fixed coefficients.
    pub fn with_state(side: Side, params: ZipParams, beta: f64, gamma: f64, margin: f64) -> Self {
        Self { side, params, beta, gamma, margin, last_change: 0.0 }
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    fn shout_price(&self, limit: Price) -> f64 {
        match self.side {
            Side::Bid => limit as f64 * (1.0 - self.margin),
            Side::Ask => limit as f64 * (1.0 + self.margin),
        }
    }

    /// Target just above `q` when `up`, just below otherwise.
    fn target(&self, q: f64, up: bool, rng: &mut dyn RngCore) -> f64 {
        let rel = rng.gen::<f64>() * self.params.rel_jitter;
        let abs = rng.gen::<f64>() * self.params.abs_jitter;
        if up {
            q * (1.0 + rel) + abs
        } else {
            q * (1.0 - rel) - abs
        }
    }

    fn update_toward(&mut self, limit: Price, target: f64) {
        let price = self.shout_price(limit);
        let delta = self.beta * (target - price);
        self.last_change = self.gamma * self.last_change + (1.0 - self.gamma) * delta;
        let new_price = price + self.last_change;
        let limit = limit as f64;
        let margin = match self.side {
            Side::Bid => 1.0 - new_price / limit,
            Side::Ask => new_price / limit - 1.0,
        };
        self.margin = margin.clamp(0.0, self.params.margin_max);
    }
}

impl Strategy for Zip {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Zip
    }

    fn quote(&mut self, order: &CustomerOrder, _: &Stimulus<'_>, _: &mut dyn RngCore) -> Option<Price> {
        Some(round_for(order.side, self.shout_price(order.limit)))
    }

    fn respond(&mut self, order: Option<&CustomerOrder>, _: &Stimulus<'_>, event: &MarketEvent, rng: &mut dyn RngCore) {
        let Some(order) = order else { return };
        let (q, accepted, shout_side) = match event {
            MarketEvent::Trade(t) => (t.price as f64, true, t.aggressor),
            MarketEvent::Quote { side, price, .. } => (*price as f64, false, *side),
        };
        let p = self.shout_price(order.limit);
        // `raise` widens the margin: sellers move up, buyers move down.
        let raise = match self.side {
            Side::Ask if accepted && p <= q => Some(true),
            Side::Ask if accepted && shout_side == Side::Bid => Some(false),
            Side::Ask if !accepted && shout_side == Side::Ask && p >= q => Some(false),
            Side::Bid if accepted && p >= q => Some(true),
            Side::Bid if accepted && shout_side == Side::Ask => Some(false),
            Side::Bid if !accepted && shout_side == Side::Bid && p <= q => Some(false),
            _ => None,
        };
        if let Some(raise) = raise {
            let up = matches!((self.side, raise), (Side::Ask, true) | (Side::Bid, false));
            let target = self.target(q, up, rng);
            self.update_toward(order.limit, target);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{Level2View, PriceBounds, Trade};
    use crate::metrics::MarketStats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trade(price: Price, aggressor: Side) -> MarketEvent {
        MarketEvent::Trade(Trade { time: 1.0, price, quantity: 1, buyer_id: 0, seller_id: 1, aggressor })
    }

    fn run(zip: &mut Zip, order: &CustomerOrder, event: MarketEvent, seed: u64) {
        let v = Level2View::default();
        let m = MarketStats::new();
        let s = Stimulus { time: 1.0, duration: 10.0, book: &v, market: &m, bounds: PriceBounds::default() };
        zip.respond(Some(order), &s, &event, &mut ChaCha8Rng::seed_from_u64(seed));
    }

    #[test]
    fn seller_raises_margin_after_trade_above_quote() {
        // limit 100, margin 0.05 => shout 105; a trade at 120 pulls it up
        let order = CustomerOrder { side: Side::Ask, limit: 100, issue_time: 0.0 };
        let mut zip = Zip::with_state(Side::Ask, ZipParams::default(), 0.3, 0.05, 0.05);
        run(&mut zip, &order, trade(120, Side::Bid), 3);
        assert!(zip.margin() > 0.05, "margin {}", zip.margin());
        // hand trace for a jitter-free copy: target = 120, delta = 0.3 * 15,
        // change = 0.95 * 4.5 = 4.275, price 109.275 => margin 0.09275
        let params = ZipParams { abs_jitter: 0.0, rel_jitter: 0.0, ..ZipParams::default() };
        let mut exact = Zip::with_state(Side::Ask, params, 0.3, 0.05, 0.05);
        run(&mut exact, &order, trade(120, Side::Bid), 3);
        assert!((exact.margin() - 0.09275).abs() < 1e-12);
    }

    #[test]
    fn seller_lowers_margin_when_undercut() {
        let order = CustomerOrder { side: Side::Ask, limit: 100, issue_time: 0.0 };
        let mut zip = Zip::with_state(Side::Ask, ZipParams::default(), 0.3, 0.0, 0.3);
        let ev = MarketEvent::Quote { side: Side::Ask, price: 110, trader_id: 9 };
        run(&mut zip, &order, ev, 4);
        assert!(zip.margin() < 0.3);
    }

    #[test]
    fn buyer_mirror_rules() {
        let order = CustomerOrder { side: Side::Bid, limit: 100, issue_time: 0.0 };
        // shout 90; trade at 80 => buyer could have paid less => widen margin
        let mut zip = Zip::with_state(Side::Bid, ZipParams::default(), 0.3, 0.0, 0.1);
        run(&mut zip, &order, trade(80, Side::Ask), 5);
        assert!(zip.margin() > 0.1);
        // a higher unaccepted bid => narrow margin
        let mut zip = Zip::with_state(Side::Bid, ZipParams::default(), 0.3, 0.0, 0.3);
        run(&mut zip, &order, MarketEvent::Quote { side: Side::Bid, price: 85, trader_id: 2 }, 6);
        assert!(zip.margin() < 0.3);
    }

    #[test]
    fn margin_stays_in_range() {
        let order = CustomerOrder { side: Side::Bid, limit: 100, issue_time: 0.0 };
        let mut zip = Zip::with_state(Side::Bid, ZipParams::default(), 0.5, 0.0, 0.05);
        for i in 0..200 {
            run(&mut zip, &order, trade(400, Side::Ask), i);
            assert!((0.0..=1.0).contains(&zip.margin()));
        }
        for i in 0..200 {
            run(&mut zip, &order, trade(1, Side::Bid), i);
            assert!((0.0..=1.0).contains(&zip.margin()));
        }
    }
}
