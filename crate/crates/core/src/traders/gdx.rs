//! GDX: belief-based pricing with dynamic-programming lookahead.
//!
//! The belief that a shout at price `p` is accepted comes from frequencies
//! of recent bids, asks and accepted shouts, evaluated at observed prices
//! and linearly interpolated in between. The quote maximizes expected
//! discounted surplus over a fixed horizon of future polls.

use std::collections::VecDeque;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{CustomerOrder, MarketEvent, Stimulus, Strategy, StrategyTag};
use crate::exchange::{Price, PriceBounds, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdxParams {
    /// Number of recent shouts kept for belief estimation.
    pub window: usize,
    /// Lookahead steps of the dynamic programme.
    pub horizon: usize,
    pub discount: f64,
}

impl Default for GdxParams {
    fn default() -> Self {
        Self { window: 30, horizon: 10, discount: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shout {
    pub side: Side,
    pub price: Price,
    pub accepted: bool,
}

/// Acceptance belief for a shout on `side` at every integer price in
/// `bounds`, indexed by `price - bounds.floor`.
pub fn belief_curve<'a, I>(history: I, side: Side, bounds: PriceBounds) -> Vec<f64>
where
    I: IntoIterator<Item = &'a Shout> + Clone,
{
    let point = |p: Price| -> Option<f64> {
        let (mut favourable, mut rejected) = (0usize, 0usize);
        for s in history.clone() {
            match side {
                // asks accepted at >= p, bids at >= p; rejected asks at <= p
                Side::Ask => {
                    if (s.side == Side::Ask && s.accepted && s.price >= p) || (s.side == Side::Bid && s.price >= p) {
                        favourable += 1;
                    }
                    if s.side == Side::Ask && !s.accepted && s.price <= p {
                        rejected += 1;
                    }
                }
                Side::Bid => {
                    if (s.side == Side::Bid && s.accepted && s.price <= p) || (s.side == Side::Ask && s.price <= p) {
                        favourable += 1;
                    }
                    if s.side == Side::Bid && !s.accepted && s.price >= p {
                        rejected += 1;
                    }
                }
            }
        }
        let total = favourable + rejected;
        (total > 0).then(|| favourable as f64 / total as f64)
    };

    let mut prices: Vec<Price> = history.clone().into_iter().map(|s| s.price).filter(|p| bounds.contains(*p)).collect();
    prices.sort_unstable();
    prices.dedup();

    let mut points: Vec<(Price, f64)> = prices.into_iter().filter_map(|p| Some((p, point(p)?))).collect();
    // anchors: sellers are certain to trade at the floor and never at the
    // ceiling; buyers the other way round
    let (at_floor, at_ceiling) = match side {
        Side::Ask => (1.0, 0.0),
        Side::Bid => (0.0, 1.0),
    };
    if points.first().is_none_or(|p| p.0 > bounds.floor) {
        points.insert(0, (bounds.floor, at_floor));
    }
    if points.last().is_none_or(|p| p.0 < bounds.ceiling) {
        points.push((bounds.ceiling, at_ceiling));
    }

    let mut curve = Vec::with_capacity((bounds.ceiling - bounds.floor + 1) as usize);
    let mut seg = 0;
    for price in bounds.floor..=bounds.ceiling {
        while seg + 1 < points.len() - 1 && points[seg + 1].0 < price {
            seg += 1;
        }
        let (p0, b0) = points[seg];
        let (p1, b1) = points[(seg + 1).min(points.len() - 1)];
        let belief = if p1 == p0 { b0 } else { b0 + (b1 - b0) * (price - p0) as f64 / (p1 - p0) as f64 };
        curve.push(belief.clamp(0.0, 1.0));
    }
    curve
}

#[derive(Debug, Clone)]
pub struct Gdx {
    params: GdxParams,
    history: VecDeque<Shout>,
}

impl Gdx {
    pub fn new(params: GdxParams) -> Self {
        Self { params, history: VecDeque::new() }
    }

    pub fn history(&self) -> &VecDeque<Shout> {
        &self.history
    }

    fn push(&mut self, shout: Shout) {
        self.history.push_back(shout);
        while self.history.len() > self.params.window {
            self.history.pop_front();
        }
    }

    /// Price maximizing expected discounted surplus for a single unit.
    pub fn best_price(&self, order: &CustomerOrder, bounds: PriceBounds) -> Option<Price> {
        if !bounds.contains(order.limit) {
            return None;
        }
        let curve = belief_curve(self.history.iter(), order.side, bounds);
        let candidates: Vec<(Price, f64, f64)> = match order.side {
            Side::Bid => (bounds.floor..=order.limit)
                .map(|p| (p, curve[(p - bounds.floor) as usize], (order.limit - p) as f64))
                .collect(),
            Side::Ask => (order.limit..=bounds.ceiling)
                .map(|p| (p, curve[(p - bounds.floor) as usize], (p - order.limit) as f64))
                .collect(),
        };
        let gamma = self.params.discount;
        let mut value = 0.0;
        let mut best = None;
        for _ in 0..self.params.horizon.max(1) {
            let mut step_best: Option<(Price, f64)> = None;
            for &(p, belief, surplus) in &candidates {
                let v = belief * surplus + (1.0 - belief) * gamma * value;
                if step_best.is_none_or(|(_, bv)| v > bv) {
                    step_best = Some((p, v));
                }
            }
            let (p, v) = step_best?;
            value = v;
            best = Some(p);
        }
        best
    }
}

impl Strategy for Gdx {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Gdx
    }

    fn quote(&mut self, order: &CustomerOrder, s: &Stimulus<'_>, _: &mut dyn RngCore) -> Option<Price> {
        self.best_price(order, s.bounds)
    }

    fn respond(&mut self, _: Option<&CustomerOrder>, _: &Stimulus<'_>, event: &MarketEvent, _: &mut dyn RngCore) {
        match event {
            MarketEvent::Trade(t) => {
                self.push(Shout { side: t.aggressor.opposite(), price: t.price, accepted: true });
                self.push(Shout { side: t.aggressor, price: t.price, accepted: true });
            }
            MarketEvent::Quote { side, price, .. } => {
                self.push(Shout { side: *side, price: *price, accepted: false });
            }
        }
    }
}
