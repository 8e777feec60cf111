use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{CustomerOrder, Stimulus, Strategy, StrategyTag};
use crate::exchange::{Price, Side};

/// ZIC: a uniform random price between the limit and the far exchange bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroIntelligence;

impl Strategy for ZeroIntelligence {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Zic
    }

    fn quote(&mut self, order: &CustomerOrder, s: &Stimulus<'_>, rng: &mut dyn RngCore) -> Option<Price> {
        Some(match order.side {
            Side::Bid => rng.gen_range(s.bounds.floor..=order.limit.max(s.bounds.floor)),
            Side::Ask => rng.gen_range(order.limit.min(s.bounds.ceiling)..=s.bounds.ceiling),
        })
    }
}

/// GVWY: quotes exactly at the limit price.
#[derive(Debug, Clone, Copy, Default)]
pub struct Giveaway;

impl Strategy for Giveaway {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Gvwy
    }

    fn quote(&mut self, order: &CustomerOrder, _: &Stimulus<'_>, _: &mut dyn RngCore) -> Option<Price> {
        Some(order.limit)
    }
}

/// SHVR: improves the best price on its own side by one tick.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shaver;

impl Strategy for Shaver {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Shvr
    }

    fn quote(&mut self, order: &CustomerOrder, s: &Stimulus<'_>, _: &mut dyn RngCore) -> Option<Price> {
        Some(match order.side {
            Side::Bid => s.book.best_bid.map_or(s.bounds.floor, |b| b + 1),
            Side::Ask => s.book.best_ask.map_or(s.bounds.ceiling, |a| a - 1),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SniperParams {
    /// Enter once the spread is strictly below this many ticks.
    pub spread_threshold: Price,
    /// Enter unconditionally once this fraction of the session has elapsed.
    pub late_fraction: f64,
}

impl Default for SniperParams {
    fn default() -> Self {
        Self { spread_threshold: 2, late_fraction: 0.8 }
    }
}

/// SNPR: stays out of the market until the spread is narrow or the session
/// is nearly over, then takes the best opposite quote.
#[derive(Debug, Clone)]
pub struct Sniper {
    params: SniperParams,
}

impl Sniper {
    pub fn new(params: SniperParams) -> Self {
        Self { params }
    }
}

impl Strategy for Sniper {
    fn tag(&self) -> StrategyTag {
        StrategyTag::Snpr
    }

    fn quote(&mut self, order: &CustomerOrder, s: &Stimulus<'_>, _: &mut dyn RngCore) -> Option<Price> {
        let narrow = s.book.spread().is_some_and(|sp| sp < self.params.spread_threshold);
        let late = s.time >= self.params.late_fraction * s.duration;
        if !(narrow || late) {
            return None;
        }
        let opposite = match order.side {
            Side::Bid => s.book.best_ask,
            Side::Ask => s.book.best_bid,
        };
        // late and nothing to take: shout the limit to attract a counterparty
        opposite.or(late.then_some(order.limit))
    }
}
