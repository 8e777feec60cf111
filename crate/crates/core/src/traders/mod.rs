//! Baseline trading strategies behind one polling interface.
//!
//! A [`Trader`] owns the bookkeeping common to every strategy (customer
//! order, balance, RNG stream) and enforces the limit-price constraint on
//! whatever its [`Strategy`] proposes.

mod aa;
mod gdx;
mod simple;
mod zip;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{Level2View, Price, PriceBounds, Side, Trade, TraderId};
use crate::metrics::MarketStats;

pub use aa::{Aa, AaParams};
pub use gdx::{belief_curve, Gdx, GdxParams, Shout};
pub use simple::{Giveaway, Shaver, Sniper, SniperParams, ZeroIntelligence};
pub use zip::{Zip, ZipParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyTag {
    #[serde(rename = "ZIC")]
    Zic,
    #[serde(rename = "ZIP")]
    Zip,
    #[serde(rename = "AA")]
    Aa,
    #[serde(rename = "GDX")]
    Gdx,
    #[serde(rename = "SNPR")]
    Snpr,
    #[serde(rename = "GVWY")]
    Gvwy,
    #[serde(rename = "SHVR")]
    Shvr,
    #[serde(rename = "DTR")]
    Dtr,
}

impl StrategyTag {
    /// The seven non-learned strategies, in a fixed canonical order.
    pub const BASELINES: [StrategyTag; 7] = [
        StrategyTag::Zic,
        StrategyTag::Zip,
        StrategyTag::Aa,
        StrategyTag::Gdx,
        StrategyTag::Snpr,
        StrategyTag::Gvwy,
        StrategyTag::Shvr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyTag::Zic => "ZIC",
            StrategyTag::Zip => "ZIP",
            StrategyTag::Aa => "AA",
            StrategyTag::Gdx => "GDX",
            StrategyTag::Snpr => "SNPR",
            StrategyTag::Gvwy => "GVWY",
            StrategyTag::Shvr => "SHVR",
            StrategyTag::Dtr => "DTR",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown strategy tag {0:?}")]
pub struct UnknownTag(pub String);

impl FromStr for StrategyTag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ZIC" => StrategyTag::Zic,
            "ZIP" => StrategyTag::Zip,
            "AA" => StrategyTag::Aa,
            "GDX" => StrategyTag::Gdx,
            "SNPR" => StrategyTag::Snpr,
            "GVWY" => StrategyTag::Gvwy,
            "SHVR" => StrategyTag::Shvr,
            "DTR" => StrategyTag::Dtr,
            other => return Err(UnknownTag(other.to_string())),
        })
    }
}

/// Tunable constants of every strategy, in one serializable record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct StrategyParams {
    pub zip: ZipParams,
    pub aa: AaParams,
    pub gdx: GdxParams,
    pub snpr: SniperParams,
}

/// A private instruction to buy (`Side::Bid`) or sell (`Side::Ask`) one unit
/// no worse than `limit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomerOrder {
    pub side: Side,
    pub limit: Price,
    pub issue_time: f64,
}

/// What a trader can see when it is polled or notified.
#[derive(Debug, Clone, Copy)]
pub struct Stimulus<'a> {
    pub time: f64,
    pub duration: f64,
    pub book: &'a Level2View,
    pub market: &'a MarketStats,
    pub bounds: PriceBounds,
}

/// Public market activity delivered to every trader after each poll.
#[derive(Debug, Clone, PartialEq)]
pub enum MarketEvent {
    /// A shout that did not trade on arrival.
    Quote { side: Side, price: Price, trader_id: TraderId },
    /// A shout that was accepted.
    Trade(Trade),
}

pub trait Strategy: Send {
    fn tag(&self) -> StrategyTag;

    /// Proposes a quote price for `order`. The caller enforces the limit
    /// price and the exchange bounds.
    fn quote(&mut self, order: &CustomerOrder, stimulus: &Stimulus<'_>, rng: &mut dyn RngCore) -> Option<Price>;

    fn respond(
        &mut self,
        _order: Option<&CustomerOrder>,
        _stimulus: &Stimulus<'_>,
        _event: &MarketEvent,
        _rng: &mut dyn RngCore,
    ) {
    }

    /// Called when a fresh customer order is assigned.
    fn new_order(&mut self, _order: &CustomerOrder, _rng: &mut dyn RngCore) {}
}

/// Rounds a fractional price in the trader's favour: buyers down, sellers up.
pub fn round_for(side: Side, price: f64) -> Price {
    match side {
        Side::Bid => price.floor() as Price,
        Side::Ask => price.ceil() as Price,
    }
}

/// Clips a proposed price to the limit and then to the exchange bounds.
pub fn enforce_limit(side: Side, limit: Price, price: Price, bounds: PriceBounds) -> Price {
    let capped = match side {
        Side::Bid => price.min(limit),
        Side::Ask => price.max(limit),
    };
    let clamped = bounds.clamp(capped);
    // a limit outside the bounds would make both constraints unsatisfiable
    debug_assert!(bounds.contains(limit) || clamped == bounds.clamp(limit));
    clamped
}

pub fn build_strategy(
    tag: StrategyTag,
    side: Side,
    params: &StrategyParams,
    rng: &mut dyn RngCore,
) -> Result<Box<dyn Strategy>, UnknownTag> {
    Ok(match tag {
        StrategyTag::Zic => Box::new(ZeroIntelligence),
        StrategyTag::Gvwy => Box::new(Giveaway),
        StrategyTag::Shvr => Box::new(Shaver),
        StrategyTag::Snpr => Box::new(Sniper::new(params.snpr.clone())),
        StrategyTag::Zip => Box::new(Zip::new(side, params.zip.clone(), rng)),
        StrategyTag::Aa => Box::new(Aa::new(side, params.aa.clone())),
        StrategyTag::Gdx => Box::new(Gdx::new(params.gdx.clone())),
        StrategyTag::Dtr => return Err(UnknownTag("DTR requires a trained model".into())),
    })
}

pub struct Trader {
    pub id: TraderId,
    pub side: Side,
    /// Index of the population entry this trader belongs to.
    pub group: usize,
    pub order: Option<CustomerOrder>,
    pub balance: i64,
    pub trade_count: u32,
    strategy: Box<dyn Strategy>,
    rng: ChaCha8Rng,
}

impl fmt::Debug for Trader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trader")
            .field("id", &self.id)
            .field("tag", &self.strategy.tag())
            .field("side", &self.side)
            .field("order", &self.order)
            .field("balance", &self.balance)
            .finish()
    }
}

impl Trader {
    pub fn new(id: TraderId, side: Side, group: usize, strategy: Box<dyn Strategy>, rng: ChaCha8Rng) -> Self {
        Self { id, side, group, order: None, balance: 0, trade_count: 0, strategy, rng }
    }

    pub fn tag(&self) -> StrategyTag {
        self.strategy.tag()
    }

    pub fn assign_order(&mut self, order: CustomerOrder) {
        debug_assert_eq!(order.side, self.side);
        self.strategy.new_order(&order, &mut self.rng);
        self.order = Some(order);
    }

    /// Polls the strategy. The returned price never violates the customer
    /// limit or the exchange bounds.
    pub fn get_quote(&mut self, stimulus: &Stimulus<'_>) -> Option<Price> {
        let order = self.order?;
        let raw = self.strategy.quote(&order, stimulus, &mut self.rng)?;
        Some(enforce_limit(order.side, order.limit, raw, stimulus.bounds))
    }

    pub fn respond(&mut self, stimulus: &Stimulus<'_>, event: &MarketEvent) {
        self.strategy.respond(self.order.as_ref(), stimulus, event, &mut self.rng);
    }

    /// Books the profit of a trade against the current customer order and
    /// consumes it. Returns the profit.
    pub fn book_trade(&mut self, price: Price) -> i64 {
        let order = self.order.take().expect("trading trader holds a customer order");
        let profit = match order.side {
            Side::Bid => order.limit - price,
            Side::Ask => price - order.limit,
        };
        assert!(profit >= 0, "trade at {price} violates limit {} ({:?})", order.limit, order.side);
        self.balance += profit;
        self.trade_count += 1;
        profit
    }
}
