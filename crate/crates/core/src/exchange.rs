//! Single-asset limit order book running a continuous double auction.
//!
//! Orders match in price-time priority and always trade at the resting
//! order's price. Each trader holds at most one resting order: submitting a
//! new one cancels the previous order first. Every fill and cancellation is
//! appended to the tape.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prices are integer ticks; one tick is one penny.
pub type Price = i64;
pub type TraderId = usize;
pub type OrderId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceBounds {
    pub floor: Price,
    pub ceiling: Price,
}

impl Default for PriceBounds {
    fn default() -> Self {
        Self { floor: 1, ceiling: 500 }
    }
}

impl PriceBounds {
    pub fn contains(&self, price: Price) -> bool {
        (self.floor..=self.ceiling).contains(&price)
    }

    pub fn clamp(&self, price: Price) -> Price {
        price.clamp(self.floor, self.ceiling)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: OrderId,
    pub trader_id: TraderId,
    pub side: Side,
    pub price: Price,
    pub quantity: u32,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub time: f64,
    pub price: Price,
    pub quantity: u32,
    pub buyer_id: TraderId,
    pub seller_id: TraderId,
    /// Side of the incoming order that crossed the spread.
    pub aggressor: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TapeEvent {
    Trade(Trade),
    Cancel { time: f64, order_id: OrderId, trader_id: TraderId, quantity: u32 },
}

impl TapeEvent {
    pub fn time(&self) -> f64 {
        match self {
            TapeEvent::Trade(t) => t.time,
            TapeEvent::Cancel { time, .. } => *time,
        }
    }

    pub fn as_trade(&self) -> Option<&Trade> {
        match self {
            TapeEvent::Trade(t) => Some(t),
            TapeEvent::Cancel { .. } => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExchangeError {
    #[error("price {price} outside [{floor}, {ceiling}]")]
    PriceOutOfBounds { price: Price, floor: Price, ceiling: Price },
    #[error("unknown trader {0}")]
    UnknownTrader(TraderId),
    #[error("order quantity must be at least 1")]
    ZeroQuantity,
    #[error("order id {got} not greater than previous id {last}")]
    OrderIdNotIncreasing { got: OrderId, last: OrderId },
    #[error("order time {got} earlier than last event time {last}")]
    TimeWentBackwards { got: f64, last: f64 },
}

/// Full-depth Level-2 view of the book at one instant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Level2View {
    /// (price, total quantity), best first (descending).
    pub bid_levels: Vec<(Price, u64)>,
    /// (price, total quantity), best first (ascending).
    pub ask_levels: Vec<(Price, u64)>,
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub time: f64,
}

impl Level2View {
    pub fn best_bid_qty(&self) -> Option<u64> {
        self.bid_levels.first().map(|l| l.1)
    }

    pub fn best_ask_qty(&self) -> Option<u64> {
        self.ask_levels.first().map(|l| l.1)
    }

    pub fn total_bid_qty(&self) -> u64 {
        self.bid_levels.iter().map(|l| l.1).sum()
    }

    pub fn total_ask_qty(&self) -> u64 {
        self.ask_levels.iter().map(|l| l.1).sum()
    }

    pub fn spread(&self) -> Option<Price> {
        Some(self.best_ask? - self.best_bid?)
    }
}

#[derive(Debug, Clone, Default)]
struct Level {
    total: u64,
    queue: VecDeque<Order>,
}

#[derive(Debug, Clone)]
pub struct LimitOrderBook {
    bounds: PriceBounds,
    bids: BTreeMap<Price, Level>,
    asks: BTreeMap<Price, Level>,
    /// trader -> (side, price) of their resting order
    resting: HashMap<TraderId, (Side, Price)>,
    traders: HashSet<TraderId>,
    tape: Vec<TapeEvent>,
    last_order_id: Option<OrderId>,
    last_time: f64,
}

impl LimitOrderBook {
    pub fn new(bounds: PriceBounds) -> Self {
        Self {
            bounds,
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            resting: HashMap::new(),
            traders: HashSet::new(),
            tape: Vec::new(),
            last_order_id: None,
            last_time: 0.0,
        }
    }

    pub fn bounds(&self) -> PriceBounds {
        self.bounds
    }

    pub fn register_trader(&mut self, trader_id: TraderId) {
        self.traders.insert(trader_id);
    }

    pub fn tape(&self) -> &[TapeEvent] {
        &self.tape
    }

    pub fn into_tape(self) -> Vec<TapeEvent> {
        self.tape
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    /// The resting order of a trader, if any.
    pub fn resting_order(&self, trader_id: TraderId) -> Option<&Order> {
        let (side, price) = self.resting.get(&trader_id)?;
        self.half(*side).get(price)?.queue.iter().find(|o| o.trader_id == trader_id)
    }

    /// All resting orders, bids best-first then asks best-first, FIFO within a level.
    pub fn resting_orders(&self) -> Vec<Order> {
        let bids = self.bids.values().rev().flat_map(|l| l.queue.iter());
        let asks = self.asks.values().flat_map(|l| l.queue.iter());
        bids.chain(asks).cloned().collect()
    }

    fn half(&self, side: Side) -> &BTreeMap<Price, Level> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn half_mut(&mut self, side: Side) -> &mut BTreeMap<Price, Level> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn validate(&self, order: &Order) -> Result<(), ExchangeError> {
        if !self.bounds.contains(order.price) {
            return Err(ExchangeError::PriceOutOfBounds {
                price: order.price,
                floor: self.bounds.floor,
                ceiling: self.bounds.ceiling,
            });
        }
        if !self.traders.contains(&order.trader_id) {
            return Err(ExchangeError::UnknownTrader(order.trader_id));
        }
        if order.quantity == 0 {
            return Err(ExchangeError::ZeroQuantity);
        }
        if let Some(last) = self.last_order_id {
            if order.order_id <= last {
                return Err(ExchangeError::OrderIdNotIncreasing { got: order.order_id, last });
            }
        }
        if order.time < self.last_time {
            return Err(ExchangeError::TimeWentBackwards { got: order.time, last: self.last_time });
        }
        Ok(())
    }

    /// Submits a limit order. Any previous resting order of the same trader
    /// is cancelled first. Returns the events appended to the tape.
    pub fn submit_order(&mut self, order: Order) -> Result<Vec<TapeEvent>, ExchangeError> {
        self.validate(&order)?;
        self.last_order_id = Some(order.order_id);
        self.last_time = order.time;

        let mut events = Vec::new();
        if let Some(cancel) = self.remove_resting(order.trader_id, order.time) {
            events.push(cancel);
        }

        let mut remaining = order.quantity;
        while remaining > 0 {
            let best = match order.side {
                Side::Bid => self.best_ask().filter(|&p| p <= order.price),
                Side::Ask => self.best_bid().filter(|&p| p >= order.price),
            };
            let Some(level_price) = best else { break };
            let level = self.half_mut(order.side.opposite()).get_mut(&level_price).expect("best level exists");
            let front = level.queue.front_mut().expect("levels are never empty");
            let fill = remaining.min(front.quantity);
            front.quantity -= fill;
            level.total -= fill as u64;
            remaining -= fill;
            let resting_trader = front.trader_id;
            let exhausted = front.quantity == 0;
            if exhausted {
                level.queue.pop_front();
            }
            if level.queue.is_empty() {
                self.half_mut(order.side.opposite()).remove(&level_price);
            }
            if exhausted {
                self.resting.remove(&resting_trader);
            }
            let (buyer_id, seller_id) = match order.side {
                Side::Bid => (order.trader_id, resting_trader),
                Side::Ask => (resting_trader, order.trader_id),
            };
            events.push(TapeEvent::Trade(Trade {
                time: order.time,
                price: level_price,
                quantity: fill,
                buyer_id,
                seller_id,
                aggressor: order.side,
            }));
        }

        if remaining > 0 {
            let side = order.side;
            let price = order.price;
            let trader = order.trader_id;
            let level = self.half_mut(side).entry(price).or_default();
            level.total += remaining as u64;
            level.queue.push_back(Order { quantity: remaining, ..order });
            self.resting.insert(trader, (side, price));
        }

        self.tape.extend(events.iter().cloned());
        Ok(events)
    }

    /// Cancels a trader's resting order. A no-op when there is none.
    pub fn cancel_order(&mut self, trader_id: TraderId, time: f64) -> Option<TapeEvent> {
        let time = time.max(self.last_time);
        let event = self.remove_resting(trader_id, time)?;
        self.last_time = time;
        self.tape.push(event.clone());
        Some(event)
    }

    fn remove_resting(&mut self, trader_id: TraderId, time: f64) -> Option<TapeEvent> {
        let (side, price) = self.resting.remove(&trader_id)?;
        let half = self.half_mut(side);
        let level = half.get_mut(&price).expect("indexed level exists");
        let pos = level.queue.iter().position(|o| o.trader_id == trader_id).expect("indexed order exists");
        let order = level.queue.remove(pos).expect("position is valid");
        level.total -= order.quantity as u64;
        if level.queue.is_empty() {
            half.remove(&price);
        }
        Some(TapeEvent::Cancel { time, order_id: order.order_id, trader_id, quantity: order.quantity })
    }

    pub fn publish_level2(&self, time: f64) -> Level2View {
        let bid_levels: Vec<_> = self.bids.iter().rev().map(|(p, l)| (*p, l.total)).collect();
        let ask_levels: Vec<_> = self.asks.iter().map(|(p, l)| (*p, l.total)).collect();
        Level2View {
            best_bid: bid_levels.first().map(|l| l.0),
            best_ask: ask_levels.first().map(|l| l.0),
            bid_levels,
            ask_levels,
            time,
        }
    }
}

/// Writes the tape as CSV: `kind,time,price,quantity,buyer_id,seller_id,order_id`.
pub fn write_tape_csv<W: Write>(tape: &[TapeEvent], mut out: W) -> std::io::Result<()> {
    writeln!(out, "kind,time,price,quantity,buyer_id,seller_id,order_id")?;
    for event in tape {
        match event {
            TapeEvent::Trade(t) => {
                writeln!(out, "TRADE,{:.6},{},{},{},{},", t.time, t.price, t.quantity, t.buyer_id, t.seller_id)?
            }
            TapeEvent::Cancel { time, order_id, quantity, .. } => {
                writeln!(out, "CANCEL,{:.6},,{},,,{}", time, quantity, order_id)?
            }
        }
    }
    Ok(())
}
