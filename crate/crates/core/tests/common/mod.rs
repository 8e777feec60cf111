//! Shared test support: a brute-force reference matcher, random order
//! streams and a randomized quote driver.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deeptrader::agent::DeepTrader;
use deeptrader::exchange::{Level2View, LimitOrderBook, Order, Price, PriceBounds, Side, TapeEvent, Trade, TraderId};
use deeptrader::features::{CaptureMode, FeatureMask, MarketSnapshot, NormalizationSpec, N_FEATURES};
use deeptrader::metrics::MarketStats;
use deeptrader::model::{TrainedModel, MODEL_VERSION};
use deeptrader::neural::NetworkParams;
use deeptrader::traders::{
    build_strategy, CustomerOrder, MarketEvent, Stimulus, Strategy, StrategyParams, StrategyTag, Trader,
};

/// Re-scans every resting order on each match. Slow, obviously correct.
#[derive(Debug, Default)]
pub struct OracleBook {
    /// (arrival sequence, order)
    resting: Vec<(u64, Order)>,
    seq: u64,
    pub tape: Vec<TapeEvent>,
}

impl OracleBook {
    fn cancel_own(&mut self, trader: TraderId, time: f64) -> Option<TapeEvent> {
        let pos = self.resting.iter().position(|(_, o)| o.trader_id == trader)?;
        let (_, o) = self.resting.remove(pos);
        Some(TapeEvent::Cancel { time, order_id: o.order_id, trader_id: trader, quantity: o.quantity })
    }

    pub fn submit(&mut self, order: Order) -> Vec<TapeEvent> {
        let mut events: Vec<TapeEvent> = self.cancel_own(order.trader_id, order.time).into_iter().collect();
        let mut remaining = order.quantity;
        while remaining > 0 {
            let mut best: Option<usize> = None;
            for (i, (seq, o)) in self.resting.iter().enumerate() {
                let crosses = o.side != order.side
                    && match order.side {
                        Side::Bid => o.price <= order.price,
                        Side::Ask => o.price >= order.price,
                    };
                if !crosses {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (bseq, bo) = &self.resting[b];
                        let price_better = match order.side {
                            Side::Bid => o.price < bo.price,
                            Side::Ask => o.price > bo.price,
                        };
                        price_better || (o.price == bo.price && seq < bseq)
                    }
                };
                if better {
                    best = Some(i);
                }
            }
            let Some(i) = best else { break };
            let fill = remaining.min(self.resting[i].1.quantity);
            remaining -= fill;
            let o = &mut self.resting[i].1;
            o.quantity -= fill;
            let (price, counterparty) = (o.price, o.trader_id);
            if o.quantity == 0 {
                self.resting.remove(i);
            }
            let (buyer_id, seller_id) = match order.side {
                Side::Bid => (order.trader_id, counterparty),
                Side::Ask => (counterparty, order.trader_id),
            };
            events.push(TapeEvent::Trade(Trade {
                time: order.time,
                price,
                quantity: fill,
                buyer_id,
                seller_id,
                aggressor: order.side,
            }));
        }
        if remaining > 0 {
            self.seq += 1;
            self.resting.push((self.seq, Order { quantity: remaining, ..order }));
        }
        self.tape.extend(events.iter().cloned());
        events
    }

    pub fn cancel(&mut self, trader: TraderId, time: f64) -> Option<TapeEvent> {
        let e = self.cancel_own(trader, time)?;
        self.tape.push(e.clone());
        Some(e)
    }

    /// Bids best-first then asks best-first, FIFO within a price.
    pub fn resting_orders(&self) -> Vec<Order> {
        let mut bids: Vec<_> = self.resting.iter().filter(|(_, o)| o.side == Side::Bid).collect();
        let mut asks: Vec<_> = self.resting.iter().filter(|(_, o)| o.side == Side::Ask).collect();
        bids.sort_by_key(|(s, o)| (-o.price, *s));
        asks.sort_by_key(|(s, o)| (o.price, *s));
        bids.into_iter().chain(asks).map(|(_, o)| o.clone()).collect()
    }

    pub fn depth(&self, side: Side) -> Vec<(Price, u64)> {
        let mut levels: Vec<(Price, u64)> = Vec::new();
        for o in self.resting_orders().into_iter().filter(|o| o.side == side) {
            match levels.last_mut() {
                Some((p, q)) if *p == o.price => *q += o.quantity as u64,
                _ => levels.push((o.price, o.quantity as u64)),
            }
        }
        levels
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Submit(Order),
    Cancel { trader: TraderId, time: f64 },
}

/// A random stream of valid submissions and cancels over a narrow price band
/// so that crossing, queueing and replacement all happen often.
pub fn random_ops(seed: u64, n_traders: usize, n_ops: usize) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut time = 0.0;
    (0..n_ops)
        .map(|k| {
            time += rng.gen_range(0.0..1.0);
            let trader = rng.gen_range(0..n_traders);
            if rng.gen_bool(0.15) {
                Op::Cancel { trader, time }
            } else {
                Op::Submit(Order {
                    order_id: k as u64 + 1,
                    trader_id: trader,
                    side: if rng.gen_bool(0.5) { Side::Bid } else { Side::Ask },
                    price: rng.gen_range(95..=105),
                    quantity: rng.gen_range(1..=3),
                    time,
                })
            }
        })
        .collect()
}

/// Replays `ops` through the real book and the oracle, comparing tapes and
/// book state after every operation. Returns the first mismatch.
pub fn compare_with_oracle(ops: &[Op], n_traders: usize) -> Result<(), String> {
    let mut book = LimitOrderBook::new(PriceBounds::default());
    for t in 0..n_traders {
        book.register_trader(t);
    }
    let mut oracle = OracleBook::default();
    for (k, op) in ops.iter().enumerate() {
        let (got, want) = match op {
            Op::Submit(o) => (book.submit_order(o.clone()).map_err(|e| e.to_string())?, oracle.submit(o.clone())),
            Op::Cancel { trader, time } => (
                book.cancel_order(*trader, *time).into_iter().collect(),
                oracle.cancel(*trader, *time).into_iter().collect(),
            ),
        };
        if got != want {
            return Err(format!("op {k}: events {got:?} != {want:?}"));
        }
        if book.resting_orders() != oracle.resting_orders() {
            return Err(format!("op {k}: resting orders differ"));
        }
        let view = book.publish_level2(0.0);
        if view.bid_levels != oracle.depth(Side::Bid) || view.ask_levels != oracle.depth(Side::Ask) {
            return Err(format!("op {k}: level-2 depth differs"));
        }
    }
    if book.tape() != oracle.tape.as_slice() {
        return Err("final tapes differ".into());
    }
    Ok(())
}

/// A randomly initialized model over all features with a synthetic
/// normalization on 0..200.
pub fn random_model(seed: u64) -> TrainedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<MarketSnapshot> = (0..64)
        .map(|_| {
            let mut features = [0.0; N_FEATURES];
            for v in features.iter_mut() {
                *v = rng.gen_range(0.0..200.0);
            }
            MarketSnapshot { features, target: rng.gen_range(0.0..200.0) }
        })
        .collect();
    let mask = FeatureMask::all();
    let normalization = NormalizationSpec::fit(&rows, &mask).unwrap();
    TrainedModel {
        version: MODEL_VERSION,
        mask,
        normalization,
        sequence_length: 1,
        rho: 0.9,
        capture_mode: CaptureMode::Trade,
        params: NetworkParams::init(N_FEATURES, seed),
        optimizer: None,
    }
}

pub fn make_strategy(
    tag: StrategyTag,
    side: Side,
    rng: &mut ChaCha8Rng,
    model: &Arc<TrainedModel>,
) -> Box<dyn Strategy> {
    match tag {
        StrategyTag::Dtr => Box::new(DeepTrader::new(Arc::clone(model))),
        t => build_strategy(t, side, &StrategyParams::default(), rng).unwrap(),
    }
}

fn random_view(rng: &mut ChaCha8Rng, bounds: PriceBounds, time: f64) -> Level2View {
    let mid = rng.gen_range(bounds.floor + 5..=bounds.ceiling - 5);
    let mut bid_levels = Vec::new();
    let mut p = mid - rng.gen_range(1..5);
    for _ in 0..rng.gen_range(0..4) {
        if p < bounds.floor {
            break;
        }
        bid_levels.push((p, rng.gen_range(1..5)));
        p -= rng.gen_range(1..10);
    }
    let mut ask_levels = Vec::new();
    let mut p = mid + rng.gen_range(0..5);
    for _ in 0..rng.gen_range(0..4) {
        if p > bounds.ceiling {
            break;
        }
        ask_levels.push((p, rng.gen_range(1..5)));
        p += rng.gen_range(1..10);
    }
    Level2View {
        best_bid: bid_levels.first().map(|l| l.0),
        best_ask: ask_levels.first().map(|l| l.0),
        bid_levels,
        ask_levels,
        time,
    }
}

/// Polls traders of `tag` under random stimuli until `n` quotes have been
/// emitted, reassigning orders and feeding random events. Returns the number
/// of polls, or the first limit or bounds violation.
pub fn stress_quotes(tag: StrategyTag, n: usize, seed: u64, model: &Arc<TrainedModel>) -> Result<usize, String> {
    let bounds = PriceBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = 180.0;
    let mut quotes = 0;
    let mut time = 0.0;
    let mut market = MarketStats::new();
    let mut side = Side::Bid;
    let mut trader = None;
    let mut k = 0;
    while quotes < n {
        if k > 100 * n {
            return Err(format!("{tag} emitted only {quotes} quotes in {k} polls"));
        }
        if k % 500 == 0 {
            side = if rng.gen_bool(0.5) { Side::Bid } else { Side::Ask };
            let srng = ChaCha8Rng::seed_from_u64(rng.gen());
            let mut brng = srng.clone();
            trader = Some(Trader::new(0, side, 0, make_strategy(tag, side, &mut brng, model), srng));
            time = 0.0;
            market = MarketStats::new();
        }
        let trader = trader.as_mut().unwrap();
        time = (time + rng.gen_range(0.0f64..0.8)).min(duration);
        if trader.order.is_none() || rng.gen_bool(0.05) {
            // limits sometimes sit at the extremes of the bounds
            let limit = match rng.gen_range(0..10) {
                0 => bounds.floor,
                1 => bounds.ceiling,
                _ => rng.gen_range(bounds.floor..=bounds.ceiling.min(300)),
            };
            trader.assign_order(CustomerOrder { side, limit, issue_time: time });
        }
        let limit = trader.order.unwrap().limit;
        let book = random_view(&mut rng, bounds, time);
        let stimulus = Stimulus { time, duration, book: &book, market: &market, bounds };
        if let Some(q) = trader.get_quote(&stimulus) {
            quotes += 1;
            let ok = match side {
                Side::Bid => q <= limit,
                Side::Ask => q >= limit,
            };
            if !ok || !bounds.contains(q) {
                return Err(format!("{tag} {side:?} limit {limit} quoted {q} at poll {k}"));
            }
        }
        let price = rng.gen_range(30..=170);
        let traded = rng.gen_bool(0.4);
        let event = if traded {
            MarketEvent::Trade(Trade {
                time,
                price,
                quantity: 1,
                buyer_id: 1,
                seller_id: 2,
                aggressor: if rng.gen_bool(0.5) { Side::Bid } else { Side::Ask },
            })
        } else {
            MarketEvent::Quote { side: if rng.gen_bool(0.5) { Side::Bid } else { Side::Ask }, price, trader_id: 3 }
        };
        trader.respond(&stimulus, &event);
        if traded {
            market.record_trade(price, time);
        }
        k += 1;
    }
    Ok(k)
}

pub const ALL_TAGS: [StrategyTag; 8] = [
    StrategyTag::Zic,
    StrategyTag::Zip,
    StrategyTag::Aa,
    StrategyTag::Gdx,
    StrategyTag::Snpr,
    StrategyTag::Gvwy,
    StrategyTag::Shvr,
    StrategyTag::Dtr,
];

/// Largest relative error between the analytic gradient and a central
/// difference over `probes` parameters, cycling through every tensor. The loss is the MSE
/// of a small batch of length-3 sequences, so the recurrent path is covered.
pub fn gradient_check(seed: u64, input_dim: usize, probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::init(input_dim, seed);
    // non-zero biases so that no unit sits exactly on a kink
    for (_, m) in params.tensors_mut() {
        if m.cols == 1 {
            for v in m.data.iter_mut() {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
    }
    let inputs: Vec<Vec<Vec<f64>>> =
        (0..4).map(|_| (0..3).map(|_| (0..input_dim).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()).collect();
    let targets: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
    let batch = |_: ()| -> Vec<(Vec<&[f64]>, f64)> {
        inputs.iter().zip(&targets).map(|(s, &t)| (s.iter().map(|v| v.as_slice()).collect(), t)).collect()
    };
    let b = batch(());
    let (_, grads) = params.batch_gradient(&b).unwrap();
    let loss = |p: &NetworkParams| p.batch_gradient(&b).unwrap().0;

    let sizes: Vec<usize> = params.tensors().iter().map(|(_, m)| m.data.len()).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for probe in 0..probes {
        let t = probe % sizes.len();
        let i = rng.gen_range(0..sizes[t]);
        let analytic = grads.tensors()[t].1.data[i];
        let original = params.tensors()[t].1.data[i];
        params.tensors_mut()[t].1.data[i] = original + h;
        let up = loss(&params);
        params.tensors_mut()[t].1.data[i] = original - h;
        let down = loss(&params);
        params.tensors_mut()[t].1.data[i] = original;
        let numeric = (up - down) / (2.0 * h);
        // the floor keeps round-off on vanishing gradients from counting as error
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// GVWY-only sessions with varied schedules, captured per quote so the
/// target equals the quoting trader's limit.
pub fn gvwy_corpus(sessions: u64, base_seed: u64) -> Vec<MarketSnapshot> {
    use deeptrader::features::CaptureSpec;
    use deeptrader::harness::{derive_seed, GridTemplate, ScheduleVariation};
    let template = GridTemplate { config_id: 0, strategies: vec![StrategyTag::Gvwy], counts: vec![40] };
    let capture = CaptureSpec { mode: CaptureMode::Quote, filter: None };
    (0..sessions)
        .flat_map(|s| {
            let config = template.session_config(derive_seed(base_seed, 0, s), ScheduleVariation::Varied, &capture);
            deeptrader::session::run_session(&config).unwrap().snapshots
        })
        .collect()
}

/// Trade-captured sessions drawn evenly from the grid templates that
/// include ZIP.
pub fn zip_rich_corpus(sessions: usize, base_seed: u64) -> Vec<MarketSnapshot> {
    use deeptrader::features::CaptureSpec;
    use deeptrader::harness::{derive_seed, enumerate_grid, ConfigGrid, ScheduleVariation};
    let grid = ConfigGrid::default();
    let templates: Vec<_> = enumerate_grid(&grid.pool, &grid.groups)
        .unwrap()
        .into_iter()
        .filter(|t| t.strategies.contains(&StrategyTag::Zip))
        .collect();
    let step = (templates.len() / sessions.min(templates.len())).max(1);
    (0..sessions)
        .flat_map(|k| {
            let t = &templates[(k * step) % templates.len()];
            let config = t.session_config(
                derive_seed(base_seed, k as u64, 0),
                ScheduleVariation::Varied,
                &CaptureSpec::default(),
            );
            deeptrader::session::run_session(&config).unwrap().snapshots
        })
        .collect()
}
