//! Complete market sessions.
//!
//! A session assigns every trader a fixed slot in its side's limit-price
//! schedule, issues customer orders for those slots (again after each trade,
//! per the replenishment mode), and polls one trader per timestep. Polling
//! walks a permutation of all traders that is reshuffled every round, so each
//! trader is polled once per `n_traders` steps.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::DeepTrader;
use crate::exchange::{ExchangeError, LimitOrderBook, Order, Price, PriceBounds, Side, TapeEvent, Trade, TraderId};
use crate::features::{build_features, capture_snapshot, CaptureMode, CaptureSpec, FeatureContext, MarketSnapshot};
pub use crate::metrics::smith_alpha;
use crate::metrics::MarketStats;
use crate::model::{ModelError, TrainedModel};
use crate::traders::{
    build_strategy, CustomerOrder, MarketEvent, Stimulus, Strategy, StrategyParams, StrategyTag, Trader,
};

/// Mean gap, in simulated seconds, between consuming a customer order and
/// receiving the next one.
pub const DEFAULT_REPLENISH_INTERVAL: f64 = 300.0;
pub const DEFAULT_DURATION: f64 = 180.0;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("population entry '{0}' uses DTR but names no model")]
    MissingModel(String),
    #[error("model '{0}' was not loaded")]
    UnknownModel(String),
    #[error("model '{name}': {source}")]
    Model { name: String, source: ModelError },
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScheduleSide {
    Supply,
    Demand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScheduleShape {
    Linear,
    Step,
    RandomOffset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReplenishMode {
    /// Next order exactly `replenish_interval` after a trade.
    DripFixed,
    /// Next order `replenish_interval × U(0.5, 1.5)` after a trade.
    DripJitter,
    /// Every trader on the side gets a fresh order every interval.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub side: ScheduleSide,
    pub price_range: (Price, Price),
    pub shape: ScheduleShape,
    pub replenish_interval: f64,
    pub mode: ReplenishMode,
}

impl ScheduleSpec {
    pub fn new(side: ScheduleSide, low: Price, high: Price) -> Self {
        Self {
            side,
            price_range: (low, high),
            shape: ScheduleShape::Linear,
            replenish_interval: DEFAULT_REPLENISH_INTERVAL,
            mode: ReplenishMode::DripJitter,
        }
    }

    pub fn with_shape(mut self, shape: ScheduleShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn with_replenishment(mut self, interval: f64, mode: ReplenishMode) -> Self {
        self.replenish_interval = interval;
        self.mode = mode;
        self
    }

    pub fn validate(&self, bounds: PriceBounds) -> Result<(), SessionError> {
        let (low, high) = self.price_range;
        if low > high {
            return Err(SessionError::Config(format!("{:?} schedule range ({low}, {high}) is inverted", self.side)));
        }
        if !bounds.contains(low) || !bounds.contains(high) {
            return Err(SessionError::Config(format!(
                "{:?} schedule range ({low}, {high}) leaves price bounds [{}, {}]",
                self.side, bounds.floor, bounds.ceiling
            )));
        }
        if !(self.replenish_interval > 0.0 && self.replenish_interval.is_finite()) {
            return Err(SessionError::Config(format!("{:?} replenish_interval must be positive", self.side)));
        }
        Ok(())
    }
}

/// `n` limit prices within the spec's range, ascending except for jitter.
pub fn build_schedule(spec: &ScheduleSpec, n: usize, rng: &mut impl Rng) -> Vec<Price> {
    let (low, high) = spec.price_range;
    let linear = |i: usize| -> f64 {
        if n == 1 {
            (low + high) as f64 / 2.0
        } else {
            low as f64 + (high - low) as f64 * i as f64 / (n - 1) as f64
        }
    };
    match spec.shape {
        ScheduleShape::Linear => (0..n).map(|i| linear(i).round() as Price).collect(),
        ScheduleShape::Step => {
            let lows = n.div_ceil(2);
            (0..n).map(|i| if i < lows { low } else { high }).collect()
        }
        ScheduleShape::RandomOffset => {
            let amplitude = (high - low) as f64 / (4 * n) as f64;
            (0..n)
                .map(|i| {
                    let jitter = if amplitude > 0.0 { rng.gen_range(-amplitude..=amplitude) } else { 0.0 };
                    ((linear(i) + jitter).round() as Price).clamp(low, high)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Absent when no unit can trade.
    pub p0: Option<Price>,
    pub q0: usize,
    pub max_surplus: i64,
}

/// Competitive equilibrium of the step supply and demand curves.
pub fn theoretical_equilibrium(supply: &[Price], demand: &[Price]) -> Equilibrium {
    let mut s = supply.to_vec();
    s.sort_unstable();
    let mut d = demand.to_vec();
    d.sort_unstable_by(|a, b| b.cmp(a));
    let q0 = s.iter().zip(&d).take_while(|(s, d)| d >= s).count();
    if q0 == 0 {
        return Equilibrium { p0: None, q0: 0, max_surplus: 0 };
    }
    let max_surplus = s.iter().zip(&d).take(q0).map(|(s, d)| d - s).sum();
    let mut lo = s[q0 - 1];
    let mut hi = d[q0 - 1];
    if let Some(&next_d) = d.get(q0) {
        lo = lo.max(next_d);
    }
    if let Some(&next_s) = s.get(q0) {
        hi = hi.min(next_s);
    }
    // midpoint, exact halves rounded up toward the demand side
    let p0 = (lo + hi + 1).div_euclid(2);
    Equilibrium { p0: Some(p0), q0, max_surplus }
}

/// 100 × realized profit / maximum surplus; 0 when no surplus exists.
pub fn allocative_efficiency(total_profit: i64, max_surplus: i64) -> f64 {
    if max_surplus <= 0 {
        0.0
    } else {
        100.0 * total_profit as f64 / max_surplus as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub tag: StrategyTag,
    pub buyers: usize,
    pub sellers: usize,
    /// Model name or path for DTR entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Distinguishes groups that share a tag; defaults to the tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PopulationEntry {
    pub fn new(tag: StrategyTag, buyers: usize, sellers: usize) -> Self {
        Self { tag, buyers, sellers, model: None, label: None }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.tag.to_string())
    }
}

fn default_duration() -> f64 {
    DEFAULT_DURATION
}

fn default_rho() -> f64 {
    0.9
}

fn default_supply() -> ScheduleSpec {
    ScheduleSpec::new(ScheduleSide::Supply, 50, 150)
}

fn default_demand() -> ScheduleSpec {
    ScheduleSpec::new(ScheduleSide::Demand, 50, 150)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default = "default_duration")]
    pub duration: f64,
    pub population: Vec<PopulationEntry>,
    #[serde(default = "default_supply")]
    pub supply: ScheduleSpec,
    #[serde(default = "default_demand")]
    pub demand: ScheduleSpec,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds per poll; defaults to 1 / number of traders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestep: Option<f64>,
    #[serde(default)]
    pub bounds: PriceBounds,
    /// Gives the j-th buyer (seller) of every population entry the same
    /// limit price. Requires equal group sizes.
    #[serde(default)]
    pub matched_pairs: bool,
    #[serde(default)]
    pub capture: CaptureSpec,
    #[serde(default)]
    pub params: StrategyParams,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

impl SessionConfig {
    /// Default schedules and settings for the given population.
    pub fn new(population: Vec<PopulationEntry>, seed: u64) -> Self {
        Self {
            duration: DEFAULT_DURATION,
            population,
            supply: default_supply(),
            demand: default_demand(),
            seed,
            timestep: None,
            bounds: PriceBounds::default(),
            matched_pairs: false,
            capture: CaptureSpec::default(),
            params: StrategyParams::default(),
            rho: default_rho(),
        }
    }

    pub fn n_buyers(&self) -> usize {
        self.population.iter().map(|e| e.buyers).sum()
    }

    pub fn n_sellers(&self) -> usize {
        self.population.iter().map(|e| e.sellers).sum()
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(SessionError::Config("duration must be finite and non-negative".into()));
        }
        if let Some(dt) = self.timestep {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(SessionError::Config("timestep must be positive".into()));
            }
        }
        if self.bounds.floor < 1 || self.bounds.floor > self.bounds.ceiling {
            return Err(SessionError::Config("price bounds need 1 <= floor <= ceiling".into()));
        }
        if self.supply.side != ScheduleSide::Supply || self.demand.side != ScheduleSide::Demand {
            return Err(SessionError::Config("supply/demand schedules have the wrong side".into()));
        }
        self.supply.validate(self.bounds)?;
        self.demand.validate(self.bounds)?;
        if self.n_buyers() + self.n_sellers() == 0 {
            return Err(SessionError::Config("population is empty".into()));
        }
        for entry in &self.population {
            if entry.tag == StrategyTag::Dtr && entry.model.is_none() {
                return Err(SessionError::MissingModel(entry.label()));
            }
        }
        if self.matched_pairs {
            let first = &self.population[0];
            if self.population.iter().any(|e| e.buyers != first.buyers || e.sellers != first.sellers) {
                return Err(SessionError::Config("matched_pairs requires equal group sizes".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let config: Self = serde_json::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Trained models available to DTR population entries, by name.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    models: BTreeMap<String, Arc<TrainedModel>>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, model: Arc<TrainedModel>) {
        self.models.insert(name.into(), model);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<TrainedModel>> {
        self.models.get(name)
    }

    /// Loads every model path referenced by `config` from disk.
    pub fn load_for(config: &SessionConfig) -> Result<Self, SessionError> {
        let mut set = Self::new();
        for name in config.population.iter().filter_map(|e| e.model.as_ref()) {
            if set.get(name).is_none() {
                let model = TrainedModel::load(Path::new(name))
                    .map_err(|source| SessionError::Model { name: name.clone(), source })?;
                set.insert(name.clone(), Arc::new(model));
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderOutcome {
    pub id: TraderId,
    pub tag: StrategyTag,
    pub label: String,
    pub side: Side,
    pub limit: Price,
    pub balance: i64,
    pub trade_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub label: String,
    pub tag: StrategyTag,
    pub n_traders: usize,
    pub total_profit: i64,
    pub appt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub seed: u64,
    pub traders: Vec<TraderOutcome>,
    pub groups: Vec<GroupOutcome>,
    /// Average profit per trader for each strategy present.
    pub appt: BTreeMap<StrategyTag, f64>,
    pub tape: Vec<TapeEvent>,
    pub n_trades: usize,
    /// Equilibrium of the initial limit assignment; reference for alpha.
    pub equilibrium: Equilibrium,
    /// Maximum surplus over every customer order issued in the session.
    pub max_surplus: i64,
    pub total_profit: i64,
    pub efficiency: f64,
    /// Per-trade 100·|p − P0| / P0, in trade order.
    pub alpha_series: Vec<f64>,
    pub trade_times: Vec<f64>,
    pub snapshots: Vec<MarketSnapshot>,
}

impl SessionResult {
    pub fn trade_prices(&self) -> Vec<Price> {
        self.tape.iter().filter_map(|e| e.as_trade().map(|t| t.price)).collect()
    }

    pub fn mean_alpha(&self) -> Option<f64> {
        (!self.alpha_series.is_empty()).then(|| self.alpha_series.iter().sum::<f64>() / self.alpha_series.len() as f64)
    }

    /// Smith's alpha of all trades against the initial equilibrium price.
    pub fn smith_alpha(&self) -> Option<f64> {
        smith_alpha(&self.trade_prices(), self.equilibrium.p0? as f64)
    }

    pub fn group(&self, label: &str) -> Option<&GroupOutcome> {
        self.groups.iter().find(|g| g.label == label)
    }

    pub fn summary_rows(&self, config_id: usize) -> Vec<SummaryRow> {
        self.groups
            .iter()
            .map(|g| SummaryRow {
                config_id,
                seed: self.seed,
                strategy: g.label.clone(),
                appt: g.appt,
                efficiency: self.efficiency,
                n_trades: self.n_trades,
                mean_alpha: self.mean_alpha(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_id: usize,
    pub seed: u64,
    pub strategy: String,
    pub appt: f64,
    pub efficiency: f64,
    pub n_trades: usize,
    pub mean_alpha: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "config_id,seed,strategy,appt,efficiency,n_trades,mean_alpha";

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        let alpha = r.mean_alpha.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.config_id, r.seed, r.strategy, r.appt, r.efficiency, r.n_trades, alpha
        )?;
    }
    Ok(())
}

/// Independent RNG stream for trader `id` under `seed`.
fn trader_rng(seed: u64, id: TraderId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 + 1);
    rng
}

struct Roster {
    traders: Vec<Trader>,
    labels: Vec<String>,
    limits: Vec<Price>,
}

fn build_roster(config: &SessionConfig, models: &ModelSet, rng: &mut ChaCha8Rng) -> Result<Roster, SessionError> {
    let mut traders = Vec::new();
    let mut labels = Vec::new();
    let mut limits = Vec::new();
    for side in [Side::Bid, Side::Ask] {
        let (spec, count): (&ScheduleSpec, fn(&PopulationEntry) -> usize) = match side {
            Side::Bid => (&config.demand, |e| e.buyers),
            Side::Ask => (&config.supply, |e| e.sellers),
        };
        let slots =
            if config.matched_pairs { count(&config.population[0]) } else { config.population.iter().map(count).sum() };
        let schedule = build_schedule(spec, slots, rng);
        let mut perm: Vec<usize> = (0..slots).collect();
        perm.shuffle(rng);
        let mut k = 0;
        for (group, entry) in config.population.iter().enumerate() {
            for j in 0..count(entry) {
                let id = traders.len();
                let mut trng = trader_rng(config.seed, id);
                let strategy: Box<dyn Strategy> = if entry.tag == StrategyTag::Dtr {
                    let name = entry.model.as_ref().ok_or_else(|| SessionError::MissingModel(entry.label()))?;
                    let model = models.get(name).ok_or_else(|| SessionError::UnknownModel(name.clone()))?;
                    Box::new(DeepTrader::new(Arc::clone(model)))
                } else {
                    build_strategy(entry.tag, side, &config.params, &mut trng).map_err(|e| SessionError::Config(e.0))?
                };
                let slot = if config.matched_pairs { perm[j] } else { perm[k] };
                k += 1;
                limits.push(schedule[slot]);
                labels.push(entry.label());
                traders.push(Trader::new(id, side, group, strategy, trng));
            }
        }
    }
    Ok(Roster { traders, labels, limits })
}

/// Runs a session, loading any DTR models from the paths in the config.
pub fn run_session(config: &SessionConfig) -> Result<SessionResult, SessionError> {
    config.validate()?;
    let models = ModelSet::load_for(config)?;
    run_session_with(config, &models)
}

/// Runs a session with pre-loaded models. Fully determined by `config`.
pub fn run_session_with(config: &SessionConfig, models: &ModelSet) -> Result<SessionResult, SessionError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let Roster { mut traders, labels, limits } = build_roster(config, models, &mut rng)?;
    let n = traders.len();
    let supply: Vec<Price> = (0..n).filter(|&i| traders[i].side == Side::Ask).map(|i| limits[i]).collect();
    let demand: Vec<Price> = (0..n).filter(|&i| traders[i].side == Side::Bid).map(|i| limits[i]).collect();
    let equilibrium = theoretical_equilibrium(&supply, &demand);

    let bounds = config.bounds;
    let dt = config.timestep.unwrap_or(1.0 / n as f64);
    let spec_for = |side: Side| match side {
        Side::Bid => &config.demand,
        Side::Ask => &config.supply,
    };

    let mut book = LimitOrderBook::new(bounds);
    for t in &traders {
        book.register_trader(t.id);
    }
    let mut market = MarketStats::new();
    let mut next_issue: Vec<Option<f64>> = vec![Some(0.0); n];
    let mut next_period = [config.demand.replenish_interval, config.supply.replenish_interval];
    let mut issued_supply = Vec::new();
    let mut issued_demand = Vec::new();
    let mut poll_order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut next_order_id = 0u64;
    let mut alpha_series = Vec::new();
    let mut trade_times = Vec::new();
    let mut snapshots = Vec::new();

    let mut step = 0u64;
    loop {
        let t = step as f64 * dt;
        if t >= config.duration {
            break;
        }
        step += 1;

        // periodic refresh replaces every order on the side
        for (k, side) in [Side::Bid, Side::Ask].into_iter().enumerate() {
            let spec = spec_for(side);
            if spec.mode != ReplenishMode::Periodic {
                continue;
            }
            while t >= next_period[k] {
                for trader in traders.iter_mut().filter(|tr| tr.side == side) {
                    book.cancel_order(trader.id, t);
                    next_issue[trader.id] = Some(t);
                }
                next_period[k] += spec.replenish_interval;
            }
        }
        for trader in traders.iter_mut() {
            if next_issue[trader.id].is_some_and(|due| due <= t) {
                next_issue[trader.id] = None;
                let limit = limits[trader.id];
                trader.assign_order(CustomerOrder { side: trader.side, limit, issue_time: t });
                match trader.side {
                    Side::Bid => issued_demand.push(limit),
                    Side::Ask => issued_supply.push(limit),
                }
            }
        }
        let mut view = book.publish_level2(t);

        if cursor == n {
            poll_order.shuffle(&mut rng);
            cursor = 0;
        }
        let id = poll_order[cursor];
        cursor += 1;

        let stimulus = Stimulus { time: t, duration: config.duration, book: &view, market: &market, bounds };
        let Some(price) = traders[id].get_quote(&stimulus) else { continue };
        if book.resting_order(id).is_some_and(|o| o.price == price) {
            continue;
        }
        let side = traders[id].side;
        let limit = traders[id].order.map(|o| o.limit).expect("quoting trader holds an order");
        if config.capture.mode == CaptureMode::Quote && config.capture.accepts(traders[id].tag()) {
            let features = build_features(&FeatureContext {
                time: t,
                aggressor: side,
                customer_limit: limit,
                book: &view,
                market: &market,
                rho: config.rho,
            });
            snapshots.push(MarketSnapshot { features, target: price as f64 });
        }

        next_order_id += 1;
        let events =
            book.submit_order(Order { order_id: next_order_id, trader_id: id, side, price, quantity: 1, time: t })?;
        let trades: Vec<Trade> = events.iter().filter_map(|e| e.as_trade().cloned()).collect();
        for trade in &trades {
            if config.capture.mode == CaptureMode::Trade && config.capture.accepts(traders[id].tag()) {
                snapshots.push(capture_snapshot(&view, &market, trade, limit, config.rho));
            }
            for party in [trade.buyer_id, trade.seller_id] {
                let trader = &mut traders[party];
                trader.book_trade(trade.price);
                let spec = spec_for(trader.side);
                next_issue[party] = match spec.mode {
                    ReplenishMode::DripFixed => Some(t + spec.replenish_interval),
                    ReplenishMode::DripJitter => Some(t + spec.replenish_interval * rng.gen_range(0.5..1.5)),
                    ReplenishMode::Periodic => None,
                };
            }
            market.record_trade(trade.price, trade.time);
            trade_times.push(trade.time);
            if let Some(p0) = equilibrium.p0 {
                alpha_series.push(100.0 * (trade.price - p0).abs() as f64 / p0 as f64);
            }
        }

        view = book.publish_level2(t);
        let stimulus = Stimulus { time: t, duration: config.duration, book: &view, market: &market, bounds };
        if trades.is_empty() {
            let event = MarketEvent::Quote { side, price, trader_id: id };
            traders.iter_mut().for_each(|tr| tr.respond(&stimulus, &event));
        } else {
            for trade in trades {
                let event = MarketEvent::Trade(trade);
                traders.iter_mut().for_each(|tr| tr.respond(&stimulus, &event));
            }
        }
    }

    let outcomes: Vec<TraderOutcome> = traders
        .iter()
        .map(|tr| TraderOutcome {
            id: tr.id,
            tag: tr.tag(),
            label: labels[tr.id].clone(),
            side: tr.side,
            limit: limits[tr.id],
            balance: tr.balance,
            trade_count: tr.trade_count,
        })
        .collect();
    let groups = config
        .population
        .iter()
        .enumerate()
        .map(|(g, entry)| {
            let members: Vec<&TraderOutcome> = outcomes.iter().filter(|o| traders[o.id].group == g).collect();
            let total: i64 = members.iter().map(|o| o.balance).sum();
            GroupOutcome {
                label: entry.label(),
                tag: entry.tag,
                n_traders: members.len(),
                total_profit: total,
                appt: if members.is_empty() { 0.0 } else { total as f64 / members.len() as f64 },
            }
        })
        .collect();
    let mut per_tag: BTreeMap<StrategyTag, (i64, usize)> = BTreeMap::new();
    for o in &outcomes {
        let e = per_tag.entry(o.tag).or_default();
        e.0 += o.balance;
        e.1 += 1;
    }
    let appt = per_tag.into_iter().map(|(tag, (sum, count))| (tag, sum as f64 / count as f64)).collect();
    let total_profit: i64 = outcomes.iter().map(|o| o.balance).sum();
    let max_surplus = theoretical_equilibrium(&issued_supply, &issued_demand).max_surplus;
    let tape = book.into_tape();
    let n_trades = tape.iter().filter(|e| e.as_trade().is_some()).count();

    Ok(SessionResult {
        seed: config.seed,
        traders: outcomes,
        groups,
        appt,
        tape,
        n_trades,
        equilibrium,
        max_surplus,
        total_profit,
        efficiency: allocative_efficiency(total_profit, max_surplus),
        alpha_series,
        trade_times,
        snapshots,
    })
}
