//! Level-2 snapshot features, min-max normalization and dataset files.
//!
//! A snapshot holds thirteen inputs and one target:
//!
//! | name | meaning |
//! |------|---------|
//! | f1  | time since session start (s) |
//! | f2  | 1 if the aggressor lifted the best ask, 0 if it hit the best bid |
//! | f3  | limit price of the aggressor's customer order |
//! | f4  | bid-ask spread |
//! | f5  | midprice |
//! | f6  | microprice (best-level quantities) |
//! | f7  | best bid |
//! | f8  | best ask |
//! | f9  | time since the previous trade |
//! | f10 | full-depth imbalance |
//! | f11 | total quantity on the book |
//! | f12 | equilibrium-price estimate |
//! | f13 | Smith's alpha against that estimate |
//!
//! Every undefined quantity is stored as 0.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{Level2View, Price, Side, Trade};
use crate::metrics::{smith_alpha, MarketStats};
use crate::traders::StrategyTag;

pub const N_FEATURES: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Time,
    HitOrLift,
    CustomerLimit,
    Spread,
    Midprice,
    Microprice,
    BestBid,
    BestAsk,
    SinceLastTrade,
    Imbalance,
    TotalQuantity,
    PStar,
    Alpha,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Time,
        Feature::HitOrLift,
        Feature::CustomerLimit,
        Feature::Spread,
        Feature::Midprice,
        Feature::Microprice,
        Feature::BestBid,
        Feature::BestAsk,
        Feature::SinceLastTrade,
        Feature::Imbalance,
        Feature::TotalQuantity,
        Feature::PStar,
        Feature::Alpha,
    ];

    /// Zero-based column index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Feature> {
        Feature::ALL.get(i).copied()
    }

    pub fn name(self) -> String {
        format!("f{}", self.index() + 1)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.index() + 1)
    }
}

impl FromStr for Feature {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('f')
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(|n| n.checked_sub(1))
            .and_then(Feature::from_index)
            .ok_or_else(|| FeatureError::UnknownFeature(s.to_string()))
    }
}

impl Serialize for Feature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Feature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {0} is constant over the training data")]
    ConstantFeature(Feature),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature mask is empty")]
    EmptyMask,
    #[error("feature {0} is not in the normalization spec")]
    MissingFeature(Feature),
    #[error("expected {expected} values, got {got}")]
    Width { expected: usize, got: usize },
    #[error("dataset header mismatch: {0}")]
    Header(String),
    #[error("bad value on line {line}: {value:?}")]
    Parse { line: usize, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// An ordered, duplicate-free subset of the thirteen inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Feature>", into = "Vec<Feature>")]
pub struct FeatureMask(Vec<Feature>);

impl FeatureMask {
    pub fn new(features: impl IntoIterator<Item = Feature>) -> Result<Self, FeatureError> {
        let mut v: Vec<Feature> = features.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(FeatureError::EmptyMask);
        }
        Ok(Self(v))
    }

    pub fn all() -> Self {
        Self(Feature::ALL.to_vec())
    }

    /// The six inputs kept after ablation: f2 to f7.
    pub fn reduced() -> Self {
        Self(vec![
            Feature::HitOrLift,
            Feature::CustomerLimit,
            Feature::Spread,
            Feature::Midprice,
            Feature::Microprice,
            Feature::BestBid,
        ])
    }

    pub fn features(&self) -> &[Feature] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, f: Feature) -> bool {
        self.0.contains(&f)
    }

    /// Parses a comma-separated list such as `f2,f3,f4`, or `all` / `reduced`.
    pub fn parse_list(s: &str) -> Result<Self, FeatureError> {
        match s.trim() {
            "all" => Ok(Self::all()),
            "reduced" => Ok(Self::reduced()),
            list => Self::new(list.split(',').map(|t| t.trim().parse()).collect::<Result<Vec<_>, _>>()?),
        }
    }
}

impl TryFrom<Vec<Feature>> for FeatureMask {
    type Error = FeatureError;

    fn try_from(v: Vec<Feature>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FeatureMask> for Vec<Feature> {
    fn from(m: FeatureMask) -> Self {
        m.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub features: [f64; N_FEATURES],
    pub target: f64,
}

impl MarketSnapshot {
    pub fn get(&self, f: Feature) -> f64 {
        self.features[f.index()]
    }

    pub fn masked(&self, mask: &FeatureMask) -> Vec<f64> {
        mask.features().iter().map(|f| self.get(*f)).collect()
    }
}

/// Quantity-weighted best prices; each side weighted by the opposite side's
/// best-level depth. 0 when either side is empty.
pub fn microprice(best_bid: Option<(Price, u64)>, best_ask: Option<(Price, u64)>) -> f64 {
    match (best_bid, best_ask) {
        (Some((bid, bq)), Some((ask, aq))) if bq + aq > 0 => {
            (bid as f64 * aq as f64 + ask as f64 * bq as f64) / (bq + aq) as f64
        }
        _ => 0.0,
    }
}

/// (Qb − Qa) / (Qb + Qa); 0 for an empty book.
pub fn imbalance(bid_qty: u64, ask_qty: u64) -> f64 {
    let total = bid_qty + ask_qty;
    if total == 0 {
        0.0
    } else {
        (bid_qty as f64 - ask_qty as f64) / total as f64
    }
}

/// Everything needed to evaluate the thirteen inputs at one instant.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub time: f64,
    /// Side of the order that is (or would be) crossing.
    pub aggressor: Side,
    pub customer_limit: Price,
    pub book: &'a Level2View,
    pub market: &'a MarketStats,
    pub rho: f64,
}

pub fn build_features(ctx: &FeatureContext<'_>) -> [f64; N_FEATURES] {
    let book = ctx.book;
    let mut f = [0.0; N_FEATURES];
    f[Feature::Time.index()] = ctx.time;
    f[Feature::HitOrLift.index()] = match ctx.aggressor {
        Side::Bid => 1.0,
        Side::Ask => 0.0,
    };
    f[Feature::CustomerLimit.index()] = ctx.customer_limit as f64;
    if let (Some(bid), Some(ask)) = (book.best_bid, book.best_ask) {
        f[Feature::Spread.index()] = (ask - bid) as f64;
        f[Feature::Midprice.index()] = (bid + ask) as f64 / 2.0;
    }
    f[Feature::Microprice.index()] = microprice(book.bid_levels.first().copied(), book.ask_levels.first().copied());
    f[Feature::BestBid.index()] = book.best_bid.unwrap_or(0) as f64;
    f[Feature::BestAsk.index()] = book.best_ask.unwrap_or(0) as f64;
    f[Feature::SinceLastTrade.index()] = ctx.market.last_trade_time().map_or(0.0, |t| ctx.time - t);
    let (qb, qa) = (book.total_bid_qty(), book.total_ask_qty());
    f[Feature::Imbalance.index()] = imbalance(qb, qa);
    f[Feature::TotalQuantity.index()] = (qb + qa) as f64;
    let p_star = ctx.market.p_star(ctx.rho);
    f[Feature::PStar.index()] = p_star.unwrap_or(0.0);
    f[Feature::Alpha.index()] = p_star.and_then(|p| smith_alpha(ctx.market.trade_prices(), p)).unwrap_or(0.0);
    f
}

/// Snapshot of a trade. `book` and `market` must describe the state
/// immediately before the trade.
pub fn capture_snapshot(
    book: &Level2View,
    market: &MarketStats,
    trade: &Trade,
    customer_limit: Price,
    rho: f64,
) -> MarketSnapshot {
    let ctx = FeatureContext { time: trade.time, aggressor: trade.aggressor, customer_limit, book, market, rho };
    MarketSnapshot { features: build_features(&ctx), target: trade.price as f64 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    /// One row per executed trade; target is the trade price.
    #[default]
    Trade,
    /// One row per submitted quote; target is the quoted price.
    Quote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureSpec {
    pub mode: CaptureMode,
    /// Only keep rows whose initiating trader runs this strategy.
    pub filter: Option<StrategyTag>,
}

impl CaptureSpec {
    pub fn accepts(&self, tag: StrategyTag) -> bool {
        self.filter.is_none_or(|f| f == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Option<Range> {
        values.fold(None, |acc, v| match acc {
            None => Some(Range { min: v, max: v }),
            Some(r) => Some(Range { min: r.min.min(v), max: r.max.max(v) }),
        })
    }

    fn width(&self) -> f64 {
        if self.max > self.min {
            self.max - self.min
        } else {
            1.0
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / self.width()
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.width() + self.min
    }
}

/// Per-feature min/max fitted on a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub features: BTreeMap<Feature, Range>,
    pub target: Range,
    pub mask: FeatureMask,
}

impl NormalizationSpec {
    pub fn fit(rows: &[MarketSnapshot], mask: &FeatureMask) -> Result<Self, FeatureError> {
        let target = Range::of(rows.iter().map(|r| r.target)).ok_or(FeatureError::EmptyDataset)?;
        let mut features = BTreeMap::new();
        for &f in mask.features() {
            let range = Range::of(rows.iter().map(|r| r.get(f))).ok_or(FeatureError::EmptyDataset)?;
            if range.max <= range.min {
                return Err(FeatureError::ConstantFeature(f));
            }
            features.insert(f, range);
        }
        Ok(Self { features, target, mask: mask.clone() })
    }

    /// True when every training target had the same value.
    pub fn degenerate_target(&self) -> bool {
        self.target.max <= self.target.min
    }

    fn range(&self, f: Feature) -> Result<&Range, FeatureError> {
        self.features.get(&f).ok_or(FeatureError::MissingFeature(f))
    }

    /// Checks that every masked feature has a fitted range.
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.mask.is_empty() {
            return Err(FeatureError::EmptyMask);
        }
        self.mask.features().iter().try_for_each(|f| self.range(*f).map(|_| ()))
    }

    /// Maps the masked features of a raw 13-vector into the unit scale.
    pub fn apply(&self, raw: &[f64; N_FEATURES]) -> Vec<f64> {
        self.mask.features().iter().map(|f| self.features[f].apply(raw[f.index()])).collect()
    }

    /// As [`apply`](Self::apply), clipping out-of-range inputs to [0, 1].
    pub fn apply_clipped(&self, raw: &[f64; N_FEATURES]) -> Vec<f64> {
        self.apply(raw).into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }

    /// Inverse of [`apply`](Self::apply) for the masked features.
    pub fn invert(&self, normalized: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if normalized.len() != self.mask.len() {
            return Err(FeatureError::Width { expected: self.mask.len(), got: normalized.len() });
        }
        Ok(self.mask.features().iter().zip(normalized).map(|(f, &v)| self.features[f].invert(v)).collect())
    }

    pub fn normalize_target(&self, t: f64) -> f64 {
        self.target.apply(t)
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        self.target.invert(y)
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Where a group of dataset rows came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_id: usize,
    pub seed: u64,
    pub rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotDataset {
    pub rows: Vec<MarketSnapshot>,
    pub provenance: Vec<Provenance>,
    pub filter: Option<StrategyTag>,
}

pub const DATASET_HEADER: &str = "f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12,f13,target";

impl SnapshotDataset {
    pub fn new(rows: Vec<MarketSnapshot>) -> Self {
        Self { rows, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends one session's rows.
    pub fn extend_session(&mut self, config_id: usize, seed: u64, rows: Vec<MarketSnapshot>) {
        self.provenance.push(Provenance { config_id, seed, rows: rows.len() });
        self.rows.extend(rows);
    }

    pub fn column(&self, f: Feature) -> Vec<f64> {
        self.rows.iter().map(|r| r.get(f)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        write_rows_csv(&self.rows, out)
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, FeatureError> {
        Ok(Self::new(read_rows_csv(input)?))
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Rows as CSV with the fixed header. Values use the shortest decimal
/// representation that parses back to the same `f64`.
pub fn write_rows_csv<W: Write>(rows: &[MarketSnapshot], mut out: W) -> Result<(), FeatureError> {
    writeln!(out, "{DATASET_HEADER}")?;
    for row in rows {
        for v in &row.features {
            write!(out, "{v},")?;
        }
        writeln!(out, "{}", row.target)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: BufRead>(input: R) -> Result<Vec<MarketSnapshot>, FeatureError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(|e| FeatureError::Header(e.to_string()))?;
    let header = header.iter().collect::<Vec<_>>().join(",");
    if header != DATASET_HEADER {
        return Err(FeatureError::Header(header));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| FeatureError::Parse { line, value: e.to_string() })?;
        if record.len() != N_FEATURES + 1 {
            return Err(FeatureError::Width { expected: N_FEATURES + 1, got: record.len() });
        }
        let mut values = [0.0; N_FEATURES + 1];
        for (slot, field) in values.iter_mut().zip(record.iter()) {
            *slot = field.parse().map_err(|_| FeatureError::Parse { line, value: field.to_string() })?;
        }
        let mut features = [0.0; N_FEATURES];
        features.copy_from_slice(&values[..N_FEATURES]);
        rows.push(MarketSnapshot { features, target: values[N_FEATURES] });
    }
    Ok(rows)
}
