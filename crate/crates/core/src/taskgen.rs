//! Train/test pools and the three synthetic probing datasets.
//!
//! A range of integers is shuffled and split 80/20 into a train pool and a
//! test pool. List-maximum lists are built around a random pool value by
//! adding Gaussian offsets (variance `0.01 * range_size` by default) and
//! snapping to the nearest pool value, so the five numbers stay close
//! together. Addition enumerates ordered pairs within a pool.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeral::{NumberFormat, NumberToken, NumeralError};
use crate::seed;

pub const LIST_LEN: usize = 5;
pub const DEFAULT_LISTMAX_TRAIN: usize = 100_000;
pub const DEFAULT_LISTMAX_TEST: usize = 10_000;
pub const DEFAULT_VARIANCE_SCALE: f64 = 0.01;

// Redraws of one offset before falling back to the nearest unused value.
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("pool has {have} distinct values, need at least {need}")]
    PoolTooSmall { have: usize, need: usize },
    #[error("range [{lo}, {hi}] is empty")]
    EmptyRange { lo: i64, hi: i64 },
    #[error("split of [{lo}, {hi}] leaves one side empty")]
    DegenerateSplit { lo: i64, hi: i64 },
    #[error("test range {test} overlaps train range {train}")]
    OverlappingRanges { train: IntRange, test: IntRange },
    #[error(transparent)]
    Numeral(#[from] NumeralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ListMax,
    Decode,
    Add,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ListMax => "list_max",
            Task::Decode => "decode",
            Task::Add => "add",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive integer range, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 2]", into = "[i64; 2]")]
pub struct IntRange {
    lo: i64,
    hi: i64,
}

impl IntRange {
    pub fn new(lo: i64, hi: i64) -> Result<Self, TaskError> {
        if lo > hi {
            return Err(TaskError::EmptyRange { lo, hi });
        }
        Ok(IntRange { lo, hi })
    }

    pub fn lo(self) -> i64 {
        self.lo
    }

    pub fn hi(self) -> i64 {
        self.hi
    }

    pub fn size(self) -> u64 {
        (self.hi - self.lo) as u64 + 1
    }

    pub fn contains(self, v: i64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    pub fn overlaps(self, other: IntRange) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn values(self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

impl TryFrom<[i64; 2]> for IntRange {
    type Error = TaskError;
    fn try_from([lo, hi]: [i64; 2]) -> Result<Self, Self::Error> {
        IntRange::new(lo, hi)
    }
}

impl From<IntRange> for [i64; 2] {
    fn from(r: IntRange) -> Self {
        [r.lo, r.hi]
    }
}

impl fmt::Display for IntRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// A sorted set of distinct values that instances may draw from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pool(Vec<i64>);

impl Pool {
    pub fn new(values: impl IntoIterator<Item = i64>) -> Self {
        let set: BTreeSet<i64> = values.into_iter().collect();
        Pool(set.into_iter().collect())
    }

    pub fn from_range(range: IntRange) -> Self {
        Pool(range.values().collect())
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: i64) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    /// Index of the pool value nearest to `x`; ties go to the smaller value.
    fn nearest_index(&self, x: f64) -> usize {
        let i = self.0.partition_point(|&p| (p as f64) < x);
        if i == 0 {
            return 0;
        }
        if i == self.0.len() {
            return i - 1;
        }
        let below = x - self.0[i - 1] as f64;
        let above = self.0[i] as f64 - x;
        if above < below {
            i
        } else {
            i - 1
        }
    }

    pub fn nearest(&self, x: f64) -> i64 {
        self.0[self.nearest_index(x)]
    }

    /// Nearest pool value to `x` that is not in `used`, expanding outward.
    fn nearest_unused(&self, x: f64, used: &[i64]) -> Option<i64> {
        let start = self.nearest_index(x);
        let (mut lo, mut hi) = (start as isize, start as isize + 1);
        let n = self.0.len() as isize;
        loop {
            let left = (lo >= 0).then(|| self.0[lo as usize]);
            let right = (hi < n).then(|| self.0[hi as usize]);
            let pick = match (left, right) {
                (None, None) => return None,
                (Some(l), None) => {
                    lo -= 1;
                    l
                }
                (None, Some(r)) => {
                    hi += 1;
                    r
                }
                (Some(l), Some(r)) => {
                    if (r as f64 - x) < (x - l as f64) {
                        hi += 1;
                        r
                    } else {
                        lo -= 1;
                        l
                    }
                }
            };
            if !used.contains(&pick) {
                return Some(pick);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSplit {
    pub range: IntRange,
    pub train: Pool,
    pub test: Pool,
    pub seed: u64,
}

impl PoolSplit {
    pub fn is_degenerate(&self) -> bool {
        self.train.is_empty() || self.test.is_empty()
    }

    pub fn ensure_usable(&self) -> Result<(), TaskError> {
        if self.is_degenerate() {
            return Err(TaskError::DegenerateSplit {
                lo: self.range.lo,
                hi: self.range.hi,
            });
        }
        Ok(())
    }
}

/// Train-pool size for a range of `n` values: `round(0.8 n)`.
pub fn train_count(n: u64) -> u64 {
    (4 * n + 2) / 5
}

/// Shuffles the range under `seed` and sends the first 80% to train.
pub fn make_split(range: IntRange, seed: u64) -> PoolSplit {
    let mut values: Vec<i64> = range.values().collect();
    values.shuffle(&mut seed::rng(seed));
    let cut = train_count(range.size()) as usize;
    let test = values.split_off(cut);
    PoolSplit {
        range,
        train: Pool::new(values),
        test: Pool::new(test),
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtrapolationSpec {
    pub train_range: IntRange,
    pub test_range: IntRange,
}

impl ExtrapolationSpec {
    pub fn new(train_range: IntRange, test_range: IntRange) -> Result<Self, TaskError> {
        if train_range.overlaps(test_range) {
            return Err(TaskError::OverlappingRanges {
                train: train_range,
                test: test_range,
            });
        }
        Ok(ExtrapolationSpec {
            train_range,
            test_range,
        })
    }
}

/// Width of the Gaussian offsets used to build nearby lists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    sigma: f64,
}

impl Spread {
    /// Variance `0.01 * range_size`.
    pub fn for_range(range_size: u64) -> Self {
        Self::with_variance_scale(range_size, DEFAULT_VARIANCE_SCALE)
    }

    pub fn with_variance_scale(range_size: u64, scale: f64) -> Self {
        Spread {
            sigma: (scale * range_size as f64).sqrt(),
        }
    }

    pub fn from_sigma(sigma: f64) -> Self {
        Spread { sigma }
    }

    pub fn sigma(self) -> f64 {
        self.sigma
    }

    fn normal(self) -> Option<Normal<f64>> {
        (self.sigma > 0.0).then(|| Normal::new(0.0, self.sigma).expect("finite sigma"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListMaxInstance {
    pub tokens: Vec<NumberToken>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeInstance {
    pub token: NumberToken,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddInstance {
    pub token_a: NumberToken,
    pub token_b: NumberToken,
    pub target: f64,
}

/// Index of the largest value; first occurrence wins.
pub fn argmax(values: &[i64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn draw_offset(normal: Option<&Normal<f64>>, rng: &mut seed::Rng) -> f64 {
    normal.map_or(0.0, |n| n.sample(rng))
}

/// Five distinct pool values near a uniformly drawn base.
fn nearby_values(pool: &Pool, normal: Option<&Normal<f64>>, rng: &mut seed::Rng) -> [i64; LIST_LEN] {
    let base = pool.values()[rng.random_range(0..pool.len())] as f64;
    let mut out = [0i64; LIST_LEN];
    for k in 0..LIST_LEN {
        let mut target = base;
        let mut chosen = None;
        for _ in 0..MAX_REDRAWS {
            target = base + draw_offset(normal, rng);
            let v = pool.nearest(target);
            if !out[..k].contains(&v) {
                chosen = Some(v);
                break;
            }
        }
        out[k] = match chosen {
            Some(v) => v,
            None => pool
                .nearest_unused(target, &out[..k])
                .expect("pool holds at least LIST_LEN values"),
        };
    }
    // The base is always drawn first; shuffle so no position is favoured.
    out.shuffle(rng);
    out
}

fn list_instance(values: &[i64], format: NumberFormat) -> Result<ListMaxInstance, TaskError> {
    let tokens = values
        .iter()
        .map(|&v| NumberToken::new(v, format))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ListMaxInstance {
        tokens,
        label: argmax(values),
    })
}

/// `n` lists of five distinct nearby pool values.
pub fn gen_listmax(
    pool: &Pool,
    n: usize,
    spread: Spread,
    format: NumberFormat,
    seed: u64,
) -> Result<Vec<ListMaxInstance>, TaskError> {
    if pool.len() < LIST_LEN {
        return Err(TaskError::PoolTooSmall {
            have: pool.len(),
            need: LIST_LEN,
        });
    }
    let mut rng = seed::rng(seed);
    let normal = spread.normal();
    (0..n)
        .map(|_| list_instance(&nearby_values(pool, normal.as_ref(), &mut rng), format))
        .collect()
}

/// One instance per pool value, in ascending order.
pub fn gen_decode(pool: &Pool, format: NumberFormat) -> Result<Vec<DecodeInstance>, TaskError> {
    pool.values()
        .iter()
        .map(|&v| {
            let token = NumberToken::new(v, format)?;
            let target = token.value();
            Ok(DecodeInstance { token, target })
        })
        .collect()
}

/// When to thin out addition pairs: ranges larger than `threshold` keep
/// only `fraction` of the pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddSubsample {
    pub threshold: u64,
    pub fraction: f64,
}

impl Default for AddSubsample {
    fn default() -> Self {
        AddSubsample {
            threshold: 100,
            fraction: 0.1,
        }
    }
}

impl AddSubsample {
    pub fn fraction_for(&self, range_size: u64) -> f64 {
        if range_size > self.threshold {
            self.fraction
        } else {
            1.0
        }
    }
}

/// All ordered pairs of pool values, optionally thinned to a uniform random
/// `keep_fraction` (rounded count) while preserving enumeration order.
pub fn gen_add(
    pool: &Pool,
    format: NumberFormat,
    keep_fraction: f64,
    seed: u64,
) -> Result<Vec<AddInstance>, TaskError> {
    let n = pool.len();
    let total = n * n;
    let keep = if keep_fraction >= 1.0 {
        total
    } else {
        (keep_fraction.max(0.0) * total as f64).round() as usize
    };
    let tokens = pool
        .values()
        .iter()
        .map(|&v| NumberToken::new(v, format))
        .collect::<Result<Vec<_>, _>>()?;
    let make = |k: usize| {
        let (a, b) = (&tokens[k / n], &tokens[k % n]);
        AddInstance {
            token_a: a.clone(),
            token_b: b.clone(),
            target: a.value() + b.value(),
        }
    };
    if keep == total {
        return Ok((0..total).map(make).collect());
    }
    let mut picked = index::sample(&mut seed::rng(seed), total, keep).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(make).collect())
}

/// Float lists over a pool of base integers. Half of the lists repeat one
/// base integer with five distinct decimal digits; the rest are nearby
/// integers each with its own random decimal digit.
pub fn gen_listmax_float(
    pool: &Pool,
    n: usize,
    spread: Spread,
    seed: u64,
) -> Result<Vec<ListMaxInstance>, TaskError> {
    if pool.is_empty() {
        return Err(TaskError::PoolTooSmall { have: 0, need: 1 });
    }
    let mut rng = seed::rng(seed);
    let normal = spread.normal();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let base = pool.values()[rng.random_range(0..pool.len())];
        let mut tenths = [0i64; LIST_LEN];
        if rng.random_bool(0.5) {
            let digits = index::sample(&mut rng, 10, LIST_LEN);
            for (slot, d) in tenths.iter_mut().zip(digits.iter()) {
                *slot = base * 10 + d as i64;
            }
        } else {
            for k in 0..LIST_LEN {
                let mut v = None;
                for _ in 0..MAX_REDRAWS {
                    let int = pool.nearest(base as f64 + draw_offset(normal.as_ref(), &mut rng));
                    let cand = int * 10 + rng.random_range(0..10);
                    if !tenths[..k].contains(&cand) {
                        v = Some(cand);
                        break;
                    }
                }
                // At most four digits of `base` can be taken, so a free one exists.
                tenths[k] = v.unwrap_or_else(|| {
                    (0..10)
                        .map(|d| base * 10 + d)
                        .find(|c| !tenths[..k].contains(c))
                        .expect("ten digits, five slots")
                });
            }
            tenths.shuffle(&mut rng);
        }
        out.push(list_instance(&tenths, NumberFormat::Float1)?);
    }
    Ok(out)
}

/// Tab-separated dump: surfaces, then the label or target.
pub trait DumpRow {
    fn write_row<W: Write>(&self, w: &mut W) -> io::Result<()>;
}

impl DumpRow for ListMaxInstance {
    fn write_row<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for t in &self.tokens {
            write!(w, "{}\t", t.surface())?;
        }
        writeln!(w, "{}", self.label)
    }
}

impl DumpRow for DecodeInstance {
    fn write_row<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}\t{}", self.token.surface(), self.target)
    }
}

impl DumpRow for AddInstance {
    fn write_row<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(
            w,
            "{}\t{}\t{}",
            self.token_a.surface(),
            self.token_b.surface(),
            self.target
        )
    }
}

pub fn write_dump<W: Write, T: DumpRow>(w: &mut W, rows: &[T]) -> io::Result<()> {
    rows.iter().try_for_each(|r| r.write_row(w))
}
