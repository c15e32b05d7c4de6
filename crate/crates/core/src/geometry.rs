//! Dyadic grid geometry.
//!
//! Every endpoint is an integer numerator over the grid resolution `K`, so
//! all interval comparisons in the partition pipeline are exact. Real-valued
//! views ([`RealInterval`]) are produced only at the boundary with the
//! distribution oracles.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported `log2 K`. Keeps numerators and `(K+1)^n` sweeps in range.
pub const MAX_LOG2_RESOLUTION: u32 = 24;

/// The uniform grid `G_K` over `[0,1]^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    resolution: u32,
    requested: u32,
}

impl GridSpec {
    /// Builds a grid of dimension `dim`, rounding `requested` up to a power of two.
    pub fn new(dim: usize, requested: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "grid dimension must be positive".into(),
            ));
        }
        if requested == 0 {
            return Err(Error::InvalidParameter(
                "grid resolution must be positive".into(),
            ));
        }
        let resolution = requested.checked_next_power_of_two().ok_or_else(|| {
            Error::InvalidParameter(format!("grid resolution {requested} is too large"))
        })?;
        if resolution.trailing_zeros() > MAX_LOG2_RESOLUTION {
            return Err(Error::InvalidParameter(format!(
                "grid resolution {resolution} exceeds 2^{MAX_LOG2_RESOLUTION}"
            )));
        }
        Ok(Self {
            dim,
            resolution,
            requested,
        })
    }

    /// Rounds a real-valued requested resolution up to an integer first.
    pub fn from_real_resolution(dim: usize, requested: f64) -> Result<Self> {
        if !requested.is_finite() || requested <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "requested resolution {requested} must be positive and finite"
            )));
        }
        let ceil = requested.ceil().max(1.0);
        if ceil > f64::from(1u32 << MAX_LOG2_RESOLUTION) {
            return Err(Error::InvalidParameter(format!(
                "requested resolution {requested} exceeds 2^{MAX_LOG2_RESOLUTION}"
            )));
        }
        Self::new(dim, ceil as u32)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `K`, always a power of two.
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    /// The resolution originally asked for, before rounding.
    pub fn requested_resolution(&self) -> u32 {
        self.requested
    }

    /// `log2 K`.
    pub fn log2_resolution(&self) -> u32 {
        self.resolution.trailing_zeros()
    }

    /// `(K+1)^n`, the number of grid points.
    pub fn point_count(&self) -> usize {
        (self.resolution as usize + 1).pow(self.dim as u32)
    }

    pub fn value(&self, e: GridEndpoint) -> f64 {
        f64::from(e.0) / f64::from(self.resolution)
    }

    pub fn top(&self) -> GridEndpoint {
        GridEndpoint(self.resolution)
    }

    /// Smallest grid endpoint `>= x`, for `x` in `[0,1]`.
    pub fn round_up(&self, x: f64) -> GridEndpoint {
        let k = f64::from(self.resolution);
        let scaled = (x.clamp(0.0, 1.0) * k).ceil();
        GridEndpoint(scaled.clamp(0.0, k) as u32)
    }

    /// Iterates over all grid points in lexicographic order (last coordinate fastest).
    pub fn points(&self) -> GridPoints {
        GridPoints {
            top: self.resolution,
            next: Some(vec![GridEndpoint(0); self.dim]),
        }
    }

    pub fn to_real(&self, point: &[GridEndpoint]) -> Vec<f64> {
        point.iter().map(|&e| self.value(e)).collect()
    }
}

/// Lexicographic iterator over `G_K`.
#[derive(Clone, Debug)]
pub struct GridPoints {
    top: u32,
    next: Option<Vec<GridEndpoint>>,
}

impl Iterator for GridPoints {
    type Item = Vec<GridEndpoint>;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for coord in succ.iter_mut().rev() {
            if coord.0 < self.top {
                coord.0 += 1;
                carried = false;
                break;
            }
            coord.0 = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// A grid coordinate `numerator / K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridEndpoint(pub u32);

impl GridEndpoint {
    pub const ZERO: GridEndpoint = GridEndpoint(0);

    pub fn numerator(self) -> u32 {
        self.0
    }

    /// Midpoint of `(self, other]`; exact for dyadic intervals wider than one cell.
    pub fn midpoint(self, other: GridEndpoint) -> GridEndpoint {
        GridEndpoint((self.0 + other.0) / 2)
    }
}

impl fmt::Display for GridEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// `{0}`.
    DegenerateZero,
    /// `(lo, hi]`.
    HalfOpen,
    /// `[0, hi]`, produced by merging `{0}` with the blocks to its right.
    ClosedFromZero,
}

/// A one-dimensional interval on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    kind: IntervalKind,
    lo: GridEndpoint,
    hi: GridEndpoint,
}

impl Interval {
    pub fn degenerate_zero() -> Self {
        Self {
            kind: IntervalKind::DegenerateZero,
            lo: GridEndpoint::ZERO,
            hi: GridEndpoint::ZERO,
        }
    }

    pub fn half_open(lo: GridEndpoint, hi: GridEndpoint) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidInterval(format!(
                "half-open ({lo}, {hi}] needs lo < hi"
            )));
        }
        Ok(Self {
            kind: IntervalKind::HalfOpen,
            lo,
            hi,
        })
    }

    pub fn closed_from_zero(hi: GridEndpoint) -> Result<Self> {
        if hi == GridEndpoint::ZERO {
            return Err(Error::InvalidInterval(
                "[0, 0] must be written as {0}".into(),
            ));
        }
        Ok(Self {
            kind: IntervalKind::ClosedFromZero,
            lo: GridEndpoint::ZERO,
            hi,
        })
    }

    /// Re-validates a deserialized interval.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            IntervalKind::DegenerateZero => self.lo.0 == 0 && self.hi.0 == 0,
            IntervalKind::HalfOpen => self.lo < self.hi,
            IntervalKind::ClosedFromZero => self.lo.0 == 0 && self.hi.0 > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInterval(format!("malformed interval {self}")))
        }
    }

    pub fn kind(&self) -> IntervalKind {
        self.kind
    }

    pub fn lo(&self) -> GridEndpoint {
        self.lo
    }

    pub fn hi(&self) -> GridEndpoint {
        self.hi
    }

    /// Width in grid units.
    pub fn width(&self) -> u32 {
        self.hi.0 - self.lo.0
    }

    pub fn contains_zero(&self) -> bool {
        self.kind != IntervalKind::HalfOpen
    }

    /// Union of two abutting intervals, `self` on the left.
    pub fn merge(&self, right: &Interval) -> Result<Interval> {
        if right.kind != IntervalKind::HalfOpen || right.lo != self.hi {
            return Err(Error::InvalidInterval(format!(
                "cannot merge {self} with non-abutting {right}"
            )));
        }
        match self.kind {
            IntervalKind::HalfOpen => Interval::half_open(self.lo, right.hi),
            IntervalKind::DegenerateZero | IntervalKind::ClosedFromZero => {
                Interval::closed_from_zero(right.hi)
            }
        }
    }

    pub fn to_real(&self, grid: &GridSpec) -> RealInterval {
        RealInterval {
            lo: grid.value(self.lo),
            hi: grid.value(self.hi),
            closed_lo: self.contains_zero(),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            IntervalKind::DegenerateZero => write!(f, "{{0}}"),
            IntervalKind::HalfOpen => write!(f, "({}, {}]", self.lo, self.hi),
            IntervalKind::ClosedFromZero => write!(f, "[0, {}]", self.hi),
        }
    }
}

/// Real-valued interval with a closed upper end; `closed_lo` selects `[lo, hi]` over `(lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealInterval {
    pub lo: f64,
    pub hi: f64,
    pub closed_lo: bool,
}

impl RealInterval {
    /// `[0, x]`.
    pub fn prefix(x: f64) -> Self {
        Self {
            lo: 0.0,
            hi: x,
            closed_lo: true,
        }
    }

    /// `(lo, hi]`.
    pub fn left_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            closed_lo: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.closed_lo {
            x >= self.lo
        } else {
            x > self.lo
        };
        above && x <= self.hi
    }

    /// Lebesgue measure of the intersection with `[a, b]`.
    pub fn overlap_length(&self, a: f64, b: f64) -> f64 {
        (self.hi.min(b) - self.lo.max(a)).max(0.0)
    }
}

/// Cartesian product of intervals over the first `dim` coordinates; empty is the neutral element.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperrectangle {
    intervals: Vec<Interval>,
}

impl Hyperrectangle {
    /// The 0-dimensional neutral element.
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn from_intervals(intervals: Vec<Interval>) -> Self {
        Self { intervals }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_unit(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// `self × interval`.
    pub fn extend(&self, interval: Interval) -> Self {
        let mut intervals = Vec::with_capacity(self.intervals.len() + 1);
        intervals.extend_from_slice(&self.intervals);
        intervals.push(interval);
        Self { intervals }
    }

    pub fn to_real(&self, grid: &GridSpec) -> Vec<RealInterval> {
        self.intervals.iter().map(|i| i.to_real(grid)).collect()
    }

    pub fn contains(&self, grid: &GridSpec, point: &[f64]) -> bool {
        self.intervals
            .iter()
            .zip(point)
            .all(|(i, &x)| i.to_real(grid).contains(x))
    }
}

impl fmt::Display for Hyperrectangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "1");
        }
        for (idx, i) in self.intervals.iter().enumerate() {
            if idx > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

/// Sorted partition of `[0,1]` whose first element is `{0}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct OrderedPartition {
    intervals: Vec<Interval>,
}

impl OrderedPartition {
    pub fn new(intervals: Vec<Interval>, grid: &GridSpec) -> Result<Self> {
        let partition = Self { intervals };
        partition.check(Some(grid.top()))?;
        Ok(partition)
    }

    /// `{{0}, (0, 1]}`.
    pub fn coarsest(grid: &GridSpec) -> Self {
        let whole = Interval::half_open(GridEndpoint::ZERO, grid.top()).expect("K >= 1");
        Self {
            intervals: vec![Interval::degenerate_zero(), whole],
        }
    }

    fn check(&self, top: Option<GridEndpoint>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPartition(msg));
        let Some(first) = self.intervals.first() else {
            return bad("partition is empty".into());
        };
        if first.kind() != IntervalKind::DegenerateZero {
            return bad(format!("partition starts with {first}, expected {{0}}"));
        }
        for pair in self.intervals.windows(2) {
            pair[1].validate()?;
            if pair[1].kind() != IntervalKind::HalfOpen || pair[1].lo() != pair[0].hi() {
                return bad(format!("{} does not abut {}", pair[1], pair[0]));
            }
        }
        let last = self.intervals.last().expect("nonempty").hi();
        if let Some(top) = top {
            if last != top {
                return bad(format!("partition ends at {last}, expected {top}"));
            }
        } else if last == GridEndpoint::ZERO || !last.0.is_power_of_two() {
            return bad(format!("partition ends at {last}, not a grid resolution"));
        }
        Ok(())
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Every endpoint occurring in the partition, ascending and deduplicated.
    pub fn extremes(&self) -> Vec<GridEndpoint> {
        // Abutting intervals: the right endpoints already enumerate every extreme.
        self.intervals.iter().map(Interval::hi).collect()
    }

    /// 1-based index `k` such that `x` is the right endpoint of `I_k`.
    pub fn prefix_index(&self, x: GridEndpoint) -> Option<usize> {
        self.intervals
            .binary_search_by(|i| i.hi().cmp(&x))
            .ok()
            .map(|idx| idx + 1)
    }
}

impl TryFrom<Vec<Interval>> for OrderedPartition {
    type Error = Error;

    fn try_from(intervals: Vec<Interval>) -> Result<Self> {
        let partition = Self { intervals };
        partition.check(None)?;
        Ok(partition)
    }
}

impl From<OrderedPartition> for Vec<Interval> {
    fn from(p: OrderedPartition) -> Self {
        p.intervals
    }
}

/// `max { z in extremes : z <= x }`, falling back to 0.
pub fn project_down(x: GridEndpoint, extremes: &[GridEndpoint]) -> GridEndpoint {
    match extremes.binary_search(&x) {
        Ok(idx) => extremes[idx],
        Err(0) => GridEndpoint::ZERO,
        Err(idx) => extremes[idx - 1],
    }
}
