//! Shifted dyadic lattices.
//!
//! A lattice is described by a real shift `ω` and a word of parent-selection
//! bits. Below and at scale 0 the grid is `ω + n·2^k`. Going up from scale `k`
//! to `k + 1` the coarser grid keeps every other point of the finer one, and
//! bit `k` picks which half. With all bits zero this is the rigidly shifted
//! lattice `D + ω`.
//!
//! Endpoints are stored as an exact dyadic offset from `ω`, so every endpoint
//! is `ω + offset` with a single rounding and children partition their parent
//! exactly.

use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scales are limited so that `n·2^k + anchor` stays exactly representable.
pub const MAX_SCALE: i32 = 62;
pub const MIN_SCALE: i32 = -1000;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub scale: i32,
    pub index: i64,
    pub shift: f64,
    pub bits: u64,
}

impl PartialEq for DyadicInterval {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale
            && self.index == other.index
            && self.shift.to_bits() == other.shift.to_bits()
            && self.bits == other.bits
    }
}

impl Eq for DyadicInterval {}

impl Hash for DyadicInterval {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.scale.hash(state);
        self.index.hash(state);
        self.shift.to_bits().hash(state);
        self.bits.hash(state);
    }
}

impl PartialOrd for DyadicInterval {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Larger intervals first, then left to right.
impl Ord for DyadicInterval {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .scale
            .cmp(&self.scale)
            .then(self.left().total_cmp(&other.left()))
            .then(self.index.cmp(&other.index))
            .then(self.shift.total_cmp(&other.shift))
            .then(self.bits.cmp(&other.bits))
    }
}

fn anchor(bits: u64, k: i32) -> i128 {
    if k <= 0 {
        0
    } else if k >= 64 {
        bits as i128
    } else {
        (bits & ((1u64 << k) - 1)) as i128
    }
}

fn pow2(k: i32) -> f64 {
    (k as f64).exp2()
}

impl DyadicInterval {
    /// Offset of the `index`-th grid point of scale `k` from the shift, exact.
    fn grid_offset(scale: i32, index: i128, bits: u64) -> f64 {
        if scale <= 0 {
            index as f64 * pow2(scale)
        } else {
            (index * (1i128 << scale) + anchor(bits, scale)) as f64
        }
    }

    pub fn left_offset(&self) -> f64 {
        Self::grid_offset(self.scale, self.index as i128, self.bits)
    }

    pub fn right_offset(&self) -> f64 {
        Self::grid_offset(self.scale, self.index as i128 + 1, self.bits)
    }

    pub fn left(&self) -> f64 {
        self.shift + self.left_offset()
    }

    pub fn right(&self) -> f64 {
        self.shift + self.right_offset()
    }

    pub fn center(&self) -> f64 {
        self.shift + 0.5 * (self.left_offset() + self.right_offset())
    }

    pub fn length(&self) -> f64 {
        pow2(self.scale)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.left() <= x && x < self.right()
    }

    pub fn as_interval(&self) -> crate::measure::Interval {
        crate::measure::Interval::half_open(self.left(), self.right())
    }

    pub fn same_lattice(&self, other: &DyadicInterval) -> bool {
        self.shift.to_bits() == other.shift.to_bits() && self.bits == other.bits
    }

    pub fn parent(&self) -> DyadicInterval {
        let k = self.scale;
        let index = if k < 0 {
            self.index.div_euclid(2)
        } else {
            let l = self.index as i128 * (1i128 << k) + anchor(self.bits, k);
            (l - anchor(self.bits, k + 1)).div_euclid(1i128 << (k + 1)) as i64
        };
        DyadicInterval { scale: k + 1, index, ..*self }
    }

    pub fn ancestor(&self, generations: u32) -> DyadicInterval {
        (0..generations).fold(*self, |i, _| i.parent())
    }

    /// Left and right halves.
    pub fn children(&self) -> [DyadicInterval; 2] {
        let k = self.scale;
        let (a, b) = if k <= 0 {
            (2 * self.index, 2 * self.index + 1)
        } else {
            let l = self.index as i128 * (1i128 << k) + anchor(self.bits, k);
            let half = 1i128 << (k - 1);
            let base = anchor(self.bits, k - 1);
            (((l - base) / half) as i64, ((l + half - base) / half) as i64)
        };
        [
            DyadicInterval { scale: k - 1, index: a, ..*self },
            DyadicInterval { scale: k - 1, index: b, ..*self },
        ]
    }

    /// True when `other` is this interval or one of its descendants.
    pub fn contains_interval(&self, other: &DyadicInterval) -> bool {
        if self.same_lattice(other) {
            other.scale <= self.scale
                && other.ancestor((self.scale - other.scale) as u32) == *self
        } else {
            other.left() >= self.left() && other.right() <= self.right()
        }
    }

    /// Euclidean distance from the closed hull of `self` to the closed hull of
    /// `other`.
    pub fn distance_to(&self, other: &DyadicInterval) -> f64 {
        (other.left() - self.right()).max(self.left() - other.right()).max(0.0)
    }
}

/// `{left, midpoint, right}` of `J`.
pub fn special_points(j: &DyadicInterval) -> [f64; 3] {
    [j.left(), j.center(), j.right()]
}

/// Generation gap between nested intervals of one lattice.
pub fn tree_distance(a: &DyadicInterval, b: &DyadicInterval) -> Result<u32> {
    if !a.same_lattice(b) {
        return Err(Error::Incomparable);
    }
    let (small, big) = if a.scale <= b.scale { (a, b) } else { (b, a) };
    let gap = (big.scale - small.scale) as u32;
    if small.ancestor(gap) == *big {
        Ok(gap)
    } else {
        Err(Error::Incomparable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedLattice {
    pub shift: f64,
    pub bits: u64,
    pub k_min: i32,
    pub k_max: i32,
}

impl ShiftedLattice {
    pub fn new(shift: f64, bits: u64, k_min: i32, k_max: i32) -> Result<Self> {
        if !(shift.is_finite() && (-0.25..=0.25).contains(&shift)) {
            return Err(Error::ParameterOutOfRange(format!("shift {shift} outside [-1/4, 1/4]")));
        }
        if k_min > k_max || k_min < MIN_SCALE || k_max > MAX_SCALE {
            return Err(Error::ParameterOutOfRange(format!("scale range [{k_min}, {k_max}]")));
        }
        Ok(Self { shift, bits, k_min, k_max })
    }

    /// Rigid lattice `D + ω`.
    pub fn rigid(shift: f64, k_min: i32, k_max: i32) -> Result<Self> {
        Self::new(shift, 0, k_min, k_max)
    }

    pub fn with_range(&self, k_min: i32, k_max: i32) -> Result<Self> {
        Self::new(self.shift, self.bits, k_min, k_max)
    }

    fn check_scale(&self, k: i32) -> Result<()> {
        if k < self.k_min || k > self.k_max {
            return Err(Error::ScaleOutOfRange { scale: k, min: self.k_min, max: self.k_max });
        }
        Ok(())
    }

    pub fn interval(&self, scale: i32, index: i64) -> DyadicInterval {
        DyadicInterval { scale, index, shift: self.shift, bits: self.bits }
    }

    /// The lattice interval of scale `k` containing `x`.
    pub fn locate(&self, x: f64, k: i32) -> Result<DyadicInterval> {
        self.check_scale(k)?;
        let a = anchor(self.bits, k) as f64;
        let guess = ((x - self.shift - a) / pow2(k)).floor();
        let mut i = self.interval(k, guess as i64);
        while x < i.left() {
            i.index -= 1;
        }
        while x >= i.right() {
            i.index += 1;
        }
        Ok(i)
    }

    /// Scale-0 interval containing `1/2`; it contains `[1/4, 3/4]` for every
    /// admissible shift.
    pub fn root(&self) -> DyadicInterval {
        let mut i = self.interval(0, 0);
        while 0.5 < i.left() {
            i.index -= 1;
        }
        while 0.5 >= i.right() {
            i.index += 1;
        }
        i
    }

    /// Lattice intervals of scale `k` meeting `[lo, hi]`, left to right.
    pub fn intervals_meeting(&self, lo: f64, hi: f64, k: i32) -> Result<Vec<DyadicInterval>> {
        let first = self.locate(lo, k)?;
        let mut out = vec![first];
        let mut cur = first;
        while cur.right() <= hi {
            cur.index += 1;
            out.push(cur);
        }
        Ok(out)
    }
}

/// A point of the probability space of lattice pairs. `bits1`, `bits2` are the
/// parent-selection words of the two lattices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPair {
    pub omega1: f64,
    pub omega2: f64,
    pub bits1: u64,
    pub bits2: u64,
    pub seed: u64,
}

impl ShiftPair {
    /// Rigid pair used by hand examples and by the rigid lattice model.
    pub fn rigid(omega1: f64, omega2: f64) -> Self {
        Self { omega1, omega2, bits1: 0, bits2: 0, seed: 0 }
    }

    pub fn lattices(&self, k_min: i32, k_max: i32) -> Result<(ShiftedLattice, ShiftedLattice)> {
        Ok((
            ShiftedLattice::new(self.omega1, self.bits1, k_min, k_max)?,
            ShiftedLattice::new(self.omega2, self.bits2, k_min, k_max)?,
        ))
    }
}

/// Deterministic per seed; successive seeds give independent uniform samples
/// of `(-1/4, 1/4]²` together with independent parent-selection words.
pub fn sample_shift_pair(seed: u64) -> ShiftPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (-1/4, 1/4]: at ω = -1/4 the half-open root [-1/4, 3/4) would miss 3/4
    let omega1 = 0.25 - rng.gen_range(0.0..0.5);
    let omega2 = 0.25 - rng.gen_range(0.0..0.5);
    ShiftPair { omega1, omega2, bits1: rng.gen(), bits2: rng.gen(), seed }
}

/// Seed of the `index`-th independent sample of a run seeded with `base`
/// (a splitmix64 step, so neighbouring counters give unrelated streams).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scale window `[⌈log₂ gap⌉ − 2, ⌈log₂ diam⌉ + 2]` for sorted distinct
/// positions, widened to contain scale 0.
pub fn scale_window(positions: &[f64]) -> (i32, i32) {
    let gap = crate::measure::min_gap(positions);
    let diam = match (positions.first(), positions.last()) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => 0.0,
    };
    let k_min = gap.map_or(-2, |g| g.log2().ceil() as i32 - 2).clamp(MIN_SCALE, 0);
    let k_max = if diam > 0.0 { diam.log2().ceil() as i32 + 2 } else { 0 };
    (k_min, k_max.clamp(0, MAX_SCALE))
}
