//! Splittable, counter-based random streams.
//!
//! Every stream is identified by a root seed and a path of split indices. The
//! path is hashed into a 64-bit key, and the `i`-th output of a stream is a
//! pure function of `(key, i)`:
//!
//! ```text
//! out_i = mix64(key + (i + 1) * 0x9e3779b97f4a7c15)
//! ```
//!
//! with `mix64` the SplitMix64 finalizer. Splitting only derives a new key, so it
//! never touches the parent's counter and children can be handed to any thread.
//!
//! Two types share this machinery. [`RngStream`] carries the full path and is
//! what experiments pass around. [`Generator`] is the same state without the
//! path; estimators use it in their inner loops where allocating a path per draw
//! would dominate the cost. `stream.split(i)` and `stream.generator().split(i)`
//! produce identical output sequences.
//!
//! Normals use Box–Muller with both outputs consumed in order: a call that
//! finds no cached value draws two uniforms `u1, u2`, returns
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` and caches the matching sine branch for
//! the next call.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const ROOT_SALT: u64 = 0x6a09_e667_f3bc_c909;
const SPLIT_SALT: u64 = 0xbb67_ae85_84ca_a73b;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline(always)]
fn child_key(key: u64, index: u64) -> u64 {
    mix64(key.rotate_left(23) ^ mix64(index ^ SPLIT_SALT))
}

/// Path-free generator state: a key plus a draw counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    key: u64,
    counter: u64,
    // Pending sine branch of the last Box–Muller pair, stored as (radius, angle).
    spare: Option<(f64, f64)>,
}

impl Generator {
    #[inline]
    fn from_key(key: u64) -> Self {
        Generator {
            key,
            counter: 0,
            spare: None,
        }
    }

    /// Child generator for `index`. Pure: `self` is not advanced.
    #[inline]
    pub fn split(&self, index: u64) -> Generator {
        Generator::from_key(child_key(self.key, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-1, 1)`, defined as `2u - 1`.
    #[inline]
    pub fn next_symmetric_uniform(&mut self) -> f64 {
        2.0 * self.next_uniform() - 1.0
    }

    /// Standard normal draw (Box–Muller, both branches consumed in order).
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some((radius, angle)) = self.spare.take() {
            return radius * angle.sin();
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        let angle = TAU * u2;
        self.spare = Some((radius, angle));
        radius * angle.cos()
    }

    /// Number of 64-bit words drawn so far.
    pub fn draws(&self) -> u64 {
        self.counter
    }
}

/// A reproducible random stream identified by `(root_seed, path)`.
#[derive(Clone, PartialEq)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<u64>,
    gen: Generator,
}

impl RngStream {
    /// Root stream for `seed`, with an empty path.
    pub fn root(seed: u64) -> Self {
        RngStream {
            root_seed: seed,
            path: Vec::new(),
            gen: Generator::from_key(mix64(seed ^ ROOT_SALT)),
        }
    }

    /// Child stream with `index` appended to the path. Does not advance `self`.
    pub fn split(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        RngStream {
            root_seed: self.root_seed,
            path,
            gen: self.gen.split(index),
        }
    }

    /// Follows `indices` in order; `split_path(&[a, b])` equals `split(a).split(b)`.
    pub fn split_path(&self, indices: &[u64]) -> Self {
        indices.iter().fold(self.clone(), |s, &i| s.split(i))
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn id(&self) -> StreamId {
        StreamId {
            root_seed: self.root_seed,
            path: self.path.clone(),
        }
    }

    /// Path-free view of this stream at its current position.
    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn generator_mut(&mut self) -> &mut Generator {
        &mut self.gen
    }

    pub fn next_u64(&mut self) -> u64 {
        self.gen.next_u64()
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.gen.next_uniform()
    }

    pub fn next_symmetric_uniform(&mut self) -> f64 {
        self.gen.next_symmetric_uniform()
    }

    pub fn next_gaussian(&mut self) -> f64 {
        self.gen.next_gaussian()
    }
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("root_seed", &self.root_seed)
            .field("path", &self.path)
            .field("draws", &self.gen.counter)
            .finish()
    }
}

/// Identity of a stream, recorded alongside results.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub root_seed: u64,
    pub path: Vec<u64>,
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root_seed)?;
        for p in &self.path {
            write!(f, "/{p}")?;
        }
        Ok(())
    }
}
