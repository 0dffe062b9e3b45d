//! Deterministic random streams keyed by role and entity indices.
//!
//! Every random quantity in a simulation is drawn from a stream derived from
//! the master seed, a [`Domain`] tag and up to three indices (drop, block,
//! entity, ...). Results therefore never depend on scheduling order.

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, C64, CMat};

/// Role of a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Positions = 1,
    Shadowing = 2,
    Channels = 3,
    PilotNoise = 4,
    Instances = 5,
    Search = 6,
}

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(master, domain, a, b, c)`.
pub fn stream(master: u64, domain: Domain, a: u64, b: u64, c: u64) -> StreamRng {
    let mut s = master;
    let mut mix = splitmix(&mut s);
    for v in [domain as u64, a, b, c] {
        let mut t = mix ^ v.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        mix = splitmix(&mut t);
    }
    let mut seed = [0u8; 32];
    let mut st = mix;
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut st).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// One draw from `CN(0, var)`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var * 0.5).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(s * re, s * im)
}

/// `rows × cols` matrix of i.i.d. `CN(0, var)` entries, filled column by column.
pub fn complex_gaussian_matrix<R: rand::Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    var: f64,
) -> CMat {
    let mut m = DMatrix::zeros(rows, cols);
    for z in m.iter_mut() {
        *z = complex_gaussian(rng, var);
    }
    m
}

/// One draw from `N(0, 1)`.
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

