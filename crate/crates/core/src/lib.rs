//! Double-sided knowledge-graph recommender.
//!
//! Users are represented by layered propagation over the user-item
//! interaction graph ([`user_tower`]); items by relation attention over
//! sampled knowledge-graph neighbours ([`item_tower`]). Both towers are
//! trained jointly for click-through-rate prediction ([`model`]) and
//! evaluated with AUC/ACC plus rank-based algorithm comparison ([`eval`]).

pub mod autodiff;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod item_tower;
pub mod model;
pub mod user_tower;

pub use error::{Error, Result};

/// Negative slope of LeakyReLU shared by both towers.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derive an independent seed for a sub-stream (epoch, batch, sweep point…).
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    // splitmix64 over the stream coordinates
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &s in stream {
        z = z.wrapping_add(s.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
