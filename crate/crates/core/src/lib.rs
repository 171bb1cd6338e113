//! Density evolution, EXIT-curve bounds and finite-length simulation for
//! LDPC ensembles over `GF(2)^m` symbols on the binary erasure channel.

pub mod cli;
pub mod density;
pub mod ensemble;
pub mod error;
pub mod exit;
pub mod gf2;
pub mod kernels;
pub mod sim;

pub use error::{Error, Result};

/// Formats with 6 significant digits, the precision used by every CSV output.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}
