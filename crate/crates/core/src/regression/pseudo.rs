use crate::error::{Error, Result};

/// Doubly-robust blip pseudo-outcome
/// `((2a - 1) / g_a) (y - Qbar_a) + Qbar_1 - Qbar_0`, with
/// `g_a = g_prob` when `a = 1` and `1 - g_prob` otherwise.
///
/// Its conditional mean given the context is the true blip when either the
/// supplied `Qbar` or the supplied `g_prob` is correct.
pub fn d1_pseudo_outcome(y: f64, a: u8, qbar1: f64, qbar0: f64, g_prob: f64, g_floor: f64) -> Result<f64> {
    if !(g_floor..=1.0 - g_floor).contains(&g_prob) {
        return Err(Error::Positivity { prob: g_prob, floor: g_floor, ceil: 1.0 - g_floor });
    }
    let (sign, g_a, q_a) = match a {
        1 => (1.0, g_prob, qbar1),
        0 => (-1.0, 1.0 - g_prob, qbar0),
        _ => return Err(Error::InvalidArgument(format!("treatment must be 0 or 1, got {a}"))),
    };
    Ok(sign / g_a * (y - q_a) + (qbar1 - qbar0))
}
