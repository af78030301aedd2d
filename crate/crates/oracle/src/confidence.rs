//! Log-odds confidence of the target token.

use crate::error::{Error, Result};

pub const DEFAULT_P_CLAMP: f64 = 1e-6;

/// `log(p / (1 - p))` after clamping `p` into `[clamp, 1 - clamp]`.
///
/// `p` must lie strictly inside `(0, 1)` before clamping.
pub fn confidence_from_prob(p: f64, clamp: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Data(format!("probability {p} is outside (0, 1)")));
    }
    if !(clamp > 0.0 && clamp < 0.5) {
        return Err(Error::Config(format!(
            "p_clamp must be in (0, 0.5), got {clamp}"
        )));
    }
    let p = p.clamp(clamp, 1.0 - clamp);
    Ok((p / (1.0 - p)).ln())
}
