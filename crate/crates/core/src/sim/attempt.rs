use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dist::{split_pair, InterArrivalModel, UniformComponent};
use crate::rng::RngStream;

/// One exact-coupling attempt from gap `z`: the trailing copy sits at 0 and
/// the leading one at `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step2Outcome {
    pub success: bool,
    /// Later of the two epochs reached at index `I`.
    #[serde(rename = "M")]
    pub m_max: f64,
    /// Earlier of the two epochs reached at index `I`.
    #[serde(rename = "m")]
    pub m_min: f64,
    #[serde(rename = "I")]
    pub i: u64,
    pub k: u64,
    /// The copy that trailed at the start ends up ahead.
    pub overtaken: bool,
}

pub fn step2_attempt(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    z: f64,
    rng: &mut RngStream,
) -> Result<Step2Outcome, SimError> {
    attempt_observed(model, comp, z, rng, |_, _| {})
}

/// Runs the attempt and reports each pair `(X′_j, X″_j)` to `on_pair`; `X′`
/// extends the trailing copy and `X″` the leading one.
///
/// The shift used at index `i < k` is `L`, and at `i = k` it is
/// `z − L(k−1) ∈ (0, L]`, so that on success the shifts add up to `z` exactly.
/// On success both epochs are reported as the trailing copy's, which removes
/// the rounding left by `U − shift`.
pub(crate) fn attempt_observed<F: FnMut(f64, f64)>(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    z: f64,
    rng: &mut RngStream,
    mut on_pair: F,
) -> Result<Step2Outcome, SimError> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(SimError::InvalidInput(format!("gap z must be nonnegative, got {z}")));
    }
    if z == 0.0 {
        return Ok(Step2Outcome {
            success: true,
            m_max: 0.0,
            m_min: 0.0,
            i: 0,
            k: 0,
            overtaken: false,
        });
    }
    let l = comp.l();
    let k = (z / l).ceil().max(1.0) as u64;
    let (mut trail, mut lead) = (0.0, z);
    let mut i = 0;
    let mut success = true;
    while i < k {
        i += 1;
        let shift = if i < k { l } else { z - l * (k - 1) as f64 };
        let draw = split_pair(model, comp, shift, rng)?;
        trail += draw.x_prime;
        lead += draw.x_second;
        on_pair(draw.x_prime, draw.x_second);
        if !draw.xi {
            success = false;
            break;
        }
    }
    if success {
        lead = trail;
    }
    Ok(Step2Outcome {
        success,
        m_max: trail.max(lead),
        m_min: trail.min(lead),
        i,
        k,
        overtaken: trail > lead,
    })
}
