use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dist::InterArrivalModel;
use crate::rng::RngStream;

/// Which copy of the renewal process an inter-arrival was assigned to. The
/// first copy is the one ahead at the start of the walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    First,
    Second,
}

/// Result of driving the two copies to within `R` of each other.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step1Outcome {
    /// Continuous time elapsed, measured on the trailing copy.
    #[serde(rename = "T_R")]
    pub t_r: f64,
    /// `Σ X_i 1{Y_{i−1} ≥ 0}`, the upper bound used by the Lyapunov argument.
    #[serde(rename = "T_R_bar")]
    pub t_r_bar: f64,
    #[serde(rename = "D_R")]
    pub d_r: f64,
    pub steps: u64,
    /// Signed terminal gap `Y_τ`; negative when the copies swapped order.
    pub y_end: f64,
}

/// Default cap on the number of walk steps.
pub const WALK_STEP_CAP: u64 = 1_000_000_000;

pub fn step1_walk(model: &InterArrivalModel, x: f64, r: f64, rng: &mut RngStream) -> Result<Step1Outcome, SimError> {
    walk_observed(model, x, r, WALK_STEP_CAP, rng, |_, _| {})
}

/// The walk `Y_{n+1} = Y_n ∓ X_{n+1}`, stopped once `|Y| ≤ R`. Each draw is
/// reported to `on_step` together with the copy it extends.
pub(crate) fn walk_observed<F: FnMut(Side, f64)>(
    model: &InterArrivalModel,
    x: f64,
    r: f64,
    cap: u64,
    rng: &mut RngStream,
    mut on_step: F,
) -> Result<Step1Outcome, SimError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(SimError::InvalidInput(format!("threshold R must be positive, got {r}")));
    }
    if !x.is_finite() {
        return Err(SimError::InvalidInput(format!("initial gap must be finite, got {x}")));
    }
    let mut y = x;
    let mut second = 0.0;
    let mut steps = 0;
    while y.abs() > r {
        if steps == cap {
            return Err(SimError::WalkCap { steps, x, r });
        }
        let step = model.sample(rng);
        if y >= 0.0 {
            second += step;
            y -= step;
            on_step(Side::Second, step);
        } else {
            y += step;
            on_step(Side::First, step);
        }
        steps += 1;
    }
    Ok(Step1Outcome {
        t_r: if y < 0.0 { second + y } else { second },
        t_r_bar: second,
        d_r: y.abs(),
        steps,
        y_end: y,
    })
}

/// The first `per_copy` inter-arrivals handed to each copy by an unstopped
/// walk from `x`. Each sequence should be an i.i.d. sample of X.
pub fn step1_copy_sequences(
    model: &InterArrivalModel,
    x: f64,
    per_copy: usize,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    let mut first = Vec::with_capacity(per_copy);
    let mut second = Vec::with_capacity(per_copy);
    let mut y = x;
    while first.len() < per_copy || second.len() < per_copy {
        let step = model.sample(rng);
        if y >= 0.0 {
            y -= step;
            if second.len() < per_copy {
                second.push(step);
            }
        } else {
            y += step;
            if first.len() < per_copy {
                first.push(step);
            }
        }
    }
    (first, second)
}
