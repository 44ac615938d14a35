use serde::{Deserialize, Serialize};

use super::SimError;

/// Least-squares fit of `A e^{−γt}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    /// Weighted residual norm `(Σ wᵢ (vᵢ − A e^{−γtᵢ})²)^{1/2}`.
    pub residual: f64,
    /// Points kept after dropping non-positive values.
    pub points: usize,
}

/// Fits `A e^{−γt}` by weighted least squares. A weighted log-linear
/// regression provides the start, then Levenberg–Marquardt refines it on the
/// original scale. Non-positive values are dropped with a warning.
pub fn fit_exponential_rate(t: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<ExpFit, SimError> {
    if t.len() != values.len() || weights.is_some_and(|w| w.len() != t.len()) {
        return Err(SimError::Fit("t, values and weights differ in length".into()));
    }
    let mut pts = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        if values[i] > 0.0 && values[i].is_finite() && t[i].is_finite() && w > 0.0 && w.is_finite() {
            pts.push((t[i], values[i], w));
        }
    }
    if pts.len() < t.len() {
        log::warn!("dropped {} non-positive or non-finite points from the fit", t.len() - pts.len());
    }
    if pts.len() < 3 {
        return Err(SimError::Fit(format!("need at least 3 positive points, got {}", pts.len())));
    }

    // weighted regression of ln v on t; the weight w v² keeps the log-scale
    // residuals comparable to the original-scale ones
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(ti, vi, wi) in &pts {
        let w = wi * vi * vi;
        let y = vi.ln();
        sw += w;
        st += w * ti;
        sy += w * y;
        stt += w * ti * ti;
        sty += w * ti * y;
    }
    let det = sw * stt - st * st;
    if !(det > 0.0) {
        return Err(SimError::Fit("fit needs at least two distinct times".into()));
    }
    let slope = (sw * sty - st * sy) / det;
    let mut a = ((sy - slope * st) / sw).exp();
    let mut g = -slope;

    let ssr = |a: f64, g: f64| pts.iter().map(|&(t, v, w)| w * (v - a * (-g * t).exp()).powi(2)).sum::<f64>();
    let mut cur = ssr(a, g);
    let mut mu = 1e-3;
    for _ in 0..500 {
        // normal equations of the linearized problem
        let (mut h11, mut h12, mut h22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(t, v, w) in &pts {
            let e = (-g * t).exp();
            let r = v - a * e;
            let (ja, jg) = (e, -a * t * e);
            h11 += w * ja * ja;
            h12 += w * ja * jg;
            h22 += w * jg * jg;
            g1 += w * ja * r;
            g2 += w * jg * r;
        }
        let mut improved = false;
        while mu < 1e12 {
            let (d11, d22) = (h11 * (1.0 + mu), h22 * (1.0 + mu));
            let det = d11 * d22 - h12 * h12;
            if !(det > 0.0) {
                mu *= 10.0;
                continue;
            }
            let da = (d22 * g1 - h12 * g2) / det;
            let dg = (d11 * g2 - h12 * g1) / det;
            let next = ssr(a + da, g + dg);
            if next.is_finite() && next <= cur {
                let converged = da.abs() <= 1e-15 * a.abs() && dg.abs() <= 1e-15 * g.abs().max(1e-300);
                a += da;
                g += dg;
                let gain = cur - next;
                cur = next;
                mu = (mu / 10.0).max(1e-12);
                improved = !converged && gain > 1e-30 * cur.max(1e-300);
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(ExpFit {
        amplitude: a,
        rate: g,
        residual: cur.sqrt(),
        points: pts.len(),
    })
}
