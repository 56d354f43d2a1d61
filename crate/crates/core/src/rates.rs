//! Blow-up time/rate estimation from traces: fit m(t) = C (T-t)^{-gamma},
//! classify Type I vs Type II, and build the compensated series
//! (T-t)^{1/(p-2)} m(t) used by the singular-rate probe.

use crate::solver::{Outcome, PExponents, Trace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateFit {
    pub t_est: f64,
    pub gamma: f64,
    pub c_pref: f64,
    /// RMS of the log-model misfit over the fit window.
    pub residual: f64,
    pub n_points: usize,
    pub window: (f64, f64),
}

#[derive(Debug, Error)]
pub enum RateError {
    #[error("trace did not blow up (outcome {0:?})")]
    NotBlowUp(Outcome),
    #[error("insufficient span: m covers {got:.2} decades, need {need:.2}")]
    InsufficientSpan { got: f64, need: f64 },
    #[error("m is not eventually increasing")]
    NonMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupType {
    /// Rate at or below the self-similar exponent 1/(2(p-1)) — anomalous
    /// here, where gradient blow-up is always Type II.
    TypeISelfSimilar,
    TypeII,
}

/// Linear regression of log m on log(T - t); returns (gamma, log C, rms).
fn regress(ts: &[f64], log_m: &[f64], t_cap: f64) -> (f64, f64, f64) {
    let n = ts.len() as f64;
    let zs: Vec<f64> = ts.iter().map(|&t| (t_cap - t).ln()).collect();
    let zbar = zs.iter().sum::<f64>() / n;
    let ybar = log_m.iter().sum::<f64>() / n;
    let mut szz = 0.0;
    let mut szy = 0.0;
    for (z, y) in zs.iter().zip(log_m) {
        szz += (z - zbar) * (z - zbar);
        szy += (z - zbar) * (y - ybar);
    }
    let slope = szy / szz;
    let intercept = ybar - slope * zbar;
    let mut ss = 0.0;
    for (z, y) in zs.iter().zip(log_m) {
        let r = y - (intercept + slope * z);
        ss += r * r;
    }
    (-slope, intercept, (ss / n).sqrt())
}

/// Fit a power law m = C (T-t)^{-gamma} to the tail of a blow-up trace.
///
/// The window is the last `window_decades` decades of m before cutoff
/// (earlier transients contaminate the asymptotic exponent). T is found
/// by golden-section search on the rms residual of the inner closed-form
/// regression; the bracket starts at
/// [t_hi + dt_last, t_hi + (t_hi - t_lo)] and is widened by 2x up to 8
/// times if the optimum pins the upper edge.
pub fn fit_blowup(trace: &Trace, window_decades: f64) -> Result<RateFit, RateError> {
    // Underflow is accepted: it means time resolution, not the gradient
    // cap, ended the run — the trace is still a blow-up tail.
    if matches!(trace.outcome, Outcome::ReachedHorizon) {
        return Err(RateError::NotBlowUp(trace.outcome));
    }
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .filter(|s| s.m > 0.0)
        .map(|s| (s.t, s.m))
        .collect();
    if pts.len() < 8 {
        return Err(RateError::InsufficientSpan { got: 0.0, need: window_decades });
    }
    let m_end = pts.last().unwrap().1;
    let m_max = pts.iter().map(|p| p.1).fold(0.0f64, f64::max);
    if m_end < 0.5 * m_max {
        return Err(RateError::NonMonotone);
    }
    let span = (m_max / pts.first().unwrap().1).log10();
    if span < window_decades {
        return Err(RateError::InsufficientSpan { got: span, need: window_decades });
    }
    let cutoff = m_max / 10f64.powf(window_decades);
    // Window: contiguous tail above the cutoff.
    let start = match pts.iter().rposition(|p| p.1 < cutoff) {
        Some(j) => j + 1,
        None => 0,
    };
    let win = &pts[start..];
    if win.len() < 8 {
        return Err(RateError::InsufficientSpan { got: span, need: window_decades });
    }
    let inc = win.windows(2).filter(|w| w[1].1 > w[0].1).count();
    if (inc as f64) < 0.6 * (win.len() - 1) as f64 {
        return Err(RateError::NonMonotone);
    }
    let ts: Vec<f64> = win.iter().map(|p| p.0).collect();
    let log_m: Vec<f64> = win.iter().map(|p| p.1.ln()).collect();
    let t_lo = ts[0];
    let t_hi = *ts.last().unwrap();
    let dt_last = (t_hi - ts[ts.len() - 2]).max(1e-300);
    let mut a = t_hi + dt_last;
    let mut b = t_hi + (t_hi - t_lo).max(dt_last);
    let obj = |t_cap: f64| regress(&ts, &log_m, t_cap).2;
    let mut best = golden_min(&obj, a, b);
    let mut widenings = 0;
    while best > b - 0.01 * (b - a) && widenings < 8 {
        a = b;
        b = t_hi + (b - t_hi) * 2.0;
        best = golden_min(&obj, a, b);
        widenings += 1;
    }
    let (gamma, log_c, residual) = regress(&ts, &log_m, best);
    Ok(RateFit {
        t_est: best,
        gamma,
        c_pref: log_c.exp(),
        residual,
        n_points: win.len(),
        window: (t_lo, t_hi),
    })
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Type II iff the fitted rate clearly exceeds the self-similar exponent.
pub fn classify_type(fit: &RateFit, exps: &PExponents) -> BlowupType {
    if fit.gamma > exps.rate_selfsim + 0.1 {
        BlowupType::TypeII
    } else {
        BlowupType::TypeISelfSimilar
    }
}

/// Compensated series (T-t, (T-t)^{1/(p-2)} m(t)). Bounded for
/// sharp-rate solutions; divergent growth flags the more singular
/// (minimal) regime. Requires p > 2.
pub fn corrected_series(trace: &Trace, exps: &PExponents, t_est: f64) -> Vec<(f64, f64)> {
    let rate = exps.rate.expect("corrected_series requires p > 2");
    trace
        .samples
        .iter()
        .filter(|s| s.m > 0.0 && s.t < t_est)
        .map(|s| {
            let tau = t_est - s.t;
            (tau, tau.powf(rate) * s.m)
        })
        .collect()
}
