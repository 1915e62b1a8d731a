//! Asymptotic analysis of second-order evolution equations
//! `a'' - gamma a' + N(a) + G1(a') + G2(a'') = 0` written in an eigenbasis of
//! the linearization, together with the fits applied to flow traces:
//! windowed growth regimes, Lojasiewicz exponents and convergence rates.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("step {dt} does not resolve the fastest root: dt * max|lambda| = {product} >= 0.1")]
    Stiffness { dt: f64, product: f64 },
    #[error("samples span {span} but the window length is {window}")]
    WindowTooShort { span: f64, window: f64 },
    #[error("energy gaps span only {decades:.3} decades (need 2)")]
    DegenerateWindow { decades: f64 },
    #[error("distance is not decaying: trailing mean {trailing:e} exceeds previous mean {previous:e}")]
    NotDecaying { trailing: f64, previous: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{0}")]
    InvalidInput(String),
}

/// Roots `lambda^± = (gamma ± sqrt(gamma^2 - 4 mu)) / 2` as
/// `(re+, re-, im)`, where `im >= 0` is the imaginary part of `lambda^+`.
fn roots(gamma: f64, mu: f64) -> (f64, f64, f64) {
    let disc = gamma * gamma - 4.0 * mu;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (0.5 * (gamma + s), 0.5 * (gamma - s), 0.0)
    } else {
        (0.5 * gamma, 0.5 * gamma, 0.5 * (-disc).sqrt())
    }
}

/// Closed-form solution of `a'' - gamma a' + mu a = 0`:
/// `(a cos(alpha t) - b sin(alpha t)) e^{gamma t / 2}` for complex roots,
/// `(a + b t) e^{gamma t / 2}` for a double root and
/// `a e^{lambda^+ t} + b e^{lambda^- t}` for distinct real roots.
pub fn linear_solution(gamma: f64, mu: f64, a: f64, b: f64, t: f64) -> f64 {
    linear_solution_with_derivatives(gamma, mu, a, b, t)[0]
}

/// Value, first and second derivative of [`linear_solution`].
pub fn linear_solution_with_derivatives(gamma: f64, mu: f64, a: f64, b: f64, t: f64) -> [f64; 3] {
    let disc = gamma * gamma - 4.0 * mu;
    let h = 0.5 * gamma;
    if disc < 0.0 {
        let w = 0.5 * (-disc).sqrt();
        let e = (h * t).exp();
        let (c, s) = ((w * t).cos(), (w * t).sin());
        let p = a * c - b * s;
        let dp = -w * (a * s + b * c);
        let ddp = -w * w * p;
        [p * e, (dp + h * p) * e, (ddp + 2.0 * h * dp + h * h * p) * e]
    } else if disc == 0.0 {
        let e = (h * t).exp();
        let p = a + b * t;
        [p * e, (b + h * p) * e, (2.0 * h * b + h * h * p) * e]
    } else {
        let (lp, lm, _) = roots(gamma, mu);
        let (ep, em) = ((lp * t).exp(), (lm * t).exp());
        [
            a * ep + b * em,
            a * lp * ep + b * lm * em,
            a * lp * lp * ep + b * lm * lm * em,
        ]
    }
}

/// Modal coefficients `(a, b)` of [`linear_solution`] that match the
/// initial data `(a(0), a'(0))`.
pub fn modal_constants(gamma: f64, mu: f64, a0: f64, v0: f64) -> (f64, f64) {
    let disc = gamma * gamma - 4.0 * mu;
    let h = 0.5 * gamma;
    if disc < 0.0 {
        let w = 0.5 * (-disc).sqrt();
        (a0, -(v0 - h * a0) / w)
    } else if disc == 0.0 {
        (a0, v0 - h * a0)
    } else {
        let (lp, lm, _) = roots(gamma, mu);
        let a = (v0 - lm * a0) / (lp - lm);
        (a, a0 - a)
    }
}

type Hook = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Modal form of the evolution equation: `mu` are the eigenvalues of the
/// linearization, `coeffs` the `(a_i, a_i')` state, and the optional hooks
/// are `G0 = N - L`, `G1` and `G2` acting on coefficient vectors.
pub struct SpectralEvolution {
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub coeffs: Vec<(f64, f64)>,
    pub g0: Option<Hook>,
    pub g1: Option<Hook>,
    pub g2: Option<Hook>,
}

impl std::fmt::Debug for SpectralEvolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralEvolution")
            .field("gamma", &self.gamma)
            .field("mu", &self.mu)
            .field("coeffs", &self.coeffs)
            .field("hooks", &[self.g0.is_some(), self.g1.is_some(), self.g2.is_some()])
            .finish()
    }
}

impl SpectralEvolution {
    pub fn linear(gamma: f64, mu: Vec<f64>, coeffs: Vec<(f64, f64)>) -> Self {
        SpectralEvolution {
            gamma,
            mu,
            coeffs,
            g0: None,
            g1: None,
            g2: None,
        }
    }

    pub fn with_g0(mut self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.g0 = Some(Box::new(f));
        self
    }

    pub fn with_g1(mut self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.g1 = Some(Box::new(f));
        self
    }

    pub fn with_g2(mut self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.g2 = Some(Box::new(f));
        self
    }

    /// Largest `|lambda^±|` over the modes.
    pub fn max_rate(&self) -> f64 {
        self.mu
            .iter()
            .map(|&m| {
                let (p, q, w) = roots(self.gamma, m);
                p.hypot(w).max(q.hypot(w))
            })
            .fold(0.0, f64::max)
    }

    fn acceleration(&self, a: &[f64], v: &[f64]) -> Vec<f64> {
        let mut acc: Vec<f64> = (0..a.len()).map(|i| self.gamma * v[i] - self.mu[i] * a[i]).collect();
        let mut subtract = |h: &Option<Hook>, x: &[f64]| {
            if let Some(h) = h {
                for (o, y) in acc.iter_mut().zip(h(x)) {
                    *o -= y;
                }
            }
        };
        subtract(&self.g0, a);
        subtract(&self.g1, v);
        if let Some(g2) = &self.g2 {
            // One fixed-point sweep on the acceleration.
            let first = acc.clone();
            for (o, y) in acc.iter_mut().zip(g2(&first)) {
                *o -= y;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `positions[k][i]` is mode `i` at `times[k]`.
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl Trajectory {
    /// `||a(t)||` per sample for an L2-orthonormal eigenbasis.
    pub fn norms(&self) -> Vec<f64> {
        self.positions.iter().map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
    }
}

/// Integrates the first-order system for `(a, a')` with the classical
/// four-stage scheme.
pub fn solve_second_order(ev: &SpectralEvolution, t_span: (f64, f64), dt: f64) -> Result<Trajectory, AsymptoticsError> {
    if ev.coeffs.len() != ev.mu.len() {
        return Err(AsymptoticsError::InvalidInput(format!(
            "{} modes but {} initial states",
            ev.mu.len(),
            ev.coeffs.len()
        )));
    }
    if !(dt > 0.0) || !(t_span.1 >= t_span.0) {
        return Err(AsymptoticsError::InvalidInput("need dt > 0 and t1 >= t0".into()));
    }
    let product = dt * ev.max_rate();
    if product >= 0.1 {
        return Err(AsymptoticsError::Stiffness { dt, product });
    }
    let steps = ((t_span.1 - t_span.0) / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { (t_span.1 - t_span.0) / steps as f64 } else { 0.0 };
    let mut a: Vec<f64> = ev.coeffs.iter().map(|c| c.0).collect();
    let mut v: Vec<f64> = ev.coeffs.iter().map(|c| c.1).collect();
    let mut traj = Trajectory {
        times: vec![t_span.0],
        positions: vec![a.clone()],
        velocities: vec![v.clone()],
    };
    let shift = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + s * k).collect() };
    for step in 1..=steps {
        let k1a = v.clone();
        let k1v = ev.acceleration(&a, &v);
        let (a2, v2) = (shift(&a, &k1a, 0.5 * h), shift(&v, &k1v, 0.5 * h));
        let k2v = ev.acceleration(&a2, &v2);
        let (a3, v3) = (shift(&a, &v2, 0.5 * h), shift(&v, &k2v, 0.5 * h));
        let k3v = ev.acceleration(&a3, &v3);
        let (a4, v4) = (shift(&a, &v3, h), shift(&v, &k3v, h));
        let k4v = ev.acceleration(&a4, &v4);
        for i in 0..a.len() {
            a[i] += h / 6.0 * (k1a[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        traj.times.push(t_span.0 + step as f64 * h);
        traj.positions.push(a.clone());
        traj.velocities.push(v.clone());
    }
    Ok(traj)
}

/// `S(j) = max { ||a(t)|| : t in [t0 + (j-1) L, t0 + j L] }` for the
/// complete windows covered by the samples.
pub fn window_sup_norms(times: &[f64], norms: &[f64], window: f64) -> Result<Vec<f64>, AsymptoticsError> {
    if times.len() != norms.len() || times.is_empty() {
        return Err(AsymptoticsError::InvalidInput("times and norms must be nonempty and of equal length".into()));
    }
    if !(window > 0.0) {
        return Err(AsymptoticsError::InvalidInput("window length must be positive".into()));
    }
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let count = (span / window + 1e-9).floor() as usize;
    if count == 0 {
        return Err(AsymptoticsError::WindowTooShort { span, window });
    }
    let slack = 1e-9 * window;
    let mut s = vec![f64::NEG_INFINITY; count];
    for (t, n) in times.iter().zip(norms) {
        let x = t - t0;
        for (j, sj) in s.iter_mut().enumerate() {
            let (lo, hi) = (j as f64 * window, (j + 1) as f64 * window);
            if x >= lo - slack && x <= hi + slack {
                *sj = sj.max(*n);
            }
        }
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(AsymptoticsError::WindowTooShort { span, window });
    }
    Ok(s)
}

/// Window index or the sentinel for an empty minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeIndex {
    Window(usize),
    /// No window stops decaying.
    AllDecay,
    /// No terminal growth phase.
    None,
}

impl RegimeIndex {
    pub fn window(self) -> Option<usize> {
        match self {
            RegimeIndex::Window(j) => Some(j),
            _ => None,
        }
    }
}

impl Serialize for RegimeIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            RegimeIndex::Window(j) => s.serialize_u64(*j as u64),
            RegimeIndex::AllDecay => s.serialize_str("all_decay"),
            RegimeIndex::None => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for RegimeIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = RegimeIndex;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a window index, \"all_decay\" or \"none\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<RegimeIndex, E> {
                Ok(RegimeIndex::Window(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<RegimeIndex, E> {
                usize::try_from(v).map(RegimeIndex::Window).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<RegimeIndex, E> {
                match v {
                    "all_decay" => Ok(RegimeIndex::AllDecay),
                    "none" => Ok(RegimeIndex::None),
                    other => Err(E::custom(format!("unknown sentinel `{other}`"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub window_len: f64,
    pub sup_norms: Vec<f64>,
    pub k1: RegimeIndex,
    pub k2: RegimeIndex,
    pub delta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub eta: f64,
    /// Entry `j - 1` concerns the pair of windows `(j, j + 1)`:
    /// `S(j+1) <= e^{-(delta2 - delta) L} S(j)`.
    pub decay_holds: Vec<bool>,
    /// `S(j+1) / S(j)` within `[1 / (1 + eta), 1 + eta]`.
    pub plateau_holds: Vec<bool>,
    /// `S(j+1) >= e^{(delta1 - delta) L} S(j)`.
    pub growth_holds: Vec<bool>,
}

/// Splits the windows into a decay phase (`j < k1`), a slowly varying
/// phase and a growth phase (`j >= k2`).
///
/// `k1` is the first window that does not decay into its successor at rate
/// `delta2 - delta`. `k2` is the first window at or after `k1` from which
/// every later pair grows at rate `delta1 - delta`; on clean data this is
/// the first growing pair.
pub fn classify_regimes(
    s: &[f64],
    delta1: f64,
    delta2: f64,
    delta: f64,
    window: f64,
    eta: f64,
) -> Result<RegimeReport, AsymptoticsError> {
    if s.len() < 2 {
        return Err(AsymptoticsError::TooFewSamples { needed: 2, got: s.len() });
    }
    if !(delta > 0.0 && delta < 0.25 * delta1.min(delta2)) {
        return Err(AsymptoticsError::InvalidInput(format!(
            "delta = {delta} must lie in (0, min(delta1, delta2) / 4)"
        )));
    }
    if s.iter().any(|v| !(*v >= 0.0)) {
        return Err(AsymptoticsError::InvalidInput("sup norms must be nonnegative".into()));
    }
    let decay = (-(delta2 - delta) * window).exp();
    let growth = ((delta1 - delta) * window).exp();
    let pairs = s.len() - 1;
    let decay_holds: Vec<bool> = (0..pairs).map(|i| s[i + 1] <= decay * s[i]).collect();
    let growth_holds: Vec<bool> = (0..pairs).map(|i| s[i + 1] >= growth * s[i]).collect();
    let plateau_holds: Vec<bool> = (0..pairs)
        .map(|i| s[i + 1] <= (1.0 + eta) * s[i] && s[i] <= (1.0 + eta) * s[i + 1])
        .collect();
    let k1 = match decay_holds.iter().position(|d| !d) {
        Some(i) => RegimeIndex::Window(i + 1),
        None => RegimeIndex::AllDecay,
    };
    let k2 = match k1 {
        RegimeIndex::Window(k) => {
            let mut start = None;
            for i in (k - 1..pairs).rev() {
                if growth_holds[i] {
                    start = Some(i + 1);
                } else {
                    break;
                }
            }
            start.map_or(RegimeIndex::None, RegimeIndex::Window)
        }
        _ => RegimeIndex::None,
    };
    Ok(RegimeReport {
        window_len: window,
        sup_norms: s.to_vec(),
        k1,
        k2,
        delta,
        delta1,
        delta2,
        eta,
        decay_holds,
        plateau_holds,
        growth_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LojasiewiczFit {
    pub theta: f64,
    /// Unclamped `1 - slope`.
    pub raw_theta: f64,
    pub out_of_range: bool,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// Range of `E - E0` used.
    pub window: (f64, f64),
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    rss: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
        rss,
    }
}

/// Fits `log |M| = intercept + (1 - theta) log(E - E0)`. Samples with
/// `E <= E0` carry no information about the exponent and are skipped.
pub fn lojasiewicz_fit(energies: &[f64], grads: &[f64], e0: f64) -> Result<LojasiewiczFit, AsymptoticsError> {
    if energies.len() != grads.len() {
        return Err(AsymptoticsError::InvalidInput("energies and gradients differ in length".into()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = energies
        .iter()
        .zip(grads)
        .filter(|(e, g)| **e > e0 && **g > 0.0)
        .map(|(e, g)| ((e - e0).ln(), g.ln()))
        .unzip();
    if x.len() < 10 {
        return Err(AsymptoticsError::TooFewSamples { needed: 10, got: x.len() });
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let decades = (hi - lo) / std::f64::consts::LN_10;
    if decades < 2.0 {
        return Err(AsymptoticsError::DegenerateWindow { decades });
    }
    let fit = least_squares(&x, &y);
    let raw_theta = 1.0 - fit.slope;
    let out_of_range = !(raw_theta > 0.0 && raw_theta <= 0.5 + 1e-12);
    let theta = raw_theta.clamp(f64::MIN_POSITIVE, 0.5);
    Ok(LojasiewiczFit {
        theta,
        raw_theta,
        out_of_range,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        samples: x.len(),
        window: (lo.exp(), hi.exp()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    PowerT,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Preferred model.
    pub model: RateModel,
    /// Rate of the preferred model.
    pub alpha: f64,
    pub power_alpha: f64,
    pub exponential_alpha: f64,
    pub power_residual: f64,
    pub exponential_residual: f64,
    pub samples: usize,
}

/// Fits `d ~ t^{-alpha}` and `d ~ e^{-alpha t}` by least squares on
/// `log d` and prefers the smaller residual; ties go to the exponential.
/// Samples with `t <= 0` are dropped from the power fit only.
pub fn rate_fit(times: &[f64], dist: &[f64]) -> Result<RateFit, AsymptoticsError> {
    if times.len() != dist.len() {
        return Err(AsymptoticsError::InvalidInput("times and distances differ in length".into()));
    }
    if dist.len() < 20 {
        return Err(AsymptoticsError::TooFewSamples {
            needed: 20,
            got: dist.len(),
        });
    }
    if dist.iter().any(|d| !(*d > 0.0)) {
        return Err(AsymptoticsError::InvalidInput("distances must be positive".into()));
    }
    let q = dist.len() / 4;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let trailing = mean(&dist[dist.len() - q..]);
    let previous = mean(&dist[dist.len() - 2 * q..dist.len() - q]);
    if trailing > previous {
        return Err(AsymptoticsError::NotDecaying { trailing, previous });
    }
    let logd: Vec<f64> = dist.iter().map(|d| d.ln()).collect();
    let exp_fit = least_squares(times, &logd);
    let (lt, ld): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&logd)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, d)| (t.ln(), *d))
        .unzip();
    if lt.len() < 2 {
        return Err(AsymptoticsError::TooFewSamples { needed: 2, got: lt.len() });
    }
    let pow_fit = least_squares(&lt, &ld);
    // Residuals are compared per sample since the power fit may use fewer.
    let pr = pow_fit.rss / lt.len() as f64;
    let er = exp_fit.rss / times.len() as f64;
    let tie = (pr - er).abs() <= 1e-12 * (1.0 + pr.max(er));
    let model = if tie || er <= pr {
        RateModel::Exponential
    } else {
        RateModel::PowerT
    };
    let (power_alpha, exponential_alpha) = (-pow_fit.slope, -exp_fit.slope);
    Ok(RateFit {
        model,
        alpha: match model {
            RateModel::PowerT => power_alpha,
            RateModel::Exponential => exponential_alpha,
        },
        power_alpha,
        exponential_alpha,
        power_residual: pr,
        exponential_residual: er,
        samples: dist.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimonAudit {
    pub theta: f64,
    pub epsilon: f64,
    /// Smallest `C` with `int_{t1}^{t_end} |a'| dt <= C / theta
    /// (|E(t1) - E0|^theta + epsilon^theta)` over every `t1` of the window.
    pub c_min: f64,
    /// `c_min / theta`, the constant in front of the bracket.
    pub k_min: f64,
    /// Time of the binding sample.
    pub binding_time: f64,
    pub bound_holds_everywhere: bool,
}

/// Measures the constant of the integral bound along a trace with speeds
/// `|a'(t)|`. The integral is a trapezoid sum up to the last sample.
pub fn simon_integral_bound_audit(
    times: &[f64],
    speeds: &[f64],
    energies: &[f64],
    e0: f64,
    theta: f64,
    epsilon: f64,
) -> Result<SimonAudit, AsymptoticsError> {
    let n = times.len();
    if speeds.len() != n || energies.len() != n {
        return Err(AsymptoticsError::InvalidInput("trace columns differ in length".into()));
    }
    if n < 2 {
        return Err(AsymptoticsError::TooFewSamples { needed: 2, got: n });
    }
    if !(theta > 0.0) || !(epsilon >= 0.0) {
        return Err(AsymptoticsError::InvalidInput("need theta > 0 and epsilon >= 0".into()));
    }
    let mut tail = vec![0.0; n];
    for k in (0..n - 1).rev() {
        tail[k] = tail[k + 1] + 0.5 * (speeds[k] + speeds[k + 1]) * (times[k + 1] - times[k]);
    }
    let mut c_min: f64 = 0.0;
    let mut binding_time = times[0];
    let mut finite = true;
    for k in 0..n - 1 {
        let bracket = (energies[k] - e0).abs().powf(theta) + epsilon.powf(theta);
        let needed = if tail[k] == 0.0 {
            0.0
        } else if bracket > 0.0 {
            theta * tail[k] / bracket
        } else {
            finite = false;
            f64::INFINITY
        };
        if needed > c_min {
            c_min = needed;
            binding_time = times[k];
        }
    }
    Ok(SimonAudit {
        theta,
        epsilon,
        c_min,
        k_min: c_min / theta,
        binding_time,
        bound_holds_everywhere: finite,
    })
}
