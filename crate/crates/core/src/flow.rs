//! Yang-Mills gradient flow `dA/dt = -d_A^* F_A`, its gauge-fixed version
//! around a reference connection, the stopping dichotomy of a flow run, and
//! reconstruction of the raw flow from the gauge-fixed one.
//!
//! Both flows live in the left chart `U = exp(spacing * theta) U_base`. A
//! group-frame velocity `V` (so that `dU/dt = spacing * V U`) corresponds to
//! the chart velocity `dtheta/dt = J^{-1}(spacing * theta) V`, which is what
//! the four-stage scheme integrates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{left_jacobian_inv, AlgebraError};
use crate::functional::{ym_action, ym_action_and_gradient, ym_gradient};
use crate::gauge::{coulomb_project, green_operator, temporal_gauge_ode, CoulombOptions, GaugeError, KernelBasis};
use crate::lattice::{d_a0, d_a0_star, GaugeField, LatticeError, LinkField, OneForm, PathConnection, ZeroForm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("energy kept increasing after {halvings} step halvings (last dt {dt:e})")]
    StepRejectionExhausted { halvings: usize, dt: f64 },
    #[error("perturbation left the slice: |a|_sup = {norm} exceeds {radius}")]
    SliceExit { norm: f64, radius: f64 },
    #[error("invalid flow configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowScheme {
    ExplicitEuler,
    Rk4,
}

impl std::str::FromStr for FlowScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "explicit_euler" | "euler" => Ok(FlowScheme::ExplicitEuler),
            "rk4" => Ok(FlowScheme::Rk4),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowConfig {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: FlowScheme,
    pub grad_tol: f64,
    pub energy_drop_eps: f64,
    /// Largest admissible `spacing * dt * |velocity|_sup` of one step.
    pub trust_region: Option<f64>,
    pub stagnation_window: usize,
    /// Convergence needs `max - min <= stagnation_tol * (1 + dist)` for
    /// `dist_ref` over the trailing window.
    pub stagnation_tol: f64,
    pub max_halvings: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: 0.05,
            t_max: 100.0,
            scheme: FlowScheme::Rk4,
            grad_tol: 1e-6,
            energy_drop_eps: 1e-3,
            trust_region: None,
            stagnation_window: 50,
            stagnation_tol: 1e-6,
            max_halvings: 20,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self, spacing: f64) -> Result<(), FlowError> {
        let bound = 0.1 * spacing * spacing;
        if !(self.dt > 0.0) || self.dt > bound * (1.0 + 1e-12) {
            return Err(FlowError::Config(format!("dt = {} must lie in (0, {bound}]", self.dt)));
        }
        if !(self.t_max >= 0.0) {
            return Err(FlowError::Config("t_max must be nonnegative".into()));
        }
        for (name, v) in [
            ("grad_tol", self.grad_tol),
            ("energy_drop_eps", self.energy_drop_eps),
            ("stagnation_tol", self.stagnation_tol),
        ] {
            if !(v > 0.0) {
                return Err(FlowError::Config(format!("{name} must be positive")));
            }
        }
        if let Some(r) = self.trust_region {
            if !(r > 0.0) {
                return Err(FlowError::Config("trust_region must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Applies `J^{-1}(scale * theta)` link by link.
fn chart_velocity(theta: &OneForm, v: &OneForm, scale: f64) -> OneForm {
    let mut out = v.clone();
    for i in 0..v.cells() {
        out.set(i, left_jacobian_inv(&theta.get(i).scale(scale), &v.get(i)));
    }
    out
}

/// Chart increment of one step of a group-frame vector field `velocity`
/// started at `base`.
fn chart_increment(
    base: &LinkField,
    dt: f64,
    scheme: FlowScheme,
    first: &OneForm,
    velocity: &dyn Fn(&LinkField) -> Result<OneForm, FlowError>,
) -> Result<OneForm, FlowError> {
    match scheme {
        FlowScheme::ExplicitEuler => Ok(first.scaled(dt)),
        FlowScheme::Rk4 => {
            let s = base.lattice().spacing();
            let stage = |theta: OneForm| -> Result<OneForm, FlowError> {
                let v = velocity(&base.perturb(&theta, 1.0))?;
                Ok(chart_velocity(&theta, &v, s))
            };
            let k1 = first.clone();
            let k2 = stage(k1.scaled(0.5 * dt))?;
            let k3 = stage(k2.scaled(0.5 * dt))?;
            let k4 = stage(k3.scaled(dt))?;
            let mut theta = k1;
            theta.axpy(2.0, &k2);
            theta.axpy(2.0, &k3);
            theta.axpy(1.0, &k4);
            Ok(theta.scaled(dt / 6.0))
        }
    }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct AcceptedStep {
    pub field: LinkField,
    pub dt: f64,
    pub energy: f64,
    pub halvings: usize,
}

fn raw_velocity(u: &LinkField) -> Result<OneForm, FlowError> {
    Ok(-ym_gradient(u)?)
}

/// One monotone step of the raw flow. Steps that raise the energy by more
/// than `1e-12 (1 + |E|)` are retried with half the step size.
pub fn flow_step_checked(
    u: &LinkField,
    dt: f64,
    scheme: FlowScheme,
    trust_region: Option<f64>,
    max_halvings: usize,
) -> Result<AcceptedStep, FlowError> {
    let (energy, grad) = ym_action_and_gradient(u)?;
    let first = -grad;
    let mut dt = dt;
    if let Some(r) = trust_region {
        let speed = u.lattice().spacing() * first.norm_sup();
        if speed * dt > r {
            dt = r / speed;
        }
    }
    let tol = 1e-12 * (1.0 + energy.abs());
    for halvings in 0..=max_halvings {
        let attempt = chart_increment(u, dt, scheme, &first, &raw_velocity)
            .map(|theta| u.perturb(&theta, 1.0))
            .and_then(|v| Ok((ym_action(&v)?, v)));
        if let Ok((e_new, field)) = attempt {
            if e_new <= energy + tol {
                return Ok(AcceptedStep {
                    field,
                    dt,
                    energy: e_new,
                    halvings,
                });
            }
        }
        dt *= 0.5;
    }
    Err(FlowError::StepRejectionExhausted {
        halvings: max_halvings,
        dt: 2.0 * dt,
    })
}

/// `U' = perturb(U, -grad, dt)` for the Euler scheme, the Lie-group
/// four-stage scheme otherwise.
pub fn flow_step(u: &LinkField, dt: f64, scheme: FlowScheme) -> Result<LinkField, FlowError> {
    Ok(flow_step_checked(u, dt, scheme, None, 20)?.field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub dist_ref: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowOutcome {
    EnergyDrop,
    Converged,
    Timeout,
    Error,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    /// State before the first step; `dt` is zero.
    pub initial: FlowSample,
    /// One entry per accepted step.
    pub samples: Vec<FlowSample>,
    pub outcome: FlowOutcome,
    pub reference_energy: f64,
    pub terminal: LinkField,
    pub error: Option<FlowError>,
}

impl FlowTrace {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().unwrap_or(&self.initial)
    }

    /// Initial state followed by every accepted step.
    pub fn all_samples(&self) -> impl Iterator<Item = &FlowSample> {
        std::iter::once(&self.initial).chain(self.samples.iter())
    }
}

fn dist(u: &LinkField, reference: &LinkField) -> f64 {
    u.extract(reference).map(|a| a.norm()).unwrap_or(f64::NAN)
}

fn sample(u: &LinkField, reference: &LinkField, t: f64, dt: f64) -> Result<FlowSample, FlowError> {
    let (energy, grad) = ym_action_and_gradient(u)?;
    Ok(FlowSample {
        t,
        energy,
        grad_norm: grad.norm(),
        dist_ref: dist(u, reference),
        dt,
    })
}

/// Runs the raw flow until one of the alternatives of the dichotomy occurs.
pub fn run_flow(u_init: &LinkField, u_ref: &LinkField, cfg: &FlowConfig) -> Result<FlowTrace, FlowError> {
    run_flow_observed(u_init, u_ref, cfg, &mut |_, _| {})
}

/// As [`run_flow`], calling `observer(sample, field)` on the initial state
/// and after every accepted step.
pub fn run_flow_observed(
    u_init: &LinkField,
    u_ref: &LinkField,
    cfg: &FlowConfig,
    observer: &mut dyn FnMut(&FlowSample, &LinkField),
) -> Result<FlowTrace, FlowError> {
    cfg.validate(u_init.lattice().spacing())?;
    let reference_energy = ym_action(u_ref)?;
    let initial = sample(u_init, u_ref, 0.0, 0.0)?;
    observer(&initial, u_init);
    let mut trace = FlowTrace {
        initial,
        samples: Vec::new(),
        outcome: FlowOutcome::Timeout,
        reference_energy,
        terminal: u_init.clone(),
        error: None,
    };
    let mut current = initial;
    let mut u = u_init.clone();
    loop {
        if current.energy <= reference_energy - cfg.energy_drop_eps {
            trace.outcome = FlowOutcome::EnergyDrop;
            break;
        }
        if current.grad_norm < cfg.grad_tol && stagnant(&trace, cfg) {
            trace.outcome = FlowOutcome::Converged;
            break;
        }
        let remaining = cfg.t_max - current.t;
        if remaining <= 1e-12 * cfg.t_max.max(1.0) {
            trace.outcome = FlowOutcome::Timeout;
            break;
        }
        let step = match flow_step_checked(&u, cfg.dt.min(remaining), cfg.scheme, cfg.trust_region, cfg.max_halvings)
            .and_then(|s| Ok((sample(&s.field, u_ref, current.t + s.dt, s.dt)?, s)))
        {
            Ok(s) => s,
            Err(e) => {
                trace.outcome = FlowOutcome::Error;
                trace.error = Some(e);
                break;
            }
        };
        let (next, accepted) = step;
        u = accepted.field;
        current = next;
        observer(&current, &u);
        trace.samples.push(current);
    }
    trace.terminal = u;
    Ok(trace)
}

fn stagnant(trace: &FlowTrace, cfg: &FlowConfig) -> bool {
    let n = trace.samples.len();
    let take = cfg.stagnation_window.min(n + 1);
    let window = trace.all_samples().skip(n + 1 - take);
    let (lo, hi) = window.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.dist_ref), hi.max(s.dist_ref))
    });
    let last = trace.last().dist_ref;
    if !last.is_finite() {
        return true;
    }
    hi - lo <= cfg.stagnation_tol * (1.0 + last)
}

/// The gauge-fixed flow around a reference connection `U0`, with state the
/// Coulomb-slice perturbation `a`, `U = perturb(U0, a, 1)`:
///
/// `da/dt = J^{-1}(spacing a) (-grad E(U) + d_U beta) - d_{U0} d_{U0}^* a`,
///
/// where `beta` in `Ker(d_{U0})^perp` keeps the velocity tangent to the
/// slice. The constraint for `beta` is implicit; it is resolved by one
/// fixed-point sweep from `beta = 0`, and the state is projected back onto
/// the slice after every step.
#[derive(Debug, Clone)]
pub struct GaugeFixedFlow {
    u0: LinkField,
    kernel0: KernelBasis,
    coulomb: CoulombOptions,
    slice_radius: f64,
}

/// Right-hand side of the gauge-fixed flow at one state.
#[derive(Debug, Clone)]
pub struct GaugeFixedRhs {
    pub adot: OneForm,
    pub beta: ZeroForm,
}

impl GaugeFixedFlow {
    pub fn new(u0: &LinkField) -> Self {
        GaugeFixedFlow {
            u0: u0.clone(),
            kernel0: KernelBasis::new(u0),
            coulomb: CoulombOptions::default(),
            slice_radius: 0.3 / u0.lattice().spacing(),
        }
    }

    pub fn with_slice_radius(mut self, radius: f64) -> Self {
        self.slice_radius = radius;
        self
    }

    pub fn reference(&self) -> &LinkField {
        &self.u0
    }

    pub fn kernel(&self) -> &KernelBasis {
        &self.kernel0
    }

    fn correction(&self, u: &LinkField, a: &OneForm, v: &OneForm) -> Result<ZeroForm, FlowError> {
        let s = self.u0.lattice().spacing();
        let rhs = d_a0_star(v, u) - d_a0_star(&chart_velocity(a, v, s), &self.u0);
        Ok(green_operator(&rhs, u, &self.kernel0)?)
    }

    fn assemble(&self, a: &OneForm, v: &OneForm) -> OneForm {
        let s = self.u0.lattice().spacing();
        chart_velocity(a, v, s) - d_a0(&d_a0_star(a, &self.u0), &self.u0)
    }

    pub fn rhs(&self, a: &OneForm) -> Result<GaugeFixedRhs, FlowError> {
        let u = self.u0.perturb(a, 1.0);
        let v0 = -ym_gradient(&u)?;
        let beta = self.correction(&u, a, &v0)?;
        let v = v0 + d_a0(&beta, &u);
        Ok(GaugeFixedRhs {
            adot: self.assemble(a, &v),
            beta,
        })
    }

    /// `|beta_2 - beta_1|` for the first two fixed-point sweeps. It scales
    /// like `|a|^3`, one order above `beta` itself.
    pub fn second_sweep_change(&self, a: &OneForm) -> Result<f64, FlowError> {
        let u = self.u0.perturb(a, 1.0);
        let v0 = -ym_gradient(&u)?;
        let b1 = self.correction(&u, a, &v0)?;
        let v1 = v0.clone() + d_a0(&b1, &u);
        let b2 = self.correction(&u, a, &v1)?;
        Ok((b2 - b1).norm())
    }

    /// Slice residual `|d_{U0}^* a|`.
    pub fn constraint(&self, a: &OneForm) -> f64 {
        d_a0_star(a, &self.u0).norm()
    }

    /// Advances `a` by `dt` and projects the result back onto the slice.
    pub fn step(&self, a: &OneForm, dt: f64, scheme: FlowScheme) -> Result<OneForm, FlowError> {
        let f = |x: &OneForm| -> Result<OneForm, FlowError> { Ok(self.rhs(x)?.adot) };
        let k1 = f(a)?;
        let next = match scheme {
            FlowScheme::ExplicitEuler => a.clone() + k1.scaled(dt),
            FlowScheme::Rk4 => {
                let k2 = f(&(a.clone() + k1.scaled(0.5 * dt)))?;
                let k3 = f(&(a.clone() + k2.scaled(0.5 * dt)))?;
                let k4 = f(&(a.clone() + k3.scaled(dt)))?;
                let mut inc = k1;
                inc.axpy(2.0, &k2);
                inc.axpy(2.0, &k3);
                inc.axpy(1.0, &k4);
                a.clone() + inc.scaled(dt / 6.0)
            }
        };
        let size = next.norm_sup();
        if size > self.slice_radius {
            return Err(FlowError::SliceExit {
                norm: size,
                radius: self.slice_radius,
            });
        }
        if self.constraint(&next) < self.coulomb.tol {
            return Ok(next);
        }
        let p = coulomb_project(&self.u0.perturb(&next, 1.0), &self.u0, &self.kernel0, &self.coulomb)?;
        Ok(p.projected.extract(&self.u0)?)
    }
}

/// One four-stage step of the gauge-fixed flow around `u0`.
pub fn gauge_fixed_flow_step(a: &OneForm, u0: &LinkField, dt: f64) -> Result<OneForm, FlowError> {
    GaugeFixedFlow::new(u0).step(a, dt, FlowScheme::Rk4)
}

/// Sampled gauge-fixed trajectory.
#[derive(Debug, Clone)]
pub struct GaugeFixedRun {
    /// `A(t) = perturb(U0, a(t), 1)` with the correction `beta(t)`.
    pub path: PathConnection,
    pub perturbations: Vec<OneForm>,
    /// `|d_{U0}^* a(t)|` per sample.
    pub constraint: Vec<f64>,
}

pub fn run_gauge_fixed_flow(
    flow: &GaugeFixedFlow,
    a_init: &OneForm,
    dt: f64,
    steps: usize,
    scheme: FlowScheme,
) -> Result<GaugeFixedRun, FlowError> {
    let mut a = a_init.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut conns = Vec::with_capacity(steps + 1);
    let mut betas = Vec::with_capacity(steps + 1);
    let mut perts = Vec::with_capacity(steps + 1);
    let mut constraint = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            a = flow.step(&a, dt, scheme)?;
        }
        times.push(k as f64 * dt);
        conns.push(flow.u0.perturb(&a, 1.0));
        betas.push(flow.rhs(&a)?.beta);
        constraint.push(flow.constraint(&a));
        perts.push(a.clone());
    }
    Ok(GaugeFixedRun {
        path: PathConnection::new(times, conns, betas)?,
        perturbations: perts,
        constraint,
    })
}

/// Undoes the gauge fixing: integrates `dg/dt = g beta` from the identity
/// and returns `(g(t), g(t)(A(t)))`.
pub fn reconstruct_flow(fixed: &PathConnection) -> Vec<(GaugeField, LinkField)> {
    let start = GaugeField::identity(fixed.lattice(), fixed.group());
    let gs = temporal_gauge_ode(&fixed.beta, &fixed.times, &start);
    gs.into_iter()
        .zip(&fixed.connections)
        .map(|(g, a)| {
            let raw = a.gauge_transform(&g);
            (g, raw)
        })
        .collect()
}

/// `|dA/dt + grad E(A)|` at the interior samples of a path, with the time
/// derivative taken from central differences of `log(U(t+h) U(t-h)^{-1})`.
pub fn raw_flow_residuals(times: &[f64], fields: &[LinkField]) -> Result<Vec<f64>, FlowError> {
    let mut out = Vec::new();
    if fields.len() < 3 {
        return Ok(out);
    }
    for k in 1..fields.len() - 1 {
        let h = times[k + 1] - times[k - 1];
        let velocity = fields[k + 1].extract(&fields[k - 1])?.scaled(1.0 / h);
        let grad = ym_gradient(&fields[k])?;
        out.push((velocity + grad).norm());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::GroupId;
    use crate::configs::{constant_flux_u1, embed_u1_in_su2};
    use crate::functional::spectrum;
    use crate::lattice::Lattice;
    use crate::rng::LabRng;
    use std::f64::consts::PI;

    fn u1_mode(l: &Lattice, k: [usize; 2], mu: usize, amp: f64) -> OneForm {
        let n = l.extents()[0] as f64;
        OneForm::from_fn(l, GroupId::U1, |i| {
            let c = l.coords(i / l.dim());
            let phase = 2.0 * PI * (k[0] * c[0] + k[1] * c[1]) as f64 / n;
            crate::algebra::AlgebraElement::U1(if i % l.dim() == mu { amp * phase.cos() } else { 0.0 })
        })
    }

    #[test]
    fn flat_is_fixed() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let u = LinkField::identity(&l, GroupId::Su2);
        assert_eq!(flow_step(&u, 0.05, FlowScheme::Rk4).unwrap(), u);
    }

    #[test]
    fn u1_euler_step_scales_transverse_mode() {
        let a = 1.0;
        let l = Lattice::cubic(2, 8, a).unwrap();
        // Mode along k = (1, 0) polarized in direction 1 is co-exact with
        // eigenvalue |kappa|^2 = 4 sin^2(pi/8) / a^2.
        let w = u1_mode(&l, [1, 0], 1, 0.01);
        let u = LinkField::identity(&l, GroupId::U1).perturb(&w, 1.0);
        let lam = 4.0 * (PI / 8.0).sin().powi(2) / (a * a);
        let dt = 0.05;
        let next = flow_step(&u, dt, FlowScheme::ExplicitEuler).unwrap();
        let got = next.extract(&LinkField::identity(&l, GroupId::U1)).unwrap();
        assert!((got - w.scaled(1.0 - lam * dt)).norm_sup() < 1e-12);
    }

    #[test]
    fn steps_never_raise_energy() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let mut rng = LabRng::new(21);
        for _ in 0..100 {
            let u = LinkField::random_near_identity(&l, GroupId::Su2, 0.8, &mut rng);
            let e0 = ym_action(&u).unwrap();
            let s = flow_step_checked(&u, 0.1, FlowScheme::Rk4, None, 20).unwrap();
            assert!(s.energy <= e0 + 1e-12 * (1.0 + e0));
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let mut rng = LabRng::new(22);
        let u = LinkField::random_near_identity(&l, GroupId::Su2, 2.0, &mut rng);
        let evolve = |n: usize| {
            let mut v = u.clone();
            for _ in 0..n {
                v = flow_step(&v, 0.4 / n as f64, FlowScheme::Rk4).unwrap();
            }
            v
        };
        let reference = evolve(64);
        let e1 = evolve(4).max_distance(&reference);
        let e2 = evolve(8).max_distance(&reference);
        assert!(e1 / e2 > 12.0, "{e1} {e2}");
    }

    #[test]
    fn dissipation_identity() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let mut rng = LabRng::new(23);
        let u = LinkField::random_near_identity(&l, GroupId::Su2, 0.5, &mut rng);
        let (e0, g) = ym_action_and_gradient(&u).unwrap();
        let dt = 1e-3;
        let e1 = ym_action(&flow_step(&u, dt, FlowScheme::Rk4).unwrap()).unwrap();
        let rate = (e1 - e0) / dt;
        let g2 = g.norm().powi(2);
        assert!((rate + 2.0 * g2).abs() / (2.0 * g2) < 0.05);
    }

    #[test]
    fn run_from_flat_converges_immediately() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let u = LinkField::identity(&l, GroupId::Su2);
        let trace = run_flow(&u, &u, &FlowConfig::default()).unwrap();
        assert_eq!(trace.outcome, FlowOutcome::Converged);
        assert!(trace.samples.is_empty());
        assert_eq!(trace.initial.dist_ref, 0.0);
    }

    #[test]
    fn small_su2_perturbation_converges() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let mut rng = LabRng::new(24);
        let u0 = LinkField::identity(&l, GroupId::Su2);
        let u = LinkField::random_near_identity(&l, GroupId::Su2, 0.05, &mut rng);
        let trace = run_flow(&u, &u0, &FlowConfig::default()).unwrap();
        assert_eq!(trace.outcome, FlowOutcome::Converged);
        assert!(trace.last().grad_norm < 1e-6);
        assert!(trace.last().energy < 1e-8);
        for w in trace.samples.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12 * (1.0 + w[0].energy));
        }
    }

    #[test]
    fn timeout_and_invalid_config() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let mut rng = LabRng::new(25);
        let u0 = LinkField::identity(&l, GroupId::Su2);
        let u = LinkField::random_near_identity(&l, GroupId::Su2, 0.5, &mut rng);
        let cfg = FlowConfig {
            t_max: 0.2,
            ..FlowConfig::default()
        };
        let trace = run_flow(&u, &u0, &cfg).unwrap();
        assert_eq!(trace.outcome, FlowOutcome::Timeout);
        assert_eq!(trace.samples.len(), 4);
        assert!((trace.last().t - 0.2).abs() < 1e-12);
        let bad = FlowConfig {
            dt: 0.5,
            ..FlowConfig::default()
        };
        assert!(matches!(run_flow(&u, &u0, &bad), Err(FlowError::Config(_))));
    }

    #[test]
    fn negative_mode_start_drops_energy() {
        let l = Lattice::new(&[4, 4, 2], 1.0).unwrap();
        let uc = embed_u1_in_su2(&constant_flux_u1(&l, 1));
        let spec = spectrum(&uc, 1).unwrap();
        assert!(spec.eigenvalues[0] < -0.1);
        let u = uc.perturb(&spec.eigenforms[0].scaled(1e-3), 1.0);
        let cfg = FlowConfig {
            energy_drop_eps: 1e-2,
            ..FlowConfig::default()
        };
        let trace = run_flow(&u, &uc, &cfg).unwrap();
        assert_eq!(trace.outcome, FlowOutcome::EnergyDrop);
        assert!(trace.last().energy <= trace.reference_energy - 1e-2);
    }

    #[test]
    fn u1_gauge_fixed_matches_raw_flow() {
        let l = Lattice::cubic(2, 6, 1.0).unwrap();
        let u0 = LinkField::identity(&l, GroupId::U1);
        let flow = GaugeFixedFlow::new(&u0);
        let a = u1_mode(&l, [1, 0], 1, 0.02) + u1_mode(&l, [2, 3], 0, 0.0);
        let mut fixed = a.clone();
        let mut raw = u0.perturb(&a, 1.0);
        for _ in 0..20 {
            fixed = flow.step(&fixed, 0.05, FlowScheme::Rk4).unwrap();
            raw = flow_step(&raw, 0.05, FlowScheme::Rk4).unwrap();
            assert!(flow.rhs(&fixed).unwrap().beta.norm() == 0.0);
        }
        assert!((raw.extract(&u0).unwrap() - fixed).norm_sup() < 1e-12);
    }

    #[test]
    fn u1_gauge_fixed_decays_exact_mode() {
        // Exact (not slice) modes decay through the d d^* term.
        let l = Lattice::cubic(2, 6, 1.0).unwrap();
        let u0 = LinkField::identity(&l, GroupId::U1);
        let flow = GaugeFixedFlow::new(&u0);
        let a = u1_mode(&l, [1, 0], 0, 0.01);
        let lam = 4.0 * (PI / 6.0).sin().powi(2);
        let rhs = flow.rhs(&a).unwrap().adot;
        assert!((rhs + a.scaled(lam)).norm_sup() < 1e-12);
    }

    #[test]
    fn gauge_fixed_constraint_and_reconstruction() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let u0 = LinkField::identity(&l, GroupId::Su2);
        let flow = GaugeFixedFlow::new(&u0);
        let mut rng = LabRng::new(26);
        let raw0 = OneForm::random(&l, GroupId::Su2, 0.03, &mut rng);
        let start = coulomb_project(&u0.perturb(&raw0, 1.0), &u0, flow.kernel(), &CoulombOptions::default()).unwrap();
        let a0 = start.projected.extract(&u0).unwrap();
        let dt = 0.02;
        let run = run_gauge_fixed_flow(&flow, &a0, dt, 40, FlowScheme::Rk4).unwrap();
        assert!(run.constraint.iter().all(|c| *c < 1e-9));
        let rec = reconstruct_flow(&run.path);
        for (k, (_, raw)) in rec.iter().enumerate() {
            let e_fixed = ym_action(&run.path.connections[k]).unwrap();
            assert!((ym_action(raw).unwrap() - e_fixed).abs() < 1e-10 * (1.0 + e_fixed));
        }
        let fields: Vec<LinkField> = rec.into_iter().map(|(_, f)| f).collect();
        let residual = raw_flow_residuals(&run.path.times, &fields).unwrap();
        let scale = run.path.connections.iter().map(|c| ym_gradient(c).unwrap().norm()).fold(0.0, f64::max);
        let worst = residual.iter().copied().fold(0.0, f64::max);
        assert!(worst < 10.0 * dt * scale, "{worst} vs {}", 10.0 * dt * scale);
    }

    #[test]
    fn second_sweep_is_cubic() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let u0 = LinkField::identity(&l, GroupId::Su2);
        let flow = GaugeFixedFlow::new(&u0);
        let mut rng = LabRng::new(27);
        let raw = OneForm::random(&l, GroupId::Su2, 1.0, &mut rng);
        let gaps: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|amp| {
                let p = coulomb_project(
                    &u0.perturb(&raw.scaled(amp / raw.norm()), 1.0),
                    &u0,
                    flow.kernel(),
                    &CoulombOptions::default(),
                )
                .unwrap();
                flow.second_sweep_change(&p.projected.extract(&u0).unwrap()).unwrap()
            })
            .collect();
        for w in gaps.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 3.0).abs() < 0.3, "{gaps:?}");
        }
        assert!(gaps[2] < 1e-9, "{gaps:?}");
    }

    #[test]
    fn zero_state_is_stationary() {
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let u0 = LinkField::identity(&l, GroupId::Su2);
        let a = OneForm::zeros(&l, GroupId::Su2);
        assert_eq!(gauge_fixed_flow_step(&a, &u0, 0.05).unwrap().norm(), 0.0);
    }
}
