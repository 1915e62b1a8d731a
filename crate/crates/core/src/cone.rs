//! Quadrature diagnostics for curvature fields on `R^n \ {0}`: scale-invariant
//! energy densities, radial contraction, rescaling, the conformal map to the
//! cylinder `S^{n-1} x R` and the residual of the Yang-Mills system written
//! on a cylinder.
//!
//! Curvature samples are real `n x n` antisymmetric arrays with an algebra
//! index, and all norms are Euclidean on components:
//! `|F|^2 = sum_{i<j} sum_c F_ij^c^2`.
//!
//! The ball `B_rho` is integrated in spherical shells. Shell integrals use a
//! product rule in hyperspherical angles (Gauss-Jacobi in the cosine of each
//! polar angle, trapezoid in the azimuth), and the radial integral is a trapezoid rule in
//! `log r` on a log-spaced grid. The core `B_{rho_min}` is closed off by
//! extending the innermost shell homogeneously with the critical growth
//! `|F| ~ r^{-2}`, which is exact for cones.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::{GaussJacobi, GaussLegendre};
use thiserror::Error;

use crate::algebra::{AlgebraElement, GroupId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("ball dimension must be at least 5, got {0}")]
    Dimension(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{what} = {value} lies outside the sampled range [{min}, {max}]")]
    GridRange { what: &'static str, value: f64, min: f64, max: f64 },
    #[error("quadrature under-resolved: fine {fine:e}, coarse {coarse:e} (relative change {relative:.3e})")]
    QuadratureUnderResolved { fine: f64, coarse: f64, relative: f64 },
    #[error("difference stencils disagree across resolutions by {estimate:e} (tolerance {tolerance:e})")]
    InsufficientSmoothness { estimate: f64, tolerance: f64 },
    #[error("{0}")]
    InvalidInput(String),
}

/// Area of the unit sphere `S^{n-1}` in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    assert!(n >= 1);
    // A_1 = 2, A_2 = 2 pi, A_{k+2} = 2 pi A_k / k.
    let (mut k, mut a) = if n % 2 == 1 { (1, 2.0) } else { (2, 2.0 * PI) };
    while k < n {
        a *= 2.0 * PI / k as f64;
        k += 2;
    }
    a
}

/// Antisymmetric algebra-valued 2-form sample at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoForm {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl TwoForm {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, data: vec![0.0; n * n * m] }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn algebra_dim(&self) -> usize {
        self.m
    }

    fn idx(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.n + j) * self.m + c
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.idx(i, j, c)]
    }

    /// Sets `F_ij^c = v` and `F_ji^c = -v`. Diagonal entries stay zero.
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        if i == j {
            return;
        }
        let (a, b) = (self.idx(i, j, c), self.idx(j, i, c));
        self.data[a] = v;
        self.data[b] = -v;
    }

    pub fn add(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let cur = self.get(i, j, c);
        self.set(i, j, c, cur + v);
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn norm_sq(&self) -> f64 {
        0.5 * self.data.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Interior product `(i_v F)_j^c = sum_i v_i F_ij^c`, laid out as `j * m + c`.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.m];
        for i in 0..self.n {
            if v[i] == 0.0 {
                continue;
            }
            for j in 0..self.n {
                for c in 0..self.m {
                    out[j * self.m + c] += v[i] * self.get(i, j, c);
                }
            }
        }
        out
    }

    /// Largest `|F_ij + F_ji|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                for c in 0..self.m {
                    d = d.max((self.get(i, j, c) + self.get(j, i, c)).abs());
                }
            }
        }
        d
    }

    pub fn max_abs_diff(&self, other: &TwoForm) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Upper-triangle components in `(i < j, c)` order.
    pub fn pair_components(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2 * self.m);
        for i in 0..self.n {
            for j in i + 1..self.n {
                for c in 0..self.m {
                    out.push(self.get(i, j, c));
                }
            }
        }
        out
    }

    pub fn set_pair_components(&mut self, values: &[f64]) {
        let mut k = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                for c in 0..self.m {
                    self.set(i, j, c, values[k]);
                    k += 1;
                }
            }
        }
    }
}

fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A curvature 2-form given pointwise on `R^n \ {0}`.
pub trait CurvatureField: Send + Sync {
    fn dimension(&self) -> usize;

    fn algebra_dim(&self) -> usize {
        1
    }

    /// Writes `F(x)` into `out`, which has the field's dimension and algebra size.
    fn eval_into(&self, x: &[f64], out: &mut TwoForm);

    /// Radii where the field is defined, when it is only known on an annulus.
    fn radial_range(&self) -> Option<(f64, f64)> {
        None
    }

    fn eval(&self, x: &[f64]) -> TwoForm {
        let mut f = TwoForm::zeros(self.dimension(), self.algebra_dim());
        self.eval_into(x, &mut f);
        f
    }
}

/// `F = 0`.
#[derive(Debug, Clone, Copy)]
pub struct FlatField {
    pub n: usize,
}

impl CurvatureField for FlatField {
    fn dimension(&self) -> usize {
        self.n
    }

    fn eval_into(&self, _x: &[f64], out: &mut TwoForm) {
        out.clear();
    }
}

/// Abelian cone `F = c d(A0)` with `A0 = (x1 dx2 - x2 dx1) / |x|^2`.
///
/// `A0` is invariant under dilations and has no radial component, so `F`
/// is the pullback of a 2-form on `S^{n-1}`. On the unit sphere
/// `|F|^2 = 4 c^2 (1 - x1^2 - x2^2)`.
#[derive(Debug, Clone, Copy)]
pub struct AbelianCone {
    pub n: usize,
    pub c: f64,
}

impl CurvatureField for AbelianCone {
    fn dimension(&self) -> usize {
        self.n
    }

    fn eval_into(&self, x: &[f64], out: &mut TwoForm) {
        out.clear();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let u = |j: usize| match j {
            0 => -x[1],
            1 => x[0],
            _ => 0.0,
        };
        for i in 0..self.n {
            for j in i + 1..self.n {
                let mut v = -2.0 * (x[i] * u(j) - x[j] * u(i)) / (r2 * r2);
                if i == 0 && j == 1 {
                    v += 2.0 / r2;
                }
                out.set(i, j, 0, self.c * v);
            }
        }
    }
}

/// `F = c |x|^{-2} dx1 ^ dx2`: critical growth with a uniform angular profile
/// and a nonzero radial component.
#[derive(Debug, Clone, Copy)]
pub struct InverseSquareProfile {
    pub n: usize,
    pub c: f64,
}

impl CurvatureField for InverseSquareProfile {
    fn dimension(&self) -> usize {
        self.n
    }

    fn eval_into(&self, x: &[f64], out: &mut TwoForm) {
        out.clear();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        out.set(0, 1, 0, self.c / r2);
    }
}

/// Constant `F = c dx1 ^ dx2`, a smooth Yang-Mills field.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub n: usize,
    pub c: f64,
}

impl CurvatureField for ConstantField {
    fn dimension(&self) -> usize {
        self.n
    }

    fn eval_into(&self, _x: &[f64], out: &mut TwoForm) {
        out.clear();
        out.set(0, 1, 0, self.c);
    }
}

type FieldFn = dyn Fn(&[f64], &mut TwoForm) + Send + Sync;

/// Field defined by a closure.
#[derive(Clone)]
pub struct FnField {
    n: usize,
    m: usize,
    f: Arc<FieldFn>,
}

impl FnField {
    pub fn new(n: usize, m: usize, f: impl Fn(&[f64], &mut TwoForm) + Send + Sync + 'static) -> Self {
        Self { n, m, f: Arc::new(f) }
    }
}

impl CurvatureField for FnField {
    fn dimension(&self) -> usize {
        self.n
    }

    fn algebra_dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, x: &[f64], out: &mut TwoForm) {
        out.clear();
        (self.f)(x, out);
    }
}

/// `F_lambda(x) = lambda^2 F(lambda x)`, the curvature of the dilated connection.
#[derive(Clone)]
pub struct Rescaled {
    inner: Arc<dyn CurvatureField>,
    lambda: f64,
}

impl CurvatureField for Rescaled {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn algebra_dim(&self) -> usize {
        self.inner.algebra_dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut TwoForm) {
        let y: Vec<f64> = x.iter().map(|v| self.lambda * v).collect();
        self.inner.eval_into(&y, out);
        out.scale(self.lambda * self.lambda);
    }

    fn radial_range(&self) -> Option<(f64, f64)> {
        self.inner.radial_range().map(|(a, b)| (a / self.lambda, b / self.lambda))
    }
}

/// Names accepted by [`builtin_field`].
pub const BUILTIN_FIELDS: [&str; 4] = ["flat", "abelian_cone", "inverse_square", "constant"];

/// Built-in field by name with unit amplitude.
pub fn builtin_field(name: &str, n: usize) -> Result<Arc<dyn CurvatureField>, ConeError> {
    Ok(match name {
        "flat" => Arc::new(FlatField { n }),
        "abelian_cone" => Arc::new(AbelianCone { n, c: 1.0 }),
        "inverse_square" => Arc::new(InverseSquareProfile { n, c: 1.0 }),
        "constant" => Arc::new(ConstantField { n, c: 1.0 }),
        other => {
            return Err(ConeError::InvalidInput(format!(
                "unknown field '{other}' (expected one of {})",
                BUILTIN_FIELDS.join(", ")
            )))
        }
    })
}

/// Gauss-Legendre nodes mapped to `[0, pi]`, as `(theta, weight)`.
fn polar_rule(order: usize) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::new(NonZeroUsize::new(order).expect("order >= 1"));
    let mut nodes: Vec<(f64, f64)> = gl
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * PI * (x + 1.0), 0.5 * PI * w))
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes
}

/// Gauss-Jacobi rule for `int_0^pi sin^p(theta) f(theta) dtheta`, as
/// `(theta, weight)`; in `u = cos(theta)` the weight is `(1 - u^2)^{(p-1)/2}`.
fn sine_weighted_rule(order: usize, p: usize) -> Vec<(f64, f64)> {
    let e = 0.5 * (p as f64 - 1.0);
    let ab = e.try_into().expect("exponent above -1");
    let gj = GaussJacobi::new(NonZeroUsize::new(order).expect("order >= 1"), ab, ab);
    let mut nodes: Vec<(f64, f64)> = gj.as_node_weight_pairs().iter().map(|&(u, w)| (u.clamp(-1.0, 1.0).acos(), w)).collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes
}

/// Point of `S^{n-1}` with hyperspherical angles `theta` (length `n - 2`)
/// and azimuth `phi`.
fn sphere_point(theta: &[f64], phi: f64, out: &mut [f64]) {
    let mut s = 1.0;
    for (k, &t) in theta.iter().enumerate() {
        out[k] = s * t.cos();
        s *= t.sin();
    }
    let n = out.len();
    out[n - 2] = s * phi.cos();
    out[n - 1] = s * phi.sin();
}

/// Hyperspherical angles of a nonzero vector.
fn sphere_angles(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len();
    let mut tail: f64 = x.iter().map(|v| v * v).sum::<f64>();
    let mut theta = Vec::with_capacity(n - 2);
    for k in 0..n - 2 {
        tail -= x[k] * x[k];
        theta.push(tail.max(0.0).sqrt().atan2(x[k]));
    }
    let phi = x[n - 1].atan2(x[n - 2]).rem_euclid(2.0 * PI);
    (theta, phi)
}

/// Product quadrature on `S^{n-1}`: `order` Gauss-Jacobi nodes in each of
/// the `n - 2` polar angles and `2 order` trapezoid nodes in the azimuth.
/// Polynomials of degree below `2 order` are integrated exactly.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    n: usize,
    order: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn new(n: usize, order: usize) -> Self {
        assert!(n >= 2 && order >= 1);
        let npolar = n - 2;
        let rules: Vec<Vec<(f64, f64)>> = (0..npolar).map(|k| sine_weighted_rule(order, npolar - k)).collect();
        let naz = 2 * order;
        let count = order.pow(npolar as u32) * naz;
        let mut points = Vec::with_capacity(count * n);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; npolar];
        let mut theta = vec![0.0; npolar];
        let mut x = vec![0.0; n];
        loop {
            let mut w = 2.0 * PI / naz as f64;
            for k in 0..npolar {
                let (t, wt) = rules[k][idx[k]];
                theta[k] = t;
                w *= wt;
            }
            for j in 0..naz {
                sphere_point(&theta, 2.0 * PI * j as f64 / naz as f64, &mut x);
                points.extend_from_slice(&x);
                weights.push(w);
            }
            // Odometer over the polar indices.
            let mut k = npolar;
            loop {
                if k == 0 {
                    return Self { n, order, points, weights };
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < order {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.n..(k + 1) * self.n]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * f(self.point(k))).sum()
    }
}

/// Radial and angular resolution of a [`SampledBallField`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallGrid {
    pub rho_min: f64,
    pub rho_max: f64,
    /// Number of log-spaced intervals; must be even so that every other node
    /// forms the coarse grid.
    pub radial_intervals: usize,
    /// Nodes per polar angle; the coarse grid uses half.
    pub angular_order: usize,
}

impl Default for BallGrid {
    fn default() -> Self {
        Self { rho_min: 1e-3, rho_max: 1.0, radial_intervals: 64, angular_order: 12 }
    }
}

impl BallGrid {
    fn validate(&self) -> Result<(), ConeError> {
        if !(self.rho_min > 0.0 && self.rho_max > self.rho_min) {
            return Err(ConeError::InvalidGrid(format!(
                "need 0 < rho_min < rho_max, got [{}, {}]",
                self.rho_min, self.rho_max
            )));
        }
        if self.radial_intervals < 2 || !self.radial_intervals.is_multiple_of(2) {
            return Err(ConeError::InvalidGrid(format!(
                "radial_intervals must be even and >= 2, got {}",
                self.radial_intervals
            )));
        }
        if self.angular_order < 2 {
            return Err(ConeError::InvalidGrid("angular_order must be >= 2".into()));
        }
        Ok(())
    }

    pub fn log_step(&self) -> f64 {
        (self.rho_max / self.rho_min).ln() / self.radial_intervals as f64
    }

    pub fn radii(&self) -> Vec<f64> {
        let h = self.log_step();
        (0..=self.radial_intervals).map(|i| self.rho_min * (h * i as f64).exp()).collect()
    }
}

/// Shell integral `int_{S^{n-1}} |F(r w)|^2 dw`.
fn shell_energy(field: &dyn CurvatureField, sphere: &SphereQuadrature, r: f64, buf: &mut TwoForm) -> f64 {
    let mut x = vec![0.0; sphere.dimension()];
    let mut acc = 0.0;
    for k in 0..sphere.len() {
        for (xi, wi) in x.iter_mut().zip(sphere.point(k)) {
            *xi = r * wi;
        }
        field.eval_into(&x, buf);
        acc += sphere.weight(k) * buf.norm_sq();
    }
    acc
}

/// `int_{r0}^{r0 e^h} r^{n-1} A(r) dr` with `log A` linear in `log r` between
/// the end values `a0`, `a1`; exact for power laws. Falls back to the
/// trapezoid rule in `log r` when an end value vanishes.
fn shell_segment(n: i32, r0: f64, h: f64, a0: f64, a1: f64) -> f64 {
    let g0 = r0.powi(n) * a0;
    if a0 <= 0.0 || a1 <= 0.0 {
        let g1 = (r0 * h.exp()).powi(n) * a1;
        return 0.5 * h * (g0 + g1);
    }
    // Exponent of r^n A(r) in s = log r.
    let q = n as f64 + (a1 / a0).ln() / h;
    let x = q * h;
    let factor = if x.abs() < 1e-6 { h * (1.0 + 0.5 * x + x * x / 6.0) } else { x.exp_m1() / q };
    g0 * factor
}

/// Summary of the cone tests on a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeDefects {
    /// `sup r^2 |lambda^2 F(lambda x) - F(x)| / sup r^2 |F|`.
    pub rescale: f64,
    /// `sup r^2 |d_r -| F| / sup r^2 |F|`.
    pub radial: f64,
}

impl ConeDefects {
    pub fn is_cone(&self, tol: f64) -> bool {
        self.rescale <= tol && self.radial <= tol
    }
}

/// A curvature field together with the ball quadrature used to integrate it.
#[derive(Clone)]
pub struct SampledBallField {
    field: Arc<dyn CurvatureField>,
    grid: BallGrid,
    radii: Vec<f64>,
    sphere: SphereQuadrature,
    coarse_sphere: SphereQuadrature,
    shells: Vec<f64>,
    coarse_shells: Vec<f64>,
}

impl std::fmt::Debug for SampledBallField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampledBallField")
            .field("dimension", &self.dimension())
            .field("grid", &self.grid)
            .finish()
    }
}

impl SampledBallField {
    pub fn new(field: Arc<dyn CurvatureField>, grid: BallGrid) -> Result<Self, ConeError> {
        let n = field.dimension();
        if n < 5 {
            return Err(ConeError::Dimension(n));
        }
        grid.validate()?;
        if let Some((lo, hi)) = field.radial_range() {
            for (what, v) in [("rho_min", grid.rho_min), ("rho_max", grid.rho_max)] {
                if v < lo * (1.0 - 1e-12) || v > hi * (1.0 + 1e-12) {
                    return Err(ConeError::GridRange { what, value: v, min: lo, max: hi });
                }
            }
        }
        let sphere = SphereQuadrature::new(n, grid.angular_order);
        let coarse_sphere = SphereQuadrature::new(n, grid.angular_order / 2);
        let radii = grid.radii();
        let mut buf = TwoForm::zeros(n, field.algebra_dim());
        let shells = radii.iter().map(|&r| shell_energy(field.as_ref(), &sphere, r, &mut buf)).collect();
        let coarse_shells = radii
            .iter()
            .step_by(2)
            .map(|&r| shell_energy(field.as_ref(), &coarse_sphere, r, &mut buf))
            .collect();
        Ok(Self { field, grid, radii, sphere, coarse_sphere, shells, coarse_shells })
    }

    pub fn field(&self) -> &Arc<dyn CurvatureField> {
        &self.field
    }

    pub fn grid(&self) -> &BallGrid {
        &self.grid
    }

    pub fn dimension(&self) -> usize {
        self.field.dimension()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn sphere(&self) -> &SphereQuadrature {
        &self.sphere
    }

    /// Shell integrals `int_S |F(r_i w)|^2` on the radial nodes.
    pub fn shells(&self) -> &[f64] {
        &self.shells
    }

    fn check_radius(&self, what: &'static str, rho: f64) -> Result<(), ConeError> {
        let (lo, hi) = (self.grid.rho_min, self.grid.rho_max);
        if !(rho >= lo * (1.0 - 1e-12) && rho <= hi * (1.0 + 1e-12)) {
            return Err(ConeError::GridRange { what, value: rho, min: lo, max: hi });
        }
        Ok(())
    }

    /// `rho^{4-n} int_{B_rho} |F|^2` from the shells at every `stride`-th node.
    fn ratio_from(&self, rho: f64, stride: usize, shells: &[f64], sphere: &SphereQuadrature) -> f64 {
        let n = self.dimension() as i32;
        let h = self.grid.log_step() * stride as f64;
        let s = (rho / self.grid.rho_min).ln().max(0.0);
        let last = ((s / h + 1e-9).floor() as usize).min(shells.len() - 1);
        let mut integral = 0.0;
        for k in 0..last {
            let r0 = self.radii[k * stride];
            integral += shell_segment(n, r0, h, shells[k], shells[k + 1]);
        }
        let rem = s - h * last as f64;
        if rem > 1e-12 * h {
            let mut buf = TwoForm::zeros(self.dimension(), self.field.algebra_dim());
            let r_last = self.radii[last * stride];
            let shell_rho = shell_energy(self.field.as_ref(), sphere, rho, &mut buf);
            integral += shell_segment(n, r_last, rem, shells[last], shell_rho);
        }
        let core = shells[0] * self.grid.rho_min.powi(n) / (n - 4) as f64;
        rho.powi(4 - n) * (core + integral)
    }

    /// Scale-invariant energy `rho^{4-n} int_{B_rho} |F|^2`, checked against the
    /// same quadrature at half the radial and angular resolution.
    pub fn density_ratio(&self, rho: f64) -> Result<f64, ConeError> {
        self.check_radius("rho", rho)?;
        let fine = self.ratio_from(rho, 1, &self.shells, &self.sphere);
        let coarse = self.ratio_from(rho, 2, &self.coarse_shells, &self.coarse_sphere);
        let scale = fine.abs().max(coarse.abs());
        if scale > 0.0 {
            let relative = (fine - coarse).abs() / scale;
            if relative > 0.01 {
                return Err(ConeError::QuadratureUnderResolved { fine, coarse, relative });
            }
        }
        Ok(fine)
    }

    /// Density ratio at every radial node, without the refinement check.
    pub fn density_profile(&self) -> Vec<(f64, f64)> {
        self.radii
            .iter()
            .map(|&r| (r, self.ratio_from(r, 1, &self.shells, &self.sphere)))
            .collect()
    }

    /// Smallest increment of the density profile between neighbouring nodes,
    /// relative to its largest value (0 for a vanishing field).
    pub fn monotonicity_defect(&self) -> f64 {
        let p = self.density_profile();
        let top = p.iter().map(|x| x.1.abs()).fold(0.0, f64::max);
        if top == 0.0 {
            return 0.0;
        }
        p.windows(2).map(|w| (w[1].1 - w[0].1) / top).fold(0.0, f64::min)
    }

    /// Relative spread `(max - min) / max` of the density profile.
    pub fn ratio_spread(&self) -> f64 {
        let p = self.density_profile();
        let hi = p.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let lo = p.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        if hi <= 0.0 {
            0.0
        } else {
            (hi - lo) / hi
        }
    }

    /// Rescale and radial defects sampled on the coarse angular nodes at every
    /// fourth radius.
    pub fn cone_defects(&self, lambda: f64) -> Result<ConeDefects, ConeError> {
        let scaled = Rescaled { inner: self.field.clone(), lambda };
        let n = self.dimension();
        let m = self.field.algebra_dim();
        let (mut f, mut g) = (TwoForm::zeros(n, m), TwoForm::zeros(n, m));
        let mut x = vec![0.0; n];
        let (mut top, mut resc, mut rad) = (0.0f64, 0.0f64, 0.0f64);
        let range = self.field.radial_range();
        for &r in self.radii.iter().step_by(4) {
            if range.is_some_and(|(lo, hi)| lambda * r < lo || lambda * r > hi) {
                continue;
            }
            for k in 0..self.coarse_sphere.len() {
                let w = self.coarse_sphere.point(k);
                for (xi, wi) in x.iter_mut().zip(w) {
                    *xi = r * wi;
                }
                self.field.eval_into(&x, &mut f);
                scaled.eval_into(&x, &mut g);
                let r2 = r * r;
                top = top.max(r2 * f.norm());
                let mut d = g.clone();
                d.data.iter_mut().zip(&f.data).for_each(|(a, b)| *a -= b);
                resc = resc.max(r2 * d.norm());
                rad = rad.max(r2 * euclid_norm(&f.contract(w)));
            }
        }
        if top == 0.0 {
            return Ok(ConeDefects { rescale: 0.0, radial: 0.0 });
        }
        Ok(ConeDefects { rescale: resc / top, radial: rad / top })
    }
}

/// `d/dr -| F(x)`, the contraction of `F` with the unit radial vector, as an
/// algebra-valued 1-form laid out `j * m + c`.
pub fn radial_contraction(field: &dyn CurvatureField, x: &[f64]) -> Result<Vec<f64>, ConeError> {
    let r = euclid_norm(x);
    if r == 0.0 || x.len() != field.dimension() {
        return Err(ConeError::InvalidInput("radial contraction needs a nonzero point of the field's dimension".into()));
    }
    let w: Vec<f64> = x.iter().map(|v| v / r).collect();
    Ok(field.eval(x).contract(&w))
}

/// Curvature of the dilated connection, `F_lambda(x) = lambda^2 F(lambda x)`,
/// on the same grid. Requires `0 < lambda <= 1`.
pub fn rescale(field: &SampledBallField, lambda: f64) -> Result<SampledBallField, ConeError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(ConeError::InvalidInput(format!("rescale factor must lie in (0, 1], got {lambda}")));
    }
    if lambda == 1.0 {
        return Ok(field.clone());
    }
    if let Some((lo, hi)) = field.field.radial_range() {
        let need = lambda * field.grid.rho_min;
        if need < lo * (1.0 - 1e-12) || lambda * field.grid.rho_max > hi * (1.0 + 1e-12) {
            return Err(ConeError::GridRange { what: "lambda * rho_min", value: need, min: lo, max: hi });
        }
    }
    let scaled: Arc<dyn CurvatureField> = Arc::new(Rescaled { inner: field.field.clone(), lambda });
    SampledBallField::new(scaled, field.grid)
}

/// Curvature pushed to the cylinder `S^{n-1} x R` by `x -> (x/|x|, -log|x|)`.
///
/// With `x = e^{-t} w` the pulled-back form splits as `F~ = F_A - eta ^ dt`,
/// where `F_A = r^2 P F P` (`P` projects onto the tangent space of the
/// sphere) and `eta = r^2 F w`. Samples are stored point by point with index
/// `time * directions + direction`.
#[derive(Debug, Clone)]
pub struct CylinderSamples {
    n: usize,
    m: usize,
    pub times: Vec<f64>,
    directions: Vec<f64>,
    pub spatial: Vec<TwoForm>,
    pub temporal: Vec<Vec<f64>>,
    /// `r^2 |F(x)|` evaluated directly on the ball.
    pub ball_norms: Vec<f64>,
}

impl CylinderSamples {
    pub fn direction_count(&self) -> usize {
        self.directions.len() / self.n
    }

    pub fn direction(&self, k: usize) -> &[f64] {
        &self.directions[k * self.n..(k + 1) * self.n]
    }

    /// `|F~| = (|F_A|^2 + |eta|^2)^{1/2}` at sample `k`.
    pub fn norm(&self, k: usize) -> f64 {
        let t: f64 = self.temporal[k].iter().map(|v| v * v).sum();
        (self.spatial[k].norm_sq() + t).sqrt()
    }

    /// Largest relative mismatch between `|F~|` and `r^2 |F|`.
    pub fn max_norm_mismatch(&self) -> f64 {
        (0..self.spatial.len())
            .map(|k| {
                let (a, b) = (self.norm(k), self.ball_norms[k]);
                if a == b {
                    0.0
                } else {
                    (a - b).abs() / b.abs().max(a.abs())
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn temporal_sup(&self) -> f64 {
        self.temporal.iter().map(|v| euclid_norm(v)).fold(0.0, f64::max)
    }

    /// `sup |F_A(t, w) - F_A(t_0, w)|`.
    pub fn time_variation(&self) -> f64 {
        let nd = self.direction_count();
        let mut d: f64 = 0.0;
        for it in 1..self.times.len() {
            for k in 0..nd {
                d = d.max(self.spatial[it * nd + k].max_abs_diff(&self.spatial[k]));
            }
        }
        d
    }

    /// Points `x = e^{-t} w` and the ball curvature recovered from the cylinder
    /// components, `F = r^{-2} (F_A + eta w^T - w eta^T)`.
    pub fn inverse(&self) -> Vec<(Vec<f64>, TwoForm)> {
        let nd = self.direction_count();
        let mut out = Vec::with_capacity(self.spatial.len());
        for (it, &t) in self.times.iter().enumerate() {
            let r = (-t).exp();
            for k in 0..nd {
                let w = self.direction(k);
                let idx = it * nd + k;
                let mut f = self.spatial[idx].clone();
                let eta = &self.temporal[idx];
                for i in 0..self.n {
                    for j in i + 1..self.n {
                        for c in 0..self.m {
                            f.add(i, j, c, eta[i * self.m + c] * w[j] - w[i] * eta[j * self.m + c]);
                        }
                    }
                }
                f.scale(1.0 / (r * r));
                out.push((w.iter().map(|v| r * v).collect(), f));
            }
        }
        out
    }
}

/// Pushes the field to the cylinder at the given times, sampling the coarse
/// angular nodes of the ball grid. Every `e^{-t}` must lie in the grid's
/// radial range.
pub fn cylinder_transform(field: &SampledBallField, times: &[f64]) -> Result<CylinderSamples, ConeError> {
    for &t in times {
        field.check_radius("exp(-t)", (-t).exp())?;
    }
    let n = field.dimension();
    let m = field.field.algebra_dim();
    let sphere = &field.coarse_sphere;
    let mut spatial = Vec::with_capacity(times.len() * sphere.len());
    let mut temporal = Vec::with_capacity(times.len() * sphere.len());
    let mut ball_norms = Vec::with_capacity(times.len() * sphere.len());
    let mut x = vec![0.0; n];
    let mut f = TwoForm::zeros(n, m);
    for &t in times {
        let r = (-t).exp();
        let r2 = r * r;
        for k in 0..sphere.len() {
            let w = sphere.point(k);
            for (xi, wi) in x.iter_mut().zip(w) {
                *xi = r * wi;
            }
            field.field.eval_into(&x, &mut f);
            ball_norms.push(r2 * f.norm());
            // F w = -(w -| F).
            let eta: Vec<f64> = f.contract(w).into_iter().map(|v| -r2 * v).collect();
            let mut fa = TwoForm::zeros(n, m);
            for c in 0..m {
                // P F P = F - (F w) w^T + w (F w)^T, using w^T F w = 0.
                for i in 0..n {
                    for j in i + 1..n {
                        let fw_i = eta[i * m + c] / r2;
                        let fw_j = eta[j * m + c] / r2;
                        let v = f.get(i, j, c) - fw_i * w[j] + w[i] * fw_j;
                        fa.set(i, j, c, r2 * v);
                    }
                }
            }
            spatial.push(fa);
            temporal.push(eta);
        }
    }
    Ok(CylinderSamples {
        n,
        m,
        times: times.to_vec(),
        directions: sphere.points.clone(),
        spatial,
        temporal,
        ball_norms,
    })
}

/// Curvature tabulated on a log-radial by hyperspherical-angle grid. The
/// scale-invariant combination `r^2 F` is interpolated multilinearly in
/// `(log r, theta_1, .., theta_{n-2}, phi)`.
/// Angles outside the outermost polar nodes are clamped; the azimuth is
/// periodic.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub dimension: usize,
    pub algebra_dim: usize,
    pub radii: Vec<f64>,
    pub polar: Vec<f64>,
    pub azimuth: usize,
    /// Pair components `(i < j, c)` per node, nodes ordered radius-major, then
    /// polar indices lexicographically, then azimuth.
    pub values: Vec<f64>,
}

impl FieldTable {
    pub fn pair_count(&self) -> usize {
        self.dimension * (self.dimension - 1) / 2 * self.algebra_dim
    }

    pub fn node_count(&self) -> usize {
        self.radii.len() * self.polar.len().pow(self.dimension as u32 - 2) * self.azimuth
    }

    pub fn validate(&self) -> Result<(), ConeError> {
        let bad = |s: String| Err(ConeError::InvalidGrid(s));
        if self.dimension < 3 || self.algebra_dim == 0 {
            return bad(format!("dimension {} / algebra size {}", self.dimension, self.algebra_dim));
        }
        if self.radii.len() < 2 || self.radii.windows(2).any(|w| !(w[1] > w[0])) || self.radii[0] <= 0.0 {
            return bad("radii must be positive and strictly increasing (at least two)".into());
        }
        if self.polar.is_empty() || self.polar.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("polar nodes must be strictly increasing".into());
        }
        if self.azimuth < 2 {
            return bad("need at least two azimuth nodes".into());
        }
        if self.values.len() != self.node_count() * self.pair_count() {
            return bad(format!(
                "expected {} values, got {}",
                self.node_count() * self.pair_count(),
                self.values.len()
            ));
        }
        Ok(())
    }

    /// Tabulates `field` at the given radii with `order` polar nodes and
    /// `2 order` azimuth nodes.
    pub fn sample(field: &dyn CurvatureField, radii: &[f64], order: usize) -> Self {
        let n = field.dimension();
        let polar: Vec<f64> = polar_rule(order).into_iter().map(|p| p.0).collect();
        let azimuth = 2 * order;
        let mut table = Self {
            dimension: n,
            algebra_dim: field.algebra_dim(),
            radii: radii.to_vec(),
            polar,
            azimuth,
            values: Vec::new(),
        };
        let mut f = TwoForm::zeros(n, field.algebra_dim());
        let mut x = vec![0.0; n];
        let mut theta = vec![0.0; n - 2];
        let per_radius = table.polar.len().pow(n as u32 - 2);
        for &r in radii {
            for flat in 0..per_radius {
                let mut rest = flat;
                for k in (0..n - 2).rev() {
                    theta[k] = table.polar[rest % table.polar.len()];
                    rest /= table.polar.len();
                }
                for j in 0..azimuth {
                    sphere_point(&theta, 2.0 * PI * j as f64 / azimuth as f64, &mut x);
                    x.iter_mut().for_each(|v| *v *= r);
                    field.eval_into(&x, &mut f);
                    table.values.extend(f.pair_components());
                }
            }
        }
        table
    }
}

/// Bracketing index and weight of `v` in increasing `nodes`, clamped.
fn bracket(nodes: &[f64], v: f64) -> (usize, f64) {
    let last = nodes.len() - 1;
    if last == 0 || v <= nodes[0] {
        return (0, 0.0);
    }
    if v >= nodes[last] {
        return (last - 1, 1.0);
    }
    let i = nodes.partition_point(|&x| x <= v) - 1;
    (i, (v - nodes[i]) / (nodes[i + 1] - nodes[i]))
}

impl CurvatureField for FieldTable {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn algebra_dim(&self) -> usize {
        self.algebra_dim
    }

    fn radial_range(&self) -> Option<(f64, f64)> {
        Some((self.radii[0], *self.radii.last().unwrap()))
    }

    fn eval_into(&self, x: &[f64], out: &mut TwoForm) {
        let n = self.dimension;
        let r = euclid_norm(x);
        let (theta, phi) = sphere_angles(x);
        // (lower index, weight) per interpolation axis; the azimuth wraps.
        let mut axes = Vec::with_capacity(n);
        let (i, _) = bracket(&self.radii, r);
        let frac = ((r / self.radii[i]).ln() / (self.radii[i + 1] / self.radii[i]).ln()).clamp(0.0, 1.0);
        axes.push((i, frac));
        for t in &theta {
            axes.push(bracket(&self.polar, *t));
        }
        let u = phi * self.azimuth as f64 / (2.0 * PI);
        let j = (u.floor() as usize) % self.azimuth;
        axes.push((j, u - u.floor()));

        let np = self.polar.len();
        let pairs = self.pair_count();
        let mut acc = vec![0.0; pairs];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut node = 0usize;
            for (a, &(lo, frac)) in axes.iter().enumerate() {
                let up = (corner >> a) & 1 == 1;
                w *= if up { frac } else { 1.0 - frac };
                let (size, idx) = if a == 0 {
                    (self.radii.len(), (lo + up as usize).min(self.radii.len() - 1))
                } else if a == n - 1 {
                    (self.azimuth, (lo + up as usize) % self.azimuth)
                } else {
                    (np, (lo + up as usize).min(np - 1))
                };
                node = node * size + idx;
            }
            if w == 0.0 {
                continue;
            }
            let base = node * pairs;
            let ri = axes[0].0 + ((corner & 1 == 1) as usize).min(self.radii.len() - 1 - axes[0].0);
            let weight = w * self.radii[ri] * self.radii[ri];
            for (a, v) in acc.iter_mut().zip(&self.values[base..base + pairs]) {
                *a += weight * v;
            }
        }
        acc.iter_mut().for_each(|v| *v /= r * r);
        out.set_pair_components(&acc);
    }
}

/// A connection `A(t) + beta(t) dt` on `T^d x R`, with `T^d` the flat torus
/// `(R / 2 pi Z)^d`. It is the cylinder picture of a field on `R^{d+1}`.
pub trait CylinderPath: Send + Sync {
    fn base_dim(&self) -> usize;

    fn group(&self) -> GroupId;

    /// Components `A_1 .. A_d` and `beta` at `(theta, t)`.
    fn potential(&self, theta: &[f64], t: f64) -> (Vec<AlgebraElement>, AlgebraElement);
}

/// Time-independent abelian cone with constant harmonic curvature
/// `F = c dtheta_1 ^ dtheta_2`, given by `A = c theta_1 dtheta_2`, `beta = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ToricAbelianCone {
    pub base_dim: usize,
    pub c: f64,
}

impl CylinderPath for ToricAbelianCone {
    fn base_dim(&self) -> usize {
        self.base_dim
    }

    fn group(&self) -> GroupId {
        GroupId::U1
    }

    fn potential(&self, theta: &[f64], _t: f64) -> (Vec<AlgebraElement>, AlgebraElement) {
        let mut a = vec![AlgebraElement::U1(0.0); self.base_dim];
        a[1] = AlgebraElement::U1(self.c * theta[0]);
        (a, AlgebraElement::U1(0.0))
    }
}

/// Sample points and difference step for [`ym_system_residual`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrid {
    /// Points per torus direction, placed at `(k + 1/2) 2 pi / per_dim`.
    pub per_dim: usize,
    pub times: Vec<f64>,
    pub step: f64,
    /// Allowed disagreement between steps `h` and `2h`, relative to `1 + scale`.
    pub smoothness_tol: f64,
}

impl Default for ResidualGrid {
    fn default() -> Self {
        Self { per_dim: 3, times: vec![0.0, 0.5, 1.0], step: 1e-2, smoothness_tol: 1e-5 }
    }
}

/// Sup norms of the two equations of the cylinder Yang-Mills system.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SystemResidual {
    /// `sup |nabla_t eta - (n-4) eta - d_A^* F_A|` with `eta = A' - d_A beta`.
    pub res1: f64,
    /// `sup |d_A^* eta|`.
    pub res2: f64,
    /// Largest magnitude among the individual terms.
    pub scale: f64,
    /// Largest change of either residual between steps `h` and `2h`.
    pub smoothness: f64,
    pub points: usize,
}

struct Stencil<'a> {
    path: &'a dyn CylinderPath,
    d: usize,
    h: f64,
}

type Elems = Vec<AlgebraElement>;

impl Stencil<'_> {
    /// Fourth-order central difference of `f` along coordinate `dir` of
    /// `y = (theta, t)`.
    fn diff(&self, y: &[f64], dir: usize, f: impl Fn(&[f64]) -> Elems) -> Elems {
        let mut z = y.to_vec();
        let mut at = |s: f64| {
            z[dir] = y[dir] + s * self.h;
            f(&z)
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        let inv = 1.0 / (12.0 * self.h);
        (0..m2.len()).map(|k| (m2[k] - p2[k] + 8.0 * (p1[k] - m1[k])).scale(inv)).collect()
    }

    fn a(&self, y: &[f64]) -> Elems {
        self.path.potential(&y[..self.d], y[self.d]).0
    }

    fn beta(&self, y: &[f64]) -> Elems {
        vec![self.path.potential(&y[..self.d], y[self.d]).1]
    }

    /// `F_ij`, row-major `d x d`.
    fn curvature(&self, y: &[f64]) -> Elems {
        let d = self.d;
        let a = self.a(y);
        let da: Vec<Elems> = (0..d).map(|i| self.diff(y, i, |z| self.a(z))).collect();
        let mut f = vec![AlgebraElement::zero(self.path.group()); d * d];
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    f[i * d + j] = da[i][j] - da[j][i] + a[i].bracket(&a[j]);
                }
            }
        }
        f
    }

    /// `eta_j = A_j' - d_j beta - [A_j, beta]`.
    fn eta(&self, y: &[f64]) -> Elems {
        let d = self.d;
        let a = self.a(y);
        let b = self.beta(y)[0];
        let adot = self.diff(y, d, |z| self.a(z));
        (0..d)
            .map(|j| adot[j] - self.diff(y, j, |z| self.beta(z))[0] - a[j].bracket(&b))
            .collect()
    }

    /// `(res1, res2, scale)` at one point.
    fn residuals(&self, y: &[f64], n_minus_4: f64) -> (f64, f64, f64) {
        let d = self.d;
        let a = self.a(y);
        let b = self.beta(y)[0];
        let eta = self.eta(y);
        let eta_dot = self.diff(y, d, |z| self.eta(z));
        let f = self.curvature(y);
        let df: Vec<Elems> = (0..d).map(|i| self.diff(y, i, |z| self.curvature(z))).collect();
        let deta: Vec<Elems> = (0..d).map(|i| self.diff(y, i, |z| self.eta(z))).collect();
        let zero = AlgebraElement::zero(self.path.group());
        let mut scale: f64 = 0.0;
        let mut res1: f64 = 0.0;
        for j in 0..d {
            let mut dstar = zero;
            for i in 0..d {
                dstar -= df[i][i * d + j] + a[i].bracket(&f[i * d + j]);
            }
            let nabla_t = eta_dot[j] + b.bracket(&eta[j]);
            let damping = eta[j].scale(n_minus_4);
            for term in [&nabla_t, &damping, &dstar] {
                scale = scale.max(term.norm());
            }
            res1 = res1.max((nabla_t - damping - dstar).norm());
        }
        let mut div = zero;
        for i in 0..d {
            div -= deta[i][i] + a[i].bracket(&eta[i]);
        }
        (res1, div.norm(), scale)
    }
}

/// Evaluates the cylinder Yang-Mills system in its covariant form,
/// `nabla_t eta - (n-4) eta - d_A^* F_A = 0` and `d_A^* eta = 0`, where
/// `eta = A' - d_A beta`, `nabla_t = d/dt + [beta, .]` and `n = d + 1`.
/// Expanding `nabla_t eta` gives
/// `A'' - (n-4) A' - d_A^* F_A - d_A beta' + (n-4) d_A beta + 2 [beta, A'] - [beta, d_A beta]`.
///
/// Derivatives are fourth-order central differences with step `h`; the
/// evaluation is repeated with `2h`, and a disagreement above the grid's
/// smoothness tolerance is reported as [`ConeError::InsufficientSmoothness`].
pub fn ym_system_residual(path: &dyn CylinderPath, grid: &ResidualGrid) -> Result<SystemResidual, ConeError> {
    let d = path.base_dim();
    if d < 2 {
        return Err(ConeError::InvalidInput(format!("cylinder base must have dimension >= 2, got {d}")));
    }
    if grid.per_dim == 0 || grid.times.is_empty() || !(grid.step > 0.0) {
        return Err(ConeError::InvalidInput("residual grid needs points, times and a positive step".into()));
    }
    let n_minus_4 = (d + 1) as f64 - 4.0;
    let fine = Stencil { path, d, h: grid.step };
    let coarse = Stencil { path, d, h: 2.0 * grid.step };
    let mut out = SystemResidual { res1: 0.0, res2: 0.0, scale: 0.0, smoothness: 0.0, points: 0 };
    let total = grid.per_dim.pow(d as u32);
    let mut y = vec![0.0; d + 1];
    for &t in &grid.times {
        for flat in 0..total {
            let mut rest = flat;
            for yk in y.iter_mut().take(d) {
                *yk = (rest % grid.per_dim) as f64 * 2.0 * PI / grid.per_dim as f64 + PI / grid.per_dim as f64;
                rest /= grid.per_dim;
            }
            y[d] = t;
            let (r1, r2, s) = fine.residuals(&y, n_minus_4);
            let (c1, c2, _) = coarse.residuals(&y, n_minus_4);
            out.res1 = out.res1.max(r1);
            out.res2 = out.res2.max(r2);
            out.scale = out.scale.max(s);
            out.smoothness = out.smoothness.max((r1 - c1).abs()).max((r2 - c2).abs());
            out.points += 1;
        }
    }
    let tolerance = grid.smoothness_tol * (1.0 + out.scale);
    if out.smoothness > tolerance {
        return Err(ConeError::InsufficientSmoothness { estimate: out.smoothness, tolerance });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::exp_map;

    fn ball(field: Arc<dyn CurvatureField>) -> SampledBallField {
        SampledBallField::new(field, BallGrid::default()).unwrap()
    }

    /// Smooth field with no symmetry, used for the generic checks.
    fn generic(n: usize) -> FnField {
        FnField::new(n, 1, |x, f| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            f.set(0, 1, 0, (-r2).exp() * (1.0 + x[2]));
            f.set(2, 3, 0, x[0] * x[1] + 0.5);
            f.set(1, 4, 0, (2.0 * x[3]).sin());
        })
    }

    /// `F + eps dr ^ w` for a constant covector `w`.
    fn perturbed(base: Arc<dyn CurvatureField>, eps: f64, w: Vec<f64>) -> FnField {
        let n = base.dimension();
        FnField::new(n, 1, move |x, f| {
            base.eval_into(x, f);
            let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for i in 0..n {
                for j in i + 1..n {
                    f.add(i, j, 0, eps * (x[i] * w[j] - x[j] * w[i]) / r);
                }
            }
        })
    }

    #[test]
    fn sphere_areas_and_weights() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
        for n in 5..=7 {
            let q = SphereQuadrature::new(n, 8);
            assert!((q.total_weight() - sphere_area(n)).abs() < 1e-6 * sphere_area(n), "n = {n}");
            for k in (0..q.len()).step_by(97) {
                assert!((euclid_norm(q.point(k)) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sphere_quadrature_integrates_second_moments() {
        let q = SphereQuadrature::new(6, 6);
        for i in 0..6 {
            let m = q.integrate(|w| w[i] * w[i]);
            assert!((m - sphere_area(6) / 6.0).abs() < 1e-12, "axis {i}: {m}");
        }
    }

    #[test]
    fn angles_invert_sphere_points() {
        let theta = [0.3, 2.1, 1.0];
        let mut x = [0.0; 5];
        sphere_point(&theta, 4.0, &mut x);
        let (t, phi) = sphere_angles(&x);
        for k in 0..3 {
            assert!((t[k] - theta[k]).abs() < 1e-12);
        }
        assert!((phi - 4.0).abs() < 1e-12);
    }

    #[test]
    fn abelian_cone_profile() {
        let f = AbelianCone { n: 5, c: 1.3 };
        let x = [0.3, -0.2, 0.5, 0.1, 0.4];
        let r = euclid_norm(&x);
        let w: Vec<f64> = x.iter().map(|v| v / r).collect();
        let expected = 4.0 * 1.3f64.powi(2) * (1.0 - w[0] * w[0] - w[1] * w[1]) / r.powi(4);
        let got = f.eval(&x);
        assert!((got.norm_sq() - expected).abs() < 1e-12 * expected);
        assert!(got.antisymmetry_defect() == 0.0);
    }

    #[test]
    fn flat_field_has_zero_density_and_contraction() {
        let b = ball(Arc::new(FlatField { n: 5 }));
        for rho in [1e-3, 0.01, 0.37, 1.0] {
            assert_eq!(b.density_ratio(rho).unwrap(), 0.0);
        }
        let c = radial_contraction(&FlatField { n: 5 }, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert!(c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cone_density_matches_hand_integral() {
        for n in [5, 6] {
            let c = 0.7;
            let grid = BallGrid { angular_order: 8, ..BallGrid::default() };
            let b = SampledBallField::new(Arc::new(AbelianCone { n, c }), grid).unwrap();
            let exact = 4.0 * c * c * sphere_area(n) * (1.0 - 2.0 / n as f64) / (n as f64 - 4.0);
            for rho in [1e-3, 0.004, 0.05, 0.3, 0.77, 1.0] {
                let v = b.density_ratio(rho).unwrap();
                assert!((v / exact - 1.0).abs() < 0.01, "n = {n}, rho = {rho}: {v} vs {exact}");
            }
            assert!(b.ratio_spread() < 0.01);
        }
    }

    #[test]
    fn stationary_smooth_field_is_monotone() {
        let b = ball(Arc::new(ConstantField { n: 5, c: 2.0 }));
        assert!(b.monotonicity_defect() >= -1e-3);
        // rho^{4-n} |B_rho| c^2 = c^2 |S^{n-1}| rho^4 / n away from the core.
        let rho: f64 = 0.5;
        let exact = 4.0 * sphere_area(5) * rho.powi(4) / 5.0;
        assert!((b.density_ratio(rho).unwrap() / exact - 1.0).abs() < 0.01);
    }

    #[test]
    fn cone_contraction_vanishes_and_perturbation_is_measured() {
        let cone: Arc<dyn CurvatureField> = Arc::new(AbelianCone { n: 5, c: 1.0 });
        let points = [[0.1, 0.2, -0.3, 0.05, 0.4], [0.9, -0.1, 0.0, 0.2, 0.1], [0.0, 0.0, 0.0, 0.0, 2.0]];
        for x in &points {
            let v = radial_contraction(cone.as_ref(), x).unwrap();
            assert!(euclid_norm(&v) < 1e-10);
        }
        // w = e1 is tangent at any point with x1 = 0.
        let eps = 1e-3;
        let p = perturbed(cone, eps, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        for x in [[0.0, 0.3, -0.2, 0.4, 0.1], [0.0, 0.0, 0.0, 0.0, 0.5]] {
            let v = radial_contraction(&p, &x).unwrap();
            assert!((euclid_norm(&v) - eps).abs() < 1e-8);
        }
    }

    #[test]
    fn rescale_identity_and_cone_invariance() {
        let b = ball(Arc::new(AbelianCone { n: 5, c: 1.0 }));
        let same = rescale(&b, 1.0).unwrap();
        assert_eq!(same.shells(), b.shells());
        let d = b.cone_defects(0.5).unwrap();
        assert!(d.rescale < 1e-8 && d.radial < 1e-10, "{d:?}");
        let half = rescale(&b, 0.5).unwrap();
        for (a, c) in half.shells().iter().zip(b.shells()) {
            assert!((a - c).abs() <= 1e-8 * c.abs());
        }
        assert!(rescale(&b, 1.5).is_err());
        assert!(rescale(&b, 0.0).is_err());
    }

    #[test]
    fn rescale_transports_density_ratio() {
        let b = ball(Arc::new(generic(5)));
        let scaled = rescale(&b, 0.5).unwrap();
        let lhs = scaled.density_ratio(0.25).unwrap();
        let rhs = b.density_ratio(0.125).unwrap();
        assert!((lhs / rhs - 1.0).abs() < 0.01, "{lhs} vs {rhs}");
    }

    #[test]
    fn oscillating_field_is_under_resolved() {
        let f = FnField::new(5, 1, |x, f| f.set(0, 1, 0, (40.0 * x[0] / euclid_norm(x)).cos()));
        let grid = BallGrid { angular_order: 6, ..BallGrid::default() };
        let b = SampledBallField::new(Arc::new(f), grid).unwrap();
        assert!(matches!(b.density_ratio(0.5), Err(ConeError::QuadratureUnderResolved { .. })));
    }

    #[test]
    fn radial_quadrature_is_second_order() {
        let at = |intervals: usize| {
            let grid = BallGrid { radial_intervals: intervals, angular_order: 4, rho_min: 1e-2, rho_max: 1.0 };
            let b = SampledBallField::new(Arc::new(generic(5)), grid).unwrap();
            b.ratio_from(1.0, 1, &b.shells, &b.sphere)
        };
        let (a, b, c) = (at(64), at(128), at(256));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 3.9, "refinement ratio {ratio}");
    }

    #[test]
    fn grid_errors() {
        let f: Arc<dyn CurvatureField> = Arc::new(FlatField { n: 5 });
        assert!(matches!(SampledBallField::new(Arc::new(FlatField { n: 4 }), BallGrid::default()), Err(ConeError::Dimension(4))));
        let odd = BallGrid { radial_intervals: 7, ..BallGrid::default() };
        assert!(matches!(SampledBallField::new(f.clone(), odd), Err(ConeError::InvalidGrid(_))));
        let b = ball(f);
        assert!(matches!(b.density_ratio(2.0), Err(ConeError::GridRange { .. })));
    }

    #[test]
    fn cylinder_of_cone_is_static() {
        let b = ball(Arc::new(AbelianCone { n: 5, c: 1.0 }));
        let cyl = cylinder_transform(&b, &[0.0, 0.5, 1.7, 4.0]).unwrap();
        let scale = cyl.ball_norms.iter().cloned().fold(0.0, f64::max);
        assert!(cyl.temporal_sup() < 1e-10 * scale);
        assert!(cyl.time_variation() < 1e-10 * scale);
        assert!(cyl.max_norm_mismatch() < 1e-6);
    }

    #[test]
    fn cylinder_of_inverse_square_profile_is_constant() {
        let b = ball(Arc::new(InverseSquareProfile { n: 5, c: 0.8 }));
        let cyl = cylinder_transform(&b, &[0.0, 1.0, 3.0, 6.5]).unwrap();
        for k in 0..cyl.spatial.len() {
            assert!((cyl.norm(k) - 0.8).abs() < 1e-8);
        }
        assert!(cyl.temporal_sup() > 0.1);
    }

    #[test]
    fn cylinder_roundtrip_and_norm_identity() {
        let field = generic(5);
        let b = ball(Arc::new(field.clone()));
        let cyl = cylinder_transform(&b, &[0.1, 0.9, 2.5]).unwrap();
        assert!(cyl.max_norm_mismatch() < 1e-6);
        let mut err: f64 = 0.0;
        let mut top: f64 = 0.0;
        for (x, f) in cyl.inverse() {
            let direct = field.eval(&x);
            err = err.max(f.max_abs_diff(&direct));
            top = top.max(direct.norm());
        }
        assert!(err < 1e-10 * top.max(1.0), "roundtrip error {err}");
        assert!(cylinder_transform(&b, &[10.0]).is_err());
    }

    #[test]
    fn cone_test_agrees_with_radial_contraction() {
        let cone: Arc<dyn CurvatureField> = Arc::new(AbelianCone { n: 5, c: 1.0 });
        let fields: Vec<Arc<dyn CurvatureField>> = vec![
            Arc::new(FlatField { n: 5 }),
            cone.clone(),
            Arc::new(ConstantField { n: 5, c: 1.0 }),
            Arc::new(InverseSquareProfile { n: 5, c: 1.0 }),
            Arc::new(perturbed(cone, 1e-2, vec![0.0, 0.0, 1.0, 0.0, 0.0])),
            Arc::new(generic(5)),
        ];
        let expected = [true, true, false, false, false, false];
        for (f, want) in fields.into_iter().zip(expected) {
            let grid = BallGrid { angular_order: 4, ..BallGrid::default() };
            let b = SampledBallField::new(f.clone(), grid).unwrap();
            let d = b.cone_defects(0.5).unwrap();
            let contraction_vanishes = [[0.1, 0.2, 0.3, 0.4, 0.5], [-0.3, 0.0, 0.7, 0.1, 0.2]]
                .iter()
                .all(|x| euclid_norm(&radial_contraction(f.as_ref(), x).unwrap()) < 1e-10 * (1.0 + f.eval(x).norm()));
            assert_eq!(d.is_cone(1e-8), want, "{d:?}");
            assert_eq!(contraction_vanishes, want);
        }
    }

    #[test]
    fn tables_interpolate_sampled_fields() {
        let radii: Vec<f64> = (0..=20).map(|i| 1e-3 * (1000f64.ln() * i as f64 / 20.0).exp()).collect();
        let cone = AbelianCone { n: 5, c: 1.0 };
        let table = FieldTable::sample(&cone, &radii, 10);
        table.validate().unwrap();
        let x = [0.21, -0.13, 0.4, 0.05, -0.3];
        let (a, b) = (table.eval(&x), cone.eval(&x));
        assert!(a.max_abs_diff(&b) < 0.1 * b.norm());
        // Components of r^2 F are constant for this profile, so the table is exact.
        let profile = InverseSquareProfile { n: 5, c: 0.9 };
        let table = FieldTable::sample(&profile, &radii, 4);
        assert!(table.eval(&x).max_abs_diff(&profile.eval(&x)) < 1e-12 * profile.eval(&x).norm());
        let grid = BallGrid { angular_order: 6, radial_intervals: 32, ..BallGrid::default() };
        let direct = SampledBallField::new(Arc::new(profile), grid).unwrap();
        let tabulated = SampledBallField::new(Arc::new(table), grid).unwrap();
        for rho in [0.01, 0.5] {
            let (u, v) = (tabulated.density_ratio(rho).unwrap(), direct.density_ratio(rho).unwrap());
            assert!((u / v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn toric_cone_solves_the_system() {
        let r = ym_system_residual(&ToricAbelianCone { base_dim: 4, c: 1.5 }, &ResidualGrid::default()).unwrap();
        assert!(r.res1 < 1e-6 && r.res2 < 1e-6, "{r:?}");
        let zero = ym_system_residual(&ToricAbelianCone { base_dim: 4, c: 0.0 }, &ResidualGrid::default()).unwrap();
        assert_eq!((zero.res1, zero.res2), (0.0, 0.0));
    }

    /// Abelian `A = e^{kt} sin(theta_1) dtheta_2`: `d^*F = A`, so the system
    /// reduces to `k^2 - (n-4) k - 1 = 0`.
    struct ExponentialMode {
        k: f64,
    }

    impl CylinderPath for ExponentialMode {
        fn base_dim(&self) -> usize {
            4
        }
        fn group(&self) -> GroupId {
            GroupId::U1
        }
        fn potential(&self, theta: &[f64], t: f64) -> (Vec<AlgebraElement>, AlgebraElement) {
            let mut a = vec![AlgebraElement::U1(0.0); 4];
            a[1] = AlgebraElement::U1((self.k * t).exp() * theta[0].sin());
            (a, AlgebraElement::U1(0.0))
        }
    }

    #[test]
    fn exponential_mode_matches_indicial_root() {
        let k = 0.5 * (1.0 + 5f64.sqrt());
        let r = ym_system_residual(&ExponentialMode { k }, &ResidualGrid::default()).unwrap();
        assert!(r.res1 < 1e-6 && r.res2 < 1e-6, "{r:?}");
        let off = ym_system_residual(&ExponentialMode { k: 1.0 }, &ResidualGrid::default()).unwrap();
        assert!(off.res1 > 0.1);
    }

    /// Pure gauge `A + beta dt = -dg g^{-1}` for `g = exp(a e3) exp(b e1)`.
    struct GaugeMotion;

    impl GaugeMotion {
        fn ab(y: &[f64]) -> (f64, f64, [f64; 5], [f64; 5]) {
            let t = y[4];
            let a = 0.4 * (y[0] + 0.5 * t).sin() + 0.2 * y[2].cos();
            let b = 0.3 * (y[1] - t).cos() + 0.1 * (y[3] + y[0]).sin();
            let da = [0.4 * (y[0] + 0.5 * t).cos(), 0.0, -0.2 * y[2].sin(), 0.0, 0.2 * (y[0] + 0.5 * t).cos()];
            let c = 0.1 * (y[3] + y[0]).cos();
            let s = 0.3 * (y[1] - t).sin();
            let db = [c, -s, 0.0, c, s];
            (a, b, da, db)
        }
    }

    impl CylinderPath for GaugeMotion {
        fn base_dim(&self) -> usize {
            4
        }
        fn group(&self) -> GroupId {
            GroupId::Su2
        }
        fn potential(&self, theta: &[f64], t: f64) -> (Vec<AlgebraElement>, AlgebraElement) {
            let y = [theta[0], theta[1], theta[2], theta[3], t];
            let (a, _, da, db) = Self::ab(&y);
            let e3 = AlgebraElement::Su2([0.0, 0.0, 1.0]);
            let turned = exp_map(&e3.scale(a)).ad(&AlgebraElement::Su2([1.0, 0.0, 0.0]));
            let comp = |k: usize| -(e3.scale(da[k]) + turned.scale(db[k]));
            ((0..4).map(comp).collect(), comp(4))
        }
    }

    #[test]
    fn pure_gauge_motion_has_zero_residual() {
        let grid = ResidualGrid::default();
        let r = ym_system_residual(&GaugeMotion, &grid).unwrap();
        assert!(r.res1 < 1e-6 && r.res2 < 1e-6, "{r:?}");
        // The bracket 2 [beta, A'] is not negligible on this path.
        let y = [0.3, 1.1, 2.0, 0.4];
        let h = 1e-5;
        let (a0, b0) = GaugeMotion.potential(&y, 0.5);
        let (a1, _) = GaugeMotion.potential(&y, 0.5 + h);
        let adot = (a1[0] - a0[0]).scale(1.0 / h);
        assert!(b0.bracket(&adot).norm() > 1e-3);
    }

    struct Kink;

    impl CylinderPath for Kink {
        fn base_dim(&self) -> usize {
            4
        }
        fn group(&self) -> GroupId {
            GroupId::U1
        }
        fn potential(&self, theta: &[f64], _t: f64) -> (Vec<AlgebraElement>, AlgebraElement) {
            let mut a = vec![AlgebraElement::U1(0.0); 4];
            a[1] = AlgebraElement::U1((theta[0] - PI).abs());
            (a, AlgebraElement::U1(0.0))
        }
    }

    #[test]
    fn kinked_path_is_rejected() {
        assert!(matches!(
            ym_system_residual(&Kink, &ResidualGrid::default()),
            Err(ConeError::InsufficientSmoothness { .. })
        ));
    }

    #[test]
    fn builtins_by_name() {
        for name in BUILTIN_FIELDS {
            assert_eq!(builtin_field(name, 6).unwrap().dimension(), 6);
        }
        assert!(builtin_field("hedgehog", 5).is_err());
    }
}
