//! Gauge fixing around a reference connection `U0`: the Coulomb slice
//! `d_{A0}^* (A - A0) = 0`, the Laplacian solves behind it, the split of a
//! 0-form into its `Ker d_{A0}` part and the orthogonal complement, the
//! temporal-gauge ODE, and the two-step standard form of a path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{exp_map, log_map, quat_mul, AlgebraElement, AlgebraError, GroupElement};
use crate::dense;
use crate::lattice::{d_a0, d_a0_star, GaugeField, LatticeError, LinkField, OneForm, PathConnection, ZeroForm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaugeError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("conjugate directions stopped after {iterations} iterations at relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("right-hand side has a kernel component of relative size {relative:e}")]
    KernelComponent { relative: f64 },
    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("standard form holds only on the first {completed} of {total} times: {cause}")]
    Partial {
        completed: usize,
        total: usize,
        cause: Box<GaugeError>,
        prefix: Option<Box<StandardForm>>,
    },
}

/// L2-orthonormal basis of `Ker d_{A0}` on 0-forms (covariantly constant
/// sections).
///
/// A parallel section is fixed by its value at the origin, so candidates are
/// obtained by transporting each algebra basis vector along a spanning tree;
/// the combinations that are parallel on every link form the kernel.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    vectors: Vec<ZeroForm>,
}

impl KernelBasis {
    pub fn new(u0: &LinkField) -> Self {
        let l = u0.lattice();
        let group = u0.group();
        let m = group.algebra_dim();
        let mut candidates = Vec::with_capacity(m);
        for i in 0..m {
            let mut h = ZeroForm::zeros(l, group);
            let mut seen = vec![false; l.n_sites()];
            seen[0] = true;
            h.set(0, AlgebraElement::basis(group, i));
            let mut queue = std::collections::VecDeque::from([0usize]);
            while let Some(x) = queue.pop_front() {
                let hx = h.get(x);
                for mu in 0..l.dim() {
                    let y = l.fwd(x, mu);
                    if !seen[y] {
                        seen[y] = true;
                        h.set(y, u0.link(x, mu).ad_inv(&hx));
                        queue.push_back(y);
                    }
                    let z = l.bwd(x, mu);
                    if !seen[z] {
                        seen[z] = true;
                        h.set(z, u0.link(z, mu).ad(&hx));
                        queue.push_back(z);
                    }
                }
            }
            candidates.push(h);
        }
        let images: Vec<OneForm> = candidates.iter().map(|h| d_a0(h, u0)).collect();
        let gram = faer::Mat::from_fn(m, m, |i, j| images[i].dot(&images[j]));
        let h_scale = candidates[0].dot(&candidates[0]) / (l.spacing() * l.spacing());
        let null = dense::null_space(&gram, 1e-18 * h_scale);
        let mut vectors: Vec<ZeroForm> = Vec::new();
        for c in null {
            let mut k = ZeroForm::zeros(l, group);
            for (coef, h) in c.iter().zip(&candidates) {
                k.axpy(*coef, h);
            }
            for _ in 0..2 {
                for q in &vectors {
                    let p = k.dot(q);
                    k.axpy(-p, q);
                }
            }
            let n = k.norm();
            vectors.push(k.scaled(1.0 / n));
        }
        KernelBasis { vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[ZeroForm] {
        &self.vectors
    }

    /// Orthogonal projection onto the kernel.
    pub fn project(&self, f: &ZeroForm) -> ZeroForm {
        let mut out = f.scaled(0.0);
        for k in &self.vectors {
            out.axpy(f.dot(k), k);
        }
        out
    }

    /// Orthogonal projection onto the complement of the kernel.
    pub fn project_out(&self, f: &ZeroForm) -> ZeroForm {
        let mut out = f.clone();
        for k in &self.vectors {
            let c = out.dot(k);
            out.axpy(-c, k);
        }
        out
    }
}

/// Relative residual target for the Laplacian solves.
pub const SOLVE_TOL: f64 = 1e-10;

fn conjugate_directions(
    rhs: &ZeroForm,
    apply: impl Fn(&ZeroForm) -> ZeroForm,
    project: impl Fn(&ZeroForm) -> ZeroForm,
) -> Result<ZeroForm, GaugeError> {
    let b = project(rhs);
    let bnorm = b.norm();
    let mut x = b.scaled(0.0);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let cap = 10 * rhs.data().len();
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut iterations = 0;
    while iterations < cap {
        if rr.sqrt() <= 1e-13 * bnorm {
            break;
        }
        let ap = project(&apply(&p));
        let alpha = rr / p.dot(&ap);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        // Keep the recursion inside the admissible subspace.
        r = project(&r);
        let rr_new = r.dot(&r);
        p = r.clone() + p.scaled(rr_new / rr);
        rr = rr_new;
        iterations += 1;
    }
    let x = project(&x);
    let true_res = (project(&apply(&x)) - b).norm() / bnorm;
    if true_res > SOLVE_TOL || !true_res.is_finite() {
        return Err(GaugeError::NonConvergence {
            iterations,
            residual: true_res,
        });
    }
    Ok(x)
}

/// Solves `Delta_A beta = rhs` for `beta` orthogonal to `kernel`, where
/// `kernel` spans `Ker d_A`.
pub fn solve_laplacian(rhs: &ZeroForm, u: &LinkField, kernel: &KernelBasis) -> Result<ZeroForm, GaugeError> {
    let rn = rhs.norm();
    if rn > 0.0 {
        let k = kernel.project(rhs).norm() / rn;
        if k > SOLVE_TOL {
            return Err(GaugeError::KernelComponent { relative: k });
        }
    }
    conjugate_directions(rhs, |f| d_a0_star(&d_a0(f, u), u), |f| kernel.project_out(f))
}

/// Green operator of `Delta_A` with values in `Ker(d_{A0})^perp`: solves
/// `P Delta_A beta = P rhs` for `beta = P beta`, with `P` the projection
/// away from `kernel0 = Ker d_{A0}`.
pub fn green_operator(rhs: &ZeroForm, u: &LinkField, kernel0: &KernelBasis) -> Result<ZeroForm, GaugeError> {
    conjugate_directions(rhs, |f| d_a0_star(&d_a0(f, u), u), |f| kernel0.project_out(f))
}

/// Splits `beta` into its `Ker d_{A0}` part and the orthogonal complement,
/// `beta_perp = (d^* d)^{-1} d^* d beta`.
pub fn decompose_kernel(beta: &ZeroForm, kernel: &KernelBasis) -> (ZeroForm, ZeroForm) {
    let ker = kernel.project(beta);
    let perp = beta.clone() - ker.clone();
    (ker, perp)
}

/// Correction 0-form of the gauge-fixed flow: `beta` in `Ker(d_{A0})^perp`
/// with `Delta_A beta = (d_A^* - d_{A0}^*) adot`, where `A` is `U0`
/// perturbed by `a`.
pub fn solve_beta(a: &OneForm, adot: &OneForm, u0: &LinkField, kernel0: &KernelBasis) -> Result<ZeroForm, GaugeError> {
    let u = u0.perturb(a, 1.0);
    solve_beta_at(&u, adot, u0, kernel0)
}

pub(crate) fn solve_beta_at(u: &LinkField, adot: &OneForm, u0: &LinkField, kernel0: &KernelBasis) -> Result<ZeroForm, GaugeError> {
    let rhs = d_a0_star(adot, u) - d_a0_star(adot, u0);
    green_operator(&rhs, u, kernel0)
}

/// Options of the Coulomb projection.
#[derive(Debug, Clone, Copy)]
pub struct CoulombOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest admissible `|extract(U, U0)|_sup`; `None` means `0.3 / spacing`.
    pub smallness: Option<f64>,
}

impl Default for CoulombOptions {
    fn default() -> Self {
        CoulombOptions {
            tol: 1e-10,
            max_iter: 50,
            smallness: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoulombProjection {
    pub gauge: GaugeField,
    pub projected: LinkField,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds `g` with `d_{A0}^* extract(g(U), U0) = 0`, normalized so that `g`
/// has no stabilizer component at the origin site.
pub fn coulomb_project(
    u: &LinkField,
    u0: &LinkField,
    kernel0: &KernelBasis,
    opts: &CoulombOptions,
) -> Result<CoulombProjection, GaugeError> {
    let l = u0.lattice();
    let eps1 = opts.smallness.unwrap_or(0.3 / l.spacing());
    let a = u.extract(u0)?;
    let size = a.norm_sup();
    let res0 = d_a0_star(&a, u0).norm();
    if size > eps1 {
        return Err(GaugeError::NewtonDivergence {
            iterations: 0,
            residual: res0,
        });
    }
    let mut g = GaugeField::identity(l, u0.group());
    let mut current = u.clone();
    let mut residual = res0;
    let mut iterations = 0;
    loop {
        if residual < opts.tol {
            break;
        }
        if iterations >= opts.max_iter || !residual.is_finite() || residual > 1e3 * (1.0 + res0) {
            return Err(GaugeError::NewtonDivergence { iterations, residual });
        }
        // The divergence is orthogonal to the kernel; near convergence its
        // roundoff is not, so the projected solve is used here.
        let c = d_a0_star(&current.extract(u0)?, u0);
        let h = green_operator(&c, u0, kernel0)?;
        g = GaugeField::exp(&h).compose(&g);
        current = u.gauge_transform(&g);
        residual = d_a0_star(&current.extract(u0)?, u0).norm();
        iterations += 1;
    }
    let s = origin_normalizer(&g, kernel0)?;
    let g = s.compose(&g);
    let projected = u.gauge_transform(&g);
    let residual = d_a0_star(&projected.extract(u0)?, u0).norm();
    Ok(CoulombProjection {
        gauge: g,
        projected,
        residual,
        iterations,
    })
}

/// Stabilizer element `s = exp(k)` with `k` parallel, chosen so that
/// `log((s g)(origin))` is orthogonal to the values of parallel sections at
/// the origin.
fn origin_normalizer(g: &GaugeField, kernel0: &KernelBasis) -> Result<GaugeField, GaugeError> {
    let l = g.lattice();
    let group = g.group();
    if kernel0.dim() == 0 {
        return Ok(GaugeField::identity(l, group));
    }
    let origin_vals: Vec<AlgebraElement> = kernel0.vectors().iter().map(|k| k.get(0)).collect();
    let nk = origin_vals.len();
    let gram = faer::Mat::from_fn(nk, nk, |i, j| origin_vals[i].inner(&origin_vals[j]));
    let gram_inv = {
        let (vals, vecs) = dense::symmetric_eigen(&gram);
        faer::Mat::from_fn(nk, nk, |i, j| (0..nk).map(|k| vecs.read(i, k) * vecs.read(j, k) / vals[k]).sum::<f64>())
    };
    // Coefficients c with sum_j c_j v_j = orthogonal projection of x onto span(v).
    let coeffs = |x: &AlgebraElement| -> Vec<f64> {
        let b: Vec<f64> = origin_vals.iter().map(|v| v.inner(x)).collect();
        (0..nk).map(|i| (0..nk).map(|j| gram_inv.read(i, j) * b[j]).sum()).collect()
    };
    let combine = |c: &[f64]| -> AlgebraElement {
        c.iter()
            .zip(&origin_vals)
            .fold(AlgebraElement::zero(group), |acc, (ci, v)| acc + v.scale(*ci))
    };
    let g0 = g.value(0);
    let mut c = vec![0.0; nk];
    for _ in 0..100 {
        let r = log_map(&(exp_map(&combine(&c)) * g0))?;
        let dc = coeffs(&r);
        let step: f64 = combine(&dc).norm();
        for (ci, d) in c.iter_mut().zip(&dc) {
            *ci -= d;
        }
        if step < 1e-15 {
            break;
        }
    }
    let mut k = ZeroForm::zeros(l, group);
    for (ci, v) in c.iter().zip(kernel0.vectors()) {
        k.axpy(*ci, v);
    }
    Ok(GaugeField::exp(&k))
}

/// Integrates `dg/dt = g beta(t)` site by site with the classical 4-stage
/// scheme in the ambient coordinates, projecting back to the group after
/// every step. `beta` is sampled on the uniform grid `times`; midpoint values
/// come from 4-point interpolation so the scheme keeps fourth order.
pub fn temporal_gauge_ode(beta: &[ZeroForm], times: &[f64], start: &GaugeField) -> Vec<GaugeField> {
    assert_eq!(beta.len(), times.len(), "one beta per time");
    let l = start.lattice();
    let group = start.group();
    let mut out = Vec::with_capacity(times.len());
    out.push(start.clone());
    let nt = times.len();
    for k in 0..nt.saturating_sub(1) {
        let h = times[k + 1] - times[k];
        let mid = midpoint(beta, k);
        let prev = out.last().expect("nonempty");
        let values: Vec<GroupElement> = (0..l.n_sites())
            .map(|x| {
                let q = prev.value(x);
                let b0 = beta[k].get(x);
                let bm = mid.get(x);
                let b1 = beta[k + 1].get(x);
                rk4_site(q, [b0, bm, b1], h)
            })
            .collect();
        out.push(GaugeField::from_values(l, group, values).expect("consistent shape"));
    }
    out
}

fn midpoint(beta: &[ZeroForm], k: usize) -> ZeroForm {
    let n = beta.len();
    let (idx, w): ([usize; 4], [f64; 4]) = if n < 4 {
        return (beta[k].clone() + beta[k + 1].clone()).scaled(0.5);
    } else if k == 0 {
        ([0, 1, 2, 3], [5.0, 15.0, -5.0, 1.0])
    } else if k + 2 >= n {
        ([n - 4, n - 3, n - 2, n - 1], [1.0, -5.0, 15.0, 5.0])
    } else {
        ([k - 1, k, k + 1, k + 2], [-1.0, 9.0, 9.0, -1.0])
    };
    let mut out = beta[k].scaled(0.0);
    for (i, wi) in idx.iter().zip(w) {
        out.axpy(wi / 16.0, &beta[*i]);
    }
    out
}

fn ambient_rhs(q: &[f64], b: &AlgebraElement) -> Vec<f64> {
    match b {
        AlgebraElement::U1(t) => vec![-q[1] * t, q[0] * t],
        AlgebraElement::Su2(v) => quat_mul([q[0], q[1], q[2], q[3]], [0.0, v[0], v[1], v[2]]).to_vec(),
    }
}

fn rk4_site(g: GroupElement, b: [AlgebraElement; 3], h: f64) -> GroupElement {
    let q = g.components().to_vec();
    let add = |q: &[f64], k: &[f64], s: f64| -> Vec<f64> { q.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = ambient_rhs(&q, &b[0]);
    let k2 = ambient_rhs(&add(&q, &k1, 0.5 * h), &b[1]);
    let k3 = ambient_rhs(&add(&q, &k2, 0.5 * h), &b[1]);
    let k4 = ambient_rhs(&add(&q, &k3, h), &b[2]);
    let next: Vec<f64> = (0..q.len())
        .map(|i| q[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    GroupElement::from_components(g.group(), &next).expect("component count")
}

/// Residuals certifying a standard form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StandardFormCertificate {
    pub coulomb_residual: f64,
    pub perp_residual: f64,
    /// `max_t |g(t) - Id|_sup`, measured as a geodesic angle.
    pub gauge_norm: f64,
    /// `max_t |extract(A(t), U0)|_sup` of the input path.
    pub input_norm: f64,
    /// `gauge_norm / ((1 + |I|) input_norm)`, the measured constant of the
    /// gauge estimate.
    pub gauge_constant: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct StandardForm {
    pub path: PathConnection,
    /// Total gauge transformation `g2 g1` per time.
    pub gauges: Vec<GaugeField>,
    pub step1: Vec<GaugeField>,
    pub step2: Vec<GaugeField>,
    pub certificate: StandardFormCertificate,
}

impl PartialEq for StandardForm {
    fn eq(&self, other: &Self) -> bool {
        self.path == other.path && self.gauges == other.gauges && self.certificate == other.certificate
    }
}

/// `xi(s) = (dg/dt) g^{-1}` at every sample, by second-order differences of
/// `log(g(s) g(t)^{-1})`.
fn right_log_derivative(gs: &[GaugeField], h: f64) -> Result<Vec<ZeroForm>, GaugeError> {
    let n = gs.len();
    let l = gs[0].lattice();
    let group = gs[0].group();
    let rel = |s: usize, t: usize| -> Result<ZeroForm, GaugeError> {
        let mut out = ZeroForm::zeros(l, group);
        for x in 0..l.n_sites() {
            out.set(x, log_map(&(gs[s].value(x) * gs[t].value(x).inverse()))?);
        }
        Ok(out)
    };
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let d = if n == 1 {
            ZeroForm::zeros(l, group)
        } else if n == 2 {
            if t == 0 {
                rel(1, 0)?.scaled(1.0 / h)
            } else {
                rel(0, 1)?.scaled(-1.0 / h)
            }
        } else if t == 0 {
            (rel(1, 0)?.scaled(4.0) - rel(2, 0)?).scaled(0.5 / h)
        } else if t == n - 1 {
            (rel(n - 2, t)?.scaled(-4.0) + rel(n - 3, t)?).scaled(0.5 / h)
        } else {
            (rel(t + 1, t)? - rel(t - 1, t)?).scaled(0.5 / h)
        };
        out.push(d);
    }
    Ok(out)
}

/// Transformation law of the temporal component:
/// `beta' = Ad_g beta - (dg/dt) g^{-1}`.
pub fn transform_beta(beta: &[ZeroForm], gauges: &[GaugeField], h: f64) -> Result<Vec<ZeroForm>, GaugeError> {
    let xi = right_log_derivative(gauges, h)?;
    Ok(beta
        .iter()
        .zip(gauges)
        .zip(xi)
        .map(|((b, g), x)| b.gauge_transform(g) - x)
        .collect())
}

/// Two-step standard form of a path around `U0`: a Coulomb projection at
/// every time, followed by the stabilizer-valued temporal gauge that removes
/// the `Ker d_{A0}` part of the temporal component.
pub fn standard_form(path: &PathConnection, u0: &LinkField, opts: &CoulombOptions) -> Result<StandardForm, GaugeError> {
    let kernel0 = KernelBasis::new(u0);
    let total = path.len();
    let mut step1 = Vec::with_capacity(total);
    let mut failure = None;
    for (k, a) in path.connections.iter().enumerate() {
        match coulomb_project(a, u0, &kernel0, opts) {
            Ok(p) => step1.push(p),
            Err(e) => {
                failure = Some((k, e));
                break;
            }
        }
    }
    let done = step1.len();
    let finish = |n: usize| -> Result<StandardForm, GaugeError> {
        let sub = path.truncated(n);
        assemble(&sub, u0, &kernel0, &step1[..n])
    };
    match failure {
        None => finish(total),
        Some((_, cause)) => {
            let prefix = if done > 0 { finish(done).ok().map(Box::new) } else { None };
            Err(GaugeError::Partial {
                completed: done,
                total,
                cause: Box::new(cause),
                prefix,
            })
        }
    }
}

fn assemble(
    path: &PathConnection,
    u0: &LinkField,
    kernel0: &KernelBasis,
    step1: &[CoulombProjection],
) -> Result<StandardForm, GaugeError> {
    let h = path.step();
    let l = u0.lattice();
    let group = u0.group();
    let g1: Vec<GaugeField> = step1.iter().map(|p| p.gauge.clone()).collect();
    let beta1 = transform_beta(&path.beta, &g1, h)?;
    let (beta_ker, beta_perp): (Vec<ZeroForm>, Vec<ZeroForm>) =
        beta1.iter().map(|b| decompose_kernel(b, kernel0)).unzip();
    let g2 = temporal_gauge_ode(&beta_ker, &path.times, &GaugeField::identity(l, group));
    let connections: Vec<LinkField> = step1.iter().zip(&g2).map(|(p, g)| p.projected.gauge_transform(g)).collect();
    let beta_out: Vec<ZeroForm> = beta_perp.iter().zip(&g2).map(|(b, g)| b.gauge_transform(g)).collect();
    let gauges: Vec<GaugeField> = g2.iter().zip(&g1).map(|(b, a)| b.compose(a)).collect();

    let mut coulomb_residual: f64 = 0.0;
    let mut perp_residual: f64 = 0.0;
    let mut input_norm: f64 = 0.0;
    for (k, c) in connections.iter().enumerate() {
        coulomb_residual = coulomb_residual.max(d_a0_star(&c.extract(u0)?, u0).norm());
        perp_residual = perp_residual.max(kernel0.project(&beta_out[k]).norm());
        input_norm = input_norm.max(path.connections[k].extract(u0)?.norm_sup());
    }
    let gauge_norm = gauges.iter().map(|g| g.distance_from_identity()).fold(0.0, f64::max);
    let span = path.times.last().copied().unwrap_or(0.0) - path.times[0];
    let gauge_constant = if input_norm > 0.0 {
        gauge_norm / ((1.0 + span) * input_norm)
    } else {
        0.0
    };
    let holds = coulomb_residual < 1e-8 && perp_residual < 1e-8;
    Ok(StandardForm {
        path: PathConnection::new(path.times.clone(), connections, beta_out)?,
        gauges,
        step1: g1,
        step2: g2,
        certificate: StandardFormCertificate {
            coulomb_residual,
            perp_residual,
            gauge_norm,
            input_norm,
            gauge_constant,
            holds,
        },
    })
}
