//! The Yang-Mills functional on the lattice, its exact gradient and Hessian,
//! the Jacobi operator and its spectrum on the Coulomb slice, and the
//! indicial roots driving the asymptotic analysis.
//!
//! The action is `E(U) = sum_p spacing^dim <F_p, F_p>` with
//! `F_p = log(P_p) / spacing^2`. The gradient is normalized by
//! `d/dt E(perturb(U, a, t)) = 2 <grad E(U), a>`, and coincides with
//! `d_A^* F_A` for the discrete operators of [`crate::lattice`].

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{left_jacobian_inv, AlgebraElement, AlgebraError};
use crate::dense;
use crate::lattice::{d_a0, d_a0_star, LinkField, OneForm, PlaquetteFrame, ZeroForm, ORIENTATION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("eigen-solve did not converge: worst residual {residual:e}")]
    NonConvergence { residual: f64 },
    #[error("requested {requested} eigenpairs but the slice has dimension {available}")]
    Count { requested: usize, available: usize },
    #[error("gamma must be positive, got {0}")]
    Gamma(f64),
}

/// Yang-Mills action.
pub fn ym_action(u: &LinkField) -> Result<f64, AlgebraError> {
    Ok(action_from_frames(u, &u.plaquette_frames()?))
}

fn action_from_frames(u: &LinkField, frames: &[PlaquetteFrame]) -> f64 {
    let l = u.lattice();
    let scale = l.spacing().powi(l.dim() as i32 - 4);
    scale * frames.iter().map(|f| f.log.inner(&f.log)).sum::<f64>()
}

fn gradient_from_frames(u: &LinkField, frames: &[PlaquetteFrame]) -> OneForm {
    let l = u.lattice();
    let inv_a3 = l.spacing().powi(-3);
    let mut out = OneForm::zeros(l, u.group());
    for fr in frames {
        for i in 0..4 {
            out.add_at(fr.links[i], fr.w[i].ad_inv(&fr.log).scale(ORIENTATION[i] * inv_a3));
        }
    }
    out
}

/// Exact gradient of [`ym_action`] in the perturbation chart.
pub fn ym_gradient(u: &LinkField) -> Result<OneForm, AlgebraError> {
    Ok(gradient_from_frames(u, &u.plaquette_frames()?))
}

/// Action and gradient from a single pass over the plaquettes.
pub fn ym_action_and_gradient(u: &LinkField) -> Result<(f64, OneForm), AlgebraError> {
    let frames = u.plaquette_frames()?;
    Ok((action_from_frames(u, &frames), gradient_from_frames(u, &frames)))
}

/// Derivative of [`ym_gradient`] at a fixed field, with the plaquette
/// geometry cached.
pub struct HessianOperator<'a> {
    u: &'a LinkField,
    frames: Vec<PlaquetteFrame>,
}

impl<'a> HessianOperator<'a> {
    pub fn new(u: &'a LinkField) -> Result<Self, AlgebraError> {
        Ok(HessianOperator {
            u,
            frames: u.plaquette_frames()?,
        })
    }

    /// `d/dt ym_gradient(perturb(U, w, t))` at `t = 0`.
    pub fn apply(&self, w: &OneForm) -> OneForm {
        let l = self.u.lattice();
        let a = l.spacing();
        let inv_a3 = a.powi(-3);
        let mut out = OneForm::zeros(l, self.u.group());
        for fr in &self.frames {
            let t: [AlgebraElement; 4] =
                std::array::from_fn(|i| fr.w[i].ad(&w.get(fr.links[i])).scale(a * ORIENTATION[i]));
            let y = t[0] + t[1] + t[2] + t[3];
            let dphi = left_jacobian_inv(&fr.log, &y);
            let z = [AlgebraElement::zero(self.u.group()), t[0], t[0] + t[1] + t[2], y];
            for i in 0..4 {
                let v = dphi - z[i].bracket(&fr.log);
                out.add_at(fr.links[i], fr.w[i].ad_inv(&v).scale(ORIENTATION[i] * inv_a3));
            }
        }
        out
    }
}

/// Exact Hessian-vector product of the action (derivative of the gradient).
pub fn hessian_apply(w: &OneForm, u: &LinkField) -> Result<OneForm, AlgebraError> {
    Ok(HessianOperator::new(u)?.apply(w))
}

/// Jacobi operator `L = Hess + d_{A0} d_{A0}^*` at a background `U0`.
///
/// On the Coulomb slice `d_{A0}^* a = 0` the added term vanishes and `L`
/// restricts to the Hessian; off the slice it makes `L` elliptic, so that on
/// a flat U(1) background `L` is the full Hodge Laplacian.
pub struct JacobiOperator<'a> {
    hessian: HessianOperator<'a>,
}

impl<'a> JacobiOperator<'a> {
    pub fn new(u0: &'a LinkField) -> Result<Self, AlgebraError> {
        Ok(JacobiOperator {
            hessian: HessianOperator::new(u0)?,
        })
    }

    pub fn apply(&self, w: &OneForm) -> OneForm {
        let u0 = self.hessian.u;
        self.hessian.apply(w) + d_a0(&d_a0_star(w, u0), u0)
    }
}

pub fn jacobi_apply(w: &OneForm, u0: &LinkField) -> Result<OneForm, AlgebraError> {
    Ok(JacobiOperator::new(u0)?.apply(w))
}

/// Lowest eigenpairs of the Jacobi operator on the Coulomb slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenforms: Vec<OneForm>,
    pub residuals: Vec<f64>,
    pub gram_deviation: f64,
    pub slice_dim: usize,
    pub zero_modes: usize,
    pub asymmetry: f64,
}

impl SpectrumReport {
    /// Smallest eigenvalue above `tol`, the slowest decay rate of the
    /// linearized flow transverse to the critical manifold.
    pub fn smallest_positive(&self, tol: f64) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|&m| m > tol)
    }

    pub fn negative_count(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&m| m < -tol).count()
    }
}

/// Dense matrix of a linear map on 1-forms in component coordinates.
fn operator_matrix(n: usize, template: &OneForm, mut apply: impl FnMut(&OneForm) -> OneForm) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(n, n);
    let mut e = template.scaled(0.0);
    for j in 0..n {
        e.data_mut()[j] = 1.0;
        let col = apply(&e);
        for (i, v) in col.data().iter().enumerate() {
            if *v != 0.0 {
                m.write(i, j, *v);
            }
        }
        e.data_mut()[j] = 0.0;
    }
    m
}

/// Lowest `count` eigenpairs of `L` restricted to `{a : d_{A0}^* a = 0}`,
/// computed by a dense symmetric solve of `P L P + sigma (1 - P)` where `P`
/// is the orthogonal projector onto the slice and `sigma` exceeds the
/// spectral radius of `L`.
pub fn spectrum(u0: &LinkField, count: usize) -> Result<SpectrumReport, FunctionalError> {
    let l = u0.lattice();
    let group = u0.group();
    let m = group.algebra_dim();
    let n = l.n_links() * m;
    let n0 = l.n_sites() * m;
    let jac = JacobiOperator::new(u0)?;
    let template = OneForm::zeros(l, group);

    let mut lmat = operator_matrix(n, &template, |w| jac.apply(w));
    let mut asymmetry: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (lmat.read(i, j), lmat.read(j, i));
            asymmetry = asymmetry.max((a - b).abs());
            let s = 0.5 * (a + b);
            lmat.write(i, j, s);
            lmat.write(j, i, s);
        }
    }

    // Columns of d_{A0}, and an orthonormal basis of its image.
    let mut dmat = Mat::<f64>::zeros(n, n0);
    let mut e0 = ZeroForm::zeros(l, group);
    for j in 0..n0 {
        e0.data_mut()[j] = 1.0;
        let col = d_a0(&e0, u0);
        for (i, v) in col.data().iter().enumerate() {
            if *v != 0.0 {
                dmat.write(i, j, *v);
            }
        }
        e0.data_mut()[j] = 0.0;
    }
    let q = dense::column_space(&dmat, 1e-9);
    let slice_dim = n - q.ncols();
    if count > slice_dim {
        return Err(FunctionalError::Count {
            requested: count,
            available: slice_dim,
        });
    }

    let sigma = (0..n)
        .map(|i| (0..n).map(|j| lmat.read(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;

    // P L P + sigma Q Q^T with P = 1 - Q Q^T.
    let qt_l = q.transpose() * &lmat;
    let qt_l_q = &qt_l * &q;
    let q_qtl = &q * &qt_l;
    let mut mmat = lmat.clone();
    mmat -= &q_qtl;
    mmat -= q_qtl.transpose();
    let mut inner = qt_l_q;
    for i in 0..inner.nrows() {
        inner.write(i, i, inner.read(i, i) + sigma);
    }
    mmat += &q * (&inner * q.transpose());

    let (vals, vecs) = dense::symmetric_eigen(&mmat);
    let norm_scale = 1.0 / (l.cell_volume() * group.inner_weight()).sqrt();
    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenforms = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for k in 0..count {
        let data: Vec<f64> = (0..n).map(|r| vecs.read(r, k) * norm_scale).collect();
        let phi = OneForm::from_data(l, group, data).expect("consistent length");
        let mu = vals[k];
        let mut r = jac.apply(&phi);
        // Restrict the residual to the slice.
        let rv: Vec<f64> = r.data().to_vec();
        let coeff: Vec<f64> = (0..q.ncols())
            .map(|c| (0..n).map(|i| q.read(i, c) * rv[i]).sum())
            .collect();
        for (i, x) in r.data_mut().iter_mut().enumerate() {
            let proj: f64 = coeff.iter().enumerate().map(|(c, a)| a * q.read(i, c)).sum();
            *x -= proj;
        }
        r.axpy(-mu, &phi);
        residuals.push(r.norm());
        eigenvalues.push(mu);
        eigenforms.push(phi);
    }

    let mut gram_deviation: f64 = 0.0;
    for i in 0..count {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            gram_deviation = gram_deviation.max((eigenforms[i].dot(&eigenforms[j]) - target).abs());
        }
    }
    let zero_modes = vals[..slice_dim].iter().filter(|v| v.abs() < 1e-8 * sigma).count();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > 1e-8 * sigma || gram_deviation > 1e-8 {
        return Err(FunctionalError::NonConvergence {
            residual: worst.max(gram_deviation),
        });
    }
    Ok(SpectrumReport {
        eigenvalues,
        eigenforms,
        residuals,
        gram_deviation,
        slice_dim,
        zero_modes,
        asymmetry,
    })
}

/// Roots `lambda^+-` of `lambda^2 - gamma lambda + mu = 0` for every
/// eigenvalue, with the decay and growth gaps derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndicialRoots {
    pub gamma: f64,
    pub roots: Vec<(Complex64, Complex64)>,
    /// Smallest positive real part, if any.
    pub delta1: Option<f64>,
    /// Smallest modulus among negative real parts, if any.
    pub delta2: Option<f64>,
    /// Some root has vanishing real part.
    pub degenerate: bool,
}

pub fn indicial_roots(mu: &[f64], gamma: f64) -> Result<IndicialRoots, FunctionalError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(FunctionalError::Gamma(gamma));
    }
    let mut roots = Vec::with_capacity(mu.len());
    let mut delta1: Option<f64> = None;
    let mut delta2: Option<f64> = None;
    let mut degenerate = false;
    for &m in mu {
        let disc = gamma * gamma - 4.0 * m;
        let (plus, minus) = if disc >= 0.0 {
            let s = disc.sqrt();
            // Avoid cancellation in the smaller root.
            let big = 0.5 * (gamma + s);
            let small = if big != 0.0 { m / big } else { 0.5 * (gamma - s) };
            (Complex64::new(big, 0.0), Complex64::new(small, 0.0))
        } else {
            let s = (-disc).sqrt();
            (Complex64::new(0.5 * gamma, 0.5 * s), Complex64::new(0.5 * gamma, -0.5 * s))
        };
        for r in [plus, minus] {
            let re = r.re;
            if re.abs() <= 1e-12 * (1.0 + gamma) {
                degenerate = true;
            } else if re > 0.0 {
                delta1 = Some(delta1.map_or(re, |d| d.min(re)));
            } else {
                delta2 = Some(delta2.map_or(-re, |d| d.min(-re)));
            }
        }
        roots.push((plus, minus));
    }
    Ok(IndicialRoots {
        gamma,
        roots,
        delta1,
        delta2,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::GroupId;
    use crate::configs::{embed_u1_in_su2, one_flux_u1};
    use crate::lattice::{curvature, d_a1_star, GaugeField, Lattice};
    use crate::rng::LabRng;
    use std::f64::consts::PI;

    fn random_su2(dim: usize, n: usize, a: f64, amp: f64, seed: u64) -> (LinkField, LabRng) {
        let l = Lattice::cubic(dim, n, a).unwrap();
        let mut rng = LabRng::new(seed);
        let u = LinkField::random_near_identity(&l, GroupId::Su2, amp, &mut rng);
        (u, rng)
    }

    #[test]
    fn one_flux_action_value() {
        let u = one_flux_u1(4, 1, 1.0).unwrap();
        assert!((ym_action(&u).unwrap() - PI * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_flux_is_critical() {
        let u = one_flux_u1(4, 1, 1.0).unwrap();
        assert!(ym_gradient(&u).unwrap().norm() < 1e-10);
        assert!(ym_gradient(&embed_u1_in_su2(&u)).unwrap().norm() < 1e-10);
    }

    #[test]
    fn gradient_is_codifferential_of_curvature() {
        let (u, _) = random_su2(3, 3, 0.9, 1.5, 1);
        let g = ym_gradient(&u).unwrap();
        let h = d_a1_star(&curvature(&u).unwrap(), &u).unwrap();
        assert!((g - h).norm_sup() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (u, mut rng) = random_su2(3, 3, 0.8, 2.0, seed);
            let a = OneForm::random(u.lattice(), GroupId::Su2, 1.0, &mut rng);
            let h = 1e-5;
            let fd = (ym_action(&u.perturb(&a, h)).unwrap() - ym_action(&u.perturb(&a, -h)).unwrap()) / (2.0 * h);
            let an = 2.0 * ym_gradient(&u).unwrap().dot(&a);
            assert!((fd - an).abs() < 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        for seed in 0..5 {
            let (u, mut rng) = random_su2(3, 3, 0.8, 2.0, 100 + seed);
            let a = OneForm::random(u.lattice(), GroupId::Su2, 1.0, &mut rng);
            let h = 1e-4;
            let fd = (ym_gradient(&u.perturb(&a, h)).unwrap() - ym_gradient(&u.perturb(&a, -h)).unwrap()).scaled(0.5 / h);
            let an = hessian_apply(&a, &u).unwrap();
            let rel = (fd - an.clone()).norm() / an.norm();
            assert!(rel < 1e-5, "{rel}");
        }
    }

    #[test]
    fn jacobi_matches_finite_differences_on_slice_vectors() {
        // At a gauge-rotated flat background the slice vectors are those with d_{A0}^* a = 0.
        let l = Lattice::cubic(3, 3, 1.0).unwrap();
        let mut rng = LabRng::new(5);
        let g = GaugeField::random(&l, GroupId::Su2, 1.0, &mut rng);
        let u0 = LinkField::identity(&l, GroupId::Su2).gauge_transform(&g);
        let raw = OneForm::random(&l, GroupId::Su2, 1.0, &mut rng);
        let lap_inv_div = {
            // Remove the gauge component with a few CG iterations on the flat Laplacian.
            let b = d_a0_star(&raw, &u0);
            let mut x = ZeroForm::zeros(&l, GroupId::Su2);
            let mut r = b.clone();
            let mut p = r.clone();
            for _ in 0..200 {
                let ap = d_a0_star(&d_a0(&p, &u0), &u0);
                let rr = r.dot(&r);
                if rr < 1e-28 {
                    break;
                }
                let alpha = rr / p.dot(&ap);
                x.axpy(alpha, &p);
                r.axpy(-alpha, &ap);
                let beta = r.dot(&r) / rr;
                p = r.clone() + p.scaled(beta);
            }
            x
        };
        let a = raw - d_a0(&lap_inv_div, &u0);
        assert!(d_a0_star(&a, &u0).norm() < 1e-10);
        let h = 1e-4;
        let fd = (ym_gradient(&u0.perturb(&a, h)).unwrap() - ym_gradient(&u0.perturb(&a, -h)).unwrap()).scaled(0.5 / h);
        let an = jacobi_apply(&a, &u0).unwrap();
        assert!((fd - an.clone()).norm() / an.norm() < 1e-5);
    }

    #[test]
    fn jacobi_is_self_adjoint_at_critical_points() {
        let u0 = embed_u1_in_su2(&one_flux_u1(4, 1, 1.0).unwrap());
        let mut rng = LabRng::new(8);
        let a = OneForm::random(u0.lattice(), GroupId::Su2, 1.0, &mut rng);
        let b = OneForm::random(u0.lattice(), GroupId::Su2, 1.0, &mut rng);
        let op = JacobiOperator::new(&u0).unwrap();
        let lhs = op.apply(&a).dot(&b);
        let rhs = a.dot(&op.apply(&b));
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gauge_invariance_of_action() {
        let (u, mut rng) = random_su2(3, 3, 1.0, 2.0, 12);
        let e = ym_action(&u).unwrap();
        for _ in 0..20 {
            let g = GaugeField::random(u.lattice(), GroupId::Su2, 2.0, &mut rng);
            assert!((ym_action(&u.gauge_transform(&g)).unwrap() - e).abs() < 1e-10);
        }
    }

    #[test]
    fn dissipation_identity_single_step() {
        let a = 1.0;
        let (u, _) = random_su2(3, 3, a, 1.0, 4);
        let (e0, g) = ym_action_and_gradient(&u).unwrap();
        let dt = 1e-3 * a * a;
        let e1 = ym_action(&u.perturb(&g, -dt)).unwrap();
        let predicted = -2.0 * g.dot(&g);
        let rel = ((e1 - e0) / dt - predicted).abs() / predicted.abs();
        assert!(rel < 0.05, "{rel}");
    }

    #[test]
    fn u1_flat_spectrum_matches_fourier() {
        let a = 1.0;
        let l = Lattice::cubic(2, 4, a).unwrap();
        let u0 = LinkField::identity(&l, GroupId::U1);
        let rep = spectrum(&u0, 17).unwrap();
        assert_eq!(rep.slice_dim, 32 - 15);
        let mut oracle = vec![0.0, 0.0];
        for k1 in 0..4 {
            for k2 in 0..4 {
                if k1 + k2 == 0 {
                    continue;
                }
                let s = |k: usize| (PI * k as f64 / 4.0).sin().powi(2);
                oracle.push(4.0 / (a * a) * (s(k1) + s(k2)));
            }
        }
        oracle.sort_by(f64::total_cmp);
        for (x, y) in rep.eigenvalues.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        assert_eq!(rep.zero_modes, 2);
        assert!((rep.smallest_positive(1e-8).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn embedded_flux_has_negative_modes() {
        let u0 = embed_u1_in_su2(&one_flux_u1(4, 1, 1.0).unwrap());
        let rep = spectrum(&u0, 4).unwrap();
        assert!(rep.eigenvalues[0] < -0.1, "{:?}", rep.eigenvalues);
        assert!(rep.residuals.iter().all(|&r| r < 1e-8));
    }

    #[test]
    fn indicial_examples() {
        let r = indicial_roots(&[0.0, -2.0, 1.0], 1.0).unwrap();
        assert_eq!(r.roots[0].0.re, 1.0);
        assert_eq!(r.roots[0].1.re, 0.0);
        assert!((r.roots[1].0.re - 2.0).abs() < 1e-15 && (r.roots[1].1.re + 1.0).abs() < 1e-15);
        assert!((r.roots[2].0.im - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(r.delta2, Some(1.0));
        assert_eq!(r.delta1, Some(0.5));
        assert!(r.degenerate);
        assert!(indicial_roots(&[1.0], 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn indicial_root_algebra(mu in -50.0f64..50.0, gamma in 0.1f64..10.0) {
            let r = indicial_roots(&[mu], gamma).unwrap();
            let (p, m) = r.roots[0];
            proptest::prop_assert!(((p + m).re - gamma).abs() < 1e-12 * (1.0 + gamma));
            proptest::prop_assert!(((p * m).re - mu).abs() < 1e-12 * (1.0 + mu.abs() + gamma * gamma));
        }
    }
}
