//! Periodic hypercubic lattices, link fields and the discrete covariant
//! exterior calculus built on them.
//!
//! Sites are linearized with the first coordinate running fastest. A link is
//! addressed by `site * dim + mu`, a plaquette by `site * n_planes + plane`
//! where `plane` enumerates the pairs `mu < nu` in lexicographic order.
//!
//! Conventions:
//!
//! * `U'_mu(x) = g(x) U_mu(x) g(x + mu)^{-1}` under a gauge transformation,
//!   and algebra-valued forms transform by `Ad_{g(x)}` at their base site.
//! * `perturb(U, a, t)_mu(x) = exp(t * spacing * a_mu(x)) U_mu(x)`.
//! * `(d_A f)_mu(x) = (Ad_{U_mu(x)} f(x + mu) - f(x)) / spacing`. The
//!   transport `Ad_{U_mu(x)}` carries the value at `x + mu` back to `x`,
//!   which is the choice that makes `d_A` gauge covariant.
//! * On 1-forms, `d_A` is the exact linearization of the plaquette curvature
//!   in the perturbation chart, so
//!   `curvature(perturb(U, a, t)) = curvature(U) + t d_A a + O(t^2)`.
//!
//! All cells carry the weight `spacing^dim` in the L2 inner product, and the
//! codifferentials are the exact adjoints of the differentials for it.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{exp_map, left_jacobian_inv, log_map, AlgebraElement, AlgebraError, GroupElement, GroupId};
use crate::rng::LabRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("lattice dimension must be 2, 3 or 4, got {0}")]
    Dimension(usize),
    #[error("every extent must be at least 2, got {0:?}")]
    Extent(Vec<usize>),
    #[error("spacing must be positive and finite, got {0}")]
    Spacing(f64),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("value of group {found} in a {expected} field")]
    Group { expected: GroupId, found: GroupId },
    #[error("fields live on different lattices")]
    LatticeMismatch,
    #[error("time grid must be strictly increasing and uniform")]
    TimeGrid,
}

#[derive(Debug)]
struct LatticeInner {
    extents: Vec<usize>,
    spacing: f64,
    n_sites: usize,
    fwd: Vec<usize>,
    bwd: Vec<usize>,
    planes: Vec<(usize, usize)>,
}

/// A periodic hypercubic lattice. Cloning is cheap; the neighbour tables are
/// shared.
#[derive(Clone)]
pub struct Lattice {
    inner: Arc<LatticeInner>,
}

impl std::fmt::Debug for Lattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lattice")
            .field("extents", &self.inner.extents)
            .field("spacing", &self.inner.spacing)
            .finish()
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.extents == other.inner.extents
                && self.inner.spacing.to_bits() == other.inner.spacing.to_bits())
    }
}

impl Lattice {
    pub fn new(extents: &[usize], spacing: f64) -> Result<Self, LatticeError> {
        let dim = extents.len();
        if !(2..=4).contains(&dim) {
            return Err(LatticeError::Dimension(dim));
        }
        if extents.iter().any(|&n| n < 2) {
            return Err(LatticeError::Extent(extents.to_vec()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(LatticeError::Spacing(spacing));
        }
        let n_sites: usize = extents.iter().product();
        let mut fwd = vec![0; n_sites * dim];
        let mut bwd = vec![0; n_sites * dim];
        let mut coords = vec![0usize; dim];
        for site in 0..n_sites {
            let mut rem = site;
            for (mu, c) in coords.iter_mut().enumerate() {
                *c = rem % extents[mu];
                rem /= extents[mu];
            }
            for mu in 0..dim {
                let mut stride = 1;
                for e in &extents[..mu] {
                    stride *= e;
                }
                let c = coords[mu];
                let up = if c + 1 == extents[mu] { site - c * stride } else { site + stride };
                let down = if c == 0 { site + (extents[mu] - 1) * stride } else { site - stride };
                fwd[site * dim + mu] = up;
                bwd[site * dim + mu] = down;
            }
        }
        let mut planes = Vec::new();
        for mu in 0..dim {
            for nu in mu + 1..dim {
                planes.push((mu, nu));
            }
        }
        Ok(Lattice {
            inner: Arc::new(LatticeInner {
                extents: extents.to_vec(),
                spacing,
                n_sites,
                fwd,
                bwd,
                planes,
            }),
        })
    }

    /// Cubic lattice with `dim` equal extents.
    pub fn cubic(dim: usize, extent: usize, spacing: f64) -> Result<Self, LatticeError> {
        Lattice::new(&vec![extent; dim], spacing)
    }

    pub fn dim(&self) -> usize {
        self.inner.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.inner.extents
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    /// `spacing^dim`, the weight of every cell in the L2 inner product.
    pub fn cell_volume(&self) -> f64 {
        self.inner.spacing.powi(self.dim() as i32)
    }

    pub fn n_sites(&self) -> usize {
        self.inner.n_sites
    }

    pub fn n_links(&self) -> usize {
        self.inner.n_sites * self.dim()
    }

    pub fn n_planes(&self) -> usize {
        self.inner.planes.len()
    }

    pub fn n_plaquettes(&self) -> usize {
        self.inner.n_sites * self.n_planes()
    }

    pub fn planes(&self) -> &[(usize, usize)] {
        &self.inner.planes
    }

    /// Index of the plane spanned by `mu < nu`.
    pub fn plane_index(&self, mu: usize, nu: usize) -> usize {
        assert!(mu < nu && nu < self.dim(), "plane requires mu < nu < dim");
        self.inner
            .planes
            .iter()
            .position(|&p| p == (mu, nu))
            .expect("plane exists")
    }

    pub fn site_index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (mu, &c) in coords.iter().enumerate() {
            idx += (c % self.inner.extents[mu]) * stride;
            stride *= self.inner.extents[mu];
        }
        idx
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut rem = site;
        self.inner
            .extents
            .iter()
            .map(|&n| {
                let c = rem % n;
                rem /= n;
                c
            })
            .collect()
    }

    #[inline]
    pub fn fwd(&self, site: usize, mu: usize) -> usize {
        self.inner.fwd[site * self.dim() + mu]
    }

    #[inline]
    pub fn bwd(&self, site: usize, mu: usize) -> usize {
        self.inner.bwd[site * self.dim() + mu]
    }

    #[inline]
    pub fn link_index(&self, site: usize, mu: usize) -> usize {
        site * self.dim() + mu
    }

    #[inline]
    pub fn plaquette_index(&self, site: usize, plane: usize) -> usize {
        site * self.n_planes() + plane
    }
}

/// Parallel transporters `U_mu(x)` on every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkField {
    lattice: Lattice,
    group: GroupId,
    links: Vec<GroupElement>,
}

/// A lattice gauge transformation: one group element per site.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField {
    lattice: Lattice,
    group: GroupId,
    values: Vec<GroupElement>,
}

/// Algebra-valued `K`-form: one algebra element per site (`K = 0`), link
/// (`K = 1`) or oriented plaquette `mu < nu` (`K = 2`). Components are
/// stored contiguously, `algebra_dim` reals per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Form<const K: usize> {
    lattice: Lattice,
    group: GroupId,
    data: Vec<f64>,
}

pub type ZeroForm = Form<0>;
pub type OneForm = Form<1>;
pub type TwoForm = Form<2>;

/// Neumaier summation; keeps inner products of large forms accurate to a few
/// ulps of the result instead of growing with the number of cells.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + carry
}

fn check_group(expected: GroupId, found: GroupId) -> Result<(), LatticeError> {
    if expected == found {
        Ok(())
    } else {
        Err(LatticeError::Group { expected, found })
    }
}

impl<const K: usize> Form<K> {
    pub fn cell_count(lattice: &Lattice) -> usize {
        match K {
            0 => lattice.n_sites(),
            1 => lattice.n_links(),
            2 => lattice.n_plaquettes(),
            _ => panic!("forms of degree {K} are not supported"),
        }
    }

    pub fn zeros(lattice: &Lattice, group: GroupId) -> Self {
        Form {
            lattice: lattice.clone(),
            group,
            data: vec![0.0; Self::cell_count(lattice) * group.algebra_dim()],
        }
    }

    pub fn from_data(lattice: &Lattice, group: GroupId, data: Vec<f64>) -> Result<Self, LatticeError> {
        let expected = Self::cell_count(lattice) * group.algebra_dim();
        if data.len() != expected {
            return Err(LatticeError::Length {
                expected,
                got: data.len(),
            });
        }
        Ok(Form {
            lattice: lattice.clone(),
            group,
            data,
        })
    }

    pub fn from_fn(lattice: &Lattice, group: GroupId, mut f: impl FnMut(usize) -> AlgebraElement) -> Self {
        let mut out = Self::zeros(lattice, group);
        for cell in 0..Self::cell_count(lattice) {
            out.set(cell, f(cell));
        }
        out
    }

    /// Independent normal components with standard deviation `sigma`, drawn
    /// in storage order.
    pub fn random(lattice: &Lattice, group: GroupId, sigma: f64, rng: &mut LabRng) -> Self {
        let mut out = Self::zeros(lattice, group);
        for x in out.data.iter_mut() {
            *x = sigma * rng.normal();
        }
        out
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn cells(&self) -> usize {
        self.data.len() / self.group.algebra_dim()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, cell: usize) -> AlgebraElement {
        let m = self.group.algebra_dim();
        AlgebraElement::from_components(self.group, &self.data[cell * m..(cell + 1) * m])
    }

    #[inline]
    pub fn set(&mut self, cell: usize, x: AlgebraElement) {
        let m = self.group.algebra_dim();
        self.data[cell * m..(cell + 1) * m].copy_from_slice(x.components());
    }

    #[inline]
    pub fn add_at(&mut self, cell: usize, x: AlgebraElement) {
        let m = self.group.algebra_dim();
        for (d, s) in self.data[cell * m..(cell + 1) * m].iter_mut().zip(x.components()) {
            *d += s;
        }
    }

    fn assert_compatible(&self, other: &Self) {
        assert!(
            self.lattice == other.lattice && self.group == other.group,
            "forms live on different lattices or groups"
        );
    }

    /// L2 inner product `sum_cells spacing^dim <u, v>`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.assert_compatible(other);
        let raw = compensated_sum(self.data.iter().zip(&other.data).map(|(a, b)| a * b));
        raw * self.group.inner_weight() * self.lattice.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Largest algebra norm over all cells.
    pub fn norm_sup(&self) -> f64 {
        let m = self.group.algebra_dim();
        let w = self.group.inner_weight();
        self.data
            .chunks(m)
            .map(|c| (w * c.iter().map(|x| x * x).sum::<f64>()).sqrt())
            .fold(0.0, f64::max)
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        self.assert_compatible(x);
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= s);
        out
    }

    /// Pointwise `Ad` by a gauge transformation at the base site of each cell.
    pub fn gauge_transform(&self, g: &GaugeField) -> Self {
        assert!(self.lattice == g.lattice && self.group == g.group, "shape mismatch");
        let per_site = match K {
            0 => 1,
            1 => self.lattice.dim(),
            _ => self.lattice.n_planes(),
        };
        Self::from_fn(&self.lattice, self.group, |cell| g.values[cell / per_site].ad(&self.get(cell)))
    }
}

impl<const K: usize> Add for Form<K> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.axpy(1.0, &rhs);
        self
    }
}

impl<const K: usize> Sub for Form<K> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.axpy(-1.0, &rhs);
        self
    }
}

impl<const K: usize> Neg for Form<K> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scaled(-1.0)
    }
}

impl<const K: usize> Mul<Form<K>> for f64 {
    type Output = Form<K>;
    fn mul(self, rhs: Form<K>) -> Form<K> {
        rhs.scaled(self)
    }
}

impl GaugeField {
    pub fn identity(lattice: &Lattice, group: GroupId) -> Self {
        GaugeField {
            lattice: lattice.clone(),
            group,
            values: vec![GroupElement::identity(group); lattice.n_sites()],
        }
    }

    pub fn from_values(lattice: &Lattice, group: GroupId, values: Vec<GroupElement>) -> Result<Self, LatticeError> {
        if values.len() != lattice.n_sites() {
            return Err(LatticeError::Length {
                expected: lattice.n_sites(),
                got: values.len(),
            });
        }
        for v in &values {
            check_group(group, v.group())?;
        }
        Ok(GaugeField {
            lattice: lattice.clone(),
            group,
            values,
        })
    }

    /// Pointwise exponential of a 0-form.
    pub fn exp(h: &ZeroForm) -> Self {
        GaugeField {
            lattice: h.lattice.clone(),
            group: h.group,
            values: (0..h.cells()).map(|s| exp_map(&h.get(s))).collect(),
        }
    }

    /// Random transformation `exp(sigma * xi)` with normal `xi`.
    pub fn random(lattice: &Lattice, group: GroupId, sigma: f64, rng: &mut LabRng) -> Self {
        GaugeField::exp(&ZeroForm::random(lattice, group, sigma, rng))
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn values(&self) -> &[GroupElement] {
        &self.values
    }

    pub fn value(&self, site: usize) -> GroupElement {
        self.values[site]
    }

    pub fn set_value(&mut self, site: usize, g: GroupElement) {
        assert_eq!(g.group(), self.group, "group mismatch");
        self.values[site] = g;
    }

    /// Pointwise product `(self * other)(x) = self(x) other(x)`; acting with
    /// the result equals acting with `other` first.
    pub fn compose(&self, other: &GaugeField) -> GaugeField {
        assert!(self.lattice == other.lattice, "lattice mismatch");
        GaugeField {
            lattice: self.lattice.clone(),
            group: self.group,
            values: self.values.iter().zip(&other.values).map(|(a, b)| *a * *b).collect(),
        }
    }

    pub fn inverse(&self) -> GaugeField {
        GaugeField {
            lattice: self.lattice.clone(),
            group: self.group,
            values: self.values.iter().map(|g| g.inverse()).collect(),
        }
    }

    /// Largest geodesic distance of a value from the identity.
    pub fn distance_from_identity(&self) -> f64 {
        self.values.iter().map(|g| g.angle()).fold(0.0, f64::max)
    }

    /// Largest ambient distance between corresponding values.
    pub fn max_distance(&self, other: &GaugeField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.ambient_distance(b))
            .fold(0.0, f64::max)
    }
}

/// Geometry of one oriented plaquette `(x; mu < nu)`.
///
/// The boundary links are `l1 = (x, mu)`, `l2 = (x + mu, nu)`,
/// `l3 = (x + nu, mu)`, `l4 = (x, nu)` with orientation signs `(+, +, -, -)`.
/// `w[i]` is the transporter that carries a left perturbation of link `i`
/// to the base point: `w = (1, U1, U1 U2 U3^{-1}, P)`.
#[derive(Debug, Clone, Copy)]
pub struct PlaquetteFrame {
    pub links: [usize; 4],
    pub w: [GroupElement; 4],
    pub holonomy: GroupElement,
    pub log: AlgebraElement,
}

pub(crate) const ORIENTATION: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

impl LinkField {
    pub fn identity(lattice: &Lattice, group: GroupId) -> Self {
        LinkField {
            lattice: lattice.clone(),
            group,
            links: vec![GroupElement::identity(group); lattice.n_links()],
        }
    }

    pub fn from_links(lattice: &Lattice, group: GroupId, links: Vec<GroupElement>) -> Result<Self, LatticeError> {
        if links.len() != lattice.n_links() {
            return Err(LatticeError::Length {
                expected: lattice.n_links(),
                got: links.len(),
            });
        }
        for g in &links {
            check_group(group, g.group())?;
        }
        Ok(LinkField {
            lattice: lattice.clone(),
            group,
            links,
        })
    }

    /// `perturb(identity, a, 1)` for a normal random 1-form `a` whose L2
    /// norm is rescaled to `amplitude`.
    pub fn random_near_identity(lattice: &Lattice, group: GroupId, amplitude: f64, rng: &mut LabRng) -> Self {
        let a = OneForm::random(lattice, group, 1.0, rng);
        let n = a.norm();
        let a = if n > 0.0 { a.scaled(amplitude / n) } else { a };
        LinkField::identity(lattice, group).perturb(&a, 1.0)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn links(&self) -> &[GroupElement] {
        &self.links
    }

    #[inline]
    pub fn link(&self, site: usize, mu: usize) -> GroupElement {
        self.links[self.lattice.link_index(site, mu)]
    }

    pub fn set_link(&mut self, site: usize, mu: usize, g: GroupElement) {
        assert_eq!(g.group(), self.group, "group mismatch");
        let i = self.lattice.link_index(site, mu);
        self.links[i] = g;
    }

    /// `U_mu(x) U_nu(x + mu) U_mu(x + nu)^{-1} U_nu(x)^{-1}` for `mu < nu`.
    pub fn plaquette(&self, site: usize, mu: usize, nu: usize) -> GroupElement {
        assert!(mu < nu && nu < self.lattice.dim(), "plaquette requires mu < nu");
        let l = &self.lattice;
        self.link(site, mu)
            * self.link(l.fwd(site, mu), nu)
            * self.link(l.fwd(site, nu), mu).inverse()
            * self.link(site, nu).inverse()
    }

    pub fn plaquette_frame(&self, site: usize, plane: usize) -> Result<PlaquetteFrame, AlgebraError> {
        let l = &self.lattice;
        let (mu, nu) = l.planes()[plane];
        let links = [
            l.link_index(site, mu),
            l.link_index(l.fwd(site, mu), nu),
            l.link_index(l.fwd(site, nu), mu),
            l.link_index(site, nu),
        ];
        let u = links.map(|i| self.links[i]);
        let w2 = u[0];
        let w3 = u[0] * u[1] * u[2].inverse();
        let p = w3 * u[3].inverse();
        let log = log_map(&p)?;
        Ok(PlaquetteFrame {
            links,
            w: [GroupElement::identity(self.group), w2, w3, p],
            holonomy: p,
            log,
        })
    }

    pub fn plaquette_frames(&self) -> Result<Vec<PlaquetteFrame>, AlgebraError> {
        let np = self.lattice.n_planes();
        (0..self.lattice.n_plaquettes())
            .map(|p| self.plaquette_frame(p / np, p % np))
            .collect()
    }

    /// `U'_mu(x) = exp(t * spacing * a_mu(x)) U_mu(x)`.
    pub fn perturb(&self, a: &OneForm, t: f64) -> LinkField {
        assert!(a.lattice == self.lattice && a.group == self.group, "shape mismatch");
        let s = t * self.lattice.spacing();
        LinkField {
            lattice: self.lattice.clone(),
            group: self.group,
            links: self
                .links
                .iter()
                .enumerate()
                .map(|(i, u)| exp_map(&a.get(i).scale(s)) * *u)
                .collect(),
        }
    }

    /// Inverse of [`LinkField::perturb`] at `t = 1`:
    /// `a_mu(x) = log(U_mu(x) U0_mu(x)^{-1}) / spacing`.
    pub fn extract(&self, base: &LinkField) -> Result<OneForm, AlgebraError> {
        assert!(base.lattice == self.lattice && base.group == self.group, "shape mismatch");
        let inv_a = 1.0 / self.lattice.spacing();
        let mut out = OneForm::zeros(&self.lattice, self.group);
        for (i, (u, u0)) in self.links.iter().zip(&base.links).enumerate() {
            out.set(i, log_map(&(*u * u0.inverse()))?.scale(inv_a));
        }
        Ok(out)
    }

    pub fn gauge_transform(&self, g: &GaugeField) -> LinkField {
        assert!(g.lattice == self.lattice && g.group == self.group, "shape mismatch");
        let l = &self.lattice;
        let d = l.dim();
        LinkField {
            lattice: l.clone(),
            group: self.group,
            links: self
                .links
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let site = i / d;
                    let mu = i % d;
                    g.values[site] * *u * g.values[l.fwd(site, mu)].inverse()
                })
                .collect(),
        }
    }

    /// Largest ambient distance between corresponding links.
    pub fn max_distance(&self, other: &LinkField) -> f64 {
        self.links
            .iter()
            .zip(&other.links)
            .map(|(a, b)| a.ambient_distance(b))
            .fold(0.0, f64::max)
    }
}

/// Plaquette curvature `F = log(P) / spacing^2`.
pub fn curvature(u: &LinkField) -> Result<TwoForm, AlgebraError> {
    let l = u.lattice();
    let inv = 1.0 / (l.spacing() * l.spacing());
    let np = l.n_planes();
    let mut out = TwoForm::zeros(l, u.group());
    for p in 0..l.n_plaquettes() {
        let g = u.plaquette(p / np, l.planes()[p % np].0, l.planes()[p % np].1);
        out.set(p, log_map(&g)?.scale(inv));
    }
    Ok(out)
}

/// Covariant differential of a 0-form.
pub fn d_a0(f: &ZeroForm, u: &LinkField) -> OneForm {
    assert!(f.lattice == u.lattice && f.group == u.group, "shape mismatch");
    let l = u.lattice();
    let d = l.dim();
    let inv_a = 1.0 / l.spacing();
    OneForm::from_fn(l, u.group(), |i| {
        let site = i / d;
        let mu = i % d;
        (u.links[i].ad(&f.get(l.fwd(site, mu))) - f.get(site)).scale(inv_a)
    })
}

/// Adjoint of [`d_a0`].
pub fn d_a0_star(w: &OneForm, u: &LinkField) -> ZeroForm {
    assert!(w.lattice == u.lattice && w.group == u.group, "shape mismatch");
    let l = u.lattice();
    let d = l.dim();
    let inv_a = 1.0 / l.spacing();
    let mut out = ZeroForm::zeros(l, u.group());
    for i in 0..l.n_links() {
        let site = i / d;
        let mu = i % d;
        let v = w.get(i).scale(inv_a);
        out.add_at(l.fwd(site, mu), u.links[i].ad_inv(&v));
        out.add_at(site, -v);
    }
    out
}

/// Covariant differential of a 1-form using precomputed plaquette frames.
pub fn d_a1_with(w: &OneForm, u: &LinkField, frames: &[PlaquetteFrame]) -> TwoForm {
    assert!(w.lattice == u.lattice && w.group == u.group, "shape mismatch");
    let l = u.lattice();
    let inv_a = 1.0 / l.spacing();
    let mut out = TwoForm::zeros(l, u.group());
    for (p, fr) in frames.iter().enumerate() {
        let mut y = AlgebraElement::zero(u.group());
        for i in 0..4 {
            y += fr.w[i].ad(&w.get(fr.links[i])).scale(ORIENTATION[i]);
        }
        out.set(p, left_jacobian_inv(&fr.log, &y).scale(inv_a));
    }
    out
}

/// Adjoint of [`d_a1_with`].
pub fn d_a1_star_with(psi: &TwoForm, u: &LinkField, frames: &[PlaquetteFrame]) -> OneForm {
    assert!(psi.lattice == u.lattice && psi.group == u.group, "shape mismatch");
    let l = u.lattice();
    let inv_a = 1.0 / l.spacing();
    let mut out = OneForm::zeros(l, u.group());
    for (p, fr) in frames.iter().enumerate() {
        let z = left_jacobian_inv(&(-fr.log), &psi.get(p)).scale(inv_a);
        for i in 0..4 {
            out.add_at(fr.links[i], fr.w[i].ad_inv(&z).scale(ORIENTATION[i]));
        }
    }
    out
}

/// Covariant differential of a 1-form: the derivative of the curvature along
/// `perturb(U, w, t)` at `t = 0`.
pub fn d_a1(w: &OneForm, u: &LinkField) -> Result<TwoForm, AlgebraError> {
    Ok(d_a1_with(w, u, &u.plaquette_frames()?))
}

/// Adjoint of [`d_a1`].
pub fn d_a1_star(psi: &TwoForm, u: &LinkField) -> Result<OneForm, AlgebraError> {
    Ok(d_a1_star_with(psi, u, &u.plaquette_frames()?))
}

/// Covariant Laplacian on 0-forms, `d_A^* d_A`.
pub fn laplacian(f: &ZeroForm, u: &LinkField) -> ZeroForm {
    d_a0_star(&d_a0(f, u), u)
}

/// A path of connections `A(t) + beta(t) dt` sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConnection {
    pub times: Vec<f64>,
    pub connections: Vec<LinkField>,
    pub beta: Vec<ZeroForm>,
}

impl PathConnection {
    pub fn new(times: Vec<f64>, connections: Vec<LinkField>, beta: Vec<ZeroForm>) -> Result<Self, LatticeError> {
        if connections.len() != times.len() {
            return Err(LatticeError::Length {
                expected: times.len(),
                got: connections.len(),
            });
        }
        if beta.len() != times.len() {
            return Err(LatticeError::Length {
                expected: times.len(),
                got: beta.len(),
            });
        }
        if times.is_empty() {
            return Err(LatticeError::TimeGrid);
        }
        if times.len() > 1 {
            let h = times[1] - times[0];
            if !(h > 0.0) {
                return Err(LatticeError::TimeGrid);
            }
            for (k, w) in times.windows(2).enumerate() {
                let expected = times[0] + (k + 1) as f64 * h;
                if !(w[1] > w[0]) || (w[1] - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                    return Err(LatticeError::TimeGrid);
                }
            }
        }
        let l = connections[0].lattice();
        let g = connections[0].group();
        for c in &connections {
            if c.lattice() != l || c.group() != g {
                return Err(LatticeError::LatticeMismatch);
            }
        }
        for b in &beta {
            if b.lattice() != l || b.group() != g {
                return Err(LatticeError::LatticeMismatch);
            }
        }
        Ok(PathConnection {
            times,
            connections,
            beta,
        })
    }

    /// Path with `beta = 0` everywhere.
    pub fn temporal(times: Vec<f64>, connections: Vec<LinkField>) -> Result<Self, LatticeError> {
        let beta = connections
            .iter()
            .map(|c| ZeroForm::zeros(c.lattice(), c.group()))
            .collect();
        PathConnection::new(times, connections, beta)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn lattice(&self) -> &Lattice {
        self.connections[0].lattice()
    }

    pub fn group(&self) -> GroupId {
        self.connections[0].group()
    }

    /// Keeps the first `n` time samples.
    pub fn truncated(&self, n: usize) -> PathConnection {
        PathConnection {
            times: self.times[..n].to_vec(),
            connections: self.connections[..n].to_vec(),
            beta: self.beta[..n].to_vec(),
        }
    }
}
