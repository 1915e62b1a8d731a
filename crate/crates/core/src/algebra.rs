//! Compact gauge groups U(1) and SU(2) together with their Lie algebras.
//!
//! U(1) elements are unit complex numbers `(re, im)`; the algebra is `iR`,
//! stored as the real angle. SU(2) elements are unit quaternions
//! `(w, x, y, z)`; the algebra is the space of pure quaternions, stored as
//! a real 3-vector `v` standing for `v_1 i + v_2 j + v_3 k`.
//!
//! Conventions used throughout the crate:
//!
//! * `exp(v) = cos|v| + sin|v| v/|v|` (the quaternion exponential), so the
//!   injectivity radius of the chart is `pi`.
//! * `[p, q] = pq - qp = 2 p x q` for SU(2) and `0` for U(1).
//! * `<v, w> = 2 v.w` for SU(2), i.e. `-2 Re(vw)`, and `theta phi` for U(1).
//!   Both are Ad-invariant.
//! * Every group product is renormalized to unit length before it is
//!   returned, so accumulated products stay on the group.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use thiserror::Error;

/// Distance from the antipode `-1` at which the logarithm refuses to
/// produce a value.
pub const BRANCH_CUT_TOL: f64 = 1e-10;

/// Errors raised by group and algebra operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("group mismatch: {left} vs {right}")]
    GroupMismatch { left: GroupId, right: GroupId },
    #[error("logarithm requested at the branch cut (real part {real_part})")]
    BranchCut { real_part: f64 },
    #[error("expected {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
}

/// Identifier of the gauge group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    U1,
    Su2,
}

impl GroupId {
    /// Real dimension of the Lie algebra.
    pub fn algebra_dim(self) -> usize {
        match self {
            GroupId::U1 => 1,
            GroupId::Su2 => 3,
        }
    }

    /// Number of reals stored per group element.
    pub fn element_dim(self) -> usize {
        match self {
            GroupId::U1 => 2,
            GroupId::Su2 => 4,
        }
    }

    /// Factor `w` with `<v, v> = w |v|^2` in component coordinates.
    pub fn inner_weight(self) -> f64 {
        match self {
            GroupId::U1 => 1.0,
            GroupId::Su2 => 2.0,
        }
    }

    /// Integer code used by the checkpoint format.
    pub fn code(self) -> u32 {
        match self {
            GroupId::U1 => 0,
            GroupId::Su2 => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(GroupId::U1),
            1 => Some(GroupId::Su2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupId::U1 => "u1",
            GroupId::Su2 => "su2",
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GroupId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "u1" | "u(1)" => Ok(GroupId::U1),
            "su2" | "su(2)" => Ok(GroupId::Su2),
            other => Err(format!("unknown group '{other}'")),
        }
    }
}

/// An element of U(1) or SU(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GroupElement {
    U1([f64; 2]),
    Su2([f64; 4]),
}

/// An element of the Lie algebra u(1) or su(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlgebraElement {
    U1(f64),
    Su2([f64; 3]),
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn quat_mul(p: [f64; 4], q: [f64; 4]) -> [f64; 4] {
    [
        p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
        p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
        p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
        p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0],
    ]
}

#[inline]
fn normalize4(q: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

#[inline]
fn normalize2(z: [f64; 2]) -> [f64; 2] {
    let n = z[0].hypot(z[1]);
    [z[0] / n, z[1] / n]
}

/// `sin(r)/r`, accurate near zero.
#[inline]
fn sinc(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 - r * r / 6.0 + r.powi(4) / 120.0
    } else {
        r.sin() / r
    }
}

impl GroupElement {
    pub fn identity(group: GroupId) -> Self {
        match group {
            GroupId::U1 => GroupElement::U1([1.0, 0.0]),
            GroupId::Su2 => GroupElement::Su2([1.0, 0.0, 0.0, 0.0]),
        }
    }

    pub fn group(&self) -> GroupId {
        match self {
            GroupElement::U1(_) => GroupId::U1,
            GroupElement::Su2(_) => GroupId::Su2,
        }
    }

    /// Raw components: `(re, im)` or `(w, x, y, z)`.
    pub fn components(&self) -> &[f64] {
        match self {
            GroupElement::U1(z) => z,
            GroupElement::Su2(q) => q,
        }
    }

    /// Builds an element from raw components and projects it to unit length.
    pub fn from_components(group: GroupId, c: &[f64]) -> Result<Self, AlgebraError> {
        if c.len() != group.element_dim() {
            return Err(AlgebraError::ComponentCount {
                expected: group.element_dim(),
                got: c.len(),
            });
        }
        Ok(match group {
            GroupId::U1 => GroupElement::U1(normalize2([c[0], c[1]])),
            GroupId::Su2 => GroupElement::Su2(normalize4([c[0], c[1], c[2], c[3]])),
        })
    }

    /// Builds an element from raw components without renormalizing, so a
    /// stored element is reproduced bit for bit.
    pub fn from_components_exact(group: GroupId, c: &[f64]) -> Result<Self, AlgebraError> {
        if c.len() != group.element_dim() {
            return Err(AlgebraError::ComponentCount {
                expected: group.element_dim(),
                got: c.len(),
            });
        }
        Ok(match group {
            GroupId::U1 => GroupElement::U1([c[0], c[1]]),
            GroupId::Su2 => GroupElement::Su2([c[0], c[1], c[2], c[3]]),
        })
    }

    /// Real part (`re` or `w`); the log branch cut sits at `-1`.
    pub fn real_part(&self) -> f64 {
        self.components()[0]
    }

    pub fn inverse(&self) -> Self {
        match *self {
            GroupElement::U1([re, im]) => GroupElement::U1([re, -im]),
            GroupElement::Su2([w, x, y, z]) => GroupElement::Su2([w, -x, -y, -z]),
        }
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, AlgebraError> {
        match (self, other) {
            (GroupElement::U1(a), GroupElement::U1(b)) => Ok(GroupElement::U1(normalize2([
                a[0] * b[0] - a[1] * b[1],
                a[0] * b[1] + a[1] * b[0],
            ]))),
            (GroupElement::Su2(p), GroupElement::Su2(q)) => {
                Ok(GroupElement::Su2(normalize4(quat_mul(*p, *q))))
            }
            _ => Err(AlgebraError::GroupMismatch {
                left: self.group(),
                right: other.group(),
            }),
        }
    }

    /// Adjoint action `g x g^{-1}`.
    pub fn ad(&self, x: &AlgebraElement) -> AlgebraElement {
        match (self, x) {
            (GroupElement::U1(_), AlgebraElement::U1(t)) => AlgebraElement::U1(*t),
            (GroupElement::Su2(q), AlgebraElement::Su2(v)) => {
                let u = [q[1], q[2], q[3]];
                let t = cross(u, *v);
                let t2 = cross(u, t);
                AlgebraElement::Su2([
                    v[0] + 2.0 * (q[0] * t[0] + t2[0]),
                    v[1] + 2.0 * (q[0] * t[1] + t2[1]),
                    v[2] + 2.0 * (q[0] * t[2] + t2[2]),
                ])
            }
            _ => panic!("group mismatch in adjoint action"),
        }
    }

    /// Adjoint action of the inverse, `g^{-1} x g`.
    pub fn ad_inv(&self, x: &AlgebraElement) -> AlgebraElement {
        self.inverse().ad(x)
    }

    /// Distance to another element in the ambient Euclidean coordinates.
    pub fn ambient_distance(&self, other: &Self) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Geodesic distance to the identity, `|log g|` measured in the algebra norm.
    /// Unlike [`log_map`] this is defined everywhere.
    pub fn angle(&self) -> f64 {
        match *self {
            GroupElement::U1([re, im]) => im.atan2(re).abs(),
            GroupElement::Su2([w, x, y, z]) => {
                let s = (x * x + y * y + z * z).sqrt();
                s.atan2(w) * std::f64::consts::SQRT_2
            }
        }
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    /// Group product. Panics when the two operands belong to different groups;
    /// use [`GroupElement::checked_mul`] for a fallible version.
    fn mul(self, rhs: GroupElement) -> GroupElement {
        self.checked_mul(&rhs).expect("group mismatch in product")
    }
}

impl AlgebraElement {
    pub fn zero(group: GroupId) -> Self {
        match group {
            GroupId::U1 => AlgebraElement::U1(0.0),
            GroupId::Su2 => AlgebraElement::Su2([0.0; 3]),
        }
    }

    /// The `i`-th coordinate basis vector.
    pub fn basis(group: GroupId, i: usize) -> Self {
        match group {
            GroupId::U1 => {
                assert_eq!(i, 0, "u(1) has a single basis vector");
                AlgebraElement::U1(1.0)
            }
            GroupId::Su2 => {
                let mut v = [0.0; 3];
                v[i] = 1.0;
                AlgebraElement::Su2(v)
            }
        }
    }

    pub fn group(&self) -> GroupId {
        match self {
            AlgebraElement::U1(_) => GroupId::U1,
            AlgebraElement::Su2(_) => GroupId::Su2,
        }
    }

    pub fn components(&self) -> &[f64] {
        match self {
            AlgebraElement::U1(t) => std::slice::from_ref(t),
            AlgebraElement::Su2(v) => v,
        }
    }

    pub fn from_components(group: GroupId, c: &[f64]) -> Self {
        match group {
            GroupId::U1 => AlgebraElement::U1(c[0]),
            GroupId::Su2 => AlgebraElement::Su2([c[0], c[1], c[2]]),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        match *self {
            AlgebraElement::U1(t) => AlgebraElement::U1(s * t),
            AlgebraElement::Su2(v) => AlgebraElement::Su2([s * v[0], s * v[1], s * v[2]]),
        }
    }

    pub fn checked_inner(&self, other: &Self) -> Result<f64, AlgebraError> {
        match (self, other) {
            (AlgebraElement::U1(a), AlgebraElement::U1(b)) => Ok(a * b),
            (AlgebraElement::Su2(a), AlgebraElement::Su2(b)) => Ok(2.0 * dot3(*a, *b)),
            _ => Err(AlgebraError::GroupMismatch {
                left: self.group(),
                right: other.group(),
            }),
        }
    }

    /// Ad-invariant inner product. Panics on a group mismatch.
    pub fn inner(&self, other: &Self) -> f64 {
        self.checked_inner(other).expect("group mismatch in inner product")
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn checked_bracket(&self, other: &Self) -> Result<Self, AlgebraError> {
        match (self, other) {
            (AlgebraElement::U1(_), AlgebraElement::U1(_)) => Ok(AlgebraElement::U1(0.0)),
            (AlgebraElement::Su2(a), AlgebraElement::Su2(b)) => {
                let c = cross(*a, *b);
                Ok(AlgebraElement::Su2([2.0 * c[0], 2.0 * c[1], 2.0 * c[2]]))
            }
            _ => Err(AlgebraError::GroupMismatch {
                left: self.group(),
                right: other.group(),
            }),
        }
    }

    /// Lie bracket. Panics on a group mismatch.
    pub fn bracket(&self, other: &Self) -> Self {
        self.checked_bracket(other).expect("group mismatch in bracket")
    }

    fn zip_with(self, rhs: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        match (self, rhs) {
            (AlgebraElement::U1(a), AlgebraElement::U1(b)) => AlgebraElement::U1(f(a, b)),
            (AlgebraElement::Su2(a), AlgebraElement::Su2(b)) => {
                AlgebraElement::Su2([f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])])
            }
            _ => panic!("group mismatch in algebra arithmetic"),
        }
    }
}

impl Add for AlgebraElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for AlgebraElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl AddAssign for AlgebraElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for AlgebraElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl Neg for AlgebraElement {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul<AlgebraElement> for f64 {
    type Output = AlgebraElement;
    fn mul(self, rhs: AlgebraElement) -> AlgebraElement {
        rhs.scale(self)
    }
}

/// Exponential map from the algebra to the group.
pub fn exp_map(x: &AlgebraElement) -> GroupElement {
    match *x {
        AlgebraElement::U1(t) => GroupElement::U1([t.cos(), t.sin()]),
        AlgebraElement::Su2(v) => {
            let r = dot3(v, v).sqrt();
            let s = sinc(r);
            GroupElement::Su2(normalize4([r.cos(), s * v[0], s * v[1], s * v[2]]))
        }
    }
}

/// Principal logarithm. Fails within [`BRANCH_CUT_TOL`] of the antipode `-1`.
pub fn log_map(g: &GroupElement) -> Result<AlgebraElement, AlgebraError> {
    let re = g.real_part();
    if re <= -1.0 + BRANCH_CUT_TOL {
        return Err(AlgebraError::BranchCut { real_part: re });
    }
    Ok(match *g {
        GroupElement::U1([re, im]) => AlgebraElement::U1(im.atan2(re)),
        GroupElement::Su2([w, x, y, z]) => {
            let s = (x * x + y * y + z * z).sqrt();
            let f = if s < 1e-8 {
                // s is tiny only near the identity, where atan2(s, w)/s -> 1/w.
                1.0 / w
            } else {
                s.atan2(w) / s
            };
            AlgebraElement::Su2([f * x, f * y, f * z])
        }
    })
}

/// Group product with an explicit mismatch error.
pub fn group_mul(g: &GroupElement, h: &GroupElement) -> Result<GroupElement, AlgebraError> {
    g.checked_mul(h)
}

/// Adjoint action `Ad_g x = g x g^{-1}`.
pub fn ad(g: &GroupElement, x: &AlgebraElement) -> Result<AlgebraElement, AlgebraError> {
    if g.group() != x.group() {
        return Err(AlgebraError::GroupMismatch {
            left: g.group(),
            right: x.group(),
        });
    }
    Ok(g.ad(x))
}

pub fn bracket(x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement, AlgebraError> {
    x.checked_bracket(y)
}

pub fn inner(x: &AlgebraElement, y: &AlgebraElement) -> Result<f64, AlgebraError> {
    x.checked_inner(y)
}

/// Inverse of the left-trivialized differential of `exp` at `phi`, applied
/// to `y`. If `exp(Y) exp(phi) = exp(phi + delta)` to first order in `Y`,
/// then `delta = left_jacobian_inv(phi, Y)`.
///
/// The operator is `ad/(e^ad - 1) = 1 - ad/2 + c ad^2` with
/// `c = 1/alpha^2 - cot(alpha/2)/(2 alpha)` and `alpha = 2|phi|`.
pub fn left_jacobian_inv(phi: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
    match (phi, y) {
        (AlgebraElement::U1(_), AlgebraElement::U1(t)) => AlgebraElement::U1(*t),
        (AlgebraElement::Su2(p), AlgebraElement::Su2(_)) => {
            let alpha = 2.0 * dot3(*p, *p).sqrt();
            let c = if alpha < 1e-3 {
                1.0 / 12.0 + alpha * alpha / 720.0 + alpha.powi(4) / 30240.0
            } else {
                1.0 / (alpha * alpha) - 1.0 / (2.0 * alpha * (alpha / 2.0).tan())
            };
            let ad1 = phi.bracket(y);
            let ad2 = phi.bracket(&ad1);
            *y - ad1.scale(0.5) + ad2.scale(c)
        }
        _ => panic!("group mismatch in left_jacobian_inv"),
    }
}
