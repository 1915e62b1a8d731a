//! Standard background configurations used as test beds and critical
//! points.

use std::f64::consts::PI;

use crate::algebra::{exp_map, AlgebraElement, GroupElement, GroupId};
use crate::lattice::{Lattice, LatticeError, LinkField};

/// Constant-flux U(1) field with `m` flux quanta through every `(0, 1)`
/// plane of an `N^2` (or `N^d`) torus. Every `(0, 1)` plaquette equals
/// `exp(i 2 pi m / N^2)`; all other plaquettes are trivial. This is a
/// critical point of the lattice action.
pub fn one_flux_u1(extent: usize, quanta: i64, spacing: f64) -> Result<LinkField, LatticeError> {
    let lattice = Lattice::cubic(2, extent, spacing)?;
    Ok(constant_flux_u1(&lattice, quanta))
}

/// Constant flux on an arbitrary lattice, threading the `(0, 1)` planes.
pub fn constant_flux_u1(lattice: &Lattice, quanta: i64) -> LinkField {
    let n0 = lattice.extents()[0];
    let n1 = lattice.extents()[1];
    let phi = 2.0 * PI * quanta as f64 / (n0 * n1) as f64;
    let d = lattice.dim();
    let links = (0..lattice.n_links())
        .map(|i| {
            let c = lattice.coords(i / d);
            let theta = match i % d {
                1 => phi * c[0] as f64,
                0 if c[0] + 1 == n0 => -phi * (n0 * c[1]) as f64,
                _ => 0.0,
            };
            exp_map(&AlgebraElement::U1(theta))
        })
        .collect();
    LinkField::from_links(lattice, GroupId::U1, links).expect("consistent shape")
}

/// Embeds a U(1) field into SU(2) along the third axis:
/// `exp(i theta) -> exp(theta e_3)`.
pub fn embed_u1_in_su2(u: &LinkField) -> LinkField {
    assert_eq!(u.group(), GroupId::U1, "embedding expects a U(1) field");
    let links = u
        .links()
        .iter()
        .map(|g| {
            let c = g.components();
            GroupElement::Su2([c[0], 0.0, 0.0, c[1]])
        })
        .collect();
    LinkField::from_links(u.lattice(), GroupId::Su2, links).expect("consistent shape")
}
