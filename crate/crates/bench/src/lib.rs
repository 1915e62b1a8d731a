//! Fixtures shared by the kernel benchmarks.

use ymlab_core::{GaugeField, GroupId, LabRng, Lattice, LinkField, OneForm, ZeroForm};

/// Cubic lattice of the given dimension and extent with unit spacing.
pub fn lattice(dim: usize, extent: usize) -> Lattice {
    Lattice::cubic(dim, extent, 1.0).expect("valid benchmark lattice")
}

/// Rough SU(2) field: a gauge rotation of `exp(a)` with normal `a` of width 0.5.
pub fn rough_su2(l: &Lattice, seed: u64) -> LinkField {
    let mut rng = LabRng::new(seed);
    let g = GaugeField::random(l, GroupId::Su2, 1.0, &mut rng);
    let a = OneForm::random(l, GroupId::Su2, 0.5, &mut rng);
    LinkField::identity(l, GroupId::Su2).perturb(&a, 1.0).gauge_transform(&g)
}

/// SU(2) field at L2 distance 0.05 from the identity, as used for flow runs.
pub fn near_flat_su2(l: &Lattice, seed: u64) -> LinkField {
    LinkField::random_near_identity(l, GroupId::Su2, 0.05, &mut LabRng::new(seed))
}

pub fn random_zero_form(l: &Lattice, seed: u64) -> ZeroForm {
    ZeroForm::random(l, GroupId::Su2, 1.0, &mut LabRng::new(seed))
}
