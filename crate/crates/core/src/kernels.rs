//! Closed-form kernels of the simple random walk on the homogeneous tree.
//!
//! Every quantity here is an exact rational in `q` and the relevant
//! distances: the Green function `(q/(q-1)) q^(-d(x,y))`, the first-passage
//! probability `q^(-d(x,y))`, the horocycle index of a vertex with respect
//! to an end, the Martin kernel `q^(-hor)`, and the harmonic measure of a
//! boundary cylinder as seen from an arbitrary starting vertex.

use crate::rational::{ipow, ratio, Rat};
use crate::tree::{confluent, cylinder_measure, graph_distance, End, Site, TreeParams, Vertex};
use num::{One, Zero};

/// Green function of the simple random walk: expected visits to `y` when
/// started at `x`, equal to `(q/(q-1)) q^(-d(x,y))`.
pub fn green(params: &TreeParams, x: &Vertex, y: &Vertex) -> Rat {
    let q = params.q();
    ratio(q.into(), i64::from(q) - 1) * ipow(q, -(graph_distance(x, y) as i64))
}

/// First-passage probability `F(x, y) = q^(-d(x,y))`: the chance the walk
/// from `x` ever reaches `y`.
pub fn first_passage(params: &TreeParams, x: &Vertex, y: &Vertex) -> Rat {
    ipow(params.q(), -(graph_distance(x, y) as i64))
}

/// Horocycle index of `x` with respect to the end `xi`:
/// `|x| - 2 |x ∧ xi|`, the signed Busemann-type height. Negative deep along
/// the ray to `xi`, positive far from it.
pub fn horocycle_index(x: &Vertex, xi: &End) -> i64 {
    let c = confluent(&Site::Vertex(x.clone()), &Site::End(xi.clone()))
        .expect("vertex-end confluent always exists");
    x.depth() as i64 - 2 * c.depth() as i64
}

/// Martin kernel `K(x, xi) = q^(-hor(x, xi))` — the density of the harmonic
/// measure seen from `x` against the one seen from the root.
pub fn martin(params: &TreeParams, x: &Vertex, xi: &End) -> Rat {
    ipow(params.q(), -horocycle_index(x, xi))
}

/// Harmonic measure, from `x`, of the cylinder of ends passing through `y`:
/// the probability that the walk started at `x` converges to a boundary end
/// whose ray goes through `y`.
///
/// From the root this is the cylinder measure itself. In general, write
/// `a = |x ∧ y|`:
///
/// * if `y` is not an ancestor of `x` (including proper descendants of `x`),
///   the walk must first hit `y`'s subtree side, giving
///   `q^(2a - |x|) · ν_o(y)`;
/// * if `y` is an ancestor of `x` (or `x` itself), the complement decomposes
///   over the off-ray cylinders at each level strictly above `y`, each seen
///   from `x` by the first formula, and the measure is one minus their sum.
pub fn harmonic_measure_cylinder(params: &TreeParams, x: &Vertex, y: &Vertex) -> Rat {
    let q = params.q();
    if y.is_prefix_of(x) {
        // Complement: ends diverging from x's ray at depth a < |y|. At
        // depth 0 there are q other root children plus... careful: the
        // cylinders diverging at level a+1 are the siblings of x's ray
        // vertex at depth a+1; there are q of them at a = 0 and q - 1
        // deeper. Each such sibling z has |x ∧ z| = a.
        let mut others = Rat::zero();
        for a in 0..y.depth() {
            let count: i64 = if a == 0 { q.into() } else { i64::from(q) - 1 };
            let seen = ipow(q, 2 * a as i64 - x.depth() as i64);
            others += Rat::from_integer(count.into()) * seen * crate::tree::cylinder_measure_at(params, a + 1);
        }
        Rat::one() - others
    } else {
        let a = x
            .labels()
            .iter()
            .zip(y.labels())
            .take_while(|(u, v)| u == v)
            .count() as i64;
        ipow(q, 2 * a - x.depth() as i64) * cylinder_measure(params, y)
    }
}
