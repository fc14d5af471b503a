//! Slice decomposition of harmonic measure around a boundary set.
//!
//! For a closed null set `E` on the boundary, the distance
//! `ρ(ξ, E) = q^(-a)` of a boundary point takes only powers of `1/q`, so
//! the law of `ρ(·, E)` under the harmonic measure `ν_x` is purely atomic.
//! The atom at `q^(-j)` has mass `W_j(x) = M_j(x) − M_{j+1}(x)`, where
//! `M_j(x)` is the `ν_x`-mass of the closed `q^(-j)`-neighbourhood of `E`
//! — the union of the active cylinders at level `j`.
//!
//! Past the level where the active counts settle into their exact
//! per-level growth `m` and no active vertex sits at or above `x`, the
//! masses obey `M_{j+1} = (m/q)·M_j` identically, so every slice sum has a
//! closed geometric tail. Boundary integrals of functions of `ρ(·, E)`
//! against `ν_x` therefore reduce to finite rational sums — this is the
//! engine behind the moment calculus.

use crate::kernels::harmonic_measure_cylinder;
use crate::rational::{pow_i, Rat};
use crate::tree::{BoundarySetT, TreeParams, Vertex};
use num::One;

/// Exact mass `M_j(x) = ν_x(E^(q^(-j)))` of the closed level-`j`
/// neighbourhood. Enumerates the active cylinders, so intended for
/// moderate `j`; tail levels come from [`SliceWeights`] in closed form.
pub fn neighbourhood_mass(
    params: &TreeParams,
    set: &BoundarySetT,
    x: &Vertex,
    j: usize,
) -> Rat {
    set.active_vertices(j)
        .iter()
        .map(|y| harmonic_measure_cylinder(params, x, y))
        .sum()
}

/// The full atomic law of `ρ(·, E)` under `ν_x`: explicit head weights and
/// an exact geometric tail.
#[derive(Debug, Clone)]
pub struct SliceWeights {
    /// `M_0 ..= M_l` where `l` is the first tail level.
    masses: Vec<Rat>,
    /// `W_0 .. W_{l-1}`.
    head: Vec<Rat>,
    /// `W_l`; deeper weights follow `W_{l+i} = W_l · tail_ratio^i`.
    tail_lead: Rat,
    /// `m/q` — active growth over branching.
    tail_ratio: Rat,
}

/// Computes the slice law of `ρ(·, E)` under `ν_x`.
///
/// The first tail level is `max(|x| + 1, stable depth of the set)`: deep
/// enough that no active vertex is an ancestor of `x` (freezing the
/// confluent factors in the cylinder measures) and that the active counts
/// multiply exactly by the growth factor per level.
pub fn slice_weights(params: &TreeParams, set: &BoundarySetT, x: &Vertex) -> SliceWeights {
    let l = (x.depth() + 1).max(set.stable_depth());
    let masses: Vec<Rat> = (0..=l)
        .map(|j| neighbourhood_mass(params, set, x, j))
        .collect();
    let head: Vec<Rat> = (0..l).map(|j| &masses[j] - &masses[j + 1]).collect();
    let tail_ratio = Rat::new(set.growth_factor().into(), params.q().into());
    let tail_lead = &masses[l] * (Rat::one() - &tail_ratio);
    SliceWeights { masses, head, tail_lead, tail_ratio }
}

impl SliceWeights {
    /// First level resolved by the geometric tail.
    pub fn first_tail_level(&self) -> usize {
        self.head.len()
    }

    pub fn tail_ratio(&self) -> &Rat {
        &self.tail_ratio
    }

    /// `W_l`, the weight at the first tail level.
    pub fn tail_lead(&self) -> &Rat {
        &self.tail_lead
    }

    /// The atom `W_j(x)` at distance `q^(-j)`.
    pub fn weight(&self, j: usize) -> Rat {
        if j < self.head.len() {
            self.head[j].clone()
        } else {
            &self.tail_lead * pow_i(&self.tail_ratio, (j - self.head.len()) as i64)
        }
    }

    /// The neighbourhood mass `M_j(x)`, closed past the tail level.
    pub fn mass(&self, j: usize) -> Rat {
        let l = self.head.len();
        if j <= l {
            self.masses[j].clone()
        } else {
            &self.masses[l] * pow_i(&self.tail_ratio, (j - l) as i64)
        }
    }

    /// Total mass of all slices — `M_0`, which is 1 for a probability
    /// harmonic measure.
    pub fn total(&self) -> Rat {
        self.masses[0].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};
    use crate::tree::End;
    use num::Zero;

    fn t(q: u32) -> TreeParams {
        TreeParams::new(q).unwrap()
    }

    fn v(p: &TreeParams, s: &str) -> Vertex {
        Vertex::parse(p, s).unwrap()
    }

    fn single_end_set(p: &TreeParams) -> BoundarySetT {
        BoundarySetT::finite(vec![End::parse(p, "(0)").unwrap()]).unwrap()
    }

    #[test]
    fn masses_along_a_single_end_from_the_root() {
        let p = t(2);
        let set = single_end_set(&p);
        let o = Vertex::root();
        assert_eq!(neighbourhood_mass(&p, &set, &o, 0), rat(1));
        // M_j from the root is the level-j cylinder mass 1/(3·2^(j-1)).
        assert_eq!(neighbourhood_mass(&p, &set, &o, 1), ratio(1, 3));
        assert_eq!(neighbourhood_mass(&p, &set, &o, 2), ratio(1, 6));
        assert_eq!(neighbourhood_mass(&p, &set, &o, 3), ratio(1, 12));
    }

    #[test]
    fn weights_match_mass_differences_into_the_tail() {
        let p = t(3);
        let sets = [
            single_end_set(&p),
            BoundarySetT::finite(vec![
                End::parse(&p, "(0)").unwrap(),
                End::parse(&p, "1:(2)").unwrap(),
            ])
            .unwrap(),
            BoundarySetT::cantor(&p, v(&p, "2"), &[0, 1]).unwrap(),
        ];
        for set in &sets {
            for x in [Vertex::root(), v(&p, "0"), v(&p, "2/1"), v(&p, "0/0/0")] {
                let w = slice_weights(&p, set, &x);
                let l = w.first_tail_level();
                // Check both the explicit head and four tail levels against
                // direct cylinder enumeration.
                for j in 0..l + 4 {
                    let direct = neighbourhood_mass(&p, set, &x, j)
                        - neighbourhood_mass(&p, set, &x, j + 1);
                    assert_eq!(w.weight(j), direct, "W_{j} mismatch at x={x}");
                    assert!(w.weight(j) >= rat(0));
                }
                for j in l..l + 4 {
                    assert_eq!(w.mass(j), neighbourhood_mass(&p, set, &x, j));
                }
                assert_eq!(w.total(), rat(1));
            }
        }
    }

    #[test]
    fn root_weights_single_end() {
        let p = t(2);
        let set = single_end_set(&p);
        let w = slice_weights(&p, &set, &Vertex::root());
        assert_eq!(w.weight(0), ratio(2, 3));
        assert_eq!(w.weight(1), ratio(1, 6));
        assert_eq!(w.weight(2), ratio(1, 12));
        assert_eq!(w.tail_ratio(), &ratio(1, 2));
        // Σ_j W_j telescopes to M_0 = 1.
        let head_sum: Rat = (0..w.first_tail_level()).map(|j| w.weight(j)).sum();
        let tail = w.weight(w.first_tail_level()) / (rat(1) - w.tail_ratio());
        assert_eq!(head_sum + tail, rat(1));
    }

    #[test]
    fn rule_set_tail_ratio_is_growth_over_branching() {
        let p = t(3);
        let set = BoundarySetT::cantor(&p, Vertex::root(), &[0, 1]).unwrap();
        let w = slice_weights(&p, &set, &Vertex::root());
        assert_eq!(w.tail_ratio(), &ratio(2, 3));
        // M_1 = 2/4: two of the four root cylinders.
        assert_eq!(w.mass(1), ratio(1, 2));
        assert_eq!(w.weight(0), ratio(1, 2));
        // Deep below, masses follow (3/4)·(2/3)^j exactly.
        assert_eq!(w.mass(6), ratio(3, 4) * pow_i(&ratio(2, 3), 6));
    }

    #[test]
    fn off_branch_site_sees_smaller_masses() {
        let p = t(2);
        let set = single_end_set(&p);
        let on = slice_weights(&p, &set, &v(&p, "0/0"));
        let off = slice_weights(&p, &set, &v(&p, "1/1"));
        for j in 1..8 {
            assert!(on.mass(j) > off.mass(j), "level {j}");
        }
        assert_eq!(on.total(), rat(1));
        assert_eq!(off.total(), rat(1));
        // From 0/0 the level-2 neighbourhood is the cylinder at 0/0 itself.
        assert_eq!(on.mass(2), ratio(2, 3));
        assert!(!off.mass(2).is_zero());
    }
}
