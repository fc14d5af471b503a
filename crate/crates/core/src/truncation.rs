//! Truncated tree domains and their absorbed-walk quantities.
//!
//! Given a closed boundary set `E` of measure zero and a threshold
//! `t ∈ (0, 1]`, the truncation removes everything strictly below the
//! level-`k` vertices whose cylinders meet `E`, where `k` is the smallest
//! level with `q^(-k) ≤ t`. Those cut vertices form the absorbing set `Γ`;
//! the rest of the tree is the truncated domain.
//!
//! The walk killed on `Γ` is resolved exactly: hitting probabilities
//! `ν_x(γ)` come from a dense rational solve on the skeleton of `Γ`
//! ancestors (free subtrees are eliminated in closed form through the
//! first-passage weight `1/q` per step towards the gateway), the escape
//! probability is solved against the same matrix, and the truncated Green
//! function follows by subtracting the harmonic extension from `Γ`.

use crate::kernels::green;
use crate::linalg::{solve_exact, LinalgError};
use crate::potential::BallIndex;
use crate::rational::{fmt_rat, ipow, Rat};
use crate::tree::{BoundarySetT, TreeParams, Vertex};
use num::{One, Signed, Zero};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TruncError {
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(String),
    #[error("vertex {0} was cut away by the truncation")]
    OutsideDomain(String),
    #[error("vertex {0} lies on the absorbing set, where the domain Green function vanishes")]
    OnBoundary(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("ball enumeration failed: {0}")]
    Ball(String),
}

/// Where a vertex sits relative to a truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// Kept, strictly away from the absorbing set.
    Interior,
    /// On the absorbing set `Γ`.
    Boundary,
    /// Strictly below `Γ` — removed from the domain.
    Chopped,
}

/// Smallest level `k ≥ 1` with `q^(-k) ≤ t`, for `t ∈ (0, 1]`.
pub fn level_of(params: &TreeParams, t: &Rat) -> Result<usize, TruncError> {
    if !t.is_positive() || t > &Rat::one() {
        return Err(TruncError::BadThreshold(fmt_rat(t)));
    }
    let mut k = 1usize;
    while &ipow(params.q(), -(k as i64)) > t {
        k += 1;
    }
    Ok(k)
}

/// A truncated tree domain: the tree with the subtrees strictly below the
/// absorbing set `Γ` removed.
#[derive(Debug, Clone)]
pub struct TruncationT {
    params: TreeParams,
    set: BoundarySetT,
    threshold: Rat,
    level: usize,
    gamma: Vec<Vertex>,
}

impl TruncationT {
    pub fn build(params: &TreeParams, set: BoundarySetT, threshold: Rat) -> Result<Self, TruncError> {
        let level = level_of(params, &threshold)?;
        let gamma = set.active_vertices(level);
        Ok(TruncationT { params: *params, set, threshold, level, gamma })
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn set(&self) -> &BoundarySetT {
        &self.set
    }

    pub fn threshold(&self) -> &Rat {
        &self.threshold
    }

    /// The truncation level `k`.
    pub fn level(&self) -> usize {
        self.level
    }

    /// The absorbing vertices, sorted.
    pub fn gamma(&self) -> &[Vertex] {
        &self.gamma
    }

    pub fn classify(&self, x: &Vertex) -> Membership {
        if x.depth() < self.level {
            return Membership::Interior;
        }
        let prefix = x.ancestor(self.level);
        if self.gamma.binary_search(&prefix).is_ok() {
            if x.depth() == self.level {
                Membership::Boundary
            } else {
                Membership::Chopped
            }
        } else {
            Membership::Interior
        }
    }
}

/// Exact hitting data of the absorbing set: for every skeleton vertex the
/// full distribution over `Γ` and the escape probability, extendable to any
/// domain vertex through its gateway.
#[derive(Debug, Clone)]
pub struct HittingSolution {
    q: u32,
    ancestors: Vec<Vertex>,
    anc_pos: BTreeMap<Vertex, usize>,
    gamma_pos: BTreeMap<Vertex, usize>,
    gamma_len: usize,
    /// `nu[i][j]` = probability, from ancestor `i`, of first hitting `Γ` at
    /// `gamma[j]`.
    nu: Vec<Vec<Rat>>,
    /// Probability, from ancestor `i`, of never hitting `Γ`.
    esc: Vec<Rat>,
}

/// Builds and solves the skeleton system for a truncation.
///
/// Skeleton unknowns are the proper ancestors of `Γ` vertices. A child
/// subtree holding no `Γ` vertex is eliminated in closed form: from such a
/// child the walk returns to its parent with probability `1/q`, so the
/// subtree contributes `(1/q)·ν(parent)` per child. Escape probabilities
/// solve against the same matrix with the complementary affine load, which
/// makes the exact identity `Σ_γ ν + escape = 1` a whole-system check.
pub fn solve_hitting(trunc: &TruncationT) -> Result<HittingSolution, TruncError> {
    let params = trunc.params();
    let q = params.q();
    let qr = Rat::from_integer(q.into());
    let k = trunc.level();
    let mut anc_set: BTreeMap<Vertex, usize> = BTreeMap::new();
    for g in trunc.gamma() {
        for d in 0..k {
            anc_set.entry(g.ancestor(d)).or_insert(0);
        }
    }
    let ancestors: Vec<Vertex> = anc_set.keys().cloned().collect();
    let anc_pos: BTreeMap<Vertex, usize> =
        ancestors.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let gamma_pos: BTreeMap<Vertex, usize> =
        trunc.gamma().iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let n = ancestors.len();
    let g = trunc.gamma().len();
    let mut matrix = vec![vec![Rat::zero(); n]; n];
    let mut rhs = vec![vec![Rat::zero(); g + 1]; n];
    for (i, v) in ancestors.iter().enumerate() {
        let d = v.depth();
        let labels = params.child_labels_at(d + 1);
        let degree = labels + u32::from(d > 0);
        let mut free = i64::from(labels);
        for l in 0..labels {
            let c = v.child(l as u8);
            if let Some(&j) = anc_pos.get(&c) {
                matrix[i][j] -= Rat::one();
                free -= 1;
            } else if let Some(&j) = gamma_pos.get(&c) {
                rhs[i][j] += Rat::one();
                free -= 1;
            }
        }
        if d > 0 {
            let p = anc_pos[&v.ancestor(d - 1)];
            matrix[i][p] -= Rat::one();
        }
        // Diagonal: degree minus the eliminated free-subtree feedback.
        matrix[i][i] += Rat::from_integer(degree.into()) - Rat::from_integer(free.into()) / &qr;
        // Escape column: each free child escapes outright with probability
        // (q-1)/q before ever returning to its parent.
        rhs[i][g] += Rat::from_integer(free.into()) * (&qr - Rat::one()) / &qr;
    }
    let sol = solve_exact(&matrix, &rhs)?;
    let mut nu = Vec::with_capacity(n);
    let mut esc = Vec::with_capacity(n);
    for row in sol {
        let mut r = row;
        let e = r.pop().expect("escape column present");
        nu.push(r);
        esc.push(e);
    }
    Ok(HittingSolution {
        q,
        ancestors,
        anc_pos,
        gamma_pos,
        gamma_len: g,
        nu,
        esc,
    })
}

impl HittingSolution {
    /// The skeleton vertices carrying explicit unknowns.
    pub fn ancestors(&self) -> &[Vertex] {
        &self.ancestors
    }

    /// Hitting distribution over `Γ` and escape probability for any domain
    /// vertex. Off-skeleton vertices route through their gateway — the
    /// deepest skeleton ancestor — with one first-passage factor `q^(-d)`
    /// for the distance `d` to it.
    pub fn hit_row(&self, trunc: &TruncationT, x: &Vertex) -> Result<(Vec<Rat>, Rat), TruncError> {
        match trunc.classify(x) {
            Membership::Chopped => Err(TruncError::OutsideDomain(x.to_string())),
            Membership::Boundary => {
                let mut row = vec![Rat::zero(); self.gamma_len];
                row[self.gamma_pos[x]] = Rat::one();
                Ok((row, Rat::zero()))
            }
            Membership::Interior => {
                let mut d = x.depth();
                let gateway = loop {
                    let a = x.ancestor(d);
                    if let Some(&i) = self.anc_pos.get(&a) {
                        break i;
                    }
                    d -= 1;
                };
                let factor = ipow(self.q, -((x.depth() - self.ancestors[gateway].depth()) as i64));
                let row = self.nu[gateway].iter().map(|v| v * &factor).collect();
                let esc = Rat::one() - &factor * (Rat::one() - &self.esc[gateway]);
                Ok((row, esc))
            }
        }
    }

    /// Total probability of ever hitting `Γ` from `x`.
    pub fn hit_mass(&self, trunc: &TruncationT, x: &Vertex) -> Result<Rat, TruncError> {
        let (row, _) = self.hit_row(trunc, x)?;
        Ok(row.into_iter().sum())
    }
}

/// Green function of the truncated domain:
/// `G_tr(x, y) = G(x, y) − Σ_γ ν_x(γ) G(γ, y)` for interior `y`; it
/// vanishes for `x` on the absorbing set.
pub fn truncated_green(
    trunc: &TruncationT,
    sol: &HittingSolution,
    x: &Vertex,
    y: &Vertex,
) -> Result<Rat, TruncError> {
    match trunc.classify(y) {
        Membership::Interior => {}
        Membership::Boundary => return Err(TruncError::OnBoundary(y.to_string())),
        Membership::Chopped => return Err(TruncError::OutsideDomain(y.to_string())),
    }
    let (row, _) = sol.hit_row(trunc, x)?;
    let params = trunc.params();
    let mut g = green(params, x, y);
    for (nu, gamma) in row.iter().zip(trunc.gamma()) {
        g -= nu * green(params, gamma, y);
    }
    Ok(g)
}

/// Exact comparison of the truncated Green function at the root against the
/// free one over a ball, reported as the extreme ratios.
#[derive(Debug, Clone, Serialize)]
pub struct GreenBoundReport {
    pub q: u32,
    pub threshold: String,
    pub level: usize,
    pub gamma_size: usize,
    pub checked_radius: usize,
    /// Interior vertices whose ratio entered the extremes.
    pub checked: usize,
    /// Ball vertices excluded: on `Γ` or cut away.
    pub skipped: usize,
    /// Exact `min_x G_tr(x, o) / G(x, o)`.
    pub min_ratio: String,
    /// The guaranteed lower constant `(q-1)/q`.
    pub lower_bound: String,
    /// Whether `G_tr ≤ G` held at every checked vertex.
    pub upper_ok: bool,
    /// `min_ratio ≥ (q-1)/q` and `upper_ok`: the two-sided bound
    /// `((q-1)/q)·G ≤ G_tr ≤ G`. Since `G(x, o) = (q/(q-1))·q^(-|x|)`, the
    /// lower part says exactly `G_tr(x, o) ≥ q^(-|x|)`, the boundary
    /// distance of `x`.
    pub pass: bool,
}

/// Checks the Green bound over `B(o, k + extra_depth)` intersected with the
/// truncated domain.
pub fn verify_green_bound(
    params: &TreeParams,
    set: BoundarySetT,
    threshold: Rat,
    extra_depth: usize,
) -> Result<GreenBoundReport, TruncError> {
    let trunc = TruncationT::build(params, set, threshold)?;
    let sol = solve_hitting(&trunc)?;
    let radius = trunc.level() + extra_depth;
    let ball = BallIndex::new(params, radius).map_err(|e| TruncError::Ball(e.to_string()))?;
    let root = Vertex::root();
    let mut min_ratio: Option<Rat> = None;
    let mut upper_ok = true;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for i in 0..ball.len() {
        let x = ball.vertex_at(i);
        if !matches!(trunc.classify(&x), Membership::Interior) {
            skipped += 1;
            continue;
        }
        let gtr = truncated_green(&trunc, &sol, &x, &root)?;
        let g = green(params, &x, &root);
        let ratio = gtr / g;
        if ratio > Rat::one() {
            upper_ok = false;
        }
        min_ratio = Some(match min_ratio {
            None => ratio,
            Some(m) => m.min(ratio),
        });
        checked += 1;
    }
    let min_ratio = min_ratio.expect("the root is always interior");
    let q = params.q();
    let lower = Rat::new((i64::from(q) - 1).into(), i64::from(q).into());
    let pass = upper_ok && min_ratio >= lower;
    Ok(GreenBoundReport {
        q,
        threshold: fmt_rat(trunc.threshold()),
        level: trunc.level(),
        gamma_size: trunc.gamma().len(),
        checked_radius: radius,
        checked,
        skipped,
        min_ratio: fmt_rat(&min_ratio),
        lower_bound: fmt_rat(&lower),
        upper_ok,
        pass,
    })
}
