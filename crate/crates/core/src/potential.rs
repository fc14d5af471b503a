//! Discrete potential theory on balls of the tree.
//!
//! Functions live on the ball `B(o, R)` in dense level-major storage, with
//! an optional closed-form description of their values outside the ball: a
//! sum of geometric radial terms `Σ c_k r_k^{|x|}`. That family is closed
//! under the transition operator of the simple random walk, so Laplacians,
//! Riesz measures and harmonic-majorant iterations stay exact end to end.
//!
//! The central objects are `riesz_measure` (the vertex weights `Δu ≥ 0` of
//! a subharmonic function), `green_potential` (the Green integral of such a
//! weight system, with exact geometric tail summation and certified
//! divergence), and `riesz_decomposition`, which reassembles `u` as
//! `harmonic part − potential part` and reports the exact defect.

use crate::rational::{ipow, pow_i, ratio, Rat};
use crate::tree::{graph_distance, TreeParams, Vertex};
use num::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// Errors from domain bookkeeping and decomposition.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PotentialError {
    #[error("function domain exhausted: no vertex has all neighbours available")]
    DomainExhausted,
    #[error("ball storage would exceed the configured size limit")]
    BallTooLarge,
    #[error("boundary layer of the ball does not match the declared radial tail")]
    InconsistentTail,
    #[error("green potential diverges, so the function has no finite decomposition")]
    DivergentPotential,
    #[error("missing value for vertex {0} in function data")]
    MissingVertex(String),
    #[error("malformed function data: {0}")]
    BadData(String),
}

const MAX_BALL: usize = 64_000_000;

/// Dense index of the ball `B(o, R)`: vertices stored level by level, each
/// level in lexicographic label order, so parent/child moves are integer
/// arithmetic rather than word manipulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallIndex {
    q: u32,
    radius: usize,
    offsets: Vec<usize>,
}

impl BallIndex {
    pub fn new(params: &TreeParams, radius: usize) -> Result<Self, PotentialError> {
        let q = params.q() as usize;
        let mut offsets = Vec::with_capacity(radius + 2);
        offsets.push(0);
        let mut level = 1usize;
        let mut total = 0usize;
        for d in 0..=radius {
            total = total.checked_add(level).filter(|&t| t <= MAX_BALL).ok_or(PotentialError::BallTooLarge)?;
            offsets.push(total);
            level = if d == 0 { q + 1 } else { level.checked_mul(q).ok_or(PotentialError::BallTooLarge)? };
        }
        Ok(BallIndex { q: params.q(), radius, offsets })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.offsets[self.radius + 1]
    }

    pub fn is_empty(&self) -> bool {
        false // the root is always present
    }

    pub fn level_range(&self, depth: usize) -> std::ops::Range<usize> {
        self.offsets[depth]..self.offsets[depth + 1]
    }

    /// Depth of the vertex stored at `i`.
    pub fn depth_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }

    pub fn index_of(&self, v: &Vertex) -> Option<usize> {
        let d = v.depth();
        if d > self.radius {
            return None;
        }
        Some(self.offsets[d] + self.local_of(v.labels()))
    }

    fn local_of(&self, word: &[u8]) -> usize {
        let q = self.q as usize;
        let mut local = 0usize;
        for &l in word {
            local = local * q + l as usize;
        }
        // The first label ranges over q + 1 values but contributes with the
        // same place value q^(d-1), so the fold above is already correct.
        local
    }

    pub fn vertex_at(&self, i: usize) -> Vertex {
        let d = self.depth_of(i);
        let q = self.q as usize;
        let mut local = i - self.offsets[d];
        let mut word = vec![0u8; d];
        for pos in (0..d).rev() {
            word[pos] = (local % q) as u8;
            local /= q;
        }
        // The leading digit may equal q (root children have q + 1 labels);
        // the remainder loop leaves it in place for pos = 0.
        if d > 0 {
            word[0] = (word[0] as usize + local * q) as u8;
        }
        Vertex::from_labels(&TreeParams::new(self.q).unwrap(), &word).unwrap()
    }

    pub fn parent_of(&self, i: usize) -> Option<usize> {
        let d = self.depth_of(i);
        match d {
            0 => None,
            1 => Some(0),
            _ => {
                let local = i - self.offsets[d];
                Some(self.offsets[d - 1] + local / self.q as usize)
            }
        }
    }

    /// Indices of the children of `i`, or `None` when they fall outside the
    /// ball.
    pub fn children_of(&self, i: usize) -> Option<std::ops::Range<usize>> {
        let d = self.depth_of(i);
        if d + 1 > self.radius {
            return None;
        }
        let q = self.q as usize;
        if d == 0 {
            Some(self.offsets[1]..self.offsets[1] + q + 1)
        } else {
            let local = i - self.offsets[d];
            let start = self.offsets[d + 1] + local * q;
            Some(start..start + q)
        }
    }
}

/// One geometric radial term: the value `coeff * ratio^{|x|}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadialTerm {
    pub coeff: Rat,
    pub ratio: Rat,
}

impl RadialTerm {
    pub fn new(coeff: Rat, ratio: Rat) -> Self {
        assert!(ratio.is_positive(), "radial ratio must be positive");
        RadialTerm { coeff, ratio }
    }

    fn eval(&self, depth: usize) -> Rat {
        &self.coeff * pow_i(&self.ratio, depth as i64)
    }
}

/// How a function continues outside its stored ball.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extension {
    /// Nothing known beyond the ball.
    Undefined,
    /// `f(x) = Σ_k coeff_k · ratio_k^{|x|}` for every `|x| > radius`.
    /// An empty sum means the function vanishes outside the ball.
    Radial(Vec<RadialTerm>),
}

impl Extension {
    pub fn zero_outside() -> Self {
        Extension::Radial(Vec::new())
    }
}

/// Merges equal ratios and drops vanished coefficients; terms end up sorted
/// by decreasing ratio, so the asymptotically dominant term comes first.
fn normalize_terms(mut terms: Vec<RadialTerm>) -> Vec<RadialTerm> {
    terms.sort_by(|a, b| b.ratio.cmp(&a.ratio));
    let mut out: Vec<RadialTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last) if last.ratio == t.ratio => last.coeff += t.coeff,
            _ => out.push(t),
        }
        if out.last().map_or(false, |l| l.coeff.is_zero()) {
            out.pop();
        }
    }
    out
}

fn eval_terms(terms: &[RadialTerm], depth: usize) -> Rat {
    terms.iter().map(|t| t.eval(depth)).sum()
}

/// A function on the tree: exact rational values on `B(o, R)` plus an
/// extension describing everything outside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeFunction {
    params: TreeParams,
    index: BallIndex,
    values: Vec<Rat>,
    extension: Extension,
}

impl TreeFunction {
    /// Builds from a closure evaluated on the whole ball.
    pub fn from_fn<F>(params: &TreeParams, radius: usize, extension: Extension, mut f: F) -> Result<Self, PotentialError>
    where
        F: FnMut(&Vertex) -> Rat,
    {
        let index = BallIndex::new(params, radius)?;
        let values = (0..index.len()).map(|i| f(&index.vertex_at(i))).collect();
        Ok(TreeFunction { params: *params, index, values, extension })
    }

    /// The radial function `Σ_k c_k r_k^{|x|}`, stored on a ball of the
    /// given radius and extended by the same formula outside.
    pub fn radial(params: &TreeParams, radius: usize, terms: Vec<RadialTerm>) -> Result<Self, PotentialError> {
        let terms = normalize_terms(terms);
        let index = BallIndex::new(params, radius)?;
        let mut values = Vec::with_capacity(index.len());
        for d in 0..=radius {
            let v = eval_terms(&terms, d);
            for _ in index.level_range(d) {
                values.push(v.clone());
            }
        }
        Ok(TreeFunction { params: *params, index, values, extension: Extension::Radial(terms) })
    }

    pub fn constant(params: &TreeParams, radius: usize, value: Rat) -> Result<Self, PotentialError> {
        Self::radial(params, radius, vec![RadialTerm::new(value, Rat::one())])
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn index(&self) -> &BallIndex {
        &self.index
    }

    pub fn radius(&self) -> usize {
        self.index.radius()
    }

    pub fn extension(&self) -> &Extension {
        &self.extension
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }

    /// Value at a vertex; `None` outside the ball of an undefined-extension
    /// function.
    pub fn value(&self, x: &Vertex) -> Option<Rat> {
        match self.index.index_of(x) {
            Some(i) => Some(self.values[i].clone()),
            None => match &self.extension {
                Extension::Undefined => None,
                Extension::Radial(terms) => Some(eval_terms(terms, x.depth())),
            },
        }
    }

    pub fn value_at_index(&self, i: usize) -> &Rat {
        &self.values[i]
    }

    /// Whether the outermost stored level agrees with the radial extension
    /// formula — when it does, one application of the transition operator
    /// keeps both the radius and a radial extension.
    fn boundary_layer_is_radial(&self) -> bool {
        match &self.extension {
            Extension::Undefined => false,
            Extension::Radial(terms) => {
                let want = eval_terms(terms, self.index.radius());
                self.index
                    .level_range(self.index.radius())
                    .all(|i| self.values[i] == want)
            }
        }
    }

    /// One step of the transition operator `P`: the average of `f` over the
    /// `q + 1` neighbours. All stored values of the result are exact. With
    /// nothing known outside the ball the domain shrinks by one level. A
    /// radial extension supplies the layer just outside the ball, so the
    /// radius is kept; the result carries the closed-form mapped extension
    /// when the stored boundary layer agrees with the formula (then the
    /// mapped formula is valid everywhere outside too) and drops to an
    /// undefined extension otherwise.
    pub fn apply_p(&self) -> Result<TreeFunction, PotentialError> {
        let q = self.params.q();
        let r = self.index.radius();
        match &self.extension {
            Extension::Undefined => {
                if r == 0 {
                    return Err(PotentialError::DomainExhausted);
                }
                let index = BallIndex::new(&self.params, r - 1)?;
                let values = (0..index.len()).map(|i| self.p_at(i)).collect();
                Ok(TreeFunction { params: self.params, index, values, extension: Extension::Undefined })
            }
            Extension::Radial(terms) => {
                let mapped: Vec<RadialTerm> = terms
                    .iter()
                    .map(|t| {
                        let c = &t.coeff * (&t.ratio * Rat::from_integer(q.into()) + t.ratio.clone().recip())
                            / Rat::from_integer((q + 1).into());
                        RadialTerm { coeff: c, ratio: t.ratio.clone() }
                    })
                    .collect();
                let extension = if self.boundary_layer_is_radial() {
                    Extension::Radial(normalize_terms(mapped))
                } else {
                    Extension::Undefined
                };
                let index = self.index.clone();
                let values = (0..index.len()).map(|i| self.p_at(i)).collect();
                Ok(TreeFunction { params: self.params, index, values, extension })
            }
        }
    }

    /// `(P f)(x)` for a stored vertex whose neighbours are all available,
    /// in the ball or through the extension.
    fn p_at(&self, i: usize) -> Rat {
        let mut sum = Rat::zero();
        let mut deg = 0u32;
        if let Some(p) = self.index.parent_of(i) {
            sum += &self.values[p];
            deg += 1;
        }
        let d = self.index.depth_of(i);
        let nchild = self.params.child_labels_at(d + 1);
        match self.index.children_of(i) {
            Some(ch) => {
                for c in ch {
                    sum += &self.values[c];
                }
            }
            None => match &self.extension {
                Extension::Radial(terms) => {
                    sum += eval_terms(terms, d + 1) * Rat::from_integer(nchild.into())
                }
                Extension::Undefined => unreachable!("caller guarantees children are available"),
            },
        }
        deg += nchild;
        sum / Rat::from_integer(deg.into())
    }

    /// `Δf(x) = (P f)(x) − f(x)`, or `None` when a neighbour value is
    /// unknown.
    pub fn laplacian_at(&self, x: &Vertex) -> Option<Rat> {
        let fx = self.value(x)?;
        let mut sum = Rat::zero();
        let mut deg = 0u32;
        if let Some(p) = x.parent() {
            sum += self.value(&p)?;
            deg += 1;
        }
        let nchild = self.params.child_labels_at(x.depth() + 1);
        for l in 0..nchild {
            sum += self.value(&x.child(l as u8))?;
        }
        deg += nchild;
        Some(sum / Rat::from_integer(deg.into()) - fx)
    }

    /// Largest depth `d` such that `Δf` is computable on all of `B(o, d)`.
    pub fn laplacian_radius(&self) -> Option<usize> {
        match &self.extension {
            Extension::Undefined => self.index.radius().checked_sub(1),
            Extension::Radial(_) => Some(self.index.radius()),
        }
    }

    /// Sites in `B(o, depth)` where `Δf < 0`, capped at `limit` entries.
    pub fn subharmonicity_violations(&self, depth: usize, limit: usize) -> Vec<(Vertex, Rat)> {
        let mut out = Vec::new();
        for i in 0..self.index.offsets[depth.min(self.index.radius()) + 1] {
            let x = self.index.vertex_at(i);
            if let Some(d) = self.laplacian_at(&x) {
                if d.is_negative() {
                    out.push((x, d));
                    if out.len() >= limit {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Serializes ball values as `vertex,num,den` lines under a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vertex,num,den\n");
        for i in 0..self.index.len() {
            let v = self.index.vertex_at(i);
            let x = &self.values[i];
            s.push_str(&format!("{v},{},{}\n", x.numer(), x.denom()));
        }
        s
    }

    /// Reads values written by `to_csv`. Every vertex of the ball whose
    /// radius is the deepest address present must be listed.
    pub fn from_csv(params: &TreeParams, text: &str, extension: Extension) -> Result<Self, PotentialError> {
        let mut map: BTreeMap<Vertex, Rat> = BTreeMap::new();
        let mut radius = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("vertex")) {
                continue;
            }
            let mut parts = line.split(',');
            let (vs, ns, ds) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(v), Some(n), Some(d), None) => (v, n, d),
                _ => return Err(PotentialError::BadData(format!("line {}: expected vertex,num,den", lineno + 1))),
            };
            let v = Vertex::parse(params, vs)
                .map_err(|e| PotentialError::BadData(format!("line {}: {e}", lineno + 1)))?;
            let num: num::BigInt = ns.trim().parse().map_err(|_| PotentialError::BadData(format!("line {}: bad numerator", lineno + 1)))?;
            let den: num::BigInt = ds.trim().parse().map_err(|_| PotentialError::BadData(format!("line {}: bad denominator", lineno + 1)))?;
            if den.is_zero() {
                return Err(PotentialError::BadData(format!("line {}: zero denominator", lineno + 1)));
            }
            radius = radius.max(v.depth());
            map.insert(v, Rat::new(num, den));
        }
        let index = BallIndex::new(params, radius)?;
        if map.len() != index.len() {
            // Identify one missing vertex for the error message.
            for i in 0..index.len() {
                let v = index.vertex_at(i);
                if !map.contains_key(&v) {
                    return Err(PotentialError::MissingVertex(v.to_string()));
                }
            }
        }
        let values = (0..index.len()).map(|i| map[&index.vertex_at(i)].clone()).collect();
        Ok(TreeFunction { params: *params, index, values, extension })
    }
}

/// A vertex weight system: finitely many listed atoms plus an optional
/// radial tail putting mass `Σ_k c_k r_k^{n}` on **every** vertex of depth
/// `n ≥ from_depth`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VertexMeasure {
    pub atoms: BTreeMap<Vertex, Rat>,
    pub tail: Option<GeometricTail>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeometricTail {
    pub from_depth: usize,
    pub terms: Vec<RadialTerm>,
}

impl VertexMeasure {
    pub fn from_atoms(atoms: BTreeMap<Vertex, Rat>) -> Self {
        let atoms = atoms.into_iter().filter(|(_, m)| !m.is_zero()).collect();
        VertexMeasure { atoms, tail: None }
    }

    /// Mass at one vertex.
    pub fn mass_at(&self, x: &Vertex) -> Rat {
        if let Some(m) = self.atoms.get(x) {
            return m.clone();
        }
        match &self.tail {
            Some(t) if x.depth() >= t.from_depth => eval_terms(&t.terms, x.depth()),
            _ => Rat::zero(),
        }
    }

    /// Sites with negative mass (atoms, and the first violating tail level
    /// within a horizon where the tail sign could still flip).
    pub fn negative_sites(&self, limit: usize) -> Vec<Vertex> {
        let mut out: Vec<Vertex> = self
            .atoms
            .iter()
            .filter(|(_, m)| m.is_negative())
            .take(limit)
            .map(|(v, _)| v.clone())
            .collect();
        if let Some(t) = &self.tail {
            if let Some(lead) = normalize_terms(t.terms.clone()).first() {
                if lead.coeff.is_negative() && out.len() < limit {
                    // The dominant term eventually wins, so deep levels go
                    // negative; surface a witness vertex at the first
                    // negative depth.
                    let mut d = t.from_depth;
                    while !eval_terms(&t.terms, d).is_negative() {
                        d += 1;
                    }
                    let mut w = Vertex::root();
                    for _ in 0..d {
                        w = w.child(0);
                    }
                    out.push(w);
                }
            }
        }
        out
    }

    pub fn is_nonnegative(&self) -> bool {
        if self.atoms.values().any(|m| m.is_negative()) {
            return false;
        }
        match &self.tail {
            None => true,
            Some(t) => {
                let terms = normalize_terms(t.terms.clone());
                match terms.first() {
                    None => true,
                    Some(lead) => {
                        if lead.coeff.is_negative() {
                            return false;
                        }
                        // Leading term positive: any sign change must show
                        // within a bounded window because the ratios are
                        // strictly ordered; scan until the lead dominates
                        // the absolute sum of the others.
                        let mut d = t.from_depth;
                        loop {
                            let total = eval_terms(&terms, d);
                            if total.is_negative() {
                                return false;
                            }
                            let rest: Rat = terms[1..].iter().map(|t| t.eval(d).abs()).sum();
                            if lead.eval(d) >= rest {
                                return true;
                            }
                            d += 1;
                        }
                    }
                }
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("vertex,num,den\n");
        for (v, m) in &self.atoms {
            s.push_str(&format!("{v},{},{}\n", m.numer(), m.denom()));
        }
        s
    }

    pub fn from_csv(params: &TreeParams, text: &str) -> Result<Self, PotentialError> {
        let mut atoms = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("vertex")) {
                continue;
            }
            let mut parts = line.split(',');
            let (vs, ns, ds) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(v), Some(n), Some(d), None) => (v, n, d),
                _ => return Err(PotentialError::BadData(format!("line {}: expected vertex,num,den", lineno + 1))),
            };
            let v = Vertex::parse(params, vs)
                .map_err(|e| PotentialError::BadData(format!("line {}: {e}", lineno + 1)))?;
            let num: num::BigInt = ns.trim().parse().map_err(|_| PotentialError::BadData(format!("line {}: bad numerator", lineno + 1)))?;
            let den: num::BigInt = ds.trim().parse().map_err(|_| PotentialError::BadData(format!("line {}: bad denominator", lineno + 1)))?;
            if den.is_zero() {
                return Err(PotentialError::BadData(format!("line {}: zero denominator", lineno + 1)));
            }
            atoms.insert(v, Rat::new(num, den));
        }
        Ok(VertexMeasure::from_atoms(atoms))
    }
}

/// The vertex weights `Δu` of a function: atoms on the ball where the
/// Laplacian is computable, and the mapped radial tail beyond. For a
/// subharmonic `u` this is its Riesz measure.
pub fn riesz_measure(u: &TreeFunction) -> VertexMeasure {
    let mut atoms = BTreeMap::new();
    let lr = u.laplacian_radius().unwrap_or(0);
    if u.laplacian_radius().is_some() {
        for i in 0..u.index().offsets[lr + 1] {
            let x = u.index().vertex_at(i);
            if let Some(d) = u.laplacian_at(&x) {
                if !d.is_zero() {
                    atoms.insert(x, d);
                }
            }
        }
    }
    let tail = match u.extension() {
        Extension::Undefined => None,
        Extension::Radial(terms) => {
            let q = u.params().q();
            let mapped: Vec<RadialTerm> = terms
                .iter()
                .map(|t| {
                    // Δ(c r^n) = c (q r − 1)(r − 1) / ((q+1) r) · r^n.
                    let factor = (&t.ratio * Rat::from_integer(q.into()) - Rat::one())
                        * (t.ratio.clone() - Rat::one())
                        / (Rat::from_integer((q + 1).into()) * t.ratio.clone());
                    RadialTerm { coeff: &t.coeff * factor, ratio: t.ratio.clone() }
                })
                .collect();
            let mapped = normalize_terms(mapped);
            let r = u.radius();
            if u.boundary_layer_is_radial() {
                Some(GeometricTail { from_depth: r + 1, terms: mapped })
            } else {
                // The layer right outside the ball feels the stored values,
                // so list it explicitly and start the tail one level deeper.
                let fx = eval_terms(terms, r + 1);
                let fgrand = eval_terms(terms, r + 2);
                for i in u.index().level_range(r) {
                    let x = u.index().vertex_at(i);
                    let pv = (u.values()[i].clone()
                        + &fgrand * Rat::from_integer(q.into()))
                        / Rat::from_integer((q + 1).into());
                    let delta = pv - &fx;
                    if !delta.is_zero() {
                        for l in 0..u.params().child_labels_at(r + 1) {
                            atoms.insert(x.child(l as u8), delta.clone());
                        }
                    }
                }
                Some(GeometricTail { from_depth: r + 2, terms: mapped })
            }
        }
    };
    let tail = tail.filter(|t| !t.terms.is_empty());
    VertexMeasure { atoms: atoms.into_iter().filter(|(_, m)| !m.is_zero()).collect(), tail }
}

/// Value of a Green integral: finite and exact, or certified divergent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PotentialValue {
    Finite(Rat),
    Divergent,
}

impl PotentialValue {
    pub fn unwrap_finite(self) -> Rat {
        match self {
            PotentialValue::Finite(v) => v,
            PotentialValue::Divergent => panic!("potential is divergent"),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, PotentialValue::Finite(_))
    }
}

impl fmt::Display for PotentialValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialValue::Finite(v) => write!(f, "{v}"),
            PotentialValue::Divergent => write!(f, "divergent"),
        }
    }
}

/// `Σ_{|y| = n} q^{-d(x, y)}` for any `x` with `|x| = m`: the total
/// first-passage weight of a whole level, which depends only on the two
/// depths.
pub fn level_passage_sum(params: &TreeParams, m: usize, n: usize) -> Rat {
    let q = params.q();
    if m == 0 {
        return if n == 0 { Rat::one() } else { ratio((q + 1).into(), q.into()) };
    }
    if n == 0 {
        return ipow(q, -(m as i64));
    }
    let mut sum = if n >= m {
        Rat::one()
    } else {
        ipow(q, n as i64 - m as i64)
    };
    for a in 0..m.min(n) {
        let k: i64 = if a == 0 { q.into() } else { i64::from(q) - 1 };
        sum += Rat::from_integer(k.into()) * ipow(q, a as i64 - m as i64 - 1);
    }
    sum
}

/// The Green potential `(G μ)(x) = Σ_y G(x, y) μ(y)`, with the geometric
/// tail summed in closed form. A tail term with ratio ≥ 1 and nonzero
/// coefficient makes the sum divergent.
pub fn green_potential(params: &TreeParams, x: &Vertex, mu: &VertexMeasure) -> PotentialValue {
    let q = params.q();
    let gfac = ratio(q.into(), i64::from(q) - 1);
    let mut total = Rat::zero();
    for (y, m) in &mu.atoms {
        total += &gfac * ipow(q, -(graph_distance(x, y) as i64)) * m;
    }
    if let Some(t) = &mu.tail {
        let m = x.depth();
        // Depth from which the per-level passage sum no longer depends on
        // the level (for the root that starts at level 1, not 0).
        let settle = m.max(1);
        for term in &t.terms {
            if term.coeff.is_zero() {
                continue;
            }
            if term.ratio >= Rat::one() {
                return PotentialValue::Divergent;
            }
            // Levels where the passage sum still varies: explicit.
            for n in t.from_depth..settle {
                total += &gfac * term.eval(n) * level_passage_sum(params, m, n);
            }
            // Beyond: a geometric series against a constant passage sum.
            let s = t.from_depth.max(settle);
            let constant = level_passage_sum(params, m, s);
            let series = pow_i(&term.ratio, s as i64) / (Rat::one() - term.ratio.clone());
            total += &gfac * &term.coeff * series * constant;
        }
    }
    PotentialValue::Finite(total)
}

/// Exact Riesz decomposition data for a function on a ball.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// The vertex weights `Δu` (complete iff `measure_complete`).
    pub measure: VertexMeasure,
    /// Sites with `Δu < 0` — empty exactly when `u` is subharmonic on the
    /// checkable domain.
    pub negative_sites: Vec<Vertex>,
    /// `u + G μ`, which is harmonic when the decomposition exists.
    pub harmonic_part: TreeFunction,
    /// `max |Δ(harmonic part)|` over its checkable ball; zero for an exact
    /// decomposition with complete measure.
    pub harmonic_defect: Rat,
    /// Whether the harmonic part dominates `u` on the stored ball.
    pub majorizes: bool,
    /// False when `u` has an undefined extension: weights outside the ball
    /// are unknown and the defect is only a ball-local diagnostic.
    pub measure_complete: bool,
}

/// Splits `u` into harmonic part minus Green potential. Fails when the
/// potential of its weight system diverges — then no finite decomposition
/// (equivalently, no finite harmonic majorant) exists.
pub fn riesz_decomposition(u: &TreeFunction) -> Result<Decomposition, PotentialError> {
    let measure = riesz_measure(u);
    let negative_sites = measure.negative_sites(16);
    let measure_complete = !matches!(u.extension(), Extension::Undefined);
    let radius = match u.laplacian_radius() {
        Some(r) => r,
        None => return Err(PotentialError::DomainExhausted),
    };
    let mut values = Vec::new();
    let index = BallIndex::new(u.params(), radius)?;
    for i in 0..index.len() {
        let x = index.vertex_at(i);
        match green_potential(u.params(), &x, &measure) {
            PotentialValue::Finite(g) => {
                values.push(u.value(&x).expect("inside domain") + g)
            }
            PotentialValue::Divergent => return Err(PotentialError::DivergentPotential),
        }
    }
    let harmonic_part = TreeFunction {
        params: *u.params(),
        index,
        values,
        extension: Extension::Undefined,
    };
    let mut defect = Rat::zero();
    if let Some(lr) = harmonic_part.laplacian_radius() {
        for i in 0..harmonic_part.index().offsets[lr + 1] {
            let x = harmonic_part.index().vertex_at(i);
            if let Some(d) = harmonic_part.laplacian_at(&x) {
                let a = d.abs();
                if a > defect {
                    defect = a;
                }
            }
        }
    }
    let majorizes = (0..harmonic_part.index().len()).all(|i| {
        let x = harmonic_part.index().vertex_at(i);
        harmonic_part.values()[i] >= u.value(&x).expect("inside domain")
    });
    Ok(Decomposition {
        measure,
        negative_sites,
        harmonic_part,
        harmonic_defect: defect,
        majorizes,
        measure_complete,
    })
}

/// Result of the monotone majorant iteration `u, Pu, P²u, …`.
#[derive(Debug, Clone)]
pub enum MajorantOutcome {
    /// Successive iterates stabilized to within the threshold.
    Converged {
        h: TreeFunction,
        iterations: usize,
        last_increment: Rat,
    },
    /// The iteration ran out of domain or out of its step budget; the root
    /// value trajectory is returned for inspection.
    NotConverged { root_values: Vec<Rat> },
}

/// Iterates the transition operator on a subharmonic function. The iterates
/// increase pointwise towards the least harmonic majorant; the iteration
/// stops when the largest pointwise increment on the common ball drops to
/// the threshold or below.
pub fn harmonic_majorant(u: &TreeFunction, threshold: &Rat, max_iter: usize) -> MajorantOutcome {
    let mut current = u.clone();
    let mut root_values = vec![current.values()[0].clone()];
    for it in 1..=max_iter {
        let next = match current.apply_p() {
            Ok(n) => n,
            Err(_) => return MajorantOutcome::NotConverged { root_values },
        };
        let common = next.radius().min(current.radius());
        let mut inc = Rat::zero();
        for i in 0..next.index().offsets[common + 1] {
            let x = next.index().vertex_at(i);
            let old = current.value(&x).expect("common ball");
            let diff = (next.values()[i].clone() - old).abs();
            if diff > inc {
                inc = diff;
            }
        }
        root_values.push(next.values()[0].clone());
        if &inc <= threshold {
            return MajorantOutcome::Converged { h: next, iterations: it, last_increment: inc };
        }
        current = next;
    }
    MajorantOutcome::NotConverged { root_values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{green, martin};
    use crate::rational::rat;
    use crate::tree::End;

    fn t(q: u32) -> TreeParams {
        TreeParams::new(q).unwrap()
    }

    fn v(p: &TreeParams, s: &str) -> Vertex {
        Vertex::parse(p, s).unwrap()
    }

    #[test]
    fn ball_index_round_trip() {
        let p = t(2);
        let ix = BallIndex::new(&p, 3).unwrap();
        assert_eq!(ix.len(), 1 + 3 + 6 + 12);
        for i in 0..ix.len() {
            let vtx = ix.vertex_at(i);
            assert_eq!(ix.index_of(&vtx), Some(i));
            assert_eq!(ix.depth_of(i), vtx.depth());
            match vtx.parent() {
                None => assert_eq!(ix.parent_of(i), None),
                Some(par) => assert_eq!(ix.parent_of(i), ix.index_of(&par)),
            }
            if let Some(ch) = ix.children_of(i) {
                let labels = p.child_labels_at(vtx.depth() + 1) as usize;
                assert_eq!(ch.len(), labels);
                for (off, c) in ch.enumerate() {
                    assert_eq!(ix.vertex_at(c), vtx.child(off as u8));
                }
            }
        }
    }

    #[test]
    fn ball_index_larger_branching() {
        let p = t(5);
        let ix = BallIndex::new(&p, 3).unwrap();
        assert_eq!(ix.len(), 1 + 6 + 30 + 150);
        for i in [0usize, 3, 6, 17, 36, 100, 186] {
            let vtx = ix.vertex_at(i);
            assert_eq!(ix.index_of(&vtx), Some(i));
        }
    }

    #[test]
    fn martin_kernel_column_is_harmonic() {
        let p = t(2);
        let xi = End::parse(&p, "0/1:(0)").unwrap();
        let u = TreeFunction::from_fn(&p, 4, Extension::Undefined, |x| martin(&p, x, &xi)).unwrap();
        for i in 0..u.index().offsets[4] {
            let x = u.index().vertex_at(i);
            assert_eq!(u.laplacian_at(&x), Some(rat(0)), "at {x}");
        }
        // Outside the checkable ball the Laplacian is unknown.
        assert_eq!(u.laplacian_at(&v(&p, "0/0/0/0")), None);
    }

    #[test]
    fn green_column_has_unit_charge() {
        let p = t(3);
        let y = v(&p, "1/0");
        let u = TreeFunction::from_fn(&p, 4, Extension::Undefined, |x| -green(&p, x, &y)).unwrap();
        assert_eq!(u.laplacian_at(&y), Some(rat(1)));
        assert_eq!(u.laplacian_at(&v(&p, "1")), Some(rat(0)));
        assert_eq!(u.laplacian_at(&v(&p, "1/0/2")), Some(rat(0)));
        assert_eq!(u.laplacian_at(&Vertex::root()), Some(rat(0)));
    }

    #[test]
    fn radial_function_closed_under_p() {
        let p = t(2);
        // f = 2^|x|: P f = (1/r + q r) / (q + 1) · f = (1/2 + 4)/3 · f away
        // from the root.
        let u = TreeFunction::radial(&p, 4, vec![RadialTerm::new(rat(1), rat(2))]).unwrap();
        let pu = u.apply_p().unwrap();
        assert_eq!(pu.radius(), 4, "consistent boundary layer keeps the radius");
        match pu.extension() {
            Extension::Radial(terms) => {
                assert_eq!(terms.len(), 1);
                assert_eq!(terms[0].coeff, ratio(3, 2));
                assert_eq!(terms[0].ratio, rat(2));
            }
            _ => panic!("expected radial extension"),
        }
        // Root value: the average of q+1 children at value 2 is 2, not the
        // radial formula value 3/2.
        assert_eq!(pu.values()[0], rat(2));
        assert_eq!(pu.value(&v(&p, "1/1")).unwrap(), ratio(3, 2) * rat(4));
        // Deep outside value follows the mapped formula.
        assert_eq!(pu.value(&v(&p, "0/0/0/0/0/0")).unwrap(), ratio(3, 2) * rat(64));
    }

    #[test]
    fn mixed_radial_terms_normalize() {
        let p = t(2);
        let u = TreeFunction::radial(
            &p,
            3,
            vec![
                RadialTerm::new(rat(5), rat(1)),
                RadialTerm::new(rat(3), ratio(1, 2)),
                RadialTerm::new(rat(-3), ratio(1, 2)),
            ],
        )
        .unwrap();
        match u.extension() {
            Extension::Radial(terms) => assert_eq!(terms.len(), 1),
            _ => panic!(),
        }
        assert_eq!(u.value(&v(&p, "0/1/0/1")).unwrap(), rat(5));
    }

    #[test]
    fn riesz_measure_of_exponential_profile() {
        // u = 2^|x| on the binary-branching tree: Δu(o) = 1 and
        // Δu = 2^(n-1) at depth n, captured as a radial tail.
        let p = t(2);
        let u = TreeFunction::radial(&p, 5, vec![RadialTerm::new(rat(1), rat(2))]).unwrap();
        let mu = riesz_measure(&u);
        assert_eq!(mu.atoms.get(&Vertex::root()), Some(&rat(1)));
        assert_eq!(mu.atoms.get(&v(&p, "1/1")), Some(&rat(2)));
        assert_eq!(mu.mass_at(&v(&p, "0/0/0/0")), rat(8));
        let tail = mu.tail.as_ref().expect("radial tail");
        assert_eq!(tail.from_depth, 6);
        assert_eq!(tail.terms.len(), 1);
        assert_eq!(tail.terms[0].coeff, ratio(1, 2));
        assert_eq!(tail.terms[0].ratio, rat(2));
        assert_eq!(mu.mass_at(&u.index().vertex_at(0).child(0)), rat(1));
        assert!(mu.is_nonnegative());
    }

    #[test]
    fn harmonic_radial_profiles_have_no_charge() {
        // Constants and the Green decay profile q^(-|x|) are harmonic away
        // from the root; their radial Laplacian coefficients vanish.
        let p = t(3);
        let u = TreeFunction::radial(
            &p,
            4,
            vec![RadialTerm::new(rat(7), rat(1)), RadialTerm::new(rat(2), ratio(1, 3))],
        )
        .unwrap();
        let mu = riesz_measure(&u);
        assert!(mu.tail.is_none());
        // Only the root carries charge: Δ(2 q^{-|x|}) at o is
        // 2(1/q - 1) = -4/3 < 0 … so this u is superharmonic at the root.
        assert_eq!(mu.atoms.len(), 1);
        assert_eq!(mu.atoms.get(&Vertex::root()), Some(&ratio(-4, 3)));
        assert!(!mu.is_nonnegative());
    }

    #[test]
    fn level_passage_sums_match_enumeration() {
        for q in [2u32, 3] {
            let p = t(q);
            let ix = BallIndex::new(&p, 4).unwrap();
            for m in 0..=4usize {
                // Pick the first vertex at depth m.
                let x = ix.vertex_at(ix.level_range(m).start);
                for n in 0..=4usize {
                    let direct: Rat = ix
                        .level_range(n)
                        .map(|i| ipow(q, -(graph_distance(&x, &ix.vertex_at(i)) as i64)))
                        .sum();
                    assert_eq!(direct, level_passage_sum(&p, m, n), "q={q} m={m} n={n}");
                }
            }
        }
    }

    #[test]
    fn green_potential_of_atoms() {
        let p = t(2);
        let y = v(&p, "0/1");
        let mut atoms = BTreeMap::new();
        atoms.insert(y.clone(), ratio(3, 7));
        atoms.insert(Vertex::root(), rat(2));
        let mu = VertexMeasure::from_atoms(atoms);
        let x = v(&p, "1");
        let want = green(&p, &x, &y) * ratio(3, 7) + green(&p, &x, &Vertex::root()) * rat(2);
        assert_eq!(green_potential(&p, &x, &mu).unwrap_finite(), want);
    }

    #[test]
    fn green_potential_radial_tail_matches_enumeration() {
        // Tail mass (1/3)^n per vertex from depth 2: compare the closed
        // form against direct summation over a deep ball (the remainder
        // beyond the enumeration is the exact geometric bound).
        let p = t(2);
        let term = RadialTerm::new(rat(1), ratio(1, 3));
        let mu = VertexMeasure { atoms: BTreeMap::new(), tail: Some(GeometricTail { from_depth: 2, terms: vec![term.clone()] }) };
        for xs in ["o", "0", "1/0", "0/1/0"] {
            let x = v(&p, xs);
            let closed = green_potential(&p, &x, &mu).unwrap_finite();
            // Direct sum over levels 2..=N plus closed remainder beyond N.
            let n_max = 9usize;
            let ix = BallIndex::new(&p, n_max).unwrap();
            let mut direct = Rat::zero();
            for n in 2..=n_max {
                for i in ix.level_range(n) {
                    direct += green(&p, &x, &ix.vertex_at(i)) * term.eval(n);
                }
            }
            let remainder: Rat = ((n_max + 1)..).take(1).map(|s| {
                ratio(2, 1) * level_passage_sum(&p, x.depth(), s) * term.coeff.clone()
                    * pow_i(&term.ratio, s as i64)
                    / (Rat::one() - term.ratio.clone())
            }).sum();
            assert_eq!(closed, direct + remainder, "x={xs}");
        }
    }

    #[test]
    fn green_potential_divergence_certified() {
        let p = t(2);
        let mu = VertexMeasure {
            atoms: BTreeMap::new(),
            tail: Some(GeometricTail { from_depth: 1, terms: vec![RadialTerm::new(rat(1), rat(1))] }),
        };
        assert_eq!(green_potential(&p, &Vertex::root(), &mu), PotentialValue::Divergent);
    }

    #[test]
    fn moment_identity_for_atomic_measures() {
        // G μ(o) = (q/(q-1)) Σ q^{-|y|} μ(y): the root potential sees each
        // atom through its first-passage weight.
        for q in [2u32, 5] {
            let p = t(q);
            let mut atoms = BTreeMap::new();
            for (s, m) in [("o", ratio(1, 2)), ("0/1", rat(3)), ("2/0/1", ratio(5, 4)), ("1", rat(1))] {
                atoms.insert(v(&p, s), m);
            }
            let mu = VertexMeasure::from_atoms(atoms.clone());
            let lhs = green_potential(&p, &Vertex::root(), &mu).unwrap_finite();
            let rhs: Rat = atoms
                .iter()
                .map(|(y, m)| ipow(q, -(y.depth() as i64)) * m)
                .sum::<Rat>()
                * ratio(q.into(), i64::from(q) - 1);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn decomposition_of_shifted_green_column() {
        // u = 5 - G(·, o) is subharmonic with unit charge at the root; its
        // harmonic part is the constant 5 and the defect is exactly zero.
        let p = t(2);
        let u = TreeFunction::radial(
            &p,
            5,
            vec![RadialTerm::new(rat(5), rat(1)), RadialTerm::new(rat(-2), ratio(1, 2))],
        )
        .unwrap();
        let d = riesz_decomposition(&u).unwrap();
        assert!(d.measure_complete);
        assert!(d.negative_sites.is_empty());
        assert_eq!(d.measure.atoms.get(&Vertex::root()), Some(&rat(1)));
        assert_eq!(d.measure.atoms.len(), 1);
        assert!(d.measure.tail.is_none());
        assert_eq!(d.harmonic_defect, rat(0));
        assert!(d.majorizes);
        for i in 0..d.harmonic_part.index().len() {
            assert_eq!(d.harmonic_part.values()[i], rat(5));
        }
    }

    #[test]
    fn decomposition_rejects_divergent_potentials() {
        // u = 2^|x| has geometric weight growth too fast for a finite
        // potential — certified divergent.
        let p = t(2);
        let u = TreeFunction::radial(&p, 4, vec![RadialTerm::new(rat(1), rat(2))]).unwrap();
        assert_eq!(riesz_decomposition(&u).unwrap_err(), PotentialError::DivergentPotential);
    }

    #[test]
    fn majorant_iteration_approaches_harmonic_part() {
        // For u = 5 - G(·, o), the iterates P^k u climb monotonically
        // towards the constant 5.
        let p = t(2);
        let u = TreeFunction::radial(
            &p,
            12,
            vec![RadialTerm::new(rat(5), rat(1)), RadialTerm::new(rat(-2), ratio(1, 2))],
        )
        .unwrap();
        match harmonic_majorant(&u, &ratio(1, 8), 40) {
            MajorantOutcome::Converged { h, iterations, last_increment } => {
                assert!(iterations > 1);
                assert!(last_increment <= ratio(1, 8));
                let gap = rat(5) - h.values()[0].clone();
                assert!(gap.is_positive() && gap < rat(1), "root gap {gap}");
            }
            MajorantOutcome::NotConverged { root_values } => {
                panic!("iteration did not settle: {root_values:?}")
            }
        }
        // Root trajectory is monotone increasing.
        let mut prev = u.values()[0].clone();
        let mut cur = u.clone();
        for _ in 0..10 {
            cur = cur.apply_p().unwrap();
            assert!(cur.values()[0] >= prev);
            prev = cur.values()[0].clone();
        }
        // An already harmonic function converges immediately with a zero
        // increment.
        let c = TreeFunction::constant(&p, 4, rat(9)).unwrap();
        match harmonic_majorant(&c, &rat(0), 3) {
            MajorantOutcome::Converged { iterations, last_increment, .. } => {
                assert_eq!(iterations, 1);
                assert_eq!(last_increment, rat(0));
            }
            _ => panic!("constant should be its own majorant"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = t(2);
        let u = TreeFunction::from_fn(&p, 2, Extension::Undefined, |x| {
            ratio(1, 1 + x.depth() as i64)
        })
        .unwrap();
        let text = u.to_csv();
        let back = TreeFunction::from_csv(&p, &text, Extension::Undefined).unwrap();
        assert_eq!(u, back);
        // A missing interior vertex is reported by address.
        let holed: String = text
            .lines()
            .filter(|l| !l.starts_with("0,"))
            .collect::<Vec<_>>()
            .join("\n");
        match TreeFunction::from_csv(&p, &holed, Extension::Undefined) {
            Err(PotentialError::MissingVertex(a)) => assert_eq!(a, "0"),
            other => panic!("expected missing-vertex error, got {other:?}"),
        }
    }

    #[test]
    fn measure_csv_round_trip() {
        let p = t(3);
        let mut atoms = BTreeMap::new();
        atoms.insert(v(&p, "1/0"), ratio(7, 3));
        atoms.insert(Vertex::root(), rat(1));
        let mu = VertexMeasure::from_atoms(atoms);
        let back = VertexMeasure::from_csv(&p, &mu.to_csv()).unwrap();
        assert_eq!(mu, back);
    }
}
