//! Geometry of the homogeneous tree and its boundary at infinity.
//!
//! The tree of branching number `q` is the infinite tree in which every
//! vertex has exactly `q + 1` neighbours. Vertices are addressed by words:
//! the root is the empty word, its `q + 1` children carry labels `0..=q`,
//! and every deeper vertex keeps its parent plus `q` children labelled
//! `0..q`. An end is a one-sided infinite word; we work with the eventually
//! periodic ones, stored in canonical `prefix:(cycle)` form so that equality
//! of ends is equality of representations.
//!
//! The boundary carries the ultrametric `q^(-|w ∧ z|)`, where `w ∧ z` is the
//! confluent — the last common vertex of the rays to `w` and `z` — and the
//! natural probability measure that gives each cylinder below a vertex at
//! depth `n ≥ 1` mass `1/((q+1) q^(n-1))`. Closed boundary sets of measure
//! zero enter as either finite sets of ends or as the Cantor-type sets cut
//! out by restricting which child labels may be used below a base vertex.

use crate::rational::{ipow, Rat};
use num::bigint::BigUint;
use num::{One, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Errors from tree construction, parsing and boundary-set validation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("branching number must satisfy 2 <= q <= 200, got {0}")]
    BadBranching(u32),
    #[error("label {label} is out of range at depth {depth} (allowed 0..{bound})")]
    BadLabel { label: u32, depth: usize, bound: u32 },
    #[error("cannot parse `{0}` as a vertex or end address")]
    BadAddress(String),
    #[error("the confluent of an end with itself is undefined")]
    EqualEnds,
    #[error("a boundary set needs at least one end")]
    EmptyBoundarySet,
    #[error("allowed-label rule must leave out at least one label, otherwise the set has positive measure")]
    FullRule,
    #[error("empty cycle in end address")]
    EmptyCycle,
}

/// The ambient tree: just its branching number, validated once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    q: u32,
}

impl TreeParams {
    /// A tree in which every vertex has `q + 1` neighbours. Requires
    /// `2 <= q <= 200` (labels are stored as bytes; `q = 1` is the line,
    /// which is recurrent and out of scope).
    pub fn new(q: u32) -> Result<Self, TreeError> {
        if !(2..=200).contains(&q) {
            return Err(TreeError::BadBranching(q));
        }
        Ok(TreeParams { q })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Number of child labels available at `depth`: `q + 1` directly below
    /// the root, `q` everywhere deeper.
    pub fn child_labels_at(&self, depth_of_child: usize) -> u32 {
        if depth_of_child == 1 {
            self.q + 1
        } else {
            self.q
        }
    }

    /// Number of vertices at exactly `depth`.
    pub fn level_size(&self, depth: usize) -> BigUint {
        match depth {
            0 => BigUint::one(),
            d => BigUint::from(self.q + 1) * BigUint::from(self.q).pow(d as u32 - 1),
        }
    }

    fn check_word(&self, word: &[u8]) -> Result<(), TreeError> {
        for (i, &l) in word.iter().enumerate() {
            let bound = self.child_labels_at(i + 1);
            if u32::from(l) >= bound {
                return Err(TreeError::BadLabel { label: l.into(), depth: i + 1, bound });
            }
        }
        Ok(())
    }
}

/// A vertex, addressed by its label word from the root.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vertex {
    word: Vec<u8>,
}

impl Vertex {
    pub fn root() -> Self {
        Vertex { word: Vec::new() }
    }

    pub fn from_labels(params: &TreeParams, labels: &[u8]) -> Result<Self, TreeError> {
        params.check_word(labels)?;
        Ok(Vertex { word: labels.to_vec() })
    }

    /// Parses the address syntax: `o` for the root, otherwise slash-joined
    /// labels such as `0/1/2`.
    pub fn parse(params: &TreeParams, s: &str) -> Result<Self, TreeError> {
        let s = s.trim();
        if s == "o" || s.is_empty() {
            return Ok(Vertex::root());
        }
        let labels = parse_label_word(s)?;
        Vertex::from_labels(params, &labels)
    }

    pub fn depth(&self) -> usize {
        self.word.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.word
    }

    pub fn is_root(&self) -> bool {
        self.word.is_empty()
    }

    pub fn parent(&self) -> Option<Vertex> {
        if self.word.is_empty() {
            None
        } else {
            Some(Vertex { word: self.word[..self.word.len() - 1].to_vec() })
        }
    }

    pub fn child(&self, label: u8) -> Vertex {
        let mut word = self.word.clone();
        word.push(label);
        Vertex { word }
    }

    /// The ancestor at `depth` (requires `depth <= self.depth()`).
    pub fn ancestor(&self, depth: usize) -> Vertex {
        Vertex { word: self.word[..depth].to_vec() }
    }

    pub fn is_prefix_of(&self, other: &Vertex) -> bool {
        other.word.len() >= self.word.len() && other.word[..self.word.len()] == self.word[..]
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            return write!(f, "o");
        }
        let parts: Vec<String> = self.word.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join("/"))
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vertex({self})")
    }
}

fn parse_label_word(s: &str) -> Result<Vec<u8>, TreeError> {
    s.split('/')
        .map(|part| {
            part.trim()
                .parse::<u8>()
                .map_err(|_| TreeError::BadAddress(s.to_string()))
        })
        .collect()
}

/// An eventually periodic end, in canonical form: the cycle is primitive
/// (not a repetition of a shorter word) and the prefix is as short as
/// possible. Two ends are equal iff their canonical forms coincide.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct End {
    prefix: Vec<u8>,
    cycle: Vec<u8>,
}

impl End {
    pub fn new(params: &TreeParams, prefix: &[u8], cycle: &[u8]) -> Result<Self, TreeError> {
        if cycle.is_empty() {
            return Err(TreeError::EmptyCycle);
        }
        // The cycle repeats at arbitrarily deep positions, so every cycle
        // label must be a valid deep label; the leading prefix label may use
        // the wider root alphabet.
        for &l in cycle {
            if u32::from(l) >= params.q {
                return Err(TreeError::BadLabel { label: l.into(), depth: 2, bound: params.q });
            }
        }
        params.check_word(prefix)?;
        let mut e = End { prefix: prefix.to_vec(), cycle: cycle.to_vec() };
        e.canonicalize();
        Ok(e)
    }

    /// Parses `prefix:(cycle)` syntax: `0/1:(2)` is the word `0 1 2 2 2 …`;
    /// a pure cycle may be written `(2)` or `:(2)`.
    pub fn parse(params: &TreeParams, s: &str) -> Result<Self, TreeError> {
        let s = s.trim();
        let (prefix_str, rest) = match s.split_once(':') {
            Some((p, r)) => (p.trim(), r.trim()),
            None => ("", s),
        };
        let cycle_str = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| TreeError::BadAddress(s.to_string()))?;
        let prefix = if prefix_str.is_empty() { Vec::new() } else { parse_label_word(prefix_str)? };
        let cycle = parse_label_word(cycle_str)?;
        End::new(params, &prefix, &cycle)
    }

    fn canonicalize(&mut self) {
        // Primitive cycle: the shortest period of the cycle word.
        let n = self.cycle.len();
        for d in 1..n {
            if n % d == 0 && (d..n).all(|i| self.cycle[i] == self.cycle[i % d]) {
                self.cycle.truncate(d);
                break;
            }
        }
        // Minimal prefix: absorb trailing prefix labels into the cycle.
        while let Some(&last) = self.prefix.last() {
            if last == *self.cycle.last().unwrap() {
                self.prefix.pop();
                self.cycle.rotate_right(1);
            } else {
                break;
            }
        }
    }

    /// Label at position `i` (0-based) of the infinite word.
    pub fn label_at(&self, i: usize) -> u8 {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.cycle[(i - self.prefix.len()) % self.cycle.len()]
        }
    }

    /// The vertex consisting of the first `n` labels of the ray.
    pub fn unfold(&self, n: usize) -> Vertex {
        Vertex { word: (0..n).map(|i| self.label_at(i)).collect() }
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn cycle_len(&self) -> usize {
        self.cycle.len()
    }

    /// Depth of the confluent with a vertex: the length of the longest
    /// common prefix (capped by the vertex depth).
    fn agreement_with_word(&self, word: &[u8]) -> usize {
        word.iter()
            .enumerate()
            .take_while(|&(i, &l)| self.label_at(i) == l)
            .count()
    }

    /// Depth of the confluent with another end, or `None` if the ends are
    /// equal. Eventually periodic words that agree beyond both prefixes for
    /// a full least-common-multiple window of the cycles agree forever.
    fn agreement_with_end(&self, other: &End) -> Option<usize> {
        if self == other {
            return None;
        }
        let start = self.prefix.len().max(other.prefix.len());
        let bound = start + lcm(self.cycle.len(), other.cycle.len()) + 1;
        (0..bound).find(|&i| self.label_at(i) != other.label_at(i))
    }
}

impl fmt::Display for End {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cyc: Vec<String> = self.cycle.iter().map(|l| l.to_string()).collect();
        if self.prefix.is_empty() {
            write!(f, "({})", cyc.join("/"))
        } else {
            let pre: Vec<String> = self.prefix.iter().map(|l| l.to_string()).collect();
            write!(f, "{}:({})", pre.join("/"), cyc.join("/"))
        }
    }
}

impl fmt::Debug for End {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "End({self})")
    }
}

fn lcm(a: usize, b: usize) -> usize {
    let gcd = |mut a: usize, mut b: usize| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    a / gcd(a, b) * b
}

/// Either a vertex or an end — the two kinds of points the boundary
/// calculus mixes freely.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Site {
    Vertex(Vertex),
    End(End),
}

impl From<Vertex> for Site {
    fn from(v: Vertex) -> Self {
        Site::Vertex(v)
    }
}

impl From<End> for Site {
    fn from(e: End) -> Self {
        Site::End(e)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Vertex(v) => v.fmt(f),
            Site::End(e) => e.fmt(f),
        }
    }
}

/// The confluent `a ∧ b`: the last vertex shared by the geodesics from the
/// root to `a` and to `b`. For two equal vertices this is the vertex itself;
/// for two equal ends it does not exist.
pub fn confluent(a: &Site, b: &Site) -> Result<Vertex, TreeError> {
    let depth = match (a, b) {
        (Site::Vertex(x), Site::Vertex(y)) => common_prefix_len(x.labels(), y.labels()),
        (Site::Vertex(x), Site::End(e)) | (Site::End(e), Site::Vertex(x)) => {
            e.agreement_with_word(x.labels())
        }
        (Site::End(e), Site::End(f)) => e.agreement_with_end(f).ok_or(TreeError::EqualEnds)?,
    };
    Ok(match (a, b) {
        (Site::Vertex(x), _) => x.ancestor(depth.min(x.depth())),
        (_, Site::Vertex(y)) => y.ancestor(depth.min(y.depth())),
        (Site::End(e), _) => e.unfold(depth),
    })
}

fn common_prefix_len(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Graph distance between two vertices: `|x| + |y| - 2 |x ∧ y|`.
pub fn graph_distance(x: &Vertex, y: &Vertex) -> u64 {
    let c = common_prefix_len(x.labels(), y.labels());
    (x.depth() + y.depth() - 2 * c) as u64
}

/// The boundary ultrametric `q^(-|a ∧ b|)`, extended to vertices; equal
/// sites are at distance zero.
pub fn ultra_metric(params: &TreeParams, a: &Site, b: &Site) -> Rat {
    if a == b {
        return Rat::zero();
    }
    match confluent(a, b) {
        Ok(c) => ipow(params.q(), -(c.depth() as i64)),
        // Equal ends compare equal above, so this branch is unreachable,
        // but total behaviour is nicer than a panic.
        Err(_) => Rat::zero(),
    }
}

/// Distance from a vertex to the boundary at infinity: `q^(-|x|)`.
pub fn dist_to_boundary(params: &TreeParams, x: &Vertex) -> Rat {
    ipow(params.q(), -(x.depth() as i64))
}

/// Measure of the cylinder of ends passing through `y`: the whole boundary
/// for the root, `1/((q+1) q^(|y|-1))` below.
pub fn cylinder_measure(params: &TreeParams, y: &Vertex) -> Rat {
    if y.is_root() {
        Rat::one()
    } else {
        let q = params.q();
        (Rat::from_integer((q + 1).into()) * ipow(q, y.depth() as i64 - 1)).recip()
    }
}

/// The discrete volume weight `q^(-2|x|)` that mirrors, on the tree, the
/// area density of the hyperbolic disk.
pub fn lebesgue_weight(params: &TreeParams, x: &Vertex) -> Rat {
    ipow(params.q(), -2 * (x.depth() as i64))
}

/// A closed boundary set of measure zero: either finitely many ends, or the
/// Cantor-type set of all rays that follow a fixed base vertex and then use
/// only an allowed subset of the child labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundarySetT {
    FiniteEnds(Vec<End>),
    CantorRule { base: Vertex, allowed: Vec<u8> },
}

impl BoundarySetT {
    pub fn finite(ends: Vec<End>) -> Result<Self, TreeError> {
        if ends.is_empty() {
            return Err(TreeError::EmptyBoundarySet);
        }
        let mut dedup: Vec<End> = Vec::new();
        for e in ends {
            if !dedup.contains(&e) {
                dedup.push(e);
            }
        }
        Ok(BoundarySetT::FiniteEnds(dedup))
    }

    /// The rule set below `base`: rays that pass through `base` and use only
    /// labels from `allowed` afterwards. `allowed` must be a proper subset
    /// of the deep alphabet `0..q` — a full alphabet would give the set
    /// positive measure.
    pub fn cantor(params: &TreeParams, base: Vertex, allowed: &[u8]) -> Result<Self, TreeError> {
        let mut allowed: Vec<u8> = allowed.to_vec();
        allowed.sort_unstable();
        allowed.dedup();
        if allowed.is_empty() {
            return Err(TreeError::EmptyBoundarySet);
        }
        for &l in &allowed {
            if u32::from(l) >= params.q() {
                return Err(TreeError::BadLabel { label: l.into(), depth: base.depth() + 1, bound: params.q() });
            }
        }
        if allowed.len() as u32 >= params.q() {
            return Err(TreeError::FullRule);
        }
        Ok(BoundarySetT::CantorRule { base, allowed })
    }

    /// Labels permitted at position `pos` (1-based depth) of a ray in the
    /// set: forced along the base vertex, the allowed subset below it.
    /// `None` means the rule does not constrain a set member at this
    /// position (never happens — kept total for the iterator helpers).
    fn rule_labels(&self, pos: usize) -> RuleLabels<'_> {
        match self {
            BoundarySetT::FiniteEnds(_) => unreachable!("rule_labels is only for CantorRule"),
            BoundarySetT::CantorRule { base, allowed } => {
                if pos <= base.depth() {
                    RuleLabels::Forced(base.labels()[pos - 1])
                } else {
                    RuleLabels::Set(allowed)
                }
            }
        }
    }

    /// Number of level-`depth` vertices whose cylinder meets the set.
    pub fn active_count(&self, depth: usize) -> BigUint {
        match self {
            BoundarySetT::FiniteEnds(ends) => {
                let mut prefixes: Vec<Vec<u8>> = ends
                    .iter()
                    .map(|e| e.unfold(depth).labels().to_vec())
                    .collect();
                prefixes.sort_unstable();
                prefixes.dedup();
                BigUint::from(prefixes.len())
            }
            BoundarySetT::CantorRule { .. } => {
                let mut n = BigUint::one();
                for pos in 1..=depth {
                    match self.rule_labels(pos) {
                        RuleLabels::Forced(_) => {}
                        RuleLabels::Set(s) => n *= BigUint::from(s.len()),
                    }
                }
                n
            }
        }
    }

    /// The level-`depth` vertices whose cylinder meets the set. For the rule
    /// sets this enumerates, so it is meant for moderate depths; the measure
    /// and counting queries stay closed-form.
    pub fn active_vertices(&self, depth: usize) -> Vec<Vertex> {
        match self {
            BoundarySetT::FiniteEnds(ends) => {
                let mut v: Vec<Vertex> = ends.iter().map(|e| e.unfold(depth)).collect();
                v.sort();
                v.dedup();
                v
            }
            BoundarySetT::CantorRule { .. } => {
                let mut words: Vec<Vec<u8>> = vec![Vec::new()];
                for pos in 1..=depth {
                    let mut next = Vec::new();
                    for w in &words {
                        match self.rule_labels(pos) {
                            RuleLabels::Forced(l) => {
                                let mut w2 = w.clone();
                                w2.push(l);
                                next.push(w2);
                            }
                            RuleLabels::Set(s) => {
                                for &l in s {
                                    let mut w2 = w.clone();
                                    w2.push(l);
                                    next.push(w2);
                                }
                            }
                        }
                    }
                    words = next;
                }
                words.into_iter().map(|word| Vertex { word }).collect()
            }
        }
    }

    /// Measure of the closed `q^(-depth)`-neighbourhood of the set: the
    /// total mass of the active cylinders at `depth`.
    pub fn neighbourhood_measure(&self, params: &TreeParams, depth: usize) -> Rat {
        let count = Rat::from_integer(self.active_count(depth).into());
        count * cylinder_measure_at(params, depth)
    }

    /// Depth of the deepest set-consistent prefix of the given word: the
    /// largest `d` such that some ray of the set shares the first `d`
    /// labels. Distance from the word's site to the set is `q^(-d)`.
    pub fn agreement_with_word(&self, word: &[u8]) -> usize {
        match self {
            BoundarySetT::FiniteEnds(ends) => ends
                .iter()
                .map(|e| e.agreement_with_word(word))
                .max()
                .unwrap_or(0),
            BoundarySetT::CantorRule { .. } => {
                let mut d = 0;
                for (i, &l) in word.iter().enumerate() {
                    let ok = match self.rule_labels(i + 1) {
                        RuleLabels::Forced(f) => f == l,
                        RuleLabels::Set(s) => s.contains(&l),
                    };
                    if ok {
                        d += 1;
                    } else {
                        break;
                    }
                }
                d
            }
        }
    }

    /// Whether an end belongs to the set.
    pub fn contains_end(&self, end: &End) -> bool {
        match self {
            BoundarySetT::FiniteEnds(ends) => ends.contains(end),
            BoundarySetT::CantorRule { base, .. } => {
                // An eventually periodic end lies in the rule set iff every
                // position through one full cycle window past both prefixes
                // is rule-consistent.
                let window = base.depth().max(end.prefix_len()) + end.cycle_len();
                (0..window).all(|i| match self.rule_labels(i + 1) {
                    RuleLabels::Forced(f) => f == end.label_at(i),
                    RuleLabels::Set(s) => s.contains(&end.label_at(i)),
                })
            }
        }
    }

    /// Depth beyond which the active-vertex counts grow exactly
    /// geometrically (factor 1 for finite sets, `|allowed|` for rule sets).
    pub fn stable_depth(&self) -> usize {
        match self {
            BoundarySetT::FiniteEnds(ends) => {
                let mut d = 1;
                for (i, a) in ends.iter().enumerate() {
                    // Past every prefix and pairwise splitting point, each
                    // end contributes exactly one active vertex per level.
                    d = d.max(a.prefix_len() + a.cycle_len());
                    for b in ends.iter().skip(i + 1) {
                        if let Some(c) = a.agreement_with_end(b) {
                            d = d.max(c + 1);
                        }
                    }
                }
                d
            }
            BoundarySetT::CantorRule { base, .. } => base.depth() + 1,
        }
    }

    /// Per-level growth factor of the active counts past `stable_depth`.
    pub fn growth_factor(&self) -> u32 {
        match self {
            BoundarySetT::FiniteEnds(_) => 1,
            BoundarySetT::CantorRule { allowed, .. } => allowed.len() as u32,
        }
    }
}

enum RuleLabels<'a> {
    Forced(u8),
    Set(&'a [u8]),
}

/// Measure of any single cylinder at `depth`.
pub fn cylinder_measure_at(params: &TreeParams, depth: usize) -> Rat {
    if depth == 0 {
        Rat::one()
    } else {
        let q = params.q();
        (Rat::from_integer((q + 1).into()) * ipow(q, depth as i64 - 1)).recip()
    }
}

/// Distance from a site to a boundary set: `q^(-d)` for the deepest
/// set-consistent confluent depth `d`, and `0` for an end in the set.
pub fn dist_to_set(params: &TreeParams, s: &Site, e: &BoundarySetT) -> Rat {
    match s {
        Site::Vertex(x) => ipow(params.q(), -(e.agreement_with_word(x.labels()) as i64)),
        Site::End(end) => {
            if e.contains_end(end) {
                return Rat::zero();
            }
            let d = match e {
                BoundarySetT::FiniteEnds(ends) => ends
                    .iter()
                    .filter_map(|f| end.agreement_with_end(f))
                    .max()
                    .unwrap_or(0),
                BoundarySetT::CantorRule { base, .. } => {
                    // Not in the set, so the first rule violation occurs at a
                    // finite position; scan past the periodic window.
                    let window = base.depth().max(end.prefix_len()) + end.cycle_len() + 1;
                    let word: Vec<u8> = (0..window).map(|i| end.label_at(i)).collect();
                    e.agreement_with_word(&word)
                }
            };
            ipow(params.q(), -(d as i64))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    fn t(q: u32) -> TreeParams {
        TreeParams::new(q).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(TreeParams::new(1).is_err());
        assert!(TreeParams::new(2).is_ok());
        assert_eq!(t(2).child_labels_at(1), 3);
        assert_eq!(t(2).child_labels_at(2), 2);
        assert_eq!(t(2).level_size(3), BigUint::from(12u32));
    }

    #[test]
    fn vertex_addresses() {
        let p = t(2);
        let v = Vertex::parse(&p, "2/1/0").unwrap();
        assert_eq!(v.depth(), 3);
        assert_eq!(v.to_string(), "2/1/0");
        assert_eq!(Vertex::parse(&p, "o").unwrap(), Vertex::root());
        // First label may be q = 2, deeper labels must stay below q.
        assert!(Vertex::parse(&p, "2/2").is_err());
        assert!(Vertex::parse(&p, "3").is_err());
        assert_eq!(v.parent().unwrap().to_string(), "2/1");
        assert!(v.parent().unwrap().is_prefix_of(&v));
    }

    #[test]
    fn end_canonical_form() {
        let p = t(2);
        // 0 0 0 … : the prefix is absorbed into the cycle.
        let e = End::parse(&p, "0:(0)").unwrap();
        assert_eq!(e.to_string(), "(0)");
        // A non-primitive cycle is reduced, and a prefix that merely delays
        // the cycle is absorbed: 1 0101… is the periodic word (10)^∞.
        let e2 = End::new(&p, &[1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(e2.to_string(), "(1/0)");
        // Absorption rotates the cycle so the word is unchanged.
        let e3 = End::new(&p, &[0, 1], &[1]).unwrap();
        assert_eq!(e3.to_string(), "0:(1)");
        assert_eq!(e3.unfold(4).to_string(), "0/1/1/1");
        // Equality is representation-independent.
        assert_eq!(End::parse(&p, "0/1:(0/1)").unwrap(), End::parse(&p, "(0/1)").unwrap());
        // Cycle labels live in the deep alphabet.
        assert!(End::new(&p, &[], &[2]).is_err());
        assert!(End::new(&p, &[2], &[0]).is_ok());
    }

    #[test]
    fn confluents_and_distances() {
        let p = t(2);
        let x = Vertex::parse(&p, "0/1").unwrap();
        let y = Vertex::parse(&p, "0/0/1").unwrap();
        let c = confluent(&x.clone().into(), &y.clone().into()).unwrap();
        assert_eq!(c.to_string(), "0");
        assert_eq!(graph_distance(&x, &y), 3);
        // A vertex with itself: the vertex.
        let cc = confluent(&x.clone().into(), &x.clone().into()).unwrap();
        assert_eq!(cc, x);
        assert_eq!(graph_distance(&x, &x), 0);

        let xi = End::parse(&p, "0:(1)").unwrap();
        let c2 = confluent(&x.clone().into(), &xi.clone().into()).unwrap();
        assert_eq!(c2, x); // ray 0 1 1 1 … passes through 0/1
        let eta = End::parse(&p, "(0)").unwrap();
        let c3 = confluent(&xi.clone().into(), &eta.clone().into()).unwrap();
        assert_eq!(c3.to_string(), "0");
        assert!(matches!(
            confluent(&xi.clone().into(), &xi.clone().into()),
            Err(TreeError::EqualEnds)
        ));

        assert_eq!(ultra_metric(&p, &xi.clone().into(), &eta.into()), ratio(1, 2));
        assert_eq!(ultra_metric(&p, &xi.clone().into(), &xi.into()), rat(0));
        assert_eq!(dist_to_boundary(&p, &y), ratio(1, 8));
        assert_eq!(dist_to_boundary(&p, &Vertex::root()), rat(1));
    }

    #[test]
    fn equal_ends_detected_across_representations() {
        let p = t(3);
        let a = End::new(&p, &[2, 0, 1], &[0, 1]).unwrap();
        let b = End::new(&p, &[2], &[0, 1]).unwrap();
        assert_eq!(a, b);
        assert!(confluent(&a.into(), &b.into()).is_err());
    }

    #[test]
    fn cylinder_measures() {
        let p = t(2);
        assert_eq!(cylinder_measure(&p, &Vertex::root()), rat(1));
        let y1 = Vertex::parse(&p, "1").unwrap();
        assert_eq!(cylinder_measure(&p, &y1), ratio(1, 3));
        let y3 = Vertex::parse(&p, "1/0/1").unwrap();
        assert_eq!(cylinder_measure(&p, &y3), ratio(1, 12));
        // Children partition a cylinder's mass exactly.
        let sum: Rat = (0..2).map(|l| cylinder_measure(&p, &y3.child(l))).sum();
        assert_eq!(sum, cylinder_measure(&p, &y3));
        let root_sum: Rat = (0..3).map(|l| cylinder_measure(&p, &Vertex::root().child(l))).sum();
        assert_eq!(root_sum, rat(1));
    }

    #[test]
    fn lebesgue_weights() {
        let p = t(3);
        let x = Vertex::parse(&p, "1/0").unwrap();
        assert_eq!(lebesgue_weight(&p, &x), ratio(1, 81));
    }

    #[test]
    fn finite_boundary_sets() {
        let p = t(2);
        let e1 = End::parse(&p, "(0)").unwrap();
        let e2 = End::parse(&p, "1:(0)").unwrap();
        let set = BoundarySetT::finite(vec![e1.clone(), e2.clone(), e1.clone()]).unwrap();
        // Deduplicated.
        if let BoundarySetT::FiniteEnds(v) = &set {
            assert_eq!(v.len(), 2);
        }
        assert_eq!(set.active_count(0), BigUint::one());
        assert_eq!(set.active_count(1), BigUint::from(2u32));
        assert_eq!(set.active_vertices(2).len(), 2);
        // Distance from the vertex 1/1: nearest ray is 1 0 0 …, confluent 1.
        let x = Vertex::parse(&p, "1/1").unwrap();
        assert_eq!(dist_to_set(&p, &x.into(), &set), ratio(1, 2));
        // Distance from a member end is zero; from (1) the confluent with
        // 1:(0) has depth 1.
        assert_eq!(dist_to_set(&p, &e1.into(), &set), rat(0));
        let far = End::parse(&p, "(1)").unwrap();
        assert_eq!(dist_to_set(&p, &far.into(), &set), ratio(1, 2));
        assert!(BoundarySetT::finite(vec![]).is_err());
    }

    #[test]
    fn cantor_rule_sets() {
        let p = t(3);
        let set = BoundarySetT::cantor(&p, Vertex::root(), &[0, 1]).unwrap();
        assert_eq!(set.active_count(2), BigUint::from(4u32));
        assert_eq!(set.active_vertices(2).len(), 4);
        // Neighbourhood measure at depth 2: 4 cylinders of mass 1/12.
        assert_eq!(set.neighbourhood_measure(&p, 2), ratio(1, 3));
        // The full alphabet is rejected — that set has positive measure.
        assert!(BoundarySetT::cantor(&p, Vertex::root(), &[0, 1, 2]).is_err());
        // Distance: 2/0/1 breaks the rule at its first label.
        let x = Vertex::parse(&p, "2/0/1").unwrap();
        assert_eq!(dist_to_set(&p, &x.into(), &set), rat(1));
        let y = Vertex::parse(&p, "0/1/2").unwrap();
        assert_eq!(dist_to_set(&p, &y.into(), &set), ratio(1, 9));
        // Membership of eventually periodic ends.
        let inside = End::parse(&p, "(0/1)").unwrap();
        assert!(set.contains_end(&inside));
        let outside = End::parse(&p, "0/1:(2)").unwrap();
        assert!(!set.contains_end(&outside));
        assert_eq!(dist_to_set(&p, &outside.into(), &set), ratio(1, 9));
    }

    #[test]
    fn cantor_rule_below_base() {
        let p = t(3);
        let base = Vertex::parse(&p, "3/1").unwrap();
        let set = BoundarySetT::cantor(&p, base, &[2]).unwrap();
        // One active vertex per level: forced along the base, single label below.
        assert_eq!(set.active_count(1), BigUint::one());
        assert_eq!(set.active_count(5), BigUint::one());
        assert_eq!(set.growth_factor(), 1);
        let member = End::parse(&p, "3/1:(2)").unwrap();
        assert!(set.contains_end(&member));
        assert_eq!(set.agreement_with_word(&[3, 1, 2, 2, 0]), 4);
    }

    #[test]
    fn stable_depths() {
        let p = t(2);
        let e1 = End::parse(&p, "0/1/0:(1)").unwrap();
        let e2 = End::parse(&p, "0/1:(1)").unwrap();
        let set = BoundarySetT::finite(vec![e1, e2]).unwrap();
        let d = set.stable_depth();
        // Beyond the stable depth each end owns its own active vertex and
        // counts stop changing.
        assert_eq!(set.active_count(d), set.active_count(d + 3));
        assert_eq!(set.active_count(d), BigUint::from(2u32));
    }
}
