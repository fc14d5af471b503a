//! Nearest-neighbour random walks from edge conductances on a locally
//! finite tree: exact hitting probabilities by inward elimination, the
//! weighted Green kernel `G(x,y) = F(x,y)·G(y,y)`, and the hitting-based
//! boundary metric `ρ(w,z) = F(w∧z, o)`.
//!
//! Infinite trees are represented as a finite explicit core plus a
//! homogeneous exterior: each core leaf continues as a unit-conductance
//! tree with a fixed forward branching number. That keeps every hitting
//! probability rational while still covering arbitrary local structure
//! near the root.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{pow_i, rat, ratio, Rat};

#[derive(Debug, Error)]
pub enum WeightedError {
    #[error("conductance data is invalid: {0}")]
    BadData(String),
    #[error("address {0} does not name a site of the represented tree")]
    UnknownAddress(String),
    #[error("the walk is not strongly transient: {0}")]
    NotTransient(String),
}

struct Node {
    parent: Option<usize>,
    label: u8,
    /// Conductance of the edge towards the parent (zero and unused at the root).
    up_a: Rat,
    children: Vec<usize>,
    /// Forward branching of the unit-conductance continuation at a leaf.
    ext_q: Option<u32>,
    depth: usize,
}

/// A finite tree with symmetric positive edge conductances and a
/// homogeneous unit-conductance continuation below every leaf. Transition
/// probabilities are `p(x,y) = a(x,y)/m(x)` with `m(x) = Σ_y a(x,y)`.
pub struct ConductanceTree {
    nodes: Vec<Node>,
}

/// Realized structure constants over the explicit core: total conductance
/// bounds and the smallest single edge conductance. The exterior
/// continuation satisfies the same kind of bounds automatically.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub core_vertices: usize,
    pub m_min: Rat,
    pub m_max: Rat,
    pub a_min: Rat,
}

fn parse_address(s: &str) -> Result<Vec<u8>, WeightedError> {
    let s = s.trim();
    if s == "o" || s.is_empty() {
        return Ok(Vec::new());
    }
    s.split('/')
        .map(|part| {
            part.trim()
                .parse::<u8>()
                .map_err(|_| WeightedError::BadData(format!("bad address component {part:?} in {s:?}")))
        })
        .collect()
}

fn format_address(labels: &[u8]) -> String {
    if labels.is_empty() {
        return "o".into();
    }
    labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("/")
}

impl ConductanceTree {
    /// Builds a tree from CSV rows `parent_address,child_label,num,den`
    /// (one edge each, conductance `num/den > 0`; addresses are `o` or
    /// `/`-joined labels). Rows of the form `ext,address,q` override the
    /// exterior branching of one leaf; everything else defaults to
    /// `default_ext_q`. Lines starting with `#` and a leading header line
    /// are skipped.
    pub fn from_csv(text: &str, default_ext_q: u32) -> Result<Self, WeightedError> {
        if default_ext_q == 0 {
            return Err(WeightedError::BadData("exterior branching must be at least 1".into()));
        }
        let mut edges: Vec<(Vec<u8>, u8, Rat)> = Vec::new();
        let mut overrides: Vec<(Vec<u8>, u32)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields[0] == "parent_address" {
                continue;
            }
            if fields[0] == "ext" {
                if fields.len() != 3 {
                    return Err(WeightedError::BadData(format!(
                        "line {}: exterior rows need 3 fields: ext,address,q",
                        lineno + 1
                    )));
                }
                let addr = parse_address(fields[1])?;
                let q: u32 = fields[2].parse().map_err(|_| {
                    WeightedError::BadData(format!("line {}: bad branching {:?}", lineno + 1, fields[2]))
                })?;
                if q == 0 {
                    return Err(WeightedError::BadData(format!(
                        "line {}: exterior branching must be at least 1",
                        lineno + 1
                    )));
                }
                overrides.push((addr, q));
                continue;
            }
            if fields.len() != 4 {
                return Err(WeightedError::BadData(format!(
                    "line {}: edge rows need 4 fields: parent_address,child_label,num,den",
                    lineno + 1
                )));
            }
            let parent = parse_address(fields[0])?;
            let label: u8 = fields[1].parse().map_err(|_| {
                WeightedError::BadData(format!("line {}: bad child label {:?}", lineno + 1, fields[1]))
            })?;
            let num: i64 = fields[2].parse().map_err(|_| {
                WeightedError::BadData(format!("line {}: bad numerator {:?}", lineno + 1, fields[2]))
            })?;
            let den: i64 = fields[3].parse().map_err(|_| {
                WeightedError::BadData(format!("line {}: bad denominator {:?}", lineno + 1, fields[3]))
            })?;
            if den <= 0 || num <= 0 {
                return Err(WeightedError::BadData(format!(
                    "line {}: conductances must be positive",
                    lineno + 1
                )));
            }
            edges.push((parent, label, ratio(num, den)));
        }
        Self::from_edges(edges, overrides, default_ext_q)
    }

    fn from_edges(
        mut edges: Vec<(Vec<u8>, u8, Rat)>,
        overrides: Vec<(Vec<u8>, u32)>,
        default_ext_q: u32,
    ) -> Result<Self, WeightedError> {
        // Parents are shorter addresses than their children, so sorting by
        // parent depth places every parent before any edge that needs it.
        edges.sort_by(|a, b| (a.0.len(), &a.0, a.1).cmp(&(b.0.len(), &b.0, b.1)));
        let mut ids: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        let mut nodes = vec![Node {
            parent: None,
            label: 0,
            up_a: Rat::zero(),
            children: Vec::new(),
            ext_q: None,
            depth: 0,
        }];
        ids.insert(Vec::new(), 0);
        for (parent, label, a) in edges {
            let pid = *ids.get(&parent).ok_or_else(|| {
                WeightedError::BadData(format!(
                    "edge below {} is not connected to the root",
                    format_address(&parent)
                ))
            })?;
            let mut addr = parent.clone();
            addr.push(label);
            if ids.contains_key(&addr) {
                return Err(WeightedError::BadData(format!(
                    "duplicate edge to {}",
                    format_address(&addr)
                )));
            }
            let id = nodes.len();
            let depth = nodes[pid].depth + 1;
            nodes.push(Node { parent: Some(pid), label, up_a: a, children: Vec::new(), ext_q: None, depth });
            nodes[pid].children.push(id);
            ids.insert(addr, id);
        }
        // sort children by label (two passes to appease the borrow checker)
        let labels: Vec<u8> = nodes.iter().map(|n| n.label).collect();
        for node in &mut nodes {
            node.children.sort_by_key(|&c| labels[c]);
        }
        let mut tree = ConductanceTree { nodes };
        for id in 0..tree.nodes.len() {
            if tree.nodes[id].children.is_empty() {
                tree.nodes[id].ext_q = Some(default_ext_q);
            }
        }
        for (addr, q) in overrides {
            let id = tree
                .resolve_core(&addr)
                .ok_or_else(|| WeightedError::UnknownAddress(format_address(&addr)))?;
            if !tree.nodes[id].children.is_empty() {
                return Err(WeightedError::BadData(format!(
                    "exterior override on {} which is not a leaf",
                    format_address(&addr)
                )));
            }
            tree.nodes[id].ext_q = Some(q);
        }
        Ok(tree)
    }

    pub fn core_len(&self) -> usize {
        self.nodes.len()
    }

    /// Core node id of a label path, if the path stays inside the core.
    pub fn resolve(&self, labels: &[u8]) -> Option<usize> {
        self.resolve_core(labels)
    }

    pub fn parent_of(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    /// Children sorted by label.
    pub fn children_of(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    pub fn label_of(&self, id: usize) -> u8 {
        self.nodes[id].label
    }

    /// Conductance of the edge towards the parent; zero at the root.
    pub fn up_conductance(&self, id: usize) -> &Rat {
        &self.nodes[id].up_a
    }

    /// Forward branching of the unit-conductance continuation below a
    /// leaf; `None` on interior nodes.
    pub fn exterior_branching(&self, id: usize) -> Option<u32> {
        self.nodes[id].ext_q
    }

    /// Total conductance `m(x)` at a node, exterior edges included.
    pub fn total_conductance(&self, id: usize) -> Rat {
        self.m(id)
    }

    fn resolve_core(&self, labels: &[u8]) -> Option<usize> {
        let mut cur = 0usize;
        for &lab in labels {
            cur = *self.nodes[cur]
                .children
                .iter()
                .find(|&&c| self.nodes[c].label == lab)?;
        }
        Some(cur)
    }

    /// Total conductance at a node, exterior edges included.
    fn m(&self, id: usize) -> Rat {
        let node = &self.nodes[id];
        let mut m = node.up_a.clone();
        for &c in &node.children {
            m += &self.nodes[c].up_a;
        }
        if let Some(q) = node.ext_q {
            m += rat(q as i64);
        }
        m
    }

    /// Realized structure constants over the core (the exterior is unit).
    pub fn condition_report(&self) -> ConditionReport {
        let mut m_min: Option<Rat> = None;
        let mut m_max: Option<Rat> = None;
        let mut a_min: Option<Rat> = None;
        for id in 0..self.nodes.len() {
            let m = self.m(id);
            m_min = Some(match m_min {
                Some(v) if v <= m => v,
                _ => m.clone(),
            });
            m_max = Some(match m_max {
                Some(v) if v >= m => v,
                _ => m,
            });
            if id != 0 {
                let a = self.nodes[id].up_a.clone();
                a_min = Some(match a_min {
                    Some(v) if v <= a => v,
                    _ => a,
                });
            }
            if self.nodes[id].ext_q.is_some() {
                let one = Rat::one();
                a_min = Some(match a_min {
                    Some(v) if v <= one => v,
                    _ => one,
                });
            }
        }
        ConditionReport {
            core_vertices: self.nodes.len(),
            m_min: m_min.unwrap_or_else(Rat::zero),
            m_max: m_max.unwrap_or_else(Rat::zero),
            a_min: a_min.unwrap_or_else(Rat::zero),
        }
    }
}

/// Exact hitting probabilities for every directed edge of the core plus
/// the leaf/exterior interface, and the diagonal Green values.
#[derive(Debug)]
pub struct FTable {
    /// `up[x]` = probability of ever hitting the parent from `x` (unused at the root).
    up: Vec<Rat>,
    /// `down[x]` = probability of ever hitting `x` from its parent (unused at the root).
    down: Vec<Rat>,
    /// For a leaf, the probability of ever hitting it from one of its exterior children.
    ext_up: Vec<Option<Rat>>,
    /// For a leaf, the probability of ever hitting a fixed exterior child from it.
    ext_down: Vec<Option<Rat>>,
    /// `g_diag[x]` = expected visits to `x` starting at `x`.
    g_diag: Vec<Rat>,
    delta: Rat,
}

impl FTable {
    pub fn up(&self, x: usize) -> &Rat {
        &self.up[x]
    }

    pub fn down(&self, x: usize) -> &Rat {
        &self.down[x]
    }

    /// The largest directed-edge hitting probability: strong transience
    /// holds with margin `1 - delta`.
    pub fn delta(&self) -> &Rat {
        &self.delta
    }

    pub fn green_diag(&self, x: usize) -> &Rat {
        &self.g_diag[x]
    }

    /// Hitting probability of a leaf from one of its exterior children.
    pub fn ext_up(&self, x: usize) -> Option<&Rat> {
        self.ext_up[x].as_ref()
    }

    /// Hitting probability of a fixed exterior child from its leaf.
    pub fn ext_down(&self, x: usize) -> Option<&Rat> {
        self.ext_down[x].as_ref()
    }
}

/// Solves the one-step equations
/// `F(x,y) = p(x,y) + Σ_{w∼x, w≠y} p(x,w)·F(w,x)·F(x,y)`
/// exactly: upward values by elimination from the leaves inward (exterior
/// branches contribute the closed-form value `1/q`), then downward values
/// from the root outward. Every equation becomes linear once the deeper
/// values are known, so the minimal solution is reached without iteration.
pub fn solve_f(tree: &ConductanceTree) -> Result<FTable, WeightedError> {
    let n = tree.nodes.len();
    let mut up = vec![Rat::zero(); n];
    let mut down = vec![Rat::zero(); n];
    let mut ext_up = vec![None; n];
    let mut ext_down = vec![None; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| tree.nodes[i].depth);

    // Sum of a(x,w)·F(w,x) over the neighbours below x.
    let below_sum = |tree: &ConductanceTree, up: &[Rat], x: usize| -> Rat {
        let mut s = Rat::zero();
        for &c in &tree.nodes[x].children {
            s += &tree.nodes[c].up_a * &up[c];
        }
        if tree.nodes[x].ext_q.is_some() {
            // q exterior children at unit conductance, F = 1/q each
            s += Rat::one();
        }
        s
    };

    let mut delta = Rat::zero();
    let bump = |delta: &mut Rat, f: &Rat| {
        if f > delta {
            *delta = f.clone();
        }
    };

    // Upward pass, deepest first.
    for &x in order.iter().rev() {
        if let Some(q) = tree.nodes[x].ext_q {
            let f = ratio(1, q as i64);
            bump(&mut delta, &f);
            ext_up[x] = Some(f);
        }
        if tree.nodes[x].parent.is_none() {
            continue;
        }
        let m = tree.m(x);
        let denom = &m - below_sum(tree, &up, x);
        let a_up = tree.nodes[x].up_a.clone();
        if !denom.is_positive() || denom <= a_up {
            return Err(WeightedError::NotTransient(format!(
                "upward hitting probability at {} reaches 1",
                node_address(tree, x)
            )));
        }
        up[x] = a_up / denom;
        bump(&mut delta, &up[x]);
    }

    // Downward pass, root first.
    for &x in order.iter() {
        let m = tree.m(x);
        // Σ a(x,w)F(w,x) over ALL neighbours of x, needed both for the
        // per-child exclusions and for the diagonal Green value later.
        let mut all = below_sum(tree, &up, x);
        if tree.nodes[x].parent.is_some() {
            all += &tree.nodes[x].up_a * &down[x];
        }
        for ci in 0..tree.nodes[x].children.len() {
            let c = tree.nodes[x].children[ci];
            let excl = &all - &tree.nodes[c].up_a * &up[c];
            let denom = &m - excl;
            let a_c = tree.nodes[c].up_a.clone();
            if !denom.is_positive() || denom <= a_c {
                return Err(WeightedError::NotTransient(format!(
                    "downward hitting probability at {} reaches 1",
                    node_address(tree, c)
                )));
            }
            down[c] = a_c / denom;
            bump(&mut delta, &down[c]);
        }
        if let Some(q) = tree.nodes[x].ext_q {
            let excl = &all - ratio(1, q as i64);
            let denom = &m - excl;
            if !denom.is_positive() || denom <= Rat::one() {
                return Err(WeightedError::NotTransient(format!(
                    "exterior hitting probability below {} reaches 1",
                    node_address(tree, x)
                )));
            }
            let f = Rat::one() / denom;
            bump(&mut delta, &f);
            ext_down[x] = Some(f);
        }
    }

    // Diagonal Green values G(x,x) = m(x) / (m(x) − Σ a(x,w)F(w,x)).
    let mut g_diag = vec![Rat::zero(); n];
    for x in 0..n {
        let m = tree.m(x);
        let mut all = below_sum(tree, &up, x);
        if tree.nodes[x].parent.is_some() {
            all += &tree.nodes[x].up_a * &down[x];
        }
        let denom = &m - all;
        if !denom.is_positive() {
            return Err(WeightedError::NotTransient(format!(
                "expected visits at {} diverge",
                node_address(tree, x)
            )));
        }
        g_diag[x] = m / denom;
    }

    Ok(FTable { up, down, ext_up, ext_down, g_diag, delta })
}

fn node_address(tree: &ConductanceTree, mut id: usize) -> String {
    let mut labels = Vec::new();
    while let Some(p) = tree.nodes[id].parent {
        labels.push(tree.nodes[id].label);
        id = p;
    }
    labels.reverse();
    format_address(&labels)
}

/// Probability of ever hitting `y` from `x` (core addresses): the product
/// of directed-edge values along the geodesic through the confluent.
pub fn first_passage(
    tree: &ConductanceTree,
    f: &FTable,
    x: &[u8],
    y: &[u8],
) -> Result<Rat, WeightedError> {
    let xi = tree
        .resolve_core(x)
        .ok_or_else(|| WeightedError::UnknownAddress(format_address(x)))?;
    let yi = tree
        .resolve_core(y)
        .ok_or_else(|| WeightedError::UnknownAddress(format_address(y)))?;
    Ok(passage_by_id(tree, f, xi, yi))
}

fn passage_by_id(tree: &ConductanceTree, f: &FTable, mut x: usize, mut y: usize) -> Rat {
    let mut prod = Rat::one();
    let mut down_edges: Vec<usize> = Vec::new();
    while tree.nodes[x].depth > tree.nodes[y].depth {
        prod *= &f.up[x];
        x = tree.nodes[x].parent.unwrap();
    }
    while tree.nodes[y].depth > tree.nodes[x].depth {
        down_edges.push(y);
        y = tree.nodes[y].parent.unwrap();
    }
    while x != y {
        prod *= &f.up[x];
        x = tree.nodes[x].parent.unwrap();
        down_edges.push(y);
        y = tree.nodes[y].parent.unwrap();
    }
    for e in down_edges {
        prod *= &f.down[e];
    }
    prod
}

/// The weighted Green kernel `G(x,y) = F(x,y)·G(y,y)` for core addresses.
pub fn green_weighted(
    tree: &ConductanceTree,
    f: &FTable,
    x: &[u8],
    y: &[u8],
) -> Result<Rat, WeightedError> {
    let xi = tree
        .resolve_core(x)
        .ok_or_else(|| WeightedError::UnknownAddress(format_address(x)))?;
    let yi = tree
        .resolve_core(y)
        .ok_or_else(|| WeightedError::UnknownAddress(format_address(y)))?;
    Ok(passage_by_id(tree, f, xi, yi) * &f.g_diag[yi])
}

/// A site of the weighted tree: a vertex given by its label path from the
/// root (possibly descending into the exterior), or an eventually periodic
/// end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightedSite {
    Vertex(Vec<u8>),
    End { prefix: Vec<u8>, cycle: Vec<u8> },
}

impl WeightedSite {
    fn label_at(&self, i: usize) -> Option<u8> {
        match self {
            WeightedSite::Vertex(labels) => labels.get(i).copied(),
            WeightedSite::End { prefix, cycle } => {
                if i < prefix.len() {
                    Some(prefix[i])
                } else {
                    Some(cycle[(i - prefix.len()) % cycle.len()])
                }
            }
        }
    }

    fn horizon(&self) -> usize {
        match self {
            WeightedSite::Vertex(labels) => labels.len(),
            WeightedSite::End { prefix, cycle } => prefix.len() + cycle.len(),
        }
    }

    pub fn end(prefix: Vec<u8>, cycle: Vec<u8>) -> Result<Self, WeightedError> {
        if cycle.is_empty() {
            return Err(WeightedError::BadData("an end needs a nonempty cycle".into()));
        }
        Ok(WeightedSite::End { prefix, cycle })
    }
}

/// Two eventually periodic label sequences that agree this far agree
/// everywhere.
fn agreement_horizon(a: &WeightedSite, b: &WeightedSite) -> usize {
    a.horizon() + b.horizon() + 1
}

/// The hitting-probability boundary metric `ρ(w,z) = F(w∧z, o)` for
/// distinct sites and 0 for equal ones. The confluent's upward hitting
/// products run through the core table and the closed-form exterior
/// values.
pub fn boundary_metric_weighted(
    tree: &ConductanceTree,
    f: &FTable,
    w: &WeightedSite,
    z: &WeightedSite,
) -> Result<Rat, WeightedError> {
    validate_site(tree, w)?;
    validate_site(tree, z)?;
    let bound = agreement_horizon(w, z);
    let mut k = 0usize;
    while k < bound {
        match (w.label_at(k), z.label_at(k)) {
            (Some(a), Some(b)) if a == b => k += 1,
            _ => break,
        }
    }
    if k == bound {
        // identical sequences: the sites coincide
        return Ok(Rat::zero());
    }
    if w.label_at(k).is_none() && z.label_at(k).is_none() {
        return Ok(Rat::zero());
    }
    let labels: Vec<u8> = (0..k).map(|i| w.label_at(i).unwrap()).collect();
    up_product(tree, f, &labels)
}

/// Product of upward hitting probabilities from the vertex at `labels` to
/// the root.
fn up_product(tree: &ConductanceTree, f: &FTable, labels: &[u8]) -> Result<Rat, WeightedError> {
    let mut cur = 0usize;
    let mut prod = Rat::one();
    let mut i = 0usize;
    while i < labels.len() {
        let lab = labels[i];
        if let Some(&c) = tree.nodes[cur].children.iter().find(|&&c| tree.nodes[c].label == lab) {
            prod *= &f.up[c];
            cur = c;
            i += 1;
            continue;
        }
        // No such core child: the path must continue into the exterior.
        let Some(q) = tree.nodes[cur].ext_q else {
            return Err(WeightedError::UnknownAddress(format_address(labels)));
        };
        let rest = &labels[i..];
        if rest.iter().any(|&l| u32::from(l) >= q) {
            return Err(WeightedError::UnknownAddress(format_address(labels)));
        }
        prod *= pow_i(&ratio(1, q as i64), rest.len() as i64);
        return Ok(prod);
    }
    Ok(prod)
}

/// Checks that a site's labels name a real path: through the core, and
/// with labels below the exterior branching once past a leaf.
fn validate_site(tree: &ConductanceTree, site: &WeightedSite) -> Result<(), WeightedError> {
    let mut cur = 0usize;
    let mut i = 0usize;
    let horizon = site.horizon();
    loop {
        let Some(lab) = site.label_at(i) else {
            return Ok(());
        };
        if let Some(&c) = tree.nodes[cur].children.iter().find(|&&c| tree.nodes[c].label == lab) {
            cur = c;
            i += 1;
            continue;
        }
        let Some(q) = tree.nodes[cur].ext_q else {
            return Err(WeightedError::UnknownAddress(format!("{site:?}")));
        };
        // Exterior from here on: one full period of labels decides them all.
        for j in i..=i + horizon {
            if let Some(l) = site.label_at(j) {
                if u32::from(l) >= q {
                    return Err(WeightedError::UnknownAddress(format!("{site:?}")));
                }
            }
        }
        return Ok(());
    }
}
