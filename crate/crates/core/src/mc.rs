//! Monte-Carlo oracles: nearest-neighbour random walks on homogeneous and
//! conductance-weighted trees (cylinder hitting masses, visit counts,
//! absorption on a truncation frontier), and walk-on-spheres estimates of
//! Brownian exit functionals on the unit disk.
//!
//! Estimates are a pure function of the configuration: each replica draws
//! from its own counter-derived stream of one master seed and the replica
//! results are merged in fixed order, so a run reproduces bit-for-bit at
//! any thread count. The worker pool honours `RIESZ_LAB_THREADS`.

use std::sync::OnceLock;

use num::complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disk::{green_disk, unit, BoundarySetD};
use crate::rational::to_f64;
use crate::tree::{TreeParams, Vertex};
use crate::truncation::{Membership, TruncationT};
use crate::weighted::ConductanceTree;

#[derive(Debug, Error)]
pub enum McError {
    #[error("simulation configuration is invalid: {0}")]
    BadConfig(String),
    #[error("start point is outside the domain: {0}")]
    OutsideDomain(String),
}

/// Deterministic simulation budget. Identical configurations produce
/// identical estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub replicas: usize,
    pub paths_per_replica: usize,
    /// Depth beyond the decision region after which a tree path is
    /// classified; the residual bias decays like `q^{-margin}`.
    pub escape_margin: usize,
    /// Walk-on-spheres stops within this distance of the boundary.
    pub wos_eps: f64,
    /// Paths exceeding this many steps are discarded and counted.
    pub max_steps: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            seed: 42,
            replicas: 8,
            paths_per_replica: 4000,
            escape_margin: 30,
            wos_eps: 1e-6,
            max_steps: 200_000,
        }
    }
}

/// Replicated sample statistics with a 99% normal confidence radius and
/// the systematic-error budget of the stopping rules.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub n: u64,
    pub variance: f64,
    pub ci99: f64,
    /// Paths dropped by the max-step guard.
    pub discarded: u64,
    /// Bound on the bias introduced by finite-time classification.
    pub bias_bound: f64,
}

// ---------------------------------------------------------------------------
// Replica plumbing
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(a: Welford, b: Welford) -> Welford {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        Welford {
            n,
            mean: a.mean + d * b.n as f64 / n as f64,
            m2: a.m2 + b.m2 + d * d * (a.n as f64 * b.n as f64) / n as f64,
        }
    }

    fn estimate(self, discarded: u64, bias_bound: f64) -> McEstimate {
        let variance = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        McEstimate {
            mean: self.mean,
            n: self.n,
            variance,
            ci99: 2.576 * (variance / self.n.max(1) as f64).sqrt(),
            discarded,
            bias_bound,
        }
    }
}

fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Ok(v) = std::env::var("RIESZ_LAB_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n > 0 {
                    builder = builder.num_threads(n);
                }
            }
        }
        builder.build().expect("worker pool")
    })
}

/// Runs `per_path` over all replicas in parallel and merges the replica
/// statistics in replica order, independent of scheduling.
fn run_replicas<F>(cfg: &McConfig, per_path: F) -> (Welford, u64)
where
    F: Fn(&mut ChaCha8Rng) -> Option<f64> + Sync,
{
    let parts: Vec<(Welford, u64)> = thread_pool().install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(rep as u64 + 1);
                let mut w = Welford::default();
                let mut discarded = 0u64;
                for _ in 0..cfg.paths_per_replica {
                    match per_path(&mut rng) {
                        Some(v) => w.push(v),
                        None => discarded += 1,
                    }
                }
                (w, discarded)
            })
            .collect()
    });
    let mut acc = Welford::default();
    let mut discarded = 0u64;
    for (w, d) in parts {
        acc = Welford::merge(acc, w);
        discarded += d;
    }
    (acc, discarded)
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from `0..n` by widening multiply; the bias is below
/// `n/2^64`, far under any Monte-Carlo resolution here.
fn uniform_below(rng: &mut ChaCha8Rng, n: u32) -> u32 {
    ((u128::from(rng.next_u64()) * u128::from(n)) >> 64) as u32
}

// ---------------------------------------------------------------------------
// Simple random walk on the homogeneous tree
// ---------------------------------------------------------------------------

/// One nearest-neighbour step from the vertex with the given label path:
/// every vertex has `q+1` neighbours (the root its children, any other
/// vertex its parent and `q` children).
fn srw_step(q: u32, path: &mut Vec<u8>, rng: &mut ChaCha8Rng) {
    let r = uniform_below(rng, q + 1);
    if path.is_empty() {
        path.push(r as u8);
    } else if r == q {
        path.pop();
    } else {
        path.push(r as u8);
    }
}

/// Empirical mass `ν_x(∂T_y)`: the probability that the walk from `x`
/// converges to an end through `y`. A path is classified once it is
/// `escape_margin` levels past the decision region; afterwards the walk
/// changes its verdict with probability at most `q^{-margin}`.
pub fn srw_cylinder_measure(
    params: &TreeParams,
    x: &Vertex,
    y: &Vertex,
    cfg: &McConfig,
) -> McEstimate {
    let q = params.q();
    let stop_depth = x.depth().max(y.depth()) + cfg.escape_margin;
    let y_labels = y.labels().to_vec();
    let x_labels = x.labels().to_vec();
    let (w, discarded) = run_replicas(cfg, |rng| {
        let mut path = x_labels.clone();
        for _ in 0..cfg.max_steps {
            if path.len() >= stop_depth {
                return Some(if path.starts_with(&y_labels) { 1.0 } else { 0.0 });
            }
            srw_step(q, &mut path, rng);
        }
        None
    });
    w.estimate(discarded, (f64::from(q)).powi(-(cfg.escape_margin as i32)))
}

/// Empirical expected visits to `y` from `x` — the Green function — with
/// optional absorption on a truncation frontier. Visits are counted until
/// the walk is `escape_margin` levels below the decision region (or
/// absorbed); the omitted returns contribute at most
/// `q^{-margin}·q/(q-1)`.
pub fn srw_expected_visits(
    params: &TreeParams,
    x: &Vertex,
    y: &Vertex,
    absorb: Option<&TruncationT>,
    cfg: &McConfig,
) -> Result<McEstimate, McError> {
    let q = params.q();
    if let Some(trunc) = absorb {
        if !matches!(trunc.classify(x), Membership::Interior) {
            return Err(McError::OutsideDomain(x.to_string()));
        }
    }
    let stop_depth = x.depth().max(y.depth()) + cfg.escape_margin;
    let y_labels = y.labels().to_vec();
    let x_labels = x.labels().to_vec();
    let level = absorb.map(|t| t.level());
    let (w, discarded) = run_replicas(cfg, |rng| {
        let mut path = x_labels.clone();
        let mut visits = 0u64;
        for _ in 0..cfg.max_steps {
            if let (Some(k), Some(trunc)) = (level, absorb) {
                // Entering a chopped subtree always crosses its frontier
                // vertex, so only level-k arrivals need classifying.
                if path.len() == k
                    && trunc
                        .gamma()
                        .binary_search_by(|g| g.labels().cmp(&path[..]))
                        .is_ok()
                {
                    return Some(visits as f64);
                }
            }
            if path[..] == y_labels[..] {
                visits += 1;
            }
            if path.len() >= stop_depth {
                return Some(visits as f64);
            }
            srw_step(q, &mut path, rng);
        }
        None
    });
    let qf = f64::from(q);
    let bias = qf.powi(-(cfg.escape_margin as i32)) * qf / (qf - 1.0);
    Ok(w.estimate(discarded, bias))
}

// ---------------------------------------------------------------------------
// Weighted random walk on a conductance tree
// ---------------------------------------------------------------------------

enum WMove {
    Up,
    To(usize),
    Exterior,
}

/// Empirical expected visits to the core address `y` from `x` for the
/// conductance walk `p(x,y) = a(x,y)/m(x)`. Exterior excursions below a
/// leaf only matter through their depth, so they run on the depth
/// birth-death chain of the homogeneous continuation. Requires every
/// exterior branching at least 2 (the walk must be transient).
pub fn weighted_expected_visits(
    tree: &ConductanceTree,
    x: &[u8],
    y: &[u8],
    cfg: &McConfig,
) -> Result<McEstimate, McError> {
    let xi = tree
        .resolve(x)
        .ok_or_else(|| McError::OutsideDomain(format!("{x:?}")))?;
    let yi = tree
        .resolve(y)
        .ok_or_else(|| McError::OutsideDomain(format!("{y:?}")))?;
    let mut q_min = u32::MAX;
    for id in 0..tree.core_len() {
        if let Some(qe) = tree.exterior_branching(id) {
            if qe < 2 {
                return Err(McError::BadConfig(
                    "exterior branching below 2 makes the walk recurrent".into(),
                ));
            }
            q_min = q_min.min(qe);
        }
    }
    // cumulative transition rows per core node
    let mut rows: Vec<Vec<(f64, WMove)>> = Vec::with_capacity(tree.core_len());
    for id in 0..tree.core_len() {
        let m = to_f64(&tree.total_conductance(id));
        let mut row = Vec::new();
        let mut cum = 0.0f64;
        if tree.parent_of(id).is_some() {
            cum += to_f64(tree.up_conductance(id)) / m;
            row.push((cum, WMove::Up));
        }
        for &c in tree.children_of(id) {
            cum += to_f64(tree.up_conductance(c)) / m;
            row.push((cum, WMove::To(c)));
        }
        if let Some(qe) = tree.exterior_branching(id) {
            cum += f64::from(qe) / m;
            row.push((cum, WMove::Exterior));
        }
        row.last_mut().expect("positive degree").0 = 1.0;
        rows.push(row);
    }
    let ext_q: Vec<Option<u32>> = (0..tree.core_len()).map(|i| tree.exterior_branching(i)).collect();
    let (w, discarded) = run_replicas(cfg, |rng| {
        let mut node = xi;
        let mut ext_depth = 0usize;
        let mut visits = 0u64;
        for _ in 0..cfg.max_steps {
            if ext_depth == 0 {
                if node == yi {
                    visits += 1;
                }
                let u = uniform01(rng);
                let row = &rows[node];
                let mv = &row[row.partition_point(|(c, _)| *c < u).min(row.len() - 1)].1;
                match mv {
                    WMove::Up => node = tree.parent_of(node).expect("row has Up only off-root"),
                    WMove::To(c) => node = *c,
                    WMove::Exterior => ext_depth = 1,
                }
            } else {
                if ext_depth >= cfg.escape_margin {
                    return Some(visits as f64);
                }
                // depth chain of the unit continuation: up 1/(q+1), down q/(q+1)
                let qe = ext_q[node].expect("exterior only below a leaf");
                if uniform_below(rng, qe + 1) == qe {
                    ext_depth -= 1;
                } else {
                    ext_depth += 1;
                }
            }
        }
        None
    });
    let bias = (1.0 / f64::from(q_min)).powi(cfg.escape_margin as i32);
    Ok(w.estimate(discarded, bias))
}

// ---------------------------------------------------------------------------
// Walk-on-spheres on the unit disk
// ---------------------------------------------------------------------------

/// A closed boundary arc given by its angular center and half-width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryArc {
    pub center: f64,
    pub half_angle: f64,
}

impl BoundaryArc {
    pub fn new(center: f64, half_angle: f64) -> Result<Self, McError> {
        if !(half_angle > 0.0 && half_angle <= std::f64::consts::PI) {
            return Err(McError::BadConfig("arc half-width must lie in (0, π]".into()));
        }
        Ok(BoundaryArc { center, half_angle })
    }

    /// The arc of chordal radius `t` around `e^{i·center}`:
    /// `{ξ : |ξ - e^{i·center}| ≤ t}`.
    pub fn from_chord(center: f64, t: f64) -> Result<Self, McError> {
        if !(t > 0.0 && t <= 2.0) {
            return Err(McError::BadConfig("chordal radius must lie in (0, 2]".into()));
        }
        Ok(BoundaryArc { center, half_angle: 2.0 * (t / 2.0).asin() })
    }

    pub fn contains_angle(&self, theta: f64) -> bool {
        let d = (theta - self.center).rem_euclid(std::f64::consts::TAU);
        d.min(std::f64::consts::TAU - d) <= self.half_angle
    }
}

/// Brownian hitting mass `ν_z(⋃ arcs)` by walk-on-spheres: jump to a
/// uniform point of the largest centered circle inside the disk until
/// within the ε-shell of the boundary, then classify the exit angle.
pub fn wos_harmonic_measure(
    z: Complex64,
    arcs: &[BoundaryArc],
    cfg: &McConfig,
) -> Result<McEstimate, McError> {
    if z.norm() >= 1.0 {
        return Err(McError::OutsideDomain(format!("{z}")));
    }
    let (w, discarded) = run_replicas(cfg, |rng| {
        let mut p = z;
        for _ in 0..cfg.max_steps {
            let d = 1.0 - p.norm();
            if d <= cfg.wos_eps {
                let theta = p.im.atan2(p.re);
                return Some(if arcs.iter().any(|a| a.contains_angle(theta)) { 1.0 } else { 0.0 });
            }
            p += d * unit(std::f64::consts::TAU * uniform01(rng));
        }
        None
    });
    // misclassification is confined to ε-bands at the arc endpoints,
    // where the exit density is at most (1+|z|)/(1-|z|)
    let density_cap = (1.0 + z.norm()) / (1.0 - z.norm());
    let bias = 2.0 * arcs.len() as f64 * cfg.wos_eps * density_cap;
    Ok(w.estimate(discarded, bias))
}

/// Green function of the truncated disk at the origin pole,
/// `G(z,0) - E[G(Z_τ,0)·1{Z_τ on the frontier}]`, by walk-on-spheres in
/// the domain `{dist(·,E) > t}`: each step jumps to the largest circle
/// avoiding both the unit circle and the chordal circles of radius `t`
/// around the set points. Without a set the walk always exits through the
/// unit circle, where the kernel vanishes, so every path returns the free
/// value `log(1/|z|)`.
pub fn wos_truncated_green_disk(
    z: Complex64,
    set: Option<&BoundarySetD>,
    t: f64,
    cfg: &McConfig,
) -> Result<McEstimate, McError> {
    if z.norm() >= 1.0 {
        return Err(McError::OutsideDomain(format!("{z}")));
    }
    if z.norm() < 16.0 * cfg.wos_eps {
        return Err(McError::BadConfig("the pole at the origin must stay away from the start".into()));
    }
    if let Some(e) = set {
        if !(t > 0.0 && t < e.gap() / 3.0) {
            return Err(McError::BadConfig(format!(
                "threshold {t} must lie in (0, gap/3) = (0, {})",
                e.gap() / 3.0
            )));
        }
        if e.dist_to_set(z) <= t {
            return Err(McError::OutsideDomain(format!("{z}")));
        }
    }
    let origin = Complex64::new(0.0, 0.0);
    let free_g = green_disk(z, origin);
    let (w, discarded) = run_replicas(cfg, |rng| {
        let mut p = z;
        for _ in 0..cfg.max_steps {
            let d_circle = 1.0 - p.norm();
            let d_gamma = set.map(|e| e.dist_to_set(p) - t).unwrap_or(f64::INFINITY);
            if d_gamma <= cfg.wos_eps && d_gamma <= d_circle {
                return Some(free_g - green_disk(p, origin));
            }
            if d_circle <= cfg.wos_eps {
                return Some(free_g);
            }
            p += d_circle.min(d_gamma) * unit(std::f64::consts::TAU * uniform01(rng));
        }
        None
    });
    let bias = cfg.wos_eps * (1.0 + if set.is_some() { 1.0 / t } else { 0.0 });
    Ok(w.estimate(discarded, bias))
}
