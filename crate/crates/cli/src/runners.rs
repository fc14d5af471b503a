//! Subcommand implementations. Each runner resolves its effective
//! settings, drives the library, prints one line per check, and queues
//! CSV tables; `main` writes the artifacts once the runner returns.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;

use riesz_lab::disk::{
    arc_harmonic_mass, boundary_integral_disk, busemann, geometric_family_moment, green_disk,
    green_hyp_form, hyperbolic_dist, poisson, poisson_total_mass, radial_family_moment, unit,
    BlaschkeData, BoundarySetD, Complex64, DiskVerdict,
};
use riesz_lab::kernels::{
    first_passage, green, harmonic_measure_cylinder, horocycle_index, martin,
};
use riesz_lab::mc::{
    srw_cylinder_measure, srw_expected_visits, weighted_expected_visits, wos_harmonic_measure,
    wos_truncated_green_disk, BoundaryArc, McConfig, McEstimate,
};
use riesz_lab::moments::{
    boundary_integral_tree, extended_moment, first_moment, majorant_h, upsilon,
    upsilon_quadrature, verify_divergence, verify_majorant, verify_upsilon_divergence,
    LevelWeight, PhiSpec, PsiSpec, Scalar, Verdict,
};
use riesz_lab::potential::{
    green_potential, riesz_decomposition, riesz_measure, BallIndex, Extension, PotentialError,
    PotentialValue, RadialTerm, TreeFunction, VertexMeasure,
};
use riesz_lab::quad::adaptive_simpson;
use riesz_lab::rational::{fmt_rat, ipow, parse_rat, pow_i, rat, ratio, to_f64, Rat};
use riesz_lab::tree::{BoundarySetT, End, TreeParams, Vertex};
use riesz_lab::truncation::{solve_hitting, truncated_green, verify_green_bound, TruncationT};
use riesz_lab::weighted::{green_weighted, solve_f, ConductanceTree};

use crate::config::{parse_phi, ConfigError, Eff};
use crate::report::{rat_cols, Artifacts, EstimateRow};

fn lib(context: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{context}: {e}"))
}

/// Slash-delimited vertex literal: `o` for the root, else `0/1/2`.
fn parse_vertex(p: &TreeParams, s: &str) -> Result<Vertex, ConfigError> {
    Vertex::parse(p, s).map_err(|e| lib(&format!("vertex `{s}`"), e))
}

fn boundary_set(p: &TreeParams, ends: &[String]) -> Result<BoundarySetT, ConfigError> {
    let mut parsed = Vec::new();
    for e in ends {
        parsed.push(End::parse(p, e).map_err(|err| lib(&format!("end `{e}`"), err))?);
    }
    BoundarySetT::finite(parsed).map_err(|e| lib("boundary set", e))
}

fn chain_vertex(p: &TreeParams, n: usize) -> Vertex {
    Vertex::from_labels(p, &vec![0u8; n]).expect("label 0 is valid at every depth")
}

fn chain_end_set(p: &TreeParams) -> BoundarySetT {
    let e = End::parse(p, "(0)").expect("the all-zero ray is an end");
    BoundarySetT::finite(vec![e]).expect("one end forms a boundary set")
}

fn verdict_str(v: &Verdict) -> &'static str {
    match v {
        Verdict::FiniteCertified => "finite (certified)",
        Verdict::FiniteTrend => "finite (trend)",
        Verdict::DivergentCertified => "divergent (certified)",
        Verdict::DivergentTrend => "divergent (trend)",
    }
}

fn scalar_cols(s: &Scalar) -> String {
    match s.as_exact() {
        Some(r) => rat_cols(r),
        None => format!(",,{}", s.to_f64()),
    }
}

/// The model functions the `riesz` and `moment` subcommands operate on.
///
/// * `green-pole` — the Green kernel with its pole at the root;
/// * `exp-growth` — the radial function `q^{|x|}`;
/// * `majorant-example` — `h - Gμ` for the geometric chain charge
///   `μ(0^n) = 2^{-(n+1)}`, with `h` the boundary integral of the cap
///   `ρ^{-1/2}` towards the all-zero end.
fn build_model(
    p: &TreeParams,
    which: &str,
    radius: usize,
) -> Result<(TreeFunction, Option<VertexMeasure>), ConfigError> {
    let root = Vertex::root();
    match which {
        "green-pole" => {
            let u = TreeFunction::from_fn(p, radius, Extension::Undefined, |v| green(p, v, &root))
                .map_err(|e| lib("building the Green-pole function", e))?;
            Ok((u, None))
        }
        "exp-growth" => {
            let u = TreeFunction::radial(
                p,
                radius,
                vec![RadialTerm::new(rat(1), rat(i64::from(p.q())))],
            )
            .map_err(|e| lib("building the radial growth function", e))?;
            Ok((u, None))
        }
        "majorant-example" => {
            // The cap ρ^{-1/2} takes the value q^{n/2} on the n-th shell,
            // which is rational only for square branching numbers.
            if !(1..=8u32).any(|r| r * r == p.q()) {
                return Err(ConfigError(format!(
                    "the majorant example needs a square branching number so its cap \
                     stays exact; got q = {} (try 4)",
                    p.q()
                )));
            }
            let set = chain_end_set(p);
            let base = PsiSpec::power_law(rat(1), ratio(1, 2), rat(1)).expect("valid cap");
            let mut atoms = BTreeMap::new();
            for n in 0..=8usize {
                atoms.insert(chain_vertex(p, n), pow_i(&ratio(1, 2), n as i64 + 1));
            }
            let mu = VertexMeasure::from_atoms(atoms);
            let u = TreeFunction::from_fn(p, radius, Extension::Undefined, |v| {
                let h = majorant_h(p, &set, &base, v, 12)
                    .expect("cap integral converges")
                    .value
                    .expect("certified value");
                let h = h.as_exact().expect("exact cap integral").clone();
                let g = match green_potential(p, v, &mu) {
                    PotentialValue::Finite(g) => g,
                    PotentialValue::Divergent => unreachable!("geometric chain charge"),
                };
                h - g
            })
            .map_err(|e| lib("building the majorant example", e))?;
            Ok((u, Some(mu)))
        }
        other => Err(ConfigError(format!("unknown model function `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn run_kernels(
    arts: &mut Artifacts,
    eff: &mut Eff,
    q: Option<&str>,
    radius: Option<&str>,
    end: Option<&str>,
    green_pair: Option<&[String]>,
    passage_pair: Option<&[String]>,
    expect: Option<&str>,
) -> Result<(), ConfigError> {
    let q = eff.u32_value("q", q, "2")?;
    let radius = eff.usize_value("radius", radius, "4")?;
    let ends = eff.str_list("ends", end, "(0)")?;
    let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
    let xi = End::parse(&p, &ends[0]).map_err(|e| lib(&format!("end `{}`", ends[0]), e))?;

    let mut queried: Option<Rat> = None;
    if let Some(pair) = green_pair {
        let x = parse_vertex(&p, &pair[0])?;
        let y = parse_vertex(&p, &pair[1])?;
        let v = green(&p, &x, &y);
        eff.record_arg("green", format!("{x} {y}"));
        println!("{}", fmt_rat(&v));
        queried = Some(v);
    }
    if let Some(pair) = passage_pair {
        if queried.is_some() {
            return Err(ConfigError("give only one of --green / --passage per run".into()));
        }
        let x = parse_vertex(&p, &pair[0])?;
        let y = parse_vertex(&p, &pair[1])?;
        let v = first_passage(&p, &x, &y);
        eff.record_arg("passage", format!("{x} {y}"));
        println!("{}", fmt_rat(&v));
        queried = Some(v);
    }
    if let Some(want) = expect {
        let want = parse_rat(want).map_err(|e| ConfigError(format!("--expect: {e}")))?;
        let Some(got) = &queried else {
            return Err(ConfigError("--expect needs --green or --passage".into()));
        };
        eff.record_arg("expect", fmt_rat(&want));
        arts.check(
            "kernel-value-expected",
            *got == want,
            format!("queried value {} vs expected {}", fmt_rat(got), fmt_rat(&want)),
        );
    }

    kernels_battery(arts, &p, radius, &xi)
}

/// Mean-value checks and the kernel table on `B(o, radius)`.
fn kernels_battery(
    arts: &mut Artifacts,
    p: &TreeParams,
    radius: usize,
    xi: &End,
) -> Result<(), ConfigError> {
    let root = Vertex::root();
    let ball = BallIndex::new(p, radius).map_err(|e| lib("ball index", e))?;
    let g_fn = TreeFunction::from_fn(p, radius + 1, Extension::Undefined, |v| green(p, v, &root))
        .map_err(|e| lib("green kernel table", e))?;
    let k_fn = TreeFunction::from_fn(p, radius + 1, Extension::Undefined, |v| martin(p, v, xi))
        .map_err(|e| lib("martin kernel table", e))?;

    let mut green_bad = 0usize;
    let mut martin_bad = 0usize;
    for i in 0..ball.len() {
        let x = ball.vertex_at(i);
        let dg = g_fn.laplacian_at(&x).expect("stored one level deeper");
        let want = if x == root { rat(-1) } else { rat(0) };
        if dg != want {
            green_bad += 1;
        }
        let dk = k_fn.laplacian_at(&x).expect("stored one level deeper");
        if dk != rat(0) {
            martin_bad += 1;
        }
    }
    arts.check(
        "green-unit-sink",
        green_bad == 0,
        format!(
            "mean-value defect of G(·,o) is -1 at o and 0 elsewhere on {} vertices ({green_bad} violations)",
            ball.len()
        ),
    );
    arts.check(
        "martin-mean-value",
        martin_bad == 0,
        format!("K(·,ξ) is harmonic at all {} ball vertices ({martin_bad} violations)", ball.len()),
    );

    // The level-one cylinders partition the boundary, seen from the root
    // and from inside one of the cylinders.
    let mut from_root = rat(0);
    let mut from_inside = rat(0);
    let inside = chain_vertex(p, 1);
    for l in 0..=p.q() {
        let y = Vertex::from_labels(p, &[l as u8]).expect("root child");
        from_root += harmonic_measure_cylinder(p, &root, &y);
        from_inside += harmonic_measure_cylinder(p, &inside, &y);
    }
    arts.check(
        "cylinder-partition",
        from_root == rat(1) && from_inside == rat(1),
        format!(
            "level-1 cylinder masses sum to {} from o and {} from {}",
            fmt_rat(&from_root),
            fmt_rat(&from_inside),
            inside
        ),
    );

    let mut rows = Vec::with_capacity(ball.len());
    for i in 0..ball.len() {
        let x = ball.vertex_at(i);
        let gv = green(p, &x, &root);
        let fv = first_passage(p, &x, &root);
        let kv = martin(p, &x, xi);
        let cv = harmonic_measure_cylinder(p, &root, &x);
        rows.push(format!(
            "{x},{},{},{},{},{},{}",
            x.depth(),
            horocycle_index(&x, xi),
            rat_cols(&gv),
            rat_cols(&fv),
            rat_cols(&kv),
            rat_cols(&cv),
        ));
    }
    arts.table(
        "kernels.csv",
        "vertex,depth,horocycle,green_num,green_den,green_dec,passage_num,passage_den,passage_dec,\
         martin_num,martin_den,martin_dec,cylinder_num,cylinder_den,cylinder_dec",
        rows,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// riesz
// ---------------------------------------------------------------------------

pub fn run_riesz(
    arts: &mut Artifacts,
    eff: &mut Eff,
    q: Option<&str>,
    radius: Option<&str>,
    function: Option<&str>,
) -> Result<(), ConfigError> {
    let function = eff.value("function", function, "green-pole")?;
    let q = eff.u32_value("q", q, if function == "majorant-example" { "4" } else { "2" })?;
    let radius = eff.usize_value("radius", radius, "6")?;
    let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
    let root = Vertex::root();
    let (u, seeded) = build_model(&p, &function, radius)?;
    let measure = riesz_measure(&u);

    let lap_radius = u.laplacian_radius().unwrap_or(0);
    let ball = BallIndex::new(&p, lap_radius).map_err(|e| lib("ball index", e))?;
    let mut rows = Vec::with_capacity(ball.len());
    for i in 0..ball.len() {
        let x = ball.vertex_at(i);
        let uv = u.value(&x).expect("inside the stored ball");
        let cv = measure.mass_at(&x);
        rows.push(format!("{x},{},{},{}", x.depth(), rat_cols(&uv), rat_cols(&cv)));
    }
    arts.table(
        "riesz.csv",
        "vertex,depth,u_num,u_den,u_dec,charge_num,charge_den,charge_dec",
        rows,
    );

    match function.as_str() {
        "green-pole" => {
            arts.check(
                "charge-single-sink",
                measure.atoms.len() == 1 && measure.mass_at(&root) == rat(-1),
                format!(
                    "the Green kernel carries charge {} at o and nothing else ({} atom(s))",
                    fmt_rat(&measure.mass_at(&root)),
                    measure.atoms.len()
                ),
            );
            let dec = riesz_decomposition(&u).map_err(|e| lib("decomposition", e))?;
            arts.check(
                "harmonic-defect-zero",
                dec.harmonic_defect == rat(0),
                format!("max |mean-value defect| of the harmonic part: {}", fmt_rat(&dec.harmonic_defect)),
            );
            let vanishes = dec.harmonic_part.values().iter().all(|v| *v == rat(0));
            arts.check(
                "harmonic-part-vanishes",
                vanishes,
                "the harmonic part of a pure potential is identically zero".to_string(),
            );
            check_reconstruction(arts, &p, &u, &dec.harmonic_part, &dec.measure);
        }
        "exp-growth" => {
            arts.check(
                "charge-nonnegative",
                measure.is_nonnegative(),
                "the mean-value defect of the growing radial function never turns negative"
                    .to_string(),
            );
            let at_root = u.laplacian_at(&root).expect("root defect");
            arts.check(
                "root-charge-positive",
                at_root > rat(0),
                format!("defect at o equals {}", fmt_rat(&at_root)),
            );
            let divergent = matches!(
                riesz_decomposition(&u),
                Err(PotentialError::DivergentPotential)
            );
            arts.check(
                "potential-divergent",
                divergent,
                "the charge admits no finite potential, so no harmonic majorant exists"
                    .to_string(),
            );
        }
        "majorant-example" => {
            let dec = riesz_decomposition(&u).map_err(|e| lib("decomposition", e))?;
            arts.check(
                "harmonic-defect-zero",
                dec.harmonic_defect == rat(0),
                format!("max |mean-value defect| of the harmonic part: {}", fmt_rat(&dec.harmonic_defect)),
            );
            arts.check(
                "harmonic-majorizes",
                dec.majorizes,
                "the harmonic part dominates u on the stored ball".to_string(),
            );
            let seeded = seeded.expect("the example carries its charge");
            let mut round_trip = true;
            for (v, m) in &dec.measure.atoms {
                if seeded.mass_at(v) != *m {
                    round_trip = false;
                }
            }
            for n in 0..=8usize.min(lap_radius) {
                let v = chain_vertex(&p, n);
                if dec.measure.mass_at(&v) != seeded.mass_at(&v) {
                    round_trip = false;
                }
            }
            arts.check(
                "charge-round-trip",
                round_trip,
                format!(
                    "extracted charge matches the seeded chain charge on radius {lap_radius} ({} atom(s))",
                    dec.measure.atoms.len()
                ),
            );
            check_reconstruction(arts, &p, &u, &dec.harmonic_part, &dec.measure);
        }
        _ => unreachable!("validated token"),
    }
    Ok(())
}

/// Re-derives `u = h - Gμ` pointwise with an independent potential sum.
fn check_reconstruction(
    arts: &mut Artifacts,
    p: &TreeParams,
    u: &TreeFunction,
    h: &TreeFunction,
    measure: &VertexMeasure,
) {
    let ball = h.index();
    let mut bad = 0usize;
    for i in 0..ball.len() {
        let x = ball.vertex_at(i);
        let g = match green_potential(p, &x, measure) {
            PotentialValue::Finite(g) => g,
            PotentialValue::Divergent => {
                bad += 1;
                continue;
            }
        };
        let lhs = u.value(&x).expect("inside the stored ball");
        let rhs = h.value(&x).expect("inside the harmonic ball") - g;
        if lhs != rhs {
            bad += 1;
        }
    }
    arts.check(
        "reconstruction-exact",
        bad == 0,
        format!("u = h - Gμ holds exactly at {} vertices ({bad} violations)", ball.len()),
    );
}

// ---------------------------------------------------------------------------
// green-bound
// ---------------------------------------------------------------------------

pub fn run_green_bound(
    arts: &mut Artifacts,
    eff: &mut Eff,
    q: Option<&str>,
    ends: Option<&str>,
    t: Option<&str>,
    extra_depth: Option<&str>,
) -> Result<(), ConfigError> {
    let q = eff.u32_value("q", q, "2")?;
    let ends = eff.str_list("ends", ends, "(0)")?;
    let ts = eff.rat_list("t", t, "1/4")?;
    let extra = eff.usize_value("extra_depth", extra_depth, "3")?;
    let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
    green_bound_battery(arts, &p, &ends, &ts, extra)
}

/// Exact sandwich `((q-1)/q)·G ≤ G_tr ≤ G` near the truncation level.
fn green_bound_battery(
    arts: &mut Artifacts,
    p: &TreeParams,
    ends: &[String],
    ts: &[Rat],
    extra: usize,
) -> Result<(), ConfigError> {
    let mut rows = Vec::with_capacity(ts.len());
    for t in ts {
        let set = boundary_set(p, ends)?;
        let rep = verify_green_bound(p, set, t.clone(), extra)
            .map_err(|e| lib(&format!("green bound at t = {}", fmt_rat(t)), e))?;
        let min_ratio = parse_rat(&rep.min_ratio).expect("report ratio is rational");
        let lower = parse_rat(&rep.lower_bound).expect("report bound is rational");
        arts.check(
            &format!("green-bound-t-{}", fmt_rat(t)),
            rep.pass,
            format!(
                "min ratio {} ≥ {} and G_tr ≤ G {} at {} interior vertices \
                 (level {}, frontier size {}, radius {}, {} skipped)",
                rep.min_ratio,
                rep.lower_bound,
                if rep.upper_ok { "held" } else { "FAILED" },
                rep.checked,
                rep.level,
                rep.gamma_size,
                rep.checked_radius,
                rep.skipped
            ),
        );
        rows.push(format!(
            "{},{},{},{},{},{},{},{}",
            rat_cols(t),
            rep.level,
            rep.gamma_size,
            rep.checked,
            rep.skipped,
            rat_cols(&min_ratio),
            rat_cols(&lower),
            rep.pass
        ));
    }
    arts.table(
        "green_bound.csv",
        "t_num,t_den,t_dec,level,frontier,checked,skipped,min_ratio_num,min_ratio_den,\
         min_ratio_dec,lower_num,lower_den,lower_dec,pass",
        rows,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// moment
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn run_moment(
    arts: &mut Artifacts,
    eff: &mut Eff,
    q: Option<&str>,
    radius: Option<&str>,
    function: Option<&str>,
    ends: Option<&str>,
    phi: Option<&str>,
) -> Result<(), ConfigError> {
    let function = eff.value("function", function, "majorant-example")?;
    let q = eff.u32_value("q", q, if function == "majorant-example" { "4" } else { "2" })?;
    let radius = eff.usize_value("radius", radius, "6")?;
    let ends = eff.str_list("ends", ends, "(0)")?;
    let phi = eff.optional("phi", phi)?;
    let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
    moment_battery(arts, &p, &function, radius, &ends, phi.as_deref())
}

/// First (and optionally grade-weighted) distance moments of the charge
/// extracted from a model function, with the potential dual route.
fn moment_battery(
    arts: &mut Artifacts,
    p: &TreeParams,
    function: &str,
    radius: usize,
    ends: &[String],
    phi: Option<&str>,
) -> Result<(), ConfigError> {
    let root = Vertex::root();
    let (u, _) = build_model(p, function, radius)?;
    let mu = riesz_measure(&u);
    let first = first_moment(p, &mu);

    let certified =
        matches!(first.verdict, Verdict::FiniteCertified | Verdict::DivergentCertified);
    let value_text = match (&first.value, &first.tail_bound) {
        (Some(v), Some(tb)) => format!("value {v} (tail ≤ {tb})"),
        (Some(v), None) => format!("value {v}"),
        _ => first.certificate.clone(),
    };
    arts.check(
        "first-moment-certified",
        certified,
        format!("verdict {}; {value_text}", verdict_str(&first.verdict)),
    );

    // The root potential of the charge is exactly q/(q-1) times the first
    // distance moment; both routes must land on the same side.
    let factor = ratio(i64::from(p.q()), i64::from(p.q()) - 1);
    let route = green_potential(p, &root, &mu);
    let agree = match (&route, first.verdict.is_finite(), &first.value) {
        (PotentialValue::Finite(g), true, Some(v)) => match v.as_exact() {
            Some(vr) => *g == factor.clone() * vr.clone(),
            None => (to_f64(g) - to_f64(&factor) * v.to_f64()).abs() <= 1e-9,
        },
        (PotentialValue::Divergent, false, _) => true,
        _ => false,
    };
    let route_text = match &route {
        PotentialValue::Finite(g) => format!("Gμ(o) = {}", fmt_rat(g)),
        PotentialValue::Divergent => "Gμ(o) divergent".to_string(),
    };
    arts.check(
        "potential-route-agrees",
        agree,
        format!("{route_text} vs (q/(q-1))·moment with factor {}", fmt_rat(&factor)),
    );

    let mut rows = Vec::with_capacity(first.level_sums.len());
    for (n, (s, ps)) in first.level_sums.iter().zip(&first.partial_sums).enumerate() {
        rows.push(format!("first,{n},{},{}", scalar_cols(s), scalar_cols(ps)));
    }

    if let Some(phi_spec) = phi {
        let phi_parsed = parse_phi(phi_spec)?;
        let set = boundary_set(p, ends)?;
        let ext = extended_moment(p, &mu, &phi_parsed, &set, &rat(1))
            .map_err(|e| lib("grade-weighted moment", e))?;
        let certified =
            matches!(ext.verdict, Verdict::FiniteCertified | Verdict::DivergentCertified);
        arts.check(
            "graded-moment-certified",
            certified,
            format!("verdict {}; {}", verdict_str(&ext.verdict), ext.certificate),
        );
        for (n, (s, ps)) in ext.level_sums.iter().zip(&ext.partial_sums).enumerate() {
            rows.push(format!("graded,{n},{},{}", scalar_cols(s), scalar_cols(ps)));
        }
    }
    arts.table(
        "moments.csv",
        "series,level,sum_num,sum_den,sum_dec,partial_num,partial_den,partial_dec",
        rows,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn run_verify(
    arts: &mut Artifacts,
    eff: &mut Eff,
    theorem: Option<&str>,
    q: Option<&str>,
    ends: Option<&str>,
    t: Option<&str>,
    radius: Option<&str>,
    extra_depth: Option<&str>,
) -> Result<(), ConfigError> {
    let theorem = eff.required("theorem", theorem)?;
    match theorem.as_str() {
        "green" => run_green_bound(arts, eff, q, ends, t, extra_depth),
        "majorant" => {
            let q = eff.u32_value("q", q, "4")?;
            let radius = eff.usize_value("radius", radius, "6")?;
            majorant_theorem_battery(arts, q, radius)
        }
        "divergence" => {
            let q = eff.u32_value("q", q, "2")?;
            let radius = eff.usize_value("radius", radius, "6")?;
            divergence_theorem_battery(arts, q, radius)
        }
        "upsilon" => upsilon_theorem_battery(arts),
        other => Err(ConfigError(format!("unknown theorem `{other}`"))),
    }
}

/// Finite boundary moment from a decaying-cap majorant: pointwise cap,
/// certified cap integral, chopped-domain domination, and the moment
/// budget, on the geometric chain example.
fn majorant_theorem_battery(
    arts: &mut Artifacts,
    q: u32,
    radius: usize,
) -> Result<(), ConfigError> {
    let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
    let set = chain_end_set(&p);
    let (u, _) = build_model(&p, "majorant-example", radius)?;
    let psi = PsiSpec::power_law(rat(2), ratio(1, 2), rat(1)).expect("valid cap");
    let rep =
        verify_majorant(&u, &psi, &set, &[1, 2, 3]).map_err(|e| lib("majorant battery", e))?;
    arts.check(
        "majorant-applicable",
        rep.applicable,
        format!("cap integral verdict {}", verdict_str(&rep.boundary_integral.verdict)),
    );
    arts.check(
        "majorant-pointwise-cap",
        rep.pointwise_ok,
        format!("u ≤ Ψ(ρ(·,E)) at {} vertices", rep.pointwise_checked),
    );
    let integral_text = rep
        .boundary_integral
        .value
        .as_ref()
        .map(|v| format!("{v}"))
        .unwrap_or_else(|| rep.boundary_integral.certificate.clone());
    arts.check(
        "majorant-cap-integral-finite",
        rep.boundary_integral.verdict == Verdict::FiniteCertified,
        format!("∫Ψ dν = {integral_text}"),
    );
    let chopped_ok = rep.truncation_checks.iter().all(|c| c.ok);
    arts.check(
        "majorant-chopped-domination",
        chopped_ok,
        format!("{} truncation level(s) dominated", rep.truncation_checks.len()),
    );
    let budget_text = rep.budget.as_ref().map(|b| format!("{b}")).unwrap_or_default();
    arts.check(
        "majorant-moment-within-budget",
        rep.moment_within_budget,
        format!("charge moment stays within the budget {budget_text}"),
    );
    arts.check("majorant-overall", rep.pass, rep.note.clone());
    Ok(())
}

/// Divergent first moment for exponential growth along the boundary set:
/// certified divergent cap integral and unbounded moment partial sums,
/// with the exact level-sum law at `q = 2`.
fn divergence_theorem_battery(
    arts: &mut Artifacts,
    q: u32,
    radius: usize,
) -> Result<(), ConfigError> {
    let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
    let set = chain_end_set(&p);
    let (u, _) = build_model(&p, "exp-growth", radius)?;
    let psi = PsiSpec::power_law(rat(1), rat(1), rat(1)).expect("valid cap");
    let rep = verify_divergence(&u, &psi, &set).map_err(|e| lib("divergence battery", e))?;
    arts.check(
        "divergence-cap-integral",
        rep.integral_divergent,
        format!("cap integral verdict {}", verdict_str(&rep.boundary_integral.verdict)),
    );
    let growth = rep
        .exact_level_ratio
        .clone()
        .or_else(|| rep.fitted_level_ratio.map(|r| format!("fitted {r:.4}")))
        .unwrap_or_default();
    arts.check(
        "divergence-moment-unbounded",
        rep.moment_unbounded,
        format!("level-sum growth {growth}"),
    );
    if q == 2 {
        let sums = &rep.moment.level_sums;
        let mut exact_ok = !sums.is_empty()
            && sums[0].as_exact().map(|r| *r == rat(1)).unwrap_or(false);
        for (n, s) in sums.iter().enumerate().skip(1) {
            let want = ratio(3, 4) * ipow(2, n as i64);
            if s.as_exact().map(|r| *r != want).unwrap_or(true) {
                exact_ok = false;
            }
        }
        arts.check(
            "divergence-level-sums-closed-form",
            exact_ok,
            format!("level sums follow 3·2^(n-2) on {} stored levels", sums.len()),
        );
    }
    arts.check("divergence-overall", rep.pass, rep.note.clone());
    Ok(())
}

/// The grade-composite calculus: closed forms against direct quadrature
/// on a power grid, the single-end integral criterion, and the composite
/// divergence battery.
fn upsilon_theorem_battery(arts: &mut Artifacts) -> Result<(), ConfigError> {
    let caps = [ratio(1, 2), rat(1), ratio(3, 2), rat(2)];
    let grades = [ratio(1, 4), ratio(1, 2), rat(1)];
    let ts = [ratio(1, 10), ratio(1, 4), ratio(1, 2)];
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for cap in &caps {
        for grade in &grades {
            let psi = PsiSpec::power_law(rat(1), cap.clone(), rat(1)).expect("valid cap");
            let phi = PhiSpec::power_law(rat(1), grade.clone()).expect("valid grade");
            for t in &ts {
                let closed = upsilon(&psi, &phi, t).map_err(|e| lib("composite value", e))?;
                let quad = upsilon_quadrature(&psi, &phi, t, 1e-10)
                    .map_err(|e| lib("composite quadrature", e))?;
                let c = closed.value.to_f64();
                let qv = quad.value.to_f64();
                let rel = (c - qv).abs() / c.abs().max(1e-300);
                worst = worst.max(rel);
                rows.push(format!(
                    "{},{},{},{c},{qv},{rel:.3e}",
                    fmt_rat(cap),
                    fmt_rat(grade),
                    fmt_rat(t)
                ));
            }
        }
    }
    arts.check(
        "upsilon-closed-form-grid",
        worst <= 1e-8,
        format!("{} grid points, worst relative gap {worst:.3e}", rows.len()),
    );
    arts.table("upsilon.csv", "cap_exponent,grade_exponent,t,closed_form,quadrature,rel_err", rows);

    // Single-end integral criterion: ∫ ρ^{-p} dν is finite iff p < 1.
    let p2 = TreeParams::new(2).expect("q = 2");
    let set = chain_end_set(&p2);
    let grid = [
        ratio(1, 8),
        ratio(1, 4),
        ratio(1, 2),
        ratio(3, 4),
        rat(1),
        ratio(5, 4),
        ratio(3, 2),
        rat(2),
    ];
    let mut criterion_ok = true;
    let mut details = Vec::new();
    for pexp in &grid {
        let psi = PsiSpec::power_law(rat(1), pexp.clone(), rat(1)).expect("valid cap");
        let enc = boundary_integral_tree(&p2, &set, &LevelWeight::Psi(&psi), 24)
            .map_err(|e| lib("integral criterion", e))?;
        let want_finite = *pexp < rat(1);
        let ok = if want_finite {
            enc.verdict == Verdict::FiniteCertified
        } else {
            enc.verdict == Verdict::DivergentCertified
        };
        if !ok {
            criterion_ok = false;
            details.push(format!("p = {} gave {}", fmt_rat(pexp), verdict_str(&enc.verdict)));
        }
    }
    arts.check(
        "upsilon-integral-criterion",
        criterion_ok,
        if details.is_empty() {
            format!("finite iff exponent < 1, certified on all {} grid points", grid.len())
        } else {
            details.join("; ")
        },
    );

    // Composite divergence on the quadratic-growth example.
    let psi = PsiSpec::power_law(rat(1), rat(2), rat(1)).expect("valid cap");
    let phi = PhiSpec::power_law(rat(1), ratio(1, 2)).expect("valid grade");
    let set2 = chain_end_set(&p2);
    let u = TreeFunction::from_fn(&p2, 7, Extension::Undefined, |v| {
        ipow(4, set2.agreement_with_word(v.labels()) as i64)
    })
    .map_err(|e| lib("composite growth function", e))?;
    let rep = verify_upsilon_divergence(&u, &psi, &phi, &set2)
        .map_err(|e| lib("composite divergence battery", e))?;
    arts.check(
        "upsilon-divergence-precondition",
        rep.precondition_met,
        format!("composite integral verdict {}", verdict_str(&rep.upsilon_integral.verdict)),
    );
    let growth = rep
        .exact_growth
        .clone()
        .or_else(|| rep.fitted_growth.map(|r| format!("fitted {r:.4}")))
        .unwrap_or_default();
    arts.check(
        "upsilon-divergence-extended-unbounded",
        rep.extended_unbounded,
        format!("graded level-sum growth {growth}"),
    );
    arts.check(
        "upsilon-divergence-green-route",
        rep.green_route_matches,
        format!("kernel-scaling factor {}", rep.green_factor),
    );
    arts.check("upsilon-divergence-overall", rep.pass, rep.note.clone());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

const BIASED_EXAMPLE: &str = "parent_address,child_label,num,den\no,0,10,1\no,1,1,1\no,2,1,1";

#[allow(clippy::too_many_arguments)]
pub fn run_simulate(
    arts: &mut Artifacts,
    eff: &mut Eff,
    battery: Option<&str>,
    q: Option<&str>,
    t: Option<&str>,
    seed: Option<&str>,
    replicas: Option<&str>,
    paths: Option<&str>,
    weights: Option<&str>,
) -> Result<(), ConfigError> {
    let battery = eff.value("battery", battery, "all")?;
    let q = eff.u32_value("q", q, "2")?;
    let ts = eff.rat_list("t", t, "1/4")?;
    let cfg = McConfig {
        seed: eff.u64_value("seed", seed, "42")?,
        replicas: eff.usize_value("replicas", replicas, "4")?,
        paths_per_replica: eff.usize_value("paths", paths, "1500")?,
        ..McConfig::default()
    };
    let weights = eff.optional("weights", weights)?;
    let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
    let all = battery == "all";
    let mut rows = Vec::new();
    let mut matched = false;
    if all || battery == "cylinder" {
        sim_cylinder(arts, &mut rows, &p, &cfg);
        matched = true;
    }
    if all || battery == "visits" {
        sim_visits(arts, &mut rows, &p, &cfg)?;
        matched = true;
    }
    if all || battery == "truncated" {
        sim_truncated(arts, &mut rows, &p, &ts[0], &cfg)?;
        matched = true;
    }
    if all || battery == "weighted" {
        let text = match &weights {
            Some(path) => fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read weights {path}: {e}")))?,
            None => BIASED_EXAMPLE.to_string(),
        };
        sim_weighted(arts, &mut rows, &text, &cfg)?;
        matched = true;
    }
    if all || battery == "wos-measure" {
        sim_wos_measure(arts, &mut rows, &cfg)?;
        matched = true;
    }
    if all || battery == "wos-green" {
        sim_wos_green(arts, &mut rows, &cfg)?;
        matched = true;
    }
    if !matched {
        return Err(ConfigError(format!(
            "battery `{battery}` is not a simulation battery"
        )));
    }
    arts.table("simulate.csv", "target,mean,n,ci99,oracle,bias_bound,pass", rows);
    Ok(())
}

fn push_estimate(
    arts: &mut Artifacts,
    rows: &mut Vec<String>,
    target: &str,
    est: &McEstimate,
    oracle: f64,
    pass: bool,
) {
    rows.push(format!(
        "{target},{},{},{},{oracle},{},{pass}",
        est.mean, est.n, est.ci99, est.bias_bound
    ));
    arts.estimate(EstimateRow {
        target: target.to_string(),
        mean: est.mean,
        n: est.n,
        ci99: est.ci99,
        oracle,
        pass,
    });
}

fn within(est: &McEstimate, oracle: f64) -> bool {
    (est.mean - oracle).abs() <= 3.0 * est.ci99 + est.bias_bound
}

fn sim_cylinder(arts: &mut Artifacts, rows: &mut Vec<String>, p: &TreeParams, cfg: &McConfig) {
    let o = Vertex::root();
    let y = chain_vertex(p, 1);
    for (label, x) in [("sim-cylinder-from-root", &o), ("sim-cylinder-from-inside", &y)] {
        let est = srw_cylinder_measure(p, x, &y, cfg);
        let oracle = to_f64(&harmonic_measure_cylinder(p, x, &y));
        let pass = within(&est, oracle);
        push_estimate(arts, rows, label, &est, oracle, pass);
    }
}

fn sim_visits(
    arts: &mut Artifacts,
    rows: &mut Vec<String>,
    p: &TreeParams,
    cfg: &McConfig,
) -> Result<(), ConfigError> {
    let o = Vertex::root();
    let y = chain_vertex(p, 1);
    for (label, target) in [("sim-visits-root", &o), ("sim-visits-child", &y)] {
        let est =
            srw_expected_visits(p, &o, target, None, cfg).map_err(|e| lib("visit counts", e))?;
        let oracle = to_f64(&green(p, &o, target));
        let pass = within(&est, oracle);
        push_estimate(arts, rows, label, &est, oracle, pass);
    }
    Ok(())
}

fn sim_truncated(
    arts: &mut Artifacts,
    rows: &mut Vec<String>,
    p: &TreeParams,
    t: &Rat,
    cfg: &McConfig,
) -> Result<(), ConfigError> {
    let end = End::parse(p, "0:(0)").map_err(|e| lib("end `0:(0)`", e))?;
    let set = BoundarySetT::finite(vec![end]).map_err(|e| lib("boundary set", e))?;
    let trunc =
        TruncationT::build(p, set, t.clone()).map_err(|e| lib("truncation", e))?;
    let sol = solve_hitting(&trunc).map_err(|e| lib("absorption solve", e))?;
    let o = Vertex::root();
    let y = Vertex::from_labels(p, &[1]).map_err(|e| lib("target vertex", e))?;
    let exact = truncated_green(&trunc, &sol, &o, &y).map_err(|e| lib("truncated kernel", e))?;
    let est = srw_expected_visits(p, &o, &y, Some(&trunc), cfg)
        .map_err(|e| lib("absorbed visit counts", e))?;
    let oracle = to_f64(&exact);
    let pass = within(&est, oracle);
    push_estimate(arts, rows, "sim-truncated-visits", &est, oracle, pass);

    // A target sealed off behind the frontier is never reached at all.
    let mut dead_labels = trunc.gamma()[0].labels().to_vec();
    dead_labels.push(0);
    let dead = Vertex::from_labels(p, &dead_labels).map_err(|e| lib("chopped vertex", e))?;
    let est0 = srw_expected_visits(p, &o, &dead, Some(&trunc), cfg)
        .map_err(|e| lib("absorbed visit counts", e))?;
    let pass0 = est0.mean == 0.0 && est0.variance == 0.0;
    push_estimate(arts, rows, "sim-truncated-chopped-target", &est0, 0.0, pass0);
    Ok(())
}

fn sim_weighted(
    arts: &mut Artifacts,
    rows: &mut Vec<String>,
    csv: &str,
    cfg: &McConfig,
) -> Result<(), ConfigError> {
    let tree = ConductanceTree::from_csv(csv, 2).map_err(|e| lib("conductance network", e))?;
    let f = solve_f(&tree).map_err(|e| lib("hitting solve", e))?;
    let mut targets: Vec<(String, Vec<u8>)> = vec![("sim-weighted-root".into(), Vec::new())];
    if let Some(&c) = tree.children_of(0).first() {
        targets.push(("sim-weighted-child".into(), vec![tree.label_of(c)]));
    }
    for (label, path) in &targets {
        let exact = green_weighted(&tree, &f, &[], path).map_err(|e| lib("weighted kernel", e))?;
        let est = weighted_expected_visits(&tree, &[], path, cfg)
            .map_err(|e| lib("weighted visit counts", e))?;
        let oracle = to_f64(&exact);
        let pass = within(&est, oracle);
        push_estimate(arts, rows, label, &est, oracle, pass);
    }
    Ok(())
}

fn sim_wos_measure(
    arts: &mut Artifacts,
    rows: &mut Vec<String>,
    cfg: &McConfig,
) -> Result<(), ConfigError> {
    let arc = BoundaryArc::new(1.0, 0.35 * PI).expect("valid arc");
    let est = wos_harmonic_measure(Complex64::new(0.0, 0.0), &[arc], cfg)
        .map_err(|e| lib("exit measure", e))?;
    let pass = within(&est, 0.35);
    push_estimate(arts, rows, "sim-wos-arc-from-center", &est, 0.35, pass);

    let z = Complex64::new(0.5, 0.0);
    let arc = BoundaryArc::from_chord(0.0, 0.2).expect("valid arc");
    let quad =
        adaptive_simpson(|th| poisson(z, unit(th)), -arc.half_angle, arc.half_angle, 1e-12).value
            / TAU;
    let est =
        wos_harmonic_measure(z, &[arc], cfg).map_err(|e| lib("exit measure", e))?;
    let pass = within(&est, quad);
    push_estimate(arts, rows, "sim-wos-arc-off-center", &est, quad, pass);
    Ok(())
}

fn sim_wos_green(
    arts: &mut Artifacts,
    rows: &mut Vec<String>,
    cfg: &McConfig,
) -> Result<(), ConfigError> {
    let free = wos_truncated_green_disk(Complex64::new(0.5, 0.0), None, 0.0, cfg)
        .map_err(|e| lib("free kernel walk", e))?;
    let oracle = 2f64.ln();
    let pass = (free.mean - oracle).abs() <= 1e-12 && free.variance == 0.0;
    push_estimate(arts, rows, "sim-wos-green-free", &free, oracle, pass);

    let set = BoundarySetD::from_angles(&[0.0]).map_err(|e| lib("boundary set", e))?;
    let t = 0.05;
    let z = Complex64::new(-0.3, 0.0);
    let est = wos_truncated_green_disk(z, Some(&set), t, cfg)
        .map_err(|e| lib("truncated kernel walk", e))?;
    let free_g = (1.0f64 / 0.3).ln();
    let pass = est.mean >= free_g / 18.0 - 3.0 * est.ci99 && est.mean <= free_g + 3.0 * est.ci99;
    push_estimate(arts, rows, "sim-wos-green-truncated", &est, free_g, pass);
    Ok(())
}

// ---------------------------------------------------------------------------
// disk
// ---------------------------------------------------------------------------

pub fn run_disk(
    arts: &mut Artifacts,
    eff: &mut Eff,
    battery: Option<&str>,
    samples: Option<&str>,
) -> Result<(), ConfigError> {
    let battery = eff.value("battery", battery, "all")?;
    let samples = eff.usize_value("samples", samples, "100")?;
    let all = battery == "all";
    let mut matched = false;
    if all || battery == "formulas" {
        disk_formulas(arts);
        matched = true;
    }
    if all || battery == "arc-mass" {
        disk_arc_mass(arts, samples)?;
        matched = true;
    }
    if all || battery == "blaschke" {
        disk_blaschke(arts)?;
        matched = true;
    }
    if all || battery == "boundary-integral" {
        disk_boundary_integral(arts)?;
        matched = true;
    }
    if !matched {
        return Err(ConfigError(format!("battery `{battery}` is not a disk battery")));
    }
    Ok(())
}

fn disk_grid() -> Vec<Complex64> {
    let mut zs = Vec::new();
    for (i, r) in [0.0, 0.25, 0.55, 0.85].into_iter().enumerate() {
        for j in 0..6 {
            zs.push(r * unit(TAU * (j as f64 + i as f64 / 4.0) / 6.0));
            if r == 0.0 {
                break;
            }
        }
    }
    zs
}

/// Exact-identity grids: Poisson normalization, the two Green forms, the
/// metric relation, and the horocycle–Poisson link.
fn disk_formulas(arts: &mut Artifacts) {
    let zs = disk_grid();
    let mut worst = 0.0f64;
    for r in [0.0, 0.3, 0.6, 0.9] {
        for j in 0..8 {
            let z = r * unit(TAU * j as f64 / 8.0);
            worst = worst.max((poisson_total_mass(z) - 1.0).abs());
        }
    }
    arts.check(
        "disk-poisson-normalization",
        worst <= 1e-10,
        format!("max |∫P dλ - 1| = {worst:.3e} over radii ≤ 0.9"),
    );

    let mut worst = 0.0f64;
    let mut pairs = 0usize;
    for z in &zs {
        for w in &zs {
            if (z - w).norm() < 1e-9 {
                continue;
            }
            worst = worst.max((green_disk(*z, *w) - green_hyp_form(*z, *w)).abs());
            pairs += 1;
        }
    }
    arts.check(
        "disk-green-forms-agree",
        worst <= 1e-12,
        format!("max gap {worst:.3e} over {pairs} pairs"),
    );

    let origin = Complex64::new(0.0, 0.0);
    let mut worst = 0.0f64;
    for z in &zs {
        let rho = hyperbolic_dist(origin, *z);
        worst = worst.max((1.0 - z.norm() - 2.0 / (1.0 + rho.exp())).abs());
    }
    arts.check(
        "disk-metric-relation",
        worst <= 1e-12,
        format!("max |1-|z| - 2/(1+e^ρ)| = {worst:.3e}"),
    );

    let mut worst = 0.0f64;
    for z in &zs {
        for j in 0..6 {
            let xi = unit(TAU * j as f64 / 6.0 + 0.37);
            worst = worst.max((poisson(*z, xi) - (-busemann(*z, xi)).exp()).abs());
        }
    }
    arts.check(
        "disk-horocycle-poisson",
        worst <= 1e-12,
        format!("max |P - e^(-b)| = {worst:.3e}"),
    );
}

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Random tangent-circle battery: the exit mass of the near arc matches
/// its closed form and always exceeds one third.
fn disk_arc_mass(arts: &mut Artifacts, samples: usize) -> Result<(), ConfigError> {
    let mut rng = Lcg(12345);
    let mut rows = Vec::with_capacity(samples);
    let mut all_ok = true;
    let mut max_err = 0.0f64;
    let mut min_mass = f64::INFINITY;
    for k in 0..samples {
        let theta = TAU * rng.next();
        let t = 0.01 + 0.98 * rng.next();
        let skew = if k % 2 == 1 { -1.0 + 2.0 * rng.next() } else { 0.0 };
        let zeta = unit(theta);
        let y = zeta - t * unit(theta + skew);
        let rep = arc_harmonic_mass(zeta, y).map_err(|e| lib("arc mass", e))?;
        all_ok &= rep.pass;
        max_err = max_err.max(rep.abs_err);
        min_mass = min_mass.min(rep.closed_form);
        rows.push(format!(
            "{k},{theta},{t},{},{},{},{}",
            rep.closed_form, rep.quadrature, rep.abs_err, rep.pass
        ));
    }
    arts.check(
        "disk-arc-mass-battery",
        all_ok,
        format!(
            "{samples} tangent circles: max |quadrature - closed form| = {max_err:.3e}, \
             min mass {min_mass:.6} > 1/3"
        ),
    );
    arts.table(
        "arc_mass.csv",
        "sample,zeta_angle,t,closed_form,quadrature,abs_err,pass",
        rows,
    );
    Ok(())
}

/// Zero-family moments: exact geometric split, an enclosed ζ(2), the
/// divergent harmonic family, and multiplicity weighting.
fn disk_blaschke(arts: &mut Artifacts) -> Result<(), ConfigError> {
    let geo = geometric_family_moment(40);
    let total = geo.partial + geo.tail_bound.unwrap_or(0.0);
    arts.check(
        "disk-blaschke-geometric",
        matches!(geo.verdict, DiskVerdict::Finite) && (total - 1.0).abs() <= 1e-12,
        format!("partial + tail = {total} (exactly 1 in the limit)"),
    );

    let zeta2 = std::f64::consts::PI * std::f64::consts::PI / 6.0;
    let fam = radial_family_moment(2.0, 1000);
    let hi = fam.partial + fam.tail_bound.unwrap_or(0.0);
    arts.check(
        "disk-blaschke-square-family",
        matches!(fam.verdict, DiskVerdict::Finite) && fam.partial <= zeta2 && zeta2 <= hi,
        format!("ζ(2) = {zeta2:.9} enclosed by [{:.9}, {hi:.9}]", fam.partial),
    );

    let harmonic = radial_family_moment(1.0, 4000);
    arts.check(
        "disk-blaschke-harmonic-family",
        matches!(harmonic.verdict, DiskVerdict::Divergent),
        format!("partial sum {:.3} keeps growing without bound", harmonic.partial),
    );

    let data = BlaschkeData::new(vec![(Complex64::new(0.5, 0.0), 3)])
        .map_err(|e| lib("zero family", e))?;
    arts.check(
        "disk-blaschke-multiplicity",
        (data.moment() - 1.5).abs() <= 1e-15,
        format!("triple zero at 1/2 weighs {}", data.moment()),
    );
    Ok(())
}

/// The boundary integral against a decaying cap over a finite set is
/// finite exactly when the cap decays slower than the reciprocal
/// distance.
fn disk_boundary_integral(arts: &mut Artifacts) -> Result<(), ConfigError> {
    let set = BoundarySetD::from_angles(&[0.0]).map_err(|e| lib("boundary set", e))?;
    let grid = [ratio(1, 4), ratio(1, 2), ratio(3, 4), rat(1), ratio(3, 2), rat(2)];
    let mut all_ok = true;
    let mut rows = Vec::new();
    for pexp in &grid {
        let psi = PsiSpec::power_law(rat(1), pexp.clone(), rat(2))
            .map_err(|e| lib("cap literal", e))?;
        let res = boundary_integral_disk(&psi, &set).map_err(|e| lib("cap integral", e))?;
        let want_finite = *pexp < rat(1);
        let is_finite = matches!(res.verdict, DiskVerdict::Finite);
        let ok = want_finite == is_finite;
        all_ok &= ok;
        rows.push(format!(
            "{},{},{},{},{}",
            fmt_rat(pexp),
            if is_finite { "finite" } else { "divergent" },
            res.value.map(|v| v.to_string()).unwrap_or_default(),
            res.err_est,
            res.evals
        ));
    }
    let logp = PsiSpec::log_power(rat(1), rat(1), rat(1), rat(2))
        .map_err(|e| lib("cap literal", e))?;
    let res = boundary_integral_disk(&logp, &set).map_err(|e| lib("cap integral", e))?;
    let log_ok = matches!(res.verdict, DiskVerdict::Divergent);
    all_ok &= log_ok;
    rows.push(format!(
        "1 (log power 1),{},,{},{}",
        if log_ok { "divergent" } else { "finite" },
        res.err_est,
        res.evals
    ));
    arts.check(
        "disk-boundary-integral-criterion",
        all_ok,
        format!("finite iff cap exponent < 1 on {} caps", rows.len()),
    );
    arts.table(
        "boundary_integral.csv",
        "cap_exponent,verdict,value,err_est,evals",
        rows,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// The aggregate suite for the configured structure: every battery the
/// structure supports, at the configured sizes.
pub fn run_report(arts: &mut Artifacts, eff: &mut Eff) -> Result<(), ConfigError> {
    let structure = eff.value("structure", None, "tree")?;
    match structure.as_str() {
        "tree" => {
            let q = eff.u32_value("q", None, "2")?;
            let radius = eff.usize_value("radius", None, "4")?;
            let ends = eff.str_list("ends", None, "(0)")?;
            let ts = eff.rat_list("t", None, "1/4")?;
            let extra = eff.usize_value("extra_depth", None, "3")?;
            let cfg = McConfig {
                seed: eff.u64_value("seed", None, "42")?,
                replicas: eff.usize_value("replicas", None, "4")?,
                paths_per_replica: eff.usize_value("paths", None, "1500")?,
                ..McConfig::default()
            };
            let p = TreeParams::new(q).map_err(|e| lib("tree parameters", e))?;
            let xi = End::parse(&p, &ends[0]).map_err(|e| lib("end literal", e))?;
            kernels_battery(arts, &p, radius, &xi)?;
            green_bound_battery(arts, &p, &ends, &ts, extra)?;
            let p4 = TreeParams::new(4).expect("q = 4");
            moment_battery(arts, &p4, "majorant-example", 4, &["(0)".to_string()], None)?;
            majorant_theorem_battery(arts, 4, 6)?;
            divergence_theorem_battery(arts, 2, 6)?;
            upsilon_theorem_battery(arts)?;
            let mut rows = Vec::new();
            sim_cylinder(arts, &mut rows, &p, &cfg);
            sim_visits(arts, &mut rows, &p, &cfg)?;
            arts.table("simulate.csv", "target,mean,n,ci99,oracle,bias_bound,pass", rows);
        }
        "weighted" => {
            let Some(path) = eff.optional("weights", None)? else {
                return Err(ConfigError(
                    "structure = weighted needs a `weights` file".into(),
                ));
            };
            let cfg = McConfig {
                seed: eff.u64_value("seed", None, "42")?,
                replicas: eff.usize_value("replicas", None, "4")?,
                paths_per_replica: eff.usize_value("paths", None, "1500")?,
                ..McConfig::default()
            };
            let text = fs::read_to_string(&path)
                .map_err(|e| ConfigError(format!("cannot read weights {path}: {e}")))?;
            weighted_battery(arts, &text)?;
            let mut rows = Vec::new();
            sim_weighted(arts, &mut rows, &text, &cfg)?;
            arts.table("simulate.csv", "target,mean,n,ci99,oracle,bias_bound,pass", rows);
        }
        "disk" => {
            let samples = eff.usize_value("samples", None, "100")?;
            let cfg = McConfig {
                seed: eff.u64_value("seed", None, "42")?,
                replicas: eff.usize_value("replicas", None, "4")?,
                paths_per_replica: eff.usize_value("paths", None, "1500")?,
                ..McConfig::default()
            };
            disk_formulas(arts);
            disk_arc_mass(arts, samples.min(50))?;
            disk_blaschke(arts)?;
            disk_boundary_integral(arts)?;
            let mut rows = Vec::new();
            sim_wos_measure(arts, &mut rows, &cfg)?;
            sim_wos_green(arts, &mut rows, &cfg)?;
            arts.table("simulate.csv", "target,mean,n,ci99,oracle,bias_bound,pass", rows);
        }
        _ => unreachable!("validated token"),
    }
    Ok(())
}

/// Exact checks on a conductance network: transience, reversibility, and
/// the conditioning summary.
fn weighted_battery(arts: &mut Artifacts, csv: &str) -> Result<(), ConfigError> {
    let tree = ConductanceTree::from_csv(csv, 2).map_err(|e| lib("conductance network", e))?;
    let f = solve_f(&tree).map_err(|e| lib("hitting solve", e))?;
    let cond = tree.condition_report();
    arts.check(
        "weighted-transient",
        *f.delta() < rat(1),
        format!(
            "max directed hitting value {} < 1 on {} core vertices (m ∈ [{}, {}], min conductance {})",
            fmt_rat(f.delta()),
            cond.core_vertices,
            fmt_rat(&cond.m_min),
            fmt_rat(&cond.m_max),
            fmt_rat(&cond.a_min)
        ),
    );
    let mut reversible = true;
    let mut pairs = 0usize;
    let mut addr: Vec<Vec<u8>> = vec![Vec::new()];
    for &c in tree.children_of(0) {
        addr.push(vec![tree.label_of(c)]);
    }
    for x in &addr {
        for y in &addr {
            if x == y {
                continue;
            }
            let xi = tree.resolve(x).expect("core address");
            let yi = tree.resolve(y).expect("core address");
            let gxy = green_weighted(&tree, &f, x, y).map_err(|e| lib("weighted kernel", e))?;
            let gyx = green_weighted(&tree, &f, y, x).map_err(|e| lib("weighted kernel", e))?;
            if tree.total_conductance(xi) * gxy != tree.total_conductance(yi) * gyx {
                reversible = false;
            }
            pairs += 1;
        }
    }
    arts.check(
        "weighted-reversible",
        reversible,
        format!("m(x)·G(x,y) = m(y)·G(y,x) on {pairs} ordered pairs"),
    );
    let mut rows = Vec::new();
    for x in &addr {
        let g = green_weighted(&tree, &f, &[], x).map_err(|e| lib("weighted kernel", e))?;
        let name = if x.is_empty() {
            "o".to_string()
        } else {
            x.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("/")
        };
        rows.push(format!("{name},{}", rat_cols(&g)));
    }
    arts.table("weighted.csv", "vertex,green_num,green_den,green_dec", rows);
    Ok(())
}
