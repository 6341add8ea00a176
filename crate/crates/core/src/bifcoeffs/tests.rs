use super::*;
use crate::models::{builtin, hepc_dfe_quantities};
use crate::sampling::sample_params;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// hepc parameters with R0 = 1 (delta from the threshold identity).
fn hepc_at_threshold(p: &ParamMap) -> ParamMap {
    let q = hepc_dfe_quantities(p).unwrap();
    let g = |n: &str| p.get(n).unwrap();
    let delta = g("b") * g("rho") * g("R_star") / (g("b") + g("c")) + g("r_I") * (1.0 - q.p0 / g("T_max"));
    p.with("delta", delta).unwrap()
}

/// hepc parameters with R0 = 1 and a = 0, rho above the feasibility limit by `factor`.
fn hepc_a_zero(p: &ParamMap, factor: f64) -> ParamMap {
    let q = hepc_dfe_quantities(p).unwrap();
    let g = |n: &str| p.get(n).unwrap();
    let (b, c, rs) = (g("b"), g("c"), g("R_star"));
    let rho = factor * (b + c) * (q.a11 - q.a12) / (b * rs);
    let den = (b + c) * (q.a12 - q.a11) + b * rho * rs;
    let r_i = g("T_max") / q.p0 * b * rho * rs * c * q.a11 / ((b + c) * den);
    let p = p.with("rho", rho).unwrap().with("r_I", r_i).unwrap();
    hepc_at_threshold(&p)
}

fn admissible(p: &ParamMap) -> bool {
    builtin("hepc3d").unwrap().check_analysis(p.values()).is_ok()
}

/// Random hepc parameters at R0 = 1.
fn draw_hepc_threshold(rng: &mut ChaCha8Rng) -> ParamMap {
    let m = builtin("hepc3d").unwrap();
    loop {
        let p = hepc_at_threshold(&sample_params(m.as_ref(), rng));
        if admissible(&p) {
            return p;
        }
    }
}

/// Random hepc parameters at R0 = 1 and a = 0.
fn draw_hepc_a_zero(rng: &mut ChaCha8Rng, factor: std::ops::Range<f64>) -> ParamMap {
    let m = builtin("hepc3d").unwrap();
    loop {
        let base = sample_params(m.as_ref(), rng);
        let p = hepc_a_zero(&base, rng.random_range(factor.clone()));
        if admissible(&p) {
            return p;
        }
    }
}

/// Unnormalized hepc null vectors and the factor mapping coefficients between normalizations.
struct HepcClosedVectors {
    v: [f64; 3],
    w: [f64; 3],
    /// v.w
    n: f64,
    /// largest infected component of w
    m: f64,
}

fn hepc_closed_vectors(p: &ParamMap) -> HepcClosedVectors {
    let q = hepc_dfe_quantities(p).unwrap();
    let g = |n: &str| p.get(n).unwrap();
    let (b, c, r) = (g("b"), g("c"), g("rho") * g("R_star"));
    let v = [0.0, b + c, b];
    let w = [-q.a12 * (b + c) - b * r, q.a11 * (b + c), q.a11 * r];
    let n = v[1] * w[1] + v[2] * w[2];
    HepcClosedVectors { v, w, n, m: w[1].max(w[2]) }
}

#[test]
fn hepc_null_pair_and_a_b_match_closed_forms() {
    let m = builtin("hepc3d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..30 {
        let p = draw_hepc_threshold(&mut rng);
        let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
        let pp = hepc_closed_vectors(&p);
        let pair = pt.pair();
        for i in 0..3 {
            assert!((pair.w[i] - pp.w[i] / pp.m).abs() < 1e-7 * (1.0 + pair.w[i].abs()));
            assert!((pair.v[i] - pp.v[i] * pp.m / pp.n).abs() < 1e-7 * (1.0 + pair.v[i].abs()));
        }
        assert!(pair.relative_residual() < 1e-10);
        let q = hepc_dfe_quantities(&p).unwrap();
        let g = |n: &str| p.get(n).unwrap();
        let (b, c, r) = (g("b"), g("c"), g("rho") * g("R_star"));
        let a_cf = q.a11
            * (b + c)
            * ((b + c) * ((b + c) * (q.a12 - q.a11) + b * r) * g("r_I") / g("T_max")
                - b * r * c * q.a11 / q.p0);
        let (a, scale) = pt.a().unwrap();
        assert!((a - a_cf / (pp.n * pp.m)).abs() <= 1e-6 * scale.max(a.abs()), "{a}");
        let b_cf = b * g("R_star") * q.a11 * (b + c);
        assert!(rel(pt.b("rho").unwrap(), b_cf / pp.n) < 1e-7);
    }
}

#[test]
fn hepc_c_matches_second_and_third_order_closed_forms() {
    let m = builtin("hepc3d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let p = draw_hepc_a_zero(&mut rng, 1.05..3.0);
        let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
        let (a, scale) = pt.a().unwrap();
        assert!(a.abs() <= 1e-8 * scale, "a = {a}, scale = {scale}");
        let (c, c3, c2) = pt.c(TOL_A).unwrap();
        let pp = hepc_closed_vectors(&p);
        let q = hepc_dfe_quantities(&p).unwrap();
        let g = |n: &str| p.get(n).unwrap();
        let (b, cc, r, r_i, r_t, tm) = (
            g("b"),
            g("c"),
            g("rho") * g("R_star"),
            g("r_I"),
            g("r_T"),
            g("T_max"),
        );
        let [w1, w2, w3] = pp.w;
        let c3p = 2.0 / (q.p0 * q.p0) * b * cc * (b + cc) * q.a11 * q.a11 * r
            * ((q.a11 - q.a12) * (b + cc) - b * r);
        let bb = (2.0 * r_t / tm * w1 * w1 + 2.0 * r_t / tm * w1 * w2
            - 2.0 * b * cc / ((b + cc) * q.p0) * w2 * w3)
            / q.a11;
        let cb = -2.0 * b / ((b + cc) * q.p0) * w2 * w3;
        let c2p = (b + cc) * ((b + cc) * r_i / tm * q.a11 * bb + b * cc * q.a11 / q.p0 * cb);
        let k = pp.n * pp.m * pp.m;
        assert!(c3p < 0.0);
        assert!(rel(c3, c3p / k) < 1e-6, "c3 {c3} vs {}", c3p / k);
        assert!(rel(c2, c2p / k) < 1e-6, "c2 {c2} vs {}", c2p / k);
        assert!(rel(c, (c2p + c3p) / k) < 1e-5);
    }
}

#[test]
fn hepc_theorem4_point_reference_values() {
    // reference values from an independent symbolic computation
    let m = builtin("hepc3d").unwrap();
    let base = m
        .params_from(&[
            ("s", 0.7),
            ("r_T", 1.3),
            ("T_max", 2.0),
            ("d", 0.4),
            ("b", 0.9),
            ("c", 1.1),
            ("delta", 1.0),
            ("rho", 1.0),
            ("R_star", 1.0),
            ("r_I", 1.0),
        ])
        .unwrap();
    let p = hepc_a_zero(&base, 1.05);
    assert!(rel(p.get("r_I").unwrap(), 19.31) < 1e-3);
    assert!(rel(p.get("delta").unwrap(), 0.9603) < 1e-3);
    let co = coefficients(m.as_ref(), &p, "rho", "r_I", CoeffOptions::default()).unwrap();
    assert!(co.a_is_zero);
    assert!(rel(co.c.unwrap(), -1.045) < 2e-3, "{:?}", co.c);
    assert!(rel(co.e.unwrap(), -0.1328) < 2e-3, "{:?}", co.e);
    assert!(rel(co.e_contraction.unwrap(), 0.0045) < 2e-2, "{:?}", co.e_contraction);
    assert!(co.fuualpha1_contraction.abs() < 1e-9);
    assert!(co.d_contraction.abs() > 1e-3);
    assert!(co.c_kernel_sensitivity.unwrap() <= 1e-7 * co.c.unwrap().abs() + 1e-10);
    let cl = classify(&co).unwrap();
    // c < 0 and e < 0: forward for alpha2 > 0, two states below threshold for alpha2 < 0
    assert!(cl.flags.contains(&BifClass::UnfoldedForward));
    assert!(!cl.flags.contains(&BifClass::TwoStatesBelowThreshold));
}

#[test]
fn truncated_c_vanishes_at_a_zero() {
    let m = builtin("hepc3d-truncated").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..10 {
        let p = sample_params(m.as_ref(), &mut rng);
        let g = |n: &str| p.get(n).unwrap();
        let (b, c) = (g("b"), g("c"));
        let p = p
            .with("r_I", c * g("r_T") / (b + c))
            .unwrap()
            .with("delta", b * g("rho") * g("R_star") / (b + c))
            .unwrap();
        let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
        let (a, scale) = pt.a().unwrap();
        assert!(a.abs() <= TOL_A * scale, "a = {a}, scale = {scale}, {p:?} {:?}", pt.pair());
        let (cv, c3, c2) = pt.c(TOL_A).unwrap();
        assert!(cv.abs() <= 1e-6 * c3.abs(), "{cv} {c3} {c2}");
    }
}

fn brauer3d_threshold(p: &ParamMap) -> ParamMap {
    let g = |n: &str| p.get(n).unwrap();
    let k = g("Lambda") / g("mu");
    let beta = (g("mu") + g("theta") + g("phi")) * (g("mu") + g("gamma"))
        / ((g("mu") + g("theta") + g("sigma") * g("phi")) * k);
    p.with("beta", beta).unwrap()
}

fn brauer3d_a_zero(p: &ParamMap) -> Option<ParamMap> {
    let g = |n: &str| p.get(n).unwrap();
    let (mu, th, si, ph) = (g("mu"), g("theta"), g("sigma"), g("phi"));
    if si <= 0.0 || si >= 1.0 {
        return None;
    }
    let gamma = (si * si * ph * ph + si * ph * (mu + 2.0 * th + si * mu) + (mu + th).powi(2))
        / (si * ph * (1.0 - si));
    Some(brauer3d_threshold(&p.with("gamma", gamma).unwrap()))
}

#[test]
fn brauer3d_pair_and_a() {
    let m = builtin("brauer3d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..50 {
        let p = brauer3d_threshold(&sample_params(m.as_ref(), &mut rng));
        let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
        let x0 = pt.dfe().to_vec();
        let g = |n: &str| p.get(n).unwrap();
        let e = (g("gamma") - g("beta") * x0[0] - g("theta")) / (g("mu") + g("phi") + g("theta"));
        let w = &pt.pair().w;
        let v = &pt.pair().v;
        assert!((w[0] - e).abs() < 1e-7 * (1.0 + e.abs()));
        assert!((w[1] - 1.0).abs() < 1e-12);
        assert!((w[2] + 1.0 + e).abs() < 1e-7 * (1.0 + e.abs()));
        assert!(v[0].abs() < 1e-9 && v[2].abs() < 1e-9 && (v[1] - 1.0).abs() < 1e-9);
        let a = pt.a().unwrap().0;
        let expect = g("beta") * (e * (1.0 - g("sigma")) - g("sigma"));
        assert!((a - expect).abs() < 1e-7 * (1.0 + expect.abs()), "{a} vs {expect}");
        let s1 = BifurcationPoint::new(m.as_ref(), &brauer3d_threshold(&p.with("sigma", 1.0).unwrap()))
            .unwrap();
        assert!(s1.a().unwrap().0 < 0.0);
    }
}

#[test]
fn brauer3d_c_negative_at_a_zero() {
    let m = builtin("brauer3d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut n = 0;
    while n < 30 {
        let Some(p) = brauer3d_a_zero(&sample_params(m.as_ref(), &mut rng)) else {
            continue;
        };
        n += 1;
        let co = coefficients(m.as_ref(), &p, "beta", "sigma", CoeffOptions::default()).unwrap();
        assert!(co.a_is_zero, "{} {}", co.a, co.a_scale);
        let g = |n: &str| p.get(n).unwrap();
        let c = co.c.unwrap();
        let expect = -2.0 * g("beta").powi(2) * g("sigma") / (g("phi") + g("mu") + g("theta"));
        assert!(c < 0.0);
        assert!(rel(c, expect) < 1e-6, "{c} vs {expect}");
        assert!(co.e_nonzero.unwrap());
        assert!(co.fuualpha1_contraction.abs() < 1e-9);
    }
}

fn martcheva_expr47(p: &ParamMap) -> f64 {
    let g = |n: &str| p.get(n).unwrap();
    let (lam, d, mu, psi, si, dl, ga, eta, w) = (
        g("Lambda"),
        g("D"),
        g("mu"),
        g("psi"),
        g("sigma"),
        g("delta"),
        g("gamma"),
        g("eta"),
        g("w"),
    );
    -lam * (mu + si * psi) / (d * mu * (mu + psi))
        - dl * (mu + ga) / (eta * (mu + si * psi)) * psi * si * si / mu
        + dl / (eta * (mu + psi)) * (-mu - ga + w / (mu + w) * ga * (mu + si * psi) / mu)
}

fn martcheva_threshold(p: &ParamMap) -> ParamMap {
    let g = |n: &str| p.get(n).unwrap();
    let s0 = g("Lambda") / (g("mu") + g("psi"));
    let v0 = s0 * g("psi") / g("mu");
    let beta = g("D") * g("delta") * (g("mu") + g("gamma")) / (g("eta") * (s0 + g("sigma") * v0));
    p.with("beta", beta).unwrap()
}

/// Lambda from the linear equation expr47 = 0, if positive.
fn martcheva_a_zero(p: &ParamMap) -> Option<ParamMap> {
    let k0 = martcheva_expr47(&p.with("Lambda", 0.0).unwrap());
    let k1 = martcheva_expr47(&p.with("Lambda", 1.0).unwrap()) - k0;
    let lam = -k0 / k1;
    (lam > 0.0).then(|| martcheva_threshold(&p.with("Lambda", lam).unwrap()))
}

#[test]
fn martcheva_a_zero_points() {
    let m = builtin("martcheva5d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let mut found = 0;
    for _ in 0..2000 {
        let mut p = sample_params(m.as_ref(), &mut rng);
        // the construction needs sigma psi fixed and a large gamma to reach a > 0
        let mu = p.get("mu").unwrap();
        let w = p.get("w").unwrap();
        let si = rng.random_range(0.01..0.3);
        p.set("sigma", si).unwrap();
        p.set("psi", 2.0 * mu * (mu + w) / (si * w)).unwrap();
        p.set("gamma", rng.random_range(1.0..10.0)).unwrap();
        let Some(p) = martcheva_a_zero(&p) else { continue };
        let Ok(co) = coefficients(m.as_ref(), &p, "eta", "sigma", CoeffOptions::default()) else {
            continue;
        };
        found += 1;
        assert!(co.a_is_zero, "a = {} scale {}", co.a, co.a_scale);
        assert!(co.b > 0.0);
        let c3 = co.c3.unwrap();
        let c = co.c.unwrap();
        assert!(c3.abs() <= 1e-8 * (1.0 + c.abs()), "c3 = {c3}");
        assert!(c <= 1e-9, "Lemma: c = {c}");
        assert!(co.fuualpha1_contraction.abs() < 1e-9);
        let x0 = &co.dfe;
        let g = |n: &str| p.get(n).unwrap();
        let wv = &co.w;
        let lhs = (wv[0] + g("sigma") * wv[1]) / wv[4];
        let rhs = (x0[0] + g("sigma") * x0[1]) / g("D");
        assert!(rel(lhs, rhs) < 1e-6);
        if found >= 30 {
            break;
        }
    }
    assert!(found >= 30, "found {found}");
}

#[test]
fn martcheva_pair_structure_and_sign_of_a() {
    let m = builtin("martcheva5d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..50 {
        let p = martcheva_threshold(&sample_params(m.as_ref(), &mut rng));
        let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
        let (v, w) = (&pt.pair().v, &pt.pair().w);
        let g = |n: &str| p.get(n).unwrap();
        assert!(w[2] > 0.0 && w[3] > 0.0 && w[4] > 0.0);
        for i in [0, 1, 3] {
            assert!(v[i].abs() < 1e-9 * v[4].abs());
        }
        assert!(rel(v[2] / v[4], g("eta") / (g("mu") + g("gamma"))) < 1e-8);
        let x0 = pt.dfe();
        let crit = w[0] + g("sigma") * w[1] - (x0[0] + g("sigma") * x0[1]) / g("D") * w[4];
        let (a, _) = pt.a().unwrap();
        assert_eq!(a.signum(), crit.signum());
        assert!(pt.b("eta").unwrap() > 0.0);
        assert!(matches!(pt.b("Lambda"), Err(Error::InvalidBifurcationParam(_))));
    }
}

#[test]
fn errors_off_threshold_and_for_nonzero_a() {
    let m = builtin("hepc3d").unwrap();
    let p = m.defaults().unwrap();
    assert!(matches!(
        null_pair(m.as_ref(), &p),
        Err(Error::NoZeroEigenvalue { .. })
    ));
    let p = hepc_at_threshold(&p);
    let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
    assert!(pt.a().unwrap().0.abs() > 1e-3);
    assert!(matches!(pt.c(TOL_A), Err(Error::NonzeroA(_))));
    let co = coefficients(m.as_ref(), &p, "rho", "r_I", CoeffOptions::default()).unwrap();
    assert!(co.c.is_none());
    assert!(matches!(coeff_e(m.as_ref(), &p, "rho", "r_I"), Err(Error::NonzeroA(_))));
}

#[test]
fn double_zero_is_rejected() {
    let m = crate::models::UserModel::from_json(
        r#"{"id":"dbl","states":["x","y"],"params":["k"],"infected":["x","y"],
            "rhs":["k*x*x","k*y*y"],"dfe":["0","0"],"new_infections":["k*x*x","k*y*y"]}"#,
    )
    .unwrap();
    let p = m.params(vec![1.0]).unwrap();
    assert!(matches!(BifurcationPoint::new(&m, &p), Err(Error::NonSimpleZero)));
}

fn coeffs(a: f64, b: f64, c: f64, e: f64) -> CenterCoefficients {
    CenterCoefficients {
        alpha1: "p".into(),
        alpha2: "q".into(),
        a,
        a_scale: 1.0,
        a_is_zero: a.abs() <= TOL_A,
        b,
        c: Some(c),
        c3: Some(c),
        c2: Some(0.0),
        c_kernel_sensitivity: Some(0.0),
        c_is_zero: Some(c == 0.0),
        d: Some(0.0),
        d_contraction: 0.0,
        fuualpha1: Some(0.0),
        fuualpha1_contraction: 0.0,
        fualpha2: 0.0,
        e: Some(e),
        e_contraction: Some(e),
        e_tolerance: Some(1e-6),
        e_nonzero: Some(e.abs() > 1e-6),
        e_sufficient_condition: Some(false),
        v: vec![],
        w: vec![],
        dfe: vec![],
        null_residual: 0.0,
    }
}

#[test]
fn classification_table() {
    assert_eq!(classify(&coeffs(0.5, 1.0, 1.0, 1.0)).unwrap().primary, BifClass::Backward);
    assert_eq!(classify(&coeffs(-0.5, 1.0, 1.0, 1.0)).unwrap().primary, BifClass::Forward);
    let below = classify(&coeffs(0.0, 1.0, -1.0, 1.0)).unwrap();
    assert_eq!(
        below.flags,
        vec![BifClass::UnfoldedBackward, BifClass::TwoStatesBelowThreshold]
    );
    let above = classify(&coeffs(0.0, 1.0, 1.0, 1.0)).unwrap();
    assert_eq!(
        above.flags,
        vec![BifClass::UnfoldedForward, BifClass::TwoStatesAboveThreshold]
    );
    assert_eq!(
        classify(&coeffs(0.0, 1.0, 1.0, 1e-9)).unwrap().primary,
        BifClass::Degenerate
    );
    assert!(matches!(
        classify(&coeffs(0.0, -1.0, 1.0, 1.0)),
        Err(Error::HypothesisViolated(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Under (v/l, l w) the coefficients follow a -> l a, b -> b, c -> l^2 c,
    /// d -> l d, e -> e / l, and the normalized pipeline is unaffected.
    #[test]
    fn scaling_laws(seed in 0u64..10_000, lambda in 0.2f64..5.0) {
        let m = builtin("hepc3d").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = draw_hepc_a_zero(&mut rng, 1.1..3.0);
        let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
        let co = coefficients_at(&pt, "rho", "r_I", CoeffOptions::default()).unwrap();
        let pair = pt.pair().clone();
        let scaled = NullPair::unnormalized(
            pair.a.clone(),
            pair.v.iter().map(|x| x / lambda).collect(),
            pair.w.iter().map(|x| x * lambda).collect(),
        );
        let spt = BifurcationPoint::with_pair(m.as_ref(), &p, scaled).unwrap();
        let sc = coefficients_at(&spt, "rho", "r_I", CoeffOptions::default()).unwrap();
        prop_assert!((sc.a - lambda * co.a).abs() <= 1e-9 * co.a_scale * lambda + 1e-15);
        prop_assert!(rel(sc.b, co.b) < 1e-9);
        prop_assert!(rel(sc.c.unwrap(), lambda * lambda * co.c.unwrap()) < 1e-7);
        prop_assert!(rel(sc.d.unwrap(), lambda * co.d.unwrap()) < 1e-7);
        prop_assert!(rel(sc.e.unwrap(), co.e.unwrap() / lambda) < 1e-6);
        let renorm = NullPair::from_vectors(
            pair.a.clone(),
            m.infected(),
            &pair.v.iter().map(|x| x * 3.0 / lambda).collect::<Vec<_>>(),
            &pair.w.iter().map(|x| -x * lambda).collect::<Vec<_>>(),
        ).unwrap();
        for i in 0..3 {
            prop_assert!((renorm.w[i] - pair.w[i]).abs() < 1e-12 * (1.0 + pair.w[i].abs()));
        }
    }

    /// Shifting the pseudo-solve solution along the kernel leaves c unchanged when a = 0.
    #[test]
    fn kernel_shift_invariance(seed in 0u64..10_000, tau in -1.0f64..1.0) {
        let m = builtin("hepc3d").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = draw_hepc_a_zero(&mut rng, 1.1..3.0);
        let pt = BifurcationPoint::new(m.as_ref(), &p).unwrap();
        let (c, _, _) = pt.c(TOL_A).unwrap();
        let cs = pt.c_kernel_shift(tau, TOL_A).unwrap();
        prop_assert!((cs - c).abs() <= 1e-7 * c.abs() + 1e-10);
    }
}

