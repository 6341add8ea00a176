//! End-to-end checks through the public API.

use backbif::bifcoeffs::{coefficients, CoeffOptions};
use backbif::models::UserModel;
use backbif::recipes::solve_threshold;
use backbif::sampling::sample_params;
use backbif::steadystate::{enumerate, reduction};
use backbif::verify::closed_form_r0;
use backbif::{builtin, ngm, ModelSystem, ParamMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The built-in vaccination model written out as a user model.
const BRAUER_JSON: &str = r#"{
  "id": "brauer-user",
  "states": ["S", "I", "V"],
  "params": ["Lambda", "beta", "mu", "gamma", "sigma", "phi", "theta"],
  "infected": ["I"],
  "rhs": [
    "Lambda - beta*S*I - (mu + phi)*S + gamma*I + theta*V",
    "beta*S*I + sigma*beta*V*I - (mu + gamma)*I",
    "phi*S - sigma*beta*V*I - (mu + theta)*V"
  ],
  "dfe": [
    "(mu + theta)*Lambda/(mu*(mu + phi + theta))",
    "0",
    "phi*Lambda/(mu*(mu + phi + theta))"
  ],
  "new_infections": ["beta*S*I + sigma*beta*V*I"],
  "nonnegative": ["sigma"],
  "bounds": {"sigma": [0, 1]}
}"#;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn user_model_reproduces_builtin_coefficients() {
    let user = UserModel::from_json(BRAUER_JSON).unwrap();
    let built = builtin("brauer3d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = solve_threshold(built.as_ref(), &sample_params(built.as_ref(), &mut rng), "beta").unwrap();
        let q = ParamMap::new(user.param_names().clone(), p.values().to_vec()).unwrap();
        let a = coefficients(built.as_ref(), &p, "beta", "sigma", CoeffOptions::default()).unwrap();
        let b = coefficients(&user, &q, "beta", "sigma", CoeffOptions::default()).unwrap();
        assert!(rel(b.a, a.a) <= 1e-6, "{} vs {}", b.a, a.a);
        assert!(rel(b.b, a.b) <= 1e-6, "{} vs {}", b.b, a.b);
        assert!(rel(ngm::r0(&user, &q).unwrap().r0, 1.0) <= 1e-9);
    }
}

#[test]
fn user_model_rejects_out_of_bounds_sigma() {
    let user = UserModel::from_json(BRAUER_JSON).unwrap();
    let p = user.params(vec![1.0, 0.05, 0.1, 1.0, 1.5, 0.5, 0.1]).unwrap();
    assert!(ngm::r0(&user, &p).is_err());
}

#[test]
fn threshold_solve_hits_r0_one_for_every_builtin() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for id in ["brauer2d", "brauer3d", "martcheva5d"] {
        let m = builtin(id).unwrap();
        for _ in 0..20 {
            let p = solve_threshold(m.as_ref(), &sample_params(m.as_ref(), &mut rng), "beta").unwrap();
            assert!((ngm::r0(m.as_ref(), &p).unwrap().r0 - 1.0).abs() <= 1e-10, "{id}");
        }
    }
}

fn brauer2d_params() -> impl Strategy<Value = Vec<f64>> {
    (0.01..2.0f64, 1.0..50.0f64, 0.05..0.5f64, 0.1..3.0f64, 0.0..1.0f64, 0.05..3.0f64, 0.05..3.0f64)
        .prop_map(|(b, k, m, g, s, f, t)| vec![b, k, m, g, s, f, t])
}

fn hepc_params() -> impl Strategy<Value = Vec<f64>> {
    (
        (0.1..2.0f64, 0.5..3.0f64, 1.0..5.0f64, 0.1..0.5f64, 0.1..2.0f64),
        (0.1..2.0f64, 0.1..2.0f64, 0.5..2.0f64, 0.1..1.0f64),
    )
        .prop_map(|((s, rt, tm, d, b), (c, rho, rs, ri))| {
            let p0 = (rt - d + ((rt - d).powi(2) + 4.0 * s * rt / tm).sqrt()) * tm / (2.0 * rt);
            // delta above the analysis floor r_I (1 - p0 / T_max)
            let delta = ri * (1.0 - p0 / tm).max(0.0) + 0.2;
            vec![s, rt, tm, d, b, c, delta, rho, rs, ri]
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hepc_r0_matches_closed_form(v in hepc_params()) {
        let m = builtin("hepc3d").unwrap();
        let p = m.params(v).unwrap();
        prop_assume!(m.check_analysis(p.values()).is_ok());
        let got = ngm::r0(m.as_ref(), &p).unwrap().r0;
        prop_assert!(rel(got, closed_form_r0("hepc3d", &p).unwrap()) <= 1e-9);
    }

    #[test]
    fn brauer_states_are_steady_and_match_the_quadratic(v in brauer2d_params()) {
        let m = builtin("brauer2d").unwrap();
        let p = m.params(v).unwrap();
        let states = enumerate(m.as_ref(), &p).unwrap();
        for s in &states {
            let f = m.rhs(&s.x, p.values()).unwrap();
            let scale = 1.0 + s.x.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            prop_assert!(f.iter().all(|r| r.abs() <= 1e-9 * scale));
        }
        let red = reduction(m.as_ref(), &p).unwrap().unwrap();
        let positive = states.iter().filter(|s| s.is_positive()).count();
        prop_assert_eq!(positive, red.positive_states().len());
    }
}
