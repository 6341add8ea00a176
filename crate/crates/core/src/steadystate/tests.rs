use super::*;
use crate::models::{builtin, BUILTIN_IDS};
use crate::sampling::sample_params;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

fn rk4(model: &dyn ModelSystem, x0: &[f64], p: &[f64], dt: f64, steps: usize) -> Vec<f64> {
    let add = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let k1 = model.rhs(&x, p).unwrap();
        let k2 = model.rhs(&add(&x, &k1, dt / 2.0), p).unwrap();
        let k3 = model.rhs(&add(&x, &k2, dt / 2.0), p).unwrap();
        let k4 = model.rhs(&add(&x, &k3, dt), p).unwrap();
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

#[test]
fn newton_positive_states_match_reduction_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for id in BUILTIN_IDS {
        let m = builtin(id).unwrap();
        for _ in 0..40 {
            let p = sample_params(m.as_ref(), &mut rng);
            let red = reduction(m.as_ref(), &p).unwrap().unwrap();
            if red.degenerate {
                continue;
            }
            let states = enumerate(m.as_ref(), &p).unwrap();
            let newton_pos: Vec<&SteadyState> = states.iter().filter(|s| s.is_positive()).collect();
            let red_pos = red.positive_states();
            assert_eq!(newton_pos.len(), red_pos.len(), "{id} {p:?}");
            for x in red_pos {
                let f = m.rhs(x, p.values()).unwrap();
                assert!(inf_norm(&f) <= 1e-8 * scale(x), "{id}: residual {f:?}");
                assert!(newton_pos.iter().any(|s| close(&s.x, x, 1e-6)), "{id}: {x:?}");
            }
        }
    }
}

#[test]
fn dfe_always_enumerated_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for id in BUILTIN_IDS {
        let m = builtin(id).unwrap();
        let p = sample_params(m.as_ref(), &mut rng);
        let states = enumerate(m.as_ref(), &p).unwrap();
        let x0 = m.dfe(p.values()).unwrap();
        assert!(close(&states[0].x, &x0, 1e-9), "{id}");
    }
}

#[test]
fn truncated_model_has_boundary_state() {
    let m = builtin("hepc3d-truncated").unwrap();
    let p = m.defaults().unwrap().with("r_I", 2.0).unwrap();
    let g = |n: &str| p.get(n).unwrap();
    let (tm, r_i, delta) = (g("T_max"), g("r_I"), g("delta"));
    let expect = [0.0, tm * (r_i - delta) / r_i, tm * g("rho") * g("R_star") * (r_i - delta) / (g("c") * r_i)];
    let f = m.rhs(&expect, p.values()).unwrap();
    assert!(inf_norm(&f) < 1e-12);
    let states = enumerate(m.as_ref(), &p).unwrap();
    let hit = states.iter().find(|s| close(&s.x, &expect, 1e-7)).expect("boundary state");
    assert_eq!(hit.positivity, Positivity::Boundary);
    let red = hepc_x_reduction(&p).unwrap();
    assert!(red.roots.iter().any(|r| r.abs() < 1e-9));
}

#[test]
fn stability_agrees_with_time_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let m = builtin("brauer2d").unwrap();
    let mut checked = 0;
    for _ in 0..30 {
        let p = sample_params(m.as_ref(), &mut rng);
        for st in enumerate(m.as_ref(), &p).unwrap() {
            if st.stability == Stability::Nonhyperbolic || st.positivity == Positivity::Infeasible {
                continue;
            }
            let lead = st.max_real_eigenvalue();
            let t_end = 40.0 / lead.abs().max(0.05);
            let dt = 0.01_f64.min(t_end / 2000.0);
            let steps = (t_end / dt) as usize;
            let kick: Vec<f64> = st.x.iter().map(|v| v + 1e-4 * (1.0 + v)).collect();
            let end = rk4(m.as_ref(), &kick, p.values(), dt, steps.min(200_000));
            let dist = end.iter().zip(&st.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            match st.stability {
                Stability::Stable => assert!(dist < 1e-5, "stable state drifted {dist}"),
                Stability::Unstable => assert!(dist > 1e-3, "unstable state held {dist}"),
                Stability::Nonhyperbolic => unreachable!(),
            }
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn brauer_backward_case_has_two_positive_states() {
    let m = builtin("brauer2d").unwrap();
    // just below threshold, past the a = 0 point in gamma
    let (mu, gamma, sigma, phi, theta, k) = (0.1, 10.0, 0.1, 0.5, 0.1, 10.0);
    let beta_star = (mu + theta + phi) * (mu + gamma) / ((mu + theta + sigma * phi) * k);
    let p = m
        .params(vec![beta_star * 0.97, k, mu, gamma, sigma, phi, theta])
        .unwrap();
    let red = brauer_quadratic(m.as_ref(), &p).unwrap();
    assert_eq!(red.admissible_roots().len(), 2);
    let states = enumerate(m.as_ref(), &p).unwrap();
    let pos: Vec<_> = states.iter().filter(|s| s.is_positive()).collect();
    assert_eq!(pos.len(), 2);
    assert_eq!(pos.iter().filter(|s| s.stability == Stability::Stable).count(), 1);
    let audit = parity_audit(m.as_ref(), &p).unwrap();
    assert!(audit.r0 < 1.0);
    assert_eq!(audit.parity_ok, Some(true));
}

#[test]
fn parity_holds_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for id in ["brauer2d", "brauer3d", "martcheva5d", "hepc3d"] {
        let m = builtin(id).unwrap();
        let mut decided = 0;
        for _ in 0..100 {
            let p = sample_params(m.as_ref(), &mut rng);
            let a = parity_audit(m.as_ref(), &p).unwrap();
            if let Some(ok) = a.parity_ok {
                assert!(ok, "{id}: {a:?} {p:?}");
                decided += 1;
            }
            if let Some(h) = a.hepc_feasibility {
                if a.count > 0 {
                    assert!(h > 0.0);
                }
            }
        }
        assert!(decided > 50, "{id}: only {decided} decided");
    }
}

#[test]
fn truncated_model_abstains_from_parity() {
    let m = builtin("hepc3d-truncated").unwrap();
    let a = parity_audit(m.as_ref(), &m.defaults().unwrap()).unwrap();
    assert!(a.abstained && a.parity_ok.is_none());
}

#[test]
fn brauer3d_reduction_uses_total_population() {
    let m = builtin("brauer3d").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..20 {
        let p = sample_params(m.as_ref(), &mut rng);
        let red = brauer_quadratic(m.as_ref(), &p).unwrap();
        for c in &red.candidates {
            let f = m.rhs(&c.x, p.values()).unwrap();
            assert!(inf_norm(&f) <= 1e-9 * scale(&c.x));
        }
    }
}

#[test]
fn classification_thresholds() {
    let c = C64::new;
    assert_eq!(stability_of(&[c(-1.0, 0.0), c(-0.1, 2.0)], 1.0), Stability::Stable);
    assert_eq!(stability_of(&[c(-1.0, 0.0), c(0.1, 0.0)], 1.0), Stability::Unstable);
    assert_eq!(stability_of(&[c(-1.0, 0.0), c(1e-12, 0.0)], 1.0), Stability::Nonhyperbolic);
    assert_eq!(positivity(&[1.0, 2.0]), Positivity::Positive);
    assert_eq!(positivity(&[0.0, 2.0]), Positivity::Boundary);
    assert_eq!(positivity(&[-0.1, 2.0]), Positivity::Infeasible);
}
