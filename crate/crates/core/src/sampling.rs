//! Random admissible parameter draws for the built-in models.

use rand::Rng;

use crate::models::{hepc_dfe_quantities, ModelSystem};
use crate::params::ParamMap;

fn ranges(id: &str) -> Option<&'static [(&'static str, f64, f64)]> {
    Some(match id {
        "brauer2d" => &[
            ("beta", 0.01, 1.0),
            ("K", 1.0, 20.0),
            ("mu", 0.05, 0.5),
            ("gamma", 0.1, 5.0),
            ("sigma", 0.0, 1.0),
            ("phi", 0.1, 5.0),
            ("theta", 0.05, 1.0),
        ],
        "brauer3d" => &[
            ("Lambda", 0.5, 5.0),
            ("beta", 0.01, 1.0),
            ("mu", 0.05, 0.5),
            ("gamma", 0.1, 5.0),
            ("sigma", 0.0, 1.0),
            ("phi", 0.1, 5.0),
            ("theta", 0.05, 1.0),
        ],
        "martcheva5d" => &[
            ("Lambda", 0.5, 5.0),
            ("beta", 0.1, 5.0),
            ("D", 0.5, 5.0),
            ("mu", 0.05, 0.5),
            ("psi", 0.1, 3.0),
            ("w", 0.1, 2.0),
            ("sigma", 0.0, 1.0),
            ("gamma", 0.1, 5.0),
            ("eta", 0.1, 5.0),
            ("delta", 0.1, 5.0),
        ],
        "hepc3d" | "hepc3d-truncated" => &[
            ("s", 0.1, 2.0),
            ("r_T", 0.5, 3.0),
            ("T_max", 1.0, 5.0),
            ("d", 0.05, 1.0),
            ("b", 0.2, 2.0),
            ("c", 0.2, 3.0),
            ("delta", 0.1, 3.0),
            ("rho", 0.2, 3.0),
            ("R_star", 0.5, 2.0),
            ("r_I", 0.1, 3.0),
        ],
        _ => return None,
    })
}

/// Draws an admissible parameter set. For hepc models `delta` is drawn above the
/// analysis floor `r_I (1 - p0/T_max)`. Models without a built-in range table get
/// their defaults scaled by independent factors in [0.5, 2].
pub fn sample_params<R: Rng + ?Sized>(model: &dyn ModelSystem, rng: &mut R) -> ParamMap {
    let names = model.param_names().clone();
    let Some(table) = ranges(model.id()) else {
        let base = model
            .default_params()
            .expect("models without a range table need defaults");
        let values = base
            .iter()
            .map(|v| v * rng.random_range(0.5..2.0))
            .collect();
        return ParamMap::new(names, values).expect("dimension");
    };
    let pairs: Vec<(&str, f64)> = table
        .iter()
        .map(|(n, lo, hi)| (*n, rng.random_range(*lo..*hi)))
        .collect();
    let mut p = ParamMap::from_pairs(names, &pairs).expect("range table matches model");
    if model.id().starts_with("hepc") {
        if model.id() == "hepc3d-truncated" {
            p.set("s", 0.0).unwrap();
            p.set("d", 0.0).unwrap();
        }
        let q = hepc_dfe_quantities(&p)
            .expect("sampled hepc parameters are admissible");
        let floor = p.get("r_I").unwrap() * (1.0 - q.p0 / p.get("T_max").unwrap());
        let delta = floor.max(0.0) + rng.random_range(0.05..3.0);
        p.set("delta", delta).unwrap();
    }
    p
}
