//! Steady-state enumeration, stability classification and polynomial reductions.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, inf_norm, ser_complex_vec, Svd, C64};
use crate::models::{check_params, ModelSystem};
use crate::ngm;
use crate::numdiff::jacobian_raw;
use crate::params::ParamMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Nonhyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Positivity {
    Positive,
    Boundary,
    Infeasible,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    pub x: Vec<f64>,
    #[serde(serialize_with = "ser_complex_vec")]
    pub eigenvalues: Vec<C64>,
    pub stability: Stability,
    pub positivity: Positivity,
    pub residual: f64,
}

impl SteadyState {
    pub fn max_real_eigenvalue(&self) -> f64 {
        linalg::max_real_part(&self.eigenvalues)
    }

    pub fn is_positive(&self) -> bool {
        self.positivity == Positivity::Positive
    }
}

fn scale(x: &[f64]) -> f64 {
    1.0 + inf_norm(x)
}

pub(crate) fn positivity(x: &[f64]) -> Positivity {
    let tol = 1e-9 * scale(x);
    if x.iter().any(|v| *v < -tol) {
        Positivity::Infeasible
    } else if x.iter().all(|v| *v > tol) {
        Positivity::Positive
    } else {
        Positivity::Boundary
    }
}

pub(crate) fn stability_of(ev: &[C64], jac_norm: f64) -> Stability {
    let tol = 1e-8 * (1.0 + jac_norm);
    if ev.iter().any(|z| z.re.abs() <= tol) {
        Stability::Nonhyperbolic
    } else if ev.iter().all(|z| z.re < 0.0) {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// Eigenvalues, stability and positivity of a (near) steady state.
pub fn classify_state(model: &dyn ModelSystem, x: &[f64], p: &[f64]) -> Result<SteadyState> {
    let jac = jacobian_raw(model, x, p)?;
    let ev = linalg::eigenvalues(&jac);
    Ok(SteadyState {
        x: x.to_vec(),
        stability: stability_of(&ev, linalg::mat_inf_norm(&jac)),
        eigenvalues: ev,
        positivity: positivity(x),
        residual: inf_norm(&model.rhs(x, p)?),
    })
}

/// Damped Newton iteration with minimum-norm steps. Returns the converged point
/// when `|f|_inf <= 1e-9 (1 + |x|_inf)` and the next step is below `1e-8 (1 + |x|_inf)`.
pub fn newton(model: &dyn ModelSystem, x0: &[f64], p: &[f64]) -> Option<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut f = model.rhs(&x, p).ok()?;
    let mut fn_ = inf_norm(&f);
    for _ in 0..100 {
        if fn_ <= 1e-14 * scale(&x) {
            break;
        }
        let jac = jacobian_raw(model, &x, p).ok()?;
        let svd = Svd::new(&jac).ok()?;
        let smax = svd.s.max();
        let drop: Vec<usize> = (0..svd.s.len())
            .filter(|&k| svd.s[k] <= 1e-13 * smax)
            .collect();
        let dx = svd.solve_excluding(&f, &drop);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - t * d).collect();
            if let Ok(ft) = model.rhs(&trial, p) {
                let nt = inf_norm(&ft);
                if nt < fn_ || (nt <= fn_ * (1.0 + 1e-12) && t == 1.0) {
                    let step = t * inf_norm(&dx);
                    x = trial;
                    f = ft;
                    fn_ = nt;
                    accepted = true;
                    if step <= 1e-15 * scale(&x) {
                        t = 0.0;
                    }
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || t == 0.0 || inf_norm(&x) > 1e12 {
            break;
        }
    }
    if fn_ > 1e-9 * scale(&x) || !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    // a small residual on a slow manifold is not a root: the next Newton step must be small too
    let jac = jacobian_raw(model, &x, p).ok()?;
    let svd = Svd::new(&jac).ok()?;
    let smax = svd.s.max();
    let drop: Vec<usize> = (0..svd.s.len()).filter(|&k| svd.s[k] <= 1e-13 * smax).collect();
    let dx = svd.solve_excluding(&f, &drop);
    (inf_norm(&dx) <= 1e-8 * scale(&x)).then_some(x)
}

/// Orders states by total infected magnitude, then lexicographically.
fn sort_states(model: &dyn ModelSystem, states: &mut [SteadyState]) {
    let inf = |s: &SteadyState| model.infected().iter().map(|&i| s.x[i].abs()).sum::<f64>();
    states.sort_by(|a, b| {
        inf(a).total_cmp(&inf(b)).then_with(|| {
            a.x.iter()
                .zip(&b.x)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
}

fn dedupe(found: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for x in found {
        let dup = out.iter().any(|y| {
            let d = x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            d <= 1e-9 * scale(y).max(scale(&x))
        });
        if !dup {
            out.push(x);
        }
    }
    out
}

/// Newton seeds: the DFE, back-mapped reduction roots and a 5^n grid over
/// `[0, 2 s]^n` with `s = max(|DFE|_inf, 1)`.
fn seeds(model: &dyn ModelSystem, p: &[f64], params: &ParamMap) -> Vec<Vec<f64>> {
    let n = model.dim();
    let mut out = Vec::new();
    let x0 = model.dfe(p).ok();
    if let Some(x0) = &x0 {
        out.push(x0.clone());
    }
    if let Some(Ok(red)) = reduction(model, params) {
        out.extend(red.candidates.iter().map(|c| c.x.clone()));
    }
    let s = x0.as_deref().map(inf_norm).unwrap_or(1.0).max(1.0);
    let levels = [0.0, 0.25, 0.5, 1.0, 2.0];
    let total = levels.len().pow(n as u32);
    for k in 0..total {
        let mut idx = k;
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let l = levels[idx % levels.len()];
                idx /= levels.len();
                l * s
            })
            .collect();
        out.push(x);
    }
    out
}

/// All steady states reachable from the seed set, deduplicated and sorted.
pub fn enumerate(model: &dyn ModelSystem, params: &ParamMap) -> Result<Vec<SteadyState>> {
    check_params(model, params)?;
    let p = params.values();
    let found: Vec<Vec<f64>> = seeds(model, p, params)
        .par_iter()
        .filter_map(|s| newton(model, s, p))
        .collect();
    // points where the Jacobian cannot be evaluated lie on a singularity of the field
    let mut states: Vec<SteadyState> = dedupe(found)
        .into_iter()
        .filter_map(|x| classify_state(model, &x, p).ok())
        .collect();
    sort_states(model, &mut states);
    Ok(states)
}

/// A root of a reduction polynomial and the state it maps to.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub root: f64,
    pub x: Vec<f64>,
    /// Inside the open interval that corresponds to positive states.
    pub admissible: bool,
}

/// One-variable polynomial whose admissible roots are the positive steady states.
#[derive(Debug, Clone, Serialize)]
pub struct PolyReduction {
    pub variable: String,
    /// Ascending coefficients.
    pub coeffs: Vec<f64>,
    /// Open interval of roots that correspond to positive states.
    pub domain: (f64, f64),
    /// All real roots, ascending, repeated by multiplicity when numerically merged.
    pub roots: Vec<f64>,
    pub candidates: Vec<Candidate>,
    /// All coefficients vanish: a continuum of steady states.
    pub degenerate: bool,
}

impl PolyReduction {
    fn build<F>(variable: &str, coeffs: Vec<f64>, domain: (f64, f64), back: F) -> Self
    where
        F: Fn(f64) -> Option<Vec<f64>>,
    {
        let cscale = coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let degenerate = cscale == 0.0;
        let roots = if degenerate {
            vec![]
        } else {
            linalg::real_roots(&coeffs)
        };
        let candidates = roots
            .iter()
            .filter_map(|&r| {
                back(r).map(|x| Candidate {
                    root: r,
                    admissible: r > domain.0 && r < domain.1 && positivity(&x) == Positivity::Positive,
                    x,
                })
            })
            .collect();
        Self {
            variable: variable.into(),
            coeffs,
            domain,
            roots,
            candidates,
            degenerate,
        }
    }

    pub fn positive_states(&self) -> Vec<&[f64]> {
        self.candidates
            .iter()
            .filter(|c| c.admissible)
            .map(|c| c.x.as_slice())
            .collect()
    }

    pub fn admissible_roots(&self) -> Vec<f64> {
        self.candidates
            .iter()
            .filter(|c| c.admissible)
            .map(|c| c.root)
            .collect()
    }
}

/// Quadratic `a2 I^2 + a1 I + a0` for the reduced Brauer model; `(a2, a1, a0)`.
pub fn brauer_coefficients(beta: f64, k: f64, mu: f64, gamma: f64, sigma: f64, phi: f64, theta: f64) -> (f64, f64, f64) {
    let a2 = sigma * beta * beta;
    let a1 = sigma * beta * (mu + gamma) + beta * (mu + theta + sigma * phi) - sigma * beta * beta * k;
    let a0 = (mu + theta + phi) * (mu + gamma) - beta * (mu + theta + sigma * phi) * k;
    (a2, a1, a0)
}

/// Reduction for `brauer2d` (and `brauer3d` through `K = Lambda/mu`).
pub fn brauer_quadratic(model: &dyn ModelSystem, params: &ParamMap) -> Result<PolyReduction> {
    check_params(model, params)?;
    let g = |n: &str| params.get(n);
    let full = match model.id() {
        "brauer2d" => false,
        "brauer3d" => true,
        other => return Err(Error::Unsupported(format!("no Brauer reduction for `{other}`"))),
    };
    let k = if full { g("Lambda")? / g("mu")? } else { g("K")? };
    let (beta, mu, gamma, sigma, phi, theta) =
        (g("beta")?, g("mu")?, g("gamma")?, g("sigma")?, g("phi")?, g("theta")?);
    let (a2, a1, a0) = brauer_coefficients(beta, k, mu, gamma, sigma, phi, theta);
    Ok(PolyReduction::build("I", vec![a0, a1, a2], (0.0, k), |i| {
        let v = phi * (k - i) / (sigma * beta * i + mu + theta + phi);
        Some(if full { vec![k - i - v, i, v] } else { vec![i, v] })
    }))
}

/// Quadratic in the force of infection `lambda = beta B/(B + D)` on `(0, beta)`.
pub fn martcheva_quadratic(params: &ParamMap) -> Result<PolyReduction> {
    let g = |n: &str| params.get(n);
    let (lam, beta, d, mu, psi, w, sigma, gamma, eta, delta) = (
        g("Lambda")?,
        g("beta")?,
        g("D")?,
        g("mu")?,
        g("psi")?,
        g("w")?,
        g("sigma")?,
        g("gamma")?,
        g("eta")?,
        g("delta")?,
    );
    let dd = d * delta;
    let q2 = -sigma * (dd * (gamma * mu + mu * mu + mu * w) + lam * eta * (mu + w));
    let q1 = -dd * gamma * mu * mu * sigma - dd * gamma * mu * mu - dd * gamma * mu * psi * sigma
        - dd * gamma * mu * sigma * w
        - dd * mu.powi(3) * sigma
        - dd * mu.powi(3)
        - dd * mu * mu * psi * sigma
        - dd * mu * mu * sigma * w
        - dd * mu * mu * w
        - dd * mu * psi * sigma * w
        + lam * beta * eta * mu * sigma
        + lam * beta * eta * sigma * w
        - lam * eta * mu * mu
        - lam * eta * mu * psi * sigma
        - lam * eta * mu * w
        - lam * eta * psi * sigma * w;
    let q0 = -(mu + w)
        * (dd * gamma * mu * mu + dd * gamma * mu * psi + dd * mu.powi(3) + dd * mu * mu * psi
            - lam * beta * eta * mu
            - lam * beta * eta * psi * sigma);
    Ok(PolyReduction::build("lambda", vec![q0, q1, q2], (0.0, beta), |l| {
        if l >= beta {
            return None;
        }
        let i = l * delta * d / (eta * (beta - l));
        let b = eta * i / delta;
        let r = gamma * i / (mu + w);
        let s = (lam + w * r) / (l + mu + psi);
        let v = psi * s / (sigma * l + mu);
        Some(vec![s, v, i, r, b])
    }))
}

/// Cubic in `X = T/(T + I)` for the hepatitis C model.
pub fn hepc_x_reduction(params: &ParamMap) -> Result<PolyReduction> {
    let g = |n: &str| params.get(n);
    let (s, r_t, tm, d, b, c, delta, r_i) = (
        g("s")?,
        g("r_T")?,
        g("T_max")?,
        g("d")?,
        g("b")?,
        g("c")?,
        g("delta")?,
        g("r_I")?,
    );
    let m = g("rho")? * g("R_star")?;
    let c3 = -tm * b * b * (m - delta + r_i) * (-m * r_i + m * r_t + d * r_i - delta * r_t);
    let c2 = b
        * (-m * m * tm * b * r_i + m * tm * b * delta * r_i - m * tm * b * r_i * r_i
            - m * tm * c * d * r_i
            - m * tm * c * delta * r_i
            + 2.0 * m * tm * c * delta * r_t
            + m * tm * c * r_i * r_i
            - m * tm * c * r_i * r_t
            + 2.0 * tm * c * d * delta * r_i
            - 2.0 * tm * c * d * r_i * r_i
            - 2.0 * tm * c * delta * delta * r_t
            + 2.0 * tm * c * delta * r_i * r_t
            + b * r_i * r_i * s);
    let c1 = c
        * (m * tm * b * delta * r_i - m * tm * b * r_i * r_i + tm * c * d * delta * r_i
            - tm * c * d * r_i * r_i
            - tm * c * delta * delta * r_t
            + tm * c * delta * r_i * r_t
            + 2.0 * b * r_i * r_i * s);
    let c0 = c * c * r_i * r_i * s;
    Ok(PolyReduction::build("X", vec![c0, c1, c2, c3], (0.0, 1.0), |x| {
        if !(-1e-12..=1.0 + 1e-12).contains(&x) {
            return None;
        }
        let n = tm * (b * x * m + (c + b * x) * (r_i - delta)) / (r_i * (c + b * x));
        if n <= 0.0 {
            return None;
        }
        let (t, i) = (x * n, (1.0 - x) * n);
        Some(vec![t, i, m * i / (c + b * x)])
    }))
}

/// The model-specific reduction, if the model has one.
pub fn reduction(model: &dyn ModelSystem, params: &ParamMap) -> Option<Result<PolyReduction>> {
    match model.id() {
        "brauer2d" | "brauer3d" => Some(brauer_quadratic(model, params)),
        "martcheva5d" => Some(martcheva_quadratic(params)),
        "hepc3d" | "hepc3d-truncated" => Some(hepc_x_reduction(params)),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParityAudit {
    pub r0: f64,
    /// Positive steady states counted with multiplicity from the reduction.
    pub count: usize,
    pub parity_ok: Option<bool>,
    pub abstained: bool,
    pub reason: Option<String>,
    /// `rho R* + r_I - delta` (hepc only), positive whenever a positive state exists.
    pub hepc_feasibility: Option<f64>,
}

/// Checks that the number of positive steady states is even iff R0 < 1.
pub fn parity_audit(model: &dyn ModelSystem, params: &ParamMap) -> Result<ParityAudit> {
    let red = reduction(model, params)
        .ok_or_else(|| Error::Unsupported(format!("no reduction for `{}`", model.id())))??;
    let r0 = ngm::r0(model, params)?.r0;
    let hepc_feasibility = if model.id().starts_with("hepc") {
        Some(params.get("rho")? * params.get("R_star")? + params.get("r_I")? - params.get("delta")?)
    } else {
        None
    };
    // an exactly vanishing constant term is a structural root at the boundary
    let mut coeffs = red.coeffs.clone();
    while coeffs.len() > 1 && coeffs[0] == 0.0 {
        coeffs.remove(0);
    }
    let roots = linalg::real_roots(&coeffs);
    let width = red.domain.1 - red.domain.0;
    let sep_tol = 1e-4 * width;
    let mut reason = None;
    if model.id() == "hepc3d-truncated" {
        // the extra boundary state takes part in the exchange of stability
        reason = Some("model has a boundary equilibrium besides the DFE".to_string());
    } else if red.degenerate {
        reason = Some("reduction polynomial vanishes identically".to_string());
    } else if (r0 - 1.0).abs() < 1e-6 {
        reason = Some(format!("R0 = {r0} too close to 1"));
    } else {
        let inside: Vec<f64> = roots
            .iter()
            .copied()
            .filter(|r| *r > red.domain.0 - sep_tol && *r < red.domain.1 + sep_tol)
            .collect();
        let close = inside.windows(2).any(|w| w[1] - w[0] < sep_tol);
        let edge = inside
            .iter()
            .any(|r| (r - red.domain.0).abs() < sep_tol || (r - red.domain.1).abs() < sep_tol);
        if close {
            reason = Some("roots closer than the separation threshold".into());
        } else if edge {
            reason = Some("root near the edge of the admissible interval".into());
        }
    }
    let count = red.candidates.iter().filter(|c| c.admissible).count();
    let abstained = reason.is_some();
    Ok(ParityAudit {
        r0,
        count,
        parity_ok: (!abstained).then_some((count % 2 == 0) == (r0 < 1.0)),
        abstained,
        reason,
        hepc_feasibility,
    })
}

#[cfg(test)]
mod tests;
