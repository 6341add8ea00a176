//! Directional finite differences of a model right-hand side.
//!
//! A k-th order mixed derivative along directions `u_1..u_k` (state vectors or
//! parameters) is the central stencil
//! `sum_{s in {-1,1}^k} (prod s_i) f(x + sum s_i h_i u_i) / (2^k prod h_i)`,
//! extrapolated over the step sequence h, h/2, h/4 (two Richardson levels,
//! error O(h^6)). State steps scale with `max(|x|_inf, 1) / |u|_inf`,
//! parameter steps with the parameter's magnitude.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::ModelSystem;
use crate::params::ParamMap;

/// A differentiation direction.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    State(Vec<f64>),
    Param(String),
}

impl Direction {
    pub fn unit(n: usize, i: usize) -> Self {
        let mut u = vec![0.0; n];
        u[i] = 1.0;
        Direction::State(u)
    }
}

/// Resolved direction: a state vector or a parameter index.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Dir<'a> {
    X(&'a [f64]),
    P(usize),
}

const H_FIRST: f64 = 1e-3;
const H_SECOND: f64 = 1e-2;
const H_THIRD: f64 = 2e-2;
const RETRIES: usize = 3;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// Central mixed stencil at one step scale `t` (multiplies every base step).
fn stencil(
    model: &dyn ModelSystem,
    x: &[f64],
    p: &[f64],
    dirs: &[Dir],
    steps: &[f64],
    t: f64,
) -> std::result::Result<Vec<f64>, (Vec<f64>, Vec<f64>)> {
    let n = model.dim();
    let k = dirs.len();
    let mut acc = vec![0.0; n];
    let mut xs = vec![0.0; n];
    let mut ps = p.to_vec();
    let mut out = vec![0.0; n];
    for mask in 0..(1usize << k) {
        xs.copy_from_slice(x);
        ps.copy_from_slice(p);
        let mut sign = 1.0;
        for (j, d) in dirs.iter().enumerate() {
            let s = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
            sign *= s;
            let h = s * steps[j] * t;
            match d {
                Dir::X(u) => xs.iter_mut().zip(*u).for_each(|(a, b)| *a += h * b),
                Dir::P(i) => ps[*i] += h,
            }
        }
        if model.rhs_into(&xs, &ps, &mut out).is_err() || out.iter().any(|v| !v.is_finite()) {
            return Err((xs, ps));
        }
        acc.iter_mut().zip(&out).for_each(|(a, o)| *a += sign * o);
    }
    let denom = (1u64 << k) as f64 * steps.iter().map(|h| h * t).product::<f64>();
    acc.iter_mut().for_each(|a| *a /= denom);
    Ok(acc)
}

/// Mixed directional derivative of any order along `dirs`.
pub(crate) fn derivative_raw(
    model: &dyn ModelSystem,
    x: &[f64],
    p: &[f64],
    dirs: &[Dir],
) -> Result<Vec<f64>> {
    let n = model.dim();
    let h0 = match dirs.len() {
        0 => return model.rhs(x, p),
        1 => H_FIRST,
        2 => H_SECOND,
        _ => H_THIRD,
    };
    let mut steps = Vec::with_capacity(dirs.len());
    for d in dirs {
        match d {
            Dir::X(u) => {
                if inf_norm(u) == 0.0 {
                    return Ok(vec![0.0; n]);
                }
                // no component moves by more than h0 (1 + |x_j|)
                let reach = x
                    .iter()
                    .zip(*u)
                    .filter(|(_, uj)| **uj != 0.0)
                    .map(|(xj, uj)| (1.0 + xj.abs()) / uj.abs())
                    .fold(f64::INFINITY, f64::min);
                steps.push(h0 * reach);
            }
            Dir::P(i) => {
                let a = p[*i].abs();
                steps.push(h0 * if a > 0.0 { a } else { 1.0 });
            }
        }
    }
    let mut t = 1.0;
    let mut last_bad = (x.to_vec(), p.to_vec());
    for _ in 0..=RETRIES {
        let levels: std::result::Result<Vec<_>, _> = [1.0, 0.5, 0.25]
            .iter()
            .map(|s| stencil(model, x, p, dirs, &steps, t * s))
            .collect();
        match levels {
            Ok(d) => {
                let out = (0..n)
                    .map(|i| {
                        let r1 = (4.0 * d[1][i] - d[0][i]) / 3.0;
                        let r2 = (4.0 * d[2][i] - d[1][i]) / 3.0;
                        (16.0 * r2 - r1) / 15.0
                    })
                    .collect();
                return Ok(out);
            }
            Err(bad) => {
                last_bad = bad;
                t *= 0.1;
            }
        }
    }
    Err(Error::NonFinite {
        x: last_bad.0,
        params: last_bad.1,
    })
}

pub(crate) fn jacobian_raw(model: &dyn ModelSystem, x: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
    let n = model.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = derivative_raw(model, x, p, &[Dir::X(&e)])?;
        e[j] = 0.0;
        for i in 0..n {
            jac[(i, j)] = col[i];
        }
    }
    Ok(jac)
}

fn resolve<'a>(
    model: &dyn ModelSystem,
    params: &ParamMap,
    d: &'a Direction,
) -> Result<Dir<'a>> {
    match d {
        Direction::State(u) => {
            if u.len() != model.dim() {
                return Err(Error::Dimension {
                    expected: model.dim(),
                    got: u.len(),
                });
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("direction has non-finite entries".into()));
            }
            Ok(Dir::X(u))
        }
        Direction::Param(name) => Ok(Dir::P(params.index_of(name)?)),
    }
}

fn check_point(model: &dyn ModelSystem, x: &[f64], params: &ParamMap) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: x.len(),
        });
    }
    if params.len() != model.param_names().len() {
        return Err(Error::Dimension {
            expected: model.param_names().len(),
            got: params.len(),
        });
    }
    Ok(())
}

/// Mixed derivative along an arbitrary list of directions.
pub fn derivative(
    model: &dyn ModelSystem,
    x: &[f64],
    params: &ParamMap,
    dirs: &[Direction],
) -> Result<Vec<f64>> {
    check_point(model, x, params)?;
    let resolved = dirs
        .iter()
        .map(|d| resolve(model, params, d))
        .collect::<Result<Vec<_>>>()?;
    derivative_raw(model, x, params.values(), &resolved)
}

/// `sum_{j,k} d^2 f / dx_j dx_k u1_j u2_k` (or the mixed state/parameter analogue).
pub fn d2f(
    model: &dyn ModelSystem,
    x: &[f64],
    params: &ParamMap,
    u1: &Direction,
    u2: &Direction,
) -> Result<Vec<f64>> {
    derivative(model, x, params, &[u1.clone(), u2.clone()])
}

pub fn d3f(
    model: &dyn ModelSystem,
    x: &[f64],
    params: &ParamMap,
    u1: &Direction,
    u2: &Direction,
    u3: &Direction,
) -> Result<Vec<f64>> {
    derivative(model, x, params, &[u1.clone(), u2.clone(), u3.clone()])
}

/// Derivative of the state derivative along `u` with respect to parameter `name`.
pub fn d2f_param(
    model: &dyn ModelSystem,
    x: &[f64],
    params: &ParamMap,
    u: &[f64],
    name: &str,
) -> Result<Vec<f64>> {
    derivative(
        model,
        x,
        params,
        &[Direction::State(u.to_vec()), Direction::Param(name.into())],
    )
}

pub fn d3f_param(
    model: &dyn ModelSystem,
    x: &[f64],
    params: &ParamMap,
    u1: &[f64],
    u2: &[f64],
    name: &str,
) -> Result<Vec<f64>> {
    derivative(
        model,
        x,
        params,
        &[
            Direction::State(u1.to_vec()),
            Direction::State(u2.to_vec()),
            Direction::Param(name.into()),
        ],
    )
}

/// `df/dp` for one parameter.
pub fn df_param(
    model: &dyn ModelSystem,
    x: &[f64],
    params: &ParamMap,
    name: &str,
) -> Result<Vec<f64>> {
    derivative(model, x, params, &[Direction::Param(name.into())])
}

/// Full state Jacobian by central differences.
pub fn jacobian(model: &dyn ModelSystem, x: &[f64], params: &ParamMap) -> Result<DMatrix<f64>> {
    check_point(model, x, params)?;
    jacobian_raw(model, x, params.values())
}
