//! Centre-manifold coefficients at a transcritical bifurcation of the DFE.
//!
//! At a parameter point where the DFE Jacobian `A` has a simple zero eigenvalue
//! with right/left null vectors `w`, `v` (`v.w = 1`), the scalar reduction
//! `u' = a u^2 + b alpha1 u + c u^3 + d alpha2 u^2 + ...` is described by
//!
//! * `a = v.D2f(w,w)/2`, `b = v.D_alpha1 Df w`,
//! * `c = v.D3f(w,w,w)/3 - v.D2f(z,w)` with `A z = D2f(w,w)` (valid when `a = 0`),
//! * `f_uualpha = v.D_alpha D2f(w,w) + v.D_alpha Df h20 + 2 v.D2f(w, h_alpha)`,
//!   where `h20 = -z` and `h_alpha` solves `A h = -(D_alpha Df w - (v.D_alpha Df w) w)`,
//!   both taken with `v.h = 0`,
//! * `d = f_uualpha2`, `e = (-b d + f_uualpha1 f_ualpha2) / (2 b c)`.
//!
//! The bare contractions `v.D_alpha D2f(w,w)` (which drop the two correction
//! terms) are reported alongside as `d_contraction` and `fuualpha1_contraction`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, inf_norm, ser_matrix, Svd};
use crate::models::{check_params, ModelSystem};
use crate::numdiff::{derivative_raw, jacobian_raw, Dir};
use crate::params::ParamMap;

/// Default relative tolerance for declaring `a = 0`.
pub const TOL_A: f64 = 1e-7;
/// Relative tolerance for declaring `c = 0`.
pub const TOL_C: f64 = 1e-6;

/// Left and right kernel vectors of the DFE Jacobian.
#[derive(Debug, Clone, Serialize)]
pub struct NullPair {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    #[serde(rename = "A", serialize_with = "ser_matrix")]
    pub a: DMatrix<f64>,
    /// Eigenvalue of smallest modulus.
    pub eigenvalue: f64,
    /// Modulus of the next-smallest eigenvalue.
    pub gap: f64,
    pub residual_right: f64,
    pub residual_left: f64,
}

impl NullPair {
    /// Builds a pair from explicit vectors, rescaled so the infected component of
    /// `w` largest in magnitude is +1 and `v.w = 1`.
    pub fn from_vectors(a: DMatrix<f64>, infected: &[usize], v: &[f64], w: &[f64]) -> Result<Self> {
        let m = infected
            .iter()
            .map(|&i| w[i])
            .max_by(|x, y| x.abs().total_cmp(&y.abs()))
            .unwrap_or(0.0);
        if m == 0.0 {
            return Err(Error::Solve("null vector has no infected component".into()));
        }
        let w: Vec<f64> = w.iter().map(|x| x / m).collect();
        let vw = dot(v, &w);
        if vw == 0.0 {
            return Err(Error::Solve("left and right null vectors are orthogonal".into()));
        }
        let v: Vec<f64> = v.iter().map(|x| x / vw).collect();
        Ok(Self::unnormalized(a, v, w))
    }

    /// Keeps the vectors as given; only residuals are computed.
    pub fn unnormalized(a: DMatrix<f64>, v: Vec<f64>, w: Vec<f64>) -> Self {
        let ev = linalg::eigenvalues(&a);
        let mut mods: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
        mods.sort_by(f64::total_cmp);
        let small = ev
            .iter()
            .min_by(|x, y| x.norm().total_cmp(&y.norm()))
            .map(|z| z.re)
            .unwrap_or(0.0);
        let residual_right = inf_norm(&linalg::mat_vec(&a, &w));
        let residual_left = inf_norm(&linalg::vec_mat(&v, &a));
        Self {
            eigenvalue: small,
            gap: mods.get(1).copied().unwrap_or(f64::INFINITY),
            residual_right,
            residual_left,
            v,
            w,
            a,
        }
    }

    /// Residuals relative to `|A|_inf`.
    pub fn relative_residual(&self) -> f64 {
        let na = linalg::mat_inf_norm(&self.a).max(f64::MIN_POSITIVE);
        self.residual_right.max(self.residual_left) / na
    }
}

fn pair_from_jacobian(a: DMatrix<f64>, infected: &[usize]) -> Result<(NullPair, Svd, usize)> {
    let scale = 1.0 + linalg::mat_inf_norm(&a);
    let ev = linalg::eigenvalues(&a);
    let mut mods: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
    mods.sort_by(f64::total_cmp);
    if mods[0] > 1e-6 * scale {
        return Err(Error::NoZeroEigenvalue { gap: mods[0] });
    }
    if mods.len() > 1 && mods[1] <= 1e-6 * scale {
        return Err(Error::NonSimpleZero);
    }
    let svd = Svd::new(&a)?;
    let k = svd.ascending()[0];
    let w = svd.right_vector(k);
    let v = svd.left_vector(k);
    let pair = NullPair::from_vectors(a, infected, &v, &w)?;
    Ok((pair, svd, k))
}

/// Normalized null pair of the DFE Jacobian.
pub fn null_pair(model: &dyn ModelSystem, params: &ParamMap) -> Result<NullPair> {
    Ok(BifurcationPoint::new(model, params)?.pair)
}

/// A parameter point with R0 = 1 together with its null pair and the
/// factorization used for pseudo-solves.
pub struct BifurcationPoint<'m> {
    model: &'m dyn ModelSystem,
    params: ParamMap,
    x0: Vec<f64>,
    pair: NullPair,
    svd: Svd,
    kernel: usize,
}

impl<'m> BifurcationPoint<'m> {
    pub fn new(model: &'m dyn ModelSystem, params: &ParamMap) -> Result<Self> {
        check_params(model, params)?;
        model.check_analysis(params.values())?;
        let x0 = model.dfe(params.values())?;
        let a = jacobian_raw(model, &x0, params.values())?;
        let (pair, svd, kernel) = pair_from_jacobian(a, model.infected())?;
        Ok(Self {
            model,
            params: params.clone(),
            x0,
            pair,
            svd,
            kernel,
        })
    }

    /// Uses the given pair as is (no rescaling). `v.w` should be 1.
    pub fn with_pair(model: &'m dyn ModelSystem, params: &ParamMap, pair: NullPair) -> Result<Self> {
        check_params(model, params)?;
        let x0 = model.dfe(params.values())?;
        let svd = Svd::new(&pair.a)?;
        let kernel = svd.ascending()[0];
        Ok(Self {
            model,
            params: params.clone(),
            x0,
            pair,
            svd,
            kernel,
        })
    }

    pub fn pair(&self) -> &NullPair {
        &self.pair
    }

    pub fn dfe(&self) -> &[f64] {
        &self.x0
    }

    pub fn params(&self) -> &ParamMap {
        &self.params
    }

    fn p(&self) -> &[f64] {
        self.params.values()
    }

    fn d(&self, dirs: &[Dir]) -> Result<Vec<f64>> {
        derivative_raw(self.model, &self.x0, self.p(), dirs)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.params.index_of(name)
    }

    /// `y = D2f(w, w)`.
    pub fn y(&self) -> Result<Vec<f64>> {
        let w = &self.pair.w;
        self.d(&[Dir::X(w), Dir::X(w)])
    }

    /// `sum_{i,j,k} |v_i d2f_i/dx_j dx_k w_j w_k|`, the magnitude against which
    /// `v . D2f(w, w)` is judged to vanish.
    pub fn contraction_magnitude(&self) -> Result<f64> {
        let n = self.x0.len();
        let (v, w) = (&self.pair.v, &self.pair.w);
        let mut total = 0.0;
        for j in 0..n {
            for k in j..n {
                if w[j] == 0.0 || w[k] == 0.0 {
                    continue;
                }
                let (ej, ek) = (unit(n, j), unit(n, k));
                let h = self.d(&[Dir::X(&ej), Dir::X(&ek)])?;
                let mult = if j == k { 1.0 } else { 2.0 };
                total += mult
                    * v.iter()
                        .zip(&h)
                        .map(|(vi, hi)| (vi * hi * w[j] * w[k]).abs())
                        .sum::<f64>();
            }
        }
        Ok(total)
    }

    /// `(a, scale)` where `scale` is half the contraction magnitude.
    pub fn a(&self) -> Result<(f64, f64)> {
        let y = self.y()?;
        let a = 0.5 * dot(&self.pair.v, &y);
        Ok((a, 0.5 * self.contraction_magnitude()?))
    }

    /// Errors unless the DFE is locally independent of `name`.
    pub fn check_dfe_independent(&self, name: &str) -> Result<()> {
        let i = self.index(name)?;
        let p = self.p();
        let h = 1e-4 * p[i].abs().max(1e-8);
        let mut up = p.to_vec();
        let mut dn = p.to_vec();
        up[i] += h;
        dn[i] -= h;
        let (xu, xd) = (self.model.dfe(&up)?, self.model.dfe(&dn)?);
        let slope = xu
            .iter()
            .zip(&xd)
            .map(|(a, b)| ((a - b) / (2.0 * h)).abs())
            .fold(0.0, f64::max);
        if slope > 1e-8 * (1.0 + inf_norm(&self.x0)) {
            return Err(Error::InvalidBifurcationParam(name.into()));
        }
        Ok(())
    }

    /// `v . D_alpha Df w`.
    pub fn fualpha(&self, name: &str) -> Result<f64> {
        let i = self.index(name)?;
        let d = self.d(&[Dir::X(&self.pair.w), Dir::P(i)])?;
        Ok(dot(&self.pair.v, &d))
    }

    pub fn b(&self, alpha1: &str) -> Result<f64> {
        self.check_dfe_independent(alpha1)?;
        self.fualpha(alpha1)
    }

    /// Minimum-norm solution of `A z = rhs` with `v.z = 0`.
    pub fn pseudo_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut z = self.svd.solve_excluding(rhs, &[self.kernel]);
        let vz = dot(&self.pair.v, &z);
        z.iter_mut()
            .zip(&self.pair.w)
            .for_each(|(zi, wi)| *zi -= vz * wi);
        z
    }

    fn require_a_zero(&self, y: &[f64], tol_a: f64) -> Result<()> {
        let vy = dot(&self.pair.v, y);
        if vy.abs() > tol_a * self.contraction_magnitude()? {
            return Err(Error::NonzeroA(vy.abs()));
        }
        Ok(())
    }

    /// `(c3, c2)` with `c = c3 + c2`, evaluated with a given solution `z` of `A z = y`.
    fn c_parts_with(&self, z: &[f64]) -> Result<(f64, f64)> {
        let (v, w) = (&self.pair.v, &self.pair.w);
        let t = self.d(&[Dir::X(w), Dir::X(w), Dir::X(w)])?;
        let c3 = dot(v, &t) / 3.0;
        let q = self.d(&[Dir::X(z), Dir::X(w)])?;
        Ok((c3, -dot(v, &q)))
    }

    /// `(c, c3, c2)`; requires `a = 0` within `tol_a`.
    pub fn c(&self, tol_a: f64) -> Result<(f64, f64, f64)> {
        let y = self.y()?;
        self.require_a_zero(&y, tol_a)?;
        let z = self.pseudo_solve(&y);
        let (c3, c2) = self.c_parts_with(&z)?;
        Ok((c3 + c2, c3, c2))
    }

    /// `c` recomputed after shifting the pseudo-solve solution by `tau w`.
    pub fn c_kernel_shift(&self, tau: f64, tol_a: f64) -> Result<f64> {
        let y = self.y()?;
        self.require_a_zero(&y, tol_a)?;
        let mut z = self.pseudo_solve(&y);
        z.iter_mut()
            .zip(&self.pair.w)
            .for_each(|(zi, wi)| *zi += tau * wi);
        let (c3, c2) = self.c_parts_with(&z)?;
        Ok(c3 + c2)
    }

    /// `v . D_alpha D2f(w, w)`.
    pub fn fuualpha_contraction(&self, name: &str) -> Result<f64> {
        let i = self.index(name)?;
        let w = &self.pair.w;
        let d = self.d(&[Dir::X(w), Dir::X(w), Dir::P(i)])?;
        Ok(dot(&self.pair.v, &d))
    }

    /// `f_uualpha` including the parameter dependence of the centre manifold.
    pub fn fuualpha(&self, name: &str) -> Result<f64> {
        self.check_dfe_independent(name)?;
        let i = self.index(name)?;
        let (v, w) = (&self.pair.v, &self.pair.w);
        let bare = self.fuualpha_contraction(name)?;
        let h20: Vec<f64> = self.pseudo_solve(&self.y()?).iter().map(|z| -z).collect();
        let aw = self.d(&[Dir::X(w), Dir::P(i)])?;
        let vaw = dot(v, &aw);
        let r: Vec<f64> = aw.iter().zip(w).map(|(x, wi)| x - vaw * wi).collect();
        let h_alpha: Vec<f64> = self.pseudo_solve(&r).iter().map(|z| -z).collect();
        let t1 = dot(v, &self.d(&[Dir::X(&h20), Dir::P(i)])?);
        let t2 = dot(v, &self.d(&[Dir::X(w), Dir::X(&h_alpha)])?);
        Ok(bare + t1 + 2.0 * t2)
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut u = vec![0.0; n];
    u[i] = 1.0;
    u
}

/// Sign-agnostic pieces of the e computation.
fn e_formula(b: f64, c: f64, d: f64, fuua1: f64, fua2: f64) -> f64 {
    (-b * d + fuua1 * fua2) / (2.0 * b * c)
}

/// Tolerances used by [`coefficients`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoeffOptions {
    pub tol_a: f64,
}

impl Default for CoeffOptions {
    fn default() -> Self {
        Self { tol_a: TOL_A }
    }
}

/// The coefficients of the scalar reduction at a bifurcation point.
///
/// Fields that need `a = 0` (`c` and everything downstream) are `None` otherwise.
#[derive(Debug, Clone, Serialize)]
pub struct CenterCoefficients {
    pub alpha1: String,
    pub alpha2: String,
    pub a: f64,
    pub a_scale: f64,
    pub a_is_zero: bool,
    pub b: f64,
    pub c: Option<f64>,
    pub c3: Option<f64>,
    pub c2: Option<f64>,
    /// Largest change of c when the pseudo-solve solution is shifted by +-w.
    pub c_kernel_sensitivity: Option<f64>,
    pub c_is_zero: Option<bool>,
    pub d: Option<f64>,
    pub d_contraction: f64,
    pub fuualpha1: Option<f64>,
    pub fuualpha1_contraction: f64,
    pub fualpha2: f64,
    pub e: Option<f64>,
    pub e_contraction: Option<f64>,
    pub e_tolerance: Option<f64>,
    pub e_nonzero: Option<bool>,
    /// `f_uualpha1 = 0` and `d != 0`, which alone guarantees `e != 0`.
    pub e_sufficient_condition: Option<bool>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub dfe: Vec<f64>,
    pub null_residual: f64,
}

/// Computes every coefficient at a point with R0 = 1.
pub fn coefficients(
    model: &dyn ModelSystem,
    params: &ParamMap,
    alpha1: &str,
    alpha2: &str,
    opts: CoeffOptions,
) -> Result<CenterCoefficients> {
    let pt = BifurcationPoint::new(model, params)?;
    coefficients_at(&pt, alpha1, alpha2, opts)
}

pub fn coefficients_at(
    pt: &BifurcationPoint<'_>,
    alpha1: &str,
    alpha2: &str,
    opts: CoeffOptions,
) -> Result<CenterCoefficients> {
    let (a, a_scale) = pt.a()?;
    let a_is_zero = a.abs() <= opts.tol_a * a_scale;
    let b = pt.b(alpha1)?;
    pt.check_dfe_independent(alpha2)?;
    let fualpha2 = pt.fualpha(alpha2)?;
    let d_contraction = pt.fuualpha_contraction(alpha2)?;
    let fuualpha1_contraction = pt.fuualpha_contraction(alpha1)?;
    let mut out = CenterCoefficients {
        alpha1: alpha1.into(),
        alpha2: alpha2.into(),
        a,
        a_scale,
        a_is_zero,
        b,
        c: None,
        c3: None,
        c2: None,
        c_kernel_sensitivity: None,
        c_is_zero: None,
        d: None,
        d_contraction,
        fuualpha1: None,
        fuualpha1_contraction,
        fualpha2,
        e: None,
        e_contraction: None,
        e_tolerance: None,
        e_nonzero: None,
        e_sufficient_condition: None,
        v: pt.pair.v.clone(),
        w: pt.pair.w.clone(),
        dfe: pt.x0.clone(),
        null_residual: pt.pair.relative_residual(),
    };
    if !a_is_zero {
        return Ok(out);
    }
    let (c, c3, c2) = pt.c(opts.tol_a)?;
    let shifts = [pt.c_kernel_shift(1.0, opts.tol_a)?, pt.c_kernel_shift(-1.0, opts.tol_a)?];
    let c_is_zero = c.abs() <= TOL_C * (c3.abs() + c2.abs());
    let d = pt.fuualpha(alpha2)?;
    let fuualpha1 = pt.fuualpha(alpha1)?;
    out.c = Some(c);
    out.c3 = Some(c3);
    out.c2 = Some(c2);
    out.c_kernel_sensitivity = Some(shifts.iter().map(|s| (s - c).abs()).fold(0.0, f64::max));
    out.c_is_zero = Some(c_is_zero);
    out.d = Some(d);
    out.fuualpha1 = Some(fuualpha1);
    if b != 0.0 && !c_is_zero {
        let e = e_formula(b, c, d, fuualpha1, fualpha2);
        let tol = 1e-6 * (1.0 + (b * d).abs() / (2.0 * (b * c).abs()));
        out.e = Some(e);
        out.e_contraction = Some(e_formula(b, c, d_contraction, fuualpha1_contraction, fualpha2));
        out.e_tolerance = Some(tol);
        out.e_nonzero = Some(e.abs() > tol);
        let f_tol = 1e-7 * (1.0 + fualpha2.abs() + b.abs());
        out.e_sufficient_condition = Some(fuualpha1.abs() <= f_tol && d.abs() > f_tol);
    }
    Ok(out)
}

pub fn coeff_a(model: &dyn ModelSystem, params: &ParamMap) -> Result<f64> {
    Ok(BifurcationPoint::new(model, params)?.a()?.0)
}

pub fn coeff_b(model: &dyn ModelSystem, params: &ParamMap, alpha1: &str) -> Result<f64> {
    BifurcationPoint::new(model, params)?.b(alpha1)
}

pub fn coeff_c(model: &dyn ModelSystem, params: &ParamMap) -> Result<f64> {
    Ok(BifurcationPoint::new(model, params)?.c(TOL_A)?.0)
}

pub fn coeff_d(model: &dyn ModelSystem, params: &ParamMap, alpha2: &str) -> Result<f64> {
    BifurcationPoint::new(model, params)?.fuualpha(alpha2)
}

/// `e` with its tolerance check; errors when `c` vanishes.
pub fn coeff_e(
    model: &dyn ModelSystem,
    params: &ParamMap,
    alpha1: &str,
    alpha2: &str,
) -> Result<f64> {
    let co = coefficients(model, params, alpha1, alpha2, CoeffOptions::default())?;
    match (co.c, co.e) {
        (None, _) => Err(Error::NonzeroA(co.a.abs())),
        (Some(c), None) => Err(Error::DegenerateE(c)),
        (_, Some(e)) => Ok(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BifClass {
    Forward,
    Backward,
    UnfoldedBackward,
    UnfoldedForward,
    TwoStatesBelowThreshold,
    TwoStatesAboveThreshold,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub primary: BifClass,
    pub flags: Vec<BifClass>,
}

/// Theorem-style classification; `b > 0` is required.
pub fn classify(co: &CenterCoefficients) -> Result<Classification> {
    if co.b <= 0.0 {
        return Err(Error::HypothesisViolated(co.b));
    }
    if !co.a_is_zero {
        let primary = if co.a > 0.0 {
            BifClass::Backward
        } else {
            BifClass::Forward
        };
        return Ok(Classification {
            primary,
            flags: vec![primary],
        });
    }
    let degenerate = Classification {
        primary: BifClass::Degenerate,
        flags: vec![BifClass::Degenerate],
    };
    let (Some(c), Some(e), Some(true), Some(false)) = (co.c, co.e, co.e_nonzero, co.c_is_zero)
    else {
        return Ok(degenerate);
    };
    let mut flags = Vec::new();
    if c * e < 0.0 {
        flags.push(BifClass::UnfoldedBackward);
    } else {
        flags.push(BifClass::UnfoldedForward);
    }
    if c < 0.0 && e > 0.0 {
        flags.push(BifClass::TwoStatesBelowThreshold);
    }
    if c > 0.0 && e > 0.0 {
        flags.push(BifClass::TwoStatesAboveThreshold);
    }
    Ok(Classification {
        primary: *flags.last().unwrap(),
        flags,
    })
}

#[cfg(test)]
mod tests;
