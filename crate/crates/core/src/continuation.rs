//! Pseudo-arclength continuation of steady-state branches in one parameter,
//! fold detection and refinement, and the fold locus in a second parameter.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bifcoeffs::{coefficients, CoeffOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, inf_norm, ser_complex_vec, Svd, C64};
use crate::models::{check_params, ModelSystem};
use crate::ngm;
use crate::numdiff::{derivative_raw, jacobian_raw, Dir};
use crate::params::ParamMap;
use crate::steadystate::{positivity, stability_of, Positivity, Stability, SteadyState};

/// Version of the CSV and JSON branch layouts.
pub const SCHEMA_VERSION: u32 = 1;

const MAX_CORRECTOR: usize = 15;

#[derive(Debug, Clone, Serialize)]
pub struct BranchSample {
    /// Arclength from the start.
    pub s: f64,
    pub alpha1: f64,
    pub x: Vec<f64>,
    #[serde(serialize_with = "ser_complex_vec")]
    pub eigenvalues: Vec<C64>,
    pub stability: Stability,
    pub r0: Option<f64>,
    pub max_re: f64,
    /// The alpha1 component of the tangent changed sign since the previous sample.
    pub fold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum Termination {
    BoundaryExit,
    RangeExit,
    ParameterInadmissible(String),
    MaxSteps,
    CorrectorFailure(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldMarker {
    /// Index of the first sample past the turning point.
    pub index: usize,
    /// The augmented Jacobian `[f_x | f_alpha]` has full rank (a fold, not a branch point).
    pub augmented_rank_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    pub schema_version: u32,
    pub model: String,
    pub alpha1: String,
    pub state_names: Vec<String>,
    pub params: ParamMap,
    pub samples: Vec<BranchSample>,
    pub folds: Vec<FoldMarker>,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    /// Initial orientation of the alpha1 component of the tangent (+1 or -1).
    pub direction: f64,
    pub range: Option<(f64, f64)>,
    pub max_steps: usize,
    /// Initial step as a fraction of the problem scale.
    pub initial_step: f64,
    /// Stop when a branch that started positive leaves the positive orthant.
    pub stop_at_boundary: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            direction: 1.0,
            range: None,
            max_steps: 10_000,
            initial_step: 1e-2,
            stop_at_boundary: true,
        }
    }
}

/// The map `(x, alpha) -> f(x, p(alpha))` with all other parameters fixed.
struct Problem<'a> {
    model: &'a dyn ModelSystem,
    base: Vec<f64>,
    k: usize,
    n: usize,
}

impl<'a> Problem<'a> {
    fn new(model: &'a dyn ModelSystem, params: &ParamMap, alpha: &str) -> Result<Self> {
        Ok(Self {
            model,
            base: params.values().to_vec(),
            k: params.index_of(alpha)?,
            n: model.dim(),
        })
    }

    fn p(&self, alpha: f64) -> Vec<f64> {
        let mut p = self.base.clone();
        p[self.k] = alpha;
        p
    }

    fn f(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.model.rhs(&y[..self.n], &self.p(y[self.n]))
    }

    fn jx(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        jacobian_raw(self.model, &y[..self.n], &self.p(y[self.n]))
    }

    fn falpha(&self, y: &[f64]) -> Result<Vec<f64>> {
        derivative_raw(self.model, &y[..self.n], &self.p(y[self.n]), &[Dir::P(self.k)])
    }

    /// `n x (n+1)` Jacobian `[f_x | f_alpha]`.
    fn jac(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let jx = self.jx(y)?;
        let fa = self.falpha(y)?;
        Ok(DMatrix::from_fn(self.n, self.n + 1, |r, c| {
            if c < self.n {
                jx[(r, c)]
            } else {
                fa[r]
            }
        }))
    }

    fn residual_ok(&self, y: &[f64], g: &[f64]) -> bool {
        inf_norm(g) <= 1e-10 * (1.0 + inf_norm(&y[..self.n]))
    }

    fn sample(&self, s: f64, y: &[f64], fold: bool) -> Result<BranchSample> {
        let p = self.p(y[self.n]);
        let x = &y[..self.n];
        let jx = jacobian_raw(self.model, x, &p)?;
        let ev = linalg::eigenvalues(&jx);
        Ok(BranchSample {
            s,
            alpha1: y[self.n],
            x: x.to_vec(),
            stability: stability_of(&ev, linalg::mat_inf_norm(&jx)),
            max_re: linalg::max_real_part(&ev),
            eigenvalues: ev,
            r0: ngm::r0_raw(self.model, &p).ok().map(|r| r.r0),
            fold,
        })
    }

    /// Pseudo-arclength corrector from the predicted point `yp` along tangent `t`.
    fn correct(&self, yp: &[f64], t: &[f64]) -> Result<(Vec<f64>, usize)> {
        let m = self.n + 1;
        let mut y = yp.to_vec();
        for it in 1..=MAX_CORRECTOR {
            let g = self.f(&y)?;
            let mut r = g.clone();
            r.push(y.iter().zip(yp).zip(t).map(|((a, b), c)| (a - b) * c).sum());
            let jac = self.jac(&y)?;
            let mm = bordered(&jac, t);
            let dy = linalg::solve(&mm, &r)?;
            y.iter_mut().zip(&dy).for_each(|(a, d)| *a -= d);
            if y.iter().any(|v| !v.is_finite()) {
                break;
            }
            let g = self.f(&y)?;
            if self.residual_ok(&y, &g) && inf_norm(&dy) <= 1e-8 * (1.0 + inf_norm(&y)) {
                return Ok((y, it));
            }
            debug_assert_eq!(y.len(), m);
        }
        Err(Error::Solve("corrector did not converge".into()))
    }
}

/// Stacks `row` under the `n x (n+1)` matrix `jac`.
fn bordered(jac: &DMatrix<f64>, row: &[f64]) -> DMatrix<f64> {
    let n = jac.nrows();
    DMatrix::from_fn(n + 1, n + 1, |r, c| if r < n { jac[(r, c)] } else { row[c] })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Unit null vector of an `n x (n+1)` matrix.
fn null_direction(jac: &DMatrix<f64>) -> Result<Vec<f64>> {
    let square = bordered(jac, &vec![0.0; jac.ncols()]);
    let svd = Svd::new(&square)?;
    Ok(svd.right_vector(svd.ascending()[0]))
}

/// Tangent continuing the orientation of `prev`.
fn tangent(jac: &DMatrix<f64>, prev: &[f64]) -> Result<Vec<f64>> {
    let n = jac.nrows();
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    let t = linalg::solve(&bordered(jac, prev), &rhs).or_else(|_| null_direction(jac))?;
    let nt = norm2(&t);
    let sign = if dot(&t, prev) < 0.0 { -1.0 } else { 1.0 };
    Ok(t.iter().map(|v| sign * v / nt).collect())
}

fn augmented_rank_ok(jac: &DMatrix<f64>) -> bool {
    let square = bordered(jac, &vec![0.0; jac.ncols()]);
    match Svd::new(&square) {
        Ok(svd) => {
            let asc = svd.ascending();
            // the padded zero row contributes one zero singular value
            svd.s[asc[1]] > 1e-8 * (1.0 + linalg::mat_inf_norm(jac))
        }
        Err(_) => false,
    }
}

/// Traces the branch through `start` as `alpha1` varies.
pub fn trace(
    model: &dyn ModelSystem,
    params: &ParamMap,
    alpha1: &str,
    start: &SteadyState,
    opts: TraceOptions,
) -> Result<Branch> {
    check_params(model, params)?;
    let prob = Problem::new(model, params, alpha1)?;
    let n = prob.n;
    if start.x.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: start.x.len(),
        });
    }
    let mut y = start.x.clone();
    y.push(params.values()[prob.k]);
    let g = prob.f(&y)?;
    if inf_norm(&g) > 1e-8 * (1.0 + inf_norm(&start.x)) {
        return Err(Error::Domain("start point is not a steady state".into()));
    }
    let scale = inf_norm(&y).max(1.0);
    let (h_min, h_max) = (1e-6 * scale, 1e-1 * scale);
    let mut h = (opts.initial_step * scale).clamp(h_min, h_max);

    let jac = prob.jac(&y)?;
    let mut t = null_direction(&jac)?;
    let orient = if t[n].abs() > 1e-12 { t[n] } else { t[model.infected()[0]] };
    if orient.signum() != opts.direction.signum() {
        t.iter_mut().for_each(|v| *v = -*v);
    }
    let started_positive = positivity(&start.x) == Positivity::Positive;
    let mut samples = vec![prob.sample(0.0, &y, false)?];
    let mut folds = Vec::new();
    let mut s = 0.0;
    let mut termination = Termination::MaxSteps;

    'outer: for _ in 0..opts.max_steps {
        let (yn, tn, iters) = loop {
            let yp: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a + h * b).collect();
            if model.check_admissible(&prob.p(yp[n])).is_err() {
                h *= 0.5;
                if h < h_min {
                    termination = Termination::ParameterInadmissible(format!(
                        "{alpha1} = {} leaves the admissible set",
                        yp[n]
                    ));
                    break 'outer;
                }
                continue;
            }
            let attempt = prob.correct(&yp, &t).and_then(|(yn, it)| {
                let tn = tangent(&prob.jac(&yn)?, &t)?;
                Ok((yn, tn, it))
            });
            match attempt {
                Ok((yn, tn, it)) if dot(&tn, &t) > 0.8 || h <= h_min => break (yn, tn, it),
                Ok(_) | Err(_) => {
                    h *= 0.5;
                    if h < h_min {
                        termination = Termination::CorrectorFailure(format!(
                            "no convergence at {alpha1} = {} with the minimum step",
                            y[n]
                        ));
                        break 'outer;
                    }
                }
            }
        };
        if let Some((lo, hi)) = opts.range {
            if yn[n] < lo || yn[n] > hi {
                termination = Termination::RangeExit;
                break;
            }
        }
        if model.check_admissible(&prob.p(yn[n])).is_err() {
            termination = Termination::ParameterInadmissible(format!(
                "{alpha1} = {} leaves the admissible set",
                yn[n]
            ));
            break;
        }
        if opts.stop_at_boundary && started_positive && positivity(&yn[..n]) != Positivity::Positive {
            termination = Termination::BoundaryExit;
            break;
        }
        let fold = t[n] != 0.0 && tn[n] != 0.0 && t[n].signum() != tn[n].signum();
        s += norm2(&yn.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if fold {
            folds.push(FoldMarker {
                index: samples.len(),
                augmented_rank_ok: augmented_rank_ok(&prob.jac(&yn)?),
            });
        }
        samples.push(prob.sample(s, &yn, fold)?);
        y = yn;
        t = tn;
        if iters > 8 {
            h = (h * 0.5).max(h_min);
        } else if iters <= 3 {
            h = (h * 1.3).min(h_max);
        }
    }
    Ok(Branch {
        schema_version: SCHEMA_VERSION,
        model: model.id().into(),
        alpha1: alpha1.into(),
        state_names: model.state_names().to_vec(),
        params: params.clone(),
        samples,
        folds,
        termination,
    })
}

impl Branch {
    /// CSV with a versioned comment line; columns `s, alpha1, states..., R0, maxRe, fold_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(
            out,
            "# backbif branch v{} model={} alpha1={} termination={}",
            self.schema_version,
            self.model,
            self.alpha1,
            serde_json::to_string(&self.termination).map_err(|e| Error::Io(e.to_string()))?
        )?;
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["s".to_string(), self.alpha1.clone()];
        header.extend(self.state_names.iter().cloned());
        header.extend(["R0", "maxRe", "fold_flag"].map(String::from));
        w.write_record(&header).map_err(io)?;
        for smp in &self.samples {
            let mut rec = vec![fmt(smp.s), fmt(smp.alpha1)];
            rec.extend(smp.x.iter().map(|v| fmt(*v)));
            rec.push(smp.r0.map(fmt).unwrap_or_default());
            rec.push(fmt(smp.max_re));
            rec.push(u8::from(smp.fold).to_string());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// A fold refined on the Moore system `f = 0, J w = 0, w_ref . w = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct FoldPoint {
    pub alpha1: f64,
    pub x: Vec<f64>,
    /// Right null vector of the Jacobian, scaled to unit length.
    pub null_vector: Vec<f64>,
    pub sample_index: usize,
    pub iterations: usize,
    pub residual: f64,
}

fn moore_refine(prob: &Problem, y0: &[f64], w0: &[f64]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let n = prob.n;
    let w_ref = w0.to_vec();
    let mut y = y0.to_vec();
    let mut w = w0.to_vec();
    let scale = inf_norm(y0).max(1.0);
    for it in 1..=50 {
        let x = &y[..n];
        let p = prob.p(y[n]);
        let jx = jacobian_raw(prob.model, x, &p)?;
        let fa = prob.falpha(&y)?;
        let g = prob.model.rhs(x, &p)?;
        let jw = linalg::mat_vec(&jx, &w);
        let m = 2 * n + 1;
        let mut r = g.clone();
        r.extend(&jw);
        r.push(dot(&w_ref, &w) - 1.0);
        let mut mm = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            for j in 0..n {
                mm[(i, j)] = jx[(i, j)];
                mm[(n + i, n + 1 + j)] = jx[(i, j)];
            }
            mm[(i, n)] = fa[i];
        }
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = derivative_raw(prob.model, x, &p, &[Dir::X(&e), Dir::X(&w)])?;
            e[j] = 0.0;
            for i in 0..n {
                mm[(n + i, j)] = col[i];
            }
        }
        let col = derivative_raw(prob.model, x, &p, &[Dir::X(&w), Dir::P(prob.k)])?;
        for i in 0..n {
            mm[(n + i, n)] = col[i];
        }
        for j in 0..n {
            mm[(2 * n, n + 1 + j)] = w_ref[j];
        }
        let dz = linalg::solve(&mm, &r)?;
        for i in 0..=n {
            y[i] -= dz[i];
        }
        for j in 0..n {
            w[j] -= dz[n + 1 + j];
        }
        if dz[n].abs() <= 1e-9 * scale && inf_norm(&dz[..n]) <= 1e-9 * scale {
            let g = prob.f(&y)?;
            if prob.residual_ok(&y, &g) {
                return Ok((y, w, it));
            }
        }
    }
    Err(Error::Solve("fold refinement did not converge".into()))
}

/// Refines every fold marker of a branch.
pub fn fold_points(model: &dyn ModelSystem, branch: &Branch) -> Result<Vec<FoldPoint>> {
    let prob = Problem::new(model, &branch.params, &branch.alpha1)?;
    let n = prob.n;
    let mut out = Vec::new();
    for marker in &branch.folds {
        let (a, b) = (&branch.samples[marker.index - 1], &branch.samples[marker.index]);
        let mut y: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| 0.5 * (p + q)).collect();
        y.push(0.5 * (a.alpha1 + b.alpha1));
        let jx = prob.jx(&y)?;
        let svd = Svd::new(&jx)?;
        let w0 = svd.right_vector(svd.ascending()[0]);
        let (y, w, iterations) = moore_refine(&prob, &y, &w0)?;
        let nw = norm2(&w);
        let residual = inf_norm(&prob.f(&y)?);
        out.push(FoldPoint {
            alpha1: y[n],
            x: y[..n].to_vec(),
            null_vector: w.iter().map(|v| v / nw).collect(),
            sample_index: marker.index,
            iterations,
            residual,
        });
    }
    Ok(out)
}

/// Unstable-eigenvalue counts on the two samples adjacent to a fold.
#[derive(Debug, Clone, Serialize)]
pub struct EigenCrossing {
    pub unstable_before: usize,
    pub unstable_after: usize,
    /// Exactly one real eigenvalue changed sign.
    pub ok: bool,
}

pub fn eigen_crossing(branch: &Branch, marker: &FoldMarker) -> EigenCrossing {
    let count = |s: &BranchSample| s.eigenvalues.iter().filter(|z| z.re > 0.0).count();
    let real_count = |s: &BranchSample| {
        s.eigenvalues
            .iter()
            .filter(|z| z.re > 0.0 && z.im == 0.0)
            .count()
    };
    let (a, b) = (&branch.samples[marker.index - 1], &branch.samples[marker.index]);
    let (ua, ub) = (count(a), count(b));
    EigenCrossing {
        unstable_before: ua,
        unstable_after: ub,
        ok: ua.abs_diff(ub) == 1 && real_count(a).abs_diff(real_count(b)) == 1,
    }
}

/// `|alpha1 - alpha1_fold| / |x - x_fold|^2` over one decade of approach.
#[derive(Debug, Clone, Serialize)]
pub struct ParabolaCheck {
    /// `(distance, ratio)` pairs.
    pub ratios: Vec<(f64, f64)>,
    pub spread: f64,
    pub ok: bool,
}

/// Solves `f(x, alpha) = 0` with `dir . (x - x_ref) = eps` from a guess.
fn constrained_point(prob: &Problem, x_ref: &[f64], dir: &[f64], eps: f64, guess: &[f64]) -> Result<Vec<f64>> {
    let n = prob.n;
    let mut y = guess.to_vec();
    let mut row = dir.to_vec();
    row.push(0.0);
    for _ in 0..40 {
        let mut r = prob.f(&y)?;
        r.push(dot(dir, &y[..n].iter().zip(x_ref).map(|(a, b)| a - b).collect::<Vec<_>>()) - eps);
        let mm = bordered(&prob.jac(&y)?, &row);
        let dy = linalg::solve(&mm, &r)?;
        y.iter_mut().zip(&dy).for_each(|(a, d)| *a -= d);
        if inf_norm(&dy) <= 1e-13 * (1.0 + inf_norm(&y)) {
            break;
        }
    }
    let g = prob.f(&y)?;
    if !prob.residual_ok(&y, &g) {
        return Err(Error::Solve("constrained Newton did not converge".into()));
    }
    Ok(y)
}

pub fn parabola_check(model: &dyn ModelSystem, branch: &Branch, fold: &FoldPoint) -> Result<ParabolaCheck> {
    let prob = Problem::new(model, &branch.params, &branch.alpha1)?;
    let n = prob.n;
    let w = &fold.null_vector;
    let xs = inf_norm(&fold.x).max(1.0);
    let mut guess = fold.x.clone();
    guess.push(fold.alpha1);
    let mut ratios = Vec::new();
    for k in 0..6 {
        let eps = 1e-2 * xs * 10f64.powf(-(k as f64) / 5.0);
        let mut start: Vec<f64> = fold.x.iter().zip(w).map(|(a, b)| a + eps * b).collect();
        start.push(guess[n]);
        let y = constrained_point(&prob, &fold.x, w, eps, &start)?;
        let dist2: f64 = y[..n].iter().zip(&fold.x).map(|(a, b)| (a - b).powi(2)).sum();
        ratios.push((dist2.sqrt(), (y[n] - fold.alpha1).abs() / dist2));
        guess = y;
    }
    let max = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let min = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let spread = max / min;
    Ok(ParabolaCheck {
        ok: min > 0.0 && spread < 2.0,
        spread,
        ratios,
    })
}

/// Measured slopes of the fold locus at the base point compared with `e`.
#[derive(Debug, Clone, Serialize)]
pub struct FoldSlope {
    pub alpha1: String,
    pub alpha2: String,
    /// Measured `dU/dalpha2` at the base point, `U = v.(x_fold - x_dfe)`.
    pub du_dalpha2: f64,
    /// Measured `dA1/dalpha2`.
    pub da1_dalpha2: f64,
    pub e: f64,
    pub two_e: f64,
    pub ratio_to_two_e: f64,
    pub ratio_to_e: f64,
    /// `|slope - 2e| / |2e| <= 0.05`.
    pub agrees_with_two_e: bool,
    /// `|slope - e| / |e| <= 0.05`.
    pub agrees_with_e: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocusPoint {
    pub alpha2: f64,
    pub alpha1: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldLocus {
    pub schema_version: u32,
    pub alpha1: String,
    pub alpha2: String,
    pub base_alpha1: f64,
    pub base_alpha2: f64,
    pub points: Vec<LocusPoint>,
    pub slope: FoldSlope,
    pub truncated: Option<String>,
}

/// Fold of the nontrivial branch near the base point, parametrized by
/// `u = v.(x - x_dfe)` so the disease-free line is excluded.
struct LocusSolver<'a> {
    model: &'a dyn ModelSystem,
    base: ParamMap,
    k1: usize,
    k2: usize,
    v: Vec<f64>,
    w: Vec<f64>,
    alpha1_star: f64,
}

impl LocusSolver<'_> {
    /// `(x, alpha1, d alpha1/du)` on the nontrivial branch at `u`.
    fn branch_at(&self, p: &[f64], x0: &[f64], u: f64, guess: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.model.dim();
        let prob = Problem {
            model: self.model,
            base: p.to_vec(),
            k: self.k1,
            n,
        };
        let y = constrained_point(&prob, x0, &self.v, u, guess)?;
        let mut row = self.v.clone();
        row.push(0.0);
        let mm = bordered(&prob.jac(&y)?, &row);
        let mut rhs = vec![0.0; n + 1];
        rhs[n] = 1.0;
        let tdir = linalg::solve(&mm, &rhs)?;
        Ok((y, tdir[n]))
    }

    /// `(alpha1_fold, u_fold)` at `alpha2`, scanning `u` on both sides of zero
    /// over magnitudes `u_ref 2^k`.
    fn fold_at(&self, alpha2: f64, u_ref: f64) -> Result<(f64, f64)> {
        let mut p = self.base.values().to_vec();
        p[self.k2] = alpha2;
        self.model.check_admissible(&p)?;
        let x0 = self.model.dfe(&p)?;
        let n = x0.len();
        for side in [1.0, -1.0] {
            let mut guess: Vec<f64> = x0.iter().zip(&self.w).map(|(a, b)| a + side * u_ref * 2f64.powi(-14) * b).collect();
            guess.push(self.alpha1_star);
            let mut prev: Option<(f64, f64, Vec<f64>)> = None;
            for k in -14..=8 {
                let u = side * u_ref * 2f64.powi(k);
                let Ok((y, slope)) = self.branch_at(&p, &x0, u, &guess) else {
                    break;
                };
                if let Some((pu, ps, py)) = &prev {
                    if ps.signum() != slope.signum() {
                        let mut g = py.clone();
                        let root = linalg::bracket_root(
                            |uu| {
                                let (yy, s) = self.branch_at(&p, &x0, uu, &g)?;
                                g = yy;
                                Ok(s)
                            },
                            *pu,
                            u,
                            1e-13,
                            200,
                        )?;
                        let (yy, _) = self.branch_at(&p, &x0, root, py)?;
                        return Ok((yy[n], root));
                    }
                }
                guess = y.clone();
                prev = Some((u, slope, y));
            }
        }
        Err(Error::Solve(format!("no fold found near alpha2 = {alpha2}")))
    }
}

/// Fold of the unfolding at `alpha2 = alpha2_value`, for base parameters at a
/// point with R0 = 1 and `a = 0`.
pub fn unfolding_fold(
    model: &dyn ModelSystem,
    params: &ParamMap,
    alpha1: &str,
    alpha2: &str,
    alpha2_value: f64,
) -> Result<LocusPoint> {
    let pt = crate::bifcoeffs::BifurcationPoint::new(model, params)?;
    let solver = LocusSolver {
        model,
        base: params.clone(),
        k1: params.index_of(alpha1)?,
        k2: params.index_of(alpha2)?,
        v: pt.pair().v.clone(),
        w: pt.pair().w.clone(),
        alpha1_star: params.get(alpha1)?,
    };
    let a2 = params.get(alpha2)?;
    let h = (alpha2_value - a2).abs();
    if h == 0.0 {
        return Ok(LocusPoint {
            alpha2: a2,
            alpha1: solver.alpha1_star,
            u: 0.0,
        });
    }
    let (a1, u) = solver.fold_at(alpha2_value, h)?;
    Ok(LocusPoint {
        alpha2: alpha2_value,
        alpha1: a1,
        u,
    })
}

/// Fold locus `(alpha2, A1(alpha2), U(alpha2))` through a point with R0 = 1 and
/// `a = 0`, plus the slope at the base point measured by central differences
/// with one Richardson level.
pub fn fold_locus(
    model: &dyn ModelSystem,
    params: &ParamMap,
    alpha1: &str,
    alpha2: &str,
    range: (f64, f64),
    points: usize,
) -> Result<FoldLocus> {
    let co = coefficients(model, params, alpha1, alpha2, CoeffOptions::default())?;
    if !co.a_is_zero {
        return Err(Error::NonzeroA(co.a));
    }
    if co.b <= 0.0 {
        return Err(Error::HypothesisViolated(co.b));
    }
    let (Some(c), Some(e)) = (co.c, co.e) else {
        return Err(Error::DegenerateE(co.c.unwrap_or(0.0)));
    };
    if co.c_is_zero == Some(true) || co.e_nonzero != Some(true) {
        return Err(Error::DegenerateE(c));
    }
    let solver = LocusSolver {
        model,
        base: params.clone(),
        k1: params.index_of(alpha1)?,
        k2: params.index_of(alpha2)?,
        v: co.v.clone(),
        w: co.w.clone(),
        alpha1_star: params.get(alpha1)?,
    };
    let a2 = params.get(alpha2)?;
    let h = if a2 != 0.0 { 1e-3 * a2.abs() } else { 1e-4 };
    let central = |h: f64| -> Result<(f64, f64)> {
        let (a_up, u_up) = solver.fold_at(a2 + h, h)?;
        let (a_dn, u_dn) = solver.fold_at(a2 - h, h)?;
        Ok(((u_up - u_dn) / (2.0 * h), (a_up - a_dn) / (2.0 * h)))
    };
    let (du1, da1) = central(h)?;
    let (du2, da2) = central(0.5 * h)?;
    let du = (4.0 * du2 - du1) / 3.0;
    let da = (4.0 * da2 - da1) / 3.0;
    let slope = FoldSlope {
        alpha1: alpha1.into(),
        alpha2: alpha2.into(),
        du_dalpha2: du,
        da1_dalpha2: da,
        e,
        two_e: 2.0 * e,
        ratio_to_two_e: du / (2.0 * e),
        ratio_to_e: du / e,
        agrees_with_two_e: (du - 2.0 * e).abs() <= 0.05 * (2.0 * e).abs(),
        agrees_with_e: (du - e).abs() <= 0.05 * e.abs(),
    };
    let mut out = Vec::new();
    let mut truncated = None;
    for i in 0..points {
        let t = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.5 };
        let alpha = range.0 + t * (range.1 - range.0);
        if alpha == a2 {
            out.push(LocusPoint {
                alpha2: alpha,
                alpha1: solver.alpha1_star,
                u: 0.0,
            });
            continue;
        }
        match solver.fold_at(alpha, (alpha - a2).abs()) {
            Ok((a1, u)) => out.push(LocusPoint { alpha2: alpha, alpha1: a1, u }),
            Err(err) => {
                truncated = Some(format!("stopped at {alpha2} = {alpha}: {err}"));
                break;
            }
        }
    }
    Ok(FoldLocus {
        schema_version: SCHEMA_VERSION,
        alpha1: alpha1.into(),
        alpha2: alpha2.into(),
        base_alpha1: solver.alpha1_star,
        base_alpha2: a2,
        points: out,
        slope,
        truncated,
    })
}
