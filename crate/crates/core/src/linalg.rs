//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Serializes complex values as `[re, im]` pairs.
pub fn ser_complex_vec<S: serde::Serializer>(
    v: &[C64],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|z| [z.re, z.im]))
}

/// Serializes a matrix as a list of rows.
pub fn ser_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()))
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-sum norm.
pub fn mat_inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigenvalues sorted by decreasing real part, then decreasing imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    let n = a.nrows();
    let mut ev: Vec<C64> = match n {
        0 => vec![],
        1 => vec![C64::new(a[(0, 0)], 0.0)],
        2 => {
            let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
            let tr = p + s;
            let det = p * s - q * r;
            let disc = 0.25 * (p - s) * (p - s) + q * r;
            if disc >= 0.0 {
                let root = disc.sqrt();
                // avoid cancellation for the smaller root
                let big = 0.5 * tr + root.copysign(if tr == 0.0 { 1.0 } else { tr });
                let small = if big != 0.0 { det / big } else { 0.5 * tr - root };
                vec![C64::new(big, 0.0), C64::new(small, 0.0)]
            } else {
                let im = (-disc).sqrt();
                vec![C64::new(0.5 * tr, im), C64::new(0.5 * tr, -im)]
            }
        }
        _ => a.clone().complex_eigenvalues().iter().copied().collect(),
    };
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    ev
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_real_part(ev: &[C64]) -> f64 {
    ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Singular-value view of a square matrix used for kernels and pseudo-solves.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    /// One-sided Jacobi SVD of a square matrix. Left vectors belonging to
    /// numerically zero singular values are completed by Gram-Schmidt so that
    /// `u` is orthogonal (these span the left kernel).
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Solve("SVD of a non-square matrix".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solve("matrix has non-finite entries".into()));
        }
        let mut w = a.clone();
        let mut v = DMatrix::<f64>::identity(n, n);
        let floor = (f64::EPSILON * a.norm()).powi(2);
        let mut converged = false;
        for _ in 0..80 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha = w.column(p).norm_squared();
                    let beta = w.column(q).norm_squared();
                    let gamma = w.column(p).dot(&w.column(q));
                    if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || alpha.min(beta) <= floor {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for m in [&mut w, &mut v] {
                        for i in 0..n {
                            let (x, y) = (m[(i, p)], m[(i, q)]);
                            m[(i, p)] = c * x - s * y;
                            m[(i, q)] = s * x + c * y;
                        }
                    }
                }
            }
            if !rotated {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Solve("SVD did not converge".into()));
        }
        let s = DVector::from_iterator(n, (0..n).map(|k| w.column(k).norm()));
        let smax = s.max();
        let tiny = n as f64 * f64::EPSILON * smax;
        let mut u = DMatrix::<f64>::zeros(n, n);
        let mut pending = Vec::new();
        for k in 0..n {
            if s[k] > tiny {
                u.set_column(k, &(w.column(k) / s[k]));
            } else {
                pending.push(k);
            }
        }
        let mut e = 0;
        for k in pending {
            loop {
                if e >= n {
                    return Err(Error::Solve("could not complete left singular basis".into()));
                }
                let mut cand = DVector::<f64>::zeros(n);
                cand[e] = 1.0;
                e += 1;
                for _ in 0..2 {
                    for j in 0..n {
                        if j == k {
                            continue;
                        }
                        let col = u.column(j).clone_owned();
                        let proj = col.dot(&cand);
                        cand -= col * proj;
                    }
                }
                let norm = cand.norm();
                if norm > 1e-8 {
                    u.set_column(k, &(cand / norm));
                    break;
                }
            }
        }
        Ok(Self {
            u,
            s,
            v_t: v.transpose(),
        })
    }

    /// Indices of singular values in increasing order.
    pub fn ascending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.s.len()).collect();
        idx.sort_by(|&i, &j| self.s[i].total_cmp(&self.s[j]));
        idx
    }

    pub fn right_vector(&self, k: usize) -> Vec<f64> {
        self.v_t.row(k).iter().copied().collect()
    }

    pub fn left_vector(&self, k: usize) -> Vec<f64> {
        self.u.column(k).iter().copied().collect()
    }

    /// Minimum-norm solution ignoring the singular values in `drop`.
    pub fn solve_excluding(&self, y: &[f64], drop: &[usize]) -> Vec<f64> {
        let n = self.s.len();
        let mut z = vec![0.0; n];
        for k in 0..n {
            if drop.contains(&k) || self.s[k] == 0.0 {
                continue;
            }
            let coef = (0..n).map(|i| self.u[(i, k)] * y[i]).sum::<f64>() / self.s[k];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += coef * self.v_t[(k, j)];
            }
        }
        z
    }
}

/// Solves a square system by LU; errors when the matrix is singular.
pub fn solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    a.clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::Solve("singular matrix".into()))
}

pub fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).iter().copied().collect()
}

pub fn vec_mat(v: &[f64], a: &DMatrix<f64>) -> Vec<f64> {
    (DVector::from_column_slice(v).transpose() * a)
        .iter()
        .copied()
        .collect()
}

/// Real roots of a polynomial with ascending coefficients, each polished by Newton
/// and returned in increasing order. Roots whose imaginary part is below
/// `1e-7 (1 + |z|)` are treated as real; a double root therefore appears twice.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let deg = c.len() - 1;
    let mut roots = match deg {
        0 => vec![],
        1 => vec![-c[0] / c[1]],
        2 => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * cc;
            let tol = 1e-14 * (b * b + (4.0 * a * cc).abs());
            if disc < -tol {
                vec![]
            } else {
                let q = -0.5 * (b + disc.max(0.0).sqrt().copysign(b));
                if q == 0.0 {
                    vec![0.0, 0.0]
                } else {
                    vec![q / a, cc / q]
                }
            }
        }
        _ => {
            let mut comp = DMatrix::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -c[i] / c[deg];
            }
            eigenvalues(&comp)
                .into_iter()
                .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.norm()))
                .map(|z| z.re)
                .collect()
        }
    };
    for r in roots.iter_mut() {
        *r = polish(&c, *r);
    }
    roots.sort_by(f64::total_cmp);
    roots
}

pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn poly_deriv_eval(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, a)| acc * x + k as f64 * a)
}

fn polish(c: &[f64], mut x: f64) -> f64 {
    for _ in 0..8 {
        let d = poly_deriv_eval(c, x);
        if d == 0.0 {
            break;
        }
        let step = poly_eval(c, x) / d;
        let next = x - step;
        // keep the better of the two iterates
        if poly_eval(c, next).abs() >= poly_eval(c, x).abs() {
            break;
        }
        x = next;
    }
    x
}

/// Root of a continuous scalar function on a sign-changing bracket by the Illinois
/// variant of regula falsi. Returns the best point after `budget` evaluations.
pub fn bracket_root<F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64, budget: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Solve(format!(
            "no sign change on [{lo}, {hi}] ({flo:e}, {fhi:e})"
        )));
    }
    let mut side = 0i8;
    for _ in 0..budget {
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        if !x.is_finite() || x <= lo.min(hi) || x >= lo.max(hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx == 0.0 || (hi - lo).abs() <= xtol * (1.0 + x.abs()) {
            return Ok(x);
        }
        if fx.signum() == fhi.signum() {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        }
    }
    Ok(if flo.abs() < fhi.abs() { lo } else { hi })
}

/// Expands `[x/2^k, x*2^k]` geometrically until `f` changes sign, then solves.
/// Suited to positive parameters on which `f` is monotone.
pub fn positive_root<F>(mut f: F, x: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(x)?;
    if f0 == 0.0 {
        return Ok(x);
    }
    let (mut lo, mut hi) = (x, x);
    for _ in 0..60 {
        lo *= 0.5;
        hi *= 2.0;
        let (flo, fhi) = (f(lo), f(hi));
        if let Ok(v) = fhi {
            if v.signum() != f0.signum() {
                return bracket_root(&mut f, x, hi, xtol, 200);
            }
        }
        if let Ok(v) = flo {
            if v.signum() != f0.signum() {
                return bracket_root(&mut f, lo, x, xtol, 200);
            }
        }
    }
    Err(Error::Solve(format!("no sign change found around {x}")))
}
