//! Dense semidefinite programming in inequality form.
//!
//! Problem: `min c'x  s.t.  F(x) = F0 + sum_i x_i F_i >= 0` over a list of
//! symmetric blocks, `x` free. This is the shape the LMI assembly produces
//! after eliminating its equality constraints.
//!
//! The solver runs a primal-dual path-following iteration on the homogeneous
//! self-dual embedding in variables `(x, tau, S, Y, kappa)`:
//!
//! ```text
//!   F0 tau + sum_i x_i F_i - S = 0        S, Y >= 0
//!   <F_i, Y> - c_i tau        = 0         tau, kappa >= 0
//!   -c'x - <F0, Y> - kappa    = 0
//! ```
//!
//! with Nesterov-Todd scaling of the PSD pairs and a Mehrotra
//! predictor-corrector. Each Newton step reduces to a dense Cholesky solve
//! with the Schur matrix `M_ij = <F_i, W^-1 F_j W^-1>`. Divergence of
//! `kappa/tau` signals an infeasible or unbounded problem; for infeasible
//! problems the scaled dual iterate is returned as an improving-ray
//! certificate (`Y >= 0`, `<F_i,Y> = 0`, `<F0,Y> < 0`).

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;

/// One PSD block of the LMI `F0 + sum_i x_i F_i >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub dim: usize,
    pub f0: DMatrix<f64>,
    /// One symmetric matrix per decision variable.
    pub fs: Vec<DMatrix<f64>>,
}

/// An SDP in inequality form.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub c: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
    /// Constant added to `c'x` when reporting the objective.
    pub obj_offset: f64,
}

impl SdpProblem {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (bi, b) in self.blocks.iter().enumerate() {
            if b.f0.nrows() != b.dim || b.f0.ncols() != b.dim {
                return Err(Error::DimensionMismatch(format!("block {bi}: F0 shape")));
            }
            if b.fs.len() != self.n_vars() {
                return Err(Error::DimensionMismatch(format!("block {bi}: needs one F per variable")));
            }
            for f in std::iter::once(&b.f0).chain(b.fs.iter()) {
                if (f - f.transpose()).abs().max() > 1e-12 * (1.0 + f.abs().max()) {
                    return Err(Error::InvalidInput(format!("block {bi}: matrices must be symmetric")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

/// Solver output. `status == Optimal` guarantees the residual invariants
/// `pres, dres <= tol` and `gap <= tol (1 + |objective|)`.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    pub pres: f64,
    pub dres: f64,
    pub relgap: f64,
    pub iterations: usize,
    /// Dual improving ray (one PSD matrix per block) when infeasible.
    pub certificate: Option<Vec<DMatrix<f64>>>,
    pub message: String,
}

struct Scaling {
    /// NT factor R per block: R^-1 S R^-T = R' Y R = diag(lambda).
    r: Vec<DMatrix<f64>>,
    rinv: Vec<DMatrix<f64>>,
    lambda: Vec<DVector<f64>>,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest `a` with `S + a dS >= 0`, assuming `S > 0`, capped at 1.
fn max_step(s: &DMatrix<f64>, ds: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    if n == 0 {
        return 1.0;
    }
    let chol = match s.clone().cholesky() {
        Some(c) => c,
        None => return 0.0,
    };
    // eigmin of L^-1 dS L^-T
    let l = chol.l();
    let mut m = ds.clone();
    l.solve_lower_triangular_mut(&mut m);
    let mut mt = m.transpose();
    l.solve_lower_triangular_mut(&mut mt);
    let eig = nalgebra::SymmetricEigen::new(sym(&mt.transpose()));
    let emin = eig.eigenvalues.min();
    if emin >= 0.0 {
        1.0
    } else {
        (1.0 / -emin).min(1.0)
    }
}

fn nt_scaling(s: &[DMatrix<f64>], y: &[DMatrix<f64>]) -> Option<Scaling> {
    let mut r = Vec::with_capacity(s.len());
    let mut rinv = Vec::with_capacity(s.len());
    let mut lambda = Vec::with_capacity(s.len());
    for (sb, yb) in s.iter().zip(y.iter()) {
        let ls = sb.clone().cholesky()?.l();
        let ly = yb.clone().cholesky()?.l();
        let svd = (ly.transpose() * &ls).svd(true, true);
        let u = svd.u.as_ref()?;
        let vt = svd.v_t.as_ref()?;
        let sig = &svd.singular_values;
        if sig.min() <= 0.0 {
            return None;
        }
        let sig_isqrt = DMatrix::from_diagonal(&sig.map(|v| 1.0 / v.sqrt()));
        // R = Ls V Sigma^{-1/2}; R^-1 = Sigma^{-1/2} U' Ly'
        let rb = &ls * vt.transpose() * &sig_isqrt;
        let rb_inv = &sig_isqrt * u.transpose() * ly.transpose();
        r.push(rb);
        rinv.push(rb_inv);
        lambda.push(sig.clone_owned());
    }
    Some(Scaling { r, rinv, lambda })
}

/// Solve the SDP. Deterministic: identical inputs give identical iterates.
pub fn solve(prob: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution> {
    prob.validate()?;
    let n = prob.n_vars();
    let blocks = &prob.blocks;
    let nu: f64 = blocks.iter().map(|b| b.dim as f64).sum::<f64>() + 1.0;

    let mut x = DVector::<f64>::zeros(n);
    let mut s: Vec<DMatrix<f64>> = blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect();
    let mut y: Vec<DMatrix<f64>> = blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect();
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let norm_f0: f64 = blocks.iter().map(|b| b.f0.abs().max()).fold(0.0, f64::max).max(1.0);
    let norm_c = prob.c.abs().max().max(1.0);

    // on stalls, report the current de-homogenized iterate honestly: optimal
    // if it already meets the tolerance, numerical failure otherwise
    let mut last_metrics = (f64::NAN, f64::NAN, f64::NAN, f64::NAN); // pres, dres, relgap, pobj
    macro_rules! fail {
        ($msg:expr, $x:expr, $it:expr) => {{
            let (pres, dres, relgap, pobj) = last_metrics;
            let ok = pres <= tol && dres <= tol && relgap <= tol;
            SdpSolution {
                status: if ok { SdpStatus::Optimal } else { SdpStatus::NumericalFailure },
                x: $x / tau,
                objective: pobj + prob.obj_offset,
                pres,
                dres,
                relgap,
                iterations: $it,
                certificate: None,
                message: if ok { String::new() } else { $msg.to_string() },
            }
        }};
    }

    for it in 0..max_iter {
        // residuals
        let rp: Vec<DMatrix<f64>> = blocks
            .iter()
            .zip(s.iter())
            .map(|(b, sb)| {
                let mut m = sb - &b.f0 * tau;
                for (i, f) in b.fs.iter().enumerate() {
                    m -= f * x[i];
                }
                m
            })
            .collect();
        let rd: DVector<f64> = DVector::from_fn(n, |i, _| {
            prob.c[i] * tau - blocks.iter().zip(y.iter()).map(|(b, yb)| inner(&b.fs[i], yb)).sum::<f64>()
        });
        let rg = kappa + prob.c.dot(&x)
            + blocks.iter().zip(y.iter()).map(|(b, yb)| inner(&b.f0, yb)).sum::<f64>();

        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| inner(a, b)).sum();
        let mu = (sy + tau * kappa) / nu;

        // convergence checks on the de-homogenized point
        let pres = rp.iter().map(|m| m.abs().max()).fold(0.0, f64::max) / (tau * norm_f0);
        let dres = rd.abs().max() / (tau * norm_c);
        let pobj = prob.c.dot(&x) / tau;
        let dobj = -blocks.iter().zip(y.iter()).map(|(b, yb)| inner(&b.f0, yb)).sum::<f64>() / tau;
        let gap = sy / (tau * tau);
        let relgap = gap / (1.0 + pobj.abs().max(dobj.abs()));
        last_metrics = (pres, dres, relgap, pobj);
        if pres <= tol && dres <= tol && relgap <= tol {
            return Ok(SdpSolution {
                status: SdpStatus::Optimal,
                x: &x / tau,
                objective: pobj + prob.obj_offset,
                pres,
                dres,
                relgap,
                iterations: it,
                certificate: None,
                message: String::new(),
            });
        }
        // infeasibility: tau collapses relative to kappa
        if tau < 1e-10 * kappa.max(1.0) || (mu < tol * 1e-2 && tau < 1e-6 * kappa) {
            let f0y: f64 = blocks.iter().zip(y.iter()).map(|(b, yb)| inner(&b.f0, yb)).sum();
            let cx = prob.c.dot(&x);
            if f0y < -1e-12 {
                let scale = -f0y;
                let cert: Vec<DMatrix<f64>> = y.iter().map(|m| m / scale).collect();
                return Ok(SdpSolution {
                    status: SdpStatus::Infeasible,
                    x,
                    objective: f64::INFINITY,
                    pres,
                    dres,
                    relgap,
                    iterations: it,
                    certificate: Some(cert),
                    message: "no feasible point; dual improving ray attached".into(),
                });
            } else if cx < -1e-12 {
                return Ok(SdpSolution {
                    status: SdpStatus::Infeasible,
                    x,
                    objective: f64::NEG_INFINITY,
                    pres,
                    dres,
                    relgap,
                    iterations: it,
                    certificate: None,
                    message: "objective unbounded below (dual infeasible)".into(),
                });
            } else {
                return Ok(fail!("tau/kappa collapsed without a certificate", &x, it));
            }
        }

        // NT scaling
        let Some(scal) = nt_scaling(&s, &y) else {
            return Ok(fail!("loss of positive definiteness in NT scaling", &x, it));
        };

        // scaled data: Ft_i = R^-1 F_i R^-T per block, Schur matrix and vectors
        let mut m_mat = DMatrix::<f64>::zeros(n, n);
        let mut f_vec = DVector::<f64>::zeros(n);
        let mut g_sc = 0.0f64;
        let mut ft: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(blocks.len());
        let mut f0t: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        for (bi, b) in blocks.iter().enumerate() {
            let rinv = &scal.rinv[bi];
            let f0b = sym(&(rinv * &b.f0 * rinv.transpose()));
            let fsb: Vec<DMatrix<f64>> =
                b.fs.iter().map(|f| sym(&(rinv * f * rinv.transpose()))).collect();
            for i in 0..n {
                f_vec[i] += inner(&fsb[i], &f0b);
                for j in i..n {
                    let v = inner(&fsb[i], &fsb[j]);
                    m_mat[(i, j)] += v;
                    if j != i {
                        m_mat[(j, i)] += v;
                    }
                }
            }
            g_sc += inner(&f0b, &f0b);
            ft.push(fsb);
            f0t.push(f0b);
        }
        // small ridge keeps the factorization alive when M is near-singular
        let ridge = 1e-13 * (1.0 + m_mat.diagonal().max());
        for i in 0..n {
            m_mat[(i, i)] += ridge;
        }
        let Some(chol_m) = m_mat.clone().cholesky() else {
            return Ok(fail!("Schur complement lost positive definiteness", &x, it));
        };
        // one step of iterative refinement keeps the dual residual floor low
        let refine = |rhs: &DVector<f64>, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
            let mut u = chol.solve(rhs);
            let r = rhs - &m_mat * &u;
            u += chol.solve(&r);
            u
        };

        // scaled residual terms: p_i = <Ft_i, Rp~>, q0 = <F0~, Rp~>
        let rp_t: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|bi| {
                let rinv = &scal.rinv[bi];
                sym(&(rinv * &rp[bi] * rinv.transpose()))
            })
            .collect();
        let p_vec = DVector::from_fn(n, |i, _| {
            (0..blocks.len()).map(|bi| inner(&ft[bi][i], &rp_t[bi])).sum::<f64>()
        });
        let q0: f64 = (0..blocks.len()).map(|bi| inner(&f0t[bi], &rp_t[bi])).sum();

        // one Newton solve for a given complementarity target V and sigma
        let newton = |v_blocks: &[DMatrix<f64>],
                      dtk: f64,
                      chol_m: &nalgebra::Cholesky<f64, nalgebra::Dyn>|
         -> Option<(DVector<f64>, f64, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, f64)> {
            // u_i = <Ft_i, V>, u0 = <F0~, V>
            let u_vec = DVector::from_fn(n, |i, _| {
                (0..blocks.len()).map(|bi| inner(&ft[bi][i], &v_blocks[bi])).sum::<f64>()
            });
            let u0: f64 = (0..blocks.len()).map(|bi| inner(&f0t[bi], &v_blocks[bi])).sum();
            // rhs_I = u + p - rd ; rhs_II scalar
            let rhs1 = &u_vec + &p_vec - &rd;
            let rhs2 = dtk / tau + rg + u0 + q0;
            let m_rhs1 = refine(&rhs1, chol_m);
            let fc_plus = &f_vec + &prob.c;
            let fc_minus = &f_vec - &prob.c;
            let m_fcp = refine(&fc_plus, chol_m);
            let denom = kappa / tau + g_sc - fc_minus.dot(&m_fcp);
            // denom = kappa/tau + g - f'M^-1 f + c'M^-1 c > 0 up to rounding
            if !(denom.is_finite() && denom != 0.0) {
                return None;
            }
            let dtau = (rhs2 - fc_minus.dot(&m_rhs1)) / denom;
            let dx = m_rhs1 - m_fcp * dtau;
            // dS = sum dx_i F_i + F0 dtau - Rp
            let ds: Vec<DMatrix<f64>> = blocks
                .iter()
                .enumerate()
                .map(|(bi, b)| {
                    let mut m = &b.f0 * dtau - &rp[bi];
                    for (i, f) in b.fs.iter().enumerate() {
                        m += f * dx[i];
                    }
                    m
                })
                .collect();
            // dY = R^-T (V - R^-1 dS R^-T) R^-1
            let dy: Vec<DMatrix<f64>> = (0..blocks.len())
                .map(|bi| {
                    let rinv = &scal.rinv[bi];
                    let ds_t = sym(&(rinv * &ds[bi] * rinv.transpose()));
                    sym(&(rinv.transpose() * (&v_blocks[bi] - ds_t) * rinv))
                })
                .collect();
            let dkappa = -rg - prob.c.dot(&dx)
                - blocks.iter().zip(dy.iter()).map(|(b, dyb)| inner(&b.f0, dyb)).sum::<f64>();
            Some((dx, dtau, ds, dy, dkappa))
        };

        // predictor: target 0, i.e. V solves lambda o V = -lambda^2
        let v_aff: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|bi| -DMatrix::from_diagonal(&scal.lambda[bi]))
            .collect();
        let Some((dx_a, dtau_a, ds_a, dy_a, dkappa_a)) = newton(&v_aff, -tau * kappa, &chol_m) else {
            return Ok(fail!("singular Newton system in predictor", &x, it));
        };
        let mut alpha_a = 1.0f64;
        for bi in 0..blocks.len() {
            alpha_a = alpha_a.min(max_step(&s[bi], &ds_a[bi])).min(max_step(&y[bi], &dy_a[bi]));
        }
        if dtau_a < 0.0 {
            alpha_a = alpha_a.min(-tau / dtau_a);
        }
        if dkappa_a < 0.0 {
            alpha_a = alpha_a.min(-kappa / dkappa_a);
        }
        alpha_a = alpha_a.min(1.0);

        // Mehrotra centering exponent
        let mu_aff = {
            let mut acc = (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkappa_a);
            for bi in 0..blocks.len() {
                acc += inner(&(&s[bi] + &ds_a[bi] * alpha_a), &(&y[bi] + &dy_a[bi] * alpha_a));
            }
            acc / nu
        };
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector: V solves lambda o V = sigma mu I - lambda^2 - (ds~ o dy~)_aff
        let v_cor: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|bi| {
                let rinv = &scal.rinv[bi];
                let r = &scal.r[bi];
                let ds_t = sym(&(rinv * &ds_a[bi] * rinv.transpose()));
                let dy_t = sym(&(r.transpose() * &dy_a[bi] * r));
                let cross = sym(&(&ds_t * &dy_t));
                let lam = &scal.lambda[bi];
                let dim = lam.len();
                let mut v = DMatrix::<f64>::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        let d = if i == j { sigma * mu - lam[i] * lam[i] } else { 0.0 };
                        v[(i, j)] = 2.0 * (d - cross[(i, j)]) / (lam[i] + lam[j]);
                    }
                }
                v
            })
            .collect();
        let dtk = sigma * mu - tau * kappa - dtau_a * dkappa_a;
        let Some((dx, dtau, ds, dy, dkappa)) = newton(&v_cor, dtk, &chol_m) else {
            return Ok(fail!("singular Newton system in corrector", &x, it));
        };

        let mut alpha = 1.0f64;
        for bi in 0..blocks.len() {
            alpha = alpha.min(max_step(&s[bi], &ds[bi])).min(max_step(&y[bi], &dy[bi]));
        }
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-kappa / dkappa);
        }
        alpha *= 0.98;
        if !alpha.is_finite() || alpha < 1e-14 {
            return Ok(fail!("step length collapsed", &x, it));
        }

        x += &dx * alpha;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        for bi in 0..blocks.len() {
            s[bi] = sym(&(&s[bi] + &ds[bi] * alpha));
            y[bi] = sym(&(&y[bi] + &dy[bi] * alpha));
        }
    }

    let (pres, dres, relgap, pobj) = last_metrics;
    Ok(SdpSolution {
        status: SdpStatus::MaxIter,
        x: &x / tau,
        objective: pobj + prob.obj_offset,
        pres,
        dres,
        relgap,
        iterations: max_iter,
        certificate: None,
        message: "iteration limit reached".into(),
    })
}

// ---------------------------------------------------------------------------
// SDPA-style text format

/// Write the problem in SDPA sparse conventions: `min c'x` subject to
/// `sum_i x_i A_i - A_0 >= 0`, so `A_0 = -F0` and `A_i = F_i`.
pub fn write_sdpa(prob: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", prob.n_vars());
    let _ = writeln!(out, "{}", prob.blocks.len());
    let dims: Vec<String> = prob.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(out, "{}", dims.join(" "));
    let cs: Vec<String> = prob.c.iter().map(|v| format!("{v:.17e}")).collect();
    let _ = writeln!(out, "{}", cs.join(" "));
    for (bi, b) in prob.blocks.iter().enumerate() {
        for i in 0..b.dim {
            for j in i..b.dim {
                let v = -b.f0[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(out, "0 {} {} {} {v:.17e}", bi + 1, i + 1, j + 1);
                }
            }
        }
        for (k, f) in b.fs.iter().enumerate() {
            for i in 0..b.dim {
                for j in i..b.dim {
                    let v = f[(i, j)];
                    if v != 0.0 {
                        let _ = writeln!(out, "{} {} {} {} {v:.17e}", k + 1, bi + 1, i + 1, j + 1);
                    }
                }
            }
        }
    }
    out
}

/// Read the SDPA-style text emitted by [`write_sdpa`].
pub fn read_sdpa(text: &str) -> Result<SdpProblem> {
    let mut lines = text.lines().filter(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('"') && !t.starts_with('*')
    });
    let bad = |what: &str| Error::InvalidInput(format!("SDPA parse: {what}"));
    let n: usize = lines.next().ok_or_else(|| bad("missing variable count"))?.trim().parse().map_err(|_| bad("variable count"))?;
    let nb: usize = lines.next().ok_or_else(|| bad("missing block count"))?.trim().parse().map_err(|_| bad("block count"))?;
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing block sizes"))?
        .split_whitespace()
        .map(|t| t.trim().parse::<i64>().map(|v| v.unsigned_abs() as usize))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("block sizes"))?;
    if dims.len() != nb {
        return Err(bad("block size count"));
    }
    let c: Vec<f64> = lines
        .next()
        .ok_or_else(|| bad("missing objective"))?
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("objective entries"))?;
    if c.len() != n {
        return Err(bad("objective length"));
    }
    let mut blocks: Vec<LmiBlock> = dims
        .iter()
        .map(|&d| LmiBlock {
            dim: d,
            f0: DMatrix::zeros(d, d),
            fs: vec![DMatrix::zeros(d, d); n],
        })
        .collect();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(bad("entry line must have 5 fields"));
        }
        let k: usize = toks[0].parse().map_err(|_| bad("matrix index"))?;
        let b: usize = toks[1].parse::<usize>().map_err(|_| bad("block index"))? - 1;
        let i: usize = toks[2].parse::<usize>().map_err(|_| bad("row index"))? - 1;
        let j: usize = toks[3].parse::<usize>().map_err(|_| bad("col index"))? - 1;
        let v: f64 = toks[4].parse().map_err(|_| bad("value"))?;
        if b >= nb || i >= dims[b] || j >= dims[b] || k > n {
            return Err(bad("entry out of range"));
        }
        let target = if k == 0 { &mut blocks[b].f0 } else { &mut blocks[b].fs[k - 1] };
        let val = if k == 0 { -v } else { v };
        target[(i, j)] = val;
        target[(j, i)] = val;
    }
    Ok(SdpProblem { c: DVector::from_vec(c), blocks, obj_offset: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sym_rand(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        sym(&m)
    }

    #[test]
    fn scalar_nonnegativity() {
        // min x s.t. x >= 0
        let prob = SdpProblem {
            c: DVector::from_vec(vec![1.0]),
            blocks: vec![LmiBlock {
                dim: 1,
                f0: DMatrix::zeros(1, 1),
                fs: vec![DMatrix::identity(1, 1)],
            }],
            obj_offset: 0.0,
        };
        let sol = solve(&prob, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.objective.abs() < 1e-7, "objective {}", sol.objective);
    }

    #[test]
    fn two_by_two_determinant_bound() {
        // min g s.t. [[g,1],[1,g]] >= 0  =>  g = 1
        let f0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let prob = SdpProblem {
            c: DVector::from_vec(vec![1.0]),
            blocks: vec![LmiBlock { dim: 2, f0, fs: vec![DMatrix::identity(2, 2)] }],
            obj_offset: 0.0,
        };
        let sol = solve(&prob, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6, "objective {}", sol.objective);
    }

    #[test]
    fn fixed_indefinite_matrix_is_infeasible() {
        // feasibility of [[1,2],[2,1]] >= 0 with no variables
        let f0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let prob = SdpProblem {
            c: DVector::zeros(0),
            blocks: vec![LmiBlock { dim: 2, f0, fs: vec![] }],
            obj_offset: 0.0,
        };
        let sol = solve(&prob, 1e-9, 200).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        let cert = sol.certificate.expect("certificate");
        // certificate: Y >= 0 and <F0, Y> < 0
        let y = &cert[0];
        let eig = nalgebra::SymmetricEigen::new(y.clone());
        assert!(eig.eigenvalues.min() > -1e-9);
        let f0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(inner(&f0, y) < -1e-6);
    }

    #[test]
    fn one_variable_objectives_match_bisection() {
        let mut rng = StdRng::seed_from_u64(77);
        for trial in 0..20 {
            let dim = rng.gen_range(2..6);
            let f1 = {
                // make F1 positive definite so min-x is attained going down
                let a = sym_rand(&mut rng, dim);
                &a * &a.transpose() + DMatrix::identity(dim, dim) * 0.3
            };
            let f0 = sym_rand(&mut rng, dim);
            let prob = SdpProblem {
                c: DVector::from_vec(vec![1.0]),
                blocks: vec![LmiBlock { dim, f0: f0.clone(), fs: vec![f1.clone()] }],
                obj_offset: 0.0,
            };
            let sol = solve(&prob, 1e-10, 200).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal, "trial {trial}");
            // independent bisection on eigmin(F0 + x F1) >= 0
            let feas = |x: f64| {
                let m = &f0 + &f1 * x;
                nalgebra::SymmetricEigen::new(m).eigenvalues.min() >= 0.0
            };
            let (mut lo, mut hi) = (-100.0, 100.0);
            assert!(feas(hi) && !feas(lo));
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if feas(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!(
                (sol.objective - hi).abs() < 1e-6 * (1.0 + hi.abs()),
                "trial {trial}: solver {} vs bisection {}",
                sol.objective,
                hi
            );
        }
    }

    #[test]
    fn kkt_residuals_on_random_feasible_problems() {
        let mut rng = StdRng::seed_from_u64(5);
        for trial in 0..20 {
            let n = rng.gen_range(2..6);
            let dim = rng.gen_range(2..7);
            // strictly feasible by construction: F(x0) = I at x0 = 0
            let f0 = {
                let a = sym_rand(&mut rng, dim);
                &a * &a.transpose() + DMatrix::identity(dim, dim) * 0.5
            };
            let fs: Vec<DMatrix<f64>> = (0..n).map(|_| sym_rand(&mut rng, dim)).collect();
            // bounded objective: c = sum over <F_i, Z> for a PSD Z makes the
            // dual strictly feasible
            let z = {
                let a = sym_rand(&mut rng, dim);
                &a * &a.transpose() + DMatrix::identity(dim, dim) * 0.2
            };
            let c = DVector::from_fn(n, |i, _| inner(&fs[i], &z));
            let prob = SdpProblem { c, blocks: vec![LmiBlock { dim, f0, fs }], obj_offset: 0.0 };
            let sol = solve(&prob, 1e-9, 200).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal, "trial {trial}: {}", sol.message);
            assert!(sol.pres <= 1e-8 && sol.dres <= 1e-8, "residuals {} {}", sol.pres, sol.dres);
            // primal feasibility of the returned x
            let b = &prob.blocks[0];
            let mut m = b.f0.clone();
            for (i, f) in b.fs.iter().enumerate() {
                m += f * sol.x[i];
            }
            let emin = nalgebra::SymmetricEigen::new(m).eigenvalues.min();
            assert!(emin > -1e-7, "trial {trial}: eigmin {emin}");
        }
    }

    #[test]
    fn objective_scaling_leaves_minimizer_unchanged() {
        let mut rng = StdRng::seed_from_u64(11);
        for trial in 0..5 {
            let dim = rng.gen_range(2..6);
            let f1 = {
                let a = sym_rand(&mut rng, dim);
                &a * &a.transpose() + DMatrix::identity(dim, dim) * 0.3
            };
            let f0 = sym_rand(&mut rng, dim);
            let mk = |scale: f64| SdpProblem {
                c: DVector::from_vec(vec![scale]),
                blocks: vec![LmiBlock { dim, f0: f0.clone(), fs: vec![f1.clone()] }],
                obj_offset: 0.0,
            };
            let s1 = solve(&mk(1.0), 1e-9, 200).unwrap();
            let s2 = solve(&mk(7.5), 1e-9, 200).unwrap();
            assert_eq!(s1.status, SdpStatus::Optimal);
            assert_eq!(s2.status, SdpStatus::Optimal);
            assert!(
                (&s1.x - &s2.x).abs().max() < 1e-6 * (1.0 + s1.x.abs().max()),
                "trial {trial}: {:?} vs {:?}",
                s1.x.as_slice(),
                s2.x.as_slice()
            );
        }
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let f0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let prob = SdpProblem {
            c: DVector::from_vec(vec![1.0]),
            blocks: vec![LmiBlock { dim: 2, f0, fs: vec![DMatrix::identity(2, 2)] }],
            obj_offset: 0.0,
        };
        let a = solve(&prob, 1e-9, 100).unwrap();
        let b = solve(&prob, 1e-9, 100).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn sdpa_round_trip() {
        let mut rng = StdRng::seed_from_u64(3);
        let fs: Vec<DMatrix<f64>> = (0..2).map(|_| sym_rand(&mut rng, 3)).collect();
        let prob = SdpProblem {
            c: DVector::from_vec(vec![1.5, -0.25]),
            blocks: vec![
                LmiBlock { dim: 3, f0: sym_rand(&mut rng, 3), fs },
                LmiBlock {
                    dim: 2,
                    f0: sym_rand(&mut rng, 2),
                    fs: (0..2).map(|_| sym_rand(&mut rng, 2)).collect(),
                },
            ],
            obj_offset: 0.0,
        };
        let text = write_sdpa(&prob);
        let back = read_sdpa(&text).unwrap();
        assert_eq!(prob, back);
    }
}
