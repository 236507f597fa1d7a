//! PDE data model and its PIE representation.
//!
//! The PDE class: `u_t = sum_ij A_ij d_x^i d_y^j u + B w` on the unit square
//! with regulated output `z = sum_ij int[C_ij] d_x^i d_y^j u + D w`, separable
//! two-point boundary conditions (two per axis, constant coefficients), and
//! sensed outputs built from boundary traces of the state and its
//! derivatives.
//!
//! The fundamental state is `v = d_x^2 d_y^2 u`. `build_t` constructs the PI
//! operator `T` with `u = T v`; `build_pie` then rewrites dynamics and
//! outputs in terms of `v`, giving operators `{T, A, B, C, D, Cq, Dq}` with
//! no boundary conditions attached. Correctness is gated on the two
//! identities `u = T d_x^2 d_y^2 u` and `v = d_x^2 d_y^2 T v`.

use crate::piop::{BlockPiOp, Dir, DirSlot, FunctionVector, PiOpRecord, Space, SpaceSignature};
use crate::poly::{Bound, Exponents, Mat, PolyKernel, PolyKernelRecord, Var, VarSet};
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One two-point boundary condition: `alpha * d^order u(endpoint) = 0`,
/// uniform in the other variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub endpoint: u8,
    pub order: u8,
    /// n_u x n_u coefficient.
    pub coeff: Mat<f64>,
}

impl BoundaryCondition {
    pub fn dirichlet(endpoint: u8, n: usize) -> Self {
        BoundaryCondition { endpoint, order: 0, coeff: Mat::identity(n) }
    }

    pub fn neumann(endpoint: u8, n: usize) -> Self {
        BoundaryCondition { endpoint, order: 1, coeff: Mat::identity(n) }
    }
}

/// Two conditions per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub x: [BoundaryCondition; 2],
    pub y: [BoundaryCondition; 2],
}

impl BoundarySpec {
    fn axis(&self, d: Dir) -> &[BoundaryCondition; 2] {
        match d {
            Dir::X => &self.x,
            Dir::Y => &self.y,
        }
    }
}

/// Where a sensed quantity is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceLoc {
    /// Corner (x, y) with endpoints in {0,1}: scalar output rows.
    Corner { x: u8, y: u8 },
    /// Fixed x endpoint: output is a function of y.
    XEdge { x: u8 },
    /// Fixed y endpoint: output is a function of x.
    YEdge { y: u8 },
}

/// One sensing term: `coeff * (d_x^dx d_y^dy u)` traced at `loc`, written
/// into the output block starting at `row`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingTerm {
    pub row: usize,
    pub dx: u8,
    pub dy: u8,
    pub loc: TraceLoc,
    /// rows x n_u; constant for corners, a polynomial in the edge variable
    /// otherwise.
    pub coeff: PolyKernel<f64>,
}

/// Sensed outputs: `n_q1` scalar rows from corner traces, `n_qy` rows of
/// L2[y] functions (x-edge traces), `n_qx` rows of L2[x] functions (y-edge
/// traces), plus the disturbance feedthrough per block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensingSpec {
    pub n_q1: usize,
    pub n_qy: usize,
    pub n_qx: usize,
    pub terms: Vec<SensingTerm>,
    /// n_q1 x n_w feedthrough.
    pub d_corner: Option<Mat<f64>>,
    /// n_qy x n_w feedthrough, polynomial in y.
    pub d_qy: Option<PolyKernel<f64>>,
    /// n_qx x n_w feedthrough, polynomial in x.
    pub d_qx: Option<PolyKernel<f64>>,
}

impl SensingSpec {
    /// Output-space signature: R^{n_q1} + L2^{n_qx}[x] + L2^{n_qy}[y].
    pub fn signature(&self) -> SpaceSignature {
        SpaceSignature { n0: self.n_q1, nx: self.n_qx, ny: self.n_qy, n2: 0 }
    }

    /// Corner-trace rows from a constant matrix over the 16 corner values
    /// (four derivative pairs (0,0),(1,0),(0,1),(1,1), each at the four
    /// corners (0,0),(1,0),(0,1),(1,1), n_u columns per group).
    pub fn corner_terms_from_matrix(c1: &Mat<f64>, n_u: usize) -> Result<Vec<SensingTerm>> {
        if c1.cols != 16 * n_u {
            return Err(Error::DimensionMismatch(format!(
                "corner sensing matrix must have 16*n_u = {} columns, got {}",
                16 * n_u,
                c1.cols
            )));
        }
        let derivs = [(0u8, 0u8), (1, 0), (0, 1), (1, 1)];
        let corners = [(0u8, 0u8), (1, 0), (0, 1), (1, 1)];
        let mut terms = Vec::new();
        for (di, &(dx, dy)) in derivs.iter().enumerate() {
            for (ci, &(cx, cy)) in corners.iter().enumerate() {
                let g = di * 4 + ci;
                let slice = Mat::from_fn(c1.rows, n_u, |i, j| *c1.get(i, g * n_u + j));
                if slice.is_zero() {
                    continue;
                }
                terms.push(SensingTerm {
                    row: 0,
                    dx,
                    dy,
                    loc: TraceLoc::Corner { x: cx, y: cy },
                    coeff: PolyKernel::constant(slice),
                });
            }
        }
        Ok(terms)
    }
}

/// Coefficients and structure of the PDE.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSystem {
    pub n_u: usize,
    pub n_w: usize,
    pub n_z: usize,
    /// Dynamics coefficients A_ij(x,y), i,j in 0..=2; absent means zero.
    pub a: BTreeMap<(u8, u8), PolyKernel<f64>>,
    /// Disturbance map B(x,y), n_u x n_w.
    pub b: Option<PolyKernel<f64>>,
    /// Regulated-output integrands C_ij(x,y), n_z x n_u.
    pub c: BTreeMap<(u8, u8), PolyKernel<f64>>,
    /// Feedthrough, n_z x n_w.
    pub d: Mat<f64>,
    pub bc: BoundarySpec,
    pub sensing: SensingSpec,
}

impl PdeSystem {
    pub fn validate(&self) -> Result<()> {
        for ((i, j), k) in &self.a {
            if *i > 2 || *j > 2 {
                return Err(Error::InvalidInput(format!("A_{i}{j}: orders above 2")));
            }
            if k.rows() != self.n_u || k.cols() != self.n_u {
                return Err(Error::DimensionMismatch(format!("A_{i}{j} must be n_u x n_u")));
            }
        }
        if let Some(b) = &self.b {
            if b.rows() != self.n_u || b.cols() != self.n_w {
                return Err(Error::DimensionMismatch("B must be n_u x n_w".into()));
            }
        }
        for ((i, j), k) in &self.c {
            if *i > 2 || *j > 2 {
                return Err(Error::InvalidInput(format!("C_{i}{j}: orders above 2")));
            }
            if k.rows() != self.n_z || k.cols() != self.n_u {
                return Err(Error::DimensionMismatch(format!("C_{i}{j} must be n_z x n_u")));
            }
        }
        if self.d.rows != self.n_z || self.d.cols != self.n_w {
            return Err(Error::DimensionMismatch("D must be n_z x n_w".into()));
        }
        for conds in [&self.bc.x, &self.bc.y] {
            for c in conds {
                if c.endpoint > 1 || c.order > 1 {
                    return Err(Error::InvalidInput(
                        "boundary condition endpoint/order must be 0 or 1".into(),
                    ));
                }
                if c.coeff.rows != self.n_u || c.coeff.cols != self.n_u {
                    return Err(Error::DimensionMismatch("boundary coefficient must be n_u x n_u".into()));
                }
            }
        }
        for t in &self.sensing.terms {
            if t.coeff.cols() != self.n_u {
                return Err(Error::DimensionMismatch("sensing coefficient must have n_u columns".into()));
            }
            let (block_rows, ok_vars) = match t.loc {
                TraceLoc::Corner { x, y } if x <= 1 && y <= 1 => (self.sensing.n_q1, VarSet::EMPTY),
                TraceLoc::XEdge { x } if x <= 1 => (self.sensing.n_qy, VarSet::of(&[Var::Y])),
                TraceLoc::YEdge { y } if y <= 1 => (self.sensing.n_qx, VarSet::of(&[Var::X])),
                _ => return Err(Error::InvalidInput("trace endpoint must be 0 or 1".into())),
            };
            if t.row + t.coeff.rows() > block_rows {
                return Err(Error::DimensionMismatch("sensing term rows exceed block".into()));
            }
            if !t.coeff.max_degree().vars().is_subset_of(ok_vars) {
                return Err(Error::InvalidInput("sensing coefficient uses wrong variables".into()));
            }
        }
        Ok(())
    }
}

/// PI operators of the PIE representation.
#[derive(Debug, Clone)]
pub struct PieSystem {
    pub n_u: usize,
    pub n_w: usize,
    pub n_z: usize,
    pub q_sig: SpaceSignature,
    pub t_op: BlockPiOp<f64>,
    pub a_op: BlockPiOp<f64>,
    pub b_op: BlockPiOp<f64>,
    pub c_op: BlockPiOp<f64>,
    pub d_op: BlockPiOp<f64>,
    pub cq_op: BlockPiOp<f64>,
    pub dq_op: BlockPiOp<f64>,
}

/// One-axis factor of T: `u(s) = int_0^s T1(s,tau) v + int_s^1 T2(s,tau) v`
/// solves `u'' = v` under the two axis conditions.
fn build_t_axis(
    conds: &[BoundaryCondition; 2],
    n: usize,
    axis: Dir,
) -> Result<(PolyKernel<f64>, PolyKernel<f64>)> {
    // constants (c1, c2) in u(s) = int_0^s (s - tau) v + c1 + c2 s solve
    // M [c1; c2] = -[a1 J1(v); a2 J2(v)]
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (c, cond) in conds.iter().enumerate() {
        let (d0, p) = (cond.order == 0, cond.endpoint as f64);
        for i in 0..n {
            for j in 0..n {
                let a = *cond.coeff.get(i, j);
                m[(c * n + i, j)] = if d0 { a } else { 0.0 };
                m[(c * n + i, n + j)] = if d0 { a * p } else { a };
            }
        }
    }
    let axis_name = if axis == Dir::X { 'x' } else { 'y' };
    let minv = m.clone().lu().try_inverse().ok_or_else(|| Error::WellPosedness {
        axis: axis_name,
        detail: "the block system for the integration constants is singular".into(),
    })?;
    if (m * &minv - DMatrix::identity(2 * n, 2 * n)).abs().max() > 1e-8 {
        return Err(Error::WellPosedness {
            axis: axis_name,
            detail: "the boundary system is numerically singular".into(),
        });
    }

    let (s_var, tau) = (axis.out_var(), axis.in_dummy());
    let vars = VarSet::of(&[s_var, tau]);
    // stacked kernels a_c k_c(tau): k = (1 - tau) for order 0 at endpoint 1,
    // k = 1 for order 1 at endpoint 1, zero at endpoint 0
    let mut rhs = PolyKernel::zero(2 * n, n, vars);
    for (c, cond) in conds.iter().enumerate() {
        if cond.endpoint == 0 {
            continue;
        }
        let mut embed = |mat: Mat<f64>, e: Exponents| {
            let big = Mat::from_fn(2 * n, n, |i, j| {
                if i >= c * n && i < (c + 1) * n {
                    *mat.get(i - c * n, j)
                } else {
                    0.0
                }
            });
            rhs.add_term(e, big).unwrap();
        };
        if cond.order == 0 {
            embed(cond.coeff.clone(), Exponents::ZERO);
            embed(cond.coeff.scale(-1.0), Exponents::of(&[(tau, 1)]));
        } else {
            embed(cond.coeff.clone(), Exponents::ZERO);
        }
    }
    // G(s,tau) = -[I, s I] M^{-1} rhs(tau)
    let minv_mat = Mat::from_fn(2 * n, 2 * n, |i, j| minv[(i, j)]);
    let minv_rhs = PolyKernel::constant(minv_mat).mul(&rhs)?;
    let mut selector = PolyKernel::zero(n, 2 * n, VarSet::of(&[s_var]));
    selector.add_term(Exponents::ZERO, Mat::from_fn(n, 2 * n, |i, j| if j == i { 1.0 } else { 0.0 }))?;
    selector.add_term(
        Exponents::of(&[(s_var, 1)]),
        Mat::from_fn(n, 2 * n, |i, j| if j == n + i { 1.0 } else { 0.0 }),
    )?;
    let g = selector.mul(&minv_rhs)?.neg();

    // T1 = (s - tau) I + G, T2 = G
    let mut ramp = PolyKernel::zero(n, n, vars);
    ramp.add_term(Exponents::of(&[(s_var, 1)]), Mat::identity(n))?;
    ramp.add_term(Exponents::of(&[(tau, 1)]), Mat::identity(n).scale(-1.0))?;
    Ok((ramp.add(&g)?, g))
}

/// The PI operator T with `u = T v` for the separable boundary conditions:
/// the composition of the per-axis solution operators.
pub fn build_t(bc: &BoundarySpec, n_u: usize) -> Result<BlockPiOp<f64>> {
    let sig = SpaceSignature::l2_2d(n_u);
    let (tx1, tx2) = build_t_axis(bc.axis(Dir::X), n_u, Dir::X)?;
    let (ty1, ty2) = build_t_axis(bc.axis(Dir::Y), n_u, Dir::Y)?;
    let mut t_x = BlockPiOp::zero(sig, sig);
    t_x.add_to_kernel(Space::Lxy, Space::Lxy, DirSlot::Low, DirSlot::Mult, tx1)?;
    t_x.add_to_kernel(Space::Lxy, Space::Lxy, DirSlot::Up, DirSlot::Mult, tx2)?;
    let mut t_y = BlockPiOp::zero(sig, sig);
    t_y.add_to_kernel(Space::Lxy, Space::Lxy, DirSlot::Mult, DirSlot::Low, ty1)?;
    t_y.add_to_kernel(Space::Lxy, Space::Lxy, DirSlot::Mult, DirSlot::Up, ty2)?;
    t_x.compose(&t_y)
}

/// `d_x^k d_y^l . op` as a PI operator, by repeated Leibniz steps.
pub fn diff_compose(op: &BlockPiOp<f64>, k: u8, l: u8) -> Result<BlockPiOp<f64>> {
    let mut r = op.clone();
    for _ in 0..k {
        r = r.diff(Dir::X)?;
    }
    for _ in 0..l {
        r = r.diff(Dir::Y)?;
    }
    Ok(r)
}

fn trace_op(base: &BlockPiOp<f64>, loc: TraceLoc) -> Result<BlockPiOp<f64>> {
    match loc {
        TraceLoc::Corner { x, y } => base.dirac(Dir::X, x)?.dirac(Dir::Y, y),
        TraceLoc::XEdge { x } => base.dirac(Dir::X, x),
        TraceLoc::YEdge { y } => base.dirac(Dir::Y, y),
    }
}

/// Build the full PIE representation of a PDE.
pub fn build_pie(pde: &PdeSystem) -> Result<PieSystem> {
    pde.validate()?;
    let n_u = pde.n_u;
    let sig_u = SpaceSignature::l2_2d(n_u);
    let sig_w = SpaceSignature::scalar(pde.n_w);
    let sig_z = SpaceSignature::scalar(pde.n_z);
    let t_op = build_t(&pde.bc, n_u)?;

    let mut r_cache: BTreeMap<(u8, u8), BlockPiOp<f64>> = BTreeMap::new();
    let mut r_of = |i: u8, j: u8, t: &BlockPiOp<f64>| -> Result<BlockPiOp<f64>> {
        if let Some(r) = r_cache.get(&(i, j)) {
            return Ok(r.clone());
        }
        let r = diff_compose(t, i, j)?;
        r_cache.insert((i, j), r.clone());
        Ok(r)
    };

    let mut a_op = BlockPiOp::zero(sig_u, sig_u);
    for ((i, j), coeff) in &pde.a {
        let mult = BlockPiOp::multiplier_2d(coeff.clone())?;
        a_op = a_op.add(&mult.compose(&r_of(*i, *j, &t_op)?)?)?;
    }

    let mut c_op = BlockPiOp::zero(sig_u, sig_z);
    for ((i, j), coeff) in &pde.c {
        let integrand =
            coeff.subs(Var::X, Bound::Var(Var::Theta))?.subs(Var::Y, Bound::Var(Var::Eta))?;
        let int = BlockPiOp::int_2d(integrand)?;
        c_op = c_op.add(&int.compose(&r_of(*i, *j, &t_op)?)?)?;
    }

    let b_op = match &pde.b {
        Some(b) => BlockPiOp::const_to_2d(b.clone())?,
        None => BlockPiOp::zero(sig_w, sig_u),
    };
    let d_op = if pde.d.is_zero() {
        BlockPiOp::zero(sig_w, sig_z)
    } else {
        BlockPiOp::const_matrix(pde.d.clone())
    };

    // sensed outputs: coeff * trace(d^dx d^dy T), placed at its block rows
    let q_sig = pde.sensing.signature();
    let mut cq_op = BlockPiOp::zero(sig_u, q_sig);
    for term in &pde.sensing.terms {
        let traced = trace_op(&r_of(term.dx, term.dy, &t_op)?, term.loc)?;
        let (mult_op, out_space) = match term.loc {
            TraceLoc::Corner { .. } => {
                let mut op = BlockPiOp::zero(
                    SpaceSignature::scalar(n_u),
                    SpaceSignature::scalar(term.coeff.rows()),
                );
                op.add_to_kernel(Space::R0, Space::R0, DirSlot::None, DirSlot::None, term.coeff.clone())?;
                (op, Space::R0)
            }
            TraceLoc::XEdge { .. } => {
                let mut op = BlockPiOp::zero(
                    SpaceSignature { ny: n_u, ..Default::default() },
                    SpaceSignature { ny: term.coeff.rows(), ..Default::default() },
                );
                op.add_to_kernel(Space::Ly, Space::Ly, DirSlot::None, DirSlot::Mult, term.coeff.clone())?;
                (op, Space::Ly)
            }
            TraceLoc::YEdge { .. } => {
                let mut op = BlockPiOp::zero(
                    SpaceSignature { nx: n_u, ..Default::default() },
                    SpaceSignature { nx: term.coeff.rows(), ..Default::default() },
                );
                op.add_to_kernel(Space::Lx, Space::Lx, DirSlot::Mult, DirSlot::None, term.coeff.clone())?;
                (op, Space::Lx)
            }
        };
        let row_op = mult_op.compose(&traced)?;
        let row = term.row;
        cq_op.place(&row_op, &|s| if s == out_space { row } else { 0 }, &|_| 0)?;
    }

    let mut dq_op = BlockPiOp::zero(sig_w, q_sig);
    if pde.n_w > 0 {
        if let Some(dc) = &pde.sensing.d_corner {
            if !dc.is_zero() {
                dq_op.add_to_kernel(
                    Space::R0,
                    Space::R0,
                    DirSlot::None,
                    DirSlot::None,
                    PolyKernel::constant(dc.clone()),
                )?;
            }
        }
        if let Some(dy) = &pde.sensing.d_qy {
            dq_op.add_to_kernel(Space::Ly, Space::R0, DirSlot::None, DirSlot::Carry, dy.clone())?;
        }
        if let Some(dx) = &pde.sensing.d_qx {
            dq_op.add_to_kernel(Space::Lx, Space::R0, DirSlot::Carry, DirSlot::None, dx.clone())?;
        }
    }

    Ok(PieSystem { n_u, n_w: pde.n_w, n_z: pde.n_z, q_sig, t_op, a_op, b_op, c_op, d_op, cq_op, dq_op })
}

/// Does a polynomial state satisfy the boundary conditions symbolically?
pub fn check_state_membership(u: &FunctionVector, bc: &BoundarySpec) -> Result<bool> {
    let Some(p) = u.comp(Space::Lxy) else { return Ok(true) };
    for (d, conds) in [(Dir::X, &bc.x), (Dir::Y, &bc.y)] {
        for cond in conds {
            let mut q = p.clone();
            for _ in 0..cond.order {
                q = q.diff(d.out_var());
            }
            let at = q.subs(d.out_var(), if cond.endpoint == 0 { Bound::Zero } else { Bound::One })?;
            let residual = PolyKernel::constant(cond.coeff.clone()).mul(&at)?;
            if residual.max_abs_coeff() > 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Worst relative residual of the two defining identities of T.
///
/// `fundamental`: polynomials v, checked as `v = d_x^2 d_y^2 (T v)`.
/// `states`: polynomials u satisfying the boundary conditions, checked as
/// `u = T d_x^2 d_y^2 u`.
pub fn lemma_identity_residuals(
    t_op: &BlockPiOp<f64>,
    fundamental: &[FunctionVector],
    states: &[FunctionVector],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for v in fundamental {
        let tv = t_op.apply(v)?;
        let p = tv
            .comp(Space::Lxy)
            .cloned()
            .unwrap_or_else(|| PolyKernel::zero(t_op.out_sig.n2, 1, VarSet::of(&[Var::X, Var::Y])));
        let back = p.diff(Var::X).diff(Var::X).diff(Var::Y).diff(Var::Y);
        let scale = v.max_abs_coeff().max(1.0);
        let diff = match v.comp(Space::Lxy) {
            Some(vp) => back.add(&vp.neg())?.max_abs_coeff(),
            None => back.max_abs_coeff(),
        };
        worst = worst.max(diff / scale);
    }
    for u in states {
        let Some(up) = u.comp(Space::Lxy) else { continue };
        let v = up.diff(Var::X).diff(Var::X).diff(Var::Y).diff(Var::Y);
        let tv = t_op.apply(&FunctionVector::from_2d(v)?)?;
        let scale = up.max_abs_coeff().max(1.0);
        let diff = match tv.comp(Space::Lxy) {
            Some(p) => p.add(&up.neg())?.max_abs_coeff(),
            None => up.max_abs_coeff(),
        };
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

/// Random polynomial states (degree <= `deg` per variable) satisfying the
/// boundary conditions, built from separable products of one-axis solutions.
pub fn random_states_in_x(
    bc: &BoundarySpec,
    n_u: usize,
    deg: u8,
    count: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<FunctionVector>> {
    let basis_x = axis_nullspace_basis(&bc.x, deg, Dir::X)?;
    let basis_y = axis_nullspace_basis(&bc.y, deg, Dir::Y)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut p = PolyKernel::zero(n_u, 1, VarSet::of(&[Var::X, Var::Y]));
        for fx in &basis_x {
            for fy in &basis_y {
                let prod = fx.mul(fy)?;
                let col = Mat::from_fn(n_u, 1, |_, _| rng.gen_range(-1.0..1.0));
                p = p.add(&PolyKernel::constant(col).mul(&prod)?)?;
            }
        }
        out.push(FunctionVector::from_2d(p)?);
    }
    Ok(out)
}

/// Scalar one-axis polynomials of degree <= deg satisfying both axis
/// conditions (scalar conditions read off the (0,0) coefficient entry).
fn axis_nullspace_basis(
    conds: &[BoundaryCondition; 2],
    deg: u8,
    d: Dir,
) -> Result<Vec<PolyKernel<f64>>> {
    let var = d.out_var();
    let n_coef = deg as usize + 1;
    let mut cmat = DMatrix::<f64>::zeros(2, n_coef);
    for (ci, cond) in conds.iter().enumerate() {
        for k in 0..n_coef {
            let p = cond.endpoint as f64;
            let v = if cond.order == 0 {
                if k == 0 {
                    1.0
                } else {
                    p.powi(k as i32)
                }
            } else if k == 0 {
                0.0
            } else if k == 1 {
                1.0
            } else {
                k as f64 * p.powi(k as i32 - 1)
            };
            cmat[(ci, k)] = v * cond.coeff.get(0, 0);
        }
    }
    // null space by Gram-Schmidt completion against the condition rows
    let mut ortho: Vec<nalgebra::DVector<f64>> = Vec::new();
    for r in 0..2 {
        let mut v = cmat.row(r).transpose().clone_owned();
        for q in &ortho {
            let c = q.dot(&v);
            v -= q * c;
        }
        let n = v.norm();
        if n > 1e-12 {
            ortho.push(v / n);
        }
    }
    let n_cond = ortho.len();
    let mut basis = Vec::new();
    for k in 0..n_coef {
        let mut v = nalgebra::DVector::<f64>::zeros(n_coef);
        v[k] = 1.0;
        for q in &ortho {
            let c = q.dot(&v);
            v -= q * c;
        }
        let n = v.norm();
        if n > 1e-8 {
            let v = v / n;
            ortho.push(v.clone());
            let mut p = PolyKernel::zero(1, 1, VarSet::of(&[var]));
            for (kk, &c) in v.iter().enumerate() {
                if c.abs() > 1e-14 {
                    p.add_term(Exponents::of(&[(var, kk as u8)]), Mat::scalar(c))?;
                }
            }
            basis.push(p);
        }
    }
    debug_assert_eq!(basis.len() + n_cond, n_coef);
    Ok(basis)
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeFile {
    pub n_u: usize,
    pub n_w: usize,
    pub n_z: usize,
    pub coefficients: PdeCoefficients,
    pub bc: Vec<BcEntry>,
    pub sensing: SensingFile,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct PdeCoefficients {
    /// Keys "00".."22".
    #[serde(default)]
    pub a: BTreeMap<String, PolyKernelRecord>,
    #[serde(default)]
    pub b: Option<PolyKernelRecord>,
    #[serde(default)]
    pub c: BTreeMap<String, PolyKernelRecord>,
    #[serde(default)]
    pub d: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcEntry {
    pub axis: String,
    pub endpoint: u8,
    pub order: u8,
    pub coeff: Vec<Vec<f64>>,
}

/// Sensing file: `c1` rows read corner traces, `c2` rows the y-boundary
/// traces of `u_xx` and `u_xxy` (functions of x), `c3` rows the x-boundary
/// traces of `u_yy` and `u_xyy` (functions of y), and `edges` lists direct
/// boundary observations of the state and its first derivatives.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct SensingFile {
    #[serde(default)]
    pub n_q1: usize,
    #[serde(default)]
    pub n_qy: usize,
    #[serde(default)]
    pub n_qx: usize,
    /// n_q1 x 16 n_u constant matrix.
    #[serde(default)]
    pub c1: Option<Vec<Vec<f64>>>,
    /// n_qx x 4 n_u polynomial matrix in x.
    #[serde(default)]
    pub c2: Option<PolyKernelRecord>,
    /// n_qy x 4 n_u polynomial matrix in y.
    #[serde(default)]
    pub c3: Option<PolyKernelRecord>,
    /// Direct edge/corner observations.
    #[serde(default)]
    pub edges: Vec<EdgeSensing>,
    #[serde(default)]
    pub d1: Option<Vec<Vec<f64>>>,
    /// Feedthrough into the q_x block (functions of x).
    #[serde(default)]
    pub d2: Option<PolyKernelRecord>,
    /// Feedthrough into the q_y block (functions of y).
    #[serde(default)]
    pub d3: Option<PolyKernelRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSensing {
    pub row: usize,
    pub dx: u8,
    pub dy: u8,
    pub loc: TraceLoc,
    pub coeff: PolyKernelRecord,
}

fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInput("ragged matrix".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

fn mat_to_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.rows).map(|i| (0..m.cols).map(|j| *m.get(i, j)).collect()).collect()
}

impl PdeFile {
    pub fn to_system(&self) -> Result<PdeSystem> {
        let parse_key = |k: &str| -> Result<(u8, u8)> {
            let bytes = k.as_bytes();
            if bytes.len() != 2 || !bytes[0].is_ascii_digit() || !bytes[1].is_ascii_digit() {
                return Err(Error::InvalidInput(format!(
                    "coefficient key '{k}' is not of the form \"ij\""
                )));
            }
            Ok((bytes[0] - b'0', bytes[1] - b'0'))
        };
        let mut a = BTreeMap::new();
        for (k, rec) in &self.coefficients.a {
            a.insert(parse_key(k)?, rec.to_kernel()?);
        }
        let mut c = BTreeMap::new();
        for (k, rec) in &self.coefficients.c {
            c.insert(parse_key(k)?, rec.to_kernel()?);
        }
        let b = self.coefficients.b.as_ref().map(|r| r.to_kernel()).transpose()?;
        let d = match &self.coefficients.d {
            Some(rows) => mat_from_rows(rows)?,
            None => Mat::zeros(self.n_z, self.n_w),
        };

        let mut by_axis: BTreeMap<char, Vec<BoundaryCondition>> = BTreeMap::new();
        for e in &self.bc {
            let axis = match e.axis.as_str() {
                "x" => 'x',
                "y" => 'y',
                other => return Err(Error::InvalidInput(format!("unknown axis '{other}'"))),
            };
            by_axis.entry(axis).or_default().push(BoundaryCondition {
                endpoint: e.endpoint,
                order: e.order,
                coeff: mat_from_rows(&e.coeff)?,
            });
        }
        let mut take2 = |axis: char| -> Result<[BoundaryCondition; 2]> {
            let v = by_axis.remove(&axis).unwrap_or_default();
            v.try_into().map_err(|_| {
                Error::InvalidInput(format!("axis {axis} needs exactly two boundary conditions"))
            })
        };
        let bc = BoundarySpec { x: take2('x')?, y: take2('y')? };

        let mut terms = Vec::new();
        if let Some(c1rows) = &self.sensing.c1 {
            let c1 = mat_from_rows(c1rows)?;
            terms.extend(SensingSpec::corner_terms_from_matrix(&c1, self.n_u)?);
        }
        if let Some(c2) = &self.sensing.c2 {
            terms.extend(lambda_edge_terms(&c2.to_kernel()?, self.n_u, false)?);
        }
        if let Some(c3) = &self.sensing.c3 {
            terms.extend(lambda_edge_terms(&c3.to_kernel()?, self.n_u, true)?);
        }
        for e in &self.sensing.edges {
            terms.push(SensingTerm {
                row: e.row,
                dx: e.dx,
                dy: e.dy,
                loc: e.loc,
                coeff: e.coeff.to_kernel()?,
            });
        }
        let sensing = SensingSpec {
            n_q1: self.sensing.n_q1,
            n_qy: self.sensing.n_qy,
            n_qx: self.sensing.n_qx,
            terms,
            d_corner: self.sensing.d1.as_ref().map(|r| mat_from_rows(r)).transpose()?,
            d_qy: self.sensing.d3.as_ref().map(|r| r.to_kernel()).transpose()?,
            d_qx: self.sensing.d2.as_ref().map(|r| r.to_kernel()).transpose()?,
        };

        let sys = PdeSystem { n_u: self.n_u, n_w: self.n_w, n_z: self.n_z, a, b, c, d, bc, sensing };
        sys.validate()?;
        Ok(sys)
    }

    pub fn from_system(sys: &PdeSystem) -> Result<Self> {
        let mut a = BTreeMap::new();
        for ((i, j), k) in &sys.a {
            a.insert(format!("{i}{j}"), PolyKernelRecord::from_kernel(k)?);
        }
        let mut c = BTreeMap::new();
        for ((i, j), k) in &sys.c {
            c.insert(format!("{i}{j}"), PolyKernelRecord::from_kernel(k)?);
        }
        let bc = [(&sys.bc.x, "x"), (&sys.bc.y, "y")]
            .into_iter()
            .flat_map(|(conds, axis)| {
                conds.iter().map(move |cond| BcEntry {
                    axis: axis.to_string(),
                    endpoint: cond.endpoint,
                    order: cond.order,
                    coeff: mat_to_rows(&cond.coeff),
                })
            })
            .collect();
        // all terms are written back as edge records, the lossless superset
        let edges = sys
            .sensing
            .terms
            .iter()
            .map(|t| {
                Ok(EdgeSensing {
                    row: t.row,
                    dx: t.dx,
                    dy: t.dy,
                    loc: t.loc,
                    coeff: PolyKernelRecord::from_kernel(&t.coeff)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PdeFile {
            n_u: sys.n_u,
            n_w: sys.n_w,
            n_z: sys.n_z,
            coefficients: PdeCoefficients {
                a,
                b: sys.b.as_ref().map(PolyKernelRecord::from_kernel).transpose()?,
                c,
                d: if sys.d.is_zero() { None } else { Some(mat_to_rows(&sys.d)) },
            },
            bc,
            sensing: SensingFile {
                n_q1: sys.sensing.n_q1,
                n_qy: sys.sensing.n_qy,
                n_qx: sys.sensing.n_qx,
                c1: None,
                c2: None,
                c3: None,
                edges,
                d1: sys.sensing.d_corner.as_ref().map(mat_to_rows),
                d2: sys.sensing.d_qx.as_ref().map(PolyKernelRecord::from_kernel).transpose()?,
                d3: sys.sensing.d_qy.as_ref().map(PolyKernelRecord::from_kernel).transpose()?,
            },
        })
    }
}

/// Expand a 4-group polynomial sensing matrix over second-derivative
/// boundary traces. `x_edges = false`: y-boundary traces of `u_xx`, `u_xxy`;
/// `true`: x-boundary traces of `u_yy`, `u_xyy`.
fn lambda_edge_terms(k: &PolyKernel<f64>, n_u: usize, x_edges: bool) -> Result<Vec<SensingTerm>> {
    if k.cols() != 4 * n_u {
        return Err(Error::DimensionMismatch("edge sensing matrix must have 4 n_u columns".into()));
    }
    let groups: [(u8, u8, u8); 4] = if x_edges {
        [(0, 2, 0), (0, 2, 1), (1, 2, 0), (1, 2, 1)]
    } else {
        [(2, 0, 0), (2, 0, 1), (2, 1, 0), (2, 1, 1)]
    };
    let rows = k.rows();
    let mut out = Vec::new();
    for (g, &(dx, dy, ep)) in groups.iter().enumerate() {
        let mut slice = PolyKernel::zero(rows, n_u, k.vars());
        for (e, m) in k.terms() {
            let sub = Mat::from_fn(rows, n_u, |i, j| *m.get(i, g * n_u + j));
            slice.add_term(*e, sub)?;
        }
        if slice.is_zero() {
            continue;
        }
        let loc = if x_edges { TraceLoc::XEdge { x: ep } } else { TraceLoc::YEdge { y: ep } };
        out.push(SensingTerm { row: 0, dx, dy, loc, coeff: slice });
    }
    Ok(out)
}

/// Serialized PIE: operator records plus dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieFile {
    pub n_u: usize,
    pub n_w: usize,
    pub n_z: usize,
    pub q_sig: SpaceSignature,
    pub t: PiOpRecord,
    pub a: PiOpRecord,
    pub b: PiOpRecord,
    pub c: PiOpRecord,
    pub d: PiOpRecord,
    pub cq: PiOpRecord,
    pub dq: PiOpRecord,
}

impl PieFile {
    pub fn from_system(p: &PieSystem) -> Result<Self> {
        Ok(PieFile {
            n_u: p.n_u,
            n_w: p.n_w,
            n_z: p.n_z,
            q_sig: p.q_sig,
            t: p.t_op.to_record()?,
            a: p.a_op.to_record()?,
            b: p.b_op.to_record()?,
            c: p.c_op.to_record()?,
            d: p.d_op.to_record()?,
            cq: p.cq_op.to_record()?,
            dq: p.dq_op.to_record()?,
        })
    }

    pub fn to_system(&self) -> Result<PieSystem> {
        Ok(PieSystem {
            n_u: self.n_u,
            n_w: self.n_w,
            n_z: self.n_z,
            q_sig: self.q_sig,
            t_op: self.t.to_op()?,
            a_op: self.a.to_op()?,
            b_op: self.b.to_op()?,
            c_op: self.c.to_op()?,
            d_op: self.d.to_op()?,
            cq_op: self.cq.to_op()?,
            dq_op: self.dq.to_op()?,
        })
    }
}

/// The scalar heat equation with growth rate `r`, a spatially uniform
/// disturbance, total-mass output, Dirichlet-Neumann boundary conditions,
/// and state observations along the upper boundaries x = 1 and y = 1.
pub fn heat_example(r: f64) -> PdeSystem {
    let n = 1;
    let one_xy = PolyKernel::scalar_const(1.0).with_vars(VarSet::of(&[Var::X, Var::Y])).unwrap();
    let mut a = BTreeMap::new();
    a.insert((0u8, 0u8), one_xy.scale(r));
    a.insert((2, 0), one_xy.clone());
    a.insert((0, 2), one_xy.clone());
    let mut c = BTreeMap::new();
    c.insert((0u8, 0u8), one_xy.clone());
    let sensing = SensingSpec {
        n_q1: 0,
        n_qy: 1,
        n_qx: 1,
        terms: vec![
            SensingTerm {
                row: 0,
                dx: 0,
                dy: 0,
                loc: TraceLoc::XEdge { x: 1 },
                coeff: PolyKernel::scalar_const(1.0).with_vars(VarSet::of(&[Var::Y])).unwrap(),
            },
            SensingTerm {
                row: 0,
                dx: 0,
                dy: 0,
                loc: TraceLoc::YEdge { y: 1 },
                coeff: PolyKernel::scalar_const(1.0).with_vars(VarSet::of(&[Var::X])).unwrap(),
            },
        ],
        d_corner: None,
        d_qy: None,
        d_qx: None,
    };
    PdeSystem {
        n_u: n,
        n_w: 1,
        n_z: 1,
        a,
        b: Some(one_xy),
        c,
        d: Mat::zeros(1, 1),
        bc: BoundarySpec {
            x: [BoundaryCondition::dirichlet(0, n), BoundaryCondition::neumann(1, n)],
            y: [BoundaryCondition::dirichlet(0, n), BoundaryCondition::neumann(1, n)],
        },
        sensing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn dn_bc() -> BoundarySpec {
        BoundarySpec {
            x: [BoundaryCondition::dirichlet(0, 1), BoundaryCondition::neumann(1, 1)],
            y: [BoundaryCondition::dirichlet(0, 1), BoundaryCondition::neumann(1, 1)],
        }
    }

    #[test]
    fn axis_factor_matches_hand_solution() {
        // u(0) = 0, u'(1) = 0: T1 = -theta, T2 = -x
        let conds = [BoundaryCondition::dirichlet(0, 1), BoundaryCondition::neumann(1, 1)];
        let (t1, t2) = build_t_axis(&conds, 1, Dir::X).unwrap();
        assert!(t1.add(&PolyKernel::var(Var::Theta)).unwrap().max_abs_coeff() < 1e-14);
        assert!(t2.add(&PolyKernel::var(Var::X)).unwrap().max_abs_coeff() < 1e-14);
        // v = -1 gives u = x - x^2/2
        let sig = SpaceSignature::l2_2d(1);
        let mut tx = BlockPiOp::zero(sig, sig);
        let (t1, t2) = build_t_axis(&conds, 1, Dir::X).unwrap();
        tx.add_to_kernel(Space::Lxy, Space::Lxy, DirSlot::Low, DirSlot::Mult, t1).unwrap();
        tx.add_to_kernel(Space::Lxy, Space::Lxy, DirSlot::Up, DirSlot::Mult, t2).unwrap();
        let v = FunctionVector::from_2d(
            PolyKernel::scalar_const(-1.0).with_vars(VarSet::of(&[Var::X, Var::Y])).unwrap(),
        )
        .unwrap();
        let u = tx.apply(&v).unwrap();
        let want = PolyKernel::var(Var::X)
            .add(&PolyKernel::monomial(Exponents::of(&[(Var::X, 2)])).scale(-0.5))
            .unwrap();
        assert!(u.comp(Space::Lxy).unwrap().add(&want.neg()).unwrap().max_abs_coeff() < 1e-14);
    }

    #[test]
    fn t_kernels_are_tensor_products() {
        let t = build_t(&dn_bc(), 1).unwrap();
        // T11(x,y,theta,eta) = theta * eta
        let k11 = t.kernel(Space::Lxy, Space::Lxy, DirSlot::Low, DirSlot::Low).unwrap();
        let want = PolyKernel::monomial(Exponents::of(&[(Var::Theta, 1), (Var::Eta, 1)]));
        assert!(k11.add(&want.neg()).unwrap().max_abs_coeff() < 1e-14);
        // T12(x,y,theta,eta) = theta * y
        let k12 = t.kernel(Space::Lxy, Space::Lxy, DirSlot::Low, DirSlot::Up).unwrap();
        let want12 = PolyKernel::monomial(Exponents::of(&[(Var::Theta, 1), (Var::Y, 1)]));
        assert!(k12.add(&want12.neg()).unwrap().max_abs_coeff() < 1e-14);
    }

    #[test]
    fn ill_posed_axis_is_rejected() {
        let bad = BoundarySpec {
            x: [BoundaryCondition::neumann(0, 1), BoundaryCondition::neumann(1, 1)],
            y: [BoundaryCondition::dirichlet(0, 1), BoundaryCondition::neumann(1, 1)],
        };
        match build_t(&bad, 1) {
            Err(Error::WellPosedness { axis, .. }) => assert_eq!(axis, 'x'),
            other => panic!("expected well-posedness error, got {other:?}"),
        }
    }

    #[test]
    fn both_identities_hold_on_random_polynomials() {
        let t = build_t(&dn_bc(), 1).unwrap();
        let mut rng = StdRng::seed_from_u64(31);
        let states = random_states_in_x(&dn_bc(), 1, 5, 20, &mut rng).unwrap();
        let fundamental: Vec<FunctionVector> = (0..20)
            .map(|_| {
                let basis = crate::poly::MonomialBasis::new(
                    &[Var::X, Var::Y],
                    crate::poly::DegreeSpec::PerVar(5),
                );
                let mut p = PolyKernel::zero(1, 1, VarSet::of(&[Var::X, Var::Y]));
                for e in &basis.monomials {
                    use rand::Rng;
                    p.add_term(*e, Mat::scalar(rng.gen_range(-1.0..1.0))).unwrap();
                }
                FunctionVector::from_2d(p).unwrap()
            })
            .collect();
        let worst = lemma_identity_residuals(&t, &fundamental, &states).unwrap();
        assert!(worst < 1e-9, "identity residual {worst}");
    }

    #[test]
    fn diff_compose_is_order_independent() {
        let t = build_t(&dn_bc(), 1).unwrap();
        let xy = t.diff(Dir::X).unwrap().diff(Dir::Y).unwrap();
        let yx = t.diff(Dir::Y).unwrap().diff(Dir::X).unwrap();
        assert!(xy.max_abs_diff(&yx) < 1e-13);
    }

    #[test]
    fn diff_compose_full_order_gives_identity_on_constants() {
        let t = build_t(&dn_bc(), 1).unwrap();
        let r22 = diff_compose(&t, 2, 2).unwrap();
        let f = FunctionVector::from_2d(
            PolyKernel::scalar_const(1.0).with_vars(VarSet::of(&[Var::X, Var::Y])).unwrap(),
        )
        .unwrap();
        let g = r22.apply(&f).unwrap();
        let diff = g.sub(&f).unwrap().max_abs_coeff();
        assert!(diff < 1e-13, "d2x d2y T 1 = 1 failed: {diff}");
    }

    #[test]
    fn membership_checks() {
        let bc = dn_bc();
        // ((x-1)^4 - 1) q(y) with q(0)=0, q'(1)=0 satisfies the conditions
        let xm1 = PolyKernel::var(Var::X).add(&PolyKernel::scalar_const(-1.0)).unwrap();
        let x4 = xm1.mul(&xm1).unwrap().mul(&xm1).unwrap().mul(&xm1).unwrap();
        let xfac = x4.add(&PolyKernel::scalar_const(-1.0)).unwrap().scale(5.0);
        let q = PolyKernel::var(Var::Y)
            .add(&PolyKernel::monomial(Exponents::of(&[(Var::Y, 2)])).scale(-0.5))
            .unwrap();
        let u = FunctionVector::from_2d(xfac.mul(&q).unwrap()).unwrap();
        assert!(check_state_membership(&u, &bc).unwrap());

        let one = FunctionVector::from_2d(
            PolyKernel::scalar_const(1.0).with_vars(VarSet::of(&[Var::X, Var::Y])).unwrap(),
        )
        .unwrap();
        assert!(!check_state_membership(&one, &bc).unwrap());

        let zero = FunctionVector::zero(SpaceSignature::l2_2d(1));
        assert!(check_state_membership(&zero, &bc).unwrap());
    }

    #[test]
    fn build_pie_zero_dynamics_gives_zero_operators() {
        let mut pde = heat_example(4.0);
        pde.a.clear();
        pde.b = None;
        let pie = build_pie(&pde).unwrap();
        assert!(pie.a_op.is_zero());
        assert!(pie.b_op.is_zero());
    }

    #[test]
    fn heat_example_cq_has_two_edge_blocks() {
        let pie = build_pie(&heat_example(8.0)).unwrap();
        assert_eq!(pie.q_sig, SpaceSignature { n0: 0, nx: 1, ny: 1, n2: 0 });
        let has_ly = pie.cq_op.kernels().any(|(o, _, _, _, _)| o == Space::Ly);
        let has_lx = pie.cq_op.kernels().any(|(o, _, _, _, _)| o == Space::Lx);
        assert!(has_ly && has_lx);
        assert!(pie.dq_op.is_zero());
    }

    #[test]
    fn cq_reproduces_boundary_traces_of_states() {
        let pde = heat_example(4.0);
        let pie = build_pie(&pde).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        let states = random_states_in_x(&pde.bc, 1, 5, 10, &mut rng).unwrap();
        for u in &states {
            let up = u.comp(Space::Lxy).unwrap();
            let v = up.diff(Var::X).diff(Var::X).diff(Var::Y).diff(Var::Y);
            let q = pie.cq_op.apply(&FunctionVector::from_2d(v).unwrap()).unwrap();
            // q_y component is u(1, .), q_x component is u(., 1)
            let u_x1 = up.subs(Var::X, Bound::One).unwrap();
            let u_y1 = up.subs(Var::Y, Bound::One).unwrap();
            let got_y = q
                .comp(Space::Ly)
                .cloned()
                .unwrap_or_else(|| PolyKernel::zero(1, 1, VarSet::of(&[Var::Y])));
            let got_x = q
                .comp(Space::Lx)
                .cloned()
                .unwrap_or_else(|| PolyKernel::zero(1, 1, VarSet::of(&[Var::X])));
            assert!(got_y.add(&u_x1.neg()).unwrap().max_abs_coeff() < 1e-10);
            assert!(got_x.add(&u_y1.neg()).unwrap().max_abs_coeff() < 1e-10);
        }
    }

    #[test]
    fn pde_file_round_trip_is_bit_exact() {
        let pde = heat_example(8.0);
        let file = PdeFile::from_system(&pde).unwrap();
        let json = serde_json::to_string_pretty(&file).unwrap();
        let file2: PdeFile = serde_json::from_str(&json).unwrap();
        let pde2 = file2.to_system().unwrap();
        assert_eq!(pde, pde2);
        let json2 = serde_json::to_string_pretty(&PdeFile::from_system(&pde2).unwrap()).unwrap();
        assert_eq!(json, json2);
    }

    #[test]
    fn pie_file_round_trip() {
        let pie = build_pie(&heat_example(4.0)).unwrap();
        let f = PieFile::from_system(&pie).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let f2: PieFile = serde_json::from_str(&json).unwrap();
        let pie2 = f2.to_system().unwrap();
        assert!(pie.t_op.max_abs_diff(&pie2.t_op) == 0.0);
        assert!(pie.cq_op.max_abs_diff(&pie2.cq_op) == 0.0);
    }
}
