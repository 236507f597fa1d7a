//! Matrix-valued polynomial kernels on the unit box.
//!
//! Every PI-operator kernel is a polynomial in a subset of the spatial
//! variables `x, y` and the integration dummies `theta, eta`. Two extra
//! dummies `nu, mu` exist only as intermediates of operator composition and
//! never appear in stored operators or serialized data.
//!
//! Kernels are kept in canonical sparse form: a map from multi-degree to a
//! dense coefficient matrix, with all-zero matrices never stored. Term order
//! is graded lexicographic over `(x, y, theta, eta, nu, mu)`, which makes
//! equality tests and serialization deterministic.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Number of variables in the internal universe.
pub const NVARS: usize = 6;

/// Spatial variables and integration dummies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    X = 0,
    Y = 1,
    Theta = 2,
    Eta = 3,
    /// Composition dummy for the x direction; never stored.
    Nu = 4,
    /// Composition dummy for the y direction; never stored.
    Mu = 5,
}

pub const ALL_VARS: [Var; NVARS] = [Var::X, Var::Y, Var::Theta, Var::Eta, Var::Nu, Var::Mu];

impl Var {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Theta => "theta",
            Var::Eta => "eta",
            Var::Nu => "nu",
            Var::Mu => "mu",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of variables, as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct VarSet(u8);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn of(vars: &[Var]) -> Self {
        let mut s = VarSet(0);
        for &v in vars {
            s.insert(v);
        }
        s
    }

    pub fn contains(self, v: Var) -> bool {
        self.0 & (1 << v.index()) != 0
    }

    pub fn insert(&mut self, v: Var) {
        self.0 |= 1 << v.index();
    }

    pub fn remove(&mut self, v: Var) {
        self.0 &= !(1 << v.index());
    }

    pub fn union(self, other: VarSet) -> VarSet {
        VarSet(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Var> {
        ALL_VARS.into_iter().filter(move |v| self.contains(*v))
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// Exponent tuple over the full variable universe.
///
/// Ordering is graded lexicographic: total degree first, then lexicographic
/// on `(x, y, theta, eta, nu, mu)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Exponents(pub [u8; NVARS]);

impl Exponents {
    pub const ZERO: Exponents = Exponents([0; NVARS]);

    pub fn of(pairs: &[(Var, u8)]) -> Self {
        let mut e = Exponents::ZERO;
        for &(v, k) in pairs {
            e.0[v.index()] += k;
        }
        e
    }

    pub fn get(self, v: Var) -> u8 {
        self.0[v.index()]
    }

    pub fn total(self) -> u32 {
        self.0.iter().map(|&k| k as u32).sum()
    }

    pub fn vars(self) -> VarSet {
        let mut s = VarSet::EMPTY;
        for v in ALL_VARS {
            if self.get(v) > 0 {
                s.insert(v);
            }
        }
        s
    }

    /// Componentwise `<=`.
    pub fn dominated_by(self, bound: Exponents) -> bool {
        self.0.iter().zip(bound.0.iter()).all(|(a, b)| a <= b)
    }

    fn max(self, other: Exponents) -> Exponents {
        let mut e = self;
        for i in 0..NVARS {
            e.0[i] = e.0[i].max(other.0[i]);
        }
        e
    }
}

impl Ord for Exponents {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // graded: total degree first; within a degree, x-heavy monomials first
        self.total().cmp(&other.total()).then(self.0.cmp(&other.0).reverse())
    }
}

impl PartialOrd for Exponents {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in ALL_VARS {
            let k = self.get(v);
            if k > 0 {
                if !first {
                    write!(f, "*")?;
                }
                first = false;
                if k == 1 {
                    write!(f, "{v}")?;
                } else {
                    write!(f, "{v}^{k}")?;
                }
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

/// Scalar coefficients a kernel can carry: plain `f64` or affine expressions
/// in SDP decision variables.
pub trait Coeff: Clone + PartialEq + fmt::Debug + 'static {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Multiply by a plain scalar.
    fn scale(&self, s: f64) -> Self;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
}

/// Small dense row-major matrix over a coefficient scalar.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Coeff> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut S {
        &mut self.data[i * self.cols + j]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(S::is_zero)
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = a.add(b);
        }
    }

    pub fn neg(&self) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(S::neg).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.scale(s)).collect() }
    }
}

impl Mat<f64> {
    pub fn identity(n: usize) -> Self {
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn scalar(v: f64) -> Self {
        Mat { rows: 1, cols: 1, data: vec![v] }
    }
}

impl<S: fmt::Debug> fmt::Debug for Mat<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}{:?}", self.rows, self.cols, self.data)
    }
}

/// Product of mixed-scalar matrices, `out[i][k] = sum_j mul(a[i][j], b[j][k])`.
pub fn mat_mul_with<SA: Coeff, SB: Coeff, SO: Coeff>(
    a: &Mat<SA>,
    b: &Mat<SB>,
    mul: &impl Fn(&SA, &SB) -> SO,
) -> Mat<SO> {
    debug_assert_eq!(a.cols, b.rows);
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a.get(i, j);
            if aij.is_zero() {
                continue;
            }
            for k in 0..b.cols {
                let bjk = b.get(j, k);
                if bjk.is_zero() {
                    continue;
                }
                let p = mul(aij, bjk);
                let tgt: &mut SO = out.get_mut(i, k);
                *tgt = tgt.add(&p);
            }
        }
    }
    out
}

/// Integration / substitution bound: a constant endpoint or another variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    Zero,
    One,
    Var(Var),
}

/// A matrix-valued polynomial in a declared subset of the variables.
///
/// `vars` is the set of variables the kernel is *allowed* to depend on (fixed
/// by its position in a PI operator); stored terms may use fewer.
#[derive(Clone, PartialEq)]
pub struct PolyKernel<S = f64> {
    rows: usize,
    cols: usize,
    vars: VarSet,
    terms: BTreeMap<Exponents, Mat<S>>,
}

impl<S: Coeff> PolyKernel<S> {
    pub fn zero(rows: usize, cols: usize, vars: VarSet) -> Self {
        PolyKernel { rows, cols, vars, terms: BTreeMap::new() }
    }

    /// Build from raw terms; zero matrices are dropped, exponents outside
    /// `vars` are rejected.
    pub fn from_terms(
        rows: usize,
        cols: usize,
        vars: VarSet,
        terms: impl IntoIterator<Item = (Exponents, Mat<S>)>,
    ) -> Result<Self> {
        let mut p = PolyKernel::zero(rows, cols, vars);
        for (e, m) in terms {
            p.add_term(e, m)?;
        }
        Ok(p)
    }

    /// Accumulate one term into canonical form.
    pub fn add_term(&mut self, e: Exponents, m: Mat<S>) -> Result<()> {
        if m.rows != self.rows || m.cols != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "term is {}x{}, kernel is {}x{}",
                m.rows, m.cols, self.rows, self.cols
            )));
        }
        if !e.vars().is_subset_of(self.vars) {
            return Err(Error::DimensionMismatch(format!(
                "monomial {e:?} uses variables outside {:?}",
                self.vars
            )));
        }
        if m.is_zero() {
            return Ok(());
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(m);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                o.get_mut().add_assign(&m);
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn vars(&self) -> VarSet {
        self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Mat<S>)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Tight per-variable degree bound of the stored terms.
    pub fn max_degree(&self) -> Exponents {
        self.terms.keys().fold(Exponents::ZERO, |acc, e| acc.max(*e))
    }

    /// Enforce an explicit per-variable degree bound.
    pub fn check_degree_bound(&self, bound: Exponents) -> Result<()> {
        for e in self.terms.keys() {
            if !e.dominated_by(bound) {
                return Err(Error::DimensionMismatch(format!(
                    "monomial {e:?} exceeds degree bound {bound:?}"
                )));
            }
        }
        Ok(())
    }

    /// Redeclare the variable set (must cover all stored terms).
    pub fn with_vars(mut self, vars: VarSet) -> Result<Self> {
        for e in self.terms.keys() {
            if !e.vars().is_subset_of(vars) {
                return Err(Error::DimensionMismatch(format!(
                    "term {e:?} not contained in new variable set {vars:?}"
                )));
            }
        }
        self.vars = vars;
        Ok(self)
    }

    /// Coefficient-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = PolyKernel::zero(self.rows, self.cols, self.vars.union(other.vars));
        for (e, m) in &self.terms {
            out.add_term(*e, m.clone())?;
        }
        for (e, m) in &other.terms {
            out.add_term(*e, m.clone())?;
        }
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        PolyKernel {
            rows: self.rows,
            cols: self.cols,
            vars: self.vars,
            terms: self.terms.iter().map(|(e, m)| (*e, m.neg())).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return PolyKernel::zero(self.rows, self.cols, self.vars);
        }
        PolyKernel {
            rows: self.rows,
            cols: self.cols,
            vars: self.vars,
            terms: self.terms.iter().map(|(e, m)| (*e, m.scale(s))).collect(),
        }
    }

    /// Matrix transpose (kernel variables untouched).
    pub fn transpose(&self) -> Self {
        PolyKernel {
            rows: self.cols,
            cols: self.rows,
            vars: self.vars,
            terms: self.terms.iter().map(|(e, m)| (*e, m.transpose())).collect(),
        }
    }

    /// Polynomial matrix product with mixed scalar types.
    pub fn mul_with<SB: Coeff, SO: Coeff>(
        &self,
        other: &PolyKernel<SB>,
        mul: &impl Fn(&S, &SB) -> SO,
    ) -> Result<PolyKernel<SO>> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "mul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = PolyKernel::zero(self.rows, other.cols, self.vars.union(other.vars));
        for (ea, ma) in &self.terms {
            for (eb, mb) in &other.terms {
                let mut e = *ea;
                for i in 0..NVARS {
                    e.0[i] += eb.0[i];
                }
                out.add_term(e, mat_mul_with(ma, mb, mul))?;
            }
        }
        Ok(out)
    }

    /// Substitute `value` for `var`. Variable targets merge exponents.
    pub fn subs(&self, var: Var, value: Bound) -> Result<Self> {
        let mut new_vars = self.vars;
        new_vars.remove(var);
        if let Bound::Var(w) = value {
            if w == var {
                return Ok(self.clone());
            }
            new_vars.insert(w);
        }
        let mut out = PolyKernel::zero(self.rows, self.cols, new_vars);
        for (e, m) in &self.terms {
            let k = e.get(var);
            let mut e2 = *e;
            e2.0[var.index()] = 0;
            match value {
                Bound::Zero => {
                    if k == 0 {
                        out.add_term(e2, m.clone())?;
                    }
                }
                Bound::One => {
                    out.add_term(e2, m.clone())?;
                }
                Bound::Var(w) => {
                    e2.0[w.index()] += k;
                    out.add_term(e2, m.clone())?;
                }
            }
        }
        Ok(out)
    }

    /// Exact partial derivative.
    pub fn diff(&self, var: Var) -> Self {
        let mut out = PolyKernel::zero(self.rows, self.cols, self.vars);
        for (e, m) in &self.terms {
            let k = e.get(var);
            if k == 0 {
                continue;
            }
            let mut e2 = *e;
            e2.0[var.index()] -= 1;
            out.add_term(e2, m.scale(k as f64)).expect("diff stays in bounds");
        }
        out
    }

    /// Definite integral over `var` between symbolic limits: the exact
    /// antiderivative evaluated at `upper` minus at `lower`.
    pub fn integrate(&self, var: Var, lower: Bound, upper: Bound) -> Result<Self> {
        if !self.vars.contains(var) {
            return Err(Error::InvalidLimits(format!(
                "integration variable {var} not declared in {:?}",
                self.vars
            )));
        }
        if lower == upper {
            let mut vs = self.vars;
            vs.remove(var);
            return Ok(PolyKernel::zero(self.rows, self.cols, vs));
        }
        if let (Bound::One, _) = (lower, upper) {
            // keep antiderivative orientation: int_1^b = -(int_b^1)
            return Ok(self.integrate(var, upper, Bound::One)?.neg());
        }
        // antiderivative
        let mut anti = PolyKernel::zero(self.rows, self.cols, self.vars);
        for (e, m) in &self.terms {
            let k = e.get(var) as f64;
            let mut e2 = *e;
            e2.0[var.index()] += 1;
            anti.add_term(e2, m.scale(1.0 / (k + 1.0)))?;
        }
        let hi = anti.subs(var, upper)?;
        let lo = anti.subs(var, lower)?;
        hi.add(&lo.neg())
    }

    /// Rename variables through a permutation table `perm[old] = new`.
    pub fn permute_vars(&self, perm: &[Var; NVARS]) -> Self {
        let mut vars = VarSet::EMPTY;
        for v in self.vars.iter() {
            vars.insert(perm[v.index()]);
        }
        let mut out = PolyKernel::zero(self.rows, self.cols, vars);
        for (e, m) in &self.terms {
            let mut e2 = Exponents::ZERO;
            for i in 0..NVARS {
                e2.0[perm[i].index()] += e.0[i];
            }
            out.add_term(e2, m.clone()).expect("permutation preserves validity");
        }
        out
    }

    /// Map coefficients into another scalar type.
    pub fn map_coeffs<SO: Coeff>(&self, f: &impl Fn(&S) -> SO) -> PolyKernel<SO> {
        let mut out = PolyKernel::zero(self.rows, self.cols, self.vars);
        for (e, m) in &self.terms {
            let m2 = Mat { rows: m.rows, cols: m.cols, data: m.data.iter().map(f).collect() };
            out.add_term(*e, m2).expect("mapped term stays valid");
        }
        out
    }
}

impl PolyKernel<f64> {
    /// Constant kernel with no variables.
    pub fn constant(m: Mat<f64>) -> Self {
        let rows = m.rows;
        let cols = m.cols;
        let mut p = PolyKernel::zero(rows, cols, VarSet::EMPTY);
        p.add_term(Exponents::ZERO, m).expect("constant term");
        p
    }

    pub fn scalar_const(v: f64) -> Self {
        PolyKernel::constant(Mat::scalar(v))
    }

    /// The 1x1 monomial with given exponents.
    pub fn monomial(e: Exponents) -> Self {
        let mut p = PolyKernel::zero(1, 1, e.vars());
        p.add_term(e, Mat::scalar(1.0)).expect("monomial term");
        p
    }

    /// The scalar variable `v` as a 1x1 kernel.
    pub fn var(v: Var) -> Self {
        PolyKernel::monomial(Exponents::of(&[(v, 1)]))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.mul_with(other, &|a: &f64, b: &f64| a * b)
    }

    /// Evaluate at a point; variable values indexed by `Var`.
    pub fn eval(&self, point: &[f64; NVARS]) -> Mat<f64> {
        let mut out = Mat::zeros(self.rows, self.cols);
        for (e, m) in &self.terms {
            let mut w = 1.0;
            for i in 0..NVARS {
                w *= point[i].powi(e.0[i] as i32);
            }
            for (o, c) in out.data.iter_mut().zip(m.data.iter()) {
                *o += w * c;
            }
        }
        out
    }

    /// Largest absolute coefficient, as a crude magnitude measure.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .flat_map(|m| m.data.iter())
            .fold(0.0f64, |acc, c| acc.max(c.abs()))
    }
}

impl<S: Coeff> fmt::Debug for PolyKernel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PolyKernel<{}x{},{:?}>[", self.rows, self.cols, self.vars)?;
        for (i, (e, m)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if self.rows == 1 && self.cols == 1 {
                write!(f, "{:?}*{e:?}", m.data[0])?;
            } else {
                write!(f, "{m:?}*{e:?}")?;
            }
        }
        write!(f, "]")
    }
}

/// Serialized form: one record per (exponent tuple, row, col) with a nonzero
/// coefficient. Only the four public variables are admissible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyKernelRecord {
    pub rows: usize,
    pub cols: usize,
    /// Names among "x", "y", "theta", "eta".
    pub vars: Vec<String>,
    /// Records `[e_x, e_y, e_theta, e_eta, row, col, coeff]` in term order.
    pub terms: Vec<(u8, u8, u8, u8, usize, usize, f64)>,
}

impl PolyKernelRecord {
    pub fn from_kernel(p: &PolyKernel<f64>) -> Result<Self> {
        let mut terms = Vec::new();
        for (e, m) in p.terms() {
            if e.get(Var::Nu) != 0 || e.get(Var::Mu) != 0 {
                return Err(Error::InvalidInput(
                    "internal composition dummy in serialized kernel".into(),
                ));
            }
            for i in 0..m.rows {
                for j in 0..m.cols {
                    let c = *m.get(i, j);
                    if c != 0.0 {
                        terms.push((
                            e.get(Var::X),
                            e.get(Var::Y),
                            e.get(Var::Theta),
                            e.get(Var::Eta),
                            i,
                            j,
                            c,
                        ));
                    }
                }
            }
        }
        Ok(PolyKernelRecord {
            rows: p.rows(),
            cols: p.cols(),
            vars: p.vars().iter().map(|v| v.name().to_string()).collect(),
            terms,
        })
    }

    pub fn to_kernel(&self) -> Result<PolyKernel<f64>> {
        let mut vars = VarSet::EMPTY;
        for name in &self.vars {
            let v = match name.as_str() {
                "x" => Var::X,
                "y" => Var::Y,
                "theta" => Var::Theta,
                "eta" => Var::Eta,
                other => {
                    return Err(Error::InvalidInput(format!("unknown variable name '{other}'")))
                }
            };
            vars.insert(v);
        }
        let mut p = PolyKernel::zero(self.rows, self.cols, vars);
        for &(ex, ey, et, ee, i, j, c) in &self.terms {
            if i >= self.rows || j >= self.cols {
                return Err(Error::InvalidInput("kernel record index out of range".into()));
            }
            let e = Exponents::of(&[(Var::X, ex), (Var::Y, ey), (Var::Theta, et), (Var::Eta, ee)]);
            let mut m = Mat::zeros(self.rows, self.cols);
            *m.get_mut(i, j) = c;
            p.add_term(e, m)?;
        }
        Ok(p)
    }
}

/// How a monomial basis caps degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeSpec {
    /// Total degree across all basis variables.
    Total(u8),
    /// Per-variable cap, uniform over the basis variables.
    PerVar(u8),
}

/// A deterministic (graded lexicographic) list of monomials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    pub vars: Vec<Var>,
    pub degree: DegreeSpec,
    pub monomials: Vec<Exponents>,
}

impl MonomialBasis {
    pub fn new(vars: &[Var], degree: DegreeSpec) -> Self {
        let mut monomials = vec![Exponents::ZERO];
        // per-variable expansion, then filter and sort
        for &v in vars {
            let cap = match degree {
                DegreeSpec::Total(d) => d,
                DegreeSpec::PerVar(d) => d,
            };
            let mut next = Vec::new();
            for e in &monomials {
                for k in 0..=cap {
                    let mut e2 = *e;
                    e2.0[v.index()] += k;
                    next.push(e2);
                }
            }
            monomials = next;
        }
        if let DegreeSpec::Total(d) = degree {
            monomials.retain(|e| e.total() <= d as u32);
        }
        monomials.sort();
        monomials.dedup();
        MonomialBasis { vars: vars.to_vec(), degree, monomials }
    }

    pub fn size(&self) -> usize {
        self.monomials.len()
    }

    /// Stack the monomials (each times `I_n`) into a tall kernel of shape
    /// `(size*n) x n`, used to build Gram-parameterized operators.
    pub fn stack_kernel(&self, n: usize) -> PolyKernel<f64> {
        let vars = VarSet::of(&self.vars);
        let mut p = PolyKernel::zero(self.size() * n, n, vars);
        for (k, e) in self.monomials.iter().enumerate() {
            let m = Mat::from_fn(self.size() * n, n, |i, j| {
                if i >= k * n && i < (k + 1) * n && i - k * n == j {
                    1.0
                } else {
                    0.0
                }
            });
            p.add_term(*e, m).expect("stack term");
        }
        p
    }
}

/// Shifted Legendre polynomials on [0,1] in variable `var`, orthonormal in
/// L2[0,1], degrees 0..=degree.
///
/// Coefficients come from the integer closed form
/// `P~_n(v) = sum_k (-1)^(n+k) C(n,k) C(n+k,k) v^k`, followed by one
/// Gram-Schmidt polish pass that pushes the floating-point Gram matrix to
/// the identity at machine precision.
pub fn legendre_basis(degree: usize, var: Var) -> Vec<PolyKernel<f64>> {
    let binom = |n: i128, k: i128| -> i128 {
        let mut r: i128 = 1;
        for i in 0..k {
            r = r * (n - i) / (i + 1);
        }
        r
    };
    let mut out: Vec<PolyKernel<f64>> = Vec::with_capacity(degree + 1);
    for n in 0..=degree as i128 {
        let mut p = PolyKernel::zero(1, 1, VarSet::of(&[var]));
        for k in 0..=n {
            let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * (binom(n, k) * binom(n + k, k)) as f64;
            p.add_term(Exponents::of(&[(var, k as u8)]), Mat::scalar(c)).unwrap();
        }
        out.push(p.scale((2.0 * n as f64 + 1.0).sqrt()));
    }
    // polish: coefficient rounding leaves off-diagonal inner products around
    // the ulp of the largest coefficient; sweep Gram-Schmidt corrections with
    // compensated inner products until the residual sits below 5e-13
    for _ in 0..50 {
        let mut worst = 0.0f64;
        for i in 0..out.len() {
            for j in 0..i {
                let c = ip_1var_compensated(&out[i], &out[j], var);
                worst = worst.max(c.abs());
                if c != 0.0 {
                    out[i] = out[i].add(&out[j].scale(-c)).unwrap();
                }
            }
            let nrm = ip_1var_compensated(&out[i], &out[i], var).sqrt();
            out[i] = out[i].scale(1.0 / nrm);
        }
        if worst < 5e-13 {
            break;
        }
    }
    out
}

/// Compensated L2[0,1] inner product of scalar one-variable kernels.
///
/// Sums `a_i b_j / (i+j+1)` over a common denominator with exact FMA
/// two-products and Neumaier accumulation, so the result is accurate to its
/// own ulp even when the naive sum cancels catastrophically.
pub fn ip_1var_compensated(a: &PolyKernel<f64>, b: &PolyKernel<f64>, var: Var) -> f64 {
    assert!(a.rows() == 1 && a.cols() == 1 && b.rows() == 1 && b.cols() == 1);
    let coeffs = |p: &PolyKernel<f64>| -> Vec<(u8, f64)> {
        p.terms().map(|(e, m)| (e.get(var), m.data[0])).collect()
    };
    let ca = coeffs(a);
    let cb = coeffs(b);
    let max_pow = ca.iter().map(|t| t.0).max().unwrap_or(0) + cb.iter().map(|t| t.0).max().unwrap_or(0);
    // common denominator lcm(1..=max_pow+1)
    let mut denom: i64 = 1;
    for k in 1..=(max_pow as i64 + 1) {
        denom = denom / gcd(denom, k) * k;
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut push = |v: f64| {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    };
    for &(i, ai) in &ca {
        for &(j, bj) in &cb {
            let m = (denom / (i as i64 + j as i64 + 1)) as f64;
            // exact split of ai*bj
            let p = ai * bj;
            let e = ai.mul_add(bj, -p);
            let p2 = p * m;
            let e2 = p.mul_add(m, -p2);
            push(p2);
            push(e2 + e * m);
        }
    }
    (sum + comp) / denom as f64
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn xk() -> PolyKernel<f64> {
        PolyKernel::var(Var::X)
    }

    fn random_poly(rng: &mut StdRng, vars: &[Var], deg: u8, rows: usize, cols: usize) -> PolyKernel<f64> {
        let basis = MonomialBasis::new(vars, DegreeSpec::PerVar(deg));
        let mut p = PolyKernel::zero(rows, cols, VarSet::of(vars));
        for e in &basis.monomials {
            let m = Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
            p.add_term(*e, m).unwrap();
        }
        p
    }

    fn random_point(rng: &mut StdRng) -> [f64; NVARS] {
        let mut pt = [0.0; NVARS];
        for p in pt.iter_mut() {
            *p = rng.gen_range(0.0..1.0);
        }
        pt
    }

    #[test]
    fn add_identity_and_cancellation() {
        let x = xk();
        let zero = PolyKernel::zero(1, 1, VarSet::of(&[Var::X]));
        assert_eq!(x.add(&zero).unwrap(), x);
        let cancel = x.add(&x.neg()).unwrap();
        assert!(cancel.is_zero());
        assert_eq!(cancel.num_terms(), 0);
    }

    #[test]
    fn add_collects_matching_terms() {
        // (2xy) + (3xy + theta) = 5xy + theta, checked by evaluation
        let xy = PolyKernel::monomial(Exponents::of(&[(Var::X, 1), (Var::Y, 1)]));
        let th = PolyKernel::var(Var::Theta);
        let a = xy.scale(2.0);
        let b = xy.scale(3.0).add(&th).unwrap();
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.num_terms(), 2);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..10 {
            let pt = random_point(&mut rng);
            let want = 5.0 * pt[0] * pt[1] + pt[2];
            assert!((sum.eval(&pt).data[0] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn mul_identity_and_distributivity() {
        let mut rng = StdRng::seed_from_u64(3);
        let p = random_poly(&mut rng, &[Var::X, Var::Theta], 2, 1, 1);
        let one = PolyKernel::scalar_const(1.0);
        assert_eq!(one.mul(&p).unwrap(), p);

        // (x + theta) * y = xy + theta*y
        let s = xk().add(&PolyKernel::var(Var::Theta)).unwrap();
        let prod = s.mul(&PolyKernel::var(Var::Y)).unwrap();
        let want = PolyKernel::monomial(Exponents::of(&[(Var::X, 1), (Var::Y, 1)]))
            .add(&PolyKernel::monomial(Exponents::of(&[(Var::Theta, 1), (Var::Y, 1)])))
            .unwrap();
        assert_eq!(prod, want);
    }

    #[test]
    fn mul_square_binomial() {
        // (x - theta)^2 = x^2 - 2 x theta + theta^2
        let d = xk().add(&PolyKernel::var(Var::Theta).neg()).unwrap();
        let sq = d.mul(&d).unwrap();
        assert_eq!(sq.num_terms(), 3);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let pt = random_point(&mut rng);
            let want = (pt[0] - pt[2]) * (pt[0] - pt[2]);
            assert!((sq.eval(&pt).data[0] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn mul_matches_pointwise_eval_randomized() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..20 {
            let a = random_poly(&mut rng, &[Var::X, Var::Y, Var::Theta, Var::Eta], 2, 2, 3);
            let b = random_poly(&mut rng, &[Var::X, Var::Y, Var::Theta, Var::Eta], 2, 3, 2);
            let c = a.mul(&b).unwrap();
            for _ in 0..5 {
                let pt = random_point(&mut rng);
                let me = mat_mul_with(&a.eval(&pt), &b.eval(&pt), &|x: &f64, y: &f64| x * y);
                let ce = c.eval(&pt);
                for (u, v) in me.data.iter().zip(ce.data.iter()) {
                    assert!((u - v).abs() < 1e-12 * (1.0 + v.abs()));
                }
            }
        }
    }

    #[test]
    fn integrate_monomial_rules() {
        // int_0^x theta dtheta = x^2/2
        let th = PolyKernel::var(Var::Theta);
        let got = th.integrate(Var::Theta, Bound::Zero, Bound::Var(Var::X)).unwrap();
        let want = PolyKernel::monomial(Exponents::of(&[(Var::X, 2)])).scale(0.5);
        assert_eq!(got, want);

        // int_0^1 1 dtheta = 1
        let one = PolyKernel::scalar_const(1.0).with_vars(VarSet::of(&[Var::Theta])).unwrap();
        let got = one.integrate(Var::Theta, Bound::Zero, Bound::One).unwrap();
        assert_eq!(got, PolyKernel::scalar_const(1.0));
    }

    #[test]
    fn integrate_with_lower_limit_x() {
        // int_x^1 x theta^2 dtheta = x/3 - x^4/3, checked against quadrature
        let p = xk().mul(&PolyKernel::var(Var::Theta)).unwrap().mul(&PolyKernel::var(Var::Theta)).unwrap();
        let got = p.integrate(Var::Theta, Bound::Var(Var::X), Bound::One).unwrap();
        let want = xk()
            .scale(1.0 / 3.0)
            .add(&PolyKernel::monomial(Exponents::of(&[(Var::X, 4)])).scale(-1.0 / 3.0))
            .unwrap();
        assert_eq!(got, want);
        // numeric quadrature check at a few x values
        for &xv in &[0.0, 0.3, 0.77, 1.0] {
            let n = 2000;
            let mut acc = 0.0;
            for i in 0..n {
                let t = xv + (1.0 - xv) * (i as f64 + 0.5) / n as f64;
                acc += xv * t * t * (1.0 - xv) / n as f64;
            }
            let pt = {
                let mut p = [0.0; NVARS];
                p[0] = xv;
                p
            };
            assert!((got.eval(&pt).data[0] - acc).abs() < 1e-6);
        }
    }

    #[test]
    fn diff_rules() {
        // d/dx (x^2 y) = 2xy
        let p = PolyKernel::monomial(Exponents::of(&[(Var::X, 2), (Var::Y, 1)]));
        let want = PolyKernel::monomial(Exponents::of(&[(Var::X, 1), (Var::Y, 1)])).scale(2.0);
        assert_eq!(p.diff(Var::X), want);
        // d/dtheta (xy) = 0
        let q = PolyKernel::monomial(Exponents::of(&[(Var::X, 1), (Var::Y, 1)]))
            .with_vars(VarSet::of(&[Var::X, Var::Y, Var::Theta]))
            .unwrap();
        assert!(q.diff(Var::Theta).is_zero());
    }

    #[test]
    fn diff_matches_finite_differences() {
        // d/dy (x^2/2 - x y^2) = -2xy
        let p = PolyKernel::monomial(Exponents::of(&[(Var::X, 2)]))
            .scale(0.5)
            .add(&PolyKernel::monomial(Exponents::of(&[(Var::X, 1), (Var::Y, 2)])).neg())
            .unwrap();
        let d = p.diff(Var::Y);
        let want = PolyKernel::monomial(Exponents::of(&[(Var::X, 1), (Var::Y, 1)])).scale(-2.0);
        assert_eq!(d, want);
        let mut rng = StdRng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..10 {
            let mut pt = random_point(&mut rng);
            let f0 = {
                pt[1] -= h;
                p.eval(&pt).data[0]
            };
            let f1 = {
                pt[1] += 2.0 * h;
                p.eval(&pt).data[0]
            };
            pt[1] -= h;
            let fd = (f1 - f0) / (2.0 * h);
            assert!((d.eval(&pt).data[0] - fd).abs() < 1e-8 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn subs_rules() {
        // (x - theta) with x := 1 -> 1 - theta
        let p = xk().add(&PolyKernel::var(Var::Theta).neg()).unwrap();
        let got = p.subs(Var::X, Bound::One).unwrap();
        let want = PolyKernel::scalar_const(1.0)
            .with_vars(VarSet::of(&[Var::Theta]))
            .unwrap()
            .add(&PolyKernel::var(Var::Theta).neg())
            .unwrap();
        assert_eq!(got, want);

        // xy with y := 0 -> 0
        let q = PolyKernel::monomial(Exponents::of(&[(Var::X, 1), (Var::Y, 1)]));
        assert!(q.subs(Var::Y, Bound::Zero).unwrap().is_zero());

        // (x^2 + theta*eta) with theta := x -> x^2 + x*eta, by evaluation
        let r = PolyKernel::monomial(Exponents::of(&[(Var::X, 2)]))
            .add(&PolyKernel::monomial(Exponents::of(&[(Var::Theta, 1), (Var::Eta, 1)])))
            .unwrap();
        let s = r.subs(Var::Theta, Bound::Var(Var::X)).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..10 {
            let pt = random_point(&mut rng);
            let want = pt[0] * pt[0] + pt[0] * pt[3];
            assert!((s.eval(&pt).data[0] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn leibniz_derivative_of_integral() {
        // d/dx int_0^x p(theta) dtheta = p(x)
        let mut rng = StdRng::seed_from_u64(13);
        let p = random_poly(&mut rng, &[Var::Theta], 4, 1, 1);
        let ip = p.integrate(Var::Theta, Bound::Zero, Bound::Var(Var::X)).unwrap();
        let d = ip.diff(Var::X);
        let px = p.subs(Var::Theta, Bound::Var(Var::X)).unwrap();
        for _ in 0..10 {
            let pt = random_point(&mut rng);
            assert!((d.eval(&pt).data[0] - px.eval(&pt).data[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_orthonormal_up_to_degree_5() {
        let basis = legendre_basis(5, Var::X);
        assert_eq!(basis.len(), 6);
        // degree 1 is sqrt(3) (2x - 1)
        let want = xk().scale(2.0 * 3.0f64.sqrt()).add(&PolyKernel::scalar_const(-(3.0f64.sqrt()))).unwrap();
        let diff = basis[1].add(&want.neg()).unwrap();
        assert!(diff.max_abs_coeff() < 1e-12);
        for (i, pi) in basis.iter().enumerate() {
            for (j, pj) in basis.iter().enumerate() {
                let val = ip_1var_compensated(pi, pj, Var::X);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((val - want).abs() < 1e-12, "gram({i},{j}) = {val}");
                // the plain polynomial route agrees at its own accuracy
                let prod = pi.mul(pj).unwrap();
                let ip = prod.integrate(Var::X, Bound::Zero, Bound::One).unwrap();
                let naive = if ip.is_zero() { 0.0 } else { ip.eval(&[0.0; NVARS]).data[0] };
                assert!((naive - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn monomial_basis_sizes_and_order() {
        let b = MonomialBasis::new(&[Var::X, Var::Y], DegreeSpec::Total(2));
        assert_eq!(b.size(), 6);
        // graded lex: 1, x, y, x^2, xy, y^2
        assert_eq!(b.monomials[0], Exponents::ZERO);
        assert_eq!(b.monomials[1], Exponents::of(&[(Var::X, 1)]));
        assert_eq!(b.monomials[2], Exponents::of(&[(Var::Y, 1)]));
        assert_eq!(b.monomials[3], Exponents::of(&[(Var::X, 2)]));
        let b2 = MonomialBasis::new(&[Var::X, Var::Y], DegreeSpec::PerVar(2));
        assert_eq!(b2.size(), 9);
    }

    #[test]
    fn record_round_trip() {
        let mut rng = StdRng::seed_from_u64(21);
        let p = random_poly(&mut rng, &[Var::X, Var::Eta], 3, 2, 2);
        let rec = PolyKernelRecord::from_kernel(&p).unwrap();
        let q = rec.to_kernel().unwrap();
        assert_eq!(p, q);
        let json = serde_json::to_string(&rec).unwrap();
        let rec2: PolyKernelRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(rec2.to_kernel().unwrap(), p);
    }
}
