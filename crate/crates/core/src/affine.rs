//! Affine expressions in scalar decision variables.
//!
//! Kernel coefficients of decision operators (the Gram matrices P and Q, the
//! gain parameterization W, and the bound gamma) are affine in a flat
//! registry of scalar variables. Products in operator assembly always pair an
//! affine side with a constant side, so no higher-degree terms arise.

use crate::poly::Coeff;
use std::fmt;

/// Index into a [`VarReg`].
pub type VarId = u32;

/// What a decision variable parameterizes; used for extraction and reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarKind {
    Gamma,
    /// Entry (i, j), i <= j, of the positivity Gram matrix.
    GramP { i: usize, j: usize },
    /// Entry (i, j), i <= j, of the negativity Gram matrix (as -Q).
    GramQ { i: usize, j: usize },
    /// A coefficient of the gain parameterization W.
    GainW { index: usize },
}

/// Registry of scalar decision variables.
#[derive(Debug, Clone, Default)]
pub struct VarReg {
    pub kinds: Vec<VarKind>,
}

impl VarReg {
    pub fn new() -> Self {
        VarReg { kinds: Vec::new() }
    }

    pub fn fresh(&mut self, kind: VarKind) -> VarId {
        self.kinds.push(kind);
        (self.kinds.len() - 1) as VarId
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

/// `c0 + sum_k c_k * var_k`, terms sorted by variable id, zeros dropped.
#[derive(Clone, PartialEq)]
pub struct Affine {
    pub c0: f64,
    pub terms: Vec<(VarId, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { c0: c, terms: Vec::new() }
    }

    pub fn var(id: VarId) -> Self {
        Affine { c0: 0.0, terms: vec![(id, 1.0)] }
    }

    pub fn var_scaled(id: VarId, c: f64) -> Self {
        if c == 0.0 {
            Affine::constant(0.0)
        } else {
            Affine { c0: 0.0, terms: vec![(id, c)] }
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.c0 + self.terms.iter().map(|&(id, c)| c * values[id as usize]).sum::<f64>()
    }
}

impl Coeff for Affine {
    fn zero() -> Self {
        Affine::constant(0.0)
    }

    fn is_zero(&self) -> bool {
        self.c0 == 0.0 && self.terms.is_empty()
    }

    fn add(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let take_left = match (self.terms.get(i), other.terms.get(j)) {
                (Some(a), Some(b)) => {
                    if a.0 == b.0 {
                        let c = a.1 + b.1;
                        if c != 0.0 {
                            terms.push((a.0, c));
                        }
                        i += 1;
                        j += 1;
                        continue;
                    }
                    a.0 < b.0
                }
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if take_left {
                terms.push(self.terms[i]);
                i += 1;
            } else {
                terms.push(other.terms[j]);
                j += 1;
            }
        }
        Affine { c0: self.c0 + other.c0, terms }
    }

    fn neg(&self) -> Self {
        Affine { c0: -self.c0, terms: self.terms.iter().map(|&(id, c)| (id, -c)).collect() }
    }

    fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Affine::constant(0.0);
        }
        Affine {
            c0: self.c0 * s,
            terms: self.terms.iter().map(|&(id, c)| (id, c * s)).collect(),
        }
    }
}

impl fmt::Debug for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.c0)?;
        for (id, c) in &self.terms {
            write!(f, "{}{}*v{}", if *c >= 0.0 { "+" } else { "-" }, c.abs(), id)?;
        }
        Ok(())
    }
}
