//! Block PI operators between direct sums of R^n, L2[x], L2[y], L2[x,y].
//!
//! An operator is a 4x4 grid of blocks indexed by (output space, input
//! space). Each block decomposes per spatial direction: the input may be
//! multiplied pointwise (`Mult`), integrated over `[0,x]` (`Low`), `[x,1]`
//! (`Up`), or `[0,1]` (`Full`), or the direction may be absent on one side
//! (`Carry` creates dependence, `None` ignores it). A full 2D-to-2D block is
//! the familiar nine-kernel family; one kernel per (x-slot, y-slot) pair.
//!
//! Full integrals are stored as equal `Low` and `Up` kernels, matching the
//! convention that writes an integral operator over the whole square with
//! repeated parameters.
//!
//! Composition, adjoint, symbolic application, derivative composition and
//! Dirac-trace composition are all driven by small per-direction tables; the
//! symbolic apply path acts as the independent oracle for composition in the
//! test suites.

use crate::poly::{Bound, Coeff, Mat, PolyKernel, PolyKernelRecord, Var, VarSet, NVARS};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The four component spaces of a signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Space {
    R0,
    Lx,
    Ly,
    Lxy,
}

pub const ALL_SPACES: [Space; 4] = [Space::R0, Space::Lx, Space::Ly, Space::Lxy];

impl Space {
    pub fn has_x(self) -> bool {
        matches!(self, Space::Lx | Space::Lxy)
    }

    pub fn has_y(self) -> bool {
        matches!(self, Space::Ly | Space::Lxy)
    }

    pub fn has(self, d: Dir) -> bool {
        match d {
            Dir::X => self.has_x(),
            Dir::Y => self.has_y(),
        }
    }

    /// Variables a function in this space depends on.
    pub fn vars(self) -> VarSet {
        match self {
            Space::R0 => VarSet::EMPTY,
            Space::Lx => VarSet::of(&[Var::X]),
            Space::Ly => VarSet::of(&[Var::Y]),
            Space::Lxy => VarSet::of(&[Var::X, Var::Y]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    X,
    Y,
}

impl Dir {
    pub fn out_var(self) -> Var {
        match self {
            Dir::X => Var::X,
            Dir::Y => Var::Y,
        }
    }

    pub fn in_dummy(self) -> Var {
        match self {
            Dir::X => Var::Theta,
            Dir::Y => Var::Eta,
        }
    }

    pub fn temp(self) -> Var {
        match self {
            Dir::X => Var::Nu,
            Dir::Y => Var::Mu,
        }
    }
}

/// Component dimensions of a direct sum R^{n0} + L2^{nx}[x] + L2^{ny}[y] + L2^{n2}[x,y].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpaceSignature {
    pub n0: usize,
    pub nx: usize,
    pub ny: usize,
    pub n2: usize,
}

impl SpaceSignature {
    pub fn scalar(n0: usize) -> Self {
        SpaceSignature { n0, ..Default::default() }
    }

    pub fn l2_2d(n2: usize) -> Self {
        SpaceSignature { n2, ..Default::default() }
    }

    pub fn dim(&self, s: Space) -> usize {
        match s {
            Space::R0 => self.n0,
            Space::Lx => self.nx,
            Space::Ly => self.ny,
            Space::Lxy => self.n2,
        }
    }

    pub fn set_dim(&mut self, s: Space, n: usize) {
        match s {
            Space::R0 => self.n0 = n,
            Space::Lx => self.nx = n,
            Space::Ly => self.ny = n,
            Space::Lxy => self.n2 = n,
        }
    }

    pub fn total(&self) -> usize {
        self.n0 + self.nx + self.ny + self.n2
    }
}

/// Role of a block in one spatial direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DirSlot {
    /// Direction absent on both sides.
    None,
    /// Output depends on the direction, input does not.
    Carry,
    /// Input integrated over [0,1]; output independent.
    Full,
    /// Pointwise multiplication.
    Mult,
    /// Integral over [0, x] (resp. [0, y]).
    Low,
    /// Integral over [x, 1] (resp. [y, 1]).
    Up,
}

impl DirSlot {
    pub fn valid_for(self, out_has: bool, in_has: bool) -> bool {
        match self {
            DirSlot::None => !out_has && !in_has,
            DirSlot::Carry => out_has && !in_has,
            DirSlot::Full => !out_has && in_has,
            DirSlot::Mult | DirSlot::Low | DirSlot::Up => out_has && in_has,
        }
    }

    /// Variables the kernel carries in this direction.
    fn vars(self, d: Dir) -> VarSet {
        match self {
            DirSlot::None => VarSet::EMPTY,
            DirSlot::Carry | DirSlot::Mult => VarSet::of(&[d.out_var()]),
            DirSlot::Full => VarSet::of(&[d.in_dummy()]),
            DirSlot::Low | DirSlot::Up => VarSet::of(&[d.out_var(), d.in_dummy()]),
        }
    }
}

/// Variables prescribed for the kernel at a given block position.
pub fn slot_vars(sx: DirSlot, sy: DirSlot) -> VarSet {
    sx.vars(Dir::X).union(sy.vars(Dir::Y))
}

type BlockMap<S> = BTreeMap<(DirSlot, DirSlot), PolyKernel<S>>;

/// A block PI operator between two space signatures.
#[derive(Clone, PartialEq)]
pub struct BlockPiOp<S = f64> {
    pub in_sig: SpaceSignature,
    pub out_sig: SpaceSignature,
    blocks: BTreeMap<(Space, Space), BlockMap<S>>,
}

impl<S: Coeff> BlockPiOp<S> {
    pub fn zero(in_sig: SpaceSignature, out_sig: SpaceSignature) -> Self {
        BlockPiOp { in_sig, out_sig, blocks: BTreeMap::new() }
    }

    /// Accumulate a kernel into the given block and slot.
    pub fn add_to_kernel(
        &mut self,
        out_sp: Space,
        in_sp: Space,
        sx: DirSlot,
        sy: DirSlot,
        kernel: PolyKernel<S>,
    ) -> Result<()> {
        let (ro, ci) = (self.out_sig.dim(out_sp), self.in_sig.dim(in_sp));
        if ro == 0 || ci == 0 {
            return Err(Error::SignatureMismatch(format!(
                "block ({out_sp:?},{in_sp:?}) has zero dimension"
            )));
        }
        if kernel.rows() != ro || kernel.cols() != ci {
            return Err(Error::DimensionMismatch(format!(
                "kernel {}x{} does not fit block ({out_sp:?},{in_sp:?}) of size {ro}x{ci}",
                kernel.rows(),
                kernel.cols()
            )));
        }
        if !sx.valid_for(out_sp.has_x(), in_sp.has_x()) || !sy.valid_for(out_sp.has_y(), in_sp.has_y()) {
            return Err(Error::StructureViolation(format!(
                "slot ({sx:?},{sy:?}) invalid for block ({out_sp:?},{in_sp:?})"
            )));
        }
        let prescribed = slot_vars(sx, sy);
        if !kernel.vars().is_subset_of(prescribed) && !kernel.max_degree().vars().is_subset_of(prescribed) {
            return Err(Error::StructureViolation(format!(
                "kernel variables {:?} exceed prescribed {prescribed:?} for slot ({sx:?},{sy:?})",
                kernel.vars()
            )));
        }
        if kernel.is_zero() {
            return Ok(());
        }
        let normalized = kernel.with_vars(prescribed)?;
        let slot_map = self.blocks.entry((out_sp, in_sp)).or_default();
        match slot_map.entry((sx, sy)) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(normalized);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let merged = o.get().add(&normalized)?;
                if merged.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = merged;
                }
            }
        }
        if self.blocks.get(&(out_sp, in_sp)).is_some_and(BlockMap::is_empty) {
            self.blocks.remove(&(out_sp, in_sp));
        }
        Ok(())
    }

    pub fn kernel(&self, o: Space, i: Space, sx: DirSlot, sy: DirSlot) -> Option<&PolyKernel<S>> {
        self.blocks.get(&(o, i)).and_then(|m| m.get(&(sx, sy)))
    }

    pub fn kernels(&self) -> impl Iterator<Item = (Space, Space, DirSlot, DirSlot, &PolyKernel<S>)> {
        self.blocks
            .iter()
            .flat_map(|(&(o, i), m)| m.iter().map(move |(&(sx, sy), k)| (o, i, sx, sy, k)))
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.in_sig != other.in_sig || self.out_sig != other.out_sig {
            return Err(Error::SignatureMismatch("add: signatures differ".into()));
        }
        let mut out = self.clone();
        for (o, i, sx, sy, k) in other.kernels() {
            out.add_to_kernel(o, i, sx, sy, k.clone())?;
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return BlockPiOp::zero(self.in_sig, self.out_sig);
        }
        let mut out = BlockPiOp::zero(self.in_sig, self.out_sig);
        for (o, i, sx, sy, k) in self.kernels() {
            out.add_to_kernel(o, i, sx, sy, k.scale(s)).expect("scale keeps structure");
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    /// Adjoint with respect to the direct-sum L2/Euclidean inner product.
    pub fn adjoint(&self) -> Self {
        let mut out = BlockPiOp::zero(self.out_sig, self.in_sig);
        for (o, i, sx, sy, k) in self.kernels() {
            let (sx2, kx) = adjoint_dir(sx, Dir::X);
            let (sy2, perm_y) = adjoint_dir(sy, Dir::Y);
            let mut perm = kx;
            for v in 0..NVARS {
                if perm_y[v] != ident_perm()[v] {
                    perm[v] = perm_y[v];
                }
            }
            let kernel = k.permute_vars(&perm).transpose();
            out.add_to_kernel(i, o, sx2, sy2, kernel).expect("adjoint keeps structure");
        }
        out
    }

    /// Map coefficients into another scalar type (e.g. instantiate affine
    /// kernels at concrete decision values).
    pub fn map_coeffs<SO: Coeff>(&self, f: &impl Fn(&S) -> SO) -> BlockPiOp<SO> {
        let mut out = BlockPiOp::zero(self.in_sig, self.out_sig);
        for (o, i, sx, sy, k) in self.kernels() {
            let mapped = k.map_coeffs(f);
            if !mapped.is_zero() {
                out.add_to_kernel(o, i, sx, sy, mapped).expect("map keeps structure");
            }
        }
        out
    }

    /// Add `small`'s kernels into `self`, offsetting rows/cols per space.
    /// Used to stack operators into larger signatures.
    pub fn place(
        &mut self,
        small: &BlockPiOp<S>,
        out_offsets: &dyn Fn(Space) -> usize,
        in_offsets: &dyn Fn(Space) -> usize,
    ) -> Result<()> {
        for (o, i, sx, sy, k) in small.kernels() {
            let (ro, co) = (out_offsets(o), in_offsets(i));
            let big = embed_kernel(k, self.out_sig.dim(o), self.in_sig.dim(i), ro, co)?;
            self.add_to_kernel(o, i, sx, sy, big)?;
        }
        Ok(())
    }

    /// One derivative in direction `d`. Requires every populated output space
    /// to carry the direction and the pointwise slot in `d` to be empty.
    pub fn diff(&self, d: Dir) -> Result<Self> {
        for s in ALL_SPACES {
            if !s.has(d) && self.out_sig.dim(s) > 0 && self.blocks.keys().any(|&(o, _)| o == s) {
                return Err(Error::StructureViolation(format!(
                    "cannot differentiate output component {s:?} in {d:?}"
                )));
            }
        }
        let mut out = BlockPiOp::zero(self.in_sig, self.out_sig);
        for (o, i, sx, sy, k) in self.kernels() {
            let (slot, other) = if d == Dir::X { (sx, sy) } else { (sy, sx) };
            match slot {
                DirSlot::Mult => {
                    return Err(Error::StructureViolation(format!(
                        "pointwise kernel in block ({o:?},{i:?}) blocks differentiation in {d:?}"
                    )));
                }
                DirSlot::Carry => {
                    let dk = k.diff(d.out_var());
                    let (nsx, nsy) = orient(d, DirSlot::Carry, other);
                    out.add_to_kernel(o, i, nsx, nsy, dk)?;
                }
                DirSlot::Low | DirSlot::Up => {
                    // Leibniz boundary term lands in the pointwise slot.
                    let sign = if slot == DirSlot::Low { 1.0 } else { -1.0 };
                    let boundary = k.subs(d.in_dummy(), Bound::Var(d.out_var()))?.scale(sign);
                    let (bx, by) = orient(d, DirSlot::Mult, other);
                    out.add_to_kernel(o, i, bx, by, boundary)?;
                    let (nsx, nsy) = orient(d, slot, other);
                    out.add_to_kernel(o, i, nsx, nsy, k.diff(d.out_var()))?;
                }
                DirSlot::None | DirSlot::Full => {
                    // unreachable: output space carries d by the check above
                    return Err(Error::StructureViolation(format!(
                        "slot {slot:?} cannot appear with differentiated output"
                    )));
                }
            }
        }
        Ok(out)
    }

    /// Compose with the Dirac trace at `endpoint` (0 or 1) in direction `d`:
    /// evaluate the output along that boundary. Output spaces drop the
    /// direction (L2[x,y] -> L2 of the other variable, L2[d] -> R).
    pub fn dirac(&self, d: Dir, endpoint: u8) -> Result<Self> {
        assert!(endpoint <= 1);
        for s in ALL_SPACES {
            if !s.has(d) && self.blocks.keys().any(|&(o, _)| o == s) {
                return Err(Error::StructureViolation(format!(
                    "output component {s:?} does not depend on {d:?}"
                )));
            }
        }
        let drop_dir = |s: Space| -> Space {
            match (s, d) {
                (Space::Lxy, Dir::X) => Space::Ly,
                (Space::Lxy, Dir::Y) => Space::Lx,
                (Space::Lx, Dir::X) | (Space::Ly, Dir::Y) => Space::R0,
                _ => s,
            }
        };
        let mut out_sig = SpaceSignature::default();
        for s in ALL_SPACES {
            let n = self.out_sig.dim(s);
            if n > 0 {
                let t = drop_dir(s);
                if out_sig.dim(t) > 0 {
                    return Err(Error::StructureViolation(
                        "trace would merge distinct output components".into(),
                    ));
                }
                out_sig.set_dim(t, n);
            }
        }
        let ep_bound = if endpoint == 0 { Bound::Zero } else { Bound::One };
        let mut out = BlockPiOp::zero(self.in_sig, out_sig);
        for (o, i, sx, sy, k) in self.kernels() {
            let (slot, other) = if d == Dir::X { (sx, sy) } else { (sy, sx) };
            let new_o = drop_dir(o);
            match slot {
                DirSlot::Mult => {
                    return Err(Error::StructureViolation(format!(
                        "pointwise kernel in block ({o:?},{i:?}) has no {d:?} boundary trace"
                    )));
                }
                DirSlot::Carry => {
                    let kk = k.subs(d.out_var(), ep_bound)?;
                    let (nsx, nsy) = orient(d, DirSlot::None, other);
                    out.add_to_kernel(new_o, i, nsx, nsy, kk)?;
                }
                DirSlot::Low => {
                    if endpoint == 1 {
                        let kk = k.subs(d.out_var(), Bound::One)?;
                        let (nsx, nsy) = orient(d, DirSlot::Full, other);
                        out.add_to_kernel(new_o, i, nsx, nsy, kk)?;
                    }
                    // at endpoint 0 the range [0,0] is empty
                }
                DirSlot::Up => {
                    if endpoint == 0 {
                        let kk = k.subs(d.out_var(), Bound::Zero)?;
                        let (nsx, nsy) = orient(d, DirSlot::Full, other);
                        out.add_to_kernel(new_o, i, nsx, nsy, kk)?;
                    }
                }
                DirSlot::None | DirSlot::Full => {
                    return Err(Error::StructureViolation(format!(
                        "slot {slot:?} cannot appear with traced output"
                    )));
                }
            }
        }
        Ok(out)
    }
}

fn ident_perm() -> [Var; NVARS] {
    [Var::X, Var::Y, Var::Theta, Var::Eta, Var::Nu, Var::Mu]
}

/// Adjoint slot map and variable permutation for one direction.
fn adjoint_dir(s: DirSlot, d: Dir) -> (DirSlot, [Var; NVARS]) {
    let mut perm = ident_perm();
    let swap = |perm: &mut [Var; NVARS]| {
        perm[d.out_var().index()] = d.in_dummy();
        perm[d.in_dummy().index()] = d.out_var();
    };
    let slot = match s {
        DirSlot::None => DirSlot::None,
        DirSlot::Mult => DirSlot::Mult,
        DirSlot::Carry => {
            swap(&mut perm);
            DirSlot::Full
        }
        DirSlot::Full => {
            swap(&mut perm);
            DirSlot::Carry
        }
        DirSlot::Low => {
            swap(&mut perm);
            DirSlot::Up
        }
        DirSlot::Up => {
            swap(&mut perm);
            DirSlot::Low
        }
    };
    (slot, perm)
}

/// Order a (d-slot, other-slot) pair back into (x-slot, y-slot).
fn orient(d: Dir, slot: DirSlot, other: DirSlot) -> (DirSlot, DirSlot) {
    match d {
        Dir::X => (slot, other),
        Dir::Y => (other, slot),
    }
}

fn embed_kernel<S: Coeff>(
    k: &PolyKernel<S>,
    rows: usize,
    cols: usize,
    ro: usize,
    co: usize,
) -> Result<PolyKernel<S>> {
    if ro + k.rows() > rows || co + k.cols() > cols {
        return Err(Error::DimensionMismatch("embed: offsets out of range".into()));
    }
    let mut out = PolyKernel::zero(rows, cols, k.vars());
    for (e, m) in k.terms() {
        let mut big = Mat::zeros(rows, cols);
        for i in 0..m.rows {
            for j in 0..m.cols {
                *big.get_mut(ro + i, co + j) = m.get(i, j).clone();
            }
        }
        out.add_term(*e, big)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Composition

/// What happens to the shared variable of one direction when composing.
#[derive(Clone, Copy)]
enum SharedVar {
    /// No shared variable in this direction.
    Absent,
    /// The shared variable survives as the output variable (pointwise outer).
    StaysOut,
    /// The shared variable survives as the final input dummy (pointwise inner).
    BecomesDummy,
    /// The shared variable is integrated out through the temp dummy.
    Integrated,
}

struct DirOut {
    slot: DirSlot,
    /// Integration range for the temp dummy, when `Integrated`.
    range: Option<(Bound, Bound)>,
}

struct DirRecipe {
    shared: SharedVar,
    outs: Vec<DirOut>,
}

fn compose_recipe(a: DirSlot, b: DirSlot, d: Dir) -> DirRecipe {
    use Bound::{One, Zero};
    use DirSlot::*;
    use SharedVar::*;
    let x = Bound::Var(d.out_var());
    let t = Bound::Var(d.in_dummy());
    let out = |slot, range| DirOut { slot, range };
    match (a, b) {
        (None, None) => DirRecipe { shared: Absent, outs: vec![out(None, Option::None)] },
        (None, Full) => DirRecipe { shared: Absent, outs: vec![out(Full, Option::None)] },
        (Carry, None) => DirRecipe { shared: Absent, outs: vec![out(Carry, Option::None)] },
        (Carry, Full) => DirRecipe {
            shared: Absent,
            outs: vec![out(Low, Option::None), out(Up, Option::None)],
        },
        (Full, Carry) => DirRecipe { shared: Integrated, outs: vec![out(None, Some((Zero, One)))] },
        (Full, Mult) => DirRecipe { shared: BecomesDummy, outs: vec![out(Full, Option::None)] },
        (Full, Low) => DirRecipe { shared: Integrated, outs: vec![out(Full, Some((t, One)))] },
        (Full, Up) => DirRecipe { shared: Integrated, outs: vec![out(Full, Some((Zero, t)))] },
        (Mult, Carry) => DirRecipe { shared: StaysOut, outs: vec![out(Carry, Option::None)] },
        (Mult, Mult) => DirRecipe { shared: StaysOut, outs: vec![out(Mult, Option::None)] },
        (Mult, Low) => DirRecipe { shared: StaysOut, outs: vec![out(Low, Option::None)] },
        (Mult, Up) => DirRecipe { shared: StaysOut, outs: vec![out(Up, Option::None)] },
        (Low, Carry) => DirRecipe { shared: Integrated, outs: vec![out(Carry, Some((Zero, x)))] },
        (Low, Mult) => DirRecipe { shared: BecomesDummy, outs: vec![out(Low, Option::None)] },
        (Low, Low) => DirRecipe { shared: Integrated, outs: vec![out(Low, Some((t, x)))] },
        (Low, Up) => DirRecipe {
            shared: Integrated,
            outs: vec![out(Low, Some((Zero, t))), out(Up, Some((Zero, x)))],
        },
        (Up, Carry) => DirRecipe { shared: Integrated, outs: vec![out(Carry, Some((x, One)))] },
        (Up, Mult) => DirRecipe { shared: BecomesDummy, outs: vec![out(Up, Option::None)] },
        (Up, Low) => DirRecipe {
            shared: Integrated,
            outs: vec![out(Low, Some((x, One))), out(Up, Some((t, One)))],
        },
        (Up, Up) => DirRecipe { shared: Integrated, outs: vec![out(Up, Some((x, t)))] },
        _ => unreachable!("slot pair ({a:?},{b:?}) violates signature compatibility"),
    }
}

/// Compose `a` after `b` with a mixed-scalar coefficient product.
pub fn compose_with<SA: Coeff, SB: Coeff, SO: Coeff>(
    a: &BlockPiOp<SA>,
    b: &BlockPiOp<SB>,
    mul: &impl Fn(&SA, &SB) -> SO,
) -> Result<BlockPiOp<SO>> {
    if a.in_sig != b.out_sig {
        return Err(Error::SignatureMismatch(format!(
            "compose: inner signatures differ ({:?} vs {:?})",
            a.in_sig, b.out_sig
        )));
    }
    let mut out = BlockPiOp::zero(b.in_sig, a.out_sig);
    for (&(ao, am), amap) in &a.blocks {
        for (&(bo, bi), bmap) in &b.blocks {
            if am != bo {
                continue;
            }
            for (&(ax, ay), ka) in amap {
                for (&(bx, by), kb) in bmap {
                    let rx = compose_recipe(ax, bx, Dir::X);
                    let ry = compose_recipe(ay, by, Dir::Y);
                    // rename shared variables, then multiply
                    let ka2 = rename_outer(ka, &rx, Dir::X).and_then(|k| rename_outer(&k, &ry, Dir::Y))?;
                    let kb2 = rename_inner(kb, &rx, Dir::X).and_then(|k| rename_inner(&k, &ry, Dir::Y))?;
                    let prod = ka2.mul_with(&kb2, mul)?;
                    for ox in &rx.outs {
                        let kx = match ox.range {
                            Some((lo, hi)) => prod.integrate(Dir::X.temp(), lo, hi)?,
                            Option::None => prod.clone(),
                        };
                        for oy in &ry.outs {
                            let kxy = match oy.range {
                                Some((lo, hi)) => kx.integrate(Dir::Y.temp(), lo, hi)?,
                                Option::None => kx.clone(),
                            };
                            out.add_to_kernel(ao, bi, ox.slot, oy.slot, kxy)?;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn rename_outer<S: Coeff>(k: &PolyKernel<S>, r: &DirRecipe, d: Dir) -> Result<PolyKernel<S>> {
    match r.shared {
        SharedVar::Integrated => k.subs(d.in_dummy(), Bound::Var(d.temp())),
        _ => Ok(k.clone()),
    }
}

fn rename_inner<S: Coeff>(k: &PolyKernel<S>, r: &DirRecipe, d: Dir) -> Result<PolyKernel<S>> {
    match r.shared {
        SharedVar::Integrated => k.subs(d.out_var(), Bound::Var(d.temp())),
        SharedVar::BecomesDummy => k.subs(d.out_var(), Bound::Var(d.in_dummy())),
        SharedVar::Absent | SharedVar::StaysOut => Ok(k.clone()),
    }
}

impl BlockPiOp<f64> {
    /// Plain composition `a . b`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        compose_with(self, other, &|a: &f64, b: &f64| a * b)
    }

    /// Identity on a signature.
    pub fn identity(sig: SpaceSignature) -> Self {
        let mut op = BlockPiOp::zero(sig, sig);
        for s in ALL_SPACES {
            let n = sig.dim(s);
            if n == 0 {
                continue;
            }
            let sx = if s.has_x() { DirSlot::Mult } else { DirSlot::None };
            let sy = if s.has_y() { DirSlot::Mult } else { DirSlot::None };
            let k = PolyKernel::constant(Mat::identity(n)).with_vars(slot_vars(sx, sy)).unwrap();
            op.add_to_kernel(s, s, sx, sy, k).unwrap();
        }
        op
    }

    /// Pointwise multiplier on L2[x,y]: `v(x,y) -> K(x,y) v(x,y)`.
    pub fn multiplier_2d(k: PolyKernel<f64>) -> Result<Self> {
        let (m, n) = (k.rows(), k.cols());
        let mut op = BlockPiOp::zero(SpaceSignature::l2_2d(n), SpaceSignature::l2_2d(m));
        op.add_to_kernel(Space::Lxy, Space::Lxy, DirSlot::Mult, DirSlot::Mult, k)?;
        Ok(op)
    }

    /// `R^n -> L2[x,y]`: constants mapped to `K(x,y) c`.
    pub fn const_to_2d(k: PolyKernel<f64>) -> Result<Self> {
        let (m, n) = (k.rows(), k.cols());
        let mut op = BlockPiOp::zero(SpaceSignature::scalar(n), SpaceSignature::l2_2d(m));
        op.add_to_kernel(Space::Lxy, Space::R0, DirSlot::Carry, DirSlot::Carry, k)?;
        Ok(op)
    }

    /// `L2[x,y] -> R^m`: full double integral against `K(theta,eta)`.
    pub fn int_2d(k: PolyKernel<f64>) -> Result<Self> {
        let (m, n) = (k.rows(), k.cols());
        let mut op = BlockPiOp::zero(SpaceSignature::l2_2d(n), SpaceSignature::scalar(m));
        op.add_to_kernel(Space::R0, Space::Lxy, DirSlot::Full, DirSlot::Full, k)?;
        Ok(op)
    }

    /// Constant matrix as an `R^n -> R^m` operator.
    pub fn const_matrix(m: Mat<f64>) -> Self {
        let sig_in = SpaceSignature::scalar(m.cols);
        let sig_out = SpaceSignature::scalar(m.rows);
        let mut op = BlockPiOp::zero(sig_in, sig_out);
        op.add_to_kernel(Space::R0, Space::R0, DirSlot::None, DirSlot::None, PolyKernel::constant(m))
            .unwrap();
        op
    }

    /// Apply symbolically to a polynomial function vector.
    pub fn apply(&self, f: &FunctionVector) -> Result<FunctionVector> {
        if f.sig != self.in_sig {
            return Err(Error::SignatureMismatch("apply: input signature differs".into()));
        }
        let mut out = FunctionVector::zero(self.out_sig);
        for (o, i, sx, sy, k) in self.kernels() {
            let Some(g) = &f.comps[i as usize] else { continue };
            let mut gg = g.clone();
            if matches!(sx, DirSlot::Low | DirSlot::Up | DirSlot::Full) {
                gg = gg.subs(Var::X, Bound::Var(Var::Theta))?;
            }
            if matches!(sy, DirSlot::Low | DirSlot::Up | DirSlot::Full) {
                gg = gg.subs(Var::Y, Bound::Var(Var::Eta))?;
            }
            let mut prod = k.mul(&gg)?;
            prod = match sx {
                DirSlot::Low => prod.integrate(Var::Theta, Bound::Zero, Bound::Var(Var::X))?,
                DirSlot::Up => prod.integrate(Var::Theta, Bound::Var(Var::X), Bound::One)?,
                DirSlot::Full => prod.integrate(Var::Theta, Bound::Zero, Bound::One)?,
                _ => prod,
            };
            prod = match sy {
                DirSlot::Low => prod.integrate(Var::Eta, Bound::Zero, Bound::Var(Var::Y))?,
                DirSlot::Up => prod.integrate(Var::Eta, Bound::Var(Var::Y), Bound::One)?,
                DirSlot::Full => prod.integrate(Var::Eta, Bound::Zero, Bound::One)?,
                _ => prod,
            };
            out.add_comp(o, prod)?;
        }
        Ok(out)
    }

    /// Largest absolute kernel coefficient; a cheap operator magnitude proxy.
    pub fn max_abs_coeff(&self) -> f64 {
        self.kernels().fold(0.0, |acc, (_, _, _, _, k)| acc.max(k.max_abs_coeff()))
    }

    /// Kernel-level distance between operators with equal signatures.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        match self.sub(other) {
            Ok(d) => d.max_abs_coeff(),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn to_record(&self) -> Result<PiOpRecord> {
        let mut blocks = Vec::new();
        for (o, i, sx, sy, k) in self.kernels() {
            blocks.push(PiOpBlockRecord {
                out_space: o,
                in_space: i,
                x_slot: sx,
                y_slot: sy,
                kernel: PolyKernelRecord::from_kernel(k)?,
            });
        }
        Ok(PiOpRecord { in_sig: self.in_sig, out_sig: self.out_sig, blocks })
    }
}

impl<S: Coeff> std::fmt::Debug for BlockPiOp<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BlockPiOp {:?} <- {:?}", self.out_sig, self.in_sig)?;
        for (o, i, sx, sy, k) in self.kernels() {
            writeln!(f, "  ({o:?},{i:?})[{sx:?},{sy:?}]: {k:?}")?;
        }
        Ok(())
    }
}

/// Serialized operator: signatures plus one record per kernel slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiOpRecord {
    pub in_sig: SpaceSignature,
    pub out_sig: SpaceSignature,
    pub blocks: Vec<PiOpBlockRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiOpBlockRecord {
    pub out_space: Space,
    pub in_space: Space,
    pub x_slot: DirSlot,
    pub y_slot: DirSlot,
    pub kernel: PolyKernelRecord,
}

impl PiOpRecord {
    pub fn to_op(&self) -> Result<BlockPiOp<f64>> {
        let mut op = BlockPiOp::zero(self.in_sig, self.out_sig);
        for b in &self.blocks {
            op.add_to_kernel(b.out_space, b.in_space, b.x_slot, b.y_slot, b.kernel.to_kernel()?)?;
        }
        Ok(op)
    }
}

/// A polynomial element of a direct-sum space.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionVector {
    pub sig: SpaceSignature,
    /// Components indexed by `Space as usize`; shapes `(dim, 1)`.
    pub comps: [Option<PolyKernel<f64>>; 4],
}

impl FunctionVector {
    pub fn zero(sig: SpaceSignature) -> Self {
        FunctionVector { sig, comps: [None, None, None, None] }
    }

    pub fn from_2d(p: PolyKernel<f64>) -> Result<Self> {
        if p.cols() != 1 {
            return Err(Error::DimensionMismatch("function must be a column".into()));
        }
        let mut f = FunctionVector::zero(SpaceSignature::l2_2d(p.rows()));
        f.add_comp(Space::Lxy, p)?;
        Ok(f)
    }

    pub fn add_comp(&mut self, s: Space, p: PolyKernel<f64>) -> Result<()> {
        if p.cols() != 1 || p.rows() != self.sig.dim(s) {
            return Err(Error::DimensionMismatch(format!(
                "component {s:?}: {}x{} vs dim {}",
                p.rows(),
                p.cols(),
                self.sig.dim(s)
            )));
        }
        if !p.vars().is_subset_of(s.vars()) && !p.max_degree().vars().is_subset_of(s.vars()) {
            return Err(Error::DimensionMismatch(format!(
                "component {s:?} depends on {:?}",
                p.vars()
            )));
        }
        let p = p.with_vars(s.vars())?;
        if p.is_zero() {
            return Ok(());
        }
        match &mut self.comps[s as usize] {
            Some(q) => {
                let sum = q.add(&p)?;
                if sum.is_zero() {
                    self.comps[s as usize] = None;
                } else {
                    *q = sum;
                }
            }
            slot => *slot = Some(p),
        }
        Ok(())
    }

    pub fn comp(&self, s: Space) -> Option<&PolyKernel<f64>> {
        self.comps[s as usize].as_ref()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = FunctionVector::zero(self.sig);
        for s in ALL_SPACES {
            if let Some(p) = &self.comps[s as usize] {
                let sp = p.scale(c);
                if !sp.is_zero() {
                    out.comps[s as usize] = Some(sp);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.sig != other.sig {
            return Err(Error::SignatureMismatch("function add".into()));
        }
        let mut out = self.clone();
        for s in ALL_SPACES {
            if let Some(p) = &other.comps[s as usize] {
                out.add_comp(s, p.clone())?;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Exact direct-sum inner product `<self, other>`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.sig != other.sig {
            return Err(Error::SignatureMismatch("inner product".into()));
        }
        let mut acc = 0.0;
        for s in ALL_SPACES {
            let (Some(p), Some(q)) = (&self.comps[s as usize], &other.comps[s as usize]) else {
                continue;
            };
            let mut prod = p.transpose().mul(q)?;
            if s.has_x() {
                prod = prod.integrate(Var::X, Bound::Zero, Bound::One)?;
            }
            if s.has_y() {
                prod = prod.integrate(Var::Y, Bound::Zero, Bound::One)?;
            }
            if !prod.is_zero() {
                acc += prod.eval(&[0.0; NVARS]).data[0];
            }
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|v| v.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    /// Largest absolute coefficient across components.
    pub fn max_abs_coeff(&self) -> f64 {
        ALL_SPACES
            .iter()
            .filter_map(|&s| self.comps[s as usize].as_ref())
            .fold(0.0, |acc, p| acc.max(p.max_abs_coeff()))
    }

    /// Evaluate the 2D component on a grid of points (other components ignored).
    pub fn eval_2d(&self, x: f64, y: f64) -> Vec<f64> {
        match self.comp(Space::Lxy) {
            Some(p) => {
                let mut pt = [0.0; NVARS];
                pt[Var::X.index()] = x;
                pt[Var::Y.index()] = y;
                p.eval(&pt).data
            }
            None => vec![0.0; self.sig.n2],
        }
    }
}
