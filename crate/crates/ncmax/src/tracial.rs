//! Finite-dimensional model of a semifinite von Neumann algebra: weighted
//! direct sums of complex matrix blocks with the trace
//! `tau(x) = sum_i w_i Tr(x_i)`.
//!
//! Block weights make projection traces non-integer, which exercises the
//! Calderon machinery at arbitrary scales. Everything here is immutable and
//! pure; the eigendecomposition is nalgebra's Hermitian solver, which is
//! deterministic for a fixed input.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Tolerance};
use crate::stepfn::{OrliczFunction, StepFunction};

/// Default tolerance for clustering nearly-equal eigenvalues before any
/// interval assignment.
pub const CLUSTER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub dim: usize,
    pub weight: f64,
}

/// Weighted direct sum of full matrix blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Algebra {
    pub blocks: Vec<Block>,
}

impl Algebra {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::domain("algebra needs at least one block"));
        }
        for b in &blocks {
            if b.dim == 0 {
                return Err(Error::domain("block dimensions must be positive"));
            }
            if !(b.weight > 0.0) || !b.weight.is_finite() {
                return Err(Error::domain(format!(
                    "block weights must be finite and positive, got {}",
                    b.weight
                )));
            }
        }
        Ok(Algebra { blocks })
    }

    /// Single unweighted matrix block.
    pub fn simple(dim: usize) -> Result<Self> {
        Algebra::new(vec![Block { dim, weight: 1.0 }])
    }

    /// Fully commutative algebra: `n` one-dimensional blocks with the given
    /// weights (atoms of a measure space).
    pub fn commutative(weights: &[f64]) -> Result<Self> {
        Algebra::new(weights.iter().map(|&w| Block { dim: 1, weight: w }).collect())
    }

    /// `tau(1)`.
    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.weight * b.dim as f64).sum()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.blocks.iter().map(|b| b.weight).fold(f64::INFINITY, f64::min)
    }

    pub fn is_commutative(&self) -> bool {
        self.blocks.iter().all(|b| b.dim == 1)
    }
}

/// Element of the algebra: one complex matrix per block.
#[derive(Clone, Debug)]
pub struct TracialOperator {
    algebra: Algebra,
    blocks: Vec<DMatrix<Complex64>>,
    hermitian: bool,
}

const HERMITIAN_TOL: f64 = 1e-12;

impl TracialOperator {
    pub fn from_blocks(algebra: Algebra, blocks: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if blocks.len() != algebra.blocks.len() {
            return Err(Error::AlgebraMismatch(format!(
                "expected {} blocks, got {}",
                algebra.blocks.len(),
                blocks.len()
            )));
        }
        for (b, m) in algebra.blocks.iter().zip(&blocks) {
            if m.nrows() != b.dim || m.ncols() != b.dim {
                return Err(Error::AlgebraMismatch(format!(
                    "block shape {}x{} does not match dimension {}",
                    m.nrows(),
                    m.ncols(),
                    b.dim
                )));
            }
        }
        let mut op = TracialOperator {
            algebra,
            blocks,
            hermitian: false,
        };
        op.hermitian = op.hermitian_defect() <= HERMITIAN_TOL * op.frobenius_norm().max(1.0);
        Ok(op)
    }

    pub fn zero(algebra: &Algebra) -> Self {
        let blocks = algebra
            .blocks
            .iter()
            .map(|b| DMatrix::zeros(b.dim, b.dim))
            .collect();
        TracialOperator {
            algebra: algebra.clone(),
            blocks,
            hermitian: true,
        }
    }

    pub fn identity(algebra: &Algebra) -> Self {
        let blocks = algebra
            .blocks
            .iter()
            .map(|b| DMatrix::identity(b.dim, b.dim))
            .collect();
        TracialOperator {
            algebra: algebra.clone(),
            blocks,
            hermitian: true,
        }
    }

    /// Diagonal operator from real entries listed block by block.
    pub fn diagonal(algebra: &Algebra, entries: &[f64]) -> Result<Self> {
        if entries.len() != algebra.total_dim() {
            return Err(Error::AlgebraMismatch(format!(
                "diagonal needs {} entries, got {}",
                algebra.total_dim(),
                entries.len()
            )));
        }
        let mut blocks = Vec::new();
        let mut off = 0;
        for b in &algebra.blocks {
            let mut m = DMatrix::zeros(b.dim, b.dim);
            for i in 0..b.dim {
                m[(i, i)] = Complex64::new(entries[off + i], 0.0);
            }
            off += b.dim;
            blocks.push(m);
        }
        TracialOperator::from_blocks(algebra.clone(), blocks)
    }

    pub fn algebra(&self) -> &Algebra {
        &self.algebra
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    fn hermitian_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|m| (m - m.adjoint()).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|m| m.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_algebra(&self, other: &TracialOperator) -> bool {
        self.algebra == other.algebra
    }

    fn check_same_algebra(&self, other: &TracialOperator) -> Result<()> {
        if !self.same_algebra(other) {
            return Err(Error::AlgebraMismatch(
                "operators live in different algebras".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &TracialOperator) -> Result<TracialOperator> {
        self.check_same_algebra(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b)
            .collect();
        TracialOperator::from_blocks(self.algebra.clone(), blocks)
    }

    pub fn sub(&self, other: &TracialOperator) -> Result<TracialOperator> {
        self.check_same_algebra(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a - b)
            .collect();
        TracialOperator::from_blocks(self.algebra.clone(), blocks)
    }

    pub fn scale(&self, c: f64) -> TracialOperator {
        let blocks = self
            .blocks
            .iter()
            .map(|m| m.map(|z| z * c))
            .collect();
        TracialOperator {
            algebra: self.algebra.clone(),
            blocks,
            hermitian: self.hermitian,
        }
    }

    pub fn mul(&self, other: &TracialOperator) -> Result<TracialOperator> {
        self.check_same_algebra(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a * b)
            .collect();
        TracialOperator::from_blocks(self.algebra.clone(), blocks)
    }

    pub fn adjoint(&self) -> TracialOperator {
        let blocks = self.blocks.iter().map(|m| m.adjoint()).collect();
        TracialOperator {
            algebra: self.algebra.clone(),
            blocks,
            hermitian: self.hermitian,
        }
    }

    /// `(x + x*) / 2`: removes rounding-level Hermitian defects.
    pub fn symmetrize(&self) -> TracialOperator {
        let blocks = self
            .blocks
            .iter()
            .map(|m| (m + m.adjoint()).map(|z| z * 0.5))
            .collect();
        TracialOperator {
            algebra: self.algebra.clone(),
            blocks,
            hermitian: true,
        }
    }

    /// Weighted trace `tau(x)`.
    pub fn trace(&self) -> Complex64 {
        self.algebra
            .blocks
            .iter()
            .zip(&self.blocks)
            .map(|(b, m)| m.trace() * b.weight)
            .sum()
    }

    /// Real part of the trace; the imaginary part of a Hermitian trace is
    /// rounding noise.
    pub fn trace_real(&self) -> f64 {
        self.trace().re
    }

    /// Operator norm: largest singular value across blocks.
    pub fn operator_norm(&self) -> f64 {
        if self.hermitian {
            self.eigenvalues_weighted()
                .iter()
                .map(|(v, _)| v.abs())
                .fold(0.0, f64::max)
        } else {
            let sq = self.adjoint().mul(self).expect("same algebra");
            sq.eigenvalues_weighted()
                .iter()
                .map(|(v, _)| v.max(0.0).sqrt())
                .fold(0.0, f64::max)
        }
    }

    /// Eigenvalues of a Hermitian operator with their block weights, sorted
    /// descending. Falls back to `x* x` for non-Hermitian input only through
    /// [`mu`].
    fn eigenvalues_weighted(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.algebra.total_dim());
        for (b, m) in self.algebra.blocks.iter().zip(&self.blocks) {
            let se = m.clone().symmetric_eigen();
            for &v in se.eigenvalues.iter() {
                out.push((v, b.weight));
            }
        }
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }

    /// Entry-wise maximum modulus; used for bitwise memo keys and cheap
    /// residue checks.
    pub fn max_abs_entry(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|m| m.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Canonical byte image of the operator (row-major per block), used as a
    /// memoization key.
    pub fn bit_key(&self) -> Vec<u64> {
        let mut key = Vec::new();
        for (b, m) in self.algebra.blocks.iter().zip(&self.blocks) {
            key.push(b.dim as u64);
            key.push(b.weight.to_bits());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    key.push(m[(i, j)].re.to_bits());
                    key.push(m[(i, j)].im.to_bits());
                }
            }
        }
        key
    }
}

/// Serde representation per the interchange format: row-major complex
/// entries as `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct OperatorRepr {
    blocks: Vec<Block>,
    matrices: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<OperatorRepr> for TracialOperator {
    type Error = Error;
    fn try_from(r: OperatorRepr) -> Result<Self> {
        let algebra = Algebra::new(r.blocks)?;
        if r.matrices.len() != algebra.blocks.len() {
            return Err(Error::AlgebraMismatch("matrix count does not match block count".into()));
        }
        let mut blocks = Vec::new();
        for (b, entries) in algebra.blocks.iter().zip(&r.matrices) {
            if entries.len() != b.dim * b.dim {
                return Err(Error::AlgebraMismatch(format!(
                    "block of dimension {} needs {} entries, got {}",
                    b.dim,
                    b.dim * b.dim,
                    entries.len()
                )));
            }
            let m = DMatrix::from_fn(b.dim, b.dim, |i, j| {
                let [re, im] = entries[i * b.dim + j];
                Complex64::new(re, im)
            });
            blocks.push(m);
        }
        TracialOperator::from_blocks(algebra, blocks)
    }
}

impl From<TracialOperator> for OperatorRepr {
    fn from(x: TracialOperator) -> Self {
        let matrices = x
            .blocks
            .iter()
            .map(|m| {
                let n = m.nrows();
                let mut v = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        v.push([m[(i, j)].re, m[(i, j)].im]);
                    }
                }
                v
            })
            .collect();
        OperatorRepr {
            blocks: x.algebra.blocks,
            matrices,
        }
    }
}

impl Serialize for TracialOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorRepr::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TracialOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = OperatorRepr::deserialize(d)?;
        TracialOperator::try_from(repr).map_err(serde::de::Error::custom)
    }
}

/// Blockwise Hermitian eigendecomposition, eigenvalues sorted descending
/// within each block.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub blocks: Vec<BlockSpectrum>,
}

#[derive(Clone, Debug)]
pub struct BlockSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `eigenvalues`.
    pub vectors: DMatrix<Complex64>,
}

pub fn spectral_decompose(x: &TracialOperator) -> Result<Spectrum> {
    if !x.is_hermitian() {
        return Err(Error::domain(
            "spectral decomposition needs a Hermitian operator",
        ));
    }
    let mut blocks = Vec::new();
    for m in x.blocks() {
        let se = m.clone().symmetric_eigen();
        let n = se.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            vectors.set_column(col, &se.eigenvectors.column(i));
        }
        #[cfg(debug_assertions)]
        {
            let lambda =
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues.clone()))
                    .map(|v| Complex64::new(v, 0.0));
            let rebuilt = &vectors * lambda * vectors.adjoint();
            let err = (m - rebuilt).norm();
            debug_assert!(
                err <= 1e-9 * m.norm().max(1.0),
                "eigendecomposition reconstruction error {err:.3e}"
            );
        }
        blocks.push(BlockSpectrum {
            eigenvalues,
            vectors,
        });
    }
    Ok(Spectrum { blocks })
}

impl Spectrum {
    /// Rebuild `sum f(lambda) v v*` blockwise.
    pub fn functional_calculus(&self, algebra: &Algebra, f: impl Fn(f64) -> f64) -> TracialOperator {
        let mut blocks = Vec::new();
        for bs in &self.blocks {
            let n = bs.eigenvalues.len();
            let mut m = DMatrix::<Complex64>::zeros(n, n);
            for (i, &v) in bs.eigenvalues.iter().enumerate() {
                let col = bs.vectors.column(i);
                let scaled = f(v);
                if scaled != 0.0 {
                    m += (col * col.adjoint()).map(|z| z * scaled);
                }
            }
            blocks.push(m);
        }
        TracialOperator {
            algebra: algebra.clone(),
            blocks,
            hermitian: true,
        }
    }
}

/// Cluster a descending list of eigenvalues with absolute gap tolerance and
/// return the representative (cluster mean) for each entry.
pub fn cluster_representatives(sorted_desc: &[f64], tol: f64) -> Vec<f64> {
    let mut reps = vec![0.0; sorted_desc.len()];
    let mut start = 0;
    while start < sorted_desc.len() {
        let mut end = start + 1;
        while end < sorted_desc.len() && sorted_desc[end - 1] - sorted_desc[end] <= tol {
            end += 1;
        }
        let mean = sorted_desc[start..end].iter().sum::<f64>() / (end - start) as f64;
        for r in reps.iter_mut().take(end).skip(start) {
            *r = mean;
        }
        start = end;
    }
    reps
}

/// Snap a clustered eigenvalue to an interval boundary when it lies within
/// the tolerance, so that the strict/non-strict comparison is deterministic.
fn snap(v: f64, boundary: f64, tol: f64) -> f64 {
    if boundary.is_finite() && (v - boundary).abs() <= tol * boundary.abs().max(1.0) {
        boundary
    } else {
        v
    }
}

/// Spectral projection of a Hermitian operator onto the interval `(a, b]`.
///
/// Eigenvalues are clustered to representatives first; representatives within
/// `CLUSTER_TOL` of a boundary are snapped onto it before the comparison, so
/// dyadic cut points assign deterministically.
pub fn spectral_projection(x: &TracialOperator, a: f64, b: f64) -> Result<Projection> {
    spectral_projection_inner(x, a, b, true)
}

fn spectral_projection_inner(
    x: &TracialOperator,
    a: f64,
    b: f64,
    snap_boundaries: bool,
) -> Result<Projection> {
    if !(a < b) {
        return Err(Error::domain(format!("empty spectral interval ({a}, {b}]")));
    }
    let spec = spectral_decompose(x)?;
    let mut blocks = Vec::new();
    for bs in &spec.blocks {
        let reps = cluster_representatives(&bs.eigenvalues, CLUSTER_TOL);
        let n = bs.eigenvalues.len();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for (i, &rep) in reps.iter().enumerate() {
            let r = if snap_boundaries {
                snap(snap(rep, a, CLUSTER_TOL), b, CLUSTER_TOL)
            } else {
                rep
            };
            if r > a && r <= b {
                let col = bs.vectors.column(i);
                m += col * col.adjoint();
            }
        }
        blocks.push(m);
    }
    let op = TracialOperator {
        algebra: x.algebra.clone(),
        blocks,
        hermitian: true,
    }
    .symmetrize();
    Projection::try_new(op)
}

/// Hermitian idempotent in the algebra.
#[derive(Clone, Debug)]
pub struct Projection(TracialOperator);

const PROJECTION_TOL: f64 = 1e-10;

impl Projection {
    pub fn try_new(op: TracialOperator) -> Result<Self> {
        if !op.is_hermitian() {
            return Err(Error::domain("projection must be Hermitian"));
        }
        let sq = op.mul(&op)?;
        let defect = sq.sub(&op)?.frobenius_norm();
        if defect > PROJECTION_TOL {
            return Err(Error::domain(format!(
                "projection defect ||e^2 - e|| = {defect:.3e} exceeds {PROJECTION_TOL:.0e}"
            )));
        }
        Ok(Projection(op))
    }

    pub fn identity(algebra: &Algebra) -> Self {
        Projection(TracialOperator::identity(algebra))
    }

    pub fn zero(algebra: &Algebra) -> Self {
        Projection(TracialOperator::zero(algebra))
    }

    pub fn op(&self) -> &TracialOperator {
        &self.0
    }

    pub fn into_op(self) -> TracialOperator {
        self.0
    }

    pub fn algebra(&self) -> &Algebra {
        self.0.algebra()
    }

    /// `tau(e)`, real.
    pub fn trace(&self) -> f64 {
        self.0.trace_real()
    }

    pub fn complement(&self) -> Projection {
        let one = TracialOperator::identity(self.0.algebra());
        Projection(one.sub(&self.0).expect("same algebra").symmetrize())
    }

    /// `tau(e) = 0` identifies the zero projection for a faithful trace.
    pub fn is_zero(&self) -> bool {
        self.trace() < 0.5 * self.0.algebra().min_weight()
    }

    pub fn is_identity(&self) -> bool {
        self.complement().is_zero()
    }

    /// Infimum `e ^ f`: spectral projection of `e + f` at eigenvalue 2,
    /// rank-resolved with tolerance `1e-9` (no boundary snapping, so a true
    /// eigenvalue 2 is never pushed onto the selection threshold).
    pub fn meet(&self, other: &Projection) -> Result<Projection> {
        self.0.check_same_algebra(&other.0)?;
        let sum = self.0.add(&other.0)?;
        spectral_projection_inner(&sum, 2.0 - 1e-9, 3.0, false)
    }

    /// Supremum `e v f`: projection onto `range(e) + range(f) = range(e+f)`.
    pub fn join(&self, other: &Projection) -> Result<Projection> {
        self.0.check_same_algebra(&other.0)?;
        let sum = self.0.add(&other.0)?;
        spectral_projection_inner(&sum, 1e-9, 3.0, false)
    }
}

/// Decreasing rearrangement `mu(x)`: the singular values laid out on
/// `[0, tau(supp))` with weight-sized pieces. Equals
/// `inf { v > 0 : tau(lambda_(v,inf)(|x|)) <= t }` for every `t`.
///
/// Singular values within `CLUSTER_TOL` of each other are clustered to a
/// common representative, so rounding-level eigenvalue noise does not split
/// pieces.
pub fn mu(x: &TracialOperator) -> StepFunction {
    let singulars: Vec<(f64, f64)> = if x.is_hermitian() {
        x.eigenvalues_weighted()
            .into_iter()
            .map(|(v, w)| (v.abs(), w))
            .collect()
    } else {
        let sq = x.adjoint().mul(x).expect("same algebra");
        sq.eigenvalues_weighted()
            .into_iter()
            .map(|(v, w)| (v.max(0.0).sqrt(), w))
            .collect()
    };
    let mut sv = singulars;
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    let values: Vec<f64> = sv.iter().map(|(v, _)| *v).collect();
    let reps = cluster_representatives(&values, CLUSTER_TOL);
    let mut pieces = Vec::with_capacity(sv.len());
    for ((_, w), rep) in sv.iter().zip(reps) {
        if rep > 0.0 {
            pieces.push((*w, rep));
        }
    }
    StepFunction::from_pieces(&pieces).expect("weights positive, values sorted")
}

/// Operator order `x <= y` up to tolerance: the smallest eigenvalue of
/// `y - x` may be no less than `-(abs + rel * ||y||)`.
pub fn order_leq(x: &TracialOperator, y: &TracialOperator, tol: Tolerance) -> Result<bool> {
    x.check_same_algebra(y)?;
    if !x.is_hermitian() || !y.is_hermitian() {
        return Err(Error::domain("operator order is defined for Hermitian operators"));
    }
    let slack = tol.abs + tol.rel * y.operator_norm();
    Ok(min_eigenvalue(&y.sub(x)?)? >= -slack)
}

pub fn min_eigenvalue(x: &TracialOperator) -> Result<f64> {
    if !x.is_hermitian() {
        return Err(Error::domain("minimum eigenvalue needs a Hermitian operator"));
    }
    Ok(x.eigenvalues_weighted()
        .into_iter()
        .map(|(v, _)| v)
        .fold(f64::INFINITY, f64::min))
}

/// `tau(Phi(x))` for positive semidefinite `x` by spectral calculus.
pub fn phi_trace(x: &TracialOperator, phi: &OrliczFunction, tol: Tolerance) -> Result<f64> {
    if !x.is_hermitian() {
        return Err(Error::domain("phi_trace needs a Hermitian operator"));
    }
    let eigs = x.eigenvalues_weighted();
    let slack = tol.abs + tol.rel * x.operator_norm();
    let mut acc = 0.0;
    for (v, w) in eigs {
        if v < -slack {
            return Err(Error::domain(format!(
                "phi_trace needs a positive operator; found eigenvalue {v}"
            )));
        }
        acc += w * phi.eval(v.max(0.0));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian_block(n: usize, rng: &mut ChaCha12Rng) -> DMatrix<Complex64> {
        let m = DMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&m + m.adjoint()).map(|z| z * 0.5)
    }

    fn random_hermitian(algebra: &Algebra, rng: &mut ChaCha12Rng) -> TracialOperator {
        let blocks = algebra
            .blocks
            .iter()
            .map(|b| random_hermitian_block(b.dim, rng))
            .collect();
        TracialOperator::from_blocks(algebra.clone(), blocks).unwrap()
    }

    fn random_unitary(n: usize, rng: &mut ChaCha12Rng) -> DMatrix<Complex64> {
        let m = DMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        m.qr().q()
    }

    #[test]
    fn spectral_decompose_examples() {
        let alg = Algebra::simple(3).unwrap();
        let x = TracialOperator::diagonal(&alg, &[3.0, 1.0, 2.0]).unwrap();
        let spec = spectral_decompose(&x).unwrap();
        assert_eq!(spec.blocks[0].eigenvalues, vec![3.0, 2.0, 1.0]);

        let z = TracialOperator::zero(&alg);
        let spec = spectral_decompose(&z).unwrap();
        assert!(spec.blocks[0].eigenvalues.iter().all(|&v| v == 0.0));

        assert!(spectral_decompose(&TracialOperator::from_blocks(
            alg.clone(),
            vec![DMatrix::from_fn(3, 3, |i, j| c((i + 2 * j) as f64, 1.0))]
        )
        .unwrap())
        .is_err());
    }

    /// Characteristic polynomial by Faddeev-LeVerrier; roots through the
    /// companion matrix of the (real) coefficients via real Schur.
    fn charpoly_roots(m: &DMatrix<Complex64>) -> Vec<f64> {
        let n = m.nrows();
        // c_n = 1; iterate M_1 = A, c_{n-1} = -tr(M_1), M_{k+1} = A(M_k + c I)
        let mut coeffs = vec![0.0; n + 1];
        coeffs[n] = 1.0;
        let mut mk = m.clone();
        for k in 1..=n {
            let ck = -mk.trace().re / k as f64;
            coeffs[n - k] = ck;
            if k < n {
                let mut shifted = mk.clone();
                for i in 0..n {
                    shifted[(i, i)] += c(ck, 0.0);
                }
                mk = m * shifted;
            }
        }
        // companion matrix of monic polynomial sum coeffs[i] x^i
        let mut comp = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            comp[(i, n - 1)] = -coeffs[i];
        }
        let mut roots: Vec<f64> = comp.complex_eigenvalues().iter().map(|z| z.re).collect();
        roots.sort_by(|a, b| b.total_cmp(a));
        roots
    }

    #[test]
    fn eigenvalues_match_companion_matrix_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let alg = Algebra::simple(6).unwrap();
        for _ in 0..20 {
            let x = random_hermitian(&alg, &mut rng);
            let spec = spectral_decompose(&x).unwrap();
            let oracle = charpoly_roots(&x.blocks()[0]);
            for (a, b) in spec.blocks[0].eigenvalues.iter().zip(&oracle) {
                assert!(
                    (a - b).abs() <= 1e-8 * a.abs().max(1.0),
                    "eigenvalue {a} vs oracle {b}"
                );
            }
            // reconstruction
            let rebuilt = spec.functional_calculus(&alg, |v| v);
            let err = rebuilt.sub(&x).unwrap().frobenius_norm();
            assert!(err <= 1e-9 * x.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn spectral_projection_examples() {
        let alg = Algebra::simple(3).unwrap();
        let x = TracialOperator::diagonal(&alg, &[3.0, 1.0, 2.0]).unwrap();
        let p = spectral_projection(&x, 1.0, 3.0).unwrap();
        assert!((p.trace() - 2.0).abs() < 1e-12);

        let none = spectral_projection(&x, 3.0, 10.0).unwrap();
        assert!(none.is_zero());

        assert!(spectral_projection(&x, 2.0, 2.0).is_err());

        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..30 {
            let x = random_hermitian(&alg, &mut rng);
            let v = rng.random_range(-1.0..1.0);
            let p = spectral_projection(&x, v, f64::INFINITY).unwrap();
            let count = spectral_decompose(&x).unwrap().blocks[0]
                .eigenvalues
                .iter()
                .filter(|&&e| e > v)
                .count();
            assert!((p.trace() - count as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn mu_examples() {
        let alg = Algebra::simple(3).unwrap();
        let x = TracialOperator::diagonal(&alg, &[3.0, 1.0, 2.0]).unwrap();
        let m = mu(&x);
        assert_eq!(m.values(), &[3.0, 2.0, 1.0]);
        assert_eq!(m.breakpoints(), &[1.0, 2.0, 3.0]);

        // weighted blocks: dims (2,1), weights (0.5, 2)
        let alg2 = Algebra::new(vec![
            Block { dim: 2, weight: 0.5 },
            Block { dim: 1, weight: 2.0 },
        ])
        .unwrap();
        let y = TracialOperator::diagonal(&alg2, &[1.0, 1.0, 4.0]).unwrap();
        let m = mu(&y);
        assert_eq!(m.values(), &[4.0, 1.0]);
        assert_eq!(m.breakpoints(), &[2.0, 3.0]);
    }

    #[test]
    fn mu_matches_distribution_inversion_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let alg = Algebra::new(vec![
            Block { dim: 3, weight: 0.7 },
            Block { dim: 2, weight: 1.3 },
        ])
        .unwrap();
        for _ in 0..20 {
            let x = random_hermitian(&alg, &mut rng);
            let m = mu(&x);
            // distribution function of |x| from eigenvalue counts
            let spec_abs: Vec<(f64, f64)> = x
                .eigenvalues_weighted()
                .into_iter()
                .map(|(v, w)| (v.abs(), w))
                .collect();
            let dist = |v: f64| -> f64 {
                spec_abs
                    .iter()
                    .filter(|(s, _)| *s > v)
                    .map(|(_, w)| w)
                    .sum()
            };
            let top = x.operator_norm() * 1.1 + 1.0;
            for i in 0..1000 {
                let t = i as f64 * (alg.total_trace() * 1.05) / 1000.0;
                // invert by bisection on v
                let (mut lo, mut hi) = (0.0f64, top);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if dist(mid) <= t {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let expected = hi;
                let got = m.value_at(t);
                assert!(
                    (got - expected).abs() <= 1e-8 * expected.max(1.0),
                    "mu mismatch at t={t}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn mu_positive_homogeneity() {
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let alg = Algebra::new(vec![
            Block { dim: 3, weight: 0.8 },
            Block { dim: 2, weight: 1.6 },
        ])
        .unwrap();
        for _ in 0..200 {
            let x = random_hermitian(&alg, &mut rng);
            let c = rng.random_range(0.0..3.0);
            let lhs = mu(&x.scale(c));
            let rhs = mu(&x).scale(c).unwrap();
            assert!(lhs.approx_eq(&rhs, 1e-9, 1e-12), "mu(c x) != c mu(x) at c={c}");
        }
    }

    #[test]
    fn mu_unitary_invariance_and_order_monotonicity() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let alg = Algebra::new(vec![
            Block { dim: 3, weight: 1.0 },
            Block { dim: 2, weight: 0.4 },
        ])
        .unwrap();
        for _ in 0..200 {
            let x = random_hermitian(&alg, &mut rng);
            let us: Vec<DMatrix<Complex64>> = alg
                .blocks
                .iter()
                .map(|b| random_unitary(b.dim, &mut rng))
                .collect();
            let conj_blocks: Vec<DMatrix<Complex64>> = x
                .blocks()
                .iter()
                .zip(&us)
                .map(|(m, u)| u * m * u.adjoint())
                .collect();
            let y = TracialOperator::from_blocks(alg.clone(), conj_blocks)
                .unwrap()
                .symmetrize();
            assert!(mu(&x).approx_eq(&mu(&y), 1e-9, 1e-12));
        }
        for _ in 0..200 {
            let x0 = random_hermitian(&alg, &mut rng);
            let x = x0.mul(&x0).unwrap().symmetrize(); // PSD
            let z0 = random_hermitian(&alg, &mut rng);
            let z = z0.mul(&z0).unwrap().symmetrize();
            let y = x.add(&z).unwrap();
            let mx = mu(&x);
            let my = mu(&y);
            for &t in mx.breakpoints() {
                assert!(mx.value_at(t) <= my.value_at(t) + 1e-9);
            }
            assert!(mx.value_at(0.0) <= my.value_at(0.0) + 1e-9);
        }
    }

    #[test]
    fn order_examples() {
        let alg = Algebra::simple(2).unwrap();
        let zero = TracialOperator::zero(&alg);
        let psd = TracialOperator::diagonal(&alg, &[1.0, 0.5]).unwrap();
        assert!(order_leq(&zero, &psd, Tolerance::default()).unwrap());
        let two = TracialOperator::diagonal(&alg, &[2.0, 2.0]).unwrap();
        let one = TracialOperator::identity(&alg);
        assert!(!order_leq(&two, &one, Tolerance::default()).unwrap());

        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let x0 = random_hermitian(&alg, &mut rng);
            let x = x0.mul(&x0).unwrap().symmetrize();
            let z = random_hermitian(&alg, &mut rng);
            let y = x.add(&z.adjoint().mul(&z).unwrap().symmetrize()).unwrap();
            assert!(order_leq(&x, &y, Tolerance::default()).unwrap());
        }
    }

    #[test]
    fn lattice_examples() {
        let alg = Algebra::simple(2).unwrap();
        let e = TracialOperator::diagonal(&alg, &[1.0, 0.0]).unwrap();
        let e = Projection::try_new(e).unwrap();
        let meet = e.meet(&e).unwrap();
        let join = e.join(&e).unwrap();
        assert!((meet.trace() - e.trace()).abs() < 1e-10);
        assert!((join.trace() - e.trace()).abs() < 1e-10);

        let f = Projection::try_new(TracialOperator::diagonal(&alg, &[0.0, 1.0]).unwrap()).unwrap();
        assert!(e.meet(&f).unwrap().is_zero());
        let join = e.join(&f).unwrap();
        assert!(join.is_identity());
    }

    #[test]
    fn lattice_random_rank_oracle_and_modularity() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let alg = Algebra::simple(4).unwrap();
        for _ in 0..40 {
            let he = random_hermitian(&alg, &mut rng);
            let hf = random_hermitian(&alg, &mut rng);
            let se = spectral_decompose(&he).unwrap();
            let sf = spectral_decompose(&hf).unwrap();
            let pick = |s: &Spectrum, k: usize| -> Projection {
                let mut m = DMatrix::<Complex64>::zeros(4, 4);
                for i in 0..k {
                    let col = s.blocks[0].vectors.column(i);
                    m += col * col.adjoint();
                }
                Projection::try_new(
                    TracialOperator::from_blocks(alg.clone(), vec![m]).unwrap().symmetrize(),
                )
                .unwrap()
            };
            let e = pick(&se, 2);
            let f = pick(&sf, 2);
            let meet = e.meet(&f).unwrap();
            let join = e.join(&f).unwrap();
            // rank oracle: concatenate columns and count singular values
            let mut cat = DMatrix::<Complex64>::zeros(4, 4);
            cat.view_mut((0, 0), (4, 2)).copy_from(&se.blocks[0].vectors.columns(0, 2));
            cat.view_mut((0, 2), (4, 2)).copy_from(&sf.blocks[0].vectors.columns(0, 2));
            let sv = cat.svd(false, false).singular_values;
            let join_rank = sv.iter().filter(|&&s| s > 1e-9).count();
            assert_eq!(join.trace().round() as usize, join_rank);
            // dim(E ^ F) = rank e + rank f - dim(E v F)
            let meet_rank = 2 + 2 - join_rank;
            assert_eq!(meet.trace().round() as usize, meet_rank);
            // modularity: tau(e v f) + tau(e ^ f) = tau(e) + tau(f)
            assert!(
                (join.trace() + meet.trace() - e.trace() - f.trace()).abs() < 1e-9,
                "modularity failed"
            );
            // order relations
            assert!(order_leq(meet.op(), e.op(), Tolerance::default()).unwrap());
            assert!(order_leq(meet.op(), f.op(), Tolerance::default()).unwrap());
            assert!(order_leq(e.op(), join.op(), Tolerance::default()).unwrap());
            assert!(order_leq(f.op(), join.op(), Tolerance::default()).unwrap());
        }
    }

    #[test]
    fn phi_trace_examples() {
        let alg = Algebra::simple(2).unwrap();
        let x = TracialOperator::diagonal(&alg, &[1.0, 2.0]).unwrap();
        let phi1 = OrliczFunction::power(1.0).unwrap();
        assert!((phi_trace(&x, &phi1, Tolerance::default()).unwrap() - 3.0).abs() < 1e-12);
        let phi2 = OrliczFunction::power(2.0).unwrap();
        assert!((phi_trace(&x, &phi2, Tolerance::default()).unwrap() - 5.0).abs() < 1e-12);

        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let phi3 = OrliczFunction::power(3.0).unwrap();
        for _ in 0..20 {
            let z = random_hermitian(&alg, &mut rng);
            let x = z.mul(&z).unwrap().symmetrize();
            let cube = x.mul(&x).unwrap().mul(&x).unwrap();
            let direct = cube.trace_real();
            let viaspec = phi_trace(&x, &phi3, Tolerance::default()).unwrap();
            assert!((direct - viaspec).abs() <= 1e-9 * direct.abs().max(1.0));
        }

        let neg = TracialOperator::diagonal(&alg, &[-1.0, 1.0]).unwrap();
        assert!(phi_trace(&neg, &phi2, Tolerance::default()).is_err());
    }

    #[test]
    fn rearrangement_of_projection_sum() {
        // a = sum alpha_i e_i with orthogonal projections: mu is the
        // displayed step function with rho_j = cumulative traces
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let alg = Algebra::new(vec![
            Block { dim: 4, weight: 0.5 },
            Block { dim: 3, weight: 1.25 },
        ])
        .unwrap();
        for _ in 0..50 {
            let h = random_hermitian(&alg, &mut rng);
            let spec = spectral_decompose(&h).unwrap();
            // three orthogonal projections from disjoint eigenvector groups
            let alphas = [3.0, 2.0, 1.0];
            let mut op = TracialOperator::zero(&alg);
            let mut traces = [0.0f64; 3];
            for (bi, bs) in spec.blocks.iter().enumerate() {
                let w = alg.blocks[bi].weight;
                for (i, _) in bs.eigenvalues.iter().enumerate() {
                    let group = i % 3;
                    let col = bs.vectors.column(i);
                    let mut blocks: Vec<DMatrix<Complex64>> = alg
                        .blocks
                        .iter()
                        .map(|b| DMatrix::zeros(b.dim, b.dim))
                        .collect();
                    blocks[bi] = (col * col.adjoint()).map(|z| z * alphas[group]);
                    let term = TracialOperator::from_blocks(alg.clone(), blocks).unwrap();
                    op = op.add(&term).unwrap();
                    traces[group] += w;
                }
            }
            let m = mu(&op.symmetrize());
            let expected = StepFunction::from_pieces(&[
                (traces[0], 3.0),
                (traces[1], 2.0),
                (traces[2], 1.0),
            ])
            .unwrap();
            assert!(m.approx_eq(&expected, 1e-9, 1e-12));
            // breakpoints exactly at cumulative traces
            let rho: Vec<f64> = vec![
                traces[0],
                traces[0] + traces[1],
                traces[0] + traces[1] + traces[2],
            ];
            for (a, b) in m.breakpoints().iter().zip(&rho) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn operator_json_round_trip() {
        let alg = Algebra::new(vec![
            Block { dim: 2, weight: 1.0 },
            Block { dim: 1, weight: 0.5 },
        ])
        .unwrap();
        let x = TracialOperator::from_blocks(
            alg,
            vec![
                DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.25), c(0.5, -0.25), c(2.0, 0.0)]),
                DMatrix::from_row_slice(1, 1, &[c(3.0, 0.0)]),
            ],
        )
        .unwrap();
        let s = serde_json::to_string(&x).unwrap();
        let back: TracialOperator = serde_json::from_str(&s).unwrap();
        assert!(back.is_hermitian());
        assert_eq!(x.bit_key(), back.bit_key());
    }
}
