//! Concrete maximal nets: finite ordered families of order-preserving
//! sublinear maps with attached weak-type witness generators.
//!
//! Two constructions are provided: conditional-expectation towers (matrix
//! martingales, with Cuculescu-style witnesses) and pinching families (a
//! second, non-martingale test family). Witness generators verify their
//! weak-type certificate on every call and are memoized per `(input, theta)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Tolerance};
use crate::tracial::{
    min_eigenvalue, order_leq, phi_trace, spectral_projection, Algebra, Projection,
    TracialOperator,
};

/// A cell of a partition: a set of `(block, index)` coordinates. Cells may
/// span algebra blocks (atoms of a commutative algebra are 1x1 blocks).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cell {
    pub members: Vec<(usize, usize)>,
}

/// Partition of all matrix coordinates of an algebra into disjoint cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    pub cells: Vec<Cell>,
}

impl Partition {
    pub fn validate(&self, algebra: &Algebra) -> Result<()> {
        let mut seen: Vec<Vec<bool>> = algebra.blocks.iter().map(|b| vec![false; b.dim]).collect();
        for cell in &self.cells {
            if cell.members.is_empty() {
                return Err(Error::domain("partition cells must be nonempty"));
            }
            for &(b, i) in &cell.members {
                if b >= algebra.blocks.len() || i >= algebra.blocks[b].dim {
                    return Err(Error::domain(format!("cell coordinate ({b},{i}) out of range")));
                }
                if seen[b][i] {
                    return Err(Error::domain(format!("cell coordinate ({b},{i}) repeated")));
                }
                seen[b][i] = true;
            }
        }
        if seen.iter().any(|v| v.iter().any(|&s| !s)) {
            return Err(Error::domain("partition does not cover the algebra"));
        }
        Ok(())
    }

    /// Coarsest partition: a single cell.
    pub fn full(algebra: &Algebra) -> Partition {
        let mut members = Vec::new();
        for (b, blk) in algebra.blocks.iter().enumerate() {
            for i in 0..blk.dim {
                members.push((b, i));
            }
        }
        Partition {
            cells: vec![Cell { members }],
        }
    }

    /// Finest partition: singleton cells.
    pub fn discrete(algebra: &Algebra) -> Partition {
        let mut cells = Vec::new();
        for (b, blk) in algebra.blocks.iter().enumerate() {
            for i in 0..blk.dim {
                cells.push(Cell {
                    members: vec![(b, i)],
                });
            }
        }
        Partition { cells }
    }

    /// Split the flattened coordinate list into `parts` contiguous chunks.
    pub fn contiguous(algebra: &Algebra, parts: usize) -> Partition {
        let flat: Vec<(usize, usize)> = algebra
            .blocks
            .iter()
            .enumerate()
            .flat_map(|(b, blk)| (0..blk.dim).map(move |i| (b, i)))
            .collect();
        let parts = parts.clamp(1, flat.len());
        let base = flat.len() / parts;
        let extra = flat.len() % parts;
        let mut cells = Vec::new();
        let mut off = 0;
        for c in 0..parts {
            let len = base + usize::from(c < extra);
            cells.push(Cell {
                members: flat[off..off + len].to_vec(),
            });
            off += len;
        }
        Partition { cells }
    }

    /// `self` refines `coarser`: every cell of `self` lies inside a cell of
    /// `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (ci, cell) in coarser.cells.iter().enumerate() {
            for &m in &cell.members {
                owner.insert(m, ci);
            }
        }
        for cell in &self.cells {
            let Some(target) = cell.members.first().and_then(|m| owner.get(m)) else {
                return false;
            };
            if !cell.members.iter().all(|m| owner.get(m) == Some(target)) {
                return false;
            }
        }
        true
    }

    pub fn is_discrete(&self) -> bool {
        self.cells.iter().all(|c| c.members.len() == 1)
    }

    fn cell_map(&self, algebra: &Algebra) -> Vec<Vec<usize>> {
        let mut map: Vec<Vec<usize>> = algebra.blocks.iter().map(|b| vec![0; b.dim]).collect();
        for (ci, cell) in self.cells.iter().enumerate() {
            for &(b, i) in &cell.members {
                map[b][i] = ci;
            }
        }
        map
    }
}

/// Which trace-preserving conditional expectation a partition induces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationKind {
    /// Onto the abelian algebra spanned by the cell indicators:
    /// `x -> sum_c tau(p_c x)/tau(p_c) p_c`.
    Average,
    /// Onto the block-diagonal algebra of the partition:
    /// `x -> sum_c p_c x p_c`.
    Pinch,
}

/// Apply the conditional expectation determined by `(kind, partition)`.
pub fn conditional_expectation(
    kind: ExpectationKind,
    partition: &Partition,
    x: &TracialOperator,
) -> TracialOperator {
    let algebra = x.algebra().clone();
    let map = partition.cell_map(&algebra);
    match kind {
        ExpectationKind::Average => {
            let mut num = vec![0.0f64; partition.cells.len()];
            let mut den = vec![0.0f64; partition.cells.len()];
            for (b, blk) in algebra.blocks.iter().enumerate() {
                let m = &x.blocks()[b];
                for i in 0..blk.dim {
                    let c = map[b][i];
                    num[c] += blk.weight * m[(i, i)].re;
                    den[c] += blk.weight;
                }
            }
            let mut entries = Vec::with_capacity(algebra.total_dim());
            for (b, blk) in algebra.blocks.iter().enumerate() {
                for &c in map[b].iter().take(blk.dim) {
                    entries.push(num[c] / den[c]);
                }
            }
            TracialOperator::diagonal(&algebra, &entries).expect("shape by construction")
        }
        ExpectationKind::Pinch => {
            let blocks = algebra
                .blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| {
                    let mut m = x.blocks()[b].clone();
                    for i in 0..blk.dim {
                        for j in 0..blk.dim {
                            if map[b][i] != map[b][j] {
                                m[(i, j)] = num_complex::Complex64::new(0.0, 0.0);
                            }
                        }
                    }
                    m
                })
                .collect();
            TracialOperator::from_blocks(algebra, blocks).expect("shape preserved")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationLevel {
    pub kind: ExpectationKind,
    pub partition: Partition,
}

/// Increasing sequence of unital *-subalgebras with their trace-preserving
/// conditional expectations.
#[derive(Clone, Debug, PartialEq)]
pub struct Filtration {
    algebra: Algebra,
    levels: Vec<FiltrationLevel>,
}

impl Filtration {
    pub fn new(algebra: Algebra, levels: Vec<FiltrationLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::domain("filtration needs at least one level"));
        }
        for l in &levels {
            l.partition.validate(&algebra)?;
        }
        for w in levels.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let nested = match (a.kind, b.kind) {
                (ExpectationKind::Average, ExpectationKind::Average) => {
                    b.partition.refines(&a.partition)
                }
                (ExpectationKind::Average, ExpectationKind::Pinch) => true,
                (ExpectationKind::Pinch, ExpectationKind::Pinch) => {
                    a.partition.refines(&b.partition)
                }
                (ExpectationKind::Pinch, ExpectationKind::Average) => {
                    a.partition.is_discrete() && b.partition.is_discrete()
                }
            };
            if !nested {
                return Err(Error::domain(
                    "filtration levels are not nested (subalgebras must increase)",
                ));
            }
        }
        Ok(Filtration { algebra, levels })
    }

    /// Genuinely nested dyadic partitions: each level halves every cell of
    /// the previous one (cells of length 1 stay put).
    fn dyadic_tower(algebra: &Algebra, depth: usize) -> Vec<Partition> {
        let mut tower = vec![Partition::full(algebra)];
        for _ in 1..depth.max(1) {
            let prev = tower.last().unwrap();
            let cells = prev
                .cells
                .iter()
                .flat_map(|c| {
                    if c.members.len() <= 1 {
                        vec![c.clone()]
                    } else {
                        let mid = c.members.len().div_ceil(2);
                        vec![
                            Cell {
                                members: c.members[..mid].to_vec(),
                            },
                            Cell {
                                members: c.members[mid..].to_vec(),
                            },
                        ]
                    }
                })
                .collect();
            tower.push(Partition { cells });
        }
        tower
    }

    /// Martingale shorthand: a refining dyadic averaging tower
    /// (1, 2, 4, ... cells) of the given depth.
    pub fn dyadic_average(algebra: &Algebra, depth: usize) -> Result<Self> {
        let levels = Self::dyadic_tower(algebra, depth)
            .into_iter()
            .map(|partition| FiltrationLevel {
                kind: ExpectationKind::Average,
                partition,
            })
            .collect();
        Filtration::new(algebra.clone(), levels)
    }

    /// Coarsening dyadic pinching tower ending at the full algebra.
    pub fn dyadic_pinch(algebra: &Algebra, depth: usize) -> Result<Self> {
        let levels = Self::dyadic_tower(algebra, depth)
            .into_iter()
            .rev()
            .map(|partition| FiltrationLevel {
                kind: ExpectationKind::Pinch,
                partition,
            })
            .collect();
        Filtration::new(algebra.clone(), levels)
    }

    pub fn algebra(&self) -> &Algebra {
        &self.algebra
    }

    pub fn levels(&self) -> &[FiltrationLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `E_n(x)` for the 0-based level `n`.
    pub fn apply(&self, level: usize, x: &TracialOperator) -> TracialOperator {
        let l = &self.levels[level];
        conditional_expectation(l.kind, &l.partition, x)
    }
}

/// One map of a maximal net.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum NetMap {
    Expectation {
        kind: ExpectationKind,
        partition: Partition,
    },
    Identity,
    /// `x -> factor * x`; used as a negative control whose declared uniform
    /// bound may be wrong.
    Scaled { factor: f64 },
}

impl NetMap {
    pub fn apply(&self, x: &TracialOperator) -> TracialOperator {
        match self {
            NetMap::Expectation { kind, partition } => conditional_expectation(*kind, partition, x),
            NetMap::Identity => x.clone(),
            NetMap::Scaled { factor } => x.scale(*factor),
        }
    }
}

/// Key for witness memoization: exact bit image of the input and threshold.
type WitnessKey = (Vec<u64>, u64);
type WitnessMemo = Arc<Mutex<HashMap<WitnessKey, TracialOperator>>>;

#[derive(Clone, Debug)]
enum WitnessKind {
    /// Cuculescu recursion through a filtration.
    Cuculescu(Filtration),
    /// Meet of the spectral cuts `chi_[0,theta](T_i(x))`.
    SpectralMeet,
    /// Derived `(q,q)` witness: identity above the uniform bound, the base
    /// generator below it.
    TrivialAbove {
        threshold: f64,
        base: Box<WitnessGenerator>,
    },
}

/// Deterministic, memoized map `(x, theta) -> projection e` whose weak-type
/// certificate — the trace bound and the compression bound of the defining
/// inequality — is verified on every call.
#[derive(Clone, Debug)]
pub struct WitnessGenerator {
    r: f64,
    c_r: f64,
    restricted_only: bool,
    kind: WitnessKind,
    maps: Vec<NetMap>,
    memo: WitnessMemo,
}

impl WitnessGenerator {
    pub fn constants(&self) -> (f64, f64) {
        (self.r, self.c_r)
    }

    pub fn is_restricted(&self) -> bool {
        self.restricted_only
    }

    /// Same generator with the domain restricted to projections; constants
    /// unchanged, memo shared.
    pub fn restricted(&self) -> WitnessGenerator {
        let mut g = self.clone();
        g.restricted_only = true;
        g
    }

    /// Produce (or recall) the witness for `(x, theta)` and verify its
    /// certificate.
    pub fn witness(&self, x: &TracialOperator, theta: f64, tol: Tolerance) -> Result<Projection> {
        if !(theta > 0.0) {
            return Err(Error::domain(format!("witness threshold must be positive, got {theta}")));
        }
        let is_projection = Projection::try_new(x.clone()).is_ok();
        if self.restricted_only && !is_projection {
            return Err(Error::domain(
                "restricted weak-type generator only accepts projections",
            ));
        }
        let key: WitnessKey = (x.bit_key(), theta.to_bits());
        if let Some(hit) = self.memo.lock().unwrap().get(&key) {
            return Projection::try_new(hit.clone());
        }
        let e = self.construct(x, theta, tol)?;
        self.verify(x, &e, theta, is_projection, tol)?;
        self.memo
            .lock()
            .unwrap()
            .insert(key, e.op().clone());
        Ok(e)
    }

    fn construct(&self, x: &TracialOperator, theta: f64, tol: Tolerance) -> Result<Projection> {
        match &self.kind {
            WitnessKind::Cuculescu(filtration) => cuculescu_witness(filtration, x, theta, tol),
            WitnessKind::SpectralMeet => {
                let mut e: Option<Projection> = None;
                for map in &self.maps {
                    let y = map.apply(x).symmetrize();
                    let cut = spectral_projection(&y, f64::NEG_INFINITY, theta)?;
                    e = Some(match e {
                        None => cut,
                        Some(prev) => prev.meet(&cut)?,
                    });
                }
                e.ok_or_else(|| Error::config("witness generator has no maps"))
            }
            WitnessKind::TrivialAbove { threshold, base } => {
                if theta >= *threshold {
                    Ok(Projection::identity(x.algebra()))
                } else {
                    base.construct(x, theta, tol)
                }
            }
        }
    }

    /// The defining weak-type inequalities, enforced (not sampled).
    fn verify(
        &self,
        x: &TracialOperator,
        e: &Projection,
        theta: f64,
        is_projection: bool,
        tol: Tolerance,
    ) -> Result<()> {
        let mass = if is_projection {
            x.trace_real()
        } else {
            let power = crate::stepfn::OrliczFunction::power(self.r)?;
            phi_trace(x, &power, tol)?
        };
        let bound = (self.c_r / theta).powf(self.r) * mass;
        let comp_trace = e.complement().trace();
        if !tol.leq(comp_trace, bound) {
            return Err(Error::certificate(format!(
                "witness trace bound failed: sigma(e_perp) = {comp_trace:.6e} > (C_r/theta)^r tr = {bound:.6e} \
                 (r = {}, C_r = {}, theta = {theta})",
                self.r, self.c_r
            )));
        }
        for (alpha, map) in self.maps.iter().enumerate() {
            let t = map.apply(x);
            let compressed = e.op().mul(&t)?.mul(e.op())?.symmetrize();
            if !order_leq(&compressed, &e.op().scale(theta), tol)? {
                return Err(Error::certificate(format!(
                    "witness compression bound failed for map {alpha}: e T(x) e <= theta e violated at theta = {theta}"
                )));
            }
        }
        Ok(())
    }
}

/// Cuculescu's recursion: `q_0 = 1`,
/// `q_n = q_{n-1} * chi_[0,theta](q_{n-1} E_n(x) q_{n-1})`, returning the
/// final projection. The postcondition — `tau(1 - e) <= tau(x)/theta` and
/// `e E_n(x) e <= theta e` for all levels — is the M-weak type `(1,1)`
/// certificate with `C_1 = 1`, and is verified before returning.
pub fn cuculescu_witness(
    filtration: &Filtration,
    x: &TracialOperator,
    theta: f64,
    tol: Tolerance,
) -> Result<Projection> {
    if !(theta > 0.0) {
        return Err(Error::domain(format!("Cuculescu threshold must be positive, got {theta}")));
    }
    if !x.is_hermitian() {
        return Err(Error::domain("Cuculescu witness needs a Hermitian positive operator"));
    }
    let slack = tol.abs + tol.rel * x.operator_norm();
    if min_eigenvalue(x)? < -slack {
        return Err(Error::domain("Cuculescu witness needs a positive operator"));
    }
    let algebra = x.algebra();
    let mut q = Projection::identity(algebra);
    for level in 0..filtration.len() {
        let en = filtration.apply(level, x);
        let compressed = q.op().mul(&en)?.mul(q.op())?.symmetrize();
        let cut = spectral_projection(&compressed, f64::NEG_INFINITY, theta)?;
        // q and the cut commute exactly; re-project to clean up rounding
        let product = q.op().mul(cut.op())?.mul(q.op())?.symmetrize();
        q = spectral_projection(&product, 0.5, 1.5)?;
    }
    // certificate
    let comp = q.complement().trace();
    let bound = x.trace_real() / theta;
    if !tol.leq(comp, bound) {
        return Err(Error::certificate(format!(
            "Cuculescu trace bound failed: tau(1-e) = {comp:.6e} > tau(x)/theta = {bound:.6e}"
        )));
    }
    for level in 0..filtration.len() {
        let en = filtration.apply(level, x);
        let compressed = q.op().mul(&en)?.mul(q.op())?.symmetrize();
        if !order_leq(&compressed, &q.op().scale(theta), tol)? {
            return Err(Error::certificate(format!(
                "Cuculescu compression bound failed at level {level} for theta = {theta}"
            )));
        }
    }
    Ok(q)
}

/// Finite ordered family of order-preserving sublinear maps with declared
/// weak-type data.
#[derive(Clone, Debug)]
pub struct MaximalNet {
    algebra: Algebra,
    maps: Vec<NetMap>,
    infty_constant: Option<f64>,
    base_generator: Option<WitnessGenerator>,
}

impl MaximalNet {
    /// The martingale net `x -> (E_n(x))_n`: positive, linear (hence
    /// sublinear), order preserving; strong type `(inf, inf)` with constant 1
    /// and M-weak type `(1,1)` with constant 1 via the Cuculescu witness.
    pub fn conditional_expectation(filtration: Filtration) -> Result<Self> {
        let maps: Vec<NetMap> = filtration
            .levels()
            .iter()
            .map(|l| NetMap::Expectation {
                kind: l.kind,
                partition: l.partition.clone(),
            })
            .collect();
        let algebra = filtration.algebra().clone();
        let base = WitnessGenerator {
            r: 1.0,
            c_r: 1.0,
            restricted_only: false,
            kind: WitnessKind::Cuculescu(filtration),
            maps: maps.clone(),
            memo: Arc::new(Mutex::new(HashMap::new())),
        };
        Ok(MaximalNet {
            algebra,
            maps,
            infty_constant: Some(1.0),
            base_generator: Some(base),
        })
    }

    /// Family of pinchings. Unital, positive, trace preserving; M-weak
    /// `(1,1)` with `C_1 = m` (the number of maps) through the spectral meet
    /// witness, strong type `(inf, inf)` with constant 1.
    pub fn pinching(algebra: Algebra, partitions: Vec<Partition>) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::domain("pinching net needs at least one partition"));
        }
        for p in &partitions {
            p.validate(&algebra)?;
        }
        let maps: Vec<NetMap> = partitions
            .into_iter()
            .map(|partition| NetMap::Expectation {
                kind: ExpectationKind::Pinch,
                partition,
            })
            .collect();
        let c1 = maps.len() as f64;
        let base = WitnessGenerator {
            r: 1.0,
            c_r: c1,
            restricted_only: false,
            kind: WitnessKind::SpectralMeet,
            maps: maps.clone(),
            memo: Arc::new(Mutex::new(HashMap::new())),
        };
        Ok(MaximalNet {
            algebra,
            maps,
            infty_constant: Some(1.0),
            base_generator: Some(base),
        })
    }

    /// Single identity map with its spectral-cut witness.
    pub fn identity(algebra: Algebra) -> Self {
        let maps = vec![NetMap::Identity];
        let base = WitnessGenerator {
            r: 1.0,
            c_r: 1.0,
            restricted_only: false,
            kind: WitnessKind::SpectralMeet,
            maps: maps.clone(),
            memo: Arc::new(Mutex::new(HashMap::new())),
        };
        MaximalNet {
            algebra,
            maps,
            infty_constant: Some(1.0),
            base_generator: Some(base),
        }
    }

    /// Negative control: overwrite the declared M-weak constant. The actual
    /// witnesses are unchanged, so their per-call certificate detects the
    /// corruption.
    pub fn with_declared_c1(mut self, c1: f64) -> Self {
        if let Some(g) = &mut self.base_generator {
            g.c_r = c1;
        }
        self
    }

    /// Negative control: append `x -> factor * x` while keeping the declared
    /// uniform constant.
    pub fn with_scaled_map(mut self, factor: f64) -> Self {
        self.maps.push(NetMap::Scaled { factor });
        if let Some(g) = &mut self.base_generator {
            g.maps = self.maps.clone();
        }
        self
    }

    pub fn algebra(&self) -> &Algebra {
        &self.algebra
    }

    pub fn maps(&self) -> &[NetMap] {
        &self.maps
    }

    pub fn apply_all(&self, x: &TracialOperator) -> Vec<TracialOperator> {
        self.maps.iter().map(|m| m.apply(x)).collect()
    }

    /// Declared restricted weak type `(inf, inf)` constant.
    pub fn infty_constant(&self) -> Option<f64> {
        self.infty_constant
    }

    /// Declared or derived restricted weak-type `(r, r)` generator. A
    /// requested `r` above the base exponent is derived from the base
    /// generator and the uniform bound: the identity witness is valid for
    /// `theta >= C_inf`, the base witness below, with
    /// `C_r = (C_p^p C_inf^{r-p})^{1/r}`.
    pub fn witness_generator(&self, r: f64) -> Result<WitnessGenerator> {
        let base = self
            .base_generator
            .as_ref()
            .ok_or_else(|| Error::config("net has no weak-type generator"))?;
        if (r - base.r).abs() < 1e-12 {
            return Ok(base.clone());
        }
        if r > base.r {
            let c_inf = self.infty_constant.ok_or_else(|| {
                Error::config("deriving a higher weak type needs a declared uniform bound")
            })?;
            let c_r = (base.c_r.powf(base.r) * c_inf.powf(r - base.r)).powf(1.0 / r);
            return Ok(WitnessGenerator {
                r,
                c_r,
                restricted_only: base.restricted_only,
                kind: WitnessKind::TrivialAbove {
                    threshold: c_inf,
                    base: Box::new(base.clone()),
                },
                maps: self.maps.clone(),
                memo: Arc::new(Mutex::new(HashMap::new())),
            });
        }
        Err(Error::config(format!(
            "no weak-type ({r},{r}) generator available (base exponent {})",
            base.r
        )))
    }

    /// Spot-check the declared structural properties (sublinearity and order
    /// preservation) on random positive inputs.
    pub fn spot_check(&self, rng: &mut impl rand::Rng, trials: usize, tol: Tolerance) -> Result<()> {
        for _ in 0..trials {
            let x = crate::harness::generate::random_psd(&self.algebra, rng);
            let y = crate::harness::generate::random_psd(&self.algebra, rng);
            let c = rng.random_range(0.0..2.0);
            let d = rng.random_range(0.0..2.0);
            let mix = x.scale(c).add(&y.scale(d))?;
            for map in &self.maps {
                let lhs = map.apply(&mix);
                let rhs = map.apply(&x).scale(c).add(&map.apply(&y).scale(d))?;
                if !order_leq(&lhs, &rhs, tol)? {
                    return Err(Error::certificate("declared sublinearity fails"));
                }
                // x <= x + y, so order preservation demands T(x) <= T(x+y)
                let bigger = map.apply(&x.add(&y)?);
                if !order_leq(&map.apply(&x), &bigger, tol)? {
                    return Err(Error::certificate("declared order preservation fails"));
                }
            }
        }
        Ok(())
    }
}

/// Restrict an M-weak generator to projections; constants unchanged.
pub fn restricted_witness_from_mweak(gen: &WitnessGenerator) -> WitnessGenerator {
    gen.restricted()
}

/// Declarative net description for configs and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "construction", rename_all = "snake_case")]
pub enum NetDescriptor {
    ConditionalExpectation { levels: Vec<FiltrationLevel> },
    /// Refining dyadic averaging tower of the given depth.
    DyadicMartingale { depth: usize },
    /// Coarsening dyadic pinching tower of the given depth.
    DyadicPinching { depth: usize },
    Pinching { partitions: Vec<Partition> },
    Identity,
}

impl NetDescriptor {
    pub fn build(&self, algebra: &Algebra) -> Result<MaximalNet> {
        match self {
            NetDescriptor::ConditionalExpectation { levels } => {
                MaximalNet::conditional_expectation(Filtration::new(algebra.clone(), levels.clone())?)
            }
            NetDescriptor::DyadicMartingale { depth } => {
                MaximalNet::conditional_expectation(Filtration::dyadic_average(algebra, *depth)?)
            }
            NetDescriptor::DyadicPinching { depth } => {
                MaximalNet::conditional_expectation(Filtration::dyadic_pinch(algebra, *depth)?)
            }
            NetDescriptor::Pinching { partitions } => {
                MaximalNet::pinching(algebra.clone(), partitions.clone())
            }
            NetDescriptor::Identity => Ok(MaximalNet::identity(algebra.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracial::Block;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn m8() -> Algebra {
        Algebra::simple(8).unwrap()
    }

    fn atoms8() -> Algebra {
        Algebra::commutative(&[0.5, 0.25, 1.0, 0.75, 0.3, 1.2, 0.6, 0.4]).unwrap()
    }

    #[test]
    fn partition_validation() {
        let alg = m8();
        assert!(Partition::full(&alg).validate(&alg).is_ok());
        assert!(Partition::discrete(&alg).validate(&alg).is_ok());
        assert!(Partition::contiguous(&alg, 3).validate(&alg).is_ok());
        let bad = Partition {
            cells: vec![Cell { members: vec![(0, 0)] }],
        };
        assert!(bad.validate(&alg).is_err());
    }

    #[test]
    fn filtration_nesting_rules() {
        let alg = m8();
        assert!(Filtration::dyadic_average(&alg, 3).is_ok());
        assert!(Filtration::dyadic_pinch(&alg, 3).is_ok());
        // averaging tower must refine downward; reversed order is rejected
        let bad = Filtration::new(
            alg.clone(),
            vec![
                FiltrationLevel {
                    kind: ExpectationKind::Average,
                    partition: Partition::contiguous(&alg, 4),
                },
                FiltrationLevel {
                    kind: ExpectationKind::Average,
                    partition: Partition::contiguous(&alg, 2),
                },
            ],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn tower_property_and_contractivity() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for filtration in [
            Filtration::dyadic_average(&m8(), 4).unwrap(),
            Filtration::dyadic_pinch(&m8(), 4).unwrap(),
        ] {
            for _ in 0..50 {
                let x = crate::harness::generate::random_hermitian(filtration.algebra(), &mut rng);
                for n in 0..filtration.len() {
                    for m in 0..filtration.len() {
                        let lhs = filtration.apply(n, &filtration.apply(m, &x));
                        let rhs = filtration.apply(n.min(m), &x);
                        assert!(
                            lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-10,
                            "tower property failed at ({n},{m})"
                        );
                    }
                    // unital + trace preserving + L2 contractive
                    let en = filtration.apply(n, &x);
                    assert!((en.trace_real() - x.trace_real()).abs() <= 1e-10);
                    let norm_in = x.adjoint().mul(&x).unwrap().trace_real();
                    let norm_out = en.adjoint().mul(&en).unwrap().trace_real();
                    assert!(norm_out <= norm_in + 1e-9);
                }
                let one = TracialOperator::identity(filtration.algebra());
                for n in 0..filtration.len() {
                    assert!(
                        filtration.apply(n, &one).sub(&one).unwrap().frobenius_norm() <= 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn block_average_tower_in_m4() {
        let alg = Algebra::simple(4).unwrap();
        let filtration = Filtration::dyadic_average(&alg, 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = crate::harness::generate::random_hermitian(&alg, &mut rng);
            let e1e2 = filtration.apply(0, &filtration.apply(1, &x));
            let e1 = filtration.apply(0, &x);
            assert!(e1e2.sub(&e1).unwrap().frobenius_norm() <= 1e-10);
        }
    }

    #[test]
    fn identity_net_witness_is_spectral_cut() {
        let alg = Algebra::simple(3).unwrap();
        let net = MaximalNet::identity(alg.clone());
        let gen = net.witness_generator(1.0).unwrap();
        let f = Projection::try_new(TracialOperator::diagonal(&alg, &[1.0, 1.0, 0.0]).unwrap())
            .unwrap();
        // theta >= 1: witness is the identity
        let e = gen.witness(f.op(), 1.5, Tolerance::default()).unwrap();
        assert!(e.is_identity());
        // theta < 1: witness is the complement
        let e = gen.witness(f.op(), 0.5, Tolerance::default()).unwrap();
        assert!((e.trace() - f.complement().trace()).abs() < 1e-10);
        assert!((e.complement().trace() - f.trace()).abs() < 1e-10);
    }

    #[test]
    fn one_level_filtration_witness_is_spectral_cut() {
        let alg = Algebra::simple(3).unwrap();
        let filtration = Filtration::new(
            alg.clone(),
            vec![FiltrationLevel {
                kind: ExpectationKind::Pinch,
                partition: Partition::full(&alg),
            }],
        )
        .unwrap();
        // one level equal to the full algebra: E_1 = id
        let x = TracialOperator::diagonal(&alg, &[2.0, 0.6, 0.1]).unwrap();
        let e = cuculescu_witness(&filtration, &x, 1.0, Tolerance::default()).unwrap();
        let expected = spectral_projection(&x, f64::NEG_INFINITY, 1.0).unwrap();
        assert!(e.op().sub(expected.op()).unwrap().frobenius_norm() < 1e-9);
    }

    #[test]
    fn cuculescu_examples() {
        let alg = Algebra::simple(2).unwrap();
        let trivial = Filtration::new(
            alg.clone(),
            vec![FiltrationLevel {
                kind: ExpectationKind::Pinch,
                partition: Partition::full(&alg),
            }],
        )
        .unwrap();

        // x = theta' 1 with theta' <= theta: e = 1
        let x = TracialOperator::identity(&alg).scale(0.8);
        let e = cuculescu_witness(&trivial, &x, 1.0, Tolerance::default()).unwrap();
        assert!(e.is_identity());

        // x = diag(2 theta, 0): e kills the first coordinate
        let theta = 0.7;
        let x = TracialOperator::diagonal(&alg, &[2.0 * theta, 0.0]).unwrap();
        let e = cuculescu_witness(&trivial, &x, theta, Tolerance::default()).unwrap();
        assert!((e.trace() - 1.0).abs() < 1e-10);
        assert!((e.complement().trace() - 1.0).abs() < 1e-10);
        assert!(e.complement().trace() <= x.trace_real() / theta + 1e-9);
    }

    #[test]
    fn cuculescu_matches_classical_stopping_set() {
        // commutative dyadic martingale: the witness is the indicator of
        // { sup_n E_n(f) <= theta }, enumerable by brute force
        let alg = atoms8();
        let filtration = Filtration::dyadic_average(&alg, 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..25 {
            let entries: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0)).collect();
            let x = TracialOperator::diagonal(&alg, &entries).unwrap();
            let theta = rng.random_range(0.3..1.8);
            let e = cuculescu_witness(&filtration, &x, theta, Tolerance::default()).unwrap();
            // brute-force classical maximal function on the atoms
            let mut sup = [0.0f64; 8];
            for n in 0..filtration.len() {
                let en = filtration.apply(n, &x);
                for (i, s) in sup.iter_mut().enumerate() {
                    *s = s.max(en.blocks()[i][(0, 0)].re);
                }
            }
            for (i, &s) in sup.iter().enumerate() {
                let on = e.op().blocks()[i][(0, 0)].re;
                let expected = if s <= theta * (1.0 + 1e-12) { 1.0 } else { 0.0 };
                assert!(
                    (on - expected).abs() < 1e-9,
                    "atom {i}: witness {on} vs classical {expected} (sup {s}, theta {theta})"
                );
            }
            // classical weak (1,1) bound matches
            let classical_measure: f64 = sup
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > theta)
                .map(|(i, _)| alg.blocks[i].weight)
                .sum();
            assert!((e.complement().trace() - classical_measure).abs() < 1e-9);
            assert!(classical_measure <= x.trace_real() / theta + 1e-9);
        }
    }

    #[test]
    fn pinching_net_examples() {
        let alg = Algebra::simple(2).unwrap();
        // trivial partition: identity map
        let net = MaximalNet::pinching(alg.clone(), vec![Partition::full(&alg)]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let x = crate::harness::generate::random_psd(&alg, &mut rng);
        let out = net.apply_all(&x);
        assert!(out[0].sub(&x).unwrap().frobenius_norm() < 1e-12);

        // full diagonal pinching of a projection in M_2
        let diag = MaximalNet::pinching(alg.clone(), vec![Partition::discrete(&alg)]).unwrap();
        let f = crate::harness::generate::random_projection(&alg, &mut rng);
        let pf = diag.apply_all(f.op())[0].clone();
        for i in 0..2 {
            for j in 0..2 {
                if i != j {
                    assert!(pf.blocks()[0][(i, j)].norm() < 1e-14);
                }
            }
        }
        let gen = diag.witness_generator(1.0).unwrap();
        let theta = 0.4;
        let e = gen.witness(f.op(), theta, Tolerance::default()).unwrap();
        assert!(e.complement().trace() <= f.trace() / theta + 1e-9);

        // pinching twice equals pinching once
        let twice = diag.apply_all(&pf)[0].clone();
        assert!(twice.sub(&pf).unwrap().frobenius_norm() < 1e-13);
    }

    #[test]
    fn memoization_is_bitwise_deterministic() {
        let alg = Algebra::simple(4).unwrap();
        let filtration = Filtration::dyadic_average(&alg, 3).unwrap();
        let net = MaximalNet::conditional_expectation(filtration).unwrap();
        let gen = net.witness_generator(1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let f = crate::harness::generate::random_projection(&alg, &mut rng);
        let e1 = gen.witness(f.op(), 0.37, Tolerance::default()).unwrap();
        let e2 = gen.witness(f.op(), 0.37, Tolerance::default()).unwrap();
        assert_eq!(e1.op().bit_key(), e2.op().bit_key());
        // restricted view shares the memo
        let restricted = restricted_witness_from_mweak(&gen);
        let e3 = restricted.witness(f.op(), 0.37, Tolerance::default()).unwrap();
        assert_eq!(e1.op().bit_key(), e3.op().bit_key());
        assert!(restricted
            .witness(&f.op().scale(0.5), 0.37, Tolerance::default())
            .is_err());
    }

    #[test]
    fn derived_weak_type_generator() {
        let alg = Algebra::simple(4).unwrap();
        let net =
            MaximalNet::conditional_expectation(Filtration::dyadic_average(&alg, 3).unwrap())
                .unwrap();
        let gen4 = net.witness_generator(4.0).unwrap();
        let (r, c) = gen4.constants();
        assert_eq!(r, 4.0);
        assert!((c - 1.0).abs() < 1e-12);
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let f = crate::harness::generate::random_projection(&alg, &mut rng);
        // above the uniform bound the witness is the identity
        let e = gen4.witness(f.op(), 2.0, Tolerance::default()).unwrap();
        assert!(e.is_identity());
        // below, the Cuculescu witness is reused and re-verified at r = 4
        let e = gen4.witness(f.op(), 0.6, Tolerance::default()).unwrap();
        assert!(e.complement().trace() <= (1.0 / 0.6f64).powi(4) * f.trace() + 1e-9);
    }

    #[test]
    fn corrupted_declared_constant_is_detected() {
        let alg = Algebra::simple(4).unwrap();
        let net =
            MaximalNet::conditional_expectation(Filtration::dyadic_average(&alg, 3).unwrap())
                .unwrap()
                .with_declared_c1(0.01);
        let gen = net.witness_generator(1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut detected = false;
        for _ in 0..10 {
            let f = crate::harness::generate::random_projection(&alg, &mut rng);
            if let Err(Error::Certificate(_)) = gen.witness(f.op(), 0.4, Tolerance::default()) {
                detected = true;
                break;
            }
        }
        assert!(detected, "corrupted constant must trip the witness certificate");
    }

    #[test]
    fn corrupted_uniform_bound_is_detected() {
        let alg = Algebra::simple(4).unwrap();
        let net =
            MaximalNet::conditional_expectation(Filtration::dyadic_average(&alg, 2).unwrap())
                .unwrap()
                .with_scaled_map(100.0);
        let gen = net.witness_generator(1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let f = crate::harness::generate::random_projection(&alg, &mut rng);
        assert!(matches!(
            gen.witness(f.op(), 0.5, Tolerance::default()),
            Err(Error::Certificate(_))
        ));
    }

    #[test]
    fn spot_check_accepts_honest_nets() {
        let alg = Algebra::new(vec![
            Block { dim: 4, weight: 1.0 },
            Block { dim: 2, weight: 0.5 },
        ])
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let net =
            MaximalNet::conditional_expectation(Filtration::dyadic_average(&alg, 3).unwrap())
                .unwrap();
        net.spot_check(&mut rng, 20, Tolerance::default()).unwrap();
        let net = MaximalNet::pinching(
            alg.clone(),
            vec![Partition::contiguous(&alg, 2), Partition::discrete(&alg)],
        )
        .unwrap();
        net.spot_check(&mut rng, 20, Tolerance::default()).unwrap();
    }

    #[test]
    fn net_descriptor_round_trip() {
        let d = NetDescriptor::DyadicMartingale { depth: 3 };
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("dyadic_martingale"));
        let back: NetDescriptor = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
        let alg = m8();
        assert!(back.build(&alg).is_ok());
    }
}
