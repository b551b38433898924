//! Exact calculus of nonincreasing step functions on `[0, inf)`.
//!
//! A [`StepFunction`] is the home of every decreasing rearrangement in this
//! crate. All integrals against such functions are piecewise elementary, so
//! the Hardy-Littlewood operator, submajorization and the function-space
//! norms below are computed in closed form; the only iterative ingredient is
//! the Luxemburg-norm bisection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Tolerance};

/// Nonincreasing, nonnegative step function on `[0, inf)`.
///
/// `values[j]` is taken on `[breakpoints[j-1], breakpoints[j])` with an
/// implicit leading breakpoint at `0`; `tail` is the value on
/// `[breakpoints[n-1], inf)` and must not exceed the last value. The
/// representation is normalized on construction: adjacent equal values are
/// merged and trailing pieces equal to the tail are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepFunctionRepr", into = "StepFunctionRepr")]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    tail: f64,
}

#[derive(Serialize, Deserialize)]
struct StepFunctionRepr {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    tail: f64,
}

impl TryFrom<StepFunctionRepr> for StepFunction {
    type Error = Error;
    fn try_from(r: StepFunctionRepr) -> Result<Self> {
        StepFunction::new(r.breakpoints, r.values, r.tail)
    }
}

impl From<StepFunction> for StepFunctionRepr {
    fn from(g: StepFunction) -> Self {
        StepFunctionRepr {
            breakpoints: g.breakpoints,
            values: g.values,
            tail: g.tail,
        }
    }
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, tail: f64) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(Error::domain(format!(
                "breakpoint/value length mismatch: {} vs {}",
                breakpoints.len(),
                values.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &breakpoints {
            if !t.is_finite() || t <= prev {
                return Err(Error::domain(format!(
                    "breakpoints must be finite and strictly increasing from 0, got {t}"
                )));
            }
            prev = t;
        }
        let mut prev_v = f64::INFINITY;
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!("values must be finite and >= 0, got {v}")));
            }
            if v > prev_v {
                return Err(Error::domain(format!(
                    "values must be nonincreasing, got {v} after {prev_v}"
                )));
            }
            prev_v = v;
        }
        if !tail.is_finite() || tail < 0.0 || tail > prev_v {
            return Err(Error::domain(format!(
                "tail value {tail} must satisfy 0 <= tail <= last value"
            )));
        }
        let mut g = StepFunction {
            breakpoints,
            values,
            tail,
        };
        g.normalize();
        Ok(g)
    }

    fn normalize(&mut self) {
        // merge adjacent pieces with exactly equal values
        let mut bp = Vec::with_capacity(self.breakpoints.len());
        let mut vs: Vec<f64> = Vec::with_capacity(self.values.len());
        for j in 0..self.values.len() {
            if let Some(&last) = vs.last() {
                if last == self.values[j] {
                    *bp.last_mut().unwrap() = self.breakpoints[j];
                    continue;
                }
            }
            bp.push(self.breakpoints[j]);
            vs.push(self.values[j]);
        }
        // drop trailing pieces equal to the tail
        while let Some(&last) = vs.last() {
            if last == self.tail {
                vs.pop();
                bp.pop();
            } else {
                break;
            }
        }
        self.breakpoints = bp;
        self.values = vs;
    }

    /// The zero function.
    pub fn zero() -> Self {
        StepFunction {
            breakpoints: vec![],
            values: vec![],
            tail: 0.0,
        }
    }

    /// Indicator of `[0, s)`.
    pub fn indicator(s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::domain(format!("indicator length must be positive, got {s}")));
        }
        StepFunction::new(vec![s], vec![1.0], 0.0)
    }

    /// Piecewise-constant function from `(length, value)` pieces followed by a
    /// zero tail; values must be nonincreasing.
    pub fn from_pieces(pieces: &[(f64, f64)]) -> Result<Self> {
        let mut bp = Vec::new();
        let mut vs = Vec::new();
        let mut t = 0.0;
        for &(len, v) in pieces {
            if !(len > 0.0) {
                return Err(Error::domain("piece lengths must be positive"));
            }
            t += len;
            bp.push(t);
            vs.push(v);
        }
        StepFunction::new(bp, vs, 0.0)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty() && self.tail == 0.0
    }

    /// Value at `t >= 0`; right-continuous.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        if idx < self.values.len() {
            self.values[idx]
        } else {
            self.tail
        }
    }

    /// Essential supremum.
    pub fn sup(&self) -> f64 {
        self.values.first().copied().unwrap_or(self.tail)
    }

    /// End of the support when the tail vanishes.
    pub fn support_end(&self) -> Option<f64> {
        if self.tail > 0.0 {
            None
        } else {
            Some(self.breakpoints.last().copied().unwrap_or(0.0))
        }
    }

    /// `\int_0^t g(s) ds`, exact.
    pub fn integral_to(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = 0.0;
        for (j, &b) in self.breakpoints.iter().enumerate() {
            if t <= b {
                return acc + self.values[j] * (t - prev);
            }
            acc += self.values[j] * (b - prev);
            prev = b;
        }
        acc + self.tail * (t - prev)
    }

    /// `\int_0^inf g`, which is `+inf` when the tail is positive.
    pub fn total_integral(&self) -> f64 {
        if self.tail > 0.0 {
            return f64::INFINITY;
        }
        self.breakpoints
            .last()
            .map(|&b| self.integral_to(b))
            .unwrap_or(0.0)
    }

    /// Hardy-Littlewood average `(1/t) \int_0^t g(s) ds`.
    pub fn hardy_littlewood(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("Hardy-Littlewood average needs t > 0, got {t}")));
        }
        Ok(self.integral_to(t) / t)
    }

    /// Pointwise scaling by `c >= 0`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain(format!("scale factor must be finite and >= 0, got {c}")));
        }
        if c == 0.0 {
            return Ok(StepFunction::zero());
        }
        StepFunction::new(
            self.breakpoints.clone(),
            self.values.iter().map(|v| v * c).collect(),
            self.tail * c,
        )
    }

    /// Dilation `D_{1/s} g (t) = g(t/s)`.
    pub fn dilate(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::domain(format!("dilation factor must be positive, got {s}")));
        }
        StepFunction::new(
            self.breakpoints.iter().map(|b| b * s).collect(),
            self.values.clone(),
            self.tail,
        )
    }

    fn merged_breakpoints(&self, other: &StepFunction) -> Vec<f64> {
        let mut bps: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        bps
    }

    /// Pointwise sum; again a nonincreasing step function.
    pub fn add(&self, other: &StepFunction) -> StepFunction {
        let bps = self.merged_breakpoints(other);
        let mut vs = Vec::with_capacity(bps.len());
        let mut prev = 0.0;
        for &b in &bps {
            vs.push(self.value_at(prev) + other.value_at(prev));
            prev = b;
        }
        StepFunction::new(bps, vs, self.tail + other.tail).expect("sum of valid step functions")
    }

    /// Pointwise maximum.
    pub fn pointwise_max(&self, other: &StepFunction) -> StepFunction {
        let bps = self.merged_breakpoints(other);
        let mut vs = Vec::with_capacity(bps.len());
        let mut prev = 0.0;
        for &b in &bps {
            vs.push(self.value_at(prev).max(other.value_at(prev)));
            prev = b;
        }
        StepFunction::new(bps, vs, self.tail.max(other.tail)).expect("max of valid step functions")
    }

    /// Piecewise comparison up to tolerances: values are compared on every
    /// interval of the merged breakpoint grid wider than `bp_tol`.
    pub fn approx_eq(&self, other: &StepFunction, val_tol: f64, bp_tol: f64) -> bool {
        let mut bps = self.merged_breakpoints(other);
        let scale = self.sup().max(other.sup()).max(1.0);
        bps.push(bps.last().copied().unwrap_or(0.0) + 1.0);
        let mut prev = 0.0;
        for &b in &bps {
            if b - prev > bp_tol {
                let m = 0.5 * (prev + b);
                if (self.value_at(m) - other.value_at(m)).abs() > val_tol * scale {
                    return false;
                }
            }
            prev = b;
        }
        (self.tail - other.tail).abs() <= val_tol * scale
    }
}

/// `true` iff `g` is submajorized by `h` (`g ≺≺ h`), i.e.
/// `\int_0^t g <= \int_0^t h` for all `t`, up to `tol`.
///
/// Both accumulated integrals are piecewise linear, so their difference is
/// linear between consecutive merged breakpoints and the comparison at those
/// points (plus the tail slopes) is exact.
pub fn submajorizes(h: &StepFunction, g: &StepFunction, tol: Tolerance) -> bool {
    let bps = g.merged_breakpoints(h);
    for &t in &bps {
        if !tol.leq(g.integral_to(t), h.integral_to(t)) {
            return false;
        }
    }
    // beyond the last breakpoint the difference has slope tail_g - tail_h
    tol.leq(g.tail, h.tail)
}

/// The kernel `theta_{p,q}(t) = t^{-1/p}` on `[1, inf)` and `t^{-1/q}` on
/// `(0, 1)` (constant `1` there when `q = inf`); equals `S_{p,q}` applied to
/// the unit indicator.
pub fn theta(p: f64, q: f64, t: f64) -> Result<f64> {
    check_kernel_window(p, q)?;
    if !(t > 0.0) {
        return Err(Error::domain(format!("theta needs t > 0, got {t}")));
    }
    if t >= 1.0 {
        Ok(t.powf(-1.0 / p))
    } else if q.is_infinite() {
        Ok(1.0)
    } else {
        Ok(t.powf(-1.0 / q))
    }
}

fn check_kernel_window(p: f64, q: f64) -> Result<()> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::window(format!("kernel exponent p must be finite and > 0, got {p}")));
    }
    if !(q > p) {
        return Err(Error::window(format!("kernel exponents need p < q, got p={p}, q={q}")));
    }
    Ok(())
}

/// `\int_0^T theta_{p,q}(u) du`, closed form. Divergent integrals (at zero
/// for `q <= 1`) return `+inf`.
pub fn theta_cumulative(p: f64, q: f64, big_t: f64) -> f64 {
    debug_assert!(big_t >= 0.0);
    let head = |t: f64| -> f64 {
        // \int_0^t u^{-1/q} du for t <= 1
        if q.is_infinite() {
            t
        } else if q <= 1.0 {
            f64::INFINITY
        } else {
            t.powf(1.0 - 1.0 / q) / (1.0 - 1.0 / q)
        }
    };
    if big_t <= 1.0 {
        head(big_t)
    } else {
        let upper = if (p - 1.0).abs() < 1e-14 {
            big_t.ln()
        } else {
            (big_t.powf(1.0 - 1.0 / p) - 1.0) / (1.0 - 1.0 / p)
        };
        head(1.0) + upper
    }
}

/// Symbolic value of a Calderon operator applied to a step function:
/// `t -> sum_j c_j * theta_{p,q}(t / s_j)`.
///
/// This is **not** a step function; it is kept in kernel form for exact
/// pointwise evaluation and closed-form cumulative integrals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalderonEvaluation {
    pub p: f64,
    #[serde(with = "crate::exponent")]
    pub q: f64,
    /// `(coefficient, scale)` pairs with positive entries.
    pub terms: Vec<(f64, f64)>,
}

impl CalderonEvaluation {
    /// Exact pointwise value at `t > 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("Calderon evaluation needs t > 0, got {t}")));
        }
        let mut acc = 0.0;
        for &(c, s) in &self.terms {
            acc += c * theta(self.p, self.q, t / s)?;
        }
        Ok(acc)
    }

    /// `\int_0^t` of the evaluation, closed form.
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for &(c, s) in &self.terms {
            acc += c * s * theta_cumulative(self.p, self.q, t / s);
        }
        acc
    }

    /// Scale all coefficients by `c >= 0`.
    pub fn scaled(&self, c: f64) -> CalderonEvaluation {
        CalderonEvaluation {
            p: self.p,
            q: self.q,
            terms: self.terms.iter().map(|&(a, s)| (a * c, s)).collect(),
        }
    }

    fn sorted_scales(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.terms.iter().map(|t| t.1).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    /// On the interval between consecutive scales the evaluation is
    /// `A t^{-1/p} + B t^{-1/q}`; returns `(A, B)` for the interval that
    /// contains `t` (boundaries resolved to the right).
    fn power_coefficients(&self, t: f64) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for &(c, s) in &self.terms {
            if t >= s {
                a += c * s.powf(1.0 / self.p);
            } else if self.q.is_infinite() {
                b += c;
            } else {
                b += c * s.powf(1.0 / self.q);
            }
        }
        (a, b)
    }

    /// Norm of the evaluation in the given space. Pure power-law pieces are
    /// integrated in closed form; mixed two-power pieces use adaptive
    /// quadrature with relative tolerance `1e-12`.
    pub fn norm(&self, space: &SpaceDescriptor) -> Result<f64> {
        if self.terms.is_empty() {
            return Ok(0.0);
        }
        space.validate()?;
        match space {
            SpaceDescriptor::Lp { r } => {
                if r.is_infinite() {
                    // value at 0+ is the supremum (nonincreasing)
                    let (_, b) = self.power_coefficients(self.sorted_scales()[0] * 0.5);
                    return if self.q.is_infinite() {
                        Ok(b)
                    } else {
                        Ok(f64::INFINITY)
                    };
                }
                self.weighted_power_integral(0.0, *r).map(|i| i.powf(1.0 / r))
            }
            SpaceDescriptor::Lorentz { p, q } => {
                if q.is_infinite() {
                    self.lorentz_sup(*p)
                } else {
                    self.weighted_power_integral(q / p - 1.0, *q)
                        .map(|i| i.powf(1.0 / q))
                }
            }
            SpaceDescriptor::Orlicz { phi } => self.luxemburg(phi),
        }
    }

    /// `\int_0^inf t^alpha * f(t)^r dt` where `f` is the evaluation.
    fn weighted_power_integral(&self, alpha: f64, r: f64) -> Result<f64> {
        let scales = self.sorted_scales();
        let mut total = 0.0;
        // head (0, s_min]: pure t^{-1/q} branch
        let s0 = scales[0];
        let (_, b) = self.power_coefficients(s0 * 0.5);
        if b > 0.0 {
            // integrand b^r t^{alpha - r/q}
            let expo = if self.q.is_infinite() { alpha } else { alpha - r / self.q };
            if expo <= -1.0 {
                return Ok(f64::INFINITY);
            }
            total += b.powf(r) * s0.powf(expo + 1.0) / (expo + 1.0);
        }
        // interior pieces: two-power integrand, adaptive quadrature
        for w in scales.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (a, b) = self.power_coefficients(0.5 * (lo + hi));
            let p = self.p;
            let q = self.q;
            let f = |t: f64| {
                let v = a * t.powf(-1.0 / p)
                    + if q.is_infinite() { b } else { b * t.powf(-1.0 / q) };
                t.powf(alpha) * v.powf(r)
            };
            total += adaptive_simpson(&f, lo, hi, 1e-13 * total.max(1.0), 48);
        }
        // tail [s_max, inf): pure t^{-1/p} branch
        let smax = *scales.last().unwrap();
        let (a, _) = self.power_coefficients(smax * 2.0);
        if a > 0.0 {
            let expo = alpha - r / self.p;
            if expo >= -1.0 {
                return Ok(f64::INFINITY);
            }
            total += -a.powf(r) * smax.powf(expo + 1.0) / (expo + 1.0);
        }
        Ok(total)
    }

    /// `sup_t t^{1/p} f(t)` for the Lorentz weak norm.
    fn lorentz_sup(&self, pl: f64) -> Result<f64> {
        let scales = self.sorted_scales();
        let c = 1.0 / pl;
        let mut sup: f64 = 0.0;
        let eval_at = |t: f64, sup: &mut f64| {
            let (a, b) = self.power_coefficients(t);
            let v = a * t.powf(c - 1.0 / self.p)
                + if self.q.is_infinite() {
                    b * t.powf(c)
                } else {
                    b * t.powf(c - 1.0 / self.q)
                };
            if v > *sup {
                *sup = v;
            }
        };
        // limits at 0 and inf
        let qexp = if self.q.is_infinite() { c } else { c - 1.0 / self.q };
        let (_, b0) = self.power_coefficients(scales[0] * 0.5);
        if b0 > 0.0 && qexp < 0.0 {
            return Ok(f64::INFINITY);
        }
        let (ainf, _) = self.power_coefficients(scales.last().unwrap() * 2.0);
        if ainf > 0.0 && c - 1.0 / self.p > 0.0 {
            return Ok(f64::INFINITY);
        }
        let mut grid = vec![scales[0] * 0.5, scales.last().unwrap() * 2.0];
        grid.extend_from_slice(&scales);
        // interior critical points of A t^{c-1/p} + B t^{c-1/q} per piece
        let mut extended = vec![scales[0] * 0.5];
        extended.extend_from_slice(&scales);
        extended.push(scales.last().unwrap() * 2.0);
        for w in extended.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (a, b) = self.power_coefficients(0.5 * (lo + hi));
            let ea = c - 1.0 / self.p;
            let eb = qexp;
            if a > 0.0 && b > 0.0 && ea * eb < 0.0 {
                // d/dt = A ea t^{ea-1} + B eb t^{eb-1} = 0
                let t = (-(b * eb) / (a * ea)).powf(1.0 / (ea - eb));
                if t.is_finite() && t > lo && t < hi {
                    grid.push(t);
                }
            }
        }
        for &t in &grid {
            eval_at(t, &mut sup);
        }
        Ok(sup)
    }

    /// Luxemburg norm by bisection; the modular is integrated piecewise with
    /// geometric tail summation on the unbounded pieces.
    fn luxemburg(&self, phi: &OrliczFunction) -> Result<f64> {
        let scales = self.sorted_scales();
        let s0 = scales[0];
        let smax = *scales.last().unwrap();
        let modular = |k: f64| -> f64 {
            let mut total = 0.0;
            let segment = |lo: f64, hi: f64| -> f64 {
                let f = |t: f64| {
                    let (a, b) = self.power_coefficients(t);
                    let v = a * t.powf(-1.0 / self.p)
                        + if self.q.is_infinite() {
                            b
                        } else {
                            b * t.powf(-1.0 / self.q)
                        };
                    phi.eval(v / k)
                };
                adaptive_simpson(&f, lo, hi, 1e-12, 48)
            };
            // head: halving intervals down from s0
            let mut hi = s0;
            for _ in 0..90 {
                let lo = hi * 0.5;
                let part = segment(lo, hi);
                total += part;
                hi = lo;
                if part <= 1e-14 * total.max(1.0) || total > 1e6 {
                    break;
                }
            }
            for w in scales.windows(2) {
                total += segment(w[0], w[1]);
            }
            // tail: doubling intervals up from smax
            let mut lo = smax;
            for _ in 0..90 {
                let hi = lo * 2.0;
                let part = segment(lo, hi);
                total += part;
                lo = hi;
                if part <= 1e-14 * total.max(1.0) || total > 1e6 {
                    break;
                }
            }
            total
        };
        luxemburg_bisect(modular, self.eval(s0 * 0.5).unwrap_or(f64::INFINITY))
    }
}

/// `S_{p,q} g` for a step function `g` with vanishing tail, expressed through
/// the indicator decomposition `g = sum_j c_j chi_[0, s_j)` and the identity
/// `S_{p,q} chi_[0,s) (t) = theta_{p,q}(t/s)`.
pub fn calderon_apply(g: &StepFunction, p: f64, q: f64) -> Result<CalderonEvaluation> {
    check_kernel_window(p, q)?;
    if g.tail > 0.0 {
        return Err(Error::Divergence(format!(
            "Calderon operator rejected: tail value {} > 0 makes the defining integral diverge",
            g.tail
        )));
    }
    let n = g.values.len();
    let mut terms = Vec::with_capacity(n);
    for j in 0..n {
        let next = if j + 1 < n { g.values[j + 1] } else { 0.0 };
        let c = g.values[j] - next;
        if c > 0.0 {
            terms.push((c, g.breakpoints[j]));
        }
    }
    Ok(CalderonEvaluation { p, q, terms })
}

/// Convex Orlicz function with optional declared indices and global
/// Delta_2 constant.
#[derive(Clone)]
pub struct OrliczFunction {
    kind: OrliczKind,
    pub indices: Option<(f64, f64)>,
    pub delta2_constant: Option<f64>,
}

#[derive(Clone)]
enum OrliczKind {
    Power { r: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for OrliczFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            OrliczKind::Power { r } => write!(f, "OrliczFunction(t^{r})"),
            OrliczKind::Custom(_) => write!(f, "OrliczFunction(custom)"),
        }
    }
}

impl OrliczFunction {
    /// `Phi(t) = t^r` for `r >= 1`; indices `(r, r)`, Delta_2 constant `2^r`.
    pub fn power(r: f64) -> Result<Self> {
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::domain(format!("power Orlicz function needs r >= 1, got {r}")));
        }
        Ok(OrliczFunction {
            kind: OrliczKind::Power { r },
            indices: Some((r, r)),
            delta2_constant: Some(2f64.powf(r)),
        })
    }

    pub fn custom(
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        indices: Option<(f64, f64)>,
        delta2_constant: Option<f64>,
    ) -> Self {
        OrliczFunction {
            kind: OrliczKind::Custom(f),
            indices,
            delta2_constant,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            OrliczKind::Power { r } => t.powf(*r),
            OrliczKind::Custom(f) => f(t),
        }
    }

    /// Sampled check of the declared global Delta_2 condition
    /// `Phi(2t) <= C Phi(t)`.
    pub fn check_delta2(&self, samples: &[f64], tol: Tolerance) -> bool {
        let Some(c) = self.delta2_constant else {
            return true;
        };
        samples
            .iter()
            .all(|&t| tol.leq(self.eval(2.0 * t), c * self.eval(t)))
    }
}

/// One of the three concrete symmetric function spaces.
#[derive(Clone, Debug)]
pub enum SpaceDescriptor {
    Lp { r: f64 },
    Lorentz { p: f64, q: f64 },
    Orlicz { phi: OrliczFunction },
}

impl SpaceDescriptor {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpaceDescriptor::Lp { r } => {
                if !(*r >= 1.0) {
                    return Err(Error::domain(format!("Lp space needs r >= 1, got {r}")));
                }
            }
            SpaceDescriptor::Lorentz { p, q } => {
                if !(*p >= 1.0) || !p.is_finite() || !(*q > 0.0) {
                    return Err(Error::domain(format!(
                        "Lorentz space needs finite p >= 1 and q > 0, got ({p},{q})"
                    )));
                }
            }
            SpaceDescriptor::Orlicz { phi } => {
                if let Some((pf, qf)) = phi.indices {
                    if !(1.0 <= pf && pf <= qf) {
                        return Err(Error::domain(format!(
                            "Orlicz indices must satisfy 1 <= p_Phi <= q_Phi, got ({pf},{qf})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Declared Boyd indices `(p_E, q_E)` when analytically known.
    pub fn boyd(&self) -> Option<(f64, f64)> {
        match self {
            SpaceDescriptor::Lp { r } => Some((*r, *r)),
            SpaceDescriptor::Lorentz { p, .. } => Some((*p, *p)),
            SpaceDescriptor::Orlicz { phi } => phi.indices,
        }
    }
}

/// Norm of a step function in the given space; divergent integrals return
/// `+inf`, which is a value, not an error.
pub fn norm(g: &StepFunction, space: &SpaceDescriptor) -> Result<f64> {
    space.validate()?;
    if g.is_zero() {
        return Ok(0.0);
    }
    match space {
        SpaceDescriptor::Lp { r } => {
            if r.is_infinite() {
                return Ok(g.sup());
            }
            if g.tail > 0.0 {
                return Ok(f64::INFINITY);
            }
            let mut acc = 0.0;
            let mut prev = 0.0;
            for (j, &b) in g.breakpoints.iter().enumerate() {
                acc += g.values[j].powf(*r) * (b - prev);
                prev = b;
            }
            Ok(acc.powf(1.0 / r))
        }
        SpaceDescriptor::Lorentz { p, q } => {
            if g.tail > 0.0 {
                return Ok(f64::INFINITY);
            }
            if q.is_infinite() {
                let mut sup: f64 = 0.0;
                let mut prev = 0.0;
                for (j, &b) in g.breakpoints.iter().enumerate() {
                    let _ = prev;
                    sup = sup.max(g.values[j] * b.powf(1.0 / p));
                    prev = b;
                }
                Ok(sup)
            } else {
                // int_0^inf t^{q/p - 1} mu^q dt, piecewise exact
                let mut acc = 0.0;
                let mut prev: f64 = 0.0;
                let e = q / p;
                for (j, &b) in g.breakpoints.iter().enumerate() {
                    acc += g.values[j].powf(*q) * (b.powf(e) - prev.powf(e)) / e;
                    prev = b;
                }
                Ok(acc.powf(1.0 / q))
            }
        }
        SpaceDescriptor::Orlicz { phi } => {
            let modular = |k: f64| -> f64 {
                if g.tail > 0.0 && phi.eval(g.tail / k) > 0.0 {
                    return f64::INFINITY;
                }
                let mut acc = 0.0;
                let mut prev = 0.0;
                for (j, &b) in g.breakpoints.iter().enumerate() {
                    acc += phi.eval(g.values[j] / k) * (b - prev);
                    prev = b;
                }
                acc
            };
            luxemburg_bisect(modular, g.sup())
        }
    }
}

/// Shared Luxemburg bisection: the smallest `k` with modular `<= 1`.
/// Bracket initialization expands geometrically from the supremum scale until
/// the modular straddles 1; the bisection stops at width `1e-10 * (1 + k)`.
fn luxemburg_bisect(modular: impl Fn(f64) -> f64, sup_scale: f64) -> Result<f64> {
    let mut k_hi = if sup_scale.is_finite() && sup_scale > 0.0 {
        sup_scale
    } else {
        1.0
    };
    let mut grew = 0;
    while modular(k_hi) > 1.0 {
        k_hi *= 2.0;
        grew += 1;
        if grew > 400 {
            return Ok(f64::INFINITY);
        }
    }
    let mut k_lo = k_hi;
    let mut shrunk = 0;
    loop {
        let candidate = k_lo * 0.5;
        if modular(candidate) > 1.0 {
            break;
        }
        k_lo = candidate;
        shrunk += 1;
        if shrunk > 400 {
            // modular stays <= 1 for arbitrarily small k: zero function
            return Ok(0.0);
        }
    }
    if k_lo == k_hi {
        k_lo = k_hi * 0.5; // modular(k_lo) > 1 from the loop above
    }
    while k_hi - k_lo > 1e-10 * (1.0 + k_hi) {
        let mid = 0.5 * (k_lo + k_hi);
        if modular(mid) <= 1.0 {
            k_hi = mid;
        } else {
            k_lo = mid;
        }
    }
    Ok(k_hi)
}

/// Lower bound on the dilation operator norm, plus whether the analytic
/// `s^{1/r}` shortcut was taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DilationEstimate {
    pub value: f64,
    pub analytic: bool,
}

/// Estimate `||D_{1/s}||_{E -> E}` from below over a probe set; for `Lp` the
/// exact value `s^{1/r}` is returned (flagged analytic).
pub fn dilation_norm_estimate(
    space: &SpaceDescriptor,
    s: f64,
    probes: &[StepFunction],
) -> Result<DilationEstimate> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain(format!("dilation parameter must be positive, got {s}")));
    }
    if probes.is_empty() {
        return Err(Error::domain("dilation estimate needs a nonempty probe set"));
    }
    space.validate()?;
    if let SpaceDescriptor::Lp { r } = space {
        if r.is_finite() {
            return Ok(DilationEstimate {
                value: s.powf(1.0 / r),
                analytic: true,
            });
        }
        return Ok(DilationEstimate {
            value: 1.0,
            analytic: true,
        });
    }
    let mut best: f64 = 0.0;
    let mut usable = 0;
    for g in probes {
        let base = norm(g, space)?;
        if base <= 0.0 || !base.is_finite() {
            continue;
        }
        usable += 1;
        let dilated = norm(&g.dilate(s)?, space)?;
        best = best.max(dilated / base);
    }
    if usable == 0 {
        return Err(Error::domain("dilation estimate: every probe had zero or infinite norm"));
    }
    Ok(DilationEstimate {
        value: best,
        analytic: false,
    })
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
        }
    }
    if a >= b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fb, fm) = (f(a), f(b), f(m));
    let whole = simpson(a, fa, b, fb, fm);
    rec(f, a, fa, b, fb, m, fm, whole, tol, depth)
}
