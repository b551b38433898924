//! Certified majorant constructions for maximal nets of restricted weak
//! type.
//!
//! Given a net of weak types `(p,p)` and `(q,q)`, the projection-ladder
//! construction produces for every projection `f` an operator `a` with
//! `T_alpha(f) <= a` for all maps and `mu_t(a) <= kappa K theta_{p',q'}(t /
//! tau(f))`. The general construction discretizes a positive operator along
//! dyadic spectral levels, applies the projection ladder per distinct level
//! projection, and certifies `mu(a) ≺≺ 4 kappa K S_{p',q'} mu(x)` by exact
//! comparison of the accumulated integrals. Every inequality the
//! construction relies on is re-checked numerically at build time; a
//! violation is a hard error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Tolerance};
use crate::nets::{MaximalNet, WitnessGenerator};
use crate::stepfn::{
    calderon_apply, norm, theta, CalderonEvaluation, SpaceDescriptor, StepFunction,
};
use crate::stepfn::OrliczFunction;
use crate::tracial::{
    cluster_representatives, min_eigenvalue, mu, order_leq, phi_trace, spectral_decompose,
    Projection, TracialOperator, CLUSTER_TOL,
};

/// Interpolation exponents `1 <= p < p' < q' < q <= inf`; when `q = inf` the
/// inner exponent `q'` is forced to `inf` as well.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentWindow {
    pub p: f64,
    pub p_prime: f64,
    #[serde(with = "crate::exponent")]
    pub q_prime: f64,
    #[serde(with = "crate::exponent")]
    pub q: f64,
}

impl ExponentWindow {
    pub fn new(p: f64, p_prime: f64, q_prime: f64, q: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::window(format!("p must be finite and >= 1, got {p}")));
        }
        if !(p_prime > p) || !p_prime.is_finite() {
            return Err(Error::window(format!("need p < p' < inf, got p={p}, p'={p_prime}")));
        }
        if q.is_infinite() {
            return Ok(ExponentWindow {
                p,
                p_prime,
                q_prime: f64::INFINITY,
                q,
            });
        }
        if !(q_prime > p_prime) || !(q > q_prime) {
            return Err(Error::window(format!(
                "need p' < q' < q, got p'={p_prime}, q'={q_prime}, q={q}"
            )));
        }
        Ok(ExponentWindow {
            p,
            p_prime,
            q_prime,
            q,
        })
    }

    /// Window with `q = q' = inf`.
    pub fn infinite(p: f64, p_prime: f64) -> Result<Self> {
        ExponentWindow::new(p, p_prime, f64::INFINITY, f64::INFINITY)
    }

    pub fn has_finite_q(&self) -> bool {
        self.q.is_finite()
    }

    /// Interpolation hypothesis against declared Boyd indices:
    /// `p' < p_E` and (`q = inf` or `q_E < q'`).
    pub fn compatible_with_boyd(&self, boyd: (f64, f64)) -> bool {
        let (pe, qe) = boyd;
        self.p_prime < pe && (self.q.is_infinite() || qe < self.q_prime)
    }
}

/// The constant package of the construction: the weak-type constants, the
/// rescaling constant `kappa`, the geometric sums `gamma` and `delta`, and
/// `K = 4 max(gamma, delta)` (`K = 4 gamma` when `q = inf`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationConstants {
    pub c_p: f64,
    pub c_q: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    pub big_k: f64,
}

/// `gamma_{p,p'} = sum_{k<=0} 2^{(k-1)(1 - p/p')} = 1/(2^{1-p/p'} - 1)`.
pub fn gamma_sum(p: f64, p_prime: f64) -> f64 {
    1.0 / ((1.0 - p / p_prime).exp2() - 1.0)
}

/// `delta_{q,q'} = sum_{k>0} 2^{(k-1)(1 - q/q')} = 1/(1 - 2^{1-q/q'})`.
pub fn delta_sum(q: f64, q_prime: f64) -> f64 {
    1.0 / (1.0 - (1.0 - q / q_prime).exp2())
}

pub fn constants(window: &ExponentWindow, c_p: f64, c_q: f64) -> Result<InterpolationConstants> {
    if !(c_p > 0.0) || !(c_q > 0.0) {
        return Err(Error::domain("weak-type constants must be positive"));
    }
    let p = window.p;
    let q = window.q;
    let p_term = c_p * (1.0 - 2f64.powf(-p)).powf(-1.0 / p);
    let kappa = if q.is_finite() {
        let q_term = c_q * (1.0 - 2f64.powf(-q)).powf(-1.0 / q);
        2f64.powf(1.0 / p) * p_term.max(q_term)
    } else {
        p_term.max(c_q)
    };
    let gamma = gamma_sum(p, window.p_prime);
    let delta = if q.is_finite() {
        delta_sum(q, window.q_prime)
    } else {
        0.0
    };
    let big_k = if q.is_finite() {
        4.0 * gamma.max(delta)
    } else {
        4.0 * gamma
    };
    Ok(InterpolationConstants {
        c_p,
        c_q,
        kappa,
        gamma,
        delta,
        big_k,
    })
}

/// Read the weak-type constants the net declares for this window:
/// the `(p,p)` generator constant and, for finite `q`, the `(q,q)` generator
/// constant (the uniform bound when `q = inf`).
pub fn net_constants(net: &MaximalNet, window: &ExponentWindow) -> Result<(f64, f64)> {
    let c_p = net.witness_generator(window.p)?.constants().1;
    let c_q = if window.has_finite_q() {
        net.witness_generator(window.q)?.constants().1
    } else {
        net.infty_constant()
            .ok_or_else(|| Error::config("q = inf needs a declared uniform bound"))?
    };
    Ok((c_p, c_q))
}

/// Options of the majorant constructions.
#[derive(Clone, Copy, Debug)]
pub struct MajorantOptions {
    /// Tolerance of the mu-bound, witness and trace-bound checks.
    pub tol: Tolerance,
    /// Tolerance of the operator-domination certificate, relative to `||a||`.
    pub domination_tol: Tolerance,
    /// Downward ladder truncation; may be deepened automatically so the
    /// floor piece stays below the certified curve.
    pub k_floor: i32,
    /// Split the input at spectral level 1 and majorize the parts
    /// separately (the sum-space route; off by default).
    pub split_at_one: bool,
}

impl Default for MajorantOptions {
    fn default() -> Self {
        MajorantOptions {
            tol: Tolerance::default(),
            domination_tol: Tolerance {
                rel: 1e-8,
                abs: 1e-12,
            },
            k_floor: -40,
            split_at_one: false,
        }
    }
}

impl MajorantOptions {
    pub fn with_tol(rel: f64) -> Self {
        MajorantOptions {
            tol: Tolerance::with_rel(rel),
            domination_tol: Tolerance {
                rel,
                abs: 1e-12,
            },
            ..Default::default()
        }
    }
}

/// One rung of the projection ladder.
#[derive(Clone, Debug)]
pub struct LadderRung {
    pub k: i32,
    pub e_k: Projection,
    pub d_k: Projection,
    /// Final coefficient of `d_k` inside `a` (kappa-rescaled).
    pub coefficient: f64,
}

/// Certificate margins; negative domination margin magnitudes and
/// non-positive bound margins mean the inequalities hold with slack.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `lambda_min(a - T_alpha) / ||a||` per map, in net order.
    pub domination_margins: Vec<f64>,
    /// `min_alpha  lambda_min(a - T_alpha) / ||a||`; must be `>= -tol`.
    pub domination_margin: f64,
    /// Max relative excess of `mu_t(a)` over the certified curve; `<= tol`.
    pub mu_bound_margin: f64,
    /// Max relative excess of `sigma(e_k^perp)` over its dyadic trace bound.
    pub trace_bound_margin: f64,
}

/// Per-level component of the general dyadic-discretization construction.
#[derive(Clone, Debug)]
pub struct DyadicComponent {
    /// Highest dyadic exponent of the k-range this projection serves.
    pub k_hi: i32,
    /// Exact geometric weight `sum_{k in range} 2^k`.
    pub weight: f64,
    pub f: Projection,
    pub result: MajorantResult,
}

/// The constructed operator `a` with its full audit trail.
#[derive(Clone, Debug)]
pub struct MajorantResult {
    pub a: TracialOperator,
    pub window: ExponentWindow,
    pub constants: InterpolationConstants,
    pub ladder: Vec<LadderRung>,
    /// `e_{-inf}` and its coefficient inside `a` (projection case).
    pub e_floor: Option<Projection>,
    pub floor_coefficient: f64,
    /// Extra top piece `2 kappa e_0^perp` of the `q = inf` form.
    pub top_piece: Option<(Projection, f64)>,
    pub k_floor: i32,
    pub k_max: i32,
    /// `tau(f)` for the projection forms; `tau(supp x)` scale otherwise.
    pub bound_scale: f64,
    pub mu_a: StepFunction,
    pub certificates: CertificateReport,
    pub components: Vec<DyadicComponent>,
}

/// Flat JSON image: constants, ladder `(k, tau(d_k), coefficient)` and
/// certificate margins.
#[derive(Serialize)]
struct MajorantDump<'a> {
    window: &'a ExponentWindow,
    constants: &'a InterpolationConstants,
    k_floor: i32,
    k_max: i32,
    bound_scale: f64,
    ladder: Vec<(i32, f64, f64)>,
    floor_trace: f64,
    floor_coefficient: f64,
    certificates: &'a CertificateReport,
    components: Vec<serde_json::Value>,
}

impl MajorantResult {
    pub fn dump(&self) -> serde_json::Value {
        let ladder = self
            .ladder
            .iter()
            .map(|r| (r.k, r.d_k.trace(), r.coefficient))
            .collect();
        let components = self
            .components
            .iter()
            .map(|c| {
                serde_json::json!({
                    "k_hi": c.k_hi,
                    "weight": c.weight,
                    "projection_trace": c.f.trace(),
                    "ladder": c.result.ladder.iter()
                        .map(|r| (r.k, r.d_k.trace(), r.coefficient))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::to_value(MajorantDump {
            window: &self.window,
            constants: &self.constants,
            k_floor: self.k_floor,
            k_max: self.k_max,
            bound_scale: self.bound_scale,
            ladder,
            floor_trace: self.e_floor.as_ref().map(|e| e.trace()).unwrap_or(0.0),
            floor_coefficient: self.floor_coefficient,
            certificates: &self.certificates,
            components,
        })
        .expect("serializable dump")
    }
}

/// Witness generators shared across a construction so that identical
/// `(f, theta)` requests are answered from the memo.
struct Generators {
    gen_p: WitnessGenerator,
    gen_q: Option<WitnessGenerator>,
}

fn generators_for(net: &MaximalNet, window: &ExponentWindow) -> Result<Generators> {
    let gen_p = net.witness_generator(window.p)?;
    let gen_q = if window.has_finite_q() {
        Some(net.witness_generator(window.q)?)
    } else {
        net.infty_constant().ok_or_else(|| {
            Error::config("majorant with q = inf needs a declared uniform bound")
        })?;
        None
    };
    Ok(Generators { gen_p, gen_q })
}

struct Ladder {
    /// `(k, e_k)` for `k_floor <= k <= k_max`, ascending in `k`.
    e_ks: Vec<(i32, Projection)>,
    k_floor: i32,
    k_max: i32,
}

/// Build the two-sided witness ladder for the rescaled net
/// `T~ = kappa^{-1} T`: upward meets of `(q,q)` witnesses above level 0
/// (trivial beyond the uniform-bound level `k_max`), downward meets of
/// `(p,p)` witnesses from level 0 to the floor, stopping early once the meet
/// hits zero.
fn build_ladder(
    net: &MaximalNet,
    gens: &Generators,
    f: &Projection,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<Ladder> {
    let kappa = consts.kappa;
    let max_norm = net
        .apply_all(f.op())
        .iter()
        .map(|t| t.operator_norm())
        .fold(0.0, f64::max);
    let tilde_norm = max_norm / kappa;
    let algebra = net.algebra();

    let k_max = if window.has_finite_q() {
        tilde_norm.log2().ceil().max(1.0) as i32
    } else {
        0
    };

    // floor deep enough that the floor coefficient 2^{(k_floor-1)p/p'} stays
    // under the certified curve at the far end of the algebra
    let tau_f = f.trace();
    let adaptive = (1.0 + (tau_f / algebra.total_trace()).log2() / window.p).floor() as i32;
    let k_floor_limit = opts.k_floor.min(adaptive);

    let mut e_ks: Vec<(i32, Projection)> = Vec::new();

    // upward side (q < inf): e_{k_max} = 1, then meets downward to k = 1
    let mut current = Projection::identity(algebra);
    if window.has_finite_q() {
        e_ks.push((k_max, current.clone()));
        let gen_q = gens.gen_q.as_ref().expect("finite q has a generator");
        for k in (1..k_max).rev() {
            let witness = gen_q.witness(f.op(), kappa * (k as f64).exp2(), opts.tol)?;
            current = current.meet(&witness)?;
            e_ks.push((k, current.clone()));
        }
    }

    // downward side: p-witnesses for levels <= 0
    let mut k_floor = k_floor_limit;
    for k in (k_floor_limit..=0).rev() {
        let witness = gens.gen_p.witness(f.op(), kappa * (k as f64).exp2(), opts.tol)?;
        current = current.meet(&witness)?;
        e_ks.push((k, current.clone()));
        if current.is_zero() {
            k_floor = k;
            break;
        }
    }

    e_ks.reverse();
    Ok(Ladder {
        e_ks,
        k_floor,
        k_max: if window.has_finite_q() { k_max } else { 0 },
    })
}

/// Dyadic trace bounds of the proof, asserted on every build:
/// `sigma(e_k^perp) <= 2^{-kp} tau(f)` for `k <= 0` and
/// `sigma(e_k^perp) <= 2^{-kq} tau(f)` for `k > 0`.
fn trace_bound_margin(
    ladder: &Ladder,
    window: &ExponentWindow,
    tau_f: f64,
    tol: Tolerance,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for (k, e_k) in &ladder.e_ks {
        let perp = e_k.complement().trace();
        let expo = if *k <= 0 {
            -(*k as f64) * window.p
        } else {
            -(*k as f64) * window.q
        };
        let bound = expo.exp2() * tau_f;
        worst = worst.max((perp - bound) / bound.max(tol.abs));
        if !tol.leq(perp, bound) {
            return Err(Error::certificate(format!(
                "ladder trace bound failed at k = {k}: sigma(e_k^perp) = {perp:.6e} > {bound:.6e}"
            )));
        }
    }
    Ok(worst)
}

fn rungs_from_ladder(
    ladder: &Ladder,
    coefficient: impl Fn(i32) -> f64,
) -> Result<(Vec<LadderRung>, Projection, f64)> {
    let mut rungs = Vec::new();
    let e_floor = ladder.e_ks[0].1.clone();
    for w in ladder.e_ks.windows(2) {
        let (_, ref lo) = w[0];
        let (k, ref hi) = w[1];
        let d = Projection::try_new(hi.op().sub(lo.op())?.symmetrize())?;
        rungs.push(LadderRung {
            k,
            e_k: hi.clone(),
            d_k: d,
            coefficient: coefficient(k),
        });
    }
    // coefficients must be nondecreasing in k for the rearrangement identity
    for w in rungs.windows(2) {
        if w[1].coefficient < w[0].coefficient * (1.0 - 1e-12) {
            return Err(Error::certificate(
                "ladder coefficients are not nondecreasing in k",
            ));
        }
    }
    let floor_trace = e_floor.trace();
    Ok((rungs, e_floor, floor_trace))
}

fn assemble(
    algebra_zero: &TracialOperator,
    rungs: &[LadderRung],
    e_floor: &Projection,
    floor_coefficient: f64,
    top_piece: Option<&(Projection, f64)>,
) -> Result<TracialOperator> {
    let mut a = algebra_zero.clone();
    for r in rungs {
        a = a.add(&r.d_k.op().scale(r.coefficient))?;
    }
    a = a.add(&e_floor.op().scale(floor_coefficient))?;
    if let Some((e, c)) = top_piece {
        a = a.add(&e.op().scale(*c))?;
    }
    Ok(a.symmetrize())
}

/// Check `mu_t(a) <= scale * theta_{pk,qk}(t / tau_scale)` for every piece of
/// `mu(a)` against the right end of the piece (the kernel is nonincreasing,
/// so this bounds the whole piece). Returns the worst relative margin.
fn theta_bound_margin(
    mu_a: &StepFunction,
    pk: f64,
    qk: f64,
    scale: f64,
    tau_scale: f64,
    tol: Tolerance,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for (j, &t_right) in mu_a.breakpoints().iter().enumerate() {
        let v = mu_a.values()[j];
        let bound = scale * theta(pk, qk, t_right / tau_scale)?;
        worst = worst.max((v - bound) / bound.max(tol.abs));
        if !tol.leq(v, bound) {
            return Err(Error::certificate(format!(
                "mu-bound certificate failed at t = {t_right}: mu_t(a) = {v:.9e} > {bound:.9e}"
            )));
        }
    }
    Ok(worst)
}

/// Domination certificate `T_alpha(f) <= a` for every map; reports the
/// normalized minimum eigenvalue of `a - T_alpha` per map.
fn domination_margins(
    net: &MaximalNet,
    input: &TracialOperator,
    a: &TracialOperator,
    tol: Tolerance,
) -> Result<Vec<f64>> {
    let norm_a = a.operator_norm().max(tol.abs);
    let mut margins = Vec::with_capacity(net.maps().len());
    for (alpha, t) in net.apply_all(input).iter().enumerate() {
        let gap = min_eigenvalue(&a.sub(t)?)? / norm_a;
        if gap < -(tol.rel + tol.abs / norm_a) {
            return Err(Error::certificate(format!(
                "domination certificate failed for map {alpha}: min-eig(a - T(x))/||a|| = {gap:.3e}"
            )));
        }
        margins.push(gap);
    }
    Ok(margins)
}

fn min_of(margins: &[f64]) -> f64 {
    margins.iter().copied().fold(f64::INFINITY, f64::min)
}

fn ladder_orthogonality(rungs: &[LadderRung], e_floor: &Projection) -> Result<()> {
    for (i, r) in rungs.iter().enumerate() {
        for s in rungs.iter().skip(i + 1) {
            let prod = r.d_k.op().mul(s.d_k.op())?.frobenius_norm();
            if prod > 1e-10 {
                return Err(Error::certificate(format!(
                    "ladder rungs k={} and k={} are not orthogonal: ||d_k d_l|| = {prod:.3e}",
                    r.k, s.k
                )));
            }
        }
        let prod = r.d_k.op().mul(e_floor.op())?.frobenius_norm();
        if prod > 1e-10 {
            return Err(Error::certificate(format!(
                "ladder rung k={} is not orthogonal to the floor projection",
                r.k
            )));
        }
    }
    Ok(())
}

fn resolution_of_identity(
    rungs: &[LadderRung],
    e_floor: &Projection,
    e_top: &Projection,
) -> Result<()> {
    let mut sum = e_floor.op().clone();
    for r in rungs {
        sum = sum.add(r.d_k.op())?;
    }
    let defect = sum.sub(e_top.op())?.frobenius_norm();
    if defect > 1e-9 {
        return Err(Error::certificate(format!(
            "ladder does not resolve the identity: defect {defect:.3e}"
        )));
    }
    Ok(())
}

/// The projection-ladder majorant for a single projection.
pub fn majorant_for_projection(
    net: &MaximalNet,
    f: &Projection,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<MajorantResult> {
    let gens = generators_for(net, window)?;
    majorant_for_projection_with(net, &gens, f, window, consts, opts)
}

fn majorant_for_projection_with(
    net: &MaximalNet,
    gens: &Generators,
    f: &Projection,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<MajorantResult> {
    if f.is_zero() {
        return Err(Error::domain("majorant needs a nonzero projection"));
    }
    let tau_f = f.trace();
    let kappa = consts.kappa;
    let big_k = consts.big_k;
    let ladder = build_ladder(net, gens, f, window, consts, opts)?;
    let trace_margin = trace_bound_margin(&ladder, window, tau_f, opts.tol)?;

    let coeff = |k: i32| -> f64 {
        let k = k as f64;
        if k <= 0.0 {
            kappa * big_k * ((k - 1.0) * window.p / window.p_prime).exp2()
        } else {
            kappa * big_k * ((k - 1.0) * window.q / window.q_prime).exp2()
        }
    };
    let (rungs, e_floor, _) = rungs_from_ladder(&ladder, coeff)?;
    let floor_coefficient =
        kappa * big_k * (((ladder.k_floor - 1) as f64) * window.p / window.p_prime).exp2();

    // q = inf: the part above level 0 is covered by 2 e_0^perp
    let top_piece = if window.has_finite_q() {
        None
    } else {
        let e0 = &ladder.e_ks.last().expect("ladder nonempty").1;
        Some((e0.complement(), 2.0 * kappa))
    };

    let zero = TracialOperator::zero(net.algebra());
    let a = assemble(&zero, &rungs, &e_floor, floor_coefficient, top_piece.as_ref())?;

    ladder_orthogonality(&rungs, &e_floor)?;
    let e_top = ladder.e_ks.last().expect("nonempty").1.clone();
    resolution_of_identity(&rungs, &e_floor, &e_top)?;

    let mu_a = mu(&a);
    let mu_margin = theta_bound_margin(
        &mu_a,
        window.p_prime,
        window.q_prime,
        kappa * big_k,
        tau_f,
        opts.tol,
    )?;
    let dom_margins = domination_margins(net, f.op(), &a, opts.domination_tol)?;
    let dom_margin = min_of(&dom_margins);

    Ok(MajorantResult {
        a,
        window: *window,
        constants: *consts,
        ladder: rungs,
        e_floor: Some(e_floor),
        floor_coefficient,
        top_piece,
        k_floor: ladder.k_floor,
        k_max: ladder.k_max,
        bound_scale: tau_f,
        mu_a,
        certificates: CertificateReport {
            domination_margins: dom_margins,
            domination_margin: dom_margin,
            mu_bound_margin: mu_margin,
            trace_bound_margin: trace_margin,
        },
        components: Vec::new(),
    })
}

/// The commutative variant: same ladder, coefficients `2^{k+1}`, and the
/// un-primed bound `mu_t(a) <= 4 kappa_{p,q} S_{p,q} mu(f)(t)`.
pub fn majorant_commutative(
    net: &MaximalNet,
    f: &Projection,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<MajorantResult> {
    if f.is_zero() {
        return Err(Error::domain("majorant needs a nonzero projection"));
    }
    let gens = generators_for(net, window)?;
    let tau_f = f.trace();
    let kappa = consts.kappa;
    let ladder = build_ladder(net, &gens, f, window, consts, opts)?;
    let trace_margin = trace_bound_margin(&ladder, window, tau_f, opts.tol)?;

    let coeff = |k: i32| kappa * ((k + 1) as f64).exp2();
    let (mut rungs, e_floor, _) = rungs_from_ladder(&ladder, coeff)?;
    let floor_coefficient = kappa * ((ladder.k_floor + 1) as f64).exp2();
    // q = inf: one synthetic top rung d_1 = 1 - e_0 with coefficient 2^{1+1}
    if !window.has_finite_q() {
        let e0 = ladder.e_ks.last().expect("nonempty").1.clone();
        let d1 = e0.complement();
        if !d1.is_zero() {
            rungs.push(LadderRung {
                k: 1,
                e_k: Projection::identity(net.algebra()),
                d_k: d1,
                coefficient: kappa * 4.0,
            });
        }
    }

    // the commutative hypothesis: off-diagonal rung interactions vanish
    let mut pieces: Vec<Projection> = rungs.iter().map(|r| r.d_k.clone()).collect();
    pieces.push(e_floor.clone());
    for t in net.apply_all(f.op()) {
        let scale = t.operator_norm().max(1.0);
        for (i, di) in pieces.iter().enumerate() {
            for dj in pieces.iter().skip(i + 1) {
                let residue = di.op().mul(&t)?.mul(dj.op())?.frobenius_norm();
                if residue > 1e-9 * scale {
                    return Err(Error::domain(format!(
                        "commutative majorant rejected: d_k T(f) d_l residue {residue:.3e} \
                         violates the commutative hypothesis"
                    )));
                }
            }
        }
    }

    let zero = TracialOperator::zero(net.algebra());
    let a = assemble(&zero, &rungs, &e_floor, floor_coefficient, None)?;
    let mu_a = mu(&a);
    let mu_margin = theta_bound_margin(&mu_a, window.p, window.q, 4.0 * kappa, tau_f, opts.tol)?;
    let dom_margins = domination_margins(net, f.op(), &a, opts.domination_tol)?;
    let dom_margin = min_of(&dom_margins);

    Ok(MajorantResult {
        a,
        window: *window,
        constants: *consts,
        ladder: rungs,
        e_floor: Some(e_floor),
        floor_coefficient,
        top_piece: None,
        k_floor: ladder.k_floor,
        k_max: ladder.k_max.max(if window.has_finite_q() { 0 } else { 1 }),
        bound_scale: tau_f,
        mu_a,
        certificates: CertificateReport {
            domination_margins: dom_margins,
            domination_margin: dom_margin,
            mu_bound_margin: mu_margin,
            trace_bound_margin: trace_margin,
        },
        components: Vec::new(),
    })
}

/// Dyadic spectral data of a positive operator: distinct level projections
/// `f = lambda_(2^k, inf)(x)` with the exact geometric weight of the k-range
/// each one serves.
struct DyadicLevels {
    /// `(k_hi, weight, cumulative projection)`, highest level first.
    groups: Vec<(i32, f64, Projection)>,
    xhat: TracialOperator,
}

fn dyadic_levels(x: &TracialOperator, tol: Tolerance) -> Result<DyadicLevels> {
    let spec = spectral_decompose(x)?;
    let slack = tol.abs + tol.rel * x.operator_norm();
    // clustered, dyadically snapped eigenvalues with their eigenvectors
    let mut entries: Vec<(f64, usize, usize)> = Vec::new(); // (rep, block, column)
    for (b, bs) in spec.blocks.iter().enumerate() {
        let reps = cluster_representatives(&bs.eigenvalues, CLUSTER_TOL);
        for (col, &rep) in reps.iter().enumerate() {
            if rep < -slack {
                return Err(Error::domain(format!(
                    "general majorant needs a positive operator; found eigenvalue {rep}"
                )));
            }
            if rep > slack {
                entries.push((dyadic_snap(rep), b, col));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::domain("general majorant needs a nonzero operator"));
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));

    // c(lambda): the largest k with 2^k < lambda
    let level_of = |lambda: f64| -> i32 {
        let l = lambda.log2();
        let r = l.round();
        if ((r).exp2() - lambda).abs() <= CLUSTER_TOL * r.exp2().max(1.0) {
            r as i32 - 1
        } else {
            l.floor() as i32
        }
    };

    let algebra = x.algebra().clone();
    let mut groups: Vec<(i32, f64, Projection)> = Vec::new();
    let mut cumulative = TracialOperator::zero(&algebra);
    let mut xhat = TracialOperator::zero(&algebra);
    let mut idx = 0;
    while idx < entries.len() {
        let level = level_of(entries[idx].0);
        // absorb every eigenvalue in this dyadic level
        while idx < entries.len() && level_of(entries[idx].0) == level {
            let (_, b, col) = entries[idx];
            let colv = spec.blocks[b].vectors.column(col);
            let outer = colv * colv.adjoint();
            let mut blocks: Vec<_> = algebra
                .blocks
                .iter()
                .map(|bs| nalgebra::DMatrix::zeros(bs.dim, bs.dim))
                .collect();
            blocks[b] = outer;
            let term = TracialOperator::from_blocks(algebra.clone(), blocks)?;
            cumulative = cumulative.add(&term)?;
            xhat = xhat.add(&term.scale(((level + 1) as f64).exp2()))?;
            idx += 1;
        }
        let projection = Projection::try_new(cumulative.clone().symmetrize())?;
        groups.push((level, 0.0, projection));
    }
    // exact geometric weights: sum_{k in (next_level, level]} 2^k,
    // with the full tail 2^{level+1} for the lowest group
    let n = groups.len();
    for i in 0..n {
        let hi = groups[i].0;
        let w = if i + 1 < n {
            let lo = groups[i + 1].0;
            ((hi + 1) as f64).exp2() - ((lo + 1) as f64).exp2()
        } else {
            ((hi + 1) as f64).exp2()
        };
        groups[i].1 = w;
    }
    Ok(DyadicLevels {
        groups,
        xhat: xhat.symmetrize(),
    })
}

fn dyadic_snap(v: f64) -> f64 {
    let r = v.log2().round();
    let p = r.exp2();
    if (v - p).abs() <= CLUSTER_TOL * p.max(1.0) {
        p
    } else {
        v
    }
}

/// The general majorant: dyadic spectral discretization
/// `xhat = sum_k 2^k f_k`, a projection majorant per distinct level
/// projection, and the submajorization certificate
/// `mu(a) ≺≺ 4 kappa K S_{p',q'} mu(x)`.
pub fn majorant_general(
    net: &MaximalNet,
    x: &TracialOperator,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<MajorantResult> {
    if !x.is_hermitian() {
        return Err(Error::domain("general majorant needs a Hermitian positive operator"));
    }
    if opts.split_at_one {
        return majorant_split(net, x, window, consts, opts);
    }
    let gens = generators_for(net, window)?;
    majorant_general_with(net, &gens, x, window, consts, opts)
}

fn majorant_general_with(
    net: &MaximalNet,
    gens: &Generators,
    x: &TracialOperator,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<MajorantResult> {
    let levels = dyadic_levels(x, opts.tol)?;

    // sandwich x <= xhat <= 2x
    if !order_leq(x, &levels.xhat, opts.tol)? || !order_leq(&levels.xhat, &x.scale(2.0), opts.tol)? {
        return Err(Error::certificate(
            "dyadic discretization violates x <= xhat <= 2x",
        ));
    }
    // mu(xhat) = sum_k 2^k mu(f_k), exactly
    let mut expected = StepFunction::zero();
    for (_, w, f) in &levels.groups {
        expected = expected.add(&StepFunction::indicator(f.trace())?.scale(*w)?);
    }
    if !mu(&levels.xhat).approx_eq(&expected, 1e-9, 1e-12) {
        return Err(Error::certificate(
            "dyadic discretization violates mu(xhat) = sum 2^k mu(f_k)",
        ));
    }

    let mut a = TracialOperator::zero(net.algebra());
    let mut components = Vec::new();
    for (k_hi, weight, f) in &levels.groups {
        let sub = majorant_for_projection_with(net, gens, f, window, consts, opts)?;
        a = a.add(&sub.a.scale(*weight))?;
        components.push(DyadicComponent {
            k_hi: *k_hi,
            weight: *weight,
            f: f.clone(),
            result: sub,
        });
    }
    a = a.symmetrize();
    let mu_a = mu(&a);

    let dom_margins = domination_margins(net, x, &a, opts.domination_tol)?;
    let dom_margin = min_of(&dom_margins);
    let scale = 4.0 * consts.kappa * consts.big_k;
    let cal = calderon_apply(&mu(x), window.p_prime, window.q_prime)?.scaled(scale);
    let mu_margin = submajorization_margin(&mu_a, &cal, opts.tol)?;
    let trace_margin = components
        .iter()
        .map(|c| c.result.certificates.trace_bound_margin)
        .fold(f64::NEG_INFINITY, f64::max);

    let k_floor = components.iter().map(|c| c.result.k_floor).min().unwrap_or(0);
    let k_max = components.iter().map(|c| c.result.k_max).max().unwrap_or(0);
    Ok(MajorantResult {
        a,
        window: *window,
        constants: *consts,
        ladder: Vec::new(),
        e_floor: None,
        floor_coefficient: 0.0,
        top_piece: None,
        k_floor,
        k_max,
        bound_scale: mu(x).support_end().unwrap_or(0.0),
        mu_a,
        certificates: CertificateReport {
            domination_margins: dom_margins,
            domination_margin: dom_margin,
            mu_bound_margin: mu_margin,
            trace_bound_margin: trace_margin,
        },
        components,
    })
}

/// Optional sum-space route: split at spectral level 1 and majorize the two
/// parts separately; the certificate constant stays `4 kappa K`.
fn majorant_split(
    net: &MaximalNet,
    x: &TracialOperator,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<MajorantResult> {
    let spec = spectral_decompose(x)?;
    let big = spec.functional_calculus(x.algebra(), |v| if v > 1.0 { v } else { 0.0 });
    let small = x.sub(&big)?.symmetrize();
    let inner = MajorantOptions {
        split_at_one: false,
        ..*opts
    };
    let gens = generators_for(net, window)?;
    let mut parts = Vec::new();
    for part in [big, small] {
        if part.operator_norm() > opts.tol.abs {
            parts.push(majorant_general_with(net, &gens, &part, window, consts, &inner)?);
        }
    }
    if parts.is_empty() {
        return Err(Error::domain("general majorant needs a nonzero operator"));
    }
    let mut a = TracialOperator::zero(net.algebra());
    let mut components = Vec::new();
    for p in &parts {
        a = a.add(&p.a)?;
        components.extend(p.components.iter().cloned());
    }
    a = a.symmetrize();
    let mu_a = mu(&a);
    let dom_margins = domination_margins(net, x, &a, opts.domination_tol)?;
    let dom_margin = min_of(&dom_margins);
    let scale = 4.0 * consts.kappa * consts.big_k;
    let cal = calderon_apply(&mu(x), window.p_prime, window.q_prime)?.scaled(scale);
    let mu_margin = submajorization_margin(&mu_a, &cal, opts.tol)?;
    Ok(MajorantResult {
        a,
        window: *window,
        constants: *consts,
        ladder: Vec::new(),
        e_floor: None,
        floor_coefficient: 0.0,
        top_piece: None,
        k_floor: parts.iter().map(|p| p.k_floor).min().unwrap_or(0),
        k_max: parts.iter().map(|p| p.k_max).max().unwrap_or(0),
        bound_scale: mu(x).support_end().unwrap_or(0.0),
        mu_a,
        certificates: CertificateReport {
            domination_margins: dom_margins,
            domination_margin: dom_margin,
            mu_bound_margin: mu_margin,
            trace_bound_margin: parts
                .iter()
                .map(|p| p.certificates.trace_bound_margin)
                .fold(f64::NEG_INFINITY, f64::max),
        },
        components,
    })
}

/// `int_0^t mu(a) <= C(t)` at every breakpoint of `mu(a)`; the difference is
/// concave on each linear piece of the left side, so breakpoint checks are
/// exhaustive. Returns the worst relative margin.
fn submajorization_margin(
    mu_a: &StepFunction,
    cal: &CalderonEvaluation,
    tol: Tolerance,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for &t in mu_a.breakpoints() {
        let lhs = mu_a.integral_to(t);
        let rhs = cal.cumulative(t);
        worst = worst.max((lhs - rhs) / rhs.max(tol.abs));
        if !tol.leq(lhs, rhs) {
            return Err(Error::certificate(format!(
                "submajorization certificate failed at t = {t}: {lhs:.9e} > {rhs:.9e}"
            )));
        }
    }
    Ok(worst)
}

/// Sandwich bounds for the maximal-net `l^inf` norm in the space `E`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LinfBounds {
    /// `max_alpha ||T_alpha(x)||_E`, always a valid lower bound.
    pub lower: f64,
    /// `||a||_E` for the constructed majorant.
    pub upper: f64,
    /// `4 kappa K ||S_{p',q'} mu(x)||_E`, the certified cap on `upper`.
    pub certified: f64,
}

/// Majorant-based sandwich for `||(T_alpha(x))||_{E(N; l^inf)}`.
pub fn linf_norm_bounds(
    net: &MaximalNet,
    x: &TracialOperator,
    space: &SpaceDescriptor,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<LinfBounds> {
    space.validate()?;
    let boyd = space
        .boyd()
        .ok_or_else(|| Error::config("space needs declared Boyd indices"))?;
    if !window.compatible_with_boyd(boyd) {
        return Err(Error::window(format!(
            "window (p'={}, q'={}) incompatible with Boyd indices ({}, {})",
            window.p_prime, window.q_prime, boyd.0, boyd.1
        )));
    }
    let result = majorant_general(net, x, window, consts, opts)?;
    let upper = norm(&result.mu_a, space)?;
    let mut lower: f64 = 0.0;
    for t in net.apply_all(x) {
        lower = lower.max(norm(&mu(&t), space)?);
    }
    let scale = 4.0 * consts.kappa * consts.big_k;
    let certified = calderon_apply(&mu(x), window.p_prime, window.q_prime)?
        .scaled(scale)
        .norm(space)?;
    if !opts.tol.leq(lower, upper) {
        return Err(Error::certificate(format!(
            "l-inf sandwich violated: lower {lower:.6e} > upper {upper:.6e}"
        )));
    }
    if !opts.tol.leq(upper, certified) {
        return Err(Error::certificate(format!(
            "l-inf certified cap violated: upper {upper:.6e} > certified {certified:.6e}"
        )));
    }
    Ok(LinfBounds {
        lower,
        upper,
        certified,
    })
}

/// The two generalized moments compared by the construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OrliczMoments {
    /// `sigma(Phi(a))`.
    pub lhs: f64,
    /// `tau(Phi(x))`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Build the majorant and compare generalized moments:
/// `sigma(Phi(a))` against `tau(Phi(x))`.
pub fn orlicz_moment_check(
    net: &MaximalNet,
    x: &TracialOperator,
    phi: &OrliczFunction,
    window: &ExponentWindow,
    consts: &InterpolationConstants,
    opts: &MajorantOptions,
) -> Result<OrliczMoments> {
    let (p_phi, q_phi) = phi
        .indices
        .ok_or_else(|| Error::config("orlicz moment check needs declared Phi indices"))?;
    if !(window.p < p_phi) || !(window.q.is_infinite() || q_phi < window.q) {
        return Err(Error::config(format!(
            "Phi indices ({p_phi}, {q_phi}) incompatible with window (p={}, q={})",
            window.p, window.q
        )));
    }
    if !window.compatible_with_boyd((p_phi, q_phi)) {
        return Err(Error::config(format!(
            "Phi indices ({p_phi}, {q_phi}) incompatible with inner window (p'={}, q'={})",
            window.p_prime, window.q_prime
        )));
    }
    let samples: Vec<f64> = (-8..8).map(|i| (i as f64 * 0.5).exp2()).collect();
    if !phi.check_delta2(&samples, opts.tol) {
        return Err(Error::config("declared Delta_2 constant fails the sampled check"));
    }
    let result = majorant_general(net, x, window, consts, opts)?;
    let lhs = phi_trace(&result.a, phi, opts.tol)?;
    let rhs = phi_trace(x, phi, opts.tol)?;
    let ratio = lhs / rhs;
    if !ratio.is_finite() {
        return Err(Error::certificate(format!(
            "orlicz moment ratio is not finite: {lhs} / {rhs}"
        )));
    }
    Ok(OrliczMoments { lhs, rhs, ratio })
}
