#![allow(dead_code)]

//! Shared oracles for the integration suites. Everything here is an
//! independent computation path: quadrature of defining integrals instead of
//! closed forms, brute-force enumeration instead of spectral calculus.

use ncmax::stepfn::StepFunction;
use rand_chacha::ChaCha12Rng;

pub fn seeded(n: u64) -> ChaCha12Rng {
    use rand::SeedableRng;
    ChaCha12Rng::seed_from_u64(n)
}

/// Adaptive Simpson quadrature, local to the test suite.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn s(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
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
        let left = s(a, fa, m, fm, flm);
        let right = s(m, fm, b, fb, frm);
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
    rec(f, a, fa, b, fb, m, fm, s(a, fa, b, fb, fm), tol, depth)
}

/// `S_{p,q} g (t)` by adaptive quadrature of the defining integrals,
/// performed in log coordinates and split at the breakpoints of `g` so each
/// segment is smooth. Requires `g` with vanishing tail.
pub fn calderon_defining_quadrature(g: &StepFunction, p: f64, q: f64, t: f64) -> f64 {
    assert!(g.tail() == 0.0 && t > 0.0);
    let support_end = g.support_end().unwrap_or(0.0);
    if support_end == 0.0 {
        return 0.0;
    }
    // integration nodes in log space, split at breakpoints
    let mut cuts: Vec<f64> = g.breakpoints().iter().map(|b| b.ln()).collect();
    cuts.push(t.ln());
    cuts.sort_by(f64::total_cmp);

    // first term: (1/p) t^{-1/p} \int_0^t s^{1/p} g(s) ds/s
    let v_hi = t.ln();
    let v_lo = (v_hi - 90.0 * p).min(v_hi - 1.0);
    let mut nodes = vec![v_lo];
    nodes.extend(cuts.iter().copied().filter(|&v| v > v_lo && v < v_hi));
    nodes.push(v_hi);
    let integrand1 = |v: f64| (v / p).exp() * g.value_at(v.exp());
    let mut term1 = 0.0;
    for w in nodes.windows(2) {
        term1 += simpson(&integrand1, w[0], w[1], 1e-13, 50);
    }
    term1 *= t.powf(-1.0 / p) / p;

    // second term: (1/q) t^{-1/q} \int_t^inf s^{1/q} g(s) ds/s
    let term2 = if q.is_finite() && t < support_end {
        let v_lo = t.ln();
        let v_hi = support_end.ln();
        let mut nodes = vec![v_lo];
        nodes.extend(cuts.iter().copied().filter(|&v| v > v_lo && v < v_hi));
        nodes.push(v_hi);
        let integrand2 = |v: f64| (v / q).exp() * g.value_at(v.exp());
        let mut acc = 0.0;
        for w in nodes.windows(2) {
            acc += simpson(&integrand2, w[0], w[1], 1e-13, 50);
        }
        acc * t.powf(-1.0 / q) / q
    } else {
        0.0
    };
    term1 + term2
}
