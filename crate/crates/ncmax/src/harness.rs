//! Experiment harness: random instance generation, certificate-verification
//! campaigns, the Doob constant sweep, Orlicz moment reports and
//! deterministic CSV/JSON emission.
//!
//! Determinism contract: a fixed config produces bit-identical report bytes.
//! Per-trial randomness is derived from the config seed through splitmix64,
//! so trials are independent and could run in any order.

use std::io::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::majorant::{
    constants, majorant_commutative, majorant_for_projection, majorant_general, net_constants,
    ExponentWindow, MajorantOptions, MajorantResult,
};
use crate::nets::{MaximalNet, NetDescriptor};
use crate::stepfn::{norm, OrliczFunction, SpaceDescriptor};
use crate::tracial::{mu, phi_trace, Algebra};

/// Random instance generators used by campaigns and tests.
pub mod generate {
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::Rng;

    use crate::stepfn::StepFunction;
    use crate::tracial::{spectral_decompose, Algebra, Projection, TracialOperator};

    /// Standard normal via Box-Muller; deterministic given the generator.
    fn normal(rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let v: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        (-2.0 * u.ln()).sqrt() * v.cos()
    }

    fn gaussian_block(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| Complex64::new(normal(rng), normal(rng)))
    }

    pub fn random_hermitian(algebra: &Algebra, rng: &mut impl Rng) -> TracialOperator {
        let blocks = algebra
            .blocks
            .iter()
            .map(|b| {
                let g = gaussian_block(b.dim, rng);
                (&g + g.adjoint()).map(|z| z * 0.5)
            })
            .collect();
        TracialOperator::from_blocks(algebra.clone(), blocks).expect("shapes match")
    }

    /// `x = z* z` with i.i.d. complex Gaussian `z`, normalized so that
    /// `||x||_inf` lands in `[1/2, 2]`.
    pub fn random_psd(algebra: &Algebra, rng: &mut impl Rng) -> TracialOperator {
        let blocks: Vec<DMatrix<Complex64>> = algebra
            .blocks
            .iter()
            .map(|b| {
                let z = gaussian_block(b.dim, rng);
                z.adjoint() * z
            })
            .collect();
        let x = TracialOperator::from_blocks(algebra.clone(), blocks)
            .expect("shapes match")
            .symmetrize();
        let target = rng.random_range(0.5..2.0);
        let n = x.operator_norm();
        x.scale(target / n.max(1e-300))
    }

    /// Spectral projection of a random Hermitian onto its top-k eigenvectors,
    /// k uniform per block, nonzero overall.
    pub fn random_projection(algebra: &Algebra, rng: &mut impl Rng) -> Projection {
        loop {
            let h = random_hermitian(algebra, rng);
            let spec = spectral_decompose(&h).expect("hermitian by construction");
            let mut total = 0usize;
            let mut blocks = Vec::new();
            for (b, bs) in spec.blocks.iter().enumerate() {
                let dim = algebra.blocks[b].dim;
                let k = rng.random_range(0..=dim);
                total += k;
                let mut m = DMatrix::<Complex64>::zeros(dim, dim);
                for i in 0..k {
                    let col = bs.vectors.column(i);
                    m += col * col.adjoint();
                }
                blocks.push(m);
            }
            if total == 0 {
                continue;
            }
            let op = TracialOperator::from_blocks(algebra.clone(), blocks)
                .expect("shapes match")
                .symmetrize();
            return Projection::try_new(op).expect("sum of eigenprojections");
        }
    }

    /// Diagonal 0/1 projection (nonzero, proper) for commutative instances.
    pub fn random_diagonal_projection(algebra: &Algebra, rng: &mut impl Rng) -> Projection {
        let n = algebra.total_dim();
        loop {
            let entries: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                .collect();
            let ones = entries.iter().filter(|&&e| e == 1.0).count();
            if ones == 0 {
                continue;
            }
            let op = TracialOperator::diagonal(algebra, &entries).expect("entries sized");
            return Projection::try_new(op).expect("diagonal 0/1");
        }
    }

    /// PSD operator whose spectrum spans at least `min_levels` distinct
    /// dyadic levels.
    pub fn random_multilevel_psd(
        algebra: &Algebra,
        rng: &mut impl Rng,
        min_levels: usize,
    ) -> TracialOperator {
        let n = algebra.total_dim();
        let min_levels = min_levels.min(n);
        for _ in 0..200 {
            let exponents: Vec<f64> = (0..n).map(|_| rng.random_range(-3.4..1.2)).collect();
            let mut levels: Vec<i32> = exponents.iter().map(|u| u.floor() as i32).collect();
            levels.sort_unstable();
            levels.dedup();
            if levels.len() < min_levels {
                continue;
            }
            // random unitary conjugation per block
            let mut eigs = exponents.iter().map(|u| u.exp2()).collect::<Vec<_>>();
            eigs.sort_by(|a, b| b.total_cmp(a));
            let mut off = 0;
            let mut blocks = Vec::new();
            for b in &algebra.blocks {
                let g = gaussian_block(b.dim, rng);
                let u = g.qr().q();
                let d = DMatrix::from_fn(b.dim, b.dim, |i, j| {
                    if i == j {
                        Complex64::new(eigs[off + i], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                off += b.dim;
                blocks.push(&u * d * u.adjoint());
            }
            return TracialOperator::from_blocks(algebra.clone(), blocks)
                .expect("shapes match")
                .symmetrize();
        }
        // deterministic fallback spread
        let spread: Vec<f64> = (0..n)
            .map(|i| (-3.0 + 4.0 * i as f64 / n.max(2) as f64).exp2())
            .collect();
        TracialOperator::diagonal(algebra, &spread).expect("sized")
    }

    /// Random nonincreasing step function with a handful of pieces.
    pub fn random_step(rng: &mut impl Rng) -> StepFunction {
        let n = rng.random_range(1..6usize);
        let mut t = 0.0;
        let mut v = rng.random_range(0.5..4.0);
        let mut pieces = Vec::new();
        for _ in 0..n {
            t += rng.random_range(0.1..2.0);
            pieces.push((t, v));
            v *= rng.random_range(0.2..0.95);
        }
        let mut prev = 0.0;
        let lens: Vec<(f64, f64)> = pieces
            .iter()
            .map(|&(end, val)| {
                let l = end - prev;
                prev = end;
                (l, val)
            })
            .collect();
        StepFunction::from_pieces(&lens).expect("positive lengths, sorted values")
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed of trial `i` under master seed `s`.
pub fn trial_seed(s: u64, i: u64) -> u64 {
    splitmix64(s ^ splitmix64(i.wrapping_add(0xA5A5_5A5A_0F0F_F0F0)))
}

/// 17-significant-digit decimal image, deterministic; infinities and NaN
/// print as `inf`/`-inf`/`nan`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Exponent window in config files; `q` defaults to `inf`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WindowSpec {
    pub p: f64,
    pub p_prime: f64,
    #[serde(default = "infinity", with = "crate::exponent")]
    pub q: f64,
    #[serde(default)]
    pub q_prime: Option<f64>,
}

fn infinity() -> f64 {
    f64::INFINITY
}

impl WindowSpec {
    pub fn window(&self) -> Result<ExponentWindow> {
        if self.q.is_infinite() {
            ExponentWindow::infinite(self.p, self.p_prime)
        } else {
            let q_prime = self.q_prime.ok_or_else(|| {
                Error::config("finite q needs an explicit q_prime in the window spec")
            })?;
            ExponentWindow::new(self.p, self.p_prime, q_prime, self.q)
        }
    }
}

/// Space in config files; only the power Orlicz family is expressible here.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    Lp { r: f64 },
    Lorentz { p: f64, q: f64 },
    OrliczPower { r: f64 },
}

impl SpaceSpec {
    pub fn descriptor(&self) -> Result<SpaceDescriptor> {
        Ok(match self {
            SpaceSpec::Lp { r } => SpaceDescriptor::Lp { r: *r },
            SpaceSpec::Lorentz { p, q } => SpaceDescriptor::Lorentz { p: *p, q: *q },
            SpaceSpec::OrliczPower { r } => SpaceDescriptor::Orlicz {
                phi: OrliczFunction::power(*r)?,
            },
        })
    }
}

/// Negative-control corruption of a net.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Corruption {
    /// Overwrite the declared M-weak constant.
    DeclaredC1 { value: f64 },
    /// Append a scaling map while keeping the declared uniform bound.
    ScaledMap { factor: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignMode {
    /// Random projections through the projection-ladder construction.
    #[default]
    Projection,
    /// Random PSD operators through the general construction.
    General,
    /// Diagonal projections through the commutative construction.
    Commutative,
}

/// Full experiment description; same config, same bytes out.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u32,
    pub algebra: Algebra,
    pub net: NetDescriptor,
    pub window: WindowSpec,
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_k_floor")]
    pub k_floor: i32,
    #[serde(default)]
    pub mode: CampaignMode,
    #[serde(default)]
    pub corrupt: Option<Corruption>,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_k_floor() -> i32 {
    -40
}

impl ExperimentConfig {
    pub fn build_net(&self) -> Result<MaximalNet> {
        let mut net = self.net.build(&self.algebra)?;
        match self.corrupt {
            Some(Corruption::DeclaredC1 { value }) => net = net.with_declared_c1(value),
            Some(Corruption::ScaledMap { factor }) => net = net.with_scaled_map(factor),
            None => {}
        }
        Ok(net)
    }

    pub fn options(&self) -> MajorantOptions {
        let mut opts = MajorantOptions::with_tol(self.tol);
        opts.k_floor = self.k_floor;
        opts
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub trial: u32,
    pub seed: u64,
    pub input_trace: f64,
    pub rungs: usize,
    pub domination_margin: f64,
    pub mu_bound_margin: f64,
    pub trace_bound_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CampaignReport {
    pub config_seed: u64,
    pub trials: u32,
    pub mode: CampaignMode,
    pub rows: Vec<TrialRow>,
    pub min_domination_margin: f64,
    pub median_domination_margin: f64,
    pub max_mu_bound_margin: f64,
    pub failures: u32,
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Build majorants for `trials` random instances and record certificate
/// margins. Any certificate violation aborts with the reproduction seed in
/// the error message.
///
/// Trials are independent: each one rebuilds the net, so witness memo tables
/// are trial-local and the loop could run in any order (the rows are in
/// trial-index order regardless).
pub fn run_verification_campaign(config: &ExperimentConfig) -> Result<CampaignReport> {
    let window = config.window.window()?;
    let opts = config.options();
    if config.mode == CampaignMode::Commutative && !config.algebra.is_commutative() {
        return Err(Error::config("commutative campaign needs a commutative algebra"));
    }
    // declared structural properties, spot-checked once per campaign
    {
        let net = config.build_net()?;
        let mut rng = ChaCha12Rng::seed_from_u64(trial_seed(config.seed, u64::MAX));
        net.spot_check(&mut rng, 3, opts.tol)?;
    }

    let mut rows = Vec::with_capacity(config.trials as usize);
    for trial in 0..config.trials {
        let seed = trial_seed(config.seed, trial as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let net = config.build_net()?;
        let (c_p, c_q) = net_constants(&net, &window)?;
        let consts = constants(&window, c_p, c_q)?;
        let outcome: Result<(f64, MajorantResult)> = (|| match config.mode {
            CampaignMode::Projection => {
                let f = generate::random_projection(&config.algebra, &mut rng);
                let m = majorant_for_projection(&net, &f, &window, &consts, &opts)?;
                Ok((f.trace(), m))
            }
            CampaignMode::General => {
                let x = generate::random_psd(&config.algebra, &mut rng);
                let m = majorant_general(&net, &x, &window, &consts, &opts)?;
                Ok((x.trace_real(), m))
            }
            CampaignMode::Commutative => {
                let f = generate::random_diagonal_projection(&config.algebra, &mut rng);
                let m = majorant_commutative(&net, &f, &window, &consts, &opts)?;
                Ok((f.trace(), m))
            }
        })();
        match outcome {
            Ok((input_trace, m)) => rows.push(TrialRow {
                trial,
                seed,
                input_trace,
                rungs: if m.components.is_empty() {
                    m.ladder.len()
                } else {
                    m.components.iter().map(|c| c.result.ladder.len()).sum()
                },
                domination_margin: m.certificates.domination_margin,
                mu_bound_margin: m.certificates.mu_bound_margin,
                trace_bound_margin: m.certificates.trace_bound_margin,
            }),
            Err(Error::Certificate(msg)) => {
                return Err(Error::certificate(format!(
                    "trial {trial} (seed {seed}, master seed {}): {msg}",
                    config.seed
                )));
            }
            Err(e) => return Err(e),
        }
    }

    let mut doms: Vec<f64> = rows.iter().map(|r| r.domination_margin).collect();
    doms.sort_by(f64::total_cmp);
    let min_dom = doms.first().copied().unwrap_or(0.0);
    let max_mu = rows
        .iter()
        .map(|r| r.mu_bound_margin)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CampaignReport {
        config_seed: config.seed,
        trials: config.trials,
        mode: config.mode,
        median_domination_margin: median(&doms),
        min_domination_margin: min_dom,
        max_mu_bound_margin: if rows.is_empty() { 0.0 } else { max_mu },
        failures: 0,
        rows,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepRecord {
    pub p: f64,
    pub p_prime: f64,
    /// Majorant-based upper bound max ||a||_p / ||x||_p over the trials; an
    /// upper bound on the l-inf norm ratio, not the infimum itself.
    pub empirical_majorant_ratio: f64,
    /// `4 kappa K ||S_{p',inf}||_{L^p}` via the Hardy bound.
    pub certified_bound: f64,
    pub margin: f64,
    /// Wall-clock milliseconds; excluded from deterministic emission.
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    /// Least-squares slope of `log certified` against `log (p - 1)`.
    pub certified_slope: f64,
}

/// Doob-style sweep over a grid of `p in (1, 2]` with the midpoint recipe
/// `p' = (1 + p)/2` on the `(1, inf)` window.
pub fn doob_sweep(config: &ExperimentConfig, p_grid: &[f64]) -> Result<SweepReport> {
    if p_grid.is_empty() {
        return Err(Error::config("doob sweep needs a nonempty p grid"));
    }
    for &p in p_grid {
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::config(format!("doob sweep grid must lie in (1, 2], got {p}")));
        }
    }
    if !matches!(
        config.net,
        NetDescriptor::ConditionalExpectation { .. }
            | NetDescriptor::DyadicMartingale { .. }
            | NetDescriptor::DyadicPinching { .. }
    ) {
        return Err(Error::config("doob sweep needs a conditional-expectation net"));
    }
    let net = config.build_net()?;
    let opts = config.options();
    let mut records = Vec::new();
    for &p in p_grid {
        let start = std::time::Instant::now();
        let p_prime = 0.5 * (1.0 + p);
        let window = ExponentWindow::infinite(1.0, p_prime)?;
        let (c_p, c_q) = net_constants(&net, &window)?;
        let consts = constants(&window, c_p, c_q)?;
        // Hardy bound for S_{p',inf} on L^p
        let hardy = p / (p - p_prime);
        let certified = 4.0 * consts.kappa * consts.big_k * hardy;
        let space = SpaceDescriptor::Lp { r: p };
        let mut empirical: f64 = 0.0;
        for trial in 0..config.trials {
            let seed = trial_seed(config.seed ^ p.to_bits(), trial as u64);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let x = generate::random_psd(&config.algebra, &mut rng);
            let m = majorant_general(&net, &x, &window, &consts, &opts)?;
            let ratio = norm(&m.mu_a, &space)? / norm(&mu(&x), &space)?;
            empirical = empirical.max(ratio);
        }
        if empirical > certified {
            return Err(Error::certificate(format!(
                "doob sweep: empirical ratio {empirical} exceeds certified bound {certified} at p = {p}"
            )));
        }
        records.push(SweepRecord {
            p,
            p_prime,
            empirical_majorant_ratio: empirical,
            certified_bound: certified,
            margin: certified - empirical,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    // slope of log(certified) on log(p - 1)
    let xs: Vec<f64> = records.iter().map(|r| (r.p - 1.0).ln()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.certified_bound.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    Ok(SweepReport {
        records,
        certified_slope: slope,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrliczRow {
    pub trial: u32,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrliczReport {
    pub phi_power: f64,
    pub rows: Vec<OrliczRow>,
    pub max_ratio: f64,
    /// Squared certified L^r constant dominating every ratio when
    /// `Phi(t) = t^r`.
    pub certified_power: f64,
}

/// Orlicz moment campaign with `Phi(t) = t^r`.
pub fn orlicz_campaign(config: &ExperimentConfig, phi_power: f64) -> Result<OrliczReport> {
    let net = config.build_net()?;
    let window = config.window.window()?;
    let (c_p, c_q) = net_constants(&net, &window)?;
    let consts = constants(&window, c_p, c_q)?;
    let opts = config.options();
    let phi = OrliczFunction::power(phi_power)?;
    // Phi indices (r, r) must thread the window for the constant to exist
    let r = phi_power;
    if !(window.p < r && window.p_prime < r) {
        return Err(Error::config(format!(
            "orlicz campaign needs p < p' < r = {r}, got p={}, p'={}",
            window.p, window.p_prime
        )));
    }
    if window.q.is_finite() && !(r < window.q_prime && window.q_prime < window.q) {
        return Err(Error::config(format!(
            "orlicz campaign needs r < q' < q for finite q, got r={r}, q'={}, q={}",
            window.q_prime, window.q
        )));
    }
    let hardy = if window.q_prime.is_finite() {
        r / (r - window.p_prime) + r / (window.q_prime - r)
    } else {
        r / (r - window.p_prime)
    };
    let certified = (4.0 * consts.kappa * consts.big_k * hardy).powf(r);
    let mut rows = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for trial in 0..config.trials {
        let seed = trial_seed(config.seed, trial as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = generate::random_psd(&config.algebra, &mut rng);
        let m = majorant_general(&net, &x, &window, &consts, &opts)?;
        let lhs = phi_trace(&m.a, &phi, opts.tol)?;
        let rhs = phi_trace(&x, &phi, opts.tol)?;
        let ratio = lhs / rhs;
        if !ratio.is_finite() || ratio > certified {
            return Err(Error::certificate(format!(
                "orlicz campaign: ratio {ratio} exceeds certified {certified} (trial {trial}, seed {seed})"
            )));
        }
        max_ratio = max_ratio.max(ratio);
        rows.push(OrliczRow {
            trial,
            seed,
            lhs,
            rhs,
            ratio,
        });
    }
    Ok(OrliczReport {
        phi_power,
        rows,
        max_ratio,
        certified_power: certified,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl CampaignReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("trial,seed,input_trace,rungs,domination_margin,mu_bound_margin,trace_bound_margin\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.trial,
                r.seed,
                fmt_g17(r.input_trace),
                r.rungs,
                fmt_g17(r.domination_margin),
                fmt_g17(r.mu_bound_margin),
                fmt_g17(r.trace_bound_margin),
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        s.push_str(&format!("  \"config_seed\": {},\n", self.config_seed));
        s.push_str(&format!("  \"trials\": {},\n", self.trials));
        s.push_str(&format!(
            "  \"mode\": \"{}\",\n",
            match self.mode {
                CampaignMode::Projection => "projection",
                CampaignMode::General => "general",
                CampaignMode::Commutative => "commutative",
            }
        ));
        s.push_str(&format!("  \"failures\": {},\n", self.failures));
        s.push_str(&format!(
            "  \"min_domination_margin\": \"{}\",\n",
            fmt_g17(self.min_domination_margin)
        ));
        s.push_str(&format!(
            "  \"median_domination_margin\": \"{}\",\n",
            fmt_g17(self.median_domination_margin)
        ));
        s.push_str(&format!(
            "  \"max_mu_bound_margin\": \"{}\",\n",
            fmt_g17(self.max_mu_bound_margin)
        ));
        s.push_str("  \"rows\": [\n");
        for (i, r) in self.rows.iter().enumerate() {
            s.push_str(&format!(
                "    {{\"trial\": {}, \"seed\": {}, \"input_trace\": \"{}\", \"rungs\": {}, \"domination_margin\": \"{}\", \"mu_bound_margin\": \"{}\", \"trace_bound_margin\": \"{}\"}}{}\n",
                r.trial,
                r.seed,
                fmt_g17(r.input_trace),
                r.rungs,
                fmt_g17(r.domination_margin),
                fmt_g17(r.mu_bound_margin),
                fmt_g17(r.trace_bound_margin),
                if i + 1 < self.rows.len() { "," } else { "" }
            ));
        }
        s.push_str("  ]\n}\n");
        s
    }
}

impl SweepReport {
    pub fn to_csv(&self, include_runtime: bool) -> String {
        let mut s = String::new();
        if include_runtime {
            s.push_str("p,p_prime,empirical_majorant_ratio,certified_bound,margin,runtime_ms\n");
        } else {
            s.push_str("p,p_prime,empirical_majorant_ratio,certified_bound,margin\n");
        }
        for r in &self.records {
            if include_runtime {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    fmt_g17(r.p),
                    fmt_g17(r.p_prime),
                    fmt_g17(r.empirical_majorant_ratio),
                    fmt_g17(r.certified_bound),
                    fmt_g17(r.margin),
                    fmt_g17(r.runtime_ms),
                ));
            } else {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_g17(r.p),
                    fmt_g17(r.p_prime),
                    fmt_g17(r.empirical_majorant_ratio),
                    fmt_g17(r.certified_bound),
                    fmt_g17(r.margin),
                ));
            }
        }
        s.push_str(&format!("# certified_slope,{}\n", fmt_g17(self.certified_slope)));
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n  \"records\": [\n");
        for (i, r) in self.records.iter().enumerate() {
            s.push_str(&format!(
                "    {{\"p\": \"{}\", \"p_prime\": \"{}\", \"empirical_majorant_ratio\": \"{}\", \"certified_bound\": \"{}\", \"margin\": \"{}\"}}{}\n",
                fmt_g17(r.p),
                fmt_g17(r.p_prime),
                fmt_g17(r.empirical_majorant_ratio),
                fmt_g17(r.certified_bound),
                fmt_g17(r.margin),
                if i + 1 < self.records.len() { "," } else { "" }
            ));
        }
        s.push_str(&format!(
            "  ],\n  \"certified_slope\": \"{}\"\n}}\n",
            fmt_g17(self.certified_slope)
        ));
        s
    }
}

impl OrliczReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("trial,seed,lhs_phi_moment,rhs_phi_moment,ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.trial,
                r.seed,
                fmt_g17(r.lhs),
                fmt_g17(r.rhs),
                fmt_g17(r.ratio),
            ));
        }
        s.push_str(&format!(
            "# max_ratio,{}\n# certified_power,{}\n",
            fmt_g17(self.max_ratio),
            fmt_g17(self.certified_power)
        ));
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n  \"rows\": [\n");
        for (i, r) in self.rows.iter().enumerate() {
            s.push_str(&format!(
                "    {{\"trial\": {}, \"seed\": {}, \"lhs\": \"{}\", \"rhs\": \"{}\", \"ratio\": \"{}\"}}{}\n",
                r.trial,
                r.seed,
                fmt_g17(r.lhs),
                fmt_g17(r.rhs),
                fmt_g17(r.ratio),
                if i + 1 < self.rows.len() { "," } else { "" }
            ));
        }
        s.push_str(&format!(
            "  ],\n  \"phi_power\": \"{}\",\n  \"max_ratio\": \"{}\",\n  \"certified_power\": \"{}\"\n}}\n",
            fmt_g17(self.phi_power),
            fmt_g17(self.max_ratio),
            fmt_g17(self.certified_power)
        ));
        s
    }
}

/// Write `text` to the path, or stdout when no path is given; IO failures
/// carry the path context.
pub fn emit(text: &str, path: Option<&std::path::Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}
