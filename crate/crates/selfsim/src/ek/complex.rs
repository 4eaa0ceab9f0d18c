//! Erdos-Kahane engine in the complex-diagonal model: the rotation
//! eigenvalues come in conjugate pairs `theta_(2j), theta_(2j+1)` of
//! common modulus `vartheta`, and one pair (the last) is the analysis
//! target. Scalar sums `S_n = sum_j tau_j theta_j^n` round to integers
//! `K_n`; eliminating the fixed pairs by successive differences leaves a
//! two-term geometric sequence `B_n ~ theta^n`, whose missing imaginary
//! parts are recovered by the constrained phase solver. This yields a
//! one-step predictor for the next integer and an estimate of the target
//! eigenvalue, and from there the bad-set witness and the angular disk
//! cover mirror the real-line engine.
//!
//! Index convention: even slots `0, 2, ...` hold the upper-half-plane
//! member of each pair, odd slots their conjugates; the target pair is
//! the last one, so the dominant component sits at slot `d - 2`.

use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{dist_to_int, nearest_int};

use super::solver::{calibrate, solve_fg, SolverError, SolverFg};

pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum ComplexEkError {
    #[error("invalid parameter: {0}")]
    BadParams(&'static str),
    #[error("spectrum violates the window constraints: {0}")]
    BadSpectrum(&'static str),
    #[error("tau vector violates pairing or dominance: {0}")]
    BadTau(&'static str),
    #[error("|z|_inf = {0} < 1; frequency renormalization undefined")]
    FrequencyTooSmall(f64),
    #[error("phase solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("node budget exceeded: {nodes} nodes at cap {cap}")]
    BudgetExceeded { nodes: usize, cap: usize },
}

/// Conjugate-paired eigenvalue list on the circle of radius `vartheta`,
/// with imaginary parts at least `b1` and pairwise distances at least `b2`.
#[derive(Debug, Clone)]
pub struct SpectrumH {
    theta: Vec<Complex<f64>>,
    pub vartheta: f64,
    pub b1: f64,
    pub b2: f64,
}

impl SpectrumH {
    /// Build from the upper-half-plane members of each pair; the target
    /// pair goes last.
    pub fn new(upper: Vec<Complex<f64>>, b1: f64, b2: f64) -> Result<Self, ComplexEkError> {
        if upper.is_empty() {
            return Err(ComplexEkError::BadParams("need at least one pair"));
        }
        if !(b1 > 0.0 && b2 > 0.0) {
            return Err(ComplexEkError::BadParams("b1, b2 must be positive"));
        }
        let vartheta = upper[0].norm();
        if !(vartheta > 1.0) {
            return Err(ComplexEkError::BadSpectrum("modulus must exceed 1"));
        }
        let mut theta = Vec::with_capacity(2 * upper.len());
        for t in &upper {
            if (t.norm() - vartheta).abs() > 1e-12 * vartheta {
                return Err(ComplexEkError::BadSpectrum("moduli must agree"));
            }
            if t.im < b1 {
                return Err(ComplexEkError::BadSpectrum("imaginary part below b1"));
            }
            theta.push(*t);
            theta.push(t.conj());
        }
        for i in 0..theta.len() {
            for j in (i + 1)..theta.len() {
                if (theta[i] - theta[j]).norm() < b2 {
                    return Err(ComplexEkError::BadSpectrum("pairwise distance below b2"));
                }
            }
        }
        Ok(Self {
            theta,
            vartheta,
            b1,
            b2,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn pairs(&self) -> usize {
        self.theta.len() / 2
    }

    pub fn thetas(&self) -> &[Complex<f64>] {
        &self.theta
    }

    /// The fixed eigenvalues (all but the target pair), in slot order.
    pub fn prefix(&self) -> &[Complex<f64>] {
        &self.theta[..self.dim() - 2]
    }

    /// Upper-half member of the target pair.
    pub fn target(&self) -> Complex<f64> {
        self.theta[self.dim() - 2]
    }

    /// Same spectrum with the target pair replaced.
    pub fn with_target(&self, target: Complex<f64>) -> Result<Self, ComplexEkError> {
        let mut upper: Vec<Complex<f64>> = self
            .theta
            .iter()
            .step_by(2)
            .cloned()
            .collect();
        *upper.last_mut().expect("nonempty") = target;
        Self::new(upper, self.b1, self.b2)
    }
}

/// Nearest-integer trace of the scalar sums for one `tau`.
#[derive(Debug, Clone)]
pub struct EkTraceComplex {
    pub tau: Vec<Complex<f64>>,
    pub k: Vec<i64>,
    pub eps: Vec<f64>,
    pub sums: Vec<f64>,
}

impl EkTraceComplex {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn max_eps(&self, range: std::ops::RangeInclusive<usize>) -> f64 {
        range.map(|n| self.eps[n].abs()).fold(0.0, f64::max)
    }
}

/// Compute the trace `K_n`, `eps_n` for `n = 0..=n_max` from the
/// upper-half tau components (one per pair, dominant last).
pub fn ek_trace_complex(
    h: &SpectrumH,
    tau_upper: &[Complex<f64>],
    n_max: usize,
) -> Result<EkTraceComplex, ComplexEkError> {
    if tau_upper.len() != h.pairs() {
        return Err(ComplexEkError::BadTau("one tau component per pair"));
    }
    let dominant = tau_upper[h.pairs() - 1].norm();
    if !(1.0 - 1e-12..=h.vartheta + 1e-12).contains(&dominant) {
        return Err(ComplexEkError::BadTau("dominant modulus outside [1, vartheta]"));
    }
    if tau_upper.iter().any(|t| t.norm() > dominant + 1e-12) {
        return Err(ComplexEkError::BadTau("dominant component must be maximal"));
    }
    let mut tau = Vec::with_capacity(h.dim());
    for t in tau_upper {
        tau.push(*t);
        tau.push(t.conj());
    }
    let uppers: Vec<Complex<f64>> = h.theta.iter().step_by(2).cloned().collect();
    let mut state: Vec<Complex<f64>> = tau_upper.to_vec();
    let mut k = Vec::with_capacity(n_max + 1);
    let mut eps = Vec::with_capacity(n_max + 1);
    let mut sums = Vec::with_capacity(n_max + 1);
    for _ in 0..=n_max {
        let s: f64 = state.iter().map(|z| 2.0 * z.re).sum();
        let kn = nearest_int(s);
        k.push(kn);
        eps.push(s - kn as f64);
        sums.push(s);
        for (z, t) in state.iter_mut().zip(uppers.iter()) {
            *z *= t;
        }
    }
    Ok(EkTraceComplex { tau, k, eps, sums })
}

/// Elementary symmetric polynomials `sigma_0..=sigma_m` of the values.
fn elementary_symmetric(values: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut sigma = vec![Complex::new(0.0, 0.0); values.len() + 1];
    sigma[0] = Complex::new(1.0, 0.0);
    for (count, &v) in values.iter().enumerate() {
        for k in (1..=count + 1).rev() {
            let prev = sigma[k - 1];
            sigma[k] += v * prev;
        }
    }
    sigma
}

/// Successive-difference table: `a[j][n] = A_n^(j)` with
/// `A_n^(0) = values[n]` and `A_n^(j) = A_(n+1)^(j-1) - prefix[j-1] A_n^(j-1)`.
pub fn difference_table(prefix: &[Complex<f64>], values: &[f64]) -> Vec<Vec<Complex<f64>>> {
    let mut table: Vec<Vec<Complex<f64>>> = Vec::with_capacity(prefix.len() + 1);
    table.push(values.iter().map(|&v| Complex::new(v, 0.0)).collect());
    for (j, &th) in prefix.iter().enumerate() {
        let prev = &table[j];
        let mut row = Vec::with_capacity(prev.len().saturating_sub(1));
        for n in 0..prev.len().saturating_sub(1) {
            row.push(prev[n + 1] - th * prev[n]);
        }
        table.push(row);
    }
    table
}

/// Closed form of one table entry:
/// `A_n^(j) = sum_(k=0..=j) (-1)^k sigma_k(prefix[..j]) values[n+j-k]`.
pub fn difference_closed_form(
    prefix: &[Complex<f64>],
    values: &[f64],
    n: usize,
    j: usize,
) -> Complex<f64> {
    let sigma = elementary_symmetric(&prefix[..j]);
    let mut acc = Complex::new(0.0, 0.0);
    let mut sign = 1.0;
    for k in 0..=j {
        acc += sign * sigma[k] * values[n + j - k];
        sign = -sign;
    }
    acc
}

/// Diagnostics of the elimination scheme on a trace.
#[derive(Debug, Clone)]
pub struct DiffSchemeReport {
    /// Table from the integer sequence.
    pub a: Vec<Vec<Complex<f64>>>,
    /// Table from the exact sums.
    pub a_tilde: Vec<Vec<Complex<f64>>>,
    /// Worst relative disagreement between recurrence and closed form.
    pub route_residual: f64,
    /// Worst violation margin of `|A - A_tilde| < (1+vartheta)^j max eps`
    /// (negative when the bound holds strictly).
    pub tilde_gap_margin: f64,
    /// Worst relative mismatch of the eliminated tail against its
    /// two-term geometric form.
    pub forward_residual: f64,
}

/// Run the elimination on a trace and verify the two computation routes,
/// the remainder propagation bound, and the geometric form of the tail.
pub fn difference_scheme(
    h: &SpectrumH,
    trace: &EkTraceComplex,
) -> Result<DiffSchemeReport, ComplexEkError> {
    let d = h.dim();
    if trace.len() < d + 4 {
        return Err(ComplexEkError::BadParams("trace must have at least d+4 entries"));
    }
    let prefix = h.prefix();
    let k_f: Vec<f64> = trace.k.iter().map(|&k| k as f64).collect();
    let a = difference_table(prefix, &k_f);
    let a_tilde = difference_table(prefix, &trace.sums);

    let mut route_residual = 0.0f64;
    for (j, row) in a.iter().enumerate() {
        for (n, &val) in row.iter().enumerate() {
            let closed = difference_closed_form(prefix, &k_f, n, j);
            let scale = val.norm().max(1.0);
            route_residual = route_residual.max((closed - val).norm() / scale);
        }
    }

    let mut tilde_gap_margin = f64::NEG_INFINITY;
    for (j, (row, row_t)) in a.iter().zip(a_tilde.iter()).enumerate() {
        let growth = (1.0 + h.vartheta).powi(j as i32);
        for (n, (&av, &tv)) in row.iter().zip(row_t.iter()).enumerate() {
            let max_eps = trace.max_eps(n..=n + j);
            if max_eps == 0.0 {
                continue;
            }
            tilde_gap_margin = tilde_gap_margin.max((tv - av).norm() - growth * max_eps);
        }
    }

    // eliminated tail: A~_n^(d-2) = 2 Re[tau_(d-2) prod_k (theta - theta_k) theta^n]
    let target = h.target();
    let tau_dom = trace.tau[d - 2];
    let gap: Complex<f64> = prefix.iter().map(|&t| target - t).product();
    let mut forward_residual = 0.0f64;
    let mut pow = Complex::new(1.0, 0.0);
    for (n, &tv) in a_tilde[d - 2].iter().enumerate() {
        let direct = 2.0 * (tau_dom * gap * pow).re;
        let scale = tv.norm().max(1.0);
        forward_residual = forward_residual.max((tv.re - direct).abs().max(tv.im.abs()) / scale);
        pow *= target;
        let _ = n;
    }

    Ok(DiffSchemeReport {
        a,
        a_tilde,
        route_residual,
        tilde_gap_margin,
        forward_residual,
    })
}

/// Window constants of the complex engine.
#[derive(Debug, Clone)]
pub struct EkConstantsComplex {
    /// Eigenvalue-estimate error coefficient: `|theta - Phi| <= c2
    /// vartheta^(-n) max eps`.
    pub c2: f64,
    /// Integer-prediction error coefficient: `|K - Xi| <= c3 max eps`.
    pub c3: f64,
    pub rho: f64,
    pub n2: usize,
    pub n3: usize,
    /// Integer candidates within `c3` of a prediction.
    pub m_bound: u128,
    pub solver: SolverFg,
}

/// How to assemble the window constants.
#[derive(Debug, Clone, Copy)]
pub enum ConstantsMode {
    /// Norm-chain bounds; valid but enormous.
    Rigorous,
    /// Twice the worst ratio observed on random traces.
    Calibrated { instances: usize },
}

/// Assemble the constants for a spectrum. The solver calibration (and in
/// calibrated mode the trace sweep) is seeded for reproducibility.
pub fn compute_constants(
    h: &SpectrumH,
    mode: ConstantsMode,
    seed: u64,
) -> Result<EkConstantsComplex, ComplexEkError> {
    let d = h.dim();
    let vt = h.vartheta;
    let mut rng = crate::sample::rng_from_seed(seed);
    let solver = calibrate(vt, h.b1, d, 2_000, &mut rng);
    let growth = (1.0 + vt).powi(d as i32 - 2);
    let e_coef = (1.0 + 4.0 * solver.c1_lem) * growth;
    let m3_coef = 2.0 * h.b2.powi(d as i32 - 2);
    let m4_coef = 2.0 * (2.0 * vt).powi(d as i32 - 1);
    // n2: solver domain reachable and the B lower bound dominant
    let mut n2 = 1usize;
    while 2.0 * h.b2.powi(d as i32 - 2) * vt.powi(n2 as i32) < solver.r0
        || e_coef * 0.5 > 0.5 * m3_coef * vt.powi(n2 as i32 + 3)
    {
        n2 += 1;
        if n2 > 10_000 {
            return Err(ComplexEkError::BadParams("window constants do not stabilize"));
        }
    }
    let n3 = n2;
    let (c2, c3) = match mode {
        ConstantsMode::Rigorous => {
            let c2 = 2.0 * e_coef / (m3_coef * vt.powi(3)) * (1.0 + vt * m4_coef / m3_coef);
            let c3 = 2.0 * m4_coef * vt.powi(4) * (1.0 + 1.0 / vt) * c2;
            (c2, c3)
        }
        ConstantsMode::Calibrated { instances } => {
            let mut worst_c2 = 0.0f64;
            let mut worst_c3 = 0.0f64;
            let mut tried = 0usize;
            while tried < instances {
                let tau = random_tau(h, &mut rng);
                let n_max = n3 + d + 3 + 14;
                let trace = ek_trace_complex(h, &tau, n_max)?;
                for n in n3..=(n_max - d - 3) {
                    let window: Vec<i64> = trace.k[n..=n + d + 2].to_vec();
                    let max_eps = trace.max_eps(n..=n + d + 3).max(1e-9);
                    if let Ok(phi) = phi_predictor_raw(h, &solver, &window) {
                        let err = (phi - h.target()).norm();
                        worst_c2 = worst_c2.max(err * vt.powi(n as i32) / max_eps);
                    }
                    if let Ok(xi) = xi_predictor_raw(h, &solver, &window) {
                        let err = (xi - trace.k[n + d + 3] as f64).abs();
                        worst_c3 = worst_c3.max(err / max_eps);
                    }
                }
                tried += 1;
            }
            (2.0 * worst_c2.max(1e-6), 2.0 * worst_c3.max(0.5))
        }
    };
    Ok(EkConstantsComplex {
        c2,
        c3,
        rho: 1.0 / (2.0 * c3),
        n2,
        n3,
        m_bound: 2 * (c3.ceil() as u128) + 1,
        solver,
    })
}

/// Random admissible tau (dominant last, modulus in `[1, vartheta)`).
pub fn random_tau<R: rand::Rng>(h: &SpectrumH, rng: &mut R) -> Vec<Complex<f64>> {
    let s = h.pairs();
    let dom_mag = rng.random_range(1.0..h.vartheta);
    let mut tau = Vec::with_capacity(s);
    for j in 0..s {
        let mag = if j + 1 == s {
            dom_mag
        } else {
            rng.random_range(0.0..dom_mag)
        };
        let arg = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        tau.push(Complex::from_polar(mag, arg));
    }
    tau
}

/// Rebuild the five eliminated-tail values reachable from an integer
/// window of length `d + 3`.
fn window_tail_values(
    prefix: &[Complex<f64>],
    window: &[i64],
) -> Result<[f64; 5], ComplexEkError> {
    let d = prefix.len() + 2;
    if window.len() != d + 3 {
        return Err(ComplexEkError::BadParams("window must have d+3 integers"));
    }
    let values: Vec<f64> = window.iter().map(|&k| k as f64).collect();
    let mut out = [0.0f64; 5];
    for (t, slot) in out.iter_mut().enumerate() {
        let v = difference_closed_form(prefix, &values, t, d - 2);
        // conjugate-paired prefix: the combination is real to rounding
        *slot = v.re;
    }
    Ok(out)
}

fn phi_predictor_raw(
    h: &SpectrumH,
    _solver: &SolverFg,
    window: &[i64],
) -> Result<Complex<f64>, ComplexEkError> {
    let a = window_tail_values(h.prefix(), window)?;
    let lo = solve_fg(&[a[0], a[1], a[2], a[3]], h.vartheta, h.b1)?;
    let hi = solve_fg(&[a[1], a[2], a[3], a[4]], h.vartheta, h.b1)?;
    let b3 = Complex::new(a[3], lo.y3);
    let b4 = Complex::new(a[4], hi.y3);
    if b3.norm() == 0.0 {
        return Err(ComplexEkError::BadParams("vanishing denominator in the quotient"));
    }
    Ok(b4 / b3)
}

fn xi_predictor_raw(
    h: &SpectrumH,
    solver: &SolverFg,
    window: &[i64],
) -> Result<f64, ComplexEkError> {
    let d = h.dim();
    let a = window_tail_values(h.prefix(), window)?;
    let lo = solve_fg(&[a[0], a[1], a[2], a[3]], h.vartheta, h.b1)?;
    let hi = solve_fg(&[a[1], a[2], a[3], a[4]], h.vartheta, h.b1)?;
    let b3 = Complex::new(a[3], lo.y3);
    let b4 = Complex::new(a[4], hi.y3);
    if b3.norm() == 0.0 {
        return Err(ComplexEkError::BadParams("vanishing denominator in the quotient"));
    }
    let a_next = (b4 * b4 / b3).re;
    // subtract the symmetric-polynomial correction to recover the integer
    let sigma = elementary_symmetric(h.prefix());
    let mut corr = 0.0f64;
    let mut sign = -1.0;
    for k in 1..=(d - 2) {
        corr += sign * sigma[k].re * window[d + 3 - k] as f64;
        sign = -sign;
    }
    let _ = solver;
    Ok(a_next - corr)
}

/// Estimate of the target eigenvalue from an integer window (length `d+3`).
pub fn phi_predictor(
    h: &SpectrumH,
    constants: &EkConstantsComplex,
    window: &[i64],
) -> Result<Complex<f64>, ComplexEkError> {
    phi_predictor_raw(h, &constants.solver, window)
}

/// Prediction of the next integer from a window.
#[derive(Debug, Clone)]
pub struct XiPrediction {
    pub prediction: f64,
    /// Nearest integer when it is the unique candidate at distance < 1/2.
    pub unique: Option<i64>,
}

/// Predict `K_(n+d+3)` from the window `K_n..K_(n+d+2)`.
pub fn xi_predictor(
    h: &SpectrumH,
    constants: &EkConstantsComplex,
    window: &[i64],
) -> Result<XiPrediction, ComplexEkError> {
    let prediction = xi_predictor_raw(h, &constants.solver, window)?;
    let frac = (prediction - prediction.round_ties_even()).abs();
    Ok(XiPrediction {
        prediction,
        unique: if frac < 0.5 {
            Some(nearest_int(prediction))
        } else {
            None
        },
    })
}

/// Integer candidates within `radius` of a prediction.
pub fn xi_candidates(prediction: f64, radius: f64) -> Vec<i64> {
    let lo = (prediction - radius).ceil() as i64;
    let hi = (prediction + radius).floor() as i64;
    (lo..=hi).collect()
}

/// The product bound in the reindexed model: frequencies `z` (conjugate
/// paired), pulled to `tau = theta^(-N) z` with `|tau|_inf in [1,
/// vartheta)`, give `prod_(n=0..=N) (1 - 2 pi eps || sum theta^n tau ||^2)`.
pub fn psi_complex(
    h: &SpectrumH,
    eps_min: f64,
    z_upper: &[Complex<f64>],
) -> Result<f64, ComplexEkError> {
    if z_upper.len() != h.pairs() {
        return Err(ComplexEkError::BadParams("one z component per pair"));
    }
    let norm = z_upper.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if norm < 1.0 {
        return Err(ComplexEkError::FrequencyTooSmall(norm));
    }
    let vt = h.vartheta;
    let depth = (norm.ln() / vt.ln()).floor() as i32;
    let depth = if vt.powi(-depth) * norm < 1.0 {
        depth - 1
    } else {
        depth
    };
    let uppers: Vec<Complex<f64>> = h.theta.iter().step_by(2).cloned().collect();
    let mut state: Vec<Complex<f64>> = z_upper
        .iter()
        .zip(uppers.iter())
        .map(|(z, t)| z * t.powi(-depth))
        .collect();
    let mut value = 1.0f64;
    for _ in 0..=depth.max(0) {
        let s: f64 = state.iter().map(|z| 2.0 * z.re).sum();
        let r = dist_to_int(s);
        value *= 1.0 - 2.0 * std::f64::consts::PI * eps_min * r * r;
        for (z, t) in state.iter_mut().zip(uppers.iter()) {
            *z *= t;
        }
    }
    Ok(value)
}

/// Witness report over a tau grid.
#[derive(Debug, Clone)]
pub struct WitnessReportComplex {
    pub target: Complex<f64>,
    pub best_tau: Vec<Complex<f64>>,
    pub best_fraction: f64,
    pub member: bool,
    pub n: usize,
    pub delta: f64,
    pub rho: f64,
}

/// Grid of admissible upper-half tau vectors: dominant component on polar
/// lattice `[1, vartheta) x [0, 2 pi)`, other pairs on a coarser lattice.
pub fn tau_grid(
    h: &SpectrumH,
    radial_steps: usize,
    angular_steps: usize,
) -> Vec<Vec<Complex<f64>>> {
    let s = h.pairs();
    let mut dominant = Vec::new();
    for ri in 0..radial_steps {
        let r = 1.0 + (h.vartheta - 1.0) * ri as f64 / radial_steps as f64;
        for ai in 0..angular_steps {
            let a = 2.0 * std::f64::consts::PI * ai as f64 / angular_steps as f64;
            dominant.push(Complex::from_polar(r, a));
        }
    }
    if s == 1 {
        return dominant.into_iter().map(|d| vec![d]).collect();
    }
    // coarse lattice for the fixed pairs to keep the grid tractable
    let coarse_r = 2usize.min(radial_steps);
    let coarse_a = 4usize.min(angular_steps);
    let mut rest = vec![Vec::<Complex<f64>>::new()];
    for _ in 0..(s - 1) {
        let mut next = Vec::new();
        for base in &rest {
            for ri in 0..=coarse_r {
                for ai in 0..coarse_a {
                    let r = ri as f64 / coarse_r as f64;
                    let a = 2.0 * std::f64::consts::PI * ai as f64 / coarse_a as f64;
                    let mut row = base.clone();
                    row.push(Complex::from_polar(r, a));
                    next.push(row);
                }
            }
        }
        rest = next;
    }
    let mut out = Vec::with_capacity(dominant.len() * rest.len());
    for dom in &dominant {
        for base in &rest {
            let mut tau: Vec<Complex<f64>> = base.iter().map(|z| z * dom.norm()).collect();
            tau.push(*dom);
            out.push(tau);
        }
    }
    out
}

/// Membership certificate for the target eigenvalue: the best witness tau
/// and whether its small-remainder fraction over `n in [1, N]` exceeds
/// `1 - delta`. One-sided, as in the real engine.
pub fn bad_set_witness_complex(
    h: &SpectrumH,
    n_steps: usize,
    delta: f64,
    rho: f64,
    grid: &[Vec<Complex<f64>>],
) -> Result<WitnessReportComplex, ComplexEkError> {
    if n_steps == 0 {
        return Err(ComplexEkError::BadParams("N must be >= 1"));
    }
    let mut best: Option<(Vec<Complex<f64>>, f64)> = None;
    for tau in grid {
        let trace = ek_trace_complex(h, tau, n_steps)?;
        let good = (1..=n_steps)
            .filter(|&n| trace.eps[n].abs() < rho)
            .count();
        let fraction = good as f64 / n_steps as f64;
        if best.as_ref().map_or(true, |(_, bf)| fraction > *bf) {
            best = Some((tau.clone(), fraction));
        }
    }
    let (best_tau, best_fraction) = best.ok_or(ComplexEkError::BadParams("empty tau grid"))?;
    Ok(WitnessReportComplex {
        target: h.target(),
        best_tau,
        best_fraction,
        member: best_fraction > 1.0 - delta,
        n: n_steps,
        delta,
        rho,
    })
}

/// One disk of the angular cover: a center on the circle `vartheta T+`.
#[derive(Debug, Clone)]
pub struct CoverDiskComplex {
    pub center: Complex<f64>,
    pub radius: f64,
    pub branch_count: usize,
    pub seq_hash: u64,
}

#[derive(Debug, Clone)]
pub struct CoverStatsComplex {
    pub nodes: usize,
    pub seeds: usize,
    pub disks: usize,
    pub branch_events: usize,
    pub fitted_c0: f64,
}

#[derive(Debug, Clone)]
pub struct CoverResultComplex {
    pub disks: Vec<CoverDiskComplex>,
    pub stats: CoverStatsComplex,
}

#[derive(Debug, Clone)]
pub struct CoverOptionsComplex {
    pub n: usize,
    pub delta: f64,
    pub node_cap: usize,
    /// Angular scan step over the admissible arc used to harvest seeds.
    pub seed_scan_step: f64,
    pub tau_radial_steps: usize,
    pub tau_angular_steps: usize,
    pub mode: ConstantsMode,
    pub seed: u64,
}

impl CoverOptionsComplex {
    pub fn new(n: usize, delta: f64) -> Self {
        Self {
            n,
            delta,
            node_cap: DEFAULT_NODE_CAP,
            seed_scan_step: 1e-3,
            tau_radial_steps: 8,
            tau_angular_steps: 16,
            mode: ConstantsMode::Calibrated { instances: 40 },
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CoverStateC {
    window: Vec<i64>,
    /// Steps remaining in which the old-side window may contain the last
    /// charged bad index.
    excused_left: u8,
    deviations: usize,
}

/// Angular analog of the real enumeration. States are windows of `d + 3`
/// consecutive integers; the next value must lie within `c3/2` of the
/// window predictor (within `1/2` for a free step), and each window
/// re-estimates the target eigenvalue, shrinking a feasible arc that
/// prunes inconsistent branches. A charge excuses the following `d + 3`
/// steps on the old side, matching how one bad index contaminates every
/// window containing it.
pub fn cover_enumerate_complex(
    h: &SpectrumH,
    opts: &CoverOptionsComplex,
) -> Result<CoverResultComplex, ComplexEkError> {
    let d = h.dim();
    let vt = h.vartheta;
    let constants = compute_constants(h, opts.mode, opts.seed)?;
    if opts.n < constants.n3 {
        return Err(ComplexEkError::BadParams("N must be at least n3"));
    }
    if !(0.0..0.5).contains(&opts.delta) {
        return Err(ComplexEkError::BadParams("delta must be in [0, 1/2)"));
    }
    let budget = (opts.delta * opts.n as f64).floor() as usize;
    let window_len = d + 3;
    let seed_len = constants.n3 + window_len - 1; // indices 0..=seed_len
    let target_len = opts.n + d + 3; // indices 0..=target_len-1... generated up to N+d+2

    let phi_min = (h.b1 / vt).min(1.0).asin();
    let phi_max = std::f64::consts::PI - phi_min;

    // harvest seed windows from an angular scan times the tau grid
    let grid = tau_grid(h, opts.tau_radial_steps, opts.tau_angular_steps);
    let scan_count = ((phi_max - phi_min) / opts.seed_scan_step).ceil() as usize;
    let mut seeds: Vec<(Vec<i64>, ThetaArc)> = Vec::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    for i in 0..=scan_count {
        let phi = (phi_min + i as f64 * opts.seed_scan_step).min(phi_max);
        let spectrum = h.with_target(Complex::from_polar(vt, phi));
        let spectrum = match spectrum {
            Ok(sp) => sp,
            Err(_) => continue,
        };
        for tau in &grid {
            let trace = match ek_trace_complex(&spectrum, tau, seed_len) {
                Ok(t) => t,
                Err(_) => continue,
            };
            if seen.insert(trace.k.clone()) {
                seeds.push((
                    trace.k,
                    ThetaArc {
                        lo: phi_min,
                        hi: phi_max,
                    },
                ));
            }
        }
    }
    seeds.sort_by(|a, b| a.0.cmp(&b.0));

    let radius = constants.c2 * vt.powi(-(opts.n as i32));
    let arc_cell = (radius / (2.0 * vt)).max(1e-15);

    let mut nodes = 0usize;
    let mut branch_events = 0usize;
    let mut disks: Vec<CoverDiskComplex> = Vec::new();
    let mut disk_seen: HashSet<i64> = HashSet::new();

    let mut layer: HashMap<CoverStateC, ThetaArc> = HashMap::new();
    for (k_seq, arc) in &seeds {
        let state = CoverStateC {
            window: k_seq[k_seq.len() - window_len..].to_vec(),
            excused_left: window_len as u8,
            deviations: 0,
        };
        layer
            .entry(state)
            .and_modify(|a| {
                a.lo = a.lo.min(arc.lo);
                a.hi = a.hi.max(arc.hi);
            })
            .or_insert(*arc);
    }

    let emit = |window: &[i64],
                    constants: &EkConstantsComplex,
                    deviations: usize,
                    disks: &mut Vec<CoverDiskComplex>,
                    disk_seen: &mut HashSet<i64>| {
        if let Ok(phi) = phi_predictor_raw(h, &constants.solver, window) {
            let ang = phi.arg();
            if !disk_seen.insert((ang / arc_cell).floor() as i64) {
                return;
            }
            let mut hasher = std::collections::hash_map::DefaultHasher::new();
            window.hash(&mut hasher);
            disks.push(CoverDiskComplex {
                center: Complex::from_polar(vt, ang),
                radius,
                branch_count: deviations,
                seq_hash: hasher.finish(),
            });
        }
    };

    for depth in seed_len + 1..target_len {
        let mut next: HashMap<CoverStateC, ThetaArc> = HashMap::new();
        let mut keys: Vec<CoverStateC> = layer.keys().cloned().collect();
        keys.sort();
        for state in keys {
            let arc = layer[&state];
            nodes += 1;
            if nodes > opts.node_cap {
                return Err(ComplexEkError::BudgetExceeded {
                    nodes,
                    cap: opts.node_cap,
                });
            }
            let prediction = match xi_predictor_raw(h, &constants.solver, &state.window) {
                Ok(p) => p,
                Err(_) => continue,
            };
            // feasible arc refinement from this window's estimate
            let window_start = depth - window_len;
            let arc = match phi_predictor_raw(h, &constants.solver, &state.window) {
                Ok(phi_est) => {
                    let half_err = 0.5 * constants.c2 * vt.powi(-(window_start as i32));
                    let half_ang = 2.0 * (half_err / vt).min(1.0).asin();
                    let refined = ThetaArc {
                        lo: arc.lo.max(phi_est.arg() - half_ang),
                        hi: arc.hi.min(phi_est.arg() + half_ang),
                    };
                    if refined.lo > refined.hi {
                        continue;
                    }
                    refined
                }
                Err(_) => arc,
            };
            let excused = state.excused_left > 0;
            let free_radius = if excused { 0.5 * constants.c3 } else { 0.5 };
            for cand in xi_candidates(prediction, 0.5 * constants.c3) {
                let err = (cand as f64 - prediction).abs();
                let mut push = |deviations: usize, excused_left: u8, charged: bool, next: &mut HashMap<CoverStateC, ThetaArc>| {
                    if depth == target_len - 1 {
                        let mut w = state.window[1..].to_vec();
                        w.push(cand);
                        emit(&w, &constants, deviations, &mut disks, &mut disk_seen);
                        return;
                    }
                    let mut w = state.window[1..].to_vec();
                    w.push(cand);
                    let st = CoverStateC {
                        window: w,
                        excused_left,
                        deviations,
                    };
                    next.entry(st)
                        .and_modify(|a| {
                            a.lo = a.lo.min(arc.lo);
                            a.hi = a.hi.max(arc.hi);
                        })
                        .or_insert(arc);
                    let _ = charged;
                };
                if err <= free_radius {
                    push(
                        state.deviations,
                        state.excused_left.saturating_sub(1),
                        false,
                        &mut next,
                    );
                } else if state.deviations < budget {
                    branch_events += 1;
                    push(state.deviations + 1, window_len as u8, true, &mut next);
                }
            }
        }
        if depth < target_len - 1 {
            layer = next;
        }
    }

    disks.sort_by(|a, b| {
        a.center
            .arg()
            .partial_cmp(&b.center.arg())
            .unwrap()
            .then(a.seq_hash.cmp(&b.seq_hash))
    });
    let fitted_c0 = if opts.delta > 0.0 && !disks.is_empty() {
        (disks.len() as f64).ln() / (opts.delta * (1.0 / opts.delta).ln() * opts.n as f64)
    } else {
        0.0
    };
    let stats = CoverStatsComplex {
        nodes,
        seeds: seeds.len(),
        disks: disks.len(),
        branch_events,
        fitted_c0,
    };
    Ok(CoverResultComplex { disks, stats })
}

/// Feasible arc of target angles, `0 < lo <= hi < pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ThetaArc {
    lo: f64,
    hi: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::rng_from_seed;
    use rand::Rng;

    fn resonant_h2() -> SpectrumH {
        // theta = 2i: the trace with tau = 1 is integer-valued
        SpectrumH::new(vec![Complex::new(0.0, 2.0)], 1.0, 0.5).unwrap()
    }

    fn random_h4<R: Rng>(rng: &mut R) -> SpectrumH {
        loop {
            let vt = rng.random_range(1.4..2.2);
            let a1 = rng.random_range(0.35..0.65) * std::f64::consts::PI;
            let a2 = rng.random_range(0.35..0.65) * std::f64::consts::PI;
            let t1 = Complex::from_polar(vt, a1);
            let t2 = Complex::from_polar(vt, a2);
            let b1 = t1.im.min(t2.im) * 0.9;
            if let Ok(h) = SpectrumH::new(vec![t1, t2], b1, 0.2) {
                return h;
            }
        }
    }

    #[test]
    fn resonant_trace_is_integer() {
        let h = resonant_h2();
        let trace = ek_trace_complex(&h, &[Complex::new(1.0, 0.0)], 10).unwrap();
        let expect = [2i64, 0, -8, 0, 32, 0, -128, 0, 512, 0, -2048];
        assert_eq!(trace.k, expect);
        assert!(trace.eps.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn trace_sums_are_real_pairings() {
        let mut rng = rng_from_seed(101);
        let h = random_h4(&mut rng);
        let tau = random_tau(&h, &mut rng);
        let trace = ek_trace_complex(&h, &tau, 16).unwrap();
        // against the direct complex evaluation over all 2s slots
        for n in 0..=16 {
            let mut s = Complex::new(0.0, 0.0);
            for (j, &t) in h.thetas().iter().enumerate() {
                s += trace.tau[j] * t.powi(n as i32);
            }
            assert!(s.im.abs() <= 1e-9 * s.norm().max(1.0));
            assert!((s.re - trace.sums[n as usize]).abs() <= 1e-8 * s.norm().max(1.0));
        }
    }

    #[test]
    fn difference_scheme_trivial_for_one_pair() {
        let h = resonant_h2();
        let trace = ek_trace_complex(&h, &[Complex::new(1.0, 0.0)], 9).unwrap();
        let report = difference_scheme(&h, &trace).unwrap();
        assert_eq!(report.a.len(), 1); // only the j = 0 row
        assert_eq!(report.a[0].len(), 10);
        assert!(report.route_residual == 0.0);
        assert!(report.forward_residual < 1e-12);
    }

    #[test]
    fn difference_scheme_routes_agree_for_two_pairs() {
        let mut rng = rng_from_seed(103);
        for _ in 0..20 {
            let h = random_h4(&mut rng);
            let tau = random_tau(&h, &mut rng);
            let trace = ek_trace_complex(&h, &tau, 14).unwrap();
            let report = difference_scheme(&h, &trace).unwrap();
            assert!(report.route_residual < 1e-9, "routes {}", report.route_residual);
            assert!(
                report.tilde_gap_margin < 1e-9,
                "tilde bound violated by {}",
                report.tilde_gap_margin
            );
            assert!(report.forward_residual < 1e-7, "forward {}", report.forward_residual);
        }
    }

    #[test]
    fn phi_predictor_exact_on_resonant_trace() {
        let h = resonant_h2();
        let constants = compute_constants(&h, ConstantsMode::Calibrated { instances: 10 }, 7)
            .unwrap();
        let trace = ek_trace_complex(&h, &[Complex::new(1.0, 0.0)], 20).unwrap();
        for n in constants.n3..=10 {
            let window: Vec<i64> = trace.k[n..n + 5].to_vec();
            let phi = phi_predictor(&h, &constants, &window).unwrap();
            assert!(
                (phi - h.target()).norm() < 1e-7,
                "n = {n}: {phi} vs {}",
                h.target()
            );
        }
    }

    #[test]
    fn xi_predictor_exact_on_resonant_trace() {
        let h = resonant_h2();
        let constants = compute_constants(&h, ConstantsMode::Calibrated { instances: 10 }, 7)
            .unwrap();
        let trace = ek_trace_complex(&h, &[Complex::new(1.0, 0.0)], 20).unwrap();
        for n in constants.n3..=10 {
            let window: Vec<i64> = trace.k[n..n + 5].to_vec();
            let pred = xi_predictor(&h, &constants, &window).unwrap();
            assert_eq!(pred.unique, Some(trace.k[n + 5]), "n = {n}");
        }
    }

    #[test]
    fn phi_error_bounded_on_random_instances() {
        let mut rng = rng_from_seed(107);
        for _ in 0..8 {
            let h = random_h4(&mut rng);
            let constants =
                compute_constants(&h, ConstantsMode::Calibrated { instances: 30 }, 11).unwrap();
            let tau = random_tau(&h, &mut rng);
            let n_max = constants.n3 + 18;
            let trace = ek_trace_complex(&h, &tau, n_max).unwrap();
            for n in constants.n3..=(n_max - 9) {
                let window: Vec<i64> = trace.k[n..n + 7].to_vec();
                let max_eps = trace.max_eps(n..=n + 7).max(1e-12);
                if let Ok(phi) = phi_predictor(&h, &constants, &window) {
                    let err = (phi - h.target()).norm();
                    assert!(
                        err <= constants.c2 * h.vartheta.powi(-(n as i32)) * max_eps + 1e-9,
                        "window error {err} exceeds bound"
                    );
                }
                if let Ok(xi) = xi_predictor(&h, &constants, &window) {
                    let err = (xi.prediction - trace.k[n + 7] as f64).abs();
                    assert!(
                        err <= constants.c3 * max_eps + 1e-9,
                        "xi error {err} exceeds bound"
                    );
                }
            }
        }
    }

    #[test]
    fn rigorous_constants_dominate_calibrated() {
        let h = resonant_h2();
        let rig = compute_constants(&h, ConstantsMode::Rigorous, 5).unwrap();
        let cal = compute_constants(&h, ConstantsMode::Calibrated { instances: 20 }, 5).unwrap();
        assert!(rig.c2 >= cal.c2 / 2.0, "rig {} cal {}", rig.c2, cal.c2);
        assert!(rig.c3 >= cal.c3 / 2.0);
        assert!(rig.rho <= 0.5);
    }

    #[test]
    fn psi_complex_basics() {
        let h = resonant_h2();
        // |z| < vartheta: single factor at n = 0
        let z = vec![Complex::new(0.0, 1.5)];
        let v = psi_complex(&h, 0.25, &z).unwrap();
        let s = 2.0 * (Complex::new(0.0, 1.5) * Complex::new(0.0, -1.0)).re; // tau = z/theta^0? depth 0
        let _ = s;
        assert!(v <= 1.0 && v > 0.0);
        // resonant z: all remainders vanish, product is exactly 1
        let z = vec![Complex::new(8.0, 0.0)];
        let v = psi_complex(&h, 0.25, &z).unwrap();
        assert_eq!(v, 1.0);
        assert!(matches!(
            psi_complex(&h, 0.25, &[Complex::new(0.3, 0.0)]),
            Err(ComplexEkError::FrequencyTooSmall(_))
        ));
    }

    #[test]
    fn psi_complex_matches_planar_renormalized_factors() {
        // s = 1 identification with the planar model: digit 2 (complex),
        // uniform weights, angle alpha; the factor arguments agree per n
        let alpha = 0.2;
        let vt = 2.0;
        let theta0 = Complex::from_polar(vt, 2.0 * std::f64::consts::PI * alpha);
        let _h = SpectrumH::new(vec![theta0], theta0.im * 0.9, 0.3).unwrap();
        let zeta = Complex::new(3.0, 1.0);
        let norm: f64 = zeta.norm();
        let depth = (norm.ln() / vt.ln()).floor() as i32;
        // real route: eta = (A*)^N zeta with A* = vt^(-1) e^(2 pi i alpha);
        // the matching tau for the upper-half theta is the conjugate of eta
        let astar = Complex::from_polar(1.0 / vt, 2.0 * std::f64::consts::PI * alpha);
        let eta = zeta * astar.powi(depth);
        let tau0 = eta.conj();
        for n in 1..=8 {
            let complex_arg = 2.0 * (tau0 * theta0.powi(n)).re;
            // planar factor: 2 vartheta^n Re(e^(2 pi i n alpha) conj(eta))
            let rot = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * alpha * n as f64);
            let planar_arg = 2.0 * vt.powi(n) * (rot * eta.conj()).re;
            assert!(
                (dist_to_int(complex_arg) - dist_to_int(planar_arg)).abs() < 1e-9,
                "n = {n}: {complex_arg} vs {planar_arg}"
            );
        }
    }

    #[test]
    fn witness_resonant_target_is_member() {
        let h = resonant_h2();
        let grid = tau_grid(&h, 4, 8);
        let report = bad_set_witness_complex(&h, 16, 0.2, 0.05, &grid).unwrap();
        assert!(report.member, "fraction {}", report.best_fraction);
        assert_eq!(report.best_fraction, 1.0);
    }

    #[test]
    fn witness_generic_target_is_not_certified() {
        let h = SpectrumH::new(vec![Complex::from_polar(2.0, 1.234567)], 0.5, 0.3).unwrap();
        let grid = tau_grid(&h, 4, 8);
        let report = bad_set_witness_complex(&h, 24, 0.3, 0.02, &grid).unwrap();
        assert!(!report.member, "fraction {}", report.best_fraction);
    }

    #[test]
    fn cover_contains_resonant_target() {
        let h = resonant_h2();
        let mut opts = CoverOptionsComplex::new(10, 0.2);
        opts.seed_scan_step = 2e-3;
        opts.tau_radial_steps = 4;
        opts.tau_angular_steps = 8;
        let result = cover_enumerate_complex(&h, &opts).unwrap();
        assert!(!result.disks.is_empty());
        let target = h.target();
        let covered = result
            .disks
            .iter()
            .any(|disk| (disk.center - target).norm() <= disk.radius);
        assert!(covered, "target {} not covered", target);
        for w in result.disks.windows(2) {
            assert!(w[0].center.arg() <= w[1].center.arg());
        }
    }

    #[test]
    fn cover_delta_zero_has_no_charges() {
        let h = resonant_h2();
        let mut opts = CoverOptionsComplex::new(10, 0.0);
        opts.seed_scan_step = 5e-3;
        opts.tau_radial_steps = 3;
        opts.tau_angular_steps = 6;
        let result = cover_enumerate_complex(&h, &opts).unwrap();
        assert_eq!(result.stats.branch_events, 0);
        assert!(result.disks.iter().all(|d| d.branch_count == 0));
    }
}
