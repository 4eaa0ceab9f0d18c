//! Fourier transform of the stationary measure and its decay diagnostics.
//!
//! The transform factors as the infinite product over `n >= 0` of
//! `sum_j p_j exp(-2 pi i <xi, A^n a_j>)`; truncating at depth `N` leaves
//! a tail controlled by `2 pi |xi| max_j |a_j| theta^(-N-1) theta/(theta-1)`.
//! Renormalizing the frequency to `eta = (A^t)^N xi` with `|eta| ~ 1` and
//! bounding each factor through the elementary inequality
//! `|sum p_j e^(-2 pi i a_j)| <= 1 - 2 pi eps ||a_k||^2` (distance to the
//! nearest integer) yields the computable product upper bound `Psi`.

use nalgebra::DVector;
use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ifs::HomogeneousIfs;
use crate::linalg::{dist_to_int, vec_inf_norm};
use crate::sample::{rng_from_seed, unit_direction};

#[derive(Debug, Error)]
pub enum FourierError {
    #[error("expansion factor theta = {0} is not > 1")]
    NonContractive(f64),
    #[error("|xi|_inf = {0} < 1; frequency renormalization undefined")]
    FrequencyTooSmall(f64),
    #[error("invalid parameter: {0}")]
    BadParams(&'static str),
    #[error("all shell suprema fell below tolerance; decay exponent is +inf")]
    DegenerateFit,
}

/// A frequency vector (cycles per unit; kernel `exp(-2 pi i <xi, x>)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Frequency(pub DVector<f64>);

impl Frequency {
    pub fn new(xi: DVector<f64>) -> Result<Self, FourierError> {
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(FourierError::BadParams("frequency entries must be finite"));
        }
        Ok(Frequency(xi))
    }

    pub fn from_slice(xs: &[f64]) -> Result<Self, FourierError> {
        Self::new(DVector::from_row_slice(xs))
    }
}

/// Truncated evaluation of the transform with a rigorous tail estimate.
#[derive(Debug, Clone)]
pub struct TruncatedTransform {
    pub value: Complex<f64>,
    pub truncation_depth: usize,
    pub tail_bound: f64,
}

/// One shell of a decay fit: nominal radius, measured supremum and the
/// unit direction achieving it.
#[derive(Debug, Clone)]
pub struct ShellRecord {
    pub radius: f64,
    pub sup_abs: f64,
    pub argmax_direction: DVector<f64>,
}

/// Power-decay exponent fitted over geometric shells.
#[derive(Debug, Clone)]
pub struct DecayFit {
    /// Fitted exponent: `sup |mu_hat| ~ r^(-gamma)` along the shells.
    pub gamma: f64,
    pub intercept: f64,
    pub r2: f64,
    pub shells: Vec<ShellRecord>,
}

/// Restriction of sampled directions for [`decay_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionFilter {
    All,
    /// Keep only directions whose `l`-th complex block (1-indexed, even
    /// dimension) has the maximal modulus among blocks.
    DominantBlock(usize),
}

/// `exp(i t)` with forced symmetry `phase(-t) = conj(phase(t))` so that
/// Hermitian identities hold bitwise.
fn unit_phase(t: f64) -> Complex<f64> {
    let (s, c) = t.abs().sin_cos();
    Complex::new(c, if t.is_sign_negative() { -s } else { s })
}

/// The factor sequence `f_n(xi) = sum_j p_j exp(-2 pi i <(A^t)^n xi, a_j>)`
/// for `n = 0..count`, with `(A^t)^n xi` accumulated by repeated products.
fn factor_sequence(ifs: &HomogeneousIfs, xi: &DVector<f64>, count: usize) -> Vec<Complex<f64>> {
    let at = ifs.map_a().transpose();
    let mut eta = xi.clone();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut f = Complex::new(0.0, 0.0);
        for (a, &p) in ifs.digits.iter().zip(ifs.probs.iter()) {
            let t = -2.0 * std::f64::consts::PI * eta.dot(a);
            f += p * unit_phase(t);
        }
        out.push(f);
        eta = &at * eta;
    }
    out
}

/// Evaluate the transform at `xi` by the truncated product, with the
/// truncation depth chosen minimally so the tail bound is at most `tol`.
pub fn mu_hat(
    ifs: &HomogeneousIfs,
    xi: &Frequency,
    tol: f64,
) -> Result<TruncatedTransform, FourierError> {
    if !(ifs.theta > 1.0) {
        return Err(FourierError::NonContractive(ifs.theta));
    }
    if !(tol > 0.0) {
        return Err(FourierError::BadParams("tol must be > 0"));
    }
    let theta = ifs.theta;
    let c = 2.0 * std::f64::consts::PI * xi.0.norm() * ifs.digit_max_norm() * theta
        / (theta - 1.0);
    let tail = |n: usize| c * theta.powi(-(n as i32) - 1);
    let mut depth = if c <= tol {
        0
    } else {
        (((c / tol).ln() / theta.ln()).ceil() as i64 - 1).max(0) as usize
    };
    while tail(depth) > tol {
        depth += 1;
    }
    let value = factor_sequence(ifs, &xi.0, depth + 1)
        .into_iter()
        .fold(Complex::new(1.0, 0.0), |acc, f| acc * f);
    Ok(TruncatedTransform {
        value,
        truncation_depth: depth,
        tail_bound: tail(depth),
    })
}

/// Pull `xi` back to the window `|eta|_inf >= 1` by the maximal power of
/// `A^t`. Returns `(eta, N)` with `eta = (A^t)^N xi`.
///
/// For `d = 1` the result satisfies `|eta| in [1, theta)` exactly; in
/// higher dimension the infinity norm can overshoot up to a `sqrt(d)`
/// factor while the 2-norm still contracts by exactly `1/theta` per step.
pub fn renormalize_frequency(
    ifs: &HomogeneousIfs,
    xi: &Frequency,
) -> Result<(Frequency, usize), FourierError> {
    if !(ifs.theta > 1.0) {
        return Err(FourierError::NonContractive(ifs.theta));
    }
    let norm0 = vec_inf_norm(&xi.0);
    if norm0 < 1.0 {
        return Err(FourierError::FrequencyTooSmall(norm0));
    }
    let at = ifs.map_a().transpose();
    let norm2_0 = xi.0.norm();
    let mut eta = xi.0.clone();
    let mut best = (xi.0.clone(), 0usize);
    let mut n = 0usize;
    loop {
        n += 1;
        eta = &at * eta;
        if vec_inf_norm(&eta) >= 1.0 {
            best = (eta.clone(), n);
        }
        // once theta^(-n) |xi|_2 < 1 no later iterate can reach 1 again
        if norm2_0 * ifs.theta.powi(-(n as i32)) < 1.0 {
            break;
        }
    }
    Ok((Frequency(best.0), best.1))
}

/// The product upper bound on `|mu_hat|` after frequency renormalization:
/// `prod_(n=1..N) (1 - 2 pi eps max_j ||<eta, A^(-n) a_j>||^2)`, where
/// `||.||` is the distance to the nearest integer and `eps = min_j p_j`.
///
/// The system is translation-normalized internally (the bound needs the
/// zero digit present; translation only changes the phase of `mu_hat`).
pub fn psi_bound(ifs: &HomogeneousIfs, xi: &Frequency) -> Result<f64, FourierError> {
    let (normalized, _) = ifs
        .normalize_translation()
        .map_err(|_| FourierError::NonContractive(ifs.theta))?;
    let (eta, depth) = renormalize_frequency(&normalized, xi)?;
    let eps = normalized.epsilon_min();
    // <eta, A^(-n) a_j> = <(theta O)^n eta, a_j>
    let up = normalized.rotation_matrix() * normalized.theta;
    let mut v = eta.0.clone();
    let mut psi = 1.0f64;
    for _ in 1..=depth {
        v = &up * v;
        let mut worst = 0.0f64;
        for a in &normalized.digits {
            if vec_inf_norm(a) == 0.0 {
                continue;
            }
            worst = worst.max(dist_to_int(v.dot(a)));
        }
        psi *= 1.0 - 2.0 * std::f64::consts::PI * eps * worst * worst;
    }
    Ok(psi)
}

/// Residual of the one-step functional equation
/// `prod_(n=0..N) f_n(xi) = f_0(xi) * prod_(n=0..N-1) f_n(A^t xi)`,
/// an algebraic identity that must hold to rounding error.
pub fn one_step_factor_identity_check(ifs: &HomogeneousIfs, xi: &Frequency, n: usize) -> f64 {
    let lhs = factor_sequence(ifs, &xi.0, n + 1)
        .into_iter()
        .fold(Complex::new(1.0, 0.0), |acc, f| acc * f);
    let at = ifs.map_a().transpose();
    let shifted = &at * &xi.0;
    let rhs_tail = factor_sequence(ifs, &shifted, n)
        .into_iter()
        .fold(Complex::new(1.0, 0.0), |acc, f| acc * f);
    let f0 = factor_sequence(ifs, &xi.0, 1)[0];
    (lhs - f0 * rhs_tail).norm()
}

/// Check the elementary factor inequality
/// `|sum_j p_j exp(-2 pi i alpha_j)| <= 1 - 2 pi eps ||alpha_k||^2`
/// (with `alpha_0 = 0`), allowing `1e-12` rounding slack.
pub fn lemma_elem_check(probs: &[f64], alphas: &[f64], k: usize) -> bool {
    assert_eq!(probs.len(), alphas.len());
    assert_eq!(alphas[0], 0.0, "alpha_0 must be zero");
    assert!(k < alphas.len());
    let eps = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut s = Complex::new(0.0, 0.0);
    for (&p, &a) in probs.iter().zip(alphas.iter()) {
        s += p * unit_phase(-2.0 * std::f64::consts::PI * a);
    }
    let nk = dist_to_int(alphas[k]);
    s.norm() <= 1.0 - 2.0 * std::f64::consts::PI * eps * nk * nk + 1e-12
}

fn block_modulus(xi: &DVector<f64>, block: usize) -> f64 {
    let i = 2 * (block - 1);
    (xi[i] * xi[i] + xi[i + 1] * xi[i + 1]).sqrt()
}

fn passes_filter(xi: &DVector<f64>, filter: DirectionFilter) -> bool {
    match filter {
        DirectionFilter::All => true,
        DirectionFilter::DominantBlock(l) => {
            let s = xi.len() / 2;
            let target = block_modulus(xi, l);
            (1..=s).all(|b| block_modulus(xi, b) <= target)
        }
    }
}

/// Fit the empirical decay exponent over geometric shells `r_k = theta^k`,
/// `k = 1..=shell_count`.
///
/// Per shell the supremum of `|mu_hat|` is taken over: the coordinate axis
/// directions evaluated exactly at the shell radius, plus seeded random
/// directions at radii jittered across `[r_k, r_k * theta)` to probe the
/// whole annulus. `gamma` is the negative slope of the least-squares line
/// through `(log r_k, log sup_k)`.
pub fn decay_fit(
    ifs: &HomogeneousIfs,
    shell_count: usize,
    directions_per_shell: usize,
    seed: u64,
    tol: f64,
    filter: DirectionFilter,
) -> Result<DecayFit, FourierError> {
    if shell_count < 3 {
        return Err(FourierError::BadParams("shell_count must be >= 3"));
    }
    if !(ifs.theta > 1.0) {
        return Err(FourierError::NonContractive(ifs.theta));
    }
    if let DirectionFilter::DominantBlock(l) = filter {
        if ifs.dim % 2 != 0 || l == 0 || l > ifs.dim / 2 {
            return Err(FourierError::BadParams(
                "dominant-block filter needs even dimension and 1 <= l <= d/2",
            ));
        }
    }
    let d = ifs.dim;
    let axis_dirs: Vec<DVector<f64>> = (0..d)
        .map(|i| {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            v
        })
        .filter(|v| passes_filter(v, filter))
        .collect();

    let shells: Vec<ShellRecord> = (1..=shell_count)
        .into_par_iter()
        .map(|k| {
            let radius = ifs.theta.powi(k as i32);
            let mut rng = rng_from_seed(seed);
            rng.set_stream(k as u64);
            let mut sup = f64::NEG_INFINITY;
            let mut argmax = DVector::zeros(d);
            let eval = |dir: &DVector<f64>, r: f64, sup: &mut f64, argmax: &mut DVector<f64>| {
                let xi = Frequency(dir * r);
                let v = mu_hat(ifs, &xi, tol)
                    .expect("validated parameters")
                    .value
                    .norm();
                if v > *sup {
                    *sup = v;
                    *argmax = dir.clone();
                }
            };
            for dir in &axis_dirs {
                eval(dir, radius, &mut sup, &mut argmax);
            }
            for _ in axis_dirs.len()..directions_per_shell {
                let dir = loop {
                    let cand = unit_direction(d, &mut rng);
                    if passes_filter(&cand, filter) {
                        break cand;
                    }
                };
                let u: f64 = rng.random();
                eval(&dir, radius * ifs.theta.powf(u), &mut sup, &mut argmax);
            }
            ShellRecord {
                radius,
                sup_abs: sup,
                argmax_direction: argmax,
            }
        })
        .collect();

    if shells.iter().all(|s| s.sup_abs < tol) {
        return Err(FourierError::DegenerateFit);
    }
    let pts: Vec<(f64, f64)> = shells
        .iter()
        .filter(|s| s.sup_abs > tol)
        .map(|s| (s.radius.ln(), s.sup_abs.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(FourierError::DegenerateFit);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let pred = intercept + slope * p.0;
            (p.1 - pred) * (p.1 - pred)
        })
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit {
        gamma: -slope,
        intercept,
        r2,
        shells,
    })
}

/// Random valid IFS (zero digit included) for randomized checks.
pub fn random_instance<R: Rng>(dim: usize, digit_count: usize, rng: &mut R) -> HomogeneousIfs {
    use crate::ifs::RotationSpec;
    use crate::sample::{random_orthogonal, random_probs};
    let theta = rng.random_range(1.2..3.0);
    let o = random_orthogonal(dim, rng);
    let mut digits = vec![DVector::zeros(dim)];
    for _ in 1..digit_count {
        digits.push(DVector::from_iterator(
            dim,
            (0..dim).map(|_| rng.random_range(-2.0..2.0)),
        ));
    }
    let probs = random_probs(digit_count, rng);
    HomogeneousIfs::new(dim, theta, RotationSpec::ExplicitMatrix(o), digits, probs)
        .expect("dimensions consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{bernoulli_convolution, cantor_ifs};

    #[test]
    fn zero_frequency_gives_one() {
        // weights summing to 1 in exact arithmetic give exactly 1
        let ifs = bernoulli_convolution(2.0);
        let t = mu_hat(&ifs, &Frequency::from_slice(&[0.0]).unwrap(), 1e-12).unwrap();
        assert_eq!(t.value, Complex::new(1.0, 0.0));
        assert_eq!(t.truncation_depth, 0);
        // general weights: exact up to the rounding of sum(p)
        let ifs = random_instance(2, 3, &mut rng_from_seed(5));
        let t = mu_hat(&ifs, &Frequency::from_slice(&[0.0, 0.0]).unwrap(), 1e-12).unwrap();
        assert!((t.value - Complex::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn uniform_measure_vanishes_at_integers() {
        // lambda = 1/2, digits {0,1}, uniform weights: the measure is
        // uniform on [0,2] and mu_hat(1) = 0
        let ifs = bernoulli_convolution(2.0);
        let t = mu_hat(&ifs, &Frequency::from_slice(&[1.0]).unwrap(), 1e-12).unwrap();
        assert!(t.value.norm() <= 1e-12 + t.tail_bound);
    }

    #[test]
    fn uniform_measure_matches_closed_form() {
        // |mu_hat(xi)| = |sin(2 pi xi)| / (2 pi xi) for uniform on [0,2]
        let ifs = bernoulli_convolution(2.0);
        for &xi in &[0.3, 0.75, 1.3, 2.6, 7.9] {
            let t = mu_hat(&ifs, &Frequency::from_slice(&[xi]).unwrap(), 1e-13).unwrap();
            let exact = ((2.0 * std::f64::consts::PI * xi).sin()
                / (2.0 * std::f64::consts::PI * xi))
                .abs();
            assert!(
                (t.value.norm() - exact).abs() < 1e-10,
                "xi = {xi}: {} vs {exact}",
                t.value.norm()
            );
        }
    }

    #[test]
    fn cantor_telescopes_along_powers() {
        let ifs = cantor_ifs(3.0);
        let v1 = mu_hat(&ifs, &Frequency::from_slice(&[1.0]).unwrap(), 1e-13).unwrap();
        let v3 = mu_hat(&ifs, &Frequency::from_slice(&[3.0]).unwrap(), 1e-13).unwrap();
        assert!((v1.value.norm() - v3.value.norm()).abs() < 1e-11);
        // pre-computed by direct high-precision product evaluation
        assert!((v1.value.norm() - 0.37143735670876565).abs() < 1e-9);
    }

    #[test]
    fn hermitian_symmetry_exact() {
        let mut rng = rng_from_seed(17);
        for _ in 0..25 {
            let ifs = random_instance(2, 3, &mut rng);
            let xi = DVector::from_iterator(2, (0..2).map(|_| rng.random_range(-9.0..9.0)));
            let plus = mu_hat(&ifs, &Frequency(xi.clone()), 1e-10).unwrap();
            let minus = mu_hat(&ifs, &Frequency(-xi), 1e-10).unwrap();
            assert_eq!(plus.value.re, minus.value.re);
            assert_eq!(plus.value.im, -minus.value.im);
        }
    }

    #[test]
    fn modulus_never_exceeds_one_plus_tail() {
        let mut rng = rng_from_seed(23);
        for _ in 0..50 {
            let ifs = random_instance(3, 4, &mut rng);
            let xi = DVector::from_iterator(3, (0..3).map(|_| rng.random_range(-20.0..20.0)));
            let t = mu_hat(&ifs, &Frequency(xi), 1e-8).unwrap();
            assert!(t.value.norm() <= 1.0 + t.tail_bound);
        }
    }

    #[test]
    fn renormalize_dyadic_example() {
        let ifs = bernoulli_convolution(2.0);
        let (eta, n) =
            renormalize_frequency(&ifs, &Frequency::from_slice(&[10.0]).unwrap()).unwrap();
        assert_eq!(n, 3);
        assert_eq!(eta.0[0], 1.25);
    }

    #[test]
    fn renormalize_boundary() {
        let ifs = bernoulli_convolution(2.0);
        let (eta, n) =
            renormalize_frequency(&ifs, &Frequency::from_slice(&[1.0]).unwrap()).unwrap();
        assert_eq!(n, 0);
        assert_eq!(eta.0[0], 1.0);
        assert!(matches!(
            renormalize_frequency(&ifs, &Frequency::from_slice(&[0.7]).unwrap()),
            Err(FourierError::FrequencyTooSmall(_))
        ));
    }

    #[test]
    fn renormalize_is_isometric_per_step() {
        let mut rng = rng_from_seed(31);
        for _ in 0..20 {
            let ifs = random_instance(2, 3, &mut rng);
            let xi = DVector::from_iterator(2, (0..2).map(|_| rng.random_range(3.0..40.0)));
            let norm0 = xi.norm();
            let (eta, n) = renormalize_frequency(&ifs, &Frequency(xi)).unwrap();
            let expected = norm0 * ifs.theta.powi(-(n as i32));
            assert!((eta.0.norm() - expected).abs() < 1e-9 * expected.max(1.0));
            assert!(vec_inf_norm(&eta.0) >= 1.0);
        }
    }

    #[test]
    fn psi_is_one_on_empty_product() {
        let ifs = bernoulli_convolution(2.0);
        // |xi| = 1: N = 0, empty product
        let psi = psi_bound(&ifs, &Frequency::from_slice(&[1.0]).unwrap()).unwrap();
        assert_eq!(psi, 1.0);
    }

    #[test]
    fn psi_trivial_at_dyadic_frequencies() {
        let ifs = bernoulli_convolution(2.0);
        let psi = psi_bound(&ifs, &Frequency::from_slice(&[4.0]).unwrap()).unwrap();
        assert_eq!(psi, 1.0);
    }

    #[test]
    fn psi_dominates_mu_hat() {
        let mut rng = rng_from_seed(41);
        for _ in 0..60 {
            let dim = rng.random_range(1..=3usize);
            let ifs = random_instance(dim, 3, &mut rng);
            let xi = DVector::from_iterator(
                dim,
                (0..dim).map(|_| {
                    rng.random_range(1.0..30.0) * [-1.0, 1.0][rng.random_range(0..2usize)]
                }),
            );
            if vec_inf_norm(&xi) < 1.0 {
                continue;
            }
            let t = mu_hat(&ifs, &Frequency(xi.clone()), 1e-12).unwrap();
            let psi = psi_bound(&ifs, &Frequency(xi)).unwrap();
            assert!(
                t.value.norm() <= psi + t.tail_bound + 1e-10,
                "dominance violated: |mu| = {}, psi = {psi}",
                t.value.norm()
            );
        }
    }

    #[test]
    fn identity_residual_is_tiny() {
        let mut rng = rng_from_seed(47);
        for _ in 0..20 {
            let ifs = random_instance(2, 3, &mut rng);
            let xi = DVector::from_iterator(2, (0..2).map(|_| rng.random_range(-15.0..15.0)));
            let res = one_step_factor_identity_check(&ifs, &Frequency(xi), 20);
            assert!(res < 1e-12, "residual {res}");
        }
    }

    #[test]
    fn identity_residual_zero_at_depth_zero() {
        let ifs = cantor_ifs(3.0);
        let res =
            one_step_factor_identity_check(&ifs, &Frequency::from_slice(&[2.7]).unwrap(), 0);
        assert_eq!(res, 0.0);
    }

    #[test]
    fn identity_residual_cantor_pi() {
        let ifs = cantor_ifs(3.0);
        let res = one_step_factor_identity_check(
            &ifs,
            &Frequency::from_slice(&[std::f64::consts::PI]).unwrap(),
            30,
        );
        assert!(res < 1e-12);
    }

    #[test]
    fn lemma_elem_examples() {
        // all angles zero: LHS = 1 <= 1
        assert!(lemma_elem_check(&[0.25, 0.75], &[0.0, 0.0], 1));
        // p = (1/2, 1/2), alpha = (0, 1/2): 0 <= 1 - pi/4
        assert!(lemma_elem_check(&[0.5, 0.5], &[0.0, 0.5], 1));
        let mut rng = rng_from_seed(53);
        for _ in 0..2000 {
            let m = rng.random_range(1..=4usize);
            let probs = crate::sample::random_probs(m + 1, &mut rng);
            let mut alphas = vec![0.0];
            for _ in 0..m {
                alphas.push(rng.random_range(-3.0..3.0));
            }
            let k = rng.random_range(1..=m);
            assert!(lemma_elem_check(&probs, &alphas, k));
        }
    }

    #[test]
    fn decay_fit_uniform_slope_near_one() {
        let ifs = bernoulli_convolution(2.0);
        let fit = decay_fit(&ifs, 10, 128, 7, 1e-9, DirectionFilter::All).unwrap();
        assert!(fit.gamma > 0.8 && fit.gamma < 1.2, "gamma = {}", fit.gamma);
        assert!(fit.r2 > 0.9, "r2 = {}", fit.r2);
    }

    #[test]
    fn decay_fit_cantor_shell_floor() {
        // shells at exact powers of 3 include the axis evaluation at 3^k,
        // which telescopes back to |mu_hat(1)|: the sup cannot drop below it
        let ifs = cantor_ifs(3.0);
        let fit = decay_fit(&ifs, 8, 64, 11, 1e-9, DirectionFilter::All).unwrap();
        let floor = 0.37143735670876565;
        for s in &fit.shells {
            assert!(s.sup_abs >= floor - 1e-9);
        }
        assert!(fit.gamma.abs() < 0.05, "gamma = {}", fit.gamma);
    }

    #[test]
    fn decay_fit_deterministic() {
        let ifs = bernoulli_convolution(2.0);
        let a = decay_fit(&ifs, 6, 64, 99, 1e-9, DirectionFilter::All).unwrap();
        let b = decay_fit(&ifs, 6, 64, 99, 1e-9, DirectionFilter::All).unwrap();
        assert_eq!(a.gamma, b.gamma);
        assert_eq!(a.r2, b.r2);
        for (x, y) in a.shells.iter().zip(b.shells.iter()) {
            assert_eq!(x.sup_abs, y.sup_abs);
            assert_eq!(x.argmax_direction, y.argmax_direction);
        }
    }

    #[test]
    fn decay_fit_dominant_block_filter() {
        let ifs = crate::ifs::HomogeneousIfs::uniform(
            2,
            2.0,
            crate::ifs::RotationSpec::BlockAngles(vec![0.23]),
            vec![DVector::zeros(2), DVector::from_row_slice(&[1.0, 0.0])],
        )
        .unwrap();
        let fit = decay_fit(&ifs, 5, 32, 3, 1e-9, DirectionFilter::DominantBlock(1)).unwrap();
        assert_eq!(fit.shells.len(), 5);
        assert!(fit.shells.iter().all(|s| s.sup_abs > 0.0));
    }
}
