//! Classification of monic integer polynomials and the algebraic numbers
//! they define: Pisot (dominant real root > 1, conjugates strictly inside
//! the unit circle), Salem (conjugates in the closed disk, at least one on
//! the circle, not Pisot) and Garsia (all roots of modulus > 1, constant
//! term of modulus 2).
//!
//! Roots come from the companion-matrix eigenvalues with Newton
//! refinement. Moduli within `tol` of the unit circle make Pisot/Garsia
//! verdicts unreliable; unless the root pattern is the Salem one, such
//! polynomials are reported as undecided rather than guessed.

use nalgebra::DMatrix;
use num_complex::Complex;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AlgebraicError {
    #[error("polynomial must be monic with nonzero constant term and degree >= 1")]
    Malformed,
    #[error("polynomial is reducible: found integer factor {0:?} (coefficients high to low)")]
    Reducible(Vec<i64>),
    #[error("root refinement residual {residual} above tolerance; classification unreliable")]
    IllConditioned { residual: f64 },
    #[error("a root modulus lies within tolerance of the unit circle and the root pattern is not of Salem type")]
    Undecided,
}

/// A monic integer polynomial, coefficients stored high-to-low.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerPolynomial {
    coeffs: Vec<i64>,
}

impl IntegerPolynomial {
    pub fn new(coeffs_high_to_low: Vec<i64>) -> Result<Self, AlgebraicError> {
        if coeffs_high_to_low.len() < 2
            || coeffs_high_to_low[0] != 1
            || *coeffs_high_to_low.last().unwrap() == 0
        {
            return Err(AlgebraicError::Malformed);
        }
        Ok(Self {
            coeffs: coeffs_high_to_low,
        })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn constant_term(&self) -> i64 {
        *self.coeffs.last().unwrap()
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn eval_complex(&self, z: Complex<f64>) -> Complex<f64> {
        self.coeffs
            .iter()
            .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c as f64)
    }

    fn eval_derivative(&self, z: Complex<f64>) -> Complex<f64> {
        let deg = self.degree();
        self.coeffs[..deg]
            .iter()
            .enumerate()
            .fold(Complex::new(0.0, 0.0), |acc, (i, &c)| {
                acc * z + (deg - i) as f64 * c as f64
            })
    }

    /// Exact division by a monic integer polynomial; `None` if it does not
    /// divide. Arithmetic in `i128` to dodge intermediate overflow.
    fn divide_exact(&self, divisor: &[i64]) -> Option<Vec<i64>> {
        let n = self.coeffs.len();
        let m = divisor.len();
        if m > n || divisor[0] != 1 {
            return None;
        }
        let mut rem: Vec<i128> = self.coeffs.iter().map(|&c| c as i128).collect();
        let mut quot = vec![0i128; n - m + 1];
        for i in 0..=(n - m) {
            let lead = rem[i];
            quot[i] = lead;
            for (j, &dc) in divisor.iter().enumerate() {
                rem[i + j] -= lead * dc as i128;
            }
        }
        if rem.iter().all(|&r| r == 0) {
            Some(quot.iter().map(|&q| q as i64).collect())
        } else {
            None
        }
    }

    /// Trial factorization: all monic linear factors (integer roots divide
    /// the constant term) and, for degree >= 4, monic quadratic factors
    /// within the Cauchy root bound. This certifies irreducibility up to
    /// degree 5; beyond that it is only a partial check.
    pub fn trial_factor(&self) -> Option<Vec<i64>> {
        if self.degree() < 2 {
            return None;
        }
        let a0 = self.constant_term();
        for r in divisors_with_sign(a0) {
            if self.divide_exact(&[1, -r]).is_some() {
                return Some(vec![1, -r]);
            }
        }
        if self.degree() >= 4 {
            let big = 1.0 + self.coeffs.iter().map(|&c| c.abs()).max().unwrap() as f64;
            let b_bound = (2.0 * big).ceil() as i64;
            for c in divisors_with_sign(a0) {
                for b in -b_bound..=b_bound {
                    if self.divide_exact(&[1, b, c]).is_some() {
                        return Some(vec![1, b, c]);
                    }
                }
            }
        }
        None
    }

    /// All complex roots: companion-matrix eigenvalues plus Newton polish,
    /// sorted by `(re, im)` for determinism.
    ///
    /// The Schur iteration is run with a bounded step count; companion
    /// matrices of sparse polynomials can stall it, in which case the
    /// matrix is retried under a fixed orthogonal similarity and finally
    /// the roots are seeded by a Durand-Kerner sweep instead.
    pub fn roots(&self, tol: f64) -> Result<Vec<Complex<f64>>, AlgebraicError> {
        let deg = self.degree();
        let mut companion = DMatrix::<f64>::zeros(deg, deg);
        for i in 1..deg {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            companion[(i, deg - 1)] = -self.coeffs[deg - i] as f64;
        }
        let mut roots = companion_eigenvalues(&companion)
            .unwrap_or_else(|| self.durand_kerner_roots());
        for z in roots.iter_mut() {
            for _ in 0..40 {
                let f = self.eval_complex(*z);
                let df = self.eval_derivative(*z);
                if df.norm() == 0.0 {
                    break;
                }
                let step = f / df;
                *z -= step;
                if step.norm() <= 1e-16 * z.norm().max(1.0) {
                    break;
                }
            }
        }
        roots.sort_by(|a, b| {
            (a.re, a.im)
                .partial_cmp(&(b.re, b.im))
                .expect("finite roots")
        });
        let worst = roots
            .iter()
            .map(|&z| {
                let scale: f64 = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (c as f64).abs() * z.norm().powi((deg - i) as i32))
                    .sum::<f64>()
                    .max(1.0);
                self.eval_complex(z).norm() / scale
            })
            .fold(0.0f64, f64::max);
        if worst > tol {
            return Err(AlgebraicError::IllConditioned { residual: worst });
        }
        Ok(roots)
    }

    /// Simultaneous root iteration started on a circle of Cauchy-bound
    /// radius; only used when the Schur route stalls.
    fn durand_kerner_roots(&self) -> Vec<Complex<f64>> {
        let deg = self.degree();
        let radius = 1.0 + self.coeffs.iter().map(|&c| c.abs()).max().unwrap() as f64;
        let mut zs: Vec<Complex<f64>> = (0..deg)
            .map(|k| {
                let ang = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / deg as f64 + 0.4;
                Complex::from_polar(radius, ang)
            })
            .collect();
        for _ in 0..500 {
            let mut moved = 0.0f64;
            for i in 0..deg {
                let mut denom = Complex::new(1.0, 0.0);
                for j in 0..deg {
                    if j != i {
                        denom *= zs[i] - zs[j];
                    }
                }
                if denom.norm() == 0.0 {
                    continue;
                }
                let step = self.eval_complex(zs[i]) / denom;
                zs[i] -= step;
                moved = moved.max(step.norm());
            }
            if moved < 1e-14 * radius {
                break;
            }
        }
        zs
    }
}

/// Bounded-iteration Schur eigenvalues, retried under fixed orthogonal
/// similarities when the plain companion form does not converge.
fn companion_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    use crate::sample::{random_orthogonal, rng_from_seed};
    let deg = m.nrows();
    let max_iter = 100 * deg.max(4);
    if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, max_iter) {
        return Some(schur.complex_eigenvalues().iter().cloned().collect());
    }
    let mut rng = rng_from_seed(0x5eed);
    for _ in 0..3 {
        let q = random_orthogonal(deg, &mut rng);
        let sim = &q * m * q.transpose();
        if let Some(schur) = nalgebra::linalg::Schur::try_new(sim, 1e-15, max_iter) {
            return Some(schur.complex_eigenvalues().iter().cloned().collect());
        }
    }
    None
}

fn divisors_with_sign(n: i64) -> Vec<i64> {
    let n = n.unsigned_abs();
    let mut out = Vec::new();
    let mut d = 1u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d as i64);
            out.push(-(d as i64));
            let q = (n / d) as i64;
            if q as u64 != d {
                out.push(q);
                out.push(-q);
            }
        }
        d += 1;
    }
    out.sort_unstable();
    out
}

/// Outcome of [`classify`].
#[derive(Debug, Clone)]
pub struct AlgebraicClass {
    pub is_pisot: bool,
    pub is_salem: bool,
    pub is_garsia: bool,
    /// Largest real root (NaN if the polynomial has no real root).
    pub dominant_root: f64,
    pub root_moduli: Vec<f64>,
    pub roots: Vec<Complex<f64>>,
    /// Whether trial division certifies irreducibility (degree <= 5).
    pub irreducibility_certified: bool,
}

/// Classify a monic integer polynomial at unit-circle tolerance `tol`.
pub fn classify(poly: &IntegerPolynomial, tol: f64) -> Result<AlgebraicClass, AlgebraicError> {
    if let Some(factor) = poly.trial_factor() {
        if factor.len() < poly.coeffs.len() {
            return Err(AlgebraicError::Reducible(factor));
        }
    }
    let roots = poly.roots(tol)?;
    let moduli: Vec<f64> = roots.iter().map(|z| z.norm()).collect();

    let is_real = |z: &Complex<f64>| z.im.abs() <= tol * (1.0 + z.norm());
    let dominant = roots
        .iter()
        .filter(|z| is_real(z))
        .map(|z| z.re)
        .fold(f64::NAN, f64::max);
    let dominant_idx = roots.iter().position(|z| is_real(z) && z.re == dominant);

    let near_circle: Vec<usize> = (0..roots.len())
        .filter(|&i| (moduli[i] - 1.0).abs() <= tol)
        .collect();

    let garsia_const = poly.constant_term().abs() == 2;
    let has_dominant = dominant.is_finite() && dominant > 1.0 + tol;

    if near_circle.is_empty() {
        let others_inside = (0..roots.len())
            .filter(|&i| Some(i) != dominant_idx)
            .all(|i| moduli[i] < 1.0 - tol);
        let all_outside = moduli.iter().all(|&m| m > 1.0 + tol);
        Ok(AlgebraicClass {
            is_pisot: has_dominant && others_inside,
            is_salem: false,
            is_garsia: has_dominant && all_outside && garsia_const,
            dominant_root: dominant,
            root_moduli: moduli,
            roots,
            irreducibility_certified: poly.degree() <= 5,
        })
    } else {
        // roots on the circle are only consistent with the Salem pattern:
        // dominant real root above 1, everything else in the closed disk,
        // circle roots in conjugate pairs
        let others_in_disk = (0..roots.len())
            .filter(|&i| Some(i) != dominant_idx)
            .all(|i| moduli[i] <= 1.0 + tol);
        let mut paired = true;
        for &i in &near_circle {
            let z = roots[i];
            if !is_real(&z) {
                let conj_found = near_circle
                    .iter()
                    .any(|&j| (roots[j] - z.conj()).norm() <= 1e-6 * (1.0 + z.norm()));
                paired &= conj_found;
            }
        }
        if has_dominant && others_in_disk && paired {
            Ok(AlgebraicClass {
                is_pisot: false,
                is_salem: true,
                is_garsia: false,
                dominant_root: dominant,
                root_moduli: moduli,
                roots,
                irreducibility_certified: poly.degree() <= 5,
            })
        } else {
            Err(AlgebraicError::Undecided)
        }
    }
}

/// Match a contraction ratio `lambda` in `(0,1)` against candidate minimal
/// polynomials of `1/lambda`: the first candidate with a real root within
/// `1e-9` of `1/lambda` determines the label. Candidates that fail to
/// classify are skipped.
pub fn label_contraction(lambda: f64, candidates: &[IntegerPolynomial]) -> Option<AlgebraicClass> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return None;
    }
    let theta = 1.0 / lambda;
    for poly in candidates {
        let class = match classify(poly, DEFAULT_TOL) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let hit = class
            .roots
            .iter()
            .any(|z| z.im.abs() <= 1e-9 && (z.re - theta).abs() <= 1e-9 * theta.max(1.0));
        if hit {
            return Some(class);
        }
    }
    None
}
