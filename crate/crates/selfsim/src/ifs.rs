//! Homogeneous self-similar IFS: construction, validation, normal forms,
//! discrete atom clouds and chaos-game sampling.
//!
//! The system is `f_j(x) = (1/theta) * O * x + a_j`, `j = 0..=m`, with a
//! single orthogonal part `O` shared by all maps. Its stationary measure
//! is the infinite convolution of the discrete measures `sum_j p_j
//! delta(A^n a_j)` over `n >= 0`, supported on the attractor.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::linalg::{orthogonality_residual, rank, vec_inf_norm};

/// Default cap on enumerated atom counts: `(m+1)^(N+1)` must stay below this.
pub const DEFAULT_ATOM_CAP: usize = 1 << 24;

/// Chaos-game steps discarded before samples are collected.
pub const CHAOS_BURN_IN: usize = 128;

/// Orthogonality tolerance for rotation parts.
pub const ORTHO_TOL: f64 = 1e-10;

/// Residual tolerance for the eigen-block decomposition.
pub const EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IfsError {
    #[error("dimension mismatch: expected {expected}, found {found} in {context}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },
    #[error("probability vector has {found} entries for {expected} digits")]
    ProbCountMismatch { expected: usize, found: usize },
    #[error("expansion factor theta = {0} is not > 1")]
    NonContractive(f64),
    #[error("enumeration would produce {required} atoms, above the cap {cap}")]
    CapExceeded { required: u128, cap: usize },
    #[error("rotation part has a real eigenvalue; no complex diagonal form")]
    RealEigenvalue,
}

/// Orthogonal part of the shared linear map.
///
/// `BlockAngles` is the canonical form for even dimension with non-real
/// spectrum: the matrix acts on `R^2 ~ C` blocks as multiplication by
/// `exp(-2 pi i alpha_k)`, `alpha_k` in `(0, 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RotationSpec {
    ExplicitMatrix(DMatrix<f64>),
    BlockAngles(Vec<f64>),
}

impl RotationSpec {
    /// Materialize the rotation as a `d x d` real matrix.
    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            RotationSpec::ExplicitMatrix(m) => m.clone(),
            RotationSpec::BlockAngles(angles) => {
                let mut m = DMatrix::<f64>::zeros(dim, dim);
                for (k, &alpha) in angles.iter().enumerate() {
                    let beta = 2.0 * std::f64::consts::PI * alpha;
                    let (s, c) = beta.sin_cos();
                    let i = 2 * k;
                    // multiplication by exp(-i beta) on (x, y) ~ x + i y
                    m[(i, i)] = c;
                    m[(i, i + 1)] = s;
                    m[(i + 1, i)] = -s;
                    m[(i + 1, i + 1)] = c;
                }
                m
            }
        }
    }
}

/// A homogeneous self-similar IFS together with its weight vector.
#[derive(Debug, Clone)]
pub struct HomogeneousIfs {
    pub dim: usize,
    /// Expansion factor; the contraction ratio is `1/theta`.
    pub theta: f64,
    pub rotation: RotationSpec,
    pub digits: Vec<DVector<f64>>,
    pub probs: Vec<f64>,
}

/// Analytic invariants of an IFS, as checked by [`HomogeneousIfs::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub dim: usize,
    pub digit_count: usize,
    pub contractive: bool,
    pub probs_sum: f64,
    pub probs_sum_ok: bool,
    pub probs_positive: bool,
    pub digits_distinct: bool,
    pub orthogonality_residual: f64,
    pub orthogonal_ok: bool,
    /// Rank of the digit matrix; `spanning` means it equals `dim`.
    pub digit_rank: usize,
    pub spanning: bool,
    /// Rank of `[D, A D, ..., A^(d-1) D]`; `cyclic` means it equals `dim`
    /// (affine irreducibility once the zero digit is present).
    pub cyclic_rank: usize,
    pub cyclic: bool,
}

impl ValidationReport {
    /// Structural validity plus affine irreducibility. Spanning digits are
    /// reported but not required (they matter only for the basis-type
    /// parameter analysis).
    pub fn is_valid(&self) -> bool {
        self.contractive
            && self.probs_sum_ok
            && self.probs_positive
            && self.digits_distinct
            && self.orthogonal_ok
            && self.cyclic
    }

    /// Names of failed invariants, for error reporting.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.contractive {
            out.push("contractive");
        }
        if !self.probs_sum_ok {
            out.push("probs-sum");
        }
        if !self.probs_positive {
            out.push("probs-positive");
        }
        if !self.digits_distinct {
            out.push("digits-distinct");
        }
        if !self.orthogonal_ok {
            out.push("rotation-orthogonal");
        }
        if !self.cyclic {
            out.push("cyclic");
        }
        out
    }
}

/// Level-`N` discrete approximation of the stationary measure: all sums
/// `sum_(n=0..=N) A^n b_n` with product weights, in digit-index
/// lexicographic order (first index slowest).
#[derive(Debug, Clone)]
pub struct AtomCloud {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub level: usize,
}

/// Result of [`HomogeneousIfs::complex_diagonal_form`].
#[derive(Debug, Clone)]
pub struct DiagonalForm {
    /// The conjugated system: `BlockAngles` rotation, transformed digits.
    pub ifs: HomogeneousIfs,
    /// Orthogonal change of basis `M`: new coordinates are `M x`.
    pub basis: DMatrix<f64>,
    /// Max-abs residual of `M O M^t` against the block form.
    pub eigen_residual: f64,
}

impl HomogeneousIfs {
    pub fn new(
        dim: usize,
        theta: f64,
        rotation: RotationSpec,
        digits: Vec<DVector<f64>>,
        probs: Vec<f64>,
    ) -> Result<Self, IfsError> {
        for a in &digits {
            if a.len() != dim {
                return Err(IfsError::DimensionMismatch {
                    expected: dim,
                    found: a.len(),
                    context: "digit vector",
                });
            }
        }
        match &rotation {
            RotationSpec::ExplicitMatrix(m) => {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(IfsError::DimensionMismatch {
                        expected: dim,
                        found: m.nrows(),
                        context: "rotation matrix",
                    });
                }
            }
            RotationSpec::BlockAngles(angles) => {
                if 2 * angles.len() != dim {
                    return Err(IfsError::DimensionMismatch {
                        expected: dim,
                        found: 2 * angles.len(),
                        context: "block angles",
                    });
                }
            }
        }
        if probs.len() != digits.len() {
            return Err(IfsError::ProbCountMismatch {
                expected: digits.len(),
                found: probs.len(),
            });
        }
        Ok(Self {
            dim,
            theta,
            rotation,
            digits,
            probs,
        })
    }

    /// Uniform weights over the given digits.
    pub fn uniform(
        dim: usize,
        theta: f64,
        rotation: RotationSpec,
        digits: Vec<DVector<f64>>,
    ) -> Result<Self, IfsError> {
        let p = vec![1.0 / digits.len() as f64; digits.len()];
        Self::new(dim, theta, rotation, digits, p)
    }

    pub fn lambda(&self) -> f64 {
        1.0 / self.theta
    }

    /// Smallest weight; the decay bounds are stated in terms of it.
    pub fn epsilon_min(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        self.rotation.matrix(self.dim)
    }

    /// The shared contraction `A = theta^(-1) O`.
    pub fn map_a(&self) -> DMatrix<f64> {
        self.rotation_matrix() / self.theta
    }

    pub fn digit_max_norm(&self) -> f64 {
        self.digits.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Radius of a ball (around the origin) containing the attractor:
    /// `max_j |a_j| * theta / (theta - 1)`.
    pub fn bounding_radius(&self) -> f64 {
        self.digit_max_norm() * self.theta / (self.theta - 1.0)
    }

    pub fn validate(&self) -> ValidationReport {
        let dim = self.dim;
        let m1 = self.digits.len();
        let probs_sum: f64 = self.probs.iter().sum();
        let probs_positive = self.probs.iter().all(|&p| p > 0.0);
        let mut digits_distinct = true;
        for i in 0..m1 {
            for j in (i + 1)..m1 {
                if vec_inf_norm(&(&self.digits[i] - &self.digits[j])) == 0.0 {
                    digits_distinct = false;
                }
            }
        }
        let o = self.rotation_matrix();
        let ortho = orthogonality_residual(&o);

        let digit_mat = DMatrix::from_columns(&self.digits.iter().cloned().collect::<Vec<_>>());
        let digit_rank = rank(&digit_mat, 1e-10);

        // cyclic family check: rank of [D, A D, ..., A^(d-1) D]
        let a = self.map_a();
        let mut blocks = Vec::with_capacity(dim);
        let mut cur = digit_mat.clone();
        for _ in 0..dim {
            blocks.push(cur.clone());
            cur = &a * cur;
        }
        let mut krylov = DMatrix::<f64>::zeros(dim, m1 * dim);
        for (k, b) in blocks.iter().enumerate() {
            krylov.view_mut((0, k * m1), (dim, m1)).copy_from(b);
        }
        let cyclic_rank = rank(&krylov, 1e-10);

        ValidationReport {
            dim,
            digit_count: m1,
            contractive: self.theta > 1.0,
            probs_sum,
            probs_sum_ok: (probs_sum - 1.0).abs() <= 1e-12,
            probs_positive,
            digits_distinct,
            orthogonality_residual: ortho,
            orthogonal_ok: ortho <= ORTHO_TOL,
            digit_rank,
            spanning: digit_rank == dim,
            cyclic_rank,
            cyclic: cyclic_rank == dim,
        }
    }

    /// Conjugate by a translation so the first digit becomes zero.
    ///
    /// Returns the normalized system and the shift `c = (I - A)^(-1) a_0`;
    /// the original stationary measure is the normalized one translated
    /// by `c`.
    pub fn normalize_translation(&self) -> Result<(HomogeneousIfs, DVector<f64>), IfsError> {
        if !(self.theta > 1.0) {
            return Err(IfsError::NonContractive(self.theta));
        }
        let a0 = self.digits[0].clone();
        let digits: Vec<DVector<f64>> = self.digits.iter().map(|a| a - &a0).collect();
        let a = self.map_a();
        let shift = (DMatrix::<f64>::identity(self.dim, self.dim) - &a)
            .lu()
            .solve(&a0)
            .expect("I - A is invertible for theta > 1");
        let ifs = HomogeneousIfs {
            dim: self.dim,
            theta: self.theta,
            rotation: self.rotation.clone(),
            digits,
            probs: self.probs.clone(),
        };
        Ok((ifs, shift))
    }

    /// Orthogonal change of basis to the block-diagonal (complex) model.
    ///
    /// Requires even dimension and a rotation without real eigenvalues.
    /// The resulting system has a `BlockAngles` rotation with angles
    /// sorted increasingly and digits mapped by the same basis change.
    pub fn complex_diagonal_form(&self) -> Result<DiagonalForm, IfsError> {
        if self.dim % 2 != 0 {
            return Err(IfsError::RealEigenvalue);
        }
        if matches!(&self.rotation, RotationSpec::BlockAngles(_)) {
            // already in canonical coordinates
            return Ok(DiagonalForm {
                ifs: self.clone(),
                basis: DMatrix::identity(self.dim, self.dim),
                eigen_residual: 0.0,
            });
        }
        let o = self.rotation_matrix();
        let d = self.dim;
        let schur = o.clone().schur();
        let (q, t) = schur.unpack();

        // walk the quasi-diagonal of T; any 1x1 block is a real eigenvalue
        let mut angles = Vec::with_capacity(d / 2);
        let mut flips = Vec::with_capacity(d / 2);
        let mut i = 0;
        while i < d {
            let is_block = i + 1 < d && t[(i + 1, i)].abs() > 1e-8;
            if !is_block {
                return Err(IfsError::RealEigenvalue);
            }
            let c = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let s = 0.5 * (t[(i, i + 1)] - t[(i + 1, i)]);
            if c.abs() >= 1.0 - 1e-12 {
                return Err(IfsError::RealEigenvalue);
            }
            // block acts as multiplication by exp(-i beta), beta in (0, pi);
            // if the antisymmetric part has the wrong sign, flip the second
            // basis vector of the block (complex conjugation).
            let (beta, flip) = if s > 0.0 {
                (s.atan2(c), false)
            } else {
                ((-s).atan2(c), true)
            };
            angles.push(beta / (2.0 * std::f64::consts::PI));
            flips.push(flip);
            i += 2;
        }

        // basis: x_new = F Q^t x, then sort blocks by angle
        let mut basis = q.transpose();
        for (k, &flip) in flips.iter().enumerate() {
            if flip {
                let row = 2 * k + 1;
                for col in 0..d {
                    basis[(row, col)] = -basis[(row, col)];
                }
            }
        }
        let mut order: Vec<usize> = (0..angles.len()).collect();
        order.sort_by(|&a, &b| angles[a].partial_cmp(&angles[b]).unwrap());
        let mut sorted_basis = DMatrix::<f64>::zeros(d, d);
        let mut sorted_angles = Vec::with_capacity(angles.len());
        for (new_k, &old_k) in order.iter().enumerate() {
            sorted_angles.push(angles[old_k]);
            for r in 0..2 {
                for col in 0..d {
                    sorted_basis[(2 * new_k + r, col)] = basis[(2 * old_k + r, col)];
                }
            }
        }

        let block = RotationSpec::BlockAngles(sorted_angles.clone());
        let block_mat = block.matrix(d);
        let recon = &sorted_basis * &o * sorted_basis.transpose();
        let eigen_residual = (recon - block_mat)
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.abs()));

        let digits: Vec<DVector<f64>> = self.digits.iter().map(|a| &sorted_basis * a).collect();
        let ifs = HomogeneousIfs {
            dim: d,
            theta: self.theta,
            rotation: block,
            digits,
            probs: self.probs.clone(),
        };
        Ok(DiagonalForm {
            ifs,
            basis: sorted_basis,
            eigen_residual,
        })
    }

    /// Enumerate the level-`N` atom cloud.
    pub fn atoms(&self, level: usize, cap: usize) -> Result<AtomCloud, IfsError> {
        let m1 = self.digits.len() as u128;
        let mut required: u128 = 1;
        for _ in 0..=level {
            required = required.saturating_mul(m1);
            if required > cap as u128 {
                return Err(IfsError::CapExceeded { required, cap });
            }
        }
        let count = required as usize;

        // A^n a_j table
        let a = self.map_a();
        let mut powered: Vec<Vec<DVector<f64>>> = Vec::with_capacity(level + 1);
        powered.push(self.digits.clone());
        for n in 1..=level {
            let prev = &powered[n - 1];
            powered.push(prev.iter().map(|v| &a * v).collect());
        }

        let m1 = self.digits.len();
        let mut points = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut word = vec![0usize; level + 1];
        loop {
            let mut x = DVector::<f64>::zeros(self.dim);
            let mut w = 1.0;
            for (n, &j) in word.iter().enumerate() {
                x += &powered[n][j];
                w *= self.probs[j];
            }
            points.push(x);
            weights.push(w);
            // lexicographic increment, last index fastest
            let mut pos = level + 1;
            loop {
                if pos == 0 {
                    return Ok(AtomCloud {
                        points,
                        weights,
                        level,
                    });
                }
                pos -= 1;
                word[pos] += 1;
                if word[pos] < m1 {
                    break;
                }
                word[pos] = 0;
            }
        }
    }

    /// Chaos-game sampling of the stationary measure. Deterministic for a
    /// fixed generator; the first [`CHAOS_BURN_IN`] iterates are dropped.
    pub fn chaos_game<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        let a = self.map_a();
        let mut x = DVector::<f64>::zeros(self.dim);
        let mut out = Vec::with_capacity(count);
        for step in 0..(CHAOS_BURN_IN + count) {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = self.digits.len() - 1;
            for (j, &p) in self.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = j;
                    break;
                }
            }
            x = &a * &x + &self.digits[chosen];
            if step >= CHAOS_BURN_IN {
                out.push(x.clone());
            }
        }
        out
    }
}

/// Convenience constructors for common one-dimensional families.
pub fn bernoulli_convolution(theta: f64) -> HomogeneousIfs {
    HomogeneousIfs::uniform(
        1,
        theta,
        RotationSpec::ExplicitMatrix(DMatrix::identity(1, 1)),
        vec![DVector::from_row_slice(&[0.0]), DVector::from_row_slice(&[1.0])],
    )
    .expect("static construction")
}

/// Middle-interval Cantor-type system with digits `{0, 2}`.
pub fn cantor_ifs(theta: f64) -> HomogeneousIfs {
    HomogeneousIfs::uniform(
        1,
        theta,
        RotationSpec::ExplicitMatrix(DMatrix::identity(1, 1)),
        vec![DVector::from_row_slice(&[0.0]), DVector::from_row_slice(&[2.0])],
    )
    .expect("static construction")
}
