//! Exponential-separation checks, similarity dimensions, the k-skip
//! convolution split and the voxel-occupancy density heuristic.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::Rng;
use thiserror::Error;

use crate::ifs::{AtomCloud, HomogeneousIfs, RotationSpec};
use crate::linalg::vec_inf_norm;

pub const DEFAULT_ES_CAP: usize = 1 << 24;

/// Distances at or below this (times the digit scale) count as collisions.
pub const COLLISION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DimsError {
    #[error("enumeration of {required} nodes exceeds the cap {cap}")]
    CapExceeded { required: u128, cap: usize },
    #[error("invalid parameter: {0}")]
    BadParams(&'static str),
}

/// Outcome of the separation check at level `N`: the minimal distance
/// between distinct level-`N` atoms, in the difference-set formulation.
#[derive(Debug, Clone)]
pub struct SeparationReport {
    pub level: usize,
    pub min_distance: f64,
    /// `min_distance^(1/N)`; the separation base of the atoms.
    pub epsilon_star: f64,
    /// Digit-index words `(v, w)` realizing a collision, when one exists.
    pub colliding_pair: Option<(Vec<usize>, Vec<usize>)>,
}

/// Similarity-dimension quantities of a weighted system.
#[derive(Debug, Clone)]
pub struct DimensionReport {
    /// `-log sum p_j^q / ((q-1) log theta)`.
    pub sim_dim_q: f64,
    /// Whether `sim_dim_q > d` (the super-critical regime).
    pub supercritical: bool,
    /// `log(m+1) / log theta`: the attractor's similarity dimension.
    pub attractor_sim_dim: f64,
}

/// Voxel-occupancy report at two consecutive resolutions. This is a trend
/// heuristic only: samples cannot certify absolute continuity.
#[derive(Debug, Clone)]
pub struct DensityReport {
    pub resolution_lo: usize,
    pub resolution_hi: usize,
    pub samples: usize,
    pub occupied_fraction_lo: f64,
    pub occupied_fraction_hi: f64,
    pub l2_stat_lo: f64,
    pub l2_stat_hi: f64,
    /// `l2_hi / l2_lo`: stable near 1 is consistent with bounded density,
    /// growth with singularity.
    pub l2_ratio: f64,
    pub note: &'static str,
}

/// Distinct digit differences with representative ordered digit pairs.
struct DiffSet {
    values: Vec<DVector<f64>>,
    /// (v_index, w_index) realizing each value; the zero difference is at
    /// position `zero_at`.
    reps: Vec<(usize, usize)>,
    zero_at: usize,
}

fn difference_set(ifs: &HomogeneousIfs) -> DiffSet {
    let mut values: Vec<DVector<f64>> = Vec::new();
    let mut reps = Vec::new();
    for v in 0..ifs.digits.len() {
        for w in 0..ifs.digits.len() {
            let d = &ifs.digits[v] - &ifs.digits[w];
            if !values.iter().any(|x| x == &d) {
                values.push(d);
                reps.push((v, w));
            }
        }
    }
    let zero_at = values
        .iter()
        .position(|v| vec_inf_norm(v) == 0.0)
        .expect("zero difference always present");
    DiffSet {
        values,
        reps,
        zero_at,
    }
}

/// `A^n` applied to every difference value, `n = 0..=level`; both search
/// paths read from this one table so their sums agree bit for bit.
fn powered_diffs(ifs: &HomogeneousIfs, diffs: &DiffSet, level: usize) -> Vec<Vec<DVector<f64>>> {
    let a = ifs.map_a();
    let mut powered: Vec<Vec<DVector<f64>>> = vec![diffs.values.clone()];
    for n in 1..=level {
        let prev = &powered[n - 1];
        powered.push(prev.iter().map(|v| &a * v).collect());
    }
    powered
}

/// Exact minimum of `|sum_n A^n b_n|` over nonzero difference words of
/// length `N+1`, by full enumeration.
fn es_check_brute(ifs: &HomogeneousIfs, level: usize, cap: usize) -> Result<SeparationReport, DimsError> {
    let diffs = difference_set(ifs);
    let base = diffs.values.len() as u128;
    let mut required: u128 = 1;
    for _ in 0..=level {
        required = required.saturating_mul(base);
        if required > cap as u128 {
            return Err(DimsError::CapExceeded { required, cap });
        }
    }
    let powered = powered_diffs(ifs, &diffs, level);
    let split = (level + 1) / 2;

    let mut best = f64::INFINITY;
    let mut best_word: Vec<usize> = Vec::new();
    let base = diffs.values.len();
    let mut word = vec![0usize; level + 1];
    loop {
        if word.iter().any(|&j| j != diffs.zero_at) {
            // evaluated as (low half) + (high half) so the accelerated
            // path computes bit-identical values
            let mut lo = DVector::<f64>::zeros(ifs.dim);
            for n in 0..split {
                lo += &powered[n][word[n]];
            }
            let mut hi = DVector::<f64>::zeros(ifs.dim);
            for n in split..=level {
                hi += &powered[n][word[n]];
            }
            let total = lo + hi;
            let dist = if ifs.dim == 1 {
                total[0].abs()
            } else {
                total.norm()
            };
            if dist < best {
                best = dist;
                best_word = word.clone();
            }
        }
        let mut pos = level + 1;
        loop {
            if pos == 0 {
                return Ok(finish_report(ifs, &diffs, level, best, &best_word));
            }
            pos -= 1;
            word[pos] += 1;
            if word[pos] < base {
                break;
            }
            word[pos] = 0;
        }
    }
}

fn finish_report(
    ifs: &HomogeneousIfs,
    diffs: &DiffSet,
    level: usize,
    best: f64,
    best_word: &[usize],
) -> SeparationReport {
    let scale = ifs.digit_max_norm().max(1.0);
    let colliding = best <= COLLISION_TOL * scale;
    let pair = if colliding {
        let v: Vec<usize> = best_word.iter().map(|&j| diffs.reps[j].0).collect();
        let w: Vec<usize> = best_word.iter().map(|&j| diffs.reps[j].1).collect();
        Some((v, w))
    } else {
        None
    };
    SeparationReport {
        level,
        min_distance: best,
        epsilon_star: if level > 0 {
            best.powf(1.0 / level as f64)
        } else {
            best
        },
        colliding_pair: pair,
    }
}

/// Meet-in-the-middle minimum for one-dimensional systems: partial sums of
/// the two halves are combined through a sorted array instead of a full
/// product enumeration.
fn es_check_mitm(ifs: &HomogeneousIfs, level: usize, cap: usize) -> Result<SeparationReport, DimsError> {
    let diffs = difference_set(ifs);
    let base = diffs.values.len();
    let split = (level + 1) / 2;
    let lo_len = split;
    let hi_len = level + 1 - split;
    let count = |len: usize| -> u128 { (base as u128).pow(len as u32) };
    if count(lo_len).saturating_add(count(hi_len)) > cap as u128 {
        return Err(DimsError::CapExceeded {
            required: count(lo_len) + count(hi_len),
            cap,
        });
    }
    let powered = powered_diffs(ifs, &diffs, level);

    // enumerate all words over a range of exponents, accumulating partial
    // sums left to right exactly as the brute-force path does
    let enumerate = |start: usize, len: usize| -> Vec<(f64, Vec<usize>)> {
        let mut out = vec![(0.0f64, Vec::new())];
        for pos in 0..len {
            let mut next = Vec::with_capacity(out.len() * base);
            for (sum, word) in &out {
                for j in 0..base {
                    let mut w = word.clone();
                    w.push(j);
                    next.push((sum + powered[start + pos][j][0], w));
                }
            }
            out = next;
        }
        out
    };
    let lo = enumerate(0, lo_len);
    let mut hi = enumerate(split, hi_len);
    hi.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sums"));
    let zero_word_hi: Vec<usize> = vec![diffs.zero_at; hi_len];

    let mut best = f64::INFINITY;
    let mut best_word: Vec<usize> = Vec::new();
    for (lo_sum, lo_word) in &lo {
        let lo_zero = lo_word.iter().all(|&j| j == diffs.zero_at);
        let target = -lo_sum;
        let idx = hi.partition_point(|e| e.0 < target);
        // scan outwards from the insertion point; ties and the nonzero-word
        // constraint make a tiny window necessary
        let lo_idx = idx.saturating_sub(2);
        let hi_idx = (idx + 2).min(hi.len());
        for entry in &hi[lo_idx..hi_idx] {
            let hi_zero = entry.1 == zero_word_hi;
            if lo_zero && hi_zero {
                continue;
            }
            let dist = (lo_sum + entry.0).abs();
            if dist < best {
                best = dist;
                best_word = lo_word
                    .iter()
                    .chain(entry.1.iter())
                    .cloned()
                    .collect();
            }
        }
    }
    Ok(finish_report(ifs, &diffs, level, best, &best_word))
}

/// Minimal distance between distinct atoms at level `N` (difference-set
/// formulation). One-dimensional systems take the meet-in-the-middle
/// route; it agrees exactly with brute force.
pub fn es_check(ifs: &HomogeneousIfs, level: usize, cap: usize) -> Result<SeparationReport, DimsError> {
    if ifs.dim == 1 {
        es_check_mitm(ifs, level, cap)
    } else {
        es_check_brute(ifs, level, cap)
    }
}

/// Brute-force reference path, exposed for equivalence checks.
pub fn es_check_reference(
    ifs: &HomogeneousIfs,
    level: usize,
    cap: usize,
) -> Result<SeparationReport, DimsError> {
    es_check_brute(ifs, level, cap)
}

/// Similarity dimension at moment `q > 1` and the super-criticality flag.
pub fn sim_dimensions(ifs: &HomogeneousIfs, q: f64) -> Result<DimensionReport, DimsError> {
    if !(q > 1.0) {
        return Err(DimsError::BadParams("q must be > 1"));
    }
    if !(ifs.theta > 1.0) {
        return Err(DimsError::BadParams("theta must be > 1"));
    }
    let sum_q: f64 = ifs.probs.iter().map(|&p| p.powf(q)).sum();
    let sim_dim_q = -sum_q.ln() / ((q - 1.0) * ifs.theta.ln());
    Ok(DimensionReport {
        sim_dim_q,
        supercritical: sim_dim_q > ifs.dim as f64,
        attractor_sim_dim: (ifs.digits.len() as f64).ln() / ifs.theta.ln(),
    })
}

/// Split the measure into the k-step subsampled factor and the complement:
/// the first keeps every k-th convolution term (system `(A^k, D, p)`), the
/// second carries the skipped block sums `sum_(n=1..k-1) A^n b_n` as its
/// digit set, duplicates merged by weight.
pub fn convolution_split(
    ifs: &HomogeneousIfs,
    k: usize,
    cap: usize,
) -> Result<(HomogeneousIfs, HomogeneousIfs), DimsError> {
    if k < 2 {
        return Err(DimsError::BadParams("k must be >= 2"));
    }
    let m1 = ifs.digits.len() as u128;
    let mut words: u128 = 1;
    for _ in 1..k {
        words = words.saturating_mul(m1);
        if words > cap as u128 {
            return Err(DimsError::CapExceeded {
                required: words,
                cap,
            });
        }
    }
    let o = ifs.rotation_matrix();
    let mut o_pow = nalgebra::DMatrix::<f64>::identity(ifs.dim, ifs.dim);
    for _ in 0..k {
        o_pow = &o * o_pow;
    }
    let theta_k = ifs.theta.powi(k as i32);
    let kept = HomogeneousIfs::new(
        ifs.dim,
        theta_k,
        RotationSpec::ExplicitMatrix(o_pow.clone()),
        ifs.digits.clone(),
        ifs.probs.clone(),
    )
    .expect("same dimensions");

    // block digits: sum over exponents 1..k-1, words enumerated lexicographically
    let a = ifs.map_a();
    let mut powered: Vec<Vec<DVector<f64>>> = vec![ifs.digits.clone()];
    for n in 1..k {
        let prev = &powered[n - 1];
        powered.push(prev.iter().map(|v| &a * v).collect());
    }
    let mut digits: Vec<DVector<f64>> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut word = vec![0usize; k - 1];
    loop {
        let mut x = DVector::<f64>::zeros(ifs.dim);
        let mut p = 1.0;
        for (pos, &j) in word.iter().enumerate() {
            x += &powered[pos + 1][j];
            p *= ifs.probs[j];
        }
        match digits.iter().position(|d| d == &x) {
            Some(i) => probs[i] += p,
            None => {
                digits.push(x);
                probs.push(p);
            }
        }
        let mut pos = k - 1;
        loop {
            if pos == 0 {
                let skipped = HomogeneousIfs::new(
                    ifs.dim,
                    theta_k,
                    RotationSpec::ExplicitMatrix(o_pow),
                    digits,
                    probs,
                )
                .expect("same dimensions");
                return Ok((kept, skipped));
            }
            pos -= 1;
            word[pos] += 1;
            if word[pos] < ifs.digits.len() {
                break;
            }
            word[pos] = 0;
        }
    }
}

/// All pairwise sums of two atom clouds with product weights.
pub fn convolve_clouds(a: &AtomCloud, b: &AtomCloud) -> AtomCloud {
    let mut points = Vec::with_capacity(a.points.len() * b.points.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (pa, &wa) in a.points.iter().zip(a.weights.iter()) {
        for (pb, &wb) in b.points.iter().zip(b.weights.iter()) {
            points.push(pa + pb);
            weights.push(wa * wb);
        }
    }
    AtomCloud {
        points,
        weights,
        level: a.level + b.level + 1,
    }
}

/// Weighted-multiset equality of clouds up to per-coordinate tolerance
/// `pt_tol` and weight tolerance `w_tol`.
pub fn clouds_equal_as_multisets(a: &AtomCloud, b: &AtomCloud, pt_tol: f64, w_tol: f64) -> bool {
    if a.points.len() != b.points.len() {
        return false;
    }
    let sorted = |c: &AtomCloud| -> Vec<(Vec<f64>, f64)> {
        let mut v: Vec<(Vec<f64>, f64)> = c
            .points
            .iter()
            .zip(c.weights.iter())
            .map(|(p, &w)| (p.iter().cloned().collect(), w))
            .collect();
        v.sort_by(|x, y| {
            x.0.partial_cmp(&y.0)
                .unwrap()
                .then(x.1.partial_cmp(&y.1).unwrap())
        });
        v
    };
    let sa = sorted(a);
    let sb = sorted(b);
    for (x, y) in sa.iter().zip(sb.iter()) {
        for (u, v) in x.0.iter().zip(y.0.iter()) {
            if (u - v).abs() > pt_tol {
                return false;
            }
        }
        if (x.1 - y.1).abs() > w_tol {
            return false;
        }
    }
    true
}

/// Voxel histogram of chaos-game samples at `resolution` and twice it.
pub fn density_experiment(
    ifs: &HomogeneousIfs,
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<DensityReport, DimsError> {
    if ifs.dim > 4 {
        return Err(DimsError::BadParams("voxelization supports dim <= 4"));
    }
    if resolution < 2 || !resolution.is_power_of_two() {
        return Err(DimsError::BadParams("resolution must be a power of 2"));
    }
    if samples == 0 {
        return Err(DimsError::BadParams("samples must be >= 1"));
    }
    let pts = ifs.chaos_game(samples, &mut crate::sample::rng_from_seed(seed));
    let radius = ifs.bounding_radius() * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    let stats = |res: usize| -> (f64, f64) {
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for p in &pts {
            let mut idx: u64 = 0;
            for c in 0..ifs.dim {
                let t = (p[c] + radius) / (2.0 * radius);
                let cell = ((t * res as f64) as u64).min(res as u64 - 1);
                idx = idx * res as u64 + cell;
            }
            *counts.entry(idx).or_insert(0) += 1;
        }
        let occupied = counts.len() as f64 / (res as f64).powi(ifs.dim as i32);
        let voxel_vol = (2.0 * radius / res as f64).powi(ifs.dim as i32);
        let sq_sum: f64 = counts.values().map(|&c| (c as f64) * (c as f64)).sum();
        let l2 = sq_sum / ((samples as f64) * (samples as f64) * voxel_vol);
        (occupied, l2)
    };
    let (occ_lo, l2_lo) = stats(resolution);
    let (occ_hi, l2_hi) = stats(resolution * 2);
    Ok(DensityReport {
        resolution_lo: resolution,
        resolution_hi: resolution * 2,
        samples,
        occupied_fraction_lo: occ_lo,
        occupied_fraction_hi: occ_hi,
        l2_stat_lo: l2_lo,
        l2_stat_hi: l2_hi,
        l2_ratio: l2_hi / l2_lo,
        note: "heuristic: two-resolution occupancy trend, not an absolute-continuity certificate",
    })
}

/// Random weight/exponent sweep helper for monotonicity checks.
pub fn sim_dim_monotone_in_q<R: Rng>(ifs: &HomogeneousIfs, qs: &[f64], _rng: &mut R) -> bool {
    let mut last = f64::INFINITY;
    for &q in qs {
        let d = match sim_dimensions(ifs, q) {
            Ok(d) => d.sim_dim_q,
            Err(_) => return false,
        };
        if d > last + 1e-12 {
            return false;
        }
        last = d;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{bernoulli_convolution, cantor_ifs, DEFAULT_ATOM_CAP};
    use crate::sample::rng_from_seed;
    use nalgebra::DMatrix;

    #[test]
    fn es_binary_level_three() {
        let ifs = bernoulli_convolution(2.0);
        let rep = es_check(&ifs, 3, DEFAULT_ES_CAP).unwrap();
        assert_eq!(rep.min_distance, 0.125);
        assert_eq!(rep.epsilon_star, 0.5);
        assert!(rep.colliding_pair.is_none());
    }

    #[test]
    fn es_golden_collision() {
        // lambda = positive root of x^2 + x - 1: 1 = lambda + lambda^2
        let lambda = (5.0f64.sqrt() - 1.0) / 2.0;
        let ifs = bernoulli_convolution(1.0 / lambda);
        let rep = es_check(&ifs, 2, DEFAULT_ES_CAP).unwrap();
        assert!(rep.min_distance <= 1e-12, "distance {}", rep.min_distance);
        let (v, w) = rep.colliding_pair.expect("collision reported");
        // word difference (+-1, -+1, -+1) as digit indices
        let diff: Vec<i64> = v
            .iter()
            .zip(w.iter())
            .map(|(&a, &b)| a as i64 - b as i64)
            .collect();
        assert!(diff == vec![-1, 1, 1] || diff == vec![1, -1, -1], "{diff:?}");
    }

    #[test]
    fn es_level_zero_is_min_digit_gap() {
        let ifs = cantor_ifs(3.0);
        let rep = es_check(&ifs, 0, DEFAULT_ES_CAP).unwrap();
        assert_eq!(rep.min_distance, 2.0);
    }

    #[test]
    fn es_monotone_in_level() {
        let ifs = bernoulli_convolution(1.9);
        let mut last = f64::INFINITY;
        for level in 0..=7 {
            let rep = es_check(&ifs, level, DEFAULT_ES_CAP).unwrap();
            assert!(rep.min_distance <= last + 1e-15);
            last = rep.min_distance;
        }
    }

    #[test]
    fn es_mitm_matches_brute_force() {
        for theta in [2.0, 1.7, 1.0 / ((5.0f64.sqrt() - 1.0) / 2.0), 2.3] {
            let ifs = bernoulli_convolution(theta);
            for level in 0..=8 {
                let fast = es_check(&ifs, level, DEFAULT_ES_CAP).unwrap();
                let slow = es_check_reference(&ifs, level, DEFAULT_ES_CAP).unwrap();
                assert_eq!(
                    fast.min_distance, slow.min_distance,
                    "theta {theta} level {level}"
                );
                assert_eq!(fast.colliding_pair.is_some(), slow.colliding_pair.is_some());
            }
        }
    }

    #[test]
    fn es_two_dim_brute() {
        let ifs = HomogeneousIfs::uniform(
            2,
            2.0,
            RotationSpec::BlockAngles(vec![0.2]),
            vec![
                DVector::zeros(2),
                DVector::from_row_slice(&[1.0, 0.0]),
            ],
        )
        .unwrap();
        let rep = es_check(&ifs, 3, DEFAULT_ES_CAP).unwrap();
        assert!(rep.min_distance > 0.0);
        assert!(rep.colliding_pair.is_none());
    }

    #[test]
    fn dims_tetrahedron_critical() {
        let ifs = HomogeneousIfs::uniform(
            3,
            4.0f64.powf(1.0 / 3.0),
            RotationSpec::ExplicitMatrix(DMatrix::identity(3, 3)),
            vec![
                DVector::zeros(3),
                DVector::from_row_slice(&[1.0, 0.0, 0.0]),
                DVector::from_row_slice(&[0.0, 1.0, 0.0]),
                DVector::from_row_slice(&[0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        for q in [1.5, 2.0, 3.0, 7.5] {
            let rep = sim_dimensions(&ifs, q).unwrap();
            assert!((rep.sim_dim_q - 3.0).abs() < 1e-12, "q = {q}: {}", rep.sim_dim_q);
            assert!((rep.attractor_sim_dim - 3.0).abs() < 1e-12);
        }
        // the flag flips across the critical contraction 4^(-1/3)
        let super_ifs = HomogeneousIfs::uniform(
            3,
            1.0 / 0.7,
            RotationSpec::ExplicitMatrix(DMatrix::identity(3, 3)),
            ifs.digits.clone(),
        )
        .unwrap();
        assert!(sim_dimensions(&super_ifs, 2.0).unwrap().supercritical);
        let sub_ifs = HomogeneousIfs::uniform(
            3,
            1.0 / 0.55,
            RotationSpec::ExplicitMatrix(DMatrix::identity(3, 3)),
            ifs.digits.clone(),
        )
        .unwrap();
        assert!(!sim_dimensions(&sub_ifs, 2.0).unwrap().supercritical);
    }

    #[test]
    fn dims_uniform_independent_of_q() {
        let ifs = bernoulli_convolution(2.0);
        let d2 = sim_dimensions(&ifs, 2.0).unwrap().sim_dim_q;
        let d5 = sim_dimensions(&ifs, 5.0).unwrap().sim_dim_q;
        assert!((d2 - 1.0).abs() < 1e-12);
        assert!((d2 - d5).abs() < 1e-12);
    }

    #[test]
    fn dims_skewed_value() {
        let ifs = HomogeneousIfs::new(
            1,
            2.0,
            RotationSpec::ExplicitMatrix(DMatrix::identity(1, 1)),
            vec![DVector::from_row_slice(&[0.0]), DVector::from_row_slice(&[1.0])],
            vec![0.9, 0.1],
        )
        .unwrap();
        let rep = sim_dimensions(&ifs, 2.0).unwrap();
        // -log(0.82)/log 2, by direct arithmetic
        assert!((rep.sim_dim_q - 0.286304185156641).abs() < 1e-12);
    }

    #[test]
    fn dims_monotone_in_q() {
        let mut rng = rng_from_seed(77);
        let qs: Vec<f64> = (0..30).map(|i| 1.05 + 0.33 * i as f64).collect();
        for _ in 0..100 {
            let probs = crate::sample::random_probs(3, &mut rng);
            let ifs = HomogeneousIfs::new(
                1,
                2.0,
                RotationSpec::ExplicitMatrix(DMatrix::identity(1, 1)),
                vec![
                    DVector::from_row_slice(&[0.0]),
                    DVector::from_row_slice(&[1.0]),
                    DVector::from_row_slice(&[2.5]),
                ],
                probs,
            )
            .unwrap();
            assert!(sim_dim_monotone_in_q(&ifs, &qs, &mut rng));
        }
    }

    #[test]
    fn split_binary_k2() {
        let ifs = bernoulli_convolution(2.0);
        let (kept, skipped) = convolution_split(&ifs, 2, DEFAULT_ES_CAP).unwrap();
        assert_eq!(kept.theta, 4.0);
        assert_eq!(kept.digits, ifs.digits);
        let mut got: Vec<f64> = skipped.digits.iter().map(|d| d[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![0.0, 0.5]);
        assert_eq!(skipped.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn split_atom_identity() {
        for k in [2usize, 3] {
            for ifs in [bernoulli_convolution(2.0), cantor_ifs(3.0)] {
                let (kept, skipped) = convolution_split(&ifs, k, DEFAULT_ES_CAP).unwrap();
                let levels = 2usize;
                let direct = ifs.atoms(k * levels - 1, DEFAULT_ATOM_CAP).unwrap();
                let conv = convolve_clouds(
                    &kept.atoms(levels - 1, DEFAULT_ATOM_CAP).unwrap(),
                    &skipped.atoms(levels - 1, DEFAULT_ATOM_CAP).unwrap(),
                );
                assert!(
                    clouds_equal_as_multisets(&direct, &conv, 1e-12, 1e-14),
                    "k = {k}"
                );
            }
        }
    }

    #[test]
    fn split_uniform_weights_on_distinct_sums() {
        let ifs = cantor_ifs(3.0);
        let (_, skipped) = convolution_split(&ifs, 3, DEFAULT_ES_CAP).unwrap();
        // 4 distinct block sums, all weight 1/4
        assert_eq!(skipped.digits.len(), 4);
        assert!(skipped.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn split_rejects_k_one() {
        assert!(matches!(
            convolution_split(&bernoulli_convolution(2.0), 1, DEFAULT_ES_CAP),
            Err(DimsError::BadParams(_))
        ));
    }

    #[test]
    fn density_uniform_interval_fills() {
        let ifs = bernoulli_convolution(2.0);
        let rep = density_experiment(&ifs, 64, 200_000, 5).unwrap();
        // uniform measure on [0,2] inside the bounding box [-2,2]: half the
        // voxels carry mass and essentially all of those get hit
        assert!(rep.occupied_fraction_lo > 0.49 && rep.occupied_fraction_lo <= 0.51);
        assert!(rep.l2_ratio < 1.2);
    }

    #[test]
    fn density_deterministic() {
        let ifs = bernoulli_convolution(2.0);
        let a = density_experiment(&ifs, 32, 10_000, 9).unwrap();
        let b = density_experiment(&ifs, 32, 10_000, 9).unwrap();
        assert_eq!(a.occupied_fraction_lo, b.occupied_fraction_lo);
        assert_eq!(a.l2_stat_hi, b.l2_stat_hi);
    }

    #[test]
    fn density_rejects_bad_resolution() {
        let ifs = bernoulli_convolution(2.0);
        assert!(matches!(
            density_experiment(&ifs, 63, 1000, 1),
            Err(DimsError::BadParams(_))
        ));
    }
}
