//! Erdos-Kahane engine over the expansion factor `theta` for systems with
//! a spanning digit basis.
//!
//! For a fixed orthogonal part `O` and digit basis rows `T_D`, the numbers
//! `<a_j, theta^n (O^t)^(-n) eta>` round to integer vectors `K_n` with
//! remainders `eps_n`. When most remainders are small, consecutive `K_n`
//! almost determine each other and `theta` itself: the quotient
//! `|L_(n+1)| / |L_n|` of `L_n = (O^t)^n T_D^(-1) K_n` recovers `theta`
//! geometrically fast, and the branching tree of admissible integer
//! continuations is narrow. Enumerating that tree yields disks covering
//! every expansion factor that admits a frequent-small-remainder witness.

use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ifs::HomogeneousIfs;
use crate::linalg::{mat_inf_norm, nearest_int_vec, vec_inf_norm};

pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum EkError {
    #[error("digit set does not contain a basis of rank {dim}")]
    SingularDigits { dim: usize },
    #[error("|eta|_inf = {0} is outside [1, B2]")]
    EtaOutOfRange(f64),
    #[error("|L_n| = 0 at step {0}; theta quotient undefined")]
    DivisionByZero(usize),
    #[error("node budget exceeded: {nodes} nodes at cap {cap}")]
    BudgetExceeded { nodes: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    BadParams(&'static str),
}

/// Fixed data of the analysis: orthogonal part and an invertible digit
/// basis (rows of `t_d`).
#[derive(Debug, Clone)]
pub struct EkSetupReal {
    pub dim: usize,
    pub o: DMatrix<f64>,
    pub t_d: DMatrix<f64>,
    pub t_d_inv: DMatrix<f64>,
    /// Infinity-norm condition number of the basis matrix.
    pub condition_inf: f64,
}

impl EkSetupReal {
    pub fn new(o: DMatrix<f64>, t_d: DMatrix<f64>) -> Result<Self, EkError> {
        let dim = o.nrows();
        if t_d.nrows() != dim || t_d.ncols() != dim || o.ncols() != dim {
            return Err(EkError::BadParams("O and T_D must be d x d"));
        }
        let t_d_inv = t_d
            .clone()
            .try_inverse()
            .ok_or(EkError::SingularDigits { dim })?;
        let condition_inf = mat_inf_norm(&t_d) * mat_inf_norm(&t_d_inv);
        if !condition_inf.is_finite() {
            return Err(EkError::SingularDigits { dim });
        }
        Ok(Self {
            dim,
            o,
            t_d,
            t_d_inv,
            condition_inf,
        })
    }

    /// Extract a spanning basis from an IFS digit set by greedy
    /// max-residual selection (largest Gram-Schmidt residual first).
    pub fn from_ifs(ifs: &HomogeneousIfs) -> Result<Self, EkError> {
        let dim = ifs.dim;
        let candidates: Vec<&DVector<f64>> = ifs
            .digits
            .iter()
            .filter(|a| vec_inf_norm(a) > 0.0)
            .collect();
        let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(dim);
        let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut best: Option<(usize, f64, DVector<f64>)> = None;
            for (idx, cand) in candidates.iter().enumerate() {
                let mut residual = (*cand).clone();
                for b in &ortho {
                    let coef = residual.dot(b);
                    residual -= b * coef;
                }
                let norm = residual.norm();
                if best.as_ref().map_or(true, |(_, bn, _)| norm > *bn) {
                    best = Some((idx, norm, residual));
                }
            }
            let (idx, norm, residual) = best.ok_or(EkError::SingularDigits { dim })?;
            if norm <= 1e-10 {
                return Err(EkError::SingularDigits { dim });
            }
            chosen.push(candidates[idx].clone());
            ortho.push(residual / norm);
        }
        let mut t_d = DMatrix::<f64>::zeros(dim, dim);
        for (r, digit) in chosen.iter().enumerate() {
            for c in 0..dim {
                t_d[(r, c)] = digit[c];
            }
        }
        Self::new(ifs.rotation_matrix(), t_d)
    }

    /// Constants of the analysis on the window `theta in [b1, b2]`.
    pub fn constants(&self, b1: f64, b2: f64) -> Result<EkConstantsReal, EkError> {
        if !(1.0 < b1 && b1 < b2) {
            return Err(EkError::BadParams("need 1 < B1 < B2"));
        }
        let sd = (self.dim as f64).sqrt();
        let t_norm = mat_inf_norm(&self.t_d);
        let tinv_norm = mat_inf_norm(&self.t_d_inv);
        let c1 = 2.0 * sd * tinv_norm * (b2 + 1.0);
        let c2 = (1.0 + b2 * sd * t_norm * tinv_norm) + c1 * sd * (b2 + 1.0) * t_norm * tinv_norm;
        // branch-radius variant: the tree predicts from the previous-step
        // quotient, whose error carries one extra factor of theta
        let c2_tree = (1.0 + b2 * sd * t_norm * tinv_norm) + c1 * b2 * sd * (b2 + 1.0) * t_norm;
        let mut n1 = 1usize;
        while b1.powi(n1 as i32) < 2.0 * sd * tinv_norm {
            n1 += 1;
            if n1 > 10_000 {
                return Err(EkError::BadParams("n1 does not stabilize"));
            }
        }
        let per_coord = 2 * (c2.ceil() as u128) + 1;
        Ok(EkConstantsReal {
            b1,
            b2,
            c1,
            c2,
            c2_tree,
            n1,
            rho: 1.0 / (2.0 * c2),
            m_bound: per_coord.saturating_pow(self.dim as u32),
        })
    }
}

/// Window constants: quotient error `C1`, predictor error `C2` (and its
/// tree variant), the stabilization index `n1`, the smallness threshold
/// `rho = 1/(2 C2)` and the integer-branching bound.
#[derive(Debug, Clone)]
pub struct EkConstantsReal {
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c2_tree: f64,
    pub n1: usize,
    pub rho: f64,
    pub m_bound: u128,
}

/// Nearest-integer trace of one `(theta, eta)` pair.
#[derive(Debug, Clone)]
pub struct EkTraceReal {
    pub theta: f64,
    pub eta: DVector<f64>,
    pub k: Vec<DVector<i64>>,
    pub eps: Vec<DVector<f64>>,
    pub l: Vec<DVector<f64>>,
    /// Max over `n` of the two-route reconstruction residual over `theta^n`.
    pub recon_residual: f64,
}

impl EkTraceReal {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn eps_inf(&self, n: usize) -> f64 {
        vec_inf_norm(&self.eps[n])
    }
}

/// Compute the trace for `n = 0..=n_max`.
pub fn ek_trace(
    setup: &EkSetupReal,
    theta: f64,
    eta: &DVector<f64>,
    n_max: usize,
) -> Result<EkTraceReal, EkError> {
    if !(theta > 1.0) {
        return Err(EkError::BadParams("theta must be > 1"));
    }
    let eta_norm = vec_inf_norm(eta);
    if eta_norm < 1.0 {
        return Err(EkError::EtaOutOfRange(eta_norm));
    }
    let mut k = Vec::with_capacity(n_max + 1);
    let mut eps = Vec::with_capacity(n_max + 1);
    let mut l = Vec::with_capacity(n_max + 1);
    let mut w = eta.clone(); // (theta O)^n eta
    let mut ot_pow = DMatrix::<f64>::identity(setup.dim, setup.dim); // (O^t)^n
    let mut recon = 0.0f64;
    for n in 0..=n_max {
        let v = &setup.t_d * &w;
        let kn = nearest_int_vec(&v);
        let kn_f = kn.map(|x| x as f64);
        let en = &v - &kn_f;
        // independent route: fresh powers instead of accumulated products
        let v2 = &setup.t_d * (ot_pow.transpose() * (eta * theta.powi(n as i32)));
        recon = recon.max(vec_inf_norm(&(&v2 - &v)) / theta.powi(n as i32));
        l.push(&ot_pow * (&setup.t_d_inv * &kn_f));
        k.push(kn);
        eps.push(en);
        w = (&setup.o * &w) * theta;
        ot_pow = setup.o.transpose() * ot_pow;
    }
    Ok(EkTraceReal {
        theta,
        eta: eta.clone(),
        k,
        eps,
        l,
        recon_residual: recon,
    })
}

/// Quotient estimate of `theta` from consecutive `L` norms.
pub fn theta_estimate(trace: &EkTraceReal, n: usize) -> Result<f64, EkError> {
    let denom = vec_inf_norm(&trace.l[n]);
    if denom == 0.0 {
        return Err(EkError::DivisionByZero(n));
    }
    Ok(vec_inf_norm(&trace.l[n + 1]) / denom)
}

/// Predicted continuation of the integer sequence.
#[derive(Debug, Clone)]
pub enum KPrediction {
    Unique(DVector<i64>),
    Ambiguous {
        prediction: DVector<f64>,
        candidates: Vec<DVector<i64>>,
    },
}

/// Real-vector prediction of `K_(n+1)` from the trace via the quotient
/// estimate: `(|L_(n+1)|/|L_n|) T_D O T_D^(-1) K_n`.
pub fn k_prediction_vector(
    setup: &EkSetupReal,
    trace: &EkTraceReal,
    n: usize,
) -> Result<DVector<f64>, EkError> {
    let ratio = theta_estimate(trace, n)?;
    let kn_f = trace.k[n].map(|x| x as f64);
    Ok((&setup.t_d * (&setup.o * (&setup.t_d_inv * kn_f))) * ratio)
}

/// Predict `K_(n+1)`: unique nearest integer vector when the prediction
/// sits strictly inside a half-integer box, else the full candidate list
/// within `C2`.
pub fn k_predictor(
    setup: &EkSetupReal,
    constants: &EkConstantsReal,
    trace: &EkTraceReal,
    n: usize,
) -> Result<KPrediction, EkError> {
    if n < constants.n1 {
        return Err(EkError::BadParams("predictor needs n >= n1"));
    }
    let prediction = k_prediction_vector(setup, trace, n)?;
    let unique = prediction.iter().all(|&x| {
        let frac = (x - x.round_ties_even()).abs();
        frac < 0.5
    });
    if unique {
        Ok(KPrediction::Unique(nearest_int_vec(&prediction)))
    } else {
        Ok(KPrediction::Ambiguous {
            candidates: integer_box(&prediction, constants.c2, 1_000_000)
                .unwrap_or_default(),
            prediction,
        })
    }
}

/// Integer vectors within `radius` (infinity norm) of `center`, in
/// lexicographic order. `None` when the box is larger than `cap`.
fn integer_box(center: &DVector<f64>, radius: f64, cap: usize) -> Option<Vec<DVector<i64>>> {
    let dim = center.len();
    let mut ranges = Vec::with_capacity(dim);
    let mut total: u128 = 1;
    for i in 0..dim {
        let lo = (center[i] - radius).ceil() as i64;
        let hi = (center[i] + radius).floor() as i64;
        if hi < lo {
            return Some(Vec::new());
        }
        total = total.saturating_mul((hi - lo + 1) as u128);
        if total > cap as u128 {
            return None;
        }
        ranges.push((lo, hi));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(DVector::from_iterator(dim, cur.iter().cloned()));
        let mut pos = dim;
        loop {
            if pos == 0 {
                return Some(out);
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] <= ranges[pos].1 {
                break;
            }
            cur[pos] = ranges[pos].0;
        }
    }
}

/// Membership witness report for the frequent-small-remainder condition.
#[derive(Debug, Clone)]
pub struct WitnessReport {
    pub theta: f64,
    pub best_eta: DVector<f64>,
    pub best_fraction: f64,
    pub member: bool,
    pub n: usize,
    pub delta: f64,
    pub rho: f64,
}

/// Per-coordinate lattice over the shell `1 <= |eta|_inf <= b2` with the
/// given step, canonicalized so the first nonzero coordinate is positive
/// (sign flips do not change remainders), plus seeded random points.
pub fn eta_grid(dim: usize, b2: f64, step: f64, random_extra: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::Rng;
    let mut out: Vec<DVector<f64>> = Vec::new();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let k_max = (b2 / step).floor() as i64;
    let mut push = |v: DVector<f64>, out: &mut Vec<DVector<f64>>| {
        let norm = vec_inf_norm(&v);
        if !(1.0 - 1e-12..=b2 + 1e-12).contains(&norm) {
            return;
        }
        let mut canon = v;
        if let Some(first) = canon.iter().find(|&&x| x != 0.0) {
            if *first < 0.0 {
                canon = -canon;
            }
        } else {
            return;
        }
        if seen.insert(canon.iter().map(|x| x.to_bits()).collect()) {
            out.push(canon);
        }
    };
    // lattice of integer multiples of the step inside [-b2, b2]^d
    let mut idx = vec![-k_max; dim];
    'outer: loop {
        let v = DVector::from_iterator(dim, idx.iter().map(|&i| i as f64 * step));
        push(v, &mut out);
        let mut pos = dim;
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] <= k_max {
                break;
            }
            idx[pos] = -k_max;
        }
    }
    let mut rng = crate::sample::rng_from_seed(seed);
    let mut added = 0;
    while added < random_extra {
        let v = DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-b2..b2)));
        if vec_inf_norm(&v) >= 1.0 {
            let before = out.len();
            push(v, &mut out);
            if out.len() > before {
                added += 1;
            }
        }
    }
    out
}

/// Grid-search membership certificate: the best witness `eta` and whether
/// its fraction of small-remainder steps `n in [1, N]` exceeds `1 - delta`.
/// One-sided: a grid can certify membership, never exclude it.
pub fn bad_set_witness(
    setup: &EkSetupReal,
    theta: f64,
    n_steps: usize,
    delta: f64,
    rho: f64,
    grid: &[DVector<f64>],
) -> Result<WitnessReport, EkError> {
    if n_steps == 0 {
        return Err(EkError::BadParams("N must be >= 1"));
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    for eta in grid {
        let trace = ek_trace(setup, theta, eta, n_steps)?;
        let good = (1..=n_steps).filter(|&n| trace.eps_inf(n) < rho).count();
        let fraction = good as f64 / n_steps as f64;
        if best.as_ref().map_or(true, |(_, bf)| fraction > *bf) {
            best = Some((eta.clone(), fraction));
        }
    }
    let (best_eta, best_fraction) = best.ok_or(EkError::BadParams("empty eta grid"))?;
    Ok(WitnessReport {
        theta,
        best_eta,
        best_fraction,
        member: best_fraction > 1.0 - delta,
        n: n_steps,
        delta,
        rho,
    })
}

/// One disk of the enumeration output.
#[derive(Debug, Clone)]
pub struct CoverDisk {
    pub center: f64,
    pub radius: f64,
    pub branch_count: usize,
    pub seq_hash: u64,
}

#[derive(Debug, Clone)]
pub struct CoverStats {
    pub nodes: usize,
    pub seeds: usize,
    pub disks: usize,
    pub branch_events: usize,
    /// `log(disks) / (delta log(1/delta) N)`, the observed growth constant.
    pub fitted_c0: f64,
}

#[derive(Debug, Clone)]
pub struct CoverResult {
    pub disks: Vec<CoverDisk>,
    pub stats: CoverStats,
}

#[derive(Debug, Clone)]
pub struct CoverOptions {
    pub b1: f64,
    pub b2: f64,
    pub n: usize,
    pub delta: f64,
    pub node_cap: usize,
    /// Scan step over `[B1, B2]` used to harvest initial segments.
    pub seed_scan_step: f64,
    pub eta_grid_step: f64,
    pub eta_grid_random: usize,
    pub eta_grid_seed: u64,
    /// Replace the computed small-remainder threshold `1/(2 C2)`.
    pub rho_override: Option<f64>,
}

impl CoverOptions {
    pub fn new(b1: f64, b2: f64, n: usize, delta: f64) -> Self {
        Self {
            b1,
            b2,
            n,
            delta,
            node_cap: DEFAULT_NODE_CAP,
            seed_scan_step: 1e-5,
            eta_grid_step: 1.0 / 64.0,
            eta_grid_random: 0,
            eta_grid_seed: 1,
            rho_override: None,
        }
    }
}

/// Closed interval of expansion factors still consistent with a prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ThetaInterval {
    lo: f64,
    hi: f64,
}

impl ThetaInterval {
    fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    fn intersect(&self, other: ThetaInterval) -> ThetaInterval {
        ThetaInterval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

}

/// Bounded collection of disjoint theta intervals attached to one search
/// state. Overlapping members are merged; when the cap is exceeded the
/// closest pair is hulled, which can only enlarge the cover.
#[derive(Debug, Clone, Default)]
struct IntervalSet {
    items: Vec<ThetaInterval>,
}

const INTERVAL_SET_CAP: usize = 16;

impl IntervalSet {
    fn insert(&mut self, iv: ThetaInterval) {
        self.items.push(iv);
        self.items
            .sort_by(|a, b| a.lo.partial_cmp(&b.lo).expect("finite bounds"));
        let mut merged: Vec<ThetaInterval> = Vec::with_capacity(self.items.len());
        for &it in &self.items {
            match merged.last_mut() {
                Some(last) if it.lo <= last.hi => last.hi = last.hi.max(it.hi),
                _ => merged.push(it),
            }
        }
        while merged.len() > INTERVAL_SET_CAP {
            let mut best = 1usize;
            let mut best_gap = f64::INFINITY;
            for i in 1..merged.len() {
                let gap = merged[i].lo - merged[i - 1].hi;
                if gap < best_gap {
                    best_gap = gap;
                    best = i;
                }
            }
            merged[best - 1].hi = merged[best].hi;
            merged.remove(best);
        }
        self.items = merged;
    }
}

/// Interval of `theta` solving `theta (x + v) = k + u` over `|u| <= eps_new`,
/// `|v| <= slack`, one coordinate of the step relation. `None` when the
/// denominator interval straddles zero (no constraint).
fn quotient_interval(k: f64, x: f64, slack: f64, eps_new: f64) -> Option<ThetaInterval> {
    // tiny inflation so exact-boundary remainders stay feasible in floats
    let slack = slack + 1e-12 * (1.0 + x.abs());
    let eps_new = eps_new + 1e-12 * (1.0 + k.abs());
    let d_lo = x - slack;
    let d_hi = x + slack;
    if d_lo <= 0.0 && d_hi >= 0.0 {
        return None;
    }
    let n_lo = k - eps_new;
    let n_hi = k + eps_new;
    let corners = [n_lo / d_lo, n_lo / d_hi, n_hi / d_lo, n_hi / d_hi];
    let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(ThetaInterval { lo, hi })
}

/// Refine `interval` by the relation `K_next + eps_next = theta M (K + eps)`
/// at remainder level `eps_bound`; empty result means infeasible.
fn refine_interval(
    interval: ThetaInterval,
    m_k: &DVector<f64>,
    row_slack: &[f64],
    k_next: &DVector<i64>,
    eps_bound: f64,
) -> ThetaInterval {
    refine_interval_mixed(interval, m_k, row_slack, k_next, eps_bound, eps_bound)
}

/// As [`refine_interval`] with separate remainder levels for the old side
/// (inside `M (K + eps)`) and the new side.
fn refine_interval_mixed(
    interval: ThetaInterval,
    m_k: &DVector<f64>,
    row_slack: &[f64],
    k_next: &DVector<i64>,
    eps_old: f64,
    eps_new: f64,
) -> ThetaInterval {
    let mut out = interval;
    for i in 0..m_k.len() {
        if let Some(q) = quotient_interval(
            k_next[i] as f64,
            m_k[i],
            row_slack[i] * eps_old,
            eps_new,
        ) {
            out = out.intersect(q);
            if out.is_empty() {
                return out;
            }
        }
    }
    out
}

/// Integer vectors feasible for the next step over a theta interval, with
/// separate old-side and new-side remainder levels.
fn candidate_box_mixed(
    interval: ThetaInterval,
    m_k: &DVector<f64>,
    row_slack: &[f64],
    eps_old: f64,
    eps_new: f64,
    cap: usize,
) -> Option<Vec<DVector<i64>>> {
    let dim = m_k.len();
    let mut ranges = Vec::with_capacity(dim);
    let mut total: u128 = 1;
    for i in 0..dim {
        let s = row_slack[i] * eps_old;
        let v_lo = (interval.lo * (m_k[i] - s)).min(interval.hi * (m_k[i] - s));
        let v_hi = (interval.lo * (m_k[i] + s)).max(interval.hi * (m_k[i] + s));
        let lo = (v_lo - eps_new).ceil() as i64;
        let hi = (v_hi + eps_new).floor() as i64;
        if hi < lo {
            return Some(Vec::new());
        }
        total = total.saturating_mul((hi - lo + 1) as u128);
        if total > cap as u128 {
            return None;
        }
        ranges.push((lo, hi));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(DVector::from_iterator(dim, cur.iter().cloned()));
        let mut pos = dim;
        loop {
            if pos == 0 {
                return Some(out);
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] <= ranges[pos].1 {
                break;
            }
            cur[pos] = ranges[pos].0;
        }
    }
}

/// Search state of the sequence enumeration: the current integer vector,
/// whether the previous step charged its right endpoint as a bad index
/// (the following relation then relaxes the old-side remainder), and the
/// number of bad indices hypothesized so far. States reached along
/// different prefixes are merged; their feasibility intervals are hulled,
/// which can only enlarge the output cover.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CoverState {
    k_cur: Vec<i64>,
    excused: bool,
    deviations: usize,
}

/// Level-by-level enumeration of admissible integer sequences and the
/// disks they pin down.
///
/// Seeds are the distinct initial segments `K_0..K_(n1+1)` harvested from
/// a dense `(theta, eta)` scan. Each extension step enumerates the
/// integer vectors consistent with the step relation
/// `K_(n+1) + eps_(n+1) = theta M (K_n + eps_n)` over the state's running
/// theta-feasibility interval. A continuation whose new remainder can be
/// below `rho` extends the state for free; otherwise the step charges one
/// of the `floor(delta N)` bad-index hypotheses and the following step
/// relaxes its old-side remainder to one half. States with equal integer
/// data are merged (intervals hulled), so the output only grows. Each
/// completed sequence at depth `N+1` yields a disk centered at the final
/// quotient with radius `C1 B1^(-N)`; centers closer than half a radius
/// collapse into their first representative.
pub fn cover_enumerate(setup: &EkSetupReal, opts: &CoverOptions) -> Result<CoverResult, EkError> {
    let constants = setup.constants(opts.b1, opts.b2)?;
    if opts.n < constants.n1 {
        return Err(EkError::BadParams("N must be at least n1"));
    }
    if !(0.0..0.5).contains(&opts.delta) {
        return Err(EkError::BadParams("delta must be in [0, 1/2)"));
    }
    let seed_len = constants.n1 + 1; // indices 0..=n1+1
    let budget = (opts.delta * opts.n as f64).floor() as usize;

    // harvest seed segments from the scan grid
    let grid = eta_grid(
        setup.dim,
        opts.b2,
        opts.eta_grid_step,
        opts.eta_grid_random,
        opts.eta_grid_seed,
    );
    let scan_count = ((opts.b2 - opts.b1) / opts.seed_scan_step).round() as usize;
    let mut seeds: Vec<Vec<DVector<i64>>> = Vec::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    for i in 0..=scan_count {
        let theta = (opts.b1 + i as f64 * opts.seed_scan_step).min(opts.b2);
        for eta in &grid {
            let trace = ek_trace(setup, theta, eta, seed_len)?;
            let flat: Vec<i64> = trace.k.iter().flat_map(|v| v.iter().cloned()).collect();
            if seen.insert(flat) {
                seeds.push(trace.k);
            }
        }
    }
    seeds.sort_by(|a, b| {
        let fa: Vec<i64> = a.iter().flat_map(|v| v.iter().cloned()).collect();
        let fb: Vec<i64> = b.iter().flat_map(|v| v.iter().cloned()).collect();
        fa.cmp(&fb)
    });

    let ot = setup.o.transpose();
    // step relation: K_(n+1) + eps_(n+1) = theta M (K_n + eps_n)
    let m_step = &setup.t_d * (&setup.o * &setup.t_d_inv);
    let row_slack: Vec<f64> = (0..setup.dim)
        .map(|i| (0..setup.dim).map(|j| m_step[(i, j)].abs()).sum())
        .collect();
    let rho = opts.rho_override.unwrap_or(constants.rho);

    let mut nodes = 0usize;
    let mut branch_events = 0usize;
    let mut disks: Vec<CoverDisk> = Vec::new();
    // centers are deduplicated on a half-radius grid: the emitted radius
    // carries twice the quotient error bound, so the kept representative
    // still covers everything a dropped neighbor covered
    let mut disk_seen: HashSet<i64> = HashSet::new();

    let target_len = opts.n + 2; // indices 0..=N+1
    let full = ThetaInterval {
        lo: opts.b1,
        hi: opts.b2,
    };

    // level 0: seed tails with intervals from the seed's half-unit relations
    let mut layer: HashMap<CoverState, IntervalSet> = HashMap::new();
    let merge = |map: &mut HashMap<CoverState, IntervalSet>,
                 state: CoverState,
                 interval: ThetaInterval| {
        map.entry(state).or_default().insert(interval);
    };
    for seed in &seeds {
        let mut interval = full;
        for w in seed.windows(2) {
            let m_k = &m_step * w[0].map(|x| x as f64);
            interval = refine_interval(interval, &m_k, &row_slack, &w[1], 0.5);
            if interval.is_empty() {
                break;
            }
        }
        if interval.is_empty() {
            continue;
        }
        // the seed's last index is unclassified, so the first extension
        // step must tolerate a half-unit remainder on its old side
        let state = CoverState {
            k_cur: seed[seed.len() - 1].iter().cloned().collect(),
            excused: true,
            deviations: 0,
        };
        merge(&mut layer, state, interval);
    }

    let radius = constants.c1 * opts.b1.powi(-(opts.n as i32));
    let mut ot_pow_n = DMatrix::<f64>::identity(setup.dim, setup.dim);
    for _ in 0..opts.n {
        ot_pow_n = &ot * ot_pow_n;
    }
    let ot_pow_n1 = &ot * &ot_pow_n;
    let emit = |k_n: &[i64], k_n1: &DVector<i64>, deviations: usize, disks: &mut Vec<CoverDisk>, disk_seen: &mut HashSet<i64>| {
        // quotient estimate from the last pair at depth N
        let kn_vec = DVector::from_iterator(setup.dim, k_n.iter().map(|&x| x as f64));
        let l_n = &ot_pow_n * (&setup.t_d_inv * kn_vec);
        let l_n1 = &ot_pow_n1 * (&setup.t_d_inv * k_n1.map(|x| x as f64));
        let denom = vec_inf_norm(&l_n);
        if denom == 0.0 {
            return;
        }
        let center = vec_inf_norm(&l_n1) / denom;
        if !disk_seen.insert((center / (radius / 2.0)).floor() as i64) {
            return;
        }
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        k_n.hash(&mut hasher);
        for x in k_n1.iter() {
            x.hash(&mut hasher);
        }
        disks.push(CoverDisk {
            center,
            radius,
            branch_count: deviations,
            seq_hash: hasher.finish(),
        });
    };

    for depth in seed_len + 1..target_len {
        let mut next: HashMap<CoverState, IntervalSet> = HashMap::new();
        let mut keys: Vec<CoverState> = layer.keys().cloned().collect();
        keys.sort();
        for state in keys {
            let k_cur = DVector::from_iterator(setup.dim, state.k_cur.iter().cloned());
            let m_k = &m_step * k_cur.map(|x| x as f64);
            let eps_old = if state.excused { 0.5 } else { rho };
            for &interval in &layer[&state].items {
                nodes += 1;
                if nodes > opts.node_cap {
                    return Err(EkError::BudgetExceeded {
                        nodes,
                        cap: opts.node_cap,
                    });
                }
                // candidates must satisfy the half-unit relation on the
                // new side; the old side keeps its small-remainder level
                // unless the previous index was charged
                let candidates =
                    match candidate_box_mixed(interval, &m_k, &row_slack, eps_old, 0.5, 100_000) {
                        Some(c) => c,
                        None => {
                            return Err(EkError::BudgetExceeded {
                                nodes,
                                cap: opts.node_cap,
                            })
                        }
                    };
                for cand in candidates {
                    if depth == target_len - 1 {
                        // the final index sits outside the witness window:
                        // accept any half-unit remainder without charge
                        let last =
                            refine_interval_mixed(interval, &m_k, &row_slack, &cand, eps_old, 0.5);
                        if !last.is_empty() {
                            emit(&state.k_cur, &cand, state.deviations, &mut disks, &mut disk_seen);
                        }
                        continue;
                    }
                    // free continuation: new remainder also small
                    let free =
                        refine_interval_mixed(interval, &m_k, &row_slack, &cand, eps_old, rho);
                    if !free.is_empty() {
                        merge(
                            &mut next,
                            CoverState {
                                k_cur: cand.iter().cloned().collect(),
                                excused: false,
                                deviations: state.deviations,
                            },
                            free,
                        );
                    }
                    // charged continuation: hypothesize the new index bad
                    if state.deviations < budget {
                        let charged =
                            refine_interval_mixed(interval, &m_k, &row_slack, &cand, eps_old, 0.5);
                        if !charged.is_empty() {
                            branch_events += 1;
                            merge(
                                &mut next,
                                CoverState {
                                    k_cur: cand.iter().cloned().collect(),
                                    excused: true,
                                    deviations: state.deviations + 1,
                                },
                                charged,
                            );
                        }
                    }
                }
            }
        }
        if depth < target_len - 1 {
            layer = next;
        }
    }

    disks.sort_by(|a, b| {
        a.center
            .partial_cmp(&b.center)
            .unwrap()
            .then(a.seq_hash.cmp(&b.seq_hash))
    });
    let fitted_c0 = if opts.delta > 0.0 && !disks.is_empty() {
        (disks.len() as f64).ln() / (opts.delta * (1.0 / opts.delta).ln() * opts.n as f64)
    } else {
        0.0
    };
    let stats = CoverStats {
        nodes,
        seeds: seeds.len(),
        disks: disks.len(),
        branch_events,
        fitted_c0,
    };
    Ok(CoverResult { disks, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{random_orthogonal, rng_from_seed};
    use rand::Rng;

    fn setup_1d() -> EkSetupReal {
        EkSetupReal::new(
            DMatrix::identity(1, 1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap()
    }

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_row_slice(&[x])
    }

    #[test]
    fn dyadic_trace_is_exact() {
        let setup = setup_1d();
        let trace = ek_trace(&setup, 2.0, &vec1(1.0), 20).unwrap();
        for n in 0..=20 {
            assert_eq!(trace.k[n][0], 1i64 << n);
            assert_eq!(trace.eps[n][0], 0.0);
            assert_eq!(trace.l[n][0], (1u64 << n) as f64);
        }
        assert!(trace.recon_residual < 1e-12);
        for n in 0..20 {
            assert_eq!(theta_estimate(&trace, n).unwrap(), 2.0);
        }
    }

    #[test]
    fn golden_trace_nearest_integers() {
        // theta = (1+sqrt5)/2: powers round to 1, 2, 3, 4, 7, 11, 18, ...
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let setup = setup_1d();
        let trace = ek_trace(&setup, phi, &vec1(1.0), 11).unwrap();
        let expect = [1i64, 2, 3, 4, 7, 11, 18, 29, 47, 76, 123, 199];
        for (n, &e) in expect.iter().enumerate() {
            assert_eq!(trace.k[n][0], e, "n = {n}");
        }
        // remainders shrink geometrically (Galois conjugate modulus < 1)
        let lam = 1.0 / phi;
        for n in 2..=11 {
            assert!(trace.eps_inf(n) <= lam.powi(n as i32) * 1.001);
        }
    }

    #[test]
    fn golden_theta_estimate_bound() {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let setup = setup_1d();
        let constants = setup.constants(1.5, 1.7).unwrap();
        let trace = ek_trace(&setup, phi, &vec1(1.0), 12).unwrap();
        let n = 10;
        let est = theta_estimate(&trace, n).unwrap();
        let bound = constants.c1
            * phi.powi(-(n as i32))
            * trace.eps_inf(n).max(trace.eps_inf(n + 1));
        assert!((est - phi).abs() <= bound + 1e-12, "est {est}");
    }

    #[test]
    fn reconstruction_and_bounds_on_random_instances() {
        let mut rng = rng_from_seed(71);
        for _ in 0..150 {
            let dim = rng.random_range(1..=3usize);
            let o = random_orthogonal(dim, &mut rng);
            let mut t = DMatrix::<f64>::zeros(dim, dim);
            loop {
                for i in 0..dim {
                    for j in 0..dim {
                        t[(i, j)] = rng.random_range(-2.0..2.0);
                    }
                }
                if t.clone().try_inverse().is_some()
                    && mat_inf_norm(&t.clone().try_inverse().unwrap()) < 50.0
                {
                    break;
                }
            }
            let setup = EkSetupReal::new(o, t).unwrap();
            let b1 = rng.random_range(1.3..1.8);
            let b2 = b1 + rng.random_range(0.1..0.8);
            let constants = setup.constants(b1, b2).unwrap();
            let theta = rng.random_range(b1..b2);
            let eta = DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(1.0..b2)));
            let n_max = constants.n1 + 8;
            let trace = ek_trace(&setup, theta, &eta, n_max + 1).unwrap();
            assert!(trace.recon_residual <= 1e-10, "recon {}", trace.recon_residual);
            for n in constants.n1..n_max.min(trace.len() - 2) {
                let maxe = trace.eps_inf(n).max(trace.eps_inf(n + 1));
                if let Ok(est) = theta_estimate(&trace, n) {
                    assert!(
                        (theta - est).abs() <= constants.c1 * theta.powi(-(n as i32)) * maxe + 1e-9,
                        "quotient bound violated"
                    );
                }
                let pred = k_prediction_vector(&setup, &trace, n).unwrap();
                let truth = trace.k[n + 1].map(|x| x as f64);
                assert!(
                    vec_inf_norm(&(&truth - &pred)) <= constants.c2 * maxe + 1e-9,
                    "prediction bound violated"
                );
            }
        }
    }

    #[test]
    fn predictor_agrees_when_remainders_small() {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let setup = setup_1d();
        let constants = setup.constants(1.5, 1.7).unwrap();
        let trace = ek_trace(&setup, phi, &vec1(1.0), 14).unwrap();
        for n in constants.n1..=12 {
            let maxe = trace.eps_inf(n).max(trace.eps_inf(n + 1));
            if maxe < constants.rho {
                match k_predictor(&setup, &constants, &trace, n).unwrap() {
                    KPrediction::Unique(k) => assert_eq!(k, trace.k[n + 1]),
                    KPrediction::Ambiguous { .. } => panic!("expected unique at n = {n}"),
                }
            }
        }
    }

    #[test]
    fn ambiguous_prediction_lists_candidates() {
        let setup = setup_1d();
        let constants = setup.constants(1.9, 2.1).unwrap();
        // prediction exactly at a half-integer: force via synthetic trace
        let mut trace = ek_trace(&setup, 2.0, &vec1(1.0), 6).unwrap();
        // L values engineered so ratio * K = 2.5
        trace.k[3] = DVector::from_row_slice(&[5i64]);
        trace.l[3] = vec1(5.0);
        trace.l[4] = vec1(2.5);
        match k_predictor(&setup, &constants, &trace, 3).unwrap() {
            KPrediction::Ambiguous { candidates, .. } => {
                assert!(!candidates.is_empty());
                let c2 = constants.c2;
                assert!(candidates.len() as f64 <= (2.0 * c2 + 2.0));
            }
            KPrediction::Unique(_) => panic!("expected ambiguity"),
        }
    }

    #[test]
    fn witness_integer_theta_is_member() {
        let setup = setup_1d();
        let grid = eta_grid(1, 2.1, 1.0 / 64.0, 0, 1);
        let report = bad_set_witness(&setup, 2.0, 30, 0.05, 0.05, &grid).unwrap();
        assert!(report.member);
        assert_eq!(report.best_fraction, 1.0);
    }

    #[test]
    fn witness_golden_fraction() {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let setup = setup_1d();
        let grid = vec![vec1(1.0)];
        let report = bad_set_witness(&setup, phi, 40, 0.25, 0.1, &grid).unwrap();
        // remainders lambda^n drop below rho = 0.1 from n = 5 on
        assert!(report.best_fraction >= 1.0 - 10.0 / 40.0);
        assert!(report.member);
    }

    #[test]
    fn witness_generic_theta_is_not_certified() {
        let setup = setup_1d();
        let grid = eta_grid(1, 2.1, 1.0 / 32.0, 0, 1);
        let report = bad_set_witness(&setup, 1.8, 40, 0.5, 0.05, &grid).unwrap();
        assert!(!report.member, "fraction {}", report.best_fraction);
    }

    #[test]
    fn eta_grid_shape() {
        let grid = eta_grid(1, 2.1, 1.0 / 64.0, 0, 1);
        assert!(grid.iter().all(|v| {
            let n = vec_inf_norm(v);
            (1.0 - 1e-9..=2.1 + 1e-9).contains(&n) && v[0] > 0.0
        }));
        let grid2 = eta_grid(2, 1.5, 0.25, 8, 3);
        assert!(grid2.iter().all(|v| vec_inf_norm(v) >= 1.0 - 1e-12));
        assert!(!grid2.is_empty());
    }

    #[test]
    fn cover_small_window_contains_two() {
        let setup = setup_1d();
        let mut opts = CoverOptions::new(1.9, 2.1, 10, 0.1);
        opts.seed_scan_step = 1e-3;
        opts.node_cap = 2_000_000;
        let result = cover_enumerate(&setup, &opts).unwrap();
        assert!(!result.disks.is_empty());
        let covered = result
            .disks
            .iter()
            .any(|d| (d.center - 2.0).abs() <= d.radius);
        assert!(covered, "theta = 2 must be covered");
        // sorted by center
        for w in result.disks.windows(2) {
            assert!(w[0].center <= w[1].center);
        }
    }

    #[test]
    fn cover_delta_zero_is_deterministic_chains() {
        let setup = setup_1d();
        let mut opts = CoverOptions::new(1.9, 2.1, 10, 0.0);
        opts.seed_scan_step = 1e-3;
        let result = cover_enumerate(&setup, &opts).unwrap();
        assert!(result.stats.branch_events == 0);
        assert!(result.disks.iter().all(|d| d.branch_count == 0));
    }

    #[test]
    fn singular_digits_rejected() {
        let err = EkSetupReal::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
        )
        .unwrap_err();
        assert!(matches!(err, EkError::SingularDigits { .. }));
    }

    #[test]
    fn basis_extraction_from_ifs() {
        let ifs = HomogeneousIfs::uniform(
            2,
            2.0,
            crate::ifs::RotationSpec::BlockAngles(vec![0.2]),
            vec![
                DVector::zeros(2),
                DVector::from_row_slice(&[1.0, 0.0]),
                DVector::from_row_slice(&[1.0, 0.1]),
                DVector::from_row_slice(&[0.0, 1.0]),
            ],
        )
        .unwrap();
        let setup = EkSetupReal::from_ifs(&ifs).unwrap();
        assert_eq!(setup.dim, 2);
        assert!(setup.condition_inf < 10.0);
    }
}
