//! The two-branch intermittent map family on the circle, exact branch
//! inverses, preimage ladders and arc-image tracking.

use crate::error::{PmError, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Branch point of every map in the family.
pub const BRANCH_POINT: f64 = 2.0 / 3.0;

/// Absolute tolerance of the left-branch inversion.
pub const INVERT_TOL: f64 = 1e-14;

/// Exponent cap `alpha` for a family of maps, 0 < alpha < 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    alpha: f64,
}

impl FamilyConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(PmError::Validation(format!(
                "alpha must satisfy 0 < alpha < 1, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Exponent `beta` of a single map. `beta = 0` is the piecewise-affine
/// member `T_0` with left branch `3x/2`; the general left-branch formula
/// degenerates to it smoothly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParam {
    beta: f64,
}

impl MapParam {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(PmError::Validation(format!(
                "beta must satisfy 0 <= beta < 1, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Left-branch coefficient 3^beta / 2^(1+beta).
    pub fn coeff(&self) -> f64 {
        3f64.powf(self.beta) / 2f64.powf(1.0 + self.beta)
    }
}

/// Which inverse branch of the map to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Left,
    Right,
}

fn check_unit(x: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(PmError::Domain(format!("{what} = {x} outside [0,1]")));
    }
    Ok(())
}

/// Evaluates `T_beta(x)` on the closed interval [0,1].
///
/// Returns the closed-interval value: `eval_map(b, 2/3) = eval_map(b, 1) = 1`.
/// Callers working on the circle reduce 1 to 0 themselves.
pub fn eval_map(beta: MapParam, x: f64) -> Result<f64> {
    check_unit(x, "x")?;
    if x <= BRANCH_POINT {
        Ok((x + beta.coeff() * x.powf(1.0 + beta.beta())).min(1.0))
    } else {
        Ok(3.0 * x - 2.0)
    }
}

/// Derivative `T'_beta(x)`; at the branch point the left-branch (one-sided)
/// value is returned.
pub fn eval_deriv(beta: MapParam, x: f64) -> Result<f64> {
    check_unit(x, "x")?;
    if x <= BRANCH_POINT {
        Ok(1.0 + (1.0 + beta.beta()) * beta.coeff() * x.powf(beta.beta()))
    } else {
        Ok(3.0)
    }
}

/// Inverts one monotone branch of `T_beta` at `y`.
///
/// The right branch is the closed form `(y+2)/3`. The left branch solves
/// `x + c x^(1+beta) = y` on `[0, 2/3]` by a Newton iteration safeguarded by
/// bisection (the branch is increasing and convex, so the iterate started at
/// the right end of the bracket descends monotonically to the root).
pub fn invert_branch(beta: MapParam, y: f64, branch: Branch) -> Result<f64> {
    check_unit(y, "y")?;
    match branch {
        Branch::Right => Ok((y + 2.0) / 3.0),
        Branch::Left => invert_left_from(beta, y, y.min(BRANCH_POINT)),
    }
}

/// Left-branch inversion with a caller-supplied initial guess (used by the
/// transfer engine to warm-start node sweeps).
pub fn invert_left_from(beta: MapParam, y: f64, guess: f64) -> Result<f64> {
    check_unit(y, "y")?;
    if y == 0.0 {
        return Ok(0.0);
    }
    let c = beta.coeff();
    let b = beta.beta();
    let g = |x: f64| x + c * x.powf(1.0 + b) - y;
    let mut lo = 0.0f64;
    let mut hi = y.min(BRANCH_POINT);
    let mut x = guess.clamp(lo, hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dg = 1.0 + c * (1.0 + b) * x.powf(b);
        let mut next = x - gx / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        // relative stop: ladder roots shrink to n^(-1/alpha) scale
        if (next - x).abs() <= INVERT_TOL * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        x = next;
    }
    if hi - lo <= 10.0 * INVERT_TOL * hi.abs().max(f64::MIN_POSITIVE) {
        return Ok(0.5 * (lo + hi));
    }
    Err(PmError::Convergence { beta: b, y })
}

/// How the exponents of a [`MapSequence`] are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SequencePolicy {
    /// Every map uses the same exponent.
    Constant { beta: f64 },
    /// Exponents drawn uniformly from (beta_min, alpha], independently per step.
    UniformRandom { beta_min: f64 },
    /// Exponents given verbatim.
    Explicit { betas: Vec<f64> },
}

/// A reproducible finite sequence beta_1 ... beta_n in [0, alpha].
///
/// Regenerating from the same (seed, policy, length) reproduces the exponents
/// bit for bit.
#[derive(Debug, Clone)]
pub struct MapSequence {
    family: FamilyConfig,
    seed: u64,
    policy: SequencePolicy,
    betas: Vec<MapParam>,
}

impl MapSequence {
    pub fn generate(
        family: FamilyConfig,
        seed: u64,
        policy: SequencePolicy,
        length: usize,
    ) -> Result<Self> {
        if length == 0 {
            return Err(PmError::Validation("sequence length must be positive".into()));
        }
        let alpha = family.alpha();
        let betas: Vec<MapParam> = match &policy {
            SequencePolicy::Constant { beta } => {
                let p = Self::check_beta(*beta, alpha)?;
                vec![p; length]
            }
            SequencePolicy::UniformRandom { beta_min } => {
                if !(0.0..alpha).contains(beta_min) {
                    return Err(PmError::Validation(format!(
                        "beta_min = {beta_min} must lie in [0, alpha)"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..length)
                    // half-open sampling on (beta_min, alpha]: flip the endpoint
                    .map(|_| MapParam::new(alpha - rng.gen_range(0.0..alpha - beta_min)))
                    .collect::<Result<_>>()?
            }
            SequencePolicy::Explicit { betas } => {
                if betas.len() != length {
                    return Err(PmError::Validation(format!(
                        "explicit list has {} entries, expected {length}",
                        betas.len()
                    )));
                }
                betas
                    .iter()
                    .map(|&b| Self::check_beta(b, alpha))
                    .collect::<Result<_>>()?
            }
        };
        Ok(Self { family, seed, policy, betas })
    }

    fn check_beta(beta: f64, alpha: f64) -> Result<MapParam> {
        if beta > alpha {
            return Err(PmError::Validation(format!(
                "beta = {beta} exceeds alpha = {alpha}"
            )));
        }
        MapParam::new(beta)
    }

    /// Constant-beta convenience constructor.
    pub fn constant(family: FamilyConfig, beta: f64, length: usize) -> Result<Self> {
        Self::generate(family, 0, SequencePolicy::Constant { beta }, length)
    }

    pub fn family(&self) -> FamilyConfig {
        self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn policy(&self) -> &SequencePolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// beta_k, 1-based to match the composition notation P_n o ... o P_1.
    pub fn beta(&self, k: usize) -> Result<MapParam> {
        if k == 0 || k > self.betas.len() {
            return Err(PmError::SequenceExhausted { needed: k, available: self.betas.len() });
        }
        Ok(self.betas[k - 1])
    }

    pub fn betas(&self) -> &[MapParam] {
        &self.betas
    }
}

/// Finite union of disjoint half-open arcs [lo, hi) on the circle, sorted by
/// lo; a wrapping arc is stored canonically as two entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcSet {
    arcs: Vec<(f64, f64)>,
}

const ARC_MERGE_EPS: f64 = 1e-12;
const FULL_COVER_TOL: f64 = 1e-9;

impl ArcSet {
    pub fn new(arcs: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &arcs {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(PmError::Validation(format!(
                    "invalid arc [{lo}, {hi})"
                )));
            }
        }
        Ok(Self::normalized(arcs))
    }

    /// Single arc; endpoints taken mod 1 (a wrapping arc splits in two).
    pub fn from_arc(lo: f64, hi: f64) -> Result<Self> {
        let lo = lo.rem_euclid(1.0);
        let hi = if hi == 1.0 { 1.0 } else { hi.rem_euclid(1.0) };
        if lo < hi {
            Self::new(vec![(lo, hi)])
        } else {
            Self::new(vec![(0.0, hi), (lo, 1.0)])
        }
    }

    pub fn full_circle() -> Self {
        Self { arcs: vec![(0.0, 1.0)] }
    }

    fn normalized(mut arcs: Vec<(f64, f64)>) -> Self {
        arcs.retain(|&(lo, hi)| hi - lo > ARC_MERGE_EPS);
        arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(arcs.len());
        for (lo, hi) in arcs {
            match merged.last_mut() {
                Some(last) if lo <= last.1 + ARC_MERGE_EPS => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Self { arcs: merged }
    }

    pub fn arcs(&self) -> &[(f64, f64)] {
        &self.arcs
    }

    pub fn total_length(&self) -> f64 {
        self.arcs.iter().map(|&(lo, hi)| hi - lo).sum()
    }

    pub fn is_full_circle(&self) -> bool {
        self.total_length() >= 1.0 - FULL_COVER_TOL
    }
}

/// Image of every arc under `T_beta` on the circle.
///
/// Each arc is split at the branch point 2/3; every monotone piece maps
/// endpoint-to-endpoint (both branches are increasing onto [0,1]), and the
/// resulting pieces are merged. Total length never decreases.
pub fn push_arc(beta: MapParam, arcs: &ArcSet) -> Result<ArcSet> {
    let mut out = Vec::with_capacity(arcs.arcs().len() * 2);
    for &(lo, hi) in arcs.arcs() {
        if lo < BRANCH_POINT {
            let piece_hi = hi.min(BRANCH_POINT);
            let a = eval_map(beta, lo)?;
            let b = eval_map(beta, piece_hi)?;
            out.push((a.min(1.0), b));
        }
        if hi > BRANCH_POINT {
            let piece_lo = lo.max(BRANCH_POINT);
            let a = 3.0 * piece_lo - 2.0;
            let b = 3.0 * hi - 2.0;
            out.push((a.max(0.0), b.min(1.0)));
        }
    }
    ArcSet::new(out)
}

/// Preimage ladder a_0^k = 1 > a_1^k > a_2^k > ... built by iterated
/// left-branch inverses: values[j+1] is the left preimage of values[j] under
/// `T_{beta_{k+j+1}}`.
#[derive(Debug, Clone)]
pub struct PreimageLadder {
    pub k: usize,
    pub values: Vec<f64>,
}

pub fn preimage_ladder(betas: &MapSequence, k: usize, n: usize) -> Result<PreimageLadder> {
    if n == 0 {
        return Err(PmError::Validation("ladder depth n must be >= 1".into()));
    }
    if k + n > betas.len() {
        return Err(PmError::SequenceExhausted { needed: k + n, available: betas.len() });
    }
    let mut values = Vec::with_capacity(n + 1);
    values.push(1.0);
    for j in 0..n {
        let beta = betas.beta(k + j + 1)?;
        let prev = values[j];
        values.push(invert_branch(beta, prev, Branch::Left)?);
    }
    Ok(PreimageLadder { k, values })
}

/// Constant-exponent ladder without materializing a sequence.
pub fn preimage_ladder_constant(beta: MapParam, n: usize) -> Result<PreimageLadder> {
    let mut values = Vec::with_capacity(n + 1);
    values.push(1.0);
    for j in 0..n {
        let prev = values[j];
        values.push(invert_branch(beta, prev, Branch::Left)?);
    }
    Ok(PreimageLadder { k: 0, values })
}
