//! Perron-Frobenius operator action: exact pointwise pullback, the grid
//! collocation engine in h-coordinates, an Ulam matrix backend kept for
//! independent validation, the averaging perturbation and kernel estimates.

use crate::density::{average_op, ConeDensity, GradedMesh};
use crate::error::{PmError, Result};
use crate::map::{eval_deriv, invert_branch, invert_left_from, Branch, MapParam, MapSequence};
use rayon::prelude::*;
use std::sync::Arc;

/// Depth cap for the exact preimage-tree oracle (2^n evaluations per point).
pub const MAX_EXACT_DEPTH: usize = 22;

/// One-step pullback (P_beta f)(x) = f(y1)/T'(y1) + f(y2)/T'(y2) over the two
/// branch preimages of x.
pub fn pf_point(beta: MapParam, f: impl Fn(f64) -> f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(PmError::Domain(format!("x = {x} outside (0, 1]")));
    }
    let y1 = invert_branch(beta, x, Branch::Left)?;
    let y2 = invert_branch(beta, x, Branch::Right)?;
    Ok(f(y1) / eval_deriv(beta, y1)? + f(y2) / 3.0)
}

/// Exact evaluation of (P_n o ... o P_1 f0)(x) by full expansion over all 2^n
/// inverse-branch words. Ground-truth oracle for the grid engine; cost grows
/// as 2^n, capped at [`MAX_EXACT_DEPTH`].
pub fn pf_exact_seq(
    betas: &MapSequence,
    f0: &(impl Fn(f64) -> f64 + ?Sized),
    x: f64,
    n: usize,
) -> Result<f64> {
    if n > MAX_EXACT_DEPTH {
        return Err(PmError::DepthLimit(n));
    }
    if n > betas.len() {
        return Err(PmError::SequenceExhausted { needed: n, available: betas.len() });
    }
    fn go(
        betas: &MapSequence,
        f0: &(impl Fn(f64) -> f64 + ?Sized),
        x: f64,
        depth: usize,
    ) -> Result<f64> {
        if depth == 0 {
            return Ok(f0(x));
        }
        let beta = betas.beta(depth)?;
        let y1 = invert_branch(beta, x, Branch::Left)?;
        let y2 = invert_branch(beta, x, Branch::Right)?;
        Ok(go(betas, f0, y1, depth - 1)? / eval_deriv(beta, y1)?
            + go(betas, f0, y2, depth - 1)? / 3.0)
    }
    go(betas, f0, x, n)
}

/// Precomputed branch preimages and derivatives of all mesh nodes for one
/// map, shared across every density pushed through the same step.
pub struct StepPlan {
    beta: MapParam,
    /// Left preimage of each node (index 0 unused).
    y_left: Vec<f64>,
    /// T'(y_left) at each node.
    d_left: Vec<f64>,
}

impl StepPlan {
    pub fn new(mesh: &GradedMesh, beta: MapParam) -> Result<Self> {
        let nodes = mesh.nodes();
        let mut y_left = vec![0.0; nodes.len()];
        let mut d_left = vec![1.0; nodes.len()];
        let mut guess = 0.0;
        for (i, &x) in nodes.iter().enumerate().skip(1) {
            let y1 = invert_left_from(beta, x, guess)?;
            y_left[i] = y1;
            d_left[i] = eval_deriv(beta, y1)?;
            guess = y1;
        }
        Ok(Self { beta, y_left, d_left })
    }

    pub fn beta(&self) -> MapParam {
        self.beta
    }
}

/// One collocation step of the transfer operator in h-coordinates.
///
/// For interior nodes, h_P(x) = (x/y1)^alpha h(y1)/T'(y1) + x^alpha f(y2)/3
/// with f interpolated linearly in h. At node 0 the analytic limit applies:
/// y1 -> 0 with y1/x -> 1, so the left term tends to h(0)/T'(0) = h(0), and
/// the right term carries the factor x^alpha -> 0; hence h_P(0) = h_f(0).
pub fn pf_grid_step_with(plan: &StepPlan, f: &ConeDensity) -> ConeDensity {
    let mesh = f.mesh().clone();
    let alpha = mesh.alpha();
    let nodes = mesh.nodes();
    let hvals: Vec<f64> = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                return f.h0();
            }
            let x = nodes[i];
            let y1 = plan.y_left[i];
            let y2 = (x + 2.0) / 3.0;
            let left = (x / y1).powf(alpha) * f.h_at(y1) / plan.d_left[i];
            let right = x.powf(alpha) * f.value_at(y2) / 3.0;
            left + right
        })
        .collect();
    ConeDensity::from_hvals(mesh, hvals).expect("same node count")
}

/// One collocation step, building the plan on the fly.
pub fn pf_grid_step(beta: MapParam, f: &ConeDensity) -> Result<ConeDensity> {
    let plan = StepPlan::new(f.mesh(), beta)?;
    Ok(pf_grid_step_with(&plan, f))
}

/// Pushes several densities through `n` steps of the sequence starting at
/// map index `start_k` (1-based), sharing one plan per step. `on_step` is
/// called after each step with the number of steps taken so far.
pub fn push_many_with(
    betas: &MapSequence,
    densities: &mut [ConeDensity],
    start_k: usize,
    n: usize,
    mut on_step: impl FnMut(usize, &[ConeDensity]),
) -> Result<()> {
    if densities.is_empty() || n == 0 {
        return Ok(());
    }
    let mesh = densities[0].mesh().clone();
    let mut plan: Option<StepPlan> = None;
    for step in 1..=n {
        let beta = betas.beta(start_k + step - 1)?;
        let reuse = plan.as_ref().is_some_and(|p| p.beta() == beta);
        if !reuse {
            plan = Some(StepPlan::new(&mesh, beta)?);
        }
        let p = plan.as_ref().unwrap();
        for f in densities.iter_mut() {
            *f = pf_grid_step_with(p, f);
        }
        on_step(step, densities);
    }
    Ok(())
}

/// n-fold composition P_{beta_n} o ... o P_{beta_1} applied to f.
pub fn sequential_push(betas: &MapSequence, f: &ConeDensity, n: usize) -> Result<ConeDensity> {
    sequential_push_from(betas, f, 1, n)
}

/// Same, starting at map index `start_k` (1-based).
pub fn sequential_push_from(
    betas: &MapSequence,
    f: &ConeDensity,
    start_k: usize,
    n: usize,
) -> Result<ConeDensity> {
    let mut ds = [f.clone()];
    push_many_with(betas, &mut ds, start_k, n, |_, _| {})?;
    let [out] = ds;
    Ok(out)
}

/// Sparse row-substochastic transition structure of one map on the mesh:
/// entries M[i][j] = m(T^{-1} C_j intersect C_i) / m(C_i).
pub struct UlamMatrix {
    mesh: Arc<GradedMesh>,
    rows: Vec<Vec<(u32, f64)>>,
}

impl UlamMatrix {
    pub fn mesh(&self) -> &Arc<GradedMesh> {
        &self.mesh
    }

    pub fn n_cells(&self) -> usize {
        self.rows.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    /// Pushes a vector of cell masses forward: out_j = sum_i mu_i M[i][j].
    /// Accumulation order is fixed (ascending i, then ascending j).
    pub fn apply(&self, cell_masses: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let mu = cell_masses[i];
            if mu == 0.0 {
                continue;
            }
            for &(j, v) in row {
                out[j as usize] += mu * v;
            }
        }
        out
    }

    /// Triplet view (row, col, value) for serialization.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j as usize, v)))
    }
}

/// Builds the Ulam matrix of `T_beta` from branch preimages of the cell
/// endpoints; both branches are monotone, so each T^{-1} C_j is one interval
/// per branch.
pub fn build_ulam(beta: MapParam, mesh: &Arc<GradedMesh>) -> Result<UlamMatrix> {
    let nodes = mesh.nodes();
    let n = mesh.n_cells();

    // left-branch preimages of all nodes, warm-started sweep
    let mut left_pre = vec![0.0; n + 1];
    let mut guess = 0.0;
    for (j, &x) in nodes.iter().enumerate().skip(1) {
        left_pre[j] = invert_left_from(beta, x, guess)?;
        guess = left_pre[j];
    }

    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut spread = |j: usize, u: f64, v: f64| {
        if v <= u {
            return;
        }
        let mut i = mesh.cell_of(u);
        while i < n && nodes[i] < v {
            let overlap = v.min(nodes[i + 1]) - u.max(nodes[i]);
            if overlap > 0.0 {
                rows[i].push((j as u32, overlap / (nodes[i + 1] - nodes[i])));
            }
            i += 1;
        }
    };
    for j in 0..n {
        spread(j, left_pre[j], left_pre[j + 1]);
        spread(j, (nodes[j] + 2.0) / 3.0, (nodes[j + 1] + 2.0) / 3.0);
    }
    // merge duplicate columns per row, ascending
    for row in &mut rows {
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
        for &(j, v) in row.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        *row = merged;
    }
    Ok(UlamMatrix { mesh: mesh.clone(), rows })
}

/// Cell masses of a density, the Ulam-side representation.
pub fn cell_masses(f: &ConeDensity) -> Vec<f64> {
    (0..f.mesh().n_cells()).map(|i| f.cell_mass(i)).collect()
}

/// Piecewise-constant density value at x from a cell-mass vector.
pub fn cell_value_at(mesh: &GradedMesh, masses: &[f64], x: f64) -> f64 {
    let i = mesh.cell_of(x);
    masses[i] / (mesh.nodes()[i + 1] - mesh.nodes()[i])
}

/// P_{eps,m} f = (n_eps grid steps starting at index m) after A_eps.
/// Returns the result together with the L1 deviation from the unperturbed
/// push of the same f, for monitoring the eps^(1-alpha) error bound.
pub fn perturbed_apply(
    betas: &MapSequence,
    m: usize,
    eps: f64,
    n_eps: usize,
    f: &ConeDensity,
) -> Result<(ConeDensity, f64)> {
    let averaged = average_op(f, eps)?;
    let perturbed = sequential_push_from(betas, &averaged, m, n_eps)?;
    let plain = sequential_push_from(betas, f, m, n_eps)?;
    let deviation = perturbed.l1_distance(&plain)?;
    Ok((perturbed, deviation))
}

/// Normalized indicator of the ball B_eps(z) on the circle, built from exact
/// overlap fractions of the ball with the window around each node (no
/// pointwise sampling; eps-balls near 0 intersect highly nonuniform cells),
/// then scaled to exactly unit represented mass.
pub fn ball_indicator_density(mesh: Arc<GradedMesh>, z: f64, eps: f64) -> Result<ConeDensity> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(PmError::Domain(format!("eps = {eps} outside (0, 1/4)")));
    }
    let z = z.rem_euclid(1.0);
    // ball as up to two plain intervals in [0,1]
    let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(2);
    let (lo, hi) = (z - eps, z + eps);
    if lo < 0.0 {
        pieces.push((0.0, hi));
        pieces.push((lo + 1.0, 1.0));
    } else if hi > 1.0 {
        pieces.push((lo, 1.0));
        pieces.push((0.0, hi - 1.0));
    } else {
        pieces.push((lo, hi));
    }
    let overlap = |u: f64, v: f64| -> f64 {
        pieces.iter().map(|&(a, b)| (v.min(b) - u.max(a)).max(0.0)).sum()
    };

    let nodes = mesh.nodes();
    let n = mesh.n_cells();
    let alpha = mesh.alpha();
    let mid = |i: usize| 0.5 * (nodes[i] + nodes[i + 1]);
    let mut hvals = vec![0.0; n + 1];
    for i in 1..=n {
        let w_lo = mid(i - 1);
        let w_hi = if i == n { 1.0 } else { mid(i) };
        let frac = overlap(w_lo, w_hi) / (w_hi - w_lo);
        hvals[i] = nodes[i].powf(alpha) * frac / (2.0 * eps);
    }
    let f = ConeDensity::from_hvals(mesh, hvals)?;
    let m = f.mass();
    if m <= 0.0 {
        return Err(PmError::Domain("ball indicator has zero represented mass".into()));
    }
    Ok(f.scaled(1.0 / m))
}

/// Kernel values K_{eps,m}(x, z) on a (z, x) grid, with the empirical lower
/// bound gamma_hat = min over the grid.
pub struct KernelEstimate {
    pub eps: f64,
    pub n_eps: usize,
    pub z_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// values[zi][xi] = K(x_grid[xi], z_grid[zi])
    pub values: Vec<Vec<f64>>,
    pub gamma_hat: f64,
}

/// For each z on a uniform grid, pushes the normalized indicator of B_eps(z)
/// through n_eps steps (starting at map index m) and records the density at
/// the x-grid. Parallel across z.
pub fn kernel_estimate(
    betas: &MapSequence,
    m: usize,
    eps: f64,
    n_eps: usize,
    mesh: Arc<GradedMesh>,
    nz: usize,
    nx: usize,
) -> Result<KernelEstimate> {
    if n_eps == 0 {
        return Err(PmError::Validation("n_eps must be >= 1".into()));
    }
    if m + n_eps - 1 > betas.len() {
        return Err(PmError::SequenceExhausted { needed: m + n_eps - 1, available: betas.len() });
    }
    let z_grid: Vec<f64> = (0..nz).map(|j| (j as f64 + 0.5) / nz as f64).collect();
    let x_grid: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) / nx as f64).collect();
    let values: Vec<Vec<f64>> = z_grid
        .par_iter()
        .map(|&z| -> Result<Vec<f64>> {
            let ind = ball_indicator_density(mesh.clone(), z, eps)?;
            let pushed = sequential_push_from(betas, &ind, m, n_eps)?;
            Ok(x_grid.iter().map(|&x| pushed.value_at(x)).collect())
        })
        .collect::<Result<_>>()?;
    let gamma_hat = values
        .iter()
        .flat_map(|row| row.iter().copied())
        .fold(f64::INFINITY, f64::min);
    Ok(KernelEstimate { eps, n_eps, z_grid, x_grid, values, gamma_hat })
}
