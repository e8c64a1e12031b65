//! Densities with an x^(-alpha)-type singularity at 0.
//!
//! A density f is stored in regularized coordinates h(x) = x^alpha f(x) on a
//! power-graded mesh, with h interpolated in the basis {1, x^alpha} on each
//! cell (equivalently, f = c1 x^(-alpha) + c2 per cell). This representation
//! is exact for constants and for the theta = alpha power law, keeps f
//! monotone between nodes whenever the node values are monotone, and keeps
//! every integral closed-form via antiderivatives of x^(-alpha) and 1. On
//! the first few cells of the graded mesh it avoids the O((p/i)^2) relative
//! error a plain chord of x^alpha would make; away from 0 it coincides with
//! the chord to leading order.

use crate::error::{PmError, Result};
use crate::map::FamilyConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Default cell count, 2^14.
pub const DEFAULT_CELLS: usize = 1 << 14;

/// Power-graded partition of [0,1] with nodes x_i = (i/N)^p.
#[derive(Debug, PartialEq)]
pub struct GradedMesh {
    alpha: f64,
    n_cells: usize,
    grading: f64,
    nodes: Vec<f64>,
}

impl GradedMesh {
    pub fn new(family: FamilyConfig, n_cells: usize, grading: f64) -> Result<Arc<Self>> {
        let alpha = family.alpha();
        if n_cells < 2 {
            return Err(PmError::Validation("mesh needs at least 2 cells".into()));
        }
        let p_min = 1.0 / (1.0 - alpha);
        if grading < p_min {
            return Err(PmError::Validation(format!(
                "grading p = {grading} below the integrability threshold 1/(1-alpha) = {p_min}"
            )));
        }
        let nodes = (0..=n_cells)
            .map(|i| (i as f64 / n_cells as f64).powf(grading))
            .collect();
        Ok(Arc::new(Self { alpha, n_cells, grading, nodes }))
    }

    /// N = 2^14 cells with grading p = 2/(1-alpha).
    pub fn default_for(family: FamilyConfig) -> Arc<Self> {
        let p = 2.0 / (1.0 - family.alpha());
        Self::new(family, DEFAULT_CELLS, p).expect("default mesh parameters are valid")
    }

    pub fn with_cells(family: FamilyConfig, n_cells: usize) -> Result<Arc<Self>> {
        let p = 2.0 / (1.0 - family.alpha());
        Self::new(family, n_cells, p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the cell [x_i, x_{i+1}) containing x.
    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.n_cells;
        let guess = (x.powf(1.0 / self.grading) * n as f64) as usize;
        let mut i = guess.min(n - 1);
        while i > 0 && x < self.nodes[i] {
            i -= 1;
        }
        while i + 1 < n && x >= self.nodes[i + 1] {
            i += 1;
        }
        i
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.alpha == other.alpha && self.n_cells == other.n_cells && self.grading == other.grading
    }
}

/// Closed-form integral of x^(-alpha) h over [s, t] inside the cell
/// [xa, xb], with h interpolated in the {1, x^alpha} basis through
/// (xa, ha) and (xb, hb): h(x) = ha + (hb - ha) (x^alpha - xa^alpha) / D,
/// D = xb^alpha - xa^alpha. Cell 0 (xa = 0) needs no special case since
/// 0^alpha = 0.
fn pow_seg_integral(alpha: f64, xa: f64, xb: f64, ha: f64, hb: f64, s: f64, t: f64) -> f64 {
    debug_assert!(xb > xa && s >= xa && t <= xb && t >= s);
    let q = 1.0 - alpha;
    let d = xb.powf(alpha) - xa.powf(alpha);
    let dq = (t.powf(q) - s.powf(q)) / q;
    ha * dq + (hb - ha) / d * ((t - s) - xa.powf(alpha) * dq)
}

/// A density f(x) = x^(-alpha) h(x) with h interpolated in the {1, x^alpha}
/// basis on each cell, i.e. f = c1 x^(-alpha) + c2 per cell. A piecewise
/// linear h would force f(0+) = 0 on the first cell, which is incompatible
/// with nonincreasing densities; the power basis is exact for constants and
/// for the theta = alpha power law on every cell.
///
/// `hvals[0]` is the limiting value of h at 0 (stored explicitly, never
/// extrapolated); values are immutable after construction.
#[derive(Debug, Clone)]
pub struct ConeDensity {
    mesh: Arc<GradedMesh>,
    hvals: Vec<f64>,
}

impl ConeDensity {
    pub fn from_hvals(mesh: Arc<GradedMesh>, hvals: Vec<f64>) -> Result<Self> {
        if hvals.len() != mesh.n_cells() + 1 {
            return Err(PmError::Validation(format!(
                "expected {} h-values, got {}",
                mesh.n_cells() + 1,
                hvals.len()
            )));
        }
        if hvals.iter().any(|h| !h.is_finite()) {
            return Err(PmError::Validation("non-finite h-value".into()));
        }
        Ok(Self { mesh, hvals })
    }

    /// Constant density f = value; h = value * x^alpha with h(0) = 0.
    pub fn constant(mesh: Arc<GradedMesh>, value: f64) -> Self {
        let alpha = mesh.alpha();
        let hvals = mesh.nodes().iter().map(|&x| value * x.powf(alpha)).collect();
        Self { mesh, hvals }
    }

    /// Pure power law f = (1-theta) x^(-theta), unit mass, 0 <= theta <= alpha.
    pub fn power_law(mesh: Arc<GradedMesh>, theta: f64) -> Result<Self> {
        let alpha = mesh.alpha();
        if !(0.0..=alpha).contains(&theta) {
            return Err(PmError::Validation(format!(
                "theta = {theta} outside [0, alpha = {alpha}]"
            )));
        }
        let q = alpha - theta;
        let hvals = mesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &x)| if i == 0 && q == 0.0 { 1.0 - theta } else { (1.0 - theta) * x.powf(q) })
            .collect();
        Ok(Self { mesh, hvals })
    }

    /// Samples a bounded function f at the nodes; h(0) = 0.
    pub fn from_fn(mesh: Arc<GradedMesh>, f: impl Fn(f64) -> f64) -> Self {
        let alpha = mesh.alpha();
        let hvals = mesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &x)| if i == 0 { 0.0 } else { x.powf(alpha) * f(x) })
            .collect();
        Self { mesh, hvals }
    }

    pub fn mesh(&self) -> &Arc<GradedMesh> {
        &self.mesh
    }

    pub fn hvals(&self) -> &[f64] {
        &self.hvals
    }

    pub fn h0(&self) -> f64 {
        self.hvals[0]
    }

    /// h(x) by {1, x^alpha}-basis interpolation between nodes.
    pub fn h_at(&self, x: f64) -> f64 {
        let nodes = self.mesh.nodes();
        if x <= 0.0 {
            return self.hvals[0];
        }
        if x >= 1.0 {
            return *self.hvals.last().unwrap();
        }
        let i = self.mesh.cell_of(x);
        let alpha = self.mesh.alpha();
        let (pa, pb) = (nodes[i].powf(alpha), nodes[i + 1].powf(alpha));
        let t = (x.powf(alpha) - pa) / (pb - pa);
        self.hvals[i] + t * (self.hvals[i + 1] - self.hvals[i])
    }

    /// f(x) = x^(-alpha) h(x); requires x > 0.
    pub fn value_at(&self, x: f64) -> f64 {
        debug_assert!(x > 0.0);
        x.powf(-self.mesh.alpha()) * self.h_at(x)
    }

    /// Integral of f over cell i, closed form.
    pub fn cell_mass(&self, i: usize) -> f64 {
        let nodes = self.mesh.nodes();
        let (xa, xb) = (nodes[i], nodes[i + 1]);
        pow_seg_integral(self.mesh.alpha(), xa, xb, self.hvals[i], self.hvals[i + 1], xa, xb)
    }

    fn check_mesh(&self, other: &Self) -> Result<()> {
        if !self.mesh.same_as(&other.mesh) {
            return Err(PmError::MeshMismatch);
        }
        Ok(())
    }

    /// Total mass m(f) = int_0^1 f dm; cells summed in fixed ascending order.
    pub fn mass(&self) -> f64 {
        (0..self.mesh.n_cells()).map(|i| self.cell_mass(i)).sum()
    }

    /// Cumulative masses at the nodes: F_0 = 0, F_i = int_0^{x_i} f dm.
    pub fn cumulative(&self) -> Vec<f64> {
        let n = self.mesh.n_cells();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let prev = cum[i];
            cum.push(prev + self.cell_mass(i));
        }
        cum
    }

    /// L1 distance int_0^1 |f - g| dm, exact for the stored representation:
    /// the h-difference is monotone within each cell (it lives in the
    /// {1, x^alpha} basis), so a sign change is located in closed form and
    /// the cell is split there.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.check_mesh(other)?;
        let alpha = self.mesh.alpha();
        let nodes = self.mesh.nodes();
        let mut total = 0.0;
        for i in 0..self.mesh.n_cells() {
            let (xa, xb) = (nodes[i], nodes[i + 1]);
            let da = self.hvals[i] - other.hvals[i];
            let db = self.hvals[i + 1] - other.hvals[i + 1];
            if da == 0.0 && db == 0.0 {
                continue;
            }
            if da * db >= 0.0 {
                total += pow_seg_integral(alpha, xa, xb, da, db, xa, xb).abs();
            } else {
                // d(xc) = 0 at xc^alpha = xa^alpha + (xb^alpha - xa^alpha) da/(da - db)
                let (pa, pb) = (xa.powf(alpha), xb.powf(alpha));
                let xc = (pa + (pb - pa) * da / (da - db)).powf(1.0 / alpha);
                let xc = xc.clamp(xa, xb);
                total += pow_seg_integral(alpha, xa, xb, da, db, xa, xc).abs();
                total += pow_seg_integral(alpha, xa, xb, da, db, xc, xb).abs();
            }
        }
        Ok(total)
    }

    /// L1 norm; equals the mass for nonnegative densities.
    pub fn l1_norm(&self) -> f64 {
        let zero = Self { mesh: self.mesh.clone(), hvals: vec![0.0; self.hvals.len()] };
        self.l1_distance(&zero).expect("same mesh")
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { mesh: self.mesh.clone(), hvals: self.hvals.iter().map(|h| h * s).collect() }
    }

    /// a*f + b*g on a shared mesh.
    pub fn linear_comb(a: f64, f: &Self, b: f64, g: &Self) -> Result<Self> {
        f.check_mesh(g)?;
        let hvals = f
            .hvals
            .iter()
            .zip(&g.hvals)
            .map(|(hf, hg)| a * hf + b * hg)
            .collect();
        Ok(Self { mesh: f.mesh.clone(), hvals })
    }
}

/// Cumulative integral of f extended periodically to the real line.
struct PeriodicCumulative<'a> {
    f: &'a ConeDensity,
    node_cum: Vec<f64>,
    mass: f64,
}

impl<'a> PeriodicCumulative<'a> {
    fn new(f: &'a ConeDensity) -> Self {
        let node_cum = f.cumulative();
        let mass = *node_cum.last().unwrap();
        Self { f, node_cum, mass }
    }

    fn at_unit(&self, t: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&t));
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return self.mass;
        }
        let mesh = self.f.mesh();
        let i = mesh.cell_of(t);
        let nodes = mesh.nodes();
        let h = self.f.hvals();
        let partial = if t > nodes[i] {
            pow_seg_integral(mesh.alpha(), nodes[i], nodes[i + 1], h[i], h[i + 1], nodes[i], t)
        } else {
            0.0
        };
        self.node_cum[i] + partial
    }

    fn at(&self, t: f64) -> f64 {
        let k = t.floor();
        self.at_unit(t - k) + k * self.mass
    }
}

/// Averaging operator A_eps f(x) = (1/2 eps) int_{B_eps(x)} f dm on the
/// circle, returned as the node-sampled representation.
pub fn average_op(f: &ConeDensity, eps: f64) -> Result<ConeDensity> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(PmError::Domain(format!("eps = {eps} outside (0, 1/2)")));
    }
    let cum = PeriodicCumulative::new(f);
    let mesh = f.mesh().clone();
    let alpha = mesh.alpha();
    let hvals = mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == 0 {
                // the averaged density is bounded near 0, so x^alpha f -> 0
                0.0
            } else {
                let v = (cum.at(x + eps) - cum.at(x - eps)) / (2.0 * eps);
                x.powf(alpha) * v.max(0.0)
            }
        })
        .collect();
    ConeDensity::from_hvals(mesh, hvals)
}

/// A C^1 observable on the circle with certified norm bounds.
pub struct C1Observable {
    func: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    sup_norm: f64,
    deriv_sup_norm: f64,
}

impl C1Observable {
    /// The stated norms are checked as upper bounds on a 10^4-point grid
    /// (values directly, the derivative by central differences).
    pub fn new(
        func: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sup_norm: f64,
        deriv_sup_norm: f64,
    ) -> Result<Self> {
        let grid = 10_000usize;
        let h = 1.0 / grid as f64;
        for i in 0..=grid {
            let x = i as f64 * h;
            if func(x).abs() > sup_norm + 1e-9 {
                return Err(PmError::Validation(format!(
                    "sup_norm = {sup_norm} violated at x = {x}"
                )));
            }
            if i > 0 && i < grid {
                let d = (func(x + h) - func(x - h)) / (2.0 * h);
                if d.abs() > deriv_sup_norm + 1e-4 {
                    return Err(PmError::Validation(format!(
                        "deriv_sup_norm = {deriv_sup_norm} violated at x = {x}"
                    )));
                }
            }
        }
        Ok(Self { func: Box::new(func), sup_norm, deriv_sup_norm })
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn deriv_sup_norm(&self) -> f64 {
        self.deriv_sup_norm
    }
}

/// Shifts a C^1 observable into the cone C2: returns the discretized
/// psi(x) + lambda x + nu together with (lambda, nu).
///
/// lambda = -||psi'||_inf - 1 and nu is one plus the maximum of the two
/// admissibility expressions, so the map ||psi||_C1 -> |lambda| + |nu| is
/// affine.
pub fn c1_shift(
    psi: &C1Observable,
    cone: &crate::cones::ConeParams,
    mesh: Arc<GradedMesh>,
) -> (ConeDensity, f64, f64) {
    let alpha = cone.alpha();
    let a = cone.a();
    let sup = psi.sup_norm();
    let dsup = psi.deriv_sup_norm();
    let lambda = -dsup - 1.0;
    let nu1 = ((1.0 + alpha) * sup + dsup - lambda * (2.0 + alpha)) / (1.0 + alpha);
    let nu2 = (1.0 + a) / (a - 1.0) * sup - a * lambda / (2.0 * (a - 1.0));
    let nu = nu1.max(nu2) + 1.0;
    let shifted = ConeDensity::from_fn(mesh, |x| psi.eval(x) + lambda * x + nu);
    (shifted, lambda, nu)
}

/// Random unit-mass member of C2: a convex combination of the constant 1 and
/// power laws (1-theta) x^(-theta) with theta in (0, alpha], deterministic in
/// the seed, normalized to exactly unit represented mass.
pub fn sample_cone_density(
    seed: u64,
    cone: &crate::cones::ConeParams,
    mesh: Arc<GradedMesh>,
) -> ConeDensity {
    let alpha = cone.alpha();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_power = rng.gen_range(1..=3usize);
    let mut weights = vec![rng.gen_range(0.05..1.0)]; // constant component
    let mut thetas = Vec::with_capacity(n_power);
    for _ in 0..n_power {
        weights.push(rng.gen_range(0.05..1.0));
        thetas.push(alpha - rng.gen_range(0.0..alpha)); // theta in (0, alpha]
    }
    let wsum: f64 = weights.iter().sum();
    let mut f = ConeDensity::constant(mesh.clone(), weights[0] / wsum);
    for (j, &theta) in thetas.iter().enumerate() {
        let comp = ConeDensity::power_law(mesh.clone(), theta).expect("theta <= alpha");
        f = ConeDensity::linear_comb(1.0, &f, weights[j + 1] / wsum, &comp).expect("same mesh");
    }
    let m = f.mass();
    f.scaled(1.0 / m)
}
