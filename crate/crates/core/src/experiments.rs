//! Scripted numerical experiments: memory-loss decay and its log-log fit,
//! non-stationary correlations, preimage asymptotics, covering times,
//! distortion diagnostics and the epsilon schedule.

use crate::cones::{is_in_c2, ConeParams};
use crate::density::{C1Observable, ConeDensity};
use crate::error::{PmError, Result};
use crate::map::{
    eval_deriv, eval_map, preimage_ladder_constant, push_arc, ArcSet, FamilyConfig, MapParam,
    MapSequence, SequencePolicy,
};
use crate::transfer::push_many_with;
use serde::Serialize;

/// Provenance of one experiment run, carried on the output series.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub alpha: f64,
    pub seed: u64,
    pub policy: String,
    pub mesh_cells: usize,
    pub mesh_grading: f64,
    pub observables: String,
}

/// (n, D_n) pairs from a decay experiment.
#[derive(Debug, Clone, Serialize)]
pub struct DecaySeries {
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    pub meta: RunMeta,
}

/// Log-log regression outcome.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub log_log_correction_used: bool,
    pub residual_rms: f64,
    pub fit_window: (usize, usize),
}

/// Ordinary least squares of log D_n on log n over the window, subtracting
/// `correction_exponent * log log n` first when a correction is given.
pub fn fit_poly_log(
    ns: &[usize],
    values: &[f64],
    correction_exponent: Option<f64>,
    window: (usize, usize),
) -> Result<FitResult> {
    if window.0 >= window.1 {
        return Err(PmError::Validation(format!(
            "fit window ({}, {}) is empty",
            window.0, window.1
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&n, &v) in ns.iter().zip(values) {
        if n < window.0 || n > window.1 {
            continue;
        }
        if v <= 0.0 {
            return Err(PmError::InsufficientData(format!(
                "nonpositive value D_{n} = {v} in fit window"
            )));
        }
        if correction_exponent.is_some() && n < 2 {
            return Err(PmError::Domain("log log correction needs n >= 2".into()));
        }
        let x = (n as f64).ln();
        let mut y = v.ln();
        if let Some(c) = correction_exponent {
            y -= c * x.ln();
        }
        xs.push(x);
        ys.push(y);
    }
    if xs.len() < 5 {
        return Err(PmError::InsufficientData(format!(
            "only {} points in fit window, need >= 5",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(FitResult {
        slope,
        intercept,
        log_log_correction_used: correction_exponent.is_some(),
        residual_rms: (ss / n).sqrt(),
        fit_window: window,
    })
}

/// Geometric checkpoints n = ceil(1.2^k), deduplicated, capped at n_max.
pub fn geometric_checkpoints(n_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut v = 1.0f64;
    loop {
        let n = v.ceil() as usize;
        if n > n_max {
            break;
        }
        if out.last() != Some(&n) {
            out.push(n);
        }
        v *= 1.2;
    }
    if out.last() != Some(&n_max) {
        out.push(n_max);
    }
    out
}

/// Default fit window start: skip transients below max(10, n_max/20).
pub fn default_fit_window(n_max: usize) -> (usize, usize) {
    ((n_max / 20).max(10), n_max)
}

/// Output of [`memory_loss_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct MemoryLossRun {
    pub series: DecaySeries,
    /// None when every checkpoint value is zero (phi = psi).
    pub fit: Option<FitResult>,
    /// Smallest C with D_n <= C n^(1-1/alpha) (log n)^(1/alpha) over
    /// checkpoints n >= 10.
    pub envelope_c: f64,
}

/// Pushes phi and psi through the same map sequence and records the L1
/// distance D_n at the checkpoints, then fits the decay exponent.
///
/// Requires equal masses (within 1e-8) and C2 membership of both inputs.
pub fn memory_loss_experiment(
    seq: &MapSequence,
    phi: &ConeDensity,
    psi: &ConeDensity,
    cone: &ConeParams,
    n_max: usize,
    checkpoints: &[usize],
    use_log_correction: bool,
) -> Result<MemoryLossRun> {
    if (phi.mass() - psi.mass()).abs() > 1e-8 {
        return Err(PmError::Validation(format!(
            "observables must have equal mass: {} vs {}",
            phi.mass(),
            psi.mass()
        )));
    }
    for (name, f) in [("phi", phi), ("psi", psi)] {
        let report = is_in_c2(f, cone, 1e-6);
        if !report.ok {
            return Err(PmError::Validation(format!(
                "{name} is not in C2: {:?}",
                report.violations.first()
            )));
        }
    }
    if n_max > seq.len() {
        return Err(PmError::SequenceExhausted { needed: n_max, available: seq.len() });
    }
    let alpha = cone.alpha();
    let mut ds = vec![phi.clone(), psi.clone()];
    let mut ns = Vec::with_capacity(checkpoints.len());
    let mut values = Vec::with_capacity(checkpoints.len());
    push_many_with(seq, &mut ds, 1, n_max, |step, densities| {
        if checkpoints.binary_search(&step).is_ok() {
            ns.push(step);
            values.push(densities[0].l1_distance(&densities[1]).expect("same mesh"));
        }
    })?;

    let meta = RunMeta {
        alpha,
        seed: seq.seed(),
        policy: format!("{:?}", seq.policy()),
        mesh_cells: phi.mesh().n_cells(),
        mesh_grading: phi.mesh().grading(),
        observables: "memory-loss pair".into(),
    };
    let inv_alpha = 1.0 / alpha;
    let envelope_c = ns
        .iter()
        .zip(&values)
        .filter(|(&n, _)| n >= 10)
        .map(|(&n, &d)| {
            let nf = n as f64;
            d / (nf.powf(1.0 - inv_alpha) * nf.ln().powf(inv_alpha))
        })
        .fold(0.0f64, f64::max);
    let correction = if use_log_correction { Some(inv_alpha) } else { None };
    let fit = if values.iter().all(|&v| v <= 0.0) {
        None
    } else {
        Some(fit_poly_log(&ns, &values, correction, default_fit_window(n_max))?)
    };
    Ok(MemoryLossRun { series: DecaySeries { ns, values, meta }, fit, envelope_c })
}

/// Output of [`correlation_experiment`]: correlation values and the
/// memory-loss upper bounds at the same checkpoints.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationRun {
    pub series: DecaySeries,
    pub bounds: Vec<f64>,
}

/// Non-stationary correlation |int psi (phi o T_1^n) dm - int psi dm int
/// phi o T_1^n dm| at the checkpoints, by midpoint quadrature of
/// orbit-composed integrands, together with the upper bound
/// ||phi||_inf * || P_1^n psi - P_1^n (1 m(psi)) ||_1.
pub fn correlation_experiment(
    seq: &MapSequence,
    psi: &ConeDensity,
    phi_obs: &C1Observable,
    n_max: usize,
    checkpoints: &[usize],
    quad_points: usize,
) -> Result<CorrelationRun> {
    if n_max > seq.len() {
        return Err(PmError::SequenceExhausted { needed: n_max, available: seq.len() });
    }
    let m = quad_points;
    let w = 1.0 / m as f64;
    let base: Vec<f64> = (0..m).map(|q| (q as f64 + 0.5) * w).collect();
    let psi_vals: Vec<f64> = base.iter().map(|&x| psi.value_at(x)).collect();
    let psi_int: f64 = psi_vals.iter().map(|v| v * w).sum();

    // upper-bound side: push psi and the equal-mass constant with the grid engine
    let flat = ConeDensity::constant(psi.mesh().clone(), psi.mass());
    let mut pushed = vec![psi.clone(), flat];
    let mut bound_at = vec![0.0; checkpoints.len()];
    push_many_with(seq, &mut pushed, 1, n_max, |step, densities| {
        if let Ok(idx) = checkpoints.binary_search(&step) {
            bound_at[idx] =
                phi_obs.sup_norm() * densities[0].l1_distance(&densities[1]).expect("same mesh");
        }
    })?;

    // quadrature side: advance all quadrature points by one map per step
    let mut orbit = base.clone();
    let mut ns = Vec::new();
    let mut values = Vec::new();
    for step in 1..=n_max {
        let beta = seq.beta(step)?;
        for x in orbit.iter_mut() {
            let v = eval_map(beta, *x)?;
            *x = if v >= 1.0 { 0.0 } else { v };
        }
        if checkpoints.binary_search(&step).is_ok() {
            let phi_orb: Vec<f64> = orbit.iter().map(|&x| phi_obs.eval(x)).collect();
            let cross: f64 = psi_vals.iter().zip(&phi_orb).map(|(p, q)| p * q * w).sum();
            let phi_int: f64 = phi_orb.iter().map(|v| v * w).sum();
            ns.push(step);
            values.push((cross - psi_int * phi_int).abs());
        }
    }
    let bounds: Vec<f64> = checkpoints
        .iter()
        .enumerate()
        .filter(|(_, &n)| ns.contains(&n))
        .map(|(i, _)| bound_at[i])
        .collect();
    let meta = RunMeta {
        alpha: seq.family().alpha(),
        seed: seq.seed(),
        policy: format!("{:?}", seq.policy()),
        mesh_cells: psi.mesh().n_cells(),
        mesh_grading: psi.mesh().grading(),
        observables: "correlation pair".into(),
    };
    Ok(CorrelationRun { series: DecaySeries { ns, values, meta }, bounds })
}

/// Output of [`an_asymptotics`].
#[derive(Debug, Clone, Serialize)]
pub struct AnAsymptotics {
    pub fit: FitResult,
    /// Empirical constant c_alpha = max_n a_n n^(1/alpha).
    pub c_alpha: f64,
    pub ns: Vec<usize>,
    pub a_n: Vec<f64>,
}

/// Fits log a_n against log n for the constant-alpha preimage ladder; the
/// theoretical slope is -1/alpha.
pub fn an_asymptotics(alpha: f64, n_max: usize) -> Result<AnAsymptotics> {
    let fam = FamilyConfig::new(alpha)?;
    let beta = MapParam::new(fam.alpha())?;
    let ladder = preimage_ladder_constant(beta, n_max)?;
    let ns: Vec<usize> = (1..=n_max).collect();
    let a_n: Vec<f64> = ladder.values[1..].to_vec();
    let fit = fit_poly_log(&ns, &a_n, None, (n_max / 10, n_max))?;
    let c_alpha = ns
        .iter()
        .zip(&a_n)
        .map(|(&n, &a)| a * (n as f64).powf(1.0 / alpha))
        .fold(0.0f64, f64::max);
    Ok(AnAsymptotics { fit, c_alpha, ns, a_n })
}

/// Output of [`covering_time_scan`].
#[derive(Debug, Clone, Serialize)]
pub struct CoveringScan {
    /// (eps, steps) from the worst-case arc [0, 2 eps).
    pub worst: Vec<(f64, usize)>,
    /// (eps, steps) from the control arc around 1/3.
    pub control: Vec<(f64, usize)>,
    pub fit: FitResult,
    /// Calibration constant C_cov = max over eps of steps * eps^alpha.
    pub c_cov: f64,
}

const COVER_GUARD: usize = 10_000_000;

fn cover_time(seq: &MapSequence, mut arcs: ArcSet) -> Result<usize> {
    let mut steps = 0usize;
    while !arcs.is_full_circle() {
        steps += 1;
        if steps > COVER_GUARD {
            return Err(PmError::CoverGuard(COVER_GUARD));
        }
        arcs = push_arc(seq.beta(steps)?, &arcs)?;
    }
    Ok(steps)
}

/// Iterates arcs under the sequential dynamics until they cover the circle.
/// The worst case places the arc at the neutral fixed point; the control arc
/// sits around 1/3. The fitted exponent of steps against 1/eps should stay
/// near alpha.
pub fn covering_time_scan(
    family: FamilyConfig,
    seed: u64,
    policy: SequencePolicy,
    eps_list: &[f64],
) -> Result<CoveringScan> {
    for &eps in eps_list {
        if !(eps > 0.0 && eps < 0.125) {
            return Err(PmError::Domain(format!("eps = {eps} outside (0, 1/8)")));
        }
    }
    let alpha = family.alpha();
    // generous sequence length: cover times at the smallest eps are far below this
    let seq_len = 1_000_000usize;
    let seq = MapSequence::generate(family, seed, policy, seq_len)?;
    let mut worst = Vec::with_capacity(eps_list.len());
    let mut control = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let t_w = cover_time(&seq, ArcSet::from_arc(0.0, 2.0 * eps)?)?;
        let t_c = cover_time(&seq, ArcSet::from_arc(1.0 / 3.0 - eps, 1.0 / 3.0 + eps)?)?;
        worst.push((eps, t_w));
        control.push((eps, t_c));
    }
    // fit log(time) against log(1/eps)
    let inv_eps: Vec<usize> = worst.iter().map(|&(e, _)| (1.0 / e).round() as usize).collect();
    let times: Vec<f64> = worst.iter().map(|&(_, t)| t as f64).collect();
    let lo = *inv_eps.iter().min().unwrap();
    let hi = *inv_eps.iter().max().unwrap();
    let fit = fit_poly_log(&inv_eps, &times, None, (lo, hi))?;
    let c_cov = worst
        .iter()
        .map(|&(e, t)| t as f64 * e.powf(alpha))
        .fold(0.0f64, f64::max);
    Ok(CoveringScan { worst, control, fit, c_cov })
}

/// sup over a grid of point pairs a, b in J of |log (T_1^n)'(a) / (T_1^n)'(b)|,
/// reported per step; the derivative is the chain-rule product along the orbit.
pub fn distortion_scan(
    seq: &MapSequence,
    arc: (f64, f64),
    n: usize,
    grid_points: usize,
) -> Result<Vec<f64>> {
    if n > seq.len() {
        return Err(PmError::SequenceExhausted { needed: n, available: seq.len() });
    }
    let m = grid_points.max(1);
    let mut pts: Vec<f64> = (0..m)
        .map(|q| {
            if m == 1 {
                arc.0
            } else {
                arc.0 + (arc.1 - arc.0) * q as f64 / (m - 1) as f64
            }
        })
        .collect();
    let mut log_deriv = vec![0.0f64; m];
    let mut out = Vec::with_capacity(n);
    for step in 1..=n {
        let beta = seq.beta(step)?;
        for (x, s) in pts.iter_mut().zip(log_deriv.iter_mut()) {
            *s += eval_deriv(beta, *x)?.ln();
            let v = eval_map(beta, *x)?;
            *x = if v >= 1.0 { 0.0 } else { v };
        }
        let max = log_deriv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = log_deriv.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(max - min);
    }
    Ok(out)
}

/// The theorem's perturbation schedule eps(n) = n^(-1/alpha)
/// (kappa (1/alpha - 1) log n)^(1/alpha).
pub fn epsilon_schedule(n: usize, alpha: f64, kappa: f64) -> Result<f64> {
    if n < 3 {
        return Err(PmError::Domain(format!("epsilon schedule needs n >= 3, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) || kappa <= 0.0 {
        return Err(PmError::Domain("need 0 < alpha < 1 and kappa > 0".into()));
    }
    let inv = 1.0 / alpha;
    Ok((n as f64).powf(-inv) * (kappa * (inv - 1.0) * (n as f64).ln()).powf(inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GradedMesh;

    #[test]
    fn fit_recovers_pure_power_law() {
        let ns: Vec<usize> = (1..=200).collect();
        let vals: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(-1.0)).collect();
        let fit = fit_poly_log(&ns, &vals, None, (10, 200)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn fit_with_log_correction_exact_model() {
        let ns: Vec<usize> = (2..=500).collect();
        let vals: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let nf = n as f64;
                nf.powf(-1.0) * nf.ln().powi(2)
            })
            .collect();
        let fit = fit_poly_log(&ns, &vals, Some(2.0), (10, 500)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-10, "slope {}", fit.slope);
    }

    #[test]
    fn fit_recovers_intercept() {
        let ns: Vec<usize> = (1..=100).collect();
        let vals: Vec<f64> = ns.iter().map(|&n| 7.0 * (n as f64).powf(-1.5)).collect();
        let fit = fit_poly_log(&ns, &vals, None, (5, 100)).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-12);
        assert!((fit.intercept - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let ns = vec![1usize, 2, 3];
        let vals = vec![1.0, 0.5, 0.25];
        assert!(fit_poly_log(&ns, &vals, None, (1, 3)).is_err()); // < 5 points
        let ns: Vec<usize> = (1..=10).collect();
        let mut vals: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
        vals[5] = 0.0;
        assert!(fit_poly_log(&ns, &vals, None, (1, 10)).is_err()); // nonpositive
    }

    #[test]
    fn checkpoints_are_strictly_increasing_log_spaced() {
        let cps = geometric_checkpoints(1000);
        assert_eq!(cps[0], 1);
        assert_eq!(*cps.last().unwrap(), 1000);
        assert!(cps.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn epsilon_schedule_reference_value() {
        // alpha = 1/2, kappa = 1, n = e^2: e^{-4} * (2)^2
        let n = (std::f64::consts::E * std::f64::consts::E).round() as usize; // 7
        let v = epsilon_schedule(n, 0.5, 1.0).unwrap();
        let nf = n as f64;
        let expect = nf.powf(-2.0) * nf.ln().powf(2.0); // kappa (1/alpha - 1) = 1
        assert!((v - expect).abs() < 1e-15);
        // at the non-integer point n = e^2 the formula gives 4 e^{-4}
        let exact = (-4f64).exp() * 4.0;
        assert!((exact - 0.0732626).abs() < 1e-6);
        assert!(epsilon_schedule(2, 0.5, 1.0).is_err());
    }

    #[test]
    fn epsilon_schedule_monotone_in_alpha() {
        // Monotonicity in alpha holds once (1/alpha - 1) log n is large; at
        // small n the log factor can invert the order for alpha near 1.
        let n = 1_000_000;
        let mut prev = 0.0;
        for &alpha in &[0.3, 0.5, 0.7, 0.9] {
            let v = epsilon_schedule(n, alpha, 1.0).unwrap();
            assert!(v > prev, "schedule not increasing in alpha at {alpha}");
            prev = v;
        }
    }

    #[test]
    fn epsilon_schedule_algebraic_identity() {
        let alpha = 0.5f64;
        let kappa = 1.3f64;
        let expect = (kappa * (1.0 / alpha - 1.0)).powf(1.0 / alpha);
        for &n in &[100usize, 1000, 10000] {
            let nf = n as f64;
            let v = epsilon_schedule(n, alpha, kappa).unwrap();
            let scaled = v * nf.powf(1.0 / alpha) / nf.ln().powf(1.0 / alpha);
            assert!((scaled - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn an_asymptotics_slope_half() {
        let res = an_asymptotics(0.5, 2000).unwrap();
        assert!((res.fit.slope + 2.0).abs() < 0.1, "slope {}", res.fit.slope);
        assert!(res.c_alpha > 0.0);
    }

    #[test]
    fn beta_zero_ladder_is_geometric_not_polynomial() {
        let beta = MapParam::new(0.0).unwrap();
        let ladder = preimage_ladder_constant(beta, 50).unwrap();
        for (n, w) in ladder.values.windows(2).enumerate() {
            let ratio = w[1] / w[0];
            // each rung is a Newton root at 1e-14, so relative error compounds
            assert!((ratio - 2.0 / 3.0).abs() < 1e-9, "step {n}: ratio {ratio}");
        }
    }

    #[test]
    fn covering_time_beta_zero_upper_bound() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let eps_list: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
        let scan = covering_time_scan(fam, 0, SequencePolicy::Constant { beta: 0.0 }, &eps_list)
            .unwrap();
        for &(eps, t) in &scan.worst {
            // T_0 expands every arc by exactly 3/2 per step until it covers
            let bound = ((1.0 / (2.0 * eps)).ln() / 1.5f64.ln()).ceil() as usize + 2;
            assert!(t <= bound, "eps = {eps}: {t} > {bound}");
        }
    }

    #[test]
    fn covering_control_never_slower_than_worst() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let eps: Vec<f64> = (4..=8).map(|k| 2f64.powi(-k)).collect();
        let scan = covering_time_scan(
            fam,
            5,
            SequencePolicy::UniformRandom { beta_min: 0.0 },
            &eps,
        )
        .unwrap();
        for (w, c) in scan.worst.iter().zip(&scan.control) {
            assert!(c.1 <= w.1, "eps = {}: control {} > worst {}", w.0, c.1, w.1);
        }
        assert!(scan.c_cov > 0.0);
    }

    #[test]
    fn distortion_degenerate_and_affine_cases() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let seq = MapSequence::generate(
            fam,
            9,
            SequencePolicy::UniformRandom { beta_min: 0.0 },
            20,
        )
        .unwrap();
        // single point: zero distortion
        let d = distortion_scan(&seq, (0.4, 0.4), 20, 1).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));

        // piecewise-affine maps: zero as long as the orbit stays in one branch
        let zseq = MapSequence::constant(fam, 0.0, 12).unwrap();
        let d = distortion_scan(&zseq, (0.70, 0.705), 1, 16).unwrap();
        assert!(d[0].abs() < 1e-14);
    }

    #[test]
    fn distortion_finite_and_monotone_before_branch_crossing() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let seq = MapSequence::generate(
            fam,
            2,
            SequencePolicy::UniformRandom { beta_min: 0.0 },
            20,
        )
        .unwrap();
        let d = distortion_scan(&seq, (0.7, 0.72), 20, 32).unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(d[0] >= 0.0);
    }

    #[test]
    fn memory_loss_identical_inputs_zero() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let mesh = GradedMesh::with_cells(fam, 1 << 10).unwrap();
        let cone = ConeParams::with_a_min(0.5).unwrap();
        let seq = MapSequence::constant(fam, 0.5, 30).unwrap();
        let f = ConeDensity::power_law(mesh, 0.25).unwrap();
        let run = memory_loss_experiment(
            &seq,
            &f,
            &f,
            &cone,
            30,
            &geometric_checkpoints(30),
            true,
        )
        .unwrap();
        assert!(run.series.values.iter().all(|&v| v == 0.0));
        assert!(run.fit.is_none());
    }

    #[test]
    fn memory_loss_rejects_mass_mismatch() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let mesh = GradedMesh::with_cells(fam, 1 << 10).unwrap();
        let cone = ConeParams::with_a_min(0.5).unwrap();
        let seq = MapSequence::constant(fam, 0.5, 10).unwrap();
        let one = ConeDensity::constant(mesh.clone(), 1.0);
        let two = ConeDensity::constant(mesh, 2.0);
        assert!(memory_loss_experiment(
            &seq,
            &one,
            &two,
            &cone,
            10,
            &geometric_checkpoints(10),
            false
        )
        .is_err());
    }

    #[test]
    fn memory_loss_t0_decays_fast_and_monotonically() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let mesh = GradedMesh::with_cells(fam, 1 << 12).unwrap();
        let cone = ConeParams::with_a_min(0.5).unwrap();
        let n_max = 60;
        let seq = MapSequence::constant(fam, 0.0, n_max).unwrap();
        let phi = ConeDensity::constant(mesh.clone(), 1.0);
        let psi = ConeDensity::power_law(mesh, 0.25).unwrap();
        let psi = psi.scaled(1.0 / psi.mass());
        let cps = geometric_checkpoints(n_max);
        let run =
            memory_loss_experiment(&seq, &phi, &psi, &cone, n_max, &cps, false).unwrap();
        let v = &run.series.values;
        for w in v.windows(2) {
            assert!(w[1] <= w[0] + 1e-7, "D_n increased: {} -> {}", w[0], w[1]);
        }
        // uniformly expanding: decays below the polynomial envelope
        for (&n, &d) in run.series.ns.iter().zip(v).filter(|(&n, _)| n >= 10) {
            let nf = n as f64;
            let envelope = v[0] * nf.powf(-1.0) * nf.ln().powf(2.0);
            assert!(d <= envelope, "n = {n}: {d} above envelope {envelope}");
        }
    }

    #[test]
    fn correlation_constant_observable_vanishes() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let mesh = GradedMesh::with_cells(fam, 1 << 10).unwrap();
        let seq = MapSequence::constant(fam, 0.4, 20).unwrap();
        let psi = ConeDensity::power_law(mesh, 0.25).unwrap();
        let phi = C1Observable::new(|_| 1.0, 1.0, 0.0).unwrap();
        let run =
            correlation_experiment(&seq, &psi, &phi, 20, &geometric_checkpoints(20), 1 << 12)
                .unwrap();
        assert!(run.series.values.iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn correlation_lebesgue_invariant_case_vanishes() {
        let fam = FamilyConfig::new(0.5).unwrap();
        let mesh = GradedMesh::with_cells(fam, 1 << 10).unwrap();
        let seq = MapSequence::constant(fam, 0.0, 16).unwrap();
        let psi = ConeDensity::constant(mesh, 1.0);
        let phi =
            C1Observable::new(|x| (2.0 * std::f64::consts::PI * x).cos(), 1.0, 6.2832).unwrap();
        let run =
            correlation_experiment(&seq, &psi, &phi, 16, &geometric_checkpoints(16), 1 << 14)
                .unwrap();
        // psi = 1 is T_0-invariant: correlation is pure quadrature noise
        assert!(run.series.values.iter().all(|&v| v < 1e-3), "{:?}", run.series.values);
    }
}
