//! Empirical verification machinery: convergence-order fits, contraction
//! rates, moment-growth checks, and the mean-error surrogate.
//!
//! The order estimators couple each discrete update to a reference
//! solution on the same Brownian path, so the one-step gap is measurable
//! at modest replica counts. All Monte Carlo paths run under the
//! sampler's counter-based noise contract and deterministic reductions,
//! making every estimate reproducible bit-for-bit.

use crate::error::{Error, Result};
use crate::potentials::{PotentialModel, QuadraticSpec};
use crate::sampler::{
    coarse_xi, lmc_step, reference_solution, run_coupled_pair, ChainConfig, NoiseStream,
    StartDist, REPLICA_BLOCK,
};
use rayon::prelude::*;

/// Least-squares line through transformed points, with its goodness of fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// The transformed points the line was fitted to.
    pub points: Vec<(f64, f64)>,
}

fn ols(points: Vec<(f64, f64)>) -> Result<OrderFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points to fit".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(OrderFit { slope, intercept, r2, points })
}

/// Ordinary least squares on (log x, log y); the slope is the power-law
/// exponent.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<OrderFit> {
    check_paired(xs, ys)?;
    let mut points = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(Error::InvalidArgument(
                "log-log fit needs strictly positive data".into(),
            ));
        }
        points.push((x.ln(), y.ln()));
    }
    ols(points)
}

/// Ordinary least squares on (x, log y); the slope is the exponential rate.
pub fn fit_semilog(xs: &[f64], ys: &[f64]) -> Result<OrderFit> {
    check_paired(xs, ys)?;
    let mut points = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if !x.is_finite() || !(y > 0.0) {
            return Err(Error::InvalidArgument(
                "semilog fit needs finite x and positive y".into(),
            ));
        }
        points.push((x, y.ln()));
    }
    ols(points)
}

fn check_paired(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument("x and y lengths differ".into()));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points to fit".into()));
    }
    Ok(())
}

/// Largest step certified by the error analysis: 1/(4 kappa L) = m/(4 L^2).
pub fn admissible_step(p: &PotentialModel) -> f64 {
    1.0 / (4.0 * p.kappa() * p.l())
}

fn check_h_grid(p: &PotentialModel, h_grid: &[f64]) -> Result<()> {
    if h_grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "order fits need at least two step sizes".into(),
        ));
    }
    let lim = admissible_step(p);
    for &h in h_grid {
        if !(h > 0.0) || h > lim * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "step {h} outside the certified range (0, {lim}]"
            )));
        }
    }
    Ok(())
}

/// One coupled (chain step, reference solution) pair per replica; the
/// closure folds each pair's difference vector into the accumulator.
fn coupled_pair_scan<T, F>(
    p: &PotentialModel,
    start: &StartDist,
    h: f64,
    replicas: usize,
    substeps: usize,
    seed: u64,
    zero: impl Fn() -> T + Sync,
    fold: F,
    merge: impl Fn(&mut T, &T) + Sync,
) -> Result<T>
where
    T: Clone + Send,
    F: Fn(&mut T, &[f64]) + Sync,
{
    let d = p.d();
    let stream = NoiseStream::new(seed, d);
    let nblocks = replicas.div_ceil(REPLICA_BLOCK);
    let blocks: Vec<Result<T>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = zero();
            let mut x = vec![0.0; d];
            let mut inc = vec![0.0; substeps * d];
            let mut diff = vec![0.0; d];
            let lo = b * REPLICA_BLOCK;
            for r in lo..replicas.min(lo + REPLICA_BLOCK) {
                let rep = r as u64;
                start.sample(p, &mut stream.init_rng(rep), &mut x)?;
                crate::sampler::fill_brownian_increments(
                    &mut stream.rng(rep, 1),
                    h,
                    substeps,
                    &mut inc,
                );
                let fine = reference_solution(p, &x, h, &inc)?;
                let xi = coarse_xi(&inc, d, h);
                let coarse = lmc_step(&x, p, h, &xi)?;
                for i in 0..d {
                    diff[i] = coarse[i] - fine[i];
                }
                fold(&mut acc, &diff);
            }
            Ok(acc)
        })
        .collect();
    let mut done = Vec::with_capacity(nblocks);
    for b in blocks {
        done.push(b?);
    }
    let mut out = zero();
    if let Some(total) = tree_merge(done, &merge) {
        merge(&mut out, &total);
    }
    Ok(out)
}

fn tree_merge<T, F: Fn(&mut T, &T)>(mut v: Vec<T>, merge: &F) -> Option<T> {
    while v.len() > 1 {
        let mut next = Vec::with_capacity(v.len().div_ceil(2));
        let mut it = v.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                merge(&mut a, &b);
            }
            next.push(a);
        }
        v = next;
    }
    v.pop()
}

/// Root-mean-square one-step gap between the chain update and the coupled
/// reference solution, fitted against the step size. The expected slope is
/// the local strong order 3/2.
pub fn local_strong_order(
    p: &PotentialModel,
    start: &StartDist,
    h_grid: &[f64],
    replicas: usize,
    substeps: usize,
    seed: u64,
) -> Result<OrderFit> {
    check_h_grid(p, h_grid)?;
    if replicas == 0 || substeps == 0 {
        return Err(Error::InvalidArgument("need replicas >= 1 and substeps >= 1".into()));
    }
    let mut errs = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let sum = coupled_pair_scan(
            p,
            start,
            h,
            replicas,
            substeps,
            seed,
            || 0.0f64,
            |acc, diff| *acc += diff.iter().map(|v| v * v).sum::<f64>(),
            |a, b| *a += *b,
        )?;
        errs.push((sum / replicas as f64).sqrt());
    }
    fit_loglog(h_grid, &errs)
}

/// Norm of the mean one-step gap over coupled pairs, fitted against the
/// step size. Common random numbers cancel the noise, leaving the local
/// weak error; the expected slope is 2.
pub fn local_weak_order(
    p: &PotentialModel,
    start: &StartDist,
    h_grid: &[f64],
    replicas: usize,
    substeps: usize,
    seed: u64,
) -> Result<OrderFit> {
    check_h_grid(p, h_grid)?;
    if replicas == 0 || substeps == 0 {
        return Err(Error::InvalidArgument("need replicas >= 1 and substeps >= 1".into()));
    }
    let d = p.d();
    let mut errs = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let sums = coupled_pair_scan(
            p,
            start,
            h,
            replicas,
            substeps,
            seed,
            || vec![0.0f64; d],
            |acc, diff| {
                for i in 0..d {
                    acc[i] += diff[i];
                }
            },
            |a, b| {
                for i in 0..d {
                    a[i] += b[i];
                }
            },
        )?;
        let m = replicas as f64;
        errs.push(sums.iter().map(|s| (s / m) * (s / m)).sum::<f64>().sqrt());
    }
    fit_loglog(h_grid, &errs)
}

/// Exact one-step weak error of the chain on a quadratic target from a
/// fixed start: per coordinate the mean factors are 1 - lam h for the
/// chain and e^{-lam h} for the diffusion.
pub fn weak_error_curve_quadratic(
    q: &QuadraticSpec,
    x0: &[f64],
    h_grid: &[f64],
) -> Result<Vec<f64>> {
    if x0.len() != q.d() {
        return Err(Error::InvalidArgument(format!(
            "start must have dimension {}",
            q.d()
        )));
    }
    let limit = 2.0 / q.max_curvature();
    h_grid
        .iter()
        .map(|&h| {
            if !(h > 0.0) || h >= limit {
                return Err(Error::Unstable { h, limit });
            }
            let sq: f64 = q
                .curvatures()
                .iter()
                .zip(x0)
                .map(|(&lam, &x)| {
                    let gap = (1.0 - lam * h) - (-lam * h).exp();
                    gap * gap * x * x
                })
                .sum();
            Ok(sq.sqrt())
        })
        .collect()
}

/// Outcome of a contraction-rate fit.
#[derive(Debug, Clone, PartialEq)]
pub enum ContractionEstimate {
    /// The starts coincide; there is no distance to fit.
    ZeroDistance,
    Estimate {
        /// Exponential decay rate of the coupled distance (positive means
        /// contraction).
        rate: f64,
        fit: OrderFit,
    },
}

fn fit_decay(ts: &[f64], rms: &[f64]) -> Result<ContractionEstimate> {
    if rms.first() == Some(&0.0) {
        return Ok(ContractionEstimate::ZeroDistance);
    }
    // Log of numerical zero corrupts the regression; cut the window at the
    // first underflowed distance.
    let cut = rms.iter().position(|&v| v < 1e-12).unwrap_or(rms.len());
    if cut < 2 {
        return Err(Error::InvalidArgument(
            "distance underflows too early to fit a rate".into(),
        ));
    }
    let fit = fit_semilog(&ts[..cut], &rms[..cut])?;
    Ok(ContractionEstimate::Estimate { rate: -fit.slope, fit })
}

/// Rate of decay of the coupled-chain distance: runs a coupled pair from
/// the two starts and fits log RMS distance against elapsed time.
pub fn contraction_rate(
    p: &PotentialModel,
    cfg: &ChainConfig,
    x0: &[f64],
    y0: &[f64],
) -> Result<ContractionEstimate> {
    let lim = admissible_step(p);
    if cfg.h > lim * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "contraction fits need h <= {lim}"
        )));
    }
    if cfg.steps < 1 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let run = run_coupled_pair(p, cfg, x0, y0)?;
    let rms = run.rms();
    let ts: Vec<f64> = (0..rms.len()).map(|k| k as f64 * cfg.h).collect();
    fit_decay(&ts, &rms)
}

/// Same fit on the exact coupled diffusion distance for a quadratic
/// target, where the difference decays deterministically coordinate-wise
/// at rate lam.
pub fn contraction_rate_exact(
    q: &QuadraticSpec,
    x0: &[f64],
    y0: &[f64],
    ts: &[f64],
) -> Result<ContractionEstimate> {
    if x0.len() != q.d() || y0.len() != q.d() {
        return Err(Error::InvalidArgument(format!(
            "both starts must have dimension {}",
            q.d()
        )));
    }
    if ts.len() < 2 || ts.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidArgument(
            "need at least two nonnegative times".into(),
        ));
    }
    let rms: Vec<f64> = ts
        .iter()
        .map(|&t| {
            q.curvatures()
                .iter()
                .zip(x0.iter().zip(y0))
                .map(|(&lam, (&a, &b))| {
                    let diff = (a - b) * (-lam * t).exp();
                    diff * diff
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    fit_decay(ts, &rms)
}

/// Norm of the gap between the replica average and the target mean; a
/// lower bound on the transport distance.
pub fn mean_error_surrogate(states: &[Vec<f64>], mu_mean: &[f64]) -> f64 {
    assert!(!states.is_empty(), "surrogate needs at least one state");
    let d = mu_mean.len();
    let mut mean = vec![0.0; d];
    for s in states {
        assert_eq!(s.len(), d, "state dimension mismatch");
        for i in 0..d {
            mean[i] += s[i];
        }
    }
    let m = states.len() as f64;
    for v in mean.iter_mut() {
        *v /= m;
    }
    mean_error_from_mean(&mean, mu_mean)
}

/// The same surrogate evaluated from an already-computed replica mean.
pub fn mean_error_from_mean(mean: &[f64], mu_mean: &[f64]) -> f64 {
    assert_eq!(mean.len(), mu_mean.len(), "dimension mismatch");
    mean.iter()
        .zip(mu_mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// One row of a convergence sweep: summary statistics of the mean-error
/// surrogate over a saturation window of recorded iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    /// Swept quantity for this row (a dimension or a step size).
    pub axis_value: f64,
    pub error_mean: f64,
    /// Sample standard deviation over the window (0 for a single sample).
    pub error_std: f64,
    pub n_samples: usize,
    pub window_lo: u64,
    pub window_hi: u64,
}

impl SweepRecord {
    /// Summarises the surrogate values recorded over one window.
    pub fn from_window(
        axis_value: f64,
        values: &[f64],
        window_lo: u64,
        window_hi: u64,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty sweep window".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite surrogate value in sweep window".into(),
            ));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            axis_value,
            error_mean: mean,
            error_std: std,
            n_samples: n,
            window_lo,
            window_hi,
        })
    }
}

/// One side-by-side evaluation of a proven moment inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl MomentCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

pub fn all_hold(checks: &[MomentCheck]) -> bool {
    checks.iter().all(MomentCheck::holds)
}

fn check_quadratic_grid(q: &QuadraticSpec, h_grid: &[f64]) -> Result<f64> {
    let m = q.min_curvature();
    let l = q.max_curvature();
    let lim = m / (4.0 * l * l);
    for &h in h_grid {
        if !(h > 0.0) || h > lim * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "step {h} outside the certified range (0, {lim}]"
            )));
        }
    }
    Ok(m)
}

fn start_coord_seconds(q: &QuadraticSpec, start: &StartDist) -> Result<Vec<f64>> {
    match start {
        StartDist::Point(x0) => {
            if x0.len() != q.d() {
                return Err(Error::InvalidArgument(format!(
                    "start must have dimension {}",
                    q.d()
                )));
            }
            Ok(x0.iter().map(|v| v * v).collect())
        }
        StartDist::StandardNormal => Ok(vec![1.0; q.d()]),
        StartDist::Stationary => Ok(q.curvatures().iter().map(|lam| 1.0 / lam).collect()),
    }
}

/// Exact check of the diffusion growth bound
/// E|x_h - x|^2 <= 6 (d + (m/2) E|x|^2) h on a quadratic target: the left
/// side is evaluated from the Ornstein-Uhlenbeck transition moments,
/// coordinate-wise (e^{-lam h} - 1)^2 E x_i^2 + (1 - e^{-2 lam h})/lam.
pub fn growth_bound_check(
    q: &QuadraticSpec,
    start: &StartDist,
    h_grid: &[f64],
) -> Result<Vec<MomentCheck>> {
    let m = check_quadratic_grid(q, h_grid)?;
    let seconds = start_coord_seconds(q, start)?;
    let exsq: f64 = seconds.iter().sum();
    let d = q.d() as f64;
    Ok(h_grid
        .iter()
        .map(|&h| {
            let lhs: f64 = q
                .curvatures()
                .iter()
                .zip(&seconds)
                .map(|(&lam, &sx)| {
                    let decay_gap = (-lam * h).exp() - 1.0;
                    decay_gap * decay_gap * sx + (-(-2.0 * lam * h).exp_m1()) / lam
                })
                .sum();
            let rhs = 6.0 * (d + 0.5 * m * exsq) * h;
            MomentCheck { h, lhs, rhs }
        })
        .collect())
}

/// Exact check of the evolved-deviation bound E|z|^2 <= (m/4) E|x-y|^2 h,
/// where z is the drift-induced part of the coupled gap after time h:
/// z_i = (e^{-lam_i h} - 1)(x_i - y_i), averaged over the given pairs.
pub fn evolved_deviation_check(
    q: &QuadraticSpec,
    pairs: &[(Vec<f64>, Vec<f64>)],
    h_grid: &[f64],
) -> Result<Vec<MomentCheck>> {
    let m = check_quadratic_grid(q, h_grid)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    for (x, y) in pairs {
        if x.len() != q.d() || y.len() != q.d() {
            return Err(Error::InvalidArgument(format!(
                "pairs must have dimension {}",
                q.d()
            )));
        }
    }
    let n = pairs.len() as f64;
    let mean_sq: f64 = pairs
        .iter()
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    Ok(h_grid
        .iter()
        .map(|&h| {
            let lhs: f64 = pairs
                .iter()
                .map(|(x, y)| {
                    q.curvatures()
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(&lam, (&a, &b))| {
                            let z = ((-lam * h).exp() - 1.0) * (a - b);
                            z * z
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
                / n;
            MomentCheck { h, lhs, rhs: 0.25 * m * mean_sq * h }
        })
        .collect())
}
