//! Discrete Langevin chains under a counter-based randomness contract.
//!
//! Every Gaussian draw is addressed by a (seed, replica, step) triple, so a
//! run's output is a pure function of its configuration: replicas can be
//! executed on any number of workers, in any order, and the accumulated
//! moments come out bit-identical. Besides the plain chain driver the
//! module provides coupled chain pairs sharing their noise and a
//! high-accuracy reference solution of the underlying diffusion over a
//! single coarse step, for local-error measurements.

use crate::error::{Error, Result};
use crate::potentials::PotentialModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Replicas per sequential work unit. Accumulation inside a block is in
/// replica order and blocks merge in a fixed pairwise tree, so results do
/// not depend on how blocks are scheduled across workers.
pub const REPLICA_BLOCK: usize = 64;

/// Step index reserved for start-distribution draws.
const INIT_STEP: u64 = u64::MAX;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Derives a statistically unrelated seed for an auxiliary experiment
/// (pilot runs, constant estimation) so it never shares noise cells with
/// the main run.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(mix64(seed ^ 0xA076_1D64_78BD_642F) ^ tag)
}

/// Counter-based Gaussian noise: (seed, replica, step) keys an independent
/// stream. Identical triples give identical vectors regardless of
/// execution order; distinct triples give independent draws.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    d: usize,
}

impl NoiseStream {
    pub fn new(seed: u64, d: usize) -> Self {
        Self { seed, d }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn key(&self, replica: u64, step: u64) -> [u8; 32] {
        // Two mixing lanes chain the counters in opposite orders; a key
        // collision would need both lanes to collide at once.
        let w0 = mix64(mix64(self.seed ^ 0x8E9D_5AAD_C54B_6AEB).wrapping_add(replica));
        let w1 = mix64(w0 ^ step);
        let w2 = mix64(mix64(self.seed ^ 0xD6E8_FEB8_6659_FD93).wrapping_add(step));
        let w3 = mix64(w2 ^ replica);
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&w0.to_le_bytes());
        key[8..16].copy_from_slice(&w1.to_le_bytes());
        key[16..24].copy_from_slice(&w2.to_le_bytes());
        key[24..].copy_from_slice(&w3.to_le_bytes());
        key
    }

    /// Generator for one (replica, step) cell.
    pub fn rng(&self, replica: u64, step: u64) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key(replica, step))
    }

    /// Generator for a replica's start draw; lives outside the step range.
    pub fn init_rng(&self, replica: u64) -> ChaCha8Rng {
        self.rng(replica, INIT_STEP)
    }

    /// The standard Gaussian vector driving `replica` at `step`.
    pub fn fill_xi(&self, replica: u64, step: u64, out: &mut [f64]) {
        let mut rng = self.rng(replica, step);
        fill_standard_normal(&mut rng, out);
    }

    pub fn xi(&self, replica: u64, step: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.fill_xi(replica, step, &mut out);
        out
    }
}

/// Where chains start.
#[derive(Debug, Clone, PartialEq)]
pub enum StartDist {
    /// Every replica starts at this fixed point.
    Point(Vec<f64>),
    /// Independent standard Gaussian starts.
    StandardNormal,
    /// The target law itself; only quadratic targets have it in closed form.
    Stationary,
}

impl StartDist {
    pub fn sample<R: Rng + ?Sized>(
        &self,
        p: &PotentialModel,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            StartDist::Point(x0) => {
                if x0.len() != out.len() {
                    return Err(Error::InvalidArgument(format!(
                        "start point has dimension {}, expected {}",
                        x0.len(),
                        out.len()
                    )));
                }
                out.copy_from_slice(x0);
            }
            StartDist::StandardNormal => fill_standard_normal(rng, out),
            StartDist::Stationary => {
                let q = p.quadratic().ok_or_else(|| {
                    Error::InvalidArgument(
                        "stationary start needs a quadratic target".into(),
                    )
                })?;
                fill_standard_normal(rng, out);
                for (v, lam) in out.iter_mut().zip(q.curvatures()) {
                    *v /= lam.sqrt();
                }
            }
        }
        Ok(())
    }

    /// E|x0|^2 of the start law.
    pub fn second_moment(&self, p: &PotentialModel) -> Result<f64> {
        match self {
            StartDist::Point(x0) => Ok(x0.iter().map(|v| v * v).sum()),
            StartDist::StandardNormal => Ok(p.d() as f64),
            StartDist::Stationary => {
                let q = p.quadratic().ok_or_else(|| {
                    Error::InvalidArgument(
                        "stationary start needs a quadratic target".into(),
                    )
                })?;
                Ok(q.curvatures().iter().map(|lam| 1.0 / lam).sum())
            }
        }
    }
}

/// One chain experiment: step size, horizon, replica count, master seed,
/// and the start law shared by all replicas.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub h: f64,
    pub steps: u64,
    pub replicas: usize,
    pub seed: u64,
    pub start: StartDist,
}

impl ChainConfig {
    /// Checks step size, replica count, and quadratic stability; leaves the
    /// start law to `validate` since coupled runs ignore it.
    pub fn validate_core(&self, p: &PotentialModel) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidArgument(
                "step size must be positive and finite".into(),
            ));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidArgument("need at least one replica".into()));
        }
        if let Some(q) = p.quadratic() {
            let limit = 2.0 / q.max_curvature();
            if self.h >= limit {
                return Err(Error::Unstable { h: self.h, limit });
            }
        }
        Ok(())
    }

    pub fn validate(&self, p: &PotentialModel) -> Result<()> {
        self.validate_core(p)?;
        match &self.start {
            StartDist::Point(x0) if x0.len() != p.d() => Err(Error::InvalidArgument(format!(
                "start point has dimension {}, expected {}",
                x0.len(),
                p.d()
            ))),
            StartDist::Stationary if p.quadratic().is_none() => Err(Error::InvalidArgument(
                "stationary start needs a quadratic target".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// x - h grad f(x) + sqrt(2h) xi, with a finiteness check on the result.
///
/// Standalone calls report replica 0, step 0 on divergence; the chain
/// drivers attach real indices.
pub fn lmc_step(x: &[f64], p: &PotentialModel, h: f64, xi: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.d() || xi.len() != p.d() {
        return Err(Error::InvalidArgument(format!(
            "state and noise must have dimension {}",
            p.d()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(
            "step size must be positive and finite".into(),
        ));
    }
    let mut grad = vec![0.0; x.len()];
    let mut out = x.to_vec();
    if !step_in_place(p, h, (2.0 * h).sqrt(), &mut out, &mut grad, xi) {
        return Err(Error::Diverged { replica: 0, step: 0 });
    }
    Ok(out)
}

/// Advances x by one update in place; false means a non-finite state.
fn step_in_place(
    p: &PotentialModel,
    h: f64,
    noise_scale: f64,
    x: &mut [f64],
    grad: &mut [f64],
    xi: &[f64],
) -> bool {
    p.gradient_into(x, grad);
    let mut probe = 0.0;
    for i in 0..x.len() {
        x[i] = x[i] - h * grad[i] + noise_scale * xi[i];
        probe += x[i];
    }
    probe.is_finite()
}

/// Empirical replica moments at one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMoments {
    pub step: u64,
    pub replicas: usize,
    /// Per-coordinate empirical mean.
    pub mean: Vec<f64>,
    /// Per-coordinate empirical second moment E x_i^2.
    pub coord_second: Vec<f64>,
    /// Empirical fourth-moment scalar E (|x|^2)^2, for the error bar of the
    /// second moment.
    pub norm4: f64,
}

impl StepMoments {
    /// E |x|^2.
    pub fn second_moment(&self) -> f64 {
        self.coord_second.iter().sum()
    }

    /// Standard error of the empirical E |x|^2.
    pub fn second_moment_se(&self) -> f64 {
        let s = self.second_moment();
        ((self.norm4 - s * s).max(0.0) / self.replicas as f64).sqrt()
    }

    /// Per-coordinate empirical variance.
    pub fn variance(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.coord_second)
            .map(|(m, s)| (s - m * m).max(0.0))
            .collect()
    }

    /// Per-coordinate standard error of the empirical mean.
    pub fn mean_se(&self) -> Vec<f64> {
        let m = self.replicas as f64;
        self.variance().iter().map(|v| (v / m).sqrt()).collect()
    }
}

/// Moments at every requested step, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub records: Vec<StepMoments>,
}

impl ChainRun {
    pub fn at_step(&self, step: u64) -> Option<&StepMoments> {
        self.records.iter().find(|r| r.step == step)
    }
}

#[derive(Clone)]
struct MomentSums {
    sum_x: Vec<f64>,
    sum_xsq: Vec<f64>,
    sum_ssq: f64,
}

impl MomentSums {
    fn zero(d: usize) -> Self {
        Self { sum_x: vec![0.0; d], sum_xsq: vec![0.0; d], sum_ssq: 0.0 }
    }

    fn add_state(&mut self, x: &[f64]) {
        let mut s = 0.0;
        for (i, &v) in x.iter().enumerate() {
            self.sum_x[i] += v;
            let vv = v * v;
            self.sum_xsq[i] += vv;
            s += vv;
        }
        self.sum_ssq += s * s;
    }

    fn merge(&mut self, other: &MomentSums) {
        for i in 0..self.sum_x.len() {
            self.sum_x[i] += other.sum_x[i];
            self.sum_xsq[i] += other.sum_xsq[i];
        }
        self.sum_ssq += other.sum_ssq;
    }
}

/// Adjacent pairs merge level by level, so the summation tree depends only
/// on the block count, never on scheduling.
fn tree_merge<T, F: Fn(&mut T, &T)>(mut v: Vec<T>, merge: F) -> Option<T> {
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

fn block_range(block: usize, replicas: usize) -> std::ops::Range<usize> {
    let lo = block * REPLICA_BLOCK;
    lo..replicas.min(lo + REPLICA_BLOCK)
}

/// Runs `cfg.replicas` independent chains for `cfg.steps` updates and
/// returns empirical moments at each step listed in `record` (deduplicated,
/// ascending; step 0 is the start law). Output is bit-identical across
/// reruns and worker counts. The first diverging replica, in replica
/// order, aborts the run with its index and step.
pub fn run_chains(p: &PotentialModel, cfg: &ChainConfig, record: &[u64]) -> Result<ChainRun> {
    cfg.validate(p)?;
    let mut recs: Vec<u64> = record.to_vec();
    recs.sort_unstable();
    recs.dedup();
    if let Some(&last) = recs.last() {
        if last > cfg.steps {
            return Err(Error::InvalidArgument(format!(
                "recorded step {last} lies beyond the horizon {}",
                cfg.steps
            )));
        }
    }
    let d = p.d();
    let stream = NoiseStream::new(cfg.seed, d);
    let nblocks = cfg.replicas.div_ceil(REPLICA_BLOCK);
    let noise_scale = (2.0 * cfg.h).sqrt();

    let blocks: Vec<Result<Vec<MomentSums>>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut acc: Vec<MomentSums> = recs.iter().map(|_| MomentSums::zero(d)).collect();
            let mut x = vec![0.0; d];
            let mut grad = vec![0.0; d];
            let mut xi = vec![0.0; d];
            for r in block_range(b, cfg.replicas) {
                let rep = r as u64;
                cfg.start.sample(p, &mut stream.init_rng(rep), &mut x)?;
                let mut ri = 0;
                if recs.first() == Some(&0) {
                    acc[0].add_state(&x);
                    ri = 1;
                }
                for k in 1..=cfg.steps {
                    stream.fill_xi(rep, k, &mut xi);
                    if !step_in_place(p, cfg.h, noise_scale, &mut x, &mut grad, &xi) {
                        return Err(Error::Diverged { replica: rep, step: k });
                    }
                    if ri < recs.len() && recs[ri] == k {
                        acc[ri].add_state(&x);
                        ri += 1;
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut done = Vec::with_capacity(nblocks);
    for b in blocks {
        done.push(b?);
    }
    let total = tree_merge(done, |a, b| {
        for (ai, bi) in a.iter_mut().zip(b) {
            ai.merge(bi);
        }
    })
    .unwrap_or_default();

    let m = cfg.replicas as f64;
    let records = recs
        .iter()
        .zip(total)
        .map(|(&step, sums)| StepMoments {
            step,
            replicas: cfg.replicas,
            mean: sums.sum_x.iter().map(|v| v / m).collect(),
            coord_second: sums.sum_xsq.iter().map(|v| v / m).collect(),
            norm4: sums.sum_ssq / m,
        })
        .collect();
    Ok(ChainRun { records })
}

/// Mean squared distance between two chains driven by identical noise, at
/// every step from 0 to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub mean_sq_dist: Vec<f64>,
    pub replicas: usize,
}

impl CoupledRun {
    /// Root-mean-square distance trajectory.
    pub fn rms(&self) -> Vec<f64> {
        self.mean_sq_dist.iter().map(|v| v.sqrt()).collect()
    }
}

/// Advances replica pairs (x, y) from the two fixed starts, feeding both
/// chains of a pair the same noise, and records E|x_k - y_k|^2 per step.
/// cfg.start is ignored; the starts are the explicit arguments.
pub fn run_coupled_pair(
    p: &PotentialModel,
    cfg: &ChainConfig,
    x0: &[f64],
    y0: &[f64],
) -> Result<CoupledRun> {
    cfg.validate_core(p)?;
    let d = p.d();
    if x0.len() != d || y0.len() != d {
        return Err(Error::InvalidArgument(format!(
            "both starts must have dimension {d}"
        )));
    }
    let stream = NoiseStream::new(cfg.seed, d);
    let nblocks = cfg.replicas.div_ceil(REPLICA_BLOCK);
    let noise_scale = (2.0 * cfg.h).sqrt();
    let nsteps = cfg.steps as usize;

    let blocks: Vec<Result<Vec<f64>>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; nsteps + 1];
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut grad = vec![0.0; d];
            let mut xi = vec![0.0; d];
            for r in block_range(b, cfg.replicas) {
                let rep = r as u64;
                x.copy_from_slice(x0);
                y.copy_from_slice(y0);
                acc[0] += sq_dist(&x, &y);
                for k in 1..=cfg.steps {
                    stream.fill_xi(rep, k, &mut xi);
                    let ok_x = step_in_place(p, cfg.h, noise_scale, &mut x, &mut grad, &xi);
                    let ok_y = step_in_place(p, cfg.h, noise_scale, &mut y, &mut grad, &xi);
                    if !ok_x || !ok_y {
                        return Err(Error::Diverged { replica: rep, step: k });
                    }
                    acc[k as usize] += sq_dist(&x, &y);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut done = Vec::with_capacity(nblocks);
    for b in blocks {
        done.push(b?);
    }
    let total = tree_merge(done, |a, b| {
        for (ai, bi) in a.iter_mut().zip(b) {
            *ai += bi;
        }
    })
    .unwrap_or_default();
    let m = cfg.replicas as f64;
    Ok(CoupledRun {
        mean_sq_dist: total.into_iter().map(|v| v / m).collect(),
        replicas: cfg.replicas,
    })
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Draws `substeps` Brownian increments of variance h/substeps per
/// coordinate, fine-first, flattened substep-major: entry j*d + i is
/// substep j, coordinate i. Their sum is the coarse step's increment.
pub fn brownian_increments<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    h: f64,
    substeps: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; substeps * d];
    fill_brownian_increments(rng, h, substeps, &mut out);
    out
}

/// Same, into a caller-owned buffer whose length fixes substeps * d.
pub fn fill_brownian_increments<R: Rng + ?Sized>(
    rng: &mut R,
    h: f64,
    substeps: usize,
    out: &mut [f64],
) {
    debug_assert!(substeps >= 1 && out.len() % substeps == 0);
    let scale = (h / substeps as f64).sqrt();
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = scale * z;
    }
}

/// The standard Gaussian vector equivalent to the coarse Brownian
/// increment: xi = (sum of increments) / sqrt(h). Feeding it to `lmc_step`
/// puts the chain on the same Brownian path as `reference_solution`.
pub fn coarse_xi(increments: &[f64], d: usize, h: f64) -> Vec<f64> {
    debug_assert!(increments.len() % d == 0);
    let mut xi = vec![0.0; d];
    for row in increments.chunks_exact(d) {
        for (s, v) in xi.iter_mut().zip(row) {
            *s += v;
        }
    }
    let inv = 1.0 / h.sqrt();
    for s in xi.iter_mut() {
        *s *= inv;
    }
    xi
}

/// High-accuracy solution of the diffusion dx = -grad f dt + sqrt(2) dB
/// over one coarse step of length h, driven by the given increment
/// partition (length substeps * d, as from `brownian_increments`).
///
/// Quadratic targets compose exact per-substep transitions, so the
/// returned point has the exact transition law; other targets take
/// fine Euler steps on the same Brownian path. Divergence reports the
/// substep index in the step field.
pub fn reference_solution(
    p: &PotentialModel,
    x: &[f64],
    h: f64,
    increments: &[f64],
) -> Result<Vec<f64>> {
    let d = p.d();
    if x.len() != d {
        return Err(Error::InvalidArgument(format!("state must have dimension {d}")));
    }
    if increments.is_empty() || increments.len() % d != 0 {
        return Err(Error::InvalidArgument(
            "increments must hold at least one substep of full dimension".into(),
        ));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(
            "step size must be positive and finite".into(),
        ));
    }
    let substeps = increments.len() / d;
    let delta = h / substeps as f64;
    let mut y = x.to_vec();
    if let Some(q) = p.quadratic() {
        // Exact transition per substep: decay e^{-lam delta}, injected
        // variance (1 - e^{-2 lam delta}) / lam, with the substep's scaled
        // increment as the unit Gaussian.
        let inv_sqrt_delta = 1.0 / delta.sqrt();
        let coef: Vec<(f64, f64)> = q
            .curvatures()
            .iter()
            .map(|&lam| {
                let decay = (-lam * delta).exp();
                let sd = (-(-2.0 * lam * delta).exp_m1() / lam).sqrt();
                (decay, sd)
            })
            .collect();
        for row in increments.chunks_exact(d) {
            for i in 0..d {
                let zeta = row[i] * inv_sqrt_delta;
                y[i] = coef[i].0 * y[i] + coef[i].1 * zeta;
            }
        }
        Ok(y)
    } else {
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut grad = vec![0.0; d];
        for (j, row) in increments.chunks_exact(d).enumerate() {
            p.gradient_into(&y, &mut grad);
            let mut probe = 0.0;
            for i in 0..d {
                y[i] += -delta * grad[i] + sqrt2 * row[i];
                probe += y[i];
            }
            if !probe.is_finite() {
                return Err(Error::Diverged { replica: 0, step: j as u64 });
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{lmc_iterate_law, stationary_law};
    use crate::potentials::{make_f1, make_f2, make_quadratic, QuadraticSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn unit_quadratic(d: usize) -> PotentialModel {
        make_quadratic(&QuadraticSpec::unit(d).unwrap())
    }

    fn point_cfg(h: f64, steps: u64, replicas: usize, seed: u64, x0: Vec<f64>) -> ChainConfig {
        ChainConfig { h, steps, replicas, seed, start: StartDist::Point(x0) }
    }

    #[test]
    fn single_step_matches_hand_values() {
        let p = unit_quadratic(1);
        // Fixed point at the minimizer with zero noise.
        assert_eq!(lmc_step(&[0.0], &p, 0.1, &[0.0]).unwrap(), vec![0.0]);
        // Pure drift: 1 - h.
        assert_relative_eq!(lmc_step(&[1.0], &p, 0.1, &[0.0]).unwrap()[0], 0.9);
        // Pure noise: sqrt(2 * 0.5) * 1 = 1.
        assert_relative_eq!(lmc_step(&[0.0], &p, 0.5, &[1.0]).unwrap()[0], 1.0);
        assert!(lmc_step(&[0.0, 0.0], &p, 0.1, &[0.0, 0.0]).is_err());
        assert!(lmc_step(&[0.0], &p, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn noise_cells_are_deterministic_and_distinct() {
        let s = NoiseStream::new(7, 5);
        assert_eq!(s.xi(3, 11), s.xi(3, 11));
        assert_ne!(s.xi(3, 11), s.xi(3, 12));
        assert_ne!(s.xi(3, 11), s.xi(4, 11));
        assert_ne!(s.xi(3, 11), NoiseStream::new(8, 5).xi(3, 11));
        // Swapped counters land in different cells.
        assert_ne!(s.xi(3, 11), s.xi(11, 3));
        // The init cell is distinct from every step cell we use.
        let mut init = vec![0.0; 5];
        fill_standard_normal(&mut s.init_rng(3), &mut init);
        assert_ne!(init, s.xi(3, 0));
    }

    #[test]
    fn noise_marginals_are_standard_gaussian() {
        let d = 100;
        let s = NoiseStream::new(2024, d);
        let n = 1_000_000usize;
        let mut buf = vec![0.0; d];
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for rep in 0..100u64 {
            for step in 1..=100u64 {
                s.fill_xi(rep, step, &mut buf);
                for &v in &buf {
                    sum += v;
                    sumsq += v * v;
                }
            }
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // 4 standard errors: SE(mean) = 1/sqrt(n), SE(var) ~ sqrt(2/n).
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn chain_moments_match_the_closed_form_law() {
        let q = QuadraticSpec::unit(1).unwrap();
        let p = make_quadratic(&q);
        let cfg = point_cfg(0.1, 10, 100_000, 11, vec![1.0]);
        let run = run_chains(&p, &cfg, &[0, 10]).unwrap();
        // Step 0 is the deterministic start.
        let start = run.at_step(0).unwrap();
        assert_eq!(start.mean, vec![1.0]);
        assert_eq!(start.variance(), vec![0.0]);
        // Step 10 against the exact iterate law.
        let law = lmc_iterate_law(&q, 0.1, 10, &[1.0]).unwrap();
        let got = run.at_step(10).unwrap();
        let se = got.mean_se()[0];
        assert!(
            (got.mean[0] - law.means()[0]).abs() < 4.0 * se,
            "mean {} vs {} (se {})",
            got.mean[0],
            law.means()[0],
            se
        );
        assert_relative_eq!(got.variance()[0], law.variances()[0], max_relative = 0.05);
    }

    #[test]
    fn zero_steps_returns_start_statistics() {
        let p = unit_quadratic(3);
        let cfg = ChainConfig {
            h: 0.1,
            steps: 0,
            replicas: 500,
            seed: 5,
            start: StartDist::Stationary,
        };
        let run = run_chains(&p, &cfg, &[0]).unwrap();
        let m = run.at_step(0).unwrap();
        // Stationary here is standard Gaussian; loose 6-sigma style checks.
        for i in 0..3 {
            assert!(m.mean[i].abs() < 0.2, "mean {}", m.mean[i]);
            assert!((m.coord_second[i] - 1.0).abs() < 0.3);
        }
    }

    #[test]
    fn reruns_and_worker_counts_are_bit_identical() {
        let p = make_f1(6).unwrap();
        let cfg = ChainConfig {
            h: 0.05,
            steps: 25,
            replicas: 300,
            seed: 99,
            start: StartDist::StandardNormal,
        };
        let a = run_chains(&p, &cfg, &[0, 7, 25]).unwrap();
        let b = run_chains(&p, &cfg, &[0, 7, 25]).unwrap();
        assert_eq!(a, b);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool1.install(|| run_chains(&p, &cfg, &[0, 7, 25])).unwrap();
        let d = pool3.install(|| run_chains(&p, &cfg, &[0, 7, 25])).unwrap();
        assert_eq!(a, c);
        assert_eq!(a, d);
    }

    #[test]
    fn divergence_names_the_first_replica_and_step() {
        let p = make_f1(2).unwrap();
        let cfg = ChainConfig {
            h: 1000.0,
            steps: 200,
            replicas: 130,
            seed: 1,
            start: StartDist::StandardNormal,
        };
        match run_chains(&p, &cfg, &[200]) {
            Err(Error::Diverged { replica, step }) => {
                assert_eq!(replica, 0);
                assert!(step >= 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_guards_stability_and_starts() {
        let p = make_quadratic(&QuadraticSpec::new(vec![1.0, 4.0]).unwrap());
        let bad = point_cfg(0.5, 10, 4, 0, vec![0.0, 0.0]);
        match bad.validate(&p) {
            Err(Error::Unstable { h, limit }) => {
                assert_eq!(h, 0.5);
                assert_eq!(limit, 0.5);
            }
            other => panic!("expected stability error, got {other:?}"),
        }
        assert!(point_cfg(0.49, 10, 4, 0, vec![0.0, 0.0]).validate(&p).is_ok());
        // Non-quadratic targets have no hard guard.
        let f1 = make_f1(2).unwrap();
        assert!(point_cfg(10.0, 1, 1, 0, vec![0.0, 0.0]).validate(&f1).is_ok());
        // Stationary start needs the closed-form law.
        let cfg = ChainConfig {
            h: 0.1,
            steps: 1,
            replicas: 1,
            seed: 0,
            start: StartDist::Stationary,
        };
        assert!(cfg.validate(&f1).is_err());
        assert!(point_cfg(0.1, 1, 4, 0, vec![0.0]).validate(&p).is_err());
    }

    #[test]
    fn coupled_quadratic_pair_contracts_exactly() {
        // The noise cancels in the difference, which contracts by 1 - h
        // per step, identically across replicas.
        let p = unit_quadratic(2);
        let cfg = point_cfg(0.1, 30, 8, 3, vec![0.0, 0.0]);
        let run = run_coupled_pair(&p, &cfg, &[1.0, -1.0], &[0.0, 0.0]).unwrap();
        let d0 = 2.0;
        for (k, &msd) in run.mean_sq_dist.iter().enumerate() {
            let expect = d0 * 0.81f64.powi(k as i32);
            assert_relative_eq!(msd, expect, max_relative = 1e-12);
        }
        // Identical starts stay identical.
        let same = run_coupled_pair(&p, &cfg, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(same.mean_sq_dist.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coupled_f1_pair_distance_is_monotone() {
        // For h (m + L) <= 2 the one-step map is a pathwise contraction
        // with factor at most 1 - h m, so the mean squared distance must
        // shrink at least that fast.
        let p = make_f1(2).unwrap();
        let h = 1.0 / 16.0;
        let cfg = point_cfg(h, 40, 256, 17, vec![0.0, 0.0]);
        let run = run_coupled_pair(&p, &cfg, &[2.0, -1.0], &[-1.0, 1.0]).unwrap();
        let factor = (1.0 - h * p.m()).powi(2);
        for w in run.mean_sq_dist.windows(2) {
            assert!(w[1] <= w[0] * factor * (1.0 + 1e-12), "{} vs {}", w[1], w[0]);
        }
    }

    #[test]
    fn iterate_second_moment_stays_bounded() {
        // E|x_k|^2 <= E|x0|^2 + 8d/(7m) + 3 standard errors for h within
        // the certified range.
        for (p, h, start) in [
            (
                make_quadratic(&QuadraticSpec::block(1.0, 4.0, 2).unwrap()),
                1.0 / 64.0,
                StartDist::Point(vec![1.0; 4]),
            ),
            (make_f1(4).unwrap(), 1.0 / 16.0, StartDist::StandardNormal),
        ] {
            let cfg = ChainConfig { h, steps: 200, replicas: 4000, seed: 23, start };
            let record: Vec<u64> = (0..=200).step_by(25).collect();
            let run = run_chains(&p, &cfg, &record).unwrap();
            let ex0 = cfg.start.second_moment(&p).unwrap();
            let cap = ex0 + 8.0 * p.d() as f64 / (7.0 * p.m());
            for m in &run.records {
                assert!(
                    m.second_moment() <= cap + 3.0 * m.second_moment_se(),
                    "step {}: {} above {}",
                    m.step,
                    m.second_moment(),
                    cap
                );
            }
        }
    }

    #[test]
    fn reference_solution_reduces_to_known_cases() {
        // Zero noise on a quadratic: pure exponential decay.
        let p = unit_quadratic(1);
        let zeros = vec![0.0; 8];
        let y = reference_solution(&p, &[1.0], 0.5, &zeros).unwrap();
        assert_relative_eq!(y[0], (-0.5f64).exp(), max_relative = 1e-12);
        // One substep on a general potential is exactly one chain update.
        let f = make_f2(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = vec![0.3, -0.8, 1.1];
        let h = 0.125;
        let inc = brownian_increments(&mut rng, 3, h, 1);
        let xi = coarse_xi(&inc, 3, h);
        let fine = reference_solution(&f, &x, h, &inc).unwrap();
        let coarse = lmc_step(&x, &f, h, &xi).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(fine[i], coarse[i], epsilon = 1e-13);
        }
        // Increment rows must cover the dimension.
        assert!(reference_solution(&f, &x, h, &inc[..2]).is_err());
        assert!(reference_solution(&f, &x, h, &[]).is_err());
    }

    #[test]
    fn reference_solution_has_the_exact_transition_variance() {
        // At x = 0 the one-step law is centered with variance 1 - e^{-2h}.
        let p = unit_quadratic(1);
        let h = 0.3;
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut buf = vec![0.0; 4];
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            fill_brownian_increments(&mut rng, h, 4, &mut buf);
            let y = reference_solution(&p, &[0.0], h, &buf).unwrap()[0];
            sum += y;
            sumsq += y * y;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let want = 1.0 - (-2.0 * h).exp();
        let se = want * (2.0 / n as f64).sqrt();
        assert!((var - want).abs() < 4.0 * se, "var {var} vs {want}");
        assert!(mean.abs() < 4.0 * (want / n as f64).sqrt());
    }

    #[test]
    fn coupled_reference_tracks_the_chain_at_small_steps() {
        // Sharing the Brownian path keeps chain and reference within
        // O(h^{3/2}) of each other; check the gap shrinks with h fast.
        let q = QuadraticSpec::unit(1).unwrap();
        let p = make_quadratic(&q);
        let mut gaps = Vec::new();
        for &h in &[0.25, 0.0625] {
            let n = 4000;
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let mut buf = vec![0.0; 32];
            let mut acc = 0.0;
            for _ in 0..n {
                let x = [1.0];
                fill_brownian_increments(&mut rng, h, 32, &mut buf);
                let fine = reference_solution(&p, &x, h, &buf).unwrap();
                let xi = coarse_xi(&buf, 1, h);
                let coarse = lmc_step(&x, &p, h, &xi).unwrap();
                acc += (fine[0] - coarse[0]).powi(2);
            }
            gaps.push((acc / n as f64).sqrt());
        }
        // Order 3/2 means a 4x step reduction shrinks the gap by about 8x.
        let ratio = gaps[0] / gaps[1];
        assert!(ratio > 5.0 && ratio < 13.0, "ratio {ratio}");
    }

    #[test]
    fn stationary_start_matches_target_law_moments() {
        let q = QuadraticSpec::new(vec![1.0, 4.0]).unwrap();
        let p = make_quadratic(&q);
        let cfg = ChainConfig {
            h: 0.1,
            steps: 0,
            replicas: 50_000,
            seed: 77,
            start: StartDist::Stationary,
        };
        let run = run_chains(&p, &cfg, &[0]).unwrap();
        let m = run.at_step(0).unwrap();
        let law = stationary_law(&q);
        for i in 0..2 {
            let se = m.mean_se()[i];
            assert!((m.mean[i] - law.means()[i]).abs() < 4.0 * se);
            assert_relative_eq!(m.coord_second[i], law.variances()[i], max_relative = 0.05);
        }
        assert_relative_eq!(
            StartDist::Stationary.second_moment(&p).unwrap(),
            1.25,
            max_relative = 1e-15
        );
    }

    #[test]
    fn record_list_is_validated_and_deduplicated() {
        let p = unit_quadratic(1);
        let cfg = point_cfg(0.1, 5, 10, 0, vec![1.0]);
        assert!(run_chains(&p, &cfg, &[6]).is_err());
        let run = run_chains(&p, &cfg, &[3, 0, 3, 5]).unwrap();
        let steps: Vec<u64> = run.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 3, 5]);
        // An empty record list is a valid smoke run.
        assert!(run_chains(&p, &cfg, &[]).unwrap().records.is_empty());
    }
}
