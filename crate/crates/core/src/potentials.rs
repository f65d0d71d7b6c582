//! Target potentials for the Langevin sampler.
//!
//! A potential is a smooth strongly convex function f on R^d described by
//! its gradient, optional value and gradient-of-Laplacian evaluators, and
//! curvature constants m and L with m*I <= Hessian <= L*I everywhere.
//! Diagonal quadratics additionally keep their curvature vector so that
//! closed-form Gaussian diagnostics stay available downstream.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Evaluator writing a vector field value into a caller-provided buffer.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Evaluator mapping a state to a scalar.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Diagonal quadratic target f(x) = sum_i lambda_i x_i^2 / 2.
///
/// Curvatures must be strictly positive; the stationary law is the centered
/// Gaussian with variance 1/lambda_i per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    curvatures: Vec<f64>,
}

impl QuadraticSpec {
    pub fn new(curvatures: Vec<f64>) -> Result<Self> {
        if curvatures.is_empty() {
            return Err(Error::InvalidArgument(
                "quadratic needs at least one curvature".into(),
            ));
        }
        if curvatures.iter().any(|&l| !l.is_finite() || l <= 0.0) {
            return Err(Error::InvalidArgument(
                "quadratic curvatures must be finite and positive".into(),
            ));
        }
        Ok(Self { curvatures })
    }

    /// Two-block target with d coordinates at curvature m followed by d at l.
    pub fn block(m: f64, l: f64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        let mut curvatures = vec![m; d];
        curvatures.extend(std::iter::repeat(l).take(d));
        Self::new(curvatures)
    }

    pub fn unit(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn d(&self) -> usize {
        self.curvatures.len()
    }

    pub fn min_curvature(&self) -> f64 {
        self.curvatures.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_curvature(&self) -> f64 {
        self.curvatures.iter().cloned().fold(0.0, f64::max)
    }
}

/// A target potential with evaluators and regularity constants.
#[derive(Clone)]
pub struct PotentialModel {
    d: usize,
    m: f64,
    l: f64,
    g: Option<f64>,
    gradient: VectorField,
    grad_laplacian: Option<VectorField>,
    value: Option<ScalarField>,
    quadratic: Option<QuadraticSpec>,
}

impl PotentialModel {
    /// Ambient dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Strong-convexity constant (smallest Hessian eigenvalue bound).
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Smoothness constant (largest Hessian eigenvalue bound).
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Condition number L/m.
    pub fn kappa(&self) -> f64 {
        self.l / self.m
    }

    /// Growth constant of the gradient of the Laplacian, if known.
    pub fn g(&self) -> Option<f64> {
        self.g
    }

    /// Returns a copy with the growth constant G set.
    pub fn with_g(mut self, g: f64) -> Self {
        self.g = Some(g);
        self
    }

    /// The curvature vector when the target is a diagonal quadratic.
    pub fn quadratic(&self) -> Option<&QuadraticSpec> {
        self.quadratic.as_ref()
    }

    /// Writes grad f(x) into out. Both slices must have length d.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(out.len(), self.d);
        (self.gradient)(x, out);
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.gradient_into(x, &mut out);
        out
    }

    /// Writes grad (Laplacian f)(x) into out, when the evaluator exists.
    pub fn grad_laplacian_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let f = self.grad_laplacian.as_ref().ok_or_else(|| {
            Error::InvalidArgument("this potential has no gradient-of-Laplacian evaluator".into())
        })?;
        f(x, out);
        Ok(())
    }

    pub fn has_grad_laplacian(&self) -> bool {
        self.grad_laplacian.is_some()
    }

    /// Potential value f(x), when the evaluator exists.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        self.value.as_ref().map(|f| f(x))
    }
}

/// Builds the model for a diagonal quadratic target.
///
/// The gradient is exactly lambda_i x_i, the Laplacian is constant, so the
/// growth constant G is exactly 0.
pub fn make_quadratic(q: &QuadraticSpec) -> PotentialModel {
    let lam = q.curvatures().to_vec();
    let lam_grad = lam.clone();
    let lam_val = lam.clone();
    PotentialModel {
        d: q.d(),
        m: q.min_curvature(),
        l: q.max_curvature(),
        g: Some(0.0),
        gradient: Arc::new(move |x, out| {
            for i in 0..x.len() {
                out[i] = lam_grad[i] * x[i];
            }
        }),
        grad_laplacian: Some(Arc::new(|_x, out| out.fill(0.0))),
        value: Some(Arc::new(move |x| {
            0.5 * x
                .iter()
                .zip(&lam_val)
                .map(|(&xi, &li)| li * xi * xi)
                .sum::<f64>()
        })),
        quadratic: Some(q.clone()),
    }
}

/// Softmax of x with the usual max shift; writes into out and returns the sum
/// of shifted exponentials (always >= 1).
fn softmax_into(x: &[f64], out: &mut [f64]) -> f64 {
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for i in 0..x.len() {
        let e = (x[i] - mx).exp();
        out[i] = e;
        sum += e;
    }
    let inv = 1.0 / sum;
    for v in out.iter_mut() {
        *v *= inv;
    }
    sum
}

/// Quadratic-plus-log-sum-exp target:
/// f(x) = |x|^2/2 + log sum_i exp(x_i), with m = 1 and L = 2.
///
/// The minimizer is not the origin: grad f(0) is the uniform softmax vector.
pub fn make_f1(d: usize) -> Result<PotentialModel> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let grad = Arc::new(move |x: &[f64], out: &mut [f64]| {
        softmax_into(x, out);
        for i in 0..x.len() {
            out[i] += x[i];
        }
    });
    // Laplacian f = d + 1 - |s|^2 with s the softmax, so its gradient is
    // -2 (diag(s) - s s^T) s, component-wise -2 s_j (s_j - |s|^2).
    let grad_lap = Arc::new(move |x: &[f64], out: &mut [f64]| {
        softmax_into(x, out);
        let ssq: f64 = out.iter().map(|s| s * s).sum();
        for s in out.iter_mut() {
            *s = -2.0 * *s * (*s - ssq);
        }
    });
    let value = Arc::new(move |x: &[f64]| {
        let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse: f64 = x.iter().map(|&xi| (xi - mx).exp()).sum::<f64>().ln() + mx;
        0.5 * x.iter().map(|&xi| xi * xi).sum::<f64>() + lse
    });
    Ok(PotentialModel {
        d,
        m: 1.0,
        l: 2.0,
        g: None,
        gradient: grad,
        grad_laplacian: Some(grad_lap),
        value: Some(value),
        quadratic: None,
    })
}

/// Quadratic-plus-cosine target:
/// f(x) = |x|^2/2 - (1/(2 sqrt(d))) sum_i cos(d^{1/4} x_i),
/// with m = 1/2 and L = 3/2. The per-coordinate curvature is
/// 1 + cos(d^{1/4} x_i)/2.
pub fn make_f2(d: usize) -> Result<PotentialModel> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let c = (d as f64).powf(0.25);
    let a = 0.5 / c; // 1 / (2 d^{1/4})
    let grad = Arc::new(move |x: &[f64], out: &mut [f64]| {
        for i in 0..x.len() {
            out[i] = x[i] + a * (c * x[i]).sin();
        }
    });
    // Laplacian f = d + (1/2) sum_i cos(d^{1/4} x_i), so the j-th component
    // of its gradient is -(d^{1/4}/2) sin(d^{1/4} x_j).
    let grad_lap = Arc::new(move |x: &[f64], out: &mut [f64]| {
        for i in 0..x.len() {
            out[i] = -0.5 * c * (c * x[i]).sin();
        }
    });
    let b = 0.5 / (d as f64).sqrt(); // 1 / (2 sqrt(d))
    let value = Arc::new(move |x: &[f64]| {
        x.iter()
            .map(|&xi| 0.5 * xi * xi - b * (c * xi).cos())
            .sum::<f64>()
    });
    Ok(PotentialModel {
        d,
        m: 0.5,
        l: 1.5,
        g: None,
        gradient: grad,
        grad_laplacian: Some(grad_lap),
        value: Some(value),
        quadratic: None,
    })
}

/// Estimates the growth constant G = sup_x |grad Laplacian f(x)| / (1 + |x|)
/// by maximizing over points sampled uniformly from the ball of the given
/// radius. Deterministic for a fixed seed.
pub fn estimate_g(p: &PotentialModel, radius: f64, samples: u64, seed: u64) -> Result<f64> {
    if !p.has_grad_laplacian() {
        return Err(Error::InvalidArgument(
            "estimating G needs a gradient-of-Laplacian evaluator".into(),
        ));
    }
    if !(radius > 0.0) || samples == 0 {
        return Err(Error::InvalidArgument(
            "G estimation needs a positive radius and at least one sample".into(),
        ));
    }
    let d = p.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let mut best = 0.0f64;
    for _ in 0..samples {
        // Uniform point in the ball: Gaussian direction, radius r * u^{1/d}.
        let mut nsq = 0.0;
        for xi in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *xi = z;
            nsq += z * z;
        }
        let norm = nsq.sqrt().max(f64::MIN_POSITIVE);
        let u: f64 = rng.random();
        let r = radius * u.powf(1.0 / d as f64);
        let scale = r / norm;
        for xi in x.iter_mut() {
            *xi *= scale;
        }
        p.grad_laplacian_into(&x, &mut buf)?;
        let glap: f64 = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = glap / (1.0 + r);
        if ratio > best {
            best = ratio;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn seeded_points(d: usize, n: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        scale * z
                    })
                    .collect()
            })
            .collect()
    }

    fn fd_gradient(p: &PotentialModel, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut out = vec![0.0; d];
        let mut xp = x.to_vec();
        for i in 0..d {
            let step = 1e-5 * (1.0 + x[i].abs());
            xp[i] = x[i] + step;
            let fp = p.value(&xp).unwrap();
            xp[i] = x[i] - step;
            let fm = p.value(&xp).unwrap();
            xp[i] = x[i];
            out[i] = (fp - fm) / (2.0 * step);
        }
        out
    }

    fn check_gradient_matches_fd(p: &PotentialModel, points: &[Vec<f64>]) {
        let mut grad = vec![0.0; p.d()];
        for x in points {
            p.gradient_into(x, &mut grad);
            let fd = fd_gradient(p, x);
            let scale = grad.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for i in 0..p.d() {
                assert!(
                    (grad[i] - fd[i]).abs() <= 1e-5 * scale,
                    "gradient mismatch at {:?}: analytic {} vs fd {}",
                    x,
                    grad[i],
                    fd[i]
                );
            }
        }
    }

    fn check_curvature_envelope(p: &PotentialModel, points: &[Vec<f64>], seed: u64) {
        // Directional second difference (f(x+tu) - 2 f(x) + f(x-tu)) / t^2
        // must stay inside [m - tol, L + tol] for unit directions u.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 1e-4;
        for x in points {
            let mut u: Vec<f64> = (0..p.d()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in u.iter_mut() {
                *v /= norm;
            }
            let xp: Vec<f64> = x.iter().zip(&u).map(|(&a, &b)| a + t * b).collect();
            let xm: Vec<f64> = x.iter().zip(&u).map(|(&a, &b)| a - t * b).collect();
            let second = (p.value(&xp).unwrap() - 2.0 * p.value(x).unwrap()
                + p.value(&xm).unwrap())
                / (t * t);
            let tol = 1e-3;
            assert!(
                second >= p.m() - tol && second <= p.l() + tol,
                "second difference {} outside [{}, {}]",
                second,
                p.m(),
                p.l()
            );
        }
    }

    #[test]
    fn quadratic_model_fields_and_gradient() {
        let q = QuadraticSpec::new(vec![1.0, 4.0]).unwrap();
        let p = make_quadratic(&q);
        assert_eq!(p.d(), 2);
        assert_eq!(p.m(), 1.0);
        assert_eq!(p.l(), 4.0);
        assert_eq!(p.g(), Some(0.0));
        assert_eq!(p.kappa(), 4.0);
        assert_eq!(p.gradient(&[0.5, -2.0]), vec![0.5, -8.0]);
        assert_eq!(p.value(&[1.0, 1.0]).unwrap(), 2.5);
        let mut out = vec![9.0, 9.0];
        p.grad_laplacian_into(&[3.0, -1.0], &mut out).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_spec_validation() {
        assert!(QuadraticSpec::new(vec![]).is_err());
        assert!(QuadraticSpec::new(vec![1.0, 0.0]).is_err());
        assert!(QuadraticSpec::new(vec![1.0, -2.0]).is_err());
        let b = QuadraticSpec::block(1.0, 4.0, 2).unwrap();
        assert_eq!(b.curvatures(), &[1.0, 1.0, 4.0, 4.0]);
        assert_eq!(b.min_curvature(), 1.0);
        assert_eq!(b.max_curvature(), 4.0);
    }

    #[test]
    fn f1_gradient_is_state_plus_softmax() {
        let p = make_f1(3).unwrap();
        // A dominant coordinate saturates the softmax.
        let g = p.gradient(&[1000.0, 0.0, 0.0]);
        assert_relative_eq!(g[0], 1001.0, max_relative = 1e-12);
        assert_relative_eq!(g[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(g[2], 0.0, epsilon = 1e-12);
        // In one dimension the softmax is identically 1.
        let p1 = make_f1(1).unwrap();
        assert_eq!(p1.gradient(&[0.3]), vec![1.3]);
        // The origin is not the minimizer: grad f1(0) is the uniform vector.
        let g0 = p.gradient(&[0.0, 0.0, 0.0]);
        for gi in g0 {
            assert_relative_eq!(gi, 1.0 / 3.0, max_relative = 1e-15);
        }
        assert_eq!(p.m(), 1.0);
        assert_eq!(p.l(), 2.0);
        assert_eq!(p.g(), None);
    }

    #[test]
    fn f2_gradient_and_origin() {
        let p = make_f2(1).unwrap();
        let x = std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(p.gradient(&[x])[0], x + 0.5, max_relative = 1e-15);
        // The gradient vanishes exactly at the origin.
        let p4 = make_f2(4).unwrap();
        assert_eq!(p4.gradient(&[0.0; 4]), vec![0.0; 4]);
        assert_eq!(p4.m(), 0.5);
        assert_eq!(p4.l(), 1.5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let q = QuadraticSpec::new(vec![0.5, 1.0, 2.5]).unwrap();
        let cases = [
            (make_quadratic(&q), 3usize),
            (make_f1(5).unwrap(), 5),
            (make_f2(5).unwrap(), 5),
        ];
        for (p, d) in cases {
            let points = seeded_points(d, 100, 2.0, 7 + d as u64);
            check_gradient_matches_fd(&p, &points);
        }
    }

    #[test]
    fn curvature_envelope_holds() {
        let q = QuadraticSpec::new(vec![0.5, 1.0, 2.5]).unwrap();
        let cases = [
            (make_quadratic(&q), 3usize),
            (make_f1(4).unwrap(), 4),
            (make_f2(4).unwrap(), 4),
        ];
        for (p, d) in cases {
            let points = seeded_points(d, 40, 1.5, 100 + d as u64);
            check_curvature_envelope(&p, &points, 200 + d as u64);
        }
    }

    #[test]
    fn f1_grad_laplacian_matches_fd_of_laplacian() {
        // Laplacian f1 = d + 1 - |softmax(x)|^2 in closed form.
        let d = 4;
        let p = make_f1(d).unwrap();
        let lap = |x: &[f64]| {
            let mut s = vec![0.0; x.len()];
            softmax_into(x, &mut s);
            x.len() as f64 + 1.0 - s.iter().map(|v| v * v).sum::<f64>()
        };
        let mut out = vec![0.0; d];
        for x in seeded_points(d, 25, 1.5, 31) {
            p.grad_laplacian_into(&x, &mut out).unwrap();
            let mut xp = x.clone();
            for i in 0..d {
                let step = 1e-6 * (1.0 + x[i].abs());
                xp[i] = x[i] + step;
                let fp = lap(&xp);
                xp[i] = x[i] - step;
                let fm = lap(&xp);
                xp[i] = x[i];
                let fd = (fp - fm) / (2.0 * step);
                assert!(
                    (out[i] - fd).abs() <= 1e-6 + 1e-5 * fd.abs(),
                    "grad-Laplacian mismatch: {} vs {}",
                    out[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn f2_grad_laplacian_matches_fd_of_laplacian() {
        let d = 3;
        let p = make_f2(d).unwrap();
        let c = (d as f64).powf(0.25);
        let lap = |x: &[f64]| {
            x.len() as f64 + 0.5 * x.iter().map(|&xi| (c * xi).cos()).sum::<f64>()
        };
        let mut out = vec![0.0; d];
        for x in seeded_points(d, 25, 2.0, 77) {
            p.grad_laplacian_into(&x, &mut out).unwrap();
            let mut xp = x.clone();
            for i in 0..d {
                let step = 1e-6 * (1.0 + x[i].abs());
                xp[i] = x[i] + step;
                let fp = lap(&xp);
                xp[i] = x[i] - step;
                let fm = lap(&xp);
                xp[i] = x[i];
                let fd = (fp - fm) / (2.0 * step);
                assert!(
                    (out[i] - fd).abs() <= 1e-6 + 1e-5 * fd.abs(),
                    "grad-Laplacian mismatch: {} vs {}",
                    out[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn estimate_g_is_zero_for_quadratics() {
        let q = QuadraticSpec::new(vec![1.0, 3.0]).unwrap();
        let p = make_quadratic(&q);
        assert_eq!(estimate_g(&p, 5.0, 500, 1).unwrap(), 0.0);
    }

    #[test]
    fn estimate_g_matches_scan_in_one_dimension() {
        // For f2 with d = 1 the target ratio is |sin(x)| / (2 (1 + |x|));
        // compare the sampled maximum against a fine grid scan.
        let p = make_f2(1).unwrap();
        let radius = 2.0;
        let mut best_scan = 0.0f64;
        let n = 200_000;
        for i in 0..=n {
            let x = -radius + 2.0 * radius * (i as f64) / (n as f64);
            let v = 0.5 * x.sin().abs() / (1.0 + x.abs());
            best_scan = best_scan.max(v);
        }
        let est = estimate_g(&p, radius, 50_000, 9).unwrap();
        assert!(est <= best_scan + 1e-12);
        assert!(est >= best_scan - 2e-4, "estimate {} vs scan {}", est, best_scan);
    }

    #[test]
    fn estimate_g_for_f2_grows_with_dimension_below_cap() {
        let mut prev = 0.0;
        for d in [1usize, 4, 16] {
            let p = make_f2(d).unwrap();
            let radius = 2.0 * (d as f64).sqrt();
            let est = estimate_g(&p, radius, 4096, 5).unwrap();
            let cap = 0.5 * (d as f64).powf(0.75);
            assert!(est <= cap + 1e-12, "estimate {} above cap {}", est, cap);
            assert!(est > prev * 0.9, "estimate should grow with d");
            prev = est;
        }
    }

    #[test]
    fn estimate_g_validates_arguments() {
        let p = make_f2(2).unwrap();
        assert!(estimate_g(&p, 0.0, 10, 1).is_err());
        assert!(estimate_g(&p, 1.0, 0, 1).is_err());
        let stripped = PotentialModel {
            grad_laplacian: None,
            ..p
        };
        assert!(estimate_g(&stripped, 1.0, 10, 1).is_err());
    }
}
