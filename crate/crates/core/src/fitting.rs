//! Least-squares fits for the three curve families used to summarize scans:
//! inverse-N decay, damped sinusoid, and vertex-form quadratic.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZenoError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

impl DataPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, stderr: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub residual_rms: f64,
    pub r_squared: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the best fit contradicts the family's shape (e.g. a concave quadratic).
    #[serde(default)]
    pub model_mismatch: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainties: Option<BTreeMap<String, f64>>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }
}

fn sorted(points: &[DataPoint]) -> Vec<DataPoint> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p
}

fn goodness(points: &[DataPoint], model: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.y).sum::<f64>() / n;
    let ss_res: f64 = points.iter().map(|p| (p.y - model(p.x)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.y - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    ((ss_res / n).sqrt(), r2.min(1.0))
}

/// Linear least squares via QR. `None` when the design is rank deficient.
fn linear_lsq(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let m = rows.len();
    let n = rows[0].len();
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale.max(1e-300)) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb).map(|x| x.iter().copied().collect())
}

/// P = a/N + b by exact linear least squares in the basis {1/N, 1}.
pub fn fit_inverse_n(points: &[DataPoint]) -> Result<FitResult> {
    let pts = sorted(points);
    if pts.len() < 3 {
        return Err(ZenoError::Fit("inverse-N fit needs at least 3 points".into()));
    }
    if pts.iter().any(|p| p.x == 0.0) {
        return Err(ZenoError::Fit("N = 0 is outside the inverse-N model".into()));
    }
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.0 / p.x, 1.0]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let sol = linear_lsq(&rows, &y).ok_or_else(|| ZenoError::Fit("rank deficient: all N are equal".into()))?;
    let (a, b) = (sol[0], sol[1]);
    let (rms, r2) = goodness(&pts, |n| a / n + b);
    Ok(FitResult {
        family: "inverse_n".into(),
        params: BTreeMap::from([("a".into(), a), ("b".into(), b)]),
        residual_rms: rms,
        r_squared: r2,
        converged: true,
        iterations: 1,
        model_mismatch: false,
        uncertainties: None,
    })
}

/// P = a(x − x₀)² + c fitted on points with x ≤ `domain_max`.
pub fn fit_quadratic_vertex(points: &[DataPoint], domain_max: f64) -> Result<FitResult> {
    let pts: Vec<DataPoint> = sorted(points).into_iter().filter(|p| p.x <= domain_max).collect();
    if pts.len() < 4 {
        return Err(ZenoError::Fit(format!(
            "quadratic fit needs at least 4 points below {domain_max}, got {}",
            pts.len()
        )));
    }
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.x * p.x, p.x, 1.0]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let sol =
        linear_lsq(&rows, &y).ok_or_else(|| ZenoError::Fit("rank deficient: need 3 distinct abscissae".into()))?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    let (rms, r2) = goodness(&pts, |x| a * x * x + b * x + c);

    let xr = pts.last().unwrap().x - pts[0].x;
    let yr = y.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - y.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let negligible = a.abs() * xr * xr <= 1e-6 * yr.max(f64::MIN_POSITIVE);
    let mismatch = a <= 0.0 || negligible;
    let (x0, cv) = if a != 0.0 {
        (-b / (2.0 * a), c - b * b / (4.0 * a))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(FitResult {
        family: "quadratic_vertex".into(),
        params: BTreeMap::from([("a".into(), a), ("x0".into(), x0), ("c".into(), cv)]),
        residual_rms: rms,
        r_squared: r2,
        converged: true,
        iterations: 1,
        model_mismatch: mismatch,
        uncertainties: None,
    })
}

/// Which envelope parametrization the damped-sinusoid fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinusoidVariant {
    /// A·e^{−γτ}·sin(ωτ+φ) + 1 − A·e^{−γτ}.
    Tied,
    /// A·e^{−γτ}·sin(ωτ+φ) + c·(1 − A'·e^{−γ'τ}).
    Free,
}

impl SinusoidVariant {
    fn names(&self) -> &'static [&'static str] {
        match self {
            SinusoidVariant::Tied => &["A", "gamma", "omega", "phi"],
            SinusoidVariant::Free => &["A", "gamma", "omega", "phi", "c", "A2", "gamma2"],
        }
    }

    pub fn eval(&self, p: &[f64], t: f64) -> f64 {
        let env = p[0] * (-p[1] * t).exp();
        let osc = env * (p[2] * t + p[3]).sin();
        match self {
            SinusoidVariant::Tied => osc + 1.0 - env,
            SinusoidVariant::Free => osc + p[4] * (1.0 - p[5] * (-p[6] * t).exp()),
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![
            (-10.0, 10.0),
            (0.0, 10.0),
            (1e-9, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
        ];
        if *self == SinusoidVariant::Free {
            b.extend([(-10.0, 10.0), (-10.0, 10.0), (0.0, 10.0)]);
        }
        b
    }
}

/// Declared damping schedule and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-3,
            lambda_up: 3.0,
            lambda_down: 2.0,
            max_iterations: 200,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

/// Bounded Levenberg–Marquardt with Marquardt diagonal scaling and a
/// central-difference Jacobian. Steps are clipped to the bounds.
pub fn levenberg_marquardt(
    model: impl Fn(&[f64], f64) -> f64,
    points: &[DataPoint],
    start: &[f64],
    bounds: &[(f64, f64)],
    settings: &LmSettings,
) -> LmOutcome {
    let np = start.len();
    let clamp = |p: &mut [f64]| {
        for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let cost_of = |p: &[f64]| -> f64 { points.iter().map(|d| (model(p, d.x) - d.y).powi(2)).sum() };
    let mut p = start.to_vec();
    clamp(&mut p);
    let mut cost = cost_of(&p);
    let mut history = vec![cost];
    let mut lambda = settings.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        if cost <= 1e-30 {
            converged = true;
            break;
        }
        let m = points.len();
        let mut jac = DMatrix::zeros(m, np);
        let mut res = DVector::zeros(m);
        for (i, d) in points.iter().enumerate() {
            res[i] = model(&p, d.x) - d.y;
        }
        for j in 0..np {
            let h = 1e-7 * p[j].abs().max(1e-3);
            let mut up = p.clone();
            let mut dn = p.clone();
            up[j] += h;
            dn[j] -= h;
            for (i, d) in points.iter().enumerate() {
                jac[(i, j)] = (model(&up, d.x) - model(&dn, d.x)) / (2.0 * h);
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&(-&jtr)) else {
                lambda *= settings.lambda_up;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut trial);
            let tc = cost_of(&trial);
            if tc.is_finite() && tc < cost {
                let rel = (cost - tc) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = tc;
                history.push(cost);
                lambda = (lambda / settings.lambda_down).max(1e-12);
                improved = true;
                if rel < settings.rel_tol {
                    converged = true;
                }
                break;
            }
            lambda *= settings.lambda_up;
        }
        if !improved {
            // No downhill step exists at any damping: a stationary point.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LmOutcome {
        params: p,
        cost,
        iterations,
        converged,
        history,
    }
}

/// Lomb–Scargle style power of mean-removed data at angular frequency `w`.
fn periodogram_power(points: &[DataPoint], w: f64) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut s, mut c) = (0.0, 0.0);
    for p in points {
        s += (p.y - mean) * (w * p.x).sin();
        c += (p.y - mean) * (w * p.x).cos();
    }
    (s * s + c * c) / n
}

/// Up to `count` local maxima of the periodogram, strongest first.
pub fn periodogram_peaks(points: &[DataPoint], count: usize) -> Vec<f64> {
    let span = points.last().unwrap().x - points[0].x;
    let min_dx = points
        .windows(2)
        .map(|w| w[1].x - w[0].x)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let w_lo = PI / span;
    let w_hi = PI / min_dx;
    let steps = 2000;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| w_lo + (w_hi - w_lo) * i as f64 / steps as f64)
        .collect();
    let power: Vec<f64> = grid.iter().map(|w| periodogram_power(points, *w)).collect();
    let mut peaks: Vec<(f64, f64)> = (1..steps)
        .filter(|&i| power[i] >= power[i - 1] && power[i] >= power[i + 1])
        .map(|i| (power[i], grid[i]))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    peaks.into_iter().take(count).map(|(_, w)| w).collect()
}

/// Damped-sinusoid fit with multi-start over ω (top three periodogram peaks
/// and ±20% around each), keeping the lowest-cost local minimum.
pub fn fit_damped_sinusoid(points: &[DataPoint], variant: SinusoidVariant) -> Result<FitResult> {
    let pts = sorted(points);
    if pts.len() < 8 {
        return Err(ZenoError::Fit("damped-sinusoid fit needs at least 8 points".into()));
    }
    let span = pts.last().unwrap().x - pts[0].x;
    let peaks = periodogram_peaks(&pts, 3);
    if peaks.is_empty() {
        return Err(ZenoError::Fit("no oscillation found in the periodogram".into()));
    }
    let settings = LmSettings::default();
    let bounds = variant.bounds();
    let mean = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
    let mut best: Option<LmOutcome> = None;
    let mut stalled = 0;
    for w in &peaks {
        for factor in [1.0, 0.8, 1.2] {
            let omega = w * factor;
            // Linear fit of a·sin + b·cos + c at fixed ω seeds A, φ and the offset.
            let rows: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| vec![(omega * p.x).sin(), (omega * p.x).cos(), 1.0])
                .collect();
            let y: Vec<f64> = pts.iter().map(|p| p.y).collect();
            let (amp, phi, offset) = match linear_lsq(&rows, &y) {
                Some(s) => ((s[0] * s[0] + s[1] * s[1]).sqrt(), s[1].atan2(s[0]), s[2]),
                None => (0.1, 0.0, mean),
            };
            let starts: Vec<Vec<f64>> = match variant {
                SinusoidVariant::Tied => vec![vec![amp.max(1e-3), 0.05, omega, phi]],
                SinusoidVariant::Free => [0.0, 0.5]
                    .iter()
                    .map(|a2| vec![amp.max(1e-3), 0.05, omega, phi, offset, *a2, 0.05])
                    .collect(),
            };
            for start in starts {
                let out = levenberg_marquardt(|p, t| variant.eval(p, t), &pts, &start, &bounds, &settings);
                if !out.converged {
                    stalled = stalled.max(out.iterations);
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => out.cost < b.cost * (1.0 - 1e-12),
                };
                if better {
                    best = Some(out);
                }
            }
        }
    }
    // Only converged starts compete; the error reports the iteration cap when none did.
    let best = best.ok_or(ZenoError::FitNotConverged(stalled))?;
    let mut p = best.params.clone();
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
    }
    p[3] = p[3].rem_euclid(2.0 * PI);
    let nyquist = PI
        / pts
            .windows(2)
            .map(|w| w[1].x - w[0].x)
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
    if p[2] >= 0.95 * nyquist {
        return Err(ZenoError::Fit(format!(
            "fitted ω = {:.3} sits at the sampling limit {nyquist:.3}",
            p[2]
        )));
    }
    if span * p[2] < 2.0 * PI {
        return Err(ZenoError::Fit(format!(
            "data span {span:.3} does not cover one period 2π/ω = {:.3}",
            2.0 * PI / p[2]
        )));
    }
    let (rms, r2) = goodness(&pts, |t| variant.eval(&p, t));
    let params = variant
        .names()
        .iter()
        .zip(&p)
        .map(|(n, v)| (n.to_string(), *v))
        .collect();
    Ok(FitResult {
        family: match variant {
            SinusoidVariant::Tied => "damped_sinusoid_tied".into(),
            SinusoidVariant::Free => "damped_sinusoid_free".into(),
        },
        params,
        residual_rms: rms,
        r_squared: r2,
        converged: true,
        iterations: best.iterations,
        model_mismatch: false,
        uncertainties: None,
    })
}

/// Per-parameter standard deviation over `resamples` seeded bootstrap refits.
/// Resample `i` draws from its own stream derived from `(seed, i)`.
pub fn bootstrap<F>(points: &[DataPoint], fitter: F, resamples: usize, seed: u64) -> Result<BTreeMap<String, f64>>
where
    F: Fn(&[DataPoint]) -> Result<FitResult>,
{
    let pts = sorted(points);
    let n = pts.len();
    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for i in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let draw: Vec<DataPoint> = (0..n).map(|_| pts[rng.random_range(0..n)]).collect();
        if let Ok(fit) = fitter(&draw) {
            for (k, v) in fit.params {
                if v.is_finite() {
                    samples.entry(k).or_default().push(v);
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(ZenoError::Fit("every bootstrap resample failed to fit".into()));
    }
    Ok(samples
        .into_iter()
        .map(|(k, v)| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64;
            (k, var.sqrt())
        })
        .collect())
}

/// Onset of the low-slope tail of a decreasing curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub onset_index: usize,
    pub onset_param: f64,
    pub level: f64,
}

/// First point after which the remaining decrease is at most `fraction` of the
/// total drop; the plateau level is the mean from there on.
pub fn detect_plateau(points: &[DataPoint], fraction: f64) -> Option<Plateau> {
    let pts = sorted(points);
    if pts.is_empty() {
        return None;
    }
    let n = pts.len();
    let mut tail_min = vec![0.0; n];
    let mut m = f64::INFINITY;
    for i in (0..n).rev() {
        m = m.min(pts[i].y);
        tail_min[i] = m;
    }
    let drop = pts[0].y - tail_min[0];
    let onset = (0..n)
        .find(|&i| pts[i].y - tail_min[i] <= fraction * drop)
        .unwrap_or(n - 1);
    let tail = &pts[onset..];
    Some(Plateau {
        onset_index: onset,
        onset_param: pts[onset].x,
        level: tail.iter().map(|p| p.y).sum::<f64>() / tail.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(xs: impl IntoIterator<Item = f64>, f: impl Fn(f64) -> f64) -> Vec<DataPoint> {
        xs.into_iter().map(|x| DataPoint::new(x, f(x))).collect()
    }

    fn ns() -> Vec<f64> {
        [1.0, 2.0, 3.0, 5.0, 10.0, 15.0, 20.0, 30.0].to_vec()
    }

    #[test]
    fn inverse_n_recovers_generator() {
        let fit = fit_inverse_n(&curve(ns(), |n| 2.99 / n - 0.09)).unwrap();
        assert!((fit.param("a") - 2.99).abs() < 1e-10);
        assert!((fit.param("b") + 0.09).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_n_constant_data() {
        let fit = fit_inverse_n(&curve(ns(), |_| 0.3)).unwrap();
        assert!(fit.param("a").abs() < 1e-12);
        assert!((fit.param("b") - 0.3).abs() < 1e-12);
    }

    #[test]
    fn inverse_n_rank_deficient() {
        let pts = curve([4.0, 4.0, 4.0], |_| 0.2);
        assert!(matches!(fit_inverse_n(&pts), Err(ZenoError::Fit(_))));
        assert!(fit_inverse_n(&pts[..2]).is_err());
    }

    #[test]
    fn inverse_n_noise_within_bootstrap_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        let pts: Vec<DataPoint> = ns()
            .into_iter()
            .map(|n| DataPoint::new(n, 1.0 / n + rand_distr::Distribution::sample(&normal, &mut rng)))
            .collect();
        let fit = fit_inverse_n(&pts).unwrap();
        let sd = bootstrap(&pts, fit_inverse_n, 200, 7).unwrap();
        let bound = 3.0 * (sd["a"].powi(2) + sd["b"].powi(2)).sqrt();
        assert!((fit.param("a") - 1.0).abs() < bound, "{} ± {bound}", fit.param("a"));
        assert!(fit.param("b").abs() < bound);
    }

    #[test]
    fn inverse_n_scale_equivariant_and_optimal() {
        let pts = curve(ns(), |n| 0.7 / n + 0.05 + 0.01 * (n * 1.3).sin());
        let base = fit_inverse_n(&pts).unwrap();
        let scaled: Vec<DataPoint> = pts.iter().map(|p| DataPoint::new(p.x, 3.0 * p.y)).collect();
        let s = fit_inverse_n(&scaled).unwrap();
        assert!((s.param("a") - 3.0 * base.param("a")).abs() < 1e-12);
        assert!((s.param("b") - 3.0 * base.param("b")).abs() < 1e-12);
        let rms = |a: f64, b: f64| goodness(&pts, |n| a / n + b).0;
        for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            assert!(rms(base.param("a") + da, base.param("b") + db) > base.residual_rms);
        }
    }

    #[test]
    fn quadratic_recovers_strength_fits() {
        for (a, x0, c) in [(1.56, 0.63, 0.37), (1.40, 0.55, 0.28), (2.05, 0.55, 0.14)] {
            let pts = curve((0..12).map(|i| i as f64 * 0.05), |x| a * (x - x0).powi(2) + c);
            let fit = fit_quadratic_vertex(&pts, 0.6).unwrap();
            assert!((fit.param("a") - a).abs() < 1e-9);
            assert!((fit.param("x0") - x0).abs() < 1e-9);
            assert!((fit.param("c") - c).abs() < 1e-9);
            assert!(!fit.model_mismatch);
        }
    }

    #[test]
    fn quadratic_symmetric_data_vertex() {
        let pts = curve([-2.0, -1.0, 0.0, 1.0, 2.0].map(|d| 0.4 + d * 0.1), |x| {
            (x - 0.4).abs().powf(1.5)
        });
        let fit = fit_quadratic_vertex(&pts, 10.0).unwrap();
        assert!((fit.param("x0") - 0.4).abs() < 1e-12);
    }

    #[test]
    fn quadratic_linear_data_flags_mismatch() {
        let pts = curve((0..8).map(|i| i as f64 * 0.1), |x| 0.9 - 0.5 * x);
        let fit = fit_quadratic_vertex(&pts, 1.0).unwrap();
        assert!(fit.param("a").abs() < 1e-9);
        assert!(fit.model_mismatch);
        let concave = curve((0..8).map(|i| i as f64 * 0.1), |x| -(x - 0.3).powi(2));
        assert!(fit_quadratic_vertex(&concave, 1.0).unwrap().model_mismatch);
        assert!(fit_quadratic_vertex(&pts, 0.2).is_err());
    }

    #[test]
    fn tied_sinusoid_recovers_full_depth_curve() {
        let pts = curve((0..=24).map(|i| 2.0 + 0.5 * i as f64), |t| {
            0.5 * (-0.11 * t).exp() * (1.77 * t + 1.94).sin() + 1.0 - 0.5 * (-0.11 * t).exp()
        });
        let fit = fit_damped_sinusoid(&pts, SinusoidVariant::Tied).unwrap();
        for (k, v) in [("A", 0.5), ("gamma", 0.11), ("omega", 1.77), ("phi", 1.94)] {
            assert!((fit.param(k) / v - 1.0).abs() < 0.01, "{k}: {}", fit.param(k));
        }
    }

    #[test]
    fn free_sinusoid_recovers_half_depth_curve() {
        let pts = curve((0..=24).map(|i| 2.0 + 0.5 * i as f64), |t| {
            0.415 * (-0.09 * t).exp() * (1.19 * t + 2.12).sin() + 0.83 * (1.0 - 0.5 * (-0.11 * t).exp())
        });
        let fit = fit_damped_sinusoid(&pts, SinusoidVariant::Free).unwrap();
        let truth = [
            ("A", 0.415),
            ("gamma", 0.09),
            ("omega", 1.19),
            ("phi", 2.12),
            ("c", 0.83),
            ("A2", 0.5),
            ("gamma2", 0.11),
        ];
        for (k, v) in truth {
            assert!((fit.param(k) / v - 1.0).abs() < 0.01, "{k}: {:?}", fit.params);
        }
    }

    #[test]
    fn undamped_sinusoid_has_zero_gamma() {
        let pts = curve((0..40).map(|i| 0.3 * i as f64), |t| 0.3 * (1.3 * t + 0.4).sin() + 0.7);
        let fit = fit_damped_sinusoid(&pts, SinusoidVariant::Tied).unwrap();
        assert!(fit.param("gamma").abs() < 1e-6, "{}", fit.param("gamma"));
        assert!((fit.param("omega") - 1.3).abs() < 1e-6);
    }

    #[test]
    fn sinusoid_rejects_short_or_unspanned_data() {
        let few = curve((0..5).map(|i| i as f64), |t| t.sin());
        assert!(fit_damped_sinusoid(&few, SinusoidVariant::Tied).is_err());
        let slow = curve((0..10).map(|i| 0.1 * i as f64), |t| 0.2 * (0.5 * t).sin() + 0.8);
        assert!(fit_damped_sinusoid(&slow, SinusoidVariant::Tied).is_err());
    }

    #[test]
    fn lm_history_is_non_increasing() {
        let pts = curve((0..30).map(|i| 0.4 * i as f64), |t| {
            0.4 * (-0.1 * t).exp() * (1.5 * t + 0.3).sin() + 0.6
        });
        let v = SinusoidVariant::Free;
        let out = levenberg_marquardt(
            |p, t| v.eval(p, t),
            &pts,
            &[0.3, 0.0, 1.4, 0.0, 0.5, 0.0, 0.1],
            &v.bounds(),
            &LmSettings::default(),
        );
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.history.len() > 2);
    }

    #[test]
    fn plateau_detection() {
        let pts = curve((0..11).map(|i| 0.1 * i as f64), |x| {
            if x < 0.5 { 1.0 - 1.6 * x } else { 0.2 - 0.01 * x }
        });
        let p = detect_plateau(&pts, 0.1).unwrap();
        assert!((p.onset_param - 0.5).abs() < 1e-12);
        assert!((p.level - 0.1925).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fits_ignore_point_order(seed in 0u64..1000) {
            let pts = curve(ns(), |n| 1.2 / n + 0.1 + 0.02 * ((n + seed as f64) * 0.7).sin());
            let mut shuffled = pts.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                let j = rng.random_range(0..=i);
                shuffled.swap(i, j);
            }
            prop_assert_eq!(fit_inverse_n(&pts).unwrap(), fit_inverse_n(&shuffled).unwrap());
            let qa = fit_quadratic_vertex(&pts, 100.0).unwrap();
            let qb = fit_quadratic_vertex(&shuffled, 100.0).unwrap();
            prop_assert_eq!(qa, qb);
        }
    }
}
