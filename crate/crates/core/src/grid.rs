//! Uniform periodic 1D grid and wavefunction storage.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZenoError, invalid};
use crate::measurement::{MeasurementWindow, WindowProfile};
use crate::spectral::{FftPair, wavevectors};

/// Tolerance used when an operation requires a normalized input.
pub const NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            x_min: -20.0,
            x_max: 20.0,
            n_points: 4096,
        }
    }
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let g = Self { x_min, x_max, n_points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(invalid("grid", "x_max must exceed x_min"));
        }
        if self.n_points < 16 || !self.n_points.is_power_of_two() {
            return Err(invalid(
                "grid.n_points",
                format!("{} is not a power of two >= 16", self.n_points),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Wavevectors in FFT order, rad/µm.
    pub fn wavevectors(&self) -> Vec<f64> {
        wavevectors(self.n_points, self.dx())
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.dx()
    }

    /// Fails when `k_scale` is not comfortably below the Nyquist wavevector.
    pub fn check_resolves(&self, k_scale: f64) -> Result<()> {
        if k_scale >= self.nyquist() {
            return Err(invalid(
                "grid",
                format!(
                    "wavevector scale {k_scale:.1} rad/um exceeds Nyquist {:.1} rad/um",
                    self.nyquist()
                ),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.x_min && x < self.x_max
    }
}

/// Complex amplitudes on a [`Grid`] plus the survival weight accumulated over collapses.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
    survival_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_k: f64,
    pub energy: f64,
}

impl Wavefunction {
    pub fn from_amplitudes(grid: Grid, amplitudes: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if amplitudes.len() != grid.n_points {
            return Err(ZenoError::GridMismatch(format!(
                "{} amplitudes for {} grid points",
                amplitudes.len(),
                grid.n_points
            )));
        }
        Ok(Self {
            grid,
            amplitudes,
            survival_weight: 1.0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn survival_weight(&self) -> f64 {
        self.survival_weight
    }

    pub(crate) fn set_survival_weight(&mut self, w: f64) {
        self.survival_weight = w.clamp(0.0, 1.0);
    }

    /// Σ|ψ|²·dx.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// Rescales to unit norm and returns the norm² before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let n2 = self.norm_sqr();
        if n2 > 0.0 {
            let s = 1.0 / n2.sqrt();
            self.amplitudes.iter_mut().for_each(|z| *z *= s);
        }
        n2
    }

    pub fn probability_density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// ⟨self|other⟩ = Σ conj(a)·b·dx.
    pub fn inner(&self, other: &Wavefunction) -> Result<Complex64> {
        self.same_grid(other)?;
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.dx())
    }

    /// |⟨a|b⟩|² / (‖a‖²‖b‖²).
    pub fn fidelity(&self, other: &Wavefunction) -> Result<f64> {
        let ov = self.inner(other)?;
        Ok(ov.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    /// L² distance ‖a − b‖.
    pub fn distance(&self, other: &Wavefunction) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.dx()).sqrt())
    }

    pub fn conjugate(&self) -> Wavefunction {
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|z| *z = z.conj());
        out
    }

    pub fn scaled(&self, c: Complex64) -> Wavefunction {
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|z| *z *= c);
        out
    }

    /// Cyclic shift of the amplitudes by `m` sites toward +x.
    pub fn shifted(&self, m: isize) -> Wavefunction {
        let mut out = self.clone();
        let n = self.amplitudes.len() as isize;
        out.amplitudes.rotate_right(m.rem_euclid(n) as usize);
        out
    }

    pub(crate) fn same_grid(&self, other: &Wavefunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(ZenoError::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Probability within `n_guard` points of either grid edge.
    pub fn boundary_probability(&self, n_guard: usize) -> f64 {
        let n = self.amplitudes.len();
        let g = n_guard.min(n / 2);
        let edge: f64 = self.amplitudes[..g]
            .iter()
            .chain(&self.amplitudes[n - g..])
            .map(|z| z.norm_sqr())
            .sum();
        edge * self.grid.dx()
    }

    /// Wavevector-space amplitudes, scaled so that Σ|φ|²·dk = Σ|ψ|²·dx.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut phi = self.amplitudes.clone();
        FftPair::new(self.grid.n_points).forward(&mut phi);
        let dx = self.grid.dx();
        let s = dx / (2.0 * PI).sqrt();
        phi.iter_mut().for_each(|z| *z *= s);
        phi
    }

    /// Σ|φ|²·dk computed in wavevector space.
    pub fn spectral_norm_sqr(&self) -> f64 {
        let dk = 2.0 * PI / self.grid.length();
        self.spectrum().iter().map(|z| z.norm_sqr()).sum::<f64>() * dk
    }

    /// Moments normalized by the current norm, so they are usable on states
    /// that have leaked into an absorbing boundary.
    pub fn moments(&self, kappa: f64, potential: Option<&[f64]>) -> Observables {
        let rho = self.probability_density();
        let total: f64 = rho.iter().sum();
        if total <= 0.0 {
            return Observables {
                mean_x: f64::NAN,
                std_x: f64::NAN,
                mean_k: f64::NAN,
                energy: f64::NAN,
            };
        }
        let mut mx = 0.0;
        let mut mx2 = 0.0;
        let mut vpot = 0.0;
        for (j, r) in rho.iter().enumerate() {
            let x = self.grid.x(j);
            mx += x * r;
            mx2 += x * x * r;
            if let Some(v) = potential {
                vpot += v[j] * r;
            }
        }
        mx /= total;
        mx2 /= total;
        vpot /= total;

        let mut phi = self.amplitudes.clone();
        FftPair::new(self.grid.n_points).forward(&mut phi);
        let k = self.grid.wavevectors();
        let mut ptot = 0.0;
        let mut mk = 0.0;
        let mut mk2 = 0.0;
        for (z, kj) in phi.iter().zip(&k) {
            let p = z.norm_sqr();
            ptot += p;
            mk += kj * p;
            mk2 += kj * kj * p;
        }
        Observables {
            mean_x: mx,
            std_x: (mx2 - mx * mx).max(0.0).sqrt(),
            mean_k: mk / ptot,
            energy: 0.5 * kappa * mk2 / ptot + vpot,
        }
    }

    /// Writes `x,re,im,prob` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,re,im,prob")?;
        for (j, z) in self.amplitudes.iter().enumerate() {
            writeln!(
                out,
                "{:.9e},{:.9e},{:.9e},{:.9e}",
                self.grid.x(j),
                z.re,
                z.im,
                z.norm_sqr()
            )?;
        }
        Ok(())
    }
}

/// Fewest grid points per σ accepted by [`gaussian_state`]. The default grid
/// gives the trap ground state just over two.
pub const MIN_POINTS_PER_SIGMA: f64 = 2.0;

/// Normalized Gaussian ψ(x) ∝ exp(−(x−c)²/4σ²)·exp(i k₀ x); |ψ|² has standard deviation σ.
pub fn gaussian_state(grid: &Grid, center: f64, sigma: f64, k0: f64) -> Result<Wavefunction> {
    grid.validate()?;
    let dx = grid.dx();
    if !(sigma >= MIN_POINTS_PER_SIGMA * dx) {
        return Err(invalid(
            "sigma",
            format!("{sigma} um is not resolved by dx = {dx:.3e} um (need >= {MIN_POINTS_PER_SIGMA} dx)"),
        ));
    }
    if !grid.contains(center) {
        return Err(invalid("center", format!("{center} outside the grid")));
    }
    let edge = (center - grid.x_min).min(grid.x_max - center);
    let edge_density = (-(edge * edge) / (2.0 * sigma * sigma)).exp();
    if edge_density > 1e-12 {
        return Err(ZenoError::BoundaryContact(edge_density));
    }
    let amps = (0..grid.n_points)
        .map(|j| {
            let x = grid.x(j);
            let d = x - center;
            Complex64::from_polar((-(d * d) / (4.0 * sigma * sigma)).exp(), k0 * x)
        })
        .collect();
    let mut psi = Wavefunction::from_amplitudes(*grid, amps)?;
    psi.normalize();
    Ok(psi)
}

/// Probability inside a hard or Gaussian measurement window.
///
/// Bound-subspace windows depend on the trap and are evaluated through
/// [`crate::measurement::Projector::probability`].
pub fn window_probability(psi: &Wavefunction, win: &MeasurementWindow) -> Result<f64> {
    let g = psi.grid();
    if win.center + win.radius < g.x_min || win.center - win.radius > g.x_max {
        return Err(invalid("window", "window lies outside the grid"));
    }
    let dx = g.dx();
    let p: f64 = match win.profile {
        WindowProfile::Hard => psi
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(j, _)| (g.x(*j) - win.center).abs() <= win.radius)
            .map(|(_, z)| z.norm_sqr())
            .sum(),
        WindowProfile::Gaussian => {
            if win.radius <= 0.0 {
                return Ok(0.0);
            }
            psi.amplitudes
                .iter()
                .enumerate()
                .map(|(j, z)| {
                    let d = g.x(j) - win.center;
                    z.norm_sqr() * (-(d * d) / (win.radius * win.radius)).exp()
                })
                .sum()
        }
        WindowProfile::BoundSubspace { .. } => {
            return Err(invalid(
                "window",
                "bound-subspace windows need a trap; use Projector::probability",
            ));
        }
    };
    Ok((p * dx).clamp(0.0, 1.0))
}

/// Spectral-accuracy expectation values of a normalized state.
pub fn observables(psi: &Wavefunction, kappa: f64, potential: Option<&[f64]>) -> Result<Observables> {
    let n2 = psi.norm_sqr();
    if (n2 - 1.0).abs() > NORM_TOL {
        return Err(ZenoError::NotNormalized(n2));
    }
    if let Some(v) = potential
        && v.len() != psi.grid.n_points
    {
        return Err(ZenoError::GridMismatch("potential length".into()));
    }
    Ok(psi.moments(kappa, potential))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{KAPPA_RB87, PhysicalParams, ground_state_width};

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 2048).unwrap()
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid::new(0.0, 1.0, 100).is_err());
        assert!(Grid::new(0.0, 1.0, 8).is_err());
        assert!(Grid::new(1.0, 0.0, 64).is_err());
        let g = Grid::new(-2.0, 2.0, 64).unwrap();
        assert_eq!(g.dx(), 4.0 / 64.0);
        assert!(g.check_resolves(g.nyquist() * 0.9).is_ok());
        assert!(g.check_resolves(g.nyquist() * 1.1).is_err());
    }

    #[test]
    fn gaussian_normalized_and_centered() {
        let psi = gaussian_state(&grid(), 0.0, 0.5, 0.0).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        let o = observables(&psi, KAPPA_RB87, None).unwrap();
        assert!(o.mean_x.abs() < 1e-12);
        assert!(o.mean_k.abs() < 1e-9);
        assert!((o.std_x - 0.5).abs() < 1e-9);
        assert_eq!(psi.survival_weight(), 1.0);
    }

    #[test]
    fn gaussian_mean_wavevector() {
        let g = Grid::new(-1.0, 1.0, 4096).unwrap();
        let psi = gaussian_state(&g, 0.1, 0.0207, 2.0).unwrap();
        let o = observables(&psi, KAPPA_RB87, None).unwrap();
        assert!((o.mean_k - 2.0).abs() < 1e-9, "{}", o.mean_k);
        assert!((o.mean_x - 0.1).abs() < 1e-9);
    }

    #[test]
    fn gaussian_rejections() {
        let g = grid();
        assert!(gaussian_state(&g, 0.0, 1.9 * g.dx(), 0.0).is_err());
        let d = Grid::default();
        assert!(gaussian_state(&d, 0.0, ground_state_width(&PhysicalParams::default()).unwrap(), 0.0).is_ok());
        assert!(gaussian_state(&g, 11.0, 0.5, 0.0).is_err());
        assert!(matches!(
            gaussian_state(&g, 9.0, 0.5, 0.0),
            Err(ZenoError::BoundaryContact(_))
        ));
    }

    #[test]
    fn kinetic_energy_matches_gaussian_moment() {
        let sigma = 0.3;
        let psi = gaussian_state(&grid(), 0.0, sigma, 0.0).unwrap();
        let o = observables(&psi, KAPPA_RB87, None).unwrap();
        let expected = KAPPA_RB87 / 2.0 / (4.0 * sigma * sigma);
        assert!((o.energy - expected).abs() / expected < 1e-10);
    }

    #[test]
    fn shift_covariance() {
        let psi = gaussian_state(&grid(), -1.0, 0.4, 3.0).unwrap();
        let a = observables(&psi, KAPPA_RB87, None).unwrap();
        let b = observables(&psi.shifted(37), KAPPA_RB87, None).unwrap();
        assert!((b.mean_x - a.mean_x - 37.0 * psi.grid().dx()).abs() < 1e-12);
    }

    #[test]
    fn hard_window_erf_oracle() {
        // ∫_{-1}^{1} N(0,1) = erf(1/√2) = 0.682689492137...
        let psi = gaussian_state(&Grid::new(-16.0, 16.0, 8192).unwrap(), 0.0, 1.0, 0.0).unwrap();
        let win = MeasurementWindow::hard(0.0, 1.0);
        let p = window_probability(&psi, &win).unwrap();
        assert!((p - 0.682_689_492_137).abs() < 2e-3, "{p}");
    }

    #[test]
    fn window_limits() {
        let psi = gaussian_state(&grid(), 0.0, 0.5, 0.0).unwrap();
        let all = window_probability(&psi, &MeasurementWindow::hard(0.0, 100.0)).unwrap();
        assert!((all - 1.0).abs() < 1e-12);
        let none = window_probability(&psi, &MeasurementWindow::hard(0.0, 0.0)).unwrap();
        assert!(none < 1e-2);
        let none = window_probability(&psi, &MeasurementWindow::gaussian(0.0, 0.0)).unwrap();
        assert_eq!(none, 0.0);
        assert!(window_probability(&psi, &MeasurementWindow::hard(50.0, 1.0)).is_err());
    }

    #[test]
    fn unnormalized_rejected() {
        let psi = gaussian_state(&grid(), 0.0, 0.5, 0.0).unwrap();
        let half = psi.scaled(Complex64::new(0.5, 0.0));
        assert!(matches!(
            observables(&half, KAPPA_RB87, None),
            Err(ZenoError::NotNormalized(_))
        ));
    }

    #[test]
    fn csv_snapshot_layout() {
        let psi = gaussian_state(&Grid::new(-4.0, 4.0, 64).unwrap(), 0.0, 0.5, 0.0).unwrap();
        let mut buf = Vec::new();
        psi.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 65);
        assert!(text.starts_with("x,re,im,prob\n"));
    }
}
