//! Slow, independent references: dense eigendecomposition propagation on small
//! grids and closed-form Gaussian / coherent-state dynamics.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZenoError, invalid};
use crate::grid::{Grid, Wavefunction, gaussian_state};
use crate::potentials::Well;
use crate::propagator::{Propagator, StepControl};
use crate::units::{PhysicalParams, ground_state_width, trap_angular_frequency};

/// Largest grid accepted by the dense oracle.
pub const MAX_DENSE_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KineticStencil {
    /// Second-order three-point Laplacian with periodic wrap.
    ThreePoint,
    /// Exact Fourier-basis kinetic matrix; identical to the split-step kinetic operator.
    Fourier,
}

/// Real symmetric H = T + diag(V) on a small periodic grid, stored with its eigendecomposition.
pub struct DenseHamiltonian {
    grid: Grid,
    matrix: DMatrix<f64>,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl DenseHamiltonian {
    pub fn new(grid: &Grid, kappa: f64, well: &Well, stencil: KineticStencil) -> Result<Self> {
        grid.validate()?;
        let n = grid.n_points;
        if n > MAX_DENSE_POINTS {
            return Err(invalid(
                "grid",
                format!("dense oracle is capped at {MAX_DENSE_POINTS} points"),
            ));
        }
        let dx = grid.dx();
        let kinetic_row: Vec<f64> = match stencil {
            KineticStencil::ThreePoint => {
                let mut row = vec![0.0; n];
                row[0] = kappa / (dx * dx);
                row[1] = -0.5 * kappa / (dx * dx);
                row[n - 1] = -0.5 * kappa / (dx * dx);
                row
            }
            KineticStencil::Fourier => {
                let k = grid.wavevectors();
                (0..n)
                    .map(|m| {
                        k.iter().map(|kj| kj * kj * (kj * m as f64 * dx).cos()).sum::<f64>() * 0.5 * kappa / n as f64
                    })
                    .collect()
            }
        };
        let matrix = DMatrix::from_fn(n, n, |i, j| {
            let m = (i as isize - j as isize).rem_euclid(n as isize) as usize;
            let mut h = kinetic_row[m];
            if i == j {
                h += well.value(grid.x(i));
            }
            h
        });
        let eigen = SymmetricEigen::new(matrix.clone());
        Ok(Self {
            grid: *grid,
            matrix,
            eigen,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Largest |H − Hᵀ| entry.
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.eigen.eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }
}

/// ψ(t) = Σ e^{−iE t} |v⟩⟨v|ψ⟩ using the stored eigendecomposition.
pub fn dense_evolve(psi: &Wavefunction, h: &DenseHamiltonian, t: f64) -> Result<Wavefunction> {
    if *psi.grid() != h.grid {
        return Err(ZenoError::GridMismatch(
            "state and dense Hamiltonian grids differ".into(),
        ));
    }
    let vecs = &h.eigen.eigenvectors;
    let re = DVector::from_iterator(psi.grid().n_points, psi.amplitudes().iter().map(|z| z.re));
    let im = DVector::from_iterator(psi.grid().n_points, psi.amplitudes().iter().map(|z| z.im));
    let cre = vecs.tr_mul(&re);
    let cim = vecs.tr_mul(&im);
    let mut rot_re = DVector::zeros(cre.len());
    let mut rot_im = DVector::zeros(cre.len());
    for (i, e) in h.eigen.eigenvalues.iter().enumerate() {
        let c = Complex64::new(cre[i], cim[i]) * Complex64::from_polar(1.0, -e * t);
        rot_re[i] = c.re;
        rot_im[i] = c.im;
    }
    let out_re = vecs * rot_re;
    let out_im = vecs * rot_im;
    let amps = out_re
        .iter()
        .zip(out_im.iter())
        .map(|(r, i)| Complex64::new(*r, *i))
        .collect();
    let mut out = Wavefunction::from_amplitudes(*psi.grid(), amps)?;
    out.set_survival_weight(psi.survival_weight());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeGaussian {
    pub mean_x: f64,
    pub sigma_t: f64,
}

/// Closed-form free Gaussian: drift κk₀t and width σ₀·sqrt(1 + (κt/2σ₀²)²).
pub fn analytic_free_gaussian(kappa: f64, sigma0: f64, k0: f64, t: f64) -> Result<FreeGaussian> {
    if !(sigma0 > 0.0) {
        return Err(invalid("sigma0", "must be positive"));
    }
    let s = kappa * t / (2.0 * sigma0 * sigma0);
    Ok(FreeGaussian {
        mean_x: kappa * k0 * t,
        sigma_t: sigma0 * (1.0 + s * s).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub mean_x: f64,
    pub mean_k: f64,
}

/// Phase-space rotation of a coherent state displaced by `d` with mean
/// wavevector `k0` in a harmonic trap of angular frequency `omega`.
pub fn analytic_coherent_state(kappa: f64, d: f64, k0: f64, omega: f64, t: f64) -> Result<PhasePoint> {
    if !(omega > 0.0) {
        return Err(invalid("omega", "must be positive"));
    }
    let (s, c) = (omega * t).sin_cos();
    Ok(PhasePoint {
        mean_x: d * c + kappa * k0 / omega * s,
        mean_k: k0 * c - omega * d / kappa * s,
    })
}

/// One comparison of the production propagator against an independent reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    /// Measured discrepancy (or fidelity, see `higher_is_better`).
    pub value: f64,
    pub threshold: f64,
    pub higher_is_better: bool,
    pub passed: bool,
    pub seconds: f64,
}

impl OracleCheck {
    fn new(name: &str, value: f64, threshold: f64, higher_is_better: bool, started: Instant) -> Self {
        let passed = if higher_is_better {
            value > threshold
        } else {
            value < threshold
        };
        Self {
            name: name.into(),
            value,
            threshold,
            higher_is_better,
            passed,
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<OracleCheck>,
}

/// σ₀ = 0.1 µm packet spread freely for 45 µs; relative width error against the closed form.
pub fn check_free_dispersion(p: &PhysicalParams) -> Result<OracleCheck> {
    let start = Instant::now();
    let g = Grid::default();
    let (sigma0, t) = (0.1, 45.0);
    let mut psi = gaussian_state(&g, 0.0, sigma0, 0.0)?;
    Propagator::new(g, p.kappa)?.evolve_free(&mut psi, t, &StepControl::default())?;
    let width = psi.moments(p.kappa, None).std_x;
    let law = analytic_free_gaussian(p.kappa, sigma0, 0.0, t)?.sigma_t;
    Ok(OracleCheck::new(
        "free dispersion width, relative error",
        (width / law - 1.0).abs(),
        1e-6,
        false,
        start,
    ))
}

/// Split-step against the dense Fourier-kinetic exponential: 128 points, full-depth well, 2 µs.
pub fn check_dense_agreement(p: &PhysicalParams) -> Result<OracleCheck> {
    let start = Instant::now();
    let g = Grid::new(-0.32, 0.32, 128)?;
    let well = Well::gaussian(p.trap_depth, p.waist, 0.0);
    let h = DenseHamiltonian::new(&g, p.kappa, &well, KineticStencil::Fourier)?;
    let psi = gaussian_state(&g, 0.05, 0.025, 10.0)?;
    let exact = dense_evolve(&psi, &h, 2.0)?;
    let mut split = psi;
    Propagator::new(g, p.kappa)?.evolve_static(&mut split, &well, 2.0, &StepControl::default())?;
    Ok(OracleCheck::new(
        "split-step vs dense exponential, fidelity",
        exact.fidelity(&split)?,
        1.0 - 1e-6,
        true,
        start,
    ))
}

/// Ground-width packet displaced by 0.1 µm in the harmonic profile, evolved one period 2π/Ω.
pub fn check_coherent_periodicity(p: &PhysicalParams) -> Result<OracleCheck> {
    let start = Instant::now();
    let g = Grid::new(-0.6, 0.6, 512)?;
    let omega = trap_angular_frequency(p)?;
    let sigma0 = ground_state_width(p)?;
    let psi = gaussian_state(&g, 0.1, sigma0, 0.0)?;
    let mut out = psi.clone();
    let well = Well::harmonic(p.trap_depth, p.waist, 0.0);
    Propagator::new(g, p.kappa)?.evolve_static(&mut out, &well, 2.0 * PI / omega, &StepControl::default())?;
    // A full period returns the packet up to the global phase e^{-i(ω/2 - U₀)T}.
    Ok(OracleCheck::new(
        "coherent state after one period, fidelity",
        psi.fidelity(&out)?,
        0.999,
        true,
        start,
    ))
}

/// Dense harmonic eigenvalues against Ω(n + ½) − U₀ for n ≤ 5; worst error in units of Ω.
pub fn check_harmonic_spectrum(p: &PhysicalParams) -> Result<OracleCheck> {
    let start = Instant::now();
    let g = Grid::new(-0.16, 0.16, 256)?;
    let omega = trap_angular_frequency(p)?;
    let h = DenseHamiltonian::new(
        &g,
        p.kappa,
        &Well::harmonic(p.trap_depth, p.waist, 0.0),
        KineticStencil::Fourier,
    )?;
    let worst = h
        .eigenvalues()
        .iter()
        .take(6)
        .enumerate()
        .map(|(n, e)| (e - (-p.trap_depth + omega * (n as f64 + 0.5))).abs() / omega)
        .fold(0.0, f64::max);
    Ok(OracleCheck::new(
        "harmonic ladder, worst error / omega",
        worst,
        1e-3,
        false,
        start,
    ))
}

/// Three-point stencil free flight against the dispersion law, relative to the (dx/σ₀)² bound.
pub fn check_three_point_dispersion(p: &PhysicalParams) -> Result<OracleCheck> {
    let start = Instant::now();
    let g = Grid::new(-1.6, 1.6, 256)?;
    let h = DenseHamiltonian::new(&g, p.kappa, &Well::off(), KineticStencil::ThreePoint)?;
    let (sigma0, t) = (0.1, 20.0);
    let out = dense_evolve(&gaussian_state(&g, 0.0, sigma0, 0.0)?, &h, t)?;
    let width = out.moments(p.kappa, None).std_x;
    let law = analytic_free_gaussian(p.kappa, sigma0, 0.0, t)?.sigma_t;
    let bound = (g.dx() / sigma0).powi(2);
    Ok(OracleCheck::new(
        "three-point dispersion error / (dx/sigma)^2",
        (width / law - 1.0).abs() / bound,
        1.0,
        false,
        start,
    ))
}

/// Every oracle comparison, in a fixed order.
pub fn validation_suite(p: &PhysicalParams) -> Result<ValidationReport> {
    p.validate()?;
    let checks = vec![
        check_free_dispersion(p)?,
        check_dense_agreement(p)?,
        check_coherent_periodicity(p)?,
        check_harmonic_spectrum(p)?,
        check_three_point_dispersion(p)?,
    ];
    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
