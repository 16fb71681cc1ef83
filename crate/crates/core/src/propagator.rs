//! Spectral time evolution.
//!
//! Free flight is exact in wavevector space. Inside potential segments the
//! state is advanced by second-order Strang splitting, with consecutive
//! half-kinetic factors merged so each step costs one transform pair.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZenoError, invalid};
use crate::grid::{Grid, Wavefunction, window_probability};
use crate::measurement::MeasurementWindow;
use crate::potentials::{PotentialTimeline, Profile, Well};
use crate::spectral::FftPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    /// Chunk length for free flight when an absorbing boundary is active, µs.
    pub dt_free: f64,
    /// Split-step length inside potential segments, µs.
    pub dt_pulse: f64,
    /// Largest allowed |V|·dt_pulse, rad.
    pub phase_cap: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt_free: 0.5,
            dt_pulse: 1e-3,
            phase_cap: 0.5,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_pulse > 0.0) {
            return Err(invalid("dt_pulse", "must be positive"));
        }
        if !(self.dt_free >= self.dt_pulse) {
            return Err(invalid("dt_free", "must be >= dt_pulse"));
        }
        if !(self.phase_cap > 0.0 && self.phase_cap <= 0.5) {
            return Err(invalid("phase_cap", "must lie in (0, 0.5] rad"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Boundary {
    #[default]
    Periodic,
    /// Absorption rate rising as sin² over the outer `fraction` of the grid on
    /// each side, up to `rate` (1/µs) at the edge.
    Absorbing { fraction: f64, rate: f64 },
}

impl Boundary {
    /// Absorption rate profile, or `None` for a periodic grid.
    fn rates(&self, grid: &Grid) -> Option<Vec<f64>> {
        match *self {
            Boundary::Periodic => None,
            Boundary::Absorbing { fraction, rate } => {
                let half = 0.5 * grid.length();
                let mid = 0.5 * (grid.x_min + grid.x_max);
                let ramp = fraction * grid.length();
                Some(
                    grid.positions()
                        .into_iter()
                        .map(|x| {
                            let d = (((x - mid).abs() - (half - ramp)).max(0.0) / ramp).min(1.0);
                            rate * (0.5 * std::f64::consts::PI * d).sin().powi(2)
                        })
                        .collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_k: f64,
    pub window_prob: f64,
}

/// Observable snapshots recorded at requested times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableTrace {
    pub points: Vec<TracePoint>,
}

impl ObservableTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean_x,std_x,mean_k,window_prob")?;
        for p in &self.points {
            writeln!(
                out,
                "{:.9},{:.9e},{:.9e},{:.9e},{:.9e}",
                p.t, p.mean_x, p.std_x, p.mean_k, p.window_prob
            )?;
        }
        Ok(())
    }
}

/// Probe times plus the window used for the `window_prob` column.
#[derive(Debug, Clone, PartialEq)]
pub struct Probes {
    pub times: Vec<f64>,
    pub window: MeasurementWindow,
}

/// Reusable evolution kernel bound to one grid.
#[derive(Clone)]
pub struct Propagator {
    grid: Grid,
    kappa: f64,
    positions: Vec<f64>,
    k2: Vec<f64>,
    absorption: Option<Vec<f64>>,
    fft: FftPair,
}

impl Propagator {
    pub fn new(grid: Grid, kappa: f64) -> Result<Self> {
        Self::with_boundary(grid, kappa, Boundary::Periodic)
    }

    pub fn with_boundary(grid: Grid, kappa: f64, boundary: Boundary) -> Result<Self> {
        grid.validate()?;
        if !(kappa > 0.0) {
            return Err(invalid("kappa", "must be positive"));
        }
        if let Boundary::Absorbing { fraction, rate } = boundary {
            if !(fraction > 0.0 && fraction < 0.5) {
                return Err(invalid("boundary.fraction", "must lie in (0, 0.5)"));
            }
            if !(rate > 0.0) {
                return Err(invalid("boundary.rate", "must be positive"));
            }
        }
        Ok(Self {
            grid,
            kappa,
            positions: grid.positions(),
            k2: grid.wavevectors().into_iter().map(|k| k * k).collect(),
            absorption: boundary.rates(&grid),
            fft: FftPair::new(grid.n_points),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    fn check(&self, psi: &Wavefunction) -> Result<()> {
        if *psi.grid() != self.grid {
            return Err(ZenoError::GridMismatch("state and propagator grids differ".into()));
        }
        Ok(())
    }

    /// Per-step amplitude damping exp(−γ(x)·h).
    fn damping(&self, h: f64) -> Option<Vec<f64>> {
        self.absorption
            .as_ref()
            .map(|g| g.iter().map(|g| (-g * h).exp()).collect())
    }

    fn kinetic_phases(&self, t: f64) -> Vec<Complex64> {
        let c = -0.5 * self.kappa * t;
        self.k2.iter().map(|k2| Complex64::from_polar(1.0, c * k2)).collect()
    }

    /// Exact free flight, ψ̃(k) ← ψ̃(k)·exp(−iκk²t/2).
    pub fn evolve_free(&mut self, psi: &mut Wavefunction, t: f64, sc: &StepControl) -> Result<()> {
        self.check(psi)?;
        if !(t >= 0.0) {
            return Err(invalid("t", "free evolution time must be non-negative"));
        }
        if t == 0.0 {
            return Ok(());
        }
        let chunks = match self.absorption {
            None => 1,
            Some(_) => (t / sc.dt_free - 1e-9).ceil().max(1.0) as usize,
        };
        let h = t / chunks as f64;
        let phases = self.kinetic_phases(h);
        let mask = self.damping(h);
        let amps = psi.amplitudes_mut();
        for _ in 0..chunks {
            self.fft.forward(amps);
            amps.iter_mut().zip(&phases).for_each(|(z, p)| *z *= p);
            self.fft.inverse(amps);
            if let Some(mask) = &mask {
                amps.iter_mut().zip(mask).for_each(|(z, m)| *z *= m);
            }
        }
        Ok(())
    }

    /// Evolves under a static well for time `t`. Off wells use the exact free step.
    pub fn evolve_static(&mut self, psi: &mut Wavefunction, well: &Well, t: f64, sc: &StepControl) -> Result<()> {
        self.check(psi)?;
        if !(t >= 0.0) {
            return Err(invalid("t", "evolution time must be non-negative"));
        }
        if well.is_off() {
            return self.evolve_free(psi, t, sc);
        }
        if t == 0.0 {
            return Ok(());
        }
        let v = well.sample(&self.positions);
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let phase = vmax * sc.dt_pulse;
        if phase > sc.phase_cap * (1.0 + 1e-12) {
            return Err(ZenoError::PhaseCap {
                phase,
                cap: sc.phase_cap,
            });
        }
        let steps = (t / sc.dt_pulse - 1e-9).ceil().max(1.0) as usize;
        let dt = t / steps as f64;
        let half = self.kinetic_phases(0.5 * dt);
        let full = self.kinetic_phases(dt);
        let pot: Vec<Complex64> = match &self.damping(dt) {
            None => v.iter().map(|v| Complex64::from_polar(1.0, -v * dt)).collect(),
            Some(mask) => v
                .iter()
                .zip(mask)
                .map(|(v, m)| Complex64::from_polar(*m, -v * dt))
                .collect(),
        };
        let amps = psi.amplitudes_mut();
        self.fft.forward(amps);
        amps.iter_mut().zip(&half).for_each(|(z, p)| *z *= p);
        for step in 0..steps {
            self.fft.inverse(amps);
            amps.iter_mut().zip(&pot).for_each(|(z, p)| *z *= p);
            self.fft.forward(amps);
            let kin = if step + 1 == steps { &half } else { &full };
            amps.iter_mut().zip(kin).for_each(|(z, p)| *z *= p);
        }
        self.fft.inverse(amps);
        Ok(())
    }

    /// Runs `psi` through every segment of `timeline`, sampling observables at
    /// the probe times (clamped to the timeline span).
    pub fn evolve_timeline(
        &mut self,
        psi: &mut Wavefunction,
        timeline: &PotentialTimeline,
        waist: f64,
        sc: &StepControl,
        probes: Option<&Probes>,
    ) -> Result<ObservableTrace> {
        timeline.validate()?;
        sc.validate()?;
        let mut times: Vec<f64> = probes.map(|p| p.times.clone()).unwrap_or_default();
        times.sort_by(f64::total_cmp);
        let mut next = 0usize;
        let mut trace = ObservableTrace::default();
        let kappa = self.kappa;
        let record = |psi: &Wavefunction, t: f64, trace: &mut ObservableTrace| -> Result<()> {
            if let Some(p) = probes {
                let o = psi.moments(kappa, None);
                trace.points.push(TracePoint {
                    t,
                    mean_x: o.mean_x,
                    std_x: o.std_x,
                    mean_k: o.mean_k,
                    window_prob: window_probability(psi, &p.window)?,
                });
            }
            Ok(())
        };
        for seg in &timeline.segments {
            let well = seg.well(waist);
            let mut t = seg.t_start;
            while next < times.len() && times[next] <= seg.t_end + 1e-12 {
                let tp = times[next].max(seg.t_start);
                self.evolve_static(psi, &well, tp - t, sc)?;
                t = tp;
                record(psi, t, &mut trace)?;
                next += 1;
            }
            self.evolve_static(psi, &well, seg.t_end - t, sc)?;
        }
        while next < times.len() {
            record(psi, timeline.duration(), &mut trace)?;
            next += 1;
        }
        Ok(trace)
    }
}

/// Convenience wrapper: free flight on a periodic grid.
pub fn evolve_free(psi: &Wavefunction, kappa: f64, t: f64) -> Result<Wavefunction> {
    let mut out = psi.clone();
    Propagator::new(*psi.grid(), kappa)?.evolve_free(&mut out, t, &StepControl::default())?;
    Ok(out)
}

/// Convenience wrapper: timeline evolution on a periodic grid.
pub fn evolve_timeline(
    psi: &Wavefunction,
    kappa: f64,
    timeline: &PotentialTimeline,
    waist: f64,
    sc: &StepControl,
    probes: Option<&Probes>,
) -> Result<(Wavefunction, ObservableTrace)> {
    let mut out = psi.clone();
    let trace = Propagator::new(*psi.grid(), kappa)?.evolve_timeline(&mut out, timeline, waist, sc, probes)?;
    Ok((out, trace))
}

/// Eigenpair of a static well computed on a cropped subgrid.
#[derive(Debug, Clone)]
pub struct StationaryState {
    pub state: Wavefunction,
    pub energy: f64,
}

/// `n`-th eigenstate of the three-point finite-difference Hamiltonian of a
/// static well, restricted to |x − center| ≤ 5·waist (Dirichlet edges).
pub fn stationary_state(grid: &Grid, kappa: f64, well: &Well, n: usize) -> Result<StationaryState> {
    let modes = stationary_states(grid, kappa, well, n + 1)?;
    modes.into_iter().nth(n).ok_or(ZenoError::UnboundMode {
        requested: n,
        eigenvalue: f64::NAN,
    })
}

/// Modes `0..count` of a static well. Gaussian wells reject modes with
/// non-negative energy (unbound).
pub fn stationary_states(grid: &Grid, kappa: f64, well: &Well, count: usize) -> Result<Vec<StationaryState>> {
    grid.validate()?;
    if well.profile == Profile::Off || !(well.depth > 0.0) {
        return Err(invalid("depth", "stationary states need a trap with depth > 0"));
    }
    let dx = grid.dx();
    let lo = grid
        .positions()
        .iter()
        .position(|&x| x >= well.center - 5.0 * well.waist)
        .unwrap_or(0);
    let hi = grid
        .positions()
        .iter()
        .rposition(|&x| x <= well.center + 5.0 * well.waist)
        .unwrap_or(grid.n_points - 1);
    let m = hi + 1 - lo;
    if m < count + 2 {
        return Err(invalid("grid", "cropped subgrid too small for the requested modes"));
    }
    let off = -0.5 * kappa / (dx * dx);
    let diag: Vec<f64> = (lo..=hi).map(|j| kappa / (dx * dx) + well.value(grid.x(j))).collect();
    let tri = Tridiagonal { diag, off };

    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let energy = tri.eigenvalue(idx);
        if well.profile == Profile::Gaussian && energy >= 0.0 {
            return Err(ZenoError::UnboundMode {
                requested: idx,
                eigenvalue: energy,
            });
        }
        let vec = tri.eigenvector(energy, idx);
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.n_points];
        for (i, v) in vec.iter().enumerate() {
            amps[lo + i] = Complex64::new(*v, 0.0);
        }
        let mut state = Wavefunction::from_amplitudes(*grid, amps)?;
        state.normalize();
        out.push(StationaryState { state, energy });
    }
    Ok(out)
}

/// Exact propagator for one static well: the Fourier-kinetic Hamiltonian of
/// the whole periodic grid, diagonalized once. It is the zero-step limit of
/// the split-step scheme, so long pulses cost two matrix products instead of
/// thousands of transform pairs. No absorption is applied while it runs.
pub struct TrapEigenbasis {
    grid: Grid,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl TrapEigenbasis {
    /// Largest grid accepted; the decomposition is O(n³).
    pub const MAX_POINTS: usize = 2048;

    pub fn new(grid: &Grid, kappa: f64, well: &Well) -> Result<Self> {
        grid.validate()?;
        let n = grid.n_points;
        if n > Self::MAX_POINTS {
            return Err(invalid(
                "grid",
                format!("eigenbasis engine is capped at {} points", Self::MAX_POINTS),
            ));
        }
        // Kinetic matrix is circulant; its first row is the inverse transform of κk²/2.
        let mut row: Vec<Complex64> = grid
            .wavevectors()
            .iter()
            .map(|k| Complex64::new(0.5 * kappa * k * k, 0.0))
            .collect();
        FftPair::new(n).inverse(&mut row);
        let positions = grid.positions();
        let h = DMatrix::from_fn(n, n, |i, j| {
            let m = (i as isize - j as isize).rem_euclid(n as isize) as usize;
            let mut v = row[m].re;
            if i == j {
                v += well.value(positions[i]);
            }
            v
        });
        let eig = SymmetricEigen::new(h);
        Ok(Self {
            grid: *grid,
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// ψ ← V·exp(−iEt)·Vᵀψ.
    pub fn evolve(&self, psi: &mut Wavefunction, t: f64) -> Result<()> {
        if *psi.grid() != self.grid {
            return Err(ZenoError::GridMismatch("eigenbasis and state grids differ".into()));
        }
        if !(t >= 0.0) {
            return Err(invalid("t", "evolution time must be non-negative"));
        }
        let n = self.grid.n_points;
        let amps = psi.amplitudes_mut();
        let parts = DMatrix::from_fn(n, 2, |i, c| if c == 0 { amps[i].re } else { amps[i].im });
        let mut coeffs = self.vectors.tr_mul(&parts);
        for (i, e) in self.energies.iter().enumerate() {
            let z = Complex64::new(coeffs[(i, 0)], coeffs[(i, 1)]) * Complex64::from_polar(1.0, -e * t);
            coeffs[(i, 0)] = z.re;
            coeffs[(i, 1)] = z.im;
        }
        let back = &self.vectors * coeffs;
        for (i, z) in amps.iter_mut().enumerate() {
            *z = Complex64::new(back[(i, 0)], back[(i, 1)]);
        }
        Ok(())
    }

    /// Same as [`TrapEigenbasis::evolve`] for many states at once, as one matrix product.
    pub fn evolve_many(&self, states: &mut [Wavefunction], t: f64) -> Result<()> {
        if states.iter().any(|s| *s.grid() != self.grid) {
            return Err(ZenoError::GridMismatch("eigenbasis and state grids differ".into()));
        }
        if !(t >= 0.0) {
            return Err(invalid("t", "evolution time must be non-negative"));
        }
        if states.is_empty() || t == 0.0 {
            return Ok(());
        }
        let n = self.grid.n_points;
        let m = states.len();
        let parts = DMatrix::from_fn(n, 2 * m, |i, c| {
            let z = states[c / 2].amplitudes()[i];
            if c % 2 == 0 { z.re } else { z.im }
        });
        let mut coeffs = self.vectors.tr_mul(&parts);
        for (i, e) in self.energies.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, -e * t);
            for s in 0..m {
                let z = Complex64::new(coeffs[(i, 2 * s)], coeffs[(i, 2 * s + 1)]) * rot;
                coeffs[(i, 2 * s)] = z.re;
                coeffs[(i, 2 * s + 1)] = z.im;
            }
        }
        let back = &self.vectors * coeffs;
        for (s, state) in states.iter_mut().enumerate() {
            for (i, z) in state.amplitudes_mut().iter_mut().enumerate() {
                *z = Complex64::new(back[(i, 2 * s)], back[(i, 2 * s + 1)]);
            }
        }
        Ok(())
    }
}

/// Real symmetric tridiagonal matrix with constant off-diagonal.
struct Tridiagonal {
    diag: Vec<f64>,
    off: f64,
}

impl Tridiagonal {
    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    fn count_below(&self, x: f64) -> usize {
        let b2 = self.off * self.off;
        let mut q = 1.0;
        let mut count = 0;
        for (i, d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - x } else { d - x - b2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + b2.sqrt()).max(1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `idx`-th smallest eigenvalue by bisection.
    fn eigenvalue(&self, idx: usize) -> f64 {
        let r = 2.0 * self.off.abs();
        let mut lo = self.diag.iter().fold(f64::INFINITY, |m, d| m.min(d - r));
        let mut hi = self.diag.iter().fold(f64::NEG_INFINITY, |m, d| m.max(d + r));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Inverse iteration at a converged eigenvalue; the sign is fixed so the
    /// first lobe (from the left) is positive.
    fn eigenvector(&self, lambda: f64, idx: usize) -> Vec<f64> {
        let n = self.diag.len();
        let scale = self.diag.iter().fold(self.off.abs(), |m, d| m.max(d.abs()));
        let shift = lambda + 1e-13 * scale;
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.1 * ((i * 7919 + idx * 104_729) % 1013) as f64 / 1013.0)
            .collect();
        for _ in 0..4 {
            v = self.solve_shifted(shift, &v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * vmax)
            && *first < 0.0
        {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    }

    /// Solves (T − s·I)·y = rhs with partial pivoting (LAPACK gttrf-style).
    fn solve_shifted(&self, s: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let b = self.off;
        // Band storage of U: main, first and second superdiagonals.
        let mut d: Vec<f64> = self.diag.iter().map(|x| x - s).collect();
        let mut du = vec![b; n.saturating_sub(1)];
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut dl = vec![b; n.saturating_sub(1)];
        let mut swap = vec![false; n];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = f64::EPSILON;
                }
                let f = dl[i] / d[i];
                dl[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = f;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - f * d[i + 1];
                if i + 1 < n - 1 {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -f;
                }
                swap[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = f64::EPSILON;
        }
        let mut y = rhs.to_vec();
        for i in 0..n - 1 {
            if swap[i] {
                y.swap(i, i + 1);
                y[i + 1] -= dl[i] * y[i];
            } else {
                y[i + 1] -= dl[i] * y[i];
            }
        }
        y[n - 1] /= d[n - 1];
        if n > 1 {
            y[n - 2] = (y[n - 2] - du[n - 2] * y[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            y[i] = (y[i] - du[i] * y[i + 1] - du2[i] * y[i + 2]) / d[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gaussian_state;
    use crate::potentials::TimeBudget;
    use crate::units::{KAPPA_RB87, PhysicalParams, ground_state_width, trap_angular_frequency};

    const DEPTH: f64 = 301.2;
    const W: f64 = 1.1;

    fn sc() -> StepControl {
        StepControl::default()
    }

    #[test]
    fn step_control_invariants() {
        assert!(sc().validate().is_ok());
        let mut bad = sc();
        bad.phase_cap = 0.8;
        assert!(bad.validate().is_err());
        let mut bad = sc();
        bad.dt_free = 1e-4;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn free_zero_time_is_identity() {
        let g = Grid::new(-5.0, 5.0, 512).unwrap();
        let psi = gaussian_state(&g, 0.0, 0.2, 5.0).unwrap();
        assert_eq!(evolve_free(&psi, KAPPA_RB87, 0.0).unwrap(), psi);
        assert!(evolve_free(&psi, KAPPA_RB87, -1.0).is_err());
    }

    #[test]
    fn free_dispersion_closed_form() {
        let g = Grid::new(-2.0, 2.0, 4096).unwrap();
        let s0 = ground_state_width(&PhysicalParams::default()).unwrap();
        let psi = gaussian_state(&g, 0.0, s0, 0.0).unwrap();
        for t in [0.5, 2.0, 10.0] {
            let out = evolve_free(&psi, KAPPA_RB87, t).unwrap();
            let o = out.moments(KAPPA_RB87, None);
            let expected = s0 * (1.0 + (KAPPA_RB87 * t / (2.0 * s0 * s0)).powi(2)).sqrt();
            assert!(
                (o.std_x / expected - 1.0).abs() < 1e-8,
                "t={t}: {} vs {expected}",
                o.std_x
            );
        }
    }

    #[test]
    fn free_ehrenfest_drift() {
        let g = Grid::new(-2.0, 2.0, 4096).unwrap();
        let psi = gaussian_state(&g, -0.3, 0.05, 2.0).unwrap();
        let t = 20.0;
        let out = evolve_free(&psi, KAPPA_RB87, t).unwrap();
        let o = out.moments(KAPPA_RB87, None);
        assert!((o.mean_x - (-0.3 + KAPPA_RB87 * 2.0 * t)).abs() < 1e-8);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_timeline_equals_free_flight() {
        let g = Grid::new(-5.0, 5.0, 1024).unwrap();
        let psi = gaussian_state(&g, 0.0, 0.1, 20.0).unwrap();
        let tl = PotentialTimeline::pulse_train(12.0, 0, 0.0, 0.0, &[0.0], TimeBudget::Inclusive).unwrap();
        let (a, _) = evolve_timeline(&psi, KAPPA_RB87, &tl, W, &sc(), None).unwrap();
        let b = evolve_free(&psi, KAPPA_RB87, 12.0).unwrap();
        assert!(a.distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn coherent_state_oscillation() {
        let g = Grid::new(-0.6, 0.6, 1024).unwrap();
        let p = PhysicalParams::default();
        let omega = trap_angular_frequency(&p).unwrap();
        let s0 = ground_state_width(&p).unwrap();
        let d = 0.08;
        let psi = gaussian_state(&g, d, s0, 0.0).unwrap();
        let period = 2.0 * std::f64::consts::PI / omega;
        let tl = PotentialTimeline::new(vec![crate::potentials::Segment {
            t_start: 0.0,
            t_end: period,
            depth: DEPTH,
            center: 0.0,
            profile: Profile::Harmonic,
        }])
        .unwrap();
        let probes = Probes {
            times: (0..=16).map(|i| period * i as f64 / 16.0).collect(),
            window: MeasurementWindow::hard(0.0, W),
        };
        let mut control = sc();
        control.dt_pulse = 2e-4;
        let (_, trace) = evolve_timeline(&psi, KAPPA_RB87, &tl, W, &control, Some(&probes)).unwrap();
        assert_eq!(trace.points.len(), 17);
        for pt in &trace.points {
            let expected = d * (omega * pt.t).cos();
            assert!(
                (pt.mean_x - expected).abs() < 1e-4 * d,
                "t={} {} vs {}",
                pt.t,
                pt.mean_x,
                expected
            );
        }
    }

    #[test]
    fn phase_cap_enforced() {
        let g = Grid::new(-5.0, 5.0, 512).unwrap();
        let mut psi = gaussian_state(&g, 0.0, 0.1, 0.0).unwrap();
        let mut prop = Propagator::new(g, KAPPA_RB87).unwrap();
        let mut coarse = sc();
        coarse.dt_pulse = 0.01;
        let r = prop.evolve_static(&mut psi, &Well::gaussian(DEPTH, W, 0.0), 0.1, &coarse);
        assert!(matches!(r, Err(ZenoError::PhaseCap { .. })));
    }

    #[test]
    fn harmonic_spectrum_and_ground_state() {
        let g = Grid::new(-0.25, 0.25, 8192).unwrap();
        let p = PhysicalParams::default();
        let omega = trap_angular_frequency(&p).unwrap();
        let well = Well::harmonic(DEPTH, W, 0.0);
        let modes = stationary_states(&g, KAPPA_RB87, &well, 6).unwrap();
        for (n, m) in modes.iter().enumerate() {
            let expected = -DEPTH + omega * (n as f64 + 0.5);
            assert!((m.energy - expected).abs() < 1e-3 * omega, "n={n}");
        }
        let s0 = ground_state_width(&p).unwrap();
        let exact = gaussian_state(&g, 0.0, s0, 0.0).unwrap();
        let dist = modes[0].state.distance(&exact).unwrap();
        assert!(dist < 1e-6, "{dist}");
    }

    #[test]
    fn eigenbasis_matches_fine_split_step() {
        let g = Grid::new(-3.0, 3.0, 512).unwrap();
        let well = Well::gaussian(DEPTH, W, 0.1);
        let psi = gaussian_state(&g, 0.2, 0.05, 40.0).unwrap();
        let eig = TrapEigenbasis::new(&g, KAPPA_RB87, &well).unwrap();
        let mut a = psi.clone();
        eig.evolve(&mut a, 3.0).unwrap();
        let mut b = psi.clone();
        let sc = StepControl {
            dt_pulse: 1e-4,
            ..Default::default()
        };
        Propagator::new(g, KAPPA_RB87)
            .unwrap()
            .evolve_static(&mut b, &well, 3.0, &sc)
            .unwrap();
        assert!((a.norm_sqr() - 1.0).abs() < 1e-10);
        assert!(a.fidelity(&b).unwrap() > 1.0 - 1e-6, "{}", a.fidelity(&b).unwrap());
        let mut c = psi.clone();
        eig.evolve(&mut c, 0.0).unwrap();
        assert!(c.distance(&psi).unwrap() < 1e-12);
        let mut many = vec![psi.clone(), psi.shifted(7)];
        eig.evolve_many(&mut many, 3.0).unwrap();
        assert!(many[0].distance(&a).unwrap() < 1e-12);
        let mut d = psi.shifted(7);
        eig.evolve(&mut d, 3.0).unwrap();
        assert!(many[1].distance(&d).unwrap() < 1e-12);
    }

    #[test]
    fn shallow_gaussian_well_has_one_bound_mode() {
        let g = Grid::new(-8.0, 8.0, 2048).unwrap();
        let well = Well::gaussian(1e-3, W, 0.0);
        assert!(stationary_state(&g, KAPPA_RB87, &well, 0).is_ok());
        assert!(matches!(
            stationary_state(&g, KAPPA_RB87, &well, 1),
            Err(ZenoError::UnboundMode { .. })
        ));
    }

    #[test]
    fn bound_state_survives_a_pulse() {
        let g = Grid::new(-3.0, 3.0, 2048).unwrap();
        let well = Well::gaussian(DEPTH, W, 0.0);
        let ground = stationary_state(&g, KAPPA_RB87, &well, 0).unwrap();
        let mut psi = ground.state.clone();
        let mut prop = Propagator::new(g, KAPPA_RB87).unwrap();
        prop.evolve_static(&mut psi, &well, 5.0, &sc()).unwrap();
        let p = window_probability(&psi, &MeasurementWindow::hard(0.0, W)).unwrap();
        assert!(p >= 0.999);
        assert!(psi.fidelity(&ground.state).unwrap() > 0.999);
    }

    #[test]
    fn absorbing_boundary_removes_escaping_flux() {
        let g = Grid::new(-5.0, 5.0, 1024).unwrap();
        let psi = gaussian_state(&g, 0.0, 0.1, 150.0).unwrap();
        let mut prop = Propagator::with_boundary(
            g,
            KAPPA_RB87,
            Boundary::Absorbing {
                fraction: 0.1,
                rate: 4.0,
            },
        )
        .unwrap();
        let mut out = psi.clone();
        prop.evolve_free(&mut out, 60.0, &sc()).unwrap();
        // v = κk ≈ 0.11 µm/µs, so the packet has crossed into the ramp.
        assert!(out.norm_sqr() < 1e-3, "{}", out.norm_sqr());
    }
}
