//! Spatial measurement model: window projector, collapse with renormalization,
//! finite-duration pulses M(τ) = U_trap·M_b, and the stepped transport operator.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZenoError, invalid};
use crate::grid::{Grid, Wavefunction};
use crate::potentials::Well;
use crate::propagator::{Propagator, StepControl, stationary_states};

/// Collapse survivals below this terminate the trajectory as lost.
pub const LOST_THRESHOLD: f64 = 1e-12;

/// What counts as a lost atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossAccounting {
    /// Collapsed out at a pulse, or outside the window at the final image.
    #[default]
    Combined,
    /// Only weight removed before the final image: collapses, plus anything the
    /// absorbing boundary swallowed.
    Collapse,
}

impl LossAccounting {
    /// Loss from the remaining norm and the probability found in the final window.
    pub fn loss(self, norm: f64, kept: f64) -> f64 {
        match self {
            Self::Combined => 1.0 - kept,
            Self::Collapse => 1.0 - norm,
        }
        .clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum WindowProfile {
    /// Indicator of |x − c| ≤ radius.
    #[default]
    Hard,
    /// Amplitude filter exp(−(x−c)²/2r²).
    Gaussian,
    /// Projector onto the lowest `n_modes` eigenstates of the trap.
    BoundSubspace { n_modes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementWindow {
    pub center: f64,
    pub radius: f64,
    pub profile: WindowProfile,
}

impl MeasurementWindow {
    pub fn hard(center: f64, radius: f64) -> Self {
        Self {
            center,
            radius,
            profile: WindowProfile::Hard,
        }
    }

    pub fn gaussian(center: f64, radius: f64) -> Self {
        Self {
            center,
            radius,
            profile: WindowProfile::Gaussian,
        }
    }

    pub fn bound_subspace(center: f64, radius: f64, n_modes: usize) -> Self {
        Self {
            center,
            radius,
            profile: WindowProfile::BoundSubspace { n_modes },
        }
    }

    pub fn centered_at(&self, center: f64) -> Self {
        Self { center, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(invalid("window.radius", "must be positive"));
        }
        if let WindowProfile::BoundSubspace { n_modes } = self.profile
            && n_modes == 0
        {
            return Err(invalid("window.n_modes", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum ProjectorOp {
    /// Real amplitude multipliers (hard / Gaussian windows).
    Filter(Vec<f64>),
    /// Orthonormal real modes (bound-subspace windows).
    Modes(Vec<Vec<f64>>),
}

/// A window realized on a grid, ready to act on states.
#[derive(Debug, Clone)]
pub struct Projector {
    window: MeasurementWindow,
    grid: Grid,
    op: ProjectorOp,
}

impl Projector {
    /// Builds the projector. Bound-subspace windows need the trap and κ; modes
    /// that are not bound at the trap depth are dropped, and at least one must remain.
    pub fn new(grid: &Grid, window: &MeasurementWindow, trap: Option<(&Well, f64)>) -> Result<Self> {
        window.validate()?;
        let op = match window.profile {
            WindowProfile::Hard => ProjectorOp::Filter(
                grid.positions()
                    .iter()
                    .map(|x| {
                        if (x - window.center).abs() <= window.radius {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            ),
            WindowProfile::Gaussian => {
                let r2 = window.radius * window.radius;
                ProjectorOp::Filter(
                    grid.positions()
                        .iter()
                        .map(|x| (-(x - window.center).powi(2) / (2.0 * r2)).exp())
                        .collect(),
                )
            }
            WindowProfile::BoundSubspace { n_modes } => {
                let (well, kappa) = trap.ok_or_else(|| invalid("window", "bound-subspace window needs a trap"))?;
                let well = Well {
                    center: window.center,
                    ..*well
                };
                let mut modes = Vec::with_capacity(n_modes);
                for m in 0..n_modes {
                    match stationary_states(grid, kappa, &well, m + 1) {
                        Ok(mut v) => {
                            let s = v.pop().expect("requested m + 1 modes");
                            modes.push(s.state.amplitudes().iter().map(|z| z.re).collect());
                        }
                        Err(ZenoError::UnboundMode { .. }) if m > 0 => break,
                        Err(e) => return Err(e),
                    }
                }
                ProjectorOp::Modes(modes)
            }
        };
        Ok(Self {
            window: *window,
            grid: *grid,
            op,
        })
    }

    pub fn window(&self) -> &MeasurementWindow {
        &self.window
    }

    /// Number of modes spanned by a bound-subspace projector.
    pub fn rank(&self) -> Option<usize> {
        match &self.op {
            ProjectorOp::Modes(m) => Some(m.len()),
            ProjectorOp::Filter(_) => None,
        }
    }

    /// ‖M_b ψ‖² without renormalization.
    pub fn probability(&self, psi: &Wavefunction) -> Result<f64> {
        self.check(psi)?;
        let dx = self.grid.dx();
        Ok(match &self.op {
            ProjectorOp::Filter(f) => {
                psi.amplitudes()
                    .iter()
                    .zip(f)
                    .map(|(z, w)| z.norm_sqr() * w * w)
                    .sum::<f64>()
                    * dx
            }
            ProjectorOp::Modes(modes) => modes.iter().map(|m| overlap(m, psi.amplitudes(), dx).norm_sqr()).sum(),
        })
    }

    /// Replaces ψ by M_b ψ and returns ‖M_b ψ‖².
    pub fn apply(&self, psi: &mut Wavefunction) -> Result<f64> {
        self.check(psi)?;
        let dx = self.grid.dx();
        match &self.op {
            ProjectorOp::Filter(f) => {
                psi.amplitudes_mut().iter_mut().zip(f).for_each(|(z, w)| *z *= w);
            }
            ProjectorOp::Modes(modes) => {
                let coeffs: Vec<Complex64> = modes.iter().map(|m| overlap(m, psi.amplitudes(), dx)).collect();
                let amps = psi.amplitudes_mut();
                amps.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (m, c) in modes.iter().zip(&coeffs) {
                    amps.iter_mut().zip(m).for_each(|(z, v)| *z += c * v);
                }
            }
        }
        Ok(psi.norm_sqr())
    }

    fn check(&self, psi: &Wavefunction) -> Result<()> {
        if *psi.grid() != self.grid {
            return Err(ZenoError::GridMismatch("projector and state grids differ".into()));
        }
        Ok(())
    }
}

fn overlap(mode: &[f64], amps: &[Complex64], dx: f64) -> Complex64 {
    mode.iter().zip(amps).map(|(m, z)| z * m).sum::<Complex64>() * dx
}

/// Collapse ψ → M_b ψ / ‖M_b ψ‖. Returns the renormalized state and the
/// survival ‖M_b ψ‖²; the state's survival weight is multiplied by it.
pub fn project(psi: &Wavefunction, projector: &Projector) -> Result<(Wavefunction, f64)> {
    let n2 = psi.norm_sqr();
    if n2 > 1.0 + 1e-8 {
        return Err(ZenoError::NotNormalized(n2));
    }
    let mut out = psi.clone();
    let survival = projector.apply(&mut out)?;
    if survival < LOST_THRESHOLD {
        return Err(ZenoError::TrajectoryLost(survival));
    }
    out.normalize();
    out.set_survival_weight(psi.survival_weight() * survival);
    Ok((out, survival))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub index: usize,
    pub survival: f64,
    pub pre_mean_x: f64,
    pub post_mean_x: f64,
}

pub fn write_records_csv<W: Write>(records: &[MeasurementRecord], mut out: W) -> Result<()> {
    writeln!(out, "index,survival,pre_mean_x,post_mean_x")?;
    for r in records {
        writeln!(
            out,
            "{},{:.12e},{:.9e},{:.9e}",
            r.index, r.survival, r.pre_mean_x, r.post_mean_x
        )?;
    }
    Ok(())
}

/// Trap pulse parameters shared by the finite-duration measurement operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub tau: f64,
    pub depth: f64,
    pub center: f64,
    pub waist: f64,
}

impl Pulse {
    pub fn well(&self) -> Well {
        Well::gaussian(self.depth, self.waist, self.center)
    }
}

/// M(τ) = U_trap(τ)·M_b: collapse onto the window at the pulse center, then
/// evolve in the Gaussian well for τ.
pub fn measure_finite(
    prop: &mut Propagator,
    psi: &Wavefunction,
    pulse: &Pulse,
    projector: &Projector,
    sc: &StepControl,
) -> Result<(Wavefunction, f64)> {
    if !(pulse.tau >= 0.0) {
        return Err(invalid("tau", "must be non-negative"));
    }
    let (mut out, survival) = project(psi, projector)?;
    prop.evolve_static(&mut out, &pulse.well(), pulse.tau, sc)?;
    Ok((out, survival))
}

/// Potential pulse without collapse; the norm and survival weight are untouched.
pub fn measure_unitary(
    prop: &mut Propagator,
    psi: &Wavefunction,
    pulse: &Pulse,
    sc: &StepControl,
) -> Result<Wavefunction> {
    if !(pulse.tau > 0.0) {
        return Err(invalid("tau", "must be positive"));
    }
    let mut out = psi.clone();
    prop.evolve_static(&mut out, &pulse.well(), pulse.tau, sc)?;
    Ok(out)
}

/// Stepped transport: for j in 0..steps apply M(τ) at center j·Δr and then
/// free flight for `gap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportPlan {
    pub steps: usize,
    pub delta_r: f64,
    pub tau: f64,
    pub gap: f64,
    pub depth: f64,
    pub waist: f64,
}

#[derive(Debug, Clone)]
pub struct TransportOutcome {
    pub state: Wavefunction,
    pub survival: f64,
    pub final_mean_x: f64,
    pub records: Vec<MeasurementRecord>,
    /// Set when a collapse found no support; `survival` is the weight at termination.
    pub lost: bool,
}

pub fn composite_transport_operator(
    prop: &mut Propagator,
    psi: &Wavefunction,
    plan: &TransportPlan,
    window: &MeasurementWindow,
    sc: &StepControl,
) -> Result<TransportOutcome> {
    let grid = *psi.grid();
    let last = plan.steps.saturating_sub(1) as f64 * plan.delta_r;
    let (lo, hi) = (last.min(0.0) - window.radius, last.max(0.0) + window.radius);
    if !grid.contains(lo) || !grid.contains(hi) {
        return Err(invalid("delta_r", "transport path leaves the grid"));
    }
    let kappa = prop.kappa();
    let mut state = psi.clone();
    let mut records = Vec::with_capacity(plan.steps);
    for j in 0..plan.steps {
        let center = j as f64 * plan.delta_r;
        let pulse = Pulse {
            tau: plan.tau,
            depth: plan.depth,
            center,
            waist: plan.waist,
        };
        let projector = Projector::new(&grid, &window.centered_at(center), Some((&pulse.well(), kappa)))?;
        let pre = state.moments(kappa, None).mean_x;
        match measure_finite(prop, &state, &pulse, &projector, sc) {
            Ok((next, survival)) => {
                state = next;
                records.push(MeasurementRecord {
                    index: j,
                    survival,
                    pre_mean_x: pre,
                    post_mean_x: state.moments(kappa, None).mean_x,
                });
            }
            Err(ZenoError::TrajectoryLost(_)) => {
                let survival = state.survival_weight();
                return Ok(TransportOutcome {
                    final_mean_x: f64::NAN,
                    state,
                    survival,
                    records,
                    lost: true,
                });
            }
            Err(e) => return Err(e),
        }
        prop.evolve_free(&mut state, plan.gap, sc)?;
    }
    let final_mean_x = state.moments(kappa, None).mean_x;
    Ok(TransportOutcome {
        survival: state.survival_weight(),
        final_mean_x,
        state,
        records,
        lost: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_state, window_probability};
    use crate::units::{KAPPA_RB87, PhysicalParams, ground_state_width, trap_angular_frequency};

    const DEPTH: f64 = 301.2;
    const W: f64 = 1.1;

    fn hard(grid: &Grid, c: f64, r: f64) -> Projector {
        Projector::new(grid, &MeasurementWindow::hard(c, r), None).unwrap()
    }

    #[test]
    fn full_window_is_identity() {
        let g = Grid::new(-8.0, 8.0, 1024).unwrap();
        let psi = gaussian_state(&g, 0.0, 1.0, 0.0).unwrap();
        let (out, s) = project(&psi, &hard(&g, 0.0, 100.0)).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(out.distance(&psi).unwrap() < 1e-12);
    }

    #[test]
    fn disjoint_window_loses_trajectory() {
        let g = Grid::new(-8.0, 8.0, 1024).unwrap();
        let psi = gaussian_state(&g, -4.0, 0.2, 0.0).unwrap();
        assert!(matches!(
            project(&psi, &hard(&g, 4.0, 0.5)),
            Err(ZenoError::TrajectoryLost(_))
        ));
    }

    #[test]
    fn survival_is_erf_and_window_probability() {
        let g = Grid::new(-16.0, 16.0, 8192).unwrap();
        let psi = gaussian_state(&g, 0.0, 1.0, 0.0).unwrap();
        let win = MeasurementWindow::hard(0.0, 1.0);
        let (out, s) = project(&psi, &Projector::new(&g, &win, None).unwrap()).unwrap();
        assert!((s - 0.682_689_492).abs() < 2e-3);
        assert!((s - window_probability(&psi, &win).unwrap()).abs() < 1e-12);
        assert!((out.survival_weight() - s).abs() < 1e-15);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent() {
        let g = Grid::new(-5.0, 5.0, 2048).unwrap();
        let psi = gaussian_state(&g, 0.3, 0.5, 12.0).unwrap();
        let well = Well::gaussian(DEPTH, W, 0.0);
        for win in [
            MeasurementWindow::hard(0.0, 0.6),
            MeasurementWindow::bound_subspace(0.0, W, 3),
        ] {
            let p = Projector::new(&g, &win, Some((&well, KAPPA_RB87))).unwrap();
            let (once, _) = project(&psi, &p).unwrap();
            let (twice, s2) = project(&once, &p).unwrap();
            assert!((s2 - 1.0).abs() < 1e-10, "{s2}");
            assert!(once.fidelity(&twice).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn cumulative_survival_is_product() {
        let g = Grid::new(-6.0, 6.0, 1024).unwrap();
        let mut prop = Propagator::new(g, KAPPA_RB87).unwrap();
        let sc = StepControl::default();
        let mut psi = gaussian_state(&g, 0.0, 0.05, 60.0).unwrap();
        let p = hard(&g, 0.0, 0.5);
        let mut product = 1.0;
        for _ in 0..5 {
            prop.evolve_free(&mut psi, 4.0, &sc).unwrap();
            let (next, s) = project(&psi, &p).unwrap();
            product *= s;
            psi = next;
        }
        assert!(product < 0.99);
        assert!((psi.survival_weight() - product).abs() < 1e-10);
    }

    #[test]
    fn zero_width_pulse_is_plain_projection() {
        let g = Grid::new(-4.0, 4.0, 1024).unwrap();
        let mut prop = Propagator::new(g, KAPPA_RB87).unwrap();
        let psi = gaussian_state(&g, 0.2, 0.4, 0.0).unwrap();
        let p = hard(&g, 0.0, W);
        let pulse = Pulse {
            tau: 0.0,
            depth: DEPTH,
            center: 0.0,
            waist: W,
        };
        let (a, sa) = measure_finite(&mut prop, &psi, &pulse, &p, &StepControl::default()).unwrap();
        let (b, sb) = project(&psi, &p).unwrap();
        assert_eq!(sa, sb);
        assert!(a.distance(&b).unwrap() < 1e-14);
    }

    #[test]
    fn quarter_period_converts_momentum_to_displacement() {
        let g = Grid::new(-1.0, 1.0, 2048).unwrap();
        let p = PhysicalParams::default();
        let omega = trap_angular_frequency(&p).unwrap();
        let s0 = ground_state_width(&p).unwrap();
        let k0 = 30.0;
        let psi = gaussian_state(&g, 0.0, s0, k0).unwrap();
        let mut prop = Propagator::new(g, KAPPA_RB87).unwrap();
        let pulse = Pulse {
            tau: 0.5 * std::f64::consts::PI / omega,
            depth: DEPTH,
            center: 0.0,
            waist: W,
        };
        let (out, _) = measure_finite(&mut prop, &psi, &pulse, &hard(&g, 0.0, W), &StepControl::default()).unwrap();
        let x = out.moments(KAPPA_RB87, None).mean_x;
        let expected = KAPPA_RB87 * k0 / omega;
        assert!(x > 0.0);
        assert!((x / expected - 1.0).abs() < 0.05, "{x} vs {expected}");
    }

    #[test]
    fn unitary_pulse_imprints_potential_phase() {
        let g = Grid::new(-4.0, 4.0, 2048).unwrap();
        let mut prop = Propagator::new(g, KAPPA_RB87).unwrap();
        let psi = gaussian_state(&g, 0.0, 0.5, 0.0).unwrap();
        let tau = 2e-3;
        let pulse = Pulse {
            tau,
            depth: DEPTH,
            center: 0.0,
            waist: W,
        };
        let out = measure_unitary(&mut prop, &psi, &pulse, &StepControl::default()).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        let j = g.n_points / 2; // x = 0
        let dphi = (out.amplitudes()[j] / psi.amplitudes()[j]).arg();
        let expected = DEPTH * tau;
        assert!((dphi / expected - 1.0).abs() < 0.05, "{dphi} vs {expected}");
        let free = Pulse { depth: 0.0, ..pulse };
        let a = measure_unitary(&mut prop, &psi, &free, &StepControl::default()).unwrap();
        let b = crate::propagator::evolve_free(&psi, KAPPA_RB87, tau).unwrap();
        assert!(a.distance(&b).unwrap() < 1e-13);
    }

    #[test]
    fn bound_subspace_drops_unbound_modes() {
        let g = Grid::new(-8.0, 8.0, 2048).unwrap();
        let well = Well::gaussian(1e-3, W, 0.0);
        let p = Projector::new(
            &g,
            &MeasurementWindow::bound_subspace(0.0, W, 5),
            Some((&well, KAPPA_RB87)),
        )
        .unwrap();
        assert_eq!(p.rank(), Some(1));
        assert!(Projector::new(&g, &MeasurementWindow::bound_subspace(0.0, W, 2), None).is_err());
    }

    #[test]
    fn static_transport_stays_put() {
        let g = Grid::new(-2.0, 2.0, 1024).unwrap();
        let s0 = ground_state_width(&PhysicalParams::default()).unwrap();
        let psi = gaussian_state(&g, 0.0, s0, 0.0).unwrap();
        let mut prop = Propagator::new(g, KAPPA_RB87).unwrap();
        let plan = TransportPlan {
            steps: 5,
            delta_r: 0.0,
            tau: 0.4,
            gap: 1.4,
            depth: DEPTH,
            waist: W,
        };
        let out = composite_transport_operator(
            &mut prop,
            &psi,
            &plan,
            &MeasurementWindow::hard(0.0, W),
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(out.records.len(), 5);
        assert!(out.final_mean_x.abs() < 1e-9);
        let prod: f64 = out.records.iter().map(|r| r.survival).product();
        assert!((prod - out.survival).abs() < 1e-10);
    }
}
