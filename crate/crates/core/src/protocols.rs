//! The five measurement experiments as reproducible scan runners, plus the
//! first-order Zeno predictor.
//!
//! Every schedule is linear in the initial state (collapses are applied
//! without renormalization; the survival weight is the squared norm). A thermal
//! ensemble is therefore evaluated by propagating the grid basis vectors that
//! carry the initial Gaussian once, and assembling each sampled trajectory as
//! a linear combination of those images. The result equals running every
//! trajectory separately, to within the truncated Gaussian tail.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZenoError, invalid};
use crate::fitting::{DataPoint, FitResult, Plateau, detect_plateau, fit_quadratic_vertex};
use crate::grid::{Grid, Wavefunction, gaussian_state};
use crate::measurement::{
    LOST_THRESHOLD, LossAccounting, MeasurementRecord, MeasurementWindow, Projector, WindowProfile, project,
};
use crate::potentials::{PotentialTimeline, Profile, TimeBudget, Well};
use crate::propagator::{Boundary, ObservableTrace, Propagator, StepControl, TracePoint, TrapEigenbasis};
use crate::units::{DEFAULT_V_TH, PhysicalParams, ground_state_width};

/// Initial Gaussian amplitudes below this fraction of the peak are dropped
/// from the propagated basis.
const SUPPORT_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Each pulse starts with a collapse onto the measurement window.
    #[default]
    Projective,
    /// Pulses act only as potentials; loss is read out at the end.
    Unitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseEngine {
    /// Eigenbasis for pulses of at least 500 split steps on grids up to 1024 points.
    #[default]
    Auto,
    SplitStep,
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    pub n_samples: usize,
    /// Thermal velocity spread, µm/µs. Zero gives identical k₀ = 0 samples.
    pub v_th: f64,
    /// Initial width, µm. Defaults to the harmonic ground-state width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    pub rng_seed: u64,
    pub accounting: LossAccounting,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_samples: 256,
            v_th: DEFAULT_V_TH,
            sigma0: None,
            rng_seed: 0,
            accounting: LossAccounting::Combined,
        }
    }
}

impl EnsembleSpec {
    pub fn zero_temperature() -> Self {
        Self {
            n_samples: 1,
            v_th: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("ensemble.n_samples", "must be >= 1"));
        }
        if !(self.v_th >= 0.0) || !self.v_th.is_finite() {
            return Err(invalid("ensemble.v_th", "must be non-negative"));
        }
        if let Some(s) = self.sigma0
            && !(s > 0.0)
        {
            return Err(invalid("ensemble.sigma0", "must be positive"));
        }
        Ok(())
    }

    pub fn sigma0(&self, params: &PhysicalParams) -> Result<f64> {
        match self.sigma0 {
            Some(s) => Ok(s),
            None => ground_state_width(params),
        }
    }

    /// Initial wavevectors, drawn N(0, v_th/κ) from a seeded stream.
    pub fn wavevectors(&self, kappa: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if self.v_th == 0.0 {
            return Ok(vec![0.0; self.n_samples]);
        }
        let normal = Normal::new(0.0, self.v_th / kappa).map_err(|e| invalid("ensemble.v_th", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        Ok((0..self.n_samples).map(|_| normal.sample(&mut rng)).collect())
    }
}

/// Everything a protocol needs besides its own schedule parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    pub physical: PhysicalParams,
    pub grid: Grid,
    pub boundary: Boundary,
    pub step: StepControl,
    /// Window shape; its radius is `physical.recapture_radius`.
    pub window: WindowProfile,
    pub mode: Mode,
    pub engine: PulseEngine,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            physical: PhysicalParams::default(),
            grid: Grid::default(),
            boundary: Boundary::Absorbing {
                fraction: 0.1,
                rate: 4.0,
            },
            step: StepControl::default(),
            window: WindowProfile::Hard,
            mode: Mode::Projective,
            engine: PulseEngine::Auto,
        }
    }
}

impl Simulation {
    /// Default physics on a cropped ±5 µm domain with the default grid spacing.
    pub fn desk() -> Self {
        Self {
            grid: Grid {
                x_min: -5.0,
                x_max: 5.0,
                n_points: 1024,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        self.grid.validate()?;
        self.step.validate()?;
        self.window(0.0).validate()?;
        Ok(())
    }

    pub fn window(&self, center: f64) -> MeasurementWindow {
        MeasurementWindow {
            center,
            radius: self.physical.recapture_radius,
            profile: self.window,
        }
    }

    /// The full-depth trap at `center`.
    pub fn trap(&self, center: f64) -> Well {
        Well::gaussian(self.physical.trap_depth, self.physical.waist, center)
    }

    fn check_ensemble(&self, ens: &EnsembleSpec) -> Result<f64> {
        ens.validate()?;
        let sigma0 = ens.sigma0(&self.physical)?;
        let k_th = ens.v_th / self.physical.kappa;
        let k_scale = 3.0 * (k_th * k_th + 1.0 / (4.0 * sigma0 * sigma0)).sqrt();
        self.grid.check_resolves(k_scale)?;
        Ok(sigma0)
    }
}

/// One step of a compiled schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Free(f64),
    /// Collapse onto the window at `center`; `trap` supplies bound-subspace modes.
    Collapse {
        center: f64,
        trap: Well,
    },
    Pulse {
        well: Well,
        tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub ops: Vec<Op>,
    /// Center of the final detection window.
    pub readout_center: f64,
}

impl Schedule {
    /// Compiles a timeline whose pulses sit at segment indices of the given
    /// parity (1 for [`PotentialTimeline::pulse_train`], 0 for
    /// [`PotentialTimeline::stepped_train`]). Zero-depth pulses remain
    /// measurement instants in projective mode.
    pub fn from_train(tl: &PotentialTimeline, pulse_parity: usize, sim: &Simulation, readout_center: f64) -> Self {
        let mut ops = Vec::with_capacity(tl.segments.len() * 2);
        for (i, seg) in tl.segments.iter().enumerate() {
            let is_pulse = i % 2 == pulse_parity;
            if !is_pulse {
                if seg.duration() > 0.0 {
                    ops.push(Op::Free(seg.duration()));
                }
                continue;
            }
            let well = seg.well(sim.physical.waist);
            if sim.mode == Mode::Projective {
                let trap = if well.is_off() { sim.trap(seg.center) } else { well };
                ops.push(Op::Collapse {
                    center: seg.center,
                    trap,
                });
            }
            if seg.duration() > 0.0 {
                if well.is_off() {
                    ops.push(Op::Free(seg.duration()));
                } else {
                    ops.push(Op::Pulse {
                        well,
                        tau: seg.duration(),
                    });
                }
            }
        }
        Self { ops, readout_center }
    }

    pub fn duration(&self) -> f64 {
        self.ops
            .iter()
            .map(|op| match op {
                Op::Free(t) => *t,
                Op::Pulse { tau, .. } => *tau,
                Op::Collapse { .. } => 0.0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct WellKey(u8, u64, u64, u64);

impl From<&Well> for WellKey {
    fn from(w: &Well) -> Self {
        let p = match w.profile {
            Profile::Gaussian => 0,
            Profile::Harmonic => 1,
            Profile::Off => 2,
        };
        WellKey(p, w.depth.to_bits(), w.waist.to_bits(), w.center.to_bits())
    }
}

/// Cached operators for one simulation.
struct Kernel<'a> {
    sim: &'a Simulation,
    prop: Propagator,
    eigen: HashMap<WellKey, Arc<TrapEigenbasis>>,
    projectors: HashMap<(WellKey, u64), Arc<Projector>>,
}

impl<'a> Kernel<'a> {
    fn new(sim: &'a Simulation) -> Result<Self> {
        sim.validate()?;
        Ok(Self {
            sim,
            prop: Propagator::with_boundary(sim.grid, sim.physical.kappa, sim.boundary)?,
            eigen: HashMap::new(),
            projectors: HashMap::new(),
        })
    }

    fn use_eigen(&self, tau: f64) -> bool {
        match self.sim.engine {
            PulseEngine::SplitStep => false,
            PulseEngine::Eigen => true,
            PulseEngine::Auto => tau >= 500.0 * self.sim.step.dt_pulse && self.sim.grid.n_points <= 1024,
        }
    }

    fn projector(&mut self, center: f64, trap: &Well) -> Result<Arc<Projector>> {
        let key = (WellKey::from(trap), center.to_bits());
        if let Some(p) = self.projectors.get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(Projector::new(
            &self.sim.grid,
            &self.sim.window(center),
            Some((trap, self.sim.physical.kappa)),
        )?);
        self.projectors.insert(key, p.clone());
        Ok(p)
    }

    fn readout(&mut self, center: f64) -> Result<Arc<Projector>> {
        let trap = self.sim.trap(center);
        self.projector(center, &trap)
    }

    fn eigenbasis(&mut self, well: &Well) -> Result<Arc<TrapEigenbasis>> {
        let key = WellKey::from(well);
        if let Some(e) = self.eigen.get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(TrapEigenbasis::new(&self.sim.grid, self.sim.physical.kappa, well)?);
        self.eigen.insert(key, e.clone());
        Ok(e)
    }

    /// Applies the schedule to every state without renormalizing.
    fn run_linear(&mut self, schedule: &Schedule, states: &mut [Wavefunction]) -> Result<()> {
        let sc = self.sim.step;
        for op in &schedule.ops {
            match *op {
                Op::Free(t) => {
                    let prop = &self.prop;
                    states
                        .par_iter_mut()
                        .try_for_each_init(|| prop.clone(), |p, s| p.evolve_free(s, t, &sc))?;
                }
                Op::Pulse { well, tau } => {
                    if self.use_eigen(tau) {
                        self.eigenbasis(&well)?.evolve_many(states, tau)?;
                    } else {
                        let prop = &self.prop;
                        states
                            .par_iter_mut()
                            .try_for_each_init(|| prop.clone(), |p, s| p.evolve_static(s, &well, tau, &sc))?;
                    }
                }
                Op::Collapse { center, trap } => {
                    let proj = self.projector(center, &trap)?;
                    states.par_iter_mut().try_for_each(|s| proj.apply(s).map(|_| ()))?;
                }
            }
        }
        Ok(())
    }

    fn evolve_op(&mut self, psi: &mut Wavefunction, op: &Op, t: f64) -> Result<()> {
        let sc = self.sim.step;
        match *op {
            Op::Free(_) => self.prop.evolve_free(psi, t, &sc),
            Op::Pulse { well, tau } => {
                if self.use_eigen(tau) {
                    self.eigenbasis(&well)?.evolve(psi, t)
                } else {
                    self.prop.evolve_static(psi, &well, t, &sc)
                }
            }
            Op::Collapse { .. } => Ok(()),
        }
    }
}

/// Per-sample results of an ensemble evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    /// Per-sample loss under the requested accounting.
    pub losses: Vec<f64>,
    /// Mean position of the population remaining on the grid, µm.
    pub mean_final_x: f64,
}

impl EnsembleOutcome {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }

    pub fn stderr(&self) -> f64 {
        let n = self.losses.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_loss();
        let var = self.losses.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Runs `schedule` for Gaussians of width `sigma0` at `x0` with each of the
/// wavevectors `k0s`.
pub fn evaluate_ensemble(
    sim: &Simulation,
    schedule: &Schedule,
    k0s: &[f64],
    sigma0: f64,
    x0: f64,
    accounting: LossAccounting,
) -> Result<EnsembleOutcome> {
    let mut kernel = Kernel::new(sim)?;
    evaluate_with(&mut kernel, schedule, k0s, sigma0, x0, accounting)
}

fn evaluate_with(
    kernel: &mut Kernel,
    schedule: &Schedule,
    k0s: &[f64],
    sigma0: f64,
    x0: f64,
    accounting: LossAccounting,
) -> Result<EnsembleOutcome> {
    let grid = kernel.sim.grid;
    if k0s.is_empty() {
        return Err(invalid("ensemble.n_samples", "must be >= 1"));
    }
    let reach = sigma0 * (-4.0 * SUPPORT_CUTOFF.ln()).sqrt();
    let support: Vec<usize> = (0..grid.n_points)
        .filter(|&j| (grid.x(j) - x0).abs() <= reach)
        .collect();
    if !grid.contains(x0 - reach) || !grid.contains(x0 + reach) {
        return Err(ZenoError::BoundaryContact(1.0));
    }
    let mut images: Vec<Wavefunction> = support
        .iter()
        .map(|&j| {
            let mut amps = vec![Complex64::new(0.0, 0.0); grid.n_points];
            amps[j] = Complex64::new(1.0, 0.0);
            Wavefunction::from_amplitudes(grid, amps)
        })
        .collect::<Result<_>>()?;
    kernel.run_linear(schedule, &mut images)?;
    let readout = kernel.readout(schedule.readout_center)?;
    let positions = grid.positions();
    let dx = grid.dx();

    let per_sample: Vec<(f64, f64, f64)> = k0s
        .par_iter()
        .map(|&k0| -> Result<(f64, f64, f64)> {
            let psi0 = gaussian_state(&grid, x0, sigma0, k0)?;
            let mut amps = vec![Complex64::new(0.0, 0.0); grid.n_points];
            for (col, &j) in images.iter().zip(&support) {
                let c = psi0.amplitudes()[j];
                amps.iter_mut().zip(col.amplitudes()).for_each(|(a, b)| *a += c * b);
            }
            let fin = Wavefunction::from_amplitudes(grid, amps)?;
            let kept = readout.probability(&fin)?.clamp(0.0, 1.0);
            let (mut norm, mut xsum) = (0.0, 0.0);
            for (z, x) in fin.amplitudes().iter().zip(&positions) {
                let p = z.norm_sqr();
                norm += p;
                xsum += p * x;
            }
            Ok((accounting.loss(norm * dx, kept), xsum * dx, norm * dx))
        })
        .collect::<Result<_>>()?;

    let losses = per_sample.iter().map(|s| s.0).collect();
    let (xs, ns) = per_sample.iter().fold((0.0, 0.0), |(a, b), s| (a + s.1, b + s.2));
    Ok(EnsembleOutcome {
        losses,
        mean_final_x: if ns > 0.0 { xs / ns } else { f64::NAN },
    })
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub state: Wavefunction,
    /// Product of collapse survivals.
    pub survival: f64,
    /// Final window probability of the (possibly absorbed) state.
    pub readout: f64,
    pub loss: f64,
    pub lost: bool,
    pub records: Vec<MeasurementRecord>,
    pub trace: ObservableTrace,
}

/// Runs a single trajectory with renormalizing collapses, optionally sampling
/// observables every `trace_dt`.
pub fn run_trajectory(
    sim: &Simulation,
    schedule: &Schedule,
    psi0: &Wavefunction,
    trace_dt: Option<f64>,
) -> Result<TrajectoryOutcome> {
    let mut kernel = Kernel::new(sim)?;
    if *psi0.grid() != sim.grid {
        return Err(ZenoError::GridMismatch(
            "initial state is not on the simulation grid".into(),
        ));
    }
    if let Some(dt) = trace_dt
        && !(dt > 0.0)
    {
        return Err(invalid("trace_dt", "must be positive"));
    }
    let kappa = sim.physical.kappa;
    let readout = kernel.readout(schedule.readout_center)?;
    let mut state = psi0.clone();
    let mut trace = ObservableTrace::default();
    let mut records = Vec::new();
    let mut t = 0.0;
    let snapshot = |psi: &Wavefunction, t: f64, trace: &mut ObservableTrace| -> Result<()> {
        let m = psi.moments(kappa, None);
        let n2 = psi.norm_sqr();
        trace.points.push(TracePoint {
            t,
            mean_x: m.mean_x,
            std_x: m.std_x,
            mean_k: m.mean_k,
            window_prob: if n2 > 0.0 { readout.probability(psi)? / n2 } else { 0.0 },
        });
        Ok(())
    };
    if trace_dt.is_some() {
        snapshot(&state, t, &mut trace)?;
    }
    for op in &schedule.ops {
        match op {
            Op::Collapse { center, trap } => {
                let proj = kernel.projector(*center, trap)?;
                let pre = state.moments(kappa, None).mean_x;
                match project(&state, &proj) {
                    Ok((next, survival)) => {
                        state = next;
                        records.push(MeasurementRecord {
                            index: records.len(),
                            survival,
                            pre_mean_x: pre,
                            post_mean_x: state.moments(kappa, None).mean_x,
                        });
                    }
                    Err(ZenoError::TrajectoryLost(_)) => {
                        let survival = state.survival_weight();
                        return Ok(TrajectoryOutcome {
                            state,
                            survival,
                            readout: 0.0,
                            loss: 1.0,
                            lost: true,
                            records,
                            trace,
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
            Op::Free(d) | Op::Pulse { tau: d, .. } => {
                let d = *d;
                match trace_dt {
                    None => kernel.evolve_op(&mut state, op, d)?,
                    Some(dt) => {
                        let chunks = (d / dt - 1e-9).ceil().max(1.0) as usize;
                        for _ in 0..chunks {
                            kernel.evolve_op(&mut state, op, d / chunks as f64)?;
                            t += d / chunks as f64;
                            snapshot(&state, t, &mut trace)?;
                        }
                        continue;
                    }
                }
                t += d;
            }
        }
    }
    let survival = state.survival_weight();
    let kept = readout.probability(&state)?.clamp(0.0, 1.0);
    let lost = survival * kept < LOST_THRESHOLD;
    Ok(TrajectoryOutcome {
        loss: 1.0 - survival * kept,
        state,
        survival,
        readout: kept,
        lost,
        records,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub param: f64,
    pub loss_prob: f64,
    pub stderr: f64,
    pub mean_final_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub protocol: String,
    /// Scan parameter with units.
    pub axis: String,
    /// Which curve of a multi-curve protocol this is, e.g. "N=15".
    pub series: String,
    pub points: Vec<ScanPoint>,
}

impl ScanResult {
    pub fn data_points(&self) -> Vec<DataPoint> {
        self.points
            .iter()
            .map(|p| DataPoint {
                x: p.param,
                y: p.loss_prob,
                stderr: Some(p.stderr),
            })
            .collect()
    }

    pub fn loss_at(&self, param: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.param - param).abs() < 1e-9)
            .map(|p| p.loss_prob)
    }
}

fn point(param: f64, out: &EnsembleOutcome) -> ScanPoint {
    ScanPoint {
        param,
        loss_prob: out.mean_loss().clamp(0.0, 1.0),
        stderr: out.stderr(),
        mean_final_x: out.mean_final_x,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZenoScan {
    pub n_list: Vec<usize>,
    pub total_t: f64,
    pub tau: f64,
    pub budget: TimeBudget,
}

impl Default for ZenoScan {
    fn default() -> Self {
        Self {
            n_list: vec![1, 2, 3, 5, 10, 15, 20, 30],
            total_t: 45.0,
            tau: 0.4,
            budget: TimeBudget::FreeTime,
        }
    }
}

/// Loss after `total_t` with N equally spaced pulses, for each N.
pub fn run_zeno_scan(sim: &Simulation, p: &ZenoScan, ens: &EnsembleSpec) -> Result<ScanResult> {
    let sigma0 = sim.check_ensemble(ens)?;
    let k0s = ens.wavevectors(sim.physical.kappa)?;
    let mut kernel = Kernel::new(sim)?;
    let mut ns = p.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut points = Vec::with_capacity(ns.len());
    for &n in &ns {
        let tl = PotentialTimeline::pulse_train(p.total_t, n, p.tau, sim.physical.trap_depth, &[0.0], p.budget)?;
        let schedule = Schedule::from_train(&tl, 1, sim, 0.0);
        points.push(point(
            n as f64,
            &evaluate_with(&mut kernel, &schedule, &k0s, sigma0, 0.0, ens.accounting)?,
        ));
    }
    Ok(ScanResult {
        protocol: "zeno".into(),
        axis: "N".into(),
        series: format!("tau={}", p.tau),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseWidthScan {
    pub tau_list: Vec<f64>,
    pub total_t: f64,
    pub n_pulses: usize,
    /// Pulse depth as a fraction of the trap depth.
    pub intensity: f64,
    pub budget: TimeBudget,
    /// Pulse width of the representative trajectory; defaults to the longest scanned.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_tau: Option<f64>,
    pub trace_dt: f64,
}

impl Default for PulseWidthScan {
    fn default() -> Self {
        Self {
            tau_list: (1..=56).map(|i| i as f64 / 4.0).collect(),
            total_t: 30.0,
            n_pulses: 15,
            intensity: 1.0,
            budget: TimeBudget::FreeTime,
            trace_tau: None,
            trace_dt: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PulseWidthOutcome {
    pub scan: ScanResult,
    /// One trajectory at k₀ = v_th/κ, for oscillation plots.
    pub trace: ObservableTrace,
}

fn sorted_params(list: &[f64], name: &'static str) -> Result<Vec<f64>> {
    if list.is_empty() {
        return Err(invalid(name, "must not be empty"));
    }
    let mut v = list.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(name, "entries must be finite"));
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Loss against pulse width at fixed N and intensity.
pub fn run_pulse_width_scan(sim: &Simulation, p: &PulseWidthScan, ens: &EnsembleSpec) -> Result<PulseWidthOutcome> {
    if !(p.intensity >= 0.0 && p.intensity <= 1.0) {
        return Err(invalid("intensity", "must lie in [0, 1]"));
    }
    let sigma0 = sim.check_ensemble(ens)?;
    let k0s = ens.wavevectors(sim.physical.kappa)?;
    let taus = sorted_params(&p.tau_list, "tau_list")?;
    let depth = p.intensity * sim.physical.trap_depth;
    let mut kernel = Kernel::new(sim)?;
    let schedule_for = |tau: f64| -> Result<Schedule> {
        let tl = PotentialTimeline::pulse_train(p.total_t, p.n_pulses, tau, depth, &[0.0], p.budget)?;
        Ok(Schedule::from_train(&tl, 1, sim, 0.0))
    };
    let mut points = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let schedule = schedule_for(tau)?;
        points.push(point(
            tau,
            &evaluate_with(&mut kernel, &schedule, &k0s, sigma0, 0.0, ens.accounting)?,
        ));
    }
    let trace_tau = p.trace_tau.unwrap_or(*taus.last().unwrap());
    let psi0 = gaussian_state(&sim.grid, 0.0, sigma0, ens.v_th / sim.physical.kappa)?;
    let trace = run_trajectory(sim, &schedule_for(trace_tau)?, &psi0, Some(p.trace_dt))?.trace;
    Ok(PulseWidthOutcome {
        scan: ScanResult {
            protocol: "pulse-width".into(),
            axis: "tau (us)".into(),
            series: format!("I={}", p.intensity),
            points,
        },
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrengthScan {
    pub i_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub tau: f64,
    pub total_t: f64,
    pub budget: TimeBudget,
    /// Remaining-drop fraction that marks the plateau onset.
    pub plateau_fraction: f64,
}

impl Default for StrengthScan {
    fn default() -> Self {
        Self {
            i_list: (0..=20).map(|i| i as f64 / 20.0).collect(),
            n_list: vec![5, 10, 15],
            tau: 0.4,
            total_t: 30.0,
            budget: TimeBudget::FreeTime,
            plateau_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthSeries {
    pub n_pulses: usize,
    pub scan: ScanResult,
    pub plateau: Option<Plateau>,
    /// Vertex-form quadratic on the points up to the plateau onset.
    pub fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

/// Loss against pulse intensity for each N.
pub fn run_strength_scan(sim: &Simulation, p: &StrengthScan, ens: &EnsembleSpec) -> Result<Vec<StrengthSeries>> {
    let is = sorted_params(&p.i_list, "i_list")?;
    if is.iter().any(|i| !(0.0..=1.0).contains(i)) {
        return Err(invalid("i_list", "intensities must lie in [0, 1]"));
    }
    let sigma0 = sim.check_ensemble(ens)?;
    let k0s = ens.wavevectors(sim.physical.kappa)?;
    let mut kernel = Kernel::new(sim)?;
    let mut out = Vec::with_capacity(p.n_list.len());
    for &n in &p.n_list {
        let mut points = Vec::with_capacity(is.len());
        for &i in &is {
            let tl =
                PotentialTimeline::pulse_train(p.total_t, n, p.tau, i * sim.physical.trap_depth, &[0.0], p.budget)?;
            let schedule = Schedule::from_train(&tl, 1, sim, 0.0);
            points.push(point(
                i,
                &evaluate_with(&mut kernel, &schedule, &k0s, sigma0, 0.0, ens.accounting)?,
            ));
        }
        let scan = ScanResult {
            protocol: "strength".into(),
            axis: "I (fraction of full intensity)".into(),
            series: format!("N={n}"),
            points,
        };
        let data = scan.data_points();
        let plateau = detect_plateau(&data, p.plateau_fraction);
        let (fit, fit_error) = match plateau {
            Some(pl) => match fit_quadratic_vertex(&data, pl.onset_param) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            },
            None => (None, Some("no points".into())),
        };
        out.push(StrengthSeries {
            n_pulses: n,
            scan,
            plateau,
            fit,
            fit_error,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DurationScan {
    pub t_list: Vec<f64>,
    /// Free time between pulses, µs.
    pub spacing: f64,
    pub tau_list: Vec<f64>,
}

impl Default for DurationScan {
    fn default() -> Self {
        Self {
            t_list: (1..=8).map(|i| 4.0 * i as f64).collect(),
            spacing: 2.0,
            tau_list: vec![1.0, 3.5, 5.0],
        }
    }
}

/// Number of pulses for free time `total_t` at the given spacing: cycles are
/// `spacing` of free flight followed by a pulse, closed by a final free gap.
pub fn duration_pulse_count(total_t: f64, spacing: f64) -> Result<usize> {
    if !(spacing > 0.0) {
        return Err(invalid("spacing", "must be positive"));
    }
    let cycles = (total_t / spacing + 1e-9).floor();
    if cycles < 1.0 {
        return Err(ZenoError::Schedule(format!(
            "total time {total_t} us is shorter than one {spacing} us spacing"
        )));
    }
    Ok(cycles as usize - 1)
}

/// Loss against total free-evolution time for each pulse width.
pub fn run_duration_scan(sim: &Simulation, p: &DurationScan, ens: &EnsembleSpec) -> Result<Vec<ScanResult>> {
    let ts = sorted_params(&p.t_list, "t_list")?;
    let sigma0 = sim.check_ensemble(ens)?;
    let k0s = ens.wavevectors(sim.physical.kappa)?;
    let mut kernel = Kernel::new(sim)?;
    let mut out = Vec::with_capacity(p.tau_list.len());
    for &tau in &p.tau_list {
        let mut points = Vec::with_capacity(ts.len());
        for &t in &ts {
            let n = duration_pulse_count(t, p.spacing)?;
            let tl = PotentialTimeline::pulse_train(t, n, tau, sim.physical.trap_depth, &[0.0], TimeBudget::FreeTime)?;
            let schedule = Schedule::from_train(&tl, 1, sim, 0.0);
            points.push(point(
                t,
                &evaluate_with(&mut kernel, &schedule, &k0s, sigma0, 0.0, ens.accounting)?,
            ));
        }
        out.push(ScanResult {
            protocol: "duration".into(),
            axis: "T (us)".into(),
            series: format!("tau={tau}"),
            points,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportScan {
    pub n_list: Vec<usize>,
    pub tau: f64,
    pub gap: f64,
    pub delta_r: f64,
}

impl Default for TransportScan {
    fn default() -> Self {
        Self {
            n_list: vec![20, 40],
            tau: 0.4,
            gap: 1.4,
            delta_r: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub scan: ScanResult,
    /// Displacement / (N·(τ + gap)) per point, µm/µs.
    pub drift_speed: Vec<f64>,
}

/// Stepped pulse train with pulse j at j·Δr; loss and final position against N.
pub fn run_transport(sim: &Simulation, p: &TransportScan, ens: &EnsembleSpec) -> Result<TransportResult> {
    let sigma0 = sim.check_ensemble(ens)?;
    let k0s = ens.wavevectors(sim.physical.kappa)?;
    let mut kernel = Kernel::new(sim)?;
    let mut points = Vec::new();
    let mut speeds = Vec::new();
    let mut ns = p.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    for &n in &ns {
        if n == 0 {
            return Err(invalid("n_list", "transport needs at least one step"));
        }
        let last = (n - 1) as f64 * p.delta_r;
        let radius = sim.physical.recapture_radius;
        for edge in [last + radius, last - radius, -radius, radius] {
            if !sim.grid.contains(edge) {
                return Err(invalid(
                    "delta_r",
                    format!("transport path to {last:.3} um leaves the grid"),
                ));
            }
        }
        let tl = PotentialTimeline::stepped_train(n, p.tau, p.gap, sim.physical.trap_depth, p.delta_r)?;
        let schedule = Schedule::from_train(&tl, 0, sim, last);
        let out = evaluate_with(&mut kernel, &schedule, &k0s, sigma0, 0.0, ens.accounting)?;
        speeds.push(out.mean_final_x / (n as f64 * (p.tau + p.gap)));
        points.push(point(n as f64, &out));
    }
    Ok(TransportResult {
        scan: ScanResult {
            protocol: "transport".into(),
            axis: "N".into(),
            series: format!("delta_r={}", p.delta_r),
            points,
        },
        drift_speed: speeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotSpec {
    pub n_pulses: usize,
    pub total_t: f64,
    pub tau: f64,
    pub intensity: f64,
    pub budget: TimeBudget,
    /// Initial wavevector; defaults to the thermal spread v_th/κ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    pub trace_dt: f64,
}

impl Default for SnapshotSpec {
    fn default() -> Self {
        Self {
            n_pulses: 15,
            total_t: 30.0,
            tau: 0.4,
            intensity: 1.0,
            budget: TimeBudget::FreeTime,
            k0: None,
            trace_dt: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub timeline: PotentialTimeline,
    pub outcome: TrajectoryOutcome,
}

/// A single traced trajectory through an equally spaced pulse train.
pub fn run_snapshot(sim: &Simulation, p: &SnapshotSpec, ens: &EnsembleSpec) -> Result<Snapshot> {
    if !(p.intensity >= 0.0 && p.intensity <= 1.0) {
        return Err(invalid("intensity", "must lie in [0, 1]"));
    }
    let sigma0 = sim.check_ensemble(ens)?;
    let k0 = p.k0.unwrap_or(ens.v_th / sim.physical.kappa);
    let tl = PotentialTimeline::pulse_train(
        p.total_t,
        p.n_pulses,
        p.tau,
        p.intensity * sim.physical.trap_depth,
        &[0.0],
        p.budget,
    )?;
    let schedule = Schedule::from_train(&tl, 1, sim, 0.0);
    let psi0 = gaussian_state(&sim.grid, 0.0, sigma0, k0)?;
    let outcome = run_trajectory(sim, &schedule, &psi0, Some(p.trace_dt))?;
    Ok(Snapshot { timeline: tl, outcome })
}

/// Perturbative and product-form loss after N ideal measurements during T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderZeno {
    pub n: usize,
    pub total_t: f64,
    /// |⟨r|H_free|φ₀⟩|, rad/µs.
    pub matrix_element: f64,
    /// ⟨H²⟩ − ⟨H⟩² of φ₀ under H_free, (rad/µs)².
    pub energy_variance: f64,
    /// |⟨r|H_free|φ₀⟩|²T²/N.
    pub closed_form: f64,
    /// (ΔH)²T²/N, the short-time expansion of the survival.
    pub variance_form: f64,
    /// Loss of one interval T/N: 1 − ‖M_b U_free(T/N) φ₀‖².
    pub single_step: f64,
    /// 1 − (1 − single_step)^N.
    pub product_form: f64,
}

/// `projector` realizes the window; |r⟩ is its normalized image of φ₀.
pub fn first_order_zeno(
    n: usize,
    total_t: f64,
    phi0: &Wavefunction,
    projector: &Projector,
    kappa: f64,
) -> Result<FirstOrderZeno> {
    if n == 0 {
        return Err(invalid("N", "must be >= 1"));
    }
    if !(total_t >= 0.0) {
        return Err(invalid("T", "must be non-negative"));
    }
    let mut phi = phi0.clone();
    phi.normalize();
    let grid = *phi.grid();
    let mut r = phi.clone();
    let kept = projector.apply(&mut r)?;
    if kept < LOST_THRESHOLD {
        return Err(ZenoError::TrajectoryLost(kept));
    }
    r.normalize();

    let k = grid.wavevectors();
    let mut fft = crate::spectral::FftPair::new(grid.n_points);
    let mut spec = phi.amplitudes().to_vec();
    fft.forward(&mut spec);
    let mut apply_symbol = |f: &dyn Fn(f64) -> f64| -> Result<Wavefunction> {
        let mut amps: Vec<Complex64> = spec.iter().zip(&k).map(|(z, k)| z * f(*k)).collect();
        fft.inverse(&mut amps);
        Wavefunction::from_amplitudes(grid, amps)
    };
    let h_phi = apply_symbol(&|k| 0.5 * kappa * k * k)?;
    let h2_phi = apply_symbol(&|k| (0.5 * kappa * k * k).powi(2))?;
    let mel = r.inner(&h_phi)?.norm();
    let mean_h = phi.inner(&h_phi)?.re;
    let var_h = (phi.inner(&h2_phi)?.re - mean_h * mean_h).max(0.0);

    let dt = total_t / n as f64;
    let step = crate::propagator::evolve_free(&phi, kappa, dt)?;
    let single = (1.0 - projector.probability(&step)?).clamp(0.0, 1.0);
    let t2n = total_t * total_t / n as f64;
    Ok(FirstOrderZeno {
        n,
        total_t,
        matrix_element: mel,
        energy_variance: var_h,
        closed_form: mel * mel * t2n,
        variance_form: var_h * t2n,
        single_step: single,
        product_form: 1.0 - (1.0 - single).powi(n as i32),
    })
}
