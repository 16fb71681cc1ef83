//! Trap potentials and piecewise-constant pulse schedules.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZenoError, invalid};
use crate::units::harmonic_frequency;

/// Spatial shape of the trap during a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Gaussian,
    Harmonic,
    Off,
}

/// −depth·exp(−2(x−c)²/w²).
pub fn gaussian_well(depth: f64, waist: f64, center: f64, x: f64) -> f64 {
    let d = x - center;
    -depth * (-2.0 * d * d / (waist * waist)).exp()
}

/// −depth + ½(Ω²/κ)(x−c)² with Ω = sqrt(4·depth·κ/w²). The κ cancels, so the
/// curvature is 2·depth/w².
pub fn harmonic_well(depth: f64, waist: f64, center: f64, x: f64) -> f64 {
    let d = x - center;
    -depth + 2.0 * depth * d * d / (waist * waist)
}

/// Static potential description used for one timeline segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub profile: Profile,
    pub depth: f64,
    pub waist: f64,
    pub center: f64,
}

impl Well {
    pub fn gaussian(depth: f64, waist: f64, center: f64) -> Self {
        Self {
            profile: Profile::Gaussian,
            depth,
            waist,
            center,
        }
    }

    pub fn harmonic(depth: f64, waist: f64, center: f64) -> Self {
        Self {
            profile: Profile::Harmonic,
            depth,
            waist,
            center,
        }
    }

    pub fn off() -> Self {
        Self {
            profile: Profile::Off,
            depth: 0.0,
            waist: 1.0,
            center: 0.0,
        }
    }

    pub fn is_off(&self) -> bool {
        self.profile == Profile::Off || self.depth == 0.0
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.profile {
            Profile::Gaussian => gaussian_well(self.depth, self.waist, self.center, x),
            Profile::Harmonic => harmonic_well(self.depth, self.waist, self.center, x),
            Profile::Off => 0.0,
        }
    }

    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.value(x)).collect()
    }

    /// Harmonic angular frequency at the well bottom.
    pub fn omega(&self, kappa: f64) -> Result<f64> {
        harmonic_frequency(self.depth, self.waist, kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub depth: f64,
    pub center: f64,
    pub profile: Profile,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn is_pulse(&self) -> bool {
        self.profile != Profile::Off
    }

    pub fn well(&self, waist: f64) -> Well {
        Well {
            profile: self.profile,
            depth: self.depth,
            waist,
            center: self.center,
        }
    }
}

/// How a pulse train spends its time budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBudget {
    /// `total_T` is the whole sequence; pulses eat into the free time.
    #[default]
    Inclusive,
    /// `total_T` is the free-evolution time only; pulse durations are added on top.
    FreeTime,
}

/// Ordered, contiguous schedule of trap segments starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTimeline {
    pub segments: Vec<Segment>,
}

const TIME_TOL: f64 = 1e-9;

impl PotentialTimeline {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let tl = Self { segments };
        tl.validate()?;
        Ok(tl)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.segments.first() else {
            return Err(ZenoError::Schedule("timeline has no segments".into()));
        };
        if first.t_start.abs() > TIME_TOL {
            return Err(ZenoError::Schedule("first segment must start at t = 0".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.t_end >= s.t_start) {
                return Err(ZenoError::Schedule(format!("segment {i} ends before it starts")));
            }
            if !(s.depth >= 0.0) {
                return Err(ZenoError::Schedule(format!("segment {i} has negative depth")));
            }
            if (s.profile == Profile::Off) != (s.depth == 0.0) {
                return Err(ZenoError::Schedule(format!("segment {i}: profile off iff depth = 0")));
            }
            if i > 0 && (s.t_start - self.segments[i - 1].t_end).abs() > TIME_TOL {
                return Err(ZenoError::Schedule(format!(
                    "segment {i} is not contiguous with its predecessor"
                )));
            }
        }
        Ok(())
    }

    pub fn off(total: f64) -> Result<Self> {
        Self::new(vec![Segment {
            t_start: 0.0,
            t_end: total,
            depth: 0.0,
            center: 0.0,
            profile: Profile::Off,
        }])
    }

    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    pub fn pulses(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.is_pulse())
    }

    /// Schedule `(gap, pulse, gap, …, pulse, gap)` with equal gaps.
    ///
    /// `depth = 0` produces off pulses of the requested width, which keeps the
    /// measurement instants in place for projective runs at zero intensity.
    pub fn pulse_train(
        total_t: f64,
        n_pulses: usize,
        tau: f64,
        depth: f64,
        centers: &[f64],
        budget: TimeBudget,
    ) -> Result<Self> {
        Self::pulse_train_with_profile(total_t, n_pulses, tau, depth, centers, budget, Profile::Gaussian)
    }

    pub fn pulse_train_with_profile(
        total_t: f64,
        n_pulses: usize,
        tau: f64,
        depth: f64,
        centers: &[f64],
        budget: TimeBudget,
        profile: Profile,
    ) -> Result<Self> {
        if !(total_t >= 0.0) || !(tau >= 0.0) || !(depth >= 0.0) {
            return Err(invalid("pulse_train", "times and depth must be non-negative"));
        }
        if n_pulses == 0 {
            return Self::off(total_t);
        }
        if centers.len() != 1 && centers.len() != n_pulses {
            return Err(invalid(
                "centers",
                format!("need 1 or {n_pulses} centers, got {}", centers.len()),
            ));
        }
        let free = match budget {
            TimeBudget::Inclusive => {
                let busy = n_pulses as f64 * tau;
                if busy > total_t + TIME_TOL {
                    return Err(ZenoError::Schedule(format!(
                        "{n_pulses} pulses of {tau} us overflow {total_t} us"
                    )));
                }
                (total_t - busy).max(0.0)
            }
            TimeBudget::FreeTime => total_t,
        };
        let gap = free / (n_pulses as f64 + 1.0);
        let profile = if depth == 0.0 { Profile::Off } else { profile };
        let mut segments = Vec::with_capacity(2 * n_pulses + 1);
        let mut t = 0.0;
        for j in 0..n_pulses {
            // Positions are recomputed from the index so rounding does not accumulate.
            let pulse_start = (j as f64 + 1.0) * gap + j as f64 * tau;
            segments.push(Segment {
                t_start: t,
                t_end: pulse_start,
                depth: 0.0,
                center: 0.0,
                profile: Profile::Off,
            });
            let pulse_end = pulse_start + tau;
            let center = if centers.len() == 1 { centers[0] } else { centers[j] };
            segments.push(Segment {
                t_start: pulse_start,
                t_end: pulse_end,
                depth: if profile == Profile::Off { 0.0 } else { depth },
                center,
                profile,
            });
            t = pulse_end;
        }
        let end = free + n_pulses as f64 * tau;
        segments.push(Segment {
            t_start: t,
            t_end: end,
            depth: 0.0,
            center: 0.0,
            profile: Profile::Off,
        });
        Self::new(segments)
    }

    /// Pulses of width `tau` separated by fixed gaps, with pulse `j` centered at `j·delta_r`.
    /// No leading gap; a trailing gap follows the last pulse.
    pub fn stepped_train(n_pulses: usize, tau: f64, gap: f64, depth: f64, delta_r: f64) -> Result<Self> {
        if n_pulses == 0 {
            return Self::off(0.0);
        }
        let mut segments = Vec::with_capacity(2 * n_pulses);
        let period = tau + gap;
        let profile = if depth == 0.0 { Profile::Off } else { Profile::Gaussian };
        for j in 0..n_pulses {
            let t0 = j as f64 * period;
            segments.push(Segment {
                t_start: t0,
                t_end: t0 + tau,
                depth,
                center: j as f64 * delta_r,
                profile,
            });
            segments.push(Segment {
                t_start: t0 + tau,
                t_end: (j + 1) as f64 * period,
                depth: 0.0,
                center: 0.0,
                profile: Profile::Off,
            });
        }
        Self::new(segments)
    }

    /// Writes `t,depth,center` rows with two points per segment (step plot).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,depth,center")?;
        for s in &self.segments {
            writeln!(out, "{:.9},{:.9},{:.9}", s.t_start, s.depth, s.center)?;
            writeln!(out, "{:.9},{:.9},{:.9}", s.t_end, s.depth, s.center)?;
        }
        Ok(())
    }
}
