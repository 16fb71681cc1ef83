//! FFT plumbing shared by the grid observables and the propagator.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward/inverse transform pair for one grid size. The inverse is scaled so
/// that `inverse(forward(x)) == x`.
#[derive(Clone)]
pub(crate) struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    scale: f64,
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        });
        let len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); len],
            scale: 1.0 / n as f64,
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.forward.process_with_scratch(data, &mut self.scratch);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.inverse.process_with_scratch(data, &mut self.scratch);
        let s = self.scale;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Wavevectors in FFT order for `n` points with spacing `dx`.
pub(crate) fn wavevectors(n: usize, dx: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * dx);
    (0..n)
        .map(|j| {
            let m = if j < n.div_ceil(2) {
                j as i64
            } else {
                j as i64 - n as i64
            };
            m as f64 * dk
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavevector_ladder_layout() {
        let k = wavevectors(8, 0.5);
        let dk = 2.0 * PI / 4.0;
        let expect = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0];
        for (a, b) in k.iter().zip(expect) {
            assert!((a - b * dk).abs() < 1e-14);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut fft = FftPair::new(64);
        let orig: Vec<Complex64> = (0..64)
            .map(|j| Complex64::new((j as f64).sin(), (j as f64 * 0.3).cos()))
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
