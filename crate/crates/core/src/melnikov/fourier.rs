//! Fourier coefficients of the configuration path of a periodic orbit.
//!
//! The closed persistence form only needs a handful of low harmonics, but it
//! needs them clean: the sampler doubles the grid until the top octave of
//! the spectrum is empty, so aliasing cannot leak high-frequency content
//! into the coefficients that matter.

use crate::error::Error;
use crate::flow::{resample_uniform, Trajectory};
use crate::Result;
use nalgebra::DVector;
use rustfft::{num_complex::Complex, FftPlanner};

/// Truncated Fourier series of `q(t)` over one period:
/// `q(t) = a[0]/2 + Σ_{k≥1} a[k] cos(kωt) + b[k] sin(kωt)`.
#[derive(Debug, Clone)]
pub struct FourierData {
    pub period: f64,
    /// Samples per period at convergence.
    pub samples: usize,
    pub a: Vec<DVector<f64>>,
    pub b: Vec<DVector<f64>>,
    /// Spectral energy above the kept harmonics, relative to all of k ≥ 1.
    pub tail_ratio: f64,
    /// Spectral energy in the top octave of the final grid, relative to all
    /// of k ≥ 1; bounded by the alias guard.
    pub top_octave_ratio: f64,
}

const ALIAS_BOUND: f64 = 1e-8;
const MAX_SAMPLES: usize = 1 << 14;

/// Computes position Fourier coefficients $a_k, b_k$ for `k = 0..=harmonics`
/// from the dense trajectory of one orbit period.
pub fn fourier_coefficients(
    traj: &Trajectory,
    period: f64,
    harmonics: usize,
    initial_samples: usize,
) -> Result<FourierData> {
    let dof = traj.dim() / 2;
    let mut n = initial_samples
        .next_power_of_two()
        .max(64)
        .max((4 * (harmonics + 1)).next_power_of_two());
    let mut planner = FftPlanner::<f64>::new();

    loop {
        let rs = resample_uniform(traj, 0.0, period, n)?;
        let fft = planner.plan_fft_forward(n);
        // Per-harmonic spectral energy summed over degrees of freedom.
        let mut energy = vec![0.0f64; n / 2 + 1];
        let mut spectra: Vec<Vec<Complex<f64>>> = Vec::with_capacity(dof);
        for i in 0..dof {
            let mut buf: Vec<Complex<f64>> =
                rs.states.iter().map(|x| Complex::new(x[i], 0.0)).collect();
            fft.process(&mut buf);
            for (k, e) in energy.iter_mut().enumerate() {
                *e += buf[k].norm_sqr();
            }
            spectra.push(buf);
        }
        let total: f64 = energy[1..].iter().sum();
        let top: f64 = energy[n / 4 + 1..].iter().sum();
        let top_ratio = if total > 0.0 { top / total } else { 0.0 };
        if top_ratio > ALIAS_BOUND {
            if n >= MAX_SAMPLES {
                return Err(Error::AliasingPersistent { ratio: top_ratio, samples: n });
            }
            n *= 2;
            continue;
        }

        let kept = harmonics.min(n / 2 - 1);
        let mut a = Vec::with_capacity(kept + 1);
        let mut b = Vec::with_capacity(kept + 1);
        for k in 0..=kept {
            let mut ak = DVector::zeros(dof);
            let mut bk = DVector::zeros(dof);
            for i in 0..dof {
                ak[i] = 2.0 * spectra[i][k].re / n as f64;
                bk[i] = -2.0 * spectra[i][k].im / n as f64;
            }
            a.push(ak);
            b.push(bk);
        }
        let above: f64 = energy[kept + 1..].iter().sum();
        let tail_ratio = if total > 0.0 { above / total } else { 0.0 };
        return Ok(FourierData {
            period,
            samples: n,
            a,
            b,
            tail_ratio,
            top_octave_ratio: top_ratio,
        });
    }
}
