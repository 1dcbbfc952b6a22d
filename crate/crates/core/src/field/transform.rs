//! Fast transforms between the real sine/cosine mode coordinates and
//! collocation grids on `[-pi, pi)^d`.
//!
//! Conventions. Grid points are `x_n = -pi + 2*pi*n/m` per axis with `m`
//! odd, so the Nyquist mode is absent and integer frequencies live in
//! `[-(m-1)/2, (m-1)/2]`. A real field
//!
//! ```text
//! u(x) = sum_k u_k * ehat_k(x),   ehat_k = e_k / |e_k|,  |e_k|^2 = (2*pi)^d / 2
//! ```
//!
//! with `e_k = sin<k,x>` on the positive sign class and `-cos<k,x>` on the
//! negative one, maps to complex exponential amplitudes
//!
//! ```text
//! a_k = (-i*u_k - u_{-k}) / (2*c),  c = |e_k|,  k in the positive class,
//! ```
//!
//! and back via `u_k = -2*c*Im(a_k)`, `u_{-k} = -2*c*Re(a_k)`. The factor
//! `(-1)^{k_j}` per axis absorbs the `-pi` grid origin, after which the
//! plain unnormalized DFT applies. With `m` at least twice the occupied
//! bandwidth plus one, analysis of a synthesized field is exact.

use num::complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

use crate::kvec::{KVec, Parity};

/// Shared plan for a fixed odd grid size and dimension.
pub struct TrigTransform {
    dim: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `(-1)^{sum_j k_j}` per storage slot, absorbing the grid origin.
    phase: Vec<f64>,
}

impl TrigTransform {
    pub fn new(dim: usize, m: usize) -> Self {
        assert!(m % 2 == 1, "grid size must be odd");
        assert!(dim >= 1);
        let mut planner = FftPlanner::new();
        let points = m.pow(dim as u32);
        // Per-axis sign of (-1)^f where f is the signed frequency at slot s.
        let axis_sign: Vec<f64> = (0..m)
            .map(|s| {
                let f = if s <= (m - 1) / 2 {
                    s as i64
                } else {
                    s as i64 - m as i64
                };
                if f.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let mut phase = vec![1.0; points];
        for (slot, p) in phase.iter_mut().enumerate() {
            let mut rem = slot;
            for _ in 0..dim {
                *p *= axis_sign[rem % m];
                rem /= m;
            }
        }
        TrigTransform {
            dim,
            m,
            forward: planner.plan_fft(m, FftDirection::Forward),
            inverse: planner.plan_fft(m, FftDirection::Inverse),
            phase,
        }
    }

    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    /// Largest representable per-axis frequency.
    pub fn max_freq(&self) -> i32 {
        ((self.m - 1) / 2) as i32
    }

    /// Quadrature weight `(2*pi/m)^d` of one grid cell.
    pub fn cell_weight(&self) -> f64 {
        (2.0 * std::f64::consts::PI / self.m as f64).powi(self.dim as i32)
    }

    /// Normalization `|e_k| = sqrt((2*pi)^d / 2)` of the unnormalized basis.
    pub fn basis_norm(dim: usize) -> f64 {
        ((2.0 * std::f64::consts::PI).powi(dim as i32) / 2.0).sqrt()
    }

    /// Storage slot of frequency `k` (coordinates taken modulo `m`).
    pub fn slot(&self, k: &KVec) -> usize {
        let m = self.m as i32;
        let mut idx = 0usize;
        for j in (0..self.dim).rev() {
            let f = k.0[j].rem_euclid(m) as usize;
            idx = idx * self.m + f;
        }
        idx
    }

    /// In-place FFT along every axis.
    fn fft_all_axes(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        let total = buf.len();
        let mut line = vec![Complex64::default(); m];
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = m.pow(axis as u32);
            let block = stride * m;
            let blocks = total / block;
            for b in 0..blocks {
                for off in 0..stride {
                    let base = b * block + off;
                    if stride == 1 {
                        line.copy_from_slice(&buf[base..base + m]);
                    } else {
                        for (t, l) in line.iter_mut().enumerate() {
                            *l = buf[base + t * stride];
                        }
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    if stride == 1 {
                        buf[base..base + m].copy_from_slice(&line);
                    } else {
                        for (t, l) in line.iter().enumerate() {
                            buf[base + t * stride] = *l;
                        }
                    }
                }
            }
        }
    }

    /// Grid values from a phase-folded amplitude box (consumes the box).
    pub fn grid_from_amplitudes(&self, mut amps: Vec<Complex64>) -> Vec<f64> {
        for (a, &p) in amps.iter_mut().zip(&self.phase) {
            if p < 0.0 {
                *a = -*a;
            }
        }
        self.fft_all_axes(&mut amps, &self.inverse.clone());
        amps.iter().map(|z| z.re).collect()
    }

    /// Complex amplitudes of the (bandlimited) grid function.
    pub fn analyze(&self, grid: &[f64]) -> Vec<Complex64> {
        assert_eq!(grid.len(), self.points());
        let mut buf: Vec<Complex64> = grid.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_all_axes(&mut buf, &self.forward.clone());
        let scale = 1.0 / self.points() as f64;
        for (a, &p) in buf.iter_mut().zip(&self.phase) {
            *a *= p * scale;
        }
        buf
    }

    /// Amplitude box from `(k, u_k)` mode pairs.
    pub fn amplitudes_from_modes(&self, modes: impl Iterator<Item = (KVec, f64)>) -> Vec<Complex64> {
        let c = Self::basis_norm(self.dim);
        let mut amps = vec![Complex64::default(); self.points()];
        for (k, v) in modes {
            if v == 0.0 {
                continue;
            }
            debug_assert!(!k.is_zero());
            debug_assert!(k.max_norm() <= self.max_freq(), "mode outside grid band");
            let slot = self.slot(&k);
            let conj_slot = self.slot(&k.neg());
            match k.parity() {
                Parity::Positive => {
                    // a_k gains -i*v/(2c); its conjugate partner +i*v/(2c).
                    amps[slot].im += -v / (2.0 * c);
                    amps[conj_slot].im += v / (2.0 * c);
                }
                Parity::Negative => {
                    // The positive partner's amplitude gains -v/(2c) (real).
                    amps[conj_slot].re += -v / (2.0 * c);
                    amps[slot].re += -v / (2.0 * c);
                }
            }
        }
        amps
    }

    /// Synthesize grid values from mode coordinates.
    pub fn synthesize(&self, modes: impl Iterator<Item = (KVec, f64)>) -> Vec<f64> {
        let amps = self.amplitudes_from_modes(modes);
        self.grid_from_amplitudes(amps)
    }

    /// Mode coordinate `u_k` read off an amplitude box, nonzero `k`.
    pub fn mode_from_amplitudes(&self, amps: &[Complex64], k: &KVec) -> f64 {
        let c = Self::basis_norm(self.dim);
        match k.parity() {
            Parity::Positive => -2.0 * c * amps[self.slot(k)].im,
            Parity::Negative => -2.0 * c * amps[self.slot(&k.neg())].re,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn synthesis_matches_pointwise_basis_evaluation() {
        for dim in 1..=2usize {
            let m = 9;
            let t = TrigTransform::new(dim, m);
            let modes: Vec<(KVec, f64)> = if dim == 1 {
                vec![(KVec::new(vec![1]), 0.7), (KVec::new(vec![-2]), -1.3)]
            } else {
                vec![
                    (KVec::new(vec![1, 0]), 0.7),
                    (KVec::new(vec![0, -2]), -1.3),
                    (KVec::new(vec![-1, 2]), 0.4),
                ]
            };
            let grid = t.synthesize(modes.clone().into_iter());
            let c = TrigTransform::basis_norm(dim);
            let h = 2.0 * std::f64::consts::PI / m as f64;
            let mut idx = vec![0usize; dim];
            for (slot, &val) in grid.iter().enumerate() {
                let mut rem = slot;
                for item in idx.iter_mut() {
                    *item = rem % m;
                    rem /= m;
                }
                let x: Vec<f64> = idx
                    .iter()
                    .map(|&i| -std::f64::consts::PI + h * i as f64)
                    .collect();
                let mut want = 0.0;
                for (k, v) in &modes {
                    let dot: f64 = k.0.iter().zip(&x).map(|(&ki, xi)| ki as f64 * xi).sum();
                    let e = match k.parity() {
                        Parity::Positive => dot.sin(),
                        Parity::Negative => -dot.cos(),
                    };
                    want += v * e / c;
                }
                assert_relative_eq!(val, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn basis_norm_is_the_single_noise_conversion_constant() {
        // |e_k|^2 = integral of sin^2 (or cos^2) over the torus.
        for d in 1..=3usize {
            let want = ((2.0 * std::f64::consts::PI).powi(d as i32) / 2.0).sqrt();
            assert_relative_eq!(TrigTransform::basis_norm(d), want, max_relative = 1e-15);
        }
        assert_relative_eq!(
            TrigTransform::basis_norm(1),
            std::f64::consts::PI.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn round_trip_is_identity() {
        let t = TrigTransform::new(2, 11);
        let modes = vec![
            (KVec::new(vec![1, 2]), 1.0),
            (KVec::new(vec![-3, 1]), -0.25),
            (KVec::new(vec![0, -5]), 2.0),
        ];
        let grid = t.synthesize(modes.clone().into_iter());
        let amps = t.analyze(&grid);
        for (k, v) in &modes {
            assert_relative_eq!(t.mode_from_amplitudes(&amps, k), *v, max_relative = 1e-12);
        }
        // Mean of a mean-zero field vanishes.
        let mean: f64 = grid.iter().sum::<f64>();
        assert!(mean.abs() < 1e-9);
    }
}
