//! Mean-zero scalar fields on the torus in the orthonormalized
//! sine/cosine basis, their norms and projections, and dealiased
//! evaluation of the nonlinear flux divergence.

pub mod transform;

use crate::kvec::{BasisIndex, KVec, Parity};
use crate::lattice::FluxPoly;
use num::complex::Complex64;
use thiserror::Error;
pub use transform::TrigTransform;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("grid of {got} points per axis cannot resolve the request; need at least {needed}")]
    GridTooSmall { needed: usize, got: usize },
}

/// Mean-zero field stored as coordinates over the box `|k|_inf <= cutoff`
/// in the orthonormalized basis; the origin slot stays zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    dim: usize,
    cutoff: usize,
    data: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(dim: usize, cutoff: usize) -> Self {
        assert!(dim >= 1 && cutoff >= 1);
        let side = 2 * cutoff + 1;
        SpectralField {
            dim,
            cutoff,
            data: vec![0.0; side.pow(dim as u32)],
        }
    }

    pub fn from_modes(dim: usize, cutoff: usize, modes: &[(KVec, f64)]) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        for (k, v) in modes {
            f.set(k, *v);
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of storage slots in the box (the origin slot included).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// A field always has at least one tracked pair.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, k: &KVec) -> usize {
        let side = 2 * self.cutoff + 1;
        let n = self.cutoff as i32;
        let mut idx = 0usize;
        for j in (0..self.dim).rev() {
            let c = k.0[j];
            debug_assert!(c.unsigned_abs() as usize <= self.cutoff, "mode outside box");
            idx = idx * side + (c + n) as usize;
        }
        idx
    }

    /// Wavevector of a storage offset; the inverse of `offset`.
    fn wavevector(&self, mut idx: usize) -> KVec {
        let side = 2 * self.cutoff + 1;
        let n = self.cutoff as i32;
        let mut coords = vec![0i32; self.dim];
        for c in coords.iter_mut() {
            *c = (idx % side) as i32 - n;
            idx /= side;
        }
        KVec::new(coords)
    }

    /// Storage offset of a wavevector inside the box.
    pub fn offset_of(&self, k: &KVec) -> usize {
        self.offset(k)
    }

    pub fn get(&self, k: &KVec) -> f64 {
        if k.max_norm() as usize > self.cutoff {
            return 0.0;
        }
        self.data[self.offset(k)]
    }

    pub fn set(&mut self, k: &KVec, v: f64) {
        assert!(!k.is_zero(), "fields are mean-zero; no origin coordinate");
        let o = self.offset(k);
        self.data[o] = v;
    }

    pub fn add_to(&mut self, k: &KVec, v: f64) {
        assert!(!k.is_zero());
        let o = self.offset(k);
        self.data[o] += v;
    }

    /// All `(k, value)` pairs over nonzero wavevectors of the box.
    pub fn modes(&self) -> impl Iterator<Item = (KVec, f64)> + '_ {
        let origin = self.data.len() / 2;
        self.data
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != origin)
            .map(move |(i, &v)| (self.wavevector(i), v))
    }

    /// Nonzero coefficients only, in storage order.
    pub fn nonzero_modes(&self) -> Vec<(KVec, f64)> {
        self.modes().filter(|(_, v)| *v != 0.0).collect()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.data
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        assert_eq!(self.data.len(), other.data.len());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Inner product in the orthonormal coordinates (the L2 pairing).
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Copy into a (possibly larger or smaller) box, dropping what falls
    /// outside the target.
    pub fn resized(&self, cutoff: usize) -> Self {
        let mut out = Self::zeros(self.dim, cutoff);
        for (k, v) in self.modes() {
            if v != 0.0 && k.max_norm() as usize <= cutoff {
                out.set(&k, v);
            }
        }
        out
    }
}

/// Point values on the uniform collocation grid; quadrature against this
/// grid is exact for trig polynomials of per-axis degree below `m`.
#[derive(Clone, Debug)]
pub struct GridField {
    pub dim: usize,
    pub m: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn quadrature(&self) -> f64 {
        let w = (2.0 * std::f64::consts::PI / self.m as f64).powi(self.dim as i32);
        w * self.values.iter().sum::<f64>()
    }
}

/// `e_k(x)`, unnormalized, per the sign convention.
pub fn basis_eval(index: &BasisIndex, point: &[f64]) -> f64 {
    let dot: f64 = index
        .k
        .0
        .iter()
        .zip(point)
        .map(|(&ki, &xi)| ki as f64 * xi)
        .sum();
    match index.parity {
        Parity::Positive => dot.sin(),
        Parity::Negative => -dot.cos(),
    }
}

/// `( sum_k |k|^(2*alpha) u_k^2 )^(1/2)` with Euclidean `|k|`.
pub fn sobolev_norm(field: &SpectralField, alpha: f64) -> f64 {
    let mut acc = 0.0;
    for (k, v) in field.modes() {
        if v != 0.0 {
            acc += (k.norm_sq() as f64).powf(alpha) * v * v;
        }
    }
    acc.sqrt()
}

/// Low-pass projection keeping Euclidean `|k| <= n`.
pub fn project_low(field: &SpectralField, n: f64) -> SpectralField {
    let mut out = field.clone();
    let n2 = n * n;
    let origin = out.data.len() / 2;
    for i in 0..out.data.len() {
        if i == origin {
            continue;
        }
        let k = out.wavevector(i);
        if (k.norm_sq() as f64) > n2 {
            out.data[i] = 0.0;
        }
    }
    out
}

/// High-pass complement `field - project_low(field, n)`.
pub fn project_high(field: &SpectralField, n: f64) -> SpectralField {
    field.sub(&project_low(field, n))
}

/// L^p norm by exact quadrature; `p` even, grid large enough that `u^p`
/// is resolved without aliasing.
pub fn lp_norm(field: &SpectralField, p: usize, grid_size: usize) -> Result<f64, FieldError> {
    assert!(p >= 2 && p % 2 == 0, "p must be a positive even integer");
    let needed = p * field.cutoff() + 1;
    if grid_size < needed {
        return Err(FieldError::GridTooSmall {
            needed,
            got: grid_size,
        });
    }
    let t = TrigTransform::new(field.dim(), grid_size);
    let grid = t.synthesize(field.modes());
    let w = t.cell_weight();
    let sum: f64 = grid.iter().map(|&v| v.powi(p as i32)).sum();
    Ok((w * sum).powf(1.0 / p as f64))
}

/// Discrete L^1 norm (grid quadrature of |u|); not bandlimited, so this
/// is the collocation value rather than the exact integral.
pub fn l1_norm(field: &SpectralField, grid_size: usize) -> f64 {
    l1_norm_with(&TrigTransform::new(field.dim(), grid_size), field)
}

/// Same, against a prebuilt transform (the per-step path).
pub fn l1_norm_with(t: &TrigTransform, field: &SpectralField) -> f64 {
    let grid = t.synthesize(field.modes());
    t.cell_weight() * grid.iter().map(|v| v.abs()).sum::<f64>()
}

/// Divergence of the flux applied to a field, fully dealiased. Output
/// carries cutoff `degree * cutoff(u)`; callers may re-project.
pub fn flux_divergence(
    field: &SpectralField,
    flux: &FluxPoly,
    grid_size: usize,
) -> Result<SpectralField, FieldError> {
    let ev = FluxEvaluator::new(field.dim(), field.cutoff(), grid_size, flux)?;
    let degree = ev.degree;
    Ok(ev.div_flux(field, degree * field.cutoff()))
}

/// Precomputed pipeline for one (cutoff, grid, flux) combination: flux
/// divergence, its linearization applied forward, and the exact discrete
/// transpose of the linearization.
pub struct FluxEvaluator {
    pub t: TrigTransform,
    dim: usize,
    cutoff: usize,
    pub degree: usize,
    /// coeff[i][j] multiplies u^j in component i; j = 0 never read.
    coeff: Vec<Vec<f64>>,
    /// Positive-class mode pairing between field box and amplitude box:
    /// (field offset of k, field offset of -k, amp slot of k, amp slot of -k).
    pairs: Vec<(usize, usize, usize, usize)>,
    inv_two_c: f64,
    two_c: f64,
}

impl FluxEvaluator {
    pub fn new(
        dim: usize,
        cutoff: usize,
        grid_size: usize,
        flux: &FluxPoly,
    ) -> Result<Self, FieldError> {
        let degree = flux.degree().map_or(1, |d| d.max(1));
        let needed = 2 * degree * cutoff + 1;
        if grid_size < needed {
            return Err(FieldError::GridTooSmall {
                needed,
                got: grid_size,
            });
        }
        let t = TrigTransform::new(dim, grid_size);
        let probe = SpectralField::zeros(dim, cutoff);
        let mut pairs = Vec::new();
        let origin = probe.data.len() / 2;
        for i in 0..probe.data.len() {
            if i == origin {
                continue;
            }
            let k = probe.wavevector(i);
            if k.parity() == Parity::Positive {
                let neg = k.neg();
                pairs.push((i, probe.offset(&neg), t.slot(&k), t.slot(&neg)));
            }
        }
        let c = TrigTransform::basis_norm(dim);
        Ok(FluxEvaluator {
            t,
            dim,
            cutoff,
            degree,
            coeff: flux.to_f64_table(),
            pairs,
            inv_two_c: 1.0 / (2.0 * c),
            two_c: 2.0 * c,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn amplitudes(&self, u: &SpectralField) -> Vec<Complex64> {
        debug_assert_eq!(u.cutoff, self.cutoff);
        let mut amps = vec![Complex64::default(); self.t.points()];
        for &(op, on, sp, sn) in &self.pairs {
            let a = Complex64::new(-u.data[on] * self.inv_two_c, -u.data[op] * self.inv_two_c);
            amps[sp] = a;
            amps[sn] = a.conj();
        }
        amps
    }

    /// Grid values of a field at this evaluator's resolution.
    pub fn synth(&self, u: &SpectralField) -> Vec<f64> {
        self.t.grid_from_amplitudes(self.amplitudes(u))
    }

    /// Read spectral coordinates (up to `out_cutoff`) back from an
    /// amplitude box.
    fn read_out(&self, amps: &[Complex64], out_cutoff: usize) -> SpectralField {
        let out_cutoff = out_cutoff.min(self.t.max_freq() as usize);
        let mut out = SpectralField::zeros(self.dim, out_cutoff);
        let origin = out.data.len() / 2;
        for i in 0..out.data.len() {
            if i == origin {
                continue;
            }
            let k = out.wavevector(i);
            match k.parity() {
                Parity::Positive => {
                    out.data[i] = -self.two_c * amps[self.t.slot(&k)].im;
                }
                Parity::Negative => {
                    out.data[i] = -self.two_c * amps[self.t.slot(&k.neg())].re;
                }
            }
        }
        out
    }

    /// Pointwise polynomial `sum_{j>=1} coeff[i][j] u^j` on the grid.
    fn poly_grid(&self, i: usize, u_grid: &[f64]) -> Vec<f64> {
        let cs = &self.coeff[i];
        u_grid
            .iter()
            .map(|&u| {
                let mut acc = 0.0;
                for j in (1..cs.len()).rev() {
                    acc = (acc + cs[j]) * u;
                }
                acc
            })
            .collect()
    }

    /// Pointwise derivative polynomial `sum_{j>=1} j coeff[i][j] u^(j-1)`.
    pub fn poly_prime_grid(&self, i: usize, u_grid: &[f64]) -> Vec<f64> {
        let cs = &self.coeff[i];
        u_grid
            .iter()
            .map(|&u| {
                let mut acc = 0.0;
                for j in (2..cs.len()).rev() {
                    acc = acc * u + (j as f64) * cs[j];
                }
                if cs.len() >= 2 {
                    acc = acc * u + cs[1];
                }
                acc
            })
            .collect()
    }

    /// Pointwise second derivative `sum_{j>=2} j(j-1) coeff[i][j] u^(j-2)`.
    pub fn poly_second_grid(&self, i: usize, u_grid: &[f64]) -> Vec<f64> {
        let cs = &self.coeff[i];
        u_grid
            .iter()
            .map(|&u| {
                let mut acc = 0.0;
                for j in (2..cs.len()).rev() {
                    acc = acc * u + (j * (j - 1)) as f64 * cs[j];
                }
                acc
            })
            .collect()
    }

    /// `sum_i d/dx_i g_i` from grid components, truncated to `out_cutoff`.
    pub fn divergence_of_grids(&self, grids: &[Vec<f64>], out_cutoff: usize) -> SpectralField {
        let boxes: Vec<Vec<Complex64>> = grids.iter().map(|g| self.t.analyze(g)).collect();
        let mut combined = vec![Complex64::default(); self.t.points()];
        let h = self.t.max_freq();
        let out_band = (out_cutoff.min(h as usize)) as i32;
        // Accumulate i*<k, a_k> over the output band only.
        let mut k = vec![-out_band; self.dim];
        'outer: loop {
            let kv = KVec::new(k.clone());
            let slot = self.t.slot(&kv);
            let mut s = Complex64::default();
            for (i, b) in boxes.iter().enumerate() {
                s += b[slot] * (k[i] as f64);
            }
            combined[slot] = Complex64::new(0.0, 1.0) * s;
            for j in 0..self.dim {
                k[j] += 1;
                if k[j] <= out_band {
                    continue 'outer;
                }
                k[j] = -out_band;
            }
            break;
        }
        self.read_out(&combined, out_cutoff)
    }

    /// `div A(u)`, dealiased; constant flux terms contribute nothing.
    pub fn div_flux(&self, u: &SpectralField, out_cutoff: usize) -> SpectralField {
        let u_grid = self.synth(u);
        let grids: Vec<Vec<f64>> = (0..self.dim).map(|i| self.poly_grid(i, &u_grid)).collect();
        self.divergence_of_grids(&grids, out_cutoff)
    }

    /// Grids of `A_i'(u)` for a frozen base state, shared by tangent and
    /// adjoint sweeps.
    pub fn aprime_grids(&self, u_grid: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.poly_prime_grid(i, u_grid)).collect()
    }

    pub fn asecond_grids(&self, u_grid: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.poly_second_grid(i, u_grid)).collect()
    }

    /// Forward linearization `sum_i d/dx_i ( g_i * xi )`.
    pub fn div_mult(&self, g: &[Vec<f64>], xi: &SpectralField, out_cutoff: usize) -> SpectralField {
        let xi_grid = self.synth(xi);
        let grids: Vec<Vec<f64>> = g
            .iter()
            .map(|gi| gi.iter().zip(&xi_grid).map(|(a, b)| a * b).collect())
            .collect();
        self.divergence_of_grids(&grids, out_cutoff)
    }

    /// Transpose of `xi -> -div_mult(g, xi)` under the L2 pairing:
    /// `zeta -> sum_i g_i * d/dx_i zeta`, truncated to `out_cutoff`.
    pub fn grad_dot(&self, g: &[Vec<f64>], zeta: &SpectralField, out_cutoff: usize) -> SpectralField {
        let amps = self.amplitudes(zeta);
        let mut acc = vec![0.0; self.t.points()];
        let h = self.t.max_freq();
        for (i, gi) in g.iter().enumerate() {
            // d/dx_i zeta on the grid.
            let mut deriv = vec![Complex64::default(); self.t.points()];
            let band = self.cutoff as i32;
            debug_assert!(band <= h);
            let mut k = vec![-band; self.dim];
            'outer: loop {
                let kv = KVec::new(k.clone());
                let slot = self.t.slot(&kv);
                deriv[slot] = Complex64::new(0.0, k[i] as f64) * amps[slot];
                for j in 0..self.dim {
                    k[j] += 1;
                    if k[j] <= band {
                        continue 'outer;
                    }
                    k[j] = -band;
                }
                break;
            }
            let dgrid = self.t.grid_from_amplitudes(deriv);
            for ((a, &gv), &dv) in acc.iter_mut().zip(gi).zip(&dgrid) {
                *a += gv * dv;
            }
        }
        let amps = self.t.analyze(&acc);
        self.read_out(&amps, out_cutoff)
    }

    /// Pointwise product of two fields on the grid.
    pub fn product_grid(&self, a: &SpectralField, b: &SpectralField) -> Vec<f64> {
        let ga = self.synth(a);
        let gb = self.synth(b);
        ga.iter().zip(&gb).map(|(x, y)| x * y).collect()
    }

    pub fn grid_field(&self, u: &SpectralField) -> GridField {
        GridField {
            dim: self.dim,
            m: self.t.grid_size(),
            values: self.synth(u),
        }
    }
}
