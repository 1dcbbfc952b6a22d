//! Noise-to-state sensitivity operators along a frozen trajectory: the
//! forward map from control paths on the forced modes into the state
//! space, its adjoint, the Gram (Malliavin) matrix restricted to a tracked
//! mode span, constrained-minimum eigenvalue probes, and the two-window
//! control-residual recursion.
//!
//! All quadrature is trapezoidal on the integrator grid, and the adjoint
//! is the exact discrete transpose of the tangent stepper, so the Gram,
//! forward, and adjoint routes agree to roundoff rather than to scheme
//! order.

use crate::dynamics::{
    adjoint_sweep, simulate, tangent_flow, DynError, Integrator, SimConfig, TrajectoryCheckpoints,
};
use crate::field::SpectralField;
use crate::kvec::BasisIndex;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MalliavinError {
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error("tracked span of {requested} vectors exceeds the cap of {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error("regularized Gram solve failed (beta = {beta:.3e})")]
    SolveFailure { beta: f64 },
}

/// Cap on the tracked span dimension for Gram assembly.
pub const GRAM_DIM_CAP: usize = 256;

/// Control path sampled on quadrature nodes: `values[node][j]` is the
/// coordinate on the j-th forced mode (canonical order).
#[derive(Clone, Debug)]
pub struct ControlPath {
    pub t_start: f64,
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn zeros(t_start: f64, dt: f64, nodes: usize, n_forced: usize) -> Self {
        ControlPath {
            t_start,
            dt,
            values: vec![vec![0.0; n_forced]; nodes],
        }
    }

    /// Quadrature norm squared `int |v|^2 dr` (trapezoid).
    pub fn norm_sq(&self) -> f64 {
        let n = self.values.len();
        let mut acc = 0.0;
        for (i, row) in self.values.iter().enumerate() {
            let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            acc += w * row.iter().map(|v| v * v).sum::<f64>();
        }
        acc * self.dt
    }
}

/// Symmetric positive semidefinite Gram matrix of the noise-to-state map
/// on a tracked span of basis vectors.
#[derive(Clone, Debug)]
pub struct MalliavinGram {
    pub basis: Vec<BasisIndex>,
    pub matrix: DMatrix<f64>,
    pub window: (f64, f64),
    pub quad_nodes: usize,
    pub trajectory_hash: u64,
}

impl MalliavinGram {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }
}

/// Forward map: trapezoidal sum of tangent-propagated impulses
/// `sum_r w_r J_{r,t} Q v_r`, linear in the control.
pub fn apply_forward(
    traj: &TrajectoryCheckpoints,
    integ: &Integrator,
    v: &ControlPath,
    s: f64,
    t: f64,
) -> Result<SpectralField, MalliavinError> {
    let i0 = traj.index_of(s)?;
    let i1 = traj.index_of(t)?;
    assert_eq!(v.values.len(), i1 - i0 + 1, "control nodes must match the window");
    let offsets = integ.forced_offsets();
    let amps = integ.forced_amplitudes();
    let dt = traj.dt();
    let inject = |acc: &mut SpectralField, row: &[f64], w: f64| {
        for ((&off, &b), &val) in offsets.iter().zip(&amps).zip(row) {
            acc.coeffs_mut()[off] += w * dt * b * val;
        }
    };
    let mut acc = SpectralField::zeros(
        traj.states[0].dim(),
        traj.states[0].cutoff(),
    );
    let last = i1 - i0;
    inject(&mut acc, &v.values[0], 0.5);
    for n in 0..(i1 - i0) {
        let u_grid = integ.ev.synth(&traj.states[i0 + n]);
        let aprime = integ.ev.aprime_grids(&u_grid);
        acc = integ.step_tangent_grids(&aprime, &acc);
        let w = if n + 1 == last { 0.5 } else { 1.0 };
        inject(&mut acc, &v.values[n + 1], w);
    }
    Ok(acc)
}

/// Adjoint map: node values `(Q^T K_{r,t} phi)_j` at every quadrature
/// node of the window.
pub fn apply_adjoint(
    traj: &TrajectoryCheckpoints,
    integ: &Integrator,
    phi: &SpectralField,
    s: f64,
    t: f64,
) -> Result<ControlPath, MalliavinError> {
    let i0 = traj.index_of(s)?;
    let i1 = traj.index_of(t)?;
    let offsets = integ.forced_offsets();
    let amps = integ.forced_amplitudes();
    let mut nodes = vec![vec![0.0; offsets.len()]; i1 - i0 + 1];
    let mut phis = [phi.clone()];
    adjoint_sweep(traj, integ, &mut phis, t, s, |node, batch| {
        let row: Vec<f64> = offsets
            .iter()
            .zip(&amps)
            .map(|(&off, &b)| b * batch[0].coeffs()[off])
            .collect();
        nodes[node - i0] = row;
    })?;
    Ok(ControlPath {
        t_start: s,
        dt: traj.dt(),
        values: nodes,
    })
}

/// Assemble the Gram matrix on a tracked span by one batched backward
/// sweep: `G = sum_r w_r Y_r Y_r^T` with `Y_r` the forced-mode pairings
/// of the adjoint-propagated basis.
pub fn malliavin_gram(
    traj: &TrajectoryCheckpoints,
    integ: &Integrator,
    s: f64,
    t: f64,
    basis: &[BasisIndex],
) -> Result<MalliavinGram, MalliavinError> {
    if basis.len() > GRAM_DIM_CAP {
        return Err(MalliavinError::CapExceeded {
            requested: basis.len(),
            cap: GRAM_DIM_CAP,
        });
    }
    let i0 = traj.index_of(s)?;
    let i1 = traj.index_of(t)?;
    let d = basis.len();
    let offsets = integ.forced_offsets();
    let amps = integ.forced_amplitudes();
    let dt = traj.dt();
    let dim = traj.states[0].dim();
    let cutoff = traj.states[0].cutoff();
    let mut phis: Vec<SpectralField> = basis
        .iter()
        .map(|b| {
            let mut f = SpectralField::zeros(dim, cutoff);
            f.set(&b.k, 1.0);
            f
        })
        .collect();
    let mut g = DMatrix::<f64>::zeros(d, d);
    adjoint_sweep(traj, integ, &mut phis, t, s, |node, batch| {
        let w = if node == i0 || node == i1 { 0.5 } else { 1.0 };
        let mut y = DMatrix::<f64>::zeros(d, offsets.len());
        for (a, phi) in batch.iter().enumerate() {
            for (j, (&off, &b)) in offsets.iter().zip(&amps).enumerate() {
                y[(a, j)] = b * phi.coeffs()[off];
            }
        }
        g += (&y * y.transpose()) * (w * dt);
    })?;
    // Symmetrize away the last roundoff.
    let g = (&g + g.transpose()) * 0.5;
    Ok(MalliavinGram {
        basis: basis.to_vec(),
        matrix: g,
        window: (s, t),
        quad_nodes: i1 - i0 + 1,
        trajectory_hash: traj.fingerprint(),
    })
}

/// Result of the constrained minimum probe.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CapMinimum {
    /// Minimum of the quadratic form over unit vectors whose low-mode
    /// mass is at least alpha^2.
    pub value: f64,
    /// Unconstrained minimum eigenvalue of the Gram.
    pub lambda_min_full: f64,
    /// Minimum eigenvalue of the low-mode principal block.
    pub lambda_min_low_block: f64,
    /// Multiplier of the active mass constraint (zero when inactive).
    pub multiplier: f64,
    pub constraint_active: bool,
}

/// Minimize `phi^T G phi` over unit `phi` in the tracked span subject to
/// `|P_low phi| >= alpha`, where the low block collects tracked modes with
/// Euclidean norm at most `n_low`.
///
/// Uses the dual continuation in the constraint multiplier: the bottom
/// eigenspace of `G - mu P` sweeps low-mode mass monotonically from the
/// unconstrained minimizer towards the low block, so bisection on the
/// mass locates the active-constraint optimum; eigenvalue crossings are
/// handled inside the bottom eigenspace.
pub fn min_quadratic_on_cap(gram: &MalliavinGram, alpha: f64, n_low: f64) -> CapMinimum {
    assert!(alpha > 0.0 && alpha <= 1.0);
    let d = gram.dim();
    let low_mask: Vec<bool> = gram
        .basis
        .iter()
        .map(|b| (b.k.norm_sq() as f64) <= n_low * n_low + 1e-12)
        .collect();
    let n_low_count = low_mask.iter().filter(|&&m| m).count();
    assert!(n_low_count > 0, "tracked span misses the low modes entirely");
    let g = &gram.matrix;
    let target = alpha * alpha;

    let low_block: Vec<usize> = (0..d).filter(|&i| low_mask[i]).collect();
    let sub = DMatrix::from_fn(low_block.len(), low_block.len(), |r, c| {
        g[(low_block[r], low_block[c])]
    });
    let lambda_min_low_block = sub
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    // Bottom eigenspace of G - mu P and the range of low-mode mass over it.
    let bottom = |mu: f64| -> (f64, DMatrix<f64>) {
        let mut h = g.clone();
        for (i, &is_low) in low_mask.iter().enumerate() {
            if is_low {
                h[(i, i)] -= mu;
            }
        }
        let eig = h.symmetric_eigen();
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(1.0);
        let cols: Vec<usize> = (0..d)
            .filter(|&i| eig.eigenvalues[i] <= lmin + 1e-12 * scale)
            .collect();
        let v = DMatrix::from_fn(d, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])]);
        (lmin, v)
    };
    // Range of phi^T P phi over unit phi in the span of V.
    let mass_range = |v: &DMatrix<f64>| -> (f64, f64) {
        let pv = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| {
            if low_mask[r] {
                v[(r, c)]
            } else {
                0.0
            }
        });
        let small = v.transpose() * pv;
        let eig = (&small + small.transpose()).scale(0.5).symmetric_eigen();
        let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo.max(0.0), hi.min(1.0))
    };

    let (lmin0, v0) = bottom(0.0);
    let (_, hi0) = mass_range(&v0);
    if hi0 + 1e-12 >= target {
        return CapMinimum {
            value: lmin0,
            lambda_min_full: lmin0,
            lambda_min_low_block,
            multiplier: 0.0,
            constraint_active: false,
        };
    }

    // Grow mu until the bottom eigenspace can carry the required mass.
    let mut hi = gram.trace().max(1.0);
    for _ in 0..200 {
        let (_, v) = bottom(hi);
        if mass_range(&v).1 >= target {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    let mut result = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (lmin, v) = bottom(mid);
        let (mlo, mhi) = mass_range(&v);
        if mlo <= target + 1e-12 && target <= mhi + 1e-12 {
            result = Some((lmin + mid * target, mid));
            break;
        }
        if mhi < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let (value, multiplier) = result.unwrap_or_else(|| {
        // Interval collapsed across a crossing; both endpoints give the
        // same dual value to working precision.
        let (lmin, _) = bottom(hi);
        (lmin + hi * target, hi)
    });
    CapMinimum {
        value,
        lambda_min_full: lmin0,
        lambda_min_low_block,
        multiplier,
        constraint_active: true,
    }
}

/// Diagnostics of one even control window.
#[derive(Clone, Debug, Serialize)]
pub struct WindowDiag {
    pub window_index: usize,
    pub rho_norm: f64,
    pub gram_trace: f64,
    pub gram_sigma_min: f64,
    pub control_energy: f64,
    pub residual_identity_rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct ResidualRun {
    /// `|rho_{2n}|` for n = 0..=n_windows.
    pub rho_norms: Vec<f64>,
    /// `|J_{0,2n} xi|` on the same grid: the control-free reference.
    pub plain_tangent_norms: Vec<f64>,
    /// Realized control per even window (it vanishes on odd windows).
    pub controls: Vec<ControlPath>,
    pub windows: Vec<WindowDiag>,
    pub beta: f64,
}

/// Two-window control-residual recursion. On `[2n, 2n+1]` the control is
/// the regularized least-squares compensation of the propagated residual;
/// on `[2n+1, 2n+2]` it is off. The residual advances in closed form
/// `rho -> J beta (G + beta I)^{-1} J rho`, and the identity
/// `rho_t = J_{0,t} xi - A_{0,t} v` is re-verified independently at every
/// window end.
pub fn control_residual_run(
    cfg: &SimConfig,
    u0: &SpectralField,
    xi: &SpectralField,
    beta: f64,
    n_windows: usize,
) -> Result<ResidualRun, MalliavinError> {
    assert!(beta > 0.0, "regularization must be positive");
    assert!((xi.norm() - 1.0).abs() < 1e-8, "direction must be unit norm");
    let mut cfg = cfg.clone();
    cfg.t_end = (2 * n_windows) as f64;
    let integ = Integrator::new(&cfg)?;
    let traj = simulate(&cfg, u0)?;
    let dim = u0.dim();
    let cutoff = u0.cutoff();

    // Tracked span: the whole simulated box, so the closed form is the
    // exact Galerkin statement.
    let probe = SpectralField::zeros(dim, cutoff);
    let basis: Vec<BasisIndex> = probe
        .modes()
        .map(|(k, _)| BasisIndex::new(k))
        .collect();
    let d = basis.len();
    if d > GRAM_DIM_CAP {
        return Err(MalliavinError::CapExceeded {
            requested: d,
            cap: GRAM_DIM_CAP,
        });
    }
    let to_vec = |f: &SpectralField| {
        DVector::from_iterator(d, basis.iter().map(|b| f.get(&b.k)))
    };
    let to_field = |v: &DVector<f64>| {
        let mut f = SpectralField::zeros(dim, cutoff);
        for (b, &val) in basis.iter().zip(v.iter()) {
            f.set(&b.k, val);
        }
        f
    };

    let mut rho = xi.clone();
    let mut rho_norms = vec![rho.norm()];
    let mut plain_tangent_norms = vec![xi.norm()];
    let mut controls = Vec::new();
    let mut windows = Vec::new();
    // Independent accumulators for the residual identity.
    let mut j_xi = xi.clone();
    let mut a_v = SpectralField::zeros(dim, cutoff);

    for w in 0..n_windows {
        let s = (2 * w) as f64;
        let mid = s + 1.0;
        let e = s + 2.0;
        // Even window: Gram, regularized solve, closed-form residual.
        let gram = malliavin_gram(&traj, &integ, s, mid, &basis)?;
        let j_rho = tangent_flow(&traj, &integ, &rho, s, mid)?;
        let mut reg = gram.matrix.clone();
        for i in 0..d {
            reg[(i, i)] += beta;
        }
        let chol = reg
            .clone()
            .cholesky()
            .ok_or(MalliavinError::SolveFailure { beta })?;
        let y = chol.solve(&to_vec(&j_rho));
        let rho_mid = to_field(&(y.clone() * beta));
        // Realized control on the window and its energy.
        let v = apply_adjoint(&traj, &integ, &to_field(&y), s, mid)?;
        let control_energy = v.norm_sq();
        controls.push(v.clone());

        // Independent identity accumulators: J xi propagates; A v
        // propagates and absorbs the window's impulses.
        j_xi = tangent_flow(&traj, &integ, &j_xi, s, mid)?;
        a_v = propagate_with_control(&traj, &integ, &a_v, &v, s, mid)?;
        let identity_err = rho_mid.sub(&j_xi.sub(&a_v)).norm();
        let rel = identity_err / rho_mid.norm().max(1e-300);

        // Odd window: free tangent propagation of everything.
        rho = tangent_flow(&traj, &integ, &rho_mid, mid, e)?;
        j_xi = tangent_flow(&traj, &integ, &j_xi, mid, e)?;
        a_v = tangent_flow(&traj, &integ, &a_v, mid, e)?;
        rho_norms.push(rho.norm());
        plain_tangent_norms.push(j_xi.norm());

        let eigs = gram.eigenvalues();
        windows.push(WindowDiag {
            window_index: w,
            rho_norm: rho.norm(),
            gram_trace: gram.trace(),
            gram_sigma_min: eigs.first().copied().unwrap_or(0.0),
            control_energy,
            residual_identity_rel_err: rel,
        });
    }
    Ok(ResidualRun {
        rho_norms,
        plain_tangent_norms,
        controls,
        windows,
        beta,
    })
}

/// Tangent propagation of `acc` over `[s, t]` while injecting the control
/// impulses with the same trapezoidal weights as `apply_forward`, so that
/// `A_{0,t} v` accumulates across windows.
fn propagate_with_control(
    traj: &TrajectoryCheckpoints,
    integ: &Integrator,
    acc0: &SpectralField,
    v: &ControlPath,
    s: f64,
    t: f64,
) -> Result<SpectralField, MalliavinError> {
    let i0 = traj.index_of(s)?;
    let i1 = traj.index_of(t)?;
    let offsets = integ.forced_offsets();
    let amps = integ.forced_amplitudes();
    let dt = traj.dt();
    let mut acc = acc0.clone();
    let inject = |acc: &mut SpectralField, row: &[f64], w: f64| {
        for ((&off, &b), &val) in offsets.iter().zip(&amps).zip(row) {
            acc.coeffs_mut()[off] += w * dt * b * val;
        }
    };
    inject(&mut acc, &v.values[0], 0.5);
    for n in 0..(i1 - i0) {
        let u_grid = integ.ev.synth(&traj.states[i0 + n]);
        let aprime = integ.ev.aprime_grids(&u_grid);
        acc = integ.step_tangent_grids(&aprime, &acc);
        let w = if n + 1 == i1 - i0 { 0.5 } else { 1.0 };
        inject(&mut acc, &v.values[n + 1], w);
    }
    Ok(acc)
}
