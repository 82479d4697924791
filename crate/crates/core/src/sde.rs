//! Turbulence closure coefficients and the per-particle prediction step.
//!
//! Each velocity component is advanced over a time step by the exact solution
//! of a frozen-coefficient Ornstein-Uhlenbeck equation (partial exponential
//! scheme). The relaxation rate α carries only the guaranteed-negative Rotta
//! diagonal; the gradient part of the drift tensor and all body forces enter
//! through the affine term β, frozen at the step start, so the scheme stays
//! stable for arbitrarily large |α|Δt.

use alloc::vec::Vec;

use crate::domain::{CartesianGrid, CellRecord, ModelConstants};
use crate::fmath;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeError {
    /// α > 0 would make the exponential scheme grow without bound.
    UnstableAlpha,
    BadParameter,
}

impl core::fmt::Display for SdeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SdeError::UnstableAlpha => write!(f, "positive relaxation rate refused"),
            SdeError::BadParameter => write!(f, "invalid closure parameter"),
        }
    }
}

impl core::error::Error for SdeError {}

/// Closure coefficients of one cell, frozen for the duration of a step.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClosureCell {
    /// Drift tensor G = −(C_R/2)(ε/k)δ + C₂∇⟨U⟩, 1/s.
    pub g: [[f64; 3]; 3],
    /// The Rotta relaxation rate (C_R/2)(ε/k), 1/s (≥ 0).
    pub rotta_rate: f64,
    /// Diffusion amplitude √(C₀ ε).
    pub c_diff: f64,
    /// Dissipation rate, m²/s³.
    pub eps: f64,
    pub c0: f64,
    /// Production rate ½ tr(𝒫), m²/s³.
    pub prod: f64,
}

/// Piecewise-linear mixing length: κz below the knee, κ·z_knee above.
pub fn mixing_length(z: f64, constants: &ModelConstants) -> f64 {
    debug_assert!(z >= 0.0);
    if z <= constants.z_lm {
        constants.kappa * z
    } else {
        constants.kappa * constants.z_lm
    }
}

/// Dissipation ε = C_ε k^{3/2} / ℓ_m.
pub fn dissipation(k: f64, l_m: f64, constants: &ModelConstants) -> Result<f64, SdeError> {
    if l_m <= 0.0 {
        return Err(SdeError::BadParameter);
    }
    Ok(constants.c_eps * fmath::powf(k.max(0.0), 1.5) / l_m)
}

/// The ratio ε/k in its well-posed form C_ε √k / ℓ_m (→ 0 as k → 0; no
/// quotient is ever formed).
pub fn eps_over_k(k: f64, l_m: f64, constants: &ModelConstants) -> Result<f64, SdeError> {
    if l_m <= 0.0 {
        return Err(SdeError::BadParameter);
    }
    Ok(constants.c_eps * fmath::sqrt(k.max(0.0)) / l_m)
}

/// Production tensor 𝒫ᵢⱼ = −Σ_k (⟨u'ⁱu'ᵏ⟩ ∂⟨uʲ⟩/∂x_k + ⟨u'ʲu'ᵏ⟩ ∂⟨uⁱ⟩/∂x_k)
/// and the scalar rate ½ tr 𝒫.
pub fn production(rec: &CellRecord, grad: &[[f64; 3]; 3]) -> ([[f64; 3]; 3], f64) {
    let mut p = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for l in 0..3 {
                s += rec.moment(i, l) * grad[j][l] + rec.moment(j, l) * grad[i][l];
            }
            p[i][j] = -s;
        }
    }
    let scalar = 0.5 * (p[0][0] + p[1][1] + p[2][2]);
    (p, scalar)
}

/// IP-model diffusion constant C₀ = ⅔(C_R + C₂ 𝒫/ε − 1), clamped at 0.
///
/// ε = 0 (laminar cell) returns 0 by convention.
pub fn c0_coefficient(prod: f64, eps: f64, constants: &ModelConstants) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    let c0 = 2.0 / 3.0 * (constants.c_r + constants.c_2 * prod / eps - 1.0);
    c0.max(0.0)
}

/// Drift tensor G = −(C_R/2)(ε/k) δᵢⱼ + C₂ ∂⟨uⁱ⟩/∂xⱼ with the ratio in its
/// well-posed form.
pub fn drift_tensor(
    k: f64,
    l_m: f64,
    grad: &[[f64; 3]; 3],
    constants: &ModelConstants,
) -> Result<[[f64; 3]; 3], SdeError> {
    let rate = eps_over_k(k, l_m, constants)?;
    let mut g = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = constants.c_2 * grad[i][j];
        }
        g[i][i] -= 0.5 * constants.c_r * rate;
    }
    Ok(g)
}

/// Closure coefficients of one cell from its record, its mean-gradient
/// tensor, and the cell-center height.
pub fn closure_for_cell(
    rec: &CellRecord,
    grad: &[[f64; 3]; 3],
    z: f64,
    constants: &ModelConstants,
) -> Result<ClosureCell, SdeError> {
    // Floor on ℓ_m keeps the ground cell finite; the rate still vanishes
    // with k.
    let l_m = mixing_length(z, constants).max(constants.kappa * 1e-9);
    let eps = dissipation(rec.k, l_m, constants)?;
    let (_, prod) = production(rec, grad);
    let c0 = c0_coefficient(prod, eps, constants);
    let g = drift_tensor(rec.k, l_m, grad, constants)?;
    let rotta_rate = 0.5 * constants.c_r * eps_over_k(rec.k, l_m, constants)?;
    Ok(ClosureCell {
        g,
        rotta_rate,
        c_diff: fmath::sqrt(c0 * eps),
        eps,
        c0,
        prod,
    })
}

/// One exact step of the frozen-coefficient OU equation
/// dZ = α(Z − m)dt + β dt + σ dW.
///
/// For α < 0 this is the exponential scheme with Gaussian standard deviation
/// γ = σ√((1 − e^{2αΔt})/(−2α)); α = 0 takes the analytic Euler-Maruyama
/// limit (removable singularity).
pub fn ou_step(
    z: f64,
    alpha: f64,
    beta: f64,
    m: f64,
    sigma: f64,
    dt: f64,
    eta: f64,
) -> Result<f64, SdeError> {
    debug_assert!(dt > 0.0);
    if alpha > 0.0 {
        return Err(SdeError::UnstableAlpha);
    }
    if alpha == 0.0 {
        return Ok(z + beta * dt + sigma * fmath::sqrt(dt) * eta);
    }
    // Equivalent to e^{αΔt}(Z − m + β/α) + (m − β/α) + γη, written through
    // expm1 so tiny α does not cancel catastrophically in β/α.
    let x = alpha * dt;
    let e = fmath::exp(x);
    let em1_over_alpha = fmath::expm1(x) / alpha;
    Ok(e * z + (1.0 - e) * m + beta * em1_over_alpha + ou_gamma(alpha, sigma, dt) * eta)
}

/// Gaussian standard deviation of one `ou_step` draw.
pub fn ou_gamma(alpha: f64, sigma: f64, dt: f64) -> f64 {
    if alpha == 0.0 {
        sigma * fmath::sqrt(dt)
    } else {
        // (1 − e^{2αΔt})/(−2α) via expm1 for stability near α = 0.
        sigma * fmath::sqrt(fmath::expm1(2.0 * alpha * dt) / (2.0 * alpha))
    }
}

/// Prediction step for one particle: ballistic position update plus the
/// partial exponential velocity update with frozen cell coefficients.
///
/// `force` is the total body force per unit mass (turbine terms); the mean
/// pressure gradient is not applied here, it is realized by the projection
/// step. The three Gaussian draws in `eta` must be independent.
pub fn predict_particle(
    position: Vec3,
    velocity: Vec3,
    closure: &ClosureCell,
    cell_mean: Vec3,
    force: Vec3,
    dt: f64,
    eta: [f64; 3],
) -> Result<(Vec3, Vec3), SdeError> {
    let new_pos = [
        position[0] + dt * velocity[0],
        position[1] + dt * velocity[1],
        position[2] + dt * velocity[2],
    ];
    let fluct = [
        velocity[0] - cell_mean[0],
        velocity[1] - cell_mean[1],
        velocity[2] - cell_mean[2],
    ];
    let alpha = -closure.rotta_rate;
    let mut new_vel = [0.0f64; 3];
    for i in 0..3 {
        // β carries the body force and the full C₂-gradient contribution,
        // including its diagonal (g + rotta_rate·I restores it).
        let mut beta = force[i];
        for j in 0..3 {
            let grad_part = closure.g[i][j] + if i == j { closure.rotta_rate } else { 0.0 };
            beta += grad_part * fluct[j];
        }
        new_vel[i] = ou_step(
            velocity[i],
            alpha,
            beta,
            cell_mean[i],
            closure.c_diff,
            dt,
            eta[i],
        )?;
    }
    Ok((new_pos, new_vel))
}

/// Mean-velocity gradient tensor on the grid: centered differences in the
/// interior, first-order one-sided at boundaries. `grad[i][j] = ∂⟨uⁱ⟩/∂xⱼ`.
pub fn velocity_gradients(grid: &CartesianGrid) -> Vec<[[f64; 3]; 3]> {
    let mut out = alloc::vec![[[0.0f64; 3]; 3]; grid.n_cells()];
    let dims = [grid.nx, grid.ny, grid.nz];
    for idx in 0..grid.n_cells() {
        let (i, j, k) = grid.unflat(idx);
        let pos = [i, j, k];
        let mut grad = [[0.0f64; 3]; 3];
        for ax in 0..3 {
            let n = dims[ax];
            if n == 1 {
                continue;
            }
            let h = grid.delta[ax];
            let (lo, hi, denom) = if pos[ax] == 0 {
                (idx, grid.neighbor(idx, ax, 1), h)
            } else if pos[ax] == n - 1 {
                (grid.neighbor(idx, ax, -1), idx, h)
            } else {
                (
                    grid.neighbor(idx, ax, -1),
                    grid.neighbor(idx, ax, 1),
                    2.0 * h,
                )
            };
            for comp in 0..3 {
                grad[comp][ax] = (grid.cells[hi].mean[comp] - grid.cells[lo].mean[comp]) / denom;
            }
        }
        out[idx] = grad;
    }
    out
}
