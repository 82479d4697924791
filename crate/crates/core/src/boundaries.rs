//! Particle boundary treatments: the ground wall-function mirror, the top
//! Dirichlet condition via specular reflection with a velocity jump, lateral
//! inflow/outflow recycling with Gaussian resampling, and the corner fallback.
//!
//! For boundary purposes the accessible box floor is the mirror plane
//! z = z_mirror, not z = 0; the slab underneath belongs to the wall model.

use alloc::vec::Vec;

use crate::domain::{CartesianGrid, ModelConstants};
use crate::estimators::EmpiricalProfile;
use crate::fmath;
use crate::rng::CounterRng;
use crate::sde::{ou_step, ClosureCell, SdeError};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryError {
    /// First-cell center below the roughness length.
    Config,
}

impl core::fmt::Display for BoundaryError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BoundaryError::Config => write!(f, "cell center must lie above the roughness length"),
        }
    }
}

impl core::error::Error for BoundaryError {}

/// Guard under which ⟨w'²⟩ is considered zero and the mirror degrades to a
/// specular bounce.
pub const W2_FLOOR: f64 = 1e-10;

/// Log-law mean wind at height `z` (clamped at the roughness length).
pub fn log_law(u_star: f64, kappa: f64, z0: f64, z: f64) -> f64 {
    if z <= z0 {
        return 0.0;
    }
    u_star / kappa * fmath::ln(z / z0)
}

/// Friction velocity u* = κ √(⟨u⟩² + ⟨v⟩²) / log(z_c/z₀).
pub fn friction_velocity(
    u_mean: f64,
    v_mean: f64,
    z_c: f64,
    constants: &ModelConstants,
) -> Result<f64, BoundaryError> {
    if z_c <= constants.z_0 {
        return Err(BoundaryError::Config);
    }
    let speed = fmath::hypot(u_mean, v_mean);
    Ok(constants.kappa * speed / fmath::ln(z_c / constants.z_0))
}

/// Forced wall covariances: magnitude u*², direction opposing the horizontal
/// mean wind. Zero wind returns (0, 0) by convention.
pub fn wall_covariances(u_mean: f64, v_mean: f64, u_star: f64) -> (f64, f64) {
    let speed = fmath::hypot(u_mean, v_mean);
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    let f = u_star * u_star / speed;
    (-u_mean * f, -v_mean * f)
}

/// Wall state of one floor column.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallColumn {
    pub u_star: f64,
    /// Forced covariance ⟨u'w'⟩, m²/s².
    pub uw: f64,
    /// Forced covariance ⟨v'w'⟩, m²/s².
    pub vw: f64,
    /// Floor-cell ⟨w'²⟩ used by the mirror lift.
    pub w2: f64,
}

/// Per-floor-column wall state, rebuilt once per step and read-only during
/// the particle phase.
#[derive(Debug, Clone)]
pub struct WallState {
    pub columns: Vec<WallColumn>,
    pub nx: usize,
    /// Mirror plane height, meters.
    pub z_mirror: f64,
    /// First-cell-center height, meters.
    pub z_c: f64,
}

impl WallState {
    /// Build from the floor-cell records; z_mirror = ½ z_c.
    pub fn build(grid: &CartesianGrid, constants: &ModelConstants) -> Result<Self, BoundaryError> {
        let z_c = grid.origin[2] + 0.5 * grid.delta[2];
        let z_mirror = 0.5 * z_c;
        let mut columns = Vec::with_capacity(grid.nx * grid.ny);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let rec = &grid.cells[grid.flat(i, j, 0)];
                let u_star = friction_velocity(rec.mean[0], rec.mean[1], z_c, constants)?;
                let (uw, vw) = wall_covariances(rec.mean[0], rec.mean[1], u_star);
                columns.push(WallColumn {
                    u_star,
                    uw,
                    vw,
                    w2: rec.m2[2],
                });
            }
        }
        Ok(WallState {
            columns,
            nx: grid.nx,
            z_mirror,
            z_c,
        })
    }

    #[inline]
    pub fn column(&self, i: usize, j: usize) -> &WallColumn {
        &self.columns[i + self.nx * j]
    }
}

/// Covariance-preserving mirror reflection at z_mirror.
///
/// Position is mirrored about the plane; the vertical velocity flips and the
/// horizontal components are lifted by the forced-covariance terms. Returns
/// `(position, velocity, specular_fallback)`; the fallback fires when ⟨w'²⟩
/// sits below the guard floor.
pub fn mirror_reflect(
    position: Vec3,
    velocity: Vec3,
    wall: &WallColumn,
    z_mirror: f64,
) -> (Vec3, Vec3, bool) {
    let w_out = velocity[2];
    let pos = [position[0], position[1], 2.0 * z_mirror - position[2]];
    if wall.w2 < W2_FLOOR {
        // Pure specular fallback: u, v unchanged, w negated.
        return (pos, [velocity[0], velocity[1], -w_out], true);
    }
    let vel = [
        velocity[0] - 2.0 * wall.uw / wall.w2 * w_out,
        velocity[1] - 2.0 * wall.vw / wall.w2 * w_out,
        -w_out,
    ];
    (pos, vel, false)
}

/// Specular reflection with a velocity jump enforcing a Dirichlet mean at a
/// face (used at the domain top with `u_ext = U_G`).
///
/// The exit time fraction comes from the straight-line trajectory; the
/// velocity is integrated by the exponential scheme up to the hit, jumped to
/// `2 u_ext − U`, then integrated over the remainder. The returned position
/// follows the frozen-velocity retrace X_out − (t_n − t_out)·U_{n−1}.
#[allow(clippy::too_many_arguments)]
pub fn specular_boundary(
    position_prev: Vec3,
    velocity_prev: Vec3,
    closure: &ClosureCell,
    cell_mean: Vec3,
    force: Vec3,
    u_ext: Vec3,
    dt: f64,
    t_out_frac: f64,
    rng: &mut CounterRng,
) -> Result<(Vec3, Vec3), SdeError> {
    let frac = t_out_frac.clamp(0.0, 1.0);
    let x_out = [
        position_prev[0] + frac * dt * velocity_prev[0],
        position_prev[1] + frac * dt * velocity_prev[1],
        position_prev[2] + frac * dt * velocity_prev[2],
    ];
    let rest = (1.0 - frac) * dt;
    let position = [
        x_out[0] - rest * velocity_prev[0],
        x_out[1] - rest * velocity_prev[1],
        x_out[2] - rest * velocity_prev[2],
    ];

    let mut vel = velocity_prev;
    if frac > 0.0 {
        vel = ou_segment(vel, closure, cell_mean, force, frac * dt, rng)?;
    }
    for i in 0..3 {
        vel[i] = 2.0 * u_ext[i] - vel[i];
    }
    if rest > 0.0 {
        vel = ou_segment(vel, closure, cell_mean, force, rest, rng)?;
    }
    Ok((position, vel))
}

fn ou_segment(
    velocity: Vec3,
    closure: &ClosureCell,
    cell_mean: Vec3,
    force: Vec3,
    dt: f64,
    rng: &mut CounterRng,
) -> Result<Vec3, SdeError> {
    let fluct = [
        velocity[0] - cell_mean[0],
        velocity[1] - cell_mean[1],
        velocity[2] - cell_mean[2],
    ];
    let alpha = -closure.rotta_rate;
    let mut out = [0.0f64; 3];
    for i in 0..3 {
        let mut beta = force[i];
        for j in 0..3 {
            let grad_part = closure.g[i][j] + if i == j { closure.rotta_rate } else { 0.0 };
            beta += grad_part * fluct[j];
        }
        out[i] = ou_step(
            velocity[i],
            alpha,
            beta,
            cell_mean[i],
            closure.c_diff,
            dt,
            rng.normal(),
        )?;
    }
    Ok(out)
}

/// Push a position strictly inside the box `[lo, hi)` along the inward
/// normal of every violated face (inward diagonal at corners); magnitude
/// 1e-6 × the smallest cell size. Velocity is the caller's business and
/// stays unchanged.
pub fn corner_push(position: Vec3, lo: Vec3, hi: Vec3, min_delta: f64) -> Vec3 {
    let gamma = 1e-6 * min_delta;
    let mut p = position;
    for ax in 0..3 {
        if p[ax] < lo[ax] {
            p[ax] = lo[ax] + gamma;
        } else if p[ax] >= hi[ax] {
            p[ax] = hi[ax] - gamma;
        }
    }
    p
}

/// Which lateral face a particle left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitFace {
    XMin,
    XMax,
    YMin,
    YMax,
}

/// Re-entry position for a lateral exit: x-exits re-enter at the inflow
/// plane, y-exits wrap to the opposite face; the other coordinates are kept.
pub fn recycle_position(position: Vec3, face: ExitFace, lo: Vec3, hi: Vec3) -> Vec3 {
    let mut p = position;
    match face {
        ExitFace::XMax => {
            p[0] = lo[0] + (position[0] - hi[0]).max(0.0).min(0.5 * (hi[0] - lo[0]))
        }
        // Upstream exits re-enter at the inflow face as well.
        ExitFace::XMin => p[0] = lo[0],
        ExitFace::YMin => p[1] = position[1] + (hi[1] - lo[1]),
        ExitFace::YMax => p[1] = position[1] - (hi[1] - lo[1]),
    }
    p
}

/// Trivariate Gaussian velocity from a stored profile at height `z`.
pub fn sample_profile_velocity(
    profile: &EmpiricalProfile,
    z: f64,
    rng: &mut CounterRng,
) -> Vec3 {
    let level = profile.level_for_z(z);
    sample_gaussian(profile.mean[level], &profile.sqrt_m2[level], rng)
}

/// Warmup-mode velocity: log-law mean (capped at the geostrophic wind above
/// the boundary layer) plus noise rendering the covariance structure
/// `sqrt_m2` (taken from the exit cell).
pub fn sample_loglaw_velocity(
    u_star: f64,
    constants: &ModelConstants,
    z: f64,
    u_cap: f64,
    sqrt_m2: &[[f64; 3]; 3],
    rng: &mut CounterRng,
) -> Vec3 {
    let mean = [
        log_law(u_star, constants.kappa, constants.z_0, z).min(u_cap),
        0.0,
        0.0,
    ];
    sample_gaussian(mean, sqrt_m2, rng)
}

fn sample_gaussian(mean: Vec3, b: &[[f64; 3]; 3], rng: &mut CounterRng) -> Vec3 {
    let eta = rng.normal3();
    let mut v = mean;
    for i in 0..3 {
        for j in 0..3 {
            v[i] += b[i][j] * eta[j];
        }
    }
    v
}

/// Earliest face crossing of the straight-line path `p + t·v`, `t ∈ (0, dt]`,
/// against the box `[lo, hi]`. Returns `(axis, positive_side, t)`.
pub fn first_exit(p: Vec3, v: Vec3, dt: f64, lo: Vec3, hi: Vec3) -> Option<(usize, bool, f64)> {
    let mut best: Option<(usize, bool, f64)> = None;
    for ax in 0..3 {
        if v[ax] > 0.0 {
            let t = (hi[ax] - p[ax]) / v[ax];
            if t <= dt && best.map_or(true, |(_, _, tb)| t < tb) {
                best = Some((ax, true, t.max(0.0)));
            }
        } else if v[ax] < 0.0 {
            let t = (lo[ax] - p[ax]) / v[ax];
            if t <= dt && best.map_or(true, |(_, _, tb)| t < tb) {
                best = Some((ax, false, t.max(0.0)));
            }
        }
    }
    best
}
