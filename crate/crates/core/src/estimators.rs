//! Particle-to-grid conditional-expectation estimators.
//!
//! The dynamics consume the order-0 partitioning estimates (per-cell means and
//! central second moments); the cloud-in-cell deposit is for output fields
//! only. Sums always run in the caller-supplied index order so results are
//! bit-stable for a fixed seed regardless of worker count.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{classify_turbine_region, CartesianGrid, Particle, TurbineConfig, TurbineRegion};
use crate::fmath;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorError {
    EmptyCell,
    /// Fewer than two samples: central moments undefined.
    DegenerateStatistics,
    /// Kernel weights all vanished at the query point.
    NoSupport,
    /// No particle inside the requested region.
    EmptyRegion,
}

impl core::fmt::Display for EstimatorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EstimatorError::EmptyCell => write!(f, "empty cell"),
            EstimatorError::DegenerateStatistics => write!(f, "fewer than two samples in cell"),
            EstimatorError::NoSupport => write!(f, "kernel has no support at query point"),
            EstimatorError::EmptyRegion => write!(f, "no particle in region"),
        }
    }
}

impl core::error::Error for EstimatorError {}

/// Arithmetic mean of `f(U)` over the particles of one cell.
pub fn partition_mean<F: Fn(Vec3) -> f64>(
    particles_in_cell: &[Particle],
    f: F,
) -> Result<f64, EstimatorError> {
    if particles_in_cell.is_empty() {
        return Err(EstimatorError::EmptyCell);
    }
    let sum: f64 = particles_in_cell.iter().map(|p| f(p.velocity)).sum();
    Ok(sum / particles_in_cell.len() as f64)
}

/// Mean velocity over an index list (engine-facing variant).
pub fn indexed_mean(particles: &[Particle], indices: &[u32]) -> Result<Vec3, EstimatorError> {
    if indices.is_empty() {
        return Err(EstimatorError::EmptyCell);
    }
    let mut sum = [0.0; 3];
    for &ix in indices {
        let v = particles[ix as usize].velocity;
        sum[0] += v[0];
        sum[1] += v[1];
        sum[2] += v[2];
    }
    let n = indices.len() as f64;
    Ok([sum[0] / n, sum[1] / n, sum[2] / n])
}

/// Central second moments about the cell mean and the tke `k = tr/2`.
///
/// Moment order is `(uu, vv, ww, uv, uw, vw)`.
pub fn second_moments(
    particles_in_cell: &[Particle],
) -> Result<([f64; 6], f64), EstimatorError> {
    let idx: Vec<u32> = (0..particles_in_cell.len() as u32).collect();
    indexed_moments(particles_in_cell, &idx).map(|(_, m2, k)| (m2, k))
}

/// Mean, central second moments, and tke over an index list.
pub fn indexed_moments(
    particles: &[Particle],
    indices: &[u32],
) -> Result<(Vec3, [f64; 6], f64), EstimatorError> {
    if indices.len() < 2 {
        return Err(EstimatorError::DegenerateStatistics);
    }
    let mean = indexed_mean(particles, indices)?;
    let (m2, k) = moments_about(mean, particles, indices)?;
    Ok((mean, m2, k))
}

/// Second moments and tke of the fluctuations about a prescribed mean
/// (the official Eulerian mean, which may differ slightly from the sample
/// mean after a projection).
pub fn moments_about(
    mean: Vec3,
    particles: &[Particle],
    indices: &[u32],
) -> Result<([f64; 6], f64), EstimatorError> {
    if indices.len() < 2 {
        return Err(EstimatorError::DegenerateStatistics);
    }
    let mut m = [0.0; 6];
    for &ix in indices {
        let v = particles[ix as usize].velocity;
        let du = v[0] - mean[0];
        let dv = v[1] - mean[1];
        let dw = v[2] - mean[2];
        m[0] += du * du;
        m[1] += dv * dv;
        m[2] += dw * dw;
        m[3] += du * dv;
        m[4] += du * dw;
        m[5] += dv * dw;
    }
    let n = indices.len() as f64;
    for e in &mut m {
        *e /= n;
    }
    let k = 0.5 * (m[0] + m[1] + m[2]);
    Ok((m, k))
}

/// Nadaraya-Watson kernel estimate of `E[f(U) | X = x]` with a Gaussian
/// kernel of bandwidth `eps`. O(N); not used in the stepping hot loop.
pub fn nadaraya_watson_mean<F: Fn(Vec3) -> f64>(
    x: Vec3,
    particles: &[Particle],
    eps: f64,
    f: F,
) -> Result<f64, EstimatorError> {
    assert!(eps > 0.0, "bandwidth must be positive");
    let mut wsum = 0.0;
    let mut fsum = 0.0;
    for p in particles {
        let dx = (x[0] - p.position[0]) / eps;
        let dy = (x[1] - p.position[1]) / eps;
        let dz = (x[2] - p.position[2]) / eps;
        let w = fmath::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
        wsum += w;
        fsum += w * f(p.velocity);
    }
    if wsum <= 0.0 {
        return Err(EstimatorError::NoSupport);
    }
    Ok(fsum / wsum)
}

/// `U_D`: magnitude of the mean streamwise velocity over blade-region
/// particles.
pub fn disc_mean_speed(
    particles: &[Particle],
    turbine: &TurbineConfig,
) -> Result<f64, EstimatorError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in particles {
        if classify_turbine_region(p.position, turbine) == TurbineRegion::Blades {
            sum += p.velocity[0];
            n += 1;
        }
    }
    if n == 0 {
        return Err(EstimatorError::EmptyRegion);
    }
    Ok(fmath::fabs(sum / n as f64))
}

/// Accumulated cloud-in-cell deposit for one cell.
#[derive(Debug, Clone, Copy, Default)]
pub struct CicCell {
    pub weight: f64,
    pub wvel: Vec3,
    /// Raw weighted products `(uu, vv, ww, uv, uw, vw)`.
    pub wm2: [f64; 6],
}

impl CicCell {
    /// Weighted mean; zero where nothing was deposited.
    pub fn mean(&self) -> Vec3 {
        if self.weight <= 0.0 {
            return [0.0; 3];
        }
        [
            self.wvel[0] / self.weight,
            self.wvel[1] / self.weight,
            self.wvel[2] / self.weight,
        ]
    }

    /// Weighted central second moments about the weighted mean.
    pub fn central_m2(&self) -> [f64; 6] {
        if self.weight <= 0.0 {
            return [0.0; 6];
        }
        let m = self.mean();
        [
            self.wm2[0] / self.weight - m[0] * m[0],
            self.wm2[1] / self.weight - m[1] * m[1],
            self.wm2[2] / self.weight - m[2] * m[2],
            self.wm2[3] / self.weight - m[0] * m[1],
            self.wm2[4] / self.weight - m[0] * m[2],
            self.wm2[5] / self.weight - m[1] * m[2],
        ]
    }
}

/// Trilinear weights of a particle against the cell-center lattice.
///
/// Out-of-range corner indices are clamped, folding their weight into the
/// edge cell, so weights always sum to one.
pub fn cic_weights(position: Vec3, grid: &CartesianGrid) -> [(usize, f64); 8] {
    let mut base = [0isize; 3];
    let mut frac = [0.0f64; 3];
    for ax in 0..3 {
        let g = (position[ax] - grid.origin[ax]) / grid.delta[ax] - 0.5;
        let b = fmath::floor(g);
        base[ax] = b as isize;
        frac[ax] = g - b;
    }
    let dims = [grid.nx as isize, grid.ny as isize, grid.nz as isize];
    let mut out = [(0usize, 0.0f64); 8];
    let mut slot = 0;
    for cz in 0..2isize {
        for cy in 0..2isize {
            for cx in 0..2isize {
                let w = (if cx == 0 { 1.0 - frac[0] } else { frac[0] })
                    * (if cy == 0 { 1.0 - frac[1] } else { frac[1] })
                    * (if cz == 0 { 1.0 - frac[2] } else { frac[2] });
                let i = (base[0] + cx).clamp(0, dims[0] - 1) as usize;
                let j = (base[1] + cy).clamp(0, dims[1] - 1) as usize;
                let k = (base[2] + cz).clamp(0, dims[2] - 1) as usize;
                out[slot] = (grid.flat(i, j, k), w);
                slot += 1;
            }
        }
    }
    out
}

/// Cloud-in-cell deposit of velocity moments onto cell centers.
pub fn cic_deposit(particles: &[Particle], grid: &CartesianGrid) -> Vec<CicCell> {
    let mut cells = vec![CicCell::default(); grid.n_cells()];
    for p in particles {
        for (idx, w) in cic_weights(p.position, grid) {
            if w == 0.0 {
                continue;
            }
            let c = &mut cells[idx];
            let v = p.velocity;
            c.weight += w;
            c.wvel[0] += w * v[0];
            c.wvel[1] += w * v[1];
            c.wvel[2] += w * v[2];
            c.wm2[0] += w * v[0] * v[0];
            c.wm2[1] += w * v[1] * v[1];
            c.wm2[2] += w * v[2] * v[2];
            c.wm2[3] += w * v[0] * v[1];
            c.wm2[4] += w * v[0] * v[2];
            c.wm2[5] += w * v[1] * v[2];
        }
    }
    cells
}

/// Per-height-level statistics of a horizontally averaged field.
#[derive(Debug, Clone)]
pub struct EmpiricalProfile {
    /// Level heights (cell-center z), meters.
    pub z: Vec<f64>,
    pub mean: Vec<Vec3>,
    /// Level second moments `(uu, vv, ww, uv, uw, vw)`, PSD-clipped.
    pub m2: Vec<[f64; 6]>,
    /// Factor B with B·Bᵀ = m2, for Gaussian sampling.
    pub sqrt_m2: Vec<[[f64; 3]; 3]>,
}

impl EmpiricalProfile {
    pub fn new(z: Vec<f64>, mean: Vec<Vec3>, m2_raw: Vec<[f64; 6]>) -> Self {
        let m2: Vec<[f64; 6]> = m2_raw.iter().map(|m| psd_clip(*m)).collect();
        let sqrt_m2 = m2.iter().map(|m| psd_sqrt(*m)).collect();
        EmpiricalProfile { z, mean, m2, sqrt_m2 }
    }

    /// Index of the level whose cell contains height `z` (clamped).
    pub fn level_for_z(&self, z: f64) -> usize {
        if self.z.len() < 2 {
            return 0;
        }
        let dz = self.z[1] - self.z[0];
        let rel = (z - self.z[0]) / dz + 0.5;
        if rel <= 0.0 {
            0
        } else {
            (fmath::floor(rel) as usize).min(self.z.len() - 1)
        }
    }
}

/// Horizontal average of the grid per z level; the level second moment is the
/// mean of the cell moments plus the covariance of the cell means (law of
/// total variance), so the profile reflects total fluctuation about the level
/// mean.
pub fn column_profiles(grid: &CartesianGrid) -> EmpiricalProfile {
    let per_level = grid.nx * grid.ny;
    let mut z = Vec::with_capacity(grid.nz);
    let mut means = Vec::with_capacity(grid.nz);
    let mut m2s = Vec::with_capacity(grid.nz);
    for kz in 0..grid.nz {
        let mut mean = [0.0f64; 3];
        let mut m2 = [0.0f64; 6];
        let mut cross = [0.0f64; 6];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = &grid.cells[grid.flat(i, j, kz)];
                for ax in 0..3 {
                    mean[ax] += c.mean[ax];
                }
                for e in 0..6 {
                    m2[e] += c.m2[e];
                }
                cross[0] += c.mean[0] * c.mean[0];
                cross[1] += c.mean[1] * c.mean[1];
                cross[2] += c.mean[2] * c.mean[2];
                cross[3] += c.mean[0] * c.mean[1];
                cross[4] += c.mean[0] * c.mean[2];
                cross[5] += c.mean[1] * c.mean[2];
            }
        }
        let n = per_level as f64;
        for ax in 0..3 {
            mean[ax] /= n;
        }
        for e in 0..6 {
            m2[e] /= n;
            cross[e] /= n;
        }
        // Covariance of cell means across the level.
        m2[0] += cross[0] - mean[0] * mean[0];
        m2[1] += cross[1] - mean[1] * mean[1];
        m2[2] += cross[2] - mean[2] * mean[2];
        m2[3] += cross[3] - mean[0] * mean[1];
        m2[4] += cross[4] - mean[0] * mean[2];
        m2[5] += cross[5] - mean[1] * mean[2];
        z.push(grid.cell_center(0, 0, kz)[2]);
        means.push(mean);
        m2s.push(m2);
    }
    EmpiricalProfile::new(z, means, m2s)
}

fn sym_from_packed(m: [f64; 6]) -> [[f64; 3]; 3] {
    [
        [m[0], m[3], m[4]],
        [m[3], m[1], m[5]],
        [m[4], m[5], m[2]],
    ]
}

fn packed_from_sym(a: [[f64; 3]; 3]) -> [f64; 6] {
    [a[0][0], a[1][1], a[2][2], a[0][1], a[0][2], a[1][2]]
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi sweeps.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn sym_eigen(m: [f64; 6]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = sym_from_packed(m);
    let mut q = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..32 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for &(p, r) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][r] == 0.0 {
                continue;
            }
            let theta = (a[r][r] - a[p][p]) / (2.0 * a[p][r]);
            let t = if theta >= 0.0 {
                1.0 / (theta + fmath::sqrt(1.0 + theta * theta))
            } else {
                -1.0 / (-theta + fmath::sqrt(1.0 + theta * theta))
            };
            let c = 1.0 / fmath::sqrt(1.0 + t * t);
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akr = a[k][r];
                a[k][p] = c * akp - s * akr;
                a[k][r] = s * akp + c * akr;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let ark = a[r][k];
                a[p][k] = c * apk - s * ark;
                a[r][k] = s * apk + c * ark;
            }
            for k in 0..3 {
                let qkp = q[k][p];
                let qkr = q[k][r];
                q[k][p] = c * qkp - s * qkr;
                q[k][r] = s * qkp + c * qkr;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], q)
}

/// Repair a noisy second-moment matrix by clipping negative eigenvalues to 0.
pub fn psd_clip(m: [f64; 6]) -> [f64; 6] {
    let (vals, q) = sym_eigen(m);
    if vals.iter().all(|&v| v >= 0.0) {
        return m;
    }
    let clipped = [vals[0].max(0.0), vals[1].max(0.0), vals[2].max(0.0)];
    let mut out = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for l in 0..3 {
                s += q[i][l] * clipped[l] * q[j][l];
            }
            out[i][j] = s;
        }
    }
    packed_from_sym(out)
}

/// Factor B with B·Bᵀ equal to the PSD-clipped input, for Gaussian sampling.
pub fn psd_sqrt(m: [f64; 6]) -> [[f64; 3]; 3] {
    let (vals, q) = sym_eigen(m);
    let s = [
        fmath::sqrt(vals[0].max(0.0)),
        fmath::sqrt(vals[1].max(0.0)),
        fmath::sqrt(vals[2].max(0.0)),
    ];
    let mut b = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = q[i][j] * s[j];
        }
    }
    b
}
