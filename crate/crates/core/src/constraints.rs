//! Conservation constraints applied once per step: triangular transport
//! restoring exactly `N_pc` particles per cell, and the pressure Poisson
//! projection of the mean velocity onto the discretely divergence-free space.
//!
//! The divergence and gradient operators form an exact negative-adjoint pair
//! (⟨∇φ, U⟩ = −⟨φ, ∇·U⟩ for every boundary rule), so the composed Laplacian
//! is symmetric negative semidefinite and conjugate gradients apply. In the
//! deep interior both operators reduce to plain centered differences; the
//! stencil couples cells two apart per axis, seven points in total.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{CartesianGrid, Particle};
use crate::fmath;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintError {
    /// Total particle count is not N_pc × number of cells.
    CountMismatch { expected: usize, got: usize },
    /// CG failed to reach tolerance within the iteration budget.
    SolverDiverged { residual: f64, iterations: usize },
}

impl core::fmt::Display for ConstraintError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConstraintError::CountMismatch { expected, got } => {
                write!(f, "particle count {got} != N_pc × cells = {expected}")
            }
            ConstraintError::SolverDiverged { residual, iterations } => {
                write!(f, "poisson solve stalled at residual {residual} after {iterations} iterations")
            }
        }
    }
}

impl core::error::Error for ConstraintError {}

/// Boundary-face treatment of the divergence/gradient pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceRule {
    /// Open face: the boundary-face flux is the boundary cell's own value
    /// (free in/outflow; the pressure potential is pinned there).
    Extrapolate,
    /// Impermeable face: zero boundary flux (homogeneous Neumann for the
    /// potential).
    ZeroFlux,
}

/// Per-face rules, indexed `[axis][side]` with side 0 = low face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryRules(pub [[FaceRule; 2]; 3]);

impl BoundaryRules {
    pub fn all_extrapolate() -> Self {
        BoundaryRules([[FaceRule::Extrapolate; 2]; 3])
    }

    pub fn all_zero_flux() -> Self {
        BoundaryRules([[FaceRule::ZeroFlux; 2]; 3])
    }

    /// Open lateral faces and top, impermeable ground.
    pub fn open_channel() -> Self {
        let mut rules = [[FaceRule::Extrapolate; 2]; 3];
        rules[2][0] = FaceRule::ZeroFlux;
        BoundaryRules(rules)
    }

    fn is_all_zero_flux(&self) -> bool {
        self.0
            .iter()
            .all(|a| a.iter().all(|r| *r == FaceRule::ZeroFlux))
    }
}

/// Cell-centered divergence: centered differences in the interior, face rules
/// at the boundary. A constant field has zero divergence under `Extrapolate`
/// rules everywhere.
pub fn divergence(field: &[Vec3], grid: &CartesianGrid, rules: &BoundaryRules) -> Vec<f64> {
    let mut out = vec![0.0f64; grid.n_cells()];
    divergence_into(field, grid, rules, &mut out);
    out
}

pub fn divergence_into(
    field: &[Vec3],
    grid: &CartesianGrid,
    rules: &BoundaryRules,
    out: &mut [f64],
) {
    let dims = [grid.nx, grid.ny, grid.nz];
    for idx in 0..grid.n_cells() {
        let (i, j, k) = grid.unflat(idx);
        let pos = [i, j, k];
        let mut div = 0.0;
        for ax in 0..3 {
            let n = dims[ax];
            let h = grid.delta[ax];
            let v = field[idx][ax];
            // Low and high face fluxes of this cell along `ax`.
            let f_lo = if pos[ax] == 0 {
                match rules.0[ax][0] {
                    FaceRule::Extrapolate => v,
                    FaceRule::ZeroFlux => 0.0,
                }
            } else {
                0.5 * (field[grid.neighbor(idx, ax, -1)][ax] + v)
            };
            let f_hi = if pos[ax] == n - 1 {
                match rules.0[ax][1] {
                    FaceRule::Extrapolate => v,
                    FaceRule::ZeroFlux => 0.0,
                }
            } else {
                0.5 * (v + field[grid.neighbor(idx, ax, 1)][ax])
            };
            div += (f_hi - f_lo) / h;
        }
        out[idx] = div;
    }
}

/// Cell-centered gradient, the exact negative adjoint of [`divergence`] under
/// the same rules: centered in the interior; at a `ZeroFlux` face the row is
/// the half one-sided difference, at an `Extrapolate` face the half sum
/// (which pins the potential level there).
pub fn gradient(phi: &[f64], grid: &CartesianGrid, rules: &BoundaryRules) -> Vec<Vec3> {
    let mut out = vec![[0.0f64; 3]; grid.n_cells()];
    gradient_into(phi, grid, rules, &mut out);
    out
}

pub fn gradient_into(phi: &[f64], grid: &CartesianGrid, rules: &BoundaryRules, out: &mut [Vec3]) {
    let dims = [grid.nx, grid.ny, grid.nz];
    for idx in 0..grid.n_cells() {
        let (i, j, k) = grid.unflat(idx);
        let pos = [i, j, k];
        for ax in 0..3 {
            let n = dims[ax];
            let h = grid.delta[ax];
            let g = if n == 1 {
                0.0
            } else if pos[ax] == 0 {
                let hi = phi[grid.neighbor(idx, ax, 1)];
                match rules.0[ax][0] {
                    FaceRule::ZeroFlux => (hi - phi[idx]) / (2.0 * h),
                    FaceRule::Extrapolate => (hi + phi[idx]) / (2.0 * h),
                }
            } else if pos[ax] == n - 1 {
                let lo = phi[grid.neighbor(idx, ax, -1)];
                match rules.0[ax][1] {
                    FaceRule::ZeroFlux => (phi[idx] - lo) / (2.0 * h),
                    FaceRule::Extrapolate => -(phi[idx] + lo) / (2.0 * h),
                }
            } else {
                (phi[grid.neighbor(idx, ax, 1)] - phi[grid.neighbor(idx, ax, -1)]) / (2.0 * h)
            };
            out[idx][ax] = g;
        }
    }
}

/// Discrete Laplacian as the exact composition divergence ∘ gradient.
pub fn laplacian(phi: &[f64], grid: &CartesianGrid, rules: &BoundaryRules) -> Vec<f64> {
    divergence(&gradient(phi, grid, rules), grid, rules)
}

/// Workspace of the pressure Poisson solve. `phi` persists across calls as a
/// warm start.
#[derive(Debug, Clone)]
pub struct PoissonWorkspace {
    pub phi: Vec<f64>,
    /// Relative residual tolerance (enforced in both 2-norm and max-norm).
    pub tolerance: f64,
    pub max_iter: usize,
    pub rules: BoundaryRules,
    grad_buf: Vec<Vec3>,
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

/// Convergence report of one solve or projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_l2: f64,
    pub residual_linf: f64,
}

impl PoissonWorkspace {
    pub fn new(n_cells: usize, rules: BoundaryRules) -> Self {
        PoissonWorkspace {
            phi: vec![0.0; n_cells],
            tolerance: 1e-8,
            max_iter: 10 * n_cells,
            rules,
            grad_buf: vec![[0.0; 3]; n_cells],
            r: vec![0.0; n_cells],
            p: vec![0.0; n_cells],
            ap: vec![0.0; n_cells],
        }
    }

    /// Apply −Δ (positive semidefinite) into `out`.
    fn apply_neg_laplacian(&mut self, x: &[f64], grid: &CartesianGrid, out: &mut [f64]) {
        gradient_into(x, grid, &self.rules, &mut self.grad_buf);
        divergence_into(&self.grad_buf, grid, &self.rules, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}

fn subtract_mean(v: &mut [f64]) {
    let mean: f64 = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(fmath::fabs(x)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve Δφ = rhs by conjugate gradients on the composed operator, to the
/// workspace tolerance in both norms. Under all-ZeroFlux rules the rhs mean
/// is removed (Neumann compatibility) and φ is gauged to zero mean.
pub fn solve_poisson(
    rhs: &[f64],
    grid: &CartesianGrid,
    ws: &mut PoissonWorkspace,
) -> Result<SolveReport, ConstraintError> {
    let n = grid.n_cells();
    debug_assert_eq!(rhs.len(), n);
    let gauge = ws.rules.is_all_zero_flux();

    // b = −rhs so the system matrix −Δ is positive semidefinite.
    let mut b: Vec<f64> = rhs.iter().map(|v| -v).collect();
    if gauge {
        subtract_mean(&mut b);
    }
    let b_l2 = fmath::sqrt(dot(&b, &b));
    let b_linf = linf(&b);
    if b_linf == 0.0 {
        for v in ws.phi.iter_mut() {
            *v = 0.0;
        }
        return Ok(SolveReport::default());
    }
    let tol_l2 = ws.tolerance * b_l2;
    let tol_linf = ws.tolerance * b_linf;

    // Warm start from the previous φ.
    let mut x = core::mem::take(&mut ws.phi);
    if gauge {
        subtract_mean(&mut x);
    }
    let mut r = core::mem::take(&mut ws.r);
    let mut p = core::mem::take(&mut ws.p);
    let mut ap = core::mem::take(&mut ws.ap);

    ws.apply_neg_laplacian(&x, grid, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    p.copy_from_slice(&r);
    let mut rr = dot(&r, &r);
    let mut report = SolveReport {
        iterations: 0,
        residual_l2: fmath::sqrt(rr),
        residual_linf: linf(&r),
    };

    let mut iter = 0;
    while (report.residual_l2 > tol_l2 || report.residual_linf > tol_linf) && iter < ws.max_iter {
        ws.apply_neg_laplacian(&p, grid, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Numerically in the null space; the residual alone decides.
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        iter += 1;
        report.iterations = iter;
        report.residual_l2 = fmath::sqrt(rr);
        report.residual_linf = linf(&r);
    }

    if gauge {
        subtract_mean(&mut x);
    }
    ws.phi = x;
    ws.r = r;
    ws.p = p;
    ws.ap = ap;

    if report.residual_l2 > tol_l2 || report.residual_linf > tol_linf {
        return Err(ConstraintError::SolverDiverged {
            residual: report.residual_linf,
            iterations: report.iterations,
        });
    }
    Ok(report)
}

/// Divergence levels around one projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionReport {
    pub pre_linf: f64,
    pub post_linf: f64,
    pub solve: SolveReport,
}

/// Project the cell-mean field onto the divergence-free space: solve
/// Δφ = ∇·U and subtract ∇φ. Returns the cellwise correction so the caller
/// can also shift the particle velocities of each cell.
pub fn project_divergence_free(
    field: &mut [Vec3],
    grid: &CartesianGrid,
    ws: &mut PoissonWorkspace,
) -> Result<(Vec<Vec3>, ProjectionReport), ConstraintError> {
    let rhs = divergence(field, grid, &ws.rules);
    let pre_linf = linf(&rhs);
    let solve = solve_poisson(&rhs, grid, ws)?;
    let correction = gradient(&ws.phi, grid, &ws.rules);
    for (f, c) in field.iter_mut().zip(&correction) {
        for ax in 0..3 {
            f[ax] -= c[ax];
        }
    }
    let post = divergence(field, grid, &ws.rules);
    Ok((
        correction,
        ProjectionReport {
            pre_linf,
            post_linf: linf(&post),
            solve,
        },
    ))
}

/// Restore exactly `n_pc` particles per cell by three sequential 1-D
/// rearrangements (x, then y within x-slabs, then z within columns).
///
/// A reassigned particle keeps its offset within the cell, so it moves by a
/// whole number of cell widths; velocities are untouched. Sort keys are
/// (coordinate, id), a total order, so the result is reproducible.
pub fn triangular_transport(
    particles: &mut [Particle],
    grid: &CartesianGrid,
    n_pc: usize,
) -> Result<(), ConstraintError> {
    let expected = n_pc * grid.n_cells();
    if particles.len() != expected {
        return Err(ConstraintError::CountMismatch {
            expected,
            got: particles.len(),
        });
    }

    let mut order: Vec<u32> = (0..particles.len() as u32).collect();

    // Pass 1: x over the whole population.
    let per_x = n_pc * grid.ny * grid.nz;
    sort_and_shift(particles, &mut order, 0, grid.origin[0], grid.delta[0], grid.nx, per_x);

    // Pass 2: y within each x-slab (slabs are contiguous rank ranges now).
    let per_y = n_pc * grid.nz;
    for sx in 0..grid.nx {
        let range = sx * per_x..(sx + 1) * per_x;
        sort_and_shift(
            particles,
            &mut order[range],
            1,
            grid.origin[1],
            grid.delta[1],
            grid.ny,
            per_y,
        );
    }

    // Pass 3: z within each (x, y) column.
    for sx in 0..grid.nx {
        for sy in 0..grid.ny {
            let start = sx * per_x + sy * per_y;
            let range = start..start + per_y;
            sort_and_shift(
                particles,
                &mut order[range],
                2,
                grid.origin[2],
                grid.delta[2],
                grid.nz,
                n_pc,
            );
        }
    }
    Ok(())
}

/// Sort `order` by (coordinate, id) along `axis` and move every particle to
/// its rank-assigned slab, preserving the offset within the slab.
fn sort_and_shift(
    particles: &mut [Particle],
    order: &mut [u32],
    axis: usize,
    origin: f64,
    delta: f64,
    n_slabs: usize,
    per_slab: usize,
) {
    debug_assert_eq!(order.len(), n_slabs * per_slab);
    order.sort_unstable_by(|&a, &b| {
        let pa = &particles[a as usize];
        let pb = &particles[b as usize];
        pa.position[axis]
            .partial_cmp(&pb.position[axis])
            .unwrap()
            .then(pa.id.cmp(&pb.id))
    });
    for (rank, &ix) in order.iter().enumerate() {
        let dest = rank / per_slab;
        let p = &mut particles[ix as usize];
        let cur = ((p.position[axis] - origin) / delta) as isize;
        let cur = cur.clamp(0, n_slabs as isize - 1) as usize;
        if cur != dest {
            let offset = (p.position[axis] - (origin + cur as f64 * delta))
                .clamp(0.0, delta * (1.0 - 1e-12));
            p.position[axis] = origin + dest as f64 * delta + offset;
        }
    }
}
