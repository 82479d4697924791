//! Run orchestration: the bulk-synchronous time step (moments → closure →
//! forces → predict → boundaries → transport → projection → diagnostics),
//! warmup/production staging, and the per-step diagnostics accumulators.
//!
//! Parallel phases are either element-wise maps over particles/cells or
//! fixed-order reductions, and every random draw comes from a counter stream
//! keyed by (seed, particle id, step, phase), so outputs are bit-identical
//! for any worker count.

use std::fmt;

use rayon::prelude::*;

use stochwind_core::boundaries::{
    corner_push, first_exit, log_law, mirror_reflect, recycle_position, sample_loglaw_velocity,
    sample_profile_velocity, specular_boundary, ExitFace, WallState,
};
use stochwind_core::constraints::{
    triangular_transport, BoundaryRules, PoissonWorkspace, ProjectionReport,
    project_divergence_free,
};
use stochwind_core::domain::{CartesianGrid, CellRecord, Particle};
use stochwind_core::estimators::{
    cic_deposit, column_profiles, disc_mean_speed, indexed_mean, moments_about, psd_sqrt,
    CicCell, EmpiricalProfile,
};
use stochwind_core::rng::{CounterRng, Phase};
use stochwind_core::sde::{closure_for_cell, predict_particle, velocity_gradients, ClosureCell};
use stochwind_core::turbine::{particle_force, ForceStats, TurbineModel};
use stochwind_core::vec3::Vec3;

use crate::config::{InflowMode, ScenarioConfig};

const CHUNK: usize = 4096;

/// Target mean wind at height `z`: the inflow log law capped by the
/// geostrophic wind, so the column above the boundary layer is laminar at
/// constant speed.
fn target_mean_u(config: &ScenarioConfig, z: f64) -> f64 {
    let c = &config.constants;
    log_law(config.u_star, c.kappa, c.z_0, z).min(config.u_geostrophic)
}

#[derive(Debug)]
pub enum EngineError {
    Config(String),
    Step { step: u64, phase: &'static str, message: String },
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Config(m) => write!(f, "configuration: {m}"),
            EngineError::Step { step, phase, message } => {
                write!(f, "step {step}, phase {phase}: {message}")
            }
        }
    }
}

impl std::error::Error for EngineError {}

/// Stage of the two-stage protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// No turbine forces; lateral recycling draws from the analytic log law
    /// plus exit-cell covariances.
    Warmup,
    /// Turbine forces active; recycling draws from the stored profile.
    Production,
}

/// Event counters of one run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunStats {
    pub mirror_reflections: u64,
    pub specular_fallbacks: u64,
    pub top_reflections: u64,
    pub recycled_x: u64,
    pub recycled_y: u64,
    pub corner_pushes: u64,
    pub alpha_clamps: u64,
    pub station_clamps: u64,
    pub blade_particles: u64,
    pub nacelle_particles: u64,
    pub empty_disc_steps: u64,
}

#[derive(Clone, Copy, Default)]
struct SweepStats {
    mirror: u64,
    fallback: u64,
    top: u64,
    rec_x: u64,
    rec_y: u64,
    push: u64,
    force: ForceStats,
}

/// Time-pooled level statistics (law of total variance over the window).
#[derive(Debug, Clone, Default)]
struct ProfileAccum {
    count: usize,
    mean: Vec<Vec3>,
    mean_sq: Vec<[f64; 6]>,
    m2: Vec<[f64; 6]>,
}

impl ProfileAccum {
    fn add(&mut self, profile: &EmpiricalProfile) {
        if self.mean.is_empty() {
            self.mean = vec![[0.0; 3]; profile.mean.len()];
            self.mean_sq = vec![[0.0; 6]; profile.mean.len()];
            self.m2 = vec![[0.0; 6]; profile.mean.len()];
        }
        for (lvl, m) in profile.mean.iter().enumerate() {
            for ax in 0..3 {
                self.mean[lvl][ax] += m[ax];
            }
            let sq = &mut self.mean_sq[lvl];
            sq[0] += m[0] * m[0];
            sq[1] += m[1] * m[1];
            sq[2] += m[2] * m[2];
            sq[3] += m[0] * m[1];
            sq[4] += m[0] * m[2];
            sq[5] += m[1] * m[2];
            for e in 0..6 {
                self.m2[lvl][e] += profile.m2[lvl][e];
            }
        }
        self.count += 1;
    }

    fn finish(&self, z: Vec<f64>) -> Option<EmpiricalProfile> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        let mut means = Vec::with_capacity(self.mean.len());
        let mut m2s = Vec::with_capacity(self.mean.len());
        for lvl in 0..self.mean.len() {
            let mean = [
                self.mean[lvl][0] / n,
                self.mean[lvl][1] / n,
                self.mean[lvl][2] / n,
            ];
            let sq = self.mean_sq[lvl];
            let m2 = [
                self.m2[lvl][0] / n + sq[0] / n - mean[0] * mean[0],
                self.m2[lvl][1] / n + sq[1] / n - mean[1] * mean[1],
                self.m2[lvl][2] / n + sq[2] / n - mean[2] * mean[2],
                self.m2[lvl][3] / n + sq[3] / n - mean[0] * mean[1],
                self.m2[lvl][4] / n + sq[4] / n - mean[0] * mean[2],
                self.m2[lvl][5] / n + sq[5] / n - mean[1] * mean[2],
            ];
            means.push(mean);
            m2s.push(m2);
        }
        Some(EmpiricalProfile::new(z, means, m2s))
    }
}

/// Everything a finished run hands back to the caller.
pub struct RunOutput {
    /// Instantaneous grid records at the final step.
    pub grid: CartesianGrid,
    /// Cloud-in-cell fields pooled over the trailing window (diagnostics).
    pub trailing: CartesianGrid,
    /// Level profile pooled over the trailing window.
    pub profile: EmpiricalProfile,
    pub particles: Vec<Particle>,
    /// Per-production-step rotating-disc thrust estimate F/ρ (NaN where the
    /// cylinder was empty).
    pub thrust_series: Vec<f64>,
    pub stats: RunStats,
    pub steps_run: usize,
}

pub struct Simulation {
    pub config: ScenarioConfig,
    pub mode: RunMode,
    pub grid: CartesianGrid,
    pub particles: Vec<Particle>,
    pub stats: RunStats,
    /// Phase labels of the most recent step, in execution order.
    pub trace: Vec<&'static str>,
    pub thrust_series: Vec<f64>,
    pub last_projection: Option<ProjectionReport>,
    profile: Option<EmpiricalProfile>,
    closures: Vec<ClosureCell>,
    cell_of: Vec<u32>,
    cell_start: Vec<u32>,
    cell_items: Vec<u32>,
    lists_valid: bool,
    ws: PoissonWorkspace,
    step_index: u64,
    total_steps: usize,
    trailing_cic: Vec<CicCell>,
    trailing_steps: usize,
    profile_accum: ProfileAccum,
}

impl Simulation {
    /// Build the initial state: N_pc particles per cell placed uniformly,
    /// velocities log-law mean plus isotropic Gaussian noise at the
    /// configured initial tke level.
    pub fn new(
        config: ScenarioConfig,
        mode: RunMode,
        profile: Option<EmpiricalProfile>,
        total_steps: usize,
    ) -> Result<Self, EngineError> {
        config.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        if mode == RunMode::Production && profile.is_none() {
            return Err(EngineError::Config(
                "production runs need a stored inflow profile".into(),
            ));
        }
        let delta = config.delta();
        let grid = CartesianGrid::new(config.nx, config.ny, config.nz, delta, [0.0; 3]);
        let n = config.n_particles();
        let k_init = config.tke_init_factor * config.u_star * config.u_star;
        let sigma = (2.0 / 3.0 * k_init).sqrt();

        let npc = config.particles_per_cell;
        let mut particles = Vec::with_capacity(n);
        for cell in 0..grid.n_cells() {
            let (i, j, k) = grid.unflat(cell);
            for q in 0..npc {
                let id = (cell * npc + q) as u64;
                let mut rng = CounterRng::stream(config.seed, id, 0, Phase::Init);
                let position = [
                    (i as f64 + rng.uniform() * 0.999_999) * delta[0],
                    (j as f64 + rng.uniform() * 0.999_999) * delta[1],
                    (k as f64 + rng.uniform() * 0.999_999) * delta[2],
                ];
                let mean_u = target_mean_u(&config, position[2]);
                let eta = rng.normal3();
                particles.push(Particle {
                    position,
                    velocity: [
                        mean_u + sigma * eta[0],
                        sigma * eta[1],
                        sigma * eta[2],
                    ],
                    id,
                });
            }
        }

        let n_cells = grid.n_cells();
        let mut ws = PoissonWorkspace::new(n_cells, BoundaryRules::open_channel());
        ws.tolerance = config.projection_tolerance;
        let mut sim = Simulation {
            config,
            mode,
            grid,
            particles,
            stats: RunStats::default(),
            trace: Vec::new(),
            thrust_series: Vec::new(),
            last_projection: None,
            profile,
            closures: vec![ClosureCell::default(); n_cells],
            cell_of: vec![0; n],
            cell_start: vec![0; n_cells + 1],
            cell_items: vec![0; n],
            lists_valid: false,
            ws,
            step_index: 0,
            total_steps,
            trailing_cic: Vec::new(),
            trailing_steps: 0,
            profile_accum: ProfileAccum::default(),
        };
        // Seed the official Eulerian means from the initial particle state.
        sim.build_cell_lists()?;
        let means: Vec<Vec3> = (0..sim.grid.n_cells())
            .map(|cell| indexed_mean(&sim.particles, sim.cell_slice(cell)).unwrap_or([0.0; 3]))
            .collect();
        for (rec, mean) in sim.grid.cells.iter_mut().zip(means) {
            rec.mean = mean;
        }
        Ok(sim)
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    fn inflow_mode(&self) -> InflowMode {
        match self.mode {
            RunMode::Warmup => InflowMode::LogLaw,
            RunMode::Production => InflowMode::Profile,
        }
    }

    /// Counting sort of particle indices by cell; within a cell the list
    /// stays in particle-index order, which fixes the summation order.
    fn build_cell_lists(&mut self) -> Result<(), EngineError> {
        let n_cells = self.grid.n_cells();
        let mut counts = vec![0u32; n_cells];
        for (ix, p) in self.particles.iter().enumerate() {
            let cell = self.grid.cell_index_flat(p.position).map_err(|e| EngineError::Step {
                step: self.step_index,
                phase: "moments",
                message: format!("particle {} at {:?}: {e}", p.id, p.position),
            })?;
            self.cell_of[ix] = cell as u32;
            counts[cell] += 1;
        }
        self.cell_start[0] = 0;
        for c in 0..n_cells {
            self.cell_start[c + 1] = self.cell_start[c] + counts[c];
        }
        let mut cursor: Vec<u32> = self.cell_start[..n_cells].to_vec();
        for ix in 0..self.particles.len() {
            let cell = self.cell_of[ix] as usize;
            self.cell_items[cursor[cell] as usize] = ix as u32;
            cursor[cell] += 1;
        }
        self.lists_valid = true;
        Ok(())
    }

    /// Particle indices of one cell, in stable particle-index order.
    pub fn cell_slice(&self, cell: usize) -> &[u32] {
        &self.cell_items[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize]
    }

    /// Phase 1: central second moments and tke about the official Eulerian
    /// mean. The mean itself is owned by the projection phase (it is the
    /// divergence-free field the particles relax toward), so it is not
    /// overwritten here.
    fn phase_moments(&mut self) -> Result<(), EngineError> {
        if !self.lists_valid {
            self.build_cell_lists()?;
        }
        let particles = &self.particles;
        let cell_start = &self.cell_start;
        let cell_items = &self.cell_items;
        let step = self.step_index;
        let grid = &self.grid;
        let results: Result<Vec<([f64; 6], f64)>, EngineError> = (0..grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                let items =
                    &cell_items[cell_start[cell] as usize..cell_start[cell + 1] as usize];
                moments_about(grid.cells[cell].mean, particles, items).map_err(|e| {
                    EngineError::Step {
                        step,
                        phase: "moments",
                        message: format!("cell {cell}: {e}"),
                    }
                })
            })
            .collect();
        for (rec, (m2, k)) in self.grid.cells.iter_mut().zip(results?) {
            rec.m2 = m2;
            rec.k = k;
        }
        Ok(())
    }

    /// Phase 2: closure coefficients per cell; stores ε back on the grid.
    fn phase_closure(&mut self) -> Result<(), EngineError> {
        let grads = velocity_gradients(&self.grid);
        let grid = &self.grid;
        let constants = &self.config.constants;
        let step = self.step_index;
        let closures: Result<Vec<ClosureCell>, EngineError> = (0..grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                let (_, _, kz) = grid.unflat(cell);
                let z = grid.cell_center(0, 0, kz)[2];
                closure_for_cell(&grid.cells[cell], &grads[cell], z, constants).map_err(|e| {
                    EngineError::Step {
                        step,
                        phase: "closure",
                        message: format!("cell {cell}: {e}"),
                    }
                })
            })
            .collect();
        self.closures = closures?;
        for (rec, cl) in self.grid.cells.iter_mut().zip(&self.closures) {
            rec.eps = cl.eps;
        }
        Ok(())
    }

    /// Pre-step disc speed for the non-rotating model (mean streamwise
    /// velocity over blade-region particles).
    fn disc_speed(&mut self) -> Option<f64> {
        let setup = self.config.turbine.as_ref()?;
        match disc_mean_speed(&self.particles, &setup.config) {
            Ok(u) => Some(u),
            Err(_) => {
                self.stats.empty_disc_steps += 1;
                None
            }
        }
    }

    /// Phases 3-5 fused per particle: turbine force, prediction, boundary.
    fn phase_predict_boundaries(&mut self, u_disc: Option<f64>) -> Result<(), EngineError> {
        let wall = WallState::build(&self.grid, &self.config.constants).map_err(|e| {
            EngineError::Step {
                step: self.step_index,
                phase: "boundaries",
                message: e.to_string(),
            }
        })?;
        let grid = &self.grid;
        let closures = &self.closures;
        let cell_of = &self.cell_of;
        let config = &self.config;
        let profile = self.profile.as_ref();
        let inflow = self.inflow_mode();
        let dt = config.dt;
        let seed = config.seed;
        let step = self.step_index;
        // Lid Dirichlet value: the boundary-layer profile at the domain top,
        // never above the geostrophic wind.
        let u_ext = [target_mean_u(config, grid.high()[2]), 0.0, 0.0];
        let lo = [0.0, 0.0, wall.z_mirror];
        let hi = grid.high();
        let domain_lo = [0.0; 3];
        let min_delta = grid.delta[0].min(grid.delta[1]).min(grid.delta[2]);
        let turbine = config.turbine.as_ref();

        let chunk_results: Vec<Result<SweepStats, EngineError>> = self
            .particles
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(chunk_idx, chunk)| {
                let base = chunk_idx * CHUNK;
                let mut s = SweepStats::default();
                for (off, p) in chunk.iter_mut().enumerate() {
                    let cell = cell_of[base + off] as usize;
                    let closure = &closures[cell];
                    let mean = grid.cells[cell].mean;
                    let prev_pos = p.position;
                    let prev_vel = p.velocity;

                    let mut force = [0.0; 3];
                    if let (Some(setup), true) = (turbine, self.mode == RunMode::Production) {
                        let u_d = match setup.model {
                            TurbineModel::NonRotating { .. } => match u_disc {
                                Some(u) => u,
                                None => 0.0,
                            },
                            TurbineModel::Rotating => 0.0,
                        };
                        let skip = matches!(setup.model, TurbineModel::NonRotating { .. })
                            && u_disc.is_none();
                        if !skip {
                            force = particle_force(
                                prev_pos,
                                prev_vel,
                                &setup.config,
                                setup.model,
                                u_d,
                                &mut s.force,
                            )
                            .map_err(|e| EngineError::Step {
                                step,
                                phase: "forces",
                                message: format!("particle {}: {e}", p.id),
                            })?;
                        }
                    }

                    let mut rng_p = CounterRng::stream(seed, p.id, step, Phase::Predict);
                    let (mut pos, mut vel) =
                        predict_particle(prev_pos, prev_vel, closure, mean, force, dt, rng_p.normal3())
                            .map_err(|e| EngineError::Step {
                                step,
                                phase: "predict",
                                message: format!("particle {}: {e}", p.id),
                            })?;

                    let inside = pos[0] >= lo[0]
                        && pos[0] < hi[0]
                        && pos[1] >= lo[1]
                        && pos[1] < hi[1]
                        && pos[2] >= lo[2]
                        && pos[2] < hi[2];
                    if !inside {
                        match first_exit(prev_pos, prev_vel, dt, lo, hi) {
                            Some((2, false, _)) => {
                                let (i, j) = floor_column(grid, prev_pos);
                                let (np, nv, fb) =
                                    mirror_reflect(pos, vel, wall.column(i, j), wall.z_mirror);
                                pos = np;
                                vel = nv;
                                s.mirror += 1;
                                if fb {
                                    s.fallback += 1;
                                }
                            }
                            Some((2, true, t_out)) => {
                                let mut rng_b =
                                    CounterRng::stream(seed, p.id, step, Phase::Boundary);
                                let (np, nv) = specular_boundary(
                                    prev_pos,
                                    prev_vel,
                                    closure,
                                    mean,
                                    force,
                                    u_ext,
                                    dt,
                                    t_out / dt,
                                    &mut rng_b,
                                )
                                .map_err(|e| EngineError::Step {
                                    step,
                                    phase: "boundaries",
                                    message: format!("particle {}: {e}", p.id),
                                })?;
                                pos = np;
                                vel = nv;
                                s.top += 1;
                            }
                            Some((axis, side, _)) => {
                                let face = match (axis, side) {
                                    (0, false) => ExitFace::XMin,
                                    (0, true) => ExitFace::XMax,
                                    (1, false) => ExitFace::YMin,
                                    _ => ExitFace::YMax,
                                };
                                pos = recycle_position(pos, face, domain_lo, hi);
                                vel = resample_velocity(
                                    config, grid, profile, inflow, cell, pos[2], seed, p.id, step,
                                );
                                if axis == 0 {
                                    s.rec_x += 1;
                                } else {
                                    s.rec_y += 1;
                                }
                            }
                            None => {
                                // Entered the sub-mirror wall zone earlier
                                // (initialization or transport): reflect only
                                // if still descending.
                                if pos[2] < wall.z_mirror && vel[2] < 0.0 {
                                    let (i, j) = floor_column(grid, prev_pos);
                                    let (np, nv, fb) =
                                        mirror_reflect(pos, vel, wall.column(i, j), wall.z_mirror);
                                    pos = np;
                                    vel = nv;
                                    s.mirror += 1;
                                    if fb {
                                        s.fallback += 1;
                                    }
                                }
                            }
                        }
                        let pushed = corner_push(pos, domain_lo, hi, min_delta);
                        if pushed != pos {
                            s.push += 1;
                            pos = pushed;
                        }
                    }
                    p.position = pos;
                    p.velocity = vel;
                }
                Ok(s)
            })
            .collect();

        for r in chunk_results {
            let s = r?;
            self.stats.mirror_reflections += s.mirror;
            self.stats.specular_fallbacks += s.fallback;
            self.stats.top_reflections += s.top;
            self.stats.recycled_x += s.rec_x;
            self.stats.recycled_y += s.rec_y;
            self.stats.corner_pushes += s.push;
            self.stats.alpha_clamps += s.force.alpha_clamps as u64;
            self.stats.station_clamps += s.force.station_clamps as u64;
            self.stats.blade_particles += s.force.blade_particles as u64;
            self.stats.nacelle_particles += s.force.nacelle_particles as u64;
        }
        self.lists_valid = false;
        Ok(())
    }

    fn phase_transport(&mut self) -> Result<(), EngineError> {
        triangular_transport(&mut self.particles, &self.grid, self.config.particles_per_cell)
            .map_err(|e| EngineError::Step {
                step: self.step_index,
                phase: "transport",
                message: e.to_string(),
            })?;
        self.lists_valid = false;
        Ok(())
    }

    /// Phase 7: refresh cell means from the transported particles and project
    /// them onto the divergence-free space. The projected field becomes the
    /// relaxation target of the next prediction step; optionally the same
    /// cellwise correction is also applied to the particle velocities.
    fn phase_projection(&mut self) -> Result<(), EngineError> {
        self.build_cell_lists()?;
        let particles = &self.particles;
        let cell_start = &self.cell_start;
        let cell_items = &self.cell_items;
        let step = self.step_index;
        let means: Result<Vec<Vec3>, EngineError> = (0..self.grid.n_cells())
            .into_par_iter()
            .map(|cell| {
                let items =
                    &cell_items[cell_start[cell] as usize..cell_start[cell + 1] as usize];
                indexed_mean(particles, items).map_err(|e| EngineError::Step {
                    step,
                    phase: "projection",
                    message: format!("cell {cell}: {e}"),
                })
            })
            .collect();
        let mut field = means?;

        if !self.config.projection_enabled {
            for (rec, mean) in self.grid.cells.iter_mut().zip(&field) {
                rec.mean = *mean;
            }
            return Ok(());
        }

        let (correction, report) = project_divergence_free(&mut field, &self.grid, &mut self.ws)
            .map_err(|e| EngineError::Step {
                step: self.step_index,
                phase: "projection",
                message: e.to_string(),
            })?;
        for (rec, mean) in self.grid.cells.iter_mut().zip(&field) {
            rec.mean = *mean;
        }
        if self.config.projection_correct_particles {
            let cell_of = &self.cell_of;
            self.particles
                .par_iter_mut()
                .enumerate()
                .for_each(|(ix, p)| {
                    let c = correction[cell_of[ix] as usize];
                    p.velocity[0] -= c[0];
                    p.velocity[1] -= c[1];
                    p.velocity[2] -= c[2];
                });
        }
        self.last_projection = Some(report);
        Ok(())
    }

    fn phase_diagnostics(&mut self) {
        if self.mode == RunMode::Production {
            if let Some(setup) = &self.config.turbine {
                if setup.model == TurbineModel::Rotating {
                    let t = stochwind_core::bem::particle_thrust(&self.particles, &setup.config)
                        .unwrap_or(f64::NAN);
                    self.thrust_series.push(t);
                }
            }
        }
        let window = self.config.trailing_window;
        let remaining = self.total_steps as u64 - self.step_index;
        if window > 0 && remaining <= window as u64 {
            // Refresh the instantaneous records so the pooled profile sees
            // this step's state (moments are otherwise one step stale here).
            let cic = cic_deposit(&self.particles, &self.grid);
            if self.trailing_cic.is_empty() {
                self.trailing_cic = cic;
            } else {
                for (acc, c) in self.trailing_cic.iter_mut().zip(&cic) {
                    acc.weight += c.weight;
                    for ax in 0..3 {
                        acc.wvel[ax] += c.wvel[ax];
                    }
                    for e in 0..6 {
                        acc.wm2[e] += c.wm2[e];
                    }
                }
            }
            self.trailing_steps += 1;
            self.profile_accum.add(&column_profiles(&self.grid));
        }
    }

    /// Advance one full step in the fixed phase order.
    pub fn step(&mut self) -> Result<(), EngineError> {
        self.trace.clear();
        self.trace.push("moments");
        self.phase_moments()?;
        self.trace.push("closure");
        self.phase_closure()?;
        self.trace.push("forces");
        let needs_disc = self.mode == RunMode::Production
            && matches!(
                self.config.turbine.as_ref().map(|t| t.model),
                Some(TurbineModel::NonRotating { .. })
            );
        let u_disc = if needs_disc { self.disc_speed() } else { None };
        self.trace.push("predict");
        self.trace.push("boundaries");
        self.phase_predict_boundaries(u_disc)?;
        self.trace.push("transport");
        self.phase_transport()?;
        self.trace.push("projection");
        self.phase_projection()?;
        self.trace.push("diagnostics");
        self.step_index += 1;
        self.phase_diagnostics();
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<(), EngineError> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Invariants that must hold after every completed step: finite
    /// velocities, positions inside the domain box.
    pub fn validate(&self) -> Result<(), String> {
        let hi = self.grid.high();
        for p in &self.particles {
            if !stochwind_core::vec3::is_finite(p.velocity)
                || !stochwind_core::vec3::is_finite(p.position)
            {
                return Err(format!("particle {} has non-finite state", p.id));
            }
            for ax in 0..3 {
                if p.position[ax] < 0.0 || p.position[ax] >= hi[ax] {
                    return Err(format!(
                        "particle {} outside domain: {:?}",
                        p.id, p.position
                    ));
                }
            }
        }
        Ok(())
    }

    /// Exact per-cell particle counts (the mass-constraint observable).
    pub fn cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.grid.n_cells()];
        for p in &self.particles {
            if let Ok(c) = self.grid.cell_index_flat(p.position) {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Grid of cloud-in-cell fields pooled over the trailing window (falls
    /// back to the instantaneous records when the window never filled).
    pub fn trailing_fields(&self) -> CartesianGrid {
        let mut grid = self.grid.clone();
        if self.trailing_steps == 0 {
            return grid;
        }
        for (rec, acc) in grid.cells.iter_mut().zip(&self.trailing_cic) {
            rec.mean = acc.mean();
            rec.m2 = acc.central_m2();
            rec.k = 0.5 * (rec.m2[0] + rec.m2[1] + rec.m2[2]);
            let l_m = stochwind_core::sde::mixing_length(rec.mean[2].max(0.0), &self.config.constants);
            let _ = l_m;
        }
        // Dissipation from the pooled tke.
        let constants = self.config.constants;
        for idx in 0..grid.n_cells() {
            let (_, _, kz) = grid.unflat(idx);
            let z = grid.cell_center(0, 0, kz)[2];
            let l_m = stochwind_core::sde::mixing_length(z, &constants).max(1e-12);
            grid.cells[idx].eps = constants.c_eps * grid.cells[idx].k.powf(1.5) / l_m;
        }
        grid
    }

    /// Level profile pooled over the trailing window (instantaneous when the
    /// window never filled).
    pub fn trailing_profile(&self) -> EmpiricalProfile {
        let z: Vec<f64> = (0..self.grid.nz)
            .map(|kz| self.grid.cell_center(0, 0, kz)[2])
            .collect();
        self.profile_accum
            .finish(z)
            .unwrap_or_else(|| column_profiles(&self.grid))
    }

    pub fn into_output(mut self, steps_run: usize) -> RunOutput {
        let trailing = self.trailing_fields();
        let profile = self.trailing_profile();
        RunOutput {
            grid: std::mem::replace(&mut self.grid, CartesianGrid::new(1, 1, 1, [1.0; 3], [0.0; 3])),
            trailing,
            profile,
            particles: std::mem::take(&mut self.particles),
            thrust_series: std::mem::take(&mut self.thrust_series),
            stats: self.stats,
            steps_run,
        }
    }
}

fn floor_column(grid: &CartesianGrid, pos: Vec3) -> (usize, usize) {
    let i = ((pos[0] / grid.delta[0]) as isize).clamp(0, grid.nx as isize - 1) as usize;
    let j = ((pos[1] / grid.delta[1]) as isize).clamp(0, grid.ny as isize - 1) as usize;
    (i, j)
}

#[allow(clippy::too_many_arguments)]
fn resample_velocity(
    config: &ScenarioConfig,
    grid: &CartesianGrid,
    profile: Option<&EmpiricalProfile>,
    inflow: InflowMode,
    exit_cell: usize,
    z: f64,
    seed: u64,
    id: u64,
    step: u64,
) -> Vec3 {
    let mut rng = CounterRng::stream(seed, id, step, Phase::Recycle);
    match (inflow, profile) {
        (InflowMode::Profile, Some(p)) => sample_profile_velocity(p, z, &mut rng),
        _ => {
            let sqrt_m2 = psd_sqrt(grid.cells[exit_cell].m2);
            sample_loglaw_velocity(
                config.u_star,
                &config.constants,
                z,
                config.u_geostrophic,
                &sqrt_m2,
                &mut rng,
            )
        }
    }
}

/// Warmup stage: run without turbine forces and pool the inflow profile.
pub fn run_warmup(config: &ScenarioConfig) -> Result<RunOutput, EngineError> {
    let mut cfg = config.clone();
    cfg.turbine = None;
    let steps = cfg.warmup_steps;
    let mut sim = Simulation::new(cfg, RunMode::Warmup, None, steps)?;
    sim.run(steps)?;
    Ok(sim.into_output(steps))
}

/// Production stage: turbine forces on, inflow recycled from `profile`.
pub fn run_production(
    config: &ScenarioConfig,
    profile: EmpiricalProfile,
) -> Result<RunOutput, EngineError> {
    let steps = config.production_steps;
    let mut sim = Simulation::new(config.clone(), RunMode::Production, Some(profile), steps)?;
    sim.run(steps)?;
    Ok(sim.into_output(steps))
}

/// The full two-stage protocol: warmup, store the profile, production.
pub fn run_simulation(config: &ScenarioConfig) -> Result<(RunOutput, RunOutput), EngineError> {
    let warmup = run_warmup(config)?;
    let profile = warmup.profile.clone();
    let production = run_production(config, profile)?;
    Ok((warmup, production))
}
