//! Lagrangian actuator-disc force models: the non-rotating uniformly loaded
//! disc, the rotating blade-element disc with merged sectors, and the
//! permeable-disc nacelle.
//!
//! Forces are per unit mass and feed the affine term of the velocity
//! prediction step. Merged sectors (Δθ = 2π/N_blades) make blade positions
//! irrelevant; only the region a particle occupies matters.

pub use crate::domain::{AirfoilPolar, BladeGeometry};

use crate::domain::{classify_turbine_region, local_frame, TurbineConfig, TurbineRegion};
use crate::fmath;
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurbineError {
    /// Induction factor outside [0, 1).
    BadInduction,
    EmptyPolar,
}

impl core::fmt::Display for TurbineError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TurbineError::BadInduction => write!(f, "induction factor must lie in [0, 1)"),
            TurbineError::EmptyPolar => write!(f, "airfoil polar has no entries"),
        }
    }
}

impl core::error::Error for TurbineError {}

/// Wake model selection for one turbine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TurbineModel {
    /// Uniformly loaded disc with the given axial induction factor; the disc
    /// speed U_D is re-estimated every step from the blade-region particles.
    NonRotating { a: f64 },
    Rotating,
}

/// Lift and drag at angle of attack `alpha`; table polars interpolate
/// linearly and clamp outside their range (flag reports the clamp).
pub fn airfoil_coeffs(alpha: f64, polar: &AirfoilPolar) -> Result<(f64, f64, bool), TurbineError> {
    match polar {
        AirfoilPolar::Table(rows) => {
            if rows.is_empty() {
                return Err(TurbineError::EmptyPolar);
            }
            let first = rows[0];
            let last = rows[rows.len() - 1];
            if alpha <= first.0 {
                return Ok((first.1, first.2, alpha < first.0));
            }
            if alpha >= last.0 {
                return Ok((last.1, last.2, alpha > last.0));
            }
            let pos = rows.partition_point(|r| r.0 <= alpha);
            let lo = rows[pos - 1];
            let hi = rows[pos];
            let t = (alpha - lo.0) / (hi.0 - lo.0);
            Ok((lo.1 + t * (hi.1 - lo.1), lo.2 + t * (hi.2 - lo.2), false))
        }
        AirfoilPolar::Analytic {
            cl_slope,
            alpha0,
            cd0,
            cd2,
            alpha_range,
        } => {
            let clamped = alpha < alpha_range.0 || alpha > alpha_range.1;
            let a = alpha.clamp(alpha_range.0, alpha_range.1) - alpha0;
            Ok((cl_slope * a, cd0 + cd2 * a * a, clamped))
        }
    }
}

/// Chord and local pitch at radius `r`, clamped to the blade table ends.
pub fn blade_section(r: f64, blade: &BladeGeometry) -> (f64, f64, bool) {
    let rows = &blade.stations;
    debug_assert!(!rows.is_empty());
    let first = rows[0];
    let last = rows[rows.len() - 1];
    if r <= first.0 {
        return (first.1, first.2, r < first.0);
    }
    if r >= last.0 {
        return (last.1, last.2, r > last.0);
    }
    let pos = rows.partition_point(|row| row.0 <= r);
    let lo = rows[pos - 1];
    let hi = rows[pos];
    let t = (r - lo.0) / (hi.0 - lo.0);
    (
        lo.1 + t * (hi.1 - lo.1),
        lo.2 + t * (hi.2 - lo.2),
        false,
    )
}

/// Uniform axial force per unit mass of the non-rotating disc:
/// f_x = −(1/Δx)(2a/(1−a)) U_D².
pub fn nr_adm_force(u_d: f64, a: f64, disc_thickness: f64) -> Result<f64, TurbineError> {
    if !(0.0..1.0).contains(&a) {
        return Err(TurbineError::BadInduction);
    }
    Ok(-(2.0 * a / (1.0 - a)) * u_d * u_d / disc_thickness)
}

/// Axial force per unit mass of the permeable nacelle disc, from the
/// particle's own instantaneous axial speed.
pub fn nacelle_force(u: f64, a_nacelle: f64, disc_thickness: f64) -> Result<f64, TurbineError> {
    if !(0.0..1.0).contains(&a_nacelle) {
        return Err(TurbineError::BadInduction);
    }
    Ok(-(2.0 * a_nacelle / (1.0 - a_nacelle)) * u * u / disc_thickness)
}

/// Rotating-disc force on one blade-region particle.
#[derive(Debug, Clone, Copy)]
pub struct RAdmForce {
    /// Axial component, m/s².
    pub f_x: f64,
    /// Tangential component along e_θ, m/s².
    pub f_theta: f64,
    pub e_theta: Vec3,
    /// Radius of the particle in the rotor plane, m.
    pub r: f64,
    /// Flow angle, rad.
    pub phi: f64,
    /// Angle of attack was outside the polar range.
    pub clamped_alpha: bool,
    /// Radius was below the first blade station.
    pub clamped_station: bool,
}

impl RAdmForce {
    pub fn cartesian(&self) -> Vec3 {
        [
            self.f_x + self.f_theta * self.e_theta[0],
            self.f_theta * self.e_theta[1],
            self.f_theta * self.e_theta[2],
        ]
    }
}

/// Blade-element force of the rotating disc on a particle at `position` with
/// velocity `velocity` (must be inside the blade region).
///
/// The flow angle uses the quadrant-aware arctangent so reversed flow maps to
/// φ ∈ (π/2, π] instead of wrapping.
pub fn r_adm_force(
    position: Vec3,
    velocity: Vec3,
    turbine: &TurbineConfig,
) -> Result<RAdmForce, TurbineError> {
    let frame = local_frame(position, turbine).map_err(|_| TurbineError::BadInduction)?;
    let u_axial = velocity[0];
    let u_tan = vec3::dot(velocity, frame.e_theta);
    let rel_tan = u_tan + turbine.omega * frame.r;
    let u_rel_sq = u_axial * u_axial + rel_tan * rel_tan;
    let phi = fmath::atan2(u_axial, rel_tan);
    let (chord, pitch, clamped_station) = blade_section(frame.r, &turbine.blade);
    let alpha = phi - pitch;
    let (c_l, c_d, clamped_alpha) = airfoil_coeffs(alpha, &turbine.polar)?;
    let scale = turbine.n_blades as f64 * u_rel_sq * chord
        / (4.0 * core::f64::consts::PI * frame.r * turbine.disc_thickness);
    let (sin_phi, cos_phi) = (fmath::sin(phi), fmath::cos(phi));
    Ok(RAdmForce {
        f_x: -scale * (c_l * cos_phi + c_d * sin_phi),
        f_theta: scale * (c_l * sin_phi - c_d * cos_phi),
        e_theta: frame.e_theta,
        r: frame.r,
        phi,
        clamped_alpha,
        clamped_station,
    })
}

/// Clamp events tallied while applying forces; the driver reports them.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForceStats {
    pub blade_particles: usize,
    pub nacelle_particles: usize,
    pub alpha_clamps: usize,
    pub station_clamps: usize,
}

/// Total turbine force per unit mass on a particle, composing the selected
/// blade model with the nacelle disc. `u_disc` is the per-step disc mean
/// speed (used by the non-rotating model only).
pub fn particle_force(
    position: Vec3,
    velocity: Vec3,
    turbine: &TurbineConfig,
    model: TurbineModel,
    u_disc: f64,
    stats: &mut ForceStats,
) -> Result<Vec3, TurbineError> {
    match classify_turbine_region(position, turbine) {
        TurbineRegion::Outside => Ok([0.0; 3]),
        TurbineRegion::Nacelle => {
            stats.nacelle_particles += 1;
            let f = nacelle_force(velocity[0], turbine.a_nacelle, turbine.disc_thickness)?;
            Ok([f, 0.0, 0.0])
        }
        TurbineRegion::Blades => {
            stats.blade_particles += 1;
            match model {
                TurbineModel::NonRotating { a } => {
                    let f = nr_adm_force(u_disc, a, turbine.disc_thickness)?;
                    Ok([f, 0.0, 0.0])
                }
                TurbineModel::Rotating => {
                    let force = r_adm_force(position, velocity, turbine)?;
                    if force.clamped_alpha {
                        stats.alpha_clamps += 1;
                    }
                    if force.clamped_station {
                        stats.station_clamps += 1;
                    }
                    Ok(force.cartesian())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, Phase};
    use alloc::vec;

    fn table_polar() -> AirfoilPolar {
        AirfoilPolar::Table(vec![
            (-0.2, -1.0, 0.05),
            (0.0, 0.2, 0.01),
            (0.1, 0.6, 0.02),
            (0.3, 1.2, 0.08),
        ])
    }

    fn turbine() -> TurbineConfig {
        TurbineConfig {
            hub: [100.0, 50.0, 50.0],
            radius: 20.5,
            nacelle_radius: 4.5,
            disc_thickness: 16.0,
            omega: 2.83,
            n_blades: 3,
            a_nacelle: 0.4,
            blade: BladeGeometry {
                stations: vec![(4.5, 1.6, 0.25), (12.0, 1.2, 0.1), (20.5, 0.8, 0.0)],
            },
            polar: table_polar(),
        }
    }

    #[test]
    fn airfoil_table_nodes_and_midpoints() {
        let p = table_polar();
        let (cl, cd, clamped) = airfoil_coeffs(0.1, &p).unwrap();
        assert_eq!((cl, cd, clamped), (0.6, 0.02, false));
        let (cl, _, _) = airfoil_coeffs(0.05, &p).unwrap();
        assert!((cl - 0.4).abs() < 1e-15);
    }

    #[test]
    fn airfoil_clamps_out_of_range() {
        let p = table_polar();
        let (cl, _, clamped) = airfoil_coeffs(1.0, &p).unwrap();
        assert!(clamped);
        assert_eq!(cl, 1.2);
        let (cl, _, clamped) = airfoil_coeffs(-0.5, &p).unwrap();
        assert!(clamped);
        assert_eq!(cl, -1.0);
    }

    #[test]
    fn airfoil_empty_table_errors() {
        assert_eq!(
            airfoil_coeffs(0.0, &AirfoilPolar::Table(vec![])).unwrap_err(),
            TurbineError::EmptyPolar
        );
    }

    #[test]
    fn airfoil_thin_symmetric_zero_lift() {
        let p = AirfoilPolar::Analytic {
            cl_slope: 2.0 * core::f64::consts::PI,
            alpha0: 0.0,
            cd0: 0.01,
            cd2: 0.0,
            alpha_range: (-0.3, 0.3),
        };
        let (cl, _, _) = airfoil_coeffs(0.0, &p).unwrap();
        assert_eq!(cl, 0.0);
    }

    #[test]
    fn blade_section_interpolates_and_clamps() {
        let t = turbine();
        let (c, g, clamped) = blade_section(4.5, &t.blade);
        assert_eq!((c, g, clamped), (1.6, 0.25, false));
        let (c, _, _) = blade_section(8.25, &t.blade);
        assert!((c - 1.4).abs() < 1e-15);
        let (c, g, clamped) = blade_section(2.0, &t.blade);
        assert!(clamped);
        assert_eq!((c, g), (1.6, 0.25));
    }

    #[test]
    fn nr_force_zero_induction() {
        assert_eq!(nr_adm_force(7.0, 0.0, 16.0).unwrap(), 0.0);
    }

    #[test]
    fn nr_force_direct_values() {
        // a = 0.2, Δx = 16, U_D = 7 → −(1/16)(0.4/0.8)·49 = −1.53125.
        let f = nr_adm_force(7.0, 0.2, 16.0).unwrap();
        assert!((f + 1.53125).abs() < 1e-14);
        let f = nr_adm_force(1.0, 0.5, 1.0).unwrap();
        assert!((f + 2.0).abs() < 1e-14);
    }

    #[test]
    fn nr_force_rejects_full_blockage() {
        assert_eq!(nr_adm_force(7.0, 1.0, 16.0).unwrap_err(), TurbineError::BadInduction);
    }

    #[test]
    fn nacelle_force_values() {
        assert_eq!(nacelle_force(7.0, 0.0, 16.0).unwrap(), 0.0);
        assert_eq!(nacelle_force(0.0, 0.4, 16.0).unwrap(), 0.0);
        // a = 0.4, u = 7, Δx = 16 → −(1/16)(0.8/0.6)·49 = −4.0833…
        let f = nacelle_force(7.0, 0.4, 16.0).unwrap();
        assert!((f + 49.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn r_adm_flow_angle_example() {
        // u = 8, U_tan = 0, ω = 2.83, r = 10 → φ = arctan(8/28.3).
        let t = turbine();
        let pos = [t.hub[0], t.hub[1], t.hub[2] + 10.0];
        let force = r_adm_force(pos, [8.0, 0.0, 0.0], &t).unwrap();
        assert!((force.phi - (8.0f64 / 28.3).atan()).abs() < 1e-12);
        assert!((force.phi - 0.2757).abs() < 3e-4);
        assert!(force.f_x < 0.0);
    }

    #[test]
    fn r_adm_zero_polar_zero_force() {
        let mut t = turbine();
        t.polar = AirfoilPolar::Table(vec![(-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        let pos = [t.hub[0], t.hub[1] + 8.0, t.hub[2]];
        let force = r_adm_force(pos, [5.0, 1.0, -0.5], &t).unwrap();
        assert_eq!(force.f_x, 0.0);
        assert_eq!(force.f_theta, 0.0);
    }

    #[test]
    fn r_adm_reversed_flow_obtuse_angle() {
        let t = turbine();
        let pos = [t.hub[0], t.hub[1], t.hub[2] + 10.0];
        let force = r_adm_force(pos, [-3.0, 0.0, 0.0], &t).unwrap();
        assert!(force.phi < 0.0, "negative axial flow gives negative phi");
        // Strongly reversed tangential flow pushes past π/2.
        let force = r_adm_force(pos, [3.0, 40.0, 0.0], &t).unwrap();
        let u_tan = vec3::dot([3.0, 40.0, 0.0], force.e_theta);
        if u_tan + t.omega * force.r < 0.0 {
            assert!(force.phi > core::f64::consts::FRAC_PI_2);
        }
    }

    #[test]
    fn r_adm_lift_does_no_work_in_relative_frame() {
        // With C_D = 0: f·U_relat = 0 by the flow-angle geometry.
        let mut t = turbine();
        t.polar = AirfoilPolar::Analytic {
            cl_slope: 5.7,
            alpha0: 0.0,
            cd0: 0.0,
            cd2: 0.0,
            alpha_range: (-0.6, 0.6),
        };
        let mut rng = CounterRng::stream(3, 0, 0, Phase::Init);
        for _ in 0..200 {
            let r = 5.0 + 15.0 * rng.uniform();
            let theta = 2.0 * core::f64::consts::PI * rng.uniform();
            let pos = [
                t.hub[0] + (rng.uniform() - 0.5) * t.disc_thickness,
                t.hub[1] + r * theta.cos(),
                t.hub[2] + r * theta.sin(),
            ];
            let vel = [
                2.0 + 6.0 * rng.uniform(),
                2.0 * rng.normal(),
                2.0 * rng.normal(),
            ];
            let f = r_adm_force(pos, vel, &t).unwrap();
            let u_rel_x = vel[0];
            let u_rel_theta = vec3::dot(vel, f.e_theta) + t.omega * f.r;
            let power = f.f_x * u_rel_x + f.f_theta * u_rel_theta;
            let scale = (f.f_x.abs() + f.f_theta.abs()) * (u_rel_x.abs() + u_rel_theta.abs());
            assert!(power.abs() <= 1e-10 * scale.max(1e-30), "power {power}");
        }
    }

    #[test]
    fn r_adm_wake_counter_rotation_sign() {
        // f_θ > 0 whenever C_L sinφ > C_D cosφ: torques the wake opposite to
        // the blade motion (−ω r e_θ).
        let t = turbine();
        let pos = [t.hub[0], t.hub[1], t.hub[2] + 12.0];
        let force = r_adm_force(pos, [9.0, 0.0, 0.0], &t).unwrap();
        let (c_l, c_d, _) =
            airfoil_coeffs(force.phi - blade_section(force.r, &t.blade).1, &t.polar).unwrap();
        if c_l * force.phi.sin() > c_d * force.phi.cos() {
            assert!(force.f_theta > 0.0);
        }
    }

    #[test]
    fn particle_force_outside_is_zero() {
        let t = turbine();
        let mut stats = ForceStats::default();
        let f = particle_force(
            [0.0, 0.0, 0.0],
            [8.0, 0.0, 0.0],
            &t,
            TurbineModel::Rotating,
            0.0,
            &mut stats,
        )
        .unwrap();
        assert_eq!(f, [0.0; 3]);
        assert_eq!(stats.blade_particles, 0);
    }

    #[test]
    fn nr_uniform_loading_identical_increment() {
        let t = turbine();
        let model = TurbineModel::NonRotating { a: 0.2 };
        let mut stats = ForceStats::default();
        let u_d = 7.0;
        let mut forces = vec![];
        for dz in [6.0, 10.0, 14.0, 18.0] {
            let pos = [t.hub[0], t.hub[1], t.hub[2] + dz];
            forces.push(particle_force(pos, [5.0, 1.0, 0.0], &t, model, u_d, &mut stats).unwrap());
        }
        for f in &forces {
            assert_eq!(*f, forces[0]);
        }
        assert_eq!(stats.blade_particles, 4);
    }

    #[test]
    fn momentum_audit_matches_volume_integral() {
        // Mass-weighted velocity change over one step equals force Δt
        // integrated over the region: Σ (V_cell/N_pc) f_x ≈ ∫ f_x dV.
        let t = turbine();
        let model = TurbineModel::NonRotating { a: 0.25 };
        let u_d = 6.0;
        let mut rng = CounterRng::stream(17, 0, 0, Phase::Init);
        let n = 200_000;
        // Sample particles uniformly in a box enclosing the disc cylinder.
        let half = t.disc_thickness / 2.0;
        let box_vol = t.disc_thickness * (2.0 * t.radius) * (2.0 * t.radius);
        let weight = box_vol / n as f64;
        let mut stats = ForceStats::default();
        let mut total = 0.0;
        for _ in 0..n {
            let pos = [
                t.hub[0] + (rng.uniform() - 0.5) * 2.0 * half,
                t.hub[1] + (rng.uniform() - 0.5) * 2.0 * t.radius,
                t.hub[2] + (rng.uniform() - 0.5) * 2.0 * t.radius,
            ];
            let f = particle_force(pos, [u_d, 0.0, 0.0], &t, model, u_d, &mut stats).unwrap();
            total += f[0] * weight;
        }
        let blade_area = core::f64::consts::PI * (t.radius.powi(2) - t.nacelle_radius.powi(2));
        let nac_area = core::f64::consts::PI * t.nacelle_radius.powi(2);
        let f_blade = nr_adm_force(u_d, 0.25, t.disc_thickness).unwrap();
        let f_nac = nacelle_force(u_d, t.a_nacelle, t.disc_thickness).unwrap();
        let expect = (f_blade * blade_area + f_nac * nac_area) * t.disc_thickness;
        assert!(
            (total - expect).abs() / expect.abs() < 0.02,
            "{total} vs {expect}"
        );
    }
}
