//! Blade element momentum solver and the particle-based thrust estimator,
//! used to derive the equivalent non-rotating disc parameters (a, C_T) and to
//! cross-check the rotating disc model.
//!
//! Thrust totals are stored as F/ρ in SI units (m⁴/s²), aggregated over all
//! blades; report layers convert to table conventions.

use alloc::vec::Vec;

use crate::domain::{classify_turbine_region, Particle, TurbineConfig, TurbineRegion};
use crate::fmath;
use crate::turbine::{airfoil_coeffs, blade_section, r_adm_force, TurbineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BemError {
    /// Momentum theory invalid (C_T > 1 or induction out of range).
    OutOfModel,
    /// Geometry or inflow parameters unusable (e.g. rotor reaching below the
    /// roughness length).
    Config,
    /// No particle inside the disc cylinder.
    EmptyRegion,
    Polar(TurbineError),
}

impl core::fmt::Display for BemError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BemError::OutOfModel => write!(f, "outside momentum-theory validity"),
            BemError::Config => write!(f, "invalid rotor/inflow configuration"),
            BemError::EmptyRegion => write!(f, "no particles in the disc cylinder"),
            BemError::Polar(e) => write!(f, "polar evaluation failed: {e}"),
        }
    }
}

impl core::error::Error for BemError {}

impl From<TurbineError> for BemError {
    fn from(e: TurbineError) -> Self {
        BemError::Polar(e)
    }
}

/// Rotor-averaged log-law wind: U_∞ = (1/2R) ∫_{h−R}^{h+R} (u*/κ) log(z/z₀) dz,
/// evaluated in closed form via ∫log(z/z₀)dz = z(log(z/z₀) − 1).
pub fn u_infinity(
    u_star: f64,
    kappa: f64,
    z0: f64,
    hub_height: f64,
    radius: f64,
) -> Result<f64, BemError> {
    if hub_height - radius <= z0 || radius < 0.0 {
        return Err(BemError::Config);
    }
    if radius == 0.0 {
        return Ok(u_star / kappa * fmath::ln(hub_height / z0));
    }
    let antiderivative = |z: f64| z * (fmath::ln(z / z0) - 1.0);
    let integral = antiderivative(hub_height + radius) - antiderivative(hub_height - radius);
    Ok(u_star / kappa * integral / (2.0 * radius))
}

/// Momentum-theory thrust coefficient C_T = 4a(1−a).
pub fn thrust_coefficient(a: f64) -> Result<f64, BemError> {
    if !(0.0..1.0).contains(&a) {
        return Err(BemError::OutOfModel);
    }
    Ok(4.0 * a * (1.0 - a))
}

/// Inverse of [`thrust_coefficient`] on the a < ½ branch.
pub fn induction_from_ct(ct: f64) -> Result<f64, BemError> {
    if !(0.0..=1.0).contains(&ct) {
        return Err(BemError::OutOfModel);
    }
    Ok(0.5 * (1.0 - fmath::sqrt(1.0 - ct)))
}

/// One converged annulus of the BEM solution.
#[derive(Debug, Clone, Copy)]
pub struct BemAnnulus {
    pub r: f64,
    pub a: f64,
    pub a_prime: f64,
    /// Flow angle, rad.
    pub phi: f64,
    /// Relative speed magnitude, m/s.
    pub u_rel: f64,
    /// Axial differential load over ρ, all blades: d(F_x/ρ)/dr, m³/s².
    pub df_x_dr: f64,
    /// Tangential counterpart, m³/s².
    pub df_theta_dr: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Full BEM solution over the blade span.
#[derive(Debug, Clone)]
pub struct BemSolution {
    pub annuli: Vec<BemAnnulus>,
    /// Total axial thrust over ρ (negative: opposes the flow), m⁴/s².
    pub thrust_over_rho: f64,
    pub all_converged: bool,
}

/// Fixed-point BEM solve over radial stations spaced `dr` apart on
/// [r_nacelle, R]. Non-convergence of an annulus is flagged, not fatal.
pub fn bem_solve(
    turbine: &TurbineConfig,
    u_inf: f64,
    omega: f64,
    dr: f64,
) -> Result<BemSolution, BemError> {
    if u_inf <= 0.0 || omega <= 0.0 || dr <= 0.0 {
        return Err(BemError::Config);
    }
    let span = turbine.radius - turbine.nacelle_radius;
    let n_stations = (span / dr) as usize + 2;
    let step = span / (n_stations - 1) as f64;

    let mut annuli = Vec::with_capacity(n_stations);
    let mut all_converged = true;
    for s in 0..n_stations {
        let r = turbine.nacelle_radius + s as f64 * step;
        let annulus = solve_annulus(turbine, u_inf, omega, r)?;
        all_converged &= annulus.converged;
        annuli.push(annulus);
    }

    // Trapezoid integration of the differential axial load.
    let mut thrust = 0.0;
    for pair in annuli.windows(2) {
        thrust += 0.5 * (pair[0].df_x_dr + pair[1].df_x_dr) * (pair[1].r - pair[0].r);
    }
    Ok(BemSolution {
        annuli,
        thrust_over_rho: thrust,
        all_converged,
    })
}

fn solve_annulus(
    turbine: &TurbineConfig,
    u_inf: f64,
    omega: f64,
    r: f64,
) -> Result<BemAnnulus, BemError> {
    const MAX_ITER: usize = 500;
    const TOL: f64 = 1e-6;
    const RELAX: f64 = 0.5;

    let (chord, pitch, _) = blade_section(r, &turbine.blade);
    let solidity = turbine.n_blades as f64 * chord / (2.0 * core::f64::consts::PI * r);

    let mut a = 0.0f64;
    let mut a_prime = 0.0f64;
    let mut converged = false;
    let mut iterations = MAX_ITER;
    let mut phi = 0.0;
    let mut c_l = 0.0;
    let mut c_d = 0.0;
    for it in 0..MAX_ITER {
        let axial = (1.0 - a) * u_inf;
        let tangential = (1.0 + a_prime) * omega * r;
        phi = fmath::atan2(axial, tangential);
        let alpha = phi - pitch;
        let (cl, cd, _) = airfoil_coeffs(alpha, &turbine.polar)?;
        c_l = cl;
        c_d = cd;
        let sin_phi = fmath::sin(phi);
        let cos_phi = fmath::cos(phi);
        let sin2 = (sin_phi * sin_phi).max(1e-12);
        let sc = (sin_phi * cos_phi).clamp(-1.0, 1.0);

        // a/(1−a) and a'/(1+a') from equating the momentum and blade-element
        // differential loads.
        let fa = solidity * (c_l * cos_phi + c_d * sin_phi) / (4.0 * sin2);
        let fa_p = if sc.abs() < 1e-12 {
            0.0
        } else {
            solidity * (c_l * sin_phi - c_d * cos_phi) / (4.0 * sc)
        };
        let a_new = (fa / (1.0 + fa)).clamp(0.0, 0.95);
        let a_prime_new = if fa_p >= 0.99 {
            a_prime
        } else {
            (fa_p / (1.0 - fa_p)).clamp(-0.5, 2.0)
        };

        let delta = (a_new - a).abs() + (a_prime_new - a_prime).abs();
        a += RELAX * (a_new - a);
        a_prime += RELAX * (a_prime_new - a_prime);
        if delta < TOL {
            converged = true;
            iterations = it + 1;
            break;
        }
    }

    let axial = (1.0 - a) * u_inf;
    let tangential = (1.0 + a_prime) * omega * r;
    let u_rel = fmath::sqrt(axial * axial + tangential * tangential);
    let n_b = turbine.n_blades as f64;
    let df_x_dr =
        -0.5 * n_b * chord * u_rel * u_rel * (c_l * fmath::cos(phi) + c_d * fmath::sin(phi));
    let df_theta_dr =
        0.5 * n_b * chord * u_rel * u_rel * (c_l * fmath::sin(phi) - c_d * fmath::cos(phi));
    Ok(BemAnnulus {
        r,
        a,
        a_prime,
        phi,
        u_rel,
        df_x_dr,
        df_theta_dr,
        converged,
        iterations,
    })
}

/// Monte Carlo estimate of the rotating-disc thrust from the particles in
/// the cylinder: F/ρ = V_C · Σ f_x / N_C with V_C = πR²Δx. Every cylinder
/// particle counts; blade forces vanish on the nacelle region.
pub fn particle_thrust(particles: &[Particle], turbine: &TurbineConfig) -> Result<f64, BemError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in particles {
        match classify_turbine_region(p.position, turbine) {
            TurbineRegion::Outside => {}
            TurbineRegion::Nacelle => count += 1,
            TurbineRegion::Blades => {
                count += 1;
                sum += r_adm_force(p.position, p.velocity, turbine)?.f_x;
            }
        }
    }
    if count == 0 {
        return Err(BemError::EmptyRegion);
    }
    let volume = core::f64::consts::PI * turbine.radius * turbine.radius * turbine.disc_thickness;
    Ok(volume * sum / count as f64)
}

/// Equivalent non-rotating disc parameters from a rotating-model thrust:
/// C_T = 2|F/ρ| / ((A − A_nacelle) U_∞²), a on the low-induction branch.
pub fn equivalent_disc(
    thrust_over_rho: f64,
    u_inf: f64,
    radius: f64,
    nacelle_radius: f64,
) -> Result<(f64, f64), BemError> {
    if u_inf <= 0.0 || thrust_over_rho > 0.0 {
        return Err(BemError::Config);
    }
    let area = core::f64::consts::PI * (radius * radius - nacelle_radius * nacelle_radius);
    let ct = 2.0 * fmath::fabs(thrust_over_rho) / (area * u_inf * u_inf);
    if ct > 1.0 {
        return Err(BemError::OutOfModel);
    }
    let a = induction_from_ct(ct)?;
    Ok((a, ct))
}
