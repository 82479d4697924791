//! Core data types and geometry predicates shared by every other module.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::vec3::{self, Vec3};

/// One fluid particle: the fundamental Monte Carlo unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    /// Position, meters.
    pub position: Vec3,
    /// Velocity, m/s.
    pub velocity: Vec3,
    /// Stable identifier used to key the particle's RNG streams.
    pub id: u64,
}

/// Per-cell Eulerian record: conditional mean, central second moments, tke
/// and dissipation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellRecord {
    /// Mean velocity, m/s.
    pub mean: Vec3,
    /// Central second moments `(uu, vv, ww, uv, uw, vw)`, m²/s².
    pub m2: [f64; 6],
    /// Turbulent kinetic energy, m²/s².
    pub k: f64,
    /// Dissipation rate, m²/s³.
    pub eps: f64,
}

impl CellRecord {
    /// Second-moment entry by component pair (symmetric).
    #[inline]
    pub fn moment(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.m2[0],
            (1, 1) => self.m2[1],
            (2, 2) => self.m2[2],
            (0, 1) => self.m2[3],
            (0, 2) => self.m2[4],
            (1, 2) => self.m2[5],
            _ => unreachable!(),
        }
    }
}

/// Regular Cartesian partitioning mesh carrying per-cell Eulerian records.
///
/// Cells use the half-open convention `[low, high)` along each axis; storage
/// is x-fastest: `idx = i + nx*(j + ny*k)`.
#[derive(Debug, Clone)]
pub struct CartesianGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell sizes, meters.
    pub delta: Vec3,
    /// Low corner of the domain box, meters.
    pub origin: Vec3,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainError {
    OutOfDomain,
    /// Query point sits on the turbine axis where the tangential frame degenerates.
    DegenerateFrame,
}

impl core::fmt::Display for DomainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DomainError::OutOfDomain => write!(f, "position outside the domain box"),
            DomainError::DegenerateFrame => write!(f, "tangential frame undefined on the axis"),
        }
    }
}

impl core::error::Error for DomainError {}

impl CartesianGrid {
    pub fn new(nx: usize, ny: usize, nz: usize, delta: Vec3, origin: Vec3) -> Self {
        CartesianGrid {
            nx,
            ny,
            nz,
            delta,
            origin,
            cells: vec![CellRecord::default(); nx * ny * nz],
        }
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Domain extent along each axis, meters.
    #[inline]
    pub fn size(&self) -> Vec3 {
        [
            self.nx as f64 * self.delta[0],
            self.ny as f64 * self.delta[1],
            self.nz as f64 * self.delta[2],
        ]
    }

    #[inline]
    pub fn high(&self) -> Vec3 {
        vec3::add(self.origin, self.size())
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    /// Flat index of the cell `offset` steps along `axis`; caller guarantees
    /// the neighbor exists.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let stride = match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        } as isize;
        (idx as isize + offset * stride) as usize
    }

    /// Cell containing `position` under the half-open convention.
    ///
    /// Positions on the domain upper faces are out of range by that
    /// convention; boundary handling must have pulled particles strictly
    /// inside before indexing.
    pub fn cell_index(&self, position: Vec3) -> Result<(usize, usize, usize), DomainError> {
        let mut idx = [0usize; 3];
        for ax in 0..3 {
            let rel = (position[ax] - self.origin[ax]) / self.delta[ax];
            if rel < 0.0 {
                return Err(DomainError::OutOfDomain);
            }
            let i = fmath::floor(rel) as usize;
            let n = [self.nx, self.ny, self.nz][ax];
            if i >= n {
                return Err(DomainError::OutOfDomain);
            }
            idx[ax] = i;
        }
        Ok((idx[0], idx[1], idx[2]))
    }

    pub fn cell_index_flat(&self, position: Vec3) -> Result<usize, DomainError> {
        let (i, j, k) = self.cell_index(position)?;
        Ok(self.flat(i, j, k))
    }

    /// Center of cell `(i, j, k)`, meters.
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + (i as f64 + 0.5) * self.delta[0],
            self.origin[1] + (j as f64 + 0.5) * self.delta[1],
            self.origin[2] + (k as f64 + 0.5) * self.delta[2],
        ]
    }

    #[inline]
    pub fn contains(&self, p: Vec3) -> bool {
        let hi = self.high();
        (0..3).all(|ax| p[ax] >= self.origin[ax] && p[ax] < hi[ax])
    }

    /// Identity `k = tr(m2)/2` holding in every populated cell.
    pub fn tke_identity_max_error(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| fmath::fabs(c.k - 0.5 * (c.m2[0] + c.m2[1] + c.m2[2])))
            .fold(0.0, f64::max)
    }
}

/// Turbulence closure constants (Rotta, IP, k-ε parametrization) plus the
/// surface-layer parameters.
#[derive(Debug, Clone, Copy)]
pub struct ModelConstants {
    /// Rotta constant.
    pub c_r: f64,
    /// IP-model gradient coefficient.
    pub c_2: f64,
    /// Dissipation parametrization constant.
    pub c_eps: f64,
    /// von Karman constant, in (0, 1).
    pub kappa: f64,
    /// Roughness length, meters.
    pub z_0: f64,
    /// Mixing-length knee height, meters.
    pub z_lm: f64,
    /// Air density, kg/m³ (constant).
    pub rho: f64,
}

impl ModelConstants {
    pub fn validate(&self) -> bool {
        self.c_r > 0.0
            && self.c_2 > 0.0
            && self.c_eps > 0.0
            && self.kappa > 0.0
            && self.kappa < 1.0
            && self.z_0 > 0.0
            && self.z_lm > 0.0
            && self.rho > 0.0
    }
}

/// Airfoil polar: tabulated `(α, C_L, C_D)` rows or an analytic closed form.
#[derive(Debug, Clone)]
pub enum AirfoilPolar {
    /// Rows `(alpha_rad, c_l, c_d)`, alpha strictly increasing.
    Table(Vec<(f64, f64, f64)>),
    /// Thin-airfoil-style closed form: `C_L = cl_slope*(α − alpha0)`,
    /// `C_D = cd0 + cd2*(α − alpha0)²`, clamped to `alpha_range`.
    Analytic {
        cl_slope: f64,
        alpha0: f64,
        cd0: f64,
        cd2: f64,
        alpha_range: (f64, f64),
    },
}

/// Blade geometry sampled at radial stations.
#[derive(Debug, Clone)]
pub struct BladeGeometry {
    /// Rows `(r_m, chord_m, pitch_rad)`, radii strictly increasing.
    pub stations: Vec<(f64, f64, f64)>,
}

/// Actuator-disc turbine description.
#[derive(Debug, Clone)]
pub struct TurbineConfig {
    /// Hub position, meters. The turbine axis is +x.
    pub hub: Vec3,
    /// Rotor radius, meters.
    pub radius: f64,
    /// Nacelle radius, meters.
    pub nacelle_radius: f64,
    /// Thickness of the force-carrying cylinder, meters. Independent of the
    /// mesh spacing.
    pub disc_thickness: f64,
    /// Angular speed, rad/s (rotation velocity of a blade point is −ω·r·e_θ).
    pub omega: f64,
    pub n_blades: usize,
    /// Nacelle induction factor, dimensionless.
    pub a_nacelle: f64,
    pub blade: BladeGeometry,
    pub polar: AirfoilPolar,
}

impl TurbineConfig {
    pub fn validate(&self) -> bool {
        self.nacelle_radius > 0.0
            && self.nacelle_radius < self.radius
            && self.disc_thickness > 0.0
            && self.a_nacelle >= 0.0
            && self.a_nacelle < 1.0
            && self
                .blade
                .stations
                .windows(2)
                .all(|w| w[0].0 < w[1].0)
    }

    /// Rotor diameter, meters.
    #[inline]
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Region of the turbine cylinder a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurbineRegion {
    Outside,
    Blades,
    Nacelle,
}

/// Local cylindrical frame at a query point (axis along +x).
#[derive(Debug, Clone, Copy)]
pub struct CylindricalFrame {
    pub e_x: Vec3,
    /// Distance from the turbine axis in the rotor plane, meters.
    pub r: f64,
    /// Unit tangential vector; the blade rotation velocity is −ω·r·e_θ.
    pub e_theta: Vec3,
}

/// Classify a point against the turbine cylinder.
///
/// The axial slab is `|x − hub_x| ≤ thickness/2`; inside it, `r ≤ r_nacelle`
/// is nacelle (closed) and `r_nacelle < r ≤ R` is blades.
pub fn classify_turbine_region(position: Vec3, turbine: &TurbineConfig) -> TurbineRegion {
    let dx = fmath::fabs(position[0] - turbine.hub[0]);
    if dx > 0.5 * turbine.disc_thickness {
        return TurbineRegion::Outside;
    }
    let r = fmath::hypot(position[1] - turbine.hub[1], position[2] - turbine.hub[2]);
    if r <= turbine.nacelle_radius {
        TurbineRegion::Nacelle
    } else if r <= turbine.radius {
        TurbineRegion::Blades
    } else {
        TurbineRegion::Outside
    }
}

/// Local cylindrical frame at `position`; errors on the axis where e_θ is
/// undefined (callers treat axis points as nacelle, where e_θ is unused).
pub fn local_frame(position: Vec3, turbine: &TurbineConfig) -> Result<CylindricalFrame, DomainError> {
    let dy = position[1] - turbine.hub[1];
    let dz = position[2] - turbine.hub[2];
    let r = fmath::hypot(dy, dz);
    if r <= 1e-12 {
        return Err(DomainError::DegenerateFrame);
    }
    let e_r = [0.0, dy / r, dz / r];
    let e_x = [1.0, 0.0, 0.0];
    let e_theta = vec3::cross(e_x, e_r);
    Ok(CylindricalFrame { e_x, r, e_theta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> CartesianGrid {
        CartesianGrid::new(3, 3, 3, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    }

    fn turbine() -> TurbineConfig {
        TurbineConfig {
            hub: [100.0, 50.0, 50.0],
            radius: 20.5,
            nacelle_radius: 4.5,
            disc_thickness: 16.0,
            omega: 2.83,
            n_blades: 3,
            a_nacelle: 0.38,
            blade: BladeGeometry {
                stations: alloc::vec![(4.5, 1.6, 0.3), (20.5, 0.8, 0.0)],
            },
            polar: AirfoilPolar::Analytic {
                cl_slope: 2.0 * core::f64::consts::PI,
                alpha0: 0.0,
                cd0: 0.01,
                cd2: 0.0,
                alpha_range: (-0.3, 0.3),
            },
        }
    }

    #[test]
    fn cell_index_first_cell() {
        let g = grid3();
        assert_eq!(g.cell_index([0.5, 0.5, 0.5]).unwrap(), (0, 0, 0));
    }

    #[test]
    fn cell_index_half_open_on_interior_face() {
        let g = grid3();
        assert_eq!(g.cell_index([1.0, 0.5, 0.5]).unwrap(), (1, 0, 0));
    }

    #[test]
    fn cell_index_rejects_out_of_domain() {
        // 90-cell x-axis at 16 m spans 1440 m; x = 1487 lies beyond it.
        let g = CartesianGrid::new(90, 31, 80, [16.0, 13.0, 3.75], [0.0, 0.0, 0.0]);
        assert_eq!(
            g.cell_index([1487.0, 402.0, 299.0]),
            Err(DomainError::OutOfDomain)
        );
        // In-range companion point.
        assert!(g.cell_index([1439.0, 402.0, 299.0]).is_ok());
    }

    #[test]
    fn cell_index_rejects_upper_faces() {
        let g = grid3();
        assert_eq!(g.cell_index([3.0, 0.5, 0.5]), Err(DomainError::OutOfDomain));
    }

    #[test]
    fn cell_center_within_half_cell_of_any_contained_point() {
        let g = CartesianGrid::new(4, 3, 5, [2.0, 1.5, 0.5], [1.0, -2.0, 0.0]);
        let mut rng = crate::rng::CounterRng::stream(11, 0, 0, crate::rng::Phase::Init);
        for _ in 0..500 {
            let size = g.size();
            let p = [
                g.origin[0] + rng.uniform() * size[0] * 0.999_999,
                g.origin[1] + rng.uniform() * size[1] * 0.999_999,
                g.origin[2] + rng.uniform() * size[2] * 0.999_999,
            ];
            let (i, j, k) = g.cell_index(p).unwrap();
            let c = g.cell_center(i, j, k);
            for ax in 0..3 {
                assert!((p[ax] - c[ax]).abs() <= 0.5 * g.delta[ax] + 1e-12);
            }
        }
    }

    #[test]
    fn classify_hub_center_is_nacelle() {
        let t = turbine();
        assert_eq!(classify_turbine_region(t.hub, &t), TurbineRegion::Nacelle);
    }

    #[test]
    fn classify_tip_is_blades() {
        let t = turbine();
        let p = [t.hub[0], t.hub[1], t.hub[2] + t.radius];
        assert_eq!(classify_turbine_region(p, &t), TurbineRegion::Blades);
    }

    #[test]
    fn classify_outside_slab() {
        let t = turbine();
        let r = 0.5 * (t.nacelle_radius + t.radius);
        let p = [t.hub[0] + t.disc_thickness, t.hub[1], t.hub[2] + r];
        assert_eq!(classify_turbine_region(p, &t), TurbineRegion::Outside);
    }

    #[test]
    fn classify_partitions_the_slab() {
        let t = turbine();
        let mut rng = crate::rng::CounterRng::stream(5, 0, 0, crate::rng::Phase::Init);
        for _ in 0..2000 {
            let p = [
                t.hub[0] + (rng.uniform() - 0.5) * t.disc_thickness,
                t.hub[1] + (rng.uniform() - 0.5) * 3.0 * t.radius,
                t.hub[2] + (rng.uniform() - 0.5) * 3.0 * t.radius,
            ];
            let region = classify_turbine_region(p, &t);
            let r = fmath::hypot(p[1] - t.hub[1], p[2] - t.hub[2]);
            let in_slab = (p[0] - t.hub[0]).abs() <= 0.5 * t.disc_thickness;
            let expected = if !in_slab || r > t.radius {
                TurbineRegion::Outside
            } else if r <= t.nacelle_radius {
                TurbineRegion::Nacelle
            } else {
                TurbineRegion::Blades
            };
            assert_eq!(region, expected);
        }
    }

    #[test]
    fn local_frame_above_hub() {
        let t = turbine();
        let p = [t.hub[0], t.hub[1], t.hub[2] + 7.0];
        let f = local_frame(p, &t).unwrap();
        assert!((f.r - 7.0).abs() < 1e-12);
        // e_θ horizontal for a point straight above the hub.
        assert!(f.e_theta[2].abs() < 1e-12);
    }

    #[test]
    fn local_frame_errors_on_axis() {
        let t = turbine();
        assert_eq!(
            local_frame(t.hub, &t).unwrap_err(),
            DomainError::DegenerateFrame
        );
    }

    #[test]
    fn local_frame_matches_cross_product_oracle() {
        let t = turbine();
        let p = [t.hub[0], t.hub[1] + 5.0, t.hub[2]];
        let f = local_frame(p, &t).unwrap();
        assert!((f.r - 5.0).abs() < 1e-12);
        // e_θ = e_x × e_r with e_r = +y here gives +z.
        assert!((f.e_theta[0]).abs() < 1e-12);
        assert!((f.e_theta[1]).abs() < 1e-12);
        assert!((f.e_theta[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_frame_orthonormal() {
        let t = turbine();
        let mut rng = crate::rng::CounterRng::stream(9, 0, 0, crate::rng::Phase::Init);
        for _ in 0..500 {
            let p = [
                t.hub[0] + rng.uniform() * 10.0,
                t.hub[1] + (rng.uniform() - 0.5) * 40.0,
                t.hub[2] + (rng.uniform() - 0.5) * 40.0,
            ];
            match local_frame(p, &t) {
                Ok(f) if f.r > 1e-9 => {
                    assert!(vec3::dot(f.e_x, f.e_theta).abs() < 1e-12);
                    assert!((vec3::norm(f.e_theta) - 1.0).abs() < 1e-12);
                    let e_r = [0.0, (p[1] - t.hub[1]) / f.r, (p[2] - t.hub[2]) / f.r];
                    assert!(vec3::dot(e_r, f.e_theta).abs() < 1e-12);
                }
                _ => {}
            }
        }
    }
}
