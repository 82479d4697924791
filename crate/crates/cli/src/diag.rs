//! Run diagnostics: velocity histograms, turbulence intensity, and vertical
//! wake profiles at downstream stations.

use std::fmt;

use stochwind_core::domain::{CartesianGrid, Particle};
use stochwind_core::vec3::Vec3;

#[derive(Debug)]
pub enum DiagError {
    EmptyNeighborhood,
    BadParameter(String),
}

impl fmt::Display for DiagError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagError::EmptyNeighborhood => write!(f, "no particles in probe neighborhood"),
            DiagError::BadParameter(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for DiagError {}

/// Normalized histogram of the streamwise velocity around a probe point.
#[derive(Debug, Clone)]
pub struct VelocityHistogram {
    /// Bin edges, length = bins + 1.
    pub edges: Vec<f64>,
    /// Normalized frequencies summing to 1.
    pub freq: Vec<f64>,
    pub sample_count: usize,
    pub probe: Vec3,
    /// Neighborhood half-extent in cells per axis.
    pub half_extent: usize,
}

impl VelocityHistogram {
    /// Velocity at the peak bin (bin center of the mode).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, f) in self.freq.iter().enumerate() {
            if *f > self.freq[best] {
                best = i;
            }
        }
        0.5 * (self.edges[best] + self.edges[best + 1])
    }

    pub fn normalization_error(&self) -> f64 {
        (self.freq.iter().sum::<f64>() - 1.0).abs()
    }
}

/// Histogram of particle u over all cells within `half_extent` of the probe
/// cell, with fixed-width bins.
pub fn velocity_histogram(
    particles: &[Particle],
    grid: &CartesianGrid,
    probe: Vec3,
    bin_width: f64,
    half_extent: usize,
) -> Result<VelocityHistogram, DiagError> {
    if bin_width <= 0.0 {
        return Err(DiagError::BadParameter("bin width must be positive".into()));
    }
    let (pi, pj, pk) = grid
        .cell_index(probe)
        .map_err(|_| DiagError::BadParameter(format!("probe {probe:?} outside domain")))?;
    let h = half_extent as isize;
    let mut samples: Vec<f64> = Vec::new();
    for p in particles {
        let Ok((i, j, k)) = grid.cell_index(p.position) else {
            continue;
        };
        if (i as isize - pi as isize).abs() <= h
            && (j as isize - pj as isize).abs() <= h
            && (k as isize - pk as isize).abs() <= h
        {
            samples.push(p.velocity[0]);
        }
    }
    if samples.is_empty() {
        return Err(DiagError::EmptyNeighborhood);
    }
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = (min / bin_width).floor() * bin_width;
    let bins = (((max - lo) / bin_width).floor() as usize + 1).max(1);
    let mut counts = vec![0usize; bins];
    for &u in &samples {
        let b = (((u - lo) / bin_width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = samples.len();
    let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * bin_width).collect();
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(VelocityHistogram {
        edges,
        freq,
        sample_count: n,
        probe,
        half_extent,
    })
}

/// Streamwise turbulence intensity I = √(2k/3) / U_hub.
pub fn turbulence_intensity(k: f64, u_hub: f64) -> f64 {
    assert!(u_hub > 0.0, "hub speed must be positive");
    (2.0 / 3.0 * k.max(0.0)).sqrt() / u_hub
}

/// One row of a station profile.
#[derive(Debug, Clone, Copy)]
pub struct ProfileRow {
    /// Station in rotor diameters downstream of the hub (negative: upstream).
    pub station_d: f64,
    pub z: f64,
    pub u_mean: f64,
    pub intensity: f64,
    /// −⟨u'w'⟩, the kinematic shear stress.
    pub minus_uw: f64,
}

/// Vertical profiles of ⟨u⟩, I and −⟨u'w'⟩ at the hub y-plane for each
/// downstream station. Stations outside the domain are skipped.
pub fn extract_profiles(
    grid: &CartesianGrid,
    hub: Vec3,
    diameter: f64,
    stations_d: &[f64],
    u_hub: f64,
) -> Vec<ProfileRow> {
    let mut rows = Vec::new();
    let Ok((_, j_hub, _)) = grid.cell_index([hub[0], hub[1], hub[2]]) else {
        return rows;
    };
    for &s in stations_d {
        let x = hub[0] + s * diameter;
        if x < grid.origin[0] || x >= grid.high()[0] {
            continue;
        }
        let i = ((x - grid.origin[0]) / grid.delta[0]) as usize;
        for kz in 0..grid.nz {
            let rec = &grid.cells[grid.flat(i, j_hub, kz)];
            rows.push(ProfileRow {
                station_d: s,
                z: grid.cell_center(0, 0, kz)[2],
                u_mean: rec.mean[0],
                intensity: turbulence_intensity(rec.k, u_hub),
                minus_uw: -rec.m2[4],
            });
        }
    }
    rows
}

/// Hub-height mean u at a station, averaged over the hub cell and its y
/// neighbors to tame estimator noise.
pub fn hub_height_speed(grid: &CartesianGrid, hub: Vec3, x: f64) -> Option<f64> {
    if x < grid.origin[0] || x >= grid.high()[0] {
        return None;
    }
    let i = ((x - grid.origin[0]) / grid.delta[0]) as usize;
    let (_, j_hub, k_hub) = grid.cell_index([hub[0], hub[1], hub[2]]).ok()?;
    let mut sum = 0.0;
    let mut n = 0.0;
    for dj in -1isize..=1 {
        let j = j_hub as isize + dj;
        if j < 0 || j >= grid.ny as isize {
            continue;
        }
        sum += grid.cells[grid.flat(i, j as usize, k_hub)].mean[0];
        n += 1.0;
    }
    Some(sum / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> CartesianGrid {
        CartesianGrid::new(8, 4, 4, [1.0; 3], [0.0; 3])
    }

    fn particle(pos: Vec3, u: f64, id: u64) -> Particle {
        Particle {
            position: pos,
            velocity: [u, 0.0, 0.0],
            id,
        }
    }

    #[test]
    fn histogram_single_value_single_bin() {
        let g = grid();
        let ps: Vec<Particle> = (0..50)
            .map(|i| particle([2.2, 1.5, 1.5], 3.0, i))
            .collect();
        let h = velocity_histogram(&ps, &g, [2.5, 1.5, 1.5], 0.25, 1).unwrap();
        assert_eq!(h.freq.iter().filter(|&&f| f > 0.0).count(), 1);
        assert!(h.normalization_error() < 1e-12);
        assert!((h.mode() - 3.0).abs() <= 0.125 + 1e-12);
    }

    #[test]
    fn histogram_uniform_bins_flat() {
        let g = grid();
        let mut rng = stochwind_core::rng::CounterRng::stream(5, 0, 0, stochwind_core::rng::Phase::Init);
        let n = 100_000;
        let ps: Vec<Particle> = (0..n)
            .map(|i| particle([2.2, 1.5, 1.5], rng.uniform() * 0.999_999, i))
            .collect();
        let h = velocity_histogram(&ps, &g, [2.5, 1.5, 1.5], 0.1, 1).unwrap();
        assert!(h.normalization_error() < 1e-12);
        for f in &h.freq {
            assert!((f - 0.1).abs() < 0.01, "bin frequency {f}");
        }
    }

    #[test]
    fn histogram_empty_neighborhood_errors() {
        let g = grid();
        let ps = [particle([7.5, 3.5, 3.5], 1.0, 0)];
        assert!(matches!(
            velocity_histogram(&ps, &g, [0.5, 0.5, 0.5], 0.1, 0),
            Err(DiagError::EmptyNeighborhood)
        ));
    }

    #[test]
    fn intensity_values() {
        assert_eq!(turbulence_intensity(0.0, 2.2), 0.0);
        let u = 2.2;
        assert!((turbulence_intensity(1.5 * u * u, u) - 1.0).abs() < 1e-14);
        assert!((turbulence_intensity(1.0, 2.2) - 0.3712).abs() < 1e-4);
    }

    #[test]
    fn profiles_homogeneous_field_identical_stations() {
        let mut g = grid();
        for c in g.cells.iter_mut() {
            c.mean = [5.0, 0.0, 0.0];
            c.k = 0.6;
            c.m2 = [0.4, 0.4, 0.4, 0.0, -0.05, 0.0];
        }
        let hub = [2.5, 1.5, 1.5];
        let rows = extract_profiles(&g, hub, 1.0, &[-1.0, 2.0, 4.0], 5.0);
        assert_eq!(rows.len(), 3 * g.nz);
        for chunk in rows.chunks(g.nz) {
            for (a, b) in chunk.iter().zip(rows.chunks(g.nz).next().unwrap()) {
                assert_eq!(a.u_mean, b.u_mean);
                assert_eq!(a.intensity, b.intensity);
                assert_eq!(a.minus_uw, b.minus_uw);
            }
        }
        // −⟨u'w'⟩ flips the stored covariance sign.
        assert!((rows[0].minus_uw - 0.05).abs() < 1e-15);
    }

    #[test]
    fn profiles_skip_out_of_domain_stations() {
        let g = grid();
        let hub = [2.5, 1.5, 1.5];
        let rows = extract_profiles(&g, hub, 1.0, &[100.0], 5.0);
        assert!(rows.is_empty());
    }
}
