//! File formats: CSV writers for profiles, fields, histograms and thrust
//! tables, the legacy structured-grid text format for external visualization,
//! and the profile reader used to feed production inflow.
//!
//! Floats are written with nine significant digits in scientific notation so
//! outputs are byte-stable across runs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use stochwind_core::domain::{CartesianGrid, Particle};
use stochwind_core::estimators::EmpiricalProfile;

use crate::diag::{ProfileRow, VelocityHistogram};

/// Nine significant digits, scientific: the bit-stable output format.
pub fn fmt_g9(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug)]
pub struct OutputError {
    pub path: String,
    pub source: io::Error,
}

impl std::fmt::Display for OutputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.source)
    }
}

impl std::error::Error for OutputError {}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| OutputError {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| OutputError {
        path: path.display().to_string(),
        source,
    })
}

/// Level-profile CSV: `z,u_mean,v_mean,w_mean,uu,vv,ww,uv,uw,vw`.
pub fn profile_to_csv(profile: &EmpiricalProfile) -> String {
    let mut s = String::from("z,u_mean,v_mean,w_mean,uu,vv,ww,uv,uw,vw\n");
    for lvl in 0..profile.z.len() {
        let m = profile.mean[lvl];
        let v = profile.m2[lvl];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_g9(profile.z[lvl]),
            fmt_g9(m[0]),
            fmt_g9(m[1]),
            fmt_g9(m[2]),
            fmt_g9(v[0]),
            fmt_g9(v[1]),
            fmt_g9(v[2]),
            fmt_g9(v[3]),
            fmt_g9(v[4]),
            fmt_g9(v[5]),
        );
    }
    s
}

pub fn write_profile_csv(path: &Path, profile: &EmpiricalProfile) -> Result<(), OutputError> {
    write_file(path, &profile_to_csv(profile))
}

/// Parse a profile CSV produced by [`write_profile_csv`].
pub fn read_profile_csv(path: &Path) -> Result<EmpiricalProfile, OutputError> {
    let text = fs::read_to_string(path).map_err(|source| OutputError {
        path: path.display().to_string(),
        source,
    })?;
    parse_profile_csv(&text).map_err(|message| OutputError {
        path: path.display().to_string(),
        source: io::Error::new(io::ErrorKind::InvalidData, message),
    })
}

pub fn parse_profile_csv(text: &str) -> Result<EmpiricalProfile, String> {
    let mut z = Vec::new();
    let mut means = Vec::new();
    let mut m2s = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", ln + 1))?;
        if cols.len() != 10 {
            return Err(format!("line {}: expected 10 columns", ln + 1));
        }
        z.push(cols[0]);
        means.push([cols[1], cols[2], cols[3]]);
        m2s.push([cols[4], cols[5], cols[6], cols[7], cols[8], cols[9]]);
    }
    if z.is_empty() {
        return Err("profile has no levels".into());
    }
    Ok(EmpiricalProfile::new(z, means, m2s))
}

/// Cell-centered field CSV: coordinates, mean velocity, second moments, tke,
/// dissipation.
pub fn fields_to_csv(grid: &CartesianGrid) -> String {
    let mut s = String::from("x,y,z,u_mean,v_mean,w_mean,uu,vv,ww,uv,uw,vw,k,eps\n");
    for idx in 0..grid.n_cells() {
        let (i, j, k) = grid.unflat(idx);
        let c = grid.cell_center(i, j, k);
        let rec = &grid.cells[idx];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_g9(c[0]),
            fmt_g9(c[1]),
            fmt_g9(c[2]),
            fmt_g9(rec.mean[0]),
            fmt_g9(rec.mean[1]),
            fmt_g9(rec.mean[2]),
            fmt_g9(rec.m2[0]),
            fmt_g9(rec.m2[1]),
            fmt_g9(rec.m2[2]),
            fmt_g9(rec.m2[3]),
            fmt_g9(rec.m2[4]),
            fmt_g9(rec.m2[5]),
            fmt_g9(rec.k),
            fmt_g9(rec.eps),
        );
    }
    s
}

pub fn write_fields_csv(path: &Path, grid: &CartesianGrid) -> Result<(), OutputError> {
    write_file(path, &fields_to_csv(grid))
}

/// Legacy structured-points text format readable by standard visualization
/// tools; one scalar block per field.
pub fn fields_to_vtk(grid: &CartesianGrid) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "stochwind cell fields");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", grid.nx, grid.ny, grid.nz);
    let _ = writeln!(
        s,
        "ORIGIN {} {} {}",
        fmt_g9(grid.origin[0] + 0.5 * grid.delta[0]),
        fmt_g9(grid.origin[1] + 0.5 * grid.delta[1]),
        fmt_g9(grid.origin[2] + 0.5 * grid.delta[2]),
    );
    let _ = writeln!(
        s,
        "SPACING {} {} {}",
        fmt_g9(grid.delta[0]),
        fmt_g9(grid.delta[1]),
        fmt_g9(grid.delta[2]),
    );
    let _ = writeln!(s, "POINT_DATA {}", grid.n_cells());
    let scalars: [(&str, Box<dyn Fn(usize) -> f64>); 5] = [
        ("u_mean", Box::new(|i| grid.cells[i].mean[0])),
        ("w_mean", Box::new(|i| grid.cells[i].mean[2])),
        ("tke", Box::new(|i| grid.cells[i].k)),
        ("uw", Box::new(|i| grid.cells[i].m2[4])),
        ("eps", Box::new(|i| grid.cells[i].eps)),
    ];
    for (name, get) in scalars {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for idx in 0..grid.n_cells() {
            let _ = writeln!(s, "{}", fmt_g9(get(idx)));
        }
    }
    s
}

pub fn write_fields_vtk(path: &Path, grid: &CartesianGrid) -> Result<(), OutputError> {
    write_file(path, &fields_to_vtk(grid))
}

/// Station profiles CSV: `station_d,z,u_mean,intensity,minus_uw`.
pub fn profiles_to_csv(rows: &[ProfileRow]) -> String {
    let mut s = String::from("station_d,z,u_mean,intensity,minus_uw\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_g9(r.station_d),
            fmt_g9(r.z),
            fmt_g9(r.u_mean),
            fmt_g9(r.intensity),
            fmt_g9(r.minus_uw),
        );
    }
    s
}

pub fn write_profiles_csv(path: &Path, rows: &[ProfileRow]) -> Result<(), OutputError> {
    write_file(path, &profiles_to_csv(rows))
}

/// Histogram CSV: `station_d,bin_lo,bin_hi,frequency,samples`.
pub fn histograms_to_csv(entries: &[(f64, VelocityHistogram)]) -> String {
    let mut s = String::from("station_d,bin_lo,bin_hi,frequency,samples\n");
    for (station, h) in entries {
        for b in 0..h.freq.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_g9(*station),
                fmt_g9(h.edges[b]),
                fmt_g9(h.edges[b + 1]),
                fmt_g9(h.freq[b]),
                h.sample_count,
            );
        }
    }
    s
}

pub fn write_histograms_csv(
    path: &Path,
    entries: &[(f64, VelocityHistogram)],
) -> Result<(), OutputError> {
    write_file(path, &histograms_to_csv(entries))
}

/// Thrust time series CSV: `step,f_over_rho`.
pub fn thrust_to_csv(series: &[f64]) -> String {
    let mut s = String::from("step,f_over_rho\n");
    for (i, t) in series.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i, fmt_g9(*t));
    }
    s
}

pub fn write_thrust_csv(path: &Path, series: &[f64]) -> Result<(), OutputError> {
    write_file(path, &thrust_to_csv(series))
}

/// Read the thrust series back (the bem subcommand consumes it).
pub fn read_thrust_csv(path: &Path) -> Result<Vec<f64>, OutputError> {
    let text = fs::read_to_string(path).map_err(|source| OutputError {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        if let Some((_, v)) = line.split_once(',') {
            if let Ok(x) = v.trim().parse::<f64>() {
                out.push(x);
            }
        }
    }
    Ok(out)
}

/// One row of the disc-equivalence table.
#[derive(Debug, Clone)]
pub struct EquivalenceRow {
    pub method: String,
    pub f_over_rho: f64,
    pub a: f64,
    pub c_t: f64,
}

/// Disc-equivalence CSV: `method,F_over_rho,a,C_T` (F/ρ magnitude, all
/// blades aggregated, m⁴/s² per unit density).
pub fn equivalence_to_csv(rows: &[EquivalenceRow]) -> String {
    let mut s = String::from("method,F_over_rho,a,C_T\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.method,
            fmt_g9(r.f_over_rho),
            fmt_g9(r.a),
            fmt_g9(r.c_t),
        );
    }
    s
}

pub fn write_equivalence_csv(path: &Path, rows: &[EquivalenceRow]) -> Result<(), OutputError> {
    write_file(path, &equivalence_to_csv(rows))
}

/// Particle dump CSV: `id,x,y,z,u,v,w`.
pub fn particles_to_csv(particles: &[Particle]) -> String {
    let mut s = String::from("id,x,y,z,u,v,w\n");
    for p in particles {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            p.id,
            fmt_g9(p.position[0]),
            fmt_g9(p.position[1]),
            fmt_g9(p.position[2]),
            fmt_g9(p.velocity[0]),
            fmt_g9(p.velocity[1]),
            fmt_g9(p.velocity[2]),
        );
    }
    s
}

pub fn write_particles_csv(path: &Path, particles: &[Particle]) -> Result<(), OutputError> {
    write_file(path, &particles_to_csv(particles))
}

/// Read a particle dump back (histogram post-processing).
pub fn read_particles_csv(path: &Path) -> Result<Vec<Particle>, OutputError> {
    let text = fs::read_to_string(path).map_err(|source| OutputError {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |message: String| OutputError {
        path: path.display().to_string(),
        source: io::Error::new(io::ErrorKind::InvalidData, message),
    };
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(bad(format!("line {}: expected 7 columns", ln + 1)));
        }
        let id = cols[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
        let mut vals = [0.0f64; 6];
        for (slot, c) in vals.iter_mut().zip(&cols[1..]) {
            *slot = c
                .trim()
                .parse()
                .map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
        }
        out.push(Particle {
            position: [vals[0], vals[1], vals[2]],
            velocity: [vals[3], vals[4], vals[5]],
            id,
        });
    }
    Ok(out)
}

/// Read a fields CSV back into a grid with the given shape.
pub fn read_fields_csv(path: &Path, nx: usize, ny: usize, nz: usize) -> Result<CartesianGrid, OutputError> {
    let text = fs::read_to_string(path).map_err(|source| OutputError {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |message: String| OutputError {
        path: path.display().to_string(),
        source: io::Error::new(io::ErrorKind::InvalidData, message),
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
        if cols.len() != 14 {
            return Err(bad(format!("line {}: expected 14 columns", ln + 1)));
        }
        rows.push(cols);
    }
    if rows.len() != nx * ny * nz {
        return Err(bad(format!(
            "expected {} cells, found {}",
            nx * ny * nz,
            rows.len()
        )));
    }
    // Infer spacing from the first cells along each axis.
    let delta = [
        if nx > 1 { rows[1][0] - rows[0][0] } else { 1.0 },
        if ny > 1 { rows[nx][1] - rows[0][1] } else { 1.0 },
        if nz > 1 { rows[nx * ny][2] - rows[0][2] } else { 1.0 },
    ];
    let origin = [
        rows[0][0] - 0.5 * delta[0],
        rows[0][1] - 0.5 * delta[1],
        rows[0][2] - 0.5 * delta[2],
    ];
    let mut grid = CartesianGrid::new(nx, ny, nz, delta, origin);
    for (idx, cols) in rows.iter().enumerate() {
        let rec = &mut grid.cells[idx];
        rec.mean = [cols[3], cols[4], cols[5]];
        rec.m2 = [cols[6], cols[7], cols[8], cols[9], cols[10], cols[11]];
        rec.k = cols[12];
        rec.eps = cols[13];
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_has_nine_significant_digits() {
        assert_eq!(fmt_g9(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_g9(1488.0), "1.48800000e3");
    }

    #[test]
    fn profile_round_trip() {
        let p = EmpiricalProfile::new(
            vec![0.5, 1.5, 2.5],
            vec![[1.0, 0.1, -0.2], [2.0, 0.0, 0.0], [3.0, -0.1, 0.05]],
            vec![
                [0.5, 0.4, 0.3, 0.0, -0.1, 0.02],
                [0.6, 0.5, 0.4, 0.01, -0.12, 0.0],
                [0.7, 0.6, 0.5, 0.02, -0.14, -0.01],
            ],
        );
        let text = profile_to_csv(&p);
        let back = parse_profile_csv(&text).unwrap();
        for lvl in 0..3 {
            assert!((back.z[lvl] - p.z[lvl]).abs() < 1e-7);
            for ax in 0..3 {
                assert!((back.mean[lvl][ax] - p.mean[lvl][ax]).abs() < 1e-7);
            }
            for e in 0..6 {
                assert!((back.m2[lvl][e] - p.m2[lvl][e]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn fields_csv_single_cell() {
        let mut g = CartesianGrid::new(1, 1, 1, [2.0; 3], [0.0; 3]);
        g.cells[0].mean = [1.0, 2.0, 3.0];
        let text = fields_to_csv(&g);
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("1.00000000e0,"));
    }

    #[test]
    fn fields_csv_round_trip() {
        let mut g = CartesianGrid::new(3, 2, 2, [1.0, 2.0, 0.5], [0.0; 3]);
        for (i, c) in g.cells.iter_mut().enumerate() {
            c.mean = [i as f64, -(i as f64), 0.5 * i as f64];
            c.k = 0.1 * i as f64;
            c.m2[4] = -0.01 * i as f64;
        }
        let text = fields_to_csv(&g);
        let dir = std::env::temp_dir().join("stochwind_test_fields");
        let path = dir.join("fields.csv");
        write_file(&path, &text).unwrap();
        let back = read_fields_csv(&path, 3, 2, 2).unwrap();
        for idx in 0..g.n_cells() {
            assert!((back.cells[idx].mean[0] - g.cells[idx].mean[0]).abs() < 1e-7);
            assert!((back.cells[idx].k - g.cells[idx].k).abs() < 1e-7);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vtk_header_is_well_formed() {
        let g = CartesianGrid::new(2, 2, 2, [1.0; 3], [0.0; 3]);
        let text = fields_to_vtk(&g);
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DIMENSIONS 2 2 2"));
        assert!(text.contains("SCALARS u_mean double 1"));
    }

    #[test]
    fn particles_round_trip() {
        let ps = vec![
            Particle {
                position: [1.0, 2.0, 3.0],
                velocity: [0.5, -0.5, 0.25],
                id: 7,
            },
            Particle {
                position: [4.0, 5.0, 6.0],
                velocity: [1.5, 0.0, -0.75],
                id: 8,
            },
        ];
        let dir = std::env::temp_dir().join("stochwind_test_particles");
        let path = dir.join("particles.csv");
        write_particles_csv(&path, &ps).unwrap();
        let back = read_particles_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].id, 7);
        assert!((back[1].velocity[2] - -0.75).abs() < 1e-9);
        std::fs::remove_dir_all(&dir).ok();
    }
}
