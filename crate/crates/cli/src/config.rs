//! Scenario files: flat key-value text with `[section]` headers, plus the
//! blade-geometry and airfoil-polar CSV readers.
//!
//! Angles in the data files are degrees and are converted to radians at load;
//! everything else is SI.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use stochwind_core::domain::{AirfoilPolar, BladeGeometry, ModelConstants, TurbineConfig};
use stochwind_core::turbine::TurbineModel;

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse { line: usize, message: String },
    Missing { section: String, key: String },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "io error: {e}"),
            ConfigError::Parse { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::Missing { section, key } => {
                write!(f, "missing key `{key}` in section [{section}]")
            }
            ConfigError::Invalid(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

/// Which lateral recycling source a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflowMode {
    /// Log-law mean plus exit-cell covariance noise (warmup).
    LogLaw,
    /// Stored empirical profile (production).
    Profile,
}

/// Turbine entry of a scenario: geometry plus the wake-model selector.
#[derive(Debug, Clone)]
pub struct TurbineSetup {
    pub config: TurbineConfig,
    pub model: TurbineModel,
}

/// Full scenario description.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Domain box size, meters (origin at 0).
    pub size: [f64; 3],
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub particles_per_cell: usize,
    pub seed: u64,
    pub dt: f64,
    pub warmup_steps: usize,
    pub production_steps: usize,
    pub constants: ModelConstants,
    /// Geostrophic wind imposed at the top (x-component; v = w = 0).
    pub u_geostrophic: f64,
    /// Friction velocity of the target inflow log law.
    pub u_star: f64,
    /// Initial tke = factor × u*².
    pub tke_init_factor: f64,
    pub projection_enabled: bool,
    pub projection_correct_particles: bool,
    pub projection_tolerance: f64,
    pub turbine: Option<TurbineSetup>,
    pub fields_every: usize,
    pub trailing_window: usize,
    pub histogram_bin_width: f64,
    pub histogram_stations_d: Vec<f64>,
    pub profile_stations_d: Vec<f64>,
    pub write_particles: bool,
    pub write_vtk: bool,
}

impl ScenarioConfig {
    pub fn delta(&self) -> [f64; 3] {
        [
            self.size[0] / self.nx as f64,
            self.size[1] / self.ny as f64,
            self.size[2] / self.nz as f64,
        ]
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn n_particles(&self) -> usize {
        self.n_cells() * self.particles_per_cell
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.particles_per_cell < 2 {
            return Err(ConfigError::Invalid("per_cell must be at least 2".into()));
        }
        if self.dt <= 0.0 {
            return Err(ConfigError::Invalid("dt must be positive".into()));
        }
        if self.size.iter().any(|&s| s <= 0.0) || self.n_cells() == 0 {
            return Err(ConfigError::Invalid("domain box must be non-empty".into()));
        }
        if !self.constants.validate() {
            return Err(ConfigError::Invalid("model constants out of range".into()));
        }
        if let Some(t) = &self.turbine {
            if !t.config.validate() {
                return Err(ConfigError::Invalid("turbine geometry invalid".into()));
            }
            if let TurbineModel::NonRotating { a } = t.model {
                if !(0.0..1.0).contains(&a) {
                    return Err(ConfigError::Invalid(
                        "non-rotating induction factor must lie in [0, 1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parse the scenario text; `dir` anchors relative data-file paths.
    pub fn parse(text: &str, dir: &Path) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;

        let size = [
            raw.f64("domain", "size_x")?,
            raw.f64("domain", "size_y")?,
            raw.f64("domain", "size_z")?,
        ];
        let nx = raw.usize("domain", "nx")?;
        let ny = raw.usize("domain", "ny")?;
        let nz = raw.usize("domain", "nz")?;
        // Cell sizes in the file are declarative; the grid derives Δ from
        // size/n, so an inconsistent triple is rejected rather than patched.
        for (key, n, s) in [("dx", nx, size[0]), ("dy", ny, size[1]), ("dz", nz, size[2])] {
            if let Some(d) = raw.opt_f64("domain", key)? {
                if (n as f64 * d - s).abs() > 1e-6 * s.max(1.0) {
                    return Err(ConfigError::Invalid(format!(
                        "{key} = {d} times {n} cells does not equal the domain size {s}"
                    )));
                }
            }
        }

        let constants = ModelConstants {
            c_r: raw.f64("constants", "c_r")?,
            c_2: raw.f64("constants", "c_2")?,
            c_eps: raw.f64("constants", "c_eps")?,
            kappa: raw.f64("constants", "kappa")?,
            z_0: raw.f64("constants", "z_0")?,
            z_lm: raw.f64("constants", "z_lm")?,
            rho: raw.opt_f64("constants", "rho")?.unwrap_or(1.225),
        };

        let turbine = if raw.has_section("turbine") {
            let blade_file = raw.string("turbine", "blade_file")?;
            let polar_file = raw.string("turbine", "polar_file")?;
            let blade = read_blade_csv(&dir.join(blade_file))?;
            let polar = read_polar_csv(&dir.join(polar_file))?;
            let config = TurbineConfig {
                hub: [
                    raw.f64("turbine", "hub_x")?,
                    raw.f64("turbine", "hub_y")?,
                    raw.f64("turbine", "hub_z")?,
                ],
                radius: raw.f64("turbine", "radius")?,
                nacelle_radius: raw.f64("turbine", "nacelle_radius")?,
                disc_thickness: raw.f64("turbine", "disc_thickness")?,
                omega: raw.f64("turbine", "omega")?,
                n_blades: raw.usize("turbine", "n_blades")?,
                a_nacelle: raw.f64("turbine", "a_nacelle")?,
                blade,
                polar,
            };
            let model = match raw.string("turbine", "model")?.as_str() {
                "rotating" => TurbineModel::Rotating,
                "non_rotating" => TurbineModel::NonRotating {
                    a: raw.f64("turbine", "a")?,
                },
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown turbine model `{other}` (rotating | non_rotating)"
                    )))
                }
            };
            Some(TurbineSetup { config, model })
        } else {
            None
        };

        let cfg = ScenarioConfig {
            size,
            nx,
            ny,
            nz,
            particles_per_cell: raw.usize("particles", "per_cell")?,
            seed: raw.opt_f64("particles", "seed")?.unwrap_or(1.0) as u64,
            dt: raw.f64("time", "dt")?,
            warmup_steps: raw.usize("time", "warmup_steps")?,
            production_steps: raw.usize("time", "production_steps")?,
            constants,
            u_geostrophic: raw.f64("boundaries", "u_geostrophic")?,
            u_star: raw.f64("boundaries", "u_star")?,
            tke_init_factor: raw.opt_f64("boundaries", "tke_init_factor")?.unwrap_or(3.75),
            projection_enabled: raw.opt_bool("projection", "enabled")?.unwrap_or(true),
            projection_correct_particles: raw
                .opt_bool("projection", "correct_particles")?
                .unwrap_or(false),
            projection_tolerance: raw.opt_f64("projection", "tolerance")?.unwrap_or(1e-8),
            turbine,
            fields_every: raw.opt_f64("output", "fields_every")?.unwrap_or(0.0) as usize,
            trailing_window: raw.opt_f64("output", "trailing_window")?.unwrap_or(20.0) as usize,
            histogram_bin_width: raw.opt_f64("output", "histogram_bin_width")?.unwrap_or(0.25),
            histogram_stations_d: raw
                .opt_list("output", "histogram_stations_d")?
                .unwrap_or_else(|| vec![-1.0, 2.0, 3.0, 4.0, 5.0, 7.0]),
            profile_stations_d: raw
                .opt_list("output", "profile_stations_d")?
                .unwrap_or_else(|| vec![-1.0, 2.0, 3.0, 5.0, 7.0, 10.0]),
            write_particles: raw.opt_bool("output", "write_particles")?.unwrap_or(false),
            write_vtk: raw.opt_bool("output", "write_vtk")?.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

struct RawConfig {
    values: BTreeMap<(String, String), (String, usize)>,
    sections: Vec<String>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut sections = Vec::new();
        let mut section = String::new();
        for (ln, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(ConfigError::Parse {
                        line: ln + 1,
                        message: "unterminated section header".into(),
                    });
                }
                section = line[1..line.len() - 1].trim().to_string();
                sections.push(section.clone());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: ln + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            values.insert(
                (section.clone(), key.trim().to_string()),
                (value.trim().to_string(), ln + 1),
            );
        }
        Ok(RawConfig { values, sections })
    }

    fn has_section(&self, section: &str) -> bool {
        self.sections.iter().any(|s| s == section)
    }

    fn get(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.values.get(&(section.to_string(), key.to_string()))
    }

    fn string(&self, section: &str, key: &str) -> Result<String, ConfigError> {
        self.get(section, key)
            .map(|(v, _)| v.clone())
            .ok_or_else(|| ConfigError::Missing {
                section: section.into(),
                key: key.into(),
            })
    }

    fn f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let (v, line) = self.get(section, key).ok_or_else(|| ConfigError::Missing {
            section: section.into(),
            key: key.into(),
        })?;
        v.parse().map_err(|_| ConfigError::Parse {
            line: *line,
            message: format!("`{key}` is not a number: {v}"),
        })
    }

    fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(_) => self.f64(section, key).map(Some),
        }
    }

    fn usize(&self, section: &str, key: &str) -> Result<usize, ConfigError> {
        let v = self.f64(section, key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(ConfigError::Invalid(format!(
                "[{section}] {key} must be a non-negative integer"
            )));
        }
        Ok(v as usize)
    }

    fn opt_bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(ConfigError::Parse {
                    line: *line,
                    message: format!("`{key}` is not a boolean: {v}"),
                }),
            },
        }
    }

    fn opt_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| ConfigError::Parse {
                        line: *line,
                        message: format!("`{key}` has a non-numeric entry: {s}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

/// Blade geometry CSV: header `r_m,chord_m,twist_deg`, radii increasing.
pub fn read_blade_csv(path: &Path) -> Result<BladeGeometry, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let mut stations = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(ConfigError::Parse {
                line: ln + 1,
                message: format!("blade row needs 3 columns: {line}"),
            });
        }
        let parse = |s: &str| -> Result<f64, ConfigError> {
            s.trim().parse().map_err(|_| ConfigError::Parse {
                line: ln + 1,
                message: format!("bad number `{s}`"),
            })
        };
        stations.push((
            parse(cols[0])?,
            parse(cols[1])?,
            parse(cols[2])?.to_radians(),
        ));
    }
    if stations.len() < 2 || stations.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(ConfigError::Invalid(format!(
            "blade table {} needs at least two strictly increasing radii",
            path.display()
        )));
    }
    Ok(BladeGeometry { stations })
}

/// Airfoil polar CSV: header `alpha_deg,CL,CD`, angles increasing.
pub fn read_polar_csv(path: &Path) -> Result<AirfoilPolar, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(ConfigError::Parse {
                line: ln + 1,
                message: format!("polar row needs 3 columns: {line}"),
            });
        }
        let parse = |s: &str| -> Result<f64, ConfigError> {
            s.trim().parse().map_err(|_| ConfigError::Parse {
                line: ln + 1,
                message: format!("bad number `{s}`"),
            })
        };
        rows.push((parse(cols[0])?.to_radians(), parse(cols[1])?, parse(cols[2])?));
    }
    if rows.len() < 2 || rows.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(ConfigError::Invalid(format!(
            "polar table {} needs at least two strictly increasing angles",
            path.display()
        )));
    }
    if rows.iter().any(|r| r.2 < 0.0) {
        return Err(ConfigError::Invalid("drag must be non-negative".into()));
    }
    Ok(AirfoilPolar::Table(rows))
}

/// Directory of the bundled scenario files (workspace checkout layout).
pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}
