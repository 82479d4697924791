//! Command line: `warmup`, `simulate`, `bem`, `histogram`, `profiles`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use stochwind::config::ScenarioConfig;
use stochwind::diag;
use stochwind::engine::{self, RunOutput};
use stochwind::output::{self, EquivalenceRow};
use stochwind_core::bem;
use stochwind_core::boundaries::log_law;

const USAGE: &str = "\
stochwind — stochastic Lagrangian boundary-layer wind and wake simulator

USAGE:
    stochwind <COMMAND> --config PATH [OPTIONS]

COMMANDS:
    warmup      run the turbine-free warmup stage and store the inflow profile
    simulate    full run: warmup (or --profile reuse) then production with turbines
    bem         blade-element-momentum table of the equivalent disc parameters
    histogram   velocity histograms from a stored particle dump
    profiles    station profiles from a stored fields file

OPTIONS:
    --config PATH     scenario file (required)
    --seed N          override the scenario RNG seed
    --steps N         override the step count of the executed stage
    --out DIR         output directory (default: out)
    --threads N       rayon worker count (default: all cores)
    --profile PATH    simulate: reuse a stored profile.csv instead of warming up
    --from-run DIR    bem: add the particle-estimate row from DIR/thrust.csv
    --particles PATH  histogram: particle dump to read
    --fields PATH     profiles: fields CSV to read
    --station-d LIST  stations in rotor diameters, comma separated
    --bin-width W     histogram bin width in m/s
";

struct Args {
    command: String,
    flags: BTreeMap<String, String>,
}

impl Args {
    fn parse() -> Result<Self, String> {
        let mut argv = std::env::args().skip(1);
        let command = argv.next().ok_or_else(|| USAGE.to_string())?;
        let mut flags = BTreeMap::new();
        while let Some(flag) = argv.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or(format!("unexpected argument `{flag}`"))?;
            let value = argv.next().ok_or(format!("--{key} needs a value"))?;
            flags.insert(key.to_string(), value);
        }
        Ok(Args { command, flags })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.flags.get(key).map(|s| s.as_str())
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    fn out_dir(&self) -> PathBuf {
        self.path("out").unwrap_or_else(|| PathBuf::from("out"))
    }

    fn parse_num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("--{key}: not a number: {v}")),
        }
    }

    fn station_list(&self) -> Result<Option<Vec<f64>>, String> {
        match self.get("station-d") {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("--station-d: bad entry {s}"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

fn load_config(args: &Args) -> Result<ScenarioConfig, String> {
    let path = args
        .path("config")
        .ok_or("--config PATH is required".to_string())?;
    let mut cfg = ScenarioConfig::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = args.parse_num::<u64>("seed")? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn u_hub_of(cfg: &ScenarioConfig) -> f64 {
    let c = &cfg.constants;
    let z = cfg
        .turbine
        .as_ref()
        .map(|t| t.config.hub[2])
        .unwrap_or(0.5 * cfg.size[2]);
    log_law(cfg.u_star, c.kappa, c.z_0, z).max(1e-6)
}

fn print_stats(out: &RunOutput) {
    let s = &out.stats;
    eprintln!(
        "  events: mirror {} (specular fallback {}), top {}, recycled x {} y {}, corner pushes {}",
        s.mirror_reflections, s.specular_fallbacks, s.top_reflections, s.recycled_x, s.recycled_y,
        s.corner_pushes
    );
    if s.blade_particles > 0 || s.nacelle_particles > 0 {
        eprintln!(
            "  turbine: blade-region hits {}, nacelle hits {}, polar clamps {}, station clamps {}, empty-disc steps {}",
            s.blade_particles, s.nacelle_particles, s.alpha_clamps, s.station_clamps,
            s.empty_disc_steps
        );
    }
}

fn write_run_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    out: &RunOutput,
    prefix: &str,
) -> Result<(), String> {
    let u_hub = u_hub_of(cfg);
    output::write_fields_csv(&dir.join(format!("{prefix}fields.csv")), &out.trailing)
        .map_err(|e| e.to_string())?;
    output::write_fields_csv(&dir.join(format!("{prefix}fields_instant.csv")), &out.grid)
        .map_err(|e| e.to_string())?;
    output::write_profile_csv(&dir.join(format!("{prefix}profile.csv")), &out.profile)
        .map_err(|e| e.to_string())?;
    if cfg.write_vtk {
        output::write_fields_vtk(&dir.join(format!("{prefix}fields.vtk")), &out.trailing)
            .map_err(|e| e.to_string())?;
    }
    if cfg.write_particles {
        output::write_particles_csv(&dir.join(format!("{prefix}particles.csv")), &out.particles)
            .map_err(|e| e.to_string())?;
    }
    if let Some(setup) = &cfg.turbine {
        let hub = setup.config.hub;
        let d = setup.config.diameter();
        let rows = diag::extract_profiles(&out.trailing, hub, d, &cfg.profile_stations_d, u_hub);
        output::write_profiles_csv(&dir.join(format!("{prefix}profiles.csv")), &rows)
            .map_err(|e| e.to_string())?;

        let grid = &out.trailing;
        let mut histograms = Vec::new();
        for &s in &cfg.histogram_stations_d {
            let probe = [hub[0] + s * d, 0.5 * cfg.size[1], hub[2]];
            match diag::velocity_histogram(
                &out.particles,
                grid,
                probe,
                cfg.histogram_bin_width,
                1,
            ) {
                Ok(h) => histograms.push((s, h)),
                Err(e) => eprintln!("  histogram at {s}D skipped: {e}"),
            }
        }
        output::write_histograms_csv(&dir.join(format!("{prefix}histograms.csv")), &histograms)
            .map_err(|e| e.to_string())?;
        if !out.thrust_series.is_empty() {
            output::write_thrust_csv(&dir.join(format!("{prefix}thrust.csv")), &out.thrust_series)
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn cmd_warmup(args: &Args) -> Result<(), String> {
    let mut cfg = load_config(args)?;
    if let Some(steps) = args.parse_num::<usize>("steps")? {
        cfg.warmup_steps = steps;
    }
    let dir = args.out_dir();
    eprintln!(
        "warmup: {} cells x {} particles, {} steps",
        cfg.n_cells(),
        cfg.particles_per_cell,
        cfg.warmup_steps
    );
    let out = engine::run_warmup(&cfg).map_err(|e| e.to_string())?;
    print_stats(&out);
    output::write_profile_csv(&dir.join("profile.csv"), &out.profile)
        .map_err(|e| e.to_string())?;
    output::write_fields_csv(&dir.join("warmup_fields.csv"), &out.trailing)
        .map_err(|e| e.to_string())?;
    eprintln!("wrote {}", dir.join("profile.csv").display());
    Ok(())
}

fn cmd_simulate(args: &Args) -> Result<(), String> {
    let mut cfg = load_config(args)?;
    if let Some(steps) = args.parse_num::<usize>("steps")? {
        cfg.production_steps = steps;
    }
    let dir = args.out_dir();

    let profile = match args.path("profile") {
        Some(p) => output::read_profile_csv(&p).map_err(|e| e.to_string())?,
        None => {
            eprintln!("warmup stage: {} steps", cfg.warmup_steps);
            let warm = engine::run_warmup(&cfg).map_err(|e| e.to_string())?;
            print_stats(&warm);
            output::write_profile_csv(&dir.join("profile.csv"), &warm.profile)
                .map_err(|e| e.to_string())?;
            warm.profile
        }
    };

    eprintln!("production stage: {} steps", cfg.production_steps);
    let out = engine::run_production(&cfg, profile).map_err(|e| e.to_string())?;
    print_stats(&out);
    write_run_outputs(&dir, &cfg, &out, "")?;

    if !out.thrust_series.is_empty() {
        let valid: Vec<f64> = out
            .thrust_series
            .iter()
            .copied()
            .filter(|t| t.is_finite())
            .collect();
        let tail = &valid[valid.len() / 2..];
        if !tail.is_empty() {
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            eprintln!(
                "rotating-disc thrust F/rho (mean over last {} steps): {}",
                tail.len(),
                output::fmt_g9(mean)
            );
        }
    }
    eprintln!("outputs in {}", dir.display());
    Ok(())
}

fn cmd_bem(args: &Args) -> Result<(), String> {
    let cfg = load_config(args)?;
    let setup = cfg
        .turbine
        .as_ref()
        .ok_or("scenario has no [turbine] section".to_string())?;
    let c = &cfg.constants;
    let t = &setup.config;
    let u_inf = bem::u_infinity(cfg.u_star, c.kappa, c.z_0, t.hub[2], t.radius)
        .map_err(|e| e.to_string())?;
    let sol = bem::bem_solve(t, u_inf, t.omega, 1.0).map_err(|e| e.to_string())?;
    if !sol.all_converged {
        eprintln!("warning: some annuli did not converge; totals still reported");
    }
    let (a, ct) = bem::equivalent_disc(sol.thrust_over_rho, u_inf, t.radius, t.nacelle_radius)
        .map_err(|e| e.to_string())?;
    let mut rows = vec![EquivalenceRow {
        method: "bem".into(),
        f_over_rho: sol.thrust_over_rho.abs(),
        a,
        c_t: ct,
    }];

    if let Some(run_dir) = args.path("from-run") {
        let series = output::read_thrust_csv(&run_dir.join("thrust.csv"))
            .map_err(|e| e.to_string())?;
        let valid: Vec<f64> = series.into_iter().filter(|t| t.is_finite()).collect();
        if valid.is_empty() {
            return Err("thrust series holds no finite entries".into());
        }
        let tail = &valid[valid.len() / 2..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let (a_p, ct_p) = bem::equivalent_disc(mean, u_inf, t.radius, t.nacelle_radius)
            .map_err(|e| e.to_string())?;
        rows.push(EquivalenceRow {
            method: "particles".into(),
            f_over_rho: mean.abs(),
            a: a_p,
            c_t: ct_p,
        });
    }

    let dir = args.out_dir();
    output::write_equivalence_csv(&dir.join("equivalence.csv"), &rows)
        .map_err(|e| e.to_string())?;
    print!("{}", output::equivalence_to_csv(&rows));
    eprintln!("U_inf = {} m/s; wrote {}", output::fmt_g9(u_inf), dir.join("equivalence.csv").display());
    Ok(())
}

fn cmd_histogram(args: &Args) -> Result<(), String> {
    let cfg = load_config(args)?;
    let particles_path = args
        .path("particles")
        .ok_or("--particles PATH is required".to_string())?;
    let particles = output::read_particles_csv(&particles_path).map_err(|e| e.to_string())?;
    let setup = cfg
        .turbine
        .as_ref()
        .ok_or("scenario has no [turbine] section".to_string())?;
    let stations = args
        .station_list()?
        .unwrap_or_else(|| cfg.histogram_stations_d.clone());
    let bin_width = args
        .parse_num::<f64>("bin-width")?
        .unwrap_or(cfg.histogram_bin_width);
    let delta = cfg.delta();
    let grid = stochwind_core::domain::CartesianGrid::new(cfg.nx, cfg.ny, cfg.nz, delta, [0.0; 3]);
    let hub = setup.config.hub;
    let d = setup.config.diameter();
    let mut histograms = Vec::new();
    for &s in &stations {
        let probe = [hub[0] + s * d, 0.5 * cfg.size[1], hub[2]];
        let h = diag::velocity_histogram(&particles, &grid, probe, bin_width, 1)
            .map_err(|e| format!("station {s}D: {e}"))?;
        histograms.push((s, h));
    }
    let dir = args.out_dir();
    output::write_histograms_csv(&dir.join("histograms.csv"), &histograms)
        .map_err(|e| e.to_string())?;
    for (s, h) in &histograms {
        println!(
            "station {:+.1}D: mode {} m/s over {} samples",
            s,
            output::fmt_g9(h.mode()),
            h.sample_count
        );
    }
    Ok(())
}

fn cmd_profiles(args: &Args) -> Result<(), String> {
    let cfg = load_config(args)?;
    let fields_path = args
        .path("fields")
        .ok_or("--fields PATH is required".to_string())?;
    let grid = output::read_fields_csv(&fields_path, cfg.nx, cfg.ny, cfg.nz)
        .map_err(|e| e.to_string())?;
    let setup = cfg
        .turbine
        .as_ref()
        .ok_or("scenario has no [turbine] section".to_string())?;
    let stations = args
        .station_list()?
        .unwrap_or_else(|| cfg.profile_stations_d.clone());
    let rows = diag::extract_profiles(
        &grid,
        setup.config.hub,
        setup.config.diameter(),
        &stations,
        u_hub_of(&cfg),
    );
    let dir = args.out_dir();
    output::write_profiles_csv(&dir.join("profiles.csv"), &rows).map_err(|e| e.to_string())?;
    eprintln!("wrote {}", dir.join("profiles.csv").display());
    Ok(())
}

fn dispatch(args: &Args) -> Result<(), String> {
    match args.command.as_str() {
        "warmup" => cmd_warmup(args),
        "simulate" => cmd_simulate(args),
        "bem" => cmd_bem(args),
        "histogram" => cmd_histogram(args),
        "profiles" => cmd_profiles(args),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => Err(format!("unknown command `{other}`\n\n{USAGE}")),
    }
}

fn main() -> ExitCode {
    let args = match Args::parse() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let threads = match args.parse_num::<usize>("threads") {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let run = || match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|e| {
                eprintln!("error: thread pool: {e}");
                ExitCode::FAILURE
            }),
        None => run(),
    }
}
