//! End-to-end pipeline checks: reproducibility across thread counts, the
//! command-line round trip, and run-level invariants.

use std::path::Path;
use std::process::Command;

use stochwind::config::ScenarioConfig;
use stochwind::engine::{run_warmup, RunMode, Simulation};
use stochwind::output;

fn tiny_config() -> ScenarioConfig {
    let text = "
[domain]
size_x = 120.0
size_y = 60.0
size_z = 60.0
nx = 8
ny = 4
nz = 8

[particles]
per_cell = 10
seed = 99

[time]
dt = 0.5
warmup_steps = 25
production_steps = 10

[constants]
c_r = 1.8
c_2 = 0.6
c_eps = 0.08
kappa = 0.4
z_0 = 0.03
z_lm = 30.0

[boundaries]
u_geostrophic = 8.0
u_star = 0.42
";
    ScenarioConfig::parse(text, Path::new(".")).unwrap()
}

fn run_with_threads(threads: usize) -> (String, Vec<u64>) {
    let cfg = tiny_config();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let out = pool.install(|| run_warmup(&cfg).unwrap());
    let fields = output::fields_to_csv(&out.grid);
    let mut bits: Vec<u64> = Vec::new();
    for p in &out.particles {
        for ax in 0..3 {
            bits.push(p.position[ax].to_bits());
            bits.push(p.velocity[ax].to_bits());
        }
    }
    (fields, bits)
}

#[test]
fn bit_identical_across_thread_counts() {
    let (fields_1, bits_1) = run_with_threads(1);
    let (fields_4, bits_4) = run_with_threads(4);
    assert_eq!(fields_1, fields_4, "field outputs differ between 1 and 4 threads");
    assert_eq!(bits_1, bits_4, "particle states differ between 1 and 4 threads");
}

#[test]
fn mass_constraint_and_invariants_over_run() {
    let cfg = tiny_config();
    let npc = cfg.particles_per_cell;
    let mut sim = Simulation::new(cfg, RunMode::Warmup, None, 25).unwrap();
    for _ in 0..25 {
        sim.step().unwrap();
        assert!(sim.cell_counts().iter().all(|&c| c == npc));
    }
    sim.validate().unwrap();
    // The grid means stay close to divergence-free after projection.
    let report = sim.last_projection.expect("projection ran");
    assert!(report.post_linf <= report.pre_linf.max(1e-12));
}

#[test]
fn warmup_profile_survives_file_round_trip() {
    let cfg = tiny_config();
    let out = run_warmup(&cfg).unwrap();
    let dir = std::env::temp_dir().join("stochwind_pipeline_profile");
    let path = dir.join("profile.csv");
    output::write_profile_csv(&path, &out.profile).unwrap();
    let back = output::read_profile_csv(&path).unwrap();
    assert_eq!(back.z.len(), out.profile.z.len());
    for lvl in 0..back.z.len() {
        assert!((back.mean[lvl][0] - out.profile.mean[lvl][0]).abs() < 1e-6);
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_warmup_then_simulate_and_bem() {
    let bin = env!("CARGO_BIN_EXE_stochwind");
    let scenario_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let work = std::env::temp_dir().join("stochwind_cli_e2e");
    std::fs::create_dir_all(&work).unwrap();

    // Miniature turbine scenario so the whole chain runs in seconds.
    let cfg_text = format!(
        "
[domain]
size_x = 480.0
size_y = 120.0
size_z = 120.0
nx = 12
ny = 4
nz = 10

[particles]
per_cell = 24
seed = 3

[time]
dt = 0.5
warmup_steps = 30
production_steps = 30

[constants]
c_r = 1.8
c_2 = 0.6
c_eps = 0.08
kappa = 0.4
z_0 = 0.03
z_lm = 60.0

[boundaries]
u_geostrophic = 9.0
u_star = 0.42

[turbine]
model = rotating
hub_x = 120.0
hub_y = 60.0
hub_z = 50.0
radius = 20.5
nacelle_radius = 4.5
disc_thickness = 16.0
omega = 2.83
n_blades = 3
a_nacelle = 0.38
blade_file = {blade}
polar_file = {polar}

[output]
trailing_window = 5
write_particles = true
",
        blade = scenario_dir.join("blade_ntk_style.csv").display(),
        polar = scenario_dir.join("polar_naca23012_style.csv").display(),
    );
    let cfg_path = work.join("mini.cfg");
    std::fs::write(&cfg_path, cfg_text).unwrap();

    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "command {:?} failed:\n{}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        out
    };

    let out_dir = work.join("out");
    run(&[
        "warmup",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(out_dir.join("profile.csv").exists());

    run(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--profile",
        out_dir.join("profile.csv").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    for file in ["fields.csv", "fields_instant.csv", "profiles.csv", "histograms.csv", "thrust.csv", "particles.csv"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }

    let bem_out = run(&[
        "bem",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--from-run",
        out_dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&bem_out.stdout);
    assert!(stdout.contains("method,F_over_rho,a,C_T"));
    assert!(stdout.contains("bem,"));
    assert!(stdout.contains("particles,"));

    run(&[
        "histogram",
        "--config",
        cfg_path.to_str().unwrap(),
        "--particles",
        out_dir.join("particles.csv").to_str().unwrap(),
        "--station-d",
        "-1,2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    run(&[
        "profiles",
        "--config",
        cfg_path.to_str().unwrap(),
        "--fields",
        out_dir.join("fields.csv").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    // Histograms normalize to one.
    let text = std::fs::read_to_string(out_dir.join("histograms.csv")).unwrap();
    let mut by_station: std::collections::BTreeMap<String, f64> = Default::default();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        *by_station.entry(cols[0].to_string()).or_default() += cols[3].parse::<f64>().unwrap();
    }
    for (station, total) in by_station {
        assert!((total - 1.0).abs() < 1e-9, "station {station}: sum {total}");
    }

    std::fs::remove_dir_all(&work).ok();
}
