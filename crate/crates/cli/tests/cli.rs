use std::path::Path;
use std::process::Command;

use stochosc_cli::config::{parse_param, resolve, Overrides, Task};
use stochosc_cli::output::{parse_trajectory_csv, render_svg, trajectory_csv};
use stochosc_cli::{run, EXIT_CONFIG, EXIT_NOT_VERIFIED, EXIT_OK};
use stochosc_core::integrator::Trajectory;
use stochosc_core::models::ParamValue;
use stochosc_core::PhasePoint;

struct Outcome {
    code: u8,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    cli_env(args, None)
}

fn cli_env(args: &[&str], env: Option<&str>) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["stochosc"];
    argv.extend_from_slice(args);
    let code = run(argv, env, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ANTI_DAMPED: &str = r#"
[model]
name = "custom"

[model.custom]
damping_general = '[[{"exponents": [0, 3], "coeff": -1}]]'
restoring = [[{exponents = [1], coeff = 1.0}]]
diffusion = 1.0
"#;

const QUINTIC: &str = r#"
[model]
name = "custom"

[model.custom]
restoring = '[[{"exponents": [5], "coeff": -1}]]'
diffusion = 0.5

[integration]
dt = 0.001
t_end = 10.0
x0 = [2.0]
v0 = [0.0]
"#;

#[test]
fn simulate_preset_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let o = cli(&["simulate", "--model", "duffing", "--preset", "paper", "--csv", path_str(&csv)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let text = std::fs::read_to_string(&csv).unwrap();
    // floor(T / dt / stride) + 1 records plus the header
    assert_eq!(text.lines().count(), 50_000 / 10 + 1 + 1);
    assert!(text.starts_with("t,x_1,v_1,escaped\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn simulate_rejects_bad_step() {
    let o = cli(&["simulate", "--model", "duffing", "--dt", "0"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("time step"), "{}", o.stderr);
}

#[test]
fn simulate_is_byte_identical_for_same_seed() {
    let args = ["simulate", "--model", "vanderpol", "--t-end", "2", "--seed", "99"];
    let a = cli(&args);
    let b = cli(&args);
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(a.stdout, b.stdout);
    let c = cli(&["simulate", "--model", "vanderpol", "--t-end", "2", "--seed", "100"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let o = cli(&["simulate", "--model", "duffing", "--t-end", "1", "--seed", "5"]);
    let rows = parse_trajectory_csv(&o.stdout).unwrap();
    assert_eq!(rows.times.len(), 1001);
    let cfg = resolve(
        Task::Simulate,
        &Overrides {
            model: Some("duffing".into()),
            integration: stochosc_cli::config::IntegrationLayer {
                t_end: Some(1.0),
                seed: Some(5),
                ..Default::default()
            },
            ..Default::default()
        },
        None,
    )
    .unwrap();
    let sys = stochosc_core::reduce_to_phase_system(&cfg.model);
    let tr = stochosc_core::integrator::simulate_path(&sys, &cfg.integration.config()).unwrap();
    assert_eq!(rows.times, tr.times);
    for (a, b) in rows.states.iter().zip(&tr.states) {
        assert_eq!(a.x[0].to_bits(), b.x[0].to_bits());
        assert_eq!(a.y[0].to_bits(), b.y[0].to_bits());
    }
    assert!(rows.escaped.iter().all(|e| !e));
}

#[test]
fn seed_precedence() {
    let base = ["simulate", "--model", "duffing", "--t-end", "0.5"];
    let env7 = cli_env(&base, Some("7"));
    let flag7 = cli(&[&base[..], &["--seed", "7"]].concat());
    assert_eq!(env7.stdout, flag7.stdout);
    let flag_wins = cli_env(&[&base[..], &["--seed", "7"]].concat(), Some("8"));
    assert_eq!(flag_wins.stdout, flag7.stdout);
    let bad = cli_env(&base, Some("seven"));
    assert_eq!(bad.code, EXIT_CONFIG);
    assert!(bad.stderr.contains("STOCHOSC_SEED"));
}

#[test]
fn escape_is_reported_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("q.toml");
    std::fs::write(&cfg, QUINTIC).unwrap();
    let o = cli(&["simulate", "--config", path_str(&cfg)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stderr.contains("escaped"));
    let rows = parse_trajectory_csv(&o.stdout).unwrap();
    assert_eq!(rows.escaped.last(), Some(&true));
    assert_eq!(rows.escaped.iter().filter(|e| **e).count(), 1);
}

#[test]
fn ensemble_escapes_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("q.toml");
    std::fs::write(&cfg, QUINTIC).unwrap();
    let o = cli(&["ensemble", "--config", path_str(&cfg), "--paths", "8", "--t-end", "3"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let stats: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(stats["escape_count"], 8);
    assert_eq!(stats["escape_times"].as_array().unwrap().len(), 8);
}

#[test]
fn ensemble_duffing_paper_preset_has_no_escapes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("e.json");
    let csv = dir.path().join("e.csv");
    let o = cli(&[
        "ensemble", "--model", "duffing", "--preset", "paper", "--json", path_str(&json), "--csv", path_str(&csv),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(stats["n_paths"], 500);
    assert_eq!(stats["escape_count"], 0);
    let summary = std::fs::read_to_string(&csv).unwrap();
    assert!(summary.starts_with("t,count,mean_norm,var_norm\n"));
    assert_eq!(summary.lines().count(), 10_000 / 100 + 1 + 1);
}

#[test]
fn single_path_ensemble_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("e.csv");
    let sim = cli(&["simulate", "--model", "duffing", "--t-end", "1", "--seed", "3", "--stride", "100"]);
    let ens = cli(&[
        "ensemble", "--model", "duffing", "--t-end", "1", "--seed", "3", "--stride", "100", "--paths", "1", "--csv",
        path_str(&csv),
    ]);
    assert_eq!(ens.code, EXIT_OK);
    let rows = parse_trajectory_csv(&sim.stdout).unwrap();
    let summary = std::fs::read_to_string(&csv).unwrap();
    for (line, z) in summary.lines().skip(1).zip(&rows.states) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1], "1");
        assert_eq!(cells[2].parse::<f64>().unwrap(), z.norm());
    }
}

#[test]
fn verify_exit_codes() {
    let o = cli(&["verify", "--model", "duffing"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("Corollary1"));
    assert_eq!(cli(&["verify", "--model", "vanderpol"]).code, EXIT_OK);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("anti.toml");
    std::fs::write(&cfg, ANTI_DAMPED).unwrap();
    let json = dir.path().join("cert.json");
    let o = cli(&["verify", "--config", path_str(&cfg), "--json", path_str(&json)]);
    assert_eq!(o.code, EXIT_NOT_VERIFIED, "{}{}", o.stdout, o.stderr);
    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(cert["theorem"], "None");
    assert!(cert["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["name"] == "corollary1.dissipation" && c["status"] == "fail"));
}

#[test]
fn verify_certificate_schema() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("cert.json");
    let report = dir.path().join("cert.txt");
    let o = cli(&["verify", "--model", "vanderpol", "--json", path_str(&json), "--report", path_str(&report)]);
    assert_eq!(o.code, EXIT_OK);
    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for key in ["theorem", "conditions", "constants", "domain"] {
        assert!(cert.get(key).is_some(), "{key}");
    }
    for key in ["c", "K", "K1", "K2", "c1", "c2", "alpha"] {
        assert!(cert["constants"].get(key).is_some(), "{key}");
    }
    assert_eq!(cert["constants"]["alpha"], 0.2);
    assert_eq!(cert["domain"]["R_check"], 10.0);
    assert_eq!(cert["domain"]["grid"], 201);
    for c in cert["conditions"].as_array().unwrap() {
        assert!(c.get("name").is_some() && c.get("status").is_some() && c.get("witness").is_some());
    }
    assert_eq!(std::fs::read_to_string(&report).unwrap(), o.stdout);
}

#[test]
fn verify_domain_flags() {
    let o = cli(&["verify", "--model", "duffing", "--r-check", "5", "--grid", "51"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("box radius 5, 51 points per axis"));
    assert_eq!(cli(&["verify", "--model", "duffing", "--grid", "1"]).code, EXIT_CONFIG);
}

#[test]
fn convergence_report() {
    let o = cli(&["convergence", "--model", "duffing", "--preset", "paper"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let r: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    let order = r["order_estimate"].as_f64().unwrap();
    assert!((0.7..=1.3).contains(&order));
    assert_eq!(r["errors_per_level"].as_array().unwrap().len(), 3);
    assert_eq!(r["unreliable"], false);
    assert_eq!(cli(&["convergence", "--model", "duffing", "--preset", "paper", "--levels", "2"]).code, EXIT_CONFIG);
}

#[test]
fn convergence_flags_unreliable_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("q.toml");
    std::fs::write(&cfg, QUINTIC).unwrap();
    let o = cli(&["convergence", "--config", path_str(&cfg), "--t-end", "2", "--paths", "10", "--levels", "3"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let r: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(r["unreliable"], true);
}

#[test]
fn strict_config_names_the_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nname = \"duffing\"\n[integration]\ndtt = 0.01\n").unwrap();
    let o = cli(&["simulate", "--config", path_str(&cfg)]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("dtt"), "{}", o.stderr);

    std::fs::write(&cfg, "[modle]\nname = \"duffing\"\n").unwrap();
    let o = cli(&["simulate", "--config", path_str(&cfg)]);
    assert!(o.stderr.contains("modle"), "{}", o.stderr);

    let o = cli(&["simulate", "--model", "duffing", "--param", "sigmaa=1"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("sigmaa"), "{}", o.stderr);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[model]\nname = \"duffing\"\nparams = { sigma = 0.0 }\n[integration]\ndt = 0.01\nt_end = 1.0\nseed = 4\n",
    )
    .unwrap();
    let from_file = cli(&["simulate", "--config", path_str(&cfg)]);
    assert_eq!(parse_trajectory_csv(&from_file.stdout).unwrap().times.len(), 101);
    let o = cli(&["simulate", "--config", path_str(&cfg), "--dt", "0.1"]);
    assert_eq!(parse_trajectory_csv(&o.stdout).unwrap().times.len(), 11);
    let o = cli(&["simulate", "--config", path_str(&cfg), "--model", "vanderpol"]);
    assert_eq!(o.code, EXIT_OK, "sigma is shared by both models");
    std::fs::write(&cfg, "[model]\nname = \"duffing\"\nparams = { lambda = 1.0 }\n").unwrap();
    let o = cli(&["simulate", "--config", path_str(&cfg), "--model", "vanderpol", "--t-end", "0.1"]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("lambda"), "{}", o.stderr);
}

#[test]
fn unwritable_output_fails_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/out.csv");
    let o = cli(&["simulate", "--model", "duffing", "--csv", path_str(&missing)]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("not writable"), "{}", o.stderr);
    let o = cli(&["ensemble", "--model", "duffing", "--json", path_str(dir.path())]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn transformed_representation() {
    let o = cli(&["simulate", "--model", "vanderpol", "--representation", "transformed", "--t-end", "1"]);
    assert_eq!(o.code, EXIT_OK);
    let rows = parse_trajectory_csv(&o.stdout).unwrap();
    assert_eq!(rows.states[0], PhasePoint::new(vec![1.0], vec![0.0]).unwrap());
    let o = cli(&["simulate", "--model", "duffing", "--representation", "transformed"]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn multi_dimensional_models() {
    let o = cli(&["simulate", "--model", "coupled_lienard", "--t-end", "0.1", "--x0", "0.5,-0.5"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.starts_with("t,x_1,x_2,v_1,v_2,escaped\n"));
    let o = cli(&["simulate", "--model", "vector_duffing", "--t-end", "0.1", "--x0", "1,2,3"]);
    assert_eq!(o.code, EXIT_CONFIG);
}

#[test]
fn custom_polynomial_diffusion_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        r#"
[model]
name = "custom"
[model.custom]
damping_lienard = [[0.0, 0.0, 3.0]]
restoring = '[[{"exponents": [1], "coeff": -1}]]'
diffusion = '[[[{"exponents": [0, 1], "coeff": 0.3}]]]'
"#,
    )
    .unwrap();
    let o = cli(&["verify", "--config", path_str(&cfg)]);
    assert_eq!(o.code, EXIT_OK, "{}{}", o.stdout, o.stderr);
    assert!(o.stdout.contains("Theorem3"), "{}", o.stdout);
}

#[test]
fn catalog_lists_models() {
    let o = cli(&["catalog", "--json"]);
    let items: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    let names: Vec<&str> = items.as_array().unwrap().iter().map(|i| i["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["duffing", "vanderpol", "duffing_vdp", "vector_duffing", "coupled_lienard", "damped_linear"]);
    assert!(cli(&["catalog"]).stdout.contains("alpha = 0.5"));
}

#[test]
fn param_parsing() {
    assert_eq!(parse_param("sigma=0").unwrap(), ("sigma".into(), ParamValue::Scalar(0.0)));
    assert_eq!(parse_param("xi=[0,1]").unwrap(), ("xi".into(), ParamValue::Vector(vec![0.0, 1.0])));
    assert!(parse_param("novalue").is_err());
    let o = cli(&["simulate", "--model", "duffing", "--param", "sigma=0", "--t-end", "0.01", "--dt", "0.01"]);
    let rows = parse_trajectory_csv(&o.stdout).unwrap();
    assert_eq!(rows.states[1].y[0], -0.04);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(cli(&["simulate", "--model", "duffing", "--bogus"]).code, EXIT_CONFIG);
    assert_eq!(cli(&["frobnicate"]).code, EXIT_CONFIG);
    let help = cli(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("verify"));
    assert_eq!(cli(&["simulate"]).code, EXIT_CONFIG);
}

fn traj(points: &[(f64, f64, f64)]) -> Trajectory {
    Trajectory {
        times: points.iter().map(|p| p.0).collect(),
        states: points.iter().map(|p| PhasePoint::new(vec![p.1], vec![p.2]).unwrap()).collect(),
        escaped: false,
        escape_time: None,
        seed_used: 12,
        path_index: 0,
    }
}

#[test]
fn svg_structure() {
    let svg = render_svg(&traj(&[(0.0, 1.0, 0.0), (0.1, 0.5, -1.0)]), "duffing").unwrap();
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("duffing, seed 12"));
    for class in ["x_1", "v_1"] {
        let start = svg.find(&format!("class=\"{class}\" d=\"")).unwrap();
        let d = svg[start..].split('"').nth(3).unwrap();
        assert_eq!(d.matches('M').count(), 1);
        assert_eq!(d.matches('L').count(), 1, "{d}");
    }
    assert!(!svg.contains("href"));
    assert!(render_svg(&traj(&[]), "empty").is_err());
}

#[test]
fn svg_from_cli_run() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("p.svg");
    let o = cli(&["simulate", "--model", "duffing", "--param", "sigma=0", "--t-end", "10", "--stride", "10", "--svg", path_str(&svg)]);
    assert_eq!(o.code, EXIT_OK);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<path").count(), 2);
    assert!(text.contains(">x</text>") && text.contains(">v</text>") && text.contains(">t</text>"));
}

#[test]
fn trajectory_csv_header_for_two_dimensions() {
    let tr = Trajectory {
        times: vec![0.0],
        states: vec![PhasePoint::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap()],
        escaped: false,
        escape_time: None,
        seed_used: 0,
        path_index: 0,
    };
    assert_eq!(trajectory_csv(&tr), "t,x_1,x_2,v_1,v_2,escaped\n0,1,2,3,4,0\n");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_stochosc");
    let ok = Command::new(bin).args(["verify", "--model", "duffing"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).args(["simulate", "--model", "nosuch"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("anti.toml");
    std::fs::write(&cfg, ANTI_DAMPED).unwrap();
    let neg = Command::new(bin).args(["verify", "--config", path_str(&cfg)]).output().unwrap();
    assert_eq!(neg.status.code(), Some(2));
    let seeded = Command::new(bin)
        .args(["simulate", "--model", "duffing", "--t-end", "0.1"])
        .env("STOCHOSC_SEED", "7")
        .output()
        .unwrap();
    let flagged = Command::new(bin)
        .args(["simulate", "--model", "duffing", "--t-end", "0.1", "--seed", "7"])
        .env_remove("STOCHOSC_SEED")
        .output()
        .unwrap();
    assert_eq!(seeded.stdout, flagged.stdout);
}
