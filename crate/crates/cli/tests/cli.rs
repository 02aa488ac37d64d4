use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nmqsd::models::ModelFamily;
use nmqsd::propagator::Mode;
use nmqsd_cli::config::{parse_config, InitialState, KernelSpec, Observable, Problem};

const BIN: &str = env!("CARGO_BIN_EXE_nmqsd");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small(extra_run: &str, observables: &str) -> String {
    format!(
        r#"
[model]
family = "spin_half"
omega = 1.0

[kernel]
gamma_rate = 1.0
gamma = 0.5

[grid]
t_max = 1.0
n_steps = 40

[run]
mode = "nonlinear"
trajectories = 40
seed = 3
initial_state = "uniform"
{extra_run}

[output]
path = "out"
observables = [{observables}]
rho_entries = [[1, 2]]
"#
    )
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn nmqsd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn shipped_configs_parse() {
    let fig2 = parse_config(&fs::read_to_string(configs().join("fig2.toml")).unwrap()).unwrap();
    assert_eq!(fig2.model.family(), ModelFamily::SpinL);
    assert_eq!(fig2.model.dim(), 4);
    assert_eq!(fig2.order, 1);
    assert_eq!(fig2.mode, Mode::Nonlinear);
    assert_eq!((fig2.trajectories, fig2.seed), (1000, 2024));
    assert_eq!(fig2.grid.n_steps(), 1000);
    assert_eq!(
        fig2.kernel,
        KernelSpec::Exponential {
            gamma_rate: 1.0,
            gamma: 0.3
        }
    );
    assert_eq!(fig2.initial_state, InitialState::Uniform);
    assert_eq!(fig2.output.observables[0], Observable::Coherence(0, 3));
    assert_eq!(fig2.output.precision, 17);

    let fig3 = parse_config(&fs::read_to_string(configs().join("fig3.toml")).unwrap()).unwrap();
    assert_eq!(fig3.model.family(), ModelFamily::DrivenFourLevel);
    assert_eq!(fig3.model.noise_order_exact(), 0);
    assert_eq!(fig3.initial_state, InitialState::Level(3));
    assert_eq!(fig3.output.rho_entries, vec![(1, 2), (2, 3), (0, 0), (2, 2)]);

    let markov = parse_config(&fs::read_to_string(configs().join("markov.toml")).unwrap()).unwrap();
    assert_eq!(markov.model.dim(), 2);
    assert!((markov.grid.dt() - 5e-4).abs() < 1e-15);
}

#[test]
fn empty_document_reports_every_missing_key() {
    let e = parse_config("").unwrap_err();
    let missing = e.missing_keys();
    for key in [
        "model.family",
        "kernel.gamma_rate",
        "kernel.gamma",
        "grid.t_max",
        "grid.n_steps",
        "run.mode",
        "run.trajectories",
        "run.seed",
        "run.initial_state",
        "output.path",
        "output.observables",
    ] {
        assert!(missing.contains(&key), "{key} not reported: {e}");
    }
}

#[test]
fn constraint_and_unknown_key_errors() {
    let zero = small("", "\"rho_11\"").replace("trajectories = 40", "trajectories = 0");
    let e = parse_config(&zero).unwrap_err();
    assert!(e.mentions("run.trajectories"), "{e}");
    assert!(e.issues.iter().all(|i| matches!(i.problem, Problem::Constraint(_))));

    let e = parse_config(&small("workers = 2", "\"rho_11\"")).unwrap_err();
    assert!(
        e.issues
            .iter()
            .any(|i| i.key == "run.workers" && i.problem == Problem::Unknown),
        "{e}"
    );

    let e = parse_config(&small("order = 1", "\"rho_11\"")).unwrap_err();
    assert!(e.mentions("run.order"), "spin-1/2 is noise-free: {e}");

    let e = parse_config(&small("", "\"coherence_13\"")).unwrap_err();
    assert!(e.mentions("output.observables"), "{e}");

    let e = parse_config(&small("", "\"rho_11\"").replace("n_steps = 40", "n_steps = 5")).unwrap_err();
    assert!(e.mentions("grid.n_steps"), "{e}");
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("", "\"rho_11\", \"entropy\""));
    let o = nmqsd(&["simulate", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("dry run") && text.contains("entropy.csv"), "{text}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn simulate_writes_csvs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &small("", "\"rho_11\", \"coherence_12\", \"entropy\", \"trace\""),
    );
    let cfg = cfg.to_str().unwrap();
    let read = |name: &str| fs::read(dir.path().join("out").join(name)).unwrap();

    assert_eq!(code(&nmqsd(&["simulate", "--config", cfg])), 0);
    let first = read("observables.csv");
    let rho = read("rho.csv");
    assert_eq!(code(&nmqsd(&["simulate", "--config", cfg, "--workers", "3"])), 0);
    assert_eq!(read("observables.csv"), first);
    assert_eq!(read("rho.csv"), rho);
    assert_eq!(code(&nmqsd(&["simulate", "--config", cfg, "--seed", "4"])), 0);
    assert_ne!(read("observables.csv"), first);

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,rho_11,rho_11_stderr,coherence_12,coherence_12_stderr,entropy,entropy_stderr,trace,trace_stderr"
    );
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 0.0);
    assert!((row[1] - 0.5).abs() < 1e-15 && (row[3] - 0.5).abs() < 1e-15);
    assert_eq!(text.lines().count(), 42);
    let header = String::from_utf8(rho).unwrap();
    assert!(header.starts_with("t,re_rho_12,im_rho_12,abs_rho_12,stderr_rho_12\n"));
    assert!(dir.path().join("out/rho_11.csv").exists());
}

#[test]
fn reference_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("", "\"rho_22\""));
    let cfg = cfg.to_str().unwrap();
    let o = nmqsd(&["reference", "--config", cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("convolutionless"));
    assert!(dir.path().join("out/reference/rho_22.csv").exists());

    let o = nmqsd(&["compare", "--config", cfg, "--trajectories", "400"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = nmqsd(&["compare", "--config", cfg, "--threshold", "0"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[model]\nfamily = \"spin_half\"\n");
    assert_eq!(code(&nmqsd(&["simulate", "--config", bad.to_str().unwrap()])), 1);
    assert_eq!(code(&nmqsd(&["simulate", "--config", "/nonexistent/run.toml"])), 1);

    let spin = small("order = 1", "\"rho_11\"").replace("\"spin_half\"", "\"spin_1\"");
    let cfg = write_config(dir.path(), &spin);
    let cfg = cfg.to_str().unwrap();
    let o = nmqsd(&["reference", "--config", cfg, "--oracle", "convolutionless"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise-free"));
    assert_eq!(code(&nmqsd(&["simulate", "--config", cfg, "--trajectories", "0"])), 1);
    assert_eq!(code(&nmqsd(&["simulate", "--config", cfg, "--workers", "0"])), 1);

    // A lag table whose covariance is not positive semidefinite fails at sampling time.
    let mut table = String::from("tau,re,im\n0,1,0\n");
    for k in 1..=20 {
        table.push_str(&format!("{},2,0\n", k as f64 * 0.1));
    }
    fs::write(dir.path().join("lags.csv"), table).unwrap();
    let tabulated = small("", "\"rho_11\"").replace("gamma_rate = 1.0\ngamma = 0.5", "table = \"lags.csv\"");
    let cfg = write_config(dir.path(), &tabulated);
    let o = nmqsd(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn list_models_names_every_family() {
    let o = nmqsd(&["list-models"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for f in ModelFamily::ALL {
        assert!(text.contains(f.name()), "{}", f.name());
    }
}

#[test]
fn noise_check_passes_for_exponential_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("", "\"rho_11\""));
    let o = nmqsd(&[
        "noise-check",
        "--config",
        cfg.to_str().unwrap(),
        "--realizations",
        "4000",
        "--probes",
        "5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("result       pass"));
}
