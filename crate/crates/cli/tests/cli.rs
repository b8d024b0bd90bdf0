use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bsch::output::{parse_table, read_field, DIAGNOSTICS_HEADER};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn bsch(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsch")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn steady_state_simulation_has_constant_energy() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsch(&["simulate", "--config", config("steady.cfg").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), DIAGNOSTICS_HEADER);
    assert!(!text.contains('\r'));
    let table = parse_table(&text).unwrap();
    assert_eq!(table.rows.len(), 6);
    let e = table.column("energy_total").unwrap();
    assert!(e.iter().all(|x| (x - e[0]).abs() <= 1e-12), "{e:?}");
    // 17 significant digits in scientific notation.
    let t1 = text.lines().nth(2).unwrap().split(',').nth(1).unwrap();
    assert_eq!(t1, "1.0000000000000000e-2");

    let field: bsch::Pair64 = read_field(std::fs::File::open(dir.path().join("final.bsfield")).map(std::io::BufReader::new).unwrap()).unwrap();
    assert_eq!(field.bulk.len(), 25);
    assert!(field.bulk.iter().chain(&field.surf).all(|v| (v - 0.3).abs() < 1e-10));
    let meta = std::fs::read_to_string(dir.path().join("meta.txt")).unwrap();
    assert!(meta.contains("command = simulate") && meta.contains("seed = 1") && meta.contains("created_unix = "));
}

#[test]
fn yosida_study_on_bundled_elliptic_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsch(&["study", "yosida", "--config", config("elliptic.cfg").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "PASS");
    let table = parse_table(&std::fs::read_to_string(dir.path().join("yosida.csv")).unwrap()).unwrap();
    let d = table.column("distance").unwrap();
    assert_eq!(d.len(), 4);
    assert!(d[1..].windows(2).all(|w| w[1] <= w[0]), "{d:?}");
}

#[test]
fn plot_has_one_polyline_with_a_point_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsch(&["simulate", "--config", config("steady.cfg").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = dir.path().join("diagnostics.csv");
    let svg_path = dir.path().join("energy.svg");
    let o = bsch(&["plot", csv.to_str().unwrap(), "--columns", "t,energy", "--output", svg_path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = std::fs::read_to_string(svg_path).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains(r#"width="800" height="500""#));
    assert_eq!(svg.matches("<polyline").count(), 1);
    let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count() - 1;
    assert_eq!(points.split(' ').count(), rows);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config("simulate.cfg");
    for d in [&a, &b] {
        let o = bsch(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "11"], d.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let mut names: Vec<String> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert!(names.len() > 3);
    for n in names.iter().filter(|n| *n != "meta.txt") {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap(), "{n}");
    }
}

#[test]
fn seed_flag_selects_random_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\nn = 4\n[time]\nt_end = 0\n[initial]\nkind = random\namplitude = 0.3\n");
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = bsch(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed], &out);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("final.bsfield")).unwrap()
    };
    assert_eq!(run("1", "a"), run("1", "b"));
    assert_ne!(run("1", "a"), run("2", "c"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[time]\ndt = 1e-3\nt_ned = 0.1\n");
    let o = bsch(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).trim(), "error: config: line 3: unknown key `[time] t_ned`");
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "[coupling]\nK = 0\n[velocity]\nkind = slip\nslip = 1\n",
        "[initial]\nkind = random\nmean = 0.8\namplitude = 0.3\n",
        "[time]\nlambda = 0.9\n",
        "[coupling]\nalpha = -1\nbeta = 4\n[mesh]\nn = 4\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let o = bsch(&["simulate", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
        assert_eq!(o.status.code(), Some(1), "{text}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: validation: "), "{}", stderr(&o));
    }
    let o = bsch(&["simulate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = bsch(&["plot", dir.path().join("missing.csv").to_str().unwrap()], dir.path());
    assert!(o.status.code() == Some(1) && stderr(&o).starts_with("error: io: "));
}

#[test]
fn solver_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\nn = 4\n[elliptic]\nschedule = 1e-1, 1e-2\ncauchy_tol = 1e-14\n");
    let o = bsch(&["elliptic", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: solver: "));
    assert!(dir.path().join("elliptic.csv").exists());
}

#[test]
fn failing_study_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // Couplings ordered away from the limit, so the gaps grow.
    let text = "[mesh]\nn = 4\n[time]\nt_end = 0.01\n[initial]\nkind = random\namplitude = 0.3\n[study]\nspace = L\ntoward_zero = 1e-3, 1e-2, 1e-1\n";
    let cfg = write_config(dir.path(), text);
    let o = bsch(&["study", "regimes", "--config", cfg.to_str().unwrap(), "--jobs", "2"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FAIL "));
}

#[test]
fn mesh_command_writes_loadable_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsch(&["mesh", "--n", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mesh: bsch::Mesh64 = bsch::mesh::load_mesh(&dir.path().join("mesh.txt")).unwrap();
    assert_eq!((mesh.n_bulk(), mesh.triangles.len(), mesh.n_surface()), (36, 50, 20));
    let o = bsch(&["mesh", "--n", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
