//! Subcommand implementations. Every command writes into the output directory; only `meta.txt`
//! carries run-dependent data such as timestamps.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use bsch::assembly::{Coupling, Space};
use bsch::diagnostics::{
    continuous_dependence_experiment, mean_free, regime_interpolation, strong_estimate_sweep, yosida_elliptic_study, yosida_time_study,
    Perturbation, RunSpec, YosidaStudy,
};
use bsch::elliptic::{solve_singular, EllipticError, SingularReport};
use bsch::initial::InitialData;
use bsch::mesh::{generate_unit_square, load_mesh, mesh_to_string};
use bsch::output::{diagnostics_csv, field_to_string, read_field, table_csv, write_string};
use bsch::stepper::{Stepper, StepperConfig};
use bsch::{Mesh64, Operators64, Pair64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialSpec, MeshSpec, RhsKind, RunConfig, YosidaMode};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StudyKind {
    Yosida,
    Contdep,
    Strong,
    Regimes,
}

/// Result of a study: the summary line is `PASS` or `FAIL <reason>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub reason: String,
}

impl Verdict {
    pub fn summary(&self) -> String {
        if self.passed {
            "PASS".into()
        } else {
            format!("FAIL {}", self.reason)
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    write_string(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn write_meta(dir: &Path, command: &str, config: Option<&Path>, seed: u64) -> Result<(), CliError> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let config = config.map_or_else(|| "-".to_string(), |p| p.display().to_string());
    let text = format!("command = {command}\nconfig = {config}\nseed = {seed}\nversion = {}\ncreated_unix = {stamp}\n", env!("CARGO_PKG_VERSION"));
    write(dir, "meta.txt", &text).map(|_| ())
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh64, CliError> {
    Ok(match spec {
        MeshSpec::UnitSquare(n) => generate_unit_square(*n)?,
        MeshSpec::File(p) => load_mesh(p)?,
    })
}

fn build_ops(cfg: &RunConfig) -> Result<Operators64, CliError> {
    Operators64::assemble(&build_mesh(&cfg.mesh)?).map_err(|e| CliError::Validation(format!("assembly: {e}")))
}

fn stepper_config(cfg: &RunConfig) -> Result<StepperConfig<f64>, CliError> {
    let mut sc = StepperConfig::new(cfg.dt, cfg.lambda, cfg.cp, cfg.pot)?;
    sc.mobility = cfg.mobility;
    sc.convection = cfg.convection;
    Ok(sc)
}

fn initial_pair(cfg: &RunConfig, ops: &Operators64, cp: &bsch::CouplingParams64) -> Result<Pair64, CliError> {
    let data = match &cfg.initial {
        InitialSpec::Constant { bulk, surf } => InitialData::Constant { bulk: *bulk, surf: *surf },
        InitialSpec::Random { mean, amplitude } => InitialData::Random { seed: cfg.seed, mean: *mean, amplitude: *amplitude },
        InitialSpec::Bubble { center, radius, sharpness } => InitialData::Bubble { center: *center, radius: *radius, sharpness: *sharpness },
        InitialSpec::File(p) => {
            let f = std::fs::File::open(p).map_err(|e| io_err(p, e))?;
            let pair: Pair64 = read_field(std::io::BufReader::new(f)).map_err(|e| io_err(p, e))?;
            if pair.bulk.len() != ops.n_bulk || pair.surf.len() != ops.n_surf {
                return Err(CliError::Validation(format!("{}: field does not match the mesh", p.display())));
            }
            InitialData::Field(pair)
        }
    };
    Ok(data.build(ops, cp))
}

/// Builds and validates the run: configuration, velocity compatibility and initial data.
fn run_spec(cfg: &RunConfig, ops: &Operators64) -> Result<RunSpec<f64>, CliError> {
    let sc = stepper_config(cfg)?;
    let initial = initial_pair(cfg, ops, &cfg.cp)?;
    let stepper = Stepper::new(ops, sc.clone(), cfg.field.clone())?;
    stepper.check_initial_data(&initial)?;
    Ok(RunSpec { cfg: sc, field: cfg.field.clone(), initial, t_end: cfg.t_end })
}

fn elliptic_rhs(cfg: &RunConfig, ops: &Operators64) -> Pair64 {
    let a = cfg.elliptic.amplitude;
    match cfg.elliptic.rhs {
        RhsKind::Constant => Pair64::constant(ops.n_bulk, ops.n_surf, a, a),
        RhsKind::Smooth => {
            let pi = std::f64::consts::PI;
            Pair64::new(
                ops.nodes.iter().map(|p| a * (pi * p[0]).cos() * (pi * p[1]).cos()).collect(),
                ops.surface_coords.iter().map(|s| a * (2.0 * pi * s / ops.area_gamma).sin()).collect(),
            )
        }
        RhsKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let bulk = (0..ops.n_bulk).map(|_| a * rng.gen_range(-1.0..=1.0)).collect();
            let surf = (0..ops.n_surf).map(|_| a * rng.gen_range(-1.0..=1.0)).collect();
            Pair64::new(bulk, surf)
        }
    }
}

pub fn cmd_mesh(spec: &MeshSpec, out: &Path) -> Result<String, CliError> {
    let mesh = build_mesh(spec)?;
    ensure_dir(out)?;
    let path = write(out, "mesh.txt", &mesh_to_string(&mesh))?;
    Ok(format!(
        "wrote {}: {} nodes, {} triangles, {} boundary nodes, area {:.6}, perimeter {:.6}",
        path.display(),
        mesh.n_bulk(),
        mesh.triangles.len(),
        mesh.n_surface(),
        mesh.area(),
        mesh.perimeter()
    ))
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let ops = build_ops(cfg)?;
    let spec = run_spec(cfg, &ops)?;
    let stepper = Stepper::new(&ops, spec.cfg.clone(), spec.field.clone())?;
    let traj = stepper.run(&spec.initial, spec.t_end)?;
    ensure_dir(out)?;
    write(out, "diagnostics.csv", &diagnostics_csv(&traj.rows))?;
    if cfg.snapshot_every > 0 {
        for (n, s) in traj.states.iter().enumerate().filter(|(n, _)| n % cfg.snapshot_every == 0) {
            write(out, &format!("field_{n:06}.bsfield"), &field_to_string(&ops, &s.phi_psi))?;
        }
    }
    write(out, "final.bsfield", &field_to_string(&ops, &traj.last().phi_psi))?;
    write(out, "final_mu.bsfield", &field_to_string(&ops, &traj.last().mu_theta))?;
    if let Some(e) = traj.failure {
        return Err(CliError::Solver(format!("run stopped after {} steps: {e}", traj.rows.len() - 1)));
    }
    let (first, last) = (traj.rows[0], *traj.rows.last().expect("initial row"));
    Ok(format!(
        "steps {}, t = {:.6}, energy {:.6e} -> {:.6e}, weighted mass drift {:.3e}",
        traj.rows.len() - 1,
        last.t,
        first.energy.total,
        last.energy.total,
        last.mass.weighted_total - first.mass.weighted_total
    ))
}

fn elliptic_table(report: &SingularReport<f64>) -> String {
    let rows: Vec<Vec<f64>> = report
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let diff = if i == 0 { f64::NAN } else { report.differences[i - 1] };
            vec![r.lambda, r.h1_norm, r.prime_norm, r.ratio, r.max_abs, diff]
        })
        .collect();
    table_csv(&["lambda", "h1_norm", "prime_norm", "ratio", "max_abs", "difference"], &rows)
}

pub fn cmd_elliptic(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let ops = build_ops(cfg)?;
    cfg.cp.validate(ops.area_omega, ops.area_gamma).map_err(|e| CliError::Validation(e.to_string()))?;
    let rhs = elliptic_rhs(cfg, &ops);
    ensure_dir(out)?;
    match solve_singular(&ops, &rhs, &cfg.cp, &cfg.pot, &cfg.elliptic.schedule, cfg.elliptic.cauchy_tol) {
        Ok(report) => {
            write(out, "elliptic.csv", &elliptic_table(&report))?;
            write(out, "solution.bsfield", &field_to_string(&ops, &report.solution.uv))?;
            Ok(format!("solved {} λ-values, separation δ = {:.6e}", report.records.len(), report.delta_report))
        }
        Err(EllipticError::CauchyNonConvergence { last, tol, report }) => {
            write(out, "elliptic.csv", &elliptic_table(&report))?;
            Err(CliError::Solver(format!("Cauchy tolerance unmet: last difference {last:e} > {tol:e}")))
        }
        Err(e) => Err(e.into()),
    }
}

fn yosida_verdict(study: &YosidaStudy<f64>, out: &Path) -> Result<Verdict, CliError> {
    let rows: Vec<Vec<f64>> = study.distances.iter().enumerate().map(|(i, &d)| vec![study.lambdas[i], study.lambdas[i + 1], d]).collect();
    write(out, "yosida.csv", &table_csv(&["lambda_coarse", "lambda_fine", "distance"], &rows))?;
    Ok(Verdict { passed: study.passed, reason: format!("distances not monotone after the first entry: {:?}", study.distances) })
}

pub fn cmd_study(kind: StudyKind, cfg: &RunConfig, out: &Path) -> Result<Verdict, CliError> {
    let ops = build_ops(cfg)?;
    ensure_dir(out)?;
    let st = &cfg.study;
    match kind {
        StudyKind::Yosida => match st.yosida_mode {
            YosidaMode::Elliptic => {
                cfg.cp.validate(ops.area_omega, ops.area_gamma).map_err(|e| CliError::Validation(e.to_string()))?;
                let study = yosida_elliptic_study(&ops, &elliptic_rhs(cfg, &ops), &cfg.cp, &cfg.pot, &cfg.elliptic.schedule)?;
                yosida_verdict(&study, out)
            }
            YosidaMode::Time => {
                let base = run_spec(cfg, &ops)?;
                let study = yosida_time_study(&ops, &base, &st.schedule)?;
                yosida_verdict(&study, out)
            }
        },
        StudyKind::Contdep => {
            let base = run_spec(cfg, &ops)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
            let raw = Pair64::new(
                (0..ops.n_bulk).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
                (0..ops.n_surf).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
            );
            let shape = mean_free(&ops, &InitialData::Field(raw).build(&ops, &cfg.cp), &cfg.cp);
            let perturbations: Vec<Perturbation<f64>> = st
                .sizes
                .iter()
                .map(|&s| Perturbation { size: s, delta: shape.scaled(s), field: base.field.scaled(1.0 + st.velocity_perturbation * s) })
                .collect();
            let rep = continuous_dependence_experiment(&ops, &base, &perturbations)?;
            let rows: Vec<Vec<f64>> =
                rep.records.iter().map(|r| vec![r.size, r.lhs_final, r.lhs_max, r.initial_sq, r.velocity_sq, r.weight, r.ratio]).collect();
            write(out, "contdep.csv", &table_csv(&["size", "lhs_final", "lhs_max", "initial_sq", "velocity_sq", "weight", "ratio"], &rows))?;
            let exponent = rep.exponent.map_or_else(|| "n/a".into(), |e| format!("{e:.4}"));
            Ok(Verdict { passed: rep.passed, reason: format!("exponent {exponent}, ratio spread {:.4}", rep.ratio_spread) })
        }
        StudyKind::Strong => {
            let base = run_spec(cfg, &ops)?;
            let rep = strong_estimate_sweep(&ops, &base, &st.amplitudes)?;
            let rows: Vec<Vec<f64>> =
                rep.records.iter().map(|r| vec![r.amplitude, r.sup_mu_sq, r.time_derivative_sq, r.data_functional, r.ratio]).collect();
            write(out, "strong.csv", &table_csv(&["amplitude", "sup_mu_sq", "time_derivative_sq", "data_functional", "ratio"], &rows))?;
            Ok(Verdict { passed: rep.passed, reason: format!("ratio spread {:.4} exceeds 10", rep.ratio_spread) })
        }
        StudyKind::Regimes => {
            let mut base = run_spec(cfg, &ops)?;
            if st.space == Space::K {
                // The K = 0 member needs trace-compatible data; every member starts from it.
                let mut cp0 = cfg.cp;
                cp0.k = Coupling::Zero;
                base.initial = InitialData::Field(base.initial.clone()).build(&ops, &cp0);
            }
            let rep = regime_interpolation(&ops, &base, st.space, &st.toward_zero, &st.toward_infinity)?;
            let rows: Vec<Vec<f64>> = rep
                .toward_zero
                .iter()
                .map(|&(k, g)| vec![0.0, k, g])
                .chain(rep.toward_infinity.iter().map(|&(k, g)| vec![1.0, k, g]))
                .collect();
            write(out, "regimes.csv", &table_csv(&["limit_is_infinity", "coupling", "gap"], &rows))?;
            Ok(Verdict { passed: rep.passed, reason: "gaps not strictly decreasing toward a limit".into() })
        }
    }
}

pub fn cmd_plot(csv: &Path, columns: &str, output: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(csv).map_err(|e| io_err(csv, e))?;
    let table = bsch::output::parse_table(&text).map_err(|e| io_err(csv, e))?;
    let cols: Vec<&str> = columns.split(',').map(str::trim).collect();
    let svg = crate::plot::render(&table, &cols)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_string(output, &svg).map_err(|e| io_err(output, e))?;
    Ok(format!("wrote {}", output.display()))
}
