use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gatebath::analysis::{
    build_calibration, calibrate_noise, fit_lambda_with, predict_dynamics, rate_curve, sweep,
    CalibrationCurve, CalibrationPoint, HeomCurves, NoiseCalibrationConfig, PredictConfig,
};
use gatebath::engine::{oracle_trace, run_circuit_trace};
use gatebath::exciton::ExcitonSystem;
use gatebath::heom::{convergence_check, heom_propagate};
use gatebath::noisegen::NoiseModel;
use gatebath::trace::{format_sig, PopulationTrace};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EngineKind, RunConfig};
use crate::manifest::{checksums, io_error, RunManifest, RunRecord};
use crate::{CliError, Command, EXIT_OK, EXIT_THRESHOLD};

/// Result of a finished command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

struct Work {
    outputs: Vec<String>,
    runs: Vec<RunRecord>,
    exit_code: i32,
}

impl Work {
    fn new() -> Self {
        Self {
            outputs: Vec::new(),
            runs: Vec::new(),
            exit_code: EXIT_OK,
        }
    }
}

fn engines_for(cmd: &Command) -> &'static [EngineKind] {
    match cmd {
        Command::Coherent => &[EngineKind::Circuit, EngineKind::Oracle],
        Command::Heom => &[EngineKind::Heom],
        _ => &[EngineKind::Circuit],
    }
}

/// Fixes the engine, validates, runs `cmd` with `cfg`, and writes the manifest.
pub fn execute(
    cmd: &Command,
    mut cfg: RunConfig,
    explicit_engine: Option<EngineKind>,
) -> Result<Outcome, CliError> {
    let allowed = engines_for(cmd);
    if let Some(e) = explicit_engine {
        if !allowed.contains(&e) {
            return Err(CliError::Config(format!(
                "`{}` cannot run with engine {e:?}",
                cmd.name()
            )));
        }
    }
    if !allowed.contains(&cfg.engine) {
        cfg.engine = allowed[0];
    }
    if *cmd == Command::Coherent && cfg.engine == EngineKind::Circuit {
        cfg.noise = NoiseModel::ideal();
    }
    if let Some(p) = &cfg.calibration {
        cfg.calibration = Some(
            fs::canonicalize(p)
                .map_err(|e| CliError::Config(format!("calibration {}: {e}", p.display())))?,
        );
    }
    cfg.validate()?;
    if cfg.engine == EngineKind::Circuit {
        check_circuit_system(&cfg)?;
    }

    let out_dir = std::path::absolute(cfg.out_dir()).map_err(|e| CliError::Io(e.to_string()))?;
    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    cfg.out = Some(out_dir.clone());

    let start = Instant::now();
    let work = match cmd {
        Command::Coherent => coherent(&cfg, &out_dir)?,
        Command::Dissipative => dissipative(&cfg, &out_dir)?,
        Command::Heom => heom(&cfg, &out_dir)?,
        Command::Calibrate => calibrate(&cfg, &out_dir)?,
        Command::Predict => predict(&cfg, &out_dir)?,
        Command::CalibrateNoise => noise_calibration(&cfg, &out_dir)?,
        Command::Rerun { .. } => unreachable!("rerun is dispatched separately"),
    };
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        duration_s: start.elapsed().as_secs_f64(),
        exit_code: work.exit_code,
        runs: work.runs,
        outputs: checksums(&out_dir, &work.outputs)?,
    };
    manifest.write_atomic(&out_dir)?;
    Ok(Outcome {
        exit_code: work.exit_code,
        out_dir,
        manifest,
    })
}

/// Repeats the run recorded in `manifest_path` into `out` (by default a
/// `rerun` directory next to the manifest) and compares CSV checksums.
pub fn rerun(manifest_path: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let original = RunManifest::load(manifest_path)?;
    let cmd = Command::from_name(&original.command).ok_or_else(|| {
        CliError::Config(format!(
            "unknown command {:?} in manifest",
            original.command
        ))
    })?;
    let out_dir = match out {
        Some(p) => p.to_path_buf(),
        None => manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join("rerun"),
    };
    let mut cfg = original.config.clone();
    cfg.out = Some(out_dir);
    let mut outcome = execute(&cmd, cfg, None)?;

    let mut mismatched = Vec::new();
    let mut compared = 0;
    for rec in original.outputs.iter().filter(|r| r.path.ends_with(".csv")) {
        compared += 1;
        let again = outcome.manifest.outputs.iter().find(|o| o.path == rec.path);
        if again.map(|o| &o.sha256) != Some(&rec.sha256) {
            mismatched.push(rec.path.clone());
        }
    }
    if mismatched.is_empty() {
        println!(
            "rerun: {compared}/{compared} CSV files bit-identical ({})",
            outcome.out_dir.display()
        );
    } else {
        println!(
            "rerun: {} of {compared} CSV files differ: {}",
            mismatched.len(),
            mismatched.join(", ")
        );
        outcome.exit_code = EXIT_THRESHOLD;
    }
    Ok(outcome)
}

fn check_circuit_system(cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.system {
        Some(sys) if *sys != ExcitonSystem::symmetric_dimer(cfg.scale.j0_cm) => {
            Err(CliError::Config(format!(
                "the circuit engine simulates the symmetric dimer with J = scale.j0_cm = {} cm⁻¹",
                cfg.scale.j0_cm
            )))
        }
        _ => Ok(()),
    }
}

fn write_trace(dir: &Path, name: &str, trace: &PopulationTrace) -> Result<String, CliError> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
    let mut w = BufWriter::new(file);
    trace
        .write_csv(&mut w)
        .map_err(|e| CliError::engine(name, e))?;
    w.flush().map_err(|e| io_error(&path, e))?;
    Ok(name.to_string())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String, CliError> {
    let path = dir.join(name);
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Engine(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(name.to_string())
}

fn d_label(d: f64) -> String {
    format!("trace_d{}.csv", format_sig(d))
}

fn max_population_deviation(a: &PopulationTrace, b: &PopulationTrace) -> f64 {
    a.populations
        .iter()
        .zip(&b.populations)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn coherent(cfg: &RunConfig, dir: &Path) -> Result<Work, CliError> {
    let sys = cfg.system();
    let oracle = oracle_trace(&sys, cfg.p0, cfg.scale.dt_fs, cfg.n_steps)
        .map_err(|e| CliError::engine("oracle", e))?;
    let trace = match cfg.engine {
        EngineKind::Oracle => oracle.clone(),
        _ => run_circuit_trace(&cfg.circuit(0.0)).map_err(|e| CliError::engine("circuit", e))?,
    };
    let dev = max_population_deviation(&trace, &oracle);
    let mut work = Work::new();
    work.outputs.push(write_trace(dir, "coherent.csv", &trace)?);
    work.runs.push(RunRecord {
        file: "coherent.csv".into(),
        d: Some(0.0),
        insertions: Some(0),
        lambda: None,
    });
    match cfg.engine {
        EngineKind::Circuit => match cfg.shots {
            Some(n) => println!("max |P - P_oracle| = {dev:.3e} ({n} shots per step)"),
            None => println!("max |P - P_oracle| = {dev:.3e}"),
        },
        _ => println!("oracle trace written ({} steps)", cfg.n_steps),
    }
    Ok(work)
}

fn dissipative(cfg: &RunConfig, dir: &Path) -> Result<Work, CliError> {
    let ds = cfg.damping_list();
    let traces =
        sweep(&cfg.circuit(0.0), &ds).map_err(|e| CliError::engine("dissipative sweep", e))?;
    let mut work = Work::new();
    for (&d, trace) in ds.iter().zip(&traces) {
        let name = d_label(d);
        work.outputs.push(write_trace(dir, &name, trace)?);
        let insertions = trace.provenance.insertions;
        let last = trace.p1().last().copied().unwrap_or(f64::NAN);
        println!(
            "d = {:>6}  N_I = {:>5}  final P1 = {last:.4}",
            format_sig(d),
            insertions.unwrap_or(0)
        );
        work.runs.push(RunRecord {
            file: name,
            d: Some(d),
            insertions,
            lambda: None,
        });
    }
    if ds.len() >= 3 {
        match rate_curve(&ds, &traces) {
            Ok(rates) => {
                match rates.argmax_d {
                    Some(d) => println!(
                        "fastest rate at d = {} (turnover: {})",
                        format_sig(d),
                        rates.turnover
                    ),
                    None => println!("no usable rate fits"),
                }
                work.outputs.push(write_json(dir, "rates.json", &rates)?);
            }
            Err(e) => log::warn!("rate fits skipped: {e}"),
        }
    }
    Ok(work)
}

fn heom(cfg: &RunConfig, dir: &Path) -> Result<Work, CliError> {
    let sys = cfg.system();
    let baths = vec![cfg.bath; sys.n_sites()];
    let trace = heom_propagate(
        &sys,
        &baths,
        cfg.hierarchy,
        cfg.p0,
        cfg.scale.dt_fs,
        cfg.n_steps,
    )
    .map_err(|e| CliError::engine(format!("HEOM at λ = {}", cfg.bath.lambda_cm), e))?;
    let name = format!("heom_lambda{}.csv", format_sig(cfg.bath.lambda_cm));
    let mut work = Work::new();
    work.outputs.push(write_trace(dir, &name, &trace)?);
    work.runs.push(RunRecord {
        file: name,
        d: None,
        insertions: None,
        lambda: Some(cfg.bath.lambda_cm),
    });
    println!(
        "final P1 = {:.4}",
        trace.p1().last().copied().unwrap_or(f64::NAN)
    );
    if !cfg.skip_convergence {
        let report = convergence_check(
            &sys,
            &baths,
            cfg.hierarchy,
            cfg.p0,
            cfg.scale.dt_fs,
            cfg.n_steps,
            cfg.convergence_tolerance,
        )
        .map_err(|e| CliError::engine("convergence check", e))?;
        println!(
            "convergence (L={}, K={}) vs (L={}, K={}): max deviation {:.3e} ({})",
            report.base.truncation,
            report.base.matsubara,
            report.refined.truncation,
            report.refined.matsubara,
            report.max_deviation,
            if report.converged {
                "converged"
            } else {
                "NOT converged"
            }
        );
        work.outputs
            .push(write_json(dir, "convergence.json", &report)?);
    }
    Ok(work)
}

fn calibrate(cfg: &RunConfig, dir: &Path) -> Result<Work, CliError> {
    let ds = cfg.damping_list();
    let mut distinct = ds.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(CliError::Config(
            "calibration needs at least two distinct damping coefficients (--ds)".into(),
        ));
    }
    let traces =
        sweep(&cfg.circuit(0.0), &ds).map_err(|e| CliError::engine("calibration sweep", e))?;
    let curves = HeomCurves::for_trace(&cfg.system(), cfg.lambda_fit, &traces[0])
        .map_err(|e| CliError::engine("HEOM grid", e))?;
    let fits: Vec<_> = traces
        .par_iter()
        .map(|t| fit_lambda_with(t, &curves))
        .collect();

    let mut work = Work::new();
    let mut points = Vec::new();
    println!("{:>8} {:>10} {:>10}", "d", "lambda", "rms");
    for ((&d, trace), fit) in ds.iter().zip(&traces).zip(fits) {
        let name = d_label(d);
        work.outputs.push(write_trace(dir, &name, trace)?);
        let lambda = match fit {
            Ok(f) => {
                if f.at_bound {
                    log::warn!("λ fit at d = {d} hit the search bound");
                }
                println!("{:>8} {:>10.3} {:>10.2e}", format_sig(d), f.lambda, f.rms);
                points.push(CalibrationPoint {
                    d,
                    lambda: f.lambda,
                    rms: f.rms,
                });
                Some(f.lambda)
            }
            Err(e) => {
                eprintln!("warning: λ fit failed at d = {d}: {e}");
                None
            }
        };
        work.runs.push(RunRecord {
            file: name,
            d: Some(d),
            insertions: trace.provenance.insertions,
            lambda,
        });
    }
    let curve = build_calibration(&points).map_err(|e| CliError::engine("calibration line", e))?;
    println!(
        "lambda(d) = {:.4}·d + {:.4}   r² = {:.4}",
        curve.slope, curve.intercept, curve.r_squared
    );
    work.outputs
        .push(write_json(dir, "calibration.json", &curve)?);
    Ok(work)
}

#[derive(Serialize)]
struct PredictionSummary {
    lambda_target: f64,
    d_exact: f64,
    d: f64,
    extrapolated: bool,
    rms: f64,
    rms_threshold: f64,
    passed: bool,
    circuit_csv: String,
    heom_csv: String,
}

fn predict(cfg: &RunConfig, dir: &Path) -> Result<Work, CliError> {
    let path = cfg.calibration.as_ref().ok_or_else(|| {
        CliError::Config("predict needs a calibration file (--calibration)".into())
    })?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let curve: CalibrationCurve = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let pc = PredictConfig {
        circuit: cfg.circuit(0.0),
        lambda_fit: cfg.lambda_fit,
        granularity: cfg.granularity,
    };
    let p = predict_dynamics(&curve, cfg.lambda_target, &pc)
        .map_err(|e| CliError::engine(format!("prediction at λ = {}", cfg.lambda_target), e))?;
    if p.extrapolated {
        eprintln!(
            "warning: λ = {} lies outside the calibrated span; extrapolating",
            p.lambda_target
        );
    }

    let mut work = Work::new();
    let circuit_csv = write_trace(dir, "predict_circuit.csv", &p.circuit)?;
    let heom_csv = write_trace(dir, "predict_heom.csv", &p.heom)?;
    work.runs.push(RunRecord {
        file: circuit_csv.clone(),
        d: Some(p.d),
        insertions: p.circuit.provenance.insertions,
        lambda: None,
    });
    work.runs.push(RunRecord {
        file: heom_csv.clone(),
        d: None,
        insertions: None,
        lambda: Some(p.lambda_target),
    });
    work.outputs.push(circuit_csv.clone());
    work.outputs.push(heom_csv.clone());
    let passed = p.rms <= cfg.rms_threshold;
    let summary = PredictionSummary {
        lambda_target: p.lambda_target,
        d_exact: p.d_exact,
        d: p.d,
        extrapolated: p.extrapolated,
        rms: p.rms,
        rms_threshold: cfg.rms_threshold,
        passed,
        circuit_csv,
        heom_csv,
    };
    work.outputs
        .push(write_json(dir, "prediction.json", &summary)?);
    println!(
        "λ = {} → d = {} (exact {:.4}); rms(P1) = {:.4} [{}]",
        format_sig(p.lambda_target),
        format_sig(p.d),
        p.d_exact,
        p.rms,
        if passed { "PASS" } else { "FAIL" }
    );
    if !passed {
        work.exit_code = EXIT_THRESHOLD;
    }
    Ok(work)
}

fn noise_calibration(cfg: &RunConfig, dir: &Path) -> Result<Work, CliError> {
    let nc = NoiseCalibrationConfig {
        circuit: cfg.circuit(0.0),
        lambda_fit: cfg.lambda_fit,
        ..Default::default()
    };
    let result = calibrate_noise(&nc).map_err(|e| CliError::engine("noise calibration", e))?;
    for p in &result.points {
        println!("d = {:>4}  fitted λ = {:.2}", format_sig(p.d), p.lambda);
    }
    println!(
        "depol2_p = {:.6}  objective = {:.3}",
        result.depol2_p, result.objective
    );
    let mut work = Work::new();
    work.outputs
        .push(write_json(dir, "noise_calibration.json", &result)?);
    Ok(work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::MANIFEST_FILE;

    #[test]
    fn labels_use_compact_numbers() {
        assert_eq!(d_label(10.0), "trace_d10.csv");
        assert_eq!(d_label(2.5), "trace_d2.5.csv");
    }

    #[test]
    fn engine_mismatch_is_a_config_error() {
        let err = execute(
            &Command::Heom,
            RunConfig::default(),
            Some(EngineKind::Circuit),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_CONFIG);
    }

    #[test]
    fn non_dimer_system_rejected_by_circuit_engine() {
        let cfg = RunConfig {
            system: Some(ExcitonSystem::dimer(0.0, 50.0, 100.0)),
            ..RunConfig::default()
        };
        assert!(matches!(
            check_circuit_system(&cfg),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn manifest_is_written_last_and_lists_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            out: Some(dir.path().to_path_buf()),
            n_steps: 5,
            ..RunConfig::default()
        };
        let o = execute(&Command::Coherent, cfg, None).unwrap();
        assert_eq!(o.exit_code, 0);
        assert_eq!(o.manifest.outputs.len(), 1);
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }
}
