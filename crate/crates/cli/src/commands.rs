use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use liouville_disk::ansatz_residual::{
    profile_export, scaling_study, ResidualGrids, PROFILE_CSV_HEADER, SCALING_CSV_HEADER,
};
use liouville_disk::curvature_model::{check_hypotheses as hypothesis_report, CurvatureData};
use liouville_disk::disk_geometry::BubbleChart;
use liouville_disk::identity_lab::{
    closed_form_suite, kernel_norm_identity, verify_asymptotic, AsymptoticId, ClosedFormId, IdentityGrids,
    IDENTITY_CSV_HEADER,
};
use liouville_disk::reduction::{
    chart_from_epsilon, reduced_coefficients, solve_reduced, ReducedSolution, HYPOTHESIS_TOL,
};
use liouville_disk::spectral_solver::{fixed_point_solve_with, FixedPointOptions, SpectralConfig, FIELD_CSV_HEADER};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::json;

use crate::config::{ChartConfig, ExperimentConfig};
use crate::CliError;

/// Default ε for single-chart commands, on the branch of the reduced solution.
const DEFAULT_EPSILON: f64 = 1.0 / 128.0;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Science(format!("cannot serialize report: {e}")))?;
    println!("{text}");
    Ok(())
}

pub fn verify_identities(config: &ExperimentConfig, data: &CurvatureData, out: &Path) -> Result<(), CliError> {
    let id = &config.identities;
    let grids = IdentityGrids::default();
    let mut rows = Vec::new();
    let mut failures = Vec::new();

    let closed = closed_form_suite(&id.gaussians, &id.geodesics, &id.deltas, &id.resolvent_a, grids)?;
    for r in &closed {
        let tol = if r.id == ClosedFormId::CosineResolvent { id.resolvent_tol } else { id.rel_tol };
        if !r.passes(tol, id.zero_tol) {
            failures.push(format!("{} [{}]: error {:e} > {tol:e}", r.id, r.params, r.error()));
        }
        rows.push(r.csv_row());
    }

    let xi = Complex64::from_polar(1.0, id.xi_angle);
    let params = format!("curvature={};xi_angle={}", config.curvature, id.xi_angle);
    for aid in AsymptoticId::ALL {
        let r = verify_asymptotic(aid, data, xi, &id.ladder)?;
        if !r.passed {
            failures.push(format!("{aid}: {}", r.notes.join("; ")));
        }
        rows.push(r.csv_row(&params));
    }

    // Kernel normalization at the configured point and at seeded random points.
    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut angles = vec![id.xi_angle];
    angles.extend((0..id.kernel_points).map(|_| rng.gen_range(0.0..TAU)));
    for angle in angles {
        for which in [1u8, 2] {
            let r = kernel_norm_identity(data, Complex64::from_polar(1.0, angle), which, grids)?;
            if !(r.rel_err <= id.rel_tol) {
                failures.push(format!("kernel_norm_z{which} at angle {angle}: error {:e}", r.rel_err));
            }
            rows.push(format!(
                "kernel_norm_z{which},curvature={};xi_angle={angle},{:.17e},{:.17e},{:.6e},",
                config.curvature,
                r.interior + r.boundary,
                r.expected,
                r.rel_err
            ));
        }
    }

    write_file(out, "identities.csv", &csv(IDENTITY_CSV_HEADER, rows.iter().cloned()))?;
    println!("{} checks, {} failed", rows.len(), failures.len());
    if failures.is_empty() {
        return Ok(());
    }
    let mut msg = String::from("identity checks failed:");
    for f in &failures {
        let _ = write!(msg, "\n  {f}");
    }
    Err(CliError::Science(msg))
}

pub fn check_hypotheses(data: &CurvatureData, tol: f64) -> Result<(), CliError> {
    let report = hypothesis_report(data, tol);
    print_json(&json!({ "report": report, "failures": report.failures() }))?;
    if report.admissible {
        Ok(())
    } else {
        Err(CliError::Science(format!("hypotheses fail: {}", report.failures().join(", "))))
    }
}

pub fn reduce(data: &CurvatureData) -> Result<(), CliError> {
    let hypotheses = hypothesis_report(data, HYPOTHESIS_TOL);
    let outcome = reduced_coefficients(data).and_then(|c| solve_reduced(&c).map(|s| (c, s)));
    match outcome {
        Ok((coefficients, solution)) => {
            print_json(&json!({ "hypotheses": hypotheses, "coefficients": coefficients, "solution": solution }))
        }
        Err(e) => {
            print_json(&json!({ "hypotheses": hypotheses, "error": e.to_string() }))?;
            Err(CliError::Science(e.to_string()))
        }
    }
}

fn reduced_solution(data: &CurvatureData) -> Result<ReducedSolution, CliError> {
    Ok(solve_reduced(&reduced_coefficients(data)?)?)
}

pub fn residual_scan(config: &ExperimentConfig, data: &CurvatureData, out: &Path) -> Result<(), CliError> {
    let sol = reduced_solution(data)?;
    let rc = &config.residual;
    let ladder = match &rc.epsilons {
        Some(e) => e.clone(),
        None => (5..=10).map(|k| f64::from(sol.epsilon_branch) * 2f64.powi(-k)).collect(),
    };
    let grids = ResidualGrids { nr: rc.nr, ntheta: rc.ntheta };
    let study = scaling_study(data, &sol, &ladder, rc.p, grids)?;
    write_file(out, "scaling.csv", &csv(SCALING_CSV_HEADER, study.rows.iter().map(|r| r.csv_row())))?;
    print_json(&json!({ "p": study.p, "band": study.band, "rows": study.rows.len() }))?;
    match rc.band_max {
        Some(max) if !(study.band <= max) => Err(CliError::Science(format!("ratio band {} exceeds {max}", study.band))),
        _ => Ok(()),
    }
}

/// Explicit chart if given, else the reduced solution at `epsilon`.
fn resolve_chart(
    data: &CurvatureData,
    epsilon: Option<f64>,
    chart: Option<ChartConfig>,
) -> Result<BubbleChart, CliError> {
    if let Some(c) = chart {
        return Ok(BubbleChart::new(c.delta, c.eta, c.tau, epsilon.unwrap_or(0.0))?);
    }
    let sol = reduced_solution(data)?;
    let eps = epsilon.unwrap_or(f64::from(sol.epsilon_branch) * DEFAULT_EPSILON);
    Ok(chart_from_epsilon(&sol, eps)?)
}

pub fn solve(config: &ExperimentConfig, data: &CurvatureData, out: &Path) -> Result<(), CliError> {
    let s = &config.solve;
    let chart = resolve_chart(data, s.epsilon, s.chart)?;
    let options = FixedPointOptions {
        max_iter: s.max_iter,
        tol: s.tol,
        spectral: SpectralConfig { modes: s.modes, radial: s.radial },
        linear: s.linear,
        grid_nr: s.grid_nr,
        grid_ntheta: s.grid_ntheta,
    };
    let report = fixed_point_solve_with(&chart, data, &options)?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Science(format!("cannot serialize report: {e}")))?;
    write_file(out, "fixedpoint.json", &(text + "\n"))?;
    if s.dump_field {
        let rows = report.phi.dump(s.dump_nr, s.dump_ntheta).into_iter().map(|[r, t, u]| format!("{r:e},{t:e},{u:e}"));
        write_file(out, "phi.csv", &csv(FIELD_CSV_HEADER, rows))?;
    }
    print_json(&json!({
        "chart": report.chart,
        "c0": report.c0,
        "c1": report.c1,
        "c2": report.c2,
        "iterations": report.iterations,
        "phi_norm": report.phi_norm,
        "max_ratio": report.max_ratio(),
    }))
}

pub fn profile(config: &ExperimentConfig, data: &CurvatureData, out: &Path) -> Result<(), CliError> {
    let p = &config.profile;
    let chart = resolve_chart(data, p.epsilon, p.chart)?;
    let samples = profile_export(&chart, data, p.nr, p.ntheta)?;
    write_file(out, "profile.csv", &csv(PROFILE_CSV_HEADER, samples.iter().map(|s| s.csv_row())))?;
    print_json(&json!({ "chart": chart, "samples": samples.len() }))
}
