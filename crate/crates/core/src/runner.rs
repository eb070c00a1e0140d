//! Runs a registry case end to end and writes its artifacts.
//!
//! Files written into `config.out`:
//!
//! | file                         | columns / content                                              |
//! |------------------------------|----------------------------------------------------------------|
//! | `history.csv`                | `iteration,subdomain,error`                                    |
//! | `convergence.csv`            | `h,error` (only with `study > 0`)                              |
//! | `radial.csv`                 | `rho,abs_du_drho` (`sector_singularity` only)                  |
//! | `overlap_table.csv`          | `iteration,d=<overlap>,...` (`two_patch_2d` without `overlap`) |
//! | `dofs_2d.csv`, `dofs_3d.csv` | `partitions,degree,computed,reference` (`dof_stats`)           |
//! | `field_<s>.vtk`              | blended solution on a grid over subdomain `s`                  |
//! | `summary.txt`                | configuration echo and pass/fail verdict                       |

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::analysis::{geometric_radii, radial_exponent, ConvergenceSeries};
use crate::cases::{
    build_problem, dof_count_2d, dof_count_3d, param_grid, schwarz_options, tolerance, REFERENCE_DOFS_2D,
    REFERENCE_DOFS_3D, TABLE_OVERLAPS,
};
use crate::config::CaseConfig;
use crate::error::Result;
use crate::geometry::{advance, Patch};
use crate::io::{write_dof_table, write_iteration_table, VtkGrid};
use crate::schwarz::{init_state, InitialGuess, RunReport, SchwarzState};
use crate::splines::Multi;

/// Rows of the overlap table.
pub const TABLE_ROWS: usize = 10;

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub case: String,
    /// Main run; `None` for `dof_stats`.
    pub run: Option<RunReport>,
    pub final_error: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub convergence: Option<ConvergenceSeries>,
    pub fitted_order: Option<f64>,
    pub radial_exponent: Option<f64>,
    pub overlap_table: Vec<(String, RunReport)>,
    pub files: Vec<PathBuf>,
}

fn create(dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path)?;
    files.push(path);
    Ok(BufWriter::new(file))
}

/// Largest element diameter of a patch, from the mapped element corners.
pub fn max_element_diameter(patch: &Patch) -> Result<f64> {
    let elements: Vec<Vec<(f64, f64)>> = patch.space().dirs().iter().map(|kv| kv.elements()).collect();
    let dim = elements.len();
    let counts: Multi = elements.iter().map(Vec::len).collect();
    let corners: Multi = smallvec::smallvec![2; dim];
    let mut e: Multi = smallvec::smallvec![0; dim];
    let mut h: f64 = 0.0;
    loop {
        let mut pts = Vec::new();
        let mut c: Multi = smallvec::smallvec![0; dim];
        loop {
            let xi: Vec<f64> = (0..dim)
                .map(|d| {
                    let (a, b) = elements[d][e[d]];
                    if c[d] == 0 {
                        a
                    } else {
                        b
                    }
                })
                .collect();
            pts.push(patch.map(&xi)?);
            if !advance(&mut c, &corners) {
                break;
            }
        }
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
                h = h.max(d.sqrt());
            }
        }
        if !advance(&mut e, &counts) {
            break;
        }
    }
    Ok(h)
}

fn solve(config: &CaseConfig) -> Result<(SchwarzState, RunReport)> {
    let problem = build_problem(config)?;
    let mut state = init_state(&problem, schwarz_options(config), &InitialGuess::Zero)?;
    let report = state.run(config.epsilon, config.max_iters)?;
    Ok((state, report))
}

fn final_error(report: &RunReport) -> f64 {
    report.max_errors().last().copied().unwrap_or(f64::INFINITY)
}

/// Grid points per parametric direction for field exports.
fn export_resolution(dim: usize) -> usize {
    match dim {
        1 => 101,
        2 => 41,
        _ => 11,
    }
}

/// Writes the blended field on a `resolution`-per-direction grid over every
/// subdomain, one file per subdomain named `<prefix><s>.vtk`.
pub fn export_field(state: &SchwarzState, resolution: usize, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (s, sub) in state.subdomains.iter().enumerate() {
        let params = param_grid(&sub.patch, resolution);
        let points = params.iter().map(|xi| sub.patch.map(xi)).collect::<Result<Vec<_>>>()?;
        let values = state.blend_global(&points)?;
        let mut dims = [1; 3];
        for d in dims.iter_mut().take(sub.patch.dim_param()) {
            *d = resolution;
        }
        let grid = VtkGrid::new(dims, &points, values)?;
        grid.write(create(dir, &format!("{prefix}{s}.vtk"), &mut files)?)?;
    }
    Ok(files)
}

/// Runs `config.case`, writes its artifacts and judges the result against
/// the case tolerance.
pub fn run_case(config: &CaseConfig) -> Result<CaseReport> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    let mut files = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(summary, "# configuration");
    summary.push_str(&config.to_text());
    let _ = writeln!(summary, "\n# results");

    if config.case == "dof_stats" {
        return dof_stats(config, summary, files);
    }

    let tol = tolerance(&config.case);
    let (state, report) = solve(config)?;
    state.write_history_csv(create(&config.out, "history.csv", &mut files)?)?;
    let dim = state.subdomains[0].patch.dim_param();
    files.extend(export_field(&state, export_resolution(dim), &config.out, "field_")?);
    let err = final_error(&report);

    let mut overlap_table = Vec::new();
    if config.case == "two_patch_2d" && config.overlap.is_none() {
        for d in TABLE_OVERLAPS {
            let mut c = config.clone();
            c.overlap = Some(d);
            c.max_iters = c.max_iters.max(TABLE_ROWS);
            overlap_table.push((format!("d={d}"), solve(&c)?.1));
        }
        write_iteration_table(
            &overlap_table,
            TABLE_ROWS,
            create(&config.out, "overlap_table.csv", &mut files)?,
        )?;
        for (label, r) in &overlap_table {
            let _ = writeln!(
                summary,
                "{label}: {} iterations, converged {}",
                r.iterations, r.converged
            );
        }
    }

    let (convergence, fitted_order) = if config.study > 0 {
        let mut series = ConvergenceSeries::default();
        for level in 0..=config.study {
            let mut c = config.clone();
            c.refine = config.refine + level;
            let (s, r) = solve(&c)?;
            let h = s
                .subdomains
                .iter()
                .map(|sub| max_element_diameter(&sub.patch))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            series.push(h, final_error(&r));
        }
        series.write_csv(create(&config.out, "convergence.csv", &mut files)?)?;
        let order = series.fit_order().ok().map(|f| f.0);
        if let Some(o) = order {
            let _ = writeln!(summary, "fitted order: {o:.4}");
        }
        (Some(series), order)
    } else {
        (None, None)
    };

    let radial = if config.case == "sector_singularity" {
        let th = 0.25 * std::f64::consts::PI;
        let dir = [th.cos(), th.sin()];
        let radii = geometric_radii(1e-2, 1e-1, 8);
        let field = |x: &[f64]| -> Result<f64> { Ok(state.blend_global(&[x.into()])?[0]) };
        let mut out = create(&config.out, "radial.csv", &mut files)?;
        use std::io::Write;
        writeln!(out, "rho,abs_du_drho")?;
        for &rho in &radii {
            let step = 1e-4 * rho;
            let at = |r: f64| [r * dir[0], r * dir[1]];
            let du = (field(&at(rho + step))? - field(&at(rho - step))?) / (2.0 * step);
            writeln!(out, "{rho:e},{:e}", du.abs())?;
        }
        let e = radial_exponent(field, &[0.0, 0.0], &dir, &radii)?;
        let _ = writeln!(summary, "radial exponent: {e:.5}");
        Some(e)
    } else {
        None
    };

    let passed = err <= tol;
    let _ = writeln!(summary, "iterations: {}", report.iterations);
    let _ = writeln!(summary, "converged to epsilon: {}", report.converged);
    let _ = writeln!(summary, "final max L2 error: {err:e}");
    let _ = writeln!(summary, "tolerance: {tol:e}");
    let _ = writeln!(summary, "verdict: {}", if passed { "PASS" } else { "FAIL" });
    fs::write(config.out.join("summary.txt"), &summary)?;
    files.push(config.out.join("summary.txt"));

    Ok(CaseReport {
        case: config.case.clone(),
        run: Some(report),
        final_error: Some(err),
        tolerance: tol,
        passed,
        convergence,
        fitted_order,
        radial_exponent: radial,
        overlap_table,
        files,
    })
}

fn dof_stats(config: &CaseConfig, mut summary: String, mut files: Vec<PathBuf>) -> Result<CaseReport> {
    let rows2: Vec<_> = REFERENCE_DOFS_2D
        .iter()
        .map(|&(k, p, n)| (k, p, dof_count_2d(p, k), n))
        .collect();
    let rows3: Vec<_> = REFERENCE_DOFS_3D
        .iter()
        .map(|&(k, p, n)| (k, p, dof_count_3d(p, k), n))
        .collect();
    write_dof_table(&rows2, create(&config.out, "dofs_2d.csv", &mut files)?)?;
    write_dof_table(&rows3, create(&config.out, "dofs_3d.csv", &mut files)?)?;
    let mut passed = true;
    for (label, rows) in [("2d", &rows2), ("3d", &rows3)] {
        let matched = rows.iter().filter(|r| r.2 == r.3).count();
        passed &= matched == rows.len();
        let _ = writeln!(summary, "{label}: {matched}/{} rows match", rows.len());
    }
    let _ = writeln!(summary, "verdict: {}", if passed { "PASS" } else { "FAIL" });
    fs::write(config.out.join("summary.txt"), &summary)?;
    files.push(config.out.join("summary.txt"));
    Ok(CaseReport {
        case: config.case.clone(),
        run: None,
        final_error: None,
        tolerance: 0.0,
        passed,
        convergence: None,
        fitted_order: None,
        radial_exponent: None,
        overlap_table: Vec::new(),
        files,
    })
}
