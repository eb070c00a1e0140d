//! Built-in problems: geometry, PDE data, exact solutions and tolerances.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::analysis::sector_series;
use crate::config::{CaseConfig, Source};
use crate::error::{Error, Result};
use crate::geometry::{Patch, Point};
use crate::schwarz::{FaceRole, PdeData, Problem, SchwarzOptions, SubdomainSpec};
use crate::splines::{KnotVector, TensorSpace};

pub const CASES: [&str; 6] = [
    "poisson1d",
    "circle_zoom",
    "two_patch_2d",
    "sector_singularity",
    "cubes_chain",
    "dof_stats",
];

/// Opening angle and radius of the re-entrant sector.
pub const SECTOR_ANGLE: f64 = 1.5 * PI;
pub const SECTOR_RADIUS: f64 = 3.0;
/// Series terms used for the sector reference solution.
pub const SECTOR_TERMS: usize = 199;

/// Overlap widths of the two-patch study.
pub const TABLE_OVERLAPS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

pub fn default_degree(case: &str) -> usize {
    match case {
        "circle_zoom" | "sector_singularity" => 3,
        _ => 2,
    }
}

/// Acceptance tolerance on the final largest subdomain L² error.
pub fn tolerance(case: &str) -> f64 {
    match case {
        "poisson1d" | "two_patch_2d" => 1e-4,
        "circle_zoom" => 5e-3,
        "sector_singularity" => 5e-3,
        "cubes_chain" => 1e-3,
        _ => 0.0,
    }
}

pub fn schwarz_options(config: &CaseConfig) -> SchwarzOptions {
    SchwarzOptions {
        trace: config.trace,
        lift: config.lift,
        lattice_factor: config.lattice,
        workers: config.workers,
        error_mode: config.error_mode,
        ..Default::default()
    }
}

fn field(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> crate::schwarz::ScalarField {
    Arc::new(f)
}

fn uniform(p: usize, spans: usize, a: f64, b: f64) -> Result<KnotVector> {
    KnotVector::uniform(p, spans, a, b)
}

fn unit(p: usize, spans: usize) -> Result<KnotVector> {
    uniform(p, spans, 0.0, 1.0)
}

/// Builds the Schwarz problem of a registry case.
pub fn build_problem(config: &CaseConfig) -> Result<Problem> {
    let p = config.degree.unwrap_or_else(|| default_degree(&config.case));
    let scale = 1usize << config.refine;
    match config.case.as_str() {
        "poisson1d" => poisson1d(p, scale, config.source),
        "circle_zoom" => circle_zoom(p, scale),
        "two_patch_2d" => two_patch_2d(p, scale, config.overlap.unwrap_or(0.5)),
        "sector_singularity" => sector_singularity(p, scale),
        "cubes_chain" => cubes_chain(p, scale, config.patches),
        "dof_stats" => Err(Error::Config("dof_stats has no Schwarz problem".into())),
        other => Err(Error::Config(format!("unknown case `{other}`"))),
    }
}

/// Two segments `[0, 0.6]` and `[0.4, 1]` with different element counts.
pub fn poisson1d(p: usize, scale: usize, source: Source) -> Result<Problem> {
    let seg = |n: usize, a: f64, b: f64| -> Result<Patch> {
        Patch::axis_aligned(TensorSpace::new(vec![uniform(p, n * scale, a, b)?])?, &[a], &[b])
    };
    let pde = match source {
        Source::Constant => PdeData {
            conductivity: field(|_| 1.0),
            source: field(|_| 1.0),
            dirichlet: field(|_| 0.0),
            neumann: None,
            exact: Some(field(|x| 0.5 * x[0] * (1.0 - x[0]))),
        },
        Source::Sine => PdeData {
            conductivity: field(|_| 1.0),
            source: field(|x| PI * PI * (PI * x[0]).sin()),
            dirichlet: field(|x| (PI * x[0]).sin()),
            neumann: None,
            exact: Some(field(|x| (PI * x[0]).sin())),
        },
    };
    Ok(Problem {
        subdomains: vec![
            SubdomainSpec {
                patch: seg(6, 0.0, 0.6)?,
                roles: vec![FaceRole::Dirichlet, FaceRole::Interface],
            },
            SubdomainSpec {
                patch: seg(4, 0.4, 1.0)?,
                roles: vec![FaceRole::Interface, FaceRole::Dirichlet],
            },
        ],
        pde,
    })
}

fn annular_sector(p: usize, n_theta: usize, n_r: usize, theta: (f64, f64), r: (f64, f64)) -> Result<Patch> {
    let space = TensorSpace::new(vec![unit(p, n_theta)?, unit(p, n_r)?])?;
    Patch::interpolate(space, 2, move |xi| {
        let t = theta.0 + (theta.1 - theta.0) * xi[0];
        let rho = r.0 + (r.1 - r.0) * xi[1];
        smallvec::smallvec![rho * t.cos(), rho * t.sin()]
    })
}

/// Disk of radius 3: two overlapping annular sectors over `1 ≤ r ≤ 3` and a
/// central square; exact solution `sin(x² + y² − 9)`.
pub fn circle_zoom(p: usize, scale: usize) -> Result<Problem> {
    let deg = PI / 180.0;
    let sector = |a: f64, b: f64| annular_sector(p, 16 * scale, 12 * scale, (a * deg, b * deg), (1.0, 3.0));
    let square = Patch::axis_aligned(
        TensorSpace::new(vec![
            uniform(p, 10 * scale, -1.6, 1.6)?,
            uniform(p, 10 * scale, -1.6, 1.6)?,
        ])?,
        &[-1.6, -1.6],
        &[1.6, 1.6],
    )?;
    let ring_roles = vec![
        FaceRole::Interface,
        FaceRole::Interface,
        FaceRole::Interface,
        FaceRole::Dirichlet,
    ];
    let r2 = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
    Ok(Problem {
        subdomains: vec![
            SubdomainSpec {
                patch: sector(-15.0, 195.0)?,
                roles: ring_roles.clone(),
            },
            SubdomainSpec {
                patch: sector(165.0, 375.0)?,
                roles: ring_roles,
            },
            SubdomainSpec {
                patch: square,
                roles: vec![FaceRole::Interface; 4],
            },
        ],
        pde: PdeData {
            conductivity: field(|_| 1.0),
            source: field(move |x| 4.0 * r2(x) * (r2(x) - 9.0).sin() - 4.0 * (r2(x) - 9.0).cos()),
            dirichlet: field(move |x| (r2(x) - 9.0).sin()),
            neumann: None,
            exact: Some(field(move |x| (r2(x) - 9.0).sin())),
        },
    })
}

/// Smooth reference solution of the two-patch family.
pub fn two_patch_exact(x: &[f64]) -> f64 {
    (0.5 * PI * x[0]).sin() * (0.5 * PI * x[1]).cos() + 0.25 * x[0] * x[1]
}

/// Two distorted quadrilaterals over `[0, 2] × [0, 1]` whose overlap has
/// width `overlap`, centred at `x = 1`. The distortion vanishes on the
/// parametric boundary, so interfaces stay straight.
pub fn two_patch_2d(p: usize, scale: usize, overlap: f64) -> Result<Problem> {
    if !(overlap > 0.0 && overlap < 2.0) {
        return Err(Error::Config(format!("overlap {overlap} outside (0, 2)")));
    }
    let quad = |x0: f64, x1: f64| -> Result<Patch> {
        let space = TensorSpace::new(vec![unit(p, 12 * scale)?, unit(p, 10 * scale)?])?;
        Patch::interpolate(space, 2, move |xi| {
            let bump = (PI * xi[0]).sin() * (PI * xi[1]).sin();
            let w = x1 - x0;
            smallvec::smallvec![
                x0 + w * xi[0] + 0.06 * w * bump * (PI * xi[1]).cos(),
                xi[1] + 0.05 * bump * (2.0 * PI * xi[0]).sin()
            ]
        })
    };
    let half = 0.5 * overlap;
    let g = field(two_patch_exact);
    Ok(Problem {
        subdomains: vec![
            SubdomainSpec {
                patch: quad(0.0, 1.0 + half)?,
                roles: vec![
                    FaceRole::Dirichlet,
                    FaceRole::Interface,
                    FaceRole::Dirichlet,
                    FaceRole::Dirichlet,
                ],
            },
            SubdomainSpec {
                patch: quad(1.0 - half, 2.0)?,
                roles: vec![
                    FaceRole::Interface,
                    FaceRole::Dirichlet,
                    FaceRole::Dirichlet,
                    FaceRole::Dirichlet,
                ],
            },
        ],
        pde: PdeData {
            conductivity: field(|_| 1.0),
            source: field(|x| 0.5 * PI * PI * (0.5 * PI * x[0]).sin() * (0.5 * PI * x[1]).cos()),
            dirichlet: g.clone(),
            neumann: None,
            exact: Some(g),
        },
    })
}

/// Angle measured from the first straight edge of the sector (the ray
/// pointing down the negative y axis), in `[0, 2π)`.
pub fn sector_angle(x: &[f64]) -> f64 {
    let t = x[1].atan2(x[0]) + 0.5 * PI;
    if t < -1e-12 {
        t + 2.0 * PI
    } else {
        t.max(0.0)
    }
}

/// Reference solution of the sector problem (truncated series).
pub fn sector_exact(x: &[f64]) -> f64 {
    let rho = x[0].hypot(x[1]);
    if rho < 1e-300 {
        return 0.0;
    }
    sector_series(rho, sector_angle(x).min(SECTOR_ANGLE), SECTOR_RADIUS, SECTOR_TERMS)
}

/// Polar patch over the sector: `θ` from `−π/2` to `π`, `ρ = r0 + (r1 − r0)·s`.
fn polar(p: usize, n_theta: usize, s_knots: KnotVector, r: (f64, f64)) -> Result<Patch> {
    let space = TensorSpace::new(vec![unit(p, n_theta)?, s_knots])?;
    Patch::interpolate(space, 2, move |xi| {
        let t = -0.5 * PI + SECTOR_ANGLE * xi[0];
        let rho = r.0 + (r.1 - r.0) * xi[1];
        smallvec::smallvec![rho * t.cos(), rho * t.sin()]
    })
}

/// The `3π/2` sector of radius 3 as an outer annular patch over
/// `0.4 ≤ ρ ≤ 3` and a zoom patch over `ρ ≤ 0.8` whose radial knots are
/// graded geometrically toward the re-entrant corner (collapsed edge).
pub fn sector_singularity(p: usize, scale: usize) -> Result<Problem> {
    let levels = 10 + scale.trailing_zeros() as usize;
    let mut breaks = vec![0.0];
    for k in (0..=levels).rev() {
        let b = 0.5f64.powi(k as i32);
        // subdivide each geometric layer `scale` times
        let lo = *breaks.last().expect("non-empty");
        for j in 1..=scale {
            breaks.push(lo + (b - lo) * j as f64 / scale as f64);
        }
    }
    let zoom = polar(p, 12 * scale, KnotVector::from_breaks(p, &breaks)?, (0.0, 0.8))?;
    let outer = polar(p, 12 * scale, unit(p, 8 * scale)?, (0.4, SECTOR_RADIUS))?;
    let g = field(|x| {
        let t = sector_angle(x).min(SECTOR_ANGLE);
        if x[0].hypot(x[1]) < 1e-300 {
            0.0
        } else {
            t * (SECTOR_ANGLE - t)
        }
    });
    Ok(Problem {
        subdomains: vec![
            SubdomainSpec {
                patch: outer,
                roles: vec![
                    FaceRole::Dirichlet,
                    FaceRole::Dirichlet,
                    FaceRole::Interface,
                    FaceRole::Dirichlet,
                ],
            },
            SubdomainSpec {
                patch: zoom,
                roles: vec![
                    FaceRole::Dirichlet,
                    FaceRole::Dirichlet,
                    FaceRole::Dirichlet,
                    FaceRole::Interface,
                ],
            },
        ],
        pde: PdeData {
            conductivity: field(|_| 1.0),
            source: field(|_| 0.0),
            dirichlet: g,
            neumann: None,
            exact: Some(field(sector_exact)),
        },
    })
}

/// `count` unit cubes, each shifted by 0.75 along x from the previous one;
/// exact solution `sin(x + y + z)`.
pub fn cubes_chain(p: usize, scale: usize, count: usize) -> Result<Problem> {
    let n = 3 * scale;
    let mut subdomains = Vec::with_capacity(count);
    for k in 0..count {
        let x0 = 0.75 * k as f64;
        let space = TensorSpace::new(vec![uniform(p, n, x0, x0 + 1.0)?, unit(p, n)?, unit(p, n)?])?;
        let patch = Patch::axis_aligned(space, &[x0, 0.0, 0.0], &[x0 + 1.0, 1.0, 1.0])?;
        let mut roles = vec![FaceRole::Dirichlet; 6];
        if k > 0 {
            roles[0] = FaceRole::Interface;
        }
        if k + 1 < count {
            roles[1] = FaceRole::Interface;
        }
        subdomains.push(SubdomainSpec { patch, roles });
    }
    let u = field(|x| (x[0] + x[1] + x[2]).sin());
    Ok(Problem {
        subdomains,
        pde: PdeData {
            conductivity: field(|_| 1.0),
            source: field(|x| 3.0 * (x[0] + x[1] + x[2]).sin()),
            dirichlet: u.clone(),
            neumann: None,
            exact: Some(u),
        },
    })
}

/// Every patch of every shipped geometry at degree `p`, unrefined.
pub fn shipped_patches(p: usize) -> Result<Vec<Patch>> {
    let mut out = Vec::new();
    let problems = [
        poisson1d(p, 1, Source::Constant)?,
        circle_zoom(p, 1)?,
        two_patch_2d(p, 1, 0.5)?,
        sector_singularity(p, 1)?,
        cubes_chain(p, 1, 2)?,
    ];
    for problem in problems {
        out.extend(problem.subdomains.into_iter().map(|s| s.patch));
    }
    Ok(out)
}

/// Degrees of freedom of the 2D statistics domain: four `s × s`
/// patches joined in a chain with shared edges, `s = partitions + p`.
pub fn dof_count_2d(p: usize, partitions: usize) -> usize {
    let s = partitions + p;
    4 * s * s - 3 * s
}

/// The same chain construction one dimension up: four `s³` blocks sharing
/// `s²` faces.
pub fn dof_count_3d(p: usize, partitions: usize) -> usize {
    let s = partitions + p;
    4 * s * s * s - 3 * s * s
}

/// `(partitions, degree, reference count)` entries of the 2D statistics table.
pub const REFERENCE_DOFS_2D: [(usize, usize, usize); 21] = [
    (0, 2, 10),
    (0, 3, 27),
    (0, 4, 52),
    (1, 2, 27),
    (1, 3, 52),
    (1, 4, 85),
    (2, 2, 52),
    (2, 3, 85),
    (2, 4, 126),
    (5, 2, 175),
    (5, 3, 232),
    (5, 4, 297),
    (10, 2, 540),
    (10, 3, 637),
    (10, 4, 742),
    (11, 2, 637),
    (11, 3, 742),
    (11, 4, 855),
    (20, 2, 1870),
    (20, 3, 2047),
    (20, 4, 2232),
];

/// `(partitions, degree, reference count)` entries of the 3D statistics table.
pub const REFERENCE_DOFS_3D: [(usize, usize, usize); 4] = [(1, 1, 765), (1, 2, 624), (2, 1, 2100), (2, 2, 1275)];

/// Parametric sample lattice of a patch: `per_dir` points per direction.
pub fn param_grid(patch: &Patch, per_dir: usize) -> Vec<Point> {
    let bounds = patch.space().bounds();
    let dim = bounds.len();
    let extents: crate::splines::Multi = smallvec::smallvec![per_dir; dim];
    let mut idx: crate::splines::Multi = smallvec::smallvec![0; dim];
    let mut out = Vec::new();
    loop {
        out.push(
            (0..dim)
                .map(|d| {
                    let (a, b) = bounds[d];
                    a + (b - a) * idx[d] as f64 / (per_dir - 1).max(1) as f64
                })
                .collect(),
        );
        if !crate::geometry::advance(&mut idx, &extents) {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dimensional_dof_table() {
        for (k, p, n) in REFERENCE_DOFS_2D {
            assert_eq!(dof_count_2d(p, k), n, "partitions {k}, degree {p}");
        }
    }

    #[test]
    fn sector_data_vanish_on_straight_edges() {
        for rho in [0.1, 1.0, 2.9] {
            assert!(sector_exact(&[0.0, -rho]).abs() < 1e-12);
            assert!(sector_exact(&[-rho, 0.0]).abs() < 1e-9);
        }
        assert_eq!(sector_exact(&[0.0, 0.0]), 0.0);
        let t = sector_angle(&[1.0, 1.0]);
        assert!((t - 0.75 * PI).abs() < 1e-14);
    }

    #[test]
    fn geometries_build() {
        for p in 1..=4 {
            let patches = shipped_patches(p).unwrap();
            assert_eq!(patches.len(), 2 + 3 + 2 + 2 + 2);
        }
    }
}
