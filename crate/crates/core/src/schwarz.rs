//! Additive Schwarz iteration over overlapping patches.
//!
//! Each sweep solves every subdomain independently. Interface Dirichlet data
//! come from the previous iterate of the neighbours: traced at fixed sample
//! points, projected onto the face span, then imposed by homogenization. All
//! trace and lift maps are linear, so they are assembled once at setup and a
//! sweep reduces to sparse products followed by a cached back-substitution.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use smallvec::SmallVec;

use crate::analysis::l2_error;
use crate::assembly::{assemble_load, assemble_neumann, assemble_stiffness, scatter_face, DofPartition, SparseSystem};
use crate::boundary::{pull_back, DirichletLift, DirichletSolver, LiftKind, LiftOperator, Locator, SampledLattice};
use crate::error::{Error, Result};
use crate::geometry::{FaceDescriptor, Patch, Point};
use crate::quadrature::{element_rules, ElementRule};

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Relative distance within which a point just outside a patch image (a
/// fitted-boundary mismatch) is still accepted as covered.
const COVER_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceRole {
    /// Outer boundary with prescribed `g`.
    Dirichlet,
    /// Covered by neighbouring patches; data come from their traces.
    Interface,
    /// Outer boundary with prescribed flux `h`.
    Neumann,
    /// Homogeneous natural condition.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Exact,
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// L² distance to the exact solution.
    Exact,
    /// L² distance between consecutive iterates.
    Successive,
}

/// A patch and the role of each of its faces, ordered as [`Patch::faces`].
#[derive(Debug, Clone)]
pub struct SubdomainSpec {
    pub patch: Patch,
    pub roles: Vec<FaceRole>,
}

#[derive(Clone)]
pub struct PdeData {
    pub conductivity: ScalarField,
    pub source: ScalarField,
    pub dirichlet: ScalarField,
    pub neumann: Option<ScalarField>,
    pub exact: Option<ScalarField>,
}

impl std::fmt::Debug for PdeData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeData")
            .field("neumann", &self.neumann.is_some())
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub subdomains: Vec<SubdomainSpec>,
    pub pde: PdeData,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchwarzOptions {
    pub trace: TraceKind,
    pub lift: LiftKind,
    /// Interpolation lattice cells per donor element and direction.
    pub lattice_factor: usize,
    /// Gauss points per direction beyond `p + 1`.
    pub extra_quadrature: usize,
    pub workers: usize,
    pub error_mode: ErrorMode,
}

impl Default for SchwarzOptions {
    fn default() -> Self {
        Self {
            trace: TraceKind::Exact,
            lift: LiftKind::LeastSquares,
            lattice_factor: 4,
            extra_quadrature: 1,
            workers: 1,
            error_mode: ErrorMode::Exact,
        }
    }
}

#[derive(Clone, Default)]
pub enum InitialGuess {
    /// Zero coefficients apart from the lifted outer Dirichlet data.
    #[default]
    Zero,
    /// Each subdomain starts from its own solve with interface data taken
    /// from this field.
    Interface(ScalarField),
}

/// Donor dof weights reproducing the traced value at one sample point.
#[derive(Debug, Clone)]
pub struct TraceSource {
    pub donor: usize,
    pub row: SmallVec<[(usize, f64); 16]>,
}

/// One interface face: its lift operator and the trace source of every
/// lift sample.
#[derive(Debug, Clone)]
pub struct InterfaceLink {
    pub face: usize,
    pub lift: LiftOperator,
    pub sources: Vec<TraceSource>,
}

impl InterfaceLink {
    pub fn donors(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.sources.iter().map(|s| s.donor).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    fn data(&self, snapshot: &[Vec<f64>]) -> Vec<f64> {
        self.sources
            .iter()
            .map(|s| s.row.iter().map(|&(i, w)| w * snapshot[s.donor][i]).sum())
            .collect()
    }
}

/// A set-up subproblem: assembled system, cached factorization, fixed outer
/// lifts and precomputed interface links.
#[derive(Debug)]
pub struct SubdomainProblem {
    pub id: usize,
    pub patch: Patch,
    pub roles: Vec<FaceRole>,
    pub rules: Vec<ElementRule>,
    pub system: SparseSystem,
    pub outer: Vec<DirichletLift>,
    pub interfaces: Vec<InterfaceLink>,
    pub coeffs: Vec<f64>,
    faces: Vec<FaceDescriptor>,
    solver: DirichletSolver,
    locator: Locator,
}

impl SubdomainProblem {
    pub fn solver(&self) -> &DirichletSolver {
        &self.solver
    }

    pub fn faces(&self) -> &[FaceDescriptor] {
        &self.faces
    }

    pub fn locator(&self) -> &Locator {
        &self.locator
    }

    /// Boundary values `q`: interface lifts first, outer lifts last so they
    /// win on shared dofs.
    pub fn boundary_values(&self, snapshot: &[Vec<f64>]) -> Vec<f64> {
        let lifts = self.interfaces.iter().map(|l| l.lift.apply(&l.data(snapshot)));
        self.assemble_q(lifts)
    }

    fn assemble_q(&self, interface_lifts: impl Iterator<Item = DirichletLift>) -> Vec<f64> {
        let mut q = vec![0.0; self.coeffs.len()];
        for lift in interface_lifts.chain(self.outer.iter().cloned()) {
            for (&i, &c) in lift.dofs.iter().zip(&lift.coeffs) {
                q[i] = c;
            }
        }
        q
    }

    /// Solves with interface data traced from `snapshot`.
    pub fn solve_from(&self, snapshot: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.solver
            .solve(&self.boundary_values(snapshot))
            .map_err(|e| e.in_subdomain(self.id))
    }

    /// Parametric point of `x` if it lies in this patch, allowing a small
    /// mismatch at fitted boundaries. The flag is false for those near misses.
    pub fn locate(&self, x: &[f64]) -> Option<(Point, bool)> {
        let slack = COVER_TOL * self.patch.diameter();
        let (lo, hi) = self.patch.bounding_box();
        if x.iter()
            .zip(lo.iter().zip(&hi))
            .any(|(v, (a, b))| *v < a - slack || *v > b + slack)
        {
            return None;
        }
        if let Ok(xi) = pull_back(&self.patch, &self.locator, x) {
            return Some((xi, true));
        }
        let guess = self.locator.guesses(x, 1).pop()?;
        let proj = self.patch.project(x, Some(&guess)).ok()?;
        (proj.residual <= COVER_TOL * self.patch.diameter()).then_some((proj.xi, false))
    }

    /// Normalized parametric distance from `xi` to the nearest interface
    /// face; infinite when the patch has none.
    pub fn interface_distance(&self, xi: &[f64]) -> f64 {
        let bounds = self.patch.space().bounds();
        self.interfaces
            .iter()
            .map(|link| {
                let face = &self.faces[link.face];
                let (a, b) = bounds[face.dir];
                let t = (xi[face.dir] - a) / (b - a);
                if face.side == 0 {
                    t
                } else {
                    1.0 - t
                }
            })
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        self.patch.eval_field(&self.coeffs, xi)
    }
}

fn face_rules(face: &FaceDescriptor, extra: usize) -> Result<Vec<ElementRule>> {
    let p = face.patch.space().degrees().iter().copied().max().unwrap_or(0);
    element_rules(face.patch.space(), p + 1 + extra)
}

fn is_degenerate(face: &FaceDescriptor, scale: f64) -> bool {
    face.patch.diameter() <= 1e-12 * scale
}

/// Assembly, factorization and outer lifts of one subdomain (no links yet).
fn setup_local(id: usize, spec: &SubdomainSpec, pde: &PdeData, options: &SchwarzOptions) -> Result<SubdomainProblem> {
    let patch = &spec.patch;
    let faces = patch.faces()?;
    if spec.roles.len() != faces.len() {
        return Err(Error::Config(format!(
            "subdomain {id}: {} face roles given, patch has {} faces",
            spec.roles.len(),
            faces.len()
        )));
    }
    let p = patch.space().degrees().iter().copied().max().unwrap_or(0);
    let rules = element_rules(patch.space(), p + 1 + options.extra_quadrature)?;
    let k = pde.conductivity.clone();
    let f = pde.source.clone();
    let matrix = assemble_stiffness(patch, |x| k(x), &rules)?;
    let mut rhs = assemble_load(patch, |x| f(x), &rules)?;
    for (face, role) in faces.iter().zip(&spec.roles) {
        if *role == FaceRole::Neumann {
            let h = pde
                .neumann
                .clone()
                .ok_or_else(|| Error::Config(format!("subdomain {id}: Neumann face without flux data")))?;
            let local = assemble_neumann(face, |x| h(x), &face_rules(face, options.extra_quadrature)?)?;
            scatter_face(face, &local, &mut rhs);
        }
    }
    let pinned = faces
        .iter()
        .zip(&spec.roles)
        .filter(|(_, r)| matches!(r, FaceRole::Dirichlet | FaceRole::Interface))
        .map(|(f, _)| f);
    let partition = DofPartition::from_faces(patch.num_basis(), pinned);
    let system = SparseSystem { matrix, rhs, partition };
    let solver = DirichletSolver::new(&system)?;
    let scale = patch.diameter();
    let mut outer = Vec::new();
    for (face, role) in faces.iter().zip(&spec.roles) {
        if *role == FaceRole::Dirichlet {
            let op = lift_operator(face, options, scale)?;
            let g = pde.dirichlet.clone();
            outer.push(op.lift(|x| g(x)));
        }
    }
    let mut coeffs = vec![0.0; patch.num_basis()];
    for lift in &outer {
        for (&i, &c) in lift.dofs.iter().zip(&lift.coeffs) {
            coeffs[i] = c;
        }
    }
    Ok(SubdomainProblem {
        id,
        locator: Locator::new(patch)?,
        patch: patch.clone(),
        roles: spec.roles.clone(),
        rules,
        system,
        outer,
        interfaces: Vec::new(),
        coeffs,
        faces,
        solver,
    })
}

fn lift_operator(face: &FaceDescriptor, options: &SchwarzOptions, scale: f64) -> Result<LiftOperator> {
    // a collapsed face has no measure; collocation still pins it
    if options.lift == LiftKind::QuasiInterpolation || is_degenerate(face, scale) {
        LiftOperator::collocation(face)
    } else {
        LiftOperator::least_squares(face, &face_rules(face, options.extra_quadrature)?)
    }
}

/// Chooses, for every interface sample, the neighbour in which the point
/// lies deepest (by distance to that neighbour's own interfaces; ties go to
/// the lower id) and records its trace row.
fn link_interfaces(subs: &mut [SubdomainProblem], options: &SchwarzOptions) -> Result<()> {
    // interface faces are needed for depth before links exist
    let mut pending: Vec<Vec<(usize, LiftOperator)>> = Vec::with_capacity(subs.len());
    for sub in subs.iter_mut() {
        let scale = sub.patch.diameter();
        let mut ops = Vec::new();
        for (fi, role) in sub.roles.iter().enumerate() {
            if *role == FaceRole::Interface {
                ops.push((fi, lift_operator(&sub.faces[fi], options, scale)?));
            }
        }
        sub.interfaces = ops
            .iter()
            .map(|(fi, op)| InterfaceLink {
                face: *fi,
                lift: op.clone(),
                sources: Vec::new(),
            })
            .collect();
        pending.push(ops);
    }
    let lattices: Vec<Option<SampledLattice>> = subs
        .iter()
        .map(|s| match options.trace {
            TraceKind::Exact => Ok(None),
            TraceKind::Interpolated => {
                let res: Vec<usize> = s
                    .patch
                    .space()
                    .dirs()
                    .iter()
                    .map(|kv| options.lattice_factor.max(1) * kv.num_elements())
                    .collect();
                SampledLattice::new(&s.patch, &res).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let mut all_sources: Vec<Vec<Vec<TraceSource>>> = Vec::with_capacity(subs.len());
    for (owner, ops) in pending.iter().enumerate() {
        let mut per_face = Vec::with_capacity(ops.len());
        for (fi, op) in ops {
            let mut sources = Vec::with_capacity(op.samples.len());
            for (k, x) in op.samples.iter().enumerate() {
                let mut best: Option<(usize, Point, bool, f64)> = None;
                for (d, donor) in subs.iter().enumerate() {
                    if d == owner {
                        continue;
                    }
                    if let Some((xi, inside)) = donor.locate(x) {
                        let depth = donor.interface_distance(&xi) + if inside { 1.0 } else { 0.0 };
                        if best.as_ref().is_none_or(|b| depth > b.3) {
                            best = Some((d, xi, inside, depth));
                        }
                    }
                }
                let Some((donor, xi, inside, _)) = best else {
                    return Err(Error::Config(format!(
                        "interface face {fi} of subdomain {owner}: sample {k} at {x:?} is not covered by any other subdomain"
                    )));
                };
                let dpatch = &subs[donor].patch;
                let row = match &lattices[donor] {
                    None => {
                        let b = dpatch.space().eval(&xi, false)?;
                        b.indices.into_iter().zip(b.values).collect()
                    }
                    Some(lat) => lat.trace_row(dpatch, x, &xi, true).map_err(|e| {
                        Error::Config(format!(
                            "interface face {fi} of subdomain {owner} (donor {donor}, inside={inside}): {e}"
                        ))
                    })?,
                };
                sources.push(TraceSource { donor, row });
            }
            per_face.push(sources);
        }
        all_sources.push(per_face);
    }
    for (sub, per_face) in subs.iter_mut().zip(all_sources) {
        for (link, sources) in sub.interfaces.iter_mut().zip(per_face) {
            link.sources = sources;
        }
    }
    Ok(())
}

fn thread_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs `f` over `0..n` on the pool (or inline), keeping index order.
fn map_indexed<T, F>(pool: Option<&rayon::ThreadPool>, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).map(f).collect(),
    }
}

/// Subdomains, the iteration counter and the per-subdomain error history.
pub struct SchwarzState {
    pub subdomains: Vec<SubdomainProblem>,
    pub iteration: usize,
    /// `history[s][n]` is the error of subdomain `s` after sweep `n + 1`.
    pub history: Vec<Vec<f64>>,
    pub options: SchwarzOptions,
    pub pde: PdeData,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for SchwarzState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SchwarzState")
            .field("subdomains", &self.subdomains.len())
            .field("iteration", &self.iteration)
            .field("options", &self.options)
            .finish_non_exhaustive()
    }
}

/// Report of a [`SchwarzState::run`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<Vec<f64>>,
}

impl RunReport {
    /// Largest subdomain error after each sweep.
    pub fn max_errors(&self) -> Vec<f64> {
        max_over_subdomains(&self.history)
    }
}

fn max_over_subdomains(history: &[Vec<f64>]) -> Vec<f64> {
    let n = history.iter().map(Vec::len).max().unwrap_or(0);
    (0..n)
        .map(|k| history.iter().filter_map(|h| h.get(k)).copied().fold(0.0, f64::max))
        .collect()
}

/// Assembles every subdomain, links interfaces and applies the initial guess.
pub fn init_state(problem: &Problem, options: SchwarzOptions, policy: &InitialGuess) -> Result<SchwarzState> {
    if options.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let pool = thread_pool(options.workers)?;
    let specs = &problem.subdomains;
    let mut subs = map_indexed(pool.as_ref(), specs.len(), |i| {
        setup_local(i, &specs[i], &problem.pde, &options).map_err(|e| e.in_subdomain(i))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    link_interfaces(&mut subs, &options)?;
    if let InitialGuess::Interface(field) = policy {
        for sub in subs.iter_mut() {
            let lifts: Vec<DirichletLift> = sub.interfaces.iter().map(|l| l.lift.lift(|x| field(x))).collect();
            let q = sub.assemble_q(lifts.into_iter());
            sub.coeffs = sub.solver.solve(&q).map_err(|e| e.in_subdomain(sub.id))?;
        }
    }
    Ok(SchwarzState {
        history: vec![Vec::new(); subs.len()],
        subdomains: subs,
        iteration: 0,
        options,
        pde: problem.pde.clone(),
        pool,
    })
}

impl SchwarzState {
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.subdomains.iter().map(|s| s.coeffs.clone()).collect()
    }

    /// One additive sweep: every subdomain solves from the previous snapshot.
    pub fn iterate_once(&mut self) -> Result<()> {
        let snapshot = self.snapshot();
        let subs = &self.subdomains;
        let next = map_indexed(self.pool.as_ref(), subs.len(), |i| subs[i].solve_from(&snapshot))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for (sub, c) in self.subdomains.iter_mut().zip(next) {
            sub.coeffs = c;
        }
        let errors = self.errors(&snapshot)?;
        for (h, e) in self.history.iter_mut().zip(errors) {
            h.push(e);
        }
        self.iteration += 1;
        Ok(())
    }

    /// Per-subdomain error of the current iterate under the configured mode.
    fn errors(&self, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
        let exact = match (self.options.error_mode, &self.pde.exact) {
            (ErrorMode::Exact, Some(u)) => Some(u.clone()),
            _ => None,
        };
        let subs = &self.subdomains;
        map_indexed(self.pool.as_ref(), subs.len(), |i| {
            let s = &subs[i];
            match &exact {
                Some(u) => l2_error(&s.patch, &s.coeffs, |x| u(x), &s.rules),
                None => {
                    let d: Vec<f64> = s.coeffs.iter().zip(&previous[i]).map(|(a, b)| a - b).collect();
                    l2_error(&s.patch, &d, |_| 0.0, &s.rules)
                }
            }
        })
        .into_iter()
        .collect()
    }

    /// L² errors against the exact solution, if the problem defines one.
    pub fn exact_errors(&self) -> Result<Option<Vec<f64>>> {
        let Some(u) = &self.pde.exact else {
            return Ok(None);
        };
        self.subdomains
            .iter()
            .map(|s| l2_error(&s.patch, &s.coeffs, |x| u(x), &s.rules))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Sweeps until every subdomain error is below `epsilon` or `max_iters`
    /// sweeps have run.
    pub fn run(&mut self, epsilon: f64, max_iters: usize) -> Result<RunReport> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        let start = self.iteration;
        let mut converged = false;
        while self.iteration - start < max_iters {
            self.iterate_once()?;
            if self.history.iter().all(|h| h.last().is_some_and(|&e| e < epsilon)) {
                converged = true;
                break;
            }
        }
        Ok(RunReport {
            iterations: self.iteration - start,
            converged,
            history: self.history.clone(),
        })
    }

    /// Replaces the worker pool; results do not depend on the worker count.
    pub fn set_workers(&mut self, workers: usize) -> Result<()> {
        if workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.pool = thread_pool(workers)?;
        self.options.workers = workers;
        Ok(())
    }

    /// Blend weights `χ_s(x)` of every subdomain containing `x`, with the
    /// local parametric point. Weights sum to one.
    pub fn blend_weights(&self, x: &[f64]) -> Result<Vec<(usize, Point, f64)>> {
        let mut hits: Vec<(usize, Point, f64)> = Vec::new();
        for (s, sub) in self.subdomains.iter().enumerate() {
            if let Some((xi, _)) = sub.locate(x) {
                let d = sub.interface_distance(&xi);
                hits.push((s, xi, d));
            }
        }
        if hits.is_empty() {
            return Err(Error::InvalidInput(format!(
                "point {x:?} is not covered by any subdomain"
            )));
        }
        // an infinite distance means no interfaces at all: that patch owns x
        if hits.iter().any(|h| h.2.is_infinite()) {
            for h in hits.iter_mut() {
                h.2 = if h.2.is_infinite() { 1.0 } else { 0.0 };
            }
        }
        let total: f64 = hits.iter().map(|h| h.2).sum();
        let n = hits.len() as f64;
        for h in hits.iter_mut() {
            h.2 = if total > 0.0 { h.2 / total } else { 1.0 / n };
        }
        Ok(hits)
    }

    /// Blended global field `Σ χ_s u_s` at physical points.
    pub fn blend_global(&self, points: &[Point]) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|x| {
                self.blend_weights(x)?
                    .into_iter()
                    .map(|(s, xi, w)| Ok(w * self.subdomains[s].eval(&xi)?))
                    .sum()
            })
            .collect()
    }

    /// `iteration,subdomain,error` rows.
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,subdomain,error")?;
        for n in 0..self.iteration {
            for (s, h) in self.history.iter().enumerate() {
                if let Some(e) = h.get(n) {
                    writeln!(out, "{},{},{:e}", n + 1, s, e)?;
                }
            }
        }
        Ok(())
    }
}

/// One sweep with `workers` threads; identical to [`SchwarzState::iterate_once`].
pub fn parallel_sweep(state: &mut SchwarzState, workers: usize) -> Result<()> {
    if state.options.workers != workers {
        state.set_workers(workers)?;
    }
    state.iterate_once()
}

/// Stacked matrix form `A·uⁿ = f + A_dir·P·uⁿ⁻¹` of a two-subdomain 1D sweep.
#[derive(Debug, Clone)]
pub struct OperatorForm {
    pub a: DMatrix<f64>,
    pub a_dir: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub f: DVector<f64>,
    pub offsets: Vec<usize>,
}

impl OperatorForm {
    /// `uⁿ = A⁻¹ (f + A_dir P uⁿ⁻¹)`.
    pub fn step(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = &self.f + &self.a_dir * (&self.p * u);
        self.a
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularMatrix("operator form".into()))
    }

    /// Matrix of the coupled fixed-point system `(A − A_dir P) u = f`.
    pub fn coupled(&self) -> DMatrix<f64> {
        &self.a - &self.a_dir * &self.p
    }
}

/// Builds the stacked operator form from a set-up 1D state.
pub fn build_operator_form_1d(state: &SchwarzState) -> Result<OperatorForm> {
    let subs = &state.subdomains;
    if subs.len() != 2 || subs.iter().any(|s| s.patch.dim_param() != 1 || s.patch.dim_phys() != 1) {
        return Err(Error::InvalidInput("operator form needs two 1D subdomains".into()));
    }
    let offsets: Vec<usize> = subs
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.coeffs.len();
            Some(o)
        })
        .collect();
    let n: usize = subs.iter().map(|s| s.coeffs.len()).sum();
    let mut a = DMatrix::zeros(n, n);
    let mut a_dir = DMatrix::zeros(n, n);
    let mut p = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    for (s, sub) in subs.iter().enumerate() {
        let o = offsets[s];
        let solver = sub.solver();
        let part = solver.partition();
        for (r, row) in solver.reduced_matrix().row_iter().enumerate() {
            for (&c, &v) in row.col_indices().iter().zip(row.values()) {
                a[(o + r, o + c)] = v;
            }
        }
        // f carries the load and the fixed outer data
        let q_outer = sub.assemble_q(std::iter::empty());
        let base = solver.rhs(&q_outer);
        for (i, v) in base.iter().enumerate() {
            f[o + i] = *v;
        }
        let outer: Vec<bool> = {
            let mut m = vec![false; sub.coeffs.len()];
            for l in &sub.outer {
                for &i in &l.dofs {
                    m[i] = true;
                }
            }
            m
        };
        for (r, row) in sub.system.matrix.row_iter().enumerate() {
            if part.is_boundary(r) {
                continue;
            }
            for (&c, &v) in row.col_indices().iter().zip(row.values()) {
                if part.is_boundary(c) && !outer[c] {
                    a_dir[(o + r, o + c)] = -v;
                }
            }
        }
        for link in &sub.interfaces {
            for (k, &dof) in link.lift.dofs.iter().enumerate() {
                if outer[dof] {
                    continue;
                }
                a_dir[(o + dof, o + dof)] = 1.0;
                for c in 0..n {
                    p[(o + dof, c)] = 0.0;
                }
                for (sample, src) in link.sources.iter().enumerate() {
                    let l = link.lift.matrix[(k, sample)];
                    for &(i, w) in &src.row {
                        p[(o + dof, offsets[src.donor] + i)] += l * w;
                    }
                }
            }
        }
    }
    Ok(OperatorForm {
        a,
        a_dir,
        p,
        f,
        offsets,
    })
}

/// Stacks subdomain coefficient vectors.
pub fn stacked(state: &SchwarzState) -> DVector<f64> {
    DVector::from_iterator(
        state.subdomains.iter().map(|s| s.coeffs.len()).sum(),
        state.subdomains.iter().flat_map(|s| s.coeffs.iter().copied()),
    )
}
