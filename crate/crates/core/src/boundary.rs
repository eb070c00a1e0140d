//! Dirichlet lifting, homogenization of the Galerkin system, and the trace
//! operators that carry interface data between overlapping patches.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use smallvec::SmallVec;

use crate::assembly::{assemble_boundary_mass, DofPartition, Factorization, SparseSystem};
use crate::error::{Error, Result};
use crate::geometry::{advance, FaceDescriptor, Jacobian, Patch, Point};
use crate::quadrature::ElementRule;
use crate::splines::Multi;

/// How interface and outer Dirichlet data are projected onto a face span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    LeastSquares,
    QuasiInterpolation,
}

/// Coefficients `q_i` of the boundary dofs of one face; the lifted field is
/// `R_g = Σ q_i φ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletLift {
    pub dofs: Vec<usize>,
    pub coeffs: Vec<f64>,
}

/// Linear map from data sampled at fixed physical points of a face to the
/// coefficients of its boundary dofs.
#[derive(Debug, Clone)]
pub struct LiftOperator {
    pub dofs: Vec<usize>,
    /// Physical sample points where the data is needed.
    pub samples: Vec<Point>,
    /// `dofs.len() × samples.len()`.
    pub matrix: DMatrix<f64>,
}

impl LiftOperator {
    pub fn new(face: &FaceDescriptor, kind: LiftKind, rules: &[ElementRule]) -> Result<Self> {
        match kind {
            LiftKind::LeastSquares => Self::least_squares(face, rules),
            LiftKind::QuasiInterpolation => Self::collocation(face),
        }
    }

    /// `q = M⁻¹ Φᵀ W g` with `M` the face Gram matrix.
    pub fn least_squares(face: &FaceDescriptor, rules: &[ElementRule]) -> Result<Self> {
        let patch = &face.patch;
        let n = patch.num_basis();
        let mass = crate::assembly::to_dense(&assemble_boundary_mass(face, rules)?);
        let mut samples = Vec::new();
        let mut columns: Vec<Vec<(usize, f64)>> = Vec::new();
        for rule in rules {
            for (xi, &w) in rule.nodes.iter().zip(&rule.weights) {
                let (x, jac, basis) = patch.map_full(xi)?;
                let scale = w * jac.measure();
                samples.push(x);
                columns.push(
                    basis
                        .indices
                        .iter()
                        .zip(&basis.values)
                        .map(|(&i, &v)| (i, v * scale))
                        .collect(),
                );
            }
        }
        let mut moments = DMatrix::<f64>::zeros(n, samples.len());
        for (s, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                moments[(i, s)] += v;
            }
        }
        let chol = mass
            .cholesky()
            .ok_or_else(|| Error::SingularMatrix("boundary mass matrix".into()))?;
        Ok(Self {
            dofs: face.volume_indices.clone(),
            samples,
            matrix: chol.solve(&moments),
        })
    }

    /// Collocation at the images of the Greville abscissae of the face.
    pub fn collocation(face: &FaceDescriptor) -> Result<Self> {
        let patch = &face.patch;
        let space = patch.space();
        let n = patch.num_basis();
        let centers: Vec<Vec<f64>> = space.dirs().iter().map(collocation_abscissae).collect();
        let mut colloc = DMatrix::<f64>::zeros(n, n);
        let mut samples = Vec::with_capacity(n);
        for row in 0..n {
            let multi = space.multi_index(row);
            let s: Point = multi.iter().enumerate().map(|(d, &i)| centers[d][i]).collect();
            let basis = space.eval(&s, false)?;
            for (&i, &v) in basis.indices.iter().zip(&basis.values) {
                colloc[(row, i)] = v;
            }
            samples.push(patch.map(&s)?);
        }
        let inv = colloc
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("collocation matrix".into()))?;
        Ok(Self {
            dofs: face.volume_indices.clone(),
            samples,
            matrix: inv,
        })
    }

    pub fn apply(&self, data: &[f64]) -> DirichletLift {
        let coeffs = (0..self.dofs.len())
            .map(|r| self.matrix.row(r).iter().zip(data).map(|(a, b)| a * b).sum())
            .collect();
        DirichletLift {
            dofs: self.dofs.clone(),
            coeffs,
        }
    }

    pub fn lift<G: Fn(&[f64]) -> f64>(&self, g: G) -> DirichletLift {
        let data: Vec<f64> = self.samples.iter().map(|x| g(x)).collect();
        self.apply(&data)
    }
}

/// One abscissa per basis function. Span midpoints are too few once
/// `p > 0`, so knot averages are used; they keep the collocation matrix
/// totally positive and nonsingular.
pub fn collocation_abscissae(kv: &crate::splines::KnotVector) -> Vec<f64> {
    kv.greville()
}

/// `L²(face)` projection of `g` onto the face span.
pub fn lift_least_squares<G>(face: &FaceDescriptor, g: G, rules: &[ElementRule]) -> Result<DirichletLift>
where
    G: Fn(&[f64]) -> f64,
{
    Ok(LiftOperator::least_squares(face, rules)?.lift(g))
}

/// Face spline matching `g` at the collocation abscissae.
pub fn lift_quasi_interpolation<G>(face: &FaceDescriptor, g: G) -> Result<DirichletLift>
where
    G: Fn(&[f64]) -> f64,
{
    Ok(LiftOperator::collocation(face)?.lift(g))
}

/// Replaces boundary rows by identity rows carrying `q`, and moves the
/// `A(𝓘,𝓑)·q` coupling to the interior right-hand side. Boundary dofs
/// absent from `lifts` are pinned to zero; later lifts overwrite earlier ones.
pub fn homogenize(system: &SparseSystem, lifts: &[DirichletLift]) -> Result<SparseSystem> {
    let n = system.rhs.len();
    let part = &system.partition;
    let mut q = vec![0.0; n];
    for lift in lifts {
        for (&i, &c) in lift.dofs.iter().zip(&lift.coeffs) {
            if !part.is_boundary(i) {
                return Err(Error::InvalidInput(format!("lift dof {i} is not a boundary dof")));
            }
            q[i] = c;
        }
    }
    let mut coo = CooMatrix::new(n, n);
    let mut rhs = system.rhs.clone();
    for (r, row) in system.matrix.row_iter().enumerate() {
        if part.is_boundary(r) {
            continue;
        }
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            if part.is_boundary(c) {
                rhs[r] -= v * q[c];
            } else {
                coo.push(r, c, v);
            }
        }
    }
    for &b in part.boundary() {
        coo.push(b, b, 1.0);
        rhs[b] = q[b];
    }
    Ok(SparseSystem {
        matrix: CsrMatrix::from(&coo),
        rhs,
        partition: part.clone(),
    })
}

/// Factorized homogenized operator of one patch: solves for the coefficient
/// vector given the boundary values, without re-factorizing.
#[derive(Debug)]
pub struct DirichletSolver {
    partition: DofPartition,
    /// `A(𝓘,𝓑)` stored with global column indices, rows indexed globally.
    coupling: CsrMatrix<f64>,
    base_rhs: Vec<f64>,
    factorization: Factorization,
    reduced: CsrMatrix<f64>,
}

impl DirichletSolver {
    pub fn new(system: &SparseSystem) -> Result<Self> {
        let n = system.rhs.len();
        let zero = homogenize(system, &[])?;
        let part = &system.partition;
        let mut coo = CooMatrix::new(n, n);
        for (r, row) in system.matrix.row_iter().enumerate() {
            if part.is_boundary(r) {
                continue;
            }
            for (&c, &v) in row.col_indices().iter().zip(row.values()) {
                if part.is_boundary(c) {
                    coo.push(r, c, v);
                }
            }
        }
        Ok(Self {
            partition: part.clone(),
            coupling: CsrMatrix::from(&coo),
            base_rhs: system.rhs.clone(),
            factorization: Factorization::new(&zero.matrix)?,
            reduced: zero.matrix,
        })
    }

    pub fn partition(&self) -> &DofPartition {
        &self.partition
    }

    /// The homogenized matrix (identity on boundary rows and columns).
    pub fn reduced_matrix(&self) -> &CsrMatrix<f64> {
        &self.reduced
    }

    /// Right-hand side for boundary values `q` (entries off 𝓑 ignored).
    pub fn rhs(&self, q: &[f64]) -> Vec<f64> {
        let mut rhs = self.base_rhs.clone();
        for (r, row) in self.coupling.row_iter().enumerate() {
            let s: f64 = row.col_indices().iter().zip(row.values()).map(|(&c, v)| v * q[c]).sum();
            rhs[r] -= s;
        }
        for &b in self.partition.boundary() {
            rhs[b] = q[b];
        }
        rhs
    }

    pub fn solve(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.factorization.solve(&self.rhs(q))?;
        // boundary rows are identity rows; restore exact values
        for &b in self.partition.boundary() {
            x[b] = q[b];
        }
        Ok(x)
    }
}

/// Sparse linear functional rows: traced value `k` = `Σ w · α_dof`.
#[derive(Debug, Clone, Default)]
pub struct TraceOperator {
    pub rows: Vec<SmallVec<[(usize, f64); 16]>>,
}

impl TraceOperator {
    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(i, w)| w * coeffs[i]).sum())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Coarse parametric sampling used to seed Newton inversions.
#[derive(Debug, Clone)]
pub struct Locator {
    samples: Vec<(Point, Point)>,
}

impl Locator {
    pub fn new(patch: &Patch) -> Result<Self> {
        let space = patch.space();
        let per_dir: Multi = space
            .dirs()
            .iter()
            .map(|kv| (2 * kv.num_elements()).clamp(4, 32) + 1)
            .collect();
        let bounds = space.bounds();
        let mut samples = Vec::new();
        let mut idx: Multi = smallvec::smallvec![0; space.dim()];
        loop {
            let xi: Point = (0..space.dim())
                .map(|d| {
                    let (a, b) = bounds[d];
                    a + (b - a) * idx[d] as f64 / (per_dir[d] - 1) as f64
                })
                .collect();
            let x = patch.map(&xi)?;
            samples.push((xi, x));
            if !advance(&mut idx, &per_dir) {
                break;
            }
        }
        Ok(Self { samples })
    }

    /// Parametric guesses ordered by physical distance to `x`.
    pub fn guesses(&self, x: &[f64], count: usize) -> Vec<Point> {
        let mut scored: Vec<(f64, &Point)> = self
            .samples
            .iter()
            .map(|(xi, y)| (y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), xi))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored.into_iter().take(count).map(|(_, xi)| xi.clone()).collect()
    }
}

/// Pulls `x` back into `patch`, trying several seeds before giving up.
pub fn pull_back(patch: &Patch, locator: &Locator, x: &[f64]) -> Result<Point> {
    let mut last = None;
    for guess in locator.guesses(x, 4) {
        match patch.invert_map(x, Some(&guess)) {
            Ok(inv) => return Ok(inv.xi),
            Err(e) => last = Some(e),
        }
    }
    match patch.invert_map(x, None) {
        Ok(inv) => Ok(inv.xi),
        Err(e) => Err(last.unwrap_or(e)),
    }
}

/// Exact trace operator: rows are donor basis values at `F⁻¹(x)`.
pub fn exact_trace_operator(donor: &Patch, points: &[Point]) -> Result<TraceOperator> {
    let locator = Locator::new(donor)?;
    let mut rows = Vec::with_capacity(points.len());
    for (index, x) in points.iter().enumerate() {
        let xi = pull_back(donor, &locator, x).map_err(|e| Error::Trace {
            index,
            source: Box::new(e),
        })?;
        let b = donor.space().eval(&xi, false)?;
        rows.push(b.indices.into_iter().zip(b.values).collect());
    }
    Ok(TraceOperator { rows })
}

/// Evaluates the donor field `Σ α_k φ_k` at physical points.
pub fn trace_exact(donor: &Patch, coeffs: &[f64], points: &[Point]) -> Result<Vec<f64>> {
    Ok(exact_trace_operator(donor, points)?.apply(coeffs))
}

type Vertices = SmallVec<[usize; 4]>;
type Barycentric = SmallVec<[f64; 4]>;

/// Structured sampling of a donor patch: the image of a uniform parametric
/// lattice, split into Kuhn simplices sharing the low–high cell diagonal.
#[derive(Debug, Clone)]
pub struct SampledLattice {
    resolution: Multi,
    params: Vec<Point>,
    points: Vec<Point>,
    dim: usize,
}

const HULL_TOL: f64 = 1e-10;
/// Barycentric undershoot tolerated for points inside the donor image but
/// outside the polygonal hull of the lattice (curved boundaries).
const EXTRAPOLATION_LIMIT: f64 = 0.5;

impl SampledLattice {
    pub fn new(patch: &Patch, resolution: &[usize]) -> Result<Self> {
        let dim = patch.dim_param();
        if resolution.len() != dim || resolution.contains(&0) {
            return Err(Error::InvalidInput(
                "lattice resolution must be positive per direction".into(),
            ));
        }
        let bounds = patch.space().bounds();
        let extents: Multi = resolution.iter().map(|r| r + 1).collect();
        let mut params = Vec::new();
        let mut points = Vec::new();
        let mut idx: Multi = smallvec::smallvec![0; dim];
        loop {
            let xi: Point = (0..dim)
                .map(|d| {
                    let (a, b) = bounds[d];
                    if idx[d] == resolution[d] {
                        b
                    } else {
                        a + (b - a) * idx[d] as f64 / resolution[d] as f64
                    }
                })
                .collect();
            points.push(patch.map(&xi)?);
            params.push(xi);
            if !advance(&mut idx, &extents) {
                break;
            }
        }
        Ok(Self {
            resolution: resolution.iter().copied().collect(),
            params,
            points,
            dim,
        })
    }

    /// Default: four lattice cells per donor element in each direction.
    pub fn default_resolution(patch: &Patch) -> Multi {
        patch.space().dirs().iter().map(|kv| 4 * kv.num_elements()).collect()
    }

    fn vertex(&self, multi: &[usize]) -> usize {
        let mut flat = 0;
        for d in (0..self.dim).rev() {
            flat = flat * (self.resolution[d] + 1) + multi[d];
        }
        flat
    }

    pub fn params(&self) -> &[Point] {
        &self.params
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn simplices_of_cell(&self, cell: &[usize]) -> Vec<SmallVec<[usize; 4]>> {
        permutations(self.dim)
            .into_iter()
            .map(|perm| {
                let mut corner: Multi = cell.iter().copied().collect();
                let mut verts = SmallVec::new();
                verts.push(self.vertex(&corner));
                for &axis in &perm {
                    corner[axis] += 1;
                    verts.push(self.vertex(&corner));
                }
                verts
            })
            .collect()
    }

    /// Barycentric coordinates of `x` in the physical simplex.
    fn barycentric(&self, verts: &[usize], x: &[f64]) -> Option<SmallVec<[f64; 4]>> {
        let d = self.dim;
        let v0 = &self.points[verts[0]];
        let mut jac = Jacobian::zeros(d, d);
        for c in 0..d {
            let vc = &self.points[verts[c + 1]];
            for r in 0..d {
                jac.m[r][c] = vc[r] - v0[r];
            }
        }
        let scale = (0..d)
            .map(|c| (0..d).map(|r| jac.m[r][c].powi(2)).sum::<f64>().sqrt())
            .product::<f64>();
        if jac.det().abs() <= 1e-14 * scale {
            return None;
        }
        let inv = jac.inverse()?;
        let rel: Point = (0..d).map(|r| x[r] - v0[r]).collect();
        let lam = inv.mul_vec(&rel);
        let mut out = SmallVec::new();
        out.push(1.0 - lam.iter().sum::<f64>());
        out.extend(lam.iter().copied());
        Some(out)
    }

    /// Best simplex near parametric guess `xi`: `(vertices, barycentric)`
    /// maximizing the smallest barycentric coordinate.
    fn best_simplex(&self, x: &[f64], cells: impl Iterator<Item = Multi>) -> Option<(Vertices, Barycentric)> {
        let mut best: Option<(f64, Vertices, Barycentric)> = None;
        for cell in cells {
            for verts in self.simplices_of_cell(&cell) {
                if let Some(lam) = self.barycentric(&verts, x) {
                    let m = lam.iter().copied().fold(f64::INFINITY, f64::min);
                    if best.as_ref().is_none_or(|b| m > b.0) {
                        best = Some((m, verts, lam));
                    }
                }
            }
        }
        best.map(|(_, v, l)| (v, l))
    }

    fn cells_near(&self, xi: &[f64], bounds: &[(f64, f64)], reach: isize) -> Vec<Multi> {
        let center: Vec<isize> = (0..self.dim)
            .map(|d| {
                let (a, b) = bounds[d];
                let t = ((xi[d] - a) / (b - a) * self.resolution[d] as f64).floor() as isize;
                t.clamp(0, self.resolution[d] as isize - 1)
            })
            .collect();
        let span = (2 * reach + 1) as usize;
        let extents: Multi = smallvec::smallvec![span; self.dim];
        let mut out = Vec::new();
        let mut off: Multi = smallvec::smallvec![0; self.dim];
        loop {
            let cell: Option<Multi> = (0..self.dim)
                .map(|d| {
                    let c = center[d] + off[d] as isize - reach;
                    (0..self.resolution[d] as isize).contains(&c).then_some(c as usize)
                })
                .collect();
            if let Some(c) = cell {
                out.push(c);
            }
            if !advance(&mut off, &extents) {
                break;
            }
        }
        out
    }

    fn all_cells(&self) -> Vec<Multi> {
        let extents: Multi = self.resolution.clone();
        let mut out = Vec::new();
        let mut idx: Multi = smallvec::smallvec![0; self.dim];
        loop {
            out.push(idx.clone());
            if !advance(&mut idx, &extents) {
                break;
            }
        }
        out
    }

    /// Interpolation weights over lattice vertices for the query point.
    pub fn weights(&self, patch: &Patch, locator: &Locator, x: &[f64]) -> Result<SmallVec<[(usize, f64); 4]>> {
        match pull_back(patch, locator, x) {
            Ok(xi) => self.weights_near(patch, x, &xi, true),
            Err(_) => {
                let guess = locator.guesses(x, 1).pop().unwrap_or_else(|| patch.param_center());
                self.weights_near(patch, x, &guess, false)
            }
        }
    }

    /// Weights given a parametric guess; `inside` says whether `x` is known
    /// to lie in the donor image, which permits extrapolation across the
    /// sliver between the curved boundary and the lattice hull.
    pub fn weights_near(
        &self,
        patch: &Patch,
        x: &[f64],
        guess: &[f64],
        inside: bool,
    ) -> Result<SmallVec<[(usize, f64); 4]>> {
        let bounds = patch.space().bounds();
        let min_of = |l: &SmallVec<[f64; 4]>| l.iter().copied().fold(f64::INFINITY, f64::min);
        let mut found = self.best_simplex(x, self.cells_near(guess, &bounds, 1).into_iter());
        if found.as_ref().is_none_or(|(_, l)| min_of(l) < -HULL_TOL) {
            let wide = self.best_simplex(x, self.all_cells().into_iter());
            let better = match (&wide, &found) {
                (Some((_, lw)), Some((_, lf))) => min_of(lw) > min_of(lf),
                (Some(_), None) => true,
                _ => false,
            };
            if better {
                found = wide;
            }
        }
        let Some((verts, lam)) = found else {
            return Err(Error::OutsideHull { index: 0 });
        };
        let min = min_of(&lam);
        if min < -HULL_TOL && (!inside || min < -EXTRAPOLATION_LIMIT) {
            return Err(Error::OutsideHull { index: 0 });
        }
        Ok(verts.into_iter().zip(lam).collect())
    }

    /// Trace row over donor dofs for a point with known parametric guess.
    pub fn trace_row(
        &self,
        patch: &Patch,
        x: &[f64],
        guess: &[f64],
        inside: bool,
    ) -> Result<SmallVec<[(usize, f64); 16]>> {
        let weights = self.weights_near(patch, x, guess, inside)?;
        let mut row: SmallVec<[(usize, f64); 16]> = SmallVec::new();
        for (v, w) in weights {
            let b = patch.space().eval(&self.params[v], false)?;
            for (i, bv) in b.indices.into_iter().zip(b.values) {
                match row.iter_mut().find(|(j, _)| *j == i) {
                    Some(entry) => entry.1 += w * bv,
                    None => row.push((i, w * bv)),
                }
            }
        }
        Ok(row)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Interpolation trace operator: donor basis values at the lattice vertices
/// combined with the simplex weights of each query point.
pub fn interpolated_trace_operator(donor: &Patch, points: &[Point], resolution: &[usize]) -> Result<TraceOperator> {
    let lattice = SampledLattice::new(donor, resolution)?;
    let locator = Locator::new(donor)?;
    let mut rows = Vec::with_capacity(points.len());
    for (index, x) in points.iter().enumerate() {
        let (guess, inside) = match pull_back(donor, &locator, x) {
            Ok(xi) => (xi, true),
            Err(_) => (
                locator.guesses(x, 1).pop().unwrap_or_else(|| donor.param_center()),
                false,
            ),
        };
        let row = lattice.trace_row(donor, x, &guess, inside).map_err(|e| match e {
            Error::OutsideHull { .. } => Error::OutsideHull { index },
            other => Error::Trace {
                index,
                source: Box::new(other),
            },
        })?;
        rows.push(row);
    }
    Ok(TraceOperator { rows })
}

/// Samples the donor field on the lattice image and interpolates linearly.
pub fn trace_interpolated(donor: &Patch, coeffs: &[f64], points: &[Point], resolution: &[usize]) -> Result<Vec<f64>> {
    Ok(interpolated_trace_operator(donor, points, resolution)?.apply(coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_load, assemble_stiffness, to_dense};
    use crate::quadrature::{default_rules, element_rules};
    use crate::splines::{KnotVector, TensorSpace};
    use approx::assert_abs_diff_eq;

    fn curved(p: usize, n: usize) -> Patch {
        let kv = || KnotVector::uniform(p, n, 0.0, 1.0).unwrap();
        Patch::interpolate(TensorSpace::new(vec![kv(), kv()]).unwrap(), 2, |xi| {
            let (r, th) = (1.0 + xi[1], 0.2 + 0.9 * xi[0]);
            smallvec::smallvec![r * th.cos(), r * th.sin()]
        })
        .unwrap()
    }

    fn edge(p: usize, n: usize) -> FaceDescriptor {
        let space = TensorSpace::new(vec![KnotVector::uniform(p, n, 0.0, 1.0).unwrap()]).unwrap();
        let patch = Patch::interpolate(space, 2, |s| smallvec::smallvec![s[0], 0.0]).unwrap();
        let nb = patch.num_basis();
        FaceDescriptor {
            dir: 1,
            side: 0,
            value: 0.0,
            patch,
            volume_indices: (0..nb).collect(),
        }
    }

    #[test]
    fn lifts_reproduce_face_span_and_constants() {
        let face = curved(3, 3).face(0, 1).unwrap();
        let rules = default_rules(face.patch.space()).unwrap();
        let target: Vec<f64> = (0..face.patch.num_basis()).map(|i| (i as f64 * 0.7).sin()).collect();
        // g = Σ c_j φ_j expressed through the face parameterization
        let inv_face = |x: &[f64]| -> f64 {
            let r = x[0].hypot(x[1]);
            face.patch.eval_field(&target, &[(r - 1.0).clamp(0.0, 1.0)]).unwrap()
        };
        for lift in [
            lift_least_squares(&face, inv_face, &rules).unwrap(),
            lift_quasi_interpolation(&face, inv_face).unwrap(),
        ] {
            for (a, b) in lift.coeffs.iter().zip(&target) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
        for lift in [
            lift_least_squares(&face, |_| 2.5, &rules).unwrap(),
            lift_quasi_interpolation(&face, |_| 2.5).unwrap(),
        ] {
            assert!(lift.coeffs.iter().all(|c| (c - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal() {
        let face = edge(2, 5);
        let rules = element_rules(face.patch.space(), 6).unwrap();
        let g = |x: &[f64]| (3.0 * x[0]).sin();
        let lift = lift_least_squares(&face, g, &rules).unwrap();
        for j in 0..face.patch.num_basis() {
            let mut ip = 0.0;
            for rule in &rules {
                for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
                    let x = face.patch.map(xi).unwrap();
                    let uh = face.patch.eval_field(&lift.coeffs, xi).unwrap();
                    let b = face.patch.space().eval(xi, false).unwrap();
                    let phi = b
                        .indices
                        .iter()
                        .zip(&b.values)
                        .find(|(&i, _)| i == j)
                        .map_or(0.0, |(_, v)| *v);
                    ip += w * (g(&x) - uh) * phi;
                }
            }
            assert!(ip.abs() <= 1e-10);
        }
    }

    fn lift_l2_error(n: usize, kind: LiftKind) -> f64 {
        let face = edge(2, n);
        let g = |x: &[f64]| (std::f64::consts::PI * x[0]).sin();
        let op = LiftOperator::new(&face, kind, &default_rules(face.patch.space()).unwrap()).unwrap();
        let lift = op.lift(g);
        let fine = element_rules(face.patch.space(), 8).unwrap();
        let mut err = 0.0;
        for rule in &fine {
            for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
                let d = face.patch.eval_field(&lift.coeffs, xi).unwrap() - g(&[xi[0], 0.0]);
                err += w * d * d;
            }
        }
        err.sqrt()
    }

    #[test]
    fn lift_convergence_orders() {
        for kind in [LiftKind::LeastSquares, LiftKind::QuasiInterpolation] {
            let errs: Vec<f64> = [4, 8, 16, 32].iter().map(|&n| lift_l2_error(n, kind)).collect();
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!(order >= 2.5, "{kind:?}: {errs:?}");
            }
        }
    }

    #[test]
    fn collocation_residual_vanishes() {
        let face = curved(3, 4).face(1, 1).unwrap();
        let g = |x: &[f64]| x[0] * x[1] + (x[0]).exp();
        let op = LiftOperator::collocation(&face).unwrap();
        let lift = op.lift(g);
        let space = face.patch.space();
        let centers = collocation_abscissae(space.dir(0));
        for (s, x) in centers.iter().zip(&op.samples) {
            assert_abs_diff_eq!(
                face.patch.eval_field(&lift.coeffs, &[*s]).unwrap(),
                g(x),
                epsilon = 1e-11
            );
        }
    }

    #[test]
    fn homogenize_matches_block_form() {
        let space = TensorSpace::new(vec![KnotVector::uniform(1, 4, 0.0, 1.0).unwrap()]).unwrap();
        let patch = Patch::axis_aligned(space, &[0.0], &[1.0]).unwrap();
        let rules = default_rules(patch.space()).unwrap();
        let a = assemble_stiffness(&patch, |_| 1.0, &rules).unwrap();
        let f = assemble_load(&patch, |_| 1.0, &rules).unwrap();
        let faces = patch.faces().unwrap();
        let partition = DofPartition::from_faces(5, &faces);
        assert_eq!(partition.boundary(), &[0, 4]);
        let system = SparseSystem {
            matrix: a,
            rhs: f.clone(),
            partition,
        };
        let lift = DirichletLift {
            dofs: vec![0, 4],
            coeffs: vec![0.5, -1.0],
        };
        let hom = homogenize(&system, &[lift]).unwrap();
        let m = to_dense(&hom.matrix);
        // hand-built: identity corners, 2/h -1/h stencil inside, zero coupling columns
        let h = 0.25;
        let mut expect = DMatrix::<f64>::zeros(5, 5);
        expect[(0, 0)] = 1.0;
        expect[(4, 4)] = 1.0;
        for i in 1..4 {
            expect[(i, i)] = 2.0 / h;
            if i > 1 {
                expect[(i, i - 1)] = -1.0 / h;
            }
            if i < 3 {
                expect[(i, i + 1)] = -1.0 / h;
            }
        }
        assert!((&m - &expect).amax() < 1e-12);
        assert_abs_diff_eq!(hom.rhs[0], 0.5);
        assert_abs_diff_eq!(hom.rhs[1], f[1] + 0.5 / h, epsilon = 1e-12);
        assert_abs_diff_eq!(hom.rhs[3], f[3] - 1.0 / h, epsilon = 1e-12);
        assert_abs_diff_eq!(hom.rhs[4], -1.0);
        let x = crate::assembly::solve_sparse(&hom.matrix, &hom.rhs).unwrap();
        assert_eq!(x[0], 0.5);
        assert_eq!(x[4], -1.0);
        // q = 0 leaves the interior rhs untouched
        let zero = homogenize(&system, &[]).unwrap();
        assert_eq!(&zero.rhs[1..4], &f[1..4]);
        assert!(homogenize(
            &system,
            &[DirichletLift {
                dofs: vec![2],
                coeffs: vec![1.0]
            }]
        )
        .is_err());
    }

    #[test]
    fn exact_trace_properties() {
        let donor = curved(2, 4);
        let n = donor.num_basis();
        let pts: Vec<Point> = (0..20)
            .map(|k| {
                let t = 0.05 + 0.9 * k as f64 / 19.0;
                donor.map(&[t, 1.0 - t * t]).unwrap()
            })
            .collect();
        let constant = trace_exact(&donor, &vec![3.0; n], &pts).unwrap();
        assert!(constant.iter().all(|v| (v - 3.0).abs() < 1e-12));
        // x-coordinate field: coefficients are the control x-coordinates
        let xs: Vec<f64> = (0..n).map(|i| donor.control(i)[0]).collect();
        let traced = trace_exact(&donor, &xs, &pts).unwrap();
        for (v, p) in traced.iter().zip(&pts) {
            assert_abs_diff_eq!(*v, p[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn interpolated_trace_reproduces_lattice_and_linear_fields() {
        let donor = curved(2, 3);
        let n = donor.num_basis();
        let xs: Vec<f64> = (0..n)
            .map(|i| donor.control(i)[0] - 2.0 * donor.control(i)[1])
            .collect();
        let res = [6, 6];
        let lattice = SampledLattice::new(&donor, &res).unwrap();
        let at_vertices = trace_interpolated(&donor, &xs, &lattice.points()[..10], &res).unwrap();
        let exact = trace_exact(&donor, &xs, &lattice.points()[..10]).unwrap();
        for (a, b) in at_vertices.iter().zip(&exact) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let pts: Vec<Point> = (0..15).map(|k| donor.map(&[0.07 * k as f64, 0.5]).unwrap()).collect();
        let lin = trace_interpolated(&donor, &xs, &pts, &res).unwrap();
        for (v, p) in lin.iter().zip(&pts) {
            assert_abs_diff_eq!(*v, p[0] - 2.0 * p[1], epsilon = 1e-12);
        }
        let far: Vec<Point> = vec![smallvec::smallvec![10.0, 10.0]];
        assert!(matches!(
            trace_interpolated(&donor, &xs, &far, &res),
            Err(Error::OutsideHull { index: 0 })
        ));
    }

    #[test]
    fn interpolated_trace_converges_quadratically() {
        let donor = curved(3, 4);
        let n = donor.num_basis();
        let coeffs: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).sin()).collect();
        let pts: Vec<Point> = (0..30)
            .map(|k| donor.map(&[0.03 + 0.031 * k as f64, 0.37 + 0.01 * k as f64]).unwrap())
            .collect();
        let exact = trace_exact(&donor, &coeffs, &pts).unwrap();
        let errs: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&r| {
                let v = trace_interpolated(&donor, &coeffs, &pts, &[r, r]).unwrap();
                v.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[3]).log2() / 3.0;
        assert!(order >= 1.8, "{errs:?}");
    }

    #[test]
    fn one_dimensional_interpolation_is_convex_combination() {
        let space = TensorSpace::new(vec![KnotVector::uniform(3, 5, 0.4, 1.0).unwrap()]).unwrap();
        let donor = Patch::axis_aligned(space, &[0.4], &[1.0]).unwrap();
        let coeffs: Vec<f64> = (0..donor.num_basis()).map(|i| (i as f64).powi(2) * 0.1).collect();
        let beta = 0.71;
        let r = 5;
        let v = trace_interpolated(&donor, &coeffs, &[smallvec::smallvec![beta]], &[r]).unwrap()[0];
        let (e0, e1) = (0.64, 0.76);
        let w0 = donor.eval_field(&coeffs, &[e0]).unwrap();
        let w1 = donor.eval_field(&coeffs, &[e1]).unwrap();
        let expect = (e1 - beta) / (e1 - e0) * w0 + (beta - e0) / (e1 - e0) * w1;
        assert_abs_diff_eq!(v, expect, epsilon = 1e-13);
    }

    #[test]
    fn kuhn_split_counts() {
        assert_eq!(permutations(1).len(), 1);
        assert_eq!(permutations(2).len(), 2);
        assert_eq!(permutations(3).len(), 6);
    }
}
