//! Isogeometric mapping from the parametric box to a physical patch.

use nalgebra::DMatrix;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::splines::{Multi, TensorBasis, TensorSpace};

pub type Point = SmallVec<[f64; 3]>;

pub const NEWTON_MAX_ITERS: usize = 50;
pub const NEWTON_REL_TOL: f64 = 1e-12;
const PINNED_LIMIT: usize = 5;

/// `rows × cols` Jacobian of a map from `cols` parametric to `rows` physical
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub m: [[f64; 3]; 3],
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            m: [[0.0; 3]; 3],
        }
    }

    /// Determinant for square Jacobians.
    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.cols {
            0 => 1.0,
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// Volume element: `|det DF|` when square, `sqrt(det(DFᵀ DF))` otherwise.
    pub fn measure(&self) -> f64 {
        if self.rows == self.cols {
            return self.det().abs();
        }
        let mut gram = Jacobian::zeros(self.cols, self.cols);
        for a in 0..self.cols {
            for b in 0..self.cols {
                gram.m[a][b] = (0..self.rows).map(|r| self.m[r][a] * self.m[r][b]).sum();
            }
        }
        gram.det().max(0.0).sqrt()
    }

    /// Inverse of a square Jacobian.
    pub fn inverse(&self) -> Option<Jacobian> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let m = &self.m;
        let mut inv = Jacobian::zeros(self.cols, self.rows);
        match self.cols {
            0 => {}
            1 => inv.m[0][0] = 1.0 / m[0][0],
            2 => {
                inv.m[0][0] = m[1][1] / det;
                inv.m[0][1] = -m[0][1] / det;
                inv.m[1][0] = -m[1][0] / det;
                inv.m[1][1] = m[0][0] / det;
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
                        let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
                        inv.m[i][j] = (m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]) / det;
                    }
                }
            }
        }
        Some(inv)
    }

    /// Physical gradient `DF⁻ᵀ ĝ` from a parametric gradient, given the inverse.
    pub fn push_gradient(inv: &Jacobian, grad: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate().take(inv.cols) {
            *o = (0..inv.rows).map(|i| inv.m[i][j] * grad[i]).sum();
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Point {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.m[r][c] * v[c]).sum())
            .collect()
    }
}

/// Result of pulling a physical point back to the parametric box.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub xi: Point,
    pub residual: f64,
    pub iterations: usize,
}

/// Tensor-product B-spline patch: the geometry map `F` and the discrete space.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    space: TensorSpace,
    /// Row-major `num_basis × dim_phys`.
    controls: Vec<f64>,
    dim_phys: usize,
}

impl Patch {
    pub fn new(space: TensorSpace, controls: Vec<f64>, dim_phys: usize) -> Result<Self> {
        let patch = Self::unchecked(space, controls, dim_phys)?;
        if patch.dim_param() == dim_phys && dim_phys > 0 {
            patch.check_orientation()?;
        }
        Ok(patch)
    }

    fn unchecked(space: TensorSpace, controls: Vec<f64>, dim_phys: usize) -> Result<Self> {
        if dim_phys < space.dim() || dim_phys > 3 {
            return Err(Error::InvalidInput(format!(
                "physical dimension {dim_phys} incompatible with {} parametric directions",
                space.dim()
            )));
        }
        if controls.len() != space.num_basis() * dim_phys {
            return Err(Error::InvalidInput(format!(
                "control grid has {} coordinates, expected {} points of dimension {dim_phys}",
                controls.len(),
                space.num_basis()
            )));
        }
        if controls.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite control coordinate".into()));
        }
        Ok(Self {
            space,
            controls,
            dim_phys,
        })
    }

    /// Patch whose control points interpolate `f` at the tensor Greville
    /// abscissae. Affine maps are reproduced exactly.
    pub fn interpolate<F>(space: TensorSpace, dim_phys: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Point,
    {
        let counts = space.counts();
        let greville: Vec<Vec<f64>> = space.dirs().iter().map(|kv| kv.greville()).collect();
        let n = space.num_basis();
        let mut values = vec![0.0; n * dim_phys];
        for flat in 0..n {
            let multi = space.multi_index(flat);
            let xi: Point = multi.iter().enumerate().map(|(d, &i)| greville[d][i]).collect();
            let x = f(&xi);
            values[flat * dim_phys..(flat + 1) * dim_phys].copy_from_slice(&x[..dim_phys]);
        }
        // Apply the inverse univariate collocation matrix along each direction.
        for (d, kv) in space.dirs().iter().enumerate() {
            let nd = counts[d];
            let mut colloc = DMatrix::<f64>::zeros(nd, nd);
            for (r, &g) in greville[d].iter().enumerate() {
                let (first, vals) = kv.eval_basis(g)?;
                for (j, v) in vals.iter().enumerate() {
                    colloc[(r, first + j)] = *v;
                }
            }
            let lu = colloc.lu();
            let stride: usize = counts[..d].iter().product();
            for flat in 0..n {
                let multi = space.multi_index(flat);
                if multi[d] != 0 {
                    continue;
                }
                for c in 0..dim_phys {
                    let line = DMatrix::from_fn(nd, 1, |i, _| values[(flat + i * stride) * dim_phys + c]);
                    let sol = lu
                        .solve(&line)
                        .ok_or_else(|| Error::SingularMatrix("Greville collocation".into()))?;
                    for i in 0..nd {
                        values[(flat + i * stride) * dim_phys + c] = sol[(i, 0)];
                    }
                }
            }
        }
        Self::new(space, values, dim_phys)
    }

    /// Affine image of the parametric box onto the axis-aligned box `[lo, hi]`.
    pub fn axis_aligned(space: TensorSpace, lo: &[f64], hi: &[f64]) -> Result<Self> {
        let bounds = space.bounds();
        let dim = space.dim();
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::InvalidInput(
                "box corners must match the parametric dimension".into(),
            ));
        }
        let (lo, hi) = (lo.to_vec(), hi.to_vec());
        Self::interpolate(space, dim, move |xi| {
            (0..dim)
                .map(|d| {
                    let t = (xi[d] - bounds[d].0) / (bounds[d].1 - bounds[d].0);
                    lo[d] + t * (hi[d] - lo[d])
                })
                .collect()
        })
    }

    pub fn space(&self) -> &TensorSpace {
        &self.space
    }

    pub fn dim_param(&self) -> usize {
        self.space.dim()
    }

    pub fn dim_phys(&self) -> usize {
        self.dim_phys
    }

    pub fn num_basis(&self) -> usize {
        self.space.num_basis()
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn control(&self, flat: usize) -> &[f64] {
        &self.controls[flat * self.dim_phys..(flat + 1) * self.dim_phys]
    }

    /// Bounding box of the control points; it contains the patch image.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo: Point = smallvec::smallvec![f64::INFINITY; self.dim_phys];
        let mut hi: Point = smallvec::smallvec![f64::NEG_INFINITY; self.dim_phys];
        for c in self.controls.chunks(self.dim_phys.max(1)) {
            for (d, &x) in c.iter().enumerate() {
                lo[d] = lo[d].min(x);
                hi[d] = hi[d].max(x);
            }
        }
        (lo, hi)
    }

    /// Diagonal of the control-point bounding box.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn param_center(&self) -> Point {
        self.space.bounds().iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    fn combine(&self, basis: &TensorBasis) -> Point {
        let mut x: Point = smallvec::smallvec![0.0; self.dim_phys];
        for (&i, &v) in basis.indices.iter().zip(&basis.values) {
            for (xd, c) in x.iter_mut().zip(self.control(i)) {
                *xd += v * c;
            }
        }
        x
    }

    fn jacobian_from(&self, basis: &TensorBasis) -> Jacobian {
        let mut jac = Jacobian::zeros(self.dim_phys, self.dim_param());
        for (&i, g) in basis.indices.iter().zip(&basis.grads) {
            for (r, c) in self.control(i).iter().enumerate() {
                for (col, gc) in g.iter().enumerate().take(self.dim_param()) {
                    jac.m[r][col] += c * gc;
                }
            }
        }
        jac
    }

    pub fn map(&self, xi: &[f64]) -> Result<Point> {
        Ok(self.combine(&self.space.eval(xi, false)?))
    }

    pub fn jacobian(&self, xi: &[f64]) -> Result<Jacobian> {
        Ok(self.jacobian_from(&self.space.eval(xi, true)?))
    }

    /// Point, Jacobian and the basis evaluation they were computed from.
    pub fn map_full(&self, xi: &[f64]) -> Result<(Point, Jacobian, TensorBasis)> {
        let basis = self.space.eval(xi, true)?;
        Ok((self.combine(&basis), self.jacobian_from(&basis), basis))
    }

    fn check_orientation(&self) -> Result<()> {
        let mut sign = 0.0f64;
        let degrees = self.space.degrees();
        let rules: Vec<_> = degrees
            .iter()
            .map(|&p| gauss_legendre(p + 1).expect("valid rule size"))
            .collect();
        let elements: Vec<Vec<(f64, f64)>> = self.space.dirs().iter().map(|kv| kv.elements()).collect();
        let mut elem: Multi = smallvec::smallvec![0; self.dim_param()];
        loop {
            let mut node: Multi = smallvec::smallvec![0; self.dim_param()];
            loop {
                let xi: Point = (0..self.dim_param())
                    .map(|d| {
                        let (a, b) = elements[d][elem[d]];
                        0.5 * (a + b) + 0.5 * (b - a) * rules[d].0[node[d]]
                    })
                    .collect();
                let det = self.jacobian(&xi)?.det();
                if det == 0.0 || !det.is_finite() || (sign != 0.0 && det.signum() != sign) {
                    return Err(Error::SingularJacobian {
                        det,
                        point: xi.to_vec(),
                    });
                }
                sign = det.signum();
                if !advance(&mut node, &degrees.iter().map(|p| p + 1).collect::<Multi>()) {
                    break;
                }
            }
            if !advance(&mut elem, &elements.iter().map(Vec::len).collect::<Multi>()) {
                break;
            }
        }
        Ok(())
    }

    /// Newton pull-back `F⁻¹(x)` clamped to the parametric box.
    pub fn invert_map(&self, x: &[f64], guess: Option<&[f64]>) -> Result<Inversion> {
        self.newton(x, guess, false)
    }

    /// Like [`Patch::invert_map`], but a point outside the image yields the
    /// best clamped iterate (approximately the nearest parametric point) with
    /// its residual instead of an error.
    pub fn project(&self, x: &[f64], guess: Option<&[f64]>) -> Result<Inversion> {
        self.newton(x, guess, true)
    }

    fn newton(&self, x: &[f64], guess: Option<&[f64]>, nearest: bool) -> Result<Inversion> {
        if self.dim_phys != self.dim_param() {
            return Err(Error::InvalidInput("inversion needs a square map".into()));
        }
        let bounds = self.space.bounds();
        let tol = NEWTON_REL_TOL * self.diameter().max(f64::MIN_POSITIVE);
        let clamp = |xi: &mut Point| {
            for (v, &(a, b)) in xi.iter_mut().zip(&bounds) {
                *v = v.clamp(a, b);
            }
        };
        let residual_at = |xi: &[f64]| -> Result<(Point, f64)> {
            let y = self.map(xi)?;
            let r: Point = y.iter().zip(x).map(|(a, b)| a - b).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok((r, norm))
        };
        let mut xi: Point = match guess {
            Some(g) => g.iter().copied().collect(),
            None => self.param_center(),
        };
        clamp(&mut xi);
        let (mut r, mut norm) = residual_at(&xi)?;
        let mut best = (xi.clone(), norm);
        let mut pinned = 0;
        for it in 0..NEWTON_MAX_ITERS {
            if norm <= tol {
                return Ok(Inversion {
                    xi,
                    residual: norm,
                    iterations: it,
                });
            }
            let jac = self.jacobian(&xi)?;
            let Some(inv) = jac.inverse() else {
                return Err(Error::SingularJacobian {
                    det: jac.det(),
                    point: xi.to_vec(),
                });
            };
            let step = inv.mul_vec(&r);
            let mut lambda = 1.0;
            let (mut trial, mut trial_r, mut trial_norm);
            loop {
                trial = xi.iter().zip(&step).map(|(a, s)| a - lambda * s).collect::<Point>();
                clamp(&mut trial);
                (trial_r, trial_norm) = residual_at(&trial)?;
                if trial_norm < norm || lambda < 1e-4 {
                    break;
                }
                lambda *= 0.5;
            }
            let on_boundary = trial.iter().zip(&bounds).any(|(&v, &(a, b))| v == a || v == b);
            pinned = if on_boundary && trial_norm > tol { pinned + 1 } else { 0 };
            xi = trial;
            r = trial_r;
            norm = trial_norm;
            if norm < best.1 {
                best = (xi.clone(), norm);
            }
            if pinned >= PINNED_LIMIT && !nearest {
                return Err(Error::OutsideImage {
                    point: x.to_vec(),
                    residual: best.1,
                });
            }
        }
        if norm <= tol {
            return Ok(Inversion {
                xi,
                residual: norm,
                iterations: NEWTON_MAX_ITERS,
            });
        }
        if nearest {
            return Ok(Inversion {
                xi: best.0,
                residual: best.1,
                iterations: NEWTON_MAX_ITERS,
            });
        }
        Err(Error::InversionFailed {
            iterations: NEWTON_MAX_ITERS,
            residual: best.1,
        })
    }

    /// Restriction to the face where parametric direction `dir` is at its
    /// lower (`side = 0`) or upper (`side = 1`) end.
    pub fn face(&self, dir: usize, side: usize) -> Result<FaceDescriptor> {
        if dir >= self.dim_param() || side > 1 {
            return Err(Error::InvalidInput(format!("no face ({dir}, {side})")));
        }
        let counts = self.space.counts();
        let fixed = if side == 0 { 0 } else { counts[dir] - 1 };
        let face_space = self.space.without_dir(dir);
        let mut volume_indices = Vec::with_capacity(face_space.num_basis());
        let mut controls = Vec::with_capacity(face_space.num_basis() * self.dim_phys);
        for flat in 0..face_space.num_basis() {
            let mut multi = face_space.multi_index(flat);
            multi.insert(dir, fixed);
            let vol = self.space.flat_index(&multi);
            volume_indices.push(vol);
            controls.extend_from_slice(self.control(vol));
        }
        let kv = self.space.dir(dir);
        let value = if side == 0 { kv.first() } else { kv.last() };
        Ok(FaceDescriptor {
            dir,
            side,
            value,
            patch: Patch::unchecked(face_space, controls, self.dim_phys)?,
            volume_indices,
        })
    }

    /// All `2 * dim` faces, ordered `(0,0), (0,1), (1,0), …`.
    pub fn faces(&self) -> Result<Vec<FaceDescriptor>> {
        let mut out = Vec::new();
        for dir in 0..self.dim_param() {
            for side in 0..2 {
                out.push(self.face(dir, side)?);
            }
        }
        Ok(out)
    }

    /// Inserts `xi` in direction `dir`; the map is unchanged.
    pub fn insert_knot(&self, dir: usize, xi: f64) -> Result<Patch> {
        let (kv, rows) = self.space.dir(dir).insertion_operator(xi)?;
        let new_space = self.space.with_dir(dir, kv);
        let mut controls = vec![0.0; new_space.num_basis() * self.dim_phys];
        for flat in 0..new_space.num_basis() {
            let multi = new_space.multi_index(flat);
            for &(old_i, w) in &rows[multi[dir]] {
                let mut om = multi.clone();
                om[dir] = old_i;
                let old = self.space.flat_index(&om);
                for c in 0..self.dim_phys {
                    controls[flat * self.dim_phys + c] += w * self.controls[old * self.dim_phys + c];
                }
            }
        }
        Patch::unchecked(new_space, controls, self.dim_phys)
    }

    /// Splits every non-empty span of every direction into `parts` equal pieces.
    pub fn refine_uniform(&self, parts: usize) -> Result<Patch> {
        let mut patch = self.clone();
        for dir in 0..self.dim_param() {
            for (a, b) in self.space.dir(dir).elements() {
                for k in 1..parts {
                    patch = patch.insert_knot(dir, a + (b - a) * k as f64 / parts as f64)?;
                }
            }
        }
        Ok(patch)
    }

    /// Evaluates the scalar field with the given coefficients at `xi`.
    pub fn eval_field(&self, coeffs: &[f64], xi: &[f64]) -> Result<f64> {
        let b = self.space.eval(xi, false)?;
        Ok(b.indices.iter().zip(&b.values).map(|(&i, v)| v * coeffs[i]).sum())
    }

    /// Physical gradient of the scalar field at `xi` (square maps only).
    pub fn eval_gradient(&self, coeffs: &[f64], xi: &[f64]) -> Result<[f64; 3]> {
        let (_, jac, b) = self.map_full(xi)?;
        let inv = jac.inverse().ok_or_else(|| Error::SingularJacobian {
            det: jac.det(),
            point: xi.to_vec(),
        })?;
        let mut g = [0.0; 3];
        for (&i, grad) in b.indices.iter().zip(&b.grads) {
            let pg = Jacobian::push_gradient(&inv, grad);
            for d in 0..3 {
                g[d] += coeffs[i] * pg[d];
            }
        }
        Ok(g)
    }
}

/// Advances a multi-index odometer (first slot fastest); false after the last.
pub(crate) fn advance(idx: &mut [usize], extents: &[usize]) -> bool {
    for (i, &e) in idx.iter_mut().zip(extents) {
        *i += 1;
        if *i < e {
            return true;
        }
        *i = 0;
    }
    false
}

/// One boundary face of a patch and its own (lower-dimensional) patch.
#[derive(Debug, Clone)]
pub struct FaceDescriptor {
    pub dir: usize,
    pub side: usize,
    /// Parameter value of the fixed direction.
    pub value: f64,
    pub patch: Patch,
    /// Volume basis index of each face basis function.
    pub volume_indices: Vec<usize>,
}

impl FaceDescriptor {
    /// Lifts a face parameter to the volume parametric point.
    pub fn embed(&self, s: &[f64]) -> Point {
        let mut xi: Point = s.iter().copied().collect();
        xi.insert(self.dir, self.value);
        xi
    }
}
