//! Galerkin assembly of stiffness, load, Neumann and boundary-mass terms, and
//! the direct sparse solve used for every subproblem.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::geometry::{FaceDescriptor, Jacobian, Patch};
use crate::quadrature::ElementRule;

/// Split of the basis into interior dofs (vanishing on the Dirichlet part of
/// the boundary) and boundary dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct DofPartition {
    interior: Vec<usize>,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
}

impl DofPartition {
    /// Boundary dofs are those whose support touches one of `faces`, i.e.
    /// whose trace on the face is not identically zero.
    pub fn from_faces<'a>(num_dofs: usize, faces: impl IntoIterator<Item = &'a FaceDescriptor>) -> Self {
        let mut is_boundary = vec![false; num_dofs];
        for face in faces {
            for &i in &face.volume_indices {
                is_boundary[i] = true;
            }
        }
        Self::from_mask(is_boundary)
    }

    pub fn from_mask(is_boundary: Vec<bool>) -> Self {
        let (mut interior, mut boundary) = (Vec::new(), Vec::new());
        for (i, &b) in is_boundary.iter().enumerate() {
            if b {
                boundary.push(i);
            } else {
                interior.push(i);
            }
        }
        Self {
            interior,
            boundary,
            is_boundary,
        }
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.is_boundary[i]
    }

    pub fn len(&self) -> usize {
        self.is_boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_boundary.is_empty()
    }
}

/// Assembled matrix and right-hand side over all dofs of one patch.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix<f64>,
    pub rhs: Vec<f64>,
    pub partition: DofPartition,
}

pub(crate) struct NodeEval {
    pub x: crate::geometry::Point,
    pub measure: f64,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 3]>,
}

pub(crate) fn eval_node(patch: &Patch, xi: &[f64], need_grads: bool) -> Result<NodeEval> {
    let (x, jac, basis) = patch.map_full(xi)?;
    let measure = jac.measure();
    let square = patch.dim_param() == patch.dim_phys();
    if square && (measure == 0.0 || !measure.is_finite()) {
        return Err(Error::SingularJacobian {
            det: jac.det(),
            point: xi.to_vec(),
        });
    }
    let grads = if need_grads {
        let inv = jac.inverse().ok_or_else(|| Error::SingularJacobian {
            det: jac.det(),
            point: xi.to_vec(),
        })?;
        basis.grads.iter().map(|g| Jacobian::push_gradient(&inv, g)).collect()
    } else {
        Vec::new()
    };
    Ok(NodeEval {
        x,
        measure,
        indices: basis.indices,
        values: basis.values,
        grads,
    })
}

/// `A_ij = ∫ k ∇φ_j · ∇φ_i dx`.
pub fn assemble_stiffness<K>(patch: &Patch, k: K, rules: &[ElementRule]) -> Result<CsrMatrix<f64>>
where
    K: Fn(&[f64]) -> f64,
{
    let n = patch.num_basis();
    let dim = patch.dim_phys();
    let mut coo = CooMatrix::new(n, n);
    let mut local = Vec::new();
    for rule in rules {
        let mut indices: Option<Vec<usize>> = None;
        for (xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let node = eval_node(patch, xi, true)?;
            let nloc = node.indices.len();
            if indices.is_none() {
                local.clear();
                local.resize(nloc * nloc, 0.0);
                indices = Some(node.indices.clone());
            }
            let scale = k(&node.x) * w * node.measure;
            for a in 0..nloc {
                let ga = &node.grads[a];
                for b in 0..nloc {
                    let gb = &node.grads[b];
                    let dot: f64 = (0..dim).map(|d| ga[d] * gb[d]).sum();
                    local[a * nloc + b] += scale * dot;
                }
            }
        }
        if let Some(idx) = indices {
            let nloc = idx.len();
            for a in 0..nloc {
                for b in 0..nloc {
                    coo.push(idx[a], idx[b], local[a * nloc + b]);
                }
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// `M_ij = ∫ φ_i φ_j` over the patch (surface measure for non-square maps).
pub fn assemble_mass(patch: &Patch, rules: &[ElementRule]) -> Result<CsrMatrix<f64>> {
    let n = patch.num_basis();
    let mut coo = CooMatrix::new(n, n);
    for rule in rules {
        let mut local: Vec<f64> = Vec::new();
        let mut indices = Vec::new();
        for (xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let node = eval_node(patch, xi, false)?;
            let nloc = node.indices.len();
            if indices.is_empty() {
                local = vec![0.0; nloc * nloc];
                indices = node.indices.clone();
            }
            for a in 0..nloc {
                for b in 0..nloc {
                    local[a * nloc + b] += w * node.measure * node.values[a] * node.values[b];
                }
            }
        }
        let nloc = indices.len();
        for a in 0..nloc {
            for b in 0..nloc {
                coo.push(indices[a], indices[b], local[a * nloc + b]);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// `f_i = ∫ f φ_i dx`.
pub fn assemble_load<F>(patch: &Patch, f: F, rules: &[ElementRule]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut out = vec![0.0; patch.num_basis()];
    for rule in rules {
        for (xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let node = eval_node(patch, xi, false)?;
            let scale = f(&node.x) * w * node.measure;
            for (&i, v) in node.indices.iter().zip(&node.values) {
                out[i] += scale * v;
            }
        }
    }
    Ok(out)
}

/// `h_i = ∫_face h φ_i dΓ`, indexed by face basis function; entry `j`
/// belongs to volume dof `face.volume_indices[j]`.
pub fn assemble_neumann<H>(face: &FaceDescriptor, h: H, rules: &[ElementRule]) -> Result<Vec<f64>>
where
    H: Fn(&[f64]) -> f64,
{
    assemble_load(&face.patch, h, rules)
}

/// Gram matrix of the face basis in `L²(face)`.
pub fn assemble_boundary_mass(face: &FaceDescriptor, rules: &[ElementRule]) -> Result<CsrMatrix<f64>> {
    let m = assemble_mass(&face.patch, rules)?;
    let total: f64 = m.values().iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::InvalidInput("degenerate face with zero measure".into()));
    }
    Ok(m)
}

/// Adds a face-local vector into a volume-sized one.
pub fn scatter_face(face: &FaceDescriptor, local: &[f64], into: &mut [f64]) {
    for (&i, v) in face.volume_indices.iter().zip(local) {
        into[i] += v;
    }
}

pub fn csr_mul(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (r, row) in a.row_iter().enumerate() {
        out[r] = row.col_indices().iter().zip(row.values()).map(|(&c, v)| v * x[c]).sum();
    }
    out
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (r, c, v) in a.triplet_iter() {
        d[(r, c)] += *v;
    }
    d
}

/// Dense fallback is used for non-symmetric systems up to this size.
const DENSE_LIMIT: usize = 6000;

/// Factorized square matrix, reusable across right-hand sides.
pub enum Factorization {
    Cholesky(CscCholesky<f64>),
    DenseLu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factorization::Cholesky(_) => f.write_str("Factorization::Cholesky"),
            Factorization::DenseLu(_) => f.write_str("Factorization::DenseLu"),
        }
    }
}

fn is_symmetric(a: &CsrMatrix<f64>) -> bool {
    let t = a.transpose();
    let scale = a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a - &t;
    diff.values().iter().all(|v| v.abs() <= 1e-12 * scale.max(1.0))
}

impl Factorization {
    /// Sparse Cholesky for symmetric positive definite matrices, dense LU
    /// otherwise.
    pub fn new(matrix: &CsrMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidInput("matrix must be square".into()));
        }
        if is_symmetric(matrix) {
            if let Ok(chol) = CscCholesky::factor(&CscMatrix::from(matrix)) {
                return Ok(Factorization::Cholesky(chol));
            }
        }
        if matrix.nrows() > DENSE_LIMIT {
            return Err(Error::SingularMatrix(
                "non-SPD system too large for the dense fallback".into(),
            ));
        }
        let lu = to_dense(matrix).lu();
        if !lu.is_invertible() {
            return Err(Error::SingularMatrix("LU factorization found a zero pivot".into()));
        }
        Ok(Factorization::DenseLu(lu))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        let x = match self {
            Factorization::Cholesky(c) => {
                let sol = c.solve(&b);
                sol.column(0).iter().copied().collect::<Vec<_>>()
            }
            Factorization::DenseLu(lu) => lu
                .solve(&b)
                .ok_or_else(|| Error::SingularMatrix("LU solve failed".into()))?
                .iter()
                .copied()
                .collect(),
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("non-finite solution".into()));
        }
        Ok(x)
    }
}

/// Direct solve of `matrix · x = rhs`.
pub fn solve_sparse(matrix: &CsrMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != matrix.nrows() {
        return Err(Error::InvalidInput("rhs length mismatch".into()));
    }
    Factorization::new(matrix)?.solve(rhs)
}

/// Coordinate text export: one `row col value` line per stored entry.
pub fn write_coordinate<W: Write>(matrix: &CsrMatrix<f64>, mut out: W) -> Result<()> {
    writeln!(out, "# {} {} {}", matrix.nrows(), matrix.ncols(), matrix.nnz())?;
    for (r, c, v) in matrix.triplet_iter() {
        writeln!(out, "{r} {c} {v:.17e}")?;
    }
    Ok(())
}
