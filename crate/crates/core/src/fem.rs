//! Piecewise-linear finite element assembly of the exit-time problems.
//!
//! For test function `w` and trial function `u` the bilinear form is
//!
//! ```text
//! G(u, w) = ½ Σ a_ij ∂_i u ∂_j w + ½ Σ w ∂_i u ∂a_ij/∂x_j − Σ b_i w ∂_i u
//! ```
//!
//! integrated over the domain, and the load is `F(w) = ∫ w`. Coefficients are
//! frozen at each element centroid; with linear basis functions every
//! gradient is constant on an element and `∫_K φ = |K|/(d+1)`.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::EvalError;
use crate::linalg::CsrMatrix;
use crate::mesh::SimplicialMesh;
use crate::model::SdeModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("model has {model} variables but the mesh is {mesh}-dimensional")]
    DimensionMismatch { model: usize, mesh: usize },
    #[error("coefficient evaluation failed on element {element} (centroid {centroid:?}): {source}")]
    Coefficient {
        element: usize,
        centroid: Vec<f64>,
        source: EvalError,
    },
    #[error("time step must be positive and finite (got {0})")]
    InvalidStep(f64),
}

/// Which groups of terms of `G` to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormTerms {
    /// `½ Σ a_ij ∂_i u ∂_j w`.
    pub diffusion: bool,
    /// `½ Σ w ∂_i u ∂a_ij/∂x_j − Σ b_i w ∂_i u`.
    pub first_order: bool,
}

impl FormTerms {
    pub const ALL: FormTerms = FormTerms {
        diffusion: true,
        first_order: true,
    };
}

/// A linear system together with the boundary node set.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub boundary: Vec<bool>,
}

/// Matrices of one implicit Euler step: `step · u^{m+1} = M · u^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicStep {
    /// `η K + M` with boundary rows replaced by identity rows.
    pub step: CsrMatrix,
    /// Consistent mass matrix, unconstrained.
    pub mass: CsrMatrix,
    pub boundary: Vec<bool>,
}

impl ParabolicStep {
    /// Right-hand side `M u` with zero Dirichlet data.
    pub fn rhs(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.mass.spmv(u);
        for (ri, &b) in r.iter_mut().zip(&self.boundary) {
            if b {
                *ri = 0.0;
            }
        }
        r
    }
}

/// Node-to-node sparsity of the mesh: `i` and `j` couple iff they share an
/// element.
pub fn sparsity_pattern(mesh: &SimplicialMesh) -> CsrMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let verts = mesh.element(e);
        for &a in verts {
            rows[a].extend_from_slice(verts);
        }
    }
    rows.par_iter_mut().for_each(|r| {
        r.sort_unstable();
        r.dedup();
    });
    CsrMatrix::from_pattern(&rows)
}

type Local = [[f64; 4]; 4];

fn check_dims(mesh: &SimplicialMesh, model: &SdeModel) -> Result<(), FemError> {
    if mesh.dim() != model.dim() {
        return Err(FemError::DimensionMismatch {
            model: model.dim(),
            mesh: mesh.dim(),
        });
    }
    Ok(())
}

fn local_form(mesh: &SimplicialMesh, model: &SdeModel, e: usize, terms: FormTerms) -> Result<Local, FemError> {
    let d = mesh.dim();
    let g = mesh.geometry(e);
    let c = model
        .coefficients_at(&g.centroid[..d])
        .map_err(|source| FemError::Coefficient {
            element: e,
            centroid: g.centroid[..d].to_vec(),
            source,
        })?;
    let w_int = g.volume / (d + 1) as f64;
    // Coefficient of w ∂_i u in the first-order terms.
    let mut first = [0.0; 3];
    for i in 0..d {
        first[i] = 0.5 * c.divergence[i] - c.drift[i];
    }
    let mut local = [[0.0; 4]; 4];
    for a in 0..=d {
        let ga = &g.gradients[a];
        for b in 0..=d {
            let gb = &g.gradients[b];
            let mut v = 0.0;
            if terms.diffusion {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += c.diffusion[i][j] * gb[i] * ga[j];
                    }
                }
                v += 0.5 * g.volume * s;
            }
            if terms.first_order {
                let s: f64 = (0..d).map(|i| first[i] * gb[i]).sum();
                v += w_int * s;
            }
            // Row: test function a; column: trial function b.
            local[a][b] = v;
        }
    }
    Ok(local)
}

fn scatter(mesh: &SimplicialMesh, pattern: &CsrMatrix, locals: &[Local]) -> CsrMatrix {
    let d = mesh.dim();
    let mut m = pattern.clone();
    for (e, local) in locals.iter().enumerate() {
        let verts = mesh.element(e);
        for a in 0..=d {
            for b in 0..=d {
                m.add_to(verts[a], verts[b], local[a][b]);
            }
        }
    }
    m
}

/// Assembles the matrix of `G` restricted to `terms`, without boundary
/// conditions. Element contributions are computed in parallel and summed in
/// element order, so the result does not depend on the thread count.
pub fn assemble_form(mesh: &SimplicialMesh, model: &SdeModel, terms: FormTerms) -> Result<CsrMatrix, FemError> {
    check_dims(mesh, model)?;
    let locals: Vec<Result<Local, FemError>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| local_form(mesh, model, e, terms))
        .collect();
    let locals = locals.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(scatter(mesh, &sparsity_pattern(mesh), &locals))
}

/// `∫ φ_a` for every node: each element gives `|K|/(d+1)` to its vertices.
pub fn load_vector(mesh: &SimplicialMesh) -> Vec<f64> {
    let d = mesh.dim();
    let mut rhs = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let share = mesh.geometry(e).volume / (d + 1) as f64;
        for &v in mesh.element(e) {
            rhs[v] += share;
        }
    }
    rhs
}

/// Consistent mass matrix `∫ φ_a φ_b`.
pub fn mass_matrix(mesh: &SimplicialMesh) -> CsrMatrix {
    let d = mesh.dim();
    let denom = ((d + 1) * (d + 2)) as f64;
    let locals: Vec<Local> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let vol = mesh.geometry(e).volume;
            let mut l = [[0.0; 4]; 4];
            for (a, row) in l.iter_mut().enumerate().take(d + 1) {
                for (b, v) in row.iter_mut().enumerate().take(d + 1) {
                    *v = vol * if a == b { 2.0 } else { 1.0 } / denom;
                }
            }
            l
        })
        .collect();
    scatter(mesh, &sparsity_pattern(mesh), &locals)
}

/// The elliptic system `G(u, w) = F(w)` before boundary conditions.
pub fn assemble_elliptic(mesh: &SimplicialMesh, model: &SdeModel) -> Result<AssembledSystem, FemError> {
    Ok(AssembledSystem {
        matrix: assemble_form(mesh, model, FormTerms::ALL)?,
        rhs: load_vector(mesh),
        boundary: mesh.boundary_mask().to_vec(),
    })
}

impl AssembledSystem {
    /// Replaces each boundary row by an identity row with right-hand side
    /// `g`. Interior rows keep their couplings to boundary columns.
    pub fn apply_dirichlet(self, g: f64) -> AssembledSystem {
        let matrix = self.matrix.with_identity_rows(&self.boundary);
        let mut rhs = self.rhs;
        for (r, &b) in rhs.iter_mut().zip(&self.boundary) {
            if b {
                *r = g;
            }
        }
        AssembledSystem {
            matrix,
            rhs,
            boundary: self.boundary,
        }
    }
}

/// Builds the implicit Euler step for `∂v/∂t = Lv` with zero boundary data.
pub fn assemble_parabolic_step(mesh: &SimplicialMesh, model: &SdeModel, eta: f64) -> Result<ParabolicStep, FemError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(FemError::InvalidStep(eta));
    }
    let form = assemble_form(mesh, model, FormTerms::ALL)?;
    let mass = mass_matrix(mesh);
    let step = form
        .linear_combination(eta, &mass, 1.0)
        .with_identity_rows(mesh.boundary_mask());
    Ok(ParabolicStep {
        step,
        mass,
        boundary: mesh.boundary_mask().to_vec(),
    })
}
