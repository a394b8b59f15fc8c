//! Structured simplicial meshes of axis-aligned boxes.
//!
//! Every grid cell is split by the Kuhn (sorted-coordinate) rule: the simplex
//! associated with an axis permutation `π` holds the points of the cell whose
//! local coordinates satisfy `t[π0] >= t[π1] >= ...`. Because every cell uses
//! the same rule, neighbouring cells share whole facets, in 2D and in 3D.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error(
        "domain must be 2- or 3-dimensional with lower < upper on every axis (got lower {lower:?}, upper {upper:?})"
    )]
    InvalidDomain { lower: Vec<f64>, upper: Vec<f64> },
    #[error("at least one division per axis is required (got {0:?})")]
    TooFewDivisions(Vec<usize>),
    #[error("division count has {found} entries for a {expected}-dimensional domain")]
    DivisionsMismatch { expected: usize, found: usize },
    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),
}

/// The box `(lower_0, upper_0) × ... × (lower_{d-1}, upper_{d-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxBounds", into = "BoxBounds")]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxBounds> for BoxDomain {
    type Error = MeshError;
    fn try_from(b: BoxBounds) -> Result<Self, MeshError> {
        BoxDomain::new(b.lower, b.upper)
    }
}

impl From<BoxDomain> for BoxBounds {
    fn from(d: BoxDomain) -> Self {
        BoxBounds {
            lower: d.lower,
            upper: d.upper,
        }
    }
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<BoxDomain, MeshError> {
        let ok = lower.len() == upper.len()
            && (2..=3).contains(&lower.len())
            && lower
                .iter()
                .zip(&upper)
                .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi);
        if !ok {
            return Err(MeshError::InvalidDomain { lower, upper });
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Closed box membership.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Open box membership; points on a face are not interior.
    pub fn is_interior(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo < *x && *x < *hi)
    }

    /// Same box scaled by `factor` about `center`.
    pub fn scaled_about(&self, center: &[f64], factor: f64) -> Result<BoxDomain, MeshError> {
        let lower = self
            .lower
            .iter()
            .zip(center)
            .map(|(lo, c)| c + factor * (lo - c))
            .collect();
        let upper = self
            .upper
            .iter()
            .zip(center)
            .map(|(hi, c)| c + factor * (hi - c))
            .collect();
        BoxDomain::new(lower, upper)
    }
}

/// Axis permutations of the Kuhn simplices with their parity.
const KUHN_2D: [([usize; 3], bool); 2] = [([0, 1, 0], false), ([1, 0, 0], true)];
const KUHN_3D: [([usize; 3], bool); 6] = [
    ([0, 1, 2], false),
    ([0, 2, 1], true),
    ([1, 0, 2], true),
    ([1, 2, 0], false),
    ([2, 0, 1], false),
    ([2, 1, 0], true),
];

fn kuhn_table(dim: usize) -> &'static [([usize; 3], bool)] {
    if dim == 2 {
        &KUHN_2D
    } else {
        &KUHN_3D
    }
}

/// Element containing a point, with the point's barycentric coordinates in
/// the element's stored vertex order (only the first `dim + 1` are used).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub element: usize,
    pub barycentric: [f64; 4],
}

/// Volume and constant basis gradients of one linear simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub volume: f64,
    pub centroid: [f64; 3],
    /// Gradient of the barycentric coordinate of each local vertex.
    pub gradients: [[f64; 3]; 4],
}

/// Triangles (2D) or tetrahedra (3D) over a uniform grid on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    domain: BoxDomain,
    divisions: Vec<usize>,
    coords: Vec<f64>,
    elements: Vec<usize>,
    boundary: Vec<bool>,
}

impl SimplicialMesh {
    /// Uniform mesh with `k` cells along every axis.
    pub fn uniform(domain: &BoxDomain, k: usize) -> Result<SimplicialMesh, MeshError> {
        Self::new(domain, &vec![k; domain.dim()])
    }

    /// Mesh with `divisions[a]` cells along axis `a`.
    pub fn new(domain: &BoxDomain, divisions: &[usize]) -> Result<SimplicialMesh, MeshError> {
        let dim = domain.dim();
        if divisions.len() != dim {
            return Err(MeshError::DivisionsMismatch {
                expected: dim,
                found: divisions.len(),
            });
        }
        if divisions.iter().any(|&k| k < 1) {
            return Err(MeshError::TooFewDivisions(divisions.to_vec()));
        }
        let npts: Vec<usize> = divisions.iter().map(|k| k + 1).collect();
        let n_nodes: usize = npts.iter().product();

        let axis_coord = |axis: usize, i: usize| -> f64 {
            let k = divisions[axis];
            if i == k {
                domain.upper[axis]
            } else {
                domain.lower[axis] + domain.width(axis) * (i as f64) / (k as f64)
            }
        };

        let mut coords = Vec::with_capacity(n_nodes * dim);
        let mut boundary = Vec::with_capacity(n_nodes);
        for node in 0..n_nodes {
            let mut rest = node;
            let mut on_face = false;
            for (axis, &n) in npts.iter().enumerate() {
                let i = rest % n;
                rest /= n;
                coords.push(axis_coord(axis, i));
                on_face |= i == 0 || i == divisions[axis];
            }
            boundary.push(on_face);
        }

        let table = kuhn_table(dim);
        let n_cells: usize = divisions.iter().product();
        let mut elements = Vec::with_capacity(n_cells * table.len() * (dim + 1));
        let node_index = |idx: &[usize]| -> usize {
            let mut stride = 1;
            let mut n = 0;
            for (axis, &i) in idx.iter().enumerate() {
                n += i * stride;
                stride *= npts[axis];
            }
            n
        };
        for cell in 0..n_cells {
            let mut base = [0usize; 3];
            let mut rest = cell;
            for (axis, k) in divisions.iter().enumerate() {
                base[axis] = rest % k;
                rest /= k;
            }
            for (perm, odd) in table {
                let mut idx = base;
                let mut verts = [0usize; 4];
                verts[0] = node_index(&idx[..dim]);
                for m in 0..dim {
                    idx[perm[m]] += 1;
                    verts[m + 1] = node_index(&idx[..dim]);
                }
                if *odd {
                    verts.swap(dim - 1, dim);
                }
                elements.extend_from_slice(&verts[..=dim]);
            }
        }

        Ok(SimplicialMesh {
            domain: domain.clone(),
            divisions: divisions.to_vec(),
            coords,
            elements,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn divisions(&self) -> &[usize] {
        &self.divisions
    }

    pub fn num_nodes(&self) -> usize {
        self.boundary.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / (self.dim() + 1)
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let n = self.dim() + 1;
        &self.elements[e * n..(e + 1) * n]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Grid spacing along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.domain.width(axis) / self.divisions[axis] as f64
    }

    pub fn geometry(&self, e: usize) -> ElementGeometry {
        let d = self.dim();
        let verts = self.element(e);
        let v0 = self.node(verts[0]);
        let mut centroid = [0.0; 3];
        for &v in verts {
            for (c, x) in centroid.iter_mut().zip(self.node(v)) {
                *c += x;
            }
        }
        for c in centroid.iter_mut().take(d) {
            *c /= (d + 1) as f64;
        }
        // Columns of the Jacobian are the edge vectors from vertex 0.
        let mut jac = [[0.0; 3]; 3];
        for m in 0..d {
            let vm = self.node(verts[m + 1]);
            for r in 0..d {
                jac[r][m] = vm[r] - v0[r];
            }
        }
        let mut gradients = [[0.0; 3]; 4];
        let volume;
        if d == 2 {
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            volume = 0.5 * det;
            // Rows of J^{-1}.
            gradients[1] = [jac[1][1] / det, -jac[0][1] / det, 0.0];
            gradients[2] = [-jac[1][0] / det, jac[0][0] / det, 0.0];
        } else {
            let j = &jac;
            let cof = |r: usize, c: usize| -> f64 {
                let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
                let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
                j[r1][c1] * j[r2][c2] - j[r1][c2] * j[r2][c1]
            };
            let det = j[0][0] * cof(0, 0) + j[0][1] * cof(0, 1) + j[0][2] * cof(0, 2);
            volume = det / 6.0;
            // inv[m][r] = cof(r, m) / det.
            for m in 0..3 {
                for r in 0..3 {
                    gradients[m + 1][r] = cof(r, m) / det;
                }
            }
        }
        for r in 0..3 {
            gradients[0][r] = -(1..=d).map(|m| gradients[m][r]).sum::<f64>();
        }
        ElementGeometry {
            volume,
            centroid,
            gradients,
        }
    }

    /// Finds the element containing `point` by cell arithmetic.
    pub fn locate(&self, point: &[f64]) -> Result<Location, MeshError> {
        let d = self.dim();
        if !self.domain.contains(point) {
            return Err(MeshError::OutsideDomain(point.to_vec()));
        }
        let mut cell = [0usize; 3];
        let mut local = [0.0; 3];
        for axis in 0..d {
            let k = self.divisions[axis];
            let t = (point[axis] - self.domain.lower[axis]) / self.spacing(axis);
            let c = (t.floor().max(0.0) as usize).min(k - 1);
            cell[axis] = c;
            local[axis] = (t - c as f64).clamp(0.0, 1.0);
        }
        // Axis order by decreasing local coordinate selects the simplex.
        let mut order = [0usize, 1, 2];
        order[..d].sort_by(|&a, &b| local[b].total_cmp(&local[a]).then(a.cmp(&b)));
        let table = kuhn_table(d);
        let which = table
            .iter()
            .position(|(perm, _)| perm[..d] == order[..d])
            .expect("every ordering is a Kuhn permutation");
        let mut bary = [0.0; 4];
        bary[0] = 1.0 - local[order[0]];
        for m in 1..d {
            bary[m] = local[order[m - 1]] - local[order[m]];
        }
        bary[d] = local[order[d - 1]];
        if table[which].1 {
            bary.swap(d - 1, d);
        }
        let mut cell_index = 0;
        let mut stride = 1;
        for axis in 0..d {
            cell_index += cell[axis] * stride;
            stride *= self.divisions[axis];
        }
        Ok(Location {
            element: cell_index * table.len() + which,
            barycentric: bary,
        })
    }

    /// Indices of grid nodes whose `axis` coordinate is within `eps` of
    /// `value`.
    pub fn nodes_near_plane(&self, axis: usize, value: f64, eps: f64) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| (self.node(i)[axis] - value).abs() < eps)
            .collect()
    }

    /// Writes the node table then the element table as whitespace-separated
    /// text.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# nodes {} dim {}", self.num_nodes(), self.dim())?;
        for i in 0..self.num_nodes() {
            let row: Vec<String> = self.node(i).iter().map(|x| x.to_string()).collect();
            writeln!(out, "{} {}", row.join(" "), u8::from(self.boundary[i]))?;
        }
        writeln!(out, "# elements {}", self.num_elements())?;
        for e in 0..self.num_elements() {
            let row: Vec<String> = self.element(e).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}
