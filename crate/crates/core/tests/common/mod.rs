#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;

use exittime::mesh::{BoxDomain, SimplicialMesh};
use exittime::model::SdeModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Checks node and element counts, that element volumes sum to the box
/// volume, and conformity: every facet is shared by two elements unless it
/// lies on the boundary, where it belongs to exactly one.
pub fn mesh_invariants(mesh: &SimplicialMesh) -> Result<(), String> {
    let d = mesh.dim();
    let k = mesh.divisions();
    let nodes: usize = k.iter().map(|&n| n + 1).product();
    let factorial: usize = (1..=d).product();
    let elements = factorial * k.iter().product::<usize>();
    if mesh.num_nodes() != nodes || mesh.num_elements() != elements {
        return Err(format!(
            "counts {} nodes / {} elements, expected {nodes} / {elements}",
            mesh.num_nodes(),
            mesh.num_elements()
        ));
    }
    let volume: f64 = (0..mesh.num_elements()).map(|e| mesh.geometry(e).volume).sum();
    let expected = mesh.domain().volume();
    // Summation error grows with the number of terms.
    let tol = mesh.num_elements() as f64 * f64::EPSILON * expected;
    if (volume - expected).abs() > tol {
        return Err(format!("volumes sum to {volume}, box volume {expected}"));
    }
    if (0..mesh.num_elements()).any(|e| !(mesh.geometry(e).volume > 0.0)) {
        return Err("degenerate element".into());
    }
    let mut facets: HashMap<Vec<usize>, usize> = HashMap::new();
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        for skip in 0..=d {
            let mut f: Vec<usize> = el
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, &n)| n)
                .collect();
            f.sort_unstable();
            *facets.entry(f).or_default() += 1;
        }
    }
    let dom = mesh.domain();
    for (f, count) in &facets {
        // A facet is on the boundary when all its nodes share a box face.
        let on_face = (0..d).any(|axis| {
            [dom.lower()[axis], dom.upper()[axis]]
                .iter()
                .any(|&v| f.iter().all(|&n| (mesh.node(n)[axis] - v).abs() < 1e-12))
        });
        let want = if on_face { 1 } else { 2 };
        if *count != want {
            return Err(format!("facet {f:?} is shared by {count} elements, expected {want}"));
        }
    }
    Ok(())
}

/// Largest relative error between the symbolic `∂a_ij/∂x_j` and a
/// fourth-order central difference of `a_ij`, over `points` random interior
/// points and every entry.
pub fn derivative_error(model: &SdeModel, domain: &BoxDomain, points: usize, seed: u64) -> f64 {
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x: Vec<f64> = (0..d)
            .map(|a| domain.lower()[a] + domain.width(a) * rng.random_range(0.05..0.95))
            .collect();
        for i in 0..d {
            for j in 0..d {
                let a = &model.diffusion()[i][j];
                let h = 1e-3 * domain.width(j);
                let at = |s: f64| {
                    let mut y = x.clone();
                    y[j] += s * h;
                    a.evaluate(&y).unwrap()
                };
                let fd = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
                let exact = model.derivatives()[i][j].evaluate(&x).unwrap();
                // The stencil carries roundoff of about eps·|a|/h, so slopes
                // below 1e-4·|a|/width are compared absolutely at that level.
                let floor = 1e-4 * at(0.0).abs().max(at(2.0).abs()) / domain.width(j);
                let err = (fd - exact).abs() / exact.abs().max(floor).max(f64::MIN_POSITIVE);
                worst = worst.max(err);
            }
        }
    }
    worst
}

/// Mean exit time of Brownian motion (A = I) at the centre of the unit
/// square, from the eigenfunction series truncated at `m, n <= max`.
pub fn unit_square_series(max: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let mut sum = 0.0;
    for m in (1..=max).step_by(2) {
        for n in (1..=max).step_by(2) {
            let (mf, nf) = (m as f64, n as f64);
            let s = (mf * pi / 2.0).sin() * (nf * pi / 2.0).sin();
            sum += 32.0 * s / (pi.powi(4) * mf * nf * (mf * mf + nf * nf));
        }
    }
    sum
}
