//! P1 finite-element assembly on triangle meshes: stiffness, consistent
//! mass, and the constrained-node mask for Dirichlet boundary pieces.

use super::mesh::Mesh;
use super::sparse::Csr;
use crate::geometry::EdgeTag;

/// Stiffness matrix `K[i][j] = integral of grad(phi_i) . grad(phi_j)`.
///
/// For a triangle with vertices `p0 p1 p2` and edge vectors `e_i` opposite
/// vertex `i`, the P1 gradients are `perp(e_i) / (2A)`, so the local matrix
/// is `e_i . e_j / (4A)`.
pub fn assemble_stiffness(mesh: &Mesh) -> Csr {
    let mut trip = Vec::with_capacity(mesh.tris.len() * 9);
    for t in &mesh.tris {
        let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
        let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
        let area = 0.5 * e[2].cross(-e[1]);
        debug_assert!(area > 0.0, "triangle must be counterclockwise");
        let scale = 1.0 / (4.0 * area);
        for i in 0..3 {
            for j in 0..3 {
                trip.push((t[i], t[j], e[i].dot(e[j]) * scale));
            }
        }
    }
    Csr::from_triplets(mesh.nodes.len(), &mut trip)
}

/// Consistent mass matrix: `A/6` on the diagonal and `A/12` off-diagonal
/// for each element; row sums integrate the hat functions exactly.
pub fn assemble_mass(mesh: &Mesh) -> Csr {
    let mut trip = Vec::with_capacity(mesh.tris.len() * 9);
    for t in &mesh.tris {
        let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
        let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                trip.push((t[i], t[j], m));
            }
        }
    }
    Csr::from_triplets(mesh.nodes.len(), &mut trip)
}

/// True at nodes lying on an absorbing (Dirichlet) boundary edge; those
/// rows and columns are eliminated before solving.
pub fn dirichlet_mask(mesh: &Mesh) -> Vec<bool> {
    let mut mask = vec![false; mesh.nodes.len()];
    for e in &mesh.boundary {
        if e.tag == EdgeTag::DirichletD {
            mask[e.a] = true;
            mask[e.b] = true;
        }
    }
    mask
}
