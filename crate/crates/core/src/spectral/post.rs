//! Post-processing of computed eigenpairs: the distinguished eigenfunctions,
//! extrema location reports, nodal/level curves, and plot/export helpers.

use super::assemble::{assemble_mass, assemble_stiffness, dirichlet_mask};
use super::eigen::{solve_generalized, EigenOpts, EigenPair};
use super::mesh::Mesh;
use crate::geometry::{point_segment, P2};
use crate::svg::{diverging_color, SvgCanvas};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Eigenvalue summary around one distinguished mode.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub lambdas: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Nodal values of the distinguished eigenfunction, sign-normalized.
    pub phi: Vec<f64>,
    /// Relative gap `(lambda_next - lambda) / lambda` past the distinguished
    /// eigenvalue; a healthy gap is evidence of simplicity.
    pub gap_ratio: f64,
    pub n_dofs: usize,
}

/// Second Neumann eigenfunction of the mesh (all boundary reflecting).
///
/// Sign convention: positive at the node nearest the origin; when the mode is
/// antisymmetric across `x = 0` that value is numerically zero, so the sign
/// is fixed at the node nearest the right tube tip `(2 + r, 0)` instead.
pub fn second_neumann(mesh: &Mesh, opts: &EigenOpts) -> SpectralReport {
    let k = assemble_stiffness(mesh);
    let m = assemble_mass(mesh);
    let no_constraints = vec![false; mesh.nodes.len()];
    let mut o = *opts;
    o.count = o.count.max(4);
    let pairs = solve_generalized(&k, &m, &no_constraints, &o);
    let lambda1 = pairs[0].lambda;
    assert!(
        lambda1.abs() <= 1e-6 * pairs[1].lambda.abs().max(1.0),
        "first Neumann eigenvalue should vanish, got {lambda1}"
    );
    report_for(mesh, &pairs, 1)
}

/// Ground state of the mixed problem: absorbing on `dirichlet_d` edges,
/// reflecting elsewhere. Sign-normalized positive (it has one sign).
pub fn mixed_ground_state(mesh: &Mesh, opts: &EigenOpts) -> SpectralReport {
    let k = assemble_stiffness(mesh);
    let m = assemble_mass(mesh);
    let constrained = dirichlet_mask(mesh);
    assert!(
        constrained.iter().any(|&c| c),
        "mesh has no absorbing boundary edges"
    );
    let pairs = solve_generalized(&k, &m, &constrained, opts);
    report_for(mesh, &pairs, 0)
}

fn report_for(mesh: &Mesh, pairs: &[EigenPair], which: usize) -> SpectralReport {
    let mut phi = pairs[which].vec.clone();
    sign_normalize(mesh, &mut phi);
    let lam = pairs[which].lambda;
    let gap_ratio = if which + 1 < pairs.len() && lam.abs() > 1e-300 {
        (pairs[which + 1].lambda - lam) / lam
    } else {
        f64::NAN
    };
    SpectralReport {
        lambdas: pairs.iter().map(|p| p.lambda).collect(),
        residuals: pairs.iter().map(|p| p.residual).collect(),
        phi,
        gap_ratio,
        n_dofs: mesh.nodes.len(),
    }
}

fn sign_normalize(mesh: &Mesh, phi: &mut [f64]) {
    let amax = phi.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let at_origin = phi[mesh.nearest_node(P2 { x: 0.0, y: 0.0 })];
    let anchor = if at_origin.abs() > 1e-6 * amax {
        at_origin
    } else {
        // antisymmetric across x = 0: anchor instead at the dominant node of
        // the right half, which for the ring is the right tube tip
        let mut best = (0.0f64, 0.0f64);
        for (p, &v) in mesh.nodes.iter().zip(phi.iter()) {
            if p.x > 0.0 && v.abs() > best.0 {
                best = (v.abs(), v);
            }
        }
        best.1
    };
    if anchor < 0.0 {
        for v in phi.iter_mut() {
            *v = -*v;
        }
    }
}

/// Where a nodal function attains its extrema, and by what margin the
/// interior values beat every boundary value.
#[derive(Debug, Clone)]
pub struct ExtremaReport {
    pub max_val: f64,
    pub max_pos: P2,
    pub max_is_boundary_node: bool,
    /// Distance from the argmax node to the nearest boundary edge.
    pub max_boundary_dist: f64,
    pub min_val: f64,
    pub min_pos: P2,
    pub min_is_boundary_node: bool,
    pub min_boundary_dist: f64,
    /// Largest value over boundary nodes.
    pub boundary_max: f64,
    /// Smallest value over boundary nodes.
    pub boundary_min: f64,
    /// `max_val - boundary_max`: positive means the max is interior.
    pub margin_high: f64,
    /// `boundary_min - min_val`: positive means the min is interior.
    pub margin_low: f64,
}

pub fn extrema_report(mesh: &Mesh, vals: &[f64]) -> ExtremaReport {
    assert_eq!(vals.len(), mesh.nodes.len());
    let on_bdry = mesh.boundary_mask();
    let mut imax = 0usize;
    let mut imin = 0usize;
    let mut bmax = f64::NEG_INFINITY;
    let mut bmin = f64::INFINITY;
    for i in 0..vals.len() {
        if vals[i] > vals[imax] {
            imax = i;
        }
        if vals[i] < vals[imin] {
            imin = i;
        }
        if on_bdry[i] {
            bmax = bmax.max(vals[i]);
            bmin = bmin.min(vals[i]);
        }
    }
    let dist_to_boundary = |p: P2| -> f64 {
        let mut d2 = f64::INFINITY;
        for e in &mesh.boundary {
            d2 = d2.min(point_segment(p, mesh.nodes[e.a], mesh.nodes[e.b]).0);
        }
        d2.sqrt()
    };
    ExtremaReport {
        max_val: vals[imax],
        max_pos: mesh.nodes[imax],
        max_is_boundary_node: on_bdry[imax],
        max_boundary_dist: dist_to_boundary(mesh.nodes[imax]),
        min_val: vals[imin],
        min_pos: mesh.nodes[imin],
        min_is_boundary_node: on_bdry[imin],
        min_boundary_dist: dist_to_boundary(mesh.nodes[imin]),
        boundary_max: bmax,
        boundary_min: bmin,
        margin_high: vals[imax] - bmax,
        margin_low: bmin - vals[imin],
    }
}

/// A level set of a P1 function: raw segments (one per crossed triangle)
/// chained into polylines.
#[derive(Debug, Clone)]
pub struct LevelCurve {
    pub level: f64,
    pub segments: Vec<(P2, P2)>,
    pub polylines: Vec<Vec<P2>>,
}

impl LevelCurve {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|(a, b)| a.dist(*b)).sum()
    }
}

/// Marching-triangles extraction of `{ vals = level }`. Edge crossings are
/// computed in a canonical node order so shared edges produce bit-identical
/// points, which makes the chaining exact.
pub fn level_curve(mesh: &Mesh, vals: &[f64], level: f64) -> LevelCurve {
    let cross = |a: usize, b: usize| -> Option<P2> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let (va, vb) = (vals[a] - level, vals[b] - level);
        if va == 0.0 && vb == 0.0 {
            return None; // fully on the level: ignore degenerate edge
        }
        if (va < 0.0) == (vb < 0.0) && va != 0.0 && vb != 0.0 {
            return None;
        }
        let t = va / (va - vb);
        Some(mesh.nodes[a].lerp(mesh.nodes[b], t))
    };
    let mut segments = Vec::new();
    for t in &mesh.tris {
        let mut hits: Vec<P2> = Vec::with_capacity(2);
        for k in 0..3 {
            if let Some(p) = cross(t[k], t[(k + 1) % 3]) {
                if !hits.iter().any(|q| q.x == p.x && q.y == p.y) {
                    hits.push(p);
                }
            }
        }
        if hits.len() == 2 && hits[0].dist2(hits[1]) > 0.0 {
            segments.push((hits[0], hits[1]));
        }
    }

    // chain segments into polylines by exact endpoint identity
    let key = |p: P2| (p.x.to_bits(), p.y.to_bits());
    let mut adj: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segments.iter().enumerate() {
        adj.entry(key(*a)).or_default().push(i);
        adj.entry(key(*b)).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a0, b0) = segments[start];
        let mut line = vec![a0, b0];
        // extend forward from the tail, then backward from the head
        for dir in 0..2 {
            loop {
                let end = if dir == 0 { *line.last().unwrap() } else { line[0] };
                let Some(cands) = adj.get(&key(end)) else { break };
                let mut found = None;
                for &si in cands {
                    if !used[si] {
                        found = Some(si);
                        break;
                    }
                }
                let Some(si) = found else { break };
                used[si] = true;
                let (a, b) = segments[si];
                let next = if key(a) == key(end) { b } else { a };
                if dir == 0 {
                    line.push(next);
                } else {
                    line.insert(0, next);
                }
            }
        }
        polylines.push(line);
    }
    LevelCurve {
        level,
        segments,
        polylines,
    }
}

/// Piecewise-constant gradient per triangle.
pub fn gradient_field(mesh: &Mesh, vals: &[f64]) -> Vec<P2> {
    mesh.tris
        .iter()
        .map(|t| {
            let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
            let area2 = (p[1] - p[0]).cross(p[2] - p[0]);
            let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
            let mut g = P2 { x: 0.0, y: 0.0 };
            for i in 0..3 {
                // grad of hat_i on this triangle is perp(e_i) / (2A)
                g = g + e[i].perp() * (vals[t[i]] / area2);
            }
            g
        })
        .collect()
}

/// Nodal values as `x,y,value` CSV.
pub fn eigenfunction_csv(mesh: &Mesh, vals: &[f64]) -> String {
    let mut s = String::from("x,y,value\n");
    for (p, v) in mesh.nodes.iter().zip(vals) {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, v);
    }
    s
}

/// Render the mesh as SVG; with nodal values, faces get a diverging fill and
/// the zero level set is overlaid.
pub fn mesh_svg(mesh: &Mesh, vals: Option<&[f64]>) -> String {
    let mut lo = P2 {
        x: f64::INFINITY,
        y: f64::INFINITY,
    };
    let mut hi = P2 {
        x: f64::NEG_INFINITY,
        y: f64::NEG_INFINITY,
    };
    for p in &mesh.nodes {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    let mut canvas = SvgCanvas::new((lo.x, lo.y, hi.x, hi.y), 1400.0);
    let amax = vals
        .map(|v| v.iter().fold(0.0f64, |a, &x| a.max(x.abs())))
        .unwrap_or(1.0)
        .max(1e-300);
    let stroke = if mesh.tris.len() < 6000 { "#999" } else { "none" };
    for t in &mesh.tris {
        let ps: Vec<(f64, f64)> = t.iter().map(|&i| (mesh.nodes[i].x, mesh.nodes[i].y)).collect();
        let fill = match vals {
            Some(v) => {
                let avg = (v[t[0]] + v[t[1]] + v[t[2]]) / 3.0;
                diverging_color(avg / amax)
            }
            None => "#e8e8f0".to_string(),
        };
        canvas.polygon(&ps, &fill, stroke);
    }
    for e in &mesh.boundary {
        let (a, b) = (mesh.nodes[e.a], mesh.nodes[e.b]);
        canvas.polyline(
            &[(a.x, a.y), (b.x, b.y)],
            match e.tag.as_str() {
                "dirichlet_d" => "#d62728",
                "left_ell" => "#2ca02c",
                "side_s" => "#1f77b4",
                _ => "#444",
            },
            1.2,
        );
    }
    if let Some(v) = vals {
        let nodal = level_curve(mesh, v, 0.0);
        for line in &nodal.polylines {
            let pts: Vec<(f64, f64)> = line.iter().map(|p| (p.x, p.y)).collect();
            canvas.polyline(&pts, "#000", 1.6);
        }
    }
    canvas.finish()
}
