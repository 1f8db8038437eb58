use super::*;
use crate::geometry::{
    build_quarter, DomainParams, DomainSpec, EdgeTag, RegionId, P2,
};
use std::f64::consts::PI;

fn p(x: f64, y: f64) -> P2 {
    P2 { x, y }
}

/// Axis-aligned rectangle with all-reflecting walls, optionally absorbing on
/// the left edge.
fn rect_spec(l: f64, h: f64, absorb_left: bool) -> DomainSpec {
    let pts = vec![p(0.0, 0.0), p(l, 0.0), p(l, h), p(0.0, h)];
    let left = if absorb_left {
        EdgeTag::DirichletD
    } else {
        EdgeTag::NeumannOther
    };
    let tags = vec![
        EdgeTag::NeumannOther,
        EdgeTag::NeumannOther,
        EdgeTag::NeumannOther,
        left,
    ];
    DomainSpec::from_loops(RegionId::Generic, None, vec![(pts, tags)]).unwrap()
}

/// Regular n-gon inscribed in the unit circle.
fn ngon_spec(n: usize) -> DomainSpec {
    let pts: Vec<P2> = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            p(t.cos(), t.sin())
        })
        .collect();
    let tags = vec![EdgeTag::NeumannOther; n];
    DomainSpec::from_loops(RegionId::Generic, None, vec![(pts, tags)]).unwrap()
}

// --- independent oracle: Bessel functions by power series -----------------

fn bessel_j0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..40 {
        term *= -q / ((k * k) as f64);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

fn bessel_j1(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..40 {
        term *= -q / ((k * (k + 1)) as f64);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    0.5 * x * sum
}

/// Second Neumann eigenvalue of the unit disk: the square of the first
/// positive zero of J1'(x) = J0(x) - J1(x)/x, found by bisection.
fn disk_lambda2_oracle() -> f64 {
    let f = |x: f64| bessel_j0(x) - bessel_j1(x) / x;
    let (mut a, mut b) = (1.2f64, 2.5f64);
    assert!(f(a) > 0.0 && f(b) < 0.0);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let z = 0.5 * (a + b);
    z * z
}

#[test]
fn bessel_oracle_matches_tabulated_roots() {
    // first zero of J0 and first maximum of J1, to published precision
    let f = |x: f64| bessel_j0(x);
    let (mut a, mut b) = (2.0f64, 3.0f64);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    assert!((0.5 * (a + b) - 2.404825557695773).abs() < 1e-9);
    assert!((disk_lambda2_oracle().sqrt() - 1.8411837813406593).abs() < 1e-9);
}

// --- meshing ---------------------------------------------------------------

#[test]
fn rectangle_mesh_quality_and_area() {
    let spec = rect_spec(2.0, 1.0, false);
    let mesh = triangulate(&spec, &MeshOptions::new(0.1)).unwrap();
    assert!((mesh.area() - 2.0).abs() < 1e-9);
    assert!(mesh.min_angle_deg() >= 29.5, "min angle {}", mesh.min_angle_deg());
    assert!(mesh.h_max() <= 0.25);
    // Euler characteristic of a disk-like region: V - E + F = 1
    let b = mesh.boundary.len();
    let e = (3 * mesh.n_tris() + b) / 2;
    assert_eq!(mesh.n_nodes() as i64 - e as i64 + mesh.n_tris() as i64, 1);
    // all triangles counterclockwise
    for t in &mesh.tris {
        let (a, b, c) = (mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]);
        assert!((b - a).cross(c - a) > 0.0);
    }
}

#[test]
fn quarter_mesh_resolves_the_tube() {
    let params = DomainParams::new(0.1, 0.01);
    let spec = build_quarter(&params).unwrap();
    let mesh = triangulate(&spec, &MeshOptions::new(0.05)).unwrap();
    assert!((mesh.area() - spec.area()).abs() < 1e-9 * spec.area());
    assert!(mesh.min_angle_deg() >= 29.5);
    // transversal across the tube near the top of the arc: at least three
    // distinct triangles between the walls
    let loc = mesh.locator();
    let mut tris_hit = std::collections::HashSet::new();
    for i in -8i32..=8 {
        let y = 0.0012 * i as f64; // spans most of [-0.01, 0.01] at x = 2
        if let Some((ti, _)) = loc.locate(&mesh, p(2.0, y)) {
            tris_hit.insert(ti);
        }
    }
    assert!(tris_hit.len() >= 3, "tube transversal hits {}", tris_hit.len());
    // boundary tags survive: the cut is present and short
    let cut_len: f64 = mesh
        .boundary
        .iter()
        .filter(|e| e.tag == EdgeTag::DirichletD)
        .map(|e| mesh.nodes[e.a].dist(mesh.nodes[e.b]))
        .sum();
    assert!((cut_len - 0.02).abs() < 1e-9);
}

#[test]
fn ring_mesh_symmetry_maps_are_exact() {
    let params = DomainParams::new(0.1, 0.01);
    let mesh = symmetric_ring_mesh(&params, &MeshOptions::new(0.08)).unwrap();
    let sx = mesh.sym_x.as_ref().unwrap();
    let sy = mesh.sym_y.as_ref().unwrap();
    for i in 0..mesh.n_nodes() {
        assert_eq!(sx[sx[i]], i);
        assert_eq!(sy[sy[i]], i);
        assert_eq!(sx[sy[i]], sy[sx[i]]);
        let q = mesh.nodes[i];
        let qx = mesh.nodes[sx[i]];
        let qy = mesh.nodes[sy[i]];
        // negation is exact in floating point, so the x-mirror is bit-true;
        // y -> -2 - y is exact only one way round, hence the 1-ulp slack
        assert_eq!(qx.x + 0.0, 0.0 - q.x + 0.0);
        assert_eq!(qx.y, q.y);
        assert_eq!(qy.x, q.x);
        assert!((qy.y - (-2.0 - q.y)).abs() <= 1e-15 * (2.0 + q.y.abs()));
    }
    for t in &mesh.tris {
        let (a, b, c) = (mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]);
        assert!((b - a).cross(c - a) > 0.0, "reflected triangle flipped");
    }
    // annulus topology: V - E + F = 0, and the boundary forms closed loops
    let b = mesh.boundary.len();
    let e = (3 * mesh.n_tris() + b) / 2;
    assert_eq!(mesh.n_nodes() as i64 - e as i64 + mesh.n_tris() as i64, 0);
    let mut deg = vec![0usize; mesh.n_nodes()];
    for e in &mesh.boundary {
        assert_eq!(e.tag, EdgeTag::NeumannOther);
        deg[e.a] += 1;
        deg[e.b] += 1;
    }
    for (i, &d) in deg.iter().enumerate() {
        assert!(d == 0 || d == 2, "node {i} has boundary degree {d}");
    }
    // quarter area times four
    let quarter = build_quarter(&params).unwrap();
    assert!((mesh.area() - 4.0 * quarter.area()).abs() < 1e-8);
}

#[test]
fn uniform_refinement_preserves_structure() {
    let params = DomainParams::new(0.1, 0.01);
    let coarse = symmetric_ring_mesh(&params, &MeshOptions::new(0.1)).unwrap();
    let fine = coarse.refine_uniform();
    assert_eq!(fine.n_tris(), 4 * coarse.n_tris());
    assert!((fine.area() - coarse.area()).abs() < 1e-10);
    assert_eq!(fine.boundary.len(), 2 * coarse.boundary.len());
    // angles unchanged by similarity
    assert!((fine.min_angle_deg() - coarse.min_angle_deg()).abs() < 1e-9);
    let sx = fine.sym_x.as_ref().unwrap();
    for i in 0..fine.n_nodes() {
        assert_eq!(sx[sx[i]], i);
        assert_eq!(fine.nodes[sx[i]].x + 0.0, 0.0 - fine.nodes[i].x + 0.0);
        assert_eq!(fine.nodes[sx[i]].y, fine.nodes[i].y);
    }
}

#[test]
fn mesh_export_import_round_trip() {
    let params = DomainParams::new(0.1, 0.01);
    let mesh = symmetric_ring_mesh(&params, &MeshOptions::new(0.12)).unwrap();
    let text = mesh.export();
    let back = import_mesh(&text).unwrap();
    assert_eq!(back.n_nodes(), mesh.n_nodes());
    assert_eq!(back.tris, mesh.tris);
    for (a, b) in mesh.nodes.iter().zip(&back.nodes) {
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());
    }
    assert_eq!(back.boundary, mesh.boundary);
    assert_eq!(back.sym_x, mesh.sym_x);
    assert_eq!(back.sym_y, mesh.sym_y);
}

#[test]
fn import_rejects_malformed_meshes() {
    assert!(import_mesh("nonsense").is_err());
    assert!(import_mesh("hotspots-mesh v1\nv 0 0\nt 0 1 2\n").is_err());
    assert!(import_mesh("hotspots-mesh v1\nq 1 2\n").is_err());
}

#[test]
fn locator_interpolates_linear_functions_exactly() {
    let spec = rect_spec(2.0, 1.0, false);
    let mesh = triangulate(&spec, &MeshOptions::new(0.2)).unwrap();
    let vals: Vec<f64> = mesh.nodes.iter().map(|q| 2.0 * q.x + 3.0 * q.y - 1.0).collect();
    let loc = mesh.locator();
    for i in 0..30 {
        for j in 0..15 {
            let q = p(2.0 * (i as f64 + 0.31) / 30.0, (j as f64 + 0.47) / 15.0);
            let v = loc.value_at(&mesh, &vals, q).expect("inside");
            assert!((v - (2.0 * q.x + 3.0 * q.y - 1.0)).abs() < 1e-12);
        }
    }
    assert!(loc.value_at(&mesh, &vals, p(2.5, 0.5)).is_none());
}

// --- assembly --------------------------------------------------------------

#[test]
fn stiffness_annihilates_constants_and_mass_sums_to_area() {
    let params = DomainParams::new(0.1, 0.01);
    let spec = build_quarter(&params).unwrap();
    let mesh = triangulate(&spec, &MeshOptions::new(0.08)).unwrap();
    let k = assemble_stiffness(&mesh);
    let m = assemble_mass(&mesh);
    let ones = vec![1.0; mesh.n_nodes()];
    let mut k1 = vec![0.0; mesh.n_nodes()];
    k.matvec(&ones, &mut k1);
    let scale = (0..k.n).map(|i| k.get(i, i)).fold(0.0f64, f64::max);
    for v in &k1 {
        assert!(v.abs() <= 1e-12 * scale);
    }
    let mut m1 = vec![0.0; mesh.n_nodes()];
    m.matvec(&ones, &mut m1);
    let total: f64 = m1.iter().sum();
    assert!((total - mesh.area()).abs() < 1e-12 * mesh.area().max(1.0));
    // symmetry is exact because both (i,j) and (j,i) sum identical terms
    for i in (0..mesh.n_nodes()).step_by(97) {
        for j in (0..mesh.n_nodes()).step_by(101) {
            assert_eq!(k.get(i, j).to_bits(), k.get(j, i).to_bits());
        }
    }
}

#[test]
fn dirichlet_mask_marks_exactly_the_cut() {
    let params = DomainParams::new(0.1, 0.01);
    let spec = build_quarter(&params).unwrap();
    let mesh = triangulate(&spec, &MeshOptions::new(0.08)).unwrap();
    let mask = dirichlet_mask(&mesh);
    let n_marked = mask.iter().filter(|&&b| b).count();
    assert!(n_marked >= 2);
    for (i, &on) in mask.iter().enumerate() {
        if on {
            let q = mesh.nodes[i];
            assert!((q.y + 1.0).abs() < 1e-9, "cut node off the line: {q:?}");
            assert!((q.x - 3.0).abs() <= 0.0100001);
        }
    }
}

// --- eigensolves against closed forms --------------------------------------

#[test]
fn rectangle_neumann_spectrum_matches_separation_of_variables() {
    let spec = rect_spec(2.0, 1.0, false);
    let mesh = triangulate(&spec, &MeshOptions::new(0.07)).unwrap();
    let rep = second_neumann(&mesh, &EigenOpts::default());
    let exact2 = (PI / 2.0) * (PI / 2.0);
    assert!(rep.lambdas[0].abs() < 1e-8);
    assert!(
        (rep.lambdas[1] - exact2).abs() < 0.01 * exact2,
        "lambda2 {} vs {}",
        rep.lambdas[1],
        exact2
    );
    // the next pair is the degenerate (pi)^2 level
    let exact34 = PI * PI;
    assert!((rep.lambdas[2] - exact34).abs() < 0.02 * exact34);
    assert!((rep.lambdas[3] - exact34).abs() < 0.02 * exact34);
    for r in &rep.residuals {
        assert!(*r <= 1e-9);
    }
    // discrete Rayleigh quotients overshoot: lambda_h >= lambda
    assert!(rep.lambdas[1] >= exact2 - 1e-9);
    // mode shape: cos(pi x / 2), positive near x=0, negative near x=2
    let loc = mesh.locator();
    let at = |x: f64, y: f64| loc.value_at(&mesh, &rep.phi, p(x, y)).unwrap();
    assert!(at(0.05, 0.5) > 0.0);
    assert!(at(1.95, 0.5) < 0.0);
    assert!(at(0.05, 0.5) > at(0.7, 0.5));
}

#[test]
fn polygonal_disk_second_mode_matches_bessel_oracle() {
    let spec = ngon_spec(256);
    let mesh = triangulate(&spec, &MeshOptions::new(0.09)).unwrap();
    let rep = second_neumann(&mesh, &EigenOpts::default());
    let exact = disk_lambda2_oracle();
    // the level is double (cos/sin): both Ritz values must straddle it
    assert!(
        (rep.lambdas[1] - exact).abs() < 0.015 * exact,
        "lambda2 {} vs {}",
        rep.lambdas[1],
        exact
    );
    assert!((rep.lambdas[2] - exact).abs() < 0.015 * exact);
    assert!((rep.lambdas[2] - rep.lambdas[1]).abs() < 0.01 * exact);
}

#[test]
fn mixed_rectangle_ground_state_matches_closed_form() {
    let l = 1.5;
    let spec = rect_spec(l, 1.0, true);
    let mesh = triangulate(&spec, &MeshOptions::new(0.07)).unwrap();
    let opts = EigenOpts {
        count: 2,
        ..EigenOpts::default()
    };
    let rep = mixed_ground_state(&mesh, &opts);
    let exact = (PI / (2.0 * l)) * (PI / (2.0 * l));
    assert!(
        (rep.lambdas[0] - exact).abs() < 0.01 * exact,
        "lambda1 {} vs {}",
        rep.lambdas[0],
        exact
    );
    // ground state: one sign, zero on the absorbing wall, increasing off it
    let amax = rep.phi.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    for (q, &v) in mesh.nodes.iter().zip(&rep.phi) {
        assert!(v >= -1e-9 * amax);
        if q.x == 0.0 {
            assert_eq!(v, 0.0);
        }
    }
    let loc = mesh.locator();
    let at = |x: f64| loc.value_at(&mesh, &rep.phi, p(x, 0.5)).unwrap();
    assert!(at(1.4) > at(0.7) && at(0.7) > at(0.1));
}

#[test]
fn refinement_decreases_rayleigh_quotients_monotonically() {
    let spec = rect_spec(2.0, 1.0, false);
    let m0 = triangulate(&spec, &MeshOptions::new(0.3)).unwrap();
    let m1 = m0.refine_uniform();
    let m2 = m1.refine_uniform();
    let opts = EigenOpts::default();
    let l0 = second_neumann(&m0, &opts).lambdas[1];
    let l1 = second_neumann(&m1, &opts).lambdas[1];
    let l2 = second_neumann(&m2, &opts).lambdas[1];
    let exact = (PI / 2.0) * (PI / 2.0);
    // nested P1 spaces: the discrete eigenvalue can only go down
    assert!(l0 >= l1 - 1e-10 && l1 >= l2 - 1e-10, "{l0} {l1} {l2}");
    assert!(l2 >= exact - 1e-9);
    // and the error should shrink by roughly 4x per halving
    let r = (l0 - exact) / (l1 - exact).max(1e-300);
    assert!(r > 2.5, "first contraction ratio {r}");
}

// --- post-processing -------------------------------------------------------

#[test]
fn extrema_report_flags_interior_peak() {
    let spec = rect_spec(2.0, 1.0, false);
    let mesh = triangulate(&spec, &MeshOptions::new(0.1)).unwrap();
    // bump centered inside: max interior, min on the boundary corner
    let vals: Vec<f64> = mesh
        .nodes
        .iter()
        .map(|q| (-((q.x - 1.0).powi(2) + (q.y - 0.5).powi(2)) * 8.0).exp())
        .collect();
    let rep = extrema_report(&mesh, &vals);
    assert!(!rep.max_is_boundary_node);
    assert!(rep.max_boundary_dist > 0.2);
    assert!(rep.margin_high > 0.0);
    assert!(rep.max_pos.dist(p(1.0, 0.5)) < 0.15);
    assert!(rep.min_is_boundary_node);
    assert!(rep.margin_low <= 0.0);
}

#[test]
fn level_curve_of_linear_function_is_a_straight_chord() {
    let spec = rect_spec(2.0, 1.0, false);
    let mesh = triangulate(&spec, &MeshOptions::new(0.15)).unwrap();
    let vals: Vec<f64> = mesh.nodes.iter().map(|q| q.x - 0.77).collect();
    let lc = level_curve(&mesh, &vals, 0.0);
    assert!(!lc.segments.is_empty());
    for (a, b) in &lc.segments {
        assert!((a.x - 0.77).abs() < 1e-10 && (b.x - 0.77).abs() < 1e-10);
    }
    // chains into a single polyline spanning the full height
    assert_eq!(lc.polylines.len(), 1);
    let ys: Vec<f64> = lc.polylines[0].iter().map(|q| q.y).collect();
    let (lo, hi) = ys.iter().fold((1.0f64, 0.0f64), |(l, h), &y| (l.min(y), h.max(y)));
    assert!(lo < 1e-10 && hi > 1.0 - 1e-10);
    assert!((lc.total_length() - 1.0).abs() < 1e-9);
}

#[test]
fn gradient_of_linear_field_is_constant() {
    let spec = rect_spec(1.0, 1.0, false);
    let mesh = triangulate(&spec, &MeshOptions::new(0.2)).unwrap();
    let vals: Vec<f64> = mesh.nodes.iter().map(|q| 3.0 * q.x - 2.0 * q.y).collect();
    for g in gradient_field(&mesh, &vals) {
        assert!((g.x - 3.0).abs() < 1e-10 && (g.y + 2.0).abs() < 1e-10);
    }
}

#[test]
fn csv_and_svg_outputs_are_well_formed() {
    let spec = rect_spec(1.0, 1.0, false);
    let mesh = triangulate(&spec, &MeshOptions::new(0.25)).unwrap();
    let vals: Vec<f64> = mesh.nodes.iter().map(|q| q.x - 0.5).collect();
    let csv = eigenfunction_csv(&mesh, &vals);
    assert!(csv.starts_with("x,y,value\n"));
    assert_eq!(csv.lines().count(), mesh.n_nodes() + 1);
    let svg = mesh_svg(&mesh, Some(&vals));
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("polygon"));
}
