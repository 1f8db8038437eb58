use super::classify::{classify, nearest_boundary, Classification};
use super::geodesic::{grid_rho, GeodesicOracle};
use super::io::{export_domain, import_domain};
use super::primitives::p2;
use super::*;
use proptest::prelude::*;

fn default_domain() -> DomainSpec {
    build_domain(&DomainParams::default()).unwrap()
}

fn default_quarter() -> DomainSpec {
    build_quarter(&DomainParams::default()).unwrap()
}

/// Unit square with all-Neumann edges, for projection tests.
fn unit_square() -> DomainSpec {
    let pts = vec![p2(0.0, 0.0), p2(1.0, 0.0), p2(1.0, 1.0), p2(0.0, 1.0)];
    let tags = vec![EdgeTag::NeumannOther; 4];
    DomainSpec::from_loops(RegionId::Generic, None, vec![(pts, tags)]).unwrap()
}

#[test]
fn horn_vertices_appear_exactly() {
    let spec = default_domain();
    for want in [
        p2(0.0, 0.1),
        p2(1.0, 0.2),
        p2(2.0, 0.01),
        p2(2.0, -0.01),
        p2(1.0, -0.2),
        p2(0.0, -0.1),
    ] {
        assert!(
            spec.verts.iter().any(|v| v.x == want.x && v.y == want.y),
            "missing vertex ({}, {})",
            want.x,
            want.y
        );
    }
}

#[test]
fn ring_has_one_hole_and_positive_area() {
    let spec = default_domain();
    assert_eq!(spec.loops.len(), 2);
    let outer = signed_area(spec.loop_points(0));
    let hole = signed_area(spec.loop_points(1));
    assert!(outer > 0.0 && hole < 0.0, "outer {outer}, hole {hole}");
    assert!(spec.area() > 0.0);
    // ring area equals four quarter areas (the quarter tiles it)
    let quarter = default_quarter();
    assert!((spec.area() - 4.0 * quarter.area()).abs() < 1e-10);
}

#[test]
fn classification_of_reference_points() {
    let spec = default_domain();
    assert_eq!(classify(&spec, p2(0.0, 0.0)), Classification::Interior);
    assert_eq!(classify(&spec, p2(0.0, -2.0)), Classification::Interior);
    // center of the hole and center of the right arc are both outside
    assert_eq!(classify(&spec, p2(0.0, -1.0)), Classification::Exterior);
    assert_eq!(classify(&spec, p2(2.0, -1.0)), Classification::Exterior);
    assert_eq!(classify(&spec, p2(5.0, 5.0)), Classification::Exterior);
    // interior of the straight tube and of the arc tube
    assert_eq!(classify(&spec, p2(1.0, 0.0)), Classification::Interior);
    assert_eq!(classify(&spec, p2(3.0, -1.0)), Classification::Interior);
    // horn corners are boundary points; the open symmetry segment is interior
    for q in [p2(1.0, 0.2), p2(2.0, 0.01), p2(2.0, -0.01), p2(1.0, -0.2)] {
        assert!(matches!(classify(&spec, q), Classification::Boundary { .. }));
    }
    // (0, ±eps) remain reflex corners of the boundary even though the open
    // segment between them is interior
    for q in [p2(0.0, 0.1), p2(0.0, -0.1)] {
        assert!(matches!(classify(&spec, q), Classification::Boundary { .. }));
    }
    assert_eq!(classify(&spec, p2(0.0, 0.05)), Classification::Interior);
}

#[test]
fn quarter_tags_partition_the_boundary() {
    let spec = default_quarter();
    let d: Vec<usize> = spec
        .edges()
        .filter(|(_, _, _, t)| *t == EdgeTag::DirichletD)
        .map(|(i, ..)| i)
        .collect();
    let l: Vec<usize> = spec
        .edges()
        .filter(|(_, _, _, t)| *t == EdgeTag::LeftEll)
        .map(|(i, ..)| i)
        .collect();
    assert_eq!(d.len(), 1, "one short cross-cut edge");
    assert_eq!(l.len(), 1, "one symmetry-cut edge");
    let (a, b) = spec.edge(d[0]);
    assert_eq!(a.y, -1.0);
    assert_eq!(b.y, -1.0);
    assert!((a.x - b.x).abs() - 0.02 < 1e-12);
    let (a, b) = spec.edge(l[0]);
    assert_eq!(a.x, 0.0);
    assert_eq!(b.x, 0.0);
    // side_s forms exactly two contiguous runs (the two tube walls)
    let n = spec.edge_count();
    let mut runs = 0;
    for i in 0..n {
        let prev = (i + n - 1) % n;
        if spec.tags[i] == EdgeTag::SideS && spec.tags[prev] != EdgeTag::SideS {
            runs += 1;
        }
    }
    assert_eq!(runs, 2);
}

#[test]
fn quarter_loop_is_counterclockwise() {
    let spec = default_quarter();
    assert_eq!(spec.loops.len(), 1);
    assert!(signed_area(spec.loop_points(0)) > 0.0);
}

#[test]
fn named_points_match_closed_forms() {
    let spec = default_domain();
    let r = 0.01 / (0.2 - 0.01);
    let y = spec.named_point("y").unwrap();
    assert!((y.x - (2.0 + r)).abs() < 1e-15 && y.y == 0.0);
    let z = spec.named_point("z").unwrap();
    assert!((z.x + (2.0 + r)).abs() < 1e-15);
    assert_eq!(spec.named_point("v").unwrap(), p2(-1.0, 0.0));
    // the horn walls extended really do meet at y: the wall through
    // (1, 2eps) and (2, eps0) evaluated at x = 2 + r gives 0
    let slope = (0.01 - 0.2) / 1.0;
    assert!((0.01 + slope * r).abs() < 1e-15);
}

#[test]
fn vertex_set_closed_under_reflections() {
    let spec = default_domain();
    // +0.0 so that the x-mirror of the seam (x = 0.0 -> -0.0) compares equal
    let key = |q: P2| ((q.x + 0.0).to_bits(), q.y.to_bits());
    let set: std::collections::HashSet<_> = spec.verts.iter().map(|&v| key(v)).collect();
    // x-mirror is exact and must map the vertex set onto itself
    for &v in &spec.verts {
        assert!(set.contains(&key(p2(-v.x, v.y))), "x-mirror of {v:?}");
    }
    // the lower half is the constructed image of the upper half
    for &v in &spec.verts {
        if v.y > -1.0 {
            assert!(
                set.contains(&key(p2(v.x, -2.0 - v.y))),
                "h-mirror of {v:?}"
            );
        }
    }
}

#[test]
fn arc_chains_respect_band_and_turn_limit_in_context() {
    let params = DomainParams::default();
    let spec = build_domain(&params).unwrap();
    let center = p2(2.0, -1.0);
    // every boundary vertex near the right arc lies in one of the two bands
    for &v in &spec.verts {
        if (v.x - 2.0).hypot(v.y + 1.0) > 0.5 && v.x > 2.0 + 1e-9 && v.y > -1.0 && v.y < 0.0 {
            let r = v.dist(center);
            let outer = r > 1.0 + 0.005 && r < 1.0 + 0.02;
            let inner = r > 1.0 - 0.02 && r < 1.0 - 0.005;
            assert!(outer || inner, "vertex {v:?} radius {r}");
        }
    }
    // turn bound along the quarter loop: corners turn by up to a right angle
    // plus the wall slope, wall vertices by at most epsilon0
    let q = build_quarter(&params).unwrap();
    let pts = q.loop_points(0);
    assert!(max_turn(pts) <= std::f64::consts::PI / 2.0 + params.epsilon + 1e-9);
}

#[test]
fn default_arc_segment_count_is_raised_to_meet_turn_limit() {
    let params = DomainParams::default();
    assert_eq!(params.arc_segments, 64);
    assert_eq!(params.n_arc(), 158);
    // and the realized chains turn by at most epsilon0
    let q = quarter_pieces(&params).unwrap();
    let arc_part: Vec<P2> = q.outer[2..].to_vec();
    assert!(max_turn(&arc_part) <= 0.01 + 1e-12);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(build_domain(&DomainParams::new(0.3, 0.01)).is_err()); // eps >= 1/4
    assert!(build_domain(&DomainParams::new(0.1, 0.2)).is_err()); // eps0 >= eps
    assert!(build_domain(&DomainParams::new(0.1, 0.0)).is_err());
    assert!(build_domain(&DomainParams::new(0.1, -0.1)).is_err());
}

#[test]
fn nearest_boundary_on_square() {
    let sq = unit_square();
    let nb = nearest_boundary(&sq, p2(0.5, 0.4));
    assert!((nb.foot.x - 0.5).abs() < 1e-12 && nb.foot.y.abs() < 1e-12);
    assert!((nb.dist - 0.4).abs() < 1e-12);
    assert!((nb.normal_in.x - 0.0).abs() < 1e-12 && (nb.normal_in.y - 1.0).abs() < 1e-12);
    assert_eq!(nb.edge, 0);
    // exact center: all four edges tie; lowest edge id wins
    let nb = nearest_boundary(&sq, p2(0.5, 0.5));
    assert_eq!(nb.edge, 0);
    // outside past a corner projects onto the vertex
    let nb = nearest_boundary(&sq, p2(-0.3, -0.4));
    assert!(nb.at_vertex);
    assert!(nb.foot.dist(p2(0.0, 0.0)) < 1e-12);
}

#[test]
fn projection_is_idempotent_and_lands_on_boundary() {
    let spec = default_domain();
    for q in [
        p2(1.0, 0.5),
        p2(0.5, -1.0),
        p2(3.2, -1.0),
        p2(-3.2, -0.9),
        p2(1.5, -1.8),
    ] {
        let nb = nearest_boundary(&spec, q);
        assert!(matches!(
            classify(&spec, nb.foot),
            Classification::Boundary { .. }
        ));
        let again = nearest_boundary(&spec, nb.foot);
        assert!(again.dist <= spec.tol() * 10.0);
    }
}

#[test]
fn rho_zero_at_the_cut_and_increases_into_the_tube() {
    let q = default_quarter();
    let oracle = GeodesicOracle::new(&q);
    assert!(oracle.rho(p2(3.0 + 0.01, -1.0)) < 1e-9);
    assert!(oracle.rho(p2(3.0 - 0.01, -1.0)) < 1e-9);
    let at_origin = oracle.rho(p2(0.0, 0.0));
    assert!(
        (3.2..3.7).contains(&at_origin),
        "rho(0,0) = {at_origin} outside the sanity bracket"
    );
    // monotone along the tube: deeper points are farther
    let mid = oracle.rho(p2(1.0, 0.0));
    let near = oracle.rho(p2(2.5, -0.13));
    assert!(at_origin > mid && mid > near && near > 0.0);
}

#[test]
fn rho_is_lipschitz() {
    let q = default_quarter();
    let oracle = GeodesicOracle::new(&q);
    let pairs = [
        (p2(0.1, 0.0), p2(0.3, 0.05)),
        (p2(1.0, 0.1), p2(1.0, -0.1)),
        (p2(0.5, 0.0), p2(0.0, 0.0)),
        (p2(2.0, 0.0), p2(1.9, 0.005)),
    ];
    for (a, b) in pairs {
        let (ra, rb) = (oracle.rho(a), oracle.rho(b));
        assert!(
            (ra - rb).abs() <= a.dist(b) * (1.0 + 1e-9) + 1e-12,
            "|rho({a:?})-rho({b:?})| = {} > {}",
            (ra - rb).abs(),
            a.dist(b)
        );
    }
}

#[test]
fn rho_matches_grid_dijkstra_oracle() {
    let q = default_quarter();
    let oracle = GeodesicOracle::new(&q);
    for (start, h) in [(p2(0.0, 0.0), 0.005), (p2(1.5, 0.05), 0.005)] {
        let vis = oracle.rho(start);
        let grid = grid_rho(&q, start, h);
        // the grid metric can only overestimate (<=0.49% directional bias
        // plus O(h) read-off), so mutual 1% agreement is a real check
        assert!(
            (grid - vis).abs() <= 0.01 * vis,
            "start {start:?}: visibility {vis} vs grid {grid}"
        );
    }
}

#[test]
fn export_import_round_trip_is_exact() {
    for spec in [default_domain(), default_quarter()] {
        let text = export_domain(&spec);
        assert!(text.starts_with("hotspots-domain v1\n"));
        let back = import_domain(&text).unwrap();
        assert_eq!(back.verts.len(), spec.verts.len());
        assert_eq!(back.loops.len(), spec.loops.len());
        for (a, b) in spec.verts.iter().zip(back.verts.iter()) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        assert_eq!(spec.tags, back.tags);
        assert_eq!(spec.region, back.region);
    }
}

#[test]
fn import_rejects_malformed_input() {
    assert!(import_domain("nonsense").is_err());
    assert!(import_domain("hotspots-domain v1\nv 0 0\n").is_err()); // unbalanced
    assert!(import_domain("hotspots-domain v1\nv 0 0\ne 0 5 side_s\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Domain construction stays simple and in-band across the parameter box
    /// (epsilon0 bounded below so arc counts stay test-sized).
    #[test]
    fn build_is_valid_across_parameter_box(
        eps in 0.03f64..0.24,
        ratio in 0.05f64..0.45,
    ) {
        let params = DomainParams::new(eps, (eps * ratio).max(0.003));
        let spec = build_domain(&params).unwrap();
        prop_assert!(spec.area() > 0.0);
        prop_assert_eq!(spec.loops.len(), 2);
        spec.check_simple().unwrap();
        prop_assert_eq!(classify(&spec, p2(0.0, 0.0)), Classification::Interior);
        prop_assert_eq!(classify(&spec, p2(0.0, -1.0)), Classification::Exterior);
    }

    /// The projection returned by nearest_boundary is no farther than any
    /// boundary vertex (it really is the global minimizer).
    #[test]
    fn nearest_boundary_is_global_minimum(x in -3.5f64..3.5, y in -2.5f64..0.5) {
        let spec = default_domain();
        let p = p2(x, y);
        let nb = nearest_boundary(&spec, p);
        for &v in spec.verts.iter().step_by(7) {
            prop_assert!(nb.dist <= p.dist(v) + 1e-12);
        }
    }
}
