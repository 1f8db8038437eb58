//! Polygonal approximations of circular arcs confined to an annular band.
//!
//! The curved tube walls of the domain are chains of equal-angle chords of the
//! circle through the prescribed endpoints. Using the endpoint circle (rather
//! than the band's mid circle) keeps the endpoints exact while staying
//! strictly inside the band, and makes every turning angle exactly
//! `sweep / n`, so the turn bound is easy to guarantee.

use super::primitives::{angle_between, normalize_angle, P2};
use super::GeomError;

/// An annulus sector band that must contain an arc chain.
#[derive(Debug, Clone, Copy)]
pub struct ArcBand {
    pub center: P2,
    pub r_min: f64,
    pub r_max: f64,
}

/// Build a polygonal arc chain from `start` to `end` with `n` chords.
///
/// Preconditions checked here:
/// * `start` and `end` lie at a common radius inside `(r_min, r_max)`;
/// * `n` chords suffice to keep every turning angle at most `turn_limit`
///   (a chain sweeping total angle `s` cannot turn less than `s/n` at its
///   sharpest vertex, so infeasible `n` is rejected rather than fudged).
///
/// The chain vertices are placed at equal angles on the endpoint circle; the
/// two endpoints are written exactly, not recomputed through trigonometry.
pub fn build_arc_chain(
    band: &ArcBand,
    start: P2,
    end: P2,
    n: usize,
    turn_limit: f64,
) -> Result<Vec<P2>, GeomError> {
    if n == 0 {
        return Err(GeomError::ArcInfeasible {
            needed: 1,
            given: 0,
        });
    }
    let r_s = start.dist(band.center);
    let r_e = end.dist(band.center);
    let r = 0.5 * (r_s + r_e);
    if (r_s - r_e).abs() > 1e-9 * r.max(1.0) {
        return Err(GeomError::Invalid(format!(
            "arc endpoints at different radii ({r_s} vs {r_e})"
        )));
    }
    if r <= band.r_min || r >= band.r_max {
        return Err(GeomError::BandViolation {
            radius: r,
            r_min: band.r_min,
            r_max: band.r_max,
        });
    }
    let th_s = (start - band.center).angle();
    let th_e = (end - band.center).angle();
    let sweep = normalize_angle(th_e - th_s);
    let needed = (sweep.abs() / turn_limit).ceil() as usize;
    if n < needed {
        return Err(GeomError::ArcInfeasible { needed, given: n });
    }

    let mut pts = Vec::with_capacity(n + 1);
    pts.push(start);
    for k in 1..n {
        let th = th_s + sweep * (k as f64) / (n as f64);
        pts.push(band.center + P2 { x: th.cos(), y: th.sin() } * r);
    }
    pts.push(end);
    debug_assert!(max_turn(&pts) <= turn_limit * (1.0 + 1e-9));
    Ok(pts)
}

/// Largest turning angle |angle(v_{k+1}-v_k, v_k-v_{k-1})| along a polyline.
pub fn max_turn(pts: &[P2]) -> f64 {
    let mut worst: f64 = 0.0;
    for w in pts.windows(3) {
        let turn = angle_between(w[2] - w[1], w[1] - w[0]).abs();
        worst = worst.max(turn);
    }
    worst
}

/// Number of chords needed for a quarter-circle chain to turn at most
/// `turn_limit` at each vertex.
pub fn quarter_arc_segments(turn_limit: f64) -> usize {
    (std::f64::consts::FRAC_PI_2 / turn_limit).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::super::primitives::p2;
    use super::*;

    fn quarter_band() -> ArcBand {
        ArcBand {
            center: p2(2.0, -1.0),
            r_min: 1.005,
            r_max: 1.02,
        }
    }

    #[test]
    fn chain_hits_endpoints_exactly() {
        let band = quarter_band();
        let start = p2(2.0, 0.01);
        let end = p2(3.01, -1.0);
        let chain = build_arc_chain(&band, start, end, 158, 0.01).unwrap();
        assert_eq!(chain.first().copied(), Some(start));
        assert_eq!(chain.last().copied(), Some(end));
        assert_eq!(chain.len(), 159);
    }

    #[test]
    fn chain_stays_in_band_and_respects_turn_limit() {
        let band = quarter_band();
        let chain = build_arc_chain(&band, p2(2.0, 0.01), p2(3.01, -1.0), 158, 0.01).unwrap();
        for v in &chain {
            let r = v.dist(band.center);
            assert!(r > band.r_min && r < band.r_max, "radius {r} out of band");
        }
        assert!(max_turn(&chain) <= 0.01 + 1e-12);
    }

    #[test]
    fn infeasible_segment_count_is_rejected() {
        // A quarter sweep through 64 chords must turn at least pi/2/64 > 0.01
        // somewhere; the total-curvature argument makes this a hard error.
        let band = quarter_band();
        let err = build_arc_chain(&band, p2(2.0, 0.01), p2(3.01, -1.0), 64, 0.01).unwrap_err();
        match err {
            GeomError::ArcInfeasible { needed, given } => {
                assert_eq!(given, 64);
                assert_eq!(needed, 158);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn quarter_segment_count_matches_bisection_oracle() {
        // Oracle: smallest n with (pi/2)/n <= limit, found by scanning.
        for limit in [0.1, 0.05, 0.01, 0.001] {
            let mut n = 1usize;
            while std::f64::consts::FRAC_PI_2 / (n as f64) > limit {
                n += 1;
            }
            assert_eq!(quarter_arc_segments(limit), n, "limit {limit}");
        }
    }

    #[test]
    fn equal_angle_chain_turn_is_uniform() {
        let band = quarter_band();
        let chain = build_arc_chain(&band, p2(2.0, 0.01), p2(3.01, -1.0), 200, 0.01).unwrap();
        let expect = std::f64::consts::FRAC_PI_2 / 200.0;
        // every interior turn equals the angular step (up to float noise)
        for w in chain.windows(3) {
            let t = angle_between(w[2] - w[1], w[1] - w[0]).abs();
            assert!((t - expect).abs() < 1e-7, "turn {t} vs {expect}");
        }
    }
}
