//! Named reference regions used by the couplings and the studies.
//!
//! Predicates test the *defining inequalities* of each region only; whether a
//! point is inside the domain is the caller's concern (combine with
//! [`classify`](super::classify)). Curve-like regions (segments, circles,
//! wall pieces) are thickened into a band of half-width `band` so hitting
//! them is meaningful for discretized paths. Quarter-domain regions live in
//! `D1` coordinates.

use super::primitives::{p2, P2};
use super::DomainParams;

/// Windows of the two late coupling stages. The construction calls for
/// x1-windows of half-width `100*eps` (resp. `50*eps`) around `j0*eps`; at
/// bench-scale `eps` those windows would swallow the whole tube and their
/// end walls would fall outside the domain entirely, so the half-width is
/// clipped to keep the left end wall at `x1 >= eps` and the right end wall
/// at `x1 <= 1 - 2*eps` (strictly left of the `x1 = 1` target line).
/// `clipped` records when the nominal factor 100 was reduced.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StageWindow {
    pub j0: usize,
    pub factor: f64,
    pub clipped: bool,
    pub a9_lo: f64,
    pub a9_hi: f64,
    pub a11_lo: f64,
    pub a11_hi: f64,
}

impl StageWindow {
    pub fn new(eps: f64, c_star: f64) -> StageWindow {
        let j0 = (c_star / eps).floor() as usize;
        let center = j0 as f64 * eps;
        let max_left = (j0 as f64 - 1.0).max(0.5);
        let max_right = ((1.0 - 2.0 * eps - center) / eps).max(0.5);
        let factor = 100.0f64.min(max_left).min(max_right);
        StageWindow {
            j0,
            factor,
            clipped: factor < 100.0,
            a9_lo: center - factor * eps,
            a9_hi: center + factor * eps,
            a11_lo: center - 0.5 * factor * eps,
            a11_hi: center + 0.5 * factor * eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedRegion {
    /// Ball of radius `2r` about the horn apex `y`, inside `{|x1|<=2, x2>-1}`.
    K1,
    /// Circle of radius 1/2 about `y` (band), inside the same slab.
    K2,
    /// Circle of radius 1 about `y` (band), inside the same slab.
    K3,
    /// Lower half `{x2 < -1}` of the ring.
    DMinus,
    A1,
    A2,
    A3,
    A4,
    A5j(usize),
    A6j(usize),
    A7,
    A8,
    A9,
    A10,
    A11,
    A12,
    A13,
    /// Piece of the upper wall `{x in bd D1: 0<=x1<=1, x2>0}` left of Gamma.
    C,
    /// Part of `D1` to the left of Gamma.
    C0,
    /// `{x in D1: x1 <= 1/2}` — where the lagging path should sit when the
    /// leading path reaches Gamma.
    HalfTubeC1,
}

pub struct RegionCtx<'a> {
    pub params: DomainParams,
    pub window: StageWindow,
    /// Half-width for curve-like regions.
    pub band: f64,
    /// The dividing level curve, when a predicate needs it.
    pub gamma: Option<&'a [P2]>,
}

impl<'a> RegionCtx<'a> {
    pub fn new(params: DomainParams, c_star: f64) -> RegionCtx<'a> {
        RegionCtx {
            params,
            window: StageWindow::new(params.epsilon, c_star),
            band: 1e-9,
            gamma: None,
        }
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band;
        self
    }

    pub fn with_gamma(mut self, gamma: &'a [P2]) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn contains(&self, region: NamedRegion, p: P2) -> bool {
        let e = self.params.epsilon;
        let b = self.band;
        let w = &self.window;
        let j0 = w.j0 as f64;
        match region {
            NamedRegion::K1 => {
                let y = self.apex();
                in_slab(p) && p.dist(y) <= 2.0 * self.params.apex_r()
            }
            NamedRegion::K2 => {
                let y = self.apex();
                in_slab(p) && (p.dist(y) - 0.5).abs() <= b
            }
            NamedRegion::K3 => {
                let y = self.apex();
                in_slab(p) && (p.dist(y) - 1.0).abs() <= b
            }
            NamedRegion::DMinus => p.y < -1.0,
            NamedRegion::A1 => p.x > 0.0 && p.x < e && p.y > 0.7 * e,
            NamedRegion::A2 => {
                (p.x - e).abs() <= b && p.y >= 0.7 * e - b && p.y <= 0.8 * e + b
            }
            NamedRegion::A3 => {
                // relative boundary of A1 inside the open quarter domain
                let wall = (p.x - e).abs() <= b && p.y >= 0.7 * e - b;
                let floor = (p.y - 0.7 * e).abs() <= b && p.x > 0.0 && p.x <= e + b;
                wall || floor
            }
            NamedRegion::A4 => p.x > 0.0 && p.x < e && p.y > -0.3 * e && p.y < 0.1 * e,
            NamedRegion::A5j(j) => {
                let j = j as f64;
                p.x > j * e && p.x < (j + 2.0) * e && p.y > 0.6 * e && p.y < 0.9 * e
            }
            NamedRegion::A6j(j) => {
                let gate = (j as f64 + 2.0) * e;
                (p.x - gate).abs() <= b && p.y > 0.7 * e - b && p.y < 0.8 * e + b
            }
            NamedRegion::A7 => {
                p.x > j0 * e && p.x < (j0 + 3.0) * e && p.y > -0.5 * e
            }
            NamedRegion::A8 => {
                p.x >= (j0 + 1.0) * e
                    && p.x <= (j0 + 2.0) * e
                    && (p.y - upper_wall(e, p.x)).abs() <= b
            }
            NamedRegion::A9 => p.x > w.a9_lo && p.x < w.a9_hi && p.y > 0.0,
            NamedRegion::A10 => {
                ((p.x - w.a9_lo).abs() <= b || (p.x - w.a9_hi).abs() <= b) && p.y > 0.0
            }
            NamedRegion::A11 => (p.x > w.a11_lo && p.x < w.a11_hi) || p.x < e,
            NamedRegion::A12 => (p.x - 1.0).abs() <= b,
            NamedRegion::A13 | NamedRegion::HalfTubeC1 => p.x <= 0.5,
            NamedRegion::C => {
                p.x >= 0.0
                    && p.x <= 1.0
                    && p.y > 0.0
                    && (p.y - upper_wall(e, p.x)).abs() <= b
                    && self.left_of_gamma(p)
            }
            NamedRegion::C0 => self.left_of_gamma(p),
        }
    }

    fn apex(&self) -> P2 {
        p2(2.0 + self.params.apex_r(), 0.0)
    }

    /// Left of the dividing curve = the straight segment from `p` to the
    /// origin crosses Gamma an even number of times (the origin is deep on
    /// the left side).
    pub fn left_of_gamma(&self, p: P2) -> bool {
        let Some(gamma) = self.gamma else {
            return false;
        };
        let mut crossings = 0;
        let o = P2::ZERO;
        for seg in gamma.windows(2) {
            if super::segments_properly_intersect(p, o, seg[0], seg[1]) {
                crossings += 1;
            }
        }
        crossings % 2 == 0
    }
}

/// The slab `{|x1| <= 2, x2 > -1}` that truncates the annulus regions.
fn in_slab(p: P2) -> bool {
    p.x.abs() <= 2.0 && p.y > -1.0
}

/// Height of the upper wall of the quarter domain over `x1 in [0,1]`
/// (the wall rises from (0,eps) to (1,2eps) along `x2 = eps*(1+x1)`).
fn upper_wall(e: f64, x: f64) -> f64 {
    e * (1.0 + x)
}
