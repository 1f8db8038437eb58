//! Couplings of reflected Brownian paths.
//!
//! Three regimes drive a pair of reflected paths in the same domain:
//! *synchronous* (both receive the same increment), *mirror* (the second
//! path receives the increment reflected across the perpendicular bisector
//! of the pair), and *independent*.  [`staged_run`] chains the regimes into
//! the multi-stage chase protocol used by the probability studies: the pair
//! starts synchronously near the left end of the quarter domain, the upper
//! path is walked through a ladder of gate windows along the upper wall,
//! and depending on which stage events occur the pair switches to mirror or
//! independent motion until both paths reach the target level curve.
//!
//! The mirror regime is realised in Cartesian coordinates (reflect the
//! increment, project both paths), with two refinements that keep the
//! coupling structure numerically exact where it matters:
//!
//! * away from the boundary the stored mirror line is *not* recomputed —
//!   it is invariant under the exact dynamics, and leaving it untouched
//!   means the pair stays symmetric about it to machine precision;
//! * while exactly one path is in contact with a single edge, both paths
//!   are advanced in polar coordinates about the fixed hinge (mirror ∩
//!   edge line).  This keeps the hinge and the equal distances to it exact
//!   instead of letting them drift at O(dt) per contact step.
//!
//! [`mirror_halfplane_skew`] implements the half-plane skew-product
//! construction (shared Bessel(2) radius, angle processes run in the clock
//! `sigma(t) = integral of R^-2`) and serves as an independent oracle for
//! the Cartesian mirror dynamics.

use std::f64::consts::PI;

use serde::Serialize;

use crate::geometry::regions::StageWindow;
use crate::geometry::{p2, point_segment, NamedRegion, P2};
use crate::rbm::{EdgeGrid, NoiseStream, PathState, RbmError, StepInfo, Stepper};
use crate::spectral::LevelCurve;

// ---------------------------------------------------------------------------
// Mirror line
// ---------------------------------------------------------------------------

/// An unbounded line `{point + s * dir}` with unit `dir`, used as the mirror
/// of a coupled pair.  The pair's difference vector is normal to `dir`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MirrorLine {
    pub point: P2,
    pub dir: P2,
}

impl MirrorLine {
    /// Perpendicular bisector of the segment from `x` to `y`.  `None` when
    /// the points coincide (the pair is coalesced and has no mirror).
    pub fn bisector(x: P2, y: P2) -> Option<MirrorLine> {
        let d = y - x;
        let n = d.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(MirrorLine {
            point: (x + y) * 0.5,
            dir: (d / n).perp(),
        })
    }

    /// Unit normal of the line.  For `bisector(x, y)` this points from `x`
    /// toward `y`.
    pub fn normal(self) -> P2 {
        p2(self.dir.y, -self.dir.x)
    }

    /// Signed distance, positive on the `normal()` side.
    pub fn signed_dist(self, p: P2) -> f64 {
        (p - self.point).dot(self.normal())
    }

    /// Reflect a direction vector across the line (an isometry).
    pub fn reflect_dir(self, v: P2) -> P2 {
        let m = self.dir;
        m * (2.0 * v.dot(m)) - v
    }

    /// Reflect a point across the line.
    pub fn reflect_point(self, p: P2) -> P2 {
        self.point + self.reflect_dir(p - self.point)
    }

    /// Intersection with the line through `q` with direction `k`; `None`
    /// when the two lines are (numerically) parallel.
    pub fn intersect_line(self, q: P2, k: P2) -> Option<P2> {
        let den = self.dir.cross(k);
        if den.abs() < 1e-9 * (self.dir.norm() * k.norm()).max(f64::MIN_POSITIVE) {
            return None;
        }
        let t = (q - self.point).cross(k) / den;
        Some(self.point + self.dir * t)
    }
}

// ---------------------------------------------------------------------------
// Coupled state
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Synchronous,
    Mirror,
    Independent,
    Coalesced,
}

/// Book-keeping for a single-edge reflection episode of a mirror pair.
/// While active, both paths live at a common radius `r` from the fixed
/// hinge `h`, at angles `th_x`, `th_y` in `[0, pi]` measured from the edge
/// direction `khat` (so the inward side is the positive-angle side).
#[derive(Clone, Copy, Debug)]
struct Episode {
    edge: u32,
    h: P2,
    khat: P2,
    nhat: P2,
    r: f64,
    th_x: f64,
    th_y: f64,
    /// Signed span of the edge segment along `khat` from `h`; folds are
    /// only legitimate while the touch point lies inside this span.
    s_lo: f64,
    s_hi: f64,
    folded_last: bool,
}

/// A coupled pair of reflected paths plus the coupling structure.
#[derive(Clone, Copy, Debug)]
pub struct MirrorState {
    pub x_state: PathState,
    pub y_state: PathState,
    /// Mirror line; `None` exactly when the pair is coalesced, and also in
    /// regimes that do not maintain a mirror (synchronous, independent).
    pub mirror: Option<MirrorLine>,
    /// Last known hinge (mirror ∩ contact edge line), informational.
    pub hinge: Option<P2>,
    pub regime: Regime,
    episode: Option<Episode>,
}

impl MirrorState {
    pub fn synchronous(x: P2, y: P2) -> MirrorState {
        MirrorState {
            x_state: PathState::at(x),
            y_state: PathState::at(y),
            mirror: None,
            hinge: None,
            regime: Regime::Synchronous,
            episode: None,
        }
    }

    pub fn mirrored(x: P2, y: P2) -> MirrorState {
        let mirror = MirrorLine::bisector(x, y);
        let regime = if mirror.is_some() {
            Regime::Mirror
        } else {
            Regime::Coalesced
        };
        MirrorState {
            x_state: PathState::at(x),
            y_state: PathState::at(y),
            mirror,
            hinge: None,
            regime,
            episode: None,
        }
    }

    pub fn separation(&self) -> f64 {
        self.x_state.position.dist(self.y_state.position)
    }

    /// Hinge of the currently active single-edge episode, if any.
    pub fn active_hinge(&self) -> Option<P2> {
        self.episode.map(|e| e.h)
    }

    /// Edge of the currently active single-edge episode, if any.
    pub fn episode_edge(&self) -> Option<u32> {
        self.episode.map(|e| e.edge)
    }

    /// Switch to the mirror regime, rebuilding the mirror from positions.
    /// Falls through to coalesced when the positions coincide.  A pair that
    /// has already coalesced stays glued.
    pub fn enter_mirror(&mut self) {
        if self.regime == Regime::Coalesced {
            return;
        }
        self.episode = None;
        match MirrorLine::bisector(self.x_state.position, self.y_state.position) {
            Some(m) => {
                self.mirror = Some(m);
                self.regime = Regime::Mirror;
            }
            None => {
                self.mirror = None;
                self.regime = Regime::Coalesced;
            }
        }
    }

    /// Switch to independent motion.  A coalesced pair stays glued.
    pub fn enter_independent(&mut self) {
        if self.regime == Regime::Coalesced {
            return;
        }
        self.mirror = None;
        self.episode = None;
        self.regime = Regime::Independent;
    }

    fn coalesce_at(&mut self, stepper: &Stepper, p: P2) -> Result<(), RbmError> {
        let q = settle_inside(stepper, p)?;
        self.x_state.position = q;
        self.y_state.position = q;
        self.mirror = None;
        self.episode = None;
        self.regime = Regime::Coalesced;
        Ok(())
    }
}

/// Move a point to the domain interior using the stepper's projection (a
/// no-op for points already inside).
fn settle_inside(stepper: &Stepper, p: P2) -> Result<P2, RbmError> {
    let mut st = PathState::at(p);
    stepper.step(&mut st, P2::ZERO, 0.0)?;
    Ok(st.position)
}

fn free_info() -> StepInfo {
    StepInfo::default()
}

// ---------------------------------------------------------------------------
// Synchronous stepping
// ---------------------------------------------------------------------------

/// Advance a synchronous pair by one Euler step with the shared increment
/// `dw`.  On steps where neither path reflects, the difference `y - x` is
/// carried over bitwise by deriving the new `y` from the new `x` plus the
/// stored difference (the exact dynamics preserve the difference, and this
/// keeps the discrete pair from accumulating rounding noise).
pub fn synchronous_step(
    stepper: &Stepper,
    st: &mut MirrorState,
    dw: P2,
    dt: f64,
) -> Result<(StepInfo, StepInfo), RbmError> {
    if st.regime == Regime::Coalesced {
        let info = stepper.step(&mut st.x_state, dw, dt)?;
        st.y_state = st.x_state;
        return Ok((info, info));
    }
    let delta = st.y_state.position - st.x_state.position;
    let ix = stepper.step(&mut st.x_state, dw, dt)?;
    if !ix.reflected {
        let shifted = st.x_state.position + delta;
        if stepper.grid.inside(shifted) {
            st.y_state.position = shifted;
            st.y_state.time += dt;
            return Ok((ix, free_info()));
        }
    }
    let iy = stepper.step(&mut st.y_state, dw, dt)?;
    Ok((ix, iy))
}

// ---------------------------------------------------------------------------
// Mirror stepping
// ---------------------------------------------------------------------------

/// Advance a mirror-coupled pair by one Euler step.  `dw` drives `x`; `y`
/// receives `dw` reflected across the current mirror.  The pair coalesces
/// (permanently) when the separation crosses zero or drops below
/// `coalesce_tol`.
///
/// Away from the boundary the stored mirror line is left untouched.  A
/// clean single-edge contact switches to polar coordinates about the hinge
/// (see the module docs); any messier contact falls back to projecting `x`
/// first, then `y`, then rebuilding the mirror as the perpendicular
/// bisector.
pub fn mirror_step(
    stepper: &Stepper,
    st: &mut MirrorState,
    dw: P2,
    dt: f64,
    coalesce_tol: f64,
) -> Result<(StepInfo, StepInfo), RbmError> {
    if st.regime == Regime::Coalesced {
        let info = stepper.step(&mut st.x_state, dw, dt)?;
        st.y_state = st.x_state;
        return Ok((info, info));
    }
    if st.regime != Regime::Mirror {
        st.enter_mirror();
    }
    let mirror = match st.mirror {
        Some(m) => m,
        None => match MirrorLine::bisector(st.x_state.position, st.y_state.position) {
            Some(m) => {
                st.mirror = Some(m);
                m
            }
            None => {
                st.regime = Regime::Coalesced;
                let info = stepper.step(&mut st.x_state, dw, dt)?;
                st.y_state = st.x_state;
                return Ok((info, info));
            }
        },
    };

    if st.episode.is_some() {
        if let Some(infos) = polar_advance(stepper, st, dw, dt, coalesce_tol)? {
            return Ok(infos);
        }
        // Episode aborted; state untouched, fall through to Cartesian.
    }

    let xc = st.x_state.position + dw;
    let dwr = mirror.reflect_dir(dw);
    let yc = st.y_state.position + dwr;
    let x_in = stepper.grid.inside(xc);
    let y_in = stepper.grid.inside(yc);

    if x_in && y_in {
        let n = mirror.normal();
        let c_old = (st.y_state.position - st.x_state.position).dot(n);
        let c_new = (yc - xc).dot(n);
        st.x_state.position = xc;
        st.x_state.time += dt;
        st.y_state.position = yc;
        st.y_state.time += dt;
        if c_new.abs() <= coalesce_tol || c_old.signum() != c_new.signum() {
            let mid = (xc + yc) * 0.5;
            st.coalesce_at(stepper, mid)?;
        }
        return Ok((free_info(), free_info()));
    }

    if x_in != y_in {
        if let Some(infos) = try_polar_entry(stepper, st, mirror, dw, dt, coalesce_tol, x_in)? {
            return Ok(infos);
        }
    }
    cartesian_fallback(stepper, st, mirror, dw, dt, coalesce_tol)
}

/// Project both paths independently (x first), then rebuild the mirror.
fn cartesian_fallback(
    stepper: &Stepper,
    st: &mut MirrorState,
    mirror: MirrorLine,
    dw: P2,
    dt: f64,
    coalesce_tol: f64,
) -> Result<(StepInfo, StepInfo), RbmError> {
    let ix = stepper.step(&mut st.x_state, dw, dt)?;
    let iy = stepper.step(&mut st.y_state, mirror.reflect_dir(dw), dt)?;
    st.episode = None;
    match MirrorLine::bisector(st.x_state.position, st.y_state.position) {
        Some(m) => {
            st.mirror = Some(m);
            let contact_edge = ix.edge.or(iy.edge);
            st.hinge = contact_edge.and_then(|e| {
                let a = stepper.grid.a[e as usize];
                let k = (stepper.grid.b[e as usize] - a).normalized();
                m.intersect_line(a, k)
            });
            if st.separation() <= coalesce_tol {
                let mid = (st.x_state.position + st.y_state.position) * 0.5;
                st.coalesce_at(stepper, mid)?;
            }
        }
        None => {
            let p = st.x_state.position;
            st.coalesce_at(stepper, p)?;
        }
    }
    Ok((ix, iy))
}

/// Attempt to open a single-edge episode for the offending path and advance
/// through it.  Returns `Ok(None)` when the configuration is not a clean
/// single-edge contact (caller then falls back to Cartesian projections).
fn try_polar_entry(
    stepper: &Stepper,
    st: &mut MirrorState,
    mirror: MirrorLine,
    dw: P2,
    dt: f64,
    coalesce_tol: f64,
    x_in: bool,
) -> Result<Option<(StepInfo, StepInfo)>, RbmError> {
    let grid = &stepper.grid;
    let cand = if x_in {
        st.y_state.position + mirror.reflect_dir(dw)
    } else {
        st.x_state.position + dw
    };
    let (e, foot, _dist, t_on) = grid.nearest(cand);
    let a = grid.a[e as usize];
    let b = grid.b[e as usize];
    let band = 4.0 * stepper.tol / a.dist(b).max(f64::MIN_POSITIVE);
    let probe = foot + grid.inward_dir(e, t_on, band) * stepper.tol;
    if !grid.inside(probe) {
        return Ok(None); // corner-ish contact; leave it to the projector
    }
    let diam = stepper.spec.diameter();
    match build_episode(grid, mirror, e, st.x_state.position, st.y_state.position, stepper.tol, diam)
    {
        Some(ep) => {
            st.episode = Some(ep);
            st.hinge = Some(ep.h);
            match polar_advance(stepper, st, dw, dt, coalesce_tol)? {
                Some(infos) => Ok(Some(infos)),
                None => Ok(None),
            }
        }
        None => Ok(None),
    }
}

fn build_episode(
    grid: &EdgeGrid,
    mirror: MirrorLine,
    e: u32,
    x: P2,
    y: P2,
    tol: f64,
    diam: f64,
) -> Option<Episode> {
    let a = grid.a[e as usize];
    let b = grid.b[e as usize];
    let khat = (b - a).normalized();
    let nhat = grid.normal_in[e as usize];
    if (khat.perp() - nhat).norm() > 1e-9 {
        return None; // unexpected orientation; stay Cartesian
    }
    if mirror.dir.cross(khat).abs() < 1e-8 {
        return None; // mirror parallel to the edge: hinge at infinity
    }
    let h = mirror.intersect_line(a, khat)?;
    let rx = x.dist(h);
    let ry = y.dist(h);
    if rx > 200.0 * diam || ry > 200.0 * diam {
        return None;
    }
    let scale = rx.max(ry).max(tol);
    if (rx - ry).abs() > 1e-6 * scale {
        return None; // stale mirror; positions not symmetric about h
    }
    let r = 0.5 * (rx + ry);
    if r <= tol {
        return None;
    }
    let angle_about = |p: P2| -> f64 {
        let v = p - h;
        v.dot(nhat).atan2(v.dot(khat))
    };
    let slip = 1e-6;
    let mut th_x = angle_about(x);
    let mut th_y = angle_about(y);
    for t in [&mut th_x, &mut th_y] {
        if *t < -slip || *t > PI + slip {
            return None; // a path is below the edge line: not single-edge
        }
        *t = t.clamp(0.0, PI);
    }
    let s_a = (a - h).dot(khat);
    let s_b = (b - h).dot(khat);
    let (s_lo, s_hi) = if s_a <= s_b { (s_a, s_b) } else { (s_b, s_a) };
    Some(Episode {
        edge: e,
        h,
        khat,
        nhat,
        r,
        th_x,
        th_y,
        s_lo,
        s_hi,
        folded_last: true,
    })
}

/// Reflect an angle into `[0, pi]`.  Returns the folded value, the total
/// overshoot beyond the interval (the Skorokhod push, in radians), and
/// whether the 0 end / pi end were touched.
fn fold_angle(th: f64) -> (f64, f64, bool, bool) {
    let mut t = th;
    let mut push = 0.0;
    let mut lo = false;
    let mut hi = false;
    let mut guard = 0;
    while (t < 0.0 || t > PI) && guard < 64 {
        if t < 0.0 {
            push += -t;
            t = -t;
            lo = true;
        } else {
            push += t - PI;
            t = 2.0 * PI - t;
            hi = true;
        }
        guard += 1;
    }
    if guard >= 64 {
        t = t.rem_euclid(2.0 * PI);
        if t > PI {
            t = 2.0 * PI - t;
        }
    }
    (t, push, lo, hi)
}

/// One polar step of an active episode.  Returns `Ok(None)` on abort (the
/// episode is cleared and the caller redoes the step in Cartesian form; the
/// path states are untouched in that case).
fn polar_advance(
    stepper: &Stepper,
    st: &mut MirrorState,
    dw: P2,
    dt: f64,
    coalesce_tol: f64,
) -> Result<Option<(StepInfo, StepInfo)>, RbmError> {
    let Some(mut ep) = st.episode else {
        return Ok(None);
    };
    let grid = &stepper.grid;
    let tol = stepper.tol;

    // Decompose the driving increment in x's polar frame.  The tangential
    // unit vector is the CCW perpendicular of the radial one, matching the
    // positive angle direction.
    let rhat = ep.khat * ep.th_x.cos() + ep.nhat * ep.th_x.sin();
    let that = rhat.perp();
    let d_r = dw.dot(rhat);
    let d_th = dw.dot(that) / ep.r;

    // Shared radial part: Bessel(2)-like drift away from the hinge.  Close
    // to the hinge the Euler drift dt/(2r) explodes; there we drop it and
    // reflect the radius at zero instead (the pair is about to coalesce at
    // that scale anyway).
    let sd = dt.sqrt();
    let mut r_new = if ep.r >= 0.25 * sd {
        ep.r + d_r + dt / (2.0 * ep.r)
    } else {
        (ep.r + d_r).abs()
    };
    if r_new <= 0.0 {
        r_new = (ep.r + d_r).abs();
    }
    if r_new <= tol {
        r_new = tol;
    }

    let (tx, push_x, lo_x, hi_x) = fold_angle(ep.th_x + d_th);
    let (ty, push_y, lo_y, hi_y) = fold_angle(ep.th_y - d_th);

    // Folds are only valid while the touch point stays on the segment;
    // near a vertex the neighbouring edge matters and we abort to the
    // Cartesian projector.
    let slack = 4.0 * tol;
    let ok_lo = ep.s_lo - slack <= r_new && r_new <= ep.s_hi + slack;
    let ok_hi = ep.s_lo - slack <= -r_new && -r_new <= ep.s_hi + slack;
    if ((lo_x || lo_y) && !ok_lo) || ((hi_x || hi_y) && !ok_hi) {
        st.episode = None;
        return Ok(None);
    }

    let d_old = ep.th_x - ep.th_y;
    let d_new = tx - ty;
    let sep_new = 2.0 * r_new * (0.5 * d_new.abs()).sin();
    if d_old.signum() != d_new.signum() || sep_new <= coalesce_tol || 2.0 * r_new <= coalesce_tol {
        let tm = 0.5 * (tx + ty);
        let meet = ep.h + (ep.khat * tm.cos() + ep.nhat * tm.sin()) * r_new;
        st.x_state.time += dt;
        st.y_state.time += dt;
        st.x_state.local_time += r_new * push_x;
        st.y_state.local_time += r_new * push_y;
        st.coalesce_at(stepper, meet)?;
        return Ok(Some((free_info(), free_info())));
    }

    // Keep the materialised points strictly inside: floor the angles so the
    // height above the edge line is at least the projection nudge.
    let th_floor = (tol / r_new).min(0.1);
    let txc = tx.clamp(th_floor, PI - th_floor);
    let tyc = ty.clamp(th_floor, PI - th_floor);
    let px = ep.h + (ep.khat * txc.cos() + ep.nhat * txc.sin()) * r_new;
    let py = ep.h + (ep.khat * tyc.cos() + ep.nhat * tyc.sin()) * r_new;
    if !grid.inside(px) || !grid.inside(py) {
        st.episode = None;
        return Ok(None); // left the single-edge neighbourhood
    }

    let folded = lo_x || hi_x || lo_y || hi_y;
    let prev_folded = ep.folded_last;
    ep.r = r_new;
    ep.th_x = txc;
    ep.th_y = tyc;
    ep.folded_last = folded;

    st.x_state.position = px;
    st.x_state.time += dt;
    st.y_state.position = py;
    st.y_state.time += dt;

    let mut ix = free_info();
    let mut iy = free_info();
    if lo_x || hi_x {
        let touch = if lo_x { ep.h + ep.khat * r_new } else { ep.h - ep.khat * r_new };
        st.x_state.local_time += r_new * push_x;
        st.x_state.last_edge = Some(ep.edge);
        ix = StepInfo {
            reflected: true,
            edge: Some(ep.edge),
            contact: Some(touch),
            push: r_new * push_x,
        };
    }
    if lo_y || hi_y {
        let touch = if lo_y { ep.h + ep.khat * r_new } else { ep.h - ep.khat * r_new };
        st.y_state.local_time += r_new * push_y;
        st.y_state.last_edge = Some(ep.edge);
        iy = StepInfo {
            reflected: true,
            edge: Some(ep.edge),
            contact: Some(touch),
            push: r_new * push_y,
        };
    }

    // The mirror is the line through the hinge along the bisecting angle
    // (both paths sit at the same radius, so this is the perpendicular
    // bisector of the pair).
    let tm = 0.5 * (txc + tyc);
    let mdir = ep.khat * tm.cos() + ep.nhat * tm.sin();
    st.mirror = Some(MirrorLine { point: ep.h, dir: mdir });
    st.hinge = Some(ep.h);

    // Disengage once both paths sit several step widths clear of the edge
    // and the last two advances were fold-free.
    let clear = 5.0 * sd;
    let hx = r_new * txc.sin();
    let hy = r_new * tyc.sin();
    if !folded && !prev_folded && hx > clear && hy > clear {
        st.episode = None;
        if let Some(m) = MirrorLine::bisector(px, py) {
            st.mirror = Some(m);
        }
    } else {
        st.episode = Some(ep);
    }
    Ok(Some((ix, iy)))
}

// ---------------------------------------------------------------------------
// Hinge queries
// ---------------------------------------------------------------------------

/// Intersection of the current mirror with the line containing `edge`, and
/// the sign of the mirror's rotation about that hinge while the contact on
/// this edge persists: `+1` = counterclockwise, `-1` = clockwise, `0` when
/// the mirror is already normal to the edge.  Reflection pushes pivot the
/// mirror toward the edge normal, so the sign is determined by which side
/// of perpendicular the mirror currently lies on.
///
/// `None` when the pair is coalesced (no mirror) or the mirror runs
/// parallel to the edge (no hinge: the mirror translates instead).
pub fn hinge_update(stepper: &Stepper, st: &MirrorState, edge: u32) -> Option<(P2, i8)> {
    let m = st.mirror?;
    let a = stepper.grid.a[edge as usize];
    let b = stepper.grid.b[edge as usize];
    let khat = (b - a).normalized();
    if m.dir.cross(khat).abs() < 1e-9 {
        return None;
    }
    let h = m.intersect_line(a, khat)?;
    let nhat = stepper.grid.normal_in[edge as usize];
    let mut tm = m.dir.dot(nhat).atan2(m.dir.dot(khat));
    if tm < 0.0 {
        tm += PI;
    }
    let sign = if (tm - 0.5 * PI).abs() < 1e-12 {
        0
    } else if tm < 0.5 * PI {
        1
    } else {
        -1
    };
    Some((h, sign))
}

/// Predicted motion of the hinge on the line through `kx_a`–`kx_b` when the
/// mirror pivots about its hinge on the line through `ky_a`–`ky_b` toward
/// being normal to that second line.  Returns the current hinge on the
/// first line and the unit direction (along that line) in which it moves.
/// Built by a small finite-difference pivot; `None` in degenerate
/// configurations (mirror parallel to either line, or no motion).
pub fn predicted_hinge_ray(
    m: MirrorLine,
    kx_a: P2,
    kx_b: P2,
    ky_a: P2,
    ky_b: P2,
) -> Option<(P2, P2)> {
    let kx = (kx_b - kx_a).normalized();
    let ky = (ky_b - ky_a).normalized();
    let hx = m.intersect_line(kx_a, kx)?;
    let hy = m.intersect_line(ky_a, ky)?;
    let ny = ky.perp();
    let mut tm = m.dir.dot(ny).atan2(m.dir.dot(ky));
    if tm < 0.0 {
        tm += PI;
    }
    let sign = if tm < 0.5 * PI { 1.0 } else { -1.0 };
    let rotated = MirrorLine {
        point: hy,
        dir: m.dir.rotate(1e-6 * sign),
    };
    let hx2 = rotated.intersect_line(kx_a, kx)?;
    let d = hx2 - hx;
    let n = d.norm();
    if n == 0.0 {
        return None;
    }
    Some((hx, d / n))
}

// ---------------------------------------------------------------------------
// Half-plane skew product
// ---------------------------------------------------------------------------

/// Output of [`mirror_halfplane_skew`]: both planar paths sampled on the
/// step grid.  The hinge is the origin, the boundary is the x-axis and the
/// domain is the upper half plane.
#[derive(Clone, Debug)]
pub struct SkewPaths {
    pub t: Vec<f64>,
    pub x: Vec<P2>,
    pub y: Vec<P2>,
    pub r: Vec<f64>,
    pub sigma: Vec<f64>,
    pub coalesce_t: Option<f64>,
}

/// Draws one standard normal at a time from a `(step, draw)`-addressed
/// stream, consuming Box–Muller pairs lazily.
struct DrawCursor {
    noise: NoiseStream,
    step: u64,
    draw: u32,
    spare: Option<f64>,
}

impl DrawCursor {
    fn new(noise: NoiseStream, step: u64) -> DrawCursor {
        DrawCursor { noise, step, draw: 0, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let (a, b) = self.noise.pair(self.step, self.draw);
        self.draw += 1;
        self.spare = Some(b);
        a
    }
}

/// Mirror coupling in the upper half plane via the skew-product
/// construction: a shared Bessel(2) radius about the hinge, plus two angle
/// processes driven by opposite copies of one Brownian motion, run in the
/// clock `sigma(t) = ∫ R_s^{-2} ds` and folded into `[0, pi]`.  The pair
/// coalesces at the first angle meeting and moves as one path afterwards.
///
/// The radial Euler step rejects candidates that would cross zero and
/// retries with a locally halved step (fresh draws per refinement level);
/// a Bessel(2) process is a.s. positive, so this terminates in practice
/// and a reflect-at-zero fallback guards the deepest level.
pub fn mirror_halfplane_skew(
    r0: f64,
    theta_x: f64,
    theta_y: f64,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<SkewPaths, RbmError> {
    if !(r0 > 0.0) || !(dt > 0.0) || !(duration >= 0.0) {
        return Err(RbmError::BadConfig(
            "skew product needs r0 > 0, dt > 0, duration >= 0".into(),
        ));
    }
    if !(0.0..=PI).contains(&theta_x) || !(0.0..=PI).contains(&theta_y) {
        return Err(RbmError::BadConfig("skew angles must lie in [0, pi]".into()));
    }
    let noise = NoiseStream::new(seed);
    let n_steps = (duration / dt).ceil() as u64;
    let polar = |r: f64, th: f64| p2(r * th.cos(), r * th.sin());

    let mut r = r0;
    let mut tx = theta_x;
    let mut ty = theta_y;
    let mut sigma = 0.0;
    let mut coalesce_t = None;
    if (tx - ty).abs() == 0.0 {
        coalesce_t = Some(0.0);
    }

    let cap = n_steps as usize + 1;
    let mut out = SkewPaths {
        t: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
        y: Vec::with_capacity(cap),
        r: Vec::with_capacity(cap),
        sigma: Vec::with_capacity(cap),
        coalesce_t,
    };
    out.t.push(0.0);
    out.x.push(polar(r, tx));
    out.y.push(polar(r, ty));
    out.r.push(r);
    out.sigma.push(0.0);

    for k in 0..n_steps {
        let mut cur = DrawCursor::new(noise, k);
        let xi_th = cur.next();

        let mut advanced: Option<(f64, f64)> = None;
        'level: for level in 0..=10u32 {
            let n_sub = 1u32 << level;
            let h = dt / n_sub as f64;
            let sh = h.sqrt();
            let mut rr = r;
            let mut ds = 0.0;
            for _ in 0..n_sub {
                let cand = rr + sh * cur.next() + h / (2.0 * rr);
                if cand <= 0.0 {
                    continue 'level;
                }
                ds += h / (rr * rr);
                rr = cand;
            }
            advanced = Some((rr, ds));
            break;
        }
        let (r_new, ds) = advanced.unwrap_or_else(|| {
            let n_sub = 1u32 << 10;
            let h = dt / n_sub as f64;
            let sh = h.sqrt();
            let mut rr = r;
            let mut ds = 0.0;
            for _ in 0..n_sub {
                ds += h / (rr * rr);
                rr = (rr + sh * cur.next() + h / (2.0 * rr)).abs().max(1e-12);
            }
            (rr, ds)
        });

        let da = ds.sqrt() * xi_th;
        let (tx2, _, _, _) = fold_angle(tx + da);
        let (ty2, _, _, _) = fold_angle(ty - da);

        r = r_new;
        sigma += ds;
        if out.coalesce_t.is_none() {
            let crossed = (tx - ty).signum() != (tx2 - ty2).signum();
            if crossed || (tx2 - ty2).abs() * r <= 1e-12 {
                let mid = 0.5 * (tx2 + ty2);
                tx = mid;
                ty = mid;
                out.coalesce_t = Some((k + 1) as f64 * dt);
            } else {
                tx = tx2;
                ty = ty2;
            }
        } else {
            tx = tx2;
            ty = tx2;
        }

        out.t.push((k + 1) as f64 * dt);
        out.x.push(polar(r, tx));
        out.y.push(polar(r, ty));
        out.r.push(r);
        out.sigma.push(sigma);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Level-curve probe
// ---------------------------------------------------------------------------

/// Membership test for the tube of half-width `tol` around a set of
/// polylines, with a bounding-box fast path and y-bucketed segment lists.
/// "Hitting the curve" for a sampled path means a sampled position enters
/// this tube.
pub struct GammaProbe {
    segs: Vec<(P2, P2)>,
    tol: f64,
    lo: P2,
    hi: P2,
    buckets: Vec<Vec<u32>>,
    y0: f64,
    dy: f64,
}

impl GammaProbe {
    pub fn new(polylines: &[Vec<P2>], tol: f64) -> GammaProbe {
        let mut segs = Vec::new();
        for pl in polylines {
            for w in pl.windows(2) {
                if w[0].dist(w[1]) > 0.0 {
                    segs.push((w[0], w[1]));
                }
            }
        }
        assert!(!segs.is_empty(), "level-curve probe needs at least one segment");
        let mut lo = p2(f64::INFINITY, f64::INFINITY);
        let mut hi = p2(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(a, b) in &segs {
            lo.x = lo.x.min(a.x.min(b.x));
            lo.y = lo.y.min(a.y.min(b.y));
            hi.x = hi.x.max(a.x.max(b.x));
            hi.y = hi.y.max(a.y.max(b.y));
        }
        lo = lo - p2(tol, tol);
        hi = hi + p2(tol, tol);
        let nb = 64usize;
        let dy = ((hi.y - lo.y) / nb as f64).max(f64::MIN_POSITIVE);
        let mut buckets = vec![Vec::new(); nb];
        for (i, &(a, b)) in segs.iter().enumerate() {
            let y_lo = a.y.min(b.y) - tol;
            let y_hi = a.y.max(b.y) + tol;
            let b0 = (((y_lo - lo.y) / dy).floor() as isize).clamp(0, nb as isize - 1) as usize;
            let b1 = (((y_hi - lo.y) / dy).floor() as isize).clamp(0, nb as isize - 1) as usize;
            for bucket in &mut buckets[b0..=b1] {
                bucket.push(i as u32);
            }
        }
        GammaProbe { segs, tol, lo, hi, buckets, y0: lo.y, dy }
    }

    pub fn from_level_curve(curve: &LevelCurve, tol: f64) -> GammaProbe {
        GammaProbe::new(&curve.polylines, tol)
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn hit(&self, p: P2) -> bool {
        if p.x < self.lo.x || p.x > self.hi.x || p.y < self.lo.y || p.y > self.hi.y {
            return false;
        }
        let nb = self.buckets.len() as isize;
        let b = (((p.y - self.y0) / self.dy).floor() as isize).clamp(0, nb - 1) as usize;
        let t2 = self.tol * self.tol;
        for &i in &self.buckets[b] {
            let (a, bb) = self.segs[i as usize];
            let (d2, _) = point_segment(p, a, bb);
            if d2 <= t2 {
                return true;
            }
        }
        false
    }
}

// ---------------------------------------------------------------------------
// Staged protocol
// ---------------------------------------------------------------------------

/// Resolved parameters of the staged chase protocol at one `eps`.
#[derive(Clone, Debug)]
pub struct StageSchedule {
    pub c_star: f64,
    pub eps: f64,
    /// Number of full chase windows minus one: windows `0..=j0` must be
    /// cleared through their gates for the ladder to succeed.
    pub j0: usize,
    /// Watch-box geometry, clipped to the domain at moderate `eps`.
    pub window: StageWindow,
    /// Half-width of the tube around the target curve that counts as a hit.
    pub tol_gamma: f64,
    /// Separation below which a mirror pair is declared coalesced.
    pub coalesce_tol: f64,
    /// Runs are censored (with partial records) beyond this time.
    pub max_time: f64,
    /// The region ids the protocol consults, in stage order.
    pub regions: Vec<NamedRegion>,
    /// Labels of the stopping times the protocol realises, in order.
    pub stop_markers: Vec<String>,
}

impl StageSchedule {
    pub fn new(eps: f64, c_star: f64, tol_gamma: f64) -> StageSchedule {
        let window = StageWindow::new(eps, c_star);
        let j0 = window.j0;
        let mut regions = vec![
            NamedRegion::A1,
            NamedRegion::A2,
            NamedRegion::A3,
            NamedRegion::A4,
        ];
        let mut stop_markers = vec!["S0".to_string()];
        for j in 0..=j0 {
            regions.push(NamedRegion::A5j(j));
            regions.push(NamedRegion::A6j(j));
            stop_markers.push(format!("S1^{}", j + 1));
            stop_markers.push(format!("S2^{}", j + 1));
        }
        regions.extend([
            NamedRegion::A7,
            NamedRegion::A8,
            NamedRegion::A9,
            NamedRegion::A10,
            NamedRegion::A11,
            NamedRegion::A12,
            NamedRegion::A13,
        ]);
        for s in 3..=12 {
            stop_markers.push(format!("S{s}"));
        }
        StageSchedule {
            c_star,
            eps,
            j0,
            window,
            tol_gamma,
            coalesce_tol: 1e-4 * eps,
            max_time: 200.0,
            regions,
            stop_markers,
        }
    }

    pub fn with_max_time(mut self, t: f64) -> StageSchedule {
        self.max_time = t;
        self
    }
}

/// Full outcome of one staged run.
///
/// Flag semantics (all evaluated on the sampled skeleton):
/// * `g0` — the upper path left its start box through the gate on the
///   right wall, no later than the lower path left its holding box.
/// * `f[j]` / `f_star` — chase window `j` was exited through its gate;
///   `f_star` when all windows `0..=j0` were.
/// * `g1` — the lower path's first exit from the wall-approach box was a
///   contact with the middle third of the upper wall (recorded only; the
///   regime switches to mirror at that exit either way).
/// * `g2` — the first exit of the mirror pair from the wide watch box was
///   through one of its side walls (decided at that first exit).
/// * `g3` — during the independent leg, the upper path crossed the `x = 1`
///   section strictly before either path re-entered the inner window, with
///   the lower path still left of `x = 1/2` at that crossing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingRecord {
    pub run_id: u64,
    pub seed: u64,
    pub eps: f64,
    pub c_star: f64,
    pub dt: f64,
    pub j0: usize,
    pub window_clipped: bool,
    pub g0: bool,
    pub f: Vec<bool>,
    pub f_star: bool,
    pub g1: Option<bool>,
    pub g2: Option<bool>,
    pub g3: Option<bool>,
    /// Coalescence time of the pair, if it coalesced.
    pub u: Option<f64>,
    /// Hitting times of the target curve's tube; `None` means censored at
    /// `max_time`.
    pub t_x_gamma: Option<f64>,
    pub t_y_gamma: Option<f64>,
    /// Position of the lower path when the upper path first hits the curve.
    pub x_at_t_y: Option<(f64, f64)>,
    /// Both positions at the first curve hit by either path (time
    /// [`CouplingRecord::s_time`]).
    pub x_at_s: Option<(f64, f64)>,
    pub y_at_s: Option<(f64, f64)>,
    /// Left-side mirror/boundary intersection monitor: checks performed and
    /// observed dips of that intersection point below `y = 0`.
    pub k_checked: u64,
    pub k_violations: u64,
    pub final_time: f64,
    pub steps: u64,
}

impl CouplingRecord {
    /// Both hits observed, upper path strictly first, lower path still in
    /// the left half at that moment.
    pub fn good(&self) -> bool {
        match (self.t_y_gamma, self.t_x_gamma) {
            (Some(ty), Some(tx)) => {
                ty < tx && self.x_at_t_y.map_or(false, |(x, _)| x <= 0.5)
            }
            _ => false,
        }
    }

    /// Both hits observed and the lower path arrived strictly first.
    pub fn bad(&self) -> bool {
        matches!((self.t_x_gamma, self.t_y_gamma), (Some(tx), Some(ty)) if tx < ty)
    }

    pub fn censored(&self) -> bool {
        self.t_x_gamma.is_none() || self.t_y_gamma.is_none()
    }

    /// Time of the first curve hit by either path, if any was observed.
    pub fn s_time(&self) -> Option<f64> {
        match (self.t_x_gamma, self.t_y_gamma) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }

    pub fn f_count(&self) -> usize {
        self.f.iter().filter(|&&b| b).count()
    }
}

/// CSV export, one row per run.  Optional values render as empty fields,
/// booleans as 0/1.
pub fn coupling_records_csv(records: &[CouplingRecord]) -> String {
    fn ob(v: Option<bool>) -> String {
        v.map_or(String::new(), |b| (b as u8).to_string())
    }
    fn of(v: Option<f64>) -> String {
        v.map_or(String::new(), |x| x.to_string())
    }
    fn op(v: Option<(f64, f64)>) -> (String, String) {
        match v {
            Some((x, y)) => (x.to_string(), y.to_string()),
            None => (String::new(), String::new()),
        }
    }
    let mut s = String::from(
        "run_id,seed,eps,c_star,dt,j0,window_clipped,g0,f_count,f_star,g1,g2,g3,\
         u,t_x_gamma,t_y_gamma,x_at_ty_1,x_at_ty_2,x_at_s_1,x_at_s_2,y_at_s_1,y_at_s_2,\
         k_checked,k_violations,final_time,steps,good,bad,censored\n",
    );
    for r in records {
        let (ax, ay) = op(r.x_at_t_y);
        let (sx1, sx2) = op(r.x_at_s);
        let (sy1, sy2) = op(r.y_at_s);
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.run_id,
            r.seed,
            r.eps,
            r.c_star,
            r.dt,
            r.j0,
            r.window_clipped as u8,
            r.g0 as u8,
            r.f_count(),
            r.f_star as u8,
            ob(r.g1),
            ob(r.g2),
            ob(r.g3),
            of(r.u),
            of(r.t_x_gamma),
            of(r.t_y_gamma),
            ax,
            ay,
            sx1,
            sx2,
            sy1,
            sy2,
            r.k_checked,
            r.k_violations,
            r.final_time,
            r.steps,
            r.good() as u8,
            r.bad() as u8,
            r.censored() as u8,
        ));
    }
    s
}

/// Earliest parameter in (0, 1] at which the segment p→q crosses the
/// vertical line x = c with ordinate inside [y0, y1].
fn cross_v(p: P2, q: P2, c: f64, y0: f64, y1: f64) -> Option<f64> {
    let dx = q.x - p.x;
    if dx == 0.0 {
        return None;
    }
    let t = (c - p.x) / dx;
    if !(t > 0.0 && t <= 1.0) {
        return None;
    }
    let y = p.y + t * (q.y - p.y);
    if y < y0 || y > y1 {
        return None;
    }
    Some(t)
}

/// Earliest parameter in (0, 1] at which the segment p→q crosses the
/// horizontal line y = c with abscissa inside [x0, x1].
fn cross_h(p: P2, q: P2, c: f64, x0: f64, x1: f64) -> Option<f64> {
    let dy = q.y - p.y;
    if dy == 0.0 {
        return None;
    }
    let t = (c - p.y) / dy;
    if !(t > 0.0 && t <= 1.0) {
        return None;
    }
    let x = p.x + t * (q.x - p.x);
    if x < x0 || x > x1 {
        return None;
    }
    Some(t)
}

fn min_event(cands: &[(Option<f64>, u8)]) -> Option<(f64, u8)> {
    let mut best: Option<(f64, u8)> = None;
    for &(t, kind) in cands {
        if let Some(t) = t {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, kind));
            }
        }
    }
    best
}

/// Monitor for the "left" intersection of the pair's mirror with the
/// domain boundary: looking from the lower path toward the upper one, the
/// boundary point reached leftward along the perpendicular bisector.  The
/// staged protocol is built so that this point keeps a nonnegative height;
/// dips below `y = 0` are counted as violations.
struct SideMonitor {
    checked: u64,
    violations: u64,
}

impl SideMonitor {
    fn new() -> SideMonitor {
        SideMonitor { checked: 0, violations: 0 }
    }

    fn check(&mut self, grid: &EdgeGrid, x: P2, y: P2, diam: f64) {
        let d = y - x;
        let n = d.norm();
        if n == 0.0 {
            return;
        }
        self.checked += 1;
        let dir = d.perp() / n;
        let mid = (x + y) * 0.5;
        if dir.x < 0.0 {
            // The ray cannot pass the left wall, so the hit parameter is at
            // most the distance to x = 0; if even the lowest reachable
            // point stays above y = 0 there is nothing to check.
            let t0 = mid.x / -dir.x;
            let worst = mid.y + if dir.y < 0.0 { dir.y * t0 } else { 0.0 };
            if worst >= 0.0 {
                return;
            }
            if let Some((tv, _e)) = grid.ray_first_hit(mid, dir, 0.0, t0 * (1.0 + 1e-9)) {
                if (mid.y + dir.y * tv) < 0.0 {
                    self.violations += 1;
                }
            }
        } else {
            if mid.y >= 0.0 && dir.y >= 0.0 {
                return;
            }
            if let Some((tv, _e)) = grid.ray_first_hit(mid, dir, 0.0, 4.0 * diam) {
                if (mid.y + dir.y * tv) < 0.0 {
                    self.violations += 1;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    /// Watching the upper path against its start box and the lower path
    /// against its holding box (decides `g0`).
    HoldingBoxes,
    /// Chase ladder: the upper path must exit window `j` through its gate.
    Chase { j: usize },
    /// Synchronous until the lower path first leaves the wall-approach box
    /// (decides `g1`), then mirror.
    ToWall,
    /// Mirror pair inside the wide watch box (decides `g2`).
    WallWatch,
    /// Independent pair until either re-enters the inner window (decides
    /// `g3`), then mirror.
    SplitWatch,
    /// Mirror (or coalesced) until both curve hits resolve.
    Tail,
}

/// Run the staged chase protocol once.  The pair starts at `(0,0)` and
/// `(0, eps)`; `noise` should already be keyed per run.  The run ends when
/// both paths have entered the curve tube or at `schedule.max_time`
/// (censored, partial record).
pub fn staged_run(
    stepper: &Stepper,
    gamma: &GammaProbe,
    schedule: &StageSchedule,
    dt: f64,
    noise: NoiseStream,
    run_id: u64,
    seed: u64,
) -> Result<CouplingRecord, RbmError> {
    let e = schedule.eps;
    let w = schedule.window;
    let j0 = schedule.j0;
    let diam = stepper.spec.diameter();
    let s_x = noise.substream(0);
    let s_y = noise.substream(1);
    let sd = dt.sqrt();

    let mut st = MirrorState::synchronous(p2(0.0, 0.0), p2(0.0, e));
    let mut phase = Phase::HoldingBoxes;
    let mut monitor = SideMonitor::new();

    let mut rec = CouplingRecord {
        run_id,
        seed,
        eps: e,
        c_star: schedule.c_star,
        dt,
        j0,
        window_clipped: w.clipped,
        g0: false,
        f: Vec::new(),
        f_star: false,
        g1: None,
        g2: None,
        g3: None,
        u: None,
        t_x_gamma: None,
        t_y_gamma: None,
        x_at_t_y: None,
        x_at_s: None,
        y_at_s: None,
        k_checked: 0,
        k_violations: 0,
        final_time: 0.0,
        steps: 0,
    };

    // Wide-watch bookkeeping: (absolute step of exit, in-step parameter,
    // exit was through a side wall).
    let mut x_exit: Option<(u64, f64, bool)> = None;
    let mut y_exit: Option<(u64, f64, bool)> = None;
    // Independent-leg bookkeeping: the upper path's crossing of x = 1.
    let mut mid_cross: Option<(u64, f64, bool)> = None;

    let in_a9 = |p: P2| p.x > w.a9_lo && p.x < w.a9_hi && p.y > 0.0;
    let in_a11 = |p: P2| p.x < e || (p.x > w.a11_lo && p.x < w.a11_hi);

    if gamma.hit(st.x_state.position) {
        rec.t_x_gamma = Some(0.0);
    }
    if gamma.hit(st.y_state.position) {
        rec.t_y_gamma = Some(0.0);
        rec.x_at_t_y = Some((st.x_state.position.x, st.x_state.position.y));
    }
    if rec.t_x_gamma.is_some() || rec.t_y_gamma.is_some() {
        rec.x_at_s = Some((st.x_state.position.x, st.x_state.position.y));
        rec.y_at_s = Some((st.y_state.position.x, st.y_state.position.y));
    }

    let max_steps = (schedule.max_time / dt).ceil() as u64;
    let mut n: u64 = 0;
    let mut t = 0.0;

    while n < max_steps {
        if rec.t_x_gamma.is_some() && rec.t_y_gamma.is_some() {
            break;
        }
        let px = st.x_state.position;
        let py = st.y_state.position;
        let (g1n, g2n) = s_x.normal_pair(n);
        let dw = p2(g1n * sd, g2n * sd);

        let (ix, _iy) = match st.regime {
            Regime::Synchronous => synchronous_step(stepper, &mut st, dw, dt)?,
            Regime::Mirror | Regime::Coalesced => {
                mirror_step(stepper, &mut st, dw, dt, schedule.coalesce_tol)?
            }
            Regime::Independent => {
                let a = stepper.step(&mut st.x_state, dw, dt)?;
                let (h1, h2) = s_y.normal_pair(n);
                let b = stepper.step(&mut st.y_state, p2(h1 * sd, h2 * sd), dt)?;
                (a, b)
            }
        };
        n += 1;
        t = n as f64 * dt;

        if st.regime == Regime::Coalesced && rec.u.is_none() {
            rec.u = Some(t);
        }

        let qx = st.x_state.position;
        let qy = st.y_state.position;
        let s_unset = rec.t_x_gamma.is_none() && rec.t_y_gamma.is_none();
        if rec.t_x_gamma.is_none() && gamma.hit(qx) {
            rec.t_x_gamma = Some(t);
        }
        if rec.t_y_gamma.is_none() && gamma.hit(qy) {
            rec.t_y_gamma = Some(t);
            rec.x_at_t_y = Some((qx.x, qx.y));
        }
        if s_unset && (rec.t_x_gamma.is_some() || rec.t_y_gamma.is_some()) {
            rec.x_at_s = Some((qx.x, qx.y));
            rec.y_at_s = Some((qy.x, qy.y));
        }

        if st.regime != Regime::Coalesced
            && rec.t_x_gamma.is_none()
            && rec.t_y_gamma.is_none()
        {
            monitor.check(&stepper.grid, qx, qy, diam);
        }

        match phase {
            Phase::HoldingBoxes => {
                // Upper path vs its start box: right wall (gate range is the
                // lowest part) or floor.
                let y_wall = cross_v(py, qy, e, 0.7 * e, f64::INFINITY);
                let y_floor = cross_h(py, qy, 0.7 * e, 0.0, e);
                let y_ev = min_event(&[(y_wall, 0), (y_floor, 1)]);
                // Lower path vs its holding box.
                let x_ev = min_event(&[
                    (cross_v(px, qx, e, -0.3 * e, 0.1 * e), 0),
                    (cross_h(px, qx, 0.1 * e, 0.0, e), 1),
                    (cross_h(px, qx, -0.3 * e, 0.0, e), 2),
                ]);
                match (y_ev, x_ev) {
                    (None, None) => {}
                    (Some((ty_p, kind)), x_opt)
                        if x_opt.map_or(true, |(tx_p, _)| ty_p <= tx_p) =>
                    {
                        // Ties go to the upper path, matching the gate rule.
                        let hit = py.lerp(qy, ty_p);
                        rec.g0 = kind == 0 && hit.y >= 0.7 * e && hit.y <= 0.8 * e;
                        if rec.g0 {
                            phase = Phase::Chase { j: 0 };
                        } else {
                            st.enter_mirror();
                            phase = Phase::Tail;
                        }
                    }
                    _ => {
                        rec.g0 = false;
                        st.enter_mirror();
                        phase = Phase::Tail;
                    }
                }
            }
            Phase::Chase { j } => {
                let bx0 = j as f64 * e;
                let bx1 = (j + 2) as f64 * e;
                let ev = min_event(&[
                    (cross_v(py, qy, bx1, 0.6 * e, 0.9 * e), 0), // right wall
                    (cross_v(py, qy, bx0, 0.6 * e, 0.9 * e), 1),
                    (cross_h(py, qy, 0.9 * e, bx0, bx1), 2),
                    (cross_h(py, qy, 0.6 * e, bx0, bx1), 3),
                ]);
                if let Some((tv, kind)) = ev {
                    let hit = py.lerp(qy, tv);
                    let through_gate =
                        kind == 0 && hit.y > 0.7 * e && hit.y < 0.8 * e;
                    rec.f.push(through_gate);
                    if through_gate {
                        if j == j0 {
                            rec.f_star = true;
                            phase = Phase::ToWall;
                        } else {
                            phase = Phase::Chase { j: j + 1 };
                        }
                    } else {
                        st.enter_mirror();
                        phase = Phase::Tail;
                    }
                }
            }
            Phase::ToWall => {
                let bx0 = j0 as f64 * e;
                let bx1 = (j0 + 3) as f64 * e;
                let yb = -0.5 * e;
                let box_ev = min_event(&[
                    (cross_v(px, qx, bx0, yb, f64::INFINITY), 0),
                    (cross_v(px, qx, bx1, yb, f64::INFINITY), 1),
                    (cross_h(px, qx, yb, bx0, bx1), 2),
                ]);
                let wall_touch = ix.reflected
                    && ix.contact.map_or(false, |c| {
                        c.y > 0.0 && c.x >= bx0 && c.x <= bx1
                    });
                let ev = match (box_ev, wall_touch) {
                    (Some((tv, _)), _) if tv < 1.0 => Some((tv, false)),
                    (_, true) => Some((1.0, true)),
                    (Some((tv, _)), false) => Some((tv, false)),
                    (None, false) => None,
                };
                if let Some((_tv, on_wall)) = ev {
                    let in_middle = on_wall
                        && ix.contact.map_or(false, |c| {
                            c.x >= (j0 + 1) as f64 * e && c.x <= (j0 + 2) as f64 * e
                        });
                    rec.g1 = Some(in_middle);
                    st.enter_mirror();
                    phase = Phase::WallWatch;
                    x_exit = None;
                    y_exit = None;
                    // A path already outside the wide box exits immediately.
                    for (p, slot) in [(qx, &mut x_exit), (qy, &mut y_exit)] {
                        if !in_a9(p) {
                            let side = p.y > 0.0 && (p.x <= w.a9_lo || p.x >= w.a9_hi);
                            *slot = Some((n, 1.0, side));
                        }
                    }
                }
            }
            Phase::WallWatch => {
                for (p0, p1, slot) in
                    [(px, qx, &mut x_exit), (py, qy, &mut y_exit)]
                {
                    if slot.is_none() {
                        let ev = min_event(&[
                            (cross_v(p0, p1, w.a9_lo, 0.0, f64::INFINITY), 0),
                            (cross_v(p0, p1, w.a9_hi, 0.0, f64::INFINITY), 0),
                            (cross_h(p0, p1, 0.0, w.a9_lo, w.a9_hi), 1),
                        ]);
                        if let Some((tv, kind)) = ev {
                            *slot = Some((n, tv, kind == 0));
                        }
                    }
                }
                let first = match (x_exit, y_exit) {
                    (Some(a), Some(b)) => {
                        Some(if (a.0, a.1) <= (b.0, b.1) { a } else { b })
                    }
                    (Some(a), None) => Some(a),
                    (None, Some(b)) => Some(b),
                    (None, None) => None,
                };
                if let Some((_, _, through_side)) = first {
                    rec.g2 = Some(through_side);
                    if through_side && st.regime != Regime::Coalesced {
                        st.enter_independent();
                        phase = Phase::SplitWatch;
                        mid_cross = None;
                        if in_a11(qx) || in_a11(qy) {
                            rec.g3 = Some(false);
                            st.enter_mirror();
                            phase = Phase::Tail;
                        }
                    } else {
                        phase = Phase::Tail;
                    }
                }
            }
            Phase::SplitWatch => {
                if mid_cross.is_none() {
                    if let Some(tv) =
                        cross_v(py, qy, 1.0, f64::NEG_INFINITY, f64::INFINITY)
                    {
                        let x_then = px.lerp(qx, tv);
                        mid_cross = Some((n, tv, x_then.x <= 0.5));
                    }
                }
                if in_a11(qx) || in_a11(qy) {
                    let ok = match mid_cross {
                        Some((m, tv, left)) => (m < n || tv < 1.0) && left,
                        None => false,
                    };
                    rec.g3 = Some(ok);
                    st.enter_mirror();
                    phase = Phase::Tail;
                }
            }
            Phase::Tail => {}
        }
    }

    rec.k_checked = monitor.checked;
    rec.k_violations = monitor.violations;
    rec.final_time = t;
    rec.steps = n;
    Ok(rec)
}

/// First time two matched traces come within `tol` of each other; `None`
/// if they never do (censored).
pub fn coupling_time(xs: &[(f64, P2)], ys: &[(f64, P2)], tol: f64) -> Option<f64> {
    xs.iter()
        .zip(ys.iter())
        .find(|&(&(_, a), &(_, b))| a.dist(b) <= tol)
        .map(|(&(t, _), _)| t)
}

// ---------------------------------------------------------------------------
