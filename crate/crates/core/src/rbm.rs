//! Reflected Brownian motion in a polygonal domain.
//!
//! The simulation is an Euler skeleton: at each step the particle receives a
//! Gaussian increment; if the candidate position leaves the domain it is
//! projected to the nearest boundary point, the projection distance is added
//! to the accumulated boundary local time, and the position is nudged a
//! geometric tolerance into the interior so that it always classifies as
//! interior. No bridge correction is applied between steps, so boundary
//! features thinner than a few `sqrt(dt)` are resolved only in the skeleton
//! sense; the scheme has the usual `O(sqrt(dt))` weak bias concentrated in a
//! boundary layer. Point location and nearest-boundary queries go through a
//! uniform grid so a step costs O(1) regardless of boundary complexity.
//!
//! All randomness is counter-based: a [`NoiseStream`] maps the triple
//! `(key, step, draw)` to an independent pair of standard normals through an
//! integer hash, so parallel paths and mid-run regime switches can pull noise
//! in any order and still reproduce bit-identically from the seed.

use crate::geometry::{classify, Classification, DomainSpec, EdgeTag, P2};
use crate::stats::wilson_interval;
use rayon::prelude::*;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RbmError {
    #[error("projection did not converge after {iters} iterations near ({x:.6}, {y:.6})")]
    ProjectionStuck { iters: usize, x: f64, y: f64 },
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
}

// ---------------------------------------------------------------------------
// Counter-based Gaussian noise
// ---------------------------------------------------------------------------

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn mix2(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)))
}

/// Map 64 random bits to a uniform in the open interval (0,1).
#[inline]
fn to_unit(r: u64) -> f64 {
    ((r >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Keyed, counter-addressable Gaussian source.
///
/// `pair(step, draw)` is a pure function of `(key, step, draw)`; distinct
/// triples give independent draws. Paths derive their own keys with
/// [`NoiseStream::path`], and logical substreams (e.g. a second particle)
/// with [`NoiseStream::substream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    key: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> NoiseStream {
        NoiseStream {
            key: mix2(seed, 0x6a09_e667_f3bc_c909),
        }
    }

    pub fn path(self, path_id: u64) -> NoiseStream {
        NoiseStream {
            key: mix2(self.key, path_id.wrapping_add(1)),
        }
    }

    pub fn substream(self, lane: u64) -> NoiseStream {
        NoiseStream {
            key: mix2(self.key ^ 0x3c6e_f372_fe94_f82b, lane.wrapping_add(1)),
        }
    }

    /// `draw`-th pair of independent uniforms in (0,1) for this step.
    #[inline]
    pub fn unit_pair(self, step: u64, draw: u32) -> (f64, f64) {
        let k = mix2(mix2(self.key, step), draw as u64);
        (to_unit(k), to_unit(mix64(k ^ GOLDEN)))
    }

    /// `draw`-th pair of independent standard normals for this step
    /// (Box-Muller transform of [`NoiseStream::unit_pair`]).
    #[inline]
    pub fn pair(self, step: u64, draw: u32) -> (f64, f64) {
        let (u1, u2) = self.unit_pair(step, draw);
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        (r * th.cos(), r * th.sin())
    }

    /// First normal pair of the step; the common case of one planar
    /// increment per step.
    #[inline]
    pub fn normal_pair(self, step: u64) -> (f64, f64) {
        self.pair(step, 0)
    }
}

// ---------------------------------------------------------------------------
// Edge grid: O(1) inside tests, nearest-boundary queries, ray casts
// ---------------------------------------------------------------------------

/// Does the closed edge `ab` cross the connector segment `pq`?
///
/// Orientation signs classify each endpoint with the convention that an
/// exactly-zero cross product joins the non-positive side; using the same
/// rule everywhere keeps the crossing parity consistent when a polyline
/// passes exactly through a connector endpoint or vertex.
#[inline]
fn seg_crosses(p: P2, q: P2, a: P2, b: P2) -> bool {
    let d = q - p;
    let o1 = d.cross(a - p) > 0.0;
    let o2 = d.cross(b - p) > 0.0;
    if o1 == o2 {
        return false;
    }
    let e = b - a;
    let o3 = e.cross(p - a) > 0.0;
    let o4 = e.cross(q - a) > 0.0;
    o3 != o4
}

/// Does segment `ab` meet the closed axis-aligned rectangle? (Liang-Barsky
/// clip; conservative by `slack` on every face.)
fn seg_meets_rect(a: P2, b: P2, lo: P2, hi: P2, slack: f64) -> bool {
    let (lo, hi) = (
        P2 {
            x: lo.x - slack,
            y: lo.y - slack,
        },
        P2 {
            x: hi.x + slack,
            y: hi.y + slack,
        },
    );
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-d.x, a.x - lo.x),
        (d.x, hi.x - a.x),
        (-d.y, a.y - lo.y),
        (d.y, hi.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Uniform spatial index over the boundary edges of a [`DomainSpec`].
///
/// Each cell lists every edge intersecting it and precomputes the
/// inside/outside parity of its center, so a point query only counts
/// boundary crossings along the short connector from the cell center.
pub struct EdgeGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: edges of cell `c` are `items[offs[c]..offs[c+1]]`.
    offs: Vec<u32>,
    items: Vec<u32>,
    center_inside: Vec<bool>,
    pub a: Vec<P2>,
    pub b: Vec<P2>,
    pub normal_in: Vec<P2>,
    pub tag: Vec<EdgeTag>,
    prev_edge: Vec<u32>,
    next_edge: Vec<u32>,
    bbox_lo: P2,
    bbox_hi: P2,
}

const GRID_MARGIN_CELLS: usize = 2;

impl EdgeGrid {
    pub fn build(spec: &DomainSpec, cells_across: usize) -> EdgeGrid {
        let (lo, hi) = spec.bbox();
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        let cell = extent / cells_across.max(8) as f64;
        // Irrational-looking origin jitter keeps cell centers and row
        // connectors away from the axis-aligned edges every domain in this
        // family has (x = 0, y = -1, ...).
        let m = GRID_MARGIN_CELLS as f64;
        let x0 = lo.x - cell * (m + 0.381_966_011_250_105);
        let y0 = lo.y - cell * (m + 0.295_598_050_073_098);
        let nx = ((hi.x - x0) / cell).ceil() as usize + 1 + GRID_MARGIN_CELLS;
        let ny = ((hi.y - y0) / cell).ceil() as usize + 1 + GRID_MARGIN_CELLS;

        let ne = spec.edge_count();
        let mut a = Vec::with_capacity(ne);
        let mut b = Vec::with_capacity(ne);
        let mut normal_in = Vec::with_capacity(ne);
        let mut tag = Vec::with_capacity(ne);
        let mut prev_edge = vec![0u32; ne];
        let mut next_edge = vec![0u32; ne];
        for (i, pa, pb, t) in spec.edges() {
            a.push(pa);
            b.push(pb);
            normal_in.push(spec.inward_normal(i));
            tag.push(t);
            let nxt = spec.edge_end(i);
            next_edge[i] = nxt as u32;
            prev_edge[nxt] = i as u32;
        }

        // Cell assignment: exact segment/rectangle tests over each edge's
        // bounding cells, slightly inflated so grazing contacts are kept.
        let slack = 1e-9 * extent;
        let mut per_cell: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
        for e in 0..ne {
            let (pa, pb) = (a[e], b[e]);
            let i0 = (((pa.x.min(pb.x) - slack - x0) / cell).floor() as isize).clamp(0, nx as isize - 1);
            let i1 = (((pa.x.max(pb.x) + slack - x0) / cell).floor() as isize).clamp(0, nx as isize - 1);
            let j0 = (((pa.y.min(pb.y) - slack - y0) / cell).floor() as isize).clamp(0, ny as isize - 1);
            let j1 = (((pa.y.max(pb.y) + slack - y0) / cell).floor() as isize).clamp(0, ny as isize - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let clo = P2 {
                        x: x0 + i as f64 * cell,
                        y: y0 + j as f64 * cell,
                    };
                    let chi = P2 {
                        x: clo.x + cell,
                        y: clo.y + cell,
                    };
                    if seg_meets_rect(pa, pb, clo, chi, slack) {
                        per_cell[j as usize * nx + i as usize].push(e as u32);
                    }
                }
            }
        }
        let mut offs = Vec::with_capacity(nx * ny + 1);
        let mut items = Vec::new();
        offs.push(0u32);
        for c in &per_cell {
            items.extend_from_slice(c);
            offs.push(items.len() as u32);
        }

        // Row-march the center parities: solve the first column of each row
        // with a full crossing count from far outside, then carry the parity
        // across the row, flipping it by the crossings of each short
        // center-to-center connector.
        let mut center_inside = vec![false; nx * ny];
        let far = P2 {
            x: x0 - 7.0 * cell,
            y: 0.0,
        };
        for j in 0..ny {
            let yc = y0 + (j as f64 + 0.5) * cell;
            let c0 = P2 {
                x: x0 + 0.5 * cell,
                y: yc,
            };
            let from = P2 { x: far.x, y: yc };
            let mut par = false;
            for e in 0..ne {
                if seg_crosses(from, c0, a[e], b[e]) {
                    par = !par;
                }
            }
            center_inside[j * nx] = par;
            for i in 1..nx {
                let p = P2 {
                    x: x0 + (i as f64 - 0.5) * cell,
                    y: yc,
                };
                let q = P2 {
                    x: x0 + (i as f64 + 0.5) * cell,
                    y: yc,
                };
                for cidx in [j * nx + i - 1, j * nx + i] {
                    for &e in &items[offs[cidx] as usize..offs[cidx + 1] as usize] {
                        // The connector spans two cells whose edge lists
                        // overlap; split the count at the shared cell face so
                        // edges listed in both cells are only tested where
                        // the connector half actually runs.
                        let mid = P2 {
                            x: x0 + i as f64 * cell,
                            y: yc,
                        };
                        let (s0, s1) = if cidx == j * nx + i - 1 { (p, mid) } else { (mid, q) };
                        if seg_crosses(s0, s1, a[e as usize], b[e as usize]) {
                            par = !par;
                        }
                    }
                }
                center_inside[j * nx + i] = par;
            }
        }

        EdgeGrid {
            x0,
            y0,
            cell,
            nx,
            ny,
            offs,
            items,
            center_inside,
            a,
            b,
            normal_in,
            tag,
            prev_edge,
            next_edge,
            bbox_lo: lo,
            bbox_hi: hi,
        }
    }

    #[inline]
    fn cell_of(&self, p: P2) -> Option<(usize, usize)> {
        let i = ((p.x - self.x0) / self.cell).floor();
        let j = ((p.y - self.y0) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            None
        } else {
            Some((i as usize, j as usize))
        }
    }

    #[inline]
    fn cell_edges(&self, c: usize) -> &[u32] {
        &self.items[self.offs[c] as usize..self.offs[c + 1] as usize]
    }

    /// Is `p` strictly inside the domain? Points outside the bounding box
    /// (or exactly on the boundary, up to the crossing convention) are out.
    #[inline]
    pub fn inside(&self, p: P2) -> bool {
        if p.x < self.bbox_lo.x
            || p.x > self.bbox_hi.x
            || p.y < self.bbox_lo.y
            || p.y > self.bbox_hi.y
        {
            return false;
        }
        let (i, j) = match self.cell_of(p) {
            Some(c) => c,
            None => return false,
        };
        let c = j * self.nx + i;
        let center = P2 {
            x: self.x0 + (i as f64 + 0.5) * self.cell,
            y: self.y0 + (j as f64 + 0.5) * self.cell,
        };
        let mut par = self.center_inside[c];
        for &e in self.cell_edges(c) {
            if seg_crosses(center, p, self.a[e as usize], self.b[e as usize]) {
                par = !par;
            }
        }
        par
    }

    /// Nearest boundary point: `(edge, foot, distance, foot parameter)`.
    ///
    /// Expanding ring search, certified: once the best distance is below the
    /// clearance of the next unexplored ring, no farther cell can improve it.
    pub fn nearest(&self, p: P2) -> (u32, P2, f64, f64) {
        let ci = (((p.x - self.x0) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1);
        let cj = (((p.y - self.y0) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1);
        // Distance from p to its (clamped) home cell; zero when p is in the
        // grid. The ring lower bound must be reduced by this slack for
        // queries that fall outside the grid entirely.
        let hx0 = self.x0 + ci as f64 * self.cell;
        let hy0 = self.y0 + cj as f64 * self.cell;
        let dx = (hx0 - p.x).max(p.x - (hx0 + self.cell)).max(0.0);
        let dy = (hy0 - p.y).max(p.y - (hy0 + self.cell)).max(0.0);
        let off_grid = (dx * dx + dy * dy).sqrt();
        let mut best = (f64::INFINITY, 0u32, 0.0f64);
        let rmax = self.nx.max(self.ny) as isize;
        for r in 0..=rmax {
            if best.0.is_finite() {
                let clearance = ((r - 1).max(0) as f64 * self.cell - off_grid).max(0.0);
                if best.0 <= clearance * clearance {
                    break;
                }
            }
            let mut visit = |i: isize, j: isize| {
                if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                    return;
                }
                let c = j as usize * self.nx + i as usize;
                for &e in self.cell_edges(c) {
                    let (d2, t) =
                        crate::geometry::point_segment(p, self.a[e as usize], self.b[e as usize]);
                    if d2 < best.0 * (1.0 - 1e-14) {
                        best = (d2, e, t);
                    }
                }
            };
            if r == 0 {
                visit(ci, cj);
            } else {
                for i in (ci - r)..=(ci + r) {
                    visit(i, cj - r);
                    visit(i, cj + r);
                }
                for j in (cj - r + 1)..=(cj + r - 1) {
                    visit(ci - r, j);
                    visit(ci + r, j);
                }
            }
        }
        let (d2, e, t) = best;
        let foot = self.a[e as usize].lerp(self.b[e as usize], t);
        (e, foot, d2.sqrt(), t)
    }

    /// Inward direction to leave the boundary from the foot of edge `e` at
    /// parameter `t`: the edge normal, blended with the neighbor's normal
    /// when the foot sits at a shared vertex so corner projections move into
    /// the wedge rather than along one face.
    pub fn inward_dir(&self, e: u32, t: f64, vertex_band: f64) -> P2 {
        let n = self.normal_in[e as usize];
        let other = if t <= vertex_band {
            self.prev_edge[e as usize]
        } else if t >= 1.0 - vertex_band {
            self.next_edge[e as usize]
        } else {
            return n;
        };
        let s = n + self.normal_in[other as usize];
        if s.norm2() > 1e-24 {
            s.normalized()
        } else {
            n
        }
    }

    /// First boundary intersection along the ray `o + t*d`, `t in (t_min,
    /// t_max]`: grid walk, returning `(t, edge)` of the earliest hit.
    pub fn ray_first_hit(&self, o: P2, d: P2, t_min: f64, t_max: f64) -> Option<(f64, u32)> {
        let (mut i, mut j) = match self.cell_of(o) {
            Some(c) => (c.0 as isize, c.1 as isize),
            None => return None,
        };
        let step_i: isize = if d.x > 0.0 { 1 } else { -1 };
        let step_j: isize = if d.y > 0.0 { 1 } else { -1 };
        let next_face = |i: isize, positive: bool, o: f64, origin: f64| -> f64 {
            let face = origin + (i + if positive { 1 } else { 0 }) as f64 * self.cell;
            face - o
        };
        let mut t_next_x = if d.x != 0.0 {
            next_face(i, d.x > 0.0, o.x, self.x0) / d.x
        } else {
            f64::INFINITY
        };
        let mut t_next_y = if d.y != 0.0 {
            next_face(j, d.y > 0.0, o.y, self.y0) / d.y
        } else {
            f64::INFINITY
        };
        let dt_x = if d.x != 0.0 {
            (self.cell / d.x).abs()
        } else {
            f64::INFINITY
        };
        let dt_y = if d.y != 0.0 {
            (self.cell / d.y).abs()
        } else {
            f64::INFINITY
        };
        let mut t_enter = 0.0f64;
        let mut best: Option<(f64, u32)> = None;
        loop {
            let t_exit = t_next_x.min(t_next_y).min(t_max);
            let c = j as usize * self.nx + i as usize;
            for &e in self.cell_edges(c) {
                let (ea, eb) = (self.a[e as usize], self.b[e as usize]);
                let r = eb - ea;
                let denom = d.cross(r);
                if denom == 0.0 {
                    continue;
                }
                let t = (ea - o).cross(r) / denom;
                let u = (ea - o).cross(d) / denom;
                if (-1e-12..=1.0 + 1e-12).contains(&u)
                    && t > t_min
                    && t >= t_enter - 1e-9
                    && t <= t_exit + 1e-9
                    && best.map(|(bt, _)| t < bt).unwrap_or(true)
                {
                    best = Some((t, e));
                }
            }
            if let Some((bt, _)) = best {
                if bt <= t_exit {
                    return best;
                }
            }
            if t_exit >= t_max {
                return best;
            }
            if t_next_x < t_next_y {
                i += step_i;
                t_enter = t_next_x;
                t_next_x += dt_x;
            } else {
                j += step_j;
                t_enter = t_next_y;
                t_next_y += dt_y;
            }
            if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                return best;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Stepper
// ---------------------------------------------------------------------------

pub const MAX_PROJ_ITERS: usize = 8;

/// One particle's simulation state.
#[derive(Clone, Copy, Debug)]
pub struct PathState {
    pub position: P2,
    pub time: f64,
    pub local_time: f64,
    /// Edge the particle was last projected onto, if any.
    pub last_edge: Option<u32>,
}

impl PathState {
    pub fn at(p: P2) -> PathState {
        PathState {
            position: p,
            time: 0.0,
            local_time: 0.0,
            last_edge: None,
        }
    }
}

/// What happened during one Euler step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepInfo {
    pub reflected: bool,
    /// Final projection edge for this step, if the step reflected.
    pub edge: Option<u32>,
    /// Foot of the final projection (the boundary contact point).
    pub contact: Option<P2>,
    /// Distance added to local time this step.
    pub push: f64,
}

/// Domain plus acceleration structures; shared, read-only during simulation.
pub struct Stepper {
    pub spec: DomainSpec,
    pub grid: EdgeGrid,
    /// Geometric tolerance (`1e-12 x` diameter); also the inward nudge.
    pub tol: f64,
}

impl Stepper {
    pub fn new(spec: DomainSpec) -> Stepper {
        let grid = EdgeGrid::build(&spec, 512);
        let tol = spec.tol();
        Stepper { spec, grid, tol }
    }

    /// Advance `st` by the increment `dw` over `dt` with the projection
    /// scheme. Projection iterates at most [`MAX_PROJ_ITERS`] times (corner
    /// pockets may need more than one) and errors out rather than silently
    /// accepting an exterior position.
    pub fn step(&self, st: &mut PathState, dw: P2, dt: f64) -> Result<StepInfo, RbmError> {
        let cand = st.position + dw;
        if self.grid.inside(cand) {
            st.position = cand;
            st.time += dt;
            return Ok(StepInfo::default());
        }
        let mut p = cand;
        let mut push = 0.0;
        let mut info = StepInfo {
            reflected: true,
            ..StepInfo::default()
        };
        for _ in 0..MAX_PROJ_ITERS {
            let (e, foot, d, t) = self.grid.nearest(p);
            push += d;
            let band = 4.0 * self.tol / self.grid.a[e as usize].dist(self.grid.b[e as usize]).max(self.tol);
            let dir = self.grid.inward_dir(e, t, band);
            p = foot + dir * self.tol;
            info.edge = Some(e);
            info.contact = Some(foot);
            if self.grid.inside(p) {
                st.position = p;
                st.time += dt;
                st.local_time += push;
                st.last_edge = Some(e);
                info.push = push;
                return Ok(info);
            }
        }
        Err(RbmError::ProjectionStuck {
            iters: MAX_PROJ_ITERS,
            x: cand.x,
            y: cand.y,
        })
    }

    /// Convenience wrapper over the O(E) reference classifier (used for
    /// cross-checks; the grid answers the hot-path queries).
    pub fn classify_ref(&self, p: P2) -> Classification {
        classify(&self.spec, p)
    }
}

// ---------------------------------------------------------------------------
// Simulation drivers
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Euler with projection to the nearest boundary point.
    Project,
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub dt: f64,
    pub rng_seed: u64,
    pub scheme: Scheme,
    /// Hard time cap; runs that reach it are reported as censored.
    pub max_time: f64,
    /// Root noise source; per-path streams derive from it.
    pub noise: NoiseStream,
}

impl SimConfig {
    pub fn new(dt: f64, rng_seed: u64) -> SimConfig {
        SimConfig {
            dt,
            rng_seed,
            scheme: Scheme::Project,
            max_time: 1e3,
            noise: NoiseStream::new(rng_seed),
        }
    }

    pub fn with_max_time(mut self, t: f64) -> SimConfig {
        self.max_time = t;
        self
    }

    pub fn validate(&self) -> Result<(), RbmError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(RbmError::BadConfig(format!("dt = {}", self.dt)));
        }
        if !(self.max_time > 0.0) {
            return Err(RbmError::BadConfig(format!("max_time = {}", self.max_time)));
        }
        Ok(())
    }
}

/// One row of a trajectory trace.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub path_id: u64,
    pub step: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub local_time: f64,
    pub edge: Option<u32>,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("path_id,step,t,x,y,local_time,edge\n");
    for r in rows {
        let _ = write!(s, "{},{},{},{},{},{},", r.path_id, r.step, r.t, r.x, r.y, r.local_time);
        match r.edge {
            Some(e) => {
                let _ = writeln!(s, "{}", e);
            }
            None => s.push('\n'),
        }
    }
    s
}

#[derive(Clone, Copy, Debug)]
pub struct SimOutcome {
    pub state: PathState,
    pub censored: bool,
    pub steps: u64,
}

/// Run one path until `stop` returns true or `max_time` elapses. The stop
/// predicate sees the post-step state and the step's reflection report, and
/// is also consulted once at the start (a start inside the target stops at
/// time zero).
pub fn simulate<F>(
    stepper: &Stepper,
    start: P2,
    cfg: &SimConfig,
    path_id: u64,
    mut stop: F,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<SimOutcome, RbmError>
where
    F: FnMut(&PathState, &StepInfo) -> bool,
{
    cfg.validate()?;
    let noise = cfg.noise.path(path_id);
    let sqdt = cfg.dt.sqrt();
    let mut st = PathState::at(start);
    let push_row = |st: &PathState, step: u64, trace: &mut Option<&mut Vec<TraceRow>>| {
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceRow {
                path_id,
                step,
                t: st.time,
                x: st.position.x,
                y: st.position.y,
                local_time: st.local_time,
                edge: st.last_edge,
            });
        }
    };
    push_row(&st, 0, &mut trace);
    if stop(&st, &StepInfo::default()) {
        return Ok(SimOutcome {
            state: st,
            censored: false,
            steps: 0,
        });
    }
    let max_steps = (cfg.max_time / cfg.dt).ceil() as u64;
    for step in 0..max_steps {
        let (z1, z2) = noise.normal_pair(step);
        let dw = P2 {
            x: z1 * sqdt,
            y: z2 * sqdt,
        };
        let info = stepper.step(&mut st, dw, cfg.dt)?;
        push_row(&st, step + 1, &mut trace);
        if stop(&st, &info) {
            return Ok(SimOutcome {
                state: st,
                censored: false,
                steps: step + 1,
            });
        }
    }
    Ok(SimOutcome {
        state: st,
        censored: true,
        steps: max_steps,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct HitSample {
    pub time: f64,
    pub censored: bool,
    pub position: P2,
}

/// First time the path satisfies `target` (a predicate on position).
pub fn hitting_time<F>(
    stepper: &Stepper,
    start: P2,
    cfg: &SimConfig,
    path_id: u64,
    target: F,
) -> Result<HitSample, RbmError>
where
    F: Fn(P2) -> bool,
{
    let out = simulate(stepper, start, cfg, path_id, |st, _| target(st.position), None)?;
    Ok(HitSample {
        time: out.state.time,
        censored: out.censored,
        position: out.state.position,
    })
}

/// Survival table for the absorbed walk: `p[s][k] = P(T_abs > t_grid[k])`
/// from `starts[s]`, where absorption is the first projection onto an edge
/// tagged [`EdgeTag::DirichletD`]. 95% Wilson intervals accompany every
/// entry; paths still alive at the last grid time are censored (they count
/// as survivors at every grid time, which is exact for this table).
pub struct SurvivalTable {
    pub starts: Vec<P2>,
    pub t_grid: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
    pub n_paths: usize,
    pub n_censored: Vec<usize>,
}

impl SurvivalTable {
    pub fn csv(&self) -> String {
        let mut s = String::from("start_id,t,p,lo,hi\n");
        for (si, _) in self.starts.iter().enumerate() {
            for (k, &t) in self.t_grid.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    si, t, self.p[si][k], self.lo[si][k], self.hi[si][k]
                );
            }
        }
        s
    }
}

pub fn survival_curve(
    stepper: &Stepper,
    starts: &[P2],
    t_grid: &[f64],
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<SurvivalTable, RbmError> {
    let t_end = t_grid.last().copied().unwrap_or(0.0);
    let cfg = SimConfig {
        max_time: t_end.max(cfg.dt),
        ..*cfg
    };
    let mut p = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut n_censored = Vec::new();
    for (si, &start) in starts.iter().enumerate() {
        let base = cfg.noise.substream(si as u64);
        let times: Result<Vec<(f64, bool)>, RbmError> = (0..n_paths)
            .into_par_iter()
            .map(|pid| {
                let cfg_p = SimConfig { noise: base, ..cfg };
                let grid = &stepper.grid;
                let out = simulate(
                    stepper,
                    start,
                    &cfg_p,
                    pid as u64,
                    |_, info| {
                        info.edge
                            .map(|e| grid.tag[e as usize] == EdgeTag::DirichletD)
                            .unwrap_or(false)
                    },
                    None,
                )?;
                Ok((out.state.time, out.censored))
            })
            .collect();
        let times = times?;
        n_censored.push(times.iter().filter(|(_, c)| *c).count());
        let mut ps = Vec::with_capacity(t_grid.len());
        let mut los = Vec::with_capacity(t_grid.len());
        let mut his = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let alive = times
                .iter()
                .filter(|(ti, cens)| *cens || *ti > t)
                .count();
            let (l, h) = wilson_interval(alive as u64, n_paths as u64, crate::stats::Z_95);
            ps.push(alive as f64 / n_paths as f64);
            los.push(l);
            his.push(h);
        }
        p.push(ps);
        lo.push(los);
        hi.push(his);
    }
    Ok(SurvivalTable {
        starts: starts.to_vec(),
        t_grid: t_grid.to_vec(),
        p,
        lo,
        hi,
        n_paths,
        n_censored,
    })
}

/// Fraction of paths of the free (all-Neumann) walk lying in the lower half
/// `{x2 < -1}` at each grid time, with 95% Wilson intervals. One path is
/// simulated to the last grid time and sampled at every grid point.
pub fn heat_mass_curve(
    stepper: &Stepper,
    start: P2,
    t_grid: &[f64],
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<Vec<(f64, f64, f64, f64)>, RbmError> {
    let t_end = t_grid.last().copied().unwrap_or(0.0);
    let cfg = SimConfig {
        max_time: t_end + cfg.dt,
        ..*cfg
    };
    let hits: Result<Vec<Vec<bool>>, RbmError> = (0..n_paths)
        .into_par_iter()
        .map(|pid| {
            let mut below = vec![false; t_grid.len()];
            let mut k = 0usize;
            let out = simulate(
                stepper,
                start,
                &cfg,
                pid as u64,
                |st, _| {
                    while k < t_grid.len() && st.time >= t_grid[k] {
                        below[k] = st.position.y < -1.0;
                        k += 1;
                    }
                    k >= t_grid.len()
                },
                None,
            );
            out.map(|_| below)
        })
        .collect();
    let hits = hits?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let n_below = hits.iter().filter(|h| h[k]).count();
        let (l, h) = wilson_interval(n_below as u64, n_paths as u64, crate::stats::Z_95);
        rows.push((t, n_below as f64 / n_paths as f64, l, h));
    }
    Ok(rows)
}

/// P(X_t in {x2 < -1}) with a 95% CI, for the free walk on the full ring.
pub fn heat_mass_split(
    stepper: &Stepper,
    start: P2,
    t: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<(f64, f64, f64), RbmError> {
    let rows = heat_mass_curve(stepper, start, &[t], n_paths, cfg)?;
    let (_, p, lo, hi) = rows[0];
    Ok((p, lo, hi))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, build_quarter, p2, DomainParams, RegionId};
    use crate::stats::{ks_critical_one, ks_one_sample, std_normal_cdf};

    fn box_spec(x0: f64, y0: f64, x1: f64, y1: f64) -> DomainSpec {
        let pts = vec![p2(x0, y0), p2(x1, y0), p2(x1, y1), p2(x0, y1)];
        let tags = vec![EdgeTag::NeumannOther; 4];
        DomainSpec::from_loops(RegionId::Generic, None, vec![(pts, tags)]).unwrap()
    }

    #[test]
    fn noise_is_reproducible_and_keyed() {
        let s = NoiseStream::new(42);
        assert_eq!(s.pair(7, 0), s.pair(7, 0));
        assert_ne!(s.pair(7, 0), s.pair(8, 0));
        assert_ne!(s.pair(7, 0), s.pair(7, 1));
        assert_ne!(s.path(1).pair(7, 0), s.path(2).pair(7, 0));
        assert_ne!(s.substream(0).pair(7, 0), s.substream(1).pair(7, 0));
        assert_ne!(NoiseStream::new(1).pair(0, 0), NoiseStream::new(2).pair(0, 0));
    }

    #[test]
    fn noise_moments_match_standard_normal() {
        let s = NoiseStream::new(2024);
        let n = 200_000u64;
        let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (a, b) = s.normal_pair(i);
            for z in [a, b] {
                m1 += z;
                m2 += z * z;
                m4 += z * z * z * z;
            }
        }
        let cnt = (2 * n) as f64;
        m1 /= cnt;
        m2 /= cnt;
        m4 /= cnt;
        assert!(m1.abs() < 0.01, "mean {m1}");
        assert!((m2 - 1.0).abs() < 0.02, "var {m2}");
        assert!((m4 - 3.0).abs() < 0.1, "kurt {m4}");
    }

    #[test]
    fn noise_substreams_are_uncorrelated() {
        let s = NoiseStream::new(5);
        let (a, b) = (s.substream(0), s.substream(1));
        let mut dot = 0.0;
        let n = 20_000u64;
        for i in 0..n {
            dot += a.normal_pair(i).0 * b.normal_pair(i).0;
        }
        assert!((dot / n as f64).abs() < 0.03);
    }

    #[test]
    fn grid_parity_matches_reference_classifier() {
        for spec in [
            build_domain(&DomainParams::default()).unwrap(),
            build_quarter(&DomainParams::default()).unwrap(),
        ] {
            let grid = EdgeGrid::build(&spec, 512);
            let (lo, hi) = spec.bbox();
            let s = NoiseStream::new(99);
            let mut checked = 0;
            for i in 0..4000u64 {
                let (u, v) = s.unit_pair(i, 0);
                let p = p2(lo.x + (hi.x - lo.x) * u, lo.y + (hi.y - lo.y) * v);
                // Skip points within tol of the boundary, where the two
                // predicates may legitimately disagree.
                if matches!(
                    crate::geometry::classify_with_tol(&spec, p, 1e-9),
                    Classification::Boundary { .. }
                ) {
                    continue;
                }
                let want = matches!(classify(&spec, p), Classification::Interior);
                assert_eq!(grid.inside(p), want, "at {:?}", p);
                checked += 1;
            }
            assert!(checked > 3000);
        }
    }

    #[test]
    fn grid_nearest_matches_reference() {
        let spec = build_domain(&DomainParams::default()).unwrap();
        let grid = EdgeGrid::build(&spec, 512);
        let (lo, hi) = spec.bbox();
        let s = NoiseStream::new(7);
        for i in 0..800u64 {
            let (u, v) = s.unit_pair(i, 0);
            let p = p2(lo.x + (hi.x - lo.x) * u, lo.y + (hi.y - lo.y) * v);
            let want = crate::geometry::nearest_boundary(&spec, p);
            let (_, foot, d, _) = grid.nearest(p);
            assert!(
                (d - want.dist).abs() <= 1e-12 * (1.0 + want.dist),
                "dist {} vs {} at {:?}",
                d,
                want.dist,
                p
            );
            // Foot may differ when two edges are equidistant; distance is
            // the certified quantity.
            assert!((foot.dist(p) - want.dist).abs() <= 1e-12 * (1.0 + want.dist));
        }
    }

    #[test]
    fn projection_step_halfplane_example() {
        let spec = box_spec(-50.0, 0.0, 50.0, 100.0);
        let stepper = Stepper::new(spec);
        let mut st = PathState::at(p2(0.0, 0.1));
        let info = stepper.step(&mut st, p2(0.0, -0.3), 1e-4).unwrap();
        assert!(info.reflected);
        assert!(st.position.y > 0.0 && st.position.y < 1e-9);
        assert!(st.position.x.abs() < 1e-12);
        assert!((st.local_time - 0.2).abs() < 1e-9, "push {}", st.local_time);
        assert_eq!(st.last_edge, info.edge);
    }

    #[test]
    fn interior_step_accrues_no_local_time() {
        let spec = box_spec(-1.0, -1.0, 1.0, 1.0);
        let stepper = Stepper::new(spec);
        let mut st = PathState::at(p2(0.0, 0.0));
        let info = stepper.step(&mut st, p2(0.01, -0.02), 1e-4).unwrap();
        assert!(!info.reflected);
        assert_eq!(st.local_time, 0.0);
        assert_eq!(st.last_edge, None);
        assert_eq!(st.position, p2(0.01, -0.02));
    }

    #[test]
    fn corner_projection_recovers() {
        let spec = box_spec(0.0, 0.0, 1.0, 1.0);
        let stepper = Stepper::new(spec);
        let mut st = PathState::at(p2(0.05, 0.05));
        // Candidate deep in the corner's exterior quadrant.
        let info = stepper.step(&mut st, p2(-0.3, -0.3), 1e-4).unwrap();
        assert!(info.reflected);
        assert!(stepper.grid.inside(st.position));
        assert!(st.position.x >= 0.0 && st.position.y >= 0.0);
        assert!(st.local_time > 0.2);
    }

    #[test]
    fn steps_never_leave_domain() {
        let spec = build_domain(&DomainParams::default()).unwrap();
        let stepper = Stepper::new(spec);
        let cfg = SimConfig::new(5e-5, 11).with_max_time(0.15);
        let out = simulate(
            &stepper,
            p2(0.0, 0.0),
            &cfg,
            3,
            |st, _| {
                assert!(
                    !matches!(
                        crate::geometry::classify_with_tol(&stepper.spec, st.position, 0.0),
                        Classification::Exterior
                    ),
                    "exterior at {:?}",
                    st.position
                );
                false
            },
            None,
        )
        .unwrap();
        assert!(out.censored);
        assert!(out.state.local_time > 0.0, "tube walls should be felt");
    }

    #[test]
    fn simulate_is_deterministic_and_seed_sensitive() {
        let spec = box_spec(-2.0, -2.0, 2.0, 2.0);
        let stepper = Stepper::new(spec);
        let cfg = SimConfig::new(1e-3, 77).with_max_time(0.25);
        let mut tr1 = Vec::new();
        let mut tr2 = Vec::new();
        simulate(&stepper, p2(0.3, 0.4), &cfg, 5, |_, _| false, Some(&mut tr1)).unwrap();
        simulate(&stepper, p2(0.3, 0.4), &cfg, 5, |_, _| false, Some(&mut tr2)).unwrap();
        assert_eq!(trace_csv(&tr1), trace_csv(&tr2));
        let cfg2 = SimConfig::new(1e-3, 78).with_max_time(0.25);
        let mut tr3 = Vec::new();
        simulate(&stepper, p2(0.3, 0.4), &cfg2, 5, |_, _| false, Some(&mut tr3)).unwrap();
        assert_ne!(trace_csv(&tr1), trace_csv(&tr3));
    }

    #[test]
    fn trace_csv_shape() {
        let spec = box_spec(-2.0, -2.0, 2.0, 2.0);
        let stepper = Stepper::new(spec);
        let cfg = SimConfig::new(1e-3, 1).with_max_time(0.01);
        let mut tr = Vec::new();
        simulate(&stepper, p2(0.0, 0.0), &cfg, 0, |_, _| false, Some(&mut tr)).unwrap();
        let csv = trace_csv(&tr);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "path_id,step,t,x,y,local_time,edge");
        assert_eq!(lines.len(), 1 + 11); // start row + 10 steps
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 7);
        }
    }

    #[test]
    fn halfplane_marginal_matches_reflected_normal() {
        // Reflected BM on the upper half plane: |N(y0, t)| in the vertical
        // coordinate. One-sample KS at the 1% level.
        let spec = box_spec(-40.0, 0.0, 40.0, 80.0);
        let stepper = Stepper::new(spec);
        let y0 = 0.3;
        let t = 0.25;
        let n = 1500;
        let cfg = SimConfig::new(1e-4, 424).with_max_time(t + 1.0);
        let mut ys: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|pid| {
                simulate(
                    &stepper,
                    p2(0.0, y0),
                    &cfg,
                    pid as u64,
                    |st, _| st.time >= t,
                    None,
                )
                .unwrap()
                .state
                .position
                .y
            })
            .collect();
        ys.sort_by(f64::total_cmp);
        let rt = t.sqrt();
        let d = ks_one_sample(&ys, |y| {
            if y < 0.0 {
                0.0
            } else {
                std_normal_cdf((y - y0) / rt) - std_normal_cdf((-y - y0) / rt)
            }
        });
        let crit = ks_critical_one(0.01, n);
        assert!(d < crit, "KS {d:.4} >= {crit:.4}");
    }

    #[test]
    fn disk_exit_time_mean() {
        // Brownian motion started at the center of the unit disk exits at
        // mean time R^2/2 = 1/2. The box is far away so no reflection ever
        // occurs; allow three standard errors plus the O(sqrt(dt))
        // first-passage bias.
        let spec = box_spec(-4.0, -4.0, 4.0, 4.0);
        let stepper = Stepper::new(spec);
        let n = 1500;
        let cfg = SimConfig::new(1e-4, 31).with_max_time(20.0);
        let times: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|pid| {
                hitting_time(&stepper, p2(0.0, 0.0), &cfg, pid as u64, |p| {
                    p.norm2() >= 1.0
                })
                .unwrap()
                .time
            })
            .collect();
        let mean = times.iter().sum::<f64>() / n as f64;
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - 0.5).abs() < 3.0 * se + 0.01,
            "mean {mean:.4}, se {se:.4}"
        );
    }

    #[test]
    fn hitting_time_trivial_cases() {
        let spec = box_spec(-1.0, -1.0, 1.0, 1.0);
        let stepper = Stepper::new(spec);
        let cfg = SimConfig::new(1e-3, 9).with_max_time(0.05);
        // Start inside the target: zero time, not censored.
        let h = hitting_time(&stepper, p2(0.0, 0.0), &cfg, 0, |p| p.norm() < 0.5).unwrap();
        assert_eq!(h.time, 0.0);
        assert!(!h.censored);
        // Unreachable target: censored at max_time.
        let h = hitting_time(&stepper, p2(0.0, 0.0), &cfg, 0, |p| p.x > 5.0).unwrap();
        assert!(h.censored);
        assert!((h.time - 0.05).abs() < 1e-2);
    }

    #[test]
    fn survival_curve_basics() {
        let spec = build_quarter(&DomainParams::default()).unwrap();
        let stepper = Stepper::new(spec);
        let cfg = SimConfig::new(1e-4, 3);
        let t_grid = [0.05, 0.1, 0.2];
        let table = survival_curve(&stepper, &[p2(0.3, 0.0)], &t_grid, 60, &cfg).unwrap();
        // Nowhere near the absorbing cut in this time window.
        assert!(table.p[0].iter().all(|&p| p == 1.0));
        for k in 1..t_grid.len() {
            assert!(table.p[0][k] <= table.p[0][k - 1] + 1e-12);
        }
        let csv = table.csv();
        assert!(csv.starts_with("start_id,t,p,lo,hi\n"));
        assert_eq!(csv.lines().count(), 1 + 3);
    }

    #[test]
    fn heat_mass_split_starts_upper() {
        let spec = build_domain(&DomainParams::default()).unwrap();
        let stepper = Stepper::new(spec);
        let cfg = SimConfig::new(1e-4, 17);
        let (p, lo, hi) = heat_mass_split(&stepper, p2(0.0, 0.0), 0.05, 40, &cfg).unwrap();
        // Mass cannot have crossed through the thin tube this fast.
        assert_eq!(p, 0.0);
        assert!(lo <= p && p <= hi && hi < 0.2);
    }

    #[test]
    fn ray_cast_square() {
        let spec = box_spec(0.0, 0.0, 1.0, 1.0);
        let grid = EdgeGrid::build(&spec, 64);
        let (t, _) = grid
            .ray_first_hit(p2(0.5, 0.5), p2(1.0, 0.0), 0.0, 10.0)
            .unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        let (t, _) = grid
            .ray_first_hit(p2(0.5, 0.5), p2(-1.0, -1.0), 0.0, 10.0)
            .unwrap();
        assert!((t - 0.5).abs() < 1e-12, "diagonal hit at t={t}");
        assert!(grid
            .ray_first_hit(p2(0.5, 0.5), p2(1.0, 0.0), 0.0, 0.4)
            .is_none());
    }
}
