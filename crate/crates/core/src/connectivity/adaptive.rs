//! Quadtree raster for configurations whose clearance is below the uniform
//! pitch. Base cells of pitch at most `h` are split while a marginal
//! feature (a near-tangent pair of circles, or a circle grazing the box
//! border or a reference circle) lies within one cell width of them. Leaves
//! are classified by their center, as in [`Raster`](super::Raster).

use std::ops::{Add, Sub};

use rustc_hash::FxHashMap;

use super::{Axis, Phase, UnionFind};
use crate::error::{invalid, Result};
use crate::geometry::{Disc, Point, Rect};

/// Default depth cap: base cells are split at most this many times.
pub const MAX_DEPTH: u8 = 24;

/// A feature is marginal for a cell of size `s` if its slack is below
/// `MARGIN_CELLS · s`.
const MARGIN_CELLS: f64 = 3.0;

const SPLIT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Leaf {
    level: u8,
    i: u64,
    j: u64,
    occupied: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRaster {
    rect: Rect,
    nx: u64,
    ny: u64,
    px: f64,
    py: f64,
    leaves: Vec<Leaf>,
    /// leaf of each base cell, `SPLIT` if it was divided
    base: Vec<u32>,
    index: FxHashMap<(u8, u64, u64), u32>,
    unresolved: usize,
    deepest: u8,
}

/// Slack of the closest approach of two circles (external or internal
/// tangency).
fn pair_slack(a: &Disc, b: &Disc) -> f64 {
    let d = b.center().sub(a.center()).norm();
    (d - a.radius - b.radius).abs().min((d - (a.radius - b.radius).abs()).abs())
}

/// Points where the two circles cross.
fn crossings(a: &Disc, b: &Disc) -> Vec<Point> {
    let v = b.center().sub(a.center());
    let d = v.norm();
    if d == 0.0 || d >= a.radius + b.radius || d <= (a.radius - b.radius).abs() {
        return Vec::new();
    }
    let t = (d * d + a.radius * a.radius - b.radius * b.radius) / (2.0 * d);
    let h = (a.radius * a.radius - t * t).max(0.0).sqrt();
    let u = v.scale(1.0 / d);
    let mid = a.center().add(u.scale(t));
    let n = Point::new(-u.y, u.x);
    vec![mid.add(n.scale(h)), mid.sub(n.scale(h))]
}

impl AdaptiveRaster {
    /// `circles` are extra boundaries (e.g. a protected ball) that seeds or
    /// goals of a flood fill depend on; they are not painted.
    pub fn new(discs: &[Disc], rect: &Rect, h: f64, circles: &[Disc], max_depth: u8) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("raster pitch must be positive, got {h}")));
        }
        let nx = (rect.width() / h).ceil().max(1.0) as u64;
        let ny = (rect.height() / h).ceil().max(1.0) as u64;
        if nx.saturating_mul(ny) > 100_000_000 {
            return Err(invalid(format!("raster of {nx}x{ny} cells is too large")));
        }
        let mut r = AdaptiveRaster {
            rect: *rect,
            nx,
            ny,
            px: rect.width() / nx as f64,
            py: rect.height() / ny as f64,
            leaves: Vec::new(),
            base: vec![SPLIT; (nx * ny) as usize],
            index: FxHashMap::default(),
            unresolved: 0,
            deepest: 0,
        };
        // discs per base cell, through their bounding boxes
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); (nx * ny) as usize];
        for (k, d) in discs.iter().enumerate() {
            let b = d.bbox().expand(r.px.max(r.py));
            let i0 = ((b.x0 - rect.x0) / r.px).floor().max(0.0) as u64;
            let j0 = ((b.y0 - rect.y0) / r.py).floor().max(0.0) as u64;
            let i1 = ((b.x1 - rect.x0) / r.px).floor();
            let j1 = ((b.y1 - rect.y0) / r.py).floor();
            if i1 < 0.0 || j1 < 0.0 {
                continue;
            }
            let (i1, j1) = ((i1 as u64).min(nx - 1), (j1 as u64).min(ny - 1));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[(j * nx + i) as usize].push(k as u32);
                }
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let cands = std::mem::take(&mut buckets[(j * nx + i) as usize]);
                r.visit(discs, circles, 0, i, j, &cands, max_depth);
            }
        }
        Ok(r)
    }

    fn cell(&self, level: u8, i: u64, j: u64) -> Rect {
        let s = (1u64 << level) as f64;
        let (w, h) = (self.px / s, self.py / s);
        Rect {
            x0: self.rect.x0 + i as f64 * w,
            y0: self.rect.y0 + j as f64 * h,
            x1: self.rect.x0 + (i + 1) as f64 * w,
            y1: self.rect.y0 + (j + 1) as f64 * h,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(&mut self, discs: &[Disc], circles: &[Disc], level: u8, i: u64, j: u64, cands: &[u32], max_depth: u8) {
        let c = self.cell(level, i, j);
        let s = c.width().max(c.height());
        let near = c.expand(s);
        let meets: Vec<u32> = cands
            .iter()
            .copied()
            .filter(|&k| {
                let d = &discs[k as usize];
                near.dist2_to(d.center()) < d.radius * d.radius
            })
            .collect();
        if self.marginal(discs, circles, &meets, &near, MARGIN_CELLS * s) {
            if level < max_depth {
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    self.visit(discs, circles, level + 1, 2 * i + di, 2 * j + dj, &meets, max_depth);
                }
                return;
            }
            self.unresolved += 1;
        }
        let center = Point::new(0.5 * (c.x0 + c.x1), 0.5 * (c.y0 + c.y1));
        let occupied = meets.iter().any(|&k| discs[k as usize].contains_point(center));
        self.deepest = self.deepest.max(level);
        let k = self.leaves.len() as u32;
        if level == 0 {
            self.base[(j * self.nx + i) as usize] = k;
        } else {
            self.index.insert((level, i, j), k);
        }
        self.leaves.push(Leaf { level, i, j, occupied });
    }

    /// True if, inside `near` and not deep inside a disc, some circle runs
    /// within `tol` of another circle or of the box border it nearly touches,
    /// or two circles cross within `tol` of a third circle or of the border. Pairs that cross at a
    /// healthy angle away from anything else are not marginal: near a
    /// transversal crossing the raster only sees a cusp.
    fn marginal(&self, discs: &[Disc], circles: &[Disc], meets: &[u32], near: &Rect, tol: f64) -> bool {
        let m = Point::new(0.5 * (near.x0 + near.x1), 0.5 * (near.y0 + near.y1));
        let half_diag = 0.5 * near.width().hypot(near.height());
        let gap = |x: Point, b: &Disc| (x.sub(b.center()).norm() - b.radius).abs();
        let curves: Vec<&Disc> = meets.iter().map(|&k| &discs[k as usize]).chain(circles).collect();
        // deep inside some disc nothing thin can matter
        let buried = |x: Point| curves[..meets.len()].iter().any(|c| x.sub(c.center()).norm() < c.radius - tol);
        let by_side =
            |x: Point| self.rect.sides().iter().any(|&(p, q)| closest_on_segment(x, p, q).sub(x).norm() < tol);
        for (ia, a) in curves.iter().enumerate().take(meets.len()) {
            let off = m.sub(a.center());
            let dist = off.norm();
            if dist == 0.0 || (dist - a.radius).abs() > half_diag {
                continue;
            }
            // the point of a's circle closest to the middle of the region
            let x = a.center().add(off.scale(a.radius / dist));
            if buried(x) {
                continue;
            }
            for (ib, b) in curves.iter().enumerate() {
                if ib == ia {
                    continue;
                }
                if pair_slack(a, b) < tol && gap(x, b) < tol {
                    return true;
                }
                for y in crossings(a, b) {
                    if y.sub(m).norm() > half_diag || buried(y) {
                        continue;
                    }
                    let third = curves.iter().enumerate().any(|(ic, c)| ic != ia && ic != ib && gap(y, c) < tol);
                    if third || by_side(y) {
                        return true;
                    }
                }
            }
            for (p, q) in self.rect.sides() {
                let grazing = (closest_on_segment(a.center(), p, q).sub(a.center()).norm() - a.radius).abs();
                if grazing < tol && closest_on_segment(x, p, q).sub(x).norm() < tol {
                    return true;
                }
            }
        }
        false
    }

    /// Leaves split at the depth cap with a marginal feature still inside.
    pub fn unresolved(&self) -> usize {
        self.unresolved
    }

    pub fn deepest(&self) -> u8 {
        self.deepest
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Finest pitch present.
    pub fn pitch(&self) -> f64 {
        self.px.max(self.py) / (1u64 << self.deepest) as f64
    }

    fn leaf_rect(&self, k: usize) -> Rect {
        let l = self.leaves[k];
        self.cell(l.level, l.i, l.j)
    }

    /// Leaf at `level` or coarser containing cell (level, i, j).
    fn find(&self, level: u8, i: i64, j: i64) -> Option<u32> {
        if i < 0 || j < 0 {
            return None;
        }
        let (i, j) = (i as u64, j as u64);
        if i >= self.nx << level || j >= self.ny << level {
            return None;
        }
        let (bi, bj) = (i >> level, j >> level);
        let b = self.base[(bj * self.nx + bi) as usize];
        if b != SPLIT {
            return Some(b);
        }
        (0..level).find_map(|k| self.index.get(&(level - k, i >> k, j >> k)).copied())
    }

    /// Components of `phase`, edge-adjacent for occupied leaves and also
    /// corner-adjacent for vacant ones. Each adjacent pair is found from its
    /// smaller leaf, which sees the other at its own level or coarser.
    fn components(&self, phase: Phase) -> UnionFind {
        let mut uf = UnionFind::new(self.leaves.len());
        let want = phase == Phase::Occupied;
        let diagonal = phase == Phase::Vacant;
        for (k, l) in self.leaves.iter().enumerate() {
            if l.occupied != want {
                continue;
            }
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if (di == 0 && dj == 0) || (!diagonal && di != 0 && dj != 0) {
                        continue;
                    }
                    if let Some(n) = self.find(l.level, l.i as i64 + di, l.j as i64 + dj) {
                        if self.leaves[n as usize].occupied == want {
                            uf.union(k as u32, n);
                        }
                    }
                }
            }
        }
        uf
    }

    /// Flood fill of `phase` from leaves selected by `seed` (given the leaf
    /// center and rectangle); true iff it reaches a leaf selected by `goal`.
    pub fn connects(
        &self,
        phase: Phase,
        seed: impl Fn(Point, &Rect) -> bool,
        goal: impl Fn(Point, &Rect) -> bool,
    ) -> bool {
        let mut uf = self.components(phase);
        let want = phase == Phase::Occupied;
        let pick = |f: &dyn Fn(Point, &Rect) -> bool| -> Vec<u32> {
            (0..self.leaves.len())
                .filter(|&k| self.leaves[k].occupied == want)
                .filter(|&k| {
                    let r = self.leaf_rect(k);
                    f(Point::new(0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1)), &r)
                })
                .map(|k| k as u32)
                .collect()
        };
        let seeds = pick(&seed);
        let goals = pick(&goal);
        let roots: rustc_hash::FxHashSet<u32> = seeds.iter().map(|&k| uf.find(k)).collect();
        goals.iter().any(|&k| roots.contains(&uf.find(k)))
    }

    pub fn crossing(&self, phase: Phase, axis: Axis) -> bool {
        let b = self.rect;
        match axis {
            Axis::Horizontal => self.connects(phase, |_, r| r.x0 <= b.x0, |_, r| r.x1 >= b.x1),
            Axis::Vertical => self.connects(phase, |_, r| r.y0 <= b.y0, |_, r| r.y1 >= b.y1),
        }
    }

    pub fn on_border(&self, r: &Rect) -> bool {
        r.x0 <= self.rect.x0 || r.y0 <= self.rect.y0 || r.x1 >= self.rect.x1 || r.y1 >= self.rect.y1
    }
}

fn closest_on_segment(c: Point, p: Point, q: Point) -> Point {
    let pq = q.sub(p);
    let t = (c.sub(p).dot(pq) / pq.dot(pq)).clamp(0.0, 1.0);
    p.add(pq.scale(t))
}
