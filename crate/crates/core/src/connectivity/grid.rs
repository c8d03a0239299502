//! Raster flood-fill oracle. A cell is occupied iff its center lies in some
//! (open) disc. Occupied cells connect through shared edges and vacant cells
//! also through shared corners, the usual dual pairing: with 4-connectivity
//! for both phases, every cusp where two circles cross would leave stray
//! one-cell vacant components.

use std::ops::Sub;

use serde::{Deserialize, Serialize};

use super::adaptive::AdaptiveRaster;
use super::Axis;
use crate::error::{invalid, Result};
use crate::geometry::{segment_dist2, Disc, Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Occupied,
    Vacant,
}

#[derive(Debug, Clone)]
pub struct Raster {
    rect: Rect,
    nx: usize,
    ny: usize,
    px: f64,
    py: f64,
    occupied: Vec<bool>,
}

impl Raster {
    /// Rasterizes `discs` over `rect` at pitch at most `h`.
    pub fn new(discs: &[Disc], rect: &Rect, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("raster pitch must be positive, got {h}")));
        }
        let nx = (rect.width() / h).ceil().max(1.0) as usize;
        let ny = (rect.height() / h).ceil().max(1.0) as usize;
        if nx.saturating_mul(ny) > 400_000_000 {
            return Err(invalid(format!("raster of {nx}x{ny} cells is too large")));
        }
        let mut raster = Raster {
            rect: *rect,
            nx,
            ny,
            px: rect.width() / nx as f64,
            py: rect.height() / ny as f64,
            occupied: vec![false; nx * ny],
        };
        for d in discs {
            raster.paint(d);
        }
        Ok(raster)
    }

    fn paint(&mut self, d: &Disc) {
        let r = &self.rect;
        let j_lo = ((d.cy - d.radius - r.y0) / self.py - 0.5).floor().max(0.0) as usize;
        let j_hi = ((d.cy + d.radius - r.y0) / self.py - 0.5).ceil();
        if j_hi < 0.0 {
            return;
        }
        let j_hi = (j_hi as usize).min(self.ny - 1);
        for j in j_lo..=j_hi {
            let dy = r.y0 + (j as f64 + 0.5) * self.py - d.cy;
            let h2 = d.radius * d.radius - dy * dy;
            if h2 <= 0.0 {
                continue;
            }
            let half = h2.sqrt();
            let lo = ((d.cx - half - r.x0) / self.px - 0.5).floor() + 1.0;
            let hi = ((d.cx + half - r.x0) / self.px - 0.5).ceil() - 1.0;
            if hi < 0.0 || lo > (self.nx - 1) as f64 || lo > hi {
                continue;
            }
            let lo = lo.max(0.0) as usize;
            let hi = (hi as usize).min(self.nx - 1);
            let row = j * self.nx;
            for cell in &mut self.occupied[row + lo..=row + hi] {
                *cell = true;
            }
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(self.rect.x0 + (i as f64 + 0.5) * self.px, self.rect.y0 + (j as f64 + 0.5) * self.py)
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.occupied[j * self.nx + i]
    }

    fn for_neighbors(&self, k: usize, phase: Phase, mut f: impl FnMut(usize)) {
        let (i, j) = ((k % self.nx) as isize, (k / self.nx) as isize);
        let diagonal = phase == Phase::Vacant;
        for dj in -1isize..=1 {
            for di in -1isize..=1 {
                if (di == 0 && dj == 0) || (!diagonal && di != 0 && dj != 0) {
                    continue;
                }
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny {
                    f(b as usize * self.nx + a as usize);
                }
            }
        }
    }

    fn in_phase(&self, k: usize, phase: Phase) -> bool {
        self.occupied[k] == (phase == Phase::Occupied)
    }

    /// 4-connected components of `phase`: per-cell label (`u32::MAX` for
    /// cells of the other phase) and the component count.
    pub fn components(&self, phase: Phase) -> (Vec<u32>, usize) {
        let mut labels = vec![u32::MAX; self.occupied.len()];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..self.occupied.len() {
            if labels[start] != u32::MAX || !self.in_phase(start, phase) {
                continue;
            }
            labels[start] = count;
            stack.push(start);
            while let Some(k) = stack.pop() {
                self.for_neighbors(k, phase, |n| {
                    if labels[n] == u32::MAX && self.in_phase(n, phase) {
                        labels[n] = count;
                        stack.push(n);
                    }
                });
            }
            count += 1;
        }
        (labels, count as usize)
    }

    /// Flood fill of `phase` from the cells selected by `seed`; true iff it
    /// reaches a cell selected by `goal`.
    pub fn connects(
        &self,
        phase: Phase,
        seed: impl Fn(usize, usize) -> bool,
        goal: impl Fn(usize, usize) -> bool,
    ) -> bool {
        let mut seen = vec![false; self.occupied.len()];
        let mut stack = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                if self.in_phase(k, phase) && seed(i, j) {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        while let Some(k) = stack.pop() {
            let (i, j) = (k % self.nx, k / self.nx);
            if goal(i, j) {
                return true;
            }
            self.for_neighbors(k, phase, |n| {
                if !seen[n] && self.in_phase(n, phase) {
                    seen[n] = true;
                    stack.push(n);
                }
            });
        }
        false
    }

    /// Side-to-side crossing of the raster in `phase`.
    pub fn crossing(&self, phase: Phase, axis: Axis) -> bool {
        let (nx, ny) = (self.nx, self.ny);
        match axis {
            Axis::Horizontal => self.connects(phase, |i, _| i == 0, |i, _| i + 1 == nx),
            Axis::Vertical => self.connects(phase, |_, j| j == 0, |_, j| j + 1 == ny),
        }
    }

    pub fn on_border(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }
}

/// Raster verdict on a side-to-side crossing of `rect` at pitch `h`.
pub fn grid_oracle(discs: &[Disc], rect: &Rect, h: f64, phase: Phase, axis: Axis) -> Result<bool> {
    let relevant: Vec<Disc> = discs.iter().copied().filter(|d| d.meets_rect(rect)).collect();
    Ok(Raster::new(&relevant, rect, h)?.crossing(phase, axis))
}

/// Result of an adaptively refined raster computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridVerdict<T = bool> {
    pub value: T,
    /// finest pitch evaluated
    pub pitch: f64,
    pub refinements: u32,
    /// false if the last two levels still disagreed
    pub stable: bool,
}

/// Evaluates `eval` at pitches `h, h/4, h/16, …` until two consecutive
/// levels agree or `max_refinements` is reached. A case whose verdict
/// changes with resolution hinges on a feature thinner than the pitch.
pub fn refine<T: PartialEq>(
    h: f64,
    max_refinements: u32,
    mut eval: impl FnMut(f64) -> Result<T>,
) -> Result<GridVerdict<T>> {
    let mut pitch = h;
    let mut prev = eval(pitch)?;
    for k in 1..=max_refinements {
        pitch /= 4.0;
        let next = eval(pitch)?;
        if next == prev {
            return Ok(GridVerdict { value: next, pitch, refinements: k, stable: true });
        }
        prev = next;
    }
    Ok(GridVerdict { value: prev, pitch, refinements: max_refinements, stable: max_refinements == 0 })
}

/// Smallest slack of any predicate a raster of `rect` can misjudge: gaps
/// and overlaps between disc pairs, and how far each disc boundary is from
/// the box and its sides.
pub fn clearance(discs: &[Disc], rect: &Rect) -> f64 {
    let mut m = f64::INFINITY;
    for (i, a) in discs.iter().enumerate() {
        let c = a.center();
        if !rect.contains(c) {
            m = m.min((rect.dist2_to(c).sqrt() - a.radius).abs());
        }
        for (p, q) in rect.sides() {
            m = m.min((segment_dist2(c, p, q).sqrt() - a.radius).abs());
        }
        for b in &discs[i + 1..] {
            m = m.min((c.sub(b.center()).norm() - a.radius - b.radius).abs());
        }
    }
    m
}

/// [`grid_oracle`] made robust to thin features: when the clearance is
/// below twice the pitch, the verdict comes from an [`AdaptiveRaster`]
/// split down to `max_depth` levels around the marginal features.
pub fn grid_oracle_refined(
    discs: &[Disc],
    rect: &Rect,
    h: f64,
    phase: Phase,
    axis: Axis,
    max_depth: u8,
) -> Result<GridVerdict> {
    let relevant: Vec<Disc> = discs.iter().copied().filter(|d| d.meets_rect(rect)).collect();
    if clearance(&relevant, rect) >= 2.0 * h {
        return Ok(GridVerdict {
            value: Raster::new(&relevant, rect, h)?.crossing(phase, axis),
            pitch: h,
            refinements: 0,
            stable: true,
        });
    }
    let raster = AdaptiveRaster::new(&relevant, rect, h, &[], max_depth)?;
    Ok(GridVerdict {
        value: raster.crossing(phase, axis),
        pitch: raster.pitch(),
        refinements: raster.deepest() as u32,
        stable: raster.unresolved() == 0,
    })
}
