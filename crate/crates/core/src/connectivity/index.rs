use rustc_hash::FxHashMap;

use crate::geometry::{Disc, Point, Rect};

/// Discs whose bounding box spans more cells than this go to an overflow
/// list that every query returns.
const MAX_CELLS_PER_DISC: i64 = 4096;

/// Uniform hash grid over disc bounding boxes. Each disc is registered in
/// every cell its bounding box meets, so two discs that overlap always share
/// a cell.
#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell: f64,
    cells: FxHashMap<(i64, i64), Vec<u32>>,
    oversized: Vec<u32>,
    bboxes: Vec<Rect>,
}

impl SpatialHash {
    /// Cell size is the 90th percentile radius.
    pub fn build(discs: &[Disc]) -> Self {
        Self::with_cell_size(discs, default_cell_size(discs))
    }

    pub fn with_cell_size(discs: &[Disc], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut index = SpatialHash {
            cell,
            cells: FxHashMap::default(),
            oversized: Vec::new(),
            bboxes: discs.iter().map(Disc::bbox).collect(),
        };
        for i in 0..discs.len() {
            let (ix0, iy0, ix1, iy1) = index.cell_range(&index.bboxes[i]);
            if (ix1 - ix0 + 1).saturating_mul(iy1 - iy0 + 1) > MAX_CELLS_PER_DISC {
                index.oversized.push(i as u32);
                continue;
            }
            for ix in ix0..=ix1 {
                for iy in iy0..=iy1 {
                    index.cells.entry((ix, iy)).or_default().push(i as u32);
                }
            }
        }
        index
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn key(&self, x: f64) -> i64 {
        (x / self.cell).floor() as i64
    }

    fn cell_range(&self, r: &Rect) -> (i64, i64, i64, i64) {
        (self.key(r.x0), self.key(r.y0), self.key(r.x1), self.key(r.y1))
    }

    /// Indices of discs whose bounding box may meet `rect`, sorted, unique.
    pub fn query_rect(&self, rect: &Rect) -> Vec<u32> {
        let (ix0, iy0, ix1, iy1) = self.cell_range(rect);
        let mut out = self.oversized.clone();
        let span = (ix1 - ix0 + 1).saturating_mul(iy1 - iy0 + 1);
        if span as usize > self.cells.len() {
            for (&(ix, iy), members) in &self.cells {
                if (ix0..=ix1).contains(&ix) && (iy0..=iy1).contains(&iy) {
                    out.extend(members);
                }
            }
        } else {
            for ix in ix0..=ix1 {
                for iy in iy0..=iy1 {
                    if let Some(members) = self.cells.get(&(ix, iy)) {
                        out.extend(members);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&i| self.bboxes[i as usize].intersects(rect));
        out
    }

    /// Candidates for discs containing `p` (unsorted, may repeat oversized).
    pub fn query_point(&self, p: Point) -> Vec<u32> {
        let mut out = self.oversized.clone();
        if let Some(members) = self.cells.get(&(self.key(p.x), self.key(p.y))) {
            out.extend(members);
        }
        out
    }

    /// Calls `f(i, j)` once for every pair `i < j` whose bounding boxes
    /// intersect.
    pub fn for_each_candidate_pair(&self, mut f: impl FnMut(u32, u32)) {
        for (&(ix, iy), members) in &self.cells {
            for (a, &i) in members.iter().enumerate() {
                let bi = &self.bboxes[i as usize];
                for &j in &members[a + 1..] {
                    let bj = &self.bboxes[j as usize];
                    if !bi.intersects(bj) {
                        continue;
                    }
                    // visit the pair only in the cell holding the lower-left
                    // corner of the box intersection
                    let cx = self.key(bi.x0.max(bj.x0));
                    let cy = self.key(bi.y0.max(bj.y0));
                    if (cx, cy) == (ix, iy) {
                        f(i.min(j), i.max(j));
                    }
                }
            }
        }
        let n = self.bboxes.len() as u32;
        for (a, &i) in self.oversized.iter().enumerate() {
            for j in 0..n {
                if j == i || (self.oversized[..a].contains(&j)) {
                    continue;
                }
                if self.bboxes[i as usize].intersects(&self.bboxes[j as usize]) {
                    f(i.min(j), i.max(j));
                }
            }
        }
    }
}

/// 90th percentile radius, floored relative to the coordinate scale.
pub fn default_cell_size(discs: &[Disc]) -> f64 {
    if discs.is_empty() {
        return 1.0;
    }
    let mut radii: Vec<f64> = discs.iter().map(|d| d.radius).collect();
    let k = ((radii.len() - 1) as f64 * 0.9).round() as usize;
    let (_, q, _) = radii.select_nth_unstable_by(k, f64::total_cmp);
    let scale = discs.iter().map(|d| d.cx.abs().max(d.cy.abs()) + d.radius).fold(0.0, f64::max);
    q.max(1e-9 * scale).max(f64::MIN_POSITIVE)
}
