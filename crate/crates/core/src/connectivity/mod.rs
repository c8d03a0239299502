//! Exact connectivity queries on finite unions of open discs.
//!
//! Crossings use within-box semantics: for convex pieces,
//! `(Dᵢ ∩ box) ∩ (Dⱼ ∩ box) = Dᵢ ∩ Dⱼ ∩ box`, so two clipped discs are
//! adjacent iff their lens meets the box. Vacant crossings follow from
//! planar duality: a vacant left–right crossing exists iff no occupied
//! bottom–top crossing does.

mod adaptive;
mod grid;
mod index;

pub use adaptive::{AdaptiveRaster, MAX_DEPTH};
pub use grid::{clearance, grid_oracle, grid_oracle_refined, refine, GridVerdict, Phase, Raster};
pub use index::{default_cell_size, SpatialHash};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{lens_rect_witness, Disc, Point, Rect, Window};
use crate::sampler::Configuration;

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// Returns `true` if `a` and `b` were in different sets.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        true
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }

    /// Dense component labels `0..k`, numbered by first appearance.
    pub fn labels(&mut self) -> (Vec<u32>, usize) {
        let n = self.parent.len();
        let mut map = vec![u32::MAX; n];
        let mut labels = Vec::with_capacity(n);
        let mut k = 0;
        for i in 0..n as u32 {
            let r = self.find(i) as usize;
            if map[r] == u32::MAX {
                map[r] = k;
                k += 1;
            }
            labels.push(map[r]);
        }
        (labels, k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// left to right
    Horizontal,
    /// bottom to top
    Vertical,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }

    /// The two opposite sides to be joined.
    fn sides(self, rect: &Rect) -> [(Point, Point); 2] {
        let s = rect.sides();
        match self {
            Axis::Horizontal => [s[0], s[1]],
            Axis::Vertical => [s[2], s[3]],
        }
    }
}

/// Whether crossing paths must stay inside the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingSemantics {
    #[default]
    WithinBox,
    WholePlane,
}

/// Intersection graph of a configuration's discs, with component labels.
#[derive(Debug, Clone)]
pub struct DiscGraph {
    discs: Vec<Disc>,
    window: Window,
    index: SpatialHash,
    labels: Vec<u32>,
    n_components: usize,
}

/// Builds the whole-plane intersection graph of `config`.
pub fn build_graph(config: &Configuration) -> DiscGraph {
    DiscGraph::new(config.discs.clone(), config.window)
}

impl DiscGraph {
    pub fn new(discs: Vec<Disc>, window: Window) -> Self {
        let index = SpatialHash::build(&discs);
        let mut uf = UnionFind::new(discs.len());
        index.for_each_candidate_pair(|i, j| {
            if discs[i as usize].overlaps(&discs[j as usize]) {
                uf.union(i, j);
            }
        });
        let (labels, n_components) = uf.labels();
        DiscGraph { discs, window, index, labels, n_components }
    }

    pub fn discs(&self) -> &[Disc] {
        &self.discs
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn index(&self) -> &SpatialHash {
        &self.index
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn component(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Indices of discs meeting `rect` (open disc vs closed rectangle).
    pub fn discs_meeting(&self, rect: &Rect) -> Vec<u32> {
        let mut v = self.index.query_rect(rect);
        v.retain(|&i| self.discs[i as usize].meets_rect(rect));
        v
    }

    fn require_inside(&self, rect: &Rect, what: &str) -> Result<()> {
        if self.window.contains_rect(rect) {
            Ok(())
        } else {
            Err(Error::WindowInsufficient(format!(
                "{what} {rect:?} is not contained in the sampled window {:?}",
                self.window
            )))
        }
    }

    /// True iff an occupied path inside `rect` joins its two opposite sides.
    pub fn occupied_crossing(&self, rect: &Rect, axis: Axis) -> Result<bool> {
        self.occupied_crossing_with(rect, axis, CrossingSemantics::WithinBox)
    }

    pub fn occupied_crossing_with(&self, rect: &Rect, axis: Axis, semantics: CrossingSemantics) -> Result<bool> {
        self.require_inside(rect, "crossing box")?;
        let members = match semantics {
            CrossingSemantics::WithinBox => self.discs_meeting(rect),
            CrossingSemantics::WholePlane => (0..self.discs.len() as u32).collect(),
        };
        let sub: Vec<Disc> = members.iter().map(|&i| self.discs[i as usize]).collect();
        Ok(crosses(&sub, rect, axis, semantics))
    }

    /// True iff the vacant set inside `rect` joins its two opposite sides.
    pub fn vacant_crossing(&self, rect: &Rect, axis: Axis) -> Result<bool> {
        Ok(!self.occupied_crossing(rect, axis.other())?)
    }

    /// Λ(x, ℓ) ↔ Λ(x, L)ᶜ through discs of radius ≤ `cap`.
    pub fn arm_event(&self, x: Point, ell: f64, big_l: f64, cap: Option<f64>) -> Result<bool> {
        if !(ell > 0.0 && big_l >= ell) {
            return Err(invalid(format!("arm event needs L >= ell > 0, got ell={ell}, L={big_l}")));
        }
        let inner = Rect::square(x, ell)?;
        let outer = Rect::square(x, big_l)?;
        self.require_inside(&outer, "arm box")?;
        let cap = cap.unwrap_or(f64::INFINITY);
        // Before first leaving Λ(x, L) a path only uses discs meeting it.
        let sub: Vec<Disc> = self
            .discs_meeting(&outer)
            .into_iter()
            .map(|i| self.discs[i as usize])
            .filter(|d| d.radius <= cap)
            .collect();
        Ok(joins(&sub, |d| d.meets_rect(&inner), |d| d.leaves_rect(&outer), |a, b| a.overlaps(b)))
    }

    /// Grid form of E_ℓ(L): some y ∈ ℓℤ² with `max(L−ℓ, 2ℓ) ≤ |y| ≤ outer`
    /// has Λ(y, ℓ) joined to Λ(y, |y|−ℓ)ᶜ inside O_ℓ.
    pub fn e_event(&self, ell: f64, big_l: f64, outer: f64) -> Result<bool> {
        if !(ell > 0.0 && big_l >= ell && outer >= big_l) {
            return Err(invalid(format!(
                "e_event needs outer >= L >= ell > 0, got ell={ell}, L={big_l}, outer={outer}"
            )));
        }
        let sites = e_event_sites(ell, big_l, outer);
        for &(y, r) in &sites {
            self.require_inside(&Rect::square(y, r - ell)?, "E-event arm box")?;
        }
        for (y, r) in sites {
            if self.arm_event(y, ell, r - ell, Some(ell))? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// X(y) = 1 iff Λ(ℓy, ℓ) ↔ Λ(ℓy, 3ℓ)ᶜ in O_ℓ, for y in the lattice box.
    pub fn renorm_field(&self, ell: f64, lattice: LatticeBox) -> Result<Lattice> {
        let mut values = Vec::with_capacity(lattice.len());
        for j in lattice.j0..=lattice.j1 {
            for i in lattice.i0..=lattice.i1 {
                let y = Point::new(ell * i as f64, ell * j as f64);
                values.push(self.arm_event(y, ell, 3.0 * ell, Some(ell))?);
            }
        }
        Ok(Lattice { bounds: lattice, values })
    }
}

/// Lattice points of the E_ℓ(L) scan with their Euclidean norms, ordered by
/// norm then coordinates.
pub fn e_event_sites(ell: f64, big_l: f64, outer: f64) -> Vec<(Point, f64)> {
    let lo = (big_l - ell).max(2.0 * ell);
    let k = (outer / ell).ceil() as i64;
    let mut sites = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            let y = Point::new(ell * i as f64, ell * j as f64);
            let r = y.norm();
            if r >= lo && r <= outer {
                sites.push((y, r));
            }
        }
    }
    sites.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.x.total_cmp(&b.0.x)).then(a.0.y.total_cmp(&b.0.y)));
    sites
}

/// Smallest window guaranteeing [`DiscGraph::e_event`] is certifiable.
pub fn e_event_window(ell: f64, big_l: f64, outer: f64) -> Result<Window> {
    let half =
        e_event_sites(ell, big_l, outer).iter().map(|(y, r)| y.x.abs().max(y.y.abs()) + r - ell).fold(big_l, f64::max);
    Rect::square(Point::ORIGIN, half)
}

/// Inclusive integer rectangle of lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub i0: i64,
    pub j0: i64,
    pub i1: i64,
    pub j1: i64,
}

impl LatticeBox {
    pub fn new(i0: i64, j0: i64, i1: i64, j1: i64) -> Result<Self> {
        if i0 > i1 || j0 > j1 {
            return Err(invalid("empty lattice box"));
        }
        Ok(LatticeBox { i0, j0, i1, j1 })
    }

    pub fn len(&self) -> usize {
        ((self.i1 - self.i0 + 1) * (self.j1 - self.j0 + 1)) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Window needed to evaluate the field at scale ℓ.
    pub fn window(&self, ell: f64) -> Result<Window> {
        Rect::new(
            ell * self.i0 as f64 - 4.0 * ell,
            ell * self.j0 as f64 - 4.0 * ell,
            ell * self.i1 as f64 + 4.0 * ell,
            ell * self.j1 as f64 + 4.0 * ell,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub bounds: LatticeBox,
    /// Row-major from `(i0, j0)`.
    pub values: Vec<bool>,
}

impl Lattice {
    pub fn get(&self, i: i64, j: i64) -> bool {
        let b = &self.bounds;
        assert!((b.i0..=b.i1).contains(&i) && (b.j0..=b.j1).contains(&j));
        let w = b.i1 - b.i0 + 1;
        self.values[((j - b.j0) * w + (i - b.i0)) as usize]
    }
}

/// Union-find over `discs` with a caller-defined adjacency; returns whether
/// some component contains both a `source` disc and a `target` disc.
fn joins(
    discs: &[Disc],
    source: impl Fn(&Disc) -> bool,
    target: impl Fn(&Disc) -> bool,
    adjacent: impl Fn(&Disc, &Disc) -> bool,
) -> bool {
    let n = discs.len();
    let (src, dst) = (n as u32, n as u32 + 1);
    let mut uf = UnionFind::new(n + 2);
    let mut any_src = false;
    let mut any_dst = false;
    for (i, d) in discs.iter().enumerate() {
        if source(d) {
            uf.union(i as u32, src);
            any_src = true;
        }
        if target(d) {
            uf.union(i as u32, dst);
            any_dst = true;
        }
    }
    if !(any_src && any_dst) {
        return false;
    }
    if uf.same(src, dst) {
        return true;
    }
    let index = SpatialHash::build(discs);
    index.for_each_candidate_pair(|i, j| {
        if adjacent(&discs[i as usize], &discs[j as usize]) {
            uf.union(i, j);
        }
    });
    uf.same(src, dst)
}

fn crosses(discs: &[Disc], rect: &Rect, axis: Axis, semantics: CrossingSemantics) -> bool {
    let [(a0, a1), (b0, b1)] = axis.sides(rect);
    match semantics {
        CrossingSemantics::WithinBox => joins(
            discs,
            |d| d.touches_segment(a0, a1),
            |d| d.touches_segment(b0, b1),
            |a, b| lens_rect_witness(a, b, rect).is_some(),
        ),
        CrossingSemantics::WholePlane => joins(
            discs,
            |d| d.meets_rect(rect) && d.touches_segment(a0, a1),
            |d| d.meets_rect(rect) && d.touches_segment(b0, b1),
            |a, b| a.overlaps(b),
        ),
    }
}

/// Convenience wrapper building the graph on the fly.
pub fn occupied_crossing(config: &Configuration, rect: &Rect, axis: Axis) -> Result<bool> {
    build_graph(config).occupied_crossing(rect, axis)
}

pub fn vacant_crossing(config: &Configuration, rect: &Rect, axis: Axis) -> Result<bool> {
    build_graph(config).vacant_crossing(rect, axis)
}

pub fn arm_event(config: &Configuration, x: Point, ell: f64, big_l: f64, cap: Option<f64>) -> Result<bool> {
    build_graph(config).arm_event(x, ell, big_l, cap)
}

/// Smallest thinning key at which an occupied crossing of `rect` appears:
/// discs are switched on in increasing key order (Newman–Ziff sweep) until
/// the two sides join. `None` if even the full configuration does not cross.
///
/// With keys from [`Configuration::retention_key`], the crossing holds in
/// `thin(config, λ)` iff `onset < λ / λ₀`.
pub fn crossing_onset(discs: &[Disc], keys: &[f64], rect: &Rect, axis: Axis) -> Option<f64> {
    let mut members: Vec<usize> = (0..discs.len()).filter(|&i| discs[i].meets_rect(rect)).collect();
    members.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    let sub: Vec<Disc> = members.iter().map(|&i| discs[i]).collect();
    let n = sub.len();
    let index = SpatialHash::build(&sub);
    let [(a0, a1), (b0, b1)] = axis.sides(rect);
    let (src, dst) = (n as u32, n as u32 + 1);
    let mut uf = UnionFind::new(n + 2);
    // insertion rank of each sub-disc is its position in `sub`
    for (rank, d) in sub.iter().enumerate() {
        let r = rank as u32;
        if d.touches_segment(a0, a1) {
            uf.union(r, src);
        }
        if d.touches_segment(b0, b1) {
            uf.union(r, dst);
        }
        for j in index.query_rect(&d.bbox()) {
            if j < r && lens_rect_witness(d, &sub[j as usize], rect).is_some() {
                uf.union(r, j);
            }
        }
        if uf.same(src, dst) {
            return Some(keys[members[rank]]);
        }
    }
    None
}

/// O(n²) component count, for cross-checking the graph in tests.
pub fn brute_force_components(discs: &[Disc]) -> Vec<u32> {
    let mut uf = UnionFind::new(discs.len());
    for i in 0..discs.len() {
        for j in i + 1..discs.len() {
            if discs[i].overlaps(&discs[j]) {
                uf.union(i as u32, j as u32);
            }
        }
    }
    uf.labels().0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Law, RadiusLaw};
    use crate::sampler::{sample_configuration, thin, Boundary};

    fn window() -> Window {
        Rect::new(-20.0, -20.0, 20.0, 20.0).unwrap()
    }

    #[test]
    fn empty_graph() {
        let g = DiscGraph::new(Vec::new(), window());
        assert_eq!(g.n_components(), 0);
        let b = Rect::sized(3.0, 9.0).unwrap();
        assert!(!g.occupied_crossing(&b, Axis::Horizontal).unwrap());
        assert!(g.vacant_crossing(&b, Axis::Horizontal).unwrap());
        assert!(!g.arm_event(Point::ORIGIN, 1.0, 4.0, None).unwrap());
    }

    #[test]
    fn two_close_discs_form_one_component() {
        let g = DiscGraph::new(vec![Disc::new(0.0, 0.0, 1.0), Disc::new(1.5, 0.0, 1.0)], window());
        assert_eq!(g.n_components(), 1);
    }

    #[test]
    fn covering_disc_crosses() {
        let g = DiscGraph::new(vec![Disc::new(1.5, 4.5, 10.0)], window());
        let b = Rect::sized(3.0, 9.0).unwrap();
        for axis in [Axis::Horizontal, Axis::Vertical] {
            assert!(g.occupied_crossing(&b, axis).unwrap());
            assert!(!g.vacant_crossing(&b, axis).unwrap());
        }
    }

    #[test]
    fn chain_crosses_only_along_its_direction() {
        let discs: Vec<Disc> = (0..6).map(|k| Disc::new(k as f64 * 1.5, 2.0, 1.0)).collect();
        let g = DiscGraph::new(discs, window());
        let b = Rect::sized(7.0, 4.0).unwrap();
        assert!(g.occupied_crossing(&b, Axis::Horizontal).unwrap());
        assert!(!g.occupied_crossing(&b, Axis::Vertical).unwrap());
        assert!(g.vacant_crossing(&b, Axis::Vertical).is_ok_and(|v| !v));
    }

    #[test]
    fn within_box_differs_from_whole_plane() {
        // two discs meeting the box whose overlap lies outside it
        let b = Rect::sized(3.6, 3.6).unwrap();
        let discs = vec![Disc::new(-0.8, 0.8, 1.2), Disc::new(-0.8, 3.0, 1.2)];
        let g = DiscGraph::new(discs, window());
        assert!(!g.occupied_crossing(&b, Axis::Vertical).unwrap());
        assert!(g.occupied_crossing_with(&b, Axis::Vertical, CrossingSemantics::WholePlane).unwrap());
    }

    #[test]
    fn arm_event_fixtures() {
        let g = DiscGraph::new(vec![Disc::new(0.0, 0.0, 4.5)], window());
        assert!(g.arm_event(Point::ORIGIN, 1.0, 4.0, None).unwrap());
        // the same disc is excluded by a radius cap
        assert!(!g.arm_event(Point::ORIGIN, 1.0, 4.0, Some(1.0)).unwrap());
        // an open disc of radius L stays inside the closed box Λ(0, L)
        let exact = DiscGraph::new(vec![Disc::new(0.0, 0.0, 4.0)], window());
        assert!(!exact.arm_event(Point::ORIGIN, 1.0, 4.0, None).unwrap());
        let small = DiscGraph::new(vec![Disc::new(0.0, 0.0, 4.0)], Rect::sized(3.0, 3.0).unwrap());
        assert!(matches!(small.arm_event(Point::ORIGIN, 1.0, 4.0, None), Err(Error::WindowInsufficient(_))));
        assert!(g.arm_event(Point::ORIGIN, 2.0, 1.0, None).is_err());
    }

    #[test]
    fn e_event_chain_fixture() {
        let (ell, l) = (1.0, 6.0);
        let outer = 2.0 * l;
        let w = e_event_window(ell, l, outer).unwrap();
        // unit discs from (L, 0) outward to distance 2L
        let discs: Vec<Disc> = (0..=8).map(|k| Disc::new(l + 0.75 * k as f64, 0.0, 1.0)).collect();
        let g = DiscGraph::new(discs, w);
        assert!(g.e_event(ell, l, outer).unwrap());
        let empty = DiscGraph::new(Vec::new(), w);
        assert!(!empty.e_event(ell, l, outer).unwrap());
        let tiny = DiscGraph::new(Vec::new(), Rect::square(Point::ORIGIN, l).unwrap());
        assert!(matches!(tiny.e_event(ell, l, outer), Err(Error::WindowInsufficient(_))));
    }

    #[test]
    fn renorm_field_is_zero_without_discs() {
        let lb = LatticeBox::new(-2, -2, 2, 2).unwrap();
        let g = DiscGraph::new(Vec::new(), lb.window(2.0).unwrap());
        let f = g.renorm_field(2.0, lb).unwrap();
        assert_eq!(f.values.len(), 25);
        assert!(f.values.iter().all(|&x| !x));
    }

    #[test]
    fn onset_matches_direct_thinning() {
        let law = Law::Planar(RadiusLaw::dirac(1.0).unwrap());
        let b = Rect::sized(8.0, 8.0).unwrap();
        for seed in 0..20 {
            let c = sample_configuration(&law, 0.8, b, seed, Boundary::Hitting).unwrap();
            let keys: Vec<f64> = (0..c.len()).map(|i| c.retention_key(i)).collect();
            let onset = crossing_onset(&c.discs, &keys, &b, Axis::Horizontal);
            for k in 1..16 {
                let lam = 0.05 * k as f64;
                let t = thin(&c, lam).unwrap();
                let direct = occupied_crossing(&t, &b, Axis::Horizontal).unwrap();
                let predicted = onset.is_some_and(|o| o < lam / 0.8);
                assert_eq!(direct, predicted, "seed {seed}, lambda {lam}");
            }
        }
    }
}
