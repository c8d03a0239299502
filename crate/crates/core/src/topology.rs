//! Occupied circuits around B(0, L), necklaces, and the F/G events.
//!
//! Only discs disjoint from B(0, L) take part, and each is clipped to the
//! sampling window: the window is all that has been observed, so a verdict
//! must not depend on what lies outside it. A set of clipped discs surrounds
//! B(0, L) iff some cycle of its intersection graph winds around the origin.
//! The winding of an edge is the angle swept along the polyline
//! `rep(i) → w(i, j) → rep(j)`, where `rep(i)` is the point of the clipped
//! disc nearest its center and `w(i, j)` a point of the clipped lens. Both
//! segments lie inside one convex clipped disc, hence away from the origin.
//!
//! Within the window, "some vacant path joins B(0, L) to the window
//! boundary" holds exactly when no surrounding set exists.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::connectivity::{clearance, refine, AdaptiveRaster, GridVerdict, Phase, Raster, SpatialHash};
use crate::error::{invalid, Error, Result};
use crate::geometry::{angle_between, lens_rect_witness, Disc, Point, Rect, Window};
use crate::sampler::{fmt_f64, Configuration};

/// Intersection graph of the clipped discs avoiding B(0, L), with the
/// winding increment of every edge.
#[derive(Debug, Clone)]
pub struct ClippedGraph {
    /// indices into the configuration
    members: Vec<u32>,
    discs: Vec<Disc>,
    /// (neighbor, winding increment)
    adj: Vec<Vec<(u32, f64)>>,
}

impl ClippedGraph {
    pub fn new(config: &Configuration, big_l: f64) -> Result<Self> {
        require_ball(&config.window, big_l)?;
        let window = config.window;
        let members: Vec<u32> = (0..config.len() as u32)
            .filter(|&i| {
                let d = &config.discs[i as usize];
                d.avoids_ball(big_l) && d.meets_rect(&window)
            })
            .collect();
        let discs: Vec<Disc> = members.iter().map(|&i| config.discs[i as usize]).collect();
        let reps: Vec<Point> = discs.iter().map(|d| window.clamp(d.center())).collect();
        let mut adj = vec![Vec::new(); discs.len()];
        SpatialHash::build(&discs).for_each_candidate_pair(|i, j| {
            let (a, b) = (&discs[i as usize], &discs[j as usize]);
            if let Some(w) = lens_rect_witness(a, b, &window) {
                let t = angle_between(reps[i as usize], w) + angle_between(w, reps[j as usize]);
                adj[i as usize].push((j, t));
                adj[j as usize].push((i, -t));
            }
        });
        // neighbor order fixes the BFS order, and so every later choice
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(ClippedGraph { members, discs, adj })
    }

    pub fn len(&self) -> usize {
        self.discs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discs.is_empty()
    }

    /// Configuration indices of the participating discs.
    pub fn members(&self) -> &[u32] {
        &self.members
    }

    /// Connected components (over local indices where `active`) containing a
    /// cycle that winds around the origin, in order of smallest local index.
    fn winding_components(&self, active: &[bool], first_only: bool) -> Vec<Vec<u32>> {
        let n = self.discs.len();
        let mut theta = vec![f64::NAN; n];
        let mut found = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if !active[start] || !theta[start].is_nan() {
                continue;
            }
            theta[start] = 0.0;
            queue.push_back(start as u32);
            let mut comp = Vec::new();
            let mut winds = false;
            while let Some(i) = queue.pop_front() {
                comp.push(i);
                for &(j, t) in &self.adj[i as usize] {
                    if !active[j as usize] {
                        continue;
                    }
                    let next = theta[i as usize] + t;
                    if theta[j as usize].is_nan() {
                        theta[j as usize] = next;
                        queue.push_back(j);
                    } else if (next - theta[j as usize]).abs() > PI {
                        winds = true;
                    }
                }
            }
            if winds {
                comp.sort_unstable();
                found.push(comp);
                if first_only {
                    break;
                }
            }
        }
        found
    }

    fn surrounds(&self, active: &[bool]) -> bool {
        !self.winding_components(active, true).is_empty()
    }

    /// Local indices of the first surrounding component.
    fn first_surrounding(&self) -> Option<Vec<u32>> {
        let all = vec![true; self.len()];
        self.winding_components(&all, true).pop()
    }
}

fn require_ball(window: &Window, big_l: f64) -> Result<()> {
    if !(big_l > 0.0) {
        return Err(invalid(format!("L must be positive, got {big_l}")));
    }
    let b = Rect::square(Point::ORIGIN, big_l)?;
    if b.x0 > window.x0 && b.x1 < window.x1 && b.y0 > window.y0 && b.y1 < window.y1 {
        Ok(())
    } else {
        Err(Error::WindowInsufficient(format!("window {window:?} does not contain B(0, {big_l}) with margin")))
    }
}

/// Configuration indices of a component of discs disjoint from B(0, L)
/// whose window-clipped union separates B(0, L) from the window boundary.
pub fn surrounding_component(config: &Configuration, big_l: f64) -> Result<Option<Vec<u32>>> {
    let g = ClippedGraph::new(config, big_l)?;
    Ok(g.first_surrounding().map(|comp| comp.iter().map(|&i| g.members[i as usize]).collect()))
}

/// Whether the vacant set joins B(0, L) to the window boundary, using only
/// discs disjoint from B(0, L).
pub fn vacant_escape(config: &Configuration, big_l: f64) -> Result<bool> {
    Ok(surrounding_component(config, big_l)?.is_none())
}

/// Raster version of [`vacant_escape`]; thin features are resolved by an
/// adaptive raster split down to `max_depth` levels.
pub fn escape_grid_oracle(config: &Configuration, big_l: f64, h: f64, max_depth: u8) -> Result<GridVerdict> {
    require_ball(&config.window, big_l)?;
    let window = config.window;
    let discs: Vec<Disc> =
        config.discs.iter().copied().filter(|d| d.avoids_ball(big_l) && d.meets_rect(&window)).collect();
    let l2 = big_l * big_l;
    let slack =
        discs.iter().map(|d| (d.center().norm() - d.radius - big_l).abs()).fold(clearance(&discs, &window), f64::min);
    if slack >= 2.0 * h {
        let raster = Raster::new(&discs, &window, h)?;
        let value = raster.connects(
            Phase::Vacant,
            |i, j| {
                let c = raster.cell_center(i, j);
                c.x * c.x + c.y * c.y <= l2
            },
            |i, j| raster.on_border(i, j),
        );
        return Ok(GridVerdict { value, pitch: h, refinements: 0, stable: true });
    }
    let ball = Disc::new(0.0, 0.0, big_l);
    let raster = AdaptiveRaster::new(&discs, &window, h, &[ball], max_depth)?;
    let value = raster.connects(Phase::Vacant, |c, _| c.x * c.x + c.y * c.y <= l2, |_, r| raster.on_border(r));
    Ok(GridVerdict {
        value,
        pitch: raster.pitch(),
        refinements: raster.deepest() as u32,
        stable: raster.unresolved() == 0,
    })
}

/// Order in which greedy pruning tries to drop discs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pruning {
    /// tends to keep small pearls
    #[default]
    LargestFirst,
    /// tends to keep large pearls, maximizing the second radius
    SmallestFirst,
}

/// Removal-minimal set of discs surrounding B(0, L), sorted by
/// nonincreasing radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Necklace {
    pub discs: Vec<Disc>,
    /// configuration indices, parallel to `discs`
    pub indices: Vec<u32>,
    pub big_l: f64,
    pub window: Window,
}

impl Necklace {
    pub fn len(&self) -> usize {
        self.discs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discs.is_empty()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.discs.iter().map(|d| d.radius).collect()
    }

    /// The necklace as a configuration of its own, in the original window.
    pub fn to_configuration(&self) -> Configuration {
        Configuration::from_discs(self.discs.clone(), self.window)
    }
}

pub fn extract_necklace(config: &Configuration, big_l: f64) -> Result<Option<Necklace>> {
    extract_necklace_with(config, big_l, Pruning::LargestFirst)
}

/// Greedy pruning of the first surrounding component to a fixpoint: a disc
/// is dropped whenever the rest still surrounds.
pub fn extract_necklace_with(config: &Configuration, big_l: f64, order: Pruning) -> Result<Option<Necklace>> {
    let g = ClippedGraph::new(config, big_l)?;
    let Some(comp) = g.first_surrounding() else {
        return Ok(None);
    };
    let mut active = vec![false; g.len()];
    for &i in &comp {
        active[i as usize] = true;
    }
    let mut candidates = comp.clone();
    candidates.sort_by(|&a, &b| {
        let (ra, rb) = (g.discs[a as usize].radius, g.discs[b as usize].radius);
        match order {
            Pruning::LargestFirst => rb.total_cmp(&ra),
            Pruning::SmallestFirst => ra.total_cmp(&rb),
        }
        .then(a.cmp(&b))
    });
    loop {
        let mut changed = false;
        for &i in &candidates {
            if !active[i as usize] {
                continue;
            }
            active[i as usize] = false;
            if g.surrounds(&active) {
                changed = true;
            } else {
                active[i as usize] = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut kept: Vec<u32> = (0..g.len() as u32).filter(|&i| active[i as usize]).collect();
    kept.sort_by(|&a, &b| {
        g.discs[b as usize]
            .radius
            .total_cmp(&g.discs[a as usize].radius)
            .then(g.members[a as usize].cmp(&g.members[b as usize]))
    });
    Ok(Some(Necklace {
        discs: kept.iter().map(|&i| g.discs[i as usize]).collect(),
        indices: kept.iter().map(|&i| g.members[i as usize]).collect(),
        big_l,
        window: config.window,
    }))
}

/// Condition checks for a necklace candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecklaceReport {
    pub radii_sorted: bool,
    /// every disc disjoint from B(0, L)
    pub disjoint: bool,
    pub surrounds: bool,
    /// condition (iii): every single removal breaks the surround
    pub minimal: bool,
    /// discs whose removal keeps the surround
    pub redundant: Vec<usize>,
    /// vacant raster components of the complement of the union
    pub vacant_components: usize,
    /// condition (i): exactly one bounded and one unbounded component
    pub two_components: bool,
    /// bounded vacant components not containing the origin
    pub pockets: usize,
    pub pitch: f64,
    pub stable: bool,
}

impl NecklaceReport {
    /// Condition (ii).
    pub fn separates(&self) -> bool {
        self.disjoint && self.surrounds
    }

    pub fn all_pass(&self) -> bool {
        self.radii_sorted && self.separates() && self.minimal && self.two_components
    }
}

/// Checks (ii) and (iii) exactly and (i) on a raster of pitch `grid_h`
/// (refined until the component count is stable).
pub fn validate_necklace(necklace: &Necklace, grid_h: f64) -> Result<NecklaceReport> {
    let config = necklace.to_configuration();
    let big_l = necklace.big_l;
    let g = ClippedGraph::new(&config, big_l)?;
    let disjoint = necklace.discs.iter().all(|d| d.avoids_ball(big_l)) && g.len() == necklace.len();
    let radii_sorted = necklace.discs.windows(2).all(|w| w[0].radius >= w[1].radius);
    let mut active = vec![true; g.len()];
    let surrounds = g.surrounds(&active);
    let mut redundant = Vec::new();
    for k in 0..g.len() {
        active[k] = false;
        if g.surrounds(&active) {
            redundant.push(g.members[k] as usize);
        }
        active[k] = true;
    }
    let minimal = surrounds && redundant.is_empty();

    // whole discs, in a frame with a vacant margin around the union
    let mut frame = Rect::square(Point::ORIGIN, big_l)?;
    for d in &necklace.discs {
        let b = d.bbox();
        frame = Rect { x0: frame.x0.min(b.x0), y0: frame.y0.min(b.y0), x1: frame.x1.max(b.x1), y1: frame.y1.max(b.y1) };
    }
    let frame = frame.expand(4.0 * grid_h);
    let counts = refine(grid_h, 2, |pitch| {
        let raster = Raster::new(&necklace.discs, &frame.expand(2.0 * pitch), pitch)?;
        let (labels, count) = raster.components(Phase::Vacant);
        let (nx, ny) = raster.dims();
        let origin = {
            let i = ((0.0 - frame.x0 + 2.0 * pitch) / (frame.width() + 4.0 * pitch) * nx as f64) as usize;
            let j = ((0.0 - frame.y0 + 2.0 * pitch) / (frame.height() + 4.0 * pitch) * ny as f64) as usize;
            labels[j.min(ny - 1) * nx + i.min(nx - 1)]
        };
        let outer = labels[0];
        let pockets = (0..count as u32).filter(|&c| c != origin && c != outer).count();
        Ok((count, pockets))
    })?;
    let (vacant_components, pockets) = counts.value;
    Ok(NecklaceReport {
        radii_sorted,
        disjoint,
        surrounds,
        minimal,
        redundant,
        vacant_components,
        two_components: vacant_components == 2,
        pockets,
        pitch: counts.pitch,
        stable: counts.stable,
    })
}

/// rad(B₂). A surrounding set has at least three discs, so fewer than two
/// is an error.
pub fn second_radius(necklace: &Necklace) -> Result<f64> {
    match necklace.discs.get(1) {
        Some(d) => Ok(d.radius),
        None => Err(invalid(format!("second radius needs at least 2 discs, necklace has {}", necklace.len()))),
    }
}

/// Number of discs with radius ≥ r at distance in (0, s] from the origin.
pub fn f_count(config: &Configuration, r: f64, s: f64) -> Result<usize> {
    if !(r > 0.0 && s > 0.0) {
        return Err(invalid(format!("f_count needs r, s > 0, got {r}, {s}")));
    }
    // every counted disc meets B(0, s), so it is observed if Λ(0, s) is
    let ball_box = Rect::square(Point::ORIGIN, s)?;
    if !config.window.contains_rect(&ball_box) {
        return Err(Error::WindowInsufficient(format!("window {:?} does not contain B(0, {s})", config.window)));
    }
    Ok(config
        .discs
        .iter()
        .filter(|d| {
            let dist = d.center().norm() - d.radius;
            d.radius >= r && dist > 0.0 && dist <= s
        })
        .count())
}

/// G_L(a, b) evaluated on the largest-first and smallest-first necklaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GEvent {
    pub value: bool,
    pub second_radius: Option<f64>,
    pub second_radius_alt: Option<f64>,
}

pub fn g_event(config: &Configuration, big_l: f64, a: f64, b: f64) -> Result<GEvent> {
    if !(0.0 <= a && a <= b) {
        return Err(invalid(format!("g_event needs 0 <= a <= b, got {a}, {b}")));
    }
    let Some(first) = extract_necklace_with(config, big_l, Pruning::LargestFirst)? else {
        return Ok(GEvent { value: false, second_radius: None, second_radius_alt: None });
    };
    let alt = extract_necklace_with(config, big_l, Pruning::SmallestFirst)?.expect("a surrounding component exists");
    let r1 = second_radius(&first)?;
    let r2 = second_radius(&alt)?;
    let inside = |r: f64| a <= r && r <= b;
    Ok(GEvent { value: inside(r1) || inside(r2), second_radius: Some(r1), second_radius_alt: Some(r2) })
}

#[derive(Debug, Serialize)]
struct NecklaceSummary<'a> {
    big_l: f64,
    window: &'a Window,
    size: usize,
    radii: Vec<f64>,
    indices: &'a [u32],
    second_radius: Option<f64>,
    validation: Option<&'a NecklaceReport>,
}

/// Writes `<stem>.csv` (member discs) and `<stem>.json` (radius spectrum and
/// validation flags).
pub fn write_necklace(necklace: &Necklace, report: Option<&NecklaceReport>, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&csv_path).map_err(io(&csv_path))?));
    w.write_record(["index", "cx", "cy", "radius"])?;
    for (d, &i) in necklace.discs.iter().zip(&necklace.indices) {
        w.write_record([i.to_string(), fmt_f64(d.cx), fmt_f64(d.cy), fmt_f64(d.radius)])?;
    }
    w.flush().map_err(io(&csv_path))?;
    let summary = NecklaceSummary {
        big_l: necklace.big_l,
        window: &necklace.window,
        size: necklace.len(),
        radii: necklace.radii(),
        indices: &necklace.indices,
        second_radius: second_radius(necklace).ok(),
        validation: report,
    };
    let f = File::create(&json_path).map_err(io(&json_path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &summary)?;
    Ok((csv_path, json_path))
}

/// Eight discs of radius 1.2 centered on the circle of radius 3.
pub fn ring_fixture() -> Vec<Disc> {
    (0..8)
        .map(|k| {
            let t = k as f64 * PI / 4.0;
            Disc::new(3.0 * t.cos(), 3.0 * t.sin(), 1.2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::MAX_DEPTH;

    fn window() -> Window {
        Rect::square(Point::ORIGIN, 8.0).unwrap()
    }

    fn config(discs: Vec<Disc>) -> Configuration {
        Configuration::from_discs(discs, window())
    }

    #[test]
    fn no_discs_no_circuit() {
        let c = config(Vec::new());
        assert_eq!(surrounding_component(&c, 1.0).unwrap(), None);
        assert!(vacant_escape(&c, 1.0).unwrap());
        assert_eq!(extract_necklace(&c, 1.0).unwrap(), None);
        assert!(!g_event(&c, 1.0, 0.0, 10.0).unwrap().value);
    }

    #[test]
    fn two_discs_cannot_surround() {
        let c = config(vec![Disc::new(3.0, 0.0, 2.5), Disc::new(-3.0, 0.0, 2.5)]);
        assert_eq!(surrounding_component(&c, 0.4).unwrap(), None);
    }

    #[test]
    fn ring_surrounds_and_is_a_necklace() {
        let c = config(ring_fixture());
        let comp = surrounding_component(&c, 1.0).unwrap().unwrap();
        assert_eq!(comp.len(), 8);
        let n = extract_necklace(&c, 1.0).unwrap().unwrap();
        assert_eq!(n.len(), 8);
        let report = validate_necklace(&n, 0.02).unwrap();
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.pockets, 0);
        assert_eq!(second_radius(&n).unwrap(), 1.2);
        assert!(g_event(&c, 1.0, 1.0, 2.0).unwrap().value);
        assert!(!g_event(&c, 1.0, 0.0, 0.0).unwrap().value);
        // L too large: every disc meets B(0, L)
        assert_eq!(surrounding_component(&c, 2.0).unwrap(), None);
    }

    #[test]
    fn broken_ring_does_not_surround() {
        let mut ring = ring_fixture();
        ring.remove(3);
        assert_eq!(surrounding_component(&config(ring), 1.0).unwrap(), None);
    }

    #[test]
    fn redundant_discs_are_pruned() {
        let mut discs = ring_fixture();
        for k in 0..5 {
            let t = (k as f64 + 0.5) * PI / 4.0;
            discs.push(Disc::new(3.1 * t.cos(), 3.1 * t.sin(), 1.0));
        }
        let c = config(discs);
        let n = extract_necklace(&c, 1.0).unwrap().unwrap();
        assert!(n.len() <= 8);
        let report = validate_necklace(&n, 0.02).unwrap();
        assert!(report.minimal && report.separates());
        // pruning is a fixpoint
        let again = extract_necklace(&n.to_configuration(), 1.0).unwrap().unwrap();
        assert_eq!(again.discs, n.discs);
    }

    #[test]
    fn ring_plus_one_fails_minimality() {
        let mut discs = ring_fixture();
        discs.push(Disc::new(3.1, 0.3, 1.0));
        let n = Necklace { discs, indices: (0..9).collect(), big_l: 1.0, window: window() };
        let report = validate_necklace(&n, 0.02).unwrap();
        assert!(report.surrounds && !report.minimal);
        assert!(report.redundant.contains(&8));
    }

    #[test]
    fn pocket_is_reported() {
        // the ring disc at angle 0 replaced by three mutually overlapping
        // discs around (3, 0) whose triple intersection is empty
        let mut discs = ring_fixture();
        discs.remove(0);
        for (x, y) in [(4.0, 0.0), (2.5, 0.866), (2.5, -0.866)] {
            discs.push(Disc::new(x, y, 0.9));
        }
        let n = Necklace { discs, indices: (0..10).collect(), big_l: 1.0, window: window() };
        let report = validate_necklace(&n, 0.02).unwrap();
        assert!(report.surrounds);
        assert_eq!(report.pockets, 1, "{report:?}");
        assert_eq!(report.vacant_components, 3);
        assert!(!report.two_components);
    }

    #[test]
    fn clipping_to_the_window_counts() {
        // a ring that leaves the window surrounds only if the clipped pieces
        // still link up
        let c = Configuration::from_discs(ring_fixture(), Rect::square(Point::ORIGIN, 2.5).unwrap());
        let found = surrounding_component(&c, 1.0).unwrap().is_some();
        let oracle = escape_grid_oracle(&c, 1.0, 0.01, MAX_DEPTH).unwrap();
        assert_eq!(found, !oracle.value);
    }

    #[test]
    fn rotation_keeps_verdict() {
        let c = config(ring_fixture());
        let r = c.rotated90();
        assert_eq!(
            surrounding_component(&c, 1.0).unwrap().is_some(),
            surrounding_component(&r, 1.0).unwrap().is_some()
        );
    }

    #[test]
    fn f_count_example() {
        let c = config(vec![Disc::new(4.0, 0.0, 2.0)]);
        assert_eq!(f_count(&c, 1.0, 3.0).unwrap(), 1);
        assert_eq!(f_count(&c, 2.5, 3.0).unwrap(), 0);
        assert_eq!(f_count(&c, 1.0, 1.5).unwrap(), 0);
        assert_eq!(f_count(&config(Vec::new()), 1.0, 3.0).unwrap(), 0);
        assert!(matches!(f_count(&c, 1.0, 9.0), Err(Error::WindowInsufficient(_))));
    }

    #[test]
    fn second_radius_examples() {
        let mk = |radii: &[f64]| Necklace {
            discs: radii.iter().map(|&r| Disc::new(10.0, 0.0, r)).collect(),
            indices: (0..radii.len() as u32).collect(),
            big_l: 1.0,
            window: window(),
        };
        assert_eq!(second_radius(&mk(&[5.0, 3.0, 3.0, 1.0])).unwrap(), 3.0);
        assert_eq!(second_radius(&mk(&[2.0, 2.0])).unwrap(), 2.0);
        assert!(second_radius(&mk(&[2.0])).is_err());
    }

    #[test]
    fn window_must_contain_the_ball() {
        let c = Configuration::from_discs(Vec::new(), Rect::square(Point::ORIGIN, 1.0).unwrap());
        assert!(matches!(surrounding_component(&c, 1.0), Err(Error::WindowInsufficient(_))));
    }
}
