//! Monte Carlo drivers. Replicate `i` of a run with seed `s` always uses
//! the configuration seeded by `stream_seed(s, i)`, and results are reduced
//! from per-replicate values in index order, so output never depends on
//! the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete, DiscreteCDF, Poisson};

use crate::connectivity::{
    crossing_onset, e_event_window, grid_oracle_refined, Axis, DiscGraph, LatticeBox, Phase, MAX_DEPTH,
};
use crate::distributions::{Law, Quantity, RadiusLaw};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, Rect, Window};
use crate::sampler::{sample_configuration, stream_seed, vacant_fraction, Boundary, Configuration};
use crate::stats::{chi_square_sf, pearson, Estimate};
use crate::topology::{f_count, g_event, surrounding_component};

/// A boolean observable of one configuration, with the window it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// occupied left–right crossing of `[0, ℓ] × [0, aspect·ℓ]`
    OccupiedCrossing { ell: f64, aspect: f64 },
    /// vacant left–right crossing of the same box
    VacantCrossing { ell: f64, aspect: f64 },
    /// raster verdict at pitch `h` for the same box, refined where thin
    /// features need it
    GridCrossing { ell: f64, aspect: f64, phase: Phase, h: f64 },
    /// Λ(0, ℓ) ↔ Λ(0, L)ᶜ through discs of radius ≤ cap
    Arm { ell: f64, big_l: f64, cap: Option<f64> },
    /// grid form of E_ℓ(L) with sites up to `outer`
    EEvent { ell: f64, big_l: f64, outer: f64 },
    /// an occupied circuit around B(0, L) inside Λ(0, half)
    Surround { big_l: f64, half: f64 },
    /// a necklace with second radius in [a, b] inside Λ(0, half)
    G { big_l: f64, a: f64, b: f64, half: f64 },
    /// F(r, s): at least two large discs near the origin
    F { r: f64, s: f64 },
}

fn crossing_box(ell: f64, aspect: f64) -> Result<Rect> {
    if !(ell > 0.0 && aspect > 0.0) {
        return Err(invalid(format!("crossing box needs ell, aspect > 0, got {ell}, {aspect}")));
    }
    Rect::sized(ell, aspect * ell)
}

impl Event {
    pub fn window(&self) -> Result<Window> {
        match *self {
            Event::OccupiedCrossing { ell, aspect }
            | Event::VacantCrossing { ell, aspect }
            | Event::GridCrossing { ell, aspect, .. } => crossing_box(ell, aspect),
            Event::Arm { big_l, .. } => Rect::square(Point::ORIGIN, big_l),
            Event::EEvent { ell, big_l, outer } => e_event_window(ell, big_l, outer),
            Event::Surround { half, .. } | Event::G { half, .. } => Rect::square(Point::ORIGIN, half),
            Event::F { s, .. } => Rect::square(Point::ORIGIN, s),
        }
    }

    pub fn evaluate(&self, config: &Configuration) -> Result<bool> {
        match *self {
            Event::OccupiedCrossing { ell, aspect } => DiscGraph::new(config.discs.clone(), config.window)
                .occupied_crossing(&crossing_box(ell, aspect)?, Axis::Horizontal),
            Event::VacantCrossing { ell, aspect } => DiscGraph::new(config.discs.clone(), config.window)
                .vacant_crossing(&crossing_box(ell, aspect)?, Axis::Horizontal),
            Event::GridCrossing { ell, aspect, phase, h } => {
                let rect = crossing_box(ell, aspect)?;
                Ok(grid_oracle_refined(&config.discs, &rect, h, phase, Axis::Horizontal, MAX_DEPTH)?.value)
            }
            Event::Arm { ell, big_l, cap } => {
                DiscGraph::new(config.discs.clone(), config.window).arm_event(Point::ORIGIN, ell, big_l, cap)
            }
            Event::EEvent { ell, big_l, outer } => {
                DiscGraph::new(config.discs.clone(), config.window).e_event(ell, big_l, outer)
            }
            Event::Surround { big_l, .. } => Ok(surrounding_component(config, big_l)?.is_some()),
            Event::G { big_l, a, b, .. } => Ok(g_event(config, big_l, a, b)?.value),
            Event::F { r, s } => Ok(f_count(config, r, s)? >= 2),
        }
    }
}

/// Replicate `index` of a run: an exact sample of the discs meeting `window`.
pub fn replicate(law: &Law, lambda: f64, window: Window, seed: u64, index: u64) -> Result<Configuration> {
    sample_configuration(law, lambda, window, stream_seed(seed, index), Boundary::Hitting)
}

fn par_map<T: Send>(n: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

fn require_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(invalid("sample count must be at least 1"))
    } else {
        Ok(())
    }
}

fn count(v: &[bool]) -> u64 {
    v.iter().filter(|&&b| b).count() as u64
}

pub fn mc_estimate(event: &Event, law: &Law, lambda: f64, n: u64, seed: u64) -> Result<Estimate> {
    require_n(n)?;
    let window = event.window()?;
    let hits = par_map(n, |i| event.evaluate(&replicate(law, lambda, window, seed, i)?))?;
    Ok(Estimate::from_counts(count(&hits), n, seed))
}

/// Per-replicate agreement between two events on identical configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub first: Estimate,
    pub second: Estimate,
    pub agree: u64,
    pub n: u64,
}

pub fn paired_estimate(first: &Event, second: &Event, law: &Law, lambda: f64, n: u64, seed: u64) -> Result<Agreement> {
    require_n(n)?;
    let window = first.window()?;
    if second.window()? != window {
        return Err(invalid("paired events must use the same window"));
    }
    let pairs = par_map(n, |i| {
        let c = replicate(law, lambda, window, seed, i)?;
        Ok((first.evaluate(&c)?, second.evaluate(&c)?))
    })?;
    let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
    Ok(Agreement {
        first: Estimate::from_counts(count(&a), n, seed),
        second: Estimate::from_counts(count(&b), n, seed),
        agree: pairs.iter().filter(|p| p.0 == p.1).count() as u64,
        n,
    })
}

/// Intensity at which the mean covered fraction 1 − e^{−λπE[ρ²]} is 1 − e^{−4}.
/// Far above the threshold for every law with finite planar second moment.
pub fn default_lambda_hi(law: &Law) -> f64 {
    let m2 = match law {
        Law::Planar(mu) => mu.partial_moment(0.0, 2),
        // planar intensity 2E[z]·λ times E[ρ²] under the size-biased slice
        Law::Sliced(s) => s.base.partial_moment(0.0, 3).map(|m3| 4.0 * m3 / 3.0),
    };
    match m2 {
        Quantity::Finite(m) if m > 0.0 => 4.0 / (std::f64::consts::PI * m),
        _ => 1.0,
    }
}

/// Crossing onsets of a bank of replicates sampled at `lambda_hi`. After
/// thinning to λ the occupied left–right crossing holds iff
/// `onset_h < λ/λ_hi` and the occupied top–bottom one iff
/// `onset_v < λ/λ_hi`; vacant crossings are their duals.
#[derive(Debug, Clone, PartialEq)]
pub struct Bank {
    pub lambda_hi: f64,
    pub onset_h: Vec<Option<f64>>,
    pub onset_v: Vec<Option<f64>>,
    pub discs: u64,
}

impl Bank {
    pub fn build(law: &Law, ell: f64, aspect: f64, lambda_hi: f64, n: u64, seed: u64) -> Result<Self> {
        let mut bank = Bank { lambda_hi, onset_h: Vec::new(), onset_v: Vec::new(), discs: 0 };
        bank.extend(law, ell, aspect, n, seed)?;
        Ok(bank)
    }

    pub fn len(&self) -> u64 {
        self.onset_h.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.onset_h.is_empty()
    }

    /// Adds replicates up to a total of `n`.
    pub fn extend(&mut self, law: &Law, ell: f64, aspect: f64, n: u64, seed: u64) -> Result<()> {
        let rect = crossing_box(ell, aspect)?;
        let start = self.len();
        if n <= start {
            return Ok(());
        }
        let lambda_hi = self.lambda_hi;
        let rows = (start..n)
            .into_par_iter()
            .map(|i| {
                let c = replicate(law, lambda_hi, rect, seed, i)?;
                let keys: Vec<f64> = (0..c.len()).map(|k| c.retention_key(k)).collect();
                Ok((
                    crossing_onset(&c.discs, &keys, &rect, Axis::Horizontal),
                    crossing_onset(&c.discs, &keys, &rect, Axis::Vertical),
                    c.len() as u64,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        for (h, v, k) in rows {
            self.onset_h.push(h);
            self.onset_v.push(v);
            self.discs += k;
        }
        Ok(())
    }

    pub fn successes(&self, event: CrossingEvent, lambda: f64) -> u64 {
        let t = lambda / self.lambda_hi;
        let below = |o: &Option<f64>| o.is_some_and(|o| o < t);
        let onsets = match event {
            CrossingEvent::Occupied | CrossingEvent::Vacant => &self.onset_h,
            CrossingEvent::VacantShort => &self.onset_v,
        };
        let k = onsets.iter().filter(|o| below(o)).count() as u64;
        match event {
            CrossingEvent::Occupied => k,
            _ => self.len() - k,
        }
    }

    pub fn estimate(&self, event: CrossingEvent, lambda: f64, seed: u64) -> Estimate {
        Estimate::from_counts(self.successes(event, lambda), self.len(), seed)
    }
}

/// Crossing events of the box `[0, ℓ] × [0, aspect·ℓ]` used for thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingEvent {
    /// occupied left–right crossing, Cross(ℓ, aspect·ℓ)
    Occupied,
    /// vacant top–bottom crossing, the complement of Cross(ℓ, aspect·ℓ)
    Vacant,
    /// vacant left–right crossing, the complement of the occupied
    /// top–bottom crossing
    VacantShort,
}

impl CrossingEvent {
    pub fn phase(self) -> Phase {
        match self {
            CrossingEvent::Occupied => Phase::Occupied,
            _ => Phase::Vacant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub ell: f64,
    pub aspect: f64,
    pub target: f64,
    pub n: u64,
    pub tol: f64,
    pub seed: u64,
    /// upper end of the initial bracket; [`default_lambda_hi`] if unset
    pub lambda_hi: Option<f64>,
    /// double the bank until the Wilson width at the root is at most this
    pub ci_target: Option<f64>,
    pub max_n: u64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            ell: 8.0,
            aspect: 3.0,
            target: 0.5,
            n: 400,
            tol: 1e-3,
            seed: 0,
            lambda_hi: None,
            ci_target: None,
            max_n: 6400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub lambda: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub lambda_hat: f64,
    pub phase: Phase,
    pub event: CrossingEvent,
    pub ell: f64,
    pub aspect: f64,
    pub target: f64,
    pub tol: f64,
    pub seed: u64,
    pub n: u64,
    pub lambda_hi: f64,
    pub bracket: (f64, f64),
    pub iterations: Vec<Probe>,
    pub ci_width_at_root: f64,
}

/// Bisection of λ ↦ p̂(λ) − target on a fixed bank (sign flipped for the
/// vacant phase, whose crossing probability decreases in λ).
pub fn bisect_bank(bank: &Bank, event: CrossingEvent, params: &ThresholdParams) -> Result<ThresholdResult> {
    let (target, tol) = (params.target, params.tol);
    let phase = event.phase();
    let signed = |lambda: f64| {
        let e = bank.estimate(event, lambda, params.seed);
        let g = match phase {
            Phase::Occupied => e.p_hat - target,
            Phase::Vacant => target - e.p_hat,
        };
        (g, e)
    };
    let mut iterations = Vec::new();
    let (g_lo, e_lo) = signed(0.0);
    iterations.push(Probe { lambda: 0.0, estimate: e_lo });
    let (mut lo, mut hi) = (0.0, bank.lambda_hi);
    if g_lo >= 0.0 {
        hi = 0.0;
    } else {
        let (g_hi, e_hi) = signed(hi);
        iterations.push(Probe { lambda: hi, estimate: e_hi });
        if g_hi < 0.0 {
            return Err(Error::Bracket(format!(
                "{event:?} crossing estimate at lambda_hi={hi} is {} with target {target}; \
                 raise lambda_hi",
                e_hi.p_hat
            )));
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let (g, e) = signed(mid);
            iterations.push(Probe { lambda: mid, estimate: e });
            if g >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    check_monotone(&iterations, phase)?;
    let lambda_hat = 0.5 * (lo + hi);
    Ok(ThresholdResult {
        lambda_hat,
        phase,
        event,
        ell: params.ell,
        aspect: params.aspect,
        target,
        tol,
        seed: params.seed,
        n: bank.len(),
        lambda_hi: bank.lambda_hi,
        bracket: (lo, hi),
        iterations,
        ci_width_at_root: bank.estimate(event, lambda_hat, params.seed).ci_width(),
    })
}

fn check_monotone(probes: &[Probe], phase: Phase) -> Result<()> {
    let mut sorted: Vec<&Probe> = probes.iter().collect();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let ok = sorted.windows(2).all(|w| match phase {
        Phase::Occupied => w[0].estimate.successes <= w[1].estimate.successes,
        Phase::Vacant => w[0].estimate.successes >= w[1].estimate.successes,
    });
    if ok {
        Ok(())
    } else {
        Err(invalid("crossing counts are not monotone in lambda along the bisection"))
    }
}

fn validate_threshold(params: &ThresholdParams) -> Result<()> {
    require_n(params.n)?;
    if !(params.tol > 0.0 && (0.0..=1.0).contains(&params.target)) {
        return Err(invalid(format!(
            "threshold needs tol > 0 and target in [0, 1], got {}, {}",
            params.tol, params.target
        )));
    }
    Ok(())
}

/// Builds the bank, raising λ_hi (up to 4 doublings) until the bracket holds
/// for every requested event, and doubling n while the CI at the root is
/// wider than `ci_target`.
fn run_thresholds(law: &Law, params: &ThresholdParams, events: &[CrossingEvent]) -> Result<Vec<ThresholdResult>> {
    validate_threshold(params)?;
    let mut lambda_hi = params.lambda_hi.unwrap_or_else(|| default_lambda_hi(law));
    let mut attempt = 0;
    let mut bank = loop {
        let bank = Bank::build(law, params.ell, params.aspect, lambda_hi, params.n, params.seed)?;
        let bracketed = events.iter().all(|&e| bisect_bank(&bank, e, params).is_ok());
        if bracketed || attempt == 4 || params.lambda_hi.is_some() {
            break bank;
        }
        lambda_hi *= 2.0;
        attempt += 1;
    };
    loop {
        let results = events.iter().map(|&e| bisect_bank(&bank, e, params)).collect::<Result<Vec<_>>>()?;
        let wide = params.ci_target.is_some_and(|t| results.iter().any(|r| r.ci_width_at_root > t));
        if !wide || 2 * bank.len() > params.max_n {
            return Ok(results);
        }
        let n = 2 * bank.len();
        bank.extend(law, params.ell, params.aspect, n, params.seed)?;
    }
}

pub fn threshold_bisect(law: &Law, event: CrossingEvent, params: &ThresholdParams) -> Result<ThresholdResult> {
    Ok(run_thresholds(law, params, &[event])?.remove(0))
}

/// Occupied and vacant thresholds from one shared bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualThreshold {
    pub occupied: ThresholdResult,
    pub vacant: ThresholdResult,
    pub vacant_short: ThresholdResult,
    /// |λ̂_c − λ̂_c*|
    pub gap: f64,
    /// distance between the occupied and vacant short-direction roots, the
    /// width of the finite-size critical window at this ℓ
    pub short_gap: f64,
}

pub fn dual_threshold(law: &Law, params: &ThresholdParams) -> Result<DualThreshold> {
    let events = [CrossingEvent::Occupied, CrossingEvent::Vacant, CrossingEvent::VacantShort];
    let mut r = run_thresholds(law, params, &events)?;
    let vacant_short = r.pop().expect("three events");
    let vacant = r.pop().expect("three events");
    let occupied = r.pop().expect("three events");
    Ok(DualThreshold {
        gap: (occupied.lambda_hat - vacant.lambda_hat).abs(),
        short_gap: (occupied.lambda_hat - vacant_short.lambda_hat).abs(),
        occupied,
        vacant,
        vacant_short,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub big_l: f64,
    pub ratio: f64,
    pub estimate: Estimate,
    /// fitted probability at this point, if a fit exists
    pub fitted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub lambda: f64,
    pub ell: f64,
    pub cap: Option<f64>,
    pub points: Vec<DecayPoint>,
    /// OLS slope of ln p̂ against L/ℓ; `None` (censored) with < 2 nonzero points
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// every fitted value lies inside its point's Wilson interval
    pub fit_within_ci: bool,
    pub strictly_decreasing: bool,
}

/// Arm probabilities P[Λ(0, ℓ) ↔ Λ(0, L)ᶜ] for every L, all evaluated on
/// one configuration per replicate sampled in Λ(0, max L). The estimates
/// are therefore coupled and nonincreasing in L.
pub fn decay_profile(
    law: &Law,
    lambda: f64,
    ell: f64,
    big_ls: &[f64],
    cap: Option<f64>,
    n: u64,
    seed: u64,
) -> Result<DecayProfile> {
    require_n(n)?;
    if big_ls.is_empty() || big_ls.windows(2).any(|w| w[0] >= w[1]) || big_ls[0] < ell {
        return Err(invalid("L values must be increasing and at least ell"));
    }
    let window = Rect::square(Point::ORIGIN, *big_ls.last().expect("nonempty"))?;
    let rows = par_map(n, |i| {
        let c = replicate(law, lambda, window, seed, i)?;
        let g = DiscGraph::new(c.discs, c.window);
        big_ls.iter().map(|&l| g.arm_event(Point::ORIGIN, ell, l, cap)).collect::<Result<Vec<bool>>>()
    })?;
    let mut points: Vec<DecayPoint> = big_ls
        .iter()
        .enumerate()
        .map(|(k, &l)| DecayPoint {
            big_l: l,
            ratio: l / ell,
            estimate: Estimate::from_counts(rows.iter().filter(|r| r[k]).count() as u64, n, seed),
            fitted: None,
        })
        .collect();
    let xy: Vec<(f64, f64)> =
        points.iter().filter(|p| p.estimate.p_hat > 0.0).map(|p| (p.ratio, p.estimate.p_hat.ln())).collect();
    let fit = ols(&xy);
    if let Some((a, b)) = fit {
        for p in &mut points {
            p.fitted = Some((a + b * p.ratio).exp());
        }
    }
    let fit_within_ci = fit.is_some()
        && points.iter().all(|p| {
            let f = p.fitted.expect("fit exists");
            p.estimate.ci_low <= f && f <= p.estimate.ci_high
        });
    let strictly_decreasing = points.windows(2).all(|w| w[1].estimate.p_hat < w[0].estimate.p_hat);
    Ok(DecayProfile {
        lambda,
        ell,
        cap,
        points,
        slope: fit.map(|f| f.1),
        intercept: fit.map(|f| f.0),
        fit_within_ci,
        strictly_decreasing,
    })
}

/// Intercept and slope of the least-squares line through `xy`.
pub fn ols(xy: &[(f64, f64)]) -> Option<(f64, f64)> {
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// P̂[E_ℓ(L)] for each L, with sites up to `outer_factor · L`.
pub fn e_event_profile(
    law: &Law,
    lambda: f64,
    ell: f64,
    big_ls: &[f64],
    outer_factor: f64,
    n: u64,
    seed: u64,
) -> Result<Vec<(f64, Estimate)>> {
    big_ls
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let event = Event::EEvent { ell, big_l: l, outer: outer_factor * l };
            Ok((l, mc_estimate(&event, law, lambda, n, stream_seed(seed, k as u64))?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeierlsBreakdown {
    pub big_l: f64,
    pub lambda: f64,
    pub c_fit: f64,
    pub j0: u32,
    /// (1/c) e^{−c√L}
    pub small_pearls: f64,
    /// (λ/c) Σ_{j≥j₀} p(3^j)
    pub large_pearls: f64,
    pub total: f64,
    /// (λ/c) 99π ∫_{z₀}^∞ z² μ(dz)
    pub analytic_cap: f64,
}

pub fn peierls_bound(law: &RadiusLaw, lambda: f64, big_l: f64, c_fit: f64) -> Result<PeierlsBreakdown> {
    if !(c_fit > 0.0 && lambda >= 0.0) {
        return Err(invalid(format!("peierls bound needs c > 0 and lambda >= 0, got {c_fit}, {lambda}")));
    }
    let tail = law.tail_sum_bound(big_l)?;
    let small_pearls = (-c_fit * big_l.sqrt()).exp() / c_fit;
    let large_pearls = lambda / c_fit * tail.sum.require("tail sum")?;
    Ok(PeierlsBreakdown {
        big_l,
        lambda,
        c_fit,
        j0: tail.j0,
        small_pearls,
        large_pearls,
        total: small_pearls + large_pearls,
        analytic_cap: lambda / c_fit * tail.bound.require("tail bound")?,
    })
}

/// Breakdowns over an L grid and whether the total strictly decreases.
pub fn peierls_profile(
    law: &RadiusLaw,
    lambda: f64,
    big_ls: &[f64],
    c_fit: f64,
) -> Result<(Vec<PeierlsBreakdown>, bool)> {
    let rows = big_ls.iter().map(|&l| peierls_bound(law, lambda, l, c_fit)).collect::<Result<Vec<_>>>()?;
    let decreasing = rows.windows(2).all(|w| w[1].total < w[0].total);
    Ok((rows, decreasing))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub distance: i64,
    /// `None` when either indicator is constant over the sample
    pub r: Option<f64>,
    /// r·√n: standard normal under independence
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceTable {
    pub lambda: f64,
    pub ell: f64,
    pub n: u64,
    pub x_open: Estimate,
    /// left–right crossing of [0, ℓ] × [0, 3ℓ]
    pub cross: Estimate,
    /// crossing of one of the four 2ℓ × 6ℓ strips around Λ(0, ℓ), which
    /// X(0) = 1 implies pathwise
    pub strip_cross: Estimate,
    /// X(0) ≤ strip crossing held in every replicate
    pub strip_inclusion: bool,
    pub correlations: Vec<Correlation>,
}

impl DependenceTable {
    /// √(σ_X² + 16 σ_C²), the standard error of p̂[X=1] − 4 p̂[Cross].
    pub fn sigma_joint(&self) -> f64 {
        (self.x_open.sigma().powi(2) + 16.0 * self.cross.sigma().powi(2)).sqrt()
    }
}

/// Correlations of X(0) with X(d e₁), together with P̂[X = 1] and the
/// crossing probabilities bounding it.
pub fn dependence_test(
    law: &Law,
    lambda: f64,
    ell: f64,
    distances: &[i64],
    n: u64,
    seed: u64,
) -> Result<DependenceTable> {
    require_n(n)?;
    if distances.iter().any(|&d| d < 1) {
        return Err(invalid("lattice distances must be positive"));
    }
    let d_max = distances.iter().copied().max().unwrap_or(1);
    let lattice = LatticeBox::new(0, 0, d_max, 0)?;
    let window = lattice.window(ell)?;
    let cross_box = Rect::new(0.0, 0.0, ell, 3.0 * ell)?;
    let strips = [
        (Rect::new(ell, -3.0 * ell, 3.0 * ell, 3.0 * ell)?, Axis::Horizontal),
        (Rect::new(-3.0 * ell, -3.0 * ell, -ell, 3.0 * ell)?, Axis::Horizontal),
        (Rect::new(-3.0 * ell, ell, 3.0 * ell, 3.0 * ell)?, Axis::Vertical),
        (Rect::new(-3.0 * ell, -3.0 * ell, 3.0 * ell, -ell)?, Axis::Vertical),
    ];
    let rows = par_map(n, |i| {
        let c = replicate(law, lambda, window, seed, i)?;
        let g = DiscGraph::new(c.discs, c.window);
        let x0 = g.arm_event(Point::ORIGIN, ell, 3.0 * ell, Some(ell))?;
        let xs = distances
            .iter()
            .map(|&d| g.arm_event(Point::new(ell * d as f64, 0.0), ell, 3.0 * ell, Some(ell)))
            .collect::<Result<Vec<bool>>>()?;
        let cross = g.occupied_crossing(&cross_box, Axis::Horizontal)?;
        let mut strip = false;
        for (r, axis) in &strips {
            strip |= g.occupied_crossing(r, *axis)?;
        }
        Ok((x0, xs, cross, strip))
    })?;
    let x0: Vec<bool> = rows.iter().map(|r| r.0).collect();
    let correlations = distances
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let xd: Vec<bool> = rows.iter().map(|r| r.1[k]).collect();
            let r = pearson(&x0, &xd);
            Correlation { distance: d, r, z: r.map(|r| r * (n as f64).sqrt()) }
        })
        .collect();
    let cross: Vec<bool> = rows.iter().map(|r| r.2).collect();
    let strip: Vec<bool> = rows.iter().map(|r| r.3).collect();
    Ok(DependenceTable {
        lambda,
        ell,
        n,
        x_open: Estimate::from_counts(count(&x0), n, seed),
        cross: Estimate::from_counts(count(&cross), n, seed),
        strip_cross: Estimate::from_counts(count(&strip), n, seed),
        strip_inclusion: rows.iter().all(|r| !r.0 || r.3),
        correlations,
    })
}

/// One bin of a count histogram: counts in `lo..=hi` (`hi = None` for the tail).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofBin {
    pub lo: u64,
    pub hi: Option<u64>,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GofMethod {
    ChiSquare,
    /// exact two-sided binomial test on {0, ≥1}
    Binomial,
    /// ν = 0: every count must be zero
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub nu: f64,
    pub n: u64,
    pub method: GofMethod,
    pub bins: Vec<GofBin>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub mean_count: f64,
    /// P̂[F(r, s)] = P̂[count ≥ 2]
    pub f_hat: Estimate,
    pub f_bound: f64,
}

/// Chi-square fit of f_count(r, s) to Poisson(ν(r, s)).
pub fn poisson_gof(law: &RadiusLaw, lambda: f64, r: f64, s: f64, n: u64, seed: u64) -> Result<GofResult> {
    require_n(n)?;
    let nu = law.near_rate(lambda, r, s).require("near-disc rate")?;
    let f_bound = law.f_bound(lambda, r, s).require("F bound")?;
    let planar = Law::Planar(*law);
    let window = Rect::square(Point::ORIGIN, s)?;
    let counts = par_map(n, |i| f_count(&replicate(&planar, lambda, window, seed, i)?, r, s))?;
    let max = counts.iter().copied().max().unwrap_or(0) as u64;
    let mut hist = vec![0u64; max as usize + 1];
    for &c in &counts {
        hist[c] += 1;
    }
    let f_hat = Estimate::from_counts(counts.iter().filter(|&&c| c >= 2).count() as u64, n, seed);
    let mean_count = counts.iter().sum::<usize>() as f64 / n as f64;
    let nf = n as f64;
    let observed =
        |lo: u64, hi: Option<u64>| -> u64 { (lo..=hi.unwrap_or(max).min(max)).map(|k| hist[k as usize]).sum() };
    let mut result = GofResult {
        nu,
        n,
        method: GofMethod::Degenerate,
        bins: Vec::new(),
        statistic: 0.0,
        dof: 0,
        p_value: if max == 0 { 1.0 } else { 0.0 },
        mean_count,
        f_hat,
        f_bound,
    };
    if nu == 0.0 {
        result.bins.push(GofBin { lo: 0, hi: None, observed: n, expected: nf });
        return Ok(result);
    }
    let pois = Poisson::new(nu).map_err(|e| invalid(format!("poisson({nu}): {e}")))?;
    // bins from 0 upward, each closed once its expectation reaches 5 and
    // enough mass remains for the tail bin
    let mut bins = Vec::new();
    let mut lo = 0u64;
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        acc += pois.pmf(k);
        let tail = 1.0 - pois.cdf(k);
        if acc * nf >= 5.0 && tail * nf >= 5.0 {
            bins.push(GofBin { lo, hi: Some(k), observed: observed(lo, Some(k)), expected: acc * nf });
            lo = k + 1;
            acc = 0.0;
        } else if tail * nf < 5.0 {
            break;
        }
        k += 1;
    }
    let tail = if lo == 0 { 1.0 } else { 1.0 - pois.cdf(lo - 1) };
    bins.push(GofBin { lo, hi: None, observed: observed(lo, None), expected: tail * nf });
    if bins.len() >= 2 {
        let statistic: f64 = bins.iter().map(|b| (b.observed as f64 - b.expected).powi(2) / b.expected).sum();
        result.method = GofMethod::ChiSquare;
        result.dof = bins.len() - 1;
        result.statistic = statistic;
        result.p_value = chi_square_sf(statistic, result.dof);
        result.bins = bins;
    } else {
        let p0 = (-nu).exp();
        let zeros = hist[0];
        result.method = GofMethod::Binomial;
        result.p_value = binomial_two_sided(zeros, n, p0)?;
        result.bins = vec![
            GofBin { lo: 0, hi: Some(0), observed: zeros, expected: p0 * nf },
            GofBin { lo: 1, hi: None, observed: n - zeros, expected: (1.0 - p0) * nf },
        ];
    }
    Ok(result)
}

/// Two-sided exact binomial test: total probability of outcomes no more
/// likely than the observed one.
pub fn binomial_two_sided(k: u64, n: u64, p: f64) -> Result<f64> {
    let b = Binomial::new(p, n).map_err(|e| invalid(format!("binomial({n}, {p}): {e}")))?;
    let pk = b.pmf(k) * (1.0 + 1e-7);
    Ok((0..=n).map(|i| b.pmf(i)).filter(|&q| q <= pk).sum::<f64>().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GRow {
    pub j: i32,
    pub a: f64,
    pub b: f64,
    pub estimate: Estimate,
    pub p_of_r: f64,
    /// p̂ / (λ p(3^j)); `None` when p(3^j) = 0
    pub ratio: Option<f64>,
    /// zero successes: only the Wilson upper bound is informative
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GProfile {
    pub lambda: f64,
    pub big_l: f64,
    pub half: f64,
    pub rows: Vec<GRow>,
    /// max_j p̂_j / (λ p(3^j)) over rows with p(3^j) > 0
    pub c_hat: Option<f64>,
    /// some row has p̂ > 0 while p(3^j) = 0
    pub violation: bool,
}

/// P̂[G_L(3^j, 3^{j+1})] against p(3^j), on windows Λ(0, half).
pub fn g_vs_p_profile(
    law: &RadiusLaw,
    lambda: f64,
    big_l: f64,
    js: &[i32],
    half: f64,
    n: u64,
    seed: u64,
) -> Result<GProfile> {
    require_n(n)?;
    if !law.moment_check(2) {
        return Err(Error::Divergent("G profile needs a finite second moment".into()));
    }
    let planar = Law::Planar(*law);
    let window = Rect::square(Point::ORIGIN, half)?;
    let radii = par_map(n, |i| {
        let g = g_event(&replicate(&planar, lambda, window, seed, i)?, big_l, 0.0, 0.0)?;
        Ok((g.second_radius, g.second_radius_alt))
    })?;
    let mut violation = false;
    let mut c_hat: Option<f64> = None;
    let rows = js
        .iter()
        .map(|&j| {
            let a = 3f64.powi(j);
            let b = 3.0 * a;
            let inside = |r: Option<f64>| r.is_some_and(|r| a <= r && r <= b);
            let k = radii.iter().filter(|(r1, r2)| inside(*r1) || inside(*r2)).count() as u64;
            let estimate = Estimate::from_counts(k, n, seed);
            let p = law.p_of_r(a).require("p(r)")?;
            let ratio = (p > 0.0 && lambda > 0.0).then(|| estimate.p_hat / (lambda * p));
            if p == 0.0 && k > 0 {
                violation = true;
            }
            if let Some(r) = ratio {
                c_hat = Some(c_hat.map_or(r, |c: f64| c.max(r)));
            }
            Ok(GRow { j, a, b, estimate, p_of_r: p, ratio, censored: k == 0 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GProfile { lambda, big_l, half, rows, c_hat, violation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    /// explicit pad, or `None` for exact hitting-mode sampling
    pub pad: Option<f64>,
    /// mean vacant fraction over configurations
    pub mean: f64,
    /// batch-means standard error over configurations
    pub sigma: f64,
    pub configs: u64,
    pub probes_per_config: u64,
    /// exp(−λπE[ρ²]); 0 when the second moment diverges
    pub void_probability: f64,
}

/// e^{−λπE[ρ²]} for the planar radius law (sliced laws use the induced ρ).
pub fn void_probability(law: &Law, lambda: f64) -> f64 {
    let m2 = match law {
        Law::Planar(mu) => mu.partial_moment(0.0, 2),
        Law::Sliced(s) => s.base.partial_moment(0.0, 3).map(|m3| 4.0 * m3 / 3.0),
    };
    match m2 {
        Quantity::Finite(m) => (-lambda * std::f64::consts::PI * m).exp(),
        Quantity::Divergent => 0.0,
    }
}

/// Vacant fraction of `window`, pooled over `configs` independent
/// configurations with `probes` probes each.
pub fn coverage(
    law: &Law,
    lambda: f64,
    window: Window,
    pad: Option<f64>,
    configs: u64,
    probes: u64,
    seed: u64,
) -> Result<CoverageRow> {
    if configs < 2 || probes == 0 {
        return Err(invalid("coverage needs at least 2 configurations and 1 probe"));
    }
    let boundary = match pad {
        Some(pad) => Boundary::ExplicitPad { pad },
        None => Boundary::Hitting,
    };
    let fractions = par_map(configs, |i| {
        let s = stream_seed(seed, i);
        let c = sample_configuration(law, lambda, window, s, boundary)?;
        Ok(vacant_fraction(&c, &window, probes, stream_seed(s, u64::MAX))?.p_hat)
    })?;
    let m = configs as f64;
    let mean = fractions.iter().sum::<f64>() / m;
    let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(CoverageRow {
        pad,
        mean,
        sigma: (var / m).sqrt(),
        configs,
        probes_per_config: probes,
        void_probability: void_probability(law, lambda),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac() -> Law {
        Law::Planar(RadiusLaw::dirac(1.0).unwrap())
    }

    #[test]
    fn zero_intensity_never_crosses() {
        let e = mc_estimate(&Event::OccupiedCrossing { ell: 4.0, aspect: 3.0 }, &dirac(), 0.0, 100, 1).unwrap();
        assert_eq!(e.successes, 0);
        assert!((e.ci_high - 3.8415 / 103.8415).abs() < 1e-4);
    }

    #[test]
    fn bank_matches_direct_estimates() {
        let law = dirac();
        let bank = Bank::build(&law, 4.0, 3.0, 1.0, 60, 5).unwrap();
        for lambda in [0.2, 0.4, 0.7] {
            let direct = (0..60)
                .filter(|&i| {
                    let c = replicate(&law, 1.0, Rect::sized(4.0, 12.0).unwrap(), 5, i).unwrap();
                    let t = crate::sampler::thin(&c, lambda).unwrap();
                    Event::OccupiedCrossing { ell: 4.0, aspect: 3.0 }.evaluate(&t).unwrap()
                })
                .count() as u64;
            assert_eq!(bank.successes(CrossingEvent::Occupied, lambda), direct);
        }
    }

    #[test]
    fn zero_target_gives_zero() {
        let p = ThresholdParams { ell: 4.0, target: 0.0, n: 20, ..Default::default() };
        let r = threshold_bisect(&dirac(), CrossingEvent::Occupied, &p).unwrap();
        assert_eq!(r.lambda_hat, 0.0);
    }

    #[test]
    fn bisection_is_deterministic_and_brackets() {
        let p = ThresholdParams { ell: 4.0, n: 50, tol: 1e-2, seed: 3, ..Default::default() };
        let a = dual_threshold(&dirac(), &p).unwrap();
        let b = dual_threshold(&dirac(), &p).unwrap();
        assert_eq!(a, b);
        assert!(a.occupied.lambda_hat > 0.0 && a.vacant.lambda_hat > 0.0);
        assert!(a.occupied.bracket.1 - a.occupied.bracket.0 <= 1e-2);
        // the vacant long crossing is the complement of the occupied one
        assert_eq!(a.gap, 0.0);
        assert!(a.vacant_short.lambda_hat > a.occupied.lambda_hat);
    }

    #[test]
    fn too_small_lambda_hi_is_reported() {
        let p = ThresholdParams { ell: 4.0, n: 20, lambda_hi: Some(0.01), ..Default::default() };
        assert!(matches!(threshold_bisect(&dirac(), CrossingEvent::Occupied, &p), Err(Error::Bracket(_))));
    }

    #[test]
    fn peierls_dirac_fixture() {
        let b = peierls_bound(&RadiusLaw::dirac(1.0).unwrap(), 0.3, 81.0, 1.0).unwrap();
        assert_eq!(b.large_pearls, 0.0);
        assert!((b.total - (-9f64).exp()).abs() < 1e-15);
        let z = peierls_bound(&RadiusLaw::pareto(3.0, 1.0).unwrap(), 0.0, 81.0, 1.0).unwrap();
        assert_eq!(z.large_pearls, 0.0);
    }

    #[test]
    fn ols_recovers_a_line() {
        let (a, b) = ols(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert_eq!(ols(&[(1.0, 1.0)]), None);
    }

    #[test]
    fn zero_rate_gof_is_degenerate() {
        let g = poisson_gof(&RadiusLaw::dirac(1.0).unwrap(), 0.0, 0.5, 2.0, 50, 0).unwrap();
        assert_eq!(g.method, GofMethod::Degenerate);
        assert_eq!(g.p_value, 1.0);
    }

    #[test]
    fn binomial_test_sanity() {
        assert!((binomial_two_sided(5, 10, 0.5).unwrap() - 1.0).abs() < 1e-9);
        assert!(binomial_two_sided(0, 100, 0.5).unwrap() < 1e-20);
    }

    #[test]
    fn default_lambda_hi_is_supercritical_for_dirac() {
        assert!(default_lambda_hi(&dirac()) > 1.0);
    }
}
