//! Finite-window realizations of the marked Poisson process.
//!
//! Two boundary treatments are available:
//!
//! - [`Boundary::Padded`] / [`Boundary::ExplicitPad`]: centers are uniform in
//!   the window grown by a pad `R`, and the expected number of discs that hit
//!   the window from outside the padded region is reported as `missed_bound`.
//! - [`Boundary::Hitting`]: only discs that meet the window are generated, by
//!   sampling a size-biased superset over the bounding boxes of `W ⊕ B(0, z)`
//!   and rejecting non-hitting discs. Nothing is missed, and the cost scales
//!   with the number of relevant discs instead of the padded area, which is
//!   what makes heavy-tailed laws tractable.
//!
//! Every disc carries a stable id. Thinning keys a uniform on `(seed, id)`,
//! so thinned configurations are nested in λ and commute with truncation.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::connectivity::SpatialHash;
use crate::distributions::{Law, Quantity, RadiusLaw};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Disc, Point, Window};
use crate::stats::Estimate;

/// Default ε: expected number of missed discs per padded configuration.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Boundary {
    Padded { eps: f64 },
    ExplicitPad { pad: f64 },
    Hitting,
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary::Padded { eps: DEFAULT_EPSILON }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub discs: Vec<Disc>,
    /// Stable per-disc ids, parallel to `discs`.
    pub ids: Vec<u32>,
    pub window: Window,
    pub lambda: f64,
    /// Intensity of the original sample; thinning retention is relative to it.
    pub base_lambda: f64,
    pub law: Law,
    pub seed: u64,
    pub pad: f64,
    pub missed_bound: Quantity,
    pub boundary: Boundary,
}

impl Configuration {
    /// Wraps a hand-built disc list, e.g. a test fixture. The window is
    /// treated as fully observed.
    pub fn from_discs(discs: Vec<Disc>, window: Window) -> Self {
        let pad = discs.iter().map(|d| d.radius).fold(0.0, f64::max);
        Configuration {
            ids: (0..discs.len() as u32).collect(),
            discs,
            window,
            lambda: 0.0,
            base_lambda: 0.0,
            law: Law::Planar(RadiusLaw::Dirac { z: 1.0 }),
            seed: 0,
            pad,
            missed_bound: Quantity::Finite(0.0),
            boundary: Boundary::Hitting,
        }
    }

    pub fn len(&self) -> usize {
        self.discs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discs.is_empty()
    }

    /// Uniform in [0, 1) attached to a disc id; a disc survives thinning to
    /// λ' iff this is below λ'/λ₀.
    pub fn retention_key(&self, i: usize) -> f64 {
        retention_key(self.seed, self.ids[i])
    }

    /// Stable 64-bit digest of the disc list, for determinism checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for (d, &id) in self.discs.iter().zip(&self.ids) {
            for v in [d.cx.to_bits(), d.cy.to_bits(), d.radius.to_bits(), id as u64] {
                h = splitmix64(h ^ v);
            }
        }
        h
    }

    pub fn scaled(&self, s: f64) -> Configuration {
        let mut c = self.clone();
        c.discs = self.discs.iter().map(|d| d.scaled(s)).collect();
        c.window = self.window.scaled(s);
        c.pad *= s;
        c
    }

    pub fn rotated90(&self) -> Configuration {
        let mut c = self.clone();
        c.discs = self.discs.iter().map(Disc::rotated90).collect();
        c.window = self.window.rotated90();
        c
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under a base seed. Independent of scheduling.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn retention_key(seed: u64, id: u32) -> f64 {
    let bits = splitmix64(splitmix64(seed ^ 0xa076_1d64_78bd_642f) ^ id as u64);
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bound on the expected number of discs with radius ≥ `pad` that meet a
/// `w × h` window: λ ∫_R^∞ (w+2z)(h+2z) μ(dz) for planar laws.
pub fn missed_discs(law: &Law, lambda: f64, window: &Window, pad: f64) -> Quantity {
    // a disc centered outside the padded window needs radius strictly above pad
    if lambda == 0.0 || law.max_radius().is_some_and(|m| m <= pad) {
        return Quantity::Finite(0.0);
    }
    let (w, h) = (window.width(), window.height());
    match law {
        Law::Planar(mu) => {
            let tail = mu.tail_mass(pad);
            let m1 = mu.partial_moment(pad, 1);
            let m2 = mu.partial_moment(pad, 2);
            match (m1, m2) {
                (Quantity::Finite(m1), Quantity::Finite(m2)) => {
                    Quantity::Finite(lambda * (w * h * tail + 2.0 * (w + h) * m1 + 4.0 * m2))
                }
                _ => Quantity::Divergent,
            }
        }
        // planar radius never exceeds the ball radius; intersecting balls are
        // weighted by 2z
        Law::Sliced(s) => {
            let mu = &s.base;
            match (mu.partial_moment(pad, 1), mu.partial_moment(pad, 2), mu.partial_moment(pad, 3)) {
                (Quantity::Finite(m1), Quantity::Finite(m2), Quantity::Finite(m3)) => {
                    Quantity::Finite(2.0 * lambda * (w * h * m1 + 2.0 * (w + h) * m2 + 4.0 * m3))
                }
                _ => Quantity::Divergent,
            }
        }
    }
}

/// Smallest pad on the grid `{2^k z_ref}` whose missed-disc bound is ≤ ε.
/// Laws with bounded support return their maximal radius (bound 0).
pub fn padding_radius(law: &Law, lambda: f64, window: &Window, eps: f64) -> Result<f64> {
    if !(lambda >= 0.0 && eps > 0.0) {
        return Err(invalid(format!("padding needs lambda >= 0 and eps > 0, got {lambda}, {eps}")));
    }
    if let Some(r) = law.max_radius() {
        return Ok(r);
    }
    let z_ref = match law {
        Law::Planar(RadiusLaw::Pareto { zmin, .. }) => *zmin,
        Law::Sliced(s) => match s.base {
            RadiusLaw::Pareto { zmin, .. } => zmin,
            _ => unreachable!("bounded base laws return above"),
        },
        _ => unreachable!("bounded laws return above"),
    };
    if !missed_discs(law, lambda, window, z_ref).is_finite() {
        return Err(Error::Divergent(
            "no finite padding exists (moment hypothesis fails); pass an explicit pad".into(),
        ));
    }
    for k in 0..200 {
        let r = z_ref * 2f64.powi(k);
        if missed_discs(law, lambda, window, r).to_f64() <= eps {
            return Ok(r);
        }
    }
    Err(Error::Divergent(format!("no padding below 2^200·z_ref reaches eps={eps}")))
}

/// Samples a configuration of the Boolean model at intensity `lambda`.
pub fn sample_configuration(
    law: &Law,
    lambda: f64,
    window: Window,
    seed: u64,
    boundary: Boundary,
) -> Result<Configuration> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("intensity must be finite and >= 0, got {lambda}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (discs, pad, missed_bound) = match boundary {
        Boundary::Padded { eps } => {
            let pad = padding_radius(law, lambda, &window, eps)?;
            let discs = sample_padded(law, lambda, &window, pad, &mut rng)?;
            (discs, pad, missed_discs(law, lambda, &window, pad))
        }
        Boundary::ExplicitPad { pad } => {
            if !(pad >= 0.0 && pad.is_finite()) {
                return Err(invalid(format!("pad must be finite and >= 0, got {pad}")));
            }
            let discs = sample_padded(law, lambda, &window, pad, &mut rng)?;
            (discs, pad, missed_discs(law, lambda, &window, pad))
        }
        Boundary::Hitting => {
            let discs = sample_hitting(law, lambda, &window, &mut rng)?;
            let pad = discs.iter().map(|d| d.radius).fold(0.0, f64::max);
            (discs, pad, Quantity::Finite(0.0))
        }
    };
    Ok(Configuration {
        ids: (0..discs.len() as u32).collect(),
        discs,
        window,
        lambda,
        base_lambda: lambda,
        law: *law,
        seed,
        pad,
        missed_bound,
        boundary,
    })
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean == 0.0 {
        return Ok(0);
    }
    if !(mean < 4e9) {
        return Err(invalid(format!("expected disc count {mean:.3e} is too large")));
    }
    let n: f64 = Poisson::new(mean).map_err(|e| invalid(format!("poisson mean {mean}: {e}")))?.sample(rng);
    Ok(n as usize)
}

fn sample_padded<R: Rng>(law: &Law, lambda: f64, window: &Window, pad: f64, rng: &mut R) -> Result<Vec<Disc>> {
    let region = window.expand(pad);
    let planar_lambda = match law {
        Law::Planar(_) => lambda,
        Law::Sliced(s) => lambda * s.intensity_factor(),
    };
    let n = poisson_count(planar_lambda * region.area(), rng)?;
    let mut discs = Vec::with_capacity(n);
    for _ in 0..n {
        let cx = region.x0 + region.width() * rng.random::<f64>();
        let cy = region.y0 + region.height() * rng.random::<f64>();
        discs.push(Disc::new(cx, cy, law.sample_radius(rng)));
    }
    Ok(discs)
}

fn sample_hitting<R: Rng>(law: &Law, lambda: f64, window: &Window, rng: &mut R) -> Result<Vec<Disc>> {
    if lambda == 0.0 {
        return Ok(Vec::new());
    }
    let (w, h) = (window.width(), window.height());
    // superset intensity λ ∫ (w+2z)(h+2z) z^j μ(dz), split by the power of z
    let (base, shift, scale) = match law {
        Law::Planar(mu) => (mu, 0u32, lambda),
        Law::Sliced(s) => (&s.base, 1u32, 2.0 * lambda),
    };
    let moment = |k: u32| base.partial_moment(0.0, k + shift).require("hitting intensity");
    let weights = [w * h * moment(0)?, 2.0 * (w + h) * moment(1)?, 4.0 * moment(2)?];
    let total: f64 = weights.iter().sum();
    let n = poisson_count(scale * total, rng)?;

    let mut discs = Vec::new();
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let k = if u < weights[0] {
            0
        } else if u < weights[0] + weights[1] {
            1
        } else {
            2
        };
        let (z, rho) = match law {
            Law::Planar(mu) => {
                let z = mu.sample_biased(k, rng);
                (z, z)
            }
            Law::Sliced(s) => s.sample_pair_biased(k + 1, rng),
        };
        let cx = window.x0 - z + (w + 2.0 * z) * rng.random::<f64>();
        let cy = window.y0 - z + (h + 2.0 * z) * rng.random::<f64>();
        let disc = Disc::new(cx, cy, rho);
        if disc.meets_rect(window) {
            discs.push(disc);
        }
    }
    Ok(discs)
}

/// Independent retention with probability λ'/λ₀ keyed on disc ids.
pub fn thin(config: &Configuration, lambda: f64) -> Result<Configuration> {
    if !(lambda >= 0.0 && lambda <= config.lambda) {
        return Err(invalid(format!("thinning target {lambda} must lie in [0, {}]", config.lambda)));
    }
    let keep = if config.base_lambda > 0.0 { lambda / config.base_lambda } else { 0.0 };
    let mut out = config.clone();
    out.lambda = lambda;
    out.discs.clear();
    out.ids.clear();
    for (i, d) in config.discs.iter().enumerate() {
        if config.retention_key(i) < keep {
            out.discs.push(*d);
            out.ids.push(config.ids[i]);
        }
    }
    Ok(out)
}

/// Keeps exactly the discs with radius ≤ ℓ.
pub fn truncate(config: &Configuration, ell: f64) -> Result<Configuration> {
    if !(ell > 0.0) {
        return Err(invalid(format!("truncation length must be positive, got {ell}")));
    }
    let mut out = config.clone();
    out.discs.clear();
    out.ids.clear();
    for (d, &id) in config.discs.iter().zip(&config.ids) {
        if d.radius <= ell {
            out.discs.push(*d);
            out.ids.push(id);
        }
    }
    Ok(out)
}

/// Fraction of uniform probe points in `window` not covered by any disc.
/// The interval is conditional on the configuration.
pub fn vacant_fraction(config: &Configuration, window: &Window, n_probe: u64, seed: u64) -> Result<Estimate> {
    if n_probe == 0 {
        return Err(invalid("vacant_fraction needs at least one probe"));
    }
    let relevant: Vec<Disc> = config.discs.iter().filter(|d| d.meets_rect(window)).copied().collect();
    let index = SpatialHash::build(&relevant);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vacant = 0;
    for _ in 0..n_probe {
        let p = Point::new(
            window.x0 + window.width() * rng.random::<f64>(),
            window.y0 + window.height() * rng.random::<f64>(),
        );
        if !index.query_point(p).iter().any(|&i| relevant[i as usize].contains_point(p)) {
            vacant += 1;
        }
    }
    Ok(Estimate::from_counts(vacant, n_probe, seed))
}

/// JSON sidecar accompanying the `cx,cy,radius` CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationMeta {
    pub window: Window,
    pub lambda: f64,
    pub base_lambda: f64,
    pub law: Law,
    pub seed: u64,
    pub pad: f64,
    pub missed_bound: Quantity,
    pub boundary: Boundary,
    pub n_discs: usize,
    /// Present only when ids differ from `0..n` (after thinning/truncation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct DiscRow {
    cx: String,
    cy: String,
    radius: String,
}

/// Float text with 17 significant digits: parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Writes `<stem>.csv` and `<stem>.json`; returns both paths.
pub fn write_configuration(config: &Configuration, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for d in &config.discs {
        w.serialize(DiscRow { cx: fmt_f64(d.cx), cy: fmt_f64(d.cy), radius: fmt_f64(d.radius) })?;
    }
    if config.discs.is_empty() {
        w.write_record(["cx", "cy", "radius"])?;
    }
    w.flush().map_err(io_err(&csv_path))?;

    let identity = config.ids.iter().enumerate().all(|(i, &id)| id as usize == i);
    let meta = ConfigurationMeta {
        window: config.window,
        lambda: config.lambda,
        base_lambda: config.base_lambda,
        law: config.law,
        seed: config.seed,
        pad: config.pad,
        missed_bound: config.missed_bound,
        boundary: config.boundary,
        n_discs: config.discs.len(),
        ids: (!identity).then(|| config.ids.clone()),
    };
    let f = File::create(&json_path).map_err(io_err(&json_path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &meta)?;
    Ok((csv_path, json_path))
}

pub fn read_configuration(stem: &Path) -> Result<Configuration> {
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    let f = File::open(&json_path).map_err(io_err(&json_path))?;
    let meta: ConfigurationMeta = serde_json::from_reader(BufReader::new(f))?;

    let mut r = csv::Reader::from_path(&csv_path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["cx", "cy", "radius"] {
        return Err(invalid(format!("{}: expected header `cx,cy,radius`", csv_path.display())));
    }
    let mut discs = Vec::new();
    for row in r.deserialize::<DiscRow>() {
        let row = row?;
        let parse =
            |s: &str| s.trim().parse::<f64>().map_err(|_| invalid(format!("{}: bad number `{s}`", csv_path.display())));
        discs.push(Disc::new(parse(&row.cx)?, parse(&row.cy)?, parse(&row.radius)?));
    }
    if discs.len() != meta.n_discs {
        return Err(invalid(format!(
            "{} has {} discs, sidecar says {}",
            csv_path.display(),
            discs.len(),
            meta.n_discs
        )));
    }
    let ids = meta.ids.unwrap_or_else(|| (0..discs.len() as u32).collect());
    if ids.len() != discs.len() {
        return Err(invalid("id list length does not match disc count"));
    }
    Ok(Configuration {
        discs,
        ids,
        window: meta.window,
        lambda: meta.lambda,
        base_lambda: meta.base_lambda,
        law: meta.law,
        seed: meta.seed,
        pad: meta.pad,
        missed_bound: meta.missed_bound,
        boundary: meta.boundary,
    })
}
