//! Radius laws and the closed-form quantities built from them.
//!
//! Every integral here is a tail integral `∫_r^∞ z^k μ(dz)` of one of three
//! parametric families. Heavy-tailed laws can make these diverge; divergence
//! is reported as [`Quantity::Divergent`] rather than as an error so the
//! regime where the second moment is infinite stays explorable.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// A real number that may be `+∞` because the defining integral diverges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    Finite(f64),
    Divergent,
}

impl Quantity {
    pub fn finite(self) -> Option<f64> {
        match self {
            Quantity::Finite(v) => Some(v),
            Quantity::Divergent => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Quantity::Finite(_))
    }

    /// `+∞` for divergent values.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Quantity {
        match self {
            Quantity::Finite(v) => Quantity::Finite(f(v)),
            Quantity::Divergent => Quantity::Divergent,
        }
    }

    /// Unwraps or fails with [`Error::Divergent`] naming `what`.
    pub fn require(self, what: &str) -> Result<f64> {
        self.finite().ok_or_else(|| Error::Divergent(format!("{what} diverges for this radius law")))
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Finite(v) => write!(f, "{v}"),
            Quantity::Divergent => f.write_str("divergent"),
        }
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Quantity::Finite(v) => s.serialize_f64(*v),
            Quantity::Divergent => s.serialize_str("divergent"),
        }
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Quantity::Finite(v)),
            Raw::Tag(t) if t == "divergent" => Ok(Quantity::Divergent),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unexpected quantity `{t}`"))),
        }
    }
}

/// Radius distribution μ on (0, ∞).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusLaw {
    Dirac {
        z: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// Density `α z_min^α z^{-α-1}` on `[z_min, ∞)`.
    Pareto {
        alpha: f64,
        zmin: f64,
    },
}

impl RadiusLaw {
    pub fn dirac(z: f64) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(invalid(format!("dirac radius must be positive, got {z}")));
        }
        Ok(RadiusLaw::Dirac { z })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(invalid(format!("uniform law needs 0 < a <= b, got a={a}, b={b}")));
        }
        Ok(RadiusLaw::Uniform { a, b })
    }

    pub fn pareto(alpha: f64, zmin: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && zmin > 0.0 && zmin.is_finite()) {
            return Err(invalid(format!("pareto law needs alpha > 0 and zmin > 0, got alpha={alpha}, zmin={zmin}")));
        }
        Ok(RadiusLaw::Pareto { alpha, zmin })
    }

    /// μ([r, ∞)).
    pub fn tail_mass(&self, r: f64) -> f64 {
        match *self {
            RadiusLaw::Dirac { z } => indicator(z >= r),
            RadiusLaw::Uniform { a, b } if a == b => indicator(a >= r),
            RadiusLaw::Uniform { a, b } => {
                if r <= a {
                    1.0
                } else if r >= b {
                    0.0
                } else {
                    (b - r) / (b - a)
                }
            }
            RadiusLaw::Pareto { alpha, zmin } => {
                if r <= zmin {
                    1.0
                } else {
                    (zmin / r).powf(alpha)
                }
            }
        }
    }

    /// ∫_r^∞ z^k μ(dz).
    pub fn partial_moment(&self, r: f64, k: u32) -> Quantity {
        let kf = k as f64;
        match *self {
            RadiusLaw::Dirac { z } => Quantity::Finite(if z >= r { z.powi(k as i32) } else { 0.0 }),
            RadiusLaw::Uniform { a, b } if a == b => Quantity::Finite(if a >= r { a.powi(k as i32) } else { 0.0 }),
            RadiusLaw::Uniform { a, b } => {
                let lo = r.max(a);
                if lo >= b {
                    return Quantity::Finite(0.0);
                }
                let e = k as i32 + 1;
                Quantity::Finite((b.powi(e) - lo.powi(e)) / ((kf + 1.0) * (b - a)))
            }
            RadiusLaw::Pareto { alpha, zmin } => {
                if alpha <= kf {
                    return Quantity::Divergent;
                }
                let lo = r.max(zmin);
                // α z_min^α lo^{k-α} / (α - k), written to avoid overflow of z_min^α
                Quantity::Finite(alpha * lo.powi(k as i32) * (zmin / lo).powf(alpha) / (alpha - kf))
            }
        }
    }

    /// Whether ∫ z^d μ(dz) < ∞.
    pub fn moment_check(&self, d: u32) -> bool {
        self.partial_moment(0.0, d).is_finite()
    }

    /// p(r) = π r² μ([r,∞)) + 2π r ∫_r^∞ z μ(dz).
    pub fn p_of_r(&self, r: f64) -> Quantity {
        let tail = self.tail_mass(r);
        self.partial_moment(r, 1).map(|m1| PI * r * r * tail + 2.0 * PI * r * m1)
    }

    /// Mean number of discs with radius ≥ r whose distance to the origin lies
    /// in (0, s], under intensity `lambda`.
    pub fn near_rate(&self, lambda: f64, r: f64, s: f64) -> Quantity {
        if lambda == 0.0 {
            return Quantity::Finite(0.0);
        }
        let tail = self.tail_mass(r);
        self.partial_moment(r, 1).map(|m1| lambda * (PI * s * s * tail + 2.0 * PI * s * m1))
    }

    /// Square of [`near_rate`](Self::near_rate): an upper bound on the
    /// probability that at least two such discs exist. May exceed 1.
    pub fn f_bound(&self, lambda: f64, r: f64, s: f64) -> Quantity {
        self.near_rate(lambda, r, s).map(|nu| nu * nu)
    }

    /// Σ_{j ≥ j₀} p(3^j) with j₀ = ⌊log₃ √L⌋, together with the analytic
    /// bound 99π ∫_{3^{j₀}}^∞ z² μ(dz).
    ///
    /// The series is summed until a term drops below 10⁻¹⁵ of the running
    /// sum (or 3^j leaves the double range); the remainder from index J on is
    /// replaced by (33/8)π ∫_{3^J}^∞ z² μ(dz), so the reported `sum` never
    /// underestimates the true series. The constant comes from the same
    /// interchange of summation that gives 99π, with the geometric sums
    /// Σ_{3^j ≤ z} 9^j ≤ 9z²/8 and Σ_{3^j ≤ z} 3^j ≤ 3z/2 kept sharp.
    pub fn tail_sum_bound(&self, big_l: f64) -> Result<TailSum> {
        if !(big_l >= 1.0) {
            return Err(invalid(format!("tail sum needs L >= 1, got {big_l}")));
        }
        let j0 = j0_for(big_l);
        let z0 = 3f64.powi(j0 as i32);
        let bound = self.partial_moment(z0, 2).map(|m2| 99.0 * PI * m2);
        if !bound.is_finite() {
            return Ok(TailSum {
                sum: Quantity::Divergent,
                series: Quantity::Divergent,
                remainder: Quantity::Divergent,
                bound,
                j0,
                terms: 0,
            });
        }

        let mut series = 0.0;
        let mut j = j0;
        loop {
            // m2 finite implies m1 finite
            let r = 3f64.powi(j as i32);
            let term = self.p_of_r(r).to_f64();
            if !(r < 1e150) || term < 1e-15 * (series + 1e-30) || j - j0 >= MAX_TAIL_TERMS {
                break;
            }
            series += term;
            j += 1;
        }
        let remainder = 33.0 / 8.0 * PI * self.partial_moment(3f64.powi(j as i32), 2).to_f64();
        Ok(TailSum {
            sum: Quantity::Finite(series + remainder),
            series: Quantity::Finite(series),
            remainder: Quantity::Finite(remainder),
            bound,
            j0,
            terms: j - j0,
        })
    }

    /// Supremum of the support, if bounded.
    pub fn max_radius(&self) -> Option<f64> {
        match *self {
            RadiusLaw::Dirac { z } => Some(z),
            RadiusLaw::Uniform { b, .. } => Some(b),
            RadiusLaw::Pareto { .. } => None,
        }
    }

    /// Draw from μ.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_biased(0, rng)
    }

    /// Draw from the size-biased law z^k μ(dz) / ∫ z^k dμ.
    ///
    /// Panics if that law is not normalisable (Pareto with α ≤ k); callers
    /// check the moment first.
    pub fn sample_biased<R: Rng + ?Sized>(&self, k: u32, rng: &mut R) -> f64 {
        match *self {
            RadiusLaw::Dirac { z } => z,
            RadiusLaw::Uniform { a, b } if a == b => a,
            RadiusLaw::Uniform { a, b } => {
                let u: f64 = rng.random();
                if k == 0 {
                    return a + (b - a) * u;
                }
                let e = k as i32 + 1;
                let (lo, hi) = (a.powi(e), b.powi(e));
                (lo + u * (hi - lo)).powf(1.0 / e as f64).clamp(a, b)
            }
            RadiusLaw::Pareto { alpha, zmin } => {
                let shape = alpha - k as f64;
                assert!(shape > 0.0, "size-biased pareto law of order {k} is not normalisable");
                // 1 - u lies in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                zmin * u.powf(-1.0 / shape)
            }
        }
    }
}

/// Cap on the number of series terms in [`RadiusLaw::tail_sum_bound`].
const MAX_TAIL_TERMS: u32 = 4000;

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// ⌊log₃ √L⌋ computed in exact integer steps: the largest j with 9^j ≤ L.
pub fn j0_for(big_l: f64) -> u32 {
    let mut j = 0u32;
    while 9f64.powi(j as i32 + 1) <= big_l {
        j += 1;
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailSum {
    /// Certified upper estimate of Σ_{j ≥ j₀} p(3^j): `series + remainder`.
    pub sum: Quantity,
    pub series: Quantity,
    pub remainder: Quantity,
    /// 99π ∫_{z₀}^∞ z² μ(dz), z₀ = 3^{j₀}.
    pub bound: Quantity,
    pub j0: u32,
    pub terms: u32,
}

/// Planar law induced by slicing a three-dimensional Boolean model with a
/// plane. A ball of radius z at height h ∈ [-z, z] leaves a disc of radius
/// √(z² − h²); intersecting balls are size-biased by z and occur with planar
/// intensity λ·E[2z].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicedLaw {
    pub base: RadiusLaw,
}

impl SlicedLaw {
    pub fn new(base: RadiusLaw) -> Result<Self> {
        if !base.moment_check(1) {
            return Err(Error::Divergent("sliced law needs a finite first moment of the base law".into()));
        }
        Ok(SlicedLaw { base })
    }

    /// Planar intensity per unit of three-dimensional intensity, E[2z].
    pub fn intensity_factor(&self) -> f64 {
        2.0 * self.base.partial_moment(0.0, 1).to_f64()
    }

    /// Draws `(z, ρ)`: the ball radius and the planar disc radius.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        self.sample_pair_biased(1, rng)
    }

    /// Like [`sample_pair`](Self::sample_pair) with the ball radius drawn
    /// from z^k μ(dz) (k ≥ 1 already includes the slicing bias).
    pub(crate) fn sample_pair_biased<R: Rng + ?Sized>(&self, k: u32, rng: &mut R) -> (f64, f64) {
        let z = self.base.sample_biased(k, rng);
        loop {
            let h = z * (2.0 * rng.random::<f64>() - 1.0);
            let rho = ((z - h) * (z + h)).sqrt();
            if rho > 0.0 {
                return (z, rho);
            }
        }
    }
}

/// Any law the sampler accepts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Planar(RadiusLaw),
    Sliced(SlicedLaw),
}

impl Law {
    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Planar(law) => law.sample(rng),
            Law::Sliced(law) => law.sample_pair(rng).1,
        }
    }

    /// Planar law, for operations that need closed forms.
    pub fn planar(&self) -> Result<&RadiusLaw> {
        match self {
            Law::Planar(law) => Ok(law),
            Law::Sliced(_) => Err(invalid("closed-form quantities are not available for sliced laws")),
        }
    }

    /// Upper bound on any sampled planar radius, if one exists.
    pub fn max_radius(&self) -> Option<f64> {
        match self {
            Law::Planar(law) => law.max_radius(),
            Law::Sliced(law) => law.base.max_radius(),
        }
    }
}

impl From<RadiusLaw> for Law {
    fn from(law: RadiusLaw) -> Self {
        Law::Planar(law)
    }
}

impl fmt::Display for RadiusLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadiusLaw::Dirac { z } => write!(f, "dirac:z={z}"),
            RadiusLaw::Uniform { a, b } => write!(f, "uniform:a={a},b={b}"),
            RadiusLaw::Pareto { alpha, zmin } => write!(f, "pareto:alpha={alpha},zmin={zmin}"),
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Planar(law) => law.fmt(f),
            Law::Sliced(law) => write!(f, "sliced:{}", law.base),
        }
    }
}

impl FromStr for RadiusLaw {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let lower = spec.trim().to_ascii_lowercase();
        let fail = |reason: String| Error::LawSpec { spec: spec.to_string(), reason };
        let (family, params) =
            lower.split_once(':').ok_or_else(|| fail("expected `<family>:<key>=<value>,...`".into()))?;
        let keys: &[&str] = match family {
            "dirac" => &["z"],
            "uniform" => &["a", "b"],
            "pareto" => &["alpha", "zmin"],
            other => return Err(fail(format!("unknown family `{other}`"))),
        };
        let mut values = vec![None; keys.len()];
        for item in params.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| fail(format!("expected key=value, got `{item}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let slot =
                keys.iter().position(|&key| key == k).ok_or_else(|| fail(format!("unknown key `{k}` for {family}")))?;
            if values[slot].is_some() {
                return Err(fail(format!("duplicate key `{k}`")));
            }
            let x: f64 = v.parse().map_err(|_| fail(format!("`{v}` is not a number")))?;
            values[slot] = Some(x);
        }
        let get = |i: usize| values[i].ok_or_else(|| fail(format!("missing key `{}`", keys[i])));
        let law = match family {
            "dirac" => RadiusLaw::dirac(get(0)?),
            "uniform" => RadiusLaw::uniform(get(0)?, get(1)?),
            _ => RadiusLaw::pareto(get(0)?, get(1)?),
        };
        law.map_err(|e| fail(e.to_string()))
    }
}

impl FromStr for Law {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let trimmed = spec.trim();
        if trimmed.len() >= 7 && trimmed[..7].eq_ignore_ascii_case("sliced:") {
            let base: RadiusLaw = trimmed[7..].parse().map_err(|e| match e {
                Error::LawSpec { reason, .. } => Error::LawSpec { spec: spec.to_string(), reason },
                other => other,
            })?;
            return SlicedLaw::new(base)
                .map(Law::Sliced)
                .map_err(|e| Error::LawSpec { spec: spec.to_string(), reason: e.to_string() });
        }
        trimmed.parse().map(Law::Planar)
    }
}

impl Serialize for Law {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Law {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
