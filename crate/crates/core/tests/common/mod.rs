#![allow(dead_code)]

use std::f64::consts::PI;

use percolab::RadiusLaw;

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    let floor = 1e-15 * (left.abs() + right.abs());
    if depth == 0 || !delta.is_finite() || delta.abs() <= (15.0 * eps).max(floor) {
        return left + right + delta / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) + adapt(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Adaptive Simpson on [a, b] to absolute tolerance `eps`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // split into panels first so narrow features are not skipped
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = simpson(x0, x1, f0, fm, f1);
            adapt(&f, x0, x1, f0, fm, f1, whole, eps / panels as f64, 24)
        })
        .sum()
}

/// ∫_{[r,∞)} g(z) μ(dz) by quadrature of the density, for `g` growing at
/// most like z^degree (Dirac laws are evaluated directly).
pub fn integrate_law(law: &RadiusLaw, r: f64, degree: u32, g: impl Fn(f64) -> f64) -> f64 {
    match *law {
        RadiusLaw::Dirac { z } => {
            if z >= r {
                g(z)
            } else {
                0.0
            }
        }
        RadiusLaw::Uniform { a, b } => {
            let lo = r.max(a);
            let scale = g(b).abs().max(g(lo).abs()).max(1e-300);
            integrate(|z| g(z) / (b - a), lo, b, 1e-13 * scale)
        }
        RadiusLaw::Pareto { alpha, zmin } => {
            // z = lo·e^u turns the power tail into an exponential one
            let lo = r.max(zmin);
            // g(z)·z^{-degree} stays bounded, the rest is taken in logs
            let d = degree as f64;
            let h = |u: f64| {
                let ln_z = lo.ln() + u;
                let z = ln_z.exp();
                g(z) / z.powf(d) * (alpha.ln() + alpha * zmin.ln() + (d - alpha) * ln_z).exp()
            };
            let scale = h(0.0).abs().max(1e-300);
            // the integrand decays like e^{-(α - degree) u}; past the cutoff
            // it is a pure exponential to double precision
            let upper = (40.0 / (alpha - d)).min(340.0);
            integrate(h, 0.0, upper, 1e-14 * scale) + h(upper) / (alpha - d)
        }
    }
}

pub fn tail_mass_quad(law: &RadiusLaw, r: f64) -> f64 {
    integrate_law(law, r, 0, |_| 1.0)
}

pub fn moment_quad(law: &RadiusLaw, r: f64, k: u32) -> f64 {
    integrate_law(law, r, k, |z| z.powi(k as i32))
}

/// ∫_{z≥r} (πr² + 2πrz) μ(dz), integrated as one piece.
pub fn p_of_r_quad(law: &RadiusLaw, r: f64) -> f64 {
    integrate_law(law, r, 1, |z| PI * r * r + 2.0 * PI * r * z)
}

/// λ ∫_{z≥r} π((z+s)² − z²) μ(dz): the mean count of centers in the
/// annuli at distance (0, s] from the origin's disc boundary.
pub fn near_rate_quad(law: &RadiusLaw, lambda: f64, r: f64, s: f64) -> f64 {
    lambda * integrate_law(law, r, 1, |z| PI * ((z + s).powi(2) - z * z))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
