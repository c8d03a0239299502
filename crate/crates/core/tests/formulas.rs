mod common;

use std::f64::consts::PI;

use common::{near_rate_quad, moment_quad, p_of_r_quad, rel_err, tail_mass_quad};
use percolab::distributions::j0_for;
use percolab::{Quantity, RadiusLaw};
use proptest::prelude::*;

fn pareto(alpha: f64, zmin: f64) -> RadiusLaw {
    RadiusLaw::pareto(alpha, zmin).unwrap()
}

#[test]
fn hand_values_match_quadrature() {
    let p = pareto(3.0, 1.0);
    let d = RadiusLaw::dirac(1.0).unwrap();
    assert!(rel_err(tail_mass_quad(&p, 2.0), 0.125) < 1e-10);
    assert!(rel_err(moment_quad(&p, 2.0, 1), 0.375) < 1e-10);
    assert!(rel_err(p_of_r_quad(&d, 0.5), 1.25 * PI) < 1e-14);
    assert!(rel_err(p_of_r_quad(&p, 2.0), 2.0 * PI) < 1e-10);
    assert!(rel_err(p.p_of_r(2.0).finite().unwrap(), 2.0 * PI) < 1e-14);
    assert!(rel_err(near_rate_quad(&d, 1.0, 0.5, 2.0), 8.0 * PI) < 1e-14);
    let nu = near_rate_quad(&p, 0.1, 2.0, 1.0);
    assert!(rel_err(nu, 0.0875 * PI) < 1e-10);
    assert!(rel_err(p.near_rate(0.1, 2.0, 1.0).finite().unwrap(), nu) < 1e-9);
    assert!(rel_err(p.f_bound(0.1, 2.0, 1.0).finite().unwrap(), nu * nu) < 1e-9);
    assert!((d.f_bound(0.01, 0.5, 2.0).finite().unwrap() - 0.06317).abs() < 1e-5);
}

#[test]
fn tail_sum_bound_matches_hand_value_and_series() {
    let p = pareto(3.0, 1.0);
    let t = p.tail_sum_bound(81.0).unwrap();
    assert_eq!(t.j0, 2);
    assert!(rel_err(t.bound.finite().unwrap(), 33.0 * PI) < 1e-12);
    // series oracle: direct summation of p(3^j) against quadrature
    let direct: f64 = (2..60).map(|j| p_of_r_quad(&p, 3f64.powi(j))).sum();
    let sum = t.sum.finite().unwrap();
    assert!(sum >= direct * (1.0 - 1e-9));
    assert!(rel_err(sum, direct) < 1e-8);
    assert!(sum <= t.bound.finite().unwrap());
    let p4 = pareto(4.0, 1.0).tail_sum_bound(9.0).unwrap();
    assert!(p4.sum.is_finite() && p4.sum.finite() <= p4.bound.finite());
}

#[test]
fn divergent_moments_are_tagged() {
    let p = pareto(2.0, 1.0);
    assert_eq!(p.partial_moment(1.0, 2), Quantity::Divergent);
    let t = p.tail_sum_bound(81.0).unwrap();
    assert_eq!((t.sum, t.bound), (Quantity::Divergent, Quantity::Divergent));
    assert!(p.p_of_r(3.0).is_finite());
}

#[test]
fn j0_is_floor_log3_sqrt() {
    for (l, j) in [(1.0, 0), (8.99, 0), (9.0, 1), (81.0, 2), (728.0, 2), (729.0, 3), (6561.0, 4)] {
        assert_eq!(j0_for(l), j, "L = {l}");
    }
}

fn any_law() -> impl Strategy<Value = RadiusLaw> {
    prop_oneof![
        (0.1f64..5.0).prop_map(|z| RadiusLaw::dirac(z).unwrap()),
        (0.05f64..3.0, 0.01f64..4.0).prop_map(|(a, w)| RadiusLaw::uniform(a, a + w).unwrap()),
        (2.05f64..6.0, 0.2f64..3.0).prop_map(|(al, z)| pareto(al, z)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_forms_agree_with_quadrature(law in any_law(), u in 0.0f64..1.5, s in 0.1f64..10.0) {
        let r = u * law.partial_moment(0.0, 1).finite().unwrap();
        prop_assert!(rel_err(law.tail_mass(r), tail_mass_quad(&law, r)) < 1e-8);
        for k in 0..=2 {
            if let Quantity::Finite(m) = law.partial_moment(r, k) {
                prop_assert!(rel_err(m, moment_quad(&law, r, k)) < 1e-8, "k={} {} vs {}", k, m, moment_quad(&law, r, k));
            }
        }
        let p = law.p_of_r(r).finite().unwrap();
        prop_assert!(rel_err(p, p_of_r_quad(&law, r)) < 1e-8);
        let nu = law.near_rate(0.7, r, s).finite().unwrap();
        prop_assert!(rel_err(nu, near_rate_quad(&law, 0.7, r, s)) < 1e-8);
    }

    #[test]
    fn p_of_r_is_its_definition(law in any_law(), r in 0.0f64..20.0) {
        let tail = law.tail_mass(r);
        let m1 = law.partial_moment(r, 1).finite().unwrap();
        prop_assert_eq!(law.p_of_r(r).finite().unwrap(), PI * r * r * tail + 2.0 * PI * r * m1);
    }

    #[test]
    fn tails_are_nonincreasing(law in any_law(), r in 0.0f64..10.0, dr in 0.0f64..10.0) {
        prop_assert!(law.tail_mass(r + dr) <= law.tail_mass(r));
        for k in 0..=2 {
            if let (Quantity::Finite(a), Quantity::Finite(b)) =
                (law.partial_moment(r, k), law.partial_moment(r + dr, k)) {
                prop_assert!(b <= a);
            }
        }
    }

    #[test]
    fn tail_sum_never_exceeds_bound(alpha in 2.05f64..6.0, zmin in 0.2f64..5.0, l in 1.0f64..1e5) {
        let t = pareto(alpha, zmin).tail_sum_bound(l).unwrap();
        prop_assert!(t.sum.finite().unwrap() <= t.bound.finite().unwrap());
    }
}
