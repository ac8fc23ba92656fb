mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use warpfit::template::{
    bspline_template_fit, count_stationary, hermite_deriv, hermite_eval, heights_reconstruct,
    BSplineOptions, HeightVector, Sign, Template, TemplateSpec, UnconstrainedHeights,
};
use warpfit::Error;

fn random_heights<R: Rng>(r: &mut R, m: usize) -> HeightVector {
    let sign = if r.random::<bool>() { Sign::Plus } else { Sign::Minus };
    let u = UnconstrainedHeights {
        lambda0: 3.0 * normal(r),
        l: (0..=m).map(|_| normal(r)).collect(),
        sign,
    };
    heights_reconstruct(&u).unwrap()
}

fn alternates(l: &[f64], sign: Sign) -> bool {
    l.windows(2).enumerate().all(|(k, w)| {
        let up = w[1] > w[0];
        let expect_up = (k % 2 == 0) == (sign == Sign::Plus);
        up == expect_up && w[1] != w[0]
    })
}

#[test]
fn reconstruct_examples() {
    let u = UnconstrainedHeights { lambda0: 0.0, l: vec![0.0, 0.0], sign: Sign::Plus };
    assert_eq!(heights_reconstruct(&u).unwrap().values(), &[0.0, 1.0, 0.0]);
    let u = UnconstrainedHeights {
        lambda0: 2.0,
        l: vec![3f64.ln(), 1f64.ln(), 2f64.ln()],
        sign: Sign::Minus,
    };
    let v = heights_reconstruct(&u).unwrap();
    for (a, b) in v.values().iter().zip([2.0, -1.0, 0.0, -2.0]) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn reconstruct_always_alternates() {
    let mut r = rng(20);
    for _ in 0..10_000 {
        let m = r.random_range(0..=6);
        let h = random_heights(&mut r, m);
        assert!(alternates(h.values(), h.sign()));
        assert!(HeightVector::new(h.values().to_vec(), h.sign()).is_ok());
    }
}

#[test]
fn forward_then_reconstruct_is_identity() {
    let mut r = rng(21);
    for _ in 0..1000 {
        let m = r.random_range(0..=6);
        let h = random_heights(&mut r, m);
        let back = heights_reconstruct(&h.to_unconstrained()).unwrap();
        assert!(max_rel_err(back.values(), h.values(), 1.0) <= 1e-12);
        assert_eq!(back.sign(), h.sign());
    }
}

#[test]
fn hermite_interpolates_and_averages_at_midpoints() {
    let mut r = rng(22);
    for _ in 0..200 {
        let m = r.random_range(1..=5);
        let spec = TemplateSpec::hermite(m);
        let h = random_heights(&mut r, m);
        let (b, l) = (spec.nodes(), h.values());
        for k in 0..b.len() {
            assert_eq!(hermite_eval(&spec, &h, b[k]).unwrap(), l[k]);
        }
        for k in 0..b.len() - 1 {
            let mid = 0.5 * (b[k] + b[k + 1]);
            assert!((hermite_eval(&spec, &h, mid).unwrap() - 0.5 * (l[k] + l[k + 1])).abs() < 1e-12);
        }
        for _ in 0..20 {
            let x: f64 = r.random();
            let v = hermite_eval(&spec, &h, x).unwrap();
            assert!((v - hermite_direct(b, l, x)).abs() < 1e-12);
        }
    }
}

#[test]
fn hermite_one_peak_example() {
    let spec = TemplateSpec::new(vec![0.0, 0.5, 1.0], Default::default()).unwrap();
    let h = HeightVector::new(vec![0.0, 1.0, 0.0], Sign::Plus).unwrap();
    assert!((hermite_eval(&spec, &h, 0.25).unwrap() - 0.5).abs() < 1e-15);
    let d = hermite_deriv(&spec, &h, 0.25).unwrap();
    assert!((d - 3.0).abs() < 1e-12);
    let fd = central_diff(|x| hermite_eval(&spec, &h, x).unwrap(), 0.25, 1e-6);
    assert!((d - fd).abs() < 1e-8);
    assert_eq!(hermite_deriv(&spec, &h, 0.5).unwrap(), 0.0);
}

#[test]
fn hermite_segments_are_monotone() {
    let mut r = rng(23);
    for _ in 0..100 {
        let m = r.random_range(1..=5);
        let spec = TemplateSpec::hermite(m);
        let h = random_heights(&mut r, m);
        let (b, l) = (spec.nodes(), h.values());
        for k in 0..b.len() - 1 {
            let rising = l[k + 1] > l[k];
            for i in 1..100 {
                let x = b[k] + (b[k + 1] - b[k]) * i as f64 / 100.0;
                let d = hermite_deriv(&spec, &h, x).unwrap();
                assert!(if rising { d > 0.0 } else { d < 0.0 });
            }
        }
    }
}

#[test]
fn hermite_is_continuous_at_nodes() {
    let mut r = rng(24);
    for _ in 0..100 {
        let m = r.random_range(1..=5);
        let spec = TemplateSpec::hermite(m);
        let h = random_heights(&mut r, m);
        for (k, b) in spec.nodes().iter().enumerate().skip(1).take(m) {
            let left = hermite_eval(&spec, &h, b - 1e-13).unwrap();
            let right = hermite_eval(&spec, &h, b + 1e-13).unwrap();
            assert!((left - h.values()[k]).abs() < 1e-9 && (right - h.values()[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn prop1_contract_on_random_templates() {
    let mut r = rng(25);
    for _ in 0..1000 {
        let m = r.random_range(1..=5);
        let spec = TemplateSpec::hermite(m);
        let h = random_heights(&mut r, m);
        for b in spec.interior_nodes() {
            assert_eq!(hermite_deriv(&spec, &h, *b).unwrap(), 0.0);
        }
        let changes = derivative_sign_changes(|x| hermite_eval(&spec, &h, x).unwrap(), 2001);
        assert_eq!(changes, m);
        assert_eq!(count_stationary(|x| hermite_eval(&spec, &h, x).unwrap(), 2001), m);
    }
}

#[test]
fn count_stationary_examples() {
    assert_eq!(count_stationary(|x| (2.0 * std::f64::consts::PI * x).sin(), 1001), 2);
    assert_eq!(count_stationary(|x| x * x, 101), 0);
    assert_eq!(count_stationary(|_| 1.0, 101), 0);
}

#[test]
fn bspline_constraints_and_shape() {
    let mut r = rng(26);
    for m in 1..=3 {
        let spec = TemplateSpec::bspline(m, BSplineOptions::default()).unwrap();
        for _ in 0..3 {
            let h = random_heights(&mut r, m);
            let t = Template::new(&spec, h.clone()).unwrap();
            for (k, b) in spec.nodes().iter().enumerate() {
                assert!((t.value(*b) - h.values()[k]).abs() <= 1e-8);
            }
            for b in spec.interior_nodes() {
                assert!(t.deriv(*b).abs() <= 1e-8);
            }
            assert_eq!(count_stationary(|x| t.value(x), 2001), m);
            assert!(Template::new_checked(&spec, h, 2001).is_ok());
        }
    }
}

#[test]
fn bspline_coefficient_count() {
    let opts = BSplineOptions::with_knot_count(40);
    let spec = TemplateSpec::bspline(2, opts).unwrap();
    let h = HeightVector::new(vec![0.0, 2.0, -1.0, 0.5], Sign::Plus).unwrap();
    assert_eq!(bspline_template_fit(&spec, &h).unwrap().len(), 40 + 3 + 1);
}

#[test]
fn bspline_monotone_template_is_nondecreasing() {
    let spec = TemplateSpec::bspline(0, BSplineOptions::default()).unwrap();
    let h = HeightVector::new(vec![0.0, 1.0], Sign::Plus).unwrap();
    let t = Template::new(&spec, h).unwrap();
    let mut prev = t.value(0.0);
    for i in 1..=1000 {
        let v = t.value(i as f64 / 1000.0);
        assert!(v >= prev - 1e-12);
        prev = v;
    }
}

#[test]
fn bspline_ill_posed_configuration_is_reported() {
    // five basis functions cannot meet six constraints
    let opts = BSplineOptions { knots: vec![0.5], fill: vec![], penalty: 0.0, ..Default::default() };
    let spec = TemplateSpec::bspline(2, opts).unwrap();
    let h = HeightVector::new(vec![0.0, 2.0, -1.0, 0.5], Sign::Plus).unwrap();
    assert!(matches!(bspline_template_fit(&spec, &h), Err(Error::IllPosed(_))));
}

#[test]
fn invalid_inputs() {
    assert!(HeightVector::new(vec![0.0, 1.0, 1.0], Sign::Plus).is_err());
    assert!(HeightVector::new(vec![0.0, 1.0, 0.0], Sign::Minus).is_err());
    assert!(TemplateSpec::new(vec![0.0, 0.6, 0.4, 1.0], Default::default()).is_err());
    assert!(TemplateSpec::new(vec![0.1, 0.5, 1.0], Default::default()).is_err());
    let spec = TemplateSpec::hermite(1);
    let h = HeightVector::new(vec![0.0, 1.0, 0.0], Sign::Plus).unwrap();
    assert!(matches!(hermite_eval(&spec, &h, 1.5), Err(Error::Domain { .. })));
    let wrong = HeightVector::new(vec![0.0, 1.0], Sign::Plus).unwrap();
    assert!(hermite_eval(&spec, &wrong, 0.5).is_err());
}

proptest! {
    #[test]
    fn reconstruction_alternates(
        lambda0 in -100.0f64..100.0,
        l in prop::collection::vec(-5.0f64..5.0, 1..8),
        plus in any::<bool>(),
    ) {
        let sign = if plus { Sign::Plus } else { Sign::Minus };
        let h = heights_reconstruct(&UnconstrainedHeights { lambda0, l, sign }).unwrap();
        prop_assert!(alternates(h.values(), sign));
    }
}
