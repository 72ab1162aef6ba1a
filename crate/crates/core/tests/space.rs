use proptest::prelude::*;
use timeblocks::space::expectation;
use timeblocks::{Cost, Distribution, Error};

fn dist(max: usize) -> impl Strategy<Value = Distribution> {
    dist_sized(1..=max)
}

fn dist_sized(len: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(0u32..5, len).prop_map(|mut w| {
        if w.iter().all(|&x| x == 0) {
            w[0] = 1;
        }
        let s: u32 = w.iter().sum();
        Distribution::new(w.iter().map(|&x| x as f64 / s as f64).collect()).unwrap()
    })
}

fn cost() -> impl Strategy<Value = Cost> {
    prop_oneof![9 => (0.0f64..100.0).prop_map(Cost::of), 1 => Just(Cost::INFINITY)]
}

proptest! {
    #[test]
    fn expectation_is_monotone(
        d in dist(5),
        base in prop::collection::vec(cost(), 5),
        bump in prop::collection::vec(cost(), 5),
    ) {
        let v = &base[..d.len()];
        let w: Vec<Cost> = v.iter().zip(&bump).map(|(&a, &b)| a + b).collect();
        prop_assert!(expectation(&d, v).unwrap() <= expectation(&d, &w).unwrap());
    }

    #[test]
    fn expectation_of_a_constant(d in dist(6), c in cost()) {
        let e = expectation(&d, &vec![c; d.len()]).unwrap();
        prop_assert!(e.distance(c) <= 1e-12, "{e:?} vs {c:?}");
    }

    #[test]
    fn infinity_off_the_support_is_ignored(d in dist(4), v in prop::collection::vec(0.0f64..10.0, 4)) {
        let mut values: Vec<Cost> = v[..d.len()].iter().map(|&x| Cost::of(x)).collect();
        let finite: f64 = d.probs().iter().zip(&v).map(|(p, x)| p * x).sum();
        let mut probs = d.probs().to_vec();
        probs.push(0.0);
        values.push(Cost::INFINITY);
        let e = expectation(&Distribution::new(probs).unwrap(), &values).unwrap();
        prop_assert!((e.get() - finite).abs() <= 1e-12);
    }

    #[test]
    fn total_variation_is_a_metric(
        (a, b, c) in (1usize..=4).prop_flat_map(|n| (dist_sized(n), dist_sized(n), dist_sized(n)))
    ) {
        prop_assert!(a.total_variation(&a) == 0.0);
        prop_assert!((a.total_variation(&b) - b.total_variation(&a)).abs() <= 1e-15);
        prop_assert!(a.total_variation(&c) <= a.total_variation(&b) + b.total_variation(&c) + 1e-15);
    }
}

#[test]
fn mass_on_an_infinite_value_gives_infinity() {
    let d = Distribution::new(vec![0.5, 0.5]).unwrap();
    assert!(expectation(&d, &[Cost::of(1.0), Cost::INFINITY]).unwrap().is_infinite());
}

#[test]
fn construction_rejects_bad_inputs() {
    assert!(matches!(
        Distribution::new(vec![0.5, 0.4]),
        Err(Error::Normalization { tolerance, .. }) if tolerance == 1e-12
    ));
    assert!(Distribution::new(vec![1.5, -0.5]).is_err());
    assert!(Cost::new(f64::NAN).is_err());
    assert!(Cost::new(-1.0).is_err());
}
