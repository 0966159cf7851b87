use std::sync::OnceLock;

use hemi_core::bubbles::{epsilon, epsilon_dlambda, BubbleParam};
use hemi_core::census::{alternating_sums_closed, counting_a, counting_b};
use hemi_core::flow::{psi1, Flow, FlowParams, RegionTag};
use hemi_core::geometry::{geodesic_distance, SpherePoint};
use hemi_core::verify::{RegionFixtures, REGIONS};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixtures() -> &'static RegionFixtures {
    static FX: OnceLock<RegionFixtures> = OnceLock::new();
    FX.get_or_init(|| RegionFixtures::new().unwrap())
}

fn hemisphere_point(raw: Vec<f64>) -> SpherePoint {
    let mut v = DVector::from_vec(raw);
    v[5] = v[5].abs();
    SpherePoint::normalized(v).unwrap()
}

fn point_strategy() -> impl Strategy<Value = SpherePoint> {
    prop::collection::vec(-1.0f64..1.0, 6)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(hemisphere_point)
}

proptest! {
    #[test]
    fn psi1_is_a_monotone_gate(s in -1.0f64..4.0, t in -1.0f64..4.0) {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        prop_assert!(psi1(lo) <= psi1(hi));
        prop_assert!((0.0..=1.0).contains(&psi1(s)));
        if s <= 1.0 {
            prop_assert_eq!(psi1(s), 0.0);
        }
        if s >= 2.0 {
            prop_assert_eq!(psi1(s), 1.0);
        }
    }

    #[test]
    fn separated_bubbles_shrink_interaction(
        a in point_strategy(),
        b in point_strategy(),
        li in 1.0f64..1e4,
        lj in 1.0f64..1e4,
    ) {
        let bi = BubbleParam::new(a, li).unwrap();
        let bj = BubbleParam::new(b, lj).unwrap();
        let e = epsilon(&bi, &bj);
        let (di, dj) = epsilon_dlambda(&bi, &bj);
        prop_assert!(-di - dj >= -1e-15 * e);
        if li * geodesic_distance(&bi.a, &bj.a) >= 2.0 {
            prop_assert!(-di >= 0.1 * e, "-di = {} eps = {}", -di, e);
        }
    }

    #[test]
    fn counting_matches_closed_form(indices in prop::collection::vec(0i64..8, 0..14)) {
        let even = indices.iter().filter(|i| *i % 2 == 0).count();
        let odd = indices.len() - even;
        let (a1, a2, a3, a4) = counting_a(&indices);
        prop_assert_eq!(vec![a1, a2, a3, a4], alternating_sums_closed(even, odd, 4));
        if a1 == 1 {
            let k = odd as i64;
            prop_assert_eq!(even as i64, k + 1);
            prop_assert_eq!((a2, a3, a4), (-k, -k, k * (k - 1) / 2));
        }
        let (b1, b2) = counting_b(&indices);
        prop_assert_eq!((b1, b2), (a1, a2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_states_are_balanced_and_labelled(seed in any::<u64>(), which in 0usize..7) {
        let fx = fixtures();
        let tag = REGIONS[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = fx.sample(tag, &mut rng);
        let fixture = fx.fixture(tag);
        let model = &fixture.model;
        for i in 0..cfg.len() {
            prop_assert!(model.imbalance(&cfg, i).abs() < 1e-10);
        }
        let again = model.normalize_alphas(&cfg);
        for (x, y) in cfg.bubbles.iter().zip(&again.bubbles) {
            prop_assert!((x.alpha - y.alpha).abs() <= 1e-12 * x.alpha);
        }
        let flow = Flow::new(model, &fixture.landscape, FlowParams::default()).unwrap();
        let (v, label) = flow.pseudogradient(&cfg).unwrap();
        let total: f64 = label.weights.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(label.weights.values().all(|w| (0.0..=1.0).contains(w)));
        prop_assert_eq!(label.tag, tag);
        if tag != RegionTag::W {
            prop_assert!(v.lambda.iter().all(|l| *l <= 0.0));
        }
        prop_assert!(flow.energy_rate(&cfg, &v) <= 0.0);
    }
}
