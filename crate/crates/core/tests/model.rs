mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jesp_core::model::{flatten_mpomdp_capped, row_prob};
use jesp_core::{flatten_mpomdp, Belief, Error, JointSpace};

proptest! {
    #[test]
    fn joint_index_round_trip(sizes in prop::collection::vec(1usize..5, 1..4), pick in any::<u64>()) {
        let space = JointSpace::new(sizes.clone());
        let joint = (pick % space.len() as u64) as usize;
        let parts = space.decode(joint);
        prop_assert_eq!(space.encode(&parts), joint);
        for (i, &p) in parts.iter().enumerate() {
            prop_assert!(p < sizes[i]);
            prop_assert_eq!(space.component(joint, i), p);
        }
        // Agent 0 is the most significant digit.
        if sizes.len() > 1 && parts[0] + 1 < sizes[0] {
            let mut bumped = parts.clone();
            bumped[0] += 1;
            let stride: usize = sizes[1..].iter().product();
            prop_assert_eq!(space.encode(&bumped), joint + stride);
        }
    }

    #[test]
    fn flattening_preserves_dynamics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = common::random_dec_pomdp(&mut rng, 3, &[2, 3], &[2, 2], 0.9);
        let mp = flatten_mpomdp(&d).unwrap();
        prop_assert_eq!(mp.n_actions(), 6);
        prop_assert_eq!(mp.n_observations(), 4);
        for ja in 0..6 {
            for s in 0..3 {
                let t: f64 = mp.transition[ja][s].iter().map(|e| e.1).sum();
                let o: f64 = mp.observation[ja][s].iter().map(|e| e.1).sum();
                prop_assert!((t - 1.0).abs() < 1e-9 && (o - 1.0).abs() < 1e-9);
                prop_assert_eq!(&mp.transition[ja][s], &d.transition[ja][s]);
                for jo in 0..4 {
                    prop_assert_eq!(row_prob(&mp.observation[ja][s], jo), row_prob(&d.observation[ja][s], jo));
                }
                prop_assert_eq!(mp.reward[ja][s], d.reward[ja][s]);
            }
        }
    }

    #[test]
    fn posterior_mass_is_observation_probability(seed in any::<u64>(), a in 0usize..3, o in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_pomdp(&mut rng, 4, 3, 3, 0.9);
        let b = Belief::from_entries(common::random_row(&mut rng, 4, true)).unwrap();
        let mass: f64 = m.unnormalized_posterior(&b, a, o).iter().map(|e| e.1).sum();
        let p = m.observation_prob(&b, a, o).unwrap();
        prop_assert!((mass - p).abs() <= 1e-12);
        match m.belief_update(&b, a, o) {
            Ok(post) => {
                let total: f64 = post.entries().iter().map(|e| e.1).sum();
                prop_assert!(p > 0.0 && (total - 1.0).abs() < 1e-9);
            }
            Err(Error::ZeroProbabilityObservation { .. }) => prop_assert!(p <= 1e-12),
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
        let succ = m.successors(&b, a);
        let total: f64 = succ.iter().map(|s| s.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn flatten_cap_reports_overflow() {
    let d = common::load("dectiger.dpomdp");
    assert!(matches!(flatten_mpomdp_capped(&d, 10), Err(Error::Overflow { .. })));
}

#[test]
fn belief_mix_is_weighted_average() {
    let a = Belief::point(0);
    let b = Belief::uniform(2);
    let m = a.mix(1.0, &b, 3.0);
    assert!((m.prob(0) - 0.625).abs() < 1e-15);
    assert!((m.prob(1) - 0.375).abs() < 1e-15);
}
