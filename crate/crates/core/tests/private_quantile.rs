use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dpcp::dp_quantile::{
    dpq_distribution, dpq_release, dpq_utilities, BinGrid, DpqRequest, ScoreVector,
};

fn scores(v: Vec<f64>) -> ScoreVector {
    ScoreVector::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn distribution_is_a_probability_vector(
        s in prop::collection::vec(0.0f64..=1.0, 1..60),
        a0 in 0.01f64..0.99,
        eps in 0.01f64..20.0,
        bins in 1usize..50,
    ) {
        let grid = BinGrid::uniform(bins).unwrap();
        let p = dpq_utilities(&scores(s), a0, eps, &grid).unwrap().probabilities();
        prop_assert_eq!(p.len(), bins);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn replacing_one_score_moves_probabilities_by_at_most_e_eps(
        s in prop::collection::vec(0.0f64..=1.0, 1..40),
        idx in any::<prop::sample::Index>(),
        v in 0.0f64..=1.0,
        a0 in 0.02f64..0.98,
        eps in 0.05f64..3.0,
    ) {
        let grid = BinGrid::uniform(20).unwrap();
        let mut s2 = s.clone();
        s2[idx.index(s.len())] = v;
        let p = dpq_utilities(&scores(s), a0, eps, &grid).unwrap().probabilities();
        let q = dpq_utilities(&scores(s2), a0, eps, &grid).unwrap().probabilities();
        for (x, y) in p.iter().zip(&q) {
            prop_assert!(*x <= eps.exp() * y * (1.0 + 1e-12));
            prop_assert!(*y <= eps.exp() * x * (1.0 + 1e-12));
        }
    }

    #[test]
    fn order_of_scores_is_irrelevant(
        s in prop::collection::vec(0.0f64..=1.0, 1..40),
        eps in 0.1f64..5.0,
    ) {
        let grid = BinGrid::uniform(16).unwrap();
        let mut r = s.clone();
        r.reverse();
        let p = dpq_utilities(&scores(s), 0.2, eps, &grid).unwrap().probabilities();
        let q = dpq_utilities(&scores(r), 0.2, eps, &grid).unwrap().probabilities();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn expected_penalty_falls_as_epsilon_grows(
        s in prop::collection::vec(0.0f64..=1.0, 2..40),
        eps in 0.05f64..5.0,
        factor in 1.0f64..4.0,
    ) {
        let grid = BinGrid::uniform(16).unwrap();
        let s = scores(s);
        let mean_penalty = |e: f64| {
            let w = dpq_utilities(&s, 0.3, e, &grid).unwrap();
            w.probabilities().iter().zip(w.utilities()).map(|(p, u)| p * u).sum::<f64>()
        };
        prop_assert!(mean_penalty(eps * factor) <= mean_penalty(eps) + 1e-9);
    }
}

#[test]
fn release_frequencies_match_the_analytic_distribution() {
    let s = scores((0..50).map(|i| (i as f64 / 50.0).powi(2)).collect());
    let req = DpqRequest::new(0.3, 1.0, BinGrid::uniform(8).unwrap()).unwrap();
    let p = dpq_distribution(&s, &req).unwrap();
    let edges = req.grid.candidates().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 200_000;
    let mut counts = vec![0usize; p.len()];
    for _ in 0..draws {
        let q = dpq_release(&s, &req, &mut rng).unwrap();
        let j = edges.iter().position(|&e| e == q).expect("release is a candidate");
        counts[j] += 1;
    }
    for (c, pj) in counts.iter().zip(&p) {
        let freq = *c as f64 / draws as f64;
        let se = (pj * (1.0 - pj) / draws as f64).sqrt();
        assert!((freq - pj).abs() <= 5.0 * se + 1e-12, "freq {freq} vs p {pj}");
    }
}

#[test]
fn release_is_monotone_in_the_data_on_average() {
    // Shifting every score up cannot lower the mean release.
    let req = DpqRequest::new(0.2, 2.0, BinGrid::default()).unwrap();
    let low = scores((0..300).map(|i| 0.5 * i as f64 / 300.0).collect());
    let high = scores((0..300).map(|i| 0.3 + 0.5 * i as f64 / 300.0).collect());
    let mean = |s: &ScoreVector| {
        let p = dpq_distribution(s, &req).unwrap();
        p.iter().zip(req.grid.candidates()).map(|(p, e)| p * e).sum::<f64>()
    };
    assert!(mean(&high) > mean(&low) + 0.2);
}
