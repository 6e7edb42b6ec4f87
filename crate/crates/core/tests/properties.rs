use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rilo::expert::{bfs_distance, plan};
use rilo::gridworld::{Cell, EnvConfig, EpisodeState, MoveStyle, Outcome};
use rilo::imitation::{assemble_scores, build_pairs, normalize_batch, NormalizationMode, RewardStrategy, Slot, Source};
use rilo::numnet::{ops, Tensor};
use rilo::policy::compute_returns;
use rilo::selfexp::combine;

fn strategy() -> impl Strategy<Value = RewardStrategy> {
    prop_oneof![
        Just(RewardStrategy::Csd),
        Just(RewardStrategy::Ssd),
        (1usize..6).prop_map(|min_gap| RewardStrategy::Rtgd { min_gap }),
        Just(RewardStrategy::Atd),
    ]
}

fn style() -> impl Strategy<Value = MoveStyle> {
    prop::sample::select(MoveStyle::ALL.to_vec())
}

proptest! {
    #[test]
    fn pair_sets_cover_every_scored_step(len in 2usize..30, s in strategy(), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ps = build_pairs(len, s, Source::Learner, &mut rng).unwrap();
        let mut per_target = vec![0usize; len];
        for p in &ps.pairs {
            per_target[p.target] += 1;
            if let Slot::State(i) = p.first {
                prop_assert!(i < len);
            }
        }
        let want: Vec<usize> = match s {
            RewardStrategy::Atd => vec![len - 1; len],
            RewardStrategy::Ssd => vec![1; len],
            _ => (0..len).map(|t| usize::from(t > 0)).collect(),
        };
        prop_assert_eq!(per_target, want);
    }

    #[test]
    fn scores_stay_inside_the_clamp(len in 2usize..15, s in strategy(), seed: u64, probs_seed: u64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ps = build_pairs(len, s, Source::Learner, &mut rng).unwrap();
        let mut prng = ChaCha8Rng::seed_from_u64(probs_seed);
        let probs: Vec<f64> = (0..ps.pairs.len()).map(|_| prng.gen_range(0.0..=1.0)).collect();
        let mu = assemble_scores(s, len, &ps.pairs, &probs);
        prop_assert_eq!(mu.len(), len);
        prop_assert!(mu.iter().all(|&m| (1e-7..=1.0 - 1e-7).contains(&m)));
    }

    #[test]
    fn batch_mean_ignores_a_common_score_scale(
        scores in prop::collection::vec(prop::collection::vec(0.01f64..0.99, 1..10), 1..5),
        c in 0.1f64..1.0,
    ) {
        let scaled: Vec<Vec<f64>> = scores.iter().map(|e| e.iter().map(|m| m * c).collect()).collect();
        let a = normalize_batch(&scores, NormalizationMode::BatchMean);
        let b = normalize_batch(&scaled, NormalizationMode::BatchMean);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn returns_are_linear_in_rewards(
        r1 in prop::collection::vec(-2.0f64..2.0, 1..20),
        seed: u64,
        a in -3.0f64..3.0,
        gamma in 0.0f64..1.0,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r2: Vec<f64> = r1.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mixed: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + y).collect();
        let (g1, g2, g) = (compute_returns(&r1, gamma), compute_returns(&r2, gamma), compute_returns(&mixed, gamma));
        for i in 0..g.len() {
            prop_assert!((g[i] - (a * g1[i] + g2[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_entropy_is_bounded(logits in prop::collection::vec(-20.0f64..20.0, 2..17)) {
        let k = logits.len();
        let p = ops::softmax(&Tensor::row(logits));
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        let h = ops::entropy(p.data());
        prop_assert!(h >= -1e-12 && h <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn combine_is_linear_in_lambda(
        env in prop::collection::vec(-1.0f64..1.0, 1..10),
        lambda in 0.0f64..4.0,
    ) {
        let imt: Vec<f64> = env.iter().map(|v| 0.5 - v).collect();
        let out = combine(&env, &imt, lambda, 1).unwrap();
        for ((o, e), i) in out.iter().zip(&env).zip(&imt) {
            prop_assert!((o - (e + lambda * i)).abs() < 1e-12);
        }
    }

    #[test]
    fn plans_follow_the_distance_field(seed: u64, s in style(), side in prop::sample::select(vec![7usize, 9, 11])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = EnvConfig::full(side);
        let (map, start) = env.generate(&mut rng).unwrap();
        let dist = bfs_distance(&map, s, map.goal());
        let at = |c: Cell| dist[c.row * side + c.col];
        match plan(&map, s, start) {
            Ok(actions) => {
                prop_assert_eq!(Some(actions.len()), at(start));
                let mut state = EpisodeState::new(map.clone(), start, usize::MAX);
                for (k, &a) in actions.iter().enumerate() {
                    state.step(a, s).unwrap();
                    prop_assert_eq!(at(state.agent), Some(actions.len() - k - 1));
                }
                prop_assert_eq!(state.outcome, Outcome::Success);
            }
            Err(_) => prop_assert_eq!(at(start), None),
        }
        // one-step consistency of the field
        for cell in map.inner_cells() {
            if let Some(d) = at(cell).filter(|&d| d > 0) {
                let best = s
                    .displacements()
                    .iter()
                    .filter_map(|&o| map.land(cell, o))
                    .filter(|&n| !map.is_trap(n))
                    .filter_map(at)
                    .min();
                prop_assert_eq!(best, Some(d - 1));
            }
        }
    }
}
