use dpnash_core::game::{
    grad_bound_on_box, random_cournot, solve_equilibrium, GameFile, GameProblem, RESIDUAL_STEP,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_in_box(game: &GameProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = Vec::with_capacity(game.total_dim());
    for i in 0..game.players() {
        let b = game.constraint(i).unwrap();
        for (lo, hi) in b.lo.iter().zip(&b.hi) {
            x.push(rng.gen_range(*lo..*hi));
        }
    }
    x
}

/// Largest deviation between `F_i` and a central difference of the cost `f_i`.
fn fd_gap(game: &GameProblem, x: &[f64]) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..game.players() {
        let r = game.block(i);
        let mut g = vec![0.0; r.len()];
        game.pseudo_gradient(i, x, &mut g);
        for (c, idx) in r.enumerate() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[idx] += h;
            xm[idx] -= h;
            let fd = (game.cost(i, &xp).unwrap() - game.cost(i, &xm).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[c]).abs() / g[c].abs().max(1.0));
        }
    }
    worst
}

#[test]
fn paper_scale_instance_solves() {
    let game = random_cournot(20, 7, 1).build().unwrap();
    let sol = solve_equilibrium(&game).unwrap();
    assert!(sol.residual <= 1e-8);
    assert!((0..20).all(|i| game
        .constraint(i)
        .unwrap()
        .contains(&sol.point[game.block(i)])));
    // the fixed point survives a coarser step as well
    assert!(game.fixed_point_residual(&sol.point, 100.0 * RESIDUAL_STEP) < 1e-6);
}

#[test]
fn game_file_round_trips_exactly() {
    let file = GameFile::Cournot(random_cournot(6, 4, 12));
    let text = serde_json::to_string(&file).unwrap();
    let back: GameFile = serde_json::from_str(&text).unwrap();
    assert_eq!(back, file);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_matches_cost(seed in any::<u64>(), m in 2usize..8, n in 1usize..5) {
        let game = random_cournot(m, n, seed).build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let x = sample_in_box(&game, &mut rng);
            prop_assert!(fd_gap(&game, &x) < 1e-6);
        }
    }

    #[test]
    fn mapping_is_strictly_monotone(seed in any::<u64>(), m in 2usize..8, n in 1usize..5) {
        let game = random_cournot(m, n, seed).build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..100 {
            let x = sample_in_box(&game, &mut rng);
            let y = sample_in_box(&game, &mut rng);
            let (fx, fy) = (game.mapping(&x), game.mapping(&y));
            let ip: f64 = fx.iter().zip(&fy).zip(x.iter().zip(&y)).map(|((a, b), (c, d))| (a - b) * (c - d)).sum();
            prop_assert!(ip > 0.0);
        }
    }

    #[test]
    fn oracle_is_a_fixed_point(seed in any::<u64>(), m in 2usize..10, n in 1usize..6) {
        let game = random_cournot(m, n, seed).build().unwrap();
        let sol = solve_equilibrium(&game).unwrap();
        prop_assert!(sol.residual <= 1e-8);
    }

    #[test]
    fn bound_dominates_sampled_gradients(seed in any::<u64>(), m in 2usize..6, n in 1usize..4) {
        let game = random_cournot(m, n, seed).build().unwrap();
        let c_bar = grad_bound_on_box(&game).unwrap();
        prop_assert_eq!(game.grad_bound(), Some(c_bar));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let x = sample_in_box(&game, &mut rng);
            for i in 0..m {
                let mut g = vec![0.0; game.dims()[i]];
                game.pseudo_gradient(i, &x, &mut g);
                prop_assert!(g.iter().map(|v| v.abs()).sum::<f64>() <= c_bar);
            }
        }
    }
}
