//! SVD operation accounting across solver families. The counters are global
//! atomics, so this binary holds exactly one test: parallel test threads in
//! the same process would pollute the snapshots.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tbmm::manifolds::ops_counter;
use tbmm::problems::make_matrix_recovery;
use tbmm::solvers::{block_pgd_run, niht_run, tbmm_run, SolverConfig};

#[test]
fn factored_sweeps_avoid_dense_factorizations() {
    let prob = make_matrix_recovery(20, 12, 3, 80, 91).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let init = prob.init_point(&mut rng);
    let iters = 20;
    let cfg = SolverConfig {
        max_iters: iters,
        ..SolverConfig::default()
    };

    // Tangential MM touches the dense kernel once, to factor the initial
    // point; every sweep after that runs on the 2r x 2r reduced path.
    ops_counter::reset();
    tbmm_run(&prob, &cfg, &init).unwrap();
    let (dense, reduced) = ops_counter::snapshot();
    assert_eq!(dense, 1, "one initial factorization");
    assert_eq!(reduced as usize, iters, "one reduced SVD per sweep");

    // Projected gradient descent pays a dense truncated SVD per step (plus
    // the stationarity probe at record zero) and never uses the reduced path.
    ops_counter::reset();
    block_pgd_run(&prob, &cfg, &init).unwrap();
    let (dense_pgd, reduced_pgd) = ops_counter::snapshot();
    assert_eq!(dense_pgd as usize, iters + 1);
    assert_eq!(reduced_pgd, 0);

    // Hard thresholding also truncates densely: once per accepted step plus
    // one per backtracking retry, never through the reduced path.
    ops_counter::reset();
    niht_run(&prob, iters, &init, 0).unwrap();
    let (dense_niht, reduced_niht) = ops_counter::snapshot();
    assert!(
        dense_niht as usize >= iters + 1,
        "at least the init factorization plus one per step, got {dense_niht}"
    );
    assert_eq!(reduced_niht, 0);
}
