//! Scratch timing probe for the NMF sweep hot path. Not part of the shipped
//! benchmark; run with `cargo run --example scratch_profile`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use tbmm::manifolds::{ops_counter, project_constraint, project_manifold, ManifoldSpec};
use tbmm::problems::make_nmf;
use tbmm::solvers::{block_pgd_run, tbmm_run, SolverConfig, StepMode, SubproblemMode};

fn main() {
    let prob = make_nmf(50, 40, 10, 5, 1e-2, false, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let init = prob.init_point(&mut rng);

    let spec = ManifoldSpec::FixedRank {
        rows: 50,
        cols: 10,
        rank: 5,
    };

    // Raw truncation cost.
    let x = &init.blocks[0] + &tbmm::linalg::gaussian_matrix(&mut rng, 50, 10).mapv(|v| v * 0.1);
    let t0 = Instant::now();
    let reps = 2000;
    for _ in 0..reps {
        let _ = project_manifold(&spec, &x).unwrap();
    }
    println!(
        "rank-5 truncation of 50x10: {:.1} us",
        t0.elapsed().as_secs_f64() * 1e6 / reps as f64
    );

    // Constraint restore cost and round count.
    ops_counter::reset();
    let t0 = Instant::now();
    let reps = 200;
    for _ in 0..reps {
        let _ = project_constraint(
            tbmm::manifolds::ConstraintSpec::NonnegativeFixedRank,
            &spec,
            &x,
        )
        .unwrap();
    }
    let (dense, _) = ops_counter::snapshot();
    println!(
        "NNFR restore: {:.1} us, {:.1} truncations per call",
        t0.elapsed().as_secs_f64() * 1e6 / reps as f64,
        dense as f64 / reps as f64
    );

    // Whole-run cost split.
    for (name, sweeps) in [("short", 50usize), ("long", 400)] {
        let cfg = SolverConfig {
            max_iters: sweeps,
            step_mode: StepMode::Constant(1.0),
            subproblem_mode: SubproblemMode::Inexact {
                tol0: 1e-2,
                budget: 2,
            },
            ..SolverConfig::default()
        };
        ops_counter::reset();
        let t0 = Instant::now();
        tbmm_run(&prob, &cfg, &init).unwrap();
        let (d1, r1) = ops_counter::snapshot();
        let tb = t0.elapsed().as_secs_f64();
        ops_counter::reset();
        let t0 = Instant::now();
        block_pgd_run(&prob, &cfg, &init).unwrap();
        let (d2, r2) = ops_counter::snapshot();
        let pg = t0.elapsed().as_secs_f64();
        println!(
            "{name}: tbmm {:.1} ms/sweep (dense {:.1}/sweep, reduced {:.1}/sweep); pgd {:.1} ms/sweep (dense {:.1}/sweep, reduced {:.1}/sweep)",
            tb * 1e3 / sweeps as f64,
            d1 as f64 / sweeps as f64,
            r1 as f64 / sweeps as f64,
            pg * 1e3 / sweeps as f64,
            d2 as f64 / sweeps as f64,
            r2 as f64 / sweeps as f64
        );
    }
}
