//! Scratch comparison of hard-thresholding step-control variants. Not part
//! of the shipped benchmark; run with `cargo run --example scratch_niht`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tbmm::problems::{make_matrix_recovery, ProblemInstance};
use tbmm::manifolds::BlockPoint;
use tbmm_bench::seeding;

type M = tbmm::Matrix;

fn fro(a: &M) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn svd_rank_r(a: &M, r: usize) -> M {
    use tbmm::manifolds::{project_manifold, ManifoldSpec};
    let spec = ManifoldSpec::FixedRank {
        rows: a.nrows(),
        cols: a.ncols(),
        rank: r,
    };
    project_manifold(&spec, a).unwrap().0
}

fn left_factor(a: &M, r: usize) -> M {
    use tbmm::manifolds::{project_manifold, ManifoldSpec};
    let spec = ManifoldSpec::FixedRank {
        rows: a.nrows(),
        cols: a.ncols(),
        rank: r,
    };
    project_manifold(&spec, a).unwrap().1.unwrap().u
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    Plain,
    ObjBacktrack,
    StepBound,
}

fn run_variant(
    prob: &ProblemInstance,
    init: &BlockPoint,
    variant: Variant,
    iters: usize,
    r: usize,
) -> (Vec<f64>, Vec<f64>, usize) {
    let op = prob.sensing().unwrap();
    let mut x = init.blocks[0].clone();
    let mut u = left_factor(&x, r);
    let obj = |m: &M| {
        let pt = BlockPoint::new(vec![m.clone()]);
        prob.objective(&pt)
    };
    let rel = |m: &M| {
        let pt = BlockPoint::new(vec![m.clone()]);
        prob.relative_error(&pt).unwrap_or(f64::NAN)
    };
    let mut rels = vec![rel(&x)];
    let mut objs = vec![obj(&x)];
    let mut ascents = 0usize;
    for _ in 1..=iters {
        let pt = BlockPoint::new(vec![x.clone()]);
        let g = prob.block_euclid_grad(&pt, 0);
        let pu_g = u.dot(&u.t().dot(&g));
        let num = fro(&pu_g).powi(2);
        let den: f64 = op.apply(&pu_g).iter().map(|v| v * v).sum();
        let mut alpha = if den == 0.0 { 1.0 } else { num / den };
        let f_cur = *objs.last().unwrap();
        let accept_obj = f_cur + 1e-12 * (1.0 + f_cur.abs());
        let c = 0.01f64;
        let mut halvings = 0;
        let y = loop {
            let raw = &x - &g.mapv(|v| v * alpha);
            let y = svd_rank_r(&raw, r);
            let ok = match variant {
                Variant::Plain => true,
                Variant::ObjBacktrack => obj(&y) <= accept_obj || halvings >= 60,
                Variant::StepBound => {
                    let dx = &y - &x;
                    let adx: f64 = op.apply(&dx).iter().map(|v| v * v).sum();
                    let _ = c;
                    alpha * adx <= fro(&dx).powi(2) || halvings >= 60
                }
            };
            if ok {
                break y;
            }
            alpha *= 0.5;
            halvings += 1;
        };
        let fy = obj(&y);
        if fy > f_cur + 1e-9 * (1.0 + objs[0].abs()) {
            ascents += 1;
        }
        x = y;
        u = left_factor(&x, r);
        objs.push(fy);
        rels.push(rel(&x));
    }
    (rels, objs, ascents)
}

fn main() {
    let base = 2024u64;
    for p in [300usize, 450] {
        for (vname, variant) in [
            ("plain", Variant::Plain),
            ("objbt", Variant::ObjBacktrack),
            ("bound", Variant::StepBound),
        ] {
            let mut finals = Vec::new();
            let mut hits = Vec::new();
            let mut total_ascents = 0;
            for t in 0..10u64 {
                let ts = seeding::split(base, t);
                let data_seed = seeding::split(ts, 0);
                let init_seed = seeding::split(ts, 1);
                let prob = make_matrix_recovery(50, 12, 3, p, data_seed).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
                let init = prob.init_point(&mut rng);
                let (rels, _objs, ascents) = run_variant(&prob, &init, variant, 500, 3);
                finals.push(rels[500]);
                hits.push(rels.iter().position(|&v| v <= 1e-3));
                total_ascents += ascents;
            }
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            let conv = hits.iter().filter(|h| h.is_some()).count();
            println!(
                "p={p} {vname}: mean_rel@500 {mean:.3e}  conv {conv}/10  ascents {total_ascents}  finals {:?}",
                finals.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>()
            );
        }
    }
}
