//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails at the end if any criterion failed.

mod common;

use std::time::{Duration, Instant};

use g2r::encoder::{encode, EncoderConfig, EncoderParams, GraphRegion, SinkAssignment};
use g2r::graph::{generate_dataset, generate_er, Dataset, ErRange, Graph, LabeledPair};
use g2r::inference::{difference, score_ged, score_mcs, score_pairs_on_tape, ScoreConfig, ScoreParams};
use g2r::metrics::{kendall, spearman};
use g2r::model::{LossMode, ModelConfig, ModelParams};
use g2r::nn::ParamTree;
use g2r::oracle::{
    bunke_ged, check_prop2_bound, ged_exact, label_pairs, mcs_exact, phi, select_pairs, OracleBudget, PairSelection,
};
use g2r::tensor::{grad_check_many, GradCheckStatus, Tape, Tensor, Var};
use g2r::trainer::{predict_pairs, train, TrainConfig, TrainOutcome};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: usize,
    pass: bool,
}

fn report(results: &mut Vec<Outcome>, id: usize, name: &str, pass: bool, detail: String) {
    println!("criterion {id} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    results.push(Outcome { id, pass });
}

fn random_graph(rng: &mut ChaCha8Rng, n_min: usize, n_max: usize) -> Graph {
    let n = rng.gen_range(n_min..=n_max);
    generate_er(n, rng.gen_range(0.2..0.8), rng.gen()).unwrap()
}

fn mcs_equivalence(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..50 {
        let (a, b) = (random_graph(&mut rng, 2, 7), random_graph(&mut rng, 2, 7));
        if mcs_exact(&a, &b).unwrap().node_count != common::brute_mcs(&a, &b).0 {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    report(
        results,
        1,
        "MCS oracle vs enumeration",
        mismatches == 0 && t < Duration::from_secs(300),
        format!("50 pairs, {mismatches} mismatches, {t:.2?}"),
    );
}

fn ged_equivalence(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..50 {
        let (a, b) = (random_graph(&mut rng, 1, 5), random_graph(&mut rng, 1, 5));
        if ged_exact(&a, &b).unwrap().cost != common::brute_ged(&a, &b) {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    report(
        results,
        2,
        "GED oracle vs edit-space search",
        mismatches == 0 && t < Duration::from_secs(600),
        format!("50 pairs, {mismatches} mismatches, {t:.2?}"),
    );
}

fn bound_suite(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut bunke_wrong, mut violations) = (0, 0);
    let (mut bunkes, mut geds) = (Vec::new(), Vec::new());
    for _ in 0..500 {
        let (a, b) = (random_graph(&mut rng, 1, 8), random_graph(&mut rng, 1, 8));
        let m = mcs_exact(&a, &b).unwrap();
        let ged = ged_exact(&a, &b).unwrap().cost;
        let bunke = bunke_ged(&a, &b, m.node_count).unwrap();
        if bunke != a.num_nodes() + b.num_nodes() - 2 * m.node_count {
            bunke_wrong += 1;
        }
        if !check_prop2_bound(ged, bunke, phi(&a, &b, m.edge_count).unwrap()) {
            violations += 1;
        }
        if ged > 0 {
            bunkes.push(bunke as f64);
            geds.push(ged as f64);
        }
    }
    let rho = spearman(&bunkes, &geds);
    report(
        results,
        3,
        "Bunke GED / bound suite",
        bunke_wrong == 0 && violations == 0 && rho.is_some_and(|r| r > 0.0),
        format!(
            "500 pairs, bunke mismatches {bunke_wrong}, bound violations {violations}, spearman(bunke, ged) = {rho:?} over {} non-isomorphic pairs",
            geds.len()
        ),
    );
}

/// Runs `f` on fresh random inputs until `want` smooth configurations were checked.
fn grad_suite<G, F>(rng: &mut ChaCha8Rng, want: usize, mut gen: G, f: F) -> (usize, f64, usize)
where
    G: FnMut(&mut ChaCha8Rng) -> Vec<Tensor>,
    F: Fn(&mut Tape, &[Var]) -> g2r::Result<Var>,
{
    let reduce = |t: &mut Tape, vars: &[Var]| -> g2r::Result<Var> {
        let y = f(t, vars)?;
        let n = t.value(y).len();
        let w: Vec<f64> = (0..n).map(|i| 0.5 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let w = t.constant(Tensor::new(t.shape(y).to_vec(), w)?);
        let p = t.mul(y, w)?;
        Ok(t.sum_all(p))
    };
    let (mut checked, mut worst, mut failed) = (0, 0.0f64, 0);
    for _ in 0..want * 20 {
        if checked == want {
            break;
        }
        let xs = gen(rng);
        let r = grad_check_many(reduce, &xs, 1e-6, 1e-4).unwrap();
        match r.status {
            GradCheckStatus::SkippedNonsmooth => continue,
            GradCheckStatus::Passed => {}
            GradCheckStatus::Failed => failed += 1,
        }
        checked += 1;
        worst = worst.max(r.max_rel_error);
    }
    (checked, worst, failed)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn signed_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.5..2.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), v).unwrap()
}

/// Segment ids for `rows` rows over `k` segments, every segment non-empty.
fn segments(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Vec<usize> {
    let mut seg: Vec<usize> = (0..rows).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    seg.shuffle(rng);
    seg
}

fn small_model_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            k: 2,
            d: 4,
            region_dim: 4,
            out: 3,
            n_paths: 2,
            path_len: 2,
            label_vocab: 1,
            use_positions: true,
            use_clamp: true,
        },
        score: ScoreConfig::default(),
    }
}

fn gradient_suite(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut lines = Vec::new();
    let mut all_ok = true;
    let mut record = |name: &str, (checked, worst, failed): (usize, f64, usize)| {
        let ok = checked == 100 && failed == 0 && worst < 1e-4;
        all_ok &= ok;
        lines.push(format!("{name} {checked}/{worst:.1e}"));
    };
    let r = &mut rng;
    let seg_rows = 6;
    let seg_k = 3;

    record(
        "linear",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[3, 4], -1.0, 1.0), rand_tensor(r, &[4, 2], -1.0, 1.0), rand_tensor(r, &[2], -1.0, 1.0)], |t, v| {
            t.linear(v[0], v[1], v[2])
        }),
    );
    record("relu", grad_suite(r, 100, |r| vec![rand_tensor(r, &[5], -1.0, 1.0)], |t, v| Ok(t.relu(v[0]))));
    record("softplus", grad_suite(r, 100, |r| vec![rand_tensor(r, &[5], -3.0, 3.0)], |t, v| Ok(t.softplus(v[0]))));
    record("exp_neg", grad_suite(r, 100, |r| vec![rand_tensor(r, &[5], -2.0, 2.0)], |t, v| Ok(t.exp_neg(v[0]))));
    record(
        "ewise_min",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0), rand_tensor(r, &[2, 3], -1.0, 1.0)], |t, v| {
            t.ewise_min(v[0], v[1])
        }),
    );
    record(
        "ewise_max",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0), rand_tensor(r, &[2, 3], -1.0, 1.0)], |t, v| {
            t.ewise_max(v[0], v[1])
        }),
    );
    record(
        "add",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[4], -1.0, 1.0), rand_tensor(r, &[4], -1.0, 1.0)], |t, v| t.add(v[0], v[1])),
    );
    record(
        "sub",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[4], -1.0, 1.0), rand_tensor(r, &[4], -1.0, 1.0)], |t, v| t.sub(v[0], v[1])),
    );
    record(
        "mul",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[4], -1.0, 1.0), rand_tensor(r, &[4], -1.0, 1.0)], |t, v| t.mul(v[0], v[1])),
    );
    record(
        "div",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[4], -1.0, 1.0), signed_away_from_zero(r, &[4])], |t, v| t.div(v[0], v[1])),
    );
    record("scale", grad_suite(r, 100, |r| vec![rand_tensor(r, &[4], -1.0, 1.0)], |t, v| Ok(t.scale(v[0], -1.7))));
    record(
        "mul_scalar",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[2, 2], -1.0, 1.0), rand_tensor(r, &[], -2.0, 2.0)], |t, v| {
            t.mul_scalar(v[0], v[1])
        }),
    );
    // Segment layouts are drawn once per op; values vary per configuration.
    let seg = segments(r, seg_rows, seg_k);
    record(
        "segment_sum",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[seg_rows, 2], -1.0, 1.0)], |t, v| t.segment_sum(v[0], seg.clone(), seg_k)),
    );
    record(
        "segment_min",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[seg_rows, 2], -1.0, 1.0)], |t, v| t.segment_min(v[0], &seg, seg_k)),
    );
    record(
        "segment_max",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[seg_rows, 2], -1.0, 1.0)], |t, v| t.segment_max(v[0], &seg, seg_k)),
    );
    record(
        "gather_rows",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[4, 2], -1.0, 1.0)], |t, v| t.gather_rows(v[0], vec![3, 0, 3, 1])),
    );
    record(
        "concat",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[2], -1.0, 1.0), rand_tensor(r, &[3], -1.0, 1.0)], |t, v| t.concat(&[v[0], v[1], v[0]])),
    );
    record(
        "concat_cols",
        grad_suite(r, 100, |r| vec![rand_tensor(r, &[2, 2], -1.0, 1.0), rand_tensor(r, &[2, 1], -1.0, 1.0)], |t, v| {
            t.concat_cols(&[v[0], v[1]])
        }),
    );
    record("prod_rows", grad_suite(r, 100, |r| vec![rand_tensor(r, &[3, 4], 0.2, 2.0)], |t, v| t.prod_rows(v[0])));
    record("prod_reduce", grad_suite(r, 100, |r| vec![rand_tensor(r, &[5], -2.0, 2.0)], |t, v| t.prod_reduce(v[0])));
    record("mean_rows", grad_suite(r, 100, |r| vec![rand_tensor(r, &[3, 2], -1.0, 1.0)], |t, v| t.mean_rows(v[0])));
    record("reshape", grad_suite(r, 100, |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0)], |t, v| t.reshape(v[0], vec![3, 2])));
    record("sum_all", grad_suite(r, 100, |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0)], |t, v| Ok(t.sum_all(v[0]))));
    record("mean_all", grad_suite(r, 100, |r| vec![rand_tensor(r, &[2, 3], -1.0, 1.0)], |t, v| t.mean_all(v[0])));

    // Full scores with respect to every encoder and score parameter.
    let cfg = small_model_config();
    for (task, name) in [(0, "score_mcs"), (1, "score_ged")] {
        let mut state = ChaCha8Rng::seed_from_u64(900 + task);
        let mut checked = 0;
        let mut worst = 0.0f64;
        let mut failed = 0;
        for _ in 0..2000 {
            if checked == 100 {
                break;
            }
            let seed: u64 = state.gen();
            let template = ModelParams::init(&cfg, seed);
            let g1 = generate_er(5, state.gen_range(0.3..0.8), state.gen()).unwrap();
            let g2 = generate_er(5, state.gen_range(0.3..0.8), state.gen()).unwrap();
            let a1 = SinkAssignment::sample(5, 2, seed, 0);
            let a2 = SinkAssignment::sample(5, 2, seed, 1);
            let sizes = [g1.cardinality() as f64, g2.cardinality() as f64];
            let f = |t: &mut Tape, vars: &[Var]| -> g2r::Result<Var> {
                let mut it = vars.iter().copied();
                let pv = template.map("", &mut |_, _| it.next().expect("one var per tensor"));
                let enc = g2r::encoder::encode_on_tape(t, &pv.encoder, &cfg.encoder, &[(&g1, &a1), (&g2, &a2)])?;
                let s = score_pairs_on_tape(t, enc, &sizes, &[(0, 1)], &pv.scores)?;
                Ok(t.sum_all(if task == 0 { s.mcs } else { s.ged }))
            };
            let r = grad_check_many(f, &template.flatten(), 1e-6, 1e-4).unwrap();
            match r.status {
                GradCheckStatus::SkippedNonsmooth => continue,
                GradCheckStatus::Passed => {}
                GradCheckStatus::Failed => failed += 1,
            }
            checked += 1;
            worst = worst.max(r.max_rel_error);
        }
        record(name, (checked, worst, failed));
    }

    report(results, 4, "gradient suite", all_ok, format!("op checked/max-rel-err: {}", lines.join(", ")));
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn invariance_suite(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let cfg = EncoderConfig {
        k: 3,
        d: 8,
        region_dim: 8,
        out: 5,
        n_paths: 3,
        path_len: 3,
        label_vocab: 3,
        use_positions: true,
        use_clamp: true,
    };
    let params = EncoderParams::init(&cfg, &mut g2r::rng::stream(7, "init", 0));
    let mut worst_perm = 0.0f64;
    let mut perm_ok = true;
    let mut regions = Vec::new();
    for trial in 0..50 {
        let base = random_graph(&mut rng, 1, 12);
        let labels = (0..base.num_nodes()).map(|_| rng.gen_range(0..3)).collect();
        let g = Graph::new(base.num_nodes(), base.edges().to_vec(), Some(labels)).unwrap();
        let a = SinkAssignment::sample(g.num_nodes(), cfg.n_paths, 5, trial);
        let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
        perm.shuffle(&mut rng);
        let r1 = encode(&g, &params, &cfg, &a).unwrap();
        let r2 = encode(&g.permute(&perm).unwrap(), &params, &cfg, &a.permute(&perm).unwrap()).unwrap();
        for (x, y) in r1.region.data().iter().zip(r2.region.data()) {
            worst_perm = worst_perm.max((x - y).abs() / x.abs().max(y.abs()));
            perm_ok &= rel_close(*x, *y, 1e-9);
        }
        regions.push(r1);
    }

    let score_cfg = ScoreConfig::default();
    let sp = ScoreParams::init(cfg.k, cfg.out, &score_cfg, &mut g2r::rng::stream(7, "scores", 0));
    let mut symmetric = true;
    let mut diff_zero = true;
    let mut vol_one = true;
    let vol_only = ScoreParams::volume_only(cfg.k, cfg.out);
    for i in 0..regions.len() {
        let j = (i * 7 + 3) % regions.len();
        let (a, b) = (&regions[i], &regions[j]);
        symmetric &= score_mcs(a, b, &sp, &score_cfg).unwrap() == score_mcs(b, a, &sp, &score_cfg).unwrap();
        symmetric &= score_ged(a, b, &sp, &score_cfg).unwrap() == score_ged(b, a, &sp, &score_cfg).unwrap();
        diff_zero &= difference(&a.region, &a.region).unwrap().data().iter().all(|&v| v == 0.0);
        vol_one &= score_mcs(a, a, &vol_only, &score_cfg).unwrap() == 1.0;
    }

    let deterministic = determinism_holds();
    report(
        results,
        5,
        "invariance suite",
        perm_ok && symmetric && diff_zero && vol_one && deterministic,
        format!(
            "permutation max rel diff {worst_perm:.1e}, symmetry {symmetric}, difference(R,R)=0 {diff_zero}, identical-region MCS volume term = 1 {vol_one}, bitwise determinism {deterministic}"
        ),
    );
}

fn determinism_holds() -> bool {
    let range = ErRange {
        n_min: 4,
        n_max: 7,
        p_min: 0.3,
        p_max: 0.6,
    };
    let g1 = generate_dataset(30, range, 9).unwrap();
    if g1 != generate_dataset(30, range, 9).unwrap() {
        return false;
    }
    let ds = Dataset::unlabeled(g1);
    let pairs = label_pairs(&ds, &select_pairs(30, PairSelection::Random(60), 9).unwrap(), &OracleBudget::default()).unwrap();
    let mcfg = small_model_config();
    let tcfg = TrainConfig {
        lr: 0.003,
        batch_size: 8,
        iters_per_epoch: 5,
        warmup_epochs: 1,
        validate_every: 1,
        patience: 10,
        max_epochs: 4,
        max_wall_clock: None,
        loss_mode: LossMode::DualUncertainty,
        seed: 9,
    };
    let a = train(&ds, &pairs, &mcfg, &tcfg).unwrap();
    let b = train(&ds, &pairs, &mcfg, &tcfg).unwrap();
    let ea = a.model.encode_dataset(&ds).unwrap();
    let eb = b.model.encode_dataset(&ds).unwrap();
    a.history == b.history && a.model == b.model && ea == eb
}

fn desk_range() -> ErRange {
    ErRange {
        n_min: 5,
        n_max: 10,
        p_min: 0.2,
        p_max: 0.4,
    }
}

fn desk_model(use_positions: bool, use_clamp: bool) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            k: 4,
            d: 32,
            region_dim: 32,
            out: 16,
            n_paths: 3,
            path_len: 3,
            label_vocab: 1,
            use_positions,
            use_clamp,
        },
        score: ScoreConfig::default(),
    }
}

fn desk_train_config() -> TrainConfig {
    TrainConfig {
        lr: 0.003,
        batch_size: 64,
        iters_per_epoch: 100,
        warmup_epochs: 5,
        validate_every: 1,
        patience: 5,
        max_epochs: 20,
        max_wall_clock: None,
        loss_mode: LossMode::DualUncertainty,
        seed: 1,
    }
}

struct Desk {
    ds: Dataset,
    pairs: Vec<LabeledPair>,
    full: TrainOutcome,
}

fn desk_learning(results: &mut Vec<Outcome>) -> Desk {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (ds, pairs, full) = pool.install(|| {
        let ds = Dataset::unlabeled(generate_dataset(300, desk_range(), 1).unwrap());
        let sel = select_pairs(ds.len(), PairSelection::Random(5000), 1).unwrap();
        let pairs = label_pairs(&ds, &sel, &OracleBudget::default()).unwrap();
        let full = train(&ds, &pairs, &desk_model(true, true), &desk_train_config()).unwrap();
        (ds, pairs, full)
    });
    let wall = start.elapsed();
    let iterations = full.history.len() * desk_train_config().iters_per_epoch;
    let ((pm, pg), (tm, tg)) = predict_pairs(&full.model, &ds, &pairs, &full.split.test, None).unwrap();
    let rho_mcs = spearman(&pm, &tm).unwrap_or(f64::NAN);
    let rho_ged = spearman(&pg, &tg).unwrap_or(f64::NAN);
    report(
        results,
        6,
        "desk-scale learning",
        rho_mcs >= 0.75 && rho_ged >= 0.75 && iterations <= 2000 && wall < Duration::from_secs(1800),
        format!(
            "held-out spearman nMCS {rho_mcs:.4}, nGED {rho_ged:.4} (target >= 0.75 each) on {} test pairs, {iterations} iterations, single-core {wall:.1?}",
            tm.len()
        ),
    );
    Desk { ds, pairs, full }
}

fn complexity(results: &mut Vec<Outcome>) {
    let cfg = desk_model(true, true);
    let params = ModelParams::init(&cfg, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let regions_for = |n: usize, p: f64, rng: &mut ChaCha8Rng| -> Vec<GraphRegion> {
        (0..64)
            .map(|i| {
                let g = generate_er(n, p, rng.gen()).unwrap();
                let a = SinkAssignment::sample(n, cfg.encoder.n_paths, 3, i);
                encode(&g, &params.encoder, &cfg.encoder, &a).unwrap()
            })
            .collect()
    };
    let small = regions_for(10, 0.3, &mut rng);
    let large = regions_for(50, 0.1, &mut rng);
    let pairs: Vec<(usize, usize)> = (0..2000).map(|_| (rng.gen_range(0..64), rng.gen_range(0..64))).collect();
    let time_once = |regions: &[GraphRegion]| -> f64 {
        let start = Instant::now();
        let mut acc = 0.0;
        for &(a, b) in &pairs {
            acc += score_mcs(&regions[a], &regions[b], &params.scores, &cfg.score).unwrap();
            acc += score_ged(&regions[a], &regions[b], &params.scores, &cfg.score).unwrap();
        }
        std::hint::black_box(acc);
        start.elapsed().as_secs_f64() / pairs.len() as f64
    };
    // Alternate sizes rep by rep so background load hits both equally; keep the best rep.
    let (mut t10, mut t50) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..100 {
        t10 = t10.min(time_once(&small));
        t50 = t50.min(time_once(&large));
    }
    let rel = (t50 - t10).abs() / t10;
    report(
        results,
        7,
        "scoring cost independent of graph size",
        rel < 0.10,
        format!("per-pair {:.3} us at n=10 vs {:.3} us at n=50, relative difference {:.1}%", t10 * 1e6, t50 * 1e6, rel * 100.0),
    );
}

fn ablations(results: &mut Vec<Outcome>, desk: &Desk) {
    let val_mse = |out: &TrainOutcome| -> f64 {
        let ((pm, _), (tm, _)) = predict_pairs(&out.model, &desk.ds, &desk.pairs, &out.split.val, None).unwrap();
        g2r::metrics::mse(&pm, &tm).unwrap()
    };
    let full = val_mse(&desk.full);
    let no_pe = val_mse(&train(&desk.ds, &desk.pairs, &desk_model(false, true), &desk_train_config()).unwrap());
    let no_clamp = val_mse(&train(&desk.ds, &desk.pairs, &desk_model(true, false), &desk_train_config()).unwrap());
    report(
        results,
        8,
        "ablations do not improve MCS by more than 5%",
        no_pe >= 0.95 * full && no_clamp >= 0.95 * full,
        format!("validation MSE(nMCS): full {full:.5}, w/o PE {no_pe:.5}, w/o clamp {no_clamp:.5}"),
    );
}

fn metrics_oracle(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut worst = 0.0f64;
    let mut undefined_mismatch = 0;
    for i in 0..1000 {
        let n = rng.gen_range(2..=200);
        let tied = i % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| if tied { rng.gen_range(0..6) as f64 } else { rng.gen::<f64>() })
                .collect()
        };
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        for (fast, slow) in [(spearman(&x, &y), common::naive_spearman(&x, &y)), (kendall(&x, &y), common::naive_kendall(&x, &y))] {
            match (fast, slow) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => undefined_mismatch += 1,
            }
        }
    }
    report(
        results,
        9,
        "rank metrics vs O(n^2) references",
        worst <= 1e-12 && undefined_mismatch == 0,
        format!("1000 vectors (half with ties), max abs diff {worst:.1e}, undefined mismatches {undefined_mismatch}"),
    );
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    mcs_equivalence(&mut results);
    ged_equivalence(&mut results);
    bound_suite(&mut results);
    gradient_suite(&mut results);
    invariance_suite(&mut results);
    complexity(&mut results);
    metrics_oracle(&mut results);
    let desk = desk_learning(&mut results);
    ablations(&mut results, &desk);

    results.sort_by_key(|o| o.id);
    let failed: Vec<usize> = results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
