//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use gnncca::baselines::{sweep_thresholds, BaselineConfig, BaselineMethod};
use gnncca::featurize::CameraCalibration;
use gnncca::graph::{component_labels, find_bridges, Edge};
use gnncca::inference::{apply_binarization, prune, split};
use gnncca::metrics::{ami, ari, homogeneity_completeness_v};
use gnncca::mpn::{graph_loss, graph_loss_grad, mpn_backward, mpn_forward, train, Aggregation, TrainConfig};
use gnncca::numeric::Matrix;
use gnncca::{
    associate, build_frame_graph, evaluate_sequence, generate_scene, BBox, Calibrations, CameraId, Clustering, Dataset,
    DescriptorStore, Detection, FrameGraph, MessageSource, ModelParams, PostProcessing, ProbGraph, SceneSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn check(name: &'static str, limit: Duration, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (ok, detail) = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let detail = if in_time { detail } else { format!("{detail}; over time limit {limit:?}") };
    let outcome = Outcome { name, passed: ok && in_time, detail, elapsed };
    println!(
        "[{}] {}: {} ({:.1}s)",
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.name,
        outcome.detail,
        outcome.elapsed.as_secs_f64()
    );
    outcome
}

// ---------------------------------------------------------------- gradients

fn small_scene(rng: &mut ChaCha8Rng, dim: usize) -> (FrameGraph, DescriptorStore, Calibrations) {
    let nodes = rng.gen_range(2..=5);
    let cameras = rng.gen_range(2..4u32);
    let dets: Vec<Detection> = (0..nodes)
        .map(|k| Detection {
            frame: 0,
            camera: CameraId(k as u32 % cameras),
            det_id: k as u32,
            bbox: BBox { x: rng.gen_range(0.0..4.0), y: rng.gen_range(0.0..4.0), w: 0.5, h: 1.5 },
            descriptor_index: k,
            identity: Some(rng.gen_range(0..3)),
        })
        .collect();
    let store = DescriptorStore::new(dim, (0..nodes * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let calibs = (0..cameras)
        .map(|c| {
            let h = Matrix::from_vec(3, 3, vec![1.0, 0.1 * c as f64, 0.0, 0.0, 1.0, 0.2, 0.0, 0.0, 1.0]).unwrap();
            (CameraId(c), CameraCalibration::new(CameraId(c), h).unwrap())
        })
        .collect();
    (build_frame_graph(&dets).unwrap(), store, calibs)
}

/// `None` when a prediction sits in the loss clamp; otherwise the worst
/// relative error over the sampled entries.
fn gradient_error(seed: u64, source: MessageSource, aggregation: Aggregation, steps: usize) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, store, calibs) = small_scene(&mut rng, 4);
    let mut params = ModelParams::init(4, steps, source, &mut rng).unwrap().with_aggregation(aggregation);
    for (_, net) in params.networks_mut() {
        for layer in &mut net.layers {
            layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.2..0.2));
        }
    }
    let labels = g.edge_labels().unwrap();
    let (preds, trace) = mpn_forward(&g, &params, &store, &calibs).unwrap();
    if preds.probs.iter().flatten().any(|&p| !(1e-5..=1.0 - 1e-5).contains(&p)) {
        return None;
    }
    let (_, dlogit) = graph_loss_grad(&preds, &labels, 1.0).unwrap();
    let mut grads = params.zeros_like();
    mpn_backward(&g, &params, &trace, &dlogit, &mut grads).unwrap();
    let loss = |p: &ModelParams| graph_loss(&mpn_forward(&g, p, &store, &calibs).unwrap().0, &labels).unwrap();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (net_idx, (_, net)) in params.networks().enumerate() {
        let grad_net = grads.networks().nth(net_idx).unwrap().1;
        for ((tname, values), (_, gvalues)) in net.tensors().zip(grad_net.tensors()) {
            for _ in 0..8 {
                let i = rng.gen_range(0..values.len());
                let set = |p: &mut ModelParams, v: f64| {
                    let (_, n) = p.networks_mut().nth(net_idx).unwrap();
                    n.tensors_mut().find(|(t, _)| *t == tname).unwrap().1[i] = v;
                };
                let mut central = |h: f64| {
                    set(&mut probe, values[i] + h);
                    let up = loss(&probe);
                    set(&mut probe, values[i] - h);
                    let down = loss(&probe);
                    set(&mut probe, values[i]);
                    (up - down) / (2.0 * h)
                };
                let mut err = rel(gvalues[i], central(1e-5));
                if err >= 1e-4 {
                    // Probe straddles a ReLU kink; a narrower probe sees one side.
                    err = rel(gvalues[i], central(1e-7));
                }
                worst = worst.max(err);
            }
        }
    }
    Some(worst)
}

fn gradient_oracle() -> (bool, String) {
    let mut graphs = 0;
    let mut worst: f64 = 0.0;
    for (source, aggregation) in [
        (MessageSource::SelfState, Aggregation::Mean),
        (MessageSource::Neighbor, Aggregation::Mean),
        (MessageSource::SelfState, Aggregation::Sum),
        (MessageSource::Neighbor, Aggregation::Sum),
    ] {
        let (mut done, mut seed) = (0, 0u64);
        while done < 50 && seed < 1000 {
            if let Some(e) = gradient_error(seed, source, aggregation, 1 + seed as usize % 3) {
                worst = worst.max(e);
                done += 1;
            }
            seed += 1;
        }
        graphs += done;
    }
    (graphs >= 200 && worst < 1e-4, format!("{graphs} graphs, worst relative error {worst:.2e}"))
}

// ------------------------------------------------------------------- graphs

fn random_graph(rng: &mut ChaCha8Rng) -> (usize, Vec<Edge>) {
    let n = rng.gen_range(1..=12);
    let density: f64 = rng.gen_range(0.05..0.7);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                edges.push((a, b));
            }
        }
    }
    (n, edges)
}

fn reach(n: usize, edges: &[Edge]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in edges {
        r[a][b] = true;
        r[b][a] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

fn count_components(n: usize, edges: &[Edge]) -> usize {
    let r = reach(n, edges);
    (0..n).filter(|&i| (0..i).all(|j| !r[i][j])).count()
}

fn graph_oracles() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let trials = 600;
    for _ in 0..trials {
        let (n, edges) = random_graph(&mut rng);
        let base = count_components(n, &edges);
        let expected: Vec<usize> = (0..edges.len())
            .filter(|&e| {
                let rest: Vec<Edge> = edges.iter().enumerate().filter(|&(k, _)| k != e).map(|(_, &x)| x).collect();
                count_components(n, &rest) > base
            })
            .collect();
        if find_bridges(n, &edges) != expected {
            mismatches += 1;
        }
        let labels = component_labels(n, &edges);
        let r = reach(n, &edges);
        if (0..n).any(|i| (0..n).any(|j| (labels[i] == labels[j]) != r[i][j])) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("{trials} graphs, {mismatches} mismatches"))
}

// ------------------------------------------------------------------ metrics

fn ari_pairs(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len();
    let (mut both, mut st, mut sp) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (t[i] == t[j], p[i] == p[j]);
            st += a as u8 as f64;
            sp += b as u8 as f64;
            both += (a && b) as u8 as f64;
        }
    }
    let expected = st * sp / (n * (n - 1) / 2) as f64;
    let max = 0.5 * (st + sp);
    if max == expected {
        1.0
    } else {
        (both - expected) / (max - expected)
    }
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |r, i| r * (n - i) as u128 / (i + 1) as u128)
}

fn sizes(labels: &[usize]) -> Vec<usize> {
    let mut m: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *m.entry(l).or_default() += 1;
    }
    m.into_values().collect()
}

fn ami_direct(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len();
    let nf = n as f64;
    if Clustering::from_labels(t) == Clustering::from_labels(p) {
        return 1.0;
    }
    let (rows, cols) = (sizes(t), sizes(p));
    let h = |c: &[usize]| -> f64 { c.iter().map(|&x| x as f64 / nf).map(|q| -q * q.ln()).sum() };
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in t.iter().zip(p) {
        *cells.entry((a, b)).or_default() += 1;
    }
    let count = |l: usize, v: &[usize]| v.iter().filter(|&&x| x == l).count() as f64;
    let mi: f64 = cells
        .iter()
        .map(|(&(a, b), &k)| k as f64 / nf * (nf * k as f64 / (count(a, t) * count(b, p))).ln())
        .sum();
    let mut emi = 0.0;
    for &a in &rows {
        for &b in &cols {
            for k in 1..=a.min(b) {
                if n - a < b - k {
                    continue;
                }
                let prob = (binom(a, k) * binom(n - a, b - k)) as f64 / binom(n, b) as f64;
                emi += prob * k as f64 / nf * (nf * k as f64 / (a * b) as f64).ln();
            }
        }
    }
    let denom = 0.5 * (h(&rows) + h(&cols)) - emi;
    if denom <= f64::EPSILON {
        0.0
    } else {
        (mi - emi) / denom
    }
}

fn metrics_oracles() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let trials = 600;
    for _ in 0..trials {
        let n = rng.gen_range(2..=10);
        let (kt, kp) = (rng.gen_range(1..=n), rng.gen_range(1..=n));
        let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kt)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kp)).collect();
        let (ct, cp) = (Clustering::from_labels(&t), Clustering::from_labels(&p));
        worst = worst.max((ari(&ct, &cp).unwrap() - ari_pairs(&t, &p)).abs());
        worst = worst.max((ami(&ct, &cp).unwrap() - ami_direct(&t, &p)).abs());
    }
    let c = |l: &[usize]| Clustering::from_labels(l);
    let hcv = |t: &[usize], p: &[usize]| {
        let r = homogeneity_completeness_v(&c(t), &c(p)).unwrap();
        (r.homogeneity, r.completeness, r.v_measure)
    };
    let conventions = hcv(&[0, 0, 0], &[0, 0, 0]) == (1.0, 1.0, 1.0)
        && hcv(&[0, 0, 0, 0], &[0, 1, 2, 3]) == (1.0, 0.0, 0.0)
        && hcv(&[0, 1, 2, 3], &[0, 0, 0, 0]) == (0.0, 1.0, 0.0)
        && hcv(&[0], &[0]) == (1.0, 1.0, 1.0);
    (
        worst < 1e-9 && conventions,
        format!("{trials} partition pairs, max |diff| {worst:.1e}, H/C/V conventions {}", if conventions { "hold" } else { "violated" }),
    )
}

// -------------------------------------------------------------- constraints

fn reference_removals() -> bool {
    // Two 4-cliques joined by the single bridge (3,4).
    let mut edges = Vec::new();
    for block in [[0, 1, 2, 3], [4, 5, 6, 7]] {
        for a in 0..4 {
            for b in a + 1..4 {
                edges.push((block[a], block[b]));
            }
        }
    }
    edges.push((3, 4));
    edges.sort_unstable();
    let pruned = prune(ProbGraph::new(8, edges.clone(), vec![0.9; edges.len()], 4).unwrap());
    let removed: Vec<Edge> = (0..edges.len()).filter(|&e| !pruned.active[e]).map(|e| edges[e]).collect();
    let fig4 = removed == vec![(3, 4)];

    // Triangles chained through bridges (1,3), (3,4), (4,6); (3,4) is weakest.
    let edges = vec![(0, 1), (0, 2), (1, 2), (1, 3), (3, 4), (4, 6), (5, 6), (5, 7), (6, 7)];
    let probs = edges
        .iter()
        .map(|e| match e {
            (1, 3) => 0.8,
            (3, 4) => 0.6,
            (4, 6) => 0.7,
            _ => 0.9,
        })
        .collect();
    let g = ProbGraph::new(8, edges.clone(), probs, 4).unwrap();
    let done = split(prune(g));
    let removed: Vec<Edge> = (0..edges.len()).filter(|&e| !done.active[e]).map(|e| edges[e]).collect();
    fig4 && removed == vec![(3, 4)]
}

fn constraint_enforcement() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let trials = 1500;
    for _ in 0..trials {
        let m = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=14);
        let cams: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
        let density: f64 = rng.gen_range(0.2..1.0);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if cams[a] != cams[b] && rng.gen_bool(density) {
                    edges.push((a, b));
                }
            }
        }
        let probs = edges.iter().map(|_| rng.gen_range(0..=20) as f64 / 20.0).collect();
        let mut g = ProbGraph::new(n, edges, probs, m).unwrap();
        apply_binarization(&mut g, 0.5);
        let out = split(prune(g));
        if out.flows().iter().any(|&f| f > m - 1) || out.components().cluster_sizes().iter().any(|&s| s > m) {
            violations += 1;
        }
    }
    let reference = reference_removals();
    (
        violations == 0 && reference,
        format!("{trials} graphs, {violations} violations; bridge-graph removals {}", if reference { "match" } else { "differ" }),
    )
}

// ------------------------------------------------------------ learning runs

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const NOISE_SIGMA: f64 = 1.3;
const DIM: usize = 64;

struct SeedRun {
    baseline_v: f64,
    v: f64,
    ari_post: f64,
    ari_plain: f64,
    v_l1: f64,
    v_l3: f64,
}

fn scene(seed: u64) -> (Dataset, Vec<FrameGraph>, Vec<FrameGraph>) {
    let spec = SceneSpec {
        cameras: 4,
        identities: 6,
        frames: 400,
        descriptor_dim: DIM,
        appearance_noise_sigma: NOISE_SIGMA,
        seed,
        ..SceneSpec::default()
    };
    let ds: Dataset = generate_scene(&spec).unwrap().into();
    let frames = ds.frames();
    let (train_frames, test_frames) = frames.split_at(300);
    (ds.clone(), train_frames.to_vec(), test_frames.to_vec())
}

fn scores(ds: &Dataset, test: &[FrameGraph], params: &ModelParams, post: &PostProcessing) -> (f64, f64) {
    let truth: Vec<_> = test.iter().map(|g| g.truth_clustering().unwrap()).collect();
    let pred: Vec<_> = test.iter().map(|g| associate(g, params, &ds.store, &ds.calibs, post).unwrap()).collect();
    let r = evaluate_sequence(&truth, &pred).unwrap();
    (r.mean.v_measure, r.mean.ari)
}

fn learning_runs() -> Vec<SeedRun> {
    let plain = PostProcessing { prune: false, split: false, ..PostProcessing::default() };
    SEEDS
        .iter()
        .map(|&seed| {
            let (ds, train_frames, test) = scene(seed);
            let sweep = sweep_thresholds(&test, &ds.store, &ds.calibs, &BaselineConfig::new(BaselineMethod::L2Threshold)).unwrap();
            let fit = |steps: usize| {
                let cfg = TrainConfig { seed, steps, ..TrainConfig::default() };
                train(&train_frames, &ds.store, &ds.calibs, &cfg).unwrap().params
            };
            let model = fit(4);
            let (v, ari_post) = scores(&ds, &test, &model, &PostProcessing::default());
            let (_, ari_plain) = scores(&ds, &test, &model, &plain);
            let (v_l1, _) = scores(&ds, &test, &fit(1), &PostProcessing::default());
            let (v_l3, _) = scores(&ds, &test, &fit(3), &PostProcessing::default());
            let run = SeedRun { baseline_v: sweep.best().mean.v_measure, v, ari_post, ari_plain, v_l1, v_l3 };
            println!(
                "       seed {seed}: L2 sweep V-m {:.4} | L=4 V-m {:.4}, ARI post {:.4} / none {:.4} | V-m L=1 {:.4}, L=3 {:.4}",
                run.baseline_v, run.v, run.ari_post, run.ari_plain, run.v_l1, run.v_l3
            );
            run
        })
        .collect()
}

fn list(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
}

// ------------------------------------------------------------- determinism

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = data.to_str().unwrap().to_string();
    gnncca_cli::run(["gnncca", "synth", "--out", &d, "--frames", "40", "--descriptor-dim", "32", "--seed", "9"]).unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let ckpt = dir.path().join(format!("model{k}.ckpt"));
        let log = dir.path().join(format!("loss{k}.csv"));
        gnncca_cli::run([
            "gnncca", "train", "--data", &d, "--out", ckpt.to_str().unwrap(), "--loss-log", log.to_str().unwrap(),
            "--epochs", "20", "--batch", "64", "--lr", "5e-3", "--steps", "4", "--seed", "9",
        ])
        .unwrap();
        runs.push((std::fs::read(&ckpt).unwrap(), std::fs::read(&log).unwrap()));
    }
    let same_ckpt = runs[0].0 == runs[1].0;
    let same_log = runs[0].1 == runs[1].1;
    (
        same_ckpt && same_log,
        format!(
            "checkpoints {} ({} bytes), loss logs {}",
            if same_ckpt { "byte-identical" } else { "differ" },
            runs[0].0.len(),
            if same_log { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let mut outcomes = vec![
        check("gradient oracle", Duration::from_secs(60), gradient_oracle),
        check("graph-algorithm oracles", Duration::from_secs(10), graph_oracles),
        check("metrics oracles", Duration::from_secs(30), metrics_oracles),
        check("constraint enforcement", Duration::from_secs(60), constraint_enforcement),
    ];

    let start = Instant::now();
    let runs = learning_runs();
    let learn_time = start.elapsed();
    let per = |f: &dyn Fn(&SeedRun) -> bool| runs.iter().filter(|r| f(r)).count();

    let hard = per(&|r| r.baseline_v <= 0.85);
    let wins = per(&|r| r.v >= 0.90 && r.v > r.baseline_v);
    outcomes.push(check("end-to-end learning", Duration::from_secs(600), || {
        (
            wins >= 4 && hard == runs.len() && learn_time <= Duration::from_secs(600),
            format!(
                "{wins}/5 seeds with V-m >= 0.90 above the swept L2 baseline; MPN V-m [{}], L2 V-m [{}] ({hard}/5 <= 0.85); {:.0}s for all runs",
                list(runs.iter().map(|r| r.v)),
                list(runs.iter().map(|r| r.baseline_v)),
                learn_time.as_secs_f64()
            ),
        )
    }));

    let post_ok = per(&|r| r.ari_post >= r.ari_plain);
    outcomes.push(check("post-processing direction", Duration::from_secs(1), || {
        (
            post_ok >= 4,
            format!(
                "{post_ok}/5 seeds with ARI(prune+split) >= ARI(none); post [{}], none [{}]",
                list(runs.iter().map(|r| r.ari_post)),
                list(runs.iter().map(|r| r.ari_plain))
            ),
        )
    }));

    let ablation_ok = per(&|r| r.v_l3 >= r.v_l1);
    outcomes.push(check("message-passing-steps ablation", Duration::from_secs(1), || {
        (
            ablation_ok >= 4,
            format!(
                "{ablation_ok}/5 seeds with V-m(L=3) >= V-m(L=1); L=3 [{}], L=1 [{}]",
                list(runs.iter().map(|r| r.v_l3)),
                list(runs.iter().map(|r| r.v_l1))
            ),
        )
    }));

    outcomes.push(check("training determinism", Duration::from_secs(120), determinism));

    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {}/{} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
