//! Acceptance criteria 1-10. Each criterion prints one PASS / FAIL /
//! SKIPPED line; the test fails if any criterion fails.
//!
//! Criterion 10 needs the Microsoft malware dataset laid out as
//! `$MALFAM_KAGGLE_DIR/manifest.csv` plus the files it names.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use malfam::corpus::{parse_asm, parse_hex};
use malfam::deepfeat::{
    build_entropy_cnn, build_grayscale_cnn, build_ngram_cnn, train_cnn, Arch, CnnInput, TrainParams, TrainedCnn,
    DEFAULT_OPCODE_CAP,
};
use malfam::eval::{cross_validate, cross_validate_with, kfold_plan, multiclass_logloss};
use malfam::featsel::{anova_f_scores, chi2_scores, forward_stepwise, mutual_info_scores, STEPWISE_REL_TOL};
use malfam::feature::Category;
use malfam::fusion::{contract_size, FeatureRegistry, RegistryEntry};
use malfam::gbt::{self, GbtParams, Node, Tree};
use malfam::hexfeat::chunk_entropy;
use malfam::imaging::{haralick_features_with, lbp_features, GrayImage, HaralickConfig};
use malfam::matrix::DenseMatrix;
use malfam::pipeline;
use malfam::synth::{axis_aligned_toy, planted_trigram_corpus, stepwise_matrix, TRIGRAM_VOCAB};
use malfam::tensor::{Grads, ParamId, ParamStore, Tape, Tensor, Var};

type Outcome = std::result::Result<String, String>;

enum Status {
    Pass(String),
    Fail(String),
    Skipped(String),
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn lib<T>(r: malfam::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(limit: Duration, started: Instant, detail: String) -> Outcome {
    let took = started.elapsed();
    ensure!(
        took < limit,
        "{detail}; took {:.1}s, limit {}s",
        took.as_secs_f64(),
        limit.as_secs()
    );
    Ok(format!("{detail} in {:.1}s", took.as_secs_f64()))
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

// ---------------------------------------------------------------- 1

fn random_image(rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (rng.gen_range(2..24), rng.gen_range(2..24));
    let px: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
    GrayImage::new(w, h, px).unwrap()
}

fn random_table(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>, usize) {
    let classes = rng.gen_range(2..6);
    let n = rng.gen_range(classes + 2..60);
    let mut y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for i in (1..n).rev() {
        y.swap(i, rng.gen_range(0..=i));
    }
    let cols = (0..rng.gen_range(1..6))
        .map(|_| {
            let scale = rng.gen_range(0.1..100.0);
            (0..n)
                .map(|i| y[i] as f64 * rng.gen_range(0.0..2.0) + rng.gen_range(0.0..scale))
                .collect()
        })
        .collect();
    (cols, y, classes)
}

fn to_matrix(cols: &[Vec<f64>]) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = (0..cols[0].len())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    DenseMatrix::from_rows(&rows).unwrap()
}

fn compare(what: &str, got: &[f64], want: &[f64], tol: f64) -> std::result::Result<(), String> {
    ensure!(
        got.len() == want.len(),
        "{what}: {} values, oracle {}",
        got.len(),
        want.len()
    );
    for (i, (a, b)) in got.iter().zip(want).enumerate() {
        ensure!(common::close(*a, *b, tol), "{what}[{i}]: {a} vs oracle {b}");
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fixtures = 120;
    for _ in 0..fixtures {
        let len = rng.gen_range(1..600);
        let alphabet = rng.gen_range(1..=256u32);
        let chunk: Vec<u8> = (0..len).map(|_| rng.gen_range(0..alphabet) as u8).collect();
        compare("entropy", &[chunk_entropy(&chunk)], &[common::entropy(&chunk)], 1e-9)?;

        let img = random_image(&mut rng);
        compare(
            "lbp",
            &lbp_features(&img).values,
            &common::lbp(img.width, img.height, &img.pixels),
            1e-9,
        )?;
        let levels = [8, 16, 32, 64][rng.gen_range(0..4)];
        let cfg = HaralickConfig {
            levels,
            symmetric: true,
        };
        compare(
            "haralick",
            &haralick_features_with(&img, cfg).values,
            &common::haralick(img.width, img.height, &img.pixels, levels),
            1e-9,
        )?;

        let (cols, y, classes) = random_table(&mut rng);
        let x = to_matrix(&cols);
        compare(
            "chi2",
            &lib(chi2_scores(&x, &y))?,
            &common::chi2(&cols, &y, classes),
            1e-9,
        )?;
        compare(
            "anova_f",
            &lib(anova_f_scores(&x, &y))?,
            &common::anova_f(&cols, &y, classes),
            1e-9,
        )?;
        let bins = rng.gen_range(2..40);
        compare(
            "mutual_info",
            &lib(mutual_info_scores(&x, &y, bins))?,
            &common::mutual_info(&cols, &y, bins),
            1e-12,
        )?;

        let probs: Vec<Vec<f64>> = (0..y.len())
            .map(|_| {
                let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        compare(
            "logloss",
            &[lib(multiclass_logloss(&probs, &y))?],
            &[common::logloss(&probs, &y)],
            1e-12,
        )?;
    }
    within(
        Duration::from_secs(60),
        started,
        format!("7 functions x {fixtures} fixtures agree"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=1024);
        let alphabet = rng.gen_range(1..=256u32);
        let chunk: Vec<u8> = (0..len).map(|_| rng.gen_range(0..alphabet) as u8).collect();
        let h = chunk_entropy(&chunk);
        ensure!(
            (0.0..=8.0).contains(&h),
            "entropy {h} outside [0, 8] for a {len}-byte chunk"
        );
        lo = lo.min(h);
        hi = hi.max(h);
    }
    for b in [0u8, 0x41, 0xFF] {
        let h = chunk_entropy(&[b; 256]);
        ensure!(h == 0.0, "constant chunk of {b:#04x} gave {h}");
    }
    let mut perm: Vec<u8> = (0..=255).collect();
    for i in (1..256).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let h = chunk_entropy(&perm);
    ensure!(h == 8.0, "256-byte permutation gave {h:.17}, not 8");
    Ok(format!(
        "10^4 chunks in [{lo:.3}, {hi:.3}]; constant 0; permutation exactly 8"
    ))
}

// ---------------------------------------------------------------- 3

/// Norm-wise relative error of the analytic gradient of every parameter
/// tensor, against central differences of the scalar `build` output.
fn grad_check<F>(store: &ParamStore, build: F) -> std::result::Result<f64, String>
where
    F: Fn(&mut Tape) -> malfam::Result<Var>,
{
    let h = 1e-4;
    let eval = |s: &ParamStore| -> std::result::Result<f64, String> {
        let mut tape = Tape::new(s);
        let out = lib(build(&mut tape))?;
        Ok(tape.value(out).data[0])
    };
    let mut tape = Tape::new(store);
    let out = lib(build(&mut tape))?;
    ensure!(tape.value(out).len() == 1, "check head is not scalar");
    let mut grads: Grads = store.zero_grads();
    lib(tape.backward(out, &mut grads))?;
    let mut worst = 0.0f64;
    for id in store.ids() {
        let n = store.get(id).len();
        let mut numeric = Vec::with_capacity(n);
        for k in 0..n {
            let mut s = store.clone();
            s.get_mut(id).data[k] += h;
            let up = eval(&s)?;
            s.get_mut(id).data[k] -= 2.0 * h;
            let down = eval(&s)?;
            numeric.push((up - down) / (2.0 * h));
        }
        let analytic = &grads.get(id).data;
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn);
        if scale > 1e-10 {
            worst = worst.max(diff / scale);
        } else {
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Values at least 0.01 apart in random order, so no pooling window
/// switches its winner under a 1e-4 nudge.
fn distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| i as f64 * 0.05 - 1.0 + rng.gen_range(0.0..0.01))
        .collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

fn param(s: &mut ParamStore, name: &str, shape: Vec<usize>, data: Vec<f64>) -> ParamId {
    s.insert(name, Tensor::new(shape, data).unwrap())
}

/// Adds a random linear read-out so non-scalar ops can be checked.
fn head(s: &mut ParamStore, rng: &mut ChaCha8Rng, n: usize) -> (ParamId, ParamId) {
    let w = param(s, "head_w", vec![n, 1], uniform(rng, n));
    let b = param(s, "head_b", vec![1], uniform(rng, 1));
    (w, b)
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut record = |op: &'static str, e: f64| {
        let w = worst.entry(op).or_insert(0.0);
        *w = w.max(e);
    };
    for _ in 0..20 {
        // embed
        let (v, d, len) = (rng.gen_range(2..10), rng.gen_range(1..5), rng.gen_range(1..8));
        let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..v)).collect();
        let mut s = ParamStore::new();
        let t = param(&mut s, "table", vec![v, d], uniform(&mut rng, v * d));
        let (hw, hb) = head(&mut s, &mut rng, len * d);
        record(
            "embed",
            grad_check(&s, |tp| {
                let e = tp.embed(&ids, t)?;
                tp.dense(e, hw, hb)
            })?,
        );

        // conv1d
        let (n, cin, cout) = (rng.gen_range(3..12), rng.gen_range(1..4), rng.gen_range(1..4));
        let k = rng.gen_range(1..=n.min(7));
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![n, cin], uniform(&mut rng, n * cin));
        let w = param(&mut s, "w", vec![k, cin, cout], uniform(&mut rng, k * cin * cout));
        let b = param(&mut s, "b", vec![cout], uniform(&mut rng, cout));
        let (hw, hb) = head(&mut s, &mut rng, (n - k + 1) * cout);
        record(
            "conv1d",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let c = tp.conv1d(xv, w, b)?;
                tp.dense(c, hw, hb)
            })?,
        );

        // conv2d
        let (h, wd, cin, cout) = (
            rng.gen_range(3..7),
            rng.gen_range(3..7),
            rng.gen_range(1..3),
            rng.gen_range(1..3),
        );
        let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![h, wd, cin], uniform(&mut rng, h * wd * cin));
        let w = param(
            &mut s,
            "w",
            vec![kh, kw, cin, cout],
            uniform(&mut rng, kh * kw * cin * cout),
        );
        let b = param(&mut s, "b", vec![cout], uniform(&mut rng, cout));
        let (hw, hb) = head(&mut s, &mut rng, (h - kh + 1) * (wd - kw + 1) * cout);
        record(
            "conv2d",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let c = tp.conv2d(xv, w, b)?;
                tp.dense(c, hw, hb)
            })?,
        );

        // maxpool1d
        let (n, c) = (rng.gen_range(2..12), rng.gen_range(1..4));
        let win = rng.gen_range(1..=n);
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![n, c], distinct(&mut rng, n * c));
        let (hw, hb) = head(&mut s, &mut rng, (n / win) * c);
        record(
            "maxpool1d",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let p = tp.maxpool1d(xv, win)?;
                tp.dense(p, hw, hb)
            })?,
        );

        // maxpool2d
        let (h, wd, c) = (rng.gen_range(2..8), rng.gen_range(2..8), rng.gen_range(1..3));
        let win = rng.gen_range(1..=h.min(wd));
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![h, wd, c], distinct(&mut rng, h * wd * c));
        let (hw, hb) = head(&mut s, &mut rng, (h / win) * (wd / win) * c);
        record(
            "maxpool2d",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let p = tp.maxpool2d(xv, win)?;
                tp.dense(p, hw, hb)
            })?,
        );

        // global_maxpool
        let (n, c) = (rng.gen_range(1..10), rng.gen_range(1..5));
        let valid = rng.gen_range(1..=n);
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![n, c], distinct(&mut rng, n * c));
        let (hw, hb) = head(&mut s, &mut rng, c);
        record(
            "global_maxpool",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let p = tp.global_maxpool(xv, valid)?;
                tp.dense(p, hw, hb)
            })?,
        );

        // layer_norm
        let (r, c) = (rng.gen_range(1..4), rng.gen_range(2..8));
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![r, c], uniform(&mut rng, r * c));
        let g = param(&mut s, "g", vec![c], uniform(&mut rng, c));
        let b = param(&mut s, "b", vec![c], uniform(&mut rng, c));
        let (hw, hb) = head(&mut s, &mut rng, r * c);
        record(
            "layer_norm",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let l = tp.layer_norm(xv, g, b)?;
                tp.dense(l, hw, hb)
            })?,
        );

        // dense
        let (n, m) = (rng.gen_range(1..10), rng.gen_range(1..6));
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![n], uniform(&mut rng, n));
        let w = param(&mut s, "w", vec![n, m], uniform(&mut rng, n * m));
        let b = param(&mut s, "b", vec![m], uniform(&mut rng, m));
        let (hw, hb) = head(&mut s, &mut rng, m);
        record(
            "dense",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let o = tp.dense(xv, w, b)?;
                tp.dense(o, hw, hb)
            })?,
        );

        // relu, inputs kept away from the kink
        let n = rng.gen_range(1..12);
        let vals: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.01..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![n], vals);
        let (hw, hb) = head(&mut s, &mut rng, n);
        record(
            "relu",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let o = tp.relu(xv);
                tp.dense(o, hw, hb)
            })?,
        );

        // flatten
        let (a, bb) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let mut s = ParamStore::new();
        let x = param(&mut s, "x", vec![a, bb], uniform(&mut rng, a * bb));
        let (hw, hb) = head(&mut s, &mut rng, a * bb);
        record(
            "flatten",
            grad_check(&s, |tp| {
                let xv = tp.param(x);
                let o = tp.flatten(xv);
                tp.dense(o, hw, hb)
            })?,
        );

        // concat
        let parts = rng.gen_range(1..4);
        let mut s = ParamStore::new();
        let mut ids = Vec::new();
        let mut total = 0;
        for p in 0..parts {
            let (a, bb) = (rng.gen_range(1..4), rng.gen_range(1..4));
            ids.push(param(&mut s, &format!("x{p}"), vec![a, bb], uniform(&mut rng, a * bb)));
            total += a * bb;
        }
        let (hw, hb) = head(&mut s, &mut rng, total);
        record(
            "concat",
            grad_check(&s, |tp| {
                let vs: Vec<Var> = ids.iter().map(|&i| tp.param(i)).collect();
                let o = tp.concat(&vs)?;
                tp.dense(o, hw, hb)
            })?,
        );

        // softmax_cross_entropy
        let c = rng.gen_range(2..10);
        let label = rng.gen_range(0..c);
        let mut s = ParamStore::new();
        let z: Vec<f64> = (0..c).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = param(&mut s, "z", vec![c], z);
        record(
            "softmax_cross_entropy",
            grad_check(&s, |tp| {
                let zv = tp.param(x);
                tp.softmax_cross_entropy(zv, label)
            })?,
        );
    }
    let (op, max) = worst
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (*k, *v))
        .unwrap();
    ensure!(max < 1e-4, "{op}: relative error {max:.3e}");
    within(
        Duration::from_secs(120),
        started,
        format!("{} ops x 20 shapes, worst relative error {max:.2e} ({op})", worst.len()),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let ngram = lib(build_ngram_cnn(Arch::OpcodeNgram, TRIGRAM_VOCAB, 3, DEFAULT_OPCODE_CAP))?;
    let train: Vec<(CnnInput, usize)> = planted_trigram_corpus(20, 40)
        .into_iter()
        .map(|(t, y)| (CnnInput::Tokens(t), y))
        .collect();
    let test: Vec<(CnnInput, usize)> = planted_trigram_corpus(10, 41)
        .into_iter()
        .map(|(t, y)| (CnnInput::Tokens(t), y))
        .collect();
    ensure!(
        train.len() == 60 && test.len() == 30,
        "corpus sizes {} / {}",
        train.len(),
        test.len()
    );
    // Sixty samples leave nothing to spare for an early-stopping hold-out.
    let hp = TrainParams {
        lr: 1e-2,
        batch_size: 8,
        max_epochs: 30,
        val_fraction: 0.0,
        patience: 30,
        seed: 4,
    };
    let model = lib(train_cnn(ngram, &train, &hp))?;
    ensure!(model.meta.epochs_run <= 30, "{} epochs", model.meta.epochs_run);
    let mut correct = 0;
    for (x, y) in &test {
        let p = lib(model.predict_proba(x))?;
        correct += usize::from(malfam::eval::argmax(&p) == *y);
    }
    let acc = correct as f64 / test.len() as f64;
    ensure!(
        acc >= 0.95,
        "n-gram CNN test accuracy {acc:.3} after {} epochs",
        model.meta.epochs_run
    );

    let ngram_dim = lib(model.features(&test[0].0))?.len();
    let img = lib(TrainedCnn::initialize(lib(build_grayscale_cnn(3, 32))?, 0))?;
    let img_dim = lib(img.features(&CnnInput::Image(GrayImage::filled(40, 30, 7))))?.len();
    let ent = lib(TrainedCnn::initialize(lib(build_entropy_cnn(3, 64))?, 0))?;
    let ent_dim = lib(ent.features(&CnnInput::Stream(vec![4.0; 50])))?.len();
    ensure!(
        (ngram_dim, img_dim, ent_dim) == (300, 256, 300),
        "deep block sizes n-gram {ngram_dim}, image {img_dim}, entropy {ent_dim}"
    );
    Ok(format!(
        "test accuracy {acc:.3} after {} epochs (best {}); blocks 300/256/300",
        model.meta.epochs_run, model.meta.best_epoch
    ))
}

// ---------------------------------------------------------------- 5

fn depth_of(t: &Tree) -> usize {
    let mut stack = vec![(0usize, 0usize)];
    let mut deepest = 0;
    while let Some((i, d)) = stack.pop() {
        deepest = deepest.max(d);
        if let Node::Split { left, right, .. } = &t.nodes[i] {
            stack.push((*left, d + 1));
            stack.push((*right, d + 1));
        }
    }
    deepest
}

fn criterion_5() -> Outcome {
    let (x, y) = axis_aligned_toy(5);
    let params = GbtParams {
        num_rounds: 20,
        ..GbtParams::baseline()
    };
    let model = lib(gbt::train(&x, &y, 3, &params, None))?;
    let pred = model.predict(&x);
    let acc = lib(malfam::eval::accuracy(&pred, &y))?;
    ensure!(acc == 1.0, "training accuracy {acc} after 20 rounds");
    for w in model.train_logloss.windows(2) {
        ensure!(w[1] <= w[0], "training logloss rose from {} to {}", w[0], w[1]);
    }

    let frozen = GbtParams {
        eta: 0.0,
        ..params.clone()
    };
    let m0 = lib(gbt::train(&x, &y, 3, &frozen, None))?;
    let ln3 = 3f64.ln();
    for (r, ll) in m0.train_logloss.iter().enumerate() {
        ensure!((ll - ln3).abs() <= 1e-9, "eta=0 round {r}: logloss {ll}");
    }
    let p0 = m0.predict_proba(&x);
    let ll0 = lib(multiclass_logloss(&p0, &y))?;
    ensure!((ll0 - ln3).abs() <= 1e-9, "eta=0 model logloss {ll0}");

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let noisy_y: Vec<usize> = (0..120).map(|_| rng.gen_range(0..3)).collect();
    let xn = lib(DenseMatrix::from_rows(&rows))?;
    let mut trees = 0;
    for max_depth in 1..=6 {
        let p = GbtParams {
            max_depth,
            num_rounds: 8,
            ..GbtParams::baseline()
        };
        let m = lib(gbt::train(&xn, &noisy_y, 3, &p, None))?;
        for t in m.rounds.iter().flatten() {
            ensure!(
                depth_of(t) <= max_depth,
                "tree of depth {} under max_depth {max_depth}",
                depth_of(t)
            );
            trees += 1;
        }
    }
    Ok(format!(
        "accuracy 1.0, logloss {:.4} -> {:.4} monotone; eta=0 holds ln 3; {trees} trees within depth bounds",
        model.train_logloss[0],
        model.train_logloss.last().unwrap()
    ))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let expected = [
        (Category::AsmNgramsCnn, 300),
        (Category::AsmPixel, 800),
        (Category::ByteImgCnn, 256),
        (Category::AsmApi, 794),
        (Category::AsmOpc, 93),
        (Category::AsmMd, 2),
        (Category::AsmReg, 38),
        (Category::AsmDd, 24),
        (Category::AsmSec, 24),
        (Category::AsmSym, 7),
        (Category::Byte1g, 256),
        (Category::AsmMisc, 95),
    ];
    let entry = |c: Category, n: usize| RegistryEntry {
        category: c,
        names: (0..n).map(|i| format!("{c}_{i}")).collect(),
    };
    for (c, n) in expected {
        ensure!(
            contract_size(c) == Some(n),
            "{c} contract {:?}, expected {n}",
            contract_size(c)
        );
        ensure!(
            FeatureRegistry::new(vec![entry(c, n)]).is_ok(),
            "{c} with {n} columns rejected"
        );
        for bad in [n - 1, n + 1] {
            ensure!(
                FeatureRegistry::new(vec![entry(c, bad)]).is_err(),
                "{c} with {bad} columns accepted"
            );
        }
    }

    // Every extractor's real output must pass the same registry check.
    let dir = fixtures_dir().join("corpus");
    let dump = lib(parse_hex(dir.join("fx000.bytes")))?;
    let listing = lib(parse_asm(dir.join("fx000.asm")))?;
    let raw = std::fs::read(dir.join("fx000.asm")).map_err(|e| e.to_string())?;
    let vocab = malfam::asmfeat::AsmVocabularies::default();
    let blocks = vec![
        malfam::hexfeat::byte_unigrams(&dump),
        malfam::asmfeat::asm_metadata(&listing),
        malfam::asmfeat::opcode_counts(&listing, &vocab.opcodes),
        malfam::imaging::asm_pixels(&raw, malfam::imaging::DEFAULT_ASM_PIXELS),
        malfam::asmfeat::register_counts(&listing, &vocab.registers),
        malfam::asmfeat::symbol_counts(&listing),
        malfam::asmfeat::api_counts(&listing, &vocab.apis),
        malfam::asmfeat::data_define_features(&listing),
        malfam::asmfeat::section_features(&listing),
        malfam::asmfeat::misc_keyword_counts(&listing, &vocab.misc),
    ];
    let reg = lib(FeatureRegistry::from_blocks(&blocks))?;
    for (c, n) in expected {
        if let Some(span) = reg.span(c) {
            ensure!(span.len() == n, "extracted {c} has {} columns", span.len());
        }
    }
    let deep: Vec<(Category, usize)> = Arch::ALL.iter().map(|a| (a.category(), a.feature_dim())).collect();
    for (c, n) in &deep {
        if let Some(want) = contract_size(*c) {
            ensure!(*n == want, "{c} network emits {n}");
        }
    }
    Ok(format!(
        "12 contracts enforced; {} extracted blocks conform",
        blocks.len()
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut plans = 0;
    for _ in 0..60 {
        let classes = rng.gen_range(2..10);
        let k = rng.gen_range(2..11);
        let n = rng.gen_range(classes * k..200);
        let mut y: Vec<usize> = (0..n).map(|i| i % classes).collect();
        for i in (classes..n).rev() {
            let j = rng.gen_range(classes..=i);
            y[i] = rng.gen_range(0..classes);
            y.swap(i, j);
        }
        // Keep every class at k or more members so stratification applies.
        let mut counts = vec![0; classes];
        for &l in &y {
            counts[l] += 1;
        }
        if counts.iter().any(|&c| c < k) {
            continue;
        }
        let ids: Vec<String> = (0..n).map(|i| format!("sample{i:04}")).collect();
        for stratified in [false, true] {
            let plan = lib(kfold_plan(&y, k, stratified, rng.gen()))?;
            plans += 1;
            let mut seen = vec![0; n];
            for f in 0..k {
                let test: BTreeSet<&str> = plan.test_indices(f).iter().map(|&i| ids[i].as_str()).collect();
                let train: BTreeSet<&str> = plan.train_indices(f).iter().map(|&i| ids[i].as_str()).collect();
                ensure!(test.is_disjoint(&train), "fold {f} shares ids between train and test");
                ensure!(
                    test.len() + train.len() == n,
                    "fold {f} covers {} of {n}",
                    test.len() + train.len()
                );
                ensure!(!test.is_empty(), "fold {f} is empty");
                for i in plan.test_indices(f) {
                    seen[i] += 1;
                }
            }
            ensure!(seen.iter().all(|&s| s == 1), "folds do not partition the samples");
            if stratified {
                for c in 0..classes {
                    let per: Vec<usize> = (0..k)
                        .map(|f| plan.test_indices(f).iter().filter(|&&i| y[i] == c).count())
                        .collect();
                    let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
                    ensure!(hi - lo <= 1, "class {c} spread {per:?} across folds");
                }
            }
        }
        // ln C is reached up to the rounding of 1/C itself: the mean over
        // samples and folds must reproduce the single-sample term bit for
        // bit, and that term sits within 2 ulp of ln C.
        let plan = lib(kfold_plan(&y, k, true, 3))?;
        let uniform = vec![1.0 / classes as f64; classes];
        let term = -uniform[0].ln();
        let ln_c = (classes as f64).ln();
        ensure!(
            (term - ln_c).abs() <= 2.0 * f64::EPSILON * ln_c,
            "-ln(1/{classes}) = {term:.17}"
        );
        let direct = lib(multiclass_logloss(&vec![uniform.clone(); n], &y))?;
        ensure!(
            direct == term,
            "uniform logloss {direct:.17} vs {term:.17} (ln {classes})"
        );
        let report = lib(cross_validate_with(&y, &plan, serde_json::Value::Null, |_, _, test| {
            Ok(vec![uniform.clone(); test.len()])
        }))?;
        ensure!(
            report.mean_logloss == term,
            "uniform CV logloss {:.17} vs {term:.17}",
            report.mean_logloss
        );
        for c in [2usize, 4, 8] {
            let u = vec![vec![1.0 / c as f64; c]; 3 * c];
            let yy: Vec<usize> = (0..3 * c).map(|i| i % c).collect();
            let ll = lib(multiclass_logloss(&u, &yy))?;
            ensure!(ll == (c as f64).ln(), "uniform logloss {ll:.17} vs ln {c}");
        }
    }
    ensure!(plans >= 60, "only {plans} plans exercised");
    Ok(format!(
        "{plans} fold plans partition, disjoint by id, stratified within 1; uniform logloss = ln C"
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let m = lib(stepwise_matrix(90, 3, 8))?;
    let params = GbtParams {
        num_rounds: 30,
        ..GbtParams::baseline()
    };
    let (folds, seed) = (5, 8);
    let cats = m.registry.categories();
    let trace = lib(forward_stepwise(&m, &cats, folds, &params, seed))?;
    ensure!(
        trace.steps.first().map(|s| s.added) == Some(Category::ByteMd),
        "first addition {:?}",
        trace.steps.first().map(|s| s.added)
    );
    ensure!(
        trace.selected() == vec![Category::ByteMd],
        "stepwise kept {:?}",
        trace.selected()
    );

    let (rows, y) = m.labeled();
    let sub = m.select_rows(&rows);
    let plan = lib(kfold_plan(&y, folds, true, seed))?;
    let mut best: Option<(Vec<Category>, f64, usize)> = None;
    let mut table = Vec::new();
    for mask in 1u32..(1 << cats.len()) {
        let set: Vec<Category> = cats
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| *c)
            .collect();
        let s = lib(sub.select_categories(&set))?;
        let ll = lib(cross_validate(&s.values, &y, m.num_classes, &params, &plan))?.mean_logloss;
        let width = s.values.n_cols;
        table.push(format!("{set:?}={ll:.6}"));
        let better = match &best {
            None => true,
            Some((_, bl, bw)) => {
                ll < bl - STEPWISE_REL_TOL * bl.max(1.0) || (ll <= bl + STEPWISE_REL_TOL * bl.max(1.0) && width < *bw)
            }
        };
        if better {
            best = Some((set, ll, width));
        }
    }
    let (best_set, best_ll, _) = best.unwrap();
    ensure!(
        best_set == trace.selected(),
        "exhaustive optimum {best_set:?} differs; {}",
        table.join(", ")
    );
    Ok(format!(
        "added BYTE_MD first (cv logloss {:.4}), stopped there; exhaustive optimum over 7 subsets agrees ({best_ll:.4})",
        trace.steps[0].cv_logloss
    ))
}

// ---------------------------------------------------------------- 9

fn run_pipeline(root: &Path) -> std::result::Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_malfam");
    let config = root.join("pipeline.toml");
    let text = std::fs::read_to_string(fixtures_dir().join("pipeline.toml")).map_err(|e| e.to_string())?;
    std::fs::write(&config, text).map_err(|e| e.to_string())?;
    copy_dir(&fixtures_dir().join("corpus"), &root.join("corpus"))?;
    let out = root.join("out");
    let model = out.join("models").join("gbt-final.bin");
    let steps: Vec<Vec<String>> = vec![
        vec!["extract".into()],
        vec!["train-cnn".into(), "--arch".into(), "gray-image".into()],
        vec!["train-cnn".into(), "--arch".into(), "entropy-stream".into()],
        vec!["train-cnn".into(), "--arch".into(), "byte-ngram".into()],
        vec!["train-cnn".into(), "--arch".into(), "opcode-ngram".into()],
        vec!["train-gbt".into(), "--preset".into(), "final".into()],
        vec!["evaluate".into(), "--preset".into(), "all".into()],
        vec![
            "evaluate".into(),
            "--preset".into(),
            "hand-crafted".into(),
            "--per-category".into(),
        ],
        vec![
            "select".into(),
            "--preset".into(),
            "all".into(),
            "--method".into(),
            "chi2".into(),
        ],
        vec![
            "select".into(),
            "--preset".into(),
            "all".into(),
            "--method".into(),
            "anova-f".into(),
        ],
        vec![
            "select".into(),
            "--preset".into(),
            "all".into(),
            "--method".into(),
            "mutual-info".into(),
        ],
        vec!["stepwise".into(), "--preset".into(), "all".into()],
        vec![
            "predict".into(),
            "--model".into(),
            model.display().to_string(),
            "--out".into(),
            out.join("submission.csv").display().to_string(),
        ],
        vec![
            "importance".into(),
            "--model".into(),
            model.display().to_string(),
            "--kind".into(),
            "gain".into(),
        ],
        vec![
            "importance".into(),
            "--model".into(),
            model.display().to_string(),
            "--kind".into(),
            "weight".into(),
        ],
    ];
    for args in steps {
        let o = Command::new(bin)
            .arg("--config")
            .arg(&config)
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            o.status.success(),
            "malfam {} exited {:?}: {}",
            args.join(" "),
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        );
    }
    Ok(())
}

fn copy_dir(from: &Path, to: &Path) -> std::result::Result<(), String> {
    std::fs::create_dir_all(to).map_err(|e| e.to_string())?;
    for e in std::fs::read_dir(from).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        std::fs::copy(e.path(), to.join(e.file_name())).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let started = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let fa = files_under(&a.path().join("out"));
    let fb = files_under(&b.path().join("out"));
    ensure!(
        fa.keys().collect::<Vec<_>>() == fb.keys().collect::<Vec<_>>(),
        "runs wrote different file sets"
    );
    for (p, bytes) in &fa {
        ensure!(fb[p] == *bytes, "{} differs between runs", p.display());
    }
    let kinds = |ext: &str| fa.keys().filter(|p| p.extension().is_some_and(|e| e == ext)).count();
    ensure!(fa.contains_key(Path::new("features.bin")), "no feature store written");
    within(
        Duration::from_secs(600),
        started,
        format!(
            "{} artifacts identical across two runs ({} .bin, {} .json, {} .csv)",
            fa.len(),
            kinds("bin"),
            kinds("json"),
            kinds("csv")
        ),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Status {
    let Some(dir) = std::env::var_os("MALFAM_KAGGLE_DIR").map(PathBuf::from) else {
        return Status::Skipped("MALFAM_KAGGLE_DIR not set".into());
    };
    match kaggle_asm_misc(&dir) {
        Ok(d) => Status::Pass(d),
        Err(e) => Status::Fail(e),
    }
}

fn kaggle_asm_misc(dir: &Path) -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = work.path().join("kaggle.toml");
    let text = format!(
        "[paths]\nmanifest = {:?}\nstore = \"features.bin\"\nmodel_dir = \"models\"\nreport_dir = \"reports\"\n\n\
         [data]\nnum_classes = 9\n\n[extract]\ncategories = [\"ASM_MISC\"]\n\n[eval]\nfolds = 10\nstratified = true\nseed = 0\n",
        dir.join("manifest.csv").display().to_string()
    );
    std::fs::write(&config, text).map_err(|e| e.to_string())?;
    let cfg = lib(pipeline::load_config(&config, &[]))?;
    let (summary, _) = lib(pipeline::cmd_extract(&cfg))?;
    let (report, _) = lib(pipeline::cmd_evaluate(&cfg, "ASM_MISC"))?;
    ensure!(
        report.mean_accuracy >= 0.98,
        "ASM_MISC 10-fold accuracy {:.4} (logloss {:.4})",
        report.mean_accuracy,
        report.mean_logloss
    );
    Ok(format!(
        "ASM_MISC 10-fold accuracy {:.4}, logloss {:.4} on {} samples ({} skipped)",
        report.mean_accuracy,
        report.mean_logloss,
        summary.rows,
        summary.skipped.len()
    ))
}

// ----------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn() -> Status)> = vec![
        ("oracle equivalence", || wrap(criterion_1())),
        ("entropy bounds", || wrap(criterion_2())),
        ("gradient checks", || wrap(criterion_3())),
        ("cnn learnability", || wrap(criterion_4())),
        ("gbt correctness", || wrap(criterion_5())),
        ("feature-count contracts", || wrap(criterion_6())),
        ("cv harness", || wrap(criterion_7())),
        ("stepwise selection", || wrap(criterion_8())),
        ("determinism", || wrap(criterion_9())),
        ("kaggle ASM_MISC", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        match run() {
            Status::Pass(d) => report(format!("criterion {n:>2} PASS    {name}: {d}")),
            Status::Skipped(d) => report(format!("criterion {n:>2} SKIPPED {name}: {d}")),
            Status::Fail(d) => {
                report(format!("criterion {n:>2} FAIL    {name}: {d}"));
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// Written to the process stdout directly so the verdicts show up even
/// when the harness captures test output.
fn report(line: String) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn wrap(o: Outcome) -> Status {
    match o {
        Ok(d) => Status::Pass(d),
        Err(e) => Status::Fail(e),
    }
}
