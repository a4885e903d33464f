//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

mod common;

use std::collections::BTreeSet;
use std::panic::catch_unwind;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use immuno_core::assembly::{assemble, SupertypeRequirement};
use immuno_core::dynamics::{
    convergence_ratio, dose_sweep, log_grid, simulate_cd8, simulate_proliferation, Cd8Params, ImmuneState,
    ProliferationParams,
};
use immuno_core::metrics::{ConfusionMatrix, MetricReport};
use immuno_core::numcore::{adam_step, grad_check, Activation, AdamConfig, DenseArray, Layer, Mode, ParamStore};
use immuno_core::pipeline::{
    generate_candidates, train_gan, AutoencoderConfig, AutoencoderSelector, CnnClassifier, CnnConfig, Gan, GanConfig,
};
use immuno_core::predictor::{train_model1, Model1, Model1Config, TrainConfig};
use immuno_core::seqdata::{generate_synthetic, split_dataset, EpitopeRecord, Peptide, DEFAULT_MOTIF};

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = (u8, &'static str, fn() -> Verdict);

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(t: Instant, budget: Duration) -> (bool, Duration) {
    let e = t.elapsed();
    (e < budget, e)
}

// 1. Fig. S1 counts through the metric formulas
fn metric_formulas() -> Verdict {
    let t = Instant::now();
    let r = MetricReport::from_counts(ConfusionMatrix::new(2434, 2448, 53, 65), 0.5).unwrap();
    let expect = [
        ("accuracy", r.accuracy, 0.9764),
        ("precision", r.precision.unwrap(), 0.9787),
        ("recall", r.recall.unwrap(), 0.9740),
        ("f1", r.f1.unwrap(), 0.9763),
    ];
    let (fast, e) = within(t, Duration::from_secs(1));
    let bad: Vec<String> =
        expect.iter().filter(|(_, got, want)| (got - want).abs() > 1e-4).map(|(n, g, w)| format!("{n}={g} (want {w})")).collect();
    let detail = format!(
        "acc {:.4} prec {:.4} rec {:.4} f1 {:.4} in {e:.2?}{}",
        expect[0].1,
        expect[1].1,
        expect[2].1,
        expect[3].1,
        if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join(", ")) }
    );
    verdict(bad.is_empty() && fast, detail)
}

// 2. Fig. S2 ranking through `immuno rank`
fn fig_s2_ranking() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let data = fixture("fig_s2.csv");
    ok(dir.path(), &["rank", "--data", data.to_str().unwrap(), "--out", "rank"]);
    let (fast, e) = within(t, Duration::from_secs(1));
    let csv = std::fs::read_to_string(dir.path().join("rank/ranked.csv")).unwrap();
    let order: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let tail: BTreeSet<&str> = order.iter().rev().take(2).copied().collect();
    let pass = order.len() == 5 && order[0] == "YLQPRTFLL" && tail == BTreeSet::from(["LSPRWYFYI", "SPRWYFYLL"]) && fast;
    verdict(pass, format!("order {} in {e:.2?}", order.join(" > ")))
}

fn accuracy(model: &Model1, recs: &[&EpitopeRecord]) -> f64 {
    let peps: Vec<Peptide> = recs.iter().map(|r| r.peptide.clone()).collect();
    let out = model.predict(&peps).unwrap();
    let hits = out.iter().zip(recs).filter(|(o, r)| (o.immunogenicity_prob >= 0.5) == r.immunogenic).count();
    hits as f64 / recs.len() as f64
}

// 3. Desk-scale Model 1 training
fn model1_training() -> Verdict {
    let t = Instant::now();
    let data = generate_synthetic(5000, &DEFAULT_MOTIF.parse().unwrap(), 0.9, 7).unwrap();
    let data = split_dataset(data, 0.8, 7).unwrap();
    let cfg = TrainConfig {
        seed: 7,
        ..Default::default()
    };
    let (model, report) = train_model1(&data, &cfg).unwrap();
    let (fast, e) = within(t, Duration::from_secs(300));
    let held_out = accuracy(&model, &data.test().unwrap());
    let train_acc = accuracy(&model, &data.train().unwrap());
    let first = report.train_loss[0];
    let last = *report.train_loss.last().unwrap();
    let gap = (train_acc - held_out).abs();
    let pass = held_out >= 0.90 && last <= 0.5 * first && gap <= 0.1 && report.epochs_run() <= 100 && fast;
    verdict(
        pass,
        format!(
            "held-out acc {held_out:.4}, train acc {train_acc:.4} (gap {gap:.4}), loss {first:.3} -> {last:.3} ({:.1}%), {} epochs, {e:.1?}",
            100.0 * last / first,
            report.epochs_run()
        ),
    )
}

// 4. Finite-difference gradient checks for every layer and model
fn gradient_checks() -> Verdict {
    let t = Instant::now();
    let mut r = rng(4);
    let mut worst: Vec<(String, f64)> = Vec::new();
    let tokens = DenseArray::vector((0..6).map(|_| r.gen_range(0..20) as f64).collect());
    worst.push(("embedding".into(), layer_grad_error(&Layer::embedding("e", 20, 8), tokens, Mode::Eval, 1, false)));
    for act in [Activation::Identity, Activation::Tanh, Activation::Sigmoid] {
        let x = random_matrix(&mut r, 4, 6);
        worst.push((format!("dense/{act:?}"), layer_grad_error(&Layer::dense("d", 6, 5, act), x, Mode::Eval, 2, true)));
    }
    let x = random_matrix(&mut r, 5, 8);
    worst.push(("self_attention".into(), layer_grad_error(&Layer::self_attention("a", 8, 2), x, Mode::Eval, 3, true)));
    let x = random_matrix(&mut r, 7, 4);
    worst.push(("conv1d".into(), layer_grad_error(&Layer::conv1d("c", 3, 4, 6), x, Mode::Eval, 4, true)));
    let x = random_matrix(&mut r, 3, 5);
    worst.push(("softmax".into(), layer_grad_error(&Layer::Softmax, x, Mode::Eval, 5, true)));
    let x = random_matrix(&mut r, 3, 5);
    worst.push(("dropout".into(), layer_grad_error(&Layer::Dropout { rate: 0.3 }, x, Mode::Train, 6, true)));

    let data = generate_synthetic(40, &DEFAULT_MOTIF.parse().unwrap(), 0.9, 4).unwrap();
    let batch: Vec<EpitopeRecord> = data.records[..6].to_vec();
    let m1 = Model1::new(Model1Config::default(), 1).unwrap();
    let mut s = m1.params.clone();
    worst.push(("model1".into(), grad_check(|s: &mut ParamStore| m1.loss_and_grad(s, &batch), &mut s, 50, 7).unwrap()));
    let cnn = CnnClassifier::new(CnnConfig::default(), 2).unwrap();
    let mut s = cnn.params.clone();
    worst.push(("cnn".into(), grad_check(|s: &mut ParamStore| cnn.loss_and_grad(s, &batch), &mut s, 50, 8).unwrap()));
    let ae = AutoencoderSelector::new(AutoencoderConfig::default(), 3).unwrap();
    let mut s = ae.params.clone();
    worst.push(("autoencoder".into(), grad_check(|s: &mut ParamStore| ae.loss_and_grad(s, &batch), &mut s, 50, 9).unwrap()));
    let gan = Gan::new(GanConfig::default(), 4).unwrap();
    let real: Vec<Peptide> = batch.iter().map(|r| r.peptide.clone()).collect();
    let fake = gan.sample_stochastic(real.len(), 5).unwrap();
    let mut s = gan.discriminator.clone();
    worst.push((
        "gan discriminator".into(),
        grad_check(|s: &mut ParamStore| gan.discriminator_loss_and_grad(s, &real, &fake), &mut s, 50, 10).unwrap(),
    ));

    let (fast, e) = within(t, Duration::from_secs(120));
    let (name, max) = worst.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let failing: Vec<&str> = worst.iter().filter(|(_, v)| v.is_nan() || *v >= 1e-4).map(|(n, _)| n.as_str()).collect();
    verdict(
        failing.is_empty() && fast,
        format!("{} checks, max rel err {max:.2e} ({name}), {e:.2?}{}", worst.len(), if failing.is_empty() { String::new() } else { format!("; failing: {failing:?}") }),
    )
}

use rand::Rng;

// 5. Adam hand example and constant-gradient limit
fn adam_oracle() -> Verdict {
    let cfg = AdamConfig::default();
    let mut store = ParamStore::new();
    store.insert("theta", DenseArray::vector(vec![0.5]));
    store.grad_mut("theta").unwrap().data_mut()[0] = 1.0;
    adam_step(&mut store, &cfg).unwrap();
    let p = store.get("theta").unwrap();
    let (m, v, theta) = (p.m.data()[0], p.v.data()[0], p.value.data()[0]);
    // m̂ = m / (1 − β₁) = 1, v̂ = v / (1 − β₂) = 1
    let step = theta - 0.5;
    let want = -1e-3 * 1.0 / (1.0 + 1e-8);
    let single = (m - 0.1).abs() < 1e-9 && (v - 0.001).abs() < 1e-9 && (step - want).abs() < 1e-9;

    let mut store = ParamStore::new();
    store.insert("theta", DenseArray::vector(vec![0.0]));
    let mut last = 0.0;
    for _ in 0..1000 {
        let before = store.value("theta").unwrap().data()[0];
        store.grad_mut("theta").unwrap().data_mut()[0] = 0.37;
        adam_step(&mut store, &cfg).unwrap();
        last = store.value("theta").unwrap().data()[0] - before;
    }
    let limit = (last.abs() - 1e-3).abs() / 1e-3 < 0.01;
    verdict(single && limit, format!("m {m}, v {v}, step {step:.12}; step 1000 magnitude {:.9}", last.abs()))
}

// 6. Proliferation closed form and Fig. S3 dose ordering
fn proliferation() -> Verdict {
    let params = ProliferationParams::default();
    let traj = simulate_proliferation(&params, |_| 1e12, immuno_core::dynamics::DEFAULT_STEP).unwrap();
    let closed = 100.0 * 7f64.exp();
    let rel = (traj.final_count() - closed).abs() / closed;
    let grid = log_grid(1e-4, 10.0, 41).unwrap();
    let low = dose_sweep(&ProliferationParams { h: 0.01, ..params }, &grid, 0.01).unwrap();
    let high = dose_sweep(&ProliferationParams { h: 0.1, ..params }, &grid, 0.01).unwrap();
    let ordered = low.iter().zip(&high).filter(|(a, b)| a.1 > b.1).count();
    verdict(
        rel < 1e-3 && ordered == grid.len(),
        format!(
            "T(7) = {:.1} vs {closed:.1} (rel {rel:.2e}); h=0.01 above h=0.1 at {ordered}/{} grid points",
            traj.final_count(),
            grid.len()
        ),
    )
}

// 7. CD8 integrator order and decay-only exact solution
fn cd8_oracles() -> Verdict {
    let ratios: Vec<f64> = [0.1, 0.05, 0.02]
        .iter()
        .map(|&h| convergence_ratio(&Cd8Params::default(), ImmuneState::default(), 10.0, h).unwrap())
        .collect();
    let order_ok = ratios.iter().all(|r| (12.0..=20.0).contains(r));
    let decay = Cd8Params {
        beta_t: 0.0,
        beta_tv: 0.0,
        p: 0.0,
        ..Default::default()
    };
    let init = ImmuneState {
        t_cells: 1.0,
        infected: 0.0,
        effectors: 0.0,
        virus: 2.0,
    };
    let traj = simulate_cd8(&decay, init, 10.0, 0.01).unwrap();
    let max_rel = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| {
            let exact = 2.0 * (-decay.c_v * t).exp();
            (s.virus - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    verdict(
        order_ok && max_rel < 1e-6,
        format!("halving ratios {ratios:.2?}; decay-only max rel err {max_rel:.2e}"),
    )
}

// 8. Greedy assembly vs exhaustive search
fn assembly_oracle() -> Verdict {
    let t = Instant::now();
    let mut r = rng(8);
    let req = SupertypeRequirement::default();
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = r.gen_range(1..=8);
        let k = r.gen_range(1..=4);
        let pool = random_pool(&mut r, n);
        let c = assemble(&pool, &req, k).unwrap();
        let (cov, total) = exhaustive_best(&pool, k);
        let got_cov = req.required.len() - c.missing.len();
        if got_cov != cov || (c.total_priority - total).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    let (fast, e) = within(t, Duration::from_secs(60));
    verdict(mismatches == 0 && fast, format!("{mismatches}/200 pools differ from exhaustive search, {e:.2?}"))
}

// 9. GAN picks up the planted motif
fn gan_signal() -> Verdict {
    let motif: Peptide = DEFAULT_MOTIF.parse().unwrap();
    let data = split_dataset(generate_synthetic(5000, &motif, 0.9, 7).unwrap(), 0.8, 7).unwrap();
    let pos = |recs: Vec<&EpitopeRecord>| -> Vec<Peptide> {
        recs.into_iter().filter(|r| r.immunogenic).map(|r| r.peptide.clone()).collect()
    };
    let (train, held_out) = (pos(data.train().unwrap()), pos(data.test().unwrap()));
    let cfg = TrainConfig {
        epochs: 10,
        seed: 7,
        ..Default::default()
    };
    let gan = train_gan(&train, &cfg).unwrap();
    let samples = generate_candidates(&gan, 1000, 11).unwrap();
    let rate = samples.iter().filter(|s| s.peptide.contains(&motif)).count() as f64 / samples.len() as f64;

    // brute-force baseline: motif frequency among uniform random 9-mers
    let mut r = rng(12);
    let draws = 1_000_000;
    let hits = (0..draws).filter(|_| random_peptide(&mut r, 9).contains(&motif)).count();
    let baseline = hits as f64 / draws as f64;

    let fake = gan.sample_stochastic(held_out.len(), 13).unwrap();
    let probe = gan.discriminator_accuracy(&held_out, &fake).unwrap();
    verdict(
        rate >= 3.0 * baseline && (0.3..=0.95).contains(&probe),
        format!("motif rate {rate:.4} vs baseline {baseline:.5} ({:.0}x); probe accuracy {probe:.3}", rate / baseline),
    )
}

fn replay(cwd: &Path, out: &str) -> Result<(), String> {
    let orig = format!("{out}.orig");
    std::fs::rename(cwd.join(out), cwd.join(&orig)).unwrap();
    ok(cwd, &["run", &format!("{orig}/config.toml")]);
    let (a, b) = (tree(&cwd.join(&orig)), tree(&cwd.join(out)));
    if a == b {
        Ok(())
    } else {
        let differ: Vec<_> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).collect();
        Err(format!("{out}: {differ:?}"))
    }
}

// 10. Every CLI snapshot replays byte-for-byte
fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s2_full = fixture("fig_s2_full.csv");
    let s2_full = s2_full.to_str().unwrap();
    ok(d, &["gen", "--n", "800", "--seed", "5", "--out", "corpus.csv"]);
    let mut outs = Vec::new();
    for m in ["model1", "cnn", "autoencoder", "gan"] {
        let out = format!("train_{m}");
        ok(d, &["train", "--model", m, "--data", "corpus.csv", "--seed", "5", "--epochs", "3", "--out", &out]);
        outs.push(out);
    }
    let runs: [&[&str]; 7] = [
        &["eval", "--checkpoint", "train_model1", "--data", "train_model1/heldout.csv", "--out", "eval"],
        &["eval", "--from-counts", "tp=2434,tn=2448,fp=53,fn=65", "--out", "eval_counts"],
        &["rank", "--data", "train_autoencoder/heldout.csv", "--checkpoint", "train_autoencoder", "--out", "rank"],
        &["assemble", "--data", s2_full, "--k", "4", "--out", "assemble"],
        &["simulate", "--model", "prolif", "--svg", "--out", "sim_prolif"],
        &["simulate", "--model", "cd8", "--days", "5", "--check-convergence", "--svg", "--out", "sim_cd8"],
        &["sweep", "--h", "0.01", "--h", "0.1", "--svg", "--out", "sweep"],
    ];
    for args in runs {
        ok(d, args);
        outs.push(args[args.len() - 1].to_string());
    }

    let mut failures = Vec::new();
    let before = (std::fs::read(d.join("corpus.csv")).unwrap(), std::fs::read(d.join("corpus.config.toml")).unwrap());
    std::fs::rename(d.join("corpus.config.toml"), d.join("corpus.orig.toml")).unwrap();
    ok(d, &["run", "corpus.orig.toml"]);
    let after = (std::fs::read(d.join("corpus.csv")).unwrap(), std::fs::read(d.join("corpus.config.toml")).unwrap());
    if before != after {
        failures.push("gen".to_string());
    }
    for out in &outs {
        if let Err(e) = replay(d, out) {
            failures.push(e);
        }
    }
    let files: usize = outs.iter().map(|o| tree(&d.join(o)).len()).sum::<usize>() + 2;
    verdict(
        failures.is_empty(),
        format!("{} snapshots, {files} files replayed{}", outs.len() + 1, if failures.is_empty() { String::new() } else { format!("; differing: {failures:?}") }),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "metric formulas on Fig. S1 counts", metric_formulas),
        (2, "Fig. S2 ranking via `rank`", fig_s2_ranking),
        (3, "Model 1 desk-scale training", model1_training),
        (4, "finite-difference gradient checks", gradient_checks),
        (5, "Adam oracle", adam_oracle),
        (6, "proliferation closed form and dose ordering", proliferation),
        (7, "CD8 convergence order and decay oracle", cd8_oracles),
        (8, "greedy assembly vs exhaustive search", assembly_oracle),
        (9, "GAN motif acquisition and probe accuracy", gan_signal),
        (10, "CLI snapshot determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let v = catch_unwind(check).unwrap_or_else(|_| verdict(false, "panicked"));
        if !v.pass {
            failed += 1;
        }
        println!("criterion {id:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
