//! Acceptance criteria, one line per criterion. Runs under `cargo test`
//! and on its own with `cargo test --test acceptance`.
//!
//! AC9 needs real cohort files and a live endpoint; point
//! `SUSCEPTSIM_REPLAY_CONFIG` at a run configuration to enable it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use susceptsim::adapter::{
    ft_shortcut_metrics, phase1_batch_loss, phase1_loss_and_grad, phase1_train_from,
    phase2_loss_and_grad, phase2_train, AdamWConfig, BeliefAdapter, Matrix, Perturbation,
    Phase1Example, Phase2Example, SusceptibilityHead, TrainConfig,
};
use susceptsim::analysis::{nmf, paired_t_test, tfidf, two_proportion_z_test};
use susceptsim::belief_store::BeliefStore;
use susceptsim::cohort::{Cohort, EntropyBin, Label};
use susceptsim::config::RunConfig;
use susceptsim::counterfactual::{
    build_balanced_slice, complementarity_panel, shortcut_panel, utility_panel, PanelConfig,
    PanelResult, SwapPair,
};
use susceptsim::demographics::{Axis, Group};
use susceptsim::divergence::{js_divergence_bits, kl_divergence};
use susceptsim::gateway::{Gateway, MockBackend, ModelEndpoint, PredictionRecord};
use susceptsim::pipeline::{gateways, read_records, run_all, run_sweep_stage, RunOptions, Workspace};
use susceptsim::prompt::{BeliefSource, ConditionSpec};
use susceptsim::report::score_settings;
use susceptsim::sim::{
    accuracy_by_entropy_bin, run_sweep, susceptibility_alignment, veracity_accuracy, SweepPlan,
};
use susceptsim::synth::{self, write_fixtures, CohortSpec, FixtureSpec};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs {b} (tol {tol})"))
    }
}

fn lib<T>(r: susceptsim::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- oracles

/// Reads the verdict straight off the scripted reply text.
fn reply_label(r: &PredictionRecord) -> Option<Label> {
    match r.raw_text.as_str() {
        "true" => Some(Label::True),
        "fake" => Some(Label::Fake),
        _ => None,
    }
}

fn judgment_table(c: &Cohort) -> BTreeMap<(String, String), (Label, Label)> {
    c.judgments()
        .iter()
        .map(|j| ((j.pid.clone(), j.claim_id.clone()), (j.participant_choice, j.gold_label)))
        .collect()
}

/// (hits, parseable) against the choice (`gold = false`) or gold column.
fn tally(records: &[&PredictionRecord], table: &BTreeMap<(String, String), (Label, Label)>, gold: bool) -> (usize, usize) {
    let mut hit = 0;
    let mut n = 0;
    for r in records {
        let Some(p) = reply_label(r) else { continue };
        let (choice, g) = table[&(r.pid.clone(), r.claim_id.clone())];
        n += 1;
        if p == if gold { g } else { choice } {
            hit += 1;
        }
    }
    (hit, n)
}

fn brute_macro_f1(pairs: &[(Label, Label)]) -> f64 {
    let mut f = 0.0;
    for class in [Label::True, Label::Fake] {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for (p, t) in pairs {
            match (*p == class, *t == class) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        if precision + recall > 0.0 {
            f += 2.0 * precision * recall / (precision + recall);
        }
    }
    f / 2.0
}

/// A claim is Low when fewer than ceil(n/3) claims have strictly smaller
/// entropy, Mid when fewer than ceil(2n/3) do.
fn brute_bins(c: &Cohort) -> BTreeMap<String, EntropyBin> {
    let mut counts: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for j in c.judgments() {
        let e = counts.entry(j.claim_id.clone()).or_default();
        if j.participant_choice == Label::True {
            e.0 += 1.0;
        } else {
            e.1 += 1.0;
        }
    }
    let h: BTreeMap<String, f64> = counts
        .into_iter()
        .map(|(id, (t, f))| {
            let n = t + f;
            let term = |x: f64| if x > 0.0 { -(x / n) * (x / n).log2() } else { 0.0 };
            (id, term(t) + term(f))
        })
        .collect();
    let n = h.len();
    h.iter()
        .map(|(id, e)| {
            let below = h.values().filter(|x| *x < e).count();
            let bin = if below < n.div_ceil(3) {
                EntropyBin::Low
            } else if below < (2 * n).div_ceil(3) {
                EntropyBin::Mid
            } else {
                EntropyBin::High
            };
            (id.clone(), bin)
        })
        .collect()
}

fn brute_modal_disagreement(store: &BeliefStore, axis: Axis) -> f64 {
    let [a, b] = axis.groups();
    let argmax = |p: &[f64]| {
        let mut best = 0;
        for i in 1..p.len() {
            if p[i] > p[best] {
                best = i;
            }
        }
        best
    };
    let mut n = 0.0;
    let mut differ = 0.0;
    for q in store.questions() {
        let (Some(x), Some(y)) = (store.distribution(&q.qid, a), store.distribution(&q.qid, b)) else {
            continue;
        };
        n += 1.0;
        if argmax(&x.probs) != argmax(&y.probs) {
            differ += 1.0;
        }
    }
    100.0 * differ / n
}

fn brute_flip_rate(pairs: &[SwapPair]) -> Option<f64> {
    let mut n = 0.0;
    let mut flips = 0.0;
    for p in pairs {
        if let (Some(a), Some(b)) = (reply_label(&p.base), reply_label(&p.swapped)) {
            n += 1.0;
            if a != b {
                flips += 1.0;
            }
        }
    }
    (n > 0.0).then(|| 100.0 * flips / n)
}

fn scripted_backend() -> MockBackend {
    MockBackend::from_fn(|r| {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ r.seed;
        for b in r.system.bytes().chain(r.user.bytes()) {
            h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
        match h % 9 {
            0 => "unsure".to_string(),
            x if x % 2 == 1 => "true".to_string(),
            _ => "fake".to_string(),
        }
    })
}

fn mock_gateway(name: &str, backend: MockBackend) -> Result<Gateway, String> {
    lib(Gateway::new(ModelEndpoint::new(name, "mock://"), Arc::new(backend)))
}

// ---------------------------------------------------------------- AC1

fn ac1() -> Check {
    let start = Instant::now();
    let store = lib(synth::belief_store(4, 0.5))?;
    let cohort = lib(synth::cohort(&CohortSpec {
        n_participants: 50,
        n_claims: 12,
        seed: 21,
        ..CohortSpec::default()
    }))?;
    let gw = mock_gateway("scripted", scripted_backend())?;
    let conditions = vec![
        ConditionSpec::zero_shot(),
        ConditionSpec::demo_only(),
        ConditionSpec::with_beliefs(BeliefSource::Observed, true),
    ];
    let plan = SweepPlan {
        conditions: conditions.clone(),
        axes: vec![Axis::Gender, Axis::Age],
        runs: 2,
        ..SweepPlan::default()
    };
    let out = lib(run_sweep(&store, &cohort, std::slice::from_ref(&gw), &plan))?;
    ensure!(out.failures.is_empty(), "sweep failures: {:?}", out.failures.first());
    let table = judgment_table(&cohort);
    let bins = brute_bins(&cohort);
    let mut checked = 0;
    for c in &conditions {
        let fp = c.fingerprint();
        let rs: Vec<&PredictionRecord> = out.records.iter().filter(|r| r.condition_fingerprint == fp).collect();
        ensure!(!rs.is_empty(), "no records for {}", c.label());

        let a = lib(susceptibility_alignment(rs.iter().copied(), &cohort))?;
        let (hit, n) = tally(&rs, &table, false);
        close(a.accuracy.unwrap(), hit as f64 / n as f64, 1e-12, "alignment")?;
        ensure!(a.n_evaluated + a.n_unparseable == a.n_requested, "count identity");

        let v = lib(veracity_accuracy(rs.iter().copied(), &cohort))?;
        let (hit, n) = tally(&rs, &table, true);
        close(v.unwrap(), hit as f64 / n as f64, 1e-12, "veracity")?;

        let pairs: Vec<(Label, Label)> = rs
            .iter()
            .filter_map(|r| reply_label(r).map(|p| (p, table[&(r.pid.clone(), r.claim_id.clone())].0)))
            .collect();
        close(a.macro_f1.unwrap(), brute_macro_f1(&pairs), 1e-12, "macro-F1")?;

        let lib_bins = lib(accuracy_by_entropy_bin(rs.iter().copied(), &cohort))?;
        for bin in EntropyBin::ALL {
            let in_bin: Vec<&PredictionRecord> = rs.iter().copied().filter(|r| bins[&r.claim_id] == bin).collect();
            let (hit, n) = tally(&in_bin, &table, false);
            match lib_bins.get(&bin) {
                Some(b) => {
                    ensure!(b.n == n, "{bin} size {} vs {n}", b.n);
                    close(b.accuracy, hit as f64 / n as f64, 1e-12, "bin accuracy")?;
                }
                None => ensure!(n == 0, "{bin} missing with {n} records"),
            }
        }
        checked += 1;
    }

    let cfg = PanelConfig {
        epsilon: 0.2,
        runs: 2,
        ..PanelConfig::default()
    };
    let axis = Axis::Gender;
    let panels: Vec<PanelResult> = vec![
        lib(utility_panel(&store, &cohort, axis, &gw, &ConditionSpec::demo_only(), &cfg))?,
        lib(shortcut_panel(&store, &cohort, axis, &gw, &cfg))?,
        lib(complementarity_panel(&store, &cohort, axis, &gw, &cfg))?.panel,
    ];
    for p in &panels {
        let brute = brute_flip_rate(&p.pairs).ok_or(format!("{} has no pairs", p.panel))?;
        close(p.flip_rate.unwrap(), brute, 1e-12, &format!("{} flip rate", p.panel))?;
    }

    for axis in Axis::ALL {
        close(
            lib(store.modal_disagreement(axis))?,
            brute_modal_disagreement(&store, axis),
            1e-12,
            "modal disagreement",
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1}s");
    Ok(format!(
        "{checked} conditions, {} records, 3 panels, 4 axes agree with recounts ({secs:.2}s)",
        out.records.len()
    ))
}

// ---------------------------------------------------------------- AC2

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..1.0f64)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn ac2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let k = rng.random_range(2..=10);
        let p = simplex(&mut rng, k);
        let q = simplex(&mut rng, k);
        let kl = lib(kl_divergence(&p, &q))?;
        ensure!(kl >= 0.0, "pair {i}: KL {kl} < 0");
        ensure!(lib(kl_divergence(&p, &p))?.abs() <= 1e-12, "pair {i}: KL(p,p) != 0");
        let js = lib(js_divergence_bits(&p, &q))?;
        let js_rev = lib(js_divergence_bits(&q, &p))?;
        ensure!(js == js_rev, "pair {i}: JS asymmetric {js} vs {js_rev}");
        ensure!((0.0..=1.0).contains(&js), "pair {i}: JS {js} out of [0,1]");
        ensure!(lib(js_divergence_bits(&p, &p))?.abs() <= 1e-12, "pair {i}: JS(p,p) != 0");
    }
    close(lib(kl_divergence(&[0.5, 0.5], &[0.75, 0.25]))?, 0.143841, 1e-6, "KL hand case")?;
    close(lib(js_divergence_bits(&[1.0, 0.0], &[0.0, 1.0]))?, 1.0, 1e-6, "JS hand case")?;
    Ok("1000 random pairs; 0.143841 nats and 1.0 bit hand cases".into())
}

// ---------------------------------------------------------------- AC3

/// Claims with at least `min_n` judgments per group whose true-shares differ
/// by at most `num/den`, compared exactly in integers.
fn brute_slice(c: &Cohort, axis: Axis, num: u64, den: u64, min_n: u64) -> BTreeSet<String> {
    let [g0, _] = axis.groups();
    let mut t: BTreeMap<String, [(u64, u64); 2]> = BTreeMap::new();
    for j in c.judgments() {
        let Some(&g) = c.participant(&j.pid).unwrap().profiles.get(&axis) else { continue };
        let e = &mut t.entry(j.claim_id.clone()).or_default()[usize::from(g != g0)];
        e.1 += 1;
        e.0 += u64::from(j.participant_choice == Label::True);
    }
    t.into_iter()
        .filter(|(_, [(a, n), (b, m)])| {
            *n >= min_n && *m >= min_n && (a * m).abs_diff(b * n) * den <= num * n * m
        })
        .map(|(id, _)| id)
        .collect()
}

fn ac3() -> Check {
    let store = lib(synth::belief_store(1, 0.4))?;
    let cohort = lib(synth::cohort(&CohortSpec {
        n_participants: 60,
        n_claims: 16,
        seed: 3,
        ..CohortSpec::default()
    }))?;
    let cfg = PanelConfig {
        epsilon: 0.2,
        ..PanelConfig::default()
    };
    let blind = mock_gateway("blind", MockBackend::demographics_blind(9))?;
    for axis in [Axis::Gender, Axis::Age] {
        let u = lib(utility_panel(&store, &cohort, axis, &blind, &ConditionSpec::demo_only(), &cfg))?;
        let s = lib(shortcut_panel(&store, &cohort, axis, &blind, &cfg))?;
        let c = lib(complementarity_panel(&store, &cohort, axis, &blind, &cfg))?;
        for p in [&u, &s, &c.panel] {
            ensure!(p.flip_rate == Some(0.0), "blind {} {axis}: {:?}", p.panel, p.flip_rate);
        }
        ensure!(c.panel.accuracy_delta == Some(0.0), "blind delta {:?}", c.panel.accuracy_delta);
    }
    let keyed = mock_gateway("keyed", MockBackend::keyed_on(Group::Female.phrase(), "true", "fake"))?;
    let u = lib(utility_panel(&store, &cohort, Axis::Gender, &keyed, &ConditionSpec::demo_only(), &cfg))?;
    ensure!(u.flip_rate == Some(100.0), "keyed utility flip {:?}", u.flip_rate);

    let mut sizes = Vec::new();
    for axis in [Axis::Gender, Axis::Age, Axis::Education] {
        let mut prev: Option<BTreeSet<String>> = None;
        for (num, den) in [(0, 1), (1, 20), (1, 5)] {
            let eps = num as f64 / den as f64;
            let got = lib(build_balanced_slice(&cohort, axis, eps, 3))?.claims;
            let want = brute_slice(&cohort, axis, num, den, 3);
            ensure!(got == want, "{axis} eps {eps}: {got:?} vs {want:?}");
            if let Some(p) = &prev {
                ensure!(p.is_subset(&got), "{axis}: slice shrank at eps {eps}");
            }
            sizes.push(got.len());
            prev = Some(got);
        }
    }
    Ok(format!("blind mock flips 0, keyed utility 100; slice sizes {sizes:?} match brute force"))
}

// ---------------------------------------------------------------- AC4

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn phase1_grad_error(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 5;
    let mut adapter = BeliefAdapter::new(d, seed);
    adapter.b.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    let batch: Vec<Phase1Example> = [3, 4, 10, 2]
        .iter()
        .map(|&k| {
            let e = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            Phase1Example::new(e, simplex(&mut rng, k)).unwrap()
        })
        .collect();
    let refs: Vec<&Phase1Example> = batch.iter().collect();
    let (_, gw, gb) = lib(phase1_loss_and_grad(&adapter, &refs))?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..gw.as_slice().len() {
        let orig = adapter.w.as_slice()[i];
        adapter.w.as_mut_slice()[i] = orig + h;
        let up = lib(phase1_batch_loss(&adapter, &batch))?;
        adapter.w.as_mut_slice()[i] = orig - h;
        let down = lib(phase1_batch_loss(&adapter, &batch))?;
        adapter.w.as_mut_slice()[i] = orig;
        worst = worst.max(rel_err(gw.as_slice()[i], (up - down) / (2.0 * h)));
    }
    for i in 0..gb.len() {
        let orig = adapter.b[i];
        adapter.b[i] = orig + h;
        let up = lib(phase1_batch_loss(&adapter, &batch))?;
        adapter.b[i] = orig - h;
        let down = lib(phase1_batch_loss(&adapter, &batch))?;
        adapter.b[i] = orig;
        worst = worst.max(rel_err(gb[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

fn phase2_grad_error(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = SusceptibilityHead::new(4, 3, seed);
    head.c = vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let batch: Vec<Phase2Example> = (0..6)
        .map(|i| Phase2Example {
            h: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            z_bel: (0..3).map(|_| rng.random_range(0.0..1.0)).collect(),
            label: if i % 2 == 0 { Label::True } else { Label::Fake },
            group: None,
        })
        .collect();
    let refs: Vec<&Phase2Example> = batch.iter().collect();
    let loss = |head: &SusceptibilityHead| phase2_loss_and_grad(head, &refs).map(|r| r.0);
    let (_, gu, gc) = lib(phase2_loss_and_grad(&head, &refs))?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..gu.as_slice().len() {
        let orig = head.u.as_slice()[i];
        head.u.as_mut_slice()[i] = orig + h;
        let up = lib(loss(&head))?;
        head.u.as_mut_slice()[i] = orig - h;
        let down = lib(loss(&head))?;
        head.u.as_mut_slice()[i] = orig;
        worst = worst.max(rel_err(gu.as_slice()[i], (up - down) / (2.0 * h)));
    }
    for i in 0..2 {
        let orig = head.c[i];
        head.c[i] = orig + h;
        let up = lib(loss(&head))?;
        head.c[i] = orig - h;
        let down = lib(loss(&head))?;
        head.c[i] = orig;
        worst = worst.max(rel_err(gc[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

/// Points with |x0| >= 1, labelled by the sign of x0.
fn margin_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<(Vec<f64>, Label)> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        if x[0].abs() >= 1.0 {
            let y = if x[0] > 0.0 { Label::True } else { Label::Fake };
            out.push((x, y));
        }
    }
    out
}

/// Classic perceptron; true when it reaches zero training errors.
fn perceptron_separates(data: &[(Vec<f64>, Label)]) -> bool {
    let d = data[0].0.len();
    let mut w = vec![0.0; d + 1];
    for _ in 0..1000 {
        let mut errors = 0;
        for (x, y) in data {
            let s = if *y == Label::True { 1.0 } else { -1.0 };
            let act: f64 = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if s * act <= 0.0 {
                errors += 1;
                for i in 0..d {
                    w[i] += s * x[i];
                }
                w[d] += s;
            }
        }
        if errors == 0 {
            return true;
        }
    }
    false
}

fn adapter_bits(a: &BeliefAdapter) -> Vec<u64> {
    a.w.as_slice().iter().chain(&a.b).map(|x| x.to_bits()).collect()
}

fn ac4() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        worst = worst.max(phase1_grad_error(seed)?).max(phase2_grad_error(seed)?);
    }
    ensure!(worst < 1e-4, "gradient relative error {worst:e}");

    // Four orthogonal embeddings with strictly positive targets of varying scale.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let train: Vec<Phase1Example> = [4, 5, 10, 2]
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            Phase1Example::new(e, simplex(&mut rng, k)).unwrap()
        })
        .collect();
    let cfg1 = TrainConfig {
        optimizer: AdamWConfig {
            lr: 0.05,
            ..AdamWConfig::default()
        },
        batch_size: 4,
        epochs: 500,
        seed: 1,
    };
    let p1 = lib(phase1_train_from(BeliefAdapter::new(4, 1), &train, &[], &cfg1))?;
    let kl = *p1.train_curve.last().unwrap();
    ensure!(p1.steps <= 500, "{} steps", p1.steps);
    ensure!(kl < 0.01, "phase-1 KL {kl} after {} steps", p1.steps);

    let adapter = p1.adapter;
    let before = adapter_bits(&adapter);
    let d = 6;
    let as_examples = |data: Vec<(Vec<f64>, Label)>| -> Vec<Phase2Example> {
        data.into_iter()
            .map(|(x, label)| Phase2Example {
                z_bel: adapter.predict(&x[..4], 10).unwrap(),
                h: x,
                label,
                group: None,
            })
            .collect()
    };
    let train_raw = margin_set(&mut rng, 300, d);
    ensure!(perceptron_separates(&train_raw), "perceptron oracle: training set not separable");
    let tr = as_examples(train_raw);
    let va = as_examples(margin_set(&mut rng, 400, d));
    let cfg2 = TrainConfig {
        optimizer: AdamWConfig {
            lr: 0.02,
            ..AdamWConfig::default()
        },
        batch_size: 16,
        epochs: 30,
        seed: 2,
    };
    let fit = lib(phase2_train(&adapter, &tr, &va, &cfg2))?;
    let acc = fit.epochs.last().and_then(|e| e.val_accuracy).unwrap();
    ensure!(acc >= 0.95, "separable validation accuracy {acc}");

    let shuffle = |set: &[Phase2Example], rng: &mut ChaCha8Rng| {
        let mut labels: Vec<Label> = set.iter().map(|e| e.label).collect();
        labels.shuffle(rng);
        set.iter()
            .zip(labels)
            .map(|(e, label)| Phase2Example { label, ..e.clone() })
            .collect::<Vec<_>>()
    };
    let (tr_s, va_s) = (shuffle(&tr, &mut rng), shuffle(&va, &mut rng));
    let chance = lib(phase2_train(&adapter, &tr_s, &va_s, &cfg2))?;
    let acc_s = chance.epochs.last().and_then(|e| e.val_accuracy).unwrap();
    ensure!((acc_s - 0.5).abs() <= 0.1, "shuffled-label accuracy {acc_s}");
    ensure!(adapter_bits(&adapter) == before, "adapter parameters changed during phase 2");

    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!(
        "grad rel err {worst:.1e}; phase-1 KL {kl:.2e} in {} steps; val acc {acc:.3}, shuffled {acc_s:.3}; adapter bit-identical ({secs:.2}s)",
        p1.steps
    ))
}

// ---------------------------------------------------------------- AC5

fn ac5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d_emb, d_bel) = (4, 70);
    let groups = [Group::Female, Group::Male];
    let eval: Vec<Phase2Example> = (0..50)
        .map(|i| Phase2Example {
            h: (0..d_emb).map(|_| rng.random_range(-1.0..1.0)).collect(),
            z_bel: (0..d_bel).map(|_| rng.random_range(0.0..1.0)).collect(),
            label: if rng.random_bool(0.5) { Label::True } else { Label::Fake },
            group: Some(groups[i % 2]),
        })
        .collect();
    let table: BTreeMap<Group, Vec<f64>> = groups
        .iter()
        .map(|g| (*g, (0..d_bel).map(|_| rng.random_range(-2.0..2.0)).collect()))
        .collect();
    let perturbations = [Perturbation::ZeroOut, Perturbation::Swap(table.clone())];

    let mut zeroed = SusceptibilityHead::new(d_emb, d_bel, 3);
    for r in 0..2 {
        for c in d_emb..d_emb + d_bel {
            zeroed.u.set(r, c, 0.0);
        }
    }
    for p in &perturbations {
        let m = lib(ft_shortcut_metrics(&zeroed, &eval, p))?;
        ensure!(
            m.flip_rate == 0.0 && m.prob_delta == 0.0 && m.acc_drop == 0.0,
            "zeroed head {p:?}: {} {} {}",
            m.flip_rate,
            m.prob_delta,
            m.acc_drop
        );
    }

    // A head that does read z_bel: recount flips by predicting on perturbed copies.
    let live = SusceptibilityHead::new(d_emb, d_bel, 8);
    let mut rates = Vec::new();
    for p in &perturbations {
        let m = lib(ft_shortcut_metrics(&live, &eval, p))?;
        let mut flips = 0;
        for ex in &eval {
            let mut alt = ex.clone();
            alt.z_bel = match p {
                Perturbation::ZeroOut => vec![0.0; d_bel],
                Perturbation::Swap(t) => t[&ex.group.unwrap().swapped()].clone(),
            };
            flips += usize::from(lib(live.predict(ex))? != lib(live.predict(&alt))?);
        }
        let stored = m.before.iter().zip(&m.after).filter(|(a, b)| a != b).count();
        ensure!(stored == flips, "stored predictions disagree with recount");
        close(m.flip_rate, flips as f64 / eval.len() as f64, 1e-12, "flip rate recount")?;
        rates.push(m.flip_rate);
    }
    Ok(format!("zeroed belief weights give 0/0/0 exactly; live head flips {rates:?} match recount"))
}

// ---------------------------------------------------------------- AC6

fn report_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        out.insert(
            e.file_name().to_string_lossy().into_owned(),
            std::fs::read(e.path()).map_err(|e| e.to_string())?,
        );
    }
    Ok(out)
}

fn fixture_workspace(dir: &Path, limit: Option<usize>) -> Result<Workspace, String> {
    let path = lib(write_fixtures(dir, &FixtureSpec::default()))?;
    let mut cfg = lib(RunConfig::load(&path))?;
    cfg.grid.limit = limit;
    lib(Workspace::load(cfg))
}

fn normalized(rs: Vec<PredictionRecord>) -> Vec<PredictionRecord> {
    let mut rs: Vec<PredictionRecord> = rs.into_iter().map(|r| r.without_timing()).collect();
    rs.sort_by_key(|r| r.key());
    rs
}

fn ac6() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let ws = fixture_workspace(&tmp.path().join(name), None)?;
        let gws = lib(gateways(&ws.config, true))?;
        lib(run_all(&ws, &gws, RunOptions::default()))?;
        reports.push(report_files(&ws.layout().report_dir())?);
    }
    ensure!(!reports[0].is_empty(), "no report files");
    ensure!(reports[0] == reports[1], "reports differ between identical runs");

    let full_ws = fixture_workspace(&tmp.path().join("a"), None)?;
    let dir = tmp.path().join("resumed");
    let probe = fixture_workspace(&dir, None)?;
    let n_items = lib(susceptsim::pipeline::sweep_plan(&probe))?;
    let per_dataset: Vec<usize> = full_ws
        .config
        .datasets
        .iter()
        .map(|d| read_records(&full_ws.layout().records(d.kind)).map(|r| r.len()))
        .collect::<susceptsim::Result<_>>()
        .map_err(|e| e.to_string())?;
    let half = per_dataset.iter().min().copied().unwrap_or(0) / 2;
    ensure!(half > 0 && !n_items.conditions.is_empty(), "empty sweep");

    let partial = fixture_workspace(&dir, Some(half))?;
    let gws = lib(gateways(&partial.config, true))?;
    lib(run_sweep_stage(&partial, &gws, false))?;
    let resumed_ws = fixture_workspace(&dir, None)?;
    let gws = lib(gateways(&resumed_ws.config, true))?;
    let stages = lib(run_sweep_stage(&resumed_ws, &gws, true))?;
    for s in &stages {
        ensure!(s.resumed == half, "{:?} resumed {} of {half}", s.kind, s.resumed);
        let got = normalized(lib(read_records(&resumed_ws.layout().records(s.kind)))?);
        let want = normalized(lib(read_records(&full_ws.layout().records(s.kind)))?);
        ensure!(got == want, "{:?}: resumed records differ from the uninterrupted run", s.kind);
    }
    Ok(format!(
        "{} report files byte-identical; resume after {half} of {:?} records matches",
        reports[0].len(),
        per_dataset
    ))
}

// ---------------------------------------------------------------- AC7

fn ac7() -> Check {
    let fx: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/stats_reference.json")).map_err(|e| e.to_string())?;
    let nums = |v: &serde_json::Value| -> Vec<f64> {
        v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    };
    let tol = |r: f64| 1e-6 * r.abs().max(1.0);
    let paired = fx["paired_t"].as_array().unwrap();
    for (i, c) in paired.iter().enumerate() {
        let out = lib(paired_t_test(&nums(&c["a"]), &nums(&c["b"])))?;
        let (t, p) = (c["t"].as_f64().unwrap(), c["p"].as_f64().unwrap());
        close(out.statistic, t, tol(t), &format!("paired case {i} t"))?;
        close(out.p_value, p, 1e-6, &format!("paired case {i} p"))?;
    }
    let z_cases = fx["two_proportion_z"].as_array().unwrap();
    for (i, c) in z_cases.iter().enumerate() {
        let k = |f: &str| c[f].as_u64().unwrap();
        let out = lib(two_proportion_z_test(k("k1"), k("n1"), k("k2"), k("n2")))?;
        let (z, p) = (c["z"].as_f64().unwrap(), c["p"].as_f64().unwrap());
        close(out.statistic, z, tol(z), &format!("z case {i} z"))?;
        close(out.p_value, p, 1e-6, &format!("z case {i} p"))?;
    }
    let big = lib(two_proportion_z_test(4760, 7000, 6188, 7000))?;
    ensure!(big.p_value < 0.001, "0.680 vs 0.884 p = {}", big.p_value);
    Ok(format!(
        "{} paired and {} z fixtures within 1e-6; 0.680 vs 0.884 at n=7000 gives p = {:.1e}",
        paired.len(),
        z_cases.len(),
        big.p_value
    ))
}

// ---------------------------------------------------------------- AC8

fn ac8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..10 {
        let (r, c) = (rng.random_range(5..12), rng.random_range(6..15));
        let k = rng.random_range(2..=4);
        let v = Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let fit = lib(nmf(&v, k, 150, i))?;
        for w in fit.errors.windows(2) {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "matrix {i}: error rose {} -> {}", w[0], w[1]);
        }
    }

    let u = [0.3, 1.2, 2.0, 0.7, 1.5];
    let w = [1.0, 0.25, 3.0, 0.5];
    let data = u.iter().flat_map(|a| w.iter().map(move |b| a * b)).collect();
    let rank1 = lib(nmf(&Matrix::from_vec(5, 4, data).unwrap(), 1, 300, 1))?;
    let err = *rank1.errors.last().unwrap();
    ensure!(err <= 1e-6, "rank-1 error {err}");

    let docs = [
        "apple banana cherry", "banana cherry date", "apple date fig", "fig cherry banana",
        "apple fig date banana", "engine gear piston", "gear valve piston", "engine valve bolt",
        "bolt gear engine valve", "piston bolt valve",
    ];
    let t = lib(tfidf(&docs))?;
    let fit = lib(nmf(&t.matrix, 2, 300, 5))?;
    let topic = |i: usize| usize::from(fit.w.get(i, 1) > fit.w.get(i, 0));
    let first: BTreeSet<usize> = (0..5).map(topic).collect();
    let second: BTreeSet<usize> = (5..10).map(topic).collect();
    ensure!(first.len() == 1 && second.len() == 1 && first != second, "topics mix vocabularies");
    Ok(format!("10 random matrices monotone; rank-1 error {err:.1e}; two-vocabulary purity 1.0"))
}

// ---------------------------------------------------------------- AC9

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn ac9() -> Outcome {
    let Some(path) = std::env::var_os("SUSCEPTSIM_REPLAY_CONFIG") else {
        return Outcome::Skip("SUSCEPTSIM_REPLAY_CONFIG not set; needs real cohorts and a live endpoint".into());
    };
    let run = || -> Check {
        let ws = lib(RunConfig::load(Path::new(&path)).and_then(Workspace::load))?;
        let gws = lib(gateways(&ws.config, false))?;
        lib(run_all(&ws, &gws, RunOptions::default()))?;
        let dir = ws.layout().report_dir();
        for f in ["settings_matrix.csv", "panels.csv", "entropy_bins.csv", "ft.csv"] {
            ensure!(dir.join(f).exists(), "{f} missing");
        }
        let settings = lib(ws.config.settings())?;
        let models: Vec<String> = ws.config.endpoints.iter().map(|e| e.model_name.clone()).collect();
        let mut differs = false;
        let mut ordered = false;
        for cohort in &ws.datasets {
            let records = lib(read_records(&ws.layout().records(cohort.kind())))?;
            let scores = lib(score_settings(cohort, &records, &settings, &models, &ws.axes()))?;
            let mean = |name: &str| {
                let v: Vec<f64> = scores
                    .iter()
                    .filter(|s| s.setting == name)
                    .filter_map(|s| s.result.accuracy)
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            let (zs, im, ob) = (mean("zero_shot"), mean("imputed"), mean("observed"));
            differs |= zs.is_some() && (zs != im || zs != ob);
            ordered |= matches!((im, ob), (Some(a), Some(b)) if a > b);
        }
        ensure!(differs, "zero-shot matches every belief-conditioned setting");
        ensure!(ordered, "imputed does not beat observed on any dataset");
        Ok(format!("tables written to {}", dir.display()))
    };
    match run() {
        Ok(s) => Outcome::Pass(s),
        Err(e) => Outcome::Fail(e),
    }
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("AC1 metric oracle equivalence", ac1),
        ("AC2 divergence correctness", ac2),
        ("AC3 counterfactual soundness", ac3),
        ("AC4 adapter training", ac4),
        ("AC5 FT shortcut metrics", ac5),
        ("AC6 determinism and replay", ac6),
        ("AC7 statistics", ac7),
        ("AC8 NMF", ac8),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("[PASS] {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("[FAIL] {name}: panicked");
            }
        }
    }
    match ac9() {
        Outcome::Pass(s) => println!("[PASS] AC9 replay capability: {s}"),
        Outcome::Fail(s) => {
            failed += 1;
            println!("[FAIL] AC9 replay capability: {s}");
        }
        Outcome::Skip(s) => println!("[SKIP] AC9 replay capability: {s}"),
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
