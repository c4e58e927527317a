//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Set `DROUGHTCAST_REAL_CUBE` to a Missouri PDSI cube (.pdsc) to run the
//! real-data check; it is skipped otherwise.

use std::time::Instant;

use droughtcast::config::ExperimentConfig;
use droughtcast::convlstm::{gradient_check, window_at, ConvLstmHyper, ConvLstmParams, Window, TENSOR_NAMES};
use droughtcast::cube::split_point;
use droughtcast::gbdt::{best_split, fit_gbdt, split_gain, GbdtHyper, SplitChoice};
use droughtcast::harness::{crop_study, horizon_sweep, seed_ensemble, ReportTable};
use droughtcast::linear::{fit_logreg_from, logreg_objective, LinearModel, LogRegHyper};
use droughtcast::metrics::{accuracy, f1, pr_auc, roc_auc};
use droughtcast::models::{train_model, ModelKind};
use droughtcast::render::{metric_map_svg, HeatmapStyle};
use droughtcast::rng::SplitMix64;
use droughtcast::synth::corrupt_border;
use droughtcast::{generate, per_cell_map, ClassScheme, DesignMatrix, Metric, PdsiCube, SynthParams};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn light_convlstm(cfg: &mut ExperimentConfig) {
    cfg.apply_text(
        "convlstm.embed_channels = 8\nconvlstm.hidden_channels = 8\nconvlstm.history_len = 3\n\
         convlstm.step_size = 0.005\nconvlstm.max_epochs = 15\nconvlstm.patience = 4\n",
    )
    .unwrap();
}

fn synthetic_task() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("synth.t_len = 600\nsynth.rows = 16\nsynth.cols = 16\nsynth.ar_coeff = 0.95\nthreshold_quantile = 0.3\ntrain_frac = 0.7\n")
        .unwrap();
    light_convlstm(&mut cfg);
    cfg
}

fn value(table: &ReportTable, model: &str, horizon: usize) -> f64 {
    table.select(model, Metric::RocAuc).find(|r| r.horizon == Some(horizon)).map_or(f64::NAN, |r| r.value)
}

// ---- 1: ConvLSTM gradient check

fn convlstm_gradients() -> Outcome {
    let t0 = Instant::now();
    let cube = generate(&SynthParams { t_len: 40, rows: 5, cols: 6, ..Default::default() }).map_err(|e| e.to_string())?;
    let labels = ClassScheme::binary(cube.quantile(0.3).unwrap() as f64).label(&cube);
    let hyper = ConvLstmHyper { embed_channels: 4, hidden_channels: 4, history_len: 3, kernel: 3, n_classes: 2, ..Default::default() };
    let params = ConvLstmParams::<f64>::init(&hyper, 11);
    let batch: Vec<Window<f64>> = [8, 17, 30].iter().map(|&t| window_at(&cube, Some(&labels), &hyper, t)).collect();
    let errs = gradient_check(&params, &batch, 1e-5, 1e-6).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let detail = TENSOR_NAMES.iter().zip(errs).map(|(n, e)| format!("{n}={e:.1e}")).collect::<Vec<_>>().join(" ");
    check(worst <= 1e-4 && secs < 60.0, format!("max rel err {worst:.2e} ({detail}), {secs:.1}s"))
}

// ---- 2: metric oracles

fn auc_oracle(s: &[f64], y: &[u8]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0.0).then(|| num / pairs)
}

/// Rank of item `i`: items with a higher score, or an equal score and a
/// lower-or-equal index, come at or before it.
fn ap_oracle(s: &[f64], y: &[u8]) -> Option<f64> {
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    if n_pos == 0 {
        return None;
    }
    let before = |i: usize, j: usize| s[j] > s[i] || (s[j] == s[i] && j <= i);
    let mut sum = 0.0;
    for i in (0..s.len()).filter(|&i| y[i] == 1) {
        let rank = (0..s.len()).filter(|&j| before(i, j)).count();
        let tp = (0..s.len()).filter(|&j| y[j] == 1 && before(i, j)).count();
        sum += tp as f64 / rank as f64;
    }
    Some(sum / n_pos as f64)
}

fn confusion_oracle(p: &[u8], y: &[u8]) -> (f64, f64) {
    let mut m = [[0usize; 2]; 2];
    for (&a, &b) in p.iter().zip(y) {
        m[b as usize][a as usize] += 1;
    }
    let (tp, fp, fneg) = (m[1][1] as f64, m[0][1] as f64, m[1][0] as f64);
    let f = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
    ((m[0][0] + m[1][1]) as f64 / p.len() as f64, f)
}

fn metric_oracles() -> Outcome {
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let levels = 2 + rng.below(30);
        let s: Vec<f64> = (0..200).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let y: Vec<u8> = (0..200).map(|_| (rng.uniform() < 0.3) as u8).collect();
        let pred: Vec<u8> = s.iter().map(|&v| (v >= 0.5) as u8).collect();
        let diff = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        let (acc, f) = confusion_oracle(&pred, &y);
        worst = worst
            .max(diff(roc_auc(&s, &y), auc_oracle(&s, &y)))
            .max(diff(pr_auc(&s, &y), ap_oracle(&s, &y)))
            .max(diff(accuracy(&pred, &y), Some(acc)))
            .max((f1(&pred, &y) - f).abs());
    }
    check(worst <= 1e-12, format!("100 instances x 200 items with ties, max |diff| {worst:.1e}"))
}

// ---- 3: logistic regression

fn random_design(rng: &mut SplitMix64, n: usize, w: usize, k: usize) -> DesignMatrix {
    let beta: Vec<f64> = (0..w * k).map(|_| rng.standard_normal()).collect();
    let mut x = Vec::with_capacity(n * w);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..w).map(|_| rng.standard_normal()).collect();
        let scores: Vec<f64> = (0..k).map(|c| row.iter().zip(&beta[c * w..]).map(|(a, b)| a * b).sum::<f64>() + rng.normal(0.0, 1.0)).collect();
        let label = (0..k).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        x.extend(row);
        y.push(label as u8);
    }
    DesignMatrix::from_parts(w, k, x, y).unwrap()
}

fn logreg_properties() -> Outcome {
    let mut rng = SplitMix64::new(7);
    let mut fd_worst: f64 = 0.0;
    for k in [2, 3] {
        let d = random_design(&mut rng, 150, 5, k);
        let mut m = LinearModel::zeros(k, 5);
        m.weights.iter_mut().chain(m.bias.iter_mut()).for_each(|v| *v = rng.normal(0.0, 0.5));
        let (_, grad) = logreg_objective(&m, &d, 0.05);
        let nw = m.weights.len();
        for i in 0..grad.len() {
            let eps = 1e-5;
            let bump = |delta: f64| {
                let mut c = m.clone();
                if i < nw {
                    c.weights[i] += delta;
                } else {
                    c.bias[i - nw] += delta;
                }
                logreg_objective(&c, &d, 0.05).0
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            fd_worst = fd_worst.max((fd - grad[i]).abs());
        }
    }

    let d = random_design(&mut rng, 300, 6, 2);
    let hyper = LogRegHyper { l2: 0.1, max_epochs: 20_000, tol: 1e-10, ..Default::default() };
    let a = fit_logreg_from(&d, &hyper, None).map_err(|e| e.to_string())?;
    let mut init = LinearModel::zeros(2, 6);
    init.weights.iter_mut().chain(init.bias.iter_mut()).for_each(|v| *v = rng.normal(0.0, 3.0));
    let b = fit_logreg_from(&d, &hyper, Some(&init)).map_err(|e| e.to_string())?;
    let gap = (a.objective_trace.last().unwrap() - b.objective_trace.last().unwrap()).abs();
    let monotone = [&a, &b].iter().all(|f| f.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    check(
        fd_worst <= 1e-6 && gap <= 1e-8 && monotone,
        format!("fd max |diff| {fd_worst:.1e}, init objective gap {gap:.1e}, monotone={monotone}"),
    )
}

// ---- 4: GBDT

fn split_oracle(d: &DesignMatrix, samples: &[usize], g: &[f64], h: &[f64], hyper: &GbdtHyper) -> Option<SplitChoice> {
    let gt: f64 = samples.iter().map(|&s| g[s]).sum();
    let ht: f64 = samples.iter().map(|&s| h[s]).sum();
    let mut best: Option<SplitChoice> = None;
    for f in 0..d.width() {
        let mut vals: Vec<f64> = samples.iter().map(|&s| d.row(s)[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let left: Vec<usize> = samples.iter().copied().filter(|&s| d.row(s)[f] <= pair[0]).collect();
            let gl: f64 = left.iter().map(|&s| g[s]).sum();
            let hl: f64 = left.iter().map(|&s| h[s]).sum();
            if hl < hyper.min_child_weight || ht - hl < hyper.min_child_weight {
                continue;
            }
            let gain = split_gain(gl, hl, gt, ht, hyper);
            if gain > 0.0 && best.map_or(true, |b| gain > b.gain + 1e-12 * b.gain.abs().max(1.0)) {
                best = Some(SplitChoice { feature: f, threshold: 0.5 * (pair[0] + pair[1]), gain });
            }
        }
    }
    best
}

fn gbdt_properties() -> Outcome {
    let mut rng = SplitMix64::new(31);
    let hyper = GbdtHyper { min_child_weight: 0.5, ..Default::default() };
    let (mut nodes, mut mismatches) = (0, 0);
    for _ in 0..50 {
        let n = 8 + rng.below(57);
        let w = 1 + rng.below(8);
        let levels = 3 + rng.below(10);
        let x: Vec<f64> = (0..n * w).map(|_| rng.below(levels) as f64).collect();
        let y: Vec<u8> = (0..n).map(|_| (rng.uniform() < 0.4) as u8).collect();
        let d = DesignMatrix::from_parts(w, 2, x, y).unwrap();
        let g: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.05, 0.25)).collect();
        // walk the greedy tree to depth 3, comparing at every node
        let mut frontier = vec![((0..n).collect::<Vec<usize>>(), 0usize)];
        while let Some((samples, depth)) = frontier.pop() {
            nodes += 1;
            let got = best_split(&d, &samples, &g, &h, &hyper);
            let want = split_oracle(&d, &samples, &g, &h, &hyper);
            let same = match (got, want) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    a.feature == b.feature && a.threshold == b.threshold && (a.gain - b.gain).abs() <= 1e-9 * b.gain.abs().max(1.0)
                }
                _ => false,
            };
            if !same {
                mismatches += 1;
                continue;
            }
            if let (Some(c), true) = (want, depth < 3) {
                let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&s| d.row(s)[c.feature] <= c.threshold);
                frontier.push((l, depth + 1));
                frontier.push((r, depth + 1));
            }
        }
    }

    let d = random_design(&mut rng, 500, 6, 2);
    let fit = fit_gbdt(&d, &GbdtHyper { n_rounds: 200, ..Default::default() }).map_err(|e| e.to_string())?;
    let rounds = fit.train_loss.len() - 1;
    let monotone = fit.train_loss.windows(2).all(|w| w[1] <= w[0]);
    check(
        mismatches == 0 && monotone && rounds == 200,
        format!("{nodes} nodes, {mismatches} mismatches; train logloss monotone={monotone} over {rounds} rounds"),
    )
}

// ---- 5 and 6: synthetic learnability and seed ensemble

fn learnability(cube: &PdsiCube) -> Outcome {
    let t0 = Instant::now();
    let mut cfg = synthetic_task();
    cfg.models = vec![ModelKind::Baseline, ModelKind::LogReg, ModelKind::ConvLstm];
    cfg.horizons = vec![1, 3, 6, 12];
    let table = horizon_sweep(cube, &cfg).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let mut ok = secs < 900.0;
    let mut parts = Vec::new();
    for m in ["baseline", "logreg", "convlstm"] {
        let curve: Vec<f64> = cfg.horizons.iter().map(|&h| value(&table, m, h)).collect();
        let non_increasing = curve.windows(2).all(|w| w[1] <= w[0] + 0.02);
        ok &= non_increasing;
        match m {
            "baseline" => ok &= curve.iter().all(|&v| v == 0.5),
            _ => ok &= curve[0] >= 0.85,
        }
        parts.push(format!("{m} {}", curve.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join("/")));
    }
    check(ok, format!("roc_auc h1/3/6/12: {}; {secs:.0}s", parts.join(", ")))
}

fn ensemble(cube: &PdsiCube) -> Outcome {
    let mut cfg = synthetic_task();
    cfg.models = vec![ModelKind::ConvLstm];
    cfg.horizons = vec![1];
    cfg.seeds = (0..5).collect();
    let table = seed_ensemble(cube, &cfg).map_err(|e| e.to_string())?;
    let rows: Vec<_> = table.select("convlstm", Metric::RocAuc).collect();
    let members: Vec<f64> = rows.iter().filter(|r| r.seed.as_deref() != Some("ensemble")).map(|r| r.value).collect();
    let ens = rows.iter().find(|r| r.seed.as_deref() == Some("ensemble")).map_or(f64::NAN, |r| r.value);
    let mean = members.iter().sum::<f64>() / members.len() as f64;
    check(members.len() == 5 && ens >= mean - 0.005, format!("ensemble {ens:.4} vs member mean {mean:.4}"))
}

// ---- 7: border crop

fn crop_property() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("synth.t_len = 600\nsynth.rows = 20\nsynth.cols = 20\nthreshold_quantile = 0.3\nhorizons = 1\ncrop_fracs = 0,0.2\n")
        .unwrap();
    cfg.models = vec![ModelKind::LogReg];
    let clean = generate(&cfg.synth).map_err(|e| e.to_string())?;
    let vals: Vec<f64> = clean.valid_values().map(f64::from).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
    let cube = corrupt_border(&clean, 0.1, 3.0 * sd, 5).map_err(|e| e.to_string())?;
    let table = crop_study(&cube, &cfg).map_err(|e| e.to_string())?;
    let at = |c: f64| table.select("logreg", Metric::RocAuc).find(|r| r.crop == Some(c)).map_or(f64::NAN, |r| r.value);
    let (a0, a20) = (at(0.0), at(0.2));
    check(a20 > a0, format!("crop 0%: {a0:.4}, crop 20%: {a20:.4}"))
}

// ---- 8: determinism

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("synth.t_len = 120\nsynth.rows = 8\nsynth.cols = 8\nthreshold_quantile = 0.3\nhorizons = 1,3\ngbdt.n_rounds = 30\n")
        .unwrap();
    light_convlstm(&mut cfg);
    cfg.set("convlstm.max_epochs", "3").unwrap();
    let run = || -> droughtcast::Result<(String, Vec<u8>, String)> {
        let cube = generate(&cfg.synth)?;
        let csv = horizon_sweep(&cube, &cfg)?.to_csv_string();
        let labels = cfg.scheme_for(&cube)?.label(&cube);
        let split = split_point(cube.t_len(), cfg.train_frac)?;
        let (model, _) = train_model(ModelKind::ConvLstm, &cube, &labels, split, &cfg.settings_for(1), 3)?;
        let mut f = model.forecast(&cube, &labels)?;
        f.restrict_months(split..cube.t_len());
        let svg = metric_map_svg(&per_cell_map(&f, &labels, Metric::RocAuc)?, &HeatmapStyle::default())?;
        Ok((csv, model.to_bytes(), svg))
    };
    let a = run().map_err(|e| e.to_string())?;
    let b = run().map_err(|e| e.to_string())?;

    let mut cube = generate(&SynthParams { t_len: 13, rows: 3, cols: 5, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut vals = cube.values().to_vec();
    vals[7] = f32::NAN;
    vals[20] = -0.0;
    cube = PdsiCube::new(13, 3, 5, -24, vals).map_err(|e| e.to_string())?;
    let bytes = cube.to_bytes();
    let back = PdsiCube::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let pdsc = back.bit_eq(&cube) && back.to_bytes() == bytes;
    check(
        a.0 == b.0 && a.1 == b.1 && a.2 == b.2 && pdsc,
        format!("report csv {}, checkpoint {}, svg {}, pdsc round trip {}", a.0 == b.0, a.1 == b.1, a.2 == b.2, pdsc),
    )
}

// ---- 9: real data (optional)

fn real_data() -> Option<Outcome> {
    let path = std::env::var_os("DROUGHTCAST_REAL_CUBE")?;
    Some((|| {
        let cube = PdsiCube::load(&path).map_err(|e| e.to_string())?;
        let mut cfg = ExperimentConfig::default();
        cfg.models = vec![ModelKind::ConvLstm];
        cfg.horizons = vec![1, 3, 6, 9, 12];
        let sweep = horizon_sweep(&cube, &cfg).map_err(|e| e.to_string())?;
        let curve: Vec<f64> = cfg.horizons.iter().map(|&h| value(&sweep, "convlstm", h)).collect();
        let declines = curve.windows(2).all(|w| w[1] <= w[0]);
        let ends = (curve[0] - 0.887).abs() <= 0.05 && (curve[4] - 0.617).abs() <= 0.07;

        cfg.horizons = vec![1];
        let crops = crop_study(&cube, &cfg).map_err(|e| e.to_string())?;
        let peak = crops
            .select("convlstm", Metric::RocAuc)
            .max_by(|a, b| a.value.total_cmp(&b.value))
            .and_then(|r| r.crop)
            .unwrap_or(f64::NAN);
        check(
            declines && ends && (0.4..=0.6).contains(&peak),
            format!("horizon curve {curve:.3?}, crop peak at {peak}"),
        )
    })())
}

fn main() {
    let task = synthetic_task();
    let cube = generate(&task.synth).expect("synthetic cube");
    let criteria: Vec<(&str, Box<dyn Fn() -> Option<Outcome>>)> = vec![
        ("1 convlstm gradient check", Box::new(|| Some(convlstm_gradients()))),
        ("2 metric oracles", Box::new(|| Some(metric_oracles()))),
        ("3 logistic regression", Box::new(|| Some(logreg_properties()))),
        ("4 gbdt split oracle and monotone loss", Box::new(|| Some(gbdt_properties()))),
        ("5 synthetic learnability", Box::new(|| Some(learnability(&cube)))),
        ("6 seed ensemble", Box::new(|| Some(ensemble(&cube)))),
        ("7 border crop", Box::new(|| Some(crop_property()))),
        ("8 determinism and persistence", Box::new(|| Some(determinism()))),
        ("9 real-data horizon and crop curves", Box::new(real_data)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Some(Ok(d)) => println!("PASS {name}: {d}"),
            Some(Err(d)) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
            None => println!("SKIP {name}: DROUGHTCAST_REAL_CUBE not set"),
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
