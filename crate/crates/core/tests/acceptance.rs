//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ccnet::data::synth::{generate_synthetic, SynthConfig};
use ccnet::evaluation::{
    compute_cmc, compute_map, distance_matrix, evaluate, masked_center_eval, missing_experiment,
    modality_subset_eval, apply_protocol_filter, rank, EmbeddingSet, MissingConfig, ProtocolFilter, QueryRanking,
    RankingResult, RecordMeta, Subset,
};
use ccnet::losses::{
    cdc_gradient, cdc_loss, cdc_modality_loss, cdc_sample_loss, modality_centers, sample_centers, BatchFeatures,
};
use ccnet::model::{ModelConfig, NormVariant};
use ccnet::normalization::{alnu_backward, alnu_forward, alnu_forward_cached, layer_stats, normalize, AlnuParams};
use ccnet::numkit::{finite_diff_grad, max_relative_error, FeatureMap, Parameters};
use ccnet::training::{train_from_scratch, LossVariant, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_batch(rng: &mut ChaCha8Rng, p: usize, k: usize, m: usize, d: usize) -> BatchFeatures {
    let data = (0..p * k * m * d).map(|_| rng.random_range(-3.0..3.0)).collect();
    BatchFeatures::from_flat(p, k, m, d, data).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let b = random_batch(&mut rng, 8, 4, 3, 16);
        let analytic = cdc_gradient(&b, 0.6).unwrap();
        let numeric = finite_diff_grad(
            |x| cdc_loss(&BatchFeatures::from_flat(8, 4, 3, 16, x.to_vec()).unwrap(), 0.6).unwrap(),
            b.data(),
            1e-6,
        )
        .unwrap();
        worst = worst.max(max_relative_error(analytic.data(), &numeric));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-5 && secs < 30.0, format!("max relative error {worst:.3e} over 100 batches in {secs:.1}s"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut center_gap, mut grad_sum) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let (p, k, m, d) = (8, 4, 3, 16);
        let b = random_batch(&mut rng, p, k, m, d);
        let cs = sample_centers(&b).unwrap();
        let cm = modality_centers(&b).unwrap();
        let g = cdc_gradient(&b, 0.6).unwrap();
        for i in 0..p {
            for j in 0..d {
                let global = (0..k).flat_map(|s| (0..m).map(move |mo| (s, mo))).map(|(s, mo)| b.get(i, s, mo)[j]).sum::<f64>()
                    / (k * m) as f64;
                let ms = cs[i].iter().map(|c| c[j]).sum::<f64>() / k as f64;
                let mm = cm[i].iter().map(|c| c[j]).sum::<f64>() / m as f64;
                center_gap = center_gap.max((ms - global).abs()).max((mm - global).abs()).max((ms - mm).abs());
                let s: f64 = (0..k).flat_map(|s| (0..m).map(move |mo| (s, mo))).map(|(s, mo)| g.get(i, s, mo)[j]).sum();
                grad_sum = grad_sum.max(s.abs());
            }
        }
    }
    outcome(
        center_gap <= 1e-12 && grad_sum <= 1e-12,
        format!("center mean gap {center_gap:.1e}, per-identity gradient sum {grad_sum:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let b = BatchFeatures::from_flat(1, 2, 2, 1, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
    let (s, m, c) = (cdc_sample_loss(&b).unwrap(), cdc_modality_loss(&b).unwrap(), cdc_loss(&b, 0.6).unwrap());
    outcome(s == 4.0 && m == 1.0 && c == 4.6, format!("L_S = {s}, L_M = {m}, L_CdC = {c}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_mean, mut worst_std) = (0.0_f64, 0.0_f64);
    for _ in 0..200 {
        let scale = rng.random_range(2.0..50.0);
        let shift = rng.random_range(-10.0..10.0);
        let f = FeatureMap::new(4, 4, 4, (0..64).map(|_| shift + rng.random_range(-scale..scale)).collect()).unwrap();
        let (mu, sigma) = layer_stats(&f);
        if sigma * sigma < 1.0 {
            continue;
        }
        let (m, s) = layer_stats(&normalize(&f, mu, sigma, 1e-5).unwrap());
        worst_mean = worst_mean.max(m.abs());
        worst_std = worst_std.max((s - 1.0).abs());
    }
    let mut order_kept = true;
    for _ in 0..1000 {
        let p = AlnuParams::init_random(4, &mut rng);
        let f = FeatureMap::new(3, 3, 4, (0..36).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let out = alnu_forward(&p, &f).unwrap();
        order_kept &= argsort(f.data()) == argsort(out.data());
    }
    let mut fd_err = 0.0_f64;
    for _ in 0..5 {
        let mut p = AlnuParams::init_random(4, &mut rng);
        for b in [&mut p.gamma_block, &mut p.beta_block] {
            b.conv1_b.fill(0.3);
            b.conv2_b.fill(0.3);
        }
        let f = FeatureMap::new(3, 3, 4, (0..36).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let up = FeatureMap::new(3, 3, 4, (0..36).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let loss = |q: &AlnuParams, x: &FeatureMap| -> f64 {
            alnu_forward(q, x).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = alnu_forward_cached(&p, &f).unwrap();
        let mut grads = p.clone();
        grads.zero_all();
        let g_in = alnu_backward(&p, &f, &cache, &up, &mut grads).unwrap();
        let fd_p = finite_diff_grad(
            |x| {
                let mut q = p.clone();
                q.load_flat(x).unwrap();
                loss(&q, &f)
            },
            &p.flatten(),
            1e-6,
        )
        .unwrap();
        let fd_x = finite_diff_grad(|x| loss(&p, &FeatureMap::new(3, 3, 4, x.to_vec()).unwrap()), f.data(), 1e-6).unwrap();
        fd_err = fd_err.max(max_relative_error(&grads.flatten(), &fd_p)).max(max_relative_error(g_in.data(), &fd_x));
    }
    outcome(
        worst_mean < 1e-6 && worst_std < 1e-4 && order_kept && fd_err < 1e-5,
        format!("|mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}, order kept {order_kept}, finite-difference error {fd_err:.1e}"),
    )
}

fn argsort(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    idx
}

/// Exhaustive oracle: each candidate's rank is counted directly from the
/// number of candidates placed ahead of it.
fn oracle(d: &[Vec<f64>], qm: &[RecordMeta], gm: &[RecordMeta], filter: ProtocolFilter, max_k: usize) -> Option<(f64, Vec<f64>)> {
    let junk = |q: &RecordMeta, g: &RecordMeta| match filter {
        ProtocolFilter::None => false,
        _ => g.identity == q.identity && g.time_label == q.time_label,
    };
    let mut aps = Vec::new();
    let mut firsts = Vec::new();
    for (qi, q) in qm.iter().enumerate() {
        let live: Vec<usize> = (0..gm.len()).filter(|&j| !junk(q, &gm[j])).collect();
        let rank_of = |j: usize| 1 + live.iter().filter(|&&g| d[qi][g] < d[qi][j] || (d[qi][g] == d[qi][j] && g < j)).count();
        let mut pos: Vec<usize> = live.iter().filter(|&&j| gm[j].identity == q.identity).map(|&j| rank_of(j)).collect();
        if pos.is_empty() {
            continue;
        }
        pos.sort_unstable();
        aps.push(rational_ap(&pos).unwrap_or_else(|| {
            pos.iter().enumerate().map(|(h, &r)| (h + 1) as f64 / r as f64).sum::<f64>() / pos.len() as f64
        }));
        firsts.push(pos[0]);
    }
    if aps.is_empty() {
        return None;
    }
    let n = aps.len() as f64;
    let cmc = (1..=max_k).map(|k| firsts.iter().filter(|&&f| f <= k).count() as f64 / n).collect();
    Some((aps.iter().sum::<f64>() / n, cmc))
}

/// AP as an exact fraction over a common denominator, rounded once; `None`
/// if the fraction does not fit in 53 bits.
fn rational_ap(ranks: &[usize]) -> Option<f64> {
    let mut den: u128 = 1;
    for &r in ranks {
        let r = r as u128;
        let (mut a, mut b) = (den, r);
        while b != 0 {
            (a, b) = (b, a % b);
        }
        den = den.checked_mul(r / a)?;
    }
    let num: u128 = ranks.iter().enumerate().map(|(h, &r)| (h as u128 + 1) * (den / r as u128)).sum();
    let den = den.checked_mul(ranks.len() as u128)?;
    let (mut a, mut b) = (num, den);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    let (num, den) = (num / a, den / a);
    (num <= 1 << 53 && den <= 1 << 53).then(|| num as f64 / den as f64)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut worst, mut compared) = (0usize, 0.0_f64, 0usize);
    for inst in 0..200 {
        let integer = inst % 2 == 0;
        let nq = rng.random_range(1..=10);
        let ng = rng.random_range(1..=50);
        let ids = rng.random_range(1..=6u64);
        let dim = rng.random_range(1..=4);
        let feat = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| if integer { rng.random_range(0..3) as f64 } else { rng.random_range(-1.0..1.0) }).collect()
        };
        let qf: Vec<Vec<f64>> = (0..nq).map(|_| feat(&mut rng)).collect();
        let gf: Vec<Vec<f64>> = (0..ng).map(|_| feat(&mut rng)).collect();
        let meta = |rng: &mut ChaCha8Rng| RecordMeta::with_time(rng.random_range(0..ids), rng.random_range(0..3));
        let qm: Vec<RecordMeta> = (0..nq).map(|_| meta(&mut rng)).collect();
        let gm: Vec<RecordMeta> = (0..ng).map(|_| meta(&mut rng)).collect();
        for filter in [ProtocolFilter::None, ProtocolFilter::TimeLabel] {
            let d = distance_matrix(&qf, &gf).unwrap();
            let junk = apply_protocol_filter(&qm, &gm, filter).unwrap();
            let r = rank(&d, &qm, &gm, &junk).unwrap();
            let expected = oracle(&d, &qm, &gm, filter, ng);
            let got = compute_map(&r).ok().map(|m| (m, compute_cmc(&r, ng).unwrap()));
            match (expected, got) {
                (None, None) => {}
                (Some((em, ec)), Some((gm_, gc))) => {
                    compared += 1;
                    let err = ec.iter().zip(&gc).map(|(a, b)| (a - b).abs()).fold((em - gm_).abs(), f64::max);
                    worst = worst.max(err);
                    let exact = em == gm_ && ec == gc;
                    if (integer && !exact) || err > 1e-12 {
                        mismatches += 1;
                    }
                }
                _ => mismatches += 1,
            }
        }
    }
    let fixture = QueryRanking {
        query: RecordMeta::with_time(0, 0),
        order: vec![0, 1, 2],
        positive: vec![true, false, true],
        junk: vec![],
    };
    let ap = fixture.average_precision().unwrap();
    let fixture_map = compute_map(&RankingResult { queries: vec![fixture] }).unwrap();
    outcome(
        mismatches == 0 && compared > 300 && ap == 5.0 / 6.0 && fixture_map == 5.0 / 6.0,
        format!("{compared} metric comparisons, {mismatches} mismatches, worst gap {worst:.1e}; fixture AP {ap}"),
    )
}

fn criterion_6() -> Outcome {
    let mut qf = Vec::new();
    let mut qm = Vec::new();
    let mut gf = Vec::new();
    let mut gm = Vec::new();
    for id in 0..6u64 {
        let base = id as f64 * 10.0;
        for t in 0..2i64 {
            qf.push(vec![base, 5.0 * t as f64]);
            qm.push(RecordMeta::with_time(id, t));
            // same-session duplicate, almost identical to the query
            gf.push(vec![base + 0.01, 5.0 * t as f64]);
            gm.push(RecordMeta::with_time(id, t));
        }
        // cross-session match, farther than an impostor
        gf.push(vec![base + 4.0, 9.0]);
        gm.push(RecordMeta::with_time(id, 9));
        gf.push(vec![base + 2.0, 0.5]);
        gm.push(RecordMeta::with_time(id + 100, 0));
    }
    let none = evaluate(&qf, &qm, &gf, &gm, ProtocolFilter::None).unwrap();
    let time = evaluate(&qf, &qm, &gf, &gm, ProtocolFilter::TimeLabel).unwrap();
    outcome(
        time.map < none.map && time.rank1 < none.rank1,
        format!("none mAP {:.4} rank1 {:.4}; time_label mAP {:.4} rank1 {:.4}", none.map, none.rank1, time.map, time.rank1),
    )
}

fn held_out_map(seed: u64, variant: LossVariant, norm: NormVariant) -> f64 {
    let data = generate_synthetic(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
    let model = ModelConfig { norm, ..ModelConfig::default() };
    let train = TrainConfig { seed, loss_variant: variant, ..TrainConfig::default() };
    let params = train_from_scratch(&data, &model, &train).unwrap().params;
    let set = EmbeddingSet::from_model(&params, &data).unwrap();
    modality_subset_eval(&set, &Subset::all(3), ProtocolFilter::TimeLabel).unwrap().map
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let seeds = 0..5u64;
    let run = |variant, norm| median(seeds.clone().map(|s| held_out_map(s, variant, norm)).collect());
    let base = run(LossVariant::CeOnly, NormVariant::None);
    let cdc = run(LossVariant::Cdc, NormVariant::None);
    let both = run(LossVariant::Cdc, NormVariant::Alnu);
    let secs = start.elapsed().as_secs_f64();
    let pass = base < cdc && (cdc < both || both >= base + 0.05) && secs < 600.0;
    outcome(
        pass,
        format!("median mAP baseline {base:.4}, +CdC {cdc:.4}, +CdC+ALNU {both:.4} in {secs:.0}s"),
    )
}

fn criterion_8() -> Outcome {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let params = train_from_scratch(&data, &ModelConfig::default(), &TrainConfig::default()).unwrap().params;
    let set = EmbeddingSet::from_model(&params, &data).unwrap();
    let baseline = masked_center_eval(&set, ProtocolFilter::TimeLabel).unwrap();
    let rows = missing_experiment(&set, &MissingConfig::default(), ProtocolFilter::TimeLabel).unwrap();
    let maps: Vec<f64> = rows.iter().map(|r| r.metrics.map).collect();
    let monotone = maps.windows(2).all(|w| w[1] <= w[0] + 0.01);
    let exact = rows[0].metrics == baseline;
    outcome(
        rows.len() == 5 && monotone && exact,
        format!("mAP by ratio {:?}; ratio 0 equals baseline {exact}", maps.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>()),
    )
}

fn ccnet(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_ccnet"))
        .args(args)
        .env_remove("CCNET_SEED")
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn same_csvs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in std::fs::read_dir(a).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            let other = b.join(p.file_name().unwrap());
            if std::fs::read(&p).ok() != std::fs::read(&other).ok() {
                return Err(format!("{} differs", p.display()));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let small = ["--set", "train.epochs=4", "--set", "train.p=4", "--set", "data.synth.id_count=8", "--seed", "3"];
    let mut runs: Vec<(String, Vec<String>)> = vec![
        ("gradcheck".into(), vec!["--set".into(), "gradcheck.batches=3".into(), "--set".into(), "gradcheck.trials=1".into()]),
        ("train".into(), small.iter().map(|s| s.to_string()).collect()),
    ];
    let ckpt = format!("{}/model.ccnl", d("train_a"));
    let mut eval_args: Vec<String> = small.iter().map(|s| s.to_string()).collect();
    eval_args.extend(["--checkpoint".to_string(), ckpt]);
    runs.push(("eval".into(), eval_args.clone()));
    runs.push(("missing".into(), eval_args));
    let mut sweep: Vec<String> = small.iter().map(|s| s.to_string()).collect();
    sweep.extend(["--set", "sweep.lambdas=[0.1,0.5]", "--set", "sweep.alphas=[0.2]"].map(String::from));
    runs.push(("sweep".into(), sweep));

    let mut files = 0;
    for (cmd, args) in &runs {
        let first = d(&format!("{cmd}_a"));
        let second = d(&format!("{cmd}_b"));
        let mut a: Vec<&str> = vec![cmd.as_str()];
        a.extend(args.iter().map(String::as_str));
        a.extend(["--out", first.as_str()]);
        if ccnet(&a) != 0 {
            return outcome(false, format!("{cmd} failed"));
        }
        let echo = format!("{first}/config.json");
        if ccnet(&[cmd.as_str(), "--config", echo.as_str(), "--out", second.as_str()]) != 0 {
            return outcome(false, format!("{cmd} rerun from echo failed"));
        }
        match same_csvs(Path::new(&first), Path::new(&second)) {
            Ok(n) => files += n,
            Err(e) => return outcome(false, e),
        }
    }
    outcome(files >= 5, format!("{files} CSV outputs identical across {} reruns", runs.len()))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "gradient exactness", criterion_1),
        (2, "algebraic identities", criterion_2),
        (3, "loss calculus", criterion_3),
        (4, "ALNU contracts", criterion_4),
        (5, "metric oracle equivalence", criterion_5),
        (6, "protocol semantics", criterion_6),
        (7, "ablation direction", criterion_7),
        (8, "missing-modality robustness", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let o = f();
        println!("criterion {n} ({name}): {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
