//! Acceptance suite: every criterion runs, each prints one PASS/FAIL line,
//! and the process exits non-zero if any failed.
//!
//! `cargo test --test acceptance -- 3 9` runs only criteria 3 and 9.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use referkit::referral::retained_indices;
use referkit::uncertainty::{entropy, risk_with, NegLogLikelihood};
use referkit::{qwk, qwk_risk, refer, roc_auc, ConfusionMatrix, PredictionSet, RngStream, UncertaintyVector};
use referkit_cli::toy::ordinal_referral_experiment;
use referkit_toybnn::model::WeightNoise;
use referkit_toybnn::{
    elbo_mfvi, grad_check, gvi_objective, kl_diag_gaussian, map_objective, radial_objective, radial_sample,
    renyi_divergence_diag, Method, Objective, Tensor, ToyMlp, TrainConfig, VariationalMlp,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Transform = fn(f64) -> f64;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration, detail: String) -> Outcome {
    let took = start.elapsed();
    if took <= budget {
        Ok(detail)
    } else {
        Err(format!("{detail}; but took {took:.1?}, budget {budget:?}"))
    }
}

fn random_row(rng: &mut RngStream, m: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..m)
        .map(|_| match rng.below(6) {
            0 => 0.0,
            1 => rng.uniform() * 1e-9,
            _ => rng.uniform(),
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.below(m as u64) as usize] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

// 1 ------------------------------------------------------------------------

fn entropy_risk_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = 2 + rng.below(9) as usize;
        let rows: Vec<Vec<f64>> = (0..100).map(|_| random_row(&mut rng, m)).collect();
        let preds = PredictionSet::new((0..100).map(|i| i.to_string()).collect(), vec![0; 100], rows).unwrap();
        let risk = risk_with(&preds, &NegLogLikelihood).unwrap();
        for (a, b) in risk.values().iter().zip(entropy(&preds).values()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max difference {worst:e}"))?;
    within_budget(start, Duration::from_secs(5), format!("10000 rows, max difference {worst:e}"))
}

// 2 ------------------------------------------------------------------------

/// Kappa written straight from its definition in exact arithmetic:
/// 1 − Σ w·O / Σ w·E with E = (row sums ⊗ column sums) / n and w = (i−j)².
fn kappa_exact(counts: &[u64], m: usize) -> Option<Ratio<i128>> {
    let c = |i: usize, j: usize| i128::from(counts[i * m + j]);
    let n: i128 = counts.iter().map(|&x| i128::from(x)).sum();
    if n == 0 {
        return None;
    }
    let mut observed = Ratio::from_integer(0);
    let mut expected = Ratio::from_integer(0);
    for i in 0..m {
        for j in 0..m {
            let w = Ratio::from_integer(((i as i128) - (j as i128)).pow(2));
            let row: i128 = (0..m).map(|k| c(i, k)).sum();
            let col: i128 = (0..m).map(|k| c(k, j)).sum();
            observed += w * Ratio::from_integer(c(i, j));
            expected += w * Ratio::new(row * col, n);
        }
    }
    (expected != Ratio::from_integer(0)).then(|| Ratio::from_integer(1) - observed / expected)
}

fn to_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn qwk_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(2);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let m = 2 + rng.below(5) as usize;
        let counts: Vec<u64> = (0..m * m).map(|_| if rng.below(4) == 0 { 0 } else { rng.below(40) }).collect();
        let Some(exact) = kappa_exact(&counts, m) else { continue };
        let got = qwk(&ConfusionMatrix::new(m, counts).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((got - 100.0 * to_f64(exact)).abs());
        checked += 1;
    }
    ensure(worst <= 1e-10, || format!("max difference {worst:e}"))?;
    for _ in 0..200 {
        let m = 2 + rng.below(5) as usize;
        let mut counts = vec![0; m * m];
        for k in 0..m {
            counts[k * m + k] = 1 + rng.below(50);
        }
        let got = qwk(&ConfusionMatrix::new(m, counts).unwrap()).map_err(|e| e.to_string())?;
        ensure(got == 100.0, || format!("diagonal matrix gave {got}"))?;
    }
    within_budget(start, Duration::from_secs(10), format!("1000 matrices, max difference {worst:e}; diagonals exactly 100"))
}

// 3 ------------------------------------------------------------------------

fn qwk_risk_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(3);
    let m = 5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 500 {
        let counts: Vec<u64> = (0..m * m).map(|_| rng.below(30)).collect();
        let row = random_row(&mut rng, m);
        // Every (prediction, truth) perturbation must leave kappa defined.
        let mut kappas = vec![0.0; m * m];
        let mut defined = true;
        for pred in 0..m {
            for truth in 0..m {
                let mut single = vec![0u64; m * m];
                single[pred * m + truth] = 1;
                let perturbed: Vec<u64> = counts.iter().zip(&single).map(|(a, b)| a + b).collect();
                match kappa_exact(&perturbed, m) {
                    Some(k) => kappas[pred * m + truth] = to_f64(k),
                    None => defined = false,
                }
            }
        }
        if !defined {
            continue;
        }
        let mut oracle = 0.0;
        for pred in 0..m {
            for truth in 0..m {
                oracle += row[pred] * row[truth] * -kappas[pred * m + truth];
            }
        }
        let preds = PredictionSet::new(vec!["x".into()], vec![0], vec![row]).unwrap();
        let got = qwk_risk(&preds, &ConfusionMatrix::new(m, counts).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((got.values()[0] - oracle).abs());
        checked += 1;
    }
    ensure(worst <= 1e-12, || format!("max difference {worst:e}"))?;
    within_budget(start, Duration::from_secs(10), format!("500 pairs, max difference {worst:e}"))
}

// 4 ------------------------------------------------------------------------

fn auc_oracle() -> Outcome {
    let mut rng = RngStream::new(4);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let n = 2 + rng.below(199) as usize;
        // A coarse grid makes ties frequent.
        let levels = 1 + rng.below(20);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(2) as usize).collect();
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| labels[i] == 1);
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut wins = 0.0;
        for &p in &pos {
            for &q in &neg {
                wins += if scores[p] > scores[q] {
                    1.0
                } else if scores[p] == scores[q] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let oracle = 100.0 * wins / (pos.len() * neg.len()) as f64;
        let got = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs());
        checked += 1;
    }
    ensure(worst <= 1e-12, || format!("max difference {worst:e}"))?;
    Ok(format!("1000 score sets, max difference {worst:e}"))
}

// 5 ------------------------------------------------------------------------

fn radial_norm() -> Outcome {
    let start = Instant::now();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let draws = 100_000;
    let chunks = 100;
    let mut report = Vec::new();
    let mut failed = false;
    for (k, &d) in [10usize, 1_000, 100_000].iter().enumerate() {
        let root = RngStream::new(50 + k as u64);
        let mut setup = root.child(0);
        let mu: Vec<f64> = (0..d).map(|_| setup.random_range(-1.0..1.0)).collect();
        let sigma: Vec<f64> = (0..d).map(|_| setup.random_range(0.1..2.0)).collect();
        // Chunk c draws from its own child stream, so the result does not
        // depend on how rayon schedules the chunks.
        let total: f64 = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = root.child(1 + c);
                let mut acc = 0.0;
                for _ in 0..draws / chunks {
                    let w = radial_sample(&mu, &sigma, &mut rng);
                    let sq: f64 = w.iter().zip(&mu).zip(&sigma).map(|((w, m), s)| ((w - m) / s).powi(2)).sum();
                    acc += sq.sqrt();
                }
                acc
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let mean = total / draws as f64;
        let rel = (mean - target).abs() / target;
        failed |= rel > 0.02;
        report.push(format!("d={d}: {mean:.4} ({:.2}%)", 100.0 * rel));
    }
    let detail = format!("target {target:.4}; {}", report.join(", "));
    ensure(!failed, || detail.clone())?;
    within_budget(start, Duration::from_secs(30), detail)
}

// 6 ------------------------------------------------------------------------

fn log_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn simpson(f: impl Fn(f64) -> f64, (mq, sq): (f64, f64), (mp, sp): (f64, f64)) -> f64 {
    let lo = (mq - 14.0 * sq).min(mp - 14.0 * sp);
    let hi = (mq + 14.0 * sq).max(mp + 14.0 * sp);
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

fn divergences() -> Outcome {
    let mut rng = RngStream::new(6);
    let alpha = 0.5;
    let (mut worst_kl, mut worst_renyi, mut worst_sym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = rng.random_range(1..4);
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..d).map(|_| rng.random_range(lo..hi)).collect() };
        let (mq, sq, mp, sp) = (draw(-2.0, 2.0), draw(0.3, 2.0), draw(-2.0, 2.0), draw(0.3, 2.0));
        let mut kl_quad = 0.0;
        let mut renyi_quad = 0.0;
        for j in 0..d {
            let (q, p) = ((mq[j], sq[j]), (mp[j], sp[j]));
            kl_quad += simpson(
                |x| {
                    let lq = log_normal_pdf(x, q.0, q.1);
                    lq.exp() * (lq - log_normal_pdf(x, p.0, p.1))
                },
                q,
                p,
            );
            let integral = simpson(
                |x| (alpha * log_normal_pdf(x, q.0, q.1) + (1.0 - alpha) * log_normal_pdf(x, p.0, p.1)).exp(),
                q,
                p,
            );
            renyi_quad += integral.ln() / (alpha * (alpha - 1.0));
        }
        let kl = kl_diag_gaussian(&mq, &sq, &mp, &sp).map_err(|e| e.to_string())?;
        let r = renyi_divergence_diag(&mq, &sq, &mp, &sp, alpha).map_err(|e| e.to_string())?;
        let r_swapped = renyi_divergence_diag(&mp, &sp, &mq, &sq, alpha).map_err(|e| e.to_string())?;
        worst_kl = worst_kl.max((kl - kl_quad).abs());
        worst_renyi = worst_renyi.max((r - renyi_quad).abs());
        worst_sym = worst_sym.max((r - r_swapped).abs());
    }
    let detail = format!("KL {worst_kl:e}, Rényi {worst_renyi:e}, symmetry {worst_sym:e}");
    ensure(worst_kl <= 1e-6 && worst_renyi <= 1e-6 && worst_sym <= 1e-12, || detail.clone())?;
    Ok(detail)
}

// 7 ------------------------------------------------------------------------

const SIZES: [usize; 4] = [2, 5, 4, 3];

fn grad_checks() -> Outcome {
    let pair = |o: referkit_toybnn::Result<Objective>| o.map(|o| (o.value, o.grads));
    let batch = |rng: &mut RngStream| {
        let x = Tensor::new(6, 2, (0..12).map(|_| rng.random_range(-2.0..2.0)).collect());
        let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
        (x, y)
    };
    let split = |p: &[Tensor]| {
        let half = p.len() / 2;
        VariationalMlp::from_parts(&SIZES, p[..half].to_vec(), p[half..].to_vec())
    };
    let mut worst = [0.0f64; 4];
    for seed in 0..5 {
        let mut rng = RngStream::new(700 + seed);
        let net = ToyMlp::init(&SIZES, 0.0, &mut rng).unwrap();
        let (x, y) = batch(&mut rng);
        let f = |p: &[Tensor]| pair(map_objective(&ToyMlp::from_params(&SIZES, p.to_vec(), 0.0)?, &x, &y, 1e-2, None));
        worst[0] = worst[0].max(grad_check(f, net.params(), 60, &mut rng).map_err(|e| e.to_string())?);

        let v = VariationalMlp::init(&SIZES, 0.2, &mut rng).unwrap();
        let flat: Vec<Tensor> = v.mu().iter().chain(v.rho()).cloned().collect();
        let (x, y) = batch(&mut rng);
        let gauss: Vec<Vec<Tensor>> = (0..2).map(|_| WeightNoise::Gaussian.draw(&SIZES, &mut rng)).collect();
        let radial: Vec<Vec<Tensor>> = (0..2).map(|_| WeightNoise::Radial.draw(&SIZES, &mut rng)).collect();
        let mfvi = |p: &[Tensor]| pair(elbo_mfvi(&split(p)?, &x, &y, &gauss, 0.25));
        let rad = |p: &[Tensor]| pair(radial_objective(&split(p)?, &x, &y, &radial, 0.25));
        let gvi = |p: &[Tensor]| pair(gvi_objective(&split(p)?, &x, &y, &gauss, 0.25, 0.5));
        worst[1] = worst[1].max(grad_check(mfvi, &flat, 80, &mut rng).map_err(|e| e.to_string())?);
        worst[2] = worst[2].max(grad_check(rad, &flat, 80, &mut rng).map_err(|e| e.to_string())?);
        worst[3] = worst[3].max(grad_check(gvi, &flat, 80, &mut rng).map_err(|e| e.to_string())?);
    }
    let detail =
        format!("max relative error MAP {:.1e}, MFVI {:.1e}, Radial {:.1e}, GVI {:.1e}", worst[0], worst[1], worst[2], worst[3]);
    ensure(worst.iter().all(|&e| e <= 1e-3), || detail.clone())?;
    Ok(detail)
}

// 8 ------------------------------------------------------------------------

fn referral_benefit() -> Outcome {
    let start = Instant::now();
    let setups = [
        ("MFVI", Method::Mfvi, 1),
        ("Radial", Method::Radial, 1),
        ("GVI", Method::Gvi, 1),
        ("MC dropout", Method::McDropout, 1),
        ("3-member ensemble", Method::Map, 3),
    ];
    let mut lines = Vec::new();
    let mut failed = false;
    for (name, method, members) in setups {
        let mut wins = 0;
        for seed in 0..20 {
            let config = TrainConfig { method, ensemble_size: members, epochs: 60, seed, ..TrainConfig::default() };
            let out = ordinal_referral_experiment(&config, 1000, 0.6, 16, 0.3).map_err(|e| format!("{name}: {e}"))?;
            if out.qwk_referred >= out.qwk_full {
                wins += 1;
            }
        }
        failed |= wins < 16;
        lines.push(format!("{name} {wins}/20"));
    }
    let detail = lines.join(", ");
    ensure(!failed, || detail.clone())?;
    within_budget(start, Duration::from_secs(600), detail)
}

// 9 ------------------------------------------------------------------------

fn golden_reports() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = common::golden_cases();
    ensure(!cases.is_empty(), || "no golden cases found".into())?;
    for name in &cases {
        common::check_golden_case(name, dir.path()).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{} cases, B=100, byte-identical reruns and exact tables", cases.len()))
}

// 10 -----------------------------------------------------------------------

fn referral_invariants() -> Outcome {
    let mut rng = RngStream::new(10);
    let levels = [0.0, 0.1, 0.25, 0.3, 0.5, 0.75, 0.9, 0.99];
    for instance in 0..1000 {
        let n = 1 + rng.below(200) as usize;
        let m = 2 + rng.below(4) as usize;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_row(&mut rng, m)).collect();
        let labels = (0..n).map(|_| rng.below(m as u64) as usize).collect();
        let preds = PredictionSet::new((0..n).map(|i| format!("id{i}")).collect(), labels, rows).unwrap();
        let continuous: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let grid: Vec<f64> = (0..n).map(|_| rng.below(16) as f64 / 32.0).collect();
        let fail = |what: &str| format!("instance {instance} (n={n}): {what}");

        for u in [&continuous, &grid] {
            let kept: Vec<Vec<usize>> = levels.iter().map(|&l| retained_indices(u, l).unwrap()).collect();
            for (w, &level) in kept.windows(2).zip(&levels[1..]) {
                ensure(w[1].iter().all(|i| w[0].binary_search(i).is_ok()), || fail("nesting"))?;
                ensure(w[1].len() == n - (level * n as f64).floor() as usize, || fail("retained count"))?;
            }
        }

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let shuffled = preds.select(&perm);
        let shuffled_u: Vec<f64> = perm.iter().map(|&i| continuous[i]).collect();
        for &level in &levels {
            let ids = |p: &PredictionSet, u: &[f64]| {
                let mut ids = refer(p, &UncertaintyVector::new(u.to_vec()).unwrap(), level).unwrap().ids().to_vec();
                ids.sort();
                ids
            };
            ensure(ids(&preds, &continuous) == ids(&shuffled, &shuffled_u), || fail("permutation equivariance"))?;
        }

        let transforms: [(&Vec<f64>, Transform); 4] =
            [(&continuous, |x| 8.0 * x), (&grid, |x| 3.0 * x - 1.0), (&grid, f64::exp), (&grid, |x| x * x * x)];
        for (u, f) in transforms {
            let v: Vec<f64> = u.iter().map(|&x| f(x)).collect();
            for &level in &levels {
                ensure(retained_indices(u, level).unwrap() == retained_indices(&v, level).unwrap(), || {
                    fail("order-only dependence")
                })?;
            }
        }
    }
    Ok("1000 instances: nesting, permutation equivariance, order-only dependence".into())
}

// --------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 10] = [
        ("entropy equals expected NLL risk", entropy_risk_identity),
        ("QWK matches exact-rational kappa", qwk_oracle),
        ("QWK-Risk matches brute-force enumeration", qwk_risk_oracle),
        ("rank AUC matches pair counting", auc_oracle),
        ("radial residual norm is dimension-free", radial_norm),
        ("KL and Rényi match quadrature", divergences),
        ("objective gradients match finite differences", grad_checks),
        ("QWK-Risk referral improves retained QWK", referral_benefit),
        ("bootstrap reports are deterministic and match golden tables", golden_reports),
        ("referral nesting and order invariance", referral_invariants),
    ];
    // Numeric arguments select criteria; cargo's own flags are ignored.
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();

    // Panics are reported on the criterion's own line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let number = k + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {number:>2} PASS [{took:7.2}s] {name}: {detail}"),
            Err(detail) => {
                println!("criterion {number:>2} FAIL [{took:7.2}s] {name}: {detail}");
                failures.push(number);
            }
        }
    }
    if !failures.is_empty() {
        println!("acceptance: {} failed: {failures:?}", failures.len());
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
