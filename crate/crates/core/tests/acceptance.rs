//! Acceptance criteria. Prints one `criterion N: PASS|FAIL` line per
//! criterion and exits non-zero if any fails. Extra arguments filter
//! criteria by substring, e.g. `cargo test --test acceptance -- determinism`.

use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualfair::balance::{balance_all, SmoteParams};
use dualfair::fairness::{
    compute_awi, situation_test, Confusion, FairnessError, PerformanceMetrics,
};
use dualfair::harness::{generate_synthetic, run_dualfair, ExperimentConfig, SyntheticSpec};
use dualfair::model::{objective, ClassifierModel, FitConfig};
use dualfair::tabular::{ColumnCodec, ColumnKind, ColumnSpec, Dataset};
use dualfair::worlds::{partition, SensitiveSpec, WorldBinding};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2}: {verdict}  {name}  ({detail})");
}

fn hmda_fixture(rows: usize, features: usize, bias: f64, skew: f64, seed: u64) -> Dataset {
    let s = SyntheticSpec::new(rows, SensitiveSpec::hmda(), features)
        .with_label_bias(bias)
        .with_skew_ratio(skew);
    generate_synthetic(&s, seed).unwrap()
}

/// Three HMDA-shaped sensitive columns, `features` numeric columns in
/// [0,1] and a random 0/1 label. No row-count floor, unlike the generator.
fn random_fixture(rows: usize, features: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let spec = SensitiveSpec::hmda();
    let mut columns = Vec::new();
    let mut codecs = Vec::new();
    for p in spec.parameters() {
        columns.push(ColumnSpec::categorical(
            &p.name,
            ColumnKind::Sensitive,
            p.options.clone(),
        ));
        codecs.push(ColumnCodec::SensitiveCode {
            values: p.options.clone(),
        });
    }
    for j in 0..features {
        columns.push(ColumnSpec::numeric_feature(format!("x{j}")));
        codecs.push(ColumnCodec::Numeric { min: 0.0, max: 1.0 });
    }
    columns.push(ColumnSpec::binary_label("y"));
    codecs.push(ColumnCodec::Label { values: None });
    let data = (0..rows)
        .map(|_| {
            let mut r: Vec<f64> = (0..3).map(|_| rng.random_range(0..3u32) as f64).collect();
            r.extend((0..features).map(|_| rng.random::<f64>()));
            r.push(rng.random_range(0..2u32) as f64);
            r
        })
        .collect();
    Dataset::from_parts(columns, codecs, data).unwrap()
}

fn half_up_median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]).div_ceil(2)
    }
}

fn criterion_01_world_arithmetic() -> bool {
    let spec = SensitiveSpec::hmda();
    let worlds = spec.enumerate_worlds();
    let distinct: std::collections::HashSet<_> = worlds.iter().collect();
    let data = hmda_fixture(2_700, 3, 0.0, 1.0, 1);
    let cells = partition(&data, &spec).unwrap();
    let pass = spec.count_worlds() == 27
        && worlds.len() == 27
        && distinct.len() == 27
        && cells.len() == 27
        && cells.total_rows() == data.n_rows();
    report(
        1,
        "world arithmetic",
        pass,
        format!(
            "count {} enumerated {} cells {}",
            spec.count_worlds(),
            worlds.len(),
            cells.len()
        ),
    );
    pass
}

fn criterion_02_balance_exactness() -> bool {
    let spec = SensitiveSpec::hmda();
    let data = hmda_fixture(20_000, 4, 0.4, 4.0, 2);
    let before = partition(&data, &spec).unwrap();
    let counts: Vec<(usize, usize)> = before
        .cells()
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let acc = c.iter().filter(|&&i| data.label(i) == 1).count();
            (c.len() - acc, acc)
        })
        .collect();
    let target_rej = half_up_median(counts.iter().map(|c| c.0).collect());
    let target_acc = half_up_median(counts.iter().map(|c| c.1).collect());

    let balanced = balance_all(&data, &before, &SmoteParams::default().with_seed(5)).unwrap();
    let after = partition(&balanced, &spec).unwrap();
    let mut misses = 0;
    for cell in after.cells() {
        let acc = cell.iter().filter(|&&i| balanced.label(i) == 1).count();
        if acc != target_acc || cell.len() - acc != target_rej {
            misses += 1;
        }
    }
    let pass = misses == 0 && counts.len() == 27;
    report(
        2,
        "balance exactness",
        pass,
        format!(
            "targets rejected {target_rej} accepted {target_acc}; {misses} of 27 worlds off target"
        ),
    );
    pass
}

/// Direct evaluation of every counterfactual, sharing nothing with the library
/// beyond reading the fixture rows.
fn brute_force_biased(rows: &[Vec<f64>], weights: &[f64], bias: f64) -> usize {
    let mut biased = 0;
    for row in rows {
        let x = &row[..row.len() - 1];
        let mut seen = [false; 2];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut z = bias
                        + weights[0] * a as f64
                        + weights[1] * b as f64
                        + weights[2] * c as f64;
                    for j in 3..x.len() {
                        z += weights[j] * x[j];
                    }
                    let p = 1.0 / (1.0 + (-z).exp());
                    seen[usize::from(p >= 0.5)] = true;
                }
            }
        }
        if seen[0] && seen[1] {
            biased += 1;
        }
    }
    biased
}

fn criterion_03_awi_oracle() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = random_fixture(200, 3, &mut rng);
    let weights = vec![0.45, -0.3, 0.2, 2.5, -1.8, 1.1];
    let bias = -0.7;
    let model = ClassifierModel::new(data.feature_names(), weights.clone(), bias, 0.5).unwrap();
    let spec = SensitiveSpec::hmda();
    let binding = WorldBinding::new(&spec, &data).unwrap();
    let awi = compute_awi(&model, &data, &binding, &spec.enumerate_worlds()).unwrap();
    let oracle = brute_force_biased(data.rows(), &weights, bias);
    let oracle_raw = oracle as f64 / 200.0;
    let pass = awi.biased_points == oracle
        && (awi.raw - oracle_raw).abs() <= 1e-12
        && oracle > 0
        && oracle < 200;
    report(
        3,
        "AWI oracle equivalence",
        pass,
        format!(
            "pipeline {} biased, oracle {oracle}, raw {} vs {oracle_raw}",
            awi.biased_points, awi.raw
        ),
    );
    pass
}

fn criterion_04_sensitive_blind_zero() -> bool {
    let spec = SensitiveSpec::hmda();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let data = if trial % 2 == 0 {
            random_fixture(300, 4, &mut rng)
        } else {
            hmda_fixture(1_000, 4, 0.4, 4.0, trial)
        };
        let mut weights = vec![0.0; 3];
        weights.extend((0..4).map(|_| rng.random_range(-5.0..5.0)));
        let b = rng.random_range(-2.0..2.0);
        let model = ClassifierModel::new(data.feature_names(), weights, b, 0.5).unwrap();
        let binding = WorldBinding::new(&spec, &data).unwrap();
        let awi = compute_awi(&model, &data, &binding, &spec.enumerate_worlds()).unwrap();
        worst = worst.max(awi.raw);
    }
    let pass = worst == 0.0;
    report(
        4,
        "sensitive-blind zero",
        pass,
        format!("max raw over 20 datasets {worst}"),
    );
    pass
}

fn criterion_05_table_pattern() -> bool {
    let data = hmda_fixture(50_000, 5, 0.4, 4.0, 7);
    let cfg = ExperimentConfig {
        master_seed: 1,
        ..ExperimentConfig::default()
    };
    let r = run_dualfair(&data, &cfg, &SensitiveSpec::hmda()).unwrap();
    let (b, a) = (&r.median_before, &r.median_after);
    let drop = (b.awi_reported - a.awi_reported) / b.awi_reported;
    let d_acc = (a.accuracy - b.accuracy).abs();
    let awi_ok = drop >= 0.30;
    let acc_ok = d_acc <= 0.03;
    let fa_ok = a.false_alarm <= b.false_alarm;
    let pass = awi_ok && acc_ok && fa_ok;
    report(
        5,
        "before/after pattern",
        pass,
        format!(
            "AWI {:.3} -> {:.3} ({:.0}% drop, {}); accuracy {:.3} -> {:.3} (|d| {d_acc:.3}, {}); false alarm {:.3} -> {:.3} ({})",
            b.awi_reported,
            a.awi_reported,
            100.0 * drop,
            if awi_ok { "ok" } else { "fail" },
            b.accuracy,
            a.accuracy,
            if acc_ok { "ok" } else { "fail" },
            b.false_alarm,
            a.false_alarm,
            if fa_ok { "ok" } else { "fail" },
        ),
    );
    pass
}

fn criterion_06_no_harm_unbiased() -> bool {
    let data = hmda_fixture(20_000, 5, 0.0, 1.0, 8);
    let cfg = ExperimentConfig {
        master_seed: 2,
        ..ExperimentConfig::default()
    };
    let r = run_dualfair(&data, &cfg, &SensitiveSpec::hmda()).unwrap();
    let (b, a) = (&r.median_before, &r.median_after);
    let deltas = [
        ("accuracy", a.accuracy - b.accuracy),
        ("precision", a.precision - b.precision),
        ("recall", a.recall - b.recall),
        ("false_alarm", a.false_alarm - b.false_alarm),
        ("f1", a.f1 - b.f1),
    ];
    let worst = deltas.iter().map(|d| d.1.abs()).fold(0.0, f64::max);
    let pass = worst < 0.05;
    let detail = deltas
        .iter()
        .map(|(n, d)| format!("{n} {d:+.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(6, "no harm on unbiased data", pass, detail);
    pass
}

fn criterion_07_gradient() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(3..30);
        let d = rng.random_range(1..7);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                r.push(rng.random_range(0..2u32) as f64);
                r
            })
            .collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let b = rng.random_range(-1.0..1.0);
        let l2 = if rng.random::<bool>() {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        };
        let analytic = objective(&w, b, &rows, l2);
        let mut a = analytic.grad_weights.clone();
        a.push(analytic.grad_bias);
        let mut numeric = Vec::with_capacity(d + 1);
        for j in 0..=d {
            let eval = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < d {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                objective(&w2, b2, &rows, l2).loss
            };
            numeric.push((eval(eps) - eval(-eps)) / (2.0 * eps));
        }
        let diff: f64 = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = a
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt())
            .max(1e-3);
        worst = worst.max(diff / scale);
    }
    let pass = worst < 1e-5;
    report(
        7,
        "gradient correctness",
        pass,
        format!("max relative error {worst:.2e} over 100 instances"),
    );
    pass
}

fn criterion_08_metric_formulas() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let top = if i % 10 == 0 { 3 } else { 500 };
        let c = Confusion {
            tp: rng.random_range(0..top),
            fp: rng.random_range(0..top),
            tn: rng.random_range(0..top),
            fn_: rng.random_range(0..top),
        };
        if c.total() == 0 {
            continue;
        }
        let (tp, fp, tn, fnn) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
        let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        let precision = div(tp, tp + fp);
        let recall = div(tp, tp + fnn);
        let expected = [
            div(tp + tn, tp + tn + fp + fnn),
            precision,
            recall,
            div(fp, fp + tn),
            div(2.0 * precision * recall, precision + recall),
        ];
        let m = PerformanceMetrics::from_confusion(c);
        let got = [m.accuracy, m.precision, m.recall, m.false_alarm, m.f1];
        for (g, e) in got.iter().zip(&expected) {
            worst = worst.max((g - e).abs());
        }
    }
    let pass = worst < 1e-12;
    report(
        8,
        "metric formulas",
        pass,
        format!("max abs error {worst:.1e} over 1000 matrices"),
    );
    pass
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_dualfair"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const DETERMINISM_CONFIG: &str = r#"{
  "columns": [
    {"name": "race", "kind": "sensitive", "domain": ["White", "Black", "Joint"]},
    {"name": "sex", "kind": "sensitive", "domain": ["Male", "Female", "Joint"]},
    {"name": "ethnicity", "kind": "sensitive", "domain": ["Not Hispanic or Latino", "Hispanic or Latino", "Joint"]},
    {"name": "income", "kind": "feature"},
    {"name": "loan_amount", "kind": "feature"},
    {"name": "property_value", "kind": "feature"},
    {"name": "action_taken", "kind": "label", "domain": ["denied", "originated"]}
  ],
  "seed": 9,
  "experiment": {"repeats": 4},
  "synthetic": {"label_bias_strength": 0.4, "skew_ratio": 4}
}"#;

fn criterion_09_determinism() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    std::fs::write(p("cfg.json"), DETERMINISM_CONFIG).unwrap();
    run_cli(&[
        "synth",
        "--config",
        &p("cfg.json"),
        "--rows",
        "10000",
        "--output",
        &p("data.csv"),
    ]);
    let runs = [("serial", "1"), ("parallel", "4"), ("again", "4")];
    for (name, threads) in runs {
        run_cli(&[
            "--threads",
            threads,
            "evaluate",
            "--config",
            &p("cfg.json"),
            "--input",
            &p("data.csv"),
            "--report",
            &p(name),
        ]);
    }
    let read = |run: &str, file: &str| std::fs::read(Path::new(&p(run)).join(file)).unwrap();
    let mut pass = true;
    for file in ["runs.csv", "summary.txt"] {
        let base = read("serial", file);
        pass &= !base.is_empty() && read("parallel", file) == base && read("again", file) == base;
    }
    report(
        9,
        "determinism",
        pass,
        "evaluate with 1 thread, 4 threads, and 4 threads again".into(),
    );
    pass
}

fn removal_fraction(data: &Dataset) -> f64 {
    match situation_test(data, &SensitiveSpec::hmda(), &FitConfig::default()) {
        Ok(o) => o.removed.len() as f64 / data.n_rows() as f64,
        // The all-removed error is the saturated end of the same scale.
        Err(FairnessError::AllRowsRemoved) => 1.0,
        Err(e) => panic!("situation test failed: {e}"),
    }
}

fn criterion_10_situation_testing() -> bool {
    let base = hmda_fixture(5_000, 3, 0.0, 1.0, 10);
    let f0 = base.column_index("f0").unwrap();
    let sex = base.column_index("sex").unwrap();
    let relabel = |rule: &dyn Fn(&mut Vec<f64>) -> bool| {
        let rows = base
            .rows()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                let y = rule(&mut r);
                *r.last_mut().unwrap() = f64::from(u8::from(y));
                r
            })
            .collect();
        base.with_rows(rows).unwrap()
    };
    // Label literally equal to a binary feature, and to a binary sex code.
    let by_feature = relabel(&|r: &mut Vec<f64>| {
        r[f0] = f64::from(u8::from(r[f0] >= 0.5));
        r[f0] == 1.0
    });
    let by_sex = relabel(&|r: &mut Vec<f64>| {
        r[sex] = r[sex].min(1.0);
        r[sex] == 1.0
    });
    let blind = removal_fraction(&by_feature);
    let sexed = removal_fraction(&by_sex);
    let pass = blind == 0.0 && sexed > 0.9;
    report(
        10,
        "situation-testing sanity",
        pass,
        format!(
            "label = feature removes {:.1}%, label = sex removes {:.1}%",
            100.0 * blind,
            100.0 * sexed
        ),
    );
    pass
}

fn main() {
    let criteria: [(&str, fn() -> bool); 10] = [
        (
            "criterion_01_world_arithmetic",
            criterion_01_world_arithmetic,
        ),
        (
            "criterion_02_balance_exactness",
            criterion_02_balance_exactness,
        ),
        ("criterion_03_awi_oracle", criterion_03_awi_oracle),
        (
            "criterion_04_sensitive_blind_zero",
            criterion_04_sensitive_blind_zero,
        ),
        ("criterion_05_table_pattern", criterion_05_table_pattern),
        (
            "criterion_06_no_harm_unbiased",
            criterion_06_no_harm_unbiased,
        ),
        ("criterion_07_gradient", criterion_07_gradient),
        ("criterion_08_metric_formulas", criterion_08_metric_formulas),
        ("criterion_09_determinism", criterion_09_determinism),
        (
            "criterion_10_situation_testing",
            criterion_10_situation_testing,
        ),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = Vec::new();
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let pass = std::panic::catch_unwind(run).unwrap_or_else(|_| {
            println!("{name}: FAIL  (panicked)");
            false
        });
        if !pass {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
