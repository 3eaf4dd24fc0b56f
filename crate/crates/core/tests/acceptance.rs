//! End-to-end acceptance checks, one line per criterion.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ddlab::augment::{ConcatView, Materialize};
use ddlab::biasvar::{decompose_point, ProbDist};
use ddlab::datagen::{
    gen_linreg, load_idx, sample_theta, write_idx, write_idx_images, write_idx_labels, IdxImages,
    IdxLabels,
};
use ddlab::linreg::{argmax_location, design_rank, median_curve};
use ddlab::nnet::{gradient_suite, lift_suite, loss_only, LossKind, MlpModel};
use ddlab::sweep::{
    run_sweep, to_csv, AxisName, CurvePoint, ExperimentKind, Metric, SweepConfig, Variant,
};
use ddlab::Rng;
use ndarray::Array2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn workspace_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn preset(name: &str) -> SweepConfig {
    let text =
        fs::read_to_string(workspace_file(&format!("presets/{name}"))).expect("preset exists");
    SweepConfig::from_json(&text).expect("preset parses")
}

fn artifact_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).expect("artifact dir");
    dir
}

fn fig1_points() -> Vec<CurvePoint> {
    let mut cfg = preset("fig1.json");
    cfg.threads = 1;
    let out = run_sweep(&cfg).expect("fig1 sweep runs");
    fs::write(artifact_dir().join("fig1_curve.csv"), to_csv(&out.points)).expect("write csv");
    out.points
}

fn median_at(curve: &[(f64, f64)], n: f64) -> f64 {
    curve
        .iter()
        .find(|(x, _)| *x == n)
        .map(|(_, v)| *v)
        .expect("grid point present")
}

fn criterion_1(points: &[CurvePoint], secs: f64) -> Outcome {
    let curve = median_curve(points, Variant::Standard);
    let peak = argmax_location(&curve).unwrap_or(f64::NAN);
    let (m10, m30, m100) = (
        median_at(&curve, 10.0),
        median_at(&curve, 30.0),
        median_at(&curve, 100.0),
    );
    let pass = (28.0..=32.0).contains(&peak) && m30 >= 5.0 * m10 && m30 >= 20.0 * m100;
    outcome(
        pass,
        format!(
            "argmax n={peak}; median MSE n=10 {m10:.4}, n=30 {m30:.4}, n=100 {m100:.4}; \
             ratios 30/10 {:.2} (need >= 5), 30/100 {:.1} (need >= 20); sweep {secs:.1}s",
            m30 / m10,
            m30 / m100
        ),
    )
}

fn criterion_2(points: &[CurvePoint]) -> Outcome {
    let s = argmax_location(&median_curve(points, Variant::Standard));
    let c = argmax_location(&median_curve(points, Variant::Concat));
    outcome(
        s.is_some() && s == c,
        format!("standard argmax n={s:?}, concat argmax n={c:?}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = Rng::new(3);
    let mut checked = 0;
    let mut bad = Vec::new();
    for d in [5usize, 30] {
        for n in 2usize..=10 {
            for _ in 0..50 {
                let theta = sample_theta(d, &mut rng).unwrap();
                let base = gen_linreg(n, d, 0.1, &theta, &mut rng).unwrap();
                let design = ConcatView::regression(&base)
                    .unwrap()
                    .materialize(1 << 30)
                    .unwrap();
                let rank = design_rank(design.features.view()).unwrap();
                checked += 1;
                if rank != (2 * n - 1).min(2 * d) {
                    bad.push((n, d, rank));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{checked} designs, mismatches {bad:?}"),
    )
}

fn criterion_4() -> Outcome {
    let r = gradient_suite(100, 4).unwrap();
    outcome(
        r.passed(),
        format!(
            "{} draws ({} redrawn near kinks), max relative deviation {:.3e} (need < 1e-4)",
            r.draws, r.redrawn, r.max_rel_dev
        ),
    )
}

fn criterion_5() -> Outcome {
    let r = lift_suite(1000, 5).unwrap();
    outcome(
        r.passed(),
        format!(
            "{} draws, self-pair deviation {:.3e}, mixed-pair deviation {:.3e} (need < 1e-9)",
            r.draws, r.max_self_dev, r.max_pair_dev
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = Rng::new(6);
    let mut worst = 0.0f64;
    let mut min_bias = f64::INFINITY;
    let mut min_var = f64::INFINITY;
    let mut max_var_identical = 0.0f64;
    for _ in 0..10_000 {
        let c = 2 + rng.below_usize(9);
        let k = 1 + rng.below_usize(8);
        let pi = ProbDist::one_hot(rng.below_usize(c), c).unwrap();
        let sharp = 1.0 + 5.0 * rng.uniform();
        let preds: Vec<ProbDist> = (0..k)
            .map(|_| {
                let logits = ndarray::Array1::from_shape_simple_fn(c, || sharp * rng.normal());
                ProbDist::from_logits(logits.view()).unwrap()
            })
            .collect();
        let d = decompose_point(&pi, &preds).unwrap();
        worst = worst.max(d.residual());
        min_bias = min_bias.min(d.bias);
        min_var = min_var.min(d.variance);
        let same = vec![preds[0].clone(); k];
        max_var_identical =
            max_var_identical.max(decompose_point(&pi, &same).unwrap().variance.abs());
    }
    let pass = worst < 1e-10 && min_bias >= 0.0 && min_var >= 0.0 && max_var_identical == 0.0;
    outcome(
        pass,
        format!(
            "10000 draws, max |risk - bias - variance| {worst:.3e}, min bias {min_bias:.3e}, \
             min variance {min_var:.3e}, identical-prediction variance {max_var_identical:.1e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut cfg = preset("desk_mixture.json");
    cfg.experiment = ExperimentKind::Biasvar;
    cfg.splits = 5;
    cfg.split_size = cfg.n_train / 5;
    cfg.num_seeds = 1;
    cfg.widths = vec![10, 64, 323];
    cfg.epochs = 100;
    let out = run_sweep(&cfg).unwrap();
    let report = out.biasvar.expect("bias-variance report");
    fs::write(artifact_dir().join("biasvar.csv"), report.to_csv()).unwrap();
    let worst = report
        .rows
        .iter()
        .map(|r| (r.bias_kl - r.bias_subtraction).abs())
        .fold(0.0f64, f64::max);
    let pass = out.manifest.failed_cells == 0 && !report.rows.is_empty() && worst < 1e-8;
    outcome(
        pass,
        format!(
            "{} rows, max |bias_kl - (risk - variance)| {worst:.3e} (need < 1e-8)",
            report.rows.len()
        ),
    )
}

/// Band maximum over standard-variant ratios in `[0.5, 2]` minus the value
/// at the largest width, for one variant's median test-error curve.
fn prominence(summary: &[CurvePoint], variant: Variant, band_widths: &[f64]) -> Option<f64> {
    let curve: Vec<(f64, f64)> = summary
        .iter()
        .filter(|p| p.variant == variant && p.axis_name == AxisName::HiddenUnits)
        .filter_map(|p| p.test_error.map(|e| (p.axis_value, e)))
        .collect();
    let largest = curve
        .iter()
        .map(|(w, _)| *w)
        .fold(f64::NEG_INFINITY, f64::max);
    let last = curve.iter().find(|(w, _)| *w == largest)?.1;
    let band = curve
        .iter()
        .filter(|(w, _)| band_widths.contains(w))
        .map(|(_, e)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    band.is_finite().then_some(band - last)
}

fn criterion_8() -> Outcome {
    let cfg = preset("desk_mixture.json");
    let start = Instant::now();
    let out = run_sweep(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let dir = artifact_dir();
    fs::write(dir.join("desk_mixture_curve.csv"), to_csv(&out.points)).unwrap();
    fs::write(dir.join("desk_mixture_traces.csv"), out.traces_csv()).unwrap();
    let summary = out.summary().unwrap();
    fs::write(dir.join("desk_mixture_summary.csv"), to_csv(&summary)).unwrap();

    let band: Vec<f64> = summary
        .iter()
        .filter(|p| p.variant == Variant::Standard)
        .filter(|p| {
            p.param_sample_ratio
                .is_some_and(|r| (0.5..=2.0).contains(&r))
        })
        .map(|p| p.axis_value)
        .collect();
    let std_prom = prominence(&summary, Variant::Standard, &band);
    let cat_prom = prominence(&summary, Variant::Concat, &band);
    let pass = match (std_prom, cat_prom) {
        (Some(s), Some(c)) => s >= 0.02 && c < s,
        _ => false,
    };
    let stat = |v: Variant| {
        summary
            .iter()
            .filter(|p| p.variant == v)
            .map(|p| {
                format!(
                    "{}:{:.3}",
                    p.axis_value,
                    p.metric(Metric::TestError).unwrap_or(f64::NAN)
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        pass,
        format!(
            "prominence standard {std_prom:.4?} (need >= 0.02), concat {cat_prom:.4?} (need < standard); \
             band widths {band:?}; failed cells {}; {secs:.0}s; CSV in {}\n      standard {}\n      concat   {}",
            out.failed_cells(),
            dir.display(),
            stat(Variant::Standard),
            stat(Variant::Concat)
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let tiny = SweepConfig {
        experiment: ExperimentKind::MlpWidth,
        num_seeds: 2,
        n_train: 60,
        n_test: 40,
        dim: 5,
        classes: 3,
        widths: vec![2, 8],
        epochs: 4,
        batch_size: 16,
        label_noise: 0.15,
        ..SweepConfig::default()
    };
    let mut csvs = Vec::new();
    for cfg in [
        tiny.clone(),
        tiny.clone(),
        SweepConfig {
            threads: 2,
            ..tiny.clone()
        },
    ] {
        let out = run_sweep(&cfg).unwrap();
        csvs.push(to_csv(&out.points));
    }
    let same_threads = csvs[0] == csvs[1];
    pass &= same_threads;
    notes.push(format!(
        "mlp sweep rerun identical: {same_threads} (2 threads also: {})",
        csvs[0] == csvs[2]
    ));

    let lin = SweepConfig {
        experiment: ExperimentKind::LinregSample,
        n_grid: vec![4, 30, 40],
        num_seeds: 3,
        n_test: 200,
        ..SweepConfig::default()
    };
    let a = to_csv(&run_sweep(&lin).unwrap().points);
    let b = to_csv(&run_sweep(&lin).unwrap().points);
    pass &= a == b;
    notes.push(format!("linreg rerun identical: {}", a == b));

    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    let mut rng = Rng::new(9);
    let images = IdxImages {
        count: 12,
        rows: 4,
        cols: 3,
        pixels: (0..144).map(|_| rng.below(256) as u8).collect(),
    };
    write_idx_images(&img, &images).unwrap();
    write_idx_labels(
        &lab,
        &IdxLabels {
            labels: (0..12).map(|i| (i % 10) as u8).collect(),
        },
    )
    .unwrap();
    let (ds, shape) = load_idx(&img, &lab, None).unwrap();
    let (img2, lab2) = (dir.path().join("img2"), dir.path().join("lab2"));
    write_idx(&ds, shape, &img2, &lab2).unwrap();
    let idx_same = fs::read(&img).unwrap() == fs::read(&img2).unwrap()
        && fs::read(&lab).unwrap() == fs::read(&lab2).unwrap();
    pass &= idx_same;
    notes.push(format!("IDX round trip identical: {idx_same}"));
    outcome(pass, notes.join("; "))
}

fn criterion_10() -> Outcome {
    let mut worst = 0.0f64;
    for c in [2usize, 10, 100] {
        let model = MlpModel::zeros(1, 1, c);
        let x = Array2::zeros((2, 1));
        let mut t = Array2::zeros((2, c));
        t[[0, c - 1]] = 1.0;
        t[[1, 0]] = 0.5;
        t[[1, 1]] = 0.5;
        for row in 0..2 {
            let l = loss_only(
                &model,
                x.slice(ndarray::s![row..=row, ..]),
                t.slice(ndarray::s![row..=row, ..]),
                LossKind::CrossEntropy,
            )
            .unwrap();
            worst = worst.max((l - (c as f64).ln()).abs());
        }
    }
    outcome(
        worst < 1e-12,
        format!("max |loss - ln c| {worst:.3e} over c in {{2, 10, 100}}, one-hot and two-hot"),
    )
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and filters from other harnesses
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let skip_slow = std::env::var("DDLAB_SKIP_SLOW").is_ok();

    let mut hard_failures = Vec::new();
    let mut report = |id: u32, advisory: bool, o: Outcome| {
        let tag = match (o.pass, advisory) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2}: {tag} {}", o.detail);
        if !o.pass && !advisory {
            hard_failures.push(id);
        }
    };

    let start = Instant::now();
    let fig1 = fig1_points();
    let fig1_secs = start.elapsed().as_secs_f64();
    report(1, false, criterion_1(&fig1, fig1_secs));
    report(2, false, criterion_2(&fig1));
    report(3, false, criterion_3());
    report(4, false, criterion_4());
    report(5, false, criterion_5());
    report(6, false, criterion_6());
    report(9, false, criterion_9());
    report(10, false, criterion_10());
    if skip_slow {
        println!("criterion  7: SKIP (DDLAB_SKIP_SLOW set)");
        println!("criterion  8: SKIP (DDLAB_SKIP_SLOW set)");
    } else {
        report(7, false, criterion_7());
        report(8, true, criterion_8());
    }

    if hard_failures.is_empty() {
        println!("acceptance: all hard criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {hard_failures:?}");
        ExitCode::FAILURE
    }
}
