//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! fails.

use std::process::ExitCode;
use std::time::Instant;

use nodal_tangency::cli::config::{ModelConfig, RunConfig, VfConfig};
use nodal_tangency::cli::run::{run_ensemble, Ensemble};
use nodal_tangency::cli::suites::{self, SuiteParams};
use nodal_tangency::field::sample_field;
use nodal_tangency::nodal::{extract_nodal_set, Containment, ExtractParams, Region};
use nodal_tangency::seed::SeedRecord;
use nodal_tangency::spectral::SpectralModel;
use nodal_tangency::stats::relative_change;

/// Waves per continuous realization. Kept below the library default so the
/// suite fits in minutes on one core.
const WAVES: usize = 256;
const BETA: f64 = 1e-3;

struct Line {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    secs: f64,
}

fn circle(radius: f64, trials: u64, seed: u64) -> RunConfig {
    let mut c = RunConfig::plane(ModelConfig::Circle, radius);
    c.grid_h = 0.04;
    c.n_waves = WAVES;
    c.beta = BETA;
    c.trials = trials;
    c.master_seed = seed;
    c
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let mut report = |id, name, passed, detail: String, secs| {
        println!("criterion {id:>2} {} {name}: {detail} [{secs:.0}s]", if passed { "PASS" } else { "FAIL" });
        lines.push(Line { id, name, passed, detail, secs });
    };

    // the main ensemble serves criteria 1, 2, 4, 5, 7 and 8
    let mut main_cfg = circle(50.0, 200, 1);
    main_cfg.flags.cross_check = true;
    let (main, main_secs) = timed(|| run_ensemble(&main_cfg, 0).expect("main ensemble"));
    println!("main ensemble: {} trials at R=50 in {main_secs:.0}s", main.trials.len());

    let v = suites::parity(&main, 0.005);
    let m = &v.metrics;
    report(
        1,
        "even support",
        v.metrics["certified_components"].as_u64().unwrap() >= 2000 && m["odd_or_zero_mass"].as_f64().unwrap() < 0.005,
        format!(
            "mass on 0 and odd k = {:.5} ({} of {} certified components; limit 0.005)",
            m["odd_or_zero_mass"].as_f64().unwrap(),
            m["odd_or_zero"],
            m["certified_components"]
        ),
        main_secs,
    );
    let below_two = v.diagnostics.len();
    report(
        2,
        "at least two",
        below_two == 0,
        format!("{below_two} certified closed components with k < 2"),
        0.0,
    );
    for d in v.diagnostics.iter().take(5) {
        println!("    bug report: {d}");
    }

    let (iso, secs) = timed(|| {
        let mut c = circle(50.0, 20, 2);
        c.vf = VfConfig::Constant { angle_deg: 30.0 };
        run_ensemble(&c, 0).expect("30 degree ensemble")
    });
    let d0 = main.histogram.finish().expect("measure");
    let d30 = iso.histogram.finish().expect("measure");
    let tv = d0.tv_distance(&d30);
    report(
        3,
        "isotropy",
        tv < 0.05 && d0.total >= 10_000 && d30.total >= 10_000,
        format!("TV(0°, 30°) = {tv:.4} with {} and {} components (limit 0.05)", d0.total, d30.total),
        secs,
    );

    let (small, secs) = timed(|| run_ensemble(&circle(25.0, 100, 3), 0).expect("R=25 ensemble"));
    let normalized = main.trials.iter().chain(&small.trials).all(|t| match t.histogram.finish() {
        Ok(d) => (d.probabilities.values().sum::<f64>() - 1.0).abs() < 1e-12,
        Err(_) => true,
    });
    let d25 = small.histogram.finish().expect("measure");
    let change = relative_change(d25.mean_k(), d0.mean_k());
    report(
        4,
        "mass conservation",
        normalized && change < 0.15,
        format!(
            "per-trial sums = 1: {normalized}; mean k {:.4} (R=25) vs {:.4} (R=50), change {:.2}% (limit 15%)",
            d25.mean_k(),
            d0.mean_k(),
            100.0 * change
        ),
        secs,
    );

    let (kr, secs) = timed(|| suites::kacrice(&main_cfg, &main, &SuiteParams::default()).expect("oracle"));
    let m = &kr.metrics;
    report(
        5,
        "Kac-Rice agreement",
        kr.passed,
        format!(
            "empirical {:.5} vs oracle {:.5} per unit area, gap {:.2}% (limit 5%), oracle relative stderr {:.3}% (limit 1%)",
            m["empirical_density"]["mean"].as_f64().unwrap(),
            m["oracle_density"].as_f64().unwrap(),
            100.0 * m["relative_gap"].as_f64().unwrap(),
            100.0 * m["oracle_relative_stderr"].as_f64().unwrap()
        ),
        secs,
    );

    let (sw, secs) = timed(|| {
        let p = SuiteParams { sandwich_r: Some(8.0), ..SuiteParams::default() };
        suites::sandwich(&circle(40.0, 20, 4), &p, 0).expect("sandwich")
    });
    report(
        6,
        "sandwich",
        sw.passed,
        format!(
            "holds on {} of {} samples at r=8, R=40 ({} without slack)",
            sw.metrics["holds"], sw.metrics["samples"], sw.metrics["holds_strict"]
        ),
        secs,
    );

    let first50 = Ensemble::from_trials(main.trials[..50].to_vec(), true);
    let id = suites::identity(&first50);
    report(
        7,
        "counting identity",
        id.passed,
        format!(
            "sum k <= joint zeros fails on {} of {} samples; equality expected on {}",
            id.metrics["failures"], id.metrics["samples"], id.metrics["equality_expected"]
        ),
        0.0,
    );

    let a = main.agreement.clone().unwrap_or_default();
    report(
        8,
        "method agreement",
        a.compared > 0 && a.rate() >= 0.999,
        format!("{} of {} components agree ({:.4}%, limit 99.9%)", a.agreed, a.compared, 100.0 * a.rate()),
        0.0,
    );
    for d in a.disagreements.iter().take(10) {
        println!("    disagreement: A={} B={} min margin {:.3e} at ({:.3}, {:.3})", d.k_a, d.k_b, d.min_margin, d.anchor.x, d.anchor.y);
    }

    let (st, secs) = timed(|| suites::stability(&circle(25.0, 20, 5), 0).expect("stability"));
    report(
        9,
        "stability certificate",
        st.passed,
        format!("{} of {} certified components preserved with b = beta/4", st.metrics["preserved"], st.metrics["certified"]),
        secs,
    );

    let (cov, secs) = timed(|| {
        let models = [ModelConfig::Circle, ModelConfig::Annulus { alpha: 0.5 }];
        let mut cfgs: Vec<RunConfig> = models.into_iter().map(|m| {
            let mut c = RunConfig::plane(m, 10.0);
            c.n_waves = WAVES;
            c.master_seed = 6;
            c
        }).collect();
        let mut t = RunConfig::torus(5);
        t.master_seed = 6;
        cfgs.push(t);
        let p = SuiteParams { realizations: 500, lags: 20, ..SuiteParams::default() };
        cfgs.iter().map(|c| suites::covariance(c, &p).expect("covariance")).collect::<Vec<_>>()
    });
    let worst: Vec<String> = cov
        .iter()
        .map(|v| format!("{} max|z| = {:.2}", v.metrics["model"].as_str().unwrap(), v.metrics["max_abs_z"].as_f64().unwrap()))
        .collect();
    report(
        10,
        "covariance fidelity",
        cov.iter().all(|v| v.passed),
        format!("{} (limit 3)", worst.join(", ")),
        secs,
    );

    let (cil, secs) = timed(|| {
        let rate = |n: u64| {
            let model = SpectralModel::arithmetic(n).unwrap();
            let params = ExtractParams { grid_h: 0.01, ..ExtractParams::default() };
            let mut contractible = 0;
            let mut total = 0;
            for t in 0..100 {
                let f = sample_field(&model, 0, SeedRecord::new(7, t)).unwrap();
                let set = extract_nodal_set(&f, Region::Torus, params).unwrap();
                contractible += set.count(Containment::Contained);
                total += set.components.len();
            }
            (contractible, total)
        };
        (rate(1), rate(5))
    });
    let ((c1, t1), (c5, t5)) = cil;
    report(
        11,
        "Cilleruelo degeneration",
        c1 == 0 && c5 > 0,
        format!("contractible components over 100 trials: n=1 {c1} of {t1}, n=5 {c5} of {t5}"),
        secs,
    );

    let (det, secs) = timed(|| {
        let c = circle(8.0, 100, 8);
        let one = serde_json::to_string(&run_ensemble(&c, 1).unwrap()).unwrap();
        let eight = serde_json::to_string(&run_ensemble(&c, 8).unwrap()).unwrap();
        let again = serde_json::to_string(&run_ensemble(&c, 1).unwrap()).unwrap();
        (one == eight, one == again, one.len())
    });
    report(
        12,
        "determinism",
        det.0 && det.1,
        format!("1 vs 8 workers identical: {}; repeated run identical: {} ({} bytes)", det.0, det.1, det.2),
        secs,
    );

    let failed: Vec<u32> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    let total: f64 = lines.iter().map(|l| l.secs).sum();
    println!(
        "acceptance: {} of {} criteria passed in {total:.0}s{}",
        lines.len() - failed.len(),
        lines.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    for l in &lines {
        log_line(l);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn log_line(l: &Line) {
    if !l.passed {
        eprintln!("FAILED criterion {} ({}): {}", l.id, l.name, l.detail);
    }
}
