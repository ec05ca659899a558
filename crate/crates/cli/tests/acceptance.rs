//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p mimo-ace-cli --test acceptance`.

use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use mimo_ace::channel::{self, MimoChannel, SparseLink};
use mimo_ace::comms::{self, Constellation, Csi, OfdmParams};
use mimo_ace::estimators::{self, AlgoConfig, FilterState, Variant};
use mimo_ace::experiment::{self, ChannelEstimate, RunConfig};
use mimo_ace::seed::{rng_from_seed, splitmix64};
use mimo_ace::{Scalar, SignalMode};
use mimo_ace_cli::{parse_config, Command, Settings, Snr};
use statrs::function::erf::erfc;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

// 1. Reductions between variants.

fn trajectory(cfg: &AlgoConfig, steps: usize, seed: u64) -> Vec<Vec<Scalar>> {
    let len = 32;
    let mut rng = rng_from_seed(seed);
    let h: Vec<Scalar> = (0..len)
        .map(|i| {
            if i % 7 == 0 {
                channel::gaussian(&mut rng, 0.2, SignalMode::Complex)
            } else {
                Scalar::new(0.0, 0.0)
            }
        })
        .collect();
    let mut state = FilterState::zeros(len);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let x: Vec<Scalar> = (0..len)
            .map(|_| channel::gaussian(&mut rng, 1.0, SignalMode::Complex))
            .collect();
        let clean: Scalar = h.iter().zip(&x).map(|(a, b)| a * b).sum();
        let d = clean + channel::gaussian(&mut rng, 0.01, SignalMode::Complex);
        estimators::step(&mut state, &x, d, cfg).unwrap();
        out.push(state.h_hat.clone());
    }
    out
}

fn max_relative_gap(a: &[Vec<Scalar>], b: &[Vec<Scalar>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb))
        .map(|(x, y)| {
            let scale = x.norm().max(y.norm());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).norm() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let steps = 1000;
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for seed in 0..5 {
        let vss = AlgoConfig::new(Variant::VssNlms);
        let za_vss = AlgoConfig::new(Variant::ZaVssNlms).with_gamma_za(0.0);
        let iss = AlgoConfig::new(Variant::IssNlms);
        let za_iss = AlgoConfig::new(Variant::ZaIssNlms).with_gamma_za(0.0);
        let gamma = 3e-4;
        let za_g = AlgoConfig::new(Variant::ZaVssNlms).with_gamma_za(gamma);
        let rza_g = AlgoConfig::new(Variant::RzaVssNlms)
            .with_gamma_rza(gamma)
            .with_epsilon_rza(0.0);
        let za_iss_g = AlgoConfig::new(Variant::ZaIssNlms).with_gamma_za(gamma);
        let rza_iss_g = AlgoConfig::new(Variant::RzaIssNlms)
            .with_gamma_rza(gamma)
            .with_epsilon_rza(0.0);
        let pairs = [
            ("za-vss(0)=vss", za_vss, vss),
            ("za-iss(0)=iss", za_iss, iss),
            ("rza-vss(eps 0)=za-vss", rza_g, za_g),
            ("rza-iss(eps 0)=za-iss", rza_iss_g, za_iss_g),
        ];
        for (name, a, b) in pairs {
            let gap = max_relative_gap(&trajectory(&a, steps, seed), &trajectory(&b, steps, seed));
            if seed == 0 {
                details.push(format!("{name} {gap:.1e}"));
            }
            worst = worst.max(gap);
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max relative gap {worst:.1e} over 5 streams x {steps} steps ({})", details.join(", ")),
    )
}

// 2. Step-size range and the half-way point.

fn criterion_2() -> Outcome {
    let mut checked = 0usize;
    let mut violations = 0usize;
    for variant in [Variant::VssNlms, Variant::ZaVssNlms, Variant::RzaVssNlms] {
        for (snr, mu_max, mode) in [
            (Some(5.0), 1.0, SignalMode::Complex),
            (Some(20.0), 0.5, SignalMode::Complex),
            (None, 1.0, SignalMode::Real),
            (Some(10.0), 2.0, SignalMode::Real),
        ] {
            let mut cfg = RunConfig::new(AlgoConfig::new(variant).with_mu_max(mu_max));
            cfg.snr_db = snr;
            cfg.mode = mode;
            cfg.max_iter = 2000;
            for run in 0..10 {
                let (_, a) = experiment::simulate_run(&cfg, run).unwrap();
                for &mu in &a.steps.mu {
                    checked += 1;
                    if !(0.0..mu_max).contains(&mu) {
                        violations += 1;
                    }
                }
            }
        }
    }
    let mut rng = rng_from_seed(2);
    let mut halfway_ok = true;
    for _ in 0..1000 {
        let p: Vec<Scalar> = (0..32)
            .map(|_| channel::gaussian(&mut rng, 1e-6, SignalMode::Complex))
            .collect();
        let c = estimators::energy(&p);
        for mu_max in [0.5, 1.0, 1.7] {
            halfway_ok &= estimators::variable_step(&p, mu_max, c) == mu_max / 2.0;
        }
    }
    outcome(
        violations == 0 && halfway_ok,
        format!("{checked} VSS steps, {violations} outside [0, mu_max); variable_step(||p||^2 = C) = mu_max/2 exactly: {halfway_ok}"),
    )
}

// 3 and 9 share the noiseless 1x1 setup.

fn noiseless_config(variant: Variant) -> RunConfig {
    let algo = if variant.is_vss() {
        AlgoConfig::new(variant).with_mu_max(1.0)
    } else {
        AlgoConfig::new(variant).with_mu(1.0)
    };
    let mut cfg = RunConfig::new(algo);
    cfg.n_t = 1;
    cfg.n_r = 1;
    cfg.l = 16;
    cfg.t = 4;
    cfg.snr_db = None;
    cfg.max_iter = 5000;
    cfg.tol = 1e-12;
    cfg.num_runs = 100;
    cfg
}

fn criterion_3() -> Outcome {
    let cfg = noiseless_config(Variant::IssNlms);
    let result = experiment::monte_carlo(&cfg).unwrap();
    let good = result.runs.iter().filter(|r| r.final_mse < 1e-8).count();
    let worst = result.runs.iter().map(|r| r.final_mse).fold(0.0, f64::max);
    let longest = result.runs.iter().map(|r| r.final_iter).max().unwrap_or(0);
    outcome(
        good >= 99,
        format!("{good}/100 runs below 1e-8 (worst {worst:.2e}, longest run {longest} iterations)"),
    )
}

fn windowed_means(values: &[f64], window: usize) -> Vec<f64> {
    if values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - window + 1);
    let mut sum: f64 = values[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..values.len() {
        sum += values[i] - values[i - window];
        out.push(sum / window as f64);
    }
    out
}

fn criterion_9() -> Outcome {
    let cfg = noiseless_config(Variant::ZaVssNlms);
    let window = 50;
    let mut monotone = 0;
    let mut fast_start = 0;
    let mut first_rise = Vec::new();
    let mut early_peak: f64 = f64::INFINITY;
    for run in 0..cfg.num_runs {
        let (_, a) = experiment::simulate_run(&cfg, run).unwrap();
        let mu = &a.steps.mu;
        let n = mu.len();
        // wm[i] averages mu over iterations i+1 ..= i+window (1-based)
        let wm = windowed_means(mu, window);
        let settle = n.div_ceil(10);
        let tail = &wm[settle.min(wm.len())..];
        match tail.windows(2).position(|w| w[1] > w[0]) {
            None => monotone += 1,
            Some(i) => first_rise.push(settle + i + window),
        }
        let early = (n * 2).div_ceil(100);
        let early_windows = &wm[..(early + 1).saturating_sub(window).min(wm.len())];
        let peak = early_windows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        early_peak = early_peak.min(peak);
        if peak > 0.9 * cfg.algo.mu_max {
            fast_start += 1;
        }
    }
    let runs = cfg.num_runs;
    first_rise.sort_unstable();
    let median_rise = first_rise.get(first_rise.len() / 2).copied();
    outcome(
        monotone >= 99 && fast_start >= 99,
        format!(
            "non-increasing after 10%: {monotone}/{runs} (median first rise at iteration {median_rise:?}); \
             windowed mean > 0.9 mu_max within first 2%: {fast_start}/{runs} (lowest early peak {early_peak:.3})"
        ),
    )
}

// 4 and 5: steady-state MSE at 20 dB.

fn steady_state(variant: Variant, t: usize, runs: usize) -> (f64, f64) {
    let mut cfg = RunConfig::new(AlgoConfig::new(variant));
    cfg.t = t;
    cfg.snr_db = Some(20.0);
    cfg.num_runs = runs;
    experiment::monte_carlo(&cfg).unwrap().steady_state()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let order = [Variant::RzaVssNlms, Variant::ZaVssNlms, Variant::VssNlms, Variant::IssNlms];
    let stats: Vec<(f64, f64)> = order.iter().map(|&v| steady_state(v, 1, 200)).collect();
    let elapsed = start.elapsed();
    let mut pass = elapsed <= Duration::from_secs(300);
    let mut parts = Vec::new();
    for (v, (m, se)) in order.iter().zip(&stats) {
        parts.push(format!("{} {m:.3e}±{se:.1e}", v.name()));
    }
    for w in stats.windows(2) {
        let (lo, lo_se) = w[0];
        let (hi, hi_se) = w[1];
        pass &= hi - lo > (lo_se * lo_se + hi_se * hi_se).sqrt();
    }
    outcome(pass, format!("{} in {:.1}s", parts.join(" < "), elapsed.as_secs_f64()))
}

fn criterion_5() -> Outcome {
    let gain = |t| {
        let (vss, _) = steady_state(Variant::VssNlms, t, 200);
        let (za, _) = steady_state(Variant::ZaVssNlms, t, 200);
        vss / za
    };
    let (g1, g4) = (gain(1), gain(4));
    outcome(g1 > g4, format!("VSS/ZA-VSS steady-state ratio: T=1 {g1:.3}, T=4 {g4:.3}"))
}

// 6. Threshold defaults through the config parser.

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (snr, expected) in [(5.0, 1e-4), (10.0, 1e-5), (20.0, 1e-5)] {
        let file = Settings::from_json_str(&format!(r#"{{"snr_db": {snr}}}"#)).unwrap();
        let spec = parse_config(Command::Mse, Some(&file), &Settings::default()).unwrap();
        let c = spec.run.resolved_algo().c;
        pass &= c == expected;
        parts.push(format!("{snr} dB -> {c:e}"));
    }
    let flags = Settings {
        snr_db: Some(vec![Snr(Some(5.0))]),
        c: Some(2e-5),
        ..Settings::default()
    };
    let spec = parse_config(Command::Mse, None, &flags).unwrap();
    let overridden = spec.run.resolved_algo().c;
    pass &= overridden == 2e-5;
    parts.push(format!("5 dB with c=2e-5 -> {overridden:e}"));
    outcome(pass, parts.join(", "))
}

// 7. AWGN oracle through the full OFDM chain.

type Oracle = fn(f64) -> f64;

fn qpsk_ber(snr_db: f64) -> f64 {
    q(10f64.powf(snr_db / 10.0).sqrt())
}

fn qam16_ber(snr_db: f64) -> f64 {
    // Gray 4-PAM per axis, levels ±a, ±3a with a = 1/sqrt(10), noise std s per axis
    let es_n0 = 10f64.powf(snr_db / 10.0);
    let s = (1.0 / (2.0 * es_n0)).sqrt();
    let a = 1.0 / 10f64.sqrt();
    (3.0 * q(a / s) + 2.0 * q(3.0 * a / s) - q(5.0 * a / s)) / 4.0
}

fn criterion_7() -> Outcome {
    let h = MimoChannel::from_links(1, 1, vec![SparseLink::from_taps(vec![Scalar::new(1.0, 0.0)])]).unwrap();
    let est = ChannelEstimate::from_channel(&h);
    let params = OfdmParams {
        num_subcarriers: 16,
        cp_len: 1,
        dft: comms::DftScaling::Unitary,
    };
    let mut pass = true;
    let mut parts = Vec::new();
    let cases: [(&str, Oracle, f64, usize); 4] = [
        ("qpsk", qpsk_ber, 8.0, 2_000_000),
        ("qpsk", qpsk_ber, 12.0, 30_000_000),
        ("qam16", qam16_ber, 8.0, 2_000_000),
        ("qam16", qam16_ber, 12.0, 2_000_000),
    ];
    for (i, (name, oracle, snr, bits)) in cases.into_iter().enumerate() {
        let c: Constellation = name.parse().unwrap();
        let frame = 16 * c.bits_per_symbol();
        let bits = bits.div_ceil(frame) * frame;
        let base = splitmix64(700 + i as u64);
        let data: Vec<u8> = (0..bits as u64).map(|k| (splitmix64(base ^ k) & 1) as u8).collect();
        let mut rng = rng_from_seed(base);
        let stats = comms::ofdm_link(&data, &h, &est, Some(snr), &c, &params, SignalMode::Complex, &mut rng).unwrap();
        let expected = oracle(snr);
        let measured = stats.ber();
        let rel = (measured - expected).abs() / expected;
        pass &= rel <= 0.10 && stats.bits_total >= 1_000_000;
        parts.push(format!(
            "{name}@{snr}dB {measured:.3e} vs {expected:.3e} ({:.1}%, {} bits)",
            100.0 * rel,
            stats.bits_total
        ));
    }
    outcome(pass, parts.join("; "))
}

// 8. BER with estimated channels.

fn criterion_8() -> Outcome {
    let cs: Vec<Constellation> = [16, 64, 128].iter().map(|&m| Constellation::qam(m).unwrap()).collect();
    let params = OfdmParams::for_channel_len(16);
    let curve = |variant| {
        let mut cfg = RunConfig::new(AlgoConfig::new(variant));
        cfg.t = 1;
        cfg.snr_db = Some(20.0);
        comms::ber_curve(&cfg, &cs, &[20.0], 2_000_000, &params, Csi::Estimated).unwrap()
    };
    let iss = curve(Variant::IssNlms);
    let rza = curve(Variant::RzaVssNlms);
    let sigma = (iss[0].std_error().powi(2) + rza[0].std_error().powi(2)).sqrt();
    let gap = iss[0].ber - rza[0].ber;
    let mut pass = gap > 3.0 * sigma;
    for pts in [&iss, &rza] {
        pass &= pts[0].ber <= pts[1].ber && pts[1].ber <= pts[2].ber;
    }
    let fmt = |pts: &[comms::BerPoint]| {
        pts.iter()
            .map(|p| format!("{}:{:.3e}", p.order, p.ber))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        pass,
        format!(
            "16-QAM gap ISS - RZA-VSS = {gap:.2e} ({:.0} sigma); ISS [{}], RZA-VSS [{}]",
            gap / sigma,
            fmt(&iss),
            fmt(&rza)
        ),
    )
}

// 10. Byte-identical CLI artifacts.

fn run_cli(args: &[&str], out: &Path) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_mimo-ace"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("launch mimo-ace")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let specs: [&[&str]; 4] = [
        &["mse", "--runs", "8", "--max-iter", "1500", "--seed", "11"],
        &["trace-step-size", "--runs", "4", "--max-iter", "1000", "--format", "csv"],
        &["sweep", "--runs", "4", "--max-iter", "800", "--snr", "5,20", "--sparsity", "1,4", "--algo", "vss,rza-vss"],
        &["ber", "--runs", "4", "--max-iter", "800", "--snr", "10,20", "--bits-per-point", "40000", "--csi", "both"],
    ];
    let mut pass = true;
    let mut compared = 0;
    for args in specs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_cli(args, a.path());
        let rb = run_cli(args, b.path());
        if !ra.status.success() || !rb.status.success() {
            return outcome(
                false,
                format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&ra.stderr)),
            );
        }
        let fa = csv_files(a.path());
        let fb = csv_files(b.path());
        pass &= !fa.is_empty() && fa == fb;
        compared += fa.len();
    }
    outcome(pass, format!("{compared} CSV files across 4 commands identical on re-run"))
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("reduction equivalences", criterion_1),
        ("step-size contract", criterion_2),
        ("noiseless convergence", criterion_3),
        ("MSE ordering at 20 dB", criterion_4),
        ("sparsity sensitivity", criterion_5),
        ("threshold defaults", criterion_6),
        ("AWGN BER oracle", criterion_7),
        ("BER ordering", criterion_8),
        ("step-size decay", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} [{status}] {name}: {} ({:.1}s)",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
