//! Coarse grid search over the zero-attractor strength.
//!
//! For each ratio `gamma / mu_max` prints the steady-state MSE of ZA-VSS and
//! RZA-VSS next to the plain VSS and ISS baselines.
//!
//! ```text
//! cargo run --release -p mimo-ace --example penalty_grid -- [runs] [snr_db] [T] [tol] [stop_window]
//! ```

use mimo_ace::estimators::{AlgoConfig, Variant};
use mimo_ace::experiment::{monte_carlo, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let runs: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let snr: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(20.0);
    let t: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let tol: f64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(1e-5);
    let window: usize = args.get(4).map(|s| s.parse()).transpose()?.unwrap_or(100);

    let base = |algo: AlgoConfig| {
        let mut cfg = RunConfig::new(algo);
        cfg.num_runs = runs;
        cfg.snr_db = Some(snr);
        cfg.t = t;
        cfg.tol = tol;
        cfg.stop_window = window;
        cfg
    };
    let report = |name: &str, cfg: &RunConfig| -> Result<(), Box<dyn std::error::Error>> {
        let mc = monte_carlo(cfg)?;
        let (mean, se) = mc.steady_state();
        let (tol_stops, max_stops) = mc.stop_histogram();
        println!("{name:>24}  steady {mean:.4e} ± {se:.1e}  stops tol/max {tol_stops}/{max_stops}");
        Ok(())
    };

    println!("runs = {runs}, snr = {snr} dB, T = {t}, tol = {tol:e}, window = {window}");
    report("iss-nlms", &base(AlgoConfig::new(Variant::IssNlms)))?;
    report("vss-nlms", &base(AlgoConfig::new(Variant::VssNlms)))?;
    for ratio in [2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3, 2e-3] {
        let za = AlgoConfig::new(Variant::ZaVssNlms).with_gamma_za(ratio);
        report(&format!("za-vss  gamma={ratio:e}"), &base(za))?;
        let rza = AlgoConfig::new(Variant::RzaVssNlms).with_gamma_rza(ratio);
        report(&format!("rza-vss gamma={ratio:e}"), &base(rza))?;
    }
    Ok(())
}
