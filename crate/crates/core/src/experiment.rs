//! Round-robin adaptation driver, MSE metric and seeded Monte-Carlo averaging.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelOptions, MimoChannel, NoiseSpec, Normalization, RegressorBank, Training};
use crate::estimators::{self, AlgoConfig, FilterState};
use crate::seed::{self, streams};
use crate::{Error, Result, Scalar, SignalMode};

/// Where the VSS threshold `C` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// `1e-4` below 7.5 dB SNR, `1e-5` otherwise (and for noiseless runs).
    #[default]
    BySnr,
    Fixed(f64),
}

/// Default VSS threshold for a given SNR (`None` = noiseless).
pub fn default_threshold(snr_db: Option<f64>) -> f64 {
    match snr_db {
        Some(s) if s < 7.5 => 1e-4,
        _ => 1e-5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub l: usize,
    /// Dominant taps per link.
    pub t: usize,
    /// Received SNR in dB; `None` runs noiseless.
    pub snr_db: Option<f64>,
    pub algo: AlgoConfig,
    pub threshold: Threshold,
    pub max_iter: usize,
    pub tol: f64,
    pub num_runs: usize,
    pub seed: u64,
    pub mode: SignalMode,
    pub training: Training,
    pub normalization: Normalization,
    /// Number of final iterations averaged into the steady-state MSE.
    pub steady_window: usize,
    /// Number of recent iterations whose mean squared estimate change is
    /// compared with `tol`; 1 checks the latest update alone.
    pub stop_window: usize,
}

impl RunConfig {
    /// 2x2, `L = 16`, `T = 1`, 10 dB, 5000 iterations, 200 runs, seed 0.
    pub fn new(algo: AlgoConfig) -> Self {
        RunConfig {
            n_t: 2,
            n_r: 2,
            l: 16,
            t: 1,
            snr_db: Some(10.0),
            algo,
            threshold: Threshold::BySnr,
            max_iter: 5000,
            tol: 1e-5,
            num_runs: 200,
            seed: 0,
            mode: SignalMode::Complex,
            training: Training::Qpsk,
            normalization: Normalization::Exact,
            steady_window: 200,
            stop_window: 100,
        }
    }

    /// The algorithm configuration with `C` resolved.
    pub fn resolved_algo(&self) -> AlgoConfig {
        let c = match self.threshold {
            Threshold::BySnr => default_threshold(self.snr_db),
            Threshold::Fixed(c) => c,
        };
        self.algo.with_c(c)
    }

    pub fn channel_options(&self) -> ChannelOptions {
        ChannelOptions {
            tap_variance: 1.0,
            normalization: self.normalization,
            mode: self.mode,
        }
    }

    pub fn noise(&self) -> Option<NoiseSpec> {
        self.snr_db.map(NoiseSpec::new)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.l == 0 {
            return Err(Error::invalid("n_t, n_r and l must be at least 1"));
        }
        if self.t < 1 || self.t > self.l {
            return Err(Error::invalid(format!("t = {} violates 1 ≤ T ≤ L", self.t)));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter = 0 violates max_iter ≥ 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid(format!("tol = {} violates tol > 0", self.tol)));
        }
        if self.num_runs < 1 {
            return Err(Error::invalid("num_runs = 0 violates num_runs ≥ 1"));
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                return Err(Error::invalid(format!("snr_db must be finite, got {s}")));
            }
        }
        if self.steady_window < 1 {
            return Err(Error::invalid("steady_window must be at least 1"));
        }
        if self.stop_window < 1 {
            return Err(Error::invalid("stop_window must be at least 1"));
        }
        self.resolved_algo().validate()
    }
}

/// Estimated channel matrix, one stacked row per receive antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    n_t: usize,
    l: usize,
    rows: Vec<Vec<Scalar>>,
}

impl ChannelEstimate {
    pub fn zeros(n_r: usize, n_t: usize, l: usize) -> Self {
        ChannelEstimate {
            n_t,
            l,
            rows: vec![vec![Scalar::new(0.0, 0.0); n_t * l]; n_r],
        }
    }

    pub fn from_rows(n_t: usize, l: usize, rows: Vec<Vec<Scalar>>) -> Result<Self> {
        for row in &rows {
            Error::check_len(n_t * l, row.len(), "estimate row")?;
        }
        Ok(ChannelEstimate { n_t, l, rows })
    }

    /// Perfect channel knowledge.
    pub fn from_channel(h: &MimoChannel) -> Self {
        ChannelEstimate {
            n_t: h.n_t(),
            l: h.l(),
            rows: h.rows(),
        }
    }

    pub fn n_r(&self) -> usize {
        self.rows.len()
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn row(&self, rx: usize) -> &[Scalar] {
        &self.rows[rx]
    }

    pub fn rows(&self) -> &[Vec<Scalar>] {
        &self.rows
    }

    /// Estimated taps of link `(rx, tx)`.
    pub fn link_taps(&self, rx: usize, tx: usize) -> &[Scalar] {
        &self.rows[rx][tx * self.l..(tx + 1) * self.l]
    }
}

/// `||H - H_hat||^2` summed over every coefficient.
pub fn mse(h: &MimoChannel, h_hat: &ChannelEstimate) -> Result<f64> {
    Error::check_len(h.n_r(), h_hat.n_r(), "receive antennas")?;
    Error::check_len(h.n_t(), h_hat.n_t(), "transmit antennas")?;
    Error::check_len(h.l(), h_hat.l(), "taps per link")?;
    Ok((0..h.n_r())
        .map(|r| row_error(&h.row(r), h_hat.row(r)))
        .sum())
}

fn row_error(truth: &[Scalar], est: &[Scalar]) -> f64 {
    truth.iter().zip(est).map(|(a, b)| (a - b).norm_sqr()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIter => "max-iter",
        }
    }
}

/// Per-iteration MSE of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MseTrace {
    /// `values[i]` is the MSE after iteration `i + 1`.
    pub values: Vec<f64>,
    pub final_iter: usize,
    pub stop_reason: StopReason,
}

impl MseTrace {
    /// Trace extended to `len` by repeating its final value.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        let mut out = self.values.clone();
        let last = out.last().copied().unwrap_or(0.0);
        out.resize(len.max(out.len()), last);
        out
    }
}

/// Step-sizes applied during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub n_r: usize,
    /// Antenna updated at each iteration.
    pub antenna: Vec<usize>,
    /// Step-size applied at each iteration.
    pub mu: Vec<f64>,
    /// Value reported for antennas not yet updated (`mu` for ISS, 0 for VSS).
    pub initial: f64,
}

impl StepTrace {
    /// Per-iteration step-size of every antenna, holding the last applied value.
    pub fn held(&self) -> Vec<Vec<f64>> {
        let mut current = vec![self.initial; self.n_r];
        self.antenna
            .iter()
            .zip(&self.mu)
            .map(|(&a, &mu)| {
                current[a] = mu;
                current.clone()
            })
            .collect()
    }

    /// Step-sizes applied to one antenna, in update order.
    pub fn for_antenna(&self, rx: usize) -> Vec<f64> {
        self.antenna
            .iter()
            .zip(&self.mu)
            .filter(|(&a, _)| a == rx)
            .map(|(_, &mu)| mu)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adaptation {
    pub estimate: ChannelEstimate,
    pub mse: MseTrace,
    pub steps: StepTrace,
}

/// Adapts one estimator per receive antenna against `h`.
///
/// Each iteration advances the training stream by one sample per transmit
/// antenna, observes all receive antennas, and updates antenna
/// `(n - 1) mod N_r`. The run stops once the squared change
/// `||H_hat(n) - H_hat(n - 1)||^2`, averaged over the last `stop_window`
/// iterations, is at most `tol` (checked once at least `max(N_r, stop_window)`
/// iterations have run) or after `max_iter` iterations.
pub fn run_adaptation<R: Rng + ?Sized>(cfg: &RunConfig, h: &MimoChannel, rng: &mut R) -> Result<Adaptation> {
    cfg.validate()?;
    if h.n_r() != cfg.n_r || h.n_t() != cfg.n_t || h.l() != cfg.l {
        return Err(Error::invalid(format!(
            "channel is {}x{}x{}, config expects {}x{}x{}",
            h.n_r(),
            h.n_t(),
            h.l(),
            cfg.n_r,
            cfg.n_t,
            cfg.l
        )));
    }
    let algo = cfg.resolved_algo();
    let noise_variance = cfg.noise().map(|n| n.variance()).unwrap_or(0.0);
    let truth = h.rows();
    let row_len = h.row_len();

    let mut states: Vec<FilterState> = (0..cfg.n_r).map(|_| FilterState::zeros(row_len)).collect();
    let mut row_err: Vec<f64> = truth.iter().map(|r| estimators::energy(r)).collect();
    let mut bank = RegressorBank::new(cfg.n_t, cfg.l);
    let mut samples = vec![Scalar::new(0.0, 0.0); cfg.n_t];
    let mut y = vec![Scalar::new(0.0, 0.0); cfg.n_r];

    let mut values = Vec::with_capacity(cfg.max_iter);
    let mut antenna = Vec::with_capacity(cfg.max_iter);
    let mut mu = Vec::with_capacity(cfg.max_iter);
    let mut stop_reason = StopReason::MaxIter;
    let mut recent = vec![0.0; cfg.stop_window];
    let mut recent_sum = 0.0;
    let warmup = cfg.n_r.max(cfg.stop_window);

    for n in 1..=cfg.max_iter {
        for s in samples.iter_mut() {
            *s = channel::training_sample(rng, cfg.training, cfg.mode);
        }
        let x = bank.push_and_stack(&samples)?;
        channel::observe_into(h, x, noise_variance, cfg.mode, rng, &mut y)?;

        let rx = (n - 1) % cfg.n_r;
        let out = estimators::step(&mut states[rx], x, y[rx], &algo)?;
        row_err[rx] = row_error(&truth[rx], &states[rx].h_hat);
        let total: f64 = row_err.iter().sum();
        if !total.is_finite() {
            return Err(Error::NonFinite { iteration: n });
        }
        values.push(total);
        antenna.push(rx);
        mu.push(out.mu_used);

        let slot = (n - 1) % cfg.stop_window;
        recent_sum += out.delta_sq - recent[slot];
        recent[slot] = out.delta_sq;
        if n % cfg.stop_window == 0 {
            // refresh to keep rounding from accumulating
            recent_sum = recent.iter().sum();
        }
        if n >= warmup && recent_sum <= cfg.tol * cfg.stop_window as f64 {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let final_iter = values.len();
    let estimate = ChannelEstimate {
        n_t: cfg.n_t,
        l: cfg.l,
        rows: states.into_iter().map(|s| s.h_hat).collect(),
    };
    let initial = if algo.variant.is_vss() { 0.0 } else { algo.mu };
    Ok(Adaptation {
        estimate,
        mse: MseTrace {
            values,
            final_iter,
            stop_reason,
        },
        steps: StepTrace {
            n_r: cfg.n_r,
            antenna,
            mu,
            initial,
        },
    })
}

/// Channel draw and adaptation of Monte-Carlo run `index`.
///
/// The channel comes from the run's channel stream and the training/noise
/// from its signal stream, so two configurations that differ only in the
/// algorithm see identical channels and signals.
pub fn simulate_run(cfg: &RunConfig, index: usize) -> Result<(MimoChannel, Adaptation)> {
    let run_seed = seed::run_seed(cfg.seed, index as u64);
    let wrap = |e: Error| Error::RunFailed {
        run: index,
        seed: run_seed,
        source: Box::new(e),
    };
    let mut channel_rng = seed::rng_from_seed(seed::substream(run_seed, streams::CHANNEL));
    let mut signal_rng = seed::rng_from_seed(seed::substream(run_seed, streams::SIGNAL));
    let h = channel::assemble(cfg.n_r, cfg.n_t, cfg.l, cfg.t, &cfg.channel_options(), &mut channel_rng).map_err(wrap)?;
    let adaptation = run_adaptation(cfg, &h, &mut signal_rng).map_err(wrap)?;
    Ok((h, adaptation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    pub final_iter: usize,
    pub stop_reason: StopReason,
    pub final_mse: f64,
    /// Mean of the padded trace over the last `steady_window` iterations.
    pub steady_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    /// Run-averaged MSE per iteration, length `max_iter`.
    pub mean_mse: Vec<f64>,
    /// Run-averaged held step-size per iteration and receive antenna.
    pub mean_mu: Vec<Vec<f64>>,
    pub runs: Vec<RunSummary>,
}

impl MonteCarloResult {
    /// Mean and standard error of the per-run steady-state MSE.
    pub fn steady_state(&self) -> (f64, f64) {
        mean_and_standard_error(self.runs.iter().map(|r| r.steady_mse))
    }

    /// `(tolerance, max-iter)` stop counts.
    pub fn stop_histogram(&self) -> (usize, usize) {
        let tol = self
            .runs
            .iter()
            .filter(|r| r.stop_reason == StopReason::Tolerance)
            .count();
        (tol, self.runs.len() - tol)
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_standard_error(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Summary, padded MSE trace and held step-sizes of one run.
type RunOutput = (RunSummary, Vec<f64>, Vec<Vec<f64>>);

/// Averages `num_runs` independent runs.
///
/// Runs execute in parallel; traces are padded with their final value to
/// `max_iter` and reduced in run order, so the result does not depend on
/// scheduling.
pub fn monte_carlo(cfg: &RunConfig) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let len = cfg.max_iter;
    let window = cfg.steady_window.min(len);
    let per_run: Vec<Result<RunOutput>> = (0..cfg.num_runs)
        .into_par_iter()
        .map(|i| {
            let (_, a) = simulate_run(cfg, i)?;
            let padded = a.mse.padded(len);
            let steady = padded[len - window..].iter().sum::<f64>() / window as f64;
            let mut held = a.steps.held();
            let last = held.last().cloned().unwrap_or_else(|| vec![a.steps.initial; cfg.n_r]);
            held.resize(len, last);
            let summary = RunSummary {
                index: i,
                seed: seed::run_seed(cfg.seed, i as u64),
                final_iter: a.mse.final_iter,
                stop_reason: a.mse.stop_reason,
                final_mse: *a.mse.values.last().unwrap_or(&f64::NAN),
                steady_mse: steady,
            };
            Ok((summary, padded, held))
        })
        .collect();

    let mut mean_mse = vec![0.0; len];
    let mut mean_mu = vec![vec![0.0; cfg.n_r]; len];
    let mut runs = Vec::with_capacity(cfg.num_runs);
    for run in per_run {
        let (summary, padded, held) = run?;
        for (acc, v) in mean_mse.iter_mut().zip(&padded) {
            *acc += v;
        }
        for (acc, row) in mean_mu.iter_mut().zip(&held) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        runs.push(summary);
    }
    let n = cfg.num_runs as f64;
    mean_mse.iter_mut().for_each(|v| *v /= n);
    mean_mu.iter_mut().flatten().for_each(|v| *v /= n);
    Ok(MonteCarloResult {
        mean_mse,
        mean_mu,
        runs,
    })
}
