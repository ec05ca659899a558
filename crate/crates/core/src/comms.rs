//! OFDM/QAM link simulation for BER evaluation.
//!
//! Data bits are Gray-mapped onto PSK/QAM symbols, spread over `K`
//! subcarriers of every transmit antenna, sent through the true channel as
//! cyclic-prefix OFDM and detected per subcarrier with a zero-forcing
//! equalizer built from a (possibly estimated) channel.
//!
//! SNR is `Es/N0` per data symbol: `Es` is the average received power per
//! time sample of a receive antenna, `sum_t ||h_{r,t}||^2 * P_tx`, and the
//! time-domain noise variance is `Es / 10^(snr_db / 10)`. Cyclic-prefix
//! samples carry the same power but are discarded, so their energy is not
//! counted in `Es`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::{self, MimoChannel};
use crate::experiment::{self, ChannelEstimate, RunConfig};
use crate::seed::{self, streams};
use crate::{Error, Result, Scalar, SignalMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Psk,
    Qam,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Psk => "psk",
            Scheme::Qam => "qam",
        }
    }
}

/// 128-point cross constellation in units of half the minimum distance.
///
/// Index = 7-bit label (MSB first). Built from a 16 x 8 rectangular grid
/// (4 Gray bits on I, 3 Gray bits on Q); the columns `|I| in {13, 15}` are
/// folded onto the rows `|Q| in {9, 11}` via `(I, Q) -> (sgn(I)|Q|, sgn(Q)(|I| - 4))`.
/// The result is quasi-Gray: nearest neighbours differ in 1.14 bits on average.
#[rustfmt::skip]
const CROSS_128: [(i8, i8); 128] = [
    (7, 11), (5, 11), (1, 11), (3, 11), (7, -11), (5, -11), (1, -11), (3, -11),
    (7, 9), (5, 9), (1, 9), (3, 9), (7, -9), (5, -9), (1, -9), (3, -9),
    (9, 7), (9, 5), (9, 1), (9, 3), (9, -7), (9, -5), (9, -1), (9, -3),
    (11, 7), (11, 5), (11, 1), (11, 3), (11, -7), (11, -5), (11, -1), (11, -3),
    (1, 7), (1, 5), (1, 1), (1, 3), (1, -7), (1, -5), (1, -1), (1, -3),
    (3, 7), (3, 5), (3, 1), (3, 3), (3, -7), (3, -5), (3, -1), (3, -3),
    (7, 7), (7, 5), (7, 1), (7, 3), (7, -7), (7, -5), (7, -1), (7, -3),
    (5, 7), (5, 5), (5, 1), (5, 3), (5, -7), (5, -5), (5, -1), (5, -3),
    (-7, 11), (-5, 11), (-1, 11), (-3, 11), (-7, -11), (-5, -11), (-1, -11), (-3, -11),
    (-7, 9), (-5, 9), (-1, 9), (-3, 9), (-7, -9), (-5, -9), (-1, -9), (-3, -9),
    (-9, 7), (-9, 5), (-9, 1), (-9, 3), (-9, -7), (-9, -5), (-9, -1), (-9, -3),
    (-11, 7), (-11, 5), (-11, 1), (-11, 3), (-11, -7), (-11, -5), (-11, -1), (-11, -3),
    (-1, 7), (-1, 5), (-1, 1), (-1, 3), (-1, -7), (-1, -5), (-1, -1), (-1, -3),
    (-3, 7), (-3, 5), (-3, 1), (-3, 3), (-3, -7), (-3, -5), (-3, -1), (-3, -3),
    (-7, 7), (-7, 5), (-7, 1), (-7, 3), (-7, -7), (-7, -5), (-7, -1), (-7, -3),
    (-5, 7), (-5, 5), (-5, 1), (-5, 3), (-5, -7), (-5, -5), (-5, -1), (-5, -3),
];

/// Gray-coded PAM level for `bits` (the `k`-bit label of one axis).
///
/// Levels run `n-1, n-3, ..., -(n-1)`; position `j` carries label
/// `j ^ (j >> 1)`, so the all-zero label is the largest level.
fn gray_pam_level(bits: usize, k: u32) -> f64 {
    let n = 1usize << k;
    let mut j = bits;
    let mut shift = 1;
    while shift < k {
        j ^= j >> shift;
        shift <<= 1;
    }
    (n as f64 - 1.0) - 2.0 * j as f64
}

/// Labelled point set with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    scheme: Scheme,
    order: usize,
    /// `points[label]`, label read MSB first from the bit stream.
    points: Vec<Scalar>,
}

impl Constellation {
    pub fn new(scheme: Scheme, order: usize) -> Result<Self> {
        let raw: Vec<Scalar> = match (scheme, order) {
            (Scheme::Psk, 2) => vec![Scalar::new(1.0, 0.0), Scalar::new(-1.0, 0.0)],
            (Scheme::Psk, 4) | (Scheme::Qam, 4 | 16 | 64) => {
                let k = order.trailing_zeros() / 2;
                (0..order)
                    .map(|label| {
                        let i = gray_pam_level(label >> k, k);
                        let q = gray_pam_level(label & ((1 << k) - 1), k);
                        Scalar::new(i, q)
                    })
                    .collect()
            }
            (Scheme::Qam, 128) => CROSS_128
                .iter()
                .map(|&(i, q)| Scalar::new(i as f64, q as f64))
                .collect(),
            _ => {
                return Err(Error::invalid(format!(
                    "unsupported constellation {}{order} (PSK: 2, 4; QAM: 4, 16, 64, 128)",
                    scheme.as_str()
                )))
            }
        };
        let energy = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
        let scale = energy.sqrt().recip();
        Ok(Constellation {
            scheme,
            order,
            points: raw.into_iter().map(|p| p * scale).collect(),
        })
    }

    pub fn qam(order: usize) -> Result<Self> {
        Self::new(Scheme::Qam, order)
    }

    pub fn psk(order: usize) -> Result<Self> {
        Self::new(Scheme::Psk, order)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn points(&self) -> &[Scalar] {
        &self.points
    }

    /// Short name, e.g. `qam16`.
    pub fn name(&self) -> String {
        format!("{}{}", self.scheme.as_str(), self.order)
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Scalar>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "{} bits is not a multiple of {k} bits per symbol",
                bits.len()
            )));
        }
        bits.chunks_exact(k)
            .map(|chunk| {
                let mut label = 0usize;
                for &b in chunk {
                    if b > 1 {
                        return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
                    }
                    label = (label << 1) | b as usize;
                }
                Ok(self.points[label])
            })
            .collect()
    }

    /// Nearest point label; ties go to the lowest label.
    pub fn decide(&self, symbol: Scalar) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (label, p) in self.points.iter().enumerate() {
            let d = (symbol - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    /// Hard-decision bits, MSB first per symbol.
    pub fn demodulate(&self, symbols: &[Scalar]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut out = Vec::with_capacity(symbols.len() * k);
        for &s in symbols {
            let label = self.decide(s);
            out.extend((0..k).rev().map(|i| ((label >> i) & 1) as u8));
        }
        out
    }

    pub fn min_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.min((a - b).norm());
            }
        }
        d
    }
}

impl std::str::FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        match key.as_str() {
            "bpsk" => return Constellation::psk(2),
            "qpsk" => return Constellation::qam(4),
            _ => {}
        }
        let (scheme, digits) = if let Some(rest) = key.strip_prefix("qam") {
            (Scheme::Qam, rest)
        } else if let Some(rest) = key.strip_suffix("qam") {
            (Scheme::Qam, rest)
        } else if let Some(rest) = key.strip_prefix("psk") {
            (Scheme::Psk, rest)
        } else if let Some(rest) = key.strip_suffix("psk") {
            (Scheme::Psk, rest)
        } else {
            return Err(Error::invalid(format!("unknown constellation `{s}`")));
        };
        let order = digits
            .parse()
            .map_err(|_| Error::invalid(format!("unknown constellation `{s}`")))?;
        Constellation::new(scheme, order)
    }
}

/// DFT normalization used by the OFDM modem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DftScaling {
    /// `1/sqrt(K)` both ways; energy preserving.
    #[default]
    Unitary,
    /// DFT entries scaled by `1/K`, the transmitter applying its conjugate
    /// transpose. Transmit power drops to `1/K` per sample and the
    /// per-subcarrier gain becomes `H_k / K`; BER is unchanged because the
    /// noise is set relative to the received power.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmParams {
    pub num_subcarriers: usize,
    pub cp_len: usize,
    pub dft: DftScaling,
}

impl OfdmParams {
    /// `K = L` subcarriers and a cyclic prefix of `L` samples.
    pub fn for_channel_len(l: usize) -> Self {
        OfdmParams {
            num_subcarriers: l,
            cp_len: l,
            dft: DftScaling::Unitary,
        }
    }

    fn validate(&self, channel_len: usize) -> Result<()> {
        if self.num_subcarriers == 0 {
            return Err(Error::invalid("number of subcarriers must be positive"));
        }
        if channel_len > self.num_subcarriers {
            return Err(Error::invalid(format!(
                "channel length {channel_len} exceeds {} subcarriers",
                self.num_subcarriers
            )));
        }
        if self.cp_len + 1 < channel_len {
            return Err(Error::invalid(format!(
                "cyclic prefix {} shorter than channel memory {}",
                self.cp_len,
                channel_len - 1
            )));
        }
        Ok(())
    }

    fn tx_scale(&self) -> f64 {
        let k = self.num_subcarriers as f64;
        match self.dft {
            DftScaling::Unitary => k.sqrt().recip(),
            DftScaling::Literal => k.recip(),
        }
    }

    /// Average transmit power per time sample for unit-energy symbols.
    fn tx_power(&self) -> f64 {
        let s = self.tx_scale();
        s * s * self.num_subcarriers as f64
    }

    /// Overall gain between `H_k X_k` and the received subcarrier value.
    fn subcarrier_gain(&self) -> f64 {
        self.tx_scale() * self.tx_scale() * self.num_subcarriers as f64
    }
}

/// Bit-error count of one link simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkStats {
    pub bit_errors: u64,
    pub bits_total: u64,
    /// Subcarriers whose equalizer needed the ridge-regularized inverse.
    pub regularized_subcarriers: u64,
}

impl LinkStats {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits_total as f64
    }

    fn merge(&mut self, other: LinkStats) {
        self.bit_errors += other.bit_errors;
        self.bits_total += other.bits_total;
        self.regularized_subcarriers += other.regularized_subcarriers;
    }
}

/// Ridge added to `H^H H` when a subcarrier matrix is numerically singular.
pub const ZF_RIDGE: f64 = 1e-9;

/// Zero-forcing matrices `(H_k^H H_k)^-1 H_k^H` for every subcarrier.
fn zero_forcing(est: &ChannelEstimate, params: &OfdmParams, fft: &dyn Fft<f64>) -> (Vec<DMatrix<Scalar>>, u64) {
    let k = params.num_subcarriers;
    let (n_r, n_t) = (est.n_r(), est.n_t());
    let gain = params.subcarrier_gain();
    // responses[r][t][k]
    let mut responses = vec![vec![vec![Scalar::new(0.0, 0.0); k]; n_t]; n_r];
    for (r, per_rx) in responses.iter_mut().enumerate() {
        for (t, resp) in per_rx.iter_mut().enumerate() {
            resp[..est.l()].copy_from_slice(est.link_taps(r, t));
            fft.process(resp);
        }
    }
    let mut regularized = 0;
    let filters = (0..k)
        .map(|sc| {
            let h = DMatrix::from_fn(n_r, n_t, |r, t| responses[r][t][sc] * gain);
            let h_adj = h.adjoint();
            let gram = &h_adj * &h;
            let well_posed = gram.clone().cholesky().and_then(|chol| {
                let diag = chol.l_dirty().diagonal();
                let (lo, hi) = diag
                    .iter()
                    .map(|d| d.norm())
                    .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (hi > 0.0 && (lo / hi).powi(2) > 1e-12).then(|| chol.inverse())
            });
            let inv = match well_posed {
                Some(inv) => inv,
                None => {
                    regularized += 1;
                    let ridge = DMatrix::from_diagonal_element(n_t, n_t, Scalar::new(ZF_RIDGE, 0.0));
                    (gram + ridge)
                        .try_inverse()
                        .unwrap_or_else(|| DMatrix::zeros(n_t, n_t))
                }
            };
            inv * h_adj
        })
        .collect();
    (filters, regularized)
}

/// Sends `bits` over `h_true` with CP-OFDM and detects them with a
/// zero-forcing equalizer built from `h_hat`. `snr_db = None` is noiseless.
///
/// Bits fill frames in order: antenna 0 subcarriers 0..K, then antenna 1, ...;
/// `bits.len()` must be a whole number of frames.
#[allow(clippy::too_many_arguments)]
pub fn ofdm_link<R: Rng + ?Sized>(
    bits: &[u8],
    h_true: &MimoChannel,
    h_hat: &ChannelEstimate,
    snr_db: Option<f64>,
    constellation: &Constellation,
    params: &OfdmParams,
    mode: SignalMode,
    rng: &mut R,
) -> Result<LinkStats> {
    let (n_r, n_t, l) = (h_true.n_r(), h_true.n_t(), h_true.l());
    if n_r < n_t {
        return Err(Error::invalid(format!(
            "zero-forcing needs N_r ≥ N_t (got {n_r} x {n_t})"
        )));
    }
    if h_hat.n_r() != n_r || h_hat.n_t() != n_t || h_hat.l() != l {
        return Err(Error::invalid("estimate shape differs from the true channel"));
    }
    params.validate(l)?;
    let k = params.num_subcarriers;
    let frame_bits = n_t * k * constellation.bits_per_symbol();
    if !bits.len().is_multiple_of(frame_bits) {
        return Err(Error::invalid(format!(
            "{} bits is not a whole number of {frame_bits}-bit frames",
            bits.len()
        )));
    }

    let mut planner = FftPlanner::new();
    let fft: Arc<dyn Fft<f64>> = planner.plan_fft_forward(k);
    let ifft: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(k);
    let (filters, regularized) = zero_forcing(h_hat, params, fft.as_ref());

    let tx_scale = params.tx_scale();
    let noise_var: Vec<f64> = (0..n_r)
        .map(|r| match snr_db {
            Some(snr) => h_true.row_energy(r) * params.tx_power() / 10f64.powf(snr / 10.0),
            None => 0.0,
        })
        .collect();

    let cp = params.cp_len;
    let frame_len = cp + k;
    let mut tx = vec![vec![Scalar::new(0.0, 0.0); frame_len]; n_t];
    let mut rx = vec![vec![Scalar::new(0.0, 0.0); k]; n_r];
    let mut detected = vec![Scalar::new(0.0, 0.0); n_t * k];
    let mut stats = LinkStats::default();

    for frame in bits.chunks_exact(frame_bits) {
        let symbols = constellation.modulate(frame)?;
        for (t, buf) in tx.iter_mut().enumerate() {
            let body = &mut buf[cp..];
            body.copy_from_slice(&symbols[t * k..(t + 1) * k]);
            ifft.process(body);
            body.iter_mut().for_each(|v| *v *= tx_scale);
            for i in 0..cp {
                buf[i] = buf[cp + (i + k - cp % k) % k];
            }
        }
        // channel + noise on the samples that survive CP removal
        for (r, out) in rx.iter_mut().enumerate() {
            for (n, y) in out.iter_mut().enumerate() {
                let idx = cp + n;
                let mut acc = Scalar::new(0.0, 0.0);
                for (t, buf) in tx.iter().enumerate() {
                    let link = h_true.link(r, t);
                    for &tap in &link.support {
                        acc += link.taps[tap] * buf[idx - tap];
                    }
                }
                if noise_var[r] > 0.0 {
                    acc += channel::gaussian(rng, noise_var[r], mode);
                }
                *y = acc;
            }
            fft.process(out);
            out.iter_mut().for_each(|v| *v *= tx_scale);
        }
        for (sc, w) in filters.iter().enumerate() {
            for t in 0..n_t {
                let mut acc = Scalar::new(0.0, 0.0);
                for (r, out) in rx.iter().enumerate() {
                    acc += w[(t, r)] * out[sc];
                }
                detected[t * k + sc] = acc;
            }
        }
        let decided = constellation.demodulate(&detected);
        stats.bit_errors += decided.iter().zip(frame).filter(|(a, b)| a != b).count() as u64;
        stats.bits_total += frame.len() as u64;
    }
    stats.regularized_subcarriers = regularized;
    Ok(stats)
}

/// Which channel the receiver equalizes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Csi {
    /// The adaptive estimate after the run's stopping rule.
    #[default]
    Estimated,
    /// The true channel.
    Perfect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub order: usize,
    pub algorithm: String,
    pub ber: f64,
    pub errors: u64,
    pub bits: u64,
    /// Fewer than 100 errors were counted.
    pub low_confidence: bool,
    pub regularized_subcarriers: u64,
}

impl BerPoint {
    /// Binomial standard deviation of `ber`.
    pub fn std_error(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits as f64).sqrt()
    }
}

/// Minimum error count for a BER point to be considered reliable.
pub const MIN_ERRORS: u64 = 100;

/// BER versus SNR for every constellation.
///
/// For each SNR point and each of `cfg.num_runs` runs: draw the run's
/// channel, adapt the configured estimator (the VSS threshold follows the
/// SNR unless fixed), then send about `bits_per_point / num_runs` fresh data
/// bits per constellation. Channels, training and data depend on the seed
/// and run index only, so different algorithms are compared on identical
/// realizations.
pub fn ber_curve(
    cfg: &RunConfig,
    constellations: &[Constellation],
    snr_grid: &[f64],
    bits_per_point: u64,
    params: &OfdmParams,
    csi: Csi,
) -> Result<Vec<BerPoint>> {
    cfg.validate()?;
    if constellations.is_empty() || snr_grid.is_empty() {
        return Err(Error::invalid("need at least one constellation and one SNR"));
    }
    let runs = cfg.num_runs;
    let jobs: Vec<(usize, usize)> = (0..snr_grid.len())
        .flat_map(|s| (0..runs).map(move |r| (s, r)))
        .collect();

    let results: Vec<Result<Vec<LinkStats>>> = jobs
        .par_iter()
        .map(|&(s, run)| {
            let mut point_cfg = *cfg;
            point_cfg.snr_db = Some(snr_grid[s]);
            let run_seed = seed::run_seed(cfg.seed, run as u64);
            let (h, estimate) = match csi {
                Csi::Estimated => {
                    let (h, adaptation) = experiment::simulate_run(&point_cfg, run)?;
                    (h, adaptation.estimate)
                }
                Csi::Perfect => {
                    let mut rng = seed::rng_from_seed(seed::substream(run_seed, streams::CHANNEL));
                    let h = channel::assemble(cfg.n_r, cfg.n_t, cfg.l, cfg.t, &cfg.channel_options(), &mut rng)?;
                    let est = ChannelEstimate::from_channel(&h);
                    (h, est)
                }
            };
            constellations
                .iter()
                .map(|c| {
                    let frame_bits = (cfg.n_t * params.num_subcarriers * c.bits_per_symbol()) as u64;
                    let per_run = bits_per_point.div_ceil(runs as u64);
                    let frames = per_run.div_ceil(frame_bits).max(1);
                    let data_seed = seed::substream(
                        seed::substream(run_seed, streams::DATA),
                        (s as u64) << 16 | c.order as u64,
                    );
                    let mut rng = seed::rng_from_seed(data_seed);
                    let bits: Vec<u8> = (0..frames * frame_bits).map(|_| rng.random_range(0..2u8)).collect();
                    ofdm_link(&bits, &h, &estimate, Some(snr_grid[s]), c, params, cfg.mode, &mut rng).map_err(|e| {
                        Error::RunFailed {
                            run,
                            seed: run_seed,
                            source: Box::new(e),
                        }
                    })
                })
                .collect()
        })
        .collect();

    let mut totals = vec![vec![LinkStats::default(); constellations.len()]; snr_grid.len()];
    for (&(s, _), per_run) in jobs.iter().zip(results) {
        for (acc, stats) in totals[s].iter_mut().zip(per_run?) {
            acc.merge(stats);
        }
    }
    let algorithm = match csi {
        Csi::Estimated => cfg.algo.variant.name().to_string(),
        Csi::Perfect => "perfect-csi".to_string(),
    };
    let mut points = Vec::with_capacity(snr_grid.len() * constellations.len());
    for (s, per_c) in totals.iter().enumerate() {
        for (c, stats) in constellations.iter().zip(per_c) {
            points.push(BerPoint {
                snr_db: snr_grid[s],
                scheme: c.scheme(),
                order: c.order(),
                algorithm: algorithm.clone(),
                ber: stats.ber(),
                errors: stats.bit_errors,
                bits: stats.bits_total,
                low_confidence: stats.bit_errors < MIN_ERRORS,
                regularized_subcarriers: stats.regularized_subcarriers,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelOptions, SparseLink};
    use crate::seed::rng_from_seed;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn qpsk_gray_map() {
        let c = Constellation::qam(4).unwrap();
        let s = c.modulate(&[0, 0, 0, 1, 1, 0, 1, 1]).unwrap();
        let a = FRAC_1_SQRT_2;
        let expect = [
            Scalar::new(a, a),
            Scalar::new(a, -a),
            Scalar::new(-a, a),
            Scalar::new(-a, -a),
        ];
        for (got, want) in s.iter().zip(&expect) {
            assert!((got - want).norm() < 1e-15);
        }
    }

    #[test]
    fn gray_pam_levels() {
        // 4-PAM: 00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3
        assert_eq!(gray_pam_level(0b00, 2), 3.0);
        assert_eq!(gray_pam_level(0b01, 2), 1.0);
        assert_eq!(gray_pam_level(0b11, 2), -1.0);
        assert_eq!(gray_pam_level(0b10, 2), -3.0);
        // 8-PAM: adjacent levels differ in one bit
        let mut by_level: Vec<(f64, usize)> = (0..8).map(|b| (gray_pam_level(b, 3), b)).collect();
        by_level.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in by_level.windows(2) {
            assert_eq!((w[0].1 ^ w[1].1).count_ones(), 1);
            assert_eq!(w[1].0 - w[0].0, 2.0);
        }
    }

    #[test]
    fn tables_have_unit_energy_and_distinct_points() {
        for (scheme, order) in [
            (Scheme::Psk, 2),
            (Scheme::Psk, 4),
            (Scheme::Qam, 4),
            (Scheme::Qam, 16),
            (Scheme::Qam, 64),
            (Scheme::Qam, 128),
        ] {
            let c = Constellation::new(scheme, order).unwrap();
            assert_eq!(c.points().len(), order);
            let e = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((e - 1.0).abs() < 1e-12, "{}: {e}", c.name());
            assert!(c.min_distance() > 1e-3);
        }
        assert!(Constellation::qam(32).is_err());
        assert!(Constellation::psk(8).is_err());
    }

    #[test]
    fn square_qam_is_gray() {
        for order in [4, 16, 64] {
            let c = Constellation::qam(order).unwrap();
            let d = c.min_distance();
            for (i, a) in c.points().iter().enumerate() {
                for (j, b) in c.points().iter().enumerate() {
                    if ((a - b).norm() - d).abs() < 1e-9 {
                        assert_eq!((i ^ j).count_ones(), 1, "qam{order}: {i} vs {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn cross_128_geometry() {
        let c = Constellation::qam(128).unwrap();
        // raw table: odd coordinates within +-11, corners |I|,|Q| > 7 empty
        for &(i, q) in CROSS_128.iter() {
            assert!(i % 2 != 0 && q % 2 != 0);
            assert!(i.abs() <= 11 && q.abs() <= 11);
            assert!(!(i.abs() > 7 && q.abs() > 7));
        }
        // average energy of the raw cross is 82
        let e: f64 = CROSS_128.iter().map(|&(i, q)| (i as f64).powi(2) + (q as f64).powi(2)).sum::<f64>() / 128.0;
        assert_eq!(e, 82.0);
        let d = c.min_distance();
        let mut pairs = 0;
        let mut bit_diffs = 0;
        for (i, a) in c.points().iter().enumerate() {
            for (j, b) in c.points().iter().enumerate().skip(i + 1) {
                if ((a - b).norm() - d).abs() < 1e-9 {
                    pairs += 1;
                    bit_diffs += (i ^ j).count_ones();
                }
            }
        }
        assert_eq!(pairs, 232);
        assert!((bit_diffs as f64 / pairs as f64) < 1.15);
    }

    #[test]
    fn round_trip_all_constellations() {
        for name in ["bpsk", "psk4", "qpsk", "qam16", "64qam", "128-QAM"] {
            let c: Constellation = name.parse().unwrap();
            let bits = random_bits(c.bits_per_symbol() * 500, 3);
            let s = c.modulate(&bits).unwrap();
            assert_eq!(c.demodulate(&s), bits, "{name}");
        }
        assert!("qam".parse::<Constellation>().is_err());
        assert!("8fsk".parse::<Constellation>().is_err());
    }

    #[test]
    fn every_label_round_trips() {
        let c = Constellation::qam(128).unwrap();
        for (label, p) in c.points().iter().enumerate() {
            assert_eq!(c.decide(*p), label);
        }
    }

    #[test]
    fn modulate_rejects_partial_symbol() {
        let c = Constellation::qam(16).unwrap();
        assert!(c.modulate(&[0, 1, 1]).is_err());
        assert!(c.modulate(&[0, 1, 2, 0]).is_err());
    }

    #[test]
    fn small_perturbation_decodes_correctly() {
        let c = Constellation::qam(64).unwrap();
        let half = c.min_distance() / 2.0;
        let mut rng = rng_from_seed(12);
        for (label, p) in c.points().iter().enumerate() {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = 0.99 * half;
            let noisy = p + Scalar::from_polar(r, angle);
            assert_eq!(c.decide(noisy), label);
        }
    }

    #[test]
    fn ties_go_to_lowest_label() {
        let c = Constellation::qam(4).unwrap();
        // origin is equidistant from all four points
        assert_eq!(c.decide(Scalar::new(0.0, 0.0)), 0);
        // on the I axis between labels 00 (+,+) and 01 (+,-)
        assert_eq!(c.decide(Scalar::new(0.5, 0.0)), 0);
        assert_eq!(c.decide(Scalar::new(-0.5, 0.0)), 2);
    }

    fn random_channel(n_r: usize, n_t: usize, l: usize, t: usize, seed: u64) -> MimoChannel {
        let mut rng = rng_from_seed(seed);
        channel::assemble(n_r, n_t, l, t, &ChannelOptions::default(), &mut rng).unwrap()
    }

    #[test]
    fn perfect_csi_noiseless_is_error_free() {
        let params = OfdmParams::for_channel_len(16);
        for (n_r, n_t, t) in [(1, 1, 4), (2, 2, 1), (3, 2, 16)] {
            let h = random_channel(n_r, n_t, 16, t, 21);
            let est = ChannelEstimate::from_channel(&h);
            for c in [Constellation::qam(16).unwrap(), Constellation::qam(128).unwrap()] {
                let bits = random_bits(n_t * 16 * c.bits_per_symbol() * 20, 5);
                let mut rng = rng_from_seed(1);
                let stats = ofdm_link(&bits, &h, &est, None, &c, &params, SignalMode::Complex, &mut rng).unwrap();
                assert_eq!(stats.bit_errors, 0, "{n_r}x{n_t} {}", c.name());
                assert_eq!(stats.bits_total, bits.len() as u64);
            }
        }
    }

    #[test]
    fn prefix_longer_than_frame() {
        let params = OfdmParams {
            num_subcarriers: 4,
            cp_len: 10,
            dft: DftScaling::Unitary,
        };
        let h = random_channel(1, 1, 4, 4, 30);
        let est = ChannelEstimate::from_channel(&h);
        let c = Constellation::qam(16).unwrap();
        let bits = random_bits(4 * 4 * 50, 9);
        let mut rng = rng_from_seed(1);
        let stats = ofdm_link(&bits, &h, &est, None, &c, &params, SignalMode::Complex, &mut rng).unwrap();
        assert_eq!(stats.bit_errors, 0);
    }

    #[test]
    fn literal_dft_scaling_is_also_error_free() {
        let params = OfdmParams {
            dft: DftScaling::Literal,
            ..OfdmParams::for_channel_len(16)
        };
        let h = random_channel(2, 2, 16, 4, 8);
        let est = ChannelEstimate::from_channel(&h);
        let c = Constellation::qam(64).unwrap();
        let bits = random_bits(2 * 16 * 6 * 10, 2);
        let mut rng = rng_from_seed(1);
        let stats = ofdm_link(&bits, &h, &est, None, &c, &params, SignalMode::Complex, &mut rng).unwrap();
        assert_eq!(stats.bit_errors, 0);
    }

    #[test]
    fn link_rejects_bad_shapes() {
        let params = OfdmParams::for_channel_len(16);
        let c = Constellation::qam(4).unwrap();
        let mut rng = rng_from_seed(1);
        let wide = random_channel(1, 2, 16, 1, 1);
        let bits = random_bits(2 * 16 * 2, 1);
        let est = ChannelEstimate::from_channel(&wide);
        assert!(ofdm_link(&bits, &wide, &est, None, &c, &params, SignalMode::Complex, &mut rng).is_err());

        let h = random_channel(2, 2, 16, 1, 1);
        let est = ChannelEstimate::from_channel(&h);
        let bits = random_bits(2 * 16 * 2 + 2, 1);
        assert!(ofdm_link(&bits, &h, &est, None, &c, &params, SignalMode::Complex, &mut rng).is_err());

        let short_cp = OfdmParams {
            cp_len: 10,
            ..params
        };
        let bits = random_bits(2 * 16 * 2, 1);
        assert!(ofdm_link(&bits, &h, &est, None, &c, &short_cp, SignalMode::Complex, &mut rng).is_err());
    }

    #[test]
    fn singular_estimate_uses_ridge() {
        let params = OfdmParams::for_channel_len(4);
        let mut taps = vec![Scalar::new(0.0, 0.0); 4];
        taps[0] = Scalar::new(1.0, 0.0);
        let link = SparseLink::from_taps(taps);
        // both rows identical -> H_k rank one on every subcarrier
        let h = MimoChannel::from_links(2, 2, vec![link.clone(), link.clone(), link.clone(), link]).unwrap();
        let est = ChannelEstimate::from_channel(&h);
        let c = Constellation::qam(4).unwrap();
        let bits = random_bits(2 * 4 * 2, 1);
        let mut rng = rng_from_seed(1);
        let stats = ofdm_link(&bits, &h, &est, None, &c, &params, SignalMode::Complex, &mut rng).unwrap();
        assert_eq!(stats.regularized_subcarriers, 4);
    }

    #[test]
    fn cyclic_prefix_makes_subcarriers_independent() {
        // Y_k = H_k X_k for a single noiseless OFDM frame, checked against a
        // time-domain linear convolution done here from scratch.
        let k = 16;
        let h = random_channel(1, 1, 16, 16, 4);
        let taps = &h.link(0, 0).taps;
        let mut rng = rng_from_seed(6);
        let x_freq: Vec<Scalar> = (0..k).map(|_| channel::gaussian(&mut rng, 1.0, SignalMode::Complex)).collect();
        let scale = (k as f64).sqrt().recip();
        let dft = |v: &[Scalar], sign: f64| -> Vec<Scalar> {
            (0..k)
                .map(|a| {
                    (0..k)
                        .map(|b| v[b] * Scalar::from_polar(scale, sign * std::f64::consts::TAU * (a * b) as f64 / k as f64))
                        .sum()
                })
                .collect()
        };
        let body = dft(&x_freq, 1.0);
        let mut frame = body.clone();
        frame.extend_from_slice(&body);
        let received: Vec<Scalar> = (k..2 * k)
            .map(|n| (0..16).map(|l| taps[l] * frame[n - l]).sum())
            .collect();
        let y = dft(&received, -1.0);
        for sc in 0..k {
            let hk: Scalar = (0..16)
                .map(|l| taps[l] * Scalar::from_polar(1.0, -std::f64::consts::TAU * (sc * l) as f64 / k as f64))
                .sum();
            assert!((y[sc] - hk * x_freq[sc]).norm() < 1e-9);
        }
    }

    #[test]
    fn unitary_transmit_preserves_power() {
        let params = OfdmParams::for_channel_len(16);
        assert!((params.tx_power() - 1.0).abs() < 1e-12);
        assert!((params.subcarrier_gain() - 1.0).abs() < 1e-12);
        let literal = OfdmParams {
            dft: DftScaling::Literal,
            ..params
        };
        assert!((literal.tx_power() - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn ber_curve_shapes_and_determinism() {
        let mut cfg = RunConfig::new(crate::estimators::AlgoConfig::new(crate::estimators::Variant::RzaVssNlms));
        cfg.num_runs = 4;
        cfg.max_iter = 500;
        let cs = [Constellation::qam(16).unwrap(), Constellation::qam(64).unwrap()];
        let params = OfdmParams::for_channel_len(16);
        let a = ber_curve(&cfg, &cs, &[10.0, 20.0], 20_000, &params, Csi::Estimated).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!((a[0].snr_db, a[0].order), (10.0, 16));
        assert_eq!((a[3].snr_db, a[3].order), (20.0, 64));
        assert!(a.iter().all(|p| p.bits >= 20_000 && p.algorithm == "rza-vss-nlms"));
        let b = ber_curve(&cfg, &cs, &[10.0, 20.0], 20_000, &params, Csi::Estimated).unwrap();
        assert_eq!(a, b);
        let genie = ber_curve(&cfg, &cs, &[10.0], 20_000, &params, Csi::Perfect).unwrap();
        assert_eq!(genie[0].algorithm, "perfect-csi");
    }
}
