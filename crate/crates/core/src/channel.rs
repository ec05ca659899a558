//! Sparse MIMO channel generation, transmit tap-delay lines and noisy
//! observation.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar, SignalMode};

/// How the per-row channel power constraint is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Every realized MISO row is rescaled to unit squared norm.
    #[default]
    Exact,
    /// Taps are scaled so that the expected squared row norm is one.
    Expectation,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Normalization::Exact),
            "expectation" => Ok(Normalization::Expectation),
            other => Err(Error::invalid(format!("unknown normalization `{other}` (expected exact|expectation)"))),
        }
    }
}

/// Distribution of the training samples fed to every transmit antenna.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Training {
    /// Unit-modulus QPSK (BPSK in real mode).
    #[default]
    Qpsk,
    /// Unit-power Gaussian.
    Gaussian,
}

impl std::str::FromStr for Training {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Training::Qpsk),
            "gaussian" => Ok(Training::Gaussian),
            other => Err(Error::invalid(format!("unknown training signal `{other}` (expected qpsk|gaussian)"))),
        }
    }
}

/// Zero-mean Gaussian with the given total variance; circular in complex mode.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64, mode: SignalMode) -> Scalar {
    match mode {
        SignalMode::Real => {
            let g: f64 = StandardNormal.sample(rng);
            Scalar::new(g * variance.sqrt(), 0.0)
        }
        SignalMode::Complex => {
            let s = (variance / 2.0).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Scalar::new(re * s, im * s)
        }
    }
}

/// One unit-power training sample.
pub fn training_sample<R: Rng + ?Sized>(rng: &mut R, kind: Training, mode: SignalMode) -> Scalar {
    match kind {
        Training::Gaussian => gaussian(rng, 1.0, mode),
        Training::Qpsk => {
            let bits: u8 = rng.random();
            let sign = |b: u8| if b & 1 == 0 { 1.0 } else { -1.0 };
            match mode {
                SignalMode::Real => Scalar::new(sign(bits), 0.0),
                SignalMode::Complex => Scalar::new(sign(bits), sign(bits >> 1)) * std::f64::consts::FRAC_1_SQRT_2,
            }
        }
    }
}

/// Impulse response of one transmit/receive antenna pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLink {
    pub taps: Vec<Scalar>,
    /// Sorted indices of the nonzero taps.
    pub support: Vec<usize>,
}

impl SparseLink {
    /// Builds a link from explicit taps; the support is the set of nonzero entries.
    pub fn from_taps(taps: Vec<Scalar>) -> Self {
        let support = taps
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(i, _)| i)
            .collect();
        SparseLink { taps, support }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        crate::estimators::energy(&self.taps)
    }
}

/// Draws a length-`l` link with `t` nonzero taps at uniformly random positions.
pub fn generate_link<R: Rng + ?Sized>(
    l: usize,
    t: usize,
    tap_variance: f64,
    mode: SignalMode,
    rng: &mut R,
) -> Result<SparseLink> {
    if t < 1 || t > l {
        return Err(Error::invalid(format!("sparsity T = {t} must satisfy 1 ≤ T ≤ L = {l}")));
    }
    if !(tap_variance > 0.0 && tap_variance.is_finite()) {
        return Err(Error::invalid(format!("tap variance must be positive, got {tap_variance}")));
    }
    let mut support = sample(rng, l, t).into_vec();
    support.sort_unstable();
    let mut taps = vec![Scalar::new(0.0, 0.0); l];
    for &i in &support {
        // an exact zero draw would break the support invariant
        let mut v = gaussian(rng, tap_variance, mode);
        while v.norm_sqr() == 0.0 {
            v = gaussian(rng, tap_variance, mode);
        }
        taps[i] = v;
    }
    Ok(SparseLink { taps, support })
}

/// Options for [`assemble`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelOptions {
    pub tap_variance: f64,
    pub normalization: Normalization,
    pub mode: SignalMode,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        ChannelOptions {
            tap_variance: 1.0,
            normalization: Normalization::Exact,
            mode: SignalMode::Complex,
        }
    }
}

/// Ground-truth `N_r x (N_t * L)` channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannel {
    n_r: usize,
    n_t: usize,
    l: usize,
    /// Row-major: link `(r, t)` at `r * n_t + t`.
    links: Vec<SparseLink>,
}

impl MimoChannel {
    /// Builds a channel from explicit links given row by row.
    pub fn from_links(n_r: usize, n_t: usize, links: Vec<SparseLink>) -> Result<Self> {
        if n_r == 0 || n_t == 0 {
            return Err(Error::invalid("channel dimensions must be at least 1"));
        }
        Error::check_len(n_r * n_t, links.len(), "number of links")?;
        let l = links[0].len();
        if l == 0 {
            return Err(Error::invalid("channel length must be at least 1"));
        }
        for link in &links {
            Error::check_len(l, link.len(), "link length")?;
        }
        Ok(MimoChannel { n_r, n_t, l, links })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Taps per link.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Length of a stacked MISO row, `N_t * L`.
    pub fn row_len(&self) -> usize {
        self.n_t * self.l
    }

    pub fn link(&self, rx: usize, tx: usize) -> &SparseLink {
        &self.links[rx * self.n_t + tx]
    }

    pub fn links(&self) -> &[SparseLink] {
        &self.links
    }

    /// Stacked row `[h_{r,1}; h_{r,2}; ...; h_{r,N_t}]`.
    pub fn row(&self, rx: usize) -> Vec<Scalar> {
        (0..self.n_t)
            .flat_map(|tx| self.link(rx, tx).taps.iter().copied())
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<Scalar>> {
        (0..self.n_r).map(|r| self.row(r)).collect()
    }

    pub fn row_energy(&self, rx: usize) -> f64 {
        (0..self.n_t).map(|tx| self.link(rx, tx).energy()).sum()
    }

    fn scale_row(&mut self, rx: usize, factor: f64) {
        for tx in 0..self.n_t {
            for v in &mut self.links[rx * self.n_t + tx].taps {
                *v *= factor;
            }
        }
    }

    pub fn to_document(&self) -> ChannelDocument {
        ChannelDocument {
            n_r: self.n_r,
            n_t: self.n_t,
            l: self.l,
            links: self
                .links
                .iter()
                .enumerate()
                .map(|(i, link)| LinkDocument {
                    rx: i / self.n_t,
                    tx: i % self.n_t,
                    support: link.support.clone(),
                    taps: link.taps.iter().map(|v| [v.re, v.im]).collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ChannelDocument) -> Result<Self> {
        Error::check_len(doc.n_r * doc.n_t, doc.links.len(), "number of links")?;
        let mut links = vec![None; doc.links.len()];
        for link in &doc.links {
            if link.rx >= doc.n_r || link.tx >= doc.n_t {
                return Err(Error::invalid(format!("link ({}, {}) out of range", link.rx, link.tx)));
            }
            Error::check_len(doc.l, link.taps.len(), "link length")?;
            let taps: Vec<Scalar> = link.taps.iter().map(|[re, im]| Scalar::new(*re, *im)).collect();
            let parsed = SparseLink::from_taps(taps);
            if parsed.support != link.support {
                return Err(Error::invalid(format!(
                    "link ({}, {}): support {:?} does not match nonzero taps {:?}",
                    link.rx, link.tx, link.support, parsed.support
                )));
            }
            links[link.rx * doc.n_t + link.tx] = Some(parsed);
        }
        let links = links
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::invalid("duplicate link entries"))?;
        MimoChannel::from_links(doc.n_r, doc.n_t, links)
    }
}

/// JSON form of a channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDocument {
    pub n_r: usize,
    pub n_t: usize,
    pub l: usize,
    pub links: Vec<LinkDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDocument {
    pub rx: usize,
    pub tx: usize,
    pub support: Vec<usize>,
    /// `[re, im]` pairs.
    pub taps: Vec<[f64; 2]>,
}

/// Draws an `n_r x n_t` channel of length-`l` links with `t` dominant taps each.
pub fn assemble<R: Rng + ?Sized>(
    n_r: usize,
    n_t: usize,
    l: usize,
    t: usize,
    opts: &ChannelOptions,
    rng: &mut R,
) -> Result<MimoChannel> {
    if n_r == 0 || n_t == 0 || l == 0 {
        return Err(Error::invalid(format!(
            "channel dimensions must be positive (N_r = {n_r}, N_t = {n_t}, L = {l})"
        )));
    }
    let links = (0..n_r * n_t)
        .map(|_| generate_link(l, t, opts.tap_variance, opts.mode, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut h = MimoChannel::from_links(n_r, n_t, links)?;
    for rx in 0..n_r {
        let factor = match opts.normalization {
            Normalization::Exact => 1.0 / h.row_energy(rx).sqrt(),
            Normalization::Expectation => 1.0 / ((n_t * t) as f64 * opts.tap_variance).sqrt(),
        };
        h.scale_row(rx, factor);
    }
    Ok(h)
}

/// Tap-delay lines of all transmit antennas.
///
/// The stacked regressor is `[line_1; ...; line_{N_t}]`, each line newest
/// sample first.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBank {
    n_t: usize,
    l: usize,
    stacked: Vec<Scalar>,
}

impl RegressorBank {
    pub fn new(n_t: usize, l: usize) -> Self {
        RegressorBank {
            n_t,
            l,
            stacked: vec![Scalar::new(0.0, 0.0); n_t * l],
        }
    }

    pub fn stacked(&self) -> &[Scalar] {
        &self.stacked
    }

    /// Shifts every line by one and inserts `samples[t]` at delay 0 of line `t`.
    pub fn push_and_stack(&mut self, samples: &[Scalar]) -> Result<&[Scalar]> {
        Error::check_len(self.n_t, samples.len(), "transmit samples")?;
        for (line, &s) in self.stacked.chunks_exact_mut(self.l).zip(samples) {
            line.copy_within(0..self.l - 1, 1);
            line[0] = s;
        }
        Ok(&self.stacked)
    }

    pub fn reset(&mut self) {
        self.stacked.fill(Scalar::new(0.0, 0.0));
    }
}

/// Receiver noise level relative to the received signal power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    /// Received signal power `P_0`.
    pub signal_power: f64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64) -> Self {
        NoiseSpec {
            snr_db,
            signal_power: 1.0,
        }
    }

    /// `P_0 / 10^(snr_db / 10)`.
    pub fn variance(&self) -> f64 {
        self.signal_power / 10f64.powf(self.snr_db / 10.0)
    }
}

/// `y = H x + z`. `noise = None` gives the noiseless observation.
pub fn observe<R: Rng + ?Sized>(
    h: &MimoChannel,
    x: &[Scalar],
    noise: Option<&NoiseSpec>,
    mode: SignalMode,
    rng: &mut R,
) -> Result<Vec<Scalar>> {
    let mut y = vec![Scalar::new(0.0, 0.0); h.n_r()];
    observe_into(h, x, noise.map(NoiseSpec::variance).unwrap_or(0.0), mode, rng, &mut y)?;
    Ok(y)
}

/// Allocation-free form of [`observe`] with the noise variance given directly.
///
/// Noise is drawn for every receive antenna whenever `noise_variance > 0`, so
/// the generator advances identically whatever the caller does with `y`.
pub fn observe_into<R: Rng + ?Sized>(
    h: &MimoChannel,
    x: &[Scalar],
    noise_variance: f64,
    mode: SignalMode,
    rng: &mut R,
    y: &mut [Scalar],
) -> Result<()> {
    Error::check_len(h.row_len(), x.len(), "stacked regressor")?;
    Error::check_len(h.n_r(), y.len(), "observation")?;
    for (rx, out) in y.iter_mut().enumerate() {
        let mut acc = Scalar::new(0.0, 0.0);
        for tx in 0..h.n_t() {
            let line = &x[tx * h.l()..(tx + 1) * h.l()];
            let link = h.link(rx, tx);
            for &i in &link.support {
                acc += link.taps[i] * line[i];
            }
        }
        if noise_variance > 0.0 {
            acc += gaussian(rng, noise_variance, mode);
        }
        *out = acc;
    }
    Ok(())
}
