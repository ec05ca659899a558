//! Per-antenna adaptive update rules.
//!
//! One [`FilterState`] estimates the stacked MISO row `h_{n_r,.}` seen by a
//! single receive antenna. Each call to [`step`] consumes one regressor
//! `x(t)` and one desired sample `d` and applies
//!
//! ```text
//! e      = d - h^T x
//! p      = beta * p + (1 - beta) * e * conj(x) / ||x||^2        (VSS only)
//! mu     = mu_max * ||p||^2 / (||p||^2 + C)                     (VSS only)
//! h     += mu * e * conj(x) / ||x||^2 - penalty(h)
//! ```
//!
//! where `penalty` is zero, `gamma_za * sgn(h)` or
//! `gamma_rza * sgn(h) / (1 + eps_rza * |h|)`.
//!
//! Complex values follow the usual complex NLMS conventions: the prediction
//! is the plain (unconjugated) sum `sum_i h_i x_i`, matching the observation
//! model `y = h^T x + z`, and the gradient direction is `conj(x)`. `sgn` acts
//! on real and imaginary parts separately and `|h|` is the modulus. With
//! purely real data all of this collapses to the real-valued rules.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Default lower bound on `||x||^2` below which a sample is skipped.
pub const DEFAULT_ENERGY_FLOOR: f64 = 1e-12;

/// Default smoothing factor of the VSS gradient accumulator.
pub const DEFAULT_BETA: f64 = 0.99;

/// Default reweighting threshold of the RZA penalty.
pub const DEFAULT_EPSILON_RZA: f64 = 20.0;

/// Default ratio between the ZA strength and the (maximal) step-size.
///
/// `gamma_za = DEFAULT_ZA_RATIO * mu` for ISS variants and
/// `DEFAULT_ZA_RATIO * mu_max` for VSS variants. Picked with the coarse grid
/// search in `examples/penalty_grid.rs` (2x2, L = 16, T = 1, 20 dB).
pub const DEFAULT_ZA_RATIO: f64 = 5e-5;

/// Same as [`DEFAULT_ZA_RATIO`] for the RZA strength. The reweighting divides
/// the pull on large taps by up to `1 + eps_rza * |h|`, so the best value sits
/// higher than for ZA.
pub const DEFAULT_RZA_RATIO: f64 = 2e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    IssNlms,
    VssNlms,
    ZaIssNlms,
    RzaIssNlms,
    ZaVssNlms,
    RzaVssNlms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    None,
    ZeroAttracting,
    Reweighted,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::IssNlms,
        Variant::VssNlms,
        Variant::ZaIssNlms,
        Variant::RzaIssNlms,
        Variant::ZaVssNlms,
        Variant::RzaVssNlms,
    ];

    pub fn is_vss(self) -> bool {
        matches!(self, Variant::VssNlms | Variant::ZaVssNlms | Variant::RzaVssNlms)
    }

    pub fn penalty(self) -> Penalty {
        match self {
            Variant::IssNlms | Variant::VssNlms => Penalty::None,
            Variant::ZaIssNlms | Variant::ZaVssNlms => Penalty::ZeroAttracting,
            Variant::RzaIssNlms | Variant::RzaVssNlms => Penalty::Reweighted,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::IssNlms => "iss-nlms",
            Variant::VssNlms => "vss-nlms",
            Variant::ZaIssNlms => "za-iss-nlms",
            Variant::RzaIssNlms => "rza-iss-nlms",
            Variant::ZaVssNlms => "za-vss-nlms",
            Variant::RzaVssNlms => "rza-vss-nlms",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        // accept "iss", "iss-nlms", "ZA_VSS_NLMS", ...
        let key = key.strip_suffix("nlms").unwrap_or(&key);
        Variant::ALL
            .into_iter()
            .find(|v| v.name().replace('-', "").trim_end_matches("nlms") == key)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm `{s}`")))
    }
}

/// Algorithm selector plus every tuning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub variant: Variant,
    /// Fixed step-size of ISS variants.
    pub mu: f64,
    /// Upper bound of the variable step-size.
    pub mu_max: f64,
    /// VSS threshold `C`.
    pub c: f64,
    pub beta: f64,
    pub gamma_za: f64,
    pub gamma_rza: f64,
    pub epsilon_rza: f64,
    /// Samples with `||x||^2` below this are skipped.
    pub energy_floor: f64,
}

impl AlgoConfig {
    /// Defaults for `variant`: `mu = 0.5`, `mu_max = 1`, `C = 1e-5`,
    /// `beta = 0.99`, penalties scaled from the relevant step-size.
    pub fn new(variant: Variant) -> Self {
        let mut cfg = AlgoConfig {
            variant,
            mu: 0.5,
            mu_max: 1.0,
            c: 1e-5,
            beta: DEFAULT_BETA,
            gamma_za: 0.0,
            gamma_rza: 0.0,
            epsilon_rza: DEFAULT_EPSILON_RZA,
            energy_floor: DEFAULT_ENERGY_FLOOR,
        };
        cfg.reset_penalties();
        cfg
    }

    /// Step-size the penalty defaults are scaled from.
    pub fn reference_step(&self) -> f64 {
        if self.variant.is_vss() {
            self.mu_max
        } else {
            self.mu
        }
    }

    /// Recompute `gamma_za`/`gamma_rza` from the current step-size.
    pub fn reset_penalties(&mut self) {
        let step = self.reference_step();
        self.gamma_za = DEFAULT_ZA_RATIO * step;
        self.gamma_rza = DEFAULT_RZA_RATIO * step;
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_mu_max(mut self, mu_max: f64) -> Self {
        self.mu_max = mu_max;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma_za(mut self, gamma: f64) -> Self {
        self.gamma_za = gamma;
        self
    }

    pub fn with_gamma_rza(mut self, gamma: f64) -> Self {
        self.gamma_rza = gamma;
        self
    }

    pub fn with_epsilon_rza(mut self, eps: f64) -> Self {
        self.epsilon_rza = eps;
        self
    }

    /// Checks every parameter range; the message names the violated bound.
    pub fn validate(&self) -> Result<()> {
        fn finite(name: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite, got {v}")))
            }
        }
        for (name, v) in [
            ("mu", self.mu),
            ("mu_max", self.mu_max),
            ("c", self.c),
            ("beta", self.beta),
            ("gamma_za", self.gamma_za),
            ("gamma_rza", self.gamma_rza),
            ("epsilon_rza", self.epsilon_rza),
            ("energy_floor", self.energy_floor),
        ] {
            finite(name, v)?;
        }
        if !(self.mu > 0.0 && self.mu < 2.0) {
            return Err(Error::invalid(format!("mu = {} violates mu ∈ (0,2)", self.mu)));
        }
        if !(self.mu_max > 0.0 && self.mu_max <= 2.0) {
            return Err(Error::invalid(format!("mu_max = {} violates mu_max ∈ (0,2]", self.mu_max)));
        }
        if self.c <= 0.0 {
            return Err(Error::invalid(format!("c = {} violates C > 0", self.c)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta = {} violates beta ∈ [0,1)", self.beta)));
        }
        for (name, v) in [
            ("gamma_za", self.gamma_za),
            ("gamma_rza", self.gamma_rza),
            ("epsilon_rza", self.epsilon_rza),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(format!("{name} = {v} violates {name} ≥ 0")));
            }
        }
        if self.energy_floor < 0.0 {
            return Err(Error::invalid("energy_floor must be non-negative"));
        }
        Ok(())
    }
}

/// Estimator of one receive antenna's stacked channel row.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Coefficient estimate, length `N_t * L`.
    pub h_hat: Vec<Scalar>,
    /// Smoothed normalized-gradient accumulator (VSS variants only).
    pub p: Vec<Scalar>,
    /// Number of samples consumed, including skipped ones.
    pub n: u64,
}

impl FilterState {
    /// Zero estimate and zero accumulator.
    pub fn zeros(len: usize) -> Self {
        FilterState {
            h_hat: vec![Scalar::new(0.0, 0.0); len],
            p: vec![Scalar::new(0.0, 0.0); len],
            n: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.h_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_hat.is_empty()
    }
}

/// What one call to [`step`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// A-priori error `d - h^T x` (before the update).
    pub error: Scalar,
    /// Step-size applied to the gradient term (0 when skipped).
    pub mu_used: f64,
    /// `||h_new - h_old||^2`.
    pub delta_sq: f64,
    /// The regressor was degenerate and the sample was ignored.
    pub skipped: bool,
}

/// Squared norm `x^H x`.
pub fn energy(x: &[Scalar]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

fn dot(h: &[Scalar], x: &[Scalar]) -> Scalar {
    h.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn check_regressor(x: &[Scalar], floor: f64) -> Result<f64> {
    let energy = energy(x);
    if energy > floor && energy.is_finite() {
        Ok(energy)
    } else {
        Err(Error::DegenerateRegressor { energy, floor })
    }
}

/// Real sign with `sgn(0) = 0`.
fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Component-wise sign of a complex value (real and imaginary parts separately).
pub fn csgn(v: Scalar) -> Scalar {
    Scalar::new(sgn(v.re), sgn(v.im))
}

#[inline]
fn za_term(h: Scalar, gamma: f64) -> Scalar {
    csgn(h) * gamma
}

#[inline]
fn rza_term(h: Scalar, gamma: f64, eps: f64) -> Scalar {
    csgn(h) * (gamma / (1.0 + eps * h.norm()))
}

/// Filter output `h^T x`.
pub fn predict(state: &FilterState, x: &[Scalar]) -> Result<Scalar> {
    Error::check_len(state.len(), x.len(), "regressor vs estimate")?;
    Ok(dot(&state.h_hat, x))
}

/// Estimation error `d - h^T x`.
pub fn error(state: &FilterState, x: &[Scalar], d: Scalar) -> Result<Scalar> {
    Ok(d - predict(state, x)?)
}

/// Normalized gradient term `step * e * conj(x) / ||x||^2`.
pub fn nlms_correction(x: &[Scalar], e: Scalar, step: f64, floor: f64) -> Result<Vec<Scalar>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let energy = check_regressor(x, floor)?;
    let scale = e * (step / energy);
    Ok(x.iter().map(|xi| scale * xi.conj()).collect())
}

/// `gamma * sgn(h)` component-wise.
pub fn za_penalty(h_hat: &[Scalar], gamma_za: f64) -> Vec<Scalar> {
    h_hat.iter().map(|&h| za_term(h, gamma_za)).collect()
}

/// `gamma * sgn(h) / (1 + eps * |h|)` component-wise.
pub fn rza_penalty(h_hat: &[Scalar], gamma_rza: f64, epsilon_rza: f64) -> Vec<Scalar> {
    h_hat
        .iter()
        .map(|&h| rza_term(h, gamma_rza, epsilon_rza))
        .collect()
}

/// Smoothed gradient `beta * p + (1 - beta) * e * conj(x) / ||x||^2`.
///
/// A degenerate regressor yields [`Error::DegenerateRegressor`]; the caller
/// is expected to keep `p_prev` as is.
pub fn update_p(p_prev: &[Scalar], x: &[Scalar], e: Scalar, beta: f64, floor: f64) -> Result<Vec<Scalar>> {
    Error::check_len(p_prev.len(), x.len(), "regressor vs accumulator")?;
    let energy = check_regressor(x, floor)?;
    let g = e * ((1.0 - beta) / energy);
    Ok(p_prev
        .iter()
        .zip(x)
        .map(|(p, xi)| p * beta + g * xi.conj())
        .collect())
}

/// Variable step-size `mu_max * ||p||^2 / (||p||^2 + C)`.
pub fn variable_step(p: &[Scalar], mu_max: f64, c: f64) -> f64 {
    let pp = energy(p);
    mu_max * (pp / (pp + c))
}

/// One adaptive update of `state` in place.
///
/// The degenerate-regressor case is not an error here: the sample is skipped
/// (only `n` advances) and the outcome is flagged.
pub fn step(state: &mut FilterState, x: &[Scalar], d: Scalar, cfg: &AlgoConfig) -> Result<StepOutcome> {
    Error::check_len(state.len(), x.len(), "regressor vs estimate")?;
    Error::check_len(state.len(), state.p.len(), "accumulator vs estimate")?;
    let e = d - dot(&state.h_hat, x);
    state.n += 1;

    let energy = match check_regressor(x, cfg.energy_floor) {
        Ok(energy) => energy,
        Err(_) => {
            return Ok(StepOutcome {
                error: e,
                mu_used: 0.0,
                delta_sq: 0.0,
                skipped: true,
            })
        }
    };

    let mu = if cfg.variant.is_vss() {
        let g = e * ((1.0 - cfg.beta) / energy);
        for (p, xi) in state.p.iter_mut().zip(x) {
            *p = *p * cfg.beta + g * xi.conj();
        }
        variable_step(&state.p, cfg.mu_max, cfg.c)
    } else {
        cfg.mu
    };

    let scale = e * (mu / energy);
    let penalty = cfg.variant.penalty();
    let mut delta_sq = 0.0;
    for (h, xi) in state.h_hat.iter_mut().zip(x) {
        let shrink = match penalty {
            Penalty::None => Scalar::new(0.0, 0.0),
            Penalty::ZeroAttracting => za_term(*h, cfg.gamma_za),
            Penalty::Reweighted => rza_term(*h, cfg.gamma_rza, cfg.epsilon_rza),
        };
        let delta = scale * xi.conj() - shrink;
        *h += delta;
        delta_sq += delta.norm_sqr();
    }

    Ok(StepOutcome {
        error: e,
        mu_used: mu,
        delta_sq,
        skipped: false,
    })
}
