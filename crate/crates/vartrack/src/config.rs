//! The single source of model constants.
//!
//! Every physical and algorithmic constant used anywhere in the crate lives in
//! [`ModelConfig`]; scenario constructors, the inference engine and the CLI all
//! read from one instance of it. Each field is overridable by its flat name via
//! [`ModelConfig::set`], which is what the CLI's JSON config hooks into.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Propagation speed used throughout (radar convention, not the SI value).
///
/// With c = 3e8 the waveform numbers come out exact: range resolution
/// c/(2·96 MHz) = 1.5625 m and unambiguous range 128·c/(2·96 MHz) = 200 m.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Floor applied to Gamma-belief means when they enter matrix inverses, so a
/// collapsed precision belief can never produce a non-finite transition message.
pub const GAMMA_MEAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown constant name: {0}")]
    UnknownConstant(String),
    #[error("invalid value for {name}: {reason}")]
    InvalidValue { name: String, reason: String },
}

/// Which posterior shape the per-radar noise-precision update uses.
///
/// `DofConsistent` counts one degree of freedom per complex sample actually
/// conditioned on (N_Z per snapshot), which is what the functional-form
/// derivation of the update yields and what makes the posterior mean converge
/// to the true precision on pure noise. `Literal` is the shorter count
/// (N_s + #snapshots) kept for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaShape {
    DofConsistent,
    Literal,
}

/// All model constants, defaulting to the benchmark parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    // --- waveform / array (physical) ---
    /// Transmit elements per radar.
    pub n_tx: usize,
    /// Receive elements per radar.
    pub n_rx: usize,
    /// Pulse repetition frequency [Hz]; the tracking interval is 1/PRF.
    pub prf_hz: f64,
    /// Mean radar cross section E[sigma_RCS] [m^2].
    pub mean_rcs_m2: f64,
    /// Array gain [dB]. Descriptive only: the amplitude constant below is
    /// calibrated so the reference geometry hits the nominal SNR with the gain
    /// already absorbed.
    pub array_gain_db: f64,
    /// Reflectivity amplitude constant [V/m] in the complex-weight model.
    pub amplitude_v_per_m: f64,
    /// Maximum operating range [m]; also the delay gate for matched-filter
    /// spectra. Equals the unambiguous range N_s·c/(2·BW) at the defaults.
    pub r_max_m: f64,
    /// Carrier frequency f_c [Hz].
    pub carrier_hz: f64,
    /// Sweep bandwidth BW [Hz].
    pub bandwidth_hz: f64,
    /// Transmit pulse duration T_Tx [s].
    pub pulse_duration_s: f64,
    /// Complex baseband sample rate f_s [Hz].
    pub sample_rate_hz: f64,
    /// Measurement noise variance sigma_w^2 per complex sample.
    pub noise_variance: f64,
    /// Transmit element spacing in carrier wavelengths.
    pub tx_spacing_wavelengths: f64,
    /// Receive element spacing in carrier wavelengths.
    pub rx_spacing_wavelengths: f64,

    // --- existence / precision priors (algorithmic) ---
    /// Survival probability p_s of the existence chain.
    pub p_s: f64,
    /// Birth probability p_b of the existence chain.
    pub p_b: f64,
    /// Pruning threshold delta_minus on the existence mean.
    pub delta_minus: f64,
    /// Initiation threshold delta_plus on the existence mean.
    pub delta_plus: f64,
    /// Mean of the reflectivity-precision belief seeded at birth.
    pub gamma_init: f64,
    /// Scalar q of the birth state covariance q·I4.
    pub sigma_po: f64,
    /// Memory constant eta of the reflectivity-precision Markov chain.
    pub eta: f64,

    // --- weakly-informative priors and solver knobs ---
    /// Process-noise precision prior shape parameter (prior = Gamma(zeta/2, chi/2)).
    pub zeta: f64,
    /// Process-noise precision prior rate parameter.
    pub chi: f64,
    /// Noise-precision prior shape.
    pub alpha_z: f64,
    /// Noise-precision prior rate; defaults to sigma_w^2 so the prior mean is
    /// the configured noise floor.
    pub beta_z: f64,
    /// Existence threshold for reporting an object in the estimates.
    pub delta_est: f64,
    /// Inner iterations of the joint reflectivity/precision refinement.
    pub n_i1: usize,
    /// Smoothing sweeps per object per step.
    pub n_i2: usize,
    /// Most recent steps revisited by the smoothing sweeps; `None` = full history.
    pub smoothing_window: Option<usize>,
    /// Noise-precision posterior shape convention.
    pub lambda_shape: LambdaShape,
    /// Half field of view of the initiation search [deg] about boresight.
    pub fov_deg: f64,
    /// Position tolerance of the per-object MAP search [m].
    pub map_tol_m: f64,
    /// Cap on admissions per node per step in the initiation ring.
    pub init_max_per_node: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_tx: 4,
            n_rx: 4,
            prf_hz: 10.0,
            mean_rcs_m2: 0.05,
            array_gain_db: 30.0,
            amplitude_v_per_m: 3.9,
            r_max_m: 200.0,
            carrier_hz: 77.0e9,
            bandwidth_hz: 96.0e6,
            pulse_duration_s: 32.0e-6,
            sample_rate_hz: 4.0e6,
            noise_variance: 1.0e-6,
            tx_spacing_wavelengths: 0.5,
            rx_spacing_wavelengths: 1.0,
            p_s: 0.92,
            p_b: 1.0e-3,
            delta_minus: 0.01,
            delta_plus: 0.5,
            gamma_init: 10.0,
            sigma_po: 10.0,
            eta: 0.5e-6,
            zeta: 1.0,
            chi: 1.0,
            alpha_z: 1.0,
            beta_z: 1.0e-6,
            delta_est: 0.5,
            n_i1: 3,
            n_i2: 2,
            smoothing_window: Some(50),
            lambda_shape: LambdaShape::DofConsistent,
            fov_deg: 75.0,
            map_tol_m: 1.0e-3,
            init_max_per_node: 8,
        }
    }
}

impl ModelConfig {
    /// Tracking interval Delta t = 1/PRF [s].
    pub fn dt(&self) -> f64 {
        1.0 / self.prf_hz
    }

    /// Complex samples per pulse, N_s = f_s · T_Tx.
    pub fn n_samples(&self) -> usize {
        (self.sample_rate_hz * self.pulse_duration_s).round() as usize
    }

    /// Carrier wavelength [m].
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Set one constant by its flat name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        let positive = |v: f64, name: &str| -> Result<f64, ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(ConfigError::InvalidValue {
                    name: name.to_string(),
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        let unit = |v: f64, name: &str| -> Result<f64, ConfigError> {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(ConfigError::InvalidValue {
                    name: name.to_string(),
                    reason: format!("must lie in [0, 1], got {v}"),
                })
            }
        };
        match name {
            "n_tx" => self.n_tx = positive(value, name)? as usize,
            "n_rx" => self.n_rx = positive(value, name)? as usize,
            "prf_hz" => self.prf_hz = positive(value, name)?,
            "mean_rcs_m2" => self.mean_rcs_m2 = positive(value, name)?,
            "array_gain_db" => self.array_gain_db = value,
            "amplitude_v_per_m" => self.amplitude_v_per_m = positive(value, name)?,
            "r_max_m" => self.r_max_m = positive(value, name)?,
            "carrier_hz" => self.carrier_hz = positive(value, name)?,
            "bandwidth_hz" => self.bandwidth_hz = positive(value, name)?,
            "pulse_duration_s" => self.pulse_duration_s = positive(value, name)?,
            "sample_rate_hz" => self.sample_rate_hz = positive(value, name)?,
            "noise_variance" => self.noise_variance = positive(value, name)?,
            "tx_spacing_wavelengths" => self.tx_spacing_wavelengths = positive(value, name)?,
            "rx_spacing_wavelengths" => self.rx_spacing_wavelengths = positive(value, name)?,
            "p_s" => self.p_s = unit(value, name)?,
            "p_b" => self.p_b = unit(value, name)?,
            "delta_minus" => self.delta_minus = unit(value, name)?,
            "delta_plus" => self.delta_plus = unit(value, name)?,
            "gamma_init" => self.gamma_init = positive(value, name)?,
            "sigma_po" => self.sigma_po = positive(value, name)?,
            "eta" => self.eta = positive(value, name)?,
            "zeta" => self.zeta = positive(value, name)?,
            "chi" => self.chi = positive(value, name)?,
            "alpha_z" => self.alpha_z = positive(value, name)?,
            "beta_z" => self.beta_z = positive(value, name)?,
            "delta_est" => self.delta_est = unit(value, name)?,
            "n_i1" => self.n_i1 = positive(value, name)? as usize,
            "n_i2" => self.n_i2 = positive(value, name)? as usize,
            "smoothing_window" => {
                self.smoothing_window = if value <= 0.0 {
                    None
                } else {
                    Some(value as usize)
                }
            }
            "fov_deg" => self.fov_deg = positive(value, name)?,
            "map_tol_m" => self.map_tol_m = positive(value, name)?,
            "init_max_per_node" => self.init_max_per_node = positive(value, name)? as usize,
            _ => return Err(ConfigError::UnknownConstant(name.to_string())),
        }
        Ok(())
    }

    /// Every effective constant as (name, value) pairs, in a stable order.
    /// This is what `validate` echoes; it is the authoritative view of a run's
    /// configuration.
    pub fn effective_constants(&self) -> Vec<(&'static str, String)> {
        let f = |v: f64| format!("{v}");
        vec![
            ("n_tx", format!("{}", self.n_tx)),
            ("n_rx", format!("{}", self.n_rx)),
            ("prf_hz", f(self.prf_hz)),
            ("mean_rcs_m2", f(self.mean_rcs_m2)),
            ("array_gain_db", f(self.array_gain_db)),
            ("amplitude_v_per_m", f(self.amplitude_v_per_m)),
            ("r_max_m", f(self.r_max_m)),
            ("carrier_hz", f(self.carrier_hz)),
            ("bandwidth_hz", f(self.bandwidth_hz)),
            ("pulse_duration_s", f(self.pulse_duration_s)),
            ("sample_rate_hz", f(self.sample_rate_hz)),
            ("noise_variance", f(self.noise_variance)),
            ("tx_spacing_wavelengths", f(self.tx_spacing_wavelengths)),
            ("rx_spacing_wavelengths", f(self.rx_spacing_wavelengths)),
            ("p_s", f(self.p_s)),
            ("p_b", f(self.p_b)),
            ("delta_minus", f(self.delta_minus)),
            ("delta_plus", f(self.delta_plus)),
            ("gamma_init", f(self.gamma_init)),
            ("sigma_po", f(self.sigma_po)),
            ("eta", f(self.eta)),
            ("zeta", f(self.zeta)),
            ("chi", f(self.chi)),
            ("alpha_z", f(self.alpha_z)),
            ("beta_z", f(self.beta_z)),
            ("delta_est", f(self.delta_est)),
            ("n_i1", format!("{}", self.n_i1)),
            ("n_i2", format!("{}", self.n_i2)),
            (
                "smoothing_window",
                match self.smoothing_window {
                    Some(w) => format!("{w}"),
                    None => "full".to_string(),
                },
            ),
            (
                "lambda_shape",
                match self.lambda_shape {
                    LambdaShape::DofConsistent => "dof_consistent".to_string(),
                    LambdaShape::Literal => "literal".to_string(),
                },
            ),
            ("fov_deg", f(self.fov_deg)),
            ("map_tol_m", f(self.map_tol_m)),
            ("init_max_per_node", format!("{}", self.init_max_per_node)),
        ]
    }
}
