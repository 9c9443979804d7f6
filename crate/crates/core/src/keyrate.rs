//! Secret key rate and the end-to-end distillation pipeline.

use serde::{Deserialize, Serialize};

use crate::decoy::{estimate_bounds, gains_from_counts, BellGroup, CountsDataset, YieldBounds, DEFAULT_TRUNCATION};
use crate::error::{domain, Error, Result};
use crate::finitesize::{merge_bell, FluctuationPolicy};
use crate::protocol::{binary_entropy, DEFAULT_CLOCK_HZ, DEFAULT_F_EC, DEFAULT_SIGNAL_PROBABILITY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInputs {
    pub p_z: f64,
    pub flux_s_a: f64,
    pub flux_s_b: f64,
    /// Z-basis gain per clock cycle.
    pub q_zz: f64,
    pub e_zz: f64,
    pub y11_lower: f64,
    pub e11_upper: f64,
    pub f_ec: f64,
    pub clock_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateTerms {
    /// `p_z² (s_a e^-s_a)(s_b e^-s_b) y11 [1 - h(e11)]`
    pub single_photon_term: f64,
    /// `f_ec Q_ZZ h(E_ZZ)`
    pub ec_term: f64,
    pub bits_per_clock: f64,
    pub bits_per_s: f64,
}

impl KeyRateInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_z", self.p_z),
            ("q_zz", self.q_zz),
            ("e_zz", self.e_zz),
            ("y11_lower", self.y11_lower),
            ("e11_upper", self.e11_upper),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.flux_s_a > 0.0 && self.flux_s_b > 0.0) {
            return Err(domain("signal fluxes must be positive"));
        }
        if !(self.f_ec >= 1.0) || !(self.clock_hz > 0.0) {
            return Err(domain("f_ec must be at least 1 and the clock positive"));
        }
        Ok(())
    }
}

/// Key rate per clock, clamped at zero, and the same in bits per second.
pub fn key_rate(inputs: &KeyRateInputs) -> Result<KeyRateTerms> {
    inputs.validate()?;
    let KeyRateInputs { p_z, flux_s_a: sa, flux_s_b: sb, .. } = *inputs;
    let single_photon_term = p_z
        * p_z
        * (sa * (-sa).exp())
        * (sb * (-sb).exp())
        * inputs.y11_lower
        * (1.0 - binary_entropy(inputs.e11_upper.min(0.5))?);
    let ec_term = inputs.f_ec * inputs.q_zz * binary_entropy(inputs.e_zz)?;
    let bits_per_clock = (single_photon_term - ec_term).max(0.0);
    Ok(KeyRateTerms { single_photon_term, ec_term, bits_per_clock, bits_per_s: bits_per_clock * inputs.clock_hz })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillOptions {
    #[serde(default)]
    pub merge_bell: bool,
    #[serde(default)]
    pub finite_size: Option<FluctuationPolicy>,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "default_p_signal")]
    pub p_signal: f64,
    #[serde(default = "default_f_ec")]
    pub f_ec: f64,
    #[serde(default = "default_clock")]
    pub clock_hz: f64,
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}
fn default_p_signal() -> f64 {
    DEFAULT_SIGNAL_PROBABILITY
}
fn default_f_ec() -> f64 {
    DEFAULT_F_EC
}
fn default_clock() -> f64 {
    DEFAULT_CLOCK_HZ
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self {
            merge_bell: false,
            finite_size: None,
            truncation: DEFAULT_TRUNCATION,
            p_signal: DEFAULT_SIGNAL_PROBABILITY,
            f_ec: DEFAULT_F_EC,
            clock_hz: DEFAULT_CLOCK_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Asymptotic,
    FiniteSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub bell: BellGroup,
    pub zz_coincidences: f64,
    pub zz_pairs_emitted: f64,
    /// Z-basis gain per clock cycle: the conditional gain times `p_z²`.
    pub q_zz_per_clock: f64,
    pub e_zz: Option<f64>,
    pub bounds: YieldBounds,
    pub terms: KeyRateTerms,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub channel_label: String,
    pub attenuation_db: f64,
    pub mode: RateMode,
    pub options: DistillOptions,
    pub states: Vec<StateReport>,
    pub rate_singlet: Option<f64>,
    pub rate_triplet: Option<f64>,
    /// Bits per second summed over the Bell states.
    pub rate_total: f64,
}

fn distill_state(data: &CountsDataset, bell: BellGroup, opts: &DistillOptions) -> Result<StateReport> {
    data.require_complete(bell)?;
    let gains = gains_from_counts(data, bell)?;
    let zz = gains.zz.as_ref().ok_or_else(|| Error::IncompleteData(format!("missing ZZ {bell} record")))?;
    let bounds = estimate_bounds(&gains, opts.truncation, opts.finite_size.as_ref())?;
    let p_z = opts.p_signal;
    let q_zz = zz.gain * p_z * p_z;
    let (e11, note) = match bounds.e11_upper {
        Some(e) => (e, None),
        None => (0.5, Some("single-photon yield bound is zero; no key".to_string())),
    };
    let inputs = KeyRateInputs {
        p_z,
        flux_s_a: zz.flux_a,
        flux_s_b: zz.flux_b,
        q_zz,
        e_zz: zz.error_rate.unwrap_or(0.0),
        y11_lower: bounds.y11_lower,
        e11_upper: e11,
        f_ec: opts.f_ec,
        clock_hz: opts.clock_hz,
    };
    let terms = key_rate(&inputs)?;
    Ok(StateReport {
        bell,
        zz_coincidences: zz.coincidences,
        zz_pairs_emitted: zz.pairs_emitted,
        q_zz_per_clock: q_zz,
        e_zz: zz.error_rate,
        bounds,
        terms,
        note,
    })
}

/// Counts to key rate: gains, decoy bounds, then the rate, per Bell state or
/// on the merged tallies.
pub fn distill(data: &CountsDataset, opts: &DistillOptions) -> Result<KeyRateReport> {
    data.validate()?;
    let mode = if opts.finite_size.is_some() { RateMode::FiniteSize } else { RateMode::Asymptotic };
    let groups = data.bell_groups();
    let mut states = Vec::new();
    if opts.merge_bell || groups == [BellGroup::Merged] {
        let merged = if groups.contains(&BellGroup::Merged) { data.clone() } else { merge_bell(data)? };
        states.push(distill_state(&merged, BellGroup::Merged, opts)?);
    } else {
        for bell in [BellGroup::Singlet, BellGroup::Triplet] {
            states.push(distill_state(data, bell, opts)?);
        }
    }
    let rate_of = |b: BellGroup| states.iter().find(|s| s.bell == b).map(|s| s.terms.bits_per_s);
    let rate_singlet = rate_of(BellGroup::Singlet);
    let rate_triplet = rate_of(BellGroup::Triplet);
    let rate_total = states.iter().map(|s| s.terms.bits_per_s).sum();
    Ok(KeyRateReport {
        channel_label: data.channel_label.clone(),
        attenuation_db: data.attenuation_db,
        mode,
        options: *opts,
        states,
        rate_singlet,
        rate_triplet,
        rate_total,
    })
}
