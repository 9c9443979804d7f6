//! Protocol-level types and rules: intensity classes, bases and polarizations,
//! Bell-outcome classification at the relay, sifting, and the handful of
//! elementary functions (binary entropy, Poisson weights) that every other
//! module leans on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Probability of choosing the signal class (and hence the Z basis), 45/48.
pub const DEFAULT_SIGNAL_PROBABILITY: f64 = 45.0 / 48.0;
/// Error-correction inefficiency relative to the Shannon limit.
pub const DEFAULT_F_EC: f64 = 1.16;
/// Source repetition rate in Hz.
pub const DEFAULT_CLOCK_HZ: f64 = 1e9;

/// Pulse intensity class chosen per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntensityClass {
    #[serde(rename = "s")]
    Signal,
    #[serde(rename = "u")]
    Decoy1,
    #[serde(rename = "v")]
    Decoy2,
    #[serde(rename = "w")]
    Vacuum,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 4] = [Self::Signal, Self::Decoy1, Self::Decoy2, Self::Vacuum];
    /// The three classes prepared in the X basis.
    pub const DECOYS: [IntensityClass; 3] = [Self::Decoy1, Self::Decoy2, Self::Vacuum];

    pub fn label(self) -> &'static str {
        match self {
            Self::Signal => "s",
            Self::Decoy1 => "u",
            Self::Decoy2 => "v",
            Self::Vacuum => "w",
        }
    }

    /// Signal pulses carry Z-basis states, every other class carries X-basis states.
    pub fn basis(self) -> Basis {
        match self {
            Self::Signal => Basis::Z,
            _ => Basis::X,
        }
    }
}

impl fmt::Display for IntensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IntensityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "s" => Ok(Self::Signal),
            "u" => Ok(Self::Decoy1),
            "v" => Ok(Self::Decoy2),
            "w" => Ok(Self::Vacuum),
            other => Err(domain(format!("unknown intensity class '{other}'"))),
        }
    }
}

/// Mean photon number per pulse for each class, for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassFluxes {
    #[serde(rename = "s")]
    pub signal: f64,
    #[serde(rename = "u")]
    pub decoy1: f64,
    #[serde(rename = "v")]
    pub decoy2: f64,
    #[serde(rename = "w")]
    pub vacuum: f64,
}

impl ClassFluxes {
    pub fn new(signal: f64, decoy1: f64, decoy2: f64, vacuum: f64) -> Result<Self> {
        let fluxes = Self { signal, decoy1, decoy2, vacuum };
        fluxes.validate()?;
        Ok(fluxes)
    }

    pub fn get(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.signal,
            IntensityClass::Decoy1 => self.decoy1,
            IntensityClass::Decoy2 => self.decoy2,
            IntensityClass::Vacuum => self.vacuum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.signal, self.decoy1, self.decoy2, self.vacuum];
        if all.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(domain("fluxes must be finite and non-negative"));
        }
        if !(self.signal > 0.0 && self.signal <= 1.0) {
            return Err(domain(format!("signal flux {} outside (0, 1]", self.signal)));
        }
        if !(self.vacuum <= self.decoy2 && self.decoy2 <= self.decoy1 && self.decoy1 < self.signal) {
            return Err(domain("fluxes must satisfy w <= v <= u < s"));
        }
        Ok(())
    }
}

impl Default for ClassFluxes {
    /// The 2.33 dB operating point: 0.7 photons/pulse in Z, 0.01/0.002/0.001 in X.
    fn default() -> Self {
        Self { signal: 0.7, decoy1: 0.01, decoy2: 0.002, vacuum: 0.001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
}

impl Polarization {
    pub fn basis(self) -> Basis {
        match self {
            Self::H | Self::V => Basis::Z,
            Self::D | Self::A => Basis::X,
        }
    }

    /// Encoded bit: H and D carry 0, V and A carry 1.
    pub fn bit(self) -> bool {
        matches!(self, Self::V | Self::A)
    }

    pub fn from_bit(basis: Basis, bit: bool) -> Self {
        match (basis, bit) {
            (Basis::Z, false) => Self::H,
            (Basis::Z, true) => Self::V,
            (Basis::X, false) => Self::D,
            (Basis::X, true) => Self::A,
        }
    }

    /// Real field amplitudes projected on the (H, V) axes of the relay's PBSs.
    pub fn hv_amplitudes(self) -> [f64; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Self::H => [1.0, 0.0],
            Self::V => [0.0, 1.0],
            Self::D => [r, r],
            Self::A => [r, -r],
        }
    }
}

/// The relay's four detectors: beam-splitter output (c or d) times PBS port (H or V).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    CH,
    CV,
    DH,
    DV,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Self::CH, Self::CV, Self::DH, Self::DV];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::CH => "cH",
            Self::CV => "cV",
            Self::DH => "dH",
            Self::DV => "dV",
        }
    }
}

/// Set of detectors that clicked in one gate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ClickPattern(u8);

impl ClickPattern {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn with(mut self, detector: Detector) -> Self {
        self.insert(detector);
        self
    }

    pub fn insert(&mut self, detector: Detector) {
        self.0 |= 1 << detector.index();
    }

    pub fn contains(self, detector: Detector) -> bool {
        self.0 & (1 << detector.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl FromIterator<Detector> for ClickPattern {
    fn from_iter<I: IntoIterator<Item = Detector>>(iter: I) -> Self {
        iter.into_iter().fold(Self::empty(), Self::with)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    Singlet,
    Triplet,
    NoEvent,
}

/// Orthogonal-polarization detector pairs, in announcement order.
pub const COINCIDENCE_PAIRS: [(Detector, Detector, BellOutcome); 4] = [
    (Detector::CH, Detector::CV, BellOutcome::Triplet),
    (Detector::CH, Detector::DV, BellOutcome::Singlet),
    (Detector::DH, Detector::CV, BellOutcome::Singlet),
    (Detector::DH, Detector::DV, BellOutcome::Triplet),
];

/// Map a click pattern to the successful events it announces: one outcome per
/// H/V detector pair present. Same-polarization pairs announce nothing.
pub fn classify_coincidence(clicks: ClickPattern) -> Vec<BellOutcome> {
    COINCIDENCE_PAIRS
        .iter()
        .filter(|(a, b, _)| clicks.contains(*a) && clicks.contains(*b))
        .map(|&(_, _, outcome)| outcome)
        .collect()
}

/// Sifting and Bob's bit flip. Returns Bob's final bit, or `None` when the
/// bases differ (or there was no event). Bob flips every bit except on
/// matched-X triplets.
pub fn sift_and_flip(basis_a: Basis, basis_b: Basis, outcome: BellOutcome, bit_b: bool) -> Option<bool> {
    if basis_a != basis_b || outcome == BellOutcome::NoEvent {
        return None;
    }
    let keep = basis_a == Basis::X && outcome == BellOutcome::Triplet;
    Some(if keep { bit_b } else { !bit_b })
}

/// Shannon binary entropy in bits, with h(0) = h(1) = 0.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("binary entropy argument {p} outside [0, 1]")));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// `mu^n / n!` without the `e^-mu` factor, built as a running product.
pub fn photon_weight(mu: f64, n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * mu / f64::from(k))
}

/// Poisson probability of emitting `n` photons from a pulse of mean `mu`.
pub fn poisson_pmf(n: u32, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(domain(format!("Poisson mean {mu} must be finite and non-negative")));
    }
    Ok((-mu).exp() * photon_weight(mu, n))
}

/// Source and post-processing settings shared by both users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default)]
    pub alice: ClassFluxes,
    #[serde(default)]
    pub bob: ClassFluxes,
    /// p_s = p_Z; the three X-basis classes share `1 - p_s` equally.
    #[serde(default = "default_p_signal")]
    pub p_signal: f64,
    #[serde(default = "default_f_ec")]
    pub f_ec: f64,
    #[serde(default = "default_clock")]
    pub clock_hz: f64,
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

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            alice: ClassFluxes::default(),
            bob: ClassFluxes::default(),
            p_signal: DEFAULT_SIGNAL_PROBABILITY,
            f_ec: DEFAULT_F_EC,
            clock_hz: DEFAULT_CLOCK_HZ,
        }
    }
}

impl ProtocolConfig {
    pub fn symmetric(fluxes: ClassFluxes) -> Self {
        Self { alice: fluxes, bob: fluxes, ..Self::default() }
    }

    pub fn class_probability(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.p_signal,
            _ => (1.0 - self.p_signal) / 3.0,
        }
    }

    pub fn p_z(&self) -> f64 {
        self.p_signal
    }

    pub fn validate(&self) -> Result<()> {
        self.alice.validate()?;
        self.bob.validate()?;
        if !(self.p_signal > 0.0 && self.p_signal < 1.0) {
            return Err(domain(format!("p_s = {} must lie in (0, 1)", self.p_signal)));
        }
        if !(self.f_ec >= 1.0) {
            return Err(domain(format!("f_ec = {} must be at least 1", self.f_ec)));
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(domain("clock rate must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pattern(ds: &[Detector]) -> ClickPattern {
        ds.iter().copied().collect()
    }

    #[test]
    fn classify_examples() {
        use Detector::*;
        assert_eq!(classify_coincidence(pattern(&[CH, DV])), vec![BellOutcome::Singlet]);
        assert_eq!(classify_coincidence(pattern(&[DH, CV])), vec![BellOutcome::Singlet]);
        assert_eq!(classify_coincidence(pattern(&[CH, CV])), vec![BellOutcome::Triplet]);
        assert!(classify_coincidence(pattern(&[CH])).is_empty());
        assert!(classify_coincidence(pattern(&[CH, DH])).is_empty());
        assert_eq!(classify_coincidence(pattern(&[CH, CV, DV])), vec![BellOutcome::Triplet, BellOutcome::Singlet]);
    }

    #[test]
    fn classify_counts_orthogonal_pairs_for_every_subset() {
        for mask in 0u8..16 {
            let clicks: ClickPattern = Detector::ALL.iter().copied().filter(|d| mask & (1 << d.index()) != 0).collect();
            let h = [Detector::CH, Detector::DH].iter().filter(|d| clicks.contains(**d)).count();
            let v = [Detector::CV, Detector::DV].iter().filter(|d| clicks.contains(**d)).count();
            let out = classify_coincidence(clicks);
            assert_eq!(out.len(), h * v);
            assert!(out.iter().all(|o| *o != BellOutcome::NoEvent));
        }
    }

    #[test]
    fn sifting_examples() {
        use BellOutcome::*;
        assert_eq!(sift_and_flip(Basis::Z, Basis::Z, Singlet, false), Some(true));
        assert_eq!(sift_and_flip(Basis::Z, Basis::X, Singlet, false), None);
        assert_eq!(sift_and_flip(Basis::X, Basis::X, Triplet, false), Some(false));
        assert_eq!(sift_and_flip(Basis::X, Basis::X, Singlet, false), Some(true));
        assert_eq!(sift_and_flip(Basis::Z, Basis::Z, NoEvent, false), None);
        for b in [false, true] {
            assert_eq!(sift_and_flip(Basis::Z, Basis::Z, Triplet, b), Some(!b));
            assert_eq!(sift_and_flip(Basis::X, Basis::X, Triplet, b), Some(b));
            assert_eq!(sift_and_flip(Basis::X, Basis::X, Singlet, b), Some(!b));
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // -p log2 p - (1-p) log2(1-p) at p = 0.0034, evaluated independently.
        assert_relative_eq!(binary_entropy(0.0034).unwrap(), 0.032_777_663_325_189_9, max_relative = 1e-12);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(poisson_pmf(1, 0.7).unwrap(), 0.7 * (-0.7f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(poisson_pmf(1, 0.7).unwrap(), 0.347_609_712_653_986_6, max_relative = 1e-14);
        assert_relative_eq!(poisson_pmf(2, 0.01).unwrap(), 4.950_249_168_745_84e-5, max_relative = 1e-13);
        assert!(poisson_pmf(1, -0.1).is_err());
        // n = 25 must not overflow or underflow.
        let p = poisson_pmf(25, 1.0).unwrap();
        assert!(p > 0.0 && p < 1e-25);
    }

    #[test]
    fn default_protocol_matches_preparation_rules() {
        let cfg = ProtocolConfig::default();
        cfg.validate().unwrap();
        let total: f64 = IntensityClass::ALL.iter().map(|c| cfg.class_probability(*c)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-15);
        assert_relative_eq!(cfg.class_probability(IntensityClass::Decoy1), 1.0 / 48.0, epsilon = 1e-15);
        assert_eq!(cfg.f_ec, 1.16);
        assert_eq!(cfg.clock_hz, 1e9);
    }

    #[test]
    fn flux_ordering_is_enforced() {
        assert!(ClassFluxes::new(0.7, 0.01, 0.002, 0.001).is_ok());
        assert!(ClassFluxes::new(0.7, 0.001, 0.002, 0.001).is_err());
        assert!(ClassFluxes::new(1.2, 0.01, 0.002, 0.0).is_err());
        assert!(ClassFluxes::new(0.7, 0.01, 0.002, -0.001).is_err());
    }

    proptest! {
        #[test]
        fn entropy_is_symmetric(p in 0.0f64..=1.0) {
            let a = binary_entropy(p).unwrap();
            let b = binary_entropy(1.0 - p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn poisson_mass_sums_to_one(mu in 0.0f64..=1.0) {
            let total: f64 = (0..=40).map(|n| poisson_pmf(n, mu).unwrap()).sum();
            prop_assert!((1.0 - 1e-12..=1.0 + 1e-15).contains(&total));
        }
    }
}
