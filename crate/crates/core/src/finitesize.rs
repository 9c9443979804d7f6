//! Gaussian statistical-fluctuation machinery: failure probability from a
//! sigma count, the fluctuation function `F(x, n) = n / sqrt(x)`, loosening of
//! gain constraints, and singlet/triplet merging.

use serde::{Deserialize, Serialize};

use crate::decoy::{BellGroup, CountsDataset, CountsRecord, GainsTable};
use crate::error::{domain, Error, Result};

/// Number of decoy constraints (14 yield + 7 error) each carrying failure probability epsilon.
pub const DEFAULT_CONSTRAINT_COUNT: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationPolicy {
    pub n_sigmas: f64,
    #[serde(default = "default_constraint_count")]
    pub constraint_count: usize,
}

fn default_constraint_count() -> usize {
    DEFAULT_CONSTRAINT_COUNT
}

impl FluctuationPolicy {
    pub fn new(n_sigmas: f64) -> Result<Self> {
        if !(n_sigmas >= 0.0) || !n_sigmas.is_finite() {
            return Err(domain(format!("sigma count {n_sigmas} must be finite and non-negative")));
        }
        Ok(Self { n_sigmas, constraint_count: DEFAULT_CONSTRAINT_COUNT })
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_from_sigmas(self.n_sigmas).unwrap_or(1.0)
    }

    pub fn total_budget(&self) -> f64 {
        self.constraint_count as f64 * self.epsilon()
    }
}

/// Two-sided Gaussian tail `1 - erf(n / sqrt 2)`, evaluated through erfc.
pub fn epsilon_from_sigmas(n: f64) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(domain(format!("sigma count {n} must be non-negative")));
    }
    Ok(libm::erfc(n / std::f64::consts::SQRT_2))
}

pub fn fluctuation(x: f64, n: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain(format!("fluctuation sample size {x} must be positive")));
    }
    Ok(n / x.sqrt())
}

/// Multiplicative loosening attached to one class pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loosening {
    /// `1 + F(N Q, n)`, or `None` when the pair has no counts and `n > 0`.
    pub gain_upper: Option<f64>,
    /// `max(0, 1 - F(N Q, n))`.
    pub gain_lower: Option<f64>,
    /// `1 + F(N Q E, n)` for the error-product constraint.
    pub error_upper: Option<f64>,
    pub error_lower: Option<f64>,
}

impl Loosening {
    pub const NONE: Loosening =
        Loosening { gain_upper: Some(1.0), gain_lower: Some(1.0), error_upper: Some(1.0), error_lower: Some(1.0) };

    fn factors(sample: f64, n: f64) -> (Option<f64>, Option<f64>) {
        if n == 0.0 {
            return (Some(1.0), Some(1.0));
        }
        match fluctuation(sample, n) {
            Ok(f) => (Some(1.0 + f), Some((1.0 - f).max(0.0))),
            Err(_) => (None, None),
        }
    }

    /// Loosening for a record with `coincidences` observed events of which
    /// `error_coincidences` were errors.
    pub fn for_counts(coincidences: f64, error_coincidences: Option<f64>, n: f64) -> Self {
        let (gain_upper, gain_lower) = Self::factors(coincidences, n);
        let (error_upper, error_lower) = match error_coincidences {
            Some(e) => Self::factors(e, n),
            None => (None, None),
        };
        Self { gain_upper, gain_lower, error_upper, error_lower }
    }
}

/// Attach fluctuation factors to every X-basis entry of a gains table.
pub fn loosen(gains: &GainsTable, policy: &FluctuationPolicy) -> GainsTable {
    let mut out = gains.clone();
    for entry in out.xx.iter_mut() {
        entry.loosening = Loosening::for_counts(
            entry.coincidences,
            entry.error_rate.map(|_| entry.error_coincidences),
            policy.n_sigmas,
        );
    }
    out.n_sigmas = policy.n_sigmas;
    out
}

/// Sum singlet and triplet tallies per class pair. `pairs_emitted` is shared
/// by both Bell states, so it is carried over unchanged.
pub fn merge_bell(data: &CountsDataset) -> Result<CountsDataset> {
    let mut merged: Vec<CountsRecord> = Vec::new();
    for rec in &data.records {
        if rec.bell == BellGroup::Merged {
            return Err(domain("dataset is already merged"));
        }
        if let Some(m) =
            merged.iter_mut().find(|m| m.basis == rec.basis && m.class_a == rec.class_a && m.class_b == rec.class_b)
        {
            m.coincidences += rec.coincidences;
            m.error_coincidences += rec.error_coincidences;
            continue;
        }
        let partner = data.records.iter().any(|o| {
            o.basis == rec.basis && o.class_a == rec.class_a && o.class_b == rec.class_b && o.bell != rec.bell
        });
        if !partner {
            return Err(Error::IncompleteData(format!(
                "no Bell-state partner for {} {}/{} {:?}",
                rec.basis, rec.class_a, rec.class_b, rec.bell
            )));
        }
        merged.push(CountsRecord { bell: BellGroup::Merged, ..rec.clone() });
    }
    Ok(CountsDataset { records: merged, ..data.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::BasisPair;
    use crate::protocol::IntensityClass::*;
    use approx::assert_relative_eq;

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_from_sigmas(0.0).unwrap(), 1.0);
        // erfc(7/sqrt 2) and erfc(1/sqrt 2) from a 30-digit reference evaluation.
        assert_relative_eq!(epsilon_from_sigmas(7.0).unwrap(), 2.559_625_087_771_67e-12, max_relative = 1e-12);
        assert_relative_eq!(epsilon_from_sigmas(1.0).unwrap(), 0.317_310_507_862_914_1, max_relative = 1e-14);
        assert!(epsilon_from_sigmas(-1.0).is_err());
        // deep tail keeps relative accuracy
        let e = epsilon_from_sigmas(11.5).unwrap();
        assert!(e > 1e-31 && e < 1e-29);
    }

    #[test]
    fn epsilon_decreases_and_budget_holds() {
        let mut prev = 1.0;
        for k in 1..=100 {
            let e = epsilon_from_sigmas(k as f64 * 0.1).unwrap();
            assert!(e < prev);
            prev = e;
        }
        let policy = FluctuationPolicy::new(7.0).unwrap();
        assert!(policy.total_budget() < 5.4e-11);
    }

    #[test]
    fn fluctuation_examples() {
        assert_relative_eq!(fluctuation(100.0, 7.0).unwrap(), 0.7);
        assert_eq!(fluctuation(4.0, 2.0).unwrap(), 1.0);
        assert!(fluctuation(0.0, 7.0).is_err());
        assert!(fluctuation(-1.0, 7.0).is_err());
        // merging doubles the sample: exactly a sqrt 2 gain
        let x = 12345.0;
        assert_relative_eq!(
            fluctuation(2.0 * x, 7.0).unwrap(),
            fluctuation(x, 7.0).unwrap() / 2f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn loosening_boundaries() {
        let none = Loosening::for_counts(1000.0, Some(300.0), 0.0);
        assert_eq!(none, Loosening::NONE);
        let edge = Loosening::for_counts(49.0, None, 7.0);
        assert_eq!(edge.gain_upper, Some(2.0));
        assert_eq!(edge.gain_lower, Some(0.0));
        assert_eq!(edge.error_upper, None);
        let empty = Loosening::for_counts(0.0, None, 7.0);
        assert_eq!(empty.gain_upper, None);
    }

    fn rec(bell: BellGroup, c: f64, e: f64) -> CountsRecord {
        CountsRecord {
            basis: BasisPair::XX,
            class_a: Decoy1,
            class_b: Decoy1,
            bell,
            coincidences: c,
            error_coincidences: e,
            pairs_emitted: 100.0,
            flux_a: 0.01,
            flux_b: 0.01,
        }
    }

    #[test]
    fn merge_adds_tallies() {
        let data = CountsDataset {
            channel_label: "toy".into(),
            attenuation_db: 0.0,
            records: vec![rec(BellGroup::Singlet, 10.0, 3.0), rec(BellGroup::Triplet, 12.0, 4.0)],
        };
        let m = merge_bell(&data).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].coincidences, 22.0);
        assert_eq!(m.records[0].error_coincidences, 7.0);
        assert_eq!(m.records[0].pairs_emitted, 100.0);
        assert_eq!(m.records[0].bell, BellGroup::Merged);
    }

    #[test]
    fn merge_requires_partner() {
        let data = CountsDataset {
            channel_label: "toy".into(),
            attenuation_db: 0.0,
            records: vec![rec(BellGroup::Singlet, 10.0, 3.0)],
        };
        assert!(matches!(merge_bell(&data), Err(Error::IncompleteData(_))));
    }
}
