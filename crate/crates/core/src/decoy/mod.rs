//! Counts to gains, and decoy-state bounds on the single-photon yield and
//! error rate by linear programming.

mod constraints;
pub mod lp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use constraints::{
    build_error_constraints, build_yield_constraints, consistency_sigmas, ConstraintKind, ConstraintSet,
    LabeledConstraint, CUMULATIVE_PAIRS, RETAINED_PAIRS,
};
pub use lp::LpStatus;

use crate::error::{domain, Error, Result};
use crate::finitesize::{merge_bell, FluctuationPolicy, Loosening};
use crate::protocol::{Basis, IntensityClass};

/// Default photon-number truncation order of the decoy linear programs.
pub const DEFAULT_TRUNCATION: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisPair {
    ZZ,
    XX,
}

impl BasisPair {
    pub fn basis(self) -> Basis {
        match self {
            Self::ZZ => Basis::Z,
            Self::XX => Basis::X,
        }
    }
}

impl fmt::Display for BasisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ZZ => "ZZ",
            Self::XX => "XX",
        })
    }
}

impl FromStr for BasisPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ZZ" => Ok(Self::ZZ),
            "XX" => Ok(Self::XX),
            other => Err(domain(format!("unknown basis pair '{other}'"))),
        }
    }
}

/// Which Bell-state tallies a record (or a gains table) describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BellGroup {
    Singlet,
    Triplet,
    Merged,
}

impl fmt::Display for BellGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Singlet => "singlet",
            Self::Triplet => "triplet",
            Self::Merged => "merged",
        })
    }
}

impl FromStr for BellGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "singlet" | "s" | "psi-" => Ok(Self::Singlet),
            "triplet" | "t" | "psi+" => Ok(Self::Triplet),
            "merged" => Ok(Self::Merged),
            other => Err(domain(format!("unknown Bell state '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsRecord {
    pub basis: BasisPair,
    pub class_a: IntensityClass,
    pub class_b: IntensityClass,
    pub bell: BellGroup,
    pub coincidences: f64,
    pub error_coincidences: f64,
    /// Pulse pairs emitted in this class combination.
    pub pairs_emitted: f64,
    pub flux_a: f64,
    pub flux_b: f64,
}

impl CountsRecord {
    pub fn id(&self) -> String {
        format!("{} {}/{} {}", self.basis, self.class_a, self.class_b, self.bell)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidRecord { record: self.id(), reason });
        for (name, v) in [
            ("coincidences", self.coincidences),
            ("error coincidences", self.error_coincidences),
            ("flux_a", self.flux_a),
            ("flux_b", self.flux_b),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if !(self.pairs_emitted > 0.0) || !self.pairs_emitted.is_finite() {
            return bad(format!("pairs_emitted = {} must be positive", self.pairs_emitted));
        }
        if self.error_coincidences > self.coincidences {
            return bad(format!(
                "error coincidences {} exceed coincidences {}",
                self.error_coincidences, self.coincidences
            ));
        }
        if self.coincidences > self.pairs_emitted {
            return bad("coincidences exceed pairs emitted".into());
        }
        let expected = self.basis.basis();
        if self.class_a.basis() != expected || self.class_b.basis() != expected {
            return bad(format!(
                "classes {}/{} are not prepared in the {} basis pair",
                self.class_a, self.class_b, self.basis
            ));
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        self.coincidences / self.pairs_emitted
    }

    pub fn error_rate(&self) -> Option<f64> {
        (self.coincidences > 0.0).then(|| self.error_coincidences / self.coincidences)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsDataset {
    pub channel_label: String,
    pub attenuation_db: f64,
    pub records: Vec<CountsRecord>,
}

impl CountsDataset {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            r.validate()?;
            let dup = self.records[..i]
                .iter()
                .any(|o| o.basis == r.basis && o.class_a == r.class_a && o.class_b == r.class_b && o.bell == r.bell);
            if dup {
                return Err(Error::InvalidRecord { record: r.id(), reason: "duplicate record".into() });
            }
        }
        Ok(())
    }

    pub fn bell_groups(&self) -> Vec<BellGroup> {
        let mut groups: Vec<BellGroup> = self.records.iter().map(|r| r.bell).collect();
        groups.sort();
        groups.dedup();
        groups
    }

    pub fn find(
        &self,
        basis: BasisPair,
        a: IntensityClass,
        b: IntensityClass,
        bell: BellGroup,
    ) -> Option<&CountsRecord> {
        self.records.iter().find(|r| r.basis == basis && r.class_a == a && r.class_b == b && r.bell == bell)
    }

    /// Check that a Bell group holds the ZZ record and all nine XX pairs.
    pub fn require_complete(&self, bell: BellGroup) -> Result<()> {
        if self.find(BasisPair::ZZ, IntensityClass::Signal, IntensityClass::Signal, bell).is_none() {
            return Err(Error::IncompleteData(format!("missing ZZ s/s {bell} record")));
        }
        for a in IntensityClass::DECOYS {
            for b in IntensityClass::DECOYS {
                if self.find(BasisPair::XX, a, b, bell).is_none() {
                    return Err(Error::IncompleteData(format!("missing XX {a}/{b} {bell} record")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub class_a: IntensityClass,
    pub class_b: IntensityClass,
    pub flux_a: f64,
    pub flux_b: f64,
    pub coincidences: f64,
    pub error_coincidences: f64,
    pub pairs_emitted: f64,
    pub gain: f64,
    /// Absent when no coincidences were recorded.
    pub error_rate: Option<f64>,
    pub loosening: Loosening,
}

impl GainEntry {
    fn from_record(r: &CountsRecord) -> Self {
        Self {
            class_a: r.class_a,
            class_b: r.class_b,
            flux_a: r.flux_a,
            flux_b: r.flux_b,
            coincidences: r.coincidences,
            error_coincidences: r.error_coincidences,
            pairs_emitted: r.pairs_emitted,
            gain: r.gain(),
            error_rate: r.error_rate(),
            loosening: Loosening::NONE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsTable {
    pub bell: BellGroup,
    pub zz: Option<GainEntry>,
    pub xx: Vec<GainEntry>,
    pub n_sigmas: f64,
}

impl GainsTable {
    pub fn x_entry(&self, a: IntensityClass, b: IntensityClass) -> Result<&GainEntry> {
        self.xx
            .iter()
            .find(|e| e.class_a == a && e.class_b == b)
            .ok_or_else(|| Error::IncompleteData(format!("missing XX {a}/{b} pair in {} gains", self.bell)))
    }

    pub fn x_entries_mut(&mut self) -> impl Iterator<Item = &mut GainEntry> {
        self.xx.iter_mut()
    }
}

/// Divide coincidences by emitted pairs for one Bell group. `Merged` sums the
/// singlet and triplet tallies first unless the dataset is already merged.
pub fn gains_from_counts(data: &CountsDataset, bell: BellGroup) -> Result<GainsTable> {
    data.validate()?;
    let merged;
    let source = if bell == BellGroup::Merged && !data.records.iter().any(|r| r.bell == BellGroup::Merged) {
        merged = merge_bell(data)?;
        &merged
    } else {
        data
    };
    let mut table = GainsTable { bell, zz: None, xx: Vec::new(), n_sigmas: 0.0 };
    for r in source.records.iter().filter(|r| r.bell == bell) {
        let entry = GainEntry::from_record(r);
        match r.basis {
            BasisPair::ZZ => table.zz = Some(entry),
            BasisPair::XX => table.xx.push(entry),
        }
    }
    if table.zz.is_none() && table.xx.is_empty() {
        return Err(Error::IncompleteData(format!("no {bell} records")));
    }
    Ok(table)
}

/// `1 - [Γ(1+K, μi)/K!]·[Γ(1+K, μj)/K!]`: the Poisson mass above photon
/// number `K` in either pulse.
pub fn truncation_remainder(k: usize, mu_i: f64, mu_j: f64) -> Result<f64> {
    if k < 1 {
        return Err(domain("truncation order must be at least 1"));
    }
    if !(mu_i >= 0.0 && mu_j >= 0.0) {
        return Err(domain("fluxes must be non-negative"));
    }
    let tail = |mu: f64| -> f64 {
        // upper tail sum_{l > K} e^-mu mu^l / l!, summed directly to avoid cancellation
        let mut term = (-mu).exp() * crate::protocol::photon_weight(mu, k as u32 + 1);
        let mut sum = 0.0;
        let mut l = k + 1;
        while term > 0.0 && term > sum * 1e-18 {
            sum += term;
            l += 1;
            term *= mu / l as f64;
            if l > k + 400 {
                break;
            }
        }
        sum.min(1.0)
    };
    let (ti, tj) = (tail(mu_i), tail(mu_j));
    Ok(ti + tj - ti * tj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldBounds {
    pub y11_lower: f64,
    /// `None` when the yield bound vanishes and the error bound is undefined.
    pub e11_upper: Option<f64>,
    pub k: usize,
    pub finite_size: bool,
    /// `constraint_count · ε` of the applied policy in finite-size mode.
    pub failure_budget: Option<f64>,
    /// Sigma count actually used to loosen the constraints.
    pub n_sigmas_applied: f64,
    /// Smallest sigma count at which the yield constraints are jointly feasible.
    pub consistency_sigmas: f64,
    pub active_constraints: Vec<String>,
    pub dropped_constraints: Vec<String>,
}

/// Solution of one decoy linear program.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSolution {
    pub value: f64,
    pub active: Vec<String>,
    pub dropped: Vec<String>,
}

fn solve_set(set: &ConstraintSet, objective: usize, maximize: bool, stage: &'static str) -> Result<BoundSolution> {
    let mut lp = set.to_program(if maximize { lp::Direction::Maximize } else { lp::Direction::Minimize });
    lp.objective[objective] = 1.0;
    let sol = lp.solve();
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp { stage, status: sol.status });
    }
    Ok(BoundSolution {
        value: sol.value.clamp(0.0, 1.0),
        active: set.active_labels(&sol.x, 1e-7),
        dropped: set.dropped.clone(),
    })
}

/// Minimize `y^{1,1}` over the yield constraints.
pub fn bound_single_photon_yield(
    gains: &GainsTable,
    k: usize,
    fluct: Option<&FluctuationPolicy>,
) -> Result<BoundSolution> {
    let set = build_yield_constraints(gains, k, fluct)?;
    solve_set(&set, set.index(1, 1), false, "single-photon yield")
}

/// Maximize the single-photon error rate `e` jointly with the yield constraints.
pub fn bound_single_photon_error(
    gains: &GainsTable,
    y11_lower: f64,
    k: usize,
    fluct: Option<&FluctuationPolicy>,
) -> Result<BoundSolution> {
    if !(y11_lower > 0.0) {
        return Err(Error::ZeroYieldBound);
    }
    let mut set = build_yield_constraints(gains, k, fluct)?;
    build_error_constraints(&mut set, gains, y11_lower, fluct)?;
    let e = set.error_index().expect("error variable present");
    solve_set(&set, e, true, "single-photon error rate")
}

/// Both bounds. With no policy (or a policy looser than the data needs) the
/// constraints are relaxed to the smallest sigma count that makes them
/// jointly feasible; self-consistent data is left untouched.
pub fn estimate_bounds(gains: &GainsTable, k: usize, fluct: Option<&FluctuationPolicy>) -> Result<YieldBounds> {
    let requested = fluct.map_or(0.0, |p| p.n_sigmas);
    let n_star = consistency_sigmas(gains, k)?;
    let n_eff = if n_star > requested { n_star * (1.0 + 1e-6) + 1e-9 } else { requested };
    if n_eff > requested {
        log::info!("{} gains need {n_star:.4} sigmas to be mutually consistent", gains.bell);
    }
    let policy = if n_eff > 0.0 {
        let mut p = FluctuationPolicy::new(n_eff)?;
        if let Some(f) = fluct {
            p.constraint_count = f.constraint_count;
        }
        Some(p)
    } else {
        None
    };
    let y = bound_single_photon_yield(gains, k, policy.as_ref())?;
    let mut active = y.active.clone();
    let e11_upper = if y.value > 0.0 {
        let e = bound_single_photon_error(gains, y.value, k, policy.as_ref())?;
        active.extend(e.active.into_iter().filter(|l| l.starts_with("error")));
        Some(e.value)
    } else {
        None
    };
    Ok(YieldBounds {
        y11_lower: y.value,
        e11_upper,
        k,
        finite_size: fluct.is_some(),
        failure_budget: fluct.map(|_| policy.as_ref().map_or(0.0, |p| p.total_budget())),
        n_sigmas_applied: n_eff,
        consistency_sigmas: n_star,
        active_constraints: active,
        dropped_constraints: y.dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::poisson_pmf;
    use crate::protocol::IntensityClass::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Direct finite-series evaluation of `1 - P(<=K; μi) P(<=K; μj)`.
    fn remainder_oracle(k: usize, mi: f64, mj: f64) -> f64 {
        let cdf = |mu: f64| (0..=k as u32).map(|l| poisson_pmf(l, mu).unwrap()).sum::<f64>();
        1.0 - cdf(mi) * cdf(mj)
    }

    #[test]
    fn remainder_examples() {
        assert_eq!(truncation_remainder(7, 0.0, 0.0).unwrap(), 0.0);
        let one_sided = truncation_remainder(3, 0.5, 0.0).unwrap();
        assert_relative_eq!(one_sided, remainder_oracle(3, 0.5, 0.0), max_relative = 1e-10);
        let r = truncation_remainder(7, 0.08, 0.08).unwrap();
        assert!(r > 0.0 && r < 1e-12, "{r}");
        assert!(truncation_remainder(0, 0.1, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn remainder_matches_series(k in 1usize..=10, mi in 0.0f64..=1.0, mj in 0.0f64..=1.0) {
            let r = truncation_remainder(k, mi, mj).unwrap();
            prop_assert!((r - remainder_oracle(k, mi, mj)).abs() < 1e-12);
        }
    }

    fn record(basis: BasisPair, a: IntensityClass, b: IntensityClass, bell: BellGroup, c: f64, e: f64) -> CountsRecord {
        CountsRecord {
            basis,
            class_a: a,
            class_b: b,
            bell,
            coincidences: c,
            error_coincidences: e,
            pairs_emitted: 1e6,
            flux_a: 0.01,
            flux_b: 0.01,
        }
    }

    #[test]
    fn gains_divide_by_pairs() {
        let data = CountsDataset {
            channel_label: "toy".into(),
            attenuation_db: 0.0,
            records: vec![
                record(BasisPair::XX, Decoy1, Decoy1, BellGroup::Singlet, 0.0, 0.0),
                record(BasisPair::XX, Decoy1, Decoy2, BellGroup::Singlet, 500.0, 100.0),
            ],
        };
        let g = gains_from_counts(&data, BellGroup::Singlet).unwrap();
        let uu = g.x_entry(Decoy1, Decoy1).unwrap();
        assert_eq!(uu.gain, 0.0);
        assert_eq!(uu.error_rate, None);
        let uv = g.x_entry(Decoy1, Decoy2).unwrap();
        assert_eq!(uv.gain, 5e-4);
        assert_eq!(uv.error_rate, Some(0.2));
        assert!(matches!(g.x_entry(Vacuum, Vacuum), Err(Error::IncompleteData(_))));
    }

    #[test]
    fn merged_gain_is_sum_of_states() {
        let data = CountsDataset {
            channel_label: "toy".into(),
            attenuation_db: 2.33,
            records: vec![
                record(BasisPair::XX, Decoy1, Decoy1, BellGroup::Singlet, 223041.0, 70971.0),
                record(BasisPair::XX, Decoy1, Decoy1, BellGroup::Triplet, 225777.0, 71233.0),
            ],
        };
        let s = gains_from_counts(&data, BellGroup::Singlet).unwrap();
        let t = gains_from_counts(&data, BellGroup::Triplet).unwrap();
        let m = gains_from_counts(&data, BellGroup::Merged).unwrap();
        let (gs, gt, gm) = (s.xx[0].gain, t.xx[0].gain, m.xx[0].gain);
        assert_eq!(m.xx[0].coincidences, 448818.0);
        assert_relative_eq!(gm, gs + gt, max_relative = 1e-15);
    }

    #[test]
    fn invalid_records_are_named() {
        let mut r = record(BasisPair::XX, Decoy1, Decoy1, BellGroup::Singlet, 10.0, 11.0);
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("XX u/u singlet"), "{err}");
        r.error_coincidences = 1.0;
        r.class_a = Signal;
        assert!(r.validate().is_err());
    }
}
