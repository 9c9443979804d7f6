use crate::decoy::CountsDataset;
use crate::error::{Error, Result};

use super::dataset::parse_dataset;

/// Published coincidence tables shipped with the crate, keyed by file stem suffix.
pub const BUNDLED: [(&str, &str); 7] = [
    ("2.33dB", include_str!("../../data/table2-4_2.33dB.csv")),
    ("2.33dB_finite", include_str!("../../data/table2-4_2.33dB_finite.csv")),
    ("6.15dB", include_str!("../../data/table2-4_6.15dB.csv")),
    ("9.82dB", include_str!("../../data/table2-4_9.82dB.csv")),
    ("fibre_50km", include_str!("../../data/table2-4_fibre_50km.csv")),
    ("15.97dB", include_str!("../../data/table2-4_15.97dB.csv")),
    ("20.98dB", include_str!("../../data/table2-4_20.98dB.csv")),
];

/// The attenuation-sweep datasets in order of increasing loss.
pub const ASYMPTOTIC_SWEEP: [&str; 5] = ["2.33dB", "6.15dB", "9.82dB", "15.97dB", "20.98dB"];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn load_bundled(name: &str) -> Result<CountsDataset> {
    let name = name.strip_prefix("table2-4_").unwrap_or(name).trim_end_matches(".csv");
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no bundled dataset '{name}'")))?;
    parse_dataset(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::{BasisPair, BellGroup};
    use crate::protocol::IntensityClass::Signal;

    #[test]
    fn every_bundled_dataset_is_complete() {
        for name in bundled_names() {
            let d = load_bundled(name).unwrap();
            assert_eq!(d.records.len(), 20, "{name}");
            d.require_complete(BellGroup::Singlet).unwrap();
            d.require_complete(BellGroup::Triplet).unwrap();
        }
    }

    #[test]
    fn zz_counts_match_table() {
        let d = load_bundled("table2-4_2.33dB.csv").unwrap();
        let zz = |b| d.find(BasisPair::ZZ, Signal, Signal, b).unwrap().coincidences;
        assert_eq!(zz(BellGroup::Singlet), 288399.0);
        assert_eq!(zz(BellGroup::Triplet), 287902.0);
        assert_eq!(d.records.iter().filter(|r| r.basis == BasisPair::XX).count(), 18);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(load_bundled("1.00dB").is_err());
    }
}
