use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::decoy::CountsDataset;
use crate::error::Result;
use crate::keyrate::{distill, DistillOptions};

/// Standard telecom fibre loss used for the distance axis.
pub const FIBRE_LOSS_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub label: String,
    pub attenuation_db: f64,
    pub distance_km: f64,
    pub rate_bits_s: f64,
}

impl RatePoint {
    pub fn new(label: impl Into<String>, attenuation_db: f64, rate_bits_s: f64) -> Self {
        Self { label: label.into(), attenuation_db, distance_km: equivalent_distance_km(attenuation_db), rate_bits_s }
    }
}

pub fn equivalent_distance_km(attenuation_db: f64) -> f64 {
    attenuation_db / FIBRE_LOSS_DB_PER_KM
}

/// Distill each dataset with its own options and collect one point per channel.
pub fn rate_curve<'a>(runs: impl IntoIterator<Item = (&'a CountsDataset, DistillOptions)>) -> Result<Vec<RatePoint>> {
    runs.into_iter()
        .map(|(d, opts)| {
            let report = distill(d, &opts)?;
            Ok(RatePoint::new(d.channel_label.clone(), d.attenuation_db, report.rate_total))
        })
        .collect()
}

fn trim(x: f64) -> String {
    let s = format!("{x:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn emit_rate_curve(points: &[RatePoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["label", "attenuation_db", "distance_km", "rate_bits_s"])?;
    for p in points {
        w.write_record([
            p.label.clone(),
            p.attenuation_db.to_string(),
            trim(p.distance_km),
            format!("{:.6e}", p.rate_bits_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn distance_axis() {
        assert_relative_eq!(equivalent_distance_km(2.33), 11.65, max_relative = 1e-14);
        assert_eq!(equivalent_distance_km(0.0), 0.0);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let pts = vec![RatePoint::new("a", 2.33, 1.2e6), RatePoint::new("b", 0.0, 0.0)];
        let mut buf = Vec::new();
        emit_rate_curve(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("a,2.33,11.65"));
        assert!(lines[2].starts_with("b,0,0,"));
        let mut buf = Vec::new();
        emit_rate_curve(&[RatePoint::new("c", 20.98, 1.0)], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("c,20.98,104.9,"));
    }
}
