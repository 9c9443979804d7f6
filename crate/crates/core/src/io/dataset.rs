use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoy::{BasisPair, BellGroup, CountsDataset, CountsRecord};
use crate::error::{Error, Result};
use crate::protocol::{IntensityClass, DEFAULT_CLOCK_HZ, DEFAULT_SIGNAL_PROBABILITY};

pub const HEADER: [&str; 11] = [
    "channel_label",
    "attenuation_db",
    "basis_pair",
    "class_a",
    "class_b",
    "bell",
    "coincidences",
    "error_rate_percent",
    "pairs_emitted",
    "flux_a",
    "flux_b",
];

/// Z-basis acquisition window per attenuation, seconds.
pub const ZZ_ACQUISITION_S: f64 = 0.08;
/// X-basis acquisition window per class combination, seconds.
pub const XX_ACQUISITION_S: f64 = 25.0;
/// Emitted X-basis pairs per second of a fixed-class acquisition: four
/// polarization combinations at the 1 GHz clock.
pub const XX_PAIRS_PER_S: f64 = 4e9;

/// Values used when a record leaves `pairs_emitted` blank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairsDefaults {
    pub zz: f64,
    pub xx: f64,
}

impl Default for PairsDefaults {
    fn default() -> Self {
        let p = DEFAULT_SIGNAL_PROBABILITY;
        Self { zz: ZZ_ACQUISITION_S * DEFAULT_CLOCK_HZ * p * p, xx: XX_ACQUISITION_S * XX_PAIRS_PER_S }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    channel_label: String,
    attenuation_db: f64,
    basis_pair: String,
    class_a: String,
    class_b: String,
    bell: String,
    coincidences: f64,
    error_rate_percent: f64,
    pairs_emitted: Option<f64>,
    flux_a: f64,
    flux_b: f64,
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse { line, reason: e.to_string() }
}

fn to_record(row: &Row, line: usize, defaults: &PairsDefaults) -> Result<CountsRecord> {
    let basis: BasisPair = row.basis_pair.parse().map_err(|e| parse_err(line, e))?;
    let class_a: IntensityClass = row.class_a.parse().map_err(|e| parse_err(line, e))?;
    let class_b: IntensityClass = row.class_b.parse().map_err(|e| parse_err(line, e))?;
    let bell: BellGroup = row.bell.parse().map_err(|e| parse_err(line, e))?;
    let id = format!("{basis} {class_a}/{class_b} {bell} (line {line})");
    if !(0.0..=100.0).contains(&row.error_rate_percent) {
        return Err(Error::InvalidRecord {
            record: id,
            reason: format!("error rate {}% outside [0, 100]", row.error_rate_percent),
        });
    }
    let c = row.coincidences;
    let raw = row.error_rate_percent * c / 100.0;
    let error_coincidences = if c.fract() == 0.0 { raw.round() } else { raw };
    let pairs_emitted = row.pairs_emitted.unwrap_or(match basis {
        BasisPair::ZZ => defaults.zz,
        BasisPair::XX => defaults.xx,
    });
    let record = CountsRecord {
        basis,
        class_a,
        class_b,
        bell,
        coincidences: c,
        error_coincidences,
        pairs_emitted,
        flux_a: row.flux_a,
        flux_b: row.flux_b,
    };
    record.validate().map_err(|e| match e {
        Error::InvalidRecord { reason, .. } => Error::InvalidRecord { record: id, reason },
        other => other,
    })?;
    Ok(record)
}

pub fn parse_dataset_with(reader: impl Read, defaults: &PairsDefaults) -> Result<CountsDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err(1, "empty dataset"));
    }
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(parse_err(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut records = Vec::new();
    let mut label: Option<(String, f64)> = None;
    for result in rdr.records() {
        let raw = result.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e))?;
        let line = raw.position().map_or(0, |p| p.line() as usize);
        let row: Row = raw.deserialize(Some(&headers)).map_err(|e| parse_err(line, e))?;
        let rec = to_record(&row, line, defaults)?;
        match &label {
            None => label = Some((row.channel_label.clone(), row.attenuation_db)),
            Some((l, a)) if *l != row.channel_label || *a != row.attenuation_db => {
                return Err(parse_err(line, "rows disagree on channel label or attenuation"));
            }
            Some(_) => {}
        }
        records.push(rec);
    }
    let Some((channel_label, attenuation_db)) = label else {
        return Err(parse_err(1, "dataset has no records"));
    };
    let data = CountsDataset { channel_label, attenuation_db, records };
    data.validate()?;
    Ok(data)
}

pub fn parse_dataset(reader: impl Read) -> Result<CountsDataset> {
    parse_dataset_with(reader, &PairsDefaults::default())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<CountsDataset> {
    parse_dataset(File::open(path)?)
}

pub fn write_dataset(data: &CountsDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &data.records {
        let rate = if r.coincidences > 0.0 { 100.0 * r.error_coincidences / r.coincidences } else { 0.0 };
        w.serialize(Row {
            channel_label: data.channel_label.clone(),
            attenuation_db: data.attenuation_db,
            basis_pair: r.basis.to_string(),
            class_a: r.class_a.to_string(),
            class_b: r.class_b.to_string(),
            bell: r.bell.to_string(),
            coincidences: r.coincidences,
            error_rate_percent: rate,
            pairs_emitted: Some(r.pairs_emitted),
            flux_a: r.flux_a,
            flux_b: r.flux_b,
        })?;
    }
    if data.records.is_empty() {
        w.write_record(HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(data: &CountsDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, File::create(path)?)
}
