//! Coincidence simulator: phase-randomized weak coherent pulses, lossy arms,
//! a 50:50 beam splitter with partial mode overlap, polarizing beam splitters
//! and four threshold detectors with dark counts and afterpulsing.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoy::{BasisPair, BellGroup, CountsDataset, CountsRecord};
use crate::error::{domain, Result};
use crate::protocol::{
    classify_coincidence, sift_and_flip, Basis, BellOutcome, ClickPattern, Detector, IntensityClass, Polarization,
    ProtocolConfig, COINCIDENCE_PAIRS,
};

/// Points of the uniform relative-phase grid used in expected mode.
pub const PHASE_GRID: usize = 64;
const BLOCK_ROUNDS: u64 = 1 << 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub attenuation_db_a: f64,
    pub attenuation_db_b: f64,
    #[serde(default)]
    pub label: String,
}

impl ChannelConfig {
    /// Split a total attenuation equally between the two arms.
    pub fn from_total(total_db: f64) -> Result<Self> {
        let c = Self {
            attenuation_db_a: total_db / 2.0,
            attenuation_db_b: total_db / 2.0,
            label: format!("{total_db} dB total"),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for a in [self.attenuation_db_a, self.attenuation_db_b] {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(domain(format!("attenuation {a} dB must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn total_db(&self) -> f64 {
        self.attenuation_db_a + self.attenuation_db_b
    }

    pub fn transmission_a(&self) -> f64 {
        10f64.powf(-self.attenuation_db_a / 10.0)
    }

    pub fn transmission_b(&self) -> f64 {
        10f64.powf(-self.attenuation_db_b / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemperatureLabel {
    #[serde(rename = "room_20C")]
    Room20C,
    #[serde(rename = "cold_0C")]
    Cold0C,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_prob_per_gate: f64,
    pub afterpulse_prob: f64,
    #[serde(default)]
    pub temperature_label: Option<TemperatureLabel>,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        for p in [self.efficiency, self.dark_prob_per_gate, self.afterpulse_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!("detector probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn noiseless(efficiency: f64) -> Self {
        Self { efficiency, dark_prob_per_gate: 0.0, afterpulse_prob: 0.0, temperature_label: None }
    }
}

pub fn detector_preset(label: TemperatureLabel) -> DetectorModel {
    let (dark, afterpulse) = match label {
        TemperatureLabel::Room20C => (6.50e-5, 0.065),
        TemperatureLabel::Cold0C => (2.64e-5, 0.086),
    };
    DetectorModel {
        efficiency: 0.30,
        dark_prob_per_gate: dark,
        afterpulse_prob: afterpulse,
        temperature_label: Some(label),
    }
}

/// `1 - (1 - noise) e^{-η I}` for a detector whose per-gate noise is `noise`.
pub fn click_probability_with_noise(mean_photons: f64, efficiency: f64, noise: f64) -> f64 {
    1.0 - (1.0 - noise) * (-efficiency * mean_photons).exp()
}

/// Click probability with dark counts only.
pub fn click_probability(mean_photons: f64, det: &DetectorModel) -> f64 {
    click_probability_with_noise(mean_photons, det.efficiency, det.dark_prob_per_gate)
}

/// Mean photon numbers at (cH, cV, dH, dV) for fields of mean `na`, `nb`
/// after the channel, relative phase `phase` and mode overlap `overlap`.
pub fn detector_intensities(
    na: f64,
    pa: Polarization,
    nb: f64,
    pb: Polarization,
    overlap: f64,
    phase: f64,
) -> [f64; 4] {
    let (a, b) = (pa.hv_amplitudes(), pb.hv_amplitudes());
    let cross = overlap * (na * nb).sqrt() * phase.cos();
    let mut out = [0.0; 4];
    for p in 0..2 {
        let incoherent = na * a[p] * a[p] + nb * b[p] * b[p];
        let interference = 2.0 * cross * a[p] * b[p];
        out[p] = 0.5 * (incoherent + interference);
        out[2 + p] = 0.5 * (incoherent - interference);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    MonteCarlo,
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignLength {
    Rounds(u64),
    DurationS(f64),
}

/// One emitted pulse pair and what the relay announced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub class_a: IntensityClass,
    pub class_b: IntensityClass,
    pub pol_a: Polarization,
    pub pol_b: Polarization,
    pub clicks: ClickPattern,
    pub outcomes: Vec<BellOutcome>,
    /// Per outcome: `Some(true)` for a sifted error, `None` when not sifted.
    pub errors: Vec<Option<bool>>,
}

/// Coincidence tallies indexed by class-pair slot (s/s then the nine X pairs) and Bell state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tally {
    pub coincidences: [[f64; 2]; 10],
    pub errors: [[f64; 2]; 10],
    pub rounds: f64,
}

impl Tally {
    pub fn merge(&mut self, other: &Tally) {
        for s in 0..10 {
            for b in 0..2 {
                self.coincidences[s][b] += other.coincidences[s][b];
                self.errors[s][b] += other.errors[s][b];
            }
        }
        self.rounds += other.rounds;
    }

    fn scale(&mut self, f: f64) {
        for s in 0..10 {
            for b in 0..2 {
                self.coincidences[s][b] *= f;
                self.errors[s][b] *= f;
            }
        }
        self.rounds *= f;
    }
}

fn slot(a: IntensityClass, b: IntensityClass) -> Option<usize> {
    use IntensityClass::*;
    let x = |c| match c {
        Decoy1 => Some(0),
        Decoy2 => Some(1),
        Vacuum => Some(2),
        Signal => None,
    };
    match (a, b) {
        (Signal, Signal) => Some(0),
        _ => Some(1 + 3 * x(a)? + x(b)?),
    }
}

fn slot_classes(s: usize) -> (IntensityClass, IntensityClass) {
    if s == 0 {
        (IntensityClass::Signal, IntensityClass::Signal)
    } else {
        let d = IntensityClass::DECOYS;
        (d[(s - 1) / 3], d[(s - 1) % 3])
    }
}

fn bell_index(o: BellOutcome) -> Option<usize> {
    match o {
        BellOutcome::Singlet => Some(0),
        BellOutcome::Triplet => Some(1),
        BellOutcome::NoEvent => None,
    }
}

/// A setting combination: classes and encoded bits of both users.
#[derive(Debug, Clone, Copy)]
struct Setting {
    class_a: IntensityClass,
    class_b: IntensityClass,
    pol_a: Polarization,
    pol_b: Polarization,
    probability: f64,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub protocol: ProtocolConfig,
    pub channel: ChannelConfig,
    pub detector: DetectorModel,
    pub overlap: f64,
    settings: Vec<Setting>,
    /// Per setting: per-detector gate noise, dark counts plus afterpulses.
    noise: Vec<[f64; 4]>,
}

impl Simulator {
    pub fn new(
        protocol: ProtocolConfig,
        channel: ChannelConfig,
        detector: DetectorModel,
        overlap: f64,
    ) -> Result<Self> {
        protocol.validate()?;
        channel.validate()?;
        detector.validate()?;
        if !(0.0..=1.0).contains(&overlap) {
            return Err(domain(format!("mode overlap {overlap} outside [0, 1]")));
        }
        let mut settings = Vec::with_capacity(64);
        for ca in IntensityClass::ALL {
            for cb in IntensityClass::ALL {
                for bit_a in [false, true] {
                    for bit_b in [false, true] {
                        settings.push(Setting {
                            class_a: ca,
                            class_b: cb,
                            pol_a: Polarization::from_bit(ca.basis(), bit_a),
                            pol_b: Polarization::from_bit(cb.basis(), bit_b),
                            probability: protocol.class_probability(ca) * protocol.class_probability(cb) * 0.25,
                        });
                    }
                }
            }
        }
        let mut sim = Self { protocol, channel, detector, overlap, settings, noise: Vec::new() };
        let dark = [detector.dark_prob_per_gate; 4];
        sim.noise = (0..sim.settings.len())
            .map(|i| {
                let mean = sim.mean_clicks(i, &dark);
                let mut n = [0.0; 4];
                for k in 0..4 {
                    n[k] = detector.dark_prob_per_gate + detector.afterpulse_prob * mean[k];
                }
                n
            })
            .collect();
        Ok(sim)
    }

    /// Overlap `sqrt(2V)` reproducing a two-photon visibility `V` in `[0, ½]`.
    pub fn overlap_from_visibility(visibility: f64) -> Result<f64> {
        if !(0.0..=0.5).contains(&visibility) {
            return Err(domain(format!("visibility {visibility} outside [0, 0.5]")));
        }
        Ok((2.0 * visibility).sqrt())
    }

    fn photons_at_relay(&self, s: &Setting) -> (f64, f64) {
        (
            self.protocol.alice.get(s.class_a) * self.channel.transmission_a(),
            self.protocol.bob.get(s.class_b) * self.channel.transmission_b(),
        )
    }

    fn clicks_at(&self, s: &Setting, noise: &[f64; 4], phase: f64) -> [f64; 4] {
        let (na, nb) = self.photons_at_relay(s);
        let i = detector_intensities(na, s.pol_a, nb, s.pol_b, self.overlap, phase);
        let mut p = [0.0; 4];
        for k in 0..4 {
            p[k] = click_probability_with_noise(i[k], self.detector.efficiency, noise[k]);
        }
        p
    }

    fn mean_clicks(&self, setting: usize, noise: &[f64; 4]) -> [f64; 4] {
        let s = &self.settings[setting];
        let mut mean = [0.0; 4];
        for g in 0..PHASE_GRID {
            let p = self.clicks_at(s, noise, TAU * g as f64 / PHASE_GRID as f64);
            for k in 0..4 {
                mean[k] += p[k] / PHASE_GRID as f64;
            }
        }
        mean
    }

    fn setting_index(&self, ca: IntensityClass, cb: IntensityClass, bit_a: bool, bit_b: bool) -> usize {
        let c = |x: IntensityClass| IntensityClass::ALL.iter().position(|&y| y == x).unwrap();
        ((c(ca) * 4 + c(cb)) * 2 + usize::from(bit_a)) * 2 + usize::from(bit_b)
    }

    fn sample_class(&self, rng: &mut impl Rng) -> IntensityClass {
        let u: f64 = rng.gen();
        let ps = self.protocol.p_signal;
        if u < ps {
            IntensityClass::Signal
        } else {
            let k = (((u - ps) / (1.0 - ps)) * 3.0) as usize;
            IntensityClass::DECOYS[k.min(2)]
        }
    }

    pub fn simulate_round(&self, rng: &mut impl Rng) -> RoundOutcome {
        let class_a = self.sample_class(rng);
        let class_b = self.sample_class(rng);
        let bit_a: bool = rng.gen();
        let bit_b: bool = rng.gen();
        let theta_a: f64 = rng.gen::<f64>() * TAU;
        let theta_b: f64 = rng.gen::<f64>() * TAU;
        let idx = self.setting_index(class_a, class_b, bit_a, bit_b);
        let s = &self.settings[idx];
        let p = self.clicks_at(s, &self.noise[idx], theta_a - theta_b);
        let mut clicks = ClickPattern::empty();
        for d in Detector::ALL {
            if rng.gen::<f64>() < p[d.index()] {
                clicks.insert(d);
            }
        }
        let outcomes = classify_coincidence(clicks);
        let errors = outcomes
            .iter()
            .map(|&o| sift_and_flip(class_a.basis(), class_b.basis(), o, bit_b).map(|b| b != bit_a))
            .collect();
        RoundOutcome { class_a, class_b, pol_a: s.pol_a, pol_b: s.pol_b, clicks, outcomes, errors }
    }

    fn record_round(&self, r: &RoundOutcome, tally: &mut Tally) {
        tally.rounds += 1.0;
        let Some(sl) = slot(r.class_a, r.class_b) else { return };
        for (o, e) in r.outcomes.iter().zip(&r.errors) {
            if let (Some(b), Some(err)) = (bell_index(*o), e) {
                tally.coincidences[sl][b] += 1.0;
                if *err {
                    tally.errors[sl][b] += 1.0;
                }
            }
        }
    }

    fn run_block(&self, seed: u64, block: u64, rounds: u64) -> Tally {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        let mut tally = Tally::default();
        for _ in 0..rounds {
            let r = self.simulate_round(&mut rng);
            self.record_round(&r, &mut tally);
        }
        tally
    }

    /// Expected tallies for a single round.
    pub fn expected_per_round(&self) -> Tally {
        let mut tally = Tally { rounds: 1.0, ..Tally::default() };
        for (i, s) in self.settings.iter().enumerate() {
            let Some(sl) = slot(s.class_a, s.class_b) else { continue };
            let mut pair = [0.0; 4];
            for g in 0..PHASE_GRID {
                let p = self.clicks_at(s, &self.noise[i], TAU * g as f64 / PHASE_GRID as f64);
                for (k, (d1, d2, _)) in COINCIDENCE_PAIRS.iter().enumerate() {
                    pair[k] += p[d1.index()] * p[d2.index()] / PHASE_GRID as f64;
                }
            }
            for (k, &(_, _, outcome)) in COINCIDENCE_PAIRS.iter().enumerate() {
                let b = bell_index(outcome).expect("coincidence pairs announce a Bell state");
                let w = s.probability * pair[k];
                tally.coincidences[sl][b] += w;
                let bob = sift_and_flip(s.class_a.basis(), s.class_b.basis(), outcome, s.pol_b.bit());
                if bob.is_some_and(|bit| bit != s.pol_a.bit()) {
                    tally.errors[sl][b] += w;
                }
            }
        }
        tally
    }

    pub fn rounds_for(&self, length: CampaignLength) -> Result<u64> {
        let rounds = match length {
            CampaignLength::Rounds(n) => n,
            CampaignLength::DurationS(t) => {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(domain(format!("campaign duration {t} s must be positive")));
                }
                (t * self.protocol.clock_hz).round() as u64
            }
        };
        if rounds == 0 {
            return Err(domain("campaign needs at least one round"));
        }
        Ok(rounds)
    }

    pub fn run_tally(&self, length: CampaignLength, seed: u64, mode: SimulationMode) -> Result<Tally> {
        let rounds = self.rounds_for(length)?;
        Ok(match mode {
            SimulationMode::Expected => {
                let mut t = self.expected_per_round();
                t.scale(rounds as f64);
                t
            }
            SimulationMode::MonteCarlo => self.monte_carlo(rounds, seed),
        })
    }

    #[cfg(not(target_arch = "wasm32"))]
    fn monte_carlo(&self, rounds: u64, seed: u64) -> Tally {
        let blocks = rounds.div_ceil(BLOCK_ROUNDS);
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(blocks as usize).max(1);
        let partials: Vec<Tally> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        let mut t = Tally::default();
                        for b in (w as u64..blocks).step_by(workers) {
                            let n = BLOCK_ROUNDS.min(rounds - b * BLOCK_ROUNDS);
                            t.merge(&self.run_block(seed, b, n));
                        }
                        t
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
        });
        let mut total = Tally::default();
        for p in &partials {
            total.merge(p);
        }
        total
    }

    #[cfg(target_arch = "wasm32")]
    fn monte_carlo(&self, rounds: u64, seed: u64) -> Tally {
        let mut total = Tally::default();
        for b in 0..rounds.div_ceil(BLOCK_ROUNDS) {
            total.merge(&self.run_block(seed, b, BLOCK_ROUNDS.min(rounds - b * BLOCK_ROUNDS)));
        }
        total
    }

    /// Run a campaign and report it in the dataset schema.
    pub fn run_campaign(&self, length: CampaignLength, seed: u64, mode: SimulationMode) -> Result<CountsDataset> {
        let tally = self.run_tally(length, seed, mode)?;
        Ok(self.to_dataset(&tally))
    }

    pub fn to_dataset(&self, tally: &Tally) -> CountsDataset {
        let mut records = Vec::with_capacity(20);
        for b in 0..2 {
            let bell = if b == 0 { BellGroup::Singlet } else { BellGroup::Triplet };
            for sl in 0..10 {
                let (ca, cb) = slot_classes(sl);
                records.push(CountsRecord {
                    basis: if ca.basis() == Basis::Z { BasisPair::ZZ } else { BasisPair::XX },
                    class_a: ca,
                    class_b: cb,
                    bell,
                    coincidences: tally.coincidences[sl][b],
                    error_coincidences: tally.errors[sl][b],
                    pairs_emitted: tally.rounds
                        * self.protocol.class_probability(ca)
                        * self.protocol.class_probability(cb),
                    flux_a: self.protocol.alice.get(ca),
                    flux_b: self.protocol.bob.get(cb),
                });
            }
        }
        let label = if self.channel.label.is_empty() {
            format!("simulated {} dB", self.channel.total_db())
        } else {
            self.channel.label.clone()
        };
        CountsDataset { channel_label: label, attenuation_db: self.channel.total_db(), records }
    }
}

/// Singlet and triplet shares of all announced coincidences.
pub fn bell_breakdown(data: &CountsDataset) -> (f64, f64) {
    let sum = |b| data.records.iter().filter(|r| r.bell == b).map(|r| r.coincidences).sum::<f64>();
    let (s, t) = (sum(BellGroup::Singlet), sum(BellGroup::Triplet));
    let total = s + t;
    if total > 0.0 {
        (s / total, t / total)
    } else {
        (0.0, 0.0)
    }
}
