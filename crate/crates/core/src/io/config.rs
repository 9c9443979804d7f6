use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyrate::DistillOptions;
use crate::optics::{mean_visibility, JitterModel, PulseInterferenceModel};
use crate::protocol::ProtocolConfig;
use crate::simulator::{
    detector_preset, CampaignLength, ChannelConfig, DetectorModel, SimulationMode, Simulator, TemperatureLabel,
};

/// A preset by name, optionally with individual fields overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub preset: Option<TemperatureLabel>,
    pub efficiency: Option<f64>,
    pub dark_prob_per_gate: Option<f64>,
    pub afterpulse_prob: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            preset: Some(TemperatureLabel::Room20C),
            efficiency: None,
            dark_prob_per_gate: None,
            afterpulse_prob: None,
        }
    }
}

impl DetectorConfig {
    pub fn resolve(&self) -> Result<DetectorModel> {
        let base = match self.preset {
            Some(label) => detector_preset(label),
            None => DetectorModel {
                efficiency: self
                    .efficiency
                    .ok_or_else(|| Error::Config("detector needs a preset or an efficiency".into()))?,
                dark_prob_per_gate: 0.0,
                afterpulse_prob: 0.0,
                temperature_label: None,
            },
        };
        let model = DetectorModel {
            efficiency: self.efficiency.unwrap_or(base.efficiency),
            dark_prob_per_gate: self.dark_prob_per_gate.unwrap_or(base.dark_prob_per_gate),
            afterpulse_prob: self.afterpulse_prob.unwrap_or(base.afterpulse_prob),
            temperature_label: base.temperature_label,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Either a total loss split equally, or explicit per-arm losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Total {
        total_db: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Arms(ChannelConfig),
}

impl ChannelSpec {
    pub fn resolve(&self) -> Result<ChannelConfig> {
        match self {
            ChannelSpec::Total { total_db, label } => {
                let mut c = ChannelConfig::from_total(*total_db)?;
                if let Some(l) = label {
                    c.label = l.clone();
                }
                Ok(c)
            }
            ChannelSpec::Arms(c) => {
                c.validate()?;
                Ok(c.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OverlapSource {
    Overlap(f64),
    Visibility(f64),
    Pulse {
        jitter_ps: f64,
        bandwidth_ghz: f64,
        #[serde(default = "default_fwhm")]
        fwhm_ps: f64,
        #[serde(default)]
        detuning: f64,
    },
}

fn default_fwhm() -> f64 {
    35.0
}

impl Default for OverlapSource {
    fn default() -> Self {
        OverlapSource::Pulse { jitter_ps: 4.4, bandwidth_ghz: 15.0, fwhm_ps: 35.0, detuning: 0.0 }
    }
}

impl OverlapSource {
    pub fn resolve(&self) -> Result<f64> {
        match *self {
            OverlapSource::Overlap(m) => {
                if !(0.0..=1.0).contains(&m) {
                    return Err(Error::Config(format!("overlap {m} outside [0, 1]")));
                }
                Ok(m)
            }
            OverlapSource::Visibility(v) => Simulator::overlap_from_visibility(v),
            OverlapSource::Pulse { jitter_ps, bandwidth_ghz, fwhm_ps, detuning } => {
                let model = PulseInterferenceModel::new(fwhm_ps, bandwidth_ghz, detuning)?;
                let v = mean_visibility(&JitterModel::new(jitter_ps)?, &model);
                Simulator::overlap_from_visibility(v.clamp(0.0, 0.5))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub rounds: Option<u64>,
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: SimulationMode,
    #[serde(default)]
    pub overlap: OverlapSource,
}

fn default_mode() -> SimulationMode {
    SimulationMode::MonteCarlo
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { rounds: None, duration_s: Some(1.0), seed: 0, mode: default_mode(), overlap: OverlapSource::default() }
    }
}

impl SimulationConfig {
    pub fn length(&self) -> Result<CampaignLength> {
        match (self.rounds, self.duration_s) {
            (Some(n), None) => Ok(CampaignLength::Rounds(n)),
            (None, Some(t)) => Ok(CampaignLength::DurationS(t)),
            _ => Err(Error::Config("simulation needs exactly one of 'rounds' and 'duration_s'".into())),
        }
    }
}

/// A complete run description: source, detectors, channel, campaign and post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub distillation: Option<DistillSection>,
}

/// Post-processing settings; source parameters come from `protocol`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    #[serde(default)]
    pub merge_bell: bool,
    #[serde(default)]
    pub finite_size: Option<crate::finitesize::FluctuationPolicy>,
    #[serde(default)]
    pub truncation: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.detector.resolve()?;
        self.channel.resolve()?;
        self.simulation.length()?;
        self.simulation.overlap.resolve()?;
        Ok(())
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(
            self.protocol.clone(),
            self.channel.resolve()?,
            self.detector.resolve()?,
            self.simulation.overlap.resolve()?,
        )
    }

    pub fn distill_options(&self) -> DistillOptions {
        let d = self.distillation.unwrap_or_default();
        let base = DistillOptions::default();
        DistillOptions {
            merge_bell: d.merge_bell,
            finite_size: d.finite_size,
            truncation: d.truncation.unwrap_or(base.truncation),
            p_signal: self.protocol.p_signal,
            f_ec: self.protocol.f_ec,
            clock_hz: self.protocol.clock_hz,
        }
    }
}
