//! Browser bindings: visibility contour, simulated rate curve, phase histogram.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use mdiqkd::keyrate::{distill, DistillOptions};
use mdiqkd::optics::{
    intensity_histogram, linspace, mean_visibility, sample_phase_intensities, visibility_grid, JitterModel,
    PulseInterferenceModel,
};
use mdiqkd::protocol::{ClassFluxes, ProtocolConfig};
use mdiqkd::simulator::{CampaignLength, ChannelConfig, DetectorModel, SimulationMode, Simulator};

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Mean visibility for one jitter/bandwidth point.
pub fn visibility_point(jitter_ps: f64, bandwidth_ghz: f64, fwhm_ps: f64) -> mdiqkd::Result<f64> {
    let model = PulseInterferenceModel::new(fwhm_ps, bandwidth_ghz, 0.0)?;
    Ok(mean_visibility(&JitterModel::new(jitter_ps)?, &model))
}

/// Row-major grid (bandwidth rows, jitter columns); NaN below the transform limit.
pub fn visibility_contour(
    jitter_max_ps: f64,
    bandwidth_min_ghz: f64,
    bandwidth_max_ghz: f64,
    steps: usize,
    fwhm_ps: f64,
) -> mdiqkd::Result<Vec<f64>> {
    let jitters = linspace(0.0, jitter_max_ps, steps);
    let bws = linspace(bandwidth_min_ghz, bandwidth_max_ghz, steps);
    let grid = visibility_grid(&jitters, &bws, fwhm_ps)?;
    Ok(grid.iter().map(|p| p.visibility.unwrap_or(f64::NAN)).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct CurveSettings {
    pub visibility: f64,
    pub efficiency: f64,
    pub dark_prob: f64,
    pub afterpulse_prob: f64,
    pub signal_flux: f64,
    pub max_db: f64,
    pub points: usize,
}

/// Pairs `(attenuation_db, bits_per_s)` from expected-mode campaigns, distilled asymptotically.
pub fn rate_curve(s: &CurveSettings) -> mdiqkd::Result<Vec<(f64, f64)>> {
    let overlap = Simulator::overlap_from_visibility(s.visibility)?;
    let defaults = ClassFluxes::default();
    let fluxes = ClassFluxes::new(s.signal_flux, defaults.decoy1, defaults.decoy2, defaults.vacuum)?;
    let det = DetectorModel {
        efficiency: s.efficiency,
        dark_prob_per_gate: s.dark_prob,
        afterpulse_prob: s.afterpulse_prob,
        temperature_label: None,
    };
    linspace(0.0, s.max_db, s.points.max(2))
        .into_iter()
        .map(|db| {
            let sim = Simulator::new(ProtocolConfig::symmetric(fluxes), ChannelConfig::from_total(db)?, det, overlap)?;
            let data = sim.run_campaign(CampaignLength::DurationS(100.0), 0, SimulationMode::Expected)?;
            let rate = distill(&data, &DistillOptions::default()).map_or(0.0, |r| r.rate_total);
            Ok((db, rate))
        })
        .collect()
}

/// Density histogram of `I = (1 + cos φ)/2` for uniformly random phases.
pub fn phase_histogram(samples: usize, bins: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    intensity_histogram(&sample_phase_intensities(samples, &mut rng), bins)
}

#[wasm_bindgen(js_name = meanVisibility)]
pub fn mean_visibility_js(jitter_ps: f64, bandwidth_ghz: f64, fwhm_ps: f64) -> Result<f64, JsError> {
    visibility_point(jitter_ps, bandwidth_ghz, fwhm_ps).map_err(js)
}

#[wasm_bindgen(js_name = visibilityContour)]
pub fn visibility_contour_js(
    jitter_max_ps: f64,
    bandwidth_min_ghz: f64,
    bandwidth_max_ghz: f64,
    steps: usize,
    fwhm_ps: f64,
) -> Result<Vec<f64>, JsError> {
    visibility_contour(jitter_max_ps, bandwidth_min_ghz, bandwidth_max_ghz, steps, fwhm_ps).map_err(js)
}

/// Flattened `[db0, rate0, db1, rate1, ...]`.
#[wasm_bindgen(js_name = rateCurve)]
#[allow(clippy::too_many_arguments)]
pub fn rate_curve_js(
    visibility: f64,
    efficiency: f64,
    dark_prob: f64,
    afterpulse_prob: f64,
    signal_flux: f64,
    max_db: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    let s = CurveSettings { visibility, efficiency, dark_prob, afterpulse_prob, signal_flux, max_db, points };
    Ok(rate_curve(&s).map_err(js)?.into_iter().flat_map(|(d, r)| [d, r]).collect())
}

#[wasm_bindgen(js_name = phaseHistogram)]
pub fn phase_histogram_js(samples: usize, bins: usize, seed: u64) -> Vec<f64> {
    phase_histogram(samples, bins, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_layout() {
        let g = visibility_contour(20.0, 5.0, 80.0, 6, 35.0).unwrap();
        assert_eq!(g.len(), 36);
        assert!(g[0].is_nan());
        assert!((g[5 * 6] - 0.5).abs() < 1e-12);
        assert!(g.iter().filter(|v| !v.is_nan()).all(|&v| v <= 0.5 + 1e-12));
    }

    #[test]
    fn curve_falls_with_loss() {
        let s = CurveSettings {
            visibility: 0.485,
            efficiency: 0.3,
            dark_prob: 6.5e-5,
            afterpulse_prob: 0.065,
            signal_flux: 0.7,
            max_db: 20.0,
            points: 5,
        };
        let c = rate_curve(&s).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn histogram_is_a_density() {
        let h = phase_histogram(20_000, 20, 1);
        assert_eq!(h.len(), 20);
        assert!((h.iter().sum::<f64>() / 20.0 - 1.0).abs() < 1e-9);
        assert!(h[0] > h[10] && h[19] > h[10]);
    }

    #[test]
    fn transform_limit_error() {
        assert!(visibility_point(4.4, 5.0, 35.0).is_err());
    }
}
