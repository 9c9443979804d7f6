//! Two-photon interference visibility of chirped Gaussian pulses with timing
//! jitter, and the intensity law of phase-randomized first-order interference.

use std::f64::consts::{LN_2, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// `2 sqrt(2 ln 2)`, the FWHM of a unit-sigma Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
/// Default pulse width, picoseconds.
pub const DEFAULT_FWHM_PS: f64 = 35.0;

const QUAD_TOL: f64 = 1e-8;
const QUAD_SPAN_SIGMAS: f64 = 8.0;

pub fn sigma_from_fwhm(fwhm_ps: f64) -> Result<f64> {
    if !(fwhm_ps > 0.0) || !fwhm_ps.is_finite() {
        return Err(domain(format!("pulse width {fwhm_ps} ps must be positive")));
    }
    Ok(fwhm_ps / FWHM_PER_SIGMA)
}

/// Transform-limited bandwidth (GHz) of a Gaussian pulse of the given FWHM (ps).
pub fn transform_limit_ghz(fwhm_ps: f64) -> Result<f64> {
    sigma_from_fwhm(fwhm_ps)?;
    Ok(2.0 * LN_2 / PI / fwhm_ps * 1e3)
}

/// Chirp β (rad/ps²) that broadens the spectrum to `bandwidth_ghz`, from
/// `Δν = Δν0 sqrt(1 + 16 β² σ_t⁴)`. The nonnegative root is returned.
pub fn chirp_from_bandwidth(bandwidth_ghz: f64, fwhm_ps: f64) -> Result<f64> {
    let sigma = sigma_from_fwhm(fwhm_ps)?;
    let limit = transform_limit_ghz(fwhm_ps)?;
    if !(bandwidth_ghz >= limit * (1.0 - 1e-12)) {
        return Err(Error::SubTransformLimit { bandwidth_ghz, limit_ghz: limit });
    }
    let r = (bandwidth_ghz / limit).max(1.0);
    Ok(((r * r - 1.0) / 16.0).sqrt() / (sigma * sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseInterferenceModel {
    pub fwhm_ps: f64,
    pub sigma_t_ps: f64,
    pub bandwidth_ghz: f64,
    pub bandwidth_tl_ghz: f64,
    pub chirp_beta: f64,
    /// Angular detuning between the two lasers, rad/ps.
    pub detuning_omega: f64,
}

impl PulseInterferenceModel {
    pub fn new(fwhm_ps: f64, bandwidth_ghz: f64, detuning_omega: f64) -> Result<Self> {
        let chirp_beta = chirp_from_bandwidth(bandwidth_ghz, fwhm_ps)?;
        if !detuning_omega.is_finite() {
            return Err(domain("detuning must be finite"));
        }
        Ok(Self {
            fwhm_ps,
            sigma_t_ps: sigma_from_fwhm(fwhm_ps)?,
            bandwidth_ghz,
            bandwidth_tl_ghz: transform_limit_ghz(fwhm_ps)?,
            chirp_beta,
            detuning_omega,
        })
    }

    pub fn transform_limited(fwhm_ps: f64) -> Result<Self> {
        Self::new(fwhm_ps, transform_limit_ghz(fwhm_ps)?, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterModel {
    pub sigma_tau_ps: f64,
}

impl JitterModel {
    pub fn new(sigma_tau_ps: f64) -> Result<Self> {
        if !(sigma_tau_ps >= 0.0) || !sigma_tau_ps.is_finite() {
            return Err(domain(format!("jitter {sigma_tau_ps} ps must be non-negative")));
        }
        Ok(Self { sigma_tau_ps })
    }
}

/// Visibility for a fixed arrival-time offset `tau_ps`:
/// `½ exp[-(τ² + 4(ω + 2τβ)² σ_t⁴) / (4σ_t²)]`.
pub fn visibility_given_jitter(tau_ps: f64, model: &PulseInterferenceModel) -> f64 {
    let s2 = model.sigma_t_ps * model.sigma_t_ps;
    let w = model.detuning_omega + 2.0 * tau_ps * model.chirp_beta;
    0.5 * (-(tau_ps * tau_ps + 4.0 * w * w * s2 * s2) / (4.0 * s2)).exp()
}

/// Visibility averaged over zero-mean normal jitter.
pub fn mean_visibility(jitter: &JitterModel, model: &PulseInterferenceModel) -> f64 {
    let st = jitter.sigma_tau_ps;
    if st == 0.0 {
        return visibility_given_jitter(0.0, model);
    }
    let norm = 1.0 / (st * TAU.sqrt());
    let f = |tau: f64| visibility_given_jitter(tau, model) * norm * (-0.5 * (tau / st).powi(2)).exp();
    let span = QUAD_SPAN_SIGMAS * st;
    adaptive_gauss_kronrod(&f, -span, span, QUAD_TOL, 50).min(0.5)
}

/// Closed form of [`mean_visibility`] at zero detuning.
pub fn mean_visibility_closed_form(jitter: &JitterModel, model: &PulseInterferenceModel) -> f64 {
    let r = model.bandwidth_ghz / model.bandwidth_tl_ghz;
    let s = jitter.sigma_tau_ps / model.sigma_t_ps;
    0.5 / (1.0 + 0.5 * s * s * r * r).sqrt()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let pair = f(c - x) + f(c + x);
        kronrod += KRONROD_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

pub(crate) fn adaptive_gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    adaptive_gauss_kronrod(f, a, m, 0.5 * tol, depth - 1) + adaptive_gauss_kronrod(f, m, b, 0.5 * tol, depth - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub jitter_ps: f64,
    pub bandwidth_ghz: f64,
    /// `None` below the transform limit.
    pub visibility: Option<f64>,
}

/// Mean visibility over a jitter × bandwidth grid at zero detuning.
pub fn visibility_grid(jitters_ps: &[f64], bandwidths_ghz: &[f64], fwhm_ps: f64) -> Result<Vec<GridPoint>> {
    let mut out = Vec::with_capacity(jitters_ps.len() * bandwidths_ghz.len());
    for &b in bandwidths_ghz {
        let model = match PulseInterferenceModel::new(fwhm_ps, b, 0.0) {
            Ok(m) => Some(m),
            Err(Error::SubTransformLimit { .. }) => None,
            Err(e) => return Err(e),
        };
        for &j in jitters_ps {
            let jitter = JitterModel::new(j)?;
            out.push(GridPoint {
                jitter_ps: j,
                bandwidth_ghz: b,
                visibility: model.map(|m| mean_visibility(&jitter, &m)),
            });
        }
    }
    Ok(out)
}

/// `n` evenly spaced values covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// First-order interference of two equal pulses with relative phase `phase`.
pub fn phase_randomized_intensity(phase: f64) -> f64 {
    0.5 * (1.0 + phase.cos())
}

/// Normalized intensities for `n` uniformly random relative phases.
pub fn sample_phase_intensities(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| phase_randomized_intensity(rng.gen::<f64>() * TAU)).collect()
}

/// CDF of the arcsine law on `[0, 1]`.
pub fn arcsine_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        2.0 / PI * x.sqrt().asin()
    }
}

/// Histogram of intensities in `bins` equal bins over `[0, 1]`, as densities.
pub fn intensity_histogram(samples: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    if bins == 0 || samples.is_empty() {
        return h;
    }
    for &s in samples {
        let i = ((s * bins as f64) as usize).min(bins - 1);
        h[i] += 1.0;
    }
    let scale = bins as f64 / samples.len() as f64;
    h.iter_mut().for_each(|v| *v *= scale);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_examples() {
        assert_relative_eq!(sigma_from_fwhm(35.0).unwrap(), 14.863_131_505_040_334, max_relative = 1e-12);
        assert_relative_eq!(sigma_from_fwhm(2.0 * (2.0 * LN_2).sqrt()).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(sigma_from_fwhm(70.0).unwrap(), 2.0 * sigma_from_fwhm(35.0).unwrap());
        assert!(sigma_from_fwhm(0.0).is_err());
        assert!(sigma_from_fwhm(-3.0).is_err());
    }

    #[test]
    fn chirp_inverts_broadening() {
        let limit = transform_limit_ghz(35.0).unwrap();
        assert_eq!(chirp_from_bandwidth(limit, 35.0).unwrap(), 0.0);
        let s = sigma_from_fwhm(35.0).unwrap();
        for bw in [15.0, 63.0] {
            let b = chirp_from_bandwidth(bw, 35.0).unwrap();
            let back = limit * (1.0 + 16.0 * b * b * s.powi(4)).sqrt();
            assert_relative_eq!(back, bw, max_relative = 1e-12);
        }
        assert!(matches!(chirp_from_bandwidth(5.0, 35.0), Err(Error::SubTransformLimit { .. })));
    }

    #[test]
    fn visibility_examples() {
        let tl = PulseInterferenceModel::transform_limited(35.0).unwrap();
        assert_eq!(visibility_given_jitter(0.0, &tl), 0.5);
        assert!(visibility_given_jitter(1e4, &tl) < 1e-300);
        let v = visibility_given_jitter(2.0 * tl.sigma_t_ps, &tl);
        assert_relative_eq!(v, 0.5 * (-1.0f64).exp(), max_relative = 1e-14);
        assert_eq!(mean_visibility(&JitterModel::new(0.0).unwrap(), &tl), 0.5);
    }

    #[test]
    fn seeded_operating_point() {
        let m = PulseInterferenceModel::new(35.0, 15.0, 0.0).unwrap();
        let v = mean_visibility(&JitterModel::new(4.4).unwrap(), &m);
        assert!((v - 0.485).abs() < 0.01, "{v}");
    }

    proptest! {
        #[test]
        fn quadrature_matches_closed_form(jit in 0.0f64..40.0, bw_factor in 1.0f64..6.0, fwhm in 10.0f64..80.0) {
            let bw = transform_limit_ghz(fwhm).unwrap() * bw_factor;
            let m = PulseInterferenceModel::new(fwhm, bw, 0.0).unwrap();
            let j = JitterModel::new(jit).unwrap();
            prop_assert!((mean_visibility(&j, &m) - mean_visibility_closed_form(&j, &m)).abs() < 1e-6);
        }

        #[test]
        fn visibility_is_bounded(tau in -200.0f64..200.0, bw in 12.7f64..100.0, omega in -0.5f64..0.5) {
            let m = PulseInterferenceModel::new(35.0, bw, omega).unwrap();
            let v = visibility_given_jitter(tau, &m);
            prop_assert!((0.0..=0.5).contains(&v));
            if tau != 0.0 || omega != 0.0 {
                prop_assert!(v < 0.5);
            }
        }
    }

    #[test]
    fn grid_is_monotone() {
        let jit = linspace(0.0, 20.0, 20);
        let bws = linspace(13.0, 80.0, 20);
        let grid = visibility_grid(&jit, &bws, 35.0).unwrap();
        let at = |i: usize, j: usize| grid[i * 20 + j].visibility.unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let v = at(i, j);
                assert!(v <= 0.5 + 1e-9);
                if j > 0 {
                    assert!(v <= at(i, j - 1) + 1e-12);
                }
                if i > 0 {
                    assert!(v <= at(i - 1, j) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn grid_marks_sub_transform_bandwidths() {
        let grid = visibility_grid(&[1.0], &[5.0, 20.0], 35.0).unwrap();
        assert_eq!(grid[0].visibility, None);
        assert!(grid[1].visibility.is_some());
    }

    #[test]
    fn phase_law() {
        assert_eq!(phase_randomized_intensity(0.0), 1.0);
        assert!(phase_randomized_intensity(PI).abs() < 1e-16);
        assert_relative_eq!(arcsine_cdf(0.5), 0.5, max_relative = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_phase_intensities(10_000, &mut rng);
        let h = intensity_histogram(&s, 10);
        assert!(h[0] > h[4] && h[9] > h[5]);
        assert_relative_eq!(h.iter().sum::<f64>() / 10.0, 1.0, max_relative = 1e-12);
    }
}
