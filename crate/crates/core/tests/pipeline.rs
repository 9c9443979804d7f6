use mdiqkd::decoy::{estimate_bounds, gains_from_counts, BellGroup};
use mdiqkd::finitesize::FluctuationPolicy;
use mdiqkd::io::{
    bundled_names, load_bundled, load_dataset, parse_dataset, save_dataset, write_dataset, ASYMPTOTIC_SWEEP,
};
use mdiqkd::keyrate::{distill, DistillOptions};
use mdiqkd::protocol::ProtocolConfig;
use mdiqkd::simulator::{detector_preset, CampaignLength, ChannelConfig, SimulationMode, Simulator, TemperatureLabel};

fn finite(n: f64, merge: bool) -> DistillOptions {
    DistillOptions {
        merge_bell: merge,
        finite_size: Some(FluctuationPolicy::new(n).unwrap()),
        ..DistillOptions::default()
    }
}

#[test]
fn every_bundled_dataset_round_trips_and_distills() {
    for name in bundled_names() {
        let d = load_bundled(name).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let again = parse_dataset(buf.as_slice()).unwrap();
        assert_eq!(again, d, "{name}");
        let mut buf2 = Vec::new();
        write_dataset(&again, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
        assert!(distill(&d, &DistillOptions::default()).is_ok(), "{name}");
    }
}

#[test]
fn simulator_output_loads_through_dataset_parser() {
    let sim = Simulator::new(
        ProtocolConfig::default(),
        ChannelConfig::from_total(6.15).unwrap(),
        detector_preset(TemperatureLabel::Cold0C),
        0.95,
    )
    .unwrap();
    let data = sim.run_campaign(CampaignLength::Rounds(3_000_000), 4, SimulationMode::MonteCarlo).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    save_dataset(&data, &path).unwrap();
    let loaded = load_dataset(&path).unwrap();
    assert_eq!(loaded.records.len(), 20);
    for (a, b) in loaded.records.iter().zip(&data.records) {
        assert_eq!(a.coincidences, b.coincidences);
        assert_eq!(a.error_coincidences, b.error_coincidences);
        assert_eq!(a.pairs_emitted, b.pairs_emitted);
    }
}

#[test]
fn finite_size_never_beats_asymptotic() {
    for name in ASYMPTOTIC_SWEEP {
        let d = load_bundled(name).unwrap();
        let asym = distill(&d, &DistillOptions { merge_bell: true, ..DistillOptions::default() }).unwrap().rate_total;
        for n in [3.0, 5.0, 7.0] {
            let r = distill(&d, &finite(n, true)).unwrap().rate_total;
            assert!(r <= asym * (1.0 + 1e-9), "{name} n={n}: {r} > {asym}");
        }
    }
}

#[test]
fn more_sigmas_cost_rate() {
    let d = load_bundled("2.33dB_finite").unwrap();
    let rates: Vec<f64> =
        [1.0, 3.0, 5.0, 7.0, 9.0].iter().map(|&n| distill(&d, &finite(n, true)).unwrap().rate_total).collect();
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
}

#[test]
fn merging_helps_in_the_finite_regime() {
    let d = load_bundled("2.33dB_finite").unwrap();
    let merged = distill(&d, &finite(7.0, true)).unwrap().rate_total;
    let split = distill(&d, &finite(7.0, false)).unwrap().rate_total;
    assert!(merged >= split, "merged {merged} < split {split}");
}

#[test]
fn bounds_are_stable_in_truncation_order() {
    let d = load_bundled("2.33dB").unwrap();
    let g = gains_from_counts(&d, BellGroup::Singlet).unwrap();
    let ys: Vec<f64> = (5..=9).map(|k| estimate_bounds(&g, k, None).unwrap().y11_lower).collect();
    let (lo, hi) = ys.iter().fold((f64::MAX, 0.0f64), |(l, h), &y| (l.min(y), h.max(y)));
    assert!(hi / lo - 1.0 < 0.02, "{ys:?}");
}

#[test]
fn simulated_rates_fall_with_loss() {
    let mut prev = f64::INFINITY;
    for db in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let sim = Simulator::new(
            ProtocolConfig::default(),
            ChannelConfig::from_total(db).unwrap(),
            detector_preset(TemperatureLabel::Room20C),
            0.98,
        )
        .unwrap();
        let d = sim.run_campaign(CampaignLength::DurationS(100.0), 0, SimulationMode::Expected).unwrap();
        let r = distill(&d, &DistillOptions::default()).unwrap().rate_total;
        assert!(r > 0.0 && r < prev, "{db} dB: {r}");
        prev = r;
    }
}
