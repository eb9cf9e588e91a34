use electromech::dynamics::{kerr_shift_curve, ProbeScan};
use electromech::fitting::*;
use electromech::params::FluxCalibration;
use electromech::spectra::*;
use electromech::synth::*;
use electromech::TWO_PI;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn paper_resonator() -> ResonatorParams {
    ResonatorParams::new(TWO_PI * 5.90e9, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap()
}

fn calibration() -> FluxCalibration {
    FluxCalibration::new(TWO_PI * 8.31e9, 2.0, 0.1).unwrap()
}

/// Fixed unit-normal draws, scaled per noise level so that every level sees
/// the same realisations.
fn unit_noise(seed: u64, n: usize) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

fn with_noise(clean: &Spectrum, unit: &[Complex64], sigma: f64) -> Spectrum {
    let s11 = clean.s11().iter().zip(unit).map(|(z, u)| z + sigma * u).collect();
    Spectrum::new(clean.frequencies().to_vec(), s11).unwrap()
}

fn stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn bare_noisy_errors_match_monte_carlo() {
    let r = paper_resonator();
    let grid = linear_grid(5.86e9, 5.94e9, 2001).unwrap();
    let clean = evaluate_spectrum(&SystemModel::bare(r), &grid).unwrap();
    let mut kappa = Vec::new();
    let mut kappa_e = Vec::new();
    let mut reported = Vec::new();
    for rep in 0..200 {
        let noisy = with_noise(&clean, &unit_noise(1000 + rep, grid.len()), 0.01);
        let fit = fit_bare_resonator(&noisy, None).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnostics);
        assert!(fit.diagnostics.gradient_measure <= 1e-10);
        assert!((fit.value("kappa") / r.linewidth - 1.0).abs() < 0.01);
        assert!((fit.value("kappa_e") / r.external_linewidth - 1.0).abs() < 0.01);
        assert!((fit.value("omega_r") - r.frequency).abs() < 0.01 * r.linewidth);
        kappa.push(fit.value("kappa"));
        kappa_e.push(fit.value("kappa_e"));
        reported.push((fit.std_error("kappa"), fit.std_error("kappa_e")));
    }
    let (_, sd_k) = stats(&kappa);
    let (_, sd_ke) = stats(&kappa_e);
    let se_k = reported.iter().map(|p| p.0).sum::<f64>() / reported.len() as f64;
    let se_ke = reported.iter().map(|p| p.1).sum::<f64>() / reported.len() as f64;
    for (se, sd) in [(se_k, sd_k), (se_ke, sd_ke)] {
        let ratio = se / sd;
        assert!((1.0 / 1.5..1.5).contains(&ratio), "reported {se:e} vs scatter {sd:e}");
    }
}

#[test]
fn bare_bias_shrinks_with_noise() {
    let r = paper_resonator();
    let grid = linear_grid(5.86e9, 5.94e9, 1001).unwrap();
    let clean = evaluate_spectrum(&SystemModel::bare(r), &grid).unwrap();
    let draws: Vec<Vec<Complex64>> = (0..40).map(|k| unit_noise(77 + k, grid.len())).collect();
    let bias = |sigma: f64| -> f64 {
        let errs: Vec<f64> = draws
            .iter()
            .map(|u| fit_bare_resonator(&with_noise(&clean, u, sigma), None).unwrap().value("kappa_e") - r.external_linewidth)
            .collect();
        stats(&errs).0.abs()
    };
    let b = [bias(0.05), bias(0.01), bias(0.002)];
    assert!(b[0] > b[1] && b[1] > b[2], "{b:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bare_round_trip_from_perturbed_guess(
        f_ghz in 4.0f64..8.0,
        kappa_mhz in 1.0f64..30.0,
        eta in 0.1f64..0.9,
        perturb in prop::array::uniform3(-0.2f64..0.2),
    ) {
        let r = ResonatorParams::new(TWO_PI * f_ghz * 1e9, TWO_PI * kappa_mhz * 1e6, TWO_PI * eta * kappa_mhz * 1e6).unwrap();
        let half = 4.0 * kappa_mhz * 1e6;
        let grid = linear_grid(f_ghz * 1e9 - half, f_ghz * 1e9 + half, 401).unwrap();
        let s = evaluate_spectrum(&SystemModel::bare(r), &grid).unwrap();
        let guess = ResonatorParams::new(
            r.frequency + perturb[0] * r.linewidth,
            r.linewidth * (1.0 + perturb[1]),
            (r.external_linewidth * (1.0 + perturb[2])).min(0.999 * r.linewidth * (1.0 + perturb[1])),
        ).unwrap();
        let fit = fit_bare_resonator(&s, Some(guess)).unwrap();
        prop_assert!(fit.converged);
        prop_assert!((fit.value("omega_r") / r.frequency - 1.0).abs() < 1e-6);
        prop_assert!((fit.value("kappa") / r.linewidth - 1.0).abs() < 1e-6);
        prop_assert!((fit.value("kappa_e") / r.external_linewidth - 1.0).abs() < 1e-6);
        for i in 0..3 {
            prop_assert!(fit.parameters[i].std_error >= 0.0);
            prop_assert!((fit.covariance[i][(i + 1) % 3] - fit.covariance[(i + 1) % 3][i]).abs()
                <= 1e-12 * (fit.covariance[i][i] * fit.covariance[(i + 1) % 3][(i + 1) % 3]).sqrt());
        }
    }
}

#[test]
fn flux_calibration_tolerates_percent_noise() {
    let cal = FluxCalibration::new(TWO_PI * 8.31e9, 1.3, 0.2).unwrap();
    // Sweep through the flux sweet spot, from 6.5 GHz up to the top and
    // down to 5 GHz on the other side.
    let v_a = (-0.9 - cal.offset) / cal.gain;
    let v_b = (1.2 - cal.offset) / cal.gain;
    for seed in 0..20 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..61)
            .map(|i| {
                let v = v_a + (v_b - v_a) * i as f64 / 60.0;
                let z: f64 = rng.sample(StandardNormal);
                (v, cal.frequency_at(v) * (1.0 + 0.01 * z))
            })
            .collect();
        let fit = fit_flux_calibration(&pts).unwrap();
        let err = fit.value("omega_max") / cal.max_frequency - 1.0;
        assert!(err.abs() < 0.005, "seed {seed}: {err}");
    }
}

#[test]
fn flux_calibration_from_poor_guesses() {
    let cal = FluxCalibration::new(TWO_PI * 8.31e9, 1.3, 0.2).unwrap();
    let pts: Vec<(f64, f64)> = (0..41)
        .map(|i| {
            let v = -0.9 + 0.045 * i as f64;
            (v, cal.frequency_at(v))
        })
        .collect();
    // (1.2, 1.2, 1.2) on its own settles with the cusp in the wrong place.
    for k in 0..8 {
        let s = [0, 1, 2].map(|b| if k >> b & 1 == 1 { 1.2 } else { 0.8 });
        let guess = FluxCalibration::new(cal.max_frequency * s[0], cal.gain * s[1], cal.offset * s[2]).unwrap();
        let fit = fit_flux_calibration_with(&pts, Some(&guess)).unwrap();
        assert!(fit.converged);
        assert!((fit.value("omega_max") / cal.max_frequency - 1.0).abs() < 1e-9, "{s:?}");
        assert!((fit.value("G") / cal.gain - 1.0).abs() < 1e-9, "{s:?}");
        assert!((fit.value("phi_offset") / cal.offset - 1.0).abs() < 1e-9, "{s:?}");
    }
    let bad = FluxCalibration::new(cal.max_frequency, 0.0, 0.0).unwrap();
    assert!(fit_flux_calibration_with(&pts, Some(&bad)).is_err());
}

#[test]
fn kerr_calibration_from_oracle() {
    let model = SystemModel::new(paper_resonator(), vec![], TWO_PI * -2.0e6).unwrap();
    let r = &model.resonator;
    let per_power = 4.0 * r.external_linewidth / (r.linewidth * r.linewidth);
    // Powers giving up to 0.08 photons: |χ| n well below κ.
    let amps: Vec<f64> = (0..=8).map(|k| (0.01 * k as f64 / per_power).sqrt()).collect();
    let curve = kerr_shift_curve(&model, &ProbeScan::default(), &amps).unwrap();
    let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.power(), p.shift)).collect();
    let fit = fit_kerr_calibration(&pts, model.kerr).unwrap();
    // δω = χ n in mean field, read as χ n / 2: the estimate is twice n/P.
    let recovered = 0.5 * fit.value("photons_per_unit_power");
    assert!((recovered / per_power - 1.0).abs() < 0.05, "{recovered} vs {per_power}");
}

fn cluster_maps(noise: Option<NoiseSpec>) -> (SystemModel, Vec<AnticrossingMap>) {
    let resonator = ResonatorParams::new(TWO_PI * 6.2e9, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap();
    let stats = ClusterStatistics {
        seed: 5,
        ..Default::default()
    };
    let model = generate_mode_cluster(9, (TWO_PI * 5.9e9, TWO_PI * 6.5e9), &stats, resonator).unwrap();
    let layout = MapLayout {
        rows: 30,
        cols: 300,
        ..Default::default()
    };
    let maps = mode_maps(&model, &calibration(), &layout, noise)
        .unwrap()
        .into_iter()
        .map(|m| m.map)
        .collect();
    (model, maps)
}

#[test]
fn nine_mode_survey_recovers_every_mode() {
    let (model, maps) = cluster_maps(None);
    let survey = mode_survey(&maps, &calibration());
    assert!(survey.failures.is_empty(), "{:?}", survey.failures);
    assert_eq!(survey.rows.len(), 9);
    for row in &survey.rows {
        let m = model.modes()[row.index];
        for (got, want) in [(row.omega_m, m.frequency), (row.gamma, m.linewidth), (row.g, m.coupling)] {
            assert!((got / want - 1.0).abs() < 0.05, "mode {}: {got} vs {want}", row.index);
        }
        let q = m.frequency / m.linewidth;
        assert!((row.quality_factor / q - 1.0).abs() < 0.05);
        assert!((row.cooperativity / cooperativity(&m, &model.resonator) - 1.0).abs() < 0.1);
    }
}

#[test]
fn survey_isolates_a_corrupt_map() {
    let (_, mut maps) = cluster_maps(None);
    let bad = &maps[4];
    maps[4] = AnticrossingMap::new(
        bad.flux_axis().to_vec(),
        bad.units(),
        bad.frequency_axis().to_vec(),
        vec![Complex64::new(-1.0, 0.0); bad.s11().len()],
    )
    .unwrap();
    let survey = mode_survey(&maps, &calibration());
    assert_eq!(survey.rows.len(), 8);
    assert_eq!(survey.failures.len(), 1);
    assert_eq!(survey.failures[0].index, 4);
    assert!(mode_survey(&[], &calibration()).rows.is_empty());
}

#[test]
fn noisy_map_coupling_within_reported_uncertainty() {
    let cal = calibration();
    let wm = TWO_PI * 5.9754e9;
    let mode = MechanicalMode::new(wm, TWO_PI * 220e3, TWO_PI * 1.65e6).unwrap();
    let model = SystemModel::new(
        ResonatorParams::new(wm, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap(),
        vec![mode],
        0.0,
    )
    .unwrap();
    let layout = MapLayout::default();
    let map = &mode_maps(&model, &cal, &layout, Some(NoiseSpec::new(0.02, 9).unwrap())).unwrap()[0].map;
    let fit = fit_anticrossing(map, &cal, None).unwrap();
    assert!(fit.converged, "{:?}", fit.diagnostics);
    let (g, se) = (fit.value("g"), fit.std_error("g"));
    assert!((g - mode.coupling).abs() < 4.0 * se, "g = {g}, se = {se}");
    assert!(se < TWO_PI * 0.07e6, "{}", se / TWO_PI);
}

#[test]
fn magnitude_only_anticrossing_fit() {
    let cal = calibration();
    let wm = TWO_PI * 5.9754e9;
    let mode = MechanicalMode::new(wm, TWO_PI * 220e3, TWO_PI * 1.65e6).unwrap();
    let model = SystemModel::new(
        ResonatorParams::new(wm, TWO_PI * 11e6, TWO_PI * 6.3e6).unwrap(),
        vec![mode],
        0.0,
    )
    .unwrap();
    let layout = MapLayout {
        rows: 20,
        cols: 250,
        ..Default::default()
    };
    let map = &mode_maps(&model, &cal, &layout, None).unwrap()[0].map;
    let guess = AnticrossingGuess {
        omega_m: wm + 0.2 * TWO_PI * 220e3,
        gamma: 1.2 * mode.linewidth,
        g: 0.8 * mode.coupling,
        kappa: 1.2 * TWO_PI * 11e6,
        kappa_e: 0.8 * TWO_PI * 6.3e6,
    };
    let fit = fit_anticrossing_with(map, &cal, Some(guess), ResidualKind::Magnitude, &Default::default()).unwrap();
    assert!((fit.value("g") / mode.coupling - 1.0).abs() < 1e-6);
    assert!((fit.value("gamma") / mode.linewidth - 1.0).abs() < 1e-6);
}

#[test]
fn normalised_background_spectrum_fits_like_clean_data() {
    let r = paper_resonator();
    let scenario = SpectrumScenario {
        model: electromech::io::ModelFile::from_model(&SystemModel::bare(r)),
        grid: GridSpec {
            start_hz: 5.86e9,
            stop_hz: 5.94e9,
            points: 801,
        },
        noise: None,
        background: Some(Background {
            center_hz: 5.9e9,
            scale_hz: 4e7,
            coefficients: vec![[0.7, 0.2], [0.05, -0.1], [-0.02, 0.01]],
        }),
    };
    let raw = generate_spectrum(&scenario).unwrap();
    let reference = scenario.background.as_ref().unwrap().spectrum(raw.frequencies()).unwrap();
    let fit = fit_bare_resonator(&normalize_spectrum(&raw, &reference).unwrap(), None).unwrap();
    assert!((fit.value("kappa_e") / r.external_linewidth - 1.0).abs() < 1e-8);
}
