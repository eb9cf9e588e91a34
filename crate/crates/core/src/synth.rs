//! Seeded synthetic datasets.
//!
//! Noise is additive circular complex Gaussian: real and imaginary parts each
//! get an independent `N(0, σ²)` draw. Random numbers come from ChaCha20
//! (`rand_chacha::ChaCha20Rng::seed_from_u64`). A dataset made of several
//! streams (the rows of a map, the points of a Kerr sweep) draws stream `k`
//! from a generator seeded with [`stream_seed`]`(seed, k)`, so the output does
//! not depend on how rows are scheduled across threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{kerr_shift_curve, KerrPoint, ProbeScan};
use crate::error::{Error, Result};
use crate::fitting::{tuned_frequencies, AnticrossingMap, FluxUnits};
use crate::io::{CalibrationFile, ModelFile};
use crate::params::FluxCalibration;
use crate::spectra::{evaluate_spectrum, linear_grid, MechanicalMode, ResonatorParams, Spectrum, SystemModel};
use crate::TWO_PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation per quadrature.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let n = Self { sigma, seed };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::param("sigma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser applied to `seed + φ·(stream + 1)`, with φ the 64-bit
/// golden-ratio constant.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(noise: &NoiseSpec, stream: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(stream_seed(noise.seed, stream))
}

fn add_noise(values: &mut [Complex64], sigma: f64, rng: &mut ChaCha20Rng) {
    for z in values {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(sigma * re, sigma * im);
    }
}

/// Evenly spaced probe grid in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "start_Hz")]
    pub start_hz: f64,
    #[serde(rename = "stop_Hz")]
    pub stop_hz: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        linear_grid(self.start_hz, self.stop_hz, self.points)
    }
}

/// Multiplicative background `Σ_k c_k x^k` with `x = (f − center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    #[serde(rename = "center_Hz")]
    pub center_hz: f64,
    #[serde(rename = "scale_Hz")]
    pub scale_hz: f64,
    /// `[re, im]` pairs, constant term first.
    pub coefficients: Vec<[f64; 2]>,
}

impl Background {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_hz.is_finite() && self.scale_hz > 0.0 && self.center_hz.is_finite()) {
            return Err(Error::param("background", "need finite center and positive scale"));
        }
        if self.coefficients.is_empty() || self.coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::param("background", "need at least one finite coefficient"));
        }
        Ok(())
    }

    pub fn factor(&self, f_hz: f64) -> Complex64 {
        let x = (f_hz - self.center_hz) / self.scale_hz;
        self.coefficients
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + Complex64::new(c[0], c[1]))
    }

    /// The background alone, as a reference spectrum.
    pub fn spectrum(&self, grid: &[f64]) -> Result<Spectrum> {
        Spectrum::new(grid.to_vec(), grid.iter().map(|&f| self.factor(f)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumScenario {
    pub model: ModelFile,
    pub grid: GridSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub background: Option<Background>,
}

/// Model spectrum × optional background + optional noise.
pub fn generate_spectrum(scenario: &SpectrumScenario) -> Result<Spectrum> {
    let model = scenario.model.to_model()?;
    let grid = scenario.grid.build()?;
    let spectrum = evaluate_spectrum(&model, &grid)?;
    let (freqs, mut s11) = spectrum.into_parts();
    if let Some(bg) = &scenario.background {
        bg.validate()?;
        for (z, &f) in s11.iter_mut().zip(&freqs) {
            *z *= bg.factor(f);
        }
    }
    if let Some(noise) = &scenario.noise {
        noise.validate()?;
        if noise.sigma > 0.0 {
            add_noise(&mut s11, noise.sigma, &mut stream_rng(noise, 0));
        }
    }
    Spectrum::new(freqs, s11)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxAxisSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub units: FluxUnits,
}

impl FluxAxisSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.start.is_finite() && self.stop.is_finite()) || self.stop <= self.start {
            return Err(Error::InvalidGrid("flux axis needs finite start < stop and at least 2 points".into()));
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.start + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapScenario {
    /// The resonator frequency in this model is replaced row by row.
    pub model: ModelFile,
    /// Tuning used when the scenario is run from a file; the library entry
    /// point takes the calibration as an argument instead.
    #[serde(default)]
    pub calibration: Option<CalibrationFile>,
    pub flux: FluxAxisSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub background: Option<Background>,
}

/// A generated map plus anything worth recording in its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMap {
    pub map: AnticrossingMap,
    pub warnings: Vec<String>,
}

/// One spectrum per flux value, with the resonator tuned by `cal`. Rows are
/// generated in parallel; row `i` draws its noise from stream `i`.
pub fn generate_anticrossing_map(scenario: &MapScenario, cal: &FluxCalibration) -> Result<SynthMap> {
    let model = scenario.model.to_model()?;
    let flux = scenario.flux.build()?;
    let grid = scenario.grid.build()?;
    if let Some(bg) = &scenario.background {
        bg.validate()?;
    }
    if let Some(n) = &scenario.noise {
        n.validate()?;
    }
    let omega_r = tuned_frequencies(&flux, scenario.flux.units, cal);

    let rows: Vec<Vec<Complex64>> = omega_r
        .par_iter()
        .enumerate()
        .map(|(i, &wr)| -> Result<Vec<Complex64>> {
            let tuned = model.with_resonator_frequency(wr);
            let mut s11 = evaluate_spectrum(&tuned, &grid)?.into_parts().1;
            if let Some(bg) = &scenario.background {
                for (z, &f) in s11.iter_mut().zip(&grid) {
                    *z *= bg.factor(f);
                }
            }
            if let Some(noise) = &scenario.noise {
                if noise.sigma > 0.0 {
                    add_noise(&mut s11, noise.sigma, &mut stream_rng(noise, i as u64));
                }
            }
            Ok(s11)
        })
        .collect::<Result<_>>()?;

    let (lo, hi) = omega_r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
    let warnings = model
        .modes()
        .iter()
        .filter(|m| m.frequency < lo || m.frequency > hi)
        .map(|m| {
            format!(
                "flux range misses the crossing with the mode at {:.6e} Hz (resonator spans [{:.6e}, {:.6e}] Hz)",
                m.frequency / TWO_PI,
                lo / TWO_PI,
                hi / TWO_PI
            )
        })
        .collect();
    let map = AnticrossingMap::new(flux, scenario.flux.units, grid, rows.concat())?;
    Ok(SynthMap { map, warnings })
}

/// Sampling statistics for [`generate_mode_cluster`]. Rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStatistics {
    /// Number of cluster centres, drawn uniformly in the band.
    pub clusters: usize,
    /// Standard deviation of mode positions about their centre.
    pub cluster_width: f64,
    /// Mechanical quality factors are log-uniform in `[q_min, q_max]`.
    pub q_min: f64,
    pub q_max: f64,
    /// Median coupling rate of ordinary modes.
    pub coupling: f64,
    /// Standard deviation of `ln g` about `ln coupling`.
    pub coupling_spread: f64,
    /// Coupling of one strongly coupled mode, if any.
    pub outlier_coupling: Option<f64>,
    pub seed: u64,
}

impl Default for ClusterStatistics {
    fn default() -> Self {
        Self {
            clusters: 3,
            cluster_width: TWO_PI * 15e6,
            q_min: 1e4,
            q_max: 5e4,
            coupling: TWO_PI * 100e3,
            coupling_spread: 0.25,
            outlier_coupling: Some(TWO_PI * 1.6e6),
            seed: 0,
        }
    }
}

/// Draws `count` mechanical modes clustered inside `band` (rad/s) and attaches
/// them to `resonator`. Mode frequencies are at least 2 MHz apart.
pub fn generate_mode_cluster(
    count: usize,
    band: (f64, f64),
    stats: &ClusterStatistics,
    resonator: ResonatorParams,
) -> Result<SystemModel> {
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(Error::param("band", "need finite 0 < lo < hi"));
    }
    if !(stats.q_min > 0.0 && stats.q_max >= stats.q_min && stats.coupling > 0.0 && stats.clusters > 0) {
        return Err(Error::param("statistics", "need positive Q range, coupling and cluster count"));
    }
    let min_gap = TWO_PI * 2e6;
    if count as f64 * min_gap > hi - lo {
        return Err(Error::param("count", "too many modes for the band"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(stream_seed(stats.seed, 0));
    let centres: Vec<f64> = (0..stats.clusters).map(|_| rng.gen_range(lo..hi)).collect();
    let mut freqs: Vec<f64> = Vec::with_capacity(count);
    let mut attempts = 0;
    while freqs.len() < count {
        attempts += 1;
        let c = centres[rng.gen_range(0..centres.len())];
        let z: f64 = rng.sample(StandardNormal);
        let f = c + stats.cluster_width * z;
        let spread_out = attempts > 1000 * (count + 1);
        let candidate = if spread_out { rng.gen_range(lo..hi) } else { f };
        if (lo..=hi).contains(&candidate) && freqs.iter().all(|&x| (x - candidate).abs() >= min_gap) {
            freqs.push(candidate);
        }
        if attempts > 100_000 * (count + 1) {
            return Err(Error::param("count", "could not place modes with the required spacing"));
        }
    }
    let (ln_qlo, ln_qhi) = (stats.q_min.ln(), stats.q_max.ln());
    let modes = freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let q = if ln_qhi > ln_qlo { rng.gen_range(ln_qlo..ln_qhi).exp() } else { stats.q_min };
            let z: f64 = rng.sample(StandardNormal);
            let g = match stats.outlier_coupling {
                Some(g) if k == 0 => g,
                _ => stats.coupling * (stats.coupling_spread * z).exp(),
            };
            MechanicalMode::new(f, f / q, g)
        })
        .collect::<Result<Vec<_>>>()?;
    SystemModel::new(resonator, modes, 0.0)
}

/// Layout of the per-mode maps produced by [`mode_maps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapLayout {
    pub rows: usize,
    pub cols: usize,
    /// Resonator detuning covered by the rows, `±` this value (rad/s).
    pub detuning_span: f64,
    /// Probe window `±` this value about the mode (rad/s).
    pub half_window: f64,
}

impl Default for MapLayout {
    fn default() -> Self {
        Self {
            rows: 50,
            cols: 500,
            detuning_span: TWO_PI * 15e6,
            half_window: TWO_PI * 12.5e6,
        }
    }
}

/// One map per mode of `model`, each containing only that mode, with bias
/// rows tuning the resonator across it through `cal`. Map `k` takes its
/// noise seed from `stream_seed(seed, k)`.
pub fn mode_maps(
    model: &SystemModel,
    cal: &FluxCalibration,
    layout: &MapLayout,
    noise: Option<NoiseSpec>,
) -> Result<Vec<SynthMap>> {
    model
        .modes()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let single = SystemModel::new(model.resonator, vec![*m], 0.0)?;
            let va = cal
                .bias_for_frequency(m.frequency + layout.detuning_span)
                .ok_or_else(|| Error::param("mode", "resonator cannot be tuned above this mode"))?;
            let vb = cal
                .bias_for_frequency(m.frequency - layout.detuning_span)
                .ok_or_else(|| Error::param("mode", "resonator cannot be tuned below this mode"))?;
            let scenario = MapScenario {
                model: ModelFile::from_model(&single),
                calibration: None,
                flux: FluxAxisSpec {
                    start: va.min(vb),
                    stop: va.max(vb),
                    points: layout.rows,
                    units: FluxUnits::Volts,
                },
                grid: GridSpec {
                    start_hz: (m.frequency - layout.half_window) / TWO_PI,
                    stop_hz: (m.frequency + layout.half_window) / TWO_PI,
                    points: layout.cols,
                },
                noise: noise.map(|n| NoiseSpec {
                    sigma: n.sigma,
                    seed: stream_seed(n.seed, k as u64),
                }),
                background: None,
            };
            generate_anticrossing_map(&scenario, cal)
        })
        .collect()
}

/// Oracle shift curve with seeded noise `σ κ N(0, 1)` added to each nonzero
/// shift (stream `i` for point `i`). Zero-amplitude points stay exactly at the
/// origin.
pub fn generate_kerr_sweep(
    model: &SystemModel,
    amplitudes: &[f64],
    noise: Option<NoiseSpec>,
    probe: &ProbeScan,
) -> Result<Vec<KerrPoint>> {
    if !(model.kerr < 0.0) {
        return Err(Error::param("kerr", "Kerr sweeps need a negative Kerr coefficient"));
    }
    let mut points = kerr_shift_curve(model, probe, amplitudes)?;
    if let Some(noise) = noise {
        noise.validate()?;
        for (i, p) in points.iter_mut().enumerate() {
            if p.amplitude > 0.0 && noise.sigma > 0.0 {
                let z: f64 = stream_rng(&noise, i as u64).sample(StandardNormal);
                p.shift += noise.sigma * model.resonator.linewidth * z;
            }
        }
    }
    Ok(points)
}

/// Evenly spaced amplitudes `[start, stop]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl AmplitudeSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        if self.points == 0 || !(self.start >= 0.0 && self.stop >= self.start && self.stop.is_finite()) {
            return Err(Error::param("amplitudes", "need 0 <= start <= stop and at least one point"));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.start + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KerrScenario {
    pub model: ModelFile,
    pub amplitudes: AmplitudeSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

/// [`ClusterStatistics`] as stored in a scenario file, in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterScenario {
    pub count: usize,
    #[serde(rename = "band_Hz")]
    pub band_hz: [f64; 2],
    pub resonator: crate::io::ResonatorFile,
    pub calibration: CalibrationFile,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(rename = "cluster_width_Hz", default = "default_cluster_width")]
    pub cluster_width_hz: f64,
    #[serde(default = "default_q_range")]
    pub q_range: [f64; 2],
    #[serde(rename = "g_Hz", default = "default_g")]
    pub g_hz: f64,
    #[serde(default = "default_g_spread")]
    pub g_spread: f64,
    #[serde(rename = "outlier_g_Hz", default = "default_outlier")]
    pub outlier_g_hz: Option<f64>,
    #[serde(default = "default_rows")]
    pub map_rows: usize,
    #[serde(default = "default_cols")]
    pub map_points: usize,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

fn default_clusters() -> usize {
    3
}
fn default_cluster_width() -> f64 {
    15e6
}
fn default_q_range() -> [f64; 2] {
    [1e4, 5e4]
}
fn default_g() -> f64 {
    100e3
}
fn default_g_spread() -> f64 {
    0.25
}
fn default_outlier() -> Option<f64> {
    Some(1.6e6)
}
fn default_rows() -> usize {
    50
}
fn default_cols() -> usize {
    500
}

impl ClusterScenario {
    pub fn statistics(&self, seed: u64) -> ClusterStatistics {
        ClusterStatistics {
            clusters: self.clusters,
            cluster_width: TWO_PI * self.cluster_width_hz,
            q_min: self.q_range[0],
            q_max: self.q_range[1],
            coupling: TWO_PI * self.g_hz,
            coupling_spread: self.g_spread,
            outlier_coupling: self.outlier_g_hz.map(|g| TWO_PI * g),
            seed,
        }
    }

    pub fn resonator(&self) -> Result<ResonatorParams> {
        let r = &self.resonator;
        ResonatorParams::new(TWO_PI * r.frequency_hz, TWO_PI * r.kappa_hz, TWO_PI * r.kappa_e_hz)
    }
}

/// Scenario file, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Spectrum(SpectrumScenario),
    AnticrossingMap(MapScenario),
    ModeCluster(ClusterScenario),
    KerrSweep(KerrScenario),
}
