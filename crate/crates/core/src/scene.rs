//! Synthetic labelled data: intensity triples with ground-truth range and
//! full three-slice images rendered from depth maps.
//!
//! Every sample or pixel draws its noise from a generator derived from
//! `(seed, index)`, so serial and parallel generation agree bit for bit.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gating::{self, rip_breakpoints, rip_value, slice_support, Atmosphere, SliceConfig};
use crate::raster::Raster;
use crate::seed::{indexed_rng, stage_seed};

/// One labelled observation: three 8-bit slice intensities and the
/// geometric distance of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub s: [u8; 3],
    pub r: f64,
}

impl Sample {
    pub fn new(s: [u8; 3], r: f64) -> Self {
        Self { s, r }
    }

    pub fn intensities(&self) -> [f64; 3] {
        self.s.map(f64::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    r: f64,
    alpha: f64,
}

impl ScenePoint {
    pub fn new(r: f64, alpha: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid("r", format!("must be finite and > 0, got {r}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { r, alpha })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Additive Gaussian noise in gray levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { sigma, seed })
    }

    pub fn noiseless() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// How the intensity-to-gray calibration scalar is referenced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationReference {
    /// Brightest slice's irradiance-weighted RIP at the start of its plateau
    /// (unit reflectance) maps to the target gray value.
    BrightestPlateau,
    /// Maximum irradiance-weighted RIP over `[r_lo, r_hi]` (unit
    /// reflectance) maps to the target gray value.
    PeakOverRange { r_lo: f64, r_hi: f64 },
}

/// Scalar mapping RIP units to gray values so that the reference intensity
/// lands on `target_gray`.
pub fn calibration_scalar(
    slices: &[SliceConfig; 3],
    extinction_per_m: f64,
    target_gray: f64,
    reference: CalibrationReference,
) -> Result<f64> {
    if !(target_gray > 0.0 && target_gray <= 255.0) {
        return Err(Error::invalid("target gray", format!("must lie in (0, 255], got {target_gray}")));
    }
    let atmo = Atmosphere::new(1.0, extinction_per_m)?;
    let peak = match reference {
        CalibrationReference::BrightestPlateau => slices
            .iter()
            .map(|s| plateau_intensity(s, &atmo))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max),
        CalibrationReference::PeakOverRange { r_lo, r_hi } => {
            if !(r_lo > 0.0 && r_hi > r_lo) {
                return Err(Error::invalid("calibration range", format!("[{r_lo}, {r_hi}]")));
            }
            let step = ((r_hi - r_lo) / 20_000.0).min(0.01);
            let grid = gating::linspace_step(r_lo, r_hi, step);
            let mut peak: f64 = 0.0;
            for s in slices {
                for &r in &grid {
                    peak = peak.max(rip_value(s, &atmo, r, true)?);
                }
            }
            peak
        }
    };
    if !(peak > 0.0) {
        return Err(Error::invalid("calibration", "reference intensity is zero"));
    }
    Ok(target_gray / peak)
}

/// Irradiance-weighted intensity where the slice's RIP first reaches its
/// maximum. The `1/r²` factor makes this the plateau's brightest point.
fn plateau_intensity(s: &SliceConfig, atmo: &Atmosphere) -> Result<f64> {
    let r = if s.is_rectangular() {
        rip_breakpoints(s)?.plateau_start
    } else {
        let (lo, hi) = slice_support(s);
        let n = 8192;
        let grid: Vec<f64> = (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let values = grid
            .iter()
            .map(|&r| rip_value(s, atmo, r, false))
            .collect::<Result<Vec<_>>>()?;
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let i = values.iter().position(|&v| v >= peak * (1.0 - 1e-6)).unwrap_or(0);
        grid[i]
    };
    rip_value(s, atmo, r, true)
}

/// Forward model for three slices under a fixed atmosphere and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    slices: [SliceConfig; 3],
    extinction_per_m: f64,
    calibration: f64,
}

impl Simulator {
    pub fn new(slices: [SliceConfig; 3], extinction_per_m: f64, calibration: f64) -> Result<Self> {
        if !(calibration.is_finite() && calibration > 0.0) {
            return Err(Error::invalid("calibration", format!("must be > 0, got {calibration}")));
        }
        Atmosphere::new(1.0, extinction_per_m)?;
        Ok(Self {
            slices,
            extinction_per_m,
            calibration,
        })
    }

    /// Simulator calibrated to `target_gray` against `reference`.
    pub fn calibrated(
        slices: [SliceConfig; 3],
        extinction_per_m: f64,
        target_gray: f64,
        reference: CalibrationReference,
    ) -> Result<Self> {
        let calibration = calibration_scalar(&slices, extinction_per_m, target_gray, reference)?;
        Self::new(slices, extinction_per_m, calibration)
    }

    pub fn slices(&self) -> &[SliceConfig; 3] {
        &self.slices
    }

    pub fn calibration(&self) -> f64 {
        self.calibration
    }

    pub fn extinction_per_m(&self) -> f64 {
        self.extinction_per_m
    }

    /// Noise-free gray values before quantisation.
    pub fn expected_gray(&self, point: ScenePoint) -> Result<[f64; 3]> {
        let atmo = Atmosphere::new(point.alpha, self.extinction_per_m)?;
        let mut out = [0.0; 3];
        for (o, s) in out.iter_mut().zip(&self.slices) {
            *o = self.calibration * rip_value(s, &atmo, point.r, true)?;
        }
        Ok(out)
    }

    /// One quantised, noisy observation. `index` selects the noise stream.
    pub fn simulate_triple(&self, point: ScenePoint, noise: &NoiseModel, index: u64) -> Result<Sample> {
        let clean = self.expected_gray(point)?;
        let mut s = [0u8; 3];
        if noise.sigma > 0.0 {
            let normal = Normal::new(0.0, noise.sigma).expect("sigma validated");
            let mut rng = indexed_rng(noise.seed, index);
            for (o, c) in s.iter_mut().zip(clean) {
                *o = quantize(c + normal.sample(&mut rng));
            }
        } else {
            for (o, c) in s.iter_mut().zip(clean) {
                *o = quantize(c);
            }
        }
        Ok(Sample::new(s, point.r))
    }

    /// Renders three slice images from per-pixel depth and reflectance.
    ///
    /// Pixels with non-finite or non-positive depth read zero in every slice.
    pub fn render_slices(
        &self,
        depth: &Raster<f64>,
        reflectance: &Raster<f64>,
        noise: &NoiseModel,
    ) -> Result<SliceImageSet> {
        depth.same_dims(reflectance)?;
        let triples = depth
            .data()
            .par_iter()
            .zip(reflectance.data().par_iter())
            .enumerate()
            .map(|(i, (&r, &alpha))| {
                if !(r.is_finite() && r > 0.0) {
                    return Ok([0u8; 3]);
                }
                let point = ScenePoint::new(r, alpha)?;
                Ok(self.simulate_triple(point, noise, i as u64)?.s)
            })
            .collect::<Result<Vec<_>>>()?;
        let (w, h) = depth.dims();
        let slices = [0, 1, 2].map(|j| {
            Raster::from_vec(w, h, triples.iter().map(|t| t[j]).collect()).expect("dims match")
        });
        Ok(SliceImageSet {
            slices,
            depth: Some(depth.clone()),
        })
    }
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Distribution of target distances.
#[derive(Debug, Clone, PartialEq)]
pub enum RangeDistribution {
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-uniform density over `edges` with per-bin `weights`.
    Histogram { edges: Vec<f64>, weights: Vec<f64> },
}

impl RangeDistribution {
    fn validate(&self) -> Result<()> {
        match self {
            RangeDistribution::Uniform { lo, hi } => {
                if !(*lo > 0.0 && hi > lo && hi.is_finite()) {
                    return Err(Error::invalid("range distribution", format!("bad bounds [{lo}, {hi}]")));
                }
            }
            RangeDistribution::Histogram { edges, weights } => {
                if edges.len() < 2 || weights.len() != edges.len() - 1 {
                    return Err(Error::invalid("range distribution", "need n+1 edges for n weights"));
                }
                if !(edges[0] > 0.0) || edges.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("range distribution", "edges must be positive and increasing"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(Error::invalid("range distribution", "weights must be >= 0 with positive sum"));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            RangeDistribution::Uniform { lo, hi } => rng.gen_range(*lo..*hi),
            RangeDistribution::Histogram { edges, weights } => {
                let bin = WeightedIndex::new(weights).expect("validated").sample(rng);
                rng.gen_range(edges[bin]..edges[bin + 1])
            }
        }
    }
}

/// Reflectance drawn uniformly from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRange {
    pub lo: f64,
    pub hi: f64,
}

impl AlphaRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("alpha range", format!("[{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// `n` independent labelled samples.
///
/// Target points come from a stream derived from the noise seed, noise from
/// the noise stream itself, both indexed by sample number.
pub fn generate_dataset(
    n: usize,
    ranges: &RangeDistribution,
    alphas: AlphaRange,
    sim: &Simulator,
    noise: &NoiseModel,
) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    ranges.validate()?;
    let point_seed = stage_seed(noise.seed, "scene-points");
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed_rng(point_seed, i);
            let r = ranges.sample(&mut rng);
            let alpha = alphas.sample(&mut rng);
            sim.simulate_triple(ScenePoint::new(r, alpha)?, noise, i)
        })
        .collect()
}

/// Three aligned 8-bit slice images with optional ground-truth depth.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImageSet {
    pub slices: [Raster<u8>; 3],
    pub depth: Option<Raster<f64>>,
}

impl SliceImageSet {
    pub fn new(slices: [Raster<u8>; 3], depth: Option<Raster<f64>>) -> Result<Self> {
        slices[0].same_dims(&slices[1])?;
        slices[0].same_dims(&slices[2])?;
        if let Some(d) = &depth {
            slices[0].same_dims(d)?;
        }
        Ok(Self { slices, depth })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.slices[0].dims()
    }

    pub fn triple(&self, i: usize) -> [u8; 3] {
        [self.slices[0].data()[i], self.slices[1].data()[i], self.slices[2].data()[i]]
    }
}

/// Depth image whose columns ramp linearly from `r_lo` (left) to `r_hi`.
pub fn ramp_scene(width: usize, height: usize, r_lo: f64, r_hi: f64) -> Raster<f64> {
    let span = (width.max(2) - 1) as f64;
    Raster::from_fn(width, height, |x, _| r_lo + (r_hi - r_lo) * x as f64 / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sim() -> Simulator {
        Simulator::calibrated(
            SliceConfig::automotive_preset(),
            0.0,
            200.0,
            CalibrationReference::BrightestPlateau,
        )
        .unwrap()
    }

    #[test]
    fn dark_target_reads_zero() {
        let s = sim().simulate_triple(ScenePoint::new(40.0, 0.0).unwrap(), &NoiseModel::noiseless(), 0).unwrap();
        assert_eq!(s.s, [0, 0, 0]);
        assert_eq!(s.r, 40.0);
    }

    #[test]
    fn only_far_slice_lit_at_130m() {
        let s = sim().simulate_triple(ScenePoint::new(130.0, 1.0).unwrap(), &NoiseModel::noiseless(), 0).unwrap();
        assert_eq!(s.s[0], 0);
        assert_eq!(s.s[1], 0);
        assert!(s.s[2] > 0);
    }

    #[test]
    fn outside_all_supports_is_zero_triple() {
        let s = sim().simulate_triple(ScenePoint::new(300.0, 1.0).unwrap(), &NoiseModel::noiseless(), 0).unwrap();
        assert_eq!(s.s, [0, 0, 0]);
    }

    #[test]
    fn noiseless_value_at_65m_matches_scalar_rip() {
        let slices = SliceConfig::automotive_preset();
        // Calibration such that the brightest slice at 65 m reads 200.
        let r = 65.0;
        let c = 0.299_792_458;
        let t = 2.0 * r / c;
        let raw: Vec<f64> = slices
            .iter()
            .map(|s| {
                let lo = s.pulse.width_ns() + s.delay_ns;
                let ov = ((t + s.pulse.width_ns()).min(lo + s.gate.width_ns()) - t.max(lo)).max(0.0);
                s.pulses as f64 * ov / (r * r)
            })
            .collect();
        let calib = 200.0 / raw.iter().cloned().fold(0.0, f64::max);
        let sim = Simulator::new(slices, 0.0, calib).unwrap();
        let out = sim.simulate_triple(ScenePoint::new(r, 1.0).unwrap(), &NoiseModel::noiseless(), 0).unwrap();
        let expected: Vec<u8> = raw.iter().map(|v| (calib * v).round() as u8).collect();
        assert_eq!(out.s.to_vec(), expected);
        assert_eq!(out.s.iter().copied().max(), Some(200));
    }

    #[test]
    fn calibration_references() {
        let slices = SliceConfig::automotive_preset();
        let plateau = calibration_scalar(&slices, 0.0, 200.0, CalibrationReference::BrightestPlateau).unwrap();
        // Slice 2 plateau start: 591 * 280 / r², r = c * 400 / 2.
        let r = 0.5 * 0.299_792_458 * 400.0;
        assert_abs_diff_eq!(plateau, 200.0 / (591.0 * 280.0 / (r * r)), epsilon = 1e-9);
        let ranged = calibration_scalar(
            &slices,
            0.0,
            200.0,
            CalibrationReference::PeakOverRange { r_lo: 10.0, r_hi: 100.0 },
        )
        .unwrap();
        // Slice 1 at 10 m dominates: 202 * (2*10/c - 20) / 100.
        let ov = 2.0 * 10.0 / 0.299_792_458 - 20.0;
        assert_abs_diff_eq!(ranged, 200.0 / (202.0 * ov / 100.0), epsilon = 1e-6);
        assert!(calibration_scalar(&slices, 0.0, 0.0, CalibrationReference::BrightestPlateau).is_err());
    }

    #[test]
    fn generate_rejects_bad_inputs() {
        let s = sim();
        let noise = NoiseModel::new(1.0, 1).unwrap();
        let alphas = AlphaRange::new(0.1, 0.9).unwrap();
        let u = RangeDistribution::Uniform { lo: 10.0, hi: 100.0 };
        assert!(generate_dataset(0, &u, alphas, &s, &noise).is_err());
        let bad = RangeDistribution::Uniform { lo: 0.0, hi: 100.0 };
        assert!(generate_dataset(10, &bad, alphas, &s, &noise).is_err());
        let bad = RangeDistribution::Histogram { edges: vec![10.0, 5.0], weights: vec![1.0] };
        assert!(generate_dataset(10, &bad, alphas, &s, &noise).is_err());
        assert!(NoiseModel::new(-1.0, 0).is_err());
        assert!(AlphaRange::new(0.5, 0.2).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let s = sim();
        let noise = NoiseModel::new(2.0, 99).unwrap();
        let alphas = AlphaRange::new(0.05, 0.9).unwrap();
        let u = RangeDistribution::Uniform { lo: 10.0, hi: 100.0 };
        let a = generate_dataset(1000, &u, alphas, &s, &noise).unwrap();
        let b = generate_dataset(1000, &u, alphas, &s, &noise).unwrap();
        assert_eq!(a, b);
        // Serial recomputation agrees with the parallel path.
        let point_seed = stage_seed(99, "scene-points");
        for (i, sample) in a.iter().enumerate().step_by(97) {
            let mut rng = indexed_rng(point_seed, i as u64);
            let r = rng.gen_range(10.0..100.0);
            let alpha = rng.gen_range(0.05..=0.9);
            let again = s.simulate_triple(ScenePoint::new(r, alpha).unwrap(), &noise, i as u64).unwrap();
            assert_eq!(*sample, again);
        }
    }

    #[test]
    fn uniform_ranges_pass_chi_square() {
        let s = sim();
        let noise = NoiseModel::new(0.0, 5).unwrap();
        let u = RangeDistribution::Uniform { lo: 10.0, hi: 100.0 };
        let data = generate_dataset(100_000, &u, AlphaRange::new(0.5, 0.5).unwrap(), &s, &noise).unwrap();
        let bins = 18;
        let mut counts = vec![0usize; bins];
        for d in &data {
            counts[(((d.r - 10.0) / 5.0) as usize).min(bins - 1)] += 1;
        }
        let expected = data.len() as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 17 degrees of freedom: mean 17, sd sqrt(34); 3 sd bound.
        assert!(chi2 < 17.0 + 3.0 * 34f64.sqrt(), "chi2 = {chi2}");
        for &c in &counts {
            let sd = (expected * (1.0 - 1.0 / bins as f64)).sqrt();
            assert!((c as f64 - expected).abs() < 3.0 * sd + 1.0);
        }
    }

    #[test]
    fn histogram_distribution_respects_bins() {
        let s = sim();
        let noise = NoiseModel::new(0.0, 5).unwrap();
        let h = RangeDistribution::Histogram { edges: vec![10.0, 20.0, 30.0], weights: vec![0.0, 1.0] };
        let data = generate_dataset(500, &h, AlphaRange::new(0.5, 0.5).unwrap(), &s, &noise).unwrap();
        assert!(data.iter().all(|d| (20.0..30.0).contains(&d.r)));
    }

    #[test]
    fn constant_plane_renders_constant_images() {
        let s = sim();
        let depth = Raster::filled(8, 4, 50.0);
        let refl = Raster::filled(8, 4, 0.5);
        let set = s.render_slices(&depth, &refl, &NoiseModel::noiseless()).unwrap();
        for img in &set.slices {
            assert!(img.data().iter().all(|&v| v == img.data()[0]));
        }
    }

    #[test]
    fn ramp_zeroes_near_slice_beyond_its_support() {
        let s = sim();
        let depth = ramp_scene(141, 2, 10.0, 150.0);
        let refl = Raster::filled(141, 2, 0.8);
        let set = s.render_slices(&depth, &refl, &NoiseModel::noiseless()).unwrap();
        for x in 0..141 {
            let r = *depth.get(x, 0);
            if r > 72.0 {
                assert_eq!(*set.slices[0].get(x, 0), 0, "r = {r}");
            }
        }
    }

    #[test]
    fn sky_pixels_are_dark() {
        let s = sim();
        let mut d = vec![50.0; 4];
        d[1] = f64::INFINITY;
        d[2] = f64::NAN;
        let depth = Raster::from_vec(2, 2, d).unwrap();
        let refl = Raster::filled(2, 2, 0.5);
        let set = s.render_slices(&depth, &refl, &NoiseModel::new(3.0, 1).unwrap()).unwrap();
        assert_eq!(set.triple(1), [0, 0, 0]);
        assert_eq!(set.triple(2), [0, 0, 0]);
        assert!(set.triple(0).iter().any(|&v| v > 0));
    }

    #[test]
    fn render_rejects_mismatched_dims() {
        let s = sim();
        let depth = Raster::filled(3, 2, 50.0);
        let refl = Raster::filled(2, 3, 0.5);
        assert!(matches!(
            s.render_slices(&depth, &refl, &NoiseModel::noiseless()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
