//! Gating physics: pulse/gate overlap, gate-delay profiles and
//! range-intensity profiles.
//!
//! Time is measured in nanoseconds and distance in meters. The emitted pulse
//! starts at `t = 0` and lasts `t_L`; the gate opens `t_0` after the pulse's
//! trailing edge, i.e. at absolute time `t_L + t_0`, and stays open for
//! `t_G`. A target at distance `r` returns the pulse delayed by the two-way
//! travel time `2r / c_0`.
//!
//! With this delay reference a rectangular slice is non-zero exactly on
//! `(c_0 t_0 / 2, c_0 (t_0 + t_L + t_G) / 2)`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::quadrature;

/// Speed of light in meters per nanosecond.
pub const SPEED_OF_LIGHT_M_PER_NS: f64 = 0.299_792_458;

/// Converts a two-way travel time to a distance.
#[inline]
pub fn time_to_range(t_ns: f64) -> f64 {
    0.5 * SPEED_OF_LIGHT_M_PER_NS * t_ns
}

/// Converts a distance to the two-way travel time.
#[inline]
pub fn range_to_time(r_m: f64) -> f64 {
    2.0 * r_m / SPEED_OF_LIGHT_M_PER_NS
}

/// Normalised temporal shape of a pulse or gate, peak value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Rectangular,
    Triangular,
    Trapezoidal { rise_ns: f64, fall_ns: f64 },
    /// Gaussian centred on the window, truncated to it.
    Gaussian { sigma_ns: f64 },
}

impl Waveform {
    /// Value at time `t` after the leading edge of a window of length `width`.
    pub fn value(&self, width: f64, t: f64) -> f64 {
        if !(0.0..=width).contains(&t) {
            return 0.0;
        }
        match *self {
            Waveform::Rectangular => 1.0,
            Waveform::Triangular => {
                let half = 0.5 * width;
                if t <= half {
                    t / half
                } else {
                    (width - t) / half
                }
            }
            Waveform::Trapezoidal { rise_ns, fall_ns } => {
                if rise_ns > 0.0 && t < rise_ns {
                    t / rise_ns
                } else if fall_ns > 0.0 && t > width - fall_ns {
                    (width - t) / fall_ns
                } else {
                    1.0
                }
            }
            Waveform::Gaussian { sigma_ns } => {
                let d = (t - 0.5 * width) / sigma_ns;
                (-0.5 * d * d).exp()
            }
        }
    }

    /// Interior kinks, relative to the leading edge.
    fn kinks(&self, width: f64) -> Vec<f64> {
        match *self {
            Waveform::Rectangular | Waveform::Gaussian { .. } => vec![],
            Waveform::Triangular => vec![0.5 * width],
            Waveform::Trapezoidal { rise_ns, fall_ns } => vec![rise_ns, width - fall_ns],
        }
    }

    fn validate(&self, width: f64) -> Result<()> {
        match *self {
            Waveform::Rectangular | Waveform::Triangular => Ok(()),
            Waveform::Trapezoidal { rise_ns, fall_ns } => {
                if !(rise_ns.is_finite() && fall_ns.is_finite()) || rise_ns < 0.0 || fall_ns < 0.0
                {
                    return Err(Error::invalid("rise/fall", "must be finite and >= 0"));
                }
                if rise_ns + fall_ns > width {
                    return Err(Error::invalid(
                        "rise/fall",
                        format!("rise + fall = {} exceeds width {width}", rise_ns + fall_ns),
                    ));
                }
                Ok(())
            }
            Waveform::Gaussian { sigma_ns } => {
                if sigma_ns.is_finite() && sigma_ns > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("sigma", "must be finite and > 0"))
                }
            }
        }
    }

    pub fn is_rectangular(&self) -> bool {
        matches!(self, Waveform::Rectangular)
    }
}

fn check_width(name: &'static str, width: f64) -> Result<()> {
    if width.is_finite() && width > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {width}")))
    }
}

/// Emitted laser pulse: a waveform of width `t_L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    width_ns: f64,
    waveform: Waveform,
}

impl PulseShape {
    pub fn new(width_ns: f64, waveform: Waveform) -> Result<Self> {
        check_width("pulse width", width_ns)?;
        waveform.validate(width_ns)?;
        Ok(Self { width_ns, waveform })
    }

    pub fn rectangular(width_ns: f64) -> Result<Self> {
        Self::new(width_ns, Waveform::Rectangular)
    }

    pub fn width_ns(&self) -> f64 {
        self.width_ns
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    /// Emitted power at time `t` after the leading edge.
    pub fn power(&self, t: f64) -> f64 {
        self.waveform.value(self.width_ns, t)
    }
}

/// Sensor gate: a gain window of width `t_G`. Gaussian gates are not modelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateShape {
    width_ns: f64,
    waveform: Waveform,
}

impl GateShape {
    pub fn new(width_ns: f64, waveform: Waveform) -> Result<Self> {
        check_width("gate width", width_ns)?;
        if let Waveform::Gaussian { .. } = waveform {
            return Err(Error::UnsupportedShape("gaussian gate".into()));
        }
        waveform.validate(width_ns)?;
        Ok(Self { width_ns, waveform })
    }

    pub fn rectangular(width_ns: f64) -> Result<Self> {
        Self::new(width_ns, Waveform::Rectangular)
    }

    pub fn width_ns(&self) -> f64 {
        self.width_ns
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    pub fn gain(&self, t: f64) -> f64 {
        self.waveform.value(self.width_ns, t)
    }
}

/// Gating parameters of one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceConfig {
    pub pulses: u32,
    pub pulse: PulseShape,
    pub gate: GateShape,
    pub delay_ns: f64,
}

impl SliceConfig {
    pub fn new(pulses: u32, pulse: PulseShape, gate: GateShape, delay_ns: f64) -> Result<Self> {
        if pulses == 0 {
            return Err(Error::invalid("pulses", "must be >= 1"));
        }
        if !(delay_ns.is_finite() && delay_ns >= 0.0) {
            return Err(Error::invalid("delay", format!("must be finite and >= 0, got {delay_ns}")));
        }
        Ok(Self {
            pulses,
            pulse,
            gate,
            delay_ns,
        })
    }

    /// Slice with rectangular pulse and gate.
    pub fn rectangular(pulses: u32, pulse_ns: f64, gate_ns: f64, delay_ns: f64) -> Result<Self> {
        Self::new(
            pulses,
            PulseShape::rectangular(pulse_ns)?,
            GateShape::rectangular(gate_ns)?,
            delay_ns,
        )
    }

    /// The three-slice automotive setting (pulses, t_L, t_G, t_0):
    /// (202, 240, 220, 20), (591, 280, 420, 120), (770, 370, 420, 380).
    pub fn automotive_preset() -> [SliceConfig; 3] {
        [
            Self::rectangular(202, 240.0, 220.0, 20.0),
            Self::rectangular(591, 280.0, 420.0, 120.0),
            Self::rectangular(770, 370.0, 420.0, 380.0),
        ]
        .map(|s| s.expect("preset is valid"))
    }

    pub fn is_rectangular(&self) -> bool {
        self.pulse.waveform.is_rectangular() && self.gate.waveform.is_rectangular()
    }
}

/// Target reflectance and two-way atmospheric extinction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atmosphere {
    reflectance: f64,
    extinction_per_m: f64,
}

impl Default for Atmosphere {
    fn default() -> Self {
        Self {
            reflectance: 1.0,
            extinction_per_m: 0.0,
        }
    }
}

impl Atmosphere {
    pub fn new(reflectance: f64, extinction_per_m: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectance) {
            return Err(Error::invalid("reflectance", format!("must lie in [0, 1], got {reflectance}")));
        }
        if !(extinction_per_m.is_finite() && extinction_per_m >= 0.0) {
            return Err(Error::invalid(
                "extinction",
                format!("must be finite and >= 0, got {extinction_per_m}"),
            ));
        }
        Ok(Self {
            reflectance,
            extinction_per_m,
        })
    }

    pub fn reflectance(&self) -> f64 {
        self.reflectance
    }

    pub fn extinction_per_m(&self) -> f64 {
        self.extinction_per_m
    }

    /// Two-way transmission `exp(-2 γ r)`.
    pub fn transmission(&self, r: f64) -> f64 {
        if self.extinction_per_m == 0.0 {
            1.0
        } else {
            (-2.0 * self.extinction_per_m * r).exp()
        }
    }

    /// Distance-dependent factor `α β(r) / r²`.
    pub fn kappa(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Singularity { r });
        }
        Ok(self.reflectance * self.transmission(r) / (r * r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileAxis {
    DistanceM,
    DelayNs,
}

/// Sampled intensity curve over distance or delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    axis: ProfileAxis,
    samples: Vec<(f64, f64)>,
}

impl RangeProfile {
    pub fn new(axis: ProfileAxis, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("profile", "coordinates must be strictly increasing"));
        }
        if samples.iter().any(|&(_, v)| !(v >= 0.0)) {
            return Err(Error::invalid("profile", "intensities must be >= 0"));
        }
        Ok(Self { axis, samples })
    }

    pub fn axis(&self) -> ProfileAxis {
        self.axis
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    /// Coordinates whose intensity is within `rel_tol` of the peak.
    pub fn maximizers(&self, rel_tol: f64) -> Vec<f64> {
        let peak = self.peak();
        self.samples
            .iter()
            .filter(|s| s.1 >= peak * (1.0 - rel_tol))
            .map(|s| s.0)
            .collect()
    }

    /// Writes `coordinate,intensity` rows with a one-line header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "coordinate,intensity")?;
        for (x, y) in &self.samples {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite"))
    }
}

/// Overlap integral of gate and returned pulse for a target at `r`.
///
/// Rectangular shapes use the closed-form interval intersection; any other
/// combination is integrated numerically.
pub fn gated_response(pulse: &PulseShape, gate: &GateShape, delay_ns: f64, r: f64) -> Result<f64> {
    check_finite("delay", delay_ns)?;
    check_finite("range", r)?;
    if r < 0.0 {
        return Err(Error::invalid("range", format!("must be >= 0, got {r}")));
    }
    if pulse.waveform.is_rectangular() && gate.waveform.is_rectangular() {
        let (ret_lo, ret_hi) = return_window(pulse, r);
        let (gate_lo, gate_hi) = gate_window(pulse, gate, delay_ns);
        Ok((ret_hi.min(gate_hi) - ret_lo.max(gate_lo)).max(0.0))
    } else {
        Ok(gated_response_numeric(pulse, gate, delay_ns, r))
    }
}

/// Quadrature of the overlap integral regardless of shape.
pub fn gated_response_numeric(pulse: &PulseShape, gate: &GateShape, delay_ns: f64, r: f64) -> f64 {
    let (ret_lo, ret_hi) = return_window(pulse, r);
    let (gate_lo, gate_hi) = gate_window(pulse, gate, delay_ns);
    let lo = ret_lo.max(gate_lo);
    let hi = ret_hi.min(gate_hi);
    if !(hi > lo) {
        return 0.0;
    }
    let breaks: Vec<f64> = pulse
        .waveform
        .kinks(pulse.width_ns)
        .into_iter()
        .map(|k| ret_lo + k)
        .chain(gate.waveform.kinks(gate.width_ns).into_iter().map(|k| gate_lo + k))
        .collect();
    let tol = 1e-9 * pulse.width_ns.min(gate.width_ns);
    quadrature::integrate(
        |t| gate.gain(t - gate_lo) * pulse.power(t - ret_lo),
        lo,
        hi,
        &breaks,
        tol,
    )
}

fn return_window(pulse: &PulseShape, r: f64) -> (f64, f64) {
    let t = range_to_time(r);
    (t, t + pulse.width_ns)
}

fn gate_window(pulse: &PulseShape, gate: &GateShape, delay_ns: f64) -> (f64, f64) {
    let open = pulse.width_ns + delay_ns;
    (open, open + gate.width_ns)
}

/// Open distance interval on which the slice can register light.
pub fn slice_support(cfg: &SliceConfig) -> (f64, f64) {
    (
        time_to_range(cfg.delay_ns),
        time_to_range(cfg.delay_ns + cfg.pulse.width_ns + cfg.gate.width_ns),
    )
}

/// Gate-delay profile at fixed distance `r`.
pub fn gdp(pulse: &PulseShape, gate: &GateShape, r: f64, delays_ns: &[f64]) -> Result<RangeProfile> {
    if delays_ns.is_empty() {
        return Err(Error::Empty("delay grid"));
    }
    let samples = delays_ns
        .iter()
        .map(|&t0| Ok((t0, gated_response(pulse, gate, t0, r)?)))
        .collect::<Result<Vec<_>>>()?;
    RangeProfile::new(ProfileAxis::DelayNs, samples)
}

/// Single RIP value: `pulses * overlap(r)`, times `κ(r)` with irradiance.
pub fn rip_value(cfg: &SliceConfig, atmo: &Atmosphere, r: f64, include_irradiance: bool) -> Result<f64> {
    let base = cfg.pulses as f64 * gated_response(&cfg.pulse, &cfg.gate, cfg.delay_ns, r)?;
    if include_irradiance {
        Ok(base * atmo.kappa(r)?)
    } else {
        Ok(base)
    }
}

/// Range-intensity profile over a distance grid.
pub fn rip(
    cfg: &SliceConfig,
    atmo: &Atmosphere,
    r_grid: &[f64],
    include_irradiance: bool,
) -> Result<RangeProfile> {
    if r_grid.is_empty() {
        return Err(Error::Empty("range grid"));
    }
    let samples = r_grid
        .iter()
        .map(|&r| Ok((r, rip_value(cfg, atmo, r, include_irradiance)?)))
        .collect::<Result<Vec<_>>>()?;
    RangeProfile::new(ProfileAxis::DistanceM, samples)
}

/// Corners of a rectangular slice's trapezoidal RIP, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipBreakpoints {
    pub rise_start: f64,
    pub plateau_start: f64,
    pub fall_start: f64,
    pub fall_end: f64,
}

pub fn rip_breakpoints(cfg: &SliceConfig) -> Result<RipBreakpoints> {
    if !cfg.is_rectangular() {
        return Err(Error::UnsupportedShape(
            "RIP breakpoints need rectangular pulse and gate".into(),
        ));
    }
    let (tl, tg, t0) = (cfg.pulse.width_ns, cfg.gate.width_ns, cfg.delay_ns);
    Ok(RipBreakpoints {
        rise_start: time_to_range(t0),
        plateau_start: time_to_range(t0 + tl.min(tg)),
        fall_start: time_to_range(t0 + tl.max(tg)),
        fall_end: time_to_range(t0 + tl + tg),
    })
}

/// Evenly spaced grid `start, start + step, ...` not exceeding `stop`.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn slice1() -> SliceConfig {
        SliceConfig::automotive_preset()[0]
    }

    #[test]
    fn disjoint_windows_give_zero() {
        let p = PulseShape::rectangular(100.0).unwrap();
        let g = GateShape::rectangular(200.0).unwrap();
        assert_eq!(gated_response(&p, &g, 100.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn full_gate_overlap_inside_return_window() {
        // Return window [250.2, 490.2] ns contains the gate [260, 480] ns.
        let s = slice1();
        let v = gated_response(&s.pulse, &s.gate, s.delay_ns, 37.5).unwrap();
        let t = range_to_time(37.5);
        let oracle = (t + 240.0).min(480.0) - t.max(260.0);
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 220.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_beyond_support() {
        for s in SliceConfig::automotive_preset() {
            let (_, hi) = slice_support(&s);
            assert_eq!(rip_value(&s, &Atmosphere::default(), hi + 0.01, false).unwrap(), 0.0);
            assert_eq!(rip_value(&s, &Atmosphere::default(), hi + 500.0, false).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = slice1();
        assert!(gated_response(&s.pulse, &s.gate, 20.0, -1.0).is_err());
        assert!(gated_response(&s.pulse, &s.gate, f64::NAN, 1.0).is_err());
        assert!(gated_response(&s.pulse, &s.gate, 20.0, f64::INFINITY).is_err());
        assert!(PulseShape::rectangular(0.0).is_err());
        assert!(PulseShape::new(100.0, Waveform::Trapezoidal { rise_ns: 60.0, fall_ns: 50.0 }).is_err());
        assert!(GateShape::new(100.0, Waveform::Gaussian { sigma_ns: 10.0 }).is_err());
        assert!(SliceConfig::rectangular(0, 100.0, 100.0, 0.0).is_err());
        assert!(SliceConfig::rectangular(1, 100.0, 100.0, -1.0).is_err());
        assert!(Atmosphere::new(1.5, 0.0).is_err());
        assert!(Atmosphere::new(0.5, -0.1).is_err());
    }

    #[test]
    fn supports_of_preset() {
        let expect = [(3.0, 72.0), (18.0, 122.9), (57.0, 175.4)];
        for (s, (lo, hi)) in SliceConfig::automotive_preset().iter().zip(expect) {
            let (a, b) = slice_support(s);
            assert_abs_diff_eq!(a, lo, epsilon = 0.05);
            assert_abs_diff_eq!(b, hi, epsilon = 0.06);
        }
    }

    #[test]
    fn breakpoints_match_dense_overlap_oracle() {
        // Slope changes of the independent interval-intersection overlap.
        let expected = [(3.0, 36.0, 39.0, 72.0), (18.0, 60.0, 81.0, 122.9)];
        for (s, e) in SliceConfig::automotive_preset().iter().zip(expected) {
            let bp = rip_breakpoints(s).unwrap();
            let oracle = |r: f64| {
                let t = 2.0 * r / SPEED_OF_LIGHT_M_PER_NS;
                let gate_lo = s.pulse.width_ns + s.delay_ns;
                ((t + s.pulse.width_ns).min(gate_lo + s.gate.width_ns) - t.max(gate_lo)).max(0.0)
            };
            let h = 0.001;
            let grid = linspace_step(0.0, 200.0, h);
            let slopes: Vec<f64> = grid.windows(2).map(|w| (oracle(w[1]) - oracle(w[0])) / h).collect();
            let mut changes = vec![];
            for (i, w) in slopes.windows(2).enumerate() {
                if (w[1] - w[0]).abs() > 1e-3 {
                    changes.push(grid[i + 1]);
                }
            }
            // Kinks of the oracle, each detected within one grid step.
            let found = [bp.rise_start, bp.plateau_start, bp.fall_start, bp.fall_end];
            for k in found {
                assert!(changes.iter().any(|c| (c - k).abs() <= 2.0 * h), "kink {k} not found");
            }
            assert_abs_diff_eq!(bp.rise_start, e.0, epsilon = 0.05);
            assert_abs_diff_eq!(bp.plateau_start, e.1, epsilon = 0.05);
            assert_abs_diff_eq!(bp.fall_start, e.2, epsilon = 0.06);
            assert_abs_diff_eq!(bp.fall_end, e.3, epsilon = 0.06);
        }
    }

    #[test]
    fn triangle_has_degenerate_plateau() {
        let s = SliceConfig::rectangular(1, 100.0, 100.0, 0.0).unwrap();
        let bp = rip_breakpoints(&s).unwrap();
        assert_eq!(bp.plateau_start, bp.fall_start);
        assert_abs_diff_eq!(bp.plateau_start, 14.99, epsilon = 0.01);
    }

    #[test]
    fn breakpoints_reject_non_rectangular() {
        let s = SliceConfig::new(
            1,
            PulseShape::new(100.0, Waveform::Triangular).unwrap(),
            GateShape::rectangular(100.0).unwrap(),
            0.0,
        )
        .unwrap();
        assert!(matches!(rip_breakpoints(&s), Err(Error::UnsupportedShape(_))));
    }

    #[test]
    fn support_endpoints_equal_breakpoint_extremes() {
        for s in SliceConfig::automotive_preset() {
            let bp = rip_breakpoints(&s).unwrap();
            assert_eq!(slice_support(&s), (bp.rise_start, bp.fall_end));
        }
    }

    #[test]
    fn gdp_triangle_for_equal_widths() {
        let p = PulseShape::rectangular(100.0).unwrap();
        let g = GateShape::rectangular(100.0).unwrap();
        let delays = linspace_step(0.0, 800.0, 1.0);
        let prof = gdp(&p, &g, 50.0, &delays).unwrap();
        assert_eq!(prof.maximizers(1e-12).len(), 1);
    }

    #[test]
    fn gdp_plateau_for_unequal_widths() {
        let p = PulseShape::rectangular(100.0).unwrap();
        let g = GateShape::rectangular(200.0).unwrap();
        let step = 1.0;
        let delays = linspace_step(0.0, 800.0, step);
        let prof = gdp(&p, &g, 50.0, &delays).unwrap();
        let m = prof.maximizers(1e-12);
        let width = m.last().unwrap() - m.first().unwrap();
        assert!((width - 100.0).abs() <= step + 1e-9, "plateau width {width}");
    }

    #[test]
    fn gdp_past_support_is_zero() {
        let p = PulseShape::rectangular(100.0).unwrap();
        let g = GateShape::rectangular(100.0).unwrap();
        let prof = gdp(&p, &g, 10.0, &[500.0, 600.0, 700.0]).unwrap();
        assert!(prof.samples().iter().all(|s| s.1 == 0.0));
        assert!(gdp(&p, &g, 10.0, &[]).is_err());
        assert!(gdp(&p, &g, 10.0, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn rip_zero_reflectance() {
        let atmo = Atmosphere::new(0.0, 0.0).unwrap();
        let grid = linspace_step(1.0, 200.0, 1.0);
        for s in SliceConfig::automotive_preset() {
            let prof = rip(&s, &atmo, &grid, true).unwrap();
            assert!(prof.samples().iter().all(|v| v.1 == 0.0));
        }
    }

    #[test]
    fn rip_irradiance_matches_scalar_formula() {
        let s = SliceConfig::automotive_preset()[1];
        let atmo = Atmosphere::default();
        let grid: Vec<f64> = (0..10).map(|i| 20.0 + 10.0 * i as f64 + 0.37).collect();
        let prof = rip(&s, &atmo, &grid, true).unwrap();
        for &(r, v) in prof.samples() {
            let t = 2.0 * r / SPEED_OF_LIGHT_M_PER_NS;
            let overlap = ((t + 280.0).min(400.0 + 420.0) - t.max(400.0)).max(0.0);
            assert_abs_diff_eq!(v, 591.0 * overlap / (r * r), epsilon = 1e-9);
        }
    }

    #[test]
    fn rip_irradiance_singular_at_zero() {
        let s = slice1();
        assert!(matches!(
            rip(&s, &Atmosphere::default(), &[0.0, 1.0], true),
            Err(Error::Singularity { .. })
        ));
        assert!(rip(&s, &Atmosphere::default(), &[0.0, 1.0], false).is_ok());
    }

    #[test]
    fn clear_air_transmission_is_one() {
        let a = Atmosphere::new(0.3, 0.0).unwrap();
        assert_eq!(a.transmission(1e6), 1.0);
        let fog = Atmosphere::new(0.3, 0.01).unwrap();
        assert_abs_diff_eq!(fog.transmission(50.0), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn preset_rips_rise_plateau_fall() {
        let grid = linspace_step(0.5, 200.0, 0.5);
        for s in SliceConfig::automotive_preset() {
            let prof = rip(&s, &Atmosphere::default(), &grid, false).unwrap();
            let v: Vec<f64> = prof.samples().iter().map(|x| x.1).collect();
            let peak = v.iter().cloned().fold(0.0, f64::max);
            let first_peak = v.iter().position(|&x| x == peak).unwrap();
            let last_peak = v.iter().rposition(|&x| x == peak).unwrap();
            assert!(v[..=first_peak].windows(2).all(|w| w[1] >= w[0]));
            assert!(v[last_peak..].windows(2).all(|w| w[1] <= w[0]));
            assert_abs_diff_eq!(peak, s.pulses as f64 * s.pulse.width_ns.min(s.gate.width_ns), epsilon = 1e-9);
        }
    }

    #[test]
    fn numeric_route_for_trapezoid_matches_hand_value() {
        // Triangular pulse fully inside a rectangular gate integrates to t_L / 2.
        let p = PulseShape::new(100.0, Waveform::Triangular).unwrap();
        let g = GateShape::rectangular(400.0).unwrap();
        let r = time_to_range(150.0);
        let v = gated_response(&p, &g, 0.0, r).unwrap();
        assert_abs_diff_eq!(v, 50.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_pulse_integral() {
        let sigma = 10.0;
        let p = PulseShape::new(200.0, Waveform::Gaussian { sigma_ns: sigma }).unwrap();
        let g = GateShape::rectangular(1000.0).unwrap();
        let r = time_to_range(300.0);
        let v = gated_response(&p, &g, 0.0, r).unwrap();
        let full = sigma * (2.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(v, full, epsilon = 1e-6);
    }

    #[test]
    fn profile_csv_has_header() {
        let prof = RangeProfile::new(ProfileAxis::DistanceM, vec![(1.0, 2.0), (2.0, 0.5)]).unwrap();
        let mut buf = vec![];
        prof.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "coordinate,intensity\n1,2\n2,0.5\n");
    }
}
