//! Classical depth recovery: time slicing, range-intensity correlation and
//! the piecewise baseline built from them.
//!
//! The baseline splits the distance axis wherever one of the slices changes
//! behaviour (rising, plateau, falling, dark). Inside each section every
//! pair of adjacent lit slices yields one closed-form estimate from the
//! ratio of their pulse-normalised intensities; the final estimate is the
//! plain mean of those.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::gating::{rip_breakpoints, time_to_range, SliceConfig, SPEED_OF_LIGHT_M_PER_NS};

/// One frame of a delay sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    /// Gate opening time measured from the pulse's leading edge. For a slice
    /// configured with trailing-edge delay `t_0` this is `t_0 + t_L`.
    pub t_ns: f64,
    pub intensity: f64,
}

/// Intensity-weighted mean delay, converted to range.
///
/// Exact for symmetric gate-delay profiles, i.e. equal pulse and gate widths.
pub fn time_slicing_estimate(samples: &[DelaySample]) -> Result<f64> {
    if samples.iter().any(|s| !(s.intensity >= 0.0) || !s.t_ns.is_finite()) {
        return Err(Error::invalid("delay samples", "intensities must be >= 0 and delays finite"));
    }
    let total: f64 = samples.iter().map(|s| s.intensity).sum();
    if !(total > 0.0) {
        return Err(Error::NoSignal);
    }
    let t_hat = samples.iter().map(|s| s.intensity * s.t_ns).sum::<f64>() / total;
    Ok(time_to_range(t_hat))
}

fn check_intensity(v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("intensity", format!("must be finite and >= 0, got {v}")))
    }
}

/// Plateau/ramp correlation: `r = c/2 (t_0 + t_L + ramp / plateau * t_L)`.
///
/// `ramp` is the intensity of the slice whose ramp starts at `t_0 + t_L`,
/// `plateau` that of the slice sitting on its plateau of height `t_L`.
pub fn correlation_trapez(ramp: f64, plateau: f64, t0_ns: f64, tl_ns: f64) -> Result<f64> {
    check_intensity(ramp)?;
    check_intensity(plateau)?;
    if plateau == 0.0 {
        return Err(Error::DivisionByZero("correlation_trapez"));
    }
    Ok(0.5 * SPEED_OF_LIGHT_M_PER_NS * (t0_ns + tl_ns + ramp / plateau * tl_ns))
}

/// Triangular correlation: `r = c/2 (t_0 + t_L + ramp / (ramp + other) * t_L)`.
///
/// The two slices' sum acts as the plateau; `ramp` is the slice rising from
/// `t_0 + t_L`, `other` the one falling towards `t_0 + 2 t_L`.
pub fn correlation_triangle(ramp: f64, other: f64, t0_ns: f64, tl_ns: f64) -> Result<f64> {
    check_intensity(ramp)?;
    check_intensity(other)?;
    let sum = ramp + other;
    if sum == 0.0 {
        return Err(Error::DivisionByZero("correlation_triangle"));
    }
    Ok(0.5 * SPEED_OF_LIGHT_M_PER_NS * (t0_ns + tl_ns + ramp / sum * tl_ns))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Behavior {
    Dark,
    Rising,
    Plateau,
    Falling,
}

impl Behavior {
    pub fn is_lit(self) -> bool {
        self != Behavior::Dark
    }

    fn tag(self) -> &'static str {
        match self {
            Behavior::Dark => "dark",
            Behavior::Rising => "rising",
            Behavior::Plateau => "plateau",
            Behavior::Falling => "falling",
        }
    }
}

/// Closed-form inversion for one pair of slices.
///
/// Slice indices refer to the order passed to [`build_section_table`];
/// intensities are divided by each slice's pulse count before use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// Ramp slice against a plateau slice, via [`correlation_trapez`].
    /// A negative `tl_ns` encodes a falling ramp.
    Trapez {
        ramp: usize,
        plateau: usize,
        t0_ns: f64,
        tl_ns: f64,
    },
    /// Rising slice against a falling one, via [`correlation_triangle`].
    Triangle {
        ramp: usize,
        other: usize,
        t0_ns: f64,
        tl_ns: f64,
    },
    /// Two ramps in the same direction with knees at `knee_a` / `knee_b`:
    /// `q_a / q_b = (t - knee_a) / (t - knee_b)`.
    SameSlope {
        a: usize,
        b: usize,
        knee_a_ns: f64,
        knee_b_ns: f64,
    },
}

impl Estimator {
    /// Slice indices the estimator reads.
    pub fn slices(&self) -> (usize, usize) {
        match *self {
            Estimator::Trapez { ramp, plateau, .. } => (ramp, plateau),
            Estimator::Triangle { ramp, other, .. } => (ramp, other),
            Estimator::SameSlope { a, b, .. } => (a, b),
        }
    }

    /// Range estimate from pulse-normalised intensities.
    pub fn evaluate(&self, q: &[f64]) -> Result<f64> {
        match *self {
            Estimator::Trapez {
                ramp,
                plateau,
                t0_ns,
                tl_ns,
            } => correlation_trapez(q[ramp], q[plateau], t0_ns, tl_ns),
            Estimator::Triangle {
                ramp,
                other,
                t0_ns,
                tl_ns,
            } => correlation_triangle(q[ramp], q[other], t0_ns, tl_ns),
            Estimator::SameSlope {
                a,
                b,
                knee_a_ns,
                knee_b_ns,
            } => {
                if q[b] == 0.0 {
                    return Err(Error::DivisionByZero("same-slope ratio"));
                }
                let rho = q[a] / q[b];
                if rho == 1.0 {
                    return Err(Error::DivisionByZero("same-slope ratio"));
                }
                Ok(time_to_range((knee_a_ns - rho * knee_b_ns) / (1.0 - rho)))
            }
        }
    }

    fn for_pair(
        (ia, ba): (usize, Behavior),
        (ib, bb): (usize, Behavior),
        geo: &[SliceGeometry],
    ) -> Option<Estimator> {
        use Behavior::*;
        let (ga, gb) = (&geo[ia], &geo[ib]);
        let trapez_rise = |ramp: usize, plat: usize| {
            let (g, w) = (&geo[ramp], geo[plat].plateau_ns);
            Estimator::Trapez {
                ramp,
                plateau: plat,
                t0_ns: g.rise_ns - w,
                tl_ns: w,
            }
        };
        let trapez_fall = |ramp: usize, plat: usize| {
            let (g, w) = (&geo[ramp], geo[plat].plateau_ns);
            Estimator::Trapez {
                ramp,
                plateau: plat,
                t0_ns: g.end_ns + w,
                tl_ns: -w,
            }
        };
        let triangle = |rise: usize, fall: usize| {
            let span = geo[fall].end_ns - geo[rise].rise_ns;
            Estimator::Triangle {
                ramp: rise,
                other: fall,
                t0_ns: geo[rise].rise_ns - span,
                tl_ns: span,
            }
        };
        match (ba, bb) {
            (Rising, Plateau) => Some(trapez_rise(ia, ib)),
            (Plateau, Rising) => Some(trapez_rise(ib, ia)),
            (Falling, Plateau) => Some(trapez_fall(ia, ib)),
            (Plateau, Falling) => Some(trapez_fall(ib, ia)),
            (Rising, Falling) => Some(triangle(ia, ib)),
            (Falling, Rising) => Some(triangle(ib, ia)),
            (Rising, Rising) if ga.rise_ns != gb.rise_ns => Some(Estimator::SameSlope {
                a: ia,
                b: ib,
                knee_a_ns: ga.rise_ns,
                knee_b_ns: gb.rise_ns,
            }),
            (Falling, Falling) if ga.end_ns != gb.end_ns => Some(Estimator::SameSlope {
                a: ia,
                b: ib,
                knee_a_ns: ga.end_ns,
                knee_b_ns: gb.end_ns,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Estimator::Trapez {
                ramp,
                plateau,
                t0_ns,
                tl_ns,
            } => write!(f, "trapez(s{}/s{};t0={t0_ns};tL={tl_ns})", ramp + 1, plateau + 1),
            Estimator::Triangle {
                ramp,
                other,
                t0_ns,
                tl_ns,
            } => write!(f, "triangle(s{}/s{};t0={t0_ns};tL={tl_ns})", ramp + 1, other + 1),
            Estimator::SameSlope {
                a,
                b,
                knee_a_ns,
                knee_b_ns,
            } => write!(f, "sameslope(s{}/s{};ka={knee_a_ns};kb={knee_b_ns})", a + 1, b + 1),
        }
    }
}

/// Rectangular-slice corners in two-way time (ns).
#[derive(Debug, Clone, Copy)]
struct SliceGeometry {
    rise_ns: f64,
    plateau_ns: f64,
    end_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub r_lo: f64,
    pub r_hi: f64,
    pub behaviors: Vec<Behavior>,
    pub estimators: Vec<Estimator>,
}

/// Partition of the distance axis into behaviour-constant sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionTable {
    sections: Vec<Section>,
    pulses: Vec<f64>,
}

impl SectionTable {
    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn slice_count(&self) -> usize {
        self.pulses.len()
    }

    /// Sections overlapping the open interval `(lo, hi)`.
    pub fn overlapping(&self, lo: f64, hi: f64) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(move |s| s.r_lo < hi && s.r_hi > lo)
    }

    /// Audit dump: `r_lo,r_hi,behaviors,estimators`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r_lo,r_hi,behaviors,estimators")?;
        for s in &self.sections {
            let behaviors: Vec<&str> = s.behaviors.iter().map(|b| b.tag()).collect();
            let est: Vec<String> = s.estimators.iter().map(|e| e.to_string()).collect();
            writeln!(w, "{},{},{},{}", s.r_lo, s.r_hi, behaviors.join("|"), est.join("|"))?;
        }
        Ok(())
    }
}

/// Builds the section table for rectangular slices given in delay order.
///
/// Boundaries are the union of every slice's RIP corners. When at least two
/// slices overlap somewhere, the table is restricted to the span from the
/// first to the last section with two or more lit slices: single-slice
/// margins carry no ratio information.
pub fn build_section_table(slices: &[SliceConfig]) -> Result<SectionTable> {
    if slices.is_empty() {
        return Err(Error::Empty("slice list"));
    }
    let breakpoints = slices.iter().map(rip_breakpoints).collect::<Result<Vec<_>>>()?;
    let geo: Vec<SliceGeometry> = slices
        .iter()
        .map(|s| SliceGeometry {
            rise_ns: s.delay_ns,
            plateau_ns: s.pulse.width_ns().min(s.gate.width_ns()),
            end_ns: s.delay_ns + s.pulse.width_ns() + s.gate.width_ns(),
        })
        .collect();

    let mut bounds: Vec<f64> = breakpoints
        .iter()
        .flat_map(|b| [b.rise_start, b.plateau_start, b.fall_start, b.fall_end])
        .collect();
    bounds.sort_by(|a, b| a.total_cmp(b));
    bounds.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let behavior_at = |r: f64| -> Vec<Behavior> {
        breakpoints
            .iter()
            .map(|b| {
                if r <= b.rise_start || r >= b.fall_end {
                    Behavior::Dark
                } else if r < b.plateau_start {
                    Behavior::Rising
                } else if r < b.fall_start {
                    Behavior::Plateau
                } else {
                    Behavior::Falling
                }
            })
            .collect()
    };

    let mut raw: Vec<(f64, f64, Vec<Behavior>)> = vec![];
    for w in bounds.windows(2) {
        let behaviors = behavior_at(0.5 * (w[0] + w[1]));
        match raw.last_mut() {
            Some(last) if last.2 == behaviors => last.1 = w[1],
            _ => raw.push((w[0], w[1], behaviors)),
        }
    }

    let lit = |b: &[Behavior]| b.iter().filter(|x| x.is_lit()).count();
    let first = raw.iter().position(|s| lit(&s.2) >= 2);
    let last = raw.iter().rposition(|s| lit(&s.2) >= 2);
    if let (Some(a), Some(b)) = (first, last) {
        raw = raw[a..=b].to_vec();
    }

    let sections = raw
        .into_iter()
        .map(|(r_lo, r_hi, behaviors)| {
            let estimators = (0..behaviors.len().saturating_sub(1))
                .filter(|&j| behaviors[j].is_lit() && behaviors[j + 1].is_lit())
                .filter_map(|j| {
                    Estimator::for_pair((j, behaviors[j]), (j + 1, behaviors[j + 1]), &geo)
                })
                .collect();
            Section {
                r_lo,
                r_hi,
                behaviors,
                estimators,
            }
        })
        .collect();

    Ok(SectionTable {
        sections,
        pulses: slices.iter().map(|s| s.pulses as f64).collect(),
    })
}

/// Tuning of the baseline's section identification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions {
    /// Gray value below which a slice counts as dark.
    pub dark_floor: f64,
    /// How far (m) an estimate may fall outside its section and still count.
    pub section_slack_m: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            dark_floor: 6.0,
            section_slack_m: 0.5,
        }
    }
}

/// Piecewise baseline estimate, or `None` when no section explains the
/// observation.
///
/// Every section whose estimators read only lit slices is tried; an estimate
/// counts when it lands inside the section that produced it. Estimates from
/// the same slice pair are merged first, then pairs are averaged.
pub fn baseline_estimate(intensities: &[f64], table: &SectionTable, opts: &BaselineOptions) -> Option<f64> {
    if intensities.len() != table.slice_count() {
        return None;
    }
    let lit: Vec<bool> = intensities.iter().map(|&v| v >= opts.dark_floor).collect();
    let q: Vec<f64> = intensities.iter().zip(&table.pulses).map(|(v, p)| v / p).collect();

    // (pair key, sum, count)
    let mut per_pair: Vec<((usize, usize), f64, usize)> = vec![];
    for section in &table.sections {
        for est in &section.estimators {
            let (a, b) = est.slices();
            if !(lit[a] && lit[b]) {
                continue;
            }
            let Ok(r) = est.evaluate(&q) else { continue };
            if !r.is_finite()
                || r < section.r_lo - opts.section_slack_m
                || r > section.r_hi + opts.section_slack_m
            {
                continue;
            }
            let key = (a.min(b), a.max(b));
            match per_pair.iter_mut().find(|p| p.0 == key) {
                Some(p) => {
                    p.1 += r;
                    p.2 += 1;
                }
                None => per_pair.push((key, r, 1)),
            }
        }
    }
    if per_pair.is_empty() {
        return None;
    }
    let n = per_pair.len() as f64;
    Some(per_pair.iter().map(|p| p.1 / p.2 as f64).sum::<f64>() / n)
}
