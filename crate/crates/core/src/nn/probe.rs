//! Inference on raw triples and an exhaustive probe of the learned function.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use super::model::NetworkModel;
use crate::dataset::{passes_prefilter, standardize_triple};

/// Probe triples keep every value strictly below this.
pub const PROBE_MAX_EXCLUSIVE: u8 = 250;
/// Probe triples need a spread strictly above this.
pub const PROBE_MIN_SPREAD: u8 = 6;
/// Number of triples accepted by [`is_probe_triple`].
pub const PROBE_TRIPLE_COUNT: u64 = 10_425_510;

/// Range (m) for a raw triple, or `None` when the prefilter rejects it.
pub fn predict_depth(model: &NetworkModel, s: [u8; 3]) -> Option<f64> {
    if !passes_prefilter(s) {
        return None;
    }
    let x = standardize_triple(s.map(f64::from)).ok()?;
    model.forward(&x).ok().filter(|r| r.is_finite())
}

/// All values below 250, spread above 6, and the middle slice not the
/// strict minimum.
pub fn is_probe_triple(s: [u8; 3]) -> bool {
    let max = s[0].max(s[1]).max(s[2]);
    let min = s[0].min(s[1]).min(s[2]);
    max < PROBE_MAX_EXCLUSIVE && max - min > PROBE_MIN_SPREAD && !(s[1] < s[0] && s[1] < s[2])
}

/// Visits every probe triple in lexicographic order.
pub fn for_each_probe_triple(mut f: impl FnMut([u8; 3])) {
    for a in 0..PROBE_MAX_EXCLUSIVE {
        for b in 0..PROBE_MAX_EXCLUSIVE {
            for c in 0..PROBE_MAX_EXCLUSIVE {
                let s = [a, b, c];
                if is_probe_triple(s) {
                    f(s);
                }
            }
        }
    }
}

pub fn count_probe_triples() -> u64 {
    (0..PROBE_MAX_EXCLUSIVE)
        .into_par_iter()
        .map(|a| {
            let mut n = 0u64;
            for b in 0..PROBE_MAX_EXCLUSIVE {
                for c in 0..PROBE_MAX_EXCLUSIVE {
                    n += is_probe_triple([a, b, c]) as u64;
                }
            }
            n
        })
        .sum()
}

/// Mean max-normalised intensities of the triples mapped into one range bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeBin {
    pub r_center: f64,
    pub count: u64,
    pub mean_normalized: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTable {
    pub bin_width_m: f64,
    pub evaluated: u64,
    pub bins: Vec<ProbeBin>,
}

impl ProbeTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r_center,count,s1,s2,s3")?;
        for b in &self.bins {
            let [a, c, d] = b.mean_normalized;
            writeln!(w, "{},{},{},{},{}", b.r_center, b.count, a, c, d)?;
        }
        Ok(())
    }
}

type BinAcc = BTreeMap<i64, (u64, [f64; 3])>;

/// Evaluates the model on every probe triple and averages the
/// max-normalised triples per predicted-range bin.
pub fn probe_learned_function(model: &NetworkModel, bin_width_m: f64) -> ProbeTable {
    assert!(bin_width_m > 0.0, "bin width must be positive");
    // Partial sums per leading value, merged in order for reproducible sums.
    let partials: Vec<(u64, BinAcc)> = (0..PROBE_MAX_EXCLUSIVE)
        .into_par_iter()
        .map(|a| {
            let mut acc = BinAcc::new();
            let mut n = 0;
            for b in 0..PROBE_MAX_EXCLUSIVE {
                for c in 0..PROBE_MAX_EXCLUSIVE {
                    let s = [a, b, c];
                    if !is_probe_triple(s) {
                        continue;
                    }
                    n += 1;
                    let Ok(x) = standardize_triple(s.map(f64::from)) else { continue };
                    let Ok(r) = model.forward(&x) else { continue };
                    if !r.is_finite() {
                        continue;
                    }
                    let max = f64::from(a.max(b).max(c));
                    let e = acc.entry((r / bin_width_m).floor() as i64).or_insert((0, [0.0; 3]));
                    e.0 += 1;
                    for (sum, &v) in e.1.iter_mut().zip(&s) {
                        *sum += f64::from(v) / max;
                    }
                }
            }
            (n, acc)
        })
        .collect();

    let mut total = BinAcc::new();
    let mut evaluated = 0;
    for (n, acc) in partials {
        evaluated += n;
        for (k, (cnt, sums)) in acc {
            let e = total.entry(k).or_insert((0, [0.0; 3]));
            e.0 += cnt;
            for (sum, v) in e.1.iter_mut().zip(sums) {
                *sum += v;
            }
        }
    }
    let bins = total
        .into_iter()
        .map(|(k, (count, sums))| ProbeBin {
            r_center: (k as f64 + 0.5) * bin_width_m,
            count,
            mean_normalized: sums.map(|v| v / count as f64),
        })
        .collect();
    ProbeTable {
        bin_width_m,
        evaluated,
        bins,
    }
}
