//! Distance-binned error statistics, estimator comparison and per-pixel
//! depth-map rendering.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::classic::{baseline_estimate, BaselineOptions, SectionTable};
use crate::dataset::passes_prefilter;
use crate::error::{Error, Result};
use crate::nn::{predict_depth, NetworkModel};
use crate::raster::{write_depth_csv, write_depth_pgm16, Raster};
use crate::scene::{Sample, SliceImageSet};

/// Error statistics of the samples whose true range falls in one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBin {
    pub center: f64,
    pub mae: f64,
    /// Population standard deviation of the absolute error.
    pub std: f64,
    /// `mae / center`.
    pub rel_mae: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedError {
    pub bin_width: f64,
    /// Non-empty bins in increasing order.
    pub bins: Vec<ErrorBin>,
}

impl BinnedError {
    /// Bin containing `r`, if it holds any samples.
    pub fn bin_at(&self, r: f64) -> Option<&ErrorBin> {
        let k = (r / self.bin_width).floor();
        self.bins.iter().find(|b| (b.center / self.bin_width - 0.5).round() == k)
    }

    /// Bins whose whole interval lies within `[lo, hi]`.
    pub fn bins_within(&self, lo: f64, hi: f64) -> impl Iterator<Item = &ErrorBin> {
        let half = self.bin_width / 2.0;
        self.bins
            .iter()
            .filter(move |b| b.center - half >= lo - 1e-9 && b.center + half <= hi + 1e-9)
    }

    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_center,mae,std,rel_mae,count")?;
        for b in &self.bins {
            writeln!(w, "{},{},{},{},{}", b.center, b.mae, b.std, b.rel_mae, b.count)?;
        }
        Ok(())
    }
}

fn bin_index(r: f64, width: f64) -> i64 {
    (r / width).floor() as i64
}

/// Bins `(estimate, truth)` pairs by truth into `[k w, (k+1) w)`.
/// Pairs with a non-finite estimate are skipped.
pub fn binned_mae(pairs: &[(f64, f64)], bin_width: f64) -> Result<BinnedError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid("bin width", format!("must be > 0, got {bin_width}")));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for &(est, truth) in pairs {
        if est.is_finite() && truth.is_finite() {
            groups.entry(bin_index(truth, bin_width)).or_default().push((est - truth).abs());
        }
    }
    let bins = groups
        .into_iter()
        .map(|(k, errs)| {
            let n = errs.len() as f64;
            let mae = errs.iter().sum::<f64>() / n;
            let var = errs.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / n;
            let center = (k as f64 + 0.5) * bin_width;
            ErrorBin {
                center,
                mae,
                std: var.sqrt(),
                rel_mae: mae / center,
                count: errs.len(),
            }
        })
        .collect();
    Ok(BinnedError { bin_width, bins })
}

/// Anything that maps a raw triple to a range or declines.
pub trait DepthEstimator: Sync {
    fn name(&self) -> &str;
    fn estimate(&self, s: [u8; 3]) -> Option<f64>;
}

pub struct NetworkEstimator<'a> {
    pub model: &'a NetworkModel,
}

impl DepthEstimator for NetworkEstimator<'_> {
    fn name(&self) -> &str {
        "network"
    }

    fn estimate(&self, s: [u8; 3]) -> Option<f64> {
        predict_depth(self.model, s)
    }
}

/// Section-table baseline, behind the same prefilter as the network.
pub struct BaselineEstimator<'a> {
    pub table: &'a SectionTable,
    pub options: BaselineOptions,
}

impl DepthEstimator for BaselineEstimator<'_> {
    fn name(&self) -> &str {
        "baseline"
    }

    fn estimate(&self, s: [u8; 3]) -> Option<f64> {
        if !passes_prefilter(s) {
            return None;
        }
        baseline_estimate(&s.map(f64::from), self.table, &self.options)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub name: String,
    /// Share of samples that received an estimate.
    pub coverage: f64,
    pub binned: Option<BinnedError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub bin_width: f64,
    pub reports: Vec<EstimatorReport>,
}

impl Comparison {
    /// Long format, one row per (estimator, bin) over the union of bins.
    /// Bins an estimator never reached get `nan` errors and count 0.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "estimator,coverage,bin_center,mae,std,rel_mae,count")?;
        let mut centers: Vec<f64> = self
            .reports
            .iter()
            .filter_map(|r| r.binned.as_ref())
            .flat_map(|b| b.bins.iter().map(|x| x.center))
            .collect();
        centers.sort_by(f64::total_cmp);
        centers.dedup();
        for r in &self.reports {
            for &c in &centers {
                let bin = r.binned.as_ref().and_then(|b| b.bins.iter().find(|x| x.center == c));
                match bin {
                    Some(b) => writeln!(w, "{},{},{},{},{},{},{}", r.name, r.coverage, c, b.mae, b.std, b.rel_mae, b.count)?,
                    None => writeln!(w, "{},{},{},nan,nan,nan,0", r.name, r.coverage, c)?,
                }
            }
        }
        Ok(())
    }
}

/// Runs every estimator over `test` and bins its errors by true range.
pub fn compare_estimators(
    estimators: &[&dyn DepthEstimator],
    test: &[Sample],
    bin_width: f64,
) -> Result<Comparison> {
    if estimators.is_empty() {
        return Err(Error::Empty("estimators"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let reports = estimators
        .iter()
        .map(|est| {
            let pairs: Vec<(f64, f64)> = test
                .par_iter()
                .filter_map(|s| est.estimate(s.s).map(|r| (r, s.r)))
                .collect();
            let binned = if pairs.is_empty() {
                None
            } else {
                Some(binned_mae(&pairs, bin_width)?)
            };
            Ok(EstimatorReport {
                name: est.name().to_string(),
                coverage: pairs.len() as f64 / test.len() as f64,
                binned,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { bin_width, reports })
}

/// Per-pixel range in meters; `NaN` marks pixels without an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub depth: Raster<f64>,
}

impl DepthMap {
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.depth.data().iter().map(|d| d.is_finite()).collect()
    }

    pub fn write_pgm16(&self, path: impl AsRef<Path>) -> Result<()> {
        write_depth_pgm16(path, &self.depth)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_depth_csv(path, &self.depth)
    }
}

/// Applies `estimator` to every pixel; output resolution equals input
/// resolution.
pub fn render_depth_map(estimator: &dyn DepthEstimator, slices: &SliceImageSet) -> DepthMap {
    let (w, h) = slices.dims();
    let data: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            estimator
                .estimate(slices.triple(i))
                .filter(|r| r.is_finite() && *r > 0.0)
                .unwrap_or(f64::NAN)
        })
        .collect();
    DepthMap {
        depth: Raster::from_vec(w, h, data).expect("dims from slices"),
    }
}
