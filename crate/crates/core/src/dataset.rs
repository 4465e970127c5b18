//! Sample ingestion and preprocessing: prefiltering, the four dataset
//! variants, per-sample standardisation and the train/validation split.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::Sample;

/// Gray values strictly above this are saturated.
pub const SATURATION_LEVEL: u8 = 250;
/// Triples whose max - min is strictly below this are unilluminated.
pub const MIN_CONTRAST: u8 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub samples: Vec<Sample>,
    pub source: String,
}

impl RawDataset {
    pub fn new(samples: Vec<Sample>, source: impl Into<String>) -> Self {
        Self {
            samples,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Reads a `s1,s2,s3,r` CSV with header.
pub fn load_samples(path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: display.clone(),
        line,
        reason,
    };

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(parse_err(1, "empty file".into()));
    }
    let names: Vec<&str> = headers.iter().collect();
    if names != ["s1", "s2", "s3", "r"] {
        return Err(parse_err(1, format!("expected header `s1,s2,s3,r`, got `{}`", names.join(","))));
    }

    let mut samples = vec![];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut s = [0u8; 3];
        for (j, v) in s.iter_mut().enumerate() {
            let field = &record[j];
            let value: i64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("s{} = `{field}` is not an integer", j + 1)))?;
            *v = u8::try_from(value)
                .map_err(|_| parse_err(line, format!("s{} = {value} outside 0-255", j + 1)))?;
        }
        let r: f64 = record[3]
            .parse()
            .map_err(|_| parse_err(line, format!("r = `{}` is not a number", &record[3])))?;
        if !(r.is_finite() && r > 0.0) {
            return Err(parse_err(line, format!("r = {r} must be finite and > 0")));
        }
        samples.push(Sample::new(s, r));
    }
    if samples.is_empty() {
        return Err(parse_err(1, "no samples".into()));
    }
    Ok(RawDataset::new(samples, display))
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_samples_to(&mut out, samples).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_samples_to<W: Write>(mut w: W, samples: &[Sample]) -> std::io::Result<()> {
    writeln!(w, "s1,s2,s3,r")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.s[0], s.s[1], s.s[2], s.r)?;
    }
    Ok(())
}

pub fn is_saturated(s: [u8; 3]) -> bool {
    s.iter().any(|&v| v > SATURATION_LEVEL)
}

pub fn is_unilluminated(s: [u8; 3]) -> bool {
    let max = *s.iter().max().unwrap();
    let min = *s.iter().min().unwrap();
    max - min < MIN_CONTRAST
}

/// Neither saturated nor unilluminated.
pub fn passes_prefilter(s: [u8; 3]) -> bool {
    !is_saturated(s) && !is_unilluminated(s)
}

/// Counts removed at each stage of preprocessing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineReport {
    pub input: usize,
    pub saturated: usize,
    pub unilluminated: usize,
    pub after_prefilter: usize,
    pub groups: usize,
    pub deviation_removed: usize,
    pub occurrence_removed: usize,
    pub output: usize,
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input = {}", self.input)?;
        writeln!(f, "removed.saturated = {}", self.saturated)?;
        writeln!(f, "removed.unilluminated = {}", self.unilluminated)?;
        writeln!(f, "after_prefilter = {}", self.after_prefilter)?;
        writeln!(f, "groups = {}", self.groups)?;
        writeln!(f, "removed.deviation = {}", self.deviation_removed)?;
        writeln!(f, "removed.occurrences = {}", self.occurrence_removed)?;
        writeln!(f, "output = {}", self.output)
    }
}

/// Drops saturated and unilluminated samples, preserving order.
pub fn prefilter(data: &RawDataset) -> RawDataset {
    prefilter_with_report(data).0
}

pub fn prefilter_with_report(data: &RawDataset) -> (RawDataset, PipelineReport) {
    let mut report = PipelineReport {
        input: data.len(),
        ..Default::default()
    };
    let samples: Vec<Sample> = data
        .samples
        .iter()
        .filter(|s| {
            if is_saturated(s.s) {
                report.saturated += 1;
                false
            } else if is_unilluminated(s.s) {
                report.unilluminated += 1;
                false
            } else {
                true
            }
        })
        .copied()
        .collect();
    report.after_prefilter = samples.len();
    report.output = samples.len();
    (RawDataset::new(samples, data.source.clone()), report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantTag {
    Dataset1,
    Dataset2,
    Dataset3,
    Dataset4,
}

impl FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset1" => Ok(VariantTag::Dataset1),
            "dataset2" => Ok(VariantTag::Dataset2),
            "dataset3" => Ok(VariantTag::Dataset3),
            "dataset4" => Ok(VariantTag::Dataset4),
            other => Err(Error::invalid("variant", format!("unknown variant `{other}`"))),
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VariantTag::Dataset1 => "dataset1",
            VariantTag::Dataset2 => "dataset2",
            VariantTag::Dataset3 => "dataset3",
            VariantTag::Dataset4 => "dataset4",
        };
        f.write_str(s)
    }
}

/// Filtering rules of one dataset variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetVariant {
    pub tag: VariantTag,
    /// Samples further than this (m) from their group mean are dropped.
    pub max_deviation_m: f64,
    /// Groups with fewer surviving samples are dropped.
    pub min_occurrences: usize,
    /// Groups whose mean exceeds this range use the far rules (dataset3).
    pub far_cutoff_m: f64,
    pub far_max_deviation_m: f64,
}

impl DatasetVariant {
    pub fn new(tag: VariantTag) -> Self {
        Self {
            tag,
            max_deviation_m: 1.0,
            min_occurrences: 3,
            far_cutoff_m: 60.0,
            far_max_deviation_m: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_deviation_m > 0.0 && self.far_max_deviation_m > 0.0 && self.far_cutoff_m > 0.0) {
            return Err(Error::invalid("variant", "thresholds must be > 0"));
        }
        if self.min_occurrences == 0 {
            return Err(Error::invalid("variant", "minimum occurrences must be >= 1"));
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Builds one dataset variant from prefiltered samples.
///
/// Samples are grouped by exact triple. Deviations are measured once
/// against the initial group mean; the occurrence cut counts survivors.
/// Output is sorted by triple then range, except for `dataset4`, which
/// returns its input unchanged.
pub fn build_dataset(data: &RawDataset, variant: &DatasetVariant) -> RawDataset {
    build_dataset_with_report(data, variant).0
}

pub fn build_dataset_with_report(data: &RawDataset, variant: &DatasetVariant) -> (RawDataset, PipelineReport) {
    let mut report = PipelineReport {
        input: data.len(),
        after_prefilter: data.len(),
        ..Default::default()
    };
    if variant.tag == VariantTag::Dataset4 {
        report.output = data.len();
        return (data.clone(), report);
    }

    let mut groups: BTreeMap<[u8; 3], Vec<f64>> = BTreeMap::new();
    for s in &data.samples {
        groups.entry(s.s).or_default().push(s.r);
    }
    report.groups = groups.len();

    let mut out = vec![];
    for (triple, mut ranges) in groups {
        ranges.sort_by(|a, b| a.total_cmp(b));
        let initial = mean(&ranges);
        let far = variant.tag == VariantTag::Dataset3 && initial > variant.far_cutoff_m;
        let (threshold, min_count) = if far {
            (variant.far_max_deviation_m, 1)
        } else {
            (variant.max_deviation_m, variant.min_occurrences)
        };
        let survivors: Vec<f64> = ranges.iter().copied().filter(|r| (r - initial).abs() <= threshold).collect();
        report.deviation_removed += ranges.len() - survivors.len();
        if survivors.len() < min_count || survivors.is_empty() {
            report.occurrence_removed += survivors.len();
            continue;
        }
        match variant.tag {
            VariantTag::Dataset2 => out.extend(survivors.iter().map(|&r| Sample::new(triple, r))),
            _ => out.push(Sample::new(triple, mean(&survivors))),
        }
    }
    report.output = out.len();
    (RawDataset::new(out, data.source.clone()), report)
}

/// Per-sample z-scored triple with its target range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizedSample {
    pub x: [f64; 3],
    pub r: f64,
}

/// Z-scores a triple with the sample standard deviation (denominator 2).
pub fn standardize_triple(s: [f64; 3]) -> Result<[f64; 3]> {
    let mu = (s[0] + s[1] + s[2]) / 3.0;
    let var = s.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 2.0;
    let sigma = var.sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateSample);
    }
    Ok(s.map(|v| (v - mu) / sigma))
}

pub fn standardize(s: &Sample) -> Result<StandardizedSample> {
    Ok(StandardizedSample {
        x: standardize_triple(s.intensities())?,
        r: s.r,
    })
}

pub fn standardize_all(samples: &[Sample]) -> Result<Vec<StandardizedSample>> {
    samples.iter().map(standardize).collect()
}

/// Seeded shuffle, then the first `train_fraction` goes to training.
pub fn split<T: Clone>(data: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train fraction", format!("must lie in (0, 1), got {train_fraction}")));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (data.len() as f64 * train_fraction).round() as usize;
    let train = idx[..n_train].iter().map(|&i| data[i].clone()).collect();
    let val = idx[n_train..].iter().map(|&i| data[i].clone()).collect();
    Ok((train, val))
}
