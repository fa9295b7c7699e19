//! Parsing and preparation of Cleveland-format clinical records: mean
//! imputation, label binarization, integer encodings for the embedding
//! path, standardization statistics for the baseline path, and seeded
//! train/test splits.
//!
//! Input format: 14 comma-separated decimal fields per line, `?` marking a
//! missing cell. Cells 1-13 are the clinical attributes, cell 14 the raw
//! disease grade (0 = absent, 1-4 = present).

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{IndexMatrix, Tensor};

/// Number of clinical attributes per record.
pub const NUM_FEATURES: usize = 13;
/// Attributes plus the label cell.
pub const NUM_CELLS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub enum IngestError {
    /// Wrong number of cells on a line (1-based line number).
    Arity {
        line: usize,
        found: usize,
    },
    /// Unparseable numeric cell.
    BadNumber {
        line: usize,
        cell: usize,
        text: String,
    },
    /// Raw label missing or outside 0..=4.
    BadLabel {
        line: usize,
        value: Option<f64>,
    },
    /// An attribute column with no observed values cannot be imputed.
    EmptyColumn {
        feature: &'static str,
    },
    /// Continuous features need at least two quantile bins.
    TooFewBins(usize),
    /// A categorical value absent from the encoding map.
    UnseenCategory {
        feature: &'static str,
        value: f64,
    },
    /// Split ratio would leave one side empty.
    EmptySplit {
        n: usize,
        ratio: f64,
    },
    NoRecords,
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::Arity { line, found } => {
                write!(f, "line {line}: expected {NUM_CELLS} fields, found {found}")
            }
            IngestError::BadNumber { line, cell, text } => {
                write!(
                    f,
                    "line {line}, field {}: unparseable number {text:?}",
                    cell + 1
                )
            }
            IngestError::BadLabel { line, value } => match value {
                Some(v) => write!(f, "line {line}: label {v} outside the raw range 0..=4"),
                None => write!(f, "line {line}: missing label"),
            },
            IngestError::EmptyColumn { feature } => {
                write!(
                    f,
                    "feature {feature}: every value is missing, cannot impute"
                )
            }
            IngestError::TooFewBins(b) => {
                write!(f, "bins_per_continuous = {b}, need at least 2")
            }
            IngestError::UnseenCategory { feature, value } => {
                write!(
                    f,
                    "feature {feature}: value {value} absent from the encoding map"
                )
            }
            IngestError::EmptySplit { n, ratio } => {
                write!(
                    f,
                    "split ratio {ratio} leaves an empty side for {n} samples"
                )
            }
            IngestError::NoRecords => write!(f, "no records parsed"),
        }
    }
}

impl std::error::Error for IngestError {}

/// One raw data line: 13 attribute cells plus the label cell, each either a
/// number or missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub cells: [Option<f64>; NUM_CELLS],
}

impl RawRecord {
    pub fn label(&self) -> Option<f64> {
        self.cells[NUM_CELLS - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Categorical,
    Continuous,
}

/// Static description of one clinical attribute: display name, kind, and the
/// documented value range (raw Cleveland coding for the categorical codes).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub kind: FeatureKind,
    pub valid_range: (f64, f64),
}

impl<'de> Deserialize<'de> for FeatureSpec {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            name: String,
            kind: FeatureKind,
            valid_range: (f64, f64),
        }
        let raw = Raw::deserialize(deserializer)?;
        // the attribute set is closed; resolve back to the static name
        let known = FEATURE_SPECS
            .iter()
            .find(|s| s.name == raw.name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown feature {:?}", raw.name)))?;
        Ok(FeatureSpec {
            name: known.name,
            kind: raw.kind,
            valid_range: raw.valid_range,
        })
    }
}

/// The 13 attributes in file column order.
pub const FEATURE_SPECS: [FeatureSpec; NUM_FEATURES] = [
    FeatureSpec {
        name: "age",
        kind: FeatureKind::Continuous,
        valid_range: (29.0, 77.0),
    },
    FeatureSpec {
        name: "gender",
        kind: FeatureKind::Categorical,
        valid_range: (0.0, 1.0),
    },
    FeatureSpec {
        name: "chest_pain",
        kind: FeatureKind::Categorical,
        valid_range: (1.0, 4.0),
    },
    FeatureSpec {
        name: "resting_bp",
        kind: FeatureKind::Continuous,
        valid_range: (94.0, 200.0),
    },
    FeatureSpec {
        name: "cholesterol",
        kind: FeatureKind::Continuous,
        valid_range: (126.0, 564.0),
    },
    FeatureSpec {
        name: "fasting_blood_sugar",
        kind: FeatureKind::Categorical,
        valid_range: (0.0, 1.0),
    },
    FeatureSpec {
        name: "resting_ecg",
        kind: FeatureKind::Categorical,
        valid_range: (0.0, 2.0),
    },
    FeatureSpec {
        name: "max_heart_rate",
        kind: FeatureKind::Continuous,
        valid_range: (71.0, 202.0),
    },
    FeatureSpec {
        name: "exercise_angina",
        kind: FeatureKind::Categorical,
        valid_range: (0.0, 1.0),
    },
    FeatureSpec {
        name: "st_depression",
        kind: FeatureKind::Continuous,
        valid_range: (0.0, 6.2),
    },
    FeatureSpec {
        name: "st_slope",
        kind: FeatureKind::Categorical,
        valid_range: (1.0, 3.0),
    },
    FeatureSpec {
        name: "vessels_colored",
        kind: FeatureKind::Categorical,
        valid_range: (0.0, 3.0),
    },
    FeatureSpec {
        name: "thallium_scan",
        kind: FeatureKind::Categorical,
        valid_range: (3.0, 7.0),
    },
];

/// Parses newline-delimited, comma-separated records; `?` marks a missing
/// cell. Empty lines are skipped. A line with the wrong cell count is
/// rejected with its 1-based line number.
pub fn parse_records(text: &str) -> Result<Vec<RawRecord>, IngestError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').collect();
        if cells.len() != NUM_CELLS {
            return Err(IngestError::Arity {
                line: line_no,
                found: cells.len(),
            });
        }
        let mut record = RawRecord {
            cells: [None; NUM_CELLS],
        };
        for (c, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell == "?" {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| IngestError::BadNumber {
                line: line_no,
                cell: c,
                text: cell.to_string(),
            })?;
            record.cells[c] = Some(value);
        }
        records.push(record);
    }
    Ok(records)
}

/// Replaces every missing attribute cell by the column's arithmetic mean
/// over the observed entries; for categorical features the mean is rounded
/// to the nearest observed value (ties toward the smaller value). Returns
/// the imputed records and the 13 per-column fill values used.
pub fn impute_missing(
    records: &[RawRecord],
) -> Result<(Vec<RawRecord>, [f64; NUM_FEATURES]), IngestError> {
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    let mut fill = [0.0; NUM_FEATURES];
    for (f, spec) in FEATURE_SPECS.iter().enumerate() {
        let observed: Vec<f64> = records.iter().filter_map(|r| r.cells[f]).collect();
        if observed.is_empty() {
            return Err(IngestError::EmptyColumn { feature: spec.name });
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        fill[f] = match spec.kind {
            FeatureKind::Continuous => mean,
            FeatureKind::Categorical => nearest_observed(mean, &observed),
        };
    }
    let mut imputed = records.to_vec();
    for r in &mut imputed {
        for (cell, &value) in r.cells[..NUM_FEATURES].iter_mut().zip(&fill) {
            if cell.is_none() {
                *cell = Some(value);
            }
        }
    }
    Ok((imputed, fill))
}

/// Nearest observed value to `target`; equidistant candidates round toward
/// the smaller value.
fn nearest_observed(target: f64, observed: &[f64]) -> f64 {
    let mut distinct: Vec<f64> = observed.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut best = distinct[0];
    let mut best_dist = (target - best).abs();
    for &v in &distinct[1..] {
        let d = (target - v).abs();
        if d < best_dist {
            best = v;
            best_dist = d;
        }
    }
    best
}

/// Maps the raw 0-4 disease grade to a binary label: 0 stays 0, 1-4 become 1.
pub fn binarize_labels(records: &mut [RawRecord]) -> Result<(), IngestError> {
    for (i, r) in records.iter_mut().enumerate() {
        let line = i + 1;
        let raw = r.cells[NUM_CELLS - 1];
        match raw {
            Some(v) if v.fract() == 0.0 && (0.0..=4.0).contains(&v) => {
                r.cells[NUM_CELLS - 1] = Some(if v == 0.0 { 0.0 } else { 1.0 });
            }
            other => {
                return Err(IngestError::BadLabel { line, value: other });
            }
        }
    }
    Ok(())
}

/// Per-feature value-to-index encoder. Categorical features enumerate their
/// distinct observed values; continuous features are quantile-binned with
/// cut points from the training data (outer bins unbounded, so unseen
/// values clamp).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureEncoder {
    Categorical { values: Vec<f64> },
    Continuous { cuts: Vec<f64> },
}

impl FeatureEncoder {
    pub fn cardinality(&self) -> usize {
        match self {
            FeatureEncoder::Categorical { values } => values.len(),
            FeatureEncoder::Continuous { cuts } => cuts.len() + 1,
        }
    }
}

/// Disjoint offset encoding over all 13 features; indices are contiguous
/// `0..vocab_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub encoders: Vec<FeatureEncoder>,
    pub offsets: Vec<usize>,
    pub vocab_size: usize,
}

impl EncodingMap {
    /// Encodes one attribute value into its global index.
    pub fn encode_value(&self, feature: usize, value: f64) -> Result<usize, IngestError> {
        let local = match &self.encoders[feature] {
            FeatureEncoder::Categorical { values } => values
                .iter()
                .position(|&v| v == value)
                .ok_or(IngestError::UnseenCategory {
                    feature: FEATURE_SPECS[feature].name,
                    value,
                })?,
            FeatureEncoder::Continuous { cuts } => cuts.iter().filter(|&&c| value > c).count(),
        };
        Ok(self.offsets[feature] + local)
    }

    /// Encodes a full 13-attribute record.
    pub fn encode_record(&self, cells: &[f64]) -> Result<Vec<usize>, IngestError> {
        cells
            .iter()
            .enumerate()
            .map(|(f, &v)| self.encode_value(f, v))
            .collect()
    }

    /// Inverse of the offset layout: which feature and local slot an index
    /// belongs to.
    pub fn decode(&self, index: usize) -> Option<(usize, usize)> {
        for (f, &off) in self.offsets.iter().enumerate() {
            let card = self.encoders[f].cardinality();
            if index >= off && index < off + card {
                return Some((f, index - off));
            }
        }
        None
    }
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = q * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < m {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Builds the offset encoding from imputed training records. Each
/// categorical feature contributes its distinct observed values; each
/// continuous feature contributes exactly `bins_per_continuous` quantile
/// bins.
pub fn build_encoding(
    train_records: &[RawRecord],
    bins_per_continuous: usize,
) -> Result<EncodingMap, IngestError> {
    if bins_per_continuous < 2 {
        return Err(IngestError::TooFewBins(bins_per_continuous));
    }
    if train_records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    let mut encoders = Vec::with_capacity(NUM_FEATURES);
    let mut offsets = Vec::with_capacity(NUM_FEATURES);
    let mut next = 0usize;
    for (f, spec) in FEATURE_SPECS.iter().enumerate() {
        let mut column: Vec<f64> = train_records
            .iter()
            .map(|r| r.cells[f].expect("records must be imputed before encoding"))
            .collect();
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let encoder = match spec.kind {
            FeatureKind::Categorical => {
                let mut values = column;
                values.dedup();
                FeatureEncoder::Categorical { values }
            }
            FeatureKind::Continuous => {
                let cuts = (1..bins_per_continuous)
                    .map(|j| quantile_sorted(&column, j as f64 / bins_per_continuous as f64))
                    .collect();
                FeatureEncoder::Continuous { cuts }
            }
        };
        offsets.push(next);
        next += encoder.cardinality();
        encoders.push(encoder);
    }
    Ok(EncodingMap {
        encoders,
        offsets,
        vocab_size: next,
    })
}

/// Per-column mean and population standard deviation over the given rows.
pub fn standardize_stats(records: &[RawRecord], rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut means = vec![0.0; NUM_FEATURES];
    let mut stds = vec![0.0; NUM_FEATURES];
    for f in 0..NUM_FEATURES {
        let mut sum = 0.0;
        for &r in rows {
            sum += records[r].cells[f].expect("records must be imputed");
        }
        let mean = sum / n;
        let mut ss = 0.0;
        for &r in rows {
            let d = records[r].cells[f].unwrap() - mean;
            ss += d * d;
        }
        means[f] = mean;
        stds[f] = (ss / n).sqrt();
    }
    (means, stds)
}

/// Z-scores every record column with the given statistics; a zero standard
/// deviation falls back to a divisor of 1.
pub fn standardize(records: &[RawRecord], means: &[f64], stds: &[f64]) -> Tensor {
    let n = records.len();
    let mut data = Vec::with_capacity(n * NUM_FEATURES);
    for r in records {
        for f in 0..NUM_FEATURES {
            let x = r.cells[f].expect("records must be imputed");
            let divisor = if stds[f] == 0.0 { 1.0 } else { stds[f] };
            data.push((x - means[f]) / divisor);
        }
    }
    Tensor::new(vec![n, NUM_FEATURES], data)
}

/// Disjoint train/test index lists drawn from a seeded permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    /// FNV-1a hash of the test indices: a compact fingerprint recorded in
    /// manifests and comparison rows so runs on different splits never get
    /// conflated.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf29ce484222325;
        for &i in &self.test_idx {
            for byte in (i as u64).to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        }
        format!("{hash:016x}")
    }
}

/// Uniformly random permutation from the seeded generator; the first
/// `floor(ratio * n)` indices form the training set.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<SplitIndices, IngestError> {
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(IngestError::EmptySplit { n, ratio });
    }
    let n_train = (ratio * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(IngestError::EmptySplit { n, ratio });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let test_idx = perm.split_off(n_train);
    Ok(SplitIndices {
        train_idx: perm,
        test_idx,
        seed,
    })
}

/// Imputed, encoded, and standardized dataset with the statistics that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub n_samples: usize,
    /// Integer index rows for the embedding path.
    pub int_features: IndexMatrix,
    /// Z-scored rows for the baseline path (training-row statistics).
    pub std_features: Tensor,
    pub labels: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Everything the pipeline derives from one raw file + split configuration.
/// Serializes to the dataset cache JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub feature_specs: Vec<FeatureSpec>,
    pub dataset: EncodedDataset,
    pub encoding: EncodingMap,
    pub split: SplitIndices,
    /// Per-column values substituted for missing cells.
    pub impute_values: Vec<f64>,
    pub bins_per_continuous: usize,
    pub split_ratio: f64,
}

impl PreparedData {
    pub fn train_labels(&self) -> Vec<f64> {
        self.split
            .train_idx
            .iter()
            .map(|&i| self.dataset.labels[i])
            .collect()
    }

    pub fn test_labels(&self) -> Vec<f64> {
        self.split
            .test_idx
            .iter()
            .map(|&i| self.dataset.labels[i])
            .collect()
    }
}

/// Full preparation pipeline: parse, impute, binarize, split, then build the
/// encoding and standardization statistics on the training rows only and
/// apply them to every record.
pub fn prepare(
    text: &str,
    bins_per_continuous: usize,
    ratio: f64,
    seed: u64,
) -> Result<PreparedData, IngestError> {
    let records = parse_records(text)?;
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    let (mut records, impute_values) = impute_missing(&records)?;
    binarize_labels(&mut records)?;
    let split = split(records.len(), ratio, seed)?;

    let train_records: Vec<RawRecord> = split
        .train_idx
        .iter()
        .map(|&i| records[i].clone())
        .collect();
    let encoding = build_encoding(&train_records, bins_per_continuous)?;
    let (means, stds) = standardize_stats(&records, &split.train_idx);

    let mut int_data = Vec::with_capacity(records.len() * NUM_FEATURES);
    for r in &records {
        let cells: Vec<f64> = r.cells[..NUM_FEATURES].iter().map(|c| c.unwrap()).collect();
        int_data.extend(encoding.encode_record(&cells)?);
    }
    let int_features = IndexMatrix::new(records.len(), NUM_FEATURES, int_data);
    let std_features = standardize(&records, &means, &stds);
    let labels: Vec<f64> = records.iter().map(|r| r.label().unwrap()).collect();

    Ok(PreparedData {
        feature_specs: FEATURE_SPECS.to_vec(),
        dataset: EncodedDataset {
            n_samples: records.len(),
            int_features,
            std_features,
            labels,
            means,
            stds,
        },
        encoding,
        split,
        impute_values: impute_values.to_vec(),
        bins_per_continuous,
        split_ratio: ratio,
    })
}
