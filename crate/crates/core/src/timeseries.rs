//! Multivariate series, min-max scaling, stride-1 sliding windows and
//! point-adjusted window labels.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n × m` readings (row = timestamp, column = channel) with optional
/// per-point anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    channels: Vec<String>,
    values: Vec<f64>,
    n: usize,
    point_labels: Option<Vec<u8>>,
}

impl TimeSeries {
    /// Builds a series from row-major values. `values.len()` must be `n * m`
    /// for `m = channels.len()`.
    pub fn new(
        name: impl Into<String>,
        channels: Vec<String>,
        values: Vec<f64>,
        point_labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let m = channels.len();
        if m == 0 {
            return Err(Error::invalid("time series needs at least one channel"));
        }
        if values.is_empty() || !values.len().is_multiple_of(m) {
            return Err(Error::invalid(format!(
                "{} values do not form whole rows of width {m}",
                values.len()
            )));
        }
        let n = values.len() / m;
        if let Some(labels) = &point_labels {
            if labels.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    actual: labels.len(),
                });
            }
            if let Some(bad) = labels.iter().position(|&l| l > 1) {
                return Err(Error::DataQuality(format!(
                    "point label {} at row {bad} is not 0/1",
                    labels[bad]
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            channels,
            values,
            n,
            point_labels,
        })
    }

    /// Convenience constructor for a single unnamed channel.
    pub fn univariate(values: Vec<f64>, point_labels: Option<Vec<u8>>) -> Result<Self> {
        Self::new("series", vec!["value".to_string()], values, point_labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    /// Number of timestamps.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of channels.
    pub fn width(&self) -> usize {
        self.channels.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.width();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn point_labels(&self) -> Option<&[u8]> {
        self.point_labels.as_deref()
    }

    /// Copies out rows `range` as a new series.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n {
            return Err(Error::invalid(format!(
                "row range {range:?} invalid for series of length {}",
                self.n
            )));
        }
        let m = self.width();
        Self::new(
            self.name.clone(),
            self.channels.clone(),
            self.values[range.start * m..range.end * m].to_vec(),
            self.point_labels
                .as_ref()
                .map(|l| l[range.clone()].to_vec()),
        )
    }

    fn check_finite(&self) -> Result<()> {
        let m = self.width();
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::DataQuality(format!(
                "non-finite value at row {}, channel '{}'",
                i / m,
                self.channels[i % m]
            ))),
            None => Ok(()),
        }
    }
}

/// Per-channel minimum and maximum fitted on some rows of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxRecord {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxRecord {
    /// Fits on every row.
    pub fn fit(series: &TimeSeries) -> Result<Self> {
        Self::fit_rows(series, 0..series.len())
    }

    /// Fits on rows `range` only (e.g. a training split).
    pub fn fit_rows(series: &TimeSeries, range: Range<usize>) -> Result<Self> {
        series.check_finite()?;
        if range.start >= range.end || range.end > series.len() {
            return Err(Error::invalid(format!(
                "cannot fit min/max on rows {range:?}"
            )));
        }
        let m = series.width();
        let mut mins = vec![f64::INFINITY; m];
        let mut maxs = vec![f64::NEG_INFINITY; m];
        for i in range {
            for (c, &v) in series.row(i).iter().enumerate() {
                mins[c] = mins[c].min(v);
                maxs[c] = maxs[c].max(v);
            }
        }
        Ok(Self { mins, maxs })
    }

    /// Scales every channel into `[0, 1]`, clamping values outside the fitted
    /// range. Constant channels map to zero.
    pub fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        series.check_finite()?;
        let m = series.width();
        if self.mins.len() != m {
            return Err(Error::ShapeMismatch {
                expected: self.mins.len(),
                actual: m,
            });
        }
        let values = series
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.scale(i % m, v))
            .collect();
        TimeSeries::new(
            series.name.clone(),
            series.channels.clone(),
            values,
            series.point_labels.clone(),
        )
    }

    fn scale(&self, channel: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[channel], self.maxs[channel]);
        let span = hi - lo;
        if span <= 0.0 {
            return 0.0;
        }
        ((v - lo) / span).clamp(0.0, 1.0)
    }
}

/// Fits a min/max record on the whole series and applies it.
pub fn minmax_normalize(series: &TimeSeries) -> Result<(TimeSeries, MinMaxRecord)> {
    let record = MinMaxRecord::fit(series)?;
    let scaled = record.apply(series)?;
    Ok((scaled, record))
}

/// A window is anomalous iff it contains at least one anomalous point.
pub fn point_adjust_label(point_labels: &[u8]) -> u8 {
    u8::from(point_labels.contains(&1))
}

/// `τ` consecutive rows of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Row-major `τ × m` values.
    pub data: Vec<f64>,
    pub start_index: usize,
    pub label: u8,
}

/// All stride-1 windows of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSequence {
    windows: Vec<Window>,
    tau: usize,
    width: usize,
}

impl WindowSequence {
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Channels per row.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Flattened input size `τ · m`.
    pub fn input_len(&self) -> usize {
        self.tau * self.width
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.windows.iter().map(|w| w.label).collect()
    }

    /// Keeps the windows in `range`.
    pub fn slice(&self, range: Range<usize>) -> WindowSequence {
        WindowSequence {
            windows: self.windows[range].to_vec(),
            tau: self.tau,
            width: self.width,
        }
    }

    /// Keeps the windows matching `keep`.
    pub fn filter(&self, keep: impl Fn(&Window) -> bool) -> WindowSequence {
        WindowSequence {
            windows: self.windows.iter().filter(|w| keep(w)).cloned().collect(),
            tau: self.tau,
            width: self.width,
        }
    }
}

/// Splits a series into `n − τ + 1` windows with stride 1. Window `i` covers
/// rows `i..i+τ`; labels are point-adjusted when point labels exist.
pub fn make_windows(series: &TimeSeries, tau: usize) -> Result<WindowSequence> {
    let n = series.len();
    if tau < 1 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    if tau > n {
        return Err(Error::invalid(format!(
            "window length {tau} exceeds series length {n}"
        )));
    }
    let m = series.width();
    let windows = (0..=n - tau)
        .map(|i| Window {
            data: series.values[i * m..(i + tau) * m].to_vec(),
            start_index: i,
            label: series
                .point_labels()
                .map_or(0, |l| point_adjust_label(&l[i..i + tau])),
        })
        .collect();
    Ok(WindowSequence {
        windows,
        tau,
        width: m,
    })
}

/// Describes which CSV columns hold features and labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    /// Feature columns in order; when absent every column except the label
    /// and `ignore_columns` is a feature.
    pub feature_columns: Option<Vec<String>>,
    pub label_column: Option<String>,
    /// Columns to skip when features are inferred (timestamps, ids).
    pub ignore_columns: Vec<String>,
    /// Maps label text such as `"Attack"` to 0/1; unmapped text must parse
    /// as an integer 0 or 1.
    pub label_values: BTreeMap<String, u8>,
}

/// Reads a headered CSV with one row per timestamp.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 1,
                message: format!("missing column '{name}'"),
            })
    };

    let label_idx = schema.label_column.as_deref().map(find).transpose()?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, h)| Some(*i) != label_idx && !schema.ignore_columns.contains(h))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no feature columns".into(),
        });
    }
    let feature_idx = feature_names
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (&idx, name) in feature_idx.iter().zip(&feature_names) {
            let text = &record[idx];
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column '{name}': cannot parse '{text}' as a number"),
            })?;
            values.push(v);
        }
        if let Some(idx) = label_idx {
            labels.push(parse_label(&record[idx], &schema.label_values, row)?);
        }
    }
    if values.is_empty() {
        return Err(Error::Parse {
            row: 2,
            message: "file has no data rows".into(),
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    TimeSeries::new(name, feature_names, values, label_idx.map(|_| labels))
}

fn parse_label(text: &str, mapping: &BTreeMap<String, u8>, row: usize) -> Result<u8> {
    if let Some(&v) = mapping.get(text) {
        return Ok(v);
    }
    match text.parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(Error::Parse {
            row,
            message: format!("label '{text}' is neither 0/1 nor a mapped value"),
        }),
    }
}

/// Serializes a series in the layout `load_csv` reads, with a trailing
/// `label` column when point labels exist.
pub fn write_csv<W: std::io::Write>(series: &TimeSeries, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = series.channels.iter().map(String::as_str).collect();
    if series.point_labels.is_some() {
        header.push("label");
    }
    writer.write_record(&header)?;
    for i in 0..series.len() {
        let mut record: Vec<String> = series.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &series.point_labels {
            record.push(labels[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn channel(v: &[f64]) -> TimeSeries {
        TimeSeries::univariate(v.to_vec(), None).unwrap()
    }

    #[test]
    fn minmax_maps_endpoints() {
        let (s, rec) = minmax_normalize(&channel(&[2.0, 4.0, 6.0])).unwrap();
        assert_eq!(s.values(), &[0.0, 0.5, 1.0]);
        assert_eq!(rec.mins, vec![2.0]);
        assert_eq!(rec.maxs, vec![6.0]);
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let (s, _) = minmax_normalize(&channel(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(s.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn held_out_values_are_clamped() {
        let (_, rec) = minmax_normalize(&channel(&[0.0, 1.0])).unwrap();
        let held = rec.apply(&channel(&[1.5, -3.0, 0.25])).unwrap();
        assert_eq!(held.values(), &[1.0, 0.0, 0.25]);
    }

    #[test]
    fn non_finite_rejected() {
        let err = minmax_normalize(&channel(&[1.0, f64::NAN])).unwrap_err();
        assert!(matches!(err, Error::DataQuality(_)));
    }

    #[test]
    fn multichannel_scales_independently() {
        let s = TimeSeries::new(
            "x",
            vec!["a".into(), "b".into()],
            vec![0.0, 10.0, 2.0, 20.0],
            None,
        )
        .unwrap();
        let (norm, _) = minmax_normalize(&s).unwrap();
        assert_eq!(norm.values(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn window_counts() {
        let s = channel(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(make_windows(&s, 3).unwrap().len(), 3);
        let full = make_windows(&s, 5).unwrap();
        assert_eq!(full.len(), 1);
        assert_eq!(full.windows()[0].data, s.values());
        assert!(make_windows(&s, 6).is_err());
        assert!(make_windows(&s, 0).is_err());
    }

    #[test]
    fn window_labels_are_point_adjusted() {
        let s = TimeSeries::univariate(vec![0.0; 4], Some(vec![0, 0, 1, 0])).unwrap();
        assert_eq!(make_windows(&s, 2).unwrap().labels(), vec![0, 1, 1]);
    }

    #[test]
    fn point_adjust_cases() {
        assert_eq!(point_adjust_label(&[0, 0, 1]), 1);
        assert_eq!(point_adjust_label(&[0, 0, 0]), 0);
        assert_eq!(point_adjust_label(&[1, 1, 1]), 1);
    }

    #[test]
    fn invalid_labels_rejected() {
        assert!(TimeSeries::univariate(vec![0.0, 1.0], Some(vec![0, 2])).is_err());
        assert!(TimeSeries::univariate(vec![0.0, 1.0], Some(vec![0])).is_err());
    }

    #[test]
    fn csv_errors_carry_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,label\n1.0,0\nxyz,1\n").unwrap();
        let schema = CsvSchema {
            label_column: Some("label".into()),
            ..Default::default()
        };
        match load_csv(&path, &schema).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            e => panic!("unexpected {e}"),
        }

        std::fs::write(&path, "a,label\n1.0,0\n2.0\n").unwrap();
        assert!(matches!(
            load_csv(&path, &schema).unwrap_err(),
            Error::Parse { row: 3, .. }
        ));

        let missing = CsvSchema {
            label_column: Some("attack".into()),
            ..Default::default()
        };
        assert!(load_csv(&path, &missing).is_err());
    }

    #[test]
    fn csv_label_mapping_and_ignored_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("swat.csv");
        std::fs::write(
            &path,
            "Timestamp,FIT101,LIT101,Normal/Attack\n\
             t0,1.5,2.0,Normal\n\
             t1,1.6,2.1,Attack\n",
        )
        .unwrap();
        let schema = CsvSchema {
            label_column: Some("Normal/Attack".into()),
            ignore_columns: vec!["Timestamp".into()],
            label_values: [("Normal".to_string(), 0), ("Attack".to_string(), 1)].into(),
            ..Default::default()
        };
        let s = load_csv(&path, &schema).unwrap();
        assert_eq!(s.channels(), &["FIT101", "LIT101"]);
        assert_eq!(s.values(), &[1.5, 2.0, 1.6, 2.1]);
        assert_eq!(s.point_labels(), Some(&[0u8, 1][..]));
    }

    proptest! {
        #[test]
        fn window_count_identity(n in 1usize..200, tau_frac in 0.0f64..1.0) {
            let tau = 1 + ((n - 1) as f64 * tau_frac) as usize;
            let s = channel(&vec![0.5; n]);
            let w = make_windows(&s, tau).unwrap();
            prop_assert_eq!(w.len(), n - tau + 1);
            for pair in w.windows().windows(2) {
                prop_assert_eq!(&pair[0].data[1..], &pair[1].data[..tau - 1]);
            }
        }

        #[test]
        fn normalization_idempotent(v in proptest::collection::vec(-1e6f64..1e6, 1..60)) {
            let (once, _) = minmax_normalize(&channel(&v)).unwrap();
            let (twice, _) = minmax_normalize(&once).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn point_adjust_monotone(
            labels in proptest::collection::vec(0u8..2, 2..40),
            flip in 0usize..40,
            tau in 1usize..6,
        ) {
            let n = labels.len();
            prop_assume!(tau <= n);
            let before = TimeSeries::univariate(vec![0.0; n], Some(labels.clone())).unwrap();
            let mut flipped = labels;
            flipped[flip % n] = 1;
            let after = TimeSeries::univariate(vec![0.0; n], Some(flipped)).unwrap();
            let a = make_windows(&before, tau).unwrap().labels();
            let b = make_windows(&after, tau).unwrap().labels();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn csv_round_trip(
            rows in proptest::collection::vec((-1e9f64..1e9, 0u8..2), 1..30)
        ) {
            let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let labels: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let s = TimeSeries::new("rt", vec!["v".into()], values, Some(labels)).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            write_csv(&s, std::fs::File::create(&path).unwrap()).unwrap();
            let schema = CsvSchema { label_column: Some("label".into()), ..Default::default() };
            let back = load_csv(&path, &schema).unwrap();
            prop_assert_eq!(back.values(), s.values());
            prop_assert_eq!(back.point_labels(), s.point_labels());
        }
    }
}
