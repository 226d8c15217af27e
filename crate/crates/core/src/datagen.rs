//! Synthetic location-shift data and CSV ingestion.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `Y = X + b + noise`, `X ~ N(mu_x, sigma_x^2)`, noise a normal truncated
/// to `mu_eps +- 3 sigma_eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub b: f64,
    pub mu_x: f64,
    pub sigma_x: f64,
    pub mu_eps: f64,
    pub sigma_eps: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            b: 5.0,
            mu_x: 0.0,
            sigma_x: 10.0,
            mu_eps: 0.0,
            sigma_eps: 5.0,
        }
    }
}

impl SyntheticSpec {
    /// Half-width of the noise support.
    pub fn truncation(&self) -> f64 {
        3.0 * self.sigma_eps
    }

    /// One truncated-normal noise draw, by rejection from the untruncated normal.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(0.0, self.sigma_eps).expect("positive sigma_eps");
        let t = self.truncation();
        loop {
            let z: f64 = normal.sample(rng);
            if z.abs() <= t {
                return self.mu_eps + z;
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.sigma_x) || !ok(self.sigma_eps) {
            return Err(Error::invalid("synthetic sigma_x and sigma_eps must be positive"));
        }
        Ok(())
    }
}

/// Feature mean/std learned on a training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Row-major feature matrix plus responses.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Vec<f64>,
    n_features: usize,
    responses: Vec<f64>,
    column_names: Vec<String>,
    standardization: Option<Standardization>,
}

impl TabularDataset {
    /// `features` is row-major with `n_features` columns; `column_names`
    /// lists the feature columns followed by the response column.
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        responses: Vec<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if features.len() != n_features * responses.len() {
            return Err(Error::invalid(format!(
                "feature matrix has {} values, expected {} rows x {} columns",
                features.len(),
                responses.len(),
                n_features
            )));
        }
        if column_names.len() != n_features + 1 {
            return Err(Error::invalid("column names must cover features plus the response"));
        }
        if features.iter().chain(&responses).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Self {
            features,
            n_features,
            responses,
            column_names,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.responses[i]))
    }

    /// Rows `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        let mut responses = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            responses.push(self.responses[i]);
        }
        Self {
            features,
            n_features: self.n_features,
            responses,
            column_names: self.column_names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// First `k` rows and the rest.
    pub fn split_at(&self, k: usize) -> (Self, Self) {
        let k = k.min(self.len());
        let head: Vec<usize> = (0..k).collect();
        let tail: Vec<usize> = (k..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// A copy with one extra row appended.
    pub fn with_row(&self, x: &[f64], y: f64) -> Self {
        debug_assert_eq!(x.len(), self.n_features);
        let mut out = self.clone();
        out.features.extend_from_slice(x);
        out.responses.push(y);
        out
    }

    /// Hex prefix of a SHA-256 digest over the raw values; identical data
    /// gives an identical hash.
    pub fn data_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_features as u64).to_le_bytes());
        for v in self.features.iter().chain(&self.responses) {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Learns per-feature z-score statistics on this dataset.
    pub fn fit_standardization(&self) -> Standardization {
        let n = self.len().max(1) as f64;
        let d = self.n_features;
        let mut means = vec![0.0; d];
        for (x, _) in self.iter() {
            for (m, v) in means.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut stds = vec![0.0; d];
        for (x, _) in self.iter() {
            for ((s, v), m) in stds.iter_mut().zip(x).zip(&means) {
                *s += (v - m).powi(2) / n;
            }
        }
        let stds = stds
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Standardization { means, stds }
    }

    /// Attaches statistics without touching the values.
    pub fn with_standardization(mut self, stats: Standardization) -> Self {
        self.standardization = Some(stats);
        self
    }

    /// Applies `z = (x - mean) / std` column-wise and records the statistics.
    pub fn standardize(&mut self, stats: &Standardization) {
        let d = self.n_features;
        for (j, v) in self.features.iter_mut().enumerate() {
            let c = j % d;
            *v = (*v - stats.means[c]) / stats.stds[c];
        }
        self.standardization = Some(stats.clone());
    }
}

/// Draws `n` i.i.d. rows from the synthetic process.
pub fn gen_synthetic<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    n: usize,
    rng: &mut R,
) -> Result<TabularDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("synthetic sample size must be positive"));
    }
    let x_dist = Normal::new(spec.mu_x, spec.sigma_x).expect("validated sigma_x");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = x_dist.sample(rng);
        let noise = spec.sample_noise(rng);
        xs.push(x);
        ys.push(x + spec.b + noise);
    }
    TabularDataset::new(xs, 1, ys, vec!["x".into(), "y".into()])
}

/// Seeded shuffle-and-split parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

/// Train/test partitions from a CSV file.
#[derive(Debug, Clone)]
pub struct CsvSplit {
    pub train: TabularDataset,
    pub test: TabularDataset,
    /// Rows dropped because a selected column was missing.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "?" | "NA" | "na" | "NaN" | "nan" | "null")
}

/// Loads `feature_columns` and `response_column` from a headed, comma
/// separated CSV and splits it with a seeded shuffle.
pub fn load_csv(
    path: impl AsRef<Path>,
    response_column: &str,
    feature_columns: &[String],
    split: SplitSpec,
) -> Result<CsvSplit> {
    let path = path.as_ref();
    if !(0.0..=1.0).contains(&split.test_fraction) {
        return Err(Error::invalid(format!(
            "test fraction must lie in [0, 1], got {}",
            split.test_fraction
        )));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in {}", path.display())))
    };
    let mut wanted: Vec<(usize, String)> = feature_columns
        .iter()
        .map(|c| Ok((find(c)?, c.clone())))
        .collect::<Result<_>>()?;
    wanted.push((find(response_column)?, response_column.to_string()));

    let mut features = Vec::new();
    let mut responses = Vec::new();
    let mut dropped = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = wanted.iter().map(|(i, _)| record.get(*i).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }
        let mut values = Vec::with_capacity(cells.len());
        for (cell, (_, name)) in cells.iter().zip(&wanted) {
            let v: f64 = cell.trim().parse().map_err(|e| Error::Parse {
                row,
                column: name.clone(),
                message: format!("`{cell}`: {e}"),
            })?;
            values.push(v);
        }
        responses.push(values.pop().expect("response column"));
        features.extend(values);
    }
    let names = wanted.into_iter().map(|(_, n)| n).collect();
    let all = TabularDataset::new(features, feature_columns.len(), responses, names)?;

    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed));
    let n_test = (split.test_fraction * all.len() as f64).round() as usize;
    let (test_idx, train_idx) = idx.split_at(n_test);
    Ok(CsvSplit {
        train: all.select(train_idx),
        test: all.select(test_idx),
        dropped_rows: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn noise_stays_in_support() {
        let spec = SyntheticSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000_000 {
            assert!(spec.sample_noise(&mut rng).abs() <= 15.0);
        }
    }

    #[test]
    fn synthetic_moments() {
        let spec = SyntheticSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let d = gen_synthetic(&spec, n, &mut rng).unwrap();
        let resid: Vec<f64> = d.iter().map(|(x, y)| y - x[0]).collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - 5.0).abs() < 4.0 * sd / (n as f64).sqrt(), "mean {mean}");

        let xs: Vec<f64> = (0..n).map(|i| d.row(i)[0]).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        // SE of the sample sd is about sigma / sqrt(2n).
        assert!((sx - 10.0).abs() < 4.0 * 10.0 / (2.0 * n as f64).sqrt(), "sd {sx}");
    }

    #[test]
    fn synthetic_is_seeded() {
        let spec = SyntheticSpec::default();
        let a = gen_synthetic(&spec, 50, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = gen_synthetic(&spec, 50, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.data_hash(), b.data_hash());
        assert!(gen_synthetic(&spec, 0, &mut ChaCha8Rng::seed_from_u64(4)).is_err());
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn cols(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn csv_split_sizes() {
        let mut body = String::from("a,b,y\n");
        for i in 0..1994 {
            body.push_str(&format!("{i},{},{}\n", i * 2, i as f64 * 0.5));
        }
        let f = write_csv(&body);
        let s = load_csv(f.path(), "y", &cols(&["a", "b"]), SplitSpec { test_fraction: 0.5, seed: 3 })
            .unwrap();
        assert_eq!((s.train.len(), s.test.len()), (997, 997));

        let all = load_csv(f.path(), "y", &cols(&["a"]), SplitSpec { test_fraction: 0.0, seed: 3 })
            .unwrap();
        assert_eq!((all.train.len(), all.test.len()), (1994, 0));

        let again = load_csv(f.path(), "y", &cols(&["a", "b"]), SplitSpec { test_fraction: 0.5, seed: 3 })
            .unwrap();
        assert_eq!(s.train, again.train);
        assert_eq!(s.test, again.test);
    }

    #[test]
    fn csv_drops_missing_and_reports_errors() {
        let f = write_csv("a,y,unused\n1,2,x\n,3,x\n4,?,x\n5,6,\n");
        let s = load_csv(f.path(), "y", &cols(&["a"]), SplitSpec { test_fraction: 0.0, seed: 0 })
            .unwrap();
        assert_eq!(s.dropped_rows, 2);
        assert_eq!(s.train.len(), 2);

        let err = load_csv(f.path(), "z", &cols(&["a"]), SplitSpec { test_fraction: 0.0, seed: 0 });
        assert!(matches!(err, Err(Error::Schema(_))));

        let bad = write_csv("a,y\n1,2\n3,abc\n");
        let err = load_csv(bad.path(), "y", &cols(&["a"]), SplitSpec { test_fraction: 0.0, seed: 0 });
        match err {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "y");
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let err = load_csv("/nonexistent/file.csv", "y", &[], SplitSpec { test_fraction: 0.0, seed: 0 });
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn standardization_uses_given_stats() {
        let mut d = TabularDataset::new(
            vec![1.0, 10.0, 3.0, 30.0],
            2,
            vec![0.0, 1.0],
            cols(&["a", "b", "y"]),
        )
        .unwrap();
        let stats = d.fit_standardization();
        assert_eq!(stats.means, vec![2.0, 20.0]);
        assert_eq!(stats.stds, vec![1.0, 10.0]);
        d.standardize(&stats);
        assert_eq!(d.row(0), &[-1.0, -1.0]);
        assert_eq!(d.row(1), &[1.0, 1.0]);
        assert!(d.standardization().is_some());
    }
}
