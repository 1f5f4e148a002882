//! Datasets, synthetic generation, stratified splitting and client partitioning.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Labelled feature matrix. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dims: usize,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dims: usize, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("dataset has no samples".into()));
        }
        if dims == 0 {
            return Err(Error::Domain("dataset has no feature columns".into()));
        }
        if class_count < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {class_count}")));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of width {dims}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Domain(format!("label {bad} outside [0, {class_count})")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite feature value".into()));
        }
        Ok(Self { features, labels, dims, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Copies the given rows, in the given order, into a new dataset with the
    /// same class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Shape(format!("row {i} out of range for {} rows", self.len())));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dims, self.class_count)
    }
}

/// Reads a headerless (or, with `header`, single-header-line) CSV file whose
/// rows are `D` feature columns followed by an integer label.
pub fn load_csv(path: impl AsRef<Path>, header: bool) -> Result<Dataset> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_csv(text.as_bytes(), header)
}

/// Parses CSV text; see [`load_csv`]. Line numbers in errors are 1-based
/// physical lines of the input.
pub fn parse_csv(input: impl Read, header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(header).flexible(true).from_reader(input);

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dims: Option<usize> = None;

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() < 2 {
            return Err(Error::Parse { line, message: format!("expected at least 2 columns, found {}", record.len()) });
        }
        let width = record.len() - 1;
        match dims {
            None => dims = Some(width),
            Some(d) if d != width => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} columns, found {}", d + 1, record.len()),
                })
            }
            Some(_) => {}
        }
        for cell in record.iter().take(width) {
            let value: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("non-numeric feature `{cell}`") })?;
            if !value.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite feature `{cell}`") });
            }
            features.push(value);
        }
        let raw = record[width].trim();
        let label: i64 =
            raw.parse().map_err(|_| Error::Parse { line, message: format!("non-integer label `{raw}`") })?;
        if label < 0 {
            return Err(Error::Domain(format!("line {line}: negative label {label}")));
        }
        labels.push(label as usize);
    }

    let dims = dims.ok_or_else(|| Error::Domain("CSV contains no data rows".into()))?;
    let class_count = labels.iter().max().map_or(0, |&m| m + 1).max(2);
    Dataset::new(features, labels, dims, class_count)
}

/// Writes `ds` in the format [`parse_csv`] reads, using the shortest
/// round-trip float representation (`1.0`, `0.25`, `1e-7`).
pub fn write_csv(ds: &Dataset, mut out: impl Write) -> io::Result<()> {
    for i in 0..ds.len() {
        let mut line = String::new();
        for v in ds.row(i) {
            line.push_str(&format!("{v:?},"));
        }
        line.push_str(&ds.labels[i].to_string());
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Parameters for isotropic Gaussian-blob data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub dims: usize,
    pub samples_per_class: usize,
    pub center_separation: f64,
    pub noise_stddev: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { class_count: 2, dims: 8, samples_per_class: 500, center_separation: 6.0, noise_stddev: 1.0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::Config("class_count must be at least 2".into()));
        }
        if self.dims < 1 {
            return Err(Error::Config("dims must be at least 1".into()));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Config("samples_per_class must be at least 2".into()));
        }
        if !(self.noise_stddev > 0.0 && self.noise_stddev.is_finite()) {
            return Err(Error::Config("noise_stddev must be positive".into()));
        }
        if !(self.center_separation >= 0.0 && self.center_separation.is_finite()) {
            return Err(Error::Config("center_separation must be non-negative".into()));
        }
        Ok(())
    }

    /// Class `c` is centred at `center_separation * e_(c mod dims)`.
    pub fn center(&self, class: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dims];
        c[class % self.dims] = self.center_separation;
        c
    }
}

/// Draws `samples_per_class` points per class, class-major order.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Purpose::Synthetic, 0, 0);
    let noise = Normal::new(0.0, spec.noise_stddev).map_err(|e| Error::Config(e.to_string()))?;
    let n = spec.class_count * spec.samples_per_class;
    let mut features = Vec::with_capacity(n * spec.dims);
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.class_count {
        let center = spec.center(class);
        for _ in 0..spec.samples_per_class {
            features.extend(center.iter().map(|&m| m + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    Dataset::new(features, labels, spec.dims, spec.class_count)
}

/// Stratified split. Per class, `round(test_fraction * class_size)` samples
/// (clamped to `[1, class_size - 1]`) go to the test set. Both outputs keep
/// the original row order.
pub fn split_train_test(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds, test_fraction, seed)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Index form of [`split_train_test`]: `(train, test)`, each sorted.
pub fn split_indices(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction {test_fraction} outside (0, 1)")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng::stream(seed, Purpose::Split, 0, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::Stratification { class, count: members.len() });
        }
        let n_test = ((test_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Disjoint, complete assignment of sample indices to clients. Each index
/// set is sorted ascending and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignments: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates the partition invariants over `[0, n)`.
    pub fn new(mut assignments: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::Domain("partition has no clients".into()));
        }
        let mut seen = vec![false; n];
        for (k, set) in assignments.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(Error::Domain(format!("client {k} has no samples")));
            }
            set.sort_unstable();
            for &i in set.iter() {
                if i >= n {
                    return Err(Error::Domain(format!("index {i} out of range [0, {n})")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Domain(format!("index {i} assigned twice")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Domain(format!("index {missing} not assigned")));
        }
        Ok(Self { assignments })
    }

    pub fn clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn client(&self, k: usize) -> &[usize] {
        &self.assignments[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }
}

/// Shuffles all indices and deals them round-robin to `clients` clients.
pub fn partition_iid(ds: &Dataset, clients: usize, seed: u64) -> Result<Partition> {
    let n = ds.len();
    if clients == 0 || clients > n {
        return Err(Error::Capacity { samples: n, clients });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Partition, 0, 0));
    let mut assignments = vec![Vec::with_capacity(n / clients + 1); clients];
    for (pos, idx) in order.into_iter().enumerate() {
        assignments[pos % clients].push(idx);
    }
    Partition::new(assignments, n)
}

/// Label-skewed partition: for every class a proportion vector is drawn from
/// a symmetric Dirichlet(`alpha`) and that class's samples are dealt to
/// clients accordingly. Clients left empty each take one sample from the
/// currently largest client.
pub fn partition_dirichlet(ds: &Dataset, clients: usize, alpha: f64, seed: u64) -> Result<Partition> {
    let n = ds.len();
    if clients == 0 || clients > n {
        return Err(Error::Capacity { samples: n, clients });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("dirichlet alpha must be positive, got {alpha}")));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng::stream(seed, Purpose::Partition, 1, 0);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); clients];
    for mut members in by_class {
        let mut weights: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            // Every gamma draw underflowed (tiny alpha): the Dirichlet limit puts
            // all mass on one coordinate.
            weights.iter_mut().for_each(|w| *w = 0.0);
            weights[rng.random_range(0..clients)] = 1.0;
        } else {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let m = members.len();
        let mut start = 0;
        let mut cumulative = 0.0;
        for (k, w) in weights.iter().enumerate() {
            cumulative += w;
            let end = if k + 1 == clients { m } else { ((cumulative * m as f64).round() as usize).min(m) };
            let end = end.max(start);
            assignments[k].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    for k in 0..clients {
        if assignments[k].is_empty() {
            let donor = (0..clients)
                .max_by(|&a, &b| assignments[a].len().cmp(&assignments[b].len()).then(b.cmp(&a)))
                .expect("at least one client");
            let stolen = assignments[donor].pop().expect("donor has samples since N >= K");
            assignments[k].push(stolen);
        }
    }
    Partition::new(assignments, n)
}
