use std::cmp::Ordering;
use std::ops::Range;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered temporal domains and the number of samples drawn in each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalDomainSchedule {
    domains: Vec<f64>,
    counts: Vec<usize>,
}

impl TemporalDomainSchedule {
    pub fn new(domains: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::Data("schedule has no domains".into()));
        }
        if domains.len() != counts.len() {
            return Err(Error::Data("domain and count lists differ in length".into()));
        }
        if domains.iter().any(|d| !d.is_finite()) {
            return Err(Error::Data("non-finite domain index".into()));
        }
        if domains.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("domain indices are not strictly increasing".into()));
        }
        if counts.contains(&0) {
            return Err(Error::Data("empty domain in schedule".into()));
        }
        Ok(Self { domains, counts })
    }

    pub fn domains(&self) -> &[f64] {
        &self.domains
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Row range of domain `k` in a dataset grouped by this schedule.
    pub fn rows(&self, k: usize) -> Range<usize> {
        let start: usize = self.counts[..k].iter().sum();
        start..start + self.counts[k]
    }
}

/// A plain bundle of rows: features, labels and domain indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub c: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Samples {
        Samples {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            c: rows.iter().map(|&r| self.c[r]).collect(),
        }
    }

    /// Concatenate two row bundles with matching feature width.
    pub fn concat(&self, other: &Samples) -> Samples {
        Samples {
            x: ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()]).expect("feature widths differ"),
            y: self.y.iter().chain(&other.y).copied().collect(),
            c: self.c.iter().chain(&other.c).copied().collect(),
        }
    }
}

/// Labelled rows with temporal domain indices, grouped by domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDataset {
    rows: Samples,
    num_classes: usize,
    schedule: TemporalDomainSchedule,
}

fn canonical_cmp(s: &Samples, a: usize, b: usize) -> Ordering {
    s.c[a]
        .total_cmp(&s.c[b])
        .then_with(|| {
            let (ra, rb) = (s.x.row(a), s.x.row(b));
            ra.iter()
                .zip(rb.iter())
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| s.y[a].cmp(&s.y[b]))
}

impl DriftDataset {
    /// Build from rows already grouped by ascending domain.
    pub fn new(x: Array2<f64>, y: Vec<usize>, c: Vec<f64>, num_classes: usize) -> Result<Self> {
        let rows = Samples { x, y, c };
        if rows.x.nrows() != rows.y.len() || rows.y.len() != rows.c.len() {
            return Err(Error::Data("feature, label and domain columns differ in length".into()));
        }
        let mut domains = Vec::new();
        let mut counts = Vec::new();
        for &c in &rows.c {
            match domains.last() {
                Some(&d) if d == c => *counts.last_mut().unwrap() += 1,
                _ => {
                    domains.push(c);
                    counts.push(1);
                }
            }
        }
        let schedule = TemporalDomainSchedule::new(domains, counts)
            .map_err(|e| Error::Data(format!("rows are not grouped by ascending domain: {e}")))?;
        let ds = Self { rows, num_classes, schedule };
        ds.validate()?;
        Ok(ds)
    }

    /// Build from rows in any order, sorting them canonically by domain,
    /// then features, then label.
    pub fn from_unsorted(x: Array2<f64>, y: Vec<usize>, c: Vec<f64>, num_classes: usize) -> Result<Self> {
        if x.nrows() != y.len() || y.len() != c.len() {
            return Err(Error::Data("feature, label and domain columns differ in length".into()));
        }
        let rows = Samples { x, y, c };
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| canonical_cmp(&rows, a, b));
        let sorted = rows.select(&order);
        Self::new(sorted.x, sorted.y, sorted.c, num_classes)
    }

    /// Re-sort rows canonically.
    pub fn canonicalize(&self) -> Result<Self> {
        Self::from_unsorted(self.rows.x.clone(), self.rows.y.clone(), self.rows.c.clone(), self.num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Data("a dataset needs at least two classes".into()));
        }
        if self.rows.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        let mut seen = vec![false; self.num_classes];
        for (i, &y) in self.rows.y.iter().enumerate() {
            if y >= self.num_classes {
                return Err(Error::Data(format!("row {i}: label {y} exceeds class count {}", self.num_classes)));
            }
            seen[y] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("class {k} never occurs")));
        }
        if self.schedule.total() != self.rows.len() {
            return Err(Error::Data("schedule counts do not match row count".into()));
        }
        for k in 0..self.schedule.len() {
            let d = self.schedule.domains()[k];
            if self.rows.c[self.schedule.rows(k)].iter().any(|&c| c != d) {
                return Err(Error::Data(format!("rows of domain {d} are not contiguous")));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> &Samples {
        &self.rows
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.rows.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.rows.y
    }

    pub fn domains(&self) -> &[f64] {
        &self.rows.c
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.rows.x.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn schedule(&self) -> &TemporalDomainSchedule {
        &self.schedule
    }

    pub fn select(&self, rows: &[usize]) -> Samples {
        self.rows.select(rows)
    }

    /// Rows whose domain index lies in `[lo, hi]`, keeping order.
    pub fn domain_window(&self, lo: f64, hi: f64) -> Result<Self> {
        let rows: Vec<usize> = (0..self.len()).filter(|&r| (lo..=hi).contains(&self.rows.c[r])).collect();
        let s = self.rows.select(&rows);
        let k = s.y.iter().copied().max().map_or(0, |m| m + 1);
        Self::new(s.x, s.y, s.c, k.max(2))
    }
}
