//! Seeded generators for synthetic drift benchmarks and a delimited-text
//! loader for external domain-indexed tables.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::DriftDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    RotatedTwoMoons,
    IntersectingBlobs,
    BinaryLabelShift,
    SlidingCircle,
    RotatingHyperplane,
    MovingBlobs,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Benchmark::RotatedTwoMoons,
        Benchmark::IntersectingBlobs,
        Benchmark::BinaryLabelShift,
        Benchmark::SlidingCircle,
        Benchmark::RotatingHyperplane,
        Benchmark::MovingBlobs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::RotatedTwoMoons => "rotated_two_moons",
            Benchmark::IntersectingBlobs => "intersecting_blobs",
            Benchmark::BinaryLabelShift => "binary_label_shift",
            Benchmark::SlidingCircle => "sliding_circle",
            Benchmark::RotatingHyperplane => "rotating_hyperplane",
            Benchmark::MovingBlobs => "moving_blobs",
        }
    }

    pub fn generate(self, seed: u64) -> Result<DriftDataset> {
        match self {
            Benchmark::RotatedTwoMoons => rotated_two_moons(seed),
            Benchmark::IntersectingBlobs => intersecting_blobs(seed),
            Benchmark::BinaryLabelShift => binary_label_shift(seed),
            Benchmark::SlidingCircle => sliding_circle(seed),
            Benchmark::RotatingHyperplane => rotating_hyperplane(seed),
            Benchmark::MovingBlobs => moving_blobs(&MovingBlobsConfig::default(), seed),
        }
    }
}

impl std::fmt::Display for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark `{s}`")))
    }
}

/// Rows accumulated domain by domain.
struct Builder {
    d: usize,
    x: Vec<f64>,
    y: Vec<usize>,
    c: Vec<f64>,
}

impl Builder {
    fn new(d: usize) -> Self {
        Self { d, x: Vec::new(), y: Vec::new(), c: Vec::new() }
    }

    fn push(&mut self, x: &[f64], y: usize, c: f64) {
        debug_assert_eq!(x.len(), self.d);
        self.x.extend_from_slice(x);
        self.y.push(y);
        self.c.push(c);
    }

    fn finish(self, num_classes: usize) -> Result<DriftDataset> {
        let n = self.y.len();
        let x = Array2::from_shape_vec((n, self.d), self.x).map_err(|e| Error::Data(e.to_string()))?;
        DriftDataset::new(x, self.y, self.c, num_classes)
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite std")
}

pub const MOONS_DOMAINS: usize = 10;
pub const MOONS_PER_CLASS: usize = 110;
pub const MOONS_NOISE: f64 = 0.1;
pub const MOONS_STEP_DEGREES: f64 = 18.0;
/// Centroid of the unrotated two-moons layout.
pub const MOONS_CENTROID: [f64; 2] = [0.5, 0.25];

/// Unrotated, noise-free two-moons points: class 0 is the upper arc, class 1
/// the lower arc shifted right.
pub fn two_moons_base(per_class: usize) -> Vec<([f64; 2], usize)> {
    let mut out = Vec::with_capacity(2 * per_class);
    let step = if per_class > 1 { PI / (per_class - 1) as f64 } else { 0.0 };
    for i in 0..per_class {
        let t = i as f64 * step;
        out.push(([t.cos(), t.sin()], 0));
    }
    for i in 0..per_class {
        let t = i as f64 * step;
        out.push(([1.0 - t.cos(), 0.5 - t.sin()], 1));
    }
    out
}

/// Counter-clockwise rotation of `p` by `degrees` about `centre`.
pub fn rotate_about(p: [f64; 2], centre: [f64; 2], degrees: f64) -> [f64; 2] {
    let (s, c) = degrees.to_radians().sin_cos();
    let (dx, dy) = (p[0] - centre[0], p[1] - centre[1]);
    [centre[0] + c * dx - s * dy, centre[1] + s * dx + c * dy]
}

/// Ten domains of two noisy half-moons, domain `i` rotated by `18·i` degrees.
pub fn rotated_two_moons(seed: u64) -> Result<DriftDataset> {
    let mut rng = stream(seed, &[0x6d6f6f6e]);
    let noise = normal(MOONS_NOISE);
    let base = two_moons_base(MOONS_PER_CLASS);
    let mut b = Builder::new(2);
    for k in 0..MOONS_DOMAINS {
        for &(p, y) in &base {
            let noisy = [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)];
            let r = rotate_about(noisy, MOONS_CENTROID, MOONS_STEP_DEGREES * k as f64);
            b.push(&r, y, k as f64);
        }
    }
    b.finish(2)
}

pub const BLOBS_DOMAINS: usize = 14;
pub const BLOBS_PER_CLASS: usize = 40;

/// Keyframes `(domain, [centre of class 0, 1, 2], std)`; centres and stds are
/// interpolated linearly in between. The three blobs converge on the origin
/// around domain 5 and pass through each other by domain 6.
const BLOBS_KEYFRAMES: [(f64, [[f64; 2]; 3], f64); 3] = [
    (0.0, [[-3.0, 0.0], [3.0, 0.0], [0.0, 3.0]], 0.5),
    (5.0, [[-0.5, -0.3], [0.5, -0.3], [0.0, 0.4]], 0.6),
    (13.0, [[2.5, -2.0], [-2.5, -2.0], [0.0, -3.0]], 0.5),
];

/// Scripted centres and shared std of the intersecting blobs in domain `k`.
pub fn blob_centres(k: usize) -> ([[f64; 2]; 3], f64) {
    let t = k as f64;
    let seg = if t <= BLOBS_KEYFRAMES[1].0 { 0 } else { 1 };
    let (t0, c0, s0) = BLOBS_KEYFRAMES[seg];
    let (t1, c1, s1) = BLOBS_KEYFRAMES[seg + 1];
    let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    let mut out = [[0.0; 2]; 3];
    for j in 0..3 {
        for d in 0..2 {
            out[j][d] = c0[j][d] + a * (c1[j][d] - c0[j][d]);
        }
    }
    (out, s0 + a * (s1 - s0))
}

pub fn intersecting_blobs(seed: u64) -> Result<DriftDataset> {
    let mut rng = stream(seed, &[0x626c6f62]);
    let mut b = Builder::new(2);
    for k in 0..BLOBS_DOMAINS {
        let (centres, std) = blob_centres(k);
        let noise = normal(std);
        for (j, c) in centres.iter().enumerate() {
            for _ in 0..BLOBS_PER_CLASS {
                b.push(&[c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)], j, k as f64);
            }
        }
    }
    b.finish(3)
}

pub const LABEL_SHIFT_DOMAINS: usize = 10;
pub const LABEL_SHIFT_PER_DOMAIN: usize = 200;
/// Class-conditional means; both classes have identity covariance.
pub const LABEL_SHIFT_MEANS: [[f64; 2]; 2] = [[-1.5, 0.0], [1.5, 0.0]];

/// Class-1 share in domain `k`: linear from 0.95 down to 0.05.
pub fn label_shift_prior(k: usize) -> f64 {
    0.95 - 0.9 * k as f64 / (LABEL_SHIFT_DOMAINS - 1) as f64
}

pub fn binary_label_shift(seed: u64) -> Result<DriftDataset> {
    let mut rng = stream(seed, &[0x6c61626c]);
    let noise = normal(1.0);
    let mut b = Builder::new(2);
    for k in 0..LABEL_SHIFT_DOMAINS {
        let n1 = (label_shift_prior(k) * LABEL_SHIFT_PER_DOMAIN as f64).round() as usize;
        for i in 0..LABEL_SHIFT_PER_DOMAIN {
            let y = usize::from(i < n1);
            let m = LABEL_SHIFT_MEANS[y];
            b.push(&[m[0] + noise.sample(&mut rng), m[1] + noise.sample(&mut rng)], y, k as f64);
        }
    }
    b.finish(2)
}

pub const CIRCLE_DOMAINS: usize = 10;
pub const CIRCLE_PER_DOMAIN: usize = 200;
pub const CIRCLE_OUTER_RADIUS: f64 = 1.0;
pub const CIRCLE_INNER_RADIUS: f64 = 0.5;

/// Centre of the sliding circle in domain `k`; it touches the outer circle
/// from inside and advances 36 degrees per domain.
pub fn sliding_circle_centre(k: usize) -> [f64; 2] {
    let r = CIRCLE_OUTER_RADIUS - CIRCLE_INNER_RADIUS;
    let a = (36.0 * k as f64).to_radians();
    [r * a.cos(), r * a.sin()]
}

/// Label 1 when `p` lies inside (or on) the sliding circle of domain `k`.
pub fn sliding_circle_label(p: [f64; 2], k: usize) -> usize {
    let c = sliding_circle_centre(k);
    usize::from((p[0] - c[0]).hypot(p[1] - c[1]) <= CIRCLE_INNER_RADIUS)
}

/// Points uniform in the outer disk, labelled by the sliding circle.
pub fn sliding_circle(seed: u64) -> Result<DriftDataset> {
    let mut rng = stream(seed, &[0x63697263]);
    let mut b = Builder::new(2);
    for k in 0..CIRCLE_DOMAINS {
        for _ in 0..CIRCLE_PER_DOMAIN {
            let r = CIRCLE_OUTER_RADIUS * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..2.0 * PI);
            let p = [r * a.cos(), r * a.sin()];
            b.push(&p, sliding_circle_label(p, k), k as f64);
        }
    }
    b.finish(2)
}

pub const HYPERPLANE_DOMAINS: usize = 15;
pub const HYPERPLANE_PER_DOMAIN: usize = 100;
pub const HYPERPLANE_FEATURES: usize = 5;

/// Normal vector of the hyperplane in domain `k`. The first three weights
/// drift, the last two stay fixed.
pub fn hyperplane_normal(k: usize) -> [f64; HYPERPLANE_FEATURES] {
    let t = k as f64 / (HYPERPLANE_DOMAINS - 1) as f64;
    let a = t * PI / 2.0;
    [a.cos(), a.sin(), 1.0 - 2.0 * t, 0.5, -0.5]
}

/// Signed distance-like score `w · (x − 0.5)`; label 1 when non-negative.
pub fn hyperplane_score(x: &[f64], k: usize) -> f64 {
    hyperplane_normal(k).iter().zip(x).map(|(w, v)| w * (v - 0.5)).sum()
}

pub fn rotating_hyperplane(seed: u64) -> Result<DriftDataset> {
    let mut rng = stream(seed, &[0x68797065]);
    let mut b = Builder::new(HYPERPLANE_FEATURES);
    let mut x = [0.0; HYPERPLANE_FEATURES];
    for k in 0..HYPERPLANE_DOMAINS {
        for _ in 0..HYPERPLANE_PER_DOMAIN {
            x.iter_mut().for_each(|v| *v = rng.random::<f64>());
            b.push(&x, usize::from(hyperplane_score(&x, k) >= 0.0), k as f64);
        }
    }
    b.finish(2)
}

/// Gaussian clusters that each move along a fixed random direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovingBlobsConfig {
    pub domains: usize,
    pub per_class: usize,
    pub classes: usize,
    pub features: usize,
    /// Distance travelled by each centre per domain.
    pub speed: f64,
    pub std: f64,
    /// Radius of the sphere on which the initial centres are placed.
    pub spread: f64,
}

impl Default for MovingBlobsConfig {
    fn default() -> Self {
        Self { domains: 10, per_class: 50, classes: 3, features: 2, speed: 0.3, std: 0.5, spread: 2.0 }
    }
}

impl MovingBlobsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains == 0 || self.per_class == 0 || self.features == 0 || self.classes < 2 {
            return Err(Error::Config("moving blobs need positive counts and at least two classes".into()));
        }
        if !(self.std > 0.0 && self.speed >= 0.0 && self.spread >= 0.0) {
            return Err(Error::Config("moving blobs need std > 0 and non-negative speed and spread".into()));
        }
        Ok(())
    }

    /// Initial centres and unit directions drawn from the seed.
    pub fn trajectories(&self, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = stream(seed, &[0x6d6f7665, 0]);
        let unit = |rng: &mut Rng| {
            let v: Vec<f64> = (0..self.features).map(|_| normal(1.0).sample(rng)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|a| a / n).collect::<Vec<_>>()
        };
        let starts = (0..self.classes).map(|_| unit(&mut rng).into_iter().map(|a| a * self.spread).collect()).collect();
        let dirs = (0..self.classes).map(|_| unit(&mut rng)).collect();
        (starts, dirs)
    }

    pub fn centre(&self, seed: u64, class: usize, k: usize) -> Vec<f64> {
        let (starts, dirs) = self.trajectories(seed);
        starts[class].iter().zip(&dirs[class]).map(|(s, d)| s + self.speed * k as f64 * d).collect()
    }
}

pub fn moving_blobs(cfg: &MovingBlobsConfig, seed: u64) -> Result<DriftDataset> {
    cfg.validate()?;
    let (starts, dirs) = cfg.trajectories(seed);
    let mut rng = stream(seed, &[0x6d6f7665, 1]);
    let noise = normal(cfg.std);
    let mut b = Builder::new(cfg.features);
    let mut x = vec![0.0; cfg.features];
    for k in 0..cfg.domains {
        for j in 0..cfg.classes {
            for _ in 0..cfg.per_class {
                for d in 0..cfg.features {
                    x[d] = starts[j][d] + cfg.speed * k as f64 * dirs[j][d] + noise.sample(&mut rng);
                }
                b.push(&x, j, k as f64);
            }
        }
    }
    b.finish(cfg.classes)
}

/// Write `f0,…,f{d-1},label,domain` rows.
pub fn write_csv<W: Write>(ds: &DriftDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = ds.num_features();
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(d + 2);
    for i in 0..ds.len() {
        rec.clear();
        rec.extend(ds.features().row(i).iter().map(|v| v.to_string()));
        rec.push(ds.labels()[i].to_string());
        rec.push(ds.domains()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &DriftDataset, path: &Path) -> Result<()> {
    write_csv(ds, std::fs::File::create(path)?)
}

/// Parse a delimited table. Every column other than `domain_column` and
/// `target_column` is a numeric feature. Rows are sorted canonically and
/// class ids follow the sorted order of the distinct labels.
pub fn read_csv<R: Read>(input: R, domain_column: &str, target_column: &str) -> Result<DriftDataset> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}` (have: {})", header.iter().collect::<Vec<_>>().join(", "))))
    };
    let (dc, tc) = (find(domain_column)?, find(target_column)?);
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != dc && j != tc).collect();
    if feature_cols.is_empty() {
        return Err(Error::Data("no feature columns".into()));
    }
    let mut x = Vec::new();
    let mut raw_labels = Vec::new();
    let mut c = Vec::new();
    let parse = |s: &str, line: usize, col: usize| -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Data(format!("row {line}, column `{}`: `{s}` is not numeric", &header[col])))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Data(format!("row {line}, column `{}`: non-finite value", &header[col])))
        }
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Data(format!("row {line}: expected {} fields, found {}", header.len(), rec.len())));
        }
        for &j in &feature_cols {
            x.push(parse(&rec[j], line, j)?);
        }
        c.push(parse(&rec[dc], line, dc)?);
        raw_labels.push(rec[tc].to_string());
    }
    if raw_labels.is_empty() {
        return Err(Error::Data("table has no rows".into()));
    }
    let numeric: Option<Vec<f64>> = raw_labels.iter().map(|s| s.parse::<f64>().ok()).collect();
    let y: Vec<usize> = match numeric {
        Some(vals) => {
            let mut distinct = vals.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            vals.iter().map(|v| distinct.iter().position(|d| d == v).unwrap()).collect()
        }
        None => {
            let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
            let distinct: Vec<&str> = distinct.into_iter().collect();
            raw_labels.iter().map(|s| distinct.binary_search(&s.as_str()).unwrap()).collect()
        }
    };
    let num_classes = y.iter().max().map_or(0, |m| m + 1);
    if num_classes < 2 {
        return Err(Error::Data(format!("column `{target_column}` holds a single class")));
    }
    let x = Array2::from_shape_vec((c.len(), feature_cols.len()), x).map_err(|e| Error::Data(e.to_string()))?;
    DriftDataset::from_unsorted(x, y, c, num_classes)
}

pub fn load_csv(path: &Path, domain_column: &str, target_column: &str) -> Result<DriftDataset> {
    read_csv(std::fs::File::open(path)?, domain_column, target_column)
}
