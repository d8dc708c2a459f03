//! Eval-Fix splitting: train and in-distribution test rows come from domains
//! up to a boundary, out-of-distribution test rows from all later domains.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::DriftDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Bounds on the share of domains and of samples before the boundary.
pub const TRAIN_SHARE: (f64, f64) = (0.3, 0.8);
/// Share of each pre-boundary domain held out as in-distribution test rows.
pub const ID_SHARE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFixSplit {
    pub train: Vec<usize>,
    pub id_test: Vec<usize>,
    pub ood_test: Vec<usize>,
    /// Index into the schedule of the last pre-boundary domain.
    pub boundary_index: usize,
    /// Domain value `c_t` of that domain.
    pub boundary: f64,
    /// Per pre-boundary domain, rows moved into (+) or out of (−) the
    /// in-distribution set to satisfy class coverage; one move per class at
    /// most, spread over distinct domains while possible.
    pub id_adjustments: Vec<i64>,
}

fn in_share(v: f64) -> bool {
    // tolerate representation error at the interval ends
    v >= TRAIN_SHARE.0 - 1e-12 && v <= TRAIN_SHARE.1 + 1e-12
}

/// Boundary indices `b` (last pre-boundary domain) for which both the
/// domain share `(b+1)/D` and the sample share lie in [`TRAIN_SHARE`].
pub fn feasible_boundaries(ds: &DriftDataset) -> Vec<usize> {
    let s = ds.schedule();
    let d = s.len();
    let total = s.total() as f64;
    let mut cum = 0usize;
    let mut out = Vec::new();
    for b in 0..d.saturating_sub(1) {
        cum += s.counts()[b];
        if in_share((b + 1) as f64 / d as f64) && in_share(cum as f64 / total) {
            out.push(b);
        }
    }
    out
}

fn class_set(ds: &DriftDataset, rows: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; ds.num_classes()];
    for &r in rows {
        seen[ds.labels()[r]] = true;
    }
    seen
}

/// Split at a given boundary, ignoring the share rule. Fails when class
/// coverage between train, ID and OOD rows cannot be met.
pub fn eval_fix_split_at(ds: &DriftDataset, boundary_index: usize, rng: &mut Rng) -> Result<EvalFixSplit> {
    let s = ds.schedule();
    if boundary_index + 1 >= s.len() {
        return Err(Error::Split(format!("boundary {boundary_index} leaves no later domain")));
    }
    let labels = ds.labels();
    let mut in_id = vec![false; ds.len()];
    for k in 0..=boundary_index {
        let mut rows: Vec<usize> = s.rows(k).collect();
        rows.shuffle(rng);
        let take = (ID_SHARE * rows.len() as f64).round() as usize;
        for &r in &rows[..take] {
            in_id[r] = true;
        }
    }
    let pre_end = s.rows(boundary_index).end;
    let domain_of = |r: usize| (0..=boundary_index).find(|&k| s.rows(k).contains(&r)).unwrap();
    let mut adjust = vec![0i64; boundary_index + 1];
    for class in 0..ds.num_classes() {
        let mut rows: Vec<usize> = (0..pre_end).filter(|&r| labels[r] == class).collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::Split(format!("class {class} has a single row before the boundary")));
        }
        rows.shuffle(rng);
        // prefer a row from a domain that has not been adjusted yet
        let pick = |adjust: &[i64]| *rows.iter().find(|&&r| adjust[domain_of(r)] == 0).unwrap_or(&rows[0]);
        if !rows.iter().any(|&r| in_id[r]) {
            let r = pick(&adjust);
            in_id[r] = true;
            adjust[domain_of(r)] += 1;
        } else if rows.iter().all(|&r| in_id[r]) {
            let r = pick(&adjust);
            in_id[r] = false;
            adjust[domain_of(r)] -= 1;
        }
    }
    let train: Vec<usize> = (0..pre_end).filter(|&r| !in_id[r]).collect();
    let id_test: Vec<usize> = (0..pre_end).filter(|&r| in_id[r]).collect();
    let ood_test: Vec<usize> = (pre_end..ds.len()).collect();
    if class_set(ds, &ood_test) != class_set(ds, &train) {
        return Err(Error::Split(format!("classes before and after boundary {boundary_index} differ")));
    }
    Ok(EvalFixSplit { train, id_test, ood_test, boundary_index, boundary: s.domains()[boundary_index], id_adjustments: adjust })
}

/// Draw an Eval-Fix split: feasible boundaries are tried in random order
/// until one satisfies class coverage.
pub fn eval_fix_split(ds: &DriftDataset, rng: &mut Rng) -> Result<EvalFixSplit> {
    if ds.schedule().len() < 2 {
        return Err(Error::Split("need at least two domains".into()));
    }
    let mut candidates = feasible_boundaries(ds);
    if candidates.is_empty() {
        return Err(Error::Split("no boundary keeps 30–80% of domains and samples before it".into()));
    }
    candidates.shuffle(rng);
    let mut last = None;
    for b in candidates {
        match eval_fix_split_at(ds, b, rng) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Split(format!("no feasible boundary satisfies class coverage ({})", last.unwrap())))
}

impl EvalFixSplit {
    /// Check every split invariant against `ds`.
    pub fn verify(&self, ds: &DriftDataset, enforce_share: bool) -> Result<()> {
        let fail = |m: String| Err(Error::Split(m));
        let c = ds.domains();
        if self.train.iter().chain(&self.id_test).any(|&r| c[r] > self.boundary) {
            return fail("pre-boundary row after the boundary".into());
        }
        if self.ood_test.iter().any(|&r| c[r] <= self.boundary) {
            return fail("OOD row at or before the boundary".into());
        }
        let mut all: Vec<usize> = self.train.iter().chain(&self.id_test).chain(&self.ood_test).copied().collect();
        all.sort_unstable();
        if all != (0..ds.len()).collect::<Vec<_>>() {
            return fail("split does not partition the rows".into());
        }
        let s = ds.schedule();
        if enforce_share {
            let pre = self.train.len() + self.id_test.len();
            let dom = (self.boundary_index + 1) as f64 / s.len() as f64;
            if !in_share(dom) || !in_share(pre as f64 / ds.len() as f64) {
                return fail(format!("pre-boundary share outside 30–80% (domains {dom:.3})"));
            }
        }
        for k in 0..=self.boundary_index {
            let rows = s.rows(k);
            let n_id = self.id_test.iter().filter(|r| rows.contains(r)).count() as i64;
            let want = (ID_SHARE * rows.len() as f64).round() as i64 + self.id_adjustments[k];
            if n_id != want {
                return fail(format!("domain {k}: {n_id} ID rows, expected {want}"));
            }
        }
        let (tr, id, ood) = (class_set(ds, &self.train), class_set(ds, &self.id_test), class_set(ds, &self.ood_test));
        if tr != id || tr != ood {
            return fail("class coverage differs between train, ID and OOD rows".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn equal_domains(d: usize, per: usize) -> DriftDataset {
        let n = d * per;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let y = (0..n).map(|i| i % 2).collect();
        let c = (0..n).map(|i| (i / per) as f64).collect();
        DriftDataset::new(x, y, c, 2).unwrap()
    }

    #[test]
    fn ten_equal_domains() {
        assert_eq!(feasible_boundaries(&equal_domains(10, 20)), vec![2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn two_domains_single_boundary() {
        assert_eq!(feasible_boundaries(&equal_domains(2, 20)), vec![0]);
    }

    #[test]
    fn split_satisfies_invariants() {
        let ds = equal_domains(10, 20);
        let mut rng = crate::rng::from_seed(4);
        for _ in 0..20 {
            let s = eval_fix_split(&ds, &mut rng).unwrap();
            s.verify(&ds, true).unwrap();
        }
    }
}
