//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use drift_pfn::config::PriorConfig;
use drift_pfn::dataset::DriftDataset;
use drift_pfn::eval::EvalFixSplit;
use drift_pfn::prior::witness::{witness_fixture, ShiftKind};
use drift_pfn::prior::{apply_shifts, PriorDraw};
use drift_pfn::rng::{stream, Rng};
use drift_pfn::stats::{chi2_independence, ks_two_sample};
use drift_pfn::scm::{FunctionalGraph, ScmGraph};
use ndarray::Array2;
use rand::Rng as _;

/// A random labelled probability matrix with at least two classes present.
pub struct MetricCase {
    pub y: Vec<usize>,
    pub probs: Array2<f64>,
}

pub fn metric_case(rng: &mut Rng) -> MetricCase {
    let k = rng.random_range(2..=5);
    let n = rng.random_range(4..=50);
    loop {
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut present = y.clone();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            continue;
        }
        // coarse grid so that ties appear in the scores
        let coarse = rng.random_bool(0.3);
        let mut probs = Array2::from_shape_fn((n, k), |_| {
            let v: f64 = rng.random_range(0.01..1.0);
            if coarse {
                (v * 4.0).ceil()
            } else {
                v
            }
        });
        for mut row in probs.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        return MetricCase { y, probs };
    }
}

pub fn confusion(y: &[usize], pred: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; k]; k];
    for (&t, &p) in y.iter().zip(pred) {
        m[t][p] += 1;
    }
    m
}

pub fn first_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

pub fn predictions(probs: &Array2<f64>) -> Vec<usize> {
    probs.rows().into_iter().map(|r| first_argmax(&r.to_vec())).collect()
}

pub fn accuracy(y: &[usize], pred: &[usize], k: usize) -> f64 {
    let m = confusion(y, pred, k);
    (0..k).map(|i| m[i][i]).sum::<usize>() as f64 / y.len() as f64
}

pub fn macro_f1(y: &[usize], pred: &[usize], k: usize) -> f64 {
    let m = confusion(y, pred, k);
    let present: Vec<usize> = (0..k).filter(|&c| m[c].iter().sum::<usize>() > 0).collect();
    let f1: f64 = present
        .iter()
        .map(|&c| {
            let tp = m[c][c] as f64;
            let predicted: f64 = (0..k).map(|r| m[r][c]).sum::<usize>() as f64;
            let actual: f64 = m[c].iter().sum::<usize>() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = tp / actual;
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    f1 / present.len() as f64
}

/// Pairwise comparison over every positive/negative pair.
pub fn pairwise_auc(positive: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn roc_auc(y: &[usize], probs: &Array2<f64>, weighted: bool) -> f64 {
    let k = probs.ncols();
    let present: Vec<usize> = (0..k).filter(|c| y.contains(c)).collect();
    let ovr = |c: usize| {
        let pos: Vec<bool> = y.iter().map(|&t| t == c).collect();
        pairwise_auc(&pos, &probs.column(c).to_vec())
    };
    if present.len() == 2 {
        return ovr(present[1]);
    }
    let support = |c: usize| y.iter().filter(|&&t| t == c).count() as f64;
    if weighted {
        present.iter().map(|&c| ovr(c) * support(c)).sum::<f64>() / y.len() as f64
    } else {
        present.iter().map(|&c| ovr(c)).sum::<f64>() / present.len() as f64
    }
}

/// Bins `[b/B, (b+1)/B)`, the last one closed, each scanned over all rows.
pub fn ece(y: &[usize], probs: &Array2<f64>, bins: usize) -> f64 {
    let n = y.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let mut members = Vec::new();
        for (i, row) in probs.rows().into_iter().enumerate() {
            let p = row[first_argmax(&row.to_vec())];
            if p >= lo && (p < hi || (b + 1 == bins && p <= 1.0)) {
                members.push((i, p));
            }
        }
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let acc = members.iter().filter(|&&(i, _)| first_argmax(&probs.row(i).to_vec()) == y[i]).count() as f64 / m;
        let conf = members.iter().map(|&(_, p)| p).sum::<f64>() / m;
        total += m / n * (acc - conf).abs();
    }
    total
}

/// Every invariant of an Eval-Fix split, recounted from the raw columns.
pub fn check_split(ds: &DriftDataset, s: &EvalFixSplit) -> Result<(), String> {
    let c = ds.domains();
    let mut domains: Vec<f64> = c.to_vec();
    domains.dedup();
    let b = domains.iter().position(|&d| d == s.boundary).ok_or("boundary is not a domain")?;
    if b + 1 >= domains.len() {
        return Err("no domain after the boundary".into());
    }
    let mut seen = vec![0u8; ds.len()];
    for &r in s.train.iter().chain(&s.id_test).chain(&s.ood_test) {
        seen[r] += 1;
    }
    if seen.iter().any(|&v| v != 1) {
        return Err("rows are not partitioned".into());
    }
    if s.train.iter().chain(&s.id_test).any(|&r| c[r] > s.boundary) || s.ood_test.iter().any(|&r| c[r] <= s.boundary) {
        return Err("temporal order violated".into());
    }
    let dom_share = (b + 1) as f64 / domains.len() as f64;
    let pre = (0..ds.len()).filter(|&r| c[r] <= s.boundary).count();
    let row_share = pre as f64 / ds.len() as f64;
    for (what, v) in [("domain", dom_share), ("sample", row_share)] {
        if !(0.3 - 1e-12..=0.8 + 1e-12).contains(&v) {
            return Err(format!("{what} share {v} outside [0.3, 0.8]"));
        }
    }
    for (k, &d) in domains[..=b].iter().enumerate() {
        let n_k = c.iter().filter(|&&v| v == d).count();
        let id_k = s.id_test.iter().filter(|&&r| c[r] == d).count() as i64;
        let base = (0.1 * n_k as f64).round() as i64;
        if id_k != base + s.id_adjustments[k] {
            return Err(format!("domain {d}: {id_k} ID rows vs round(0.1·{n_k}) = {base}"));
        }
    }
    let moves: i64 = s.id_adjustments.iter().map(|a| a.abs()).sum();
    if moves > ds.num_classes() as i64 {
        return Err(format!("{moves} coverage moves for {} classes", ds.num_classes()));
    }
    let classes = |rows: &[usize]| {
        let mut v: Vec<usize> = rows.iter().map(|&r| ds.labels()[r]).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (tr, id, ood) = (classes(&s.train), classes(&s.id_test), classes(&s.ood_test));
    if tr != id || tr != ood {
        return Err(format!("class coverage differs: train {tr:?}, id {id:?}, ood {ood:?}"));
    }
    Ok(())
}

fn dfs_cycle(adj: &[Vec<usize>], v: usize, state: &mut [u8]) -> bool {
    state[v] = 1;
    for &w in &adj[v] {
        if state[w] == 1 || (state[w] == 0 && dfs_cycle(adj, w, state)) {
            return true;
        }
    }
    state[v] = 2;
    false
}

pub fn has_cycle(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
    }
    let mut state = vec![0u8; n];
    (0..n).any(|v| state[v] == 0 && dfs_cycle(&adj, v, &mut state))
}

/// Z→F and F→Z edges only, origins consistent with the causal graph, and
/// the expected number of edges into every node with parents.
pub fn check_expansion(g: &ScmGraph, fg: &FunctionalGraph) -> Result<(), String> {
    let zs = fg.z_groups();
    let fs = fg.f_groups();
    let owner = |groups: &[Vec<usize>], s: usize| groups.iter().position(|grp| grp.contains(&s));
    for e in fg.edges() {
        match (owner(zs, e.from), owner(fs, e.to), owner(fs, e.from), owner(zs, e.to)) {
            (Some(i), Some(j), _, _) => {
                let origin = e.origin.ok_or("Z→F edge without origin")?;
                if g.edges().get(origin) != Some(&(i, j)) {
                    return Err(format!("edge {e:?} has origin {origin} but joins {i}→{j}"));
                }
            }
            (_, _, Some(j), Some(k)) if j == k => {
                if let Some(o) = e.origin {
                    if g.edges().get(o).map(|&(_, ch)| ch) != Some(j) {
                        return Err(format!("F→Z edge {e:?} points at a foreign causal edge"));
                    }
                }
            }
            _ => return Err(format!("edge {e:?} is neither Z→F nor F→Z within one node")),
        }
    }
    for j in 0..g.num_nodes() {
        let parents = g.parents(j);
        if parents.is_empty() {
            if !fs[j].is_empty() {
                return Err(format!("root {j} has intermediates"));
            }
            continue;
        }
        let zin: usize = parents.iter().map(|&i| zs[i].len()).sum();
        let want = zin * fs[j].len() + fs[j].len() * zs[j].len();
        let got = fg.edges().iter().filter(|e| fs[j].contains(&e.to) || fs[j].contains(&e.from)).count();
        if got != want {
            return Err(format!("node {j}: {got} edges, expected {want}"));
        }
    }
    if has_cycle(fg.num_subnodes(), fg.edges().iter().map(|e| (e.from, e.to))) {
        return Err("functional graph has a cycle".into());
    }
    Ok(())
}

/// Structural checks on one sampled (SCM, functional graph, driver) triple.
pub fn check_triple(cfg: &PriorConfig, d: &PriorDraw) -> Result<(), String> {
    let n = d.scm.num_nodes();
    if !(cfg.min_nodes..=cfg.max_nodes).contains(&n) {
        return Err(format!("{n} causal nodes outside the configured range"));
    }
    if has_cycle(n, d.scm.edges().iter().copied()) {
        return Err("causal graph has a cycle".into());
    }
    check_expansion(&d.scm, &d.graph)?;
    if let Some(t) = d.graph.target() {
        if d.graph.features().contains(&t) {
            return Err("target is also a feature".into());
        }
    }
    if let Some(drv) = &d.driver {
        let h = drv.graph();
        if has_cycle(h.num_subnodes(), h.edges().iter().map(|e| (e.from, e.to))) {
            return Err("second-order graph has a cycle".into());
        }
        let mapped: Vec<usize> = drv.output_map().iter().map(|&(e, _)| e).collect();
        if mapped != d.shifted_functional {
            return Err("output map does not cover exactly the shifted edges".into());
        }
        let base = d.graph.weights();
        for &c in d.schedule.domains() {
            let deltas = drv.compute_edge_shifts(c).map_err(|e| e.to_string())?;
            let w = apply_shifts(&d.graph, &deltas).map_err(|e| e.to_string())?.weights();
            for (e, (a, b)) in w.iter().zip(&base).enumerate() {
                if !d.shifted_functional.contains(&e) && a.to_bits() != b.to_bits() {
                    return Err(format!("unshifted edge {e} moved at domain {c}"));
                }
            }
        }
    }
    for &e in &d.shifted_functional {
        let origin = d.graph.edges()[e].origin;
        if !origin.is_some_and(|o| d.shifted_causal.contains(&o)) {
            return Err(format!("shifted edge {e} has no shifted causal origin"));
        }
    }
    let s = &d.schedule;
    if s.domains().windows(2).any(|w| w[0] >= w[1]) || s.counts().contains(&0) {
        return Err("schedule not strictly increasing with positive counts".into());
    }
    if s.counts().iter().sum::<usize>() != s.total() {
        return Err("schedule total mismatch".into());
    }
    Ok(())
}

/// Half-width of a 95% t-interval with hard-coded quantiles.
pub fn t_halfwidth(values: &[f64]) -> f64 {
    const T975: [f64; 6] = [12.706204736, 4.302652730, 3.182446305, 2.776445105, 2.570581836, 2.446911851];
    let n = values.len();
    let m = values.iter().sum::<f64>() / n as f64;
    let s = (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt();
    T975[n - 2] * s / (n as f64).sqrt()
}

/// Label counts per domain, as a `domains × classes` table.
pub fn label_table(ds: &DriftDataset) -> Vec<Vec<f64>> {
    let mut domains: Vec<f64> = ds.domains().to_vec();
    domains.dedup();
    domains
        .iter()
        .map(|&d| {
            let mut row = vec![0.0; ds.num_classes()];
            for r in (0..ds.len()).filter(|&r| ds.domains()[r] == d) {
                row[ds.labels()[r]] += 1.0;
            }
            row
        })
        .collect()
}

/// Feature `j` of the first and second half of the domains.
fn halves_midpoint(ds: &DriftDataset) -> f64 {
    let mut domains: Vec<f64> = ds.domains().to_vec();
    domains.dedup();
    domains[domains.len() / 2]
}

pub fn halves(ds: &DriftDataset, j: usize) -> (Vec<f64>, Vec<f64>) {
    let mid = halves_midpoint(ds);
    let pick = |early: bool| (0..ds.len()).filter(|&r| (ds.domains()[r] < mid) == early).map(|r| ds.features()[[r, j]]).collect();
    (pick(true), pick(false))
}

/// One seeded trial of a shift-taxonomy witness: the invariant marginal must
/// survive its test at α = 0.01 and the drifting one must be detected.
pub fn witness_trial(kind: ShiftKind, seed: u64) -> Result<(), String> {
    let fixture = witness_fixture(kind).map_err(|e| e.to_string())?;
    let ds = fixture.sample(10, 100, &mut stream(seed, &[7])).map_err(|e| e.to_string())?;
    let (_, p_label) = chi2_independence(&label_table(&ds));
    match kind {
        ShiftKind::Covariate => {
            let (a, b) = halves(&ds, 1);
            let (_, p_x) = ks_two_sample(&a, &b);
            if p_label <= 0.01 {
                return Err(format!("P(Y) moved (p = {p_label:.4})"));
            }
            if p_x >= 0.01 {
                return Err(format!("P(X) did not move (p = {p_x:.4})"));
            }
        }
        ShiftKind::Concept => {
            let (a, b) = halves(&ds, 0);
            let (_, p_x) = ks_two_sample(&a, &b);
            if p_x <= 0.01 {
                return Err(format!("P(X) moved (p = {p_x:.4})"));
            }
            // labels of rows with a positive feature, early against late
            let mut table = vec![vec![0.0; 2]; 2];
            let mid = halves_midpoint(&ds);
            for r in (0..ds.len()).filter(|&r| ds.features()[[r, 0]] > 0.0) {
                table[usize::from(ds.domains()[r] >= mid)][ds.labels()[r]] += 1.0;
            }
            let (_, p_cond) = chi2_independence(&table);
            if p_cond >= 0.01 {
                return Err(format!("P(Y | X) did not move (p = {p_cond:.4})"));
            }
        }
        ShiftKind::PriorProbability => {
            if p_label >= 0.01 {
                return Err(format!("P(Y) did not move (p = {p_label:.4})"));
            }
        }
    }
    Ok(())
}
