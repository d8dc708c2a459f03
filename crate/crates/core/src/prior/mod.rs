//! The temporal drift prior.
//!
//! A dataset is produced by sampling a causal graph and its functional
//! expansion, picking a sparse set of causal edges to drift, and letting a
//! second, independently sampled functional graph map each domain index to
//! additive offsets on the weights of those edges. Rows of each domain are
//! then drawn from the shifted graph.

pub mod witness;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{log_uniform, uniform_f64, uniform_usize, PriorConfig};
use crate::dataset::{DriftDataset, TemporalDomainSchedule};
use crate::error::{config_err, Error, Result};
use crate::rng::Rng;
use crate::scm::{self, FunctionalGraph, ScmGraph};

/// Draw domain indices with heavy-tailed gaps and per-domain sample counts.
pub fn sample_schedule(cfg: &PriorConfig, rng: &mut Rng) -> Result<TemporalDomainSchedule> {
    if cfg.min_domains < 1 || cfg.max_domains < cfg.min_domains {
        return Err(config_err("invalid domain range"));
    }
    if cfg.max_total_samples < cfg.min_domains || cfg.max_total_samples < cfg.min_total_samples {
        return Err(config_err("sample budget cannot cover the minimum domain count"));
    }
    let t = uniform_usize(rng, (cfg.min_domains, cfg.max_domains.min(cfg.max_total_samples)));
    let total = uniform_usize(rng, (cfg.min_total_samples.max(t), cfg.max_total_samples));

    let sigma = uniform_f64(rng, cfg.gap_log_sigma_range);
    let mut domains = Vec::with_capacity(t);
    let mut c = 0.0;
    domains.push(c);
    for _ in 1..t {
        let z: f64 = StandardNormal.sample(rng);
        c += (sigma * z).exp();
        domains.push(c);
    }

    // one row per domain, the rest split by gamma-distributed weights
    let shape = log_uniform(rng, (0.5, 8.0));
    let gamma = Gamma::new(shape, 1.0).map_err(|e| config_err(e.to_string()))?;
    let weights: Vec<f64> = (0..t).map(|_| gamma.sample(rng) + 1e-12).collect();
    let wsum: f64 = weights.iter().sum();
    let spare = total - t;
    let exact: Vec<f64> = weights.iter().map(|w| w / wsum * spare as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize + 1).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut by_frac: Vec<usize> = (0..t).collect();
    by_frac.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &k in by_frac.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    TemporalDomainSchedule::new(domains, counts)
}

/// Select the causal edges that drift. Each edge is kept independently with a
/// per-graph probability; when none survive, one is forced.
pub fn select_shifted_edges(scm: &ScmGraph, cfg: &PriorConfig, rng: &mut Rng) -> Vec<usize> {
    let m = scm.edges().len();
    if m == 0 {
        return Vec::new();
    }
    let p = uniform_f64(rng, cfg.shift_sparsity_range);
    let mut picked: Vec<usize> = (0..m).filter(|_| rng.random_bool(p)).collect();
    if picked.is_empty() {
        picked.push(rng.random_range(0..m));
    }
    picked
}

/// Functional edges realizing any of the given causal edges.
pub fn functional_shift_set(fg: &FunctionalGraph, causal: &[usize]) -> Vec<usize> {
    fg.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.origin.is_some_and(|o| causal.contains(&o)))
        .map(|(i, _)| i)
        .collect()
}

/// Auxiliary functional graph mapping a domain index to weight offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderScm {
    graph: FunctionalGraph,
    input: usize,
    frozen_noise: Vec<f64>,
    output_map: Vec<(usize, usize)>,
    shift_scale: f64,
    input_range: Option<(f64, f64)>,
}

impl SecondOrderScm {
    pub fn from_parts(
        graph: FunctionalGraph,
        input: usize,
        frozen_noise: Vec<f64>,
        output_map: Vec<(usize, usize)>,
        shift_scale: f64,
    ) -> Result<Self> {
        if input >= graph.num_subnodes() || frozen_noise.len() != graph.num_subnodes() {
            return Err(config_err("second-order graph input or noise out of range"));
        }
        if output_map.iter().any(|&(_, o)| o >= graph.num_subnodes()) {
            return Err(config_err("second-order output subnode out of range"));
        }
        if !(shift_scale >= 0.0) {
            return Err(config_err("shift scale must be non-negative"));
        }
        Ok(Self { graph, input, frozen_noise, output_map, shift_scale, input_range: None })
    }

    pub fn graph(&self) -> &FunctionalGraph {
        &self.graph
    }

    pub fn input(&self) -> usize {
        self.input
    }

    /// `(shifted functional edge, output subnode)` pairs.
    pub fn output_map(&self) -> &[(usize, usize)] {
        &self.output_map
    }

    pub fn shift_scale(&self) -> f64 {
        self.shift_scale
    }

    pub fn set_shift_scale(&mut self, scale: f64) {
        self.shift_scale = scale;
    }

    /// Map `[lo, hi]` affinely onto `[-1, 1]` before it enters the graph.
    pub fn set_input_range(&mut self, lo: f64, hi: f64) {
        self.input_range = Some((lo, hi));
    }

    pub fn normalize_input(&self, c: f64) -> f64 {
        match self.input_range {
            None => c,
            Some((lo, hi)) if hi > lo => 2.0 * (c - lo) / (hi - lo) - 1.0,
            Some(_) => 0.0,
        }
    }

    /// Per-edge weight offsets at domain `c`, in output-map order.
    pub fn compute_edge_shifts(&self, c: f64) -> Result<Vec<(usize, f64)>> {
        let x = self.normalize_input(c);
        let values = self.graph.forward_with_noise(&self.frozen_noise, Some((self.input, x)))?;
        self.output_map
            .iter()
            .map(|&(edge, out)| {
                let d = self.shift_scale * values.get(out);
                if d.is_finite() {
                    Ok((edge, d))
                } else {
                    Err(Error::NonFinite { node: out })
                }
            })
            .collect()
    }
}

/// Sample the auxiliary graph driving the given functional edges.
pub fn build_second_order_scm(shifted: &[usize], cfg: &PriorConfig, rng: &mut Rng) -> Result<SecondOrderScm> {
    if shifted.is_empty() {
        return Err(config_err("no shifted edges to drive"));
    }
    let scm = scm::sample_scm_sized(cfg, (cfg.sscm_min_nodes, cfg.sscm_max_nodes), rng)?;
    let graph = scm::expand_graph(&scm, cfg, rng)?;

    // The lowest-index causal node with children is a root.
    let source = (0..scm.num_nodes())
        .find(|&v| !scm.children(v).is_empty())
        .ok_or_else(|| config_err("second-order graph has no edges"))?;
    let group = &graph.z_groups()[source];
    let input = group[rng.random_range(0..group.len())];
    let mut outputs = graph.descendants(input);
    outputs.shuffle(rng);
    let output_map = shifted.iter().enumerate().map(|(i, &e)| (e, outputs[i % outputs.len()])).collect();

    let frozen_noise = graph.sample_noise(rng);
    let shift_scale = if cfg.shift_scale_range.1 == 0.0 {
        0.0
    } else {
        log_uniform(rng, (cfg.shift_scale_range.0.max(f64::MIN_POSITIVE), cfg.shift_scale_range.1))
    };
    SecondOrderScm::from_parts(graph, input, frozen_noise, output_map, shift_scale)
}

/// Copy of `fg` with `w_e + δ_e` on the listed edges.
pub fn apply_shifts(fg: &FunctionalGraph, deltas: &[(usize, f64)]) -> Result<FunctionalGraph> {
    let mut out = fg.clone();
    let n = out.edges().len();
    let edges = out.edges_mut();
    for &(e, d) in deltas {
        if e >= n {
            return Err(config_err(format!("shift targets unknown edge {e}")));
        }
        edges[e].weight += d;
    }
    Ok(out)
}

/// Bin continuous targets into `num_classes` ordered classes at (optionally
/// jittered) quantiles of the full sample. Every class is non-empty.
pub fn discretize_target(raw: &[f64], num_classes: usize, jitter: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(config_err("need at least two classes"));
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < num_classes {
        return Err(Error::Sampling(format!(
            "{} distinct target values cannot fill {num_classes} classes",
            distinct.len()
        )));
    }
    let n = sorted.len();
    let m = distinct.len();
    let mut thresholds = Vec::with_capacity(num_classes - 1);
    let mut prev = 0usize;
    for k in 1..num_classes {
        let j = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
        let q = ((k as f64 + j) / num_classes as f64).clamp(0.0, 1.0);
        let pos = ((q * n as f64).round() as usize).min(n - 1);
        // first distinct value ≥ the value at that rank
        let mut idx = distinct.partition_point(|&v| v < sorted[pos]);
        idx = idx.max(prev + 1).min(m - (num_classes - k));
        thresholds.push(distinct[idx]);
        prev = idx;
    }
    Ok(raw.iter().map(|&v| thresholds.partition_point(|&t| t <= v)).collect())
}

/// The per-domain generative loop: compute shifts, update weights, then draw
/// the domain's rows. Abstracted so the call order can be observed.
pub trait DomainProcess {
    type Graph;
    fn edge_shifts(&mut self, c: f64) -> Result<Vec<(usize, f64)>>;
    fn update(&mut self, deltas: &[(usize, f64)]) -> Result<Self::Graph>;
    /// One row: feature values and the raw target.
    fn sample_row(&mut self, graph: &Self::Graph, rng: &mut Rng) -> Result<(Vec<f64>, f64)>;
}

/// Raw rows produced by [`run_domains`].
#[derive(Debug, Clone)]
pub struct RawRows {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub domains: Vec<f64>,
}

pub fn run_domains<P: DomainProcess>(
    process: &mut P,
    schedule: &TemporalDomainSchedule,
    rng: &mut Rng,
) -> Result<RawRows> {
    let total = schedule.total();
    let mut out = RawRows {
        features: Vec::with_capacity(total),
        targets: Vec::with_capacity(total),
        domains: Vec::with_capacity(total),
    };
    for (&c, &n) in schedule.domains().iter().zip(schedule.counts()) {
        let deltas = process.edge_shifts(c)?;
        let graph = process.update(&deltas)?;
        for _ in 0..n {
            let (x, y) = process.sample_row(&graph, rng)?;
            out.features.push(x);
            out.targets.push(y);
            out.domains.push(c);
        }
    }
    Ok(out)
}

/// A functional graph whose shifted edges are driven by a second-order SCM.
pub struct ShiftedGraph<'a> {
    pub base: &'a FunctionalGraph,
    pub driver: Option<&'a SecondOrderScm>,
    buffer: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> ShiftedGraph<'a> {
    pub fn new(base: &'a FunctionalGraph, driver: Option<&'a SecondOrderScm>) -> Self {
        let n = base.num_subnodes();
        Self { base, driver, buffer: vec![0.0; n], noise: vec![0.0; n] }
    }
}

impl DomainProcess for ShiftedGraph<'_> {
    type Graph = FunctionalGraph;

    fn edge_shifts(&mut self, c: f64) -> Result<Vec<(usize, f64)>> {
        match self.driver {
            Some(d) if d.shift_scale() > 0.0 => d.compute_edge_shifts(c),
            _ => Ok(Vec::new()),
        }
    }

    fn update(&mut self, deltas: &[(usize, f64)]) -> Result<FunctionalGraph> {
        apply_shifts(self.base, deltas)
    }

    fn sample_row(&mut self, graph: &FunctionalGraph, rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        for (slot, spec) in self.noise.iter_mut().zip(graph.noise_specs()) {
            let z: f64 = StandardNormal.sample(rng);
            *slot = spec.scale() * z;
        }
        graph.propagate(&self.noise, None, &mut self.buffer)?;
        let x = graph.features().iter().map(|&f| self.buffer[f]).collect();
        let target = graph.target().ok_or_else(|| config_err("graph has no target subnode"))?;
        Ok((x, self.buffer[target]))
    }
}

/// Everything drawn while sampling one dataset, kept for inspection.
#[derive(Debug, Clone)]
pub struct PriorDraw {
    pub scm: ScmGraph,
    pub graph: FunctionalGraph,
    pub shifted_causal: Vec<usize>,
    pub shifted_functional: Vec<usize>,
    pub driver: Option<SecondOrderScm>,
    pub schedule: TemporalDomainSchedule,
}

/// Sample the structural pieces of one dataset (no rows).
pub fn sample_structure(cfg: &PriorConfig, rng: &mut Rng) -> Result<PriorDraw> {
    let scm = scm::sample_scm(cfg, rng)?;
    let graph = scm::expand_to_functional(&scm, cfg, rng)?;
    let shifted_causal = select_shifted_edges(&scm, cfg, rng);
    let shifted_functional = functional_shift_set(&graph, &shifted_causal);
    let mut driver = if shifted_functional.is_empty() {
        None
    } else {
        Some(build_second_order_scm(&shifted_functional, cfg, rng)?)
    };
    let schedule = sample_schedule(cfg, rng)?;
    if let Some(d) = driver.as_mut() {
        if !cfg.drift {
            d.set_shift_scale(0.0);
        }
        let doms = schedule.domains();
        d.set_input_range(doms[0], doms[doms.len() - 1]);
    }
    Ok(PriorDraw { scm, graph, shifted_causal, shifted_functional, driver, schedule })
}

fn try_sample_dataset(cfg: &PriorConfig, rng: &mut Rng) -> Result<DriftDataset> {
    let draw = sample_structure(cfg, rng)?;
    if scm::is_degenerate(&draw.graph, cfg.degenerate_probe, rng)? {
        return Err(Error::Sampling("constant feature or target".into()));
    }
    let mut process = ShiftedGraph::new(&draw.graph, draw.driver.as_ref());
    let raw = run_domains(&mut process, &draw.schedule, rng)?;

    let num_classes = uniform_usize(rng, (cfg.min_classes, cfg.max_classes));
    let ordered = discretize_target(&raw.targets, num_classes, cfg.class_boundary_jitter, rng)?;
    let mut relabel: Vec<usize> = (0..num_classes).collect();
    relabel.shuffle(rng);
    let labels = ordered.into_iter().map(|y| relabel[y]).collect();

    let d = draw.graph.features().len();
    let flat: Vec<f64> = raw.features.into_iter().flatten().collect();
    let x = ndarray::Array2::from_shape_vec((raw.domains.len(), d), flat).map_err(|e| Error::Data(e.to_string()))?;
    DriftDataset::new(x, labels, raw.domains, num_classes)
}

/// Sample one labelled drift dataset, resampling degenerate draws.
pub fn sample_dataset(cfg: &PriorConfig, rng: &mut Rng) -> Result<DriftDataset> {
    cfg.validate()?;
    let mut last = String::new();
    for _ in 0..cfg.max_attempts {
        match try_sample_dataset(cfg, rng) {
            Ok(ds) => return Ok(ds),
            Err(e @ (Error::Sampling(_) | Error::NonFinite { .. } | Error::Data(_))) => last = e.to_string(),
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplingExhausted { attempts: cfg.max_attempts, reason: last })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    BoundaryShift,
    Merge,
    Noise,
}

impl std::str::FromStr for PerturbMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary_shift" => Ok(Self::BoundaryShift),
            "merge" => Ok(Self::Merge),
            "noise" => Ok(Self::Noise),
            other => Err(config_err(format!("unknown perturbation mode {other:?}"))),
        }
    }
}

/// Corrupt the domain column of a dataset; features and labels are untouched.
pub fn perturb_domains(ds: &DriftDataset, mode: PerturbMode, strength: f64, rng: &mut Rng) -> Result<DriftDataset> {
    if !strength.is_finite() || strength < 0.0 {
        return Err(config_err("perturbation strength must be finite and non-negative"));
    }
    if mode != PerturbMode::Noise && strength > 1.0 {
        return Err(config_err("boundary and merge strengths are probabilities"));
    }
    let sched = ds.schedule();
    if mode != PerturbMode::Noise && sched.len() < 2 {
        return Err(config_err("perturbation needs at least two domains"));
    }
    if strength == 0.0 {
        return Ok(ds.clone());
    }
    let doms = sched.domains();
    let t = doms.len();
    let mut new_c = ds.domains().to_vec();
    match mode {
        PerturbMode::BoundaryShift => {
            for k in 0..t {
                let rows = sched.rows(k);
                let band = (rows.len() as f64 * 0.25).ceil().max(1.0) as usize;
                for (i, r) in rows.clone().enumerate() {
                    if k > 0 && i < band && rng.random_bool(strength) {
                        new_c[r] = doms[k - 1];
                    } else if k + 1 < t && i >= rows.len() - band && rng.random_bool(strength) {
                        new_c[r] = doms[k + 1];
                    }
                }
            }
        }
        PerturbMode::Merge => {
            let mut mapped = doms.to_vec();
            for k in 1..t {
                if rng.random_bool(strength) {
                    mapped[k] = mapped[k - 1];
                }
            }
            for k in 0..t {
                for r in sched.rows(k) {
                    new_c[r] = mapped[k];
                }
            }
        }
        PerturbMode::Noise => {
            let gap = if t >= 2 { (doms[t - 1] - doms[0]) / (t - 1) as f64 } else { 1.0 };
            for k in 0..t {
                let z: f64 = StandardNormal.sample(rng);
                let c = doms[k] + strength * gap * z;
                for r in sched.rows(k) {
                    new_c[r] = c;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| new_c[a].total_cmp(&new_c[b]));
    let rows = ds.select(&order);
    let c = order.iter().map(|&r| new_c[r]).collect();
    DriftDataset::new(rows.x, rows.y, c, ds.num_classes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use crate::scm::{Activation, FunctionalEdge, NoiseSpec};

    #[test]
    fn single_domain_schedule() {
        let cfg = PriorConfig { min_domains: 1, max_domains: 1, ..Default::default() };
        let s = sample_schedule(&cfg, &mut from_seed(2)).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.total() >= cfg.min_total_samples && s.total() <= cfg.max_total_samples);
    }

    #[test]
    fn schedule_strictly_increasing() {
        let cfg = PriorConfig { min_domains: 10, max_domains: 10, ..Default::default() };
        let s = sample_schedule(&cfg, &mut from_seed(4)).unwrap();
        let d = s.domains();
        for i in 0..d.len() {
            for j in i + 1..d.len() {
                assert!(d[i] < d[j]);
            }
        }
        assert!(s.counts().iter().all(|&n| n >= 1));
    }

    #[test]
    fn infeasible_schedule_rejected() {
        let cfg = PriorConfig { min_domains: 5, max_domains: 5, min_total_samples: 1, max_total_samples: 3, ..Default::default() };
        assert!(sample_schedule(&cfg, &mut from_seed(1)).is_err());
    }

    #[test]
    fn single_edge_is_always_selected() {
        let scm = ScmGraph::new(2, vec![(0, 1)]).unwrap();
        let cfg = PriorConfig { shift_sparsity_range: (0.0, 0.0), ..Default::default() };
        for s in 0..20 {
            assert_eq!(select_shifted_edges(&scm, &cfg, &mut from_seed(s)), vec![0]);
        }
    }

    #[test]
    fn one_shifted_edge_one_output() {
        let sscm = build_second_order_scm(&[3], &PriorConfig::default(), &mut from_seed(8)).unwrap();
        assert_eq!(sscm.output_map().len(), 1);
        assert_eq!(sscm.output_map()[0].0, 3);
    }

    #[test]
    fn second_order_is_seed_deterministic() {
        let cfg = PriorConfig::default();
        let a = build_second_order_scm(&[0, 1, 2], &cfg, &mut from_seed(21)).unwrap();
        let b = build_second_order_scm(&[0, 1, 2], &cfg, &mut from_seed(21)).unwrap();
        assert_eq!(a, b);
        for c in [-3.0, 0.0, 0.5, 7.0] {
            assert_eq!(a.compute_edge_shifts(c).unwrap(), b.compute_edge_shifts(c).unwrap());
            assert_eq!(a.compute_edge_shifts(c).unwrap(), a.compute_edge_shifts(c).unwrap());
        }
    }

    fn identity_driver(w: f64, scale: f64) -> SecondOrderScm {
        let g = FunctionalGraph::from_parts(
            vec![vec![0], vec![1]],
            vec![vec![], vec![]],
            vec![FunctionalEdge { from: 0, to: 1, weight: w, origin: Some(0) }],
            vec![Activation::Identity; 2],
            vec![NoiseSpec::Gaussian { scale: 0.0 }; 2],
            1e4,
        )
        .unwrap();
        SecondOrderScm::from_parts(g, 0, vec![0.0, 0.0], vec![(5, 1)], scale).unwrap()
    }

    #[test]
    fn linear_driver_composition() {
        let d = identity_driver(1.5, 0.4);
        let shifts = d.compute_edge_shifts(2.0).unwrap();
        assert_eq!(shifts.len(), 1);
        assert_eq!(shifts[0].0, 5);
        assert!((shifts[0].1 - 0.4 * 1.5 * 2.0).abs() < 1e-15);
        let zero = identity_driver(1.5, 0.0);
        assert_eq!(zero.compute_edge_shifts(2.0).unwrap()[0].1, 0.0);
    }

    #[test]
    fn input_normalization_spans_unit_interval() {
        let mut d = identity_driver(1.0, 1.0);
        d.set_input_range(10.0, 20.0);
        assert_eq!(d.normalize_input(10.0), -1.0);
        assert_eq!(d.normalize_input(20.0), 1.0);
        assert_eq!(d.normalize_input(15.0), 0.0);
    }

    fn two_node_graph() -> FunctionalGraph {
        let cfg = PriorConfig::default();
        let scm = ScmGraph::new(2, vec![(0, 1)]).unwrap();
        scm::expand_graph(&scm, &cfg, &mut from_seed(0)).unwrap()
    }

    #[test]
    fn shifts_are_additive() {
        let fg = two_node_graph();
        assert_eq!(apply_shifts(&fg, &[]).unwrap().weights(), fg.weights());
        let mut edges = fg.edges().to_vec();
        edges[0].weight = 0.5;
        let fg = FunctionalGraph::from_parts(
            fg.z_groups().to_vec(),
            fg.f_groups().to_vec(),
            edges,
            fg.activations().to_vec(),
            fg.noise_specs().to_vec(),
            fg.clip_bound(),
        )
        .unwrap();
        let shifted = apply_shifts(&fg, &[(0, 1.0)]).unwrap();
        assert_eq!(shifted.edges()[0].weight, 1.5);
        for e in 1..fg.edges().len() {
            assert_eq!(shifted.edges()[e].weight.to_bits(), fg.edges()[e].weight.to_bits());
        }
        assert!(apply_shifts(&fg, &[(999, 1.0)]).is_err());
    }

    #[test]
    fn median_split() {
        let raw: Vec<f64> = (1..=10).map(f64::from).collect();
        let y = discretize_target(&raw, 2, 0.0, &mut from_seed(0)).unwrap();
        assert_eq!(y, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert!(matches!(discretize_target(&[3.0; 10], 2, 0.0, &mut from_seed(0)), Err(Error::Sampling(_))));
    }

    #[test]
    fn discretize_with_ties_fills_every_class() {
        let raw = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0];
        for seed in 0..30 {
            let y = discretize_target(&raw, 3, 0.3, &mut from_seed(seed)).unwrap();
            for k in 0..3 {
                assert!(y.contains(&k), "class {k} empty: {y:?}");
            }
        }
    }

    #[test]
    fn sample_dataset_is_deterministic() {
        let cfg = PriorConfig::default();
        let a = sample_dataset(&cfg, &mut from_seed(99)).unwrap();
        let b = sample_dataset(&cfg, &mut from_seed(99)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.num_features() >= 1 && a.num_features() <= 4);
    }

    #[test]
    fn perturb_zero_strength_is_identity() {
        let cfg = PriorConfig { min_domains: 4, ..Default::default() };
        let ds = sample_dataset(&cfg, &mut from_seed(5)).unwrap();
        for mode in [PerturbMode::BoundaryShift, PerturbMode::Merge, PerturbMode::Noise] {
            assert_eq!(perturb_domains(&ds, mode, 0.0, &mut from_seed(1)).unwrap(), ds);
        }
    }

    #[test]
    fn full_merge_collapses_domains() {
        let cfg = PriorConfig { min_domains: 4, max_domains: 4, ..Default::default() };
        let ds = sample_dataset(&cfg, &mut from_seed(6)).unwrap();
        let merged = perturb_domains(&ds, PerturbMode::Merge, 1.0, &mut from_seed(1)).unwrap();
        assert!(merged.schedule().len() < ds.schedule().len());
        assert_eq!(merged.schedule().domains(), &[ds.schedule().domains()[0]]);
        assert_eq!(merged.features(), ds.features());
        assert_eq!(merged.labels(), ds.labels());
    }

    #[test]
    fn perturb_rejects_bad_inputs() {
        let ds = sample_dataset(&PriorConfig { min_domains: 3, ..Default::default() }, &mut from_seed(7)).unwrap();
        assert!(perturb_domains(&ds, PerturbMode::Merge, 1.5, &mut from_seed(1)).is_err());
        assert!(perturb_domains(&ds, PerturbMode::Noise, -0.1, &mut from_seed(1)).is_err());
        assert!("sideways".parse::<PerturbMode>().is_err());
    }

    #[test]
    fn boundary_shift_keeps_rows() {
        let cfg = PriorConfig { min_domains: 5, max_domains: 5, ..Default::default() };
        let ds = sample_dataset(&cfg, &mut from_seed(8)).unwrap();
        let out = perturb_domains(&ds, PerturbMode::BoundaryShift, 0.5, &mut from_seed(3)).unwrap();
        assert_eq!(out.len(), ds.len());
        out.validate().unwrap();
        let mut a: Vec<usize> = ds.labels().to_vec();
        let mut b: Vec<usize> = out.labels().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_ne!(out.domains(), ds.domains());
    }
}
