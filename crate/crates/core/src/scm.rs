//! Causal graphs, their scalar functional expansion, and noise propagation.
//!
//! A causal node `z_i` expands into a group of scalar subnodes `Z_i`. Every
//! node `z_j` with parents additionally receives a group of intermediate
//! subnodes `F_j`, wired as `(⋃_{i∈PA_j} Z_i) × F_j ∪ F_j × Z_j`. Each subnode
//! computes `h(Σ w·parent + ε)`.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{log_uniform, uniform_f64, uniform_usize, PriorConfig};
use crate::error::{config_err, Error, Result};
use crate::rng::Rng;

/// A causal DAG over nodes `0..num_nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    topo_order: Vec<usize>,
}

impl ScmGraph {
    /// Build a graph, rejecting self-loops, duplicate edges and cycles.
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(config_err(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(config_err(format!("self-loop on node {a}")));
            }
            if !seen.insert((a, b)) {
                return Err(config_err(format!("duplicate edge ({a}, {b})")));
            }
        }
        let topo_order = kahn_order(num_nodes, edges.iter().copied())
            .ok_or_else(|| config_err("causal edge relation contains a cycle"))?;
        Ok(Self { num_nodes, edges, topo_order })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Edges as `(parent, child)`; the index is the causal edge id.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// `(edge id, parent)` pairs feeding `node`.
    pub fn parent_edges(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, &(_, c))| c == node)
            .map(|(e, &(p, _))| (e, p))
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        self.parent_edges(node).map(|(_, p)| p).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(p, _)| p == node).map(|&(_, c)| c).collect()
    }
}

/// Kahn's algorithm; `None` when the relation has a cycle.
pub(crate) fn kahn_order(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for (a, b) in edges {
        indeg[b] += 1;
        out[a].push(b);
    }
    let mut ready: std::collections::VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_front() {
        order.push(v);
        for &w in &out[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push_back(w);
            }
        }
    }
    (order.len() == n).then_some(order)
}

fn sample_dag(nodes: (usize, usize), density: (f64, f64), rng: &mut Rng) -> Result<ScmGraph> {
    let n = uniform_usize(rng, nodes);
    let p = uniform_f64(rng, density);
    let mut edges = Vec::new();
    for child in 1..n {
        for parent in 0..child {
            if rng.random_bool(p) {
                edges.push((parent, child));
            }
        }
    }
    if n >= 2 && edges.is_empty() {
        let child = rng.random_range(1..n);
        let parent = rng.random_range(0..child);
        edges.push((parent, child));
    }
    ScmGraph::new(n, edges)
}

/// Sample a causal DAG. Nodes are labelled in topological order; each forward
/// pair receives an edge with a per-graph density drawn from the config.
pub fn sample_scm(cfg: &PriorConfig, rng: &mut Rng) -> Result<ScmGraph> {
    if cfg.min_nodes < 1 || cfg.max_nodes < cfg.min_nodes {
        return Err(config_err(format!(
            "invalid node range [{}, {}]",
            cfg.min_nodes, cfg.max_nodes
        )));
    }
    sample_dag((cfg.min_nodes, cfg.max_nodes), cfg.density_range, rng)
}

pub(crate) fn sample_scm_sized(cfg: &PriorConfig, nodes: (usize, usize), rng: &mut Rng) -> Result<ScmGraph> {
    if nodes.0 < 1 || nodes.1 < nodes.0 {
        return Err(config_err(format!("invalid node range [{}, {}]", nodes.0, nodes.1)));
    }
    sample_dag(nodes, cfg.density_range, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Abs,
    Sin,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Abs,
        Activation::Sin,
        Activation::Softplus,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Abs => x.abs(),
            Activation::Sin => x.sin(),
            Activation::Softplus => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseSpec {
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian { scale: f64 },
}

impl NoiseSpec {
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { scale } => scale,
        }
    }

    #[inline]
    fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            NoiseSpec::Gaussian { scale } => {
                if scale == 0.0 {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    /// Causal edge this functional edge realizes, if any.
    pub origin: Option<usize>,
}

/// Scalar-level expansion of a causal graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalGraph {
    z_groups: Vec<Vec<usize>>,
    f_groups: Vec<Vec<usize>>,
    edges: Vec<FunctionalEdge>,
    activations: Vec<Activation>,
    noise: Vec<NoiseSpec>,
    features: Vec<usize>,
    target: Option<usize>,
    clip_bound: f64,
    order: Vec<usize>,
    incoming: Vec<Vec<usize>>,
}

impl FunctionalGraph {
    /// Assemble a graph from explicit parts, validating acyclicity.
    pub fn from_parts(
        z_groups: Vec<Vec<usize>>,
        f_groups: Vec<Vec<usize>>,
        edges: Vec<FunctionalEdge>,
        activations: Vec<Activation>,
        noise: Vec<NoiseSpec>,
        clip_bound: f64,
    ) -> Result<Self> {
        let n = activations.len();
        if noise.len() != n {
            return Err(config_err("activation and noise tables differ in length"));
        }
        if f_groups.len() != z_groups.len() {
            return Err(config_err("subnode and intermediate group tables differ in length"));
        }
        let mut owner = vec![false; n];
        for &v in z_groups.iter().chain(f_groups.iter()).flatten() {
            if v >= n || std::mem::replace(&mut owner[v], true) {
                return Err(config_err(format!("subnode {v} missing or assigned twice")));
            }
        }
        if owner.iter().any(|o| !o) {
            return Err(config_err("subnode not assigned to any group"));
        }
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(config_err("functional edge out of range"));
            }
        }
        let order = kahn_order(n, edges.iter().map(|e| (e.from, e.to)))
            .ok_or_else(|| config_err("functional graph contains a cycle"))?;
        let mut incoming = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            incoming[e.to].push(i);
        }
        Ok(Self {
            z_groups,
            f_groups,
            edges,
            activations,
            noise,
            features: Vec::new(),
            target: None,
            clip_bound,
            order,
            incoming,
        })
    }

    pub fn num_subnodes(&self) -> usize {
        self.activations.len()
    }

    pub fn z_groups(&self) -> &[Vec<usize>] {
        &self.z_groups
    }

    pub fn f_groups(&self) -> &[Vec<usize>] {
        &self.f_groups
    }

    pub fn edges(&self) -> &[FunctionalEdge] {
        &self.edges
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn noise_specs(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    /// Subnodes in a topological order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// All `Z` subnodes, i.e. the candidates for features and target.
    pub fn value_subnodes(&self) -> Vec<usize> {
        self.z_groups.iter().flatten().copied().collect()
    }

    pub fn set_features_target(&mut self, features: Vec<usize>, target: usize) -> Result<()> {
        let n = self.num_subnodes();
        if target >= n || features.iter().any(|&f| f >= n) {
            return Err(config_err("feature or target subnode out of range"));
        }
        if features.contains(&target) {
            return Err(config_err("target subnode is also a feature"));
        }
        self.features = features;
        self.target = Some(target);
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    pub(crate) fn edges_mut(&mut self) -> &mut [FunctionalEdge] {
        &mut self.edges
    }

    /// Draw one noise vector from the per-subnode noise specs.
    pub fn sample_noise(&self, rng: &mut Rng) -> Vec<f64> {
        self.noise.iter().map(|s| s.sample(rng)).collect()
    }

    /// Propagate with fresh noise.
    pub fn forward(&self, rng: &mut Rng) -> Result<NodeValues> {
        let noise = self.sample_noise(rng);
        self.forward_with_noise(&noise, None)
    }

    /// Propagate a fixed noise vector. `clamp` pins one subnode to a value,
    /// bypassing its activation and noise.
    pub fn forward_with_noise(&self, noise: &[f64], clamp: Option<(usize, f64)>) -> Result<NodeValues> {
        let mut values = vec![0.0; self.num_subnodes()];
        self.propagate(noise, clamp, &mut values)?;
        Ok(NodeValues { values })
    }

    pub(crate) fn propagate(&self, noise: &[f64], clamp: Option<(usize, f64)>, values: &mut [f64]) -> Result<()> {
        debug_assert_eq!(noise.len(), self.num_subnodes());
        let bound = self.clip_bound;
        for &v in &self.order {
            if let Some((c, val)) = clamp {
                if c == v {
                    values[v] = val.clamp(-bound, bound);
                    continue;
                }
            }
            let mut acc = noise[v];
            for &e in &self.incoming[v] {
                let edge = &self.edges[e];
                acc += edge.weight * values[edge.from];
            }
            let out = self.activations[v].apply(acc).clamp(-bound, bound);
            if !out.is_finite() {
                return Err(Error::NonFinite { node: v });
            }
            values[v] = out;
        }
        Ok(())
    }

    /// Subnodes reachable from `src` along functional edges (excluding `src`).
    pub fn descendants(&self, src: usize) -> Vec<usize> {
        let n = self.num_subnodes();
        let mut out = vec![Vec::new(); n];
        for e in &self.edges {
            out[e.from].push(e.to);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![src];
        while let Some(v) = stack.pop() {
            for &w in &out[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        (0..n).filter(|&v| seen[v]).collect()
    }
}

/// Values of every subnode after one propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeValues {
    pub values: Vec<f64>,
}

impl NodeValues {
    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }
}

/// Expand without selecting features and target.
pub(crate) fn expand_graph(scm: &ScmGraph, cfg: &PriorConfig, rng: &mut Rng) -> Result<FunctionalGraph> {
    let weight_std = log_uniform(rng, cfg.weight_std_range);
    let weight_dist = Normal::new(0.0, weight_std).map_err(|e| config_err(e.to_string()))?;
    let n = scm.num_nodes();
    let mut z_groups = vec![Vec::new(); n];
    let mut f_groups = vec![Vec::new(); n];
    let mut next = 0usize;
    let mut alloc = |count: usize| {
        let ids: Vec<usize> = (next..next + count).collect();
        next += count;
        ids
    };
    for &j in scm.topo_order() {
        if scm.parent_edges(j).next().is_some() {
            f_groups[j] = alloc(uniform_usize(rng, cfg.intermediate_count_range));
        }
        z_groups[j] = alloc(uniform_usize(rng, cfg.subnode_count_range));
    }
    let total = next;

    let mut edges = Vec::new();
    for &j in scm.topo_order() {
        let parent_edges: Vec<(usize, usize)> = scm.parent_edges(j).collect();
        if parent_edges.is_empty() {
            continue;
        }
        for &(e, i) in &parent_edges {
            for &from in &z_groups[i] {
                for &to in &f_groups[j] {
                    edges.push(FunctionalEdge { from, to, weight: weight_dist.sample(rng), origin: Some(e) });
                }
            }
        }
        // F_j feeds Z_j; attributable to a causal edge only when it is the sole parent.
        let origin = (parent_edges.len() == 1).then(|| parent_edges[0].0);
        for &from in &f_groups[j] {
            for &to in &z_groups[j] {
                edges.push(FunctionalEdge { from, to, weight: weight_dist.sample(rng), origin });
            }
        }
    }

    let activations = (0..total)
        .map(|_| Activation::ALL[rng.random_range(0..Activation::ALL.len())])
        .collect();
    let mut is_root = vec![false; total];
    for j in 0..n {
        if scm.parent_edges(j).next().is_none() {
            z_groups[j].iter().for_each(|&s| is_root[s] = true);
        }
    }
    let noise = is_root
        .iter()
        .map(|&root| {
            let range = if root { cfg.root_noise_scale_range() } else { cfg.noise_scale_range };
            NoiseSpec::Gaussian { scale: log_uniform(rng, range) }
        })
        .collect();
    FunctionalGraph::from_parts(z_groups, f_groups, edges, activations, noise, cfg.clip_bound)
}

/// Expand a causal graph into its functional representation and pick
/// feature and target subnodes.
pub fn expand_to_functional(scm: &ScmGraph, cfg: &PriorConfig, rng: &mut Rng) -> Result<FunctionalGraph> {
    let fg = expand_graph(scm, cfg, rng)?;
    select_features_target(fg, cfg, rng)
}

/// Choose a uniform random feature subset among the `Z` subnodes and a target
/// from the remainder.
pub fn select_features_target(mut fg: FunctionalGraph, cfg: &PriorConfig, rng: &mut Rng) -> Result<FunctionalGraph> {
    let candidates = fg.value_subnodes();
    let (lo, hi) = cfg.feature_count_range;
    if candidates.len() < lo + 1 {
        return Err(Error::Sampling(format!(
            "{} value subnodes cannot hold {lo} features plus a target",
            candidates.len()
        )));
    }
    let count = uniform_usize(rng, (lo, hi.min(candidates.len() - 1)));
    let picked = index::sample(rng, candidates.len(), count);
    let mut is_feature = vec![false; candidates.len()];
    let features: Vec<usize> = picked
        .iter()
        .map(|i| {
            is_feature[i] = true;
            candidates[i]
        })
        .collect();
    let rest: Vec<usize> = (0..candidates.len()).filter(|&i| !is_feature[i]).map(|i| candidates[i]).collect();
    let target = rest[rng.random_range(0..rest.len())];
    fg.set_features_target(features, target)?;
    Ok(fg)
}

/// True when the target or a feature subnode is (numerically) constant across
/// `probes` propagations.
pub fn is_degenerate(fg: &FunctionalGraph, probes: usize, rng: &mut Rng) -> Result<bool> {
    let Some(target) = fg.target() else {
        return Ok(true);
    };
    let watched: Vec<usize> = fg.features().iter().copied().chain(std::iter::once(target)).collect();
    let mut samples = vec![Vec::with_capacity(probes); watched.len()];
    for _ in 0..probes {
        let vals = fg.forward(rng)?;
        for (s, &v) in samples.iter_mut().zip(&watched) {
            s.push(vals.get(v));
        }
    }
    Ok(samples.iter().any(|s| {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        var <= 1e-12 * (1.0 + mean * mean)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn chain(weight: f64) -> FunctionalGraph {
        FunctionalGraph::from_parts(
            vec![vec![0], vec![1]],
            vec![vec![], vec![]],
            vec![FunctionalEdge { from: 0, to: 1, weight, origin: Some(0) }],
            vec![Activation::Identity; 2],
            vec![NoiseSpec::Gaussian { scale: 0.0 }; 2],
            1e4,
        )
        .unwrap()
    }

    #[test]
    fn smallest_dag() {
        let cfg = PriorConfig { min_nodes: 2, max_nodes: 2, density_range: (1.0, 1.0), ..Default::default() };
        let g = sample_scm(&cfg, &mut from_seed(1)).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn single_node_dag() {
        let cfg = PriorConfig { min_nodes: 1, max_nodes: 1, ..Default::default() };
        let g = sample_scm(&cfg, &mut from_seed(1)).unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn invalid_node_range() {
        let cfg = PriorConfig { min_nodes: 4, max_nodes: 2, ..Default::default() };
        assert!(matches!(sample_scm(&cfg, &mut from_seed(1)), Err(Error::Config(_))));
        assert!(ScmGraph::new(2, vec![(0, 1), (1, 0)]).is_err());
        assert!(ScmGraph::new(2, vec![(1, 1)]).is_err());
        assert!(ScmGraph::new(2, vec![(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn expansion_cardinality_two_nodes() {
        let scm = ScmGraph::new(2, vec![(0, 1)]).unwrap();
        // k1 = 2, l2 = 3, k2 = 1 → 2·3 + 3·1 edges
        let cfg = PriorConfig { subnode_count_range: (1, 3), intermediate_count_range: (3, 3), ..Default::default() };
        let mut rng = from_seed(3);
        loop {
            let fg = expand_graph(&scm, &cfg, &mut rng).unwrap();
            if fg.z_groups()[0].len() == 2 && fg.z_groups()[1].len() == 1 {
                assert_eq!(fg.f_groups()[1].len(), 3);
                assert_eq!(fg.edges().len(), 9);
                assert!(fg.edges().iter().all(|e| e.origin == Some(0)));
                break;
            }
        }
    }

    #[test]
    fn single_node_expansion() {
        let scm = ScmGraph::new(1, vec![]).unwrap();
        let cfg = PriorConfig { subnode_count_range: (3, 3), feature_count_range: (1, 1), ..Default::default() };
        let fg = expand_to_functional(&scm, &cfg, &mut from_seed(0)).unwrap();
        assert_eq!(fg.num_subnodes(), 3);
        assert!(fg.edges().is_empty());
        assert!(fg.f_groups()[0].is_empty());
    }

    #[test]
    fn forced_feature_target_assignment() {
        let scm = ScmGraph::new(1, vec![]).unwrap();
        let cfg = PriorConfig { subnode_count_range: (2, 2), feature_count_range: (1, 1), ..Default::default() };
        let fg = expand_to_functional(&scm, &cfg, &mut from_seed(5)).unwrap();
        let mut all = fg.features().to_vec();
        all.push(fg.target().unwrap());
        all.sort();
        assert_eq!(all, vec![0, 1]);
    }

    #[test]
    fn too_few_subnodes_is_sampling_error() {
        let scm = ScmGraph::new(1, vec![]).unwrap();
        let cfg = PriorConfig { subnode_count_range: (1, 1), feature_count_range: (1, 1), ..Default::default() };
        assert!(matches!(expand_to_functional(&scm, &cfg, &mut from_seed(5)), Err(Error::Sampling(_))));
    }

    #[test]
    fn disjoint_features_and_target() {
        let scm = ScmGraph::new(4, vec![(0, 1), (1, 2), (0, 3)]).unwrap();
        let cfg = PriorConfig { feature_count_range: (3, 3), subnode_count_range: (3, 3), ..Default::default() };
        let fg = expand_to_functional(&scm, &cfg, &mut from_seed(9)).unwrap();
        assert_eq!(fg.features().len(), 3);
        assert!(!fg.features().contains(&fg.target().unwrap()));
    }

    #[test]
    fn forward_trivial_cases() {
        let single = FunctionalGraph::from_parts(
            vec![vec![0]],
            vec![vec![]],
            vec![],
            vec![Activation::Identity],
            vec![NoiseSpec::Gaussian { scale: 0.0 }],
            1e4,
        )
        .unwrap();
        assert_eq!(single.forward(&mut from_seed(0)).unwrap().get(0), 0.0);

        let g = chain(2.0);
        let v = g.forward_with_noise(&[1.5, 0.0], None).unwrap();
        assert_eq!(v.get(1), 3.0);
    }

    #[test]
    fn forward_clips() {
        let g = chain(1e6);
        let v = g.forward_with_noise(&[1.0, 0.0], None).unwrap();
        assert_eq!(v.get(1), 1e4);
    }

    #[test]
    fn forward_is_seed_deterministic() {
        let cfg = PriorConfig::default();
        let mut rng = from_seed(11);
        let scm = sample_scm(&cfg, &mut rng).unwrap();
        let fg = expand_graph(&scm, &cfg, &mut rng).unwrap();
        let a = fg.forward(&mut from_seed(1)).unwrap();
        let b = fg.forward(&mut from_seed(1)).unwrap();
        let c = fg.forward(&mut from_seed(2)).unwrap();
        assert_eq!(a, b);
        for v in 0..fg.num_subnodes() {
            if fg.noise_specs()[v].scale() > 0.0 {
                assert_ne!(a.get(v), c.get(v));
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(Activation::Softplus.apply(1000.0), 1000.0);
        assert!(Activation::Softplus.apply(-1000.0) >= 0.0);
        assert!((Activation::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
