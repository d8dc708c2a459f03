//! Hand-built three-node graphs whose drifting edge realizes one specific
//! kind of distribution shift.
//!
//! * covariate: `A → B` drifts, `A → Y`; features `{A, B}`. `P(X)` moves,
//!   `P(Y | X) = P(Y | A)` and `P(Y)` stay fixed.
//! * concept: `U → X → Y` with `X → Y` drifting; feature `X`. `P(X)` stays
//!   fixed while `P(Y | X)` moves.
//! * prior probability: `R → Y → X` with `R → Y` drifting; feature `X`.
//!   `P(Y)` moves while `P(X | Y)` stays fixed.

use serde::{Deserialize, Serialize};

use super::{discretize_target, functional_shift_set, run_domains, SecondOrderScm, ShiftedGraph};
use crate::dataset::{DriftDataset, TemporalDomainSchedule};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scm::{Activation, FunctionalEdge, FunctionalGraph, NoiseSpec, ScmGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftKind {
    Covariate,
    PriorProbability,
    Concept,
}

#[derive(Debug, Clone)]
pub struct WitnessFixture {
    pub kind: ShiftKind,
    pub scm: ScmGraph,
    pub graph: FunctionalGraph,
    pub shifted_causal: Vec<usize>,
    pub driver: SecondOrderScm,
}

/// One Z subnode per causal node and one intermediate per child, laid out
/// as `[Z_0, F_1, Z_1, F_2, Z_2]` for a graph with edges into 1 and 2.
struct Layout {
    z: [usize; 3],
    f: [Option<usize>; 3],
}

fn edge(from: usize, to: usize, weight: f64, origin: usize) -> FunctionalEdge {
    FunctionalEdge { from, to, weight, origin: Some(origin) }
}

fn identity_driver(shifted: Vec<usize>, scale: f64) -> Result<SecondOrderScm> {
    let g = FunctionalGraph::from_parts(
        vec![vec![0], vec![1]],
        vec![vec![], vec![]],
        vec![FunctionalEdge { from: 0, to: 1, weight: 1.0, origin: Some(0) }],
        vec![Activation::Identity; 2],
        vec![NoiseSpec::Gaussian { scale: 0.0 }; 2],
        1e4,
    )?;
    SecondOrderScm::from_parts(g, 0, vec![0.0; 2], shifted.into_iter().map(|e| (e, 1)).collect(), scale)
}

pub fn witness_fixture(kind: ShiftKind) -> Result<WitnessFixture> {
    let l = Layout { z: [0, 2, 4], f: [None, Some(1), Some(3)] };
    let gauss = |s| NoiseSpec::Gaussian { scale: s };
    let (scm, edges, activations, noise, features, target, shifted_causal, scale) = match kind {
        ShiftKind::Covariate => {
            // A → B (edge 0, drifting), A → Y (edge 1)
            let scm = ScmGraph::new(3, vec![(0, 1), (0, 2)])?;
            let edges = vec![
                edge(l.z[0], l.f[1].unwrap(), 1.0, 0),
                edge(l.f[1].unwrap(), l.z[1], 1.0, 0),
                edge(l.z[0], l.f[2].unwrap(), 1.0, 1),
                edge(l.f[2].unwrap(), l.z[2], 1.0, 1),
            ];
            let act = vec![Activation::Identity; 5];
            let noise = vec![gauss(1.0), gauss(0.0), gauss(0.3), gauss(0.0), gauss(0.3)];
            (scm, edges, act, noise, vec![l.z[0], l.z[1]], l.z[2], vec![0], 1.5)
        }
        ShiftKind::Concept => {
            // U → X (edge 0), X → Y (edge 1, drifting)
            let scm = ScmGraph::new(3, vec![(0, 1), (1, 2)])?;
            let edges = vec![
                edge(l.z[0], l.f[1].unwrap(), 1.0, 0),
                edge(l.f[1].unwrap(), l.z[1], 1.0, 0),
                edge(l.z[1], l.f[2].unwrap(), 1.0, 1),
                edge(l.f[2].unwrap(), l.z[2], 1.0, 1),
            ];
            let act = vec![Activation::Identity; 5];
            let noise = vec![gauss(1.0), gauss(0.0), gauss(0.3), gauss(0.0), gauss(0.3)];
            (scm, edges, act, noise, vec![l.z[1]], l.z[2], vec![1], 1.5)
        }
        ShiftKind::PriorProbability => {
            // R → Y (edge 0, drifting), Y → X (edge 1); R is non-negative so
            // scaling its weight moves the mean of Y.
            let scm = ScmGraph::new(3, vec![(0, 1), (1, 2)])?;
            let edges = vec![
                edge(l.z[0], l.f[1].unwrap(), 1.0, 0),
                edge(l.f[1].unwrap(), l.z[1], 1.0, 0),
                edge(l.z[1], l.f[2].unwrap(), 1.0, 1),
                edge(l.f[2].unwrap(), l.z[2], 1.0, 1),
            ];
            let mut act = vec![Activation::Identity; 5];
            act[l.z[0]] = Activation::Abs;
            let noise = vec![gauss(1.0), gauss(0.0), gauss(0.1), gauss(0.0), gauss(0.3)];
            (scm, edges, act, noise, vec![l.z[2]], l.z[1], vec![0], 0.9)
        }
    };
    let mut graph = FunctionalGraph::from_parts(
        vec![vec![l.z[0]], vec![l.z[1]], vec![l.z[2]]],
        vec![vec![], vec![l.f[1].unwrap()], vec![l.f[2].unwrap()]],
        edges,
        activations,
        noise,
        1e4,
    )?;
    graph.set_features_target(features, target)?;
    let driver = identity_driver(functional_shift_set(&graph, &shifted_causal), scale)?;
    Ok(WitnessFixture { kind, scm, graph, shifted_causal, driver })
}

impl WitnessFixture {
    /// Draw `domains` equally spaced domains of `per_domain` rows with binary
    /// median-split labels.
    pub fn sample(&self, domains: usize, per_domain: usize, rng: &mut Rng) -> Result<DriftDataset> {
        let schedule = TemporalDomainSchedule::new((0..domains).map(|k| k as f64).collect(), vec![per_domain; domains])?;
        let mut driver = self.driver.clone();
        driver.set_input_range(0.0, (domains.max(2) - 1) as f64);
        let mut process = ShiftedGraph::new(&self.graph, Some(&driver));
        let raw = run_domains(&mut process, &schedule, rng)?;
        let labels = discretize_target(&raw.targets, 2, 0.0, rng)?;
        let d = self.graph.features().len();
        let flat: Vec<f64> = raw.features.into_iter().flatten().collect();
        let x = ndarray::Array2::from_shape_vec((raw.domains.len(), d), flat).map_err(|e| Error::Data(e.to_string()))?;
        DriftDataset::new(x, labels, raw.domains, 2)
    }
}
