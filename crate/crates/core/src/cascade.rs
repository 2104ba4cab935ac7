//! Independent Cascade spreading with a noisy symptom observation layer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SeedSchedule};
use crate::rng::{substream, unit, Purpose};

/// Observed symptom: `+1` positive, `-1` negative, `0` none.
pub type Symptom = i8;

/// Propagation probability `p` and symptom probability `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadParams {
    pub p: f64,
    pub q: f64,
}

impl SpreadParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        if !ok(p) || !ok(q) {
            return Err(Error::Parameter(format!(
                "probabilities must lie in [0, 1], got p={p}, q={q}"
            )));
        }
        Ok(SpreadParams { p, q })
    }

    /// Mean of the two squared coordinate errors.
    pub fn mse(&self, truth: &SpreadParams) -> f64 {
        ((self.p - truth.p).powi(2) + (self.q - truth.q).powi(2)) / 2.0
    }
}

/// Symptom law for entities that are not carriers: `(b0, b1, b2)` =
/// probabilities of no symptom, a positive and a negative symptom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    triples: Vec<[f64; 3]>,
}

impl BaselineModel {
    pub fn from_triples(triples: Vec<[f64; 3]>) -> Result<Self> {
        for (v, t) in triples.iter().enumerate() {
            if t.iter().any(|&b| !(0.0..=1.0).contains(&b)) {
                return Err(Error::Parameter(format!(
                    "baseline of entity {v} has a component outside [0, 1]: {t:?}"
                )));
            }
            if (t.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "baseline of entity {v} does not sum to one: {t:?}"
                )));
            }
        }
        Ok(BaselineModel { triples })
    }

    /// Same triple for every one of `entities`.
    pub fn uniform(entities: usize, b0: f64, b1: f64, b2: f64) -> Result<Self> {
        Self::from_triples(vec![[b0, b1, b2]; entities])
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triple(&self, v: usize) -> [f64; 3] {
        self.triples[v]
    }

    pub fn triples(&self) -> &[[f64; 3]] {
        &self.triples
    }
}

/// Latent carrier flags, one per entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionVector(pub Vec<bool>);

impl InfectionVector {
    pub fn carriers(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &a)| a).map(|(v, _)| v)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&a| a).count()
    }
}

/// Observed symptoms, one per entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymptomVector(pub Vec<Symptom>);

/// The two independent streams one hidden cascade consumes.
pub struct CascadeRng {
    pub arcs: ChaCha8Rng,
    pub symptoms: ChaCha8Rng,
}

impl CascadeRng {
    pub fn new(base_seed: u64, index: u64) -> Self {
        CascadeRng {
            arcs: substream(base_seed, Purpose::ArcFiring, index),
            symptoms: substream(base_seed, Purpose::Symptom, index),
        }
    }
}

/// Reusable buffers for repeated cascades on one graph.
pub struct CascadeSimulator<'g> {
    graph: &'g Graph,
    seeds: &'g SeedSchedule,
    arc_uniforms: Vec<f64>,
    infected: Vec<bool>,
    frontier: Vec<usize>,
    next: Vec<usize>,
}

impl<'g> CascadeSimulator<'g> {
    pub fn new(graph: &'g Graph, seeds: &'g SeedSchedule) -> Result<Self> {
        seeds.validate_for(graph)?;
        Ok(CascadeSimulator {
            graph,
            seeds,
            arc_uniforms: vec![0.0; graph.arc_count()],
            infected: vec![false; graph.node_count()],
            frontier: Vec::new(),
            next: Vec::new(),
        })
    }

    /// Runs one cascade; returns the carrier flags.
    ///
    /// Arc `i` fires iff the `i`-th draw of `rng` is below `p`. Each carrier
    /// is activated once, so each of its out-arcs is tried at most once.
    pub fn run_ic<R: Rng + ?Sized>(&mut self, p: f64, rng: &mut R) -> &[bool] {
        for u in self.arc_uniforms.iter_mut() {
            *u = unit(rng);
        }
        self.infected.fill(false);
        self.frontier.clear();
        let entries = self.seeds.entries();
        let mut pending = 0;
        let mut step = 0;
        loop {
            while pending < entries.len() && entries[pending].1 == step {
                let v = entries[pending].0;
                if !self.infected[v] {
                    self.infected[v] = true;
                    self.frontier.push(v);
                }
                pending += 1;
            }
            if self.frontier.is_empty() && pending == entries.len() {
                break;
            }
            self.next.clear();
            for &u in &self.frontier {
                for arc in self.graph.arc_range(u) {
                    if self.arc_uniforms[arc] < p {
                        let w = self.graph.arc_target(arc);
                        if !self.infected[w] {
                            self.infected[w] = true;
                            self.next.push(w);
                        }
                    }
                }
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
            step += 1;
        }
        &self.infected
    }

    /// Runs a cascade and overlays symptoms, writing them into `out`.
    pub fn simulate_into(
        &mut self,
        theta: SpreadParams,
        baseline: &BaselineModel,
        rng: &mut CascadeRng,
        out: &mut [Symptom],
    ) {
        self.run_ic(theta.p, &mut rng.arcs);
        for (v, z) in out.iter_mut().enumerate() {
            *z = draw_symptom(self.infected[v], theta.q, baseline.triple(v), &mut rng.symptoms);
        }
    }
}

#[inline]
fn draw_symptom<R: Rng + ?Sized>(carrier: bool, q: f64, b: [f64; 3], rng: &mut R) -> Symptom {
    let u = unit(rng);
    if carrier {
        if u < q {
            1
        } else {
            0
        }
    } else if u < b[1] {
        1
    } else if u < b[1] + b[2] {
        -1
    } else {
        0
    }
}

/// Runs one Independent Cascade from `seeds` and returns who became a carrier.
pub fn run_ic<R: Rng + ?Sized>(graph: &Graph, seeds: &SeedSchedule, p: f64, rng: &mut R) -> Result<InfectionVector> {
    check_probability("p", p)?;
    let mut sim = CascadeSimulator::new(graph, seeds)?;
    Ok(InfectionVector(sim.run_ic(p, rng).to_vec()))
}

/// Draws one symptom per entity given the carrier flags.
pub fn assign_symptoms<R: Rng + ?Sized>(
    infections: &InfectionVector,
    q: f64,
    baseline: &BaselineModel,
    rng: &mut R,
) -> Result<SymptomVector> {
    check_probability("q", q)?;
    if baseline.len() != infections.0.len() {
        return Err(Error::Dimension(format!(
            "baseline has {} entities, infection vector has {}",
            baseline.len(),
            infections.0.len()
        )));
    }
    Ok(SymptomVector(
        infections
            .0
            .iter()
            .enumerate()
            .map(|(v, &a)| draw_symptom(a, q, baseline.triple(v), rng))
            .collect(),
    ))
}

/// One hidden cascade: the infection vector is simulated and discarded.
pub fn simulate_hidden_cascade(
    graph: &Graph,
    seeds: &SeedSchedule,
    theta: SpreadParams,
    baseline: &BaselineModel,
    rng: &mut CascadeRng,
) -> Result<SymptomVector> {
    let infections = run_ic(graph, seeds, theta.p, &mut rng.arcs)?;
    assign_symptoms(&infections, theta.q, baseline, &mut rng.symptoms)
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name}={x} is not a probability")))
    }
}
