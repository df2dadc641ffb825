//! Differential evolution over block dimensions.
//!
//! Canonical DE/rand/1/bin on a real-valued genome. Each gene decodes to a
//! block edge by rounding and clamping to the configured bounds; the genome
//! holds 3 genes (one shared spec) or 24 (one spec per subband). All random
//! numbers are drawn on the calling thread before a generation is scored, so
//! parallel scoring cannot change which candidates are generated.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{decompose_sources, fuse_decomposed, BlockPlan, FusionConfig, TiePolicy};
use crate::metrics::{joint_score, EvaluationReport, MetricWeights};
use crate::swt::{swt_inverse, SubbandSet, WaveletFilter};
use crate::volume::{map_project, Axis, BlockSpec, Dims, MapImage, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeMode {
    Shared,
    PerSubband,
}

impl DeMode {
    pub const fn specs(self) -> usize {
        match self {
            DeMode::Shared => 1,
            DeMode::PerSubband => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub population: usize,
    /// Mutation factor F.
    pub mutation: f64,
    /// Crossover rate CR.
    pub crossover: f64,
    pub generations: usize,
    /// Inclusive integer bounds for h, w, l.
    pub bounds: [(usize, usize); 3],
    pub mode: DeMode,
    pub seed: u64,
    /// Stop after this many generations without improving the best score.
    pub stall_generations: usize,
    pub wavelet: String,
}

impl DeConfig {
    /// Defaults with bounds `[2, n / 2]` on every axis.
    pub fn for_dims(dims: Dims) -> Self {
        let half = |n: usize| (n / 2).max(2);
        Self {
            population: 20,
            mutation: 0.5,
            crossover: 0.9,
            generations: 50,
            bounds: [(2, half(dims.nx)), (2, half(dims.ny)), (2, half(dims.nz))],
            mode: DeMode::Shared,
            seed: 0,
            stall_generations: 10,
            wavelet: "haar".into(),
        }
    }

    pub fn with_uniform_bounds(mut self, lo: usize, hi: usize) -> Self {
        self.bounds = [(lo, hi); 3];
        self
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.population < 4 {
            return bad(format!("population {} < 4", self.population));
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return bad(format!("mutation factor {} outside (0, 2]", self.mutation));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad(format!("crossover rate {} outside [0, 1]", self.crossover));
        }
        for ((lo, hi), n) in self.bounds.iter().zip(dims.as_array()) {
            if *lo < 2 || lo > hi || *hi > n {
                return bad(format!("infeasible bounds [{lo}, {hi}] for axis of length {n}"));
            }
        }
        WaveletFilter::by_name(&self.wavelet)?;
        Ok(())
    }

    /// Number of distinct decoded candidates.
    pub fn search_space_size(&self) -> u128 {
        let per_spec: u128 = self.bounds.iter().map(|(lo, hi)| (hi - lo + 1) as u128).product();
        per_spec.pow(self.mode.specs() as u32)
    }
}

/// A decoded candidate: one block spec (shared) or eight (canonical subband order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Candidate(pub Vec<BlockSpec>);

impl Candidate {
    pub fn shared(spec: BlockSpec) -> Self {
        Self(vec![spec])
    }

    pub fn plan(&self) -> BlockPlan {
        match self.0.as_slice() {
            [spec] => BlockPlan::Shared(*spec),
            specs => {
                let arr: [BlockSpec; 8] = specs.try_into().expect("candidate holds 1 or 8 specs");
                BlockPlan::per_subband(arr)
            }
        }
    }

    pub fn dims(&self) -> Vec<[usize; 3]> {
        self.0.iter().map(BlockSpec::as_array).collect()
    }
}

/// Scores block plans against a fixed set of sources, caching by candidate.
pub struct CandidateEvaluator {
    decomposed: Vec<SubbandSet>,
    filter: WaveletFilter,
    source_maps: Vec<MapImage>,
    weights: MetricWeights,
    dims: Dims,
    cache: HashMap<Candidate, EvaluationReport>,
    hits: usize,
}

impl CandidateEvaluator {
    pub fn new(sources: &[Volume], filter: WaveletFilter, weights: MetricWeights) -> Result<Self> {
        weights.validate()?;
        let decomposed = decompose_sources(sources, &filter)?;
        let source_maps = sources.iter().map(|s| map_project(s, Axis::Z)).collect();
        Ok(Self {
            dims: sources[0].dims(),
            decomposed,
            filter,
            source_maps,
            weights,
            cache: HashMap::new(),
            hits: 0,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn source_maps(&self) -> &[MapImage] {
        &self.source_maps
    }

    /// Uncached: fuse, invert, project along z, score.
    pub fn report(&self, candidate: &Candidate) -> Result<EvaluationReport> {
        let (bands, _) = fuse_decomposed(&self.decomposed, &candidate.plan())?;
        let fused = swt_inverse(&bands, &self.filter)?;
        joint_score(&map_project(&fused, Axis::Z), &self.source_maps, &self.weights)
    }

    pub fn evaluate(&mut self, candidate: &Candidate) -> Result<f64> {
        Ok(self.evaluate_batch(std::slice::from_ref(candidate))?[0])
    }

    /// Scores a batch; uncached candidates are evaluated in parallel.
    pub fn evaluate_batch(&mut self, candidates: &[Candidate]) -> Result<Vec<f64>> {
        let mut pending: Vec<&Candidate> = Vec::new();
        for c in candidates {
            if self.cache.contains_key(c) || pending.contains(&c) {
                self.hits += 1;
            } else {
                pending.push(c);
            }
        }
        let this = &*self;
        let fresh: Vec<EvaluationReport> = pending.par_iter().map(|c| this.report(c)).collect::<Result<_>>()?;
        for (c, r) in pending.into_iter().zip(fresh) {
            self.cache.insert(c.clone(), r);
        }
        Ok(candidates.iter().map(|c| self.cache[c].total).collect())
    }

    pub fn cached_report(&self, candidate: &Candidate) -> Option<&EvaluationReport> {
        self.cache.get(candidate)
    }

    pub fn cache_hits(&self) -> usize {
        self.hits
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }
}

/// One-shot score of a single shared block spec.
pub fn evaluate_candidate(sources: &[Volume], spec: BlockSpec, weights: &MetricWeights) -> Result<f64> {
    let eval = CandidateEvaluator::new(sources, WaveletFilter::haar(), *weights)?;
    Ok(eval.report(&Candidate::shared(spec))?.total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_score: f64,
    pub mean_score: f64,
    pub best_dims: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeTrace {
    pub seed: u64,
    pub mode: DeMode,
    pub generations: Vec<GenerationRecord>,
    /// Distinct candidates actually fused.
    pub evaluations: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub config: FusionConfig,
    pub candidate: Candidate,
    pub report: EvaluationReport,
    pub trace: DeTrace,
}

struct Genome {
    lower: Vec<f64>,
    upper: Vec<f64>,
    bounds: Vec<(usize, usize)>,
}

impl Genome {
    fn new(de: &DeConfig) -> Self {
        let bounds: Vec<(usize, usize)> = (0..de.mode.specs()).flat_map(|_| de.bounds).collect();
        // half a step past each bound so rounding gives every integer equal mass
        let lower = bounds.iter().map(|(lo, _)| *lo as f64 - 0.5).collect();
        let upper = bounds.iter().map(|(_, hi)| *hi as f64 + 0.5).collect();
        Self { lower, upper, bounds }
    }

    fn len(&self) -> usize {
        self.bounds.len()
    }

    fn decode(&self, genes: &[f64]) -> Candidate {
        let edges: Vec<usize> = genes
            .iter()
            .zip(&self.bounds)
            .map(|(g, (lo, hi))| (g.round().max(0.0) as usize).clamp(*lo, *hi))
            .collect();
        Candidate(edges.chunks_exact(3).map(|c| BlockSpec::new(c[0], c[1], c[2])).collect())
    }
}

fn distinct_others(rng: &mut ChaCha8Rng, n: usize, exclude: usize) -> [usize; 3] {
    let mut picked = [usize::MAX; 3];
    let mut k = 0;
    while k < 3 {
        let r = rng.gen_range(0..n);
        if r != exclude && !picked[..k].contains(&r) {
            picked[k] = r;
            k += 1;
        }
    }
    picked
}

fn first_argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn record(generation: usize, population: &[Candidate], scores: &[f64], best: usize) -> GenerationRecord {
    GenerationRecord {
        generation,
        best_score: scores[best],
        mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
        best_dims: population[best].dims(),
    }
}

/// Maximizes the joint score of the fused projection over block dimensions.
pub fn optimize_block_size(sources: &[Volume], weights: &MetricWeights, de: &DeConfig) -> Result<Optimized> {
    let filter = WaveletFilter::by_name(&de.wavelet)?;
    let mut eval = CandidateEvaluator::new(sources, filter, *weights)?;
    optimize_with(&mut eval, de)
}

/// Runs DE against an existing evaluator (and its cache).
pub fn optimize_with(eval: &mut CandidateEvaluator, de: &DeConfig) -> Result<Optimized> {
    de.validate(eval.dims())?;
    if de.wavelet != eval.filter.name {
        return Err(Error::InvalidConfig(format!(
            "evaluator uses `{}` but DE config asks for `{}`",
            eval.filter.name, de.wavelet
        )));
    }
    let genome = Genome::new(de);
    let dim = genome.len();
    let np = de.population;
    let mut rng = ChaCha8Rng::seed_from_u64(de.seed);

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| (0..dim).map(|j| rng.gen_range(genome.lower[j]..genome.upper[j])).collect())
        .collect();
    let mut decoded: Vec<Candidate> = pop.iter().map(|g| genome.decode(g)).collect();
    let mut scores = eval.evaluate_batch(&decoded)?;
    let mut best = first_argmax(&scores);
    let mut trace = vec![record(0, &decoded, &scores, best)];
    let mut stall = 0;

    for generation in 1..=de.generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let [r1, r2, r3] = distinct_others(&mut rng, np, i);
                let forced = rng.gen_range(0..dim);
                (0..dim)
                    .map(|j| {
                        if j == forced || rng.gen::<f64>() < de.crossover {
                            let v = pop[r1][j] + de.mutation * (pop[r2][j] - pop[r3][j]);
                            v.clamp(genome.lower[j], genome.upper[j])
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_decoded: Vec<Candidate> = trials.iter().map(|g| genome.decode(g)).collect();
        let trial_scores = eval.evaluate_batch(&trial_decoded)?;

        let previous_best = scores[best];
        for (i, ((genes, cand), score)) in trials.into_iter().zip(trial_decoded).zip(trial_scores).enumerate() {
            if score >= scores[i] {
                pop[i] = genes;
                decoded[i] = cand;
                scores[i] = score;
            }
        }
        best = first_argmax(&scores);
        trace.push(record(generation, &decoded, &scores, best));

        if scores[best] > previous_best {
            stall = 0;
        } else {
            stall += 1;
            if stall >= de.stall_generations {
                break;
            }
        }
    }

    let candidate = decoded[best].clone();
    let report = eval
        .cached_report(&candidate)
        .cloned()
        .expect("best candidate was evaluated");
    Ok(Optimized {
        config: FusionConfig {
            blocks: candidate.plan(),
            wavelet: de.wavelet.clone(),
            tie_policy: TiePolicy::LowestIndex,
        },
        candidate,
        report,
        trace: DeTrace {
            seed: de.seed,
            mode: de.mode,
            generations: trace,
            evaluations: eval.cache_len(),
            cache_hits: eval.cache_hits(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn two_focus(dims: Dims) -> Vec<Volume> {
        // a bright diagonal line, sharp in one half for each source
        let make = |sharp_low: bool| {
            Volume::from_fn(dims, Spacing::default(), |x, y, z| {
                let sharp = (z < dims.nz / 2) == sharp_low;
                let d = (x as f64 - z as f64).abs() + (y as f64 - z as f64).abs();
                if sharp {
                    if d < 0.5 { 1.0 } else { 0.0 }
                } else {
                    0.4 * (-d * d / 4.0).exp()
                }
            })
            .unwrap()
        };
        vec![make(true), make(false)]
    }

    #[test]
    fn config_validation() {
        let dims = Dims::new(16, 16, 16);
        let de = DeConfig::for_dims(dims);
        assert_eq!(de.bounds, [(2, 8); 3]);
        assert!(de.validate(dims).is_ok());
        assert!(DeConfig { population: 3, ..de.clone() }.validate(dims).is_err());
        assert!(DeConfig { mutation: 0.0, ..de.clone() }.validate(dims).is_err());
        assert!(DeConfig { crossover: 1.5, ..de.clone() }.validate(dims).is_err());
        assert!(de.clone().with_uniform_bounds(1, 4).validate(dims).is_err());
        assert!(de.clone().with_uniform_bounds(6, 5).validate(dims).is_err());
        assert!(de.clone().with_uniform_bounds(2, 17).validate(dims).is_err());
        assert_eq!(de.clone().with_uniform_bounds(4, 5).search_space_size(), 8);
        assert_eq!(DeConfig { mode: DeMode::PerSubband, ..de.with_uniform_bounds(4, 5) }.search_space_size(), 1 << 24);
    }

    #[test]
    fn decode_rounds_and_clamps() {
        let de = DeConfig::for_dims(Dims::new(16, 16, 16)).with_uniform_bounds(3, 6);
        let g = Genome::new(&de);
        let c = g.decode(&[2.5, 4.49, 6.5]);
        assert_eq!(c.0, vec![BlockSpec::new(3, 4, 6)]);
    }

    #[test]
    fn memoization_serves_repeats() {
        let sources = two_focus(Dims::new(12, 12, 12));
        let mut eval = CandidateEvaluator::new(&sources, WaveletFilter::haar(), MetricWeights::default()).unwrap();
        let c = Candidate::shared(BlockSpec::new(3, 3, 3));
        let a = eval.evaluate(&c).unwrap();
        assert_eq!(eval.cache_hits(), 0);
        let b = eval.evaluate(&c).unwrap();
        assert_eq!(eval.cache_hits(), 1);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(eval.cache_len(), 1);
    }

    #[test]
    fn trace_is_elitist_and_seeded() {
        let sources = two_focus(Dims::new(12, 12, 12));
        let mut de = DeConfig::for_dims(Dims::new(12, 12, 12));
        de.generations = 6;
        de.population = 6;
        de.seed = 42;
        let w = MetricWeights::default();
        let a = optimize_block_size(&sources, &w, &de).unwrap();
        let b = optimize_block_size(&sources, &w, &de).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.config, b.config);
        for pair in a.trace.generations.windows(2) {
            assert!(pair[1].best_score >= pair[0].best_score);
        }
        assert_eq!(a.report.total, a.trace.generations.last().unwrap().best_score);
    }

    #[test]
    fn per_subband_mode_decodes_eight_specs() {
        let sources = two_focus(Dims::new(12, 12, 12));
        let mut de = DeConfig::for_dims(Dims::new(12, 12, 12));
        de.mode = DeMode::PerSubband;
        de.generations = 2;
        de.population = 5;
        let out = optimize_block_size(&sources, &MetricWeights::default(), &de).unwrap();
        assert!(matches!(out.config.blocks, BlockPlan::PerSubband(ref m) if m.len() == 8));
        assert_eq!(out.trace.generations[0].best_dims.len(), 8);
    }
}
