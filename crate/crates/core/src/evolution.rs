//! Generational loop: tournament selection, gene-boundary crossover,
//! gene add/delete plus codon mutation, elitist replacement.
//!
//! Every offspring pair of every generation draws from its own random stream
//! derived from `(seed, generation, pair)`, so results do not depend on how
//! rayon schedules the evaluations.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::genome::{FlatGenotype, Gene, ModularGenotype, DEFAULT_GENE_LENGTH};
use crate::grammar::Grammar;
use crate::mapping::{map_flat, map_individual, MapOutcome, Variant};
use crate::network::{Network, Scratch};
use crate::rng::{stream, Rng};

/// Loss assigned to invalid individuals.
pub const WORST: f64 = f64::INFINITY;

/// Lower probability clamp inside the cross-entropy logarithm.
pub const CE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    CrossEntropy,
    Mse,
    /// Maximizes the connection count (loss = -connections).
    Connections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub mu: usize,
    pub generations: usize,
    pub p_c: f64,
    pub p_m_choices: Vec<f64>,
    pub tournament_r: usize,
    pub p_elite: f64,
    /// Gene length `m`.
    pub gene_length: usize,
    pub sigma_range: (usize, usize),
    pub max_wraps: usize,
    pub variant: Variant,
    pub objective: Objective,
    /// Initial codon count range for flat genotypes.
    pub ge_length_range: (usize, usize),
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            mu: 200,
            generations: 500,
            p_c: 0.9,
            p_m_choices: vec![0.001, 0.002, 0.003, 0.01],
            tournament_r: 7,
            p_elite: 0.05,
            gene_length: DEFAULT_GENE_LENGTH,
            sigma_range: (2, 10),
            max_wraps: 0,
            variant: Variant::Mge,
            objective: Objective::CrossEntropy,
            ge_length_range: (50, 150),
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mu < 2 {
            return Err(invalid("mu", "population size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.p_c) {
            return Err(invalid("p_c", format!("{} is not a probability", self.p_c)));
        }
        if self.p_m_choices.is_empty() {
            return Err(invalid("p_m_choices", "needs at least one value"));
        }
        if let Some(p) = self.p_m_choices.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid("p_m_choices", format!("{p} is not a probability")));
        }
        if self.tournament_r < 1 {
            return Err(invalid("tournament_r", "must be at least 1"));
        }
        if !(self.p_elite > 0.0 && self.p_elite < 1.0) {
            return Err(invalid("p_elite", format!("{} not in (0, 1)", self.p_elite)));
        }
        if self.gene_length < 1 {
            return Err(invalid("gene_length", "must be at least 1"));
        }
        let (lo, hi) = self.sigma_range;
        if lo < 1 || lo > hi {
            return Err(invalid("sigma_range", format!("[{lo}, {hi}] needs 1 <= lo <= hi")));
        }
        let (lo, hi) = self.ge_length_range;
        if lo < 1 || lo > hi {
            return Err(invalid("ge_length_range", format!("[{lo}, {hi}] needs 1 <= lo <= hi")));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.p_elite * self.mu as f64).ceil() as usize).clamp(1, self.mu)
    }
}

/// A genotype encoding together with its variation operators.
pub trait Representation: Sync {
    type Genotype: Clone + Send + Sync + PartialEq;

    fn random(&self, rng: &mut Rng) -> Self::Genotype;
    fn crossover(&self, a: &Self::Genotype, b: &Self::Genotype, rng: &mut Rng) -> (Self::Genotype, Self::Genotype);
    fn mutate(&self, g: &mut Self::Genotype, p_m: f64, rng: &mut Rng);
    fn map(&self, g: &Self::Genotype) -> MapOutcome;
}

/// Prefix swap at a uniform cut `k` in `[1, min_len - 1]`; lengths are kept.
/// Parents shorter than two units are copied.
pub fn prefix_swap<T: Clone>(a: &[T], b: &[T], rng: &mut Rng) -> (Vec<T>, Vec<T>) {
    let min = a.len().min(b.len());
    if min < 2 {
        return (a.to_vec(), b.to_vec());
    }
    let k = rng.random_range(1..min);
    prefix_swap_at(a, b, k)
}

pub fn prefix_swap_at<T: Clone>(a: &[T], b: &[T], k: usize) -> (Vec<T>, Vec<T>) {
    let c1 = b[..k].iter().chain(&a[k..]).cloned().collect();
    let c2 = a[..k].iter().chain(&b[k..]).cloned().collect();
    (c1, c2)
}

fn mutate_codons(codons: &mut [u8], p: f64, rng: &mut Rng) {
    if p <= 0.0 {
        return;
    }
    for c in codons {
        if rng.random::<f64>() < p {
            *c = rng.random();
        }
    }
}

/// Modular genotypes mapped gene by gene.
#[derive(Debug, Clone)]
pub struct ModularRepr {
    pub grammar: Grammar,
    pub variant: Variant,
    pub classes: usize,
    pub sigma_range: (usize, usize),
    pub gene_length: usize,
}

impl Representation for ModularRepr {
    type Genotype = ModularGenotype;

    fn random(&self, rng: &mut Rng) -> ModularGenotype {
        ModularGenotype::random(rng, self.sigma_range, self.gene_length)
    }

    fn crossover(&self, a: &ModularGenotype, b: &ModularGenotype, rng: &mut Rng) -> (ModularGenotype, ModularGenotype) {
        let (c1, c2) = prefix_swap(a.genes(), b.genes(), rng);
        (
            ModularGenotype::new(c1).expect("crossover keeps lengths"),
            ModularGenotype::new(c2).expect("crossover keeps lengths"),
        )
    }

    /// With probability `p_m` one gene is added or deleted (even odds, never
    /// below one gene); then each codon is replaced with probability `p_m / 2`.
    fn mutate(&self, g: &mut ModularGenotype, p_m: f64, rng: &mut Rng) {
        let genes = g.genes_mut();
        if p_m > 0.0 && rng.random::<f64>() < p_m {
            if rng.random_bool(0.5) {
                let at = rng.random_range(0..=genes.len());
                genes.insert(at, Gene::random(rng, self.gene_length));
            } else if genes.len() > 1 {
                let at = rng.random_range(0..genes.len());
                genes.remove(at);
            }
        }
        for gene in genes.iter_mut() {
            mutate_codons(&mut gene.0, p_m / 2.0, rng);
        }
    }

    fn map(&self, g: &ModularGenotype) -> MapOutcome {
        map_individual(g, &self.grammar, self.variant, self.classes)
    }
}

/// Flat codon strings mapped with a whole-network grammar.
#[derive(Debug, Clone)]
pub struct FlatRepr {
    pub grammar: Grammar,
    pub classes: usize,
    pub length_range: (usize, usize),
    pub max_wraps: usize,
    /// Codons inserted or removed by the length mutation.
    pub block: usize,
}

impl Representation for FlatRepr {
    type Genotype = FlatGenotype;

    fn random(&self, rng: &mut Rng) -> FlatGenotype {
        FlatGenotype::random(rng, self.length_range)
    }

    /// Same-point prefix swap on codons; only the length mutation changes
    /// genotype length.
    fn crossover(&self, a: &FlatGenotype, b: &FlatGenotype, rng: &mut Rng) -> (FlatGenotype, FlatGenotype) {
        let (c1, c2) = prefix_swap(a.codons(), b.codons(), rng);
        (
            FlatGenotype::new(c1).expect("crossover keeps lengths"),
            FlatGenotype::new(c2).expect("crossover keeps lengths"),
        )
    }

    fn mutate(&self, g: &mut FlatGenotype, p_m: f64, rng: &mut Rng) {
        let codons = g.codons_mut();
        if p_m > 0.0 && rng.random::<f64>() < p_m {
            if rng.random_bool(0.5) {
                let at = rng.random_range(0..=codons.len());
                let block: Vec<u8> = (0..self.block).map(|_| rng.random()).collect();
                codons.splice(at..at, block);
            } else if codons.len() > self.block {
                let at = rng.random_range(0..=codons.len() - self.block);
                codons.drain(at..at + self.block);
            }
        }
        mutate_codons(codons, p_m / 2.0, rng);
    }

    fn map(&self, g: &FlatGenotype) -> MapOutcome {
        map_flat(g, &self.grammar, self.max_wraps, self.classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<G> {
    pub genotype: G,
    pub phenotype: MapOutcome,
    /// Loss; lower is better, [`WORST`] for invalid individuals.
    pub fitness: f64,
}

/// Mean of `-ln p(true class)`, with `p` floored at [`CE_EPSILON`].
pub fn cross_entropy(net: &Network, data: &Dataset) -> f64 {
    let mut scratch = Scratch::default();
    let mut probs = Vec::new();
    let mut total = 0.0;
    for i in 0..data.len() {
        net.forward_into(data.row(i), &mut scratch, &mut probs);
        let p = probs[data.label(i)].max(CE_EPSILON);
        total -= p.ln();
    }
    total / data.len() as f64
}

/// Mean over rows and classes of the squared error against one-hot targets.
/// For binary networks this equals `(s1 - y1)^2` averaged over rows.
pub fn mse(net: &Network, data: &Dataset) -> f64 {
    let mut scratch = Scratch::default();
    let mut probs = Vec::new();
    let mut total = 0.0;
    for i in 0..data.len() {
        net.forward_into(data.row(i), &mut scratch, &mut probs);
        let y = data.label(i);
        total += probs
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let t = if k == y { 1.0 } else { 0.0 };
                (p - t) * (p - t)
            })
            .sum::<f64>()
            / probs.len() as f64;
    }
    total / data.len() as f64
}

pub fn rmse(net: &Network, data: &Dataset) -> f64 {
    mse(net, data).sqrt()
}

pub fn accuracy(net: &Network, data: &Dataset) -> f64 {
    let mut scratch = Scratch::default();
    let mut probs = Vec::new();
    let correct = (0..data.len())
        .filter(|&i| {
            net.forward_into(data.row(i), &mut scratch, &mut probs);
            crate::network::argmax(&probs) == data.label(i)
        })
        .count();
    correct as f64 / data.len() as f64
}

/// Loss of a mapped individual.
pub fn fitness(objective: Objective, outcome: &MapOutcome, data: Option<&Dataset>) -> f64 {
    let MapOutcome::Valid(net) = outcome else {
        return WORST;
    };
    match (objective, data) {
        (Objective::CrossEntropy, Some(d)) => cross_entropy(net, d),
        (Objective::Mse, Some(d)) => mse(net, d),
        (Objective::Connections, _) => -(net.metrics().connections as f64),
        (_, None) => panic!("{objective:?} needs a dataset"),
    }
}

fn better(a: f64, b: f64) -> bool {
    a.total_cmp(&b).is_lt()
}

/// Index of the best of `r` uniform draws with replacement; ties go to the
/// lower index.
pub fn tournament_index(fitness: &[f64], r: usize, rng: &mut Rng) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..r {
        let i = rng.random_range(0..fitness.len());
        if better(fitness[i], fitness[best]) || (fitness[i] == fitness[best] && i < best) {
            best = i;
        }
    }
    best
}

/// Indices sorted by fitness, ties by index.
fn ranking<G>(pop: &[Individual<G>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| pop[a].fitness.total_cmp(&pop[b].fitness).then(a.cmp(&b)));
    idx
}

/// The `elites` best of `current` followed by the best of `offspring`,
/// `current.len()` in total.
pub fn replace<G: Clone>(current: &[Individual<G>], offspring: Vec<Individual<G>>, elites: usize) -> Vec<Individual<G>> {
    let mu = current.len();
    let elites = elites.min(mu);
    let mut next: Vec<Individual<G>> = ranking(current)[..elites].iter().map(|&i| current[i].clone()).collect();
    let order = ranking(&offspring);
    let mut slots: Vec<Option<Individual<G>>> = offspring.into_iter().map(Some).collect();
    for i in order.into_iter().take(mu - elites) {
        next.push(slots[i].take().expect("each offspring taken once"));
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_loss: f64,
    /// Mean loss over valid individuals (NaN when none is valid).
    pub mean_loss: f64,
    pub best_neurons: usize,
    pub best_connections: usize,
    pub mean_connections: f64,
    pub invalid: usize,
}

fn stats<G>(generation: usize, pop: &[Individual<G>]) -> GenerationStats {
    let best = &pop[ranking(pop)[0]];
    let valid: Vec<&Network> = pop.iter().filter_map(|i| i.phenotype.network()).collect();
    let mean = |f: &dyn Fn(&Individual<G>) -> f64| {
        let v: Vec<f64> = pop.iter().filter(|i| i.phenotype.is_valid()).map(f).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let best_metrics = best.phenotype.network().map(|n| n.metrics());
    GenerationStats {
        generation,
        best_loss: best.fitness,
        mean_loss: mean(&|i| i.fitness),
        best_neurons: best_metrics.map_or(0, |m| m.neurons),
        best_connections: best_metrics.map_or(0, |m| m.connections),
        mean_connections: mean(&|i| i.phenotype.network().map_or(0, |n| n.metrics().connections) as f64),
        invalid: pop.len() - valid.len(),
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult<G> {
    pub best: Individual<G>,
    pub history: Vec<GenerationStats>,
    pub final_population: Vec<Individual<G>>,
    pub evaluations: usize,
}

const INIT_STREAM: u64 = u64::MAX;

/// Runs the loop and returns the best individual of the last generation.
/// `loss` maps a valid network to its loss; `observer` sees every
/// generation's statistics, generation 0 included.
pub fn evolve<R, F, O>(
    config: &EvolutionConfig,
    repr: &R,
    loss: F,
    mut observer: O,
) -> Result<EvolutionResult<R::Genotype>, ConfigError>
where
    R: Representation,
    F: Fn(&Network) -> f64 + Sync,
    O: FnMut(&GenerationStats, &[Individual<R::Genotype>]),
{
    config.validate()?;
    let mu = config.mu;
    let evaluate = |genotype: R::Genotype| {
        let phenotype = repr.map(&genotype);
        let fitness = phenotype.network().map_or(WORST, &loss);
        Individual {
            genotype,
            phenotype,
            fitness,
        }
    };

    let mut pop: Vec<Individual<R::Genotype>> = (0..mu)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, &[INIT_STREAM, i as u64]);
            evaluate(repr.random(&mut rng))
        })
        .collect();
    let mut evaluations = mu;
    let mut history = vec![stats(0, &pop)];
    observer(&history[0], &pop);

    for generation in 1..=config.generations {
        let fit: Vec<f64> = pop.iter().map(|i| i.fitness).collect();
        let pairs = mu.div_ceil(2);
        let offspring: Vec<Individual<R::Genotype>> = (0..pairs)
            .into_par_iter()
            .flat_map_iter(|p| {
                let mut rng = stream(config.seed, &[generation as u64, p as u64]);
                let a = &pop[tournament_index(&fit, config.tournament_r, &mut rng)].genotype;
                let b = &pop[tournament_index(&fit, config.tournament_r, &mut rng)].genotype;
                let (mut c1, mut c2) = if rng.random::<f64>() < config.p_c {
                    repr.crossover(a, b, &mut rng)
                } else {
                    (a.clone(), b.clone())
                };
                for c in [&mut c1, &mut c2] {
                    let p_m = config.p_m_choices[rng.random_range(0..config.p_m_choices.len())];
                    repr.mutate(c, p_m, &mut rng);
                }
                [c1, c2]
            })
            .collect::<Vec<_>>()
            .into_par_iter()
            .take(mu)
            .map(&evaluate)
            .collect();
        evaluations += offspring.len();
        pop = replace(&pop, offspring, config.elite_count());
        let s = stats(generation, &pop);
        observer(&s, &pop);
        history.push(s);
    }

    let best = pop[ranking(&pop)[0]].clone();
    Ok(EvolutionResult {
        best,
        history,
        final_population: pop,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{build_neuron_grammar, NeuronGrammarOptions};
    use crate::network::{InputConn, Neuron, OutputConn, Source};
    use crate::rng::seeded;

    fn constant_net(classes: usize, bias: f64) -> Network {
        let n = Neuron {
            outputs: vec![OutputConn { output: 0, weight: 0.0 }],
            inputs: vec![InputConn {
                source: Source::Feature(0),
                weight: 0.0,
            }],
            bias,
        };
        Network::new(1, classes, Variant::Mge, vec![n]).unwrap()
    }

    fn data(labels: &[usize], classes: usize) -> Dataset {
        Dataset::new("t", labels.iter().map(|_| vec![0.0]).collect(), labels.to_vec(), classes).unwrap()
    }

    #[test]
    fn loss_identities() {
        let net = constant_net(2, 0.0);
        let d = data(&[0, 1, 0], 2);
        assert!((cross_entropy(&net, &d) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((mse(&net, &d) - 0.25).abs() < 1e-12);
        assert_eq!(accuracy(&net, &d), 2.0 / 3.0);
    }

    #[test]
    fn worst_for_invalid() {
        assert_eq!(fitness(Objective::Mse, &MapOutcome::Invalid, None), WORST);
    }

    #[test]
    fn crossover_prefix_swap() {
        let (c1, c2) = prefix_swap_at(&['A', 'B', 'C', 'D'], &['E', 'F', 'G'], 2);
        assert_eq!(c1, ['E', 'F', 'C', 'D']);
        assert_eq!(c2, ['A', 'B', 'G']);
        let mut rng = seeded(0);
        let (c1, c2) = prefix_swap(&['A'], &['E', 'F'], &mut rng);
        assert_eq!((c1, c2), (vec!['A'], vec!['E', 'F']));
        for _ in 0..100 {
            let (c1, c2) = prefix_swap(&[1, 2, 3], &[1, 2, 3], &mut rng);
            assert_eq!((c1.as_slice(), c2.as_slice()), (&[1, 2, 3][..], &[1, 2, 3][..]));
        }
    }

    fn repr() -> ModularRepr {
        ModularRepr {
            grammar: build_neuron_grammar(2, 1, Variant::Mge, &NeuronGrammarOptions::default()),
            variant: Variant::Mge,
            classes: 2,
            sigma_range: (2, 10),
            gene_length: 100,
        }
    }

    #[test]
    fn zero_mutation_is_identity() {
        let r = repr();
        let mut rng = seeded(1);
        let g = r.random(&mut rng);
        let mut m = g.clone();
        r.mutate(&mut m, 0.0, &mut rng);
        assert_eq!(g, m);
    }

    #[test]
    fn mutation_keeps_one_gene() {
        let r = repr();
        let mut rng = seeded(2);
        let mut g = ModularGenotype::random(&mut rng, (1, 1), 100);
        for _ in 0..200 {
            r.mutate(&mut g, 1.0, &mut rng);
            assert!(!g.is_empty());
        }
    }

    #[test]
    fn codon_replacement_rate() {
        let mut rng = seeded(3);
        let original: Vec<u8> = (0..100_000).map(|_| rng.random()).collect();
        let mut codons = original.clone();
        mutate_codons(&mut codons, 0.01 / 2.0, &mut rng);
        // a replacement drawing the old value is invisible: rate * 255/256
        let changed = original.iter().zip(&codons).filter(|(a, b)| a != b).count();
        let expected = 100_000.0 * 0.005 * 255.0 / 256.0;
        let sd = (100_000.0 * 0.005f64 * 0.995).sqrt();
        assert!((changed as f64 - expected).abs() < 3.0 * sd, "{changed}");
    }

    #[test]
    fn tournament_win_rate() {
        let fit = [0.1, 0.9];
        let mut rng = seeded(4);
        let wins = (0..10_000).filter(|_| tournament_index(&fit, 7, &mut rng) == 0).count();
        let rate = wins as f64 / 10_000.0;
        assert!((rate - (1.0 - 0.5f64.powi(7))).abs() < 0.01, "{rate}");
    }

    #[test]
    fn tournament_ties_prefer_lower_index() {
        let fit = [0.5; 4];
        let mut rng = seeded(5);
        for _ in 0..100 {
            let i = tournament_index(&fit, 4, &mut rng);
            assert!(i <= 3);
        }
        let fit = [WORST, 0.3, 0.3];
        for _ in 0..100 {
            assert_ne!(tournament_index(&fit, 50, &mut rng), 2);
        }
    }

    fn ind(f: f64) -> Individual<u32> {
        Individual {
            genotype: 0,
            phenotype: MapOutcome::Invalid,
            fitness: f,
        }
    }

    #[test]
    fn replacement_counts() {
        let cfg = EvolutionConfig::default();
        assert_eq!(cfg.elite_count(), 10);
        let small = EvolutionConfig {
            mu: 2,
            p_elite: 0.01,
            ..cfg
        };
        assert_eq!(small.elite_count(), 1);
        let current = vec![ind(0.4), ind(0.2), ind(0.3)];
        let next = replace(&current, vec![ind(WORST), ind(WORST), ind(WORST)], 1);
        assert_eq!(next.len(), 3);
        assert_eq!(next[0].fitness, 0.2);
        let next = replace(&current, vec![ind(0.9), ind(0.1), ind(0.5)], 1);
        let f: Vec<f64> = next.iter().map(|i| i.fitness).collect();
        assert_eq!(f, [0.2, 0.1, 0.5]);
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::default().validate().is_ok());
        let bad = EvolutionConfig {
            p_c: 1.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Invalid { field: "p_c", .. })));
        let bad = EvolutionConfig {
            mu: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn generation_zero_returns_initial_best() {
        let r = repr();
        let cfg = EvolutionConfig {
            mu: 20,
            generations: 0,
            ..Default::default()
        };
        let res = evolve(&cfg, &r, |n| -(n.metrics().connections as f64), |_, _| {}).unwrap();
        assert_eq!(res.history.len(), 1);
        assert_eq!(res.evaluations, 20);
        let min = res.final_population.iter().map(|i| i.fitness).fold(f64::INFINITY, f64::min);
        assert_eq!(res.best.fitness, min);
    }
}
