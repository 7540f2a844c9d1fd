//! Representation analyses on randomly initialized genotypes: invalidity
//! rate, locality under Hamming mutations, and connection-count scalability.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolution::{evolve, ConfigError, EvolutionConfig, FlatRepr, ModularRepr, Objective};
use crate::genome::{flip_hamming_bits, FlatGenotype, Gene, ModularGenotype};
use crate::grammar::{build_network_grammar, build_neuron_grammar, Grammar, NeuronGrammarOptions, WeightDigits};
use crate::mapping::{ge_derive, map_flat, map_individual, map_neuron, MapOutcome, Variant};
use crate::network::output_count;
use crate::rng::stream;
use crate::tree::Tree;

// ---------------------------------------------------------------------------
// Tree edit distance

struct Indexed {
    labels: Vec<u32>,
    /// Leftmost leaf descendant of each node (postorder, 0-based).
    lmd: Vec<usize>,
    keyroots: Vec<usize>,
}

fn index_tree(t: &Tree, intern: &mut HashMap<String, u32>) -> Indexed {
    fn walk(t: &Tree, intern: &mut HashMap<String, u32>, labels: &mut Vec<u32>, lmd: &mut Vec<usize>) -> usize {
        let mut first = None;
        for c in &t.children {
            let l = walk(c, intern, labels, lmd);
            first.get_or_insert(l);
        }
        let next = intern.len() as u32;
        labels.push(*intern.entry(t.label.clone()).or_insert(next));
        let me = labels.len() - 1;
        let l = first.unwrap_or(me);
        lmd.push(l);
        l
    }
    let mut labels = Vec::new();
    let mut lmd = Vec::new();
    walk(t, intern, &mut labels, &mut lmd);
    let n = labels.len();
    let mut seen = vec![false; n];
    let mut keyroots = Vec::new();
    for i in (0..n).rev() {
        if !seen[lmd[i]] {
            seen[lmd[i]] = true;
            keyroots.push(i);
        }
    }
    keyroots.reverse();
    Indexed { labels, lmd, keyroots }
}

/// Ordered tree edit distance with unit insert, delete and rename costs
/// (Zhang and Shasha's keyroot dynamic program).
pub fn tree_edit_distance(a: &Tree, b: &Tree) -> usize {
    if a == b {
        return 0;
    }
    let mut intern = HashMap::new();
    let ta = index_tree(a, &mut intern);
    let tb = index_tree(b, &mut intern);
    let (n, m) = (ta.labels.len(), tb.labels.len());
    let mut td = vec![0usize; n * m];
    let mut fd = vec![0usize; (n + 1) * (m + 1)];
    for &i in &ta.keyroots {
        for &j in &tb.keyroots {
            let (li, lj) = (ta.lmd[i], tb.lmd[j]);
            let rows = i - li + 2;
            let cols = j - lj + 2;
            let at = |x: usize, y: usize| x * cols + y;
            fd[at(0, 0)] = 0;
            for x in 1..rows {
                fd[at(x, 0)] = x;
            }
            for y in 1..cols {
                fd[at(0, y)] = y;
            }
            for x in 1..rows {
                let ni = li + x - 1;
                for y in 1..cols {
                    let nj = lj + y - 1;
                    let del = fd[at(x - 1, y)] + 1;
                    let ins = fd[at(x, y - 1)] + 1;
                    if ta.lmd[ni] == li && tb.lmd[nj] == lj {
                        let rename = usize::from(ta.labels[ni] != tb.labels[nj]);
                        let v = del.min(ins).min(fd[at(x - 1, y - 1)] + rename);
                        fd[at(x, y)] = v;
                        td[ni * m + nj] = v;
                    } else {
                        let px = ta.lmd[ni] - li;
                        let py = tb.lmd[nj] - lj;
                        fd[at(x, y)] = del.min(ins).min(fd[at(px, py)] + td[ni * m + nj]);
                    }
                }
            }
        }
    }
    td[(n - 1) * m + (m - 1)]
}

// ---------------------------------------------------------------------------
// Shared setup

/// Grammar and genotype settings shared by the analyses. Defaults follow the
/// locality setting: 30 features, 3 weight digits, single hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSetup {
    pub features: usize,
    pub classes: usize,
    pub weight_digits: WeightDigits,
    pub gene_length: usize,
    pub sigma_range: (usize, usize),
    /// Initial codon count range of flat genotypes.
    pub ge_length_range: (usize, usize),
    pub max_wraps: usize,
}

impl Default for AnalysisSetup {
    fn default() -> Self {
        Self {
            features: 30,
            classes: 2,
            weight_digits: WeightDigits::Fixed(3),
            gene_length: 100,
            sigma_range: (2, 10),
            ge_length_range: (50, 150),
            max_wraps: 0,
        }
    }
}

impl AnalysisSetup {
    fn opts(&self) -> NeuronGrammarOptions {
        NeuronGrammarOptions {
            weight_digits: self.weight_digits,
        }
    }

    /// Neuron grammar for a modular variant, network grammar for the baseline.
    pub fn grammar(&self, method: Variant) -> Grammar {
        let outputs = output_count(self.classes);
        match method {
            Variant::GeBaseline => build_network_grammar(self.features, outputs, &self.opts()),
            v => build_neuron_grammar(self.features, outputs, v, &self.opts()),
        }
    }
}

// ---------------------------------------------------------------------------
// Invalidity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidityResult {
    pub method: Variant,
    pub samples: usize,
    pub invalid: usize,
    pub rate: f64,
}

impl InvalidityResult {
    /// Binomial standard error of the rate.
    pub fn std_error(&self) -> f64 {
        (self.rate * (1.0 - self.rate) / self.samples as f64).sqrt()
    }
}

const CHUNK: usize = 1000;

/// Fraction of random genotypes that map to an invalid individual.
pub fn invalidity_rate(method: Variant, samples: usize, setup: &AnalysisSetup, seed: u64) -> InvalidityResult {
    let grammar = setup.grammar(method);
    let chunks = samples.div_ceil(CHUNK);
    let invalid: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, &[c as u64]);
            let count = CHUNK.min(samples - c * CHUNK);
            (0..count)
                .filter(|_| {
                    let outcome = if method == Variant::GeBaseline {
                        let g = FlatGenotype::random(&mut rng, setup.ge_length_range);
                        map_flat(&g, &grammar, setup.max_wraps, setup.classes)
                    } else {
                        let g = ModularGenotype::random(&mut rng, setup.sigma_range, setup.gene_length);
                        map_individual(&g, &grammar, method, setup.classes)
                    };
                    !outcome.is_valid()
                })
                .count()
        })
        .sum();
    InvalidityResult {
        method,
        samples,
        invalid,
        rate: invalid as f64 / samples.max(1) as f64,
    }
}

// ---------------------------------------------------------------------------
// Locality

/// How an invalid mutant enters the distance statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidMutant {
    /// Distance to the empty tree, i.e. the original tree's node count.
    #[default]
    EmptyTree,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalityConfig {
    pub methods: Vec<Variant>,
    pub neuron_counts: Vec<usize>,
    pub samples: usize,
    pub hamming: Vec<usize>,
    pub invalid_mutant: InvalidMutant,
    /// Mapping attempts allowed per sample while searching for a genotype of
    /// the requested size.
    pub attempt_budget: usize,
    /// Flat genotypes keep their expressed codons plus a random tail of this
    /// many codons per expressed codon.
    pub ge_tail_ratio: f64,
}

impl Default for LocalityConfig {
    fn default() -> Self {
        Self {
            methods: vec![Variant::Mge, Variant::GeBaseline],
            neuron_counts: (2..=9).collect(),
            samples: 1000,
            hamming: vec![1, 2],
            invalid_mutant: InvalidMutant::EmptyTree,
            attempt_budget: 200_000,
            ge_tail_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityRow {
    pub method: Variant,
    /// `None` for the aggregate over all sizes.
    pub neurons: Option<usize>,
    pub hamming: usize,
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
    pub invalid_mutants: usize,
    /// Samples for which no genotype of the requested size was found.
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub rows: Vec<LocalityRow>,
}

impl LocalityReport {
    pub fn overall(&self, method: Variant, hamming: usize) -> Option<&LocalityRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.hamming == hamming && r.neurons.is_none())
    }

    pub fn cell(&self, method: Variant, neurons: usize, hamming: usize) -> Option<&LocalityRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.hamming == hamming && r.neurons == Some(neurons))
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.missing == 0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "neurons", "hamming", "mean", "std", "samples", "invalid_mutants", "missing"])?;
        for r in &self.rows {
            w.write_record([
                r.method.to_string(),
                r.neurons.map_or_else(|| "all".to_string(), |n| n.to_string()),
                r.hamming.to_string(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.std),
                r.samples.to_string(),
                r.invalid_mutants.to_string(),
                r.missing.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A random valid gene, by rejection.
fn valid_gene(grammar: &Grammar, gene_length: usize, rng: &mut crate::rng::Rng, budget: &mut usize) -> Option<Gene> {
    while *budget > 0 {
        *budget -= 1;
        let g = Gene::random(rng, gene_length);
        if map_neuron(&g, grammar, 0).is_some() {
            return Some(g);
        }
    }
    None
}

/// Per-sample outcome: distance per Hamming setting, `None` if the mutant was
/// invalid.
type Sample = Option<(usize, Vec<Option<usize>>)>;

fn locality_sample(
    method: Variant,
    neurons: usize,
    grammar: &Grammar,
    setup: &AnalysisSetup,
    config: &LocalityConfig,
    rng: &mut crate::rng::Rng,
) -> Sample {
    let mut budget = config.attempt_budget;
    let map_tree = |outcome: MapOutcome| outcome.network().map(|n| n.to_eval_tree());
    if method == Variant::GeBaseline {
        // draw long enough strings, keep expressed codons plus a tail
        let len = neurons * setup.gene_length;
        let (g, tree) = loop {
            if budget == 0 {
                return None;
            }
            budget -= 1;
            let g = FlatGenotype::random(rng, (len, len));
            let Some(d) = ge_derive(&g, grammar, setup.max_wraps) else {
                continue;
            };
            let keep = d.codons_used + (d.codons_used as f64 * config.ge_tail_ratio).ceil() as usize;
            let g = FlatGenotype::new(g.codons()[..keep.min(len)].to_vec()).expect("non-empty");
            if let MapOutcome::Valid(net) = map_flat(&g, grammar, setup.max_wraps, setup.classes) {
                if net.hidden().len() == neurons {
                    break (g, net.to_eval_tree());
                }
            }
        };
        let d = config
            .hamming
            .iter()
            .map(|&k| {
                let m = flip_hamming_bits(&g, k, rng);
                map_tree(map_flat(&m, grammar, setup.max_wraps, setup.classes)).map(|t| tree_edit_distance(&tree, &t))
            })
            .collect();
        Some((tree.size(), d))
    } else {
        let genes: Option<Vec<Gene>> = (0..neurons)
            .map(|_| valid_gene(grammar, setup.gene_length, rng, &mut budget))
            .collect();
        let g = ModularGenotype::new(genes?).expect("at least one gene");
        let tree = map_individual(&g, grammar, method, setup.classes)
            .network()
            .expect("all genes valid")
            .to_eval_tree();
        let d = config
            .hamming
            .iter()
            .map(|&k| {
                let m = flip_hamming_bits(&g, k, rng);
                map_tree(map_individual(&m, grammar, method, setup.classes)).map(|t| tree_edit_distance(&tree, &t))
            })
            .collect();
        Some((tree.size(), d))
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Tree edit distances between random networks of each requested size and
/// their 1- and 2-bit Hamming mutants.
pub fn locality_experiment(setup: &AnalysisSetup, config: &LocalityConfig, seed: u64) -> LocalityReport {
    let mut rows = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        let grammar = setup.grammar(method);
        let cells: Vec<(usize, Vec<Sample>)> = config
            .neuron_counts
            .iter()
            .map(|&neurons| {
                let samples = (0..config.samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = stream(seed, &[mi as u64, neurons as u64, i as u64]);
                        locality_sample(method, neurons, &grammar, setup, config, &mut rng)
                    })
                    .collect();
                (neurons, samples)
            })
            .collect();
        for (hi, &k) in config.hamming.iter().enumerate() {
            let mut all = Vec::new();
            let (mut all_invalid, mut all_missing) = (0, 0);
            for (neurons, samples) in &cells {
                let mut values = Vec::new();
                let (mut invalid, mut missing) = (0, 0);
                for s in samples {
                    match s {
                        None => missing += 1,
                        Some((size, d)) => match d[hi] {
                            Some(v) => values.push(v as f64),
                            None => {
                                invalid += 1;
                                if config.invalid_mutant == InvalidMutant::EmptyTree {
                                    values.push(*size as f64);
                                }
                            }
                        },
                    }
                }
                let (mean, std) = mean_std(&values);
                rows.push(LocalityRow {
                    method,
                    neurons: Some(*neurons),
                    hamming: k,
                    mean,
                    std,
                    samples: values.len(),
                    invalid_mutants: invalid,
                    missing,
                });
                all.extend(values);
                all_invalid += invalid;
                all_missing += missing;
            }
            let (mean, std) = mean_std(&all);
            rows.push(LocalityRow {
                method,
                neurons: None,
                hamming: k,
                mean,
                std,
                samples: all.len(),
                invalid_mutants: all_invalid,
                missing: all_missing,
            });
        }
    }
    LocalityReport { rows }
}

// ---------------------------------------------------------------------------
// Scalability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalabilityConfig {
    pub methods: Vec<Variant>,
    pub generations: usize,
    pub mu: usize,
    pub repeats: usize,
    pub p_c: f64,
    pub p_m_choices: Vec<f64>,
    pub tournament_r: usize,
    pub p_elite: f64,
}

impl Default for ScalabilityConfig {
    fn default() -> Self {
        let e = EvolutionConfig::default();
        Self {
            methods: vec![Variant::Mge, Variant::GeBaseline],
            generations: 100,
            mu: 50,
            repeats: 5,
            p_c: e.p_c,
            p_m_choices: e.p_m_choices,
            tournament_r: e.tournament_r,
            p_elite: e.p_elite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalabilitySeries {
    pub method: Variant,
    /// Mean connection count of valid individuals per generation, averaged
    /// over repeats.
    pub mean_connections: Vec<f64>,
    pub per_repeat: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityReport {
    pub series: Vec<ScalabilitySeries>,
}

impl ScalabilityReport {
    pub fn series(&self, method: Variant) -> Option<&ScalabilitySeries> {
        self.series.iter().find(|s| s.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "generation", "mean_connections"])?;
        for s in &self.series {
            for (g, v) in s.mean_connections.iter().enumerate() {
                w.write_record([s.method.to_string(), g.to_string(), format!("{v:.6}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evolves every method towards larger connection counts with identical
/// operator probabilities. Flat genotypes start with as many codons as the
/// modular ones and get a length mutation that adds or removes one
/// gene-length block.
pub fn scalability_experiment(
    setup: &AnalysisSetup,
    config: &ScalabilityConfig,
    seed: u64,
) -> Result<ScalabilityReport, ConfigError> {
    let mut series = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        let grammar = setup.grammar(method);
        let mut per_repeat = Vec::new();
        for r in 0..config.repeats {
            let evo = EvolutionConfig {
                mu: config.mu,
                generations: config.generations,
                p_c: config.p_c,
                p_m_choices: config.p_m_choices.clone(),
                tournament_r: config.tournament_r,
                p_elite: config.p_elite,
                gene_length: setup.gene_length,
                sigma_range: setup.sigma_range,
                max_wraps: setup.max_wraps,
                variant: method,
                objective: Objective::Connections,
                ge_length_range: (
                    setup.sigma_range.0 * setup.gene_length,
                    setup.sigma_range.1 * setup.gene_length,
                ),
                seed: crate::rng::derive_seed(seed, &[mi as u64, r as u64]),
            };
            let loss = |n: &crate::network::Network| -(n.metrics().connections as f64);
            let history = if method == Variant::GeBaseline {
                let repr = FlatRepr {
                    grammar: grammar.clone(),
                    classes: setup.classes,
                    length_range: evo.ge_length_range,
                    max_wraps: setup.max_wraps,
                    block: setup.gene_length,
                };
                evolve(&evo, &repr, loss, |_, _| {})?.history
            } else {
                let repr = ModularRepr {
                    grammar: grammar.clone(),
                    variant: method,
                    classes: setup.classes,
                    sigma_range: setup.sigma_range,
                    gene_length: setup.gene_length,
                };
                evolve(&evo, &repr, loss, |_, _| {})?.history
            };
            per_repeat.push(history.iter().map(|s| s.mean_connections).collect::<Vec<_>>());
        }
        let gens = config.generations + 1;
        let mean_connections = (0..gens)
            .map(|g| {
                let v: Vec<f64> = per_repeat.iter().map(|r| r[g]).filter(|v| v.is_finite()).collect();
                mean_std(&v).0
            })
            .collect();
        series.push(ScalabilitySeries {
            method,
            mean_connections,
            per_repeat,
        });
    }
    Ok(ScalabilityReport { series })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Tree {
        // tiny s-expression reader for tests
        fn parse(tokens: &[String], pos: &mut usize) -> Tree {
            if tokens[*pos] == "(" {
                *pos += 1;
                let label = tokens[*pos].clone();
                *pos += 1;
                let mut children = Vec::new();
                while tokens[*pos] != ")" {
                    children.push(parse(tokens, pos));
                }
                *pos += 1;
                Tree::node(label, children)
            } else {
                *pos += 1;
                Tree::leaf(tokens[*pos - 1].clone())
            }
        }
        let tokens: Vec<String> = s
            .replace('(', " ( ")
            .replace(')', " ) ")
            .split_whitespace()
            .map(str::to_owned)
            .collect();
        parse(&tokens, &mut 0)
    }

    #[test]
    fn ted_basics() {
        assert_eq!(tree_edit_distance(&t("a"), &t("a")), 0);
        assert_eq!(tree_edit_distance(&t("a"), &t("b")), 1);
        assert_eq!(tree_edit_distance(&t("(a b c)"), &t("(a c)")), 1);
        assert_eq!(tree_edit_distance(&t("(a (b c d))"), &t("(a c d)")), 1);
        // classic example from the original algorithm description
        let f = t("(f (d a (c b)) e)");
        let g = t("(f (c (d a b)) e)");
        assert_eq!(tree_edit_distance(&f, &g), 2);
        assert_eq!(tree_edit_distance(&t("(a b c d)"), &t("x")), 4);
    }

    #[test]
    fn trivially_terminating_grammar_is_never_invalid() {
        let setup = AnalysisSetup {
            sigma_range: (2, 2),
            ..Default::default()
        };
        let r = invalidity_rate(Variant::Mge, 500, &setup, 1);
        assert_eq!(r.samples, 500);
        assert!(r.rate < 0.01);
    }

    #[test]
    fn small_locality_run_has_expected_shape() {
        let setup = AnalysisSetup::default();
        let cfg = LocalityConfig {
            neuron_counts: vec![2, 3],
            samples: 10,
            ..Default::default()
        };
        let rep = locality_experiment(&setup, &cfg, 5);
        // 2 methods x 2 hamming x (2 sizes + overall)
        assert_eq!(rep.rows.len(), 12);
        assert!(rep.is_complete());
        assert!(rep.rows.iter().all(|r| r.mean >= 0.0));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }

    #[test]
    fn frozen_scalability_keeps_best() {
        let cfg = ScalabilityConfig {
            methods: vec![Variant::Mge],
            generations: 5,
            mu: 10,
            repeats: 1,
            p_c: 0.0,
            p_m_choices: vec![0.0],
            ..Default::default()
        };
        let rep = scalability_experiment(&AnalysisSetup::default(), &cfg, 3).unwrap();
        let s = rep.series(Variant::Mge).unwrap();
        assert_eq!(s.mean_connections.len(), 6);
        assert!(s.mean_connections.windows(2).all(|w| w[1] >= w[0]));
    }
}
