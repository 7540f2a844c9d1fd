//! Genotype to phenotype mapping.
//!
//! `derive` is the plain grammatical-evolution derivation: leftmost
//! expansion, one codon per choice among two or more alternatives, selection
//! by `codon % alternatives`, optional wrapping. Modular genotypes are decoded
//! gene by gene into neurons (`map_neuron`), successful neurons become
//! referenceable as `h<k>` in multi-layer variants, and the neurons are
//! assembled into a [`Network`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::genome::{FlatGenotype, Gene, ModularGenotype};
use crate::grammar::{Alternative, Grammar, GrammarOverlay, RuleSource, Symbol, NEURON_REF_RULE};
pub use crate::network::{InputConn, Neuron, OutputConn, Source};
use crate::network::{output_count, Network};

/// Topology variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Single-layer modules, one output connection per neuron.
    Mge,
    /// Multi-layer modules without inter-module links.
    Alpha,
    /// Multi-layer modules, inter-module links allowed.
    Beta,
    /// Monolithic single layer; several output connections per neuron.
    Eta,
    /// Monolithic multi-layer.
    Mu,
    /// Flat-genotype grammatical evolution baseline (single layer).
    #[serde(rename = "ge")]
    GeBaseline,
}

impl Variant {
    pub const MODULAR: [Variant; 5] = [Variant::Mge, Variant::Alpha, Variant::Beta, Variant::Eta, Variant::Mu];

    pub fn single_output_connection(self) -> bool {
        matches!(self, Variant::Mge | Variant::Alpha | Variant::Beta | Variant::GeBaseline)
    }

    /// Whether mapped neurons become inputs for later genes.
    pub fn multi_layer(self) -> bool {
        matches!(self, Variant::Alpha | Variant::Beta | Variant::Mu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mge => "mge",
            Variant::Alpha => "alpha",
            Variant::Beta => "beta",
            Variant::Eta => "eta",
            Variant::Mu => "mu",
            Variant::GeBaseline => "ge",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mge" => Ok(Variant::Mge),
            "alpha" | "α" => Ok(Variant::Alpha),
            "beta" | "β" => Ok(Variant::Beta),
            "eta" | "η" => Ok(Variant::Eta),
            "mu" | "μ" => Ok(Variant::Mu),
            "ge" => Ok(Variant::GeBaseline),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

/// A completed derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub sentence: String,
    /// Codons read, counting re-reads after wrapping.
    pub codons_used: usize,
    pub wraps: usize,
}

enum Pending<'a> {
    Symbol(Symbol),
    Text(&'a str),
}

/// Leftmost derivation of the start symbol driven by `codons`.
///
/// Returns `None` (an invalid individual) when nonterminals remain after the
/// codons have been read `max_wraps + 1` times, or when the derivation keeps
/// expanding without consuming codons.
pub fn derive<R: RuleSource + ?Sized>(codons: &[u8], rules: &R, max_wraps: usize) -> Option<Derivation> {
    let grammar = rules.base();
    let mut stack = vec![Pending::Symbol(Symbol::NonTerminal(grammar.start()))];
    let mut sentence = String::new();
    let mut pos = 0usize;
    let mut used = 0usize;
    let mut wraps = 0usize;
    let mut free_steps = 0usize;
    let free_limit = 10_000 + 64 * codons.len() * (max_wraps + 1);

    while let Some(item) = stack.pop() {
        let nt = match item {
            Pending::Text(t) => {
                sentence.push_str(t);
                continue;
            }
            Pending::Symbol(Symbol::Terminal(t)) => {
                sentence.push_str(grammar.terminal_text(t));
                continue;
            }
            Pending::Symbol(Symbol::NonTerminal(n)) => n,
        };
        let count = rules.alternative_count(nt);
        let choice = if count == 1 {
            free_steps += 1;
            if free_steps > free_limit {
                return None;
            }
            0
        } else {
            if pos == codons.len() {
                if wraps >= max_wraps || codons.is_empty() {
                    return None;
                }
                wraps += 1;
                pos = 0;
            }
            let codon = codons[pos];
            pos += 1;
            used += 1;
            codon as usize % count
        };
        match rules.alternative(nt, choice) {
            Alternative::Production(symbols) => {
                stack.extend(symbols.iter().rev().map(|&s| Pending::Symbol(s)));
            }
            Alternative::Appended(text) => stack.push(Pending::Text(text)),
        }
    }
    Some(Derivation {
        sentence,
        codons_used: used,
        wraps,
    })
}

/// Baseline derivation of a flat genotype.
pub fn ge_derive(genotype: &FlatGenotype, grammar: &Grammar, max_wraps: usize) -> Option<Derivation> {
    derive(genotype.codons(), grammar, max_wraps)
}

// ---------------------------------------------------------------------------
// Neuron sentences

/// Error from [`parse_neuron`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for SentenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.position, self.message)
    }
}

impl std::error::Error for SentenceError {}

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SentenceError> {
        Err(SentenceError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.text[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), SentenceError> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected {s:?}"))
        }
    }

    fn digits(&mut self) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.text[start..self.pos]).expect("ascii digits")
    }

    fn index(&mut self) -> Result<usize, SentenceError> {
        let d = self.digits();
        match d.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v),
            _ => self.err("expected a 1-based index"),
        }
    }

    fn number(&mut self) -> Result<f64, SentenceError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'+') | Some(b'-')) {
            self.pos += 1;
        }
        let int = self.digits().len();
        let mut frac = 0;
        if self.peek() == Some(b'.') {
            self.pos += 1;
            frac = self.digits().len();
        }
        if int + frac == 0 {
            self.pos = start;
            return self.err("expected a number");
        }
        let text = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii number");
        text.parse().or_else(|_| self.err(format!("bad number {text:?}")))
    }
}

/// Parses a neuron sentence such as
/// `(output1:+0.5),(output3:-0.25) * sig(+0.1*x1 + -0.5*h2 + +0.3)` or the
/// compact `1:2*sig(5*x_1 + 1*x_2 + 3*1)`.
///
/// Sum terms without a source, or with the constant source `1`, form the bias.
/// Indices are checked against `features`, `outputs` and `hidden_available`.
pub fn parse_neuron(
    sentence: &str,
    features: usize,
    outputs: usize,
    hidden_available: usize,
) -> Result<Neuron, SentenceError> {
    let mut c = Cursor {
        text: sentence.as_bytes(),
        pos: 0,
    };
    let mut out_conns = Vec::new();
    loop {
        c.ws();
        let paren = c.eat("(");
        c.ws();
        c.eat("output");
        let k = c.index()?;
        if k > outputs {
            return c.err(format!("output{k} exceeds {outputs} outputs"));
        }
        c.ws();
        c.expect(":")?;
        c.ws();
        let w = c.number()?;
        if paren {
            c.ws();
            c.expect(")")?;
        }
        out_conns.push(OutputConn { output: k - 1, weight: w });
        c.ws();
        if c.eat(",") {
            continue;
        }
        if c.peek() == Some(b'(') {
            continue;
        }
        break;
    }
    c.expect("*")?;
    c.ws();
    c.expect("sig(")?;
    let mut inputs = Vec::new();
    let mut bias = 0.0;
    loop {
        c.ws();
        let w = c.number()?;
        c.ws();
        if c.eat("*") {
            c.ws();
            match c.peek() {
                Some(b'x') | Some(b'h') => {
                    let kind = c.peek().unwrap();
                    c.pos += 1;
                    c.eat("_");
                    let i = c.index()?;
                    let source = if kind == b'x' {
                        if i > features {
                            return c.err(format!("x{i} exceeds {features} features"));
                        }
                        Source::Feature(i - 1)
                    } else {
                        if i > hidden_available {
                            return c.err(format!("h{i} is not mapped yet"));
                        }
                        Source::Hidden(i - 1)
                    };
                    inputs.push(InputConn { source, weight: w });
                }
                _ => bias += w * c.number()?,
            }
        } else {
            bias += w;
        }
        c.ws();
        if c.eat("+") {
            continue;
        }
        break;
    }
    c.expect(")")?;
    c.ws();
    if c.pos != c.text.len() {
        return c.err("trailing text");
    }
    Ok(Neuron {
        outputs: out_conns,
        inputs,
        bias,
    })
}

// ---------------------------------------------------------------------------
// Modular mapping

#[derive(Debug, Clone, PartialEq)]
pub enum MapOutcome {
    Valid(Network),
    Invalid,
}

impl MapOutcome {
    pub fn network(&self) -> Option<&Network> {
        match self {
            MapOutcome::Valid(n) => Some(n),
            MapOutcome::Invalid => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, MapOutcome::Valid(_))
    }
}

/// Input-feature count of a neuron grammar (base alternatives of `xnList`).
pub fn grammar_features(grammar: &Grammar) -> usize {
    grammar
        .nonterminal(NEURON_REF_RULE)
        .map(|nt| grammar.productions(nt).len())
        .expect("neuron grammar has an xnList rule")
}

/// Output-neuron count of a neuron grammar.
pub fn grammar_outputs(grammar: &Grammar) -> usize {
    grammar
        .nonterminal("OutputNeuron")
        .map(|nt| grammar.productions(nt).len())
        .expect("neuron grammar has an OutputNeuron rule")
}

/// Decodes one gene into a neuron without wrapping. `hidden_available` is the
/// number of neurons already referenceable as `h1..`.
pub fn map_neuron<R: RuleSource + ?Sized>(gene: &Gene, rules: &R, hidden_available: usize) -> Option<Neuron> {
    let grammar = rules.base();
    let d = derive(gene.codons(), rules, 0)?;
    parse_neuron(&d.sentence, grammar_features(grammar), grammar_outputs(grammar), hidden_available).ok()
}

/// Maps a modular genotype to a network.
///
/// Genes are decoded in order; genes whose derivation fails are skipped and
/// take no neuron index. Multi-layer variants expose each mapped neuron as
/// `h<k>` to later genes. The alpha variant first groups genes by
/// `first codon % outputs` and maps group by group, resetting the references
/// between groups and pinning each neuron's output to its group.
pub fn map_individual(genotype: &ModularGenotype, grammar: &Grammar, variant: Variant, classes: usize) -> MapOutcome {
    let features = grammar_features(grammar);
    let outputs = output_count(classes);
    assert_eq!(
        grammar_outputs(grammar),
        outputs,
        "grammar built for a different number of outputs"
    );
    let mut overlay = GrammarOverlay::new(grammar);
    let mut neurons: Vec<Neuron> = Vec::new();

    let mut map_group = |genes: &mut dyn Iterator<Item = &Gene>, pinned: Option<usize>, neurons: &mut Vec<Neuron>| {
        overlay.reset();
        for gene in genes {
            let Some(mut neuron) = map_neuron(gene, &overlay, neurons.len()) else {
                continue;
            };
            if let Some(group) = pinned {
                for o in &mut neuron.outputs {
                    o.output = group;
                }
            }
            neurons.push(neuron);
            if variant.multi_layer() {
                overlay
                    .add_neuron_ref(neurons.len())
                    .expect("neuron references are unique within a mapping");
            }
        }
    };

    if variant == Variant::Alpha {
        for group in 0..outputs {
            let mut members = genotype
                .genes()
                .iter()
                .filter(|g| g.codons()[0] as usize % outputs == group);
            map_group(&mut members, Some(group), &mut neurons);
        }
    } else {
        map_group(&mut genotype.genes().iter(), None, &mut neurons);
    }

    if neurons.is_empty() {
        return MapOutcome::Invalid;
    }
    MapOutcome::Valid(assemble(neurons, features, classes, variant))
}

/// Maps a flat genotype with the baseline network grammar.
pub fn map_flat(genotype: &FlatGenotype, grammar: &Grammar, max_wraps: usize, classes: usize) -> MapOutcome {
    let Some(d) = ge_derive(genotype, grammar, max_wraps) else {
        return MapOutcome::Invalid;
    };
    let features = grammar_features(grammar);
    let outputs = output_count(classes);
    let neurons: Result<Vec<Neuron>, _> = d
        .sentence
        .split(';')
        .map(|s| parse_neuron(s, features, outputs, 0))
        .collect();
    match neurons {
        Ok(n) if !n.is_empty() => MapOutcome::Valid(assemble(n, features, classes, Variant::GeBaseline)),
        _ => MapOutcome::Invalid,
    }
}

/// Puts neurons together behind one sigmoidal accumulator per output.
pub fn assemble(neurons: Vec<Neuron>, features: usize, classes: usize, variant: Variant) -> Network {
    Network::new(features, classes, variant, neurons).expect("mapped neurons form a valid network")
}

/// Checks the structural predicate of a variant; returns a description of the
/// first violation.
pub fn check_topology(net: &Network, variant: Variant) -> Result<(), String> {
    for (j, n) in net.hidden().iter().enumerate() {
        let name = format!("h{}", j + 1);
        if n.outputs.is_empty() {
            return Err(format!("{name} has no output connection"));
        }
        if variant.single_output_connection() && n.outputs.len() != 1 {
            return Err(format!("{name} has {} output connections", n.outputs.len()));
        }
        for k in n.hidden_sources() {
            if k >= j {
                return Err(format!("{name} reads h{} (not feed-forward)", k + 1));
            }
            if !variant.multi_layer() {
                return Err(format!("{name} reads h{} in a single-layer variant", k + 1));
            }
            if variant == Variant::Alpha && net.hidden()[k].outputs[0].output != n.outputs[0].output {
                return Err(format!("{name} reads h{} from another module", k + 1));
            }
        }
    }
    Ok(())
}
