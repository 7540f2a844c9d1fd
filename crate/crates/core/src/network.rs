//! The phenotype: a feed-forward network of sigmoidal hidden neurons feeding
//! sigmoidal accumulator outputs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::mapping::Variant;
use crate::tree::Tree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input feature {0} is not finite")]
    NonFiniteInput(usize),
    #[error("malformed network: {0}")]
    Malformed(String),
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Number of output neurons for a task with `classes` classes. Binary tasks
/// use a single sigmoid output.
pub fn output_count(classes: usize) -> usize {
    if classes <= 2 {
        1
    } else {
        classes
    }
}

/// Where a hidden neuron's input comes from. Indices are 0-based; the textual
/// form is 1-based (`x1`, `h1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Feature(usize),
    Hidden(usize),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Feature(i) => write!(f, "x{}", i + 1),
            Source::Hidden(j) => write!(f, "h{}", j + 1),
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |(i, _)| i));
        let digits = rest.strip_prefix('_').unwrap_or(rest);
        let index: usize = digits
            .parse()
            .map_err(|_| format!("bad source reference {s:?}"))?;
        if index == 0 {
            return Err(format!("source references are 1-based: {s:?}"));
        }
        match kind {
            "x" => Ok(Source::Feature(index - 1)),
            "h" => Ok(Source::Hidden(index - 1)),
            _ => Err(format!("bad source reference {s:?}")),
        }
    }
}

impl Serialize for Source {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputConn {
    pub source: Source,
    pub weight: f64,
}

/// Connection from a hidden neuron to an output neuron (0-based index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputConn {
    pub output: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    pub outputs: Vec<OutputConn>,
    pub inputs: Vec<InputConn>,
    pub bias: f64,
}

impl Neuron {
    pub fn hidden_sources(&self) -> impl Iterator<Item = usize> + '_ {
        self.inputs.iter().filter_map(|c| match c.source {
            Source::Hidden(j) => Some(j),
            Source::Feature(_) => None,
        })
    }

    pub fn connection_count(&self) -> usize {
        self.inputs.len() + 1 + self.outputs.len()
    }

    /// The activation part, `sig(w*x1 + ... + b)`.
    pub fn activation_string(&self) -> String {
        let mut s = String::from("sig(");
        for c in &self.inputs {
            s.push_str(&format!("{:+}*{} + ", c.weight, c.source));
        }
        s.push_str(&format!("{:+})", self.bias));
        s
    }

    /// Textual neuron: `(output1:+0.5) * sig(+0.25*x1 + -0.5*h1 + +0.1)`.
    pub fn sentence(&self) -> String {
        let outs: Vec<String> = self
            .outputs
            .iter()
            .map(|o| format!("(output{}:{:+})", o.output + 1, o.weight))
            .collect();
        format!("{} * {}", outs.join(","), self.activation_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    /// One output neuron `s1`; class probabilities are `[s1, 1 - s1]`.
    SingleSigmoid,
    /// One output neuron per class, normalized by softmax.
    Softmax,
}

/// Structural measures of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    /// Longest chain of hidden neurons.
    pub layers: usize,
    /// Hidden neurons.
    pub neurons: usize,
    /// Distinct input features referenced.
    pub features_used: usize,
    /// Input, bias and output connections of all hidden neurons.
    pub connections: usize,
    /// `2 * connections + 4 * (hidden + output neurons)`.
    pub flops: usize,
}

/// An assembled network. Immutable once built; hidden neurons only reference
/// earlier hidden neurons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    features: usize,
    classes: usize,
    variant: Variant,
    hidden: Vec<Neuron>,
}

#[derive(Deserialize)]
struct RawNetwork {
    features: usize,
    classes: usize,
    variant: Variant,
    hidden: Vec<Neuron>,
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawNetwork::deserialize(d)?;
        Network::new(raw.features, raw.classes, raw.variant, raw.hidden).map_err(serde::de::Error::custom)
    }
}

impl Network {
    pub fn new(
        features: usize,
        classes: usize,
        variant: Variant,
        hidden: Vec<Neuron>,
    ) -> Result<Self, NetworkError> {
        let bad = |m: String| Err(NetworkError::Malformed(m));
        if features == 0 || classes == 0 {
            return bad("features and classes must be positive".into());
        }
        if hidden.is_empty() {
            return bad("a network needs at least one hidden neuron".into());
        }
        let outputs = output_count(classes);
        for (j, n) in hidden.iter().enumerate() {
            if n.outputs.is_empty() {
                return bad(format!("h{} has no output connection", j + 1));
            }
            if let Some(o) = n.outputs.iter().find(|o| o.output >= outputs) {
                return bad(format!("h{} targets output{} of {outputs}", j + 1, o.output + 1));
            }
            for c in &n.inputs {
                match c.source {
                    Source::Feature(i) if i >= features => {
                        return bad(format!("h{} reads x{} of {features}", j + 1, i + 1))
                    }
                    Source::Hidden(k) if k >= j => {
                        return bad(format!("h{} reads h{} (not feed-forward)", j + 1, k + 1))
                    }
                    _ => {}
                }
            }
            let weights = n.inputs.iter().map(|c| c.weight).chain(n.outputs.iter().map(|o| o.weight));
            if !weights.chain([n.bias]).all(f64::is_finite) {
                return bad(format!("h{} has a non-finite weight", j + 1));
            }
        }
        Ok(Self {
            features,
            classes,
            variant,
            hidden,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn hidden(&self) -> &[Neuron] {
        &self.hidden
    }

    pub fn output_count(&self) -> usize {
        output_count(self.classes)
    }

    pub fn output_kind(&self) -> OutputKind {
        if self.output_count() == 1 {
            OutputKind::SingleSigmoid
        } else {
            OutputKind::Softmax
        }
    }

    /// Class probabilities for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.features {
            return Err(NetworkError::DimensionMismatch {
                expected: self.features,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(NetworkError::NonFiniteInput(i));
        }
        let mut scratch = Scratch::default();
        let mut probs = Vec::new();
        self.forward_into(x, &mut scratch, &mut probs);
        Ok(probs)
    }

    /// Unchecked forward pass reusing caller buffers.
    pub fn forward_into(&self, x: &[f64], scratch: &mut Scratch, probs: &mut Vec<f64>) {
        let outputs = self.output_count();
        scratch.hidden.clear();
        scratch.sums.clear();
        scratch.sums.resize(outputs, 0.0);
        for n in &self.hidden {
            let mut z = n.bias;
            for c in &n.inputs {
                z += c.weight
                    * match c.source {
                        Source::Feature(i) => x[i],
                        Source::Hidden(j) => scratch.hidden[j],
                    };
            }
            let h = sigmoid(z);
            for o in &n.outputs {
                scratch.sums[o.output] += o.weight * h;
            }
            scratch.hidden.push(h);
        }
        probs.clear();
        if outputs == 1 {
            let s = sigmoid(scratch.sums[0]);
            probs.push(s);
            probs.push(1.0 - s);
        } else {
            let s: Vec<f64> = scratch.sums.iter().map(|&v| sigmoid(v)).collect();
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = s.iter().map(|&v| (v - max).exp()).sum();
            probs.extend(s.iter().map(|&v| (v - max).exp() / total));
        }
    }

    /// Most probable class (0-based); ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, NetworkError> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn metrics(&self) -> NetworkMetrics {
        let mut depth = vec![0usize; self.hidden.len()];
        for (j, n) in self.hidden.iter().enumerate() {
            depth[j] = 1 + n.hidden_sources().map(|k| depth[k]).max().unwrap_or(0);
        }
        let features: BTreeSet<usize> = self
            .hidden
            .iter()
            .flat_map(|n| n.inputs.iter())
            .filter_map(|c| match c.source {
                Source::Feature(i) => Some(i),
                Source::Hidden(_) => None,
            })
            .collect();
        let connections = self.hidden.iter().map(Neuron::connection_count).sum();
        let neurons = self.hidden.len();
        NetworkMetrics {
            layers: depth.into_iter().max().unwrap_or(0),
            neurons,
            features_used: features.len(),
            connections,
            flops: flops(connections, neurons + self.output_count()),
        }
    }

    /// Activation expression of every hidden neuron; `h<j>` refers to the
    /// j-th entry.
    pub fn hidden_expressions(&self) -> Vec<String> {
        self.hidden.iter().map(Neuron::activation_string).collect()
    }

    /// One expression per output neuron: `sig(w*sig(...) + ...)`. An output
    /// with no incoming connection is `sig(0)`.
    pub fn output_expressions(&self) -> Vec<String> {
        (0..self.output_count())
            .map(|k| {
                let terms: Vec<String> = self
                    .hidden
                    .iter()
                    .flat_map(|n| {
                        n.outputs
                            .iter()
                            .filter(move |o| o.output == k)
                            .map(move |o| format!("{:+}*{}", o.weight, n.activation_string()))
                    })
                    .collect();
                if terms.is_empty() {
                    "sig(0)".to_string()
                } else {
                    format!("sig({})", terms.join(" + "))
                }
            })
            .collect()
    }

    /// Human-readable dump: neuron sentences then output expressions.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (j, n) in self.hidden.iter().enumerate() {
            out.push_str(&format!("h{} = {}\n", j + 1, n.sentence()));
        }
        for (k, e) in self.output_expressions().iter().enumerate() {
            out.push_str(&format!("output{} = {}\n", k + 1, e));
        }
        out
    }

    /// Evaluation tree: root `net`, one `sig` subtree per output. Operators
    /// (`sig`, `+`, `*`) are internal nodes; features, weights and biases are
    /// leaves. Hidden-neuron references are expanded in place.
    pub fn to_eval_tree(&self) -> Tree {
        let neuron_trees: Vec<Tree> = {
            let mut built: Vec<Tree> = Vec::with_capacity(self.hidden.len());
            for n in &self.hidden {
                let mut terms: Vec<Tree> = n
                    .inputs
                    .iter()
                    .map(|c| {
                        let src = match c.source {
                            Source::Feature(_) => Tree::leaf(c.source.to_string()),
                            Source::Hidden(j) => built[j].clone(),
                        };
                        Tree::node("*", vec![Tree::leaf(weight_label(c.weight)), src])
                    })
                    .collect();
                terms.push(Tree::leaf(weight_label(n.bias)));
                built.push(Tree::node("sig", vec![Tree::node("+", terms)]));
            }
            built
        };
        let outputs = (0..self.output_count())
            .map(|k| {
                let terms: Vec<Tree> = self
                    .hidden
                    .iter()
                    .zip(&neuron_trees)
                    .flat_map(|(n, t)| {
                        n.outputs.iter().filter(move |o| o.output == k).map(move |o| {
                            Tree::node("*", vec![Tree::leaf(weight_label(o.weight)), t.clone()])
                        })
                    })
                    .collect();
                if terms.is_empty() {
                    Tree::node("sig", vec![Tree::leaf("0")])
                } else {
                    Tree::node("sig", vec![Tree::node("+", terms)])
                }
            })
            .collect();
        Tree::node("net", outputs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        serde_json::from_str(text).map_err(|e| NetworkError::Malformed(e.to_string()))
    }
}

fn weight_label(w: f64) -> String {
    format!("{w}")
}

/// Floating-point operations of one prediction: two per connection, four per
/// sigmoid neuron.
pub fn flops(connections: usize, neurons: usize) -> usize {
    2 * connections + 4 * neurons
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Reusable buffers for [`Network::forward_into`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    hidden: Vec<f64>,
    sums: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neuron(outputs: &[(usize, f64)], inputs: &[(Source, f64)], bias: f64) -> Neuron {
        Neuron {
            outputs: outputs
                .iter()
                .map(|&(output, weight)| OutputConn { output, weight })
                .collect(),
            inputs: inputs
                .iter()
                .map(|&(source, weight)| InputConn { source, weight })
                .collect(),
            bias,
        }
    }

    /// Four hidden neurons, three outputs, fifteen connections.
    fn four_neuron_net() -> Network {
        use Source::*;
        Network::new(
            3,
            3,
            Variant::Beta,
            vec![
                neuron(&[(0, 0.2)], &[(Feature(0), 0.5), (Feature(1), 0.1)], 0.3),
                neuron(&[(1, 0.4)], &[(Hidden(0), 0.6)], -0.2),
                neuron(&[(2, -0.7)], &[(Feature(2), 0.9), (Feature(0), -0.4)], 0.1),
                neuron(&[(0, 0.8)], &[(Feature(1), -0.3), (Feature(2), 0.25)], 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_weight_neuron_gives_half() {
        let net = Network::new(1, 2, Variant::Mge, vec![neuron(&[(0, 0.0)], &[(Source::Feature(0), 0.0)], 0.0)]).unwrap();
        let p = net.forward(&[3.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn equal_scores_give_uniform_softmax() {
        let net = Network::new(1, 4, Variant::Eta, vec![neuron(&[(0, 0.0)], &[(Source::Feature(0), 1.0)], 0.0)]).unwrap();
        let p = net.forward(&[0.3]).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let net = four_neuron_net();
        assert_eq!(
            net.forward(&[1.0]),
            Err(NetworkError::DimensionMismatch { expected: 3, got: 1 })
        );
        assert_eq!(net.forward(&[1.0, f64::NAN, 0.0]), Err(NetworkError::NonFiniteInput(1)));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn binary_prediction_uses_s1_for_first_class() {
        // s1 = sig(z) = 0.9 when z = ln 9
        let z = 9f64.ln();
        let net = Network::new(1, 2, Variant::Mge, vec![neuron(&[(0, 1.0)], &[(Source::Feature(0), 0.0)], 1e3)]).unwrap();
        // hidden ~ 1.0, so s1 = sig(1.0 * 1.0)
        let p = net.forward(&[0.0]).unwrap();
        assert!((p[0] - sigmoid(1.0)).abs() < 1e-12);
        assert_eq!(net.predict(&[0.0]).unwrap(), 0);
        let net = Network::new(1, 2, Variant::Mge, vec![neuron(&[(0, z)], &[(Source::Feature(0), 0.0)], 1e3)]).unwrap();
        let p = net.forward(&[0.0]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert_eq!(net.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn flops_for_fifteen_connections_and_seven_neurons() {
        let m = four_neuron_net().metrics();
        assert_eq!(m.connections, 15);
        assert_eq!(m.neurons, 4);
        assert_eq!(m.flops, 58);
        assert_eq!(m.layers, 2);
        assert_eq!(m.features_used, 3);
    }

    #[test]
    fn layers_follow_longest_chain() {
        use Source::*;
        let single = Network::new(2, 2, Variant::Mge, vec![
            neuron(&[(0, 1.0)], &[(Feature(0), 1.0)], 0.0),
            neuron(&[(0, 1.0)], &[(Feature(1), 1.0)], 0.0),
        ]).unwrap();
        assert_eq!(single.metrics().layers, 1);
        let chain = Network::new(1, 2, Variant::Mu, vec![
            neuron(&[(0, 1.0)], &[(Feature(0), 1.0)], 0.0),
            neuron(&[(0, 1.0)], &[(Hidden(0), 1.0)], 0.0),
            neuron(&[(0, 1.0)], &[(Hidden(1), 1.0)], 0.0),
        ]).unwrap();
        assert_eq!(chain.metrics().layers, 3);
    }

    #[test]
    fn construction_validates_references() {
        use Source::*;
        assert!(Network::new(1, 2, Variant::Mu, vec![neuron(&[(0, 1.0)], &[(Hidden(0), 1.0)], 0.0)]).is_err());
        assert!(Network::new(1, 2, Variant::Mu, vec![neuron(&[(0, 1.0)], &[(Feature(1), 1.0)], 0.0)]).is_err());
        assert!(Network::new(1, 2, Variant::Mu, vec![neuron(&[(1, 1.0)], &[(Feature(0), 1.0)], 0.0)]).is_err());
        assert!(Network::new(1, 2, Variant::Mu, vec![neuron(&[], &[(Feature(0), 1.0)], 0.0)]).is_err());
        assert!(Network::new(1, 2, Variant::Mu, vec![]).is_err());
    }

    #[test]
    fn eval_tree_is_deterministic_and_local() {
        let net = four_neuron_net();
        assert_eq!(net.to_eval_tree(), four_neuron_net().to_eval_tree());
        let mut hidden = net.hidden().to_vec();
        hidden[2].inputs[0].weight = 0.8;
        let other = Network::new(3, 3, Variant::Beta, hidden).unwrap();
        let a = net.to_eval_tree();
        let b = other.to_eval_tree();
        let (la, lb) = (a.postorder_labels(), b.postorder_labels());
        assert_eq!(la.len(), lb.len());
        assert_eq!(la.iter().zip(&lb).filter(|(x, y)| x != y).count(), 1);
    }

    #[test]
    fn empty_output_is_constant() {
        let net = Network::new(1, 3, Variant::Mge, vec![neuron(&[(0, 1.0)], &[(Source::Feature(0), 1.0)], 0.0)]).unwrap();
        let exprs = net.output_expressions();
        assert_eq!(exprs[1], "sig(0)");
        assert_eq!(exprs[0], "sig(+1*sig(+1*x1 + +0))");
    }

    #[test]
    fn json_round_trip() {
        let net = four_neuron_net();
        let text = net.to_json();
        assert!(text.contains("\"h1\""));
        assert_eq!(Network::from_json(&text).unwrap(), net);
        let broken = text.replace("\"h1\"", "\"h4\"");
        assert!(Network::from_json(&broken).is_err());
    }

    #[test]
    fn source_parsing() {
        assert_eq!("x_1".parse::<Source>(), Ok(Source::Feature(0)));
        assert_eq!("h12".parse::<Source>(), Ok(Source::Hidden(11)));
        assert!("x0".parse::<Source>().is_err());
        assert!("y1".parse::<Source>().is_err());
    }
}
