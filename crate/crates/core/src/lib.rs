//! Modular grammatical evolution of feed-forward neural network classifiers.
//!
//! A genotype is a list of genes. Each gene is decoded independently through a
//! BNF grammar into exactly one hidden neuron, and the decoded neurons are then
//! assembled into a network with one sigmoidal accumulator per output. Five
//! topology variants restrict how hidden neurons may connect to each other and
//! to the outputs. A flat-genotype grammatical evolution mapper is included as
//! a baseline for the representation analyses (invalidity, locality and
//! scalability).
//!
//! ```
//! use mge::grammar::{build_neuron_grammar, NeuronGrammarOptions};
//! use mge::genome::ModularGenotype;
//! use mge::mapping::{map_individual, MapOutcome, Variant};
//! use rand::SeedableRng;
//!
//! let grammar = build_neuron_grammar(2, 1, Variant::Mge, &NeuronGrammarOptions::default());
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let genotype = ModularGenotype::random(&mut rng, (3, 3), 100);
//! if let MapOutcome::Valid(net) = map_individual(&genotype, &grammar, Variant::Mge, 2) {
//!     let p = net.forward(&[0.2, 0.8]).unwrap();
//!     assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
//! }
//! ```

pub mod analysis;
pub mod data;
pub mod evolution;
pub mod experiment;
pub mod genome;
pub mod grammar;
pub mod mapping;
pub mod network;
pub mod rng;
pub mod tree;

pub use mapping::{MapOutcome, Variant};
pub use network::Network;
