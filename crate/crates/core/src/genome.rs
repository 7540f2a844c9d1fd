//! Genotypes: the flat codon string of the baseline mapper and the modular
//! list of fixed-length genes.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default gene length in codons.
pub const DEFAULT_GENE_LENGTH: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenomeError {
    #[error("a genotype needs at least one gene")]
    NoGenes,
    #[error("a gene needs at least one codon")]
    EmptyGene,
    #[error("a flat genotype needs at least one codon")]
    EmptyGenotype,
    #[error("invalid genotype document: {0}")]
    Json(String),
}

/// One gene: a fixed-length vector of 8-bit codons, decoded into one neuron.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gene(pub Vec<u8>);

impl Gene {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, length: usize) -> Self {
        Gene((0..length).map(|_| rng.random()).collect())
    }

    pub fn codons(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An ordered, non-empty list of genes. Gene order fixes mapping order.
///
/// Serialized as a list of integer lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Gene>", into = "Vec<Gene>")]
pub struct ModularGenotype {
    genes: Vec<Gene>,
}

impl TryFrom<Vec<Gene>> for ModularGenotype {
    type Error = GenomeError;

    fn try_from(genes: Vec<Gene>) -> Result<Self, Self::Error> {
        Self::new(genes)
    }
}

impl From<ModularGenotype> for Vec<Gene> {
    fn from(g: ModularGenotype) -> Self {
        g.genes
    }
}

impl ModularGenotype {
    pub fn new(genes: Vec<Gene>) -> Result<Self, GenomeError> {
        if genes.is_empty() {
            return Err(GenomeError::NoGenes);
        }
        if genes.iter().any(Gene::is_empty) {
            return Err(GenomeError::EmptyGene);
        }
        Ok(Self { genes })
    }

    pub fn from_codons(genes: Vec<Vec<u8>>) -> Result<Self, GenomeError> {
        Self::new(genes.into_iter().map(Gene).collect())
    }

    /// Draws the gene count uniformly from `sigma_range` (inclusive) and fills
    /// every codon of every gene uniformly from `[0, 255]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, sigma_range: (usize, usize), gene_length: usize) -> Self {
        let (lo, hi) = sigma_range;
        assert!(1 <= lo && lo <= hi, "gene count range must satisfy 1 <= lo <= hi");
        assert!(gene_length >= 1, "gene length must be positive");
        let count = rng.random_range(lo..=hi);
        Self {
            genes: (0..count).map(|_| Gene::random(rng, gene_length)).collect(),
        }
    }

    pub fn genes(&self) -> &[Gene] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn total_codons(&self) -> usize {
        self.genes.iter().map(Gene::len).sum()
    }

    /// Mutable access for variation operators. Callers must keep at least one
    /// non-empty gene.
    pub(crate) fn genes_mut(&mut self) -> &mut Vec<Gene> {
        &mut self.genes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("genotype serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GenomeError> {
        serde_json::from_str(text).map_err(|e| GenomeError::Json(e.to_string()))
    }
}

/// A variable-length codon string for the baseline mapper.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct FlatGenotype {
    codons: Vec<u8>,
}

impl TryFrom<Vec<u8>> for FlatGenotype {
    type Error = GenomeError;

    fn try_from(codons: Vec<u8>) -> Result<Self, Self::Error> {
        Self::new(codons)
    }
}

impl From<FlatGenotype> for Vec<u8> {
    fn from(g: FlatGenotype) -> Self {
        g.codons
    }
}

impl FlatGenotype {
    pub fn new(codons: Vec<u8>) -> Result<Self, GenomeError> {
        if codons.is_empty() {
            return Err(GenomeError::EmptyGenotype);
        }
        Ok(Self { codons })
    }

    /// Length uniform in `length_range` (inclusive), codons uniform in `[0, 255]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, length_range: (usize, usize)) -> Self {
        let (lo, hi) = length_range;
        assert!(1 <= lo && lo <= hi);
        let len = rng.random_range(lo..=hi);
        Self {
            codons: (0..len).map(|_| rng.random()).collect(),
        }
    }

    pub fn codons(&self) -> &[u8] {
        &self.codons
    }

    pub fn len(&self) -> usize {
        self.codons.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn codons_mut(&mut self) -> &mut Vec<u8> {
        &mut self.codons
    }
}

/// Bit-level view of a genotype: 8 bits per codon, codons concatenated in gene
/// order. Bit 0 of a codon is its least significant bit.
pub trait BitString {
    fn bit_len(&self) -> usize;
    fn flip_bit(&mut self, position: usize);
    fn codon_iter(&self) -> Box<dyn Iterator<Item = u8> + '_>;
}

impl BitString for FlatGenotype {
    fn bit_len(&self) -> usize {
        self.codons.len() * 8
    }

    fn flip_bit(&mut self, position: usize) {
        self.codons[position / 8] ^= 1 << (position % 8);
    }

    fn codon_iter(&self) -> Box<dyn Iterator<Item = u8> + '_> {
        Box::new(self.codons.iter().copied())
    }
}

impl BitString for ModularGenotype {
    fn bit_len(&self) -> usize {
        self.total_codons() * 8
    }

    fn flip_bit(&mut self, position: usize) {
        let mut codon = position / 8;
        for gene in &mut self.genes {
            if codon < gene.0.len() {
                gene.0[codon] ^= 1 << (position % 8);
                return;
            }
            codon -= gene.0.len();
        }
        panic!("bit position {position} out of range");
    }

    fn codon_iter(&self) -> Box<dyn Iterator<Item = u8> + '_> {
        Box::new(self.genes.iter().flat_map(|g| g.0.iter().copied()))
    }
}

/// Returns a copy of `genotype` that differs in exactly `k` distinct bit
/// positions, chosen uniformly.
pub fn flip_hamming_bits<G, R>(genotype: &G, k: usize, rng: &mut R) -> G
where
    G: BitString + Clone,
    R: Rng + ?Sized,
{
    let bits = genotype.bit_len();
    assert!(k <= bits, "cannot flip {k} bits of a {bits}-bit genotype");
    let mut out = genotype.clone();
    for pos in index::sample(rng, bits, k) {
        out.flip_bit(pos);
    }
    out
}

/// Bitwise Hamming distance between two genotypes of the same shape.
pub fn hamming_distance<G: BitString>(a: &G, b: &G) -> u32 {
    assert_eq!(a.bit_len(), b.bit_len(), "genotypes differ in length");
    a.codon_iter()
        .zip(b.codon_iter())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}
