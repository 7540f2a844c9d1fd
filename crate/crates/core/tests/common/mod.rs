//! Independent oracles for the integration tests.
#![allow(dead_code)]

use mge::network::{Network, Source};
use mge::tree::Tree;
use mge::Variant;
use rand::Rng;

// ---------------------------------------------------------------------------
// Exhaustive tree edit distance

struct Flat {
    labels: Vec<String>,
    /// Preorder interval `[pre, end)` of each node's subtree.
    end: Vec<usize>,
}

fn flatten(t: &Tree) -> Flat {
    fn walk(t: &Tree, labels: &mut Vec<String>, end: &mut Vec<usize>) {
        let me = labels.len();
        labels.push(t.label.clone());
        end.push(0);
        for c in &t.children {
            walk(c, labels, end);
        }
        end[me] = labels.len();
    }
    let (mut labels, mut end) = (Vec::new(), Vec::new());
    walk(t, &mut labels, &mut end);
    Flat { labels, end }
}

impl Flat {
    fn is_ancestor(&self, a: usize, b: usize) -> bool {
        a < b && b < self.end[a]
    }
}

/// Edit distance as the cheapest valid mapping: a partial one-to-one node
/// matching that preserves ancestry and preorder. Cost is one per renamed
/// pair plus one per unmatched node on either side. Exponential; keep trees
/// tiny.
pub fn brute_force_ted(a: &Tree, b: &Tree) -> usize {
    let (fa, fb) = (flatten(a), flatten(b));
    let mut pairs = Vec::new();
    let mut used = vec![false; fb.labels.len()];
    let mut best = usize::MAX;
    search(&fa, &fb, 0, &mut pairs, &mut used, &mut best);
    best
}

fn search(
    fa: &Flat,
    fb: &Flat,
    i: usize,
    pairs: &mut Vec<(usize, usize)>,
    used: &mut [bool],
    best: &mut usize,
) {
    if i == fa.labels.len() {
        let renames = pairs.iter().filter(|&&(x, y)| fa.labels[x] != fb.labels[y]).count();
        let cost = renames + (fa.labels.len() - pairs.len()) + (fb.labels.len() - pairs.len());
        *best = (*best).min(cost);
        return;
    }
    search(fa, fb, i + 1, pairs, used, best);
    for j in 0..fb.labels.len() {
        if used[j] {
            continue;
        }
        let consistent = pairs.iter().all(|&(x, y)| {
            fa.is_ancestor(x, i) == fb.is_ancestor(y, j)
                && fa.is_ancestor(i, x) == fb.is_ancestor(j, y)
                && (x < i) == (y < j)
        });
        if consistent {
            used[j] = true;
            pairs.push((i, j));
            search(fa, fb, i + 1, pairs, used, best);
            pairs.pop();
            used[j] = false;
        }
    }
}

/// Random ordered tree with exactly `size` nodes over a small alphabet.
pub fn random_tree<R: Rng>(rng: &mut R, size: usize, alphabet: &[&str]) -> Tree {
    assert!(size >= 1);
    let label = alphabet[rng.random_range(0..alphabet.len())];
    let mut rest = size - 1;
    let mut children = Vec::new();
    while rest > 0 {
        let s = rng.random_range(1..=rest);
        children.push(random_tree(rng, s, alphabet));
        rest -= s;
    }
    Tree::node(label, children)
}

// ---------------------------------------------------------------------------
// Expression interpreter

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    x: &'a [f64],
    h: &'a [f64],
}

impl Parser<'_> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos] == b' ' {
            self.pos += 1;
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.s[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> f64 {
        let start = self.pos;
        if matches!(self.s[self.pos], b'+' | b'-') {
            self.pos += 1;
        }
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        text.parse().unwrap_or_else(|_| panic!("bad number {text:?}"))
    }

    fn index(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).unwrap().parse().unwrap()
    }

    fn atom(&mut self) -> f64 {
        if self.eat("sig(") {
            let v = self.sum();
            assert!(self.eat(")"), "missing ) at {}", self.pos);
            1.0 / (1.0 + (-v).exp())
        } else if self.eat("x") {
            self.x[self.index() - 1]
        } else if self.eat("h") {
            self.h[self.index() - 1]
        } else {
            panic!("unexpected input at {}", self.pos)
        }
    }

    /// `w*atom`, a bare number, or an atom.
    fn term(&mut self) -> f64 {
        self.ws();
        let c = self.s[self.pos];
        if c == b'+' || c == b'-' || c.is_ascii_digit() {
            let w = self.number();
            if self.eat("*") {
                w * self.atom()
            } else {
                w
            }
        } else {
            self.atom()
        }
    }

    fn sum(&mut self) -> f64 {
        let mut v = self.term();
        loop {
            self.ws();
            if self.s[self.pos..].starts_with(b"+ ") {
                self.pos += 1;
                v += self.term();
            } else {
                return v;
            }
        }
    }
}

/// Evaluates a rendered expression with features `x` and hidden activations
/// `h` (1-based names in the text).
pub fn eval_expression(text: &str, x: &[f64], h: &[f64]) -> f64 {
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
        x,
        h,
    };
    let v = p.sum();
    p.ws();
    assert_eq!(p.pos, text.len(), "trailing input in {text:?}");
    v
}

/// Class probabilities computed only from the network's printed
/// expressions: one sigmoid output gives `[s, 1 - s]`, several are
/// normalized with a softmax.
pub fn interpret(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut h = Vec::new();
    for e in net.hidden_expressions() {
        let v = eval_expression(&e, x, &h);
        h.push(v);
    }
    let outs: Vec<f64> = net.output_expressions().iter().map(|e| eval_expression(e, x, &h)).collect();
    if outs.len() == 1 {
        vec![outs[0], 1.0 - outs[0]]
    } else {
        let e: Vec<f64> = outs.iter().map(|v| v.exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|v| v / z).collect()
    }
}

// ---------------------------------------------------------------------------
// Topology predicates

/// The structural rule of each variant, written from the variant
/// definitions rather than from the library's checker.
pub fn topology_violation(net: &Network, variant: Variant) -> Option<String> {
    let hidden = net.hidden();
    for (j, n) in hidden.iter().enumerate() {
        let refs: Vec<usize> = n
            .inputs
            .iter()
            .filter_map(|c| match c.source {
                Source::Hidden(k) => Some(k),
                Source::Feature(_) => None,
            })
            .collect();
        let one_output = n.outputs.len() == 1;
        let ok = match variant {
            Variant::Mge | Variant::GeBaseline => one_output && refs.is_empty(),
            Variant::Eta => !n.outputs.is_empty() && refs.is_empty(),
            Variant::Beta => one_output && refs.iter().all(|&k| k < j),
            Variant::Mu => !n.outputs.is_empty() && refs.iter().all(|&k| k < j),
            Variant::Alpha => {
                one_output
                    && refs
                        .iter()
                        .all(|&k| k < j && hidden[k].outputs[0].output == n.outputs[0].output)
            }
        };
        if !ok {
            return Some(format!("h{} = {}", j + 1, n.sentence()));
        }
    }
    None
}
