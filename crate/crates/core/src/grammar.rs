//! BNF context-free grammars and the neuron-generating grammar family.
//!
//! File syntax: one rule per logical line, `<name> ::= alt | alt`, with a
//! trailing backslash continuing a rule onto the next physical line. A line
//! that starts with `|` also continues the previous rule. `<name>` is a
//! nonterminal, `"..."` or `'...'` is a quoted terminal, and any other run of
//! non-blank characters is a bare terminal. The first rule's left-hand side is
//! the start symbol. Lines starting with `#` are comments.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::mapping::Variant;

/// Name of the nonterminal that holds input connections and receives the
/// temporary neuron references during mapping.
pub const NEURON_REF_RULE: &str = "xnList";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("empty grammar text")]
    Empty,
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("undefined nonterminal <{name}> referenced at {line}:{column}")]
    UndefinedNonterminal {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("rule <{name}> defined twice (second definition on line {line})")]
    DuplicateRule { name: String, line: usize },
    #[error("grammar has no rules, so no start symbol")]
    NoStartRule,
    #[error("terminal {0:?} is already an alternative of this rule")]
    DuplicateAlternative(String),
    #[error("unknown nonterminal <{0}>")]
    UnknownNonterminal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    NonTerminal(usize),
    Terminal(usize),
}

/// A context-free grammar `<N, T, P, S>` with ordered alternatives.
///
/// Nonterminals and terminals are interned; `Symbol` indices point into the
/// two name tables. Alternative order is the source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    rules: Vec<Vec<Vec<Symbol>>>,
    start: usize,
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        parse_bnf(text)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn nonterminal(&self, name: &str) -> Option<usize> {
        self.nonterminals.iter().position(|n| n == name)
    }

    pub fn nonterminal_name(&self, index: usize) -> &str {
        &self.nonterminals[index]
    }

    pub fn terminal_text(&self, index: usize) -> &str {
        &self.terminals[index]
    }

    /// Productions of a nonterminal in source order.
    pub fn productions(&self, nonterminal: usize) -> &[Vec<Symbol>] {
        &self.rules[nonterminal]
    }

    /// Renders the grammar back to BNF text. All terminals are quoted, so
    /// `parse_bnf(render())` reproduces the same grammar.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (nt, alts) in self.rules.iter().enumerate() {
            out.push('<');
            out.push_str(&self.nonterminals[nt]);
            out.push_str("> ::=");
            for (i, alt) in alts.iter().enumerate() {
                if i > 0 {
                    out.push_str(" |");
                }
                for sym in alt {
                    out.push(' ');
                    match *sym {
                        Symbol::NonTerminal(n) => {
                            out.push('<');
                            out.push_str(&self.nonterminals[n]);
                            out.push('>');
                        }
                        Symbol::Terminal(t) => push_quoted(&mut out, &self.terminals[t]),
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for Grammar {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bnf(s)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn push_quoted(out: &mut String, text: &str) {
    out.push('"');
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

/// One alternative as seen through a [`RuleSource`]: either a production of the
/// base grammar or a terminal appended by an overlay.
#[derive(Debug, Clone, Copy)]
pub enum Alternative<'a> {
    Production(&'a [Symbol]),
    Appended(&'a str),
}

/// Read access to the alternatives of a grammar, possibly extended.
pub trait RuleSource {
    fn base(&self) -> &Grammar;
    fn alternative_count(&self, nonterminal: usize) -> usize;
    fn alternative(&self, nonterminal: usize, index: usize) -> Alternative<'_>;
}

impl RuleSource for Grammar {
    fn base(&self) -> &Grammar {
        self
    }

    fn alternative_count(&self, nonterminal: usize) -> usize {
        self.rules[nonterminal].len()
    }

    fn alternative(&self, nonterminal: usize, index: usize) -> Alternative<'_> {
        Alternative::Production(&self.rules[nonterminal][index])
    }
}

/// Scratch extension of a shared grammar with extra terminal alternatives.
///
/// Appended alternatives come after the base alternatives of their rule.
#[derive(Debug, Clone)]
pub struct GrammarOverlay<'g> {
    base: &'g Grammar,
    appended: Vec<Vec<String>>,
}

impl<'g> GrammarOverlay<'g> {
    pub fn new(base: &'g Grammar) -> Self {
        Self {
            base,
            appended: vec![Vec::new(); base.nonterminals.len()],
        }
    }

    pub fn append(&mut self, nonterminal: usize, terminal: String) -> Result<(), GrammarError> {
        let list = &mut self.appended[nonterminal];
        if list.contains(&terminal) {
            return Err(GrammarError::DuplicateAlternative(terminal));
        }
        list.push(terminal);
        Ok(())
    }

    /// Appends `h<index>` to the neuron-reference rule.
    pub fn add_neuron_ref(&mut self, index: usize) -> Result<(), GrammarError> {
        assert!(index >= 1, "neuron references are 1-based");
        let nt = self
            .base
            .nonterminal(NEURON_REF_RULE)
            .ok_or_else(|| GrammarError::UnknownNonterminal(NEURON_REF_RULE.to_string()))?;
        self.append(nt, format!("h{index}"))
    }

    pub fn appended(&self, nonterminal: usize) -> &[String] {
        &self.appended[nonterminal]
    }

    pub fn reset(&mut self) {
        self.appended.iter_mut().for_each(Vec::clear);
    }
}

impl RuleSource for GrammarOverlay<'_> {
    fn base(&self) -> &Grammar {
        self.base
    }

    fn alternative_count(&self, nonterminal: usize) -> usize {
        self.base.rules[nonterminal].len() + self.appended[nonterminal].len()
    }

    fn alternative(&self, nonterminal: usize, index: usize) -> Alternative<'_> {
        let base = &self.base.rules[nonterminal];
        if index < base.len() {
            Alternative::Production(&base[index])
        } else {
            Alternative::Appended(&self.appended[nonterminal][index - base.len()])
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

enum Token {
    NonTerminal(String),
    Terminal(String),
    Bar,
}

struct LogicalLine {
    text: String,
    // (physical line, column of first char) for each char of `text`
    positions: Vec<(usize, usize)>,
}

impl LogicalLine {
    fn pos(&self, idx: usize) -> (usize, usize) {
        self.positions
            .get(idx)
            .or_else(|| self.positions.last())
            .copied()
            .unwrap_or((1, 1))
    }
}

fn logical_lines(text: &str) -> Vec<LogicalLine> {
    let mut out: Vec<LogicalLine> = Vec::new();
    let mut current: Option<LogicalLine> = None;
    let mut continuing = false;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let trimmed = raw.trim_start();
        if !continuing && (trimmed.is_empty() || trimmed.starts_with('#')) {
            continue;
        }
        let mut body: Vec<(usize, char)> = raw.chars().enumerate().collect();
        let mut next_continues = false;
        while matches!(body.last(), Some((_, c)) if c.is_whitespace()) {
            body.pop();
        }
        if matches!(body.last(), Some((_, '\\'))) {
            body.pop();
            next_continues = true;
        }
        let starts_with_bar = trimmed.starts_with('|');
        if !(continuing || starts_with_bar) {
            if let Some(line) = current.take() {
                out.push(line);
            }
        }
        let line = current.get_or_insert_with(|| LogicalLine {
            text: String::new(),
            positions: Vec::new(),
        });
        if !line.text.is_empty() {
            line.text.push(' ');
            line.positions.push((lineno, 1));
        }
        for (col, c) in body {
            line.text.push(c);
            line.positions.push((lineno, col + 1));
        }
        continuing = next_continues;
    }
    if let Some(line) = current {
        out.push(line);
    }
    out
}

fn syntax(line: &LogicalLine, idx: usize, message: impl Into<String>) -> GrammarError {
    let (line, column) = line.pos(idx);
    GrammarError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(line: &LogicalLine, start: usize) -> Result<Vec<(Token, usize)>, GrammarError> {
    let chars: Vec<char> = line.text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '|' {
            tokens.push((Token::Bar, i));
            i += 1;
        } else if c == '<' {
            let begin = i;
            let mut j = i + 1;
            while j < chars.len() && chars[j] != '>' {
                if chars[j].is_whitespace() || chars[j] == '<' {
                    return Err(syntax(line, j, "malformed nonterminal name"));
                }
                j += 1;
            }
            if j >= chars.len() {
                return Err(syntax(line, begin, "unterminated nonterminal, expected '>'"));
            }
            let name: String = chars[i + 1..j].iter().collect();
            if name.is_empty() {
                return Err(syntax(line, begin, "empty nonterminal name"));
            }
            tokens.push((Token::NonTerminal(name), begin));
            i = j + 1;
        } else if c == '"' || c == '\'' {
            let begin = i;
            let mut text = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None => return Err(syntax(line, begin, "unterminated quoted terminal")),
                    Some('\\') => {
                        let escaped = chars
                            .get(j + 1)
                            .ok_or_else(|| syntax(line, j, "dangling escape"))?;
                        text.push(*escaped);
                        j += 2;
                    }
                    Some(&q) if q == c => break,
                    Some(&other) => {
                        text.push(other);
                        j += 1;
                    }
                }
            }
            if text.is_empty() {
                return Err(syntax(line, begin, "empty terminal"));
            }
            tokens.push((Token::Terminal(text), begin));
            i = j + 1;
        } else {
            let begin = i;
            let mut text = String::new();
            while i < chars.len() {
                let c = chars[i];
                if c.is_whitespace() || c == '<' || c == '|' || c == '"' || c == '\'' {
                    break;
                }
                text.push(c);
                i += 1;
            }
            tokens.push((Token::Terminal(text), begin));
        }
    }
    Ok(tokens)
}

/// Parses BNF text into a [`Grammar`].
pub fn parse_bnf(text: &str) -> Result<Grammar, GrammarError> {
    if text.trim().is_empty() {
        return Err(GrammarError::Empty);
    }
    let lines = logical_lines(text);
    if lines.is_empty() {
        return Err(GrammarError::NoStartRule);
    }

    // First pass: collect left-hand sides so forward references resolve.
    let mut heads = Vec::with_capacity(lines.len());
    let mut nonterminals: Vec<String> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    for line in &lines {
        let chars: Vec<char> = line.text.chars().collect();
        let first = chars.iter().position(|c| !c.is_whitespace()).unwrap_or(0);
        if chars.get(first) != Some(&'<') {
            return Err(syntax(line, first, "expected '<name>' at start of rule"));
        }
        let close = chars[first..]
            .iter()
            .position(|&c| c == '>')
            .map(|p| p + first)
            .ok_or_else(|| syntax(line, first, "unterminated nonterminal, expected '>'"))?;
        let name: String = chars[first + 1..close].iter().collect();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(syntax(line, first, "malformed nonterminal name"));
        }
        let offset = chars[close + 1..]
            .iter()
            .take_while(|c| c.is_whitespace())
            .count();
        let rest: String = chars[close + 1 + offset..].iter().collect();
        if !rest.starts_with("::=") {
            return Err(syntax(line, close + 1 + offset, "expected '::='"));
        }
        if index_of.contains_key(&name) {
            let (l, _) = line.pos(first);
            return Err(GrammarError::DuplicateRule { name, line: l });
        }
        index_of.insert(name.clone(), nonterminals.len());
        nonterminals.push(name);
        heads.push(close + 1 + offset + 3);
    }

    let mut terminals: Vec<String> = Vec::new();
    let mut terminal_index: HashMap<String, usize> = HashMap::new();
    let mut rules = Vec::with_capacity(lines.len());
    for (line, &body_start) in lines.iter().zip(&heads) {
        let tokens = tokenize(line, body_start)?;
        let mut alternatives: Vec<Vec<Symbol>> = Vec::new();
        let mut current: Vec<Symbol> = Vec::new();
        let mut last_pos = body_start;
        for (token, pos) in tokens {
            last_pos = pos;
            match token {
                Token::Bar => {
                    if current.is_empty() {
                        return Err(syntax(line, pos, "empty alternative"));
                    }
                    alternatives.push(std::mem::take(&mut current));
                }
                Token::NonTerminal(name) => {
                    let idx = *index_of.get(&name).ok_or_else(|| {
                        let (l, c) = line.pos(pos);
                        GrammarError::UndefinedNonterminal {
                            name: name.clone(),
                            line: l,
                            column: c,
                        }
                    })?;
                    current.push(Symbol::NonTerminal(idx));
                }
                Token::Terminal(text) => {
                    let next = terminals.len();
                    let idx = *terminal_index.entry(text.clone()).or_insert(next);
                    if idx == next {
                        terminals.push(text);
                    }
                    current.push(Symbol::Terminal(idx));
                }
            }
        }
        if current.is_empty() {
            return Err(syntax(line, last_pos, "empty alternative"));
        }
        alternatives.push(current);
        rules.push(alternatives);
    }

    Ok(Grammar {
        nonterminals,
        terminals,
        rules,
        start: 0,
    })
}

// ---------------------------------------------------------------------------
// Neuron grammar

/// How connection weights are spelled by `<Number>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDigits {
    /// `<Digitlist>` recurses, so weights have one or more fractional digits.
    #[default]
    Variable,
    /// Exactly this many fractional digits.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct NeuronGrammarOptions {
    #[serde(default)]
    pub weight_digits: WeightDigits,
}

fn alternatives_list(prefix: &str, count: usize) -> String {
    (1..=count)
        .map(|i| format!("{prefix}{i}"))
        .collect::<Vec<_>>()
        .join(" | ")
}

fn neuron_rules(features: usize, outputs: usize, variant: Variant, opts: &NeuronGrammarOptions) -> String {
    let start = if variant.single_output_connection() {
        r#"<S> ::= "(" <OutputNeuron> ":" <Number> ")" " * sig(" <Sum> " + " <Number> ")""#
    } else {
        r#"<S> ::= <OutputConns> " * sig(" <Sum> " + " <Number> ")""#
    };
    let digitlist = match opts.weight_digits {
        WeightDigits::Variable => "<Digitlist> ::= <Digit> | <Digit> <Digitlist>".to_string(),
        WeightDigits::Fixed(n) => {
            assert!(n >= 1, "at least one weight digit");
            format!("<Digitlist> ::={}", " <Digit>".repeat(n))
        }
    };
    format!(
        "{start}\n\
         <OutputConns> ::= \"(\" <OutputNeuron> \":\" <Number> \")\" \\\n    \
         | <OutputConns> \",\" \"(\" <OutputNeuron> \":\" <Number> \")\"\n\
         <OutputNeuron> ::= {outs}\n\
         <Sum> ::= <Number> \"*\" <xnList> | <Sum> \" + \" <Number> \"*\" <xnList>\n\
         <xnList> ::= {xs}\n\
         <Number> ::= <Sign> \"0.\" <Digitlist>\n\
         <Sign> ::= \"+\" | \"-\"\n\
         {digitlist}\n\
         <Digit> ::= 0 | 1 | 2 | 3 | 4 | 5 | 6 | 7 | 8 | 9\n",
        outs = alternatives_list("output", outputs),
        xs = alternatives_list("x", features),
    )
}

/// BNF text of the neuron-generating grammar for `features` inputs and
/// `outputs` output neurons.
pub fn neuron_grammar_text(
    features: usize,
    outputs: usize,
    variant: Variant,
    opts: &NeuronGrammarOptions,
) -> String {
    assert!(features >= 1 && outputs >= 1);
    neuron_rules(features, outputs, variant, opts)
}

/// Builds the neuron-generating grammar.
///
/// Modular variants (MGE, alpha, beta) start from a single output connection;
/// monolithic variants (eta, mu) start from `<OutputConns>`. `outputs` is the
/// number of output neurons, which is 1 for binary tasks.
pub fn build_neuron_grammar(
    features: usize,
    outputs: usize,
    variant: Variant,
    opts: &NeuronGrammarOptions,
) -> Grammar {
    parse_bnf(&neuron_grammar_text(features, outputs, variant, opts))
        .expect("generated neuron grammar is well formed")
}

/// Grammar for the flat-genotype baseline: a whole network is one sentence of
/// neurons separated by `" ; "`. Neurons use the single-output-connection form
/// and never reference other hidden neurons.
pub fn build_network_grammar(features: usize, outputs: usize, opts: &NeuronGrammarOptions) -> Grammar {
    let text = format!(
        "<Net> ::= <S> | <S> \" ; \" <Net>\n{}",
        neuron_rules(features, outputs, Variant::Mge, opts)
    );
    parse_bnf(&text).expect("generated network grammar is well formed")
}

/// The two-rule grammar `<start> ::= <exp>`, `<exp> ::= 0 | 1 <exp>`.
pub fn binary_string_grammar() -> Grammar {
    parse_bnf("<start> ::= <exp>\n<exp> ::= 0 | 1 <exp>\n").expect("static grammar")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alt_count(g: &Grammar, name: &str) -> usize {
        g.productions(g.nonterminal(name).unwrap()).len()
    }

    #[test]
    fn parses_binary_string_grammar() {
        let g = parse_bnf("<start> ::= <exp>\n<exp> ::= 0 | 1 <exp>").unwrap();
        assert_eq!(g.nonterminals(), ["start", "exp"]);
        assert_eq!(g.terminals(), ["0", "1"]);
        assert_eq!(alt_count(&g, "exp"), 2);
        assert_eq!(g.nonterminal_name(g.start()), "start");
        let exp = g.nonterminal("exp").unwrap();
        assert_eq!(g.productions(exp)[1], vec![Symbol::Terminal(1), Symbol::NonTerminal(exp)]);
    }

    #[test]
    fn minimal_grammar() {
        let g = parse_bnf("<s> ::= a").unwrap();
        assert_eq!(g.nonterminals().len(), 1);
        assert_eq!(g.terminals(), ["a"]);
        assert_eq!(alt_count(&g, "s"), 1);
    }

    #[test]
    fn undefined_nonterminal_is_rejected() {
        let err = parse_bnf("<s> ::= <undefined>").unwrap_err();
        assert_eq!(
            err,
            GrammarError::UndefinedNonterminal {
                name: "undefined".into(),
                line: 1,
                column: 9
            }
        );
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_bnf("<a> ::= x\n<b> = y").unwrap_err() {
            GrammarError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_bnf("<a> ::= x | | y").unwrap_err() {
            GrammarError::Syntax { line, column, .. } => assert_eq!((line, column), (1, 13)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_bnf("<a> ::= \"x"), Err(GrammarError::Syntax { .. })));
        assert!(matches!(parse_bnf("x ::= y"), Err(GrammarError::Syntax { .. })));
        assert_eq!(parse_bnf("  \n"), Err(GrammarError::Empty));
        assert_eq!(parse_bnf("# only a comment\n"), Err(GrammarError::NoStartRule));
        assert!(matches!(
            parse_bnf("<a> ::= x\n<a> ::= y"),
            Err(GrammarError::DuplicateRule { line: 2, .. })
        ));
    }

    #[test]
    fn continuation_lines() {
        let g = parse_bnf("<a> ::= x \\\n  | y\n<b> ::= <a>\n   | z").unwrap();
        assert_eq!(alt_count(&g, "a"), 2);
        assert_eq!(alt_count(&g, "b"), 2);
    }

    #[test]
    fn bare_terminals_split_at_nonterminals() {
        let g = parse_bnf("<S> ::= <O>:<D>*sig(<D>)\n<O> ::= 1\n<D> ::= 2").unwrap();
        let s = &g.productions(0)[0];
        let texts: Vec<String> = s
            .iter()
            .map(|sym| match *sym {
                Symbol::Terminal(t) => g.terminal_text(t).to_string(),
                Symbol::NonTerminal(n) => format!("<{}>", g.nonterminal_name(n)),
            })
            .collect();
        assert_eq!(texts, ["<O>", ":", "<D>", "*sig(", "<D>", ")"]);
    }

    #[test]
    fn quoted_terminals_keep_spaces_and_escapes() {
        let g = parse_bnf(r#"<a> ::= " + " | "say \"hi\"" | 'x|y'"#).unwrap();
        assert_eq!(g.terminals(), [" + ", "say \"hi\"", "x|y"]);
        let again = parse_bnf(&g.render()).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn neuron_grammar_eta_shape() {
        let g = build_neuron_grammar(3, 3, Variant::Eta, &NeuronGrammarOptions::default());
        let names: Vec<&str> = g.nonterminals().iter().map(String::as_str).collect();
        for n in ["S", "Sum", "xnList", "Number", "Digitlist", "Digit", "OutputNeuron", "OutputConns"] {
            assert!(names.contains(&n), "missing {n}");
        }
        assert_eq!(alt_count(&g, "OutputConns"), 2);
        assert_eq!(alt_count(&g, "OutputNeuron"), 3);
        assert_eq!(alt_count(&g, "xnList"), 3);
        let s = &g.productions(g.start())[0];
        assert_eq!(s[0], Symbol::NonTerminal(g.nonterminal("OutputConns").unwrap()));
    }

    #[test]
    fn neuron_grammar_modular_start_rule() {
        let g = build_neuron_grammar(2, 1, Variant::Mge, &NeuronGrammarOptions::default());
        let rendered = g.render();
        let first = rendered.lines().next().unwrap();
        assert_eq!(
            first,
            r#"<S> ::= "(" <OutputNeuron> ":" <Number> ")" " * sig(" <Sum> " + " <Number> ")""#
        );
        assert_eq!(alt_count(&g, "OutputNeuron"), 1);
        let out = g.nonterminal("OutputNeuron").unwrap();
        assert_eq!(g.terminal_text(match g.productions(out)[0][0] {
            Symbol::Terminal(t) => t,
            _ => unreachable!(),
        }), "output1");
    }

    #[test]
    fn single_feature_grammar() {
        let g = build_neuron_grammar(1, 1, Variant::Mge, &NeuronGrammarOptions::default());
        assert_eq!(alt_count(&g, "xnList"), 1);
    }

    #[test]
    fn fixed_digit_weights() {
        let opts = NeuronGrammarOptions {
            weight_digits: WeightDigits::Fixed(3),
        };
        let g = build_neuron_grammar(30, 1, Variant::Mge, &opts);
        let dl = g.nonterminal("Digitlist").unwrap();
        assert_eq!(g.productions(dl).len(), 1);
        assert_eq!(g.productions(dl)[0].len(), 3);
        assert_eq!(alt_count(&g, "xnList"), 30);
    }

    #[test]
    fn overlay_appends_and_resets() {
        let g = build_neuron_grammar(3, 1, Variant::Beta, &NeuronGrammarOptions::default());
        let xn = g.nonterminal(NEURON_REF_RULE).unwrap();
        let mut overlay = GrammarOverlay::new(&g);
        overlay.add_neuron_ref(1).unwrap();
        assert_eq!(overlay.alternative_count(xn), 4);
        assert!(matches!(overlay.alternative(xn, 3), Alternative::Appended("h1")));
        assert!(matches!(overlay.alternative(xn, 0), Alternative::Production(_)));
        assert_eq!(
            overlay.add_neuron_ref(1),
            Err(GrammarError::DuplicateAlternative("h1".into()))
        );
        overlay.reset();
        assert_eq!(overlay.alternative_count(xn), 3);
        for nt in 0..g.nonterminals().len() {
            assert_eq!(overlay.alternative_count(nt), g.alternative_count(nt));
        }
    }

    #[test]
    fn render_round_trips_generated_grammars() {
        for variant in [Variant::Mge, Variant::Mu] {
            let g = build_neuron_grammar(4, 3, variant, &NeuronGrammarOptions::default());
            assert_eq!(parse_bnf(&g.render()).unwrap(), g);
        }
        let g = build_network_grammar(5, 2, &NeuronGrammarOptions::default());
        assert_eq!(parse_bnf(&g.render()).unwrap(), g);
    }
}
