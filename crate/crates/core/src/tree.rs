//! Labeled ordered trees.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    pub label: String,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Self {
        Self {
            label: label.into(),
            children,
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Tree::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Labels in postorder.
    pub fn postorder_labels(&self) -> Vec<&str> {
        fn walk<'a>(t: &'a Tree, out: &mut Vec<&'a str>) {
            for c in &t.children {
                walk(c, out);
            }
            out.push(&t.label);
        }
        let mut out = Vec::with_capacity(self.size());
        walk(self, &mut out);
        out
    }
}

/// S-expression form: `label` for leaves, `(label child ...)` otherwise.
impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            return f.write_str(&self.label);
        }
        write!(f, "({}", self.label)?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        f.write_str(")")
    }
}
