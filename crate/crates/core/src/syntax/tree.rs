use std::fmt;

use crate::error::{Error, Result};
use crate::model::{CharSpan, Sentence};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    /// Token index for terminals; `None` for phrase and tag nodes.
    pub token: Option<usize>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.token.is_some()
    }
}

/// Ordered phrase-structure tree over the tokens of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituencyTree {
    nodes: Vec<Node>,
    root: NodeId,
}

/// Strip function tags and indices: `NP-SBJ-1` → `NP`, `-NONE-` stays.
pub fn base_label(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    label.split(['-', '=']).next().unwrap_or(label)
}

pub fn is_punctuation_label(label: &str) -> bool {
    matches!(
        label,
        "." | "," | ":" | "``" | "''" | "-LRB-" | "-RRB-" | "HYPH" | "NFP" | "$" | "#"
    )
}

fn unescape(word: &str) -> &str {
    match word {
        "-LRB-" => "(",
        "-RRB-" => ")",
        "-LSB-" => "[",
        "-RSB-" => "]",
        "-LCB-" => "{",
        "-RCB-" => "}",
        "``" | "''" => "\"",
        other => other,
    }
}

enum Lexeme<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(text: &str) -> Vec<Lexeme<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Lexeme::Atom(&text[s..i]));
            }
            if c == '(' {
                out.push(Lexeme::Open);
            } else if c == ')' {
                out.push(Lexeme::Close);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Lexeme::Atom(&text[s..]));
    }
    out
}

impl ConstituencyTree {
    /// Parse bracketed notation, e.g. `(S (NP (PRP He)) (VP (VBD cried)) (. .))`.
    /// Terminals are numbered left to right.
    pub fn from_bracketed(text: &str) -> Result<Self> {
        let lexemes = lex(text);
        let mut tree = ConstituencyTree {
            nodes: Vec::new(),
            root: 0,
        };
        let mut pos = 0;
        let mut next_token = 0;
        let root = tree.parse_node(&lexemes, &mut pos, None, &mut next_token)?;
        if pos != lexemes.len() {
            return Err(Error::Tree("trailing input after the root node".into()));
        }
        tree.root = root;
        // An unlabeled wrapper around a single tree, as some parsers emit.
        let r = &tree.nodes[root];
        if r.label.is_empty() && r.children.len() == 1 {
            tree.root = r.children[0];
            tree.nodes[tree.root].parent = None;
        }
        Ok(tree)
    }

    fn parse_node(
        &mut self,
        lexemes: &[Lexeme<'_>],
        pos: &mut usize,
        parent: Option<NodeId>,
        next_token: &mut usize,
    ) -> Result<NodeId> {
        match lexemes.get(*pos) {
            Some(Lexeme::Open) => *pos += 1,
            _ => return Err(Error::Tree(format!("expected '(' at item {pos}"))),
        }
        let label = match lexemes.get(*pos) {
            Some(Lexeme::Atom(a)) => {
                *pos += 1;
                a.to_string()
            }
            _ => String::new(),
        };
        let id = self.nodes.len();
        self.nodes.push(Node {
            label,
            children: Vec::new(),
            parent,
            token: None,
        });
        loop {
            match lexemes.get(*pos) {
                Some(Lexeme::Close) => {
                    *pos += 1;
                    break;
                }
                Some(Lexeme::Open) => {
                    let child = self.parse_node(lexemes, pos, Some(id), next_token)?;
                    self.nodes[id].children.push(child);
                }
                Some(Lexeme::Atom(word)) => {
                    *pos += 1;
                    let leaf = self.nodes.len();
                    self.nodes.push(Node {
                        label: unescape(word).to_string(),
                        children: Vec::new(),
                        parent: Some(id),
                        token: Some(*next_token),
                    });
                    *next_token += 1;
                    self.nodes[id].children.push(leaf);
                }
                None => return Err(Error::Tree("unbalanced parentheses".into())),
            }
        }
        if self.nodes[id].children.is_empty() {
            return Err(Error::Tree(format!(
                "node {:?} has no children",
                self.nodes[id].label
            )));
        }
        Ok(id)
    }

    /// Parse and check that the yield reproduces the sentence tokens.
    pub fn parse_for(text: &str, sentence: &Sentence) -> Result<Self> {
        let tree = ConstituencyTree::from_bracketed(text)?;
        tree.check_yield(sentence)?;
        Ok(tree)
    }

    pub fn check_yield(&self, sentence: &Sentence) -> Result<()> {
        let leaves = self.yield_words();
        let tokens: Vec<&str> = sentence.tokens().iter().map(|t| t.surface.as_str()).collect();
        if leaves != tokens {
            return Err(Error::Tree(format!(
                "tree yield {:?} does not match tokens {:?}",
                leaves, tokens
            )));
        }
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id].label
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    /// Node ids in preorder (parents before children, left to right).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id].children.iter().rev());
        }
        out
    }

    pub fn yield_words(&self) -> Vec<&str> {
        self.preorder()
            .into_iter()
            .filter(|&id| self.nodes[id].is_terminal())
            .map(|id| self.nodes[id].label.as_str())
            .collect()
    }

    /// A tag node: exactly one child, which is a terminal.
    pub fn is_preterminal(&self, id: NodeId) -> bool {
        let n = &self.nodes[id];
        n.children.len() == 1 && self.nodes[n.children[0]].is_terminal()
    }

    pub fn is_ancestor(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        while let Some(p) = self.nodes[node].parent {
            if p == ancestor {
                return true;
            }
            node = p;
        }
        false
    }

    /// Token range `[first, last)` dominated by `id`.
    pub fn token_range(&self, id: NodeId) -> (usize, usize) {
        let mut first = usize::MAX;
        let mut last = 0;
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if let Some(t) = self.nodes[n].token {
                first = first.min(t);
                last = last.max(t + 1);
            }
            stack.extend(self.nodes[n].children.iter());
        }
        (first, last)
    }

    pub fn char_span(&self, id: NodeId, sentence: &Sentence) -> CharSpan {
        let (first, last) = self.token_range(id);
        let tokens = sentence.tokens();
        CharSpan::new(tokens[first].span.start, tokens[last - 1].span.end)
    }

    /// The preterminal tag above each token, in token order.
    pub fn tags(&self) -> Vec<&str> {
        self.preorder()
            .into_iter()
            .filter(|&id| self.nodes[id].is_terminal())
            .map(|id| {
                let parent = self.nodes[id].parent.expect("terminal has a parent");
                self.nodes[parent].label.as_str()
            })
            .collect()
    }

    fn write_node(&self, id: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = &self.nodes[id];
        if n.is_terminal() {
            return f.write_str(&n.label);
        }
        write!(f, "({}", n.label)?;
        for &c in &n.children {
            f.write_str(" ")?;
            self.write_node(c, f)?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for ConstituencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_node(self.root, f)
    }
}
