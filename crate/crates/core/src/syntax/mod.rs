//! Constituency trees and the declarative-to-interrogative rewrite.

mod tree;

pub use tree::{base_label, is_punctuation_label, ConstituencyTree, Node, NodeId};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NerOutput, Sentence};

/// NP nodes whose subtrees contain no other NP, left to right.
pub fn find_minimal_np_nodes(tree: &ConstituencyTree) -> Vec<NodeId> {
    let order = tree.preorder();
    let nps: Vec<NodeId> = order
        .iter()
        .copied()
        .filter(|&n| !tree.node(n).is_terminal() && base_label(tree.label(n)) == "NP")
        .collect();
    nps.iter()
        .copied()
        .filter(|&np| !nps.iter().any(|&other| other != np && tree.is_ancestor(np, other)))
        .collect()
}

/// The top-most, left-most `S` whose first two non-punctuation children
/// are `NP` then `VP`.
pub fn match_s_np_vp(tree: &ConstituencyTree) -> Option<(NodeId, NodeId, NodeId)> {
    tree.preorder().into_iter().find_map(|s| {
        let node = tree.node(s);
        if node.is_terminal() || base_label(&node.label) != "S" {
            return None;
        }
        let mut relevant = node
            .children
            .iter()
            .copied()
            .filter(|&c| !is_punctuation_label(tree.label(c)) && !tree.node(c).is_terminal());
        let np = relevant.next()?;
        let vp = relevant.next()?;
        (base_label(tree.label(np)) == "NP" && base_label(tree.label(vp)) == "VP")
            .then_some((s, np, vp))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RewriteRule {
    /// A form of "be" used as the main verb moves to the front.
    BeMainVerb,
    /// A lexical verb gets a fronted do-auxiliary and goes to base form.
    NormalVerbAuxInsert,
    /// An auxiliary or modal moves to the front.
    AuxFronting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub mutant_text: String,
    pub rule_applied: RewriteRule,
    pub moved_or_inserted: String,
}

const BE_FORMS: [&str; 5] = ["am", "is", "are", "was", "were"];
const HAVE_FORMS: [&str; 3] = ["have", "has", "had"];
const DO_FORMS: [&str; 3] = ["do", "does", "did"];

enum Element {
    Token(usize, Option<String>),
    Inserted(String),
}

/// Turn a declarative sentence ending in "." into a yes/no question.
///
/// Fails with [`Error::NoRewrite`] when the sentence does not fit one of
/// the three verb patterns; callers skip the sentence for this scheme.
pub fn declarative_to_interrogative(
    sentence: &Sentence,
    tree: &ConstituencyTree,
    ner_output: &NerOutput,
) -> Result<RewriteResult> {
    let tokens = sentence.tokens();
    let last = tokens.len() - 1;
    if tokens[last].surface != "." {
        return Err(Error::NoRewrite("sentence does not end with '.'".into()));
    }
    tree.check_yield(sentence)?;
    let (s_node, _np, vp) =
        match_s_np_vp(tree).ok_or_else(|| Error::NoRewrite("no S -> NP VP".into()))?;

    let vp_children = tree.children(vp);
    let (verb_pos, verb_node) = vp_children
        .iter()
        .copied()
        .enumerate()
        .find(|&(_, c)| {
            tree.is_preterminal(c) && {
                let tag = tree.label(c);
                tag.starts_with("VB") || tag == "MD"
            }
        })
        .ok_or_else(|| Error::NoRewrite("VP has no verb child".into()))?;
    let verb_idx = tree.token_range(verb_node).0;
    let tag = tree.label(verb_node).to_string();
    let verb = tokens[verb_idx].surface.as_str();
    let verb_lower = verb.to_lowercase();
    let has_vp_complement = vp_children[verb_pos + 1..]
        .iter()
        .any(|&c| base_label(tree.label(c)) == "VP");

    if ner_output.covers(tokens[verb_idx].span) {
        return Err(Error::NoRewrite("verb lies inside a predicted entity".into()));
    }

    let rule = if tag == "MD" {
        RewriteRule::AuxFronting
    } else if BE_FORMS.contains(&verb_lower.as_str()) {
        if has_vp_complement {
            RewriteRule::AuxFronting
        } else {
            RewriteRule::BeMainVerb
        }
    } else if has_vp_complement
        && (HAVE_FORMS.contains(&verb_lower.as_str()) || DO_FORMS.contains(&verb_lower.as_str()))
    {
        RewriteRule::AuxFronting
    } else {
        RewriteRule::NormalVerbAuxInsert
    };

    let s_start = tree.token_range(s_node).0;
    let mut elements: Vec<Element> = Vec::with_capacity(tokens.len() + 1);
    for i in 0..s_start {
        elements.push(Element::Token(i, None));
    }
    match rule {
        RewriteRule::BeMainVerb | RewriteRule::AuxFronting => {
            elements.push(Element::Token(verb_idx, None));
            for i in s_start..last {
                if i != verb_idx {
                    elements.push(Element::Token(i, None));
                }
            }
        }
        RewriteRule::NormalVerbAuxInsert => {
            let aux = match tag.as_str() {
                "VBZ" => "does",
                "VBD" => "did",
                "VBP" | "VB" => "do",
                other => {
                    return Err(Error::NoRewrite(format!(
                        "no auxiliary for verb {verb:?} tagged {other}"
                    )))
                }
            };
            elements.push(Element::Inserted(aux.to_string()));
            for i in s_start..last {
                if i == verb_idx {
                    elements.push(Element::Token(i, Some(base_form(&verb_lower, &tag))));
                } else {
                    elements.push(Element::Token(i, None));
                }
            }
        }
    }
    elements.push(Element::Token(last, Some("?".into())));

    // Case: the new first word is capitalized; the displaced first word is
    // lowercased unless it belongs to a predicted entity.
    let first_is_original_first = matches!(elements[0], Element::Token(0, _));
    let mut words: Vec<String> = elements
        .iter()
        .map(|e| match e {
            Element::Token(_, Some(text)) | Element::Inserted(text) => text.clone(),
            Element::Token(i, None) => tokens[*i].surface.clone(),
        })
        .collect();
    if !first_is_original_first {
        if let Some(pos) = elements
            .iter()
            .position(|e| matches!(e, Element::Token(0, _)))
        {
            if !ner_output.covers(tokens[0].span) {
                words[pos] = decapitalize(&words[pos]);
            }
        }
    }
    words[0] = capitalize(&words[0]);
    let moved_or_inserted = words[s_start].clone();

    let mut text = String::new();
    for (pos, element) in elements.iter().enumerate() {
        if pos > 0 {
            let gap = match element {
                Element::Inserted(_) => " ",
                Element::Token(i, _) => {
                    let original_gap = if *i == 0 { "" } else { sentence.gap_before(*i) };
                    let follows_original = matches!(
                        elements[pos - 1],
                        Element::Token(prev, _) if prev + 1 == *i
                    );
                    if original_gap.is_empty() && !follows_original && !tokens[*i].is_punctuation() {
                        " "
                    } else {
                        original_gap
                    }
                }
            };
            text.push_str(gap);
        }
        text.push_str(&words[pos]);
    }

    Ok(RewriteResult {
        mutant_text: text,
        rule_applied: rule,
        moved_or_inserted,
    })
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn decapitalize(word: &str) -> String {
    let is_acronym = word.chars().filter(|c| c.is_alphabetic()).count() > 1
        && word.chars().all(|c| !c.is_lowercase());
    if word == "I" || is_acronym {
        return word.to_string();
    }
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

const IRREGULAR: &[(&str, &str)] = &[
    ("has", "have"),
    ("had", "have"),
    ("does", "do"),
    ("did", "do"),
    ("went", "go"),
    ("goes", "go"),
    ("said", "say"),
    ("made", "make"),
    ("took", "take"),
    ("came", "come"),
    ("saw", "see"),
    ("knew", "know"),
    ("got", "get"),
    ("gave", "give"),
    ("found", "find"),
    ("thought", "think"),
    ("told", "tell"),
    ("became", "become"),
    ("left", "leave"),
    ("felt", "feel"),
    ("brought", "bring"),
    ("began", "begin"),
    ("kept", "keep"),
    ("held", "hold"),
    ("wrote", "write"),
    ("stood", "stand"),
    ("heard", "hear"),
    ("meant", "mean"),
    ("met", "meet"),
    ("ran", "run"),
    ("paid", "pay"),
    ("sat", "sit"),
    ("spoke", "speak"),
    ("led", "lead"),
    ("grew", "grow"),
    ("lost", "lose"),
    ("fell", "fall"),
    ("sent", "send"),
    ("built", "build"),
    ("won", "win"),
    ("ate", "eat"),
    ("drove", "drive"),
    ("bought", "buy"),
    ("caught", "catch"),
    ("taught", "teach"),
    ("sold", "sell"),
    ("rose", "rise"),
    ("chose", "choose"),
    ("drew", "draw"),
    ("flew", "fly"),
    ("threw", "throw"),
    ("cried", "cry"),
];

/// Base form of an inflected verb: irregular table first, then suffix
/// stripping by tag.
pub fn base_form(verb: &str, tag: &str) -> String {
    if let Some((_, base)) = IRREGULAR.iter().find(|(form, _)| *form == verb) {
        return base.to_string();
    }
    match tag {
        "VBZ" => strip_third_person(verb),
        "VBD" | "VBN" => strip_past(verb),
        _ => verb.to_string(),
    }
}

fn strip_third_person(verb: &str) -> String {
    if let Some(stem) = verb.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["ches", "shes", "sses", "xes", "zes", "oes"] {
        if verb.ends_with(suffix) {
            return verb[..verb.len() - 2].to_string();
        }
    }
    verb.strip_suffix('s').unwrap_or(verb).to_string()
}

/// Stem endings after which a stripped "-ed" took a silent "e" with it
/// ("praised" -> "praise"), with the common counter-examples for each.
const E_FINAL_STEMS: &[(&str, &[&str])] = &[
    ("v", &[]),
    ("c", &[]),
    ("z", &[]),
    ("dg", &[]),
    ("ag", &[]),
    ("rg", &[]),
    ("ang", &[]),
    ("eng", &[]),
    ("at", &["eat", "oat"]),
    ("ot", &["oot"]),
    ("ut", &["out"]),
    ("vit", &[]),
    ("nit", &[]),
    ("cit", &[]),
    ("id", &["aid", "oid"]),
    ("ud", &["aud"]),
    ("ad", &["ead", "oad"]),
    ("as", &["ias"]),
    ("is", &[]),
    ("os", &[]),
    ("us", &["cus"]),
    ("rs", &[]),
    ("ns", &[]),
    ("in", &["ain", "oin", "uin"]),
    ("ar", &["ear", "oar"]),
    ("ir", &["air"]),
    ("or", &["oor", "itor"]),
    ("ur", &["our"]),
    ("am", &["eam", "oam"]),
    ("im", &["aim"]),
    ("om", &["oom"]),
    ("ak", &["eak"]),
    ("ik", &[]),
    ("ok", &["ook"]),
    ("ap", &["eap", "oap"]),
    ("op", &["lop", "oop"]),
    ("bl", &[]),
    ("cl", &[]),
    ("dl", &[]),
    ("fl", &[]),
    ("gl", &[]),
    ("kl", &[]),
    ("pl", &[]),
    ("tl", &[]),
    ("zl", &[]),
];

fn strip_past(verb: &str) -> String {
    if let Some(stem) = verb.strip_suffix("ied") {
        return format!("{stem}y");
    }
    let Some(stem) = verb.strip_suffix("ed") else {
        return verb.to_string();
    };
    let bytes = stem.as_bytes();
    let n = bytes.len();
    if n >= 3 && bytes[n - 1] == bytes[n - 2] && !b"aeioulsz".contains(&bytes[n - 1]) {
        return stem[..n - 1].to_string();
    }
    let restores_e = E_FINAL_STEMS.iter().any(|(ending, except)| {
        stem.ends_with(ending) && !except.iter().any(|x| stem.ends_with(x))
    });
    if restores_e {
        return format!("{stem}e");
    }
    stem.to_string()
}
