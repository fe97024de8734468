use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CLASSES: [&str; 6] = [
    "Rapping",
    "Cheering",
    "Gunshot, gunfire",
    "Radio",
    "Cat",
    "Helicopter",
];

const DEFAULT_ALIASES: &[(&str, &str)] = &[
    ("rap", "Rapping"),
    ("rapper", "Rapping"),
    ("cheer", "Cheering"),
    ("cheers", "Cheering"),
    ("gunshots", "Gunshot, gunfire"),
    ("gun", "Gunshot, gunfire"),
    ("guns", "Gunshot, gunfire"),
    ("shooting", "Gunshot, gunfire"),
    ("radios", "Radio"),
    ("cats", "Cat"),
    ("kitten", "Cat"),
    ("meow", "Cat"),
    ("helicopters", "Helicopter"),
    ("chopper", "Helicopter"),
];

/// Lowercase, replace punctuation with spaces and split on whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn normalize_name(name: &str) -> String {
    normalize_tokens(name).join(" ")
}

/// Ordered class list plus a token → class alias table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    classes: Vec<String>,
    aliases: BTreeMap<String, usize>,
}

impl Ontology {
    /// Builds an ontology whose alias table holds every name token that is
    /// unique to one class. Tokens shared between classes are left out so
    /// that every alias stays unambiguous.
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.is_empty() {
            return Err(Error::InvalidOntology("no classes".into()));
        }
        let mut seen = BTreeMap::new();
        for (i, c) in classes.iter().enumerate() {
            let key = normalize_name(c);
            if key.is_empty() {
                return Err(Error::InvalidOntology(format!("class name {c:?} has no tokens")));
            }
            if seen.insert(key, i).is_some() {
                return Err(Error::InvalidOntology(format!("duplicate class name {c:?}")));
            }
        }
        let mut owners: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in classes.iter().enumerate() {
            for tok in normalize_tokens(c) {
                let v = owners.entry(tok).or_default();
                if !v.contains(&i) {
                    v.push(i);
                }
            }
        }
        let aliases = owners
            .into_iter()
            .filter(|(_, v)| v.len() == 1)
            .map(|(k, v)| (k, v[0]))
            .collect();
        Ok(Ontology { classes, aliases })
    }

    /// Rebuild from an explicit class list and alias table, e.g. when
    /// loading a saved model.
    pub fn from_parts(classes: Vec<String>, aliases: BTreeMap<String, usize>) -> Result<Self> {
        let base = Ontology::new(classes)?;
        for (alias, &idx) in &aliases {
            if idx >= base.len() || normalize_tokens(alias) != [alias.clone()] {
                return Err(Error::InvalidOntology(format!("bad alias entry {alias:?} -> {idx}")));
            }
        }
        Ok(Ontology {
            classes: base.classes,
            aliases,
        })
    }

    /// The six-class default set with a few extra keyword aliases.
    pub fn default_six() -> Self {
        let mut o = Ontology::new(DEFAULT_CLASSES).expect("default classes are valid");
        for (alias, class) in DEFAULT_ALIASES {
            o = o.with_alias(alias, class).expect("default aliases are valid");
        }
        o
    }

    pub fn with_alias(mut self, alias: &str, class: &str) -> Result<Self> {
        let idx = self
            .index_of(class)
            .ok_or_else(|| Error::InvalidOntology(format!("alias target {class:?} is not a class")))?;
        let tokens = normalize_tokens(alias);
        if tokens.len() != 1 {
            return Err(Error::InvalidOntology(format!("alias {alias:?} must be a single token")));
        }
        match self.aliases.get(&tokens[0]) {
            Some(&other) if other != idx => Err(Error::InvalidOntology(format!(
                "alias {alias:?} already refers to {:?}",
                self.classes[other]
            ))),
            _ => {
                self.aliases.insert(tokens[0].clone(), idx);
                Ok(self)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.classes[idx]
    }

    pub fn aliases(&self) -> &BTreeMap<String, usize> {
        &self.aliases
    }

    /// Case- and punctuation-insensitive full-name lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let key = normalize_name(name);
        self.classes.iter().position(|c| normalize_name(c) == key)
    }

    /// A manifest label: a full class name, or a single alias token.
    pub fn resolve_label(&self, label: &str) -> Option<usize> {
        self.index_of(label).or_else(|| {
            let toks = normalize_tokens(label);
            match toks.as_slice() {
                [one] => self.aliases.get(one).copied(),
                _ => None,
            }
        })
    }

    pub fn alias(&self, token: &str) -> Option<usize> {
        self.aliases.get(token).copied()
    }
}

/// Multilabel membership vector, one bit per ontology class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet(Vec<bool>);

impl LabelSet {
    pub fn empty(n_classes: usize) -> Self {
        LabelSet(vec![false; n_classes])
    }

    pub fn from_indices(n_classes: usize, indices: &[usize]) -> Self {
        let mut s = Self::empty(n_classes);
        for &i in indices {
            s.0[i] = true;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}
