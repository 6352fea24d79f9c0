//! Prompt pools and prediction selection.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::annotation::TripletLabel;
use crate::error::CoreError;

/// The class a prompt stands for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptLabel {
    Instrument(String),
    Triplet(TripletLabel),
    Verb(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptEntry {
    pub prompt: String,
    pub label: PromptLabel,
}

/// Ordered prompts, each bound to a distinct label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptPool {
    entries: Vec<PromptEntry>,
}

impl PromptPool {
    /// Builds a pool from entries, rejecting duplicate labels or prompts.
    pub fn from_entries(entries: Vec<PromptEntry>) -> Result<Self, CoreError> {
        let mut labels = BTreeSet::new();
        let mut prompts = BTreeSet::new();
        for e in &entries {
            if !labels.insert(&e.label) {
                return Err(CoreError::DuplicateLabel(format!("{:?}", e.label)));
            }
            if !prompts.insert(e.prompt.as_str()) {
                return Err(CoreError::DuplicateLabel(e.prompt.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[PromptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prompts(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.prompt.as_str())
    }

    pub fn position_of_prompt(&self, prompt: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.prompt == prompt)
    }
}

pub fn instrument_prompt(class: &str) -> String {
    format!("an image showing a {class} in use")
}

pub fn triplet_prompt(t: &TripletLabel) -> String {
    format!("I use a {} to {} the {}", t.instrument, t.verb, t.target)
}

pub fn verb_prompt(verb: &str) -> String {
    format!("I am performing {verb}")
}

fn check_vocabulary<S: AsRef<str>>(which: &'static str, vocab: &[S]) -> Result<(), CoreError> {
    if vocab.is_empty() {
        return Err(CoreError::EmptyVocabulary(which));
    }
    let mut seen = BTreeSet::new();
    for v in vocab {
        if !seen.insert(v.as_ref()) {
            return Err(CoreError::DuplicateLabel(v.as_ref().to_string()));
        }
    }
    Ok(())
}

/// One instrument prompt per class, in input order.
pub fn build_instrument_pool<S: AsRef<str>>(classes: &[S]) -> Result<PromptPool, CoreError> {
    check_vocabulary("instrument", classes)?;
    let entries = classes
        .iter()
        .map(|c| PromptEntry {
            prompt: instrument_prompt(c.as_ref()),
            label: PromptLabel::Instrument(c.as_ref().to_string()),
        })
        .collect();
    PromptPool::from_entries(entries)
}

/// Every `(instrument, verb, target)` combination, ordered lexicographically
/// by position in the given vocabularies.
pub fn build_triplet_pool<S: AsRef<str>>(
    instruments: &[S],
    verbs: &[S],
    targets: &[S],
) -> Result<PromptPool, CoreError> {
    check_vocabulary("instrument", instruments)?;
    check_vocabulary("verb", verbs)?;
    check_vocabulary("target", targets)?;
    let mut entries = Vec::with_capacity(instruments.len() * verbs.len() * targets.len());
    for s in instruments {
        for v in verbs {
            for o in targets {
                let label = TripletLabel::new(s.as_ref(), v.as_ref(), o.as_ref());
                entries.push(PromptEntry {
                    prompt: triplet_prompt(&label),
                    label: PromptLabel::Triplet(label),
                });
            }
        }
    }
    PromptPool::from_entries(entries)
}

/// Verb prompt pool used by the second evaluation pass.
pub fn build_verb_pool<S: AsRef<str>>(verbs: &[S]) -> Result<PromptPool, CoreError> {
    check_vocabulary("verb", verbs)?;
    let entries = verbs
        .iter()
        .map(|v| PromptEntry {
            prompt: verb_prompt(v.as_ref()),
            label: PromptLabel::Verb(v.as_ref().to_string()),
        })
        .collect();
    PromptPool::from_entries(entries)
}

/// Index of the highest score; ties go to the lowest index.
pub fn select_prediction(scores: &[f64], pool_size: usize) -> Result<usize, CoreError> {
    if scores.len() != pool_size || pool_size == 0 {
        return Err(CoreError::LengthMismatch {
            expected: pool_size,
            found: scores.len(),
        });
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Second-pass prompt for a frame whose instrument and verb were correct.
pub fn verb_reprompt<S: AsRef<str>>(
    predicted: &TripletLabel,
    verbs: &[S],
) -> Result<String, CoreError> {
    if !verbs.iter().any(|v| v.as_ref() == predicted.verb) {
        return Err(CoreError::UnknownVerb(predicted.verb.clone()));
    }
    Ok(verb_prompt(&predicted.verb))
}
