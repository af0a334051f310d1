//! Compositional prompt ensemble: templates x state phrases, averaged per class into the
//! two-column text feature.

use std::path::Path;

use crate::encoders::TextEncoder;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PLACEHOLDER: &str = "{}";
/// Category used when the object class is unknown.
pub const GENERIC_CATEGORY: &str = "object";

const DEFAULT_BANK: &str = include_str!("../data/prompt_bank.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassKind {
    Normal,
    Abnormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptBank {
    pub templates: Vec<String>,
    pub normal_states: Vec<String>,
    pub abnormal_states: Vec<String>,
    pub category: String,
}

impl PromptBank {
    /// The bundled bank with the given category.
    pub fn default_for(category: &str) -> Self {
        Self::parse(DEFAULT_BANK, category, Path::new("<builtin>")).expect("builtin prompt bank is valid")
    }

    /// Parses the sectioned text format. `#` starts a comment line; blank lines are skipped.
    pub fn parse(text: &str, category: &str, origin: &Path) -> Result<Self> {
        let bad = |detail: String| Error::Format { kind: "prompt bank", path: origin.to_path_buf(), detail };
        let mut sections: [Vec<String>; 3] = Default::default();
        let mut current: Option<usize> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[templates]" => current = Some(0),
                "[normal]" => current = Some(1),
                "[abnormal]" => current = Some(2),
                _ if line.starts_with('[') => return Err(bad(format!("line {}: unknown section {line}", lineno + 1))),
                _ => match current {
                    Some(i) => sections[i].push(line.to_string()),
                    None => return Err(bad(format!("line {}: entry outside any section", lineno + 1))),
                },
            }
        }
        let [templates, normal_states, abnormal_states] = sections;
        let bank = Self { templates, normal_states, abnormal_states, category: category.to_string() };
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: &Path, category: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, category, path)
    }

    /// Switches to the class-agnostic placeholder category.
    pub fn class_unknown(mut self) -> Self {
        self.category = GENERIC_CATEGORY.to_string();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (field, list) in [
            ("templates", &self.templates),
            ("normal", &self.normal_states),
            ("abnormal", &self.abnormal_states),
        ] {
            if list.is_empty() {
                return Err(Error::invalid("prompt_bank", format!("section [{field}] is empty")));
            }
        }
        for t in &self.templates {
            if t.matches(PLACEHOLDER).count() != 1 {
                return Err(Error::invalid("prompt_bank", format!("template {t:?} needs exactly one {PLACEHOLDER}")));
            }
        }
        if self.category.trim().is_empty() {
            return Err(Error::invalid("prompt_bank", "category is empty"));
        }
        Ok(())
    }

    pub fn states(&self, kind: ClassKind) -> &[String] {
        match kind {
            ClassKind::Normal => &self.normal_states,
            ClassKind::Abnormal => &self.abnormal_states,
        }
    }
}

fn state_phrase(state: &str, category: &str) -> String {
    if state.contains(PLACEHOLDER) {
        state.replace(PLACEHOLDER, category)
    } else {
        format!("{state} {category}")
    }
}

/// Every template filled with every state phrase, template-major.
pub fn build_sentences(bank: &PromptBank, kind: ClassKind) -> Result<Vec<String>> {
    bank.validate()?;
    let phrases: Vec<String> = bank.states(kind).iter().map(|s| state_phrase(s, &bank.category)).collect();
    Ok(bank
        .templates
        .iter()
        .flat_map(|t| phrases.iter().map(move |p| t.replacen(PLACEHOLDER, p, 1)))
        .collect())
}

/// `L` with column 0 the normal mean embedding and column 1 the abnormal one.
#[derive(Clone, Debug, PartialEq)]
pub struct TextFeature {
    l: Tensor,
}

impl TextFeature {
    pub fn new(l: Tensor) -> Result<Self> {
        match *l.shape() {
            [_, 2] => Ok(Self { l }),
            ref s => Err(Error::shape("text_feature", format!("expected c_t x 2, got {s:?}"))),
        }
    }

    pub fn from_columns(normal: &[f64], abnormal: &[f64]) -> Result<Self> {
        if normal.len() != abnormal.len() {
            return Err(Error::shape("text_feature", "column lengths differ"));
        }
        let data = normal.iter().zip(abnormal).flat_map(|(&a, &b)| [a, b]).collect();
        Self::new(Tensor::new(&[normal.len(), 2], data)?)
    }

    pub fn dim(&self) -> usize {
        self.l.shape()[0]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.l
    }

    pub fn column(&self, kind: ClassKind) -> Vec<f64> {
        let c = kind as usize;
        self.l.data().chunks(2).map(|row| row[c]).collect()
    }

    /// `L^T`, one row per class.
    pub fn transposed(&self) -> Tensor {
        let mut data = self.column(ClassKind::Normal);
        data.extend(self.column(ClassKind::Abnormal));
        Tensor::new(&[2, self.dim()], data).expect("transpose of a valid feature")
    }
}

/// Mean embedding of a sentence list. Embeddings are summed in sorted-sentence order so the
/// result does not depend on how the list was arranged.
fn mean_embedding(sentences: &[String], encoder: &dyn TextEncoder) -> Result<Vec<f64>> {
    let mut sorted: Vec<&String> = sentences.iter().collect();
    sorted.sort();
    let mut acc = vec![0.0; encoder.text_dim()];
    for s in &sorted {
        let e = encoder.encode_text(s)?;
        if e.len() != acc.len() {
            return Err(Error::shape("build_text_feature", format!("embedding of length {} for dim {}", e.len(), acc.len())));
        }
        acc.iter_mut().zip(e.data()).for_each(|(a, &v)| *a += v);
    }
    let n = sorted.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

pub fn build_text_feature(bank: &PromptBank, encoder: &dyn TextEncoder) -> Result<TextFeature> {
    let normal = mean_embedding(&build_sentences(bank, ClassKind::Normal)?, encoder)?;
    let abnormal = mean_embedding(&build_sentences(bank, ClassKind::Abnormal)?, encoder)?;
    TextFeature::from_columns(&normal, &abnormal)
}
