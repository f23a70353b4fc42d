//! Fixed word lists for synthetic worlds and the token vocabulary shared by
//! the instruction encoder, the pointer and the label encoder.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const CATEGORIES: &[&str] = &[
    "chair", "table", "sofa", "bed", "lamp", "plant", "cabinet", "mirror", "picture", "pillow",
    "towel", "sink", "toilet", "bathtub", "shelf", "desk", "stool", "vase", "clock", "television",
    "curtain", "rug", "basket", "bench", "dresser", "fireplace", "refrigerator", "oven",
    "microwave", "fan", "bottle", "bowl", "candle", "book", "speaker", "radiator", "piano",
    "statue", "sculpture", "drawer", "counter", "wardrobe", "ottoman", "armchair", "nightstand",
    "chandelier", "laptop", "guitar",
];

pub const ATTRIBUTES: &[&str] = &[
    "red", "blue", "white", "black", "wooden", "metal", "small", "large", "round", "square",
    "striped", "green",
];

pub const ROOMS: &[&str] = &[
    "kitchen", "bedroom", "bathroom", "lounge", "office", "hallway", "dining", "study", "laundry",
    "nursery",
];

pub const VERBS: &[&str] = &["find", "bring", "clean", "touch", "check", "fetch"];

const TEMPLATE_WORDS: &[&str] = &["go", "to", "the", "and", "near", "in", "room"];

pub const UNK: &str = "<unk>";
pub const NULL_LABEL: &str = "<null>";

/// Named instruction template families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSet {
    /// "go to the <room> and <verb> the <attr> <category> near the <landmark>"
    #[default]
    Standard,
    /// "<verb> the <attr> <category> in the <room>"
    Short,
}

pub struct InstructionParts<'a> {
    pub room: &'a str,
    pub verb: &'a str,
    pub attribute: &'a str,
    pub category: &'a str,
    pub landmark: Option<&'a str>,
}

impl TemplateSet {
    pub fn render(&self, p: &InstructionParts<'_>) -> Vec<String> {
        let text = match (self, p.landmark) {
            (TemplateSet::Standard, Some(l)) => format!(
                "go to the {} and {} the {} {} near the {}",
                p.room, p.verb, p.attribute, p.category, l
            ),
            (TemplateSet::Standard, None) => format!(
                "go to the {} and {} the {} {}",
                p.room, p.verb, p.attribute, p.category
            ),
            (TemplateSet::Short, _) => format!(
                "{} the {} {} in the {}",
                p.verb, p.attribute, p.category, p.room
            ),
        };
        tokenize(&text)
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Token-to-index map. Index 0 is `<unk>`, index 1 is `<null>`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn standard() -> Self {
        let mut words: Vec<String> = vec![UNK.into(), NULL_LABEL.into()];
        for list in [TEMPLATE_WORDS, VERBS, ROOMS, ATTRIBUTES, CATEGORIES] {
            for w in list {
                if !words.iter().any(|x| x == w) {
                    words.push((*w).to_string());
                }
            }
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn null_id(&self) -> usize {
        1
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }
}
