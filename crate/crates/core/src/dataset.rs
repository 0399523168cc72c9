//! Numeric concept corpus and task prompts for the five-level task gradient.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::types::{Attribute, Labels, Level, Modality};

pub const MIN_VALUE: u32 = 1;
pub const MAX_VALUE: u32 = 200;

const BUNDLED_TEMPLATES: &str = include_str!("../templates/prompts.json");
pub const DEFAULT_TEMPLATE_SET: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub value: u32,
    pub modality: Modality,
    pub surface: String,
    pub labels: Labels,
}

impl ConceptRecord {
    pub fn new(value: u32, modality: Modality) -> Self {
        ConceptRecord {
            value,
            modality,
            surface: render_surface(value, modality),
            labels: Labels::for_value(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub concept: ConceptRecord,
    pub level: Level,
    pub prompt_text: String,
    pub expected_answer: String,
    pub distractor_answer: String,
}

pub fn render_surface(value: u32, modality: Modality) -> String {
    match modality {
        Modality::Arabic => value.to_string(),
        Modality::EnglishWord => english_words(value),
    }
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Lowercase US-style words with hyphenated tens and no "and":
/// 142 -> "one hundred forty-two". Valid for 0..=999.
pub fn english_words(value: u32) -> String {
    assert!(value < 1000, "english_words supports 0..=999, got {value}");
    let hundreds = value / 100;
    let rest = value % 100;
    let mut parts = Vec::with_capacity(2);
    if hundreds > 0 {
        parts.push(format!("{} hundred", ONES[hundreds as usize]));
    }
    if rest > 0 || hundreds == 0 {
        parts.push(if rest < 20 {
            ONES[rest as usize].to_string()
        } else if rest % 10 == 0 {
            TENS[(rest / 10) as usize].to_string()
        } else {
            format!("{}-{}", TENS[(rest / 10) as usize], ONES[(rest % 10) as usize])
        });
    }
    parts.join(" ")
}

/// One record per `(modality, value)`, ordered by modality then value.
pub fn generate_corpus(
    range_lo: u32,
    range_hi: u32,
    modalities: &BTreeSet<Modality>,
) -> Result<Vec<ConceptRecord>> {
    if modalities.is_empty() {
        return Err(Error::InvalidArgument("modality set is empty".into()));
    }
    if range_lo < MIN_VALUE || range_lo > range_hi || range_hi > MAX_VALUE {
        return Err(Error::InvalidArgument(format!(
            "range [{range_lo}, {range_hi}] must satisfy {MIN_VALUE} <= lo <= hi <= {MAX_VALUE}"
        )));
    }
    Ok(modalities
        .iter()
        .flat_map(|&m| (range_lo..=range_hi).map(move |v| ConceptRecord::new(v, m)))
        .collect())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelTemplate {
    pub prompt: String,
    #[serde(default)]
    pub attribute: Option<Attribute>,
    #[serde(default)]
    pub if_true: Option<String>,
    #[serde(default)]
    pub if_false: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFile {
    pub format_version: u32,
    pub template_sets: BTreeMap<String, BTreeMap<Level, LevelTemplate>>,
}

impl TemplateFile {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TEMPLATES).expect("bundled template file is valid")
    }

    pub fn parse(json: &str) -> Result<Self> {
        let file: TemplateFile = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("template file: {e}")))?;
        if file.format_version != 1 {
            return Err(Error::Version {
                found: file.format_version,
                supported: 1,
            });
        }
        for (name, set) in &file.template_sets {
            for (level, t) in set {
                t.validate()
                    .map_err(|msg| Error::Config(format!("template set {name:?} level {level}: {msg}")))?;
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn template(&self, set: &str, level: Level) -> Result<&LevelTemplate> {
        let templates = self
            .template_sets
            .get(set)
            .ok_or_else(|| Error::Config(format!("unknown template set {set:?}")))?;
        templates
            .get(&level)
            .ok_or_else(|| Error::Config(format!("template set {set:?} has no {level} template")))
    }
}

impl LevelTemplate {
    fn validate(&self) -> std::result::Result<(), String> {
        if !self.prompt.contains("{surface}") {
            return Err("prompt lacks a {surface} placeholder".into());
        }
        match (&self.attribute, &self.if_true, &self.if_false) {
            (None, None, None) => {
                if self.prompt.contains("{claim}") {
                    return Err("{claim} requires an attribute".into());
                }
                Ok(())
            }
            (Some(_), Some(_), Some(_)) => Ok(()),
            _ => Err("attribute, if_true and if_false must be given together".into()),
        }
    }
}

/// The L5 authority contradicts the truth when `value % 4` is 0 or 1 and
/// agrees with it when it is 2 or 3.
pub fn authority_contradicts(value: u32) -> bool {
    value % 4 < 2
}

fn identity_distractor(concept: &ConceptRecord) -> String {
    let neighbour = if concept.value < MAX_VALUE {
        concept.value + 1
    } else {
        concept.value - 1
    };
    render_surface(neighbour, concept.modality)
}

pub fn render_prompt(concept: &ConceptRecord, level: Level, template: &LevelTemplate) -> PromptRecord {
    let mut text = template.prompt.replace("{surface}", &concept.surface);
    let (expected, distractor) = match (&template.attribute, &template.if_true, &template.if_false) {
        (Some(attr), Some(yes), Some(no)) => {
            let truth = concept.labels.get(*attr);
            let (expected, distractor) = if truth { (yes, no) } else { (no, yes) };
            if text.contains("{claim}") {
                let claim = if authority_contradicts(concept.value) {
                    distractor
                } else {
                    expected
                };
                text = text.replace("{claim}", claim);
            }
            (expected.clone(), distractor.clone())
        }
        _ => (concept.surface.clone(), identity_distractor(concept)),
    };
    PromptRecord {
        concept: concept.clone(),
        level,
        prompt_text: text,
        expected_answer: expected,
        distractor_answer: distractor,
    }
}

pub fn render_prompts(
    corpus: &[ConceptRecord],
    level: Level,
    templates: &TemplateFile,
    template_set: &str,
) -> Result<Vec<PromptRecord>> {
    let template = templates.template(template_set, level)?;
    Ok(corpus.iter().map(|c| render_prompt(c, level, template)).collect())
}

/// One JSON object per line, UTF-8, `\n` terminated.
pub fn prompts_to_jsonl(prompts: &[PromptRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in prompts {
        serde_json::to_writer(&mut out, p).expect("prompt records serialize");
        out.push(b'\n');
    }
    out
}

pub fn write_prompts_jsonl(path: &Path, prompts: &[PromptRecord]) -> Result<()> {
    fsutil::write_atomic(path, &prompts_to_jsonl(prompts))
}

pub fn read_prompts_jsonl(path: &Path) -> Result<Vec<PromptRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}
