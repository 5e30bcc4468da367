//! Prompt template registry and placeholder expansion.
//!
//! Templates are plain-text files compiled into the binary and addressed by
//! `dataset/name` ids. Bodies use brace placeholders: `{QUESTION}`,
//! `{CHOICES}`, `{OPTION_A}` through `{OPTION_D}`, `{NUM_IMAGES}`, and
//! `{IMAGE_TOKENS}` (which expands to one `<image>` marker per attached
//! image). Any other braced token is literal text and passes through
//! rendering unchanged, so instructions like `"Answer: {answer_text}"`
//! survive intact.
//!
//! Binary probe templates carry the label pair whose first-token log
//! probabilities the scorer compares. For backends that reject inline image
//! markers, [`strip_image_placeholders`] removes `{Image_placeholder}` and
//! `<image>` tokens while keeping the surrounding instructions.

use thiserror::Error;

/// Rendering and lookup failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("unknown template id `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` requires a value for placeholder {{{placeholder}}}")]
    MissingValue {
        template: String,
        placeholder: String,
    },
}

/// Role a template plays in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    /// Final answer generation by the main model.
    Answer,
    /// Binary helpfulness probe answered by the surrogate.
    AuxProbe,
    /// Self-assessed usefulness score in `[0, 100]`.
    VerbalizedUq,
    /// Joint ranking of all retrieved images.
    Listwise,
    /// Scoring of a generated answer against a reference.
    Judge,
}

/// Positive/negative answer pair for a binary probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSpace {
    pub positive: &'static str,
    pub negative: &'static str,
}

pub const TRUE_FALSE: LabelSpace = LabelSpace {
    positive: "True",
    negative: "False",
};
pub const YES_NO: LabelSpace = LabelSpace {
    positive: "Yes",
    negative: "No",
};
pub const HELPFUL_NOT_HELPFUL: LabelSpace = LabelSpace {
    positive: "Helpful",
    negative: "Not helpful",
};

/// A registered prompt template.
#[derive(Debug, Clone, Copy)]
pub struct Template {
    id: &'static str,
    kind: TemplateKind,
    raw: &'static str,
    labels: Option<LabelSpace>,
}

/// Values available to placeholder expansion.
#[derive(Debug, Clone, Default)]
pub struct RenderContext {
    pub question: Option<String>,
    /// Four answer options filling `{OPTION_A}` through `{OPTION_D}`.
    pub options: Option<[String; 4]>,
    /// Choice texts formatted into a `(A) ...` block for `{CHOICES}`.
    pub choices: Option<Vec<String>>,
    /// Number of retrieved images named in listwise prompts.
    pub num_images: Option<usize>,
    /// Number of `<image>` markers `{IMAGE_TOKENS}` expands to.
    pub image_count: Option<usize>,
}

impl Template {
    pub fn id(&self) -> &'static str {
        self.id
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    /// Label pair for binary probes; `None` for other kinds.
    pub fn labels(&self) -> Option<LabelSpace> {
        self.labels
    }

    /// Template text with the file's single trailing newline removed.
    pub fn body(&self) -> &'static str {
        self.raw.strip_suffix('\n').unwrap_or(self.raw)
    }

    /// Expands every known placeholder from the context.
    ///
    /// A known placeholder without a context value is an error; unknown
    /// braced tokens are copied through verbatim.
    pub fn render(&self, ctx: &RenderContext) -> Result<String, TemplateError> {
        let body = self.body();
        let mut out = String::with_capacity(body.len() + 64);
        let mut rest = body;
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let tail = &rest[start..];
            match tail.find('}') {
                None => {
                    out.push_str(tail);
                    rest = "";
                    break;
                }
                Some(close) => {
                    let token = &tail[1..close];
                    match self.expand(token, ctx)? {
                        Some(value) => out.push_str(&value),
                        None => out.push_str(&tail[..=close]),
                    }
                    rest = &tail[close + 1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }

    fn expand(&self, token: &str, ctx: &RenderContext) -> Result<Option<String>, TemplateError> {
        let missing = |placeholder: &str| TemplateError::MissingValue {
            template: self.id.to_string(),
            placeholder: placeholder.to_string(),
        };
        let option = |index: usize| -> Result<String, TemplateError> {
            ctx.options
                .as_ref()
                .map(|opts| opts[index].clone())
                .ok_or_else(|| missing(token))
        };
        Ok(Some(match token {
            "QUESTION" => ctx.question.clone().ok_or_else(|| missing(token))?,
            "CHOICES" => {
                format_choice_block(ctx.choices.as_deref().ok_or_else(|| missing(token))?)
            }
            "NUM_IMAGES" => ctx.num_images.ok_or_else(|| missing(token))?.to_string(),
            "IMAGE_TOKENS" => {
                "<image>".repeat(ctx.image_count.ok_or_else(|| missing(token))?)
            }
            "OPTION_A" => option(0)?,
            "OPTION_B" => option(1)?,
            "OPTION_C" => option(2)?,
            "OPTION_D" => option(3)?,
            _ => return Ok(None),
        }))
    }
}

/// Formats choice texts as lettered lines: `(A) first`, `(B) second`, and so
/// on, joined by newlines.
///
/// Panics beyond 26 choices.
pub fn format_choice_block(choices: &[String]) -> String {
    assert!(choices.len() <= 26, "choice letters run A through Z");
    choices
        .iter()
        .enumerate()
        .map(|(i, choice)| format!("({}) {choice}", char::from(b'A' + i as u8)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Removes `{Image_placeholder}` and `<image>` tokens from a rendered
/// prompt for backends that reject inline image markers.
///
/// Lines that held only image tokens are dropped, remaining lines lose any
/// trailing whitespace the removal left behind, and blank-line runs created
/// by dropped lines collapse to a single blank line.
pub fn strip_image_placeholders(text: &str) -> String {
    let mut kept: Vec<String> = Vec::new();
    for line in text.split('\n') {
        let had_token = line.contains("{Image_placeholder}") || line.contains("<image>");
        if !had_token {
            kept.push(line.to_string());
            continue;
        }
        let cleaned = line
            .replace("{Image_placeholder}", "")
            .replace("<image>", "");
        if cleaned.trim().is_empty() {
            continue;
        }
        kept.push(cleaned.trim_end().to_string());
    }
    let mut out: Vec<&str> = Vec::new();
    let mut prev_blank = false;
    for line in kept.iter().map(String::as_str) {
        let blank = line.is_empty();
        if blank && prev_blank {
            continue;
        }
        out.push(line);
        prev_blank = blank;
    }
    out.join("\n")
}

static REGISTRY: &[Template] = &[
    Template {
        id: "mragbench/answer_norag",
        kind: TemplateKind::Answer,
        raw: include_str!("../templates/mragbench/answer_norag.txt"),
        labels: None,
    },
    Template {
        id: "mragbench/answer_rag",
        kind: TemplateKind::Answer,
        raw: include_str!("../templates/mragbench/answer_rag.txt"),
        labels: None,
    },
    Template {
        id: "mragbench/aux",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/mragbench/aux.txt"),
        labels: Some(TRUE_FALSE),
    },
    Template {
        id: "mragbench/aux_v1",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/mragbench/aux_v1.txt"),
        labels: Some(TRUE_FALSE),
    },
    Template {
        id: "mragbench/aux_v2",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/mragbench/aux_v2.txt"),
        labels: Some(TRUE_FALSE),
    },
    Template {
        id: "mragbench/aux_v3",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/mragbench/aux_v3.txt"),
        labels: Some(YES_NO),
    },
    Template {
        id: "mragbench/verbalized_uq",
        kind: TemplateKind::VerbalizedUq,
        raw: include_str!("../templates/mragbench/verbalized_uq.txt"),
        labels: None,
    },
    Template {
        id: "mragbench/listwise",
        kind: TemplateKind::Listwise,
        raw: include_str!("../templates/mragbench/listwise.txt"),
        labels: None,
    },
    Template {
        id: "visualrag/answer_zeroshot",
        kind: TemplateKind::Answer,
        raw: include_str!("../templates/visualrag/answer_zeroshot.txt"),
        labels: None,
    },
    Template {
        id: "visualrag/answer_single_image",
        kind: TemplateKind::Answer,
        raw: include_str!("../templates/visualrag/answer_single_image.txt"),
        labels: None,
    },
    Template {
        id: "visualrag/answer_multi_image",
        kind: TemplateKind::Answer,
        raw: include_str!("../templates/visualrag/answer_multi_image.txt"),
        labels: None,
    },
    Template {
        id: "visualrag/llm_judge",
        kind: TemplateKind::Judge,
        raw: include_str!("../templates/visualrag/llm_judge.txt"),
        labels: None,
    },
    Template {
        id: "visualrag/aux",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/visualrag/aux.txt"),
        labels: Some(TRUE_FALSE),
    },
    Template {
        id: "visualrag/aux_v1",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/visualrag/aux_v1.txt"),
        labels: Some(TRUE_FALSE),
    },
    Template {
        id: "visualrag/aux_v2",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/visualrag/aux_v2.txt"),
        labels: Some(TRUE_FALSE),
    },
    Template {
        id: "visualrag/aux_v3",
        kind: TemplateKind::AuxProbe,
        raw: include_str!("../templates/visualrag/aux_v3.txt"),
        labels: Some(HELPFUL_NOT_HELPFUL),
    },
    Template {
        id: "visualrag/verbalized_uq",
        kind: TemplateKind::VerbalizedUq,
        raw: include_str!("../templates/visualrag/verbalized_uq.txt"),
        labels: None,
    },
    Template {
        id: "visualrag/listwise",
        kind: TemplateKind::Listwise,
        raw: include_str!("../templates/visualrag/listwise.txt"),
        labels: None,
    },
];

/// All registered templates.
pub fn registry() -> &'static [Template] {
    REGISTRY
}

/// Looks up a template by id.
pub fn get(id: &str) -> Result<&'static Template, TemplateError> {
    REGISTRY
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
}
