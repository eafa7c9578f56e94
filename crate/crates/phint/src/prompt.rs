//! Few-shot exemplar banks and every prompt family rendered from them.
//!
//! Exemplars are stored as structured records and rendered through templates,
//! so the preamble-sentence and hint-style ablations are toggles instead of a
//! dozen near-duplicate text assets. Golden-file tests guard byte fidelity of
//! the shipped banks.

use serde::Deserialize;
use thiserror::Error;

use crate::answer::{answers_equal, render_hint_list, Answer, AnswerDomain};

/// The three base prompt families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    /// Bare question/answer pairs, no reasoning.
    Standard,
    /// One-paragraph reasoning chains.
    Cot,
    /// Multi-line "Let's think step by step" chains.
    ComplexCot,
}

impl BaseKind {
    fn question_prefix(self) -> &'static str {
        match self {
            BaseKind::Standard | BaseKind::Cot => "Q: ",
            BaseKind::ComplexCot => "Question: ",
        }
    }

    fn options_label(self) -> &'static str {
        match self {
            BaseKind::Standard | BaseKind::Cot => "Answer Choices: ",
            BaseKind::ComplexCot => "Options: ",
        }
    }

    /// Complex chains put each step on its own line; the others run inline.
    fn multiline_answer(self) -> bool {
        matches!(self, BaseKind::ComplexCot)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BaseKind::Standard => "standard",
            BaseKind::Cot => "cot",
            BaseKind::ComplexCot => "complex-cot",
        }
    }
}

impl std::str::FromStr for BaseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(BaseKind::Standard),
            "cot" => Ok(BaseKind::Cot),
            "complex-cot" | "complexcot" => Ok(BaseKind::ComplexCot),
            other => Err(format!("unknown prompt kind {other:?}")),
        }
    }
}

/// Which hint demonstrations to keep when rendering a hinted bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HintStyle {
    /// Keep every exemplar.
    #[default]
    Both,
    /// Keep exemplars whose hints contain their own final answer.
    CorrectOnly,
    /// Keep the rest.
    IncorrectOnly,
}

/// A fully resolved prompt configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptVariant {
    pub base_kind: BaseKind,
    /// Hinted re-ask prompts enabled.
    pub php: bool,
    /// One prompt containing both base and hinted exemplars, used for every
    /// round.
    pub merge: bool,
    /// First preamble sentence: "We know the Answer Hints: ...".
    pub include_p1: bool,
    /// Second preamble sentence: "With the Answer Hints: ..., we will answer
    /// the question.".
    pub include_p2: bool,
    pub hint_style: HintStyle,
}

impl PromptVariant {
    pub fn base(kind: BaseKind) -> Self {
        PromptVariant {
            base_kind: kind,
            php: false,
            merge: false,
            include_p1: true,
            include_p2: true,
            hint_style: HintStyle::Both,
        }
    }

    pub fn php(kind: BaseKind) -> Self {
        PromptVariant {
            php: true,
            ..Self::base(kind)
        }
    }

    pub fn merged(kind: BaseKind) -> Self {
        PromptVariant {
            merge: true,
            ..Self::php(kind)
        }
    }

    pub fn with_preamble(mut self, p1: bool, p2: bool) -> Self {
        self.include_p1 = p1;
        self.include_p2 = p2;
        self
    }

    pub fn with_hint_style(mut self, style: HintStyle) -> Self {
        self.hint_style = style;
        self
    }
}

/// One few-shot demonstration. Base-only exemplars carry no hints; hinted
/// exemplars demonstrate answering under their own handcrafted hint list.
#[derive(Debug, Clone)]
pub struct Exemplar {
    pub question: String,
    /// Choice block for multiple-choice questions, without its label.
    pub options: Option<String>,
    /// Reasoning lines; empty for Standard, a single paragraph for CoT.
    pub reasoning_chain: Vec<String>,
    pub final_answer: Answer,
    /// Text after the rendered answer token, e.g. `"."` or `", rs . 630"`.
    pub answer_suffix: Option<String>,
    pub hint_answers: Vec<Answer>,
}

impl Exemplar {
    /// Hints contain the exemplar's own final answer.
    pub fn hints_contain_answer(&self) -> bool {
        self.hint_answers
            .iter()
            .any(|h| answers_equal(h, &self.final_answer))
    }

    fn answer_sentence(&self) -> String {
        let token = match self.final_answer.value() {
            crate::answer::AnswerValue::Numeric(_) => self.final_answer.canonical(),
            crate::answer::AnswerValue::Choice(c) => format!("({})", c.to_ascii_lowercase()),
        };
        format!(
            "The answer is {token}{}",
            self.answer_suffix.as_deref().unwrap_or("")
        )
    }
}

/// An ordered, immutable set of exemplars; order is preserved in rendering.
#[derive(Debug, Clone)]
pub struct ExemplarBank {
    pub id: String,
    pub kind: BaseKind,
    pub domain: AnswerDomain,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("hint list must not be empty")]
    EmptyHints,
    #[error("bank {0:?} is empty")]
    EmptyBank(String),
    #[error("hint-style filter removed every exemplar from bank {0:?}")]
    EmptyBankAfterFilter(String),
    #[error("exemplar in bank {bank:?} has no hints but hinted rendering was requested")]
    MissingExemplarHints { bank: String },
    #[error("bank file {path}: {message}")]
    BankFile { path: String, message: String },
}

/// `question + " (Hint: The answer is near to A_1, ..., A_p)."`
pub fn render_php_question(question: &str, hints: &[Answer]) -> Result<String, PromptError> {
    if hints.is_empty() {
        return Err(PromptError::EmptyHints);
    }
    Ok(format!(
        "{question} (Hint: The answer is near to {}).",
        render_hint_list(hints)
    ))
}

/// The answer-side preamble, built from the two hint-rehearsal sentences.
/// Empty when both toggles are off.
pub fn render_answer_preamble(
    hints: &[Answer],
    include_p1: bool,
    include_p2: bool,
) -> Result<String, PromptError> {
    if hints.is_empty() {
        return Err(PromptError::EmptyHints);
    }
    let list = render_hint_list(hints);
    let mut parts = Vec::new();
    if include_p1 {
        parts.push(format!("We know the Answer Hints: {list}."));
    }
    if include_p2 {
        parts.push(format!(
            "With the Answer Hints: {list}, we will answer the question."
        ));
    }
    Ok(parts.join(" "))
}

fn render_question_side(
    kind: BaseKind,
    question: &str,
    options: Option<&str>,
    hints: &[Answer],
) -> Result<String, PromptError> {
    let q = if hints.is_empty() {
        question.to_string()
    } else {
        render_php_question(question, hints)?
    };
    let mut s = format!("{}{}", kind.question_prefix(), q);
    if let Some(opts) = options {
        s.push('\n');
        s.push_str(kind.options_label());
        s.push_str(opts);
    }
    Ok(s)
}

/// One exemplar block: question side, then the answer side with an optional
/// preamble. `hints` here are the exemplar's own demonstrations.
fn render_exemplar_block(
    kind: BaseKind,
    ex: &Exemplar,
    hints: &[Answer],
    include_p1: bool,
    include_p2: bool,
) -> Result<String, PromptError> {
    let mut block = render_question_side(kind, &ex.question, ex.options.as_deref(), hints)?;
    block.push_str("\nA:");

    let preamble = if hints.is_empty() {
        String::new()
    } else {
        render_answer_preamble(hints, include_p1, include_p2)?
    };

    let mut answer_side: Vec<String> = Vec::new();
    if !preamble.is_empty() {
        answer_side.push(preamble);
    }
    answer_side.extend(ex.reasoning_chain.iter().cloned());
    answer_side.push(ex.answer_sentence());

    let joined = if kind.multiline_answer() {
        answer_side.join("\n")
    } else {
        answer_side.join(" ")
    };
    block.push(' ');
    block.push_str(&joined);
    // multi-line answers start on the "A: " line, matching the reference
    // layout; nothing further to adjust
    Ok(block)
}

/// The open-ended block for the question under evaluation; empty `hints`
/// renders the unhinted form.
fn render_target_block(
    kind: BaseKind,
    question: &str,
    options: Option<&str>,
    hints: &[Answer],
) -> Result<String, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    let mut s = render_question_side(kind, question, options, hints)?;
    s.push_str("\nA:");
    Ok(s)
}

fn base_blocks(bank: &ExemplarBank) -> Result<Vec<String>, PromptError> {
    bank.exemplars
        .iter()
        .map(|ex| render_exemplar_block(bank.kind, ex, &[], true, true))
        .collect()
}

fn php_blocks(bank: &ExemplarBank, variant: &PromptVariant) -> Result<Vec<String>, PromptError> {
    let kept: Vec<&Exemplar> = bank
        .exemplars
        .iter()
        .filter(|ex| match variant.hint_style {
            HintStyle::Both => true,
            HintStyle::CorrectOnly => ex.hints_contain_answer(),
            HintStyle::IncorrectOnly => !ex.hints_contain_answer(),
        })
        .collect();
    if kept.is_empty() {
        return Err(PromptError::EmptyBankAfterFilter(bank.id.clone()));
    }
    kept.into_iter()
        .map(|ex| {
            if ex.hint_answers.is_empty() {
                return Err(PromptError::MissingExemplarHints {
                    bank: bank.id.clone(),
                });
            }
            render_exemplar_block(
                bank.kind,
                ex,
                &ex.hint_answers,
                variant.include_p1,
                variant.include_p2,
            )
        })
        .collect()
}

/// All exemplar blocks of a bank rendered for the given variant, joined by
/// single blank lines. This is exactly what the golden files pin down.
pub fn render_bank_reference(
    bank: &ExemplarBank,
    variant: &PromptVariant,
) -> Result<String, PromptError> {
    let blocks = if variant.php {
        php_blocks(bank, variant)?
    } else {
        base_blocks(bank)?
    };
    Ok(blocks.join("\n\n"))
}

/// First-round prompt: the bank's exemplars followed by the target question
/// and an open `A:`.
pub fn render_base_prompt(
    bank: &ExemplarBank,
    question: &str,
    options: Option<&str>,
) -> Result<String, PromptError> {
    if bank.exemplars.is_empty() {
        return Err(PromptError::EmptyBank(bank.id.clone()));
    }
    let mut blocks = base_blocks(bank)?;
    blocks.push(render_target_block(bank.kind, question, options, &[])?);
    Ok(blocks.join("\n\n"))
}

/// Hinted re-ask prompt: each exemplar rendered under its own hint list
/// (filtered by hint style), then the target question under the runtime
/// hints.
pub fn render_php_prompt(
    bank: &ExemplarBank,
    variant: &PromptVariant,
    question: &str,
    options: Option<&str>,
    hints: &[Answer],
) -> Result<String, PromptError> {
    if hints.is_empty() {
        return Err(PromptError::EmptyHints);
    }
    let mut blocks = php_blocks(bank, variant)?;
    blocks.push(render_target_block(bank.kind, question, options, hints)?);
    Ok(blocks.join("\n\n"))
}

/// Merge prompt: base exemplars, then hinted exemplars, then the target in
/// one prompt. Used for every round; an empty `hints` list renders the target
/// unhinted (the first round has no hints yet).
pub fn render_merged_prompt(
    base_bank: &ExemplarBank,
    php_bank: &ExemplarBank,
    variant: &PromptVariant,
    question: &str,
    options: Option<&str>,
    hints: &[Answer],
) -> Result<String, PromptError> {
    let mut blocks = base_blocks(base_bank)?;
    blocks.extend(php_blocks(php_bank, variant)?);
    blocks.push(render_target_block(base_bank.kind, question, options, hints)?);
    Ok(blocks.join("\n\n"))
}

// ---------------------------------------------------------------------------
// Bank files
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct BankFile {
    id: String,
    kind: String,
    domain: String,
    #[serde(default)]
    exemplars: Vec<ExemplarRecord>,
}

#[derive(Deserialize)]
struct ExemplarRecord {
    question: String,
    #[serde(default)]
    options: Option<String>,
    #[serde(default)]
    chain: Vec<String>,
    answer: String,
    #[serde(default)]
    answer_suffix: Option<String>,
    #[serde(default)]
    hints: Vec<String>,
}

/// Parse a bank from its structured text form. Every answer and hint token
/// must parse in the bank's domain.
pub fn parse_bank(source: &str, origin: &str) -> Result<ExemplarBank, PromptError> {
    let file: BankFile = toml::from_str(source).map_err(|e| PromptError::BankFile {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let kind: BaseKind = file.kind.parse().map_err(|e: String| PromptError::BankFile {
        path: origin.to_string(),
        message: e,
    })?;
    let domain = match file.domain.as_str() {
        "numeric" => AnswerDomain::Numeric,
        "multiple-choice" => AnswerDomain::MultipleChoice,
        other => {
            return Err(PromptError::BankFile {
                path: origin.to_string(),
                message: format!("unknown domain {other:?}"),
            })
        }
    };
    let mut exemplars = Vec::with_capacity(file.exemplars.len());
    for (i, rec) in file.exemplars.into_iter().enumerate() {
        let parse_tok = |tok: &str| {
            Answer::parse(tok, domain).map_err(|e| PromptError::BankFile {
                path: origin.to_string(),
                message: format!("exemplar {i}: bad answer token {tok:?}: {e}"),
            })
        };
        let final_answer = parse_tok(&rec.answer)?;
        let hint_answers = rec
            .hints
            .iter()
            .map(|h| parse_tok(h))
            .collect::<Result<Vec<_>, _>>()?;
        exemplars.push(Exemplar {
            question: rec.question,
            options: rec.options,
            reasoning_chain: rec.chain,
            final_answer,
            answer_suffix: rec.answer_suffix,
            hint_answers,
        });
    }
    Ok(ExemplarBank {
        id: file.id,
        kind,
        domain,
        exemplars,
    })
}
