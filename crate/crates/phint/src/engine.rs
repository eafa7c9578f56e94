//! The hint loop: ask for a base answer, then re-ask with all previous
//! answers rendered as hints, stopping when two consecutive answers agree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{answers_equal, extract_answer, Answer, AnswerDomain};
use crate::consistency::{tally_votes, SamplingPlan, VoteRound};
use crate::gateway::{
    CompletionBackend, CompletionMode, CompletionRequest, GatewayError,
};
use crate::prompt::{
    render_base_prompt, render_merged_prompt, render_php_prompt, ExemplarBank, PromptError,
    PromptVariant,
};

/// The question under evaluation, reduced to what the loop needs.
#[derive(Debug, Clone)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub options: Option<String>,
    pub domain: AnswerDomain,
}

impl Question {
    pub fn numeric(id: impl Into<String>, text: impl Into<String>) -> Self {
        Question {
            id: id.into(),
            text: text.into(),
            options: None,
            domain: AnswerDomain::Numeric,
        }
    }

    pub fn multiple_choice(
        id: impl Into<String>,
        text: impl Into<String>,
        options: impl Into<String>,
    ) -> Self {
        Question {
            id: id.into(),
            text: text.into(),
            options: Some(options.into()),
            domain: AnswerDomain::MultipleChoice,
        }
    }
}

/// The base bank answers round one; the hinted bank answers every round after.
/// The two may come from different prompt families.
#[derive(Debug, Clone, Copy)]
pub struct BankPair<'a> {
    pub base: &'a ExemplarBank,
    pub php: &'a ExemplarBank,
}

/// What to do when a round's completion has no parseable answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseFailurePolicy {
    /// Retry the same prompt once; if still unparseable, record the round
    /// with a no-answer sentinel that never equals anything, forcing the
    /// loop onward.
    #[default]
    RetryThenSentinel,
    /// Stop the run immediately with a parse-failure transcript.
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunPolicy {
    /// Hard cap on rounds; guarantees termination under oscillation and
    /// keeps hint lists short enough for chat models that refuse long ones.
    pub max_rounds: usize,
    pub parse_failure: ParseFailurePolicy,
}

impl Default for RunPolicy {
    fn default() -> Self {
        RunPolicy {
            max_rounds: 10,
            parse_failure: ParseFailurePolicy::RetryThenSentinel,
        }
    }
}

/// How to package prompts into completion requests.
#[derive(Debug, Clone)]
pub struct RequestTemplate {
    pub model_id: String,
    pub mode: CompletionMode,
    /// Greedy decoding unless a sampling plan overrides it.
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl RequestTemplate {
    pub fn text(model_id: impl Into<String>) -> Self {
        RequestTemplate {
            model_id: model_id.into(),
            mode: CompletionMode::Text,
            temperature: 0.0,
            max_output_tokens: 1024,
            stop_sequences: vec!["\nQ:".into()],
        }
    }

    pub fn chat(model_id: impl Into<String>) -> Self {
        RequestTemplate {
            mode: CompletionMode::Chat,
            ..Self::text(model_id)
        }
    }

    /// Stop sequences matching a bank's question prefix, so the model cannot
    /// run on into a fabricated next exemplar.
    pub fn with_stops_for(mut self, kind: crate::prompt::BaseKind) -> Self {
        self.stop_sequences = match kind {
            crate::prompt::BaseKind::ComplexCot => {
                vec!["\nQuestion:".into(), "\nQ:".into()]
            }
            _ => vec!["\nQ:".into()],
        };
        self
    }

    pub fn build(&self, prompt: &str, temperature: f64, sample_count: u32) -> CompletionRequest {
        let req = match self.mode {
            CompletionMode::Text => CompletionRequest::text(&self.model_id, prompt),
            CompletionMode::Chat => CompletionRequest::chat(&self.model_id, prompt),
        };
        req.with_temperature(temperature)
            .with_samples(sample_count)
            .with_max_output_tokens(self.max_output_tokens)
            .with_stop_sequences(self.stop_sequences.clone())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCause {
    /// Two consecutive answers agreed.
    Consensus,
    /// The round cap was reached; the last parsed answer stands.
    RoundCap,
    /// Parsing failed under an aborting policy, or no round ever parsed.
    ParseFailure,
}

/// One consultation of the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    /// 1-based, contiguous.
    pub index: usize,
    pub prompt_text: String,
    /// All sampled completion texts for the round (one under greedy decoding).
    pub completions: Vec<String>,
    /// The round answer: the parsed answer, or the vote winner under
    /// self-consistency. `None` marks an unparseable round.
    pub answer: Option<Answer>,
    pub parse_error: Option<String>,
    /// Voting detail when the round sampled more than one path.
    pub vote: Option<VoteRound>,
}

/// The full record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub question_id: String,
    pub rounds: Vec<Round>,
    /// The answer the run settles on; `None` only if no round ever parsed.
    pub final_answer: Option<Answer>,
    /// Number of backend consultations: 1 for the base answer, +1 per
    /// subsequent answer. Consensus implies at least 2.
    pub interactions: usize,
    pub stop_cause: StopCause,
    /// Parsed answers of rounds 1..n-1 — the hints offered at round n —
    /// in generation order, duplicates preserved.
    pub hint_trace: Vec<Answer>,
}

impl Transcript {
    /// The same transcript with voting detail stripped; lets a k=1
    /// self-consistency run be compared against a greedy run directly.
    pub fn without_vote_detail(&self) -> Transcript {
        let mut t = self.clone();
        for round in &mut t.rounds {
            round.vote = None;
        }
        t
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("max_rounds must be at least 2, got {0}")]
    InvalidRoundCap(usize),
    #[error("prompt rendering failed: {0}")]
    Prompt(#[from] PromptError),
    #[error("backend failure at round {round}: {source}")]
    Backend {
        round: usize,
        #[source]
        source: GatewayError,
    },
}

/// Run the hint loop with greedy decoding: one sample per round, the
/// template's temperature (0 by default).
pub fn run_php(
    question: &Question,
    banks: &BankPair,
    variant: &PromptVariant,
    backend: &dyn CompletionBackend,
    template: &RequestTemplate,
    policy: &RunPolicy,
) -> Result<Transcript, EngineError> {
    run_loop(question, banks, variant, backend, template, policy, None)
}

pub(crate) fn run_loop(
    question: &Question,
    banks: &BankPair,
    variant: &PromptVariant,
    backend: &dyn CompletionBackend,
    template: &RequestTemplate,
    policy: &RunPolicy,
    plan: Option<&SamplingPlan>,
) -> Result<Transcript, EngineError> {
    if policy.max_rounds < 2 {
        return Err(EngineError::InvalidRoundCap(policy.max_rounds));
    }
    let sample_count = plan.map_or(1, |p| p.k);
    let temperature = plan.map_or(template.temperature, |p| p.temperature);

    let mut rounds: Vec<Round> = Vec::new();
    let mut hint_trace: Vec<Answer> = Vec::new();

    for index in 1..=policy.max_rounds {
        let prompt = render_round_prompt(question, banks, variant, &hint_trace)?;
        let request = template.build(&prompt, temperature, sample_count);

        let outcome = consult(backend, &request, question.domain, policy, plan)
            .map_err(|source| EngineError::Backend { round: index, source })?;

        let consensus = match (rounds.last().and_then(|r| r.answer.as_ref()), &outcome.answer) {
            (Some(prev), Some(cur)) => answers_equal(prev, cur),
            _ => false,
        };
        let aborted = outcome.answer.is_none()
            && policy.parse_failure == ParseFailurePolicy::Abort;

        rounds.push(Round {
            index,
            prompt_text: prompt,
            completions: outcome.completions,
            answer: outcome.answer.clone(),
            parse_error: outcome.parse_error,
            vote: outcome.vote,
        });

        if consensus {
            return Ok(finish(question, rounds, hint_trace, StopCause::Consensus));
        }
        if aborted {
            return Ok(finish(question, rounds, hint_trace, StopCause::ParseFailure));
        }
        if let Some(answer) = outcome.answer {
            hint_trace.push(answer);
        }
    }
    Ok(finish(question, rounds, hint_trace, StopCause::RoundCap))
}

fn finish(
    question: &Question,
    rounds: Vec<Round>,
    mut hint_trace: Vec<Answer>,
    stop_cause: StopCause,
) -> Transcript {
    // the last round's answer was never appended to the hint trace: the
    // trace records only what rounds 1..n-1 offered
    let final_answer = rounds.iter().rev().find_map(|r| r.answer.clone());
    let stop_cause = if final_answer.is_none() {
        StopCause::ParseFailure
    } else {
        stop_cause
    };
    hint_trace.shrink_to_fit();
    Transcript {
        question_id: question.id.clone(),
        interactions: rounds.len(),
        rounds,
        final_answer,
        stop_cause,
        hint_trace,
    }
}

fn render_round_prompt(
    question: &Question,
    banks: &BankPair,
    variant: &PromptVariant,
    hints: &[Answer],
) -> Result<String, PromptError> {
    if variant.merge {
        // the merged prompt serves every round; the first round simply has
        // no hints yet
        return render_merged_prompt(
            banks.base,
            banks.php,
            variant,
            &question.text,
            question.options.as_deref(),
            hints,
        );
    }
    if hints.is_empty() {
        render_base_prompt(banks.base, &question.text, question.options.as_deref())
    } else {
        render_php_prompt(
            banks.php,
            variant,
            &question.text,
            question.options.as_deref(),
            hints,
        )
    }
}

struct RoundOutcome {
    completions: Vec<String>,
    answer: Option<Answer>,
    parse_error: Option<String>,
    vote: Option<VoteRound>,
}

/// One backend consultation plus parsing, honoring the parse-failure policy
/// (a single same-prompt retry before giving up on the round).
fn consult(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest,
    domain: AnswerDomain,
    policy: &RunPolicy,
    plan: Option<&SamplingPlan>,
) -> Result<RoundOutcome, GatewayError> {
    let mut outcome = consult_once(backend, request, domain, plan)?;
    if outcome.answer.is_none() && policy.parse_failure == ParseFailurePolicy::RetryThenSentinel {
        outcome = consult_once(backend, request, domain, plan)?;
    }
    Ok(outcome)
}

fn consult_once(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest,
    domain: AnswerDomain,
    plan: Option<&SamplingPlan>,
) -> Result<RoundOutcome, GatewayError> {
    let completions = backend.complete(request)?;
    let texts: Vec<String> = completions.into_iter().map(|c| c.text).collect();
    if plan.is_some() {
        let parsed: Vec<Answer> = texts
            .iter()
            .filter_map(|t| extract_answer(t, domain).ok())
            .collect();
        let unparseable = (texts.len() - parsed.len()) as u32;
        match tally_votes(&parsed, unparseable) {
            Some(vote) => Ok(RoundOutcome {
                completions: texts,
                answer: Some(vote.winner.clone()),
                parse_error: None,
                vote: Some(vote),
            }),
            None => Ok(RoundOutcome {
                completions: texts,
                answer: None,
                parse_error: Some("all samples unparseable".into()),
                vote: None,
            }),
        }
    } else {
        match extract_answer(&texts[0], domain) {
            Ok(answer) => Ok(RoundOutcome {
                completions: texts,
                answer: Some(answer),
                parse_error: None,
                vote: None,
            }),
            Err(e) => Ok(RoundOutcome {
                completions: texts,
                answer: None,
                parse_error: Some(e.to_string()),
                vote: None,
            }),
        }
    }
}

/// Stopping/counting semantics as a pure function over an answer sequence:
/// the count is `1 + p` where `p` is the 1-based position of the first
/// adjacent equal pair, or `min(len, max_rounds)` with a round cap when no
/// pair lands within the cap.
pub fn interaction_count(sequence: &[Answer], max_rounds: usize) -> (usize, StopCause) {
    let n = sequence.len().min(max_rounds);
    for pair in 1..n {
        if answers_equal(&sequence[pair - 1], &sequence[pair]) {
            return (pair + 1, StopCause::Consensus);
        }
    }
    (n, StopCause::RoundCap)
}
