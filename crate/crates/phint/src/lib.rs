//! Progressive-hint prompting: feed an LLM its own previous answers back as
//! hints until two consecutive answers agree.
//!
//! The crate covers the full loop and the harness around it:
//!
//! ```text
//! dataset  ──►  eval runner ──► engine (hint loop) ──► backend gateway
//!                   │               │                     live / scripted /
//!                   │               ├── prompt kit        record-replay
//!                   │               │   (exemplar banks)
//!                   │               └── consistency sampler (k-path voting)
//!                   └── reports (accuracy, interaction counts, path cost)
//! ```
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod answer;
pub mod banks;
pub mod consistency;
pub mod engine;
pub mod gateway;
pub mod prompt;

pub use answer::{
    answers_equal, extract_answer, render_hint_answer, render_hint_list, Answer, AnswerDomain,
    AnswerValue, ExtractError, ANSWER_MARKER,
};
pub use banks::{builtin_bank, builtin_bank_ids, default_bank_ids, load_bank_file};
pub use prompt::{
    render_answer_preamble, render_base_prompt, render_merged_prompt, render_php_prompt,
    render_php_question, BaseKind, Exemplar, ExemplarBank, HintStyle, PromptError, PromptVariant,
};

pub mod cli;
