//! Canonical answers: parsing them out of model completions, comparing them,
//! and rendering them back into hint text.
//!
//! Everything downstream reduces to this module: the stopping rule compares
//! consecutive answers, grading compares a predicted answer against gold, and
//! hints are prior answers rendered into the hint phrase.

use std::fmt;
use std::str::FromStr;

use bigdecimal::BigDecimal;
use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

/// The phrase every shipped exemplar ends with; extraction keys off its
/// last occurrence so later restatements supersede earlier ones.
pub const ANSWER_MARKER: &str = "The answer is";

/// Which kind of answers a benchmark produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerDomain {
    Numeric,
    /// Letters A-E only.
    MultipleChoice,
}

/// A canonicalized model answer: either an exact decimal value or a
/// multiple-choice letter. The unit of hints, voting, stopping, and grading.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    value: AnswerValue,
    /// The matched answer substring, verbatim.
    raw_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnswerValue {
    /// Exact decimal, arbitrary precision, unitless, kept normalized.
    Numeric(BigDecimal),
    /// Uppercase letter A-E.
    Choice(char),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    /// No "The answer is" marker anywhere in the completion.
    #[error("no answer marker in completion")]
    NoAnswerMarker,
    /// A marker was found but nothing after it parses in the domain.
    #[error("marker found but no {0} token after it: {1:?}")]
    MalformedAnswer(&'static str, String),
    #[error("choice letter must be A-E, got {0:?}")]
    InvalidChoiceLetter(char),
}

impl Answer {
    /// Numeric answer from an exact decimal; the value is normalized and the
    /// raw text defaults to the canonical rendering.
    pub fn numeric(value: BigDecimal) -> Self {
        let value = value.normalized();
        let raw_text = decimal_string(&value);
        Answer {
            value: AnswerValue::Numeric(value),
            raw_text,
        }
    }

    pub fn numeric_with_raw(value: BigDecimal, raw_text: impl Into<String>) -> Self {
        Answer {
            value: AnswerValue::Numeric(value.normalized()),
            raw_text: raw_text.into(),
        }
    }

    /// Choice answer; the letter is uppercased and must be A-E.
    pub fn choice(letter: char) -> Result<Self, ExtractError> {
        let upper = letter.to_ascii_uppercase();
        if !('A'..='E').contains(&upper) {
            return Err(ExtractError::InvalidChoiceLetter(letter));
        }
        Ok(Answer {
            value: AnswerValue::Choice(upper),
            raw_text: upper.to_string(),
        })
    }

    pub fn choice_with_raw(letter: char, raw_text: impl Into<String>) -> Result<Self, ExtractError> {
        let mut a = Self::choice(letter)?;
        a.raw_text = raw_text.into();
        Ok(a)
    }

    /// Convenience constructor from a literal like `"17.2"`, `"-2"` or `"(b)"`.
    pub fn parse(token: &str, domain: AnswerDomain) -> Result<Self, ExtractError> {
        match domain {
            AnswerDomain::Numeric => lex_numeric(token),
            AnswerDomain::MultipleChoice => lex_choice(token),
        }
    }

    pub fn value(&self) -> &AnswerValue {
        &self.value
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn domain(&self) -> AnswerDomain {
        match self.value {
            AnswerValue::Numeric(_) => AnswerDomain::Numeric,
            AnswerValue::Choice(_) => AnswerDomain::MultipleChoice,
        }
    }

    pub fn numeric_value(&self) -> Option<&BigDecimal> {
        match &self.value {
            AnswerValue::Numeric(d) => Some(d),
            AnswerValue::Choice(_) => None,
        }
    }

    pub fn choice_letter(&self) -> Option<char> {
        match self.value {
            AnswerValue::Choice(c) => Some(c),
            AnswerValue::Numeric(_) => None,
        }
    }

    /// Canonical value string: `"6"` / `"17.2"` for numeric, `"B"` for choice.
    /// Numeric values round-trip through this rendering.
    pub fn canonical(&self) -> String {
        match &self.value {
            AnswerValue::Numeric(d) => decimal_string(d),
            AnswerValue::Choice(c) => c.to_string(),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Canonical decimal rendering: integers without decimal point or exponent,
/// non-integers in shortest plain-decimal form preserving the exact value.
fn decimal_string(d: &BigDecimal) -> String {
    d.normalized().to_plain_string()
}

static TOLERANCE: Lazy<BigDecimal> = Lazy::new(|| BigDecimal::from_str("0.000001").unwrap());

/// Answer equality: the stopping rule and accuracy both reduce to this.
///
/// Choice vs choice is letter equality. Numeric vs numeric is exact when both
/// values are integers and within relative tolerance 1e-6 otherwise, so
/// integer benchmarks stay exact while float formatting noise cannot defeat
/// stopping or grading. Cross-kind comparisons are false.
pub fn answers_equal(a: &Answer, b: &Answer) -> bool {
    match (&a.value, &b.value) {
        (AnswerValue::Choice(x), AnswerValue::Choice(y)) => x == y,
        (AnswerValue::Numeric(x), AnswerValue::Numeric(y)) => {
            if x == y {
                return true;
            }
            if x.is_integer() && y.is_integer() {
                return false;
            }
            let diff = (x - y).abs();
            let scale = x.abs().max(y.abs());
            diff <= scale * &*TOLERANCE
        }
        _ => false,
    }
}

/// Parse the answer out of a completion, keying off the *last* occurrence of
/// the marker phrase. Numeric lexing strips currency symbols, thousands
/// commas, percent signs, and trailing units or words; choice lexing accepts
/// `(b)`, `b`, and `(B)` forms, trailing period ignored.
pub fn extract_answer(completion_text: &str, domain: AnswerDomain) -> Result<Answer, ExtractError> {
    static MARKER_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)the answer is").unwrap());
    let m = MARKER_RE
        .find_iter(completion_text)
        .last()
        .ok_or(ExtractError::NoAnswerMarker)?;
    let tail = &completion_text[m.end()..];
    match domain {
        AnswerDomain::Numeric => lex_numeric(tail),
        AnswerDomain::MultipleChoice => lex_choice(tail),
    }
}

static NUMBER_RE: Lazy<Regex> = Lazy::new(|| {
    // currency-prefixed, thousands-grouped, optionally signed decimal,
    // optionally followed by a percent sign
    Regex::new(r"[-+]?\$?[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?%?").unwrap()
});

fn lex_numeric(text: &str) -> Result<Answer, ExtractError> {
    let m = NUMBER_RE
        .find(text)
        .ok_or_else(|| ExtractError::MalformedAnswer("numeric", snippet(text)))?;
    let raw = m.as_str();
    let cleaned: String = raw
        .chars()
        .filter(|c| !matches!(c, '$' | ',' | '%' | '+'))
        .collect();
    let value = BigDecimal::from_str(&cleaned)
        .map_err(|_| ExtractError::MalformedAnswer("numeric", snippet(text)))?;
    Ok(Answer::numeric_with_raw(value, raw))
}

fn lex_choice(text: &str) -> Result<Answer, ExtractError> {
    // first try the leading token, so "(b), rs . 17000" picks "(b)"
    static TOKEN_RE: Lazy<Regex> =
        Lazy::new(|| Regex::new(r"^\s*\(?([A-Ea-e])\)?[.,:;!]?(?:\s|$)").unwrap());
    if let Some(c) = TOKEN_RE.captures(text) {
        let letter = c.get(1).unwrap().as_str().chars().next().unwrap();
        return Answer::choice_with_raw(letter, c.get(0).unwrap().as_str().trim());
    }
    // otherwise the first parenthesized letter anywhere after the marker
    static PAREN_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\(([A-Ea-e])\)").unwrap());
    if let Some(c) = PAREN_RE.captures(text) {
        let letter = c.get(1).unwrap().as_str().chars().next().unwrap();
        return Answer::choice_with_raw(letter, c.get(0).unwrap().as_str());
    }
    Err(ExtractError::MalformedAnswer("choice", snippet(text)))
}

fn snippet(text: &str) -> String {
    let t = text.trim();
    let mut end = t.len().min(40);
    while !t.is_char_boundary(end) {
        end += 1;
    }
    t[..end].to_string()
}

/// Render one answer as a hint token: numeric in canonical decimal form,
/// choice as `(x)` with a lowercase letter.
pub fn render_hint_answer(a: &Answer) -> String {
    match &a.value {
        AnswerValue::Numeric(d) => decimal_string(d),
        AnswerValue::Choice(c) => format!("({})", c.to_ascii_lowercase()),
    }
}

/// Render an ordered hint list, comma-space joined, duplicates and order
/// preserved.
pub fn render_hint_list(hints: &[Answer]) -> String {
    hints
        .iter()
        .map(render_hint_answer)
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(s: &str) -> Answer {
        Answer::numeric(BigDecimal::from_str(s).unwrap())
    }

    #[test]
    fn extracts_terminal_numeric_answer() {
        let a = extract_answer(
            "So he gave Denny 20 - 12 = 8 lollipops. The answer is 8.",
            AnswerDomain::Numeric,
        )
        .unwrap();
        assert_eq!(a.canonical(), "8");
        assert_eq!(a.raw_text(), "8");
    }

    #[test]
    fn extracts_choice_with_trailing_suffix() {
        let a = extract_answer("The answer is (b), rs . 17000", AnswerDomain::MultipleChoice).unwrap();
        assert_eq!(a.choice_letter(), Some('B'));
    }

    #[test]
    fn extracts_decimal_from_multiline_completion() {
        let a = extract_answer(
            "These 17.2 oranges are good.\nThe answer is 17.2.",
            AnswerDomain::Numeric,
        )
        .unwrap();
        assert_eq!(a.canonical(), "17.2");
    }

    #[test]
    fn missing_marker_is_an_error() {
        assert_eq!(
            extract_answer("I cannot answer.", AnswerDomain::Numeric),
            Err(ExtractError::NoAnswerMarker)
        );
    }

    #[test]
    fn marker_without_numeric_token_is_malformed() {
        let err = extract_answer("The answer is unknown.", AnswerDomain::Numeric).unwrap_err();
        assert!(matches!(err, ExtractError::MalformedAnswer("numeric", _)));
    }

    #[test]
    fn last_marker_wins() {
        let text = "The answer is 999. Wait, let me redo this. The answer is 42.";
        let a = extract_answer(text, AnswerDomain::Numeric).unwrap();
        assert_eq!(a.canonical(), "42");
    }

    #[test]
    fn strips_currency_commas_percent_and_units() {
        for (text, want) in [
            ("The answer is $66.", "66"),
            ("The answer is 52%", "52"),
            ("The answer is 1,392.", "1392"),
            ("The answer is $1", "1"),
            ("The answer is 145 seconds.", "145"),
            ("The answer is -2.", "-2"),
            ("The answer is 0.5.", "0.5"),
        ] {
            let a = extract_answer(text, AnswerDomain::Numeric).unwrap();
            assert_eq!(a.canonical(), want, "{text}");
        }
    }

    #[test]
    fn choice_forms_are_accepted_and_uppercased() {
        for text in ["The answer is (b).", "The answer is b", "The answer is (B)."] {
            let a = extract_answer(text, AnswerDomain::MultipleChoice).unwrap();
            assert_eq!(a.choice_letter(), Some('B'), "{text}");
        }
    }

    #[test]
    fn choice_not_fooled_by_words() {
        let err = extract_answer("The answer is correct.", AnswerDomain::MultipleChoice).unwrap_err();
        assert!(matches!(err, ExtractError::MalformedAnswer("choice", _)));
        // but a stray parenthesized letter later in the sentence still counts
        let a = extract_answer(
            "The answer is option (c) above.",
            AnswerDomain::MultipleChoice,
        )
        .unwrap();
        assert_eq!(a.choice_letter(), Some('C'));
    }

    #[test]
    fn equality_exact_for_integers() {
        assert!(answers_equal(&num("8"), &num("8")));
        assert!(!answers_equal(&num("-2"), &num("2")));
        assert!(!answers_equal(&num("1000000"), &num("1000001")));
    }

    #[test]
    fn equality_tolerant_for_non_integers() {
        assert!(answers_equal(&num("17.2"), &num("17.2000000001")));
        assert!(!answers_equal(&num("17.2"), &num("17.21")));
    }

    #[test]
    fn cross_kind_is_never_equal() {
        assert!(!answers_equal(&num("2"), &Answer::choice('B').unwrap()));
    }

    #[test]
    fn hint_rendering_matches_prompt_convention() {
        assert_eq!(render_hint_answer(&num("6")), "6");
        assert_eq!(render_hint_answer(&num("17.2")), "17.2");
        assert_eq!(render_hint_answer(&Answer::choice('B').unwrap()), "(b)");
        let hints = [num("-2"), num("145"), num("-2"), num("2")];
        assert_eq!(render_hint_list(&hints), "-2, 145, -2, 2");
        assert_eq!(render_hint_list(&[num("10"), num("8")]), "10, 8");
    }

    #[test]
    fn canonical_integer_rendering_has_no_point_or_exponent() {
        assert_eq!(num("6.00").canonical(), "6");
        assert_eq!(num("1e4").canonical(), "10000");
        assert_eq!(num("-0").canonical(), "0");
        assert_eq!(num("0.50").canonical(), "0.5");
    }

    #[test]
    fn choice_letter_bounds() {
        assert!(Answer::choice('e').is_ok());
        assert!(Answer::choice('f').is_err());
    }
}
