//! Self-consistency on top of the hint loop: sample k reasoning paths per
//! round at nonzero temperature, majority-vote the round answer, and feed the
//! voted answers forward as hints.

use thiserror::Error;

use crate::answer::{answers_equal, Answer};
use crate::engine::{
    run_loop, BankPair, EngineError, Question, RequestTemplate, RunPolicy, Transcript,
};
use crate::gateway::CompletionBackend;
use crate::prompt::PromptVariant;

/// How many paths to sample per round, and at what temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    pub k: u32,
    pub temperature: f64,
}

impl SamplingPlan {
    /// The reference configuration: temperature 0.7.
    pub fn with_paths(k: u32) -> Result<Self, SamplingError> {
        Self::new(k, 0.7)
    }

    pub fn new(k: u32, temperature: f64) -> Result<Self, SamplingError> {
        if k < 1 {
            return Err(SamplingError::InvalidPathCount(k));
        }
        if !(temperature >= 0.0) {
            return Err(SamplingError::InvalidTemperature(temperature));
        }
        Ok(SamplingPlan { k, temperature })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("sample path count must be >= 1, got {0}")]
    InvalidPathCount(u32),
    #[error("temperature must be >= 0, got {0}")]
    InvalidTemperature(f64),
    #[error("every sample in the round was unparseable")]
    AllSamplesUnparseable,
}

/// One round's voting detail.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteRound {
    /// Parsed samples in backend return order.
    pub samples: Vec<Answer>,
    /// Samples that failed to parse; they still count against the sampled
    /// path budget but not the tally.
    pub unparseable: u32,
    /// Distinct answers (first-occurrence representative) with their counts,
    /// in first-occurrence order.
    pub tally: Vec<(Answer, u32)>,
    pub winner: Answer,
}

/// Group parsed samples under answer equality and pick the winner: maximal
/// count, ties broken by earliest first occurrence in sample order. Returns
/// `None` when nothing parsed.
pub fn tally_votes(samples: &[Answer], unparseable: u32) -> Option<VoteRound> {
    if samples.is_empty() {
        return None;
    }
    let mut tally: Vec<(Answer, u32)> = Vec::new();
    for sample in samples {
        match tally.iter_mut().find(|(rep, _)| answers_equal(rep, sample)) {
            Some((_, count)) => *count += 1,
            None => tally.push((sample.clone(), 1)),
        }
    }
    // first-occurrence order makes max_by_key's "last max wins" rule pick the
    // earliest by taking a strict maximum scan
    let mut winner = tally[0].0.clone();
    let mut best = tally[0].1;
    for (rep, count) in &tally[1..] {
        if *count > best {
            best = *count;
            winner = rep.clone();
        }
    }
    Some(VoteRound {
        samples: samples.to_vec(),
        unparseable,
        tally,
        winner,
    })
}

/// The modal answer under answer equality, earliest-first tie-break.
pub fn majority_vote(samples: &[Answer]) -> Result<Answer, SamplingError> {
    tally_votes(samples, 0)
        .map(|v| v.winner)
        .ok_or(SamplingError::AllSamplesUnparseable)
}

/// The hint loop with per-round voting: identical control flow to the greedy
/// run, with each round's answer replaced by the round's vote winner.
/// Stopping compares consecutive winners; the hint trace holds winners.
pub fn run_php_sc(
    question: &Question,
    banks: &BankPair,
    variant: &PromptVariant,
    backend: &dyn CompletionBackend,
    template: &RequestTemplate,
    plan: &SamplingPlan,
    policy: &RunPolicy,
) -> Result<Transcript, EngineError> {
    run_loop(question, banks, variant, backend, template, policy, Some(plan))
}

/// Sampled paths consumed per question: `k × mean interactions`.
pub fn sampling_cost(plan: &SamplingPlan, mean_interactions: f64) -> f64 {
    f64::from(plan.k) * mean_interactions
}

#[cfg(test)]
mod tests {
    use super::*;
    use bigdecimal::BigDecimal;
    use std::str::FromStr;

    fn num(s: &str) -> Answer {
        Answer::numeric(BigDecimal::from_str(s).unwrap())
    }

    #[test]
    fn strict_majority_wins() {
        let w = majority_vote(&[num("2"), num("2"), num("3")]).unwrap();
        assert!(answers_equal(&w, &num("2")));
    }

    #[test]
    fn tie_breaks_to_earliest_first_occurrence() {
        let w = majority_vote(&[num("1"), num("2")]).unwrap();
        assert!(answers_equal(&w, &num("1")));
        let w = majority_vote(&[num("3"), num("1"), num("1"), num("3")]).unwrap();
        assert!(answers_equal(&w, &num("3")));
    }

    #[test]
    fn empty_samples_are_an_error() {
        assert_eq!(majority_vote(&[]), Err(SamplingError::AllSamplesUnparseable));
    }

    #[test]
    fn winner_count_is_maximal() {
        let vote = tally_votes(&[num("5"), num("5"), num("9"), num("9"), num("9")], 0).unwrap();
        let winner_count = vote
            .tally
            .iter()
            .find(|(rep, _)| answers_equal(rep, &vote.winner))
            .unwrap()
            .1;
        for (_, count) in &vote.tally {
            assert!(winner_count >= *count);
        }
        assert!(answers_equal(&vote.winner, &num("9")));
    }

    #[test]
    fn near_equal_samples_group_together() {
        let vote = tally_votes(
            &[num("17.2"), num("17.2000000001"), num("3")],
            0,
        )
        .unwrap();
        assert_eq!(vote.tally.len(), 2);
        assert_eq!(vote.tally[0].1, 2);
        assert!(answers_equal(&vote.winner, &num("17.2")));
    }

    #[test]
    fn plan_invariants() {
        assert!(SamplingPlan::new(0, 0.7).is_err());
        assert!(SamplingPlan::new(1, -0.1).is_err());
        assert!(SamplingPlan::new(1, f64::NAN).is_err());
        let plan = SamplingPlan::with_paths(10).unwrap();
        assert_eq!(plan.temperature, 0.7);
    }

    #[test]
    fn cost_arithmetic() {
        let plan = SamplingPlan::with_paths(10).unwrap();
        assert_eq!(sampling_cost(&plan, 2.1531), 21.531);
        let plan1 = SamplingPlan::new(1, 0.0).unwrap();
        assert_eq!(sampling_cost(&plan1, 2.0), 2.0);
        let plan40 = SamplingPlan::with_paths(40).unwrap();
        assert_eq!(sampling_cost(&plan40, 1.0), 40.0);
    }
}
