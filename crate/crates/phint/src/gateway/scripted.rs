//! Deterministic scripted backend: completions are served strictly FIFO from
//! a preloaded queue, and every request is recorded for assertions.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use super::{Completion, CompletionBackend, CompletionRequest, GatewayError};

pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(completions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            queue: Mutex::new(completions.into_iter().map(Into::into).collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Load a fixture: a JSON array of completion strings, or one JSON string
    /// per line.
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path)?;
        let trimmed = raw.trim_start();
        let texts: Vec<String> = if trimmed.starts_with('[') {
            serde_json::from_str(&raw)?
        } else {
            raw.lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()?
        };
        Ok(Self::new(texts))
    }

    pub fn push(&self, completion: impl Into<String>) {
        self.queue.lock().unwrap().push_back(completion.into());
    }

    /// Completions still queued; prefix-stability tests key off this.
    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    pub fn recorded_requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
        request.validate()?;
        self.requests.lock().unwrap().push(request.clone());
        let mut queue = self.queue.lock().unwrap();
        let n = request.sample_count as usize;
        if queue.len() < n {
            return Err(GatewayError::ScriptExhausted {
                needed: (n - queue.len()) as u32,
            });
        }
        Ok(queue.drain(..n).map(Completion::of).collect())
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serves_fifo() {
        let backend = ScriptedBackend::new(["one", "two", "three"]);
        let req = CompletionRequest::text("m", "p");
        assert_eq!(backend.complete(&req).unwrap()[0].text, "one");
        let batch = backend.complete(&req.clone().with_samples(2)).unwrap();
        assert_eq!(batch[0].text, "two");
        assert_eq!(batch[1].text, "three");
    }

    #[test]
    fn echo_contract() {
        let backend = ScriptedBackend::new(["The answer is 6."]);
        let out = backend
            .complete(&CompletionRequest::text("m", "p"))
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "The answer is 6.");
    }

    #[test]
    fn exhaustion_is_a_distinct_error() {
        let backend = ScriptedBackend::new(["only"]);
        let req = CompletionRequest::text("m", "p").with_samples(3);
        match backend.complete(&req) {
            Err(GatewayError::ScriptExhausted { needed }) => assert_eq!(needed, 2),
            other => panic!("expected exhaustion, got {other:?}"),
        }
        // the queue is untouched by the failed batch
        assert_eq!(backend.remaining(), 1);
    }
}
