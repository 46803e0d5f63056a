use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{validate_messages, CallContext, ChatClient, ChatMessage, ChatParams, ChatResponse, LlmError, TemplateId};

/// Ordered responses per template. Once a list is exhausted its last entry
/// repeats.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript(pub BTreeMap<TemplateId, Vec<String>>);

impl MockScript {
    pub fn new() -> MockScript {
        MockScript::default()
    }

    pub fn with(mut self, template: TemplateId, responses: &[&str]) -> MockScript {
        self.0.entry(template).or_default().extend(responses.iter().map(|s| s.to_string()));
        self
    }

    pub fn from_json(text: &str) -> Result<MockScript, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::InvalidRequest(format!("mock script: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MockScript, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidRequest(format!("mock script {}: {e}", path.display())))?;
        MockScript::from_json(&text)
    }
}

/// Mock scripts for a benchmark: one per question id, with an optional
/// fallback. A file holding a bare script is read as the fallback alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockBook {
    #[serde(default)]
    pub default: Option<MockScript>,
    #[serde(default)]
    pub questions: BTreeMap<String, MockScript>,
}

impl MockBook {
    pub fn from_json(text: &str) -> Result<MockBook, LlmError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| LlmError::InvalidRequest(format!("mock script: {e}")))?;
        let keyed = value.as_object().is_some_and(|o| o.contains_key("questions") || o.contains_key("default"));
        let parsed = if keyed {
            serde_json::from_value(value)
        } else {
            serde_json::from_value(value).map(|s| MockBook { default: Some(s), questions: BTreeMap::new() })
        };
        parsed.map_err(|e| LlmError::InvalidRequest(format!("mock script: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MockBook, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidRequest(format!("mock script {}: {e}", path.display())))?;
        MockBook::from_json(&text)
    }

    /// A fresh client for one session of `question_id`.
    pub fn session(&self, question_id: &str) -> Result<MockClient, LlmError> {
        self.questions
            .get(question_id)
            .or(self.default.as_ref())
            .map(|s| MockClient::new(s.clone()))
            .ok_or_else(|| LlmError::InvalidRequest(format!("mock book has no script for question {question_id}")))
    }
}

/// Deterministic offline client. Call ordinals are counted per template for
/// the lifetime of one instance; use [`MockClient::fork`] for a new session.
#[derive(Debug)]
pub struct MockClient {
    script: MockScript,
    calls: Mutex<BTreeMap<TemplateId, usize>>,
}

impl MockClient {
    pub fn new(script: MockScript) -> MockClient {
        MockClient { script, calls: Mutex::new(BTreeMap::new()) }
    }

    /// Same script, fresh call counters.
    pub fn fork(&self) -> MockClient {
        MockClient::new(self.script.clone())
    }

    pub fn calls(&self, template: TemplateId) -> usize {
        self.calls.lock().unwrap().get(&template).copied().unwrap_or(0)
    }
}

fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl ChatClient for MockClient {
    fn chat(&self, messages: &[ChatMessage], params: &ChatParams, ctx: CallContext) -> Result<ChatResponse, LlmError> {
        validate_messages(messages)?;
        let responses =
            self.script.0.get(&ctx.template).filter(|r| !r.is_empty()).ok_or_else(|| {
                LlmError::InvalidRequest(format!("mock script has no responses for {}", ctx.template))
            })?;
        let ordinal = {
            let mut calls = self.calls.lock().unwrap();
            let n = calls.entry(ctx.template).or_insert(0);
            *n += 1;
            *n - 1
        };
        let text = responses[ordinal.min(responses.len() - 1)].clone();
        let prompt_tokens = messages.iter().map(|m| word_count(&m.text_content())).sum();
        Ok(ChatResponse {
            prompt_tokens: Some(prompt_tokens),
            completion_tokens: Some(word_count(&text)),
            text,
            model: format!("mock:{}", params.model),
            latency_ms: 0,
            retries: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(template: TemplateId) -> CallContext {
        CallContext { template }
    }

    #[test]
    fn scripted_responses_in_order_then_repeat() {
        let mock = MockClient::new(MockScript::new().with(TemplateId::Init, &["OK", "second"]));
        let msgs = [ChatMessage::user("hello there")];
        let p = ChatParams::default();
        assert_eq!(mock.chat(&msgs, &p, ctx(TemplateId::Init)).unwrap().text, "OK");
        assert_eq!(mock.chat(&msgs, &p, ctx(TemplateId::Init)).unwrap().text, "second");
        let third = mock.chat(&msgs, &p, ctx(TemplateId::Init)).unwrap();
        assert_eq!(third.text, "second");
        assert_eq!(third.prompt_tokens, Some(2));
        assert!(mock.chat(&msgs, &p, ctx(TemplateId::Critique)).is_err());
        assert_eq!(mock.fork().chat(&msgs, &p, ctx(TemplateId::Init)).unwrap().text, "OK");
    }

    #[test]
    fn book_falls_back_to_default() {
        let book =
            MockBook::from_json(r#"{"default": {"init": ["d"]}, "questions": {"q1": {"init": ["one"]}}}"#).unwrap();
        let msgs = [ChatMessage::user("x")];
        let p = ChatParams::default();
        assert_eq!(book.session("q1").unwrap().chat(&msgs, &p, ctx(TemplateId::Init)).unwrap().text, "one");
        assert_eq!(book.session("q2").unwrap().chat(&msgs, &p, ctx(TemplateId::Init)).unwrap().text, "d");
        let bare = MockBook::from_json(r#"{"init": ["a"]}"#).unwrap();
        assert!(bare.questions.is_empty() && bare.default.is_some());
        let strict = MockBook::from_json(r#"{"questions": {}}"#).unwrap();
        assert!(strict.session("q").is_err());
    }

    #[test]
    fn script_json_round_trip() {
        let script = MockScript::from_json(r#"{"init": ["a"], "rewrite": ["b", "c"]}"#).unwrap();
        assert_eq!(script.0[&TemplateId::Rewrite], vec!["b", "c"]);
        let back = MockScript::from_json(&serde_json::to_string(&script).unwrap()).unwrap();
        assert_eq!(back, script);
    }
}
