use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, FunctionCall, LlmError, LlmProvider};

/// One scripted reply. `match` is a substring of the request's last user
/// message, or `"*"` for any request. A `function_call` rule only answers
/// requests that declare functions; an `error` rule simulates an outage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_call: Option<FunctionCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MockRule {
    pub fn text(pattern: &str, response: &str) -> Self {
        MockRule {
            pattern: pattern.into(),
            response: Some(response.into()),
            function_call: None,
            error: None,
        }
    }

    pub fn call(pattern: &str, name: &str, arguments: serde_json::Value) -> Self {
        MockRule {
            pattern: pattern.into(),
            response: None,
            function_call: Some(FunctionCall {
                name: name.into(),
                arguments,
            }),
            error: None,
        }
    }

    pub fn failure(pattern: &str, message: &str) -> Self {
        MockRule {
            pattern: pattern.into(),
            response: None,
            function_call: None,
            error: Some(message.into()),
        }
    }

    fn matches(&self, req: &ChatRequest) -> bool {
        if self.function_call.is_some() && req.functions.is_empty() {
            return false;
        }
        self.pattern == "*" || req.last_user_content().contains(&self.pattern)
    }
}

/// Scripted provider for offline runs. Rules are tried in order; a request
/// no rule answers fails with [`LlmError::NoScriptMatch`].
#[derive(Debug, Default)]
pub struct MockProvider {
    rules: Vec<MockRule>,
    delay: Duration,
    recorded: Mutex<Vec<ChatRequest>>,
}

impl MockProvider {
    pub fn new(rules: Vec<MockRule>) -> Self {
        MockProvider {
            rules,
            ..Default::default()
        }
    }

    pub fn from_json(script: &str) -> Result<Self, LlmError> {
        let rules: Vec<MockRule> = serde_json::from_str(script)
            .map_err(|e| LlmError::InvalidConfig(format!("mock script: {e}")))?;
        for (i, r) in rules.iter().enumerate() {
            let outcomes = r.response.is_some() as u8
                + r.function_call.is_some() as u8
                + r.error.is_some() as u8;
            if outcomes != 1 {
                return Err(LlmError::InvalidConfig(format!(
                    "mock rule {i} needs exactly one of response, function_call, error"
                )));
            }
        }
        Ok(Self::new(rules))
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.recorded.lock().expect("mock lock poisoned").clone()
    }
}

impl LlmProvider for MockProvider {
    fn model_name(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.recorded
            .lock()
            .expect("mock lock poisoned")
            .push(req.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(req))
            .ok_or(LlmError::NoScriptMatch)?;
        if let Some(e) = &rule.error {
            return Err(LlmError::ProviderUnavailable(e.clone()));
        }
        if let Some(call) = &rule.function_call {
            return Ok(ChatResponse::FunctionCall(call.clone()));
        }
        Ok(ChatResponse::Text(
            rule.response.clone().unwrap_or_default(),
        ))
    }
}
