use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, FunctionCall, LlmError, LlmProvider, Role};

/// Client for an OpenAI-compatible chat-completions endpoint with tool
/// declarations.
pub struct RemoteChatProvider {
    endpoint_url: String,
    model_name: String,
    api_key: String,
    temperature: f64,
    max_output_tokens: u32,
    timeout: Duration,
}

impl std::fmt::Debug for RemoteChatProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteChatProvider")
            .field("endpoint_url", &self.endpoint_url)
            .field("model_name", &self.model_name)
            .field("api_key", &"[REDACTED]")
            .finish()
    }
}

impl RemoteChatProvider {
    pub fn new(
        endpoint_url: String,
        model_name: String,
        api_key: String,
        temperature: f64,
        max_output_tokens: u32,
        timeout: Duration,
    ) -> Self {
        Self {
            endpoint_url,
            model_name,
            api_key,
            temperature,
            max_output_tokens,
            timeout,
        }
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| match m.role {
                Role::FunctionResult => json!({
                    "role": "user",
                    "content": format!(
                        "Result of function {}:\n{}",
                        m.name.as_deref().unwrap_or("unknown"),
                        m.content
                    ),
                }),
                Role::Assistant if m.function_call.is_some() => {
                    let call = m.function_call.as_ref().expect("checked");
                    json!({
                        "role": "assistant",
                        "content": format!(
                            "Calling {} with {}",
                            call.name, call.arguments
                        ),
                    })
                }
                _ => json!({"role": m.role.wire_name(), "content": m.content}),
            })
            .collect();
        let mut body = json!({
            "model": self.model_name,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        });
        if !req.functions.is_empty() {
            body["tools"] = req
                .functions
                .iter()
                .map(|f| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": f.name,
                            "description": f.description,
                            "parameters": f.parameters,
                        }
                    })
                })
                .collect();
        }
        body
    }
}

/// Reads the first choice of a chat-completions response. Tool calls win
/// over text; the legacy `function_call` field is accepted too.
pub fn parse_response(body: &Value) -> Result<ChatResponse, LlmError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::MalformedResponse("no choices[0].message".into()))?;
    let call = message
        .pointer("/tool_calls/0/function")
        .or_else(|| message.get("function_call"))
        .filter(|v| !v.is_null());
    if let Some(f) = call {
        let name = f
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::MalformedResponse("function call without name".into()))?;
        let arguments = match f.get("arguments") {
            Some(Value::String(s)) if s.trim().is_empty() => json!({}),
            Some(Value::String(s)) => serde_json::from_str(s)
                .map_err(|e| LlmError::MalformedResponse(format!("function arguments: {e}")))?,
            Some(v @ Value::Object(_)) => v.clone(),
            None | Some(Value::Null) => json!({}),
            Some(other) => {
                return Err(LlmError::MalformedResponse(format!(
                    "function arguments of unexpected type: {other}"
                )))
            }
        };
        return Ok(ChatResponse::FunctionCall(FunctionCall {
            name: name.to_string(),
            arguments,
        }));
    }
    match message.get("content") {
        Some(Value::String(s)) => Ok(ChatResponse::Text(s.clone())),
        _ => Err(LlmError::MalformedResponse("message has no content".into())),
    }
}

impl LlmProvider for RemoteChatProvider {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        let resp = client
            .post(&self.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(&self.request_body(req))
            .send()
            .map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(LlmError::ProviderUnavailable(format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            )));
        }
        let body: Value = resp
            .json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        parse_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, FunctionDeclaration};

    #[test]
    fn parses_tool_call_with_string_arguments() {
        let body = json!({"choices": [{"message": {"content": null, "tool_calls": [
            {"id": "c1", "type": "function", "function": {
                "name": "knn_search",
                "arguments": "{\"topic_index\": 1, \"query\": \"moon landing\", \"k\": 5}"
            }}
        ]}}]});
        assert_eq!(
            parse_response(&body).unwrap(),
            ChatResponse::FunctionCall(FunctionCall {
                name: "knn_search".into(),
                arguments: json!({"topic_index": 1, "query": "moon landing", "k": 5}),
            })
        );
    }

    #[test]
    fn parses_text_and_rejects_garbage() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(
            parse_response(&body).unwrap(),
            ChatResponse::Text("hi".into())
        );
        assert!(parse_response(&json!({"choices": []})).is_err());
        let bad =
            json!({"choices": [{"message": {"function_call": {"name": "f", "arguments": "{"}}}]});
        assert!(matches!(
            parse_response(&bad),
            Err(LlmError::MalformedResponse(_))
        ));
    }

    #[test]
    fn request_declares_tools() {
        let p = RemoteChatProvider::new(
            "http://x".into(),
            "m".into(),
            "k".into(),
            0.0,
            100,
            Duration::from_secs(1),
        );
        let req = ChatRequest {
            messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
            functions: vec![FunctionDeclaration {
                name: "list_topics".into(),
                description: "d".into(),
                parameters: json!({"type": "object", "properties": {}}),
            }],
        };
        let body = p.request_body(&req);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["tools"][0]["function"]["name"], "list_topics");
        assert_eq!(body["temperature"], 0.0);
        let plain = p.request_body(&ChatRequest {
            messages: vec![ChatMessage::user("u")],
            functions: vec![],
        });
        assert!(plain.get("tools").is_none());
    }
}
