//! Chat-driven access to the topic model.
//!
//! A turn sends the prompt and the function declarations to the model. When
//! the model calls a function, the arguments are validated against its
//! schema (with one repair round-trip on failure), the handler runs against
//! the state, and a second request turns the function result into the reply.
//! When the model answers directly, that answer is the reply. No failure
//! escapes a turn: every failure path ends in a reply that explains it.

mod fallback;
mod registry;
pub mod schema;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::llm::prompts::{COMPOSE_USER, REPAIR_USER, ROUTER_SYSTEM};
use crate::llm::{ChatMessage, ChatRequest, ChatResponse, FunctionCall, Llm};
use crate::topicstore::{TopicModelState, TopicServices};

pub use fallback::fallback_route;
pub use registry::{
    topic_brief, ChatContext, FunctionRegistry, Handler, HandlerError, RegisteredFunction,
    RegistryError, DEFAULT_KNN_K, MAX_KNN_K, RESULT_TOPWORDS,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    /// When false, modifying functions are neither declared nor executed.
    pub allow_mutations_via_chat: bool,
    /// Route with [`fallback_route`] when the model cannot be reached.
    pub rule_fallback: bool,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            allow_mutations_via_chat: true,
            rule_fallback: true,
        }
    }
}

/// One prompt and everything that happened because of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub prompt: String,
    /// The executed call, if any.
    pub function_call: Option<FunctionCall>,
    /// The function's result, or `null` without a call.
    pub result_summary: Value,
    pub response: String,
    pub version_before: u64,
    pub version_after: u64,
}

pub const EMPTY_PROMPT_REPLY: &str = "Please enter a request.";
pub const UNAVAILABLE_REPLY: &str = "The language model is unavailable and the request does not match a built-in command. Try for example \"list topics\", \"split topic 2 into 5\" or \"delete topic 4\".";
pub const MUTATIONS_DISABLED_REPLY: &str =
    "Modifying the topic model through chat is disabled for this deployment.";

#[derive(Debug, Clone)]
pub struct ChatRouter {
    llm: Llm,
    registry: FunctionRegistry,
    config: RouterConfig,
}

enum Decision {
    Call(FunctionCall),
    Reply(String),
}

impl ChatRouter {
    pub fn new(llm: Llm, registry: FunctionRegistry, config: RouterConfig) -> Self {
        Self {
            llm,
            registry,
            config,
        }
    }

    pub fn standard(llm: Llm, config: RouterConfig) -> Self {
        Self::new(llm, FunctionRegistry::standard(), config)
    }

    pub fn llm(&self) -> &Llm {
        &self.llm
    }

    pub fn registry(&self) -> &FunctionRegistry {
        &self.registry
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    /// Runs one turn. Modifying calls change `state` and bump its version.
    pub fn route(
        &self,
        state: &mut TopicModelState,
        services: &dyn TopicServices,
        prompt: &str,
    ) -> ChatTurn {
        let prompt = prompt.trim();
        let version_before = state.version();
        let finish = |function_call, result_summary, response, state: &TopicModelState| ChatTurn {
            prompt: prompt.to_string(),
            function_call,
            result_summary,
            response,
            version_before,
            version_after: state.version(),
        };
        if prompt.is_empty() {
            return finish(None, Value::Null, EMPTY_PROMPT_REPLY.into(), state);
        }
        let call = match self.decide(state, prompt) {
            Decision::Reply(text) => return finish(None, Value::Null, text, state),
            Decision::Call(call) => call,
        };
        let function = self
            .registry
            .get(&call.name)
            .expect("decided calls are registered");
        assert!(self.registry.validate(&call.name, &call.arguments).is_ok());
        assert!(self.config.allow_mutations_via_chat || !function.mutates);
        let mut cx = ChatContext {
            llm: &self.llm,
            services,
            state,
        };
        let result = match (function.handler)(&mut cx, &call.arguments) {
            Ok(v) => v,
            Err(e) => {
                tracing::warn!(function = %call.name, error = %e, "chat function failed");
                json!({"error": e.to_string()})
            }
        };
        let response = self.compose(prompt, &call, &result);
        tracing::info!(function = %call.name, version = state.version(), "chat turn");
        finish(Some(call), result, response, state)
    }

    fn decide(&self, state: &TopicModelState, prompt: &str) -> Decision {
        let listing = state
            .topics()
            .iter()
            .map(|t| format!("{}. {}", t.index, t.title))
            .collect::<Vec<_>>()
            .join("\n");
        let mut req = ChatRequest {
            messages: vec![
                ChatMessage::system(ROUTER_SYSTEM.render(&[("topics", &listing)])),
                ChatMessage::user(prompt),
            ],
            functions: self
                .registry
                .declarations(self.config.allow_mutations_via_chat),
        };
        let call = match self.llm.send(&req) {
            Ok(ChatResponse::Text(t)) => return Decision::Reply(t),
            Ok(ChatResponse::FunctionCall(c)) => c,
            Err(e) => {
                tracing::warn!(error = %e, "routing request failed");
                return match fallback_route(prompt).filter(|_| self.config.rule_fallback) {
                    Some(c) if self.blocked(&c) => Decision::Reply(MUTATIONS_DISABLED_REPLY.into()),
                    Some(c) => match self.check(&c) {
                        Ok(()) => Decision::Call(c),
                        Err(msg) => {
                            Decision::Reply(format!("The request could not be carried out: {msg}"))
                        }
                    },
                    None => Decision::Reply(UNAVAILABLE_REPLY.into()),
                };
            }
        };
        if self.blocked(&call) {
            return Decision::Reply(MUTATIONS_DISABLED_REPLY.into());
        }
        let error = match self.check(&call) {
            Ok(()) => return Decision::Call(call),
            Err(e) => e,
        };
        tracing::warn!(function = %call.name, %error, "invalid function call, asking for a repair");
        req.messages.push(ChatMessage::assistant_call(call.clone()));
        req.messages.push(ChatMessage::user(
            REPAIR_USER.render(&[("name", &call.name), ("error", &error)]),
        ));
        match self.llm.send(&req) {
            Ok(ChatResponse::Text(t)) => Decision::Reply(t),
            Ok(ChatResponse::FunctionCall(c)) if self.blocked(&c) => {
                Decision::Reply(MUTATIONS_DISABLED_REPLY.into())
            }
            Ok(ChatResponse::FunctionCall(c)) if self.check(&c).is_ok() => Decision::Call(c),
            _ => Decision::Reply(self.direct_answer(prompt, &call.name, &error)),
        }
    }

    fn check(&self, call: &FunctionCall) -> Result<(), String> {
        self.registry
            .validate(&call.name, &call.arguments)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    /// A known modifying function while modifications are switched off.
    fn blocked(&self, call: &FunctionCall) -> bool {
        !self.config.allow_mutations_via_chat
            && self.registry.get(&call.name).is_some_and(|f| f.mutates)
    }

    fn direct_answer(&self, prompt: &str, name: &str, error: &str) -> String {
        let req = ChatRequest::new(vec![ChatMessage::user(prompt)]);
        self.llm.text(&req).unwrap_or_else(|e| {
            tracing::warn!(error = %e, "direct answer failed");
            format!(
                "The request could not be carried out: the call to {name} was invalid ({error})."
            )
        })
    }

    fn compose(&self, prompt: &str, call: &FunctionCall, result: &Value) -> String {
        let arguments = call.arguments.to_string();
        let rendered = serde_json::to_string_pretty(result).expect("JSON values serialize");
        let req = ChatRequest::new(vec![ChatMessage::user(COMPOSE_USER.render(&[
            ("prompt", prompt),
            ("name", &call.name),
            ("arguments", &arguments),
            ("result", &rendered),
        ]))]);
        self.llm.text(&req).unwrap_or_else(|e| {
            tracing::warn!(error = %e, "composing the reply failed");
            render_result(&call.name, result)
        })
    }
}

/// Plain-text reply for a function result, used when the model cannot
/// compose one.
pub fn render_result(name: &str, result: &Value) -> String {
    let s = |v: &Value| v.as_str().unwrap_or_default().to_string();
    let line = |t: &Value| {
        format!(
            "{}: {} ({} documents)",
            t["index"],
            s(&t["title"]),
            t["size"]
        )
    };
    if let Some(err) = result.get("error") {
        return format!("{name} could not be completed: {}", s(err));
    }
    match name {
        "knn_search" => {
            let mut out = format!(
                "Documents in topic {} ({}) closest to \"{}\":",
                result["topic_index"],
                s(&result["title"]),
                s(&result["query"])
            );
            for d in result["documents"].as_array().into_iter().flatten() {
                let text = s(&d["text"]);
                let snippet: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
                out.push_str(&format!(
                    "\n- [Document index {}] {}",
                    d["doc_id"],
                    crate::llm::truncate_chars(&snippet, 200)
                ));
            }
            out
        }
        "compare_topics" => s(&result["comparison"]),
        "identify_topic" => format!("The query belongs to topic {}.", line(result)),
        "list_topics" => result["topics"]
            .as_array()
            .into_iter()
            .flatten()
            .map(line)
            .collect::<Vec<_>>()
            .join("\n"),
        _ if result.get("kind").is_some() => {
            if result["noop"] == Value::Bool(true) {
                return format!(
                    "{name} left the topics unchanged (version {}).",
                    result["version"]
                );
            }
            let mut out = format!(
                "{name} done. The model now has {} topics (version {}). Changed topics:",
                result["topic_count"], result["version"]
            );
            for t in result["affected_topics"].as_array().into_iter().flatten() {
                out.push_str(&format!("\n- {}", line(t)));
            }
            out
        }
        _ => serde_json::to_string_pretty(result).expect("JSON values serialize"),
    }
}
