use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use super::schema::{check_schema, validate, SchemaError};
use crate::clustering::default_min_cluster_size;
use crate::embedding::{knn_search, EmbeddingError};
use crate::llm::{
    compare_topics, identify_topic, truncate_chars, FunctionDeclaration, Llm, LlmError,
    DOC_CHAR_BUDGET,
};
use crate::topicstore::{
    ModificationSummary, Topic, TopicModelState, TopicServices, TopicStoreError,
};

/// Top-words shown per topic in function results.
pub const RESULT_TOPWORDS: usize = 10;
pub const DEFAULT_KNN_K: u64 = 5;
pub const MAX_KNN_K: u64 = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("function {0:?} is already registered")]
    Duplicate(String),
    #[error("function {name:?} has an invalid parameter schema: {source}")]
    InvalidSchema { name: String, source: SchemaError },
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("invalid arguments for {name}: {source}")]
    InvalidArguments { name: String, source: SchemaError },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandlerError {
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Store(#[from] TopicStoreError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// What a handler may use.
pub struct ChatContext<'a> {
    pub llm: &'a Llm,
    pub services: &'a dyn TopicServices,
    pub state: &'a mut TopicModelState,
}

pub type Handler = fn(&mut ChatContext<'_>, &Value) -> Result<Value, HandlerError>;

#[derive(Clone)]
pub struct RegisteredFunction {
    pub description: String,
    pub parameters: Value,
    /// True when the handler modifies the topic model.
    pub mutates: bool,
    pub handler: Handler,
}

impl std::fmt::Debug for RegisteredFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegisteredFunction")
            .field("description", &self.description)
            .field("parameters", &self.parameters)
            .field("mutates", &self.mutates)
            .finish()
    }
}

/// Functions the model may call, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct FunctionRegistry {
    functions: BTreeMap<String, RegisteredFunction>,
}

impl FunctionRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// knn_search, the four split/create operators, merge, delete,
    /// comparison, identification and listing.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        for (name, f) in standard_functions() {
            r.register(name, f).expect("standard registry is valid");
        }
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        function: RegisteredFunction,
    ) -> Result<(), RegistryError> {
        if self.functions.contains_key(name) {
            return Err(RegistryError::Duplicate(name.to_string()));
        }
        check_schema(&function.parameters).map_err(|source| RegistryError::InvalidSchema {
            name: name.to_string(),
            source,
        })?;
        if function.parameters.get("type").and_then(Value::as_str) != Some("object") {
            return Err(RegistryError::InvalidSchema {
                name: name.to_string(),
                source: SchemaError::InvalidSchema {
                    path: "$".into(),
                    message: "parameters must be an object schema".into(),
                },
            });
        }
        self.functions.insert(name.to_string(), function);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RegisteredFunction> {
        self.functions.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Declarations sent to the model, in name order. Modifying functions
    /// are left out unless `include_mutating`.
    pub fn declarations(&self, include_mutating: bool) -> Vec<FunctionDeclaration> {
        self.functions
            .iter()
            .filter(|(_, f)| include_mutating || !f.mutates)
            .map(|(name, f)| FunctionDeclaration {
                name: name.clone(),
                description: f.description.clone(),
                parameters: f.parameters.clone(),
            })
            .collect()
    }

    pub fn validate(
        &self,
        name: &str,
        arguments: &Value,
    ) -> Result<&RegisteredFunction, RegistryError> {
        let f = self
            .get(name)
            .ok_or_else(|| RegistryError::UnknownFunction(name.to_string()))?;
        validate(&f.parameters, arguments).map_err(|source| RegistryError::InvalidArguments {
            name: name.to_string(),
            source,
        })?;
        Ok(f)
    }
}

fn index_schema(description: &str) -> Value {
    json!({"type": "integer", "minimum": 0, "description": description})
}

fn object(properties: Value, required: &[&str]) -> Value {
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false
    })
}

fn function(
    description: &str,
    parameters: Value,
    mutates: bool,
    handler: Handler,
) -> RegisteredFunction {
    RegisteredFunction {
        description: description.to_string(),
        parameters,
        mutates,
        handler,
    }
}

fn standard_functions() -> Vec<(&'static str, RegisteredFunction)> {
    vec![
        (
            "knn_search",
            function(
                "Find the documents of a topic that are most similar to a query and use them to answer a question about that topic.",
                object(
                    json!({
                        "topic_index": index_schema("Index of the topic to search."),
                        "query": {"type": "string", "minLength": 1, "description": "Keywords describing the information sought."},
                        "k": {"type": "integer", "minimum": 1, "maximum": MAX_KNN_K, "description": "Number of documents to retrieve."}
                    }),
                    &["topic_index", "query"],
                ),
                false,
                knn_handler,
            ),
        ),
        (
            "split_topic_kmeans",
            function(
                "Split a topic into a given number of subtopics with k-means.",
                object(
                    json!({
                        "topic_idx": index_schema("Index of the topic to split."),
                        "n_clusters": {"type": "integer", "minimum": 2, "description": "Number of subtopics."}
                    }),
                    &["topic_idx", "n_clusters"],
                ),
                true,
                split_kmeans_handler,
            ),
        ),
        (
            "split_topic_hdbscan",
            function(
                "Split a topic into subtopics found by density-based clustering.",
                object(
                    json!({
                        "topic_idx": index_schema("Index of the topic to split."),
                        "min_cluster_size": {"type": "integer", "minimum": 2, "description": "Smallest subtopic size."}
                    }),
                    &["topic_idx"],
                ),
                true,
                split_hdbscan_handler,
            ),
        ),
        (
            "split_topic_keyword",
            function(
                "Move the documents of a topic that are closer to a keyword than to the topic into a new topic.",
                object(
                    json!({
                        "topic_idx": index_schema("Index of the topic to split."),
                        "keyword": {"type": "string", "minLength": 1}
                    }),
                    &["topic_idx", "keyword"],
                ),
                true,
                split_keyword_handler,
            ),
        ),
        (
            "create_topic_keyword",
            function(
                "Create a new topic from all documents that are closer to a keyword than to their current topic.",
                object(
                    json!({"keyword": {"type": "string", "minLength": 1}}),
                    &["keyword"],
                ),
                true,
                create_keyword_handler,
            ),
        ),
        (
            "merge_topics",
            function(
                "Merge two or more topics into one.",
                object(
                    json!({
                        "indices": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2}
                    }),
                    &["indices"],
                ),
                true,
                merge_handler,
            ),
        ),
        (
            "delete_topic",
            function(
                "Delete a topic and move its documents to the most similar remaining topics.",
                object(json!({"index": index_schema("Index of the topic to delete.")}), &["index"]),
                true,
                delete_handler,
            ),
        ),
        (
            "compare_topics",
            function(
                "Describe the similarities and differences between two topics.",
                object(
                    json!({"topic_a": index_schema("First topic."), "topic_b": index_schema("Second topic.")}),
                    &["topic_a", "topic_b"],
                ),
                false,
                compare_handler,
            ),
        ),
        (
            "identify_topic",
            function(
                "Find the topic a query or subject belongs to.",
                object(json!({"query": {"type": "string", "minLength": 1}}), &["query"]),
                false,
                identify_handler,
            ),
        ),
        (
            "list_topics",
            function(
                "List all topics with their titles, descriptions and sizes.",
                object(json!({}), &[]),
                false,
                list_handler,
            ),
        ),
    ]
}

fn uint(args: &Value, key: &str) -> Result<usize, HandlerError> {
    args.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| HandlerError::Argument(format!("{key} must be a non-negative integer")))
}

fn text<'v>(args: &'v Value, key: &str) -> Result<&'v str, HandlerError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| HandlerError::Argument(format!("{key} must be a string")))
}

pub fn topic_brief(t: &Topic) -> Value {
    json!({
        "index": t.index,
        "title": t.title,
        "description": t.description,
        "size": t.size(),
        "topwords": t.topwords_tfidf.prefix(RESULT_TOPWORDS).words().collect::<Vec<_>>(),
    })
}

fn mutation_result(state: &TopicModelState, s: &ModificationSummary) -> Value {
    json!({
        "kind": s.kind,
        "noop": s.noop,
        "version": s.version,
        "topic_count": state.len(),
        "affected_topics": s
            .affected_topic_indices_after
            .iter()
            .map(|&i| topic_brief(&state.topics()[i]))
            .collect::<Vec<_>>(),
    })
}

fn knn_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let index = uint(args, "topic_index")?;
    let query = text(args, "query")?.trim();
    let k = args
        .get("k")
        .and_then(Value::as_u64)
        .unwrap_or(DEFAULT_KNN_K) as usize;
    let topic = cx.state.topic(index)?;
    let q = cx.services.embed_query(query)?;
    let hits = knn_search(cx.state.embeddings(), &topic.doc_ids, &q, k)?;
    let docs = cx.state.corpus().documents();
    Ok(json!({
        "topic_index": index,
        "title": topic.title,
        "query": query,
        "documents": hits
            .iter()
            .map(|h| json!({
                "doc_id": h.doc_id,
                "similarity": h.similarity,
                "text": truncate_chars(&docs[h.doc_id].text, DOC_CHAR_BUDGET),
            }))
            .collect::<Vec<_>>(),
    }))
}

fn split_kmeans_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let s = cx.state.split_topic_kmeans(
        uint(args, "topic_idx")?,
        uint(args, "n_clusters")?,
        cx.services,
    )?;
    Ok(mutation_result(cx.state, &s))
}

fn split_hdbscan_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let index = uint(args, "topic_idx")?;
    let mcs = match args.get("min_cluster_size") {
        Some(_) => uint(args, "min_cluster_size")?,
        None => default_min_cluster_size(cx.state.topic(index)?.size()),
    };
    let s = cx.state.split_topic_hdbscan(index, mcs, cx.services)?;
    Ok(mutation_result(cx.state, &s))
}

fn split_keyword_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let s = cx.state.split_topic_keyword(
        uint(args, "topic_idx")?,
        text(args, "keyword")?,
        cx.services,
    )?;
    Ok(mutation_result(cx.state, &s))
}

fn create_keyword_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let s = cx
        .state
        .create_topic_keyword(text(args, "keyword")?, cx.services)?;
    Ok(mutation_result(cx.state, &s))
}

fn merge_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let indices = args
        .get("indices")
        .and_then(Value::as_array)
        .ok_or_else(|| HandlerError::Argument("indices must be an array".into()))?
        .iter()
        .map(|v| {
            v.as_u64().map(|i| i as usize).ok_or_else(|| {
                HandlerError::Argument("indices must be non-negative integers".into())
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let s = cx.state.merge_topics(&indices, cx.services)?;
    Ok(mutation_result(cx.state, &s))
}

fn delete_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let s = cx.state.delete_topic(uint(args, "index")?, cx.services)?;
    Ok(mutation_result(cx.state, &s))
}

fn compare_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let (a, b) = (uint(args, "topic_a")?, uint(args, "topic_b")?);
    let comparison = compare_topics(cx.llm, cx.state, a, b)?;
    Ok(json!({"topic_a": a, "topic_b": b, "comparison": comparison}))
}

fn identify_handler(cx: &mut ChatContext<'_>, args: &Value) -> Result<Value, HandlerError> {
    let found = identify_topic(cx.llm, cx.state, cx.services, text(args, "query")?)?;
    let mut v = topic_brief(&cx.state.topics()[found.index]);
    v["source"] = json!(found.source);
    Ok(v)
}

fn list_handler(cx: &mut ChatContext<'_>, _args: &Value) -> Result<Value, HandlerError> {
    Ok(json!({
        "topics": cx.state.topics().iter().map(|t| json!({
            "index": t.index,
            "title": t.title,
            "description": t.description,
            "size": t.size(),
        })).collect::<Vec<_>>()
    }))
}
