//! Rule-based routing for when no language model is reachable.
//!
//! Patterns, matched case-insensitively in this order:
//!
//! | prompt | call |
//! |---|---|
//! | `split topic N into K` | `split_topic_kmeans{topic_idx: N, n_clusters: K}` |
//! | `K subtopics of topic N` | `split_topic_kmeans{topic_idx: N, n_clusters: K}` |
//! | `split topic N by keyword 'w'` | `split_topic_keyword{topic_idx: N, keyword: w}` |
//! | `split topic N` | `split_topic_hdbscan{topic_idx: N}` |
//! | `merge topics A, B and C` | `merge_topics{indices: [A, B, C]}` |
//! | `delete topic N` / `remove topic N` | `delete_topic{index: N}` |
//! | `compare topic A and/with/to B` | `compare_topics{topic_a: A, topic_b: B}` |
//! | `create a topic from keyword 'w'` | `create_topic_keyword{keyword: w}` |
//! | `list topics` / `show the topics` | `list_topics{}` |
//! | a question mentioning `topic N` | `knn_search{topic_index: N, query, k: 5}` |
//!
//! The knn query is the quoted phrase when there is one, otherwise the
//! question without its topic reference.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::json;

use super::registry::DEFAULT_KNN_K;
use crate::llm::FunctionCall;

fn re(pattern: &str) -> Regex {
    Regex::new(&format!("(?i){pattern}")).expect("valid pattern")
}

static SPLIT_INTO: LazyLock<Regex> =
    LazyLock::new(|| re(r"\bsplit\s+topic\s+(\d+)\s+into\s+(\d+)"));
static SUBTOPICS: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b(\d+)\s+(?:\w+\s+)?sub-?topics\s+(?:of|for|in)\s+topic\s+(\d+)"));
static SPLIT_KEYWORD: LazyLock<Regex> = LazyLock::new(|| {
    re(
        r#"\bsplit\s+topic\s+(\d+)\s+(?:by|on|along|using)\s+(?:the\s+)?keyword\s+['"‘“]?([^'"’”]+?)['"’”]?\s*[.!?]?$"#,
    )
});
static SPLIT: LazyLock<Regex> = LazyLock::new(|| re(r"\bsplit\s+topic\s+(\d+)\b"));
static MERGE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(?:merge|combine)\s+topics?\s+(\d+(?:\s*(?:,|and|&)\s*(?:topic\s+)?\d+)+)")
});
static DELETE: LazyLock<Regex> = LazyLock::new(|| re(r"\b(?:delete|remove)\s+topic\s+(\d+)\b"));
static COMPARE: LazyLock<Regex> =
    LazyLock::new(|| re(r"\bcompare\s+topics?\s+(\d+)\s+(?:and|with|to)\s+(?:topic\s+)?(\d+)\b"));
static CREATE: LazyLock<Regex> = LazyLock::new(|| {
    re(
        r#"\bcreate\s+(?:a\s+|new\s+|a\s+new\s+)?topic\s+(?:from|for|about)\s+(?:the\s+)?keyword\s+['"‘“]?([^'"’”]+?)['"’”]?\s*[.!?]?$"#,
    )
});
static LIST: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b(?:list|show)\s+(?:me\s+)?(?:all\s+)?(?:the\s+)?topics\b"));
static TOPIC_REF: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b(?:does\s+|in\s+|of\s+|about\s+)?topic\s+(\d+)\b"));
static QUOTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"['"‘“]([^'"’”]+)['"’”]"#).expect("valid pattern"));
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("valid pattern"));

fn num(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn call(name: &str, arguments: serde_json::Value) -> Option<FunctionCall> {
    Some(FunctionCall {
        name: name.to_string(),
        arguments,
    })
}

/// The call a prompt asks for under the documented patterns, if any.
pub fn fallback_route(prompt: &str) -> Option<FunctionCall> {
    let p = prompt.trim();
    if let Some(c) = SPLIT_INTO.captures(p) {
        return call(
            "split_topic_kmeans",
            json!({"topic_idx": num(&c[1])?, "n_clusters": num(&c[2])?}),
        );
    }
    if let Some(c) = SUBTOPICS.captures(p) {
        return call(
            "split_topic_kmeans",
            json!({"topic_idx": num(&c[2])?, "n_clusters": num(&c[1])?}),
        );
    }
    if let Some(c) = SPLIT_KEYWORD.captures(p) {
        return call(
            "split_topic_keyword",
            json!({"topic_idx": num(&c[1])?, "keyword": c[2].trim()}),
        );
    }
    if let Some(c) = SPLIT.captures(p) {
        return call("split_topic_hdbscan", json!({"topic_idx": num(&c[1])?}));
    }
    if let Some(c) = MERGE.captures(p) {
        let indices: Vec<u64> = NUMBER
            .find_iter(&c[1])
            .filter_map(|m| num(m.as_str()))
            .collect();
        return call("merge_topics", json!({ "indices": indices }));
    }
    if let Some(c) = DELETE.captures(p) {
        return call("delete_topic", json!({"index": num(&c[1])?}));
    }
    if let Some(c) = COMPARE.captures(p) {
        return call(
            "compare_topics",
            json!({"topic_a": num(&c[1])?, "topic_b": num(&c[2])?}),
        );
    }
    if let Some(c) = CREATE.captures(p) {
        return call("create_topic_keyword", json!({"keyword": c[1].trim()}));
    }
    if LIST.is_match(p) {
        return call("list_topics", json!({}));
    }
    if p.ends_with('?') {
        if let Some(c) = TOPIC_REF.captures(p) {
            let index = num(&c[1])?;
            let query = match QUOTED.captures(p) {
                Some(q) => q[1].trim().to_string(),
                None => TOPIC_REF
                    .replace_all(p, "")
                    .trim_end_matches('?')
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" "),
            };
            if !query.is_empty() {
                return call(
                    "knn_search",
                    json!({"topic_index": index, "query": query, "k": DEFAULT_KNN_K}),
                );
            }
        }
    }
    None
}
