use serde::{Deserialize, Serialize};

use super::prompts::{
    ANSWER_SYSTEM, ANSWER_USER, COMPARE_USER, IDENTIFY_USER, KEYWORDS_USER, NAMING_SYSTEM,
    NAMING_USER,
};
use super::{ChatMessage, ChatRequest, Llm, LlmError};
use crate::embedding::{cosine_similarity, knn_search, mean_vector};
use crate::topicstore::{placeholder_title, TopicModelState, TopicServices};
use crate::topwords::TopwordList;

pub const MAX_TITLE_WORDS: usize = 8;
pub const MAX_DESCRIPTION_SENTENCES: usize = 3;
pub const MAX_KEYWORDS: usize = 5;
pub const DEFAULT_ANSWER_K: usize = 5;
/// Characters of each retrieved document placed in the answer prompt.
pub const DOC_CHAR_BUDGET: usize = 1500;
const COMPARE_WORDS: usize = 20;
const NAMING_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Naming {
    pub title: String,
    pub description: String,
    pub placeholder: bool,
}

fn is_sentence_end(chars: &[char], i: usize) -> bool {
    matches!(chars[i], '.' | '!' | '?') && chars.get(i + 1).is_none_or(|c| c.is_whitespace())
}

/// Cuts at the first sentence end or comma, strips decoration and keeps at
/// most [`MAX_TITLE_WORDS`] words.
pub fn clean_title(raw: &str) -> String {
    let trimmed = raw
        .trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '*' | '#' | '`'));
    let chars: Vec<char> = trimmed.chars().collect();
    let end = (0..chars.len())
        .find(|&i| chars[i] == ',' || is_sentence_end(&chars, i))
        .unwrap_or(chars.len());
    let head: String = chars[..end].iter().collect();
    head.split_whitespace()
        .take(MAX_TITLE_WORDS)
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '*' | ':' | '-'))
        .trim()
        .to_string()
}

/// The first `max` sentences of `text`, whitespace normalized.
pub fn limit_sentences(text: &str, max: usize) -> String {
    let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = normalized.chars().collect();
    let mut seen = 0;
    for i in 0..chars.len() {
        if is_sentence_end(&chars, i) {
            seen += 1;
            if seen == max {
                return chars[..=i].iter().collect();
            }
        }
    }
    normalized
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let l = line.trim().trim_start_matches(['*', '#', ' ']);
    let head = l.get(..label.len())?;
    if head.eq_ignore_ascii_case(label) {
        Some(l[label.len()..].trim_start_matches(['*', ' ']).trim())
    } else {
        None
    }
}

/// Reads a `Title: …` / `Description: …` reply. `None` when no non-empty
/// title is present.
pub fn parse_naming(text: &str) -> Option<(String, String)> {
    let mut title = None;
    let mut description: Vec<&str> = Vec::new();
    let mut in_description = false;
    for line in text.lines() {
        if let Some(t) = strip_label(line, "title:") {
            title.get_or_insert(t);
            in_description = false;
        } else if let Some(d) = strip_label(line, "description:") {
            description.push(d);
            in_description = true;
        } else if in_description && !line.trim().is_empty() {
            description.push(line.trim());
        }
    }
    let title = clean_title(title?);
    if title.is_empty() {
        return None;
    }
    Some((
        title,
        limit_sentences(&description.join(" "), MAX_DESCRIPTION_SENTENCES),
    ))
}

/// Title and description from the first `max_words` top-words. Two attempts;
/// then the placeholder `Topic {topic_index}`.
pub fn name_and_describe(
    llm: &Llm,
    topic_index: usize,
    topwords: &TopwordList,
    max_words: usize,
) -> Naming {
    let placeholder = Naming {
        title: placeholder_title(topic_index),
        description: String::new(),
        placeholder: true,
    };
    if topwords.is_empty() {
        return placeholder;
    }
    let words = topwords
        .prefix(max_words)
        .words()
        .collect::<Vec<_>>()
        .join(", ");
    let req = ChatRequest::new(vec![
        ChatMessage::system(NAMING_SYSTEM.render(&[])),
        ChatMessage::user(NAMING_USER.render(&[("words", &words)])),
    ]);
    for attempt in 1..=NAMING_ATTEMPTS {
        match llm.text(&req) {
            Ok(text) => match parse_naming(&text) {
                Some((title, description)) => {
                    return Naming {
                        title,
                        description,
                        placeholder: false,
                    }
                }
                None => {
                    tracing::warn!(topic_index, attempt, raw = %text, "unparseable naming response")
                }
            },
            Err(e) => tracing::warn!(topic_index, attempt, error = %e, "naming request failed"),
        }
    }
    tracing::error!(topic_index, "naming failed; using placeholder title");
    placeholder
}

/// Keywords from a JSON array reply, or from a comma/line separated list.
pub fn parse_keywords(text: &str) -> Vec<String> {
    let raw: Vec<String> = match serde_json::from_str::<Vec<String>>(text.trim()) {
        Ok(v) => v,
        Err(_) => text
            .split(['\n', ','])
            .map(|s| {
                s.trim()
                    .trim_start_matches(|c: char| c == '-' || c == '*' || c.is_ascii_digit())
                    .trim_start_matches(['.', ')'])
                    .to_string()
            })
            .collect(),
    };
    let mut out: Vec<String> = Vec::new();
    for k in raw {
        let k = k
            .trim()
            .trim_matches(|c: char| matches!(c, '"' | '\'' | '[' | ']'))
            .trim();
        if !k.is_empty() && !out.iter().any(|o| o.eq_ignore_ascii_case(k)) {
            out.push(k.to_string());
        }
        if out.len() == MAX_KEYWORDS {
            break;
        }
    }
    out
}

/// At most [`MAX_KEYWORDS`] search keywords; the whole question when the
/// model fails or returns none.
pub fn extract_query_keywords(llm: &Llm, question: &str) -> Vec<String> {
    let fallback = vec![question.trim().to_string()];
    let req = ChatRequest::new(vec![ChatMessage::user(
        KEYWORDS_USER.render(&[("question", question.trim())]),
    )]);
    match llm.text(&req) {
        Ok(text) => {
            let k = parse_keywords(&text);
            if k.is_empty() {
                fallback
            } else {
                k
            }
        }
        Err(_) => fallback,
    }
}

/// Prefix of at most `budget` characters, cut on a character boundary.
pub fn truncate_chars(text: &str, budget: usize) -> &str {
    match text.char_indices().nth(budget) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub topic_index: usize,
    pub keywords: Vec<String>,
    pub doc_ids: Vec<usize>,
    pub similarities: Vec<f64>,
    pub answer: String,
    /// False when the model failed and `answer` is a notice.
    pub answered: bool,
}

fn check_topic(state: &TopicModelState, index: usize) -> Result<(), LlmError> {
    if index < state.len() {
        Ok(())
    } else {
        Err(LlmError::InvalidTopicIndex {
            index,
            topics: state.len(),
        })
    }
}

/// Retrieval-augmented answer from the `k` documents of the topic closest to
/// the mean embedding of the question's keywords.
pub fn answer_question(
    llm: &Llm,
    state: &TopicModelState,
    services: &dyn TopicServices,
    topic_index: usize,
    question: &str,
    k: usize,
) -> Result<Answer, LlmError> {
    check_topic(state, topic_index)?;
    if question.trim().is_empty() {
        return Err(LlmError::EmptyInput);
    }
    let topic = &state.topics()[topic_index];
    let keywords = extract_query_keywords(llm, question);
    let vectors = services.embed_texts(&keywords)?;
    let query = mean_vector(&vectors).ok_or(LlmError::EmptyInput)?;
    let hits = knn_search(state.embeddings(), &topic.doc_ids, &query, k)?;

    let documents = hits
        .iter()
        .map(|h| {
            let text = &state.corpus().documents()[h.doc_id].text;
            format!(
                "[Document index {}]\n{}",
                h.doc_id,
                truncate_chars(text, DOC_CHAR_BUDGET)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let req = ChatRequest::new(vec![
        ChatMessage::system(ANSWER_SYSTEM.render(&[])),
        ChatMessage::user(ANSWER_USER.render(&[
            ("topic_index", &topic_index.to_string()),
            ("title", &topic.title),
            ("documents", &documents),
            ("question", question.trim()),
        ])),
    ]);
    let doc_ids: Vec<usize> = hits.iter().map(|h| h.doc_id).collect();
    let (answer, answered) = match llm.text(&req) {
        Ok(a) => (a, true),
        Err(e) => {
            tracing::warn!(error = %e, "answer generation failed");
            (
                format!(
                    "No answer could be generated because the language model is unavailable. The most relevant documents are {}.",
                    doc_ids.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
                ),
                false,
            )
        }
    };
    Ok(Answer {
        topic_index,
        keywords,
        similarities: hits.iter().map(|h| h.similarity).collect(),
        doc_ids,
        answer,
        answered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentifySource {
    OnlyTopic,
    Model,
    CentroidSimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifiedTopic {
    pub index: usize,
    pub source: IdentifySource,
}

/// The single distinct in-range integer in `text`, if there is exactly one.
fn parse_index(text: &str, topics: usize) -> Option<usize> {
    let mut found: Vec<usize> = text
        .split(|c: char| !c.is_ascii_digit())
        .filter_map(|s| s.parse().ok())
        .filter(|&i| i < topics)
        .collect();
    found.sort_unstable();
    found.dedup();
    (found.len() == 1).then(|| found[0])
}

/// Topic the query is about: asked of the model, or by centroid similarity
/// when the model fails or answers ambiguously.
pub fn identify_topic(
    llm: &Llm,
    state: &TopicModelState,
    services: &dyn TopicServices,
    query: &str,
) -> Result<IdentifiedTopic, LlmError> {
    if state.is_empty() {
        return Err(LlmError::InvalidTopicIndex {
            index: 0,
            topics: 0,
        });
    }
    if state.len() == 1 {
        return Ok(IdentifiedTopic {
            index: 0,
            source: IdentifySource::OnlyTopic,
        });
    }
    if query.trim().is_empty() {
        return Err(LlmError::EmptyInput);
    }
    let listing = state
        .topics()
        .iter()
        .map(|t| format!("{}. {}: {}", t.index, t.title, t.description))
        .collect::<Vec<_>>()
        .join("\n");
    let req = ChatRequest::new(vec![ChatMessage::user(
        IDENTIFY_USER.render(&[("topics", &listing), ("query", query.trim())]),
    )]);
    if let Ok(text) = llm.text(&req) {
        match parse_index(&text, state.len()) {
            Some(index) => {
                return Ok(IdentifiedTopic {
                    index,
                    source: IdentifySource::Model,
                })
            }
            None => tracing::warn!(raw = %text, "ambiguous topic identification"),
        }
    }
    let q = services.embed_query(query.trim())?;
    let mut best = (f64::NEG_INFINITY, 0);
    for t in state.topics() {
        let s = cosine_similarity(&t.centroid_full, &q).unwrap_or(0.0);
        if s > best.0 {
            best = (s, t.index);
        }
    }
    Ok(IdentifiedTopic {
        index: best.1,
        source: IdentifySource::CentroidSimilarity,
    })
}

/// The model's comparison of two topics, verbatim.
pub fn compare_topics(
    llm: &Llm,
    state: &TopicModelState,
    index_a: usize,
    index_b: usize,
) -> Result<String, LlmError> {
    check_topic(state, index_a)?;
    check_topic(state, index_b)?;
    if index_a == index_b {
        return Err(LlmError::SameTopic);
    }
    let (a, b) = (&state.topics()[index_a], &state.topics()[index_b]);
    let words = |t: &crate::topicstore::Topic| {
        t.topwords_tfidf
            .prefix(COMPARE_WORDS)
            .words()
            .collect::<Vec<_>>()
            .join(", ")
    };
    let (ia, ib) = (index_a.to_string(), index_b.to_string());
    let (wa, wb) = (words(a), words(b));
    let req = ChatRequest::new(vec![ChatMessage::user(COMPARE_USER.render(&[
        ("index_a", &ia),
        ("title_a", &a.title),
        ("description_a", &a.description),
        ("words_a", &wa),
        ("index_b", &ib),
        ("title_b", &b.title),
        ("description_b", &b.description),
        ("words_b", &wb),
    ]))]);
    llm.text(&req).map_err(|e| match e {
        LlmError::NoScriptMatch => LlmError::ProviderUnavailable("no scripted reply".into()),
        other => other,
    })
}
