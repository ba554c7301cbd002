//! Topic modelling over document embeddings with LLM-written topic labels and
//! chat-driven topic refinement.
//!
//! The fitting pipeline embeds every document, reduces the embeddings,
//! clusters them with HDBSCAN, optionally merges clusters down to a requested
//! topic count, and extracts class-based TF-IDF top-words per topic. Fitted
//! topics can then be queried, compared, split, merged and deleted, directly
//! or through the function-calling [`chatrouter`].

pub mod chatrouter;
pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod llm;
pub mod pipeline;
pub mod points;
pub mod reduction;
pub mod synthetic;
pub mod topicstore;
pub mod topwords;

#[cfg(test)]
mod testutil;
