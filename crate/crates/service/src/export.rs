use std::io::Write;

use serde::Serialize;
use topiclens_core::topicstore::TopicModelState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportRow {
    pub doc_id: usize,
    pub topic_index: usize,
    pub topic_title: String,
}

/// One row per document, in document order.
pub fn export_rows(state: &TopicModelState) -> Vec<ExportRow> {
    state
        .doc_topics()
        .into_iter()
        .enumerate()
        .map(|(doc_id, t)| ExportRow {
            doc_id,
            topic_index: t,
            topic_title: state.topics()[t].title.clone(),
        })
        .collect()
}

pub fn write_export<W: Write>(
    state: &TopicModelState,
    format: ExportFormat,
    out: W,
) -> anyhow::Result<()> {
    let rows = export_rows(state);
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        ExportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
