//! On-disk formats: the graph container, JSONL record types and helpers.
//!
//! Every JSONL record keeps fields it does not know about, so files written by
//! newer tools survive a read/write cycle.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::action_space::XmlError;
use crate::episode::EpisodeTrace;
use crate::geometry::ScreenSize;
use crate::model::{Action, Edge, GraphError, GuiFlow, GuiGraph, GuiPage, SubtaskKind};
use crate::reward::PreferencePair;

pub const GRAPH_FILE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unsupported graph file version {0}")]
    Version(u32),
    #[error("page {page:?}: {source}")]
    Xml { page: String, source: XmlError },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub page_id: String,
    pub xml: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screenshot_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

/// Graph container. The canonical form lists pages by id and edges in graph
/// order, pretty-printed with a trailing newline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub version: u32,
    pub screen: ScreenSize,
    pub home: String,
    pub pages: Vec<PageRecord>,
    pub edges: Vec<Edge>,
}

impl GraphFile {
    pub fn from_graph(g: &GuiGraph) -> Self {
        Self {
            version: GRAPH_FILE_VERSION,
            screen: g.screen(),
            home: g.home().to_string(),
            pages: g
                .pages()
                .map(|p| PageRecord {
                    page_id: p.page_id().to_string(),
                    xml: p.xml().to_string(),
                    screenshot_ref: p.screenshot_ref().map(str::to_string),
                    caption: p.caption().map(str::to_string),
                })
                .collect(),
            edges: g.edges().to_vec(),
        }
    }

    /// Builds the graph, checking referential integrity and that every edge
    /// action is in its source page's action space.
    pub fn into_graph(self) -> Result<GuiGraph, IoError> {
        if self.version != GRAPH_FILE_VERSION {
            return Err(IoError::Version(self.version));
        }
        let mut pages = Vec::with_capacity(self.pages.len());
        for rec in self.pages {
            let mut page = GuiPage::new(rec.page_id.clone(), rec.xml, self.screen)
                .map_err(|source| IoError::Xml { page: rec.page_id.clone(), source })?;
            if let Some(s) = rec.screenshot_ref {
                page = page.with_screenshot(s);
            }
            if let Some(c) = rec.caption {
                page = page.with_caption(c);
            }
            pages.push(page);
        }
        Ok(GuiGraph::new(self.screen, self.home, pages, self.edges)?)
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph files serialize");
        s.push('\n');
        s
    }
}

pub fn read_graph(text: &str) -> Result<GuiGraph, IoError> {
    GraphFile::parse(text)?.into_graph()
}

pub fn graph_to_string(g: &GuiGraph) -> String {
    GraphFile::from_graph(g).to_canonical_string()
}

/// Parses one JSON value per non-blank line. Errors carry 1-based line
/// numbers.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IoError::Line { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, records: &[T]) -> Result<(), IoError> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn jsonl_string<T: Serialize>(records: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    #[serde(flatten)]
    pub flow: GuiFlow,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl From<GuiFlow> for FlowRecord {
    fn from(flow: GuiFlow) -> Self {
        Self { flow, extra: Map::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRecord {
    pub kind: SubtaskKind,
    pub target_page: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_action: Option<Action>,
    pub task: String,
    /// Index of the flow in the input file.
    pub source_flow: usize,
    pub pages: usize,
    pub jaccard_threshold: f64,
    pub flow: GuiFlow,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefRecord {
    #[serde(flatten)]
    pub pair: PreferencePair,
    /// Golden actions taken before this step.
    pub history: Vec<Action>,
    pub source_flow: usize,
    pub max_search_depth: usize,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(flatten)]
    pub trace: EpisodeTrace,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// `step,loss` CSV.
pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::synth::{random_graph, SynthConfig};
    use proptest::prelude::*;

    #[test]
    fn graph_file_round_trip_is_byte_identical() {
        let g = fixtures::shopping_graph();
        let text = graph_to_string(&g);
        let back = read_graph(&text).unwrap();
        assert_eq!(graph_to_string(&back), text);
        assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn graph_file_checks_references() {
        let mut file = GraphFile::from_graph(&fixtures::shopping_graph());
        file.edges[0].dst = "nowhere".into();
        assert!(matches!(file.clone().into_graph(), Err(IoError::Graph(GraphError::UnknownPage(_)))));
        file.version = 9;
        assert!(matches!(file.into_graph(), Err(IoError::Version(9))));
    }

    #[test]
    fn unknown_fields_survive() {
        let flow = fixtures::shopping_flow();
        let mut v = serde_json::to_value(&flow).unwrap();
        v["annotator"] = Value::from("a1");
        v["score"] = Value::from(0.5);
        let line = serde_json::to_string(&v).unwrap();
        let recs: Vec<FlowRecord> = read_jsonl(line.as_bytes()).unwrap();
        assert_eq!(recs[0].flow, flow);
        assert_eq!(recs[0].extra.len(), 2);
        assert_eq!(jsonl_string(&recs).trim_end(), line);
    }

    #[test]
    fn jsonl_errors_have_line_numbers() {
        let flow = serde_json::to_string(&fixtures::shopping_flow()).unwrap();
        let text = format!("{flow}\n\n{{broken\n");
        match read_jsonl::<FlowRecord, _>(text.as_bytes()) {
            Err(IoError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a line error, got {other:?}"),
        }
        assert!(read_jsonl::<FlowRecord, _>("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn loss_csv_layout() {
        assert_eq!(loss_csv(&[1.5, 0.25]), "step,loss\n0,1.5\n1,0.25\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_graphs_round_trip(seed in 0u64..1000) {
            let g = random_graph(&SynthConfig::default(), seed);
            let text = graph_to_string(&g);
            prop_assert_eq!(graph_to_string(&read_graph(&text).unwrap()), text);
        }
    }
}
