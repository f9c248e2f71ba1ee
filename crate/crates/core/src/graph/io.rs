//! JSON graph files, JSON-lines datasets and pair-label files.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::oracle::{nged_target, nmcs_target};

/// Interned categorical node labels shared by every graph of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelDict {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl LabelDict {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub labels: LabelDict,
}

impl Dataset {
    pub fn unlabeled(graphs: Vec<Graph>) -> Self {
        Dataset {
            graphs,
            labels: LabelDict::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// One-hot width for the encoder; unlabeled datasets use a single label.
    pub fn label_vocab(&self) -> usize {
        self.labels.len().max(1)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodesJson {
    Count(usize),
    Labels(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    nodes: NodesJson,
    edges: Vec<[usize; 2]>,
}

fn graph_from_json(json: GraphJson, dict: &mut LabelDict) -> Result<Graph> {
    let (n, labels) = match json.nodes {
        NodesJson::Count(n) => (n, None),
        NodesJson::Labels(names) => {
            let ids: Vec<u32> = names.iter().map(|s| dict.intern(s)).collect();
            (ids.len(), Some(ids))
        }
    };
    Graph::new(n, json.edges.iter().map(|e| (e[0], e[1])), labels)
}

fn graph_to_json(g: &Graph, dict: &LabelDict) -> Result<GraphJson> {
    let nodes = match g.labels() {
        None => NodesJson::Count(g.num_nodes()),
        Some(ids) => NodesJson::Labels(
            ids.iter()
                .map(|&id| {
                    dict.name(id)
                        .map(str::to_owned)
                        .ok_or_else(|| Error::InvalidGraph(format!("label id {id} not in dictionary")))
                })
                .collect::<Result<_>>()?,
        ),
    };
    Ok(GraphJson {
        nodes,
        edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
    })
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: &str, lineno: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        msg: format!("column {}: {e}", e.column()),
    })
}

fn at_line(lineno: usize, e: Error) -> Error {
    match e {
        Error::InvalidGraph(m) => Error::InvalidGraph(format!("line {lineno}: {m}")),
        other => other,
    }
}

/// Reads a single graph file; labels are interned into a fresh dictionary.
pub fn load_graph(path: impl AsRef<Path>) -> Result<(Graph, LabelDict)> {
    let text = fs::read_to_string(path)?;
    let json: GraphJson = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: format!("column {}: {e}", e.column()),
    })?;
    let mut dict = LabelDict::default();
    let g = graph_from_json(json, &mut dict)?;
    Ok((g, dict))
}

pub fn save_graph(path: impl AsRef<Path>, g: &Graph, dict: &LabelDict) -> Result<()> {
    let json = graph_to_json(g, dict)?;
    fs::write(path, serde_json::to_string(&json).expect("graph json serializes") + "\n")?;
    Ok(())
}

/// Parses a JSON-lines dataset; graph index is the order of non-blank lines.
pub fn parse_dataset(reader: impl Read) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let json: GraphJson = parse_line(&line, i + 1)?;
        let g = graph_from_json(json, &mut ds.labels).map_err(|e| at_line(i + 1, e))?;
        ds.graphs.push(g);
    }
    Ok(ds)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset(fs::File::open(path)?)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for g in &ds.graphs {
        let json = graph_to_json(g, &ds.labels)?;
        serde_json::to_writer(&mut w, &json).expect("graph json serializes");
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// A labeled graph pair: oracle counts plus the derived regression targets.
///
/// Only the oracle counts are serialized; targets are recomputed against the
/// dataset on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPair {
    pub a: usize,
    pub b: usize,
    pub mcs_nodes: usize,
    pub mcs_edges: usize,
    pub ged: usize,
    #[serde(skip)]
    pub nmcs_target: f64,
    #[serde(skip)]
    pub nged_target: f64,
}

/// Alias kept for readers of the file format.
pub type PairRecord = LabeledPair;

impl LabeledPair {
    pub fn new(a: usize, b: usize, mcs_nodes: usize, mcs_edges: usize, ged: usize, ds: &Dataset) -> Result<Self> {
        let mut p = LabeledPair {
            a,
            b,
            mcs_nodes,
            mcs_edges,
            ged,
            nmcs_target: 0.0,
            nged_target: 0.0,
        };
        p.attach_targets(ds)?;
        Ok(p)
    }

    /// Validates the counts against the dataset and fills in the targets.
    pub fn attach_targets(&mut self, ds: &Dataset) -> Result<()> {
        let n = ds.len();
        let ga = ds.graphs.get(self.a).ok_or(Error::OutOfRange { op: "pair", index: self.a, bound: n })?;
        let gb = ds.graphs.get(self.b).ok_or(Error::OutOfRange { op: "pair", index: self.b, bound: n })?;
        if self.mcs_nodes > ga.num_nodes().min(gb.num_nodes())
            || self.mcs_edges > ga.num_edges().min(gb.num_edges())
        {
            return Err(Error::Inconsistent(format!(
                "pair ({},{}): mcs counts exceed graph sizes",
                self.a, self.b
            )));
        }
        self.nmcs_target = nmcs_target(ga, gb, self.mcs_nodes);
        self.nged_target = nged_target(ga, gb, self.ged);
        Ok(())
    }
}

pub fn read_pairs(reader: impl Read, ds: &Dataset) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut p: LabeledPair = parse_line(&line, i + 1)?;
        p.attach_targets(ds).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_pairs(path: impl AsRef<Path>, ds: &Dataset) -> Result<Vec<LabeledPair>> {
    read_pairs(fs::File::open(path)?, ds)
}

pub fn write_pairs(mut w: impl Write, pairs: &[LabeledPair]) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p).expect("pair json serializes");
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_pairs(path: impl AsRef<Path>, pairs: &[LabeledPair]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_pairs(&mut w, pairs)?;
    w.flush()?;
    Ok(())
}
