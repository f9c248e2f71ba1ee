//! Graph-to-region encoder: GIN node embeddings plus multi-sink flow positions,
//! pooled per scale into one box-like region per graph.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{init_linear, join, Linear, Mlp, ParamTree};
use crate::rng;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// GNN layers, one region scale each.
    pub k: usize,
    /// Node embedding width.
    pub d: usize,
    /// Region / position width before projection.
    pub region_dim: usize,
    /// Projected region width.
    pub out: usize,
    pub n_paths: usize,
    pub path_len: usize,
    pub label_vocab: usize,
    pub use_positions: bool,
    pub use_clamp: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            k: 8,
            d: 64,
            region_dim: 64,
            out: 32,
            n_paths: 5,
            path_len: 3,
            label_vocab: 1,
            use_positions: true,
            use_clamp: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("k", self.k),
            ("d", self.d),
            ("region_dim", self.region_dim),
            ("out", self.out),
            ("n_paths", self.n_paths),
            ("path_len", self.path_len),
            ("label_vocab", self.label_vocab),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn position_dim(&self) -> usize {
        self.n_paths * self.path_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T = Tensor> {
    pub input: Linear<T>,
    pub gin: Vec<Mlp<T>>,
    pub mlp_e: Mlp<T>,
    pub mlp_pe: Mlp<T>,
    pub proj: Linear<T>,
}

impl<T> ParamTree<T> for EncoderParams<T> {
    type Out<U> = EncoderParams<U>;

    fn try_map<U, E>(&self, prefix: &str, f: &mut dyn FnMut(&str, &T) -> Result<U, E>) -> Result<EncoderParams<U>, E> {
        Ok(EncoderParams {
            input: self.input.try_map(&join(prefix, "input"), f)?,
            gin: self
                .gin
                .iter()
                .enumerate()
                .map(|(i, m)| m.try_map(&join(prefix, &format!("gin{i}")), f))
                .collect::<Result<_, E>>()?,
            mlp_e: self.mlp_e.try_map(&join(prefix, "mlp_e"), f)?,
            mlp_pe: self.mlp_pe.try_map(&join(prefix, "mlp_pe"), f)?,
            proj: self.proj.try_map(&join(prefix, "proj"), f)?,
        })
    }
}

impl EncoderParams {
    pub fn init(cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        EncoderParams {
            input: init_linear(rng, cfg.label_vocab, cfg.d),
            gin: (0..cfg.k).map(|_| Mlp::init(rng, cfg.d, cfg.d, cfg.d)).collect(),
            mlp_e: Mlp::init(rng, cfg.d, cfg.region_dim, cfg.region_dim),
            mlp_pe: Mlp::init(rng, cfg.position_dim(), cfg.region_dim, cfg.region_dim),
            proj: init_linear(rng, cfg.region_dim, cfg.out),
        }
    }

    pub fn zeros(cfg: &EncoderConfig) -> Self {
        EncoderParams {
            input: Linear::zeros(cfg.label_vocab, cfg.d),
            gin: (0..cfg.k).map(|_| Mlp::zeros(cfg.d, cfg.d, cfg.d)).collect(),
            mlp_e: Mlp::zeros(cfg.d, cfg.region_dim, cfg.region_dim),
            mlp_pe: Mlp::zeros(cfg.position_dim(), cfg.region_dim, cfg.region_dim),
            proj: Linear::zeros(cfg.region_dim, cfg.out),
        }
    }
}

/// Per-node starting values of the flow networks, one column per network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SinkAssignment {
    n_paths: usize,
    values: Vec<f64>,
}

impl SinkAssignment {
    /// Rows are nodes; values must be finite and distinct within each column.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_paths = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n_paths == 0 || rows.iter().any(|r| r.len() != n_paths) {
            return Err(Error::InvalidGraph("sink assignment must be a non-empty rectangular matrix".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sink assignment".into()));
        }
        let a = SinkAssignment { n_paths, values };
        for c in 0..n_paths {
            let mut col: Vec<f64> = (0..a.num_nodes()).map(|v| a.get(v, c)).collect();
            col.sort_by(f64::total_cmp);
            if col.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!("sink column {c} has repeated values")));
            }
        }
        Ok(a)
    }

    /// Uniform(0,1) values drawn from the stream of graph `graph_id`; columns redrawn on ties.
    pub fn sample(num_nodes: usize, n_paths: usize, seed: u64, graph_id: u64) -> Self {
        let mut rng = rng::stream(seed, "sinks", graph_id);
        let mut values = vec![0.0; num_nodes * n_paths];
        for c in 0..n_paths {
            loop {
                let col: Vec<f64> = (0..num_nodes).map(|_| rng.gen::<f64>()).collect();
                let mut sorted = col.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).all(|w| w[0] < w[1]) && sorted.first().map_or(true, |&v| v > 0.0) {
                    for (v, x) in col.into_iter().enumerate() {
                        values[v * n_paths + c] = x;
                    }
                    break;
                }
            }
        }
        SinkAssignment { n_paths, values }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / self.n_paths
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn get(&self, node: usize, path: usize) -> f64 {
        self.values[node * self.n_paths + path]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n_paths).map(<[f64]>::to_vec).collect()
    }

    /// Moves row `v` to `perm[v]`, matching [`Graph::permute`].
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes() {
            return Err(Error::InvalidPermutation(format!(
                "length {} for {} nodes",
                perm.len(),
                self.num_nodes()
            )));
        }
        let mut values = vec![0.0; self.values.len()];
        for (v, &p) in perm.iter().enumerate() {
            if p >= perm.len() {
                return Err(Error::InvalidPermutation(format!("target {p} out of range")));
            }
            values[p * self.n_paths..(p + 1) * self.n_paths]
                .copy_from_slice(&self.values[v * self.n_paths..(v + 1) * self.n_paths]);
        }
        SinkAssignment::new(values.chunks(self.n_paths).map(<[f64]>::to_vec).collect())
    }
}

impl TryFrom<Vec<Vec<f64>>> for SinkAssignment {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SinkAssignment::new(rows)
    }
}

impl From<SinkAssignment> for Vec<Vec<f64>> {
    fn from(a: SinkAssignment) -> Self {
        a.rows()
    }
}

/// Multi-scale region of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRegion {
    /// `[k, out]`, one row per scale.
    pub region: Tensor,
    /// `[out]`, column mean of `region`.
    pub mean_region: Tensor,
    /// Nodes plus edges.
    pub size: usize,
    pub num_nodes: usize,
}

impl GraphRegion {
    pub fn from_rows(rows: Vec<Vec<f64>>, size: usize, num_nodes: usize) -> Result<Self> {
        let region = Tensor::from_rows(&rows)?;
        if rows.is_empty() || region.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Inconsistent("region entries must be positive and non-empty".into()));
        }
        let k = rows.len() as f64;
        let width = rows[0].len();
        let mean = (0..width)
            .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / k)
            .collect();
        Ok(GraphRegion {
            region,
            mean_region: Tensor::raw(vec![width], mean),
            size,
            num_nodes,
        })
    }

    pub fn k(&self) -> usize {
        self.region.shape()[0]
    }

    pub fn out(&self) -> usize {
        self.region.shape()[1]
    }
}

/// Landing points of every node after each of `path_len` flow steps.
///
/// Row `v` is `[s_v^1..s_v^j]` for network 0, then network 1, and so on.
/// A node takes the largest previous value among its neighbours (never its
/// own); an isolated node keeps its value.
pub fn multi_sink_propagation(g: &Graph, assign: &SinkAssignment, path_len: usize) -> Result<Tensor> {
    let n = g.num_nodes();
    if assign.num_nodes() != n {
        return Err(Error::shape(
            "multi_sink_propagation",
            format!("{} assignment rows for {n} nodes", assign.num_nodes()),
        ));
    }
    let p = assign.n_paths();
    let width = p * path_len;
    let mut out = vec![0.0; n * width];
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    for c in 0..p {
        for (v, x) in cur.iter_mut().enumerate() {
            *x = assign.get(v, c);
        }
        for step in 0..path_len {
            for v in 0..n {
                next[v] = g
                    .neighbors(v)
                    .iter()
                    .map(|&u| cur[u])
                    .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
                    .unwrap_or(cur[v]);
                out[v * width + c * path_len + step] = next[v];
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    Ok(Tensor::raw(vec![n, width], out))
}

/// Node lists and index maps for a disjoint union of graphs.
struct Packed {
    n: usize,
    graph_of: Vec<usize>,
    src: Vec<usize>,
    dst: Vec<usize>,
    one_hot: Tensor,
    positions: Tensor,
}

fn pack(cfg: &EncoderConfig, graphs: &[(&Graph, &SinkAssignment)]) -> Result<Packed> {
    let n: usize = graphs.iter().map(|(g, _)| g.num_nodes()).sum();
    let mut graph_of = Vec::with_capacity(n);
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    let mut one_hot = vec![0.0; n * cfg.label_vocab];
    let width = cfg.position_dim();
    let mut positions = Vec::with_capacity(n * width);
    let mut offset = 0;
    for (b, &(g, assign)) in graphs.iter().enumerate() {
        if assign.n_paths() != cfg.n_paths {
            return Err(Error::shape(
                "encode",
                format!("assignment has {} paths, config {}", assign.n_paths(), cfg.n_paths),
            ));
        }
        for v in 0..g.num_nodes() {
            let l = g.label(v) as usize;
            if l >= cfg.label_vocab {
                return Err(Error::OutOfRange {
                    op: "encode labels",
                    index: l,
                    bound: cfg.label_vocab,
                });
            }
            one_hot[(offset + v) * cfg.label_vocab + l] = 1.0;
            graph_of.push(b);
        }
        for &(u, v) in g.edges() {
            src.extend([offset + u, offset + v]);
            dst.extend([offset + v, offset + u]);
        }
        positions.extend_from_slice(multi_sink_propagation(g, assign, cfg.path_len)?.data());
        offset += g.num_nodes();
    }
    Ok(Packed {
        n,
        graph_of,
        src,
        dst,
        one_hot: Tensor::raw(vec![n, cfg.label_vocab], one_hot),
        positions: Tensor::raw(vec![n, width], positions),
    })
}

/// GIN layers: `x^l = MLP_l(x^{l-1}_v + Σ_{u∈N(v)} x^{l-1}_u) + x^{l-1}_v`.
/// `src`/`dst` list every edge in both directions.
pub fn gin_forward(
    tape: &mut Tape,
    layers: &[Mlp<Var>],
    x0: Var,
    src: &[usize],
    dst: &[usize],
) -> Result<Vec<Var>> {
    let n = tape.shape(x0).first().copied().unwrap_or(0);
    let mut x = x0;
    let mut scales = Vec::with_capacity(layers.len());
    for mlp in layers {
        let msgs = tape.gather_rows(x, src.to_vec())?;
        let agg = tape.segment_sum(msgs, dst.to_vec(), n)?;
        let agg = tape.add(x, agg)?;
        let h = mlp.forward(tape, agg)?;
        x = tape.add(h, x)?;
        scales.push(x);
    }
    Ok(scales)
}

/// Regions of a batch, still on the tape.
#[derive(Debug, Clone, Copy)]
pub struct EncodedBatch {
    /// `[B, k·out]`: scale rows laid side by side.
    pub regions: Var,
    /// `[B, out]`
    pub means: Var,
}

pub fn encode_on_tape(
    tape: &mut Tape,
    params: &EncoderParams<Var>,
    cfg: &EncoderConfig,
    graphs: &[(&Graph, &SinkAssignment)],
) -> Result<EncodedBatch> {
    if graphs.is_empty() {
        return Err(Error::Empty("encode batch"));
    }
    if params.gin.len() != cfg.k {
        return Err(Error::shape("encode", format!("{} GIN layers, config k = {}", params.gin.len(), cfg.k)));
    }
    let b = graphs.len();
    let packed = pack(cfg, graphs)?;
    let seg: std::sync::Arc<[usize]> = packed.graph_of.clone().into();

    let labels = tape.constant(packed.one_hot);
    let x0 = params.input.forward(tape, labels)?;
    let scales = gin_forward(tape, &params.gin, x0, &packed.src, &packed.dst)?;

    let (o, o_min) = if cfg.use_positions {
        let s = tape.constant(packed.positions);
        let o = params.mlp_pe.forward(tape, s)?;
        let o_min = if cfg.use_clamp {
            Some(tape.segment_min(o, &packed.graph_of, b)?)
        } else {
            None
        };
        (Some(o), o_min)
    } else {
        (None, None)
    };
    debug_assert_eq!(packed.n, packed.graph_of.len());

    let mut projected = Vec::with_capacity(cfg.k);
    for &x in &scales {
        let mut r = params.mlp_e.forward(tape, x)?;
        if let Some(o) = o {
            r = tape.add(r, o)?;
        }
        let mut pooled = tape.segment_sum(r, seg.clone(), b)?;
        if let Some(m) = o_min {
            pooled = tape.sub(pooled, m)?;
        }
        let z = params.proj.forward(tape, pooled)?;
        projected.push(tape.softplus(z));
    }
    let regions = tape.concat_cols(&projected)?;
    let mut total = projected[0];
    for &p in &projected[1..] {
        total = tape.add(total, p)?;
    }
    let means = tape.scale(total, 1.0 / cfg.k as f64);
    Ok(EncodedBatch { regions, means })
}

fn regions_from_batch(tape: &Tape, enc: EncodedBatch, cfg: &EncoderConfig, graphs: &[(&Graph, &SinkAssignment)]) -> Vec<GraphRegion> {
    let regions = tape.value(enc.regions);
    let means = tape.value(enc.means);
    graphs
        .iter()
        .enumerate()
        .map(|(i, (g, _))| GraphRegion {
            region: Tensor::raw(vec![cfg.k, cfg.out], regions.row(i).to_vec()),
            mean_region: Tensor::raw(vec![cfg.out], means.row(i).to_vec()),
            size: g.cardinality(),
            num_nodes: g.num_nodes(),
        })
        .collect()
}

fn check_params(params: &EncoderParams, cfg: &EncoderConfig) -> Result<()> {
    let expect = EncoderParams::zeros(cfg);
    let mut shapes = Vec::new();
    expect.for_each("", &mut |n, t| shapes.push((n.to_string(), t.shape().to_vec())));
    let mut i = 0;
    let mut bad = None;
    params.for_each("", &mut |n, t| {
        if bad.is_none() && shapes.get(i).map(|(_, s)| s.as_slice()) != Some(t.shape()) {
            bad = Some(n.to_string());
        }
        i += 1;
    });
    match bad {
        Some(name) => Err(Error::shape("encode", format!("parameter {name} does not fit the config"))),
        None if i != shapes.len() => Err(Error::shape("encode", "parameter count does not fit the config")),
        None => Ok(()),
    }
}

pub fn encode(g: &Graph, params: &EncoderParams, cfg: &EncoderConfig, assign: &SinkAssignment) -> Result<GraphRegion> {
    Ok(encode_batch(&[(g, assign)], params, cfg)?.remove(0))
}

const ENCODE_CHUNK: usize = 64;

/// Encodes many graphs, in parallel chunks; results are in input order and
/// identical to encoding each graph alone.
pub fn encode_batch(
    graphs: &[(&Graph, &SinkAssignment)],
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<Vec<GraphRegion>> {
    cfg.validate()?;
    check_params(params, cfg)?;
    let chunks: Vec<Vec<GraphRegion>> = graphs
        .par_chunks(ENCODE_CHUNK)
        .map(|chunk| {
            let mut tape = Tape::inference();
            let pv = crate::nn::to_tape(params, &mut tape);
            let enc = encode_on_tape(&mut tape, &pv, cfg, chunk)?;
            Ok(regions_from_batch(&tape, enc, cfg, chunk))
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// One line of the region cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionLine {
    id: usize,
    region: Vec<Vec<f64>>,
    size: usize,
    nodes: usize,
    assign: SinkAssignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedRegion {
    pub id: usize,
    pub region: GraphRegion,
    pub assign: SinkAssignment,
}

pub fn write_regions(w: impl Write, entries: &[CachedRegion]) -> Result<()> {
    let mut w = BufWriter::new(w);
    for e in entries {
        let line = RegionLine {
            id: e.id,
            region: e.region.region.to_rows(),
            size: e.region.size,
            nodes: e.region.num_nodes,
            assign: e.assign.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_regions(r: impl std::io::Read) -> Result<Vec<CachedRegion>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| Error::Parse { line: i + 1, msg };
        let rec: RegionLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if rec.assign.num_nodes() != rec.nodes {
            return Err(parse(format!("{} assignment rows for {} nodes", rec.assign.num_nodes(), rec.nodes)));
        }
        let region = GraphRegion::from_rows(rec.region, rec.size, rec.nodes).map_err(|e| parse(e.to_string()))?;
        if let Some(prev) = out.last() {
            let prev: &CachedRegion = prev;
            if prev.region.region.shape() != region.region.shape() {
                return Err(parse("region shape differs from earlier lines".into()));
            }
        }
        out.push(CachedRegion {
            id: rec.id,
            region,
            assign: rec.assign,
        });
    }
    Ok(out)
}

pub fn save_regions(path: impl AsRef<Path>, entries: &[CachedRegion]) -> Result<()> {
    write_regions(std::fs::File::create(path)?, entries)
}

pub fn load_regions(path: impl AsRef<Path>) -> Result<Vec<CachedRegion>> {
    read_regions(std::fs::File::open(path)?)
}
