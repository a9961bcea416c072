//! Lexicon-driven embedding refinement. A hate lexicon plus a ranked
//! relation list define a neighbor graph over the embedding vocabulary;
//! retrofitting then pulls each listed word toward its neighbors while
//! staying close to its original (distributional) vector. Lexicon words
//! missing from the embedding vocabulary get a proxy vector first so the
//! model can still see them at run time.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{CcnlError, Result};
use crate::layers::EmbeddingMatrix;
use crate::numerics::Tensor;

pub const DEFAULT_MAX_NEIGHBORS: usize = 5;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_ALPHA: f64 = 1.0;

/// One lexicon row: a (lowercased) token, optionally tagged with a
/// category label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub token: String,
    pub category: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
}

impl Lexicon {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.token.as_str())
    }
}

/// Parse `token` or `token<TAB>category` lines; blank lines and lines
/// starting with `#` are skipped. Tokens are lowercased and deduplicated
/// (first category wins).
pub fn parse_lexicon(text: &str, file: &str) -> Result<Lexicon> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (token, category) = match line.split_once('\t') {
            Some((t, c)) => (t, Some(c.trim().to_string())),
            None => (line, None),
        };
        let token = token.trim().to_lowercase();
        if token.is_empty() {
            return Err(CcnlError::Parse {
                file: file.into(),
                line: n + 1,
                message: "empty token".into(),
            });
        }
        if seen.insert(token.clone()) {
            entries.push(LexiconEntry { token, category });
        }
    }
    Ok(Lexicon { entries })
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let text = fs::read_to_string(path).map_err(|e| CcnlError::io(path.display().to_string(), e))?;
    parse_lexicon(&text, &path.display().to_string())
}

/// Parse `headword<TAB>neighbor,neighbor,...` lines; the neighbor list
/// is ordered from most to least related.
pub fn parse_relations(text: &str, file: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, rest) = line.split_once('\t').ok_or_else(|| CcnlError::Parse {
            file: file.into(),
            line: n + 1,
            message: "expected 'headword<TAB>neighbor,...'".into(),
        })?;
        let neighbors: Vec<String> = rest
            .split(',')
            .map(|t| t.trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        out.push((head.trim().to_lowercase(), neighbors));
    }
    Ok(out)
}

pub fn load_relations(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| CcnlError::io(path.display().to_string(), e))?;
    parse_relations(&text, &path.display().to_string())
}

/// Adjacency lists over embedding rows. Rows absent from the lists are
/// isolated and retrofitting leaves them untouched.
#[derive(Debug, Clone, Default)]
pub struct NeighborGraph {
    pub neighbors: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn with_nodes(n: usize) -> Self {
        NeighborGraph {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Undirected edge; duplicates and self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        if !self.neighbors[a].contains(&b) {
            self.neighbors[a].push(b);
        }
        if !self.neighbors[b].contains(&a) {
            self.neighbors[b].push(a);
        }
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Neighbor graph for retrofitting, with out-of-vocabulary expansion.
///
/// For each lexicon word already in the embedding vocabulary, the top
/// `max_neighbors` in-vocabulary words from its relation list become
/// edges. Lexicon words missing from the vocabulary are added: their
/// vector is the mean of their in-vocabulary relation neighbors (words
/// with no usable neighbor are skipped entirely), and their edges go to
/// the `max_neighbors` nearest original rows by cosine similarity.
pub fn build_graph(
    embeddings: &mut EmbeddingMatrix,
    lexicon: &Lexicon,
    relations: &[(String, Vec<String>)],
    max_neighbors: usize,
) -> NeighborGraph {
    let relation_index: HashMap<&str, &Vec<String>> = relations
        .iter()
        .map(|(h, ns)| (h.as_str(), ns))
        .collect();
    let original_rows = embeddings.vocab.len();
    let dim = embeddings.dim();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut new_rows: Vec<Vec<f64>> = Vec::new();

    for entry in &lexicon.entries {
        let related = relation_index.get(entry.token.as_str());
        match embeddings.vocab.id(&entry.token) {
            Some(id) => {
                if let Some(related) = related {
                    for other in related
                        .iter()
                        .filter_map(|t| embeddings.vocab.id(t))
                        .filter(|&j| j != id)
                        .take(max_neighbors)
                    {
                        edges.push((id, other));
                    }
                }
            }
            None => {
                let in_vocab: Vec<usize> = related
                    .map(|ns| ns.iter().filter_map(|t| embeddings.vocab.id(t)).collect())
                    .unwrap_or_default();
                if in_vocab.is_empty() {
                    continue;
                }
                let mut proxy = vec![0.0; dim];
                for &j in &in_vocab {
                    for (p, v) in proxy.iter_mut().zip(embeddings.vectors.value.row(j)) {
                        *p += v;
                    }
                }
                for p in &mut proxy {
                    *p /= in_vocab.len() as f64;
                }
                let id = embeddings.vocab.push(entry.token.clone());
                assert_eq!(id, original_rows + new_rows.len());
                // rank every original row by similarity to the proxy
                let mut ranked: Vec<(usize, f64)> = (0..original_rows)
                    .map(|j| (j, cosine(&proxy, embeddings.vectors.value.row(j))))
                    .collect();
                ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                for &(j, _) in ranked.iter().take(max_neighbors) {
                    edges.push((id, j));
                }
                new_rows.push(proxy);
            }
        }
    }

    if !new_rows.is_empty() {
        let mut data = embeddings.vectors.value.data().to_vec();
        for row in &new_rows {
            data.extend_from_slice(row);
        }
        let total = original_rows + new_rows.len();
        embeddings.vectors.value = Tensor::new(vec![total, dim], data);
        embeddings.vectors.gradient = Tensor::zeros(&[total, dim]);
    }

    let mut graph = NeighborGraph::with_nodes(embeddings.vocab.len());
    for (a, b) in edges {
        graph.add_edge(a, b);
    }
    graph
}

/// Energy the update rule descends:
/// sum_i alpha * deg(i) * |q_i - qhat_i|^2 + sum_{edges (i,j)} |q_i - q_j|^2
/// (each undirected edge counted once). The synchronous update below is
/// a Jacobi sweep for the linear system ((alpha+1)D - A) q = alpha D qhat
/// whose quadratic form this is; (alpha+1)D + A is diagonally dominant,
/// which makes every sweep non-increasing in this energy.
pub fn objective(q: &Tensor, q_hat: &Tensor, graph: &NeighborGraph, alpha: f64) -> f64 {
    assert_eq!(q.shape(), q_hat.shape());
    assert_eq!(q.rows(), graph.neighbors.len());
    let mut total = 0.0;
    for i in 0..q.rows() {
        let qi = q.row(i);
        let deg = graph.degree(i) as f64;
        total += alpha
            * deg
            * qi
                .iter()
                .zip(q_hat.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        for &j in &graph.neighbors[i] {
            // each edge appears in both adjacency lists, so halve it
            total += 0.5
                * qi
                    .iter()
                    .zip(q.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
        }
    }
    total
}

/// Synchronous retrofitting:
/// q_i <- (alpha * qhat_i + sum_j beta_ij q_j) / (alpha + sum_j beta_ij)
/// with beta_ij = 1/deg(i), every node updated from the previous
/// iterate. Isolated nodes are never written. Returns the objective
/// after each iteration, starting with the initial value.
pub fn retrofit(
    q: &mut Tensor,
    graph: &NeighborGraph,
    iterations: usize,
    alpha: f64,
) -> Vec<f64> {
    assert_eq!(q.rows(), graph.neighbors.len());
    let q_hat = q.clone();
    let dim = q.cols();
    let mut trace = vec![objective(q, &q_hat, graph, alpha)];
    for _ in 0..iterations {
        let prev = q.clone();
        for i in 0..q.rows() {
            let deg = graph.degree(i);
            if deg == 0 {
                continue;
            }
            let beta = 1.0 / deg as f64;
            let mut acc: Vec<f64> = q_hat.row(i).iter().map(|v| alpha * v).collect();
            for &j in &graph.neighbors[i] {
                for (a, v) in acc.iter_mut().zip(prev.row(j)) {
                    *a += beta * v;
                }
            }
            let denom = alpha + beta * deg as f64;
            for (k, a) in acc.iter().enumerate() {
                q.set2(i, k, a / denom);
            }
            let _ = dim;
        }
        trace.push(objective(q, &q_hat, graph, alpha));
    }
    trace
}

/// Convenience wrapper operating on an embedding matrix in place.
pub fn retrofit_embeddings(
    embeddings: &mut EmbeddingMatrix,
    graph: &NeighborGraph,
    iterations: usize,
    alpha: f64,
) -> Vec<f64> {
    retrofit(&mut embeddings.vectors.value, graph, iterations, alpha)
}
