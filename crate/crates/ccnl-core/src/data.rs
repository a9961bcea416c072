//! Corpus and embedding ingestion, tokenization, vocabulary building,
//! parallel pairing, splits, statistics, and the synthetic bilingual
//! corpus generator used for desk-scale runs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{CcnlError, Result};
use crate::layers::EmbeddingMatrix;
use crate::numerics::Tensor;
use crate::rng::SeededRng;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// A labeled text. Label 1 is the misogynistic/hateful class.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: u8,
}

/// A source text paired with its target-language translation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelExample {
    pub source: Example,
    pub target_text: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub total: usize,
    pub positives: usize,
    /// Misogynistic text rate: positives / total.
    pub mtr: f64,
}

/// Token-to-index map with reserved padding (0) and unknown (1) slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        assert_eq!(tokens[PAD_ID], PAD_TOKEN);
        assert_eq!(tokens[UNK_ID], UNK_TOKEN);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Vocabulary for a standalone embedding file, with no pad/unk
    /// convention — usable for lookups but not for corpus encoding.
    pub fn from_raw(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Append a token (used by the OOV expansion); returns its new id.
    pub fn push(&mut self, token: String) -> usize {
        debug_assert!(!self.index.contains_key(&token));
        let id = self.tokens.len();
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }
}

/// Column names expected in a corpus TSV.
#[derive(Debug, Clone)]
pub struct CorpusColumns {
    pub id: String,
    pub text: String,
    pub label: String,
}

impl Default for CorpusColumns {
    fn default() -> Self {
        CorpusColumns {
            id: "id".into(),
            text: "text".into(),
            label: "label".into(),
        }
    }
}

pub fn load_corpus(path: &Path, columns: &CorpusColumns) -> Result<Vec<Example>> {
    let content =
        fs::read_to_string(path).map_err(|e| CcnlError::io(path.display().to_string(), e))?;
    load_corpus_str(&content, columns, &path.display().to_string())
}

pub fn load_corpus_str(
    content: &str,
    columns: &CorpusColumns,
    file: &str,
) -> Result<Vec<Example>> {
    let mut lines = content.lines();
    let header = lines.next().ok_or_else(|| CcnlError::Parse {
        file: file.into(),
        line: 1,
        message: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or_else(|| CcnlError::Parse {
            file: file.into(),
            line: 1,
            message: format!("missing column '{name}' in header"),
        })
    };
    let (ci, ct, cl) = (find(&columns.id)?, find(&columns.text)?, find(&columns.label)?);

    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(CcnlError::Parse {
                file: file.into(),
                line: lineno,
                message: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let label = match fields[cl] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CcnlError::Parse {
                    file: file.into(),
                    line: lineno,
                    message: format!("unknown label '{other}' (expected 0 or 1)"),
                })
            }
        };
        out.push(Example {
            id: fields[ci].to_string(),
            text: fields[ct].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, examples: &[Example]) -> Result<()> {
    let mut s = String::from("id\ttext\tlabel\n");
    for e in examples {
        s.push_str(&format!("{}\t{}\t{}\n", e.id, e.text, e.label));
    }
    fs::write(path, s).map_err(|e| CcnlError::io(path.display().to_string(), e))
}

/// Tweet-aware tokenizer: lowercase, URLs and @-mentions collapsed to
/// marker tokens, hashtags split, punctuation separated.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.to_lowercase().split_whitespace() {
        if piece.starts_with("http://") || piece.starts_with("https://") || piece.starts_with("www.")
        {
            out.push("<url>".to_string());
            continue;
        }
        if piece.starts_with('@') && piece.len() > 1 {
            out.push("<user>".to_string());
            continue;
        }
        let mut rest = piece;
        if let Some(body) = rest.strip_prefix('#') {
            out.push("#".to_string());
            rest = body;
        }
        let mut word = String::new();
        for ch in rest.chars() {
            if ch.is_alphanumeric() || ch == '\'' {
                word.push(ch);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Frequency-ordered vocabulary (ties alphabetical) over tokenized corpora.
pub fn build_vocab<'a, I>(texts: I, min_count: usize) -> Vocab
where
    I: IntoIterator<Item = &'a str>,
{
    assert!(min_count >= 1);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in tokenize(text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, usize)> =
        counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(entries.into_iter().map(|(t, _)| t));
    Vocab::from_tokens(tokens)
}

/// Encode a text to padded/truncated token ids of length `max_len`.
pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokenize(text)
        .iter()
        .map(|t| vocab.id(t).unwrap_or(UNK_ID))
        .take(max_len)
        .collect();
    ids.resize(max_len, PAD_ID);
    ids
}

/// Load text-format embeddings ("token v1 .. ve" per line, optional
/// "V e" header). Vocab tokens absent from the file get seeded
/// uniform(-0.05, 0.05) rows; the padding row is forced to zero.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocab,
    dim: usize,
    rng: &mut SeededRng,
) -> Result<EmbeddingMatrix> {
    let content =
        fs::read_to_string(path).map_err(|e| CcnlError::io(path.display().to_string(), e))?;
    load_embeddings_str(&content, vocab, dim, rng, &path.display().to_string())
}

pub fn load_embeddings_str(
    content: &str,
    vocab: &Vocab,
    dim: usize,
    rng: &mut SeededRng,
    file: &str,
) -> Result<EmbeddingMatrix> {
    let mut matrix = Tensor::zeros(&[vocab.len(), dim]);
    // random init first, file rows overwrite
    for i in 1..vocab.len() {
        for j in 0..dim {
            matrix.set2(i, j, rng.uniform(-0.05, 0.05));
        }
    }
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap();
        let values: Vec<&str> = parts.collect();
        if lineno == 1 && values.len() == 1 && token.parse::<usize>().is_ok() {
            continue; // "V e" header
        }
        if values.len() != dim {
            return Err(CcnlError::Parse {
                file: file.into(),
                line: lineno,
                message: format!("expected {dim} vector values, found {}", values.len()),
            });
        }
        if let Some(row) = vocab.id(token) {
            if row == PAD_ID {
                continue;
            }
            for (j, v) in values.iter().enumerate() {
                let x: f64 = v.parse().map_err(|_| CcnlError::Parse {
                    file: file.into(),
                    line: lineno,
                    message: format!("bad float '{v}'"),
                })?;
                matrix.set2(row, j, x);
            }
        }
    }
    Ok(EmbeddingMatrix::new(matrix, vocab.clone(), true))
}

/// Random-initialized embeddings for runs without a pre-trained file.
pub fn random_embeddings(vocab: &Vocab, dim: usize, rng: &mut SeededRng) -> EmbeddingMatrix {
    let mut matrix = Tensor::zeros(&[vocab.len(), dim]);
    for i in 1..vocab.len() {
        for j in 0..dim {
            matrix.set2(i, j, rng.uniform(-0.05, 0.05));
        }
    }
    EmbeddingMatrix::new(matrix, vocab.clone(), true)
}

/// A standalone embedding file read as-is: the vocabulary is the file's
/// own token order, with no pad/unk rows added. `had_header` records
/// whether the file began with a "V e" count line so a rewrite can keep
/// the original layout.
#[derive(Debug, Clone)]
pub struct RawEmbeddings {
    pub tokens: Vec<String>,
    pub matrix: Tensor,
    pub had_header: bool,
}

impl RawEmbeddings {
    pub fn into_embedding_matrix(self) -> EmbeddingMatrix {
        EmbeddingMatrix::new(self.matrix, Vocab::from_raw(self.tokens), true)
    }
}

pub fn load_raw_embeddings(path: &Path) -> Result<RawEmbeddings> {
    let content =
        fs::read_to_string(path).map_err(|e| CcnlError::io(path.display().to_string(), e))?;
    load_raw_embeddings_str(&content, &path.display().to_string())
}

pub fn load_raw_embeddings_str(content: &str, file: &str) -> Result<RawEmbeddings> {
    let mut tokens = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    let mut had_header = false;
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap();
        let values: Vec<&str> = parts.collect();
        if lineno == 1 && values.len() == 1 && token.parse::<usize>().is_ok() {
            had_header = true;
            continue;
        }
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(CcnlError::Parse {
                file: file.into(),
                line: lineno,
                message: format!("expected {d} vector values, found {}", values.len()),
            });
        }
        for v in values {
            data.push(v.parse::<f64>().map_err(|_| CcnlError::Parse {
                file: file.into(),
                line: lineno,
                message: format!("bad float '{v}'"),
            })?);
        }
        tokens.push(token.to_string());
    }
    let dim = dim.ok_or_else(|| CcnlError::Parse {
        file: file.into(),
        line: 1,
        message: "embedding file has no vector rows".into(),
    })?;
    Ok(RawEmbeddings {
        matrix: Tensor::new(vec![tokens.len(), dim], data),
        tokens,
        had_header,
    })
}

pub fn save_raw_embeddings(path: &Path, emb: &EmbeddingMatrix, with_header: bool) -> Result<()> {
    let mut s = String::new();
    let dim = emb.dim();
    if with_header {
        s.push_str(&format!("{} {}\n", emb.vocab.len(), dim));
    }
    for (i, tok) in emb.vocab.tokens().iter().enumerate() {
        s.push_str(tok);
        for j in 0..dim {
            s.push_str(&format!(" {}", emb.vectors.value.at2(i, j)));
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CcnlError::io(path.display().to_string(), e))
}

pub fn save_embeddings(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let mut s = String::new();
    let dim = emb.dim();
    s.push_str(&format!("{} {}\n", emb.vocab.len(), dim));
    for (i, tok) in emb.vocab.tokens().iter().enumerate() {
        s.push_str(tok);
        for j in 0..dim {
            s.push_str(&format!(" {}", emb.vectors.value.at2(i, j)));
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CcnlError::io(path.display().to_string(), e))
}

/// Join source and translated corpora by id; the source label wins.
pub fn pair_parallel(source: &[Example], translation: &[Example]) -> Result<Vec<ParallelExample>> {
    if source.len() != translation.len() {
        return Err(CcnlError::Pairing(format!(
            "corpus sizes differ: {} source vs {} translated",
            source.len(),
            translation.len()
        )));
    }
    let by_id: HashMap<&str, &Example> =
        translation.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut out = Vec::with_capacity(source.len());
    for s in source {
        let t = by_id.get(s.id.as_str()).ok_or_else(|| {
            CcnlError::Pairing(format!("id '{}' missing from translation corpus", s.id))
        })?;
        out.push(ParallelExample {
            source: s.clone(),
            target_text: t.text.clone(),
            label: s.label,
        });
    }
    Ok(out)
}

/// Seeded shuffle-then-cut split into (train, validation).
pub fn split_train_val<T: Clone>(corpus: &[T], fraction: f64, rng: &mut SeededRng) -> (Vec<T>, Vec<T>) {
    assert!(fraction > 0.0 && fraction < 1.0);
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    rng.shuffle(&mut indices);
    let val_n = (corpus.len() as f64 * fraction).round() as usize;
    let val = indices[..val_n].iter().map(|&i| corpus[i].clone()).collect();
    let train = indices[val_n..].iter().map(|&i| corpus[i].clone()).collect();
    (train, val)
}

pub fn corpus_stats(labels: impl IntoIterator<Item = u8>) -> CorpusStats {
    let mut total = 0;
    let mut positives = 0;
    for l in labels {
        total += 1;
        if l == 1 {
            positives += 1;
        }
    }
    CorpusStats {
        total,
        positives,
        mtr: if total == 0 {
            0.0
        } else {
            positives as f64 / total as f64
        },
    }
}

/// Generator knobs for the synthetic bilingual corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub neutral_tokens: usize,
    pub hateful_tokens: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub positive_rate: f64,
    /// Probability that a positive text actually contains a hateful token.
    pub separability: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            neutral_tokens: 30,
            hateful_tokens: 6,
            min_len: 4,
            max_len: 10,
            positive_rate: 0.5,
            separability: 1.0,
        }
    }
}

/// Generate a paired (source, translation) corpus. The translation maps
/// every token through a fixed bijection, simulating a parallel corpus.
pub fn synth_corpus(
    n: usize,
    spec: &SynthSpec,
    seed: u64,
) -> Result<(Vec<Example>, Vec<Example>)> {
    if n < 2 {
        return Err(CcnlError::Config(format!("synthetic corpus needs n >= 2, got {n}")));
    }
    let mut rng = SeededRng::new(seed);
    let n_pos = (n as f64 * spec.positive_rate).round() as usize;
    let mut labels = vec![1u8; n_pos];
    labels.resize(n, 0);
    rng.shuffle(&mut labels);

    let mut source = Vec::with_capacity(n);
    let mut translation = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| format!("w{}", rng.below(spec.neutral_tokens)))
            .collect();
        if label == 1 && rng.bernoulli(spec.separability) {
            let pos = rng.below(tokens.len());
            tokens[pos] = format!("bad{}", rng.below(spec.hateful_tokens));
        }
        let text = tokens.join(" ");
        let translated: Vec<String> = tokens.iter().map(|t| format!("x{t}")).collect();
        let id = format!("s{i:05}");
        source.push(Example {
            id: id.clone(),
            text,
            label,
        });
        translation.push(Example {
            id,
            text: translated.join(" "),
            label,
        });
    }
    Ok((source, translation))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_corpus_empty() {
        let out = load_corpus_str("id\ttext\tlabel\n", &CorpusColumns::default(), "t").unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn load_corpus_roundtrip() {
        let content = "id\ttext\tlabel\na\thello world\t0\nb\tsome text\t1\n";
        let out = load_corpus_str(content, &CorpusColumns::default(), "t").unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].id, "a");
        assert_eq!(out[1].text, "some text");
        assert_eq!(out[1].label, 1);
    }

    #[test]
    fn load_corpus_bad_label() {
        let content = "id\ttext\tlabel\na\thello\t2\n";
        let err = load_corpus_str(content, &CorpusColumns::default(), "t").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn tokenize_case_folding() {
        assert_eq!(tokenize("Hello WORLD"), vec!["hello", "world"]);
    }

    #[test]
    fn tokenize_tweet_phenomena() {
        assert_eq!(
            tokenize("@user ben sasse is 100% correct"),
            vec!["<user>", "ben", "sasse", "is", "100", "%", "correct"]
        );
        assert_eq!(tokenize("#TVOI"), vec!["#", "tvoi"]);
        assert_eq!(tokenize("see https://example.com now"), vec!["see", "<url>", "now"]);
    }

    #[test]
    fn vocab_reserved_and_order() {
        let v = build_vocab(["a a b"], 1);
        assert_eq!(v.id("<pad>"), Some(0));
        assert_eq!(v.id("<unk>"), Some(1));
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
    }

    #[test]
    fn vocab_tie_break_alphabetical() {
        let v = build_vocab(["b b a a"], 1);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
    }

    #[test]
    fn vocab_empty_corpus() {
        let v = build_vocab([], 1);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn embeddings_missing_token_random_and_strict_dim() {
        let vocab = build_vocab(["cat dog"], 1);
        let content = "cat 1 2 3\n";
        let mut rng = SeededRng::new(1);
        let emb = load_embeddings_str(content, &vocab, 3, &mut rng, "t").unwrap();
        let cat = vocab.id("cat").unwrap();
        assert_eq!(emb.vectors.value.row(cat), &[1.0, 2.0, 3.0]);
        let dog = vocab.id("dog").unwrap();
        for v in emb.vectors.value.row(dog) {
            assert!(v.abs() <= 0.05 && *v != 0.0);
        }
        assert_eq!(emb.vectors.value.row(PAD_ID), &[0.0, 0.0, 0.0]);

        let bad = "cat 1 2\n";
        let err = load_embeddings_str(bad, &vocab, 3, &mut rng, "t").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn pairing_by_id_not_order() {
        let src = vec![
            Example { id: "a".into(), text: "one".into(), label: 0 },
            Example { id: "b".into(), text: "two".into(), label: 1 },
        ];
        let tr = vec![
            Example { id: "b".into(), text: "dos".into(), label: 1 },
            Example { id: "a".into(), text: "uno".into(), label: 0 },
        ];
        let pairs = pair_parallel(&src, &tr).unwrap();
        assert_eq!(pairs[0].target_text, "uno");
        assert_eq!(pairs[1].target_text, "dos");
    }

    #[test]
    fn pairing_missing_id() {
        let src = vec![Example { id: "a".into(), text: "one".into(), label: 0 }];
        let tr = vec![Example { id: "z".into(), text: "zzz".into(), label: 0 }];
        let err = pair_parallel(&src, &tr).unwrap_err();
        assert!(err.to_string().contains("'a'"), "{err}");
    }

    #[test]
    fn split_sizes_and_partition() {
        let corpus: Vec<u32> = (0..10).collect();
        let mut rng = SeededRng::new(3);
        let (train, val) = split_train_val(&corpus, 0.2, &mut rng);
        assert_eq!((train.len(), val.len()), (8, 2));
        let mut all: Vec<u32> = train.iter().chain(val.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, corpus);

        let mut rng2 = SeededRng::new(3);
        let (train2, val2) = split_train_val(&corpus, 0.2, &mut rng2);
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn stats_mtr() {
        let s = corpus_stats((0..1000).map(|i| if i < 460 { 1 } else { 0 }));
        assert!((s.mtr - 0.460).abs() < 1e-12);
        let s = corpus_stats((0..831).map(|i| if i < 415 { 1 } else { 0 }));
        assert!((s.mtr - 0.4994).abs() < 1e-3);
        let s = corpus_stats([0, 0, 0].into_iter());
        assert_eq!(s.mtr, 0.0);
    }

    #[test]
    fn synth_deterministic_and_separable() {
        let spec = SynthSpec::default();
        let (a1, b1) = synth_corpus(50, &spec, 9).unwrap();
        let (a2, _) = synth_corpus(50, &spec, 9).unwrap();
        assert_eq!(a1, a2);
        // separability 1.0: every positive has a hateful token, no negative does
        for e in &a1 {
            let has_bad = e.text.split(' ').any(|t| t.starts_with("bad"));
            assert_eq!(has_bad, e.label == 1, "{}", e.text);
        }
        // translation is token-wise bijection with matched ids
        assert_eq!(b1[0].id, a1[0].id);
        assert!(b1[0].text.split(' ').all(|t| t.starts_with('x')));
    }

    #[test]
    fn synth_rate_target() {
        let spec = SynthSpec {
            positive_rate: 0.446,
            ..SynthSpec::default()
        };
        let (src, _) = synth_corpus(3200, &spec, 11).unwrap();
        let stats = corpus_stats(src.iter().map(|e| e.label));
        assert!((stats.mtr - 0.446).abs() < 0.02);
    }
}
