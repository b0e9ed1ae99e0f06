//! Immutable in-memory word-vector store.
//!
//! Vectors come either from the whitespace-separated text format used by the
//! public GloVe releases (one `token f1 ... fdim` line per word, most frequent
//! word first) or from the binary cache written by [`EmbeddingStore::save_cache`].
//!
//! Binary cache layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes   "SEMPRJ1\0"
//! dim       u32
//! count     u64
//! tokens    count x (u16 byte length, UTF-8 bytes)
//! matrix    count x dim f32, row-major
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"SEMPRJ1\0";

/// Default vocabulary cap: only the 500K most frequent words are kept.
pub const DEFAULT_VOCAB_LIMIT: usize = 500_000;

#[derive(Clone)]
pub struct EmbeddingStore {
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f32>,
    source_meta: String,
    duplicates_dropped: usize,
}

impl fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("dim", &self.dim)
            .field("len", &self.vocab.len())
            .field("source_meta", &self.source_meta)
            .finish()
    }
}

/// Two stores are equal when vocabulary order and every matrix bit agree.
/// Provenance text is not compared.
impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.vocab == other.vocab
            && self.matrix.len() == other.matrix.len()
            && self
                .matrix
                .iter()
                .zip(&other.matrix)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// How an item string was mapped to a vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// The normalized (lowercased, hyphen-joined) token was in the vocabulary.
    Direct(String),
    /// Mean of the constituent tokens' vectors.
    ConstituentMean(Vec<String>),
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Direct(token) => write!(f, "direct:{token}"),
            Resolution::ConstituentMean(parts) => write!(f, "mean:{}", parts.join("+")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResolvedItem {
    pub vector: Vec<f64>,
    pub resolution: Resolution,
}

/// Normalizes a token the way the store keys it.
pub fn normalize_token(token: &str) -> String {
    token.to_lowercase()
}

/// Normalizes an item name: lowercase, whitespace runs replaced by hyphens.
pub fn normalize_item(item: &str) -> String {
    item.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

struct StoreBuilder {
    dim: usize,
    limit: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f32>,
    duplicates: usize,
}

impl StoreBuilder {
    fn new(dim: usize, limit: usize) -> Self {
        let reserve = limit.min(1 << 20);
        StoreBuilder {
            dim,
            limit,
            vocab: Vec::with_capacity(reserve),
            index: HashMap::with_capacity(reserve),
            matrix: Vec::with_capacity(reserve.saturating_mul(dim)),
            duplicates: 0,
        }
    }

    /// Caller guarantees `values.len() == dim` and all values finite.
    fn push(&mut self, token: &str, values: impl IntoIterator<Item = f32>) {
        let token = normalize_token(token);
        if self.index.contains_key(&token) {
            self.duplicates += 1;
            return;
        }
        self.index.insert(token.clone(), self.vocab.len());
        self.vocab.push(token);
        self.matrix.extend(values);
    }

    fn finish(self, source_meta: String) -> EmbeddingStore {
        if self.duplicates > 0 {
            log::warn!(
                "{} duplicate token(s) after lowercasing dropped ({source_meta})",
                self.duplicates
            );
        }
        debug_assert!(self.vocab.len() <= self.limit);
        EmbeddingStore {
            dim: self.dim,
            vocab: self.vocab,
            index: self.index,
            matrix: self.matrix,
            source_meta,
            duplicates_dropped: self.duplicates,
        }
    }
}

impl EmbeddingStore {
    /// Parses a text embedding file, keeping the first `vocab_limit` lines.
    pub fn load_text(path: impl AsRef<Path>, vocab_limit: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_text(BufReader::with_capacity(1 << 20, file), path, vocab_limit)
    }

    /// Parses the text format from any buffered reader. `path` is only used in
    /// error messages and provenance.
    pub fn read_text<R: BufRead>(mut reader: R, path: &Path, vocab_limit: usize) -> Result<Self> {
        if vocab_limit == 0 {
            return Err(Error::invalid("vocabulary limit must be positive"));
        }
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };

        let mut builder: Option<StoreBuilder> = None;
        let mut line = String::new();
        let mut line_no = 0usize;
        let mut taken = 0usize;
        let mut row: Vec<f32> = Vec::new();

        while taken < vocab_limit {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let mut fields = line.split_ascii_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            row.clear();
            for field in fields {
                let v: f32 = field
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("invalid float {field:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(line_no, format!("non-finite value {field:?}")));
                }
                row.push(v);
            }
            let b = match builder.as_mut() {
                Some(b) => b,
                None => {
                    if row.is_empty() {
                        return Err(parse_err(line_no, "line has no vector values".into()));
                    }
                    builder.insert(StoreBuilder::new(row.len(), vocab_limit))
                }
            };
            if row.len() != b.dim {
                return Err(parse_err(
                    line_no,
                    format!("expected {} values, found {}", b.dim, row.len()),
                ));
            }
            b.push(token, row.iter().copied());
            taken += 1;
        }

        let builder = builder.ok_or_else(|| Error::EmptyEmbeddings(path.to_path_buf()))?;
        let meta = format!("{} (first {} lines, cap {})", path.display(), taken, vocab_limit);
        Ok(builder.finish(meta))
    }

    /// Builds a store from in-memory rows, applying the same normalization,
    /// duplicate and finiteness rules as the text parser.
    pub fn from_rows<S, I>(rows: I, source_meta: impl Into<String>) -> Result<Self>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, Vec<f32>)>,
    {
        let mut builder: Option<StoreBuilder> = None;
        for (i, (token, values)) in rows.into_iter().enumerate() {
            let token = token.as_ref();
            if token.is_empty() {
                return Err(Error::invalid(format!("row {i}: empty token")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} ({token}): non-finite value")));
            }
            let b = builder.get_or_insert_with(|| StoreBuilder::new(values.len(), usize::MAX));
            if values.is_empty() || values.len() != b.dim {
                return Err(Error::invalid(format!(
                    "row {i} ({token}): expected {} values, found {}",
                    b.dim,
                    values.len()
                )));
            }
            b.push(token, values);
        }
        let builder = builder.ok_or_else(|| Error::invalid("no rows"))?;
        Ok(builder.finish(source_meta.into()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn source_meta(&self) -> &str {
        &self.source_meta
    }

    /// Number of lines dropped because their lowercased token was already present.
    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index_of(token).is_some()
    }

    fn index_of(&self, token: &str) -> Option<usize> {
        if token.chars().any(char::is_uppercase) {
            self.index.get(&normalize_token(token)).copied()
        } else {
            self.index.get(token).copied()
        }
    }

    /// Returns the stored row for `lowercase(token)`.
    pub fn lookup(&self, token: &str) -> Result<&[f32]> {
        self.index_of(token)
            .map(|i| self.row(i))
            .ok_or_else(|| Error::NotInVocabulary(normalize_token(token)))
    }

    /// Maps a category item to a vector. Multi-word items try the hyphen-joined
    /// token first and fall back to the mean of their constituents.
    pub fn resolve_item(&self, item: &str) -> Result<ResolvedItem> {
        let joined = normalize_item(item);
        if joined.is_empty() {
            return Err(Error::invalid("empty item name"));
        }
        if let Some(i) = self.index_of(&joined) {
            return Ok(ResolvedItem {
                vector: self.row(i).iter().map(|&v| f64::from(v)).collect(),
                resolution: Resolution::Direct(joined),
            });
        }
        let parts: Vec<&str> = joined.split('-').filter(|p| !p.is_empty()).collect();
        if parts.len() < 2 {
            return Err(Error::Unresolvable(item.to_string()));
        }
        let mut sum = vec![0.0f64; self.dim];
        for part in &parts {
            let row = self
                .index_of(part)
                .map(|i| self.row(i))
                .ok_or_else(|| Error::Unresolvable(item.to_string()))?;
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += f64::from(v);
            }
        }
        let n = parts.len() as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        Ok(ResolvedItem {
            vector: sum,
            resolution: Resolution::ConstituentMean(parts.iter().map(|s| s.to_string()).collect()),
        })
    }

    /// Writes the store in the whitespace-separated text format. Values use
    /// the shortest representation that reads back to the same `f32`.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::io("<text>", e);
        for (i, token) in self.vocab.iter().enumerate() {
            w.write_all(token.as_bytes()).map_err(io)?;
            for v in self.row(i) {
                write!(w, " {v}").map_err(io)?;
            }
            w.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::with_capacity(1 << 20, file);
        self.write_cache(&mut w).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_cache<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::io("<cache>", e);
        let dim = u32::try_from(self.dim)
            .map_err(|_| Error::CacheFormat(format!("dimension {} exceeds u32", self.dim)))?;
        w.write_all(CACHE_MAGIC).map_err(io)?;
        w.write_all(&dim.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.vocab.len() as u64).to_le_bytes()).map_err(io)?;
        for token in &self.vocab {
            let len = u16::try_from(token.len()).map_err(|_| {
                Error::CacheFormat(format!("token of {} bytes exceeds u16 length", token.len()))
            })?;
            w.write_all(&len.to_le_bytes()).map_err(io)?;
            w.write_all(token.as_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(1 << 16);
        for chunk in self.matrix.chunks(1 << 14) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        Ok(())
    }

    pub fn load_cache(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut store = Self::read_cache(BufReader::with_capacity(1 << 20, file))?;
        store.source_meta = format!("{} (binary cache)", path.display());
        Ok(store)
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        fn exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
            r.read_exact(buf).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    Error::CacheFormat(format!("truncated file while reading {what}"))
                } else {
                    Error::io("<cache>", e)
                }
            })
        }

        let mut magic = [0u8; 8];
        exact(&mut r, &mut magic, "magic bytes")?;
        if &magic != CACHE_MAGIC {
            return Err(Error::CacheFormat("bad magic bytes".into()));
        }
        let mut b4 = [0u8; 4];
        exact(&mut r, &mut b4, "dimension")?;
        let dim = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        exact(&mut r, &mut b8, "vocabulary count")?;
        let count = usize::try_from(u64::from_le_bytes(b8))
            .map_err(|_| Error::CacheFormat("vocabulary count overflows".into()))?;
        if dim == 0 {
            return Err(Error::CacheFormat("zero dimension".into()));
        }
        let cells = count
            .checked_mul(dim)
            .ok_or_else(|| Error::CacheFormat("count x dim overflows".into()))?;

        let mut vocab = Vec::with_capacity(count.min(1 << 24));
        let mut index = HashMap::with_capacity(count.min(1 << 24));
        let mut b2 = [0u8; 2];
        let mut bytes = Vec::new();
        for i in 0..count {
            exact(&mut r, &mut b2, "token table")?;
            bytes.resize(u16::from_le_bytes(b2) as usize, 0);
            exact(&mut r, &mut bytes, "token table")?;
            let token = std::str::from_utf8(&bytes)
                .map_err(|_| Error::CacheFormat(format!("token {i} is not UTF-8")))?
                .to_string();
            if token.is_empty() {
                return Err(Error::CacheFormat(format!("token {i} is empty")));
            }
            if index.insert(token.clone(), i).is_some() {
                return Err(Error::CacheFormat(format!("duplicate token {token:?}")));
            }
            vocab.push(token);
        }

        let mut matrix = Vec::with_capacity(cells);
        let mut buf = vec![0u8; 1 << 20];
        while matrix.len() < cells {
            let want = ((cells - matrix.len()) * 4).min(buf.len());
            exact(&mut r, &mut buf[..want], "matrix payload")?;
            matrix.extend(
                buf[..want]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::CacheFormat("non-finite value in matrix".into()));
        }
        let mut extra = [0u8; 1];
        match r.read(&mut extra) {
            Ok(0) => {}
            Ok(_) => {
                return Err(Error::CacheFormat(
                    "payload longer than header count x dim".into(),
                ))
            }
            Err(e) => return Err(Error::io("<cache>", e)),
        }

        Ok(EmbeddingStore {
            dim,
            vocab,
            index,
            matrix,
            source_meta: "binary cache".into(),
            duplicates_dropped: 0,
        })
    }

    /// Opens either format, choosing by the leading magic bytes.
    pub fn open(path: impl AsRef<Path>, vocab_limit: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut head = [0u8; 8];
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
        if n == 8 && &head == CACHE_MAGIC {
            let store = Self::load_cache(path)?;
            if store.len() > vocab_limit {
                return Ok(store.truncated(vocab_limit));
            }
            Ok(store)
        } else {
            Self::load_text(path, vocab_limit)
        }
    }

    /// Keeps only the first `limit` words.
    pub fn truncated(&self, limit: usize) -> Self {
        let n = limit.min(self.len());
        let vocab = self.vocab[..n].to_vec();
        let index = vocab.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        EmbeddingStore {
            dim: self.dim,
            vocab,
            index,
            matrix: self.matrix[..n * self.dim].to_vec(),
            source_meta: format!("{} (cap {limit})", self.source_meta),
            duplicates_dropped: self.duplicates_dropped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, limit: usize) -> Result<EmbeddingStore> {
        EmbeddingStore::read_text(Cursor::new(text), Path::new("toy.txt"), limit)
    }

    const TOY: &str = "the 0.1 0.2 0.3 0.4\nDog 1.0 2.0 3.0 4.0\ncat -1 -2 -3 -4e-1\n";

    #[test]
    fn parses_toy_file() {
        let s = parse(TOY, 10).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.dim(), 4);
        assert_eq!(s.vocab(), ["the", "dog", "cat"]);
        assert_eq!(s.lookup("cat").unwrap(), &[-1.0, -2.0, -3.0, -0.4]);
    }

    #[test]
    fn vocab_limit_keeps_prefix() {
        let s = parse(TOY, 2).unwrap();
        assert_eq!(s.vocab(), ["the", "dog"]);
    }

    #[test]
    fn short_line_reports_line_number() {
        let err = parse("a 1 2 3 4\ncat 1.0 2.0\n", 10).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(parse("a 1 nan\n", 10), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("a 1 1e39\n", 10), Err(Error::Parse { .. })));
        assert!(matches!(parse("", 10), Err(Error::EmptyEmbeddings(_))));
    }

    #[test]
    fn duplicate_after_lowercase_keeps_first() {
        let s = parse("Apple 1 1\napple 2 2\nbanana 3 3\n", 10).unwrap();
        assert_eq!(s.vocab(), ["apple", "banana"]);
        assert_eq!(s.lookup("APPLE").unwrap(), &[1.0, 1.0]);
        assert_eq!(s.duplicates_dropped(), 1);
    }

    #[test]
    fn lookup_is_case_insensitive_and_exact() {
        let s = parse(TOY, 10).unwrap();
        assert_eq!(s.lookup("Dog").unwrap(), s.lookup("dog").unwrap());
        let first = s.lookup("the").unwrap();
        assert_eq!(first.as_ptr(), s.row(0).as_ptr());
        assert!(matches!(s.lookup("qzxv-nonword"), Err(Error::NotInVocabulary(_))));
    }

    #[test]
    fn resolve_item_direct_and_mean() {
        let s = EmbeddingStore::from_rows(
            [
                ("dog", vec![1.0f32, 2.0]),
                ("north", vec![1.0, 3.0]),
                ("dakota", vec![2.0, -1.0]),
                ("new-york", vec![9.0, 9.0]),
            ],
            "toy",
        )
        .unwrap();
        let dog = s.resolve_item("dog").unwrap();
        assert_eq!(dog.vector, vec![1.0, 2.0]);
        assert_eq!(dog.resolution, Resolution::Direct("dog".into()));

        // hand average: ((1+2)/2, (3-1)/2)
        let nd = s.resolve_item("North Dakota").unwrap();
        assert_eq!(nd.vector, vec![1.5, 1.0]);
        assert_eq!(
            nd.resolution,
            Resolution::ConstituentMean(vec!["north".into(), "dakota".into()])
        );
        assert_eq!(s.resolve_item("North-Dakota").unwrap().vector, vec![1.5, 1.0]);

        assert_eq!(s.resolve_item("New York").unwrap().vector, vec![9.0, 9.0]);
        assert!(matches!(s.resolve_item("zz qq"), Err(Error::Unresolvable(_))));
        assert!(matches!(s.resolve_item("north qq"), Err(Error::Unresolvable(_))));
    }

    #[test]
    fn cache_payload_size() {
        let s = parse(TOY, 10).unwrap();
        let mut buf = Vec::new();
        s.write_cache(&mut buf).unwrap();
        let header = 8 + 4 + 8;
        let tokens: usize = ["the", "dog", "cat"].iter().map(|t| 2 + t.len()).sum();
        assert_eq!(buf.len() - header - tokens, 3 * 4 * 4);
    }

    #[test]
    fn cache_round_trip_and_errors() {
        let s = parse(TOY, 10).unwrap();
        let mut buf = Vec::new();
        s.write_cache(&mut buf).unwrap();
        let back = EmbeddingStore::read_cache(Cursor::new(&buf)).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.lookup("dog").unwrap(), s.lookup("dog").unwrap());

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmbeddingStore::read_cache(Cursor::new(&bad)),
            Err(Error::CacheFormat(_))
        ));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(
            EmbeddingStore::read_cache(Cursor::new(truncated)),
            Err(Error::CacheFormat(_))
        ));
        let mut longer = buf.clone();
        longer.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(
            EmbeddingStore::read_cache(Cursor::new(&longer)),
            Err(Error::CacheFormat(_))
        ));
    }
}
