use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kb::EntityId;

pub const ENTITY_PREFIX: &str = "ent:";

/// A vocabulary item. Words and entities live in disjoint namespaces.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Word(String),
    Entity(EntityId),
}

impl Symbol {
    pub fn is_entity(&self) -> bool {
        matches!(self, Symbol::Entity(_))
    }

    /// File form: entities get the `ent:` prefix; words that would collide
    /// with it (or start with a backslash) are escaped with a backslash.
    pub fn encode(&self) -> String {
        match self {
            Symbol::Entity(e) => format!("{ENTITY_PREFIX}{}", e.0),
            Symbol::Word(w) if w.starts_with(ENTITY_PREFIX) || w.starts_with('\\') => format!("\\{w}"),
            Symbol::Word(w) => w.clone(),
        }
    }

    pub fn decode(s: &str) -> Symbol {
        if let Some(rest) = s.strip_prefix('\\') {
            Symbol::Word(rest.to_string())
        } else if let Some(id) = s.strip_prefix(ENTITY_PREFIX) {
            Symbol::Entity(EntityId::new(id))
        } else {
            Symbol::Word(s.to_string())
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// One vector space for words and entities.
///
/// `vectors` are the input (query) vectors used for distances; `context`
/// holds the output vectors of the skip-gram objective and is not persisted.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    symbols: Vec<Symbol>,
    index: HashMap<Symbol, usize>,
    pub(crate) vectors: Vec<f64>,
    pub(crate) context: Vec<f64>,
    pub(crate) counts: Vec<u64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            symbols: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            context: Vec::new(),
            counts: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn row_of(&self, s: &Symbol) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.vectors[r * d..(r + 1) * d]
    }

    pub fn get(&self, s: &Symbol) -> Option<&[f64]> {
        self.row_of(s).map(|r| self.row(r))
    }

    pub fn word(&self, w: &str) -> Option<&[f64]> {
        self.get(&Symbol::Word(w.to_string()))
    }

    pub fn entity(&self, e: &EntityId) -> Option<&[f64]> {
        self.get(&Symbol::Entity(e.clone()))
    }

    pub fn count(&self, r: usize) -> u64 {
        self.counts[r]
    }

    /// Rows holding entity symbols, in vocabulary order.
    pub fn entity_rows(&self) -> Vec<usize> {
        (0..self.symbols.len()).filter(|&r| self.symbols[r].is_entity()).collect()
    }

    /// Adds `sym` with a uniform `[-0.5/d, 0.5/d]` vector and zero context
    /// vector; returns the existing row if present.
    pub fn insert<R: Rng>(&mut self, sym: Symbol, rng: &mut R) -> usize {
        if let Some(r) = self.index.get(&sym) {
            return *r;
        }
        let bound = 0.5 / self.dim as f64;
        let v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert_with(sym, &v)
    }

    pub fn insert_with(&mut self, sym: Symbol, v: &[f64]) -> usize {
        debug_assert_eq!(v.len(), self.dim);
        if let Some(&r) = self.index.get(&sym) {
            self.row_mut(r).copy_from_slice(v);
            return r;
        }
        let r = self.symbols.len();
        self.index.insert(sym.clone(), r);
        self.symbols.push(sym);
        self.vectors.extend_from_slice(v);
        self.context.extend(std::iter::repeat_n(0.0, self.dim));
        self.counts.push(0);
        r
    }

    /// Mean of the in-vocabulary word vectors of a whitespace-split phrase.
    pub fn phrase_vector(&self, phrase: &str) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for w in phrase.split_whitespace() {
            if let Some(v) = self.word(w) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        Some(acc.into_iter().map(|a| a / n as f64).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().chain(&self.context).all(|v| v.is_finite())
    }

    /// Writes `count dim` then one `symbol v1 .. vd` line per row.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.len(), self.dim).map_err(io)?;
        for (r, s) in self.symbols.iter().enumerate() {
            let enc = s.encode();
            if enc.is_empty() || enc.contains(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("symbol `{enc}` cannot be written")));
            }
            let vals: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{enc} {}", vals.join(" ")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let perr = |line: usize, msg: String| Error::Parse { file: path.display().to_string(), line, msg };
        let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))?.map_err(|e| Error::io(path, e))?;
        let mut hp = header.split_whitespace().map(|x| x.parse::<usize>());
        let (count, dim) = match (hp.next(), hp.next()) {
            (Some(Ok(c)), Some(Ok(d))) if d > 0 => (c, d),
            _ => return Err(perr(1, format!("bad header `{header}`"))),
        };
        let mut t = EmbeddingTable::new(dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let sym = Symbol::decode(parts.next().unwrap_or_default());
            let v: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(i + 2, "bad float".into()))?;
            if v.len() != dim {
                return Err(perr(i + 2, format!("expected {dim} values, found {}", v.len())));
            }
            if t.row_of(&sym).is_some() {
                return Err(perr(i + 2, format!("duplicate symbol `{sym}`")));
            }
            t.insert_with(sym, &v);
        }
        if t.len() != count {
            return Err(perr(1, format!("header announces {count} symbols, found {}", t.len())));
        }
        Ok(t)
    }
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_round_trip_with_escapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = EmbeddingTable::new(3);
        for s in [
            Symbol::Word("alpha".into()),
            Symbol::Word("ent:fake".into()),
            Symbol::Word("\\odd".into()),
            Symbol::Entity(EntityId::new("Q1")),
        ] {
            t.insert(s, &mut rng);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        t.save(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("4 3\n"));
        assert!(text.contains("\nent:Q1 "));
        let back = EmbeddingTable::load(&p).unwrap();
        assert_eq!(back.symbols(), t.symbols());
        assert_eq!(back.vectors, t.vectors);
    }

    #[test]
    fn phrase_vector_mean_and_oov() {
        let mut t = EmbeddingTable::new(2);
        t.insert_with(Symbol::Word("a".into()), &[1.0, 0.0]);
        t.insert_with(Symbol::Word("b".into()), &[0.0, 1.0]);
        assert_eq!(t.phrase_vector("a b zz").unwrap(), vec![0.5, 0.5]);
        assert!(t.phrase_vector("zz yy").is_none());
    }
}
