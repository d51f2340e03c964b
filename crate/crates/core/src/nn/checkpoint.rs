//! Versioned text container for named tensors plus string metadata.
//!
//! ```text
//! kbc-checkpoint 1
//! meta <key> <count>
//! <one item per line, count lines>
//! tensor <name> <trainable 0|1> <rank> <dim>...
//! <values, space separated, LowerExp formatting>
//! end
//! ```
//!
//! Values are written with `{:e}`, which round-trips `f64` exactly.

use std::collections::BTreeMap;
use std::path::Path;

use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "kbc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, Vec<String>>,
    pub store: ParamStore,
}

impl Checkpoint {
    pub fn new(store: ParamStore) -> Self {
        Checkpoint { meta: BTreeMap::new(), store }
    }

    pub fn with_meta(mut self, key: &str, items: Vec<String>) -> Self {
        self.meta.insert(key.to_string(), items);
        self
    }

    pub fn meta(&self, key: &str) -> Result<&[String]> {
        self.meta
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("{MAGIC} {VERSION}\n");
        for (k, items) in &self.meta {
            if k.contains(char::is_whitespace) {
                return Err(Error::Checkpoint(format!("metadata key `{k}` contains whitespace")));
            }
            out.push_str(&format!("meta {k} {}\n", items.len()));
            for it in items {
                if it.contains('\n') {
                    return Err(Error::Checkpoint(format!("metadata item in `{k}` contains a newline")));
                }
                out.push_str(it);
                out.push('\n');
            }
        }
        for p in self.store.iter() {
            if p.name.contains(char::is_whitespace) {
                return Err(Error::Checkpoint(format!("tensor name `{}` contains whitespace", p.name)));
            }
            let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
            out.push_str(&format!(
                "tensor {} {} {} {}\n",
                p.name,
                u8::from(p.trainable),
                dims.len(),
                dims.join(" ")
            ));
            let vals: Vec<String> = p.value.data().iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint".into()))?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some(MAGIC) {
            return Err(bad(format!("bad header `{header}`")));
        }
        let version: u32 = hp.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing version".into()))?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let mut ck = Checkpoint::default();
        while let Some(line) = lines.next() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("end") => return Ok(ck),
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad("meta without key".into()))?.to_string();
                    let n: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("meta without count".into()))?;
                    let mut items = Vec::with_capacity(n);
                    for _ in 0..n {
                        items.push(lines.next().ok_or_else(|| bad(format!("truncated meta `{key}`")))?.to_string());
                    }
                    ck.meta.insert(key, items);
                }
                Some("tensor") => {
                    let name = parts.next().ok_or_else(|| bad("tensor without name".into()))?.to_string();
                    let trainable = parts.next() == Some("1");
                    let rank: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("bad rank for `{name}`")))?;
                    let dims: Vec<usize> = parts.take(rank).map(|d| d.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad(format!("bad dims for `{name}`")))?;
                    if dims.len() != rank {
                        return Err(bad(format!("bad dims for `{name}`")));
                    }
                    let vals = lines.next().ok_or_else(|| bad(format!("missing values for `{name}`")))?;
                    let data: Vec<f64> = vals
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(format!("bad value in `{name}`")))?;
                    let t = Tensor::from_vec(&dims, data)?;
                    if trainable {
                        ck.store.add(name, t);
                    } else {
                        ck.store.add_frozen(name, t);
                    }
                }
                Some(other) => return Err(bad(format!("unexpected record `{other}`"))),
                None => continue,
            }
        }
        Err(bad("missing end marker".into()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
