//! Typed triple store with a pairwise connection index.
//!
//! Entities are interned to dense indices on load so that connectivity
//! queries are a single hash lookup. The store is read-only after load
//! except for [`KnowledgeBase::add_triples`], which updates every index
//! atomically.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Type label given to entities whose type column is empty.
pub const UNTYPED: &str = "UNTYPED";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub String);

impl EntityId {
    pub fn new(s: impl Into<String>) -> Self {
        EntityId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl RelationId {
    pub fn new(s: impl Into<String>) -> Self {
        RelationId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub canonical_name: String,
    /// Always contains `canonical_name`.
    pub aliases: Vec<String>,
    pub entity_type: String,
}

impl Entity {
    pub fn new(id: impl Into<String>, entity_type: impl Into<String>, canonical_name: impl Into<String>) -> Self {
        let name = canonical_name.into();
        Entity { id: EntityId(id.into()), aliases: vec![name.clone()], canonical_name: name, entity_type: entity_type.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(s: impl Into<String>, r: impl Into<String>, o: impl Into<String>) -> Self {
        Triple {
            subject: EntityId(s.into()),
            relation: RelationId(r.into()),
            object: EntityId(o.into()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KbOptions {
    pub allow_reflexive: bool,
}

/// Entities, triples and the derived connection indexes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeBase {
    entities: Vec<Entity>,
    index: HashMap<EntityId, usize>,
    triples: BTreeSet<Triple>,
    /// Unordered pairs `(min, max)` of dense indices linked by any triple.
    connections: HashSet<(usize, usize)>,
    neighbors: Vec<BTreeSet<usize>>,
    pair_relations: HashMap<(usize, usize), BTreeSet<RelationId>>,
    relations: BTreeSet<RelationId>,
    options: KbOptions,
}

impl KnowledgeBase {
    pub fn new(options: KbOptions) -> Self {
        KnowledgeBase { options, ..Default::default() }
    }

    /// Builds a KB from in-memory parts, applying the same validation as
    /// [`load_kb`].
    pub fn from_parts(
        entities: impl IntoIterator<Item = Entity>,
        triples: impl IntoIterator<Item = Triple>,
        options: KbOptions,
    ) -> Result<Self> {
        let mut kb = KnowledgeBase::new(options);
        for e in entities {
            kb.insert_entity(e)?;
        }
        let triples: Vec<Triple> = triples.into_iter().collect();
        kb.add_triples(&triples)?;
        Ok(kb)
    }

    fn insert_entity(&mut self, mut e: Entity) -> Result<()> {
        if e.canonical_name.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("entity `{}` has an empty name", e.id)));
        }
        if self.index.contains_key(&e.id) {
            return Err(Error::DuplicateEntity(e.id.0));
        }
        if !e.aliases.contains(&e.canonical_name) {
            e.aliases.insert(0, e.canonical_name.clone());
        }
        if e.entity_type.is_empty() {
            e.entity_type = UNTYPED.to_string();
        }
        self.index.insert(e.id.clone(), self.entities.len());
        self.entities.push(e);
        self.neighbors.push(BTreeSet::new());
        Ok(())
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn relations(&self) -> &BTreeSet<RelationId> {
        &self.relations
    }

    pub fn options(&self) -> KbOptions {
        self.options
    }

    pub fn entity(&self, id: &EntityId) -> Result<&Entity> {
        self.idx(id).map(|i| &self.entities[i])
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.index.contains_key(id)
    }

    pub fn entity_type(&self, id: &EntityId) -> Result<&str> {
        Ok(&self.entity(id)?.entity_type)
    }

    /// Dense index of an entity (load order).
    pub fn idx(&self, id: &EntityId) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownEntity(id.0.clone()))
    }

    pub fn id_at(&self, idx: usize) -> &EntityId {
        &self.entities[idx].id
    }

    /// True iff some triple links `a` and `b` in either direction.
    pub fn connected(&self, a: &EntityId, b: &EntityId) -> Result<bool> {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        Ok(self.connected_idx(a, b))
    }

    pub fn connected_idx(&self, a: usize, b: usize) -> bool {
        self.connections.contains(&(a.min(b), a.max(b)))
    }

    /// True iff some triple has `a` as subject and `b` as object.
    pub fn connected_directed_idx(&self, a: usize, b: usize) -> bool {
        self.pair_relations.contains_key(&(a, b))
    }

    /// Number of distinct triples with `a` as subject and `b` as object.
    pub fn directed_multiplicity_idx(&self, a: usize, b: usize) -> usize {
        self.pair_relations.get(&(a, b)).map_or(0, |s| s.len())
    }

    /// Number of distinct triples between `a` and `b` in either direction.
    pub fn connection_multiplicity_idx(&self, a: usize, b: usize) -> usize {
        let fwd = self.pair_relations.get(&(a, b)).map_or(0, |s| s.len());
        if a == b {
            return fwd;
        }
        fwd + self.pair_relations.get(&(b, a)).map_or(0, |s| s.len())
    }

    /// Relations `r` with `(s, r, o)` in the store. Direction matters.
    pub fn relations_between(&self, s: &EntityId, o: &EntityId) -> Result<BTreeSet<RelationId>> {
        let (s, o) = (self.idx(s)?, self.idx(o)?);
        Ok(self.pair_relations.get(&(s, o)).cloned().unwrap_or_default())
    }

    /// 1-hop neighbours (either direction) as dense indices.
    pub fn neighbors_idx(&self, idx: usize) -> &BTreeSet<usize> {
        &self.neighbors[idx]
    }

    pub fn neighbors(&self, id: &EntityId) -> Result<Vec<&EntityId>> {
        let i = self.idx(id)?;
        Ok(self.neighbors[i].iter().map(|&j| self.id_at(j)).collect())
    }

    pub fn contains_triple(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    fn check_triple(&self, t: &Triple) -> Result<(usize, usize)> {
        let s = self.idx(&t.subject)?;
        let o = self.idx(&t.object)?;
        if s == o && !self.options.allow_reflexive {
            return Err(Error::InvalidArgument(format!(
                "reflexive triple ({}, {}, {})",
                t.subject, t.relation, t.object
            )));
        }
        Ok((s, o))
    }

    /// Adds triples and updates every index. All ids are checked before any
    /// mutation: on error the store is unchanged. Returns the number of
    /// triples that were not already present.
    pub fn add_triples(&mut self, new_triples: &[Triple]) -> Result<usize> {
        let mut resolved = Vec::with_capacity(new_triples.len());
        for t in new_triples {
            resolved.push(self.check_triple(t)?);
        }
        let mut added = 0;
        for (t, (s, o)) in new_triples.iter().zip(resolved) {
            if !self.triples.insert(t.clone()) {
                continue;
            }
            added += 1;
            self.connections.insert((s.min(o), s.max(o)));
            if s != o {
                self.neighbors[s].insert(o);
                self.neighbors[o].insert(s);
            }
            self.pair_relations.entry((s, o)).or_default().insert(t.relation.clone());
            self.relations.insert(t.relation.clone());
        }
        Ok(added)
    }

    /// Per-relation subject/object type sets mined from the current triples.
    pub fn build_fact_type_templates(&self) -> FactTypeTemplate {
        let mut map: BTreeMap<RelationId, TypeSignature> = BTreeMap::new();
        for t in &self.triples {
            let sig = map.entry(t.relation.clone()).or_default();
            sig.subject_types.insert(self.entities[self.index[&t.subject]].entity_type.clone());
            sig.object_types.insert(self.entities[self.index[&t.object]].entity_type.clone());
        }
        FactTypeTemplate { relations: map }
    }

    /// Writes the triple set in the tab-separated triple format.
    pub fn write_triples(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!("{}\t{}\t{}\n", t.subject, t.relation, t.object));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_entities(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for e in &self.entities {
            writeln!(f, "{}\t{}\t{}\t{}", e.id, e.entity_type, e.canonical_name, e.aliases.join("|"))
                .map_err(|err| Error::io(path, err))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSignature {
    pub subject_types: BTreeSet<String>,
    pub object_types: BTreeSet<String>,
}

/// Allowed subject/object types per relation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactTypeTemplate {
    pub relations: BTreeMap<RelationId, TypeSignature>,
}

impl FactTypeTemplate {
    pub fn get(&self, r: &RelationId) -> Option<&TypeSignature> {
        self.relations.get(r)
    }

    pub fn admits(&self, subject_type: &str, r: &RelationId, object_type: &str) -> bool {
        self.relations
            .get(r)
            .is_some_and(|sig| sig.subject_types.contains(subject_type) && sig.object_types.contains(object_type))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { file: path.display().to_string(), line, msg: msg.into() }
}

/// Parses the entity TSV: `id<TAB>type<TAB>canonical_name<TAB>alias|alias...`.
pub fn read_entities(path: &Path) -> Result<Vec<Entity>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in read_lines(path)?.iter().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(parse_err(path, lineno, format!("expected at least 3 columns, found {}", cols.len())));
        }
        let id = cols[0].trim();
        if id.is_empty() {
            return Err(parse_err(path, lineno, "empty entity id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(parse_err(path, lineno, format!("duplicate entity id `{id}`")));
        }
        // multi-typed rows: first listed type wins
        let ty = cols[1].split(',').next().unwrap_or("").trim();
        let name = cols[2].trim();
        if name.is_empty() {
            return Err(parse_err(path, lineno, "empty canonical name"));
        }
        let mut aliases = vec![name.to_string()];
        if let Some(a) = cols.get(3) {
            for alias in a.split('|').map(str::trim).filter(|a| !a.is_empty()) {
                if !aliases.iter().any(|x| x == alias) {
                    aliases.push(alias.to_string());
                }
            }
        }
        out.push(Entity {
            id: EntityId::new(id),
            canonical_name: name.to_string(),
            aliases,
            entity_type: if ty.is_empty() { UNTYPED.to_string() } else { ty.to_string() },
        });
    }
    Ok(out)
}

/// Parses the triple TSV, resolving ids against `known`.
pub fn read_triples(path: &Path, known: &HashSet<&str>, options: KbOptions) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(path)?.iter().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(parse_err(path, lineno, format!("expected 3 columns, found {}", cols.len())));
        }
        for id in [cols[0], cols[2]] {
            if !known.contains(id) {
                return Err(parse_err(path, lineno, format!("unknown entity `{id}`")));
            }
        }
        if cols[0] == cols[2] && !options.allow_reflexive {
            return Err(parse_err(path, lineno, format!("reflexive triple on `{}`", cols[0])));
        }
        out.push(Triple::new(cols[0], cols[1], cols[2]));
    }
    Ok(out)
}

/// Loads a KB from the entity and triple TSV files.
pub fn load_kb(entity_file: &Path, triple_file: &Path, options: KbOptions) -> Result<KnowledgeBase> {
    let entities = read_entities(entity_file)?;
    let known: HashSet<&str> = entities.iter().map(|e| e.id.as_str()).collect();
    let triples = read_triples(triple_file, &known, options)?;
    drop(known);
    KnowledgeBase::from_parts(entities, triples, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ent(id: &str, ty: &str) -> Entity {
        Entity {
            id: EntityId::new(id),
            canonical_name: id.to_lowercase(),
            aliases: vec![],
            entity_type: ty.into(),
        }
    }

    fn small() -> KnowledgeBase {
        KnowledgeBase::from_parts(
            vec![ent("A", "T1"), ent("B", "T2"), ent("C", "T1")],
            vec![Triple::new("A", "r1", "B"), Triple::new("A", "r2", "B")],
            KbOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn connectivity_and_direction() {
        let kb = small();
        let (a, b, c) = (EntityId::new("A"), EntityId::new("B"), EntityId::new("C"));
        assert!(kb.connected(&a, &b).unwrap());
        assert!(kb.connected(&b, &a).unwrap());
        assert!(!kb.connected(&a, &c).unwrap());
        let rel = kb.relations_between(&a, &b).unwrap();
        assert_eq!(rel.len(), 2);
        assert!(kb.relations_between(&b, &a).unwrap().is_empty());
        assert!(matches!(kb.connected(&a, &EntityId::new("Q999")), Err(Error::UnknownEntity(_))));
        assert_eq!(kb.connection_multiplicity_idx(0, 1), 2);
    }

    #[test]
    fn canonical_name_is_alias_and_untyped_default() {
        let kb = KnowledgeBase::from_parts(vec![ent("A", "")], vec![], KbOptions::default()).unwrap();
        let e = kb.entity(&EntityId::new("A")).unwrap();
        assert_eq!(e.aliases, vec!["a".to_string()]);
        assert_eq!(e.entity_type, UNTYPED);
    }

    #[test]
    fn add_is_idempotent_and_atomic() {
        let mut kb = small();
        let before = kb.clone();
        assert_eq!(kb.add_triples(&[Triple::new("A", "r1", "B")]).unwrap(), 0);
        assert_eq!(kb, before);
        let err = kb.add_triples(&[Triple::new("A", "r3", "C"), Triple::new("A", "r3", "Q999")]);
        assert!(err.is_err());
        assert_eq!(kb, before);
        assert_eq!(kb.add_triples(&[Triple::new("A", "r3", "C")]).unwrap(), 1);
        assert!(kb.connected(&EntityId::new("C"), &EntityId::new("A")).unwrap());
    }

    #[test]
    fn reflexive_rejected_unless_allowed() {
        let r = KnowledgeBase::from_parts(vec![ent("A", "T")], vec![Triple::new("A", "r", "A")], KbOptions::default());
        assert!(r.is_err());
        let kb = KnowledgeBase::from_parts(
            vec![ent("A", "T")],
            vec![Triple::new("A", "r", "A")],
            KbOptions { allow_reflexive: true },
        )
        .unwrap();
        assert!(kb.connected_idx(0, 0));
        assert!(kb.neighbors_idx(0).is_empty());
    }

    #[test]
    fn template_for_starred() {
        let kb = KnowledgeBase::from_parts(
            vec![ent("film", "Work"), ent("actor", "Agent"), ent("film2", "Work"), ent("actor2", "Agent")],
            vec![Triple::new("film", "starred", "actor"), Triple::new("film2", "starred", "actor2")],
            KbOptions::default(),
        )
        .unwrap();
        let t = kb.build_fact_type_templates();
        let sig = t.get(&RelationId::new("starred")).unwrap();
        assert_eq!(sig.subject_types.iter().collect::<Vec<_>>(), vec!["Work"]);
        assert_eq!(sig.object_types.iter().collect::<Vec<_>>(), vec!["Agent"]);
        assert!(KnowledgeBase::new(KbOptions::default()).build_fact_type_templates().relations.is_empty());
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let ents = dir.path().join("e.tsv");
        let tri = dir.path().join("t.tsv");
        std::fs::write(&ents, "A\tT1\tAlpha\tAl|Alpha\nB\tT2\tBeta\t\nC\t\tGamma\n").unwrap();
        std::fs::write(&tri, "A\tr\tB\nB\tr\tC\n").unwrap();
        let kb = load_kb(&ents, &tri, KbOptions::default()).unwrap();
        assert_eq!(kb.num_entities(), 3);
        assert_eq!(kb.num_triples(), 2);
        assert_eq!(kb, load_kb(&ents, &tri, KbOptions::default()).unwrap());

        std::fs::write(&tri, "A\tr\tB\nA\tr\tQ999\n").unwrap();
        match load_kb(&ents, &tri, KbOptions::default()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("Q999"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&tri, "A\tr\tA\n").unwrap();
        assert!(load_kb(&ents, &tri, KbOptions::default()).is_err());
        std::fs::write(&ents, "A\tT\tAlpha\nA\tT\tAgain\n").unwrap();
        std::fs::write(&tri, "").unwrap();
        assert!(matches!(load_kb(&ents, &tri, KbOptions::default()), Err(Error::Parse { line: 2, .. })));
    }

    fn random_kb(n: usize, edges: &[(usize, usize, usize)]) -> (KnowledgeBase, Vec<Triple>) {
        let entities: Vec<Entity> = (0..n).map(|i| ent(&format!("E{i}"), &format!("T{}", i % 3))).collect();
        let triples: Vec<Triple> = edges
            .iter()
            .filter(|(a, _, b)| a % n != b % n)
            .map(|(a, r, b)| Triple::new(format!("E{}", a % n), format!("r{}", r % 4), format!("E{}", b % n)))
            .collect();
        (KnowledgeBase::from_parts(entities, triples.clone(), KbOptions::default()).unwrap(), triples)
    }

    proptest! {
        #[test]
        fn indexes_match_brute_force(edges in proptest::collection::vec((0usize..50, 0usize..4, 0usize..50), 0..120)) {
            let (kb, triples) = random_kb(50, &edges);
            for a in 0..50 {
                for b in 0..50 {
                    let (ea, eb) = (EntityId::new(format!("E{a}")), EntityId::new(format!("E{b}")));
                    let scan = triples.iter().any(|t| (t.subject == ea && t.object == eb) || (t.subject == eb && t.object == ea));
                    prop_assert_eq!(kb.connected(&ea, &eb).unwrap(), scan);
                    let rel: BTreeSet<RelationId> = triples.iter()
                        .filter(|t| t.subject == ea && t.object == eb)
                        .map(|t| t.relation.clone()).collect();
                    prop_assert_eq!(kb.relations_between(&ea, &eb).unwrap(), rel);
                }
            }
        }

        #[test]
        fn rebuild_reproduces_indexes(edges in proptest::collection::vec((0usize..20, 0usize..4, 0usize..20), 0..60),
                                     extra in proptest::collection::vec((0usize..20, 0usize..4, 0usize..20), 0..20)) {
            let (mut kb, _) = random_kb(20, &edges);
            let (_, more) = random_kb(20, &extra);
            kb.add_triples(&more).unwrap();
            let rebuilt = KnowledgeBase::from_parts(kb.entities().to_vec(), kb.triples().iter().cloned(), kb.options()).unwrap();
            prop_assert_eq!(&rebuilt, &kb);
            let tmpl = kb.build_fact_type_templates();
            for t in kb.triples() {
                prop_assert!(tmpl.admits(kb.entity_type(&t.subject).unwrap(), &t.relation, kb.entity_type(&t.object).unwrap()));
            }
        }
    }
}
