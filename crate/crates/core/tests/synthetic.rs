//! Component checks on the generated KB and corpus.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use kbc::corpus::{Gazetteer, Sentence};
use kbc::embeddings::{train_joint_embeddings, train_node_embeddings, SkipGramConfig};
use kbc::kb::{EntityId, RelationId, Triple};
use kbc::linker::{span_f1, ContextItem, ContextLinker, ContextLinkerConfig, Recognizer, SpanClassifier, SpanClassifierConfig};
use kbc::relex::{validate_triple, RejectReason};
use kbc::synth::{generate, SynthData, SynthSpec};

fn data() -> SynthData {
    generate(&SynthSpec::default()).unwrap()
}

#[test]
fn distant_labels_are_sound_and_complete() {
    let d = data();
    let kb = d.kb().unwrap();
    let r = common::distant_soundness(&d.train, &kb);
    assert!(r.labels_checked >= 300, "{r:?}");
    assert_eq!(r.unsupported_labels, 0, "{r:?}");
    assert!(r.positive_mentions > 500, "{r:?}");
    assert_eq!(r.unbagged_mentions, 0, "{r:?}");
    // held-out sentences against the truth KB as well
    let r = common::distant_soundness(&d.heldout, &d.truth_kb().unwrap());
    assert_eq!((r.unsupported_labels, r.unbagged_mentions), (0, 0), "{r:?}");
}

/// Allowed types per relation, read straight from the triples.
fn signatures(d: &SynthData) -> BTreeMap<RelationId, (BTreeSet<String>, BTreeSet<String>)> {
    let ty: BTreeMap<&EntityId, &str> = d.entities.iter().map(|e| (&e.id, e.entity_type.as_str())).collect();
    let mut out: BTreeMap<RelationId, (BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
    for t in &d.kb_triples {
        let e = out.entry(t.relation.clone()).or_default();
        e.0.insert(ty[&t.subject].to_string());
        e.1.insert(ty[&t.object].to_string());
    }
    out
}

#[test]
fn templates_replay_kb_and_reject_type_swaps() {
    let d = data();
    let kb = d.kb().unwrap();
    let template = kb.build_fact_type_templates();
    let sig = signatures(&d);
    let ty = |e: &EntityId| kb.entity_type(e).unwrap().to_string();
    for t in kb.triples() {
        assert_eq!(validate_triple(&ty(&t.subject), &t.relation, &ty(&t.object), &template), Ok(()));
    }
    let mut swaps = 0;
    for t in kb.triples() {
        let (s, o) = (ty(&t.object), ty(&t.subject));
        let (subj_ok, obj_ok) = (sig[&t.relation].0.contains(&s), sig[&t.relation].1.contains(&o));
        let got = validate_triple(&s, &t.relation, &o, &template);
        if subj_ok && obj_ok {
            assert_eq!(got, Ok(()));
        } else {
            swaps += 1;
            assert!(got.is_err(), "{t:?} swapped was accepted");
        }
    }
    assert!(swaps > 100);
    let unknown = Triple::new("a", "never_seen", "b");
    assert_eq!(validate_triple("T0", &unknown.relation, "T1", &template), Err(RejectReason::UnknownRelation));
}

#[test]
fn span_classifier_generalises_to_heldout_sentences() {
    let d = data();
    let kb = d.kb().unwrap();
    let gaz = Gazetteer::from_kb(&kb, false);
    let mut clf = SpanClassifier::new(SpanClassifierConfig::default());
    clf.train(&d.train, &gaz).unwrap();
    let pred: Vec<_> = d.heldout.iter().map(|s| clf.recognize(s, &gaz, &kb).unwrap()).collect();
    let gold: Vec<_> = d.heldout.iter().map(|s| s.spans.clone()).collect();
    let (p, r, f1) = span_f1(&pred, &gold);
    assert!(f1 >= 0.95, "span P {p:.3} R {r:.3} F1 {f1:.3}");
}

fn items<'a>(corpus: &'a [Sentence], gaz: &Gazetteer) -> Vec<ContextItem<'a>> {
    corpus
        .iter()
        .flat_map(|s| {
            s.linked_spans().map(move |sp| ContextItem {
                sentence: s,
                span: sp.clone(),
                gold: sp.entity.clone().unwrap(),
                candidates: gaz.lookup(&sp.surface).map(|c| c.iter().cloned().collect()).unwrap_or_default(),
            })
        })
        .collect()
}

#[test]
fn context_linker_prefers_planted_entity() {
    let d = data();
    let kb = d.kb().unwrap();
    let gaz = Gazetteer::from_kb(&kb, false);
    let sg = SkipGramConfig { seed: 3, ..Default::default() };
    let (nodes, _) = train_node_embeddings(&kb, &sg).unwrap();
    let (table, _) = train_joint_embeddings(&d.train, &kb, &nodes, &sg).unwrap();
    let train = items(&d.train, &gaz);
    let mut model = ContextLinker::new(table.dim(), ContextLinkerConfig::default()).unwrap();
    model.train(&train, &kb, &table).unwrap();
    // Ambiguous held-out mentions only; unique names are trivially right.
    // In relation sentences the cue word fixes the type, and family members
    // differ in type. Distractor sentences carry no cue.
    let truth = d.truth_kb().unwrap();
    let mut tally = [[0usize; 2]; 2];
    for it in items(&d.heldout, &gaz).iter().filter(|it| it.candidates.len() > 1) {
        let gold = model.score(&table, it.sentence, &it.span, &it.gold).unwrap();
        let best_other = it
            .candidates
            .iter()
            .filter(|c| **c != it.gold)
            .map(|c| model.score(&table, it.sentence, &it.span, c).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let ents: Vec<&EntityId> = it.sentence.linked_spans().filter_map(|s| s.entity.as_ref()).collect();
        let cued = usize::from(truth.connected(ents[0], ents[1]).unwrap());
        tally[cued][usize::from(gold > best_other)] += 1;
    }
    let rate = |t: [usize; 2]| t[1] as f64 / (t[0] + t[1]) as f64;
    assert!(tally[1][0] + tally[1][1] > 50, "{tally:?}");
    assert!(rate(tally[1]) >= 0.8, "planted entity first in cued sentences: {tally:?}");
    assert!(rate(tally[0]) > 1.0 / 3.0, "no better than chance without a cue: {tally:?}");
}
