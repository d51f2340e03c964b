//! Type-signature filter for extracted triples.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kb::{FactTypeTemplate, RelationId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum RejectReason {
    UnknownRelation,
    SubjectType { found: String },
    ObjectType { found: String },
    SubjectAndObjectType { subject: String, object: String },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::UnknownRelation => write!(f, "unknown-relation"),
            RejectReason::SubjectType { found } => write!(f, "subject-type:{found}"),
            RejectReason::ObjectType { found } => write!(f, "object-type:{found}"),
            RejectReason::SubjectAndObjectType { subject, object } => write!(f, "subject-and-object-type:{subject},{object}"),
        }
    }
}

/// Accepts iff both argument types appear in the relation's signature.
pub fn validate_triple(
    subject_type: &str,
    relation: &RelationId,
    object_type: &str,
    template: &FactTypeTemplate,
) -> Result<(), RejectReason> {
    let sig = template.get(relation).ok_or(RejectReason::UnknownRelation)?;
    match (sig.subject_types.contains(subject_type), sig.object_types.contains(object_type)) {
        (true, true) => Ok(()),
        (false, true) => Err(RejectReason::SubjectType { found: subject_type.to_string() }),
        (true, false) => Err(RejectReason::ObjectType { found: object_type.to_string() }),
        (false, false) => Err(RejectReason::SubjectAndObjectType {
            subject: subject_type.to_string(),
            object: object_type.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Entity, KnowledgeBase, Triple};

    fn starred() -> KnowledgeBase {
        KnowledgeBase::from_parts(
            vec![Entity::new("film", "Work", "Film"), Entity::new("actor", "Agent", "Actor")],
            vec![Triple::new("film", "starring", "actor")],
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn type_swap_is_rejected() {
        let t = starred().build_fact_type_templates();
        let r = RelationId::new("starring");
        assert_eq!(validate_triple("Work", &r, "Agent", &t), Ok(()));
        assert_eq!(
            validate_triple("Agent", &r, "Work", &t),
            Err(RejectReason::SubjectAndObjectType { subject: "Agent".into(), object: "Work".into() })
        );
        assert_eq!(validate_triple("Work", &r, "Work", &t), Err(RejectReason::ObjectType { found: "Work".into() }));
        assert_eq!(validate_triple("Work", &RelationId::new("x"), "Agent", &t), Err(RejectReason::UnknownRelation));
        assert_eq!(RejectReason::UnknownRelation.to_string(), "unknown-relation");
    }

    #[test]
    fn kb_replays_through_own_template() {
        let kb = starred();
        let t = kb.build_fact_type_templates();
        for tr in kb.triples() {
            let st = kb.entity_type(&tr.subject).unwrap();
            let ot = kb.entity_type(&tr.object).unwrap();
            assert!(validate_triple(st, &tr.relation, ot, &t).is_ok());
        }
    }
}
