//! Relation extraction over entity-linked sentences and validation of the
//! extracted triples against KB type signatures.

mod encoding;
mod extract;
mod loss;
mod model;
mod validate;

pub use encoding::{
    encode_tokens, find_entity_span, other_bucket, other_entity_distances, position_bucket, relative_position, Instance,
    Vocab, OUTSIDE,
};
pub use extract::{
    encode_bag, extract, predict_triples, read_extracted, training_bags, validate_extracted, write_extracted, write_rejected, ExtractConfig, Extraction,
    ExtractedTriple, RejectedTriple,
};
pub use loss::{sliding_margin_grad, sliding_margin_loss};
pub use model::{aggregate_bag, BagPrediction, ReConfig, RelationExtractor, SentenceVectors, TrainingBag};
pub use validate::{validate_triple, RejectReason};
