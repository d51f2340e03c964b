//! Joint word/entity embeddings and nearest-neighbour candidate queries.

mod knn;
mod skipgram;
mod table;

pub use knn::{knn_candidates, knn_vector};
pub use skipgram::{linked_stream, train_joint_embeddings, train_node_embeddings, SkipGramConfig, TrainStats};
pub use table::{l2, EmbeddingTable, Symbol, ENTITY_PREFIX};
