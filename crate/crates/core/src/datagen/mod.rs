//! Training-data generation: self-trained entity linking over raw text and
//! distant supervision into relation bags.

mod bootstrap;
mod distant;

pub use bootstrap::{
    bootstrap_linked_corpus, extract_round, BootstrapConfig, BootstrapOutput, ClassifierTrainer, GenerationRound,
    StudentTrainer,
};
pub use distant::{cooccurrences, distant_supervision, read_bags, split_dataset, write_bags, Bag, DistantConfig};
