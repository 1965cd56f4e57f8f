//! Transcripts, labels, metadata, embeddings and the synthetic generator.

pub mod dataset;
pub mod embed;
pub mod io;
pub mod metadata;
pub mod schema;
pub mod synth;
pub mod transform;

pub use dataset::{build_dataset, Dataset, DatasetOptions, Example};
pub use embed::{embed_session, embed_utterances, fnv1a64, hash_embed};
pub use io::{
    load_embeddings, load_sessions, load_vocab, parse_embeddings, parse_sessions,
    save_embeddings, save_sessions, save_vocab, write_embeddings, write_sessions,
    EmbeddedSession,
};
pub use metadata::{encode_metadata, MetadataVocab};
pub use schema::{
    binarize_total, Code, CtrsLabels, MetadataRecord, Role, Session, Utterance,
    COMPETENCE_THRESHOLD, MAX_CODE_SCORE, NUM_CODES,
};
pub use synth::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use transform::{
    class_weights, filter_role, merge_turns, truncate_pad, RoleFilter, DEFAULT_MERGE_GAP_S,
};
