//! Tasks, knowledge components, student profiles, transcripts and dataset
//! handling.

mod dataset;
mod folds;
mod knowledge;
mod student;
mod task;
mod transcript;

use rand::SeedableRng;
use sha2::{Digest, Sha256};

pub use dataset::{Dataset, DependencyRecord, TaskEntry, TaskRecord};
pub use folds::{split_folds, FoldAssignment};
pub use knowledge::{dependency_id, step_id, DepType, KcKind, KnowledgeComponent, KnowledgeSpec};
pub use student::{grant_count, sample_student_knowledge, StudentLevel, StudentProfile};
pub use task::{CodingTask, CompletionSite, DEFAULT_INTERPRETER};
pub use transcript::{
    DialogueTurn, ScoredCandidate, SessionSnapshot, Termination, TokenUsage, Transcript, TurnUsage,
    TutorMethod,
};

/// Seeds an RNG from a user seed plus a purpose/context label, so that
/// independent draws sharing one config seed do not correlate.
pub(crate) fn derive_rng<R: SeedableRng<Seed = [u8; 32]>>(seed: u64, labels: &[&str]) -> R {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    R::from_seed(hasher.finalize().into())
}
