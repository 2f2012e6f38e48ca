//! Grounds planning in the data: task summary from the description and an
//! empirical profile measured by reading the files.

mod description;
mod infer;
mod profile;

pub use description::analyze_description;
pub use infer::{infer_semantics, ClassThreshold};
pub use profile::{profile_dataset, ProfileOptions};

pub(crate) use profile::{delimiter_for, looks_like_submission};

/// Zero-knowledge prompt used when the task description is withheld.
pub const STRIPPED_DESCRIPTION: &str =
    "Analyze the provided data files and execute the appropriate predictive task for the target variable";
