//! Benchmark problems, reference values, metrics, trace files and the CLI.

pub mod cli;
pub mod completion;
pub mod graph;
pub mod lemmas;
pub mod metrics;
pub mod reference;
pub mod trace;

pub use completion::{build_completion, embed, gen_completion, CompletionInstance};
pub use graph::{build_maxcut, parse_gset, read_gset, GraphInstance};
pub use lemmas::{check_lemmas, check_perturbation_bound, LemmaParams, LemmaReport};
pub use metrics::{metrics, MetricsReport};
pub use reference::Reference;
