//! Coverage-guided randomized test generation over interpreter programs.

pub mod campaign;
pub mod generate;
pub mod search;

pub use campaign::{campaign, summary_to_csv, summary_to_json, CampaignConfig, CampaignSummary,
    CellOutcome, ModeSummary};
pub use generate::{generate_corpus, FaultCorpusProgram, FaultKind, PlantedFault};
pub use search::{
    dominates, replay, search, CallEvent, CrashKey, Fitness, Mode, SearchConfig, SearchError,
    SearchResult, TestSuite, MAX_SUITE_LEN, MUTATION_RATE, POPULATION,
};
