//! Coding tests before and after tutoring, and the metrics computed on
//! them.

mod coding;
mod deps;
mod metrics;
mod report;
mod sandbox;
mod text;

pub use coding::{
    build_posttest_prompt, build_pretest_prompt, recalled_dialogue, CodingTestConfig,
    CodingTestResult, CodingTestRunner, PerKMetrics, Phase, TocPoint, DEFAULT_CODING_MAX_TOKENS,
};
pub use deps::{
    chain_matches, extract_dependencies, CommandExtractor, DependencyExtractor, LexicalExtractor,
};
pub use metrics::{
    mean_over_ks, pass_at_k, recall_at_k, tor, tutoring_outcome, TutoringOutcome, DEFAULT_KS,
    DEFAULT_SAMPLES,
};
pub use report::{
    build_report, mean_curves, results_csv, toc_csv, toc_svg, FoldStat, OutcomeReport, ReportRow,
    SessionCurve, PRETEST_METHOD,
};
pub use sandbox::{
    repo_hash, run_unit_tests, TestCache, TestCause, TestOutcome, DEFAULT_TEST_TIMEOUT,
};
pub use text::{extract_code, truncate_cognitive_load, DEFAULT_COGNITIVE_LOAD_WORDS};
