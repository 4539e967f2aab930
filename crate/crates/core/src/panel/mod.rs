//! Transaction ingestion, firm-month feature panels and descriptive
//! statistics of exporter dynamics.

pub mod descriptive;
pub mod features;
pub mod hs;
pub mod io;
pub mod records;

pub use descriptive::{
    classify_firm_status, growth_by_group, summarize_status, FirmStatus, GroupBy, GrowthRow, Status,
    StatusSummary,
};
pub use features::{build_panel, herfindahl, size_quartiles, FeaturePanel, PanelBuilder, PanelRow, Vocabulary};
pub use io::{read_panel, write_panel, write_schema, PanelSchema};
pub use records::{
    aggregate_daily, ingest_covariates, ingest_transactions, write_covariates, write_transactions,
    DailyCovariates, Ingested, PandemicCovariates, RejectedRow, TransactionRecord, TransportMode,
    COVARIATE_NAMES,
};
