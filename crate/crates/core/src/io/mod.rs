//! Everything that touches files, the network or configuration.

pub mod adapter;
pub mod config;
pub mod mmlu;
pub mod report;
pub mod store;

pub use adapter::{EndpointSettings, OpenAiBackend};
pub use config::{ConfigError, Endpoint, HarnessConfig};
pub use mmlu::{load_dataset, load_items_jsonl, load_mmlu, write_items_jsonl, LoadError};
pub use report::{emit_report, Manifest, ReportError};
pub use store::{read_records, write_records, ReplayLog, ReplayRecord, ReplayWriter, StoreError};
