//! Metaorder reconstruction and market-impact measurement on trader-identified
//! trade tapes.
//!
//! The pipeline runs in stages: ingest a trade tape ([`tape`]), reconstruct
//! per-trader metaorders from aggressive trades ([`segmenter`]), measure peak,
//! trajectory, execution and permanent impact ([`impact`]), and fit the
//! resulting statistics ([`estimators`]). A deterministic synthetic tape
//! generator with planted impact laws ([`synthgen`]) provides ground truth for
//! every stage.

pub mod decimal;
pub mod estimators;
pub mod export;
pub mod impact;
pub mod segmenter;
pub mod synthgen;
pub mod tape;

pub use tape::{Side, Tape, TapeMeta, TimeWindow, Trade, TraderId};
