//! Retrieval evaluation: protocol-filtered ranking, CMC/mAP, modality
//! subsets, masked centers, the modality-missing experiment and reports.

pub mod modality;
pub mod ranking;
pub mod report;

pub use modality::{
    draw_missing_masks, masked_center, masked_center_eval, missing_experiment, modality_subset_eval, EmbeddingSet,
    MissingConfig, MissingRow, SampleEmbedding, Subset,
};
pub use ranking::{
    apply_protocol_filter, compute_cmc, compute_map, distance_matrix, evaluate, rank, Metrics, ProtocolFilter,
    QueryRanking, RankingResult, RecordMeta,
};
pub use report::{emit_report, metrics_csv, metrics_svg, MetricRow, METRICS_HEADER};
