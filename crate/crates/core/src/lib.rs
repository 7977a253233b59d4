pub mod distfit;
pub mod ingest;
pub mod lmoments;
pub mod numeric;
pub mod riskmetrics;
pub mod queueing;
pub mod pipeline;
