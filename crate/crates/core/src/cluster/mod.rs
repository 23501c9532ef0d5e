//! Mean-shift clustering, instance pose voting and ICP refinement.

pub mod icp;
pub mod mean_shift;
pub mod pipeline;

pub use icp::{icp_refine, IcpParams, IcpResult, IcpStatus};
pub use mean_shift::{
    mean_shift, mean_shift_weighted, mean_shift_with, Euclidean, FeatureMetric, MeanShiftCluster, MeanShiftParams,
    MeanShiftResult, SignFreeTail,
};
pub use pipeline::{
    pose_vote, single_stage_pipeline, stage1_features, two_stage_pipeline, ClusterMode, ClusterParams, ClusterPipeline,
    ClusterResult, Instance, PerPointPrediction, Stage1Cluster,
};
