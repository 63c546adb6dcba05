//! X-Conv segmentation network: layer specs, the X-Conv operator, the
//! encoder/decoder forward pass, the decision rule and cost counters.

mod counters;
mod model;
mod spec;
mod xconv;

pub use counters::{count_flops, count_params};
pub use model::{
    decide, decide_scores, forward, forward_tape, init_params, permutation_sensitivity, predict,
    preprocess_features, sigmoid, Prediction,
};
pub use spec::{ChannelPlan, GroupingKind, NetworkSpec, XConvLayerSpec};
pub use xconv::{
    apply_xtransform, build_fstar, decode_layer, lift_delta, xconv_aggregate, xconv_branch,
    xconv_layer, xtransform, BranchInput, ForwardOptions,
};
