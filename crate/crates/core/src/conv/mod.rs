//! Convolution kernels and the small set of companion ops the network needs.
//!
//! [`conv2d_ref`] is the oracle: a direct nested loop over planar tensors.
//! [`conv2d_packed`] and the comb path are checked against it.

mod bn;
mod comb;
mod ops;
mod packed;
mod reference;
mod spec;

pub use bn::{batchnorm, fold_batchnorm, BnParams, BN_EPSILON};
pub use comb::{
    comb_dilated_conv, comb_dilated_conv_counted, comb_dilated_conv_packed, merge_fields, split_fields,
    zero_stuff_kernel, zero_stuffed_dilated_conv_counted,
};
pub use ops::{add, concat_channels, global_avg_pool, linear, relu, relu_inplace, upsample_nearest_2x};
pub use packed::{conv2d_packed, conv2d_packed_counted};
pub use reference::{conv2d_ref, conv2d_ref_counted};
pub use spec::{mac_count, ConvSpec, OpCounter, Padding};
