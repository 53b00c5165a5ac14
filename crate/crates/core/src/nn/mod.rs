//! Tensors, the U-Net feature network, the cluster head, loss and
//! optimizer. Every backward pass is written out by hand per operation.

mod checkpoint;
mod conv;
mod head;
mod loss;
mod net;
pub mod ops;
mod optim;
mod scalar;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT_VERSION};
pub use conv::{Conv3d, ConvGrads};
pub use head::Head;
pub use loss::softmax_xent;
pub use net::{mask_at_stride, FeatureNet, ForwardCache, NetGrads, Topology, Variant};
pub use ops::{masked_avg_pool, masked_avg_pool_backward};
pub use optim::{param_buffers, param_buffers_mut, sgd_step, GradientSet, Sgd};
pub use scalar::Scalar;
pub use tensor::Tensor4;
