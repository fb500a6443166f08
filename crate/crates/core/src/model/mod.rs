//! The two-stage circle transformer: embeddings, intra-circle and
//! inter-circle encoders, central-node fusion, pooling, scoring and the
//! listwise loss, with analytic gradients.

mod checkpoint;
mod circle;
mod gradcheck;
mod layers;
mod loss;
mod params;
mod transmission;

pub use checkpoint::{
    read_checkpoint, read_header, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use circle::{
    bucket, build_circles, embed, positional_encoding, CircleInput, CircleKind, DocumentInput,
    TokenSlot, QUERY_POSITION_OFFSET,
};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use layers::{
    encoder_backward, encoder_forward, gelu, gelu_grad, layer_norm, softmax_rows, EncoderCache,
    LAYER_NORM_EPS,
};
pub use loss::{group_loss, group_loss_and_grad, listwise_loss, listwise_loss_grad};
pub use params::{BlockSlots, EncoderSlots, Layout, ModelConfig, ModelParams, Slot};
pub use transmission::{
    backward_document, forward_document, forward_document_recorded, fuse_central,
    inter_circle_forward, intra_circle_forward, max_pool, DocumentOutput, ForwardCache,
};
