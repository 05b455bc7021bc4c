//! Networks for CO-RADS grading: an inflated Inception-V1 (I3D) for whole
//! volumes and a slice-wise ResNet-50 with global max pooling, on a small
//! `f64` CPU engine with hand-written gradients.

pub mod checkpoint;
pub mod error;
pub mod i3d;
pub mod inflate;
pub mod layers;
pub mod network;
pub mod optim;
pub mod resnet;
pub mod tensor;

pub use checkpoint::{load_pretrained, Checkpoint, CheckpointLoader, CheckpointReader, DType, LoadReport, LoadStatus};
pub use error::ModelError;
pub use inflate::inflate_kernel;
pub use layers::Mode;
pub use network::{build_model, Dimensionality, HeadKind, ModelConfig, Network, NetworkOutput};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;
