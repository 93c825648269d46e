//! Forward-pass inference for the convolutional and recurrent attitude
//! networks, their weight format and a finite-difference micro trainer.

pub mod graph;
pub mod layers;
pub mod models;
pub mod tensor;
pub mod train;
pub mod weights;

pub use graph::{GraphBuilder, LayerSpec, ModelGraph, Node, ParamSpec};
pub use layers::{Activation, LstmWeights, Padding};
pub use models::{
    build_model_a, build_model_a_with, build_model_b, build_model_b_with, forward, Estimate, Model, ModelAConfig,
    ModelBConfig, ModelKind,
};
pub use tensor::Tensor;
pub use train::{toy_train, ToyProbe, TrainConfig, TrainOutcome};
pub use weights::WeightStore;
