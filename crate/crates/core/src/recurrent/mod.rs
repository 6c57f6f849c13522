//! Recurrent models: the GRU cell, the recurrent gated autoencoder (a GRU
//! predicting the gated autoencoder's next interval mapping), the
//! absolute-pitch baseline GRU, BPTT training for both, and free-running
//! continuation with argmax feedback.

mod gru;
mod models;
mod train;

pub use gru::{gru_step, GruGrads, GruParams};
pub use models::{categorical_cross_entropy, BaselineRnn, PitchModel, RgaeModel};
pub use train::{
    rgae_loss_and_grads, rgae_train, rnn_loss_and_grads, rnn_train, RgaeGradMode, RgaeGrads,
    TrainConfig,
};
