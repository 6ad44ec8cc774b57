//! Heads built from the temporal conv stack: the strongly supervised head,
//! the weakly supervised pooling head and the kernel-1 baseline, plus their
//! training steps and model files.

pub mod config;
pub mod fusion;
pub mod heads;
pub mod io;
pub mod net;
pub mod train;

pub use config::ModelConfig;
pub use heads::{
    fsn_forward, fsn_frame_logits, init_params, receptive_field, wfsn_forward_predict,
    wfsn_forward_train, wfsn_position_logits, AblationHead, FrameHead, FsnHead, ReceptiveField,
    WfsnHead,
};
pub use io::{load_model, save_model, Model};
pub use net::{NetCache, NetGrads, TemporalNet};
pub use fusion::fuse_streams;
pub use train::{fsn_train_step, wfsn_train_step};
