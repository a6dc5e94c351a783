//! Convolutional autoencoders on f64 tensors: a text net description
//! language, layers with hand-written gradients, an SGD solver, MNIST
//! ingestion and activation inspection.

pub mod checkpoint;
pub mod data;
pub mod init;
pub mod inspect;
pub mod layers;
pub mod loss;
pub mod netspec;
pub mod network;
pub mod solver;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use data::{Dataset, Split};
pub use netspec::{parse_netspec, NetSpec};
pub use network::Network;
pub use solver::SolverConfig;
pub use tensor::{Shape, Tensor};

/// Bundled net descriptions.
pub mod models {
    pub const MODEL1: &str = include_str!("../models/model1.net");
    pub const MODEL2: &str = include_str!("../models/model2.net");
    pub const CLASSIC_AE_300: &str = include_str!("../models/classic_ae_300.net");
    pub const CLASSIC_AE_500: &str = include_str!("../models/classic_ae_500.net");
    pub const CLASSIC_AE_1000: &str = include_str!("../models/classic_ae_1000.net");
    pub const CLASSIC_AE_2000: &str = include_str!("../models/classic_ae_2000.net");
    pub const CLASSIC_AE_3000: &str = include_str!("../models/classic_ae_3000.net");

    /// `(file name, text)` of every bundled description.
    pub const ALL: [(&str, &str); 7] = [
        ("model1.net", MODEL1),
        ("model2.net", MODEL2),
        ("classic_ae_300.net", CLASSIC_AE_300),
        ("classic_ae_500.net", CLASSIC_AE_500),
        ("classic_ae_1000.net", CLASSIC_AE_1000),
        ("classic_ae_2000.net", CLASSIC_AE_2000),
        ("classic_ae_3000.net", CLASSIC_AE_3000),
    ];
}
