pub mod dro;
pub mod libsvm;
pub mod lqr;
pub mod lyapunov;
pub mod synthetic;

pub use dro::{dro_value_and_grads, synthetic_dataset, DroLogisticProblem};
pub use libsvm::{load_libsvm, parse_libsvm, save_libsvm, write_libsvm, LibsvmData};
pub use lqr::{optimal_gain, LqrEval, LqrGailProblem};
pub use lyapunov::{solve_discrete_lyapunov, spectral_radius};
pub use synthetic::{make_synthetic, SyntheticPLProblem, SyntheticParams};
