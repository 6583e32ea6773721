//! Linear soft-margin SVM: binary solver, one-vs-rest wrapper, model files
//! and an independent reference solver.

mod binary;
mod io;
mod multiclass;
pub mod oracle;

pub use binary::{
    primal_objective, slacks, train_binary, BinarySvm, SolverConfig, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
pub use io::{decode_svm, encode_svm, load_svm, save_svm};
pub use multiclass::{fit_standardization, train_multiclass, Prediction, SvmModel};
pub use oracle::{qp_oracle, OracleSolution};

pub(crate) use io::fmt17;
