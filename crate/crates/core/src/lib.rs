//! Linear support vector machines with a relaxed bias, trained in the dual
//! by MPRGP, with sigmoid probability calibration and precision/sensitivity
//! balanced thresholds for imbalanced active/inactive data.
//!
//! ```no_run
//! use ligand_svm::pipeline::{run_pipeline, InputSpec, PipelineConfig};
//!
//! let cfg = PipelineConfig::new(InputSpec::Single {
//!     path: "ligands.svm".into(),
//!     fractions: [0.64, 0.2, 0.16],
//! });
//! let out = run_pipeline(&cfg)?;
//! println!("{}", out.report.to_text());
//! # Ok::<(), ligand_svm::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod data;
mod error;
pub mod metrics;
pub mod model_select;
pub mod persist;
pub mod pipeline;
pub mod qp;
pub mod seed;
pub mod svm;

pub use calibration::{fit_platt, CalibrationSet, NewtonConfig, SigmoidCalibration};
pub use data::{augment, AugmentedDataset, Dataset, Label};
pub use error::{Error, ErrorKind, Result};
pub use persist::{predict, ModelDocument};
pub use qp::{mprgp_solve, QpProblem, SolverConfig};
pub use svm::{train, LossVariant, SvmModel};
