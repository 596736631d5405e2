//! Covariate selection for log-linear spatial point process intensity models.

pub mod check;
pub mod covariates;
pub mod criteria;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod likelihood;
pub mod rng;
pub mod second_order;
pub mod selection;
pub mod simulate;

pub use covariates::{CovariateField, CovariateSet};
pub use criteria::{CriteriaReport, Criterion};
pub use error::{Error, Result};
pub use geometry::{PointPattern, Window};
pub use likelihood::{FitResult, ModelSpec};
pub use selection::{select, SelectOptions, SelectionResult};
pub use simulate::{IntensitySpec, ThomasParams};
