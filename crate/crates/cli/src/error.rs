//! Error categories and their process exit codes.

use funboost::basis::BasisError;
use funboost::boost::BoostError;
use funboost::data::DataError;
use funboost::families::FamilyError;
use funboost::resample::ResampleError;
use funboost::simulate::SimulateError;
use funboost::terms::SpecError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Wraps an I/O error on an output file.
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FamilyError> for CliError {
    fn from(e: FamilyError) -> Self {
        match e {
            FamilyError::Unknown(_) => CliError::Config(format!("config key 'model.family': {e}")),
            FamilyError::Support(..) | FamilyError::DegenerateData(_) => CliError::Data(e.to_string()),
            FamilyError::Domain(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<BasisError> for CliError {
    fn from(e: BasisError) -> Self {
        match e {
            BasisError::Spec(s) => s.into(),
            BasisError::Data(d) => d.into(),
            BasisError::InfeasibleDf(_) | BasisError::EmptyBasis(_) => CliError::Config(e.to_string()),
            BasisError::Range(_) | BasisError::DomainMismatch(_) | BasisError::Prediction(_) => {
                CliError::Data(e.to_string())
            }
            BasisError::Dimension(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<BoostError> for CliError {
    fn from(e: BoostError) -> Self {
        match e {
            BoostError::Spec(s) => s.into(),
            BoostError::Data(d) => d.into(),
            BoostError::Basis(b) => b.into(),
            BoostError::Family(f) => f.into(),
            BoostError::Hyper(_) => CliError::Config(format!("config key 'hyper': {e}")),
            BoostError::Prediction(_) | BoostError::Artifact(_) => CliError::Data(e.to_string()),
            BoostError::Singular(_) | BoostError::Domain { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ResampleError> for CliError {
    fn from(e: ResampleError) -> Self {
        match e {
            ResampleError::Boost(b) => b.into(),
            ResampleError::Folds(_) | ResampleError::TooFewReplicates(_) => {
                CliError::Config(format!("config key 'resample': {e}"))
            }
            ResampleError::TooFewCurves(_) => CliError::Data(e.to_string()),
            ResampleError::NoCompleteRows => CliError::Numerical(e.to_string()),
            ResampleError::Csv(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Config(_) => CliError::Config(format!("config key 'simulate': {e}")),
            SimulateError::Basis(b) => b.into(),
            SimulateError::Boost(b) => b.into(),
            SimulateError::Data(d) => d.into(),
            SimulateError::Family(f) => f.into(),
            SimulateError::Eval(_) | SimulateError::Manifest(_) | SimulateError::Io(_) | SimulateError::Csv(_) => {
                CliError::Data(e.to_string())
            }
            SimulateError::Dimension(_)
            | SimulateError::DegenerateSmoothness(_)
            | SimulateError::Domain(_)
            | SimulateError::RangeZero(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_map_to_exit_codes() {
        let spec = SpecError::Invalid { key: "model.family".into(), msg: "x".into() };
        assert_eq!(CliError::from(spec).exit_code(), 2);
        assert_eq!(CliError::from(DataError::Parse("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(BoostError::Singular("x".into())).exit_code(), 4);
        assert_eq!(CliError::from(BoostError::Domain { iteration: 3, msg: "x".into() }).exit_code(), 4);
        assert_eq!(CliError::from(FamilyError::Unknown("beta".into())).exit_code(), 2);
        assert_eq!(CliError::from(ResampleError::NoCompleteRows).exit_code(), 4);
        assert_eq!(CliError::from(ResampleError::Folds("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(SimulateError::DegenerateSmoothness("x".into())).exit_code(), 4);
    }
}
