use graphodex_baseline::BaselineError;
use graphodex_core::aggregate::AggregateError;
use graphodex_core::experiments::ExperimentError;
use graphodex_core::imaging::ImagingError;
use graphodex_core::model::ModelError;
use graphodex_core::patching::PatchError;
use graphodex_core::synth::SynthError;
use graphodex_core::tensor::TensorError;

/// Errors by exit code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn with_message(&self, msg: String) -> CliError {
        match self {
            CliError::Usage(_) => CliError::Usage(msg),
            CliError::Data(_) => CliError::Data(msg),
            CliError::Numeric(_) => CliError::Numeric(msg),
            CliError::Io(_) => CliError::Io(msg),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn imaging_class(e: &ImagingError) -> CliError {
    let msg = e.to_string();
    match e {
        ImagingError::Io { .. } => CliError::Io(msg),
        _ => CliError::Data(msg),
    }
}

fn patch_class(e: &PatchError) -> CliError {
    let msg = e.to_string();
    match e {
        PatchError::Shape(_) => CliError::Usage(msg),
        PatchError::Imaging { source, .. } => imaging_class(source).with_message(msg),
        PatchError::Io(_) => CliError::Io(msg),
        PatchError::SparseForm { .. } | PatchError::Balance(_) | PatchError::Manifest(_) | PatchError::Archive(_) => {
            CliError::Data(msg)
        }
    }
}

fn model_class(e: &ModelError) -> CliError {
    let msg = e.to_string();
    match e {
        ModelError::Config(_) | ModelError::Param(_) => CliError::Usage(msg),
        ModelError::Divergence { .. } | ModelError::Tensor(TensorError::Numeric(_)) => CliError::Numeric(msg),
        ModelError::Io(_) => CliError::Io(msg),
        ModelError::Data(_) | ModelError::Tensor(_) | ModelError::Checkpoint(_) | ModelError::Corrupt(_) => {
            CliError::Data(msg)
        }
    }
}

fn aggregate_class(e: &AggregateError) -> CliError {
    match e {
        AggregateError::Usage(m) => CliError::Usage(m.clone()),
        AggregateError::Data(m) => CliError::Data(m.clone()),
        AggregateError::Model(m) => model_class(m),
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        imaging_class(&e)
    }
}

impl From<PatchError> for CliError {
    fn from(e: PatchError) -> Self {
        patch_class(&e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        model_class(&e)
    }
}

impl From<AggregateError> for CliError {
    fn from(e: AggregateError) -> Self {
        aggregate_class(&e)
    }
}

impl From<ExperimentError> for CliError {
    /// Classified by the root cause, reported with the fold context.
    fn from(e: ExperimentError) -> Self {
        let class = match e.root() {
            ExperimentError::Config(m) => CliError::Usage(m.clone()),
            ExperimentError::Data(m) | ExperimentError::Parse(m) => CliError::Data(m.clone()),
            ExperimentError::Io(m) => CliError::Io(m.clone()),
            ExperimentError::Patch(p) => patch_class(p),
            ExperimentError::Model(m) => model_class(m),
            ExperimentError::Aggregate(a) => aggregate_class(a),
            ExperimentError::Fold { .. } => unreachable!("root strips fold context"),
        };
        class.with_message(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Usage(m) => CliError::Usage(m),
            SynthError::Io(m) => CliError::Io(m),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        let msg = e.to_string();
        match e {
            BaselineError::BadRequest(_) => CliError::Usage(msg),
            BaselineError::Io(_) => CliError::Io(msg),
            BaselineError::Imaging(i) => imaging_class(&i),
            _ => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
