use thiserror::Error;

/// Any error raised by the pipeline modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
    #[error(transparent)]
    Projection(#[from] crate::projection::ProjectionError),
    #[error(transparent)]
    Reconstruct(#[from] crate::reconstruct::ReconstructError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
    #[error(transparent)]
    Phantom(#[from] crate::phantom::PhantomError),
    #[error(transparent)]
    Detect(#[from] crate::detect2d::DetectError),
    #[error(transparent)]
    Map(#[from] crate::map3d::MapError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("invalid configuration: {0}")]
    Config(String),
}
