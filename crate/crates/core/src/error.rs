use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: &'static str },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("integration failed at t = {t} s: {reason}")]
    Integration { t: f64, reason: &'static str },
    #[error("steady state did not converge (best residual {residual:e})")]
    SteadyState { residual: f64 },
    #[error("controller failed: {0}")]
    Controller(String),
}

pub type Result<T> = core::result::Result<T, Error>;
