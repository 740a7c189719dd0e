//! Reading and writing models and logs.
//!
//! | format | module | direction |
//! |---|---|---|
//! | native `.plgen.json` | [`native`] | read, write |
//! | PNML | [`pnml`] | write; read for model upload |
//! | DOT | [`dot`] | write |
//! | XES, `.xes.gz` | [`xes`] | write |

pub mod dot;
pub mod native;
pub mod pnml;
pub mod xes;

use std::path::Path;

use thiserror::Error;

use crate::model::ProcessModel;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Native(#[from] native::NativeError),
    #[error(transparent)]
    Pnml(#[from] pnml::PnmlError),
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parses a model document: PNML when the text starts with `<`, the native
/// format otherwise.
pub fn model_from_str(text: &str, base: Option<&Path>) -> Result<ProcessModel, LoadError> {
    if text.trim_start().starts_with('<') {
        Ok(pnml::import(text)?)
    } else {
        Ok(native::from_str(text, base)?)
    }
}

/// Loads a model file in either supported format.
pub fn load_model(path: &Path) -> Result<ProcessModel, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_owned(),
        source,
    })?;
    model_from_str(&text, path.parent())
}
