//! The native `.plgen.json` model format.
//!
//! A document mirrors [`ProcessModel`]. Script hooks are given either inline
//! as `{"source": "..."}` or as `{"path": "..."}`, resolved against the
//! directory of the document. Export always inlines sources, so a written
//! document is self-contained.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Activity, Association, ComponentId, DataObject, DataObjectKind, Direction, Gateway,
    GatewayKind, ModelDraft, ProcessModel, Provenance, Sequence,
};
use crate::scripting::{EntryPoint, ReturnKind, ScriptError, ScriptHook, ScriptHookPair};

pub const FORMAT: &str = "plgen-model";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "plgen.json";

#[derive(Debug, Error)]
pub enum NativeError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported document: format `{format}` version {version}")]
    Unsupported { format: String, version: u32 },
    #[error("hook of `{component}` must give exactly one of `source` and `path`")]
    HookShape { component: String },
    #[error("cannot read hook file {}: {source}", path.display())]
    HookFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("hook of `{component}`: {source}")]
    Script {
        component: String,
        #[source]
        source: ScriptError,
    },
    #[error("data object `{component}`: {message}")]
    DataObject { component: String, message: String },
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    id: ComponentId,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    start_events: Vec<ComponentId>,
    end_events: Vec<ComponentId>,
    #[serde(default)]
    activities: Vec<ActivityDoc>,
    #[serde(default)]
    gateways: Vec<GatewayDoc>,
    #[serde(default)]
    data_objects: Vec<DataObjectDoc>,
    #[serde(default)]
    sequences: Vec<SequenceDoc>,
    #[serde(default)]
    associations: Vec<AssociationDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivityDoc {
    id: ComponentId,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_after: Option<HookDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_lasted: Option<HookDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GatewayDoc {
    id: ComponentId,
    kind: GatewayKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataObjectDoc {
    id: ComponentId,
    name: String,
    kind: DataObjectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<HookDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceDoc {
    source: ComponentId,
    target: ComponentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssociationDoc {
    activity: ComponentId,
    data_object: ComponentId,
    direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HookDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
}

impl HookDoc {
    fn inline(hook: &ScriptHook) -> Self {
        HookDoc {
            source: Some(hook.source().to_owned()),
            path: None,
        }
    }

    fn load(
        &self,
        component: &ComponentId,
        entry: EntryPoint,
        kind: ReturnKind,
        base: Option<&Path>,
    ) -> Result<ScriptHook, NativeError> {
        let script_err = |source| NativeError::Script {
            component: component.to_string(),
            source,
        };
        match (&self.source, &self.path) {
            (Some(src), None) => ScriptHook::new(src.clone(), entry, kind).map_err(script_err),
            (None, Some(path)) => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let src = fs::read_to_string(&full).map_err(|source| NativeError::HookFile {
                    path: full.clone(),
                    source,
                })?;
                ScriptHook::from_file_source(src, full, entry, kind).map_err(script_err)
            }
            _ => Err(NativeError::HookShape {
                component: component.to_string(),
            }),
        }
    }
}

/// Serializes `model` as a pretty-printed native document.
pub fn to_string(model: &ProcessModel) -> String {
    let doc = Document {
        format: FORMAT.into(),
        version: VERSION,
        id: model.id().clone(),
        name: model.name().to_owned(),
        provenance: model.provenance().cloned(),
        start_events: model.start_events().to_vec(),
        end_events: model.end_events().to_vec(),
        activities: model
            .activities()
            .iter()
            .map(|a| {
                let p = a.time_profile.as_ref();
                ActivityDoc {
                    id: a.id.clone(),
                    name: a.name.clone(),
                    time_after: p.and_then(|p| p.time_after.as_ref()).map(HookDoc::inline),
                    time_lasted: p.and_then(|p| p.time_lasted.as_ref()).map(HookDoc::inline),
                }
            })
            .collect(),
        gateways: model
            .gateways()
            .iter()
            .map(|g| GatewayDoc {
                id: g.id.clone(),
                kind: g.kind,
            })
            .collect(),
        data_objects: model
            .data_objects()
            .iter()
            .map(|d| DataObjectDoc {
                id: d.id.clone(),
                name: d.name.clone(),
                kind: d.kind,
                value: d.plain_value.clone(),
                generator: d.generator.as_ref().map(HookDoc::inline),
            })
            .collect(),
        sequences: model
            .sequences()
            .iter()
            .map(|s| SequenceDoc {
                source: s.source.clone(),
                target: s.target.clone(),
            })
            .collect(),
        associations: model
            .associations()
            .iter()
            .map(|a| AssociationDoc {
                activity: a.activity.clone(),
                data_object: a.data_object.clone(),
                direction: a.direction,
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("document serializes");
    out.push('\n');
    out
}

/// Parses a native document. Relative hook paths resolve against `base`,
/// or the working directory when `base` is `None`. The model is not
/// validated.
pub fn from_str(text: &str, base: Option<&Path>) -> Result<ProcessModel, NativeError> {
    let doc: Document = serde_json::from_str(text).map_err(|e| NativeError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(NativeError::Unsupported {
            format: doc.format,
            version: doc.version,
        });
    }
    let mut d = ModelDraft::new(doc.id, doc.name);
    d.provenance = doc.provenance;
    d.start_events = doc.start_events;
    d.end_events = doc.end_events;
    for a in doc.activities {
        let load = |h: &Option<HookDoc>, entry| {
            h.as_ref()
                .map(|h| h.load(&a.id, entry, ReturnKind::Seconds, base))
                .transpose()
        };
        let time_after = load(&a.time_after, EntryPoint::TimeAfter)?;
        let time_lasted = load(&a.time_lasted, EntryPoint::TimeLasted)?;
        let profile = (time_after.is_some() || time_lasted.is_some()).then_some(ScriptHookPair {
            time_after,
            time_lasted,
        });
        d.activities.push(Activity {
            id: a.id,
            name: a.name,
            time_profile: profile,
        });
    }
    d.gateways = doc
        .gateways
        .into_iter()
        .map(|g| Gateway { id: g.id, kind: g.kind })
        .collect();
    for o in doc.data_objects {
        let generator = match (&o.generator, o.kind) {
            (Some(h), DataObjectKind::DynamicInteger) => {
                Some(h.load(&o.id, EntryPoint::Generate, ReturnKind::Integer, base)?)
            }
            (Some(h), DataObjectKind::DynamicString) => {
                Some(h.load(&o.id, EntryPoint::Generate, ReturnKind::Text, base)?)
            }
            (Some(_), DataObjectKind::Plain) => {
                return Err(NativeError::DataObject {
                    component: o.id.to_string(),
                    message: "a plain data object cannot have a generator".into(),
                })
            }
            (None, _) => None,
        };
        d.data_objects.push(DataObject {
            id: o.id,
            name: o.name,
            kind: o.kind,
            plain_value: o.value,
            generator,
        });
    }
    d.sequences = doc
        .sequences
        .into_iter()
        .map(|s| Sequence::new(s.source, s.target))
        .collect();
    d.associations = doc
        .associations
        .into_iter()
        .map(|a| Association {
            activity: a.activity,
            data_object: a.data_object,
            direction: a.direction,
        })
        .collect();
    Ok(d.into_model())
}

pub fn read(path: &Path) -> Result<ProcessModel, NativeError> {
    let text = fs::read_to_string(path).map_err(|source| NativeError::Io {
        path: path.to_owned(),
        source,
    })?;
    from_str(&text, path.parent())
}

pub fn write(model: &ProcessModel, path: &Path) -> Result<(), NativeError> {
    fs::write(path, to_string(model)).map_err(|source| NativeError::Io {
        path: path.to_owned(),
        source,
    })
}
