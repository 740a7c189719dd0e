//! User-defined value generators for activity timing and dynamic data objects.
//!
//! Hooks are written in [Rhai](https://rhai.rs). A hook file defines one
//! function per entry point, each taking the case id as its only argument:
//!
//! ```text
//! fn time_after(case_id) { randint(0, 10) }
//! fn time_lasted(case_id) { randint(60 * 5, 60 * 15) }
//! fn generate(case_id) { randint(0, 1000) }
//! ```
//!
//! Scripts see randomness only through the host functions registered here
//! (`randint`, `random`, `uniform`, `random_string`), which draw from a
//! generator seeded by the simulation. `scratch_get`/`scratch_set` give each
//! case a key-value scratchpad shared by all hooks of one evaluator.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhai::{Dynamic, Engine, Scope, AST};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Instruction budget for one hook evaluation.
pub const MAX_OPERATIONS: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryPoint {
    Generate,
    TimeAfter,
    TimeLasted,
}

impl EntryPoint {
    pub fn function_name(self) -> &'static str {
        match self {
            EntryPoint::Generate => "generate",
            EntryPoint::TimeAfter => "time_after",
            EntryPoint::TimeLasted => "time_lasted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    Integer,
    Text,
    Seconds,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HookValue {
    Integer(i64),
    Text(String),
    Seconds(f64),
}

impl HookValue {
    /// Milliseconds for a `Seconds` value, rounded to the nearest millisecond.
    pub fn as_millis(&self) -> Option<i64> {
        match self {
            HookValue::Seconds(s) => Some((s * 1000.0).round() as i64),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScriptError {
    #[error("script `{script}` does not compile: {message}")]
    Compile { script: String, message: String },
    #[error("script `{script}` does not define `{entry}(case_id)`")]
    MissingEntryPoint { script: String, entry: String },
    #[error("script `{script}` failed for case `{case_id}`: {message}")]
    Runtime {
        script: String,
        case_id: String,
        message: String,
    },
    #[error("script `{script}` returned {found} for case `{case_id}`, expected {expected:?}")]
    Type {
        script: String,
        case_id: String,
        expected: ReturnKind,
        found: String,
    },
    #[error("script `{script}` returned negative seconds ({value}) for case `{case_id}`")]
    NegativeSeconds {
        script: String,
        case_id: String,
        value: f64,
    },
}

/// A compiled script with a fixed entry point and return contract.
#[derive(Clone)]
pub struct ScriptHook {
    source: String,
    entry_point: EntryPoint,
    return_kind: ReturnKind,
    origin: Option<PathBuf>,
    ast: Arc<AST>,
}

impl fmt::Debug for ScriptHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScriptHook")
            .field("entry_point", &self.entry_point)
            .field("return_kind", &self.return_kind)
            .field("origin", &self.origin)
            .finish_non_exhaustive()
    }
}

impl PartialEq for ScriptHook {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
            && self.entry_point == other.entry_point
            && self.return_kind == other.return_kind
    }
}

impl ScriptHook {
    /// Compiles `source` and checks that `entry_point` exists with arity 1.
    pub fn new(
        source: impl Into<String>,
        entry_point: EntryPoint,
        return_kind: ReturnKind,
    ) -> Result<Self, ScriptError> {
        Self::build(source.into(), entry_point, return_kind, None)
    }

    /// Like [`ScriptHook::new`], remembering the file the source came from.
    pub fn from_file_source(
        source: impl Into<String>,
        path: impl Into<PathBuf>,
        entry_point: EntryPoint,
        return_kind: ReturnKind,
    ) -> Result<Self, ScriptError> {
        Self::build(source.into(), entry_point, return_kind, Some(path.into()))
    }

    fn build(
        source: String,
        entry_point: EntryPoint,
        return_kind: ReturnKind,
        origin: Option<PathBuf>,
    ) -> Result<Self, ScriptError> {
        let label = label_for(origin.as_ref(), entry_point);
        let engine = Engine::new_raw();
        let ast = engine.compile(&source).map_err(|e| ScriptError::Compile {
            script: label.clone(),
            message: e.to_string(),
        })?;
        let name = entry_point.function_name();
        if !ast
            .iter_functions()
            .any(|f| f.name == name && f.params.len() == 1)
        {
            return Err(ScriptError::MissingEntryPoint {
                script: label,
                entry: name.to_owned(),
            });
        }
        Ok(ScriptHook {
            source,
            entry_point,
            return_kind,
            origin,
            ast: Arc::new(ast),
        })
    }

    /// A hook whose entry point returns `value` verbatim.
    pub fn constant_seconds(entry_point: EntryPoint, seconds: u64) -> Self {
        let src = format!("fn {}(case_id) {{ {seconds} }}", entry_point.function_name());
        Self::new(src, entry_point, ReturnKind::Seconds).expect("constant hook compiles")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn entry_point(&self) -> EntryPoint {
        self.entry_point
    }

    pub fn return_kind(&self) -> ReturnKind {
        self.return_kind
    }

    pub fn origin(&self) -> Option<&PathBuf> {
        self.origin.as_ref()
    }

    /// Name used in diagnostics.
    pub fn label(&self) -> String {
        label_for(self.origin.as_ref(), self.entry_point)
    }
}

fn label_for(origin: Option<&PathBuf>, entry: EntryPoint) -> String {
    match origin {
        Some(p) => format!("{}:{}", p.display(), entry.function_name()),
        None => entry.function_name().to_owned(),
    }
}

/// Timing hooks of an activity. Without `time_lasted` the activity is
/// instantaneous.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptHookPair {
    pub time_after: Option<ScriptHook>,
    pub time_lasted: Option<ScriptHook>,
}

#[derive(Default)]
struct HostState {
    rng: Option<ChaCha8Rng>,
    case_id: String,
    scratch: HashMap<(String, String), Dynamic>,
}

impl HostState {
    fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(0))
    }
}

/// Runs hooks for one simulation run.
pub struct ScriptEvaluator {
    engine: Engine,
    host: Arc<Mutex<HostState>>,
}

impl fmt::Debug for ScriptEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScriptEvaluator").finish_non_exhaustive()
    }
}

impl Default for ScriptEvaluator {
    fn default() -> Self {
        Self::new(false)
    }
}

impl ScriptEvaluator {
    /// `allow_io` additionally exposes `append_file(path, text)`.
    pub fn new(allow_io: bool) -> Self {
        let host = Arc::new(Mutex::new(HostState::default()));
        let mut engine = Engine::new();
        engine.set_max_operations(MAX_OPERATIONS);
        engine.set_max_call_levels(32);
        engine.set_max_expr_depths(64, 32);
        engine.set_max_string_size(1 << 20);
        engine.set_max_array_size(100_000);
        engine.set_max_map_size(100_000);
        engine.on_print(|_| {});
        engine.on_debug(|_, _, _| {});

        let h = host.clone();
        engine.register_fn("randint", move |lo: i64, hi: i64| -> i64 {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            h.lock().unwrap().rng().gen_range(lo..=hi)
        });
        let h = host.clone();
        engine.register_fn("random", move || -> f64 { h.lock().unwrap().rng().gen::<f64>() });
        let h = host.clone();
        engine.register_fn("uniform", move |lo: f64, hi: f64| -> f64 {
            let u: f64 = h.lock().unwrap().rng().gen();
            lo + (hi - lo) * u
        });
        let h = host.clone();
        engine.register_fn("random_string", move |len: i64| -> String {
            let mut state = h.lock().unwrap();
            random_lowercase(state.rng(), len.clamp(0, 4096) as usize)
        });
        let h = host.clone();
        engine.register_fn("scratch_get", move |key: &str| -> Dynamic {
            let state = h.lock().unwrap();
            state
                .scratch
                .get(&(state.case_id.clone(), key.to_owned()))
                .cloned()
                .unwrap_or(Dynamic::UNIT)
        });
        let h = host.clone();
        engine.register_fn("scratch_set", move |key: &str, value: Dynamic| {
            let mut state = h.lock().unwrap();
            let case = state.case_id.clone();
            state.scratch.insert((case, key.to_owned()), value);
        });
        if allow_io {
            engine.register_fn(
                "append_file",
                |path: &str, text: &str| -> Result<(), Box<rhai::EvalAltResult>> {
                    let mut f = std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(path)
                        .map_err(|e| e.to_string())?;
                    f.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
                    Ok(())
                },
            );
        }
        ScriptEvaluator { engine, host }
    }

    /// Evaluates `hook` for `case_id`. The script's randomness is seeded from
    /// one draw of `rng`, so the result is a function of the hook, the case
    /// id and the state of `rng`.
    pub fn evaluate<R: RngCore + ?Sized>(
        &mut self,
        hook: &ScriptHook,
        case_id: &str,
        rng: &mut R,
    ) -> Result<HookValue, ScriptError> {
        {
            let mut state = self.host.lock().unwrap();
            state.rng = Some(ChaCha8Rng::seed_from_u64(rng.next_u64()));
            state.case_id = case_id.to_owned();
        }
        let result: Dynamic = self
            .engine
            .call_fn(
                &mut Scope::new(),
                &hook.ast,
                hook.entry_point.function_name(),
                (case_id.to_owned(),),
            )
            .map_err(|e| ScriptError::Runtime {
                script: hook.label(),
                case_id: case_id.to_owned(),
                message: e.to_string(),
            })?;
        convert(hook, case_id, result)
    }

    /// Drops scratchpad entries of a finished case.
    pub fn forget_case(&mut self, case_id: &str) {
        self.host
            .lock()
            .unwrap()
            .scratch
            .retain(|(case, _), _| case != case_id);
    }
}

fn convert(hook: &ScriptHook, case_id: &str, value: Dynamic) -> Result<HookValue, ScriptError> {
    let type_error = |found: &Dynamic| ScriptError::Type {
        script: hook.label(),
        case_id: case_id.to_owned(),
        expected: hook.return_kind,
        found: found.type_name().to_owned(),
    };
    match hook.return_kind {
        ReturnKind::Integer => value
            .as_int()
            .map(HookValue::Integer)
            .map_err(|_| type_error(&value)),
        ReturnKind::Text => {
            if value.is_string() {
                Ok(HookValue::Text(value.into_string().expect("string")))
            } else {
                Err(type_error(&value))
            }
        }
        ReturnKind::Seconds => {
            let secs = if let Ok(i) = value.as_int() {
                i as f64
            } else if let Ok(f) = value.as_float() {
                f
            } else {
                return Err(type_error(&value));
            };
            if secs < 0.0 || !secs.is_finite() {
                return Err(ScriptError::NegativeSeconds {
                    script: hook.label(),
                    case_id: case_id.to_owned(),
                    value: secs,
                });
            }
            Ok(HookValue::Seconds(secs))
        }
    }
}

/// `len` random lowercase ASCII letters.
pub fn random_lowercase<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    (0..len)
        .map(|_| (b'a' + rng.gen_range(0..26u8)) as char)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn uniform_integer_generator() {
        let hook = ScriptHook::new(
            "fn generate(case_id) { randint(0, 1000) }",
            EntryPoint::Generate,
            ReturnKind::Integer,
        )
        .unwrap();
        let mut eval = ScriptEvaluator::default();
        let mut rng = rng();
        let mut sum = 0i64;
        for i in 0..10_000 {
            match eval.evaluate(&hook, &format!("case_{i}"), &mut rng).unwrap() {
                HookValue::Integer(v) => {
                    assert!((0..=1000).contains(&v));
                    sum += v;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        let mean = sum as f64 / 10_000.0;
        assert!((mean - 500.0).abs() <= 15.0, "mean {mean}");
    }

    #[test]
    fn constant_hook() {
        let hook = ScriptHook::new(
            "fn generate(case_id) { 42 }",
            EntryPoint::Generate,
            ReturnKind::Integer,
        )
        .unwrap();
        let mut eval = ScriptEvaluator::default();
        let mut rng = rng();
        for case in ["a", "b", "case_0001"] {
            assert_eq!(
                eval.evaluate(&hook, case, &mut rng).unwrap(),
                HookValue::Integer(42)
            );
        }
    }

    #[test]
    fn duration_between_five_and_fifteen_minutes() {
        let src = r#"
            fn time_after(case_id) { randint(0, 10) }
            fn time_lasted(case_id) { randint(60 * 5, 60 * 15) }
        "#;
        let lasted = ScriptHook::new(src, EntryPoint::TimeLasted, ReturnKind::Seconds).unwrap();
        let mut eval = ScriptEvaluator::default();
        let mut rng = rng();
        for i in 0..2_000 {
            let v = eval.evaluate(&lasted, &i.to_string(), &mut rng).unwrap();
            let HookValue::Seconds(s) = v else { panic!() };
            assert!((300.0..=900.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn same_seed_same_value() {
        let hook = ScriptHook::new(
            "fn generate(case_id) { case_id + \"-\" + random_string(6) }",
            EntryPoint::Generate,
            ReturnKind::Text,
        )
        .unwrap();
        let run = || {
            let mut eval = ScriptEvaluator::default();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            eval.evaluate(&hook, "case_0003", &mut rng).unwrap()
        };
        let first = run();
        assert_eq!(first, run());
        let HookValue::Text(t) = first else { panic!() };
        assert!(t.starts_with("case_0003-"));
    }

    #[test]
    fn missing_entry_point_and_arity() {
        let err = ScriptHook::new("fn other(x) { 1 }", EntryPoint::Generate, ReturnKind::Integer)
            .unwrap_err();
        assert!(matches!(err, ScriptError::MissingEntryPoint { .. }));
        let err = ScriptHook::new("fn generate() { 1 }", EntryPoint::Generate, ReturnKind::Integer)
            .unwrap_err();
        assert!(matches!(err, ScriptError::MissingEntryPoint { .. }));
        let err = ScriptHook::new("fn generate(x) { ", EntryPoint::Generate, ReturnKind::Integer)
            .unwrap_err();
        assert!(matches!(err, ScriptError::Compile { .. }));
    }

    #[test]
    fn type_and_sign_errors() {
        let mut eval = ScriptEvaluator::default();
        let mut rng = rng();
        let text = ScriptHook::new(
            "fn generate(c) { \"x\" }",
            EntryPoint::Generate,
            ReturnKind::Integer,
        )
        .unwrap();
        assert!(matches!(
            eval.evaluate(&text, "c1", &mut rng),
            Err(ScriptError::Type { .. })
        ));
        let neg = ScriptHook::new("fn time_after(c) { -5 }", EntryPoint::TimeAfter, ReturnKind::Seconds)
            .unwrap();
        assert!(matches!(
            eval.evaluate(&neg, "c1", &mut rng),
            Err(ScriptError::NegativeSeconds { .. })
        ));
        let boom = ScriptHook::new(
            "fn generate(c) { throw \"boom\" }",
            EntryPoint::Generate,
            ReturnKind::Integer,
        )
        .unwrap();
        match eval.evaluate(&boom, "case_7", &mut rng) {
            Err(ScriptError::Runtime { case_id, message, .. }) => {
                assert_eq!(case_id, "case_7");
                assert!(message.contains("boom"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn runaway_script_hits_budget() {
        let hook = ScriptHook::new(
            "fn generate(c) { let x = 0; loop { x += 1; } }",
            EntryPoint::Generate,
            ReturnKind::Integer,
        )
        .unwrap();
        let mut eval = ScriptEvaluator::default();
        let err = eval.evaluate(&hook, "c", &mut rng()).unwrap_err();
        assert!(matches!(err, ScriptError::Runtime { .. }), "{err}");
    }

    #[test]
    fn scratchpad_is_per_case() {
        let hook = ScriptHook::new(
            r#"fn generate(c) {
                let n = scratch_get("n");
                if n == () { n = 0; }
                n += 1;
                scratch_set("n", n);
                n
            }"#,
            EntryPoint::Generate,
            ReturnKind::Integer,
        )
        .unwrap();
        let mut eval = ScriptEvaluator::default();
        let mut rng = rng();
        assert_eq!(eval.evaluate(&hook, "a", &mut rng).unwrap(), HookValue::Integer(1));
        assert_eq!(eval.evaluate(&hook, "a", &mut rng).unwrap(), HookValue::Integer(2));
        assert_eq!(eval.evaluate(&hook, "b", &mut rng).unwrap(), HookValue::Integer(1));
        eval.forget_case("a");
        assert_eq!(eval.evaluate(&hook, "a", &mut rng).unwrap(), HookValue::Integer(1));
    }

    #[test]
    fn file_io_is_gated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ctx.txt");
        let src = format!(
            "fn generate(c) {{ append_file(\"{}\", c); 1 }}",
            path.display()
        );
        let hook = ScriptHook::new(src, EntryPoint::Generate, ReturnKind::Integer).unwrap();
        let mut rng = rng();
        assert!(ScriptEvaluator::new(false)
            .evaluate(&hook, "c1", &mut rng)
            .is_err());
        ScriptEvaluator::new(true)
            .evaluate(&hook, "c1", &mut rng)
            .unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "c1");
    }
}
