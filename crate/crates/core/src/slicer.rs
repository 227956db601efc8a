//! Parametric trace slicing.
//!
//! A step's binding θ' is its restriction to the configured binding
//! parameters. The slice for a key θ keeps every successful step with
//! θ' ⊑ θ, in order.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::trace::{Binding, ContractSchema, ObservationStep, Trace, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SliceError {
    #[error("slice configuration needs at least one binding parameter")]
    NoBindingParams,
    #[error("binding parameter `{0}` is not declared in the schema")]
    UnknownParam(String),
    #[error("key source for `{event}` names undeclared parameter `{param}`")]
    BadKeySource { event: String, param: String },
    #[error("no input parameter is constant within every test trace and varies across them")]
    NoStableParam,
    #[error("malformed slice configuration: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceConfig {
    pub binding_params: Vec<String>,
    /// Where session-creating events take their key from, `event → param`.
    /// The parameter is looked up in the step's arguments, then its
    /// pre-state.
    pub key_source: BTreeMap<String, String>,
    /// Drop steps that bind no binding parameter instead of copying them
    /// into every slice.
    pub drop_unbound: bool,
    pub source: String,
}

impl SliceConfig {
    pub fn new<S: Into<String>>(params: impl IntoIterator<Item = S>) -> Self {
        SliceConfig {
            binding_params: params.into_iter().map(Into::into).collect(),
            key_source: BTreeMap::new(),
            drop_unbound: true,
            source: String::new(),
        }
    }

    pub fn with_key_source(mut self, event: &str, param: &str) -> Self {
        self.key_source.insert(event.to_string(), param.to_string());
        self
    }

    pub fn validate(&self, schema: &ContractSchema) -> Result<(), SliceError> {
        if self.binding_params.is_empty() {
            return Err(SliceError::NoBindingParams);
        }
        for p in &self.binding_params {
            let declared = schema.functions.iter().any(|f| f.inputs.iter().any(|i| &i.name == p));
            if !declared && schema.decl(p).is_none() {
                return Err(SliceError::UnknownParam(p.clone()));
            }
        }
        for (event, param) in &self.key_source {
            if schema.decl(param).is_none() {
                return Err(SliceError::BadKeySource { event: event.clone(), param: param.clone() });
            }
        }
        Ok(())
    }

    /// The binding θ' of a step over the binding parameters.
    pub fn binding_of(&self, step: &ObservationStep) -> Binding {
        let mut b = Binding::new();
        for p in &self.binding_params {
            if let Some(v) = step.args.get(p) {
                b.insert(p.clone(), v.clone());
            }
        }
        if let Some(src) = self.key_source.get(&step.event) {
            if let Some(v) = step.args.get(src).or_else(|| step.pre.get(src)) {
                // A single-parameter configuration is the common case: the
                // derived value stands in for the missing id.
                if let Some(first) = self.binding_params.iter().find(|p| !b.contains_key(*p)) {
                    b.insert(first.clone(), v.clone());
                }
            }
        }
        b
    }

    fn starts_session(&self, step: &ObservationStep) -> bool {
        self.key_source.contains_key(&step.event)
    }

    pub fn from_json_str(text: &str) -> Result<Self, SliceError> {
        let j: Json = serde_json::from_str(text).map_err(|e| SliceError::Malformed(e.to_string()))?;
        let bad = |m: &str| SliceError::Malformed(m.to_string());
        let obj = j.as_object().ok_or_else(|| bad("expected an object"))?;
        let params = obj
            .get("binding_params")
            .and_then(Json::as_array)
            .ok_or_else(|| bad("`binding_params` must be an array of names"))?
            .iter()
            .map(|p| p.as_str().map(str::to_string).ok_or_else(|| bad("binding parameter names are strings")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cfg = SliceConfig::new(params);
        if let Some(ks) = obj.get("key_source") {
            let ks = ks.as_object().ok_or_else(|| bad("`key_source` must be an object"))?;
            for (event, param) in ks {
                let param = param.as_str().ok_or_else(|| bad("key sources are parameter names"))?;
                cfg.key_source.insert(event.clone(), param.to_string());
            }
        }
        if let Some(d) = obj.get("drop_unbound") {
            cfg.drop_unbound = d.as_bool().ok_or_else(|| bad("`drop_unbound` must be a boolean"))?;
        }
        if let Some(s) = obj.get("source") {
            cfg.source = s.as_str().unwrap_or_default().to_string();
        }
        if cfg.binding_params.is_empty() {
            return Err(SliceError::NoBindingParams);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        m.insert(
            "binding_params".into(),
            Json::Array(self.binding_params.iter().cloned().map(Json::String).collect()),
        );
        if !self.key_source.is_empty() {
            m.insert(
                "key_source".into(),
                Json::Object(self.key_source.iter().map(|(k, v)| (k.clone(), Json::String(v.clone()))).collect()),
            );
        }
        m.insert("drop_unbound".into(), Json::Bool(self.drop_unbound));
        if !self.source.is_empty() {
            m.insert("source".into(), Json::String(self.source.clone()));
        }
        Json::Object(m)
    }
}

/// θ' ⊑ θ: every parameter bound by `a` is bound to the same value by `b`.
pub fn less_informative(a: &Binding, b: &Binding) -> bool {
    a.iter().all(|(k, v)| b.get(k) == Some(v))
}

/// One session: the key, the index of the run among sessions that reuse
/// the key, and the session's successful steps in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    pub key: Binding,
    pub run: usize,
    pub steps: Vec<ObservationStep>,
}

impl Slice {
    pub fn events(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.event.clone()).collect()
    }

    /// Index of the first step whose pre-state differs from the previous
    /// step's post-state.
    pub fn continuity_break(&self) -> Option<usize> {
        self.steps.windows(2).position(|w| w[0].post != w[1].pre).map(|i| i + 1)
    }

    pub fn key_label(&self) -> String {
        let parts: Vec<String> = self.key.iter().map(|(k, v)| format!("{k}={v}")).collect();
        if self.run == 0 {
            parts.join(",")
        } else {
            format!("{}#{}", parts.join(","), self.run)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSet {
    pub slices: Vec<Slice>,
    /// Set when no step bound any binding parameter.
    pub no_sessions_found: bool,
}

#[derive(Default)]
struct Runs {
    // (steps, whether the run holds a step bound to the key itself)
    runs: Vec<(Vec<ObservationStep>, bool)>,
}

impl Runs {
    fn current(&mut self) -> &mut (Vec<ObservationStep>, bool) {
        if self.runs.is_empty() {
            self.runs.push((Vec::new(), false));
        }
        self.runs.last_mut().unwrap()
    }
}

/// Splits the successful steps of `t` into sessions.
///
/// Keys are the maximal bindings observed. A session-creating event (one
/// listed in `key_source`) whose key already has a run with bound steps
/// opens a new run, so reused ids yield distinct slices.
pub fn slice(t: &Trace, cfg: &SliceConfig) -> Result<SliceSet, SliceError> {
    cfg.validate(&t.schema)?;
    slice_steps(t.successes(), cfg)
}

pub fn slice_steps<'a>(
    steps: impl IntoIterator<Item = &'a ObservationStep>,
    cfg: &SliceConfig,
) -> Result<SliceSet, SliceError> {
    if cfg.binding_params.is_empty() {
        return Err(SliceError::NoBindingParams);
    }
    let steps: Vec<(&ObservationStep, Binding)> = steps
        .into_iter()
        .filter(|s| s.is_success())
        .map(|s| (s, cfg.binding_of(s)))
        .collect();

    let bound: BTreeSet<&Binding> = steps.iter().map(|(_, b)| b).filter(|b| !b.is_empty()).collect();
    let keys: Vec<&Binding> = bound
        .iter()
        .copied()
        .filter(|b| !bound.iter().any(|o| o != b && less_informative(b, o)))
        .collect();
    if keys.is_empty() {
        log::warn!("no step binds any of {:?}", cfg.binding_params);
        return Ok(SliceSet { slices: Vec::new(), no_sessions_found: true });
    }

    let mut runs: BTreeMap<&Binding, Runs> = keys.iter().map(|k| (*k, Runs::default())).collect();
    for (step, theta) in &steps {
        if theta.is_empty() {
            if !cfg.drop_unbound {
                for r in runs.values_mut() {
                    r.current().0.push((*step).clone());
                }
            }
            continue;
        }
        for key in &keys {
            if !less_informative(theta, key) {
                continue;
            }
            let r = runs.get_mut(key).unwrap();
            if theta == *key && cfg.starts_session(step) && r.current().1 {
                r.runs.push((Vec::new(), false));
            }
            let cur = r.current();
            cur.0.push((*step).clone());
            cur.1 |= theta == *key;
        }
    }

    let mut slices = Vec::new();
    for (key, r) in runs {
        for (run, (steps, _)) in r.runs.into_iter().enumerate() {
            slices.push(Slice { key: key.clone(), run, steps });
        }
    }
    Ok(SliceSet { slices, no_sessions_found: false })
}

/// Input parameters constant within each single-session test trace and
/// varying across them, sorted by name.
pub fn infer_binding_hint(test_traces: &[Trace]) -> Result<SliceConfig, SliceError> {
    let Some(first) = test_traces.first() else {
        return Err(SliceError::NoStableParam);
    };
    let inputs: BTreeSet<&str> = first
        .schema
        .functions
        .iter()
        .flat_map(|f| f.inputs.iter().map(|p| p.name.as_str()))
        .collect();
    let mut chosen = Vec::new();
    'param: for p in inputs {
        let mut per_trace: BTreeSet<&Value> = BTreeSet::new();
        for t in test_traces {
            let values: BTreeSet<&Value> = t.successes().filter_map(|s| s.args.get(p)).collect();
            match values.len() {
                0 => {}
                1 => {
                    per_trace.insert(values.into_iter().next().unwrap());
                }
                _ => continue 'param,
            }
        }
        if per_trace.len() >= 2 {
            chosen.push(p.to_string());
        }
    }
    if chosen.is_empty() {
        return Err(SliceError::NoStableParam);
    }
    let mut cfg = SliceConfig::new(chosen);
    cfg.source = "inferred from test traces".into();
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{FunctionDecl, ParamDecl, Status, ValueType};

    fn schema() -> ContractSchema {
        let id = || ParamDecl::new("gameId", ValueType::Uint);
        ContractSchema::new(
            vec![ParamDecl::new("status", ValueType::Uint)],
            vec![ParamDecl::new("gameIdCntr", ValueType::Uint)],
            vec![
                FunctionDecl { name: "create".into(), inputs: vec![] },
                FunctionDecl { name: "play".into(), inputs: vec![id(), ParamDecl::new("round", ValueType::Uint)] },
                FunctionDecl { name: "admin".into(), inputs: vec![] },
            ],
        )
        .unwrap()
    }

    fn step(seq: u64, event: &str, args: &[(&str, i64)]) -> ObservationStep {
        let zero: Binding = [("status".to_string(), Value::int(0))].into();
        ObservationStep {
            seq,
            event: event.into(),
            args: args.iter().map(|(k, v)| (k.to_string(), Value::int(*v))).collect(),
            pre: zero.clone(),
            post: zero,
            status: Status::Success,
        }
    }

    fn trace(steps: Vec<ObservationStep>) -> Trace {
        Trace { steps, schema: schema() }
    }

    #[test]
    fn per_key_filter() {
        let t = trace(vec![step(0, "play", &[("gameId", 1)]), step(1, "play", &[("gameId", 2)]), step(2, "play", &[("gameId", 1)])]);
        let out = slice(&t, &SliceConfig::new(["gameId"])).unwrap();
        let seqs: Vec<Vec<u64>> = out.slices.iter().map(|s| s.steps.iter().map(|x| x.seq).collect()).collect();
        assert_eq!(seqs, vec![vec![0, 2], vec![1]]);
        assert_eq!(out.slices[0].key, [("gameId".to_string(), Value::int(1))].into());
    }

    #[test]
    fn empty_and_unbound() {
        let out = slice(&trace(vec![]), &SliceConfig::new(["gameId"])).unwrap();
        assert!(out.slices.is_empty() && out.no_sessions_found);

        let t = trace(vec![step(0, "play", &[("gameId", 1)]), step(1, "admin", &[]), step(2, "play", &[("gameId", 2)])]);
        let mut cfg = SliceConfig::new(["gameId"]);
        assert_eq!(slice(&t, &cfg).unwrap().slices.iter().map(|s| s.steps.len()).sum::<usize>(), 2);
        cfg.drop_unbound = false;
        let formal = slice(&t, &cfg).unwrap();
        assert!(formal.slices.iter().all(|s| s.events().contains(&"admin".to_string())));
    }

    #[test]
    fn reverted_steps_are_ignored() {
        let mut s = step(0, "play", &[("gameId", 1)]);
        s.status = Status::Reverted;
        let out = slice(&trace(vec![s]), &SliceConfig::new(["gameId"])).unwrap();
        assert!(out.no_sessions_found);
    }

    #[test]
    fn key_source_and_reuse() {
        let cfg = SliceConfig::new(["gameId"]).with_key_source("create", "gameIdCntr");
        let t = trace(vec![
            step(0, "create", &[("gameIdCntr", 1)]),
            step(1, "play", &[("gameId", 1)]),
            step(2, "create", &[("gameIdCntr", 1)]),
            step(3, "play", &[("gameId", 1)]),
        ]);
        let out = slice(&t, &cfg).unwrap();
        assert_eq!(out.slices.len(), 2);
        assert_eq!(out.slices[1].run, 1);
        assert_eq!(out.slices[1].events(), vec!["create", "play"]);
        assert_eq!(out.slices[1].key_label(), "gameId=1#1");
    }

    #[test]
    fn unknown_param_is_rejected() {
        let t = trace(vec![]);
        assert_eq!(slice(&t, &SliceConfig::new(["nope"])), Err(SliceError::UnknownParam("nope".into())));
        assert_eq!(slice(&t, &SliceConfig::new(Vec::<String>::new())), Err(SliceError::NoBindingParams));
    }

    #[test]
    fn binding_hint() {
        let a = trace(vec![step(0, "play", &[("gameId", 1), ("round", 1)]), step(1, "play", &[("gameId", 1), ("round", 2)])]);
        let b = trace(vec![step(0, "play", &[("gameId", 2), ("round", 3)]), step(1, "play", &[("gameId", 2), ("round", 4)])]);
        assert_eq!(infer_binding_hint(&[a.clone(), b]).unwrap().binding_params, vec!["gameId"]);
        assert_eq!(infer_binding_hint(&[a]), Err(SliceError::NoStableParam));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SliceConfig::new(["gameId"]).with_key_source("create", "gameIdCntr");
        let text = cfg.to_json().to_string();
        assert_eq!(SliceConfig::from_json_str(&text).unwrap(), cfg);
        assert!(SliceConfig::from_json_str(r#"{"binding_params":[]}"#).is_err());
    }
}
