//! Parametric events, observation steps, contract schemas and the JSONL
//! history format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde_json::{Map, Number, Value as Json};
use thiserror::Error;

use crate::logic::{Domain, Domains};

/// A concrete parameter value.
///
/// Booleans are carried as `Int` 0/1. Addresses are opaque and only ever
/// compared for equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(BigInt),
    Addr(String),
}

pub const ADDR_ZERO: &str = "0x0";

impl Value {
    pub fn int(i: i64) -> Self {
        Value::Int(BigInt::from(i))
    }

    pub fn bool(b: bool) -> Self {
        Value::int(b as i64)
    }

    /// Builds an address value. Hex digits are lower-cased and an all-zero
    /// address collapses to `0x0`.
    pub fn addr(s: &str) -> Self {
        let lower = s.to_ascii_lowercase();
        let digits = lower.trim_start_matches("0x");
        if !digits.is_empty() && digits.chars().all(|c| c == '0') {
            return Value::Addr(ADDR_ZERO.to_string());
        }
        Value::Addr(lower)
    }

    pub fn zero_of(ty: ValueType) -> Self {
        match ty {
            ValueType::Addr => Value::Addr(ADDR_ZERO.to_string()),
            _ => Value::Int(BigInt::zero()),
        }
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Value::Int(i) => Some(i),
            Value::Addr(_) => None,
        }
    }

    pub fn is_addr(&self) -> bool {
        matches!(self, Value::Addr(_))
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Int(i) => Json::Number(
                Number::from_str(&i.to_string()).expect("integer literal is a valid JSON number"),
            ),
            Value::Addr(a) => Json::String(a.clone()),
        }
    }

    pub fn from_json(j: &Json) -> Result<Self, String> {
        match j {
            Json::Number(n) => {
                let text = n.to_string();
                BigInt::from_str(&text)
                    .map(Value::Int)
                    .map_err(|_| format!("`{text}` is not an integer"))
            }
            Json::Bool(b) => Ok(Value::bool(*b)),
            Json::String(s) if s.starts_with("0x") || s.starts_with("0X") => Ok(Value::addr(s)),
            Json::String(s) => BigInt::from_str(s)
                .map(Value::Int)
                .map_err(|_| format!("string `{s}` is neither an address nor an integer")),
            other => Err(format!("unsupported value `{other}`")),
        }
    }

    /// Whether the value lies in the domain of `ty`.
    pub fn fits(&self, ty: ValueType) -> bool {
        match (self, ty) {
            (Value::Addr(_), ValueType::Addr) => true,
            (Value::Int(_), ValueType::Int) => true,
            (Value::Int(i), ValueType::Uint) => !i.is_negative(),
            (Value::Int(i), ValueType::Bool) => i.is_zero() || *i == BigInt::from(1),
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Addr(a) => f.write_str(a),
        }
    }
}

/// Declared domain of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueType {
    Int,
    Uint,
    Bool,
    Addr,
}

impl ValueType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "int" => ValueType::Int,
            "uint" => ValueType::Uint,
            "bool" => ValueType::Bool,
            "addr" | "address" => ValueType::Addr,
            _ => return None,
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            ValueType::Int => "int",
            ValueType::Uint => "uint",
            ValueType::Bool => "bool",
            ValueType::Addr => "addr",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            ValueType::Int => Domain::int(),
            ValueType::Uint => Domain::Int { lo: Some(BigInt::zero()), hi: None },
            ValueType::Bool => Domain::Int { lo: Some(BigInt::zero()), hi: Some(BigInt::from(1)) },
            ValueType::Addr => Domain::Addr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKind {
    Input,
    StateVar,
    Env,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId {
    pub name: String,
    pub kind: ParamKind,
}

/// A partial map from parameter names to values. Names are unique within a
/// schema, so the name identifies the parameter.
pub type Binding = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: String,
    pub ty: ValueType,
    /// Optional unit tag; integer parameters are only compared with each
    /// other when their tags agree.
    pub unit: Option<String>,
}

impl ParamDecl {
    pub fn new(name: &str, ty: ValueType) -> Self {
        ParamDecl { name: name.to_string(), ty, unit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub inputs: Vec<ParamDecl>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("malformed schema: {0}")]
    Malformed(String),
    #[error("parameter `{0}` declared more than once")]
    DuplicateParam(String),
    #[error("function `{0}` declared more than once")]
    DuplicateFunction(String),
}

/// The interface of a contract: its state variables, environment symbols
/// and functions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContractSchema {
    pub state_vars: Vec<ParamDecl>,
    pub env: Vec<ParamDecl>,
    pub functions: Vec<FunctionDecl>,
}

impl ContractSchema {
    pub fn new(
        state_vars: Vec<ParamDecl>,
        env: Vec<ParamDecl>,
        functions: Vec<FunctionDecl>,
    ) -> Result<Self, SchemaError> {
        let schema = ContractSchema { state_vars, env, functions };
        schema.validate()?;
        Ok(schema)
    }

    /// Checks name uniqueness. Function inputs may be shared between
    /// functions (e.g. a session id) but must agree on their type.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen: BTreeMap<&str, ValueType> = BTreeMap::new();
        for p in self.state_vars.iter().chain(&self.env) {
            if seen.insert(&p.name, p.ty).is_some() {
                return Err(SchemaError::DuplicateParam(p.name.clone()));
            }
        }
        let globals: BTreeSet<&str> = seen.keys().copied().collect();
        let mut fnames = BTreeSet::new();
        for f in &self.functions {
            if !fnames.insert(&f.name) {
                return Err(SchemaError::DuplicateFunction(f.name.clone()));
            }
            let mut local = BTreeSet::new();
            for p in &f.inputs {
                if globals.contains(p.name.as_str()) || !local.insert(&p.name) {
                    return Err(SchemaError::DuplicateParam(p.name.clone()));
                }
                if let Some(prev) = seen.insert(&p.name, p.ty) {
                    if prev != p.ty {
                        return Err(SchemaError::DuplicateParam(p.name.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_count(&self) -> usize {
        self.functions.len()
    }

    pub fn state_var_names(&self) -> impl Iterator<Item = &str> {
        self.state_vars.iter().map(|p| p.name.as_str())
    }

    pub fn is_state_var(&self, name: &str) -> bool {
        self.state_vars.iter().any(|p| p.name == name)
    }

    pub fn decl(&self, name: &str) -> Option<(&ParamDecl, ParamKind)> {
        if let Some(p) = self.state_vars.iter().find(|p| p.name == name) {
            return Some((p, ParamKind::StateVar));
        }
        if let Some(p) = self.env.iter().find(|p| p.name == name) {
            return Some((p, ParamKind::Env));
        }
        self.functions
            .iter()
            .flat_map(|f| f.inputs.iter())
            .find(|p| p.name == name)
            .map(|p| (p, ParamKind::Input))
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.decl(name).map(|(p, kind)| ParamId { name: p.name.clone(), kind })
    }

    pub fn type_of(&self, name: &str) -> Option<ValueType> {
        self.decl(name).map(|(p, _)| p.ty)
    }

    /// The genesis valuation: every state variable at its zero value.
    pub fn zero_state(&self) -> Binding {
        self.state_vars
            .iter()
            .map(|p| (p.name.clone(), Value::zero_of(p.ty)))
            .collect()
    }

    /// Declared domains of every parameter, for the decision procedure.
    pub fn domains(&self) -> Domains {
        let mut d = Domains::default();
        for p in self
            .state_vars
            .iter()
            .chain(&self.env)
            .chain(self.functions.iter().flat_map(|f| f.inputs.iter()))
        {
            d.insert(&p.name, p.ty.domain());
        }
        d
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchemaError> {
        let j: Json = serde_json::from_str(text).map_err(|e| SchemaError::Malformed(e.to_string()))?;
        Self::from_json(&j)
    }

    pub fn from_json(j: &Json) -> Result<Self, SchemaError> {
        let bad = |m: &str| SchemaError::Malformed(m.to_string());
        let obj = j.as_object().ok_or_else(|| bad("schema must be an object"))?;
        let params = |key: &str, v: Option<&Json>| -> Result<Vec<ParamDecl>, SchemaError> {
            let Some(v) = v else { return Ok(Vec::new()) };
            let arr = v.as_array().ok_or_else(|| bad(&format!("`{key}` must be an array")))?;
            arr.iter()
                .map(|p| {
                    let name = p
                        .get("name")
                        .and_then(Json::as_str)
                        .ok_or_else(|| bad(&format!("`{key}` entry without a name")))?;
                    let ty = p
                        .get("type")
                        .and_then(Json::as_str)
                        .and_then(ValueType::parse)
                        .ok_or_else(|| bad(&format!("`{name}` has a missing or unknown type")))?;
                    let unit = p.get("unit").and_then(Json::as_str).map(str::to_string);
                    Ok(ParamDecl { name: name.to_string(), ty, unit })
                })
                .collect()
        };
        let state_vars = params("state_vars", obj.get("state_vars"))?;
        let env = params("env", obj.get("env"))?;
        let mut functions = Vec::new();
        if let Some(fs) = obj.get("functions") {
            let arr = fs.as_array().ok_or_else(|| bad("`functions` must be an array"))?;
            for f in arr {
                let name = f
                    .get("name")
                    .and_then(Json::as_str)
                    .ok_or_else(|| bad("function without a name"))?;
                let inputs = params("inputs", f.get("inputs"))?;
                functions.push(FunctionDecl { name: name.to_string(), inputs });
            }
        }
        ContractSchema::new(state_vars, env, functions)
    }

    pub fn to_json(&self) -> Json {
        fn params(ps: &[ParamDecl]) -> Json {
            Json::Array(
                ps.iter()
                    .map(|p| {
                        let mut m = Map::new();
                        m.insert("name".into(), Json::String(p.name.clone()));
                        m.insert("type".into(), Json::String(p.ty.as_str().into()));
                        if let Some(u) = &p.unit {
                            m.insert("unit".into(), Json::String(u.clone()));
                        }
                        Json::Object(m)
                    })
                    .collect(),
            )
        }
        let mut m = Map::new();
        m.insert("state_vars".into(), params(&self.state_vars));
        m.insert("env".into(), params(&self.env));
        m.insert(
            "functions".into(),
            Json::Array(
                self.functions
                    .iter()
                    .map(|f| {
                        let mut fm = Map::new();
                        fm.insert("name".into(), Json::String(f.name.clone()));
                        fm.insert("inputs".into(), params(&f.inputs));
                        Json::Object(fm)
                    })
                    .collect(),
            ),
        );
        Json::Object(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Success,
    Reverted,
}

/// One decoded function invocation with the state before and after it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObservationStep {
    pub seq: u64,
    pub event: String,
    /// Inputs and environment symbols.
    pub args: Binding,
    pub pre: Binding,
    pub post: Binding,
    pub status: Status,
}

impl ObservationStep {
    pub fn is_success(&self) -> bool {
        self.status == Status::Success
    }

    /// `pre ∪ args`, the valuation a guard is evaluated on.
    pub fn pre_valuation(&self) -> Binding {
        let mut v = self.pre.clone();
        v.extend(self.args.iter().map(|(k, x)| (k.clone(), x.clone())));
        v
    }

    /// `post ∪ args`, the valuation an update is evaluated on.
    pub fn post_valuation(&self) -> Binding {
        let mut v = self.post.clone();
        v.extend(self.args.iter().map(|(k, x)| (k.clone(), x.clone())));
        v
    }

    pub fn to_json(&self) -> Json {
        let binding = |b: &Binding| {
            Json::Object(b.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
        };
        let mut m = Map::new();
        m.insert("seq".into(), Json::from(self.seq));
        m.insert("event".into(), Json::String(self.event.clone()));
        m.insert("args".into(), binding(&self.args));
        m.insert("pre".into(), binding(&self.pre));
        m.insert("post".into(), binding(&self.post));
        let status = match self.status {
            Status::Success => "success",
            Status::Reverted => "reverted",
        };
        m.insert("status".into(), Json::String(status.into()));
        Json::Object(m)
    }

    /// Decodes one JSONL record without checking it against a schema.
    pub fn from_json(j: &Json) -> Result<Self, String> {
        let obj = j.as_object().ok_or("record must be a JSON object")?;
        let seq = obj.get("seq").and_then(Json::as_u64).ok_or("missing or invalid `seq`")?;
        let event = obj
            .get("event")
            .and_then(Json::as_str)
            .ok_or("missing or invalid `event`")?
            .to_string();
        let binding = |key: &str| -> Result<Binding, String> {
            match obj.get(key) {
                None | Some(Json::Null) => Ok(Binding::new()),
                Some(Json::Object(m)) => m
                    .iter()
                    .map(|(k, v)| {
                        Value::from_json(v).map(|v| (k.clone(), v)).map_err(|e| format!("`{key}.{k}`: {e}"))
                    })
                    .collect(),
                Some(_) => Err(format!("`{key}` must be an object")),
            }
        };
        let status = match obj.get("status").and_then(Json::as_str) {
            Some("success") => Status::Success,
            Some("reverted") => Status::Reverted,
            _ => return Err("`status` must be \"success\" or \"reverted\"".into()),
        };
        Ok(ObservationStep {
            seq,
            event,
            args: binding("args")?,
            pre: binding("pre")?,
            post: binding("post")?,
            status,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: malformed record: {msg}")]
    MalformedLine { line: usize, msg: String },
    #[error("line {line}: unknown event `{name}`")]
    UnknownEvent { line: usize, name: String },
    #[error("line {line}: state variable `{param}` is not bound")]
    MissingStateVar { line: usize, param: String },
    #[error("line {line}: parameter `{param}` is not declared for this event")]
    UnknownParam { line: usize, param: String },
    #[error("line {line}: `seq` must be strictly increasing")]
    NonMonotonicSeq { line: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

/// An observed history: an ordered list of steps over one schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<ObservationStep>,
    pub schema: ContractSchema,
}

impl Trace {
    pub fn new(schema: ContractSchema) -> Self {
        Trace { steps: Vec::new(), schema }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn successes(&self) -> impl Iterator<Item = &ObservationStep> {
        self.steps.iter().filter(|s| s.is_success())
    }
}

/// Checks a decoded step against the schema. `line` is 1-based.
pub fn check_step(step: &ObservationStep, schema: &ContractSchema, line: usize) -> Result<(), TraceError> {
    let f = schema
        .function(&step.event)
        .ok_or_else(|| TraceError::UnknownEvent { line, name: step.event.clone() })?;
    for name in step.args.keys() {
        let declared = f.inputs.iter().any(|p| &p.name == name) || schema.env.iter().any(|p| &p.name == name);
        if !declared {
            return Err(TraceError::UnknownParam { line, param: name.clone() });
        }
    }
    for state in [&step.pre, &step.post] {
        for name in state.keys() {
            if !schema.is_state_var(name) {
                return Err(TraceError::UnknownParam { line, param: name.clone() });
            }
        }
        for p in &schema.state_vars {
            if !state.contains_key(&p.name) {
                return Err(TraceError::MissingStateVar { line, param: p.name.clone() });
            }
        }
    }
    for (name, v) in step.args.iter().chain(&step.pre).chain(&step.post) {
        let ty = schema.type_of(name).expect("checked above");
        if !v.fits(ty) {
            return Err(TraceError::MalformedLine {
                line,
                msg: format!("`{name}` = {v} is not a valid {}", ty.as_str()),
            });
        }
    }
    if step.status == Status::Reverted && step.pre != step.post {
        return Err(TraceError::MalformedLine {
            line,
            msg: "a reverted step must leave the state unchanged".into(),
        });
    }
    Ok(())
}

/// Reads a JSONL history, one observation step per non-blank line.
pub fn parse_history<R: BufRead>(input: R, schema: &ContractSchema) -> Result<Trace, TraceError> {
    let mut trace = Trace::new(schema.clone());
    let mut last_seq: Option<u64> = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let json: Json = serde_json::from_str(&line)
            .map_err(|e| TraceError::MalformedLine { line: line_no, msg: e.to_string() })?;
        let step = ObservationStep::from_json(&json)
            .map_err(|msg| TraceError::MalformedLine { line: line_no, msg })?;
        check_step(&step, schema, line_no)?;
        if last_seq.is_some_and(|prev| step.seq <= prev) {
            return Err(TraceError::NonMonotonicSeq { line: line_no });
        }
        last_seq = Some(step.seq);
        trace.steps.push(step);
    }
    Ok(trace)
}

pub fn parse_history_str(input: &str, schema: &ContractSchema) -> Result<Trace, TraceError> {
    parse_history(input.as_bytes(), schema)
}

pub fn write_history<W: Write>(trace: &Trace, mut out: W) -> std::io::Result<()> {
    for step in &trace.steps {
        serde_json::to_writer(&mut out, &step.to_json())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn history_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_history(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Event names of the successful steps, bindings dropped.
pub fn project_nonparametric<'a, I>(steps: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a ObservationStep>,
{
    steps
        .into_iter()
        .filter(|s| s.is_success())
        .map(|s| s.event.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ContractSchema {
        ContractSchema::new(
            vec![ParamDecl::new("status", ValueType::Uint), ParamDecl::new("owner", ValueType::Addr)],
            vec![ParamDecl::new("msg.value", ValueType::Uint), ParamDecl::new("caller", ValueType::Addr)],
            vec![
                FunctionDecl { name: "createGame".into(), inputs: vec![] },
                FunctionDecl {
                    name: "serverEndGame".into(),
                    inputs: vec![ParamDecl::new("gameId", ValueType::Uint)],
                },
            ],
        )
        .unwrap()
    }

    const LINE: &str = r#"{"seq":0,"event":"createGame","args":{"msg.value":5,"caller":"0xAB"},"pre":{"status":0,"owner":"0x00"},"post":{"status":1,"owner":"0xab"},"status":"success"}"#;

    #[test]
    fn single_line() {
        let t = parse_history_str(LINE, &schema()).unwrap();
        assert_eq!(t.len(), 1);
        let s = &t.steps[0];
        assert_eq!(s.args["caller"], Value::Addr("0xab".into()));
        assert_eq!(s.pre["owner"], Value::Addr(ADDR_ZERO.into()));
        assert_eq!(s.post["status"], Value::int(1));
    }

    #[test]
    fn empty_input() {
        let t = parse_history_str("", &schema()).unwrap();
        assert!(t.is_empty());
        assert!(project_nonparametric(&t.steps).is_empty());
    }

    #[test]
    fn big_integers_survive() {
        let big = "115792089237316195423570985008687907853269984665640564039457584007913129639935";
        let line = LINE.replace("\"msg.value\":5", &format!("\"msg.value\":{big}"));
        let t = parse_history_str(&line, &schema()).unwrap();
        assert_eq!(t.steps[0].args["msg.value"].to_string(), big);
        let again = parse_history_str(&history_to_string(&t), &schema()).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn errors_name_the_line() {
        let s = schema();
        let two = format!("{LINE}\n{{not json");
        assert!(matches!(parse_history_str(&two, &s), Err(TraceError::MalformedLine { line: 2, .. })));

        let unknown = LINE.replace("createGame", "launch");
        assert_eq!(
            parse_history_str(&unknown, &s),
            Err(TraceError::UnknownEvent { line: 1, name: "launch".into() })
        );

        let missing = LINE.replace(r#""pre":{"status":0,"owner":"0x00"}"#, r#""pre":{"status":0}"#);
        assert_eq!(
            parse_history_str(&missing, &s),
            Err(TraceError::MissingStateVar { line: 1, param: "owner".into() })
        );

        let stray = LINE.replace(r#""msg.value":5"#, r#""gameId":5"#);
        assert_eq!(
            parse_history_str(&stray, &s),
            Err(TraceError::UnknownParam { line: 1, param: "gameId".into() })
        );

        let dup_seq = format!("{LINE}\n{LINE}");
        assert_eq!(parse_history_str(&dup_seq, &s), Err(TraceError::NonMonotonicSeq { line: 2 }));

        let bad_revert = LINE.replace("success", "reverted");
        assert!(matches!(parse_history_str(&bad_revert, &s), Err(TraceError::MalformedLine { line: 1, .. })));

        let negative = LINE.replace(r#""msg.value":5"#, r#""msg.value":-5"#);
        assert!(matches!(parse_history_str(&negative, &s), Err(TraceError::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn projection_drops_reverted_steps() {
        let s = schema();
        let reverted = LINE
            .replace("success", "reverted")
            .replace(r#""post":{"status":1,"owner":"0xab"}"#, r#""post":{"status":0,"owner":"0x0"}"#);
        let t = parse_history_str(&reverted, &s).unwrap();
        assert_eq!(t.len(), 1);
        assert!(project_nonparametric(&t.steps).is_empty());

        let end = r#"{"seq":1,"event":"serverEndGame","args":{"gameId":1},"pre":{"status":1,"owner":"0xab"},"post":{"status":0,"owner":"0xab"},"status":"success"}"#;
        let t = parse_history_str(&format!("{LINE}\n{end}"), &s).unwrap();
        assert_eq!(project_nonparametric(&t.steps), vec!["createGame", "serverEndGame"]);
    }

    #[test]
    fn schema_round_trip_and_duplicates() {
        let s = schema();
        assert_eq!(ContractSchema::from_json(&s.to_json()).unwrap(), s);
        let dup = r#"{"state_vars":[{"name":"x","type":"int"},{"name":"x","type":"int"}],"functions":[]}"#;
        assert_eq!(ContractSchema::from_json_str(dup), Err(SchemaError::DuplicateParam("x".into())));
        let dupf = r#"{"state_vars":[],"functions":[{"name":"f"},{"name":"f"}]}"#;
        assert_eq!(ContractSchema::from_json_str(dupf), Err(SchemaError::DuplicateFunction("f".into())));
    }
}
